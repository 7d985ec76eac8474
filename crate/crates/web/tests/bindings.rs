use irfield::baselines::SphereAngle;
use irfield::dsp::convolve_slices;
use irfield::synth::{synth_filter, FilterFieldSpec};
use irfield_web::{auralize, baselines, interpolate, synth_ir};

#[test]
fn synth_ir_concatenates_both_channels() {
    let ir = synth_ir(30.0, 10.0, 128, 1).unwrap();
    assert_eq!(ir.len(), 256);
    let spec = FilterFieldSpec { taps: 128, ..Default::default() };
    let want = synth_filter(&spec, SphereAngle::new(30.0, 10.0).to_position()).unwrap();
    assert_eq!(ir, want.taps().concat());
}

#[test]
fn interpolation_is_exact_at_a_full_grid_node() {
    let r = interpolate(0.0, -82.5, 288, 1).unwrap();
    assert_eq!(r.truth().len(), 800);
    assert_eq!(r.nearest(), r.truth());
    assert!(r.bilinear_sdr_db() > 100.0);
    let sparse = interpolate(37.0, 12.0, 72, 1).unwrap();
    assert!(sparse.nearest_sdr_db().is_finite() && sparse.bilinear_sdr_db().is_finite());
}

#[test]
fn baselines_recover_the_filter_at_high_snr() {
    let out = baselines(45.0, 0.0, 60.0, 2).unwrap();
    assert_eq!(out.len(), 2 + 3 * 400);
    assert!(out[0] > 20.0, "wiener {}", out[0]);
    assert!(out[1] > 20.0, "nlms {}", out[1]);
}

#[test]
fn auralize_is_a_left_channel_convolution() {
    let source: Vec<f64> = (0..500).map(|i| (i as f64 * 0.1).sin()).collect();
    let y = auralize(source.clone(), 90.0, 0.0, 1).unwrap();
    let ir = synth_ir(90.0, 0.0, 400, 1).unwrap();
    assert_eq!(y, convolve_slices(&source, &ir[..400]));
}

#[test]
fn every_slider_count_interpolates() {
    for count in (12..=288).step_by(12) {
        let r = interpolate(37.0, 11.0, count, 1).unwrap();
        assert!(r.nearest_sdr_db().is_finite() && r.bilinear_sdr_db().is_finite(), "{count}");
    }
}
