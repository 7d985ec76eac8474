//! Frame-based streaming renderer: one predicted IR per frame, overlap-save
//! block convolution, and a short crossfade whenever the IR changes.

use std::time::Instant;

use realfft::num_complex::Complex64;
use serde::Deserialize;

use crate::dsp::RealFft;
use crate::error::{invalid, Error, Result};
use crate::nn::IrMlp;

pub const DEFAULT_CROSSFADE: usize = 64;

#[derive(Deserialize)]
struct TrajectoryRow {
    time_s: f64,
    x: f64,
    y: f64,
    z: f64,
}

/// Piecewise-linear source path, timestamps strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<(f64, [f64; 3])>,
}

impl Trajectory {
    pub fn new(points: Vec<(f64, [f64; 3])>) -> Result<Self> {
        if points.is_empty() {
            return invalid("trajectory has no points");
        }
        for (t, p) in &points {
            if !t.is_finite() || *t < 0.0 || p.iter().any(|v| !v.is_finite()) {
                return invalid(format!("malformed trajectory point at t = {t}"));
            }
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return invalid("trajectory timestamps must be strictly increasing");
        }
        Ok(Self { points })
    }

    pub fn fixed(position: [f64; 3]) -> Self {
        Self {
            points: vec![(0.0, position)],
        }
    }

    /// Parses a `time_s,x,y,z` table with a header row.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Invalid(format!("trajectory: {e}")))?;
        if header.iter().map(str::to_ascii_lowercase).ne(["time_s", "x", "y", "z"]) {
            return invalid("trajectory header must be time_s,x,y,z");
        }
        let points = reader
            .deserialize::<TrajectoryRow>()
            .map(|row| {
                row.map(|r| (r.time_s, [r.x, r.y, r.z]))
                    .map_err(|e| Error::Invalid(format!("trajectory: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,x,y,z\n");
        for (t, p) in &self.points {
            out.push_str(&format!("{t},{},{},{}\n", p[0], p[1], p[2]));
        }
        out
    }

    pub fn points(&self) -> &[(f64, [f64; 3])] {
        &self.points
    }

    pub fn end_time(&self) -> f64 {
        self.points.last().expect("non-empty").0
    }

    /// Linear interpolation, held constant outside the covered span.
    pub fn position_at(&self, t: f64) -> [f64; 3] {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        let i = pts.partition_point(|(pt, _)| *pt <= t);
        if i == pts.len() {
            return pts[i - 1].1;
        }
        let (t0, a) = pts[i - 1];
        let (t1, b) = pts[i];
        let w = (t - t0) / (t1 - t0);
        [0, 1, 2].map(|k| a[k] + w * (b[k] - a[k]))
    }
}

/// Streaming renderer for one mono input.
pub struct Renderer<'a> {
    model: &'a IrMlp,
    frame_size: usize,
    crossfade: usize,
    fft: RealFft,
    /// Last `taps - 1 + frame_size` input samples.
    history: Vec<f64>,
    current: Option<([f64; 3], Vec<Vec<Complex64>>)>,
    work: Vec<Complex64>,
    time: Vec<f64>,
    segment_spec: Vec<Complex64>,
    previous_out: Vec<f64>,
}

impl<'a> Renderer<'a> {
    pub fn new(model: &'a IrMlp, frame_size: usize, crossfade: usize) -> Result<Self> {
        if frame_size < 1 {
            return invalid("frame_size must be at least 1");
        }
        let t = model.num_taps;
        let n = (frame_size + t - 1).next_power_of_two().max(2);
        let fft = RealFft::new(n)?;
        let bins = fft.bins();
        Ok(Self {
            model,
            frame_size,
            crossfade,
            history: vec![0.0; t - 1 + frame_size],
            current: None,
            work: vec![Complex64::default(); bins],
            time: vec![0.0; n],
            segment_spec: vec![Complex64::default(); bins],
            previous_out: vec![0.0; frame_size],
            fft,
        })
    }

    pub fn channels(&self) -> usize {
        self.model.channels()
    }

    fn spectra(&mut self, position: [f64; 3]) -> Result<Vec<Vec<Complex64>>> {
        let ir = self.model.predict_ir(position)?;
        let bins = self.fft.bins();
        Ok(ir
            .taps()
            .iter()
            .map(|h| {
                let mut s = vec![Complex64::default(); bins];
                self.fft.forward(h, &mut s);
                s
            })
            .collect())
    }

    /// Valid overlap-save outputs of the buffered segment against `spec`.
    fn block(&mut self, spec: &[Complex64], out: &mut [f64]) {
        self.work.iter_mut().zip(&self.segment_spec).zip(spec).for_each(|((w, x), h)| *w = x * h);
        self.fft.inverse(&self.work, &mut self.time);
        let skip = self.model.num_taps - 1;
        out.copy_from_slice(&self.time[skip..skip + out.len()]);
    }

    /// Consumes up to `frame_size` input samples (zero-padded when shorter)
    /// and writes `frame_size` samples per channel.
    pub fn process_frame(&mut self, input: &[f64], position: [f64; 3], out: &mut [Vec<f64>]) -> Result<()> {
        let f = self.frame_size;
        if input.len() > f {
            return invalid("input block longer than the frame size");
        }
        if out.len() != self.channels() || out.iter().any(|o| o.len() != f) {
            return invalid("output block has the wrong shape");
        }
        self.history.copy_within(f.., 0);
        let keep = self.history.len() - f;
        self.history[keep..keep + input.len()].copy_from_slice(input);
        self.history[keep + input.len()..].fill(0.0);
        self.fft.forward(&self.history, &mut self.segment_spec);

        let previous = match &self.current {
            Some((p, _)) if *p == position => None,
            _ => {
                let fresh = self.spectra(position)?;
                self.current.replace((position, fresh)).map(|(_, s)| s)
            }
        };
        let (_, spectra) = self.current.take().expect("set above");
        for (c, o) in out.iter_mut().enumerate() {
            self.block(&spectra[c], o);
            if let Some(old) = &previous {
                let n = self.crossfade.min(f);
                if n > 0 {
                    let mut prev = std::mem::take(&mut self.previous_out);
                    self.block(&old[c], &mut prev);
                    for i in 0..n {
                        let w = (i + 1) as f64 / (n + 1) as f64;
                        o[i] = (1.0 - w) * prev[i] + w * o[i];
                    }
                    self.previous_out = prev;
                }
            }
        }
        self.current = Some((position, spectra));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// `input.len() + taps - 1` samples per channel.
    pub channels: Vec<Vec<f64>>,
    /// Wall-clock time of every frame.
    pub frame_ms: Vec<f64>,
}

/// Renders `input` along `trajectory`. The trajectory must start within the
/// input; frames past its last point hold the final position.
pub fn render(
    model: &IrMlp,
    input: &[f64],
    sample_rate: u32,
    trajectory: &Trajectory,
    frame_size: usize,
    crossfade: usize,
) -> Result<RenderOutput> {
    if input.is_empty() {
        return invalid("source is empty");
    }
    let duration = input.len() as f64 / sample_rate as f64;
    if trajectory.points()[0].0 > duration {
        return invalid("trajectory starts after the source ends");
    }
    let mut renderer = Renderer::new(model, frame_size, crossfade)?;
    let total = input.len() + model.num_taps - 1;
    let frames = total.div_ceil(frame_size);
    let nch = renderer.channels();
    let mut channels = vec![Vec::with_capacity(frames * frame_size); nch];
    let mut block = vec![vec![0.0; frame_size]; nch];
    let mut frame_ms = Vec::with_capacity(frames);
    for k in 0..frames {
        let start = (k * frame_size).min(input.len());
        let end = ((k + 1) * frame_size).min(input.len());
        let position = trajectory.position_at((k * frame_size) as f64 / sample_rate as f64);
        let t = Instant::now();
        renderer.process_frame(&input[start..end], position, &mut block)?;
        frame_ms.push(t.elapsed().as_secs_f64() * 1e3);
        for (c, b) in channels.iter_mut().zip(&block) {
            c.extend_from_slice(b);
        }
    }
    channels.iter_mut().for_each(|c| c.truncate(total));
    Ok(RenderOutput { channels, frame_ms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::convolve_slices;
    use crate::nn::EncoderConfig;

    fn model() -> IrMlp {
        IrMlp::init(EncoderConfig::new(4, 3), 16, 3, 2, 37, 5).unwrap()
    }

    fn source(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7919) % 113) as f64 / 56.0 - 1.0).collect()
    }

    #[test]
    fn static_position_matches_offline_convolution() {
        let m = model();
        let x = source(1000);
        let p = [0.2, -0.4, 0.1];
        let ir = m.predict_ir(p).unwrap();
        for frame in [1, 16, 100, 512] {
            let out = render(&m, &x, 48_000, &Trajectory::fixed(p), frame, DEFAULT_CROSSFADE).unwrap();
            for (c, y) in out.channels.iter().enumerate() {
                let want = convolve_slices(&x, ir.channel(c));
                assert_eq!(y.len(), want.len());
                let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in y.iter().zip(&want) {
                    assert!((a - b).abs() <= 1e-9 * scale, "frame {frame}");
                }
            }
        }
    }

    #[test]
    fn silence_in_silence_out() {
        let traj = Trajectory::new(vec![(0.0, [0.0, 0.0, 0.0]), (0.01, [0.5, 0.5, 0.0])]).unwrap();
        let out = render(&model(), &[0.0; 700], 48_000, &traj, 64, DEFAULT_CROSSFADE).unwrap();
        assert!(out.channels.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(out.channels[0].len(), 700 + 36);
    }

    #[test]
    fn crossfade_bounds_the_jump_at_an_ir_switch() {
        let m = model();
        let x = vec![1.0; 400];
        let traj = Trajectory::new(vec![(0.0, [0.0, 0.0, 0.0]), (0.001, [0.9, -0.9, 0.5])]).unwrap();
        let hard = render(&m, &x, 48_000, &traj, 100, 0).unwrap();
        let soft = render(&m, &x, 48_000, &traj, 100, DEFAULT_CROSSFADE).unwrap();
        let jump = |y: &[f64]| (y[100] - y[99]).abs();
        assert!(jump(&soft.channels[0]) < jump(&hard.channels[0]));
    }

    #[test]
    fn trajectory_parsing_and_interpolation() {
        let t = Trajectory::from_csv("time_s,x,y,z\n0,0,0,0\n1,1,0,-1\n").unwrap();
        assert_eq!(t.position_at(0.5), [0.5, 0.0, -0.5]);
        assert_eq!(t.position_at(2.0), [1.0, 0.0, -1.0]);
        assert_eq!(Trajectory::from_csv(&t.to_csv()).unwrap(), t);
        assert!(Trajectory::from_csv("time_s,x,y,z\n1,0,0,0\n0,0,0,0\n").is_err());
        assert!(Trajectory::from_csv("t,x,y,z\n0,0,0,0\n").is_err());
        assert!(Trajectory::from_csv("time_s,x,y,z\n0,0,zero,0\n").is_err());
        assert!(Trajectory::from_csv("time_s,x,y,z\n0,0,0\n").is_err());
        assert!(render(&model(), &[1.0], 48_000, &t, 0, 0).is_err());
    }
}
