//! 32-bit float WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    /// One buffer per channel, all the same length.
    pub channels: Vec<Vec<f64>>,
}

impl Audio {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel average.
    pub fn mono(&self) -> Vec<f64> {
        let n = self.channels.len() as f64;
        (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect()
    }
}

/// Reads float or integer PCM; integers are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let nch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    if nch == 0 {
        return invalid("wav file declares no channels");
    }
    let channels = (0..nch)
        .map(|c| interleaved.iter().skip(c).step_by(nch).copied().collect())
        .collect();
    Ok(Audio {
        sample_rate: spec.sample_rate,
        channels,
    })
}

pub fn write_wav(path: &Path, audio: &Audio) -> Result<()> {
    if audio.channels.is_empty() || audio.channels.len() > u16::MAX as usize {
        return invalid("wav output needs between 1 and 65535 channels");
    }
    if audio.channels.iter().any(|c| c.len() != audio.len()) {
        return invalid("wav channels differ in length");
    }
    let spec = WavSpec {
        channels: audio.channels.len() as u16,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for i in 0..audio.len() {
        for c in &audio.channels {
            w.write_sample(c[i] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let audio = Audio {
            sample_rate: 48_000,
            channels: vec![vec![0.5, -0.25, 0.125], vec![1.0, 0.0, -1.0]],
        };
        write_wav(&path, &audio).unwrap();
        assert_eq!(read_wav(&path).unwrap(), audio);
        assert_eq!(audio.mono(), vec![0.75, -0.125, -0.4375]);
    }

    #[test]
    fn ragged_channels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let audio = Audio {
            sample_rate: 8000,
            channels: vec![vec![0.0; 3], vec![0.0; 2]],
        };
        assert!(write_wav(&dir.path().join("b.wav"), &audio).is_err());
    }
}
