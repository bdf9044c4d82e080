use std::path::Path;

use crate::error::{Error, Result};

/// Reads a mono RIFF WAV file (PCM 16-bit or IEEE float 32-bit) as samples
/// on `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let invalid = |msg: String| Error::Validation(format!("{}: {msg}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => invalid(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(invalid(format!(
            "{} channels; only mono audio is accepted",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (format, bits) => {
            return Err(invalid(format!(
                "unsupported sample format {format:?} with {bits} bits"
            )))
        }
    }
    .map_err(|e| invalid(e.to_string()))?;
    Ok((samples, spec.sample_rate))
}

/// Writes mono 16-bit PCM, clipping to `[-1, 1]`.
pub fn write_wav_pcm16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec)
            .map_err(|e| Error::Validation(e.to_string()))?;
        for &s in samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer
                .write_sample(v)
                .map_err(|e| Error::Validation(e.to_string()))?;
        }
        writer.finalize().map_err(|e| Error::Validation(e.to_string()))?;
    }
    crate::io::write_atomic(path, &cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_roundtrip_and_stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x: Vec<f64> = (0..100).map(|i| (i as f64 / 50.0) - 1.0).collect();
        write_wav_pcm16(&path, &x, 16000).unwrap();
        let (y, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 16000);
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-4));

        let stereo = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        for _ in 0..20 {
            w.write_sample(0.5f32).unwrap();
        }
        w.finalize().unwrap();
        let err = read_wav(&stereo).unwrap_err();
        assert!(err.to_string().contains("mono"), "{err}");
    }

    #[test]
    fn float32_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0.25f32, -0.5, 1.0] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(read_wav(&path).unwrap().0, vec![0.25, -0.5, 1.0]);
    }
}
