//! Frame-level descriptors: energy and zero crossings in the time domain,
//! MFCC 1-14 and spectral shape statistics from the Hamming-windowed
//! magnitude spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::LldMatrix;
use crate::error::{Error, Result};

pub const LLD_FRAME_S: f64 = 0.06;
pub const LLD_HOP_S: f64 = 0.01;

const MEL_FILTERS: usize = 26;
const MFCC_COUNT: usize = 14;
const LOG_FLOOR: f64 = 1e-10;
const ROLLOFFS: [f64; 4] = [0.25, 0.50, 0.75, 0.90];

pub const BUILTIN_DESCRIPTORS: [&str; 29] = [
    "pcm_RMSenergy",
    "pcm_zcr",
    "mfcc_1",
    "mfcc_2",
    "mfcc_3",
    "mfcc_4",
    "mfcc_5",
    "mfcc_6",
    "mfcc_7",
    "mfcc_8",
    "mfcc_9",
    "mfcc_10",
    "mfcc_11",
    "mfcc_12",
    "mfcc_13",
    "mfcc_14",
    "pcm_fftMag_fband250-650",
    "pcm_fftMag_fband1000-4000",
    "pcm_fftMag_spectralRollOff25.0",
    "pcm_fftMag_spectralRollOff50.0",
    "pcm_fftMag_spectralRollOff75.0",
    "pcm_fftMag_spectralRollOff90.0",
    "pcm_fftMag_spectralFlux",
    "pcm_fftMag_spectralCentroid",
    "pcm_fftMag_spectralEntropy",
    "pcm_fftMag_spectralSlope",
    "pcm_fftMag_spectralVariance",
    "pcm_fftMag_spectralSkewness",
    "pcm_fftMag_spectralKurtosis",
];

/// Splits `samples` into frames of `round(win_s * rate)` samples every
/// `round(hop_s * rate)` samples, without padding.
pub fn frame_signal(samples: &[f64], sample_rate: u32, win_s: f64, hop_s: f64) -> Result<Vec<&[f64]>> {
    if sample_rate == 0 || win_s.is_nan() || win_s <= 0.0 || hop_s.is_nan() || hop_s <= 0.0 {
        return Err(Error::Config(format!(
            "invalid framing: rate {sample_rate}, window {win_s} s, hop {hop_s} s"
        )));
    }
    let len = (win_s * sample_rate as f64).round() as usize;
    let hop = (hop_s * sample_rate as f64).round() as usize;
    if len == 0 || hop == 0 {
        return Err(Error::Config("frame or hop rounds to zero samples".into()));
    }
    if samples.len() < len {
        return Err(Error::TooShort(format!(
            "{} samples, one frame needs {len}",
            samples.len()
        )));
    }
    let count = (samples.len() - len) / hop + 1;
    Ok((0..count).map(|i| &samples[i * hop..i * hop + len]).collect())
}

struct SpectralFrontEnd {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    fft_len: usize,
    bin_hz: f64,
    freqs: Vec<f64>,
    mel_weights: Vec<Vec<(usize, f64)>>,
    dct: Vec<Vec<f64>>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl SpectralFrontEnd {
    fn new(frame_len: usize, sample_rate: u32) -> Self {
        let fft_len = frame_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let window = (0..frame_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
            .collect();
        let bin_hz = sample_rate as f64 / fft_len as f64;
        let bins = fft_len / 2 + 1;
        let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * bin_hz).collect();

        let top = hz_to_mel(sample_rate as f64 / 2.0);
        let edges: Vec<f64> = (0..MEL_FILTERS + 2)
            .map(|i| mel_to_hz(top * i as f64 / (MEL_FILTERS + 1) as f64))
            .collect();
        let mel_weights = (1..=MEL_FILTERS)
            .map(|m| {
                let (lo, center, hi) = (edges[m - 1], edges[m], edges[m + 1]);
                freqs
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &f)| {
                        let w = if f >= lo && f <= center {
                            (f - lo) / (center - lo)
                        } else if f > center && f <= hi {
                            (hi - f) / (hi - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();

        let m = MEL_FILTERS as f64;
        let dct = (1..=MFCC_COUNT)
            .map(|k| {
                (0..MEL_FILTERS)
                    .map(|j| (2.0 / m).sqrt() * (PI * k as f64 * (j as f64 + 0.5) / m).cos())
                    .collect()
            })
            .collect();

        Self {
            fft,
            window,
            fft_len,
            bin_hz,
            freqs,
            mel_weights,
            dct,
        }
    }

    fn magnitude(&self, frame: &[f64], buf: &mut Vec<Complex<f64>>) -> Vec<f64> {
        buf.clear();
        buf.extend(frame.iter().zip(&self.window).map(|(x, w)| Complex::new(x * w, 0.0)));
        buf.resize(self.fft_len, Complex::new(0.0, 0.0));
        self.fft.process(buf);
        buf[..self.fft_len / 2 + 1].iter().map(|c| c.norm()).collect()
    }
}

fn rms(frame: &[f64]) -> f64 {
    (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt()
}

fn zero_crossing_rate(frame: &[f64]) -> f64 {
    let crossings = frame.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    crossings as f64 / (frame.len() - 1).max(1) as f64
}

/// Spectral shape of one magnitude spectrum, written into `out` starting at
/// the band-energy descriptors. `prev_dist` holds the previous frame's
/// L1-normalized spectrum for the flux.
fn spectral_descriptors(fe: &SpectralFrontEnd, mag: &[f64], prev_dist: &mut Option<Vec<f64>>, out: &mut [f64]) {
    let freqs = &fe.freqs;
    let band = |lo: f64, hi: f64| -> f64 {
        mag.iter()
            .zip(freqs)
            .filter(|(_, &f)| f >= lo && f <= hi)
            .map(|(m, _)| m * m)
            .sum()
    };
    out[0] = band(250.0, 650.0);
    out[1] = band(1000.0, 4000.0);

    let total: f64 = mag.iter().sum();
    let dist: Vec<f64> = if total > 0.0 {
        mag.iter().map(|m| m / total).collect()
    } else {
        vec![0.0; mag.len()]
    };

    for (slot, p) in out[2..6].iter_mut().zip(ROLLOFFS) {
        *slot = if total > 0.0 {
            let threshold = p * total;
            let mut acc = 0.0;
            let mut at = freqs[freqs.len() - 1];
            for (m, &f) in mag.iter().zip(freqs) {
                acc += m;
                if acc >= threshold {
                    at = f;
                    break;
                }
            }
            at
        } else {
            0.0
        };
    }

    out[6] = match prev_dist.as_ref() {
        Some(prev) => prev
            .iter()
            .zip(&dist)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt(),
        None => 0.0,
    };

    let centroid: f64 = dist.iter().zip(freqs).map(|(p, f)| p * f).sum();
    out[7] = centroid;
    out[8] = -dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();

    let n = mag.len() as f64;
    let f_mean = freqs.iter().sum::<f64>() / n;
    let m_mean = total / n;
    let (mut sfm, mut sff) = (0.0, 0.0);
    for (m, f) in mag.iter().zip(freqs) {
        sfm += (f - f_mean) * (m - m_mean);
        sff += (f - f_mean).powi(2);
    }
    out[9] = sfm / sff;

    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for (p, f) in dist.iter().zip(freqs) {
        let d = f - centroid;
        m2 += p * d * d;
        m3 += p * d * d * d;
        m4 += p * d * d * d * d;
    }
    out[10] = m2;
    let sd = m2.sqrt();
    // Relative guard: a pure tone can leave m2 at rounding level.
    if sd > 1e-9 * fe.bin_hz {
        out[11] = m3 / (sd * sd * sd);
        out[12] = m4 / (m2 * m2);
    } else {
        out[11] = 0.0;
        out[12] = 0.0;
    }
    *prev_dist = Some(dist);
}

/// Computes the 29 built-in descriptors on 60 ms / 10 ms frames.
pub fn extract_lld(samples: &[f64], sample_rate: u32) -> Result<LldMatrix> {
    if sample_rate < 8000 {
        return Err(Error::Validation(format!(
            "sample rate {sample_rate} Hz below the 8000 Hz minimum"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("non-finite audio sample".into()));
    }
    let frames = frame_signal(samples, sample_rate, LLD_FRAME_S, LLD_HOP_S)?;
    let fe = SpectralFrontEnd::new(frames[0].len(), sample_rate);
    let mut values = Array2::zeros((frames.len(), BUILTIN_DESCRIPTORS.len()));
    let mut buf = Vec::with_capacity(fe.fft_len);
    let mut prev_dist = None;
    let mut log_mel = vec![0.0; MEL_FILTERS];
    let mut row_buf = vec![0.0; BUILTIN_DESCRIPTORS.len()];

    for (t, frame) in frames.iter().enumerate() {
        row_buf[0] = rms(frame);
        row_buf[1] = zero_crossing_rate(frame);

        let mag = fe.magnitude(frame, &mut buf);
        for (slot, filter) in log_mel.iter_mut().zip(&fe.mel_weights) {
            let energy: f64 = filter.iter().map(|&(k, w)| w * mag[k] * mag[k]).sum();
            *slot = energy.max(LOG_FLOOR).ln();
        }
        for (c, basis) in fe.dct.iter().enumerate() {
            row_buf[2 + c] = basis.iter().zip(&log_mel).map(|(b, l)| b * l).sum();
        }
        spectral_descriptors(&fe, &mag, &mut prev_dist, &mut row_buf[16..]);
        values.row_mut(t).assign(&ndarray::ArrayView1::from(&row_buf[..]));
    }
    let names = BUILTIN_DESCRIPTORS.iter().map(|s| s.to_string()).collect();
    LldMatrix::new(values, LLD_HOP_S, names)
}
