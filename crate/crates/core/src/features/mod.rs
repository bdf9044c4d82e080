//! Acoustic low-level descriptors, window functionals and embedding pooling.
//!
//! Descriptors are computed on 60 ms frames every 10 ms. Functional
//! summaries run over 2 s windows with a 1 s hop, both on the descriptor
//! trajectories and on their first differences, giving `18 * D` features per
//! window. The same window geometry pools per-frame video embeddings.

mod functionals;
mod lld;
mod wav;

pub use functionals::{functionals_window, FUNCTIONAL_NAMES};
pub use lld::{extract_lld, frame_signal, BUILTIN_DESCRIPTORS, LLD_FRAME_S, LLD_HOP_S};
pub use wav::{read_wav, write_wav_pcm16};

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::io::{Sidecar, Table};

pub const DEFAULT_WINDOW_S: f64 = 2.0;
pub const DEFAULT_STEP_S: f64 = 1.0;

/// Time-major matrix of descriptor values (`T x D`) at a fixed frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct LldMatrix {
    values: Array2<f64>,
    frame_period_s: f64,
    descriptor_names: Vec<String>,
}

impl LldMatrix {
    pub fn new(values: Array2<f64>, frame_period_s: f64, descriptor_names: Vec<String>) -> Result<Self> {
        let (t, d) = values.dim();
        if t == 0 || d == 0 {
            return Err(Error::TooShort(format!("LLD matrix of shape {t}x{d}")));
        }
        if d != descriptor_names.len() {
            return Err(Error::Dimension(format!(
                "{d} descriptor columns but {} names",
                descriptor_names.len()
            )));
        }
        if !(frame_period_s > 0.0 && frame_period_s.is_finite()) {
            return Err(Error::Validation(format!(
                "frame period must be positive, got {frame_period_s}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite LLD value".into()));
        }
        Ok(Self {
            values,
            frame_period_s,
            descriptor_names,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    pub fn descriptor_names(&self) -> &[String] {
        &self.descriptor_names
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn descriptors(&self) -> usize {
        self.values.ncols()
    }

    /// Appends the columns of `other`, which must share the frame period.
    /// Frame counts may differ by at most two (front-end rounding); the
    /// longer matrix is truncated.
    pub fn concat_columns(&self, other: &LldMatrix) -> Result<LldMatrix> {
        if (self.frame_period_s - other.frame_period_s).abs() > 1e-9 {
            return Err(Error::Dimension(format!(
                "frame periods differ: {} vs {}",
                self.frame_period_s, other.frame_period_s
            )));
        }
        let (ta, tb) = (self.frames(), other.frames());
        if ta.abs_diff(tb) > 2 {
            return Err(Error::Dimension(format!(
                "frame counts differ: {ta} vs {tb}"
            )));
        }
        let t = ta.min(tb);
        let values = ndarray::concatenate(
            Axis(1),
            &[self.values.slice(s![..t, ..]), other.values.slice(s![..t, ..])],
        )
        .expect("row counts match");
        let mut names = self.descriptor_names.clone();
        names.extend(other.descriptor_names.iter().cloned());
        LldMatrix::new(values, self.frame_period_s, names)
    }

    pub fn to_table(&self) -> Table {
        Table {
            names: self.descriptor_names.clone(),
            values: self.values.clone(),
        }
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            kind: "lld".into(),
            frame_period_s: Some(self.frame_period_s),
            ..Sidecar::default()
        }
    }

    pub fn from_table(table: Table, frame_period_s: f64) -> Result<Self> {
        Self::new(table.values, frame_period_s, table.names)
    }
}

/// First-order difference along time with a zero first frame.
pub fn delta(m: &LldMatrix) -> LldMatrix {
    let mut out = Array2::zeros(m.values.dim());
    for t in 1..m.frames() {
        let diff = &m.values.row(t) - &m.values.row(t - 1);
        out.row_mut(t).assign(&diff);
    }
    let names = m.descriptor_names.iter().map(|n| format!("{n}.delta")).collect();
    LldMatrix {
        values: out,
        frame_period_s: m.frame_period_s,
        descriptor_names: names,
    }
}

/// Per-utterance sequence of fixed-width vectors at the window hop rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSequence {
    pub vectors: Array2<f64>,
    pub window_s: f64,
    pub step_s: f64,
    pub feature_names: Vec<String>,
}

impl FunctionalSequence {
    pub fn windows(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn width(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn to_table(&self) -> Table {
        Table {
            names: self.feature_names.clone(),
            values: self.vectors.clone(),
        }
    }

    pub fn sidecar(&self, kind: &str) -> Sidecar {
        Sidecar {
            kind: kind.into(),
            window_s: Some(self.window_s),
            step_s: Some(self.step_s),
            ..Sidecar::default()
        }
    }

    pub fn from_table(table: Table, window_s: f64, step_s: f64) -> Self {
        Self {
            vectors: table.values,
            window_s,
            step_s,
            feature_names: table.names,
        }
    }
}

/// Frame ranges `[start, end)` of each summary window. Inputs shorter than
/// one window produce a single window over everything.
fn window_ranges(total: usize, len: usize, hop: usize) -> Vec<(usize, usize)> {
    if total < len {
        return vec![(0, total)];
    }
    let count = (total - len) / hop + 1;
    (0..count).map(|i| (i * hop, i * hop + len)).collect()
}

fn frames_for(duration_s: f64, period_s: f64, what: &str) -> Result<usize> {
    let n = (duration_s / period_s).round();
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::Config(format!(
            "{what} of {duration_s} s is shorter than one frame of {period_s} s"
        )));
    }
    Ok(n as usize)
}

/// Applies the nine functionals to every descriptor and delta trajectory in
/// sliding windows. Column order: for each descriptor, its nine LLD
/// functionals followed by its nine delta functionals.
pub fn functional_sequence(m: &LldMatrix, window_s: f64, step_s: f64) -> Result<FunctionalSequence> {
    if m.frames() < 2 {
        return Err(Error::TooShort(format!(
            "functionals need at least 2 frames, got {}",
            m.frames()
        )));
    }
    let len = frames_for(window_s, m.frame_period_s, "window")?;
    let hop = frames_for(step_s, m.frame_period_s, "step")?;
    let ranges = window_ranges(m.frames(), len, hop);
    let d = delta(m);
    let width = 18 * m.descriptors();
    let mut vectors = Array2::zeros((ranges.len(), width));
    let mut column = Vec::with_capacity(len);
    for (w, &(start, end)) in ranges.iter().enumerate() {
        let mut row = vectors.row_mut(w);
        for j in 0..m.descriptors() {
            for (source, offset) in [(&m.values, 0), (&d.values, 9)] {
                column.clear();
                column.extend(source.slice(s![start..end, j]).iter().copied());
                let f = functionals_window(&column)?;
                for (k, v) in f.into_iter().enumerate() {
                    row[18 * j + offset + k] = v;
                }
            }
        }
    }
    let mut feature_names = Vec::with_capacity(width);
    for name in &m.descriptor_names {
        for prefix in [name.clone(), format!("{name}.delta")] {
            for func in FUNCTIONAL_NAMES {
                feature_names.push(format!("{prefix}__{func}"));
            }
        }
    }
    Ok(FunctionalSequence {
        vectors,
        window_s,
        step_s,
        feature_names,
    })
}

/// Window means of per-frame embeddings, using the same geometry as
/// [`functional_sequence`].
pub fn pool_embeddings(
    frames: ArrayView2<'_, f64>,
    names: &[String],
    frame_rate: f64,
    window_s: f64,
    step_s: f64,
) -> Result<FunctionalSequence> {
    let (t, e) = frames.dim();
    if t == 0 || e == 0 {
        return Err(Error::TooShort("no embedding frames to pool".into()));
    }
    if names.len() != e {
        return Err(Error::Dimension(format!("{e} embedding columns but {} names", names.len())));
    }
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(Error::Validation(format!("frame rate must be positive, got {frame_rate}")));
    }
    let period = 1.0 / frame_rate;
    let len = frames_for(window_s, period, "window")?;
    let hop = frames_for(step_s, period, "step")?;
    let ranges = window_ranges(t, len, hop);
    let mut vectors = Array2::zeros((ranges.len(), e));
    for (w, &(start, end)) in ranges.iter().enumerate() {
        let mean = frames
            .slice(s![start..end, ..])
            .mean_axis(Axis(0))
            .expect("window is non-empty");
        vectors.row_mut(w).assign(&mean);
    }
    Ok(FunctionalSequence {
        vectors,
        window_s,
        step_s,
        feature_names: names.to_vec(),
    })
}
