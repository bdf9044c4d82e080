//! Network weights, initialization and the binary model format.
//!
//! Model file layout (all integers and floats little-endian):
//!
//! ```text
//! "CCSQ"            4 bytes magic
//! version           u16
//! spec_len          u32
//! spec              spec_len bytes of JSON (NetworkSpec)
//! weights           f64 values in traversal order
//! ```
//!
//! Traversal order: layers in order; per layer the forward-time direction
//! then (for BLSTM) the reverse-time direction; per direction the gates
//! input, forget, cell, output, each as input weights (row-major,
//! `size x input`), recurrent weights (`size x size`) and bias (`size`);
//! then heads in order, each as weight (row-major, `width x top`) and bias.

use std::path::Path;

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NetworkSpec;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"CCSQ";
pub const MODEL_VERSION: u16 = 1;

pub(crate) const GATES: usize = 4;
pub(crate) const FORGET_GATE: usize = 1;

/// One LSTM direction. Rows of `w_in`, `w_rec` and `bias` are stacked by
/// gate: input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionParams {
    pub w_in: Array2<f64>,
    pub w_rec: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DirectionParams {
    fn zeros(input: usize, size: usize) -> Self {
        Self {
            w_in: Array2::zeros((GATES * size, input)),
            w_rec: Array2::zeros((GATES * size, size)),
            bias: Array1::zeros(GATES * size),
        }
    }

    pub fn size(&self) -> usize {
        self.w_rec.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Forward-time direction first, then reverse-time for BLSTM.
    pub directions: Vec<DirectionParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights of a whole network. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub layers: Vec<LayerParams>,
    pub heads: Vec<HeadParams>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let mut input = spec.input_dim;
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let p = LayerParams {
                    directions: (0..l.directions()).map(|_| DirectionParams::zeros(input, l.size)).collect(),
                };
                input = l.output_width();
                p
            })
            .collect();
        let top = spec.top_width();
        let heads = spec
            .heads
            .iter()
            .map(|h| HeadParams {
                weight: Array2::zeros((h.width, top)),
                bias: Array1::zeros(h.width),
            })
            .collect();
        Self {
            spec: spec.clone(),
            layers,
            heads,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.spec)
    }

    /// Every parameter array in storage order.
    fn arrays(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            for d in &layer.directions {
                out.push(d.w_in.as_slice().expect("standard layout"));
                out.push(d.w_rec.as_slice().expect("standard layout"));
                out.push(d.bias.as_slice().expect("standard layout"));
            }
        }
        for h in &self.heads {
            out.push(h.weight.as_slice().expect("standard layout"));
            out.push(h.bias.as_slice().expect("standard layout"));
        }
        out
    }

    fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for d in &mut layer.directions {
                out.push(d.w_in.as_slice_mut().expect("standard layout"));
                out.push(d.w_rec.as_slice_mut().expect("standard layout"));
                out.push(d.bias.as_slice_mut().expect("standard layout"));
            }
        }
        for h in &mut self.heads {
            out.push(h.weight.as_slice_mut().expect("standard layout"));
            out.push(h.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.arrays()
            .iter()
            .flat_map(|a| a.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += factor * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &NetworkParams, factor: f64) {
        for (a, b) in self.arrays_mut().into_iter().zip(other.arrays()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += factor * y);
        }
    }

    /// Values in the documented file traversal order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for layer in &self.layers {
            for d in &layer.directions {
                let h = d.size();
                for g in 0..GATES {
                    let rows = g * h..(g + 1) * h;
                    out.extend(d.w_in.slice(s![rows.clone(), ..]).iter());
                    out.extend(d.w_rec.slice(s![rows.clone(), ..]).iter());
                    out.extend(d.bias.slice(s![rows]).iter());
                }
            }
        }
        for head in &self.heads {
            out.extend(head.weight.iter());
            out.extend(head.bias.iter());
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat) for this spec.
    pub fn from_flat(spec: &NetworkSpec, values: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(spec);
        if values.len() != params.len() {
            return Err(Error::Dimension(format!(
                "spec needs {} weights, got {}",
                params.len(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        let mut fill = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for v in dst {
                *v = it.next().expect("length checked");
            }
        };
        for layer in &mut params.layers {
            for d in &mut layer.directions {
                let h = d.size();
                for g in 0..GATES {
                    let rows = g * h..(g + 1) * h;
                    fill(&mut d.w_in.slice_mut(s![rows.clone(), ..]).iter_mut());
                    fill(&mut d.w_rec.slice_mut(s![rows.clone(), ..]).iter_mut());
                    fill(&mut d.bias.slice_mut(s![rows]).iter_mut());
                }
            }
        }
        for head in &mut params.heads {
            fill(&mut head.weight.iter_mut());
            fill(&mut head.bias.iter_mut());
        }
        Ok(params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = serde_json::to_vec(&self.spec).expect("spec serializes");
        let flat = self.to_flat();
        let mut out = Vec::with_capacity(10 + spec.len() + 8 * flat.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(&spec);
        for v in flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Validation(format!("model file: {m}"));
        if bytes.len() < 10 || &bytes[..4] != MODEL_MAGIC {
            return Err(bad("missing CCSQ magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MODEL_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let spec_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let body = bytes.get(10..10 + spec_len).ok_or_else(|| bad("truncated spec"))?;
        let spec: NetworkSpec =
            serde_json::from_slice(body).map_err(|e| bad(&format!("spec JSON: {e}")))?;
        spec.validate()?;
        let rest = &bytes[10 + spec_len..];
        if !rest.len().is_multiple_of(8) {
            return Err(bad("weight block is not a whole number of f64"));
        }
        let values: Vec<f64> = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(&spec, &values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

fn fill_uniform(a: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (fan_out, fan_in) = a.dim();
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    a.iter_mut().for_each(|v| *v = rng.gen_range(-r..=r));
}

/// Uniform `[-r, r]` weights with `r = sqrt(6 / (fan_in + fan_out))` per
/// matrix, zero biases except forget-gate biases of one.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    spec.validate()?;
    let mut params = NetworkParams::zeros(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut params.layers {
        for d in &mut layer.directions {
            fill_uniform(&mut d.w_in, &mut rng);
            fill_uniform(&mut d.w_rec, &mut rng);
            let h = d.size();
            d.bias
                .slice_mut(s![FORGET_GATE * h..(FORGET_GATE + 1) * h])
                .fill(1.0);
        }
    }
    for head in &mut params.heads {
        fill_uniform(&mut head.weight, &mut rng);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Task;
    use crate::seqnet::{LayerKind, LayerSpec};

    fn small_spec() -> NetworkSpec {
        let mut s = NetworkSpec::video(3, &[Task::Valence], Some(4));
        s.layers = vec![
            LayerSpec { kind: LayerKind::Blstm, size: 2 },
            LayerSpec { kind: LayerKind::Lstm, size: 3 },
        ];
        s
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = small_spec();
        let a = init_params(&spec, 5).unwrap();
        assert_eq!(a, init_params(&spec, 5).unwrap());
        assert_ne!(a, init_params(&spec, 6).unwrap());
        for layer in &a.layers {
            for d in &layer.directions {
                let h = d.size();
                assert!(d.bias.slice(s![h..2 * h]).iter().all(|&b| b == 1.0));
                assert!(d.bias.iter().enumerate().all(|(i, &b)| (h..2 * h).contains(&i) || b == 0.0));
                for m in [&d.w_in, &d.w_rec] {
                    let r = (6.0 / (m.nrows() + m.ncols()) as f64).sqrt();
                    assert!(m.iter().all(|w| w.abs() <= r));
                }
            }
        }
        for h in &a.heads {
            assert!(h.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn flat_order_follows_gate_blocks() {
        let spec = NetworkSpec {
            input_dim: 1,
            layers: vec![LayerSpec { kind: LayerKind::Lstm, size: 1 }],
            heads: NetworkSpec::audio(1, &[Task::Arousal]).heads,
        };
        let mut p = NetworkParams::zeros(&spec);
        let d = &mut p.layers[0].directions[0];
        for g in 0..4 {
            d.w_in[[g, 0]] = 10.0 * g as f64 + 1.0;
            d.w_rec[[g, 0]] = 10.0 * g as f64 + 2.0;
            d.bias[g] = 10.0 * g as f64 + 3.0;
        }
        p.heads[0].weight[[0, 0]] = 100.0;
        p.heads[0].bias[0] = 101.0;
        assert_eq!(
            p.to_flat(),
            vec![1., 2., 3., 11., 12., 13., 21., 22., 23., 31., 32., 33., 100., 101.]
        );
    }

    #[test]
    fn bytes_roundtrip_exact() {
        let p = init_params(&small_spec(), 1).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"CCSQ");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(NetworkParams::from_bytes(&bytes).unwrap(), p);
        assert!(NetworkParams::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(NetworkParams::from_bytes(b"NOPE0000000").is_err());
    }
}
