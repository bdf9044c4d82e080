use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2, Axis};

use super::lstm::{direction_backward, direction_forward, DirectionCache};
use super::params::NetworkParams;
use super::{HeadKind, HeadSpec, HeadTask, NetworkSpec};
use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::metrics::{ccc_loss_grad, CE_PROB_FLOOR};

/// Utterance-level targets; regression labels are broadcast to every
/// timestep of the utterance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Targets {
    pub arousal: Option<f64>,
    pub valence: Option<f64>,
    pub speaker: Option<usize>,
}

impl Targets {
    pub fn get(&self, task: Task) -> Option<f64> {
        match task {
            Task::Arousal => self.arousal,
            Task::Valence => self.valence,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    /// `W x input_dim`
    pub inputs: ArrayView2<'a, f64>,
    pub targets: Targets,
}

/// Activated per-timestep outputs of every head (`W x width` each).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub specs: Vec<HeadSpec>,
    pub heads: Vec<Array2<f64>>,
}

impl HeadOutputs {
    pub fn steps(&self) -> usize {
        self.heads.first().map_or(0, Array2::nrows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Missing tasks weigh 1.
    pub task_weights: BTreeMap<Task, f64>,
    pub adversarial_lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            task_weights: BTreeMap::new(),
            adversarial_lambda: 0.0,
        }
    }
}

impl LossConfig {
    pub fn weight(&self, task: Task) -> f64 {
        self.task_weights.get(&task).copied().unwrap_or(1.0)
    }
}

struct NetworkCache {
    layers: Vec<Vec<DirectionCache>>,
    top: Array2<f64>,
    outputs: HeadOutputs,
}

fn check_input(spec: &NetworkSpec, seq: ArrayView2<'_, f64>) -> Result<()> {
    if seq.ncols() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "sequence width {} but network input_dim {}",
            seq.ncols(),
            spec.input_dim
        )));
    }
    if seq.nrows() == 0 {
        return Err(Error::TooShort("empty input sequence".into()));
    }
    if seq.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite network input".into()));
    }
    Ok(())
}

fn reversed(a: ArrayView2<'_, f64>) -> Array2<f64> {
    a.slice(s![..;-1, ..]).to_owned()
}

fn apply_head(spec: &HeadSpec, weight: &Array2<f64>, bias: &ndarray::Array1<f64>, top: &Array2<f64>) -> Array2<f64> {
    let mut out = top.dot(&weight.t());
    out += bias;
    match spec.kind {
        HeadKind::Identity => {}
        HeadKind::Tanh => out.mapv_inplace(f64::tanh),
        HeadKind::Softmax => {
            for mut row in out.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let total = row.sum();
                row /= total;
            }
        }
    }
    out
}

fn forward_cached(params: &NetworkParams, seq: ArrayView2<'_, f64>) -> Result<NetworkCache> {
    check_input(&params.spec, seq)?;
    let mut input = seq.to_owned();
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let mut caches = Vec::with_capacity(layer.directions.len());
        let mut parts = Vec::with_capacity(layer.directions.len());
        for (d, dir) in layer.directions.iter().enumerate() {
            if d == 0 {
                let cache = direction_forward(dir, input.clone());
                parts.push(cache.hidden.clone());
                caches.push(cache);
            } else {
                let cache = direction_forward(dir, reversed(input.view()));
                parts.push(reversed(cache.hidden.view()));
                caches.push(cache);
            }
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        input = ndarray::concatenate(Axis(1), &views).expect("equal step counts");
        layers.push(caches);
    }
    let top = input;
    let heads = params
        .spec
        .heads
        .iter()
        .zip(&params.heads)
        .map(|(spec, p)| apply_head(spec, &p.weight, &p.bias, &top))
        .collect();
    Ok(NetworkCache {
        layers,
        top,
        outputs: HeadOutputs {
            specs: params.spec.heads.clone(),
            heads,
        },
    })
}

/// Runs the network over one sequence.
pub fn forward(params: &NetworkParams, seq: ArrayView2<'_, f64>) -> Result<HeadOutputs> {
    Ok(forward_cached(params, seq)?.outputs)
}

/// Output of the last recurrent layer (`W x top_width`).
pub fn hidden_states(params: &NetworkParams, seq: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(forward_cached(params, seq)?.top)
}

/// Loss value and, per sample and head, its gradient with respect to the
/// head's pre-activation outputs.
fn loss_and_grads(
    outputs: &[&HeadOutputs],
    targets: &[Targets],
    config: &LossConfig,
) -> Result<(f64, Vec<Vec<Array2<f64>>>)> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(Error::Dimension(format!(
            "{} outputs for {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    let specs = &outputs[0].specs;
    let mut grads: Vec<Vec<Array2<f64>>> = outputs
        .iter()
        .map(|o| o.heads.iter().map(|h| Array2::zeros(h.dim())).collect())
        .collect();
    let mut total = 0.0;

    for (hi, spec) in specs.iter().enumerate() {
        let Some(task) = spec.task.regression_task() else {
            continue;
        };
        let weight = config.weight(task);
        let mut preds = Vec::new();
        let mut refs = Vec::new();
        for (o, t) in outputs.iter().zip(targets) {
            let y = t.get(task).ok_or_else(|| {
                Error::Validation(format!("missing {task} target for a {task} head"))
            })?;
            preds.extend(o.heads[hi].column(0).iter().copied());
            refs.extend(std::iter::repeat_n(y, o.heads[hi].nrows()));
        }
        let (task_loss, d_pred) = ccc_loss_grad(&preds, &refs)?;
        total += weight * task_loss;
        let mut offset = 0;
        for (si, o) in outputs.iter().enumerate() {
            let out = &o.heads[hi];
            for t in 0..out.nrows() {
                let dy = weight * d_pred[offset + t];
                grads[si][hi][[t, 0]] = match spec.kind {
                    HeadKind::Tanh => dy * (1.0 - out[[t, 0]].powi(2)),
                    _ => dy,
                };
            }
            offset += out.nrows();
        }
    }

    if config.adversarial_lambda != 0.0 {
        let hi = specs
            .iter()
            .position(|h| h.task == HeadTask::Speaker)
            .ok_or_else(|| Error::Config("adversarial_lambda > 0 needs a speaker head".into()))?;
        let steps: usize = outputs.iter().map(|o| o.steps()).sum();
        let scale = config.adversarial_lambda / steps as f64;
        let mut ce_sum = 0.0;
        for (si, (o, t)) in outputs.iter().zip(targets).enumerate() {
            let label = t
                .speaker
                .ok_or_else(|| Error::Validation("missing speaker target".into()))?;
            let probs = &o.heads[hi];
            if label >= probs.ncols() {
                return Err(Error::Validation(format!(
                    "speaker class {label} >= head width {}",
                    probs.ncols()
                )));
            }
            for (step, row) in probs.rows().into_iter().enumerate() {
                let p = row[label];
                ce_sum += -p.max(CE_PROB_FLOOR).ln();
                if p > CE_PROB_FLOOR {
                    // d(-λ·CE)/dz = -λ (p - onehot)
                    let mut g = grads[si][hi].row_mut(step);
                    for (k, &pk) in row.iter().enumerate() {
                        let onehot = if k == label { 1.0 } else { 0.0 };
                        g[k] = -scale * (pk - onehot);
                    }
                }
            }
        }
        total -= scale * ce_sum;
    }
    Ok((total, grads))
}

/// Total batch loss: weighted `1 - CCC` per regression task over all
/// timesteps of the batch, minus `adversarial_lambda` times the mean
/// per-timestep speaker cross-entropy.
pub fn loss(outputs: &[HeadOutputs], targets: &[Targets], config: &LossConfig) -> Result<f64> {
    let refs: Vec<&HeadOutputs> = outputs.iter().collect();
    Ok(loss_and_grads(&refs, targets, config)?.0)
}

/// Loss of the batch and its exact gradient with respect to every weight.
pub fn backward(params: &NetworkParams, batch: &[Sample<'_>], config: &LossConfig) -> Result<(f64, NetworkParams)> {
    let caches = batch
        .iter()
        .map(|s| forward_cached(params, s.inputs))
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<&HeadOutputs> = caches.iter().map(|c| &c.outputs).collect();
    let targets: Vec<Targets> = batch.iter().map(|s| s.targets).collect();
    let (total, d_logits) = loss_and_grads(&outputs, &targets, config)?;

    let mut grads = params.zeros_like();
    for (cache, d_heads) in caches.iter().zip(&d_logits) {
        let mut d_out = Array2::<f64>::zeros(cache.top.dim());
        for ((head, g), d) in params.heads.iter().zip(&mut grads.heads).zip(d_heads) {
            g.weight += &d.t().dot(&cache.top);
            g.bias += &d.sum_axis(Axis(0));
            d_out += &d.dot(&head.weight);
        }
        for (li, layer) in params.layers.iter().enumerate().rev() {
            let h = layer.directions[0].size();
            let mut d_in: Option<Array2<f64>> = None;
            for (d, dir) in layer.directions.iter().enumerate() {
                let part = d_out.slice(s![.., d * h..(d + 1) * h]);
                let g = &mut grads.layers[li].directions[d];
                let dx = if d == 0 {
                    direction_backward(dir, &cache.layers[li][d], part, g)
                } else {
                    let dx = direction_backward(dir, &cache.layers[li][d], reversed(part).view(), g);
                    reversed(dx.view())
                };
                d_in = Some(match d_in {
                    None => dx,
                    Some(acc) => acc + dx,
                });
            }
            d_out = d_in.expect("layer has a direction");
        }
    }
    Ok((total, grads))
}

/// Mean of each regression head's per-timestep outputs.
pub fn predict_utterance(params: &NetworkParams, seq: ArrayView2<'_, f64>) -> Result<BTreeMap<Task, f64>> {
    let out = forward(params, seq)?;
    Ok(out
        .specs
        .iter()
        .zip(&out.heads)
        .filter_map(|(spec, h)| {
            spec.task
                .regression_task()
                .map(|task| (task, h.column(0).mean().expect("non-empty sequence")))
        })
        .collect())
}

/// Fraction of samples whose time-averaged speaker distribution peaks at
/// the true speaker.
pub fn speaker_accuracy(params: &NetworkParams, samples: &[Sample<'_>]) -> Result<f64> {
    let hi = params
        .spec
        .speaker_head()
        .ok_or_else(|| Error::Config("network has no speaker head".into()))?;
    if samples.is_empty() {
        return Err(Error::Validation("no samples".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        let label = s
            .targets
            .speaker
            .ok_or_else(|| Error::Validation("missing speaker target".into()))?;
        let out = forward(params, s.inputs)?;
        let mean = out.heads[hi].mean_axis(Axis(0)).expect("non-empty");
        let best = mean
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
            .expect("speaker head has classes");
        hits += usize::from(best == label);
    }
    Ok(hits as f64 / samples.len() as f64)
}
