#![allow(dead_code)]

use ccsq::dataset::Task;
use ccsq::seqnet::{
    backward, init_params, HeadKind, HeadSpec, HeadTask, LayerKind, LayerSpec, LossConfig, NetworkParams,
    NetworkSpec, Sample, Targets,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Architecture families exercised by the gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Lstm,
    Blstm,
    StackedBlstmLstm,
    TanhHead,
    Adversarial,
    MultiTask,
}

pub const VARIANTS: [Variant; 6] = [
    Variant::Lstm,
    Variant::Blstm,
    Variant::StackedBlstmLstm,
    Variant::TanhHead,
    Variant::Adversarial,
    Variant::MultiTask,
];

pub struct Instance {
    pub params: NetworkParams,
    pub inputs: Vec<Array2<f64>>,
    pub targets: Vec<Targets>,
    pub config: LossConfig,
}

impl Instance {
    pub fn batch(&self) -> Vec<Sample<'_>> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .map(|(x, &targets)| Sample { inputs: x.view(), targets })
            .collect()
    }
}

/// A random small network (sizes <= 4, W <= 6) with a random batch.
pub fn random_instance(variant: Variant, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dim = rng.gen_range(1..=4);
    let mut size = || rng.gen_range(1..=4);
    let layers = match variant {
        Variant::Lstm => vec![LayerSpec { kind: LayerKind::Lstm, size: size() }],
        Variant::StackedBlstmLstm => vec![
            LayerSpec { kind: LayerKind::Blstm, size: size() },
            LayerSpec { kind: LayerKind::Lstm, size: size() },
        ],
        _ => vec![LayerSpec { kind: LayerKind::Blstm, size: size() }],
    };
    let kind = if variant == Variant::TanhHead { HeadKind::Tanh } else { HeadKind::Identity };
    let mut heads = vec![HeadSpec { kind, width: 1, task: HeadTask::Arousal }];
    if variant == Variant::MultiTask {
        heads.push(HeadSpec { kind: HeadKind::Tanh, width: 1, task: HeadTask::Valence });
    }
    let classes = rng.gen_range(2..=4);
    if variant == Variant::Adversarial {
        heads.push(HeadSpec { kind: HeadKind::Softmax, width: classes, task: HeadTask::Speaker });
    }
    let spec = NetworkSpec { input_dim, layers, heads };
    let mut params = init_params(&spec, rng.gen()).unwrap();
    let flat: Vec<f64> = params.to_flat().iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
    params = NetworkParams::from_flat(&spec, &flat).unwrap();

    let utterances = rng.gen_range(2..=3);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..utterances {
        let steps = rng.gen_range(1..=6);
        inputs.push(Array2::from_shape_fn((steps, input_dim), |_| rng.gen_range(-1.0..1.0)));
        targets.push(Targets {
            arousal: Some(rng.gen_range(-1.0..1.0)),
            valence: Some(rng.gen_range(-1.0..1.0)),
            speaker: Some(rng.gen_range(0..classes)),
        });
    }
    let mut config = LossConfig::default();
    if variant == Variant::Adversarial {
        config.adversarial_lambda = rng.gen_range(0.1..1.0);
    }
    if variant == Variant::MultiTask {
        config.task_weights.insert(Task::Valence, rng.gen_range(0.5..2.0));
    }
    Instance { params, inputs, targets, config }
}

pub fn loss_at(inst: &Instance, flat: &[f64]) -> f64 {
    let p = NetworkParams::from_flat(&inst.params.spec, flat).unwrap();
    backward(&p, &inst.batch(), &inst.config).unwrap().0
}

/// Largest per-parameter relative deviation between the analytic gradient
/// and central differences with step `h`. Denominators are floored at 1e-6
/// so that vanishing gradients are compared absolutely.
pub fn max_relative_error(inst: &Instance, h: f64) -> f64 {
    let (_, grad) = backward(&inst.params, &inst.batch(), &inst.config).unwrap();
    let analytic = grad.to_flat();
    let mut flat = inst.params.to_flat();
    let mut worst = 0.0f64;
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + h;
        let up = loss_at(inst, &flat);
        flat[i] = orig - h;
        let down = loss_at(inst, &flat);
        flat[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
