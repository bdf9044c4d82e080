//! Recurrent sequence regressor trained end to end on `1 - CCC`.
//!
//! A network is a stack of LSTM or bidirectional LSTM layers followed by one
//! or more dense heads applied at every timestep: identity or tanh
//! regression heads (one per affect task) and an optional softmax speaker
//! head used for adversarial training. Gradients are computed by
//! backpropagation through time, including through the batch-level CCC
//! statistics.

mod lstm;
mod network;
mod params;
mod train;

pub use network::{
    backward, forward, hidden_states, loss, predict_utterance, speaker_accuracy, HeadOutputs, LossConfig,
    Sample, Targets,
};
pub use params::{init_params, DirectionParams, HeadParams, LayerParams, NetworkParams, MODEL_MAGIC, MODEL_VERSION};
pub use train::{
    history_csv, train_fold, write_history, EarlyStopping, EpochRecord, TrainConfig, TrainOutcome, HISTORY_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::dataset::Task;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Lstm,
    Blstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub size: usize,
}

impl LayerSpec {
    pub fn directions(&self) -> usize {
        match self.kind {
            LayerKind::Lstm => 1,
            LayerKind::Blstm => 2,
        }
    }

    pub fn output_width(&self) -> usize {
        self.size * self.directions()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Regression with identity activation.
    Identity,
    /// Regression squashed to `(-1, 1)`.
    Tanh,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadTask {
    Arousal,
    Valence,
    Speaker,
}

impl HeadTask {
    pub fn regression_task(self) -> Option<Task> {
        match self {
            HeadTask::Arousal => Some(Task::Arousal),
            HeadTask::Valence => Some(Task::Valence),
            HeadTask::Speaker => None,
        }
    }
}

impl From<Task> for HeadTask {
    fn from(t: Task) -> Self {
        match t {
            Task::Arousal => HeadTask::Arousal,
            Task::Valence => HeadTask::Valence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub width: usize,
    pub task: HeadTask,
}

/// Architecture of a network: input width, recurrent stack and heads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
}

impl NetworkSpec {
    /// BLSTM(100) then LSTM(40) with an identity head per task.
    pub fn audio(input_dim: usize, tasks: &[Task]) -> Self {
        Self {
            input_dim,
            layers: vec![
                LayerSpec { kind: LayerKind::Blstm, size: 100 },
                LayerSpec { kind: LayerKind::Lstm, size: 40 },
            ],
            heads: tasks
                .iter()
                .map(|&t| HeadSpec { kind: HeadKind::Identity, width: 1, task: t.into() })
                .collect(),
        }
    }

    /// BLSTM(16) then BLSTM(8) with tanh heads, plus a speaker softmax head
    /// when `speakers` is given.
    pub fn video(input_dim: usize, tasks: &[Task], speakers: Option<usize>) -> Self {
        let mut heads: Vec<HeadSpec> = tasks
            .iter()
            .map(|&t| HeadSpec { kind: HeadKind::Tanh, width: 1, task: t.into() })
            .collect();
        if let Some(k) = speakers {
            heads.push(HeadSpec { kind: HeadKind::Softmax, width: k, task: HeadTask::Speaker });
        }
        Self {
            input_dim,
            layers: vec![
                LayerSpec { kind: LayerKind::Blstm, size: 16 },
                LayerSpec { kind: LayerKind::Blstm, size: 8 },
            ],
            heads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.layers.is_empty() {
            return bad("network needs at least one recurrent layer".into());
        }
        if let Some(i) = self.layers.iter().position(|l| l.size == 0) {
            return bad(format!("layers[{i}].size must be positive"));
        }
        if self.heads.is_empty() {
            return bad("network needs at least one head".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, h) in self.heads.iter().enumerate() {
            if !seen.insert(h.task) {
                return bad(format!("heads[{i}]: more than one head for task {:?}", h.task));
            }
            match (h.kind, h.task) {
                (HeadKind::Softmax, HeadTask::Speaker) if h.width >= 2 => {}
                (HeadKind::Softmax, HeadTask::Speaker) => {
                    return bad(format!("heads[{i}]: speaker head needs at least 2 classes"))
                }
                (HeadKind::Softmax, _) | (_, HeadTask::Speaker) => {
                    return bad(format!("heads[{i}]: softmax heads are for the speaker task only"))
                }
                (_, _) if h.width != 1 => {
                    return bad(format!("heads[{i}]: regression heads have width 1"))
                }
                _ => {}
            }
        }
        if self.regression_tasks().is_empty() {
            return bad("network needs at least one regression head".into());
        }
        Ok(())
    }

    pub fn top_width(&self) -> usize {
        self.layers.last().map_or(self.input_dim, LayerSpec::output_width)
    }

    pub fn regression_tasks(&self) -> Vec<Task> {
        self.heads.iter().filter_map(|h| h.task.regression_task()).collect()
    }

    pub fn speaker_head(&self) -> Option<usize> {
        self.heads.iter().position(|h| h.kind == HeadKind::Softmax)
    }

    pub fn head_for(&self, task: Task) -> Option<usize> {
        self.heads.iter().position(|h| h.task == HeadTask::from(task))
    }
}
