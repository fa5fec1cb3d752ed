//! Run configuration (TOML) and command-line overrides.
//!
//! ```toml
//! seed = 1
//! preset = "desk"                  # or "paper"
//! schemes = ["nt", "wt", "aewc"]
//! sizes = [1, 2, 3, 4, 5]
//!
//! [training]                       # any TrainConfig field
//! epochs = 100
//! dropout = 0.4
//!
//! [consolidation]
//! mode = "aewc"                    # or "path_integral" (AEWC only)
//! c = 0.1                          # preset default: 0.1 desk, 0.01 paper
//! zeta = 1e-3
//! lambda = 0.999
//!
//! [data]
//! # Without `tasks`, the built-in open_close → task corpora are generated
//! # from the seed (sizes below are the defaults).
//! synthetic = { open_close_dialogs = 10, task_train_dialogs = 40, eval_dialogs = 40 }
//! # Otherwise tasks in training order, the last one being the few-shot task:
//! # tasks = [{ name = "open_close", dialogs = "oc.jsonl" },
//! #          { name = "task", dialogs = "task.jsonl", instances = "task.instances.jsonl" }]
//! # eval = [{ name = "task", dialogs = "eval.jsonl" }]
//! # pretrained = "vectors.txt"
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use aewc_core::consolidation::{ConsolidationConfig, Mode};
use aewc_core::harness::{EvalSet, Preset, Schedule, Scheme, SyntheticConfig, TaskSpec, TrainConfig, TwoTaskCorpora};
use aewc_core::optim::AdamConfig;
use aewc_core::rng::{stream, Stream};
use serde::{Deserialize, Serialize};

use crate::io::{read_dialogs, read_instances, read_pretrained, read_toml};
use crate::Result;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub schemes: Option<Vec<Scheme>>,
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub training: TrainingOverrides,
    #[serde(default)]
    pub consolidation: ConsolidationOverrides,
    #[serde(default)]
    pub data: DataConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOverrides {
    pub epochs: Option<usize>,
    pub dropout: Option<f64>,
    pub clip_norm: Option<f64>,
    pub distractors: Option<usize>,
    pub lr: Option<f64>,
    pub reset_optimizer: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsolidationOverrides {
    pub mode: Option<Mode>,
    pub c: Option<f64>,
    pub zeta: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub tasks: Vec<TaskFile>,
    #[serde(default)]
    pub eval: Vec<EvalFile>,
    pub pretrained: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub name: String,
    pub dialogs: PathBuf,
    /// Sampled from the task's own action inventory when absent.
    pub instances: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFile {
    pub name: String,
    pub dialogs: PathBuf,
}

/// Values given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub scheme: Option<Scheme>,
    pub sizes: Option<Vec<usize>>,
    pub c: Option<f64>,
    pub zeta: Option<f64>,
    pub lambda: Option<f64>,
}

/// A fully resolved experiment: one schedule per scheme.
#[derive(Debug, Clone)]
pub struct Plan {
    pub seed: u64,
    pub schedules: Vec<Schedule>,
}

pub const DEFAULT_SCHEMES: [Scheme; 3] = [Scheme::Nt, Scheme::Wt, Scheme::Aewc];

/// Parses `3`, `1,2,5`, `1..5` (inclusive) or `1..=5`.
pub fn parse_sizes(s: &str) -> aewc_core::Result<Vec<usize>> {
    let bad = || aewc_core::Error::Config(format!("cannot parse sizes {s:?} (try 1..5 or 1,2,3)"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let sizes = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<aewc_core::Result<Vec<_>>>()?
    };
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(bad());
    }
    Ok(sizes)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let config = read_toml(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, dir))
    }

    fn training(&self) -> TrainConfig {
        let t = &self.training;
        let d = TrainConfig::default();
        TrainConfig {
            epochs: t.epochs.unwrap_or(d.epochs),
            dropout: t.dropout.unwrap_or(d.dropout),
            clip_norm: t.clip_norm.unwrap_or(d.clip_norm),
            distractors: t.distractors.unwrap_or(d.distractors),
            adam: AdamConfig {
                lr: t.lr.unwrap_or(d.adam.lr),
                ..d.adam
            },
            reset_optimizer: t.reset_optimizer.unwrap_or(d.reset_optimizer),
        }
    }

    /// Resolves data files relative to `base` and applies `over`.
    pub fn plan(&self, base: &Path, over: &Overrides) -> Result<Plan> {
        let seed = over.seed.or(self.seed).unwrap_or(1);
        let preset = over.preset.or(self.preset).unwrap_or(Preset::Desk);
        let training = self.training();
        let d = &self.data;

        let mut schedule = if d.tasks.is_empty() {
            let sizes = d.synthetic.clone().unwrap_or_default();
            TwoTaskCorpora::generate(seed, &sizes)?.schedule_with(Scheme::Wt, seed, preset.encoder(), training)?
        } else {
            let mut tasks = Vec::with_capacity(d.tasks.len());
            for (i, t) in d.tasks.iter().enumerate() {
                let dialogs = read_dialogs(&base.join(&t.dialogs))?;
                let task = match &t.instances {
                    Some(p) => {
                        let task = TaskSpec {
                            name: t.name.clone(),
                            dialogs,
                            instances: read_instances(&base.join(p))?,
                        };
                        task.validate()?;
                        task
                    }
                    None => TaskSpec::from_dialogs(
                        &t.name,
                        dialogs,
                        training.distractors,
                        &mut stream(seed, Stream::Sampling, i as u64),
                    )?,
                };
                tasks.push(task);
            }
            let eval = d
                .eval
                .iter()
                .map(|e| {
                    Ok(EvalSet {
                        name: e.name.clone(),
                        dialogs: read_dialogs(&base.join(&e.dialogs))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Schedule {
                scheme: if tasks.len() == 1 { Scheme::Nt } else { Scheme::Wt },
                seed,
                encoder: preset.encoder(),
                training,
                consolidation: ConsolidationConfig::new(Mode::Off),
                tasks,
                sizes: vec![1, 2, 3, 4, 5],
                eval,
                pretrained: Default::default(),
            }
        };
        if let Some(p) = &d.pretrained {
            schedule.pretrained = read_pretrained(&base.join(p))?;
        }
        if let Some(sizes) = over.sizes.clone().or_else(|| self.sizes.clone()) {
            schedule.sizes = sizes;
        }
        let c = &self.consolidation;
        let cons = &mut schedule.consolidation;
        if let Some(m) = c.mode {
            cons.mode = m;
        }
        cons.c = over.c.or(c.c).unwrap_or(preset.penalty_weight());
        cons.zeta = over.zeta.or(c.zeta).unwrap_or(cons.zeta);
        cons.lambda = over.lambda.or(c.lambda).unwrap_or(cons.lambda);

        let schemes = match over.scheme {
            Some(s) => vec![s],
            None => self.schemes.clone().unwrap_or_else(|| DEFAULT_SCHEMES.to_vec()),
        };
        let schedules = schemes
            .iter()
            .map(|&s| schedule.for_scheme(s))
            .collect::<aewc_core::Result<Vec<_>>>()?;
        Ok(Plan { seed, schedules })
    }
}
