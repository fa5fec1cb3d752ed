//! Training schemes, the few-shot sweep and evaluation.
//!
//! A [`Schedule`] lists tasks in training order. Under no transfer (NT) only
//! the final task is trained, from scratch. Under weight transfer (WT) the
//! earlier tasks are trained first and the final task continues from their
//! weights. AEWC and EWC are WT with a consolidation penalty on the final
//! task. For every few-shot size `n` the final task trains on the instances
//! of its first `n` dialogs, starting from the same prior model.

mod model;

pub use model::{accuracy, evaluate, Model};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::consolidation::{ConsolidationConfig, ConsolidationState, FisherAccumulator, Mode};
use crate::corpus::{
    action_inventory, build_instances, generate, splice_plus, CorpusSpec, Dialog, GeneratorKind, RankingInstance,
};
use crate::encoder::EncoderConfig;
use crate::layers::{DropoutLayer, DropoutMode};
use crate::optim::{clip_global_norm, Adam, AdamConfig};
use crate::rng::{derive_seed, stream, Rng, Stream};
use crate::text::Vocab;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Nt,
    Wt,
    Aewc,
    Ewc,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Nt, Scheme::Wt, Scheme::Aewc, Scheme::Ewc];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Nt => "nt",
            Scheme::Wt => "wt",
            Scheme::Aewc => "aewc",
            Scheme::Ewc => "ewc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?} (expected nt, wt, aewc or ewc)")))
    }

    pub fn transfers(self) -> bool {
        self != Scheme::Nt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Config(format!("unknown preset {s:?} (expected desk or paper)"))),
        }
    }

    pub fn encoder(self) -> EncoderConfig {
        match self {
            Preset::Desk => EncoderConfig::desk(),
            Preset::Paper => EncoderConfig::paper(),
        }
    }

    /// Default consolidation penalty weight. Picked by a grid over
    /// {0.01, 0.1, 1, 10} on the synthetic corpora; at 0.01 the desk model
    /// forgets nearly as much as plain weight transfer.
    pub fn penalty_weight(self) -> f64 {
        match self {
            Preset::Desk => 0.1,
            Preset::Paper => 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub dropout: f64,
    pub clip_norm: f64,
    pub distractors: usize,
    pub adam: AdamConfig,
    /// Zero the Adam moments at each task boundary.
    #[serde(default)]
    pub reset_optimizer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            dropout: 0.4,
            clip_norm: 5.0,
            distractors: 9,
            adam: AdamConfig::default(),
            reset_optimizer: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        Ok(())
    }
}

/// One task: its training dialogs and the ranking instances built from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub dialogs: Vec<Dialog>,
    pub instances: Vec<RankingInstance>,
}

impl TaskSpec {
    /// Builds instances with `k` distractors from the dialogs' own action
    /// inventory.
    pub fn from_dialogs(name: &str, dialogs: Vec<Dialog>, k: usize, rng: &mut Rng) -> Result<Self> {
        let inventory = action_inventory(&dialogs);
        let instances = build_instances(&dialogs, &inventory, k, rng)?;
        Ok(TaskSpec {
            name: name.into(),
            dialogs,
            instances,
        })
    }

    /// Instances belonging to the first `n` dialogs.
    pub fn first_dialogs(&self, n: usize) -> Result<Vec<RankingInstance>> {
        if n == 0 || n > self.dialogs.len() {
            return Err(Error::Config(format!(
                "train size {n} outside 1..={} for task {:?}",
                self.dialogs.len(),
                self.name
            )));
        }
        let ids: BTreeSet<&str> = self.dialogs[..n].iter().map(|d| d.id.as_str()).collect();
        Ok(self
            .instances
            .iter()
            .filter(|i| ids.contains(i.dialog_id.as_str()))
            .cloned()
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() {
            return Err(Error::Config(format!("task {:?} has no instances", self.name)));
        }
        let index: BTreeMap<&str, &Dialog> = self.dialogs.iter().map(|d| (d.id.as_str(), d)).collect();
        if index.len() != self.dialogs.len() {
            return Err(Error::Config(format!("task {:?} repeats a dialog id", self.name)));
        }
        for i in &self.instances {
            i.validate()?;
            let d = index
                .get(i.dialog_id.as_str())
                .ok_or_else(|| Error::Config(format!("instance refers to unknown dialog {:?}", i.dialog_id)))?;
            if i.turn > d.len() {
                return Err(Error::Index {
                    index: i.turn,
                    len: d.len(),
                });
            }
            if d.turns[i.turn - 1].system != i.truth {
                return Err(Error::Contract(format!(
                    "instance {}#{} truth differs from the dialog",
                    i.dialog_id, i.turn
                )));
            }
        }
        Ok(())
    }
}

/// A named evaluation corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub name: String,
    pub dialogs: Vec<Dialog>,
}

impl EvalSet {
    pub fn inventory(&self) -> Vec<String> {
        action_inventory(&self.dialogs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub scheme: Scheme,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub training: TrainConfig,
    /// `mode` must match the scheme: `off` for NT/WT, `aewc` or
    /// `path_integral` for AEWC, `fisher_ewc` for EWC.
    pub consolidation: ConsolidationConfig,
    pub tasks: Vec<TaskSpec>,
    pub sizes: Vec<usize>,
    pub eval: Vec<EvalSet>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pretrained: BTreeMap<String, Vec<f64>>,
}

/// Consolidation mode used by `scheme` by default.
pub fn default_mode(scheme: Scheme) -> Mode {
    match scheme {
        Scheme::Nt | Scheme::Wt => Mode::Off,
        Scheme::Aewc => Mode::Aewc,
        Scheme::Ewc => Mode::FisherEwc,
    }
}

impl Schedule {
    /// The same experiment under another scheme. NT keeps only the final
    /// task; a transfer scheme needs the schedule to still hold the earlier
    /// tasks.
    pub fn for_scheme(&self, scheme: Scheme) -> Result<Schedule> {
        let mut s = self.clone();
        s.scheme = scheme;
        let keep_path = scheme == Scheme::Aewc && self.consolidation.mode == Mode::PathIntegral;
        if !keep_path {
            s.consolidation.mode = default_mode(scheme);
        }
        if scheme == Scheme::Nt {
            s.tasks.drain(..s.tasks.len().saturating_sub(1));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.training.validate()?;
        self.consolidation.validate()?;
        let mode_ok = match self.scheme {
            Scheme::Nt | Scheme::Wt => self.consolidation.mode == Mode::Off,
            Scheme::Aewc => matches!(self.consolidation.mode, Mode::Aewc | Mode::PathIntegral),
            Scheme::Ewc => self.consolidation.mode == Mode::FisherEwc,
        };
        if !mode_ok {
            return Err(Error::Config(format!(
                "consolidation mode {:?} does not fit scheme {:?}",
                self.consolidation.mode, self.scheme
            )));
        }
        match (self.scheme, self.tasks.len()) {
            (Scheme::Nt, 1) => {}
            (Scheme::Nt, n) => return Err(Error::Config(format!("NT trains exactly one task, got {n}"))),
            (_, n) if n < 2 => {
                return Err(Error::Config(format!("{:?} needs at least two tasks, got {n}", self.scheme)))
            }
            _ => {}
        }
        for t in &self.tasks {
            t.validate()?;
        }
        if self.sizes.is_empty() {
            return Err(Error::Config("no train sizes".into()));
        }
        let last = self.tasks.last().expect("checked above");
        for &n in &self.sizes {
            last.first_dialogs(n)?;
        }
        if self.eval.is_empty() {
            return Err(Error::Config("no evaluation sets".into()));
        }
        for e in &self.eval {
            if e.dialogs.iter().all(|d| d.turns.is_empty()) {
                return Err(Error::Config(format!("evaluation set {:?} has no turns", e.name)));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding of the whole schedule.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schedule is always serializable");
        hex_lower(&Sha256::digest(&bytes))
    }

    /// Vocabulary over every utterance and action of the trained tasks.
    pub fn vocab(&self) -> Vocab {
        Vocab::build(
            self.tasks
                .iter()
                .flat_map(|t| &t.dialogs)
                .flat_map(|d| &d.turns)
                .flat_map(|t| [t.user.as_str(), t.system.as_str()]),
        )
    }

    fn consolidation_state(&self, len: usize) -> Result<ConsolidationState> {
        ConsolidationState::new(self.consolidation, len)
    }
}

pub fn hex_lower(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        write!(s, "{b:02x}").expect("writing to a String");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub size: usize,
    /// Eval set name → accuracy.
    pub accuracy: BTreeMap<String, f64>,
    /// Optimizer steps on the final task.
    pub steps: usize,
    pub final_loss: f64,
}

/// Mean task loss per epoch of one training task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub task: String,
    /// Few-shot size for the final task, absent for earlier tasks.
    pub size: Option<usize>,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub fingerprint: String,
    pub eval_sets: Vec<String>,
    /// Sorted by train size.
    pub rows: Vec<ResultRow>,
    pub curves: Vec<LossCurve>,
}

/// Everything a caller may want to persist after one train size.
#[derive(Debug)]
pub struct Trained<'a> {
    pub scheme: Scheme,
    pub size: usize,
    pub model: &'a Model,
    pub consolidation: &'a ConsolidationState,
}

/// Mutable training context of one task.
#[derive(Debug)]
pub struct Trainer<'a> {
    pub config: &'a TrainConfig,
    pub adam: &'a mut Adam,
    pub consolidation: &'a mut ConsolidationState,
    pub shuffle: &'a mut Rng,
    pub dropout: &'a mut DropoutLayer,
}

/// Trains `config.epochs` epochs of batch-size-1 steps over `instances`
/// (reshuffled every epoch) and returns the mean task loss of each epoch.
///
/// Each step: task-loss gradient (frozen rows masked) plus penalty gradient,
/// clipped by global norm, one Adam step, then the consolidation state
/// records the task-loss gradient with the applied update.
pub fn train_task(model: &mut Model, dialogs: &[Dialog], instances: &[RankingInstance], t: Trainer<'_>) -> Result<Vec<f64>> {
    if instances.is_empty() {
        return Err(Error::Config("no training instances".into()));
    }
    let index: BTreeMap<&str, &Dialog> = dialogs.iter().map(|d| (d.id.as_str(), d)).collect();
    let n = model.param_count();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut total = vec![0.0; n];
    let mut step = vec![0.0; n];
    let mut curve = Vec::with_capacity(t.config.epochs);
    for _ in 0..t.config.epochs {
        order.shuffle(t.shuffle);
        let mut sum = 0.0;
        for &i in &order {
            let inst = &instances[i];
            let dialog = index
                .get(inst.dialog_id.as_str())
                .ok_or_else(|| Error::Config(format!("instance refers to unknown dialog {:?}", inst.dialog_id)))?;
            let at = |e: Error| match e {
                Error::Numeric { index, context } => Error::Numeric {
                    index,
                    context: format!("{context} (example {}#{})", inst.dialog_id, inst.turn),
                },
                e => e,
            };
            let (loss, mut g) = model.loss_and_grad(dialog, inst, Some(&mut *t.dropout))?;
            model.params.mask_frozen(&mut g);
            total.copy_from_slice(&g);
            t.consolidation.add_penalty_grad(model.params.values(), &mut total)?;
            clip_global_norm(&mut total, t.config.clip_norm).map_err(at)?;
            t.adam.step_into(model.params.values_mut(), &total, &mut step)?;
            t.consolidation.on_step(&g, &step)?;
            if !loss.is_finite() {
                return Err(at(Error::Numeric {
                    index: 0,
                    context: "loss".into(),
                }));
            }
            sum += loss;
        }
        curve.push(sum / instances.len() as f64);
    }
    Ok(curve)
}

/// Squared log-likelihood gradients over `instances` at the current
/// parameters, without dropout.
pub fn fisher_estimate(model: &Model, dialogs: &[Dialog], instances: &[RankingInstance]) -> Result<FisherAccumulator> {
    let index: BTreeMap<&str, &Dialog> = dialogs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut acc = FisherAccumulator::new(model.param_count());
    for inst in instances {
        let dialog = index
            .get(inst.dialog_id.as_str())
            .ok_or_else(|| Error::Config(format!("instance refers to unknown dialog {:?}", inst.dialog_id)))?;
        // the log-likelihood gradient is the negated loss gradient; the sign
        // vanishes in the square
        let (_, mut g) = model.loss_and_grad(dialog, inst, None)?;
        model.params.mask_frozen(&mut g);
        acc.update(&g)?;
    }
    Ok(acc)
}

const FINAL_STAGE: u64 = 0x100;

fn dropout_for(schedule: &Schedule, stage: u64) -> Result<DropoutLayer> {
    DropoutLayer::new(
        schedule.training.dropout,
        DropoutMode::Train,
        stream(schedule.seed, Stream::Dropout, stage),
    )
}

/// Runs one scheme over all train sizes.
pub fn run_schedule(schedule: &Schedule) -> Result<RunReport> {
    run_schedule_with(schedule, &mut |_| Ok(()))
}

/// [`run_schedule`] calling `on_trained` after each train size.
pub fn run_schedule_with(schedule: &Schedule, on_trained: &mut dyn FnMut(&Trained<'_>) -> Result<()>) -> Result<RunReport> {
    schedule.validate()?;
    let (last, priors) = schedule.tasks.split_last().expect("validated");
    let mut model = Model::new(
        &schedule.encoder,
        schedule.vocab(),
        &schedule.pretrained,
        &mut stream(schedule.seed, Stream::Init, 0),
    )?;
    let n = model.param_count();
    let mut adam = Adam::new(schedule.training.adam, n);
    let mut state = schedule.consolidation_state(n)?;
    let mut curves = Vec::new();

    for (i, task) in priors.iter().enumerate() {
        let losses = train_task(
            &mut model,
            &task.dialogs,
            &task.instances,
            Trainer {
                config: &schedule.training,
                adam: &mut adam,
                consolidation: &mut state,
                shuffle: &mut stream(schedule.seed, Stream::Shuffle, i as u64),
                dropout: &mut dropout_for(schedule, i as u64)?,
            },
        )?;
        end_task(schedule, &model, task, &task.instances, &mut state)?;
        if schedule.training.reset_optimizer {
            adam.reset();
        }
        curves.push(LossCurve {
            task: task.name.clone(),
            size: None,
            losses,
        });
    }

    let inventories: Vec<Vec<String>> = schedule.eval.iter().map(EvalSet::inventory).collect();
    let mut sizes = schedule.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows = Vec::with_capacity(sizes.len());
    for size in sizes {
        let mut m = model.clone();
        let mut a = adam.clone();
        let mut st = state.clone();
        let instances = last.first_dialogs(size)?;
        let stage = FINAL_STAGE + size as u64;
        let losses = train_task(
            &mut m,
            &last.dialogs,
            &instances,
            Trainer {
                config: &schedule.training,
                adam: &mut a,
                consolidation: &mut st,
                shuffle: &mut stream(schedule.seed, Stream::Shuffle, stage),
                dropout: &mut dropout_for(schedule, stage)?,
            },
        )?;
        end_task(schedule, &m, last, &instances, &mut st)?;

        let mut accuracy = BTreeMap::new();
        for (e, inv) in schedule.eval.iter().zip(&inventories) {
            accuracy.insert(e.name.clone(), evaluate(&m, &e.dialogs, inv)?);
        }
        rows.push(ResultRow {
            scheme: schedule.scheme,
            size,
            accuracy,
            steps: instances.len() * schedule.training.epochs,
            final_loss: *losses.last().expect("epochs >= 1"),
        });
        curves.push(LossCurve {
            task: last.name.clone(),
            size: Some(size),
            losses,
        });
        on_trained(&Trained {
            scheme: schedule.scheme,
            size,
            model: &m,
            consolidation: &st,
        })?;
    }

    Ok(RunReport {
        scheme: schedule.scheme,
        seed: schedule.seed,
        fingerprint: schedule.fingerprint(),
        eval_sets: schedule.eval.iter().map(|e| e.name.clone()).collect(),
        rows,
        curves,
    })
}

fn end_task(
    schedule: &Schedule,
    model: &Model,
    task: &TaskSpec,
    instances: &[RankingInstance],
    state: &mut ConsolidationState,
) -> Result<()> {
    if schedule.consolidation.mode == Mode::FisherEwc {
        state.absorb_fisher(&fisher_estimate(model, &task.dialogs, instances)?)?;
    }
    state.on_task_end(model.params.values())
}

/// Runs `base` under each scheme.
pub fn run_sweep(base: &Schedule, schemes: &[Scheme]) -> Result<Vec<RunReport>> {
    schemes.iter().map(|&s| run_schedule(&base.for_scheme(s)?)).collect()
}

/// Sizes of the built-in two-task experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub open_close_dialogs: usize,
    pub task_train_dialogs: usize,
    pub eval_dialogs: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            open_close_dialogs: 10,
            task_train_dialogs: 40,
            eval_dialogs: 40,
        }
    }
}

pub const BASE_EVAL: &str = "task";
pub const PLUS_EVAL: &str = "task+";

/// Corpora of the two-task experiment: general conversation first, then the
/// support task, evaluated on held-out support dialogs with and without
/// spliced opening and closing exchanges.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTaskCorpora {
    pub open_close: Vec<Dialog>,
    pub task_train: Vec<Dialog>,
    pub eval_task: Vec<Dialog>,
    pub eval_plus: Vec<Dialog>,
}

impl TwoTaskCorpora {
    /// Generates all corpora from `seed`.
    pub fn generate(seed: u64, sizes: &SyntheticConfig) -> Result<Self> {
        let gen = |kind, stage, count, prefix: &str| {
            generate(&CorpusSpec::new(kind, derive_seed(seed, Stream::Generation, stage)).with_count(count).with_prefix(prefix))
        };
        let open_close = gen(GeneratorKind::OpenClose, 0, sizes.open_close_dialogs, "oc")?;
        let task_train = gen(GeneratorKind::Task, 1, sizes.task_train_dialogs, "train")?;
        let eval_task = gen(GeneratorKind::Task, 2, sizes.eval_dialogs, "eval")?;
        let eval_plus = splice_plus(&eval_task, &open_close, &mut stream(seed, Stream::Generation, 3))?;
        Ok(TwoTaskCorpora {
            open_close,
            task_train,
            eval_task,
            eval_plus,
        })
    }

    pub fn schedule(self, scheme: Scheme, seed: u64, preset: Preset) -> Result<Schedule> {
        let mut s = self.schedule_with(scheme, seed, preset.encoder(), TrainConfig::default())?;
        s.consolidation.c = preset.penalty_weight();
        Ok(s)
    }

    /// [`TwoTaskCorpora::schedule`] with explicit model and training settings;
    /// `training.distractors` sets the candidate count of every instance.
    pub fn schedule_with(self, scheme: Scheme, seed: u64, encoder: EncoderConfig, training: TrainConfig) -> Result<Schedule> {
        let k = training.distractors;
        let tasks = vec![
            TaskSpec::from_dialogs("open_close", self.open_close, k, &mut stream(seed, Stream::Sampling, 0))?,
            TaskSpec::from_dialogs("task", self.task_train, k, &mut stream(seed, Stream::Sampling, 1))?,
        ];
        let schedule = Schedule {
            scheme: Scheme::Wt,
            seed,
            encoder,
            training,
            consolidation: ConsolidationConfig::new(Mode::Off),
            tasks,
            sizes: vec![1, 2, 3, 4, 5],
            eval: vec![
                EvalSet {
                    name: BASE_EVAL.into(),
                    dialogs: self.eval_task,
                },
                EvalSet {
                    name: PLUS_EVAL.into(),
                    dialogs: self.eval_plus,
                },
            ],
            pretrained: BTreeMap::new(),
        };
        schedule.for_scheme(scheme)
    }
}

/// The built-in open_close → task experiment.
pub fn synthetic_schedule(scheme: Scheme, seed: u64, preset: Preset) -> Result<Schedule> {
    TwoTaskCorpora::generate(seed, &SyntheticConfig::default())?.schedule(scheme, seed, preset)
}
