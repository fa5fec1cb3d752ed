//! Acceptance suite: one line per criterion, `[PASS]` or `[FAIL]`, with the
//! measured values next to their pinned thresholds. Exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use aewc_core::consolidation::{ConsolidationConfig, ConsolidationState, Mode};
use aewc_core::corpus::{build_instances, compute_stats, generate, splice_plus, CorpusSpec, Dialog, GeneratorKind, Turn};
use aewc_core::encoder::EncoderConfig;
use aewc_core::gradcheck::{run_suite, CheckConfig};
use aewc_core::harness::{
    fisher_estimate, run_schedule, run_schedule_with, train_task, Model, Preset, RunReport, Schedule, Scheme,
    SyntheticConfig, TaskSpec, TrainConfig, Trainer, TwoTaskCorpora, BASE_EVAL, PLUS_EVAL,
};
use aewc_core::layers::{DropoutLayer, DropoutMode};
use aewc_core::optim::{clip_global_norm, global_norm, Adam, AdamConfig};
use aewc_core::params::ParamStore;
use aewc_core::ranker::{argmax, distribution, BilinearScorer};
use aewc_core::rng::{stream, Stream};
use aewc_core::tensor::{Tape, Tensor, Var};
use aewc_core::text::Vocab;
use anyhow::{ensure, Result};
use rand::Rng as _;
use sha2::{Digest, Sha256};

/// Pinned thresholds.
mod pinned {
    pub const FD_TOLERANCE: f64 = 1e-4;
    pub const FD_MIN_TRIALS: usize = 100;
    pub const FD_SECONDS: f64 = 60.0;
    pub const PATH_REL_ERROR: f64 = 0.05;
    pub const PATH_SECONDS: f64 = 1.0;
    pub const EQUIV_SECONDS: f64 = 120.0;
    pub const FLAT_FISHER_MAX: f64 = 1e-6;
    pub const FLAT_PATH_MIN: f64 = 1e-2;
    pub const FORGET_BASE_SPREAD: f64 = 5.0;
    pub const FORGET_PLUS_GAP: f64 = 10.0;
    pub const FORGET_SEEDS: u64 = 5;
    pub const FORGET_SECONDS: f64 = 900.0;
    pub const PL_LN_N: f64 = 1e-9;
    pub const PL_SUM: f64 = 1e-12;
    pub const CLIP_NORM: f64 = 5.0;
    pub const ADAM_FIRST_STEP: f64 = 0.01;
    pub const ADAM_QUADRATIC: f64 = 0.05;
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn run(id: usize, name: &str, budget: Option<f64>, f: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let result = f();
    let secs = start.elapsed().as_secs_f64();
    let (passed, detail) = match result {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e:#}")),
    };
    let in_time = budget.is_none_or(|b| secs < b);
    let timing = match budget {
        Some(b) => format!("{secs:.1}s < {b:.0}s"),
        None => format!("{secs:.1}s"),
    };
    let ok = passed && in_time;
    println!("[{}] AC-{id} {name}: {detail} ({timing})", if ok { "PASS" } else { "FAIL" });
    ok
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn ac1() -> Result<Outcome> {
    let config = CheckConfig::default();
    ensure!(config.tolerance == pinned::FD_TOLERANCE);
    let report = run_suite(1, &config)?;
    let n = report.trials.len();
    let worst = report.worst().map_or(0.0, |t| t.worst);
    outcome(
        report.passed() && n >= pinned::FD_MIN_TRIALS,
        format!("{n} trials (>= {}), worst rel. err {worst:.1e} < {:.0e}", pinned::FD_MIN_TRIALS, pinned::FD_TOLERANCE),
    )
}

/// Gradient descent on ½a(θ−t)² while the importance records each step.
/// Returns the state after the task boundary, ω before it, and θ.
fn descend(lambda: f64) -> Result<(ConsolidationState, f64, f64)> {
    let (a, target, lr) = (2.0, 3.0, 0.01);
    let mut config = ConsolidationConfig::new(Mode::Aewc);
    config.lambda = lambda;
    let mut state = ConsolidationState::new(config, 1)?;
    let mut theta = [0.0f64];
    for _ in 0..500 {
        let g = [a * (theta[0] - target)];
        let step = [-lr * g[0]];
        theta[0] += step[0];
        state.on_step(&g, &step)?;
    }
    let omega = state.omega[0];
    state.on_task_end(&theta)?;
    Ok((state, omega, theta[0]))
}

/// With λ = 1 the accumulated ω must match the loss actually shed. The
/// decayed settings are reported alongside; they forget early steps by design.
fn ac2() -> Result<Outcome> {
    let loss = |x: f64| (x - 3.0) * (x - 3.0);
    let (state, omega, theta) = descend(1.0)?;
    let decrease = loss(0.0) - loss(theta);
    let rel = (omega - decrease).abs() / decrease;
    let expected = omega / (theta * theta + state.config.zeta);
    let importance_ok = (state.importance[0] - expected).abs() <= 1e-12 * expected;
    let mut decayed = Vec::new();
    for lambda in [0.999, 0.99] {
        let (_, w, _) = descend(lambda)?;
        decayed.push(format!("λ={lambda}: ω {w:.4}"));
    }
    outcome(
        rel < pinned::PATH_REL_ERROR && importance_ok,
        format!(
            "λ=1: ω {omega:.4} vs loss decrease {decrease:.4}, rel. err {rel:.2e} < {:.2}; Ω = ω/(Δ²+ζ) {}; {}",
            pinned::PATH_REL_ERROR,
            if importance_ok { "holds" } else { "violated" },
            decayed.join(", ")
        ),
    )
}

/// Parameters and importance after every train size.
fn trace(s: &Schedule) -> Result<(RunReport, Vec<(Vec<u64>, Vec<u64>)>)> {
    let mut out = Vec::new();
    let report = run_schedule_with(s, &mut |t| {
        out.push((bits(t.model.params.values()), bits(&t.consolidation.importance)));
        Ok(())
    })?;
    Ok((report, out))
}

fn same_run(a: &(RunReport, Vec<(Vec<u64>, Vec<u64>)>), b: &(RunReport, Vec<(Vec<u64>, Vec<u64>)>), importance: bool) -> bool {
    let rows = a.0.rows.len() == b.0.rows.len()
        && a.0.rows.iter().zip(&b.0.rows).all(|(x, y)| {
            x.accuracy == y.accuracy && x.final_loss.to_bits() == y.final_loss.to_bits() && x.steps == y.steps
        });
    let curves = a.0.curves.len() == b.0.curves.len()
        && a.0.curves.iter().zip(&b.0.curves).all(|(x, y)| bits(&x.losses) == bits(&y.losses));
    let states = a.1.len() == b.1.len() && a.1.iter().zip(&b.1).all(|(x, y)| x.0 == y.0 && (!importance || x.1 == y.1));
    rows && curves && states
}

/// The desk-preset experiment with a shortened epoch count (the identities
/// hold step by step, so the epoch count does not matter).
fn ac3() -> Result<Outcome> {
    let corpora = TwoTaskCorpora::generate(1, &SyntheticConfig::default())?;
    let training = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let wt = corpora.schedule_with(Scheme::Wt, 1, Preset::Desk.encoder(), training.clone())?;

    let mut aewc_c0 = wt.for_scheme(Scheme::Aewc)?;
    aewc_c0.consolidation.c = 0.0;
    let transfer = same_run(&trace(&wt)?, &trace(&aewc_c0)?, false);

    let mut undecayed = wt.for_scheme(Scheme::Aewc)?;
    undecayed.consolidation.lambda = 1.0;
    let mut path = undecayed.clone();
    path.consolidation.mode = Mode::PathIntegral;
    let integral = same_run(&trace(&undecayed)?, &trace(&path)?, true);
    outcome(
        transfer && integral,
        format!(
            "AEWC(c=0) = WT: {transfer}; AEWC(λ=1) = path integral: {integral} (bitwise, sizes 1-5, {} epochs)",
            training.epochs
        ),
    )
}

/// A toy ranking model trained until its loss is flat: the Fisher estimate at
/// the optimum vanishes, the path integral remembers the descent.
fn ac4() -> Result<Outcome> {
    let actions: Vec<String> = [
        "we can reset it",
        "hello how can i help",
        "goodbye",
        "let me connect you",
        "try the link",
        "your account is locked",
        "update your phone number",
        "enter the code",
        "was that helpful",
        "sorry about that",
    ]
    .map(String::from)
    .to_vec();
    let dialogs = vec![Dialog {
        id: "toy".into(),
        turns: vec![Turn::new("i forgot my password", &actions[0]), Turn::new("thanks bye", &actions[2])],
        source: "toy".into(),
    }];
    let task = TaskSpec {
        name: "toy".into(),
        instances: build_instances(&dialogs, &actions, 9, &mut stream(1, Stream::Sampling, 0))?,
        dialogs,
    };
    let vocab = Vocab::build(actions.iter().map(String::as_str).chain(["i forgot my password", "thanks bye"]));
    let mut model = Model::new(&EncoderConfig::tiny(), vocab, &BTreeMap::new(), &mut stream(1, Stream::Init, 0))?;
    let n = model.param_count();
    let config = TrainConfig {
        epochs: 1500,
        dropout: 0.0,
        adam: AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut path = ConsolidationState::new(ConsolidationConfig::new(Mode::PathIntegral), n)?;
    let start = model.params.values().to_vec();
    let curve = train_task(
        &mut model,
        &task.dialogs,
        &task.instances,
        Trainer {
            config: &config,
            adam: &mut Adam::new(config.adam, n),
            consolidation: &mut path,
            shuffle: &mut stream(1, Stream::Shuffle, 0),
            dropout: &mut DropoutLayer::new(0.0, DropoutMode::Train, stream(1, Stream::Dropout, 0))?,
        },
    )?;
    path.on_task_end(model.params.values())?;
    let mut fisher = ConsolidationState::new(ConsolidationConfig::new(Mode::FisherEwc), n)?;
    fisher.absorb_fisher(&fisher_estimate(&model, &task.dialogs, &task.instances)?)?;
    fisher.on_task_end(model.params.values())?;

    let fisher_max = fisher.importance.iter().cloned().fold(0.0, f64::max);
    let moved: Vec<usize> = (0..n).filter(|&k| (model.params.values()[k] - start[k]).abs() > 1e-2).collect();
    let retained = moved.iter().filter(|&&k| path.importance[k] > pinned::FLAT_PATH_MIN).count();
    let path_max = path.importance.iter().cloned().fold(0.0, f64::max);
    outcome(
        fisher_max < pinned::FLAT_FISHER_MAX && retained > 0,
        format!(
            "final loss {:.1e}; Fisher Ω max {fisher_max:.1e} < {:.0e}; path Ω > {:.0e} on {retained} of {} moved params (max {path_max:.2})",
            curve.last().unwrap(),
            pinned::FLAT_FISHER_MAX,
            pinned::FLAT_PATH_MIN,
            moved.len()
        ),
    )
}

/// Per-size accuracies in percent, indexed [scheme][size].
fn percent(reports: &[RunReport], eval: &str) -> Vec<Vec<f64>> {
    reports.iter().map(|r| r.rows.iter().map(|x| 100.0 * x.accuracy[eval]).collect()).collect()
}

fn ac5() -> Result<Outcome> {
    let schemes = [Scheme::Nt, Scheme::Wt, Scheme::Aewc];
    let (mut a_votes, mut b_votes) = (0, 0);
    let mut lines = Vec::new();
    for seed in 1..=pinned::FORGET_SEEDS {
        let corpora = TwoTaskCorpora::generate(seed, &SyntheticConfig::default())?;
        let reports = schemes
            .iter()
            .map(|&s| run_schedule(&corpora.clone().schedule(s, seed, Preset::Desk)?))
            .collect::<aewc_core::Result<Vec<_>>>()?;
        let base = percent(&reports, BASE_EVAL);
        let plus = percent(&reports, PLUS_EVAL);
        let spread = (0..base[0].len())
            .map(|i| {
                let col: Vec<f64> = base.iter().map(|r| r[i]).collect();
                col.iter().cloned().fold(f64::MIN, f64::max) - col.iter().cloned().fold(f64::MAX, f64::min)
            })
            .fold(0.0, f64::max);
        let gap = plus[2].last().unwrap() - plus[1].last().unwrap();
        let a = spread <= pinned::FORGET_BASE_SPREAD;
        let b = gap >= pinned::FORGET_PLUS_GAP;
        a_votes += a as u64;
        b_votes += b as u64;
        let means: Vec<String> = base.iter().map(|r| format!("{:.1}", r.iter().sum::<f64>() / r.len() as f64)).collect();
        lines.push(format!(
            "seed {seed}: worst per-size base spread {spread:.1} (mean base nt/wt/aewc {}), plus gap at 5 {gap:+.1}",
            means.join("/")
        ));
    }
    let majority = pinned::FORGET_SEEDS / 2 + 1;
    eprintln!("{}", lines.join("\n"));
    outcome(
        a_votes >= majority && b_votes >= majority,
        format!(
            "(a) base within {} points on {a_votes}/{} seeds; (b) AEWC+ >= WT+ + {} at size 5 on {b_votes}/{} seeds; need {majority}",
            pinned::FORGET_BASE_SPREAD,
            pinned::FORGET_SEEDS,
            pinned::FORGET_PLUS_GAP,
            pinned::FORGET_SEEDS
        ),
    )
}

fn ac6() -> Result<Outcome> {
    let dim = 6;
    let mut rng = stream(6, Stream::Sampling, 0);
    let mut store = ParamStore::new();
    let scorer = BilinearScorer::register(&mut store, dim, dim, &mut stream(6, Stream::Init, 0))?;
    let tape = Tape::new();
    let bound = scorer.bind(&tape, &store);
    let random = |rng: &mut aewc_core::rng::Rng, scale: f64| -> Vec<f64> { (0..dim).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect() };

    let mut worst_ln = 0.0f64;
    for n in 1..=50 {
        let s: Var<'_> = tape.var(Tensor::vector(random(&mut rng, 3.0)));
        let a = Tensor::vector(random(&mut rng, 3.0));
        let cands: Vec<Var<'_>> = (0..n).map(|_| tape.var(a.clone())).collect();
        let loss = bound.loss_truth_first(s, &cands)?.item();
        worst_ln = worst_ln.max((loss - (n as f64).ln()).abs());
    }

    let mut worst_sum = 0.0f64;
    let mut shift_ok = true;
    for trial in 0..500 {
        let n = 1 + trial % 40;
        let scale = [1e-3, 1.0, 30.0, 300.0][trial % 4];
        let scores: Vec<f64> = (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let p = distribution(&scores)?;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        let pick = argmax(&scores)?;
        for shift in [-1e3, -1.0, 0.5, 7.0, 1e3] {
            let shifted: Vec<f64> = scores.iter().map(|x| x + shift).collect();
            shift_ok &= argmax(&shifted)? == pick;
        }
        let s = tape.var(Tensor::vector(random(&mut rng, 1.0)));
        let cands: Vec<Var<'_>> = (0..n).map(|_| tape.var(Tensor::vector(random(&mut rng, 1.0)))).collect();
        let q = bound.candidate_distribution(s, &cands)?.value();
        worst_sum = worst_sum.max((q.iter().sum::<f64>() - 1.0).abs());
        let direct = bound.scores(s, &cands)?.value();
        shift_ok &= bound.predict(s, &cands)? == argmax(&direct)?;
    }
    outcome(
        worst_ln < pinned::PL_LN_N && worst_sum < pinned::PL_SUM && shift_ok,
        format!(
            "uniform loss - ln n <= {worst_ln:.1e} < {:.0e} (n = 1..50); |Σp - 1| <= {worst_sum:.1e} < {:.0e}; predict shift-invariant: {shift_ok}",
            pinned::PL_LN_N,
            pinned::PL_SUM
        ),
    )
}

fn digest_dir(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, aewc_core::harness::hex_lower(&Sha256::digest(fs::read(&path)?)));
        }
    }
    Ok(out)
}

fn aewc_bin(args: &[&str]) -> Result<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_aewc")).args(args).output()?;
    ensure!(out.status.success(), "aewc {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn ac7() -> Result<Outcome> {
    let oc = generate(&CorpusSpec::new(GeneratorKind::OpenClose, 7))?;
    let oc_stats = compute_stats(&oc)?;
    let task = generate(&CorpusSpec::new(GeneratorKind::Task, 8).with_count(200))?;
    let plus = splice_plus(&task, &oc, &mut stream(7, Stream::Generation, 3))?;
    let each_two = task.iter().zip(&plus).all(|(t, p)| p.len() == t.len() + 2);
    let (ts, ps) = (compute_stats(&task)?, compute_stats(&plus)?);
    let mean_shift = ps.avg_dialog_len - ts.avg_dialog_len;

    let dir = tempfile::tempdir()?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        aewc_bin(&["generate", "--seed", "7", "--out", d.to_str().unwrap()])?;
    }
    let (da, db) = (digest_dir(&a)?, digest_dir(&b)?);
    let identical = !da.is_empty() && da == db;
    outcome(
        oc.len() == 10 && oc_stats.avg_dialog_len == 2.0 && each_two && (mean_shift - 2.0).abs() < 1e-12 && identical,
        format!(
            "open_close: {} dialogs, mean length {}; splice: +2 on every dialog {each_two}, mean {:.2} -> {:.2}; {} generated files byte-identical: {identical}",
            oc.len(),
            oc_stats.avg_dialog_len,
            ts.avg_dialog_len,
            ps.avg_dialog_len,
            da.len()
        ),
    )
}

fn ac8() -> Result<Outcome> {
    let mut rng = stream(8, Stream::Sampling, 0);
    let mut worst_clip = 0.0f64;
    for trial in 0..1000 {
        let scale = 10f64.powi(trial % 9 - 4);
        let mut g: Vec<f64> = (0..1 + trial as usize % 50).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        clip_global_norm(&mut g, pinned::CLIP_NORM)?;
        worst_clip = worst_clip.max(global_norm(&g));
    }
    let clip_ok = worst_clip <= pinned::CLIP_NORM;

    let config = AdamConfig::default();
    let mut adam = Adam::new(config, 100);
    let mut theta = vec![0.0; 100];
    let g: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let step = adam.step(&mut theta, &g)?;
    let first = step.iter().map(|d| (d.abs() - config.lr).abs() / config.lr).fold(0.0, f64::max);

    // ½θ² from θ = 1 at lr 0.01; the reference value comes from an
    // independent scalar implementation of the same update.
    let mut adam = Adam::new(
        AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        },
        1,
    );
    let mut x = [1.0];
    for _ in 0..200 {
        let g = [x[0]];
        adam.step(&mut x, &g)?;
    }
    let reference = 0.0155724863413461;
    outcome(
        clip_ok && first < pinned::ADAM_FIRST_STEP && x[0].abs() < pinned::ADAM_QUADRATIC && (x[0] - reference).abs() < 1e-9,
        format!(
            "post-clip norm <= {worst_clip:.6} <= {}; first step |Δ|/lr - 1 <= {first:.1e} < {:.2}; 200 steps: |θ| = {:.4} < {} (reference {reference:.4})",
            pinned::CLIP_NORM,
            pinned::ADAM_FIRST_STEP,
            x[0].abs(),
            pinned::ADAM_QUADRATIC
        ),
    )
}

fn ac9() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "seed = 9\npreset = \"desk\"\nschemes = [\"nt\", \"wt\", \"aewc\"]\nsizes = [1, 2, 3, 4, 5]\n\n[training]\nepochs = 3\n",
    )?;
    let mut digests = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        aewc_bin(&["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
        let d = digest_dir(&out)?;
        ensure!(d.contains_key("results.json"), "no results file written");
        digests.push(d);
    }
    let results_equal = digests[0]["results.json"] == digests[1]["results.json"];
    let table_equal = digests[0]["table.txt"] == digests[1]["table.txt"];
    outcome(
        results_equal && table_equal,
        format!(
            "results.json sha256 {}… equal: {results_equal}; table.txt equal: {table_equal}",
            &digests[0]["results.json"][..16]
        ),
    )
}

fn main() {
    println!("acceptance criteria");
    let results = [
        run(1, "finite-difference gradients", Some(pinned::FD_SECONDS), ac1),
        run(2, "path-integral exactness", Some(pinned::PATH_SECONDS), ac2),
        run(3, "bit-exact scheme identities", Some(pinned::EQUIV_SECONDS), ac3),
        run(4, "flat-loss importance", None, ac4),
        run(5, "forgetting reproduction", Some(pinned::FORGET_SECONDS), ac5),
        run(6, "Plackett-Luce analytics", None, ac6),
        run(7, "corpus statistics and determinism", None, ac7),
        run(8, "optimizer contracts", None, ac8),
        run(9, "end-to-end determinism", None, ac9),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
