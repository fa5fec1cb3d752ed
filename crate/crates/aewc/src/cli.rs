//! The `aewc` command line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use aewc_core::consolidation::Mode;
use aewc_core::corpus::{compute_stats, generate, Dialog};
use aewc_core::gradcheck::{run_suite, CheckConfig};
use aewc_core::harness::{evaluate, run_schedule_with, Preset, Scheme, SyntheticConfig, TwoTaskCorpora};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{parse_sizes, Overrides, RunConfig};
use crate::io::{read_corpus_spec, read_dialogs, write_dialogs, write_importance, write_instances, write_vocab};
use crate::report::{Results, Timings, RESULTS_FILE, TABLE_FILE};

#[derive(Debug, Parser)]
#[command(name = "aewc", version, about = "Continual learning for retrieval-based dialog agents")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand (each uses the ones that apply).
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Run config (TOML) for `train`, corpus spec (TOML) for `generate`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    /// Few-shot sizes: `1..5`, `1,3,5` or `2`.
    #[arg(long, global = true, value_parser = parse_size_list)]
    pub sizes: Option<SizeList>,
    /// Decay of the running importance (AEWC).
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Damping of the displacement denominator.
    #[arg(long, global = true)]
    pub zeta: Option<f64>,
    /// Penalty weight (default 0.1 on the desk preset, 0.01 on paper).
    #[arg(long, global = true)]
    pub c: Option<f64>,
    #[arg(long, global = true, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a corpus from a spec, or the built-in experiment corpora.
    Generate,
    /// Run the schedule for each scheme; write results, checkpoints and
    /// importance snapshots.
    Train {
        /// Skip writing checkpoints and importance snapshots.
        #[arg(long)]
        no_checkpoints: bool,
    },
    /// Score a checkpoint on a dialog file (ranking against the file's
    /// full action inventory).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dialogs: PathBuf,
    },
    /// Print the accuracy table of `<out>/results.json`.
    Report,
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).map_err(|e| e.to_string())
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    Preset::parse(s).map_err(|e| e.to_string())
}

/// Parsed `--sizes` value (a newtype so clap treats it as one value).
#[derive(Debug, Clone, PartialEq)]
pub struct SizeList(pub Vec<usize>);

fn parse_size_list(s: &str) -> Result<SizeList, String> {
    parse_sizes(s).map(SizeList).map_err(|e| e.to_string())
}

impl Common {
    fn out_dir(&self) -> anyhow::Result<&Path> {
        self.out.as_deref().context("--out <dir> is required")
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            preset: self.preset,
            scheme: self.scheme,
            sizes: self.sizes.clone().map(|s| s.0),
            c: self.c,
            zeta: self.zeta,
            lambda: self.lambda,
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Generate => cmd_generate(c),
        Command::Train { no_checkpoints } => cmd_train(c, !no_checkpoints).map(|_| ()),
        Command::Eval { checkpoint, dialogs } => cmd_eval(&checkpoint, &dialogs),
        Command::Report => {
            let results = Results::read(&c.out_dir()?.join(RESULTS_FILE))?;
            print!("{}", results.table());
            Ok(())
        }
        Command::Gradcheck => cmd_gradcheck(c.seed.unwrap_or(1)),
    }
}

fn print_stats(name: &str, dialogs: &[Dialog]) -> anyhow::Result<()> {
    let s = compute_stats(dialogs)?;
    println!(
        "{name:<16} {:>5} dialogs  len {:.2}  user {:.2}  system {:.2}",
        s.dialogs, s.avg_dialog_len, s.avg_user_len, s.avg_system_len
    );
    Ok(())
}

fn cmd_generate(c: &Common) -> anyhow::Result<()> {
    let out = c.out_dir()?;
    if let Some(path) = &c.config {
        let mut spec = read_corpus_spec(path)?;
        if let Some(seed) = c.seed {
            spec.seed = seed;
        }
        let dialogs = generate(&spec)?;
        let name = format!("{}.jsonl", serde_json::to_value(spec.kind)?.as_str().unwrap_or("corpus"));
        write_dialogs(&out.join(&name), &dialogs)?;
        return print_stats(&name, &dialogs);
    }
    let seed = c.seed.unwrap_or(1);
    let corpora = TwoTaskCorpora::generate(seed, &SyntheticConfig::default())?;
    for (name, d) in [
        ("open_close", &corpora.open_close),
        ("task_train", &corpora.task_train),
        ("eval_task", &corpora.eval_task),
        ("eval_task_plus", &corpora.eval_plus),
    ] {
        write_dialogs(&out.join(format!("{name}.jsonl")), d)?;
        print_stats(name, d)?;
    }
    let schedule = corpora.schedule(Scheme::Wt, seed, c.preset.unwrap_or(Preset::Desk))?;
    for t in &schedule.tasks {
        write_instances(&out.join(format!("{}.instances.jsonl", t.name)), &t.instances)?;
    }
    write_vocab(&out.join("vocab.txt"), &schedule.vocab())?;
    Ok(())
}

/// Runs every planned schedule and writes the report files into `--out`.
pub fn cmd_train(c: &Common, checkpoints: bool) -> anyhow::Result<Results> {
    let out = c.out_dir()?;
    let (config, base) = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => (RunConfig::default(), PathBuf::new()),
    };
    let plan = config.plan(&base, &c.overrides())?;
    let start = Instant::now();
    let mut runs = Vec::new();
    let mut timings = Timings::default();
    for schedule in &plan.schedules {
        let t0 = Instant::now();
        let scheme = schedule.scheme.name();
        let fingerprint = schedule.fingerprint();
        if checkpoints {
            write_vocab(&out.join("vocab").join(format!("{scheme}.txt")), &schedule.vocab())?;
        }
        let mut save = |t: &aewc_core::harness::Trained<'_>| -> aewc_core::Result<()> {
            if !checkpoints {
                return Ok(());
            }
            let stem = format!("{scheme}-size{}", t.size);
            let ckpt = Checkpoint::capture(t.model, Some(t.consolidation), &fingerprint, &format!("{scheme} size {}", t.size));
            let written = ckpt.save(&out.join("checkpoints").join(format!("{stem}.json"))).and_then(|_| {
                if t.consolidation.config.mode == Mode::Off {
                    return Ok(());
                }
                let rows = t.consolidation.importance_rows(&t.model.params)?;
                write_importance(&out.join("importance").join(format!("{stem}.tsv")), &rows)
            });
            written.map_err(|e| aewc_core::Error::Contract(e.to_string()))
        };
        let report = run_schedule_with(schedule, &mut save).with_context(|| format!("training scheme {scheme}"))?;
        eprintln!("{scheme}: done in {:.1}s", t0.elapsed().as_secs_f64());
        timings.runs.push((scheme.to_string(), t0.elapsed().as_secs_f64()));
        runs.push(report);
    }
    timings.total_seconds = start.elapsed().as_secs_f64();
    let results = Results { runs };
    results.emit(out)?;
    timings.emit(out)?;
    print!("{}", results.table());
    eprintln!("wrote {} and {}", out.join(RESULTS_FILE).display(), out.join(TABLE_FILE).display());
    Ok(results)
}

fn cmd_eval(checkpoint: &Path, dialogs: &Path) -> anyhow::Result<()> {
    let (model, _) = Checkpoint::load(checkpoint)?.restore()?;
    let dialogs = read_dialogs(dialogs)?;
    let inventory = aewc_core::corpus::action_inventory(&dialogs);
    let acc = evaluate(&model, &dialogs, &inventory)?;
    println!("accuracy {:.4} over {} dialogs, {} actions", acc, dialogs.len(), inventory.len());
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> anyhow::Result<()> {
    let config = CheckConfig::default();
    let start = Instant::now();
    let report = run_suite(seed, &config)?;
    for (name, n) in report.counts() {
        let worst = report
            .trials
            .iter()
            .filter(|t| t.name == name)
            .map(|t| t.worst)
            .fold(0.0, f64::max);
        println!("{name:<18} {n:>3} trials  worst rel. err {worst:.2e}");
    }
    println!(
        "{} trials in {:.2}s, tolerance {:.0e}",
        report.trials.len(),
        start.elapsed().as_secs_f64(),
        config.tolerance
    );
    if !report.passed() {
        for t in report.failures() {
            eprintln!("FAILED {t:?}");
        }
        bail!("gradient check failed");
    }
    Ok(())
}
