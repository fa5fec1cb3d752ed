//! Results files: `results.json` (machine-readable), `table.txt` (the
//! two-panel accuracy table) and `timings.json` (wall-clock times, kept out
//! of the results so that reruns produce identical files).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use aewc_core::harness::RunReport;
use serde::{Deserialize, Serialize};

use crate::io::{read_text, write_text};
use crate::{Error, Result};

pub const RESULTS_FILE: &str = "results.json";
pub const TABLE_FILE: &str = "table.txt";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub runs: Vec<RunReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// (scheme name, seconds).
    pub runs: Vec<(String, f64)>,
    pub total_seconds: f64,
}

impl Results {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(path, &read_text(path)?)
    }

    /// Accuracy table in percent: one row per train size (ascending), one
    /// panel per evaluation set, one column per scheme.
    pub fn table(&self) -> String {
        let mut eval_sets: Vec<&str> = Vec::new();
        for r in &self.runs {
            for e in &r.eval_sets {
                if !eval_sets.contains(&e.as_str()) {
                    eval_sets.push(e);
                }
            }
        }
        let sizes: BTreeSet<usize> = self.runs.iter().flat_map(|r| r.rows.iter().map(|x| x.size)).collect();
        let schemes: Vec<String> = self.runs.iter().map(|r| r.scheme.name().to_uppercase()).collect();
        let width = 8;
        let panel = schemes.len() * width;

        let mut out = String::new();
        let seeds: BTreeSet<u64> = self.runs.iter().map(|r| r.seed).collect();
        let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
        writeln!(out, "seed {}", seeds.join(",")).unwrap();
        for r in &self.runs {
            writeln!(out, "{} fingerprint {}", r.scheme.name(), r.fingerprint).unwrap();
        }
        out.push('\n');
        write!(out, "{:<10}", "").unwrap();
        for e in &eval_sets {
            write!(out, " | {e:^panel$}").unwrap();
        }
        out.push('\n');
        write!(out, "{:<10}", "train size").unwrap();
        for _ in &eval_sets {
            out.push_str(" | ");
            for s in &schemes {
                write!(out, "{s:>width$}").unwrap();
            }
        }
        out.push('\n');
        for size in sizes {
            write!(out, "{size:<10}").unwrap();
            for e in &eval_sets {
                out.push_str(" | ");
                for r in &self.runs {
                    let acc = r.rows.iter().find(|x| x.size == size).and_then(|x| x.accuracy.get(*e));
                    match acc {
                        Some(a) => write!(out, "{:>width$.2}", 100.0 * a).unwrap(),
                        None => write!(out, "{:>width$}", "-").unwrap(),
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `results.json` and `table.txt` into `dir`.
    pub fn emit(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(RESULTS_FILE), &self.to_json())?;
        write_text(&dir.join(TABLE_FILE), &self.table())
    }
}

impl Timings {
    pub fn emit(&self, dir: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self).expect("timings serialize");
        s.push('\n');
        write_text(&dir.join(TIMINGS_FILE), &s)
    }
}
