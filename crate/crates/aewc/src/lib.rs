//! File formats, checkpoints, reports and the command-line driver around
//! [`aewc_core`].
//!
//! Formats:
//!
//! | file | layout |
//! |---|---|
//! | dialogs | JSON Lines, `{"id", "turns": [["user", "system"], ...], "source"}` |
//! | ranking instances | JSON Lines, `{"dialog_id", "turn", "truth", "distractors"}` |
//! | corpus spec | TOML, fields of [`aewc_core::corpus::CorpusSpec`] |
//! | run config | TOML, see [`config::RunConfig`] |
//! | pretrained vectors | text, one `token f1 f2 ...` per line |
//! | vocabulary | text, one token per line, sorted |
//! | checkpoint | JSON container, see [`checkpoint`] |
//! | importance snapshot | tab-separated columns `param start end index omega` |
//! | results | `results.json`, `table.txt`, `timings.json` |

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod io;
pub mod report;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] aewc_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
