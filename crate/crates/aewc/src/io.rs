//! Readers and writers for the on-disk formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use aewc_core::consolidation::ImportanceRow;
use aewc_core::corpus::{CorpusSpec, Dialog, RankingInstance};
use aewc_core::text::Vocab;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `contents`, creating missing parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    lines(&text)
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| parse_err(path, n, e)))
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Reads a dialog file and validates every record.
pub fn read_dialogs(path: &Path) -> Result<Vec<Dialog>> {
    let dialogs: Vec<Dialog> = read_jsonl(path)?;
    for (i, d) in dialogs.iter().enumerate() {
        d.validate().map_err(|e| parse_err(path, i + 1, e))?;
    }
    Ok(dialogs)
}

pub fn write_dialogs(path: &Path, dialogs: &[Dialog]) -> Result<()> {
    write_text(path, &to_jsonl(dialogs))
}

pub fn read_instances(path: &Path) -> Result<Vec<RankingInstance>> {
    let instances: Vec<RankingInstance> = read_jsonl(path)?;
    for (i, r) in instances.iter().enumerate() {
        r.validate().map_err(|e| parse_err(path, i + 1, e))?;
    }
    Ok(instances)
}

pub fn write_instances(path: &Path, instances: &[RankingInstance]) -> Result<()> {
    write_text(path, &to_jsonl(instances))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_text(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_corpus_spec(path: &Path) -> Result<CorpusSpec> {
    read_toml(path)
}

pub fn write_corpus_spec(path: &Path, spec: &CorpusSpec) -> Result<()> {
    let text = toml::to_string(spec).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_text(path, &text)
}

/// Word vectors: a token followed by its components on each line. All
/// vectors must share one dimension; a repeated token is an error.
pub fn parse_pretrained(path: &Path, text: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    let mut dim = None;
    for (n, line) in lines(text) {
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("line is not blank");
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(path, n, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, n, "expected a token followed by finite numbers"));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(path, n, format!("{} components, expected {d}", values.len())))
            }
            _ => {}
        }
        if out.insert(token.to_string(), values).is_some() {
            return Err(parse_err(path, n, format!("duplicate token {token:?}")));
        }
    }
    Ok(out)
}

pub fn read_pretrained(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    parse_pretrained(path, &read_text(path)?)
}

pub fn write_pretrained(path: &Path, vectors: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    for (token, v) in vectors {
        out.push_str(token);
        for x in v {
            write!(out, " {x}").expect("writing to a String");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Sorted tokens, one per line (reserved symbols are implicit).
pub fn vocab_dump(vocab: &Vocab) -> String {
    vocab.tokens().iter().map(|t| format!("{t}\n")).collect()
}

pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    write_text(path, &vocab_dump(vocab))
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = read_text(path)?;
    Ok(Vocab::from_words(text.lines().map(str::trim).filter(|l| !l.is_empty())))
}

const IMPORTANCE_HEADER: &str = "param\tstart\tend\tindex\tomega";

/// One row per scalar parameter: name, the parameter's flat index range,
/// the scalar's flat index and its Ω.
pub fn importance_table(rows: &[ImportanceRow]) -> String {
    let mut out = String::from(IMPORTANCE_HEADER);
    out.push('\n');
    for r in rows {
        for (k, v) in r.values.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}\t{v:e}", r.name, r.start, r.end, r.start + k).expect("writing to a String");
        }
    }
    out
}

pub fn write_importance(path: &Path, rows: &[ImportanceRow]) -> Result<()> {
    write_text(path, &importance_table(rows))
}

pub fn read_importance(path: &Path) -> Result<Vec<ImportanceRow>> {
    let text = read_text(path)?;
    let mut it = lines(&text);
    match it.next() {
        Some((_, h)) if h == IMPORTANCE_HEADER => {}
        _ => return Err(parse_err(path, 1, "missing importance header")),
    }
    let mut out: Vec<ImportanceRow> = Vec::new();
    for (n, line) in it {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(parse_err(path, n, "expected 5 tab-separated columns"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| parse_err(path, n, e));
        let (start, end, index) = (num(f[1])?, num(f[2])?, num(f[3])?);
        let omega: f64 = f[4].parse().map_err(|e| parse_err(path, n, e))?;
        let fresh = match out.last() {
            Some(r) => r.name != f[0] || r.start != start,
            None => true,
        };
        if fresh {
            out.push(ImportanceRow {
                name: f[0].to_string(),
                start,
                end,
                values: Vec::new(),
            });
        }
        let row = out.last_mut().expect("pushed above");
        if row.end != end || index != start + row.values.len() || index >= end {
            return Err(parse_err(path, n, "index outside or out of order for its range"));
        }
        row.values.push(omega);
    }
    if let Some(r) = out.iter().find(|r| r.values.len() != r.end - r.start) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("parameter {} has {} of {} values", r.name, r.values.len(), r.end - r.start),
        });
    }
    Ok(out)
}
