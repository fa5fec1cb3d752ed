//! Dialogs, corpus statistics, splicing and ranking-instance construction.

mod generate;

pub use generate::{
    generate, generate_hh_like, generate_open_close, generate_task, generate_task_plus, CorpusSpec, Exchange,
    GeneratorKind, PoolOverrides, Problem,
};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ranker::negative_sample;
use crate::rng::Rng;
use crate::text::tokenize;
use crate::{Error, Result};

/// One exchange: a user utterance and the system action that answers it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, String)", into = "(String, String)")]
pub struct Turn {
    pub user: String,
    pub system: String,
}

impl Turn {
    pub fn new(user: impl Into<String>, system: impl Into<String>) -> Self {
        Turn {
            user: user.into(),
            system: system.into(),
        }
    }
}

impl From<(String, String)> for Turn {
    fn from((user, system): (String, String)) -> Self {
        Turn { user, system }
    }
}

impl From<Turn> for (String, String) {
    fn from(t: Turn) -> Self {
        (t.user, t.system)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialog {
    pub id: String,
    pub turns: Vec<Turn>,
    pub source: String,
}

impl Dialog {
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::Contract(format!("dialog {} has no turns", self.id)));
        }
        if let Some(i) = self.turns.iter().position(|t| t.system.trim().is_empty()) {
            return Err(Error::Contract(format!("dialog {} turn {} has an empty system action", self.id, i + 1)));
        }
        Ok(())
    }
}

/// One ranking example: choose the system action of `turn` (1-based) of
/// dialog `dialog_id` among `truth` and its distractors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingInstance {
    pub dialog_id: String,
    pub turn: usize,
    pub truth: String,
    pub distractors: Vec<String>,
}

impl RankingInstance {
    /// Truth first, then distractors.
    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        core::iter::once(self.truth.as_str()).chain(self.distractors.iter().map(String::as_str))
    }

    /// Truth absent from the distractors and no duplicates.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in self.candidates() {
            if !seen.insert(c) {
                return Err(Error::Contract(format!(
                    "instance {}#{} repeats candidate {c:?}",
                    self.dialog_id, self.turn
                )));
            }
        }
        if self.turn == 0 {
            return Err(Error::Contract(format!("instance {} has turn 0", self.dialog_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dialogs: usize,
    pub avg_dialog_len: f64,
    pub avg_user_len: f64,
    pub avg_system_len: f64,
}

/// Exact means over the corpus; lengths in tokens of [`tokenize`].
pub fn compute_stats(dialogs: &[Dialog]) -> Result<CorpusStats> {
    if dialogs.is_empty() {
        return Err(Error::Domain {
            op: "compute_stats",
            detail: "empty corpus".into(),
        });
    }
    let turns: usize = dialogs.iter().map(Dialog::len).sum();
    let (mut user, mut system) = (0usize, 0usize);
    for t in dialogs.iter().flat_map(|d| &d.turns) {
        user += tokenize(&t.user).len();
        system += tokenize(&t.system).len();
    }
    let per_turn = |n: usize| if turns == 0 { 0.0 } else { n as f64 / turns as f64 };
    Ok(CorpusStats {
        dialogs: dialogs.len(),
        avg_dialog_len: turns as f64 / dialogs.len() as f64,
        avg_user_len: per_turn(user),
        avg_system_len: per_turn(system),
    })
}

/// Sorted unique system actions.
pub fn action_inventory(dialogs: &[Dialog]) -> Vec<String> {
    dialogs
        .iter()
        .flat_map(|d| d.turns.iter().map(|t| t.system.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// One instance per (dialog, turn) with `k` distractors drawn from `inventory`.
pub fn build_instances(dialogs: &[Dialog], inventory: &[String], k: usize, rng: &mut Rng) -> Result<Vec<RankingInstance>> {
    let mut out = Vec::with_capacity(dialogs.iter().map(Dialog::len).sum());
    for d in dialogs {
        for (i, t) in d.turns.iter().enumerate() {
            out.push(RankingInstance {
                dialog_id: d.id.clone(),
                turn: i + 1,
                truth: t.system.clone(),
                distractors: negative_sample(inventory, &t.system, k, rng)?,
            });
        }
    }
    Ok(out)
}

/// Prepends an opening exchange and appends a closing exchange, each taken
/// from a randomly chosen `open_close` dialog (its first and last turn).
pub fn splice_plus(task: &[Dialog], open_close: &[Dialog], rng: &mut Rng) -> Result<Vec<Dialog>> {
    if task.is_empty() || open_close.is_empty() {
        return Err(Error::Config("splice_plus needs non-empty task and open_close corpora".into()));
    }
    Ok(task
        .iter()
        .map(|d| {
            let open = &open_close[rng.random_range(0..open_close.len())];
            let close = &open_close[rng.random_range(0..open_close.len())];
            let mut turns = Vec::with_capacity(d.len() + 2);
            turns.push(open.turns[0].clone());
            turns.extend(d.turns.iter().cloned());
            turns.push(close.turns[close.len() - 1].clone());
            Dialog {
                id: format!("{}+", d.id),
                turns,
                source: format!("{}+", d.source),
            }
        })
        .collect())
}

/// Index of dialogs by id.
pub fn index_dialogs(dialogs: &[Dialog]) -> BTreeMap<&str, &Dialog> {
    dialogs.iter().map(|d| (d.id.as_str(), d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use alloc::string::ToString;
    use alloc::vec;

    fn dialog(id: &str, turns: &[(&str, &str)]) -> Dialog {
        Dialog {
            id: id.to_string(),
            turns: turns.iter().map(|(u, s)| Turn::new(*u, *s)).collect(),
            source: "test".into(),
        }
    }

    #[test]
    fn stats_simple_means() {
        let d = dialog("d", &[("a b", "x"), ("a b c d", "y z")]);
        let s = compute_stats(&[d]).unwrap();
        assert_eq!(s.dialogs, 1);
        assert_eq!(s.avg_dialog_len, 2.0);
        assert_eq!(s.avg_user_len, 3.0);
        assert_eq!(s.avg_system_len, 1.5);
        assert!(compute_stats(&[]).is_err());
    }

    #[test]
    fn turn_serializes_as_pair() {
        let d = dialog("d1", &[("hi", "hello")]);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"id":"d1","turns":[["hi","hello"]],"source":"test"}"#);
        assert_eq!(serde_json::from_str::<Dialog>(&json).unwrap(), d);
    }

    #[test]
    fn instances_per_turn() {
        let inv: Vec<String> = (0..12).map(|i| alloc::format!("act{i}")).collect();
        let ds = [
            dialog("a", &[("u", "act0"), ("v", "act1")]),
            dialog("b", &[("u", "act2")]),
        ];
        let inst = build_instances(&ds, &inv, 9, &mut stream(1, Stream::Sampling, 0)).unwrap();
        assert_eq!(inst.len(), 3);
        assert_eq!(inst[1].turn, 2);
        assert_eq!(inst[1].truth, "act1");
        for i in &inst {
            i.validate().unwrap();
            assert_eq!(i.distractors.len(), 9);
        }
    }

    #[test]
    fn splice_adds_exactly_two_turns() {
        let oc = [dialog("o1", &[("hello", "hi!"), ("thanks", "bye")])];
        let task = [dialog("t1", &[("forgot password", "reset?")])];
        let out = splice_plus(&task, &oc, &mut stream(1, Stream::Generation, 0)).unwrap();
        assert_eq!(out[0].turns.len(), 3);
        assert_eq!(out[0].turns[0].user, "hello");
        assert_eq!(out[0].turns[1], task[0].turns[0]);
        assert_eq!(out[0].turns[2].system, "bye");
        assert!(splice_plus(&[], &oc, &mut stream(1, Stream::Generation, 0)).is_err());
    }

    #[test]
    fn validate_dialog() {
        assert!(dialog("x", &[]).validate().is_err());
        assert!(dialog("x", &[("u", " ")]).validate().is_err());
        assert!(dialog("x", &[("", "s")]).validate().is_ok());
    }

    #[test]
    fn instance_validation_catches_truth_in_distractors() {
        let i = RankingInstance {
            dialog_id: "d".into(),
            turn: 1,
            truth: "a".into(),
            distractors: vec!["b".into(), "a".into()],
        };
        assert!(i.validate().is_err());
    }
}
