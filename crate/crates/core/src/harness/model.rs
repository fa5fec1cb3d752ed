use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Dialog, RankingInstance};
use crate::encoder::{Encoder, EncoderConfig};
use crate::layers::DropoutLayer;
use crate::params::ParamStore;
use crate::ranker::{argmax, ranking_loss, BilinearScorer};
use crate::rng::Rng;
use crate::tensor::{kernels, Tape, Var};
use crate::text::Vocab;
use crate::{Error, Result};

/// Encoder plus ranker over one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    encoder: Encoder,
    scorer: BilinearScorer,
}

impl Model {
    pub fn new(config: &EncoderConfig, vocab: Vocab, pretrained: &BTreeMap<String, Vec<f64>>, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamStore::new();
        let encoder = Encoder::register_with_vectors(&mut params, config, &vocab, pretrained, rng)?;
        let scorer = BilinearScorer::register(&mut params, config.state_hidden, config.utterance_dim(), rng)?;
        Ok(Model {
            config: config.clone(),
            vocab,
            params,
            encoder,
            scorer,
        })
    }

    /// Rebuilds a model around stored parameters (e.g. from a checkpoint).
    pub fn from_parts(config: EncoderConfig, vocab: Vocab, params: ParamStore) -> Result<Self> {
        let encoder = Encoder::lookup(&params, &config)?;
        let scorer = BilinearScorer::lookup(&params)?;
        if scorer.state_dim != config.state_hidden || scorer.action_dim != config.utterance_dim() {
            return Err(Error::Config("stored ranker matrix does not match the config".into()));
        }
        let rows = params.entry(params.require("word_emb")?).shape.rows();
        if rows != vocab.word_count() {
            return Err(Error::Config(alloc::format!(
                "word table has {rows} rows but the vocabulary has {} words",
                vocab.word_count()
            )));
        }
        Ok(Model {
            config,
            vocab,
            params,
            encoder,
            scorer,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Ranking loss of one instance and its gradient over all parameters.
    pub fn loss_and_grad(
        &self,
        dialog: &Dialog,
        instance: &RankingInstance,
        dropout: Option<&mut DropoutLayer>,
    ) -> Result<(f64, Vec<f64>)> {
        let tape = Tape::new();
        let loss = self.loss_on(&tape, dialog, instance, dropout)?;
        let grads = tape.backward(loss)?;
        Ok((loss.item(), grads.flat(self.params.len())))
    }

    /// Records the ranking loss of `instance` on `tape`.
    pub fn loss_on<'t>(
        &self,
        tape: &'t Tape,
        dialog: &Dialog,
        instance: &RankingInstance,
        dropout: Option<&mut DropoutLayer>,
    ) -> Result<Var<'t>> {
        if dialog.id != instance.dialog_id {
            return Err(Error::Contract(alloc::format!(
                "instance of dialog {} paired with dialog {}",
                instance.dialog_id, dialog.id
            )));
        }
        let mut pass = self.encoder.begin(tape, &self.params, &self.vocab, dropout);
        let state = pass.encode_prefix(&dialog.turns, instance.turn)?;
        let s = pass.regularize_state(state.s)?;
        let scorer = self.scorer.bind(tape, &self.params);
        ranking_loss(&scorer, &mut pass, s, instance)
    }

    /// Per-turn predicted indices into `inventory` for each dialog.
    pub fn predict_dialogs(&self, dialogs: &[Dialog], inventory: &[String]) -> Result<Vec<Vec<usize>>> {
        if inventory.is_empty() {
            return Err(Error::Domain {
                op: "predict",
                detail: "empty action inventory".into(),
            });
        }
        let tape = Tape::new();
        let mut pass = self.encoder.begin(&tape, &self.params, &self.vocab, None);
        let scorer = self.scorer.bind(&tape, &self.params);
        let mut actions = Vec::with_capacity(inventory.len());
        for a in inventory {
            actions.push(pass.embed_utterance(a)?);
        }
        let stacked = tape.stack(&actions)?.to_tensor();
        let m = scorer.matrix().to_tensor();
        let mut out = Vec::with_capacity(dialogs.len());
        for d in dialogs {
            let states = pass.encode_turns(&d.turns)?;
            let mut picks = Vec::with_capacity(states.len());
            for st in states {
                // sᵀM, then one score per inventory row
                let r = kernels::matmul(&st.s.value(), m.data(), 1, m.shape().rows(), m.shape().cols());
                let scores = kernels::matvec(stacked.data(), &r, inventory.len(), r.len());
                picks.push(argmax(&scores)?);
            }
            out.push(picks);
        }
        Ok(out)
    }
}

/// Fraction of turns whose system action is ranked first among `inventory`.
pub fn evaluate(model: &Model, dialogs: &[Dialog], inventory: &[String]) -> Result<f64> {
    accuracy(dialogs, inventory, &model.predict_dialogs(dialogs, inventory)?)
}

/// Fraction of turns whose pick (an index into `inventory`) is the turn's
/// system action.
pub fn accuracy(dialogs: &[Dialog], inventory: &[String], picks: &[Vec<usize>]) -> Result<f64> {
    let index: BTreeMap<&str, usize> = inventory.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let (mut correct, mut total) = (0usize, 0usize);
    for (d, p) in dialogs.iter().zip(picks) {
        for (t, &pick) in d.turns.iter().zip(p) {
            total += 1;
            if index.get(t.system.as_str()) == Some(&pick) {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Domain {
            op: "evaluate",
            detail: "no turns to evaluate".into(),
        });
    }
    Ok(correct as f64 / total as f64)
}
