//! Hierarchical conversation encoder.
//!
//! Characters of a word run through a bidirectional LSTM; the final forward
//! and backward states are concatenated with the word's own embedding. Word
//! vectors of an utterance run through a second bidirectional LSTM whose
//! final states form the utterance embedding. User utterances and system
//! actions share this utterance encoder. A unidirectional state LSTM then
//! consumes, turn by turn, the user utterance concatenated with the
//! preceding system action.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Turn;
use crate::layers::{run_bilstm, uniform_init, BoundLstm, DropoutLayer, EmbeddingTable, LstmCell};
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::tensor::{Shape, Tape, Tensor, Var};
use crate::text::{tokenize, Vocab};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub char_dim: usize,
    pub word_dim: usize,
    /// Per direction.
    pub char_hidden: usize,
    /// Per direction.
    pub utterance_hidden: usize,
    pub state_hidden: usize,
    pub max_utterance_len: usize,
    /// Bound of the uniform initializer for embedding rows.
    pub embedding_bound: f64,
}

impl EncoderConfig {
    /// Full-size model: 8-dim characters, 100-dim words, 25/128/256 hidden units.
    pub fn paper() -> Self {
        EncoderConfig {
            char_dim: 8,
            word_dim: 100,
            char_hidden: 25,
            utterance_hidden: 128,
            state_hidden: 256,
            max_utterance_len: 20,
            embedding_bound: 0.01,
        }
    }

    /// Small model for tests and laptop-scale experiments (8/32/64 hidden).
    pub fn desk() -> Self {
        EncoderConfig {
            char_dim: 8,
            word_dim: 16,
            char_hidden: 8,
            utterance_hidden: 32,
            state_hidden: 64,
            max_utterance_len: 20,
            embedding_bound: 0.01,
        }
    }

    /// Minimal sizes (3/4/5 hidden) for finite-difference checks.
    pub fn tiny() -> Self {
        EncoderConfig {
            char_dim: 3,
            word_dim: 4,
            char_hidden: 3,
            utterance_hidden: 4,
            state_hidden: 5,
            max_utterance_len: 20,
            embedding_bound: 0.5,
        }
    }

    pub fn word_vector_dim(&self) -> usize {
        2 * self.char_hidden + self.word_dim
    }

    pub fn utterance_dim(&self) -> usize {
        2 * self.utterance_hidden
    }

    pub fn state_input_dim(&self) -> usize {
        2 * self.utterance_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.char_dim,
            self.word_dim,
            self.char_hidden,
            self.utterance_hidden,
            self.state_hidden,
            self.max_utterance_len,
        ];
        if dims.contains(&0) || !(self.embedding_bound > 0.0) {
            return Err(Error::Config(format!("invalid encoder config {self:?}")));
        }
        Ok(())
    }
}

const CHAR_EMB: &str = "char_emb";
const WORD_EMB: &str = "word_emb";
const CHAR_FWD: &str = "char_fwd";
const CHAR_BWD: &str = "char_bwd";
const UTT_FWD: &str = "utt_fwd";
const UTT_BWD: &str = "utt_bwd";
const STATE: &str = "state";

/// Parameter handles of the encoder inside a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    char_emb: EmbeddingTable,
    word_emb: EmbeddingTable,
    char_fwd: LstmCell,
    char_bwd: LstmCell,
    utt_fwd: LstmCell,
    utt_bwd: LstmCell,
    state: LstmCell,
}

impl Encoder {
    /// Registers all encoder parameters with random word vectors.
    pub fn register(store: &mut ParamStore, config: &EncoderConfig, vocab: &Vocab, rng: &mut Rng) -> Result<Self> {
        Self::register_with_vectors(store, config, vocab, &BTreeMap::new(), rng)
    }

    /// Registers all encoder parameters, seeding word rows from `pretrained`.
    ///
    /// Tokens missing from `pretrained` are drawn uniformly with a bound
    /// scaled so their standard deviation matches the pretrained entries.
    pub fn register_with_vectors(
        store: &mut ParamStore,
        config: &EncoderConfig,
        vocab: &Vocab,
        pretrained: &BTreeMap<String, Vec<f64>>,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let c = config;
        let char_emb = EmbeddingTable::register(store, CHAR_EMB, vocab.char_count(), c.char_dim, c.embedding_bound, rng)?;

        let mut bound = c.embedding_bound;
        if !pretrained.is_empty() {
            let mut n = 0usize;
            let mut sq = 0.0;
            for (tok, v) in pretrained {
                if v.len() != c.word_dim {
                    return Err(Error::Config(format!(
                        "pretrained vector for {tok:?} has {} dims, expected {}",
                        v.len(),
                        c.word_dim
                    )));
                }
                n += v.len();
                sq += v.iter().map(|x| x * x).sum::<f64>();
            }
            // U(-b, b) has standard deviation b/sqrt(3)
            let std = libm::sqrt(sq / n as f64);
            if std > 0.0 {
                bound = std * libm::sqrt(3.0);
            }
        }
        let mut init = uniform_init(vocab.word_count() * c.word_dim, bound, rng);
        for (id, tok) in vocab.tokens().iter().enumerate().map(|(i, t)| (i + 3, t)) {
            if let Some(v) = pretrained.get(tok) {
                init[id * c.word_dim..(id + 1) * c.word_dim].copy_from_slice(v);
            }
        }
        let word_emb = EmbeddingTable::register_with(store, WORD_EMB, vocab.word_count(), c.word_dim, init)?;

        let char_fwd = LstmCell::register(store, CHAR_FWD, c.char_dim, c.char_hidden, rng)?;
        let char_bwd = LstmCell::register(store, CHAR_BWD, c.char_dim, c.char_hidden, rng)?;
        let utt_fwd = LstmCell::register(store, UTT_FWD, c.word_vector_dim(), c.utterance_hidden, rng)?;
        let utt_bwd = LstmCell::register(store, UTT_BWD, c.word_vector_dim(), c.utterance_hidden, rng)?;
        let state = LstmCell::register(store, STATE, c.state_input_dim(), c.state_hidden, rng)?;
        Ok(Encoder {
            config: config.clone(),
            char_emb,
            word_emb,
            char_fwd,
            char_bwd,
            utt_fwd,
            utt_bwd,
            state,
        })
    }

    /// Re-attaches to parameters previously registered in `store`.
    pub fn lookup(store: &ParamStore, config: &EncoderConfig) -> Result<Self> {
        let enc = Encoder {
            config: config.clone(),
            char_emb: EmbeddingTable::lookup_registered(store, CHAR_EMB)?,
            word_emb: EmbeddingTable::lookup_registered(store, WORD_EMB)?,
            char_fwd: LstmCell::lookup(store, CHAR_FWD)?,
            char_bwd: LstmCell::lookup(store, CHAR_BWD)?,
            utt_fwd: LstmCell::lookup(store, UTT_FWD)?,
            utt_bwd: LstmCell::lookup(store, UTT_BWD)?,
            state: LstmCell::lookup(store, STATE)?,
        };
        let c = config;
        let ok = enc.char_emb.dim == c.char_dim
            && enc.word_emb.dim == c.word_dim
            && enc.char_fwd.hidden_dim == c.char_hidden
            && enc.utt_fwd.input_dim == c.word_vector_dim()
            && enc.utt_fwd.hidden_dim == c.utterance_hidden
            && enc.state.input_dim == c.state_input_dim()
            && enc.state.hidden_dim == c.state_hidden;
        if !ok {
            return Err(Error::Config("stored encoder parameters do not match the config".into()));
        }
        Ok(enc)
    }

    /// Starts a forward pass on `tape`. Dropout, when given, is applied to
    /// the state-RNN input and by [`EncodePass::regularize_state`].
    pub fn begin<'t, 'm>(
        &'m self,
        tape: &'t Tape,
        store: &'m ParamStore,
        vocab: &'m Vocab,
        dropout: Option<&'m mut DropoutLayer>,
    ) -> EncodePass<'t, 'm> {
        EncodePass {
            tape,
            store,
            vocab,
            encoder: self,
            char_fwd: self.char_fwd.bind(tape, store),
            char_bwd: self.char_bwd.bind(tape, store),
            utt_fwd: self.utt_fwd.bind(tape, store),
            utt_bwd: self.utt_bwd.bind(tape, store),
            state: self.state.bind(tape, store),
            char_rows: BTreeMap::new(),
            words: BTreeMap::new(),
            utterances: BTreeMap::new(),
            dropout,
        }
    }
}

/// Encoder state after some number of turns.
#[derive(Debug, Clone, Copy)]
pub struct DialogState<'t> {
    pub s: Var<'t>,
    pub cell: Var<'t>,
    pub turn: usize,
}

/// One forward pass of the encoder over a tape.
///
/// Word and utterance embeddings are memoized per pass; reusing a node
/// accumulates its gradient across uses.
#[derive(Debug)]
pub struct EncodePass<'t, 'm> {
    tape: &'t Tape,
    store: &'m ParamStore,
    vocab: &'m Vocab,
    encoder: &'m Encoder,
    char_fwd: BoundLstm<'t>,
    char_bwd: BoundLstm<'t>,
    utt_fwd: BoundLstm<'t>,
    utt_bwd: BoundLstm<'t>,
    state: BoundLstm<'t>,
    char_rows: BTreeMap<usize, Var<'t>>,
    words: BTreeMap<String, Var<'t>>,
    utterances: BTreeMap<Vec<String>, Var<'t>>,
    dropout: Option<&'m mut DropoutLayer>,
}

impl<'t, 'm> EncodePass<'t, 'm> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.encoder.config
    }

    /// `f_m ⊕ b_1 ⊕ e_w` for one token.
    pub fn embed_word(&mut self, token: &str) -> Result<Var<'t>> {
        if let Some(&v) = self.words.get(token) {
            return Ok(v);
        }
        let mut chars = Vec::new();
        for id in self.vocab.char_ids(token) {
            let row = *self
                .char_rows
                .entry(id)
                .or_insert_with(|| self.encoder.char_emb.lookup(self.tape, self.store, id));
            chars.push(row);
        }
        let (f, b) = run_bilstm(&self.char_fwd, &self.char_bwd, &chars)?;
        let e = self
            .encoder
            .word_emb
            .lookup(self.tape, self.store, self.vocab.word_id(token));
        let v = self.tape.concat(&[f, b, e])?;
        self.words.insert(token.into(), v);
        Ok(v)
    }

    /// `f_n ⊕ b_1` over the first `max_utterance_len` tokens; an empty
    /// utterance is encoded as a single padding token.
    pub fn embed_tokens(&mut self, tokens: &[String]) -> Result<Var<'t>> {
        let max = self.encoder.config.max_utterance_len;
        let mut key: Vec<String> = tokens.iter().take(max).cloned().collect();
        if key.is_empty() {
            key.push(Vocab::pad_token().into());
        }
        if let Some(&v) = self.utterances.get(&key) {
            return Ok(v);
        }
        let mut words = Vec::with_capacity(key.len());
        for t in &key {
            words.push(self.embed_word(t)?);
        }
        let (f, b) = run_bilstm(&self.utt_fwd, &self.utt_bwd, &words)?;
        let u = f.concat(b)?;
        debug_assert_eq!(u.len(), self.encoder.config.utterance_dim());
        self.utterances.insert(key, u);
        Ok(u)
    }

    pub fn embed_utterance(&mut self, text: &str) -> Result<Var<'t>> {
        self.embed_tokens(&tokenize(text))
    }

    /// Embedding of the reserved start-of-dialog action.
    pub fn start_action(&mut self) -> Result<Var<'t>> {
        self.embed_tokens(&[Vocab::start_token().into()])
    }

    pub fn initial_state(&self) -> DialogState<'t> {
        let d = self.encoder.config.state_hidden;
        DialogState {
            s: self.tape.constant(Tensor::zeros(Shape::vector(d))),
            cell: self.tape.constant(Tensor::zeros(Shape::vector(d))),
            turn: 0,
        }
    }

    /// One state-LSTM step over `u ⊕ a_prev`.
    pub fn advance_state(&mut self, state: DialogState<'t>, u: Var<'t>, a_prev: Var<'t>) -> Result<DialogState<'t>> {
        let du = self.encoder.config.utterance_dim();
        for v in [u, a_prev] {
            if v.shape() != Shape::vector(du) {
                return Err(Error::Dimension {
                    op: "advance_state",
                    left: vec![du],
                    right: v.shape().dims().to_vec(),
                });
            }
        }
        let mut x = u.concat(a_prev)?;
        if let Some(d) = self.dropout.as_deref_mut() {
            x = d.apply(x)?;
        }
        let (s, cell) = self.state.step(x, state.s, state.cell)?;
        Ok(DialogState {
            s,
            cell,
            turn: state.turn + 1,
        })
    }

    /// Folds turns `1..=upto`, pairing user utterance `i` with system action
    /// `i-1` (the start token for the first turn). The result is the state
    /// from which system action `upto` is chosen.
    pub fn encode_prefix(&mut self, turns: &[Turn], upto: usize) -> Result<DialogState<'t>> {
        if upto == 0 || upto > turns.len() {
            return Err(Error::Index {
                index: upto,
                len: turns.len(),
            });
        }
        Ok(*self.encode_turns(&turns[..upto])?.last().expect("upto >= 1"))
    }

    /// States after each turn of `turns`.
    pub fn encode_turns(&mut self, turns: &[Turn]) -> Result<Vec<DialogState<'t>>> {
        let mut state = self.initial_state();
        let mut prev = self.start_action()?;
        let mut out = Vec::with_capacity(turns.len());
        for turn in turns {
            let u = self.embed_utterance(&turn.user)?;
            state = self.advance_state(state, u, prev)?;
            out.push(state);
            prev = self.embed_utterance(&turn.system)?;
        }
        Ok(out)
    }

    /// State embedding as fed to the ranker (dropout applied when training).
    pub fn regularize_state(&mut self, s: Var<'t>) -> Result<Var<'t>> {
        match self.dropout.as_deref_mut() {
            Some(d) => d.apply(s),
            None => Ok(s),
        }
    }
}
