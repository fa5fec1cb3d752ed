//! Bilinear state-action scoring, Plackett-Luce normalization and the
//! listwise cross-entropy loss.
//!
//! `ρ(a|s) = sᵀMa`; the probability of choosing `a` among a candidate list
//! is the softmax of the scores. Training places the truth at index 0 of the
//! candidate list and minimizes `−log p(truth)`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::RankingInstance;
use crate::encoder::EncodePass;
use crate::layers::orthogonal_init;
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{kernels, Shape, Tape, Var};
use crate::{Error, Result};

const NAME: &str = "ranker.m";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BilinearScorer {
    m: ParamId,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl BilinearScorer {
    /// Registers an orthogonally initialized `state_dim × action_dim` matrix.
    pub fn register(store: &mut ParamStore, state_dim: usize, action_dim: usize, rng: &mut Rng) -> Result<Self> {
        let m = store.add(NAME, orthogonal_init(state_dim, action_dim, rng))?;
        Ok(BilinearScorer {
            m,
            state_dim,
            action_dim,
        })
    }

    pub fn lookup(store: &ParamStore) -> Result<Self> {
        let m = store.require(NAME)?;
        let shape = store.entry(m).shape;
        if shape.rank() != 2 {
            return Err(Error::Rank {
                op: "BilinearScorer::lookup",
                expected: 2,
                got: shape.dims().to_vec(),
            });
        }
        Ok(BilinearScorer {
            m,
            state_dim: shape.rows(),
            action_dim: shape.cols(),
        })
    }

    pub fn id(&self) -> ParamId {
        self.m
    }

    pub fn bind<'t>(&self, tape: &'t Tape, store: &ParamStore) -> BoundScorer<'t> {
        BoundScorer {
            m: store.leaf(tape, self.m),
        }
    }
}

/// A scorer whose matrix lives on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundScorer<'t> {
    m: Var<'t>,
}

impl<'t> BoundScorer<'t> {
    pub fn matrix(&self) -> Var<'t> {
        self.m
    }

    /// `sᵀM` as a vector in action space.
    fn project(&self, s: Var<'t>) -> Result<Var<'t>> {
        let ds = self.m.shape().rows();
        if s.shape() != Shape::vector(ds) {
            return Err(Error::Dimension {
                op: "score",
                left: alloc::vec![ds],
                right: s.shape().dims().to_vec(),
            });
        }
        s.reshape(Shape::matrix(1, ds))?
            .matmul(self.m)?
            .reshape(Shape::vector(self.m.shape().cols()))
    }

    /// `sᵀMa`.
    pub fn score(&self, s: Var<'t>, a: Var<'t>) -> Result<Var<'t>> {
        self.project(s)?.dot(a)
    }

    /// Scores of every candidate, in order.
    pub fn scores(&self, s: Var<'t>, candidates: &[Var<'t>]) -> Result<Var<'t>> {
        if candidates.is_empty() {
            return Err(Error::Domain {
                op: "scores",
                detail: "empty candidate list".into(),
            });
        }
        let r = self.project(s)?;
        s.tape().stack(candidates)?.matvec(r)
    }

    /// Softmax over the candidate scores.
    pub fn candidate_distribution(&self, s: Var<'t>, candidates: &[Var<'t>]) -> Result<Var<'t>> {
        self.scores(s, candidates)?.softmax()
    }

    /// `−log p(candidates[0] | s)`.
    pub fn loss_truth_first(&self, s: Var<'t>, candidates: &[Var<'t>]) -> Result<Var<'t>> {
        Ok(self.scores(s, candidates)?.log_softmax()?.index(0)?.neg())
    }

    /// Index of the highest-scoring candidate, lowest index on ties.
    pub fn predict(&self, s: Var<'t>, candidates: &[Var<'t>]) -> Result<usize> {
        argmax(&self.scores(s, candidates)?.value())
    }
}

/// Cross-entropy of `instance` at state `s`; candidate actions are embedded
/// by `pass` (so the loss is differentiable through the encoder).
pub fn ranking_loss<'t>(
    scorer: &BoundScorer<'t>,
    pass: &mut EncodePass<'t, '_>,
    s: Var<'t>,
    instance: &RankingInstance,
) -> Result<Var<'t>> {
    instance.validate()?;
    let mut cands = Vec::with_capacity(instance.distractors.len() + 1);
    for c in instance.candidates() {
        cands.push(pass.embed_utterance(c)?);
    }
    scorer.loss_truth_first(s, &cands)
}

/// Softmax of a plain score vector.
pub fn distribution(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Domain {
            op: "distribution",
            detail: "empty candidate list".into(),
        });
    }
    Ok(kernels::softmax(scores))
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Domain {
            op: "predict",
            detail: "empty candidate list".into(),
        });
    }
    let mut best = 0;
    for (i, &x) in scores.iter().enumerate().skip(1) {
        if x > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// `k` distinct actions drawn uniformly without replacement from
/// `inventory`, excluding `truth`.
pub fn negative_sample(inventory: &[String], truth: &str, k: usize, rng: &mut Rng) -> Result<Vec<String>> {
    let mut pool: Vec<&String> = inventory.iter().filter(|a| a.as_str() != truth).collect();
    pool.sort();
    pool.dedup();
    if pool.len() < k {
        return Err(Error::Sampling {
            required: k,
            available: pool.len(),
        });
    }
    Ok(rand::seq::index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::tensor::Tensor;
    use alloc::collections::BTreeSet;
    use alloc::string::ToString;
    use alloc::vec;

    fn identity_scorer(n: usize) -> (ParamStore, BilinearScorer) {
        let mut store = ParamStore::new();
        let sc = BilinearScorer::register(&mut store, n, n, &mut stream(1, Stream::Init, 0)).unwrap();
        store.slice_mut(sc.id()).copy_from_slice(Tensor::identity(n).data());
        (store, sc)
    }

    #[test]
    fn identity_score_examples() {
        let (store, sc) = identity_scorer(3);
        let tape = Tape::new();
        let b = sc.bind(&tape, &store);
        let e1 = tape.var(Tensor::vector(vec![1.0, 0.0, 0.0]));
        let e2 = tape.var(Tensor::vector(vec![0.0, 1.0, 0.0]));
        assert_eq!(b.score(e1, e1).unwrap().item(), 1.0);
        assert_eq!(b.score(e1, e2).unwrap().item(), 0.0);
    }

    #[test]
    fn bilinear_in_state() {
        let mut store = ParamStore::new();
        let sc = BilinearScorer::register(&mut store, 4, 3, &mut stream(2, Stream::Init, 0)).unwrap();
        let tape = Tape::new();
        let b = sc.bind(&tape, &store);
        let s = tape.var(Tensor::vector(vec![0.3, -1.0, 2.0, 0.5]));
        let a = tape.var(Tensor::vector(vec![1.5, 0.2, -0.7]));
        let x = b.score(s, a).unwrap().item();
        let y = b.score(s.scale(2.0), a).unwrap().item();
        assert!((y - 2.0 * x).abs() < 1e-12);
        let wrong = tape.var(Tensor::vector(vec![1.0; 3]));
        assert!(matches!(b.score(wrong, a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn distribution_examples() {
        let (store, sc) = identity_scorer(2);
        let tape = Tape::new();
        let b = sc.bind(&tape, &store);
        let s = tape.var(Tensor::vector(vec![1.0, 0.0]));
        let a = tape.var(Tensor::vector(vec![0.5, 2.0]));
        let p = b.candidate_distribution(s, &[a, a, a, a]).unwrap().value();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert_eq!(b.candidate_distribution(s, &[a]).unwrap().value(), vec![1.0]);
        assert!(b.candidate_distribution(s, &[]).is_err());

        let gap = distribution(&[libm::log(3.0), 0.0]).unwrap();
        assert!((gap[0] - 0.75).abs() < 1e-15 && (gap[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn uniform_loss_is_ln_n() {
        let (store, sc) = identity_scorer(2);
        let tape = Tape::new();
        let b = sc.bind(&tape, &store);
        let s = tape.var(Tensor::vector(vec![0.0, 0.0]));
        let cands: Vec<Var<'_>> = (0..10)
            .map(|i| tape.var(Tensor::vector(vec![i as f64, 1.0])))
            .collect();
        let l = b.loss_truth_first(s, &cands).unwrap().item();
        assert!((l - libm::log(10.0)).abs() < 1e-12);
    }

    #[test]
    fn confident_truth_has_zero_loss() {
        let (store, sc) = identity_scorer(1);
        let tape = Tape::new();
        let b = sc.bind(&tape, &store);
        let s = tape.var(Tensor::vector(vec![1.0]));
        let t = tape.var(Tensor::vector(vec![1000.0]));
        let d = tape.var(Tensor::vector(vec![0.0]));
        assert!(b.loss_truth_first(s, &[t, d]).unwrap().item().abs() < 1e-300);
    }

    #[test]
    fn predict_examples() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0]).unwrap(), 1);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]).unwrap(), 0);
        assert_eq!(argmax(&[11.0, 13.0, 12.0]).unwrap(), 1);
        assert!(argmax(&[]).is_err());
    }

    #[test]
    fn negative_sample_contract() {
        let inv: Vec<String> = (0..30).map(|i| alloc::format!("a{i}")).collect();
        let mut rng = stream(5, Stream::Sampling, 0);
        let d = negative_sample(&inv, "a3", 9, &mut rng).unwrap();
        assert_eq!(d.len(), 9);
        assert_eq!(d.iter().collect::<BTreeSet<_>>().len(), 9);
        assert!(!d.contains(&"a3".to_string()));
        let again = negative_sample(&inv, "a3", 9, &mut stream(5, Stream::Sampling, 0)).unwrap();
        assert_eq!(d, again);

        let ab = vec!["A".to_string(), "B".to_string()];
        assert_eq!(negative_sample(&ab, "A", 1, &mut rng).unwrap(), vec!["B".to_string()]);
        assert_eq!(
            negative_sample(&ab, "A", 2, &mut rng),
            Err(Error::Sampling {
                required: 2,
                available: 1
            })
        );
    }
}
