//! Max-margin loss over (word, context, negative) triples and its gradient.
//!
//! `L = max(0, m − log E(w, c) + log E(w, c'))` with `log E = −kl_approx`,
//! i.e. `max(0, m + kl_approx(w‖c) − kl_approx(w‖c'))`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{kl_approx, kl_approx_grad, MixtureGrad};
use crate::trainer::{ParameterBank, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainingTriple {
    pub word: usize,
    pub pos: usize,
    pub neg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { margin: 1.0 }
    }
}

impl LossConfig {
    pub fn new(margin: f64) -> Result<Self> {
        if !(margin.is_finite() && margin > 0.0) {
            return Err(Error::usage(format!("margin must be finite and positive, got {margin}")));
        }
        Ok(LossConfig { margin })
    }
}

/// Which parameter table a gradient entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Center,
    Context,
}

/// Gradient for one word: scores `[C]`, means and log-variances `[C·D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordGradient {
    pub scores: Vec<f64>,
    pub means: Vec<f64>,
    pub log_vars: Vec<f64>,
}

impl WordGradient {
    fn zeros(c: usize, d: usize) -> Self {
        WordGradient {
            scores: vec![0.0; c],
            means: vec![0.0; c * d],
            log_vars: vec![0.0; c * d],
        }
    }

    fn add_scaled(&mut self, other: &WordGradient, scale: f64) {
        for (a, b) in self
            .scores
            .iter_mut()
            .chain(&mut self.means)
            .chain(&mut self.log_vars)
            .zip(other.scores.iter().chain(&other.means).chain(&other.log_vars))
        {
            *a += scale * b;
        }
    }

    fn scale(&mut self, s: f64) {
        for x in self.scores.iter_mut().chain(&mut self.means).chain(&mut self.log_vars) {
            *x *= s;
        }
    }
}

/// Gradient entries for the words a set of triples touched; every other
/// parameter has zero gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    n_components: usize,
    dim: usize,
    words: BTreeMap<(Role, usize), WordGradient>,
}

impl SparseGradient {
    pub fn new(n_components: usize, dim: usize) -> Self {
        SparseGradient {
            n_components,
            dim,
            words: BTreeMap::new(),
        }
    }

    pub fn get(&self, role: Role, id: usize) -> Option<&WordGradient> {
        self.words.get(&(role, id))
    }

    pub fn entry_mut(&mut self, role: Role, id: usize) -> &mut WordGradient {
        let (c, d) = (self.n_components, self.dim);
        self.words.entry((role, id)).or_insert_with(|| WordGradient::zeros(c, d))
    }

    /// Entries in `(role, word id)` order.
    pub fn iter(&self) -> impl Iterator<Item = (Role, usize, &WordGradient)> {
        self.words.iter().map(|((r, id), g)| (*r, *id, g))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// True when every stored entry is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.words
            .values()
            .all(|g| g.scores.iter().chain(&g.means).chain(&g.log_vars).all(|x| *x == 0.0))
    }

    pub fn merge(&mut self, other: &SparseGradient) {
        for (&(role, id), g) in &other.words {
            self.entry_mut(role, id).add_scaled(g, 1.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.words.values_mut() {
            g.scale(s);
        }
    }

    fn add_mixture_grad(&mut self, role: Role, id: usize, grad: &MixtureGrad, weights: &[f64]) {
        let entry = self.entry_mut(role, id);
        for (a, b) in entry.scores.iter_mut().zip(grad.score_grads(weights)) {
            *a += b;
        }
        for (a, b) in entry.means.iter_mut().zip(&grad.means) {
            *a += b;
        }
        for (a, b) in entry.log_vars.iter_mut().zip(&grad.log_vars) {
            *a += b;
        }
    }
}

fn check_triple<T: Real>(bank: &ParameterBank<T>, t: &TrainingTriple) -> Result<()> {
    let v = bank.vocab_len();
    for (name, id) in [("word", t.word), ("positive", t.pos), ("negative", t.neg)] {
        if id >= v {
            return Err(Error::usage(format!("{name} id {id} out of range for vocabulary of {v}")));
        }
    }
    if t.pos == t.neg {
        return Err(Error::usage(format!("negative id {} equals positive id", t.neg)));
    }
    Ok(())
}

pub fn triple_loss<T: Real>(bank: &ParameterBank<T>, t: &TrainingTriple, cfg: &LossConfig) -> Result<f64> {
    check_triple(bank, t)?;
    let w = bank.center().mixture(t.word);
    let c = bank.context().mixture(t.pos);
    let n = bank.context().mixture(t.neg);
    let slack = cfg.margin + (kl_approx(&w, &c)? - kl_approx(&w, &n)?);
    Ok(slack.max(0.0))
}

pub fn triple_grad<T: Real>(bank: &ParameterBank<T>, t: &TrainingTriple, cfg: &LossConfig) -> Result<SparseGradient> {
    let mut grads = SparseGradient::new(bank.n_components(), bank.dim());
    accumulate_triple(bank, t, cfg, &mut grads)?;
    Ok(grads)
}

/// Adds the triple's gradient into `grads` and returns its loss. Nothing is
/// added when the hinge is inactive, including at exactly zero slack.
pub fn accumulate_triple<T: Real>(
    bank: &ParameterBank<T>,
    t: &TrainingTriple,
    cfg: &LossConfig,
    grads: &mut SparseGradient,
) -> Result<f64> {
    check_triple(bank, t)?;
    let w = bank.center().mixture(t.word);
    let c = bank.context().mixture(t.pos);
    let n = bank.context().mixture(t.neg);

    let mut dw = MixtureGrad::for_mixture(&w);
    let mut dc = MixtureGrad::for_mixture(&c);
    let mut dn = MixtureGrad::for_mixture(&n);
    let kl_pos = kl_approx_grad(&w, &c, 1.0, &mut dw, &mut dc)?;
    let kl_neg = kl_approx_grad(&w, &n, -1.0, &mut dw, &mut dn)?;
    let slack = cfg.margin + (kl_pos - kl_neg);
    if !(slack > 0.0) {
        return Ok(0.0);
    }
    let ctx_role = if bank.is_tied() { Role::Center } else { Role::Context };
    grads.add_mixture_grad(Role::Center, t.word, &dw, w.weights());
    grads.add_mixture_grad(ctx_role, t.pos, &dc, c.weights());
    grads.add_mixture_grad(ctx_role, t.neg, &dn, n.weights());
    Ok(slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::ParamTable;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bank(rng: &mut ChaCha8Rng, v: usize, c: usize, d: usize, spread: f64) -> ParameterBank<f64> {
        let mut t: ParamTable<f64> = ParamTable::zeros(v, c, d);
        for x in &mut t.scores {
            *x = rng.random_range(-1.0..1.0);
        }
        for x in &mut t.means {
            *x = rng.random_range(-spread..spread);
        }
        for x in &mut t.log_vars {
            *x = rng.random_range(-0.7..0.7);
        }
        ParameterBank::tied(t)
    }

    #[test]
    fn identical_contexts_give_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bank = random_bank(&mut rng, 3, 2, 4, 1.0);
        let (pos_means, pos_lv, pos_s) = (
            bank.center().means()[8..16].to_vec(),
            bank.center().log_vars()[8..16].to_vec(),
            bank.center().word_scores(1).to_vec(),
        );
        let t = bank.center_mut();
        t.means[16..24].copy_from_slice(&pos_means);
        t.log_vars[16..24].copy_from_slice(&pos_lv);
        t.word_scores_mut(2).copy_from_slice(&pos_s);
        let cfg = LossConfig::new(0.7).unwrap();
        let loss = triple_loss(&bank, &TrainingTriple { word: 0, pos: 1, neg: 2 }, &cfg).unwrap();
        assert_eq!(loss, 0.7);
    }

    #[test]
    fn loss_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bank = random_bank(&mut rng, 5, 2, 4, 1.0);
        let cfg = LossConfig::default();
        let t = TrainingTriple { word: 3, pos: 0, neg: 4 };
        let expect = (cfg.margin + kl_approx(&bank.mixture(3), &bank.mixture(0)).unwrap()
            - kl_approx(&bank.mixture(3), &bank.mixture(4)).unwrap())
        .max(0.0);
        assert!((triple_loss(&bank, &t, &cfg).unwrap() - expect).abs() < 1e-12);
        let mut g = SparseGradient::new(2, 4);
        let via_grad = accumulate_triple(&bank, &t, &cfg, &mut g).unwrap();
        assert!((via_grad - triple_loss(&bank, &t, &cfg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn inactive_hinge_has_zero_gradient() {
        // negative far away from the word, positive on top of it
        let mut t: ParamTable<f64> = ParamTable::zeros(3, 1, 2);
        t.mean_mut(2, 0).copy_from_slice(&[30.0, -30.0]);
        let bank = ParameterBank::tied(t);
        let triple = TrainingTriple { word: 0, pos: 1, neg: 2 };
        let cfg = LossConfig::default();
        assert_eq!(triple_loss(&bank, &triple, &cfg).unwrap(), 0.0);
        assert!(triple_grad(&bank, &triple, &cfg).unwrap().is_zero());
    }

    #[test]
    fn invalid_triples_are_rejected() {
        let bank: ParameterBank<f64> = ParameterBank::init(3, 1, 2, true, 0);
        let cfg = LossConfig::default();
        assert!(triple_loss(&bank, &TrainingTriple { word: 3, pos: 1, neg: 2 }, &cfg).is_err());
        assert!(triple_loss(&bank, &TrainingTriple { word: 0, pos: 1, neg: 1 }, &cfg).is_err());
        assert!(LossConfig::new(0.0).is_err());
        assert!(LossConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn untied_bank_routes_context_gradients() {
        let bank: ParameterBank<f64> = ParameterBank::init(4, 2, 3, false, 5);
        let t = TrainingTriple { word: 0, pos: 1, neg: 2 };
        let g = triple_grad(&bank, &t, &LossConfig { margin: 50.0 }).unwrap();
        let keys: Vec<(Role, usize)> = g.iter().map(|(r, id, _)| (r, id)).collect();
        assert_eq!(keys, [(Role::Center, 0), (Role::Context, 1), (Role::Context, 2)]);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let mut bank = random_bank(&mut rng, 4, 3, 2, 1.0);
            let t = TrainingTriple { word: 0, pos: 1, neg: 2 };
            let cfg = LossConfig { margin: 5.0 };
            let before = triple_loss(&bank, &t, &cfg).unwrap();
            for s in bank.center_mut().word_scores_mut(1) {
                *s += 3.25;
            }
            let after = triple_loss(&bank, &t, &cfg).unwrap();
            assert!((before - after).abs() < 1e-12);
            let g = triple_grad(&bank, &t, &cfg).unwrap();
            for (_, _, wg) in g.iter() {
                assert!(wg.scores.iter().sum::<f64>().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn translation_zeroes_total_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let bank = random_bank(&mut rng, 3, 2, 3, 2.0);
            let t = TrainingTriple { word: 0, pos: 1, neg: 2 };
            let g = triple_grad(&bank, &t, &LossConfig { margin: 10.0 }).unwrap();
            let mut total = [0.0; 3];
            for (_, _, wg) in g.iter() {
                for (i, m) in wg.means.iter().enumerate() {
                    total[i % 3] += m;
                }
            }
            assert!(total.iter().all(|x| x.abs() < 1e-8), "{total:?}");
        }
    }

    #[test]
    fn small_step_decreases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut bank = random_bank(&mut rng, 3, 2, 3, 1.5);
            let t = TrainingTriple { word: 0, pos: 1, neg: 2 };
            let cfg = LossConfig { margin: 3.0 };
            let before = triple_loss(&bank, &t, &cfg).unwrap();
            let g = triple_grad(&bank, &t, &cfg).unwrap();
            let step = 1e-4;
            for (_, id, wg) in g.iter() {
                let table = bank.center_mut();
                for (k, s) in wg.scores.iter().enumerate() {
                    table.word_scores_mut(id)[k] -= step * s;
                }
                let d = 3;
                for (k, m) in wg.means.iter().enumerate() {
                    table.mean_mut(id, k / d)[k % d] -= step * m;
                }
                for (k, l) in wg.log_vars.iter().enumerate() {
                    table.log_var_mut(id, k / d)[k % d] -= step * l;
                }
            }
            let after = triple_loss(&bank, &t, &cfg).unwrap();
            assert!(after < before || after == 0.0, "{before} -> {after}");
        }
    }
}
