//! Gaussian mixture embeddings and approximate KL divergence between them.
//!
//! With `f = Σ_i p_i f_i` and `g = Σ_j q_j g_j`, the bounds are
//!
//! ```text
//! upper(f‖g) = Σ_i p_i [ log Σ_k p_k EL(f_i, f_k) − log Σ_j q_j e^{−KL(f_i‖g_j)} + H(f_i) ]
//! lower(f‖g) = Σ_i p_i [ log Σ_k p_k e^{−KL(f_i‖f_k)} − log Σ_j q_j EL(f_i, g_j) − H(f_i) ]
//! ```
//!
//! and the divergence used for training is their mean. Every inner sum is a
//! max-shifted log-sum-exp over `log weight + log term`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dims, Error, Result};
use crate::gauss::{self, DiagGaussian};

const SIMPLEX_TOL: f64 = 1e-6;

/// A word's density: `C` weighted diagonal Gaussians sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEmbedding {
    weights: Vec<f64>,
    components: Vec<DiagGaussian>,
}

impl MixtureEmbedding {
    pub fn new(weights: Vec<f64>, components: Vec<DiagGaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::usage("a mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::usage(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let dim = components[0].dim();
        for c in &components[1..] {
            check_dims(dim, c.dim())?;
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::usage(format!("mixture weight {w} outside [0, 1]")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::usage(format!("mixture weights sum to {total}")));
        }
        Ok(MixtureEmbedding {
            weights,
            components,
        })
    }

    /// Builds the mixture from unconstrained scores mapped through softmax.
    pub fn from_scores(scores: &[f64], components: Vec<DiagGaussian>) -> Result<Self> {
        Self::new(softmax(scores), components)
    }

    pub fn single(component: DiagGaussian) -> Self {
        MixtureEmbedding {
            weights: vec![1.0],
            components: vec![component],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DiagGaussian] {
        &self.components
    }

    fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.ln()).collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w.ln() + c.log_pdf(x))
            .collect();
        log_sum_exp(&terms)
    }

    /// Draws one point. Component choice uses one uniform, then one standard
    /// normal per dimension.
    pub fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let c = &self.components[chosen];
        for (d, x) in out.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *x = c.mean()[d] + (0.5 * c.log_var()[d]).exp() * z;
        }
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

/// Max-shifted log-sum-exp. Ties for the max go to the first index; an empty
/// slice or all `-inf` input yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Both KL bounds from a single pass over the component pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlBounds {
    pub lower: f64,
    pub upper: f64,
}

impl KlBounds {
    pub fn mean(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairTerm {
    /// `log EL(a, b)`
    LogKernel,
    /// `−KL(a ‖ b)`
    NegKl,
}

impl PairTerm {
    fn eval(self, a: &DiagGaussian, b: &DiagGaussian) -> f64 {
        match self {
            PairTerm::LogKernel => gauss::log_el_kernel_unchecked(a, b),
            PairTerm::NegKl => -gauss::kl_diag_unchecked(a, b),
        }
    }
}

/// `T_i = log Σ_k w_k exp(term(f_i, h_k))` for every component `i` of `f`,
/// plus the softmax responsibilities `r_ik` when requested.
fn inner_lse(
    f: &MixtureEmbedding,
    h: &MixtureEmbedding,
    h_log_w: &[f64],
    term: PairTerm,
    mut resp: Option<&mut Vec<f64>>,
) -> Vec<f64> {
    let ch = h.n_components();
    let mut xs = vec![0.0; ch];
    if let Some(r) = resp.as_deref_mut() {
        r.clear();
    }
    f.components
        .iter()
        .map(|fi| {
            for (k, hk) in h.components.iter().enumerate() {
                xs[k] = h_log_w[k] + term.eval(fi, hk);
            }
            let t = log_sum_exp(&xs);
            if let Some(r) = resp.as_deref_mut() {
                r.extend(xs.iter().map(|x| (x - t).exp()));
            }
            t
        })
        .collect()
}

pub fn kl_bounds(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<KlBounds> {
    check_dims(f.dim(), g.dim())?;
    let lp = f.log_weights();
    let lq = g.log_weights();
    let self_kernel = inner_lse(f, f, &lp, PairTerm::LogKernel, None);
    let self_kl = inner_lse(f, f, &lp, PairTerm::NegKl, None);
    let cross_kernel = inner_lse(f, g, &lq, PairTerm::LogKernel, None);
    let cross_kl = inner_lse(f, g, &lq, PairTerm::NegKl, None);

    let mut upper = 0.0;
    let mut lower = 0.0;
    for (i, (p, c)) in f.weights.iter().zip(&f.components).enumerate() {
        if *p == 0.0 {
            continue;
        }
        let h = gauss::entropy(c);
        upper += p * (self_kernel[i] - cross_kl[i] + h);
        lower += p * (self_kl[i] - cross_kernel[i] - h);
    }
    Ok(KlBounds { lower, upper })
}

/// Product-of-Gaussians / variational upper bound on `KL(f ‖ g)`.
pub fn kl_upper(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<f64> {
    Ok(kl_bounds(f, g)?.upper)
}

/// Variational / product-of-Gaussians lower bound on `KL(f ‖ g)`.
pub fn kl_lower(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<f64> {
    Ok(kl_bounds(f, g)?.lower)
}

/// Mean of [`kl_upper`] and [`kl_lower`]. May be negative.
pub fn kl_approx(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<f64> {
    Ok(kl_bounds(f, g)?.mean())
}

/// `log E(f, g) = −kl_approx(f, g)`.
pub fn log_energy(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<f64> {
    Ok(-kl_approx(f, g)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte-Carlo estimate of `E_{x~f}[log f(x) − log g(x)]` from `n` draws.
pub fn mc_kl_oracle(f: &MixtureEmbedding, g: &MixtureEmbedding, n: usize, seed: u64) -> Result<McEstimate> {
    check_dims(f.dim(), g.dim())?;
    if n < 1000 {
        return Err(Error::usage(format!("Monte-Carlo KL needs at least 1000 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; f.dim()];
    // Welford accumulation
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for t in 1..=n {
        f.sample(&mut rng, &mut x);
        let r = f.log_density(&x) - g.log_density(&x);
        let delta = r - mean;
        mean += delta / t as f64;
        m2 += delta * (r - mean);
    }
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate {
        estimate: mean,
        stderr: (var / n as f64).sqrt(),
    })
}

/// Gradient of a scalar with respect to one mixture's parameters.
///
/// Weight gradients are taken with respect to the log weights; see
/// [`MixtureGrad::score_grads`] for the chain through softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGrad {
    pub dim: usize,
    pub log_weights: Vec<f64>,
    /// `C × D`, component-major.
    pub means: Vec<f64>,
    /// `C × D`, component-major.
    pub log_vars: Vec<f64>,
}

impl MixtureGrad {
    pub fn zeros(n_components: usize, dim: usize) -> Self {
        MixtureGrad {
            dim,
            log_weights: vec![0.0; n_components],
            means: vec![0.0; n_components * dim],
            log_vars: vec![0.0; n_components * dim],
        }
    }

    pub fn for_mixture(m: &MixtureEmbedding) -> Self {
        Self::zeros(m.n_components(), m.dim())
    }

    fn add(&mut self, other: &MixtureGrad) {
        for (a, b) in self.log_weights.iter_mut().zip(&other.log_weights) {
            *a += b;
        }
        for (a, b) in self.means.iter_mut().zip(&other.means) {
            *a += b;
        }
        for (a, b) in self.log_vars.iter_mut().zip(&other.log_vars) {
            *a += b;
        }
    }

    /// Gradient with respect to the unconstrained softmax scores that
    /// produced `weights`: `ds_m = G_m − p_m Σ_k G_k`.
    pub fn score_grads(&self, weights: &[f64]) -> Vec<f64> {
        let total: f64 = self.log_weights.iter().sum();
        self.log_weights
            .iter()
            .zip(weights)
            .map(|(g, p)| g - p * total)
            .collect()
    }
}

/// Accumulates `coef · Σ_i p_i T_i` for one inner log-sum-exp family into the
/// gradients of `f` (outer weights and first pair slot) and `h` (inner
/// weights and second pair slot). Returns the unscaled `Σ_i p_i T_i`.
fn accumulate_family(
    f: &MixtureEmbedding,
    h: &MixtureEmbedding,
    h_log_w: &[f64],
    term: PairTerm,
    coef: f64,
    df: &mut MixtureGrad,
    dh: &mut MixtureGrad,
) -> f64 {
    let dim = f.dim();
    let ch = h.n_components();
    let mut resp = Vec::with_capacity(f.n_components() * ch);
    let t = inner_lse(f, h, h_log_w, term, Some(&mut resp));
    let mut value = 0.0;
    for (i, fi) in f.components.iter().enumerate() {
        let p = f.weights[i];
        if p == 0.0 {
            continue;
        }
        value += p * t[i];
        df.log_weights[i] += coef * p * t[i];
        for (k, hk) in h.components.iter().enumerate() {
            let up = coef * p * resp[i * ch + k];
            dh.log_weights[k] += up;
            let (fo, ho) = (i * dim, k * dim);
            let mut sink = |d: usize, am: f64, al: f64, bm: f64, bl: f64| {
                df.means[fo + d] += am;
                df.log_vars[fo + d] += al;
                dh.means[ho + d] += bm;
                dh.log_vars[ho + d] += bl;
            };
            match term {
                PairTerm::LogKernel => gauss::log_el_kernel_grad(fi, hk, up, &mut sink),
                PairTerm::NegKl => gauss::kl_diag_grad(fi, hk, -up, &mut sink),
            }
        }
    }
    value
}

/// `kl_approx(f, g)` together with its gradient, scaled by `upstream` and
/// added into `df` and `dg`.
///
/// The entropy terms enter the two bounds with opposite signs and cancel in
/// the mean, so they do not appear here.
pub fn kl_approx_grad(
    f: &MixtureEmbedding,
    g: &MixtureEmbedding,
    upstream: f64,
    df: &mut MixtureGrad,
    dg: &mut MixtureGrad,
) -> Result<f64> {
    check_dims(f.dim(), g.dim())?;
    let lp = f.log_weights();
    let lq = g.log_weights();
    let half = 0.5 * upstream;
    let mut self_slot = MixtureGrad::for_mixture(f);
    let self_kernel = accumulate_family(f, f, &lp, PairTerm::LogKernel, half, df, &mut self_slot);
    let self_kl = accumulate_family(f, f, &lp, PairTerm::NegKl, half, df, &mut self_slot);
    let cross_kl = accumulate_family(f, g, &lq, PairTerm::NegKl, -half, df, dg);
    let cross_kernel = accumulate_family(f, g, &lq, PairTerm::LogKernel, -half, df, dg);
    df.add(&self_slot);
    Ok(0.5 * (self_kernel + self_kl - cross_kl - cross_kernel))
}
