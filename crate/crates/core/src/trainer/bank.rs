use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gauss::DiagGaussian;
use crate::mixture::{softmax, MixtureEmbedding};

/// Storage scalar for parameter tables. Training stores `f32`; gradient
/// checks use `f64` tables so finite differences are meaningful.
pub trait Real: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(x: f64) -> Self;
}

impl Real for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(x: f64) -> Self {
        x
    }
}

/// Which kind of parameter an array holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Score,
    Mean,
    LogVar,
}

impl ParamKind {
    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Score => "mixture score",
            ParamKind::Mean => "mean",
            ParamKind::LogVar => "log-variance",
        }
    }
}

/// One set of word densities: scores `[V·C]`, means and log-variances
/// `[V·C·D]`, all word-id-major, plus an Adagrad accumulator per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable<T> {
    vocab_len: usize,
    n_components: usize,
    dim: usize,
    pub(crate) scores: Vec<T>,
    pub(crate) means: Vec<T>,
    pub(crate) log_vars: Vec<T>,
    pub(crate) acc_scores: Vec<T>,
    pub(crate) acc_means: Vec<T>,
    pub(crate) acc_log_vars: Vec<T>,
}

impl<T: Real> ParamTable<T> {
    pub fn zeros(vocab_len: usize, n_components: usize, dim: usize) -> Self {
        let ws = vocab_len * n_components;
        let wd = ws * dim;
        ParamTable {
            vocab_len,
            n_components,
            dim,
            scores: vec![T::default(); ws],
            means: vec![T::default(); wd],
            log_vars: vec![T::default(); wd],
            acc_scores: vec![T::default(); ws],
            acc_means: vec![T::default(); wd],
            acc_log_vars: vec![T::default(); wd],
        }
    }

    /// Means uniform in `[-sqrt(3/D), sqrt(3/D)]`; scores and log-variances 0.
    fn init_uniform(vocab_len: usize, n_components: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut table = Self::zeros(vocab_len, n_components, dim);
        let bound = (3.0 / dim as f64).sqrt();
        for m in &mut table.means {
            *m = T::from_f64(rng.random_range(-bound..=bound));
        }
        table
    }

    /// Builds a table from raw arrays, zeroing the accumulators.
    pub fn from_arrays(
        vocab_len: usize,
        n_components: usize,
        dim: usize,
        scores: Vec<T>,
        means: Vec<T>,
        log_vars: Vec<T>,
    ) -> crate::Result<Self> {
        let ws = vocab_len * n_components;
        if scores.len() != ws || means.len() != ws * dim || log_vars.len() != ws * dim {
            return Err(crate::Error::usage(format!(
                "parameter arrays do not match V={vocab_len} C={n_components} D={dim}"
            )));
        }
        let mut t = Self::zeros(vocab_len, n_components, dim);
        t.scores = scores;
        t.means = means;
        t.log_vars = log_vars;
        Ok(t)
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn means(&self) -> &[T] {
        &self.means
    }

    pub fn log_vars(&self) -> &[T] {
        &self.log_vars
    }

    pub fn word_scores(&self, id: usize) -> &[T] {
        let c = self.n_components;
        &self.scores[id * c..(id + 1) * c]
    }

    pub fn word_scores_mut(&mut self, id: usize) -> &mut [T] {
        let c = self.n_components;
        &mut self.scores[id * c..(id + 1) * c]
    }

    /// Mean of component `comp` of word `id`.
    pub fn mean(&self, id: usize, comp: usize) -> &[T] {
        let start = (id * self.n_components + comp) * self.dim;
        &self.means[start..start + self.dim]
    }

    pub fn mean_mut(&mut self, id: usize, comp: usize) -> &mut [T] {
        let start = (id * self.n_components + comp) * self.dim;
        &mut self.means[start..start + self.dim]
    }

    pub fn log_var(&self, id: usize, comp: usize) -> &[T] {
        let start = (id * self.n_components + comp) * self.dim;
        &self.log_vars[start..start + self.dim]
    }

    pub fn log_var_mut(&mut self, id: usize, comp: usize) -> &mut [T] {
        let start = (id * self.n_components + comp) * self.dim;
        &mut self.log_vars[start..start + self.dim]
    }

    pub fn weights(&self, id: usize) -> Vec<f64> {
        let s: Vec<f64> = self.word_scores(id).iter().map(|x| x.to_f64()).collect();
        softmax(&s)
    }

    /// The density of word `id` in `f64`.
    ///
    /// Panics if the stored parameters are non-finite; the optimizer never
    /// writes such values.
    pub fn mixture(&self, id: usize) -> MixtureEmbedding {
        let comps = (0..self.n_components)
            .map(|j| {
                let mean = self.mean(id, j).iter().map(|x| x.to_f64()).collect();
                let log_var = self.log_var(id, j).iter().map(|x| x.to_f64()).collect();
                DiagGaussian::new(mean, log_var).expect("finite parameters")
            })
            .collect();
        MixtureEmbedding::new(self.weights(id), comps).expect("softmax weights form a simplex")
    }

    pub(crate) fn params_mut(&mut self, kind: ParamKind) -> (&mut [T], &mut [T]) {
        match kind {
            ParamKind::Score => (&mut self.scores, &mut self.acc_scores),
            ParamKind::Mean => (&mut self.means, &mut self.acc_means),
            ParamKind::LogVar => (&mut self.log_vars, &mut self.acc_log_vars),
        }
    }

    pub fn accumulators(&self, kind: ParamKind) -> &[T] {
        match kind {
            ParamKind::Score => &self.acc_scores,
            ParamKind::Mean => &self.acc_means,
            ParamKind::LogVar => &self.acc_log_vars,
        }
    }

    fn cast<U: Real>(&self) -> ParamTable<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.to_f64())).collect();
        ParamTable {
            vocab_len: self.vocab_len,
            n_components: self.n_components,
            dim: self.dim,
            scores: conv(&self.scores),
            means: conv(&self.means),
            log_vars: conv(&self.log_vars),
            acc_scores: conv(&self.acc_scores),
            acc_means: conv(&self.acc_means),
            acc_log_vars: conv(&self.acc_log_vars),
        }
    }
}

/// All trainable parameters. Center and context roles share one table unless
/// the bank was built untied.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBank<T = f32> {
    center: ParamTable<T>,
    context: Option<ParamTable<T>>,
}

impl<T: Real> ParameterBank<T> {
    pub fn tied(center: ParamTable<T>) -> Self {
        ParameterBank { center, context: None }
    }

    pub fn untied(center: ParamTable<T>, context: ParamTable<T>) -> Self {
        ParameterBank {
            center,
            context: Some(context),
        }
    }

    /// Uniform means, zero scores and log-variances, zero accumulators.
    /// The context table, when untied, is drawn after the center table from
    /// the same generator.
    pub fn init(vocab_len: usize, n_components: usize, dim: usize, tied: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = ParamTable::init_uniform(vocab_len, n_components, dim, &mut rng);
        let context = (!tied).then(|| ParamTable::init_uniform(vocab_len, n_components, dim, &mut rng));
        ParameterBank { center, context }
    }

    pub fn vocab_len(&self) -> usize {
        self.center.vocab_len
    }

    pub fn n_components(&self) -> usize {
        self.center.n_components
    }

    pub fn dim(&self) -> usize {
        self.center.dim
    }

    pub fn is_tied(&self) -> bool {
        self.context.is_none()
    }

    pub fn center(&self) -> &ParamTable<T> {
        &self.center
    }

    pub fn center_mut(&mut self) -> &mut ParamTable<T> {
        &mut self.center
    }

    /// The table read for context words.
    pub fn context(&self) -> &ParamTable<T> {
        self.context.as_ref().unwrap_or(&self.center)
    }

    pub fn context_mut(&mut self) -> &mut ParamTable<T> {
        self.context.as_mut().unwrap_or(&mut self.center)
    }

    pub(crate) fn context_table_mut(&mut self) -> Option<&mut ParamTable<T>> {
        self.context.as_mut()
    }

    /// Center-role density of word `id`; what evaluation reads.
    pub fn mixture(&self, id: usize) -> MixtureEmbedding {
        self.center.mixture(id)
    }

    pub fn cast<U: Real>(&self) -> ParameterBank<U> {
        ParameterBank {
            center: self.center.cast(),
            context: self.context.as_ref().map(|c| c.cast()),
        }
    }

    /// Drops the context table, keeping only what evaluation reads.
    pub fn into_center(self) -> Self {
        ParameterBank::tied(self.center)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_bounds_and_defaults() {
        let bank: ParameterBank<f32> = ParameterBank::init(20, 2, 3, true, 1);
        assert!(bank.center().means().iter().all(|m| (-1.0..=1.0).contains(m)));
        assert!(bank.center().scores().iter().all(|s| *s == 0.0));
        assert!(bank.center().log_vars().iter().all(|s| *s == 0.0));
        for id in 0..20 {
            assert_eq!(bank.mixture(id).weights(), [0.5, 0.5]);
        }
        for kind in [ParamKind::Score, ParamKind::Mean, ParamKind::LogVar] {
            assert!(bank.center().accumulators(kind).iter().all(|a| *a == 0.0));
        }
    }

    #[test]
    fn init_variance_matches_uniform_bound() {
        let dim = 50;
        let bank: ParameterBank<f64> = ParameterBank::init(2000, 2, dim, true, 2);
        let means = bank.center().means();
        let n = means.len() as f64;
        let mu = means.iter().sum::<f64>() / n;
        let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n;
        assert!(mu.abs() < 0.005, "{mu}");
        assert!((var - 1.0 / dim as f64).abs() < 0.001, "{var}");
        // expected squared norm of a D-dimensional mean vector is 1
        let sq_norm: f64 = means.iter().map(|m| m * m).sum::<f64>() / (2000.0 * 2.0);
        assert!((sq_norm - 1.0).abs() < 0.02, "{sq_norm}");
    }

    #[test]
    fn init_is_seeded() {
        let a: ParameterBank = ParameterBank::init(10, 2, 4, false, 3);
        let b: ParameterBank = ParameterBank::init(10, 2, 4, false, 3);
        let c: ParameterBank = ParameterBank::init(10, 2, 4, false, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(!a.is_tied());
        assert_ne!(a.center().means(), a.context().means());
    }

    #[test]
    fn layout_is_word_major() {
        let mut t: ParamTable<f64> = ParamTable::zeros(3, 2, 4);
        t.mean_mut(1, 1)[2] = 7.0;
        assert_eq!(t.means()[(2 + 1) * 4 + 2], 7.0);
        t.word_scores_mut(2)[0] = 1.0;
        assert_eq!(t.scores()[4], 1.0);
    }
}
