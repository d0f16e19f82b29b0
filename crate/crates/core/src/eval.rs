//! Word-similarity and entailment evaluation.
//!
//! Pairwise scores come from component means (`max_cos`, `avg_cos`) or from
//! component densities (`kl_comp`, negated `kl_approx`). Similarity datasets
//! are scored with Spearman's ρ; entailment datasets with a threshold sweep
//! over `max_cos`.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gauss;
use crate::mixture::{kl_approx, MixtureEmbedding};
use crate::trainer::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimilarityMetric {
    MaxCos,
    AvgCos,
    KlApprox,
    KlComp,
}

impl SimilarityMetric {
    pub const ALL: [SimilarityMetric; 4] = [
        SimilarityMetric::MaxCos,
        SimilarityMetric::AvgCos,
        SimilarityMetric::KlApprox,
        SimilarityMetric::KlComp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityMetric::MaxCos => "maxcos",
            SimilarityMetric::AvgCos => "avgcos",
            SimilarityMetric::KlApprox => "klapprox",
            SimilarityMetric::KlComp => "klcomp",
        }
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimilarityMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown metric {s:?}; valid metrics: maxcos, avgcos, klapprox, klcomp")))
    }
}

/// Normalization of the double sum in `avg_cos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AvgCosNorm {
    /// Divide by `C_f · C_g`: the mean over all component pairs.
    #[default]
    AllPairs,
    /// Divide by `C_f` only.
    Components,
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return None;
    }
    Some((ab / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

fn pairwise_cosines(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(f.n_components() * g.n_components());
    for a in f.components() {
        for b in g.components() {
            let c = cosine(a.mean(), b.mean())
                .ok_or_else(|| Error::Evaluation("component mean has zero norm".into()))?;
            out.push(c);
        }
    }
    Ok(out)
}

/// Largest cosine between any component mean of `f` and any of `g`.
pub fn max_cos(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<f64> {
    Ok(pairwise_cosines(f, g)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Mean cosine over all component pairs.
pub fn avg_cos(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<f64> {
    avg_cos_with(f, g, AvgCosNorm::AllPairs)
}

pub fn avg_cos_with(f: &MixtureEmbedding, g: &MixtureEmbedding, norm: AvgCosNorm) -> Result<f64> {
    let total: f64 = pairwise_cosines(f, g)?.iter().sum();
    let denom = match norm {
        AvgCosNorm::AllPairs => (f.n_components() * g.n_components()) as f64,
        AvgCosNorm::Components => f.n_components() as f64,
    };
    Ok(total / denom)
}

/// `max_{i,j} −KL(f_i ‖ g_j)`.
pub fn kl_comp(f: &MixtureEmbedding, g: &MixtureEmbedding) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for a in f.components() {
        for b in g.components() {
            best = best.max(-gauss::kl_diag(a, b)?);
        }
    }
    Ok(best)
}

/// Similarity score of `f` and `g` under `metric`; higher means more similar.
pub fn score(f: &MixtureEmbedding, g: &MixtureEmbedding, metric: SimilarityMetric, norm: AvgCosNorm) -> Result<f64> {
    match metric {
        SimilarityMetric::MaxCos => max_cos(f, g),
        SimilarityMetric::AvgCos => avg_cos_with(f, g, norm),
        SimilarityMetric::KlApprox => Ok(-kl_approx(f, g)?),
        SimilarityMetric::KlComp => kl_comp(f, g),
    }
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(model_scores: &[f64], human_scores: &[f64]) -> Result<f64> {
    if model_scores.len() != human_scores.len() {
        return Err(Error::Evaluation(format!(
            "score lists differ in length: {} vs {}",
            model_scores.len(),
            human_scores.len()
        )));
    }
    if model_scores.len() < 3 {
        return Err(Error::Evaluation(format!(
            "Spearman needs at least 3 pairs, got {}",
            model_scores.len()
        )));
    }
    pearson(&average_ranks(model_scores), &average_ranks(human_scores))
        .ok_or_else(|| Error::Evaluation("Spearman is undefined for a constant score list".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRecord {
    pub word1: String,
    pub word2: String,
    pub human_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntailmentRecord {
    pub premise: String,
    pub hypothesis: String,
    pub entails: bool,
}

fn data_lines<R: BufRead>(input: R) -> impl Iterator<Item = Result<(usize, String)>> {
    input
        .lines()
        .enumerate()
        .map(|(n, l)| l.map(|l| (n + 1, l)).map_err(|e| Error::io("<dataset>", e)))
        .filter(|r| {
            r.as_ref()
                .map(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
                .unwrap_or(true)
        })
}

fn parse_score(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Evaluation(format!("line {line}: bad score {field:?}")))
}

/// `word1<TAB>word2<TAB>score`, `#` comments and blank lines skipped.
pub fn read_similarity_tsv<R: BufRead>(input: R) -> Result<Vec<SimilarityRecord>> {
    data_lines(input)
        .map(|r| {
            let (n, line) = r?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Evaluation(format!("line {n}: expected 3 tab-separated fields")));
            }
            Ok(SimilarityRecord {
                word1: fields[0].trim().to_string(),
                word2: fields[1].trim().to_string(),
                human_score: parse_score(fields[2], n)?,
            })
        })
        .collect()
}

/// SCWS rows: id, word1, pos1, word2, pos2, context1, context2, ten ratings,
/// average. Contexts and individual ratings are discarded; words are
/// lowercased.
pub fn read_scws<R: BufRead>(input: R) -> Result<Vec<SimilarityRecord>> {
    data_lines(input)
        .map(|r| {
            let (n, line) = r?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 8 {
                return Err(Error::Evaluation(format!("line {n}: too few SCWS fields ({})", fields.len())));
            }
            Ok(SimilarityRecord {
                word1: fields[1].trim().to_lowercase(),
                word2: fields[3].trim().to_lowercase(),
                human_score: parse_score(fields[fields.len() - 1], n)?,
            })
        })
        .collect()
}

/// `premise<TAB>hypothesis<TAB>label` with label in `{0, 1, true, false}`.
pub fn read_entailment_tsv<R: BufRead>(input: R) -> Result<Vec<EntailmentRecord>> {
    data_lines(input)
        .map(|r| {
            let (n, line) = r?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Evaluation(format!("line {n}: expected 3 tab-separated fields")));
            }
            let entails = match fields[2].trim().to_ascii_lowercase().as_str() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(Error::Evaluation(format!("line {n}: bad label {other:?}"))),
            };
            Ok(EntailmentRecord {
                premise: fields[0].trim().to_string(),
                hypothesis: fields[1].trim().to_string(),
                entails,
            })
        })
        .collect()
}

fn lookup_pair(model: &Model, a: &str, b: &str) -> Option<(usize, usize)> {
    Some((model.vocab.id(a)?, model.vocab.id(b)?))
}

fn named_score(model: &Model, a: &str, b: &str, ids: (usize, usize), metric: SimilarityMetric, norm: AvgCosNorm) -> Result<f64> {
    score(&model.mixture(ids.0), &model.mixture(ids.1), metric, norm).map_err(|e| match e {
        Error::Evaluation(msg) => Error::Evaluation(format!("{msg} (pair {a:?}, {b:?})")),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityReport {
    pub rho100: f64,
    pub n_used: usize,
    pub n_oov: usize,
}

pub fn eval_similarity(model: &Model, records: &[SimilarityRecord], metric: SimilarityMetric) -> Result<SimilarityReport> {
    eval_similarity_with(model, records, metric, AvgCosNorm::AllPairs)
}

/// Pairs with an out-of-vocabulary word are skipped and counted.
pub fn eval_similarity_with(
    model: &Model,
    records: &[SimilarityRecord],
    metric: SimilarityMetric,
    norm: AvgCosNorm,
) -> Result<SimilarityReport> {
    let mut model_scores = Vec::new();
    let mut human = Vec::new();
    let mut n_oov = 0;
    for r in records {
        match lookup_pair(model, &r.word1, &r.word2) {
            None => n_oov += 1,
            Some(ids) => {
                model_scores.push(named_score(model, &r.word1, &r.word2, ids, metric, norm)?);
                human.push(r.human_score);
            }
        }
    }
    if model_scores.len() < 3 {
        return Err(Error::Evaluation(format!(
            "only {} usable pairs ({n_oov} out of vocabulary)",
            model_scores.len()
        )));
    }
    Ok(SimilarityReport {
        rho100: 100.0 * spearman(&model_scores, &human)?,
        n_used: model_scores.len(),
        n_oov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntailmentReport {
    pub best_precision: f64,
    pub best_f1: f64,
    pub precision_threshold: f64,
    pub f1_threshold: f64,
    pub n_used: usize,
    pub n_oov: usize,
}

/// Threshold sweep: predict "entails" iff `score >= threshold`, over every
/// observed score plus `+inf`. Reports the best precision among thresholds
/// with at least one positive prediction and the best F1, ties going to the
/// lower threshold. When there are more distinct scores than
/// `threshold_steps`, an evenly spaced subset of them (always including the
/// lowest) is swept instead.
pub fn threshold_sweep(scores: &[f64], labels: &[bool], threshold_steps: usize) -> Result<(f64, f64, f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Evaluation("scores and labels differ in length".into()));
    }
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Evaluation(
            "entailment evaluation needs at least one positive and one negative record".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // suffix_tp[i] = positives among order[i..]
    let mut suffix_tp = vec![0usize; order.len() + 1];
    for i in (0..order.len()).rev() {
        suffix_tp[i] = suffix_tp[i + 1] + labels[order[i]] as usize;
    }
    let mut starts: Vec<usize> = (0..order.len())
        .filter(|&i| i == 0 || scores[order[i]] != scores[order[i - 1]])
        .collect();
    if threshold_steps > 0 && starts.len() > threshold_steps {
        let n = starts.len();
        starts = (0..threshold_steps).map(|k| starts[k * n / threshold_steps]).collect();
        starts.dedup();
    }

    let mut best_p = (f64::NEG_INFINITY, f64::INFINITY);
    // the +inf threshold predicts nothing: F1 = 0
    let mut best_f = (0.0, f64::INFINITY);
    for &i in starts.iter().rev() {
        let threshold = scores[order[i]];
        let predicted = order.len() - i;
        let tp = suffix_tp[i] as f64;
        let precision = tp / predicted as f64;
        let recall = tp / positives as f64;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        // iterating downward, so >= moves ties to the lower threshold
        if precision >= best_p.0 {
            best_p = (precision, threshold);
        }
        if f1 >= best_f.0 {
            best_f = (f1, threshold);
        }
    }
    Ok((best_p.0, best_f.0, best_p.1, best_f.1))
}

/// Entailment scored with `max_cos(premise, hypothesis)`.
pub fn eval_entailment(model: &Model, records: &[EntailmentRecord], threshold_steps: usize) -> Result<EntailmentReport> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut n_oov = 0;
    for r in records {
        match lookup_pair(model, &r.premise, &r.hypothesis) {
            None => n_oov += 1,
            Some(ids) => {
                scores.push(named_score(model, &r.premise, &r.hypothesis, ids, SimilarityMetric::MaxCos, AvgCosNorm::AllPairs)?);
                labels.push(r.entails);
            }
        }
    }
    if scores.is_empty() {
        return Err(Error::Evaluation(format!("no usable records ({n_oov} out of vocabulary)")));
    }
    let (best_precision, best_f1, precision_threshold, f1_threshold) = threshold_sweep(&scores, &labels, threshold_steps)?;
    Ok(EntailmentReport {
        best_precision,
        best_f1,
        precision_threshold,
        f1_threshold,
        n_used: scores.len(),
        n_oov,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub token: String,
    pub word_id: usize,
    pub component: usize,
    pub cosine: f64,
}

/// The `k` (word, component) means closest in cosine to the query
/// component's mean, the query itself included. Candidates with a zero mean
/// are skipped; ties go to the lower (word id, component).
pub fn neighbors(model: &Model, query: &str, component: usize, k: usize) -> Result<Vec<Neighbor>> {
    let table = model.bank.center();
    let id = model
        .vocab
        .id(query)
        .ok_or_else(|| Error::usage(format!("word {query:?} is not in the vocabulary")))?;
    let c = table.n_components();
    if component >= c {
        return Err(Error::usage(format!("component {component} out of range; the model has {c}")));
    }
    let to_f64 = |v: &[f32]| v.iter().map(|x| *x as f64).collect::<Vec<f64>>();
    let q = to_f64(table.mean(id, component));
    let mut all: Vec<Neighbor> = Vec::with_capacity(model.vocab.len() * c);
    let mut buf = Vec::with_capacity(table.dim());
    for w in 0..model.vocab.len() {
        for j in 0..c {
            buf.clear();
            buf.extend(table.mean(w, j).iter().map(|x| *x as f64));
            if let Some(cos) = cosine(&q, &buf) {
                all.push(Neighbor {
                    token: model.vocab.token(w).to_string(),
                    word_id: w,
                    component: j,
                    cosine: cos,
                });
            }
        }
    }
    if all.iter().all(|n| n.word_id != id || n.component != component) {
        return Err(Error::Evaluation(format!("{query}:{component} has a zero mean")));
    }
    all.sort_by(|a, b| {
        b.cosine
            .total_cmp(&a.cosine)
            .then(a.word_id.cmp(&b.word_id))
            .then(a.component.cmp(&b.component))
    });
    all.truncate(k);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::gauss::DiagGaussian;
    use crate::trainer::{ParamTable, ParameterBank, TrainConfig};
    use proptest::prelude::*;
    use std::io::Cursor;

    fn mix(means: &[&[f64]]) -> MixtureEmbedding {
        let c = means.len();
        let comps = means
            .iter()
            .map(|m| DiagGaussian::new(m.to_vec(), vec![0.0; m.len()]).unwrap())
            .collect();
        MixtureEmbedding::new(vec![1.0 / c as f64; c], comps).unwrap()
    }

    /// Model with the given per-word component means (all C equal).
    fn toy_model(words: &[(&str, Vec<Vec<f32>>)]) -> Model {
        let c = words[0].1.len();
        let d = words[0].1[0].len();
        let vocab = Vocabulary::from_counts(words.iter().map(|(w, _)| (w.to_string(), 1))).unwrap();
        let mut table: ParamTable<f32> = ParamTable::zeros(words.len(), c, d);
        for (w, comps) in words {
            let id = vocab.id(w).unwrap();
            for (j, m) in comps.iter().enumerate() {
                table.mean_mut(id, j).copy_from_slice(m);
            }
        }
        let cfg = TrainConfig {
            dim: d,
            components: c,
            ..Default::default()
        };
        Model::new(cfg, vocab, ParameterBank::tied(table)).unwrap()
    }

    #[test]
    fn max_cos_cases() {
        let f = mix(&[&[1.0, 0.0]]);
        assert_eq!(max_cos(&f, &f).unwrap(), 1.0);
        assert_eq!(max_cos(&f, &mix(&[&[0.0, 2.0]])).unwrap(), 0.0);
        let g = mix(&[&[-1.0, 0.0], &[0.6, 0.8]]);
        assert!((max_cos(&f, &g).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(max_cos(&f, &mix(&[&[0.0, 0.0]])), Err(Error::Evaluation(_))));
    }

    #[test]
    fn avg_cos_cases() {
        let f = mix(&[&[1.0, 0.0]]);
        let g = mix(&[&[0.6, 0.8]]);
        assert_eq!(avg_cos(&f, &g).unwrap(), max_cos(&f, &g).unwrap());
        let a = mix(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        assert_eq!(avg_cos(&a, &a).unwrap(), 0.0);
        let b = mix(&[&[1.0, 0.0], &[0.0, 1.0]]);
        // pairs: 1, 0, 0, 1
        assert_eq!(avg_cos(&b, &b).unwrap(), 0.5);
        assert_eq!(avg_cos_with(&b, &b, AvgCosNorm::Components).unwrap(), 1.0);
    }

    #[test]
    fn kl_comp_cases() {
        let f = mix(&[&[0.0]]);
        assert_eq!(kl_comp(&f, &f).unwrap(), 0.0);
        assert!((kl_comp(&f, &mix(&[&[1.0]])).unwrap() + 0.5).abs() < 1e-12);
        let narrow = MixtureEmbedding::single(DiagGaussian::isotropic(vec![0.0], 1.0).unwrap());
        let wide = MixtureEmbedding::single(DiagGaussian::isotropic(vec![0.0], 9.0).unwrap());
        assert!((kl_comp(&narrow, &wide).unwrap() - kl_comp(&wide, &narrow).unwrap()).abs() > 0.1);
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn sweep_separable() {
        let scores = [0.9, 0.8, 0.85, 0.1, 0.2, 0.3];
        let labels = [true, true, true, false, false, false];
        let (p, f, _, ft) = threshold_sweep(&scores, &labels, 1000).unwrap();
        assert_eq!((p, f), (1.0, 1.0));
        assert_eq!(ft, 0.8);
    }

    #[test]
    fn sweep_constant_scores() {
        let labels = [true, false, false, true, false];
        let (p, f, _, _) = threshold_sweep(&[0.5; 5], &labels, 1000).unwrap();
        let rate = 0.4;
        assert!((p - rate).abs() < 1e-12);
        assert!((f - 2.0 * rate / (rate + 1.0)).abs() < 1e-12);
        assert!(threshold_sweep(&[0.5; 2], &[true, true], 10).is_err());
    }

    #[test]
    fn similarity_eval_on_toy_model() {
        let model = toy_model(&[
            ("a", vec![vec![1.0, 0.0]]),
            ("b", vec![vec![1.0, 0.1]]),
            ("c", vec![vec![1.0, 1.0]]),
            ("d", vec![vec![0.0, 1.0]]),
        ]);
        let rec = |a: &str, b: &str, s: f64| SimilarityRecord {
            word1: a.into(),
            word2: b.into(),
            human_score: s,
        };
        let records = vec![rec("a", "b", 9.0), rec("a", "c", 5.0), rec("a", "d", 1.0), rec("a", "zzz", 3.0)];
        for metric in [SimilarityMetric::MaxCos, SimilarityMetric::AvgCos] {
            let r = eval_similarity(&model, &records, metric).unwrap();
            assert_eq!(r.rho100, 100.0);
            assert_eq!((r.n_used, r.n_oov), (3, 1));
        }
        let oov = vec![rec("x", "y", 1.0); 4];
        assert!(matches!(eval_similarity(&model, &oov, SimilarityMetric::MaxCos), Err(Error::Evaluation(_))));
    }

    #[test]
    fn neighbors_order_and_errors() {
        let model = toy_model(&[
            ("a", vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            ("b", vec![vec![0.7, 0.7], vec![2.0, 0.0]]),
            ("c", vec![vec![-1.0, 0.0], vec![0.5, 0.4]]),
        ]);
        let top = neighbors(&model, "a", 0, 1).unwrap();
        assert_eq!((top[0].token.as_str(), top[0].component, top[0].cosine), ("a", 0, 1.0));
        let all = neighbors(&model, "a", 0, 10).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!((all[1].token.as_str(), all[1].component, all[1].cosine), ("b", 1, 1.0));
        assert!(all.windows(2).all(|w| w[0].cosine >= w[1].cosine));
        assert!(neighbors(&model, "a", 2, 1).is_err());
        assert!(neighbors(&model, "nope", 0, 1).is_err());
    }

    #[test]
    fn dataset_parsers() {
        let sim = read_similarity_tsv(Cursor::new("# header\nold\tnew\t1.5\n\ncat\tdog\t7\n")).unwrap();
        assert_eq!(sim.len(), 2);
        assert_eq!(sim[1].human_score, 7.0);
        assert!(read_similarity_tsv(Cursor::new("a\tb\n")).is_err());
        assert!(read_similarity_tsv(Cursor::new("a\tb\tx\n")).is_err());

        let scws_line = "1\tBrazil\tn\tnut\tn\tctx one\tctx two\t1\t2\t1\t0\t3\t1\t1\t2\t1\t1\t1.30\n";
        let scws = read_scws(Cursor::new(scws_line)).unwrap();
        assert_eq!(scws[0].word1, "brazil");
        assert_eq!(scws[0].word2, "nut");
        assert_eq!(scws[0].human_score, 1.3);

        let ent = read_entailment_tsv(Cursor::new("dog\tanimal\t1\nanimal\tdog\tfalse\ncat\tpet\tTrue\n")).unwrap();
        assert_eq!(ent.iter().map(|r| r.entails).collect::<Vec<_>>(), [true, false, true]);
        assert!(read_entailment_tsv(Cursor::new("a\tb\tmaybe\n")).is_err());
    }

    #[test]
    fn metric_names() {
        for m in SimilarityMetric::ALL {
            assert_eq!(m.name().parse::<SimilarityMetric>().unwrap(), m);
        }
        let err = "cosine".parse::<SimilarityMetric>().unwrap_err().to_string();
        assert!(err.contains("maxcos") && err.contains("klcomp"));
    }

    fn arb_mixture() -> impl Strategy<Value = MixtureEmbedding> {
        proptest::collection::vec(proptest::collection::vec(0.1f64..2.0, 3), 1..4).prop_map(|ms| {
            let refs: Vec<&[f64]> = ms.iter().map(|m| m.as_slice()).collect();
            mix(&refs)
        })
    }

    proptest! {
        #[test]
        fn cosine_metrics_symmetric_and_bounded(f in arb_mixture(), g in arb_mixture()) {
            let (m1, m2) = (max_cos(&f, &g).unwrap(), max_cos(&g, &f).unwrap());
            prop_assert!((m1 - m2).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&m1));
            let (a1, a2) = (avg_cos(&f, &g).unwrap(), avg_cos(&g, &f).unwrap());
            prop_assert!((a1 - a2).abs() < 1e-12);
            prop_assert!(a1 <= m1 + 1e-12);
        }

        #[test]
        fn spearman_monotone_invariance(xs in proptest::collection::vec(-5.0f64..5.0, 4..30), ys in proptest::collection::vec(-5.0f64..5.0, 30)) {
            let ys = &ys[..xs.len()];
            if let Ok(base) = spearman(&xs, ys) {
                let transformed: Vec<f64> = xs.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
                prop_assert!((spearman(&transformed, ys).unwrap() - base).abs() < 1e-12);
            }
        }

        #[test]
        fn best_f1_beats_all_positive(scores in proptest::collection::vec(0.0f64..1.0, 2..40), seed in any::<u64>()) {
            let labels: Vec<bool> = (0..scores.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            let p = labels.iter().filter(|l| **l).count();
            prop_assume!(p > 0 && p < labels.len());
            let rate = p as f64 / labels.len() as f64;
            let (_, f1, _, _) = threshold_sweep(&scores, &labels, 10_000).unwrap();
            prop_assert!(f1 >= 2.0 * rate / (rate + 1.0) - 1e-12);
        }
    }
}
