use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{build_vocab, draw_negative, encode, gen_pairs, read_text8, SamplerTables, Vocabulary};
use crate::error::{Error, Result};
use crate::objective::{accumulate_triple, LossConfig, SparseGradient, TrainingTriple};

use super::adagrad::{adagrad_step, StepConfig};
use super::bank::ParameterBank;
use super::config::{BatchReduction, TrainConfig};
use super::model_file::Model;

/// An encoded training corpus: the vocabulary and the in-vocabulary token ids
/// in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub ids: Vec<u32>,
}

impl Corpus {
    pub fn from_tokens<I>(tokens: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = Result<String>>,
    {
        let tokens: Vec<String> = tokens.into_iter().collect::<Result<_>>()?;
        let vocab = build_vocab(tokens.iter().cloned().map(Ok), min_count)?;
        let ids = encode(tokens.into_iter().map(Ok), &vocab)?;
        Ok(Corpus { vocab, ids })
    }

    /// Reads the file twice: once to count, once to encode.
    pub fn from_text8(path: impl AsRef<Path>, min_count: u64) -> Result<Self> {
        let path = path.as_ref();
        let vocab = build_vocab(read_text8(path)?, min_count)?;
        let ids = encode(read_text8(path)?, &vocab)?;
        Ok(Corpus { vocab, ids })
    }
}

pub fn init_bank(vocab: &Vocabulary, cfg: &TrainConfig, seed: u64) -> ParameterBank<f32> {
    ParameterBank::init(vocab.len(), cfg.components, cfg.dim, cfg.tied, seed)
}

/// Periodic training report: running mean of batch losses since the previous
/// report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    /// 1-based.
    pub epoch: usize,
    /// 1-based, counted within the epoch.
    pub batch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean triple loss of every batch, in the order the batches were applied.
    pub batch_losses: Vec<f64>,
    pub triples: u64,
}

pub fn train_file(
    path: impl AsRef<Path>,
    cfg: &TrainConfig,
    progress: &mut (dyn FnMut(&Progress) + Send),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let corpus = Corpus::from_text8(path, cfg.min_count)?;
    train(&corpus, cfg, progress)
}

/// Runs `cfg.epochs` passes of Adagrad over the corpus.
///
/// With `cfg.threads == 1` the result is a pure function of the corpus and
/// config. With more threads the corpus is split into contiguous shards,
/// each worker computes batch gradients against the shared bank under a read
/// lock and applies them under the write lock; update order between workers
/// is unspecified.
pub fn train(corpus: &Corpus, cfg: &TrainConfig, progress: &mut (dyn FnMut(&Progress) + Send)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.vocab.len() < 2 {
        return Err(Error::usage(format!(
            "training needs at least 2 vocabulary words, got {}",
            corpus.vocab.len()
        )));
    }
    let tables = SamplerTables::new(&corpus.vocab, cfg.subsample_t, cfg.subsample_rule, cfg.neg_exponent);
    let bank = init_bank(&corpus.vocab, cfg, cfg.seed);
    let run = Run {
        cfg,
        tables: &tables,
        loss: cfg.loss(),
        step: StepConfig {
            lr: cfg.lr,
            eps: cfg.adagrad_eps,
            var_min: cfg.var_min,
            var_max: cfg.var_max,
        },
    };
    let (bank, batch_losses, triples) = if cfg.threads == 1 {
        run.sequential(&corpus.ids, bank, progress)?
    } else {
        run.parallel(&corpus.ids, bank, progress)?
    };
    Ok(TrainOutcome {
        model: Model::new(cfg.clone(), corpus.vocab.clone(), bank)?,
        batch_losses,
        triples,
    })
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    tables: &'a SamplerTables,
    loss: LossConfig,
    step: StepConfig,
}

/// Accumulates per-batch losses and emits progress every `log_every` batches.
struct Reporter {
    every: usize,
    window_sum: f64,
    window_len: usize,
}

impl Reporter {
    fn record(&mut self, epoch: usize, batch: usize, loss: f64, progress: &mut (dyn FnMut(&Progress) + Send)) {
        self.window_sum += loss;
        self.window_len += 1;
        if batch.is_multiple_of(self.every) {
            self.flush(epoch, batch, progress);
        }
    }

    fn flush(&mut self, epoch: usize, batch: usize, progress: &mut (dyn FnMut(&Progress) + Send)) {
        if self.window_len > 0 {
            progress(&Progress {
                epoch,
                batch,
                mean_loss: self.window_sum / self.window_len as f64,
            });
        }
        self.window_sum = 0.0;
        self.window_len = 0;
    }
}

impl Run<'_> {
    fn batch_gradient(
        &self,
        bank: &ParameterBank<f32>,
        batch: &[TrainingTriple],
        epoch: usize,
        batch_no: usize,
    ) -> Result<(SparseGradient, f64)> {
        let mut grads = SparseGradient::new(bank.n_components(), bank.dim());
        let mut total = 0.0;
        for t in batch {
            total += accumulate_triple(bank, t, &self.loss, &mut grads)?;
        }
        let mean = total / batch.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numeric {
                epoch,
                batch: batch_no,
                detail: format!("mean batch loss is {mean}"),
            });
        }
        if self.cfg.batch_reduction == BatchReduction::Mean {
            grads.scale(1.0 / batch.len() as f64);
        }
        Ok((grads, mean))
    }

    /// Triples for one shard of one epoch, delivered in batches.
    fn for_each_batch(
        &self,
        ids: &[u32],
        epoch: usize,
        shard: usize,
        mut apply: impl FnMut(&[TrainingTriple]) -> Result<bool>,
    ) -> Result<u64> {
        let cfg = self.cfg;
        let pairs = gen_pairs(ids, self.tables, cfg.window, cfg.window_mode, derive_seed(cfg.seed, 1 + epoch as u64, shard as u64))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, (shard as u64) << 32 | epoch as u64));
        let mut batch = Vec::with_capacity(cfg.batch_size);
        let mut triples = 0u64;
        for pair in pairs {
            for _ in 0..cfg.negatives {
                let neg = draw_negative(self.tables, pair.context, &mut rng)?;
                batch.push(TrainingTriple {
                    word: pair.center,
                    pos: pair.context,
                    neg,
                });
                if batch.len() == cfg.batch_size {
                    triples += batch.len() as u64;
                    if !apply(&batch)? {
                        return Ok(triples);
                    }
                    batch.clear();
                }
            }
        }
        if !batch.is_empty() {
            triples += batch.len() as u64;
            apply(&batch)?;
        }
        Ok(triples)
    }

    fn sequential(
        &self,
        ids: &[u32],
        mut bank: ParameterBank<f32>,
        progress: &mut (dyn FnMut(&Progress) + Send),
    ) -> Result<(ParameterBank<f32>, Vec<f64>, u64)> {
        let mut losses = Vec::new();
        let mut triples = 0;
        for epoch in 1..=self.cfg.epochs {
            let mut reporter = Reporter {
                every: self.cfg.log_every,
                window_sum: 0.0,
                window_len: 0,
            };
            let mut batch_no = 0;
            triples += self.for_each_batch(ids, epoch - 1, 0, |batch| {
                batch_no += 1;
                let (grads, loss) = self.batch_gradient(&bank, batch, epoch, batch_no)?;
                adagrad_step(&mut bank, &grads, &self.step)?;
                losses.push(loss);
                reporter.record(epoch, batch_no, loss, progress);
                Ok(true)
            })?;
            if batch_no % self.cfg.log_every != 0 {
                reporter.flush(epoch, batch_no, progress);
            }
        }
        Ok((bank, losses, triples))
    }

    fn parallel(
        &self,
        ids: &[u32],
        bank: ParameterBank<f32>,
        progress: &mut (dyn FnMut(&Progress) + Send),
    ) -> Result<(ParameterBank<f32>, Vec<f64>, u64)> {
        let threads = self.cfg.threads;
        let shard_len = ids.len().div_ceil(threads).max(1);
        let shared = RwLock::new(bank);
        let losses = Mutex::new(Vec::new());
        let progress = Mutex::new(progress);
        let abort = AtomicBool::new(false);
        let mut triples = 0;
        for epoch in 1..=self.cfg.epochs {
            let batch_counter = AtomicUsize::new(0);
            let reporter = Mutex::new(Reporter {
                every: self.cfg.log_every,
                window_sum: 0.0,
                window_len: 0,
            });
            let results: Vec<Result<u64>> = thread::scope(|s| {
                let handles: Vec<_> = ids
                    .chunks(shard_len)
                    .enumerate()
                    .map(|(shard, chunk)| {
                        let (shared, losses, progress, abort) = (&shared, &losses, &progress, &abort);
                        let (batch_counter, reporter) = (&batch_counter, &reporter);
                        s.spawn(move || {
                            let outcome = self.for_each_batch(chunk, epoch - 1, shard, |batch| {
                                if abort.load(Ordering::Relaxed) {
                                    return Ok(false);
                                }
                                let batch_no = batch_counter.fetch_add(1, Ordering::Relaxed) + 1;
                                let (grads, loss) = {
                                    let bank = shared.read().expect("bank lock poisoned");
                                    self.batch_gradient(&bank, batch, epoch, batch_no)?
                                };
                                adagrad_step(&mut shared.write().expect("bank lock poisoned"), &grads, &self.step)?;
                                losses.lock().expect("loss lock poisoned").push(loss);
                                let mut p = progress.lock().expect("progress lock poisoned");
                                reporter.lock().expect("reporter lock poisoned").record(epoch, batch_no, loss, &mut **p);
                                Ok(true)
                            });
                            if outcome.is_err() {
                                abort.store(true, Ordering::Relaxed);
                            }
                            outcome
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            for r in results {
                triples += r?;
            }
            let batches = batch_counter.load(Ordering::Relaxed);
            if !batches.is_multiple_of(self.cfg.log_every) {
                let mut p = progress.lock().expect("progress lock poisoned");
                reporter.lock().expect("reporter lock poisoned").flush(epoch, batches, &mut **p);
            }
        }
        Ok((
            shared.into_inner().expect("bank lock poisoned"),
            losses.into_inner().expect("loss lock poisoned"),
            triples,
        ))
    }
}

/// SplitMix64 finalizer over the combined inputs.
fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
