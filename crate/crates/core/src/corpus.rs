//! Text8 ingestion, vocabulary, subsampling, context pairs and negatives.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lazily yields whitespace-separated tokens from a Text8-style file.
///
/// Token bytes must be `a-z`; space, newline, tab and carriage return
/// separate tokens. Anything else is an input error carrying its byte offset.
pub struct Text8Reader<R> {
    bytes: io::Bytes<BufReader<R>>,
    path: PathBuf,
    offset: u64,
    done: bool,
}

pub fn read_text8(path: impl AsRef<Path>) -> Result<Text8Reader<File>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Text8Reader::new(file, path))
}

impl<R: Read> Text8Reader<R> {
    pub fn new(inner: R, name: impl Into<PathBuf>) -> Self {
        Text8Reader {
            bytes: BufReader::with_capacity(1 << 16, inner).bytes(),
            path: name.into(),
            offset: 0,
            done: false,
        }
    }
}

impl<R: Read> Iterator for Text8Reader<R> {
    type Item = Result<String>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut token = String::new();
        loop {
            match self.bytes.next() {
                None => {
                    self.done = true;
                    return (!token.is_empty()).then_some(Ok(token));
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(Error::io(&self.path, e)));
                }
                Some(Ok(b)) => {
                    let at = self.offset;
                    self.offset += 1;
                    match b {
                        b'a'..=b'z' => token.push(b as char),
                        b' ' | b'\n' | b'\t' | b'\r' => {
                            if !token.is_empty() {
                                return Some(Ok(token));
                            }
                        }
                        _ => {
                            self.done = true;
                            let message = if b.is_ascii() {
                                format!("unexpected byte {b:#04x} ({:?})", b as char)
                            } else {
                                format!("unexpected non-ASCII byte {b:#04x}")
                            };
                            return Some(Err(Error::Input { offset: at, message }));
                        }
                    }
                }
            }
        }
    }
}

/// Token ↔ id map. Ids are dense and ordered by descending count, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total: u64,
}

impl Vocabulary {
    /// Builds from `(token, count)` pairs; reorders into id order and rejects
    /// duplicates and zero counts.
    pub fn from_counts(entries: impl IntoIterator<Item = (String, u64)>) -> Result<Self> {
        let mut entries: Vec<(String, u64)> = entries.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut index = HashMap::with_capacity(entries.len());
        for (id, (tok, count)) in entries.iter().enumerate() {
            if *count == 0 {
                return Err(Error::usage(format!("token {tok:?} has zero count")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::usage(format!("duplicate token {tok:?}")));
            }
        }
        let total = entries.iter().map(|e| e.1).sum();
        let (tokens, counts) = entries.into_iter().unzip();
        Ok(Vocabulary {
            tokens,
            counts,
            index,
            total,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sum of counts over retained tokens.
    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    /// Relative frequency of `id` among retained tokens.
    pub fn frequency(&self, id: usize) -> f64 {
        self.counts[id] as f64 / self.total as f64
    }

    /// Writes one `token<TAB>count` line per id.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            writeln!(out, "{t}\t{c}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::usage(format!("vocabulary line {}: missing tab", n + 1)))?;
            let count = count
                .trim()
                .parse()
                .map_err(|_| Error::usage(format!("vocabulary line {}: bad count {count:?}", n + 1)))?;
            entries.push((tok.to_string(), count));
        }
        Self::from_counts(entries)
    }
}

/// Counts every token and keeps those seen at least `min_count` times.
pub fn build_vocab<I>(stream: I, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = Result<String>>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut seen = 0u64;
    for tok in stream {
        *counts.entry(tok?).or_default() += 1;
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::Input {
            offset: 0,
            message: "empty token stream".into(),
        });
    }
    Vocabulary::from_counts(counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)))
}

/// How the keep probability is derived from a token's frequency `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleRule {
    /// `min(1, sqrt(t / f))`
    #[default]
    Sqrt,
    /// `min(1, sqrt(t / f) + t / f)`
    SqrtPlusLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerTables {
    keep_prob: Vec<f64>,
    neg_cdf: Vec<f64>,
}

impl SamplerTables {
    /// `threshold <= 0` disables subsampling.
    pub fn new(vocab: &Vocabulary, threshold: f64, rule: SubsampleRule, neg_exponent: f64) -> Self {
        let keep_prob = (0..vocab.len())
            .map(|id| {
                if threshold <= 0.0 {
                    return 1.0;
                }
                let ratio = threshold / vocab.frequency(id);
                let p = match rule {
                    SubsampleRule::Sqrt => ratio.sqrt(),
                    SubsampleRule::SqrtPlusLinear => ratio.sqrt() + ratio,
                };
                p.min(1.0)
            })
            .collect();

        let weights: Vec<f64> = vocab.counts().iter().map(|&c| (c as f64).powf(neg_exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut neg_cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        if let Some(last) = neg_cdf.last_mut() {
            *last = 1.0;
        }
        SamplerTables { keep_prob, neg_cdf }
    }

    pub fn keep_prob(&self, id: usize) -> f64 {
        self.keep_prob[id]
    }

    pub fn neg_cdf(&self) -> &[f64] {
        &self.neg_cdf
    }

    pub fn vocab_len(&self) -> usize {
        self.neg_cdf.len()
    }
}

/// Draws a negative id from the unigram-power proposal, redrawing whenever it
/// hits `exclude`.
pub fn draw_negative<R: Rng>(tables: &SamplerTables, exclude: usize, rng: &mut R) -> Result<usize> {
    let v = tables.vocab_len();
    if v < 2 {
        return Err(Error::usage(format!("negative sampling needs at least 2 words, vocabulary has {v}")));
    }
    loop {
        let u: f64 = rng.random();
        let id = tables.neg_cdf.partition_point(|&c| c <= u).min(v - 1);
        if id != exclude {
            return Ok(id);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainingPair {
    pub center: usize,
    pub context: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Per-center radius drawn uniformly from `1..=window`.
    #[default]
    Dynamic,
    Fixed,
}

/// Maps a token stream onto vocabulary ids, dropping out-of-vocabulary tokens.
pub fn encode<I>(stream: I, vocab: &Vocabulary) -> Result<Vec<u32>>
where
    I: IntoIterator<Item = Result<String>>,
{
    let mut ids = Vec::new();
    for tok in stream {
        if let Some(id) = vocab.id(&tok?) {
            ids.push(id as u32);
        }
    }
    Ok(ids)
}

/// Skip-gram pairs over an encoded corpus.
///
/// Subsampling is decided once per position up front, then each kept center
/// pairs with every kept token within its radius, left side first.
pub struct PairStream {
    kept: Vec<u32>,
    window: usize,
    mode: WindowMode,
    rng: ChaCha8Rng,
    pos: usize,
    radius: usize,
    offset: isize,
}

pub fn gen_pairs(
    ids: &[u32],
    tables: &SamplerTables,
    window: usize,
    mode: WindowMode,
    seed: u64,
) -> Result<PairStream> {
    if window == 0 {
        return Err(Error::usage("window must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: Vec<u32> = ids
        .iter()
        .copied()
        .filter(|&id| {
            let p = tables.keep_prob(id as usize);
            p >= 1.0 || rng.random::<f64>() < p
        })
        .collect();
    let mut stream = PairStream {
        kept,
        window,
        mode,
        rng,
        pos: 0,
        radius: 0,
        offset: 0,
    };
    stream.start_center();
    Ok(stream)
}

impl PairStream {
    fn start_center(&mut self) {
        self.radius = match self.mode {
            WindowMode::Dynamic => self.rng.random_range(1..=self.window),
            WindowMode::Fixed => self.window,
        };
        self.offset = -(self.radius as isize);
    }

    /// Number of kept tokens after subsampling.
    pub fn kept_len(&self) -> usize {
        self.kept.len()
    }
}

impl Iterator for PairStream {
    type Item = TrainingPair;

    fn next(&mut self) -> Option<TrainingPair> {
        while self.pos < self.kept.len() {
            while self.offset <= self.radius as isize {
                let off = self.offset;
                self.offset += 1;
                if off == 0 {
                    continue;
                }
                let ctx = self.pos as isize + off;
                if ctx < 0 || ctx as usize >= self.kept.len() {
                    continue;
                }
                return Some(TrainingPair {
                    center: self.kept[self.pos] as usize,
                    context: self.kept[ctx as usize] as usize,
                });
            }
            self.pos += 1;
            if self.pos < self.kept.len() {
                self.start_center();
            }
        }
        None
    }
}
