//! LDA topic model fitted by collapsed Gibbs sampling.
//!
//! The chain is sequential and seeded, so a fit is a pure function of
//! `(corpus, params)`. Estimates are Dirichlet-smoothed, which keeps every
//! entry of `theta` and `phi` strictly positive and every downstream KL
//! divergence finite.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::CorpusMatrix;
use crate::exec::Exec;
use crate::rng;
use crate::surprise::TopicDistribution;
use crate::{Error, Result, FORMAT_VERSION};

/// How the point estimate is read off the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Estimate {
    /// Counts from the final sweep.
    #[default]
    FinalState,
    /// Average of the smoothed estimates taken every `lag` sweeps after
    /// `burn_in` sweeps.
    Averaged { burn_in: u32, lag: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicModelParams {
    pub k: usize,
    /// Document-topic concentration; `None` means `50 / k`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: u32,
    pub seed: u64,
    #[serde(default)]
    pub estimate: Estimate,
}

impl TopicModelParams {
    /// Defaults: `alpha = 50 / k`, `beta = 0.01`, 1000 sweeps, seed 0.
    pub fn new(k: usize) -> Self {
        TopicModelParams {
            k,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            seed: 0,
            estimate: Estimate::FinalState,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k.max(1) as f64)
    }

    /// The same parameters with `alpha` made explicit.
    pub fn resolved(&self) -> Self {
        TopicModelParams {
            alpha: Some(self.alpha()),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if let Estimate::Averaged { burn_in, lag } = self.estimate {
            if lag == 0 {
                return Err(Error::Config("averaging lag must be at least 1".into()));
            }
            if burn_in >= self.iterations {
                return Err(Error::Config("burn_in must be smaller than iterations".into()));
            }
        }
        Ok(())
    }
}

/// A fitted model: `theta` is `D x k`, `phi` is `k x V`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub params: TopicModelParams,
    pub corpus_fingerprint: String,
    num_docs: usize,
    vocab_size: usize,
    theta: Vec<f64>,
    phi: Vec<f64>,
}

impl TopicModel {
    /// Assemble a model from matrices fitted elsewhere. Every row of both
    /// matrices must be a probability vector.
    pub fn from_parts(
        params: TopicModelParams,
        corpus_fingerprint: impl Into<String>,
        num_docs: usize,
        vocab_size: usize,
        theta: Vec<f64>,
        phi: Vec<f64>,
    ) -> Result<Self> {
        let k = params.k;
        for (name, m, rows, cols) in [("theta", &theta, num_docs, k), ("phi", &phi, k, vocab_size)] {
            if m.len() != rows * cols {
                return Err(Error::LengthMismatch {
                    expected: rows * cols,
                    got: m.len(),
                });
            }
            for row in m.chunks(cols.max(1)) {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Distribution(format!("{name} row is not a probability vector")));
                }
            }
        }
        Ok(TopicModel {
            params,
            corpus_fingerprint: corpus_fingerprint.into(),
            num_docs,
            vocab_size,
            theta,
            phi,
        })
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn theta_slice(&self, d: usize) -> &[f64] {
        let k = self.k();
        &self.theta[d * k..(d + 1) * k]
    }

    pub fn phi_slice(&self, t: usize) -> &[f64] {
        let v = self.vocab_size;
        &self.phi[t * v..(t + 1) * v]
    }

    /// The topic distribution of document `d`.
    pub fn theta_row(&self, d: usize) -> Result<TopicDistribution> {
        if d >= self.num_docs {
            return Err(Error::OutOfRange {
                index: d,
                len: self.num_docs,
            });
        }
        TopicDistribution::new(self.theta_slice(d).to_vec())
    }

    /// Every document's topic distribution, in corpus order.
    pub fn thetas(&self) -> Result<Vec<TopicDistribution>> {
        (0..self.num_docs).map(|d| self.theta_row(d)).collect()
    }

    /// Short hash of the fitted matrices.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for x in self.theta.iter().chain(&self.phi) {
            h.update(x.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

struct Chain<'a> {
    corpus: &'a CorpusMatrix,
    k: usize,
    vocab: usize,
    alpha: f64,
    beta: f64,
    words: Vec<u32>,
    doc_of: Vec<u32>,
    z: Vec<u16>,
    /// `D x k`
    n_dk: Vec<u32>,
    /// `V x k` (word-major for the inner loop)
    n_wk: Vec<u32>,
    n_k: Vec<u64>,
}

impl<'a> Chain<'a> {
    fn new(corpus: &'a CorpusMatrix, params: &TopicModelParams, rng: &mut impl Rng) -> Self {
        let k = params.k;
        let vocab = corpus.vocab_size();
        let mut words = Vec::new();
        let mut doc_of = Vec::new();
        for (d, doc) in corpus.docs().iter().enumerate() {
            for &(w, c) in doc {
                for _ in 0..c {
                    words.push(w);
                    doc_of.push(d as u32);
                }
            }
        }
        let mut chain = Chain {
            corpus,
            k,
            vocab,
            alpha: params.alpha(),
            beta: params.beta,
            z: Vec::with_capacity(words.len()),
            n_dk: vec![0; corpus.num_docs() * k],
            n_wk: vec![0; vocab * k],
            n_k: vec![0; k],
            words,
            doc_of,
        };
        for i in 0..chain.words.len() {
            let t = rng.random_range(0..k);
            chain.z.push(t as u16);
            chain.add(i, t, 1);
        }
        chain
    }

    #[inline]
    fn add(&mut self, i: usize, t: usize, sign: i32) {
        let d = self.doc_of[i] as usize;
        let w = self.words[i] as usize;
        let k = self.k;
        if sign > 0 {
            self.n_dk[d * k + t] += 1;
            self.n_wk[w * k + t] += 1;
            self.n_k[t] += 1;
        } else {
            self.n_dk[d * k + t] -= 1;
            self.n_wk[w * k + t] -= 1;
            self.n_k[t] -= 1;
        }
    }

    fn sweep(&mut self, rng: &mut impl Rng, weights: &mut [f64]) {
        let k = self.k;
        let vbeta = self.vocab as f64 * self.beta;
        for i in 0..self.words.len() {
            let old = self.z[i] as usize;
            self.add(i, old, -1);
            let d = self.doc_of[i] as usize;
            let w = self.words[i] as usize;
            let ndk = &self.n_dk[d * k..(d + 1) * k];
            let nwk = &self.n_wk[w * k..(w + 1) * k];
            let mut total = 0.0;
            for t in 0..k {
                total += (ndk[t] as f64 + self.alpha) * (nwk[t] as f64 + self.beta) / (self.n_k[t] as f64 + vbeta);
                weights[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = weights.iter().position(|&c| u < c).unwrap_or(k - 1);
            self.z[i] = new as u16;
            self.add(i, new, 1);
        }
    }

    fn accumulate(&self, theta: &mut [f64], phi: &mut [f64]) {
        let k = self.k;
        let kalpha = k as f64 * self.alpha;
        for d in 0..self.corpus.num_docs() {
            let nd = self.corpus.doc_len(d) as f64;
            for t in 0..k {
                theta[d * k + t] += (self.n_dk[d * k + t] as f64 + self.alpha) / (nd + kalpha);
            }
        }
        let vbeta = self.vocab as f64 * self.beta;
        for t in 0..k {
            let denom = self.n_k[t] as f64 + vbeta;
            for w in 0..self.vocab {
                phi[t * self.vocab + w] += (self.n_wk[w * k + t] as f64 + self.beta) / denom;
            }
        }
    }
}

/// Fit an LDA model by collapsed Gibbs sampling.
pub fn train(corpus: &CorpusMatrix, params: &TopicModelParams) -> Result<TopicModel> {
    params.validate()?;
    if corpus.num_docs() == 0 {
        return Err(Error::TooShort("corpus has no documents".into()));
    }
    if params.k > u16::MAX as usize {
        return Err(Error::Config(format!("k = {} is too large", params.k)));
    }
    if let Some(d) = (0..corpus.num_docs()).find(|&d| corpus.doc_len(d) == 0) {
        return Err(Error::EmptyDocument(format!("#{d}")));
    }
    let total = corpus.total_tokens();
    if params.k as u64 > total {
        return Err(Error::Config(format!(
            "k = {} exceeds the corpus token count {total}",
            params.k
        )));
    }

    let mut rng = rng::root(params.seed);
    let mut chain = Chain::new(corpus, params, &mut rng);
    let mut weights = vec![0.0; params.k];
    let d = corpus.num_docs();
    let v = corpus.vocab_size();
    let mut theta = vec![0.0; d * params.k];
    let mut phi = vec![0.0; params.k * v];
    let mut samples = 0u32;

    for it in 1..=params.iterations {
        chain.sweep(&mut rng, &mut weights);
        if let Estimate::Averaged { burn_in, lag } = params.estimate {
            if it > burn_in && (it - burn_in) % lag == 0 {
                chain.accumulate(&mut theta, &mut phi);
                samples += 1;
            }
        }
    }
    if samples == 0 {
        chain.accumulate(&mut theta, &mut phi);
        samples = 1;
    }
    if samples > 1 {
        let s = samples as f64;
        theta.iter_mut().chain(phi.iter_mut()).for_each(|x| *x /= s);
    }

    Ok(TopicModel {
        params: params.resolved(),
        corpus_fingerprint: corpus.fingerprint(),
        num_docs: d,
        vocab_size: v,
        theta,
        phi,
    })
}

/// Fit one model per `k`; model `i` uses seed `base.seed + i`.
pub fn sweep_k(corpus: &CorpusMatrix, ks: &[usize], base: &TopicModelParams) -> Result<Vec<TopicModel>> {
    sweep_k_with(corpus, ks, base, Exec::default())
}

pub fn sweep_k_with(corpus: &CorpusMatrix, ks: &[usize], base: &TopicModelParams, exec: Exec) -> Result<Vec<TopicModel>> {
    if ks.is_empty() {
        return Err(Error::Config("k list is empty".into()));
    }
    exec.map(ks.len(), |i| {
        let params = TopicModelParams {
            k: ks[i],
            seed: base.seed.wrapping_add(i as u64),
            ..*base
        };
        train(corpus, &params)
    })
    .into_iter()
    .collect()
}

const MODEL_MAGIC: &[u8; 8] = b"RPTOPICM";

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    params: TopicModelParams,
    corpus_fingerprint: String,
    num_docs: usize,
    vocab_size: usize,
}

/// Run metadata written beside a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    pub params: TopicModelParams,
    pub corpus_fingerprint: String,
    pub model_fingerprint: String,
    pub started_at: String,
    pub finished_at: String,
}

impl TopicModel {
    /// Binary layout: magic, `u32` version, `u32` header length, JSON header,
    /// then `theta` and `phi` as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::to_vec(&ModelHeader {
            params: self.params,
            corpus_fingerprint: self.corpus_fingerprint.clone(),
            num_docs: self.num_docs,
            vocab_size: self.vocab_size,
        })?;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for x in self.theta.iter().chain(&self.phi) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Format(format!("truncated model file: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("not a topic model file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(io)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        r.read_exact(&mut word).map_err(io)?;
        let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut header).map_err(io)?;
        let header: ModelHeader = serde_json::from_slice(&header)?;
        let k = header.params.k;
        let mut read_floats = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf).map_err(io)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let theta = read_floats(header.num_docs * k)?;
        let phi = read_floats(k * header.vocab_size)?;
        Ok(TopicModel {
            params: header.params,
            corpus_fingerprint: header.corpus_fingerprint,
            num_docs: header.num_docs,
            vocab_size: header.vocab_size,
            theta,
            phi,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&bytes[..])
    }
}
