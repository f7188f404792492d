//! Greedy minimum-surprise traversals and rank-order statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::surprise::{kl_bits, TopicDistribution};
use crate::{Error, Result};

/// `m[i][j]` is the surprise of reading `j` right after `i`:
/// `KL(theta_j | theta_i)`. The diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DivergenceMatrix {
    pub fn from_thetas(thetas: &[TopicDistribution]) -> Result<Self> {
        Self::from_thetas_with(thetas, Exec::default())
    }

    /// Rows are computed independently and may run in parallel.
    pub fn from_thetas_with(thetas: &[TopicDistribution], exec: Exec) -> Result<Self> {
        if let Some(first) = thetas.first() {
            if let Some(bad) = thetas.iter().find(|t| t.len() != first.len()) {
                return Err(Error::LengthMismatch {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        let n = thetas.len();
        let rows = exec.map(n, |i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { kl_bits(thetas[j].probs(), thetas[i].probs()) })
                .collect::<Vec<f64>>()
        });
        Ok(DivergenceMatrix {
            n,
            data: rows.concat(),
        })
    }

    /// Build from explicit rows. Entries must be finite and nonnegative; the
    /// diagonal must be zero.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if row[i] != 0.0 {
                return Err(Error::Config(format!("diagonal entry {i} is {}", row[i])));
            }
            if let Some(x) = row.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::Config(format!("row {i} holds invalid divergence {x}")));
            }
            data.extend(row);
        }
        Ok(DivergenceMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.n..(from + 1) * self.n]
    }

    /// Row-major CSV with a header of document ids; the first column names the row.
    pub fn write_csv<W: Write, S: AsRef<str>>(&self, out: W, ids: &[S]) -> Result<()> {
        if ids.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: ids.len(),
            });
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["doc_id".to_string()];
        header.extend(ids.iter().map(|s| s.as_ref().to_string()));
        w.write_record(&header)?;
        for (i, id) in ids.iter().enumerate() {
            let mut rec = vec![id.as_ref().to_string()];
            rec.extend(self.row(i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<matrix csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyPath {
    pub order: Vec<usize>,
    /// Surprise of each step; `step_bits[s]` is paid moving to `order[s + 1]`.
    pub step_bits: Vec<f64>,
    pub mean_bits: f64,
}

impl GreedyPath {
    fn new(order: Vec<usize>, step_bits: Vec<f64>) -> Self {
        let mean_bits = crate::surprise::mean(&step_bits);
        GreedyPath {
            order,
            step_bits,
            mean_bits,
        }
    }

    /// `step,doc_id,step_bits`; the starting document has an empty `step_bits`.
    pub fn write_csv<W: Write, S: AsRef<str>>(&self, out: W, ids: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "doc_id", "step_bits"])?;
        for (s, &doc) in self.order.iter().enumerate() {
            let id = ids.get(doc).ok_or(Error::OutOfRange {
                index: doc,
                len: ids.len(),
            })?;
            let bits = if s == 0 { String::new() } else { self.step_bits[s - 1].to_string() };
            w.write_record([s.to_string(), id.as_ref().to_string(), bits])?;
        }
        w.flush().map_err(|e| Error::io("<path csv>", e))?;
        Ok(())
    }
}

fn check_start(n: usize, start: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::TooShort("no documents".into()));
    }
    if start >= n {
        return Err(Error::OutOfRange { index: start, len: n });
    }
    Ok(())
}

/// Visit every document once, always moving to the unvisited document with
/// the smallest text-to-text divergence from the current one. Ties go to
/// the lowest index.
pub fn greedy_t2t_path(matrix: &DivergenceMatrix, start: usize) -> Result<GreedyPath> {
    let n = matrix.len();
    check_start(n, start)?;
    let mut visited = vec![false; n];
    visited[start] = true;
    let mut order = vec![start];
    let mut steps = Vec::with_capacity(n - 1);
    let mut cur = start;
    for _ in 1..n {
        let row = matrix.row(cur);
        let mut best = usize::MAX;
        for j in 0..n {
            if !visited[j] && (best == usize::MAX || row[j] < row[best]) {
                best = j;
            }
        }
        visited[best] = true;
        steps.push(row[best]);
        order.push(best);
        cur = best;
    }
    Ok(GreedyPath::new(order, steps))
}

/// Visit every document once, always moving to the unvisited document with
/// the smallest text-to-past divergence from the running mean of documents
/// visited so far. Ties go to the lowest index.
pub fn greedy_t2p_path(thetas: &[TopicDistribution], start: usize) -> Result<GreedyPath> {
    let n = thetas.len();
    check_start(n, start)?;
    let k = thetas[start].len();
    if let Some(bad) = thetas.iter().find(|t| t.len() != k) {
        return Err(Error::LengthMismatch { expected: k, got: bad.len() });
    }
    let mut visited = vec![false; n];
    visited[start] = true;
    let mut order = vec![start];
    let mut steps = Vec::with_capacity(n - 1);
    let mut sum = thetas[start].probs().to_vec();
    let mut past = vec![0.0; k];
    for count in 1..n {
        for (p, s) in past.iter_mut().zip(&sum) {
            *p = s / count as f64;
        }
        let mut best = usize::MAX;
        let mut best_bits = f64::INFINITY;
        for j in 0..n {
            if visited[j] {
                continue;
            }
            let bits = kl_bits(thetas[j].probs(), &past);
            if best == usize::MAX || bits < best_bits {
                best = j;
                best_bits = bits;
            }
        }
        visited[best] = true;
        steps.push(best_bits);
        order.push(best);
        sum.iter_mut().zip(thetas[best].probs()).for_each(|(s, x)| *s += x);
    }
    Ok(GreedyPath::new(order, steps))
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::NotPermutation(format!("length {} for {n} documents", order.len())));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::NotPermutation(format!("index {i} missing or repeated")));
        }
    }
    Ok(())
}

/// Competition rank of each step's divergence within its source row:
/// `1 + #{j != from : m[from][j] < m[from][to]}`. Rank 1 is the nearest.
pub fn step_ranks(matrix: &DivergenceMatrix, order: &[usize]) -> Result<Vec<usize>> {
    check_permutation(order, matrix.len())?;
    Ok(order
        .windows(2)
        .map(|w| {
            let (from, to) = (w[0], w[1]);
            let row = matrix.row(from);
            let target = row[to];
            1 + row.iter().enumerate().filter(|&(j, &x)| j != from && x < target).count()
        })
        .collect())
}

/// Power-of-two rank bin: `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankBin {
    pub lo: usize,
    pub hi: usize,
    pub observed: usize,
    pub null: usize,
    pub observed_frac: f64,
    pub null_frac: f64,
    /// `observed_frac / null_frac`; absent when the null never hit this bin.
    pub ratio: Option<f64>,
    /// 95% Wilson band on the observed fraction, scaled by `null_frac`.
    pub ratio_lo: Option<f64>,
    pub ratio_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDistribution {
    pub observed_ranks: Vec<usize>,
    pub null_orders: usize,
    pub bins: Vec<RankBin>,
}

fn bin_of(rank: usize) -> usize {
    (usize::BITS - 1 - rank.leading_zeros()) as usize
}

fn wilson(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt()) / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Ranks of the observed consecutive choices, log-binned and compared with
/// the same statistic pooled over null orders.
pub fn rank_distribution(matrix: &DivergenceMatrix, observed: &[usize], null_orders: &[Vec<usize>]) -> Result<RankDistribution> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::TooShort("rank statistics need at least 2 documents".into()));
    }
    let observed_ranks = step_ranks(matrix, observed)?;
    let nbins = bin_of(n - 1) + 1;
    let mut obs = vec![0usize; nbins];
    for &r in &observed_ranks {
        obs[bin_of(r)] += 1;
    }
    let mut null = vec![0usize; nbins];
    let mut null_total = 0;
    for order in null_orders {
        for r in step_ranks(matrix, order)? {
            null[bin_of(r)] += 1;
            null_total += 1;
        }
    }
    let obs_total = observed_ranks.len();
    let bins = (0..nbins)
        .map(|b| {
            let observed_frac = obs[b] as f64 / obs_total as f64;
            let null_frac = if null_total == 0 { 0.0 } else { null[b] as f64 / null_total as f64 };
            let (lo, hi) = wilson(obs[b], obs_total);
            let scaled = |x: f64| (null_frac > 0.0).then(|| x / null_frac);
            RankBin {
                lo: 1 << b,
                hi: 1 << (b + 1),
                observed: obs[b],
                null: null[b],
                observed_frac,
                null_frac,
                ratio: scaled(observed_frac),
                ratio_lo: scaled(lo),
                ratio_hi: scaled(hi),
            }
        })
        .collect();
    Ok(RankDistribution {
        observed_ranks,
        null_orders: null_orders.len(),
        bins,
    })
}
