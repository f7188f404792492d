//! Slow, obviously-correct reference implementations used to check the
//! optimized code. Nothing here shares code with `readpath-core` beyond its
//! plain data types.

use std::path::PathBuf;

use chrono::NaiveDate;
use readpath_core::corpus::VolumeRecord;

/// `Σ q log2(q / p)` term by term.
pub fn kl_bits(q: &[f64], p: &[f64]) -> f64 {
    q.iter().zip(p).map(|(a, b)| a * (a / b).log2()).sum()
}

/// Surprise of each row against the previous row.
pub fn t2t(rows: &[Vec<f64>]) -> Vec<f64> {
    (1..rows.len()).map(|i| kl_bits(&rows[i], &rows[i - 1])).collect()
}

/// Every permutation of `0..n`, in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Assignments `perm` (title `perm[t]` read in slot `t`) in which no title
/// is read before the year it was published.
pub fn valid_assignments(slot_years: &[i32], pub_years: &[i32]) -> Vec<Vec<usize>> {
    permutations(slot_years.len())
        .into_iter()
        .filter(|p| p.iter().zip(slot_years).all(|(&t, &y)| pub_years[t] <= y))
        .collect()
}

/// Records read on 1 June of each slot year, with the given publication years.
pub fn records_from_years(slot_years: &[i32], pub_years: &[i32]) -> Vec<VolumeRecord> {
    slot_years
        .iter()
        .zip(pub_years)
        .enumerate()
        .map(|(i, (&y, &p))| VolumeRecord {
            id: format!("v{i}"),
            title: String::new(),
            read_date: NaiveDate::from_ymd_opt(y, 6, 1).expect("valid year"),
            read_seq: i,
            pub_year: p,
            text_path: PathBuf::new(),
        })
        .collect()
}

/// Maximum Gaussian log-likelihood of one segment, two-pass.
pub fn gaussian_loglik(seg: &[f64]) -> f64 {
    let m = seg.len() as f64;
    let mu = seg.iter().sum::<f64>() / m;
    let var = seg.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m;
    -(m / 2.0) * (1.0 + (2.0 * std::f64::consts::PI * var.max(1e-12)).ln())
}

/// Best two-segment split with both parts at least `min_len` long; the
/// earliest break wins ties.
pub fn best_single_break(series: &[f64], min_len: usize) -> Option<(usize, f64)> {
    let d = series.len();
    let mut best: Option<(usize, f64)> = None;
    for b in min_len..=d.saturating_sub(min_len) {
        let ll = gaussian_loglik(&series[..b]) + gaussian_loglik(&series[b..]);
        if best.is_none_or(|(_, v)| ll > v) {
            best = Some((b, ll));
        }
    }
    best
}

/// Greedy successor order for a square matrix, checking every step by a
/// full scan of the remaining candidates.
pub fn greedy_order(m: &[Vec<f64>], start: usize) -> Vec<usize> {
    let n = m.len();
    let mut visited = vec![false; n];
    let mut order = vec![start];
    visited[start] = true;
    while order.len() < n {
        let cur = *order.last().unwrap();
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !visited[j] && best.is_none_or(|b| m[cur][j] < m[cur][b]) {
                best = Some(j);
            }
        }
        let j = best.unwrap();
        visited[j] = true;
        order.push(j);
    }
    order
}
