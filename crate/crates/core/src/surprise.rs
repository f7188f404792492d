//! KL divergence and surprise along a document ordering.
//!
//! All values are in bits. A series over `D` documents has `D - 1` values;
//! entry `i - 1` is the surprise of the document at position `i` given what
//! came before it. Position 0 has no value.

use std::borrow::Borrow;
use std::fmt;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::VolumeRecord;
use crate::{Error, Result, FORMAT_VERSION};

const SIMPLEX_TOL: f64 = 1e-9;

/// A strictly positive probability vector over topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TopicDistribution(Vec<f64>);

impl TopicDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Distribution("empty vector".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Distribution(format!("entry {i} is {p}, must be positive")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Distribution(format!("sums to {sum}")));
        }
        Ok(TopicDistribution(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for TopicDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TopicDistribution::new(v)
    }
}

impl From<TopicDistribution> for Vec<f64> {
    fn from(t: TopicDistribution) -> Self {
        t.0
    }
}

impl AsRef<[f64]> for TopicDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `Σ q_i log2(q_i / p_i)` over positive slices of equal length.
///
/// Rounding can push the sum a hair below zero when `q ≈ p`; the result is
/// clamped at zero.
#[inline]
pub(crate) fn kl_bits(q: &[f64], p: &[f64]) -> f64 {
    debug_assert_eq!(q.len(), p.len());
    let s: f64 = q.iter().zip(p).map(|(&qi, &pi)| qi * (qi / pi).log2()).sum();
    s.max(0.0)
}

/// KL divergence of `q` from `p`, in bits: the surprise of observing `q`
/// when expecting `p`.
pub fn kl_divergence(q: &TopicDistribution, p: &TopicDistribution) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(kl_bits(&q.0, &p.0))
}

/// Which surprise measure a series holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurpriseKind {
    /// Against the immediately preceding document.
    T2T,
    /// Against the mean of every preceding document.
    T2P,
    /// Against the mean of up to `N` preceding documents.
    T2N(usize),
}

impl SurpriseKind {
    /// Lowercase tag for file names.
    pub fn tag(&self) -> String {
        match self {
            SurpriseKind::T2T => "t2t".into(),
            SurpriseKind::T2P => "t2p".into(),
            SurpriseKind::T2N(n) => format!("t2n{n}"),
        }
    }
}

impl fmt::Display for SurpriseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurpriseKind::T2T => write!(f, "T2T"),
            SurpriseKind::T2P => write!(f, "T2P"),
            SurpriseKind::T2N(n) => write!(f, "T2N({n})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingLabel {
    ReadingOrder,
    PublicationOrder,
    PermutationSample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseSeries {
    pub kind: SurpriseKind,
    pub ordering: OrderingLabel,
    /// `values[i - 1]` is the surprise at position `i`.
    pub values: Vec<f64>,
}

impl SurpriseSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Average bits per step.
    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Surprise values for rows given in order. `window = None` means the whole
/// past; `Some(n)` the last `n` rows. Callers guarantee at least two rows,
/// equal lengths and positivity.
pub(crate) fn series_values(rows: &[&[f64]], window: Option<usize>) -> Vec<f64> {
    let k = rows[0].len();
    let mut out = Vec::with_capacity(rows.len() - 1);
    match window {
        None => {
            let mut sum = vec![0.0; k];
            let mut mean = vec![0.0; k];
            for i in 1..rows.len() {
                for (s, x) in sum.iter_mut().zip(rows[i - 1]) {
                    *s += x;
                }
                let n = i as f64;
                for (m, s) in mean.iter_mut().zip(&sum) {
                    *m = s / n;
                }
                out.push(kl_bits(rows[i], &mean));
            }
        }
        Some(1) => {
            for i in 1..rows.len() {
                out.push(kl_bits(rows[i], rows[i - 1]));
            }
        }
        Some(w) => {
            let mut sum = vec![0.0; k];
            for i in 1..rows.len() {
                let lo = i.saturating_sub(w);
                sum.iter_mut().for_each(|s| *s = 0.0);
                for row in &rows[lo..i] {
                    for (s, x) in sum.iter_mut().zip(*row) {
                        *s += x;
                    }
                }
                let n = (i - lo) as f64;
                sum.iter_mut().for_each(|s| *s /= n);
                out.push(kl_bits(rows[i], &sum));
            }
        }
    }
    out
}

pub(crate) fn window_of(kind: SurpriseKind) -> Option<usize> {
    match kind {
        SurpriseKind::T2T => Some(1),
        SurpriseKind::T2P => None,
        SurpriseKind::T2N(n) => Some(n),
    }
}

fn check_rows<T: Borrow<TopicDistribution>>(thetas: &[T]) -> Result<Vec<&[f64]>> {
    if thetas.len() < 2 {
        return Err(Error::TooShort(format!(
            "a surprise series needs at least 2 documents, got {}",
            thetas.len()
        )));
    }
    let rows: Vec<&[f64]> = thetas.iter().map(|t| t.borrow().probs()).collect();
    let k = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::LengthMismatch { expected: k, got: bad.len() });
    }
    Ok(rows)
}

/// Surprise series of the given kind for documents in the given order.
pub fn series<T: Borrow<TopicDistribution>>(
    thetas: &[T],
    kind: SurpriseKind,
    ordering: OrderingLabel,
) -> Result<SurpriseSeries> {
    if let SurpriseKind::T2N(0) = kind {
        return Err(Error::Config("text-to-N window must be at least 1".into()));
    }
    let rows = check_rows(thetas)?;
    Ok(SurpriseSeries {
        kind,
        ordering,
        values: series_values(&rows, window_of(kind)),
    })
}

/// Text-to-text surprise: each document against its predecessor.
pub fn t2t_series<T: Borrow<TopicDistribution>>(thetas: &[T]) -> Result<SurpriseSeries> {
    series(thetas, SurpriseKind::T2T, OrderingLabel::ReadingOrder)
}

/// Text-to-past surprise: each document against the unweighted mean of all
/// earlier documents.
pub fn t2p_series<T: Borrow<TopicDistribution>>(thetas: &[T]) -> Result<SurpriseSeries> {
    series(thetas, SurpriseKind::T2P, OrderingLabel::ReadingOrder)
}

/// Text-to-N surprise: each document against the mean of the `min(n, i)`
/// documents immediately before it.
pub fn t2n_series<T: Borrow<TopicDistribution>>(thetas: &[T], n: usize) -> Result<SurpriseSeries> {
    series(thetas, SurpriseKind::T2N(n), OrderingLabel::ReadingOrder)
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Running sum of `values - null_mean`. A falling curve marks below-null
/// surprise.
pub fn cumulative_relative(values: &[f64], null_mean: &[f64]) -> Result<Vec<f64>> {
    check_same_len(values, null_mean)?;
    let mut acc = 0.0;
    Ok(values
        .iter()
        .zip(null_mean)
        .map(|(v, m)| {
            acc += v - m;
            acc
        })
        .collect())
}

/// Validate segment start indices for a series of length `len`.
pub fn check_breaks(breaks: &[usize], len: usize) -> Result<()> {
    if breaks.first() != Some(&0) {
        return Err(Error::Segmentation("breaks must start at 0".into()));
    }
    if breaks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Segmentation("breaks must be strictly increasing".into()));
    }
    if let Some(&last) = breaks.last() {
        if last >= len {
            return Err(Error::Segmentation(format!("break {last} is past the end of a length-{len} series")));
        }
    }
    Ok(())
}

/// Mean of `values - null_mean` within each segment starting at `breaks`.
/// Positive means above-null surprise (exploration).
pub fn epoch_mean_relative(values: &[f64], null_mean: &[f64], breaks: &[usize]) -> Result<Vec<f64>> {
    check_same_len(values, null_mean)?;
    check_breaks(breaks, values.len())?;
    let ends = breaks.iter().skip(1).copied().chain(std::iter::once(values.len()));
    Ok(breaks
        .iter()
        .zip(ends)
        .map(|(&s, e)| {
            let d: f64 = (s..e).map(|i| values[i] - null_mean[i]).sum();
            d / (e - s) as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub date: NaiveDate,
    /// Readings per month inside the window centred on `date`.
    pub per_month: f64,
}

const DAYS_PER_MONTH: f64 = 365.25 / 12.0;

/// Centred moving reading rate, evaluated at each distinct date.
///
/// A date `d'` is inside the window at `d` when `|d' - d|` is at most half
/// the window length (`window_months * 365.25 / 12` days).
pub fn reading_density(dates: &[NaiveDate], window_months: f64) -> Result<Vec<DensityPoint>> {
    if dates.is_empty() {
        return Err(Error::TooShort("no dates".into()));
    }
    if !(window_months > 0.0) {
        return Err(Error::Config("window must be positive".into()));
    }
    if dates.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("dates must be sorted".into()));
    }
    let half = window_months * DAYS_PER_MONTH / 2.0;
    let mut out: Vec<DensityPoint> = Vec::new();
    let mut lo = 0;
    let mut hi = 0;
    for (i, &d) in dates.iter().enumerate() {
        if i > 0 && dates[i - 1] == d {
            continue;
        }
        while ((d - dates[lo]).num_days() as f64) > half {
            lo += 1;
        }
        while hi < dates.len() && ((dates[hi] - d).num_days() as f64) <= half {
            hi += 1;
        }
        out.push(DensityPoint {
            date: d,
            per_month: (hi - lo) as f64 / window_months,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Date as a fractional year: `year + (day_of_year - 1) / days_in_year`.
pub fn decimal_year(d: NaiveDate) -> f64 {
    let days = if d.leap_year() { 366.0 } else { 365.0 };
    d.year() as f64 + (d.ordinal0() as f64) / days
}

/// Ordinary least squares of `y` on `x`. `r2` is 0 when `y` is constant.
pub fn ols(x: &[f64], y: &[f64]) -> Result<Regression> {
    check_same_len(x, y)?;
    if x.len() < 2 {
        return Err(Error::TooShort("regression needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("all x values are identical; slope undefined".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 0.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(Regression {
        slope,
        intercept,
        r2,
        n: x.len(),
    })
}

/// Regress publication year on read date (decimal years).
pub fn pub_read_regression(records: &[VolumeRecord]) -> Result<Regression> {
    let x: Vec<f64> = records.iter().map(|r| decimal_year(r.read_date)).collect();
    let y: Vec<f64> = records.iter().map(|r| r.pub_year as f64).collect();
    ols(&x, &y)
}

/// One row of a series export. `doc_id` and `date` are empty for orderings
/// without a single document per position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesRow {
    pub position: usize,
    pub doc_id: String,
    pub date: String,
    pub value_bits: f64,
}

/// Write `position,doc_id,date,value_bits`. `docs`, when given, lists the
/// documents in series order (length `len + 1`, position 0 included).
pub fn write_series_csv<W: Write>(out: W, series: &SurpriseSeries, docs: Option<&[&VolumeRecord]>) -> Result<()> {
    if let Some(d) = docs {
        if d.len() != series.len() + 1 {
            return Err(Error::LengthMismatch {
                expected: series.len() + 1,
                got: d.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(out);
    for (i, &v) in series.values.iter().enumerate() {
        let position = i + 1;
        let (doc_id, date) = match docs {
            Some(d) => (d[position].id.clone(), d[position].read_date.to_string()),
            None => (String::new(), String::new()),
        };
        w.serialize(SeriesRow {
            position,
            doc_id,
            date,
            value_bits: v,
        })?;
    }
    w.flush().map_err(|e| Error::io("<series csv>", e))?;
    Ok(())
}

/// JSON metadata written next to a series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub format_version: u32,
    pub kind: SurpriseKind,
    pub ordering: OrderingLabel,
    pub model_fingerprint: String,
    pub length: usize,
    pub mean_bits: f64,
}

impl SeriesMeta {
    pub fn new(series: &SurpriseSeries, model_fingerprint: impl Into<String>) -> Self {
        SeriesMeta {
            format_version: FORMAT_VERSION,
            kind: series.kind,
            ordering: series.ordering,
            model_fingerprint: model_fingerprint.into(),
            length: series.len(),
            mean_bits: series.mean(),
        }
    }
}
