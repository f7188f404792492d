//! Epoch estimation: maximum-likelihood segmentation of a surprise series
//! into Gaussian epochs, with AIC to choose the number of epochs.
//!
//! An `n`-epoch model has `3n - 1` parameters: `n - 1` interior break points
//! plus a mean and a variance per epoch. The flat prior's constant is
//! dropped, so log-likelihoods are only meaningful in comparisons.

use std::f64::consts::PI;
use std::io::Write;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::VolumeRecord;
use crate::exec::Exec;
use crate::surprise::check_breaks;
use crate::{Error, Result};

/// Shortest allowed epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinLength {
    /// A fixed number of series points.
    Indices(usize),
    /// A calendar span. An epoch starting at `s` must reach a point dated at
    /// least this many years after `s`'s date.
    Years(f64),
}

/// Divisor used for the per-epoch mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide by the epoch length `m` (maximum likelihood).
    #[default]
    Mle,
    /// Divide by `m - 1`, including in the `m / 2` prefactor. Kept for
    /// comparison with results computed that way.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSearchConfig {
    pub n_max: usize,
    pub min_length: MinLength,
    pub variance_floor: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

impl Default for EpochSearchConfig {
    fn default() -> Self {
        EpochSearchConfig {
            n_max: 3,
            min_length: MinLength::Years(5.0),
            variance_floor: 1e-12,
            normalization: Normalization::Mle,
        }
    }
}

impl EpochSearchConfig {
    pub fn with_min_indices(n_max: usize, min_length: usize) -> Self {
        EpochSearchConfig {
            n_max,
            min_length: MinLength::Indices(min_length),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        match self.min_length {
            MinLength::Indices(l) if l < 2 => return Err(Error::Config("min_length must be at least 2".into())),
            MinLength::Years(y) if !(y > 0.0 && y.is_finite()) => {
                return Err(Error::Config("min_length in years must be positive".into()))
            }
            _ => {}
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Config("variance_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochModel {
    pub n: usize,
    /// Segment starts; the first is always 0.
    pub breaks: Vec<usize>,
    pub segments: Vec<Segment>,
    pub log_likelihood: f64,
    pub param_count: usize,
    pub aic: f64,
}

pub fn param_count(n: usize) -> usize {
    3 * n - 1
}

pub fn aic(n: usize, log_likelihood: f64) -> f64 {
    2.0 * param_count(n) as f64 - 2.0 * log_likelihood
}

fn segment_stats(seg: &[f64], floor: f64, norm: Normalization) -> (f64, f64, f64) {
    let m = seg.len() as f64;
    let denom = match norm {
        Normalization::Mle => m,
        Normalization::Literal => m - 1.0,
    };
    let mu = seg.iter().sum::<f64>() / denom;
    let var = seg.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / denom;
    let ll = -(denom / 2.0) * (1.0 + (2.0 * PI * var.max(floor)).ln());
    (mu, var, ll)
}

/// Log-likelihood of `series` split at `breaks`, with the default floor
/// (`1e-12`) and maximum-likelihood normalization.
pub fn segment_loglik(series: &[f64], breaks: &[usize]) -> Result<f64> {
    segment_loglik_with(series, breaks, 1e-12, Normalization::Mle)
}

/// `Σ_i -(m_i / 2) (1 + ln(2π max(σ̂²_i, floor)))` over the segments.
pub fn segment_loglik_with(series: &[f64], breaks: &[usize], floor: f64, norm: Normalization) -> Result<f64> {
    Ok(segments_of(series, breaks, floor, norm)?.1)
}

fn segments_of(series: &[f64], breaks: &[usize], floor: f64, norm: Normalization) -> Result<(Vec<Segment>, f64)> {
    if series.is_empty() {
        return Err(Error::TooShort("empty series".into()));
    }
    check_breaks(breaks, series.len())?;
    let ends = breaks.iter().skip(1).copied().chain(std::iter::once(series.len()));
    let mut total = 0.0;
    let mut segs = Vec::with_capacity(breaks.len());
    for (&s, e) in breaks.iter().zip(ends) {
        if e - s < 2 {
            return Err(Error::Segmentation(format!("segment [{s}, {e}) is shorter than 2")));
        }
        let (mean, variance, ll) = segment_stats(&series[s..e], floor, norm);
        total += ll;
        segs.push(Segment {
            start: s,
            end: e,
            mean,
            variance,
        });
    }
    Ok((segs, total))
}

/// A series prepared for repeated segment scoring.
#[derive(Debug, Clone)]
pub struct Segmenter<'a> {
    series: &'a [f64],
    config: EpochSearchConfig,
    /// Smallest allowed length for a segment starting at each index.
    min_span: Vec<usize>,
    /// Prefix sums of centred values and their squares.
    s1: Vec<f64>,
    s2: Vec<f64>,
    centre: f64,
    exec: Exec,
}

impl<'a> Segmenter<'a> {
    /// `dates` must be given (one per series point, nondecreasing) when the
    /// minimum length is a calendar span.
    pub fn new(series: &'a [f64], dates: Option<&[NaiveDate]>, config: &EpochSearchConfig) -> Result<Self> {
        config.validate()?;
        if series.is_empty() {
            return Err(Error::TooShort("empty series".into()));
        }
        if let Some(x) = series.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("series holds non-finite value {x}")));
        }
        let d = series.len();
        let min_span = match config.min_length {
            MinLength::Indices(l) => vec![l.max(2); d],
            MinLength::Years(years) => {
                let dates = dates.ok_or_else(|| Error::Config("a calendar min_length needs dates".into()))?;
                resolve_calendar_spans(dates, years, d)?
            }
        };
        let centre = series.iter().sum::<f64>() / d as f64;
        let mut s1 = Vec::with_capacity(d + 1);
        let mut s2 = Vec::with_capacity(d + 1);
        s1.push(0.0);
        s2.push(0.0);
        for &x in series {
            let c = x - centre;
            s1.push(s1.last().unwrap() + c);
            s2.push(s2.last().unwrap() + c * c);
        }
        Ok(Segmenter {
            series,
            config: *config,
            min_span,
            s1,
            s2,
            centre,
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Whether `[s, e)` may be an epoch.
    #[inline]
    pub fn valid(&self, s: usize, e: usize) -> bool {
        e > s && e - s >= self.min_span[s]
    }

    /// Log-likelihood contribution of `[s, e)` from prefix sums.
    #[inline]
    fn score(&self, s: usize, e: usize) -> f64 {
        let m = (e - s) as f64;
        let sum_c = self.s1[e] - self.s1[s];
        let sq_c = self.s2[e] - self.s2[s];
        let (denom, mu_c) = match self.config.normalization {
            Normalization::Mle => (m, sum_c / m),
            // mean taken on raw values, then re-centred
            Normalization::Literal => (m - 1.0, (sum_c + m * self.centre) / (m - 1.0) - self.centre),
        };
        // Σ (c - mu_c)² = Σc² - 2 mu_c Σc + m mu_c²
        let ss = (sq_c - 2.0 * mu_c * sum_c + m * mu_c * mu_c).max(0.0);
        let var = ss / denom;
        -(denom / 2.0) * (1.0 + (2.0 * PI * var.max(self.config.variance_floor)).ln())
    }

    fn model(&self, breaks: Vec<usize>) -> Result<EpochModel> {
        let (segments, ll) = segments_of(self.series, &breaks, self.config.variance_floor, self.config.normalization)?;
        let n = breaks.len();
        Ok(EpochModel {
            n,
            breaks,
            segments,
            log_likelihood: ll,
            param_count: param_count(n),
            aic: aic(n, ll),
        })
    }

    fn infeasible(&self, n: usize) -> Error {
        Error::Infeasible(format!(
            "no {n}-epoch segmentation of {} points satisfies the minimum epoch length",
            self.len()
        ))
    }

    /// Global maximum-likelihood `n`-epoch segmentation. Among equal
    /// likelihoods the lexicographically smallest break vector wins.
    pub fn fit(&self, n: usize) -> Result<EpochModel> {
        if n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let d = self.len();
        let breaks = match n {
            1 => self.valid(0, d).then(|| vec![0]),
            2 => self.fit_two(),
            3 => self.fit_three(),
            _ => self.fit_dp(n),
        };
        self.model(breaks.ok_or_else(|| self.infeasible(n))?)
    }

    fn fit_two(&self) -> Option<Vec<usize>> {
        let d = self.len();
        let mut best: Option<(f64, usize)> = None;
        for b in 1..d {
            if self.valid(0, b) && self.valid(b, d) {
                let v = self.score(0, b) + self.score(b, d);
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, b));
                }
            }
        }
        best.map(|(_, b)| vec![0, b])
    }

    fn fit_three(&self) -> Option<Vec<usize>> {
        let d = self.len();
        let per_first = self.exec.map(d, |a| {
            if a == 0 || !self.valid(0, a) {
                return None;
            }
            let head = self.score(0, a);
            let mut best: Option<(f64, usize)> = None;
            for b in a + 1..d {
                if self.valid(a, b) && self.valid(b, d) {
                    let v = head + (self.score(a, b) + self.score(b, d));
                    if best.is_none_or(|(bv, _)| v > bv) {
                        best = Some((v, b));
                    }
                }
            }
            best.map(|(v, b)| (v, a, b))
        });
        let mut best: Option<(f64, usize, usize)> = None;
        for c in per_first.into_iter().flatten() {
            if best.is_none_or(|(bv, _, _)| c.0 > bv) {
                best = Some(c);
            }
        }
        best.map(|(_, a, b)| vec![0, a, b])
    }

    /// Dynamic programme over suffixes: `suf[j][s]` is the best score for
    /// covering `[s, D)` with `j` epochs. Reconstruction walks forward taking
    /// the smallest maximizing next break.
    pub(crate) fn fit_dp(&self, n: usize) -> Option<Vec<usize>> {
        let d = self.len();
        let neg = f64::NEG_INFINITY;
        let mut suf = vec![vec![neg; d + 1]; n + 1];
        let mut next = vec![vec![usize::MAX; d + 1]; n + 1];
        for s in 0..d {
            if self.valid(s, d) {
                suf[1][s] = self.score(s, d);
                next[1][s] = d;
            }
        }
        for j in 2..=n {
            let (done, rest) = suf.split_at_mut(j);
            let prev = &done[j - 1];
            let row: Vec<(f64, usize)> = self.exec.map(d, |s| {
                let mut best = (neg, usize::MAX);
                for e in s + 1..d {
                    if prev[e] > neg && self.valid(s, e) {
                        let v = self.score(s, e) + prev[e];
                        if v > best.0 {
                            best = (v, e);
                        }
                    }
                }
                best
            });
            for (s, (v, e)) in row.into_iter().enumerate() {
                rest[0][s] = v;
                next[j][s] = e;
            }
        }
        if suf[n][0] == neg {
            return None;
        }
        let mut breaks = vec![0];
        let mut s = 0;
        for j in (2..=n).rev() {
            s = next[j][s];
            breaks.push(s);
        }
        Some(breaks)
    }

    /// Fit `n = 1..=n_max` and pick the lowest AIC. The search stops early
    /// at the first `n > 1` with no feasible segmentation; an infeasible
    /// single epoch is an error.
    pub fn select_n(&self) -> Result<(EpochModel, AicTable)> {
        let mut models = Vec::with_capacity(self.config.n_max);
        for n in 1..=self.config.n_max {
            match self.fit(n) {
                Ok(m) => models.push(m),
                Err(Error::Infeasible(_)) if n > 1 => break,
                Err(e) => return Err(e),
            }
        }
        let best = models
            .iter()
            .enumerate()
            .fold(0, |b, (i, m)| if m.aic < models[b].aic { i } else { b });
        let aic_min = models[best].aic;
        let rows = models
            .iter()
            .enumerate()
            .map(|(i, m)| AicRow {
                n: m.n,
                param_count: m.param_count,
                log_likelihood: m.log_likelihood,
                aic: m.aic,
                relative_likelihood: ((aic_min - m.aic) / 2.0).exp(),
                delta_loglik: (i > 0).then(|| m.log_likelihood - models[i - 1].log_likelihood),
                breaks: m.breaks.clone(),
            })
            .collect();
        Ok((models.swap_remove(best), AicTable { rows, selected: best + 1 }))
    }

    /// Log-likelihood of every valid two-epoch split, by break position.
    pub fn landscape(&self) -> Vec<(usize, f64)> {
        let d = self.len();
        (1..d)
            .filter(|&b| self.valid(0, b) && self.valid(b, d))
            .map(|b| (b, self.score(0, b) + self.score(b, d)))
            .collect()
    }
}

/// For each start `s`, the smallest `e - s` such that `dates[e - 1]` is at
/// least `years` after `dates[s]` (and at least 2). `usize::MAX` if none.
fn resolve_calendar_spans(dates: &[NaiveDate], years: f64, d: usize) -> Result<Vec<usize>> {
    if dates.len() != d {
        return Err(Error::LengthMismatch { expected: d, got: dates.len() });
    }
    if dates.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("dates must be nondecreasing".into()));
    }
    let months = Months::new((years * 12.0).round() as u32);
    let mut out = Vec::with_capacity(d);
    let mut e = 0;
    for s in 0..d {
        let target = dates[s].checked_add_months(months).unwrap_or(NaiveDate::MAX);
        e = e.max(s);
        while e < d && dates[e] < target {
            e += 1;
        }
        // dates[e] is the first point at or past the target
        out.push(if e < d { (e + 1 - s).max(2) } else { usize::MAX });
    }
    Ok(out)
}

/// Fit `n` epochs with an index-based minimum length.
pub fn fit(series: &[f64], n: usize, config: &EpochSearchConfig) -> Result<EpochModel> {
    Segmenter::new(series, None, config)?.fit(n)
}

/// Choose the epoch count by AIC with an index-based minimum length.
pub fn select_n(series: &[f64], config: &EpochSearchConfig) -> Result<(EpochModel, AicTable)> {
    Segmenter::new(series, None, config)?.select_n()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicRow {
    pub n: usize,
    pub param_count: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    /// `exp((AIC_min - AIC) / 2)`
    pub relative_likelihood: f64,
    /// Gain over the `n - 1` model, in natural-log units.
    pub delta_loglik: Option<f64>,
    pub breaks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicTable {
    pub rows: Vec<AicRow>,
    pub selected: usize,
}

/// Read dates of the records at each break index.
pub fn break_to_date(model: &EpochModel, records: &[VolumeRecord]) -> Result<Vec<(usize, NaiveDate)>> {
    model
        .breaks
        .iter()
        .map(|&b| {
            records.get(b).map(|r| (b, r.read_date)).ok_or(Error::OutOfRange {
                index: b,
                len: records.len(),
            })
        })
        .collect()
}

/// `break,log_likelihood` over every valid single break.
pub fn write_landscape_csv<W: Write>(out: W, landscape: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["break", "log_likelihood"])?;
    for (b, ll) in landscape {
        w.write_record([b.to_string(), ll.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<landscape csv>", e))?;
    Ok(())
}
