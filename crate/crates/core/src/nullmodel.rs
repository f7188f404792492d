//! Publication-date-constrained null model and publication-order baseline.
//!
//! The null holds the reading dates fixed and reassigns titles to them
//! without replacement, allowing a title at a slot only if it was published
//! no later than the slot's year.
//!
//! Uniform sampling works slot by slot. With slots ascending by date, the
//! feasible title sets are nested prefixes of the titles sorted by
//! publication year. Every choice at slot `t` removes exactly one title from
//! every later slot's feasible set. So the number of completions does not
//! depend on which title was chosen, and a uniform pick at each slot
//! gives an exactly uniform draw over all valid permutations.

use std::io::Write;

use chrono::Datelike;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::VolumeRecord;
use crate::exec::Exec;
use crate::rng;
use crate::surprise::{kl_bits, mean, series_values, window_of, OrderingLabel, SurpriseKind, SurpriseSeries, TopicDistribution};
use crate::{Error, Result, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullConfig {
    pub samples: usize,
    pub seed: u64,
    /// Tie groups up to this size are averaged exactly in publication order.
    pub within_year_exact_threshold: usize,
    /// Shuffles used when some tie group is too large for exact averaging.
    pub within_year_samples: usize,
}

impl Default for NullConfig {
    fn default() -> Self {
        NullConfig {
            samples: 1000,
            seed: 0,
            within_year_exact_threshold: 6,
            within_year_samples: 100,
        }
    }
}

impl NullConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::Config("null samples must be at least 1".into()));
        }
        if self.within_year_samples < 1 {
            return Err(Error::Config("within_year_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Slots and titles prepared for repeated sampling.
#[derive(Debug, Clone)]
pub struct ConstraintPlan {
    slot_years: Vec<i32>,
    pub_years: Vec<i32>,
    /// Title indices sorted by publication year (stable).
    titles_by_year: Vec<usize>,
    /// Number of titles feasible at each slot; a prefix of `titles_by_year`.
    feasible: Vec<usize>,
}

impl ConstraintPlan {
    /// Slots are the records in the given (reading) order; titles are the
    /// same records. Fails if dates are unsorted or the instance is infeasible.
    pub fn new(records: &[VolumeRecord]) -> Result<Self> {
        if records.windows(2).any(|w| w[0].read_date > w[1].read_date) {
            return Err(Error::Config("records must be in reading order".into()));
        }
        let slot_years: Vec<i32> = records.iter().map(|r| r.read_date.year()).collect();
        let pub_years: Vec<i32> = records.iter().map(|r| r.pub_year).collect();
        Self::from_years(slot_years, pub_years)
    }

    /// Build from raw years; `slot_years` must be nondecreasing.
    pub fn from_years(slot_years: Vec<i32>, pub_years: Vec<i32>) -> Result<Self> {
        if slot_years.len() != pub_years.len() {
            return Err(Error::LengthMismatch {
                expected: slot_years.len(),
                got: pub_years.len(),
            });
        }
        if slot_years.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("slot years must be nondecreasing".into()));
        }
        let mut titles_by_year: Vec<usize> = (0..pub_years.len()).collect();
        titles_by_year.sort_by_key(|&i| pub_years[i]);
        let mut feasible = Vec::with_capacity(slot_years.len());
        let mut n = 0;
        for (t, &y) in slot_years.iter().enumerate() {
            while n < titles_by_year.len() && pub_years[titles_by_year[n]] <= y {
                n += 1;
            }
            if n < t + 1 {
                return Err(Error::Infeasible(format!(
                    "slot {t} (year {y}) has {n} titles published by then for {} slots",
                    t + 1
                )));
            }
            feasible.push(n);
        }
        Ok(ConstraintPlan {
            slot_years,
            pub_years,
            titles_by_year,
            feasible,
        })
    }

    pub fn len(&self) -> usize {
        self.slot_years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_years.is_empty()
    }

    /// Draw one valid assignment: `perm[t]` is the title placed at slot `t`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut pool = Vec::with_capacity(self.len());
        let mut next = 0;
        let mut perm = Vec::with_capacity(self.len());
        for &f in &self.feasible {
            while next < f {
                pool.push(self.titles_by_year[next]);
                next += 1;
            }
            let j = rng.random_range(0..pool.len());
            perm.push(pool.swap_remove(j));
        }
        perm
    }

    /// True when `perm` is a permutation honouring every slot's year.
    pub fn is_valid(&self, perm: &[usize]) -> bool {
        if perm.len() != self.len() {
            return false;
        }
        let mut seen = vec![false; self.len()];
        perm.iter().zip(&self.slot_years).all(|(&title, &y)| {
            title < seen.len() && !std::mem::replace(&mut seen[title], true) && self.pub_years[title] <= y
        })
    }

    /// Number of valid permutations, `Π_t (feasible_t - t)`, as `f64`.
    pub fn count_valid(&self) -> f64 {
        self.feasible.iter().enumerate().map(|(t, &f)| (f - t) as f64).product()
    }
}

/// Draw one uniformly random valid reassignment of titles to reading slots.
pub fn sample_constrained_permutation<R: Rng + ?Sized>(records: &[VolumeRecord], rng: &mut R) -> Result<Vec<usize>> {
    Ok(ConstraintPlan::new(records)?.sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullEnsemble {
    pub kind: SurpriseKind,
    pub config: NullConfig,
    /// Mean surprise of the observed (reading) order.
    pub observed_mean: f64,
    /// Mean surprise of each sampled permutation.
    pub sample_means: Vec<f64>,
    pub null_mean: f64,
    pub null_std: f64,
    pub null_p2_5: f64,
    pub null_p97_5: f64,
    /// One-sided, add-one: `(#{sample <= observed} + 1) / (M + 1)`.
    pub p_value: f64,
    pub position_mean: Vec<f64>,
    pub position_std: Vec<f64>,
    /// The sampled permutations, kept for rank statistics.
    #[serde(skip)]
    pub permutations: Vec<Vec<usize>>,
}

fn sample_std(values: &[f64], m: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn rows_of(thetas: &[TopicDistribution]) -> Vec<&[f64]> {
    thetas.iter().map(TopicDistribution::probs).collect()
}

/// Sample `config.samples` constrained permutations and summarise their
/// surprise against the observed reading order.
pub fn build_null(
    thetas: &[TopicDistribution],
    records: &[VolumeRecord],
    kind: SurpriseKind,
    config: &NullConfig,
) -> Result<NullEnsemble> {
    build_null_with(thetas, records, kind, config, Exec::default())
}

pub fn build_null_with(
    thetas: &[TopicDistribution],
    records: &[VolumeRecord],
    kind: SurpriseKind,
    config: &NullConfig,
    exec: Exec,
) -> Result<NullEnsemble> {
    config.validate()?;
    if thetas.len() != records.len() {
        return Err(Error::LengthMismatch {
            expected: records.len(),
            got: thetas.len(),
        });
    }
    let observed = crate::surprise::series(thetas, kind, OrderingLabel::ReadingOrder)?;
    let plan = ConstraintPlan::new(records)?;
    let rows = rows_of(thetas);
    let window = window_of(kind);

    let draws = exec.map(config.samples, |j| {
        let mut rng = rng::stream(config.seed, j as u64);
        let perm = plan.sample(&mut rng);
        let ordered: Vec<&[f64]> = perm.iter().map(|&i| rows[i]).collect();
        let values = series_values(&ordered, window);
        (perm, values)
    });

    for (j, (perm, _)) in draws.iter().enumerate() {
        if !plan.is_valid(perm) {
            return Err(Error::Invariant(format!("null sample {j} violates the publication constraint")));
        }
    }

    let positions = observed.len();
    let m = draws.len() as f64;
    let sample_means: Vec<f64> = draws.iter().map(|(_, v)| mean(v)).collect();
    let mut position_mean = vec![0.0; positions];
    for (_, v) in &draws {
        position_mean.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    position_mean.iter_mut().for_each(|a| *a /= m);
    let position_std: Vec<f64> = (0..positions)
        .map(|p| {
            if draws.len() < 2 {
                return 0.0;
            }
            let ss: f64 = draws.iter().map(|(_, v)| (v[p] - position_mean[p]).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect();

    let observed_mean = observed.mean();
    let null_mean = mean(&sample_means);
    let null_std = sample_std(&sample_means, null_mean);
    let mut sorted = sample_means.clone();
    sorted.sort_by(f64::total_cmp);
    let below = sample_means.iter().filter(|&&s| s <= observed_mean).count();
    let p_value = (below + 1) as f64 / (m + 1.0);

    Ok(NullEnsemble {
        kind,
        config: *config,
        observed_mean,
        null_mean,
        null_std,
        null_p2_5: quantile(&sorted, 0.025),
        null_p97_5: quantile(&sorted, 0.975),
        p_value,
        position_mean,
        position_std,
        sample_means,
        permutations: draws.into_iter().map(|(p, _)| p).collect(),
    })
}

/// Summary JSON for an ensemble (per-sample arrays omitted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub format_version: u32,
    pub kind: SurpriseKind,
    pub config: NullConfig,
    pub observed_mean: f64,
    pub null_mean: f64,
    pub null_std: f64,
    pub null_p2_5: f64,
    pub null_p97_5: f64,
    pub p_value: f64,
}

impl NullEnsemble {
    pub fn summary(&self) -> NullSummary {
        NullSummary {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            config: self.config,
            observed_mean: self.observed_mean,
            null_mean: self.null_mean,
            null_std: self.null_std,
            null_p2_5: self.null_p2_5,
            null_p97_5: self.null_p97_5,
            p_value: self.p_value,
        }
    }

    /// `position,null_mean_bits,null_std_bits`
    pub fn write_positions_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["position", "null_mean_bits", "null_std_bits"])?;
        for (i, (m, s)) in self.position_mean.iter().zip(&self.position_std).enumerate() {
            w.write_record([(i + 1).to_string(), m.to_string(), s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<null csv>", e))?;
        Ok(())
    }
}

/// How the publication-order series was averaged over within-year orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum TieAveraging {
    /// Exact expectation over every within-year order.
    Exact,
    /// Mean over this many random within-year shuffles.
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationOrder {
    pub series: SurpriseSeries,
    pub averaging: TieAveraging,
    /// Documents sorted by publication year, ties in reading order.
    pub base_order: Vec<usize>,
    pub largest_tie_group: usize,
}

/// Surprise along publication order, averaged over the orders of documents
/// that share a publication year.
///
/// Averaging is exact when every tie group has at most
/// `within_year_exact_threshold` members and the kind is T2T or T2P.
/// Otherwise it is a Monte Carlo mean over `within_year_samples` shuffles.
pub fn publication_order_series(
    thetas: &[TopicDistribution],
    records: &[VolumeRecord],
    kind: SurpriseKind,
    config: &NullConfig,
) -> Result<PublicationOrder> {
    publication_order_series_with(thetas, records, kind, config, Exec::default())
}

pub fn publication_order_series_with(
    thetas: &[TopicDistribution],
    records: &[VolumeRecord],
    kind: SurpriseKind,
    config: &NullConfig,
    exec: Exec,
) -> Result<PublicationOrder> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::TooShort("empty corpus".into()));
    }
    if thetas.len() != records.len() {
        return Err(Error::LengthMismatch {
            expected: records.len(),
            got: thetas.len(),
        });
    }
    // validates length >= 2, equal k, window >= 1
    crate::surprise::series(thetas, kind, OrderingLabel::PublicationOrder)?;

    let mut base_order: Vec<usize> = (0..records.len()).collect();
    base_order.sort_by_key(|&i| records[i].pub_year);
    let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    for p in 1..=base_order.len() {
        if p == base_order.len() || records[base_order[p]].pub_year != records[base_order[start]].pub_year {
            groups.push(start..p);
            start = p;
        }
    }
    let largest = groups.iter().map(|g| g.len()).max().unwrap_or(0);
    let rows = rows_of(thetas);

    let exact_ok = largest <= config.within_year_exact_threshold && matches!(kind, SurpriseKind::T2T | SurpriseKind::T2P);
    let (values, averaging) = if largest <= 1 {
        let ordered: Vec<&[f64]> = base_order.iter().map(|&i| rows[i]).collect();
        (series_values(&ordered, window_of(kind)), TieAveraging::Exact)
    } else if exact_ok {
        let v = match kind {
            SurpriseKind::T2T => exact_t2t(&rows, &base_order, &groups),
            _ => exact_t2p(&rows, &base_order, &groups),
        };
        (v, TieAveraging::Exact)
    } else {
        let n = config.within_year_samples;
        let window = window_of(kind);
        let draws = exec.map(n, |s| {
            let mut rng = rng::stream(config.seed ^ 0x7075_626f_7264_6572, s as u64);
            let mut order = base_order.clone();
            for g in &groups {
                order[g.clone()].shuffle(&mut rng);
            }
            let ordered: Vec<&[f64]> = order.iter().map(|&i| rows[i]).collect();
            series_values(&ordered, window)
        });
        let mut acc = vec![0.0; records.len() - 1];
        for v in &draws {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        (acc, TieAveraging::MonteCarlo { samples: n })
    };

    Ok(PublicationOrder {
        series: SurpriseSeries {
            kind,
            ordering: OrderingLabel::PublicationOrder,
            values,
        },
        averaging,
        base_order,
        largest_tie_group: largest,
    })
}

/// Expected T2T at each position. Inside a group every ordered pair of
/// distinct members is equally likely to be adjacent. At a group boundary
/// the last of the previous group and the first of the next are independent
/// uniform members.
fn exact_t2t(rows: &[&[f64]], order: &[usize], groups: &[std::ops::Range<usize>]) -> Vec<f64> {
    let mut out = vec![0.0; order.len() - 1];
    for (gi, g) in groups.iter().enumerate() {
        let members = &order[g.clone()];
        if gi > 0 {
            let prev = &order[groups[gi - 1].clone()];
            let mut s = 0.0;
            for &x in members {
                for &y in prev {
                    s += kl_bits(rows[x], rows[y]);
                }
            }
            out[g.start - 1] = s / (members.len() * prev.len()) as f64;
        }
        if members.len() > 1 {
            let mut s = 0.0;
            for &x in members {
                for &y in members {
                    if x != y {
                        s += kl_bits(rows[x], rows[y]);
                    }
                }
            }
            let v = s / (members.len() * (members.len() - 1)) as f64;
            for p in g.start + 1..g.end {
                out[p - 1] = v;
            }
        }
    }
    out
}

/// Expected T2P at each position, enumerating every order of the group that
/// holds the position. Earlier groups enter the past mean as a fixed sum.
fn exact_t2p(rows: &[&[f64]], order: &[usize], groups: &[std::ops::Range<usize>]) -> Vec<f64> {
    let k = rows[0].len();
    let mut out = vec![0.0; order.len() - 1];
    let mut prior = vec![0.0; k];
    let mut past = vec![0.0; k];
    for g in groups {
        let members: Vec<usize> = order[g.clone()].to_vec();
        let mut perm: Vec<usize> = (0..members.len()).collect();
        let mut count = 0.0;
        let mut acc = vec![0.0; members.len()];
        loop {
            let mut sum = prior.clone();
            for (r, &pi) in perm.iter().enumerate() {
                let pos = g.start + r;
                let x = rows[members[pi]];
                if pos > 0 {
                    for (m, s) in past.iter_mut().zip(&sum) {
                        *m = s / pos as f64;
                    }
                    acc[r] += kl_bits(x, &past);
                }
                sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
            }
            count += 1.0;
            if !next_permutation(&mut perm) {
                break;
            }
        }
        for (r, a) in acc.iter().enumerate() {
            let pos = g.start + r;
            if pos > 0 {
                out[pos - 1] = a / count;
            }
        }
        for &m in &members {
            prior.iter_mut().zip(rows[m]).for_each(|(s, v)| *s += v);
        }
    }
    out
}

/// Advance to the next lexicographic permutation; false after the last.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use std::collections::HashMap;
    use std::path::PathBuf;

    pub(crate) fn records(slot_years: &[i32], pub_years: &[i32]) -> Vec<VolumeRecord> {
        slot_years
            .iter()
            .zip(pub_years)
            .enumerate()
            .map(|(i, (&y, &p))| VolumeRecord {
                id: format!("d{i}"),
                title: String::new(),
                read_date: NaiveDate::from_ymd_opt(y, 1, 1).unwrap() + chrono::Duration::days(i as i64),
                read_seq: i,
                pub_year: p,
                text_path: PathBuf::new(),
            })
            .collect()
    }

    fn td(v: &[f64]) -> TopicDistribution {
        TopicDistribution::new(v.to_vec()).unwrap()
    }

    fn all_valid(plan: &ConstraintPlan) -> Vec<Vec<usize>> {
        let mut p: Vec<usize> = (0..plan.len()).collect();
        let mut out = Vec::new();
        loop {
            if plan.is_valid(&p) {
                out.push(p.clone());
            }
            if !next_permutation(&mut p) {
                break;
            }
        }
        out
    }

    #[test]
    fn forced_choices_give_identity() {
        let recs = records(&[1840, 1841, 1842, 1843], &[1840, 1841, 1842, 1843]);
        let mut rng = rng::root(1);
        for _ in 0..20 {
            assert_eq!(sample_constrained_permutation(&recs, &mut rng).unwrap(), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn two_valid_permutations_equally_likely() {
        let recs = records(&[1840, 1850, 1850], &[1840, 1850, 1850]);
        let plan = ConstraintPlan::new(&recs).unwrap();
        assert_eq!(all_valid(&plan), vec![vec![0, 1, 2], vec![0, 2, 1]]);
        assert_eq!(plan.count_valid(), 2.0);
        let mut rng = rng::root(5);
        let n = 20_000;
        let hits = (0..n).filter(|_| plan.sample(&mut rng) == [0, 1, 2]).count();
        // binomial sd = 70.7; 5 sd
        assert!((hits as f64 - n as f64 / 2.0).abs() < 354.0, "{hits}");
    }

    #[test]
    fn unconstrained_instance_is_uniform() {
        let recs = records(&[1850; 4], &[1850; 4]);
        let plan = ConstraintPlan::new(&recs).unwrap();
        assert_eq!(plan.count_valid(), 24.0);
        let mut rng = rng::root(9);
        let mut freq: HashMap<Vec<usize>, usize> = HashMap::new();
        let n = 10_000;
        for _ in 0..n {
            *freq.entry(plan.sample(&mut rng)).or_default() += 1;
        }
        assert_eq!(freq.len(), 24);
        let e = n as f64 / 24.0;
        let chi2: f64 = freq.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // chi-square(23) 0.999 quantile is 49.73
        assert!(chi2 < 49.73, "{chi2}");
    }

    #[test]
    fn infeasible_instance_is_rejected() {
        let recs = records(&[1840, 1841], &[1840, 1841]);
        assert!(ConstraintPlan::new(&recs).is_ok());
        // both titles published in 1841 but the first slot is in 1840
        let plan = ConstraintPlan::from_years(vec![1840, 1841], vec![1841, 1841]);
        assert!(matches!(plan, Err(Error::Infeasible(_))));
    }

    #[test]
    fn degenerate_thetas_give_unit_p_value() {
        let recs = records(&[1850; 5], &[1850; 5]);
        let th = vec![td(&[0.3, 0.7]); 5];
        let cfg = NullConfig {
            samples: 50,
            ..NullConfig::default()
        };
        let e = build_null(&th, &recs, SurpriseKind::T2T, &cfg).unwrap();
        assert_eq!(e.observed_mean, 0.0);
        assert!(e.sample_means.iter().all(|&s| s == 0.0));
        assert_eq!(e.p_value, 1.0);
    }

    #[test]
    fn single_forced_sample_equals_observed() {
        let recs = records(&[1840, 1841, 1842], &[1840, 1841, 1842]);
        let th = vec![td(&[0.2, 0.8]), td(&[0.6, 0.4]), td(&[0.5, 0.5])];
        let cfg = NullConfig {
            samples: 1,
            ..NullConfig::default()
        };
        for kind in [SurpriseKind::T2T, SurpriseKind::T2P] {
            let e = build_null(&th, &recs, kind, &cfg).unwrap();
            let obs = crate::surprise::series(&th, kind, OrderingLabel::ReadingOrder).unwrap();
            assert_eq!(e.position_mean, obs.values);
            assert_eq!(e.null_mean, e.observed_mean);
            assert_eq!(e.position_std, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn p_value_floor_when_observed_is_lowest() {
        // observed order alternates nothing: identical neighbours, null mixes them
        let recs = records(&[1850; 6], &[1850; 6]);
        let a = td(&[0.9, 0.1]);
        let b = td(&[0.1, 0.9]);
        let th = vec![a.clone(), a.clone(), a, b.clone(), b.clone(), b];
        let cfg = NullConfig {
            samples: 200,
            seed: 2,
            ..NullConfig::default()
        };
        let e = build_null(&th, &recs, SurpriseKind::T2T, &cfg).unwrap();
        // observed hits the minimum possible (one switch); samples with one switch tie
        let lowest = e.sample_means.iter().filter(|&&s| s <= e.observed_mean).count();
        assert_eq!(e.p_value, (lowest + 1) as f64 / 201.0);
        assert!(e.p_value < 0.2);
        assert!((0.0..=1.0).contains(&e.p_value));
        assert!(e.null_p2_5 <= e.null_mean && e.null_mean <= e.null_p97_5);
    }

    #[test]
    fn ensemble_is_identical_across_execution_modes() {
        let recs = records(&[1840, 1842, 1845, 1845, 1850, 1850], &[1838, 1840, 1845, 1830, 1849, 1850]);
        let th: Vec<_> = (0..6).map(|i| td(&[0.1 + 0.1 * i as f64, 0.9 - 0.1 * i as f64])).collect();
        let cfg = NullConfig {
            samples: 300,
            seed: 77,
            ..NullConfig::default()
        };
        let a = build_null_with(&th, &recs, SurpriseKind::T2P, &cfg, Exec::Sequential).unwrap();
        let b = build_null_with(&th, &recs, SurpriseKind::T2P, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.permutations, b.permutations);
    }

    #[test]
    fn publication_order_distinct_years_is_plain_series() {
        let recs = records(&[1850, 1851, 1852], &[1849, 1840, 1845]);
        let th = vec![td(&[0.2, 0.8]), td(&[0.6, 0.4]), td(&[0.5, 0.5])];
        let p = publication_order_series(&th, &recs, SurpriseKind::T2T, &NullConfig::default()).unwrap();
        assert_eq!(p.base_order, vec![1, 2, 0]);
        let direct = crate::surprise::t2t_series(&[&th[1], &th[2], &th[0]]).unwrap();
        assert_eq!(p.series.values, direct.values);
    }

    #[test]
    fn publication_order_identical_thetas_is_zero() {
        let recs = records(&[1850; 4], &[1850; 4]);
        let th = vec![td(&[0.25, 0.75]); 4];
        for kind in [SurpriseKind::T2T, SurpriseKind::T2P] {
            let p = publication_order_series(&th, &recs, kind, &NullConfig::default()).unwrap();
            assert!(p.series.values.iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn publication_order_tie_pair_hand_average() {
        // years: d0 1840, d1 1845, d2 1845 -> orders (0,1,2) and (0,2,1)
        let recs = records(&[1850, 1851, 1852], &[1840, 1845, 1845]);
        let th = vec![td(&[0.8, 0.2]), td(&[0.2, 0.8]), td(&[0.5, 0.5])];
        for kind in [SurpriseKind::T2T, SurpriseKind::T2P] {
            let a = crate::surprise::series(&[&th[0], &th[1], &th[2]], kind, OrderingLabel::PublicationOrder).unwrap();
            let b = crate::surprise::series(&[&th[0], &th[2], &th[1]], kind, OrderingLabel::PublicationOrder).unwrap();
            let p = publication_order_series(&th, &recs, kind, &NullConfig::default()).unwrap();
            assert_eq!(p.averaging, TieAveraging::Exact);
            for i in 0..2 {
                assert!((p.series.values[i] - (a.values[i] + b.values[i]) / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn publication_order_exact_matches_joint_enumeration() {
        // groups {0,1,2} 1840 and {3,4} 1841 and {5} 1842: 3! * 2! = 12 joint orders
        let recs = records(&[1850; 6], &[1840, 1840, 1840, 1841, 1841, 1842]);
        let th: Vec<_> = [[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.3, 0.3, 0.4], [0.2, 0.1, 0.7], [0.5, 0.4, 0.1], [0.4, 0.4, 0.2]]
            .iter()
            .map(|r| td(r))
            .collect();
        for kind in [SurpriseKind::T2T, SurpriseKind::T2P] {
            let mut acc = vec![0.0; 5];
            let mut n = 0.0;
            let mut a = vec![0, 1, 2];
            loop {
                let mut b = vec![3, 4];
                loop {
                    let order: Vec<&TopicDistribution> = a.iter().chain(&b).chain(&[5]).map(|&i| &th[i]).collect();
                    let s = crate::surprise::series(&order, kind, OrderingLabel::PublicationOrder).unwrap();
                    acc.iter_mut().zip(&s.values).for_each(|(x, v)| *x += v);
                    n += 1.0;
                    if !next_permutation(&mut b) {
                        break;
                    }
                }
                if !next_permutation(&mut a) {
                    break;
                }
            }
            assert_eq!(n, 12.0);
            let p = publication_order_series(&th, &recs, kind, &NullConfig::default()).unwrap();
            for i in 0..5 {
                assert!((p.series.values[i] - acc[i] / n).abs() < 1e-12, "{kind} {i}");
            }

            // Monte Carlo path converges to the same expectation
            let cfg = NullConfig {
                within_year_exact_threshold: 1,
                within_year_samples: 4000,
                ..NullConfig::default()
            };
            let mc = publication_order_series(&th, &recs, kind, &cfg).unwrap();
            assert_eq!(mc.averaging, TieAveraging::MonteCarlo { samples: 4000 });
            for i in 0..5 {
                assert!((mc.series.values[i] - acc[i] / n).abs() < 0.05, "{kind} {i}");
            }
        }
    }

    #[test]
    fn next_permutation_enumerates_all() {
        let mut v = vec![0, 1, 2, 3];
        let mut n = 1;
        while next_permutation(&mut v) {
            n += 1;
        }
        assert_eq!(n, 24);
        assert_eq!(v, vec![3, 2, 1, 0]);
    }
}
