//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use readpath_core::epochs::{self, EpochSearchConfig};
use readpath_core::nullmodel::{build_null, sample_constrained_permutation, NullConfig};
use readpath_core::paths::{greedy_t2t_path, DivergenceMatrix};
use readpath_core::rng::{self, StreamRng};
use readpath_core::surprise::{kl_divergence, t2n_series, t2p_series, t2t_series, SurpriseKind, TopicDistribution};
use readpath_core::synthetic::PlantedCorpus;
use readpath_core::topics::{sweep_k, train, TopicModel, TopicModelParams};
use readpath_validation as oracle;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn simplex(k: usize, r: &mut StreamRng) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| Exp1.sample(r)).map(|x: f64| x.max(1e-300)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn dist(v: Vec<f64>) -> TopicDistribution {
    TopicDistribution::new(v).unwrap()
}

fn gaussian(n: usize, mu: f64, r: &mut StreamRng) -> Vec<f64> {
    let d = Normal::new(mu, 1.0).unwrap();
    (0..n).map(|_| d.sample(r)).collect()
}

fn kl_worked_example() -> Verdict {
    let q = dist(vec![0.25, 0.5, 0.25]);
    let p = dist(vec![0.5, 0.25, 0.25]);
    let t = Instant::now();
    let v = kl_divergence(&q, &p).unwrap();
    let elapsed = t.elapsed();
    let err = (v - 0.25).abs();
    verdict(
        err < 1e-12 && elapsed < Duration::from_millis(1),
        format!("D = {v} bits, |err| = {err:.1e}, {elapsed:?}"),
    )
}

fn kl_axioms() -> Verdict {
    let mut r = rng::root(2);
    let t = Instant::now();
    let (mut negative, mut self_nonzero, mut distinct_zero, mut asymmetric) = (0, 0, 0, 0);
    for _ in 0..10_000 {
        let (q, p) = (dist(simplex(80, &mut r)), dist(simplex(80, &mut r)));
        let qp = kl_divergence(&q, &p).unwrap();
        let pq = kl_divergence(&p, &q).unwrap();
        negative += usize::from(qp < 0.0 || pq < 0.0);
        self_nonzero += usize::from(kl_divergence(&q, &q).unwrap() != 0.0);
        let equal = q.probs().iter().zip(p.probs()).all(|(a, b)| (a - b).abs() <= 1e-9);
        distinct_zero += usize::from(!equal && qp <= 1e-9);
        asymmetric += usize::from((qp - pq).abs() > 1e-9);
    }
    let elapsed = t.elapsed();
    verdict(
        negative == 0 && self_nonzero == 0 && distinct_zero == 0 && asymmetric > 0 && elapsed < Duration::from_secs(1),
        format!(
            "negative {negative}, D(q||q) != 0 {self_nonzero}, zero on distinct {distinct_zero}, asymmetric pairs {asymmetric}/10000, {elapsed:.2?}"
        ),
    )
}

fn definition_collapses() -> Verdict {
    let mut r = rng::root(3);
    let mut worst: f64 = 0.0;
    let mut first_mismatch = 0;
    for _ in 0..100 {
        let d = r.random_range(2..=50);
        let k = r.random_range(2..=30);
        let th: Vec<TopicDistribution> = (0..d).map(|_| dist(simplex(k, &mut r))).collect();
        let t2t = t2t_series(&th).unwrap().values;
        let t2p = t2p_series(&th).unwrap().values;
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(diff(&t2n_series(&th, 1).unwrap().values, &t2t));
        for n in [d, d + 7] {
            worst = worst.max(diff(&t2n_series(&th, n).unwrap().values, &t2p));
        }
        // independent T2T
        let rows: Vec<Vec<f64>> = th.iter().map(|t| t.probs().to_vec()).collect();
        worst = worst.max(diff(&oracle::t2t(&rows), &t2t));
        first_mismatch += usize::from(t2p[0] != t2t[0]);
    }
    verdict(
        worst <= 1e-12 && first_mismatch == 0,
        format!("max deviation {worst:.1e} over 100 corpora; T2P(1) != T2T(1) in {first_mismatch}"),
    )
}

/// A feasible random instance: reading years and publication years.
fn constrained_instance(n: usize, r: &mut StreamRng) -> (Vec<i32>, Vec<i32>) {
    let mut slots: Vec<i32> = (0..n).map(|_| 1840 + r.random_range(0..4)).collect();
    slots.sort_unstable();
    // give every title a slot it can fill, then shuffle which title is which
    let mut pubs: Vec<i32> = slots.iter().map(|y| y - r.random_range(0..3)).collect();
    for i in (1..n).rev() {
        pubs.swap(i, r.random_range(0..=i));
    }
    (slots, pubs)
}

fn null_uniformity() -> Verdict {
    let mut r = rng::root(4);
    let t = Instant::now();
    let mut min_p: f64 = 1.0;
    let (mut invalid, mut failing) = (0usize, 0usize);
    let mut sizes = Vec::new();
    for _ in 0..50 {
        let n = r.random_range(4..=6);
        let (slots, pubs) = constrained_instance(n, &mut r);
        let records = oracle::records_from_years(&slots, &pubs);
        let valid = oracle::valid_assignments(&slots, &pubs);
        sizes.push(valid.len());
        let index: HashMap<&Vec<usize>, usize> = valid.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let mut counts = vec![0usize; valid.len()];
        let draws = 20_000;
        for _ in 0..draws {
            let p = sample_constrained_permutation(&records, &mut r).unwrap();
            match index.get(&p) {
                Some(&i) => counts[i] += 1,
                None => invalid += 1,
            }
        }
        if valid.len() > 1 {
            let e = draws as f64 / valid.len() as f64;
            let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
            let p = 1.0 - ChiSquared::new((valid.len() - 1) as f64).unwrap().cdf(stat);
            min_p = min_p.min(p);
            failing += usize::from(p < 0.001);
        }
    }
    let elapsed = t.elapsed();
    verdict(
        invalid == 0 && failing == 0 && elapsed < Duration::from_secs(30),
        format!(
            "50 instances, {}..{} valid orders each; invalid draws {invalid}; rejected at 0.001: {failing}; min p {min_p:.4}; {elapsed:.2?}",
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        ),
    )
}

fn null_ensemble_oracle() -> Verdict {
    let mut r = rng::root(5);
    let slots = [1840, 1841, 1841, 1842, 1843];
    let pubs = [1838, 1841, 1836, 1840, 1842];
    let records = oracle::records_from_years(&slots, &pubs);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| simplex(4, &mut r)).collect();
    let thetas: Vec<TopicDistribution> = rows.iter().cloned().map(dist).collect();
    let m = 2000;
    let cfg = NullConfig {
        samples: m,
        seed: 55,
        ..NullConfig::default()
    };
    let ens = build_null(&thetas, &records, SurpriseKind::T2T, &cfg).unwrap();

    let valid = oracle::valid_assignments(&slots, &pubs);
    let series: Vec<Vec<f64>> = valid
        .iter()
        .map(|p| oracle::t2t(&p.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>()))
        .collect();
    let mut worst_z: f64 = 0.0;
    let mut ok = true;
    for pos in 0..4 {
        let vals: Vec<f64> = series.iter().map(|s| s[pos]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        let se = sd / (m as f64).sqrt();
        let diff = (ens.position_mean[pos] - mean).abs();
        if se == 0.0 {
            ok &= diff < 1e-12;
        } else {
            worst_z = worst_z.max(diff / se);
            ok &= diff <= 3.0 * se;
        }
    }
    verdict(
        ok,
        format!("{} valid orders enumerated; worst |MC - exact| = {worst_z:.2} standard errors", valid.len()),
    )
}

fn greedy_correctness() -> Verdict {
    let mut r = rng::root(6);
    let (mut wrong, mut unstable, mut tied) = (0, 0, 0);
    for trial in 0..100 {
        let quantized = trial % 2 == 0;
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                (0..20)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else if quantized {
                            0.5 * r.random_range(1..=4) as f64
                        } else {
                            r.random::<f64>() * 5.0 + 1e-6
                        }
                    })
                    .collect()
            })
            .collect();
        let start = r.random_range(0..20);
        let m = DivergenceMatrix::from_rows(rows.clone()).unwrap();
        let a = greedy_t2t_path(&m, start).unwrap();
        let b = greedy_t2t_path(&m, start).unwrap();
        let want = oracle::greedy_order(&rows, start);
        wrong += usize::from(a.order != want);
        unstable += usize::from(a != b);
        // every step is the row minimum over the unvisited candidates
        for s in 1..20 {
            let cur = a.order[s - 1];
            let rest: Vec<usize> = (0..20).filter(|j| !a.order[..s].contains(j)).collect();
            let min = rest.iter().map(|&j| rows[cur][j]).fold(f64::INFINITY, f64::min);
            wrong += usize::from(rows[cur][a.order[s]] != min);
            tied += usize::from(rest.iter().filter(|&&j| rows[cur][j] == min).count() > 1);
        }
    }
    verdict(
        wrong == 0 && unstable == 0,
        format!("100 matrices, {tied} tied steps; wrong steps {wrong}; run-to-run differences {unstable}"),
    )
}

fn bee_oracle() -> Verdict {
    let mut r = rng::root(7);
    let mut mismatches = 0;
    for _ in 0..50 {
        let d = r.random_range(10..=200);
        let l = r.random_range(2..=(d / 4).max(2));
        let shift = r.random_range(0..d);
        let x: Vec<f64> = gaussian(d, 0.0, &mut r)
            .into_iter()
            .enumerate()
            .map(|(i, v)| if i >= shift { v * 1.5 + 1.0 } else { v })
            .collect();
        let got = epochs::fit(&x, 2, &EpochSearchConfig::with_min_indices(2, l)).unwrap();
        let (b, _) = oracle::best_single_break(&x, l).unwrap();
        mismatches += usize::from(got.breaks != vec![0, b]);
    }
    verdict(mismatches == 0, format!("50 series; break mismatches {mismatches}"))
}

fn planted_breaks() -> Verdict {
    let t = Instant::now();
    let cfg = EpochSearchConfig::with_min_indices(3, 30);
    let cfg2 = EpochSearchConfig::with_min_indices(2, 30);
    let (mut near, mut two, mut one) = (0, 0, 0);
    let (mut two_nmax2, mut one_nmax2) = (0, 0);
    for trial in 0..100u64 {
        let mut r = rng::stream(8, trial);
        let mut x = gaussian(300, 0.0, &mut r);
        x.extend(gaussian(300, 2.0, &mut r));
        let fit = epochs::fit(&x, 2, &cfg).unwrap();
        near += usize::from(fit.breaks[1].abs_diff(300) <= 5);
        two += usize::from(epochs::select_n(&x, &cfg).unwrap().0.n == 2);
        two_nmax2 += usize::from(epochs::select_n(&x, &cfg2).unwrap().0.n == 2);
        let y = gaussian(400, 0.0, &mut r);
        one += usize::from(epochs::select_n(&y, &cfg).unwrap().0.n == 1);
        one_nmax2 += usize::from(epochs::select_n(&y, &cfg2).unwrap().0.n == 1);
    }
    let elapsed = t.elapsed();
    verdict(
        near >= 95 && two >= 95 && one >= 90 && elapsed < Duration::from_secs(60),
        format!(
            "break within 5: {near}/100; n=2 chosen: {two}/100; n=1 on iid: {one}/100 (n_max 3, min_length 30); \
             with n_max 2: {two_nmax2}/100 and {one_nmax2}/100; {elapsed:.2?}"
        ),
    )
}

fn aic_bookkeeping() -> Verdict {
    let counts: Vec<usize> = (1..=3).map(epochs::param_count).collect();
    let mut r = rng::root(9);
    let mut rel_ok = true;
    for _ in 0..20 {
        let mut x = gaussian(100, 0.0, &mut r);
        x.extend(gaussian(80, r.random_range(0.0..3.0), &mut r));
        let (best, table) = epochs::select_n(&x, &EpochSearchConfig::with_min_indices(3, 10)).unwrap();
        let row = &table.rows[table.selected - 1];
        rel_ok &= row.relative_likelihood == 1.0 && row.n == best.n && row.param_count == epochs::param_count(best.n);
        rel_ok &= table.rows.iter().all(|r| r.relative_likelihood <= 1.0);
        rel_ok &= table.rows.iter().all(|r| (r.aic - (2.0 * r.param_count as f64 - 2.0 * r.log_likelihood)).abs() < 1e-9);
    }
    verdict(
        counts == [2, 5, 8] && rel_ok,
        format!("parameter counts {counts:?}; selected relative likelihood exactly 1: {rel_ok}"),
    )
}

fn simplex_ok(m: &TopicModel) -> bool {
    let rows_ok = |data: &[f64], width: usize| {
        data.chunks(width)
            .all(|row| row.iter().all(|&x| x > 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9)
    };
    rows_ok(m.theta(), m.k()) && rows_ok(m.phi(), m.vocab_size())
}

fn topic_recovery() -> Verdict {
    let t = Instant::now();
    let planted = PlantedCorpus::generate(200, 200, 50, 10);
    let params = TopicModelParams {
        seed: 10,
        ..TopicModelParams::new(2)
    };
    let model = train(&planted.matrix, &params).unwrap();
    let err = |swap: bool| {
        planted
            .mixtures
            .iter()
            .enumerate()
            .map(|(d, p)| {
                let th = model.theta_slice(d);
                let (a, b) = if swap { (th[1], th[0]) } else { (th[0], th[1]) };
                ((a - p[0]).abs() + (b - p[1]).abs()) / 2.0
            })
            .sum::<f64>()
            / planted.mixtures.len() as f64
    };
    let mae = err(false).min(err(true));
    let sweep = sweep_k(&planted.matrix, &[2, 4, 8], &TopicModelParams { seed: 10, ..params }).unwrap();
    let invariants = simplex_ok(&model) && sweep.iter().all(simplex_ok);
    let elapsed = t.elapsed();
    verdict(
        mae < 0.1 && invariants && elapsed < Duration::from_secs(120),
        format!("mean |theta error| {mae:.4}; simplex invariants for k in {{2,4,8}}: {invariants}; {elapsed:.2?}"),
    )
}

fn bundle_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let manifest = readpath_cli::report::BundleManifest::open(root).unwrap();
    manifest
        .files
        .into_iter()
        .map(|f| f.path)
        .filter(|f| !f.ends_with("meta.json"))
        .map(|f| {
            let bytes = fs::read(root.join(&f)).unwrap();
            (f, bytes)
        })
        .collect()
}

fn end_to_end_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let manifest = PlantedCorpus::generate(120, 100, 30, 11).write_dir(dir.path(), 11).unwrap();
    let run = |out: &Path, threads: &str| {
        let args = [
            "readpath",
            "run",
            "--corpus.manifest",
            manifest.to_str().unwrap(),
            "--corpus.min_count",
            "1",
            "--out",
            out.to_str().unwrap(),
            "--k",
            "2,4",
            "--samples",
            "200",
            "--topics.iterations",
            "200",
            "--epochs.min_length_years",
            "1",
            "--seed",
            "7",
            "--threads",
            threads,
        ];
        readpath_cli::main_with_args(args.iter().map(OsString::from))
    };
    let (a, b, c) = (dir.path().join("t1"), dir.path().join("t8"), dir.path().join("t8again"));
    let codes = [run(&a, "1"), run(&b, "8"), run(&c, "8")];
    if codes != [0, 0, 0] {
        return verdict(false, format!("exit statuses {codes:?}"));
    }
    let summary = |p: &Path| fs::read(p.join("summary.json")).unwrap();
    let same_summary = summary(&a) == summary(&b) && summary(&b) == summary(&c);
    let (fa, fb) = (bundle_files(&a), bundle_files(&b));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        same_summary && fa.len() == fb.len() && differing.is_empty(),
        format!(
            "summary.json identical across --threads 1/8 and reruns: {same_summary}; {} exported files compared, {} differ",
            fa.len(),
            differing.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("KL worked example", kl_worked_example),
        ("KL axioms on 10k simplex pairs", kl_axioms),
        ("T2N collapses to T2T and T2P", definition_collapses),
        ("constrained null is uniform", null_uniformity),
        ("null ensemble matches enumeration", null_ensemble_oracle),
        ("greedy path correctness", greedy_correctness),
        ("two-epoch fit matches brute force", bee_oracle),
        ("planted-break recovery and AIC selection", planted_breaks),
        ("AIC bookkeeping", aic_bookkeeping),
        ("topic-model recovery", topic_recovery),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        println!("{} [{:>2}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        if !v.pass {
            failed.push(i + 1);
        }
    }
    println!(
        "acceptance: {}/{} criteria passed{}",
        11 - failed.len(),
        11,
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
