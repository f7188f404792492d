use std::fs;

use readpath_core::corpus::{build_corpus, load_manifest, CorpusCache, TokenizerConfig};
use readpath_core::epochs::{break_to_date, EpochSearchConfig, Segmenter};
use readpath_core::nullmodel::{build_null, publication_order_series, NullConfig};
use readpath_core::paths::{greedy_t2p_path, greedy_t2t_path, rank_distribution, DivergenceMatrix};
use readpath_core::surprise::{t2p_series, t2t_series, SurpriseKind};
use readpath_core::synthetic::PlantedCorpus;
use readpath_core::topics::{train, TopicModel, TopicModelParams};

/// Mean absolute error of fitted two-topic mixtures against the planted ones,
/// under the better of the two topic labelings.
fn best_alignment_error(model: &TopicModel, planted: &[[f64; 2]]) -> f64 {
    let err = |swap: bool| {
        planted
            .iter()
            .enumerate()
            .map(|(d, p)| {
                let t = model.theta_slice(d);
                let (a, b) = if swap { (t[1], t[0]) } else { (t[0], t[1]) };
                ((a - p[0]).abs() + (b - p[1]).abs()) / 2.0
            })
            .sum::<f64>()
            / planted.len() as f64
    };
    err(false).min(err(true))
}

#[test]
fn planted_topics_are_recovered() {
    let planted = PlantedCorpus::generate(80, 150, 30, 17);
    let params = TopicModelParams {
        iterations: 300,
        seed: 5,
        ..TopicModelParams::new(2)
    };
    let model = train(&planted.matrix, &params).unwrap();
    let e = best_alignment_error(&model, &planted.mixtures);
    assert!(e < 0.1, "{e}");
}

#[test]
fn files_to_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let planted = PlantedCorpus::generate(40, 80, 20, 3);
    let manifest = planted.write_dir(dir.path(), 3).unwrap();
    let records = load_manifest(&manifest).unwrap();
    assert_eq!(records.len(), 40);

    let cfg = TokenizerConfig {
        min_count: 2,
        ..TokenizerConfig::default()
    };
    let (vocab, matrix) = build_corpus(&records, &cfg).unwrap();
    assert_eq!(vocab.len(), 40);
    assert_eq!(matrix.total_tokens(), 40 * 80);
    assert_eq!(matrix, planted.matrix);

    let cache_path = dir.path().join("corpus.json");
    let cache = CorpusCache::new(records.clone(), vocab, matrix);
    cache.write(&cache_path).unwrap();
    let first = fs::read(&cache_path).unwrap();
    let back = CorpusCache::read(&cache_path).unwrap();
    assert_eq!(back, cache);
    back.write(&cache_path).unwrap();
    assert_eq!(fs::read(&cache_path).unwrap(), first);

    let params = TopicModelParams {
        iterations: 100,
        seed: 1,
        ..TopicModelParams::new(3)
    };
    let model = train(&cache.matrix, &params).unwrap();
    let thetas = model.thetas().unwrap();

    let t2t = t2t_series(&thetas).unwrap();
    let t2p = t2p_series(&thetas).unwrap();
    assert_eq!(t2t.len(), 39);

    let ncfg = NullConfig {
        samples: 100,
        seed: 4,
        ..NullConfig::default()
    };
    let null = build_null(&thetas, &records, SurpriseKind::T2T, &ncfg).unwrap();
    assert_eq!(null.position_mean.len(), 39);
    assert!((null.observed_mean - t2t.mean()).abs() < 1e-12);
    let pubo = publication_order_series(&thetas, &records, SurpriseKind::T2P, &ncfg).unwrap();
    assert_eq!(pubo.series.len(), 39);

    let m = DivergenceMatrix::from_thetas(&thetas).unwrap();
    let g = greedy_t2t_path(&m, 0).unwrap();
    assert!(g.mean_bits <= t2t.mean());
    let gp = greedy_t2p_path(&thetas, 0).unwrap();
    assert_eq!(gp.order.len(), 40);
    let reading: Vec<usize> = (0..40).collect();
    let ranks = rank_distribution(&m, &reading, &null.permutations).unwrap();
    assert_eq!(ranks.observed_ranks.len(), 39);

    let dates: Vec<_> = records[1..].iter().map(|r| r.read_date).collect();
    let ecfg = EpochSearchConfig {
        n_max: 2,
        min_length: readpath_core::epochs::MinLength::Years(0.5),
        ..EpochSearchConfig::default()
    };
    let seg = Segmenter::new(&t2p.values, Some(&dates), &ecfg).unwrap();
    let (best, table) = seg.select_n().unwrap();
    assert_eq!(table.rows.len(), 2);
    let when = break_to_date(&best, &records[1..]).unwrap();
    assert_eq!(when[0].1, records[1].read_date);
}
