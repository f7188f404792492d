//! Stage runners. Each stage recomputes what it needs in memory and writes
//! only its own exports; `run` chains them and adds the summary and manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use chrono::Utc;
use readpath_core::corpus::{build_corpus_with, load_manifest, CorpusCache, VolumeRecord};
use readpath_core::epochs::{break_to_date, Segmenter};
use readpath_core::exec::Exec;
use readpath_core::nullmodel::{build_null_with, publication_order_series_with, NullEnsemble, PublicationOrder, TieAveraging};
use readpath_core::paths::{greedy_t2p_path, greedy_t2t_path, rank_distribution, DivergenceMatrix, GreedyPath, RankDistribution};
use readpath_core::surprise::{
    cumulative_relative, epoch_mean_relative, pub_read_regression, reading_density, series, write_series_csv, OrderingLabel,
    Regression, SeriesMeta, SurpriseKind, SurpriseSeries, TopicDistribution,
};
use readpath_core::topics::{train, ModelMeta, TopicModel};
use readpath_core::FORMAT_VERSION;
use serde::{Deserialize, Serialize};

use crate::config::{EpochInput, RunConfig};
use crate::report::{
    BreakPoint, BundleEntry, BundleManifest, EpochReport, EpochRow, ModelSummary, RunSummary, SurpriseRow, BUNDLE_MANIFEST, SUMMARY,
};

pub const CORPUS_CACHE: &str = "corpus.json";
const KINDS: [SurpriseKind; 2] = [SurpriseKind::T2T, SurpriseKind::T2P];

/// Writes files under an output root and remembers what was written.
pub struct Exports {
    root: PathBuf,
    entries: Vec<BundleEntry>,
}

impl Exports {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Exports { root, entries: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[BundleEntry] {
        &self.entries
    }

    fn path(&mut self, rel: &str, schema: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        self.entries.retain(|e| e.path != rel);
        self.entries.push(BundleEntry {
            path: rel.to_string(),
            schema: schema.to_string(),
        });
        Ok(path)
    }

    pub fn bytes(&mut self, rel: &str, schema: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel, schema)?;
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, schema: &str, value: &T) -> Result<PathBuf> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.bytes(rel, schema, &buf)
    }

    pub fn csv(&mut self, rel: &str, schema: &str, f: impl FnOnce(&mut Vec<u8>) -> readpath_core::Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        f(&mut buf).with_context(|| format!("formatting {rel}"))?;
        self.bytes(rel, schema, &buf)
    }
}

/// Read the manifest and texts, and write the corpus cache.
pub fn ingest(cfg: &RunConfig, exec: Exec, ex: &mut Exports) -> Result<CorpusCache> {
    let manifest = cfg
        .corpus
        .manifest
        .as_ref()
        .ok_or_else(|| anyhow!("corpus.manifest is not set"))?;
    let records = load_manifest(manifest).context("corpus")?;
    let (vocab, matrix) = build_corpus_with(&records, &cfg.tokenizer(), exec).context("corpus")?;
    let cache = CorpusCache::new(records, vocab, matrix);
    ex.bytes(CORPUS_CACHE, "corpus-json", &serde_json::to_vec(&cache)?)?;
    Ok(cache)
}

/// The cached corpus if one exists in the output directory, else a fresh
/// ingest.
pub fn corpus(cfg: &RunConfig, exec: Exec, ex: &mut Exports) -> Result<CorpusCache> {
    let path = ex.root().join(CORPUS_CACHE);
    if path.exists() {
        return CorpusCache::read(&path).context("corpus");
    }
    ingest(cfg, exec, ex)
}

fn k_dir(k: usize) -> String {
    format!("k{k}")
}

/// A trained model and its document distributions.
pub struct Fitted {
    pub k: usize,
    pub model: TopicModel,
    pub thetas: Vec<TopicDistribution>,
}

fn timestamp() -> String {
    Utc::now().to_rfc3339()
}

/// One model per configured k. With `reuse`, a saved model whose parameters
/// and corpus match is loaded instead of retrained.
pub fn models(cfg: &RunConfig, cache: &CorpusCache, exec: Exec, reuse: bool, ex: &mut Exports) -> Result<Vec<Fitted>> {
    let fingerprint = cache.matrix.fingerprint();
    let jobs: Vec<_> = cfg.topics.k.iter().enumerate().map(|(i, &k)| (k, cfg.topic_params(i, k))).collect();
    let saved: Vec<Option<TopicModel>> = jobs
        .iter()
        .map(|(k, params)| {
            let path = ex.root().join(k_dir(*k)).join("model.bin");
            let m = (reuse && path.exists()).then(|| TopicModel::load(&path).ok()).flatten()?;
            (m.params == *params && m.corpus_fingerprint == fingerprint).then_some(m)
        })
        .collect();
    let trained = exec.map(jobs.len(), |i| {
        if saved[i].is_some() {
            return None;
        }
        let started_at = timestamp();
        let m = train(&cache.matrix, &jobs[i].1).with_context(|| format!("topics: k={}", jobs[i].0));
        Some(m.map(|m| (m, started_at, timestamp())))
    });

    let mut out = Vec::with_capacity(jobs.len());
    for ((k, _), (saved, trained)) in jobs.iter().zip(saved.into_iter().zip(trained)) {
        let dir = k_dir(*k);
        let model = match (saved, trained) {
            (Some(m), _) => {
                ex.path(&format!("{dir}/model.bin"), "topic-model-bin")?;
                ex.path(&format!("{dir}/model.meta.json"), "model-meta-json")?;
                m
            }
            (None, Some(t)) => {
                let (m, started_at, finished_at) = t?;
                let mut bin = Vec::new();
                m.write_to(&mut bin)?;
                ex.bytes(&format!("{dir}/model.bin"), "topic-model-bin", &bin)?;
                let meta = ModelMeta {
                    format_version: FORMAT_VERSION,
                    params: m.params,
                    corpus_fingerprint: m.corpus_fingerprint.clone(),
                    model_fingerprint: m.fingerprint(),
                    started_at,
                    finished_at,
                };
                ex.json(&format!("{dir}/model.meta.json"), "model-meta-json", &meta)?;
                m
            }
            (None, None) => unreachable!("every job is either loaded or trained"),
        };
        let thetas = model.thetas().with_context(|| format!("topics: k={k}"))?;
        out.push(Fitted { k: *k, model, thetas });
    }
    Ok(out)
}

/// Everything a per-model stage needs.
pub struct Stage<'a> {
    pub cfg: &'a RunConfig,
    pub records: &'a [VolumeRecord],
    pub fitted: &'a Fitted,
    pub exec: Exec,
}

impl Stage<'_> {
    fn dir(&self) -> String {
        k_dir(self.fitted.k)
    }

    fn fingerprint(&self) -> String {
        self.fitted.model.fingerprint()
    }

    fn docs(&self) -> Vec<&VolumeRecord> {
        self.records.iter().collect()
    }

    pub fn series(&self, kind: SurpriseKind) -> Result<SurpriseSeries> {
        series(&self.fitted.thetas, kind, OrderingLabel::ReadingOrder).context("surprise")
    }

    pub fn null(&self, kind: SurpriseKind) -> Result<NullEnsemble> {
        build_null_with(&self.fitted.thetas, self.records, kind, &self.cfg.null_config(), self.exec)
            .with_context(|| format!("nullmodel: {kind} ensemble"))
    }

    pub fn puborder(&self, kind: SurpriseKind) -> Result<PublicationOrder> {
        publication_order_series_with(&self.fitted.thetas, self.records, kind, &self.cfg.null_config(), self.exec)
            .with_context(|| format!("nullmodel: {kind} publication order"))
    }

    /// Reading-order T2T, T2P and any configured windows.
    pub fn write_series(&self, ex: &mut Exports) -> Result<Vec<SurpriseSeries>> {
        let kinds = KINDS
            .into_iter()
            .chain(self.cfg.surprise.windows.iter().map(|&n| SurpriseKind::T2N(n)));
        let docs = self.docs();
        let mut out = Vec::new();
        for kind in kinds {
            let s = self.series(kind)?;
            let stem = format!("{}/series_{}", self.dir(), kind.tag());
            ex.csv(&format!("{stem}.csv"), "series-csv", |w| write_series_csv(w, &s, Some(&docs)))?;
            ex.json(&format!("{stem}.json"), "series-meta-json", &SeriesMeta::new(&s, self.fingerprint()))?;
            out.push(s);
        }
        Ok(out)
    }

    pub fn write_null(&self, kind: SurpriseKind, ex: &mut Exports) -> Result<NullEnsemble> {
        let observed = self.series(kind)?;
        let null = self.null(kind)?;
        let tag = kind.tag();
        let dir = self.dir();
        ex.json(&format!("{dir}/null_{tag}.json"), "null-summary-json", &null.summary())?;
        ex.csv(&format!("{dir}/null_{tag}_positions.csv"), "null-positions-csv", |w| null.write_positions_csv(w))?;
        let cum = cumulative_relative(&observed.values, &null.position_mean).context("surprise")?;
        let records = self.records;
        ex.csv(&format!("{dir}/cumulative_{tag}.csv"), "cumulative-csv", |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["position", "doc_id", "date", "cumulative_bits"])?;
            for (i, c) in cum.iter().enumerate() {
                let r = &records[i + 1];
                w.write_record([(i + 1).to_string(), r.id.clone(), r.read_date.to_string(), c.to_string()])?;
            }
            w.flush().map_err(|e| readpath_core::Error::Format(e.to_string()))
        })?;
        Ok(null)
    }

    pub fn write_puborder(&self, kind: SurpriseKind, ex: &mut Exports) -> Result<PublicationOrder> {
        let p = self.puborder(kind)?;
        let stem = format!("{}/puborder_{}", self.dir(), kind.tag());
        ex.csv(&format!("{stem}.csv"), "series-csv", |w| write_series_csv(w, &p.series, None))?;
        let meta = PuborderMeta {
            series: SeriesMeta::new(&p.series, self.fingerprint()),
            averaging: p.averaging,
            largest_tie_group: p.largest_tie_group,
            base_order: p.base_order.iter().map(|&i| self.records[i].id.clone()).collect(),
        };
        ex.json(&format!("{stem}.json"), "puborder-meta-json", &meta)?;
        Ok(p)
    }

    pub fn write_greedy(&self, ex: &mut Exports) -> Result<(DivergenceMatrix, GreedyPath, GreedyPath)> {
        let m = DivergenceMatrix::from_thetas_with(&self.fitted.thetas, self.exec).context("paths")?;
        let start = self.cfg.paths.greedy_start;
        let t2t = greedy_t2t_path(&m, start).context("paths: greedy T2T")?;
        let t2p = greedy_t2p_path(&self.fitted.thetas, start).context("paths: greedy T2P")?;
        let ids: Vec<&str> = self.records.iter().map(|r| r.id.as_str()).collect();
        let dir = self.dir();
        if self.cfg.paths.write_matrix {
            ex.csv(&format!("{dir}/divergence.csv"), "divergence-csv", |w| m.write_csv(w, &ids))?;
        }
        ex.csv(&format!("{dir}/greedy_t2t.csv"), "greedy-csv", |w| t2t.write_csv(w, &ids))?;
        ex.csv(&format!("{dir}/greedy_t2p.csv"), "greedy-csv", |w| t2p.write_csv(w, &ids))?;
        let summary = GreedySummary {
            format_version: FORMAT_VERSION,
            start_doc: ids.get(start).map(|s| s.to_string()).unwrap_or_default(),
            t2t_mean_bits: t2t.mean_bits,
            t2p_mean_bits: t2p.mean_bits,
        };
        ex.json(&format!("{dir}/greedy.json"), "greedy-summary-json", &summary)?;
        Ok((m, t2t, t2p))
    }

    pub fn write_ranks(&self, m: &DivergenceMatrix, null_t2t: &NullEnsemble, ex: &mut Exports) -> Result<RankDistribution> {
        let observed: Vec<usize> = (0..self.records.len()).collect();
        let ranks = rank_distribution(m, &observed, &null_t2t.permutations).context("paths: ranks")?;
        ex.json(
            &format!("{}/ranks.json", self.dir()),
            "ranks-json",
            &Versioned {
                format_version: FORMAT_VERSION,
                body: &ranks,
            },
        )?;
        Ok(ranks)
    }

    /// Segment `observed` (or its null-relative form) and report the chosen
    /// epochs against `null`.
    pub fn write_epochs(&self, observed: &SurpriseSeries, null: &NullEnsemble, ex: &mut Exports) -> Result<EpochReport> {
        let kind = observed.kind;
        let input = self.cfg.epochs.input;
        let values: Vec<f64> = match input {
            EpochInput::Raw => observed.values.clone(),
            EpochInput::Relative => observed.values.iter().zip(&null.position_mean).map(|(v, m)| v - m).collect(),
        };
        // series index i is the surprise of document i + 1
        let docs = &self.records[1..];
        let dates: Vec<_> = docs.iter().map(|r| r.read_date).collect();
        let ctx = || format!("epochs: {kind}");
        let seg = Segmenter::new(&values, Some(&dates), &self.cfg.epoch_config())
            .with_context(ctx)?
            .with_exec(self.exec);
        let (best, table) = seg.select_n().with_context(ctx)?;
        let relative = epoch_mean_relative(&observed.values, &null.position_mean, &best.breaks).with_context(ctx)?;
        let breaks = break_to_date(&best, docs)
            .with_context(ctx)?
            .into_iter()
            .map(|(index, date)| BreakPoint { index, date })
            .collect();
        let epochs = best
            .segments
            .iter()
            .zip(relative)
            .map(|(s, rel)| EpochRow {
                start: s.start,
                end: s.end,
                start_date: docs[s.start].read_date,
                end_date: docs[s.end - 1].read_date,
                mean: s.mean,
                variance: s.variance,
                relative_mean: rel,
            })
            .collect();
        let report = EpochReport {
            format_version: FORMAT_VERSION,
            kind,
            input,
            selected_n: table.selected,
            aic_table: table,
            breaks,
            epochs,
        };
        let stem = format!("{}/epochs_{}", self.dir(), kind.tag());
        ex.json(&format!("{stem}.json"), "epochs-json", &report)?;
        let landscape = seg.landscape();
        ex.csv(
            &format!("{}/landscape_{}.csv", self.dir(), kind.tag()),
            "landscape-csv",
            |w| readpath_core::epochs::write_landscape_csv(w, &landscape),
        )?;
        Ok(report)
    }

    /// Every per-model export plus the model summary.
    pub fn write_all(&self, ex: &mut Exports) -> Result<ModelSummary> {
        let series = self.write_series(ex)?;
        let (m, greedy_t2t, greedy_t2p) = self.write_greedy(ex)?;
        let mut rows = Vec::new();
        let mut epochs = Vec::new();
        let mut null_t2t = None;
        for (kind, observed) in KINDS.into_iter().zip(&series) {
            let null = self.write_null(kind, ex)?;
            let pub_order = self.write_puborder(kind, ex)?;
            epochs.push(self.write_epochs(observed, &null, ex)?);
            rows.push(SurpriseRow {
                kind,
                observed: null.observed_mean,
                null_mean: null.null_mean,
                null_std: null.null_std,
                null_p2_5: null.null_p2_5,
                null_p97_5: null.null_p97_5,
                p_value: null.p_value,
                publication_order: pub_order.series.mean(),
                greedy: match kind {
                    SurpriseKind::T2T => greedy_t2t.mean_bits,
                    _ => greedy_t2p.mean_bits,
                },
            });
            if kind == SurpriseKind::T2T {
                null_t2t = Some(null);
            }
        }
        let null_t2t = null_t2t.expect("T2T is always analysed");
        self.write_ranks(&m, &null_t2t, ex)?;
        let summary = ModelSummary {
            format_version: FORMAT_VERSION,
            k: self.fitted.k,
            model_fingerprint: self.fingerprint(),
            surprise: rows,
            epochs,
        };
        ex.json(&format!("{}/{SUMMARY}", self.dir()), "model-summary-json", &summary)?;
        Ok(summary)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub format_version: u32,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PuborderMeta {
    #[serde(flatten)]
    pub series: SeriesMeta,
    pub averaging: TieAveraging,
    pub largest_tie_group: usize,
    /// Document ids by publication year, ties in reading order.
    pub base_order: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GreedySummary {
    pub format_version: u32,
    pub start_doc: String,
    pub t2t_mean_bits: f64,
    pub t2p_mean_bits: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegressionExport {
    pub format_version: u32,
    pub regression: Option<Regression>,
    /// Why no fit was possible, when `regression` is absent.
    pub note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub format_version: u32,
    pub config: RunConfig,
    pub started_at: String,
    pub finished_at: String,
}

/// Corpus-level exports that do not depend on a model.
pub fn write_corpus_views(cfg: &RunConfig, records: &[VolumeRecord], ex: &mut Exports) -> Result<Option<Regression>> {
    let dates: Vec<_> = records.iter().map(|r| r.read_date).collect();
    let density = reading_density(&dates, cfg.surprise.density_window_months).context("surprise: reading density")?;
    ex.csv("reading_density.csv", "density-csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["date", "per_month"])?;
        for p in &density {
            w.write_record([p.date.to_string(), p.per_month.to_string()])?;
        }
        w.flush().map_err(|e| readpath_core::Error::Format(e.to_string()))
    })?;
    let (regression, note) = match pub_read_regression(records) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ex.json(
        "pub_read_regression.json",
        "regression-json",
        &RegressionExport {
            format_version: FORMAT_VERSION,
            regression,
            note,
        },
    )?;
    Ok(regression)
}

/// The full pipeline: ingest (when a manifest is configured), train, every
/// analysis, summary and bundle manifest.
pub fn run(cfg: &RunConfig, exec: Exec) -> Result<RunSummary> {
    let started_at = timestamp();
    let mut ex = Exports::new(&cfg.output.dir)?;
    let cache = if cfg.corpus.manifest.is_some() {
        ingest(cfg, exec, &mut ex)?
    } else {
        corpus(cfg, exec, &mut ex)?
    };
    let regression = write_corpus_views(cfg, &cache.records, &mut ex)?;
    let fitted = models(cfg, &cache, exec, false, &mut ex)?;
    let mut models = Vec::new();
    for f in &fitted {
        let stage = Stage {
            cfg,
            records: &cache.records,
            fitted: f,
            exec,
        };
        models.push(stage.write_all(&mut ex)?);
    }
    let summary = RunSummary {
        format_version: FORMAT_VERSION,
        corpus: cache.stats(),
        corpus_fingerprint: cache.matrix.fingerprint(),
        pub_read_regression: regression,
        models,
    };
    ex.json(SUMMARY, "run-summary-json", &summary)?;
    let meta = RunMeta {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        started_at,
        finished_at: timestamp(),
    };
    ex.json("run.meta.json", "run-meta-json", &meta)?;
    let mut files = ex.entries().to_vec();
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = BundleManifest {
        format_version: FORMAT_VERSION,
        files,
    };
    let mut buf = serde_json::to_vec_pretty(&manifest)?;
    buf.push(b'\n');
    let path = ex.root().join(BUNDLE_MANIFEST);
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(&buf))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(summary)
}
