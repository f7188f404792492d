//! Summary and bundle schemas, and the plain-text report built from them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use readpath_core::corpus::IngestStats;
use readpath_core::epochs::AicTable;
use readpath_core::surprise::{Regression, SurpriseKind};
use serde::{Deserialize, Serialize};

use crate::config::EpochInput;

pub const BUNDLE_MANIFEST: &str = "bundle.json";
pub const SUMMARY: &str = "summary.json";

/// One line of the observed-vs-null comparison, in bits per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseRow {
    pub kind: SurpriseKind,
    pub observed: f64,
    pub null_mean: f64,
    pub null_std: f64,
    pub null_p2_5: f64,
    pub null_p97_5: f64,
    pub p_value: f64,
    pub publication_order: f64,
    pub greedy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakPoint {
    /// Series index of the first point of the epoch.
    pub index: usize,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub mean: f64,
    pub variance: f64,
    /// Mean of surprise minus the per-position null mean.
    pub relative_mean: f64,
}

/// Epoch search result for one surprise kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub format_version: u32,
    pub kind: SurpriseKind,
    pub input: EpochInput,
    pub selected_n: usize,
    pub aic_table: AicTable,
    pub breaks: Vec<BreakPoint>,
    pub epochs: Vec<EpochRow>,
}

/// Everything reported for one topic count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub format_version: u32,
    pub k: usize,
    pub model_fingerprint: String,
    pub surprise: Vec<SurpriseRow>,
    pub epochs: Vec<EpochReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub corpus: IngestStats,
    pub corpus_fingerprint: String,
    pub pub_read_regression: Option<Regression>,
    pub models: Vec<ModelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    /// Relative to the bundle root, `/`-separated.
    pub path: String,
    pub schema: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub files: Vec<BundleEntry>,
}

impl BundleManifest {
    /// Read the manifest and check that every listed file is present.
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(BUNDLE_MANIFEST);
        if !path.exists() {
            bail!("missing artifact {BUNDLE_MANIFEST} in {} (run `readpath run` first)", root.display());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: BundleManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for e in &manifest.files {
            if !root.join(&e.path).exists() {
                bail!("missing artifact {} ({}) in {}", e.path, e.schema, root.display());
            }
        }
        Ok(manifest)
    }
}

pub fn read_summary(root: &Path) -> Result<RunSummary> {
    let path = root.join(SUMMARY);
    let text = fs::read_to_string(&path).with_context(|| format!("missing artifact {SUMMARY} in {}", root.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Render the surprise, epoch and AIC tables for every model.
pub fn render(summary: &RunSummary) -> String {
    let mut s = String::new();
    let c = &summary.corpus;
    let _ = writeln!(
        s,
        "corpus {}: {} documents, {} tokens, {} types",
        summary.corpus_fingerprint, c.documents, c.tokens, c.vocabulary
    );
    if let Some(r) = &summary.pub_read_regression {
        let _ = writeln!(s, "publication year ~ read date: slope {:.4}, r2 {:.4}", r.slope, r.r2);
    }
    for m in &summary.models {
        let _ = writeln!(s, "\n== k = {} (model {}) ==", m.k, m.model_fingerprint);
        let _ = writeln!(s, "\nsurprise, bits/step");
        let _ = writeln!(
            s,
            "{:<6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "kind", "observed", "null", "null_std", "null_2.5%", "null_97.5%", "p", "pub_order", "greedy"
        );
        for r in &m.surprise {
            let _ = writeln!(
                s,
                "{:<6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                r.kind.to_string(),
                r.observed,
                r.null_mean,
                r.null_std,
                r.null_p2_5,
                r.null_p97_5,
                r.p_value,
                r.publication_order,
                r.greedy
            );
        }
        for e in &m.epochs {
            let input = match e.input {
                EpochInput::Raw => "raw",
                EpochInput::Relative => "null-relative",
            };
            let _ = writeln!(s, "\n{} epochs ({input} input, n = {} by AIC)", e.kind, e.selected_n);
            let _ = writeln!(
                s,
                "{:<6} {:>10} {:>10} {:>7} {:>10} {:>10}",
                "epoch", "start", "end", "points", "mean", "relative"
            );
            for (i, r) in e.epochs.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{:<6} {:>10} {:>10} {:>7} {:>10.4} {:>10.4}",
                    i + 1,
                    r.start_date,
                    r.end_date,
                    r.end - r.start,
                    r.mean,
                    r.relative_mean
                );
            }
            let _ = writeln!(
                s,
                "{:<6} {:>7} {:>12} {:>12} {:>10} {:>10}",
                "n", "params", "loglik", "AIC", "rel_lik", "dL"
            );
            for r in &e.aic_table.rows {
                let _ = writeln!(
                    s,
                    "{:<6} {:>7} {:>12.4} {:>12.4} {:>10.4} {:>10}",
                    r.n,
                    r.param_count,
                    r.log_likelihood,
                    r.aic,
                    r.relative_likelihood,
                    opt(r.delta_loglik)
                );
            }
        }
    }
    s
}
