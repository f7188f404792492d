//! Run configuration.
//!
//! A TOML file with one section per stage. Any key can be overridden on the
//! command line as `--section.key value` (or `--section.key=value`).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use readpath_core::corpus::TokenizerConfig;
use readpath_core::epochs::{EpochSearchConfig, MinLength, Normalization};
use readpath_core::nullmodel::NullConfig;
use readpath_core::topics::{Estimate, TopicModelParams};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub topics: TopicsSection,
    pub surprise: SurpriseSection,
    pub null: NullSection,
    pub paths: PathsSection,
    pub epochs: EpochsSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// `id,title,read_date,pub_year,text_path` CSV.
    pub manifest: Option<PathBuf>,
    /// One stopword per line; the bundled English list when absent.
    pub stopwords: Option<PathBuf>,
    pub min_count: u64,
    pub max_count: u64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let t = TokenizerConfig::default();
        CorpusSection {
            manifest: None,
            stopwords: None,
            min_count: t.min_count,
            max_count: t.max_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    #[default]
    Final,
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsSection {
    /// One model per entry; `k = 80` and `k = [20, 40]` are both accepted.
    #[serde(deserialize_with = "one_or_many")]
    pub k: Vec<usize>,
    /// Defaults to `50 / k` for each `k`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: u32,
    /// Model `i` in the k-list trains with `seed + i`.
    pub seed: u64,
    pub estimate: EstimateMode,
    pub burn_in: u32,
    pub lag: u32,
}

impl Default for TopicsSection {
    fn default() -> Self {
        let p = TopicModelParams::new(80);
        TopicsSection {
            k: vec![80],
            alpha: None,
            beta: p.beta,
            iterations: p.iterations,
            seed: 0,
            estimate: EstimateMode::Final,
            burn_in: 500,
            lag: 10,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(k) => vec![k],
        OneOrMany::Many(ks) => ks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurpriseSection {
    /// Extra windowed (T2N) series to export alongside T2T and T2P.
    pub windows: Vec<usize>,
    pub density_window_months: f64,
}

impl Default for SurpriseSection {
    fn default() -> Self {
        SurpriseSection {
            windows: Vec::new(),
            density_window_months: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NullSection {
    pub samples: usize,
    pub seed: u64,
    pub within_year_exact_threshold: usize,
    pub within_year_samples: usize,
}

impl Default for NullSection {
    fn default() -> Self {
        let n = NullConfig::default();
        NullSection {
            samples: n.samples,
            seed: n.seed,
            within_year_exact_threshold: n.within_year_exact_threshold,
            within_year_samples: n.within_year_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Reading-order index the greedy paths start from.
    pub greedy_start: usize,
    /// Also export the full divergence matrix.
    pub write_matrix: bool,
}

/// Which series the epoch search segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochInput {
    /// Surprise in bits.
    #[default]
    Raw,
    /// Surprise minus the per-position null mean.
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpochsSection {
    pub n_max: usize,
    pub min_length_years: f64,
    /// When set, replaces the calendar minimum with a point count.
    pub min_length_indices: Option<usize>,
    pub variance_floor: f64,
    pub normalization: Normalization,
    pub input: EpochInput,
}

impl Default for EpochsSection {
    fn default() -> Self {
        let e = EpochSearchConfig::default();
        EpochsSection {
            n_max: e.n_max,
            min_length_years: 5.0,
            min_length_indices: None,
            variance_floor: e.variance_floor,
            normalization: e.normalization,
            input: EpochInput::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Worker threads; 0 lets the runtime decide. Never changes results.
    pub threads: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            threads: 0,
        }
    }
}

/// Keys holding paths, resolved against the config file's directory.
const PATH_KEYS: [(&str, &str); 3] = [("corpus", "manifest"), ("corpus", "stopwords"), ("output", "dir")];

impl RunConfig {
    /// Read `path` (if any), apply `overrides` in order, and validate.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut t: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                let base = p.parent().unwrap_or(Path::new(""));
                resolve_paths(&mut t, base);
                t
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            set_dotted(&mut table, key, raw)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tokenizer().validate()?;
        if self.topics.k.is_empty() {
            bail!("topics.k is empty");
        }
        let mut seen = self.topics.k.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.topics.k.len() {
            bail!("topics.k lists a value twice");
        }
        for (i, &k) in self.topics.k.iter().enumerate() {
            self.topic_params(i, k).validate()?;
        }
        self.null_config().validate()?;
        self.epoch_config().validate()?;
        if self.surprise.windows.contains(&0) {
            bail!("surprise.windows entries must be at least 1");
        }
        if !(self.surprise.density_window_months > 0.0) {
            bail!("surprise.density_window_months must be positive");
        }
        for p in [&self.corpus.manifest, &self.corpus.stopwords].into_iter().flatten() {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn tokenizer(&self) -> TokenizerConfig {
        TokenizerConfig {
            min_count: self.corpus.min_count,
            max_count: self.corpus.max_count,
            stopword_path: self.corpus.stopwords.clone(),
        }
    }

    /// Parameters for the `i`-th entry of the k-list.
    pub fn topic_params(&self, i: usize, k: usize) -> TopicModelParams {
        let t = &self.topics;
        TopicModelParams {
            k,
            alpha: t.alpha,
            beta: t.beta,
            iterations: t.iterations,
            seed: t.seed.wrapping_add(i as u64),
            estimate: match t.estimate {
                EstimateMode::Final => Estimate::FinalState,
                EstimateMode::Averaged => Estimate::Averaged {
                    burn_in: t.burn_in,
                    lag: t.lag,
                },
            },
        }
        .resolved()
    }

    pub fn null_config(&self) -> NullConfig {
        let n = &self.null;
        NullConfig {
            samples: n.samples,
            seed: n.seed,
            within_year_exact_threshold: n.within_year_exact_threshold,
            within_year_samples: n.within_year_samples,
        }
    }

    pub fn epoch_config(&self) -> EpochSearchConfig {
        let e = &self.epochs;
        EpochSearchConfig {
            n_max: e.n_max,
            min_length: match e.min_length_indices {
                Some(l) => MinLength::Indices(l),
                None => MinLength::Years(e.min_length_years),
            },
            variance_floor: e.variance_floor,
            normalization: e.normalization,
        }
    }
}

fn resolve_paths(table: &mut toml::Table, base: &Path) {
    for (section, key) in PATH_KEYS {
        let Some(toml::Value::Table(s)) = table.get_mut(section) else {
            continue;
        };
        if let Some(toml::Value::String(v)) = s.get_mut(key) {
            if Path::new(v.as_str()).is_relative() {
                *v = base.join(&*v).to_string_lossy().into_owned();
            }
        }
    }
}

/// Parse an override as a TOML value; bare words stay strings and
/// comma-separated values become arrays.
fn parse_value(raw: &str) -> toml::Value {
    let parse = |s: &str| {
        toml::from_str::<toml::Table>(&format!("v = {s}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
    };
    parse(raw)
        .or_else(|| raw.contains(',').then(|| parse(&format!("[{raw}]"))).flatten())
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let (section, field) = key
        .split_once('.')
        .filter(|(s, f)| !s.is_empty() && !f.is_empty() && !f.contains('.'))
        .ok_or_else(|| anyhow!("override `--{key}` must have the form --section.key"))?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(s) = entry else {
        bail!("`{section}` is not a section");
    };
    let value = if PATH_KEYS.contains(&(section, field)) {
        toml::Value::String(raw.to_string())
    } else {
        parse_value(raw)
    };
    s.insert(field.to_string(), value);
    Ok(())
}

/// Pull `--section.key value` pairs out of `args`, leaving the rest for the
/// regular parser.
pub fn split_overrides(args: impl IntoIterator<Item = OsString>) -> Result<(Vec<OsString>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let dotted = arg
            .to_str()
            .and_then(|s| s.strip_prefix("--"))
            .filter(|s| s.split('=').next().is_some_and(|n| n.contains('.')))
            .map(str::to_string);
        match dotted {
            Some(flag) => match flag.split_once('=') {
                Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
                None => {
                    let v = it
                        .next()
                        .and_then(|v| v.into_string().ok())
                        .ok_or_else(|| anyhow!("--{flag} needs a value"))?;
                    overrides.push((flag, v));
                }
            },
            None => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}
