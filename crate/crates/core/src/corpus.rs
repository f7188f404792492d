//! Reading-manifest ingest, tokenization and vocabulary filtering.
//!
//! A corpus is built in two passes: every document is tokenized, global
//! token frequencies are counted, and tokens outside the configured
//! `[min_count, max_count]` band are removed from every document. The
//! vocabulary is indexed in lexicographic token order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exec::Exec;
use crate::{Error, Result, FORMAT_VERSION};

/// One document in the reading sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub id: String,
    pub title: String,
    pub read_date: NaiveDate,
    /// 0-based position in reading order.
    pub read_seq: usize,
    pub pub_year: i32,
    pub text_path: PathBuf,
}

impl VolumeRecord {
    pub fn read_year(&self) -> i32 {
        self.read_date.year()
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    id: String,
    title: String,
    read_date: String,
    pub_year: String,
    text_path: String,
}

/// Load a reading manifest (`id,title,read_date,pub_year,text_path`).
///
/// Relative text paths resolve against the manifest's directory. Records come
/// back sorted by read date; rows sharing a date keep their file order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<VolumeRecord>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Manifest(format!("cannot open {}: {e}", path.display())),
            _ => Error::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let expected = ["id", "title", "read_date", "pub_year", "text_path"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Manifest(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (row_no, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row?;
        let id = row.id;
        if id.is_empty() {
            return Err(Error::Manifest(format!("row {} has an empty id", row_no + 2)));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Record {
                id,
                reason: "duplicate id".into(),
            });
        }
        let read_date = NaiveDate::parse_from_str(&row.read_date, "%Y-%m-%d").map_err(|e| Error::Record {
            id: id.clone(),
            reason: format!("unparsable read_date `{}`: {e}", row.read_date),
        })?;
        let pub_year: i32 = row.pub_year.parse().map_err(|_| Error::Record {
            id: id.clone(),
            reason: format!("unparsable pub_year `{}`", row.pub_year),
        })?;
        if pub_year > read_date.year() {
            return Err(Error::Record {
                id,
                reason: format!("published {pub_year}, after its read date {read_date}"),
            });
        }
        let text_path = {
            let p = PathBuf::from(&row.text_path);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        if !text_path.is_file() {
            return Err(Error::Record {
                id,
                reason: format!("missing text file {}", text_path.display()),
            });
        }
        records.push(VolumeRecord {
            id,
            title: row.title,
            read_date,
            read_seq: 0,
            pub_year,
            text_path,
        });
    }

    // stable: ties keep manifest row order
    records.sort_by_key(|r| r.read_date);
    for (seq, r) in records.iter_mut().enumerate() {
        r.read_seq = seq;
    }
    Ok(records)
}

/// Tokenizer and vocabulary-filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub min_count: u64,
    pub max_count: u64,
    pub stopword_path: Option<PathBuf>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            min_count: 30,
            max_count: 15_000,
            stopword_path: None,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_count > self.max_count {
            return Err(Error::Config(format!(
                "min_count {} exceeds max_count {}",
                self.min_count, self.max_count
            )));
        }
        Ok(())
    }
}

/// The bundled English stopword list (the common NLTK list).
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// A lowercase stopword set.
#[derive(Debug, Clone, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// Parse a newline-delimited list; blank lines are ignored.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(|l| l.trim().to_ascii_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The stopwords named by `config`, or the bundled list when no path is set.
    pub fn for_config(config: &TokenizerConfig) -> Result<Self> {
        match &config.stopword_path {
            Some(p) => Self::load(p),
            None => Ok(Self::parse(DEFAULT_STOPWORDS)),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Split raw text into filtered, lowercased tokens.
///
/// Steps, in order: hyphen + line break is deleted (joining the halves of a
/// split word), text is transliterated to ASCII with unmappable characters
/// dropped, the result is split on whitespace, any token holding a
/// non-letter (punctuation, digits, apostrophes) is discarded, survivors are
/// lowercased, and stopwords are removed.
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    let joined = text.replace("-\r\n", "").replace("-\n", "");
    let ascii = deunicode::deunicode_with_tofu(&joined, "");
    ascii
        .split_whitespace()
        .filter(|t| t.bytes().all(|b| b.is_ascii_alphabetic()))
        .map(str::to_ascii_lowercase)
        .filter(|t| !stopwords.contains(t))
        .collect()
}

/// Token string to dense index, with corpus-wide frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens: r.tokens,
            frequencies: r.frequencies,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            frequencies: v.frequencies,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn frequency(&self, index: usize) -> Option<u64> {
        self.frequencies.get(index).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Sparse per-document token counts, documents in reading order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMatrix {
    /// `(vocab index, count)` pairs sorted by index; every count is positive.
    docs: Vec<Vec<(u32, u32)>>,
    vocab_size: usize,
}

impl CorpusMatrix {
    /// Build from raw `(index, count)` rows. Rows are sorted and merged;
    /// zero counts are dropped.
    pub fn from_rows(rows: Vec<Vec<(u32, u32)>>, vocab_size: usize) -> Result<Self> {
        let mut docs = Vec::with_capacity(rows.len());
        for (d, row) in rows.into_iter().enumerate() {
            let mut merged: BTreeMap<u32, u32> = BTreeMap::new();
            for (w, c) in row {
                if w as usize >= vocab_size {
                    return Err(Error::OutOfRange {
                        index: w as usize,
                        len: vocab_size,
                    });
                }
                if c > 0 {
                    *merged.entry(w).or_default() += c;
                }
            }
            if merged.is_empty() {
                return Err(Error::EmptyDocument(format!("#{d}")));
            }
            docs.push(merged.into_iter().collect());
        }
        Ok(CorpusMatrix { docs, vocab_size })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn doc(&self, d: usize) -> &[(u32, u32)] {
        &self.docs[d]
    }

    pub fn docs(&self) -> &[Vec<(u32, u32)>] {
        &self.docs
    }

    pub fn doc_len(&self, d: usize) -> u64 {
        self.docs[d].iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        (0..self.docs.len()).map(|d| self.doc_len(d)).sum()
    }

    /// A short stable hash of the matrix contents.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.vocab_size as u64).to_le_bytes());
        for doc in &self.docs {
            h.update((doc.len() as u64).to_le_bytes());
            for &(w, c) in doc {
                h.update(w.to_le_bytes());
                h.update(c.to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Summary counts reported after ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub documents: usize,
    pub tokens: u64,
    pub vocabulary: usize,
}

/// Build vocabulary and counts from already-tokenized documents.
///
/// `names` labels documents in error messages and must match `docs` in length.
pub fn build_from_tokens<S: AsRef<str>>(
    names: &[S],
    docs: &[Vec<String>],
    config: &TokenizerConfig,
) -> Result<(Vocabulary, CorpusMatrix)> {
    config.validate()?;
    if names.len() != docs.len() {
        return Err(Error::LengthMismatch {
            expected: names.len(),
            got: docs.len(),
        });
    }

    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in docs {
        for t in doc {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let kept: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= config.min_count && c <= config.max_count)
        .collect();

    let vocab = Vocabulary::from(VocabularyRepr {
        tokens: kept.iter().map(|(t, _)| t.to_string()).collect(),
        frequencies: kept.iter().map(|&(_, c)| c).collect(),
    });

    let mut rows = Vec::with_capacity(docs.len());
    for (name, doc) in names.iter().zip(docs) {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in doc {
            if let Some(i) = vocab.index_of(t) {
                *counts.entry(i as u32).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyDocument(name.as_ref().to_string()));
        }
        rows.push(counts.into_iter().collect());
    }
    let matrix = CorpusMatrix {
        docs: rows,
        vocab_size: vocab.len(),
    };
    Ok((vocab, matrix))
}

/// Read, tokenize and filter every record's text.
pub fn build_corpus(records: &[VolumeRecord], config: &TokenizerConfig) -> Result<(Vocabulary, CorpusMatrix)> {
    build_corpus_with(records, config, Exec::default())
}

pub fn build_corpus_with(
    records: &[VolumeRecord],
    config: &TokenizerConfig,
    exec: Exec,
) -> Result<(Vocabulary, CorpusMatrix)> {
    config.validate()?;
    let stopwords = Stopwords::for_config(config)?;
    let docs = exec
        .map_slice(records, |r| {
            fs::read(&r.text_path)
                .map_err(|e| Error::io(&r.text_path, e))
                .map(|bytes| tokenize(&String::from_utf8_lossy(&bytes), &stopwords))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    build_from_tokens(&names, &docs, config)
}

const CORPUS_FORMAT: &str = "readpath-corpus";

/// The on-disk corpus cache: records, vocabulary and counts in one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusCache {
    pub format: String,
    pub format_version: u32,
    pub records: Vec<VolumeRecord>,
    pub vocabulary: Vocabulary,
    pub matrix: CorpusMatrix,
}

impl CorpusCache {
    pub fn new(records: Vec<VolumeRecord>, vocabulary: Vocabulary, matrix: CorpusMatrix) -> Self {
        CorpusCache {
            format: CORPUS_FORMAT.into(),
            format_version: FORMAT_VERSION,
            records,
            vocabulary,
            matrix,
        }
    }

    pub fn stats(&self) -> IngestStats {
        IngestStats {
            documents: self.matrix.num_docs(),
            tokens: self.matrix.total_tokens(),
            vocabulary: self.vocabulary.len(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let cache: CorpusCache = serde_json::from_slice(&bytes)?;
        if cache.format != CORPUS_FORMAT || cache.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: expected {CORPUS_FORMAT} v{FORMAT_VERSION}, found {} v{}",
                path.display(),
                cache.format,
                cache.format_version
            )));
        }
        if cache.records.len() != cache.matrix.num_docs() {
            return Err(Error::Format("record count does not match matrix rows".into()));
        }
        Ok(cache)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn stop(words: &[&str]) -> Stopwords {
        Stopwords::parse(&words.join("\n"))
    }

    #[test]
    fn joins_cross_line_hyphens() {
        assert_eq!(tokenize("natu-\nral selection", &stop(&[])), vec!["natural", "selection"]);
        assert_eq!(tokenize("natu-\r\nral", &stop(&[])), vec!["natural"]);
    }

    #[test]
    fn intra_line_hyphen_drops_token() {
        assert_eq!(tokenize("well-known fact", &stop(&[])), vec!["fact"]);
    }

    #[test]
    fn drops_digits_and_punctuation() {
        assert_eq!(tokenize("Origin 1859 spec1es", &stop(&[])), vec!["origin"]);
        assert_eq!(tokenize("species, don't stop.", &stop(&[])), Vec::<String>::new());
    }

    #[test]
    fn lowercases_then_removes_stopwords() {
        assert!(tokenize("The THE the", &stop(&["the"])).is_empty());
    }

    #[test]
    fn transliterates_to_ascii() {
        assert_eq!(tokenize("Café naïve Ørsted", &stop(&[])), vec!["cafe", "naive", "orsted"]);
    }

    #[test]
    fn bundled_stopwords_load() {
        let s = Stopwords::parse(DEFAULT_STOPWORDS);
        assert!(s.contains("the"));
        assert!(s.contains("ourselves"));
        assert!(s.len() > 100);
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn min_count_boundary() {
        let mut doc = vec!["rare".to_string(); 29];
        doc.extend(vec!["common".to_string(); 30]);
        let cfg = TokenizerConfig::default();
        let (v, m) = build_from_tokens(&["a"], &[doc], &cfg).unwrap();
        assert_eq!(v.tokens(), &["common".to_string()]);
        assert_eq!(m.doc(0), &[(0, 30)]);
    }

    #[test]
    fn identity_filter_keeps_everything() {
        let cfg = TokenizerConfig {
            min_count: 0,
            max_count: u64::MAX,
            stopword_path: None,
        };
        let docs = vec![toks("b a c"), toks("a d")];
        let (v, _) = build_from_tokens(&["x", "y"], &docs, &cfg).unwrap();
        assert_eq!(v.tokens(), &toks("a b c d")[..]);
    }

    #[test]
    fn toy_corpus_hand_count() {
        // counts: apple 3, banana 2, cherry 1, date 2, elder 1
        let docs = vec![toks("apple banana cherry"), toks("apple date banana"), toks("apple date elder")];
        let cfg = TokenizerConfig {
            min_count: 2,
            max_count: 100,
            stopword_path: None,
        };
        let (v, m) = build_from_tokens(&["d0", "d1", "d2"], &docs, &cfg).unwrap();
        assert_eq!(v.tokens(), &toks("apple banana date")[..]);
        assert_eq!(v.frequency(0), Some(3));
        assert_eq!(m.doc(0), &[(0, 1), (1, 1)]);
        assert_eq!(m.doc(1), &[(0, 1), (1, 1), (2, 1)]);
        assert_eq!(m.doc(2), &[(0, 1), (2, 1)]);
        assert_eq!(m.total_tokens(), 7);
    }

    #[test]
    fn empty_after_filter_names_document() {
        let docs = vec![toks("a a"), toks("b")];
        let cfg = TokenizerConfig {
            min_count: 2,
            max_count: 10,
            stopword_path: None,
        };
        match build_from_tokens(&["keep", "lost"], &docs, &cfg) {
            Err(Error::EmptyDocument(id)) => assert_eq!(id, "lost"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_inverted_thresholds() {
        let cfg = TokenizerConfig {
            min_count: 5,
            max_count: 4,
            stopword_path: None,
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    fn write_manifest(dir: &Path, rows: &[&str]) -> PathBuf {
        let path = dir.join("manifest.csv");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "id,title,read_date,pub_year,text_path").unwrap();
        for r in rows {
            writeln!(f, "{r}").unwrap();
        }
        path
    }

    #[test]
    fn manifest_orders_by_date_then_row() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a", "b", "c"] {
            fs::write(dir.path().join(format!("{n}.txt")), "text").unwrap();
        }
        let path = write_manifest(
            dir.path(),
            &[
                "c,Third,1850-03-01,1849,c.txt",
                "a,First,1840-01-01,1830,a.txt",
                "b,Second,1840-01-01,1835,b.txt",
            ],
        );
        let recs = load_manifest(&path).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(recs.iter().map(|r| r.read_seq).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(recs[0].text_path, dir.path().join("a.txt"));
    }

    #[test]
    fn manifest_empty_is_ok() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), &[]);
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn manifest_rejects_future_publication() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.txt"), "text").unwrap();
        let path = write_manifest(dir.path(), &["late,Late,1860-01-01,1870,x.txt"]);
        match load_manifest(&path) {
            Err(Error::Record { id, .. }) => assert_eq!(id, "late"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.txt"), "text").unwrap();
        let dup = write_manifest(dir.path(), &["a,A,1860-01-01,1850,x.txt", "a,B,1860-01-02,1850,x.txt"]);
        assert!(matches!(load_manifest(&dup), Err(Error::Record { ref reason, .. }) if reason.contains("duplicate")));
        let bad_date = write_manifest(dir.path(), &["a,A,1860-13-01,1850,x.txt"]);
        assert!(matches!(load_manifest(&bad_date), Err(Error::Record { ref reason, .. }) if reason.contains("read_date")));
        let missing = write_manifest(dir.path(), &["gone,A,1860-01-01,1850,nope.txt"]);
        assert!(matches!(load_manifest(&missing), Err(Error::Record { ref id, .. }) if id == "gone"));
    }

    #[test]
    fn fingerprint_tracks_contents() {
        let a = CorpusMatrix::from_rows(vec![vec![(0, 1), (1, 2)]], 2).unwrap();
        let b = CorpusMatrix::from_rows(vec![vec![(1, 2), (0, 1)]], 2).unwrap();
        let c = CorpusMatrix::from_rows(vec![vec![(0, 2), (1, 2)]], 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
