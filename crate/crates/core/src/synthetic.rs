//! Planted-topic corpora with known mixtures, for tests, benches and demos.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;

use crate::corpus::CorpusMatrix;
use crate::{rng, Error, Result};

/// Two topics over disjoint halves of the vocabulary. Document `d` draws each
/// token from topic 0 with probability `mixtures[d][0]`, then a word uniformly
/// from that topic's half.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub matrix: CorpusMatrix,
    pub mixtures: Vec<[f64; 2]>,
    pub words: Vec<String>,
}

/// Alphabetic, stopword-free token for index `i`.
pub fn word(i: usize) -> String {
    assert!(i < 26 * 26 * 26, "synthetic vocabulary is limited to 17576 words");
    // fixed width, most significant letter first: index order is lexicographic order
    let digits = [i / 676, (i / 26) % 26, i % 26];
    let mut s = String::from("zq");
    s.extend(digits.iter().map(|&d| (b'a' + d as u8) as char));
    s
}

impl PlantedCorpus {
    pub fn generate(docs: usize, tokens_per_doc: usize, words_per_topic: usize, seed: u64) -> Self {
        let mut rng = rng::root(seed);
        let vocab = 2 * words_per_topic;
        let mut mixtures = Vec::with_capacity(docs);
        let mut rows = Vec::with_capacity(docs);
        for _ in 0..docs {
            let w0: f64 = rng.random();
            mixtures.push([w0, 1.0 - w0]);
            let mut counts = vec![0u32; vocab];
            for _ in 0..tokens_per_doc {
                let topic = usize::from(rng.random::<f64>() >= w0);
                let w = topic * words_per_topic + rng.random_range(0..words_per_topic);
                counts[w] += 1;
            }
            rows.push(
                counts
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, c)| c > 0)
                    .map(|(w, c)| (w as u32, c))
                    .collect(),
            );
        }
        let matrix = CorpusMatrix::from_rows(rows, vocab).expect("planted documents are nonempty");
        PlantedCorpus {
            matrix,
            mixtures,
            words: (0..vocab).map(word).collect(),
        }
    }

    /// Document `d` as plain text (tokens in vocabulary order, ten per line).
    pub fn text(&self, d: usize) -> String {
        let mut tokens = Vec::new();
        for &(w, c) in self.matrix.doc(d) {
            for _ in 0..c {
                tokens.push(self.words[w as usize].as_str());
            }
        }
        tokens.chunks(10).map(|c| c.join(" ")).collect::<Vec<_>>().join("\n")
    }

    /// Write a manifest and one text file per document into `dir`.
    ///
    /// Reading dates advance 20 days per document from 1836-10-01; each
    /// publication year trails its read year by 0 to 15 years.
    pub fn write_dir(&self, dir: &Path, seed: u64) -> Result<PathBuf> {
        let texts = dir.join("texts");
        fs::create_dir_all(&texts).map_err(|e| Error::io(&texts, e))?;
        let manifest = dir.join("manifest.csv");
        let mut out = String::from("id,title,read_date,pub_year,text_path\n");
        let mut rng = rng::stream(seed, 0xd0c5);
        let start = NaiveDate::from_ymd_opt(1836, 10, 1).unwrap();
        for d in 0..self.matrix.num_docs() {
            let id = format!("vol{d:04}");
            let file = texts.join(format!("{id}.txt"));
            fs::write(&file, self.text(d)).map_err(|e| Error::io(&file, e))?;
            let date = start + Duration::days(20 * d as i64);
            let pub_year = date.year() - rng.random_range(0..=15);
            out.push_str(&format!("{id},Volume {d},{date},{pub_year},texts/{id}.txt\n"));
        }
        let mut f = fs::File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(&manifest, e))?;
        Ok(manifest)
    }
}
