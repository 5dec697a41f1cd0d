//! Corpus ingestion and snippet extraction.
//!
//! A corpus is a sequence of lemmatized documents, each tagged with a genre
//! and a time period. Around every occurrence of a target lemma we cut a
//! window of `L/2` tokens on either side, drop stopwords and rare lemmas, and
//! keep the remaining bag of context words as one [`Snippet`].
//!
//! Genre, time and sense indices are 0-based in memory and 1-based in every
//! text file.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lemma table with dense ids and corpus-wide frequencies.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "RawVocabulary")]
pub struct Vocabulary {
    lemmas: Vec<String>,
    counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct RawVocabulary {
    lemmas: Vec<String>,
    counts: Vec<u64>,
}

impl From<RawVocabulary> for Vocabulary {
    fn from(raw: RawVocabulary) -> Self {
        let mut v = Vocabulary {
            lemmas: raw.lemmas,
            counts: raw.counts,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }
}

impl Vocabulary {
    /// Builds a vocabulary from `(lemma, count)` pairs, keeping the given order.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::default();
        for (lemma, count) in entries {
            let lemma = lemma.into();
            if vocab.index.contains_key(&lemma) {
                return Err(Error::param(format!("duplicate lemma `{lemma}`")));
            }
            vocab.index.insert(lemma.clone(), vocab.lemmas.len());
            vocab.lemmas.push(lemma);
            vocab.counts.push(count);
        }
        Ok(vocab)
    }

    /// Corpus-wide vocabulary: every lemma outside `stopwords` seen at least
    /// `min_count` times, in descending frequency order (ties by lemma).
    pub fn from_corpus(docs: &[Document], min_count: u64, stopwords: &HashSet<String>) -> Self {
        let counts = lemma_counts(docs);
        let mut kept: Vec<(&str, u64)> = counts
            .iter()
            .filter(|(l, &c)| c >= min_count && !stopwords.contains(**l))
            .map(|(l, &c)| (*l, c))
            .collect();
        sort_by_frequency(&mut kept);
        Vocabulary::from_entries(kept.into_iter().map(|(l, c)| (l.to_string(), c)))
            .expect("lemmas are distinct")
    }

    pub fn len(&self) -> usize {
        self.lemmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    pub fn id(&self, lemma: &str) -> Option<usize> {
        self.index.get(lemma).copied()
    }

    pub fn lemma(&self, id: usize) -> &str {
        &self.lemmas[id]
    }

    pub fn lemmas(&self) -> &[String] {
        &self.lemmas
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Synthetic vocabulary `w0, w1, ...` used by the simulator.
    pub fn synthetic(size: usize) -> Self {
        Vocabulary::from_entries((0..size).map(|i| (format!("w{i}"), 0))).expect("distinct")
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .lemmas
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
    }
}

fn sort_by_frequency(entries: &mut [(&str, u64)]) {
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
}

fn lemma_counts(docs: &[Document]) -> HashMap<&str, u64> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        for lemma in &doc.lemmas {
            *counts.entry(lemma.as_str()).or_default() += 1;
        }
    }
    counts
}

/// One bag of context words around a target occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub words: Vec<u32>,
    pub genre: usize,
    pub time: usize,
    pub true_sense: Option<usize>,
    pub collocate: bool,
}

impl Snippet {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetDataset {
    pub snippets: Vec<Snippet>,
    pub vocab: Vocabulary,
    /// Maximum window length `L`.
    pub window: usize,
    pub genres: usize,
    pub times: usize,
    /// Number of true senses; 0 when no snippet is labelled.
    pub true_senses: usize,
}

impl SnippetDataset {
    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_fully_labelled(&self) -> bool {
        self.snippets.iter().all(|s| s.true_sense.is_some())
    }

    /// Checks every structural invariant and returns the data summary.
    pub fn validate(&self) -> Result<DataSummary> {
        let v = self.vocab.len();
        if self.snippets.is_empty() {
            return Err(Error::param("dataset has no snippets"));
        }
        let mut labelled = false;
        for (index, s) in self.snippets.iter().enumerate() {
            let bad = |field, message: String| Error::InvalidSnippet {
                index,
                field,
                message,
            };
            if s.words.len() > self.window {
                return Err(bad(
                    "words",
                    format!("{} words exceed window {}", s.words.len(), self.window),
                ));
            }
            if let Some(&w) = s.words.iter().find(|&&w| w as usize >= v) {
                return Err(bad("words", format!("word id {w} >= V = {v}")));
            }
            if s.genre >= self.genres {
                return Err(bad("genre", format!("{} not in 1..={}", s.genre + 1, self.genres)));
            }
            if s.time >= self.times {
                return Err(bad("time", format!("{} not in 1..={}", s.time + 1, self.times)));
            }
            match s.true_sense {
                Some(k) if k >= self.true_senses => {
                    return Err(bad(
                        "true_sense",
                        format!("{} not in 1..={}", k + 1, self.true_senses),
                    ))
                }
                Some(_) => labelled = true,
                None if s.collocate => {
                    return Err(bad("collocate", "collocate snippet without a sense label".into()))
                }
                None => {}
            }
        }
        if !labelled && self.true_senses != 0 {
            return Err(Error::param(format!(
                "K' = {} declared but no snippet is labelled",
                self.true_senses
            )));
        }
        Ok(self.summary_unchecked())
    }

    fn summary_unchecked(&self) -> DataSummary {
        let mut cell_counts = vec![0usize; self.genres * self.times];
        for s in &self.snippets {
            cell_counts[s.genre * self.times + s.time] += 1;
        }
        DataSummary {
            snippets: self.snippets.len(),
            collocates: self.snippets.iter().filter(|s| s.collocate).count(),
            vocab_size: self.vocab.len(),
            window: self.window,
            true_senses: self.true_senses,
            genres: self.genres,
            times: self.times,
            cell_counts,
        }
    }

    /// Writes the tab-separated snippet format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "#edisc-snippets\t1")?;
        writeln!(out, "#V\t{}", self.vocab.len())?;
        writeln!(out, "#L\t{}", self.window)?;
        writeln!(out, "#G\t{}", self.genres)?;
        writeln!(out, "#T\t{}", self.times)?;
        writeln!(out, "#K'\t{}", self.true_senses)?;
        for (id, lemma) in self.vocab.lemmas.iter().enumerate() {
            writeln!(out, "#lemma\t{id}\t{lemma}\t{}", self.vocab.counts[id])?;
        }
        let mut line = String::new();
        for s in &self.snippets {
            line.clear();
            let sense = s.true_sense.map_or("-".to_string(), |k| (k + 1).to_string());
            write!(
                line,
                "{}\t{}\t{}\t{}\t",
                s.genre + 1,
                s.time + 1,
                sense,
                u8::from(s.collocate)
            )
            .unwrap();
            for (i, w) in s.words.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                write!(line, "{w}").unwrap();
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(file, path)
    }

    /// Parses the snippet format; `origin` is only used in error messages.
    pub fn read_from<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut header: HashMap<String, usize> = HashMap::new();
        let mut lemmas: Vec<(usize, String, u64)> = Vec::new();
        let mut snippets = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let fields: Vec<&str> = rest.split('\t').collect();
                match fields.as_slice() {
                    ["edisc-snippets", version] => {
                        if *version != "1" {
                            return Err(Error::Format(format!("snippet file version {version}")));
                        }
                    }
                    ["lemma", id, lemma, count] => {
                        let id = id.parse().map_err(|e| perr(lineno, format!("lemma id: {e}")))?;
                        let count =
                            count.parse().map_err(|e| perr(lineno, format!("lemma count: {e}")))?;
                        lemmas.push((id, lemma.to_string(), count));
                    }
                    [key, value] => {
                        let value = value
                            .parse()
                            .map_err(|e| perr(lineno, format!("header {key}: {e}")))?;
                        header.insert(key.to_string(), value);
                    }
                    _ => {} // free-form comment
                }
                continue;
            }
            snippets.push(parse_snippet_line(&line).map_err(|m| perr(lineno, m))?);
        }
        let get = |key: &str| {
            header
                .get(key)
                .copied()
                .ok_or_else(|| perr(0, format!("missing header #{key}")))
        };
        let v = get("V")?;
        lemmas.sort_by_key(|(id, _, _)| *id);
        if lemmas.len() != v || lemmas.iter().enumerate().any(|(i, (id, _, _))| i != *id) {
            return Err(perr(0, format!("lemma table does not cover ids 0..{v}")));
        }
        let mut vocab = Vocabulary {
            lemmas: lemmas.iter().map(|(_, l, _)| l.clone()).collect(),
            counts: lemmas.iter().map(|(_, _, c)| *c).collect(),
            index: HashMap::new(),
        };
        vocab.rebuild_index();
        let dataset = SnippetDataset {
            snippets,
            vocab,
            window: get("L")?,
            genres: get("G")?,
            times: get("T")?,
            true_senses: get("K'")?,
        };
        Ok(dataset)
    }
}

fn parse_snippet_line(line: &str) -> std::result::Result<Snippet, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
    }
    let one_based = |s: &str, what: &str| -> std::result::Result<usize, String> {
        match s.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(format!("{what} `{s}` is not a positive integer")),
        }
    };
    let genre = one_based(fields[0], "genre")?;
    let time = one_based(fields[1], "time")?;
    let true_sense = match fields[2] {
        "-" => None,
        s => Some(one_based(s, "sense")?),
    };
    let collocate = match fields[3] {
        "0" => false,
        "1" => true,
        s => return Err(format!("collocate flag `{s}` is not 0/1")),
    };
    let words = fields[4]
        .split_whitespace()
        .map(|w| w.parse::<u32>().map_err(|e| format!("word id `{w}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Snippet {
        words,
        genre,
        time,
        true_sense,
        collocate,
    })
}

/// Table-style summary of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSummary {
    pub snippets: usize,
    pub collocates: usize,
    pub vocab_size: usize,
    pub window: usize,
    pub true_senses: usize,
    pub genres: usize,
    pub times: usize,
    /// Snippet counts per (genre, time), genre-major.
    pub cell_counts: Vec<usize>,
}

impl DataSummary {
    pub fn cell_count(&self, genre: usize, time: usize) -> usize {
        self.cell_counts[genre * self.times + time]
    }
}

/// A lemmatized document with its metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub genre: usize,
    pub time: usize,
    pub lemmas: Vec<String>,
}

/// Parses `doc_id TAB genre TAB time TAB lemmas...` records.
pub fn parse_corpus<R: BufRead>(input: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(4, '\t');
        let id = fields.next().unwrap_or_default().to_string();
        let (Some(genre), Some(time)) = (fields.next(), fields.next()) else {
            return Err(Error::BadDocument {
                doc_id: id,
                message: "expected `doc_id TAB genre TAB time TAB lemmas`".into(),
            });
        };
        let meta = |value: &str, what: &str| match value.trim().parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(Error::BadDocument {
                doc_id: id.clone(),
                message: format!("unknown {what} `{value}`"),
            }),
        };
        let genre = meta(genre, "genre")?;
        let time = meta(time, "time")?;
        let lemmas = fields
            .next()
            .unwrap_or_default()
            .split_whitespace()
            .map(str::to_string)
            .collect();
        docs.push(Document {
            id,
            genre,
            time,
            lemmas,
        });
    }
    Ok(docs)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    parse_corpus(file)
}

/// One lemma per line; blank lines and `#` comments are ignored.
pub fn read_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone)]
pub struct PrepareOptions {
    pub target: String,
    /// Window length `L`; `L/2` tokens are taken on each side.
    pub window: usize,
    pub min_count: u64,
    pub stopwords: HashSet<String>,
    /// Declared number of genres; inferred from the corpus when `None`.
    pub genres: Option<usize>,
    /// Declared number of time periods; inferred when `None`.
    pub times: Option<usize>,
}

impl PrepareOptions {
    pub fn new(target: impl Into<String>) -> Self {
        PrepareOptions {
            target: target.into(),
            window: 14,
            min_count: 10,
            stopwords: HashSet::new(),
            genres: None,
            times: None,
        }
    }
}

/// Extracts one snippet per target occurrence.
///
/// Windows cross sentence boundaries and are truncated at document edges.
/// Stopwords are removed first, then lemmas whose corpus-wide count is below
/// `min_count`. Word ids follow descending corpus frequency.
pub fn prepare_snippets(docs: &[Document], opts: &PrepareOptions) -> Result<SnippetDataset> {
    if opts.window < 2 || !opts.window.is_multiple_of(2) {
        return Err(Error::param(format!("window must be even and >= 2, got {}", opts.window)));
    }
    if opts.min_count == 0 {
        return Err(Error::param("min_count must be >= 1"));
    }
    for doc in docs {
        let out_of_range = |declared: Option<usize>, value: usize| declared.is_some_and(|n| value >= n);
        if out_of_range(opts.genres, doc.genre) {
            return Err(Error::BadDocument {
                doc_id: doc.id.clone(),
                message: format!("genre {} exceeds declared G", doc.genre + 1),
            });
        }
        if out_of_range(opts.times, doc.time) {
            return Err(Error::BadDocument {
                doc_id: doc.id.clone(),
                message: format!("time {} exceeds declared T", doc.time + 1),
            });
        }
    }

    let counts = lemma_counts(docs);
    let keep = |lemma: &str| {
        lemma != opts.target
            && !opts.stopwords.contains(lemma)
            && counts.get(lemma).copied().unwrap_or(0) >= opts.min_count
    };

    let half = opts.window / 2;
    let mut bags: Vec<(usize, usize, Vec<&str>)> = Vec::new();
    for doc in docs {
        for (pos, lemma) in doc.lemmas.iter().enumerate() {
            if *lemma != opts.target {
                continue;
            }
            let lo = pos.saturating_sub(half);
            let hi = (pos + half + 1).min(doc.lemmas.len());
            let bag = doc.lemmas[lo..hi]
                .iter()
                .enumerate()
                .filter(|(i, l)| lo + i != pos && keep(l))
                .map(|(_, l)| l.as_str())
                .collect();
            bags.push((doc.genre, doc.time, bag));
        }
    }
    if bags.is_empty() {
        return Err(Error::EmptyDataset(opts.target.clone()));
    }

    let mut retained: Vec<(&str, u64)> = bags
        .iter()
        .flat_map(|(_, _, b)| b.iter().copied())
        .collect::<HashSet<_>>()
        .into_iter()
        .map(|l| (l, counts[l]))
        .collect();
    sort_by_frequency(&mut retained);
    let vocab = Vocabulary::from_entries(retained.iter().map(|(l, c)| (l.to_string(), *c)))?;

    let genres = opts
        .genres
        .unwrap_or_else(|| docs.iter().map(|d| d.genre + 1).max().unwrap_or(1));
    let times = opts
        .times
        .unwrap_or_else(|| docs.iter().map(|d| d.time + 1).max().unwrap_or(1));
    let snippets = bags
        .into_iter()
        .map(|(genre, time, bag)| Snippet {
            words: bag.iter().map(|l| vocab.id(l).unwrap() as u32).collect(),
            genre,
            time,
            true_sense: None,
            collocate: false,
        })
        .collect();
    Ok(SnippetDataset {
        snippets,
        vocab,
        window: opts.window,
        genres,
        times,
        true_senses: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, genre: usize, time: usize, text: &str) -> Document {
        Document {
            id: id.into(),
            genre,
            time,
            lemmas: text.split_whitespace().map(str::to_string).collect(),
        }
    }

    #[test]
    fn stopworded_context_gives_empty_bag() {
        let docs = vec![doc("d1", 0, 0, "the bank of")];
        let mut opts = PrepareOptions::new("bank");
        opts.min_count = 1;
        opts.stopwords = ["the", "of"].iter().map(|s| s.to_string()).collect();
        let ds = prepare_snippets(&docs, &opts).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.snippets[0].len(), 0);
        assert!(ds.vocab.is_empty());
    }

    #[test]
    fn missing_target_is_an_error() {
        let docs = vec![doc("d1", 0, 0, "a b c")];
        let mut opts = PrepareOptions::new("bank");
        opts.min_count = 1;
        assert!(matches!(prepare_snippets(&docs, &opts), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn bad_metadata_names_document() {
        let input = "d1\t1\t1\ta b\nd2\tx\t1\tc d\n";
        match parse_corpus(input.as_bytes()) {
            Err(Error::BadDocument { doc_id, .. }) => assert_eq!(doc_id, "d2"),
            other => panic!("unexpected {other:?}"),
        }
        let docs = vec![doc("late", 0, 5, "bank a")];
        let mut opts = PrepareOptions::new("bank");
        opts.min_count = 1;
        opts.times = Some(3);
        match prepare_snippets(&docs, &opts) {
            Err(Error::BadDocument { doc_id, .. }) => assert_eq!(doc_id, "late"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn odd_window_rejected() {
        let docs = vec![doc("d1", 0, 0, "bank a")];
        let mut opts = PrepareOptions::new("bank");
        opts.window = 3;
        assert!(prepare_snippets(&docs, &opts).is_err());
    }

    #[test]
    fn single_unlabelled_snippet_summary() {
        let ds = SnippetDataset {
            snippets: vec![Snippet {
                words: vec![0],
                genre: 0,
                time: 0,
                true_sense: None,
                collocate: false,
            }],
            vocab: Vocabulary::synthetic(1),
            window: 2,
            genres: 1,
            times: 1,
            true_senses: 0,
        };
        let s = ds.validate().unwrap();
        assert_eq!((s.snippets, s.collocates), (1, 0));
    }

    #[test]
    fn validate_names_offending_field() {
        let mut ds = SnippetDataset {
            snippets: vec![
                Snippet {
                    words: vec![0],
                    genre: 0,
                    time: 0,
                    true_sense: None,
                    collocate: false,
                },
                Snippet {
                    words: vec![0, 7],
                    genre: 0,
                    time: 0,
                    true_sense: None,
                    collocate: false,
                },
            ],
            vocab: Vocabulary::synthetic(2),
            window: 4,
            genres: 1,
            times: 1,
            true_senses: 0,
        };
        match ds.validate() {
            Err(Error::InvalidSnippet { index, field, .. }) => assert_eq!((index, field), (1, "words")),
            other => panic!("unexpected {other:?}"),
        }
        ds.snippets[1].words = vec![1];
        ds.snippets[1].collocate = true;
        match ds.validate() {
            Err(Error::InvalidSnippet { index, field, .. }) => {
                assert_eq!((index, field), (1, "collocate"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
