//! Word embeddings: GloVe training on a filtered corpus, a plain-text loader,
//! and the median pairwise squared distance used to scale the priors.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};

/// Largest vocabulary for which the median distance is computed exactly.
pub const EXACT_MEDIAN_LIMIT: usize = 2000;
const SAMPLED_MEDIAN_PAIRS: usize = 1_000_000;
const MEDIAN_SEED: u64 = 0x5eed_c0de;

/// A `V x M` embedding matrix with one row per lemma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    lemmas: Vec<String>,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(lemmas: Vec<String>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("embedding dimension must be >= 1"));
        }
        if values.len() != lemmas.len() * dim {
            return Err(Error::Dimension {
                block: "embeddings",
                expected: lemmas.len() * dim,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding for `{}`",
                lemmas[i / dim]
            )));
        }
        Ok(EmbeddingMatrix { lemmas, dim, values })
    }

    /// The `V x V` identity, handy for checking EDiSC against DiSC.
    pub fn identity(vocab: &Vocabulary) -> Self {
        let v = vocab.len();
        let mut values = vec![0.0; v * v];
        for i in 0..v {
            values[i * v + i] = 1.0;
        }
        EmbeddingMatrix::new(vocab.lemmas().to_vec(), v, values).expect("finite")
    }

    /// Standard normal entries; used for synthetic experiments.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..vocab.len() * dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        EmbeddingMatrix::new(vocab.lemmas().to_vec(), dim, values).expect("finite")
    }

    pub fn rows(&self) -> usize {
        self.lemmas.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lemmas(&self) -> &[String] {
        &self.lemmas
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major `V x M` values.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Selects and reorders rows to match `vocab` ids.
    pub fn align(&self, vocab: &Vocabulary) -> Result<Self> {
        let index: HashMap<&str, usize> = self
            .lemmas
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let missing: Vec<String> = vocab
            .lemmas()
            .iter()
            .filter(|l| !index.contains_key(l.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbeddings(missing));
        }
        let mut values = Vec::with_capacity(vocab.len() * self.dim);
        for lemma in vocab.lemmas() {
            values.extend_from_slice(self.row(index[lemma.as_str()]));
        }
        EmbeddingMatrix::new(vocab.lemmas().to_vec(), self.dim, values)
    }

    /// Writes `V M` followed by one `lemma v1 ... vM` line per row. Floats use
    /// the shortest representation that parses back to the same bits.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.rows(), self.dim)?;
        for (i, lemma) in self.lemmas.iter().enumerate() {
            write!(out, "{lemma}")?;
            for x in self.row(i) {
                write!(out, " {x:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(file)
    }

    /// Reads every row of an embedding file, without aligning.
    pub fn read_from<R: BufRead>(input: R, origin: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lemmas = Vec::new();
        let mut values = Vec::new();
        let mut dim: Option<usize> = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let mut fields = line.split_whitespace();
            let Some(first) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if lineno == 1 && rest.len() == 1 && first.parse::<usize>().is_ok() {
                if let Ok(m) = rest[0].parse::<usize>() {
                    dim = Some(m);
                    continue;
                }
            }
            let row = rest
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| perr(lineno, format!("bad float: {e}")))?;
            match dim {
                None => dim = Some(row.len()),
                Some(m) if m != row.len() => {
                    return Err(perr(
                        lineno,
                        format!("expected {m} values, found {}", row.len()),
                    ))
                }
                Some(_) => {}
            }
            lemmas.push(first.to_string());
            values.extend(row);
        }
        let dim = dim.ok_or_else(|| perr(0, "empty embedding file".into()))?;
        EmbeddingMatrix::new(lemmas, dim, values)
    }
}

/// Loads an embedding file and aligns its rows to `vocab`.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    EmbeddingMatrix::read_from(file, path)?.align(vocab)
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median of `(rho_x - rho_y)^T (rho_x - rho_y)` over unordered word pairs.
///
/// Exact up to [`EXACT_MEDIAN_LIMIT`] rows; above that a fixed-seed sample of
/// one million random pairs is used.
pub fn median_sq_distance(rho: &EmbeddingMatrix) -> Result<f64> {
    let v = rho.rows();
    if v < 2 {
        return Err(Error::param(format!("need at least 2 embeddings, have {v}")));
    }
    let mut dists = if v <= EXACT_MEDIAN_LIMIT {
        let mut d = Vec::with_capacity(v * (v - 1) / 2);
        for x in 0..v {
            for y in x + 1..v {
                d.push(sq_distance(rho.row(x), rho.row(y)));
            }
        }
        d
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SEED);
        (0..SAMPLED_MEDIAN_PAIRS)
            .map(|_| {
                let x = rng.random_range(0..v);
                let mut y = rng.random_range(0..v - 1);
                if y >= x {
                    y += 1;
                }
                sq_distance(rho.row(x), rho.row(y))
            })
            .collect()
    };
    Ok(median_in_place(&mut dists))
}

/// Sparse co-occurrence counts, sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocMatrix {
    size: usize,
    entries: Vec<(u32, u32, f64)>,
    /// Tokens dropped because they were not in the vocabulary.
    pub skipped_tokens: u64,
}

impl CoocMatrix {
    pub fn from_entries(size: usize, mut entries: Vec<(u32, u32, f64)>) -> Result<Self> {
        for &(i, j, x) in &entries {
            if i as usize >= size || j as usize >= size {
                return Err(Error::param(format!("entry ({i}, {j}) outside {size}x{size}")));
            }
            if !x.is_finite() || x < 0.0 {
                return Err(Error::param(format!("entry ({i}, {j}) = {x} is not a count")));
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        Ok(CoocMatrix {
            size,
            entries,
            skipped_tokens: 0,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i as u32, j as u32), |&(a, b, _)| (a, b))
            .map_or(0.0, |k| self.entries[k].2)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }
}

/// Distance-weighted co-occurrence counts.
///
/// Tokens outside `vocab` are removed before windowing, so distances count
/// retained tokens only. Each ordered pair of positions at distance
/// `d <= window` adds `1/d`, which makes the matrix symmetric.
pub fn build_cooccurrence(docs: &[Document], vocab: &Vocabulary, window: usize) -> CoocMatrix {
    let mut counts: HashMap<(u32, u32), f64> = HashMap::new();
    let mut skipped = 0u64;
    for doc in docs {
        let ids: Vec<u32> = doc
            .lemmas
            .iter()
            .filter_map(|l| {
                let id = vocab.id(l).map(|i| i as u32);
                if id.is_none() {
                    skipped += 1;
                }
                id
            })
            .collect();
        for (p, &a) in ids.iter().enumerate() {
            for d in 1..=window.min(ids.len() - 1 - p) {
                let b = ids[p + d];
                let w = 1.0 / d as f64;
                *counts.entry((a, b)).or_default() += w;
                *counts.entry((b, a)).or_default() += w;
            }
        }
    }
    let entries = counts.into_iter().map(|((i, j), x)| (i, j, x)).collect();
    let mut cooc = CoocMatrix::from_entries(vocab.len(), entries).expect("valid by construction");
    cooc.skipped_tokens = skipped;
    cooc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GloveSettings {
    pub dim: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    /// Stop once the relative change in mean epoch loss drops below this.
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for GloveSettings {
    fn default() -> Self {
        GloveSettings {
            dim: 50,
            x_max: 100.0,
            alpha: 0.75,
            learning_rate: 0.05,
            tolerance: 0.01,
            max_epochs: 50,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GloveOutput {
    pub embeddings: EmbeddingMatrix,
    /// Mean weighted loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Fits GloVe vectors with AdaGrad and returns the sum of the word and
/// context vectors.
pub fn train_glove(
    cooc: &CoocMatrix,
    vocab: &Vocabulary,
    settings: &GloveSettings,
) -> Result<GloveOutput> {
    let m = settings.dim;
    let v = cooc.size();
    if m == 0 {
        return Err(Error::param("embedding dimension must be >= 1"));
    }
    if cooc.entries().is_empty() {
        return Err(Error::param("co-occurrence matrix is empty"));
    }
    if vocab.len() != v {
        return Err(Error::Dimension {
            block: "vocabulary",
            expected: v,
            found: vocab.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let scale = 0.5 / m as f64;
    let mut init = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
    };
    let mut w = init(v * m);
    let mut ctx = init(v * m);
    let mut bias = init(v);
    let mut ctx_bias = init(v);
    let mut gsq_w = vec![1.0f64; v * m];
    let mut gsq_ctx = vec![1.0f64; v * m];
    let mut gsq_b = vec![1.0f64; v];
    let mut gsq_cb = vec![1.0f64; v];

    let mut order: Vec<usize> = (0..cooc.entries().len())
        .filter(|&e| cooc.entries()[e].2 > 0.0)
        .collect();
    let lr = settings.learning_rate;
    let mut loss_trace = Vec::new();
    let mut grad_w = vec![0.0; m];
    let mut grad_c = vec![0.0; m];
    for epoch in 0..settings.max_epochs {
        if order.is_empty() {
            break;
        }
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &e in &order {
            let (i, j, x) = cooc.entries()[e];
            let (i, j) = (i as usize, j as usize);
            let wi = i * m..(i + 1) * m;
            let cj = j * m..(j + 1) * m;
            let dot: f64 = w[wi.clone()].iter().zip(&ctx[cj.clone()]).map(|(a, b)| a * b).sum();
            let diff = dot + bias[i] + ctx_bias[j] - x.ln();
            let weight = if x < settings.x_max {
                (x / settings.x_max).powf(settings.alpha)
            } else {
                1.0
            };
            let fdiff = weight * diff;
            loss += 0.5 * fdiff * diff;
            for d in 0..m {
                grad_w[d] = fdiff * ctx[j * m + d];
                grad_c[d] = fdiff * w[i * m + d];
            }
            for d in 0..m {
                let a = i * m + d;
                let b = j * m + d;
                w[a] -= lr * grad_w[d] / gsq_w[a].sqrt();
                ctx[b] -= lr * grad_c[d] / gsq_ctx[b].sqrt();
                gsq_w[a] += grad_w[d] * grad_w[d];
                gsq_ctx[b] += grad_c[d] * grad_c[d];
            }
            bias[i] -= lr * fdiff / gsq_b[i].sqrt();
            ctx_bias[j] -= lr * fdiff / gsq_cb[j].sqrt();
            gsq_b[i] += fdiff * fdiff;
            gsq_cb[j] += fdiff * fdiff;
        }
        let mean = loss / order.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("GloVe loss at epoch {epoch}")));
        }
        let converged = loss_trace
            .last()
            .is_some_and(|&prev: &f64| ((prev - mean) / prev).abs() < settings.tolerance);
        loss_trace.push(mean);
        if converged {
            break;
        }
    }

    let values = w.iter().zip(&ctx).map(|(a, b)| a + b).collect();
    Ok(GloveOutput {
        embeddings: EmbeddingMatrix::new(vocab.lemmas().to_vec(), m, values)?,
        loss_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_entries(words.iter().map(|w| (*w, 1))).unwrap()
    }

    fn doc(text: &str) -> Document {
        Document {
            id: "d".into(),
            genre: 0,
            time: 0,
            lemmas: text.split_whitespace().map(str::to_string).collect(),
        }
    }

    #[test]
    fn adjacent_pair_counts_one() {
        let v = vocab(&["a", "b"]);
        let c = build_cooccurrence(&[doc("a b")], &v, 3);
        assert_eq!(c.get(0, 1), 1.0);
        assert_eq!(c.get(1, 0), 1.0);
    }

    #[test]
    fn filtered_tokens_do_not_count_towards_distance() {
        let v = vocab(&["a", "b", "c"]);
        // `x` is dropped before windowing, so `a` and `b` end up adjacent.
        let c = build_cooccurrence(&[doc("a x b c")], &v, 1);
        assert_eq!(c.get(0, 1), 1.0);
        assert_eq!(c.get(0, 2), 0.0);
        assert_eq!(c.skipped_tokens, 1);
        let c = build_cooccurrence(&[doc("a c b")], &v, 2);
        assert_eq!(c.get(0, 1), 0.5);
    }

    #[test]
    fn median_of_basis_vectors() {
        let e = EmbeddingMatrix::new(vec!["a".into(), "b".into()], 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(median_sq_distance(&e).unwrap(), 2.0);
        let e = EmbeddingMatrix::new(vec!["a".into(), "b".into()], 2, vec![3.0, 1.0, 3.0, 1.0]).unwrap();
        assert_eq!(median_sq_distance(&e).unwrap(), 0.0);
        let e = EmbeddingMatrix::new(vec!["a".into()], 2, vec![3.0, 1.0]).unwrap();
        assert!(median_sq_distance(&e).is_err());
    }

    #[test]
    fn missing_lemma_is_named() {
        let e = EmbeddingMatrix::new(vec!["a".into()], 1, vec![0.5]).unwrap();
        match e.align(&vocab(&["a", "zeta"])) {
            Err(Error::MissingEmbeddings(m)) => assert_eq!(m, vec!["zeta".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_file_reports_line() {
        let text = "a 1 2\nb 3\n";
        match EmbeddingMatrix::read_from(text.as_bytes(), Path::new("emb.txt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_cooc_rejected() {
        let v = vocab(&["a"]);
        let c = CoocMatrix::from_entries(1, vec![]).unwrap();
        assert!(train_glove(&c, &v, &GloveSettings::default()).is_err());
    }
}
