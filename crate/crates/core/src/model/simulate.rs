use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparams, ModelKind};
use super::likelihood::Model;
use super::state::{Dims, ModelState};
use crate::corpus::{Snippet, SnippetDataset, Vocabulary};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Shape of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub genres: usize,
    pub times: usize,
    /// Ignored for EDiSC, where the embedding rows fix `V`.
    pub vocab: usize,
    /// Maximum snippet length `L`; lengths are uniform on `max(1, L-4)..=L`.
    pub window: usize,
    /// Snippets per (genre, time), row-major `[g][t]`.
    pub counts: Vec<usize>,
    pub seed: u64,
}

impl SimulationSpec {
    /// The same number of snippets in every cell.
    pub fn uniform(genres: usize, times: usize, vocab: usize, window: usize, per_cell: usize, seed: u64) -> Self {
        SimulationSpec {
            genres,
            times,
            vocab,
            window,
            counts: vec![per_cell; genres * times],
            seed,
        }
    }
}

/// Draws a ground-truth state from the prior (including `sigma` for EDiSC)
/// and then a labelled dataset from the model.
pub fn simulate(
    hp: &Hyperparams,
    rho: Option<&EmbeddingMatrix>,
    spec: &SimulationSpec,
) -> Result<(SnippetDataset, ModelState)> {
    hp.validate()?;
    if spec.genres == 0 || spec.times == 0 {
        return Err(Error::param("G and T must be >= 1"));
    }
    if spec.window == 0 {
        return Err(Error::param("snippet length L must be >= 1"));
    }
    if spec.counts.len() != spec.genres * spec.times {
        return Err(Error::Dimension {
            block: "snippet counts",
            expected: spec.genres * spec.times,
            found: spec.counts.len(),
        });
    }
    let vocab = match (hp.kind, rho) {
        (ModelKind::Edisc, Some(r)) => Vocabulary::from_entries(r.lemmas().iter().map(|l| (l.clone(), 0)))?,
        (ModelKind::Edisc, None) => return Err(Error::param("EDiSC simulation requires embeddings")),
        (ModelKind::Disc, Some(_)) => return Err(Error::param("DiSC does not take embeddings")),
        (ModelKind::Disc, None) => Vocabulary::synthetic(spec.vocab),
    };
    if vocab.is_empty() {
        return Err(Error::param("V must be >= 1"));
    }
    let dims = Dims::new(hp.kind, spec.genres, spec.times, hp.senses, vocab.len(), hp.embed_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let state = ModelState::sample_prior(hp, dims, true, &mut rng);

    let mut data = SnippetDataset {
        snippets: Vec::new(),
        vocab,
        window: spec.window,
        genres: spec.genres,
        times: spec.times,
        true_senses: hp.senses,
    };
    let tables = Model::new(&data, rho, hp)?.tables(&state)?;
    let shortest = spec.window.saturating_sub(4).max(1);
    let mut snippets = Vec::with_capacity(spec.counts.iter().sum());
    for g in 0..spec.genres {
        for t in 0..spec.times {
            let n = spec.counts[g * spec.times + t];
            if n == 0 {
                continue;
            }
            let senses = WeightedIndex::new(tables.phi_tilde(g, t)).map_err(|e| Error::NonFinite(e.to_string()))?;
            let words: Vec<WeightedIndex<f64>> = (0..hp.senses)
                .map(|k| WeightedIndex::new(tables.psi_tilde(k, t)).map_err(|e| Error::NonFinite(e.to_string())))
                .collect::<Result<_>>()?;
            for _ in 0..n {
                let z = senses.sample(&mut rng);
                let len = rng.random_range(shortest..=spec.window);
                snippets.push(Snippet {
                    words: (0..len).map(|_| words[z].sample(&mut rng) as u32).collect(),
                    genre: g,
                    time: t,
                    true_sense: Some(z),
                    collocate: true,
                });
            }
        }
    }
    data.snippets = snippets;
    Ok((data, state))
}
