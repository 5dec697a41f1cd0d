#![allow(dead_code)]

use edisc::corpus::{Snippet, SnippetDataset, Vocabulary};
use edisc::embeddings::EmbeddingMatrix;
use edisc::model::{default_hyperparams, Dims, Hyperparams, ModelKind, ModelState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Instance {
    pub data: SnippetDataset,
    pub rho: Option<EmbeddingMatrix>,
    pub hp: Hyperparams,
    pub state: ModelState,
}

/// Random small instance: words uniform over the vocabulary, parameters
/// drawn from the prior (sigma included for EDiSC).
pub fn random_instance(seed: u64, kind: ModelKind) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = rng.random_range(5..=50);
    let m = rng.random_range(2..=8);
    let k = rng.random_range(1..=4);
    let t_n = rng.random_range(1..=5);
    let g_n = rng.random_range(1..=2);
    let d_n = rng.random_range(1..=40);
    instance_with(&mut rng, kind, v, m, k, t_n, g_n, d_n)
}

#[allow(clippy::too_many_arguments)]
pub fn instance_with(
    rng: &mut ChaCha8Rng,
    kind: ModelKind,
    v: usize,
    m: usize,
    k: usize,
    t_n: usize,
    g_n: usize,
    d_n: usize,
) -> Instance {
    let window = 10;
    let snippets = (0..d_n)
        .map(|_| {
            let len = rng.random_range(0..=window);
            Snippet {
                words: (0..len).map(|_| rng.random_range(0..v as u32)).collect(),
                genre: rng.random_range(0..g_n),
                time: rng.random_range(0..t_n),
                true_sense: None,
                collocate: false,
            }
        })
        .collect();
    let data = SnippetDataset {
        snippets,
        vocab: Vocabulary::synthetic(v),
        window,
        genres: g_n,
        times: t_n,
        true_senses: 0,
    };
    let (rho, hp) = match kind {
        ModelKind::Edisc => {
            let values = (0..v * m).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            let rho = EmbeddingMatrix::new(data.vocab.lemmas().to_vec(), m, values).unwrap();
            let hp = default_hyperparams(kind, k, m, Some(1.0)).unwrap();
            (Some(rho), hp)
        }
        ModelKind::Disc => (None, default_hyperparams(kind, k, 0, None).unwrap()),
    };
    let dims = Dims::new(kind, g_n, t_n, k, v, m);
    let state = ModelState::sample_prior(&hp, dims, true, rng);
    Instance { data, rho, hp, state }
}
