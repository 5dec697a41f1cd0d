use std::path::Path;

use edisc::corpus::{Document, Vocabulary};
use edisc::embeddings::{
    build_cooccurrence, load_embeddings, median_sq_distance, train_glove, CoocMatrix, EmbeddingMatrix, GloveSettings,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn doc(lemmas: Vec<String>) -> Document {
    Document {
        id: "d".into(),
        genre: 0,
        time: 0,
        lemmas,
    }
}

fn vocab_of(n: usize) -> Vocabulary {
    Vocabulary::from_entries((0..n).map(|i| (format!("w{i}"), 1))).unwrap()
}

#[test]
fn cooccurrence_matches_pairwise_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vocab = vocab_of(12);
    // Tokens `x*` are outside the vocabulary.
    let tokens: Vec<String> = (0..200)
        .map(|_| {
            let i = rng.random_range(0..15);
            if i < 12 {
                format!("w{i}")
            } else {
                format!("x{i}")
            }
        })
        .collect();
    let window = 5;
    let cooc = build_cooccurrence(&[doc(tokens.clone())], &vocab, window);

    let kept: Vec<usize> = tokens.iter().filter_map(|t| vocab.id(t)).collect();
    let mut dense = vec![0.0; 144];
    let mut mass = 0.0;
    for p in 0..kept.len() {
        for q in 0..kept.len() {
            let d = p.abs_diff(q);
            if d >= 1 && d <= window {
                dense[kept[p] * 12 + kept[q]] += 1.0 / d as f64;
                mass += 1.0 / d as f64;
            }
        }
    }
    for i in 0..12 {
        for j in 0..12 {
            assert!((cooc.get(i, j) - dense[i * 12 + j]).abs() < 1e-12, "({i}, {j})");
            assert_eq!(cooc.get(i, j), cooc.get(j, i));
        }
    }
    assert!((cooc.total() - mass).abs() < 1e-9);
    assert_eq!(cooc.skipped_tokens as usize, tokens.len() - kept.len());
}

#[test]
fn single_pair_loss_decreases() {
    let vocab = vocab_of(2);
    let cooc = CoocMatrix::from_entries(2, vec![(0, 1, 5.0), (1, 0, 5.0)]).unwrap();
    let settings = GloveSettings {
        dim: 1,
        tolerance: 0.0,
        max_epochs: 10,
        ..GloveSettings::default()
    };
    let trace = train_glove(&cooc, &vocab, &settings).unwrap().loss_trace;
    assert_eq!(trace.len(), 10);
    assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");
    assert!(trace[9] < trace[0]);
}

#[test]
fn no_off_diagonal_signal_keeps_init_scale() {
    let vocab = vocab_of(4);
    let cooc = CoocMatrix::from_entries(4, vec![(0, 1, 0.0), (2, 3, 0.0)]).unwrap();
    let settings = GloveSettings {
        dim: 5,
        ..GloveSettings::default()
    };
    let rho = train_glove(&cooc, &vocab, &settings).unwrap().embeddings;
    // Word plus context vector, each uniform on [-0.5/M, 0.5/M].
    let bound = 2.0 * 0.5 / 5.0;
    assert!(rho.as_slice().iter().all(|x| x.abs() <= bound));
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn disjoint_topics_separate() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vocab = vocab_of(20);
    let docs: Vec<Document> = (0..200)
        .map(|i| {
            let base = if i % 2 == 0 { 0 } else { 10 };
            doc((0..40).map(|_| format!("w{}", base + rng.random_range(0..10))).collect())
        })
        .collect();
    let cooc = build_cooccurrence(&docs, &vocab, 10);
    let settings = GloveSettings {
        dim: 10,
        ..GloveSettings::default()
    };
    let rho = train_glove(&cooc, &vocab, &settings).unwrap().embeddings;
    let (mut within, mut between) = (Vec::new(), Vec::new());
    for i in 0..20 {
        for j in i + 1..20 {
            let c = cosine(rho.row(i), rho.row(j));
            if (i < 10) == (j < 10) {
                within.push(c);
            } else {
                between.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&within) > mean(&between), "{} vs {}", mean(&within), mean(&between));
}

#[test]
fn glove_is_deterministic() {
    let vocab = vocab_of(6);
    let docs = vec![doc("w0 w1 w2 w3 w4 w5 w0 w2 w4".split(' ').map(String::from).collect())];
    let cooc = build_cooccurrence(&docs, &vocab, 3);
    let settings = GloveSettings {
        dim: 3,
        ..GloveSettings::default()
    };
    let a = train_glove(&cooc, &vocab, &settings).unwrap();
    let b = train_glove(&cooc, &vocab, &settings).unwrap();
    assert_eq!(a.embeddings, b.embeddings);
    assert_eq!(a.loss_trace, b.loss_trace);
}

#[test]
fn file_shape_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    let vocab = vocab_of(7);
    let rho = EmbeddingMatrix::random(&vocab, 4, 9);
    rho.save(&path).unwrap();
    let back = load_embeddings(&path, &vocab).unwrap();
    assert_eq!((back.rows(), back.dim()), (7, 4));
    assert_eq!(back.as_slice(), rho.as_slice());
}

#[test]
fn loader_accepts_header_and_reorders() {
    let text = "2 2\nb 0.5 1.5\na -1 2\n";
    let rho = EmbeddingMatrix::read_from(text.as_bytes(), Path::new("mem")).unwrap();
    let vocab = Vocabulary::from_entries([("a", 1), ("b", 1)]).unwrap();
    let aligned = rho.align(&vocab).unwrap();
    assert_eq!(aligned.row(0), [-1.0, 2.0]);
    assert_eq!(aligned.row(1), [0.5, 1.5]);
}

#[test]
fn loader_names_missing_lemma() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    std::fs::write(&path, "a 1 2\n").unwrap();
    let vocab = Vocabulary::from_entries([("a", 1), ("kosmos", 1)]).unwrap();
    let err = load_embeddings(&path, &vocab).unwrap_err().to_string();
    assert!(err.contains("kosmos"), "{err}");
}

#[test]
fn median_matches_sorted_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab = vocab_of(100);
    let values: Vec<f64> = (0..100 * 6).map(|_| rng.sample(StandardNormal)).collect();
    let rho = EmbeddingMatrix::new(vocab.lemmas().to_vec(), 6, values).unwrap();
    let mut all = Vec::new();
    for x in 0..100 {
        for y in x + 1..100 {
            all.push(rho.row(x).iter().zip(rho.row(y)).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
        }
    }
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let oracle = if n % 2 == 1 { all[n / 2] } else { 0.5 * (all[n / 2 - 1] + all[n / 2]) };
    let c = median_sq_distance(&rho).unwrap();
    assert!((c - oracle).abs() <= 0.01 * oracle, "{c} vs {oracle}");
}

proptest! {
    #[test]
    fn median_is_translation_invariant(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..25),
        shift in prop::collection::vec(-10.0f64..10.0, 3),
    ) {
        let v = rows.len();
        let vocab = vocab_of(v);
        let base = EmbeddingMatrix::new(vocab.lemmas().to_vec(), 3, rows.concat()).unwrap();
        let moved: Vec<f64> = rows.iter().flat_map(|r| r.iter().zip(&shift).map(|(a, s)| a + s)).collect();
        let moved = EmbeddingMatrix::new(vocab.lemmas().to_vec(), 3, moved).unwrap();
        let (a, b) = (median_sq_distance(&base).unwrap(), median_sq_distance(&moved).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}
