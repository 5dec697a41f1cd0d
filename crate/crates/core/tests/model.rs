mod common;

use common::{instance_with, random_instance};
use edisc::corpus::{Snippet, SnippetDataset, Vocabulary};
use edisc::embeddings::EmbeddingMatrix;
use edisc::model::{
    default_hyperparams, log_prior, simulate, softmax, Dims, Hyperparams, Model, ModelKind, ModelState,
    SimulationSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn naive_softmax(x: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn zero_state_gives_uniform_senses() {
    for kind in [ModelKind::Edisc, ModelKind::Disc] {
        let inst = random_instance(5, kind);
        let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
        let state = ModelState::zeros(kind, model.dims());
        let tables = model.tables(&state).unwrap();
        let d = model.dims();
        for k in 0..d.senses {
            for t in 0..d.times {
                for &p in tables.psi_tilde(k, t) {
                    assert!((p - 1.0 / d.vocab as f64).abs() < 1e-15);
                }
            }
        }
    }
}

#[test]
fn tables_match_naive_softmax() {
    for kind in [ModelKind::Edisc, ModelKind::Disc] {
        for seed in 0..10 {
            let inst = random_instance(seed, kind);
            let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
            let tables = model.tables(&inst.state).unwrap();
            let d = model.dims();
            let s = &inst.state;
            for k in 0..d.senses {
                for t in 0..d.times {
                    let logits: Vec<f64> = match &inst.rho {
                        Some(rho) => (0..d.vocab)
                            .map(|v| {
                                let xi = s.chi_at(k).iter().zip(s.theta_at(t)).map(|(c, th)| c + th);
                                rho.row(v).iter().zip(xi).map(|(r, x)| r * x).sum::<f64>() + s.sigma[v]
                            })
                            .collect(),
                        None => s.chi_at(k).iter().zip(s.theta_at(t)).map(|(c, th)| c + th).collect(),
                    };
                    let oracle = naive_softmax(&logits);
                    let got = tables.psi_tilde(k, t);
                    assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    for (a, b) in got.iter().zip(&oracle) {
                        assert!((a - b).abs() < 1e-10);
                    }
                    for (lp, p) in tables.log_psi_tilde(k, t).iter().zip(got) {
                        assert!((lp.exp() - p).abs() < 1e-12);
                    }
                }
            }
            for g in 0..d.genres {
                for t in 0..d.times {
                    let oracle = naive_softmax(s.phi_at(g, t));
                    for (a, b) in tables.phi_tilde(g, t).iter().zip(&oracle) {
                        assert!((a - b).abs() < 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn identity_embeddings_reproduce_disc_tables() {
    let inst = random_instance(12, ModelKind::Disc);
    let v = inst.data.vocab_size();
    let disc = Model::new(&inst.data, None, &inst.hp).unwrap();
    let rho = EmbeddingMatrix::identity(&inst.data.vocab);
    let hp = Hyperparams {
        kind: ModelKind::Edisc,
        embed_dim: v,
        ..inst.hp
    };
    let edisc = Model::new(&inst.data, Some(&rho), &hp).unwrap();
    let d = inst.state.dims;
    let state = ModelState {
        kind: ModelKind::Edisc,
        dims: Dims::new(ModelKind::Edisc, d.genres, d.times, d.senses, v, v),
        sigma: vec![0.0; v],
        ..inst.state.clone()
    };
    let a = disc.tables(&inst.state).unwrap();
    let b = edisc.tables(&state).unwrap();
    for (x, y) in a.psi.iter().zip(&b.psi) {
        assert!((x - y).abs() < 1e-14);
    }
    assert_eq!(a.phi, b.phi);
}

fn small_dataset(words: Vec<Vec<u32>>, v: usize) -> SnippetDataset {
    SnippetDataset {
        snippets: words
            .into_iter()
            .enumerate()
            .map(|(d, w)| Snippet {
                words: w,
                genre: 0,
                time: d % 2,
                true_sense: None,
                collocate: false,
            })
            .collect(),
        vocab: Vocabulary::synthetic(v),
        window: 6,
        genres: 1,
        times: 2,
        true_senses: 0,
    }
}

#[test]
fn likelihood_matches_linear_space_enumeration() {
    let data = small_dataset(
        vec![vec![0, 1, 2], vec![5, 5], vec![], vec![3, 4, 0, 1], vec![2]],
        6,
    );
    let hp = default_hyperparams(ModelKind::Disc, 2, 0, None).unwrap();
    let model = Model::new(&data, None, &hp).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let state = ModelState::sample_prior(&hp, model.dims(), false, &mut rng);
    let tables = model.tables(&state).unwrap();
    let ll = model.log_likelihood(&tables).unwrap();
    let mut total = 0.0;
    for (d, s) in data.snippets.iter().enumerate() {
        let phi = tables.phi_tilde(s.genre, s.time);
        let p: f64 = (0..2)
            .map(|k| {
                let psi = tables.psi_tilde(k, s.time);
                phi[k] * s.words.iter().map(|&w| psi[w as usize]).product::<f64>()
            })
            .sum();
        assert!((ll.per_snippet[d] - p.ln()).abs() < 1e-12, "snippet {d}");
        total += p.ln();
    }
    assert!((ll.total - total).abs() < 1e-12);
    // The empty snippet contributes log(sum phi~) = 0.
    assert!(ll.per_snippet[2].abs() < 1e-15);
}

#[test]
fn one_sense_collapses_mixture() {
    let inst = {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        instance_with(&mut rng, ModelKind::Edisc, 15, 3, 1, 3, 2, 25)
    };
    let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
    let tables = model.tables(&inst.state).unwrap();
    let ll = model.log_likelihood(&tables).unwrap();
    let direct: f64 = inst
        .data
        .snippets
        .iter()
        .map(|s| s.words.iter().map(|&w| tables.psi_tilde(0, s.time)[w as usize].ln()).sum::<f64>())
        .sum();
    assert!((ll.total - direct).abs() < 1e-10);
}

#[test]
fn posterior_is_affine_in_lambda() {
    for kind in [ModelKind::Edisc, ModelKind::Disc] {
        let inst = random_instance(21, kind);
        let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
        let prior = log_prior(&inst.state, &inst.hp).unwrap().total;
        let ll = model.log_likelihood(&model.tables(&inst.state).unwrap()).unwrap().total;
        let at = |l: f64| model.log_posterior(&inst.state, l).unwrap();
        assert_eq!(at(1.0), prior + ll);
        assert_eq!(at(0.0), prior);
        assert!((at(0.5) - 0.5 * (at(0.0) + at(1.0))).abs() < 1e-10 * at(1.0).abs().max(1.0));
        assert!(model.log_posterior(&inst.state, 1.5).is_err());
    }
}

#[test]
fn prior_blocks_add_up() {
    let inst = random_instance(9, ModelKind::Edisc);
    let p = log_prior(&inst.state, &inst.hp).unwrap();
    assert!((p.phi + p.theta + p.chi + p.sigma - p.total).abs() < 1e-12);
    let mut bad = inst.hp;
    bad.alpha_phi = 1.0;
    assert!(log_prior(&inst.state, &bad).is_err());
}

#[test]
fn single_sense_simulation_labels_everything_zero() {
    let hp = default_hyperparams(ModelKind::Disc, 1, 0, None).unwrap();
    let spec = SimulationSpec::uniform(2, 3, 20, 8, 30, 1);
    let (data, _) = simulate(&hp, None, &spec).unwrap();
    assert_eq!(data.len(), 180);
    assert!(data.snippets.iter().all(|s| s.true_sense == Some(0)));
    data.validate().unwrap();
}

#[test]
fn simulated_sense_frequencies_follow_phi() {
    let hp = default_hyperparams(ModelKind::Disc, 3, 0, None).unwrap();
    let spec = SimulationSpec::uniform(1, 1, 10, 4, 100_000, 17);
    let (data, truth) = simulate(&hp, None, &spec).unwrap();
    let model = Model::new(&data, None, &hp).unwrap();
    let phi = model.tables(&truth).unwrap().phi_tilde(0, 0).to_vec();
    let n = data.len() as f64;
    for (k, &p) in phi.iter().enumerate() {
        let freq = data.snippets.iter().filter(|s| s.true_sense == Some(k)).count() as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "sense {k}: {freq} vs {p}");
    }
}

#[test]
fn simulation_is_deterministic() {
    let rho = EmbeddingMatrix::random(&Vocabulary::synthetic(30), 4, 2);
    let hp = default_hyperparams(ModelKind::Edisc, 2, 4, Some(1.0)).unwrap();
    let spec = SimulationSpec::uniform(1, 4, 0, 10, 20, 5);
    let a = simulate(&hp, Some(&rho), &spec).unwrap();
    let b = simulate(&hp, Some(&rho), &spec).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn truth_beats_prior_draws_on_average() {
    let hp = default_hyperparams(ModelKind::Disc, 2, 0, None).unwrap();
    let mut wins = 0;
    for seed in 0..20 {
        let spec = SimulationSpec::uniform(1, 2, 25, 10, 40, seed);
        let (data, truth) = simulate(&hp, None, &spec).unwrap();
        let model = Model::new(&data, None, &hp).unwrap();
        let at_truth = model.log_likelihood(&model.tables(&truth).unwrap()).unwrap().total;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let other = ModelState::sample_prior(&hp, model.dims(), false, &mut rng);
        let at_other = model.log_likelihood(&model.tables(&other).unwrap()).unwrap().total;
        assert!(at_truth.is_finite());
        wins += (at_truth > at_other) as usize;
    }
    assert!(wins >= 18, "{wins}/20");
}

#[test]
fn softmax_examples() {
    let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
    assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    let p = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]).unwrap();
    for (a, b) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(softmax(&[0.0, f64::NAN]).is_err());
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(x in prop::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
        let a = softmax(&x).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let b = softmax(&shifted).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!(*p >= 0.0);
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn tables_are_simplices(seed in 0u64..1000, edisc in any::<bool>()) {
        let kind = if edisc { ModelKind::Edisc } else { ModelKind::Disc };
        let inst = random_instance(seed, kind);
        let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
        let tables = model.tables(&inst.state).unwrap();
        let d = model.dims();
        for k in 0..d.senses {
            for t in 0..d.times {
                let row = tables.psi_tilde(k, t);
                prop_assert!(row.iter().all(|p| *p > 0.0 && *p <= 1.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        for g in 0..d.genres {
            for t in 0..d.times {
                prop_assert!((tables.phi_tilde(g, t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let ll = model.log_likelihood(&tables).unwrap();
        prop_assert!(ll.per_snippet.iter().all(|l| *l <= 1e-12));
    }
}
