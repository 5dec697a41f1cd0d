mod common;

use common::random_instance;
use edisc::gradients::{check_gradients, gradient, grad_phi, grad_sigma_corr, Block};
use edisc::model::{Model, ModelKind};

#[test]
fn all_blocks_match_finite_differences() {
    for kind in [ModelKind::Edisc, ModelKind::Disc] {
        for seed in 0..5 {
            let inst = random_instance(seed, kind);
            let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
            for lambda in [0.0, 0.3, 1.0] {
                for c in check_gradients(&model, &inst.state, lambda, 1e-3).unwrap() {
                    assert!(c.max_rel_error < 1e-5, "{kind} seed {seed} {} lambda {lambda}: {}", c.block, c.max_rel_error);
                }
            }
        }
    }
}

#[test]
fn likelihood_parts_sum_to_zero() {
    let inst = random_instance(7, ModelKind::Edisc);
    let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
    let with = grad_sigma_corr(&model, &inst.state, 1.0).unwrap();
    let without = grad_sigma_corr(&model, &inst.state, 0.0).unwrap();
    let total: f64 = with.iter().zip(&without).map(|(a, b)| a - b).sum();
    assert!(total.abs() < 1e-9, "{total}");
    let with = grad_phi(&model, &inst.state, 1.0, 0, 0).unwrap();
    let without = grad_phi(&model, &inst.state, 0.0, 0, 0).unwrap();
    let total: f64 = with.iter().zip(&without).map(|(a, b)| a - b).sum();
    assert!(total.abs() < 1e-9, "{total}");
}

#[test]
fn sigma_block_absent_for_disc() {
    let inst = random_instance(3, ModelKind::Disc);
    let model = Model::new(&inst.data, None, &inst.hp).unwrap();
    assert!(gradient(&model, &inst.state, Block::Sigma, 1.0).is_err());
}

fn without_snippets(inst: &common::Instance) -> edisc::corpus::SnippetDataset {
    edisc::corpus::SnippetDataset {
        snippets: Vec::new(),
        ..inst.data.clone()
    }
}

#[test]
fn empty_data_leaves_prior_gradients() {
    for kind in [ModelKind::Edisc, ModelKind::Disc] {
        let inst = random_instance(31, kind);
        let data = without_snippets(&inst);
        let model = Model::new(&data, inst.rho.as_ref(), &inst.hp).unwrap();
        let chi = gradient(&model, &inst.state, Block::Chi, 1.0).unwrap().values;
        for (g, x) in chi.iter().zip(&inst.state.chi) {
            assert!((g + x / inst.hp.kappa_chi).abs() < 1e-12);
        }
        if kind == ModelKind::Edisc {
            let sigma = grad_sigma_corr(&model, &inst.state, 1.0).unwrap();
            for (g, x) in sigma.iter().zip(&inst.state.sigma) {
                assert!((g + x / inst.hp.kappa_sigma).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn uniform_senses_with_centred_embeddings() {
    use edisc::embeddings::EmbeddingMatrix;
    use edisc::gradients::grad_chi;
    use edisc::model::ModelState;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let inst = common::instance_with(&mut rng, ModelKind::Edisc, 12, 3, 2, 2, 1, 15);
    let rho = inst.rho.as_ref().unwrap();
    let (v, m) = (rho.rows(), rho.dim());
    let means: Vec<f64> = (0..m).map(|j| (0..v).map(|w| rho.row(w)[j]).sum::<f64>() / v as f64).collect();
    let centred: Vec<f64> = (0..v).flat_map(|w| rho.row(w).iter().zip(&means).map(|(r, c)| r - c).collect::<Vec<_>>()).collect();
    let rho = EmbeddingMatrix::new(rho.lemmas().to_vec(), m, centred).unwrap();
    // Equal snippet lengths.
    let mut data = inst.data.clone();
    for s in &mut data.snippets {
        s.words.resize(4, 0);
        s.words.iter_mut().enumerate().for_each(|(i, w)| *w = ((*w as usize + i) % v) as u32);
    }
    let model = Model::new(&data, Some(&rho), &inst.hp).unwrap();
    let mut state = ModelState::zeros(ModelKind::Edisc, model.dims());
    state.phi.clone_from(&inst.state.phi);
    let tables = model.tables(&state).unwrap();
    let g = grad_chi(&model, &state, 1.0).unwrap();
    for k in 0..2 {
        let mut expected = vec![0.0; m];
        for s in &data.snippets {
            let r = tables.phi_tilde(s.genre, s.time)[k];
            for &w in &s.words {
                for j in 0..m {
                    expected[j] += r * rho.row(w as usize)[j];
                }
            }
        }
        for j in 0..m {
            assert!((g[k * m + j] - expected[j]).abs() < 1e-10, "k {k} j {j}");
        }
    }
}

#[test]
fn single_sense_theta_gradient() {
    use edisc::gradients::grad_theta;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(8);
    let inst = common::instance_with(&mut rng, ModelKind::Edisc, 10, 3, 1, 3, 2, 30);
    let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
    let rho = inst.rho.as_ref().unwrap();
    let tables = model.tables(&inst.state).unwrap();
    for t in 0..3 {
        let full = grad_theta(&model, &inst.state, 1.0, t).unwrap();
        let prior = grad_theta(&model, &inst.state, 0.0, t).unwrap();
        let psi = tables.psi_tilde(0, t);
        let proj: Vec<f64> = (0..3).map(|j| (0..10).map(|v| rho.row(v)[j] * psi[v]).sum()).collect();
        let mut expected = vec![0.0; 3];
        for s in inst.data.snippets.iter().filter(|s| s.time == t) {
            for j in 0..3 {
                expected[j] += s.words.iter().map(|&w| rho.row(w as usize)[j]).sum::<f64>() - s.len() as f64 * proj[j];
            }
        }
        for j in 0..3 {
            assert!((full[j] - prior[j] - expected[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn empty_time_and_cell_are_prior_only() {
    for kind in [ModelKind::Edisc, ModelKind::Disc] {
        let mut inst = random_instance(44, kind);
        inst.data.times = inst.data.times.max(2);
        inst.data.genres = inst.data.genres.max(2);
        for s in &mut inst.data.snippets {
            s.time = 0;
            s.genre = 0;
        }
        let dims = edisc::model::Dims::new(kind, inst.data.genres, inst.data.times, inst.hp.senses, inst.data.vocab_size(), inst.hp.embed_dim);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let state = edisc::model::ModelState::sample_prior(&inst.hp, dims, true, &mut rng);
        let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
        for block in [Block::Theta(1), Block::Phi(1, 1), Block::Phi(1, 0)] {
            let a = gradient(&model, &state, block, 1.0).unwrap().values;
            let b = gradient(&model, &state, block, 0.0).unwrap().values;
            assert_eq!(a, b, "{kind} {block}");
        }
    }
}

#[test]
fn fixed_size_instance_matches_finite_differences() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(30);
    for kind in [ModelKind::Edisc, ModelKind::Disc] {
        let inst = common::instance_with(&mut rng, kind, 30, 5, 3, 4, 1, 20);
        let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
        for c in check_gradients(&model, &inst.state, 1.0, 1e-5).unwrap() {
            assert!(c.max_rel_error < 1e-5, "{kind} {}: {}", c.block, c.max_rel_error);
        }
    }
}

#[test]
fn responsibilities_are_probabilities() {
    let inst = random_instance(17, ModelKind::Edisc);
    let model = Model::new(&inst.data, inst.rho.as_ref(), &inst.hp).unwrap();
    let r = edisc::gradients::responsibilities(&model, &inst.state).unwrap();
    for d in 0..inst.data.len() {
        let row = r.row(d);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
