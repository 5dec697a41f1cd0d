use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use edisc::bench::{compare_ess, run_bench, BenchModel, BenchSpec, EssSpec};
use edisc::corpus::{Snippet, SnippetDataset, Vocabulary};
use edisc::embeddings::{median_sq_distance, EmbeddingMatrix};
use edisc::gradients::check_gradients;
use edisc::model::{default_hyperparams, Dims, Model, ModelKind, ModelState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{csv_float, start};
use crate::{BenchArgs, GradCheckArgs};

pub fn grad_check(a: GradCheckArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.common.seed);
    let snippets = (0..a.snippets)
        .map(|_| Snippet {
            words: (0..rng.random_range(0..=10)).map(|_| rng.random_range(0..a.vocab as u32)).collect(),
            genre: rng.random_range(0..a.genres),
            time: rng.random_range(0..a.times),
            true_sense: None,
            collocate: false,
        })
        .collect();
    let data = SnippetDataset {
        snippets,
        vocab: Vocabulary::synthetic(a.vocab),
        window: 10,
        genres: a.genres,
        times: a.times,
        true_senses: 0,
    };
    data.validate()?;
    let mut table = String::from("kind\tblock\tlambda\tmax_rel_error\n");
    let mut worst: f64 = 0.0;
    for &kind in &a.kind {
        let (rho, hp) = match kind {
            ModelKind::Edisc => {
                let rho = EmbeddingMatrix::random(&data.vocab, a.embed_dim, a.common.seed);
                let c = median_sq_distance(&rho)?;
                let hp = default_hyperparams(kind, a.senses, a.embed_dim, Some(c))?;
                (Some(rho), hp)
            }
            ModelKind::Disc => (None, default_hyperparams(kind, a.senses, 0, None)?),
        };
        let model = Model::new(&data, rho.as_ref(), &hp)?;
        let dims = Dims::new(kind, a.genres, a.times, a.senses, a.vocab, a.embed_dim);
        let state = ModelState::sample_prior(&hp, dims, true, &mut rng);
        for &lambda in &a.lambda {
            for c in check_gradients(&model, &state, lambda, a.step)? {
                worst = worst.max(c.max_rel_error);
                writeln!(table, "{kind}\t{}\t{lambda}\t{:.3e}", c.block, c.max_rel_error)?;
            }
        }
    }
    print!("{table}");
    println!("worst relative error {worst:.3e}");
    if a.common.out.is_some() {
        let mut run = start("grad-check", &a, &a.common)?;
        run.write_text("grad_check.tsv", &table)?;
        run.finish()?;
    }
    Ok(())
}

fn parse_axis(grid: &[String], axis: &str) -> Result<Vec<usize>> {
    let prefix = format!("{axis}=");
    let entry = grid
        .iter()
        .find(|g| g.starts_with(&prefix))
        .with_context(|| format!("--grid needs an entry {axis}=n1,n2,..."))?;
    entry[prefix.len()..]
        .split(',')
        .map(|v| v.trim().parse::<usize>().with_context(|| format!("--grid {entry}: bad value `{v}`")))
        .collect()
}

fn parse_model(s: &str) -> Result<BenchModel> {
    match s.split_once(':') {
        None if s == "disc" => Ok(BenchModel {
            kind: ModelKind::Disc,
            embed_dim: 0,
        }),
        Some(("edisc", m)) => Ok(BenchModel {
            kind: ModelKind::Edisc,
            embed_dim: m.parse().with_context(|| format!("--models {s}: bad M"))?,
        }),
        _ => bail!("--models entries are `disc` or `edisc:M`, got `{s}`"),
    }
}

pub fn bench(a: BenchArgs) -> Result<()> {
    for g in &a.grid {
        if !(g.starts_with("V=") || g.starts_with("D=")) {
            bail!("--grid entries are V=... or D=..., got `{g}`");
        }
    }
    let spec = BenchSpec {
        vocab: parse_axis(&a.grid, "V")?,
        snippets: parse_axis(&a.grid, "D")?,
        models: a.models.iter().map(|m| parse_model(m)).collect::<Result<_>>()?,
        iterations: a.iters,
        reps: a.reps,
        senses: a.senses,
        times: a.times,
        window: a.window,
        seed: a.common.seed,
    };
    let result = run_bench(&spec, |c| {
        eprintln!("{} V={} D={}: {:.3} s", c.model, c.vocab, c.snippets, c.mean_seconds);
    })?;
    let mut fits = String::from("model,intercept,slope_v,slope_d,interaction\n");
    for f in &result.fits {
        writeln!(fits, "{},{:e},{:e},{:e},{:e}", f.model, f.intercept, f.slope_v, f.slope_d, f.interaction)?;
    }
    let ess = if a.ess {
        let ess_spec = EssSpec {
            vocab: a.ess_vocab,
            snippets: a.ess_snippets,
            iterations: a.ess_iters,
            seed: a.common.seed,
            ..EssSpec::default()
        };
        Some(compare_ess(&ess_spec)?)
    } else {
        None
    };
    print!("{}", result.to_csv());
    print!("{fits}");
    if let Some(e) = &ess {
        println!(
            "phi ESS per hour: disc {}, edisc {}, ratio {:.2}",
            csv_float(e.disc.phi_per_hour.median),
            csv_float(e.edisc.phi_per_hour.median),
            e.phi_ratio()
        );
    }
    if a.common.out.is_some() {
        let mut run = start("bench", &a, &a.common)?;
        run.write_text("bench.csv", &result.to_csv())?;
        run.write_text("fits.csv", &fits)?;
        if let Some(e) = &ess {
            std::fs::write(run.output("ess.json"), serde_json::to_string_pretty(e)? + "\n")?;
        }
        run.finish()?;
    }
    Ok(())
}
