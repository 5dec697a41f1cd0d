use std::fmt::Write as _;

use anyhow::{bail, Result};
use edisc::embeddings::{load_embeddings, median_sq_distance};
use edisc::model::{default_hyperparams, Model, ModelKind};
use edisc::samplers::{run_chains, run_labelled, Chain, SamplerConfig};

use super::{input, load_snippets, start};
use crate::manifest::Run;
use crate::{FitArgs, LabelledFitArgs, Sampler};

fn block_table(chains: &[Chain]) -> Result<String> {
    let mut text = String::from("chain\tblock\tscale\tacceptance\ttuned_acceptance\n");
    for c in chains {
        for b in &c.meta.blocks {
            let tuned = b.tuned_acceptance_rate().map_or("-".to_string(), |r| format!("{r:.3}"));
            writeln!(text, "{}\t{}\t{:.4e}\t{:.3}\t{tuned}", c.meta.chain + 1, b.block, b.scale, b.acceptance_rate())?;
        }
    }
    Ok(text)
}

fn save_chain(run: &mut Run, name: &str, chain: &mut Chain) -> Result<()> {
    chain.meta.config_hash = Some(run.hash.clone());
    let path = run.output(name);
    chain.save(&path)?;
    println!("chain {} -> {} ({} draws, {:.1} s)", chain.meta.chain + 1, path.display(), chain.draws(), chain.meta.wall_seconds);
    Ok(())
}

pub fn fit(a: FitArgs) -> Result<()> {
    let snippets = input(&a.snippets, "snippets")?;
    let embeddings = match a.kind {
        ModelKind::Edisc => Some(
            input(&a.embeddings, "embeddings")
                .map_err(|e| e.context("fit --kind edisc needs word embeddings"))?,
        ),
        ModelKind::Disc => {
            if a.embeddings.is_some() {
                bail!("--kind disc does not take --embeddings");
            }
            None
        }
    };
    if a.chains == 0 {
        bail!("--chains must be at least 1");
    }
    let mut run = start("fit", &a, &a.common)?;
    let data = load_snippets(&mut run, snippets)?;
    let rho = match embeddings {
        Some(p) => {
            run.input(p);
            Some(load_embeddings(p, &data.vocab)?)
        }
        None => None,
    };
    let hp = match &rho {
        Some(rho) => {
            if let Some(m) = a.embed_dim {
                if m != rho.dim() {
                    bail!("--M {m} does not match the embedding dimension {}", rho.dim());
                }
            }
            let c = match a.scale {
                Some(c) => c,
                None => median_sq_distance(rho)?,
            };
            default_hyperparams(ModelKind::Edisc, a.senses, rho.dim(), Some(c))?
        }
        None => default_hyperparams(ModelKind::Disc, a.senses, 0, None)?,
    };
    let model = Model::new(&data, rho.as_ref(), &hp)?;
    let mut cfg = match a.sampler {
        Sampler::Hmc => SamplerConfig::hmc(a.iters, a.common.seed),
        Sampler::Mala => SamplerConfig::mala(a.iters, a.common.seed),
    };
    cfg.temper_iterations = a.temper_iters;
    cfg.thin = a.thin;
    if let Some(n) = a.tune_stop {
        cfg.tune_stop = n;
    }
    let mut chains = run_chains(&model, &cfg, a.chains, a.common.threads > 1)?;
    for c in &mut chains {
        let name = format!("chain-{}.bin", c.meta.chain + 1);
        save_chain(&mut run, &name, c)?;
    }
    run.write_text("blocks.tsv", &block_table(&chains)?)?;
    run.finish()?;
    Ok(())
}

pub fn labelled_fit(a: LabelledFitArgs) -> Result<()> {
    let snippets = input(&a.snippets, "snippets")?;
    let mut run = start("labelled-fit", &a, &a.common)?;
    let data = load_snippets(&mut run, snippets)?;
    if !data.is_fully_labelled() {
        bail!("{}: every snippet needs a sense label for a labelled fit", snippets.display());
    }
    let hp = default_hyperparams(ModelKind::Disc, data.true_senses, 0, None)?;
    let cfg = SamplerConfig {
        temper_iterations: a.temper_iters,
        thin: a.thin,
        ..SamplerConfig::hmc(a.iters, a.common.seed)
    };
    let mut chain = run_labelled(&data, &hp, &cfg)?;
    save_chain(&mut run, "chain-labelled.bin", &mut chain)?;
    run.write_text("blocks.tsv", &block_table(std::slice::from_ref(&chain))?)?;
    run.finish()?;
    Ok(())
}
