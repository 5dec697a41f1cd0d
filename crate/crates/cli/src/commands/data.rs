use std::collections::HashSet;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use edisc::corpus::{prepare_snippets, read_corpus, read_stopwords, PrepareOptions, Vocabulary};
use edisc::embeddings::{build_cooccurrence, load_embeddings, median_sq_distance, train_glove, EmbeddingMatrix, GloveSettings};
use edisc::model::{default_hyperparams, ModelKind, SimulationSpec};

use super::{csv_float, existing, input, load_snippets, save_snippets, start, Truth};
use crate::{EmbedArgs, PrepareArgs, SimulateArgs};

pub fn prepare(a: PrepareArgs) -> Result<()> {
    let corpus = input(&a.corpus, "corpus")?;
    let Some(target) = a.target.clone() else {
        bail!("--target LEMMA is required");
    };
    let mut run = start("prepare", &a, &a.common)?;
    run.input(corpus);
    let docs = read_corpus(corpus).with_context(|| format!("reading corpus {}", corpus.display()))?;
    let stopwords = match &a.stopwords {
        Some(p) => {
            run.input(existing(p, "stopwords")?);
            read_stopwords(p)?
        }
        None => HashSet::new(),
    };
    let opts = PrepareOptions {
        target,
        window: a.window,
        min_count: a.min_count,
        stopwords,
        genres: a.genres,
        times: a.times,
    };
    let data = prepare_snippets(&docs, &opts)?;
    let summary = data.validate()?;
    save_snippets(&mut run, "snippets.txt", &data)?;

    let mut text = String::new();
    writeln!(text, "documents\t{}", docs.len())?;
    writeln!(text, "snippets\t{}", summary.snippets)?;
    writeln!(text, "vocabulary\t{}", summary.vocab_size)?;
    writeln!(text, "genres\t{}\ntimes\t{}", summary.genres, summary.times)?;
    writeln!(text, "genre\ttime\tsnippets")?;
    for g in 0..summary.genres {
        for t in 0..summary.times {
            writeln!(text, "{}\t{}\t{}", g + 1, t + 1, summary.cell_count(g, t))?;
        }
    }
    run.write_text("summary.txt", &text)?;
    print!("{text}");
    run.finish()?;
    Ok(())
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let snippets = input(&a.snippets, "snippets")?;
    let mut run = start("embed", &a, &a.common)?;
    let data = load_snippets(&mut run, snippets)?;
    let rho = match &a.load {
        Some(p) => {
            run.input(existing(p, "load")?);
            load_embeddings(p, &data.vocab)?
        }
        None => {
            let corpus = input(&a.corpus, "corpus").context("training embeddings needs a corpus (or --load FILE)")?;
            run.input(corpus);
            let docs = read_corpus(corpus)?;
            let cooc = build_cooccurrence(&docs, &data.vocab, a.window);
            let settings = GloveSettings {
                dim: a.dim,
                x_max: a.x_max,
                alpha: a.alpha,
                learning_rate: a.lr,
                tolerance: a.tol,
                max_epochs: a.epochs,
                seed: a.common.seed,
            };
            let out = train_glove(&cooc, &data.vocab, &settings)?;
            let mut trace = String::from("epoch,loss\n");
            for (i, l) in out.loss_trace.iter().enumerate() {
                writeln!(trace, "{},{l:e}", i + 1)?;
            }
            run.write_text("loss.csv", &trace)?;
            println!("trained {} epochs, final loss {:e}", out.loss_trace.len(), out.loss_trace.last().copied().unwrap_or(f64::NAN));
            out.embeddings
        }
    };
    let path = run.output("embeddings.txt");
    rho.save(&path)?;
    println!("V = {}, M = {}, c = {}", rho.rows(), rho.dim(), csv_float(median_sq_distance(&rho)?));
    run.finish()?;
    Ok(())
}

fn read_counts(path: &std::path::Path, cells: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let counts = text
        .split_whitespace()
        .map(|t| t.parse::<usize>().with_context(|| format!("{}: bad count `{t}`", path.display())))
        .collect::<Result<Vec<_>>>()?;
    if counts.len() != cells {
        bail!("{}: expected G x T = {cells} counts, found {}", path.display(), counts.len());
    }
    Ok(counts)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut run = start("simulate", &a, &a.common)?;
    let counts = match &a.counts {
        Some(p) => {
            run.input(existing(p, "counts")?);
            read_counts(p, a.genres * a.times)?
        }
        None => vec![a.per_cell; a.genres * a.times],
    };
    let spec = SimulationSpec {
        genres: a.genres,
        times: a.times,
        vocab: a.vocab,
        window: a.window,
        counts,
        seed: a.common.seed,
    };
    let (rho, hp) = match a.kind {
        ModelKind::Edisc => {
            let rho = match &a.embeddings {
                Some(p) => {
                    run.input(existing(p, "embeddings")?);
                    let file = std::io::BufReader::new(std::fs::File::open(p)?);
                    EmbeddingMatrix::read_from(file, p)?
                }
                None => EmbeddingMatrix::random(&Vocabulary::synthetic(a.vocab), a.embed_dim, a.common.seed),
            };
            if rho.dim() != a.embed_dim {
                bail!("--M {} does not match the embedding dimension {}", a.embed_dim, rho.dim());
            }
            let c = median_sq_distance(&rho)?;
            let hp = default_hyperparams(ModelKind::Edisc, a.senses, rho.dim(), Some(c))?;
            (Some(rho), hp)
        }
        ModelKind::Disc => (None, default_hyperparams(ModelKind::Disc, a.senses, 0, None)?),
    };
    let (data, state) = edisc::model::simulate(&hp, rho.as_ref(), &spec)?;
    save_snippets(&mut run, "snippets.txt", &data)?;
    if let Some(rho) = &rho {
        rho.save(&run.output("embeddings.txt"))?;
    }
    let tables = edisc::model::Model::new(&data, rho.as_ref(), &hp)?.tables(&state)?;
    let dims = state.dims;
    let mut csv = String::from("genre,time,sense,phi\n");
    for g in 0..dims.genres {
        for t in 0..dims.times {
            for (k, p) in tables.phi_tilde(g, t).iter().enumerate() {
                writeln!(csv, "{},{},{},{}", g + 1, t + 1, k + 1, csv_float(*p))?;
            }
        }
    }
    run.write_text("truth_phi.csv", &csv)?;
    let truth = Truth {
        hyperparams: hp,
        dims,
        phi_tilde: tables.phi.clone(),
        state,
    };
    std::fs::write(run.output("truth.json"), serde_json::to_string(&truth)? + "\n")?;
    println!("simulated {} snippets over V = {}", data.len(), data.vocab_size());
    run.finish()?;
    Ok(())
}
