use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use edisc::corpus::{SnippetDataset, Vocabulary};
use edisc::diagnostics::{
    align_chains, bayes_factor, brier_score, convergence_report, ess_summary, hpd_interval, sense_probabilities,
    top_words, uniform_brier, waic, HpdSet, PriorSimulations, SenseMapping, SensePosterior, RHAT_LIMIT,
    WAIC_VARIANCE_LIMIT,
};
use edisc::samplers::Chain;

use super::{csv_float, existing, load_snippets, start, Truth};
use crate::DiagnoseArgs;

/// One chain holding every chain's `phi~` draws, for pooled summaries.
fn pool_phi(chains: &[Chain]) -> Chain {
    let mut pooled = chains[0].clone();
    pooled.phi = chains.iter().flat_map(|c| c.phi.iter().copied()).collect();
    pooled.meta.draws = chains.iter().map(Chain::draws).sum();
    pooled.meta.labelled = true;
    pooled.psi.clear();
    pooled.loglik.clear();
    pooled
}

fn mean_posterior(posts: &[SensePosterior]) -> Result<SensePosterior> {
    let n = posts.len() as f64;
    let mut values = vec![0.0; posts[0].values.len()];
    for p in posts {
        values.iter_mut().zip(&p.values).for_each(|(a, b)| *a += b / n);
    }
    Ok(SensePosterior::new(posts[0].senses, values)?)
}

pub fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let mut run = start("diagnose", &a, &a.common)?;
    let mut chains = Vec::with_capacity(a.chains.len());
    for p in &a.chains {
        run.input(existing(p, "chain")?);
        chains.push(Chain::load(p).with_context(|| format!("reading chain {}", p.display()))?);
    }
    let data: Option<SnippetDataset> = match &a.snippets {
        Some(p) => Some(load_snippets(&mut run, existing(p, "snippets")?)?),
        None => None,
    };
    let first = chains[0].meta.clone();
    let dims = first.dims;
    let labelled = first.labelled;
    let mut report = String::new();
    writeln!(report, "model {}  G {}  T {}  K {}  V {}  labelled {}", first.kind, dims.genres, dims.times, dims.senses, dims.vocab, labelled)?;
    for c in &chains {
        let rates: Vec<f64> = c.meta.blocks.iter().filter_map(|b| b.tuned_acceptance_rate()).collect();
        let (lo, hi) = rates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(*r), h.max(*r)));
        writeln!(report, "chain {}: {} draws, {:.1} s, tuned acceptance {lo:.3}..{hi:.3}", c.meta.chain + 1, c.draws(), c.meta.wall_seconds)?;
    }

    if chains.len() > 1 {
        let perms = align_chains(&mut chains)?;
        writeln!(report, "\nsense alignment to chain 1: {perms:?}")?;
        let conv = convergence_report(&chains, data.as_ref())?;
        let mut csv = String::from("genre,time,sense,rhat\n");
        let mut i = 0;
        for g in 0..dims.genres {
            for t in 0..dims.times {
                for k in 0..dims.senses {
                    writeln!(csv, "{},{},{},{}", g + 1, t + 1, k + 1, csv_float(conv.rhat[i]))?;
                    i += 1;
                }
            }
        }
        run.write_text("rhat.csv", &csv)?;
        let mut traj = String::from("chain,start,mean_loglik,brier\n");
        for w in &conv.windows {
            let b = w.brier.map_or(String::new(), csv_float);
            writeln!(traj, "{},{},{},{b}", w.chain + 1, w.start, csv_float(w.mean_loglik))?;
        }
        run.write_text("trajectories.csv", &traj)?;
        writeln!(report, "max split-R-hat {:.4}; {} of {} above {RHAT_LIMIT}", conv.max_rhat(), conv.flagged.len(), conv.rhat.len())?;
    }

    writeln!(report, "\nESS")?;
    let mut ess_csv = String::from("chain,phi_median,phi_q1,phi_q3,phi_per_hour,psi_median,psi_per_hour,degenerate,wall_seconds\n");
    for c in &chains {
        match ess_summary(c) {
            Ok(e) => {
                let psi = e.psi.map_or(String::new(), |s| csv_float(s.median));
                let psi_h = e.psi_per_hour.map_or(String::new(), |s| csv_float(s.median));
                writeln!(
                    ess_csv,
                    "{},{},{},{},{},{psi},{psi_h},{},{}",
                    c.meta.chain + 1,
                    csv_float(e.phi.median),
                    csv_float(e.phi.q1),
                    csv_float(e.phi.q3),
                    csv_float(e.phi_per_hour.median),
                    e.degenerate,
                    csv_float(e.wall_seconds)
                )?;
                writeln!(report, "chain {}: phi ESS median {:.1} (IQR {:.1}), {:.1} per hour", c.meta.chain + 1, e.phi.median, e.phi.iqr(), e.phi_per_hour.median)?;
            }
            Err(e) => writeln!(report, "chain {}: {e}", c.meta.chain + 1)?,
        }
    }
    run.write_text("ess.csv", &ess_csv)?;

    if !labelled {
        writeln!(report, "\nWAIC")?;
        let mut csv = String::from("chain,waic,lpd,p_waic,high_variance\n");
        for c in &chains {
            let w = waic(c)?;
            writeln!(csv, "{},{},{},{},{}", c.meta.chain + 1, csv_float(w.waic), csv_float(w.lpd), csv_float(w.p_waic), w.high_variance)?;
            writeln!(report, "chain {}: WAIC {:.2} (lpd {:.2}, p {:.2}); {} snippets with variance above {WAIC_VARIANCE_LIMIT}", c.meta.chain + 1, w.waic, w.lpd, w.p_waic, w.high_variance)?;
        }
        run.write_text("waic.csv", &csv)?;
    }

    // Sense probabilities and Brier scores.
    let mut mapping: Option<Vec<usize>> = None;
    if let (Some(data), false) = (&data, labelled) {
        let posts = chains.iter().map(|c| sense_probabilities(c, data)).collect::<edisc::Result<Vec<_>>>()?;
        let pooled = mean_posterior(&posts)?;
        let mut csv = String::from("snippet");
        for k in 0..pooled.senses {
            write!(csv, ",sense{}", k + 1)?;
        }
        csv.push('\n');
        for d in 0..pooled.len() {
            write!(csv, "{}", d + 1)?;
            for p in pooled.row(d) {
                write!(csv, ",{}", csv_float(*p))?;
            }
            csv.push('\n');
        }
        run.write_text("sense_probabilities.csv", &csv)?;
        let scorable = data.true_senses > 0 && data.true_senses <= dims.senses && data.snippets.iter().any(|s| s.collocate && s.true_sense.is_some());
        if scorable {
            writeln!(report, "\nBrier score (uniform baseline {:.4})", uniform_brier(data.true_senses))?;
            let mut csv = String::from("chain,brier,scored,mapping\n");
            for (c, p) in chains.iter().zip(&posts) {
                let b = brier_score(p, data, &SenseMapping::Search)?;
                writeln!(csv, "{},{},{},{}", c.meta.chain + 1, csv_float(b.score), b.scored, fmt_map(&b.mapping))?;
            }
            let b = brier_score(&pooled, data, &SenseMapping::Search)?;
            writeln!(csv, "pooled,{},{},{}", csv_float(b.score), b.scored, fmt_map(&b.mapping))?;
            writeln!(report, "pooled: {:.4} over {} snippets, mapping {}", b.score, b.scored, fmt_map(&b.mapping))?;
            run.write_text("brier.csv", &csv)?;
            mapping = Some(b.mapping);
        }
    }

    // Prevalence plot data from pooled draws.
    let pooled = pool_phi(&chains);
    let mean = pooled.phi_mean();
    let mut csv = String::from("genre,time,sense,mean,hpd_lower,hpd_upper\n");
    let mut intervals = Vec::with_capacity(dims.phi_len());
    for g in 0..dims.genres {
        for t in 0..dims.times {
            for k in 0..dims.senses {
                let (lo, hi) = hpd_interval(&pooled.phi_trace(g, t, k), a.level)?;
                intervals.push((lo, hi));
                let m = mean[dims.phi_offset(g, t) + k];
                writeln!(csv, "{},{},{},{},{},{}", g + 1, t + 1, k + 1, csv_float(m), csv_float(lo), csv_float(hi))?;
            }
        }
    }
    run.write_text("prevalence.csv", &csv)?;

    if !labelled && a.top_words > 0 {
        let vocab = match &data {
            Some(d) => d.vocab.clone(),
            None => Vocabulary::synthetic(dims.vocab),
        };
        writeln!(report, "\nTop words")?;
        let mut csv = String::from("sense,rank,lemma,probability\n");
        for k in 0..dims.senses {
            let words = top_words(&chains[0], &vocab, k, a.top_words)?;
            let list: Vec<&str> = words.iter().map(|(w, _)| w.as_str()).collect();
            writeln!(report, "sense {}: {}", k + 1, list.join(" "))?;
            for (r, (w, p)) in words.iter().enumerate() {
                writeln!(csv, "{},{},{w},{}", k + 1, r + 1, csv_float(*p))?;
            }
        }
        run.write_text("top_words.csv", &csv)?;
    }

    if let Some(p) = &a.truth {
        run.input(existing(p, "truth")?);
        let truth: Truth = serde_json::from_str(&std::fs::read_to_string(p)?)
            .with_context(|| format!("reading truth {}", p.display()))?;
        let td = truth.dims;
        if (td.genres, td.times) != (dims.genres, dims.times) {
            bail!("truth has G = {}, T = {} but the chains have G = {}, T = {}", td.genres, td.times, dims.genres, dims.times);
        }
        let map = match mapping {
            Some(m) if td.senses == dims.senses && is_permutation(&m) => m,
            None if td.senses == dims.senses => (0..dims.senses).collect(),
            _ => bail!("HPD coverage needs a one-to-one map between model and true senses"),
        };
        let mut hit = 0;
        for g in 0..dims.genres {
            for t in 0..dims.times {
                for k in 0..dims.senses {
                    let (lo, hi) = intervals[dims.phi_offset(g, t) + k];
                    let x = truth.phi_tilde[td.phi_offset(g, t) + map[k]];
                    hit += usize::from(x >= lo && x <= hi);
                }
            }
        }
        writeln!(report, "\ntrue prevalence inside the {}% HPD interval in {hit} of {} cells", a.level * 100.0, dims.phi_len())?;
    }

    if let Some(p) = &a.region {
        run.input(existing(p, "region")?);
        let region_chain = Chain::load(p).with_context(|| format!("reading chain {}", p.display()))?;
        let region = HpdSet::from_chain(&region_chain, a.level)?;
        let prior = PriorSimulations::new(&first.hyperparams, dims.senses, a.prior_sims, a.common.seed)?;
        let bfs = bayes_factor(&pooled, &region, &prior)?;
        writeln!(report, "\nSavage-Dickey log10 Bayes factors for the {}% region of {}", a.level * 100.0, p.display())?;
        let mut csv = String::from("genre,time,posterior_mass,prior_mass,log10_bf\n");
        for b in &bfs {
            writeln!(csv, "{},{},{},{},{}", b.genre + 1, b.time + 1, csv_float(b.numerator), csv_float(b.denominator), b.log10_bf)?;
            writeln!(report, "genre {} time {}: {:.3}", b.genre + 1, b.time + 1, b.log10_bf)?;
        }
        run.write_text("bayes_factors.csv", &csv)?;
    }

    run.write_text("report.txt", &report)?;
    print!("{report}");
    run.finish()?;
    Ok(())
}

fn is_permutation(map: &[usize]) -> bool {
    let mut seen = vec![false; map.len()];
    map.iter().all(|&m| m < seen.len() && !std::mem::replace(&mut seen[m], true))
}

fn fmt_map(map: &[usize]) -> String {
    map.iter().map(|m| (m + 1).to_string()).collect::<Vec<_>>().join(" ")
}
