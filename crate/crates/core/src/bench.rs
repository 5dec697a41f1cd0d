//! Run-time scaling on synthetic data: mean wall time of a fixed number of
//! MALA iterations over a grid of vocabulary sizes `V` and snippet counts
//! `D`, with a least-squares fit `time = a + b V + c D + e V D` per model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::diagnostics::{ess_summary, EssSummary};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::model::{default_hyperparams, simulate, Hyperparams, Model, ModelKind, SimulationSpec};
use crate::samplers::{run_mala, Init, SamplerConfig};

/// A model variant in the benchmark; `embed_dim` is ignored for DiSC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchModel {
    pub kind: ModelKind,
    pub embed_dim: usize,
}

impl std::fmt::Display for BenchModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            ModelKind::Edisc => write!(f, "edisc(M={})", self.embed_dim),
            ModelKind::Disc => write!(f, "disc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub vocab: Vec<usize>,
    pub snippets: Vec<usize>,
    pub models: Vec<BenchModel>,
    pub iterations: usize,
    pub reps: usize,
    pub senses: usize,
    pub times: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            vocab: vec![500, 1000, 2000],
            snippets: vec![1000, 4000],
            models: vec![
                BenchModel {
                    kind: ModelKind::Disc,
                    embed_dim: 0,
                },
                BenchModel {
                    kind: ModelKind::Edisc,
                    embed_dim: 25,
                },
                BenchModel {
                    kind: ModelKind::Edisc,
                    embed_dim: 200,
                },
            ],
            iterations: 500,
            reps: 3,
            senses: 3,
            times: 5,
            window: 14,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub model: BenchModel,
    pub vocab: usize,
    pub snippets: usize,
    /// Wall seconds of each repetition.
    pub seconds: Vec<f64>,
    pub mean_seconds: f64,
    /// Set when the cell could not be run.
    pub note: Option<String>,
}

/// Coefficients of `time = intercept + slope_v V + slope_d D + interaction V D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchFit {
    pub model: BenchModel,
    pub intercept: f64,
    pub slope_v: f64,
    pub slope_d: f64,
    pub interaction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub cells: Vec<BenchCell>,
    pub fits: Vec<BenchFit>,
}

impl BenchResult {
    pub fn fit(&self, model: BenchModel) -> Option<&BenchFit> {
        self.fits.iter().find(|f| f.model == model)
    }

    /// One CSV row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,V,D,reps,mean_seconds,seconds,note\n");
        for c in &self.cells {
            let secs: Vec<String> = c.seconds.iter().map(|s| format!("{s:.6}")).collect();
            out.push_str(&format!(
                "{},{},{},{},{:.6},{},{}\n",
                c.model,
                c.vocab,
                c.snippets,
                c.seconds.len(),
                c.mean_seconds,
                secs.join(";"),
                c.note.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

/// Synthetic DiSC data plus, for EDiSC, random embeddings and matching
/// hyperparameters.
fn bench_problem(
    kind: ModelKind,
    embed_dim: usize,
    sim: &SimulationSpec,
    senses: usize,
) -> Result<(crate::corpus::SnippetDataset, Option<EmbeddingMatrix>, Hyperparams)> {
    let disc_hp = default_hyperparams(ModelKind::Disc, senses, 0, None)?;
    let (data, _) = simulate(&disc_hp, None, sim)?;
    match kind {
        ModelKind::Disc => Ok((data, None, disc_hp)),
        ModelKind::Edisc => {
            let rho = EmbeddingMatrix::random(&data.vocab, embed_dim, sim.seed);
            let c = crate::embeddings::median_sq_distance(&rho)?;
            let hp = default_hyperparams(ModelKind::Edisc, senses, embed_dim, Some(c))?;
            Ok((data, Some(rho), hp))
        }
    }
}

/// Wall seconds of `reps` runs of `iterations` MALA iterations on one
/// synthetic dataset.
pub fn time_cell(spec: &BenchSpec, model: BenchModel, vocab: usize, snippets: usize) -> Result<Vec<f64>> {
    let per_time = snippets / spec.times;
    let mut sim = SimulationSpec::uniform(1, spec.times, vocab, spec.window, per_time, spec.seed);
    sim.counts[0] += snippets - per_time * spec.times;
    let (data, rho, hp) = bench_problem(model.kind, model.embed_dim, &sim, spec.senses)?;
    let m = Model::new(&data, rho.as_ref(), &hp)?;
    let mut cfg = SamplerConfig::mala(spec.iterations, spec.seed);
    cfg.thin = spec.iterations.max(1);
    (0..spec.reps)
        .map(|r| {
            cfg.seed = spec.seed.wrapping_add(r as u64);
            let start = Instant::now();
            run_mala(&m, &cfg, &Init::Prior)?;
            Ok(start.elapsed().as_secs_f64())
        })
        .collect()
}

/// Runs every cell of the grid. `progress` is called after each cell.
pub fn run_bench(spec: &BenchSpec, mut progress: impl FnMut(&BenchCell)) -> Result<BenchResult> {
    if spec.reps == 0 || spec.iterations == 0 || spec.times == 0 {
        return Err(Error::param("bench needs reps, iterations and T >= 1"));
    }
    let mut cells = Vec::new();
    for &model in &spec.models {
        for &v in &spec.vocab {
            for &d in &spec.snippets {
                let cell = match time_cell(spec, model, v, d) {
                    Ok(seconds) => BenchCell {
                        model,
                        vocab: v,
                        snippets: d,
                        mean_seconds: seconds.iter().sum::<f64>() / seconds.len() as f64,
                        seconds,
                        note: None,
                    },
                    Err(e) => BenchCell {
                        model,
                        vocab: v,
                        snippets: d,
                        seconds: Vec::new(),
                        mean_seconds: f64::NAN,
                        note: Some(format!("skipped: {e}")),
                    },
                };
                progress(&cell);
                cells.push(cell);
            }
        }
    }
    let fits = spec
        .models
        .iter()
        .filter_map(|&m| {
            let rows: Vec<(f64, f64, f64)> = cells
                .iter()
                .filter(|c| c.model == m && c.note.is_none())
                .map(|c| (c.vocab as f64, c.snippets as f64, c.mean_seconds))
                .collect();
            fit_timing(&rows).ok().map(|[a, b, c, e]| BenchFit {
                model: m,
                intercept: a,
                slope_v: b,
                slope_d: c,
                interaction: e,
            })
        })
        .collect();
    Ok(BenchResult { cells, fits })
}

/// Sampling-efficiency comparison of DiSC and EDiSC under MALA on one
/// synthetic dataset. Defaults are sized like the "bank" data; a quarter of
/// the iterations are tempered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssSpec {
    pub vocab: usize,
    pub snippets: usize,
    pub senses: usize,
    pub times: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for EssSpec {
    fn default() -> Self {
        EssSpec {
            vocab: 1000,
            snippets: 3700,
            senses: 2,
            times: 10,
            window: 14,
            embed_dim: 25,
            iterations: 2000,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssComparison {
    pub disc: EssSummary,
    pub edisc: EssSummary,
}

impl EssComparison {
    /// Median `phi~` ESS per hour of EDiSC over that of DiSC.
    pub fn phi_ratio(&self) -> f64 {
        self.edisc.phi_per_hour.median / self.disc.phi_per_hour.median
    }
}

/// Simulates data from EDiSC with random embeddings, then runs one tempered
/// MALA chain per model on it and summarizes ESS.
pub fn compare_ess(spec: &EssSpec) -> Result<EssComparison> {
    if spec.times == 0 || spec.snippets < spec.times {
        return Err(Error::param("ESS comparison needs T >= 1 and D >= T"));
    }
    let per_time = spec.snippets / spec.times;
    let mut sim = SimulationSpec::uniform(1, spec.times, spec.vocab, spec.window, per_time, spec.seed);
    sim.counts[0] += spec.snippets - per_time * spec.times;
    let rho = EmbeddingMatrix::random(&Vocabulary::synthetic(spec.vocab), spec.embed_dim, spec.seed);
    let c = crate::embeddings::median_sq_distance(&rho)?;
    let edisc_hp = default_hyperparams(ModelKind::Edisc, spec.senses, spec.embed_dim, Some(c))?;
    let disc_hp = default_hyperparams(ModelKind::Disc, spec.senses, 0, None)?;
    let (data, _) = simulate(&edisc_hp, Some(&rho), &sim)?;
    let mut cfg = SamplerConfig::mala(spec.iterations, spec.seed);
    cfg.temper_iterations = spec.iterations / 4;
    let run = |hp: &Hyperparams, rho: Option<&EmbeddingMatrix>| -> Result<EssSummary> {
        let m = Model::new(&data, rho, hp)?;
        ess_summary(&run_mala(&m, &cfg, &Init::Prior)?)
    };
    Ok(EssComparison {
        disc: run(&disc_hp, None)?,
        edisc: run(&edisc_hp, Some(&rho))?,
    })
}

/// Least-squares fit of `y = a + b V + c D + e V D` to `(V, D, y)` rows.
pub fn fit_timing(rows: &[(f64, f64, f64)]) -> Result<[f64; 4]> {
    if rows.len() < 4 {
        return Err(Error::TooFewDraws {
            needed: 4,
            have: rows.len(),
        });
    }
    // Columns are scaled to order one before solving the normal equations.
    let sv = rows.iter().map(|r| r.0.abs()).fold(0.0, f64::max).max(1.0);
    let sd = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max).max(1.0);
    let mut a = [[0.0f64; 5]; 4];
    for &(v, d, y) in rows {
        let x = [1.0, v / sv, d / sd, v * d / (sv * sd)];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] += x[i] * x[j];
            }
            a[i][4] += x[i] * y;
        }
    }
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::param("timing grid does not identify the V x D interaction"));
        }
        a.swap(col, pivot);
        for row in 0..4 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..5 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let coef: Vec<f64> = (0..4).map(|i| a[i][4] / a[i][i]).collect();
    Ok([coef[0], coef[1] / sv, coef[2] / sd, coef[3] / (sv * sd)])
}
