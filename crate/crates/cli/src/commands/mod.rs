mod data;
mod diagnose;
mod fit;
mod tools;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use edisc::corpus::SnippetDataset;
use edisc::model::{Dims, Hyperparams, ModelState};
use serde::{Deserialize, Serialize};

use crate::manifest::Run;
use crate::{Cmd, Common};

pub fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Prepare(a) => data::prepare(a),
        Cmd::Embed(a) => data::embed(a),
        Cmd::Simulate(a) => data::simulate(a),
        Cmd::Fit(a) => fit::fit(a),
        Cmd::LabelledFit(a) => fit::labelled_fit(a),
        Cmd::Diagnose(a) => diagnose::diagnose(a),
        Cmd::GradCheck(a) => tools::grad_check(a),
        Cmd::Bench(a) => tools::bench(a),
    }
}

/// Ground truth written by `simulate` and read by `diagnose`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Truth {
    pub hyperparams: Hyperparams,
    pub dims: Dims,
    /// `phi~` in `[g][t][k]` layout.
    pub phi_tilde: Vec<f64>,
    pub state: ModelState,
}

/// A required input file: named when missing, checked for existence.
fn input<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    let Some(p) = path else {
        bail!("missing input: --{flag} FILE is required");
    };
    existing(p, flag)
}

fn existing<'a>(p: &'a Path, flag: &str) -> Result<&'a Path> {
    if !p.is_file() {
        bail!("missing input: --{flag} {} does not exist", p.display());
    }
    Ok(p)
}

fn out_dir(common: &Common) -> Result<&Path> {
    common.out.as_deref().context("--out DIR is required")
}

fn start<A: Serialize>(name: &str, args: &A, common: &Common) -> Result<Run> {
    let config = serde_json::to_value(args)?;
    let config = flatten_common(config);
    Run::new(name, config, Some(common.seed), out_dir(common)?)
}

/// Lifts the flattened `common` settings to the top level of the echo.
fn flatten_common(mut v: serde_json::Value) -> serde_json::Value {
    if let Some(map) = v.as_object_mut() {
        if let Some(serde_json::Value::Object(common)) = map.remove("common") {
            map.extend(common);
        }
    }
    v
}

fn load_snippets(run: &mut Run, path: &Path) -> Result<SnippetDataset> {
    run.input(path);
    SnippetDataset::load(path).with_context(|| format!("reading snippets {}", path.display()))
}

fn save_snippets(run: &mut Run, name: &str, data: &SnippetDataset) -> Result<PathBuf> {
    let mut bytes = Vec::new();
    data.write_to(&mut bytes)?;
    writeln!(bytes, "# config_hash {}", run.hash)?;
    let p = run.output(name);
    std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

fn csv_float(x: f64) -> String {
    format!("{x:.6}")
}
