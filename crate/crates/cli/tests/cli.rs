use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edisc::samplers::Chain;

fn edisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edisc")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = edisc(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.conf")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// simulate, fit and diagnose with the bundled config.
fn toy_pipeline(dir: &Path) -> PathBuf {
    let conf = toy_config();
    let (sim, fit, diag) = (dir.join("sim"), dir.join("fit"), dir.join("diag"));
    ok(&["simulate", "--config", s(&conf), "--out", s(&sim)]);
    let snippets = sim.join("snippets.txt");
    ok(&["fit", "--config", s(&conf), "--snippets", s(&snippets), "--embeddings", s(&sim.join("embeddings.txt")), "--out", s(&fit)]);
    ok(&[
        "diagnose",
        "--config",
        s(&conf),
        s(&fit.join("chain-1.bin")),
        s(&fit.join("chain-2.bin")),
        "--snippets",
        s(&snippets),
        "--truth",
        s(&sim.join("truth.json")),
        "--out",
        s(&diag),
    ]);
    diag
}

#[test]
fn toy_pipeline_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let diag = toy_pipeline(dir.path());
    let report = fs::read_to_string(diag.join("report.txt")).unwrap();
    assert!(report.contains("Brier score"));
    assert!(report.contains("HPD interval"));
    for name in ["prevalence.csv", "rhat.csv", "ess.csv", "waic.csv", "brier.csv", "manifest.json"] {
        assert!(diag.join(name).is_file(), "{name}");
    }
}

#[test]
fn identical_config_gives_identical_numbers() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (da, db) = (toy_pipeline(a.path()), toy_pipeline(b.path()));
    // Chain files record wall time, so the diagnose hash line may differ.
    let body = |p: PathBuf| -> Vec<String> {
        fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with("# config_hash")).map(String::from).collect()
    };
    for name in ["prevalence.csv", "rhat.csv", "waic.csv", "brier.csv", "sense_probabilities.csv"] {
        assert_eq!(body(da.join(name)), body(db.join(name)), "{name}");
    }
    for dir in ["sim", "fit"] {
        let read = |root: &Path, f: &str| fs::read(root.join(dir).join(f)).ok();
        if dir == "sim" {
            assert_eq!(read(a.path(), "snippets.txt"), read(b.path(), "snippets.txt"));
            assert_eq!(read(a.path(), "truth.json"), read(b.path(), "truth.json"));
        } else {
            let ca = Chain::load(&a.path().join("fit/chain-1.bin")).unwrap();
            let cb = Chain::load(&b.path().join("fit/chain-1.bin")).unwrap();
            assert_eq!((ca.phi, ca.psi, ca.loglik), (cb.phi, cb.psi, cb.loglik));
            // Same inputs by content in different directories.
            assert_eq!(ca.meta.config_hash, cb.meta.config_hash);
        }
    }
}

#[test]
fn artifacts_carry_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let diag = toy_pipeline(dir.path());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(diag.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap();
    assert_eq!(manifest["seed"], 7);
    let first = fs::read_to_string(diag.join("prevalence.csv")).unwrap();
    assert_eq!(first.lines().next().unwrap(), format!("# config_hash {hash}"));
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit/manifest.json")).unwrap()).unwrap();
    let chain = Chain::load(&dir.path().join("fit/chain-1.bin")).unwrap();
    assert_eq!(chain.meta.config_hash.as_deref(), fit["config_hash"].as_str());
    assert_eq!(chain.meta.config.seed, 7);
    let outputs = fit["outputs"].as_array().unwrap();
    assert!(outputs.iter().all(|o| o["sha256"].as_str().unwrap().len() == 64));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--config", s(&toy_config()), "--per-cell", "5", "--out", s(&out)]);
    let data = edisc::corpus::SnippetDataset::load(&out.join("snippets.txt")).unwrap();
    assert_eq!(data.len(), 15);
    assert_eq!(data.true_senses, 2);
}

#[test]
fn edisc_fit_without_embeddings_fails() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--kind", "disc", "--V", "10", "--T", "2", "--per-cell", "5", "--out", s(&sim)]);
    let out = edisc(&["fit", "--kind", "edisc", "--snippets", s(&sim.join("snippets.txt")), "--out", s(&dir.path().join("fit"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("embeddings"));
}

#[test]
fn missing_input_file_is_named() {
    let out = edisc(&["fit", "--kind", "disc", "--snippets", "/nonexistent/snips.txt", "--out", "/tmp/unused"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/snips.txt"));
}

#[test]
fn unknown_flags_and_commands_print_usage() {
    for args in [&["fit", "--bogus"][..], &["frobnicate"][..]] {
        let out = edisc(args);
        assert!(!out.status.success());
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("Usage"), "{err}");
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "itres = 5\n").unwrap();
    let out = edisc(&["simulate", "--config", s(&conf), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("itres"));
}

#[test]
fn prepare_then_embed() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.tsv");
    let mut text = String::new();
    for i in 0..30 {
        let (g, t) = (1 + i % 2, 1 + i % 3);
        let words = if i % 2 == 0 { "river water bank stone flow water" } else { "money loan bank account pay money" };
        text.push_str(&format!("d{i}\t{g}\t{t}\tthe {words} the\n"));
    }
    fs::write(&corpus, text).unwrap();
    let stop = dir.path().join("stop.txt");
    fs::write(&stop, "the\n").unwrap();
    let prep = dir.path().join("prep");
    let summary = ok(&["prepare", "--corpus", s(&corpus), "--target", "bank", "--window", "4", "--min-count", "2", "--stopwords", s(&stop), "--out", s(&prep)]);
    assert!(summary.contains("snippets\t30"), "{summary}");
    let snippets = prep.join("snippets.txt");
    let emb = dir.path().join("emb");
    ok(&["embed", "--corpus", s(&corpus), "--snippets", s(&snippets), "--dim", "3", "--epochs", "5", "--out", s(&emb)]);
    let data = edisc::corpus::SnippetDataset::load(&snippets).unwrap();
    let rho = edisc::embeddings::load_embeddings(&emb.join("embeddings.txt"), &data.vocab).unwrap();
    assert_eq!((rho.rows(), rho.dim()), (data.vocab_size(), 3));
    let fit = dir.path().join("fit");
    ok(&["fit", "--K", "2", "--iters", "40", "--snippets", s(&snippets), "--embeddings", s(&emb.join("embeddings.txt")), "--out", s(&fit)]);
    assert!(fit.join("chain-1.bin").is_file());
}

#[test]
fn grad_check_prints_a_table() {
    let out = ok(&["grad-check", "--kind", "disc", "--V", "8", "--T", "2", "--D", "10"]);
    assert!(out.starts_with("kind\tblock\tlambda\tmax_rel_error"));
    let worst: f64 = out.lines().last().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(worst < 1e-5);
}

#[test]
fn bench_reports_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    ok(&[
        "bench", "--grid", "V=20,40", "D=30,60", "--models", "disc", "edisc:3", "--iters", "5", "--reps", "2", "--K", "2", "--T", "2",
        "--out", s(&out),
    ]);
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 8);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[3], "2");
        assert!(f[4].parse::<f64>().unwrap() > 0.0);
    }
    assert_eq!(fs::read_to_string(out.join("fits.csv")).unwrap().lines().count(), 4);
}
