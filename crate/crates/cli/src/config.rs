//! Flat `key = value` config files. Keys are the long flag names of the
//! subcommand being run; flags given on the command line win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Command};

pub fn parse(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", origin.display(), i + 1);
        };
        let key = key.trim();
        if key.is_empty() {
            bail!("{}:{}: empty key", origin.display(), i + 1);
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            bail!("{}:{}: duplicate key `{key}`", origin.display(), i + 1);
        }
    }
    Ok(out)
}

fn flag_value<'a>(args: &'a [OsString], name: &str) -> Option<&'a OsString> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == long {
            return args.get(i + 1);
        }
        if s.starts_with(&prefix) {
            return Some(a);
        }
    }
    None
}

fn given(args: &[OsString], name: &str) -> bool {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == long || s.starts_with(&prefix)
    })
}

/// Appends the config file's settings to `argv` as flags for every key the
/// chosen subcommand accepts and the command line does not already set.
/// Keys unknown to every subcommand are errors.
pub fn merge(cli: &Command, argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let rest = &argv[1.min(argv.len())..];
    let Some(sub) = rest
        .iter()
        .find_map(|a| cli.find_subcommand(a.to_string_lossy().as_ref()))
    else {
        return Ok(argv);
    };
    let Some(path) = flag_value(rest, "config") else {
        return Ok(argv);
    };
    let path = path.to_string_lossy();
    let path = Path::new(path.strip_prefix("--config=").unwrap_or(&path));
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let settings = parse(&text, path)?;

    let mut out = argv.clone();
    for (key, value) in &settings {
        let arg = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            let known = cli
                .get_subcommands()
                .any(|s| s.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
            if !known {
                bail!("{}: unknown key `{key}`", path.display());
            }
            continue;
        };
        if key == "config" {
            bail!("{}: a config file cannot name another config file", path.display());
        }
        if given(rest, key) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => out.push(format!("--{key}").into()),
                "false" => {}
                other => bail!("{}: `{key}` must be true or false, got `{other}`", path.display()),
            },
            _ => {
                let multi = arg.get_num_args().is_some_and(|r| r.max_values() > 1);
                out.push(format!("--{key}").into());
                if multi {
                    out.extend(value.split_whitespace().map(OsString::from));
                } else {
                    out.push(value.into());
                }
            }
        }
    }
    Ok(out)
}
