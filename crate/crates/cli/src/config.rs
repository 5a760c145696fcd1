//! Flat `key = value` config files. Each key names a long flag of the
//! subcommand; file entries are spliced in ahead of the command-line flags so
//! the latter win.

use std::path::Path;

/// Parses `key = value` lines; `#` starts a comment and blank lines are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected `key = value`", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.starts_with('-') || k.contains(char::is_whitespace) {
            return Err(format!("config line {}: invalid key `{k}`", n + 1));
        }
        out.push((k.replace('_', "-"), v.to_string()));
    }
    Ok(out)
}

/// Path given by `--config FILE` or `--config=FILE`, if any.
fn config_path(args: &[String]) -> Option<&str> {
    args.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            args.get(i + 1).map(String::as_str)
        } else {
            a.strip_prefix("--config=")
        }
    })
}

/// Returns `args` with the config file's entries inserted right after the
/// subcommand. `skip` lists keys shadowed by the environment.
pub fn splice(args: Vec<String>, skip: &[&str]) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(path)).map_err(|e| format!("config {path}: {e}"))?;
    let entries = parse(&text)?;
    // args[0] is the binary, args[1] the subcommand
    let Some(pos) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 2) else {
        return Ok(args);
    };
    let mut out: Vec<String> = args[..pos].to_vec();
    for (k, v) in entries {
        if k == "config" {
            return Err("config files cannot include other config files".into());
        }
        if skip.contains(&k.as_str()) {
            continue;
        }
        out.push(format!("--{k}"));
        out.push(v);
    }
    out.extend_from_slice(&args[pos..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_pairs() {
        let got = parse("# comment\nreps = 2\n\nsigma_s=1,5 # inline\n").unwrap();
        assert_eq!(got, vec![("reps".into(), "2".into()), ("sigma-s".into(), "1,5".into())]);
        assert!(parse("reps 2").is_err());
        assert!(parse("--reps = 2").is_err());
    }

    #[test]
    fn file_entries_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "reps = 5\nseed = 3\n").unwrap();
        let args: Vec<String> = ["bin", "experiment", "--config", path.to_str().unwrap(), "--reps", "2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = splice(args, &["seed"]).unwrap();
        assert_eq!(&out[..4], &["bin", "experiment", "--reps", "5"]);
        assert_eq!(out.last().unwrap(), "2");
        assert!(!out.contains(&"--seed".to_string()));
    }
}
