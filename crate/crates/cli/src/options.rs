//! Flag values that need more than a plain parse, and the flat config file.

use std::path::Path;

use crate::error::{CliError, Result};

/// Parses a quantile grid: `start:stop:step`, a comma list, or one value.
///
/// A range includes `stop` when the step divides `stop - start` up to
/// rounding. Values are rounded to 12 decimals so that `0.1:0.9:0.1` yields
/// `0.3` rather than `0.30000000000000004`.
pub fn parse_tau_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Usage(format!("invalid quantile grid `{s}`"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (
                start.parse::<f64>().map_err(|_| bad())?,
                stop.parse::<f64>().map_err(|_| bad())?,
                step.parse::<f64>().map_err(|_| bad())?,
            );
            if !(h > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
                return Err(bad());
            }
            let steps = ((b - a) / h + 1e-9).floor() as usize;
            Ok((0..=steps)
                .map(|k| ((a + k as f64 * h) * 1e12).round() / 1e12)
                .collect())
        }
        [list] => parse_list(list),
        _ => Err(bad()),
    }
}

/// Comma-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("`{v}` is not a number")))
        })
        .collect()
}

/// Reads `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys are flag names without the leading dashes.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                k + 1
            ))
        })?;
        out.push((
            key.trim().trim_start_matches("--").to_string(),
            value.trim().to_string(),
        ));
    }
    Ok(out)
}

/// Splices the settings of every `--config FILE` into `args` right after the
/// subcommand name, so that flags given on the command line (which come
/// later and override earlier occurrences) take precedence.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let path = it
                .next()
                .ok_or_else(|| CliError::Usage("--config needs a file".into()))?;
            files.push(path);
        } else if let Some(path) = a.strip_prefix("--config=") {
            files.push(path.to_string());
        } else {
            rest.push(a);
        }
    }
    if files.is_empty() {
        return Ok(rest);
    }
    // program name, then the first bare word is the subcommand
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(rest.len(), |p| p + 2);
    let mut injected = Vec::new();
    for f in files {
        for (key, value) in read_config_file(Path::new(&f))? {
            // `--key=value` keeps negative numbers from reading as flags
            injected.push(format!("--{key}={value}"));
        }
    }
    rest.splice(at..at, injected);
    Ok(rest)
}
