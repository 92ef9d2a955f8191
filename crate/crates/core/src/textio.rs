//! `key = value` text files for configurations and parameters.
//!
//! Blank lines and `#` comments are ignored, unknown or repeated keys are
//! errors, and arrays are comma-separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::config::{default_config, format_feature_list, parse_feature_list, FrontendConfig, FrontendParams, PARAM_NAMES};
use crate::error::{Error, Result};

const CONFIG_KEYS: [&str; 8] = [
    "num_bins",
    "window_width",
    "lowpass_stride",
    "sample_rate_hint",
    "features",
    "pow_gate",
    "epsilon",
    "zero_amp_threshold",
];

fn parse_pairs<'a>(text: &'a str, allowed: &[&str]) -> Result<BTreeMap<&'a str, (usize, &'a str)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {lineno}: expected `key = value`")))?;
        let key = key.trim();
        if !allowed.contains(&key) {
            return Err(Error::Format(format!("line {lineno}: unknown key `{key}`")));
        }
        if out.insert(key, (lineno, value.trim())).is_some() {
            return Err(Error::Format(format!("line {lineno}: duplicate key `{key}`")));
        }
    }
    Ok(out)
}

fn parse_scalar<T: FromStr>(key: &str, (lineno, value): (usize, &str)) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Format(format!("line {lineno}: cannot parse `{value}` for `{key}`")))
}

pub fn parse_config(text: &str) -> Result<FrontendConfig> {
    let pairs = parse_pairs(text, &CONFIG_KEYS)?;
    let mut c = default_config();
    for (&key, &entry) in &pairs {
        match key {
            "num_bins" => c.num_bins = parse_scalar(key, entry)?,
            "window_width" => c.window_width = parse_scalar(key, entry)?,
            "lowpass_stride" => c.lowpass_stride = parse_scalar(key, entry)?,
            "sample_rate_hint" => c.sample_rate_hint = parse_scalar(key, entry)?,
            "epsilon" => c.epsilon = parse_scalar(key, entry)?,
            "zero_amp_threshold" => c.zero_amp_threshold = parse_scalar(key, entry)?,
            "features" => c.selected_features = parse_feature_list(entry.1)?,
            "pow_gate" => c.pow_gate = parse_feature_list(entry.1)?,
            _ => unreachable!("keys filtered by parse_pairs"),
        }
    }
    c.validate()?;
    Ok(c)
}

pub fn format_config(c: &FrontendConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "num_bins = {}", c.num_bins);
    let _ = writeln!(s, "window_width = {}", c.window_width);
    let _ = writeln!(s, "lowpass_stride = {}", c.lowpass_stride);
    let _ = writeln!(s, "sample_rate_hint = {}", c.sample_rate_hint);
    let _ = writeln!(s, "features = {}", format_feature_list(&c.selected_features));
    let _ = writeln!(s, "pow_gate = {}", format_feature_list(&c.pow_gate));
    let _ = writeln!(s, "epsilon = {}", c.epsilon);
    let _ = writeln!(s, "zero_amp_threshold = {}", c.zero_amp_threshold);
    s
}

/// Parse a parameter file. Every array must be present.
pub fn parse_params(text: &str) -> Result<FrontendParams> {
    let pairs = parse_pairs(text, &PARAM_NAMES)?;
    let mut p = FrontendParams::zeros(0);
    for (name, arr) in PARAM_NAMES.iter().zip(p.arrays_mut()) {
        let &(lineno, value) = pairs
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing parameter array `{name}`")))?;
        *arr = value
            .split(',')
            .map(|v| parse_scalar::<f64>(name, (lineno, v.trim())))
            .collect::<Result<_>>()?;
    }
    let m = p.eta.len();
    if let Some((name, arr)) = PARAM_NAMES.iter().zip(p.arrays()).find(|(_, a)| a.len() != m) {
        return Err(Error::Format(format!("`{name}` has {} entries, `eta` has {m}", arr.len())));
    }
    Ok(p)
}

pub fn format_params(p: &FrontendParams) -> String {
    let mut s = String::new();
    for (name, arr) in PARAM_NAMES.iter().zip(p.arrays()) {
        let values: Vec<String> = arr.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "{name} = {}", values.join(", "));
    }
    s
}

pub fn read_config(path: &Path) -> Result<FrontendConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn read_params(path: &Path) -> Result<FrontendParams> {
    parse_params(&std::fs::read_to_string(path)?)
}
