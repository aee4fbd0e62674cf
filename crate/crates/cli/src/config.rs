use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;

use fk_core::systems::{PhasePoint, System};
use fk_core::{FkError, SplitMix64};

use crate::error::CliError;

/// Every key accepted on the command line (as `--key`) and in config files.
pub const KEYS: &[&str] = &[
    "experiment",
    "system",
    "x",
    "y",
    "points",
    "pairs",
    "sample",
    "delta",
    "eps",
    "t",
    "n",
    "horizons",
    "step",
    "tol",
    "partition",
    "partition-p",
    "partition-q",
    "perturb",
    "u",
    "probes",
    "instances",
    "format",
    "output",
];

/// Raw string parameters from flags and an optional config file; flags win.
/// Every value read through a getter, defaults included, is recorded for
/// the report.
#[derive(Debug, Default)]
pub struct Params {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

impl Params {
    pub fn new() -> Params {
        Params::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Merge `key = value` lines; keys already present are kept.
    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        for (key, value) in parse_config(&body).map_err(|e| CliError::Parse(format!("{}:{e}", path.display())))? {
            self.values.entry(key).or_insert(value);
        }
        Ok(())
    }

    fn record(&self, key: &str, value: &str) {
        self.used.borrow_mut().insert(key.to_string(), value.to_string());
    }

    /// Parameters actually consulted, with the values used.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }

    pub fn str_opt(&self, key: &str) -> Option<String> {
        let v = self.values.get(key)?.trim().to_string();
        self.record(key, &v);
        Some(v)
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.str_opt(key).unwrap_or_else(|| {
            self.record(key, default);
            default.to_string()
        })
    }

    pub fn str(&self, key: &str) -> Result<String, CliError> {
        self.str_opt(key).ok_or_else(|| CliError::Usage(format!("missing --{key}")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.values.get(key) {
            Some(_) => self.f64(key),
            None => {
                self.record(key, &default.to_string());
                Ok(default)
            }
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let v = self.str(key)?;
        parse_num(key, &v)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.values.get(key) {
            Some(_) => {
                let v = self.str(key)?;
                v.parse().map_err(|_| CliError::Parse(format!("--{key}: column 1: invalid count {v:?}")))
            }
            None => {
                self.record(key, &default.to_string());
                Ok(default)
            }
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        let v = self.str(key)?;
        v.parse().map_err(|_| CliError::Parse(format!("--{key}: column 1: invalid count {v:?}")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let v = self.str(key)?;
        split_list(&v, ',').map(|(col, item)| parse_num_at(key, item, col)).collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        let v = self.str(key)?;
        split_list(&v, ',')
            .map(|(col, item)| {
                item.parse().map_err(|_| CliError::Parse(format!("--{key}: column {col}: invalid count {item:?}")))
            })
            .collect()
    }

    pub fn point(&self, system: &System, key: &str) -> Result<PhasePoint, CliError> {
        let v = self.str(key)?;
        system.parse_point(&v).map_err(|e| prefix(key, e))
    }
}

fn prefix(key: &str, e: FkError) -> CliError {
    match e {
        FkError::Parse { column, message } => CliError::Parse(format!("--{key}: column {column}: {message}")),
        other => CliError::from(other),
    }
}

fn parse_num(key: &str, v: &str) -> Result<f64, CliError> {
    parse_num_at(key, v, 1)
}

fn parse_num_at(key: &str, v: &str, col: usize) -> Result<f64, CliError> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(CliError::Parse(format!("--{key}: column {col}: invalid number {v:?}"))),
    }
}

/// Items of a separated list with the 1-based column each starts at.
fn split_list(text: &str, sep: char) -> impl Iterator<Item = (usize, &str)> {
    let mut col = 1;
    text.split(sep).map(move |item| {
        let start = col + (item.len() - item.trim_start().len());
        col += item.len() + 1;
        (start, item.trim())
    })
}

/// `key = value` lines, `#` comments and blank lines. Errors carry
/// `line:column`.
pub fn parse_config(body: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (ln, line) in body.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            let col = content.len() - content.trim_start().len() + 1;
            return Err(format!("{}:{col}: expected `key = value`", ln + 1));
        };
        let key = content[..eq].trim();
        if !KEYS.contains(&key) {
            let col = content.len() - content.trim_start().len() + 1;
            return Err(format!("{}:{col}: unknown key {key:?}", ln + 1));
        }
        let value = content[eq + 1..].trim();
        if value.is_empty() {
            return Err(format!("{}:{}: empty value for {key}", ln + 1, eq + 2));
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Seeded random draw: `random:<count>,seed=<int>`, or a bare
/// `<count>,seed=<int>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub count: usize,
    pub seed: u64,
}

pub fn parse_draw(key: &str, text: &str) -> Result<Option<Draw>, CliError> {
    let body = text.strip_prefix("random:").unwrap_or(text);
    let Some((count, seed)) = body.split_once(',') else {
        return if text.starts_with("random:") {
            Err(CliError::Parse(format!("--{key}: column 1: expected random:<count>,seed=<int>")))
        } else {
            Ok(None)
        };
    };
    let Some(seed) = seed.trim().strip_prefix("seed=") else {
        return if text.starts_with("random:") || count.trim().parse::<usize>().is_ok() {
            Err(CliError::Parse(format!("--{key}: column {}: expected seed=<int>", text.len() - seed.len() + 1)))
        } else {
            Ok(None)
        };
    };
    let count_col = text.len() - body.len() + 1;
    let count = count
        .trim()
        .parse()
        .map_err(|_| CliError::Parse(format!("--{key}: column {count_col}: invalid count {count:?}")))?;
    let seed = seed
        .parse()
        .map_err(|_| CliError::Parse(format!("--{key}: column {}: invalid seed {seed:?}", text.len() - seed.len() + 1)))?;
    Ok(Some(Draw { count, seed }))
}

impl Params {
    /// `--key` as a seeded draw or an explicit comma list of points.
    pub fn points(&self, system: &System, key: &str, grid: Option<f64>) -> Result<(Vec<PhasePoint>, Option<u64>), CliError> {
        let text = self.str(key)?;
        if let Some(d) = parse_draw(key, &text)? {
            let mut rng = SplitMix64::new(d.seed);
            let pts = (0..d.count)
                .map(|_| match grid {
                    Some(g) => system.random_point_on_grid(&mut rng, g),
                    None => system.random_point(&mut rng),
                })
                .collect();
            return Ok((pts, Some(d.seed)));
        }
        let pts = split_list(&text, ',')
            .map(|(col, item)| {
                system.parse_point(item).map_err(|e| match e {
                    FkError::Parse { column, message } => {
                        CliError::Parse(format!("--{key}: column {}: {message}", col + column - 1))
                    }
                    other => CliError::from(other),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok((pts, None))
    }

    /// `--pairs` as a seeded draw (the caller builds the pairs) or an
    /// explicit list `x;y,x;y`.
    pub fn pairs(&self, system: &System) -> Result<Result<Vec<(PhasePoint, PhasePoint)>, Draw>, CliError> {
        let text = self.str("pairs")?;
        if let Some(d) = parse_draw("pairs", &text)? {
            return Ok(Err(d));
        }
        let mut out = Vec::new();
        for (col, item) in split_list(&text, ',') {
            let Some((a, b)) = item.split_once(';') else {
                return Err(CliError::Parse(format!("--pairs: column {col}: expected <x>;<y>")));
            };
            let x = system.parse_point(a).map_err(|e| prefix("pairs", e))?;
            let y = system.parse_point(b).map_err(|e| prefix("pairs", e))?;
            out.push((x, y));
        }
        Ok(Ok(out))
    }
}
