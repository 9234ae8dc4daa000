//! Penalty grids given as `min:max:count[:log|lin]`.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub log: bool,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let t = |i: usize| i as f64 / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == self.count - 1 {
                    self.max
                } else if self.log {
                    (self.min.ln() + (self.max.ln() - self.min.ln()) * t(i)).exp()
                } else {
                    self.min + (self.max - self.min) * t(i)
                }
            })
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            bail!("grid must be min:max:count[:log|lin], got {s:?}");
        }
        let num = |p: &str, what: &str| -> Result<f64> {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("grid {what}: not a number: {p:?}"))
        };
        let min = num(parts[0], "min")?;
        let max = num(parts[1], "max")?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .with_context(|| format!("grid count: not an integer: {:?}", parts[2]))?;
        let log = match parts.get(3).map(|p| p.trim()) {
            None | Some("log") => true,
            Some("lin") => false,
            Some(other) => bail!("grid spacing must be log or lin, got {other:?}"),
        };
        if !(min.is_finite() && max.is_finite()) || min < 0.0 || min > max {
            bail!("grid needs 0 <= min <= max, got {min}:{max}");
        }
        if count == 0 {
            bail!("grid count must be >= 1");
        }
        if log && min <= 0.0 {
            bail!("log-spaced grid needs min > 0");
        }
        Ok(Self {
            min,
            max,
            count,
            log,
        })
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.min,
            self.max,
            self.count,
            if self.log { "log" } else { "lin" }
        )
    }
}
