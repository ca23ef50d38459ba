//! Unit-suffixed config quantities.
//!
//! Rates and times must carry an explicit suffix: SI (`s^-1`, `s`) or
//! g-relative (`g`, `/g`). Flux entries are weber when bare, or `phi0`.
//! Internally everything is dimensionless (rates in g, times in 1/g).

use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// A config value that is either a bare number or `"<number> <unit>"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Bare(f64),
    Tagged(String),
}

impl Quantity {
    fn split(&self, key: &str) -> Result<(f64, Option<String>)> {
        match self {
            Quantity::Bare(v) => Ok((*v, None)),
            Quantity::Tagged(text) => {
                let mut parts = text.split_whitespace();
                let number = parts
                    .next()
                    .with_context(|| format!("[{key}] is empty"))?
                    .parse::<f64>()
                    .with_context(|| format!("[{key}] has no leading number: {text:?}"))?;
                let unit = parts.next().map(str::to_owned);
                if parts.next().is_some() {
                    bail!("[{key}] has trailing tokens: {text:?}");
                }
                Ok((number, unit))
            }
        }
    }

    /// Rate in units of g. Accepts `s^-1` / `1/s` (divided by `g_si`) or `g`.
    pub fn rate_in_g(&self, g_si: f64, key: &str) -> Result<f64> {
        let (value, unit) = self.split(key)?;
        match unit.as_deref() {
            Some("s^-1") | Some("1/s") => Ok(rate_si_to_g(value, g_si)),
            Some("g") => Ok(value),
            Some(other) => bail!("[{key}]: unknown rate unit {other:?} (use s^-1, 1/s, or g)"),
            None => bail!("[{key}]: rates need an explicit unit suffix (s^-1, 1/s, or g)"),
        }
    }

    /// Time in units of 1/g. Accepts `s` (multiplied by `g_si`) or `/g` / `1/g`.
    pub fn time_in_inverse_g(&self, g_si: f64, key: &str) -> Result<f64> {
        let (value, unit) = self.split(key)?;
        match unit.as_deref() {
            Some("s") => Ok(time_si_to_g(value, g_si)),
            Some("/g") | Some("1/g") => Ok(value),
            Some(other) => bail!("[{key}]: unknown time unit {other:?} (use s, /g, or 1/g)"),
            None => bail!("[{key}]: times need an explicit unit suffix (s, /g, or 1/g)"),
        }
    }

    /// Flux in weber. Bare numbers are weber; `phi0` scales by the flux
    /// quantum; `wb` is explicit weber.
    pub fn flux_weber(&self, key: &str) -> Result<f64> {
        let (value, unit) = self.split(key)?;
        match unit.as_deref() {
            None | Some("wb") => Ok(value),
            Some("phi0") => Ok(value * squidw_core::squid::FLUX_QUANTUM),
            Some(other) => bail!("[{key}]: unknown flux unit {other:?} (use wb or phi0)"),
        }
    }
}

pub fn rate_si_to_g(rate_si: f64, g_si: f64) -> f64 {
    rate_si / g_si
}

pub fn rate_g_to_si(rate_g: f64, g_si: f64) -> f64 {
    rate_g * g_si
}

pub fn time_si_to_g(t_si: f64, g_si: f64) -> f64 {
    t_si * g_si
}

pub fn time_g_to_si(t_g: f64, g_si: f64) -> f64 {
    t_g / g_si
}
