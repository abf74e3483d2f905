//! Plain-data containers for computed spectra and time traces.
//!
//! These are deliberately dumb structs: the physics modules fill them in,
//! the I/O layer serializes them, and fits consume them, so nothing here
//! should know about any of those.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A sampled curve y(x) with optional per-point uncertainties and named
/// auxiliary columns sharing the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y_err: Option<Vec<f64>>,
    pub x_label: String,
    pub y_label: String,
    /// Extra columns, e.g. per-point convergence flags, keyed by column name.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub extra: Vec<(String, Vec<f64>)>,
    /// Free-form provenance: parameter values, solver settings.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub meta: BTreeMap<String, String>,
}

impl Spectrum {
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(Spectrum {
            x,
            y,
            y_err: None,
            x_label: x_label.into(),
            y_label: y_label.into(),
            extra: Vec::new(),
            meta: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Attach per-point 1σ uncertainties.
    pub fn with_errors(mut self, y_err: Vec<f64>) -> Result<Self> {
        if y_err.len() != self.x.len() {
            return Err(Error::Dimension {
                expected: self.x.len(),
                got: y_err.len(),
            });
        }
        self.y_err = Some(y_err);
        Ok(self)
    }

    /// Attach a named auxiliary column of the same length.
    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.x.len() {
            return Err(Error::Dimension {
                expected: self.x.len(),
                got: values.len(),
            });
        }
        self.extra.push((name.into(), values));
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.extra
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// A sampled signal over time (μs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub t_us: Vec<f64>,
    pub y: Vec<f64>,
    pub y_label: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub meta: BTreeMap<String, String>,
}

impl TimeTrace {
    pub fn new(t_us: Vec<f64>, y: Vec<f64>, y_label: impl Into<String>) -> Result<Self> {
        if t_us.len() != y.len() {
            return Err(Error::Dimension {
                expected: t_us.len(),
                got: y.len(),
            });
        }
        Ok(TimeTrace {
            t_us,
            y,
            y_label: y_label.into(),
            meta: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.t_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_us.is_empty()
    }
}

/// Evenly spaced grid of `n` points covering [lo, hi] inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    crate::ensure_finite("grid bounds", &[lo, hi])?;
    if n < 2 {
        return Err(Error::InvalidParam(format!(
            "grid needs at least 2 points, got {n}"
        )));
    }
    if hi <= lo {
        return Err(Error::InvalidParam(format!(
            "grid bounds out of order: [{lo}, {hi}]"
        )));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect())
}
