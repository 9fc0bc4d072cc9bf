use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Standard uncertainty; `NaN` when the parameter is not identifiable.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: f64,
    pub error: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Goodness {
    /// Weighted residual sum of squares (χ² when errors were supplied).
    Rss(f64),
    LogLikelihood(f64),
}

impl Goodness {
    pub fn value(&self) -> f64 {
        match *self {
            Goodness::Rss(v) | Goodness::LogLikelihood(v) => v,
        }
    }
}

/// Named estimates with uncertainties, a goodness metric and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, Param>,
    pub goodness: Goodness,
    pub converged: bool,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl FitResult {
    pub fn new(goodness: Goodness, converged: bool, n_points: usize) -> Self {
        Self {
            params: BTreeMap::new(),
            goodness,
            converged,
            n_points,
            notes: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64, error: f64, unit: &str) -> Self {
        self.insert(name, value, error, unit);
        self
    }

    pub fn insert(&mut self, name: &str, value: f64, error: f64, unit: &str) {
        self.params.insert(
            name.to_string(),
            Param {
                value,
                error: if error.is_nan() { error } else { error.abs() },
                unit: unit.to_string(),
            },
        );
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub fn has_note(&self, needle: &str) -> bool {
        self.notes.iter().any(|n| n.contains(needle))
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::AnalysisFailed(format!("fit has no parameter `{name}`")))
    }

    /// Value of `name`; panics if absent, for use where the model fixes the
    /// parameter set.
    pub fn value(&self, name: &str) -> f64 {
        self.params[name].value
    }

    pub fn error(&self, name: &str) -> f64 {
        self.params[name].error
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let f = FitResult::new(Goodness::Rss(1.5), true, 10).with("P_sat", 7.6, -0.2, "uW");
        let v: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(v["params"]["P_sat"]["unit"], "uW");
        assert_eq!(v["params"]["P_sat"]["error"], 0.2);
        assert_eq!(v["goodness"]["kind"], "rss");
        let back: FitResult = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }
}
