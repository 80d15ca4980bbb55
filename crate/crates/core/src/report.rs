use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::Result;
use crate::mechanisms::{ledger_total, BudgetLedger};

/// Output of every estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub estimate: Vec<f64>,
    /// Final clipping radius.
    pub rho: Option<f64>,
    pub mu_coarse: Option<Vec<f64>>,
    /// Total budget consumed, from the ledger.
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub wall_time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u2: Option<Vec<f64>>,
    pub ledger: BudgetLedger,
    /// Free-form diagnostics (constants used, dropped people, flags).
    #[serde(default)]
    pub diagnostics: BTreeMap<String, serde_json::Value>,
}

impl EstimateReport {
    pub(crate) fn new(estimator: &str, estimate: Vec<f64>, ledger: BudgetLedger, seed: u64) -> Result<Self> {
        let (epsilon, delta) = ledger_total(&ledger)?;
        Ok(Self {
            estimator: estimator.to_string(),
            estimate,
            rho: None,
            mu_coarse: None,
            epsilon,
            delta,
            seed,
            wall_time_ms: 0.0,
            rho1: None,
            rho2: None,
            u1: None,
            u2: None,
            ledger,
            diagnostics: BTreeMap::new(),
        })
    }

    pub(crate) fn note(&mut self, key: &str, value: impl Serialize) {
        self.diagnostics.insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serialisable")
    }
}
