//! Rate estimates with method provenance.

use serde::Serialize;

/// Which route produced the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMethod {
    /// Tail slope of `-log P{tau > T}` from Monte Carlo survival curves.
    Mc,
    /// Principal Dirichlet eigenvalue of the discretized negative generator.
    Pde,
    /// Minimum action per unit time over domain-confined paths.
    Variational,
}

/// One row of a horizon sweep: minimized action and its per-time value.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub horizon: f64,
    pub min_action: f64,
    pub action_per_time: f64,
    pub converged: bool,
}

/// An exit-rate value (units 1/time) with uncertainty and provenance.
#[derive(Debug, Clone, Serialize)]
pub struct RateEstimate {
    pub value: f64,
    pub method: RateMethod,
    /// Standard error (Monte Carlo fit) when available.
    pub std_error: Option<f64>,
    /// Noise level the estimate was computed at, where applicable.
    pub epsilon: Option<f64>,
    /// Horizon sweep table for variational estimates.
    pub sweep: Option<Vec<SweepRow>>,
    /// Supremum of the endpoint-pinned per-time minima over the (x, y) grid,
    /// when that refinement was requested.
    pub pinned_sup: Option<f64>,
    /// Qualitative flags: "no-exit-observed", "not-converged", "cap-reached",
    /// "window-fallback", "under-resolved".
    pub flags: Vec<String>,
}

impl RateEstimate {
    pub fn new(value: f64, method: RateMethod) -> Self {
        RateEstimate {
            value,
            method,
            std_error: None,
            epsilon: None,
            sweep: None,
            pinned_sup: None,
            flags: Vec::new(),
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}
