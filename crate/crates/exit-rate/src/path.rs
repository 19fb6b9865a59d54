//! Discrete paths: a uniform time grid and one state per node.

use crate::error::{Error, Result};

/// Tolerance for the uniform-spacing invariant.
const SPACING_TOL: f64 = 1e-12;

/// A continuous path sampled on a uniform grid `t_0 = 0, ..., t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl DiscretePath {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::shape(
                "path",
                format!("{} states", times.len()),
                format!("{}", states.len()),
            ));
        }
        if times.is_empty() {
            return Err(Error::InvalidInput("a path needs at least one node".into()));
        }
        let d = states[0].len();
        if states.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidInput("path states have mixed dimensions".into()));
        }
        if times.len() == 1 {
            // degenerate carrier: a trajectory that left the domain on its
            // first step records only the start node
            return Ok(DiscretePath { times, states });
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::InvalidInput("times must be strictly increasing".into()));
        }
        for w in times.windows(2) {
            let step = w[1] - w[0];
            if !(step > 0.0) {
                return Err(Error::InvalidInput("times must be strictly increasing".into()));
            }
            if (step - dt).abs() > SPACING_TOL {
                return Err(Error::InvalidInput(format!(
                    "non-uniform spacing: {step} vs {dt}"
                )));
            }
        }
        Ok(DiscretePath { times, states })
    }

    /// Builds the grid `t_k = k * dt` for the given states.
    pub fn uniform(dt: f64, states: Vec<Vec<f64>>) -> Result<Self> {
        let times = (0..states.len()).map(|k| k as f64 * dt).collect();
        DiscretePath::new(times, states)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// Grid spacing; zero for a degenerate single-node path.
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        self.times[1] - self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k]
    }

    pub(crate) fn same_grid(&self, other: &DiscretePath) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= SPACING_TOL)
    }
}
