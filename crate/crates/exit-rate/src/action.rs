//! Freidlin-Wentzell action on discrete paths, and its constrained
//! minimization.
//!
//! For a path `phi` and closed-loop drift `f`, the action is
//!
//! ```text
//! S(phi) = 1/2 * integral of || dphi/dt - f(phi) ||^2 dt
//! ```
//!
//! with the norm weighted by `(sigma sigma^T)^{-1}`. Discretization: piecewise
//! linear paths, midpoint quadrature per segment — exact in the velocity
//! (the integrand is quadratic in it) and second order in the state.
//!
//! The minimizer is projected gradient descent over the node coordinates:
//! analytic gradient, Armijo backtracking, and after every trial step each
//! node is projected onto the closure of the (optionally shrunken) domain.
//! The returned value is an upper bound on the true infimum and decreases
//! monotonically across iterations. The long-horizon rate is extracted by a
//! horizon sweep with multi-start initial paths (constant interior levels plus
//! the deterministic trajectory); hover-type solutions dominate large
//! horizons.

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{closed_loop_matrix, DiffusionKind, GainTuple, SystemModel};
use crate::path::DiscretePath;
use crate::rate::{RateEstimate, RateMethod, SweepRow};
use crate::simulate::simulate_deterministic;

/// Sup-distance between two paths on the same grid (piecewise-linear paths
/// attain the sup at the nodes).
pub fn rho_0t(phi: &DiscretePath, psi: &DiscretePath) -> Result<f64> {
    if !phi.same_grid(psi) {
        return Err(Error::InvalidInput("paths are on different grids".into()));
    }
    if phi.dim() != psi.dim() {
        return Err(Error::shape("psi", format!("dimension {}", phi.dim()), format!("{}", psi.dim())));
    }
    let mut sup: f64 = 0.0;
    for (a, b) in phi.states().iter().zip(psi.states()) {
        let dist_sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        sup = sup.max(dist_sq.sqrt());
    }
    Ok(sup)
}

/// Set distance: the supremum of `rho_0t` over the family.
pub fn d_0t(psi: &DiscretePath, family: &[DiscretePath]) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::InvalidInput("path family is empty".into()));
    }
    let mut sup: f64 = 0.0;
    for member in family {
        sup = sup.max(rho_0t(psi, member)?);
    }
    Ok(sup)
}

/// Action of a path: total value and the per-segment contributions.
#[derive(Debug, Clone)]
pub struct ActionValue {
    pub value: f64,
    pub contributions: Vec<f64>,
}

/// Inverse-Gram weight evaluation for the quadrature.
enum WeightKernel {
    Dense(Vec<f64>),
    Diagonal(Vec<f64>),
    Affine { offset: Vec<f64>, slope: Vec<f64>, kappa: f64 },
}

struct ActionObjective {
    dim: usize,
    segments: usize,
    dt: f64,
    loop_matrix: Vec<f64>,
    weight: WeightKernel,
}

impl ActionObjective {
    fn new(model: &SystemModel, gains: &GainTuple, segments: usize, horizon: f64) -> Result<Self> {
        if segments < 1 {
            return Err(Error::InvalidInput("a path needs at least one segment".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        let d = model.dim();
        let m = closed_loop_matrix(model, gains)?;
        let loop_matrix: Vec<f64> =
            (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
        let weight = match model.sigma().kind() {
            DiffusionKind::Constant(s) => {
                let gram = s * s.transpose();
                let diag_only = (0..d).all(|i| (0..d).all(|j| i == j || gram[(i, j)] == 0.0));
                if diag_only {
                    WeightKernel::Diagonal((0..d).map(|i| 1.0 / gram[(i, i)]).collect())
                } else {
                    let inv = gram
                        .clone()
                        .cholesky()
                        .ok_or_else(|| Error::Numerical("sigma*sigma^T is not positive definite".into()))?
                        .inverse();
                    WeightKernel::Dense(
                        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect(),
                    )
                }
            }
            DiffusionKind::DiagonalAffine { offset, slope } => WeightKernel::Affine {
                offset: offset.iter().copied().collect(),
                slope: slope.iter().copied().collect(),
                kappa: model.sigma().kappa(),
            },
        };
        Ok(ActionObjective {
            dim: d,
            segments,
            dt: horizon / segments as f64,
            loop_matrix,
            weight,
        })
    }

    /// Weight diagonal (or dense application) at the midpoint: fills
    /// `w_r = W r` and returns `r^T W r`.
    #[inline]
    fn apply_weight(&self, mid: &[f64], r: &[f64], w_r: &mut [f64]) -> Result<f64> {
        let d = self.dim;
        match &self.weight {
            WeightKernel::Dense(w) => {
                let mut quad = 0.0;
                for i in 0..d {
                    let row = &w[i * d..(i + 1) * d];
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += row[j] * r[j];
                    }
                    w_r[i] = acc;
                    quad += r[i] * acc;
                }
                Ok(quad)
            }
            WeightKernel::Diagonal(w) => {
                let mut quad = 0.0;
                for i in 0..d {
                    w_r[i] = w[i] * r[i];
                    quad += r[i] * w_r[i];
                }
                Ok(quad)
            }
            WeightKernel::Affine { offset, slope, kappa } => {
                let mut quad = 0.0;
                let mut cert = f64::INFINITY;
                for i in 0..d {
                    let v = offset[i] + slope[i] * mid[i].abs();
                    cert = cert.min(v * v);
                    let w = 1.0 / (v * v);
                    w_r[i] = w * r[i];
                    quad += r[i] * w_r[i];
                }
                if cert < *kappa {
                    return Err(Error::Ellipticity {
                        x: mid.to_vec(),
                        eigenvalue: cert,
                        kappa: *kappa,
                    });
                }
                Ok(quad)
            }
        }
    }

    fn value(&self, nodes: &[f64], contributions: Option<&mut Vec<f64>>) -> Result<f64> {
        let d = self.dim;
        let dt = self.dt;
        let mut total = 0.0;
        let mut mid = vec![0.0; d];
        let mut r = vec![0.0; d];
        let mut w_r = vec![0.0; d];
        let mut contribs = contributions;
        for k in 0..self.segments {
            let xk = &nodes[k * d..(k + 1) * d];
            let xk1 = &nodes[(k + 1) * d..(k + 2) * d];
            for j in 0..d {
                mid[j] = 0.5 * (xk[j] + xk1[j]);
            }
            for i in 0..d {
                let row = &self.loop_matrix[i * d..(i + 1) * d];
                let mut f = 0.0;
                for j in 0..d {
                    f += row[j] * mid[j];
                }
                r[i] = (xk1[i] - xk[i]) / dt - f;
            }
            let quad = self.apply_weight(&mid, &r, &mut w_r)?;
            let c = 0.5 * dt * quad;
            if !c.is_finite() {
                return Err(Error::NonFinite { step: k, detail: "action contribution".into() });
            }
            if let Some(list) = contribs.as_deref_mut() {
                list.push(c);
            }
            total += c;
        }
        Ok(total)
    }

    fn value_and_grad(&self, nodes: &[f64], grad: &mut [f64]) -> Result<f64> {
        let d = self.dim;
        let dt = self.dt;
        grad.fill(0.0);
        let mut total = 0.0;
        let mut mid = vec![0.0; d];
        let mut r = vec![0.0; d];
        let mut w_r = vec![0.0; d];
        let mut mt_wr = vec![0.0; d];
        for k in 0..self.segments {
            let xk_off = k * d;
            let xk1_off = (k + 1) * d;
            for j in 0..d {
                mid[j] = 0.5 * (nodes[xk_off + j] + nodes[xk1_off + j]);
            }
            for i in 0..d {
                let row = &self.loop_matrix[i * d..(i + 1) * d];
                let mut f = 0.0;
                for j in 0..d {
                    f += row[j] * mid[j];
                }
                r[i] = (nodes[xk1_off + i] - nodes[xk_off + i]) / dt - f;
            }
            let quad = self.apply_weight(&mid, &r, &mut w_r)?;
            total += 0.5 * dt * quad;

            // M^T (W r)
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += self.loop_matrix[j * d + i] * w_r[j];
                }
                mt_wr[i] = acc;
            }
            for j in 0..d {
                let shared = -0.5 * dt * mt_wr[j];
                grad[xk_off + j] += -w_r[j] + shared;
                grad[xk1_off + j] += w_r[j] + shared;
            }
            // state-dependent weight: d/dm of r^T W(m) r, half to each node
            if let WeightKernel::Affine { offset, slope, .. } = &self.weight {
                for j in 0..d {
                    let v = offset[j] + slope[j] * mid[j].abs();
                    let dw = -2.0 * slope[j] * mid[j].signum() / (v * v * v);
                    let term = 0.25 * dt * r[j] * r[j] * dw;
                    grad[xk_off + j] += term;
                    grad[xk1_off + j] += term;
                }
            }
        }
        Ok(total)
    }
}

/// Evaluates the action of `path` under the closed loop.
pub fn action(model: &SystemModel, gains: &GainTuple, path: &DiscretePath) -> Result<ActionValue> {
    if path.len() < 2 {
        return Err(Error::InvalidInput("action needs a path with at least two nodes".into()));
    }
    if path.dim() != model.dim() {
        return Err(Error::shape(
            "path",
            format!("dimension {}", model.dim()),
            format!("{}", path.dim()),
        ));
    }
    let segments = path.len() - 1;
    let objective = ActionObjective::new(model, gains, segments, path.horizon())?;
    let nodes: Vec<f64> = path.states().iter().flatten().copied().collect();
    let mut contributions = Vec::with_capacity(segments);
    let value = objective.value(&nodes, Some(&mut contributions))?;
    Ok(ActionValue { value, contributions })
}

/// A constrained minimization instance: fixed start, optional pinned end,
/// paths confined to the closure of the domain shrunk by `margin`.
#[derive(Debug, Clone)]
pub struct MinActionProblem<'a> {
    pub model: &'a SystemModel,
    pub gains: &'a GainTuple,
    pub domain: &'a Domain,
    pub horizon: f64,
    pub segments: usize,
    pub x_start: Vec<f64>,
    pub x_end: Option<Vec<f64>>,
    pub margin: f64,
}

/// Termination data for one minimization run.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    /// "cap-reached" when the iteration budget ran out.
    pub flag: Option<String>,
    /// Gradient-projection residual `|x - proj(x - grad)|_inf` at the final
    /// point (free nodes only).
    pub residual: f64,
}

const ARMIJO_C: f64 = 1e-4;
const REL_DECREASE_TOL: f64 = 1e-10;
const STALL_LIMIT: usize = 10;

/// Projected gradient descent on the interior node coordinates.
///
/// `initial` must match the problem grid when provided; otherwise the start
/// path is a straight line to the pinned end (or constant at the start),
/// projected into the constraint set.
pub fn minimize_action(
    problem: &MinActionProblem,
    initial: Option<&DiscretePath>,
) -> Result<(DiscretePath, ActionValue, ConvergenceReport)> {
    let d = problem.model.dim();
    let n = problem.segments;
    if n < 2 {
        return Err(Error::InvalidInput("minimization needs at least 2 segments".into()));
    }
    if problem.margin < 0.0 {
        return Err(Error::InvalidInput("constraint margin must be nonnegative".into()));
    }
    let constraint = if problem.margin > 0.0 {
        problem.domain.inflate(-problem.margin)?
    } else {
        problem.domain.clone()
    };
    if !constraint.contains(&problem.x_start)? {
        return Err(Error::InvalidInput(format!(
            "x_start {:?} is not inside the shrunken domain",
            problem.x_start
        )));
    }
    if let Some(end) = &problem.x_end {
        if !constraint.contains(end)? {
            return Err(Error::InvalidInput(format!(
                "x_end {end:?} is not inside the shrunken domain"
            )));
        }
    }
    let objective = ActionObjective::new(problem.model, problem.gains, n, problem.horizon)?;
    let dt = problem.horizon / n as f64;

    let mut nodes: Vec<f64> = match initial {
        Some(path) => {
            if path.len() != n + 1 || path.dim() != d || (path.dt() - dt).abs() > 1e-9 * dt {
                return Err(Error::InvalidInput("initial path does not match the problem grid".into()));
            }
            path.states().iter().flatten().copied().collect()
        }
        None => {
            let mut v = Vec::with_capacity((n + 1) * d);
            for k in 0..=n {
                let t = k as f64 / n as f64;
                for j in 0..d {
                    let val = match &problem.x_end {
                        Some(end) => problem.x_start[j] + t * (end[j] - problem.x_start[j]),
                        None => problem.x_start[j],
                    };
                    v.push(val);
                }
            }
            v
        }
    };
    // clamp everything into the constraint set; endpoints stay fixed afterwards
    for k in 0..=n {
        constraint.project(&mut nodes[k * d..(k + 1) * d]);
    }
    nodes[..d].copy_from_slice(&problem.x_start);
    if let Some(end) = &problem.x_end {
        nodes[n * d..].copy_from_slice(end);
    }
    let free_from = d;
    let free_to = if problem.x_end.is_some() { n * d } else { (n + 1) * d };

    let mut grad = vec![0.0; (n + 1) * d];
    let mut candidate = vec![0.0; (n + 1) * d];
    let mut value = objective.value_and_grad(&nodes, &mut grad)?;

    let cap = 50 * n * d;
    let mut step = 1.0;
    let mut stall = 0usize;
    let mut iterations = 0usize;
    let mut flag = None;

    while iterations < cap {
        iterations += 1;
        let mut improved = false;
        let mut t = step;
        while t >= 1e-18 {
            candidate.copy_from_slice(&nodes);
            for i in free_from..free_to {
                candidate[i] -= t * grad[i];
            }
            for k in 1..=n {
                let off = k * d;
                if off >= free_from && off < free_to {
                    constraint.project(&mut candidate[off..off + d]);
                }
            }
            // Armijo condition on the projected step
            let mut decrement = 0.0;
            for i in free_from..free_to {
                decrement += grad[i] * (nodes[i] - candidate[i]);
            }
            if decrement <= 0.0 {
                break; // projection blocks every descent direction
            }
            let trial = objective.value(&candidate, None)?;
            if trial <= value - ARMIJO_C * decrement {
                let rel_drop = (value - trial) / value.abs().max(1e-300);
                nodes.copy_from_slice(&candidate);
                value = objective.value_and_grad(&nodes, &mut grad)?;
                step = (t * 2.0).min(1e6);
                stall = if rel_drop < REL_DECREASE_TOL { stall + 1 } else { 0 };
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            stall += 1;
            step = (step * 0.5).max(1e-12);
        }
        if stall >= STALL_LIMIT {
            break;
        }
    }
    let converged = stall >= STALL_LIMIT;
    if !converged && iterations >= cap {
        flag = Some("cap-reached".to_string());
    }

    // gradient-projection residual over free nodes
    objective.value_and_grad(&nodes, &mut grad)?;
    let mut residual: f64 = 0.0;
    candidate.copy_from_slice(&nodes);
    for i in free_from..free_to {
        candidate[i] -= grad[i];
    }
    for k in 1..=n {
        let off = k * d;
        if off >= free_from && off < free_to {
            constraint.project(&mut candidate[off..off + d]);
        }
    }
    for i in free_from..free_to {
        residual = residual.max((nodes[i] - candidate[i]).abs());
    }

    let states: Vec<Vec<f64>> = (0..=n).map(|k| nodes[k * d..(k + 1) * d].to_vec()).collect();
    let path = DiscretePath::uniform(dt, states)?;
    let mut contributions = Vec::with_capacity(n);
    let final_value = objective.value(&nodes, Some(&mut contributions))?;
    Ok((
        path,
        ActionValue { value: final_value, contributions },
        ConvergenceReport { iterations, converged, flag, residual },
    ))
}

/// Horizon-sweep settings for the variational rate.
#[derive(Debug, Clone)]
pub struct RateSweepConfig {
    /// Increasing horizons; the rate is read off the largest one.
    pub t_list: Vec<f64>,
    /// Segments per unit time (`N = n_per_time * T`).
    pub n_per_time: usize,
    /// Constant-level multi-start resolution per axis.
    pub levels_per_axis: usize,
    /// Constraint margin passed to each minimization.
    pub margin: f64,
    /// Optional endpoint-pinned refinement: levels per axis of the (x, y)
    /// grid at the largest horizon.
    pub pinned_grid: Option<usize>,
    /// Relative spread of the last two per-time values below which the sweep
    /// counts as converged.
    pub spread_tol: f64,
}

impl Default for RateSweepConfig {
    fn default() -> Self {
        RateSweepConfig {
            t_list: vec![5.0, 10.0, 20.0, 40.0],
            n_per_time: 64,
            levels_per_axis: 7,
            margin: 0.0,
            pinned_grid: None,
            spread_tol: 0.05,
        }
    }
}

/// Per-axis interior levels used for multi-start constant paths.
fn axis_levels(dom: &Domain, count: usize) -> Vec<Vec<f64>> {
    let (lo, hi): (Vec<f64>, Vec<f64>) = match dom {
        Domain::Interval { a, b } => (vec![*a], vec![*b]),
        Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
        Domain::Ball { center, radius } => (
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        ),
    };
    let d = lo.len();
    (0..d)
        .map(|j| {
            (1..=count)
                .map(|i| lo[j] + i as f64 * (hi[j] - lo[j]) / (count as f64 + 1.0))
                .collect()
        })
        .collect()
}

/// Tensor product of per-axis levels, lexicographic.
fn level_combinations(levels: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut combos = vec![Vec::new()];
    for axis in levels {
        let mut next = Vec::with_capacity(combos.len() * axis.len());
        for c in &combos {
            for &v in axis {
                let mut c2 = c.clone();
                c2.push(v);
                next.push(c2);
            }
        }
        combos = next;
    }
    combos
}

fn path_norm(path: &DiscretePath) -> f64 {
    path.states()
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Builds the multi-start initial paths for one horizon: for each interior
/// level, a short ramp from the start followed by a constant tail, plus the
/// deterministic trajectory; all nodes projected into the constraint set.
fn build_starts(
    model: &SystemModel,
    gains: &GainTuple,
    constraint: &Domain,
    x0: &[f64],
    horizon: f64,
    segments: usize,
    levels_per_axis: usize,
) -> Vec<DiscretePath> {
    let d = x0.len();
    let dt = horizon / segments as f64;
    let ramp = (segments / 8).max(1);
    let mut starts = Vec::new();
    for combo in level_combinations(&axis_levels(constraint, levels_per_axis)) {
        let mut states = Vec::with_capacity(segments + 1);
        for k in 0..=segments {
            let t = (k as f64 / ramp as f64).min(1.0);
            let mut x: Vec<f64> = (0..d).map(|j| x0[j] + t * (combo[j] - x0[j])).collect();
            constraint.project(&mut x);
            states.push(x);
        }
        if let Ok(p) = DiscretePath::uniform(dt, states) {
            starts.push(p);
        }
    }
    if let Ok(det) = simulate_deterministic(model, gains, x0, horizon, dt) {
        let mut states: Vec<Vec<f64>> = det.states().to_vec();
        for x in &mut states {
            constraint.project(x);
        }
        if states.len() == segments + 1 {
            if let Ok(p) = DiscretePath::uniform(dt, states) {
                starts.push(p);
            }
        }
    }
    starts
}

fn best_minimization(
    problem: &MinActionProblem,
    starts: &[DiscretePath],
) -> Result<(DiscretePath, ActionValue, ConvergenceReport)> {
    if starts.is_empty() {
        return minimize_action(problem, None);
    }
    let runs: Vec<Result<(DiscretePath, ActionValue, ConvergenceReport)>> =
        exec::run_indexed(starts.len(), |i| minimize_action(problem, Some(&starts[i])));
    let mut best: Option<(DiscretePath, ActionValue, ConvergenceReport)> = None;
    // deterministic tie-break: smallest action, then smallest path norm,
    // then start order
    for run in runs {
        let (path, value, report) = run?;
        let replace = match &best {
            None => true,
            Some((bp, bv, _)) => {
                value.value < bv.value
                    || (value.value == bv.value && path_norm(&path) < path_norm(bp))
            }
        };
        if replace {
            best = Some((path, value, report));
        }
    }
    Ok(best.expect("at least one start"))
}

/// Variational rate: per-horizon inner minimization with multi-start, rate
/// read as `value/T` at the largest horizon. The estimate is an upper bound
/// certified by multi-start agreement; a numerical limsup is replaced by a
/// convergence flag on the sweep tail.
pub fn asymptotic_rate(
    model: &SystemModel,
    gains: &GainTuple,
    dom: &Domain,
    x0: &[f64],
    cfg: &RateSweepConfig,
) -> Result<RateEstimate> {
    if cfg.t_list.len() < 3 {
        return Err(Error::InvalidInput("horizon sweep needs at least 3 entries".into()));
    }
    if cfg.t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("horizon sweep must be increasing".into()));
    }
    let constraint = if cfg.margin > 0.0 { dom.inflate(-cfg.margin)? } else { dom.clone() };

    let mut rows = Vec::with_capacity(cfg.t_list.len());
    for &horizon in &cfg.t_list {
        let segments = ((cfg.n_per_time as f64 * horizon).round() as usize).max(2);
        let problem = MinActionProblem {
            model,
            gains,
            domain: dom,
            horizon,
            segments,
            x_start: x0.to_vec(),
            x_end: None,
            margin: cfg.margin,
        };
        let starts = build_starts(model, gains, &constraint, x0, horizon, segments, cfg.levels_per_axis);
        let (_, value, report) = best_minimization(&problem, &starts)?;
        rows.push(SweepRow {
            horizon,
            min_action: value.value,
            action_per_time: value.value / horizon,
            converged: report.converged,
        });
    }

    let last = rows.last().unwrap();
    let prev = &rows[rows.len() - 2];
    let mut estimate = RateEstimate::new(last.action_per_time.max(0.0), RateMethod::Variational);
    let spread = (last.action_per_time - prev.action_per_time).abs()
        / last.action_per_time.abs().max(1e-12);
    let rising = last.action_per_time > prev.action_per_time + 0.02 * prev.action_per_time.abs() + 1e-9;
    let all_zero = last.action_per_time.abs() < 1e-12 && prev.action_per_time.abs() < 1e-12;
    if !all_zero && (spread > cfg.spread_tol || rising) {
        estimate.flags.push("not-converged".into());
    }
    if rows.iter().any(|r| !r.converged) {
        estimate.flags.push("cap-reached".into());
    }

    if let Some(g) = cfg.pinned_grid {
        let horizon = *cfg.t_list.last().unwrap();
        let segments = ((cfg.n_per_time as f64 * horizon).round() as usize).max(2);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = {
            let combos = level_combinations(&axis_levels(&constraint, g));
            combos
                .iter()
                .flat_map(|x| combos.iter().map(move |y| (x.clone(), y.clone())))
                .collect()
        };
        let sups: Vec<Result<f64>> = exec::run_indexed(pairs.len(), |i| {
            let (x, y) = &pairs[i];
            let problem = MinActionProblem {
                model,
                gains,
                domain: dom,
                horizon,
                segments,
                x_start: x.clone(),
                x_end: Some(y.clone()),
                margin: cfg.margin,
            };
            let starts =
                build_starts(model, gains, &constraint, x, horizon, segments, cfg.levels_per_axis.min(3));
            // pinned variants keep the endpoint: rebuild tails
            let starts: Vec<DiscretePath> = starts
                .into_iter()
                .filter_map(|p| {
                    let mut states = p.states().to_vec();
                    let n = states.len() - 1;
                    states[n] = y.clone();
                    DiscretePath::uniform(p.dt(), states).ok()
                })
                .collect();
            let (_, value, _) = best_minimization(&problem, &starts)?;
            Ok(value.value / horizon)
        });
        let mut sup: f64 = f64::NEG_INFINITY;
        for s in sups {
            sup = sup.max(s?);
        }
        estimate.pinned_sup = Some(sup);
    }

    estimate.sweep = Some(rows);
    Ok(estimate)
}

/// Endpoint-free minima on the inflated and shrunken domains and their gap;
/// the gap contracts as `delta` shrinks.
pub fn lemma3_gap(
    model: &SystemModel,
    gains: &GainTuple,
    dom: &Domain,
    x0: &[f64],
    delta: f64,
    horizon: f64,
    segments: usize,
) -> Result<(f64, f64, f64)> {
    if delta < 0.0 {
        return Err(Error::InvalidInput("delta must be nonnegative".into()));
    }
    let mut values = [0.0; 2];
    for (slot, signed) in [(0usize, -delta), (1usize, delta)] {
        let shifted = dom.inflate(signed)?;
        let problem = MinActionProblem {
            model,
            gains,
            domain: &shifted,
            horizon,
            segments,
            x_start: x0.to_vec(),
            x_end: None,
            margin: 0.0,
        };
        let starts = build_starts(model, gains, &shifted, x0, horizon, segments, 5);
        let (_, value, _) = best_minimization(&problem, &starts)?;
        values[slot] = value.value;
    }
    let (inner, outer) = (values[0], values[1]);
    Ok((inner, outer, (inner - outer).abs()))
}
