//! Trajectory simulation and Monte Carlo exit statistics.
//!
//! The perturbed system is integrated by Euler-Maruyama,
//!
//! ```text
//! x_{k+1} = x_k + f(x_k) dt + sqrt(eps * dt) * sigma(x_k) * xi_k
//! ```
//!
//! with `f` the closed-loop drift and `xi_k` a standard normal vector drawn
//! from the counter-based stream `(seed, stream_id)`. A trajectory stops at
//! the first non-interior step; the exit time is refined by linear
//! interpolation of the signed boundary distance across the crossing step.
//! No Brownian-bridge correction is applied, so exit times carry an
//! `O(sqrt(dt))` bias; tolerances downstream absorb it at small `dt`.
//!
//! Ensembles assign trajectory `j` the stream `stream_id + j` and reduce in
//! stream order, which keeps every estimator bit-reproducible regardless of
//! the number of threads.

use crate::domain::{Domain, GridSpec};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{
    closed_loop_matrix, decay_rates, is_hurwitz, DiffusionKind, GainTuple, SystemModel,
};
use crate::path::DiscretePath;
use crate::rate::{RateEstimate, RateMethod};
use crate::rng::CounterRng;

/// 97.5% normal quantile; Wilson intervals below are 95% two-sided.
const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Blow-up guard for trajectory states.
const BLOWUP_NORM: f64 = 1e12;

/// Monte Carlo integration settings for one stream.
#[derive(Debug, Clone)]
pub struct SdeConfig {
    /// Noise level (dimensionless).
    pub epsilon: f64,
    /// Time step.
    pub dt: f64,
    /// Horizon cap; the realized horizon is rounded to a whole number of
    /// steps.
    pub t_max: f64,
    /// Global seed.
    pub seed: u64,
    /// Stream index for this trajectory (ensembles use consecutive streams).
    pub stream_id: u64,
}

impl SdeConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_max < self.dt {
            return Err(Error::InvalidInput(format!(
                "t_max {} must be at least dt {}",
                self.t_max, self.dt
            )));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        ((self.t_max / self.dt).round() as usize).max(1)
    }
}

/// Outcome of one trajectory: whether it left the domain, when, and where.
#[derive(Debug, Clone)]
pub struct ExitSample {
    pub exited: bool,
    /// Exit time estimate; equals the realized horizon when not exited.
    pub tau: f64,
    /// State at the interpolated crossing, or at the horizon cap.
    pub x_exit: Vec<f64>,
}

/// Precomputed closed-loop drift and diffusion for the hot loop.
struct Kernel {
    dim: usize,
    /// Closed-loop matrix, row-major.
    loop_matrix: Vec<f64>,
    sigma: SigmaKernel,
}

enum SigmaKernel {
    Dense(Vec<f64>),
    Diagonal(Vec<f64>),
    /// diag(c_j + s_j |x_j|), certificate checked at every step against kappa.
    Affine { offset: Vec<f64>, slope: Vec<f64>, kappa: f64 },
}

impl Kernel {
    fn new(model: &SystemModel, gains: &GainTuple) -> Result<Self> {
        let m = closed_loop_matrix(model, gains)?;
        let d = model.dim();
        let loop_matrix: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
        let sigma = match model.sigma().kind() {
            DiffusionKind::Constant(s) => {
                let diag_only = (0..d).all(|i| (0..d).all(|j| i == j || s[(i, j)] == 0.0));
                if diag_only {
                    SigmaKernel::Diagonal((0..d).map(|i| s[(i, i)]).collect())
                } else {
                    SigmaKernel::Dense(
                        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| s[(i, j)]).collect(),
                    )
                }
            }
            DiffusionKind::DiagonalAffine { offset, slope } => SigmaKernel::Affine {
                offset: offset.iter().copied().collect(),
                slope: slope.iter().copied().collect(),
                kappa: model.sigma().kappa(),
            },
        };
        Ok(Kernel { dim: d, loop_matrix, sigma })
    }

    #[inline]
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.loop_matrix[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for j in 0..d {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
    }

    /// `out = sigma(x) * z`, checking the ellipticity certificate where it is
    /// state-dependent.
    #[inline]
    fn noise_into(&self, x: &[f64], z: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        match &self.sigma {
            SigmaKernel::Dense(s) => {
                for i in 0..d {
                    let row = &s[i * d..(i + 1) * d];
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += row[j] * z[j];
                    }
                    out[i] = acc;
                }
            }
            SigmaKernel::Diagonal(diag) => {
                for i in 0..d {
                    out[i] = diag[i] * z[i];
                }
            }
            SigmaKernel::Affine { offset, slope, kappa } => {
                let mut cert = f64::INFINITY;
                for i in 0..d {
                    let v = offset[i] + slope[i] * x[i].abs();
                    cert = cert.min(v * v);
                    out[i] = v * z[i];
                }
                if cert < *kappa {
                    return Err(Error::Ellipticity {
                        x: x.to_vec(),
                        eigenvalue: cert,
                        kappa: *kappa,
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    let norm_sq: f64 = x.iter().map(|v| v * v).sum();
    if !norm_sq.is_finite() || norm_sq > BLOWUP_NORM * BLOWUP_NORM {
        return Err(Error::NonFinite {
            step,
            detail: format!("state norm {}", norm_sq.sqrt()),
        });
    }
    Ok(())
}

/// Shared trajectory driver. `domain = None` integrates freely to the
/// horizon; `Some` stops at the first exit. `record` collects the uniform
/// interior prefix of the path.
fn run_trajectory(
    kernel: &Kernel,
    domain: Option<&Domain>,
    cfg: &SdeConfig,
    x0: &[f64],
    mut record: Option<&mut Vec<Vec<f64>>>,
    mut observer: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<ExitSample> {
    let d = kernel.dim;
    let n_steps = cfg.steps();
    let rng = CounterRng::new(cfg.seed, cfg.stream_id);
    let sqrt_eps_dt = (cfg.epsilon * cfg.dt).sqrt();

    let mut x = x0.to_vec();
    let mut drift = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut prev = vec![0.0; d];

    let mut dist_prev = match domain {
        Some(dom) => dom.boundary_distance(&x)?,
        None => f64::INFINITY,
    };
    if let Some(rec) = record.as_deref_mut() {
        rec.push(x.clone());
    }
    if let Some(obs) = observer.as_deref_mut() {
        obs(0, &x);
    }

    for k in 0..n_steps {
        kernel.drift_into(&x, &mut drift);
        for j in 0..d {
            z[j] = rng.normal(k as u64 * d as u64 + j as u64);
        }
        kernel.noise_into(&x, &z, &mut noise)?;
        prev.copy_from_slice(&x);
        for j in 0..d {
            x[j] += drift[j] * cfg.dt + sqrt_eps_dt * noise[j];
        }
        check_finite(&x, k + 1)?;

        if let Some(dom) = domain {
            let dist = dom.signed_distance_unchecked(&x);
            if dist <= 0.0 {
                // linear interpolation of the signed distance across the step
                let theta = if dist_prev - dist > 0.0 {
                    (dist_prev / (dist_prev - dist)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let tau = (k as f64 + theta) * cfg.dt;
                let x_exit: Vec<f64> =
                    (0..d).map(|j| prev[j] + theta * (x[j] - prev[j])).collect();
                return Ok(ExitSample { exited: true, tau, x_exit });
            }
            dist_prev = dist;
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.push(x.clone());
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(k + 1, &x);
        }
    }
    Ok(ExitSample {
        exited: false,
        tau: n_steps as f64 * cfg.dt,
        x_exit: x,
    })
}

/// Integrates the perturbed closed loop inside `dom` until exit or the
/// horizon cap. Returns the recorded path (uniform grid, truncated at the
/// last interior node) and the exit sample with the interpolated crossing.
///
/// Deterministic: identical `(seed, stream_id, config)` reproduce the output
/// bit for bit.
pub fn simulate_sde(
    model: &SystemModel,
    gains: &GainTuple,
    dom: &Domain,
    cfg: &SdeConfig,
    x0: &[f64],
) -> Result<(DiscretePath, ExitSample)> {
    cfg.validate()?;
    if !dom.contains(x0)? {
        return Err(Error::InvalidInput(format!("x0 {x0:?} is not strictly inside the domain")));
    }
    let kernel = Kernel::new(model, gains)?;
    let mut states = Vec::new();
    let sample = run_trajectory(&kernel, Some(dom), cfg, x0, Some(&mut states), None)?;
    let path = DiscretePath::uniform(cfg.dt, states)?;
    Ok((path, sample))
}

/// Exit sample only (no path recording); the hot path for ensembles.
pub fn first_exit(
    model: &SystemModel,
    gains: &GainTuple,
    dom: &Domain,
    cfg: &SdeConfig,
    x0: &[f64],
) -> Result<ExitSample> {
    cfg.validate()?;
    if !dom.contains(x0)? {
        return Err(Error::InvalidInput(format!("x0 {x0:?} is not strictly inside the domain")));
    }
    let kernel = Kernel::new(model, gains)?;
    run_trajectory(&kernel, Some(dom), cfg, x0, None, None)
}

/// Free-space integration (no exit detection), recording the full path.
/// Used by the large-deviation tube estimates.
pub fn simulate_free(
    model: &SystemModel,
    gains: &GainTuple,
    cfg: &SdeConfig,
    x0: &[f64],
) -> Result<DiscretePath> {
    cfg.validate()?;
    let kernel = Kernel::new(model, gains)?;
    let mut states = Vec::new();
    run_trajectory(&kernel, None, cfg, x0, Some(&mut states), None)?;
    DiscretePath::uniform(cfg.dt, states)
}

/// Classical RK4 integration of the deterministic closed loop.
pub fn simulate_deterministic(
    model: &SystemModel,
    gains: &GainTuple,
    x0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<DiscretePath> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) {
        return Err(Error::InvalidInput(format!("horizon {horizon} must be at least dt {dt}")));
    }
    let kernel = Kernel::new(model, gains)?;
    let d = kernel.dim;
    if x0.len() != d {
        return Err(Error::shape("x0", format!("length {d}"), format!("{}", x0.len())));
    }
    let n_steps = ((horizon / dt).round() as usize).max(1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut x = x0.to_vec();
    states.push(x.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for step in 0..n_steps {
        kernel.drift_into(&x, &mut k1);
        for j in 0..d {
            tmp[j] = x[j] + 0.5 * dt * k1[j];
        }
        kernel.drift_into(&tmp, &mut k2);
        for j in 0..d {
            tmp[j] = x[j] + 0.5 * dt * k2[j];
        }
        kernel.drift_into(&tmp, &mut k3);
        for j in 0..d {
            tmp[j] = x[j] + dt * k3[j];
        }
        kernel.drift_into(&tmp, &mut k4);
        for j in 0..d {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        check_finite(&x, step + 1)?;
        states.push(x.clone());
    }
    DiscretePath::uniform(dt, states)
}

/// Survival curve with Wilson confidence intervals.
#[derive(Debug, Clone)]
pub struct SurvivalEstimate {
    pub horizons: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub n_trajectories: usize,
    pub epsilon: f64,
    pub warnings: Vec<String>,
}

impl SurvivalEstimate {
    /// Delta-method standard error of `p_hat` at index `i`, from the Wilson
    /// half-width. Nonzero even with zero observed survivors.
    pub fn std_error(&self, i: usize) -> f64 {
        (self.ci_hi[i] - self.ci_lo[i]) / (2.0 * WILSON_Z)
    }
}

pub(crate) fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Estimates `P{tau > T}` for each horizon in `t_list` from `n_traj`
/// trajectories on consecutive streams. One trajectory pass serves every
/// horizon, so the curve is monotone nonincreasing by construction.
pub fn estimate_survival(
    model: &SystemModel,
    gains: &GainTuple,
    dom: &Domain,
    cfg: &SdeConfig,
    x0: &[f64],
    t_list: &[f64],
    n_traj: usize,
) -> Result<SurvivalEstimate> {
    if n_traj < 100 {
        return Err(Error::InvalidInput(format!(
            "n_traj must be at least 100, got {n_traj}"
        )));
    }
    if t_list.is_empty() {
        return Err(Error::InvalidInput("t_list is empty".into()));
    }
    if t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("t_list must be strictly increasing".into()));
    }
    let t_last = *t_list.last().unwrap();
    if t_last > cfg.t_max + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "t_list entry {t_last} exceeds t_max {}",
            cfg.t_max
        )));
    }
    cfg.validate()?;
    if !dom.contains(x0)? {
        return Err(Error::InvalidInput(format!("x0 {x0:?} is not strictly inside the domain")));
    }
    let kernel = Kernel::new(model, gains)?;

    // one (exited, tau) per trajectory, collected in stream order
    let outcomes: Vec<Result<(bool, f64)>> = exec::run_indexed(n_traj, |j| {
        let cfg_j = SdeConfig {
            stream_id: cfg.stream_id.wrapping_add(j as u64),
            ..cfg.clone()
        };
        run_trajectory(&kernel, Some(dom), &cfg_j, x0, None, None)
            .map(|s| (s.exited, s.tau))
    });

    let mut taus = Vec::with_capacity(n_traj);
    for r in outcomes {
        taus.push(r?);
    }

    let mut p_hat = Vec::with_capacity(t_list.len());
    let mut ci_lo = Vec::with_capacity(t_list.len());
    let mut ci_hi = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let survived = taus
            .iter()
            .filter(|(exited, tau)| !exited || *tau > t)
            .count();
        let (lo, hi) = wilson_interval(survived, n_traj);
        p_hat.push(survived as f64 / n_traj as f64);
        ci_lo.push(lo);
        ci_hi.push(hi);
    }
    let mut warnings = Vec::new();
    if p_hat[0] == 0.0 {
        warnings.push("degenerate-estimate: zero survivors at the smallest horizon".into());
    }
    Ok(SurvivalEstimate {
        horizons: t_list.to_vec(),
        p_hat,
        ci_lo,
        ci_hi,
        n_trajectories: n_traj,
        epsilon: cfg.epsilon,
        warnings,
    })
}

/// Exit rate estimate: weighted least-squares slope of `-log p(T)` over the
/// pure-exponential tail window `0.001 <= p <= 0.5` (early horizons are
/// contaminated by the eigenfunction transient). Weights are delta-method
/// variances of `log p`.
pub fn exit_rate_mc(survival: &SurvivalEstimate) -> Result<RateEstimate> {
    let mut est = RateEstimate::new(0.0, RateMethod::Mc);
    est.epsilon = Some(survival.epsilon);

    if survival.p_hat.iter().all(|&p| p >= 1.0) {
        est.flags.push("no-exit-observed".into());
        return Ok(est);
    }
    let positive = survival.p_hat.iter().filter(|&&p| p > 0.0).count();
    if positive < 3 {
        return Err(Error::InvalidInput(format!(
            "exit-rate fit needs at least 3 horizons with positive survival, got {positive}"
        )));
    }

    let in_window = |p: f64| (0.001..=0.5).contains(&p);
    let mut idx: Vec<usize> = (0..survival.p_hat.len())
        .filter(|&i| in_window(survival.p_hat[i]))
        .collect();
    if idx.len() < 3 {
        idx = (0..survival.p_hat.len())
            .filter(|&i| survival.p_hat[i] > 0.0 && survival.p_hat[i] < 1.0)
            .collect();
        est.flags.push("window-fallback".into());
    }
    if idx.len() < 3 {
        return Err(Error::InvalidInput(
            "fewer than 3 usable horizons in the fit window".into(),
        ));
    }

    let n = survival.n_trajectories as f64;
    let mut sw = 0.0;
    let mut swt = 0.0;
    let mut swy = 0.0;
    let pts: Vec<(f64, f64, f64)> = idx
        .iter()
        .map(|&i| {
            let p = survival.p_hat[i];
            let t = survival.horizons[i];
            let y = -p.ln();
            let var = (1.0 - p) / (n * p);
            (t, y, 1.0 / var.max(1e-300))
        })
        .collect();
    for &(t, y, w) in &pts {
        sw += w;
        swt += w * t;
        swy += w * y;
    }
    let tbar = swt / sw;
    let ybar = swy / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(t, y, w) in &pts {
        sxx += w * (t - tbar) * (t - tbar);
        sxy += w * (t - tbar) * (y - ybar);
    }
    if sxx <= 0.0 {
        return Err(Error::Numerical("degenerate horizon spread in rate fit".into()));
    }
    let slope = sxy / sxx;
    if slope < 0.0 {
        est.flags.push("negative-slope-clamped".into());
    }
    est.value = slope.max(0.0);
    est.std_error = Some((1.0 / sxx).sqrt());
    Ok(est)
}

/// Invariance-check knobs. Defaults: shrink by 5% of the inradius, 5 grid
/// starts per axis, horizon 50 slow time constants (or 50 time units when the
/// loop is not Hurwitz), automatic step size.
#[derive(Debug, Clone)]
pub struct InvarianceConfig {
    pub delta_frac: f64,
    pub points_per_axis: usize,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    /// Explicit start points, overriding the grid.
    pub start_points: Option<Vec<Vec<f64>>>,
}

impl Default for InvarianceConfig {
    fn default() -> Self {
        InvarianceConfig {
            delta_frac: 0.05,
            points_per_axis: 5,
            horizon: None,
            dt: None,
            start_points: None,
        }
    }
}

/// Evidence verdict for nonemptiness of the maximum closed invariant set of
/// the deterministic closed loop inside the domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvariantVerdict {
    /// Closed loop Hurwitz and the origin interior: a small invariant
    /// ellipsoid around the origin exists inside the domain.
    YesByHurwitz,
    /// Every sampled start stayed inside the shrunken domain over the check
    /// horizon. Evidence, not proof.
    YesBySimulation { omega: String },
    /// Some sampled start left; no invariance evidence found.
    NoEvidence,
}

impl InvariantVerdict {
    /// Ranking class for gain searches: stronger confinement evidence first.
    pub fn class_rank(&self) -> u8 {
        match self {
            InvariantVerdict::YesByHurwitz => 0,
            InvariantVerdict::YesBySimulation { .. } => 1,
            InvariantVerdict::NoEvidence => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            InvariantVerdict::YesByHurwitz => "yes-by-hurwitz",
            InvariantVerdict::YesBySimulation { .. } => "yes-by-simulation",
            InvariantVerdict::NoEvidence => "no-evidence",
        }
    }
}

/// Decides nonemptiness of the maximum closed invariant set.
///
/// Shortcut: Hurwitz closed loop with the origin in the domain interior.
/// Otherwise the deterministic flow is integrated from a grid of starts in
/// the shrunken domain; the verdict is affirmative only when every start
/// remains there for the whole horizon (the invariance property quantifies
/// over all starts in the candidate set).
pub fn invariant_set_nonempty(
    model: &SystemModel,
    gains: &GainTuple,
    dom: &Domain,
    check: &InvarianceConfig,
) -> Result<InvariantVerdict> {
    let m = closed_loop_matrix(model, gains)?;
    let origin = vec![0.0; model.dim()];
    let hurwitz = is_hurwitz(&m)?;
    if hurwitz && dom.contains(&origin)? {
        return Ok(InvariantVerdict::YesByHurwitz);
    }

    let delta = check.delta_frac * dom.inradius();
    let omega = dom.inflate(-delta).map_err(|_| {
        Error::InvalidInput(format!(
            "invariance check: shrinking the domain by {delta} empties it"
        ))
    })?;
    let starts: Vec<Vec<f64>> = match &check.start_points {
        Some(pts) => pts.clone(),
        None => omega
            .interior_grid(&GridSpec::new(check.points_per_axis))?
            .points()
            .to_vec(),
    };
    if starts.is_empty() {
        return Err(Error::InvalidInput("invariance check has no start points".into()));
    }

    let horizon = check.horizon.unwrap_or_else(|| {
        if hurwitz {
            let (slow, _) = decay_rates(&m).unwrap_or((1.0, 1.0));
            50.0 / slow.max(1e-6)
        } else {
            50.0
        }
    });
    let m_norm = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let dt = check.dt.unwrap_or_else(|| (0.2 / (1.0 + m_norm)).min(0.01));

    let all_stay = starts.iter().all(|x0| {
        match simulate_deterministic(model, gains, x0, horizon, dt) {
            Err(_) => false, // blow-up counts as leaving
            Ok(path) => path
                .states()
                .iter()
                .all(|x| omega.signed_distance_unchecked(x) >= -1e-12),
        }
    });
    if all_stay {
        Ok(InvariantVerdict::YesBySimulation {
            omega: format!(
                "{} start(s) in the domain shrunk by {delta:.6} stayed for horizon {horizon:.3}",
                starts.len()
            ),
        })
    } else {
        Ok(InvariantVerdict::NoEvidence)
    }
}

/// Monte Carlo estimate of the tube probability
/// `P{ sup_t |x(t) - phi(t)| < delta }` for the free-space diffusion started
/// at `phi(0)`. Returns `(p_hat, ci_lo, ci_hi)`.
pub fn tube_probability(
    model: &SystemModel,
    gains: &GainTuple,
    cfg: &SdeConfig,
    phi: &DiscretePath,
    delta: f64,
    n_traj: usize,
) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    if (phi.dt() - cfg.dt).abs() > 1e-12 {
        return Err(Error::InvalidInput(
            "reference path must be sampled on the integration grid".into(),
        ));
    }
    let kernel = Kernel::new(model, gains)?;
    let d = kernel.dim;
    let x0 = phi.state(0).to_vec();
    let n_steps = phi.len() - 1;
    let cfg_base = SdeConfig { t_max: n_steps as f64 * cfg.dt, ..cfg.clone() };

    let hits: Vec<Result<bool>> = exec::run_indexed(n_traj, |j| {
        let cfg_j = SdeConfig {
            stream_id: cfg_base.stream_id.wrapping_add(j as u64),
            ..cfg_base.clone()
        };
        let mut inside = true;
        let mut check = |k: usize, x: &[f64]| {
            if !inside {
                return;
            }
            let mut dist_sq = 0.0;
            for i in 0..d {
                let diff = x[i] - phi.state(k)[i];
                dist_sq += diff * diff;
            }
            if dist_sq >= delta * delta {
                inside = false;
            }
        };
        run_trajectory(&kernel, None, &cfg_j, &x0, None, Some(&mut check))?;
        Ok(inside)
    });
    let mut stayed = 0usize;
    for h in hits {
        if h? {
            stayed += 1;
        }
    }
    let (lo, hi) = wilson_interval(stayed, n_traj);
    Ok((stayed as f64 / n_traj as f64, lo, hi))
}

/// Monte Carlo estimate of `P{ max over members of sup-distance >= delta }`
/// for a finite path family with a common grid.
pub fn d0t_tail_probability(
    model: &SystemModel,
    gains: &GainTuple,
    cfg: &SdeConfig,
    x0: &[f64],
    members: &[DiscretePath],
    delta: f64,
    n_traj: usize,
) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidInput("path family is empty".into()))?;
    if members.iter().any(|m| !m.same_grid(first)) {
        return Err(Error::InvalidInput("path family members have mismatched grids".into()));
    }
    if (first.dt() - cfg.dt).abs() > 1e-12 {
        return Err(Error::InvalidInput(
            "path family must be sampled on the integration grid".into(),
        ));
    }
    let kernel = Kernel::new(model, gains)?;
    let d = kernel.dim;
    let n_steps = first.len() - 1;
    let cfg_base = SdeConfig { t_max: n_steps as f64 * cfg.dt, ..cfg.clone() };

    let hits: Vec<Result<bool>> = exec::run_indexed(n_traj, |j| {
        let cfg_j = SdeConfig {
            stream_id: cfg_base.stream_id.wrapping_add(j as u64),
            ..cfg_base.clone()
        };
        let mut exceeded = false;
        let mut check = |k: usize, x: &[f64]| {
            if exceeded {
                return;
            }
            for m in members {
                let mut dist_sq = 0.0;
                for i in 0..d {
                    let diff = x[i] - m.state(k)[i];
                    dist_sq += diff * diff;
                }
                if dist_sq >= delta * delta {
                    exceeded = true;
                    return;
                }
            }
        };
        run_trajectory(&kernel, None, &cfg_j, x0, None, Some(&mut check))?;
        Ok(exceeded)
    });
    let mut count = 0usize;
    for h in hits {
        if h? {
            count += 1;
        }
    }
    let (lo, hi) = wilson_interval(count, n_traj);
    Ok((count as f64 / n_traj as f64, lo, hi))
}
