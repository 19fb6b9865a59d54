//! Multi-channel linear system, feedback gains, and the diffusion field.
//!
//! The plant is `dx = A x dt + sum_i B_i u_i dt + sqrt(eps) sigma(x) dW`,
//! closed by constant per-channel feedback `u_i = K_i x`. The closed-loop
//! drift is therefore `(A + sum_i B_i K_i) x`. The diffusion field must be
//! uniformly elliptic: the smallest eigenvalue of `sigma(x) sigma(x)^T` stays
//! at or above a floor `kappa` at every queried point, and every evaluation
//! carries that certificate.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Strict-inequality margin for the Hurwitz test.
pub const TOL_HURWITZ: f64 = 1e-9;

/// Diffusion field kinds supported by the toolkit.
///
/// `Constant` is an arbitrary fixed matrix; `DiagonalAffine` is the diagonal
/// state-scaled family `sigma(x) = diag(c_j + s_j * |x_j|)`.
#[derive(Debug, Clone)]
pub enum DiffusionKind {
    Constant(DMatrix<f64>),
    DiagonalAffine { offset: DVector<f64>, slope: DVector<f64> },
}

#[derive(Debug, Clone)]
pub struct DiffusionField {
    kind: DiffusionKind,
    kappa: f64,
    /// Smallest eigenvalue of sigma*sigma^T for the constant kind, computed
    /// once at construction.
    constant_certificate: Option<f64>,
}

impl DiffusionField {
    pub fn constant(sigma: DMatrix<f64>, kappa: f64) -> Result<Self> {
        if kappa <= 0.0 {
            return Err(Error::InvalidInput("kappa must be positive".into()));
        }
        if sigma.nrows() != sigma.ncols() {
            return Err(Error::shape(
                "sigma",
                "square matrix",
                format!("{}x{}", sigma.nrows(), sigma.ncols()),
            ));
        }
        let gram = &sigma * sigma.transpose();
        let cert = smallest_symmetric_eigenvalue(&gram);
        if cert < kappa {
            return Err(Error::Ellipticity {
                x: vec![0.0; sigma.nrows()],
                eigenvalue: cert,
                kappa,
            });
        }
        Ok(DiffusionField {
            kind: DiffusionKind::Constant(sigma),
            kappa,
            constant_certificate: Some(cert),
        })
    }

    pub fn diagonal_affine(offset: DVector<f64>, slope: DVector<f64>, kappa: f64) -> Result<Self> {
        if kappa <= 0.0 {
            return Err(Error::InvalidInput("kappa must be positive".into()));
        }
        if offset.len() != slope.len() {
            return Err(Error::shape(
                "sigma diagonal parameters",
                format!("slope of length {}", offset.len()),
                format!("{}", slope.len()),
            ));
        }
        let field = DiffusionField {
            kind: DiffusionKind::DiagonalAffine { offset, slope },
            kappa,
            constant_certificate: None,
        };
        // fail fast when the floor is already violated at the origin
        field.evaluate(&vec![0.0; field.dim()])?;
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DiffusionKind::Constant(s) => s.nrows(),
            DiffusionKind::DiagonalAffine { offset, .. } => offset.len(),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kind(&self) -> &DiffusionKind {
        &self.kind
    }

    /// Evaluates `sigma(x)` together with its ellipticity certificate, the
    /// smallest eigenvalue of `sigma(x) sigma(x)^T`.
    pub fn evaluate(&self, x: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        if x.len() != self.dim() {
            return Err(Error::shape("x", format!("length {}", self.dim()), format!("{}", x.len())));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite evaluation point {x:?}")));
        }
        match &self.kind {
            DiffusionKind::Constant(s) => {
                let cert = self.constant_certificate.expect("set at construction");
                Ok((s.clone(), cert))
            }
            DiffusionKind::DiagonalAffine { offset, slope } => {
                let d = offset.len();
                let mut m = DMatrix::zeros(d, d);
                let mut cert = f64::INFINITY;
                for j in 0..d {
                    let v = offset[j] + slope[j] * x[j].abs();
                    m[(j, j)] = v;
                    cert = cert.min(v * v);
                }
                if cert < self.kappa {
                    return Err(Error::Ellipticity {
                        x: x.to_vec(),
                        eigenvalue: cert,
                        kappa: self.kappa,
                    });
                }
                Ok((m, cert))
            }
        }
    }

    /// `sigma(x) sigma(x)^T` with its certificate.
    pub fn gram(&self, x: &[f64]) -> Result<(DMatrix<f64>, f64)> {
        let (s, cert) = self.evaluate(x)?;
        Ok((&s * s.transpose(), cert))
    }
}

/// The open-loop system: drift matrix, channel input maps, diffusion field.
#[derive(Debug, Clone)]
pub struct SystemModel {
    a: DMatrix<f64>,
    b: Vec<DMatrix<f64>>,
    sigma: DiffusionField,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: Vec<DMatrix<f64>>, sigma: DiffusionField) -> Result<Self> {
        let d = a.nrows();
        if d == 0 {
            return Err(Error::InvalidInput("state dimension must be at least 1".into()));
        }
        if a.ncols() != d {
            return Err(Error::shape("A", format!("{d}x{d}"), format!("{}x{}", a.nrows(), a.ncols())));
        }
        if b.is_empty() {
            return Err(Error::InvalidInput("at least one input channel is required".into()));
        }
        for (i, bi) in b.iter().enumerate() {
            if bi.nrows() != d {
                return Err(Error::shape(
                    format!("B[{i}]"),
                    format!("{d} rows"),
                    format!("{}", bi.nrows()),
                ));
            }
        }
        if sigma.dim() != d {
            return Err(Error::shape("sigma", format!("dimension {d}"), format!("{}", sigma.dim())));
        }
        Ok(SystemModel { a, b, sigma })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn channels(&self) -> usize {
        self.b.len()
    }

    /// Number of inputs on channel `i`.
    pub fn input_dim(&self, i: usize) -> usize {
        self.b[i].ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    pub fn sigma(&self) -> &DiffusionField {
        &self.sigma
    }
}

/// Constant linear feedback operators, one `r_i x d` matrix per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTuple {
    k: Vec<DMatrix<f64>>,
}

impl GainTuple {
    pub fn new(k: Vec<DMatrix<f64>>) -> Self {
        GainTuple { k }
    }

    /// All-zero gains shaped for `model` (open loop).
    pub fn zeros_for(model: &SystemModel) -> Self {
        let k = (0..model.channels())
            .map(|i| DMatrix::zeros(model.input_dim(i), model.dim()))
            .collect();
        GainTuple { k }
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.k
    }

    pub fn channels(&self) -> usize {
        self.k.len()
    }

    /// Frobenius norm of the stacked gains (the deterministic tie-breaker in
    /// gain searches).
    pub fn frobenius_norm(&self) -> f64 {
        self.k.iter().map(|m| m.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }

    fn check_shapes(&self, model: &SystemModel) -> Result<()> {
        if self.k.len() != model.channels() {
            return Err(Error::shape(
                "gain tuple",
                format!("{} channels", model.channels()),
                format!("{}", self.k.len()),
            ));
        }
        for (i, ki) in self.k.iter().enumerate() {
            let (r, d) = (model.input_dim(i), model.dim());
            if ki.nrows() != r || ki.ncols() != d {
                return Err(Error::shape(
                    format!("K[{i}]"),
                    format!("{r}x{d}"),
                    format!("{}x{}", ki.nrows(), ki.ncols()),
                ));
            }
        }
        Ok(())
    }
}

/// Closed-loop drift `A x + sum_i B_i (K_i x)`, summed in ascending channel
/// order so the result is bit-stable.
pub fn closed_loop_drift(model: &SystemModel, gains: &GainTuple, x: &[f64]) -> Result<DVector<f64>> {
    gains.check_shapes(model)?;
    if x.len() != model.dim() {
        return Err(Error::shape("x", format!("length {}", model.dim()), format!("{}", x.len())));
    }
    let xv = DVector::from_column_slice(x);
    let mut acc = &model.a * &xv;
    for (bi, ki) in model.b.iter().zip(gains.k.iter()) {
        acc += bi * (ki * &xv);
    }
    Ok(acc)
}

/// Closed-loop matrix `A + sum_i B_i K_i` (cached by the simulator, the
/// generator assembly, and the Hurwitz test).
pub fn closed_loop_matrix(model: &SystemModel, gains: &GainTuple) -> Result<DMatrix<f64>> {
    gains.check_shapes(model)?;
    let mut acc = model.a.clone();
    for (bi, ki) in model.b.iter().zip(gains.k.iter()) {
        acc += bi * ki;
    }
    Ok(acc)
}

/// True iff every eigenvalue has real part below `-TOL_HURWITZ`.
///
/// Eigenvalues come from the real Schur decomposition (QR iteration).
pub fn is_hurwitz(matrix: &DMatrix<f64>) -> Result<bool> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::shape(
            "matrix",
            "square".into(),
            format!("{}x{}", matrix.nrows(), matrix.ncols()),
        ));
    }
    if !matrix.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let eig = eigenvalues(matrix)?;
    Ok(eig.iter().all(|z| z.re < -TOL_HURWITZ))
}

/// Eigenvalues via QR iteration, with an explicit non-convergence error.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let schur = nalgebra::linalg::Schur::try_new(matrix.clone(), 1e-12, 100_000)
        .ok_or_else(|| Error::Numerical("QR eigen-iteration failed to converge".into()))?;
    let vals = schur
        .complex_eigenvalues();
    Ok(vals.iter().copied().collect())
}

/// Decay rates of a Hurwitz matrix: (slowest, fastest) magnitude of the
/// eigenvalue real parts. Used to pick invariance-check horizons.
pub fn decay_rates(matrix: &DMatrix<f64>) -> Result<(f64, f64)> {
    let eig = eigenvalues(matrix)?;
    let mut slow = f64::INFINITY;
    let mut fast: f64 = 0.0;
    for z in eig {
        slow = slow.min(z.re.abs());
        fast = fast.max(z.re.abs());
    }
    Ok((slow, fast))
}

fn smallest_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::linalg::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
