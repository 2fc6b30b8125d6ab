//! Harmony evaluation: the quadratic grammar term H, the quantization
//! penalty Q, their weighted sum, and exact first and second derivatives.
//!
//! H(y) = 1/2 y'Wy + b'y on the flattened coefficient vector
//! (index = rho * F + phi). Q is zero exactly on the grid and strictly
//! negative elsewhere; its Hessian is block-diagonal across roles.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{GscError, Result};
use crate::representation::CoefficientState;

/// Quadratic Harmony parameters (W, b). W is symmetrized on construction.
#[derive(Debug, Clone)]
pub struct HarmonyParams {
    w: DMatrix<f64>,
    b: DVector<f64>,
    asymmetry: f64,
}

impl HarmonyParams {
    pub fn new(w: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = b.len();
        if w.nrows() != n || w.ncols() != n {
            return Err(GscError::DimensionMismatch {
                expected: n,
                got: w.nrows().max(w.ncols()),
                context: "W must be N x N with N = len(b)".into(),
            });
        }
        let asymmetry = (&w - w.transpose()).abs().max();
        let w = (&w + w.transpose()) * 0.5;
        Ok(Self { w, b, asymmetry })
    }

    /// A zero form of dimension n (W = 0, b = 0).
    pub fn zeros(n: usize) -> Self {
        Self {
            w: DMatrix::zeros(n, n),
            b: DVector::zeros(n),
            asymmetry: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Largest off-diagonal asymmetry of the W given at construction.
    pub fn input_asymmetry(&self) -> f64 {
        self.asymmetry
    }

    /// Maximum eigenvalue of W, by power iteration on W + shift*I.
    /// Diagnostic only; tolerance 1e-8.
    pub fn w_max(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        // Shift so the dominant eigenvalue of the shifted matrix is the
        // maximum eigenvalue of W (Gershgorin bound makes all shifted
        // eigenvalues nonnegative).
        let shift = self
            .w
            .row_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let m = &self.w + DMatrix::identity(n, n) * shift;
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let mv = &m * &v;
            let norm = mv.norm();
            if norm == 0.0 {
                return -shift;
            }
            let next = mv / norm;
            let next_lambda = (next.transpose() * &m * &next)[(0, 0)];
            let done = (next_lambda - lambda).abs() <= 1e-8 * (1.0 + next_lambda.abs());
            v = next;
            lambda = next_lambda;
            if done {
                break;
            }
        }
        lambda - shift
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(GscError::DimensionMismatch {
                expected: self.dim(),
                got: len,
                context: "state dimension vs Harmony parameters".into(),
            });
        }
        Ok(())
    }
}

/// H(y) = 1/2 y'Wy + b'y.
pub fn grammar_harmony(p: &HarmonyParams, y: &CoefficientState) -> Result<f64> {
    p.check_dim(y.flat().len())?;
    let v = DVectorView::from_slice(y.flat(), y.flat().len());
    Ok(0.5 * (v.transpose() * p.w() * v)[(0, 0)] + p.b().dot(&v))
}

/// Q(y) = -1/2 sum_rho { [sum_phi y^2 - 1]^2 + sum_phi y^2 (1-y)^2 }.
pub fn quantization_harmony(y: &CoefficientState) -> f64 {
    let coeffs = y.coeffs();
    let mut total = 0.0;
    for col in coeffs.column_iter() {
        let norm_term: f64 = col.iter().map(|v| v * v).sum::<f64>() - 1.0;
        let binary_term: f64 = col.iter().map(|v| (v * (1.0 - v)).powi(2)).sum();
        total += norm_term * norm_term + binary_term;
    }
    -0.5 * total
}

/// Total Harmony H + qQ.
pub fn total_harmony(p: &HarmonyParams, q: f64, y: &CoefficientState) -> Result<f64> {
    if q < 0.0 {
        return Err(GscError::NegativeQ(q));
    }
    Ok(grammar_harmony(p, y)? + q * quantization_harmony(y))
}

/// grad H = Wy + b.
pub fn grad_h(p: &HarmonyParams, y: &CoefficientState) -> Result<DVector<f64>> {
    p.check_dim(y.flat().len())?;
    let v = DVectorView::from_slice(y.flat(), y.flat().len());
    Ok(p.w() * v + p.b())
}

/// hess H = W.
pub fn hess_h(p: &HarmonyParams) -> DMatrix<f64> {
    p.w().clone()
}

/// grad Q, entrywise:
/// -2 y (sum_phi' y^2 - 1) - y (1 - y)(1 - 2y).
pub fn grad_q(y: &CoefficientState) -> DMatrix<f64> {
    let coeffs = y.coeffs();
    let mut out = DMatrix::zeros(coeffs.nrows(), coeffs.ncols());
    grad_q_into(y, &mut out);
    out
}

/// In-place variant of [`grad_q`] for the integrator hot path.
pub fn grad_q_into(y: &CoefficientState, out: &mut DMatrix<f64>) {
    let coeffs = y.coeffs();
    for (rho, col) in coeffs.column_iter().enumerate() {
        let norm_term: f64 = col.iter().map(|v| v * v).sum::<f64>() - 1.0;
        for (phi, &v) in col.iter().enumerate() {
            out[(phi, rho)] = -2.0 * v * norm_term - v * (1.0 - v) * (1.0 - 2.0 * v);
        }
    }
}

/// hess Q as a dense N x N matrix (flattened indices). Zero across
/// distinct roles; within a role rho:
/// -{ 2 d_pp' (sum y^2 - 1) + 4 y_p y_p' + d_pp' [1 - 6 y_p (1 - y_p)] }.
pub fn hess_q(y: &CoefficientState) -> DMatrix<f64> {
    let coeffs = y.coeffs();
    let f = coeffs.nrows();
    let r = coeffs.ncols();
    let n = f * r;
    let mut out = DMatrix::zeros(n, n);
    for (rho, col) in coeffs.column_iter().enumerate() {
        let norm_term: f64 = col.iter().map(|v| v * v).sum::<f64>() - 1.0;
        for phi in 0..f {
            for phi2 in 0..f {
                let yp = col[phi];
                let yp2 = col[phi2];
                let mut val = 4.0 * yp * yp2;
                if phi == phi2 {
                    val += 2.0 * norm_term + 1.0 - 6.0 * yp * (1.0 - yp);
                }
                out[(rho * f + phi2, rho * f + phi)] = -val;
            }
        }
    }
    out
}

/// grad(H + qQ) as a flat vector.
pub fn grad_total(p: &HarmonyParams, q: f64, y: &CoefficientState) -> Result<DVector<f64>> {
    if q < 0.0 {
        return Err(GscError::NegativeQ(q));
    }
    let mut g = grad_h(p, y)?;
    let gq = grad_q(y);
    for (i, v) in gq.as_slice().iter().enumerate() {
        g[i] += q * v;
    }
    Ok(g)
}

/// hess(H + qQ).
pub fn hess_total(p: &HarmonyParams, q: f64, y: &CoefficientState) -> Result<DMatrix<f64>> {
    if q < 0.0 {
        return Err(GscError::NegativeQ(q));
    }
    p.check_dim(y.flat().len())?;
    Ok(p.w() + hess_q(y) * q)
}
