//! Symbol structures, the discrete grid, and the coefficient-space embedding.
//!
//! A structure assigns one filler to each role. Its embedding is the one-hot
//! F x R coefficient array; the set of all such embeddings is the grid. The
//! flattening convention used everywhere (for `W`, `b`, and ambient vectors)
//! is column-major over roles: index = rho * F + phi, with zero-based indices.

use nalgebra::{DMatrix, DVector};

use crate::error::{GscError, Result};

/// Default cap on grid size F^R for exhaustive operations.
pub const DEFAULT_GRID_CAP: u64 = 1_000_000;

/// Fillers, roles, and optional basis vectors defining one representation space.
#[derive(Debug, Clone)]
pub struct FillerRoleSpec {
    fillers: Vec<String>,
    roles: Vec<String>,
    filler_basis: Option<DMatrix<f64>>,
    role_basis: Option<DMatrix<f64>>,
}

impl FillerRoleSpec {
    /// Builds a spec with identity bases.
    pub fn new(fillers: Vec<String>, roles: Vec<String>) -> Result<Self> {
        Self::with_bases(fillers, roles, None, None)
    }

    /// Builds a spec with explicit basis matrices (columns are the basis vectors).
    pub fn with_bases(
        fillers: Vec<String>,
        roles: Vec<String>,
        filler_basis: Option<DMatrix<f64>>,
        role_basis: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if fillers.is_empty() {
            return Err(GscError::InvalidSpec("at least one filler required".into()));
        }
        if roles.is_empty() {
            return Err(GscError::InvalidSpec("at least one role required".into()));
        }
        check_unique(&fillers, "filler")?;
        check_unique(&roles, "role")?;
        if let Some(fb) = &filler_basis {
            check_basis(fb, fillers.len(), "filler_basis")?;
        }
        if let Some(rb) = &role_basis {
            check_basis(rb, roles.len(), "role_basis")?;
        }
        Ok(Self {
            fillers,
            roles,
            filler_basis,
            role_basis,
        })
    }

    pub fn num_fillers(&self) -> usize {
        self.fillers.len()
    }

    pub fn num_roles(&self) -> usize {
        self.roles.len()
    }

    /// N = F * R, the dimension of coefficient space.
    pub fn dim(&self) -> usize {
        self.fillers.len() * self.roles.len()
    }

    pub fn fillers(&self) -> &[String] {
        &self.fillers
    }

    pub fn roles(&self) -> &[String] {
        &self.roles
    }

    pub fn grid_size(&self) -> u128 {
        (self.fillers.len() as u128).pow(self.roles.len() as u32)
    }

    /// Human-readable label for a grid point, e.g. `"a·r1|b·r2"`.
    pub fn label(&self, g: &GridPoint) -> String {
        g.assignment()
            .iter()
            .enumerate()
            .map(|(rho, &phi)| format!("{}·{}", self.fillers[phi], self.roles[rho]))
            .collect::<Vec<_>>()
            .join("|")
    }
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(GscError::InvalidSpec(format!("duplicate {what} name: {n}")));
        }
    }
    Ok(())
}

fn check_basis(m: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(GscError::DimensionMismatch {
            expected: n,
            got: m.nrows().max(m.ncols()),
            context: format!("{what} must be {n}x{n}"),
        });
    }
    // Nonsingularity: LU with a determinant-magnitude check.
    let det = m.clone().lu().determinant();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(GscError::SingularBasis(format!(
            "{what} has |det| = {:.3e}",
            det.abs()
        )));
    }
    Ok(())
}

/// A discrete structure: one filler index per role.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridPoint {
    assignment: Vec<usize>,
}

impl GridPoint {
    pub fn new(assignment: Vec<usize>, spec: &FillerRoleSpec) -> Result<Self> {
        if assignment.len() != spec.num_roles() {
            return Err(GscError::DimensionMismatch {
                expected: spec.num_roles(),
                got: assignment.len(),
                context: "grid point assignment length".into(),
            });
        }
        if let Some(&phi) = assignment.iter().find(|&&phi| phi >= spec.num_fillers()) {
            return Err(GscError::InvalidSpec(format!(
                "filler index {phi} out of range (F = {})",
                spec.num_fillers()
            )));
        }
        Ok(Self { assignment })
    }

    /// Filler index assigned to each role, indexed by role.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn filler_for(&self, rho: usize) -> usize {
        self.assignment[rho]
    }
}

/// Continuous state: F x R coefficient array evolved by the diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientState {
    coeffs: DMatrix<f64>,
}

impl CoefficientState {
    pub fn new(coeffs: DMatrix<f64>) -> Self {
        Self { coeffs }
    }

    pub fn from_flat(flat: &[f64], spec: &FillerRoleSpec) -> Result<Self> {
        if flat.len() != spec.dim() {
            return Err(GscError::DimensionMismatch {
                expected: spec.dim(),
                got: flat.len(),
                context: "flat coefficient vector".into(),
            });
        }
        Ok(Self {
            coeffs: DMatrix::from_column_slice(spec.num_fillers(), spec.num_roles(), flat),
        })
    }

    /// The maximally uncommitted state: every entry 1/F.
    pub fn barycenter(spec: &FillerRoleSpec) -> Self {
        let f = spec.num_fillers() as f64;
        Self {
            coeffs: DMatrix::from_element(spec.num_fillers(), spec.num_roles(), 1.0 / f),
        }
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.coeffs
    }

    /// Column-major flat view (index = rho * F + phi).
    pub fn flat(&self) -> &[f64] {
        self.coeffs.as_slice()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.coeffs.as_slice())
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    /// Euclidean distance in coefficient space.
    pub fn distance(&self, other: &CoefficientState) -> f64 {
        (&self.coeffs - &other.coeffs).norm()
    }
}

/// Enumerates all F^R grid points in lexicographic order of assignment.
pub fn enumerate_grid(spec: &FillerRoleSpec, cap: u64) -> Result<Vec<GridPoint>> {
    let size = spec.grid_size();
    if size > cap as u128 {
        return Err(GscError::GridTooLarge { size, cap });
    }
    let f = spec.num_fillers();
    let r = spec.num_roles();
    let mut out = Vec::with_capacity(size as usize);
    let mut assignment = vec![0usize; r];
    loop {
        out.push(GridPoint {
            assignment: assignment.clone(),
        });
        // Lexicographic increment: last role varies fastest.
        let mut rho = r;
        loop {
            if rho == 0 {
                return Ok(out);
            }
            rho -= 1;
            assignment[rho] += 1;
            if assignment[rho] < f {
                break;
            }
            assignment[rho] = 0;
        }
    }
}

/// One-hot embedding of a grid point into coefficient space.
pub fn embed(g: &GridPoint, spec: &FillerRoleSpec) -> CoefficientState {
    let mut coeffs = DMatrix::zeros(spec.num_fillers(), spec.num_roles());
    for (rho, &phi) in g.assignment.iter().enumerate() {
        coeffs[(phi, rho)] = 1.0;
    }
    CoefficientState { coeffs }
}

/// Nearest grid point: per role, the filler with the largest coefficient.
/// Ties break toward the lowest filler index.
pub fn quantize(y: &CoefficientState) -> GridPoint {
    let coeffs = &y.coeffs;
    let assignment = (0..coeffs.ncols())
        .map(|rho| {
            let col = coeffs.column(rho);
            let mut best = 0;
            for phi in 1..col.len() {
                if col[phi] > col[best] {
                    best = phi;
                }
            }
            best
        })
        .collect();
    GridPoint { assignment }
}

/// Residuals of the grid identities: `a[(phi,rho)] = y(1-y)` per entry and
/// `b[rho] = sum_phi y^2 - 1` per role. Both vanish exactly iff y is on the grid.
pub fn grid_residual(y: &CoefficientState) -> (DMatrix<f64>, DVector<f64>) {
    let coeffs = &y.coeffs;
    let a = coeffs.map(|v| v * (1.0 - v));
    let b = DVector::from_iterator(
        coeffs.ncols(),
        coeffs
            .column_iter()
            .map(|col| col.iter().map(|v| v * v).sum::<f64>() - 1.0),
    );
    (a, b)
}

/// Expands the coefficient state into the ambient space via the Kronecker
/// products of the basis vectors: sum over (phi, rho) of y * (f_phi ⊗ r_rho).
/// With identity bases this is the flattened coefficient array.
pub fn embed_to_ambient(y: &CoefficientState, spec: &FillerRoleSpec) -> DVector<f64> {
    let f = spec.num_fillers();
    let r = spec.num_roles();
    let n = f * r;
    match (&spec.filler_basis, &spec.role_basis) {
        (None, None) => y.to_vector(),
        _ => {
            let id_f = DMatrix::identity(f, f);
            let id_r = DMatrix::identity(r, r);
            let fb = spec.filler_basis.as_ref().unwrap_or(&id_f);
            let rb = spec.role_basis.as_ref().unwrap_or(&id_r);
            let mut out = DVector::zeros(n);
            for rho in 0..r {
                for phi in 0..f {
                    let c = y.coeffs[(phi, rho)];
                    if c == 0.0 {
                        continue;
                    }
                    let fv = fb.column(phi);
                    let rv = rb.column(rho);
                    // Kronecker product f ⊗ r laid out role-major to match
                    // the coefficient flattening.
                    for (j, rj) in rv.iter().enumerate() {
                        for (i, fi) in fv.iter().enumerate() {
                            out[j * f + i] += c * fi * rj;
                        }
                    }
                }
            }
            out
        }
    }
}
