//! Affine symmetric-matrix-valued maps and strict negative-definiteness.
//!
//! An [`AffineLmi`] is a block-diagonal map `x ↦ diag(M_b(x))` where every
//! block is affine in the shared decision vector `x`. Feasibility means the
//! whole stack is negative definite with a declared margin.

mod solver;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Matrix};
use crate::scalar::{tol, Real};

pub use solver::{
    solve_feasibility, solve_feasibility_with, FeasibilityResult, FeasibilityStatus,
    SolverDiagnostics, SolverOptions,
};

/// Default margin for strict inequalities.
pub const DEFAULT_MARGIN_TOL: f64 = 1e-7;
/// Default lower bound for positivity-flagged variables.
pub const DEFAULT_POS_TOL: f64 = 1e-8;
/// Asymmetry accepted (relative to scale) before symmetrizing.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Square matrix known to be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T>(Matrix<T>);

impl<T: Real> SymMatrix<T> {
    /// Checks symmetry to [`SYMMETRY_TOL`] (relative to the largest entry),
    /// then stores the exact symmetric part.
    pub fn new(m: Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dimension("symmetric matrix (square)", m.rows(), m.cols()));
        }
        let scale = m.max_abs() + T::one();
        if m.asymmetry() > tol::<T>(SYMMETRY_TOL) * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric (asymmetry {})",
                m.asymmetry()
            )));
        }
        Ok(Self(m.symmetrized()))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix<T> {
        self.0
    }
}

/// `-λ_max(M)`; positive exactly when `M` is negative definite.
pub fn negdef_margin<T: Real>(m: &SymMatrix<T>) -> Result<T> {
    if m.dim() == 0 {
        return Ok(T::infinity());
    }
    let eig = sym_eigen(m.as_matrix())?;
    Ok(-*eig.values.last().unwrap())
}

/// Eliminates the trailing `dim - keep` rows and columns:
/// `A - B D⁻¹ Bᵀ` for `M = [[A, B], [Bᵀ, D]]`, requiring `D ≺ 0`.
pub fn schur_reduce<T: Real>(m: &SymMatrix<T>, keep: usize) -> Result<SymMatrix<T>> {
    let n = m.dim();
    if keep > n {
        return Err(Error::dimension("Schur partition", n, keep));
    }
    let mm = m.as_matrix();
    let rest = n - keep;
    let a = mm.block(0, 0, keep, keep);
    if rest == 0 {
        return Ok(SymMatrix(a));
    }
    let b = mm.block(0, keep, keep, rest);
    let d = SymMatrix(mm.block(keep, keep, rest, rest));
    let margin = negdef_margin(&d)?;
    if margin <= T::zero() {
        return Err(Error::BlockNotNegativeDefinite {
            margin: crate::scalar::to_f64(margin),
        });
    }
    // D⁻¹ = -(-D)⁻¹ with -D positive definite.
    let neg_d_inv = crate::linalg::spd_inverse(&-d.as_matrix())?;
    let correction = &(&b * &neg_d_inv) * &b.transpose();
    Ok(SymMatrix((&a + &correction).symmetrized()))
}

/// One scalar decision variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub label: String,
    /// Required strictly positive (at least `pos_tol`).
    pub positive: bool,
}

impl Variable {
    pub fn free(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            positive: false,
        }
    }

    pub fn positive(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            positive: true,
        }
    }
}

/// A run of variables that together form a symmetric matrix which must be
/// positive definite. Entries are the upper triangle in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymVarBlock {
    pub label: String,
    pub dim: usize,
    pub first: usize,
}

impl SymVarBlock {
    pub fn len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    /// Variable index of entry `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // Row i of the upper triangle starts after i rows of decreasing length.
        self.first + i * self.dim - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub fn matrix<T: Real>(&self, x: &[T]) -> Matrix<T> {
        Matrix::from_fn(self.dim, self.dim, |i, j| x[self.index(i, j)])
    }
}

/// One diagonal block of an [`AffineLmi`].
#[derive(Debug, Clone)]
pub struct AffineBlock<T> {
    pub label: String,
    pub constant: SymMatrix<T>,
    /// One coefficient per variable; `None` when the variable is absent.
    pub coefficients: Vec<Option<SymMatrix<T>>>,
}

impl<T: Real> AffineBlock<T> {
    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    pub fn eval(&self, x: &[T]) -> Matrix<T> {
        let mut out = self.constant.as_matrix().clone();
        for (c, &xj) in self.coefficients.iter().zip(x) {
            if let Some(c) = c {
                out.axpy(xj, c.as_matrix());
            }
        }
        out
    }
}

/// Block-diagonal affine map from decision variables to symmetric matrices.
#[derive(Debug, Clone)]
pub struct AffineLmi<T> {
    variables: Vec<Variable>,
    blocks: Vec<AffineBlock<T>>,
    structures: Vec<SymVarBlock>,
    initial: Option<Vec<T>>,
}

impl<T: Real> AffineLmi<T> {
    pub fn new(variables: Vec<Variable>) -> Self {
        Self {
            variables,
            blocks: Vec::new(),
            structures: Vec::new(),
            initial: None,
        }
    }

    /// Single-block map `M0 + Σ x_j M_j` with free variables.
    pub fn single(constant: Matrix<T>, coefficients: Vec<Matrix<T>>) -> Result<Self> {
        let vars = (0..coefficients.len())
            .map(|j| Variable::free(format!("x{}", j + 1)))
            .collect();
        let mut lmi = Self::new(vars);
        lmi.add_block("M", constant, coefficients.into_iter().map(Some).collect())?;
        Ok(lmi)
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variables_mut(&mut self) -> &mut [Variable] {
        &mut self.variables
    }

    pub fn blocks(&self) -> &[AffineBlock<T>] {
        &self.blocks
    }

    pub fn structures(&self) -> &[SymVarBlock] {
        &self.structures
    }

    /// Total dimension of the block-diagonal value.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(AffineBlock::dim).sum()
    }

    pub fn add_structure(&mut self, s: SymVarBlock) -> Result<()> {
        if s.first + s.len() > self.variables.len() {
            return Err(Error::dimension(
                "structural block",
                self.variables.len(),
                s.first + s.len(),
            ));
        }
        self.structures.push(s);
        Ok(())
    }

    /// Appends a block given its constant and per-variable coefficients.
    pub fn add_block(
        &mut self,
        label: impl Into<String>,
        constant: Matrix<T>,
        coefficients: Vec<Option<Matrix<T>>>,
    ) -> Result<()> {
        if coefficients.len() != self.variables.len() {
            return Err(Error::dimension(
                "coefficient count",
                self.variables.len(),
                coefficients.len(),
            ));
        }
        let constant = SymMatrix::new(constant)?;
        let dim = constant.dim();
        let coefficients = coefficients
            .into_iter()
            .map(|c| match c {
                Some(c) if c.shape() != (dim, dim) => {
                    Err(Error::dimension("coefficient block", dim, c.rows()))
                }
                Some(c) if c.is_zero() => Ok(None),
                Some(c) => SymMatrix::new(c).map(Some),
                None => Ok(None),
            })
            .collect::<Result<_>>()?;
        self.blocks.push(AffineBlock {
            label: label.into(),
            constant,
            coefficients,
        });
        Ok(())
    }

    /// Appends a block from an affine function of `x`, reading off the
    /// constant at `x = 0` and each coefficient from the unit vectors.
    pub fn add_block_fn(
        &mut self,
        label: impl Into<String>,
        f: impl Fn(&[T]) -> Matrix<T>,
    ) -> Result<()> {
        let v = self.variables.len();
        let mut x = vec![T::zero(); v];
        let constant = f(&x);
        let mut coefficients = Vec::with_capacity(v);
        for j in 0..v {
            x[j] = T::one();
            let mj = &f(&x) - &constant;
            x[j] = T::zero();
            coefficients.push(Some(mj));
        }
        self.add_block(label, constant, coefficients)
    }

    pub fn set_initial_point(&mut self, x: Vec<T>) -> Result<()> {
        if x.len() != self.variables.len() {
            return Err(Error::dimension("initial point", self.variables.len(), x.len()));
        }
        self.initial = Some(x);
        Ok(())
    }

    /// Explicit initial point, or zeros with identity structural blocks and
    /// unit positive variables.
    pub fn initial_point(&self) -> Vec<T> {
        if let Some(x) = &self.initial {
            return x.clone();
        }
        let mut x: Vec<T> = self
            .variables
            .iter()
            .map(|v| if v.positive { T::one() } else { T::zero() })
            .collect();
        for s in &self.structures {
            for i in 0..s.dim {
                x[s.index(i, i)] = T::one();
            }
        }
        x
    }

    fn check_len(&self, x: &[T]) -> Result<()> {
        if x.len() != self.variables.len() {
            return Err(Error::dimension(
                "decision vector",
                self.variables.len(),
                x.len(),
            ));
        }
        Ok(())
    }

    /// `M0 + Σ x_j M_j` as the full block-diagonal matrix.
    pub fn eval(&self, x: &[T]) -> Result<SymMatrix<T>> {
        self.check_len(x)?;
        let blocks: Vec<Matrix<T>> = self.blocks.iter().map(|b| b.eval(x)).collect();
        Ok(SymMatrix(Matrix::block_diag(&blocks)))
    }

    pub fn eval_block(&self, index: usize, x: &[T]) -> Result<SymMatrix<T>> {
        self.check_len(x)?;
        Ok(SymMatrix(self.blocks[index].eval(x)))
    }

    /// Negative-definiteness margin of each block at `x`.
    pub fn block_margins(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x)?;
        self.blocks
            .iter()
            .map(|b| negdef_margin(&SymMatrix(b.eval(x))))
            .collect()
    }

    /// Margin of the whole stack (minimum over blocks).
    pub fn margin(&self, x: &[T]) -> Result<T> {
        Ok(self
            .block_margins(x)?
            .into_iter()
            .fold(T::infinity(), |m, v| m.min(v)))
    }
}
