//! Guaranteed-cost gain synthesis.
//!
//! Two routes are provided:
//!
//! * [`Method::Coupled`] solves one LMI block per eigenvalue of `L + G`,
//!   jointly over a shared `Y`, `F` and per-subsystem multipliers, and sets
//!   `K = F Y⁻¹`.
//! * [`Method::Uniform`] solves a single LMI built from the spectral
//!   extremes `λ_min`, `λ_max`, `max p_i²`, `max q_i²` and sets
//!   `K = -(λ_min/λ_max²) R⁻¹ B1ᵀ Y⁻¹`. The solution lifts to a feasible
//!   point of every coupled block ([`lift_uniform_solution`]).
//!
//! Multipliers enter the blocks as reciprocals, so the decision variables
//! are `α_i = 1/π_i` and `β_i = 1/θ_i`, which keeps every block affine.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, spd_inverse, sym_eigen, sym_sqrt, Matrix};
use crate::lmi::{
    negdef_margin, solve_feasibility_with, AffineLmi, FeasibilityStatus, SolverOptions, SymMatrix,
    SymVarBlock, Variable,
};
use crate::network::{Graph, Pinning, SpectralData};
use crate::scalar::{lit, to_f64, tol, Real};

/// Synthesis route. Wire names are `th1` and `th2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// N coupled blocks, one per eigenvalue of `L + G`.
    Coupled,
    /// One block over the spectral extremes, uniform multipliers.
    Uniform,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Coupled => "th1",
            Method::Uniform => "th2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "th1" | "coupled" => Ok(Method::Coupled),
            "th2" | "uniform" => Ok(Method::Uniform),
            other => Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        }
    }
}

/// A complete problem instance: identical agents, weights, topology and
/// the IQC offset of the coupling class.
#[derive(Debug, Clone)]
pub struct NetworkSpec<T> {
    pub a: Matrix<T>,
    pub b1: Matrix<T>,
    /// Maps the coupling output into the agent state.
    pub b2: Matrix<T>,
    pub q: Matrix<T>,
    pub r: Matrix<T>,
    pub graph: Graph,
    pub pinning: Pinning,
    /// IQC offset constant `d ≥ 0`.
    pub d: T,
    /// Initial synchronization errors `e_i(0) = x_0(0) - x_i(0)`.
    pub e0: Option<Vec<Vec<T>>>,
}

impl<T: Real> NetworkSpec<T> {
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b1.cols()
    }

    pub fn coupling_dim(&self) -> usize {
        self.b2.cols()
    }

    pub fn agent_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.input_dim();
        if !self.a.is_square() {
            return Err(Error::dimension("A columns", n, self.a.cols()));
        }
        if self.b1.rows() != n {
            return Err(Error::dimension("B1 rows", n, self.b1.rows()));
        }
        if self.b2.rows() != n {
            return Err(Error::dimension("B2 rows", n, self.b2.rows()));
        }
        if self.q.shape() != (n, n) {
            return Err(Error::dimension("Q size", n, self.q.rows().max(self.q.cols())));
        }
        if self.r.shape() != (m, m) {
            return Err(Error::dimension("R size", m, self.r.rows().max(self.r.cols())));
        }
        for (name, w) in [("Q", &self.q), ("R", &self.r)] {
            let scale = w.max_abs() + T::one();
            if w.asymmetry() > tol::<T>(1e-12) * scale {
                return Err(Error::InvalidInput(format!("{name} must be symmetric")));
            }
            let eig = sym_eigen(w)?;
            if eig.values.first().is_some_and(|&l| l <= T::zero()) {
                return Err(Error::NotPositiveDefinite {
                    context: format!("weight {name}"),
                    min_eigenvalue: to_f64(eig.values[0]),
                });
            }
        }
        if self.pinning.len() != self.agent_count() {
            return Err(Error::dimension(
                "pinning vector",
                self.agent_count(),
                self.pinning.len(),
            ));
        }
        if !(self.d >= T::zero()) || !self.d.is_finite() {
            return Err(Error::InvalidInput("IQC offset d must be finite and ≥ 0".into()));
        }
        if let Some(e0) = &self.e0 {
            if e0.len() != self.agent_count() {
                return Err(Error::dimension("initial errors", self.agent_count(), e0.len()));
            }
            for e in e0 {
                if e.len() != n {
                    return Err(Error::dimension("initial error vector", n, e.len()));
                }
            }
        }
        Ok(())
    }

    /// Spectral data of `L + G`; a singular grounded matrix is reported as
    /// [`Error::DegenerateNetwork`].
    pub fn spectral(&self) -> Result<SpectralData<T>> {
        SpectralData::analyze(&self.graph, &self.pinning).map_err(|e| match e {
            Error::NotPositiveDefinite { min_eigenvalue, .. } => Error::DegenerateNetwork(format!(
                "grounded matrix not positive definite (min eigenvalue {min_eigenvalue:e}); \
                 the graph must be connected with at least one pinned agent"
            )),
            other => other,
        })
    }
}

/// Decision variables of the coupled blocks at a concrete point.
#[derive(Debug, Clone)]
pub struct CoupledPoint<T> {
    pub y: Matrix<T>,
    pub f: Matrix<T>,
    /// `α_i = 1/π_i`.
    pub alpha: Vec<T>,
    /// `β_i = 1/θ_i`; empty for a single agent.
    pub beta: Vec<T>,
}

impl<T: Real> CoupledPoint<T> {
    /// Point from gains and multipliers (`π_i`, `θ_i`).
    pub fn from_multipliers(y: Matrix<T>, f: Matrix<T>, pi: &[T], theta: &[T]) -> Self {
        Self {
            y,
            f,
            alpha: pi.iter().map(|&p| T::one() / p).collect(),
            beta: theta.iter().map(|&t| T::one() / t).collect(),
        }
    }
}

/// Variable layout shared by both assemblies: `Y` (upper triangle), then
/// `F` row-major (coupled only), then `α`, then `β`.
#[derive(Debug, Clone)]
pub struct VariableLayout {
    pub y: SymVarBlock,
    pub f_first: usize,
    pub f_len: usize,
    pub alpha_first: usize,
    pub alpha_len: usize,
    pub beta_first: usize,
    pub beta_len: usize,
    pub input_dim: usize,
}

impl VariableLayout {
    fn new(n: usize, m: usize, with_f: bool, alphas: usize, betas: usize) -> Self {
        let y = SymVarBlock {
            label: "Y".into(),
            dim: n,
            first: 0,
        };
        let f_first = y.len();
        let f_len = if with_f { m * n } else { 0 };
        let alpha_first = f_first + f_len;
        let beta_first = alpha_first + alphas;
        Self {
            y,
            f_first,
            f_len,
            alpha_first,
            alpha_len: alphas,
            beta_first,
            beta_len: betas,
            input_dim: m,
        }
    }

    pub fn len(&self) -> usize {
        self.beta_first + self.beta_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn variables(&self) -> Vec<Variable> {
        let n = self.y.dim;
        let mut vars = Vec::with_capacity(self.len());
        for i in 0..n {
            for j in i..n {
                vars.push(Variable::free(format!("Y[{i},{j}]")));
            }
        }
        for k in 0..self.f_len {
            vars.push(Variable::free(format!("F[{},{}]", k / n, k % n)));
        }
        for i in 0..self.alpha_len {
            vars.push(Variable::positive(format!("alpha[{i}]")));
        }
        for i in 0..self.beta_len {
            vars.push(Variable::positive(format!("beta[{i}]")));
        }
        vars
    }

    pub fn y<T: Real>(&self, x: &[T]) -> Matrix<T> {
        self.y.matrix(x)
    }

    pub fn f<T: Real>(&self, x: &[T]) -> Matrix<T> {
        let n = self.y.dim;
        Matrix::from_fn(self.input_dim, n, |i, j| {
            if self.f_len == 0 {
                T::zero()
            } else {
                x[self.f_first + i * n + j]
            }
        })
    }

    pub fn alpha<T: Real>(&self, x: &[T]) -> Vec<T> {
        x[self.alpha_first..self.alpha_first + self.alpha_len].to_vec()
    }

    pub fn beta<T: Real>(&self, x: &[T]) -> Vec<T> {
        x[self.beta_first..self.beta_first + self.beta_len].to_vec()
    }

    pub fn point<T: Real>(&self, x: &[T]) -> CoupledPoint<T> {
        CoupledPoint {
            y: self.y(x),
            f: self.f(x),
            alpha: self.alpha(x),
            beta: self.beta(x),
        }
    }
}

fn gram<T: Real>(b: &Matrix<T>) -> Matrix<T> {
    b * &b.transpose()
}

/// `A Y + Y Aᵀ`.
fn lyap_term<T: Real>(a: &Matrix<T>, y: &Matrix<T>) -> Matrix<T> {
    let ay = a * y;
    &ay + &ay.transpose()
}

/// Subsystem `i` block of the coupled LMI at a concrete point.
///
/// Row/column partition `[n, m_in, n, n, n(N-1)]`; the last partition is
/// absent for a single agent.
pub fn coupled_block<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
    i: usize,
    point: &CoupledPoint<T>,
) -> Result<Matrix<T>> {
    let n = spec.state_dim();
    let m = spec.input_dim();
    let agents = spectral.node_count();
    let lam = spectral.lambdas[i];
    let CoupledPoint { y, f, alpha, beta } = point;

    let mut z = lyap_term(&spec.a, y);
    let b1f = &(&spec.b1 * f).scale(lam);
    z = &(&z + b1f) + &b1f.transpose();
    let mut mult = alpha[i] * spectral.p[i] * spectral.p[i];
    if agents > 1 {
        mult = mult + beta[i] * spectral.q[i] * spectral.q[i];
    }
    z.axpy(mult, &gram(&spec.b2));

    let r_inv = spd_inverse(&spec.r)?;
    let q_half = sym_sqrt(&spec.q.scale(lam))?;
    let inter = n * (agents - 1);
    let dim = 3 * n + m + inter;
    let mut blk = Matrix::zeros(dim, dim);
    let (o_f, o_q, o_a, o_b) = (n, n + m, 2 * n + m, 3 * n + m);

    blk.set_block(0, 0, &z);
    blk.set_sym_block(o_f, 0, f);
    blk.set_block(o_f, o_f, &r_inv.scale(-T::one() / (lam * lam)));
    blk.set_sym_block(o_q, 0, &(&q_half * y));
    blk.set_block(o_q, o_q, &Matrix::identity(n).scale(-T::one()));
    blk.set_sym_block(o_a, 0, y);
    blk.set_block(o_a, o_a, &Matrix::identity(n).scale(-alpha[i]));
    for (slot, j) in (0..agents).filter(|&j| j != i).enumerate() {
        let off = o_b + slot * n;
        blk.set_sym_block(off, 0, y);
        blk.set_block(off, off, &Matrix::identity(n).scale(-beta[j]));
    }
    Ok(blk)
}

/// The single block of the uniform LMI, partition `[n, n, n, n]` (the last
/// partition is absent for a single agent).
pub fn uniform_block<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
    y: &Matrix<T>,
    alpha: T,
    beta: T,
) -> Result<Matrix<T>> {
    let n = spec.state_dim();
    let agents = spectral.node_count();
    let ratio = spectral.lambda_min / spectral.lambda_max;
    let r_inv = spd_inverse(&spec.r)?;

    let mut z = lyap_term(&spec.a, y);
    let b1rb1 = &(&spec.b1 * &r_inv) * &spec.b1.transpose();
    z.axpy(-(ratio * ratio), &b1rb1);
    let mut mult = alpha * spectral.p_sq;
    if agents > 1 {
        mult = mult + beta * spectral.q_sq;
    }
    z.axpy(mult, &gram(&spec.b2));

    let q_half = sym_sqrt(&spec.q.scale(spectral.lambda_max))?;
    let parts = if agents > 1 { 4 } else { 3 };
    let mut blk = Matrix::zeros(parts * n, parts * n);
    blk.set_block(0, 0, &z);
    blk.set_sym_block(n, 0, &(&q_half * y));
    blk.set_block(n, n, &Matrix::identity(n).scale(-T::one()));
    blk.set_sym_block(2 * n, 0, y);
    blk.set_block(2 * n, 2 * n, &Matrix::identity(n).scale(-alpha));
    if agents > 1 {
        let others = T::from_usize(agents - 1).unwrap();
        blk.set_sym_block(3 * n, 0, y);
        blk.set_block(3 * n, 3 * n, &Matrix::identity(n).scale(-beta / others));
    }
    Ok(blk)
}

fn check_preconditions<T: Real>(spec: &NetworkSpec<T>, spectral: &SpectralData<T>) -> Result<()> {
    spec.validate()?;
    if spectral.node_count() != spec.agent_count() {
        return Err(Error::dimension(
            "spectral data",
            spec.agent_count(),
            spectral.node_count(),
        ));
    }
    if spectral.lambdas.iter().any(|&l| l <= T::zero()) {
        return Err(Error::DegenerateNetwork(
            "grounded matrix not positive definite".into(),
        ));
    }
    Ok(())
}

/// Layout used by [`assemble_coupled`] for this instance.
pub fn coupled_layout<T: Real>(spec: &NetworkSpec<T>) -> VariableLayout {
    let agents = spec.agent_count();
    let betas = if agents > 1 { agents } else { 0 };
    VariableLayout::new(spec.state_dim(), spec.input_dim(), true, agents, betas)
}

/// Layout used by [`assemble_uniform`] for this instance.
pub fn uniform_layout<T: Real>(spec: &NetworkSpec<T>) -> VariableLayout {
    let betas = usize::from(spec.agent_count() > 1);
    VariableLayout::new(spec.state_dim(), spec.input_dim(), false, 1, betas)
}

fn with_y_positive<T: Real>(lmi: &mut AffineLmi<T>, layout: &VariableLayout) -> Result<()> {
    let ys = layout.y.clone();
    lmi.add_block_fn("Y > 0", |x| -&ys.matrix(x))?;
    lmi.add_structure(layout.y.clone())
}

/// Joint LMI over all subsystems plus a `-Y` block enforcing `Y ≻ 0`.
pub fn assemble_coupled<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
) -> Result<AffineLmi<T>> {
    check_preconditions(spec, spectral)?;
    let layout = coupled_layout(spec);
    let mut lmi = AffineLmi::new(layout.variables());
    for i in 0..spec.agent_count() {
        // Validate once with a concrete point so the closure cannot fail.
        coupled_block(spec, spectral, i, &layout.point(&vec![T::one(); layout.len()]))?;
        lmi.add_block_fn(format!("subsystem {i}"), |x| {
            coupled_block(spec, spectral, i, &layout.point(x)).expect("validated block")
        })?;
    }
    with_y_positive(&mut lmi, &layout)?;
    Ok(lmi)
}

/// Single uniform LMI plus a `-Y` block enforcing `Y ≻ 0`.
pub fn assemble_uniform<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
) -> Result<AffineLmi<T>> {
    check_preconditions(spec, spectral)?;
    let layout = uniform_layout(spec);
    let mut lmi = AffineLmi::new(layout.variables());
    let decode = |x: &[T]| {
        let beta = layout.beta(x).first().copied().unwrap_or(T::zero());
        (layout.y(x), layout.alpha(x)[0], beta)
    };
    let (y0, a0, b0) = decode(&vec![T::one(); layout.len()]);
    uniform_block(spec, spectral, &y0, a0, b0)?;
    lmi.add_block_fn("uniform", |x| {
        let (y, a, b) = decode(x);
        uniform_block(spec, spectral, &y, a, b).expect("validated block")
    })?;
    with_y_positive(&mut lmi, &layout)?;
    Ok(lmi)
}

/// Left side of the Riccati inequality for subsystem `i`:
///
/// `AY + YAᵀ + (p_i²/π_i + q_i²/θ_i) B2B2ᵀ + Y[λ_iQ + (π_i + θ̄_i)I]Y
///  + λ_i² FᵀRF + λ_i FᵀB1ᵀ + λ_i B1F`, with `θ̄_i = Σ_{j≠i} θ_j`.
#[allow(clippy::too_many_arguments)]
pub fn riccati_lhs<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
    y: &Matrix<T>,
    f: &Matrix<T>,
    pi: &[T],
    theta: &[T],
    i: usize,
) -> Result<Matrix<T>> {
    let n = spec.state_dim();
    let agents = spectral.node_count();
    if y.shape() != (n, n) {
        return Err(Error::dimension("Y", n, y.rows()));
    }
    if f.shape() != (spec.input_dim(), n) {
        return Err(Error::dimension("F rows", spec.input_dim(), f.rows()));
    }
    if pi.len() != agents {
        return Err(Error::dimension("pi multipliers", agents, pi.len()));
    }
    let theta_expected = if agents > 1 { agents } else { 0 };
    if theta.len() != theta_expected {
        return Err(Error::dimension("theta multipliers", theta_expected, theta.len()));
    }
    let lam = spectral.lambdas[i];

    let mut out = lyap_term(&spec.a, y);
    let mut mult = spectral.p[i] * spectral.p[i] / pi[i];
    let mut theta_bar = T::zero();
    if agents > 1 {
        mult = mult + spectral.q[i] * spectral.q[i] / theta[i];
        theta_bar = (0..agents).filter(|&j| j != i).map(|j| theta[j]).sum();
    }
    out.axpy(mult, &gram(&spec.b2));
    let inner = spec.q.scale(lam).add_diag(pi[i] + theta_bar);
    out = &out + &(&(y * &inner) * y);
    out.axpy(lam * lam, &(&(&f.transpose() * &spec.r) * f));
    let b1f = (&spec.b1 * f).scale(lam);
    out = &(&out + &b1f) + &b1f.transpose();
    Ok(out)
}

/// Negative-definiteness margin of the Riccati inequality for subsystem `i`.
pub fn verify_riccati<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
    y: &Matrix<T>,
    f: &Matrix<T>,
    pi: &[T],
    theta: &[T],
    i: usize,
) -> Result<T> {
    let lhs = riccati_lhs(spec, spectral, y, f, pi, theta, i)?;
    negdef_margin(&SymMatrix::new(lhs.symmetrized())?)
}

/// Uniform solution expressed as a point of the coupled blocks.
#[derive(Debug, Clone)]
pub struct LiftedSolution<T> {
    pub y: Matrix<T>,
    pub f: Matrix<T>,
    pub pi: Vec<T>,
    pub theta: Vec<T>,
    pub riccati_margins: Vec<T>,
}

/// `F = -(λ_min/λ_max²) R⁻¹ B1ᵀ`.
pub fn uniform_f<T: Real>(spec: &NetworkSpec<T>, spectral: &SpectralData<T>) -> Result<Matrix<T>> {
    let c = spectral.lambda_min / (spectral.lambda_max * spectral.lambda_max);
    Ok((&spd_inverse(&spec.r)? * &spec.b1.transpose()).scale(-c))
}

/// Lifts a strictly feasible uniform solution `(Y, π, θ)` to the coupled
/// form with `F = -(λ_min/λ_max²) R⁻¹ B1ᵀ` and uniform multipliers, then
/// checks every subsystem's Riccati inequality. `theta` is ignored for a
/// single agent.
pub fn lift_uniform_solution<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
    y: &Matrix<T>,
    pi: T,
    theta: T,
) -> Result<LiftedSolution<T>> {
    let agents = spectral.node_count();
    let f = uniform_f(spec, spectral)?;
    let pis = vec![pi; agents];
    let thetas = if agents > 1 { vec![theta; agents] } else { Vec::new() };
    let mut margins = Vec::with_capacity(agents);
    for i in 0..agents {
        let margin = verify_riccati(spec, spectral, y, &f, &pis, &thetas, i)?;
        if !(margin > T::zero()) {
            return Err(Error::LiftRejected {
                subsystem: i,
                margin: to_f64(margin),
            });
        }
        margins.push(margin);
    }
    Ok(LiftedSolution {
        y: y.clone(),
        f,
        pi: pis,
        theta: thetas,
        riccati_margins: margins,
    })
}

/// Largest real part of `eig(A + λ_i B1 K)` for every `λ_i`.
pub fn closed_loop_abscissae<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
    k: &Matrix<T>,
) -> Result<Vec<T>> {
    let b1k = spec.b1.matmul(k)?;
    spectral
        .lambdas
        .iter()
        .map(|&lam| {
            let mut acl = spec.a.clone();
            acl.axpy(lam, &b1k);
            Ok(eigenvalues(&acl)?
                .into_iter()
                .fold(T::neg_infinity(), |m, e| m.max(e.re)))
        })
        .collect()
}

/// Result of a successful synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisCertificate<T> {
    pub method: Method,
    pub k: Matrix<T>,
    pub y: Matrix<T>,
    /// Solver `F` for the coupled route, `-(λ_min/λ_max²)R⁻¹B1ᵀ` for the
    /// uniform route.
    pub f: Matrix<T>,
    /// `π_i`, one per agent (uniform values for the uniform route).
    pub pi: Vec<T>,
    /// `θ_i`, one per agent; empty for a single agent.
    pub theta: Vec<T>,
    /// Margin of the assembled LMI at the returned point.
    pub solver_margin: T,
    /// Margin of each assembled block (one per subsystem for the coupled
    /// route, a single entry for the uniform route).
    pub lmi_margins: Vec<T>,
    /// Per-subsystem Riccati margins.
    pub riccati_margins: Vec<T>,
    pub bound_constant: T,
    pub bound_total: Option<T>,
    pub margin_tol: f64,
}

impl<T: Real> SynthesisCertificate<T> {
    pub fn point(&self) -> CoupledPoint<T> {
        CoupledPoint::from_multipliers(self.y.clone(), self.f.clone(), &self.pi, &self.theta)
    }
}

/// Guaranteed-cost bound: `Σ_i (π_i + θ_i(N-1)) d` plus, when the initial
/// errors are known, `Σ_i e_i(0)ᵀ Y⁻¹ e_i(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceBound<T> {
    pub constant: T,
    pub total: Option<T>,
}

/// The `d`-proportional part of the bound.
pub fn bound_constant<T: Real>(pi: &[T], theta: &[T], d: T) -> T {
    let agents = pi.len();
    let others = T::from_usize(agents.saturating_sub(1)).unwrap();
    (0..agents)
        .map(|i| {
            let th = theta.get(i).copied().unwrap_or(T::zero());
            (pi[i] + th * others) * d
        })
        .sum()
}

/// `Σ_i e_i(0)ᵀ Y⁻¹ e_i(0)`.
pub fn initial_state_term<T: Real>(y: &Matrix<T>, e0: &[Vec<T>]) -> Result<T> {
    let y_inv = spd_inverse(y)?;
    let mut acc = T::zero();
    for e in e0 {
        if e.len() != y.rows() {
            return Err(Error::dimension("initial error vector", y.rows(), e.len()));
        }
        acc = acc + y_inv.quad_form(e);
    }
    Ok(acc)
}

/// Total bound; needs `spec.e0`.
pub fn bound_total<T: Real>(cert: &SynthesisCertificate<T>, spec: &NetworkSpec<T>) -> Result<T> {
    let e0 = spec.e0.as_ref().ok_or(Error::MissingInitialState)?;
    Ok(bound_constant(&cert.pi, &cert.theta, spec.d) + initial_state_term(&cert.y, e0)?)
}

/// Constant part always; total part when `spec.e0` is present.
pub fn compute_bound<T: Real>(
    cert: &SynthesisCertificate<T>,
    spec: &NetworkSpec<T>,
) -> Result<PerformanceBound<T>> {
    let constant = bound_constant(&cert.pi, &cert.theta, spec.d);
    let total = match bound_total(cert, spec) {
        Ok(t) => Some(t),
        Err(Error::MissingInitialState) => None,
        Err(e) => return Err(e),
    };
    Ok(PerformanceBound { constant, total })
}

/// Solves the chosen LMI, extracts `K`, and verifies the result.
pub fn synthesize<T: Real>(
    spec: &NetworkSpec<T>,
    method: Method,
    opts: &SolverOptions,
) -> Result<SynthesisCertificate<T>> {
    spec.validate()?;
    let spectral = spec.spectral()?;
    let agents = spec.agent_count();
    let margin_tol = lit::<T>(opts.margin_tol);

    let (lmi, layout) = match method {
        Method::Coupled => (assemble_coupled(spec, &spectral)?, coupled_layout(spec)),
        Method::Uniform => (assemble_uniform(spec, &spectral)?, uniform_layout(spec)),
    };
    let result = solve_feasibility_with(&lmi, opts)?;
    if result.status != FeasibilityStatus::Feasible {
        return Err(Error::Infeasible(format!(
            "{} LMI {:?} (best margin {:e}, lower bound on max eigenvalue {:e}: {})",
            method,
            result.status,
            to_f64(result.margin),
            result.diagnostics.lower_bound,
            result.diagnostics.message
        )));
    }
    let x = &result.x;
    let y = layout.y(x);
    let y_inv = spd_inverse(&y)?;
    let mut block_margins = lmi.block_margins(x)?;
    block_margins.pop(); // the Y > 0 block

    let (k, f, pi, theta, riccati_margins) = match method {
        Method::Coupled => {
            let f = layout.f(x);
            let pi: Vec<T> = layout.alpha(x).iter().map(|&a| T::one() / a).collect();
            let theta: Vec<T> = layout.beta(x).iter().map(|&b| T::one() / b).collect();
            let margins = (0..agents)
                .map(|i| verify_riccati(spec, &spectral, &y, &f, &pi, &theta, i))
                .collect::<Result<Vec<_>>>()?;
            (&f * &y_inv, f, pi, theta, margins)
        }
        Method::Uniform => {
            let pi = T::one() / layout.alpha(x)[0];
            let theta = layout.beta(x).first().map_or(T::zero(), |&b| T::one() / b);
            let lifted = lift_uniform_solution(spec, &spectral, &y, pi, theta)?;
            let k = &lifted.f * &y_inv;
            (k, lifted.f, lifted.pi, lifted.theta, lifted.riccati_margins)
        }
    };

    if let Some((i, m)) = riccati_margins
        .iter()
        .enumerate()
        .find(|(_, &m)| m < margin_tol)
    {
        return Err(Error::CertificateRejected(format!(
            "Riccati margin {:e} of subsystem {i} below margin_tol {:e}",
            to_f64(*m),
            opts.margin_tol
        )));
    }
    let abscissae = closed_loop_abscissae(spec, &spectral, &k)?;
    if let Some((i, a)) = abscissae.iter().enumerate().find(|(_, &a)| !(a < T::zero())) {
        return Err(Error::CertificateRejected(format!(
            "closed loop for eigenvalue {i} is not Hurwitz (abscissa {:e})",
            to_f64(*a)
        )));
    }

    let mut cert = SynthesisCertificate {
        method,
        k,
        y,
        f,
        pi,
        theta,
        solver_margin: result.margin,
        lmi_margins: block_margins,
        riccati_margins,
        bound_constant: T::zero(),
        bound_total: None,
        margin_tol: opts.margin_tol,
    };
    let bound = compute_bound(&cert, spec)?;
    cert.bound_constant = bound.constant;
    cert.bound_total = bound.total;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Coupled, Method::Uniform] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("th3".parse::<Method>().is_err());
    }

    #[test]
    fn pendulum_dimensions() {
        let spec = demo::pendulum::<f64>();
        let sd = spec.spectral().unwrap();
        let th1 = assemble_coupled(&spec, &sd).unwrap();
        assert_eq!(th1.dim(), 35);
        assert!(th1.blocks()[..3].iter().all(|b| b.dim() == 11));
        assert_eq!(th1.variable_count(), 3 + 2 + 3 + 3);
        let th2 = assemble_uniform(&spec, &sd).unwrap();
        assert_eq!(th2.dim(), 10);
        assert_eq!(th2.blocks()[0].dim(), 8);
    }

    #[test]
    fn unpinned_network_is_degenerate() {
        let mut spec = demo::pendulum::<f64>();
        spec.pinning = Pinning::new(vec![false; 3]);
        let err = synthesize(&spec, Method::Coupled, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateNetwork(_)));
    }

    #[test]
    fn zero_coupling_matrix_drops_multiplier_term() {
        let mut spec = demo::pendulum::<f64>();
        spec.b2 = Matrix::zeros(2, 2);
        let sd = spec.spectral().unwrap();
        let layout = coupled_layout(&spec);
        let mut x = vec![0.0; layout.len()];
        for i in 0..2 {
            x[layout.y.index(i, i)] = 1.0;
        }
        x[layout.alpha_first] = 5.0;
        let blk = coupled_block(&spec, &sd, 0, &layout.point(&x)).unwrap();
        let a = &spec.a;
        let z = a + &a.transpose();
        assert_eq!(blk.block(0, 0, 2, 2), z);
        // Multiplier and interconnection blocks are still present.
        assert_eq!(blk.shape(), (11, 11));
        assert_eq!(blk[(5, 5)], -5.0);
    }

    #[test]
    fn bound_constant_formula() {
        let pi = [1.0f64, 2.0, 3.0];
        let theta = [0.5, 0.25, 1.0];
        let c = bound_constant(&pi, &theta, 2.0);
        assert!((c - 2.0 * ((1.0 + 1.0) + (2.0 + 0.5) + (3.0 + 2.0))).abs() < 1e-14);
        assert_eq!(bound_constant(&pi, &theta, 0.0), 0.0);
    }

    #[test]
    fn bound_with_identity_y() {
        let mut spec = demo::pendulum::<f64>();
        spec.d = 0.0;
        spec.e0 = Some(vec![vec![0.1, 0.2], vec![0.0, -1.0], vec![3.0, 0.0]]);
        let cert = SynthesisCertificate {
            method: Method::Coupled,
            k: Matrix::zeros(1, 2),
            y: Matrix::identity(2),
            f: Matrix::zeros(1, 2),
            pi: vec![1.0; 3],
            theta: vec![1.0; 3],
            solver_margin: 1.0,
            lmi_margins: vec![],
            riccati_margins: vec![],
            bound_constant: 0.0,
            bound_total: None,
            margin_tol: 1e-7,
        };
        let b = compute_bound(&cert, &spec).unwrap();
        assert_eq!(b.constant, 0.0);
        assert!((b.total.unwrap() - (0.05 + 1.0 + 9.0)).abs() < 1e-14);

        spec.e0 = None;
        assert_eq!(bound_total(&cert, &spec), Err(Error::MissingInitialState));
        assert_eq!(compute_bound(&cert, &spec).unwrap().total, None);
    }
}
