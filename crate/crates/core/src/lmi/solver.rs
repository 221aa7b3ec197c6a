//! Barrier method on the max-eigenvalue epigraph.
//!
//! Minimizes `t` subject to `t·I - M(x) ≻ 0`, positivity of flagged
//! variables and a box `|x_j| < box_bound`, following the central path of
//! `s·t - log det(t·I - M(x)) - Σ log(...)`. The optimum `t*` is `-margin`
//! of the most negative-definite point in the box, so the sign of `t*`
//! decides feasibility; every `Feasible` answer is re-checked with an
//! independent eigenvalue computation.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, spd_inverse, sym_eigen, Matrix};
use crate::scalar::{lit, to_f64, Real};

use super::{AffineLmi, DEFAULT_MARGIN_TOL, DEFAULT_POS_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub margin_tol: f64,
    pub pos_tol: f64,
    pub box_bound: f64,
    /// Stop once the barrier duality gap is below `gap_tol·(1 + |t|)`.
    pub gap_tol: f64,
    pub max_outer: usize,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            margin_tol: DEFAULT_MARGIN_TOL,
            pos_tol: DEFAULT_POS_TOL,
            box_bound: 1e6,
            gap_tol: 1e-10,
            max_outer: 40,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub outer_iterations: usize,
    pub newton_steps: usize,
    /// Final epigraph variable (the max eigenvalue at `x`, up to centering).
    pub objective: f64,
    /// Barrier duality gap at the last centered point.
    pub gap: f64,
    /// `objective - gap`: no point in the box has a larger margin than
    /// `-lower_bound`.
    pub lower_bound: f64,
    pub box_active: bool,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult<T> {
    pub status: FeasibilityStatus,
    pub x: Vec<T>,
    /// `-λ_max` of the map at `x`.
    pub margin: T,
    pub diagnostics: SolverDiagnostics,
}

impl<T: Real> FeasibilityResult<T> {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

pub fn solve_feasibility<T: Real>(lmi: &AffineLmi<T>, margin_tol: f64) -> Result<FeasibilityResult<T>> {
    solve_feasibility_with(
        lmi,
        &SolverOptions {
            margin_tol,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_feasibility_with<T: Real>(
    lmi: &AffineLmi<T>,
    opts: &SolverOptions,
) -> Result<FeasibilityResult<T>> {
    if !(opts.margin_tol > 0.0) {
        return Err(Error::InvalidInput("margin_tol must be positive".into()));
    }
    let mut barrier = Barrier::new(lmi, opts)?;
    let outcome = barrier.run();

    let x = barrier.z[..barrier.v].to_vec();
    let margin = lmi.margin(&x)?;
    let margin_ok = margin >= lit(opts.margin_tol);
    let pos_ok = lmi
        .variables()
        .iter()
        .zip(&x)
        .all(|(v, &xj)| !v.positive || xj >= lit(opts.pos_tol));
    let struct_ok = lmi.structures().iter().all(|s| {
        sym_eigen(&s.matrix(&x))
            .map(|e| e.values.first().is_none_or(|&l| l >= lit(opts.pos_tol)))
            .unwrap_or(false)
    });

    let diagnostics = SolverDiagnostics {
        outer_iterations: barrier.outer,
        newton_steps: barrier.newton_steps,
        objective: to_f64(barrier.t()),
        gap: barrier.gap,
        lower_bound: to_f64(barrier.t()) - barrier.gap,
        box_active: barrier.box_active(),
        message: outcome.message,
    };

    let status = if margin_ok && pos_ok && struct_ok {
        FeasibilityStatus::Feasible
    } else if outcome.centered && diagnostics.lower_bound > -opts.margin_tol {
        FeasibilityStatus::Infeasible
    } else {
        FeasibilityStatus::Indeterminate
    };
    assert!(
        status != FeasibilityStatus::Feasible || margin >= lit(opts.margin_tol),
        "feasible verdict below margin tolerance"
    );
    Ok(FeasibilityResult {
        status,
        x,
        margin,
        diagnostics,
    })
}

struct Outcome {
    centered: bool,
    message: String,
}

struct Barrier<'a, T> {
    lmi: &'a AffineLmi<T>,
    opts: &'a SolverOptions,
    v: usize,
    /// Decision variables followed by the epigraph variable `t`.
    z: Vec<T>,
    bound: T,
    degree: f64,
    outer: usize,
    newton_steps: usize,
    gap: f64,
}

impl<'a, T: Real> Barrier<'a, T> {
    fn new(lmi: &'a AffineLmi<T>, opts: &'a SolverOptions) -> Result<Self> {
        let v = lmi.variable_count();
        let mut z = lmi.initial_point();
        let bound = lit::<T>(opts.box_bound);
        for (xj, var) in z.iter_mut().zip(lmi.variables()) {
            if var.positive && *xj <= T::zero() {
                *xj = T::one();
            }
            if xj.abs() >= bound {
                *xj = T::zero();
            }
        }
        let lmax = lmi
            .blocks()
            .iter()
            .map(|b| sym_eigen(&b.eval(&z)).map(|e| e.values.last().copied().unwrap_or(T::zero())))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(T::neg_infinity(), T::max);
        let lmax = if lmax.is_finite() { lmax } else { T::zero() };
        z.push(lmax + T::one());

        let positives = lmi.variables().iter().filter(|v| v.positive).count();
        let degree = (lmi.dim() + positives + 2 * v) as f64;
        Ok(Self {
            lmi,
            opts,
            v,
            z,
            bound,
            degree,
            outer: 0,
            newton_steps: 0,
            gap: f64::INFINITY,
        })
    }

    fn t(&self) -> T {
        self.z[self.v]
    }

    fn box_active(&self) -> bool {
        let edge = self.bound * lit(0.99);
        self.z[..self.v].iter().any(|x| x.abs() > edge)
    }

    fn run(&mut self) -> Outcome {
        let mut s = T::one();
        let mu = lit::<T>(10.0);
        for outer in 0..self.opts.max_outer {
            self.outer = outer + 1;
            let centered = match self.center(s) {
                Ok(c) => c,
                Err(e) => {
                    return Outcome {
                        centered: false,
                        message: e.to_string(),
                    }
                }
            };
            self.gap = self.degree / to_f64(s);
            let t = to_f64(self.t());
            if centered && t - self.gap > -self.opts.margin_tol {
                return Outcome {
                    centered: true,
                    message: "optimal max-eigenvalue bounded above -margin_tol".into(),
                };
            }
            if self.gap <= self.opts.gap_tol * (1.0 + t.abs()) {
                return Outcome {
                    centered,
                    message: "converged".into(),
                };
            }
            s = s * mu;
        }
        Outcome {
            centered: false,
            message: "outer iteration limit reached".into(),
        }
    }

    /// Barrier objective at `z`, or `None` outside the domain.
    fn value(&self, z: &[T], s: T) -> Option<T> {
        let (x, t) = (&z[..self.v], z[self.v]);
        let mut f = s * t;
        for b in self.lmi.blocks() {
            let slack = (-&b.eval(x)).add_diag(t);
            let l = cholesky(&slack)?;
            for i in 0..l.rows() {
                f = f - lit::<T>(2.0) * l[(i, i)].ln();
            }
        }
        for (xj, var) in x.iter().zip(self.lmi.variables()) {
            if var.positive {
                if *xj <= T::zero() {
                    return None;
                }
                f = f - xj.ln();
            }
            let (up, lo) = (self.bound - *xj, self.bound + *xj);
            if up <= T::zero() || lo <= T::zero() {
                return None;
            }
            f = f - up.ln() - lo.ln();
        }
        f.is_finite().then_some(f)
    }

    fn gradient_hessian(&self, s: T) -> Result<(Vec<T>, Matrix<T>)> {
        let v = self.v;
        let (x, t) = (&self.z[..v], self.z[v]);
        let mut g = vec![T::zero(); v + 1];
        let mut h = Matrix::zeros(v + 1, v + 1);
        g[v] = s;
        for b in self.lmi.blocks() {
            let slack = (-&b.eval(x)).add_diag(t);
            let sinv = spd_inverse(&slack)?;
            let w: Vec<Option<Matrix<T>>> = b
                .coefficients
                .iter()
                .map(|c| c.as_ref().map(|c| &sinv * c.as_matrix()))
                .collect();
            g[v] = g[v] - sinv.trace();
            h[(v, v)] = h[(v, v)] + sinv.as_slice().iter().map(|&a| a * a).sum::<T>();
            for j in 0..v {
                let Some(wj) = &w[j] else { continue };
                g[j] = g[j] + wj.trace();
                h[(j, v)] = h[(j, v)] - trace_product(wj, &sinv);
                h[(v, j)] = h[(j, v)];
                for k in j..v {
                    let Some(wk) = &w[k] else { continue };
                    let val = trace_product(wj, wk);
                    h[(j, k)] = h[(j, k)] + val;
                    if k != j {
                        h[(k, j)] = h[(k, j)] + val;
                    }
                }
            }
        }
        for (j, (xj, var)) in x.iter().zip(self.lmi.variables()).enumerate() {
            if var.positive {
                g[j] = g[j] - T::one() / *xj;
                h[(j, j)] = h[(j, j)] + T::one() / (*xj * *xj);
            }
            let (up, lo) = (self.bound - *xj, self.bound + *xj);
            g[j] = g[j] + T::one() / up - T::one() / lo;
            h[(j, j)] = h[(j, j)] + T::one() / (up * up) + T::one() / (lo * lo);
        }
        Ok((g, h))
    }

    /// Newton centering for the given barrier weight; `Ok(true)` when the
    /// Newton decrement fell below tolerance.
    fn center(&mut self, s: T) -> Result<bool> {
        let two = lit::<T>(2.0);
        for _ in 0..self.opts.max_newton {
            let (g, h) = self.gradient_hessian(s)?;
            let step = newton_direction(&h, &g)?;
            let decrement: T = -g.iter().zip(&step).map(|(&a, &b)| a * b).sum::<T>();
            if decrement / two <= lit(1e-10) {
                return Ok(true);
            }
            self.newton_steps += 1;
            let f0 = self
                .value(&self.z, s)
                .ok_or_else(|| Error::NumericalFailure("iterate left barrier domain".into()))?;
            let mut alpha = T::one();
            let mut moved = false;
            for _ in 0..80 {
                let trial: Vec<T> = self
                    .z
                    .iter()
                    .zip(&step)
                    .map(|(&zi, &di)| zi + alpha * di)
                    .collect();
                if let Some(f) = self.value(&trial, s) {
                    if f <= f0 - lit::<T>(0.25) * alpha * decrement {
                        self.z = trial;
                        moved = true;
                        break;
                    }
                }
                alpha = alpha / two;
            }
            if !moved {
                // Line search stalled: treat as centered at working precision.
                return Ok(decrement <= lit(1e-6));
            }
        }
        Ok(false)
    }
}

fn trace_product<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    let n = a.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for k in 0..n {
            acc = acc + a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Solves `H d = -g`, regularizing `H` if it is numerically singular.
fn newton_direction<T: Real>(h: &Matrix<T>, g: &[T]) -> Result<Vec<T>> {
    let scale = h.diagonal().into_iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let mut reg = T::zero();
    for _ in 0..12 {
        if let Some(l) = cholesky(&h.add_diag(reg)) {
            let n = g.len();
            let mut y = vec![T::zero(); n];
            for i in 0..n {
                let mut acc = -g[i];
                for k in 0..i {
                    acc = acc - l[(i, k)] * y[k];
                }
                y[i] = acc / l[(i, i)];
            }
            let mut d = vec![T::zero(); n];
            for i in (0..n).rev() {
                let mut acc = y[i];
                for k in i + 1..n {
                    acc = acc - l[(k, i)] * d[k];
                }
                d[i] = acc / l[(i, i)];
            }
            return Ok(d);
        }
        reg = if reg == T::zero() {
            scale * T::epsilon() * lit(16.0)
        } else {
            reg * lit(100.0)
        };
    }
    Err(Error::NumericalFailure("Newton system is not positive definite".into()))
}
