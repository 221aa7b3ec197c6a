//! Linear coupling operators and empirical IQC checks.
//!
//! An operator is admissible when, for every input `y`, the output energy
//! over `[0, t]` never exceeds the input energy plus a constant `d`.

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, lu_solve, spd_inverse, sym_eigen, Matrix};
use crate::scalar::{lit, Real};

/// Relative slack granted to the energy comparison.
pub const IQC_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingOperator<T> {
    /// `φ(y)(t) = Γ y(t)`.
    MemorylessGain { gain: Matrix<T> },
    /// `ṡ = A s + B y`, `φ(y) = C s + D y`, zero initial state.
    LtiFilter {
        a: Matrix<T>,
        b: Matrix<T>,
        c: Matrix<T>,
        d: Matrix<T>,
    },
}

impl<T: Real> CouplingOperator<T> {
    pub fn input_dim(&self) -> usize {
        match self {
            Self::MemorylessGain { gain } => gain.cols(),
            Self::LtiFilter { b, .. } => b.cols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::MemorylessGain { gain } => gain.rows(),
            Self::LtiFilter { c, .. } => c.rows(),
        }
    }

    /// Number of internal states per operator instance.
    pub fn state_dim(&self) -> usize {
        match self {
            Self::MemorylessGain { .. } => 0,
            Self::LtiFilter { a, .. } => a.rows(),
        }
    }

    pub fn is_memoryless(&self) -> bool {
        matches!(self, Self::MemorylessGain { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::LtiFilter { a, b, c, d } = self {
            let k = a.rows();
            if !a.is_square() {
                return Err(Error::dimension("filter A columns", k, a.cols()));
            }
            if b.rows() != k {
                return Err(Error::dimension("filter B rows", k, b.rows()));
            }
            if c.cols() != k {
                return Err(Error::dimension("filter C columns", k, c.cols()));
            }
            if d.shape() != (c.rows(), b.cols()) {
                return Err(Error::dimension("filter D rows", c.rows(), d.rows()));
            }
        }
        Ok(())
    }

    /// Instantaneous output given the internal state and current input.
    pub fn output(&self, state: &[T], input: &[T]) -> Vec<T> {
        match self {
            Self::MemorylessGain { gain } => gain.mul_vec(input),
            Self::LtiFilter { c, d, .. } => {
                let mut out = d.mul_vec(input);
                for (o, v) in out.iter_mut().zip(c.mul_vec(state)) {
                    *o = *o + v;
                }
                out
            }
        }
    }

    /// Internal state derivative; empty for memoryless operators.
    pub fn state_derivative(&self, state: &[T], input: &[T]) -> Vec<T> {
        match self {
            Self::MemorylessGain { .. } => Vec::new(),
            Self::LtiFilter { a, b, .. } => {
                let mut ds = a.mul_vec(state);
                for (o, v) in ds.iter_mut().zip(b.mul_vec(input)) {
                    *o = *o + v;
                }
                ds
            }
        }
    }

    /// Whether the operator lies in the admissible class with `d = 0`.
    ///
    /// Memoryless gains need `σ_max(Γ) ≤ 1`; filters need a Hurwitz `A` and
    /// an H∞ norm below one (Hamiltonian test).
    pub fn is_admissible(&self) -> Result<bool> {
        match self {
            Self::MemorylessGain { gain } => Ok(iqc_admissible_gain(gain)?.admissible),
            Self::LtiFilter { a, b, c, d } => hinf_below_one(a, b, c, d),
        }
    }
}

/// Uniformly sampled vector signal, `samples[k]` taken at `k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    pub dt: T,
    pub samples: Vec<Vec<T>>,
}

impl<T: Real> Signal<T> {
    pub fn new(dt: T, samples: Vec<Vec<T>>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidInput("sample step must be positive".into()));
        }
        if let Some(first) = samples.first() {
            if let Some(bad) = samples.iter().find(|s| s.len() != first.len()) {
                return Err(Error::dimension("signal sample", first.len(), bad.len()));
            }
        }
        Ok(Self { dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration(&self) -> T {
        self.dt * T::from_usize(self.len().saturating_sub(1)).unwrap()
    }

    /// Pointwise squared norms.
    pub fn power(&self) -> Vec<T> {
        self.samples
            .iter()
            .map(|s| s.iter().map(|&v| v * v).sum())
            .collect()
    }
}

fn axpy_vec<T: Real>(out: &mut [T], s: T, v: &[T]) {
    for (o, &x) in out.iter_mut().zip(v) {
        *o = *o + s * x;
    }
}

/// Response of `op` to `y`. Filters are integrated with classical RK4
/// from a zero state, the input linearly interpolated between samples.
pub fn apply<T: Real>(op: &CouplingOperator<T>, y: &Signal<T>) -> Result<Signal<T>> {
    op.validate()?;
    if !y.is_empty() && y.dim() != op.input_dim() {
        return Err(Error::dimension("coupling input", op.input_dim(), y.dim()));
    }
    let samples = match op {
        CouplingOperator::MemorylessGain { gain } => {
            y.samples.iter().map(|s| gain.mul_vec(s)).collect()
        }
        CouplingOperator::LtiFilter { .. } => {
            let h = y.dt;
            let half = lit::<T>(0.5);
            let mut state = vec![T::zero(); op.state_dim()];
            let mut out = Vec::with_capacity(y.len());
            for (k, u0) in y.samples.iter().enumerate() {
                out.push(op.output(&state, u0));
                let Some(u1) = y.samples.get(k + 1) else { break };
                let um: Vec<T> = u0.iter().zip(u1).map(|(&a, &b)| half * (a + b)).collect();
                let k1 = op.state_derivative(&state, u0);
                let mut s = state.clone();
                axpy_vec(&mut s, half * h, &k1);
                let k2 = op.state_derivative(&s, &um);
                let mut s = state.clone();
                axpy_vec(&mut s, half * h, &k2);
                let k3 = op.state_derivative(&s, &um);
                let mut s = state.clone();
                axpy_vec(&mut s, h, &k3);
                let k4 = op.state_derivative(&s, u1);
                let sixth = h / lit(6.0);
                for i in 0..state.len() {
                    state[i] = state[i] + sixth * (k1[i] + lit::<T>(2.0) * (k2[i] + k3[i]) + k4[i]);
                }
            }
            out
        }
    };
    Signal::new(y.dt, samples)
}

/// Energies at one check time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqcCheck<T> {
    pub time: T,
    pub input_energy: T,
    pub output_energy: T,
}

impl<T: Real> IqcCheck<T> {
    pub fn holds(&self, d: T) -> bool {
        self.output_energy <= self.input_energy + d + lit::<T>(IQC_REL_TOL) * self.input_energy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqcLedger<T> {
    pub checks: Vec<IqcCheck<T>>,
    pub d: T,
}

impl<T: Real> IqcLedger<T> {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.holds(self.d))
    }

    /// First check time at which the inequality fails.
    pub fn first_violation(&self) -> Option<&IqcCheck<T>> {
        self.checks.iter().find(|c| !c.holds(self.d))
    }
}

/// Trapezoidal running integral of a sampled scalar, starting at 0.
pub fn cumulative_trapezoid<T: Real>(values: &[T], dt: T) -> Vec<T> {
    let half = lit::<T>(0.5) * dt;
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(values.len());
    for (k, &v) in values.iter().enumerate() {
        if k > 0 {
            acc = acc + half * (values[k - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Integral of a sampled scalar from 0 to `t`, linearly interpolating the
/// integrand inside the last interval.
fn integral_to<T: Real>(values: &[T], cumulative: &[T], dt: T, t: T) -> T {
    let pos = t / dt;
    let k = pos.floor().to_usize().unwrap_or(0).min(values.len() - 1);
    let frac = pos - T::from_usize(k).unwrap();
    if k + 1 >= values.len() || frac <= T::zero() {
        return cumulative[k];
    }
    let v_end = values[k] + frac * (values[k + 1] - values[k]);
    cumulative[k] + lit::<T>(0.5) * frac * dt * (values[k] + v_end)
}

/// IQC ledger of an input/output pair already sampled on the same grid.
pub fn iqc_ledger<T: Real>(
    input: &Signal<T>,
    output: &Signal<T>,
    d: T,
    check_times: &[T],
) -> Result<IqcLedger<T>> {
    if input.len() != output.len() {
        return Err(Error::dimension("IQC output samples", input.len(), output.len()));
    }
    if input.is_empty() {
        return Err(Error::InvalidInput("IQC check on an empty signal".into()));
    }
    let end = input.duration() * (T::one() + lit(1e-12));
    if let Some(&t) = check_times.iter().find(|&&t| t < T::zero() || t > end) {
        return Err(Error::InvalidInput(format!(
            "check time {t} outside the signal support"
        )));
    }
    let pin = input.power();
    let pout = output.power();
    let cin = cumulative_trapezoid(&pin, input.dt);
    let cout = cumulative_trapezoid(&pout, input.dt);
    let checks = check_times
        .iter()
        .map(|&t| IqcCheck {
            time: t,
            input_energy: integral_to(&pin, &cin, input.dt, t),
            output_energy: integral_to(&pout, &cout, input.dt, t),
        })
        .collect();
    Ok(IqcLedger { checks, d })
}

/// Applies `op` to `y` and checks the energy inequality at each check time.
/// Violations are reported in the ledger, not as errors.
pub fn verify_iqc<T: Real>(
    op: &CouplingOperator<T>,
    y: &Signal<T>,
    d: T,
    check_times: &[T],
) -> Result<IqcLedger<T>> {
    let out = apply(op, y)?;
    iqc_ledger(y, &out, d, check_times)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainAdmissibility<T> {
    pub admissible: bool,
    pub sigma_max: T,
    /// Offset needed for the energy inequality; always 0 for admissible
    /// memoryless gains.
    pub d_required: T,
}

/// Largest singular value.
pub fn sigma_max<T: Real>(m: &Matrix<T>) -> Result<T> {
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(T::zero());
    }
    let gram = &m.transpose() * m;
    let eig = sym_eigen(&gram)?;
    Ok(eig.values.last().copied().unwrap_or(T::zero()).max(T::zero()).sqrt())
}

pub fn iqc_admissible_gain<T: Real>(gain: &Matrix<T>) -> Result<GainAdmissibility<T>> {
    let s = sigma_max(gain)?;
    Ok(GainAdmissibility {
        admissible: s <= T::one() + lit(1e-12),
        sigma_max: s,
        d_required: T::zero(),
    })
}

/// `‖C(sI - A)⁻¹B + D‖∞ < 1` for Hurwitz `A`: holds iff `σ_max(D) < 1` and
/// the associated Hamiltonian has no imaginary-axis eigenvalues.
fn hinf_below_one<T: Real>(a: &Matrix<T>, b: &Matrix<T>, c: &Matrix<T>, d: &Matrix<T>) -> Result<bool> {
    let k = a.rows();
    if k == 0 {
        return Ok(sigma_max(d)? <= T::one() + lit(1e-12));
    }
    let abscissa = eigenvalues(a)?
        .into_iter()
        .fold(T::neg_infinity(), |m, e| m.max(e.re));
    if !(abscissa < T::zero()) {
        return Ok(false);
    }
    if sigma_max(d)? >= T::one() {
        return Ok(false);
    }
    let dt = d.transpose();
    let r = (&Matrix::identity(d.cols()) - &(&dt * d)).symmetrized();
    let r_inv = spd_inverse(&r)?;
    let s = (&Matrix::identity(d.rows()) - &(d * &dt)).symmetrized();
    // (I - DDᵀ)⁻¹ = I + D R⁻¹ Dᵀ
    let s_inv = lu_solve(&s, &Matrix::identity(d.rows()))?;
    let a_h = a + &(&(&(b * &r_inv) * &dt) * c);
    let top_right = &(b * &r_inv) * &b.transpose();
    let bottom_left = -&(&(&c.transpose() * &s_inv) * c);
    let mut h = Matrix::zeros(2 * k, 2 * k);
    h.set_block(0, 0, &a_h);
    h.set_block(0, k, &top_right);
    h.set_block(k, 0, &bottom_left);
    h.set_block(k, k, &(-&a_h.transpose()));
    let scale = h.max_abs() + T::one();
    let on_axis = eigenvalues(&h)?
        .into_iter()
        .any(|e| e.re.abs() <= lit::<T>(1e-9) * scale);
    Ok(!on_axis)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(dt: f64, t_end: f64) -> Signal<f64> {
        let n = (t_end / dt).round() as usize + 1;
        Signal::new(dt, (0..n).map(|k| vec![(k as f64 * dt).sin()]).collect()).unwrap()
    }

    fn first_order(pole: f64) -> CouplingOperator<f64> {
        CouplingOperator::LtiFilter {
            a: Matrix::diag(&[-pole]),
            b: Matrix::diag(&[1.0]),
            c: Matrix::diag(&[1.0]),
            d: Matrix::zeros(1, 1),
        }
    }

    #[test]
    fn identity_gain_is_identity() {
        let y = Signal::new(0.1, vec![vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let op = CouplingOperator::MemorylessGain {
            gain: Matrix::identity(2),
        };
        assert_eq!(apply(&op, &y).unwrap(), y);
    }

    #[test]
    fn half_gain_on_constant() {
        let y = Signal::new(0.1, vec![vec![1.0, 0.0]; 5]).unwrap();
        let op = CouplingOperator::MemorylessGain {
            gain: Matrix::identity(2).scale(0.5),
        };
        let out = apply(&op, &y).unwrap();
        assert!(out.samples.iter().all(|s| s == &vec![0.5, 0.0]));
    }

    #[test]
    fn first_order_filter_amplitude() {
        let y = sine(1e-3, 30.0);
        let out = apply(&first_order(2.0), &y).unwrap();
        let tail = &out.samples[20_000..];
        let peak = tail.iter().fold(0.0f64, |m, s| m.max(s[0].abs()));
        let expected = 1.0 / 5f64.sqrt();
        assert!((peak - expected).abs() / expected < 0.01, "{peak}");
    }

    #[test]
    fn gain_admissibility() {
        let rot = Matrix::from_rows(&[[0.6, -0.8], [0.8, 0.6]]).unwrap();
        assert!(iqc_admissible_gain(&rot).unwrap().admissible);
        assert!(iqc_admissible_gain(&Matrix::<f64>::identity(2)).unwrap().admissible);
        assert!(!iqc_admissible_gain(&Matrix::<f64>::identity(2).scale(1.01))
            .unwrap()
            .admissible);
    }

    #[test]
    fn filter_admissibility() {
        assert!(first_order(2.0).is_admissible().unwrap());
        assert!(!first_order(0.5).is_admissible().unwrap());
        assert!(!first_order(-1.0).is_admissible().unwrap());
    }

    #[test]
    fn iqc_pass_and_fail() {
        let y = sine(1e-3, 5.0);
        let times = [1.0, 2.5, 5.0];
        let id = CouplingOperator::MemorylessGain {
            gain: Matrix::identity(1),
        };
        assert!(verify_iqc(&id, &y, 0.0, &times).unwrap().passed());
        let big = CouplingOperator::MemorylessGain {
            gain: Matrix::identity(1).scale(1.5),
        };
        let ledger = verify_iqc(&big, &y, 0.0, &times).unwrap();
        assert!(!ledger.passed());
        assert_eq!(ledger.first_violation().unwrap().time, 1.0);
        assert!(verify_iqc(&id, &y, 0.0, &[6.0]).is_err());
    }

    #[test]
    fn off_grid_check_time() {
        let y = Signal::new(1.0f64, vec![vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let id = CouplingOperator::MemorylessGain {
            gain: Matrix::identity(1),
        };
        let l = verify_iqc(&id, &y, 0.0, &[1.5]).unwrap();
        assert!((l.checks[0].input_energy - 1.5).abs() < 1e-15);
    }
}
