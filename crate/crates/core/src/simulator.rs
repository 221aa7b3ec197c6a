//! Closed-loop simulation of the leader and its followers.
//!
//! Physical states are integrated directly: the leader runs open loop,
//! each follower receives `u_i = -K(Σ_j a_ij(x_j - x_i) + g_i(x_0 - x_i))`
//! and the coupling `B2 Σ_j φ(x_j - x_i)`. Errors `e_i = x_0 - x_i` are
//! recomputed from the recorded states. The running cost is carried as an
//! extra state so it shares the integrator's accuracy.

use crate::coupling::{CouplingOperator, IqcCheck, IqcLedger};
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::network::{build_laplacian, SpectralData};
use crate::scalar::{lit, to_f64, Real};
use crate::synthesis::{bound_constant, initial_state_term, NetworkSpec, SynthesisCertificate};

/// State norm above which a run is declared divergent.
pub const BLOWUP_GUARD: f64 = 1e12;
/// Tail indicator above which the truncated horizon may understate the cost.
pub const HORIZON_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub t_final: T,
    pub dt: T,
    pub leader_init: Vec<T>,
    pub agent_init: Vec<Vec<T>>,
    pub coupling: CouplingOperator<T>,
    /// Record every `record_stride`-th step (the final step is always kept).
    pub record_stride: usize,
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self, spec: &NetworkSpec<T>) -> Result<()> {
        let n = spec.state_dim();
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(Error::InvalidInput("t_final must be at least dt".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidInput("record_stride must be at least 1".into()));
        }
        if self.leader_init.len() != n {
            return Err(Error::dimension("leader initial state", n, self.leader_init.len()));
        }
        if self.agent_init.len() != spec.agent_count() {
            return Err(Error::dimension(
                "agent initial states",
                spec.agent_count(),
                self.agent_init.len(),
            ));
        }
        if let Some(x) = self.agent_init.iter().find(|x| x.len() != n) {
            return Err(Error::dimension("agent initial state", n, x.len()));
        }
        self.coupling.validate()?;
        if self.coupling.input_dim() != n {
            return Err(Error::dimension("coupling input", n, self.coupling.input_dim()));
        }
        if self.coupling.output_dim() != spec.coupling_dim() {
            return Err(Error::dimension(
                "coupling output",
                spec.coupling_dim(),
                self.coupling.output_dim(),
            ));
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        (self.t_final / self.dt).round().to_usize().unwrap_or(0).max(1)
    }

    /// `e_i(0) = x_0(0) - x_i(0)`.
    pub fn initial_errors(&self) -> Vec<Vec<T>> {
        self.agent_init
            .iter()
            .map(|x| self.leader_init.iter().zip(x).map(|(&a, &b)| a - b).collect())
            .collect()
    }
}

/// Realized IQC ledger of the coupling acting on edge `(agent, neighbor)`,
/// whose input is `x_neighbor - x_agent`.
#[derive(Debug, Clone)]
pub struct PairLedger<T> {
    pub agent: usize,
    pub neighbor: usize,
    pub ledger: IqcLedger<T>,
}

/// Recorded trajectories; per-sample vectors are indexed `[sample][agent][component]`.
#[derive(Debug, Clone)]
pub struct SimulationResult<T> {
    pub times: Vec<T>,
    pub leader: Vec<Vec<T>>,
    pub agents: Vec<Vec<Vec<T>>>,
    pub errors: Vec<Vec<Vec<T>>>,
    pub controls: Vec<Vec<Vec<T>>>,
    /// Cost accumulated up to each recorded time.
    pub running_cost: Vec<T>,
    pub final_cost: T,
    pub iqc: Vec<PairLedger<T>>,
    pub gain: Matrix<T>,
    pub coupling: CouplingOperator<T>,
    pub dt: T,
}

impl<T: Real> SimulationResult<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Norm of the stacked error vector at each sample.
    pub fn error_norms(&self) -> Vec<T> {
        self.errors
            .iter()
            .map(|e| e.iter().flatten().map(|&v| v * v).sum::<T>().sqrt())
            .collect()
    }

    pub fn iqc_passed(&self) -> bool {
        self.iqc.iter().all(|p| p.ledger.passed())
    }
}

struct Model<'a, T> {
    spec: &'a NetworkSpec<T>,
    k: &'a Matrix<T>,
    coupling: &'a CouplingOperator<T>,
    adjacency: Vec<Vec<usize>>,
    pairs: Vec<(usize, usize)>,
    n: usize,
    agents: usize,
    filt: usize,
}

impl<'a, T: Real> Model<'a, T> {
    fn new(spec: &'a NetworkSpec<T>, k: &'a Matrix<T>, coupling: &'a CouplingOperator<T>) -> Self {
        let agents = spec.agent_count();
        let adjacency: Vec<Vec<usize>> = (0..agents).map(|i| spec.graph.neighbors(i)).collect();
        let pairs = adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().map(move |&j| (i, j)))
            .collect();
        Self {
            spec,
            k,
            coupling,
            adjacency,
            pairs,
            n: spec.state_dim(),
            agents,
            filt: coupling.state_dim(),
        }
    }

    fn len(&self) -> usize {
        self.n * (1 + self.agents) + self.pairs.len() * self.filt + 1
    }

    fn leader<'s>(&self, z: &'s [T]) -> &'s [T] {
        &z[..self.n]
    }

    fn agent<'s>(&self, z: &'s [T], i: usize) -> &'s [T] {
        &z[self.n * (1 + i)..self.n * (2 + i)]
    }

    fn filter_offset(&self, p: usize) -> usize {
        self.n * (1 + self.agents) + p * self.filt
    }

    fn filter<'s>(&self, z: &'s [T], p: usize) -> &'s [T] {
        let o = self.filter_offset(p);
        &z[o..o + self.filt]
    }

    fn cost_index(&self) -> usize {
        self.len() - 1
    }

    fn errors(&self, z: &[T]) -> Vec<Vec<T>> {
        let x0 = self.leader(z);
        (0..self.agents)
            .map(|i| x0.iter().zip(self.agent(z, i)).map(|(&a, &b)| a - b).collect())
            .collect()
    }

    /// `u_i = -K((L+G)⊗I e)_i`, written in relative states.
    fn controls(&self, z: &[T]) -> Vec<Vec<T>> {
        let x0 = self.leader(z);
        (0..self.agents)
            .map(|i| {
                let xi = self.agent(z, i);
                let mut rel = vec![T::zero(); self.n];
                for &j in &self.adjacency[i] {
                    for (r, (&a, &b)) in rel.iter_mut().zip(self.agent(z, j).iter().zip(xi)) {
                        *r = *r + (a - b);
                    }
                }
                if self.spec.pinning.is_pinned(i) {
                    for (r, (&a, &b)) in rel.iter_mut().zip(x0.iter().zip(xi)) {
                        *r = *r + (a - b);
                    }
                }
                self.k.mul_vec(&rel).into_iter().map(|v| -v).collect()
            })
            .collect()
    }

    fn pair_input(&self, z: &[T], p: usize) -> Vec<T> {
        let (i, j) = self.pairs[p];
        self.agent(z, j)
            .iter()
            .zip(self.agent(z, i))
            .map(|(&a, &b)| a - b)
            .collect()
    }

    fn pair_output(&self, z: &[T], p: usize) -> Vec<T> {
        self.coupling.output(self.filter(z, p), &self.pair_input(z, p))
    }

    fn derivative(&self, z: &[T], dz: &mut [T]) {
        let n = self.n;
        let a = &self.spec.a;
        a.mul_vec_into(self.leader(z), &mut dz[..n]);
        let u = self.controls(z);
        let mut coupling_in = vec![vec![T::zero(); self.spec.coupling_dim()]; self.agents];
        for p in 0..self.pairs.len() {
            let (i, _) = self.pairs[p];
            let y = self.pair_input(z, p);
            let s = self.filter(z, p);
            for (c, v) in coupling_in[i].iter_mut().zip(self.coupling.output(s, &y)) {
                *c = *c + v;
            }
            let ds = self.coupling.state_derivative(s, &y);
            let o = self.filter_offset(p);
            dz[o..o + self.filt].copy_from_slice(&ds);
        }
        for i in 0..self.agents {
            let mut dx = a.mul_vec(self.agent(z, i));
            for (d, v) in dx.iter_mut().zip(self.spec.b1.mul_vec(&u[i])) {
                *d = *d + v;
            }
            for (d, v) in dx.iter_mut().zip(self.spec.b2.mul_vec(&coupling_in[i])) {
                *d = *d + v;
            }
            dz[n * (1 + i)..n * (2 + i)].copy_from_slice(&dx);
        }
        let ci = self.cost_index();
        dz[ci] = direct_integrand(self.spec, &self.errors(z), &u);
    }
}

/// Cost integrand in pairwise form: `Σ_i ½Σ_j a_ij(e_i-e_j)ᵀQ(e_i-e_j)
/// + g_i e_iᵀQe_i + u_iᵀRu_i`.
pub fn direct_integrand<T: Real>(spec: &NetworkSpec<T>, e: &[Vec<T>], u: &[Vec<T>]) -> T {
    let half = lit::<T>(0.5);
    let mut acc = T::zero();
    for i in 0..e.len() {
        for j in spec.graph.neighbors(i) {
            let diff: Vec<T> = e[i].iter().zip(&e[j]).map(|(&a, &b)| a - b).collect();
            acc = acc + half * spec.q.quad_form(&diff);
        }
        if spec.pinning.is_pinned(i) {
            acc = acc + spec.q.quad_form(&e[i]);
        }
        acc = acc + spec.r.quad_form(&u[i]);
    }
    acc
}

/// Stacked integrand `eᵀ((L+G)⊗Q)e + uᵀ(I⊗R)u`.
pub fn stacked_integrand<T: Real>(
    spec: &NetworkSpec<T>,
    grounded: &Matrix<T>,
    e: &[Vec<T>],
    u: &[Vec<T>],
) -> T {
    let mut acc = T::zero();
    for i in 0..e.len() {
        let qi = spec.q.mul_vec(&e[i]);
        for j in 0..e.len() {
            let w = grounded[(j, i)];
            if w != T::zero() {
                acc = acc + w * e[j].iter().zip(&qi).map(|(&a, &b)| a * b).sum::<T>();
            }
        }
        acc = acc + spec.r.quad_form(&u[i]);
    }
    acc
}

/// Decoupled integrand `Σ_i λ_i ε_iᵀQε_i + λ_i² (Kε_i)ᵀR(Kε_i)`.
pub fn decoupled_integrand<T: Real>(
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
    k: &Matrix<T>,
    eps: &[Vec<T>],
) -> T {
    eps.iter()
        .zip(&spectral.lambdas)
        .map(|(ei, &lam)| {
            let ui = k.mul_vec(ei);
            lam * spec.q.quad_form(ei) + lam * lam * spec.r.quad_form(&ui)
        })
        .sum()
}

fn check_steps(steps: usize, dt: f64) -> Vec<usize> {
    // One check per simulated second plus the final step.
    let per_second = ((1.0 / dt).round() as usize).max(1);
    let mut out: Vec<usize> = (1..=steps / per_second).map(|s| s * per_second).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

/// Fixed-step classical RK4 run of the closed loop under gain `k`.
pub fn simulate<T: Real>(
    spec: &NetworkSpec<T>,
    k: &Matrix<T>,
    cfg: &SimConfig<T>,
) -> Result<SimulationResult<T>> {
    spec.validate()?;
    cfg.validate(spec)?;
    if k.shape() != (spec.input_dim(), spec.state_dim()) {
        return Err(Error::dimension("gain rows", spec.input_dim(), k.rows()));
    }
    let model = Model::new(spec, k, &cfg.coupling);
    let steps = cfg.step_count();
    let dt = cfg.dt;
    let len = model.len();

    let mut z = vec![T::zero(); len];
    z[..model.n].copy_from_slice(&cfg.leader_init);
    for (i, x) in cfg.agent_init.iter().enumerate() {
        let o = model.n * (1 + i);
        z[o..o + model.n].copy_from_slice(x);
    }

    let capacity = steps / cfg.record_stride + 2;
    let mut out = SimulationResult {
        times: Vec::with_capacity(capacity),
        leader: Vec::with_capacity(capacity),
        agents: Vec::with_capacity(capacity),
        errors: Vec::with_capacity(capacity),
        controls: Vec::with_capacity(capacity),
        running_cost: Vec::with_capacity(capacity),
        final_cost: T::zero(),
        iqc: Vec::new(),
        gain: k.clone(),
        coupling: cfg.coupling.clone(),
        dt,
    };
    let record = |z: &[T], t: T, out: &mut SimulationResult<T>| {
        out.times.push(t);
        out.leader.push(model.leader(z).to_vec());
        out.agents.push((0..model.agents).map(|i| model.agent(z, i).to_vec()).collect());
        out.errors.push(model.errors(z));
        out.controls.push(model.controls(z));
        out.running_cost.push(z[model.cost_index()]);
    };

    // Per-pair energy accumulators, trapezoidal on the full step grid.
    let checks = check_steps(steps, to_f64(dt));
    let pair_count = model.pairs.len();
    let powers = |z: &[T]| -> Vec<(T, T)> {
        (0..pair_count)
            .map(|p| {
                let y = model.pair_input(z, p);
                let w = model.pair_output(z, p);
                (y.iter().map(|&v| v * v).sum(), w.iter().map(|&v| v * v).sum())
            })
            .collect()
    };
    let mut energy = vec![(T::zero(), T::zero()); pair_count];
    let mut ledgers: Vec<Vec<IqcCheck<T>>> = vec![Vec::with_capacity(checks.len()); pair_count];
    let mut prev_power = powers(&z);
    let mut next_check = 0;

    record(&z, T::zero(), &mut out);
    let half = lit::<T>(0.5);
    let sixth = dt / lit(6.0);
    let guard = lit::<T>(BLOWUP_GUARD);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len]);
    let mut tmp = vec![T::zero(); len];
    for step in 1..=steps {
        model.derivative(&z, &mut k1);
        for i in 0..len {
            tmp[i] = z[i] + half * dt * k1[i];
        }
        model.derivative(&tmp, &mut k2);
        for i in 0..len {
            tmp[i] = z[i] + half * dt * k2[i];
        }
        model.derivative(&tmp, &mut k3);
        for i in 0..len {
            tmp[i] = z[i] + dt * k3[i];
        }
        model.derivative(&tmp, &mut k4);
        for i in 0..len {
            z[i] = z[i] + sixth * (k1[i] + lit::<T>(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        let t = dt * T::from_usize(step).unwrap();
        let size = norm(&z[..len - 1]);
        if !(size <= guard) {
            return Err(Error::NumericalBlowup { time: to_f64(t) });
        }

        let power = powers(&z);
        for p in 0..pair_count {
            energy[p].0 = energy[p].0 + half * dt * (prev_power[p].0 + power[p].0);
            energy[p].1 = energy[p].1 + half * dt * (prev_power[p].1 + power[p].1);
        }
        prev_power = power;
        if checks.get(next_check) == Some(&step) {
            for p in 0..pair_count {
                ledgers[p].push(IqcCheck {
                    time: t,
                    input_energy: energy[p].0,
                    output_energy: energy[p].1,
                });
            }
            next_check += 1;
        }
        if step % cfg.record_stride == 0 || step == steps {
            record(&z, t, &mut out);
        }
    }
    out.final_cost = z[model.cost_index()];
    out.iqc = model
        .pairs
        .iter()
        .zip(ledgers)
        .map(|(&(agent, neighbor), checks)| PairLedger {
            agent,
            neighbor,
            ledger: IqcLedger { checks, d: spec.d },
        })
        .collect();
    Ok(out)
}

/// The same cost in three algebraically equal forms, each by trapezoidal
/// quadrature on the recorded grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown<T> {
    /// Pairwise disagreement, pinning and control terms.
    pub direct: T,
    /// Stacked error form with `(L+G)⊗Q`.
    pub stacked: T,
    /// Decoupled form in transformed coordinates.
    pub hat: T,
}

fn trapezoid<T: Real>(times: &[T], values: &[T]) -> T {
    let half = lit::<T>(0.5);
    (1..values.len())
        .map(|k| half * (times[k] - times[k - 1]) * (values[k] + values[k - 1]))
        .sum()
}

pub fn evaluate_cost<T: Real>(
    result: &SimulationResult<T>,
    spec: &NetworkSpec<T>,
    spectral: &SpectralData<T>,
) -> Result<CostBreakdown<T>> {
    let grounded = {
        let mut l = build_laplacian::<T>(&spec.graph);
        for i in 0..spec.agent_count() {
            l[(i, i)] = l[(i, i)] + spec.pinning.gain::<T>(i);
        }
        l
    };
    let eps = transform_errors(result, spectral)?;
    let mut direct = Vec::with_capacity(result.len());
    let mut stacked = Vec::with_capacity(result.len());
    let mut hat = Vec::with_capacity(result.len());
    for s in 0..result.len() {
        let (e, u) = (&result.errors[s], &result.controls[s]);
        direct.push(direct_integrand(spec, e, u));
        stacked.push(stacked_integrand(spec, &grounded, e, u));
        hat.push(decoupled_integrand(spec, spectral, &result.gain, &eps[s]));
    }
    Ok(CostBreakdown {
        direct: trapezoid(&result.times, &direct),
        stacked: trapezoid(&result.times, &stacked),
        hat: trapezoid(&result.times, &hat),
    })
}

/// `ε_i = Σ_j T_ji e_j` at every recorded sample.
pub fn transform_errors<T: Real>(
    result: &SimulationResult<T>,
    spectral: &SpectralData<T>,
) -> Result<Vec<Vec<Vec<T>>>> {
    let t = &spectral.t;
    let agents = spectral.node_count();
    result
        .errors
        .iter()
        .map(|e| {
            if e.len() != agents {
                return Err(Error::dimension("error stack", agents, e.len()));
            }
            let n = e.first().map_or(0, Vec::len);
            Ok((0..agents)
                .map(|i| {
                    let mut out = vec![T::zero(); n];
                    for (j, ej) in e.iter().enumerate() {
                        let w = t[(j, i)];
                        for (o, &v) in out.iter_mut().zip(ej) {
                            *o = *o + w * v;
                        }
                    }
                    out
                })
                .collect())
        })
        .collect()
}

/// Forward-difference check of the decoupled subsystem equations.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResidual<T> {
    /// Largest residual norm over the grid, per subsystem.
    pub per_subsystem: Vec<T>,
    /// Largest right-hand-side norm over the grid and subsystems.
    pub derivative_scale: T,
    /// `max residual / derivative_scale` (0 when the trajectory is at rest).
    pub relative: T,
}

/// Compares `(ε(t+h) - ε(t))/h` against
/// `Aε_i + λ_iB1Kε_i + (f_ii-λ_i)B2ξ_i + Σ_{j≠i} f_ij B2ξ_j` with `ξ_i = Γε_i`.
pub fn decomposition_residual<T: Real>(
    result: &SimulationResult<T>,
    spectral: &SpectralData<T>,
    spec: &NetworkSpec<T>,
    k: &Matrix<T>,
) -> Result<DecompositionResidual<T>> {
    let CouplingOperator::MemorylessGain { gain } = &result.coupling else {
        return Err(Error::UnsupportedOperator(
            "decomposition residual needs a memoryless coupling".into(),
        ));
    };
    let agents = spectral.node_count();
    let eps = transform_errors(result, spectral)?;
    let b1k = &spec.b1 * k;
    let mut per = vec![T::zero(); agents];
    let mut scale = T::zero();
    for s in 0..result.len().saturating_sub(1) {
        let h = result.times[s + 1] - result.times[s];
        let xi: Vec<Vec<T>> = eps[s].iter().map(|e| gain.mul_vec(e)).collect();
        for i in 0..agents {
            let lam = spectral.lambdas[i];
            let mut rhs = spec.a.mul_vec(&eps[s][i]);
            for (r, v) in rhs.iter_mut().zip(b1k.mul_vec(&eps[s][i])) {
                *r = *r + lam * v;
            }
            let mut w = vec![T::zero(); spec.coupling_dim()];
            for j in 0..agents {
                let c = if j == i {
                    spectral.f[(i, i)] - lam
                } else {
                    spectral.f[(i, j)]
                };
                for (o, &v) in w.iter_mut().zip(&xi[j]) {
                    *o = *o + c * v;
                }
            }
            for (r, v) in rhs.iter_mut().zip(spec.b2.mul_vec(&w)) {
                *r = *r + v;
            }
            let resid: Vec<T> = eps[s + 1][i]
                .iter()
                .zip(&eps[s][i])
                .zip(&rhs)
                .map(|((&a, &b), &r)| (a - b) / h - r)
                .collect();
            per[i] = per[i].max(norm(&resid));
            scale = scale.max(norm(&rhs));
        }
    }
    let worst = per.iter().fold(T::zero(), |m, &v| m.max(v));
    let relative = if scale > T::zero() { worst / scale } else { T::zero() };
    Ok(DecompositionResidual {
        per_subsystem: per,
        derivative_scale: scale,
        relative,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundVerdict {
    Satisfied,
    Violated,
    /// The certificate makes no claim for this run.
    NotClaimed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck<T> {
    pub j_direct: T,
    /// Bound evaluated at the run's own initial errors.
    pub bound_total: T,
    pub verdict: BoundVerdict,
    /// `‖e(t_final)‖² / ‖e(0)‖²`.
    pub tail_indicator: T,
    /// The tail indicator exceeds [`HORIZON_TOL`].
    pub horizon_warning: bool,
}

impl<T> BoundCheck<T> {
    pub fn satisfied(&self) -> bool {
        self.verdict == BoundVerdict::Satisfied
    }
}

pub const OUTSIDE_CLASS: &str = "coupling outside Ξ₀ (not IQC-admissible with this d)";

/// Compares the realized cost with the certified bound. The bound is only
/// claimed for admissible couplings and for the certified gain.
pub fn check_bound<T: Real>(
    result: &SimulationResult<T>,
    cert: &SynthesisCertificate<T>,
    spec: &NetworkSpec<T>,
) -> Result<BoundCheck<T>> {
    let e0 = result
        .errors
        .first()
        .ok_or_else(|| Error::InvalidInput("empty simulation result".into()))?;
    let bound_total = bound_constant(&cert.pi, &cert.theta, spec.d) + initial_state_term(&cert.y, e0)?;
    let j_direct = result.final_cost;

    let sq = |e: &Vec<Vec<T>>| e.iter().flatten().map(|&v| v * v).sum::<T>();
    let start = sq(e0);
    let end = sq(result.errors.last().expect("non-empty"));
    let tail_indicator = if start > T::zero() { end / start } else { T::zero() };

    let verdict = if !result.coupling.is_admissible()? {
        BoundVerdict::NotClaimed(OUTSIDE_CLASS.into())
    } else if result.gain != cert.k {
        BoundVerdict::NotClaimed("simulated gain differs from the certificate gain".into())
    } else if j_direct <= bound_total {
        BoundVerdict::Satisfied
    } else {
        BoundVerdict::Violated
    };
    Ok(BoundCheck {
        j_direct,
        bound_total,
        verdict,
        tail_indicator,
        horizon_warning: tail_indicator > lit(HORIZON_TOL),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    fn reference_gain() -> Matrix<f64> {
        Matrix::from_rows(&[[4.0, 4.5]]).unwrap()
    }

    #[test]
    fn equilibrium_stays_at_rest() {
        let spec = demo::pendulum::<f64>();
        let mut cfg = demo::pendulum_sim_config::<f64>(0.5, 3);
        cfg.t_final = 1.0;
        cfg.agent_init = vec![cfg.leader_init.clone(); 3];
        let r = simulate(&spec, &reference_gain(), &cfg).unwrap();
        assert!(r.error_norms().iter().all(|&v| v == 0.0));
        assert!(r.controls.iter().flatten().flatten().all(|&v| v == 0.0));
        assert_eq!(r.final_cost, 0.0);
        assert_eq!(r.len(), 1001);
    }

    #[test]
    fn stride_keeps_final_sample() {
        let spec = demo::pendulum::<f64>();
        let mut cfg = demo::pendulum_sim_config::<f64>(0.5, 3);
        cfg.t_final = 0.105;
        cfg.dt = 0.01;
        cfg.record_stride = 4;
        let r = simulate(&spec, &reference_gain(), &cfg).unwrap();
        let idx: Vec<f64> = r.times.iter().map(|t| (t / 0.01).round()).collect();
        assert_eq!(idx, vec![0.0, 4.0, 8.0, 11.0]);
    }

    #[test]
    fn unstable_gain_blows_up() {
        let spec = demo::pendulum::<f64>();
        let mut cfg = demo::pendulum_sim_config::<f64>(0.0, 3);
        cfg.t_final = 200.0;
        cfg.dt = 0.01;
        let k = Matrix::from_rows(&[[-10.0, -10.0]]).unwrap();
        match simulate(&spec, &k, &cfg) {
            Err(Error::NumericalBlowup { time }) => assert!(time > 0.0 && time < 200.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn filter_rejected_by_residual() {
        let spec = demo::pendulum::<f64>();
        let mut cfg = demo::pendulum_sim_config::<f64>(0.5, 3);
        cfg.t_final = 0.1;
        cfg.coupling = CouplingOperator::LtiFilter {
            a: Matrix::identity(2).scale(-2.0),
            b: Matrix::identity(2),
            c: Matrix::identity(2),
            d: Matrix::zeros(2, 2),
        };
        let r = simulate(&spec, &reference_gain(), &cfg).unwrap();
        let sd = spec.spectral().unwrap();
        assert!(matches!(
            decomposition_residual(&r, &sd, &spec, &reference_gain()),
            Err(Error::UnsupportedOperator(_))
        ));
        assert!(r.iqc_passed());
    }

    #[test]
    fn check_times_cover_final_step() {
        assert_eq!(check_steps(2500, 1e-3), vec![1000, 2000, 2500]);
        assert_eq!(check_steps(10, 1e-3), vec![10]);
    }
}
