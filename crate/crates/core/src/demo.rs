//! Ready-made instances.

use crate::coupling::CouplingOperator;
use crate::linalg::Matrix;
use crate::network::{Graph, Pinning};
use crate::scalar::{lit, Real};
use crate::simulator::SimConfig;
use crate::synthesis::NetworkSpec;

/// Physical parameters of the spring-coupled pendulum chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Bob mass (kg).
    pub mass: f64,
    /// Rod length (m).
    pub length: f64,
    /// Spring attachment height (m).
    pub attach: f64,
    pub gravity: f64,
    pub agents: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 0.25,
            length: 1.0,
            attach: 0.5,
            gravity: 10.0,
            agents: 3,
        }
    }
}

pub const DEFAULT_SPRING: f64 = 0.5;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_FINAL: f64 = 20.0;
pub const LEADER_INIT: [f64; 2] = [0.1, 0.0];

/// Agent state `(angle, angular velocity)`; the coupling enters the
/// velocity row through the spring torque.
pub fn pendulum_with<T: Real>(p: &PendulumParams) -> NetworkSpec<T> {
    let inertia = p.mass * p.length * p.length;
    let mat = |r, c, v: &[f64]| Matrix::from_row_slice(r, c, v).expect("static shape").cast();
    let a = mat(2, 2, &[0.0, 1.0, -p.gravity / p.length, 0.0]);
    let b1 = mat(2, 1, &[0.0, -1.0 / inertia]);
    let b2 = mat(2, 2, &[0.0, 0.0, p.attach * p.attach / inertia, 0.0]);
    let e0 = (0..p.agents)
        .map(|_| LEADER_INIT.iter().map(|&v| lit(v)).collect())
        .collect();
    NetworkSpec {
        a,
        b1,
        b2,
        q: Matrix::identity(2),
        r: Matrix::diag(&[lit(0.1)]),
        graph: Graph::path(p.agents).expect("at least one agent"),
        pinning: Pinning::from_nodes(p.agents, &[0]).expect("node 0 exists"),
        d: T::zero(),
        e0: Some(e0),
    }
}

/// Three pendulums on a path, end node pinned, `Q = I`, `R = 0.1`, `d = 0`,
/// leader at `(0.1, 0)` and agents at rest.
pub fn pendulum<T: Real>() -> NetworkSpec<T> {
    pendulum_with(&PendulumParams::default())
}

/// Spring coupling `Γ = k·I`.
pub fn spring<T: Real>(k: f64) -> CouplingOperator<T> {
    CouplingOperator::MemorylessGain {
        gain: Matrix::identity(2).scale(lit(k)),
    }
}

pub fn pendulum_sim_config<T: Real>(k: f64, agents: usize) -> SimConfig<T> {
    SimConfig {
        t_final: lit(DEFAULT_T_FINAL),
        dt: lit(DEFAULT_DT),
        leader_init: LEADER_INIT.iter().map(|&v| lit(v)).collect(),
        agent_init: vec![vec![T::zero(); 2]; agents],
        coupling: spring(k),
        record_stride: 1,
    }
}
