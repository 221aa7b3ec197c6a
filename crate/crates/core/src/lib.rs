//! Leader-follower consensus gain synthesis for networks of identical LTI
//! agents with IQC-bounded linear coupling.
//!
//! The pipeline is: describe the network ([`NetworkSpec`]), synthesize a
//! gain with a certified cost bound ([`synthesis::synthesize`]), then
//! simulate the closed loop and compare the realized cost with the bound
//! ([`simulator::simulate`], [`simulator::check_bound`]).
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`.

// NaN must fail positivity checks, and dense kernels read best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coupling;
pub mod demo;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod network;
pub mod scalar;
pub mod simulator;
pub mod synthesis;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use network::{Graph, Pinning, SpectralData};
pub use scalar::Real;
pub use synthesis::{Method, NetworkSpec, SynthesisCertificate};

pub type Matrix64 = linalg::Matrix<f64>;
pub type NetworkSpec64 = synthesis::NetworkSpec<f64>;
pub type SpectralData64 = network::SpectralData<f64>;
pub type AffineLmi64 = lmi::AffineLmi<f64>;
pub type Certificate64 = synthesis::SynthesisCertificate<f64>;
pub type SimConfig64 = simulator::SimConfig<f64>;
pub type SimulationResult64 = simulator::SimulationResult<f64>;
pub type CouplingOperator64 = coupling::CouplingOperator<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type NetworkSpec32 = synthesis::NetworkSpec<f32>;
