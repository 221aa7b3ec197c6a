//! JSON run configuration.
//!
//! Node indices in the file are 1-based; everything downstream is 0-based.

use anyhow::{anyhow, bail, Context, Result};
use consensus_forge::coupling::CouplingOperator;
use consensus_forge::demo;
use consensus_forge::lmi::DEFAULT_MARGIN_TOL;
use consensus_forge::simulator::SimConfig;
use consensus_forge::{Graph, Matrix, Method, NetworkSpec, Pinning};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dynamics: Dynamics,
    pub weights: Weights,
    pub graph: GraphSection,
    #[serde(default)]
    pub iqc: IqcSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub synthesis: SynthesisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    pub n: usize,
    pub m_in: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B1")]
    pub b1: Rows,
    #[serde(rename = "B2")]
    pub b2: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(rename = "N")]
    pub agents: usize,
    pub edges: Vec<[usize; 2]>,
    pub pinned: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqcSection {
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
pub enum CouplingSection {
    /// `Γ = k·I`.
    ScaledIdentity { k: f64 },
    Gain {
        #[serde(rename = "Gamma")]
        gamma: Rows,
    },
    LtiFilter {
        #[serde(rename = "A")]
        a: Rows,
        #[serde(rename = "B")]
        b: Rows,
        #[serde(rename = "C")]
        c: Rows,
        #[serde(rename = "D")]
        d: Rows,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dt: f64,
    pub t_final: f64,
    pub x0_init: Vec<f64>,
    pub agent_init: Rows,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_tol: Option<f64>,
}

/// Parses JSON text; type errors carry the offending field path.
pub fn parse(text: &str) -> Result<ConfigFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("config field `{path}`: {}", e.into_inner())
    })?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse(&text)
}

fn check_rows(path: &str, m: &Rows, rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        bail!("config field `{path}`: expected {rows} rows, found {}", m.len());
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            bail!(
                "config field `{path}[{i}]`: expected {cols} entries, found {}",
                row.len()
            );
        }
    }
    Ok(())
}

fn to_matrix(m: &Rows) -> Matrix<f64> {
    let cols = m.first().map_or(0, Vec::len);
    Matrix::from_fn(m.len(), cols, |i, j| m[i][j])
}

fn node_index(path: &str, v: usize, agents: usize) -> Result<usize> {
    if v == 0 || v > agents {
        bail!("config field `{path}`: node {v} outside 1..={agents}");
    }
    Ok(v - 1)
}

impl ConfigFile {
    /// Coupling output width, read off `B2`.
    pub fn coupling_dim(&self) -> usize {
        self.dynamics.b2.first().map_or(0, Vec::len)
    }

    /// Dimension and range checks that the JSON schema cannot express.
    pub fn check(&self) -> Result<()> {
        let (n, m) = (self.dynamics.n, self.dynamics.m_in);
        if n == 0 {
            bail!("config field `dynamics.n`: must be at least 1");
        }
        if m == 0 {
            bail!("config field `dynamics.m_in`: must be at least 1");
        }
        let nw = self.coupling_dim();
        check_rows("dynamics.A", &self.dynamics.a, n, n)?;
        check_rows("dynamics.B1", &self.dynamics.b1, n, m)?;
        check_rows("dynamics.B2", &self.dynamics.b2, n, nw)?;
        check_rows("weights.Q", &self.weights.q, n, n)?;
        check_rows("weights.R", &self.weights.r, m, m)?;

        let agents = self.graph.agents;
        if agents == 0 {
            bail!("config field `graph.N`: must be at least 1");
        }
        for (k, e) in self.graph.edges.iter().enumerate() {
            for (s, &v) in e.iter().enumerate() {
                node_index(&format!("graph.edges[{k}][{s}]"), v, agents)?;
            }
        }
        for (k, &v) in self.graph.pinned.iter().enumerate() {
            node_index(&format!("graph.pinned[{k}]"), v, agents)?;
        }
        if !(self.iqc.d >= 0.0) {
            bail!("config field `iqc.d`: must be non-negative");
        }

        match &self.coupling {
            Some(CouplingSection::ScaledIdentity { k }) => {
                if nw != n {
                    bail!("config field `coupling.parameters.k`: scaled identity needs B2 with {n} columns, found {nw}");
                }
                if !k.is_finite() {
                    bail!("config field `coupling.parameters.k`: must be finite");
                }
            }
            Some(CouplingSection::Gain { gamma }) => {
                check_rows("coupling.parameters.Gamma", gamma, nw, n)?;
            }
            Some(CouplingSection::LtiFilter { a, b, c, d }) => {
                let s = a.len();
                check_rows("coupling.parameters.A", a, s, s)?;
                check_rows("coupling.parameters.B", b, s, n)?;
                check_rows("coupling.parameters.C", c, nw, s)?;
                check_rows("coupling.parameters.D", d, nw, n)?;
            }
            None => {}
        }

        if let Some(sim) = &self.simulation {
            if !(sim.dt > 0.0) {
                bail!("config field `simulation.dt`: must be positive");
            }
            if !(sim.t_final > 0.0) {
                bail!("config field `simulation.t_final`: must be positive");
            }
            if sim.x0_init.len() != n {
                bail!(
                    "config field `simulation.x0_init`: expected {n} entries, found {}",
                    sim.x0_init.len()
                );
            }
            check_rows("simulation.agent_init", &sim.agent_init, agents, n)?;
            if sim.record_stride == 0 {
                bail!("config field `simulation.record_stride`: must be at least 1");
            }
        }

        if let Some(name) = &self.synthesis.method {
            name.parse::<Method>()
                .map_err(|e| anyhow!("config field `synthesis.method`: {e}"))?;
        }
        if let Some(tol) = self.synthesis.margin_tol {
            if !(tol > 0.0) {
                bail!("config field `synthesis.margin_tol`: must be positive");
            }
        }
        Ok(())
    }

    /// `e_i(0) = x0(0) - x_i(0)` when the simulation section is present.
    pub fn initial_errors(&self) -> Option<Rows> {
        self.simulation.as_ref().map(|s| {
            s.agent_init
                .iter()
                .map(|x| s.x0_init.iter().zip(x).map(|(l, a)| l - a).collect())
                .collect()
        })
    }

    pub fn spec(&self) -> Result<NetworkSpec<f64>> {
        let agents = self.graph.agents;
        let edges: Vec<(usize, usize)> = self
            .graph
            .edges
            .iter()
            .map(|&[a, b]| (a - 1, b - 1))
            .collect();
        let graph = Graph::new(agents, &edges).context("config field `graph.edges`")?;
        let pinned: Vec<usize> = self.graph.pinned.iter().map(|&v| v - 1).collect();
        let pinning = Pinning::from_nodes(agents, &pinned).context("config field `graph.pinned`")?;
        let spec = NetworkSpec {
            a: to_matrix(&self.dynamics.a),
            b1: to_matrix(&self.dynamics.b1),
            b2: to_matrix(&self.dynamics.b2),
            q: to_matrix(&self.weights.q),
            r: to_matrix(&self.weights.r),
            graph,
            pinning,
            d: self.iqc.d,
            e0: self.initial_errors(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Coupling from the config, or `k·I` when `k` is given.
    pub fn coupling(&self, k: Option<f64>) -> CouplingOperator<f64> {
        let (n, nw) = (self.dynamics.n, self.coupling_dim());
        let scaled = |k: f64| CouplingOperator::MemorylessGain {
            gain: Matrix::from_fn(nw, n, |i, j| if i == j { k } else { 0.0 }),
        };
        if let Some(k) = k {
            return scaled(k);
        }
        match &self.coupling {
            Some(CouplingSection::ScaledIdentity { k }) => scaled(*k),
            Some(CouplingSection::Gain { gamma }) => CouplingOperator::MemorylessGain {
                gain: to_matrix(gamma),
            },
            Some(CouplingSection::LtiFilter { a, b, c, d }) => CouplingOperator::LtiFilter {
                a: to_matrix(a),
                b: to_matrix(b),
                c: to_matrix(c),
                d: to_matrix(d),
            },
            None => scaled(0.0),
        }
    }

    pub fn sim_config(&self, k: Option<f64>) -> Result<SimConfig<f64>> {
        let sim = self
            .simulation
            .as_ref()
            .ok_or_else(|| anyhow!("config field `simulation`: section required for simulation"))?;
        Ok(SimConfig {
            t_final: sim.t_final,
            dt: sim.dt,
            leader_init: sim.x0_init.clone(),
            agent_init: sim.agent_init.clone(),
            coupling: self.coupling(k),
            record_stride: sim.record_stride,
        })
    }

    pub fn method(&self) -> Option<Method> {
        self.synthesis.method.as_deref().and_then(|m| m.parse().ok())
    }

    /// Margin tolerance: environment override, then the config, then the
    /// library default.
    pub fn margin_tol(&self) -> Result<f64> {
        if let Some(v) = env_margin_tol()? {
            return Ok(v);
        }
        Ok(self.synthesis.margin_tol.unwrap_or(DEFAULT_MARGIN_TOL))
    }

    /// SHA-256 over the canonical JSON of everything a certificate depends
    /// on: dynamics, weights, graph (edges and pins sorted), `d` and the
    /// initial errors.
    pub fn spec_hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            dynamics: &'a Dynamics,
            weights: &'a Weights,
            agents: usize,
            edges: Vec<[usize; 2]>,
            pinned: Vec<usize>,
            d: f64,
            initial_errors: Option<Rows>,
        }
        let mut edges: Vec<[usize; 2]> = self
            .graph
            .edges
            .iter()
            .map(|&[a, b]| [a.min(b), a.max(b)])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let mut pinned = self.graph.pinned.clone();
        pinned.sort_unstable();
        pinned.dedup();
        let canon = Canonical {
            dynamics: &self.dynamics,
            weights: &self.weights,
            agents: self.graph.agents,
            edges,
            pinned,
            d: self.iqc.d,
            initial_errors: self.initial_errors(),
        };
        let bytes = serde_json::to_vec(&canon).expect("plain data serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// The pendulum chain with spring constant `k`, leader at `(0.1, 0)`,
    /// agents at rest, 20 s at 1 ms.
    pub fn pendulum(k: f64) -> Self {
        let spec = demo::pendulum::<f64>();
        let sim = demo::pendulum_sim_config::<f64>(k, spec.agent_count());
        let rows = |m: &Matrix<f64>| m.to_rows();
        ConfigFile {
            dynamics: Dynamics {
                n: spec.state_dim(),
                m_in: spec.input_dim(),
                a: rows(&spec.a),
                b1: rows(&spec.b1),
                b2: rows(&spec.b2),
            },
            weights: Weights {
                q: rows(&spec.q),
                r: rows(&spec.r),
            },
            graph: GraphSection {
                agents: spec.agent_count(),
                edges: spec.graph.edges().iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
                pinned: spec.pinning.pinned_nodes().iter().map(|v| v + 1).collect(),
            },
            iqc: IqcSection { d: spec.d },
            coupling: Some(CouplingSection::ScaledIdentity { k }),
            simulation: Some(SimulationSection {
                dt: sim.dt,
                t_final: sim.t_final,
                x0_init: sim.leader_init,
                agent_init: sim.agent_init,
                record_stride: sim.record_stride,
            }),
            synthesis: SynthesisSection {
                method: Some(Method::Coupled.as_str().into()),
                margin_tol: Some(DEFAULT_MARGIN_TOL),
            },
        }
    }
}

pub const TOL_ENV: &str = "CONSENSUS_FORGE_TOL";

pub fn env_margin_tol() -> Result<Option<f64>> {
    match std::env::var(TOL_ENV) {
        Ok(s) => {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| anyhow!("{TOL_ENV}={s:?} is not a number"))?;
            if !(v > 0.0) {
                bail!("{TOL_ENV} must be positive, got {v}");
            }
            Ok(Some(v))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{TOL_ENV}: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum_text() -> String {
        serde_json::to_string_pretty(&ConfigFile::pendulum(0.5)).unwrap()
    }

    #[test]
    fn round_trip() {
        let cfg = ConfigFile::pendulum(0.5);
        let back = parse(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.spec_hash(), cfg.spec_hash());
    }

    #[test]
    fn spec_matches_demo() {
        let spec = ConfigFile::pendulum(0.5).spec().unwrap();
        let demo = demo::pendulum::<f64>();
        assert_eq!(spec.a, demo.a);
        assert_eq!(spec.b1, demo.b1);
        assert_eq!(spec.b2, demo.b2);
        assert_eq!(spec.e0, demo.e0);
        assert_eq!(spec.graph, demo.graph);
    }

    #[test]
    fn row_length_error_names_field() {
        let mut v: serde_json::Value = serde_json::from_str(&pendulum_text()).unwrap();
        v["dynamics"]["A"][1].as_array_mut().unwrap().push(1.0.into());
        let err = parse(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("dynamics.A[1]"), "{err}");
    }

    #[test]
    fn type_error_names_field() {
        let mut v: serde_json::Value = serde_json::from_str(&pendulum_text()).unwrap();
        v["weights"]["R"][0][0] = serde_json::Value::String("x".into());
        let err = parse(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("weights.R[0][0]"), "{err}");
    }

    #[test]
    fn node_range_checked() {
        let mut cfg = ConfigFile::pendulum(0.5);
        cfg.graph.pinned = vec![4];
        let err = cfg.check().unwrap_err().to_string();
        assert!(err.contains("graph.pinned[0]"), "{err}");
    }

    #[test]
    fn hash_ignores_edge_order_but_not_values() {
        let a = ConfigFile::pendulum(0.5);
        let mut b = a.clone();
        b.graph.edges = vec![[3, 2], [2, 1]];
        b.coupling = Some(CouplingSection::ScaledIdentity { k: 0.9 });
        assert_eq!(a.spec_hash(), b.spec_hash());
        b.weights.r[0][0] = 0.2;
        assert_ne!(a.spec_hash(), b.spec_hash());
    }
}
