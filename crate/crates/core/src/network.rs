//! Communication graph, pinning, and the spectral data of the grounded
//! Laplacian `L + G`.
//!
//! Node indices are zero-based throughout the library API.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Matrix};
use crate::scalar::{tol, to_f64, Real};

/// Simple undirected graph with unit edge weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Validates and normalizes the edge list: endpoints are stored as
    /// `(min, max)` in insertion order.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has an endpoint outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!(
                    "repeated edge ({}, {})",
                    e.0, e.1
                )));
            }
            normalized.push(e);
        }
        Ok(Self {
            node_count,
            edges: normalized,
        })
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| match (a == i, b == i) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.node_count];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        visited.into_iter().all(|v| v)
    }

    pub fn adjacency<T: Real>(&self) -> Matrix<T> {
        let mut a = Matrix::zeros(self.node_count, self.node_count);
        for &(i, j) in &self.edges {
            a[(i, j)] = T::one();
            a[(j, i)] = T::one();
        }
        a
    }
}

/// Which agents observe the leader directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pinning {
    gains: Vec<bool>,
}

impl Pinning {
    pub fn new(gains: Vec<bool>) -> Self {
        Self { gains }
    }

    /// Pins exactly the listed nodes of an `n`-node graph.
    pub fn from_nodes(n: usize, pinned: &[usize]) -> Result<Self> {
        let mut gains = vec![false; n];
        for &p in pinned {
            if p >= n {
                return Err(Error::InvalidGraph(format!(
                    "pinned node {p} outside 0..{n}"
                )));
            }
            gains[p] = true;
        }
        Ok(Self { gains })
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.gains[i]
    }

    pub fn gain<T: Real>(&self, i: usize) -> T {
        if self.gains[i] {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn pinned_nodes(&self) -> Vec<usize> {
        (0..self.gains.len()).filter(|&i| self.gains[i]).collect()
    }

    pub fn any(&self) -> bool {
        self.gains.iter().any(|&g| g)
    }

    /// `G = diag(g_1, ..., g_N)`.
    pub fn matrix<T: Real>(&self) -> Matrix<T> {
        let d: Vec<T> = (0..self.gains.len()).map(|i| self.gain(i)).collect();
        Matrix::diag(&d)
    }
}

/// `L = D - A` for a simple graph.
pub fn build_laplacian<T: Real>(graph: &Graph) -> Matrix<T> {
    let n = graph.node_count();
    let mut l = -&graph.adjacency::<T>();
    for i in 0..n {
        l[(i, i)] = T::from_usize(graph.degree(i)).unwrap();
    }
    l
}

/// `L + G`, rejected unless positive definite.
pub fn grounded_matrix<T: Real>(laplacian: &Matrix<T>, pinning: &Pinning) -> Result<Matrix<T>> {
    if !laplacian.is_square() || laplacian.rows() != pinning.len() {
        return Err(Error::dimension(
            "grounded matrix",
            laplacian.rows(),
            pinning.len(),
        ));
    }
    let lg = laplacian + &pinning.matrix();
    let eig = sym_eigen(&lg)?;
    let min = eig.values[0];
    let scale = lg.max_abs() + T::one();
    if min <= tol::<T>(1e-12) * scale {
        return Err(Error::NotPositiveDefinite {
            context: "grounded matrix L + G (graph disconnected or no pinned node)".into(),
            min_eigenvalue: to_f64(min),
        });
    }
    Ok(lg)
}

/// Orthogonal diagonalization of `L + G`, before the pinning-dependent
/// coefficients are attached.
#[derive(Debug, Clone)]
pub struct Spectrum<T> {
    /// Columns are orthonormal eigenvectors.
    pub t: Matrix<T>,
    /// Ascending eigenvalues.
    pub lambdas: Vec<T>,
}

/// Everything the synthesis LMIs consume from the network structure.
#[derive(Debug, Clone)]
pub struct SpectralData<T> {
    pub t: Matrix<T>,
    pub lambdas: Vec<T>,
    /// `f = Tᵀ G T`.
    pub f: Matrix<T>,
    /// `p_i = f_ii - λ_i`.
    pub p: Vec<T>,
    /// `q_i = (Σ_{j≠i} f_ij²)^{1/2}`.
    pub q: Vec<T>,
    pub lambda_min: T,
    pub lambda_max: T,
    /// `max_i p_i²`.
    pub p_sq: T,
    /// `max_i q_i²`.
    pub q_sq: T,
}

impl<T: Real> SpectralData<T> {
    /// Laplacian, grounding, diagonalization and coefficients in one call.
    pub fn analyze(graph: &Graph, pinning: &Pinning) -> Result<Self> {
        if pinning.len() != graph.node_count() {
            return Err(Error::dimension(
                "pinning vector",
                graph.node_count(),
                pinning.len(),
            ));
        }
        let lg = grounded_matrix(&build_laplacian(graph), pinning)?;
        let spectrum = spectral_decomposition(&lg)?;
        Ok(coupling_coefficients(&spectrum, pinning))
    }

    pub fn node_count(&self) -> usize {
        self.lambdas.len()
    }
}

/// Diagonalizes a symmetric positive definite `L + G`.
pub fn spectral_decomposition<T: Real>(lg: &Matrix<T>) -> Result<Spectrum<T>> {
    if !lg.is_square() {
        return Err(Error::dimension("spectral decomposition", lg.rows(), lg.cols()));
    }
    let scale = lg.max_abs() + T::one();
    if lg.asymmetry() > tol::<T>(1e-12) * scale {
        return Err(Error::InvalidInput("L + G must be symmetric".into()));
    }
    let eig = sym_eigen(lg)?;
    if eig.values.first().is_some_and(|&l| l <= T::zero()) {
        return Err(Error::NotPositiveDefinite {
            context: "spectral decomposition".into(),
            min_eigenvalue: to_f64(eig.values[0]),
        });
    }
    let n = lg.rows();
    let orth = &(&eig.vectors.transpose() * &eig.vectors) - &Matrix::identity(n);
    if orth.frobenius_norm() > tol::<T>(1e-12) * T::from_usize(n.max(1)).unwrap() {
        return Err(Error::NumericalFailure(
            "eigenvector basis lost orthogonality".into(),
        ));
    }
    Ok(Spectrum {
        t: eig.vectors,
        lambdas: eig.values,
    })
}

/// Attaches `f = TᵀGT`, `p_i`, `q_i` and their extremes to a spectrum.
pub fn coupling_coefficients<T: Real>(spectrum: &Spectrum<T>, pinning: &Pinning) -> SpectralData<T> {
    let t = &spectrum.t;
    let n = t.rows();
    let f = &(&t.transpose() * &pinning.matrix()) * t;
    let p: Vec<T> = (0..n).map(|i| f[(i, i)] - spectrum.lambdas[i]).collect();
    let q: Vec<T> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| f[(i, j)] * f[(i, j)])
                .sum::<T>()
                .sqrt()
        })
        .collect();
    let fold_max = |v: &[T]| v.iter().fold(T::zero(), |m, &x| m.max(x * x));
    SpectralData {
        t: t.clone(),
        lambdas: spectrum.lambdas.clone(),
        lambda_min: spectrum.lambdas.iter().fold(T::infinity(), |m, &x| m.min(x)),
        lambda_max: spectrum
            .lambdas
            .iter()
            .fold(T::neg_infinity(), |m, &x| m.max(x)),
        p_sq: fold_max(&p),
        q_sq: fold_max(&q),
        f,
        p,
        q,
    }
}
