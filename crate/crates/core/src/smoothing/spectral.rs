//! Low-pass projection of per-landmark scalars onto the smoothest Laplacian modes.
//!
//! The constant mode is carried exactly; the remaining `k - 1` modes come from a
//! dense eigendecomposition when the graph is small relative to `k`, and from
//! Chebyshev-filtered subspace iteration otherwise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SmoothingError;

const FILTER_DEGREE: usize = 16;
const MAX_ITERATIONS: usize = 300;
const RESIDUAL_TOLERANCE: f64 = 1e-10;
const DENSE_FALLBACK_LIMIT: usize = 2000;
const SUBSPACE_SEED: u64 = 0x5eed_1a91;

/// Undirected graph in compressed adjacency form.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Graph {
    /// Builds from an edge list; duplicates and self-loops are dropped.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Self { offsets, neighbors }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in self.neighbors(i) {
                let j = j as usize;
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }

    /// `y = (D - A) x`.
    pub fn laplacian_apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let nb = self.neighbors(i);
            let s: f64 = nb.iter().map(|&j| x[j as usize]).sum();
            *yi = nb.len() as f64 * x[i] - s;
        }
    }

    pub fn dense_laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            l[(i, i)] = self.degree(i) as f64;
            for &j in self.neighbors(i) {
                l[(i, j as usize)] = -1.0;
            }
        }
        l
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            self.laplacian_apply(x.column(j).as_slice(), y.column_mut(j).as_mut_slice());
        }
        y
    }
}

/// The `k` smoothest Laplacian modes of a connected graph.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    n: usize,
    k: usize,
    /// Non-constant modes, `n x (k - 1)`; `None` when `k == n` (the full basis).
    modes: Option<DMatrix<f64>>,
    eigenvalues: Vec<f64>,
    converged: bool,
    iterations: usize,
}

impl SpectralBasis {
    pub fn compute(graph: &Graph, k: usize) -> Result<Self, SmoothingError> {
        let n = graph.node_count();
        if k == 0 || k > n {
            return Err(SmoothingError::KTooLarge { k, n });
        }
        if !graph.is_connected() {
            return Err(SmoothingError::DisconnectedGraph);
        }
        if k == n {
            return Ok(Self {
                n,
                k,
                modes: None,
                eigenvalues: Vec::new(),
                converged: true,
                iterations: 0,
            });
        }
        if k == 1 {
            return Ok(Self {
                n,
                k,
                modes: Some(DMatrix::zeros(n, 0)),
                eigenvalues: vec![0.0],
                converged: true,
                iterations: 0,
            });
        }
        let pad = 8.max(k / 2);
        let block = k - 1 + pad;
        if block >= n - 1 {
            return Ok(dense_basis(graph, k));
        }
        let basis = subspace_iteration(graph, k, block);
        if !basis.converged && n <= DENSE_FALLBACK_LIMIT {
            return Ok(dense_basis(graph, k));
        }
        Ok(basis)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn mode_count(&self) -> usize {
        self.k
    }

    pub fn is_full(&self) -> bool {
        self.modes.is_none()
    }

    /// Ascending eigenvalues of the retained modes (empty for the full basis).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Orthogonal projection `U_k U_k^T r`, no clamping.
    pub fn project(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.n, "projection length");
        let Some(q) = &self.modes else {
            return r.to_vec();
        };
        let mean = r.iter().sum::<f64>() / self.n as f64;
        let centered = DVector::from_iterator(self.n, r.iter().map(|v| v - mean));
        let coeffs = q.tr_mul(&centered);
        let low = q * coeffs;
        low.iter().map(|v| v + mean).collect()
    }
}

fn dense_basis(graph: &Graph, k: usize) -> SpectralBasis {
    let n = graph.node_count();
    let eig = SymmetricEigen::new(graph.dense_laplacian());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut q = DMatrix::zeros(n, k - 1);
    for (c, &idx) in order[1..k].iter().enumerate() {
        q.set_column(c, &eig.eigenvectors.column(idx));
    }
    orthonormalize(&mut q);
    SpectralBasis {
        n,
        k,
        modes: Some(q),
        eigenvalues: std::iter::once(0.0)
            .chain(order[1..k].iter().map(|&i| eig.eigenvalues[i]))
            .collect(),
        converged: true,
        iterations: 0,
    }
}

/// Removes the constant component, then orthonormalizes; twice for stability.
fn orthonormalize(v: &mut DMatrix<f64>) {
    for _ in 0..2 {
        for mut col in v.column_iter_mut() {
            let mean = col.sum() / col.len() as f64;
            col.add_scalar_mut(-mean);
        }
        let q = v.clone().qr().q();
        v.copy_from(&q.columns(0, v.ncols()));
    }
}

/// Rayleigh-Ritz on the block; returns ascending Ritz values, the rotated block and `L` times it.
fn rayleigh_ritz(graph: &Graph, v: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let lv = graph.apply_block(v);
    let h = v.tr_mul(&lv);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let m = v.ncols();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut w = DMatrix::zeros(m, m);
    for (c, &idx) in order.iter().enumerate() {
        w.set_column(c, &eig.eigenvectors.column(idx));
    }
    let theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (theta, v * &w, lv * w)
}

/// Degree-`m` Chebyshev polynomial that damps the interval `[cut, upper]`.
fn chebyshev_filter(graph: &Graph, x: &DMatrix<f64>, cut: f64, upper: f64) -> DMatrix<f64> {
    let e = 0.5 * (upper - cut);
    let c = 0.5 * (upper + cut);
    let mut prev = x.clone();
    let mut cur = (graph.apply_block(x) - x * c) / e;
    for _ in 1..FILTER_DEGREE {
        let next = (graph.apply_block(&cur) - &cur * c) * (2.0 / e) - &prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn subspace_iteration(graph: &Graph, k: usize, block: usize) -> SpectralBasis {
    let n = graph.node_count();
    let wanted = k - 1;
    let upper = 2.0 * graph.max_degree() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(SUBSPACE_SEED);
    let mut v = DMatrix::from_fn(n, block, |_, _| StandardNormal.sample(&mut rng));
    orthonormalize(&mut v);
    let (mut theta, mut v, mut lv) = rayleigh_ritz(graph, &v);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let residual = (0..wanted)
            .map(|j| (lv.column(j) - v.column(j) * theta[j]).norm())
            .fold(0.0, f64::max);
        if residual <= RESIDUAL_TOLERANCE * upper {
            converged = true;
            break;
        }
        let cut = theta[block - 1];
        if upper - cut <= 1e-12 * upper {
            break;
        }
        let mut filtered = chebyshev_filter(graph, &v, cut, upper);
        orthonormalize(&mut filtered);
        (theta, v, lv) = rayleigh_ritz(graph, &filtered);
        iterations += 1;
    }
    let q = v.columns(0, wanted).into_owned();
    SpectralBasis {
        n,
        k,
        modes: Some(q),
        eigenvalues: std::iter::once(0.0).chain(theta[..wanted].iter().copied()).collect(),
        converged,
        iterations,
    }
}

/// Spectral low-pass of one magnitude field.
#[derive(Debug, Clone)]
pub struct SpectralSmoother {
    graph: Graph,
    basis: SpectralBasis,
}

impl SpectralSmoother {
    pub fn new(n: usize, edges: &[(u32, u32)], k: usize) -> Result<Self, SmoothingError> {
        let graph = Graph::from_edges(n, edges);
        let basis = SpectralBasis::compute(&graph, k)?;
        Ok(Self { graph, basis })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// Invalid entries take the mean of their valid neighbours (0 without any),
    /// then the field is projected and negative values clamped to 0.
    pub fn smooth(&self, magnitudes: &[f64], valid: &[bool]) -> Result<Vec<f64>, SmoothingError> {
        let n = self.graph.node_count();
        for len in [magnitudes.len(), valid.len()] {
            if len != n {
                return Err(SmoothingError::LengthMismatch { expected: n, got: len });
            }
        }
        let filled = impute(&self.graph, magnitudes, valid);
        Ok(self.basis.project(&filled).into_iter().map(|v| v.max(0.0)).collect())
    }
}

fn impute(graph: &Graph, values: &[f64], valid: &[bool]) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            if valid[i] {
                return values[i];
            }
            let (sum, count) = graph
                .neighbors(i)
                .iter()
                .filter(|&&j| valid[j as usize])
                .fold((0.0, 0usize), |(s, c), &j| (s + values[j as usize], c + 1));
            if count == 0 { 0.0 } else { sum / count as f64 }
        })
        .collect()
}
