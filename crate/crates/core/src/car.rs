//! Pathway-structured conditional autoregressive (CAR) operators.
//!
//! Each pathway `p` contributes a symmetric operator `S_p` and the CAR matrix is
//! `C(phi) = sum_p phi_p S_p`. Observations follow `N(mu, (I - C(phi))^{-1} sigma2)`.
//!
//! `G_p A_p` (row-normalised adjacency) is not symmetric when neighbour counts differ,
//! so the operator used is its symmetric part `S_p = (G_p A_p + A_p G_p) / 2`. The
//! admissible interval for `phi_p` is `(1 / (P xi_min), 1 / (P xi_max))` using the
//! extreme eigenvalues of `S_p`; inside the resulting box `I - C(phi)` is positive
//! definite because every term has operator norm below `1 / P`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::Serialize;

use crate::data::PathwayGraph;
use crate::error::{Error, Result};

/// Operators and admissible `phi` interval of one pathway.
#[derive(Debug, Clone)]
pub struct PathwayOperator {
    pub id: String,
    /// Inverse shortest-path lengths between members (zero diagonal).
    pub adjacency: DMatrix<f64>,
    /// Diagonal of `G_p`: reciprocal neighbour counts, zero for isolated metabolites.
    pub weights: DVector<f64>,
    /// Symmetrised operator `(G_p A_p + A_p G_p) / 2`.
    pub operator: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub lower: f64,
    pub upper: f64,
    pub inert: bool,
    /// Non-zero upper-triangle entries of `operator`, cached for fast traces.
    entries: Vec<(usize, usize, f64)>,
}

impl PathwayOperator {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, phi: f64) -> bool {
        phi > self.lower && phi < self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// `trace(S_p B)` for a symmetric matrix `B`.
    pub fn trace_with(&self, b: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, s)| 2.0 * s * b[(i, j)])
            .sum()
    }
}

/// All pathway operators over an `M`-metabolite panel.
#[derive(Debug, Clone)]
pub struct PathwayDesign {
    pub n_metabolites: usize,
    pub pathways: Vec<PathwayOperator>,
}

const EIGEN_TOLERANCE: f64 = 1e-10;

/// Unweighted all-pairs shortest paths restricted to one pathway's members.
fn shortest_path_lengths(members: &[usize], edges: &[(usize, usize)], m: usize) -> DMatrix<f64> {
    let local: std::collections::HashMap<usize, usize> =
        members.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let n = members.len();
    let mut nbrs = vec![Vec::new(); n];
    for &(a, b) in edges {
        if let (Some(&ia), Some(&ib)) = (local.get(&a), local.get(&b)) {
            nbrs[ia].push(ib);
            nbrs[ib].push(ia);
        }
    }
    let mut adjacency = DMatrix::zeros(m, m);
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        dist.fill(usize::MAX);
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &nbrs[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (dst, &d) in dist.iter().enumerate() {
            // unreachable pairs keep adjacency 0
            if dst != src && d != usize::MAX {
                adjacency[(members[src], members[dst])] = 1.0 / d as f64;
            }
        }
    }
    adjacency
}

pub fn build_pathway_design(graph: &PathwayGraph, n_metabolites: usize) -> PathwayDesign {
    let m = n_metabolites;
    let p_count = graph.pathways.len() as f64;
    let pathways = graph
        .pathways
        .iter()
        .map(|pathway| {
            let adjacency = shortest_path_lengths(&pathway.members, &pathway.edges, m);
            let weights = DVector::from_iterator(
                m,
                (0..m).map(|i| {
                    let count = adjacency.row(i).iter().filter(|&&a| a > 0.0).count();
                    if count > 0 {
                        1.0 / count as f64
                    } else {
                        0.0
                    }
                }),
            );
            let operator = DMatrix::from_fn(m, m, |i, j| {
                0.5 * (weights[i] + weights[j]) * adjacency[(i, j)]
            });
            let mut entries = Vec::new();
            for j in 0..m {
                for i in 0..j {
                    let s = operator[(i, j)];
                    if s != 0.0 {
                        entries.push((i, j, s));
                    }
                }
            }
            let inert = entries.is_empty();
            let (min_eigenvalue, max_eigenvalue, lower, upper) = if inert {
                (0.0, 0.0, -1.0, 1.0)
            } else {
                let eig = SymmetricEigen::try_new(operator.clone(), EIGEN_TOLERANCE, 0)
                    .expect("symmetric eigensolver converges on a finite symmetric matrix");
                let lo = eig.eigenvalues.min();
                let hi = eig.eigenvalues.max();
                (lo, hi, 1.0 / (p_count * lo), 1.0 / (p_count * hi))
            };
            PathwayOperator {
                id: pathway.id.clone(),
                adjacency,
                weights,
                operator,
                min_eigenvalue,
                max_eigenvalue,
                lower,
                upper,
                inert,
                entries,
            }
        })
        .collect();
    PathwayDesign {
        n_metabolites: m,
        pathways,
    }
}

impl PathwayDesign {
    pub fn len(&self) -> usize {
        self.pathways.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pathways.is_empty()
    }

    pub fn check_bounds(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.pathways.len() {
            return Err(Error::Domain(format!(
                "expected {} phi values, got {}",
                self.pathways.len(),
                phi.len()
            )));
        }
        for (p, (&v, op)) in phi.iter().zip(&self.pathways).enumerate() {
            if !op.contains(v) {
                return Err(Error::Domain(format!(
                    "phi for pathway {p} (`{}`) = {v} outside ({}, {})",
                    op.id, op.lower, op.upper
                )));
            }
        }
        Ok(())
    }

    /// `C(phi)` without bounds checks.
    pub fn car_matrix_unchecked(&self, phi: &[f64]) -> DMatrix<f64> {
        let m = self.n_metabolites;
        let mut c = DMatrix::zeros(m, m);
        for (op, &v) in self.pathways.iter().zip(phi) {
            for &(i, j, s) in &op.entries {
                c[(i, j)] += v * s;
                c[(j, i)] += v * s;
            }
        }
        c
    }

    /// `I - C(phi)` without bounds checks.
    pub fn precision_kernel(&self, phi: &[f64]) -> DMatrix<f64> {
        let mut q = -self.car_matrix_unchecked(phi);
        for i in 0..self.n_metabolites {
            q[(i, i)] += 1.0;
        }
        q
    }

    pub fn report(&self) -> DesignReport {
        let to_rows = |a: &DMatrix<f64>| {
            (0..a.nrows())
                .map(|i| a.row(i).iter().copied().collect())
                .collect()
        };
        DesignReport {
            n_metabolites: self.n_metabolites,
            pathways: self
                .pathways
                .iter()
                .map(|op| PathwayReport {
                    id: op.id.clone(),
                    inert: op.inert,
                    lower: op.lower,
                    upper: op.upper,
                    min_eigenvalue: op.min_eigenvalue,
                    max_eigenvalue: op.max_eigenvalue,
                    adjacency: to_rows(&op.adjacency),
                    weights: op.weights.iter().copied().collect(),
                    operator: to_rows(&op.operator),
                })
                .collect(),
        }
    }
}

/// JSON-serialisable dump of a design for inspection.
#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub n_metabolites: usize,
    pub pathways: Vec<PathwayReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathwayReport {
    pub id: String,
    pub inert: bool,
    pub lower: f64,
    pub upper: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub adjacency: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub operator: Vec<Vec<f64>>,
}

pub fn car_matrix(phi: &[f64], design: &PathwayDesign) -> Result<DMatrix<f64>> {
    design.check_bounds(phi)?;
    Ok(design.car_matrix_unchecked(phi))
}

/// Cholesky factorisation of `I - C(phi)` shared by all observations with the same `phi`.
#[derive(Debug, Clone)]
pub struct CarFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl CarFactor {
    pub fn new(phi: &[f64], design: &PathwayDesign) -> Result<Self> {
        design.check_bounds(phi)?;
        Self::from_kernel(design.precision_kernel(phi))
            .ok_or_else(|| Error::NotPositiveDefinite { phi: phi.to_vec() })
    }

    /// Factorises a precision kernel; `None` if it is not positive definite.
    pub fn from_kernel(kernel: DMatrix<f64>) -> Option<Self> {
        let chol = Cholesky::new(kernel)?;
        let l = chol.l_dirty();
        let log_det = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        log_det.is_finite().then_some(Self { chol, log_det })
    }

    /// `log det (I - C(phi))`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Lower-triangular factor `L` with `L L^T = I - C(phi)`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Quadratic form `r^T (I - C) r`.
    pub fn quadratic(&self, r: &[f64]) -> f64 {
        // ||L^T r||^2
        let l = self.chol.l_dirty();
        let n = r.len();
        let mut acc = 0.0;
        for j in 0..n {
            let mut s = 0.0;
            for i in j..n {
                s += l[(i, j)] * r[i];
            }
            acc += s * s;
        }
        acc
    }

    /// `log N(x | mu, (I - C)^{-1} sigma2)`.
    pub fn logpdf(&self, x: &[f64], mu: &[f64], sigma2: f64) -> f64 {
        if !(sigma2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        let m = x.len() as f64;
        let r: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
        -0.5 * m * (2.0 * PI * sigma2).ln() + 0.5 * self.log_det - 0.5 * self.quadratic(&r) / sigma2
    }
}

pub fn car_gaussian_logpdf(
    x: &[f64],
    mu: &[f64],
    phi: &[f64],
    sigma2: f64,
    design: &PathwayDesign,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    if x.len() != design.n_metabolites || mu.len() != design.n_metabolites {
        return Err(Error::Domain("vector length does not match design".into()));
    }
    Ok(CarFactor::new(phi, design)?.logpdf(x, mu, sigma2))
}

/// `d/d phi_p log det(I - C(phi)) = -trace((I - C)^{-1} S_p)`.
pub fn phi_logdet_gradient(phi: &[f64], design: &PathwayDesign) -> Result<Vec<f64>> {
    let factor = CarFactor::new(phi, design)?;
    Ok(logdet_gradient_from_inverse(&factor.inverse(), design))
}

pub(crate) fn logdet_gradient_from_inverse(inv: &DMatrix<f64>, design: &PathwayDesign) -> Vec<f64> {
    design
        .pathways
        .iter()
        .map(|op| -op.trace_with(inv))
        .collect()
}
