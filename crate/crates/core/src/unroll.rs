//! Manifold unrolling: the regularized-kernel fit restricted to k-nearest
//! neighbour pairs, with the trace *rewarded* instead of penalized so that
//! non-neighbours drift apart and a curved manifold flattens out.
//!
//! Two constraints keep the problem well posed. The kernel is centered
//! (rows sum to zero), which removes the translation freedom left by
//! distance data. The trace is capped at `cap_factor · n · D² / 2`, where
//! `D` is the shortest-path diameter of the neighbour graph measured in
//! root-dissimilarity units; any centered configuration that reproduces the
//! neighbour distances exactly has trace at most `n · D² / 2`, so hitting the
//! cap means `μ` is large enough to make the objective unbounded.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{eigen_top, pseudo_attributes};
use crate::rke::splitting::ConeSpec;
use crate::rke::{count_components, solve_with_spec, Pair, RkeProblem, RkeSolution, SolverOptions};

/// Where neighbour distances come from. Both variants yield squared
/// dissimilarities.
#[derive(Debug, Clone, Copy)]
pub enum DistanceSource<'a> {
    /// Points in Euclidean space; squared distances are computed.
    Points(&'a [Vec<f64>]),
    /// Complete symmetric matrix of squared dissimilarities.
    Matrix(&'a DMatrix<f64>),
}

impl DistanceSource<'_> {
    fn n(&self) -> usize {
        match self {
            DistanceSource::Points(p) => p.len(),
            DistanceSource::Matrix(m) => m.nrows(),
        }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            DistanceSource::Points(p) => p[i].iter().zip(&p[j]).map(|(a, b)| (a - b).powi(2)).sum(),
            DistanceSource::Matrix(m) => m[(i, j)],
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DistanceSource::Points(p) => {
                let d = p.first().map(Vec::len).ok_or(Error::EmptyInput("points"))?;
                for q in p.iter() {
                    if q.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, found: q.len() });
                    }
                }
            }
            DistanceSource::Matrix(m) => {
                if m.nrows() != m.ncols() {
                    return Err(Error::DimensionMismatch {
                        expected: m.nrows(),
                        found: m.ncols(),
                    });
                }
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if !(m[(i, j)] >= 0.0) || (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * m[(i, j)].abs().max(1.0) {
                            return Err(Error::invalid("dissimilarities", format!("entry ({i}, {j}) must be nonnegative and symmetric")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Symmetrized union of each object's k nearest neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub n: usize,
    pub k: usize,
    /// Edges with `i < j`, sorted, carrying the input dissimilarities.
    pub edges: Vec<Pair>,
    /// The k neighbours chosen by each object before symmetrization.
    pub neighbours: Vec<Vec<usize>>,
}

impl KnnGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        deg
    }

    pub fn problem(&self) -> RkeProblem {
        RkeProblem::new(self.n, self.edges.clone()).expect("knn edges are valid by construction")
    }

    /// Largest shortest-path distance, with edge lengths `√d`.
    pub fn diameter(&self) -> f64 {
        let n = self.n;
        let mut dist = vec![f64::INFINITY; n * n];
        for i in 0..n {
            dist[i * n + i] = 0.0;
        }
        for e in &self.edges {
            let w = e.d.max(0.0).sqrt();
            dist[e.i * n + e.j] = dist[e.i * n + e.j].min(w);
            dist[e.j * n + e.i] = dist[e.j * n + e.i].min(w);
        }
        for via in 0..n {
            for a in 0..n {
                let da = dist[a * n + via];
                if !da.is_finite() {
                    continue;
                }
                for b in 0..n {
                    let cand = da + dist[via * n + b];
                    if cand < dist[a * n + b] {
                        dist[a * n + b] = cand;
                    }
                }
            }
        }
        dist.into_iter().fold(0.0, f64::max)
    }
}

pub fn knn_graph(source: DistanceSource<'_>, k: usize) -> Result<KnnGraph> {
    source.validate()?;
    let n = source.n();
    if k == 0 || k >= n {
        return Err(Error::invalid("k", format!("{k} not in [1, {})", n)));
    }
    let mut neighbours = Vec::with_capacity(n);
    let mut edge_set = std::collections::BTreeMap::new();
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (source.get(i, j), j)).collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let chosen: Vec<usize> = cand.iter().take(k).map(|&(_, j)| j).collect();
        for &j in &chosen {
            let key = (i.min(j), i.max(j));
            edge_set.entry(key).or_insert_with(|| source.get(key.0, key.1));
        }
        neighbours.push(chosen);
    }
    let edges: Vec<Pair> = edge_set.into_iter().map(|((i, j), d)| Pair { i, j, d }).collect();
    let components = count_components(n, edges.iter().map(|e| (e.i, e.j)));
    if components > 1 {
        return Err(Error::DisconnectedGraph { k, components });
    }
    Ok(KnnGraph { n, k, edges, neighbours })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnrollOptions {
    pub solver: SolverOptions,
    /// Multiple of the exact-fit trace bound used as the trace cap.
    pub cap_factor: f64,
}

impl Default for UnrollOptions {
    fn default() -> Self {
        UnrollOptions {
            solver: SolverOptions::default(),
            cap_factor: 10.0,
        }
    }
}

/// Trace cap `cap_factor · n · D² / 2`.
pub fn trace_cap(graph: &KnnGraph, cap_factor: f64) -> f64 {
    let d = graph.diameter();
    cap_factor * graph.n as f64 * d * d / 2.0
}

/// Minimizes `Σ_edges |d - d̂| - μ tr K` over centered PSD kernels with
/// bounded trace.
pub fn unroll(graph: &KnnGraph, mu: f64, opts: &UnrollOptions) -> Result<RkeSolution> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::invalid("mu", format!("{mu} must be positive")));
    }
    let problem = graph.problem();
    if !problem.is_connected() {
        return Err(Error::DisconnectedGraph {
            k: graph.k,
            components: problem.components(),
        });
    }
    let spec = ConeSpec {
        trace_weight: -mu,
        centered: true,
        trace_cap: Some(trace_cap(graph, opts.cap_factor)),
    };
    solve_with_spec(&problem, mu, spec, &opts.solver, Vec::new())
}

/// Leading `p` pseudo-attribute coordinates of a fitted kernel, one row per
/// object.
pub fn unrolled_embedding(sol: &RkeSolution, p: usize) -> Result<DMatrix<f64>> {
    let es = eigen_top(&sol.k, p)?;
    Ok(pseudo_attributes(&es))
}
