//! Maximum-entropy null models over simple undirected graphs.
//!
//! Each null constrains expected values (edge count, degrees, eigenvector
//! projections, per-distance-bin edge counts) and has Bernoulli edge
//! probabilities P_ij = sigma(linear form in the Lagrange multipliers).
//! Multipliers are found by maximizing the corresponding concave objective
//! (quasi-Newton ascent with a damped Newton finishing stage); at a
//! stationary point the gradient components equal the constraint residuals,
//! so convergence and constraint satisfaction coincide.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{distance_matrix, DistanceMatrix, Graph};
use crate::optim::{minimize, newton_minimize, LbfgsOptions};
use crate::scalar::{log1p_exp, sigmoid, Scalar};
use crate::spectral::{top_eigenpairs, EigenBasis};

/// Divergent configuration/gravity multipliers are pinned at this magnitude;
/// sigma(+-30) is within 1e-13 of {1, 0}, so a pinned multiplier cannot spoil
/// a 1e-6 residual. RDPG node multipliers are never pinned: they scale
/// inversely with the basis column norm, so large values can be legitimate.
pub const MULTIPLIER_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Max-norm gradient tolerance for the multiplier solve.
    pub grad_tol: f64,
    /// Largest acceptable constraint residual of the returned model.
    pub constraint_tol: f64,
    pub max_iters: usize,
    /// History size of the limited-memory quasi-Newton maximizer.
    pub memory: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tol: 1e-8,
            constraint_tol: 1e-6,
            max_iters: 500,
            memory: 10,
        }
    }
}

/// Distance binning for the gravity null.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BinSpec {
    /// Equal-pair-count bins over all N(N-1)/2 distances.
    Quantile { count: usize },
    /// Logarithmically spaced boundaries up to the max distance.
    LogSpaced { count: usize },
    /// Explicit ascending boundaries; the last may be infinite.
    Explicit { edges: Vec<f64> },
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec::Quantile { count: 10 }
    }
}

impl BinSpec {
    /// Resolve to strictly increasing finite boundaries covering every
    /// observed distance; the last bin is closed above. Quantile boundaries
    /// that coincide are merged, so fewer bins than requested may come back.
    pub fn resolve<S: Scalar>(&self, d: &DistanceMatrix<S>) -> Result<Vec<S>> {
        let n = d.n();
        let max_d = d.max_distance();
        // all points coincident: a single bin holding distance zero
        let cover = if max_d > S::zero() { max_d } else { S::one() };
        let top = cover * S::cast(1.0 + 1e-9);

        let boundaries: Vec<S> = match self {
            BinSpec::Quantile { count } => {
                if *count == 0 {
                    return Err(Error::usage("bin count must be positive"));
                }
                let mut all: Vec<S> = Vec::with_capacity(n * (n - 1) / 2);
                for i in 0..n {
                    for j in (i + 1)..n {
                        all.push(d.get(i, j));
                    }
                }
                all.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                let m = all.len();
                let mut b = vec![S::zero()];
                for q in 1..*count {
                    let cut = all[(q * m) / count];
                    if cut > *b.last().expect("nonempty") && cut < top {
                        b.push(cut);
                    }
                }
                b.push(top);
                b
            }
            BinSpec::LogSpaced { count } => {
                if *count == 0 {
                    return Err(Error::usage("bin count must be positive"));
                }
                let mut lo = S::infinity();
                for i in 0..n {
                    for j in (i + 1)..n {
                        let v = d.get(i, j);
                        if v > S::zero() && v < lo {
                            lo = v;
                        }
                    }
                }
                if !lo.is_finite() {
                    lo = cover * S::cast(1e-6);
                }
                let ratio = (top.as_f64() / lo.as_f64()).max(1.0 + 1e-9);
                let mut b = vec![S::zero()];
                for q in 1..*count {
                    let frac = q as f64 / *count as f64;
                    let cut = S::cast(lo.as_f64() * ratio.powf(frac));
                    if cut > *b.last().expect("nonempty") && cut < top {
                        b.push(cut);
                    }
                }
                b.push(top);
                b
            }
            BinSpec::Explicit { edges } => {
                if edges.len() < 2 {
                    return Err(Error::usage("need at least two bin edges"));
                }
                let mut b: Vec<S> = edges.iter().map(|&e| S::cast(e)).collect();
                let last = b.len() - 1;
                if !b[last].is_finite() || b[last] < top {
                    b[last] = top;
                }
                b
            }
        };
        if boundaries.len() < 2 {
            return Err(Error::usage("bin resolution produced no bins"));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1] || w[0].is_nan()) {
            return Err(Error::usage("bin boundaries must be strictly increasing"));
        }
        let lo = boundaries[0];
        let hi = *boundaries.last().expect("nonempty");
        for i in 0..n {
            for j in (i + 1)..n {
                let v = d.get(i, j);
                if v < lo || v > hi {
                    return Err(Error::usage(format!(
                        "distance {v} not covered by bins [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(boundaries)
    }
}

/// Bin index of each unordered pair, fixed at fit time.
#[derive(Debug, Clone)]
pub struct PairBins {
    n: usize,
    idx: Vec<u16>,
}

impl PairBins {
    pub fn build<S: Scalar>(d: &DistanceMatrix<S>, boundaries: &[S]) -> PairBins {
        let n = d.n();
        let nbins = boundaries.len() - 1;
        let mut idx = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = d.get(i, j);
                let mut b = nbins - 1; // last bin is closed above
                for t in 0..nbins {
                    if v < boundaries[t + 1] {
                        b = t;
                        break;
                    }
                }
                idx.push(b as u16);
            }
        }
        PairBins { n, idx }
    }

    #[inline]
    pub fn bin(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.idx[i * self.n - i * (i + 1) / 2 + (j - i - 1)] as usize
    }
}

/// Which null to fit, plus solver options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullSpec {
    #[serde(flatten)]
    pub kind: NullKind,
    #[serde(default)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullKind {
    Er,
    #[serde(alias = "config")]
    Configuration,
    Rdpg {
        rank: usize,
    },
    Gravity {
        #[serde(default)]
        bins: BinSpec,
    },
}

impl NullSpec {
    pub fn new(kind: NullKind) -> Self {
        NullSpec {
            kind,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    pub max_residual: f64,
    /// Multipliers pinned at +-MULTIPLIER_CLAMP (including pinned bins).
    pub clamped: usize,
    /// Degree-zero nodes excluded from the fit (their P row is 0).
    pub excluded_nodes: Vec<usize>,
    /// Model cannot vary (P identically 0 or 1).
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// A fitted null model: edge probabilities on demand plus fit provenance.
#[derive(Debug, Clone)]
pub struct NullModel<S> {
    n: usize,
    kind: FittedKind<S>,
    pub diagnostics: FitDiagnostics,
    pub options: FitOptions,
}

#[derive(Debug, Clone)]
pub enum FittedKind<S> {
    Er {
        p: S,
    },
    Configuration {
        lambda: Vec<S>,
        excluded: Vec<bool>,
    },
    Rdpg {
        edge_multiplier: S,
        /// m-major: node_multipliers[m * n + i] multiplies v_{jm} in theta_ij.
        node_multipliers: Vec<S>,
        basis: EigenBasis<S>,
    },
    Gravity {
        lambda: Vec<S>,
        excluded: Vec<bool>,
        bin_multipliers: Vec<S>,
        boundaries: Vec<S>,
        pairs: PairBins,
    },
}

/// Dense symmetric edge-probability matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct ProbMatrix<S> {
    n: usize,
    p: Vec<S>,
}

impl<S: Scalar> ProbMatrix<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.p[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    /// Sum of P_ij over unordered pairs.
    pub fn expected_edges(&self) -> S {
        let mut total = S::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                total += self.get(i, j);
            }
        }
        total
    }

    /// Sum of P_ij (1 - P_ij) over unordered pairs.
    pub fn total_variance(&self) -> S {
        let mut total = S::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let p = self.get(i, j);
                total += p * (S::one() - p);
            }
        }
        total
    }
}

impl<S: Scalar> NullModel<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &FittedKind<S> {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            FittedKind::Er { .. } => "er",
            FittedKind::Configuration { .. } => "configuration",
            FittedKind::Rdpg { .. } => "rdpg",
            FittedKind::Gravity { .. } => "gravity",
        }
    }

    /// Probability of the edge (i, j), i != j.
    pub fn edge_probability(&self, i: usize, j: usize) -> Result<S> {
        if i == j {
            return Err(Error::usage("edge probability undefined on the diagonal"));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::usage("node index out of range"));
        }
        Ok(self.edge_probability_unchecked(i, j))
    }

    fn edge_probability_unchecked(&self, i: usize, j: usize) -> S {
        match &self.kind {
            FittedKind::Er { p } => *p,
            FittedKind::Configuration { lambda, excluded } => {
                if excluded[i] || excluded[j] {
                    S::zero()
                } else {
                    sigmoid(lambda[i] + lambda[j])
                }
            }
            FittedKind::Rdpg {
                edge_multiplier,
                node_multipliers,
                basis,
            } => {
                let mut theta = *edge_multiplier;
                for m in 0..basis.rank() {
                    let v = basis.column(m);
                    theta += node_multipliers[m * self.n + i] * v[j]
                        + node_multipliers[m * self.n + j] * v[i];
                }
                sigmoid(theta)
            }
            FittedKind::Gravity {
                lambda,
                excluded,
                bin_multipliers,
                pairs,
                ..
            } => {
                if excluded[i] || excluded[j] {
                    S::zero()
                } else {
                    sigmoid(lambda[i] + lambda[j] + bin_multipliers[pairs.bin(i, j)])
                }
            }
        }
    }

    /// Materialize the dense P matrix.
    pub fn probabilities(&self) -> ProbMatrix<S> {
        let n = self.n;
        let mut p = vec![S::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.edge_probability_unchecked(i, j);
                p[i * n + j] = v;
                p[j * n + i] = v;
            }
        }
        ProbMatrix { n, p }
    }

    /// Bernoulli log-likelihood of a graph under this model's probabilities.
    pub fn log_likelihood(&self, g: &Graph) -> S {
        let n = self.n;
        let mut ll = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = self.edge_probability_unchecked(i, j);
                if g.has_edge(i, j) {
                    ll += p.ln();
                } else {
                    ll += (S::one() - p).ln();
                }
            }
        }
        ll
    }
}

/// One independent Bernoulli draw per unordered pair.
pub fn sample<S: Scalar, R: Rng>(p: &ProbMatrix<S>, rng: &mut R) -> Graph {
    let n = p.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let u: f64 = rng.random();
            if u < p.get(i, j).as_f64() {
                edges.push((i as u32, j as u32));
            }
        }
    }
    Graph::new(n, edges).expect("sampled pairs are valid edges")
}

// ---------------------------------------------------------------------------
// Objectives. Public so validation suites can finite-difference them; each
// returns the maximization objective L and writes dL/dx (ascent orientation).
// The gradient components are exactly the constraint residuals.
// ---------------------------------------------------------------------------

/// Common face of the fit objectives: value/gradient in ascent orientation,
/// plus the Hessian of the negated (convex) objective for the Newton stage.
pub trait FitObjective<S: Scalar> {
    fn dim(&self) -> usize;
    fn value_grad(&self, x: &[S], grad: &mut [S]) -> S;
    /// Hessian of -L, positive semidefinite, written row-major (dim * dim).
    fn neg_hessian(&self, x: &[S], h: &mut [S]);
}

/// Single-multiplier ER objective; the fit itself is closed form.
pub struct ErObjective {
    pairs: f64,
    two_e: f64,
}

impl ErObjective {
    pub fn new(g: &Graph) -> ErObjective {
        let n = g.node_count() as f64;
        ErObjective {
            pairs: n * (n - 1.0) / 2.0,
            two_e: 2.0 * g.edge_count() as f64,
        }
    }

    pub fn dim(&self) -> usize {
        1
    }

    pub fn value_grad<S: Scalar>(&self, x: &[S], grad: &mut [S]) -> S {
        // constraints sum over ordered pairs, so theta = 2 lambda
        let theta = x[0] + x[0];
        let pairs = S::cast(self.pairs);
        grad[0] = S::cast(self.two_e) - (pairs + pairs) * sigmoid(theta);
        S::cast(self.two_e) * x[0] - pairs * log1p_exp(theta)
    }
}

impl<S: Scalar> FitObjective<S> for ErObjective {
    fn dim(&self) -> usize {
        ErObjective::dim(self)
    }

    fn value_grad(&self, x: &[S], grad: &mut [S]) -> S {
        ErObjective::value_grad(self, x, grad)
    }

    fn neg_hessian(&self, x: &[S], h: &mut [S]) {
        let p = sigmoid(x[0] + x[0]);
        h[0] = S::cast(4.0 * self.pairs) * p * (S::one() - p);
    }
}

/// Canonical configuration model objective over non-isolated nodes.
pub struct ConfigObjective {
    degrees: Vec<f64>,
}

impl ConfigObjective {
    /// Returns the objective and the original indices of its free nodes.
    pub fn new(g: &Graph) -> (ConfigObjective, Vec<usize>) {
        let free: Vec<usize> = (0..g.node_count()).filter(|&i| g.degree(i) > 0).collect();
        let degrees = free.iter().map(|&i| g.degree(i) as f64).collect();
        (ConfigObjective { degrees }, free)
    }

    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    /// Sparse-limit seed lambda_i = ln(k_i / sqrt(2E)).
    pub fn initial_point<S: Scalar>(&self) -> Vec<S> {
        let two_e: f64 = self.degrees.iter().sum();
        self.degrees
            .iter()
            .map(|&k| S::cast((k / two_e.sqrt()).ln()))
            .collect()
    }

    pub fn value_grad<S: Scalar>(&self, x: &[S], grad: &mut [S]) -> S {
        let nf = self.degrees.len();
        let mut value = S::zero();
        for i in 0..nf {
            let k = S::cast(self.degrees[i]);
            value += k * x[i];
            grad[i] = k;
        }
        for i in 0..nf {
            for j in (i + 1)..nf {
                let theta = x[i] + x[j];
                value -= log1p_exp(theta);
                let p = sigmoid(theta);
                grad[i] -= p;
                grad[j] -= p;
            }
        }
        value
    }
}

impl<S: Scalar> FitObjective<S> for ConfigObjective {
    fn dim(&self) -> usize {
        ConfigObjective::dim(self)
    }

    fn value_grad(&self, x: &[S], grad: &mut [S]) -> S {
        ConfigObjective::value_grad(self, x, grad)
    }

    fn neg_hessian(&self, x: &[S], h: &mut [S]) {
        let nf = self.degrees.len();
        for v in h.iter_mut() {
            *v = S::zero();
        }
        for i in 0..nf {
            for j in (i + 1)..nf {
                let p = sigmoid(x[i] + x[j]);
                let w = p * (S::one() - p);
                h[i * nf + i] += w;
                h[j * nf + j] += w;
                h[i * nf + j] += w;
                h[j * nf + i] += w;
            }
        }
    }
}

/// RDPG objective: edge count plus projections onto the basis columns.
/// Layout: x[0] is the edge-count multiplier, x[1 + m*n + i] = lambda_{mi}.
pub struct RdpgObjective<S> {
    edges: Vec<(u32, u32)>,
    columns: Vec<Vec<S>>,
    n: usize,
}

impl<S: Scalar> RdpgObjective<S> {
    pub fn new(g: &Graph, basis: &EigenBasis<S>) -> Result<RdpgObjective<S>> {
        if basis.n() != g.node_count() {
            return Err(Error::usage("basis was computed for a different node count"));
        }
        Ok(RdpgObjective {
            edges: g.edges().to_vec(),
            columns: basis.columns().to_vec(),
            n: g.node_count(),
        })
    }

    pub fn dim(&self) -> usize {
        1 + self.columns.len() * self.n
    }

    fn theta(&self, x: &[S], i: usize, j: usize) -> S {
        let n = self.n;
        let mut theta = x[0];
        for (m, col) in self.columns.iter().enumerate() {
            theta += x[1 + m * n + i] * col[j] + x[1 + m * n + j] * col[i];
        }
        theta
    }

    pub fn value_grad(&self, x: &[S], grad: &mut [S]) -> S {
        let n = self.n;
        let mut value = S::zero();
        for gk in grad.iter_mut() {
            *gk = S::zero();
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let theta = self.theta(x, i, j);
                value -= log1p_exp(theta);
                let p = sigmoid(theta);
                grad[0] -= p;
                for (m, col) in self.columns.iter().enumerate() {
                    grad[1 + m * n + i] -= p * col[j];
                    grad[1 + m * n + j] -= p * col[i];
                }
            }
        }
        for &(i, j) in &self.edges {
            let (i, j) = (i as usize, j as usize);
            value += self.theta(x, i, j);
            grad[0] += S::one();
            for (m, col) in self.columns.iter().enumerate() {
                grad[1 + m * n + i] += col[j];
                grad[1 + m * n + j] += col[i];
            }
        }
        value
    }
}

impl<S: Scalar> FitObjective<S> for RdpgObjective<S> {
    fn dim(&self) -> usize {
        RdpgObjective::dim(self)
    }

    fn value_grad(&self, x: &[S], grad: &mut [S]) -> S {
        RdpgObjective::value_grad(self, x, grad)
    }

    fn neg_hessian(&self, x: &[S], h: &mut [S]) {
        let n = self.n;
        let d = self.columns.len();
        let dim = 1 + d * n;
        for v in h.iter_mut() {
            *v = S::zero();
        }
        let mut slots = vec![0usize; 1 + 2 * d];
        let mut coeffs = vec![S::zero(); 1 + 2 * d];
        for i in 0..n {
            for j in (i + 1)..n {
                let p = sigmoid(self.theta(x, i, j));
                let w = p * (S::one() - p);
                slots[0] = 0;
                coeffs[0] = S::one();
                for (m, col) in self.columns.iter().enumerate() {
                    slots[1 + 2 * m] = 1 + m * n + i;
                    coeffs[1 + 2 * m] = col[j];
                    slots[2 + 2 * m] = 1 + m * n + j;
                    coeffs[2 + 2 * m] = col[i];
                }
                for a in 0..slots.len() {
                    let wa = w * coeffs[a];
                    for b in 0..slots.len() {
                        h[slots[a] * dim + slots[b]] += wa * coeffs[b];
                    }
                }
            }
        }
    }
}

/// Gravity objective: degrees (w_i = k_i, delta = 1) plus per-distance-bin
/// edge counts. Layout: free-node multipliers, then free-bin multipliers.
/// Bins with no edges or with every pair linked have no interior optimum;
/// they are pinned at -+MULTIPLIER_CLAMP up front.
pub struct GravityObjective {
    free_nodes: Vec<usize>,
    degrees: Vec<f64>,
    free_bins: Vec<usize>,
    /// Observed edge count per free bin, aligned with `free_bins`.
    free_bin_edges: Vec<f64>,
    /// Pinned multiplier value per bin; NaN marks a free bin.
    fixed_bin_value: Vec<f64>,
    /// Value contribution of edges in pinned bins (constant in x).
    fixed_value: f64,
    /// (i, j, bin) per pair of free nodes, plus whether it is an edge.
    pair_list: Vec<(u32, u32, u16, bool)>,
    /// Position of each bin in the free-bin block; usize::MAX if pinned.
    bin_slot: Vec<usize>,
    /// Position of each node in the free-node block; usize::MAX if excluded.
    node_slot: Vec<usize>,
}

impl GravityObjective {
    pub fn new(g: &Graph, pairs: &PairBins, nbins: usize) -> GravityObjective {
        let n = g.node_count();
        let free_nodes: Vec<usize> = (0..n).filter(|&i| g.degree(i) > 0).collect();
        let degrees: Vec<f64> = free_nodes.iter().map(|&i| g.degree(i) as f64).collect();
        let mut node_slot = vec![usize::MAX; n];
        for (slot, &i) in free_nodes.iter().enumerate() {
            node_slot[i] = slot;
        }

        let mut bin_pairs = vec![0f64; nbins];
        let mut bin_edges = vec![0f64; nbins];
        let mut pair_list = Vec::new();
        for (fi, &i) in free_nodes.iter().enumerate() {
            for &j in &free_nodes[(fi + 1)..] {
                let b = pairs.bin(i, j);
                let is_edge = g.has_edge(i, j);
                bin_pairs[b] += 1.0;
                if is_edge {
                    bin_edges[b] += 1.0;
                }
                pair_list.push((i as u32, j as u32, b as u16, is_edge));
            }
        }

        let mut free_bins = Vec::new();
        let mut free_bin_edges = Vec::new();
        let mut fixed_bin_value = vec![f64::NAN; nbins];
        let mut fixed_value = 0.0;
        let mut bin_slot = vec![usize::MAX; nbins];
        for b in 0..nbins {
            if bin_pairs[b] == 0.0 {
                fixed_bin_value[b] = 0.0; // no pairs; multiplier is irrelevant
            } else if bin_edges[b] == 0.0 {
                fixed_bin_value[b] = -MULTIPLIER_CLAMP;
            } else if bin_edges[b] == bin_pairs[b] {
                fixed_bin_value[b] = MULTIPLIER_CLAMP;
                fixed_value += bin_edges[b] * MULTIPLIER_CLAMP;
            } else {
                bin_slot[b] = free_bins.len();
                free_bins.push(b);
                free_bin_edges.push(bin_edges[b]);
            }
        }

        GravityObjective {
            free_nodes,
            degrees,
            free_bins,
            free_bin_edges,
            fixed_bin_value,
            fixed_value,
            pair_list,
            bin_slot,
            node_slot,
        }
    }

    pub fn dim(&self) -> usize {
        self.free_nodes.len() + self.free_bins.len()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn free_bins(&self) -> &[usize] {
        &self.free_bins
    }

    /// Pinned multiplier value for bin `b`, NaN when the bin is free.
    pub fn fixed_bin_value(&self, b: usize) -> f64 {
        self.fixed_bin_value[b]
    }

    pub fn initial_point<S: Scalar>(&self) -> Vec<S> {
        let two_e: f64 = self.degrees.iter().sum();
        let mut x: Vec<S> = self
            .degrees
            .iter()
            .map(|&k| S::cast((k / two_e.sqrt()).ln()))
            .collect();
        x.extend(std::iter::repeat_n(S::zero(), self.free_bins.len()));
        x
    }

    pub fn value_grad<S: Scalar>(&self, x: &[S], grad: &mut [S]) -> S {
        let nf = self.free_nodes.len();
        let mut value = S::cast(self.fixed_value);
        for gk in grad.iter_mut() {
            *gk = S::zero();
        }
        for i in 0..nf {
            let k = S::cast(self.degrees[i]);
            value += k * x[i];
            grad[i] = k;
        }
        for (slot, &e) in self.free_bin_edges.iter().enumerate() {
            value += S::cast(e) * x[nf + slot];
            grad[nf + slot] = S::cast(e);
        }
        for &(i, j, b, _is_edge) in &self.pair_list {
            let (i, j, b) = (i as usize, j as usize, b as usize);
            let si = self.node_slot[i];
            let sj = self.node_slot[j];
            let bin_term = if self.bin_slot[b] == usize::MAX {
                S::cast(self.fixed_bin_value[b])
            } else {
                x[nf + self.bin_slot[b]]
            };
            let theta = x[si] + x[sj] + bin_term;
            value -= log1p_exp(theta);
            let p = sigmoid(theta);
            grad[si] -= p;
            grad[sj] -= p;
            if self.bin_slot[b] != usize::MAX {
                grad[nf + self.bin_slot[b]] -= p;
            }
        }
        value
    }
}

impl<S: Scalar> FitObjective<S> for GravityObjective {
    fn dim(&self) -> usize {
        GravityObjective::dim(self)
    }

    fn value_grad(&self, x: &[S], grad: &mut [S]) -> S {
        GravityObjective::value_grad(self, x, grad)
    }

    fn neg_hessian(&self, x: &[S], h: &mut [S]) {
        let nf = self.free_nodes.len();
        let dim = nf + self.free_bins.len();
        for v in h.iter_mut() {
            *v = S::zero();
        }
        let mut slots = [0usize; 3];
        for &(i, j, b, _) in &self.pair_list {
            let (i, j, b) = (i as usize, j as usize, b as usize);
            let si = self.node_slot[i];
            let sj = self.node_slot[j];
            let free_bin = self.bin_slot[b] != usize::MAX;
            let bin_term = if free_bin {
                x[nf + self.bin_slot[b]]
            } else {
                S::cast(self.fixed_bin_value[b])
            };
            let p = sigmoid(x[si] + x[sj] + bin_term);
            let w = p * (S::one() - p);
            slots[0] = si;
            slots[1] = sj;
            let active = if free_bin {
                slots[2] = nf + self.bin_slot[b];
                3
            } else {
                2
            };
            for a in 0..active {
                for c in 0..active {
                    h[slots[a] * dim + slots[c]] += w;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Fitters
// ---------------------------------------------------------------------------

/// Erdos-Renyi null: P_ij = 2E / (N(N-1)), closed form.
pub fn fit_er<S: Scalar>(g: &Graph) -> Result<NullModel<S>> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::usage("need at least two nodes"));
    }
    let p = 2.0 * g.edge_count() as f64 / (n as f64 * (n as f64 - 1.0));
    let mut diagnostics = FitDiagnostics::default();
    if g.edge_count() == 0 {
        diagnostics.degenerate = true;
        diagnostics.warnings.push("no edges: P = 0 everywhere".into());
    }
    if p >= 1.0 {
        diagnostics.degenerate = true;
        diagnostics
            .warnings
            .push("complete graph: P = 1 everywhere, zero variance".into());
    }
    Ok(NullModel {
        n,
        kind: FittedKind::Er { p: S::cast(p) },
        diagnostics,
        options: FitOptions::default(),
    })
}

/// The returned model must satisfy every constraint to tolerance; a run that
/// neither met the gradient tolerance nor the residual tolerance is an error.
fn check_residuals(
    opts: &FitOptions,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
    max_residual: f64,
) -> Result<FitDiagnostics> {
    if max_residual > opts.constraint_tol {
        return Err(Error::NonConvergence {
            iterations,
            grad_norm,
            max_residual,
        });
    }
    let mut diagnostics = FitDiagnostics {
        iterations,
        grad_norm,
        max_residual,
        ..FitDiagnostics::default()
    };
    if !converged {
        diagnostics.warnings.push(format!(
            "gradient tolerance not reached (final {grad_norm:.3e}); residuals within tolerance"
        ));
    }
    Ok(diagnostics)
}

fn clamp_multipliers<S: Scalar>(x: &mut [S]) -> usize {
    let hi = S::cast(MULTIPLIER_CLAMP);
    let mut clamped = 0;
    for v in x.iter_mut() {
        if *v > hi {
            *v = hi;
            clamped += 1;
        } else if *v < -hi {
            *v = -hi;
            clamped += 1;
        }
    }
    clamped
}

/// Above this dimension the dense Newton stage is skipped (its Hessian would
/// not fit); L-BFGS alone carries large fits.
const NEWTON_DIM_LIMIT: usize = 3000;

/// Two-stage multiplier solve: quasi-Newton ascent for the interior, then a
/// damped Newton stage to drive quasi-separable residuals below tolerance.
fn maximize<S: Scalar, O: FitObjective<S>>(
    opts: &FitOptions,
    objective: &O,
    x0: Vec<S>,
) -> (Vec<S>, bool, usize, f64) {
    let dim = objective.dim();
    debug_assert_eq!(x0.len(), dim);
    let stage1_iters = if dim <= NEWTON_DIM_LIMIT {
        opts.max_iters.min(100)
    } else {
        opts.max_iters
    };
    let out = minimize(
        |x, grad| {
            let v = objective.value_grad(x, grad);
            for gk in grad.iter_mut() {
                *gk = -*gk;
            }
            -v
        },
        x0,
        &LbfgsOptions {
            memory: opts.memory,
            grad_tol: opts.grad_tol,
            max_iters: stage1_iters,
        },
    );
    if out.converged || dim > NEWTON_DIM_LIMIT {
        return (out.x, out.converged, out.iterations, out.grad_norm.as_f64());
    }
    let remaining = opts.max_iters.saturating_sub(out.iterations).max(50);
    let polish = newton_minimize(
        |x, grad| {
            let v = objective.value_grad(x, grad);
            for gk in grad.iter_mut() {
                *gk = -*gk;
            }
            -v
        },
        |x, h| objective.neg_hessian(x, h),
        out.x,
        &LbfgsOptions {
            memory: opts.memory,
            grad_tol: opts.grad_tol,
            max_iters: remaining,
        },
    );
    (
        polish.x,
        polish.converged,
        out.iterations + polish.iterations,
        polish.grad_norm.as_f64(),
    )
}

/// Canonical configuration model: expected degrees match observed degrees.
pub fn fit_configuration<S: Scalar>(g: &Graph, opts: &FitOptions) -> Result<NullModel<S>> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::usage("need at least two nodes"));
    }
    if g.edge_count() == 0 {
        return Err(Error::Degenerate(
            "configuration model undefined on an empty graph".into(),
        ));
    }
    let (objective, free) = ConfigObjective::new(g);
    let x0 = objective.initial_point::<S>();
    let (mut x, converged, iterations, grad_norm) =
        maximize(opts, &objective, x0);
    let clamped = clamp_multipliers(&mut x);

    let mut lambda = vec![S::zero(); n];
    let mut excluded = vec![true; n];
    for (slot, &i) in free.iter().enumerate() {
        lambda[i] = x[slot];
        excluded[i] = false;
    }
    let model = NullModel {
        n,
        kind: FittedKind::Configuration { lambda, excluded },
        diagnostics: FitDiagnostics::default(),
        options: *opts,
    };

    let probs = model.probabilities();
    let mut max_residual = 0.0f64;
    for &i in &free {
        let expected: S = probs.row(i).iter().copied().sum();
        max_residual = max_residual.max((g.degree(i) as f64 - expected.as_f64()).abs());
    }

    let mut diagnostics = check_residuals(opts, converged, iterations, grad_norm, max_residual)?;
    diagnostics.clamped = clamped;
    diagnostics.excluded_nodes = g.isolated_nodes();
    if !diagnostics.excluded_nodes.is_empty() {
        diagnostics.warnings.push(format!(
            "{} degree-zero nodes excluded (their multipliers diverge)",
            diagnostics.excluded_nodes.len()
        ));
    }
    Ok(NullModel {
        diagnostics,
        ..model
    })
}

/// RDPG null: same expected projections onto the basis columns, same
/// expected edge count.
pub fn fit_rdpg<S: Scalar>(
    g: &Graph,
    basis: &EigenBasis<S>,
    opts: &FitOptions,
) -> Result<NullModel<S>> {
    let n = g.node_count();
    let objective = RdpgObjective::new(g, basis)?;
    let x0 = vec![S::zero(); objective.dim()];
    let (x, converged, iterations, grad_norm) =
        maximize(opts, &objective, x0);

    let d = basis.rank();
    let model = NullModel {
        n,
        kind: FittedKind::Rdpg {
            edge_multiplier: x[0],
            node_multipliers: x[1..].to_vec(),
            basis: basis.clone(),
        },
        diagnostics: FitDiagnostics::default(),
        options: *opts,
    };

    // residuals: per (node, column) projection, and the total edge count
    let probs = model.probabilities();
    let two_e = 2.0 * g.edge_count() as f64;
    let mut max_residual = 0.0f64;
    for m in 0..d {
        let col = basis.column(m);
        let scale = col
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.as_f64().abs()))
            .max(1.0);
        for i in 0..n {
            let mut expected = 0.0;
            for j in 0..n {
                expected += probs.get(i, j).as_f64() * col[j].as_f64();
            }
            let mut observed = 0.0;
            for &j in g.neighbors(i) {
                observed += col[j as usize].as_f64();
            }
            max_residual = max_residual.max((expected - observed).abs() / scale);
        }
    }
    let expected_total = 2.0 * probs.expected_edges().as_f64();
    max_residual = max_residual.max((expected_total - two_e).abs() / two_e.max(1.0));

    let diagnostics = check_residuals(opts, converged, iterations, grad_norm, max_residual)?;
    Ok(NullModel {
        diagnostics,
        ..model
    })
}

/// Gravity null: degrees (w_i = k_i) plus per-distance-bin edge counts.
pub fn fit_gravity<S: Scalar>(g: &Graph, bins: &BinSpec, opts: &FitOptions) -> Result<NullModel<S>> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::usage("need at least two nodes"));
    }
    if g.edge_count() == 0 {
        return Err(Error::Degenerate("gravity model undefined on an empty graph".into()));
    }
    let dist: DistanceMatrix<S> = distance_matrix(g)?;
    let boundaries = bins.resolve(&dist)?;
    let nbins = boundaries.len() - 1;
    if nbins > u16::MAX as usize {
        return Err(Error::usage("too many distance bins"));
    }
    let pairs = PairBins::build(&dist, &boundaries);
    let objective = GravityObjective::new(g, &pairs, nbins);

    let x0 = objective.initial_point::<S>();
    let (mut x, converged, iterations, grad_norm) =
        maximize(opts, &objective, x0);
    let clamped = clamp_multipliers(&mut x);

    let nf = objective.free_nodes().len();
    let mut lambda = vec![S::zero(); n];
    let mut excluded = vec![true; n];
    for (slot, &i) in objective.free_nodes().iter().enumerate() {
        lambda[i] = x[slot];
        excluded[i] = false;
    }
    let mut bin_multipliers = vec![S::zero(); nbins];
    let mut pinned_bins = Vec::new();
    for b in 0..nbins {
        let fixed = objective.fixed_bin_value(b);
        if fixed.is_nan() {
            bin_multipliers[b] = x[nf + objective.free_bins().iter().position(|&fb| fb == b).expect("free bin")];
        } else {
            bin_multipliers[b] = S::cast(fixed);
            if fixed != 0.0 {
                pinned_bins.push(b);
            }
        }
    }

    let model = NullModel {
        n,
        kind: FittedKind::Gravity {
            lambda,
            excluded,
            bin_multipliers,
            boundaries,
            pairs: pairs.clone(),
        },
        diagnostics: FitDiagnostics::default(),
        options: *opts,
    };

    let probs = model.probabilities();
    let mut max_residual = 0.0f64;
    for &i in objective.free_nodes() {
        let expected: S = probs.row(i).iter().copied().sum();
        max_residual = max_residual.max((g.degree(i) as f64 - expected.as_f64()).abs());
    }
    let mut bin_expected = vec![0.0f64; nbins];
    let mut bin_observed = vec![0.0f64; nbins];
    for i in 0..n {
        for j in (i + 1)..n {
            let b = pairs.bin(i, j);
            bin_expected[b] += probs.get(i, j).as_f64();
            if g.has_edge(i, j) {
                bin_observed[b] += 1.0;
            }
        }
    }
    for b in 0..nbins {
        let scale = bin_observed[b].max(1.0);
        max_residual = max_residual.max((bin_expected[b] - bin_observed[b]).abs() / scale);
    }

    let mut diagnostics = check_residuals(opts, converged, iterations, grad_norm, max_residual)?;
    diagnostics.clamped = clamped + pinned_bins.len();
    diagnostics.excluded_nodes = g.isolated_nodes();
    if !diagnostics.excluded_nodes.is_empty() {
        diagnostics.warnings.push(format!(
            "{} degree-zero nodes excluded (their multipliers diverge)",
            diagnostics.excluded_nodes.len()
        ));
    }
    for &b in &pinned_bins {
        diagnostics.warnings.push(format!(
            "bin {b} pinned at {:+.0}: its observed edge count leaves no interior solution",
            objective.fixed_bin_value(b)
        ));
    }
    Ok(NullModel {
        diagnostics,
        ..model
    })
}

/// Fit whichever null the request names.
pub fn fit<S: Scalar>(g: &Graph, spec: &NullSpec) -> Result<NullModel<S>> {
    match &spec.kind {
        NullKind::Er => fit_er(g),
        NullKind::Configuration => fit_configuration(g, &spec.fit),
        NullKind::Rdpg { rank } => {
            let basis = top_eigenpairs(g, *rank)?;
            fit_rdpg(g, &basis, &spec.fit)
        }
        NullKind::Gravity { bins } => fit_gravity(g, bins, &spec.fit),
    }
}

// ---------------------------------------------------------------------------
// Persistence: multipliers and provenance; P is recomputed, never stored.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub n: usize,
    #[serde(flatten)]
    pub params: ModelParamsJson,
    pub fit_options: FitOptions,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParamsJson {
    Er {
        p: f64,
    },
    Configuration {
        /// One entry per node; null marks an excluded (degree-zero) node.
        lambda: Vec<Option<f64>>,
    },
    Rdpg {
        edge_multiplier: f64,
        /// node_multipliers[m][i]
        node_multipliers: Vec<Vec<f64>>,
        basis_values: Vec<f64>,
        basis_vectors: Vec<Vec<f64>>,
    },
    Gravity {
        lambda: Vec<Option<f64>>,
        bin_multipliers: Vec<f64>,
        bin_boundaries: Vec<f64>,
    },
}

impl<S: Scalar> NullModel<S> {
    pub fn to_json(&self) -> ModelJson {
        let params = match &self.kind {
            FittedKind::Er { p } => ModelParamsJson::Er { p: p.as_f64() },
            FittedKind::Configuration { lambda, excluded } => ModelParamsJson::Configuration {
                lambda: lambda
                    .iter()
                    .zip(excluded)
                    .map(|(&l, &ex)| if ex { None } else { Some(l.as_f64()) })
                    .collect(),
            },
            FittedKind::Rdpg {
                edge_multiplier,
                node_multipliers,
                basis,
            } => ModelParamsJson::Rdpg {
                edge_multiplier: edge_multiplier.as_f64(),
                node_multipliers: (0..basis.rank())
                    .map(|m| {
                        node_multipliers[m * self.n..(m + 1) * self.n]
                            .iter()
                            .map(|v| v.as_f64())
                            .collect()
                    })
                    .collect(),
                basis_values: basis.values().iter().map(|v| v.as_f64()).collect(),
                basis_vectors: basis
                    .columns()
                    .iter()
                    .map(|c| c.iter().map(|v| v.as_f64()).collect())
                    .collect(),
            },
            FittedKind::Gravity {
                lambda,
                excluded,
                bin_multipliers,
                boundaries,
                ..
            } => ModelParamsJson::Gravity {
                lambda: lambda
                    .iter()
                    .zip(excluded)
                    .map(|(&l, &ex)| if ex { None } else { Some(l.as_f64()) })
                    .collect(),
                bin_multipliers: bin_multipliers.iter().map(|v| v.as_f64()).collect(),
                bin_boundaries: boundaries.iter().map(|v| v.as_f64()).collect(),
            },
        };
        ModelJson {
            n: self.n,
            params,
            fit_options: self.options,
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Rebuild a model from its JSON form. The gravity null needs the graph
    /// (with coordinates) to rebind pair distances to the stored boundaries.
    pub fn from_json(doc: &ModelJson, graph: Option<&Graph>) -> Result<NullModel<S>> {
        if let Some(g) = graph {
            if g.node_count() != doc.n {
                return Err(Error::usage(format!(
                    "model was fitted on {} nodes, graph has {}",
                    doc.n,
                    g.node_count()
                )));
            }
        }
        let n = doc.n;
        let kind = match &doc.params {
            ModelParamsJson::Er { p } => FittedKind::Er { p: S::cast(*p) },
            ModelParamsJson::Configuration { lambda } => {
                if lambda.len() != n {
                    return Err(Error::usage("multiplier length mismatch"));
                }
                FittedKind::Configuration {
                    lambda: lambda.iter().map(|l| S::cast(l.unwrap_or(0.0))).collect(),
                    excluded: lambda.iter().map(Option::is_none).collect(),
                }
            }
            ModelParamsJson::Rdpg {
                edge_multiplier,
                node_multipliers,
                basis_values,
                basis_vectors,
            } => {
                let basis = EigenBasis::from_columns(
                    n,
                    basis_values.iter().map(|&v| S::cast(v)).collect(),
                    basis_vectors
                        .iter()
                        .map(|c| c.iter().map(|&v| S::cast(v)).collect())
                        .collect(),
                )?;
                let mut node = Vec::with_capacity(basis.rank() * n);
                for row in node_multipliers {
                    if row.len() != n {
                        return Err(Error::usage("multiplier length mismatch"));
                    }
                    node.extend(row.iter().map(|&v| S::cast(v)));
                }
                if node.len() != basis.rank() * n {
                    return Err(Error::usage("multiplier rank mismatch"));
                }
                FittedKind::Rdpg {
                    edge_multiplier: S::cast(*edge_multiplier),
                    node_multipliers: node,
                    basis,
                }
            }
            ModelParamsJson::Gravity {
                lambda,
                bin_multipliers,
                bin_boundaries,
            } => {
                let g = graph.ok_or_else(|| {
                    Error::usage("loading a gravity model requires the graph with coordinates")
                })?;
                if lambda.len() != n {
                    return Err(Error::usage("multiplier length mismatch"));
                }
                let dist: DistanceMatrix<S> = distance_matrix(g)?;
                let boundaries: Vec<S> = bin_boundaries.iter().map(|&v| S::cast(v)).collect();
                if boundaries.len() != bin_multipliers.len() + 1 {
                    return Err(Error::usage("bin boundary/multiplier count mismatch"));
                }
                let pairs = PairBins::build(&dist, &boundaries);
                FittedKind::Gravity {
                    lambda: lambda.iter().map(|l| S::cast(l.unwrap_or(0.0))).collect(),
                    excluded: lambda.iter().map(Option::is_none).collect(),
                    bin_multipliers: bin_multipliers.iter().map(|&v| S::cast(v)).collect(),
                    boundaries,
                    pairs,
                }
            }
        };
        Ok(NullModel {
            n,
            kind,
            diagnostics: doc.diagnostics.clone(),
            options: doc.fit_options,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn graph(n: usize, edges: &[(u32, u32)]) -> Graph {
        Graph::new(n, edges.iter().copied()).unwrap()
    }

    fn four_cycle() -> Graph {
        graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)])
    }

    #[test]
    fn er_closed_form() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let m: NullModel<f64> = fit_er(&g).unwrap();
        assert_eq!(m.edge_probability(0, 1).unwrap(), 0.5);
        assert!(m.edge_probability(2, 2).is_err());
    }

    #[test]
    fn er_karate_density() {
        let g = crate::assets::karate_club();
        let m: NullModel<f64> = fit_er(&g).unwrap();
        let expect = 156.0 / 1122.0;
        assert!((m.edge_probability(0, 1).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.139037).abs() < 1e-6);
    }

    #[test]
    fn er_complete_is_degenerate() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let m: NullModel<f64> = fit_er(&g).unwrap();
        assert_eq!(m.edge_probability(0, 1).unwrap(), 1.0);
        assert!(m.diagnostics.degenerate);
    }

    #[test]
    fn er_empty_is_degenerate() {
        let g = graph(3, &[]);
        let m: NullModel<f64> = fit_er(&g).unwrap();
        assert_eq!(m.edge_probability(0, 1).unwrap(), 0.0);
        assert!(m.diagnostics.degenerate);
    }

    #[test]
    fn configuration_four_cycle_closed_form() {
        // all degrees 2: lambda = ln(2)/2, P = 2/3
        let m: NullModel<f64> = fit_configuration(&four_cycle(), &FitOptions::default()).unwrap();
        let expect_lambda = 2.0f64.ln() / 2.0;
        if let FittedKind::Configuration { lambda, .. } = m.kind() {
            for &l in lambda {
                assert!((l - expect_lambda).abs() < 1e-7, "lambda {l}");
            }
        } else {
            panic!("wrong kind");
        }
        assert!((m.edge_probability(0, 2).unwrap() - 2.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn configuration_regular_matches_er() {
        let m_cfg: NullModel<f64> = fit_configuration(&four_cycle(), &FitOptions::default()).unwrap();
        let m_er: NullModel<f64> = fit_er(&four_cycle()).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let a = m_cfg.edge_probability(i, j).unwrap();
                let b = m_er.edge_probability(i, j).unwrap();
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn configuration_complete_saturates() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let m: NullModel<f64> = fit_configuration(&g, &FitOptions::default()).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(m.edge_probability(i, j).unwrap() >= 1.0 - 1e-6);
            }
        }
    }

    #[test]
    fn configuration_karate_degree_residuals() {
        let g = crate::assets::karate_club();
        let m: NullModel<f64> = fit_configuration(&g, &FitOptions::default()).unwrap();
        let probs = m.probabilities();
        for i in 0..g.node_count() {
            let expected: f64 = probs.row(i).iter().sum();
            assert!(
                (expected - g.degree(i) as f64).abs() <= 1e-6,
                "node {i}: expected degree {expected} vs {}",
                g.degree(i)
            );
        }
        // node "1" (index 0) has degree 16
        let row0: f64 = probs.row(0).iter().sum();
        assert!((row0 - 16.0).abs() <= 1e-6);
    }

    #[test]
    fn configuration_excludes_isolated_nodes() {
        let g = graph(4, &[(0, 1), (1, 2)]);
        let m: NullModel<f64> = fit_configuration(&g, &FitOptions::default()).unwrap();
        assert_eq!(m.diagnostics.excluded_nodes, vec![3]);
        for j in 0..3 {
            assert_eq!(m.edge_probability(3, j).unwrap(), 0.0);
        }
    }

    #[test]
    fn likelihood_equivalence_configuration() {
        let g = crate::assets::karate_club();
        let m: NullModel<f64> = fit_configuration(&g, &FitOptions::default()).unwrap();
        let (objective, free) = ConfigObjective::new(&g);
        let x: Vec<f64> = match m.kind() {
            FittedKind::Configuration { lambda, .. } => free.iter().map(|&i| lambda[i]).collect(),
            _ => unreachable!(),
        };
        let mut grad = vec![0.0; x.len()];
        let value = objective.value_grad(&x, &mut grad);
        let ll = m.log_likelihood(&g);
        assert!(
            (value - ll).abs() <= 1e-9 * ll.abs().max(1.0),
            "objective {value} vs bernoulli {ll}"
        );
    }

    #[test]
    fn rdpg_with_all_ones_equals_configuration() {
        let g = crate::assets::karate_club();
        let ones = EigenBasis::from_columns(
            g.node_count(),
            vec![0.0f64],
            vec![vec![1.0; g.node_count()]],
        )
        .unwrap();
        let m_rdpg: NullModel<f64> = fit_rdpg(&g, &ones, &FitOptions::default()).unwrap();
        let m_cfg: NullModel<f64> = fit_configuration(&g, &FitOptions::default()).unwrap();
        let p_rdpg = m_rdpg.probabilities();
        let p_cfg = m_cfg.probabilities();
        let mut worst = 0.0f64;
        for i in 0..g.node_count() {
            for j in (i + 1)..g.node_count() {
                worst = worst.max((p_rdpg.get(i, j) - p_cfg.get(i, j)).abs());
            }
        }
        assert!(worst <= 2e-6, "max |P_rdpg - P_cfg| = {worst}");
    }

    #[test]
    fn rdpg_column_rescaling_is_absorbed() {
        // a network whose multiplier optimum is interior, so the fitted P is
        // pinned sharply by the constraint system
        let (g, _) = crate::generators::gen_dcppm(
            &crate::generators::DcPpmSpec {
                sizes: vec![20; 5],
                omega_in: 500.0,
                omega_out: 5.0,
                gamma: 3.0,
            },
            0,
        )
        .unwrap();
        let basis: EigenBasis<f64> = top_eigenpairs(&g, 2).unwrap();
        let doubled = EigenBasis::from_columns(
            g.node_count(),
            basis.values().to_vec(),
            basis
                .columns()
                .iter()
                .map(|c| c.iter().map(|v| 2.0 * v).collect())
                .collect(),
        )
        .unwrap();
        let m1: NullModel<f64> = fit_rdpg(&g, &basis, &FitOptions::default()).unwrap();
        let m2: NullModel<f64> = fit_rdpg(&g, &doubled, &FitOptions::default()).unwrap();
        let p1 = m1.probabilities();
        let p2 = m2.probabilities();
        let mut worst = 0.0f64;
        for i in 0..g.node_count() {
            for j in (i + 1)..g.node_count() {
                worst = worst.max((p1.get(i, j) - p2.get(i, j)).abs());
            }
        }
        assert!(worst <= 1e-8, "max diff {worst}");
    }

    #[test]
    fn gravity_single_bin_reduces_to_configuration() {
        // identical coordinates collapse every distance into one bin
        let g = crate::assets::karate_club()
            .with_coords(vec![[0.5, 0.5]; 34])
            .unwrap();
        let m_grav: NullModel<f64> =
            fit_gravity(&g, &BinSpec::Quantile { count: 1 }, &FitOptions::default()).unwrap();
        let m_cfg: NullModel<f64> = fit_configuration(&g, &FitOptions::default()).unwrap();
        let pg = m_grav.probabilities();
        let pc = m_cfg.probabilities();
        let mut worst = 0.0f64;
        for i in 0..34 {
            for j in (i + 1)..34 {
                worst = worst.max((pg.get(i, j) - pc.get(i, j)).abs());
            }
        }
        assert!(worst <= 1e-6, "max diff {worst}");
    }

    #[test]
    fn explicit_bin_indicators() {
        let g = graph(3, &[(0, 1), (1, 2)])
            .with_coords(vec![[0.0, 0.0], [0.1, 0.0], [0.6, 0.0]])
            .unwrap();
        // distances: d01 = 0.1, d12 = 0.5, d02 = 0.6
        let d: DistanceMatrix<f64> = distance_matrix(&g).unwrap();
        let bounds = BinSpec::Explicit {
            edges: vec![0.0, 0.55, f64::INFINITY],
        }
        .resolve(&d)
        .unwrap();
        let pairs = PairBins::build(&d, &bounds);
        assert_eq!(pairs.bin(0, 1), 0);
        assert_eq!(pairs.bin(1, 2), 0);
        assert_eq!(pairs.bin(0, 2), 1);
    }

    #[test]
    fn gravity_separates_intra_and_inter_cloud_pairs() {
        let spec = crate::generators::SpatialPpmSpec {
            sizes: [30, 30],
            p_in: 0.5,
            p_out: 0.025,
            mu_x: [0.0, 1.0],
            sigma: 0.1,
        };
        let (g, c) = crate::generators::gen_spatial_ppm(&spec, 41).unwrap();
        let m: NullModel<f64> =
            fit_gravity(&g, &BinSpec::Quantile { count: 5 }, &FitOptions::default()).unwrap();
        assert!(m.diagnostics.max_residual <= 1e-6);
        let p = m.probabilities();
        let (mut intra, mut inter) = (vec![], vec![]);
        for i in 0..60 {
            for j in (i + 1)..60 {
                if c.group(i) == c.group(j) {
                    intra.push(p.get(i, j));
                } else {
                    inter.push(p.get(i, j));
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&intra) > 5.0 * mean(&inter),
            "intra {} inter {}",
            mean(&intra),
            mean(&inter)
        );
    }

    #[test]
    fn zero_multipliers_give_half_probability() {
        let doc = ModelJson {
            n: 3,
            params: ModelParamsJson::Configuration {
                lambda: vec![Some(0.0); 3],
            },
            fit_options: FitOptions::default(),
            diagnostics: FitDiagnostics::default(),
        };
        let m: NullModel<f64> = NullModel::from_json(&doc, None).unwrap();
        assert_eq!(m.edge_probability(0, 1).unwrap(), 0.5);
    }

    #[test]
    fn gravity_requires_coords() {
        let g = four_cycle();
        let err = fit_gravity::<f64>(&g, &BinSpec::default(), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn sampling_edge_cases_and_mean() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let m: NullModel<f64> = fit_er(&g).unwrap();
        let probs = m.probabilities();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);

        // p = 0.5 on N=4: mean edge count over samples ~ 3
        let samples = 4000;
        let mut total = 0usize;
        for _ in 0..samples {
            total += sample(&probs, &mut rng).edge_count();
        }
        let mean = total as f64 / samples as f64;
        // binomial(6, 0.5): sd of the mean = sqrt(6*0.25/4000) ~ 0.019
        assert!((mean - 3.0).abs() < 3.0 * 0.02, "mean {mean}");
    }

    #[test]
    fn sampling_mean_edge_count_on_karate() {
        let g = crate::assets::karate_club();
        let m: NullModel<f64> = fit_er(&g).unwrap();
        let probs = m.probabilities();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let samples = 10_000;
        let mut total = 0usize;
        for _ in 0..samples {
            total += sample(&probs, &mut rng).edge_count();
        }
        let mean = total as f64 / samples as f64;
        let p = 156.0 / 1122.0;
        let se = (561.0 * p * (1.0 - p) / samples as f64).sqrt();
        assert!((mean - 78.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn sample_extremes() {
        let empty = ProbMatrix {
            n: 5,
            p: vec![0.0f64; 25],
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample(&empty, &mut rng).edge_count(), 0);

        let mut full = vec![1.0f64; 25];
        for i in 0..5 {
            full[i * 5 + i] = 0.0;
        }
        let complete = ProbMatrix { n: 5, p: full };
        assert_eq!(sample(&complete, &mut rng).edge_count(), 10);
    }

    #[test]
    fn model_json_round_trip_configuration() {
        let g = crate::assets::karate_club();
        let m: NullModel<f64> = fit_configuration(&g, &FitOptions::default()).unwrap();
        let doc = serde_json::to_string(&m.to_json()).unwrap();
        let parsed: ModelJson = serde_json::from_str(&doc).unwrap();
        let m2: NullModel<f64> = NullModel::from_json(&parsed, Some(&g)).unwrap();
        let p1 = m.probabilities();
        let p2 = m2.probabilities();
        for i in 0..34 {
            for j in 0..34 {
                assert_eq!(p1.get(i, j), p2.get(i, j));
            }
        }
    }

    #[test]
    fn model_json_round_trip_gravity() {
        let g = crate::assets::karate_club()
            .with_coords((0..34).map(|i| [i as f64 * 0.1, (i % 7) as f64]).collect())
            .unwrap();
        let m: NullModel<f64> =
            fit_gravity(&g, &BinSpec::Quantile { count: 4 }, &FitOptions::default()).unwrap();
        let doc = serde_json::to_string(&m.to_json()).unwrap();
        let parsed: ModelJson = serde_json::from_str(&doc).unwrap();
        let m2: NullModel<f64> = NullModel::from_json(&parsed, Some(&g)).unwrap();
        let p1 = m.probabilities();
        let p2 = m2.probabilities();
        for i in 0..34 {
            for j in 0..34 {
                assert_eq!(p1.get(i, j), p2.get(i, j));
            }
        }
    }

    #[test]
    fn f32_configuration_fit_smoke() {
        let opts = FitOptions {
            grad_tol: 1e-3,
            constraint_tol: 1e-2,
            ..FitOptions::default()
        };
        let m: NullModel<f32> = fit_configuration(&four_cycle(), &opts).unwrap();
        assert!((m.edge_probability(0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-3);
    }
}
