//! Block aggregates S, T, U, per-block z-scores and the combined statistic Z.
//!
//! All three aggregates use the ordered-pair convention (both (i,j) and
//! (j,i), i != j), matching a double sum over nodes: diagonal blocks count
//! each internal edge twice, off-diagonal blocks are symmetric. Statistics
//! are comparable across observed and null networks because the identical
//! convention is applied to both.

use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nullmodel::ProbMatrix;
use crate::scalar::Scalar;

/// Variance cutoff below which a block is treated as deterministic and its
/// z-score set to zero.
pub const VAR_EPSILON: f64 = 1e-12;

/// Node -> group assignment; the unassigned group, when present, is an
/// ordinary label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    groups: Vec<u32>,
}

impl Labeling {
    pub fn new(groups: Vec<u32>, k: usize) -> Result<Labeling> {
        if groups.iter().any(|&g| g as usize >= k) {
            return Err(Error::usage(format!("label out of range for k={k}")));
        }
        Ok(Labeling { groups })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, node: usize) -> usize {
        self.groups[node] as usize
    }

    pub fn set_group(&mut self, node: usize, group: usize) {
        self.groups[node] = group as u32;
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.groups
    }

    /// Nodes in a given group.
    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.groups.len())
            .filter(|&i| self.groups[i] as usize == group)
            .collect()
    }

    /// Relabel through a permutation: node in group g moves to perm[g].
    pub fn permuted(&self, perm: &[usize]) -> Labeling {
        Labeling {
            groups: self.groups.iter().map(|&g| perm[g as usize] as u32).collect(),
        }
    }
}

/// Maintained S/T/U block sums for one labeling.
#[derive(Debug, Clone)]
pub struct BlockStats<S> {
    k: usize,
    s: Vec<S>,
    t: Vec<S>,
    u: Vec<S>,
}

/// Per-group contributions of one node: scratch for a single-node move.
#[derive(Debug, Clone)]
pub struct MoveScratch<S> {
    w_s: Vec<S>,
    w_t: Vec<S>,
    w_u: Vec<S>,
}

impl<S: Scalar> MoveScratch<S> {
    pub fn new(k: usize) -> MoveScratch<S> {
        MoveScratch {
            w_s: vec![S::zero(); k],
            w_t: vec![S::zero(); k],
            w_u: vec![S::zero(); k],
        }
    }
}

/// Batch computation of the block aggregates.
pub fn block_stats<S: Scalar>(
    g: &Graph,
    p: &ProbMatrix<S>,
    c: &Labeling,
    k: usize,
) -> BlockStats<S> {
    let n = g.node_count();
    let mut stats = BlockStats {
        k,
        s: vec![S::zero(); k * k],
        t: vec![S::zero(); k * k],
        u: vec![S::zero(); k * k],
    };
    for i in 0..n {
        let a = c.group(i);
        let row = p.row(i);
        for j in (i + 1)..n {
            let b = c.group(j);
            let pij = row[j];
            stats.t[a * k + b] += pij;
            stats.t[b * k + a] += pij;
            let pij2 = pij * pij;
            stats.u[a * k + b] += pij2;
            stats.u[b * k + a] += pij2;
        }
        for &j in g.neighbors(i) {
            let j = j as usize;
            if j > i {
                let b = c.group(j);
                stats.s[a * k + b] += S::one();
                stats.s[b * k + a] += S::one();
            }
        }
    }
    stats
}

impl<S: Scalar> BlockStats<S> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s(&self, a: usize, b: usize) -> S {
        self.s[a * self.k + b]
    }

    pub fn t(&self, a: usize, b: usize) -> S {
        self.t[a * self.k + b]
    }

    pub fn u(&self, a: usize, b: usize) -> S {
        self.u[a * self.k + b]
    }

    /// Q_ab = S_ab - T_ab, the unnormalised modularity block (reporting only).
    pub fn q(&self, a: usize, b: usize) -> S {
        self.s(a, b) - self.t(a, b)
    }

    /// Per-block z-scores; blocks with variance <= VAR_EPSILON contribute 0.
    pub fn z_blocks(&self) -> Vec<S> {
        let eps = S::cast(VAR_EPSILON);
        let mut z = vec![S::zero(); self.k * self.k];
        for idx in 0..self.k * self.k {
            let var = self.t[idx] - self.u[idx];
            if var > eps {
                z[idx] = (self.s[idx] - self.t[idx]) / var.sqrt();
            }
        }
        z
    }

    /// Number of blocks rewarded or penalised by B whose variance vanished.
    pub fn degenerate_blocks(&self, b: &BlockMatrix) -> usize {
        let eps = S::cast(VAR_EPSILON);
        let mut count = 0;
        for a in 0..self.k {
            for bb in 0..self.k {
                if b.entry(a, bb) != 0 && self.t[a * self.k + bb] - self.u[a * self.k + bb] <= eps {
                    count += 1;
                }
            }
        }
        count
    }

    /// Z = (1/K) sum_ab B_ab Z_ab.
    pub fn z_total(&self, b: &BlockMatrix) -> Result<S> {
        if b.k() != self.k {
            return Err(Error::usage(format!(
                "block matrix is {}x{} but stats have k={}",
                b.k(),
                b.k(),
                self.k
            )));
        }
        Ok(self.z_total_unchecked(b))
    }

    fn z_total_unchecked(&self, b: &BlockMatrix) -> S {
        let eps = S::cast(VAR_EPSILON);
        let mut total = S::zero();
        for a in 0..self.k {
            for bb in 0..self.k {
                let w = b.entry(a, bb);
                if w == 0 {
                    continue;
                }
                let idx = a * self.k + bb;
                let var = self.t[idx] - self.u[idx];
                if var > eps {
                    let z = (self.s[idx] - self.t[idx]) / var.sqrt();
                    total = if w > 0 { total + z } else { total - z };
                }
            }
        }
        total / S::cast(self.k)
    }

    /// Fill `scratch` with node i's per-group adjacency/probability mass.
    fn node_contributions(
        &self,
        g: &Graph,
        p: &ProbMatrix<S>,
        c: &Labeling,
        node: usize,
        scratch: &mut MoveScratch<S>,
    ) {
        for v in scratch.w_s.iter_mut() {
            *v = S::zero();
        }
        for v in scratch.w_t.iter_mut() {
            *v = S::zero();
        }
        for v in scratch.w_u.iter_mut() {
            *v = S::zero();
        }
        for &j in g.neighbors(node) {
            scratch.w_s[c.group(j as usize)] += S::one();
        }
        let row = p.row(node);
        for (j, &pij) in row.iter().enumerate() {
            if j == node {
                continue;
            }
            let gj = c.group(j);
            scratch.w_t[gj] += pij;
            scratch.w_u[gj] += pij * pij;
        }
    }

    /// Apply the move of `node` from its current group to `to`, updating the
    /// aggregates exactly as a batch recomputation would. O(N + K). The
    /// labeling itself is not modified.
    pub fn apply_move(
        &mut self,
        g: &Graph,
        p: &ProbMatrix<S>,
        c: &Labeling,
        node: usize,
        to: usize,
        scratch: &mut MoveScratch<S>,
    ) {
        let from = c.group(node);
        debug_assert_ne!(from, to);
        self.node_contributions(g, p, c, node, scratch);
        let k = self.k;
        for gidx in 0..k {
            let ws = scratch.w_s[gidx];
            let wt = scratch.w_t[gidx];
            let wu = scratch.w_u[gidx];
            self.s[from * k + gidx] -= ws;
            self.s[gidx * k + from] -= ws;
            self.s[to * k + gidx] += ws;
            self.s[gidx * k + to] += ws;
            self.t[from * k + gidx] -= wt;
            self.t[gidx * k + from] -= wt;
            self.t[to * k + gidx] += wt;
            self.t[gidx * k + to] += wt;
            self.u[from * k + gidx] -= wu;
            self.u[gidx * k + from] -= wu;
            self.u[to * k + gidx] += wu;
            self.u[gidx * k + to] += wu;
        }
    }

    /// Z after hypothetically moving `node` to `to`, without committing.
    /// `candidate` is clobbered scratch space.
    #[allow(clippy::too_many_arguments)]
    pub fn z_after_move(
        &self,
        g: &Graph,
        p: &ProbMatrix<S>,
        c: &Labeling,
        node: usize,
        to: usize,
        b: &BlockMatrix,
        candidate: &mut BlockStats<S>,
        scratch: &mut MoveScratch<S>,
    ) -> S {
        candidate.clone_from(self);
        candidate.apply_move(g, p, c, node, to, scratch);
        candidate.z_total_unchecked(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nullmodel::{fit_er, NullModel};
    use rand::Rng as _;
    use rand::SeedableRng;

    /// Two triangles {0,1,2} and {3,4,5} joined by the bridge 2-3.
    fn barbell() -> Graph {
        Graph::new(6, [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)]).unwrap()
    }

    fn barbell_setup() -> (Graph, ProbMatrix<f64>, Labeling) {
        let g = barbell();
        let m: NullModel<f64> = fit_er(&g).unwrap();
        let p = m.probabilities();
        let c = Labeling::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        (g, p, c)
    }

    #[test]
    fn barbell_block_sums() {
        let (g, p, c) = barbell_setup();
        // ER p = 14/30 = 7/15
        assert!((p.get(0, 1) - 7.0 / 15.0).abs() < 1e-15);
        let stats = block_stats(&g, &p, &c, 2);
        assert_eq!(stats.s(0, 0), 6.0);
        assert_eq!(stats.s(0, 1), 1.0);
        assert_eq!(stats.s(1, 0), 1.0);
        assert!((stats.t(0, 0) - 2.8).abs() < 1e-12);
        assert!((stats.t(0, 1) - 4.2).abs() < 1e-12);
        assert!((stats.u(0, 0) - 1.3066666666666666).abs() < 1e-12);
        assert!((stats.u(0, 1) - 1.96).abs() < 1e-12);
    }

    #[test]
    fn barbell_z_values() {
        let (g, p, c) = barbell_setup();
        let stats = block_stats(&g, &p, &c, 2);
        let z = stats.z_blocks();
        assert!((z[0] - 2.618614682831909).abs() < 1e-9, "Z_11 = {}", z[0]);
        assert!((z[1] + 2.138089935299395).abs() < 1e-9, "Z_12 = {}", z[1]);
        let b = BlockMatrix::assortative(2, false).unwrap();
        let total = stats.z_total(&b).unwrap();
        assert!((total - 4.756704618131304).abs() < 1e-9, "Z = {total}");
    }

    #[test]
    fn single_group_totals() {
        let (g, p, _) = barbell_setup();
        let c = Labeling::new(vec![0; 6], 1).unwrap();
        let stats = block_stats(&g, &p, &c, 1);
        assert_eq!(stats.s(0, 0), 2.0 * g.edge_count() as f64);
        let expected: f64 = 2.0 * p.expected_edges();
        assert!((stats.t(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_group_is_zero() {
        let (g, p, _) = barbell_setup();
        let c = Labeling::new(vec![0; 6], 2).unwrap();
        let stats = block_stats(&g, &p, &c, 2);
        for a in 0..2 {
            assert_eq!(stats.s(a, 1), 0.0);
            assert_eq!(stats.t(a, 1), 0.0);
            assert_eq!(stats.u(a, 1), 0.0);
        }
        // degenerate block contributes zero by convention
        let z = stats.z_blocks();
        assert_eq!(z[1], 0.0);
        assert_eq!(z[3], 0.0);
    }

    #[test]
    fn z_total_shape_mismatch() {
        let (g, p, c) = barbell_setup();
        let stats = block_stats(&g, &p, &c, 2);
        let b3 = BlockMatrix::assortative(3, false).unwrap();
        assert!(stats.z_total(&b3).is_err());
    }

    #[test]
    fn move_then_move_back_restores_stats() {
        let (g, p, mut c) = barbell_setup();
        let original = block_stats(&g, &p, &c, 2);
        let mut stats = original.clone();
        let mut scratch = MoveScratch::new(2);

        stats.apply_move(&g, &p, &c, 2, 1, &mut scratch);
        c.set_group(2, 1);
        stats.apply_move(&g, &p, &c, 2, 0, &mut scratch);
        c.set_group(2, 0);

        for idx in 0..4 {
            assert!((stats.s[idx] - original.s[idx]).abs() < 1e-12);
            assert!((stats.t[idx] - original.t[idx]).abs() < 1e-12);
            assert!((stats.u[idx] - original.u[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn incremental_matches_batch_on_random_walk() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let n = 30;
        let k = 3;
        let mut edges = Vec::new();
        for i in 0..n as u32 {
            for j in (i + 1)..n as u32 {
                if rng.random::<f64>() < 0.2 {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::new(n, edges).unwrap();
        let m: NullModel<f64> = fit_er(&g).unwrap();
        let p = m.probabilities();
        let mut c = Labeling::new((0..n as u32).map(|i| i % k as u32).collect(), k).unwrap();
        let mut stats = block_stats(&g, &p, &c, k);
        let mut scratch = MoveScratch::new(k);

        for _ in 0..20 {
            let node = rng.random_range(0..n);
            let mut to = rng.random_range(0..k);
            while to == c.group(node) {
                to = rng.random_range(0..k);
            }
            stats.apply_move(&g, &p, &c, node, to, &mut scratch);
            c.set_group(node, to);

            let fresh = block_stats(&g, &p, &c, k);
            for idx in 0..k * k {
                let scale = fresh.t[idx].abs().max(1.0);
                assert!((stats.s[idx] - fresh.s[idx]).abs() <= 1e-9 * scale);
                assert!((stats.t[idx] - fresh.t[idx]).abs() <= 1e-9 * scale);
                assert!((stats.u[idx] - fresh.u[idx]).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn relabeling_invariance() {
        let (g, p, c) = barbell_setup();
        let b = BlockMatrix::assortative(2, false).unwrap();
        let z0 = block_stats(&g, &p, &c, 2).z_total(&b).unwrap();

        let perm = vec![1, 0];
        let c2 = c.permuted(&perm);
        let b2 = b.permuted(&perm);
        let z1 = block_stats(&g, &p, &c2, 2).z_total(&b2).unwrap();
        assert_eq!(z0, z1);
    }

    #[test]
    fn moving_into_unassigned_group_drops_contribution() {
        let (g, p, mut c) = barbell_setup();
        // use B with unassigned third group
        let b = BlockMatrix::assortative(2, true).unwrap();
        let c3 = Labeling::new(c.as_slice().to_vec(), 3).unwrap();
        c = c3;
        let stats = block_stats(&g, &p, &c, 3);
        let z_before = stats.z_total(&b).unwrap();
        assert!(z_before > 0.0);

        // move every node of group 1 into the unassigned group: only the
        // (0,0) block keeps contributing
        let mut c2 = c.clone();
        for i in 3..6 {
            c2.set_group(i, 2);
        }
        let stats2 = block_stats(&g, &p, &c2, 3);
        let z2 = stats2.z_total(&b).unwrap();
        let z_blocks = stats2.z_blocks();
        assert!((z2 - z_blocks[0] / 3.0).abs() < 1e-12);
    }

    #[test]
    fn random_labelings_have_zero_mean_z_under_own_null() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut edges = Vec::new();
        for i in 0..60u32 {
            for j in (i + 1)..60 {
                if rng.random::<f64>() < 0.2 {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::new(60, edges).unwrap();
        let m: NullModel<f64> = fit_er(&g).unwrap();
        let probs = m.probabilities();
        let b = BlockMatrix::assortative(2, false).unwrap();
        let runs = 1000;
        let mut zs = Vec::with_capacity(runs);
        for _ in 0..runs {
            let labels = (0..60).map(|_| rng.random_range(0..2u32)).collect();
            let c = Labeling::new(labels, 2).unwrap();
            zs.push(block_stats(&g, &probs, &c, 2).z_total(&b).unwrap());
        }
        let mean = zs.iter().sum::<f64>() / runs as f64;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (runs - 1) as f64;
        let stderr = (var / runs as f64).sqrt();
        assert!(mean.abs() < 3.0 * stderr, "mean {mean} vs stderr {stderr}");
    }

    #[test]
    fn degenerate_all_ones_probability() {
        let g = Graph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let m: NullModel<f64> = fit_er(&g).unwrap();
        let p = m.probabilities();
        let c = Labeling::new(vec![0, 0, 1], 2).unwrap();
        let stats = block_stats(&g, &p, &c, 2);
        let b = BlockMatrix::assortative(2, false).unwrap();
        assert_eq!(stats.z_total(&b).unwrap(), 0.0);
        assert_eq!(stats.degenerate_blocks(&b), 4);
    }
}
