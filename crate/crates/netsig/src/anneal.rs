//! Maximize Z over labelings by simulated annealing on single-node label
//! moves, with independent restarts and a greedy finishing pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nullmodel::ProbMatrix;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, stream};
use crate::zstat::{block_stats, Labeling, MoveScratch, VAR_EPSILON};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    /// Initial temperature.
    pub t0: f64,
    /// Geometric cooling factor per sweep.
    pub alpha: f64,
    /// Max full passes; each sweep proposes N single-node moves.
    pub sweeps: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Stop a restart after this many sweeps without improving its best Z.
    pub stall_sweeps: usize,
    /// Also propose pairwise label swaps (off by default; single-node moves
    /// are the documented proposal kernel).
    pub pair_swaps: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            t0: 1.0,
            alpha: 0.995,
            sweeps: 2000,
            restarts: 8,
            seed: 0,
            stall_sweeps: 200,
            pair_swaps: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimumReport<S> {
    pub best_labeling: Labeling,
    pub best_z: S,
    /// Best Z of each restart, in restart order.
    pub restart_scores: Vec<S>,
    /// Sweeps consumed by each restart.
    pub sweeps_used: Vec<usize>,
}

struct RestartOutcome<S> {
    labeling: Labeling,
    z: S,
    sweeps: usize,
}

fn random_labeling<R: Rng>(n: usize, k: usize, rng: &mut R) -> Labeling {
    let groups = (0..n).map(|_| rng.random_range(0..k) as u32).collect();
    Labeling::new(groups, k).expect("generated labels are in range")
}

fn run_restart<S: Scalar>(
    g: &Graph,
    p: &ProbMatrix<S>,
    b: &BlockMatrix,
    cfg: &AnnealConfig,
    seed: u64,
) -> RestartOutcome<S> {
    let n = g.node_count();
    let k = b.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut c = random_labeling(n, k, &mut rng);
    let mut stats = block_stats(g, p, &c, k);
    let mut cur_z = stats.z_total(b).expect("shapes validated by caller");

    let mut best_c = c.clone();
    let mut best_z = cur_z;
    let mut candidate = stats.clone();
    let mut scratch = MoveScratch::new(k);

    let mut sweeps_done = 0;
    if k > 1 {
        let mut stall = 0;
        for sweep in 0..cfg.sweeps {
            sweeps_done = sweep + 1;
            let t = cfg.t0 * cfg.alpha.powi(sweep as i32);
            let mut improved = false;
            for _ in 0..n {
                let node = rng.random_range(0..n);
                let mut to = rng.random_range(0..k - 1);
                if to >= c.group(node) {
                    to += 1;
                }
                let z_new = stats.z_after_move(g, p, &c, node, to, b, &mut candidate, &mut scratch);
                let dz = (z_new - cur_z).as_f64();
                let accept = dz > 0.0 || {
                    let u: f64 = rng.random();
                    t > 0.0 && u < (dz / t).exp()
                };
                if accept {
                    stats.clone_from(&candidate);
                    c.set_group(node, to);
                    cur_z = z_new;
                    if cur_z > best_z {
                        best_z = cur_z;
                        best_c.clone_from(&c);
                        improved = true;
                    }
                }
            }
            if cfg.pair_swaps {
                for _ in 0..n / 2 {
                    let i = rng.random_range(0..n);
                    let j = rng.random_range(0..n);
                    let (gi, gj) = (c.group(i), c.group(j));
                    if i == j || gi == gj {
                        continue;
                    }
                    candidate.clone_from(&stats);
                    candidate.apply_move(g, p, &c, i, gj, &mut scratch);
                    c.set_group(i, gj);
                    candidate.apply_move(g, p, &c, j, gi, &mut scratch);
                    c.set_group(i, gi);
                    let z_new = candidate.z_total(b).expect("same shape");
                    let dz = (z_new - cur_z).as_f64();
                    let accept = dz > 0.0 || {
                        let u: f64 = rng.random();
                        t > 0.0 && u < (dz / t).exp()
                    };
                    if accept {
                        stats.clone_from(&candidate);
                        c.set_group(i, gj);
                        c.set_group(j, gi);
                        cur_z = z_new;
                        if cur_z > best_z {
                            best_z = cur_z;
                            best_c.clone_from(&c);
                            improved = true;
                        }
                    }
                }
            }
            if improved {
                stall = 0;
            } else {
                stall += 1;
                if stall >= cfg.stall_sweeps {
                    break;
                }
            }
        }
    }

    // deterministic zero-temperature finish on the best labeling found
    let (polished, z) = greedy_polish(g, p, b, best_c).expect("shapes validated by caller");
    RestartOutcome {
        labeling: polished,
        z,
        sweeps: sweeps_done,
    }
}

/// Repeatedly apply the best improving single-node move until none exists.
/// The returned Z never falls below the input labeling's Z.
pub fn greedy_polish<S: Scalar>(
    g: &Graph,
    p: &ProbMatrix<S>,
    b: &BlockMatrix,
    mut c: Labeling,
) -> Result<(Labeling, S)> {
    let n = g.node_count();
    let k = b.k();
    let mut stats = block_stats(g, p, &c, k);
    let mut cur_z = stats.z_total(b)?;
    if k == 1 {
        return Ok((c, cur_z));
    }
    let mut candidate = stats.clone();
    let mut scratch = MoveScratch::new(k);
    loop {
        let mut best: Option<(usize, usize, S)> = None;
        for node in 0..n {
            for to in 0..k {
                if to == c.group(node) {
                    continue;
                }
                let z_new = stats.z_after_move(g, p, &c, node, to, b, &mut candidate, &mut scratch);
                if z_new > cur_z && best.as_ref().is_none_or(|&(_, _, z)| z_new > z) {
                    best = Some((node, to, z_new));
                }
            }
        }
        match best {
            Some((node, to, z_new)) => {
                stats.apply_move(g, p, &c, node, to, &mut scratch);
                c.set_group(node, to);
                cur_z = z_new;
            }
            None => return Ok((c, cur_z)),
        }
    }
}

/// Best labeling over all restarts. Restarts are independent (deterministic
/// per-restart seeds) and may run in parallel; ties break toward the lowest
/// restart index, so the report does not depend on scheduling.
pub fn maximize_z<S: Scalar>(
    g: &Graph,
    p: &ProbMatrix<S>,
    b: &BlockMatrix,
    cfg: &AnnealConfig,
) -> Result<OptimumReport<S>> {
    if g.node_count() != p.n() {
        return Err(Error::usage("probability matrix does not match the graph"));
    }
    if cfg.restarts == 0 {
        return Err(Error::usage("need at least one restart"));
    }
    if cfg.alpha <= 0.0 || cfg.alpha >= 1.0 || cfg.t0 <= 0.0 {
        return Err(Error::usage("need 0 < alpha < 1 and t0 > 0"));
    }
    if p.total_variance() <= S::cast(VAR_EPSILON) {
        return Err(Error::StatisticUndefined);
    }
    // validate shapes once before the hot path
    let probe = block_stats(g, p, &Labeling::new(vec![0; g.node_count()], b.k())?, b.k());
    probe.z_total(b)?;

    let outcomes: Vec<RestartOutcome<S>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.seed, stream::RESTART, r as u64);
            run_restart(g, p, b, cfg, seed)
        })
        .collect();

    let mut best_idx = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.z > outcomes[best_idx].z {
            best_idx = i;
        }
    }
    let restart_scores = outcomes.iter().map(|o| o.z).collect();
    let sweeps_used = outcomes.iter().map(|o| o.sweeps).collect();
    let best = &outcomes[best_idx];
    Ok(OptimumReport {
        best_labeling: best.labeling.clone(),
        best_z: best.z,
        restart_scores,
        sweeps_used,
    })
}
