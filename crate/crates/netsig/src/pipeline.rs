//! The five-step hypothesis test: fit the null on the observed graph, find
//! the max-Z labeling, repeat the identical optimization on null replicas,
//! and report a Monte-Carlo pseudo p-value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anneal::{maximize_z, AnnealConfig};
use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::graph::Graph;
use crate::nullmodel::{fit, sample, FitDiagnostics, FitOptions, NullKind, NullSpec};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, stream};
use crate::zstat::Labeling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    #[default]
    Right,
    Left,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    /// Number of null replicas N_P.
    pub replicas: usize,
    /// Significance threshold for the reject flag.
    pub alpha: f64,
    /// Master seed; every replica and restart seed derives from it.
    pub seed: u64,
    pub anneal: AnnealConfig,
    pub tail: Tail,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            replicas: 100,
            alpha: 0.01,
            seed: 0,
            anneal: AnnealConfig::default(),
            tail: Tail::Right,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestResult<S> {
    pub z_observed: S,
    pub labels: Labeling,
    /// Replica maxima, in replica order.
    pub z_null: Vec<S>,
    pub p_value: f64,
    pub reject: bool,
    pub tail: Tail,
    pub null_kind: String,
    pub null_diagnostics: FitDiagnostics,
    pub fit_options: FitOptions,
    pub block_matrix: BlockMatrix,
    pub config: TestConfig,
}

/// Serializable form of a test result; z values are emitted as f64.
#[derive(Debug, Serialize, Deserialize)]
pub struct TestResultJson {
    pub z_observed: f64,
    pub labels: Vec<u32>,
    pub z_null: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub tail: Tail,
    pub null: NullSummaryJson,
    pub block_matrix: BlockMatrixJson,
    pub seeds: SeedsJson,
    pub config: TestConfigJson,
    pub version: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NullSummaryJson {
    pub kind: String,
    pub diagnostics: FitDiagnostics,
    pub fit_options: FitOptions,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlockMatrixJson {
    pub size: usize,
    pub entries: Vec<Vec<i8>>,
    pub unassigned: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeedsJson {
    pub master: u64,
    /// How per-replica seeds derive from the master seed.
    pub scheme: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TestConfigJson {
    pub replicas: usize,
    pub alpha: f64,
    pub anneal: AnnealConfig,
}

impl<S: Scalar> TestResult<S> {
    pub fn to_json(&self) -> TestResultJson {
        TestResultJson {
            z_observed: self.z_observed.as_f64(),
            labels: self.labels.as_slice().to_vec(),
            z_null: self.z_null.iter().map(|z| z.as_f64()).collect(),
            p_value: self.p_value,
            reject: self.reject,
            tail: self.tail,
            null: NullSummaryJson {
                kind: self.null_kind.clone(),
                diagnostics: self.null_diagnostics.clone(),
                fit_options: self.fit_options,
            },
            block_matrix: BlockMatrixJson {
                size: self.block_matrix.k(),
                entries: self.block_matrix.rows(),
                unassigned: self.block_matrix.has_unassigned(),
            },
            seeds: SeedsJson {
                master: self.config.seed,
                scheme: "splitmix64(master, stream, index)".into(),
            },
            config: TestConfigJson {
                replicas: self.config.replicas,
                alpha: self.config.alpha,
                anneal: self.config.anneal,
            },
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Monte-Carlo pseudo p-value with add-one smoothing; ties count toward the
/// tail, so the result is never exactly zero.
pub fn pseudo_p_value<S: Scalar>(z_observed: S, z_null: &[S], tail: Tail) -> f64 {
    let exceed = z_null
        .iter()
        .filter(|&&z| match tail {
            Tail::Right => z >= z_observed,
            Tail::Left => z <= z_observed,
        })
        .count();
    (1 + exceed) as f64 / (z_null.len() + 1) as f64
}

/// Run the full test of one block pattern against one null.
pub fn run_test<S: Scalar>(
    g: &Graph,
    spec: &NullSpec,
    b: &BlockMatrix,
    cfg: &TestConfig,
) -> Result<TestResult<S>> {
    if cfg.replicas == 0 {
        return Err(Error::usage("need at least one replica"));
    }
    if cfg.alpha <= 0.0 || cfg.alpha >= 1.0 {
        return Err(Error::usage("alpha must be in (0, 1)"));
    }

    let model = fit::<S>(g, spec)?;
    let probs = model.probabilities();

    let observed_cfg = AnnealConfig {
        seed: derive_seed(cfg.seed, stream::OBSERVED_ANNEAL, 0),
        ..cfg.anneal
    };
    let observed = maximize_z(g, &probs, b, &observed_cfg)?;

    let z_null: Vec<S> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut replica = None;
            for attempt in 0..4u64 {
                let seed = derive_seed(cfg.seed, stream::REPLICA_GRAPH, (r as u64) * 8 + attempt);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let candidate = sample(&probs, &mut rng);
                if candidate.edge_count() > 0 {
                    replica = Some(candidate);
                    break;
                }
            }
            let replica = replica.ok_or(Error::EmptyReplica {
                replica: r,
                attempts: 4,
            })?;
            let anneal_cfg = AnnealConfig {
                seed: derive_seed(cfg.seed, stream::REPLICA_ANNEAL, r as u64),
                ..cfg.anneal
            };
            Ok(maximize_z(&replica, &probs, b, &anneal_cfg)?.best_z)
        })
        .collect::<Result<Vec<S>>>()?;

    let p_value = pseudo_p_value(observed.best_z, &z_null, cfg.tail);
    Ok(TestResult {
        z_observed: observed.best_z,
        labels: observed.best_labeling,
        z_null,
        p_value,
        reject: p_value <= cfg.alpha,
        tail: cfg.tail,
        null_kind: model.kind_name().into(),
        null_diagnostics: model.diagnostics.clone(),
        fit_options: model.options,
        block_matrix: b.clone(),
        config: cfg.clone(),
    })
}

/// `run_test` with the left tail: significantly *small* Z rejects.
pub fn run_left_tail_test<S: Scalar>(
    g: &Graph,
    spec: &NullSpec,
    b: &BlockMatrix,
    cfg: &TestConfig,
) -> Result<TestResult<S>> {
    let cfg = TestConfig {
        tail: Tail::Left,
        ..cfg.clone()
    };
    run_test(g, spec, b, &cfg)
}

/// Smaller nonnegative root of (p_in - p_out)^2 = (C p_in + C(C-1) p_out)/N,
/// the detectability boundary reported alongside planted-partition sweeps.
pub fn kesten_stigum_boundary(groups: usize, nodes: usize, p_in: f64) -> Option<f64> {
    if groups < 2 || nodes == 0 || p_in <= 0.0 || p_in > 1.0 {
        return None;
    }
    let c = groups as f64;
    let n = nodes as f64;
    let b = -(2.0 * p_in + c * (c - 1.0) / n);
    let c0 = p_in * p_in - c * p_in / n;
    let disc = b * b - 4.0 * c0;
    if disc < 0.0 {
        return None;
    }
    let root = (-b - disc.sqrt()) / 2.0;
    if (0.0..=p_in).contains(&root) {
        Some(root)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Parameter sweeps over generated networks
// ---------------------------------------------------------------------------

/// How to build the block matrix in an experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternSpec {
    Assortative {
        groups: usize,
        #[serde(default)]
        unassigned: bool,
    },
    Named {
        name: String,
    },
    Explicit {
        size: usize,
        entries: Vec<Vec<i8>>,
        #[serde(default)]
        unassigned: bool,
    },
}

impl PatternSpec {
    pub fn build(&self) -> Result<BlockMatrix> {
        match self {
            PatternSpec::Assortative { groups, unassigned } => {
                BlockMatrix::assortative(*groups, *unassigned)
            }
            PatternSpec::Named { name } => BlockMatrix::named_pattern(name),
            PatternSpec::Explicit {
                size,
                entries,
                unassigned,
            } => {
                if entries.len() != *size {
                    return Err(Error::BlockMatrix("size/entries mismatch".into()));
                }
                BlockMatrix::from_rows(entries.clone(), *unassigned)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    POut,
    OmegaOut,
    Sigma,
    NClique,
    /// Rank of the RDPG null (the generator is left untouched).
    Rank,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::POut => "p_out",
            SweepParam::OmegaOut => "omega_out",
            SweepParam::Sigma => "sigma",
            SweepParam::NClique => "n_clique",
            SweepParam::Rank => "rank",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub generator: GeneratorSpec,
    pub sweep: SweepAxis,
    /// Networks generated per grid point (N_G).
    pub networks_per_point: usize,
    pub null: NullSpec,
    pub pattern: PatternSpec,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub anneal: AnnealConfig,
    #[serde(default)]
    pub tail: Tail,
}

fn default_replicas() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.01
}

fn apply_param(
    generator: &GeneratorSpec,
    null: &NullSpec,
    param: SweepParam,
    value: f64,
) -> Result<(GeneratorSpec, NullSpec)> {
    let mut generator = generator.clone();
    let mut null = null.clone();
    match (param, &mut generator) {
        (SweepParam::POut, GeneratorSpec::Ppm(s)) => s.p_out = value,
        (SweepParam::POut, GeneratorSpec::SpatialPpm(s)) => s.p_out = value,
        (SweepParam::OmegaOut, GeneratorSpec::DcPpm(s)) => s.omega_out = value,
        (SweepParam::Sigma, GeneratorSpec::SpatialPpm(s)) => s.sigma = value,
        (SweepParam::NClique, GeneratorSpec::PlantedClique(s)) => {
            s.n_clique = value.round() as usize
        }
        (SweepParam::Rank, _) => match &mut null.kind {
            NullKind::Rdpg { rank } => *rank = value.round() as usize,
            _ => return Err(Error::usage("rank sweep requires an rdpg null")),
        },
        (p, g) => {
            return Err(Error::usage(format!(
                "sweep parameter {:?} does not apply to generator {:?}",
                p.name(),
                g
            )))
        }
    }
    Ok((generator, null))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub mean_p: f64,
    pub median_p: f64,
    pub reject_frac: f64,
    pub mean_z_obs: f64,
    pub n_networks: usize,
    pub n_failures: usize,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub param_name: String,
    pub rows: Vec<SweepRow>,
    /// Detectability boundary when the generator is a plain PPM.
    pub kesten_stigum: Option<f64>,
    /// Individual p-values per (point, network), for callers that aggregate
    /// differently; failures are None.
    pub cell_p_values: Vec<Vec<Option<f64>>>,
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let n = sorted.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Run the experiment grid. Per-network failures are counted per point and
/// do not abort the sweep.
pub fn sweep<S: Scalar>(spec: &ExperimentSpec) -> Result<SweepReport> {
    sweep_with::<S, _>(spec, |_, _, _| {})
}

/// [`sweep`] with a callback invoked for every completed cell, e.g. to
/// persist per-cell result JSONs. Cells run in parallel; the callback must
/// tolerate arbitrary invocation order.
pub fn sweep_with<S, F>(spec: &ExperimentSpec, on_cell: F) -> Result<SweepReport>
where
    S: Scalar,
    F: Fn(usize, usize, &TestResult<S>) + Sync,
{
    if spec.networks_per_point == 0 {
        return Err(Error::usage("networks_per_point must be positive"));
    }
    if spec.sweep.values.is_empty() {
        return Err(Error::usage("sweep needs at least one value"));
    }
    let pattern = spec.pattern.build()?;

    let mut rows = Vec::new();
    let mut cell_p_values = Vec::new();
    for (pi, &value) in spec.sweep.values.iter().enumerate() {
        let (generator, null) = apply_param(&spec.generator, &spec.null, spec.sweep.param, value)?;
        let results: Vec<Option<(f64, f64, bool)>> = (0..spec.networks_per_point)
            .into_par_iter()
            .map(|net| {
                let key = ((pi as u64) << 32) | net as u64;
                let gen_seed = derive_seed(spec.seed, stream::NETWORK, key);
                let (graph, _planted) = match generator.generate(gen_seed) {
                    Ok(v) => v,
                    Err(_) => return None,
                };
                let cfg = TestConfig {
                    replicas: spec.replicas,
                    alpha: spec.alpha,
                    seed: derive_seed(spec.seed, stream::GENERATOR, key),
                    anneal: spec.anneal,
                    tail: spec.tail,
                };
                match run_test::<S>(&graph, &null, &pattern, &cfg) {
                    Ok(r) => {
                        on_cell(pi, net, &r);
                        Some((r.p_value, r.z_observed.as_f64(), r.reject))
                    }
                    Err(_) => None,
                }
            })
            .collect();

        let mut ps = Vec::new();
        let mut zs = Vec::new();
        let mut rejects = 0usize;
        let mut failures = 0usize;
        let mut cells = Vec::new();
        for r in &results {
            match r {
                Some((p, z, reject)) => {
                    ps.push(*p);
                    zs.push(*z);
                    if *reject {
                        rejects += 1;
                    }
                    cells.push(Some(*p));
                }
                None => {
                    failures += 1;
                    cells.push(None);
                }
            }
        }
        let succeeded = ps.len();
        let mean_p = ps.iter().sum::<f64>() / succeeded.max(1) as f64;
        let mean_z = zs.iter().sum::<f64>() / succeeded.max(1) as f64;
        rows.push(SweepRow {
            param: value,
            mean_p,
            median_p: median(&mut ps),
            reject_frac: rejects as f64 / succeeded.max(1) as f64,
            mean_z_obs: mean_z,
            n_networks: succeeded,
            n_failures: failures,
        });
        cell_p_values.push(cells);
    }

    let kesten_stigum = match &spec.generator {
        GeneratorSpec::Ppm(p) if spec.sweep.param == SweepParam::POut => {
            kesten_stigum_boundary(p.sizes.len(), p.sizes.iter().sum(), p.p_in)
        }
        _ => None,
    };

    Ok(SweepReport {
        param_name: spec.sweep.param.name().into(),
        rows,
        kesten_stigum,
        cell_p_values,
    })
}

impl SweepReport {
    /// CSV per the sweep schema; the detectability boundary, when known,
    /// rides along as a leading comment.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(ks) = self.kesten_stigum {
            out.push_str(&format!("# kesten_stigum_{} = {ks}\n", self.param_name));
        }
        out.push_str(&format!(
            "{},mean_p,median_p,reject_frac,mean_z_obs,n_networks,n_failures\n",
            self.param_name
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.param,
                row.mean_p,
                row.median_p,
                row.reject_frac,
                row.mean_z_obs,
                row.n_networks,
                row.n_failures
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_formula() {
        // observed above all null maxima
        assert_eq!(pseudo_p_value(5.0, &[1.0, 2.0, 3.0], Tail::Right), 0.25);
        // ties count toward the tail
        assert_eq!(pseudo_p_value(2.0, &[1.0, 2.0, 3.0], Tail::Right), 0.75);
        assert_eq!(pseudo_p_value(2.0, &[1.0, 2.0, 3.0], Tail::Left), 0.75);
        // all ties: both tails give 1
        assert_eq!(pseudo_p_value(2.0, &[2.0, 2.0], Tail::Right), 1.0);
        assert_eq!(pseudo_p_value(2.0, &[2.0, 2.0], Tail::Left), 1.0);
    }

    #[test]
    fn p_value_tails_are_complementary_without_ties() {
        let null = [1.0, 2.0, 3.0, 4.0];
        let obs = 2.5;
        let right = pseudo_p_value(obs, &null, Tail::Right);
        let left = pseudo_p_value(obs, &null, Tail::Left);
        let n_p = null.len() as f64;
        assert!((right + left - (1.0 + 1.0 / (n_p + 1.0))).abs() < 1e-12);
    }

    #[test]
    fn kesten_stigum_reference_point() {
        let root = kesten_stigum_boundary(3, 60, 0.8).unwrap();
        assert!((root - 0.5).abs() < 1e-12, "root {root}");
        // substituting the root back satisfies the defining equation
        let (c, n, p_in) = (3.0, 60.0, 0.8);
        let lhs = (p_in - root) * (p_in - root);
        let rhs = (c * p_in + c * (c - 1.0) * root) / n;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn kesten_stigum_large_n_limit() {
        let root = kesten_stigum_boundary(3, 100_000_000, 0.8).unwrap();
        assert!((root - 0.8).abs() < 1e-3, "root {root}");
    }

    #[test]
    fn kesten_stigum_invalid_inputs() {
        assert!(kesten_stigum_boundary(1, 60, 0.8).is_none());
        assert!(kesten_stigum_boundary(3, 60, 0.0).is_none());
    }

    #[test]
    fn extra_replicas_only_sharpen_the_p_value() {
        let g = crate::graph::Graph::new(
            6,
            [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)],
        )
        .unwrap();
        let null = NullSpec::new(NullKind::Er);
        let b = crate::block::BlockMatrix::assortative(2, false).unwrap();
        let small = TestConfig {
            replicas: 6,
            seed: 12,
            anneal: crate::anneal::AnnealConfig {
                restarts: 2,
                sweeps: 200,
                stall_sweeps: 50,
                ..Default::default()
            },
            ..TestConfig::default()
        };
        let large = TestConfig {
            replicas: 12,
            ..small.clone()
        };
        let a = run_test::<f64>(&g, &null, &b, &small).unwrap();
        let c = run_test::<f64>(&g, &null, &b, &large).unwrap();
        assert_eq!(a.z_observed, c.z_observed);
        assert_eq!(&a.z_null[..], &c.z_null[..6]);
    }

    #[test]
    fn pattern_spec_builds() {
        let a = PatternSpec::Assortative {
            groups: 2,
            unassigned: true,
        }
        .build()
        .unwrap();
        assert_eq!(a.k(), 3);
        let n = PatternSpec::Named {
            name: "bipartite".into(),
        }
        .build()
        .unwrap();
        assert_eq!(n.k(), 2);
        let e = PatternSpec::Explicit {
            size: 2,
            entries: vec![vec![1, -1], vec![-1, 1]],
            unassigned: false,
        }
        .build()
        .unwrap();
        assert_eq!(e.entry(0, 0), 1);
    }

    #[test]
    fn rank_sweep_requires_rdpg() {
        let err = apply_param(
            &GeneratorSpec::Ppm(crate::generators::PpmSpec {
                sizes: vec![5, 5],
                p_in: 0.5,
                p_out: 0.5,
            }),
            &NullSpec::new(NullKind::Er),
            SweepParam::Rank,
            2.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }
}
