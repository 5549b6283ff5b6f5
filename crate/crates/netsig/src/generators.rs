//! Benchmark network generators: planted partition, degree-corrected planted
//! partition, planted clique on ER, and spatially embedded PPM. All are pure
//! functions of (spec, seed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::zstat::Labeling;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpmSpec {
    pub sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcPpmSpec {
    pub sizes: Vec<usize>,
    pub omega_in: f64,
    pub omega_out: f64,
    /// Pareto exponent for the raw propensities t_i (scale fixed at 1).
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedCliqueSpec {
    pub n: usize,
    /// Background ER edge probability.
    pub p: f64,
    pub n_clique: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpatialPpmSpec {
    pub sizes: [usize; 2],
    pub p_in: f64,
    pub p_out: f64,
    /// Per-group x offsets of the Gaussian clouds.
    pub mu_x: [f64; 2],
    pub sigma: f64,
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::usage(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

fn block_labels(sizes: &[usize]) -> Vec<u32> {
    let mut labels = Vec::with_capacity(sizes.iter().sum());
    for (group, &size) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(group as u32, size));
    }
    labels
}

/// theta_i = t_i / sum of t over i's group.
pub fn block_normalize(t: &[f64], labels: &[u32], groups: usize) -> Vec<f64> {
    let mut totals = vec![0.0; groups];
    for (i, &g) in labels.iter().enumerate() {
        totals[g as usize] += t[i];
    }
    t.iter()
        .zip(labels)
        .map(|(&ti, &g)| ti / totals[g as usize])
        .collect()
}

/// Planted partition model: p_in within groups, p_out between.
pub fn gen_ppm(spec: &PpmSpec, seed: u64) -> Result<(Graph, Labeling)> {
    if spec.sizes.is_empty() || spec.sizes.contains(&0) {
        return Err(Error::usage("group sizes must be positive"));
    }
    check_probability("p_in", spec.p_in)?;
    check_probability("p_out", spec.p_out)?;
    let labels = block_labels(&spec.sizes);
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let g = Graph::new(n, edges)?;
    let c = Labeling::new(labels, spec.sizes.len())?;
    Ok((g, c))
}

/// Degree-corrected PPM with the Poisson edge rule
/// P(i~j) = 1 - exp(-theta_i theta_j omega_{g_i g_j}).
pub fn gen_dcppm(spec: &DcPpmSpec, seed: u64) -> Result<(Graph, Labeling)> {
    if spec.sizes.is_empty() || spec.sizes.contains(&0) {
        return Err(Error::usage("group sizes must be positive"));
    }
    if spec.omega_in < 0.0 || spec.omega_out < 0.0 {
        return Err(Error::usage("omega rates must be nonnegative"));
    }
    if spec.gamma <= 1.0 {
        return Err(Error::usage("pareto exponent must exceed 1"));
    }
    let labels = block_labels(&spec.sizes);
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let pareto = Pareto::new(1.0, spec.gamma)
        .map_err(|e| Error::usage(format!("invalid pareto parameters: {e}")))?;
    let t: Vec<f64> = (0..n).map(|_| pareto.sample(&mut rng)).collect();
    let theta = block_normalize(&t, &labels, spec.sizes.len());

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let omega = if labels[i] == labels[j] {
                spec.omega_in
            } else {
                spec.omega_out
            };
            let p = 1.0 - (-theta[i] * theta[j] * omega).exp();
            if rng.random::<f64>() < p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let g = Graph::new(n, edges)?;
    let c = Labeling::new(labels, spec.sizes.len())?;
    Ok((g, c))
}

/// ER background plus a forced clique on the first n_clique nodes. The
/// labeling marks clique (group 0) versus rest (group 1).
pub fn gen_planted_clique(spec: &PlantedCliqueSpec, seed: u64) -> Result<(Graph, Labeling)> {
    if spec.n_clique > spec.n {
        return Err(Error::usage("clique larger than the graph"));
    }
    check_probability("p", spec.p)?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let forced = j < spec.n_clique;
            if forced || rng.random::<f64>() < spec.p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let labels = (0..n)
        .map(|i| if i < spec.n_clique { 0 } else { 1 })
        .collect();
    let g = Graph::new(n, edges)?;
    let c = Labeling::new(labels, 2)?;
    Ok((g, c))
}

/// Two-block PPM whose blocks are dropped as Gaussian point clouds:
/// (x, y) ~ (N(mu_x[g], sigma), N(0, sigma)).
pub fn gen_spatial_ppm(spec: &SpatialPpmSpec, seed: u64) -> Result<(Graph, Labeling)> {
    if spec.sigma <= 0.0 {
        return Err(Error::usage("sigma must be positive"));
    }
    let ppm = PpmSpec {
        sizes: spec.sizes.to_vec(),
        p_in: spec.p_in,
        p_out: spec.p_out,
    };
    check_probability("p_in", spec.p_in)?;
    check_probability("p_out", spec.p_out)?;
    if spec.sizes.contains(&0) {
        return Err(Error::usage("group sizes must be positive"));
    }
    let labels = block_labels(&ppm.sizes);
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // coordinates first, then the edge scan, in one deterministic stream
    let noise = Normal::new(0.0, spec.sigma)
        .map_err(|e| Error::usage(format!("invalid gaussian parameters: {e}")))?;
    let coords: Vec<[f64; 2]> = labels
        .iter()
        .map(|&g| {
            let x = spec.mu_x[g as usize] + noise.sample(&mut rng);
            let y = noise.sample(&mut rng);
            [x, y]
        })
        .collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let g = Graph::new(n, edges)?.with_coords(coords)?;
    let c = Labeling::new(labels, 2)?;
    Ok((g, c))
}

/// Any generator, as named in experiment specs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Ppm(PpmSpec),
    DcPpm(DcPpmSpec),
    PlantedClique(PlantedCliqueSpec),
    SpatialPpm(SpatialPpmSpec),
}

impl GeneratorSpec {
    pub fn generate(&self, seed: u64) -> Result<(Graph, Labeling)> {
        match self {
            GeneratorSpec::Ppm(s) => gen_ppm(s, seed),
            GeneratorSpec::DcPpm(s) => gen_dcppm(s, seed),
            GeneratorSpec::PlantedClique(s) => gen_planted_clique(s, seed),
            GeneratorSpec::SpatialPpm(s) => gen_spatial_ppm(s, seed),
        }
    }

    /// Structural group count of the planted labeling.
    pub fn planted_groups(&self) -> usize {
        match self {
            GeneratorSpec::Ppm(s) => s.sizes.len(),
            GeneratorSpec::DcPpm(s) => s.sizes.len(),
            GeneratorSpec::PlantedClique(_) => 2,
            GeneratorSpec::SpatialPpm(_) => 2,
        }
    }
}
