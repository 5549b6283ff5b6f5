//! netsig: community detection as hypothesis testing.
//!
//! Exit codes: 0 on success (including statistically non-significant
//! results), 1 on operational failure, 2 on usage errors. Operational
//! failures emit a machine-readable JSON line on stderr.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use netsig::anneal::AnnealConfig;
use netsig::block::BlockMatrix;
use netsig::generators::{
    DcPpmSpec, GeneratorSpec, PlantedCliqueSpec, PpmSpec, SpatialPpmSpec,
};
use netsig::graph::{load_coords_csv, load_edge_list, write_edge_list, Graph};
use netsig::nullmodel::{BinSpec, FitOptions, NullKind, NullModel, NullSpec};
use netsig::pipeline::{run_test, sweep_with, ExperimentSpec, Tail, TestConfig};
use netsig::Error as NetsigError;

#[derive(Parser)]
#[command(name = "netsig", version, about = "Community detection as hypothesis testing against maximum-entropy null models")]
struct Cli {
    /// Worker threads for replicas and restarts (default: all cores).
    #[arg(long, global = true, env = "NETSIG_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a null model and write it as JSON.
    Fit(FitCmd),
    /// Find the labeling maximizing Z under a null and block pattern.
    Detect(DetectCmd),
    /// Full hypothesis test: observed Z versus null-replica maxima.
    Test(TestCmd),
    /// Generate a benchmark network.
    Generate(GenerateCmd),
    /// Run an experiment grid from a spec file and emit CSV.
    Sweep(SweepCmd),
    /// Write the top adjacency eigenvectors as CSV.
    Eigen(EigenCmd),
}

#[derive(Args)]
struct NullArgs {
    /// Null model: er | config | rdpg | gravity.
    #[arg(long)]
    null: NullName,
    /// Eigenvector count for the rdpg null.
    #[arg(long)]
    rank: Option<usize>,
    /// Quantile bin count for the gravity null.
    #[arg(long)]
    bins: Option<usize>,
    /// Explicit bin edges for the gravity null, e.g. "0,1.5,3,inf".
    #[arg(long, value_delimiter = ',', conflicts_with = "bins")]
    bin_edges: Option<Vec<String>>,
    /// Gradient tolerance of the multiplier solve.
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Constraint residual tolerance of the returned model.
    #[arg(long)]
    constraint_tol: Option<f64>,
    /// Iteration budget of the multiplier solve.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NullName {
    Er,
    Config,
    Rdpg,
    Gravity,
}

impl NullArgs {
    fn build(&self) -> Result<NullSpec, CliError> {
        let kind = match self.null {
            NullName::Er => NullKind::Er,
            NullName::Config => NullKind::Configuration,
            NullName::Rdpg => {
                let rank = self
                    .rank
                    .ok_or_else(|| CliError::usage("--rank is required for the rdpg null"))?;
                NullKind::Rdpg { rank }
            }
            NullName::Gravity => {
                let bins = if let Some(edges) = &self.bin_edges {
                    let parsed: Result<Vec<f64>, _> = edges
                        .iter()
                        .map(|e| match e.trim() {
                            "inf" | "Inf" | "INF" => Ok(f64::INFINITY),
                            other => other.parse::<f64>(),
                        })
                        .collect();
                    BinSpec::Explicit {
                        edges: parsed
                            .map_err(|e| CliError::usage(format!("bad --bin-edges: {e}")))?,
                    }
                } else {
                    BinSpec::Quantile {
                        count: self.bins.unwrap_or(10),
                    }
                };
                NullKind::Gravity { bins }
            }
        };
        let defaults = FitOptions::default();
        Ok(NullSpec {
            kind,
            fit: FitOptions {
                grad_tol: self.grad_tol.unwrap_or(defaults.grad_tol),
                constraint_tol: self.constraint_tol.unwrap_or(defaults.constraint_tol),
                max_iters: self.max_iters.unwrap_or(defaults.max_iters),
                memory: defaults.memory,
            },
        })
    }
}

#[derive(Args)]
struct GraphArgs {
    /// Edge-list file (whitespace-separated pairs; '#' comments ignored).
    #[arg(long)]
    graph: PathBuf,
    /// Coordinates CSV "id,x,y" (required by the gravity null).
    #[arg(long)]
    coords: Option<PathBuf>,
}

impl GraphArgs {
    fn load(&self) -> Result<Graph, CliError> {
        let file = File::open(&self.graph)
            .map_err(|e| CliError::usage(format!("cannot open {}: {e}", self.graph.display())))?;
        let loaded = load_edge_list(BufReader::new(file))?;
        if loaded.duplicate_edges > 0 || loaded.self_loops > 0 {
            eprintln!(
                "note: dropped {} duplicate edges and {} self-loops",
                loaded.duplicate_edges, loaded.self_loops
            );
        }
        let mut graph = loaded.graph;
        if let Some(coords_path) = &self.coords {
            let text = std::fs::read_to_string(coords_path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", coords_path.display())))?;
            let coords = load_coords_csv(&text, &graph)?;
            graph = graph.with_coords(coords)?;
        }
        Ok(graph)
    }
}

#[derive(Args)]
struct PatternArgs {
    /// assortative | bipartite | repulsive | double_core_periphery.
    #[arg(long, conflicts_with = "pattern_file")]
    pattern: Option<String>,
    /// JSON file {"size": K, "entries": [[...]], "unassigned": bool}.
    #[arg(long)]
    pattern_file: Option<PathBuf>,
    /// Structural group count for the assortative pattern.
    #[arg(long)]
    groups: Option<usize>,
    /// Append an all-zero unassigned group to the assortative pattern.
    #[arg(long, default_value_t = false)]
    unassigned: bool,
}

impl PatternArgs {
    fn build(&self) -> Result<BlockMatrix, CliError> {
        if let Some(path) = &self.pattern_file {
            let doc = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            return Ok(BlockMatrix::parse_json(&doc)?);
        }
        match self.pattern.as_deref() {
            Some("assortative") => {
                let groups = self
                    .groups
                    .ok_or_else(|| CliError::usage("--groups is required with --pattern assortative"))?;
                Ok(BlockMatrix::assortative(groups, self.unassigned)?)
            }
            Some(name) => Ok(BlockMatrix::named_pattern(name)?),
            None => Err(CliError::usage("one of --pattern or --pattern-file is required")),
        }
    }
}

#[derive(Args)]
struct AnnealArgs {
    #[arg(long)]
    t0: Option<f64>,
    /// Geometric cooling factor per sweep.
    #[arg(long)]
    cooling: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    stall_sweeps: Option<usize>,
    /// Also propose pairwise label swaps.
    #[arg(long, default_value_t = false)]
    pair_swaps: bool,
}

impl AnnealArgs {
    fn build(&self, seed: u64) -> AnnealConfig {
        let d = AnnealConfig::default();
        AnnealConfig {
            t0: self.t0.unwrap_or(d.t0),
            alpha: self.cooling.unwrap_or(d.alpha),
            sweeps: self.sweeps.unwrap_or(d.sweeps),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed,
            stall_sweeps: self.stall_sweeps.unwrap_or(d.stall_sweeps),
            pair_swaps: self.pair_swaps,
        }
    }
}

#[derive(Args)]
struct FitCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    null: NullArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    null: NullArgs,
    #[command(flatten)]
    pattern: PatternArgs,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TestCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    null: NullArgs,
    #[command(flatten)]
    pattern: PatternArgs,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[arg(long, default_value_t = 100)]
    replicas: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TailArg::Right)]
    tail: TailArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Right,
    Left,
}

#[derive(Args)]
struct GenerateCmd {
    /// ppm | dcppm | clique | spatial.
    #[arg(long)]
    kind: String,
    /// Group sizes, e.g. "20,20,20".
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    omega_in: Option<f64>,
    #[arg(long)]
    omega_out: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Node count (clique generator).
    #[arg(long)]
    n: Option<usize>,
    /// Background edge probability (clique generator).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    n_clique: Option<usize>,
    /// Gaussian cloud x offsets (spatial), e.g. "0,1".
    #[arg(long, value_delimiter = ',')]
    mu_x: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes PREFIX.edges, PREFIX.labels.csv and, for
    /// spatial networks, PREFIX.coords.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepCmd {
    #[arg(long)]
    experiment: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write one TestResult JSON per (point, network) cell.
    #[arg(long)]
    cells_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EigenCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------

struct CliError {
    message: String,
    usage: bool,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> CliError {
        CliError {
            message: msg.into(),
            usage: true,
        }
    }

    fn operational(msg: impl Into<String>) -> CliError {
        CliError {
            message: msg.into(),
            usage: false,
        }
    }
}

impl From<NetsigError> for CliError {
    fn from(e: NetsigError) -> CliError {
        let usage = matches!(
            e,
            NetsigError::Usage(_) | NetsigError::Parse { .. } | NetsigError::BlockMatrix(_)
        );
        CliError {
            message: e.to_string(),
            usage,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::operational(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError::operational(format!("json: {e}"))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("{{\"error\":\"cannot build thread pool: {e}\",\"kind\":\"operational\"}}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.usage { "usage" } else { "operational" };
            let doc = serde_json::json!({ "error": e.message, "kind": kind });
            eprintln!("{doc}");
            ExitCode::from(if e.usage { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(cmd) => cmd_fit(cmd),
        Command::Detect(cmd) => cmd_detect(cmd),
        Command::Test(cmd) => cmd_test(cmd),
        Command::Generate(cmd) => cmd_generate(cmd),
        Command::Sweep(cmd) => cmd_sweep(cmd),
        Command::Eigen(cmd) => cmd_eigen(cmd),
    }
}

fn cmd_fit(cmd: FitCmd) -> Result<(), CliError> {
    let graph = cmd.graph.load()?;
    let spec = cmd.null.build()?;
    let model: NullModel<f64> = netsig::nullmodel::fit(&graph, &spec)?;
    println!(
        "fitted {} null on {} nodes: {} iterations, gradient {:.3e}, max residual {:.3e}",
        model.kind_name(),
        graph.node_count(),
        model.diagnostics.iterations,
        model.diagnostics.grad_norm,
        model.diagnostics.max_residual
    );
    for w in &model.diagnostics.warnings {
        println!("warning: {w}");
    }
    write_json(&cmd.out, &model.to_json())
}

#[derive(Serialize)]
struct DetectOutput {
    z: f64,
    labels: Vec<u32>,
    restart_scores: Vec<f64>,
    sweeps_used: Vec<usize>,
    null: String,
    block_matrix: serde_json::Value,
    anneal: AnnealConfig,
    seed: u64,
    version: String,
}

fn cmd_detect(cmd: DetectCmd) -> Result<(), CliError> {
    let graph = cmd.graph.load()?;
    let spec = cmd.null.build()?;
    let pattern = cmd.pattern.build()?;
    let model: NullModel<f64> = netsig::nullmodel::fit(&graph, &spec)?;
    let probs = model.probabilities();
    let anneal_cfg = cmd.anneal.build(cmd.seed);
    let report = netsig::anneal::maximize_z(&graph, &probs, &pattern, &anneal_cfg)?;
    println!("Z = {:.6} over {} restarts", report.best_z, report.restart_scores.len());
    let out = DetectOutput {
        z: report.best_z,
        labels: report.best_labeling.as_slice().to_vec(),
        restart_scores: report.restart_scores,
        sweeps_used: report.sweeps_used,
        null: model.kind_name().into(),
        block_matrix: serde_json::json!({
            "size": pattern.k(),
            "entries": pattern.rows(),
            "unassigned": pattern.has_unassigned(),
        }),
        anneal: anneal_cfg,
        seed: cmd.seed,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    write_json(&cmd.out, &out)
}

fn cmd_test(cmd: TestCmd) -> Result<(), CliError> {
    let graph = cmd.graph.load()?;
    let spec = cmd.null.build()?;
    let pattern = cmd.pattern.build()?;
    let cfg = TestConfig {
        replicas: cmd.replicas,
        alpha: cmd.alpha,
        seed: cmd.seed,
        anneal: cmd.anneal.build(cmd.seed),
        tail: match cmd.tail {
            TailArg::Right => Tail::Right,
            TailArg::Left => Tail::Left,
        },
    };
    let result = run_test::<f64>(&graph, &spec, &pattern, &cfg)?;
    println!(
        "Z_observed = {:.6}, p = {:.6} ({} replicas, {:?} tail) -> {}",
        result.z_observed,
        result.p_value,
        cmd.replicas,
        result.tail,
        if result.reject {
            "reject the null"
        } else {
            "no evidence against the null"
        }
    );
    write_json(&cmd.out, &result.to_json())
}

fn cmd_generate(cmd: GenerateCmd) -> Result<(), CliError> {
    let sizes = cmd.sizes.clone();
    let need = |opt: Option<f64>, name: &str| {
        opt.ok_or_else(|| CliError::usage(format!("--{name} is required for this generator")))
    };
    let spec = match cmd.kind.as_str() {
        "ppm" => GeneratorSpec::Ppm(PpmSpec {
            sizes: sizes.ok_or_else(|| CliError::usage("--sizes is required for ppm"))?,
            p_in: need(cmd.p_in, "p-in")?,
            p_out: need(cmd.p_out, "p-out")?,
        }),
        "dcppm" => GeneratorSpec::DcPpm(DcPpmSpec {
            sizes: sizes.ok_or_else(|| CliError::usage("--sizes is required for dcppm"))?,
            omega_in: need(cmd.omega_in, "omega-in")?,
            omega_out: need(cmd.omega_out, "omega-out")?,
            gamma: need(cmd.gamma, "gamma")?,
        }),
        "clique" => GeneratorSpec::PlantedClique(PlantedCliqueSpec {
            n: cmd.n.ok_or_else(|| CliError::usage("--n is required for clique"))?,
            p: need(cmd.p, "p")?,
            n_clique: cmd
                .n_clique
                .ok_or_else(|| CliError::usage("--n-clique is required for clique"))?,
        }),
        "spatial" => {
            let sizes = sizes.ok_or_else(|| CliError::usage("--sizes is required for spatial"))?;
            if sizes.len() != 2 {
                return Err(CliError::usage("spatial ppm takes exactly two group sizes"));
            }
            let mu_x = cmd
                .mu_x
                .clone()
                .ok_or_else(|| CliError::usage("--mu-x is required for spatial"))?;
            if mu_x.len() != 2 {
                return Err(CliError::usage("--mu-x takes exactly two offsets"));
            }
            GeneratorSpec::SpatialPpm(SpatialPpmSpec {
                sizes: [sizes[0], sizes[1]],
                p_in: need(cmd.p_in, "p-in")?,
                p_out: need(cmd.p_out, "p-out")?,
                mu_x: [mu_x[0], mu_x[1]],
                sigma: need(cmd.sigma, "sigma")?,
            })
        }
        other => return Err(CliError::usage(format!("unknown generator {other:?}"))),
    };
    let (graph, labels) = spec.generate(cmd.seed)?;

    let edges_path = cmd.out.with_extension("edges");
    let mut edges_file = BufWriter::new(File::create(&edges_path)?);
    writeln!(
        edges_file,
        "# netsig generate v{} seed={} spec={}",
        env!("CARGO_PKG_VERSION"),
        cmd.seed,
        serde_json::to_string(&spec)?
    )?;
    write_edge_list(&graph, &mut edges_file)?;
    edges_file.flush()?;

    let labels_path = cmd.out.with_extension("labels.csv");
    let mut labels_file = BufWriter::new(File::create(&labels_path)?);
    writeln!(labels_file, "id,group")?;
    for (i, &g) in labels.as_slice().iter().enumerate() {
        writeln!(labels_file, "{},{}", graph.node_name(i), g)?;
    }
    labels_file.flush()?;

    let mut written = vec![edges_path.display().to_string(), labels_path.display().to_string()];
    if let Some(coords) = graph.coords() {
        let coords_path = cmd.out.with_extension("coords.csv");
        let mut coords_file = BufWriter::new(File::create(&coords_path)?);
        writeln!(coords_file, "id,x,y")?;
        for (i, c) in coords.iter().enumerate() {
            writeln!(coords_file, "{},{},{}", graph.node_name(i), c[0], c[1])?;
        }
        coords_file.flush()?;
        written.push(coords_path.display().to_string());
    }
    println!(
        "generated {} nodes, {} edges -> {}",
        graph.node_count(),
        graph.edge_count(),
        written.join(", ")
    );
    Ok(())
}

fn cmd_sweep(cmd: SweepCmd) -> Result<(), CliError> {
    let doc = std::fs::read_to_string(&cmd.experiment)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", cmd.experiment.display())))?;
    let spec: ExperimentSpec =
        serde_json::from_str(&doc).map_err(|e| CliError::usage(format!("bad experiment spec: {e}")))?;

    if let Some(dir) = &cmd.cells_dir {
        std::fs::create_dir_all(dir)?;
    }
    let cells_dir = cmd.cells_dir.clone();
    let param = spec.sweep.param.name();
    let report = sweep_with::<f64, _>(&spec, |pi, net, result| {
        if let Some(dir) = &cells_dir {
            let path = dir.join(format!("{param}_{pi:03}_net{net:03}.json"));
            let _ = write_json(&path, &result.to_json());
        }
    })?;

    std::fs::write(&cmd.out, report.to_csv())?;
    if let Some(ks) = report.kesten_stigum {
        println!("kesten-stigum boundary: {} = {ks:.6}", report.param_name);
    }
    let total: usize = report.rows.iter().map(|r| r.n_networks + r.n_failures).sum();
    let failed: usize = report.rows.iter().map(|r| r.n_failures).sum();
    println!(
        "sweep complete: {} points, {total} cells, {failed} failures -> {}",
        report.rows.len(),
        cmd.out.display()
    );
    if failed * 10 > total {
        return Err(CliError::operational(format!(
            "{failed} of {total} cells failed (more than 10%)"
        )));
    }
    Ok(())
}

fn cmd_eigen(cmd: EigenCmd) -> Result<(), CliError> {
    let graph = cmd.graph.load()?;
    let basis = netsig::spectral::top_eigenpairs::<f64>(&graph, cmd.rank)?;
    let mut out = String::new();
    out.push_str(&format!(
        "# eigenvalues: {}\n",
        basis
            .values()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));
    out.push_str(
        &(1..=cmd.rank)
            .map(|m| format!("e{m}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push('\n');
    for i in 0..graph.node_count() {
        let row: Vec<String> = (0..cmd.rank)
            .map(|m| basis.column(m)[i].to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(&cmd.out, out)?;
    println!(
        "wrote {} eigenvectors of {} nodes -> {}",
        cmd.rank,
        graph.node_count(),
        cmd.out.display()
    );
    Ok(())
}
