//! Runs configured sweeps and writes one CSV trace per run plus a summary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::adversarial::{diag_instance, tilted_init, NoiseModel};
use crate::config::{
    BetaChoice, ExperimentConfig, ExperimentKind, InitSpec, InstanceSpec, LocalsSpec, Method,
    NetworkSpec, NoiseSpec, RoundsChoice, Topology, Weights,
};
use crate::decentralized::{
    adepm_run, communication_graph, depm_run, even_partition, laplacian_instance, perturbed_locals,
    required_l, split_covariance, DecentralizedConfig, DecentralizedTrace, LocalMatrices,
};
use crate::error::{Error, Result};
use crate::gossip::{
    metropolis_matrix, read_edge_list, ring_matrix, uniform_matrix, GossipMatrix, Graph,
};
use crate::linalg::Frame;
use crate::power::{random_init, run_solver, BetaMode, RunTrace, SolverConfig, SpectralInstance};
use crate::rng::{derive_seed, gaussian_matrix, seeded};

/// Column order of every trace file.
pub const CSV_HEADER: [&str; 12] = [
    "t",
    "sin_theta_k",
    "cos_theta_k",
    "tan_theta_k",
    "beta_t",
    "noise_norm",
    "noise_uk_norm",
    "noise_uminusk_norm",
    "cond_a",
    "cond_b",
    "consensus_err",
    "agent_id",
];

pub const SUMMARY_FILE: &str = "summary.json";

/// One parameter point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    pub method: String,
    pub lambda_k1: Option<f64>,
    pub xi: Option<f64>,
    pub beta: Option<BetaChoice>,
    pub rounds: Option<RoundsChoice>,
    pub network_method: Option<Method>,
}

impl RunPoint {
    /// File-name friendly label of the parameter point.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(l) = self.lambda_k1 {
            parts.push(format!("lk1-{l}"));
        }
        if let Some(x) = self.xi {
            parts.push(format!("xi-{x:e}"));
        }
        if let Some(b) = self.beta {
            parts.push(format!("beta-{}", b.label()));
        }
        match self.rounds {
            Some(RoundsChoice::Count(l)) => parts.push(format!("L-{l}")),
            Some(RoundsChoice::Required) => parts.push("L-required".into()),
            None => {}
        }
        if parts.is_empty() {
            parts.push("base".into());
        }
        parts.join("_")
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.method, self.label())
    }
}

/// Instance `lambda_k1` values, or a single `None` when the instance has no
/// gap axis.
fn gap_axis(cfg: &ExperimentConfig) -> Vec<Option<f64>> {
    match &cfg.instance {
        InstanceSpec::Synthetic { lambda_k1, .. } => {
            lambda_k1.values().into_iter().map(Some).collect()
        }
        _ => vec![None],
    }
}

/// Expands the sweep into its parameter points, in a fixed order.
pub fn plan(cfg: &ExperimentConfig) -> Result<Vec<RunPoint>> {
    let mut points = Vec::new();
    let betas = cfg.beta_choices()?;
    for lambda_k1 in gap_axis(cfg) {
        match cfg.kind {
            ExperimentKind::Tightness => points.push(RunPoint {
                method: "anpm".into(),
                lambda_k1,
                xi: None,
                beta: None,
                rounds: None,
                network_method: None,
            }),
            ExperimentKind::CentralizedSweep => {
                for xi in cfg.noise.xi_values() {
                    for &beta in &betas {
                        let method = if beta == BetaChoice::Fixed(0.0) {
                            "npm"
                        } else {
                            "anpm"
                        };
                        points.push(RunPoint {
                            method: method.into(),
                            lambda_k1,
                            xi,
                            beta: Some(beta),
                            rounds: None,
                            network_method: None,
                        });
                    }
                }
            }
            ExperimentKind::Decentralized => {
                let net = cfg.network.as_ref().expect("checked at parse time");
                for rounds in net.rounds.values() {
                    let rounds = rounds.resolve()?;
                    for &method in &net.methods {
                        let betas_here: Vec<Option<BetaChoice>> = match method {
                            Method::Adepm => betas.iter().copied().map(Some).collect(),
                            Method::Depm => vec![None],
                        };
                        for beta in betas_here {
                            points.push(RunPoint {
                                method: method.name().into(),
                                lambda_k1,
                                xi: None,
                                beta,
                                rounds: Some(rounds),
                                network_method: Some(method),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(points)
}

/// Synthetic spectral instance for one value of `lambda_{k+1}`.
pub fn build_synthetic(cfg: &ExperimentConfig, lambda_k1: f64) -> Result<SpectralInstance> {
    let InstanceSpec::Synthetic {
        d,
        k,
        lambda_1,
        lambda_k,
        lambda_d,
        ..
    } = cfg.instance
    else {
        return Err(Error::Config("not a synthetic instance".into()));
    };
    let seed = derive_seed(cfg.seed, &[&cfg.name, "instance", &format!("{lambda_k1}")]);
    SpectralInstance::synthetic(d, k, lambda_1, lambda_k, lambda_k1, lambda_d, seed)
}

/// Everything shared by the runs at one gap value.
struct Setting {
    reference: SpectralInstance,
    x0: Frame,
    network: Option<(LocalMatrices, GossipMatrix)>,
}

fn gap_key(lambda_k1: Option<f64>) -> String {
    lambda_k1.map_or_else(|| "none".to_string(), |l| format!("{l}"))
}

fn build_setting(cfg: &ExperimentConfig, lambda_k1: Option<f64>) -> Result<Setting> {
    let key = gap_key(lambda_k1);
    let labels = |what: &str| derive_seed(cfg.seed, &[&cfg.name, what, &key]);
    let (reference, network) = match (&cfg.instance, &cfg.network) {
        (InstanceSpec::Synthetic { .. }, net) => {
            let inst =
                build_synthetic(cfg, lambda_k1.expect("synthetic instances have a gap axis"))?;
            let network = match net {
                Some(net) => Some(build_network(
                    net,
                    &inst,
                    labels("network"),
                    labels("locals"),
                )?),
                None => None,
            };
            (inst, network)
        }
        (
            InstanceSpec::Diag {
                d,
                k,
                lambda_k,
                beta,
            },
            _,
        ) => (diag_instance(*lambda_k, *beta, *d, *k)?, None),
        (
            InstanceSpec::Laplacian {
                k,
                nodes,
                clusters,
                p_in,
                p_out,
            },
            Some(net),
        ) => {
            let data = planted_partition(*nodes, *clusters, *p_in, *p_out, labels("data-graph"))?;
            let locals = laplacian_instance(&data)?;
            let comm = communication_graph(&data, &mut seeded(labels("network")))?;
            let w = gossip_for(net, &comm)?;
            (locals.mean_instance(*k)?, Some((locals, w)))
        }
        (InstanceSpec::Laplacian { .. }, None) => {
            return Err(Error::Config(
                "laplacian instances need a [network] section".into(),
            ))
        }
    };
    let (d, k) = (reference.d(), reference.k());
    let x0 = match (cfg.kind, cfg.init) {
        (ExperimentKind::Tightness, _) | (_, InitSpec::Tilted) => tilted_init(cfg.eps, d, k)?,
        (_, InitSpec::Random) => random_init(d, k, labels("init"))?,
    };
    Ok(Setting {
        reference,
        x0,
        network,
    })
}

/// Planted-partition graph, redrawn until connected.
fn planted_partition(
    nodes: usize,
    clusters: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<Graph> {
    use rand::Rng;
    for attempt in 0..100u64 {
        let mut rng = seeded(derive_seed(seed, &[&attempt.to_string()]));
        let mut g = Graph::new(nodes);
        for i in 0..nodes {
            for j in i + 1..nodes {
                let p = if i % clusters == j % clusters {
                    p_in
                } else {
                    p_out
                };
                if rng.random::<f64>() < p {
                    g.add_edge(i, j)?;
                }
            }
        }
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Disconnected)
}

fn build_network(
    net: &NetworkSpec,
    inst: &SpectralInstance,
    graph_seed: u64,
    locals_seed: u64,
) -> Result<(LocalMatrices, GossipMatrix)> {
    let graph = match net.topology {
        Topology::Ring => Graph::ring(net.agents)?,
        Topology::Complete => Graph::complete(net.agents)?,
        Topology::Path => Graph::path(net.agents)?,
        Topology::Random => {
            let p = net.edge_prob.expect("checked at parse time");
            let mut found = None;
            for attempt in 0..100u64 {
                let g = Graph::random(
                    net.agents,
                    p,
                    &mut seeded(derive_seed(graph_seed, &[&attempt.to_string()])),
                )?;
                if g.is_connected() {
                    found = Some(g);
                    break;
                }
            }
            found.ok_or(Error::Disconnected)?
        }
        Topology::EdgeList => {
            read_edge_list(net.edge_list.as_deref().expect("checked at parse time"))?
        }
        Topology::Communication => {
            return Err(Error::Config(
                "the communication topology needs a laplacian instance".into(),
            ))
        }
    };
    let n = graph.n();
    let locals = match &net.locals {
        LocalsSpec::Perturbed { spread } => perturbed_locals(inst, n, *spread, locals_seed)?,
        LocalsSpec::Covariance { samples } => {
            // rows z^T Lambda^{1/2} U^T have population covariance A
            let d = inst.d();
            let z = gaussian_matrix(*samples, d, &mut seeded(locals_seed));
            let root = nalgebra::DMatrix::from_fn(d, d, |i, j| {
                inst.basis()[(j, i)] * inst.eigenvalues()[i].sqrt()
            });
            split_covariance(&(z * root), &even_partition(*samples, n))?
        }
        LocalsSpec::Directory { path } => LocalMatrices::from_dir(path)?,
        LocalsSpec::Laplacian => {
            return Err(Error::Config(
                "laplacian locals need a laplacian instance".into(),
            ))
        }
    };
    if locals.n() != n || locals.d() != inst.d() {
        return Err(Error::DimensionMismatch(format!(
            "{} local {}x{} matrices for {n} agents and d = {}",
            locals.n(),
            locals.d(),
            locals.d(),
            inst.d()
        )));
    }
    let w = gossip_for(net, &graph)?;
    Ok((locals, w))
}

fn gossip_for(net: &NetworkSpec, graph: &Graph) -> Result<GossipMatrix> {
    let weights = net.weights.unwrap_or(match net.topology {
        Topology::Ring => Weights::Ring,
        _ => Weights::Metropolis,
    });
    match weights {
        Weights::Ring => ring_matrix(graph.n()),
        Weights::Metropolis => metropolis_matrix(graph),
        Weights::Uniform => uniform_matrix(graph.n()),
    }
}

/// Per-run entry of the summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub method: String,
    pub label: String,
    pub file: String,
    pub lambda_k1: Option<f64>,
    pub gap: f64,
    pub xi: Option<f64>,
    pub beta: Option<String>,
    pub beta_value: Option<f64>,
    pub rounds: Option<usize>,
    pub iterations: usize,
    pub final_sin: f64,
    pub iterations_to_tolerance: Option<usize>,
    pub cond_a_violations: usize,
    pub cond_b_violations: usize,
    pub min_tan: f64,
    pub max_consensus: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub kind: String,
    pub seed: u64,
    pub tolerance: f64,
    pub runs: Vec<RunSummary>,
    pub wall_time_s: f64,
}

/// Runs every point of the sweep, writing traces into `out_dir` and the
/// summary last. `threads = None` uses the rayon default.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<Summary> {
    let started = Instant::now();
    let points = plan(cfg).map_err(|e| e.in_stage("plan"))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;

    let runs = pool.install(|| -> Result<Vec<RunSummary>> {
        let gaps = gap_axis(cfg);
        let settings: BTreeMap<String, Setting> = gaps
            .par_iter()
            .map(|&g| {
                build_setting(cfg, g)
                    .map(|s| (gap_key(g), s))
                    .map_err(|e| e.in_stage(format!("build instance lambda_k1 = {}", gap_key(g))))
            })
            .collect::<Result<_>>()?;
        points
            .par_iter()
            .map(|p| {
                let setting = &settings[&gap_key(p.lambda_k1)];
                run_point(cfg, p, setting, out_dir)
                    .map_err(|e| e.in_stage(format!("run {}", p.file_name())))
            })
            .collect()
    })?;

    let summary = Summary {
        experiment: cfg.name.clone(),
        kind: match cfg.kind {
            ExperimentKind::CentralizedSweep => "centralized-sweep",
            ExperimentKind::Tightness => "tightness",
            ExperimentKind::Decentralized => "decentralized",
        }
        .into(),
        seed: cfg.seed,
        tolerance: cfg.tolerance,
        runs,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let path = out_dir.join(SUMMARY_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &summary)?;
    writer.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    writer.flush().map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

fn resolve_beta(choice: BetaChoice, reference: &SpectralInstance) -> BetaMode {
    match choice {
        BetaChoice::Fixed(b) => BetaMode::Fixed(b),
        BetaChoice::Optimal(f) => BetaMode::Fixed(reference.beta_star() / f),
        BetaChoice::Adaptive => BetaMode::Adaptive,
    }
}

fn run_point(
    cfg: &ExperimentConfig,
    point: &RunPoint,
    setting: &Setting,
    out_dir: &Path,
) -> Result<RunSummary> {
    let started = Instant::now();
    let reference = &setting.reference;
    let label = point.label();
    let seed_for = |what: &str| derive_seed(cfg.seed, &[&cfg.name, what, &label]);
    let path = out_dir.join(point.file_name());

    let mut summary = RunSummary {
        method: point.method.clone(),
        label: label.clone(),
        file: point.file_name(),
        lambda_k1: point.lambda_k1,
        gap: reference.gap(),
        xi: point.xi,
        beta: point.beta.map(|b| b.label()),
        beta_value: None,
        rounds: None,
        iterations: cfg.iterations,
        final_sin: f64::NAN,
        iterations_to_tolerance: None,
        cond_a_violations: 0,
        cond_b_violations: 0,
        min_tan: f64::NAN,
        max_consensus: None,
        wall_time_s: 0.0,
    };

    match cfg.kind {
        ExperimentKind::CentralizedSweep | ExperimentKind::Tightness => {
            let (mode, noise) = if cfg.kind == ExperimentKind::Tightness {
                let InstanceSpec::Diag { beta, .. } = cfg.instance else {
                    return Err(Error::Config("tightness runs need a diag instance".into()));
                };
                let noise = match cfg.noise {
                    NoiseSpec::Drift => NoiseModel::Drift { eps: cfg.eps, beta },
                    NoiseSpec::Rotation => NoiseModel::Rotation { beta },
                    _ => NoiseModel::None,
                };
                (BetaMode::Fixed(beta), noise)
            } else {
                let mode = resolve_beta(
                    point.beta.expect("sweep points carry a momentum"),
                    reference,
                );
                let noise_seed = seed_for("noise");
                let noise = match (&cfg.noise, point.xi) {
                    (NoiseSpec::SampledAdversarial { .. }, Some(xi)) => {
                        NoiseModel::SampledAdversarial {
                            xi,
                            seed: noise_seed,
                        }
                    }
                    (NoiseSpec::Spherical { .. }, Some(xi)) => NoiseModel::Spherical {
                        xi,
                        seed: noise_seed,
                    },
                    (NoiseSpec::Bounded, _) => NoiseModel::Bounded {
                        eps: cfg.eps,
                        seed: noise_seed,
                    },
                    (NoiseSpec::Drift, _) | (NoiseSpec::Rotation, _) => {
                        return Err(Error::Config(
                            "drift and rotation noise belong to tightness runs".into(),
                        ))
                    }
                    _ => NoiseModel::None,
                };
                (mode, noise)
            };
            if let BetaMode::Fixed(b) = mode {
                summary.beta_value = Some(b);
            }
            let solver = SolverConfig::new(mode, cfg.iterations)
                .eps(cfg.eps)
                .extra_column_seed(derive_seed(
                    cfg.seed,
                    &[&cfg.name, "extra", &gap_key(point.lambda_k1)],
                ));
            let trace = run_solver(reference, &setting.x0, &noise, &solver)?;
            write_centralized(&path, &trace)?;
            summary.final_sin = trace.final_sin().unwrap_or(f64::NAN);
            summary.iterations_to_tolerance = trace.first_below(cfg.tolerance);
            (summary.cond_a_violations, summary.cond_b_violations) = trace.violations();
            summary.min_tan = trace.tan_series().into_iter().fold(f64::INFINITY, f64::min);
        }
        ExperimentKind::Decentralized => {
            let (locals, w) = setting
                .network
                .as_ref()
                .expect("decentralized settings carry a network");
            let method = point
                .network_method
                .expect("decentralized points carry a method");
            let (mode, beta_for_rounds) = match point.beta {
                Some(choice) => {
                    let mode = resolve_beta(choice, reference);
                    let b = match mode {
                        BetaMode::Fixed(b) => b,
                        BetaMode::Adaptive => reference.beta_star(),
                    };
                    (mode, b)
                }
                None => (BetaMode::Fixed(0.0), 0.0),
            };
            if let BetaMode::Fixed(b) = mode {
                summary.beta_value = Some(b);
            }
            let rounds = match point.rounds.expect("decentralized points carry rounds") {
                RoundsChoice::Count(l) => l,
                RoundsChoice::Required => {
                    let tan0 = reference.angles(&setting.x0)?.tan_k;
                    required_l(
                        locals.max_norm(),
                        reference.lambda_k(),
                        beta_for_rounds,
                        w.gamma(),
                        cfg.eps,
                        tan0,
                        locals.n(),
                        reference.k(),
                    )?
                }
            };
            summary.rounds = Some(rounds);
            let trace = match method {
                Method::Adepm => {
                    let config = DecentralizedConfig::new(mode, rounds, cfg.iterations)
                        .eps(cfg.eps)
                        .extra_column_seed(derive_seed(
                            cfg.seed,
                            &[&cfg.name, "extra", &gap_key(point.lambda_k1)],
                        ));
                    adepm_run(locals, reference, w, &setting.x0, &config)?
                }
                Method::Depm => {
                    depm_run(locals, reference, w, &setting.x0, rounds, cfg.iterations)?
                }
            };
            write_decentralized(&path, &trace)?;
            summary.final_sin = trace.records.last().map_or(f64::NAN, |r| r.max_sin());
            summary.iterations_to_tolerance = trace.first_below(cfg.tolerance);
            (summary.cond_a_violations, summary.cond_b_violations) = trace.violations();
            summary.min_tan = trace
                .records
                .iter()
                .map(|r| r.agent_tan[r.worst_agent()])
                .fold(f64::INFINITY, f64::min);
            summary.max_consensus = Some(trace.max_consensus());
        }
    }
    summary.wall_time_s = started.elapsed().as_secs_f64();
    Ok(summary)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER)?;
    Ok(w)
}

fn flag(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Writes a centralized trace; the last two columns stay blank.
pub fn write_centralized(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in &trace.records {
        w.write_record([
            r.t.to_string(),
            r.sin_theta.to_string(),
            r.cos_theta.to_string(),
            r.tan_theta.to_string(),
            r.beta.to_string(),
            r.noise_norm.to_string(),
            r.noise_uk_norm.to_string(),
            r.noise_uminusk_norm.to_string(),
            flag(r.cond_a).into(),
            flag(r.cond_b).into(),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes a network trace with one row per iteration describing the agent
/// with the largest `sin theta_k`; noise columns hold the effective
/// perturbation of the averaged iteration.
pub fn write_decentralized(path: &Path, trace: &DecentralizedTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in &trace.records {
        let i = r.worst_agent();
        w.write_record([
            r.t.to_string(),
            r.agent_sin[i].to_string(),
            r.agent_cos[i].to_string(),
            r.agent_tan[i].to_string(),
            r.agent_beta[i].to_string(),
            r.noise.total.to_string(),
            r.noise.along.to_string(),
            r.noise.across.to_string(),
            flag(r.cond_a).into(),
            flag(r.cond_b).into(),
            r.consensus_err.to_string(),
            i.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Output directory: the explicit override, else the config's `output`, else
/// `runs/<name>`.
pub fn output_dir(cfg: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep() -> ExperimentConfig {
        ExperimentConfig::parse(
            r#"
name = "unit"
kind = "centralized-sweep"
seed = 3
iterations = 40
beta = [0.0, "optimal", "adaptive"]

[instance]
type = "synthetic"
d = 30
k = 2
lambda_1 = 5.0
lambda_k = 1.0
lambda_k1 = [0.5, 0.8]
lambda_d = 0.2

[noise]
type = "spherical"
xi = [1e-4, 1e-2]
"#,
        )
        .unwrap()
    }

    #[test]
    fn plan_is_the_cartesian_product() {
        let points = plan(&sweep()).unwrap();
        assert_eq!(points.len(), 2 * 2 * 3);
        assert_eq!(points[0].file_name(), "npm_lk1-0.5_xi-1e-4_beta-0.csv");
        let mut names: Vec<String> = points.iter().map(RunPoint::file_name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), points.len());
    }

    #[test]
    fn runs_write_traces_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(&sweep(), dir.path(), Some(2)).unwrap();
        assert_eq!(summary.runs.len(), 12);
        for run in &summary.runs {
            let text = std::fs::read_to_string(dir.path().join(&run.file)).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
            assert_eq!(lines.count(), 40);
        }
        assert!(dir.path().join(SUMMARY_FILE).exists());
    }
}
