//! Experiment configuration files.
//!
//! Configs are TOML: `key = value` lines grouped under `[section]` headers.
//! Unknown keys are rejected. Any numeric field marked as a sweep axis takes
//! either a single value or a list.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CentralizedSweep,
    Tightness,
    Decentralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitSpec {
    #[default]
    Random,
    /// Tilted frame with `tan theta_0 = 2 eps`.
    Tilted,
}

/// A value or a list of values.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// `lambda_1` (k-1 times), `lambda_k`, `lambda_{k+1}`, `lambda_d`, random basis.
    Synthetic {
        d: usize,
        k: usize,
        lambda_1: f64,
        lambda_k: f64,
        /// Sweep axis.
        lambda_k1: OneOrMany<f64>,
        lambda_d: f64,
    },
    /// Worst-case diagonal instance.
    Diag {
        d: usize,
        k: usize,
        lambda_k: f64,
        beta: f64,
    },
    /// Shifted normalized adjacency of a planted-partition graph whose
    /// nodes are the agents.
    Laplacian {
        k: usize,
        nodes: usize,
        clusters: usize,
        p_in: f64,
        p_out: f64,
    },
}

impl InstanceSpec {
    pub fn k(&self) -> usize {
        match *self {
            InstanceSpec::Synthetic { k, .. }
            | InstanceSpec::Diag { k, .. }
            | InstanceSpec::Laplacian { k, .. } => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    SampledAdversarial {
        xi: OneOrMany<f64>,
    },
    Spherical {
        xi: OneOrMany<f64>,
    },
    /// Sampled adversarial direction scaled to satisfy both conditions.
    Bounded,
    Drift,
    Rotation,
}

impl NoiseSpec {
    pub fn xi_values(&self) -> Vec<Option<f64>> {
        match self {
            NoiseSpec::SampledAdversarial { xi } | NoiseSpec::Spherical { xi } => {
                xi.values().into_iter().map(Some).collect()
            }
            _ => vec![None],
        }
    }
}

/// Momentum choice: a number, `"optimal"`, `"optimal/N"` or `"adaptive"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Value(f64),
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaChoice {
    Fixed(f64),
    /// `lambda_{k+1}^2 / 4` divided by the given factor.
    Optimal(f64),
    Adaptive,
}

impl BetaChoice {
    pub fn label(&self) -> String {
        match *self {
            BetaChoice::Fixed(b) => format!("{b}"),
            BetaChoice::Optimal(1.0) => "optimal".into(),
            BetaChoice::Optimal(f) => format!("optimal-over-{f}"),
            BetaChoice::Adaptive => "adaptive".into(),
        }
    }
}

impl BetaSpec {
    pub fn resolve(&self) -> Result<BetaChoice> {
        match self {
            BetaSpec::Value(b) if *b >= 0.0 && b.is_finite() => Ok(BetaChoice::Fixed(*b)),
            BetaSpec::Value(b) => Err(Error::Config(format!(
                "momentum {b} must be finite and >= 0"
            ))),
            BetaSpec::Named(s) => {
                let s = s.trim();
                if s == "adaptive" {
                    return Ok(BetaChoice::Adaptive);
                }
                if s == "optimal" {
                    return Ok(BetaChoice::Optimal(1.0));
                }
                if let Some(rest) = s.strip_prefix("optimal/") {
                    let f: f64 = rest
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad momentum divisor in {s:?}")))?;
                    if f > 0.0 && f.is_finite() {
                        return Ok(BetaChoice::Optimal(f));
                    }
                }
                Err(Error::Config(format!(
                    "unknown momentum {s:?}; expected a number, \"optimal\", \"optimal/N\" or \"adaptive\""
                )))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Ring,
    Complete,
    Path,
    /// Erdos-Renyi with `edge_prob`, retried until connected.
    Random,
    EdgeList,
    /// Data graph of a laplacian instance plus `ceil(n ln n)` random edges.
    Communication,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weights {
    Ring,
    Metropolis,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Adepm,
    Depm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Adepm => "adepm",
            Method::Depm => "depm",
        }
    }
}

/// Gossip rounds: a count or `"required"` for the theoretical requirement.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RoundsSpec {
    Count(usize),
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundsChoice {
    Count(usize),
    Required,
}

impl RoundsSpec {
    pub fn resolve(&self) -> Result<RoundsChoice> {
        match self {
            RoundsSpec::Count(0) => Err(Error::Config("gossip rounds must be >= 1".into())),
            RoundsSpec::Count(l) => Ok(RoundsChoice::Count(*l)),
            RoundsSpec::Named(s) if s.trim() == "required" => Ok(RoundsChoice::Required),
            RoundsSpec::Named(s) => Err(Error::Config(format!(
                "unknown rounds {s:?}; expected a count or \"required\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LocalsSpec {
    /// `A + E_i` with zero-sum symmetric Gaussian `E_i`.
    Perturbed { spread: f64 },
    /// Empirical covariances of `samples` Gaussian rows split evenly.
    Covariance { samples: usize },
    /// Row/column pieces of the laplacian instance.
    Laplacian,
    /// One dense text matrix per file.
    Directory { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub agents: usize,
    pub topology: Topology,
    pub edge_prob: Option<f64>,
    pub edge_list: Option<PathBuf>,
    pub weights: Option<Weights>,
    pub rounds: OneOrMany<RoundsSpec>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub locals: LocalsSpec,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Adepm]
}

fn default_tolerance() -> f64 {
    1e-3
}

fn default_eps() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub iterations: usize,
    /// Threshold on `sin theta_k` for the iterations-to-tolerance summary.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Target precision for condition flags, tilted init and gossip rounds.
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub init: InitSpec,
    pub output: Option<PathBuf>,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub beta: Vec<BetaSpec>,
    pub network: Option<NetworkSpec>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text).map_err(|e| e.in_stage(format!("config {}", path.display())))
    }

    /// Resolved momentum list; empty lists are an error except for
    /// tightness runs, which use the instance's own momentum.
    pub fn beta_choices(&self) -> Result<Vec<BetaChoice>> {
        self.beta.iter().map(BetaSpec::resolve).collect()
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!(
                "experiment name {:?} must be a nonempty file-name component",
                self.name
            ));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be > 0, got {}", self.tolerance));
        }
        let betas = self.beta_choices()?;
        match self.kind {
            ExperimentKind::Tightness => {
                if !matches!(self.instance, InstanceSpec::Diag { .. }) {
                    return bad("tightness runs need a diag instance".into());
                }
                if !matches!(
                    self.noise,
                    NoiseSpec::Drift | NoiseSpec::Rotation | NoiseSpec::None
                ) {
                    return bad("tightness runs use drift, rotation or no noise".into());
                }
                if !betas.is_empty() {
                    return bad(
                        "tightness runs take their momentum from the instance; drop the beta list"
                            .into(),
                    );
                }
            }
            ExperimentKind::CentralizedSweep | ExperimentKind::Decentralized => {
                if betas.is_empty() {
                    return bad("the beta list is empty".into());
                }
            }
        }
        match &self.instance {
            InstanceSpec::Synthetic {
                d,
                k,
                lambda_1,
                lambda_k,
                lambda_k1,
                lambda_d,
            } => {
                if *k == 0 || d <= k {
                    return bad(format!(
                        "synthetic instance needs 1 <= k < d, got d = {d}, k = {k}"
                    ));
                }
                let gaps = lambda_k1.values();
                if gaps.is_empty() {
                    return bad("lambda_k1 list is empty".into());
                }
                for l in gaps {
                    if !(lambda_1 >= lambda_k
                        && *lambda_k > l
                        && l >= *lambda_d
                        && *lambda_d >= 0.0)
                    {
                        return Err(Error::SpectrumOrderViolation(format!(
                            "need lambda_1 >= lambda_k > lambda_k1 >= lambda_d >= 0, got \
                             {lambda_1}, {lambda_k}, {l}, {lambda_d}"
                        )));
                    }
                }
            }
            InstanceSpec::Diag {
                d,
                k,
                lambda_k,
                beta,
            } => {
                if *k == 0 || d <= k {
                    return bad(format!(
                        "diag instance needs 1 <= k < d, got d = {d}, k = {k}"
                    ));
                }
                if !(*beta > 0.0 && *lambda_k > 2.0 * beta.sqrt()) {
                    return Err(Error::InvalidGap {
                        lambda_k: *lambda_k,
                        threshold: 2.0 * beta.sqrt(),
                    });
                }
            }
            InstanceSpec::Laplacian {
                k,
                nodes,
                clusters,
                p_in,
                p_out,
            } => {
                if *k == 0 || nodes <= k || *clusters == 0 || clusters > nodes {
                    return bad(format!(
                        "laplacian instance needs 1 <= k < nodes and 1 <= clusters <= nodes, \
                         got k = {k}, nodes = {nodes}, clusters = {clusters}"
                    ));
                }
                for p in [p_in, p_out] {
                    if !(0.0..=1.0).contains(p) {
                        return bad(format!("edge probability {p} outside [0, 1]"));
                    }
                }
                if self.kind != ExperimentKind::Decentralized {
                    return bad("laplacian instances are only used by decentralized runs".into());
                }
            }
        }
        if let NoiseSpec::SampledAdversarial { xi } | NoiseSpec::Spherical { xi } = &self.noise {
            let xs = xi.values();
            if xs.is_empty() || xs.iter().any(|x| !(*x >= 0.0)) {
                return bad("noise norms must be a nonempty list of values >= 0".into());
            }
        }
        if matches!(self.noise, NoiseSpec::Drift | NoiseSpec::Rotation)
            && !matches!(self.instance, InstanceSpec::Diag { .. })
        {
            return bad("drift and rotation noise need a diag instance".into());
        }
        match (self.kind, &self.network) {
            (ExperimentKind::Decentralized, None) => {
                return bad("decentralized runs need a [network] section".into())
            }
            (ExperimentKind::Decentralized, Some(net)) => self.check_network(net)?,
            (_, Some(_)) => return bad("[network] is only used by decentralized runs".into()),
            (_, None) => {}
        }
        Ok(())
    }

    fn check_network(&self, net: &NetworkSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !matches!(self.noise, NoiseSpec::None) {
            return bad("decentralized runs are noiseless apart from gossip error".into());
        }
        if net.methods.is_empty() {
            return bad("network methods list is empty".into());
        }
        let rounds = net.rounds.values();
        if rounds.is_empty() {
            return bad("network rounds list is empty".into());
        }
        for r in &rounds {
            r.resolve()?;
        }
        let laplacian = matches!(self.instance, InstanceSpec::Laplacian { .. });
        match (&net.locals, laplacian) {
            (LocalsSpec::Laplacian, true) => {
                if net.topology != Topology::Communication {
                    return bad("laplacian locals use the communication topology".into());
                }
            }
            (LocalsSpec::Laplacian, false) => {
                return bad("laplacian locals need a laplacian instance".into())
            }
            (_, true) => return bad("a laplacian instance needs laplacian locals".into()),
            (LocalsSpec::Perturbed { spread }, false) if !(*spread >= 0.0) => {
                return bad(format!("spread must be >= 0, got {spread}"))
            }
            (LocalsSpec::Covariance { samples }, false) if *samples < net.agents.max(1) => {
                return bad(format!(
                    "{samples} samples cannot cover {} agents",
                    net.agents
                ))
            }
            _ => {}
        }
        if net.topology == Topology::Communication && !laplacian {
            return bad("the communication topology needs a laplacian instance".into());
        }
        if !laplacian && net.topology != Topology::EdgeList && net.agents == 0 {
            return bad("network agents must be >= 1".into());
        }
        match net.topology {
            Topology::Ring if net.agents < 3 => return bad("a ring needs at least 3 agents".into()),
            Topology::Random => match net.edge_prob {
                Some(p) if p > 0.0 && p <= 1.0 => {}
                _ => return bad("random topology needs edge_prob in (0, 1]".into()),
            },
            Topology::EdgeList if net.edge_list.is_none() => {
                return bad("edge-list topology needs an edge_list path".into())
            }
            _ => {}
        }
        if net.weights == Some(Weights::Ring) && net.topology != Topology::Ring {
            return bad("ring weights need the ring topology".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"
name = "momentum"
kind = "centralized-sweep"
seed = 7
iterations = 100
beta = [0.0, "optimal/4", "optimal", "adaptive"]

[instance]
type = "synthetic"
d = 50
k = 3
lambda_1 = 5.0
lambda_k = 1.0
lambda_k1 = [0.9, 0.99]
lambda_d = 0.5

[noise]
type = "sampled-adversarial"
xi = 1e-3
"#;

    #[test]
    fn parses_a_sweep() {
        let cfg = ExperimentConfig::parse(SWEEP).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::CentralizedSweep);
        assert_eq!(
            cfg.beta_choices().unwrap(),
            vec![
                BetaChoice::Fixed(0.0),
                BetaChoice::Optimal(4.0),
                BetaChoice::Optimal(1.0),
                BetaChoice::Adaptive
            ]
        );
        assert_eq!(cfg.noise.xi_values(), vec![Some(1e-3)]);
    }

    #[test]
    fn rejects_unknown_keys_and_empty_beta() {
        let extra = SWEEP.replace("seed = 7", "seed = 7\ncolour = \"red\"");
        assert!(matches!(
            ExperimentConfig::parse(&extra),
            Err(Error::Config(_))
        ));
        let empty = SWEEP.replace(
            r#"beta = [0.0, "optimal/4", "optimal", "adaptive"]"#,
            "beta = []",
        );
        assert!(matches!(
            ExperimentConfig::parse(&empty),
            Err(Error::Config(_))
        ));
        let unknown = SWEEP.replace(r#""adaptive""#, r#""fastest""#);
        assert!(ExperimentConfig::parse(&unknown).is_err());
    }

    #[test]
    fn rejects_bad_spectrum() {
        let bad = SWEEP.replace("lambda_k1 = [0.9, 0.99]", "lambda_k1 = [0.9, 1.0]");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(Error::SpectrumOrderViolation(_))
        ));
    }

    #[test]
    fn decentralized_requires_network() {
        let text = r#"
name = "net"
kind = "decentralized"
iterations = 10
beta = ["optimal"]

[instance]
type = "synthetic"
d = 20
k = 2
lambda_1 = 5.0
lambda_k = 1.0
lambda_k1 = 0.9
lambda_d = 0.5
"#;
        assert!(ExperimentConfig::parse(text).is_err());
        let with_net = format!(
            "{text}\n[network]\nagents = 4\ntopology = \"ring\"\nrounds = [5, \"required\"]\n\n[network.locals]\ntype = \"perturbed\"\nspread = 0.5\n"
        );
        let cfg = ExperimentConfig::parse(&with_net).unwrap();
        let net = cfg.network.unwrap();
        assert_eq!(net.methods, vec![Method::Adepm]);
        assert_eq!(net.rounds.values().len(), 2);
    }
}
