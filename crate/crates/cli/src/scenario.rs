//! Scenario files: one JSON document describing topology, demands, solver
//! settings, failures and simulation parameters.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tel_core::experiment::random_demands;
use tel_core::{
    build_simple_topology, BaselineConfig, CapacityPolicy, CostCoefficients, FailureEvent,
    FlowDemand, LearningParams, LinkSpec, NetworkGraph, SimConfig, SolverConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkDefaults {
    pub bandwidth_bps: f64,
    pub delay_ms: f64,
    pub cost: f64,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        Self {
            bandwidth_bps: 4.5e6,
            delay_ms: 1.0,
            cost: 1.0,
        }
    }
}

impl LinkDefaults {
    pub fn spec(&self) -> LinkSpec {
        LinkSpec::new(self.bandwidth_bps, self.delay_ms, self.cost)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDemands {
    pub count: usize,
    /// Falls back to the replica seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub rate_bps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<u64>,
    /// Start times are drawn from `[0, start_window_ms)`; zero starts all flows at once.
    #[serde(default)]
    pub start_window_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Demands {
    Explicit(Vec<FlowDemand>),
    Random(RandomDemands),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub iterations: usize,
    pub seed: u64,
    /// Must match the number of demands when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_paths: Option<usize>,
    pub coefficients: CostCoefficients,
    pub capacity: CapacityPolicy,
    pub learning: LearningParams,
    /// Flow-set id space; the plan count is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_set_capacity: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            iterations: 100,
            seed: 0,
            k_paths: None,
            coefficients: CostCoefficients::default(),
            capacity: CapacityPolicy::default(),
            learning: LearningParams::default(),
            flow_set_capacity: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelect {
    Tel,
    Baseline,
    #[default]
    Both,
}

impl ModeSelect {
    pub fn tel(self) -> bool {
        matches!(self, ModeSelect::Tel | ModeSelect::Both)
    }

    pub fn baseline(self) -> bool {
        matches!(self, ModeSelect::Baseline | ModeSelect::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// `"simple"` or a GraphML path, relative to the scenario file.
    pub topology: String,
    pub link: LinkDefaults,
    pub demands: Demands,
    pub solver: SolverSection,
    pub failures: Vec<FailureEvent>,
    pub sim: SimConfig,
    pub baseline: BaselineConfig,
    pub mode: ModeSelect,
    pub replicas: usize,
    pub output: PathBuf,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            topology: "simple".into(),
            link: LinkDefaults::default(),
            demands: Demands::Explicit(vec![FlowDemand::new("H1", "H2", 1e6)]),
            solver: SolverSection::default(),
            failures: Vec::new(),
            sim: SimConfig::default(),
            baseline: BaselineConfig::default(),
            mode: ModeSelect::Both,
            replicas: 1,
            output: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub out: Option<PathBuf>,
    pub mode: Option<ModeSelect>,
}

impl Scenario {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Reads a scenario, resolving a relative topology path against the
    /// file's directory. `None` yields the defaults.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut sc =
            Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        if sc.topology != "simple" && Path::new(&sc.topology).is_relative() {
            if let Some(dir) = path.parent() {
                sc.topology = dir.join(&sc.topology).to_string_lossy().into_owned();
            }
        }
        Ok(sc)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.solver.seed = seed;
        }
        if let Some(r) = o.replicas {
            self.replicas = r;
        }
        if let Some(out) = &o.out {
            self.output = out.clone();
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.replicas == 0 {
            bail!("replicas must be at least 1");
        }
        if self.solver.iterations == 0 {
            bail!("solver iterations must be at least 1");
        }
        match &self.demands {
            Demands::Explicit(d) if d.is_empty() => bail!("scenario has no demands"),
            Demands::Random(r) if r.count == 0 => bail!("demand count must be at least 1"),
            Demands::Random(r) if !(r.start_window_ms >= 0.0) => {
                bail!("start_window_ms must be non-negative")
            }
            _ => {}
        }
        self.sim.validate()?;
        Ok(())
    }

    pub fn graph(&self) -> anyhow::Result<NetworkGraph> {
        if self.topology == "simple" {
            return Ok(build_simple_topology());
        }
        let text = std::fs::read_to_string(&self.topology)
            .with_context(|| format!("reading topology {}", self.topology))?;
        let spec = self.link.spec();
        let mut g = NetworkGraph::from_graphml(&text, &spec)?;
        g.attach_hosts(&spec)?;
        Ok(g)
    }

    /// Every failure must name an existing link.
    pub fn check_failures(&self, graph: &NetworkGraph) -> anyhow::Result<()> {
        for f in &self.failures {
            let (a, b) = (graph.resolve(&f.link.0)?, graph.resolve(&f.link.1)?);
            graph
                .try_link(a, b)
                .with_context(|| format!("failure at {} ms", f.time_ms))?;
        }
        Ok(())
    }

    pub fn replica_seed(&self, replica: usize) -> u64 {
        self.solver.seed.wrapping_add(replica as u64)
    }

    pub fn demands(&self, graph: &NetworkGraph, replica: usize) -> anyhow::Result<Vec<FlowDemand>> {
        let demands = match &self.demands {
            Demands::Explicit(d) => d.clone(),
            Demands::Random(r) => {
                let seed = r.seed.unwrap_or_else(|| self.replica_seed(replica));
                let mut ds = random_demands(graph, r.count, r.rate_bps, seed)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for d in &mut ds {
                    d.size_bytes = r.size_bytes;
                    if r.start_window_ms > 0.0 {
                        d.start_ms = rng.gen_range(0.0..r.start_window_ms).floor();
                    }
                }
                ds
            }
        };
        for d in &demands {
            d.validate()?;
            graph.resolve(&d.src)?;
            graph.resolve(&d.dst)?;
        }
        Ok(demands)
    }

    pub fn solver_config(&self, demands: usize, replica: usize) -> anyhow::Result<SolverConfig> {
        if let Some(k) = self.solver.k_paths {
            if k != demands {
                bail!("k_paths is {k} but the scenario has {demands} demands");
            }
        }
        let mut cfg =
            SolverConfig::new(self.solver.iterations, demands, self.replica_seed(replica));
        cfg.coefficients = self.solver.coefficients;
        cfg.capacity = self.solver.capacity;
        cfg.learning = self.solver.learning;
        cfg.validate()?;
        Ok(cfg)
    }
}
