use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use tel_core::constraints::validate_plans;
use tel_core::experiment::{hop_comparison, HopStats};
use tel_core::rulegen::{memory_cost, rule_records};
use tel_core::{
    assign_flow_set_ids, compile_rules, run_flow_sim, select_paths, DemandOutcome, FailureScenario,
    FlowDemand, LinkSpec, Mode, NetworkGraph, PathPlan, PlanExport, SimMetrics, SolverConfig,
    ViolationReport,
};

use crate::output::{write_atomic, write_json};
use crate::scenario::Scenario;

/// How a command finished when it did not error out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Infeasible,
    Violation,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Infeasible => 2,
            Status::Violation => 3,
        }
    }

    fn worst(self, other: Status) -> Status {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

/// A failure raised while simulating, reported with its own exit code.
#[derive(Debug)]
pub struct SimulationError(pub tel_core::Error);

impl std::fmt::Display for SimulationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "simulation failed: {}", self.0)
    }
}

impl std::error::Error for SimulationError {}

struct Solved {
    graph: NetworkGraph,
    demands: Vec<FlowDemand>,
    plans: Vec<PathPlan>,
    infeasible: Vec<(FlowDemand, String)>,
}

fn solve(sc: &Scenario, replica: usize) -> anyhow::Result<Solved> {
    let graph = sc.graph()?;
    sc.check_failures(&graph)?;
    let demands = sc.demands(&graph, replica)?;
    let cfg: SolverConfig = sc.solver_config(demands.len(), replica)?;
    let mut work = graph.clone();
    let solution = select_paths(&mut work, &demands, &cfg)?;
    let mut infeasible = Vec::new();
    let mut plans = Vec::new();
    for outcome in solution.outcomes {
        match outcome {
            DemandOutcome::Planned(p) => plans.push(p),
            DemandOutcome::Infeasible { demand, reason } => {
                log::warn!(
                    "replica {replica}: {} -> {} infeasible: {reason}",
                    demand.src,
                    demand.dst
                );
                infeasible.push((demand, reason));
            }
        }
    }
    if !plans.is_empty() {
        assign_flow_set_ids(&mut plans, sc.solver.flow_set_capacity)?;
    }
    Ok(Solved {
        graph,
        demands,
        plans,
        infeasible,
    })
}

fn feasibility(s: &Solved) -> Status {
    if s.infeasible.is_empty() {
        Status::Ok
    } else {
        Status::Infeasible
    }
}

fn check(s: &Solved, sc: &Scenario) -> (ViolationReport, Status) {
    let report = validate_plans(&s.graph, &s.plans, &sc.solver.capacity);
    let status = if report.is_clean() {
        Status::Ok
    } else {
        Status::Violation
    };
    (report, status)
}

pub fn cmd_solve(sc: &Scenario) -> anyhow::Result<Status> {
    let s = solve(sc, 0)?;
    let exports: Vec<PlanExport> = s.plans.iter().map(|p| p.to_export(&s.graph)).collect();
    write_json(&sc.output.join("plans.json"), &exports)?;
    println!(
        "{} plans, {} infeasible, written to {}",
        s.plans.len(),
        s.infeasible.len(),
        sc.output.display()
    );
    Ok(feasibility(&s).worst(check(&s, sc).1))
}

pub fn cmd_validate(sc: &Scenario) -> anyhow::Result<Status> {
    let s = solve(sc, 0)?;
    let (report, status) = check(&s, sc);
    write_json(&sc.output.join("violations.json"), &report)?;
    println!(
        "{} plans checked, {} violations",
        s.plans.len(),
        report.total()
    );
    Ok(feasibility(&s).worst(status))
}

pub fn cmd_rules(sc: &Scenario) -> anyhow::Result<Status> {
    let s = solve(sc, 0)?;
    let rules = compile_rules(&s.graph, &s.plans)?;
    let mut jsonl = String::new();
    for r in rule_records(&rules) {
        jsonl.push_str(&serde_json::to_string(&r)?);
        jsonl.push('\n');
    }
    write_atomic(&sc.output.join("rules.jsonl"), jsonl.as_bytes())?;
    let failures: Vec<FailureScenario> = sc
        .failures
        .iter()
        .map(|f| FailureScenario::single(f.link.0.clone(), f.link.1.clone()))
        .collect();
    let memory = memory_cost(&s.graph, &s.plans, &failures)?;
    write_atomic(&sc.output.join("memory.csv"), memory.to_csv().as_bytes())?;
    println!(
        "{} rules on {} switches, flow_set width {} bits",
        jsonl.lines().count(),
        rules.len(),
        memory.width_bits
    );
    Ok(feasibility(&s))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mean_throughput_bps: f64,
    pub delivered_bytes: f64,
    pub lost_bytes: f64,
    pub completed_flows: f64,
    pub disconnected_flows: f64,
    pub fct_mean_ms: Option<f64>,
    pub fct_p50_ms: Option<f64>,
    pub fct_p90_ms: Option<f64>,
    pub reroute_computations: f64,
}

fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

impl ModeSummary {
    fn of(m: &SimMetrics) -> Self {
        let mut fcts = m.fcts();
        fcts.sort_by(f64::total_cmp);
        Self {
            mean_throughput_bps: m.mean_throughput_bps(),
            delivered_bytes: m.total_delivered_bytes(),
            lost_bytes: m.flows.iter().map(|f| f.lost_bytes).sum(),
            completed_flows: fcts.len() as f64,
            disconnected_flows: m.flows.iter().filter(|f| f.disconnected).count() as f64,
            fct_mean_ms: (!fcts.is_empty()).then(|| fcts.iter().sum::<f64>() / fcts.len() as f64),
            fct_p50_ms: quantile(&fcts, 0.5),
            fct_p90_ms: quantile(&fcts, 0.9),
            reroute_computations: m.reroute_computations as f64,
        }
    }

    fn mean(items: &[&ModeSummary]) -> Self {
        let n = items.len() as f64;
        let avg = |f: fn(&ModeSummary) -> f64| items.iter().map(|s| f(s)).sum::<f64>() / n;
        let avg_opt = |f: fn(&ModeSummary) -> Option<f64>| {
            let v: Vec<f64> = items.iter().filter_map(|s| f(s)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Self {
            mean_throughput_bps: avg(|s| s.mean_throughput_bps),
            delivered_bytes: avg(|s| s.delivered_bytes),
            lost_bytes: avg(|s| s.lost_bytes),
            completed_flows: avg(|s| s.completed_flows),
            disconnected_flows: avg(|s| s.disconnected_flows),
            fct_mean_ms: avg_opt(|s| s.fct_mean_ms),
            fct_p50_ms: avg_opt(|s| s.fct_p50_ms),
            fct_p90_ms: avg_opt(|s| s.fct_p90_ms),
            reroute_computations: avg(|s| s.reroute_computations),
        }
    }
}

#[derive(Debug, Serialize)]
struct ReplicaSummary {
    replica: usize,
    seed: u64,
    infeasible: usize,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    modes: BTreeMap<&'static str, ModeSummary>,
}

#[derive(Debug, Serialize)]
struct Summary {
    replicas: usize,
    base_seed: u64,
    modes: BTreeMap<&'static str, ModeSummary>,
    per_replica: Vec<ReplicaSummary>,
}

struct ReplicaRun {
    replica: usize,
    seed: u64,
    status: Status,
    infeasible: usize,
    metrics: Vec<(&'static str, SimMetrics)>,
}

fn simulate_replica(sc: &Scenario, replica: usize) -> anyhow::Result<ReplicaRun> {
    let s = solve(sc, replica)?;
    let mut modes = Vec::new();
    if sc.mode.tel() {
        modes.push(("tel", Mode::Tel));
    }
    if sc.mode.baseline() {
        modes.push(("baseline", Mode::Baseline(sc.baseline)));
    }
    let mut metrics = Vec::new();
    for (name, mode) in modes {
        let m = run_flow_sim(&s.graph, &s.plans, &s.demands, &sc.failures, mode, sc.sim)
            .map_err(SimulationError)?;
        for w in &m.warnings {
            log::warn!("replica {replica} {name}: {w}");
        }
        metrics.push((name, m));
    }
    Ok(ReplicaRun {
        replica,
        seed: sc.replica_seed(replica),
        status: feasibility(&s).worst(check(&s, sc).1),
        infeasible: s.infeasible.len(),
        metrics,
    })
}

pub fn cmd_simulate(sc: &Scenario) -> anyhow::Result<Status> {
    let mut runs = (0..sc.replicas)
        .into_par_iter()
        .map(|r| simulate_replica(sc, r))
        .collect::<anyhow::Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.replica);

    let mut throughput = String::from("mode,replica,time_ms,flow_id,bps\n");
    let mut fct = String::from("mode,replica,flow_id,fct_ms\n");
    let mut per_replica = Vec::new();
    let mut status = Status::Ok;
    for run in &runs {
        status = status.worst(run.status);
        let mut modes = BTreeMap::new();
        for (name, m) in &run.metrics {
            for p in &m.series {
                writeln!(
                    throughput,
                    "{name},{},{},{},{}",
                    run.replica, p.time_ms, p.flow, p.bps
                )?;
            }
            for f in &m.flows {
                if let Some(t) = f.fct_ms {
                    writeln!(fct, "{name},{},{},{t}", run.replica, f.id)?;
                }
            }
            modes.insert(*name, ModeSummary::of(m));
        }
        per_replica.push(ReplicaSummary {
            replica: run.replica,
            seed: run.seed,
            infeasible: run.infeasible,
            modes,
        });
    }
    let mut modes = BTreeMap::new();
    for name in ["tel", "baseline"] {
        let items: Vec<&ModeSummary> = per_replica
            .iter()
            .filter_map(|r| r.modes.get(name))
            .collect();
        if !items.is_empty() {
            modes.insert(name, ModeSummary::mean(&items));
        }
    }
    let summary = Summary {
        replicas: sc.replicas,
        base_seed: sc.solver.seed,
        modes,
        per_replica,
    };
    write_atomic(&sc.output.join("throughput.csv"), throughput.as_bytes())?;
    write_atomic(&sc.output.join("fct.csv"), fct.as_bytes())?;
    write_json(&sc.output.join("summary.json"), &summary)?;
    for (name, m) in &summary.modes {
        println!(
            "{name}: mean throughput {:.0} bps, delivered {:.0} bytes over {} replica(s)",
            m.mean_throughput_bps, m.delivered_bytes, sc.replicas
        );
    }
    Ok(status)
}

#[derive(Clone, Debug)]
pub struct HopsArgs {
    pub topology_dir: PathBuf,
    pub min_links: usize,
    pub max_links: usize,
    pub max_pairs: usize,
}

fn graphml_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "graphml"))
        .collect();
    files.sort();
    Ok(files)
}

fn hop_row(
    path: &Path,
    spec: &LinkSpec,
    cfg: &SolverConfig,
    args: &HopsArgs,
) -> Result<Option<HopStats>, String> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut g = NetworkGraph::from_graphml(&text, spec).map_err(|e| e.to_string())?;
    let links = g.undirected_link_count();
    if links < args.min_links || links > args.max_links {
        return Ok(None);
    }
    g.attach_hosts(spec).map_err(|e| e.to_string())?;
    hop_comparison(&name, &g, cfg, args.max_pairs, cfg.seed)
        .map(Some)
        .map_err(|e| e.to_string())
}

pub fn cmd_hops(sc: &Scenario, args: &HopsArgs) -> anyhow::Result<Status> {
    let files = graphml_files(&args.topology_dir)?;
    let spec = sc.link.spec();
    let mut cfg = SolverConfig::new(sc.solver.iterations, 1, sc.solver.seed);
    cfg.coefficients = sc.solver.coefficients;
    cfg.capacity = sc.solver.capacity;
    cfg.learning = sc.solver.learning;
    let results: Vec<_> = files
        .par_iter()
        .map(|p| (p, hop_row(p, &spec, &cfg, args)))
        .collect();

    let mut csv = format!("{}\n", HopStats::csv_header());
    let mut skipped = String::from("topology,reason\n");
    let mut rows = 0;
    for (path, res) in results {
        match res {
            Ok(Some(stats)) => {
                csv.push_str(&stats.csv_row());
                csv.push('\n');
                rows += 1;
            }
            Ok(None) => {}
            Err(reason) => {
                log::warn!("skipping {}: {reason}", path.display());
                writeln!(
                    skipped,
                    "{},\"{}\"",
                    path.display(),
                    reason.replace('"', "'")
                )?;
            }
        }
    }
    write_atomic(&sc.output.join("hops.csv"), csv.as_bytes())?;
    write_atomic(&sc.output.join("hops_skipped.csv"), skipped.as_bytes())?;
    println!(
        "{rows} topologies compared, written to {}",
        sc.output.display()
    );
    Ok(Status::Ok)
}
