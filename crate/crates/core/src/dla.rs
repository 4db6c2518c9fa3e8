//! Path exploration with a network of learning automata.
//!
//! Every node carries an automaton whose actions are its outgoing links.
//! One exploration is a randomized walk from source to destination in which
//! each visited node samples a neighbor by action probability. Walks that
//! improve on (or tie with) the incumbent path are rewarded with the linear
//! reward-inaction update, which steers later walks toward cheap paths.
//!
//! Pruning inside a walk:
//! - an action is used at most once per walk and never re-enters a node that
//!   is already on the walk,
//! - a node left without usable actions is popped and the walk backtracks,
//! - actions over links without spare capacity for the demand are disabled.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rulegen::FlowSetId;
use crate::topology::{CapacityPolicy, LinkIx, NetworkGraph, NodeId, NodeIx};

/// Weights of the per-link cost and of the aggregate delay/cost objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostCoefficients {
    /// Utilization weight.
    pub alpha: f64,
    /// Steering cost weight.
    pub lambda: f64,
    /// Delay weight.
    pub zeta: f64,
    /// Delay weight of the aggregate objective.
    pub beta: f64,
    /// Cost weight of the aggregate objective.
    pub theta: f64,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda: 1.0,
            zeta: 1.0,
            beta: 1.0,
            theta: 1.0,
        }
    }
}

impl CostCoefficients {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("zeta", self.zeta),
            ("beta", self.beta),
            ("theta", self.theta),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "coefficient {name}={v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Reward and penalty step sizes of every automaton.
///
/// Only the reward step is applied; `penalty_b` is carried for configuration
/// compatibility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningParams {
    pub reward_a: f64,
    pub penalty_b: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            reward_a: 0.2,
            penalty_b: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficClass {
    /// Backs off to its fair share (TCP-like).
    Responsive,
    /// Always offers its full rate; the excess is lost (UDP-like).
    #[default]
    NonResponsive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowDemand {
    pub src: NodeId,
    pub dst: NodeId,
    pub rate_bps: f64,
    /// Tolerable end-to-end delay; `None` means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_delay_ms: Option<f64>,
    #[serde(default)]
    pub class: TrafficClass,
    /// Finite transfer size for completion-time measurements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<u64>,
    #[serde(default)]
    pub start_ms: f64,
}

impl FlowDemand {
    pub fn new(src: impl Into<NodeId>, dst: impl Into<NodeId>, rate_bps: f64) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            rate_bps,
            max_delay_ms: None,
            class: TrafficClass::default(),
            size_bytes: None,
            start_ms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.src == self.dst {
            return Err(Error::Config(format!(
                "demand {} -> {} has src == dst",
                self.src, self.dst
            )));
        }
        if !(self.rate_bps.is_finite() && self.rate_bps > 0.0) {
            return Err(Error::Config(format!(
                "demand rate must be positive, got {}",
                self.rate_bps
            )));
        }
        if let Some(t) = self.max_delay_ms {
            if !(t > 0.0) {
                return Err(Error::Config(format!(
                    "demand delay bound must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub iterations: usize,
    pub k_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub coefficients: CostCoefficients,
    #[serde(default)]
    pub capacity: CapacityPolicy,
    #[serde(default)]
    pub learning: LearningParams,
}

impl SolverConfig {
    pub fn new(iterations: usize, k_paths: usize, seed: u64) -> Self {
        Self {
            iterations,
            k_paths,
            seed,
            coefficients: CostCoefficients::default(),
            capacity: CapacityPolicy::default(),
            learning: LearningParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.k_paths == 0 {
            return Err(Error::Config("k_paths must be at least 1".into()));
        }
        self.coefficients.validate()?;
        CapacityPolicy::new(self.capacity.mu())?;
        let l = self.learning;
        if !(0.0..=1.0).contains(&l.reward_a) || !(0.0..=1.0).contains(&l.penalty_b) {
            return Err(Error::Config(
                "reward and penalty parameters must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Generator for the `index`-th demand of a run.
    pub fn demand_rng(&self, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(
            self.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearningAutomaton {
    actions: Vec<NodeIx>,
    links: Vec<LinkIx>,
    probabilities: Vec<f64>,
    enabled: Vec<bool>,
}

impl LearningAutomaton {
    /// Uniform automaton over `(neighbor, link)` actions.
    pub fn new(actions: &[(NodeIx, LinkIx)]) -> Self {
        let n = actions.len();
        Self {
            actions: actions.iter().map(|a| a.0).collect(),
            links: actions.iter().map(|a| a.1).collect(),
            probabilities: vec![1.0 / n as f64; n],
            enabled: vec![true; n],
        }
    }

    /// Automaton with explicit probabilities, for tests and replays.
    pub fn with_probabilities(
        actions: &[(NodeIx, LinkIx)],
        probabilities: Vec<f64>,
    ) -> Result<Self> {
        if probabilities.len() != actions.len() {
            return Err(Error::Consistency(
                "probability vector length differs from action count".into(),
            ));
        }
        let mut la = Self::new(actions);
        la.probabilities = probabilities;
        Ok(la)
    }

    pub fn actions(&self) -> &[NodeIx] {
        &self.actions
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn enabled(&self) -> &[bool] {
        &self.enabled
    }

    pub fn set_enabled(&mut self, action: usize, on: bool) {
        self.enabled[action] = on;
    }

    pub fn action_towards(&self, neighbor: NodeIx) -> Option<usize> {
        self.actions.iter().position(|&n| n == neighbor)
    }

    /// Reward `action`: `p_i += a(1 - p_i)`, `p_j *= 1 - a` for the other
    /// enabled actions. Disabled actions keep their probability, and the
    /// enabled entries are rescaled so the whole vector sums to one.
    pub fn reward(&mut self, action: usize, a: f64) -> Result<()> {
        if action >= self.actions.len() || !self.enabled[action] {
            return Err(Error::Consistency(format!(
                "rewarded action {action} is not an enabled action of this automaton"
            )));
        }
        let mut frozen = 0.0;
        let mut enabled_mass = 0.0;
        for (j, p) in self.probabilities.iter_mut().enumerate() {
            if !self.enabled[j] {
                frozen += *p;
                continue;
            }
            if j == action {
                *p += a * (1.0 - *p);
            } else {
                *p *= 1.0 - a;
            }
            enabled_mass += *p;
        }
        if enabled_mass > 0.0 {
            let scale = (1.0 - frozen) / enabled_mass;
            for (j, p) in self.probabilities.iter_mut().enumerate() {
                if self.enabled[j] {
                    *p *= scale;
                }
            }
        }
        Ok(())
    }

    /// Samples an action among those accepted by `eligible`, weighting by
    /// probability renormalized over the eligible mass. Falls back to a
    /// uniform choice when every eligible probability has decayed to zero.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        mut eligible: impl FnMut(usize) -> bool,
        rng: &mut R,
    ) -> Option<usize> {
        let mut total = 0.0;
        let mut count = 0usize;
        let mut last = None;
        for i in 0..self.actions.len() {
            if eligible(i) {
                total += self.probabilities[i];
                count += 1;
                last = Some(i);
            }
        }
        last?;
        if total <= 0.0 {
            let mut k = rng.gen_range(0..count);
            return (0..self.actions.len()).find(|&i| {
                if !eligible(i) {
                    return false;
                }
                if k == 0 {
                    true
                } else {
                    k -= 1;
                    false
                }
            });
        }
        let mut r = rng.gen::<f64>() * total;
        for i in 0..self.actions.len() {
            if eligible(i) {
                r -= self.probabilities[i];
                if r < 0.0 {
                    return Some(i);
                }
            }
        }
        last
    }
}

/// One automaton per node, mirroring the graph adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct DlaGraph {
    automata: Vec<LearningAutomaton>,
}

impl DlaGraph {
    pub fn automaton(&self, n: NodeIx) -> &LearningAutomaton {
        &self.automata[n.index()]
    }

    pub fn automaton_mut(&mut self, n: NodeIx) -> &mut LearningAutomaton {
        &mut self.automata[n.index()]
    }

    /// Disables every action whose link cannot admit `rate` more bits/s.
    pub fn prune_capacity(&mut self, graph: &NetworkGraph, rate: f64, policy: &CapacityPolicy) {
        for la in &mut self.automata {
            for (i, &l) in la.links.iter().enumerate() {
                let attrs = &graph.link(l).attrs;
                la.enabled[i] = policy.available(attrs) + 1e-9 * attrs.bandwidth_bps >= rate;
            }
        }
    }

    pub fn enable_all(&mut self) {
        for la in &mut self.automata {
            la.enabled.iter_mut().for_each(|e| *e = true);
        }
    }
}

pub fn init_dla(graph: &NetworkGraph) -> Result<DlaGraph> {
    if graph.node_count() == 0 {
        return Err(Error::Validation(
            "cannot build automata for an empty graph".into(),
        ));
    }
    Ok(DlaGraph {
        automata: graph
            .node_indices()
            .map(|n| LearningAutomaton::new(graph.neighbors(n)))
            .collect(),
    })
}

/// Rewards, at every non-terminal node of `path`, the action that leads to
/// the next node.
pub fn reward_path(dla: &mut DlaGraph, path: &PathCandidate, a: f64) -> Result<()> {
    for w in path.nodes.windows(2) {
        let la = dla.automaton_mut(w[0]);
        let action = la.action_towards(w[1]).ok_or_else(|| {
            Error::Consistency(format!(
                "path step {} -> {} is not an action of the automaton",
                w[0].index(),
                w[1].index()
            ))
        })?;
        la.reward(action, a)?;
    }
    Ok(())
}

/// Sum over the path's links of `alpha * utilization + lambda * cost + zeta * delay`.
/// Lower is better.
pub fn evaluate_path(
    graph: &NetworkGraph,
    nodes: &[NodeIx],
    coeffs: &CostCoefficients,
) -> Result<f64> {
    let mut value = 0.0;
    for w in nodes.windows(2) {
        let a = graph.attrs(w[0], w[1])?;
        value += coeffs.alpha * a.utilization() + coeffs.lambda * a.cost + coeffs.zeta * a.delay_ms;
    }
    Ok(value)
}

/// Aggregate objective over a set of paths: `beta * delay + theta * cost`.
pub fn aggregate_objective(
    graph: &NetworkGraph,
    paths: &[&PathCandidate],
    coeffs: &CostCoefficients,
) -> f64 {
    paths
        .iter()
        .flat_map(|p| p.links.iter())
        .map(|&l| {
            let a = &graph.link(l).attrs;
            coeffs.beta * a.delay_ms + coeffs.theta * a.cost
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathCandidate {
    pub nodes: Vec<NodeIx>,
    pub links: Vec<LinkIx>,
    pub value: f64,
}

impl PathCandidate {
    /// Builds a candidate from a node sequence and scores it.
    pub fn from_nodes(
        graph: &NetworkGraph,
        nodes: Vec<NodeIx>,
        coeffs: &CostCoefficients,
    ) -> Result<Self> {
        let value = evaluate_path(graph, &nodes, coeffs)?;
        Self::with_value(graph, nodes, value)
    }

    pub fn with_value(graph: &NetworkGraph, nodes: Vec<NodeIx>, value: f64) -> Result<Self> {
        let links = nodes
            .windows(2)
            .map(|w| graph.try_link(w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nodes,
            links,
            value,
        })
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    /// Number of switch-to-switch links.
    pub fn switch_hops(&self, graph: &NetworkGraph) -> usize {
        self.links
            .iter()
            .filter(|&&l| {
                let link = graph.link(l);
                graph.is_switch(link.src) && graph.is_switch(link.dst)
            })
            .count()
    }

    pub fn delay_ms(&self, graph: &NetworkGraph) -> f64 {
        self.links
            .iter()
            .map(|&l| graph.link(l).attrs.delay_ms)
            .sum()
    }

    pub fn source(&self) -> Option<NodeIx> {
        self.nodes.first().copied()
    }

    pub fn destination(&self) -> Option<NodeIx> {
        self.nodes.last().copied()
    }

    /// Whether the path uses the physical link `a - b` in either direction.
    pub fn uses_edge(&self, a: NodeIx, b: NodeIx) -> bool {
        self.nodes
            .windows(2)
            .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
    }

    pub fn next_hop(&self, n: NodeIx) -> Option<NodeIx> {
        let pos = self.nodes.iter().position(|&x| x == n)?;
        self.nodes.get(pos + 1).copied()
    }

    /// Undirected switch-to-switch edges.
    fn core_edges(&self, graph: &NetworkGraph) -> Vec<(NodeIx, NodeIx)> {
        self.nodes
            .windows(2)
            .filter(|w| graph.is_switch(w[0]) && graph.is_switch(w[1]))
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
            .collect()
    }

    pub fn to_export(&self, graph: &NetworkGraph) -> PathExport {
        PathExport {
            nodes: self.nodes.iter().map(|&n| graph.id(n).clone()).collect(),
            value: self.value,
        }
    }

    pub fn from_export(graph: &NetworkGraph, export: &PathExport) -> Result<Self> {
        let nodes = export
            .nodes
            .iter()
            .map(|id| graph.resolve(id))
            .collect::<Result<Vec<_>>>()?;
        Self::with_value(graph, nodes, export.value)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathPlan {
    pub demand: FlowDemand,
    pub primary: PathCandidate,
    pub backup: Option<PathCandidate>,
    /// Improving candidates, best first.
    pub exploration_log: Vec<PathCandidate>,
    pub flow_set: Option<FlowSetId>,
}

impl PathPlan {
    pub fn to_export(&self, graph: &NetworkGraph) -> PlanExport {
        PlanExport {
            demand: self.demand.clone(),
            primary: self.primary.to_export(graph),
            backup: self.backup.as_ref().map(|b| b.to_export(graph)),
            log_size: self.exploration_log.len(),
            flow_set: self.flow_set,
        }
    }

    /// Rebuilds a plan from its export. The exploration log keeps only the
    /// primary and backup.
    pub fn from_export(graph: &NetworkGraph, export: &PlanExport) -> Result<Self> {
        let primary = PathCandidate::from_export(graph, &export.primary)?;
        let backup = export
            .backup
            .as_ref()
            .map(|b| PathCandidate::from_export(graph, b))
            .transpose()?;
        let mut exploration_log = vec![primary.clone()];
        exploration_log.extend(backup.clone());
        Ok(Self {
            demand: export.demand.clone(),
            primary,
            backup,
            exploration_log,
            flow_set: export.flow_set,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathExport {
    pub nodes: Vec<NodeId>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub demand: FlowDemand,
    pub primary: PathExport,
    pub backup: Option<PathExport>,
    pub log_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_set: Option<FlowSetId>,
}

/// Reusable per-walk bookkeeping.
#[derive(Clone, Debug, Default)]
pub struct WalkScratch {
    traversed: Vec<bool>,
    touched: Vec<LinkIx>,
    on_walk: Vec<bool>,
}

impl WalkScratch {
    pub fn new(graph: &NetworkGraph) -> Self {
        Self {
            traversed: vec![false; graph.link_count()],
            touched: Vec::new(),
            on_walk: vec![false; graph.node_count()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exploration {
    /// Node sequence from source to destination, `None` on a dead end.
    pub path: Option<Vec<NodeIx>>,
    /// Forward moves plus backtracks.
    pub steps: usize,
}

/// One randomized walk from `s` to `d`. Hosts other than `d` are never
/// entered.
pub fn explore_path<R: Rng + ?Sized>(
    dla: &DlaGraph,
    graph: &NetworkGraph,
    s: NodeIx,
    d: NodeIx,
    rng: &mut R,
    scratch: &mut WalkScratch,
) -> Exploration {
    if scratch.traversed.len() != graph.link_count() || scratch.on_walk.len() != graph.node_count()
    {
        *scratch = WalkScratch::new(graph);
    }
    let n = graph.node_count();
    let step_cap = (n * n).max(1);
    let mut walk = vec![s];
    scratch.on_walk[s.index()] = true;
    let mut steps = 0;

    let found = loop {
        let u = *walk.last().expect("walk always holds the source");
        if u == d {
            break true;
        }
        if steps >= step_cap {
            break false;
        }
        let la = dla.automaton(u);
        let (traversed, on_walk) = (&scratch.traversed, &scratch.on_walk);
        let pick = la.sample(
            |i| {
                let v = la.actions[i];
                la.enabled[i]
                    && !traversed[la.links[i].index()]
                    && !on_walk[v.index()]
                    && (v == d || graph.is_switch(v))
            },
            rng,
        );
        steps += 1;
        match pick {
            Some(i) => {
                let (v, l) = (la.actions[i], la.links[i]);
                scratch.traversed[l.index()] = true;
                scratch.touched.push(l);
                scratch.on_walk[v.index()] = true;
                walk.push(v);
            }
            None if walk.len() == 1 => break false,
            None => {
                walk.pop();
                scratch.on_walk[u.index()] = false;
            }
        }
    };

    for l in scratch.touched.drain(..) {
        scratch.traversed[l.index()] = false;
    }
    for &v in &walk {
        scratch.on_walk[v.index()] = false;
    }
    Exploration {
        path: found.then_some(walk),
        steps,
    }
}

/// Picks the backup from best-first candidates: the best candidate sharing no
/// switch-to-switch link with the primary, else the best candidate that
/// differs from it.
pub fn choose_backup(
    graph: &NetworkGraph,
    log: &[PathCandidate],
    primary: &PathCandidate,
) -> Option<PathCandidate> {
    let primary_edges = primary.core_edges(graph);
    let others = || log.iter().filter(|c| c.nodes != primary.nodes);
    others()
        .find(|c| {
            c.core_edges(graph)
                .iter()
                .all(|e| !primary_edges.contains(e))
        })
        .or_else(|| others().next())
        .cloned()
}

/// Reserves `rate` on every directed link of `path`.
pub fn update_bandwidth(graph: &mut NetworkGraph, path: &PathCandidate, rate: f64) -> Result<()> {
    for &l in &path.links {
        let link = graph.link(l);
        let tolerance = 1e-9 * link.attrs.bandwidth_bps;
        if link.attrs.residual_bps + tolerance < rate {
            return Err(Error::ResidualUnderflow {
                src: graph.id(link.src).to_string(),
                dst: graph.id(link.dst).to_string(),
                residual: link.attrs.residual_bps,
                rate,
            });
        }
    }
    for &l in &path.links {
        let attrs = graph.attrs_mut(l);
        attrs.residual_bps = (attrs.residual_bps - rate).max(0.0);
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandStats {
    pub iterations: usize,
    pub dead_ends: usize,
    pub delay_rejections: usize,
    pub walk_steps: usize,
    /// Incumbent value after every accepted candidate, in order.
    pub accepted_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DemandOutcome {
    Planned(PathPlan),
    Infeasible { demand: FlowDemand, reason: String },
}

impl DemandOutcome {
    pub fn plan(&self) -> Option<&PathPlan> {
        match self {
            DemandOutcome::Planned(p) => Some(p),
            DemandOutcome::Infeasible { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub outcomes: Vec<DemandOutcome>,
    pub stats: Vec<DemandStats>,
}

impl Solution {
    pub fn plans(&self) -> impl Iterator<Item = &PathPlan> {
        self.outcomes.iter().filter_map(DemandOutcome::plan)
    }

    pub fn into_plans(self) -> Vec<PathPlan> {
        self.outcomes
            .into_iter()
            .filter_map(|o| match o {
                DemandOutcome::Planned(p) => Some(p),
                DemandOutcome::Infeasible { .. } => None,
            })
            .collect()
    }

    pub fn infeasible_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.plan().is_none()).count()
    }
}

/// Runs the exploration loop for one demand against the current residuals.
/// The graph is not modified.
pub fn solve_demand<R: Rng + ?Sized>(
    graph: &NetworkGraph,
    demand: &FlowDemand,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<(DemandOutcome, DemandStats)> {
    demand.validate()?;
    let s = graph.resolve(&demand.src)?;
    let d = graph.resolve(&demand.dst)?;
    let mut dla = init_dla(graph)?;
    dla.prune_capacity(graph, demand.rate_bps, &cfg.capacity);
    let mut scratch = WalkScratch::new(graph);
    let mut stats = DemandStats::default();
    let mut best = f64::INFINITY;
    let mut log: Vec<PathCandidate> = Vec::new();
    let mut explored: Vec<PathCandidate> = Vec::new();
    let mut seen: HashSet<Vec<NodeIx>> = HashSet::new();

    for _ in 0..cfg.iterations {
        stats.iterations += 1;
        let walk = explore_path(&dla, graph, s, d, rng, &mut scratch);
        stats.walk_steps += walk.steps;
        let Some(nodes) = walk.path else {
            stats.dead_ends += 1;
            continue;
        };
        let cand = PathCandidate::from_nodes(graph, nodes, &cfg.coefficients)?;
        if let Some(bound) = demand.max_delay_ms {
            if cand.delay_ms(graph) > bound {
                stats.delay_rejections += 1;
                continue;
            }
        }
        if seen.insert(cand.nodes.clone()) {
            explored.push(cand.clone());
        }
        let same_as_incumbent = log.first().is_some_and(|b| b.nodes == cand.nodes);
        if cand.value <= best && !same_as_incumbent {
            reward_path(&mut dla, &cand, cfg.learning.reward_a)?;
            best = cand.value;
            stats.accepted_values.push(best);
            log.retain(|c| c.nodes != cand.nodes);
            log.insert(0, cand);
        }
    }

    let Some(primary) = log.first().cloned() else {
        let reason = if stats.delay_rejections > 0 {
            "no candidate met the delay bound"
        } else {
            "no path with enough spare capacity"
        };
        return Ok((
            DemandOutcome::Infeasible {
                demand: demand.clone(),
                reason: reason.into(),
            },
            stats,
        ));
    };
    explored.sort_by(|a, b| a.value.total_cmp(&b.value));
    let backup = choose_backup(graph, &explored, &primary);
    Ok((
        DemandOutcome::Planned(PathPlan {
            demand: demand.clone(),
            primary,
            backup,
            exploration_log: log,
            flow_set: None,
        }),
        stats,
    ))
}

/// Solves demands in input order, reserving each primary's rate before the
/// next demand is explored.
pub fn select_paths(
    graph: &mut NetworkGraph,
    demands: &[FlowDemand],
    cfg: &SolverConfig,
) -> Result<Solution> {
    cfg.validate()?;
    if demands.len() != cfg.k_paths {
        return Err(Error::Config(format!(
            "k_paths is {} but {} demands were given",
            cfg.k_paths,
            demands.len()
        )));
    }
    let mut outcomes = Vec::with_capacity(demands.len());
    let mut stats = Vec::with_capacity(demands.len());
    for (i, demand) in demands.iter().enumerate() {
        let mut rng = cfg.demand_rng(i);
        let (outcome, st) = solve_demand(graph, demand, cfg, &mut rng)?;
        if let DemandOutcome::Planned(plan) = &outcome {
            update_bandwidth(graph, &plan.primary, demand.rate_bps)?;
        } else {
            log::warn!("demand {} -> {} is infeasible", demand.src, demand.dst);
        }
        outcomes.push(outcome);
        stats.push(st);
    }
    Ok(Solution { outcomes, stats })
}
