//! Behavioral data plane and fluid flow-level simulator.
//!
//! Switches forward by looking up compiled `table_1`/`table_2` entries and
//! their status register. Flow rates are the max-min fair allocation of
//! link capacity over the routes currently resolved hop by hop. Time
//! advances in segments bounded by ticks, report intervals, scheduled
//! events and flow completions, so within a segment every rate is constant
//! and completion times are exact.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::baseline::{shortest_path_avoiding, BaselineConfig, FailedLinks};
use crate::dla::{FlowDemand, PathPlan, TrafficClass};
use crate::error::{Error, Result};
use crate::rulegen::{
    apply_failure_to_rules, assign_flow_set_ids, compile_rules, node_address, MacAddr,
    SwitchRuleSet,
};
use crate::topology::{LinkIx, NetworkGraph, NodeId, NodeIx};

const EPS_MS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub duration_ms: f64,
    pub tick_ms: f64,
    pub series_interval_ms: f64,
    pub probe_interval_ms: f64,
    /// Detection delay of failure events that do not set their own.
    pub detection_delay_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration_ms: 10_000.0,
            tick_ms: 10.0,
            series_interval_ms: 100.0,
            probe_interval_ms: 1000.0,
            detection_delay_ms: 50.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("duration_ms", self.duration_ms),
            ("tick_ms", self.tick_ms),
            ("series_interval_ms", self.series_interval_ms),
            ("probe_interval_ms", self.probe_interval_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.detection_delay_ms >= 0.0) {
            return Err(Error::Config(
                "detection_delay_ms must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub link: (NodeId, NodeId),
    pub time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_delay_ms: Option<f64>,
}

impl FailureEvent {
    pub fn new(a: impl Into<NodeId>, b: impl Into<NodeId>, time_ms: f64) -> Self {
        Self {
            link: (a.into(), b.into()),
            time_ms,
            detection_delay_ms: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// Pre-installed backups activated by a local register flip.
    Tel,
    /// Shortest paths recomputed after detection plus control-plane delay.
    Baseline(BaselineConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Forward {
        egress_port: u16,
        next_hop_mac: MacAddr,
    },
    Drop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchState {
    pub ruleset: SwitchRuleSet,
    /// Bytes sent per egress port since the last probe.
    pub egress_bytes: Vec<f64>,
    pub last_probe_ms: Vec<Option<f64>>,
}

impl SwitchState {
    pub fn new(ruleset: SwitchRuleSet, ports: usize) -> Self {
        Self {
            ruleset,
            egress_bytes: vec![0.0; ports],
            last_probe_ms: vec![None; ports],
        }
    }
}

/// Two-stage lookup; a miss in either table drops the packet.
pub fn forward(state: &SwitchState, src: Ipv4Addr, dst: Ipv4Addr) -> Decision {
    let rs = &state.ruleset;
    let Some(fs) = rs.lookup_flow_set(src, dst) else {
        return Decision::Drop;
    };
    let status = rs.register.status(fs).unwrap_or(0);
    match rs.lookup_forward(fs, status) {
        Some((egress_port, next_hop_mac)) => Decision::Forward {
            egress_port,
            next_hop_mac,
        },
        None => Decision::Drop,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub link: (NodeId, NodeId),
    pub bytes_since_last: f64,
    pub previous_timestamp_ms: f64,
    pub current_timestamp_ms: f64,
}

/// Used rate in bits/s from a byte count over a probe window.
pub fn estimate_rate(bytes: f64, previous_ms: f64, current_ms: f64) -> Option<f64> {
    let elapsed = current_ms - previous_ms;
    (elapsed > 0.0).then(|| 8.0 * bytes / (elapsed / 1000.0))
}

/// Progressive filling: every unfrozen flow grows at the same pace until it
/// reaches its demand or one of its links saturates.
///
/// `routes[i]` lists the link indices (into `capacity`) crossed by flow `i`.
pub fn max_min_fair(capacity: &[f64], demands: &[f64], routes: &[Vec<usize>]) -> Vec<f64> {
    let n = demands.len();
    let mut rate = vec![0.0; n];
    let mut remaining = capacity.to_vec();
    let mut frozen: Vec<bool> = (0..n)
        .map(|i| demands[i] <= 0.0 || routes[i].is_empty())
        .collect();
    let tol = |c: f64| 1e-12 * c.max(1.0);
    loop {
        let mut users = vec![0usize; capacity.len()];
        for i in (0..n).filter(|&i| !frozen[i]) {
            for &l in &routes[i] {
                users[l] += 1;
            }
        }
        let mut inc = f64::INFINITY;
        for i in (0..n).filter(|&i| !frozen[i]) {
            inc = inc.min(demands[i] - rate[i]);
        }
        if !inc.is_finite() {
            break;
        }
        for (l, &u) in users.iter().enumerate() {
            if u > 0 {
                inc = inc.min(remaining[l] / u as f64);
            }
        }
        let inc = inc.max(0.0);
        for i in (0..n).filter(|&i| !frozen[i]) {
            rate[i] += inc;
        }
        for (l, &u) in users.iter().enumerate() {
            remaining[l] = (remaining[l] - inc * u as f64).max(0.0);
        }
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            if demands[i] - rate[i] <= tol(demands[i])
                || routes[i].iter().any(|&l| remaining[l] <= tol(capacity[l]))
            {
                frozen[i] = true;
            }
        }
    }
    for i in 0..n {
        rate[i] = rate[i].min(demands[i]);
    }
    rate
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowMetrics {
    pub id: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub fct_ms: Option<f64>,
    pub delivered_bytes: f64,
    pub offered_bytes: f64,
    pub lost_bytes: f64,
    /// Intervals with zero rate while active; an open interval has no end.
    pub outages: Vec<(f64, Option<f64>)>,
    pub disconnected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time_ms: f64,
    pub flow: usize,
    pub bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationPoint {
    pub time_ms: f64,
    pub src: NodeId,
    pub dst: NodeId,
    pub utilization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub time_ms: f64,
    pub kind: String,
    pub flow_sets: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub duration_ms: f64,
    pub flows: Vec<FlowMetrics>,
    pub series: Vec<SeriesPoint>,
    pub utilization: Vec<UtilizationPoint>,
    pub recoveries: Vec<RecoveryRecord>,
    pub warnings: Vec<String>,
    pub reroute_computations: usize,
}

impl SimMetrics {
    pub fn total_delivered_bytes(&self) -> f64 {
        self.flows.iter().map(|f| f.delivered_bytes).sum()
    }

    /// Mean delivered rate per flow over the run, in bits/s.
    pub fn mean_throughput_bps(&self) -> f64 {
        if self.flows.is_empty() {
            return 0.0;
        }
        8.0 * self.total_delivered_bytes() / (self.duration_ms / 1000.0) / self.flows.len() as f64
    }

    pub fn fcts(&self) -> Vec<f64> {
        self.flows.iter().filter_map(|f| f.fct_ms).collect()
    }

    pub fn throughput_csv(&self) -> String {
        let mut out = String::from("time_ms,flow_id,bps\n");
        for p in &self.series {
            out.push_str(&format!("{},{},{}\n", p.time_ms, p.flow, p.bps));
        }
        out
    }

    pub fn fct_csv(&self) -> String {
        let mut out = String::from("flow_id,fct_ms\n");
        for f in &self.flows {
            if let Some(fct) = f.fct_ms {
                out.push_str(&format!("{},{}\n", f.id, fct));
            }
        }
        out
    }

    pub fn utilization_csv(&self) -> String {
        let mut out = String::from("time_ms,src,dst,utilization\n");
        for u in &self.utilization {
            out.push_str(&format!(
                "{},{},{},{}\n",
                u.time_ms, u.src, u.dst, u.utilization
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
enum EventKind {
    LinkDown {
        a: NodeIx,
        b: NodeIx,
        detection_ms: f64,
    },
    Flip {
        a: NodeIx,
        b: NodeIx,
    },
    Reroute,
}

#[derive(Clone, Debug, PartialEq)]
struct Scheduled {
    time_ms: f64,
    seq: usize,
    kind: EventKind,
}

#[derive(Clone, Debug)]
struct FlowState {
    remaining_bytes: Option<f64>,
    finished: bool,
    open_outage: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Simulation<'g> {
    graph: &'g NetworkGraph,
    cfg: SimConfig,
    mode: Mode,
    demands: Vec<FlowDemand>,
    plans: Vec<PathPlan>,
    switches: Vec<Option<SwitchState>>,
    failed: FailedLinks,
    events: Vec<Scheduled>,
    seq: usize,
    now: f64,
    flows: Vec<FlowState>,
    metrics: SimMetrics,
    series_bits: Vec<Vec<f64>>,
}

impl<'g> Simulation<'g> {
    /// In `Tel` mode `plans` must carry flow_set ids. In baseline mode
    /// `plans` is ignored and shortest paths are computed per demand.
    pub fn new(
        graph: &'g NetworkGraph,
        plans: &[PathPlan],
        demands: Vec<FlowDemand>,
        mode: Mode,
        cfg: SimConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        for d in &demands {
            d.validate()?;
            graph.resolve(&d.src)?;
            graph.resolve(&d.dst)?;
        }
        let intervals = (cfg.duration_ms / cfg.series_interval_ms).ceil() as usize;
        let flows = demands
            .iter()
            .map(|d| FlowState {
                remaining_bytes: d.size_bytes.map(|s| s as f64),
                finished: false,
                open_outage: None,
            })
            .collect();
        let metrics = SimMetrics {
            duration_ms: cfg.duration_ms,
            flows: demands
                .iter()
                .enumerate()
                .map(|(id, d)| FlowMetrics {
                    id,
                    src: d.src.clone(),
                    dst: d.dst.clone(),
                    fct_ms: None,
                    delivered_bytes: 0.0,
                    offered_bytes: 0.0,
                    lost_bytes: 0.0,
                    outages: Vec::new(),
                    disconnected: false,
                })
                .collect(),
            series: Vec::new(),
            utilization: Vec::new(),
            recoveries: Vec::new(),
            warnings: Vec::new(),
            reroute_computations: 0,
        };
        let mut sim = Self {
            graph,
            cfg,
            mode,
            series_bits: vec![vec![0.0; intervals]; demands.len()],
            demands,
            plans: Vec::new(),
            switches: vec![None; graph.node_count()],
            failed: FailedLinks::new(),
            events: Vec::new(),
            seq: 0,
            now: 0.0,
            flows,
            metrics,
        };
        let plans = match mode {
            Mode::Tel => plans.to_vec(),
            Mode::Baseline(_) => sim.baseline_plans()?,
        };
        sim.install(plans)?;
        Ok(sim)
    }

    pub fn now_ms(&self) -> f64 {
        self.now
    }

    pub fn switch_state(&self, n: NodeIx) -> Option<&SwitchState> {
        self.switches[n.index()].as_ref()
    }

    pub fn failed_links(&self) -> &FailedLinks {
        &self.failed
    }

    fn baseline_plans(&mut self) -> Result<Vec<PathPlan>> {
        let Mode::Baseline(bc) = self.mode else {
            return Ok(Vec::new());
        };
        let mut plans = Vec::new();
        for d in &self.demands {
            let s = self.graph.resolve(&d.src)?;
            let t = self.graph.resolve(&d.dst)?;
            if let Some(p) = shortest_path_avoiding(self.graph, s, t, bc.metric, &self.failed)? {
                plans.push(PathPlan {
                    demand: d.clone(),
                    exploration_log: vec![p.clone()],
                    primary: p,
                    backup: None,
                    flow_set: None,
                });
            }
        }
        if !plans.is_empty() {
            assign_flow_set_ids(&mut plans, None)?;
        }
        Ok(plans)
    }

    /// Replaces every switch's rules, keeping byte counters.
    fn install(&mut self, plans: Vec<PathPlan>) -> Result<()> {
        let rules = compile_rules(self.graph, &plans)?;
        let mut fresh: Vec<Option<SwitchRuleSet>> = vec![None; self.graph.node_count()];
        for rs in rules {
            let n = self.graph.resolve(&rs.switch)?;
            fresh[n.index()] = Some(rs);
        }
        for n in self.graph.switches() {
            let rs = fresh[n.index()].take().unwrap_or_else(|| SwitchRuleSet {
                switch: self.graph.id(n).clone(),
                entries: Vec::new(),
                register: Default::default(),
            });
            match &mut self.switches[n.index()] {
                Some(state) => state.ruleset = rs,
                slot => *slot = Some(SwitchState::new(rs, self.graph.degree(n))),
            }
        }
        self.plans = plans;
        Ok(())
    }

    fn schedule(&mut self, time_ms: f64, kind: EventKind) {
        self.events.push(Scheduled {
            time_ms,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    /// Schedules a physical link failure; both directions go down.
    pub fn inject_failure(&mut self, event: &FailureEvent) -> Result<()> {
        if !(0.0..=self.cfg.duration_ms).contains(&event.time_ms) {
            return Err(Error::Config(format!(
                "failure at {} ms lies outside the {} ms run",
                event.time_ms, self.cfg.duration_ms
            )));
        }
        let a = self.graph.resolve(&event.link.0)?;
        let b = self.graph.resolve(&event.link.1)?;
        self.graph.try_link(a, b)?;
        let detection_ms = event
            .detection_delay_ms
            .unwrap_or(self.cfg.detection_delay_ms);
        if !(detection_ms >= 0.0) {
            return Err(Error::Config("detection delay must be non-negative".into()));
        }
        self.schedule(event.time_ms, EventKind::LinkDown { a, b, detection_ms });
        Ok(())
    }

    fn process_events(&mut self) -> Result<()> {
        loop {
            let due = self
                .events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.time_ms <= self.now + EPS_MS)
                .min_by(|x, y| {
                    x.1.time_ms
                        .total_cmp(&y.1.time_ms)
                        .then(x.1.seq.cmp(&y.1.seq))
                })
                .map(|(i, _)| i);
            let Some(i) = due else {
                return Ok(());
            };
            let ev = self.events.remove(i);
            self.fire(ev)?;
        }
    }

    fn fire(&mut self, ev: Scheduled) -> Result<()> {
        match ev.kind {
            EventKind::LinkDown { a, b, detection_ms } => {
                if !self.failed.insert(a, b) {
                    let msg = format!(
                        "link {}-{} already down at {} ms",
                        self.graph.id(a),
                        self.graph.id(b),
                        ev.time_ms
                    );
                    log::warn!("{msg}");
                    self.metrics.warnings.push(msg);
                    return Ok(());
                }
                match self.mode {
                    Mode::Tel => self.schedule(ev.time_ms + detection_ms, EventKind::Flip { a, b }),
                    Mode::Baseline(bc) => self.schedule(
                        ev.time_ms + detection_ms + bc.control_plane_delay_ms,
                        EventKind::Reroute,
                    ),
                }
            }
            EventKind::Flip { a, b } => {
                let ids: BTreeSet<u32> = self
                    .plans
                    .iter()
                    .filter(|p| p.primary.uses_edge(a, b))
                    .filter_map(|p| p.flow_set.map(|f| f.value))
                    .collect();
                if !ids.is_empty() {
                    let current: Vec<SwitchRuleSet> = self
                        .switches
                        .iter()
                        .flatten()
                        .map(|s| s.ruleset.clone())
                        .collect();
                    let updated = apply_failure_to_rules(&current, &ids)?;
                    for rs in updated {
                        let n = self.graph.resolve(&rs.switch)?;
                        if let Some(state) = &mut self.switches[n.index()] {
                            state.ruleset = rs;
                        }
                    }
                }
                self.metrics.recoveries.push(RecoveryRecord {
                    time_ms: ev.time_ms,
                    kind: "flip".into(),
                    flow_sets: ids.into_iter().collect(),
                });
            }
            EventKind::Reroute => {
                let plans = self.baseline_plans()?;
                self.install(plans)?;
                self.metrics.reroute_computations += 1;
                self.metrics.recoveries.push(RecoveryRecord {
                    time_ms: ev.time_ms,
                    kind: "reroute".into(),
                    flow_sets: self
                        .plans
                        .iter()
                        .filter_map(|p| p.flow_set.map(|f| f.value))
                        .collect(),
                });
            }
        }
        Ok(())
    }

    /// Directed links of the route packets of `demand` take right now, or
    /// `None` if they are dropped or hit a down link.
    pub fn resolve_route(&self, demand: &FlowDemand) -> Option<Vec<LinkIx>> {
        let g = self.graph;
        let s = g.lookup(demand.src.as_str())?;
        let d = g.lookup(demand.dst.as_str())?;
        let (src_ip, dst_ip) = (node_address(s), node_address(d));
        let mut u = s;
        let mut links = Vec::new();
        while u != d {
            if links.len() > g.node_count() {
                return None;
            }
            let v = if g.is_switch(u) {
                match forward(self.switches[u.index()].as_ref()?, src_ip, dst_ip) {
                    Decision::Forward { egress_port, .. } => {
                        g.neighbor_on_port(u, egress_port as usize)?
                    }
                    Decision::Drop => return None,
                }
            } else if u == s {
                g.attachment(u)?
            } else {
                return None;
            };
            if self.failed.contains(u, v) {
                return None;
            }
            links.push(g.try_link(u, v).ok()?);
            u = v;
        }
        Some(links)
    }

    /// Reads and resets the byte counter of egress `a -> b`. The first
    /// cycle of a port only records its timestamp.
    pub fn probe_cycle(&mut self, a: NodeIx, b: NodeIx) -> Result<Option<(ProbeRecord, f64)>> {
        let g = self.graph;
        let l = g.try_link(a, b)?;
        let port = g
            .port_of(a, b)
            .ok_or_else(|| Error::UnknownLink(g.id(a).to_string(), g.id(b).to_string()))?;
        let now = self.now;
        let state = self.switches[a.index()]
            .as_mut()
            .ok_or_else(|| Error::Config(format!("{} is not a switch", g.id(a))))?;
        let previous = state.last_probe_ms[port];
        let bytes = state.egress_bytes[port];
        let Some(prev) = previous else {
            state.last_probe_ms[port] = Some(now);
            state.egress_bytes[port] = 0.0;
            return Ok(None);
        };
        let Some(rate) = estimate_rate(bytes, prev, now) else {
            return Ok(None);
        };
        state.last_probe_ms[port] = Some(now);
        state.egress_bytes[port] = 0.0;
        let record = ProbeRecord {
            link: (g.id(a).clone(), g.id(b).clone()),
            bytes_since_last: bytes,
            previous_timestamp_ms: prev,
            current_timestamp_ms: now,
        };
        Ok(Some((record, rate / g.link(l).attrs.bandwidth_bps)))
    }

    fn probe_all(&mut self) -> Result<()> {
        let g = self.graph;
        for a in g.switches() {
            for &(b, _) in g.neighbors(a) {
                if let Some((rec, util)) = self.probe_cycle(a, b)? {
                    self.metrics.utilization.push(UtilizationPoint {
                        time_ms: rec.current_timestamp_ms,
                        src: rec.link.0,
                        dst: rec.link.1,
                        utilization: util,
                    });
                }
            }
        }
        Ok(())
    }

    fn recovery_pending(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e.kind, EventKind::Flip { .. } | EventKind::Reroute))
    }

    pub fn run(mut self) -> Result<SimMetrics> {
        let cfg = self.cfg;
        let g = self.graph;
        let capacity: Vec<f64> = g.links().map(|(_, l)| l.attrs.bandwidth_bps).collect();
        let mut next_probe = 0.0;

        while self.now < cfg.duration_ms - EPS_MS {
            self.process_events()?;
            if self.now + EPS_MS >= next_probe {
                self.probe_all()?;
                next_probe += cfg.probe_interval_ms;
            }

            let active: Vec<usize> = (0..self.demands.len())
                .filter(|&i| {
                    !self.flows[i].finished && self.demands[i].start_ms <= self.now + EPS_MS
                })
                .collect();
            let routes: Vec<Option<Vec<LinkIx>>> = active
                .iter()
                .map(|&i| self.resolve_route(&self.demands[i]))
                .collect();
            let rates = max_min_fair(
                &capacity,
                &active
                    .iter()
                    .map(|&i| self.demands[i].rate_bps)
                    .collect::<Vec<_>>(),
                &routes
                    .iter()
                    .map(|r| {
                        r.as_ref()
                            .map_or_else(Vec::new, |r| r.iter().map(|l| l.index()).collect())
                    })
                    .collect::<Vec<_>>(),
            );
            let mut load = vec![0.0; capacity.len()];
            for (k, r) in routes.iter().enumerate() {
                for l in r.iter().flatten() {
                    load[l.index()] += rates[k];
                }
            }
            if let Some(l) = (0..load.len()).find(|&l| load[l] > capacity[l] * (1.0 + 1e-9)) {
                return Err(Error::Consistency(format!(
                    "link {} carries {} bps above its {} bps capacity",
                    l, load[l], capacity[l]
                )));
            }

            let pending_recovery = self.recovery_pending();
            for (k, &i) in active.iter().enumerate() {
                let fm = &mut self.metrics.flows[i];
                let fs = &mut self.flows[i];
                if rates[k] <= 0.0 {
                    if fs.open_outage.is_none() {
                        fs.open_outage = Some(self.now);
                    }
                    if routes[k].is_none() && !pending_recovery && !self.failed.is_empty() {
                        fm.disconnected = true;
                    }
                } else if let Some(start) = fs.open_outage.take() {
                    fm.outages.push((start, Some(self.now)));
                }
            }

            let boundary = |step: f64| ((self.now + EPS_MS) / step).floor() * step + step;
            let mut next = boundary(cfg.tick_ms)
                .min(boundary(cfg.series_interval_ms))
                .min(next_probe)
                .min(cfg.duration_ms);
            for e in &self.events {
                if e.time_ms > self.now + EPS_MS {
                    next = next.min(e.time_ms);
                }
            }
            for d in &self.demands {
                if d.start_ms > self.now + EPS_MS {
                    next = next.min(d.start_ms);
                }
            }
            for (k, &i) in active.iter().enumerate() {
                if let (Some(rem), true) = (self.flows[i].remaining_bytes, rates[k] > 0.0) {
                    next = next.min(self.now + 8.0 * rem / rates[k] * 1000.0);
                }
            }
            let dt = next - self.now;
            let bucket = ((self.now + EPS_MS) / cfg.series_interval_ms).floor() as usize;

            for (k, &i) in active.iter().enumerate() {
                let d = &self.demands[i];
                let fs = &mut self.flows[i];
                let fm = &mut self.metrics.flows[i];
                let mut bytes = rates[k] * dt / 1000.0 / 8.0;
                let mut offered = d.rate_bps * dt / 1000.0 / 8.0;
                if let Some(rem) = fs.remaining_bytes.as_mut() {
                    offered = offered.min(*rem);
                    if rates[k] > 0.0 {
                        let done_at = self.now + 8.0 * *rem / rates[k] * 1000.0;
                        if done_at <= next + EPS_MS {
                            bytes = *rem;
                            fs.finished = true;
                            fm.fct_ms = Some(done_at - d.start_ms);
                        }
                    }
                    bytes = bytes.min(*rem);
                    *rem -= bytes;
                }
                fm.delivered_bytes += bytes;
                fm.offered_bytes += offered.max(bytes);
                if d.class == TrafficClass::NonResponsive {
                    fm.lost_bytes += (offered - bytes).max(0.0);
                }
                if let Some(b) = self.series_bits[i].get_mut(bucket) {
                    *b += bytes * 8.0;
                }
                if let Some(route) = &routes[k] {
                    for &l in route {
                        let link = g.link(l);
                        if let (Some(state), Some(port)) = (
                            self.switches[link.src.index()].as_mut(),
                            g.port_of(link.src, link.dst),
                        ) {
                            state.egress_bytes[port] += bytes;
                        }
                    }
                }
            }
            self.now = next;
        }
        self.process_events()?;
        if self.now + EPS_MS >= next_probe {
            self.probe_all()?;
        }

        for (i, fs) in self.flows.iter_mut().enumerate() {
            if let Some(start) = fs.open_outage.take() {
                self.metrics.flows[i].outages.push((start, None));
            }
        }
        let secs = cfg.series_interval_ms / 1000.0;
        for (i, buckets) in self.series_bits.iter().enumerate() {
            for (b, bits) in buckets.iter().enumerate() {
                self.metrics.series.push(SeriesPoint {
                    time_ms: b as f64 * cfg.series_interval_ms,
                    flow: i,
                    bps: bits / secs,
                });
            }
        }
        self.metrics
            .series
            .sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms).then(a.flow.cmp(&b.flow)));
        Ok(self.metrics)
    }
}

pub fn run_flow_sim(
    graph: &NetworkGraph,
    plans: &[PathPlan],
    demands: &[FlowDemand],
    failures: &[FailureEvent],
    mode: Mode,
    cfg: SimConfig,
) -> Result<SimMetrics> {
    let mut sim = Simulation::new(graph, plans, demands.to_vec(), mode, cfg)?;
    for f in failures {
        sim.inject_failure(f)?;
    }
    sim.run()
}
