//! Independent checks of a set of path placements against link capacity,
//! flow conservation, delay bounds and single use of links.
//!
//! Violations are returned as data. The checks only look at the explicit
//! link lists of a placement, so deliberately broken placements (gaps,
//! branches, repeated links) can be expressed and detected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dla::{PathCandidate, PathPlan};
use crate::topology::{CapacityPolicy, LinkIx, NetworkGraph, NodeId, NodeIx};

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub src: NodeIx,
    pub dst: NodeIx,
    pub links: Vec<LinkIx>,
    pub rate_bps: f64,
}

impl Assignment {
    pub fn from_path(path: &PathCandidate, rate_bps: f64) -> Option<Self> {
        Some(Self {
            src: path.source()?,
            dst: path.destination()?,
            links: path.links.clone(),
            rate_bps,
        })
    }
}

/// Flow id to assigned links and rate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Placement {
    pub assignments: BTreeMap<usize, Assignment>,
}

impl Placement {
    pub fn insert(&mut self, flow: usize, assignment: Assignment) {
        self.assignments.insert(flow, assignment);
    }

    /// Primaries of `plans`, keyed by position.
    pub fn from_plans(plans: &[PathPlan]) -> Self {
        let mut p = Self::default();
        for (i, plan) in plans.iter().enumerate() {
            if let Some(a) = Assignment::from_path(&plan.primary, plan.demand.rate_bps) {
                p.insert(i, a);
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityViolation {
    pub src: NodeId,
    pub dst: NodeId,
    pub load_bps: f64,
    pub bound_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationViolation {
    pub flow: usize,
    pub node: NodeId,
    pub net_out: i64,
    pub expected: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayCheck {
    pub pass: bool,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkOnceViolation {
    RepeatedLink {
        flow: usize,
        src: NodeId,
        dst: NodeId,
        uses: usize,
    },
    Branch {
        flow: usize,
        node: NodeId,
        out_degree: usize,
    },
}

/// Violations of every check over one placement.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub capacity: Vec<CapacityViolation>,
    pub conservation: Vec<ConservationViolation>,
    pub delay: Vec<(usize, DelayCheck)>,
    pub link_once: Vec<LinkOnceViolation>,
}

impl ViolationReport {
    pub fn is_clean(&self) -> bool {
        self.capacity.is_empty()
            && self.conservation.is_empty()
            && self.delay.is_empty()
            && self.link_once.is_empty()
    }

    pub fn total(&self) -> usize {
        self.capacity.len() + self.conservation.len() + self.delay.len() + self.link_once.len()
    }
}

pub fn check_link_capacity(
    graph: &NetworkGraph,
    placement: &Placement,
    policy: &CapacityPolicy,
) -> Vec<CapacityViolation> {
    let mut load: BTreeMap<LinkIx, f64> = BTreeMap::new();
    for a in placement.assignments.values() {
        for &l in &a.links {
            *load.entry(l).or_default() += a.rate_bps;
        }
    }
    load.into_iter()
        .filter_map(|(l, load)| {
            let link = graph.link(l);
            let bound = policy.mu() * link.attrs.bandwidth_bps;
            (load > bound * (1.0 + 1e-9)).then(|| CapacityViolation {
                src: graph.id(link.src).clone(),
                dst: graph.id(link.dst).clone(),
                load_bps: load,
                bound_bps: bound,
            })
        })
        .collect()
}

pub fn check_flow_conservation(
    graph: &NetworkGraph,
    placement: &Placement,
) -> Vec<ConservationViolation> {
    let mut out = Vec::new();
    for (&flow, a) in &placement.assignments {
        let mut net: BTreeMap<NodeIx, i64> = BTreeMap::new();
        net.insert(a.src, 0);
        net.insert(a.dst, 0);
        for &l in &a.links {
            let link = graph.link(l);
            *net.entry(link.src).or_default() += 1;
            *net.entry(link.dst).or_default() -= 1;
        }
        for (n, v) in net {
            let expected = if n == a.src {
                1
            } else if n == a.dst {
                -1
            } else {
                0
            };
            if v != expected {
                out.push(ConservationViolation {
                    flow,
                    node: graph.id(n).clone(),
                    net_out: v,
                    expected,
                });
            }
        }
    }
    out
}

/// Total path delay against an optional bound; the bound is inclusive.
pub fn check_delay(
    graph: &NetworkGraph,
    path: &PathCandidate,
    t_max_ms: Option<f64>,
) -> DelayCheck {
    let total_ms = path.delay_ms(graph);
    DelayCheck {
        pass: t_max_ms.is_none_or(|t| total_ms <= t),
        total_ms,
    }
}

pub fn check_link_once(graph: &NetworkGraph, placement: &Placement) -> Vec<LinkOnceViolation> {
    let mut out = Vec::new();
    for (&flow, a) in &placement.assignments {
        let mut uses: BTreeMap<LinkIx, usize> = BTreeMap::new();
        let mut out_degree: BTreeMap<NodeIx, Vec<LinkIx>> = BTreeMap::new();
        for &l in &a.links {
            *uses.entry(l).or_default() += 1;
            let d = out_degree.entry(graph.link(l).src).or_default();
            if !d.contains(&l) {
                d.push(l);
            }
        }
        for (l, n) in uses {
            if n > 1 {
                let link = graph.link(l);
                out.push(LinkOnceViolation::RepeatedLink {
                    flow,
                    src: graph.id(link.src).clone(),
                    dst: graph.id(link.dst).clone(),
                    uses: n,
                });
            }
        }
        for (node, ls) in out_degree {
            if ls.len() > 1 {
                out.push(LinkOnceViolation::Branch {
                    flow,
                    node: graph.id(node).clone(),
                    out_degree: ls.len(),
                });
            }
        }
    }
    out
}

/// Runs every check on the primaries of `plans`. `graph` must carry the
/// original capacities; residuals are not consulted.
pub fn validate_plans(
    graph: &NetworkGraph,
    plans: &[PathPlan],
    policy: &CapacityPolicy,
) -> ViolationReport {
    let placement = Placement::from_plans(plans);
    let delay = plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            (
                i,
                check_delay(graph, &plan.primary, plan.demand.max_delay_ms),
            )
        })
        .filter(|(_, c)| !c.pass)
        .collect();
    ViolationReport {
        capacity: check_link_capacity(graph, &placement, policy),
        conservation: check_flow_conservation(graph, &placement),
        delay,
        link_once: check_link_once(graph, &placement),
    }
}
