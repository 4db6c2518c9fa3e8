//! Reactive shortest-path routing used as the comparison baseline.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::dla::PathCandidate;
use crate::error::Result;
use crate::topology::{NetworkGraph, NodeIx};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    HopCount,
    /// Propagation delay, ties broken by hop count.
    DelayWeighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub metric: Metric,
    pub control_plane_delay_ms: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            metric: Metric::HopCount,
            control_plane_delay_ms: 1000.0,
        }
    }
}

/// Physical links that are down, stored undirected.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FailedLinks(BTreeSet<(NodeIx, NodeIx)>);

impl FailedLinks {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` if the link was already down.
    pub fn insert(&mut self, a: NodeIx, b: NodeIx) -> bool {
        self.0.insert((a.min(b), a.max(b)))
    }

    pub fn contains(&self, a: NodeIx, b: NodeIx) -> bool {
        self.0.contains(&(a.min(b), a.max(b)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn path_hit(&self, path: &PathCandidate) -> bool {
        path.nodes.windows(2).any(|w| self.contains(w[0], w[1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Dist {
    primary: f64,
    hops: usize,
}

impl Dist {
    const ZERO: Dist = Dist {
        primary: 0.0,
        hops: 0,
    };

    fn step(self, metric: Metric, delay_ms: f64) -> Dist {
        Dist {
            primary: match metric {
                Metric::HopCount => self.primary + 1.0,
                Metric::DelayWeighted => self.primary + delay_ms,
            },
            hops: self.hops + 1,
        }
    }

    fn cmp(&self, other: &Dist) -> Ordering {
        let tol = 1e-9 * self.primary.abs().max(other.primary.abs()).max(1.0);
        if (self.primary - other.primary).abs() > tol {
            self.primary.total_cmp(&other.primary)
        } else {
            self.hops.cmp(&other.hops)
        }
    }
}

struct Entry(Dist, NodeIx);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

fn transit_ok(graph: &NetworkGraph, n: NodeIx, s: NodeIx, d: NodeIx) -> bool {
    n == s || n == d || graph.is_switch(n)
}

/// Minimal-metric path avoiding `failed`. Among equal-metric paths the one
/// whose node names are lexicographically smallest, hop by hop, is chosen.
/// Hosts are never used as transit nodes.
pub fn shortest_path_avoiding(
    graph: &NetworkGraph,
    s: NodeIx,
    d: NodeIx,
    metric: Metric,
    failed: &FailedLinks,
) -> Result<Option<PathCandidate>> {
    if s == d {
        return Ok(None);
    }
    // distances to d; links are symmetric so the forward adjacency serves
    let mut dist: Vec<Option<Dist>> = vec![None; graph.node_count()];
    let mut heap = BinaryHeap::new();
    dist[d.index()] = Some(Dist::ZERO);
    heap.push(Entry(Dist::ZERO, d));
    while let Some(Entry(du, u)) = heap.pop() {
        if dist[u.index()].is_some_and(|x| x.cmp(&du) == Ordering::Less) {
            continue;
        }
        if u != d && !transit_ok(graph, u, s, d) {
            continue;
        }
        for &(v, l) in graph.neighbors(u) {
            if failed.contains(u, v) {
                continue;
            }
            let dv = du.step(metric, graph.link(graph.reverse(l)).attrs.delay_ms);
            if dist[v.index()].is_none_or(|x| dv.cmp(&x) == Ordering::Less) {
                dist[v.index()] = Some(dv);
                heap.push(Entry(dv, v));
            }
        }
    }
    let Some(mut remaining) = dist[s.index()] else {
        return Ok(None);
    };
    let total = remaining;

    let mut nodes = vec![s];
    let mut u = s;
    while u != d {
        let next = graph
            .neighbors(u)
            .iter()
            .filter(|&&(v, _)| {
                !failed.contains(u, v) && transit_ok(graph, v, s, d) && !nodes.contains(&v)
            })
            .filter_map(|&(v, l)| {
                let dv = dist[v.index()]?;
                let through = dv.step(metric, graph.link(l).attrs.delay_ms);
                (through.cmp(&remaining) == Ordering::Equal).then_some((v, dv))
            })
            .min_by(|a, b| graph.id(a.0).cmp(graph.id(b.0)));
        let Some((v, dv)) = next else {
            return Ok(None);
        };
        nodes.push(v);
        remaining = dv;
        u = v;
    }
    PathCandidate::with_value(graph, nodes, total.primary).map(Some)
}

pub fn shortest_path(
    graph: &NetworkGraph,
    s: NodeIx,
    d: NodeIx,
    metric: Metric,
) -> Result<Option<PathCandidate>> {
    shortest_path_avoiding(graph, s, d, metric, &FailedLinks::new())
}

pub fn reroute_after_failure(
    graph: &NetworkGraph,
    failed: &FailedLinks,
    s: NodeIx,
    d: NodeIx,
    metric: Metric,
) -> Result<Option<PathCandidate>> {
    shortest_path_avoiding(graph, s, d, metric, failed)
}
