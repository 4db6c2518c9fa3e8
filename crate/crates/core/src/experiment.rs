//! Demand generation and the hop-count comparison between explored paths
//! and shortest paths.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{shortest_path, Metric};
use crate::dla::{solve_demand, DemandOutcome, FlowDemand, SolverConfig};
use crate::error::{Error, Result};
use crate::topology::{NetworkGraph, NodeId};

/// Ordered pairs of distinct hosts, in node order.
pub fn host_pairs(graph: &NetworkGraph) -> Vec<(NodeId, NodeId)> {
    let hosts: Vec<_> = graph.hosts().map(|h| graph.id(h).clone()).collect();
    let mut pairs = Vec::with_capacity(hosts.len() * hosts.len().saturating_sub(1));
    for a in &hosts {
        for b in &hosts {
            if a != b {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    pairs
}

/// `k` demands over distinct host pairs drawn with `seed`.
pub fn random_demands(
    graph: &NetworkGraph,
    k: usize,
    rate_bps: f64,
    seed: u64,
) -> Result<Vec<FlowDemand>> {
    let mut pairs = host_pairs(graph);
    if k == 0 {
        return Err(Error::Config("demand count must be at least 1".into()));
    }
    if k > pairs.len() {
        return Err(Error::Config(format!(
            "{k} demands requested but only {} distinct host pairs exist",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    Ok(pairs
        .into_iter()
        .take(k)
        .map(|(s, d)| FlowDemand::new(s, d, rate_bps))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopStats {
    pub topology: String,
    pub switches: usize,
    pub links: usize,
    pub pairs: usize,
    pub tel_primary_mean: f64,
    /// `None` when no pair produced a backup.
    pub tel_backup_mean: Option<f64>,
    pub baseline_mean: f64,
}

impl HopStats {
    pub fn primary_ratio(&self) -> f64 {
        self.tel_primary_mean / self.baseline_mean
    }

    pub fn csv_header() -> &'static str {
        "topology,switches,links,pairs,tel_primary_hops,tel_backup_hops,baseline_hops"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{},{:.4}",
            self.topology,
            self.switches,
            self.links,
            self.pairs,
            self.tel_primary_mean,
            self.tel_backup_mean
                .map_or_else(String::new, |b| format!("{b:.4}")),
            self.baseline_mean
        )
    }
}

fn mean(xs: &[usize]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<usize>() as f64 / xs.len() as f64)
}

/// Mean switch-to-switch hop counts over host pairs of a graph with hosts
/// attached. Every pair is solved on its own against fresh residuals. When
/// there are more than `max_pairs` pairs a seeded sample is used.
pub fn hop_comparison(
    name: &str,
    graph: &NetworkGraph,
    cfg: &SolverConfig,
    max_pairs: usize,
    seed: u64,
) -> Result<HopStats> {
    let mut pairs = host_pairs(graph);
    if pairs.is_empty() {
        return Err(Error::Validation(format!("{name} has no host pairs")));
    }
    if pairs.len() > max_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pairs.shuffle(&mut rng);
        pairs.truncate(max_pairs);
    }
    let (mut primary, mut backup, mut shortest) = (Vec::new(), Vec::new(), Vec::new());
    for (i, (s, d)) in pairs.iter().enumerate() {
        let demand = FlowDemand::new(s.clone(), d.clone(), 1.0);
        let mut rng = cfg.demand_rng(i);
        let (outcome, _) = solve_demand(graph, &demand, cfg, &mut rng)?;
        let sp = shortest_path(
            graph,
            graph.resolve(s)?,
            graph.resolve(d)?,
            Metric::HopCount,
        )?;
        let (DemandOutcome::Planned(plan), Some(sp)) = (outcome, sp) else {
            log::warn!("{name}: no path for {s} -> {d}");
            continue;
        };
        primary.push(plan.primary.switch_hops(graph));
        if let Some(b) = &plan.backup {
            backup.push(b.switch_hops(graph));
        }
        shortest.push(sp.switch_hops(graph));
    }
    Ok(HopStats {
        topology: name.to_string(),
        switches: graph.switch_count(),
        links: graph.undirected_link_count() - graph.host_count(),
        pairs: primary.len(),
        tel_primary_mean: mean(&primary)
            .ok_or_else(|| Error::Validation(format!("{name}: no pair could be routed")))?,
        tel_backup_mean: mean(&backup),
        baseline_mean: mean(&shortest).unwrap_or(f64::NAN),
    })
}
