//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tel_core::baseline::{shortest_path, BaselineConfig, Metric};
use tel_core::constraints::validate_plans;
use tel_core::dataplane::{run_flow_sim, FailureEvent, Mode, SimConfig, SimMetrics};
use tel_core::dla::{
    select_paths, FlowDemand, LearningAutomaton, PathCandidate, PathPlan, SolverConfig,
};
use tel_core::experiment::{hop_comparison, random_demands};
use tel_core::rulegen::{
    additional_rules, apply_failure_to_rules, assign_flow_set_ids, compile_rules, memory_cost,
    node_address, FailureScenario,
};
use tel_core::topology::{
    build_simple_topology, CapacityPolicy, LinkSpec, NetworkGraph, NodeId, NodeIx, NodeKind,
};

const TOPOLOGY_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/topologyzoo");

struct Outcome {
    pass: bool,
    detail: String,
}

/// A solved scenario kept for the cross-cutting checks.
struct Solved {
    label: String,
    graph: NetworkGraph,
    plans: Vec<PathPlan>,
}

fn topology(name: &str) -> NetworkGraph {
    let spec = LinkSpec::new(4.5e6, 1.0, 1.0);
    let text = std::fs::read_to_string(format!("{TOPOLOGY_DIR}/{name}.graphml")).unwrap();
    let mut g = NetworkGraph::from_graphml(&text, &spec).unwrap();
    g.attach_hosts(&spec).unwrap();
    g
}

fn names(g: &NetworkGraph, nodes: &[NodeIx]) -> Vec<String> {
    nodes.iter().map(|&n| g.id(n).to_string()).collect()
}

// ---------------------------------------------------------------- criterion 1

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut star = NetworkGraph::new();
    let hub = star.add_node("hub", NodeKind::Switch).unwrap();
    for i in 0..8 {
        let leaf = star
            .add_node(format!("x{i}").as_str(), NodeKind::Switch)
            .unwrap();
        star.add_link(hub, leaf, &LinkSpec::new(1e6, 1.0, 1.0))
            .unwrap();
    }
    let all_actions = star.neighbors(hub).to_vec();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=8);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / sum).collect();
        let a = 1.0 - rng.gen::<f64>();
        let i = rng.gen_range(0..n);
        let actions = &all_actions[..n];
        let mut la = LearningAutomaton::with_probabilities(actions, p.clone()).unwrap();
        la.reward(i, a).unwrap();
        for (j, &got) in la.probabilities().iter().enumerate() {
            let want = if j == i {
                p[j] + a * (1.0 - p[j])
            } else {
                (1.0 - a) * p[j]
            };
            worst = worst.max((got - want).abs());
        }
    }

    let mut simplex_ok = true;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=8);
        let actions = &all_actions[..n];
        let mut la = LearningAutomaton::new(actions);
        for k in 0..n {
            if n > 1 && rng.gen_bool(0.2) {
                la.set_enabled(k, false);
            }
        }
        for _ in 0..rng.gen_range(1..50) {
            let enabled: Vec<_> = (0..n).filter(|&k| la.enabled()[k]).collect();
            if enabled.is_empty() {
                break;
            }
            let i = enabled[rng.gen_range(0..enabled.len())];
            la.reward(i, 1.0 - rng.gen::<f64>()).unwrap();
        }
        let p = la.probabilities();
        if p.iter().any(|&x| x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            simplex_ok = false;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= 1e-12 && simplex_ok && elapsed < Duration::from_secs(1),
        detail: format!(
            "max deviation from hand evaluation {worst:.2e}, simplex held over 10000 sequences: {simplex_ok}, {elapsed:.2?}"
        ),
    }
}

// ---------------------------------------------------------------- criterion 2

fn random_graph(rng: &mut ChaCha8Rng) -> NetworkGraph {
    let n = rng.gen_range(6..=10);
    let mut g = NetworkGraph::new();
    let ids: Vec<_> = (0..n)
        .map(|i| {
            g.add_node(format!("n{i}").as_str(), NodeKind::Switch)
                .unwrap()
        })
        .collect();
    let spec = |rng: &mut ChaCha8Rng| {
        LinkSpec::new(10e6, rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0))
    };
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let s = spec(rng);
        g.add_link(ids[i], ids[j], &s).unwrap();
    }
    for _ in 0..rng.gen_range(n / 2..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && g.link_between(ids[a], ids[b]).is_none() {
            let s = spec(rng);
            g.add_link(ids[a], ids[b], &s).unwrap();
        }
    }
    g
}

/// Every simple path from `s` to `d` as (value, delay), straight from link
/// attributes on an unloaded graph.
fn enumerate_paths(g: &NetworkGraph, s: NodeIx, d: NodeIx) -> Vec<(f64, f64)> {
    fn rec(
        g: &NetworkGraph,
        u: NodeIx,
        d: NodeIx,
        seen: &mut Vec<NodeIx>,
        acc: (f64, f64),
        out: &mut Vec<(f64, f64)>,
    ) {
        if u == d {
            out.push(acc);
            return;
        }
        for &(v, l) in g.neighbors(u) {
            if seen.contains(&v) {
                continue;
            }
            let a = &g.link(l).attrs;
            seen.push(v);
            rec(
                g,
                v,
                d,
                seen,
                (acc.0 + a.cost + a.delay_ms, acc.1 + a.delay_ms),
                out,
            );
            seen.pop();
        }
    }
    let mut out = Vec::new();
    rec(g, s, d, &mut vec![s], (0.0, 0.0), &mut out);
    out
}

fn criterion_2(solved: &mut Vec<Solved>) -> Outcome {
    let start = Instant::now();
    let mut worst_hits = usize::MAX;
    let mut below_optimum = 0;
    let mut infeasible = 0;
    for gi in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC2 + gi);
        let g = random_graph(&mut rng);
        let n = g.node_count();
        let si = rng.gen_range(0..n);
        let di = (si + rng.gen_range(1..n)) % n;
        let (s, d) = (
            g.lookup(&format!("n{si}")).unwrap(),
            g.lookup(&format!("n{di}")).unwrap(),
        );
        let paths = enumerate_paths(&g, s, d);
        let mut demand = FlowDemand::new(g.id(s).clone(), g.id(d).clone(), 1e6);
        if gi % 2 == 0 {
            let mut delays: Vec<f64> = paths.iter().map(|p| p.1).collect();
            delays.sort_by(f64::total_cmp);
            demand.max_delay_ms = Some(delays[delays.len() / 2]);
        }
        let bound = demand.max_delay_ms.unwrap_or(f64::INFINITY);
        let optimum = paths
            .iter()
            .filter(|p| p.1 <= bound)
            .map(|p| p.0)
            .fold(f64::INFINITY, f64::min);

        let mut hits = 0;
        let mut plans = Vec::new();
        for seed in 0..100 {
            let mut work = g.clone();
            let sol = select_paths(
                &mut work,
                std::slice::from_ref(&demand),
                &SolverConfig::new(500, 1, seed),
            )
            .unwrap();
            let Some(plan) = sol.plans().next().cloned() else {
                infeasible += 1;
                continue;
            };
            let v = plan.primary.value;
            if v < optimum - 1e-9 {
                below_optimum += 1;
            }
            if (v - optimum).abs() <= 1e-9 * optimum.max(1.0) {
                hits += 1;
            }
            plans.push(plan);
        }
        worst_hits = worst_hits.min(hits);
        for (k, mut plan) in plans.into_iter().enumerate() {
            assign_flow_set_ids(std::slice::from_mut(&mut plan), None).unwrap();
            solved.push(Solved {
                label: format!("random graph {gi} run {k}"),
                graph: g.clone(),
                plans: vec![plan],
            });
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst_hits >= 90 && below_optimum == 0 && infeasible == 0 && elapsed < Duration::from_secs(120),
        detail: format!(
            "worst graph matched the enumeration optimum in {worst_hits}/100 runs, {below_optimum} runs below optimum, {infeasible} infeasible, {elapsed:.2?}"
        ),
    }
}

// ---------------------------------------------------------------- criterion 3

fn outage_end(m: &SimMetrics) -> Option<f64> {
    m.flows[0].outages.first().and_then(|o| o.1)
}

fn criterion_3(solved: &mut Vec<Solved>) -> Outcome {
    let start = Instant::now();
    let mut g = build_simple_topology();
    let demand = FlowDemand::new("H1", "H2", 1e6);
    let sol = select_paths(
        &mut g,
        std::slice::from_ref(&demand),
        &SolverConfig::new(100, 1, 6),
    )
    .unwrap();
    let g = build_simple_topology();
    let mut plans = sol.into_plans();
    assign_flow_set_ids(&mut plans, None).unwrap();
    let plan = &plans[0];
    let primary = names(&g, &plan.primary.nodes);
    let backup = plan
        .backup
        .as_ref()
        .map(|b| names(&g, &b.nodes))
        .unwrap_or_default();
    let roles_ok =
        primary == ["H1", "S1", "S2", "S5", "H2"] && backup == ["H1", "S1", "S4", "S5", "H2"];
    let two_hop = plan.primary.switch_hops(&g) == 2
        && plan.backup.as_ref().map(|b| b.switch_hops(&g)) == Some(2)
        && primary != backup;

    let cfg = SimConfig::default();
    let failures = [FailureEvent::new("S1", "S2", 5000.0)];
    let tel = run_flow_sim(
        &g,
        &plans,
        std::slice::from_ref(&demand),
        &failures,
        Mode::Tel,
        cfg,
    )
    .unwrap();
    let tel_again = run_flow_sim(
        &g,
        &plans,
        std::slice::from_ref(&demand),
        &failures,
        Mode::Tel,
        cfg,
    )
    .unwrap();
    let tel_ok =
        tel.flows[0].outages == vec![(5000.0, Some(5050.0))] && tel.reroute_computations == 0;

    let mut baseline_ok = true;
    let mut lines = Vec::new();
    for cp in [1.0, 250.0, 1000.0, 2500.0] {
        let mode = Mode::Baseline(BaselineConfig {
            metric: Metric::HopCount,
            control_plane_delay_ms: cp,
        });
        let base = run_flow_sim(
            &g,
            &plans,
            std::slice::from_ref(&demand),
            &failures,
            mode,
            cfg,
        )
        .unwrap();
        let end = outage_end(&base);
        let ok =
            end == Some(5050.0 + cp) && tel.total_delivered_bytes() > base.total_delivered_bytes();
        baseline_ok &= ok;
        lines.push(format!("cp {cp} ms recovers at {:?} ms", end));
    }
    let zero = run_flow_sim(
        &g,
        &plans,
        std::slice::from_ref(&demand),
        &failures,
        Mode::Baseline(BaselineConfig {
            metric: Metric::HopCount,
            control_plane_delay_ms: 0.0,
        }),
        cfg,
    )
    .unwrap();
    let zero_ok = (zero.total_delivered_bytes() - tel.total_delivered_bytes()).abs() < 1e-6;
    solved.push(Solved {
        label: "simple topology".into(),
        graph: g.clone(),
        plans: plans.clone(),
    });
    let elapsed = start.elapsed();
    Outcome {
        pass: roles_ok && two_hop && tel_ok && baseline_ok && zero_ok && tel == tel_again && elapsed < Duration::from_secs(5),
        detail: format!(
            "primary {} backup {}, TEL recovers at {:?} ms, baseline: {}, deterministic {}, {elapsed:.2?}",
            primary.join("-"),
            backup.join("-"),
            outage_end(&tel),
            lines.join("; "),
            tel == tel_again
        ),
    }
}

// ---------------------------------------------------------------- criterion 4

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if sorted[hi].is_infinite() {
        return sorted[hi];
    }
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fct_sorted(m: &SimMetrics) -> Vec<f64> {
    let mut v: Vec<f64> = m
        .flows
        .iter()
        .map(|f| f.fct_ms.unwrap_or(f64::INFINITY))
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn core_links(g: &NetworkGraph, nodes: &[NodeIx]) -> Vec<(NodeIx, NodeIx)> {
    nodes
        .windows(2)
        .filter(|w| g.is_switch(w[0]) && g.is_switch(w[1]))
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
        .collect()
}

fn fct_topology(name: &str, seed: u64, solved: &mut Vec<Solved>) -> (bool, String) {
    let start = Instant::now();
    let g = topology(name);
    let mut demands = random_demands(&g, 25, 1e6, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in &mut demands {
        d.size_bytes = Some(4500);
        d.start_ms = rng.gen_range(0.0..1000.0f64).floor();
    }
    let mut work = g.clone();
    let sol = select_paths(
        &mut work,
        &demands,
        &SolverConfig::new(500, demands.len(), seed),
    )
    .unwrap();
    if sol.infeasible_count() > 0 {
        return (
            false,
            format!("{name}: {} infeasible demands", sol.infeasible_count()),
        );
    }
    let mut plans = sol.into_plans();
    assign_flow_set_ids(&mut plans, None).unwrap();
    solved.push(Solved {
        label: format!("{name} FCT scenario"),
        graph: g.clone(),
        plans: plans.clone(),
    });

    // the flows closest to the failure instant, preferring those in flight
    let flow_time = 4500.0 * 8.0 / 1e6 * 1000.0;
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| {
            let s = demands[i].start_ms;
            let in_flight = s <= 500.0 && s + flow_time > 500.0;
            (!in_flight, (s - 500.0).abs())
        };
        key(a).partial_cmp(&key(b)).unwrap()
    });
    let mut targets = Vec::new();
    for &i in &order {
        let s = g.resolve(&demands[i].src).unwrap();
        let d = g.resolve(&demands[i].dst).unwrap();
        let sp = shortest_path(&g, s, d, Metric::HopCount).unwrap().unwrap();
        let base = core_links(&g, &sp.nodes);
        if let Some(l) = core_links(&g, &plans[i].primary.nodes)
            .into_iter()
            .find(|l| base.contains(l) && !targets.contains(l))
        {
            targets.push(l);
        }
        if targets.len() == 2 {
            break;
        }
    }

    let cfg = SimConfig {
        duration_ms: 4000.0,
        ..SimConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for n_fail in [1, 2] {
        let failures: Vec<_> = targets[..n_fail]
            .iter()
            .map(|&(a, b)| FailureEvent::new(g.id(a).clone(), g.id(b).clone(), 500.0))
            .collect();
        let tel = run_flow_sim(&g, &plans, &demands, &failures, Mode::Tel, cfg).unwrap();
        let affected = tel.flows.iter().filter(|f| !f.outages.is_empty()).count();
        for cp in [500.0, 1000.0] {
            let mode = Mode::Baseline(BaselineConfig {
                metric: Metric::HopCount,
                control_plane_delay_ms: cp,
            });
            let base = run_flow_sim(&g, &plans, &demands, &failures, mode, cfg).unwrap();
            let (t, b) = (fct_sorted(&tel), fct_sorted(&base));
            let dominated = (1..=9)
                .all(|k| quantile(&t, k as f64 / 10.0) <= quantile(&b, k as f64 / 10.0) + 1e-9);
            let worst_tel = t.last().copied().unwrap_or(0.0);
            let worst_base = b.last().copied().unwrap_or(0.0);
            ok &= dominated && affected > 0;
            parts.push(format!(
                "{n_fail} failure(s) cp {cp}: {affected} TEL flows interrupted, max FCT {worst_tel:.1} vs {worst_base:.1} ms, dominated {dominated}"
            ));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    (ok, format!("{name} [{}] {elapsed:.2?}", parts.join("; ")))
}

fn criterion_4(solved: &mut Vec<Solved>) -> Outcome {
    let (a, da) = fct_topology("Goodnet", 41, solved);
    let (b, db) = fct_topology("AttMpls", 42, solved);
    Outcome {
        pass: a && b,
        detail: format!("{da} | {db}"),
    }
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5(solved: &[Solved]) -> Outcome {
    let mut violations = 0;
    let mut first = String::new();
    for s in solved {
        let report = validate_plans(&s.graph, &s.plans, &CapacityPolicy::default());
        if !report.is_clean() {
            violations += report.total();
            if first.is_empty() {
                first = format!(", first in {}: {:?}", s.label, report);
            }
        }
        for plan in &s.plans {
            if let Some(b) = &plan.backup {
                let r = tel_core::constraints::check_delay(&s.graph, b, plan.demand.max_delay_ms);
                if !r.pass {
                    violations += 1;
                }
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!(
            "{} solved scenarios checked, {violations} violations{first}",
            solved.len()
        ),
    }
}

// ---------------------------------------------------------------- criterion 6

fn diamond() -> NetworkGraph {
    let mut g = NetworkGraph::new();
    for n in ["A", "B", "C", "D"] {
        g.add_node(n, NodeKind::Switch).unwrap();
    }
    let spec = LinkSpec::new(4.5e6, 1.0, 1.0);
    for (a, b) in [("A", "B"), ("B", "D"), ("A", "C"), ("C", "D")] {
        g.add_link(g.lookup(a).unwrap(), g.lookup(b).unwrap(), &spec)
            .unwrap();
    }
    g
}

fn fixed_plan(g: &NetworkGraph, primary: &[&str], backup: &[&str]) -> PathPlan {
    let path = |ns: &[&str]| {
        let nodes = ns.iter().map(|n| g.lookup(n).unwrap()).collect();
        PathCandidate::from_nodes(g, nodes, &Default::default()).unwrap()
    };
    let p = path(primary);
    PathPlan {
        demand: FlowDemand::new(primary[0], *primary.last().unwrap(), 1e6),
        exploration_log: vec![p.clone()],
        primary: p,
        backup: Some(path(backup)),
        flow_set: None,
    }
}

fn criterion_6() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();

    // diamond with paths in both directions
    let g = diamond();
    let mut plans = vec![
        fixed_plan(&g, &["A", "B", "D"], &["A", "C", "D"]),
        fixed_plan(&g, &["D", "B", "A"], &["D", "C", "A"]),
    ];
    assign_flow_set_ids(&mut plans, Some(128)).unwrap();
    let report = memory_cost(&g, &plans, &[FailureScenario::single("A", "B")]).unwrap();
    let bits: Vec<(String, u32)> = report
        .switches
        .iter()
        .map(|s| (s.switch.to_string(), s.total_bits()))
        .collect();
    let diamond_ok = report.width_bits == 7
        && report.affected_per_failure == vec![2]
        && bits
            == [
                ("A".into(), 65),
                ("B".into(), 8),
                ("C".into(), 8),
                ("D".into(), 65),
            ];
    ok &= diamond_ok;
    parts.push(format!("diamond bits {bits:?}"));

    let mut rule_ok = true;
    for plan in &plans {
        let extra = additional_rules(&g, std::slice::from_ref(plan)).unwrap();
        let backup_only: Vec<NodeIx> = plan
            .backup
            .as_ref()
            .unwrap()
            .nodes
            .iter()
            .copied()
            .filter(|n| !plan.primary.nodes.contains(n))
            .collect();
        for (sw, n) in &extra {
            let ix = g.resolve(sw).unwrap();
            let want = if backup_only.contains(&ix) { 2 } else { 1 };
            rule_ok &= *n == want;
        }
        rule_ok &= backup_only.iter().all(|n| extra.get(g.id(*n)) == Some(&2));
    }
    ok &= rule_ok;
    parts.push(format!(
        "rules per backup: backup-only switch +2 (table_1 + table_2), divergence switch +1 table_2: {rule_ok}"
    ));

    // 7-bit scenario on AttMpls with 35 plans
    let g = topology("AttMpls");
    let demands = random_demands(&g, 35, 1e6, 31).unwrap();
    let mut work = g.clone();
    let mut plans = select_paths(&mut work, &demands, &SolverConfig::new(500, 35, 31))
        .unwrap()
        .into_plans();
    assign_flow_set_ids(&mut plans, Some(128)).unwrap();
    let zero = memory_cost(&g, &plans, &[]).unwrap();
    let zero_ok = zero.width_bits == 7
        && zero
            .switches
            .iter()
            .all(|s| s.base_bits == 8 && s.extra_bits == 0);
    ok &= zero_ok;
    parts.push(format!(
        "7-bit scenario, no failure: 8 bits on all {} switches {zero_ok}",
        zero.switches.len()
    ));

    let mut single_ok = false;
    for plan in &plans {
        let Some((a, b)) = core_links(&g, &plan.primary.nodes).first().copied() else {
            continue;
        };
        let users = plans.iter().filter(|p| p.primary.uses_edge(a, b)).count();
        if users != 1 || plan.backup.is_none() {
            continue;
        }
        let r = memory_cost(
            &g,
            &plans,
            &[FailureScenario::single(g.id(a).clone(), g.id(b).clone())],
        )
        .unwrap();
        if r.affected_per_failure == vec![1] {
            let extra: Vec<u32> = r
                .switches
                .iter()
                .map(|s| s.extra_bits)
                .filter(|&e| e > 0)
                .collect();
            let affected = r.switches.iter().find(|s| s.extra_bits > 0).unwrap();
            single_ok = extra == [57] && affected.total_bits() == 65;
            parts.push(format!(
                "failure of {}-{}: {} reports {} extra bits ({} total)",
                g.id(a),
                g.id(b),
                affected.switch,
                affected.extra_bits,
                affected.total_bits()
            ));
            break;
        }
    }
    ok &= single_ok;
    Outcome {
        pass: ok,
        detail: parts.join("; "),
    }
}

// ---------------------------------------------------------------- criterion 7

fn topology_files() -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(TOPOLOGY_DIR)
        .unwrap()
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "graphml").then(|| p.file_stem()?.to_str().map(String::from))?
        })
        .collect();
    v.sort();
    v
}

fn criterion_7(scenarios: &[Solved]) -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut count = 0;
    let mut worst = (String::new(), 0.0f64);
    let mut sparse_deltas = Vec::new();
    for name in topology_files() {
        let g = topology(&name);
        let links = g.undirected_link_count() - g.host_count();
        if !(5..=250).contains(&links) {
            continue;
        }
        let stats = hop_comparison(&name, &g, &SolverConfig::new(500, 1, 7), 200, 7).unwrap();
        count += 1;
        let ratio = stats.primary_ratio();
        ok &= ratio <= 1.2;
        if ratio > worst.1 {
            worst = (name.clone(), ratio);
        }
        if let Some(b) = stats.tel_backup_mean {
            sparse_deltas.push(format!("{name} {:+.2}", b - stats.tel_primary_mean));
        }
    }
    ok &= count >= 10;

    let mut fig8 = Vec::new();
    for s in scenarios {
        let with_backup: Vec<&PathPlan> = s.plans.iter().filter(|p| p.backup.is_some()).collect();
        let n = with_backup.len() as f64;
        let p = with_backup
            .iter()
            .map(|p| p.primary.switch_hops(&s.graph))
            .sum::<usize>() as f64
            / n;
        let b = with_backup
            .iter()
            .map(|p| p.backup.as_ref().unwrap().switch_hops(&s.graph))
            .sum::<usize>() as f64
            / n;
        ok &= n > 0.0 && (b - p).abs() <= 2.0;
        fig8.push(format!("{} primary {p:.2} backup {b:.2}", s.label));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(300);
    Outcome {
        pass: ok,
        detail: format!(
            "{count} topologies, worst primary/baseline hop ratio {:.3} ({}); {}; all-graph backup minus primary: {}; {elapsed:.2?}",
            worst.1,
            worst.0,
            fig8.join("; "),
            sparse_deltas.join(", ")
        ),
    }
}

// ---------------------------------------------------------------- criterion 8

fn throughput_scenario(name: &str, k: usize, seed: u64) -> Solved {
    let g = topology(name);
    let demands = random_demands(&g, k, 1e6, seed).unwrap();
    let mut work = g.clone();
    let mut plans = select_paths(&mut work, &demands, &SolverConfig::new(500, k, seed))
        .unwrap()
        .into_plans();
    assign_flow_set_ids(&mut plans, None).unwrap();
    Solved {
        label: format!("{name} throughput scenario"),
        graph: g,
        plans,
    }
}

fn criterion_8(scenarios: &[Solved]) -> (Outcome, bool) {
    let mut ok = true;
    let mut complete = true;
    let mut parts = Vec::new();
    for s in scenarios {
        let g = &s.graph;
        complete &= s.plans.len()
            == if s.label.starts_with("Goodnet") {
                25
            } else {
                35
            };
        let demands: Vec<FlowDemand> = s.plans.iter().map(|p| p.demand.clone()).collect();
        let mut failures = Vec::new();
        let mut means = Vec::new();
        for i in 0..=2 {
            if i > 0 {
                let (a, b) = core_links(g, &s.plans[i - 1].primary.nodes)[0];
                failures.push(FailureEvent::new(g.id(a).clone(), g.id(b).clone(), 5000.0));
            }
            let m = run_flow_sim(
                g,
                &s.plans,
                &demands,
                &failures,
                Mode::Tel,
                SimConfig::default(),
            )
            .unwrap();
            means.push(m.mean_throughput_bps());
        }
        ok &= means.windows(2).all(|w| w[1] <= w[0] * 1.01);
        parts.push(format!(
            "{}: {} plans, mean per-path throughput {} bps",
            s.label,
            s.plans.len(),
            means
                .iter()
                .map(|m| format!("{m:.0}"))
                .collect::<Vec<_>>()
                .join(" / ")
        ));
    }
    (
        Outcome {
            pass: ok && complete,
            detail: parts.join("; "),
        },
        complete,
    )
}

// ---------------------------------------------------------------- criterion 9

fn walk_rules(
    g: &NetworkGraph,
    rules: &HashMap<NodeId, tel_core::rulegen::SwitchRuleSet>,
    src: NodeIx,
    dst: NodeIx,
) -> Option<Vec<NodeIx>> {
    let (sa, da) = (node_address(src), node_address(dst));
    let mut nodes = vec![src];
    let mut u = src;
    while u != dst {
        if nodes.len() > g.node_count() {
            return None;
        }
        let v = if !g.is_switch(u) {
            g.attachment(u)?
        } else {
            let rs = rules.get(g.id(u))?;
            let fs = rs.lookup_flow_set(sa, da)?;
            let status = rs.register.status(fs).unwrap_or(0);
            let (port, _) = rs.lookup_forward(fs, status)?;
            g.neighbor_on_port(u, port as usize)?
        };
        nodes.push(v);
        u = v;
    }
    Some(nodes)
}

fn criterion_9(solved: &[Solved]) -> Outcome {
    let mut checked = 0;
    let mut mismatches = 0;
    for s in solved {
        let rules = compile_rules(&s.graph, &s.plans).unwrap();
        let normal: HashMap<_, _> = rules
            .iter()
            .map(|r| (r.switch.clone(), r.clone()))
            .collect();
        for plan in &s.plans {
            let (src, dst) = (
                plan.primary.source().unwrap(),
                plan.primary.destination().unwrap(),
            );
            checked += 1;
            if walk_rules(&s.graph, &normal, src, dst).as_deref() != Some(&plan.primary.nodes[..]) {
                mismatches += 1;
            }
            if let Some(backup) = &plan.backup {
                let id = plan.flow_set.unwrap().value;
                let flipped: HashMap<_, _> = apply_failure_to_rules(&rules, &BTreeSet::from([id]))
                    .unwrap()
                    .into_iter()
                    .map(|r| (r.switch.clone(), r))
                    .collect();
                checked += 1;
                if walk_rules(&s.graph, &flipped, src, dst).as_deref() != Some(&backup.nodes[..]) {
                    mismatches += 1;
                }
            }
        }
    }
    Outcome {
        pass: mismatches == 0 && checked > 0,
        detail: format!("{checked} primary/backup routes replayed through compiled rules, {mismatches} mismatches"),
    }
}

fn main() {
    let mut solved = Vec::new();
    let mut results = Vec::new();
    let mut run = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let out = f();
        println!(
            "criterion {id} {name}: {} | {}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
        results.push(out.pass);
    };

    run(1, "LA mechanics", &mut criterion_1);
    run(2, "oracle optimality", &mut || criterion_2(&mut solved));
    run(3, "simple-topology failover", &mut || {
        criterion_3(&mut solved)
    });
    run(4, "FCT dominance", &mut || criterion_4(&mut solved));
    let scenarios = vec![
        throughput_scenario("Goodnet", 25, 25),
        throughput_scenario("AttMpls", 35, 31),
    ];
    run(5, "constraint safety", &mut || {
        let mut all: Vec<&Solved> = solved.iter().collect();
        all.extend(scenarios.iter());
        let owned: Vec<Solved> = all
            .into_iter()
            .map(|s| Solved {
                label: s.label.clone(),
                graph: s.graph.clone(),
                plans: s.plans.clone(),
            })
            .collect();
        criterion_5(&owned)
    });
    run(6, "memory accounting", &mut criterion_6);
    run(7, "hop parity", &mut || criterion_7(&scenarios));
    run(8, "throughput degradation", &mut || {
        criterion_8(&scenarios).0
    });
    run(9, "compilation soundness", &mut || {
        let mut all: Vec<Solved> = solved
            .iter()
            .map(|s| Solved {
                label: s.label.clone(),
                graph: s.graph.clone(),
                plans: s.plans.clone(),
            })
            .collect();
        all.extend(scenarios.iter().map(|s| Solved {
            label: s.label.clone(),
            graph: s.graph.clone(),
            plans: s.plans.clone(),
        }));
        criterion_9(&all)
    });

    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
