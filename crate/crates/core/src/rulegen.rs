//! Compilation of path plans into two match-action tables and a per-switch
//! path status register.
//!
//! `table_1` maps `(src address, dst address)` to a flow_set id. `table_2`
//! maps `(flow_set, status bit)` to an egress port and next-hop MAC. The
//! status bit of a flow_set selects the primary (0) or backup (1) entries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::dla::{PathCandidate, PathPlan};
use crate::error::{Error, Result};
use crate::topology::{NetworkGraph, NodeId, NodeIx};

/// Bits of a table-two egress port.
pub const EGRESS_PORT_BITS: u32 = 9;
/// Bits of a next-hop MAC address.
pub const MAC_BITS: u32 = 48;
pub const MAX_EGRESS_PORT: usize = (1 << EGRESS_PORT_BITS) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowSetId {
    pub value: u32,
    pub width_bits: u8,
}

impl fmt::Display for FlowSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.value, self.width_bits)
    }
}

/// `max(1, ceil(log2 count))`.
pub fn flow_set_width(count: usize) -> u8 {
    if count <= 2 {
        return 1;
    }
    (usize::BITS - (count - 1).leading_zeros()) as u8
}

/// Numbers plans `0..k` in order. With `capacity` set the id width is sized
/// for `capacity` plans rather than for `k`.
pub fn assign_flow_set_ids(plans: &mut [PathPlan], capacity: Option<usize>) -> Result<u8> {
    if plans.is_empty() {
        return Err(Error::Config("no plans to number".into()));
    }
    let k = plans.len();
    let width = match capacity {
        Some(cap) if k > cap => {
            return Err(Error::FlowSetCapacity {
                plans: k,
                width: flow_set_width(cap),
                capacity: cap,
            })
        }
        Some(cap) => flow_set_width(cap),
        None => flow_set_width(k),
    };
    for (i, plan) in plans.iter_mut().enumerate() {
        plan.flow_set = Some(FlowSetId {
            value: i as u32,
            width_bits: width,
        });
    }
    Ok(width)
}

/// Synthetic IPv4 address of a node.
pub fn node_address(n: NodeIx) -> Ipv4Addr {
    let i = n.index() + 1;
    Ipv4Addr::new(10, 0, (i >> 8) as u8, (i & 0xff) as u8)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub u64);

impl MacAddr {
    pub fn of(n: NodeIx) -> Self {
        MacAddr(0x0200_0000_0000 | (n.index() as u64 + 1))
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0.to_be_bytes();
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[2], b[3], b[4], b[5], b[6], b[7]
        )
    }
}

impl Serialize for MacAddr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let hex: String = text.split(':').collect();
        if hex.len() != 12 {
            return Err(serde::de::Error::custom(format!(
                "bad MAC address `{text}`"
            )));
        }
        u64::from_str_radix(&hex, 16)
            .map(MacAddr)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Table {
    #[serde(rename = "table_1")]
    One,
    #[serde(rename = "table_2")]
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchKey {
    Addresses { src: Ipv4Addr, dst: Ipv4Addr },
    FlowSet { flow_set: u32, status: u8 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    SetFlowSet {
        flow_set: u32,
        width_bits: u8,
    },
    Forward {
        egress_port: u16,
        next_hop_mac: MacAddr,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub table: Table,
    #[serde(rename = "match")]
    pub key: MatchKey,
    pub action: Action,
}

/// One bit per installed flow_set: `false` selects primary entries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStatusRegister {
    pub bits: BTreeMap<u32, bool>,
}

impl PathStatusRegister {
    pub fn status(&self, flow_set: u32) -> Option<u8> {
        self.bits.get(&flow_set).map(|&b| b as u8)
    }

    /// Bit vector as hex, bit `i` holding flow_set `i`, most significant
    /// nibble first.
    pub fn to_hex(&self) -> String {
        let len = self.bits.keys().next_back().map_or(1, |&m| m as usize + 1);
        let nibbles = len.div_ceil(4);
        (0..nibbles)
            .rev()
            .map(|n| {
                let v = (0..4).fold(0u32, |acc, b| {
                    let id = (n * 4 + b) as u32;
                    acc | ((self.bits.get(&id).copied().unwrap_or(false) as u32) << b)
                });
                char::from_digit(v, 16).unwrap()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchRuleSet {
    pub switch: NodeId,
    pub entries: Vec<TableEntry>,
    pub register: PathStatusRegister,
}

impl SwitchRuleSet {
    fn new(switch: NodeId) -> Self {
        Self {
            switch,
            entries: Vec::new(),
            register: PathStatusRegister::default(),
        }
    }

    pub fn lookup_flow_set(&self, src: Ipv4Addr, dst: Ipv4Addr) -> Option<u32> {
        self.entries.iter().find_map(|e| match (e.key, e.action) {
            (MatchKey::Addresses { src: s, dst: d }, Action::SetFlowSet { flow_set, .. })
                if s == src && d == dst =>
            {
                Some(flow_set)
            }
            _ => None,
        })
    }

    pub fn lookup_forward(&self, flow_set: u32, status: u8) -> Option<(u16, MacAddr)> {
        self.entries.iter().find_map(|e| match (e.key, e.action) {
            (
                MatchKey::FlowSet {
                    flow_set: f,
                    status: s,
                },
                Action::Forward {
                    egress_port,
                    next_hop_mac,
                },
            ) if f == flow_set && s == status => Some((egress_port, next_hop_mac)),
            _ => None,
        })
    }

    pub fn count(&self, table: Table) -> usize {
        self.entries.iter().filter(|e| e.table == table).count()
    }

    fn insert(&mut self, entry: TableEntry) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|e| e.table == entry.table && e.key == entry.key)
        {
            Some(existing) if existing.action != entry.action => Err(Error::Consistency(format!(
                "conflicting {:?} entries for {:?} at {}",
                entry.table, entry.key, self.switch
            ))),
            Some(_) => Ok(()),
            None => {
                self.entries.push(entry);
                Ok(())
            }
        }
    }

    fn canonicalize(&mut self) {
        self.entries.sort_by_key(|a| (a.table, a.key));
    }
}

/// JSON-lines record of one table entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub switch: NodeId,
    pub table: Table,
    #[serde(rename = "match")]
    pub key: MatchKey,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterRecord {
    pub switch: NodeId,
    pub bits: String,
}

pub fn rule_records(rulesets: &[SwitchRuleSet]) -> Vec<RuleRecord> {
    rulesets
        .iter()
        .flat_map(|rs| {
            rs.entries.iter().map(move |e| RuleRecord {
                switch: rs.switch.clone(),
                table: e.table,
                key: e.key,
                action: e.action,
            })
        })
        .collect()
}

pub fn register_records(rulesets: &[SwitchRuleSet]) -> Vec<RegisterRecord> {
    rulesets
        .iter()
        .map(|rs| RegisterRecord {
            switch: rs.switch.clone(),
            bits: rs.register.to_hex(),
        })
        .collect()
}

fn forward_entry(
    graph: &NetworkGraph,
    u: NodeIx,
    v: NodeIx,
    fs: FlowSetId,
    status: u8,
) -> Result<TableEntry> {
    let port = graph.port_of(u, v).ok_or_else(|| {
        Error::GraphInconsistency(format!(
            "{} is not adjacent to {}",
            graph.id(v),
            graph.id(u)
        ))
    })?;
    if port > MAX_EGRESS_PORT {
        return Err(Error::GraphInconsistency(format!(
            "{} has more than {} ports",
            graph.id(u),
            MAX_EGRESS_PORT + 1
        )));
    }
    Ok(TableEntry {
        table: Table::Two,
        key: MatchKey::FlowSet {
            flow_set: fs.value,
            status,
        },
        action: Action::Forward {
            egress_port: port as u16,
            next_hop_mac: MacAddr::of(v),
        },
    })
}

fn emit_path(
    graph: &NetworkGraph,
    path: &PathCandidate,
    classify: TableEntry,
    fs: FlowSetId,
    status: u8,
    sets: &mut BTreeMap<NodeIx, SwitchRuleSet>,
) -> Result<()> {
    for w in path.nodes.windows(2) {
        let (u, v) = (w[0], w[1]);
        if !graph.is_switch(u) {
            continue;
        }
        let rs = sets
            .entry(u)
            .or_insert_with(|| SwitchRuleSet::new(graph.id(u).clone()));
        rs.insert(classify)?;
        rs.insert(forward_entry(graph, u, v, fs, status)?)?;
        rs.register.bits.insert(fs.value, false);
    }
    Ok(())
}

fn plan_rules(
    graph: &NetworkGraph,
    plan: &PathPlan,
    sets: &mut BTreeMap<NodeIx, SwitchRuleSet>,
) -> Result<()> {
    let fs = plan.flow_set.ok_or_else(|| {
        Error::Config(format!(
            "plan {} -> {} has no flow_set id",
            plan.demand.src, plan.demand.dst
        ))
    })?;
    let (s, d) = match (plan.primary.source(), plan.primary.destination()) {
        (Some(s), Some(d)) if s != d => (s, d),
        _ => {
            return Err(Error::Consistency(
                "primary path has fewer than two nodes".into(),
            ))
        }
    };
    let classify = TableEntry {
        table: Table::One,
        key: MatchKey::Addresses {
            src: node_address(s),
            dst: node_address(d),
        },
        action: Action::SetFlowSet {
            flow_set: fs.value,
            width_bits: fs.width_bits,
        },
    };
    emit_path(graph, &plan.primary, classify, fs, 0, sets)?;
    if let Some(backup) = &plan.backup {
        if backup.source() != Some(s) || backup.destination() != Some(d) {
            return Err(Error::Consistency(
                "backup endpoints differ from the primary's".into(),
            ));
        }
        emit_path(graph, backup, classify, fs, 1, sets)?;
    }
    Ok(())
}

fn finish(sets: BTreeMap<NodeIx, SwitchRuleSet>) -> Vec<SwitchRuleSet> {
    sets.into_values()
        .map(|mut rs| {
            rs.canonicalize();
            rs
        })
        .collect()
}

/// Rules of a single plan, one set per switch that carries it.
pub fn generate_rules(graph: &NetworkGraph, plan: &PathPlan) -> Result<Vec<SwitchRuleSet>> {
    let mut sets = BTreeMap::new();
    plan_rules(graph, plan, &mut sets)?;
    Ok(finish(sets))
}

/// Rules of every plan merged per switch, in node order.
pub fn compile_rules(graph: &NetworkGraph, plans: &[PathPlan]) -> Result<Vec<SwitchRuleSet>> {
    let mut sets = BTreeMap::new();
    for plan in plans {
        plan_rules(graph, plan, &mut sets)?;
    }
    Ok(finish(sets))
}

/// Sets the status bit of every id in `failed` on every switch holding it.
pub fn apply_failure_to_rules(
    rulesets: &[SwitchRuleSet],
    failed: &BTreeSet<u32>,
) -> Result<Vec<SwitchRuleSet>> {
    for id in failed {
        if !rulesets.iter().any(|rs| rs.register.bits.contains_key(id)) {
            return Err(Error::UnknownFlowSet(*id));
        }
    }
    Ok(rulesets
        .iter()
        .map(|rs| {
            let mut rs = rs.clone();
            for (id, bit) in rs.register.bits.iter_mut() {
                if failed.contains(id) {
                    *bit = true;
                }
            }
            rs
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureScenario {
    pub links: Vec<(NodeId, NodeId)>,
}

impl FailureScenario {
    pub fn single(a: impl Into<NodeId>, b: impl Into<NodeId>) -> Self {
        Self {
            links: vec![(a.into(), b.into())],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchMemory {
    pub switch: NodeId,
    pub base_bits: u32,
    pub extra_bits: u32,
}

impl SwitchMemory {
    pub fn total_bits(&self) -> u32 {
        self.base_bits + self.extra_bits
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub width_bits: u8,
    pub switches: Vec<SwitchMemory>,
    /// Failure-handling switch count of each failure scenario.
    pub affected_per_failure: Vec<usize>,
}

impl MemoryReport {
    pub fn get(&self, switch: &str) -> Option<&SwitchMemory> {
        self.switches.iter().find(|s| s.switch.as_str() == switch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("switch,base_bits,extra_bits\n");
        for s in &self.switches {
            out.push_str(&format!("{},{},{}\n", s.switch, s.base_bits, s.extra_bits));
        }
        out
    }
}

/// Switches on both paths where the backup leaves the primary's next hop.
pub fn divergence_switches(graph: &NetworkGraph, plan: &PathPlan) -> Vec<NodeIx> {
    let Some(backup) = &plan.backup else {
        return Vec::new();
    };
    backup
        .nodes
        .windows(2)
        .filter(|w| graph.is_switch(w[0]))
        .filter(|w| matches!(plan.primary.next_hop(w[0]), Some(p) if p != w[1]))
        .map(|w| w[0])
        .collect()
}

/// Per-switch register memory. Every switch stores a flow_set id plus one
/// status bit. A switch that has to steer a failed plan onto its backup
/// additionally stores an egress port and a next-hop MAC per such plan.
pub fn memory_cost(
    graph: &NetworkGraph,
    plans: &[PathPlan],
    failures: &[FailureScenario],
) -> Result<MemoryReport> {
    let width = plans
        .iter()
        .map(|p| p.flow_set.map(|f| f.width_bits))
        .collect::<Option<BTreeSet<_>>>()
        .ok_or_else(|| Error::Config("memory accounting needs flow_set ids".into()))?;
    let width = match width.len() {
        0 => 1,
        1 => *width.iter().next().unwrap(),
        _ => {
            return Err(Error::Consistency(
                "plans carry differing flow_set widths".into(),
            ))
        }
    };

    let mut handled: HashMap<NodeIx, BTreeSet<usize>> = HashMap::new();
    let mut affected_per_failure = Vec::with_capacity(failures.len());
    for failure in failures {
        let edges = failure
            .links
            .iter()
            .map(|(a, b)| Ok((graph.resolve(a)?, graph.resolve(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut affected = BTreeSet::new();
        for (i, plan) in plans.iter().enumerate() {
            if !edges.iter().any(|&(a, b)| plan.primary.uses_edge(a, b)) {
                continue;
            }
            for sw in divergence_switches(graph, plan) {
                affected.insert(sw);
                handled.entry(sw).or_default().insert(i);
            }
        }
        affected_per_failure.push(affected.len());
    }

    let per_plan = EGRESS_PORT_BITS + MAC_BITS;
    let switches = graph
        .switches()
        .map(|sw| SwitchMemory {
            switch: graph.id(sw).clone(),
            base_bits: width as u32 + 1,
            extra_bits: handled.get(&sw).map_or(0, |p| p.len() as u32 * per_plan),
        })
        .collect();
    Ok(MemoryReport {
        width_bits: width,
        switches,
        affected_per_failure,
    })
}

/// Entries each switch gains when backups are compiled, relative to a
/// primary-only compilation of the same plans.
pub fn additional_rules(
    graph: &NetworkGraph,
    plans: &[PathPlan],
) -> Result<BTreeMap<NodeId, usize>> {
    let with = compile_rules(graph, plans)?;
    let stripped: Vec<PathPlan> = plans
        .iter()
        .map(|p| PathPlan {
            backup: None,
            ..p.clone()
        })
        .collect();
    let without = compile_rules(graph, &stripped)?;
    let before: HashMap<&NodeId, usize> = without
        .iter()
        .map(|rs| (&rs.switch, rs.entries.len()))
        .collect();
    Ok(with
        .iter()
        .map(|rs| {
            let base = before.get(&rs.switch).copied().unwrap_or(0);
            (rs.switch.clone(), rs.entries.len() - base)
        })
        .filter(|(_, n)| *n > 0)
        .collect())
}
