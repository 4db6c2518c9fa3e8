//! Network graph: switches, attached hosts and bi-directed links.
//!
//! Every undirected edge is stored as two directed links that track their
//! residual bandwidth independently. Parallel edges in the input collapse
//! into one link pair whose `multiplicity` counts the original edges.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Switch or host label, unique within a graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Dense index of a node inside one [`NetworkGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIx(pub(crate) usize);

impl NodeIx {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense index of a directed link inside one [`NetworkGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkIx(pub(crate) usize);

impl LinkIx {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Switch,
    Host,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Human readable name carried over from the input, if any.
    pub label: Option<String>,
}

/// Static link parameters supplied by a scenario or read from GraphML.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub bandwidth_bps: f64,
    pub delay_ms: f64,
    pub cost: f64,
}

impl LinkSpec {
    pub fn new(bandwidth_bps: f64, delay_ms: f64, cost: f64) -> Self {
        Self {
            bandwidth_bps,
            delay_ms,
            cost,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.bandwidth_bps.is_finite() && self.bandwidth_bps > 0.0) {
            return Err(Error::Validation(format!(
                "link bandwidth must be positive, got {}",
                self.bandwidth_bps
            )));
        }
        if !(self.delay_ms.is_finite() && self.delay_ms >= 0.0) {
            return Err(Error::Validation(format!(
                "link delay must be non-negative, got {}",
                self.delay_ms
            )));
        }
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(Error::Validation(format!(
                "link cost must be non-negative, got {}",
                self.cost
            )));
        }
        Ok(())
    }
}

/// Per-direction link state.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkAttributes {
    pub bandwidth_bps: f64,
    pub residual_bps: f64,
    pub delay_ms: f64,
    pub cost: f64,
    /// Controller-side byte counter, reset by probe cycles.
    pub bytes_sent: f64,
    pub last_probe_ms: f64,
    /// Number of parallel input edges merged into this link.
    pub multiplicity: u32,
}

impl LinkAttributes {
    pub fn from_spec(spec: &LinkSpec) -> Self {
        Self {
            bandwidth_bps: spec.bandwidth_bps,
            residual_bps: spec.bandwidth_bps,
            delay_ms: spec.delay_ms,
            cost: spec.cost,
            bytes_sent: 0.0,
            last_probe_ms: 0.0,
            multiplicity: 1,
        }
    }

    pub fn spec(&self) -> LinkSpec {
        LinkSpec::new(self.bandwidth_bps, self.delay_ms, self.cost)
    }

    /// Fraction of the capacity already reserved, `B^u / B`.
    pub fn utilization(&self) -> f64 {
        (self.bandwidth_bps - self.residual_bps) / self.bandwidth_bps
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub src: NodeIx,
    pub dst: NodeIx,
    pub attrs: LinkAttributes,
}

/// Share of each link's capacity that engineered traffic may use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CapacityPolicy {
    mu: f64,
}

impl CapacityPolicy {
    pub fn new(mu: f64) -> Result<Self> {
        if mu > 0.0 && mu <= 1.0 {
            Ok(Self { mu })
        } else {
            Err(Error::Config(format!(
                "capacity ratio mu must lie in (0, 1], got {mu}"
            )))
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Bandwidth still admissible on a link under this policy.
    pub fn available(&self, attrs: &LinkAttributes) -> f64 {
        attrs.residual_bps - (1.0 - self.mu) * attrs.bandwidth_bps
    }
}

impl Default for CapacityPolicy {
    fn default() -> Self {
        Self { mu: 1.0 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    by_id: HashMap<NodeId, NodeIx>,
    /// Outgoing (neighbor, link) pairs, sorted by neighbor index.
    out: Vec<Vec<(NodeIx, LinkIx)>>,
    links: Vec<Link>,
    link_index: HashMap<(NodeIx, NodeIx), LinkIx>,
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: impl Into<NodeId>, kind: NodeKind) -> Result<NodeIx> {
        let id = id.into();
        if self.by_id.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate node id `{id}`")));
        }
        let ix = NodeIx(self.nodes.len());
        self.nodes.push(Node {
            id: id.clone(),
            kind,
            label: None,
        });
        self.by_id.insert(id, ix);
        self.out.push(Vec::new());
        Ok(ix)
    }

    /// Adds an undirected edge as a pair of directed links. A second edge
    /// between the same nodes only bumps the multiplicity of the existing pair.
    pub fn add_link(&mut self, a: NodeIx, b: NodeIx, spec: &LinkSpec) -> Result<()> {
        if a == b {
            return Err(Error::Validation(format!(
                "self-loop on node `{}`",
                self.nodes[a.0].id
            )));
        }
        if a.0 >= self.nodes.len() || b.0 >= self.nodes.len() {
            return Err(Error::Validation("link endpoint out of range".into()));
        }
        spec.validate()?;
        if let Some(&l) = self.link_index.get(&(a, b)) {
            let r = self.link_index[&(b, a)];
            self.links[l.0].attrs.multiplicity += 1;
            self.links[r.0].attrs.multiplicity += 1;
            return Ok(());
        }
        for (src, dst) in [(a, b), (b, a)] {
            let l = LinkIx(self.links.len());
            self.links.push(Link {
                src,
                dst,
                attrs: LinkAttributes::from_spec(spec),
            });
            self.link_index.insert((src, dst), l);
            let out = &mut self.out[src.0];
            let pos = out.partition_point(|&(n, _)| n < dst);
            out.insert(pos, (dst, l));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn switch_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Switch)
            .count()
    }

    pub fn host_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Host)
            .count()
    }

    pub fn node_indices(&self) -> impl Iterator<Item = NodeIx> + '_ {
        (0..self.nodes.len()).map(NodeIx)
    }

    pub fn switches(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.node_indices().filter(|&n| self.is_switch(n))
    }

    pub fn hosts(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.node_indices().filter(|&n| !self.is_switch(n))
    }

    pub fn node(&self, n: NodeIx) -> &Node {
        &self.nodes[n.0]
    }

    pub fn id(&self, n: NodeIx) -> &NodeId {
        &self.nodes[n.0].id
    }

    pub fn is_switch(&self, n: NodeIx) -> bool {
        self.nodes[n.0].kind == NodeKind::Switch
    }

    pub fn lookup(&self, id: &str) -> Option<NodeIx> {
        self.by_id.get(&NodeId::from(id)).copied()
    }

    pub fn resolve(&self, id: &NodeId) -> Result<NodeIx> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn neighbors(&self, n: NodeIx) -> &[(NodeIx, LinkIx)] {
        &self.out[n.0]
    }

    pub fn degree(&self, n: NodeIx) -> usize {
        self.out[n.0].len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Directed links counting parallel input edges.
    pub fn directed_link_count(&self) -> usize {
        self.links
            .iter()
            .map(|l| l.attrs.multiplicity as usize)
            .sum()
    }

    /// Undirected edges counting parallel input edges.
    pub fn undirected_link_count(&self) -> usize {
        self.directed_link_count() / 2
    }

    pub fn links(&self) -> impl Iterator<Item = (LinkIx, &Link)> {
        self.links.iter().enumerate().map(|(i, l)| (LinkIx(i), l))
    }

    pub fn link(&self, l: LinkIx) -> &Link {
        &self.links[l.0]
    }

    pub fn attrs_mut(&mut self, l: LinkIx) -> &mut LinkAttributes {
        &mut self.links[l.0].attrs
    }

    pub fn link_between(&self, a: NodeIx, b: NodeIx) -> Option<LinkIx> {
        self.link_index.get(&(a, b)).copied()
    }

    pub fn reverse(&self, l: LinkIx) -> LinkIx {
        let link = &self.links[l.0];
        self.link_index[&(link.dst, link.src)]
    }

    pub fn try_link(&self, a: NodeIx, b: NodeIx) -> Result<LinkIx> {
        self.link_between(a, b)
            .ok_or_else(|| Error::UnknownLink(self.id(a).to_string(), self.id(b).to_string()))
    }

    pub fn attrs(&self, a: NodeIx, b: NodeIx) -> Result<&LinkAttributes> {
        Ok(&self.links[self.try_link(a, b)?.0].attrs)
    }

    /// `B^u / B` for the directed link `a -> b`.
    pub fn link_utilization(&self, a: NodeIx, b: NodeIx) -> Result<f64> {
        Ok(self.attrs(a, b)?.utilization())
    }

    /// Egress port of `a` facing `b`: position of `b` in `a`'s sorted neighbor list.
    pub fn port_of(&self, a: NodeIx, b: NodeIx) -> Option<usize> {
        self.out[a.0].iter().position(|&(n, _)| n == b)
    }

    pub fn neighbor_on_port(&self, a: NodeIx, port: usize) -> Option<NodeIx> {
        self.out[a.0].get(port).map(|&(n, _)| n)
    }

    /// Switch a host is attached to.
    pub fn attachment(&self, host: NodeIx) -> Option<NodeIx> {
        if self.is_switch(host) {
            return None;
        }
        self.out[host.0].first().map(|&(n, _)| n)
    }

    /// Hosts attached to a switch.
    pub fn hosts_of(&self, switch: NodeIx) -> impl Iterator<Item = NodeIx> + '_ {
        self.out[switch.0]
            .iter()
            .map(|&(n, _)| n)
            .filter(|&n| !self.is_switch(n))
    }

    /// Restores every residual to the full link bandwidth.
    pub fn reset_residuals(&mut self) {
        for l in &mut self.links {
            l.attrs.residual_bps = l.attrs.bandwidth_bps;
        }
    }

    /// Checks the structural invariants every graph must satisfy.
    pub fn validate(&self) -> Result<()> {
        for (i, link) in self.links.iter().enumerate() {
            if link.src == link.dst {
                return Err(Error::Validation("self-loop".into()));
            }
            if !self.link_index.contains_key(&(link.dst, link.src)) {
                return Err(Error::Validation(format!(
                    "link {} -> {} has no reverse",
                    self.id(link.src),
                    self.id(link.dst)
                )));
            }
            let a = &link.attrs;
            if !(a.residual_bps >= -1e-6 && a.residual_bps <= a.bandwidth_bps + 1e-6) {
                return Err(Error::Validation(format!(
                    "link #{i} residual {} outside [0, {}]",
                    a.residual_bps, a.bandwidth_bps
                )));
            }
        }
        Ok(())
    }

    /// Connects one host to every switch. Host names are `h` followed by the
    /// switch id. Rejected when the graph already has hosts.
    pub fn attach_hosts(&mut self, spec: &LinkSpec) -> Result<()> {
        if self.host_count() > 0 {
            return Err(Error::Validation("graph already has hosts attached".into()));
        }
        let switches: Vec<NodeIx> = self.switches().collect();
        for s in switches {
            let name = format!("h{}", self.id(s));
            let h = self.add_node(name.as_str(), NodeKind::Host)?;
            self.add_link(h, s, spec)?;
        }
        Ok(())
    }

    /// Loads a GraphML document. Edges without `bandwidth_bps`, `delay_ms` or
    /// `cost` data take the corresponding value from `defaults`.
    pub fn from_graphml(text: &str, defaults: &LinkSpec) -> Result<Self> {
        load_graphml(text, defaults)
    }

    pub fn to_graphml(&self) -> String {
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
        s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        s.push_str("  <key attr.name=\"kind\" attr.type=\"string\" for=\"node\" id=\"kind\" />\n");
        s.push_str(
            "  <key attr.name=\"label\" attr.type=\"string\" for=\"node\" id=\"label\" />\n",
        );
        s.push_str(
            "  <key attr.name=\"bandwidth_bps\" attr.type=\"double\" for=\"edge\" id=\"bw\" />\n",
        );
        s.push_str(
            "  <key attr.name=\"delay_ms\" attr.type=\"double\" for=\"edge\" id=\"delay\" />\n",
        );
        s.push_str("  <key attr.name=\"cost\" attr.type=\"double\" for=\"edge\" id=\"cost\" />\n");
        s.push_str("  <graph edgedefault=\"undirected\">\n");
        for node in &self.nodes {
            let kind = match node.kind {
                NodeKind::Switch => "switch",
                NodeKind::Host => "host",
            };
            let _ = write!(
                s,
                "    <node id=\"{}\">\n      <data key=\"kind\">{kind}</data>\n",
                xml_escape(node.id.as_str())
            );
            if let Some(label) = &node.label {
                let _ = writeln!(s, "      <data key=\"label\">{}</data>", xml_escape(label));
            }
            s.push_str("    </node>\n");
        }
        for link in &self.links {
            if link.src > link.dst {
                continue;
            }
            let a = &link.attrs;
            for _ in 0..a.multiplicity {
                let _ = write!(
                    s,
                    "    <edge source=\"{}\" target=\"{}\">\n      <data key=\"bw\">{}</data>\n      <data key=\"delay\">{}</data>\n      <data key=\"cost\">{}</data>\n    </edge>\n",
                    xml_escape(self.id(link.src).as_str()),
                    xml_escape(self.id(link.dst).as_str()),
                    a.bandwidth_bps,
                    a.delay_ms,
                    a.cost
                );
            }
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }

    /// JSON summary `{nodes, links: [{src, dst, bw_bps, delay_ms, cost}]}`.
    /// Links are listed in `(src, dst)` order.
    pub fn summary(&self) -> GraphSummary {
        let mut summary = GraphSummary {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSummary {
                    id: n.id.clone(),
                    kind: n.kind,
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| LinkSummary {
                    src: self.id(l.src).clone(),
                    dst: self.id(l.dst).clone(),
                    bw_bps: l.attrs.bandwidth_bps,
                    delay_ms: l.attrs.delay_ms,
                    cost: l.attrs.cost,
                })
                .collect(),
        };
        summary
            .links
            .sort_by(|a, b| (&a.src, &a.dst).cmp(&(&b.src, &b.dst)));
        summary
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub src: NodeId,
    pub dst: NodeId,
    pub bw_bps: f64,
    pub delay_ms: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: Vec<NodeSummary>,
    pub links: Vec<LinkSummary>,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn line_of(doc: &roxmltree::Document<'_>, node: roxmltree::Node<'_, '_>) -> u32 {
    doc.text_pos_at(node.range().start).row
}

pub fn load_graphml(text: &str, defaults: &LinkSpec) -> Result<NetworkGraph> {
    defaults.validate()?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::MalformedInput {
        line: e.pos().row,
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "graphml" {
        return Err(Error::MalformedInput {
            line: line_of(&doc, root),
            message: format!(
                "expected <graphml> root, found <{}>",
                root.tag_name().name()
            ),
        });
    }

    // key id -> attribute name
    let mut keys: HashMap<&str, &str> = HashMap::new();
    for key in root.children().filter(|n| n.tag_name().name() == "key") {
        if let (Some(id), Some(name)) = (key.attribute("id"), key.attribute("attr.name")) {
            keys.insert(id, name);
        }
    }
    let data_of = |n: roxmltree::Node<'_, '_>| -> HashMap<String, String> {
        n.children()
            .filter(|c| c.tag_name().name() == "data")
            .filter_map(|c| {
                let key = c.attribute("key")?;
                let name = keys.get(key).copied().unwrap_or(key);
                Some((name.to_owned(), c.text().unwrap_or("").trim().to_owned()))
            })
            .collect()
    };

    let mut graph = NetworkGraph::new();
    let Some(g) = root.children().find(|n| n.tag_name().name() == "graph") else {
        return Ok(graph);
    };

    for node in g.children().filter(|n| n.tag_name().name() == "node") {
        let line = line_of(&doc, node);
        let id = node.attribute("id").ok_or_else(|| Error::MalformedInput {
            line,
            message: "<node> without id".into(),
        })?;
        let data = data_of(node);
        let kind = match data.get("kind").map(String::as_str) {
            Some("host") => NodeKind::Host,
            _ => NodeKind::Switch,
        };
        let ix = graph.add_node(id, kind).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
            other => other,
        })?;
        graph.nodes[ix.0].label = data.get("label").filter(|l| !l.is_empty()).cloned();
    }

    for edge in g.children().filter(|n| n.tag_name().name() == "edge") {
        let line = line_of(&doc, edge);
        let endpoint = |attr: &str| -> Result<NodeIx> {
            let id = edge.attribute(attr).ok_or_else(|| Error::MalformedInput {
                line,
                message: format!("<edge> without {attr}"),
            })?;
            graph.lookup(id).ok_or_else(|| {
                Error::Validation(format!("line {line}: edge references unknown node `{id}`"))
            })
        };
        let (a, b) = (endpoint("source")?, endpoint("target")?);
        let data = data_of(edge);
        let num = |name: &str, default: f64| -> Result<f64> {
            match data.get(name) {
                Some(v) => v.parse::<f64>().map_err(|_| Error::MalformedInput {
                    line,
                    message: format!("edge attribute {name}=`{v}` is not a number"),
                }),
                None => Ok(default),
            }
        };
        let spec = LinkSpec::new(
            num("bandwidth_bps", defaults.bandwidth_bps)?,
            num("delay_ms", defaults.delay_ms)?,
            num("cost", defaults.cost)?,
        );
        graph.add_link(a, b, &spec).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
            other => other,
        })?;
    }
    Ok(graph)
}

/// Five switches S1..S5 with three two-hop paths S1-Sx-S5 (x = 2, 3, 4),
/// host H1 on S1 and H2 on S5. Every link is 12 Mbps, 1 ms, cost 1.
pub fn build_simple_topology() -> NetworkGraph {
    let spec = LinkSpec::new(12e6, 1.0, 1.0);
    let mut g = NetworkGraph::new();
    let s: Vec<NodeIx> = (1..=5)
        .map(|i| {
            g.add_node(format!("S{i}").as_str(), NodeKind::Switch)
                .unwrap()
        })
        .collect();
    let h1 = g.add_node("H1", NodeKind::Host).unwrap();
    let h2 = g.add_node("H2", NodeKind::Host).unwrap();
    for mid in 1..=3 {
        g.add_link(s[0], s[mid], &spec).unwrap();
        g.add_link(s[mid], s[4], &spec).unwrap();
    }
    g.add_link(h1, s[0], &spec).unwrap();
    g.add_link(h2, s[4], &spec).unwrap();
    g
}
