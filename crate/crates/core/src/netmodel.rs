//! The divergence-network data model.
//!
//! A [`Network`] is a set of nodes and a set of edges over one generator id.
//! Nodes carry an explicit coordinate or derive it from their arrows
//! (centroids from incoming arrows, conjugate centroids from outgoing ones),
//! and every node and edge is ON or OFF. ON and OFF elements at the same
//! place are distinct elements.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::convex::ConvexFunctionSpec;
use crate::error::{Error, Result};
use crate::tolerance::Tolerance;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

id_type!(NodeId);
id_type!(EdgeId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    On,
    Off,
}

impl State {
    pub fn is_on(self) -> bool {
        self == State::On
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Explicit(Vec<f64>),
    /// Weighted mean of the tails of all incoming arrows.
    Centroid,
    /// Legendre image of the weighted dual mean of the heads of all outgoing arrows.
    ConjugateCentroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Explicit,
    Centroid,
    ConjugateCentroid,
}

impl NodeKind {
    pub fn tag(&self) -> KindTag {
        match self {
            NodeKind::Explicit(_) => KindTag::Explicit,
            NodeKind::Centroid => KindTag::Centroid,
            NodeKind::ConjugateCentroid => KindTag::ConjugateCentroid,
        }
    }

    pub fn is_derived(&self) -> bool {
        !matches!(self, NodeKind::Explicit(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub state: State,
}

impl Node {
    pub fn explicit(id: impl Into<NodeId>, coord: Vec<f64>, state: State) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::Explicit(coord),
            state,
        }
    }

    pub fn centroid(id: impl Into<NodeId>, state: State) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::Centroid,
            state,
        }
    }

    pub fn conjugate_centroid(id: impl Into<NodeId>, state: State) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::ConjugateCentroid,
            state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Orientation {
    Directed { tail: NodeId, head: NodeId },
    Undirected { a: NodeId, b: NodeId },
}

impl Orientation {
    pub fn endpoints(&self) -> (&NodeId, &NodeId) {
        match self {
            Orientation::Directed { tail, head } => (tail, head),
            Orientation::Undirected { a, b } => (a, b),
        }
    }

    pub fn is_loop(&self) -> bool {
        let (x, y) = self.endpoints();
        x == y
    }

    pub fn is_directed(&self) -> bool {
        matches!(self, Orientation::Directed { .. })
    }

    pub fn touches(&self, v: &NodeId) -> bool {
        let (x, y) = self.endpoints();
        x == v || y == v
    }

    /// Same endpoints under the orientation's own notion of sameness.
    pub fn parallel_to(&self, other: &Orientation) -> bool {
        match (self, other) {
            (
                Orientation::Directed { tail: t1, head: h1 },
                Orientation::Directed { tail: t2, head: h2 },
            ) => t1 == t2 && h1 == h2,
            (
                Orientation::Undirected { a: a1, b: b1 },
                Orientation::Undirected { a: a2, b: b2 },
            ) => (a1 == a2 && b1 == b2) || (a1 == b2 && b1 == a2),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub orientation: Orientation,
    pub weight: f64,
    pub state: State,
}

impl Edge {
    pub fn arrow(
        id: impl Into<EdgeId>,
        tail: impl Into<NodeId>,
        head: impl Into<NodeId>,
        weight: f64,
        state: State,
    ) -> Self {
        Edge {
            id: id.into(),
            orientation: Orientation::Directed {
                tail: tail.into(),
                head: head.into(),
            },
            weight,
            state,
        }
    }

    pub fn line(
        id: impl Into<EdgeId>,
        a: impl Into<NodeId>,
        b: impl Into<NodeId>,
        weight: f64,
        state: State,
    ) -> Self {
        Edge {
            id: id.into(),
            orientation: Orientation::Undirected {
                a: a.into(),
                b: b.into(),
            },
            weight,
            state,
        }
    }

    pub fn tail(&self) -> Option<&NodeId> {
        match &self.orientation {
            Orientation::Directed { tail, .. } => Some(tail),
            Orientation::Undirected { .. } => None,
        }
    }

    pub fn head(&self) -> Option<&NodeId> {
        match &self.orientation {
            Orientation::Directed { head, .. } => Some(head),
            Orientation::Undirected { .. } => None,
        }
    }
}

/// A validated divergence network. Equality is exact equality of the node
/// and edge sets (and the generator id).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    generator: String,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
}

impl Network {
    pub fn empty(generator: impl Into<String>) -> Self {
        Network {
            generator: generator.into(),
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
        }
    }

    /// Builds and validates a network: unique ids, edge endpoints present,
    /// derived coordinates acyclic with nonzero defining weight.
    pub fn build(
        nodes: impl IntoIterator<Item = Node>,
        edges: impl IntoIterator<Item = Edge>,
        generator: impl Into<String>,
    ) -> Result<Self> {
        let mut net = Network::empty(generator);
        for n in nodes {
            if net.nodes.contains_key(&n.id) {
                return Err(Error::DuplicateId(n.id.0));
            }
            net.nodes.insert(n.id.clone(), n);
        }
        for e in edges {
            if net.edges.contains_key(&e.id) {
                return Err(Error::DuplicateId(e.id.0));
            }
            net.edges.insert(e.id.clone(), e);
        }
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        for e in self.edges.values() {
            let (x, y) = e.orientation.endpoints();
            for v in [x, y] {
                if !self.nodes.contains_key(v) {
                    return Err(Error::DanglingEndpoint {
                        edge: e.id.0.clone(),
                        node: v.0.clone(),
                    });
                }
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "edge `{}` has a non-finite weight",
                    e.id
                )));
            }
        }
        for n in self.nodes.values() {
            if let NodeKind::Explicit(c) = &n.kind {
                if c.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "node `{}` has an empty coordinate",
                        n.id
                    )));
                }
            }
        }
        let deps = self.dependency_map();
        for (id, node) in &self.nodes {
            if node.kind.is_derived() {
                let sigma: f64 = self.defining_edges(id).map(|e| e.weight).sum();
                if sigma == 0.0 {
                    return Err(Error::ZeroCentroidWeight(id.0.clone()));
                }
            }
        }
        topo_order(&deps).map(|_| ())
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&Edge> {
        self.edges.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Dimension of the first explicit coordinate, if any.
    pub fn dim(&self) -> Option<usize> {
        self.nodes.values().find_map(|n| match &n.kind {
            NodeKind::Explicit(c) => Some(c.len()),
            _ => None,
        })
    }

    pub fn incident_edges<'a>(&'a self, v: &'a NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges
            .values()
            .filter(move |e| e.orientation.touches(v))
    }

    pub fn degree(&self, v: &NodeId) -> usize {
        self.incident_edges(v).count()
    }

    /// Arrows that define a derived node's coordinate: incoming non-loop
    /// arrows for a centroid, outgoing non-loop arrows for a conjugate
    /// centroid, of either state. Explicit nodes have none.
    pub fn defining_edges<'a>(&'a self, v: &'a NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        let kind = self.nodes.get(v).map(|n| n.kind.tag());
        self.edges
            .values()
            .filter(move |e| match (&e.orientation, kind) {
                (Orientation::Directed { tail, head }, Some(KindTag::Centroid)) => {
                    head == v && tail != v
                }
                (Orientation::Directed { tail, head }, Some(KindTag::ConjugateCentroid)) => {
                    tail == v && head != v
                }
                _ => false,
            })
    }

    pub fn is_defining_edge(&self, e: &Edge) -> bool {
        let Orientation::Directed { tail, head } = &e.orientation else {
            return false;
        };
        if tail == head {
            return false;
        }
        let head_kind = self.nodes.get(head).map(|n| n.kind.tag());
        let tail_kind = self.nodes.get(tail).map(|n| n.kind.tag());
        head_kind == Some(KindTag::Centroid) || tail_kind == Some(KindTag::ConjugateCentroid)
    }

    fn dependency_map(&self) -> BTreeMap<&NodeId, Vec<&NodeId>> {
        let mut deps: BTreeMap<&NodeId, Vec<&NodeId>> =
            self.nodes.keys().map(|k| (k, Vec::new())).collect();
        for e in self.edges.values() {
            if let Orientation::Directed { tail, head } = &e.orientation {
                if tail == head {
                    continue;
                }
                if let Some(n) = self.nodes.get(head) {
                    if n.kind == NodeKind::Centroid {
                        deps.entry(head).or_default().push(tail);
                    }
                }
                if let Some(n) = self.nodes.get(tail) {
                    if n.kind == NodeKind::ConjugateCentroid {
                        deps.entry(tail).or_default().push(head);
                    }
                }
            }
        }
        deps
    }

    /// Total (in, out) weight per node over all directed edges of either
    /// state. A line contributes its weight to both sums at both ends; a
    /// loop counts as both incoming and outgoing.
    pub fn weight_sums(&self) -> BTreeMap<NodeId, (f64, f64)> {
        let mut sums: BTreeMap<NodeId, (f64, f64)> =
            self.nodes.keys().map(|k| (k.clone(), (0.0, 0.0))).collect();
        for e in self.edges.values() {
            match &e.orientation {
                Orientation::Directed { tail, head } => {
                    if let Some(s) = sums.get_mut(tail) {
                        s.1 += e.weight;
                    }
                    if let Some(s) = sums.get_mut(head) {
                        s.0 += e.weight;
                    }
                }
                Orientation::Undirected { a, b } => {
                    for v in [a, b] {
                        if let Some(s) = sums.get_mut(v) {
                            s.0 += e.weight;
                            s.1 += e.weight;
                        }
                    }
                }
            }
        }
        sums
    }

    /// Coordinates of every node, derived ones evaluated in dependency order.
    pub fn resolve_coordinates(
        &self,
        spec: &ConvexFunctionSpec,
    ) -> Result<BTreeMap<NodeId, Vec<f64>>> {
        let deps = self.dependency_map();
        let order: Vec<NodeId> = topo_order(&deps)?.into_iter().cloned().collect();
        let mut coords: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for id in order {
            let node = &self.nodes[&id];
            let c = match &node.kind {
                NodeKind::Explicit(c) => {
                    spec.check_primal(c)?;
                    c.clone()
                }
                NodeKind::Centroid => {
                    let mut sigma = 0.0;
                    let mut acc = vec![0.0; spec.dim()];
                    for e in self.defining_edges(&id) {
                        let src = &coords[e.tail().expect("defining edge is directed")];
                        sigma += e.weight;
                        for (a, p) in acc.iter_mut().zip(src) {
                            *a += e.weight * p;
                        }
                    }
                    if sigma == 0.0 {
                        return Err(Error::ZeroCentroidWeight(id.0.clone()));
                    }
                    let c: Vec<f64> = acc.into_iter().map(|a| a / sigma).collect();
                    spec.check_primal(&c)?;
                    c
                }
                NodeKind::ConjugateCentroid => {
                    let mut sigma = 0.0;
                    let mut acc = vec![0.0; spec.dim()];
                    for e in self.defining_edges(&id) {
                        let dst = &coords[e.head().expect("defining edge is directed")];
                        let dual = spec.eval_grad(dst)?;
                        sigma += e.weight;
                        for (a, p) in acc.iter_mut().zip(&dual) {
                            *a += e.weight * p;
                        }
                    }
                    if sigma == 0.0 {
                        return Err(Error::ZeroCentroidWeight(id.0.clone()));
                    }
                    let mean: Vec<f64> = acc.into_iter().map(|a| a / sigma).collect();
                    spec.eval_grad_conjugate(&mean)?
                }
            };
            coords.insert(id, c);
        }
        Ok(coords)
    }

    /// `N₁ + N₂`: union of nodes and of (disjoint) edges.
    pub fn compose(&self, other: &Network) -> Result<Network> {
        let generator = match (self.is_empty(), other.is_empty()) {
            (_, true) => self.generator.clone(),
            (true, false) => other.generator.clone(),
            _ if self.generator == other.generator => self.generator.clone(),
            _ => {
                return Err(Error::GeneratorMismatch(
                    self.generator.clone(),
                    other.generator.clone(),
                ))
            }
        };
        let mut out = self.clone();
        out.generator = generator;
        for n in other.nodes.values() {
            match out.nodes.get(&n.id) {
                Some(existing) if existing != n => return Err(Error::NodeConflict(n.id.0.clone())),
                Some(_) => {}
                None => {
                    out.nodes.insert(n.id.clone(), n.clone());
                }
            }
        }
        for e in other.edges.values() {
            if out.edges.contains_key(&e.id) {
                return Err(Error::EdgeOverlap(e.id.0.clone()));
            }
            out.edges.insert(e.id.clone(), e.clone());
        }
        out.validate()?;
        Ok(out)
    }

    /// Replaces every line by two antiparallel arrows of the same weight and
    /// state, with ids `<line>.ab` and `<line>.ba`.
    pub fn desugar_lines(&self) -> Network {
        let mut out = Network {
            generator: self.generator.clone(),
            nodes: self.nodes.clone(),
            edges: BTreeMap::new(),
        };
        let taken: BTreeSet<&EdgeId> = self.edges.keys().collect();
        for e in self.edges.values() {
            match &e.orientation {
                Orientation::Directed { .. } => {
                    out.edges.insert(e.id.clone(), e.clone());
                }
                Orientation::Undirected { a, b } => {
                    for (suffix, t, h) in [("ab", a, b), ("ba", b, a)] {
                        let mut id = EdgeId(format!("{}.{suffix}", e.id));
                        while taken.contains(&id) || out.edges.contains_key(&id) {
                            id = EdgeId(format!("{id}'"));
                        }
                        out.edges.insert(
                            id.clone(),
                            Edge::arrow(id, t.clone(), h.clone(), e.weight, e.state),
                        );
                    }
                }
            }
        }
        out
    }

    /// Configurations that are legal but probably unintended: lines incident
    /// to derived nodes never enter the derived coordinate.
    pub fn warnings(&self) -> Vec<String> {
        self.edges
            .values()
            .filter(|e| !e.orientation.is_directed())
            .flat_map(|e| {
                let (a, b) = e.orientation.endpoints();
                let mut ends = vec![a];
                if a != b {
                    ends.push(b);
                }
                ends.into_iter()
                    .filter(|v| self.nodes.get(*v).is_some_and(|n| n.kind.is_derived()))
                    .map(move |v| {
                        format!("line `{}` touches derived node `{v}` and does not define its coordinate", e.id)
                    })
            })
            .collect()
    }

    /// Equality up to renaming: nodes are paired by kind, state, and
    /// resolved coordinate (preferring equal ids), then edges by mapped
    /// endpoints, state, and weight.
    pub fn same_structure(
        &self,
        other: &Network,
        spec: &ConvexFunctionSpec,
        tol: Tolerance,
    ) -> Result<bool> {
        if self.nodes.len() != other.nodes.len() || self.edges.len() != other.edges.len() {
            return Ok(false);
        }
        let ca = self.resolve_coordinates(spec)?;
        let cb = other.resolve_coordinates(spec)?;
        let mut map: BTreeMap<&NodeId, &NodeId> = BTreeMap::new();
        let mut used: BTreeSet<&NodeId> = BTreeSet::new();
        for n in self.nodes.values() {
            let fits = |m: &&Node| {
                !used.contains(&m.id)
                    && m.kind.tag() == n.kind.tag()
                    && m.state == n.state
                    && tol.close_vec(&ca[&n.id], &cb[&m.id])
            };
            let pick = other
                .nodes
                .get(&n.id)
                .filter(fits)
                .or_else(|| other.nodes.values().find(fits));
            match pick {
                Some(m) => {
                    used.insert(&m.id);
                    map.insert(&n.id, &m.id);
                }
                None => return Ok(false),
            }
        }
        let mut remaining: Vec<&Edge> = other.edges.values().collect();
        for e in self.edges.values() {
            let mapped = match &e.orientation {
                Orientation::Directed { tail, head } => Orientation::Directed {
                    tail: map[tail].clone(),
                    head: map[head].clone(),
                },
                Orientation::Undirected { a, b } => Orientation::Undirected {
                    a: map[a].clone(),
                    b: map[b].clone(),
                },
            };
            let pos = remaining.iter().position(|f| {
                f.state == e.state
                    && f.orientation.parallel_to(&mapped)
                    && tol.close(f.weight, e.weight)
            });
            match pos {
                Some(i) => {
                    remaining.swap_remove(i);
                }
                None => return Ok(false),
            }
        }
        Ok(true)
    }

    pub(crate) fn insert_node(&mut self, n: Node) {
        self.nodes.insert(n.id.clone(), n);
    }

    pub(crate) fn insert_edge(&mut self, e: Edge) {
        self.edges.insert(e.id.clone(), e);
    }

    pub(crate) fn remove_node(&mut self, id: &NodeId) -> Option<Node> {
        self.nodes.remove(id)
    }

    pub(crate) fn remove_edge(&mut self, id: &EdgeId) -> Option<Edge> {
        self.edges.remove(id)
    }

    pub(crate) fn node_mut(&mut self, id: &NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(id)
    }

    pub(crate) fn edge_mut(&mut self, id: &EdgeId) -> Option<&mut Edge> {
        self.edges.get_mut(id)
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.nodes.contains_key(&NodeId(id.to_string()))
    }

    pub fn has_edge(&self, id: &str) -> bool {
        self.edges.contains_key(&EdgeId(id.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        Network::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from(self)).expect("network serializes")
    }

    /// Graphviz rendering: ON elements solid, OFF elements dashed, derived
    /// nodes as double circles, lines without arrowheads, weights as labels.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph divnet {\n");
        out.push_str(&format!(
            "  label=\"generator: {}\";\n",
            escape(&self.generator)
        ));
        for n in self.nodes.values() {
            let (shape, detail) = match &n.kind {
                NodeKind::Explicit(c) => (
                    "circle",
                    format!(
                        "({})",
                        c.iter()
                            .map(|t| format!("{t}"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                ),
                NodeKind::Centroid => ("doublecircle", "C".to_string()),
                NodeKind::ConjugateCentroid => ("doublecircle", "Ĉ".to_string()),
            };
            out.push_str(&format!(
                "  \"{}\" [label=\"{}\\n{}\", shape={shape}, style={}];\n",
                escape(n.id.as_str()),
                escape(n.id.as_str()),
                escape(&detail),
                style(n.state)
            ));
        }
        for e in self.edges.values() {
            let (x, y) = e.orientation.endpoints();
            let dir = if e.orientation.is_directed() {
                ""
            } else {
                ", dir=none"
            };
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\", style={}{dir}];\n",
                escape(x.as_str()),
                escape(y.as_str()),
                e.weight,
                style(e.state)
            ));
        }
        out.push_str("}\n");
        out
    }
}

fn style(s: State) -> &'static str {
    match s {
        State::On => "solid",
        State::Off => "dashed",
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Kahn's algorithm; dependencies come before dependants, ties by id.
fn topo_order<'a>(deps: &BTreeMap<&'a NodeId, Vec<&'a NodeId>>) -> Result<Vec<&'a NodeId>> {
    let mut pending: BTreeMap<&NodeId, usize> = deps.iter().map(|(k, v)| (*k, v.len())).collect();
    let mut dependants: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for (k, vs) in deps {
        for v in vs {
            dependants.entry(*v).or_default().push(*k);
        }
    }
    let mut ready: BTreeSet<&NodeId> = pending
        .iter()
        .filter(|(_, c)| **c == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut order = Vec::with_capacity(deps.len());
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for d in dependants.get(next).into_iter().flatten() {
            let c = pending.get_mut(d).expect("known node");
            *c -= 1;
            if *c == 0 {
                ready.insert(*d);
            }
        }
    }
    if order.len() < deps.len() {
        let stuck = pending
            .iter()
            .find(|(k, c)| **c > 0 && !order.contains(k))
            .map(|(k, _)| k.0.clone())
            .unwrap_or_default();
        return Err(Error::CentroidCycle(stuck));
    }
    Ok(order)
}

// ---------------------------------------------------------------------------
// JSON file format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: NodeId,
    pub kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<Vec<f64>>,
    pub state: State,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub id: EdgeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<NodeId>,
    pub weight: f64,
    pub state: State,
}

/// On-disk network document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub generator: String,
    #[serde(default)]
    pub nodes: Vec<NodeRecord>,
    #[serde(default)]
    pub edges: Vec<EdgeRecord>,
}

impl TryFrom<NetworkFile> for Network {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        let nodes = file
            .nodes
            .into_iter()
            .map(|r| {
                let kind = match (r.kind, r.coord) {
                    (KindTag::Explicit, Some(c)) => NodeKind::Explicit(c),
                    (KindTag::Explicit, None) => {
                        return Err(Error::InvalidInput(format!(
                            "explicit node `{}` needs `coord`",
                            r.id
                        )))
                    }
                    (_, Some(_)) => {
                        return Err(Error::InvalidInput(format!(
                            "derived node `{}` must not carry `coord`",
                            r.id
                        )))
                    }
                    (KindTag::Centroid, None) => NodeKind::Centroid,
                    (KindTag::ConjugateCentroid, None) => NodeKind::ConjugateCentroid,
                };
                Ok(Node {
                    id: r.id,
                    kind,
                    state: r.state,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = file
            .edges
            .into_iter()
            .map(|r| {
                let orientation = match (r.tail, r.head, r.a, r.b) {
                    (Some(tail), Some(head), None, None) => Orientation::Directed { tail, head },
                    (None, None, Some(a), Some(b)) => Orientation::Undirected { a, b },
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "edge `{}` needs either tail/head or a/b",
                            r.id
                        )))
                    }
                };
                Ok(Edge {
                    id: r.id,
                    orientation,
                    weight: r.weight,
                    state: r.state,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::build(nodes, edges, file.generator)
    }
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        NetworkFile {
            generator: net.generator.clone(),
            nodes: net
                .nodes
                .values()
                .map(|n| NodeRecord {
                    id: n.id.clone(),
                    kind: n.kind.tag(),
                    coord: match &n.kind {
                        NodeKind::Explicit(c) => Some(c.clone()),
                        _ => None,
                    },
                    state: n.state,
                })
                .collect(),
            edges: net
                .edges
                .values()
                .map(|e| {
                    let (tail, head, a, b) = match &e.orientation {
                        Orientation::Directed { tail, head } => {
                            (Some(tail.clone()), Some(head.clone()), None, None)
                        }
                        Orientation::Undirected { a, b } => {
                            (None, None, Some(a.clone()), Some(b.clone()))
                        }
                    };
                    EdgeRecord {
                        id: e.id.clone(),
                        tail,
                        head,
                        a,
                        b,
                        weight: e.weight,
                        state: e.state,
                    }
                })
                .collect(),
        }
    }
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = NetworkFile::deserialize(d)?;
        Network::try_from(file).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use State::{Off, On};

    fn bregman() -> Network {
        Network::build(
            [
                Node::explicit("p", vec![1.0, 2.0], On),
                Node::explicit("q", vec![0.0, 0.0], On),
            ],
            [Edge::arrow("e", "p", "q", 1.0, On)],
            "quadratic",
        )
        .unwrap()
    }

    #[test]
    fn build_minimal_bregman_topology() {
        let net = bregman();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.edge_count(), 1);
    }

    #[test]
    fn build_rejects_dangling_endpoint() {
        let err = Network::build(
            [Node::explicit("p", vec![1.0], On)],
            [Edge::arrow("e", "p", "ghost", 1.0, On)],
            "quadratic",
        )
        .unwrap_err();
        assert!(matches!(err, Error::DanglingEndpoint { ref node, .. } if node == "ghost"));
    }

    #[test]
    fn build_rejects_centroid_cycle() {
        let err = Network::build(
            [Node::centroid("c1", On), Node::centroid("c2", On)],
            [
                Edge::arrow("a", "c1", "c2", 1.0, On),
                Edge::arrow("b", "c2", "c1", 1.0, On),
            ],
            "quadratic",
        )
        .unwrap_err();
        assert!(matches!(err, Error::CentroidCycle(_)));
    }

    #[test]
    fn build_rejects_zero_centroid_weight() {
        let err = Network::build(
            [
                Node::explicit("p", vec![1.0], On),
                Node::explicit("q", vec![2.0], On),
                Node::centroid("c", On),
            ],
            [
                Edge::arrow("a", "p", "c", 1.0, On),
                Edge::arrow("b", "q", "c", -1.0, Off),
            ],
            "quadratic",
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroCentroidWeight(_)));
        let err = Network::build([Node::centroid("c", On)], [], "quadratic").unwrap_err();
        assert!(matches!(err, Error::ZeroCentroidWeight(_)));
    }

    #[test]
    fn build_rejects_duplicate_ids() {
        let err = Network::build(
            [
                Node::explicit("p", vec![1.0], On),
                Node::explicit("p", vec![2.0], Off),
            ],
            [],
            "quadratic",
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(_)));
    }

    #[test]
    fn centroid_is_weighted_mean_over_all_incoming_arrows() {
        let net = Network::build(
            [
                Node::explicit("p1", vec![0.0, 0.0], On),
                Node::explicit("p2", vec![2.0, 2.0], Off),
                Node::centroid("c", On),
            ],
            [
                Edge::arrow("a", "p1", "c", 1.0, On),
                Edge::arrow("b", "p2", "c", 1.0, Off),
            ],
            "quadratic",
        )
        .unwrap();
        let coords = net
            .resolve_coordinates(&ConvexFunctionSpec::quadratic(2))
            .unwrap();
        assert_eq!(coords[&NodeId::from("c")], vec![1.0, 1.0]);
    }

    #[test]
    fn conjugate_centroid_equals_centroid_for_quadratic() {
        let net = Network::build(
            [
                Node::explicit("p1", vec![0.0, 0.0], On),
                Node::explicit("p2", vec![2.0, 2.0], On),
                Node::conjugate_centroid("k", On),
            ],
            [
                Edge::arrow("a", "k", "p1", 1.0, On),
                Edge::arrow("b", "k", "p2", 1.0, On),
            ],
            "quadratic",
        )
        .unwrap();
        let coords = net
            .resolve_coordinates(&ConvexFunctionSpec::quadratic(2))
            .unwrap();
        assert_eq!(coords[&NodeId::from("k")], vec![1.0, 1.0]);
    }

    #[test]
    fn conjugate_centroid_of_neg_entropy_is_geometric_mean() {
        let net = Network::build(
            [
                Node::explicit("p1", vec![0.5, 0.5], On),
                Node::explicit("p2", vec![0.25, 0.75], On),
                Node::conjugate_centroid("k", On),
            ],
            [
                Edge::arrow("a", "k", "p1", 0.5, On),
                Edge::arrow("b", "k", "p2", 0.5, On),
            ],
            "neg_entropy",
        )
        .unwrap();
        let coords = net
            .resolve_coordinates(&ConvexFunctionSpec::neg_entropy(2))
            .unwrap();
        let k = &coords[&NodeId::from("k")];
        // oracle: componentwise exp((ln a + ln b) / 2)
        let expect = [
            ((0.5f64.ln() + 0.25f64.ln()) / 2.0).exp(),
            ((0.5f64.ln() + 0.75f64.ln()) / 2.0).exp(),
        ];
        assert!((k[0] - expect[0]).abs() < 1e-12 && (k[1] - expect[1]).abs() < 1e-12);
        assert!((k[0] - 0.35355).abs() < 1e-5 && (k[1] - 0.61237).abs() < 1e-5);
    }

    #[test]
    fn centroid_outside_domain_is_a_domain_error() {
        let net = Network::build(
            [
                Node::explicit("p1", vec![1.0], On),
                Node::explicit("p2", vec![3.0], On),
                Node::centroid("c", On),
            ],
            [
                Edge::arrow("a", "p1", "c", 2.0, On),
                Edge::arrow("b", "p2", "c", -1.0, On),
            ],
            "neg_log",
        )
        .unwrap();
        let err = net
            .resolve_coordinates(&ConvexFunctionSpec::neg_log(1))
            .unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn chained_centroids_resolve_in_dependency_order() {
        let net = Network::build(
            [
                Node::explicit("p", vec![0.0], On),
                Node::explicit("q", vec![4.0], On),
                Node::centroid("c1", Off),
                Node::centroid("c2", On),
            ],
            [
                Edge::arrow("a", "p", "c1", 1.0, Off),
                Edge::arrow("b", "q", "c1", 1.0, Off),
                Edge::arrow("c", "c1", "c2", 3.0, On),
                Edge::arrow("d", "q", "c2", 1.0, On),
                Edge::arrow("loop", "c2", "c2", 5.0, On),
            ],
            "quadratic",
        )
        .unwrap();
        let coords = net
            .resolve_coordinates(&ConvexFunctionSpec::quadratic(1))
            .unwrap();
        assert_eq!(coords[&NodeId::from("c1")], vec![2.0]);
        assert_eq!(coords[&NodeId::from("c2")], vec![2.5]);
    }

    #[test]
    fn compose_unions_and_checks_preconditions() {
        let n1 = bregman();
        let n2 = Network::build(
            [
                Node::explicit("q", vec![0.0, 0.0], On),
                Node::explicit("r", vec![3.0, 1.0], On),
            ],
            [Edge::arrow("f", "r", "q", 2.0, On)],
            "quadratic",
        )
        .unwrap();
        let n = n1.compose(&n2).unwrap();
        assert_eq!(n.node_count(), 3);
        assert_eq!(n.edge_count(), 2);
        assert_eq!(n1.compose(&Network::empty("quadratic")).unwrap(), n1);
        assert!(matches!(n1.compose(&n1), Err(Error::EdgeOverlap(_))));
        let conflicting =
            Network::build([Node::explicit("q", vec![1.0, 0.0], On)], [], "quadratic").unwrap();
        assert!(matches!(
            n1.compose(&conflicting),
            Err(Error::NodeConflict(_))
        ));
        let other_gen =
            Network::build([Node::explicit("z", vec![1.0, 0.0], On)], [], "neg_log").unwrap();
        assert!(matches!(
            n1.compose(&other_gen),
            Err(Error::GeneratorMismatch(..))
        ));
    }

    #[test]
    fn desugar_lines_replaces_each_line_with_two_arrows() {
        let net = Network::build(
            [
                Node::explicit("p", vec![1.0], On),
                Node::explicit("q", vec![2.0], On),
            ],
            [
                Edge::line("l", "p", "q", 0.5, On),
                Edge::line("loop", "p", "p", 2.0, Off),
            ],
            "quadratic",
        )
        .unwrap();
        let d = net.desugar_lines();
        assert_eq!(d.edge_count(), 4);
        assert!(d.edges().all(|e| e.orientation.is_directed()));
        let l_ab = d.edge(&"l.ab".into()).unwrap();
        assert_eq!(l_ab.tail(), Some(&NodeId::from("p")));
        assert_eq!(l_ab.weight, 0.5);
        assert!(d.edge(&"loop.ba".into()).unwrap().orientation.is_loop());
        assert_eq!(d.desugar_lines(), d);
        assert_eq!(bregman().desugar_lines(), bregman());
        assert_eq!(net.weight_sums(), d.weight_sums());
    }

    #[test]
    fn json_round_trip_and_format() {
        let text = r#"{
            "generator": "neg_entropy",
            "nodes": [
                {"id": "p", "kind": "explicit", "coord": [0.5, 0.5], "state": "on"},
                {"id": "c", "kind": "centroid", "state": "off"}
            ],
            "edges": [
                {"id": "e", "tail": "p", "head": "c", "weight": 1.5, "state": "off"},
                {"id": "l", "a": "p", "b": "c", "weight": -1, "state": "on"}
            ]
        }"#;
        let net = Network::from_json(text).unwrap();
        assert_eq!(net.generator(), "neg_entropy");
        assert_eq!(net.warnings().len(), 1);
        let again = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(again, net);

        let bad =
            r#"{"generator": "q", "nodes": [{"id": "p", "kind": "explicit", "state": "on"}]}"#;
        assert!(matches!(
            Network::from_json(bad),
            Err(Error::InvalidInput(_))
        ));
        let mixed = r#"{"generator": "q", "nodes": [{"id": "p", "kind": "explicit", "coord": [1], "state": "on"}],
            "edges": [{"id": "e", "tail": "p", "b": "p", "weight": 1, "state": "on"}]}"#;
        assert!(matches!(
            Network::from_json(mixed),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn dot_export_styles_states() {
        let net = Network::build(
            [
                Node::explicit("p", vec![1.0], On),
                Node::explicit("q", vec![2.0], Off),
            ],
            [
                Edge::arrow("e", "p", "q", 2.0, Off),
                Edge::line("l", "p", "q", 1.0, On),
            ],
            "quadratic",
        )
        .unwrap();
        let dot = net.to_dot();
        assert!(dot.starts_with("digraph divnet {"));
        assert!(dot.contains("\"q\" [label=\"q\\n(2)\", shape=circle, style=dashed]"));
        assert!(dot.contains("\"p\" -> \"q\" [label=\"2\", style=dashed]"));
        assert!(dot.contains("\"p\" -> \"q\" [label=\"1\", style=solid, dir=none]"));
    }

    #[test]
    fn structure_comparison_ignores_ids() {
        let spec = ConvexFunctionSpec::quadratic(2);
        let renamed = Network::build(
            [
                Node::explicit("x", vec![1.0, 2.0], On),
                Node::explicit("y", vec![0.0, 0.0], On),
            ],
            [Edge::arrow("z", "x", "y", 1.0, On)],
            "quadratic",
        )
        .unwrap();
        assert!(bregman()
            .same_structure(&renamed, &spec, Tolerance::default())
            .unwrap());
        let flipped = Network::build(
            [
                Node::explicit("x", vec![1.0, 2.0], On),
                Node::explicit("y", vec![0.0, 0.0], On),
            ],
            [Edge::arrow("z", "y", "x", 1.0, On)],
            "quadratic",
        )
        .unwrap();
        assert!(!bregman()
            .same_structure(&flipped, &spec, Tolerance::default())
            .unwrap());
    }
}
