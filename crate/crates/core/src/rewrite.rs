//! Deformation rules: local rewrites of a network that leave Φ unchanged.
//!
//! A [`RuleMatch`] names a rule, a direction, optionally a form, and the
//! anchor elements it acts on. [`apply`] performs the rewrite, re-resolves
//! every coordinate, and (with `check`) rejects any application that moves a
//! surviving node or changes Φ beyond tolerance. Every step records the
//! match that undoes it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::convex::ConvexFunctionSpec;
use crate::error::{Error, Result};
use crate::evaluator::phi;
use crate::netmodel::{Edge, EdgeId, KindTag, Network, Node, NodeId, NodeKind, Orientation, State};
use crate::tolerance::{relative_residual, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleId {
    Summation,
    DeleteIsolated,
    DeleteZeroWeight,
    DeleteOffBetweenOff,
    DeleteOnLoopOnNode,
    OnOff1,
    OnOff2,
    Insertion1,
    Insertion2,
    Connection,
}

impl RuleId {
    pub const ALL: [RuleId; 10] = [
        RuleId::Summation,
        RuleId::DeleteIsolated,
        RuleId::DeleteZeroWeight,
        RuleId::DeleteOffBetweenOff,
        RuleId::DeleteOnLoopOnNode,
        RuleId::OnOff1,
        RuleId::OnOff2,
        RuleId::Insertion1,
        RuleId::Insertion2,
        RuleId::Connection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::Summation => "summation",
            RuleId::DeleteIsolated => "delete_isolated",
            RuleId::DeleteZeroWeight => "delete_zero_weight",
            RuleId::DeleteOffBetweenOff => "delete_off_between_off",
            RuleId::DeleteOnLoopOnNode => "delete_on_loop_on_node",
            RuleId::OnOff1 => "on_off_1",
            RuleId::OnOff2 => "on_off_2",
            RuleId::Insertion1 => "insertion_1",
            RuleId::Insertion2 => "insertion_2",
            RuleId::Connection => "connection",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts the snake-case names as well as any spelling that differs only in
/// case, `_` or `-` (`OnOff1`, `on-off-1`, `onoff1`).
impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        RuleId::ALL
            .into_iter()
            .find(|r| r.name().replace('_', "") == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown rule `{s}`")))
    }
}

impl Serialize for RuleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RuleId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Forward,
    Reverse,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

/// Variant of a rule. Summation acts on `edges` or `nodes`; insertions build
/// an `off` or `on` centroid or `switch` an existing one; connection passes
/// through a `centroid` or `conjugate` middle node; single-edge insertions
/// create an `arrow` or a `line`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleForm {
    Edges,
    Nodes,
    Off,
    On,
    Switch,
    Centroid,
    Conjugate,
    Arrow,
    Line,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeId>,
    /// Node splitting only: edges whose head (or `b`) end moves.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub heads: Vec<EdgeId>,
}

/// A located, parameterized application of one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub rule: RuleId,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<RuleForm>,
    #[serde(default)]
    pub anchors: Anchors,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Ids for elements the rewrite creates; generated when absent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fresh: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<State>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<KindTag>,
}

impl RuleMatch {
    pub fn new(rule: RuleId, direction: Direction) -> Self {
        RuleMatch {
            rule,
            direction,
            form: None,
            anchors: Anchors::default(),
            params: BTreeMap::new(),
            fresh: Vec::new(),
            coord: None,
            state: None,
            kind: None,
        }
    }

    pub fn forward(rule: RuleId) -> Self {
        RuleMatch::new(rule, Direction::Forward)
    }

    pub fn reverse(rule: RuleId) -> Self {
        RuleMatch::new(rule, Direction::Reverse)
    }

    pub fn form(mut self, form: RuleForm) -> Self {
        self.form = Some(form);
        self
    }

    pub fn nodes<I: IntoIterator<Item = S>, S: Into<NodeId>>(mut self, ids: I) -> Self {
        self.anchors.nodes = ids.into_iter().map(Into::into).collect();
        self
    }

    pub fn edges<I: IntoIterator<Item = S>, S: Into<EdgeId>>(mut self, ids: I) -> Self {
        self.anchors.edges = ids.into_iter().map(Into::into).collect();
        self
    }

    pub fn heads<I: IntoIterator<Item = S>, S: Into<EdgeId>>(mut self, ids: I) -> Self {
        self.anchors.heads = ids.into_iter().map(Into::into).collect();
        self
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn fresh<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.fresh = ids.into_iter().map(Into::into).collect();
        self
    }

    pub fn coord(mut self, coord: Vec<f64>) -> Self {
        self.coord = Some(coord);
        self
    }

    pub fn state(mut self, state: State) -> Self {
        self.state = Some(state);
        self
    }

    pub fn kind(mut self, kind: KindTag) -> Self {
        self.kind = Some(kind);
        self
    }

    fn node_anchor(&self, i: usize) -> Result<&NodeId> {
        self.anchors.nodes.get(i).ok_or_else(|| {
            Error::InvalidInput(format!("{} needs node anchor #{}", self.rule, i + 1))
        })
    }

    fn edge_anchor(&self, i: usize) -> Result<&EdgeId> {
        self.anchors.edges.get(i).ok_or_else(|| {
            Error::InvalidInput(format!("{} needs edge anchor #{}", self.rule, i + 1))
        })
    }

    fn required_param(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                Error::InvalidInput(format!("{} needs a finite `{key}` parameter", self.rule))
            })
    }

    fn flag(&self, key: &str) -> bool {
        self.params.get(key).is_some_and(|v| *v != 0.0)
    }
}

/// Record of one application.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivationStep {
    #[serde(rename = "match")]
    pub rule_match: RuleMatch,
    pub phi_before: f64,
    pub phi_after: f64,
    pub residual: f64,
    /// A match that undoes this step on the resulting network.
    pub inverse: RuleMatch,
}

/// Applies `m` with the default tolerance.
pub fn apply(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
    check: bool,
) -> Result<(Network, DerivationStep)> {
    apply_with_tol(net, m, spec, check, Tolerance::default())
}

/// Applies `m`. With `check`, the rewritten network must keep every
/// surviving node's coordinate and the value of Φ within `tol`; without it
/// Φ fields of the step are NaN.
pub fn apply_with_tol(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
    check: bool,
    tol: Tolerance,
) -> Result<(Network, DerivationStep)> {
    let (out, inverse) = rewrite(net, m, spec, tol)?;
    out.validate()?;
    let (phi_before, phi_after, residual) = if check {
        let before = net.resolve_coordinates(spec)?;
        let after = out.resolve_coordinates(spec)?;
        coordinates_kept(&before, &after, tol)?;
        let (a, b) = (phi(net, spec)?, phi(&out, spec)?);
        let r = relative_residual(a, b);
        if !(r <= tol.value()) {
            return Err(Error::phi(format!(
                "{} changed Φ from {a} to {b} (residual {r:e})",
                m.rule
            )));
        }
        (a, b, r)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok((
        out,
        DerivationStep {
            rule_match: m.clone(),
            phi_before,
            phi_after,
            residual,
            inverse,
        },
    ))
}

fn coordinates_kept(
    before: &BTreeMap<NodeId, Vec<f64>>,
    after: &BTreeMap<NodeId, Vec<f64>>,
    tol: Tolerance,
) -> Result<()> {
    for (id, c) in after {
        if let Some(b) = before.get(id) {
            if !tol.close_vec(b, c) {
                return Err(Error::phi(format!("node `{id}` moved from {b:?} to {c:?}")));
            }
        }
    }
    Ok(())
}

/// Every match of `rule` in `net`, sorted by anchors. Forward applications
/// are listed for all rules; reverse applications only where the anchors
/// alone determine them (no free weights or coordinates).
pub fn list_matches(net: &Network, rule: RuleId, spec: &ConvexFunctionSpec) -> Vec<RuleMatch> {
    list_matches_with_tol(net, rule, spec, Tolerance::default())
}

pub fn list_matches_with_tol(
    net: &Network,
    rule: RuleId,
    spec: &ConvexFunctionSpec,
    tol: Tolerance,
) -> Vec<RuleMatch> {
    let coords = net.resolve_coordinates(spec).ok();
    candidates(net, rule, coords.as_ref(), tol)
        .into_iter()
        .filter(|m| admissible(net, m, spec, tol, coords.as_ref()))
        .collect()
}

fn admissible(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
    tol: Tolerance,
    before: Option<&BTreeMap<NodeId, Vec<f64>>>,
) -> bool {
    let Ok((out, _)) = rewrite(net, m, spec, tol) else {
        return false;
    };
    if out.validate().is_err() {
        return false;
    }
    match before {
        Some(b) => out
            .resolve_coordinates(spec)
            .is_ok_and(|a| coordinates_kept(b, &a, tol).is_ok()),
        None => true,
    }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn rewrite(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
    tol: Tolerance,
) -> Result<(Network, RuleMatch)> {
    use Direction::{Forward, Reverse};
    use RuleId::*;
    match (m.rule, m.direction) {
        (Summation, dir) => match (m.form.unwrap_or(RuleForm::Edges), dir) {
            (RuleForm::Edges, Forward) => sum_edges(net, m),
            (RuleForm::Edges, Reverse) => split_edge(net, m),
            (RuleForm::Nodes, Forward) => merge_nodes(net, m, spec, tol),
            (RuleForm::Nodes, Reverse) => split_node(net, m, spec),
            (f, _) => Err(bad_form(m.rule, f)),
        },
        (DeleteIsolated, Forward) => delete_isolated(net, m),
        (DeleteIsolated, Reverse) => insert_isolated(net, m),
        (DeleteZeroWeight, Forward) => delete_zero_weight(net, m),
        (DeleteZeroWeight, Reverse) => insert_zero_weight(net, m),
        (DeleteOffBetweenOff, Forward) => delete_off_between_off(net, m, spec),
        (DeleteOffBetweenOff, Reverse) => insert_off_between_off(net, m),
        (DeleteOnLoopOnNode, Forward) => delete_on_loop(net, m),
        (DeleteOnLoopOnNode, Reverse) => insert_on_loop(net, m),
        (OnOff1, Forward) => on_off(net, m, tol, State::On),
        (OnOff1, Reverse) => on_off_back(net, m, tol, State::On),
        (OnOff2, Forward) => on_off(net, m, tol, State::Off),
        (OnOff2, Reverse) => on_off_back(net, m, tol, State::Off),
        (Insertion1 | Insertion2, dir) => {
            let side = if m.rule == Insertion1 {
                Side::Primal
            } else {
                Side::Dual
            };
            match (m.form.unwrap_or(RuleForm::Off), dir) {
                (RuleForm::Off | RuleForm::On, Forward) => insert_centroid(net, m, side),
                (RuleForm::Off | RuleForm::On, Reverse) => remove_centroid(net, m, side, tol),
                (RuleForm::Switch, Forward) => switch_centroid(net, m, side, tol, State::Off),
                (RuleForm::Switch, Reverse) => switch_centroid(net, m, side, tol, State::On),
                (f, _) => Err(bad_form(m.rule, f)),
            }
        }
        (Connection, Forward) => connect(net, m, spec, tol),
        (Connection, Reverse) => disconnect(net, m, spec, tol),
    }
}

fn bad_form(rule: RuleId, form: RuleForm) -> Error {
    Error::InvalidInput(format!("{rule} has no `{form:?}` form"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::stale(msg()))
    }
}

fn get_node<'a>(net: &'a Network, id: &NodeId) -> Result<&'a Node> {
    net.node(id)
        .ok_or_else(|| Error::stale(format!("node `{id}` does not exist")))
}

fn get_edge<'a>(net: &'a Network, id: &EdgeId) -> Result<&'a Edge> {
    net.edge(id)
        .ok_or_else(|| Error::stale(format!("edge `{id}` does not exist")))
}

fn distinct<T: Ord>(items: &[T]) -> bool {
    items.iter().collect::<BTreeSet<_>>().len() == items.len()
}

fn unique(base: String, taken: impl Fn(&str) -> bool) -> String {
    if !taken(&base) {
        return base;
    }
    (2..)
        .map(|n| format!("{base}.{n}"))
        .find(|c| !taken(c))
        .expect("unbounded")
}

fn new_node_id(net: &Network, m: &RuleMatch, slot: usize, base: String) -> Result<NodeId> {
    match m.fresh.get(slot) {
        Some(id) => {
            ensure(!net.has_node(id), || {
                format!("fresh node id `{id}` is taken")
            })?;
            Ok(NodeId(id.clone()))
        }
        None => Ok(NodeId(unique(base, |c| net.has_node(c)))),
    }
}

fn new_edge_id(net: &Network, m: &RuleMatch, slot: usize, base: String) -> Result<EdgeId> {
    match m.fresh.get(slot) {
        Some(id) => {
            ensure(!net.has_edge(id), || {
                format!("fresh edge id `{id}` is taken")
            })?;
            Ok(EdgeId(id.clone()))
        }
        None => Ok(EdgeId(unique(base, |c| net.has_edge(c)))),
    }
}

fn other(s: State) -> State {
    match s {
        State::On => State::Off,
        State::Off => State::On,
    }
}

fn explicit_coord(node: &Node) -> Option<Vec<f64>> {
    match &node.kind {
        NodeKind::Explicit(c) => Some(c.clone()),
        _ => None,
    }
}

fn edge_form(e: &Edge) -> RuleForm {
    if e.orientation.is_directed() {
        RuleForm::Arrow
    } else {
        RuleForm::Line
    }
}

fn make_edge(
    id: EdgeId,
    form: RuleForm,
    x: &NodeId,
    y: &NodeId,
    weight: f64,
    state: State,
) -> Result<Edge> {
    match form {
        RuleForm::Arrow => Ok(Edge::arrow(id, x.clone(), y.clone(), weight, state)),
        RuleForm::Line => Ok(Edge::line(id, x.clone(), y.clone(), weight, state)),
        f => Err(Error::InvalidInput(format!(
            "an inserted edge is an arrow or a line, not `{f:?}`"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Summation
// ---------------------------------------------------------------------------

fn sum_edges(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    let (a, b) = (
        get_edge(net, m.edge_anchor(0)?)?,
        get_edge(net, m.edge_anchor(1)?)?,
    );
    ensure(m.anchors.edges.len() == 2 && a.id != b.id, || {
        "summation merges exactly two edges".into()
    })?;
    ensure(a.orientation.parallel_to(&b.orientation), || {
        format!("`{}` and `{}` are not parallel", a.id, b.id)
    })?;
    ensure(a.state == b.state, || {
        format!("`{}` and `{}` differ in state", a.id, b.id)
    })?;
    let mut out = net.clone();
    out.edge_mut(&a.id).expect("present").weight = a.weight + b.weight;
    out.remove_edge(&b.id);
    let inverse = RuleMatch::reverse(RuleId::Summation)
        .form(RuleForm::Edges)
        .edges([a.id.clone()])
        .param("weight", b.weight)
        .fresh([b.id.0.clone()]);
    Ok((out, inverse))
}

fn split_edge(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    let e = get_edge(net, m.edge_anchor(0)?)?;
    let part = m.required_param("weight")?;
    let id = new_edge_id(net, m, 0, format!("{}.split", e.id))?;
    let mut out = net.clone();
    out.edge_mut(&e.id).expect("present").weight = e.weight - part;
    out.insert_edge(Edge {
        id: id.clone(),
        orientation: e.orientation.clone(),
        weight: part,
        state: e.state,
    });
    let inverse = RuleMatch::forward(RuleId::Summation)
        .form(RuleForm::Edges)
        .edges([e.id.clone(), id]);
    Ok((out, inverse))
}

fn merge_nodes(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
    tol: Tolerance,
) -> Result<(Network, RuleMatch)> {
    let keep = get_node(net, m.node_anchor(0)?)?;
    let drop = get_node(net, m.node_anchor(1)?)?;
    ensure(keep.id != drop.id, || {
        "cannot merge a node with itself".into()
    })?;
    ensure(keep.state == drop.state, || {
        format!("`{}` and `{}` differ in state", keep.id, drop.id)
    })?;
    let coords = net.resolve_coordinates(spec)?;
    ensure(tol.close_vec(&coords[&keep.id], &coords[&drop.id]), || {
        format!(
            "`{}` and `{}` are at different coordinates",
            keep.id, drop.id
        )
    })?;
    let mut out = net.clone();
    let (mut tails, mut heads) = (Vec::new(), Vec::new());
    for e in net.edges() {
        let mut o = e.orientation.clone();
        let (x, y) = match &mut o {
            Orientation::Directed { tail, head } => (tail, head),
            Orientation::Undirected { a, b } => (a, b),
        };
        let mut moved = false;
        if *x == drop.id {
            *x = keep.id.clone();
            tails.push(e.id.clone());
            moved = true;
        }
        if *y == drop.id {
            *y = keep.id.clone();
            heads.push(e.id.clone());
            moved = true;
        }
        if moved {
            out.edge_mut(&e.id).expect("present").orientation = o;
        }
    }
    out.remove_node(&drop.id);
    let mut inverse = RuleMatch::reverse(RuleId::Summation)
        .form(RuleForm::Nodes)
        .nodes([keep.id.clone()])
        .edges(tails)
        .heads(heads)
        .fresh([drop.id.0.clone()])
        .kind(drop.kind.tag());
    inverse.coord = explicit_coord(drop);
    Ok((out, inverse))
}

fn split_node(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
) -> Result<(Network, RuleMatch)> {
    let v = get_node(net, m.node_anchor(0)?)?;
    let id = new_node_id(net, m, 0, format!("{}.split", v.id))?;
    let kind = match m.kind.unwrap_or(KindTag::Explicit) {
        KindTag::Explicit => NodeKind::Explicit(match &m.coord {
            Some(c) => c.clone(),
            None => net
                .resolve_coordinates(spec)?
                .remove(&v.id)
                .expect("resolved"),
        }),
        KindTag::Centroid => NodeKind::Centroid,
        KindTag::ConjugateCentroid => NodeKind::ConjugateCentroid,
    };
    ensure(
        distinct(&m.anchors.edges) && distinct(&m.anchors.heads),
        || "repeated edge anchor".into(),
    )?;
    let mut out = net.clone();
    out.insert_node(Node {
        id: id.clone(),
        kind,
        state: v.state,
    });
    for (list, first_end) in [(&m.anchors.edges, true), (&m.anchors.heads, false)] {
        for eid in list {
            get_edge(net, eid)?;
            let e = out.edge_mut(eid).expect("present");
            let end = match (&mut e.orientation, first_end) {
                (Orientation::Directed { tail, .. }, true) => tail,
                (Orientation::Directed { head, .. }, false) => head,
                (Orientation::Undirected { a, .. }, true) => a,
                (Orientation::Undirected { b, .. }, false) => b,
            };
            ensure(*end == v.id, || {
                format!("edge `{eid}` does not have that end at `{}`", v.id)
            })?;
            *end = id.clone();
        }
    }
    let inverse = RuleMatch::forward(RuleId::Summation)
        .form(RuleForm::Nodes)
        .nodes([v.id.clone(), id]);
    Ok((out, inverse))
}

// ---------------------------------------------------------------------------
// Deletion
// ---------------------------------------------------------------------------

fn delete_isolated(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    let v = get_node(net, m.node_anchor(0)?)?;
    ensure(net.degree(&v.id) == 0, || {
        format!("node `{}` is not isolated", v.id)
    })?;
    let coord =
        explicit_coord(v).ok_or_else(|| Error::stale(format!("node `{}` is derived", v.id)))?;
    let mut out = net.clone();
    out.remove_node(&v.id);
    let inverse = RuleMatch::reverse(RuleId::DeleteIsolated)
        .nodes([v.id.clone()])
        .coord(coord)
        .state(v.state);
    Ok((out, inverse))
}

fn insert_isolated(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    let id = m.node_anchor(0)?;
    ensure(!net.has_node(id.as_str()), || {
        format!("node `{id}` already exists")
    })?;
    ensure(matches!(m.kind, None | Some(KindTag::Explicit)), || {
        "an isolated node must be explicit".into()
    })?;
    let coord = m
        .coord
        .clone()
        .ok_or_else(|| Error::InvalidInput("inserting an isolated node needs `coord`".into()))?;
    let mut out = net.clone();
    out.insert_node(Node::explicit(
        id.clone(),
        coord,
        m.state.unwrap_or(State::On),
    ));
    Ok((
        out,
        RuleMatch::forward(RuleId::DeleteIsolated).nodes([id.clone()]),
    ))
}

fn removal_inverse(rule: RuleId, e: &Edge) -> RuleMatch {
    let (x, y) = e.orientation.endpoints();
    RuleMatch::reverse(rule)
        .form(edge_form(e))
        .edges([e.id.clone()])
        .nodes([x.clone(), y.clone()])
}

fn insert_single(net: &Network, m: &RuleMatch, weight: f64, state: State) -> Result<Edge> {
    let id = m.edge_anchor(0)?;
    ensure(!net.has_edge(id.as_str()), || {
        format!("edge `{id}` already exists")
    })?;
    let x = get_node(net, m.node_anchor(0)?)?;
    let y = match m.anchors.nodes.get(1) {
        Some(y) => get_node(net, y)?,
        None => x,
    };
    make_edge(
        id.clone(),
        m.form.unwrap_or(RuleForm::Arrow),
        &x.id,
        &y.id,
        weight,
        state,
    )
}

fn delete_zero_weight(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    let e = get_edge(net, m.edge_anchor(0)?)?;
    ensure(e.weight == 0.0, || {
        format!("edge `{}` has weight {}", e.id, e.weight)
    })?;
    let mut out = net.clone();
    out.remove_edge(&e.id);
    Ok((
        out,
        removal_inverse(RuleId::DeleteZeroWeight, e).state(e.state),
    ))
}

fn insert_zero_weight(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    let e = insert_single(net, m, 0.0, m.state.unwrap_or(State::On))?;
    let inverse = RuleMatch::forward(RuleId::DeleteZeroWeight).edges([e.id.clone()]);
    let mut out = net.clone();
    out.insert_edge(e);
    Ok((out, inverse))
}

/// Removes an OFF edge between OFF nodes. A derived endpoint that the edge
/// helps define becomes an explicit node at its current coordinate.
fn delete_off_between_off(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
) -> Result<(Network, RuleMatch)> {
    let e = get_edge(net, m.edge_anchor(0)?)?;
    ensure(e.state == State::Off, || format!("edge `{}` is ON", e.id))?;
    let (x, y) = e.orientation.endpoints();
    for v in [x, y] {
        ensure(get_node(net, v)?.state == State::Off, || {
            format!("endpoint `{v}` is ON")
        })?;
    }
    let mut fix = Vec::new();
    let (mut restore_head, mut restore_tail) = (false, false);
    if let Orientation::Directed { tail, head } = &e.orientation {
        if tail != head {
            if net.node(head).is_some_and(|n| n.kind == NodeKind::Centroid) {
                fix.push(head.clone());
                restore_head = true;
            }
            if net
                .node(tail)
                .is_some_and(|n| n.kind == NodeKind::ConjugateCentroid)
            {
                fix.push(tail.clone());
                restore_tail = true;
            }
        }
    }
    let mut out = net.clone();
    if !fix.is_empty() {
        let coords = net.resolve_coordinates(spec)?;
        for v in &fix {
            out.node_mut(v).expect("present").kind = NodeKind::Explicit(coords[v].clone());
        }
    }
    out.remove_edge(&e.id);
    let mut inverse = removal_inverse(RuleId::DeleteOffBetweenOff, e).param("weight", e.weight);
    if restore_head {
        inverse = inverse.param("restore_head", 1.0);
    }
    if restore_tail {
        inverse = inverse.param("restore_tail", 1.0);
    }
    Ok((out, inverse))
}

fn insert_off_between_off(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    let e = insert_single(net, m, m.required_param("weight")?, State::Off)?;
    let (x, y) = e.orientation.endpoints();
    for v in [x, y] {
        ensure(get_node(net, v)?.state == State::Off, || {
            format!("endpoint `{v}` is ON")
        })?;
    }
    let mut out = net.clone();
    for (flag, kind) in [
        ("restore_head", NodeKind::Centroid),
        ("restore_tail", NodeKind::ConjugateCentroid),
    ] {
        if m.flag(flag) {
            let v = match (&e.orientation, flag) {
                (Orientation::Directed { head, tail }, f) if head != tail => {
                    if f == "restore_head" {
                        head
                    } else {
                        tail
                    }
                }
                _ => return Err(Error::stale(format!("`{flag}` needs a non-loop arrow"))),
            };
            let node = out.node_mut(v).expect("present");
            ensure(matches!(node.kind, NodeKind::Explicit(_)), || {
                format!("node `{v}` is already derived")
            })?;
            node.kind = kind;
        }
    }
    let inverse = RuleMatch::forward(RuleId::DeleteOffBetweenOff).edges([e.id.clone()]);
    out.insert_edge(e);
    Ok((out, inverse))
}

fn delete_on_loop(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    let e = get_edge(net, m.edge_anchor(0)?)?;
    ensure(e.state == State::On && e.orientation.is_loop(), || {
        format!("edge `{}` is not an ON loop", e.id)
    })?;
    let v = e.orientation.endpoints().0;
    ensure(get_node(net, v)?.state == State::On, || {
        format!("node `{v}` is OFF")
    })?;
    let mut out = net.clone();
    out.remove_edge(&e.id);
    let inverse = RuleMatch::reverse(RuleId::DeleteOnLoopOnNode)
        .form(edge_form(e))
        .edges([e.id.clone()])
        .nodes([v.clone()])
        .param("weight", e.weight);
    Ok((out, inverse))
}

fn insert_on_loop(net: &Network, m: &RuleMatch) -> Result<(Network, RuleMatch)> {
    ensure(m.anchors.nodes.len() == 1, || {
        "a loop has one node anchor".into()
    })?;
    let e = insert_single(net, m, m.required_param("weight")?, State::On)?;
    let v = e.orientation.endpoints().0;
    ensure(get_node(net, v)?.state == State::On, || {
        format!("node `{v}` is OFF")
    })?;
    let inverse = RuleMatch::forward(RuleId::DeleteOnLoopOnNode).edges([e.id.clone()]);
    let mut out = net.clone();
    out.insert_edge(e);
    Ok((out, inverse))
}

// ---------------------------------------------------------------------------
// ON-OFF rules
// ---------------------------------------------------------------------------

fn rule_for(from: State) -> RuleId {
    match from {
        State::On => RuleId::OnOff1,
        State::Off => RuleId::OnOff2,
    }
}

/// `from = On`: ON node with balanced weights Σ becomes OFF plus an ON loop
/// of weight −Σ. `from = Off`: OFF node becomes ON plus an OFF loop of −Σ.
fn on_off(
    net: &Network,
    m: &RuleMatch,
    tol: Tolerance,
    from: State,
) -> Result<(Network, RuleMatch)> {
    let v = get_node(net, m.node_anchor(0)?)?;
    ensure(v.state == from, || {
        format!("node `{}` is not {from:?}", v.id)
    })?;
    let (w_in, w_out) = net.weight_sums()[&v.id];
    ensure(tol.close(w_in, w_out), || {
        format!(
            "node `{}` has in-weight {w_in} but out-weight {w_out}",
            v.id
        )
    })?;
    ensure(w_in != 0.0, || {
        format!("node `{}` has zero weight sum", v.id)
    })?;
    let loop_id = new_edge_id(net, m, 0, format!("loop.{}", v.id))?;
    let mut out = net.clone();
    out.node_mut(&v.id).expect("present").state = other(from);
    out.insert_edge(Edge::arrow(
        loop_id.clone(),
        v.id.clone(),
        v.id.clone(),
        -w_in,
        from,
    ));
    let inverse = RuleMatch::reverse(rule_for(from))
        .nodes([v.id.clone()])
        .edges([loop_id]);
    Ok((out, inverse))
}

fn on_off_back(
    net: &Network,
    m: &RuleMatch,
    tol: Tolerance,
    from: State,
) -> Result<(Network, RuleMatch)> {
    let v = get_node(net, m.node_anchor(0)?)?;
    let l = get_edge(net, m.edge_anchor(0)?)?;
    ensure(v.state == other(from), || {
        format!("node `{}` is {:?}", v.id, v.state)
    })?;
    let is_loop_at_v = matches!(&l.orientation, Orientation::Directed { tail, head } if *tail == v.id && *head == v.id);
    ensure(is_loop_at_v && l.state == from, || {
        format!("edge `{}` is not a {from:?} arrow loop at `{}`", l.id, v.id)
    })?;
    let w = l.weight;
    ensure(w != 0.0, || format!("loop `{}` has zero weight", l.id))?;
    let (w_in, w_out) = net.weight_sums()[&v.id];
    ensure(tol.close(w_in - w, -w) && tol.close(w_out - w, -w), || {
        format!("node `{}` weights do not balance loop `{}`", v.id, l.id)
    })?;
    let mut out = net.clone();
    out.remove_edge(&l.id);
    out.node_mut(&v.id).expect("present").state = from;
    let inverse = RuleMatch::forward(rule_for(from))
        .nodes([v.id.clone()])
        .fresh([l.id.0.clone()]);
    Ok((out, inverse))
}

// ---------------------------------------------------------------------------
// Insertion rules
// ---------------------------------------------------------------------------

/// Insertion 1 gathers arrows by their tails into a centroid; insertion 2
/// gathers them by their heads into a conjugate centroid.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Primal,
    Dual,
}

impl Side {
    fn rule(self) -> RuleId {
        match self {
            Side::Primal => RuleId::Insertion1,
            Side::Dual => RuleId::Insertion2,
        }
    }

    fn kind(self) -> NodeKind {
        match self {
            Side::Primal => NodeKind::Centroid,
            Side::Dual => NodeKind::ConjugateCentroid,
        }
    }

    /// Far ends may not depend on the fan arrows themselves.
    fn excluded(self) -> NodeKind {
        match self {
            Side::Primal => NodeKind::ConjugateCentroid,
            Side::Dual => NodeKind::Centroid,
        }
    }

    /// (near, far) ends of an arrow: the gathered end is near.
    fn ends(self, e: &Edge) -> Option<(&NodeId, &NodeId)> {
        match (&e.orientation, self) {
            (Orientation::Directed { tail, head }, Side::Primal) => Some((head, tail)),
            (Orientation::Directed { tail, head }, Side::Dual) => Some((tail, head)),
            _ => None,
        }
    }

    fn set_near(self, e: &mut Edge, id: &NodeId) {
        if let Orientation::Directed { tail, head } = &mut e.orientation {
            match self {
                Side::Primal => *head = id.clone(),
                Side::Dual => *tail = id.clone(),
            }
        }
    }

    /// The arrow between the inserted node `c` and the target `q`.
    fn bridge(self, id: EdgeId, c: &NodeId, q: &NodeId, weight: f64) -> Edge {
        match self {
            Side::Primal => Edge::arrow(id, c.clone(), q.clone(), weight, State::On),
            Side::Dual => Edge::arrow(id, q.clone(), c.clone(), weight, State::On),
        }
    }

    /// Weight on the bridge side of a derived node: out for centroids, in for
    /// conjugate centroids.
    fn bridge_weight(self, sums: (f64, f64)) -> f64 {
        match self {
            Side::Primal => sums.1,
            Side::Dual => sums.0,
        }
    }
}

fn form_state(form: RuleForm) -> State {
    if form == RuleForm::On {
        State::On
    } else {
        State::Off
    }
}

fn insert_centroid(net: &Network, m: &RuleMatch, side: Side) -> Result<(Network, RuleMatch)> {
    let form = m.form.unwrap_or(RuleForm::Off);
    let state = form_state(form);
    let q = get_node(net, m.node_anchor(0)?)?;
    ensure(
        !m.anchors.edges.is_empty() && distinct(&m.anchors.edges),
        || "the fan needs distinct arrows".into(),
    )?;
    let mut sigma = 0.0;
    for id in &m.anchors.edges {
        let e = get_edge(net, id)?;
        let (near, far) = side
            .ends(e)
            .ok_or_else(|| Error::stale(format!("edge `{id}` is a line")))?;
        ensure(e.state == State::On, || format!("arrow `{id}` is OFF"))?;
        ensure(*near == q.id && *far != q.id, || {
            format!("arrow `{id}` is not in the fan at `{}`", q.id)
        })?;
        ensure(get_node(net, far)?.kind != side.excluded(), || {
            format!("arrow `{id}` defines `{far}`")
        })?;
        sigma += e.weight;
    }
    ensure(sigma != 0.0, || "fan weights sum to zero".into())?;
    let prefix = if side == Side::Primal { "c" } else { "ch" };
    let c = new_node_id(net, m, 0, format!("{prefix}.{}", q.id))?;
    let mut out = net.clone();
    out.insert_node(Node {
        id: c.clone(),
        kind: side.kind(),
        state,
    });
    for id in &m.anchors.edges {
        let e = out.edge_mut(id).expect("present");
        side.set_near(e, &c);
        e.state = state;
    }
    let suffix = if side == Side::Primal { "out" } else { "in" };
    let b = new_edge_id(&out, m, 1, format!("{c}.{suffix}"))?;
    out.insert_edge(side.bridge(b, &c, &q.id, sigma));
    let inverse = RuleMatch::reverse(side.rule()).form(form).nodes([c]);
    Ok((out, inverse))
}

fn remove_centroid(
    net: &Network,
    m: &RuleMatch,
    side: Side,
    tol: Tolerance,
) -> Result<(Network, RuleMatch)> {
    let form = m.form.unwrap_or(RuleForm::Off);
    let state = form_state(form);
    let c = get_node(net, m.node_anchor(0)?)?;
    ensure(c.kind == side.kind() && c.state == state, || {
        format!("node `{}` is not a {state:?} inserted node", c.id)
    })?;
    let defining: Vec<&Edge> = net.defining_edges(&c.id).collect();
    ensure(defining.iter().all(|e| e.state == state), || {
        format!("arrows defining `{}` differ in state", c.id)
    })?;
    let others: Vec<&Edge> = net
        .incident_edges(&c.id)
        .filter(|e| !defining.iter().any(|d| d.id == e.id))
        .collect();
    ensure(others.len() == 1, || {
        format!("node `{}` must have exactly one other edge", c.id)
    })?;
    let bridge = others[0];
    let q = match (side, &bridge.orientation) {
        (Side::Primal, Orientation::Directed { tail, head }) if *tail == c.id && *head != c.id => {
            head
        }
        (Side::Dual, Orientation::Directed { tail, head }) if *head == c.id && *tail != c.id => {
            tail
        }
        _ => {
            return Err(Error::stale(format!(
                "edge `{}` is not a bridge from `{}`",
                bridge.id, c.id
            )))
        }
    };
    ensure(bridge.state == State::On, || {
        format!("bridge `{}` is OFF", bridge.id)
    })?;
    let sigma: f64 = defining.iter().map(|e| e.weight).sum();
    ensure(tol.close(bridge.weight, sigma), || {
        format!("bridge weight {} differs from Σ = {sigma}", bridge.weight)
    })?;
    ensure(
        defining
            .iter()
            .all(|e| side.ends(e).is_some_and(|(_, far)| far != q)),
        || "removing the node would create a loop".into(),
    )?;
    let mut out = net.clone();
    for e in &defining {
        let e = out.edge_mut(&e.id).expect("present");
        side.set_near(e, q);
        e.state = State::On;
    }
    out.remove_edge(&bridge.id);
    out.remove_node(&c.id);
    let inverse = RuleMatch::forward(side.rule())
        .form(form)
        .nodes([q.clone()])
        .edges(defining.iter().map(|e| e.id.clone()))
        .fresh([c.id.0.clone(), bridge.id.0.clone()]);
    Ok((out, inverse))
}

/// Turns a derived node and its defining arrows OFF (`to = Off`) or ON,
/// when the bridge-side weight equals the defining weight.
fn switch_centroid(
    net: &Network,
    m: &RuleMatch,
    side: Side,
    tol: Tolerance,
    to: State,
) -> Result<(Network, RuleMatch)> {
    let c = get_node(net, m.node_anchor(0)?)?;
    let from = other(to);
    ensure(c.kind == side.kind() && c.state == from, || {
        format!("node `{}` is not a {from:?} derived node", c.id)
    })?;
    ensure(
        net.incident_edges(&c.id)
            .all(|e| e.orientation.is_directed() && !e.orientation.is_loop()),
        || format!("node `{}` has a loop or a line", c.id),
    )?;
    let defining: Vec<&Edge> = net.defining_edges(&c.id).collect();
    ensure(defining.iter().all(|e| e.state == from), || {
        format!("arrows defining `{}` differ in state", c.id)
    })?;
    let sigma: f64 = defining.iter().map(|e| e.weight).sum();
    let bridge = side.bridge_weight(net.weight_sums()[&c.id]);
    ensure(tol.close(bridge, sigma), || {
        format!("node `{}` is unbalanced ({bridge} vs {sigma})", c.id)
    })?;
    let mut out = net.clone();
    out.node_mut(&c.id).expect("present").state = to;
    for e in &defining {
        out.edge_mut(&e.id).expect("present").state = to;
    }
    let inverse = RuleMatch::new(side.rule(), m.direction.flip())
        .form(RuleForm::Switch)
        .nodes([c.id.clone()]);
    Ok((out, inverse))
}

// ---------------------------------------------------------------------------
// Connection
// ---------------------------------------------------------------------------

fn middle_target(
    form: RuleForm,
    spec: &ConvexFunctionSpec,
    p: &[f64],
    q: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    let s = alpha + beta;
    match form {
        RuleForm::Centroid => Ok(p
            .iter()
            .zip(q)
            .map(|(a, b)| (alpha * a + beta * b) / s)
            .collect()),
        RuleForm::Conjugate => {
            let (gp, gq) = (spec.eval_grad(p)?, spec.eval_grad(q)?);
            let mean: Vec<f64> = gp
                .iter()
                .zip(&gq)
                .map(|(a, b)| (alpha * a + beta * b) / s)
                .collect();
            spec.eval_grad_conjugate(&mean)
        }
        f => Err(bad_form(RuleId::Connection, f)),
    }
}

fn connect(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
    tol: Tolerance,
) -> Result<(Network, RuleMatch)> {
    let form = m.form.unwrap_or(RuleForm::Centroid);
    let p = get_node(net, m.node_anchor(0)?)?;
    let v = get_node(net, m.node_anchor(1)?)?;
    let q = get_node(net, m.node_anchor(2)?)?;
    ensure(distinct(&[&p.id, &v.id, &q.id]), || {
        "connection needs three distinct nodes".into()
    })?;
    ensure(v.state == State::On, || {
        format!("middle node `{}` is OFF", v.id)
    })?;
    ensure(p.state == State::On && q.state == State::On, || {
        "connection joins ON nodes".into()
    })?;
    let ids = &m.anchors.edges;
    ensure(distinct(ids), || "repeated edge anchor".into())?;
    let edges: Vec<&Edge> = ids
        .iter()
        .map(|id| get_edge(net, id))
        .collect::<Result<_>>()?;
    ensure(edges.iter().all(|e| e.state == State::On), || {
        "connection acts on ON edges".into()
    })?;
    let is = |e: &Edge, o: Orientation| e.orientation == o;
    let arrow = |t: &NodeId, h: &NodeId| Orientation::Directed {
        tail: t.clone(),
        head: h.clone(),
    };
    let line = |a: &NodeId, b: &NodeId| Orientation::Undirected {
        a: a.clone(),
        b: b.clone(),
    };
    let lines = match edges.len() {
        2 => {
            ensure(
                edges[0].orientation.parallel_to(&line(&p.id, &v.id))
                    && edges[1].orientation.parallel_to(&line(&q.id, &v.id)),
                || "expected lines p--v and q--v".into(),
            )?;
            true
        }
        4 => {
            ensure(
                is(edges[0], arrow(&p.id, &v.id))
                    && is(edges[1], arrow(&v.id, &p.id))
                    && is(edges[2], arrow(&q.id, &v.id))
                    && is(edges[3], arrow(&v.id, &q.id)),
                || "expected arrows p→v, v→p, q→v, v→q".into(),
            )?;
            ensure(
                tol.close(edges[0].weight, edges[1].weight)
                    && tol.close(edges[2].weight, edges[3].weight),
                || "antiparallel arrows differ in weight".into(),
            )?;
            false
        }
        _ => {
            return Err(Error::InvalidInput(
                "connection takes two lines or four arrows".into(),
            ))
        }
    };
    let alpha = edges[0].weight;
    let beta = edges[edges.len() / 2].weight;
    ensure(alpha != 0.0 && beta != 0.0 && alpha + beta != 0.0, || {
        "degenerate connection weights".into()
    })?;
    let coords = net.resolve_coordinates(spec)?;
    let target = middle_target(form, spec, &coords[&p.id], &coords[&q.id], alpha, beta)?;
    ensure(tol.close_vec(&coords[&v.id], &target), || {
        format!(
            "node `{}` is not the {form:?} of `{}` and `{}`",
            v.id, p.id, q.id
        )
    })?;
    let w = alpha * beta / (alpha + beta);
    let mut out = net.clone();
    for e in &edges {
        out.remove_edge(&e.id);
    }
    let mut created = Vec::new();
    if lines {
        let id = new_edge_id(&out, m, 0, format!("{}-{}", p.id, q.id))?;
        out.insert_edge(Edge::line(
            id.clone(),
            p.id.clone(),
            q.id.clone(),
            w,
            State::On,
        ));
        created.push(id);
    } else {
        for (slot, (t, h)) in [(&p.id, &q.id), (&q.id, &p.id)].into_iter().enumerate() {
            let id = new_edge_id(&out, m, slot, format!("{t}>{h}"))?;
            out.insert_edge(Edge::arrow(id.clone(), t.clone(), h.clone(), w, State::On));
            created.push(id);
        }
    }
    let mut inverse = RuleMatch::reverse(RuleId::Connection)
        .form(form)
        .nodes([p.id.clone(), q.id.clone(), v.id.clone()])
        .edges(created)
        .fresh(ids.iter().map(|e| e.0.clone()))
        .param("alpha", alpha);
    if out.degree(&v.id) == 0 {
        out.remove_node(&v.id);
        inverse.kind = Some(v.kind.tag());
        inverse.coord = explicit_coord(v);
    }
    Ok((out, inverse))
}

fn disconnect(
    net: &Network,
    m: &RuleMatch,
    spec: &ConvexFunctionSpec,
    tol: Tolerance,
) -> Result<(Network, RuleMatch)> {
    let form = m.form.unwrap_or(RuleForm::Centroid);
    let p = get_node(net, m.node_anchor(0)?)?;
    let q = get_node(net, m.node_anchor(1)?)?;
    let v_id = m.node_anchor(2)?;
    ensure(distinct(&[&p.id, &q.id, v_id]), || {
        "connection needs three distinct nodes".into()
    })?;
    ensure(p.state == State::On && q.state == State::On, || {
        "connection joins ON nodes".into()
    })?;
    let ids = &m.anchors.edges;
    let edges: Vec<&Edge> = ids
        .iter()
        .map(|id| get_edge(net, id))
        .collect::<Result<_>>()?;
    ensure(edges.iter().all(|e| e.state == State::On), || {
        "connection acts on ON edges".into()
    })?;
    let pq_line = Orientation::Undirected {
        a: p.id.clone(),
        b: q.id.clone(),
    };
    let lines = match edges.len() {
        1 => {
            ensure(edges[0].orientation.parallel_to(&pq_line), || {
                "expected a line p--q".into()
            })?;
            true
        }
        2 => {
            let fwd = Orientation::Directed {
                tail: p.id.clone(),
                head: q.id.clone(),
            };
            let back = Orientation::Directed {
                tail: q.id.clone(),
                head: p.id.clone(),
            };
            ensure(
                edges[0].orientation == fwd && edges[1].orientation == back,
                || "expected arrows p→q and q→p".into(),
            )?;
            ensure(tol.close(edges[0].weight, edges[1].weight), || {
                "antiparallel arrows differ in weight".into()
            })?;
            false
        }
        _ => {
            return Err(Error::InvalidInput(
                "reverse connection takes one line or two arrows".into(),
            ))
        }
    };
    let w = edges[0].weight;
    let alpha = m.required_param("alpha")?;
    ensure(alpha != 0.0 && alpha != w, || {
        format!("cannot split weight {w} with α = {alpha}")
    })?;
    let beta = w * alpha / (alpha - w);
    ensure(
        beta.is_finite() && beta != 0.0 && alpha + beta != 0.0,
        || "degenerate connection weights".into(),
    )?;
    let coords = net.resolve_coordinates(spec)?;
    let target = middle_target(form, spec, &coords[&p.id], &coords[&q.id], alpha, beta)?;
    let mut out = net.clone();
    match net.node(v_id) {
        Some(v) => {
            ensure(v.state == State::On, || {
                format!("middle node `{v_id}` is OFF")
            })?;
            ensure(tol.close_vec(&coords[v_id], &target), || {
                format!("node `{v_id}` is not at the {form:?}")
            })?;
        }
        None => {
            let kind = match m.kind.unwrap_or(KindTag::Explicit) {
                KindTag::Explicit => {
                    let c = m.coord.clone().unwrap_or_else(|| target.clone());
                    ensure(tol.close_vec(&c, &target), || {
                        format!("coordinate {c:?} is not the {form:?}")
                    })?;
                    NodeKind::Explicit(c)
                }
                // where a derived middle node lands is checked once its
                // arrows exist
                KindTag::Centroid if !lines => NodeKind::Centroid,
                KindTag::ConjugateCentroid if !lines => NodeKind::ConjugateCentroid,
                k => {
                    return Err(Error::InvalidInput(format!(
                        "a {k:?} middle node needs the arrow form"
                    )))
                }
            };
            out.insert_node(Node {
                id: v_id.clone(),
                kind,
                state: State::On,
            });
        }
    }
    for e in &edges {
        out.remove_edge(&e.id);
    }
    let mut created = Vec::new();
    let v = v_id;
    if lines {
        for (slot, (x, wt)) in [(&p.id, alpha), (&q.id, beta)].into_iter().enumerate() {
            let id = new_edge_id(&out, m, slot, format!("{x}-{v}"))?;
            out.insert_edge(Edge::line(id.clone(), x.clone(), v.clone(), wt, State::On));
            created.push(id);
        }
    } else {
        let plan = [
            (&p.id, v, alpha),
            (v, &p.id, alpha),
            (&q.id, v, beta),
            (v, &q.id, beta),
        ];
        for (slot, (t, h, wt)) in plan.into_iter().enumerate() {
            let id = new_edge_id(&out, m, slot, format!("{t}>{h}"))?;
            out.insert_edge(Edge::arrow(id.clone(), t.clone(), h.clone(), wt, State::On));
            created.push(id);
        }
    }
    if out.node(v).is_some_and(|n| n.kind.is_derived()) {
        let placed = out.resolve_coordinates(spec)?;
        ensure(tol.close_vec(&placed[v], &target), || {
            format!("node `{v}` would not sit at the {form:?}")
        })?;
    }
    let inverse = RuleMatch::forward(RuleId::Connection)
        .form(form)
        .nodes([p.id.clone(), v.clone(), q.id.clone()])
        .edges(created)
        .fresh(ids.iter().map(|e| e.0.clone()));
    Ok((out, inverse))
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

fn candidates(
    net: &Network,
    rule: RuleId,
    coords: Option<&BTreeMap<NodeId, Vec<f64>>>,
    tol: Tolerance,
) -> Vec<RuleMatch> {
    let nodes: Vec<&Node> = net.nodes().collect();
    let edges: Vec<&Edge> = net.edges().collect();
    let mut out = Vec::new();
    match rule {
        RuleId::Summation => {
            for (i, a) in edges.iter().enumerate() {
                for b in &edges[i + 1..] {
                    if a.state == b.state && a.orientation.parallel_to(&b.orientation) {
                        out.push(
                            RuleMatch::forward(rule)
                                .form(RuleForm::Edges)
                                .edges([a.id.clone(), b.id.clone()]),
                        );
                    }
                }
            }
            if let Some(coords) = coords {
                for (i, a) in nodes.iter().enumerate() {
                    for b in &nodes[i + 1..] {
                        if a.state == b.state && tol.close_vec(&coords[&a.id], &coords[&b.id]) {
                            out.push(
                                RuleMatch::forward(rule)
                                    .form(RuleForm::Nodes)
                                    .nodes([a.id.clone(), b.id.clone()]),
                            );
                        }
                    }
                }
            }
        }
        RuleId::DeleteIsolated => {
            for v in &nodes {
                if net.degree(&v.id) == 0 {
                    out.push(RuleMatch::forward(rule).nodes([v.id.clone()]));
                }
            }
        }
        RuleId::DeleteZeroWeight => {
            for e in edges.iter().filter(|e| e.weight == 0.0) {
                out.push(RuleMatch::forward(rule).edges([e.id.clone()]));
            }
        }
        RuleId::DeleteOffBetweenOff => {
            for e in edges.iter().filter(|e| e.state == State::Off) {
                let (x, y) = e.orientation.endpoints();
                let off = |v: &NodeId| net.node(v).is_some_and(|n| n.state == State::Off);
                if off(x) && off(y) {
                    out.push(RuleMatch::forward(rule).edges([e.id.clone()]));
                }
            }
        }
        RuleId::DeleteOnLoopOnNode => {
            for e in edges
                .iter()
                .filter(|e| e.state == State::On && e.orientation.is_loop())
            {
                let v = e.orientation.endpoints().0;
                if net.node(v).is_some_and(|n| n.state == State::On) {
                    out.push(RuleMatch::forward(rule).edges([e.id.clone()]));
                }
            }
        }
        RuleId::OnOff1 | RuleId::OnOff2 => {
            let from = if rule == RuleId::OnOff1 {
                State::On
            } else {
                State::Off
            };
            for v in &nodes {
                if v.state == from {
                    out.push(RuleMatch::forward(rule).nodes([v.id.clone()]));
                } else {
                    for l in net.incident_edges(&v.id) {
                        if l.orientation.is_directed() && l.orientation.is_loop() && l.state == from
                        {
                            out.push(
                                RuleMatch::reverse(rule)
                                    .nodes([v.id.clone()])
                                    .edges([l.id.clone()]),
                            );
                        }
                    }
                }
            }
        }
        RuleId::Insertion1 | RuleId::Insertion2 => {
            let side = if rule == RuleId::Insertion1 {
                Side::Primal
            } else {
                Side::Dual
            };
            for q in &nodes {
                let fan: Vec<EdgeId> = edges
                    .iter()
                    .filter(|e| e.state == State::On)
                    .filter(|e| {
                        side.ends(e).is_some_and(|(near, far)| {
                            *near == q.id
                                && *far != q.id
                                && net.node(far).is_some_and(|n| n.kind != side.excluded())
                        })
                    })
                    .map(|e| e.id.clone())
                    .collect();
                if !fan.is_empty() {
                    for form in [RuleForm::Off, RuleForm::On] {
                        out.push(
                            RuleMatch::forward(rule)
                                .form(form)
                                .nodes([q.id.clone()])
                                .edges(fan.clone()),
                        );
                    }
                }
                if q.kind == side.kind() {
                    let form = if q.state == State::On {
                        RuleForm::On
                    } else {
                        RuleForm::Off
                    };
                    out.push(RuleMatch::reverse(rule).form(form).nodes([q.id.clone()]));
                    let dir = if q.state == State::On {
                        Direction::Forward
                    } else {
                        Direction::Reverse
                    };
                    out.push(
                        RuleMatch::new(rule, dir)
                            .form(RuleForm::Switch)
                            .nodes([q.id.clone()]),
                    );
                }
            }
        }
        RuleId::Connection => {
            for v in nodes.iter().filter(|v| v.state == State::On) {
                for (i, (x, ex)) in spokes(net, &v.id, tol).iter().enumerate() {
                    for (y, ey) in &spokes(net, &v.id, tol)[i + 1..] {
                        if x == y || ex.len() != ey.len() {
                            continue;
                        }
                        for form in [RuleForm::Centroid, RuleForm::Conjugate] {
                            out.push(
                                RuleMatch::forward(rule)
                                    .form(form)
                                    .nodes([x.clone(), v.id.clone(), y.clone()])
                                    .edges(ex.iter().chain(ey).cloned()),
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

/// ON connections of `v` to other nodes: single lines, or antiparallel arrow
/// pairs of equal weight (incoming arrow first).
fn spokes(net: &Network, v: &NodeId, tol: Tolerance) -> Vec<(NodeId, Vec<EdgeId>)> {
    let mut out = Vec::new();
    let mut used = BTreeSet::new();
    let on: Vec<&Edge> = net
        .incident_edges(v)
        .filter(|e| e.state == State::On)
        .collect();
    for e in &on {
        match &e.orientation {
            Orientation::Undirected { a, b } if a != b => {
                let x = if a == v { b } else { a };
                out.push((x.clone(), vec![e.id.clone()]));
            }
            Orientation::Directed { tail, head } if head == v && tail != v => {
                let back = on.iter().find(|f| {
                    !used.contains(&f.id)
                        && matches!(&f.orientation, Orientation::Directed { tail: t, head: h } if t == v && h == tail)
                        && tol.close(f.weight, e.weight)
                });
                if let Some(f) = back {
                    used.insert(f.id.clone());
                    out.push((tail.clone(), vec![e.id.clone(), f.id.clone()]));
                }
            }
            _ => {}
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Derivations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    #[serde(flatten)]
    pub rule_match: RuleMatch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_phi: Option<f64>,
}

impl From<RuleMatch> for ScriptStep {
    fn from(rule_match: RuleMatch) -> Self {
        ScriptStep {
            rule_match,
            expected_phi: None,
        }
    }
}

/// An initial network, the ordered rule applications, and optionally the
/// network the applications should end at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derivation {
    pub generator: String,
    pub initial: Network,
    #[serde(default)]
    pub steps: Vec<ScriptStep>,
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_network: Option<Network>,
}

impl Derivation {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("derivation serializes")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub steps: Vec<DerivationStep>,
    pub phi_initial: f64,
    pub phi_final: f64,
    pub max_residual: f64,
    /// Largest relative distance of any intermediate Φ from the initial Φ.
    pub max_drift: f64,
    pub final_network: Network,
    /// Whether the end result matches the recorded final network up to ids.
    pub final_matches: Option<bool>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.final_matches != Some(false)
    }
}

/// Re-applies every step with checking on. Fails with `PhiViolation` at the
/// index of the first step that breaks Φ or misses its expected value.
pub fn replay(d: &Derivation, spec: &ConvexFunctionSpec, tol: Tolerance) -> Result<ReplayReport> {
    let mut net = d.initial.clone();
    let phi_initial = phi(&net, spec)?;
    let mut steps = Vec::with_capacity(d.steps.len());
    let (mut max_residual, mut max_drift) = (0.0f64, 0.0f64);
    for (i, s) in d.steps.iter().enumerate() {
        let (next, step) =
            apply_with_tol(&net, &s.rule_match, spec, true, tol).map_err(|e| at_step(e, i))?;
        if let Some(x) = s.expected_phi {
            if !(relative_residual(x, step.phi_after) <= tol.value()) {
                return Err(Error::PhiViolation {
                    step: Some(i),
                    detail: format!("expected Φ = {x}, got {}", step.phi_after),
                });
            }
        }
        let drift = relative_residual(phi_initial, step.phi_after);
        if !(drift <= tol.value()) {
            return Err(Error::PhiViolation {
                step: Some(i),
                detail: format!("Φ drifted from {phi_initial} to {}", step.phi_after),
            });
        }
        max_residual = max_residual.max(step.residual);
        max_drift = max_drift.max(drift);
        steps.push(step);
        net = next;
    }
    let final_matches = d
        .final_network
        .as_ref()
        .map(|f| net.same_structure(f, spec, tol))
        .transpose()?;
    Ok(ReplayReport {
        phi_final: phi(&net, spec)?,
        steps,
        phi_initial,
        max_residual,
        max_drift,
        final_network: net,
        final_matches,
    })
}

fn at_step(e: Error, i: usize) -> Error {
    match e {
        Error::PhiViolation { detail, .. } => Error::PhiViolation {
            step: Some(i),
            detail,
        },
        other => other,
    }
}
