//! The network function Φ.
//!
//! Φ(N) is the sum of a value per node and per edge:
//! an ON arrow P→Q of weight w contributes −w⟨P, ∇F(Q)⟩, an ON node at P
//! contributes in·F*(∇F(P)) + out·F(P), and OFF elements contribute 0.
//! A line counts as two antiparallel arrows.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::convex::{dot, ConvexFunctionSpec};
use crate::error::Result;
use crate::netmodel::{EdgeId, Network, NodeId, Orientation};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiBreakdown {
    pub total: f64,
    pub node_terms: BTreeMap<NodeId, f64>,
    pub edge_terms: BTreeMap<EdgeId, f64>,
    pub in_weights: BTreeMap<NodeId, f64>,
    pub out_weights: BTreeMap<NodeId, f64>,
}

pub fn phi(net: &Network, spec: &ConvexFunctionSpec) -> Result<f64> {
    phi_breakdown(net, spec).map(|b| b.total)
}

pub fn phi_breakdown(net: &Network, spec: &ConvexFunctionSpec) -> Result<PhiBreakdown> {
    let coords = net.resolve_coordinates(spec)?;
    let mut duals: BTreeMap<&NodeId, Vec<f64>> = BTreeMap::new();
    for (id, c) in &coords {
        duals.insert(id, spec.eval_grad(c)?);
    }
    let sums = net.weight_sums();

    let mut node_terms = BTreeMap::new();
    let mut in_weights = BTreeMap::new();
    let mut out_weights = BTreeMap::new();
    for node in net.nodes() {
        let (w_in, w_out) = sums[&node.id];
        in_weights.insert(node.id.clone(), w_in);
        out_weights.insert(node.id.clone(), w_out);
        let term = if node.state.is_on() && (w_in != 0.0 || w_out != 0.0) {
            let p = &coords[&node.id];
            let f = spec.eval_f(p)?;
            // F*(P*) through the Fenchel identity
            let f_star = dot(p, &duals[&node.id]) - f;
            w_in * f_star + w_out * f
        } else {
            0.0
        };
        node_terms.insert(node.id.clone(), term);
    }

    let mut edge_terms = BTreeMap::new();
    for e in net.edges() {
        let term = if e.state.is_on() {
            match &e.orientation {
                Orientation::Directed { tail, head } => {
                    -e.weight * dot(&coords[tail], &duals[head])
                }
                Orientation::Undirected { a, b } => {
                    -e.weight * (dot(&coords[a], &duals[b]) + dot(&coords[b], &duals[a]))
                }
            }
        } else {
            0.0
        };
        edge_terms.insert(e.id.clone(), term);
    }

    let total = node_terms.values().sum::<f64>() + edge_terms.values().sum::<f64>();
    Ok(PhiBreakdown {
        total,
        node_terms,
        edge_terms,
        in_weights,
        out_weights,
    })
}
