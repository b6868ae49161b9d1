//! Divergence networks: graphical expressions of divergences between points
//! under a strictly convex generator, with a network function Φ and
//! Φ-preserving rewrite rules.

pub mod builders;
pub mod convex;
pub mod error;
pub mod evaluator;
pub mod identities;
pub mod netmodel;
pub mod rewrite;
pub mod sampling;
pub mod scripts;
pub mod tolerance;

pub use builders::WeightedPoints;
pub use convex::{ConvexFunctionSpec, Registry, SeparableSpec};
pub use error::{Error, Result};
pub use evaluator::{phi, phi_breakdown, PhiBreakdown};
pub use identities::{IdentityId, IdentityReport, Mode};
pub use netmodel::{Edge, EdgeId, KindTag, Network, Node, NodeId, NodeKind, Orientation, State};
pub use rewrite::{
    apply, apply_with_tol, list_matches, replay, Derivation, DerivationStep, Direction,
    ReplayReport, RuleForm, RuleId, RuleMatch, ScriptStep,
};
pub use tolerance::Tolerance;
