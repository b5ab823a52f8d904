//! Component-based response handling: monolithic model output is split into
//! typed components that can be edited individually before recomposition.

pub mod a2a;
pub mod component;
pub mod composer;
pub mod corpus;
pub mod engine;
pub mod gateway;

pub use component::{
    topological_order, validate, Component, ComponentId, ComponentType, DecomposedResponse, Link, Profile, Relation,
    ValidationReport, Violation,
};
pub use composer::{component_diff, recompose, ComposedArtifact, Draft, ManipulationEvent};
pub use engine::{decompose, DecomposeError};
