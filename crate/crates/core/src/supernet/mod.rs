//! The weight-sharing supernet.

mod engine;
mod graph;
mod weights;

pub use engine::{
    backward_child, backward_mix, backward_mixture, evaluate_child, evaluate_mix, forward_child,
    forward_mix, mixture_forward, touched_slots, EdgeMix, Trace,
};
pub use graph::{
    enumerate_children, sample_uniform_arch, AllowedOps, Architecture, CellGraph, Edge,
    SpaceDescription,
};
pub use weights::{Bundle, ParamId, Parameter, Role, SharedWeights, Slot};
