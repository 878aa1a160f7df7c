//! Graph filters, graph neural networks and their wide-and-deep combination.

mod activation;
pub mod checkpoint;
pub mod filter;
pub mod gnn;
pub mod wdgnn;

pub use activation::Nonlinearity;
pub use filter::{
    apply_taps, delayed_filter_forward, delayed_shift_stack, filter_forward, frequency_response,
    integral_lipschitz_estimate, integral_lipschitz_on, response_sup, shift_stack, taps_gradient, FilterTaps,
    ShiftStack,
};
pub use gnn::{gnn_forward, GnnCache, GnnLayer, GnnParams, LayerCache, LayerSpec};
pub use wdgnn::{
    wdgnn_backward, wdgnn_forward, wdgnn_forward_with, Architecture, ForwardCache, GroupMask, ModelKind, Readout,
    WdGnnGrad, WdGnnParams, WideProblem,
};
