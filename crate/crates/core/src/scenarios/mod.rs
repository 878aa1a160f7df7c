//! Experiment environments: data generation, task losses and metrics.

pub mod bounds;
pub mod flocking;
pub mod movielens;
pub mod quadratic;
pub mod sourceloc;

use std::sync::Arc;

use crate::graph::Gso;
use crate::train::{Dataset, Sample};

/// Copy of `data` processed on `graph` instead of each sample's own graph.
/// Precomputed wide stacks are dropped since they depend on the graph.
pub fn with_graph(data: &Dataset, graph: &Arc<Gso>) -> Dataset {
    Dataset::new(
        data.samples
            .iter()
            .map(|s| Sample { graph: graph.clone(), x: s.x.clone(), wide_stack: None, target: s.target.clone() })
            .collect(),
    )
}
