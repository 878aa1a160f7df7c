use std::sync::Arc;

use ndarray::{Array2, Axis};

use super::loss::{argmax_rows, cross_entropy_loss, mse_loss};
use crate::error::{Error, Result};
use crate::graph::{GraphSignal, Gso};
use crate::nn::{wdgnn_forward_with, ForwardCache, ShiftStack, WdGnnParams};

/// What a sample's output is scored against.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Class labels read at selected nodes; the output columns are class
    /// scores.
    Classes { nodes: Vec<usize>, labels: Vec<usize> },
    /// Real-valued targets with optional nonnegative per-entry weights.
    Values { values: Array2<f64>, mask: Option<Array2<f64>> },
}

/// How per-sample metrics aggregate across a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Accuracy,
    Rmse,
}

impl Target {
    pub fn metric_kind(&self) -> MetricKind {
        match self {
            Target::Classes { .. } => MetricKind::Accuracy,
            Target::Values { .. } => MetricKind::Rmse,
        }
    }

    /// Loss and its gradient with respect to the full `N × G_out` output.
    pub fn loss_grad(&self, output: &GraphSignal) -> Result<(f64, Array2<f64>)> {
        match self {
            Target::Classes { nodes, labels } => {
                if let Some(&bad) = nodes.iter().find(|&&i| i >= output.nrows()) {
                    return Err(Error::dim(format!("readout node {bad} outside a {}-node output", output.nrows())));
                }
                let logits = output.select(Axis(0), nodes);
                let (loss, g) = cross_entropy_loss(&logits, labels)?;
                let mut grad = Array2::zeros(output.dim());
                for (r, &i) in nodes.iter().enumerate() {
                    let mut row = grad.row_mut(i);
                    row += &g.row(r);
                }
                Ok((loss, grad))
            }
            Target::Values { values, mask } => mse_loss(output, values, mask.as_ref()),
        }
    }

    /// Each node's share of the loss, scaled by `N` so that the node average
    /// equals [`loss_grad`](Self::loss_grad)'s loss; the gradient is nonzero
    /// only on row `node`.
    pub fn local_loss_grad(&self, node: usize, output: &GraphSignal) -> Result<(f64, Array2<f64>)> {
        let n = output.nrows();
        if node >= n {
            return Err(Error::dim(format!("node {node} outside a {n}-node output")));
        }
        let contributions = self.node_contributions(output)?;
        let (_, grad) = self.loss_grad(output)?;
        let mut local = Array2::zeros(output.dim());
        local.row_mut(node).assign(&grad.row(node).mapv(|g| g * n as f64));
        Ok((contributions[node] * n as f64, local))
    }

    /// Per-node summands of the loss; they add up to the loss.
    pub fn node_contributions(&self, output: &GraphSignal) -> Result<Vec<f64>> {
        let mut out = vec![0.0; output.nrows()];
        match self {
            Target::Classes { nodes, labels } => {
                for (&i, &l) in nodes.iter().zip(labels) {
                    let row = output.select(Axis(0), &[i]);
                    out[i] += cross_entropy_loss(&row, &[l])?.0 / nodes.len() as f64;
                }
            }
            Target::Values { values, mask } => {
                let diff = output - values;
                let sq = match mask {
                    Some(m) => &diff * &diff * m,
                    None => &diff * &diff,
                };
                let count = mask.as_ref().map_or(diff.len() as f64, |m| m.sum());
                for (i, row) in sq.axis_iter(Axis(0)).enumerate() {
                    out[i] = row.sum() / count;
                }
            }
        }
        Ok(out)
    }

    /// `(numerator, denominator)` of the metric: correct and total labels for
    /// accuracy, weighted squared error and total weight for RMSE.
    pub fn metric_parts(&self, output: &GraphSignal) -> (f64, f64) {
        match self {
            Target::Classes { nodes, labels } => {
                let pred = argmax_rows(&output.select(Axis(0), nodes));
                let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
                (correct as f64, labels.len() as f64)
            }
            Target::Values { values, mask } => {
                let diff = output - values;
                match mask {
                    Some(m) => ((&diff * &diff * m).sum(), m.sum()),
                    None => ((&diff * &diff).sum(), diff.len() as f64),
                }
            }
        }
    }
}

/// Finishes a metric from summed [`Target::metric_parts`].
pub fn finish_metric(kind: MetricKind, num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return f64::NAN;
    }
    match kind {
        MetricKind::Accuracy => num / den,
        MetricKind::Rmse => (num / den).sqrt(),
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub graph: Arc<Gso>,
    pub x: GraphSignal,
    /// Precomputed wide-branch inputs (e.g. a delayed stack); `None` means
    /// the ordinary shift stack of `x`.
    pub wide_stack: Option<ShiftStack>,
    pub target: Target,
}

impl Sample {
    pub fn new(graph: Arc<Gso>, x: GraphSignal, target: Target) -> Self {
        Sample { graph, x, wide_stack: None, target }
    }

    pub fn forward(&self, params: &WdGnnParams) -> Result<(GraphSignal, ForwardCache)> {
        wdgnn_forward_with(&self.graph, &self.x, self.wide_stack.clone(), params)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Dataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Consecutive slices of the given sizes.
    pub fn split(&self, sizes: &[usize]) -> Result<Vec<Dataset>> {
        let total: usize = sizes.iter().sum();
        if total > self.len() {
            return Err(Error::invalid(format!("split of {total} samples from {}", self.len())));
        }
        let mut start = 0;
        Ok(sizes
            .iter()
            .map(|&k| {
                let d = Dataset::new(self.samples[start..start + k].to_vec());
                start += k;
                d
            })
            .collect())
    }

    pub fn metric_kind(&self) -> Option<MetricKind> {
        self.samples.first().map(|s| s.target.metric_kind())
    }
}
