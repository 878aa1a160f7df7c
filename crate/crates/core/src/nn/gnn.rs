use ndarray::Array2;

use super::activation::Nonlinearity;
use super::filter::{apply_taps, shift_stack, taps_gradient, FilterTaps, ShiftStack};
use crate::error::{Error, Result};
use crate::graph::{GraphSignal, Gso};
use crate::rng::Rng;

/// One graph convolutional layer: a filter followed by a pointwise
/// nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    pub taps: FilterTaps,
    pub sigma: Nonlinearity,
}

/// A cascade of graph convolutional layers mapping `F_0 → F_1 → … → F_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    layers: Vec<GnnLayer>,
}

/// Shape of one layer for [`GnnParams::init`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub order: usize,
    pub features: usize,
    pub sigma: Nonlinearity,
}

impl GnnParams {
    pub fn new(layers: Vec<GnnLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a GNN needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].taps.f_out() != pair[1].taps.f_in() {
                return Err(Error::dim(format!(
                    "layer outputs {} features but the next layer expects {}",
                    pair[0].taps.f_out(),
                    pair[1].taps.f_in()
                )));
            }
        }
        Ok(GnnParams { layers })
    }

    pub fn init(f_in: usize, specs: &[LayerSpec], rng: &mut Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = f_in;
        for spec in specs {
            layers.push(GnnLayer {
                taps: FilterTaps::uniform_init(spec.order, width, spec.features, rng),
                sigma: spec.sigma,
            });
            width = spec.features;
        }
        GnnParams::new(layers)
    }

    pub fn layers(&self) -> &[GnnLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [GnnLayer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn f_in(&self) -> usize {
        self.layers[0].taps.f_in()
    }

    pub fn f_out(&self) -> usize {
        self.layers[self.layers.len() - 1].taps.f_out()
    }

    /// `F_0, F_1, …, F_L`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.f_in()).chain(self.layers.iter().map(|l| l.taps.f_out())).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    /// `S^k X_{ℓ−1}` for the layer input.
    pub stack: ShiftStack,
    /// Pre-activation `Σ_k S^k X_{ℓ−1} B_{ℓk}`.
    pub pre: GraphSignal,
}

#[derive(Debug, Clone)]
pub struct GnnCache {
    pub layers: Vec<LayerCache>,
}

pub fn gnn_forward(s: &Gso, x: &GraphSignal, params: &GnnParams) -> Result<(GraphSignal, GnnCache)> {
    let mut caches = Vec::with_capacity(params.depth());
    let mut current = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        if current.ncols() != layer.taps.f_in() {
            return Err(Error::dim(format!(
                "layer {} expects {} features, got {}",
                l + 1,
                layer.taps.f_in(),
                current.ncols()
            )));
        }
        let stack = shift_stack(s, &current, layer.taps.order())?;
        let pre = apply_taps(&stack, &layer.taps)?;
        current = layer.sigma.apply_all(&pre);
        caches.push(LayerCache { stack, pre });
    }
    Ok((current, GnnCache { layers: caches }))
}

/// Backpropagates `upstream = ∂L/∂X_L`, returning `∂L/∂B_ℓ` for every layer.
pub(crate) fn gnn_backward(
    cache: &GnnCache,
    s: &Gso,
    params: &GnnParams,
    upstream: &GraphSignal,
) -> Result<Vec<FilterTaps>> {
    if cache.layers.len() != params.depth() {
        return Err(Error::dim("cache depth does not match the GNN"));
    }
    let st = s.entries().t();
    let mut grads = vec![None; params.depth()];
    let mut d_out = upstream.clone();
    for l in (0..params.depth()).rev() {
        let layer = &params.layers[l];
        let lc = &cache.layers[l];
        if lc.pre.dim() != d_out.dim() || lc.stack.len() != layer.taps.order() + 1 {
            return Err(Error::dim(format!("cache for layer {} does not match parameters", l + 1)));
        }
        let d_pre = match layer.sigma {
            Nonlinearity::Identity => d_out,
            sigma => d_out * &sigma.derivative_all(&lc.pre),
        };
        grads[l] = Some(taps_gradient(&lc.stack, &d_pre));
        if l > 0 {
            // Σ_k (Sᵀ)^k d_pre B_kᵀ, by Horner's rule.
            let taps = layer.taps.taps();
            let mut acc: Array2<f64> = d_pre.dot(&taps[taps.len() - 1].t());
            for k in (0..taps.len() - 1).rev() {
                acc = st.dot(&acc);
                acc += &d_pre.dot(&taps[k].t());
            }
            d_out = acc;
        } else {
            d_out = d_pre;
        }
    }
    Ok(grads.into_iter().map(|g| g.expect("every layer visited")).collect())
}
