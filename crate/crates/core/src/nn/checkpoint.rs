//! JSON checkpoints of [`WdGnnParams`]. Every tensor is stored with its
//! shape and row-major data; floats are written with shortest round-trip
//! formatting, so save followed by load is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{FilterTaps, GnnLayer, GnnParams, Nonlinearity, Readout, WdGnnParams};
use crate::error::{Error, Result};

const FORMAT: &str = "wdgnn-checkpoint/1";

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Taps {
    order: usize,
    f_in: usize,
    f_out: usize,
    taps: Vec<Tensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Layer {
    sigma: Nonlinearity,
    #[serde(flatten)]
    taps: Taps,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    dims: Vec<usize>,
    wide: Taps,
    deep: Vec<Layer>,
    alpha_w: f64,
    alpha_d: f64,
    beta: f64,
    readout_weight: Tensor,
    readout_bias: Vec<f64>,
}

fn tensor(a: &Array2<f64>) -> Tensor {
    Tensor { shape: [a.nrows(), a.ncols()], data: a.iter().copied().collect() }
}

fn array(t: Tensor) -> Result<Array2<f64>> {
    Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data).map_err(|e| Error::dim(format!("checkpoint tensor: {e}")))
}

fn taps_record(t: &FilterTaps) -> Taps {
    Taps { order: t.order(), f_in: t.f_in(), f_out: t.f_out(), taps: t.taps().iter().map(tensor).collect() }
}

fn taps_from(t: Taps) -> Result<FilterTaps> {
    if t.taps.len() != t.order + 1 {
        return Err(Error::dim(format!("order {} with {} taps", t.order, t.taps.len())));
    }
    let taps = FilterTaps::new(t.taps.into_iter().map(array).collect::<Result<_>>()?)?;
    if (taps.f_in(), taps.f_out()) != (t.f_in, t.f_out) {
        return Err(Error::dim("tap shape differs from declared dims"));
    }
    Ok(taps)
}

pub fn to_json(params: &WdGnnParams) -> Result<String> {
    let mut dims = params.deep.dims();
    dims.push(params.g_out());
    let ck = Checkpoint {
        format: FORMAT.into(),
        dims,
        wide: taps_record(&params.wide),
        deep: params.deep.layers().iter().map(|l| Layer { sigma: l.sigma, taps: taps_record(&l.taps) }).collect(),
        alpha_w: params.alpha_w,
        alpha_d: params.alpha_d,
        beta: params.beta,
        readout_weight: tensor(&params.readout.weight),
        readout_bias: params.readout.bias.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&ck)?)
}

pub fn from_json(text: &str) -> Result<WdGnnParams> {
    let ck: Checkpoint = serde_json::from_str(text)?;
    if ck.format != FORMAT {
        return Err(Error::invalid(format!("unsupported checkpoint format {:?}", ck.format)));
    }
    let wide = taps_from(ck.wide)?;
    let layers = ck
        .deep
        .into_iter()
        .map(|l| Ok(GnnLayer { sigma: l.sigma, taps: taps_from(l.taps)? }))
        .collect::<Result<Vec<_>>>()?;
    let deep = GnnParams::new(layers)?;
    let readout = Readout { weight: array(ck.readout_weight)?, bias: Array1::from(ck.readout_bias) };
    let params = WdGnnParams::new(wide, deep, ck.alpha_w, ck.alpha_d, ck.beta, readout)?;
    let mut dims = params.deep.dims();
    dims.push(params.g_out());
    if dims != ck.dims {
        return Err(Error::dim(format!("declared dims {:?} differ from tensors {:?}", ck.dims, dims)));
    }
    Ok(params)
}

pub fn save<W: Write>(params: &WdGnnParams, mut out: W) -> Result<()> {
    out.write_all(to_json(params)?.as_bytes())?;
    Ok(())
}

pub fn load<R: Read>(mut input: R) -> Result<WdGnnParams> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    from_json(&text)
}

pub fn save_file(params: &WdGnnParams, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(params)?)?;
    Ok(())
}

pub fn load_file(path: &Path) -> Result<WdGnnParams> {
    from_json(&std::fs::read_to_string(path)?)
}
