use ndarray::{Array1, Array2, Axis, Zip};

use super::{Activation, Gradient, Layer, NetworkParams, LAYER_NORM_EPS};
use crate::error::{Error, Result};

struct NormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    norm: Option<NormCache>,
    pre_activation: Array2<f64>,
}

/// Forward pass intermediates, kept so that gradients can be taken for any
/// number of upstream vectors without recomputing the forward pass.
pub struct Tape<'a> {
    params: &'a NetworkParams,
    caches: Vec<LayerCache>,
    output: Array2<f64>,
}

fn check_input(params: &NetworkParams, input: &Array2<f64>) -> Result<()> {
    if input.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            input.ncols(),
            params.input_dim()
        )));
    }
    Ok(())
}

fn affine(layer: &Layer, input: &Array2<f64>) -> Array2<f64> {
    let mut z = input.dot(&layer.weights.t());
    let bias = layer.bias.as_slice().expect("standard layout");
    match z.as_slice_mut() {
        Some(flat) => {
            for row in flat.chunks_exact_mut(bias.len()) {
                row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
            }
        }
        None => z += &layer.bias,
    }
    z
}

/// Gradient through `y = xhat * gain + offset`, `xhat = (z - mean) * inv_std`.
/// Fills the gain and offset gradients and returns the gradient wrt `z`.
fn layer_norm_backward(
    delta: &Array2<f64>,
    cache: &NormCache,
    gain: ndarray::ArrayView1<f64>,
    grad: &mut super::LayerNorm,
) -> Array2<f64> {
    let (b, h) = delta.dim();
    let delta = delta.as_standard_layout();
    let d = delta.as_slice().expect("standard layout");
    let xh = cache.normalized.as_slice().expect("standard layout");
    let gain = gain.to_vec();
    let mut g_gain = vec![0.0; h];
    let mut g_offset = vec![0.0; h];
    let mut dz = Vec::with_capacity(b * h);
    let n = h as f64;
    for r in 0..b {
        let dr = &d[r * h..(r + 1) * h];
        let xr = &xh[r * h..(r + 1) * h];
        let (mut s1, mut s2) = (0.0, 0.0);
        for (((gg, go), (d, x)), g) in g_gain
            .iter_mut()
            .zip(g_offset.iter_mut())
            .zip(dr.iter().zip(xr))
            .zip(&gain)
        {
            *gg += d * x;
            *go += d;
            let dx = d * g;
            s1 += dx;
            s2 += dx * x;
        }
        let (m1, m2, s) = (s1 / n, s2 / n, cache.inv_std[r]);
        dz.extend(
            dr.iter()
                .zip(&gain)
                .zip(xr)
                .map(|((d, g), x)| s * (d * g - m1 - x * m2)),
        );
    }
    grad.gain = Array1::from(g_gain);
    grad.offset = Array1::from(g_offset);
    Array2::from_shape_vec((b, h), dz).expect("sizes agree")
}

struct LayerOut {
    norm: Option<NormCache>,
    pre_activation: Array2<f64>,
    out: Array2<f64>,
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// One layer: affine map, optional layer norm, activation. Normalization,
/// gain/offset and activation run in a single pass per row, and the affine
/// output is normalized in place.
fn layer_forward(layer: &Layer, x: &Array2<f64>) -> LayerOut {
    let mut z = affine(layer, x);
    let is_relu = layer.activation == Activation::Relu;
    let Some(ln) = &layer.norm else {
        let out = if is_relu { z.mapv(relu) } else { z.clone() };
        return LayerOut {
            norm: None,
            pre_activation: z,
            out,
        };
    };
    let (rows, h) = z.dim();
    let n = h as f64;
    let mut inv_std = Vec::with_capacity(rows);
    let mut pre = Vec::with_capacity(rows * h);
    let (gain, offset) = (
        ln.gain.as_slice().expect("standard layout"),
        ln.offset.as_slice().expect("standard layout"),
    );
    if !z.is_standard_layout() {
        z = z.as_standard_layout().into_owned();
    }
    let flat = z.as_slice_mut().expect("standard layout");
    for row in flat.chunks_exact_mut(h) {
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(s);
        row.iter_mut().for_each(|v| *v = (*v - mean) * s);
        pre.extend(row.iter().zip(gain).zip(offset).map(|((xh, g), o)| xh * g + o));
    }
    let out: Vec<f64> = if is_relu {
        pre.iter().map(|y| relu(*y)).collect()
    } else {
        pre.clone()
    };
    LayerOut {
        norm: Some(NormCache {
            normalized: z,
            inv_std: Array1::from(inv_std),
        }),
        pre_activation: Array2::from_shape_vec((rows, h), pre).expect("sizes agree"),
        out: Array2::from_shape_vec((rows, h), out).expect("sizes agree"),
    }
}

pub(super) fn forward_only(params: &NetworkParams, input: &Array2<f64>) -> Result<Array2<f64>> {
    check_input(params, input)?;
    let mut x = input.to_owned();
    for layer in params.layers() {
        x = layer_forward(layer, &x).out;
    }
    Ok(x)
}

impl<'a> Tape<'a> {
    pub(super) fn record(params: &'a NetworkParams, input: &Array2<f64>) -> Result<Self> {
        check_input(params, input)?;
        let mut caches = Vec::with_capacity(params.layers().len());
        let mut x = input.to_owned();
        for layer in params.layers() {
            let LayerOut {
                norm,
                pre_activation,
                out,
            } = layer_forward(layer, &x);
            caches.push(LayerCache {
                input: x,
                norm,
                pre_activation,
            });
            x = out;
        }
        Ok(Tape {
            params,
            caches,
            output: x,
        })
    }

    /// Network output, `(batch, out)`.
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// Gradient of `sum_b upstream[b] . output[b]` with respect to the
    /// parameters.
    pub fn backward(&self, upstream: &Array2<f64>) -> Result<Gradient> {
        if upstream.dim() != self.output.dim() {
            return Err(Error::Shape(format!(
                "upstream shape {:?} != output shape {:?}",
                upstream.dim(),
                self.output.dim()
            )));
        }
        let mut grad = self.params.zeros_like();
        let mut delta = upstream.to_owned();
        for (i, (layer, cache)) in self
            .params
            .layers()
            .iter()
            .zip(&self.caches)
            .enumerate()
            .rev()
        {
            if layer.activation == Activation::Relu {
                let clear = |d: &mut f64, z: &f64| {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                };
                match (delta.as_slice_mut(), cache.pre_activation.as_slice()) {
                    (Some(d), Some(z)) => d.iter_mut().zip(z).for_each(|(d, z)| clear(d, z)),
                    _ => Zip::from(&mut delta).and(&cache.pre_activation).for_each(clear),
                }
            }
            let glayer = &mut grad.layers_mut()[i];
            if let (Some(ln), Some(nc)) = (&layer.norm, &cache.norm) {
                let gnorm = glayer.norm.as_mut().expect("congruent shapes");
                delta = layer_norm_backward(&delta, nc, ln.gain.view(), gnorm);
            }
            glayer.weights = delta.t().dot(&cache.input);
            glayer.bias = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&layer.weights);
            }
        }
        Ok(Gradient(grad))
    }
}
