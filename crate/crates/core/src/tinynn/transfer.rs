use rand::Rng;

use super::mlp::init_layer;
use super::{mlp_init, LayerShape, MlpSpec, ParamVector};
use crate::{Error, Result};

/// Carries weights from `old_spec` into `new_spec`.
///
/// Hidden layers are matched by index and the output layer with the output
/// layer; every overlapping `(row, col)` entry is copied, everything else is
/// freshly initialized as in [`mlp_init`].
pub fn weight_transfer<R: Rng + ?Sized>(
    old_params: &[f64],
    old_spec: &MlpSpec,
    new_spec: &MlpSpec,
    rng: &mut R,
) -> Result<ParamVector> {
    if old_spec.input_dim != new_spec.input_dim || old_spec.output_dim != new_spec.output_dim {
        return Err(Error::config(format!(
            "weight transfer cannot change io dims ({}->{} into {}->{})",
            old_spec.input_dim, old_spec.output_dim, new_spec.input_dim, new_spec.output_dim
        )));
    }
    if old_params.len() != old_spec.num_params() {
        return Err(Error::DimensionMismatch {
            context: "weight transfer source",
            expected: old_spec.num_params(),
            got: old_params.len(),
        });
    }
    if old_spec == new_spec {
        return Ok(ParamVector::from_vec(old_params.to_vec()));
    }
    let old_layers = old_spec.layers();
    let new_layers = new_spec.layers();
    let mut params = mlp_init(new_spec, rng);
    for (li, new_layer) in new_layers.iter().enumerate() {
        let source = if li + 1 == new_layers.len() {
            old_layers.last()
        } else if li + 1 < old_layers.len() {
            old_layers.get(li)
        } else {
            None
        };
        match source {
            Some(old_layer) => copy_overlap(old_params, old_layer, &mut params, new_layer),
            None => init_layer(&mut params, new_layer, rng),
        }
    }
    Ok(params)
}

fn copy_overlap(src: &[f64], from: &LayerShape, dst: &mut [f64], to: &LayerShape) {
    let rows = from.fan_out.min(to.fan_out);
    let cols = from.fan_in.min(to.fan_in);
    for o in 0..rows {
        let s = from.weight_offset + o * from.fan_in;
        let d = to.weight_offset + o * to.fan_in;
        dst[d..d + cols].copy_from_slice(&src[s..s + cols]);
        dst[to.bias_offset + o] = src[from.bias_offset + o];
    }
}
