//! Minimal dense network stack with exact analytic gradients.
//!
//! Parameters live in a flat [`ParamVector`]; the layout is derived from an
//! [`MlpSpec`]: for each layer, a row-major `(fan_out, fan_in)` weight block
//! followed by `fan_out` biases.

mod activation;
mod gradcheck;
mod loss;
mod mlp;
mod optim;
mod transfer;

pub use activation::Activation;
pub use gradcheck::{check_all_combinations, check_loss_gradient, relative_gradient_error};
pub use loss::LossKind;
pub use mlp::{
    backward, forward, forward_trace, loss_and_grad, mlp_init, Batch, ForwardTrace, LayerShape,
    LossGrad, MlpSpec, ParamVector,
};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use transfer::weight_transfer;

/// Splits `s` of the form `name` or `name(a, b)` into its name and arguments.
pub(crate) fn parse_call(s: &str) -> crate::Result<(String, Vec<f64>)> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s.to_ascii_lowercase(), Vec::new()));
    };
    if !s.ends_with(')') {
        return Err(crate::Error::Parse(format!("unbalanced parentheses in `{s}`")));
    }
    let name = s[..open].trim().to_ascii_lowercase();
    let inner = &s[open + 1..s.len() - 1];
    let args = inner
        .split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| {
            let a = a.split_once('=').map_or(a, |(_, v)| v.trim());
            a.parse::<f64>()
                .map_err(|_| crate::Error::Parse(format!("bad number `{a}` in `{s}`")))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Ok((name, args))
}
