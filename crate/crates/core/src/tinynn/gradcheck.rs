use rand::Rng as _;

use super::{loss_and_grad, mlp_init, Activation, Batch, LossKind, MlpSpec};
use crate::rng::Rng;
use crate::Result;

/// `||g_fd - g|| / max(||g_fd||, ||g||)` for a central-difference estimate
/// of the gradient of `f` at `x` with step `h`.
pub fn relative_gradient_error(
    x: &[f64],
    analytic: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut probe = x.to_vec();
    let (mut diff, mut n_fd, mut n_an) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        let fd = (plus - minus) / (2.0 * h);
        diff += (fd - analytic[i]).powi(2);
        n_fd += fd * fd;
        n_an += analytic[i] * analytic[i];
    }
    let scale = n_fd.max(n_an).sqrt();
    Ok(if scale == 0.0 { 0.0 } else { diff.sqrt() / scale })
}

/// Checks [`loss_and_grad`] on a random network and batch. Returns the
/// relative error of the analytic gradient.
pub fn check_loss_gradient(spec: &MlpSpec, loss: LossKind, rows: usize, rng: &mut Rng) -> Result<f64> {
    // Jitter every parameter so no ReLU sits exactly on its kink (zero
    // biases feeding a dead layer would).
    let mut params = mlp_init(spec, rng);
    for p in params.iter_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    let data: Vec<f64> = (0..rows * spec.input_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let inputs = Batch::new(rows, spec.input_dim, data)?;
    let actions: Vec<usize> = (0..rows).map(|_| rng.random_range(0..spec.output_dim)).collect();
    let targets: Vec<f64> = (0..rows).map(|_| rng.random_range(-3.0..3.0)).collect();
    let lg = loss_and_grad(&params, spec, &inputs, &actions, &targets, loss)?;
    relative_gradient_error(&params, &lg.grad, 1e-5, |p| {
        Ok(loss_and_grad(p, spec, &inputs, &actions, &targets, loss)?.train_loss)
    })
}

/// Worst relative error over every activation and loss in the menus, on a
/// two-hidden-layer network.
pub fn check_all_combinations(rng: &mut Rng) -> Result<Vec<(Activation, LossKind, f64)>> {
    let mut out = Vec::new();
    for act in Activation::MENU {
        let spec = MlpSpec::new(3, vec![6, 5], 2, act)?;
        for loss in LossKind::MENU {
            out.push((act, loss, check_loss_gradient(&spec, loss, 7, rng)?));
        }
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn every_combination_passes() {
        let mut r = rng::stream(0, 0, "gradcheck");
        for (act, loss, err) in check_all_combinations(&mut r).unwrap() {
            assert!(err < 1e-5, "{act} x {loss}: {err}");
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = [0.3, -1.2];
        let err = relative_gradient_error(&x, &[0.6, 2.4], 1e-5, |p| Ok(p[0] * p[0] + p[1] * p[1])).unwrap();
        assert!(err > 0.5);
        let ok = relative_gradient_error(&x, &[0.6, -2.4], 1e-5, |p| Ok(p[0] * p[0] + p[1] * p[1])).unwrap();
        assert!(ok < 1e-9);
    }
}
