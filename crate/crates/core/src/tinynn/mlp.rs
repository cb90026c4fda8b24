use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, LossKind};
use crate::{Error, Result};

/// Shape of a fully connected network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Position of one affine layer inside a [`ParamVector`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.fan_in * self.fan_out
    }
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_layers: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_layers,
            output_dim,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("network input/output dims must be >= 1"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        self.activation.validate()
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_layers);
        dims.push(self.output_dim);
        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = shape.bias_offset + w[1];
                shape
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers()
            .last()
            .map_or(0, |l| l.bias_offset + l.fan_out)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        let n = self.num_params();
        if params.len() != n {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: n,
                got: params.len(),
            });
        }
        Ok(())
    }
}

/// Flat parameter storage for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Row-major `(rows, cols)` block of inputs or outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "batch storage",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "batch row",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn single(row: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: row.len(),
            data: row.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// `c = alpha * a * b + beta * c` on strided f64 matrices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) < c.len());
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Glorot-uniform weights, zero biases.
pub fn mlp_init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> ParamVector {
    let mut params = ParamVector::zeros(spec.num_params());
    for layer in spec.layers() {
        init_layer(&mut params, &layer, rng);
    }
    params
}

pub(crate) fn init_layer<R: Rng + ?Sized>(params: &mut [f64], layer: &LayerShape, rng: &mut R) {
    let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
    let w = &mut params[layer.weight_offset..layer.bias_offset];
    for v in w.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
    params[layer.bias_offset..layer.bias_offset + layer.fan_out].fill(0.0);
}

/// Cached intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    rows: usize,
    /// `activations[0]` is the input; the last entry is the network output.
    activations: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input at least")
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.activations.pop().expect("trace holds the input at least")
    }
}

fn check_inputs(spec: &MlpSpec, inputs: &Batch) -> Result<()> {
    if inputs.cols != spec.input_dim {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: spec.input_dim,
            got: inputs.cols,
        });
    }
    Ok(())
}

pub fn forward_trace(params: &[f64], spec: &MlpSpec, inputs: &Batch) -> Result<ForwardTrace> {
    spec.check_params(params)?;
    check_inputs(spec, inputs)?;
    let layers = spec.layers();
    let rows = inputs.rows;
    let mut activations = Vec::with_capacity(layers.len() + 1);
    let mut pre = Vec::with_capacity(layers.len().saturating_sub(1));
    activations.push(inputs.data.clone());
    for (li, layer) in layers.iter().enumerate() {
        let bias = &params[layer.bias_offset..layer.bias_offset + layer.fan_out];
        let mut z = Vec::with_capacity(rows * layer.fan_out);
        for _ in 0..rows {
            z.extend_from_slice(bias);
        }
        let x = activations.last().expect("non-empty");
        gemm(
            rows,
            layer.fan_in,
            layer.fan_out,
            x,
            (layer.fan_in, 1),
            &params[layer.weight_offset..layer.bias_offset],
            (1, layer.fan_in),
            1.0,
            &mut z,
            layer.fan_out,
        );
        if li + 1 < layers.len() {
            let act = spec.activation;
            let y: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            pre.push(z);
            activations.push(y);
        } else {
            activations.push(z);
        }
    }
    Ok(ForwardTrace {
        rows,
        activations,
        pre,
    })
}

pub fn forward(params: &[f64], spec: &MlpSpec, inputs: &Batch) -> Result<Batch> {
    let cols = spec.output_dim;
    let trace = forward_trace(params, spec, inputs)?;
    let rows = trace.rows;
    Ok(Batch {
        rows,
        cols,
        data: trace.into_output(),
    })
}

/// Back-propagates `d_output` (shape `rows x output_dim`) through the traced
/// pass, accumulating parameter gradients into `grad`. Returns the gradient
/// with respect to the inputs when `want_input_grad` is set.
pub fn backward(
    params: &[f64],
    spec: &MlpSpec,
    trace: &ForwardTrace,
    d_output: &[f64],
    grad: &mut [f64],
    want_input_grad: bool,
) -> Result<Option<Vec<f64>>> {
    spec.check_params(params)?;
    spec.check_params(grad)?;
    let rows = trace.rows;
    if d_output.len() != rows * spec.output_dim {
        return Err(Error::DimensionMismatch {
            context: "output gradient",
            expected: rows * spec.output_dim,
            got: d_output.len(),
        });
    }
    let layers = spec.layers();
    let mut dz = d_output.to_vec();
    for (li, layer) in layers.iter().enumerate().rev() {
        let x = &trace.activations[li];
        let (fi, fo) = (layer.fan_in, layer.fan_out);
        gemm(
            fo,
            rows,
            fi,
            &dz,
            (1, fo),
            x,
            (fi, 1),
            1.0,
            &mut grad[layer.weight_offset..layer.bias_offset],
            fi,
        );
        let gb = &mut grad[layer.bias_offset..layer.bias_offset + fo];
        for r in 0..rows {
            for (g, d) in gb.iter_mut().zip(&dz[r * fo..(r + 1) * fo]) {
                *g += d;
            }
        }
        if li == 0 && !want_input_grad {
            break;
        }
        let mut dx = vec![0.0; rows * fi];
        gemm(
            rows,
            fo,
            fi,
            &dz,
            (fo, 1),
            &params[layer.weight_offset..layer.bias_offset],
            (fi, 1),
            0.0,
            &mut dx,
            fi,
        );
        if li == 0 {
            return Ok(Some(dx));
        }
        let z = &trace.pre[li - 1];
        let y = &trace.activations[li];
        let act = spec.activation;
        for ((d, &zv), &yv) in dx.iter_mut().zip(z).zip(y) {
            *d *= act.derivative(zv, yv);
        }
        dz = dx;
    }
    Ok(None)
}

/// Result of [`loss_and_grad`].
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    /// Batch mean of the configured loss.
    pub train_loss: f64,
    /// Batch mean squared error, whatever the configured loss.
    pub l2_loss: f64,
    /// Exact gradient of `train_loss`.
    pub grad: ParamVector,
    /// Prediction of the selected head for every sample.
    pub predictions: Vec<f64>,
}

/// Action-masked regression: sample `b` only trains output head `actions[b]`.
pub fn loss_and_grad(
    params: &[f64],
    spec: &MlpSpec,
    inputs: &Batch,
    actions: &[usize],
    targets: &[f64],
    loss: LossKind,
) -> Result<LossGrad> {
    let rows = inputs.rows;
    if rows == 0 {
        return Err(Error::Empty("loss batch"));
    }
    for (len, context) in [(actions.len(), "action mask"), (targets.len(), "targets")] {
        if len != rows {
            return Err(Error::DimensionMismatch {
                context,
                expected: rows,
                got: len,
            });
        }
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!(
            "regression target {i} = {}",
            targets[i]
        )));
    }
    let out_dim = spec.output_dim;
    if let Some(&a) = actions.iter().find(|&&a| a >= out_dim) {
        return Err(Error::OutOfRange {
            context: "action head",
            index: a,
            bound: out_dim,
        });
    }
    let trace = forward_trace(params, spec, inputs)?;
    let out = trace.output();
    let inv = 1.0 / rows as f64;
    let mut train = 0.0;
    let mut l2 = 0.0;
    let mut d_out = vec![0.0; rows * out_dim];
    let mut predictions = Vec::with_capacity(rows);
    for (b, (&a, &t)) in actions.iter().zip(targets).enumerate() {
        let p = out[b * out_dim + a];
        let r = t - p;
        train += loss.value(r);
        l2 += r * r;
        d_out[b * out_dim + a] = -loss.d_residual(r) * inv;
        predictions.push(p);
    }
    let mut grad = ParamVector::zeros(params.len());
    backward(params, spec, &trace, &d_out, &mut grad, false)?;
    Ok(LossGrad {
        train_loss: train * inv,
        l2_loss: l2 * inv,
        grad,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn relu(i: usize, h: Vec<usize>, o: usize) -> MlpSpec {
        MlpSpec::new(i, h, o, Activation::Relu).unwrap()
    }

    #[test]
    fn layout_arithmetic() {
        assert_eq!(relu(4, vec![8, 8], 2).num_params(), 4 * 8 + 8 + 8 * 8 + 8 + 8 * 2 + 2);
        assert_eq!(relu(4, vec![8, 8], 2).num_params(), 130);
        assert_eq!(relu(1, vec![], 1).num_params(), 2);
        let l = relu(3, vec![5], 2).layers();
        assert_eq!(l[0].bias_offset, 15);
        assert_eq!(l[1].weight_offset, 20);
        assert_eq!(l[1].bias_offset, 30);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(MlpSpec::new(0, vec![], 1, Activation::Relu).is_err());
        assert!(MlpSpec::new(1, vec![0], 1, Activation::Relu).is_err());
        assert!(MlpSpec::new(1, vec![], 1, Activation::LeakyRelu { slope: 0.0 }).is_err());
    }

    #[test]
    fn init_bounds_and_determinism() {
        let spec = relu(1, vec![], 1);
        let p = mlp_init(&spec, &mut rng::stream(0, 0, rng::INIT));
        assert!(p[0].abs() < 3f64.sqrt());
        assert_eq!(p[1], 0.0);
        let spec = relu(4, vec![8, 8], 2);
        let a = mlp_init(&spec, &mut rng::stream(5, 0, rng::INIT));
        let b = mlp_init(&spec, &mut rng::stream(5, 0, rng::INIT));
        assert_eq!(a, b);
        for l in spec.layers() {
            let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            assert!(a[l.weight_offset..l.bias_offset].iter().all(|w| w.abs() < bound));
            assert!(a[l.bias_offset..l.bias_offset + l.fan_out].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = relu(3, vec![4], 2);
        let p = ParamVector::zeros(spec.num_params());
        let out = forward(&p, &spec, &Batch::single(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
    }

    #[test]
    fn single_linear_unit() {
        let spec = relu(1, vec![], 1);
        let p = ParamVector::from_vec(vec![2.0, 1.0]);
        let out = forward(&p, &spec, &Batch::single(&[3.0])).unwrap();
        assert_eq!(out.data(), &[7.0]);
    }

    #[test]
    fn relu_dead_hidden_layer_leaves_bias_path() {
        // 2 -> 2 -> 1. Hidden pre-activations are negated inputs plus a bias;
        // positive inputs kill both units so only the output bias remains.
        let spec = relu(2, vec![2], 1);
        let p = ParamVector::from_vec(vec![
            -1.0, 0.0, 0.0, -1.0, // W1
            0.5, 0.5, // b1
            3.0, -2.0, // W2
            0.25, // b2
        ]);
        let out = forward(&p, &spec, &Batch::single(&[1.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[0.25]);
        // Negative inputs activate them: h = (1.5, 0.5), y = 4.5 - 1.0 + 0.25.
        let out = forward(&p, &spec, &Batch::single(&[-1.0, 0.0])).unwrap();
        assert_eq!(out.data(), &[3.75]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let spec = relu(3, vec![4], 2);
        let p = ParamVector::zeros(spec.num_params());
        assert!(matches!(
            forward(&p, &spec, &Batch::single(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(forward(&p[1..], &spec, &Batch::single(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn l2_single_sample_gradient_at_head() {
        // Linear 1 -> 2 with zero weights: prediction 0, target 2.
        let spec = relu(1, vec![], 2);
        let p = ParamVector::zeros(spec.num_params());
        let x = Batch::single(&[1.0]);
        let lg = loss_and_grad(&p, &spec, &x, &[1], &[2.0], LossKind::L2).unwrap();
        assert_eq!(lg.train_loss, 4.0);
        assert_eq!(lg.l2_loss, 4.0);
        // dL/dpred = -4 flows to head 1 only: weight grad = -4 * x, bias grad = -4.
        assert_eq!(&lg.grad[..], &[0.0, -4.0, 0.0, -4.0]);
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let spec = relu(2, vec![3], 2);
        let p = mlp_init(&spec, &mut rng::stream(1, 0, rng::INIT));
        let x = Batch::from_rows(&[[0.3, -0.2], [1.0, 0.5]]).unwrap();
        let out = forward(&p, &spec, &x).unwrap();
        let targets = [out.row(0)[0], out.row(1)[1]];
        for loss in LossKind::MENU {
            let lg = loss_and_grad(&p, &spec, &x, &[0, 1], &targets, loss).unwrap();
            assert_eq!(lg.train_loss, 0.0);
            assert!(lg.grad.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn non_finite_target_rejected() {
        let spec = relu(1, vec![], 1);
        let p = ParamVector::zeros(2);
        let err = loss_and_grad(&p, &spec, &Batch::single(&[1.0]), &[0], &[f64::NAN], LossKind::L2);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        let err = loss_and_grad(&p, &spec, &Batch::single(&[1.0]), &[3], &[1.0], LossKind::L2);
        assert!(matches!(err, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn l2_loss_independent_of_training_loss() {
        let spec = relu(3, vec![6], 3);
        let p = mlp_init(&spec, &mut rng::stream(2, 0, rng::INIT));
        let x = Batch::from_rows(&[[0.1, 0.2, 0.3], [-1.0, 0.0, 2.0], [0.5, 0.5, -0.5]]).unwrap();
        let l2: Vec<f64> = LossKind::MENU
            .iter()
            .map(|&l| loss_and_grad(&p, &spec, &x, &[0, 2, 1], &[1.0, -1.0, 0.3], l).unwrap().l2_loss)
            .collect();
        assert!(l2.windows(2).all(|w| w[0] == w[1]));
    }
}
