//! Training tasks with hand-derived gradients.
//!
//! Four model families share one interface: [`forward`] computes the mean
//! batch loss, [`backward`] its exact gradient per layer, and
//! [`finite_diff_grad`] a central-difference estimate used to check
//! `backward`. The quadratic task is the exception to "mean": its loss is
//! `½‖Aw − b‖²` summed over the rows of the system it is given.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, rng_for, synth_dataset, Batch, Dataset, DatasetSpec, Split};
use crate::error::{Error, Result};
use crate::model::{Activation, Architecture, LayerParams, Model};
use crate::tensor::Tensor;

/// Per-layer gradients, in model layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    entries: Vec<(String, Tensor)>,
}

impl Gradients {
    pub fn new(entries: Vec<(String, Tensor)>) -> Self {
        Gradients { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

fn dense_dims(layer: &LayerParams) -> Result<(usize, usize)> {
    match layer.weights.shape() {
        [out, inp] => Ok((*out, *inp)),
        other => Err(Error::Shape(format!(
            "layer `{}` should be a matrix, got {other:?}",
            layer.name
        ))),
    }
}

fn check_bias(layer: &LayerParams, out: usize) -> Result<()> {
    if layer.weights.shape() != [out] {
        return Err(Error::Shape(format!(
            "bias `{}` should have shape [{out}], got {:?}",
            layer.name,
            layer.weights.shape()
        )));
    }
    Ok(())
}

/// `out[o] = Σ_i W[o,i] x[i] + c[o]`
fn affine(w: &[f64], c: &[f64], x: &[f64], out: &mut [f64]) {
    let inp = x.len();
    for (o, slot) in out.iter_mut().enumerate() {
        let row = &w[o * inp..(o + 1) * inp];
        *slot = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c[o];
    }
}

fn class_index(value: f64, classes: usize) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 || value as usize >= classes {
        return Err(Error::Shape(format!(
            "target {value} is not a class index in [0, {classes})"
        )));
    }
    Ok(value as usize)
}

/// Softplus `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax; returns probabilities and `log Σ exp(z)`.
fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / sum).collect(), max + sum.ln())
}

struct MlpLayers<'a> {
    weights: Vec<(&'a [f64], usize, usize)>,
    biases: Vec<&'a [f64]>,
}

fn mlp_layers(model: &Model) -> Result<MlpLayers<'_>> {
    let layers = model.layers();
    if layers.len() < 2 || !layers.len().is_multiple_of(2) {
        return Err(Error::Shape("an MLP alternates weight and bias layers".into()));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut prev_out: Option<usize> = None;
    for pair in layers.chunks(2) {
        let (out, inp) = dense_dims(&pair[0])?;
        check_bias(&pair[1], out)?;
        if let Some(p) = prev_out {
            if p != inp {
                return Err(Error::Shape(format!(
                    "layer `{}` expects {inp} inputs but previous layer has {p} outputs",
                    pair[0].name
                )));
            }
        }
        prev_out = Some(out);
        weights.push((pair[0].weights.data(), out, inp));
        biases.push(pair[1].weights.data());
    }
    Ok(MlpLayers { weights, biases })
}

fn check_inputs(batch: &Batch, expected: usize) -> Result<()> {
    if batch.features() != expected {
        return Err(Error::Shape(format!(
            "batch has {} features, model expects {expected}",
            batch.features()
        )));
    }
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(())
}

/// Loss and (optionally) gradients in a single pass.
fn evaluate(model: &Model, batch: &Batch, want_grad: bool) -> Result<(LossValue, Option<Gradients>)> {
    let n = batch.len();
    let layers = model.layers();
    let names = model.layer_names();
    let wrap = |grads: Vec<Vec<f64>>| -> Result<Gradients> {
        let entries = grads
            .into_iter()
            .zip(layers)
            .zip(names.iter())
            .map(|((g, l), name)| Ok((name.clone(), Tensor::new(l.weights.shape().to_vec(), g)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients::new(entries))
    };

    match model.architecture {
        Architecture::Quadratic => {
            let w = layers[0].weights.data();
            check_inputs(batch, w.len())?;
            if batch.target_width() != 1 {
                return Err(Error::Shape("quadratic targets must be one value per row".into()));
            }
            let mut loss = 0.0;
            let mut grad = vec![0.0; w.len()];
            for i in 0..n {
                let row = batch.input_row(i);
                let resid = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - batch.target_row(i)[0];
                loss += 0.5 * resid * resid;
                if want_grad {
                    for (g, a) in grad.iter_mut().zip(row) {
                        *g += resid * a;
                    }
                }
            }
            let lv = LossValue { loss, accuracy: None };
            Ok((lv, if want_grad { Some(wrap(vec![grad])?) } else { None }))
        }
        Architecture::Linear => {
            if layers.len() != 2 {
                return Err(Error::Shape("linear model has weight and bias layers".into()));
            }
            let (out, inp) = dense_dims(&layers[0])?;
            check_bias(&layers[1], out)?;
            check_inputs(batch, inp)?;
            if batch.target_width() != out {
                return Err(Error::Shape(format!(
                    "targets have width {}, model outputs {out}",
                    batch.target_width()
                )));
            }
            let (w, c) = (layers[0].weights.data(), layers[1].weights.data());
            let mut gw = vec![0.0; out * inp];
            let mut gc = vec![0.0; out];
            let mut pred = vec![0.0; out];
            let mut loss = 0.0;
            let scale = 1.0 / n as f64;
            for i in 0..n {
                let x = batch.input_row(i);
                affine(w, c, x, &mut pred);
                for (o, (p, y)) in pred.iter().zip(batch.target_row(i)).enumerate() {
                    let r = p - y;
                    loss += 0.5 * r * r;
                    if want_grad {
                        let d = r * scale;
                        gc[o] += d;
                        for (g, xv) in gw[o * inp..(o + 1) * inp].iter_mut().zip(x) {
                            *g += d * xv;
                        }
                    }
                }
            }
            let lv = LossValue {
                loss: loss * scale,
                accuracy: None,
            };
            Ok((lv, if want_grad { Some(wrap(vec![gw, gc])?) } else { None }))
        }
        Architecture::Logistic => {
            if layers.len() != 2 {
                return Err(Error::Shape("logistic model has weight and bias layers".into()));
            }
            let (out, inp) = dense_dims(&layers[0])?;
            if out != 1 {
                return Err(Error::Shape("logistic model has a single output".into()));
            }
            check_bias(&layers[1], 1)?;
            check_inputs(batch, inp)?;
            let (w, c) = (layers[0].weights.data(), layers[1].weights.data()[0]);
            let mut gw = vec![0.0; inp];
            let mut gc = 0.0;
            let mut loss = 0.0;
            let mut correct = 0usize;
            let scale = 1.0 / n as f64;
            for i in 0..n {
                let x = batch.input_row(i);
                let y = class_index(batch.target_row(i)[0], 2)? as f64;
                let z = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c;
                loss += softplus(z) - y * z;
                if (z > 0.0) == (y > 0.5) {
                    correct += 1;
                }
                if want_grad {
                    let d = (sigmoid(z) - y) * scale;
                    gc += d;
                    for (g, xv) in gw.iter_mut().zip(x) {
                        *g += d * xv;
                    }
                }
            }
            let lv = LossValue {
                loss: loss * scale,
                accuracy: Some(correct as f64 * scale),
            };
            Ok((
                lv,
                if want_grad {
                    Some(wrap(vec![gw, vec![gc]])?)
                } else {
                    None
                },
            ))
        }
        Architecture::Mlp { activation } => {
            let net = mlp_layers(model)?;
            check_inputs(batch, net.weights[0].2)?;
            let depth = net.weights.len();
            let classes = net.weights[depth - 1].1;
            let scale = 1.0 / n as f64;
            let mut grads: Vec<Vec<f64>> = if want_grad {
                net.weights
                    .iter()
                    .flat_map(|&(_, out, inp)| [vec![0.0; out * inp], vec![0.0; out]])
                    .collect()
            } else {
                Vec::new()
            };
            let mut loss = 0.0;
            let mut correct = 0usize;
            let mut acts: Vec<Vec<f64>> = Vec::with_capacity(depth + 1);
            for i in 0..n {
                let target = class_index(batch.target_row(i)[0], classes)?;
                acts.clear();
                acts.push(batch.input_row(i).to_vec());
                for (l, (&(w, out, _), c)) in net.weights.iter().zip(&net.biases).enumerate() {
                    let mut z = vec![0.0; out];
                    affine(w, c, &acts[l], &mut z);
                    if l + 1 < depth {
                        z.iter_mut().for_each(|v| *v = activation.apply(*v));
                    }
                    acts.push(z);
                }
                let logits = &acts[depth];
                let (probs, log_norm) = softmax(logits);
                loss += log_norm - logits[target];
                let predicted = (0..classes)
                    .max_by(|&a, &b| logits[a].total_cmp(&logits[b]))
                    .unwrap_or(0);
                if predicted == target {
                    correct += 1;
                }
                if !want_grad {
                    continue;
                }
                let mut delta: Vec<f64> = probs;
                delta[target] -= 1.0;
                delta.iter_mut().for_each(|d| *d *= scale);
                for l in (0..depth).rev() {
                    let (w, out, inp) = net.weights[l];
                    let input = &acts[l];
                    {
                        let (gw, rest) = grads[2 * l..].split_at_mut(1);
                        let gw = &mut gw[0];
                        let gb = &mut rest[0];
                        for o in 0..out {
                            let d = delta[o];
                            gb[o] += d;
                            if d != 0.0 {
                                for (g, a) in gw[o * inp..(o + 1) * inp].iter_mut().zip(input) {
                                    *g += d * a;
                                }
                            }
                        }
                    }
                    if l > 0 {
                        let mut prev = vec![0.0; inp];
                        for o in 0..out {
                            let d = delta[o];
                            if d != 0.0 {
                                for (p, wv) in prev.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                                    *p += wv * d;
                                }
                            }
                        }
                        for (p, a) in prev.iter_mut().zip(input) {
                            *p *= activation.derivative_from_output(*a);
                        }
                        delta = prev;
                    }
                }
            }
            let lv = LossValue {
                loss: loss * scale,
                accuracy: Some(correct as f64 * scale),
            };
            Ok((lv, if want_grad { Some(wrap(grads)?) } else { None }))
        }
    }
}

fn finite_loss(lv: LossValue) -> Result<LossValue> {
    if !lv.loss.is_finite() {
        return Err(Error::Numerical(format!("loss is not finite ({})", lv.loss)));
    }
    Ok(lv)
}

/// Mean batch loss (summed residual for the quadratic task), plus accuracy
/// for classification models.
pub fn forward(model: &Model, batch: &Batch) -> Result<LossValue> {
    evaluate(model, batch, false).and_then(|(lv, _)| finite_loss(lv))
}

/// Exact gradient of [`forward`]'s loss with respect to every layer.
pub fn backward(model: &Model, batch: &Batch) -> Result<Gradients> {
    let (lv, grads) = evaluate(model, batch, true)?;
    finite_loss(lv)?;
    let grads = grads.expect("gradients requested");
    for (name, g) in grads.iter() {
        g.ensure_finite()
            .map_err(|_| Error::Numerical(format!("gradient of `{name}` is not finite")))?;
    }
    Ok(grads)
}

/// Both at once, sharing the forward pass.
pub fn loss_and_grad(model: &Model, batch: &Batch) -> Result<(LossValue, Gradients)> {
    let (lv, grads) = evaluate(model, batch, true)?;
    Ok((finite_loss(lv)?, grads.expect("gradients requested")))
}

/// Central differences `(L(w + h·eᵢ) − L(w − h·eᵢ)) / 2h`, coordinate by
/// coordinate.
pub fn finite_diff_grad(model: &Model, batch: &Batch, h: f64) -> Result<Gradients> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Argument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = model.clone();
    let mut entries = Vec::with_capacity(model.layer_count());
    for li in 0..model.layer_count() {
        let len = probe.layers()[li].weights.len();
        let mut g = vec![0.0; len];
        for (j, slot) in g.iter_mut().enumerate() {
            let orig = probe.layers()[li].weights.data()[j];
            probe.layers_mut()[li].weights.data_mut()[j] = orig + h;
            let plus = forward(&probe, batch)?.loss;
            probe.layers_mut()[li].weights.data_mut()[j] = orig - h;
            let minus = forward(&probe, batch)?.loss;
            probe.layers_mut()[li].weights.data_mut()[j] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        let layer = &model.layers()[li];
        entries.push((layer.name.clone(), Tensor::new(layer.weights.shape().to_vec(), g)?));
    }
    Ok(Gradients::new(entries))
}

/// Task family and dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskSpec {
    /// `½‖Aw − b‖²` where `AᵀA` has eigenvalues log-spaced in `[1, condition]`
    /// and the minimizer `w* = A⁻¹b` has norm `offset`.
    Quadratic {
        dim: usize,
        condition: f64,
        offset: f64,
    },
    LinearRegression {
        inputs: usize,
        outputs: usize,
        noise: f64,
    },
    Logistic {
        inputs: usize,
        margin: f64,
    },
    /// `widths = [inputs, hidden..., classes]`.
    Mlp {
        widths: Vec<usize>,
        activation: Activation,
        margin: f64,
    },
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Quadratic { .. } => "quadratic",
            TaskSpec::LinearRegression { .. } => "linear",
            TaskSpec::Logistic { .. } => "logistic",
            TaskSpec::Mlp { .. } => "mlp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(key, msg));
        match self {
            TaskSpec::Quadratic { dim, condition, offset } => {
                if *dim == 0 {
                    return bad("task.dim", "must be positive");
                }
                if !(*condition >= 1.0) || !condition.is_finite() {
                    return bad("task.condition", "must be a finite value ≥ 1");
                }
                if !(*offset >= 0.0) || !offset.is_finite() {
                    return bad("task.offset", "must be a finite value ≥ 0");
                }
            }
            TaskSpec::LinearRegression { inputs, outputs, noise } => {
                if *inputs == 0 || *outputs == 0 {
                    return bad("task.inputs", "dimensions must be positive");
                }
                if !(*noise >= 0.0) {
                    return bad("task.noise", "must be ≥ 0");
                }
            }
            TaskSpec::Logistic { inputs, margin } => {
                if *inputs == 0 {
                    return bad("task.inputs", "must be positive");
                }
                if !(*margin >= 0.0) {
                    return bad("task.margin", "must be ≥ 0");
                }
            }
            TaskSpec::Mlp { widths, margin, .. } => {
                if widths.len() < 2 || widths.contains(&0) {
                    return bad("task.widths", "need at least input and output widths, all positive");
                }
                if widths[widths.len() - 1] < 2 {
                    return bad("task.widths", "the output layer needs at least two classes");
                }
                if !(*margin >= 0.0) {
                    return bad("task.margin", "must be ≥ 0");
                }
            }
        }
        Ok(())
    }

    /// Synthetic data that matches the model's input and output widths.
    /// `None` for the quadratic task, whose data is its own linear system.
    pub fn default_dataset(&self) -> Option<DatasetSpec> {
        match self {
            TaskSpec::Quadratic { .. } => None,
            TaskSpec::LinearRegression { inputs, outputs, noise } => Some(DatasetSpec::LinearTeacher {
                features: *inputs,
                outputs: *outputs,
                noise: *noise,
            }),
            TaskSpec::Logistic { inputs, margin } => Some(DatasetSpec::Planted {
                features: *inputs,
                classes: 2,
                margin: *margin,
            }),
            TaskSpec::Mlp { widths, margin, .. } => Some(DatasetSpec::Planted {
                features: widths[0],
                classes: widths[widths.len() - 1],
                margin: *margin,
            }),
        }
    }
}

/// A freshly initialized model plus the means to produce its data.
#[derive(Debug, Clone)]
pub struct Task {
    pub spec: TaskSpec,
    pub model: Model,
    pub seed: u64,
    system: Option<QuadraticSystem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    pub a: Tensor,
    pub b: Tensor,
    pub minimizer: Tensor,
}

impl Task {
    /// The `(A, b, w*)` triple of a quadratic task.
    pub fn system(&self) -> Option<&QuadraticSystem> {
        self.system.as_ref()
    }

    /// Training and test data. The quadratic task yields its system rows as
    /// the only (training) split.
    pub fn datasets(
        &self,
        dataset: Option<&DatasetSpec>,
        n_train: usize,
        n_test: usize,
    ) -> Result<(Dataset, Option<Dataset>)> {
        if let Some(sys) = &self.system {
            let ds = Dataset::new(
                sys.a.clone(),
                sys.b.clone(),
                Split::Train,
                format!("quadratic:seed={}", self.seed),
            )?;
            return Ok((ds, None));
        }
        let spec = match dataset {
            Some(d) => d.clone(),
            None => self.spec.default_dataset().expect("non-quadratic tasks have data"),
        };
        let (train, test) = synth_dataset(&spec, n_train, n_test, derive_seed(self.seed, 3))?;
        Ok((train, Some(test)))
    }
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<Tensor> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-s..s)).collect())
}

fn dense_pair(rng: &mut ChaCha8Rng, prefix: &str, out: usize, inp: usize) -> Result<[LayerParams; 2]> {
    let w = uniform_tensor(rng, &[out, inp], inp, out)?;
    Ok([
        LayerParams::new(format!("{prefix}weight"), w)?,
        LayerParams::new(format!("{prefix}bias"), Tensor::zeros(&[out])?)?,
    ])
}

/// Gram–Schmidt orthonormalization of a Gaussian matrix (row-major, n×n).
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let mut q: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let dot: f64 = (0..n).map(|k| q[i * n + k] * q[j * n + k]).sum();
                for k in 0..n {
                    q[i * n + k] -= dot * q[j * n + k];
                }
            }
            let norm: f64 = (0..n).map(|k| q[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for k in 0..n {
                q[i * n + k] /= norm;
            }
        }
        if ok {
            return q;
        }
    }
}

fn quadratic_system(rng: &mut ChaCha8Rng, dim: usize, condition: f64, offset: f64) -> Result<QuadraticSystem> {
    let u = random_orthogonal(rng, dim);
    let v = random_orthogonal(rng, dim);
    let sing: Vec<f64> = (0..dim)
        .map(|i| {
            let frac = if dim == 1 { 0.0 } else { i as f64 / (dim - 1) as f64 };
            condition.powf(0.5 * frac)
        })
        .collect();
    // A = U diag(s) Vᵀ
    let mut a = vec![0.0; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            a[r * dim + c] = (0..dim).map(|k| u[r * dim + k] * sing[k] * v[c * dim + k]).sum();
        }
    }
    let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let w_star: Vec<f64> = dir.iter().map(|x| offset * x / norm).collect();
    let b: Vec<f64> = (0..dim)
        .map(|r| (0..dim).map(|c| a[r * dim + c] * w_star[c]).sum())
        .collect();
    Ok(QuadraticSystem {
        a: Tensor::new(vec![dim, dim], a)?,
        b: Tensor::new(vec![dim], b)?,
        minimizer: Tensor::new(vec![dim], w_star)?,
    })
}

/// Builds a deterministically initialized model for `spec`. Weights are
/// uniform in `±sqrt(6 / (fan_in + fan_out))`, biases start at zero.
pub fn make_task(spec: &TaskSpec, seed: u64) -> Result<Task> {
    spec.validate()?;
    let mut init = rng_for(seed, 1);
    let (model, system) = match spec {
        TaskSpec::Quadratic { dim, condition, offset } => {
            let mut sys_rng = rng_for(seed, 2);
            let system = quadratic_system(&mut sys_rng, *dim, *condition, *offset)?;
            let w = uniform_tensor(&mut init, &[*dim], *dim, 1)?;
            (
                Model::new(Architecture::Quadratic, vec![LayerParams::new("w", w)?])?,
                Some(system),
            )
        }
        TaskSpec::LinearRegression { inputs, outputs, .. } => (
            Model::new(
                Architecture::Linear,
                dense_pair(&mut init, "", *outputs, *inputs)?.into(),
            )?,
            None,
        ),
        TaskSpec::Logistic { inputs, .. } => (
            Model::new(Architecture::Logistic, dense_pair(&mut init, "", 1, *inputs)?.into())?,
            None,
        ),
        TaskSpec::Mlp { widths, activation, .. } => {
            let mut layers = Vec::new();
            for (i, pair) in widths.windows(2).enumerate() {
                layers.extend(dense_pair(&mut init, &format!("fc{i}."), pair[1], pair[0])?);
            }
            (
                Model::new(
                    Architecture::Mlp {
                        activation: *activation,
                    },
                    layers,
                )?,
                None,
            )
        }
    };
    Ok(Task {
        spec: spec.clone(),
        model,
        seed,
        system,
    })
}
