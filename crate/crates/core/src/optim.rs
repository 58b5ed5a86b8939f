//! Step rules: SGD, SGD with momentum, Adam, LARS, LAMB, and LAMB with
//! trust-ratio clipping (LAMBC).
//!
//! The layerwise methods share one shape. For every layer they build an
//! inner update direction `u` (the Adam ratio for LAMB, the momentum buffer
//! for LARS, each plus `λw`), compute the trust ratio `γ = ‖w‖ / ‖·‖`,
//! optionally clamp it into a band `[lower, upper]`, and move
//! `w ← w − η γ u`. LAMBC is LAMB with the clamp switched on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerParams, Model};
use crate::tasks::Gradients;
use crate::tensor::{norm_of, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sgd,
    SgdMomentum,
    Adam,
    Lars,
    Lamb,
    Lambc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::SgdMomentum => "sgd-momentum",
            Algorithm::Adam => "adam",
            Algorithm::Lars => "lars",
            Algorithm::Lamb => "lamb",
            Algorithm::Lambc => "lambc",
        }
    }

    /// Whether the algorithm produces per-layer trust ratios.
    pub fn is_layerwise(self) -> bool {
        matches!(self, Algorithm::Lars | Algorithm::Lamb | Algorithm::Lambc)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sgd" => Algorithm::Sgd,
            "sgd-momentum" | "sgd_momentum" => Algorithm::SgdMomentum,
            "adam" => Algorithm::Adam,
            "lars" => Algorithm::Lars,
            "lamb" => Algorithm::Lamb,
            "lambc" => Algorithm::Lambc,
            other => {
                return Err(Error::config(
                    "optimizer.algorithm",
                    format!("unknown algorithm `{other}`"),
                ))
            }
        })
    }
}

/// How the EWMA moments are rescaled before forming the Adam ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasCorrection {
    /// Divide by the constants `1 − β₁` and `1 − β₂` at every step.
    PaperConstant,
    /// Divide by `1 − β₁ᵗ` and `1 − β₂ᵗ` (standard Adam).
    PowerT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrustRatioDenominator {
    /// `‖r‖`, the inner update without the decay term.
    RatioOnly,
    /// `‖r + λw‖`.
    RatioPlusDecay,
}

/// Scaling applied to the weight norm in the trust-ratio numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phi {
    Identity,
}

impl Phi {
    pub fn apply(self, norm: f64) -> f64 {
        match self {
            Phi::Identity => norm,
        }
    }
}

/// What the trust ratio becomes when a norm in it is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroNormPolicy {
    GammaOne,
}

/// How the clip band evolves with the step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum BoundSchedule {
    Constant,
    /// Experimental. Starts wide and tightens toward the configured band:
    /// `lower_t = lower (1 − 1/(ρt + 1))`, `upper_t = upper (1 + 1/(ρt))`.
    Envelope {
        rate: f64,
    },
}

/// `f64` fields that may hold `±inf`, which JSON cannot represent as numbers.
pub(crate) mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else if *x < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => super::parse_extended(&t).ok_or_else(|| de::Error::custom(format!("not a number: {t}"))),
        }
    }
}

/// Parses a float, accepting `inf`, `+inf`, `infinity` and `-inf`.
pub fn parse_extended(text: &str) -> Option<f64> {
    match text.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// Target learning rate η.
    pub lr: f64,
    /// Linear warm-up length in steps; 0 keeps η constant.
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Velocity factor for `sgd-momentum`.
    pub momentum: f64,
    pub clip_enabled: bool,
    pub clip_lower: f64,
    #[serde(with = "extended_f64")]
    pub clip_upper: f64,
    pub bound_schedule: BoundSchedule,
    pub bias_correction: BiasCorrection,
    pub phi: Phi,
    pub trust_ratio_denominator: TrustRatioDenominator,
    pub zero_norm_policy: ZeroNormPolicy,
    /// Debug switch: apply γ = 1 regardless of the computed ratio.
    pub force_unit_trust_ratio: bool,
}

impl OptimizerConfig {
    /// Defaults for `algorithm`, with the clip flag set to match it.
    pub fn new(algorithm: Algorithm) -> Self {
        OptimizerConfig {
            algorithm,
            lr: 1e-2,
            warmup_steps: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.0,
            momentum: 0.9,
            clip_enabled: algorithm == Algorithm::Lambc,
            clip_lower: 0.0,
            clip_upper: 1.0,
            bound_schedule: BoundSchedule::Constant,
            bias_correction: BiasCorrection::PaperConstant,
            phi: Phi::Identity,
            trust_ratio_denominator: TrustRatioDenominator::RatioOnly,
            zero_norm_policy: ZeroNormPolicy::GammaOne,
            force_unit_trust_ratio: false,
        }
    }

    pub fn lamb() -> Self {
        Self::new(Algorithm::Lamb)
    }

    /// LAMBC with the band `[0, upper]`.
    pub fn lambc(upper: f64) -> Self {
        OptimizerConfig {
            clip_upper: upper,
            ..Self::new(Algorithm::Lambc)
        }
    }

    /// Switches algorithm, keeping every hyperparameter and re-deriving the
    /// clip flag for LAMB/LAMBC.
    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        match algorithm {
            Algorithm::Lambc => self.clip_enabled = true,
            Algorithm::Lars => {}
            _ => self.clip_enabled = false,
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, msg: String| Err(Error::config(format!("optimizer.{key}"), msg));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return err("lr", format!("must be positive and finite, got {}", self.lr));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return err("beta1", format!("must satisfy 0 < β₁ < 1, got {}", self.beta1));
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return err("beta2", format!("must satisfy 0 < β₂ < 1, got {}", self.beta2));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return err("eps", format!("must be positive, got {}", self.eps));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return err(
                "weight_decay",
                format!("must be non-negative, got {}", self.weight_decay),
            );
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return err("momentum", format!("must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.clip_lower >= 0.0) || !self.clip_lower.is_finite() {
            return err(
                "clip_lower",
                format!("must be finite and non-negative, got {}", self.clip_lower),
            );
        }
        if !(self.clip_upper > 0.0) {
            return err(
                "clip_upper",
                format!("must be positive or inf, got {}", self.clip_upper),
            );
        }
        if self.clip_lower > self.clip_upper {
            return err(
                "clip_lower",
                format!(
                    "lower bound {} exceeds upper bound {}",
                    self.clip_lower, self.clip_upper
                ),
            );
        }
        if let BoundSchedule::Envelope { rate } = self.bound_schedule {
            if !(rate > 0.0) || !rate.is_finite() {
                return err("bound_rate", format!("envelope rate must be positive, got {rate}"));
            }
        }
        match (self.algorithm, self.clip_enabled) {
            (Algorithm::Lambc, false) => err("clip_enabled", "lambc always clips".into()),
            (Algorithm::Lamb, true) => err("clip_enabled", "lamb never clips; use lambc".into()),
            (Algorithm::Sgd | Algorithm::SgdMomentum | Algorithm::Adam, true) => {
                err("clip_enabled", format!("{} has no trust ratio to clip", self.algorithm))
            }
            _ => Ok(()),
        }
    }

    /// η at 1-based step `t`.
    pub fn lr_at(&self, t: u64) -> f64 {
        if self.warmup_steps == 0 || t >= self.warmup_steps {
            self.lr
        } else {
            self.lr * t as f64 / self.warmup_steps as f64
        }
    }

    /// Clip band in force at step `t`, or `None` when clipping is off.
    pub fn clip_bounds_at(&self, t: u64) -> Result<Option<(f64, f64)>> {
        if !self.clip_enabled {
            return Ok(None);
        }
        bound_schedule(t, self.bound_schedule, self.clip_lower, self.clip_upper).map(Some)
    }

    /// True when clipping cannot change any trust ratio: off, or the band is
    /// `[0, ∞)` under a constant schedule.
    pub fn clipping_is_identity(&self) -> bool {
        !self.clip_enabled
            || (self.clip_lower == 0.0
                && self.clip_upper == f64::INFINITY
                && self.bound_schedule == BoundSchedule::Constant)
    }
}

/// One layer's trust ratio at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRatioRecord {
    pub layer: String,
    pub step: u64,
    pub weight_norm: f64,
    /// Norm of the trust-ratio denominator (‖r‖, ‖r + λw‖, or ‖m‖ for LARS).
    pub update_norm: f64,
    pub raw_gamma: f64,
    pub clipped_gamma: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub loss: Option<f64>,
    pub records: Vec<TrustRatioRecord>,
}

/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, and bumps the layer step count.
pub fn adam_moment_update(layer: &mut LayerParams, g: &Tensor, beta1: f64, beta2: f64) -> Result<()> {
    if !g.same_shape(&layer.weights) {
        return Err(Error::Shape(format!(
            "gradient {:?} does not match layer `{}` {:?}",
            g.shape(),
            layer.name,
            layer.weights.shape()
        )));
    }
    for ((m, v), &gi) in layer
        .m
        .data_mut()
        .iter_mut()
        .zip(layer.v.data_mut().iter_mut())
        .zip(g.data())
    {
        *m = beta1 * *m + (1.0 - beta1) * gi;
        *v = beta2 * *v + (1.0 - beta2) * gi * gi;
    }
    layer.step_count += 1;
    layer.m.ensure_finite()?;
    layer.v.ensure_finite()
}

/// Bias-corrected moments at 1-based step `t`.
pub fn bias_correct(
    m: &Tensor,
    v: &Tensor,
    beta1: f64,
    beta2: f64,
    t: u64,
    mode: BiasCorrection,
) -> Result<(Tensor, Tensor)> {
    if t == 0 {
        return Err(Error::Argument("bias correction needs t ≥ 1".into()));
    }
    let (c1, c2) = match mode {
        BiasCorrection::PaperConstant => (1.0 - beta1, 1.0 - beta2),
        BiasCorrection::PowerT => {
            let t = i32::try_from(t).unwrap_or(i32::MAX);
            (1.0 - beta1.powi(t), 1.0 - beta2.powi(t))
        }
    };
    Ok((m.map(|x| x / c1)?, v.map(|x| x / c2)?))
}

/// `m̂ / (√v̂ + ε)` elementwise; zero wherever `m̂` is zero.
pub fn adam_ratio(m_hat: &Tensor, v_hat: &Tensor, eps: f64) -> Result<Tensor> {
    if !m_hat.same_shape(v_hat) {
        return Err(Error::Shape(format!("{:?} vs {:?}", m_hat.shape(), v_hat.shape())));
    }
    let mut out = m_hat.clone();
    for (r, &v) in out.data_mut().iter_mut().zip(v_hat.data()) {
        if v < 0.0 {
            return Err(Error::Numerical(format!("negative second moment {v}")));
        }
        if *r != 0.0 {
            *r /= v.sqrt() + eps;
        }
    }
    out.ensure_finite()?;
    Ok(out)
}

/// Norms behind one trust ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRatio {
    pub gamma: f64,
    pub weight_norm: f64,
    pub denominator_norm: f64,
}

fn decay_for(layer: &LayerParams, cfg: &OptimizerConfig) -> f64 {
    if layer.exclude_from_decay {
        0.0
    } else {
        cfg.weight_decay
    }
}

/// `φ(‖w‖) / D` with `D = ‖update‖` or `‖update + λw‖` depending on
/// `cfg.trust_ratio_denominator`. A zero in either norm gives γ = 1.
pub fn trust_ratio(layer: &LayerParams, update: &Tensor, cfg: &OptimizerConfig) -> Result<TrustRatio> {
    if !update.same_shape(&layer.weights) {
        return Err(Error::Shape(format!(
            "update {:?} does not match layer `{}`",
            update.shape(),
            layer.name
        )));
    }
    let weight_norm = norm_of(layer.weights.data());
    let denominator_norm = match cfg.trust_ratio_denominator {
        TrustRatioDenominator::RatioOnly => norm_of(update.data()),
        TrustRatioDenominator::RatioPlusDecay => {
            let decay = decay_for(layer, cfg);
            let combined: Vec<f64> = update
                .data()
                .iter()
                .zip(layer.weights.data())
                .map(|(r, w)| r + decay * w)
                .collect();
            norm_of(&combined)
        }
    };
    let gamma = match cfg.zero_norm_policy {
        ZeroNormPolicy::GammaOne if weight_norm == 0.0 || denominator_norm == 0.0 => 1.0,
        ZeroNormPolicy::GammaOne => cfg.phi.apply(weight_norm) / denominator_norm,
    };
    if !gamma.is_finite() {
        return Err(Error::Numerical(format!(
            "trust ratio of `{}` overflowed ({weight_norm} / {denominator_norm})",
            layer.name
        )));
    }
    Ok(TrustRatio {
        gamma,
        weight_norm,
        denominator_norm,
    })
}

/// `min(max(γ, lower), upper)`.
pub fn clip_trust_ratio(gamma: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(lower >= 0.0) || lower > upper || upper.is_nan() {
        return Err(Error::config(
            "optimizer.clip_lower",
            format!("invalid clip band [{lower}, {upper}]"),
        ));
    }
    Ok(gamma.max(lower).min(upper))
}

/// Clip band at 1-based step `t` for the configured band `[lower, upper]`.
pub fn bound_schedule(t: u64, schedule: BoundSchedule, lower: f64, upper: f64) -> Result<(f64, f64)> {
    match schedule {
        BoundSchedule::Constant => Ok((lower, upper)),
        BoundSchedule::Envelope { rate } => {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::config(
                    "optimizer.bound_rate",
                    format!("must be positive, got {rate}"),
                ));
            }
            if t == 0 {
                return Err(Error::Argument("bound schedule is defined for t ≥ 1".into()));
            }
            let rt = rate * t as f64;
            Ok((lower * (1.0 - 1.0 / (rt + 1.0)), upper * (1.0 + 1.0 / rt)))
        }
    }
}

fn layer_grad<'a>(grads: &'a Gradients, layer: &LayerParams, step: u64) -> Result<&'a Tensor> {
    let g = grads
        .get(&layer.name)
        .ok_or_else(|| Error::Shape(format!("no gradient for layer `{}`", layer.name)))?;
    if !g.same_shape(&layer.weights) {
        return Err(Error::Shape(format!(
            "gradient {:?} does not match layer `{}` {:?}",
            g.shape(),
            layer.name,
            layer.weights.shape()
        )));
    }
    if g.ensure_finite().is_err() {
        return Err(Error::Divergence {
            layer: layer.name.clone(),
            step,
            what: "gradient",
        });
    }
    Ok(g)
}

/// `w ← w − scale · u`, then a divergence check.
fn apply_update(layer: &mut LayerParams, update: &[f64], scale: f64, step: u64) -> Result<()> {
    for (w, u) in layer.weights.data_mut().iter_mut().zip(update) {
        *w -= scale * u;
    }
    if layer.weights.ensure_finite().is_err() {
        return Err(Error::Divergence {
            layer: layer.name.clone(),
            step,
            what: "weights",
        });
    }
    Ok(())
}

fn moments_diverged(layer: &LayerParams, step: u64) -> Error {
    Error::Divergence {
        layer: layer.name.clone(),
        step,
        what: "moment estimate",
    }
}

/// Plain or momentum SGD: `w ← w − η u` with `u = g + λw`, or the velocity
/// `m ← βm + u` when `momentum` is given.
pub fn sgd_step(
    model: &mut Model,
    grads: &Gradients,
    lr: f64,
    momentum: Option<f64>,
    weight_decay: f64,
    t: u64,
) -> Result<StepOutcome> {
    for layer in model.layers_mut() {
        let g = layer_grad(grads, layer, t)?;
        let decay = if layer.exclude_from_decay { 0.0 } else { weight_decay };
        let mut u: Vec<f64> = g
            .data()
            .iter()
            .zip(layer.weights.data())
            .map(|(gi, wi)| gi + decay * wi)
            .collect();
        if let Some(beta) = momentum {
            for (m, ui) in layer.m.data_mut().iter_mut().zip(u.iter_mut()) {
                *m = beta * *m + *ui;
                *ui = *m;
            }
            if layer.m.ensure_finite().is_err() {
                return Err(moments_diverged(layer, t));
            }
        }
        layer.step_count += 1;
        apply_update(layer, &u, lr, t)?;
    }
    Ok(StepOutcome {
        step: t,
        loss: None,
        records: Vec::new(),
    })
}

/// Moment update, bias correction and Adam ratio for one layer.
fn adam_inner(layer: &mut LayerParams, g: &Tensor, cfg: &OptimizerConfig, t: u64) -> Result<Tensor> {
    adam_moment_update(layer, g, cfg.beta1, cfg.beta2).map_err(|_| moments_diverged(layer, t))?;
    let (m_hat, v_hat) = bias_correct(
        &layer.m,
        &layer.v,
        cfg.beta1,
        cfg.beta2,
        layer.step_count,
        cfg.bias_correction,
    )
    .map_err(|_| moments_diverged(layer, t))?;
    adam_ratio(&m_hat, &v_hat, cfg.eps).map_err(|_| moments_diverged(layer, t))
}

fn with_decay(inner: &Tensor, layer: &LayerParams, decay: f64) -> Vec<f64> {
    inner
        .data()
        .iter()
        .zip(layer.weights.data())
        .map(|(r, w)| r + decay * w)
        .collect()
}

/// Trust ratio, optional clamp, and the record describing both.
fn layerwise_gamma(
    layer: &LayerParams,
    inner: &Tensor,
    cfg: &OptimizerConfig,
    t: u64,
) -> Result<(f64, TrustRatioRecord)> {
    let tr = trust_ratio(layer, inner, cfg).map_err(|_| Error::Divergence {
        layer: layer.name.clone(),
        step: t,
        what: "trust ratio",
    })?;
    let mut gamma = tr.gamma;
    if let Some((lo, hi)) = cfg.clip_bounds_at(t)? {
        gamma = clip_trust_ratio(gamma, lo, hi)?;
    }
    if cfg.force_unit_trust_ratio {
        gamma = 1.0;
    }
    let record = TrustRatioRecord {
        layer: layer.name.clone(),
        step: t,
        weight_norm: tr.weight_norm,
        update_norm: tr.denominator_norm,
        raw_gamma: tr.gamma,
        clipped_gamma: gamma,
        clipped: gamma != tr.gamma,
    };
    Ok((gamma, record))
}

/// Adam: `w ← w − η (r + λw)`.
pub fn adam_step(model: &mut Model, grads: &Gradients, cfg: &OptimizerConfig, t: u64) -> Result<StepOutcome> {
    let lr = cfg.lr_at(t);
    for layer in model.layers_mut() {
        let g = layer_grad(grads, layer, t)?;
        let r = adam_inner(layer, g, cfg, t)?;
        let u = with_decay(&r, layer, decay_for(layer, cfg));
        apply_update(layer, &u, lr, t)?;
    }
    Ok(StepOutcome {
        step: t,
        loss: None,
        records: Vec::new(),
    })
}

/// LAMB, or LAMBC when `cfg.clip_enabled`:
/// moments → bias correction → ratio `r` → trust ratio → clamp →
/// `w ← w − η γ (r + λw)`.
pub fn lamb_step(model: &mut Model, grads: &Gradients, cfg: &OptimizerConfig, t: u64) -> Result<StepOutcome> {
    if !matches!(cfg.algorithm, Algorithm::Lamb | Algorithm::Lambc) {
        return Err(Error::Argument(format!("lamb_step called with {}", cfg.algorithm)));
    }
    let lr = cfg.lr_at(t);
    let mut records = Vec::with_capacity(model.layer_count());
    for layer in model.layers_mut() {
        let g = layer_grad(grads, layer, t)?;
        let r = adam_inner(layer, g, cfg, t)?;
        let (gamma, record) = layerwise_gamma(layer, &r, cfg, t)?;
        let u = with_decay(&r, layer, decay_for(layer, cfg));
        apply_update(layer, &u, lr * gamma, t)?;
        records.push(record);
    }
    Ok(StepOutcome {
        step: t,
        loss: None,
        records,
    })
}

/// LARS: `m ← β₁m + (1−β₁)g`, trust ratio `‖w‖/‖m‖`, then
/// `w ← w − η γ (m + λw)`. Honors the clip band when enabled (LARC).
pub fn lars_step(model: &mut Model, grads: &Gradients, cfg: &OptimizerConfig, t: u64) -> Result<StepOutcome> {
    if cfg.algorithm != Algorithm::Lars {
        return Err(Error::Argument(format!("lars_step called with {}", cfg.algorithm)));
    }
    let lr = cfg.lr_at(t);
    let mut records = Vec::with_capacity(model.layer_count());
    for layer in model.layers_mut() {
        let g = layer_grad(grads, layer, t)?;
        for (m, gi) in layer.m.data_mut().iter_mut().zip(g.data()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
        }
        if layer.m.ensure_finite().is_err() {
            return Err(moments_diverged(layer, t));
        }
        layer.step_count += 1;
        let m = layer.m.clone();
        let (gamma, record) = layerwise_gamma(layer, &m, cfg, t)?;
        let u = with_decay(&m, layer, decay_for(layer, cfg));
        apply_update(layer, &u, lr * gamma, t)?;
        records.push(record);
    }
    Ok(StepOutcome {
        step: t,
        loss: None,
        records,
    })
}

/// Owns a validated configuration and the global step counter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer { config, step: 0 })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. `loss` is the batch loss measured before the step
    /// and is echoed into the outcome.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients, loss: Option<f64>) -> Result<StepOutcome> {
        let t = self.step + 1;
        let cfg = &self.config;
        let mut outcome = match cfg.algorithm {
            Algorithm::Sgd => sgd_step(model, grads, cfg.lr_at(t), None, cfg.weight_decay, t)?,
            Algorithm::SgdMomentum => sgd_step(model, grads, cfg.lr_at(t), Some(cfg.momentum), cfg.weight_decay, t)?,
            Algorithm::Adam => adam_step(model, grads, cfg, t)?,
            Algorithm::Lars => lars_step(model, grads, cfg, t)?,
            Algorithm::Lamb | Algorithm::Lambc => lamb_step(model, grads, cfg, t)?,
        };
        self.step = t;
        outcome.loss = loss;
        Ok(outcome)
    }
}
