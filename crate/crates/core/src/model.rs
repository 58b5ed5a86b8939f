//! Per-layer parameters and optimizer moment state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One named parameter tensor together with the optimizer state that
/// belongs to it. Weight matrices and bias vectors are separate layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub name: String,
    pub weights: Tensor,
    /// First moment (momentum buffer for SGD/LARS).
    pub m: Tensor,
    /// Second moment. Elementwise non-negative.
    pub v: Tensor,
    pub step_count: u64,
    /// Skip the weight-decay term for this layer.
    pub exclude_from_decay: bool,
}

impl LayerParams {
    pub fn new(name: impl Into<String>, weights: Tensor) -> Result<Self> {
        let m = Tensor::zeros(weights.shape())?;
        let v = m.clone();
        Ok(LayerParams {
            name: name.into(),
            weights,
            m,
            v,
            step_count: 0,
            exclude_from_decay: false,
        })
    }

    pub fn is_bias(&self) -> bool {
        self.name.ends_with("bias")
    }

    /// Drops moment state back to the zero initialization.
    pub fn reset_state(&mut self) {
        self.m.data_mut().fill(0.0);
        self.v.data_mut().fill(0.0);
        self.step_count = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y = f(x)`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config(
                "task.activation",
                format!("unsupported activation `{other}` (expected relu or tanh)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Architecture {
    /// Single parameter vector `w` of the objective `½‖Aw − b‖²`.
    Quadratic,
    /// Affine map `Wx + c` with squared error.
    Linear,
    /// Affine map to one logit with binary cross-entropy.
    Logistic,
    /// Dense layers with a hidden activation and softmax cross-entropy.
    Mlp { activation: Activation },
}

impl Architecture {
    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::Quadratic => "quadratic",
            Architecture::Linear => "linear",
            Architecture::Logistic => "logistic",
            Architecture::Mlp { .. } => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub architecture: Architecture,
    layers: Vec<LayerParams>,
}

impl Model {
    pub fn new(architecture: Architecture, layers: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a model needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layers[..i].iter().any(|l| l.name == layer.name) {
                return Err(Error::Argument(format!("duplicate layer name `{}`", layer.name)));
            }
            if !layer.m.same_shape(&layer.weights) || !layer.v.same_shape(&layer.weights) {
                return Err(Error::Shape(format!(
                    "moment state of `{}` does not match its weights",
                    layer.name
                )));
            }
        }
        Ok(Model { architecture, layers })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Mutable layer access. Layer names and shapes are fixed for the life of
    /// the model; only contents may change.
    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&LayerParams> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.name.clone()).collect()
    }

    pub fn reset_state(&mut self) {
        self.layers.iter_mut().for_each(LayerParams::reset_state);
    }
}

/// Deep copy of a model including moment state.
pub fn snapshot(model: &Model) -> Model {
    model.clone()
}
