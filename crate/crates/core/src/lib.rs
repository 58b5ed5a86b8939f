//! Layer-wise adaptive optimizers with trust-ratio clipping.
//!
//! The crate implements LAMB and its clipped variant LAMBC, alongside SGD,
//! SGD with momentum, Adam and LARS, over a small set of desk-scale tasks
//! (a convex quadratic, linear and logistic regression, and a dense MLP).
//! Every layer-wise step emits a [`TrustRatioRecord`] so the effect of
//! clipping can be inspected and audited after the fact.
//!
//! ```
//! use lambc::{make_task, loss_and_grad, Optimizer, OptimizerConfig, TaskSpec};
//!
//! let task = make_task(&TaskSpec::Quadratic { dim: 4, condition: 10.0, offset: 0.0 }, 7).unwrap();
//! let (data, _) = task.datasets(None, 0, 0).unwrap();
//! let mut model = task.model.clone();
//! let mut opt = Optimizer::new(OptimizerConfig::lambc(1.0)).unwrap();
//! let (_, grads) = loss_and_grad(&model, &data.as_batch()).unwrap();
//! let out = opt.step(&mut model, &grads, None).unwrap();
//! assert!(out.records[0].clipped_gamma <= 1.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod tasks;
pub mod telemetry;
pub mod tensor;

pub use data::{batches, derive_seed, synth_dataset, Batch, BatchPlan, Dataset, DatasetSpec, Split};
pub use error::{Error, Result};
pub use harness::{audit, gradcheck, run, sweep, train, BatchSize, ExperimentConfig};
pub use model::{Activation, Architecture, LayerParams, Model};
pub use optim::{
    bound_schedule, clip_trust_ratio, trust_ratio, Algorithm, BiasCorrection, BoundSchedule, Optimizer,
    OptimizerConfig, StepOutcome, TrustRatioDenominator, TrustRatioRecord,
};
pub use tasks::{backward, finite_diff_grad, forward, loss_and_grad, make_task, Gradients, Task, TaskSpec};
pub use telemetry::{compare_runs, ComparisonReport, ComparisonSpec, RunLog};
pub use tensor::{combine, l2_norm, CombineOp, Tensor};
