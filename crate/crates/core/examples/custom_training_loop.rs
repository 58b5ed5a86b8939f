//! Drive the optimizer by hand instead of through the harness: build a task,
//! stream minibatches, and inspect each step's trust-ratio records.
//!
//!     cargo run --release --example custom_training_loop

use lambc::data::derive_seed;
use lambc::{batches, forward, loss_and_grad, make_task, BatchPlan, Optimizer, OptimizerConfig, TaskSpec};

fn main() -> lambc::Result<()> {
    let spec = TaskSpec::Mlp {
        widths: vec![16, 32, 2],
        activation: lambc::Activation::Tanh,
        margin: 0.1,
    };
    let task = make_task(&spec, 42)?;
    let (train, test) = task.datasets(None, 1024, 256)?;
    let test = test.expect("mlp tasks have a test split");
    let mut model = task.model.clone();

    let mut config = OptimizerConfig::lambc(1.0);
    config.lr = 2e-2;
    config.warmup_steps = 20;
    let mut opt = Optimizer::new(config)?;

    let plan = BatchPlan {
        batch_size: 128,
        epochs: 15,
        seed: derive_seed(42, 0),
        drop_last: false,
    };
    for planned in batches(&train, plan)? {
        let (value, grads) = loss_and_grad(&model, &planned.batch)?;
        let outcome = opt.step(&mut model, &grads, Some(value.loss))?;
        if planned.last_in_epoch {
            let widest = outcome
                .records
                .iter()
                .max_by(|a, b| a.raw_gamma.total_cmp(&b.raw_gamma))
                .expect("layer-wise optimizer");
            let acc = forward(&model, &test.as_batch())?.accuracy.unwrap_or(0.0);
            println!(
                "epoch {:>2} step {:>3}  loss {:.4}  test acc {:.3}  max raw γ {:.3} ({})",
                planned.epoch, outcome.step, value.loss, acc, widest.raw_gamma, widest.layer
            );
        }
    }
    Ok(())
}
