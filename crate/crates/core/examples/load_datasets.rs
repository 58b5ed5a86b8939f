//! Round-trip synthetic data through CSV and IDX files, then train on the
//! files through the config interface.
//!
//!     cargo run --release --example load_datasets

use lambc::data::{load_csv, load_idx, write_csv, write_idx, IdxArray};
use lambc::harness::{self, ExperimentConfig};
use lambc::{synth_dataset, DatasetSpec};

fn main() -> lambc::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let spec = DatasetSpec::TwoGaussians {
        features: 16,
        overlap: 0.3,
    };
    let (train, test) = synth_dataset(&spec, 1024, 256, 7)?;
    let (train_path, test_path) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    write_csv(&train, &train_path)?;
    write_csv(&test, &test_path)?;
    let back = load_csv(&train_path, false)?;
    println!(
        "csv: {} rows x {} features, exact round-trip: {}",
        back.len(),
        back.feature_width(),
        back.features == train.features
    );

    let config = ExperimentConfig::parse(
        &format!(
            "data.source = \"csv\"\ndata.train_path = \"{}\"\ndata.test_path = \"{}\"\ndata.batch_size = 128\ntrain.epochs = 20",
            train_path.display(),
            test_path.display()
        ),
        &[],
    )?;
    let (log, _) = harness::train(&config)?;
    println!(
        "trained on csv: final test accuracy {:.4}",
        log.final_test_accuracy().unwrap_or(f64::NAN)
    );

    // A tiny 3x3 "image" set in the MNIST container format.
    let images = IdxArray {
        dims: vec![4, 3, 3],
        data: (0..36).map(|i| (i * 7 % 256) as u8).collect(),
    };
    let labels = IdxArray {
        dims: vec![4],
        data: vec![3, 1, 4, 1],
    };
    write_idx(dir.path().join("images.idx"), &images)?;
    write_idx(dir.path().join("labels.idx"), &labels)?;
    let ds = load_idx(dir.path().join("images.idx"), dir.path().join("labels.idx"))?;
    println!(
        "idx: {:?} features in [{}, {}], labels {:?}",
        ds.features.shape(),
        ds.features.data().iter().cloned().fold(f64::INFINITY, f64::min),
        ds.features.data().iter().cloned().fold(0.0, f64::max),
        ds.labels.data()
    );
    Ok(())
}
