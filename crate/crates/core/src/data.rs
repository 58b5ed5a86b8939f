//! Datasets, reproducible minibatching, and CSV/IDX ingestion.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::fmt_f64;
use crate::tensor::Tensor;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(seed, index)`:
/// `splitmix64(seed ^ splitmix64(index))`. Used for per-epoch shuffles and
/// for splitting one experiment seed into independent streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N × d]`
    pub features: Tensor,
    /// `[N]` class indices / scalar targets, or `[N × k]` vector targets.
    pub labels: Tensor,
    pub split: Split,
    pub provenance: String,
}

/// A minibatch: `inputs` is `[n × d]`, `targets` is `[n]` or `[n × k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl Batch {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "batch inputs must be [n × d], got {:?}",
                inputs.shape()
            )));
        }
        if targets.shape()[0] != inputs.shape()[0] {
            return Err(Error::Shape(format!(
                "inputs have {} samples but targets have {}",
                inputs.shape()[0],
                targets.shape()[0]
            )));
        }
        Ok(Batch { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn target_width(&self) -> usize {
        self.targets.len() / self.len()
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        let d = self.features();
        &self.inputs.data()[i * d..(i + 1) * d]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        let k = self.target_width();
        &self.targets.data()[i * k..(i + 1) * k]
    }

    /// Sub-batch holding only the listed rows.
    pub fn select(&self, rows: &[usize]) -> Result<Batch> {
        gather(&self.inputs, &self.targets, rows)
    }
}

fn gather(features: &Tensor, labels: &Tensor, rows: &[usize]) -> Result<Batch> {
    let n = features.shape()[0];
    let d = features.shape()[1];
    let k = labels.len() / n;
    let mut x = Vec::with_capacity(rows.len() * d);
    let mut y = Vec::with_capacity(rows.len() * k);
    for &r in rows {
        if r >= n {
            return Err(Error::Argument(format!("row {r} out of range for {n} samples")));
        }
        x.extend_from_slice(&features.data()[r * d..(r + 1) * d]);
        y.extend_from_slice(&labels.data()[r * k..(r + 1) * k]);
    }
    let mut y_shape = labels.shape().to_vec();
    y_shape[0] = rows.len();
    Batch::new(Tensor::new(vec![rows.len(), d], x)?, Tensor::new(y_shape, y)?)
}

impl Dataset {
    pub fn new(features: Tensor, labels: Tensor, split: Split, provenance: impl Into<String>) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "features must be [N × d], got {:?}",
                features.shape()
            )));
        }
        if labels.shape()[0] != features.shape()[0] {
            return Err(Error::Shape(format!(
                "{} feature rows but {} label rows",
                features.shape()[0],
                labels.shape()[0]
            )));
        }
        Ok(Dataset {
            features,
            labels,
            split,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_width(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn rows(&self, rows: &[usize]) -> Result<Batch> {
        gather(&self.features, &self.labels, rows)
    }

    pub fn as_batch(&self) -> Batch {
        Batch {
            inputs: self.features.clone(),
            targets: self.labels.clone(),
        }
    }

    /// Class label of row `i` for single-column label tensors.
    pub fn label(&self, i: usize) -> f64 {
        self.labels.data()[i]
    }
}

/// Draws sample `i` as `(features, label)`.
type Sampler<'a> = dyn FnMut(&mut ChaCha8Rng, usize) -> Result<(Vec<f64>, Vec<f64>)> + 'a;

/// Synthetic data families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetSpec {
    /// Points uniform in `[-1, 1]^d`, labelled by the argmax of a hidden
    /// linear map and kept only when at least `margin` away from every
    /// decision boundary. Linearly separable by construction.
    Planted {
        features: usize,
        classes: usize,
        margin: f64,
    },
    /// Two unit-variance Gaussians truncated to radius `R = sqrt(d) + 3`,
    /// centered at `±R (1 − overlap)` along the first axis. `overlap = 0`
    /// gives disjoint supports separated by the hyperplane `x₀ = 0`.
    TwoGaussians { features: usize, overlap: f64 },
    /// `y = W x + c + noise·N(0, 1)` with `x` uniform in `[-1, 1]^d`.
    LinearTeacher {
        features: usize,
        outputs: usize,
        noise: f64,
    },
}

impl DatasetSpec {
    pub fn features(&self) -> usize {
        match *self {
            DatasetSpec::Planted { features, .. }
            | DatasetSpec::TwoGaussians { features, .. }
            | DatasetSpec::LinearTeacher { features, .. } => features,
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match *self {
            DatasetSpec::Planted { classes, .. } => Some(classes),
            DatasetSpec::TwoGaussians { .. } => Some(2),
            DatasetSpec::LinearTeacher { .. } => None,
        }
    }
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Generates `n_train + n_test` samples from one seeded stream; the first
/// `n_train` form the training split. Classification splits are balanced:
/// sample `i` of each split has class `i mod classes`.
pub fn synth_dataset(spec: &DatasetSpec, n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train + n_test < 2 {
        return Err(Error::config("data.n_train", "need at least two samples in total"));
    }
    if n_train == 0 || n_test == 0 {
        return Err(Error::config("data.n_train", "both splits need at least one sample"));
    }
    if spec.features() == 0 {
        return Err(Error::config("task", "feature width must be positive"));
    }
    if let Some(classes) = spec.classes() {
        if classes < 2 {
            return Err(Error::config("task", "classification needs at least two classes"));
        }
        if n_train < classes || n_test < classes {
            return Err(Error::config(
                "data.n_train",
                format!("each split needs at least {classes} samples for {classes} classes"),
            ));
        }
    }
    let mut rng = rng_for(seed, 0xDA7A);
    let generate = |rng: &mut ChaCha8Rng, n: usize, split: Split, sampler: &mut Sampler<'_>| -> Result<Dataset> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut width = 1;
        for i in 0..n {
            let (xi, yi) = sampler(rng, i)?;
            width = yi.len();
            x.extend(xi);
            y.extend(yi);
        }
        let label_shape = if width == 1 { vec![n] } else { vec![n, width] };
        Dataset::new(
            Tensor::new(vec![n, spec.features()], x)?,
            Tensor::new(label_shape, y)?,
            split,
            format!("synthetic:{spec:?}:seed={seed}"),
        )
    };

    match *spec {
        DatasetSpec::Planted {
            features,
            classes,
            margin,
        } => {
            if !(margin >= 0.0) {
                return Err(Error::config("task.margin", "margin must be non-negative"));
            }
            let plant: Vec<Vec<f64>> = (0..classes)
                .map(|_| (0..features).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let mut sampler = |rng: &mut ChaCha8Rng, i: usize| {
                let want = i % classes;
                for _ in 0..MAX_REJECTIONS {
                    let x: Vec<f64> = (0..features).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let (label, gap) = planted_label(&plant, &x);
                    if label == want && gap >= margin {
                        return Ok((x, vec![label as f64]));
                    }
                }
                Err(Error::config(
                    "task.margin",
                    "margin too large: rejection sampling gave up",
                ))
            };
            let train = generate(&mut rng, n_train, Split::Train, &mut sampler)?;
            let test = generate(&mut rng, n_test, Split::Test, &mut sampler)?;
            Ok((train, test))
        }
        DatasetSpec::TwoGaussians { features, overlap } => {
            if !(0.0..=1.0).contains(&overlap) {
                return Err(Error::config("data.overlap", "overlap must lie in [0, 1]"));
            }
            let radius = (features as f64).sqrt() + 3.0;
            let offset = radius * (1.0 - overlap);
            let mut sampler = |rng: &mut ChaCha8Rng, i: usize| {
                let label = i % 2;
                loop {
                    let z: Vec<f64> = (0..features).map(|_| StandardNormal.sample(rng)).collect();
                    if z.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius {
                        let mut x = z;
                        x[0] += if label == 1 { offset } else { -offset };
                        return Ok((x, vec![label as f64]));
                    }
                }
            };
            let train = generate(&mut rng, n_train, Split::Train, &mut sampler)?;
            let test = generate(&mut rng, n_test, Split::Test, &mut sampler)?;
            Ok((train, test))
        }
        DatasetSpec::LinearTeacher {
            features,
            outputs,
            noise,
        } => {
            if outputs == 0 || !(noise >= 0.0) {
                return Err(Error::config("task", "linear teacher needs outputs ≥ 1 and noise ≥ 0"));
            }
            let scale = 1.0 / (features as f64).sqrt();
            let teacher: Vec<f64> = (0..outputs * features)
                .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let offset: Vec<f64> = (0..outputs).map(|_| rng.random_range(-0.5..0.5)).collect();
            let mut sampler = |rng: &mut ChaCha8Rng, _i: usize| {
                let x: Vec<f64> = (0..features).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..outputs)
                    .map(|o| {
                        let row = &teacher[o * features..(o + 1) * features];
                        let clean: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + offset[o];
                        let eps: f64 = StandardNormal.sample(rng);
                        clean + noise * eps
                    })
                    .collect();
                Ok((x, y))
            };
            let train = generate(&mut rng, n_train, Split::Train, &mut sampler)?;
            let test = generate(&mut rng, n_test, Split::Test, &mut sampler)?;
            Ok((train, test))
        }
    }
}

/// Argmax class and its distance to the nearest pairwise decision boundary.
fn planted_label(plant: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let scores: Vec<f64> = plant
        .iter()
        .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    let best = (0..scores.len())
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .unwrap_or(0);
    let gap = (0..scores.len())
        .filter(|&k| k != best)
        .map(|k| {
            let normal: f64 = plant[best]
                .iter()
                .zip(&plant[k])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (scores[best] - scores[k]) / normal
        })
        .fold(f64::INFINITY, f64::min);
    (best, gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub drop_last: bool,
}

impl BatchPlan {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::config(
                "data.batch_size",
                format!("batch size {} must lie in [1, {n}]", self.batch_size),
            ));
        }
        Ok(())
    }

    pub fn batches_per_epoch(&self, n: usize) -> usize {
        if self.drop_last {
            n / self.batch_size
        } else {
            n.div_ceil(self.batch_size)
        }
    }

    /// Row indices of every batch in `epoch` (0-based). The permutation is
    /// drawn from a ChaCha8 stream seeded with `derive_seed(seed, epoch)`.
    pub fn epoch_partition(&self, n: usize, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, epoch as u64));
        order.shuffle(&mut rng);
        order
            .chunks(self.batch_size)
            .filter(|c| !self.drop_last || c.len() == self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PlannedBatch {
    /// 1-based epoch index.
    pub epoch: usize,
    pub last_in_epoch: bool,
    pub indices: Vec<usize>,
    pub batch: Batch,
}

/// Ordered stream of batches over all epochs of `plan`.
pub struct Batches<'a> {
    dataset: &'a Dataset,
    plan: BatchPlan,
    epoch: usize,
    pending: std::vec::IntoIter<Vec<usize>>,
}

pub fn batches(dataset: &Dataset, plan: BatchPlan) -> Result<Batches<'_>> {
    plan.validate(dataset.len())?;
    Ok(Batches {
        dataset,
        plan,
        epoch: 0,
        pending: Vec::new().into_iter(),
    })
}

impl Iterator for Batches<'_> {
    type Item = PlannedBatch;

    fn next(&mut self) -> Option<PlannedBatch> {
        loop {
            if let Some(indices) = self.pending.next() {
                let batch = self
                    .dataset
                    .rows(&indices)
                    .expect("indices come from a permutation of 0..N");
                return Some(PlannedBatch {
                    epoch: self.epoch,
                    last_in_epoch: self.pending.len() == 0,
                    indices,
                    batch,
                });
            }
            if self.epoch >= self.plan.epochs {
                return None;
            }
            self.pending = self.plan.epoch_partition(self.dataset.len(), self.epoch).into_iter();
            self.epoch += 1;
        }
    }
}

fn format_error(source: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Format {
        source_name: source.display().to_string(),
        location: location.into(),
        message: message.into(),
    }
}

/// Reads a CSV whose last column is the label and the rest are features.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if (has_header && idx == 0) || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(format_error(
                path,
                format!("line {line_no}"),
                "need at least one feature and a label",
            ));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(format_error(
                    path,
                    format!("line {line_no}"),
                    format!("expected {w} fields, found {}", fields.len()),
                ));
            }
            _ => {}
        }
        for (col, field) in fields.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                format_error(
                    path,
                    format!("line {line_no}"),
                    format!("column {} is not a number: `{field}`", col + 1),
                )
            })?;
            if !value.is_finite() {
                return Err(format_error(path, format!("line {line_no}"), "non-finite value"));
            }
            if col + 1 == fields.len() {
                labels.push(value);
            } else {
                features.push(value);
            }
        }
    }
    let n = labels.len();
    let d = match width {
        Some(w) if n > 0 => w - 1,
        _ => return Err(format_error(path, "end of file", "no data rows")),
    };
    Dataset::new(
        Tensor::new(vec![n, d], features)?,
        Tensor::new(vec![n], labels)?,
        Split::Train,
        format!("csv:{}", path.display()),
    )
}

/// Writes a single-label dataset in the layout [`load_csv`] reads, without a
/// header. Values use 17 significant digits so a reload is bit-exact.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if dataset.labels.len() != dataset.len() {
        return Err(Error::Argument("CSV export supports one label column only".into()));
    }
    let d = dataset.feature_width();
    let mut out = String::new();
    for i in 0..dataset.len() {
        for x in &dataset.features.data()[i * d..(i + 1) * d] {
            out.push_str(&fmt_f64(*x));
            out.push(',');
        }
        out.push_str(&fmt_f64(dataset.label(i)));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

/// An unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        0x0000_0800 | self.dims.len() as u32
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.magic().to_be_bytes().to_vec();
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn parse(bytes: &[u8], source: &Path) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(format_error(source, "byte 0", "file shorter than the 4-byte magic"));
        }
        if bytes[0] != 0 || bytes[1] != 0 {
            return Err(format_error(source, "byte 0", "magic must start with two zero bytes"));
        }
        if bytes[2] != 0x08 {
            return Err(format_error(
                source,
                "byte 2",
                format!("unsupported element type 0x{:02x} (only unsigned byte 0x08)", bytes[2]),
            ));
        }
        let ndims = bytes[3] as usize;
        if ndims == 0 {
            return Err(format_error(source, "byte 3", "zero dimensions"));
        }
        let header = 4 + 4 * ndims;
        if bytes.len() < header {
            return Err(format_error(
                source,
                format!("byte {}", bytes.len()),
                format!("truncated header: {ndims} dimensions need {header} bytes"),
            ));
        }
        let dims: Vec<usize> = (0..ndims)
            .map(|i| {
                let at = 4 + 4 * i;
                u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize
            })
            .collect();
        let count: usize = dims.iter().product();
        if bytes.len() - header != count {
            return Err(format_error(
                source,
                format!("byte {header}"),
                format!("dims {dims:?} need {count} data bytes, found {}", bytes.len() - header),
            ));
        }
        Ok(IdxArray {
            dims,
            data: bytes[header..].to_vec(),
        })
    }
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    IdxArray::parse(&bytes, path)
}

pub fn write_idx(path: impl AsRef<Path>, array: &IdxArray) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&array.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image file (magic `0x00000803`) and its label file (magic
/// `0x00000801`). Images are flattened to `[N × rows·cols]` and scaled to
/// `[0, 1]`.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (images, labels) = (images.as_ref(), labels.as_ref());
    let img = read_idx(images)?;
    if img.magic() != IDX_IMAGE_MAGIC {
        return Err(format_error(
            images,
            "byte 0",
            format!("expected magic 0x{IDX_IMAGE_MAGIC:08x}, found 0x{:08x}", img.magic()),
        ));
    }
    let lab = read_idx(labels)?;
    if lab.magic() != IDX_LABEL_MAGIC {
        return Err(format_error(
            labels,
            "byte 0",
            format!("expected magic 0x{IDX_LABEL_MAGIC:08x}, found 0x{:08x}", lab.magic()),
        ));
    }
    if img.dims[0] != lab.dims[0] {
        return Err(format_error(
            labels,
            "byte 4",
            format!("{} labels for {} images", lab.dims[0], img.dims[0]),
        ));
    }
    let n = img.dims[0];
    let d = img.dims[1] * img.dims[2];
    let features: Vec<f64> = img.data.iter().map(|&p| f64::from(p) / 255.0).collect();
    let targets: Vec<f64> = lab.data.iter().map(|&l| f64::from(l)).collect();
    Dataset::new(
        Tensor::new(vec![n, d], features)?,
        Tensor::new(vec![n], targets)?,
        Split::Train,
        format!("idx:{}", images.display()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(n: usize) -> (Dataset, Dataset) {
        let spec = DatasetSpec::Planted {
            features: 4,
            classes: 2,
            margin: 0.05,
        };
        synth_dataset(&spec, n, n / 4, 11).unwrap()
    }

    #[test]
    fn synthetic_is_deterministic() {
        assert_eq!(planted(64), planted(64));
    }

    #[test]
    fn classes_are_balanced() {
        let spec = DatasetSpec::Planted {
            features: 3,
            classes: 3,
            margin: 0.0,
        };
        let (train, _) = synth_dataset(&spec, 31, 5, 2).unwrap();
        let mut counts = [0i64; 3];
        for i in 0..train.len() {
            counts[train.label(i) as usize] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }

    #[test]
    fn too_few_samples_for_classes() {
        let spec = DatasetSpec::Planted {
            features: 3,
            classes: 4,
            margin: 0.0,
        };
        assert!(matches!(synth_dataset(&spec, 3, 4, 0), Err(Error::Config { .. })));
        assert!(matches!(synth_dataset(&spec, 1, 0, 0), Err(Error::Config { .. })));
    }

    /// Perceptron training converges in finitely many updates exactly when
    /// the data is linearly separable.
    #[test]
    fn planted_data_is_linearly_separable() {
        let (train, _) = planted(512);
        let d = train.feature_width();
        let mut w = vec![0.0; d + 1];
        let mut converged = false;
        for _ in 0..10_000 {
            let mut mistakes = 0;
            for i in 0..train.len() {
                let x = &train.features.data()[i * d..(i + 1) * d];
                let y = if train.label(i) > 0.5 { 1.0 } else { -1.0 };
                let s: f64 = w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d];
                if y * s <= 0.0 {
                    mistakes += 1;
                    for j in 0..d {
                        w[j] += y * x[j];
                    }
                    w[d] += y;
                }
            }
            if mistakes == 0 {
                converged = true;
                break;
            }
        }
        assert!(converged);
    }

    #[test]
    fn disjoint_gaussians_are_perfectly_classified_by_bayes_rule() {
        let spec = DatasetSpec::TwoGaussians {
            features: 5,
            overlap: 0.0,
        };
        let (_, test) = synth_dataset(&spec, 100, 400, 9).unwrap();
        let d = test.feature_width();
        let correct = (0..test.len())
            .filter(|&i| (test.features.data()[i * d] > 0.0) == (test.label(i) > 0.5))
            .count();
        assert_eq!(correct, test.len());
    }

    #[test]
    fn full_batch_yields_one_batch_per_epoch() {
        let (train, _) = planted(40);
        let plan = BatchPlan {
            batch_size: 40,
            epochs: 3,
            seed: 5,
            drop_last: false,
        };
        let all: Vec<_> = batches(&train, plan).unwrap().collect();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|b| b.batch.len() == 40 && b.last_in_epoch));
        assert_eq!(all.iter().map(|b| b.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn drop_last_floors() {
        let plan = BatchPlan {
            batch_size: 3,
            epochs: 1,
            seed: 0,
            drop_last: true,
        };
        assert_eq!(plan.epoch_partition(10, 0).len(), 3);
        assert_eq!(plan.batches_per_epoch(10), 3);
        let keep = BatchPlan {
            drop_last: false,
            ..plan
        };
        let parts = keep.epoch_partition(10, 0);
        assert_eq!(parts.len(), 4);
        assert_eq!(parts[3].len(), 1);
    }

    #[test]
    fn every_sample_once_per_epoch() {
        let plan = BatchPlan {
            batch_size: 7,
            epochs: 1,
            seed: 99,
            drop_last: false,
        };
        for epoch in 0..5 {
            let mut seen: Vec<usize> = plan.epoch_partition(50, epoch).concat();
            seen.sort_unstable();
            assert_eq!(seen, (0..50).collect::<Vec<_>>());
        }
        assert_ne!(plan.epoch_partition(50, 0), plan.epoch_partition(50, 1));
        assert_eq!(plan.epoch_partition(50, 3), plan.epoch_partition(50, 3));
    }

    #[test]
    fn invalid_batch_size() {
        let (train, _) = planted(8);
        let plan = BatchPlan {
            batch_size: 9,
            epochs: 1,
            seed: 0,
            drop_last: false,
        };
        assert!(batches(&train, plan).is_err());
    }

    #[test]
    fn csv_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "1,2,0\n3,4,1\n5,6,0").unwrap();
        let ds = load_csv(&p, false).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_width(), 2);
        assert_eq!(ds.labels.data(), &[0.0, 1.0, 0.0]);

        fs::write(&p, "a,b,label\n1,2,0\n").unwrap();
        assert_eq!(load_csv(&p, true).unwrap().len(), 1);
    }

    #[test]
    fn csv_ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "1,2,0\n3,1\n").unwrap();
        match load_csv(&p, false) {
            Err(Error::Format { location, .. }) => assert_eq!(location, "line 2"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn idx_images_flatten() {
        let dir = tempfile::tempdir().unwrap();
        let img = IdxArray {
            dims: vec![2, 2, 2],
            data: vec![0, 255, 51, 102, 1, 2, 3, 4],
        };
        assert_eq!(img.magic(), IDX_IMAGE_MAGIC);
        let lab = IdxArray {
            dims: vec![2],
            data: vec![7, 3],
        };
        write_idx(dir.path().join("i"), &img).unwrap();
        write_idx(dir.path().join("l"), &lab).unwrap();
        let ds = load_idx(dir.path().join("i"), dir.path().join("l")).unwrap();
        assert_eq!(ds.features.shape(), &[2, 4]);
        assert_eq!(ds.features.data()[1], 1.0);
        assert_eq!(ds.features.data()[2], 0.2);
        assert!(ds.features.data().iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(ds.labels.data(), &[7.0, 3.0]);
    }

    #[test]
    fn idx_errors_carry_offsets() {
        let p = Path::new("mem");
        let err = IdxArray::parse(&[0, 0, 0x0D, 1, 0, 0, 0, 1, 0], p).unwrap_err();
        assert!(matches!(err, Error::Format { ref location, .. } if location == "byte 2"));
        let err = IdxArray::parse(&[0, 0, 8, 3, 0, 0, 0, 2], p).unwrap_err();
        assert!(matches!(err, Error::Format { ref location, .. } if location == "byte 8"));
        let err = IdxArray::parse(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2], p).unwrap_err();
        assert!(matches!(err, Error::Format { ref location, .. } if location == "byte 8"));

        let dir = tempfile::tempdir().unwrap();
        let labels = IdxArray {
            dims: vec![1],
            data: vec![0],
        };
        write_idx(dir.path().join("l"), &labels).unwrap();
        // A label file where an image file is expected.
        assert!(matches!(
            load_idx(dir.path().join("l"), dir.path().join("l")),
            Err(Error::Format { .. })
        ));
    }
}
