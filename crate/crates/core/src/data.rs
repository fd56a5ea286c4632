//! Labeled data pools: a seeded Gaussian-cluster generator, IDX (MNIST/FMNIST)
//! ingestion and stratified holdout splitting.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::{self, rng_for};

/// Feature vectors with class labels, indexed by class.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPool {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_index: Vec<Vec<usize>>,
}

impl LabeledPool {
    /// Builds a pool over `num_classes` classes. Every class must occur and all
    /// rows must share one dimension.
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::structural(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let dim = inputs.first().map_or(0, Vec::len);
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::structural("inputs have mixed dimensions"));
        }
        let mut class_index = vec![Vec::new(); num_classes];
        for (row, &y) in labels.iter().enumerate() {
            let slot = class_index.get_mut(y).ok_or_else(|| {
                Error::structural(format!("label {y} out of range for {num_classes} classes"))
            })?;
            slot.push(row);
        }
        if let Some(c) = class_index.iter().position(Vec::is_empty) {
            return Err(Error::InsufficientData(format!("class {c} has no rows")));
        }
        Ok(Self {
            inputs,
            labels,
            class_index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, row: usize) -> &[f64] {
        &self.inputs[row]
    }

    /// Row positions holding class `c`.
    pub fn rows_of(&self, c: usize) -> &[usize] {
        &self.class_index[c]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.class_index.iter().map(Vec::len).collect()
    }

    /// Empirical label frequencies.
    pub fn class_prior(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.class_index
            .iter()
            .map(|rows| rows.len() as f64 / n)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Synthetic,
    IdxFiles,
}

/// How to build the labeled pool for an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub kind: DatasetKind,
    pub num_classes: usize,
    /// Feature dimension. Ignored for IDX data, where it is read from the file.
    #[serde(default)]
    pub dim: usize,
    /// Rows per class. For IDX data, the first `per_class` rows of each class are kept.
    pub per_class: usize,
    #[serde(default)]
    pub separation: f64,
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "synthetic".to_string()
}

impl DatasetSpec {
    pub fn synthetic(
        num_classes: usize,
        dim: usize,
        per_class: usize,
        separation: f64,
        seed: u64,
    ) -> Self {
        Self {
            name: "synthetic".to_string(),
            kind: DatasetKind::Synthetic,
            num_classes,
            dim,
            per_class,
            separation,
            images: None,
            labels: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("dataset needs at least 2 classes".into()));
        }
        if self.per_class < 1 {
            return Err(Error::Config("per_class must be >= 1".into()));
        }
        match self.kind {
            DatasetKind::Synthetic => {
                if self.dim == 0 {
                    return Err(Error::Config("synthetic data needs dim >= 1".into()));
                }
                if !(self.separation > 0.0 && self.separation.is_finite()) {
                    return Err(Error::Config("separation must be positive".into()));
                }
            }
            DatasetKind::IdxFiles => {
                if self.images.is_none() || self.labels.is_none() {
                    return Err(Error::Config(
                        "idx-files datasets need `images` and `labels` paths".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Builds the pool this spec describes.
    pub fn build(&self) -> Result<LabeledPool> {
        self.validate()?;
        match self.kind {
            DatasetKind::Synthetic => make_gaussian_pool(self),
            DatasetKind::IdxFiles => load_idx_pool(
                self.images.as_deref().expect("validated"),
                self.labels.as_deref().expect("validated"),
                self.num_classes,
                self.per_class,
            ),
        }
    }
}

/// Class means for the synthetic generator: `separation / sqrt(2) * e_(c mod D)`,
/// rotated by a seeded random orthogonal matrix. With `C <= D` any two means
/// are exactly `separation` apart. Classes beyond the first `D` are stacked in
/// layers offset by `separation` along the all-ones diagonal, which keeps every
/// pairwise distance at least `separation`.
pub fn gaussian_class_means(spec: &DatasetSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = rng_for(spec.seed, rng::TAG_POOL, 0);
    let rotation = random_orthogonal(d, &mut rng);
    let radius = spec.separation / std::f64::consts::SQRT_2;
    let lift = spec.separation / (d as f64).sqrt();
    Ok((0..spec.num_classes)
        .map(|c| {
            let mut base = vec![(c / d) as f64 * lift; d];
            base[c % d] += radius;
            rotation.iter().map(|row| dot(row, &base)).collect()
        })
        .collect())
}

/// Draws `per_class` unit-variance isotropic Gaussian samples around each class mean.
pub fn make_gaussian_pool(spec: &DatasetSpec) -> Result<LabeledPool> {
    if spec.kind != DatasetKind::Synthetic {
        return Err(Error::Config(
            "make_gaussian_pool needs a synthetic spec".into(),
        ));
    }
    let means = gaussian_class_means(spec)?;
    sample_gaussian_pool(
        &means,
        spec.per_class,
        rng::derive_seed(spec.seed, rng::TAG_POOL, 1),
    )
}

/// Draws `per_class` unit-variance samples around each of the given means.
pub fn sample_gaussian_pool(
    means: &[Vec<f64>],
    per_class: usize,
    seed: u64,
) -> Result<LabeledPool> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(means.len() * per_class);
    let mut labels = Vec::with_capacity(inputs.capacity());
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            inputs.push(
                mean.iter()
                    .map(|&m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(c);
        }
    }
    LabeledPool::new(inputs, labels, means.len())
}

/// Gram-Schmidt on a Gaussian matrix; rows of the result are orthonormal.
fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// An unsigned-byte IDX tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

const IDX_UBYTE: u8 = 0x08;

impl IdxTensor {
    /// Serializes back to the IDX byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&[0, 0, IDX_UBYTE, self.dims.len() as u8]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

/// Parses an IDX file whose element type is unsigned byte.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    let fail = |offset: usize, message: String| Error::Format { offset, message };
    if bytes.len() < 4 {
        return Err(fail(bytes.len(), "header needs 4 bytes".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(fail(
            0,
            format!("bad magic {:02x} {:02x}", bytes[0], bytes[1]),
        ));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(fail(
            2,
            format!("unsupported element type 0x{:02x}", bytes[2]),
        ));
    }
    let ndims = bytes[3] as usize;
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        let at = 4 + 4 * i;
        let raw: [u8; 4] = bytes
            .get(at..at + 4)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| fail(bytes.len(), format!("dimension {i} truncated")))?;
        dims.push(u32::from_be_bytes(raw) as usize);
    }
    let start = 4 + 4 * ndims;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail(4, "dimension product overflows".into()))?;
    let available = bytes.len() - start;
    if available < expected {
        return Err(fail(
            bytes.len(),
            format!("payload truncated: declared {expected} items, found {available}"),
        ));
    }
    if available > expected {
        return Err(fail(
            start + expected,
            format!("{} trailing bytes after payload", available - expected),
        ));
    }
    Ok(IdxTensor {
        dims,
        data: bytes[start..].to_vec(),
    })
}

fn read_idx(path: &Path) -> Result<IdxTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

/// Builds a pool from an IDX image file (3-D) and label file (1-D). Images are
/// flattened and scaled to `[0, 1]`; the first `per_class` rows of each class are kept.
pub fn load_idx_pool(
    images: &Path,
    labels: &Path,
    num_classes: usize,
    per_class: usize,
) -> Result<LabeledPool> {
    let images = read_idx(images)?;
    let labels = read_idx(labels)?;
    pool_from_idx(&images, &labels, num_classes, per_class)
}

pub fn pool_from_idx(
    images: &IdxTensor,
    labels: &IdxTensor,
    num_classes: usize,
    per_class: usize,
) -> Result<LabeledPool> {
    if labels.dims.len() != 1 {
        return Err(Error::structural(format!(
            "label tensor must be 1-D, got {} dims",
            labels.dims.len()
        )));
    }
    let Some((&count, rest)) = images.dims.split_first() else {
        return Err(Error::structural("image tensor has no dimensions"));
    };
    if count != labels.dims[0] {
        return Err(Error::structural(format!(
            "{count} images but {} labels",
            labels.dims[0]
        )));
    }
    let width: usize = rest.iter().product();
    let mut kept = vec![0usize; num_classes];
    let mut inputs = Vec::new();
    let mut ys = Vec::new();
    for (row, &y) in labels.data.iter().enumerate() {
        let y = y as usize;
        if y >= num_classes {
            return Err(Error::structural(format!(
                "label {y} at row {row} out of range for {num_classes} classes"
            )));
        }
        if kept[y] >= per_class {
            continue;
        }
        kept[y] += 1;
        let pixels = &images.data[row * width..(row + 1) * width];
        inputs.push(pixels.iter().map(|&p| f64::from(p) / 255.0).collect());
        ys.push(y);
    }
    LabeledPool::new(inputs, ys, num_classes)
}

/// Stratified split. Each class sends `round(n_c * holdout_fraction)` rows to the
/// holdout, clamped so both sides keep at least one row. Row order is preserved.
pub fn split_pool(
    pool: &LabeledPool,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(LabeledPool, LabeledPool)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::structural(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let mut in_holdout = vec![false; pool.len()];
    for c in 0..pool.num_classes() {
        let rows = pool.rows_of(c);
        let n = rows.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "class {c} has {n} rows; a split needs at least 2"
            )));
        }
        let take = ((n as f64 * holdout_fraction).round() as usize).clamp(1, n - 1);
        let mut shuffled = rows.to_vec();
        shuffled.shuffle(&mut rng_for(seed, rng::TAG_SPLIT, c as u64));
        for &r in &shuffled[..take] {
            in_holdout[r] = true;
        }
    }

    let (mut train_x, mut train_y, mut hold_x, mut hold_y) = (vec![], vec![], vec![], vec![]);
    for (row, &flag) in in_holdout.iter().enumerate() {
        let (xs, ys) = if flag {
            (&mut hold_x, &mut hold_y)
        } else {
            (&mut train_x, &mut train_y)
        };
        xs.push(pool.inputs[row].clone());
        ys.push(pool.labels[row]);
    }
    let c = pool.num_classes();
    Ok((
        LabeledPool::new(train_x, train_y, c)?,
        LabeledPool::new(hold_x, hold_y, c)?,
    ))
}
