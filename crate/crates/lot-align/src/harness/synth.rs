//! Synthetic two-modality data.
//!
//! Both modalities share a latent class structure. The fundus-like vectors
//! see the whole latent through a dense mixing matrix but carry per-sample
//! affine style jitter (gain and offset); the OCT-like vectors are masked
//! to a sparse class-specific set of active dimensions and carry isotropic
//! noise. That preserves the global-view-vs-localized-lesion character the
//! fusion design is built around, at desk scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Batch;
use crate::numkit::{DenseMatrix, LabelVector, SeededRng};

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub latent_dim: usize,
    pub fundus_dim: usize,
    pub oct_dim: usize,
    /// Scale of the per-sample affine style jitter on fundus vectors.
    pub style_jitter: f64,
    /// Isotropic noise scale on OCT vectors.
    pub oct_noise: f64,
    /// Fraction of OCT dimensions active per class, in (0, 1].
    pub lesion_sparsity: f64,
    /// Distance scale of the class means in latent space.
    pub class_separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 2,
            per_class: 100,
            latent_dim: 4,
            fundus_dim: 12,
            oct_dim: 16,
            style_jitter: 0.1,
            oct_noise: 0.1,
            lesion_sparsity: 0.5,
            class_separation: 5.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_classes", self.num_classes),
            ("per_class", self.per_class),
            ("latent_dim", self.latent_dim),
            ("fundus_dim", self.fundus_dim),
            ("oct_dim", self.oct_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("style_jitter", self.style_jitter),
            ("oct_noise", self.oct_noise),
            ("class_separation", self.class_separation),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and nonnegative"
                )));
            }
        }
        if !self.lesion_sparsity.is_finite() || self.lesion_sparsity <= 0.0 || self.lesion_sparsity > 1.0 {
            return Err(Error::InvalidConfig(
                "lesion_sparsity must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.num_classes * self.per_class
    }
}

/// A generated (or loaded) paired dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x_f: DenseMatrix,
    pub x_o: DenseMatrix,
    pub labels: LabelVector,
}

impl Dataset {
    pub fn new(x_f: DenseMatrix, x_o: DenseMatrix, labels: LabelVector) -> Result<Self> {
        if x_f.rows() != x_o.rows() || x_f.rows() != labels.len() {
            return Err(Error::DimensionMismatch(
                "dataset modality rows and labels disagree".into(),
            ));
        }
        Ok(Self { x_f, x_o, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    /// Rows listed in `idx`, in order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x_f: self.x_f.select_rows(idx),
            x_o: self.x_o.select_rows(idx),
            labels: self.labels.select(idx),
        }
    }

    pub fn batch(&self) -> Result<Batch> {
        Batch::new(self.x_f.clone(), self.x_o.clone(), self.labels.clone())
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::io::write_matrix(&dir.join("fundus.txt"), &self.x_f)?;
        crate::io::write_matrix(&dir.join("oct.txt"), &self.x_o)?;
        crate::io::write_labels(&dir.join("labels.txt"), &self.labels)?;
        Ok(())
    }

    pub fn load(dir: &std::path::Path) -> Result<Self> {
        Dataset::new(
            crate::io::read_matrix(&dir.join("fundus.txt"))?,
            crate::io::read_matrix(&dir.join("oct.txt"))?,
            crate::io::read_labels(&dir.join("labels.txt"))?,
        )
    }
}

/// Generate a dataset; bitwise deterministic in the spec (which carries the
/// seed). Samples are laid out class-major.
pub fn synth_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let k = spec.latent_dim;

    // fixed mixing matrices
    let a_f = gaussian_matrix(&mut rng, spec.fundus_dim, k, 1.0 / (k as f64).sqrt());
    let a_o = gaussian_matrix(&mut rng, spec.oct_dim, k, 1.0 / (k as f64).sqrt());

    // class means: unit latent directions scaled by the separation
    let mut means = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        let mut v: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for x in &mut v {
            *x *= spec.class_separation / norm;
        }
        means.push(v);
    }

    // class-specific sparse active sets over OCT dimensions
    let active_per_class = ((spec.lesion_sparsity * spec.oct_dim as f64 + 0.5).floor() as usize)
        .clamp(1, spec.oct_dim);
    let mut active = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        let mut dims: Vec<usize> = (0..spec.oct_dim).collect();
        rng.shuffle(&mut dims);
        let mut mask = vec![false; spec.oct_dim];
        for &d in dims.iter().take(active_per_class) {
            mask[d] = true;
        }
        active.push(mask);
    }

    let n = spec.total_samples();
    let mut x_f = DenseMatrix::zeros(n, spec.fundus_dim);
    let mut x_o = DenseMatrix::zeros(n, spec.oct_dim);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for c in 0..spec.num_classes {
        for _ in 0..spec.per_class {
            let z: Vec<f64> = means[c].iter().map(|&m| m + rng.normal()).collect();
            let gain = 1.0 + spec.style_jitter * rng.normal();
            for (d, slot) in x_f.row_mut(row).iter_mut().enumerate() {
                let signal: f64 = a_f.row(d).iter().zip(&z).map(|(&a, &zv)| a * zv).sum();
                *slot = gain * signal + spec.style_jitter * rng.normal();
            }
            for (d, slot) in x_o.row_mut(row).iter_mut().enumerate() {
                let signal: f64 = a_o.row(d).iter().zip(&z).map(|(&a, &zv)| a * zv).sum();
                let masked = if active[c][d] { signal } else { 0.0 };
                *slot = masked + spec.oct_noise * rng.normal();
            }
            labels.push(c);
            row += 1;
        }
    }
    Dataset::new(x_f, x_o, LabelVector::new(labels, spec.num_classes)?)
}

fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.normal() * scale).collect(),
    )
    .unwrap()
}

/// Fold-respecting nearest-class-mean probe on one modality: class means
/// fit on the other folds, argmin distance on the held-out fold, ties to
/// the lowest class index. Establishes a sanity floor for the classifiers.
pub fn nearest_class_mean_accuracy(
    x: &DenseMatrix,
    labels: &LabelVector,
    folds: &[Vec<usize>],
) -> Result<f64> {
    if folds.is_empty() {
        return Err(Error::EmptyInput("folds"));
    }
    let c = labels.num_classes();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (fi, fold) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(other, _)| *other != fi)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let mut means = vec![vec![0.0; x.cols()]; c];
        let mut counts = vec![0usize; c];
        for &i in &train {
            counts[labels[i]] += 1;
            for (m, &v) in means[labels[i]].iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for (mean, &count) in means.iter_mut().zip(&counts) {
            if count > 0 {
                for m in mean.iter_mut() {
                    *m /= count as f64;
                }
            }
        }
        for &i in fold {
            let mut best = (f64::INFINITY, 0usize);
            for (cls, mean) in means.iter().enumerate() {
                if counts[cls] == 0 {
                    continue;
                }
                let d: f64 = x
                    .row(i)
                    .iter()
                    .zip(mean)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                if d < best.0 {
                    best = (d, cls);
                }
            }
            if best.1 == labels[i] {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as f64 / total.max(1) as f64)
}
