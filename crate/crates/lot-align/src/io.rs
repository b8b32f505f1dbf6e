//! Text persistence: the project matrix format, label files, transport
//! plan and feature plan sidecars, and model checkpoints.
//!
//! Matrix format: UTF-8, first line `R C` (decimal integers), then R lines
//! of C space-separated floats in shortest-round-trip decimal, so a
//! write/read cycle reproduces every value bit for bit. A label file is one
//! integer per line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::{FusionModel, ModelConfig};
use crate::gw::FeaturePlan;
use crate::numkit::{BoolMatrix, DenseMatrix, Histogram, LabelVector};
use crate::ot::TransportPlan;

/// Matrix to canonical text form.
pub fn matrix_to_string(m: &DenseMatrix) -> Result<String> {
    if !m.all_finite() {
        return Err(Error::InvalidInput(
            "matrix with non-finite entries cannot be serialized".into(),
        ));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let mut first = true;
        for &v in m.row(i) {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn matrix_from_str(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let mut parts = header.split_whitespace();
    let rows: usize = parse_field(parts.next(), "row count")?;
    let cols: usize = parse_field(parts.next(), "column count")?;
    if parts.next().is_some() {
        return Err(Error::Parse("matrix header has trailing fields".into()));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (li, line) in lines.enumerate() {
        if li >= rows {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse(format!("matrix has more than {rows} rows")));
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad float {tok:?} on line {}", li + 2)))
            })
            .collect::<Result<_>>()?;
        if values.len() != cols {
            return Err(Error::Parse(format!(
                "row {} has {} values, expected {cols}",
                li + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("non-finite value on line {}", li + 2)));
        }
        data.extend(values);
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "matrix has {} values, expected {rows}x{cols}",
            data.len()
        )));
    }
    DenseMatrix::from_vec(rows, cols, data)
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what}")))
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    std::fs::write(path, matrix_to_string(m)?)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    matrix_from_str(&std::fs::read_to_string(path)?)
}

pub fn write_labels(path: &Path, labels: &LabelVector) -> Result<()> {
    let mut out = String::new();
    for &l in labels.labels() {
        let _ = writeln!(out, "{l}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read labels; the class count is the largest label plus one.
pub fn read_labels(path: &Path) -> Result<LabelVector> {
    let text = std::fs::read_to_string(path)?;
    let labels: Vec<usize> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad label {l:?}")))
        })
        .collect::<Result<_>>()?;
    if labels.is_empty() {
        return Err(Error::EmptyInput("label file"));
    }
    let num_classes = labels.iter().max().unwrap() + 1;
    LabelVector::new(labels, num_classes)
}

/// Hex SHA-256 of a matrix's canonical text form.
pub fn matrix_digest(m: &DenseMatrix) -> Result<String> {
    Ok(hex_digest(matrix_to_string(m)?.as_bytes()))
}

/// Digest of an embedding pair (the feature plan's source batch).
pub fn pair_digest(a: &DenseMatrix, b: &DenseMatrix) -> Result<String> {
    let mut text = matrix_to_string(a)?;
    text.push_str(&matrix_to_string(b)?);
    Ok(hex_digest(text.as_bytes()))
}

fn mask_digest(mask: &BoolMatrix) -> String {
    let mut text = format!("{} {}\n", mask.rows(), mask.cols());
    for &b in mask.data() {
        text.push(if b { '1' } else { '0' });
    }
    hex_digest(text.as_bytes())
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Sidecar metadata stored next to a serialized transport plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanSidecar {
    pub epsilon: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub mask_digest: Option<String>,
}

/// Write a plan as matrix text plus a `<path>.meta.json` sidecar.
pub fn save_plan(path: &Path, plan: &TransportPlan) -> Result<()> {
    write_matrix(path, plan.matrix())?;
    let sidecar = PlanSidecar {
        epsilon: plan.info().epsilon,
        iterations: plan.info().iterations,
        residual: plan.info().residual,
        converged: plan.info().converged,
        mask_digest: plan.mask().map(mask_digest),
    };
    std::fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Sidecar metadata stored next to a serialized feature plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturePlanSidecar {
    pub epsilon: f64,
    pub source_digest: String,
}

pub fn save_feature_plan(path: &Path, t_v: &FeaturePlan, source_digest: &str) -> Result<()> {
    write_matrix(path, t_v.matrix())?;
    let sidecar = FeaturePlanSidecar {
        epsilon: t_v.plan().info().epsilon,
        source_digest: source_digest.to_string(),
    };
    std::fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    path.with_file_name(name)
}

/// Checkpoint header: one JSON line ahead of the parameter blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub model: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub fold: usize,
    pub t_v_digest: String,
    /// Echo of the experiment configuration the checkpoint was trained
    /// under, when one exists.
    #[serde(default)]
    pub experiment: Option<serde_json::Value>,
}

fn t_v_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".t_v.txt");
    path.with_file_name(name)
}

/// Single checkpoint file: JSON header line, then `name` / matrix blocks
/// for every parameter. The frozen feature plan is stored alongside as
/// `<path>.t_v.txt` and pinned by digest in the header.
pub fn save_checkpoint(
    path: &Path,
    model: &FusionModel,
    seed: u64,
    fold: usize,
    experiment: Option<serde_json::Value>,
) -> Result<()> {
    let t_v_digest = matrix_digest(model.t_v().matrix())?;
    let header = CheckpointHeader {
        version: 1,
        model: model.config().clone(),
        seed,
        epoch: model.epoch(),
        fold,
        t_v_digest,
        experiment,
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for p in model.params() {
        out.push_str(&p.name);
        out.push('\n');
        out.push_str(&matrix_to_string(&p.value)?);
    }
    std::fs::write(path, out)?;
    write_matrix(&t_v_path(path), model.t_v().matrix())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(FusionModel, CheckpointHeader)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: CheckpointHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Parse("empty checkpoint".into()))?,
    )?;
    if header.version != 1 {
        return Err(Error::InvalidConfig(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let mut model = FusionModel::init(header.model.clone(), header.seed)?;
    model.set_epoch(header.epoch);

    let mut loaded = 0usize;
    while let Some(name) = lines.next() {
        if name.trim().is_empty() {
            continue;
        }
        let dims = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("parameter {name} missing dimensions")))?;
        let mut parts = dims.split_whitespace();
        let rows: usize = parse_field(parts.next(), "row count")?;
        let cols: usize = parse_field(parts.next(), "column count")?;
        let mut block = format!("{rows} {cols}\n");
        for _ in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("parameter {name} truncated")))?;
            block.push_str(line);
            block.push('\n');
        }
        model.set_param(name, matrix_from_str(&block)?)?;
        loaded += 1;
    }
    if loaded != model.params().len() {
        return Err(Error::Parse(format!(
            "checkpoint holds {loaded} parameters, model has {}",
            model.params().len()
        )));
    }

    let t_v_matrix = read_matrix(&t_v_path(path))?;
    if matrix_digest(&t_v_matrix)? != header.t_v_digest {
        return Err(Error::InvalidInput(
            "feature plan digest does not match checkpoint header".into(),
        ));
    }
    let d = t_v_matrix.rows();
    let d2 = t_v_matrix.cols();
    let plan = TransportPlan::from_parts(
        t_v_matrix,
        Histogram::uniform(d)?,
        Histogram::uniform(d2)?,
        None,
        0.0,
    )?;
    model.set_feature_plan(FeaturePlan::from_plan(plan))?;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn matrix_round_trip_hand_case() {
        let m = DenseMatrix::from_rows(&[vec![1.5, -0.25], vec![1e-300, 3.0]]).unwrap();
        let text = matrix_to_string(&m).unwrap();
        assert!(text.starts_with("2 2\n"));
        assert_eq!(matrix_from_str(&text).unwrap(), m);
    }

    #[test]
    fn rejects_ragged_and_nonfinite() {
        assert!(matrix_from_str("2 2\n1 2\n3\n").is_err());
        assert!(matrix_from_str("1 1\ninf\n").is_err());
        assert!(matrix_to_string(&DenseMatrix::constant(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn label_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        let y = LabelVector::new(vec![0, 2, 1, 2], 3).unwrap();
        write_labels(&path, &y).unwrap();
        let back = read_labels(&path).unwrap();
        assert_eq!(back.labels(), y.labels());
        assert_eq!(back.num_classes(), 3);
    }

    #[test]
    fn plan_sidecar_written() {
        use crate::numkit::uniform_histogram;
        use crate::ot::{class_mask, sinkhorn, SinkhornConfig};
        let dir = tempfile::tempdir().unwrap();
        let labels = LabelVector::new(vec![0, 1], 2).unwrap();
        let mask = class_mask(&labels, &labels).unwrap();
        let plan = sinkhorn(
            &DenseMatrix::zeros(2, 2),
            &uniform_histogram(2).unwrap(),
            &uniform_histogram(2).unwrap(),
            &SinkhornConfig::default(),
            Some(&mask),
        )
        .unwrap();
        let path = dir.path().join("t_c.txt");
        save_plan(&path, &plan).unwrap();
        let sidecar: PlanSidecar =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(sidecar.epsilon, 0.05);
        assert!(sidecar.mask_digest.is_some());
        assert_eq!(read_matrix(&path).unwrap(), *plan.matrix());
    }

    #[test]
    fn checkpoint_round_trip_preserves_model() {
        use crate::fusion::{Availability, Batch, ProtoSource};
        let dir = tempfile::tempdir().unwrap();
        let config = ModelConfig {
            input_dim_f: 4,
            input_dim_o: 3,
            embed_dim: 3,
            hidden_dim: 5,
            num_classes: 2,
            no_alignment: false,
            literal_projection: false,
        };
        let model = FusionModel::init(config.clone(), 77).unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, 77, 0, None).unwrap();
        let (loaded, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.model, config);

        let mut rng = SeededRng::new(5);
        let batch = Batch::new(
            DenseMatrix::from_vec(2, 4, (0..8).map(|_| rng.normal()).collect()).unwrap(),
            DenseMatrix::from_vec(2, 3, (0..6).map(|_| rng.normal()).collect()).unwrap(),
            LabelVector::new(vec![0, 1], 2).unwrap(),
        )
        .unwrap();
        let a = model
            .forward(&batch, &Availability::complete(2), &ProtoSource::Heads)
            .unwrap();
        let b = loaded
            .forward(&batch, &Availability::complete(2), &ProtoSource::Heads)
            .unwrap();
        assert_eq!(a.logits_value(), b.logits_value());
    }

    #[test]
    fn tampered_t_v_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let config = ModelConfig {
            input_dim_f: 2,
            input_dim_o: 2,
            embed_dim: 2,
            hidden_dim: 2,
            num_classes: 2,
            no_alignment: false,
            literal_projection: false,
        };
        let model = FusionModel::init(config, 3).unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &model, 3, 0, None).unwrap();
        write_matrix(&t_v_path(&path), &DenseMatrix::constant(2, 2, 0.3)).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    proptest! {
        #[test]
        fn matrix_text_round_trips_bitwise(values in proptest::collection::vec(
            prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
            1..24
        )) {
            let cols = 1 + values.len() % 4;
            let rows = values.len() / cols;
            prop_assume!(rows >= 1);
            let m = DenseMatrix::from_vec(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let text = matrix_to_string(&m).unwrap();
            let back = matrix_from_str(&text).unwrap();
            prop_assert_eq!(m, back);
        }
    }
}
