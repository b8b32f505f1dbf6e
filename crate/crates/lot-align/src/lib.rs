//! Label-constrained optimal transport alignment for two-modality
//! classification under missing modalities.
//!
//! The crate couples paired embeddings with class-restricted entropic
//! Gromov-Wasserstein transport, derives per-sample soft prototypes and a
//! feature-level coupling from the plans, and trains a small asymmetric
//! fusion classifier whose prototype-predictor heads let either modality
//! stand in for the other at inference time.
//!
//! ## Layout
//!
//! - [`numkit`] — dense matrices, histograms, labels, seeded randomness
//! - [`ot`] — log-domain Sinkhorn over the (class-masked) polytope, plus an
//!   exact permutation oracle
//! - [`gw`] — entropic Gromov-Wasserstein, the feature-index coupling, and
//!   barycentric projection
//! - [`proto`] — match distributions, soft prototypes, cosine alignment
//! - [`fusion`] — the differentiable fusion network and training step
//! - [`harness`] — synthetic data, protocols, metrics, reports
//! - [`io`] — the project matrix text format, sidecars, checkpoints
//!
//! ## Examples
//!
//! One runnable example per capability:
//!
//! ```bash
//! cargo run --example sinkhorn_plan              # entropic OT and class masks
//! cargo run --example labeled_gw_recovery        # class-wise GW match recovery
//! cargo run --example feature_transport          # feature coupling + projection
//! cargo run --example soft_prototypes            # match distributions and losses
//! cargo run --example overfit_batch              # training-step loss descent
//! cargo run --example missing_modality_forward   # inference under absent modalities
//! cargo run --example protocol_complete          # k-fold experiment + metrics
//! cargo run --example missing_sweep              # ratio sweep with ablation + SVG
//! ```
//!
//! The `lot-align` binary exposes the same machinery on files; see the
//! README for the subcommands.

pub mod error;
pub mod fusion;
pub mod gw;
pub mod harness;
pub mod io;
pub mod numkit;
pub mod ot;
pub mod proto;

pub use error::{Error, Result};
pub use fusion::{
    softmax_cross_entropy, total_loss, train_step, Availability, Batch, FusionModel,
    LossComponents, LossRecord, LossWeights, ModelConfig, Optimizer, OptimizerKind, ParamTensor,
    ProtoSource, TrainConfig,
};
pub use gw::{
    barycentric_project, barycentric_project_literal, entropic_gw, feature_plan, gw_objective,
    labeled_gw, Direction, FeaturePlan, GwConfig, GwProblem, GwSolution,
};
pub use harness::{
    apply_missing, emit_report, kfold_split, metrics, run_protocol, synth_dataset, Dataset,
    ExperimentConfig, MetricsReport, MetricsTriple, MissingMask, MissingModality, Protocol,
    ReportFormat, SyntheticSpec,
};
pub use numkit::{
    logsumexp, pairwise_sq_dist, uniform_histogram, BoolMatrix, DenseMatrix, Histogram,
    LabelVector, SeededRng,
};
pub use ot::{
    brute_force_ot, class_mask, entropy, entropy_matrix, sinkhorn, validate_class_balance,
    ClassMask, SinkhornConfig, SolveInfo, TransportPlan,
};
pub use proto::{
    cosine_alignment_loss, match_distribution, sample_match, soft_prototypes, EmbeddingBatch,
    MatchDistribution, Modality, PrototypeSet,
};
