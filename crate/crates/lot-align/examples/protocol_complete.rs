//! A small complete-modality experiment: synthetic data, five-fold
//! cross-validation, and the accuracy/AUC/F1 report, compared against a
//! nearest-class-mean probe floor.
//!
//! ```bash
//! cargo run --example protocol_complete
//! ```

use lot_align::fusion::TrainConfig;
use lot_align::gw::GwConfig;
use lot_align::harness::{
    kfold_split, nearest_class_mean_accuracy, run_protocol, synth_dataset, DataSource,
    ExperimentConfig, MissingModality, ModelSettings, Protocol, SyntheticSpec,
};
use lot_align::ot::SinkhornConfig;

fn main() {
    let spec = SyntheticSpec {
        num_classes: 3,
        per_class: 40,
        ..SyntheticSpec::default()
    };
    let config = ExperimentConfig {
        version: 1,
        protocol: Protocol::Complete,
        data: DataSource::Synthetic(spec.clone()),
        folds: 5,
        seed: 17,
        ratio: None,
        ratios: None,
        missing_modality: MissingModality::Oct,
        model: ModelSettings {
            embed_dim: 12,
            hidden_dim: 16,
            literal_projection: false,
        },
        train: TrainConfig {
            steps: 120,
            batch_size: 32,
            learning_rate: 5e-3,
            gw: GwConfig {
                outer_iters: 15,
                inner: SinkhornConfig {
                    max_iters: 300,
                    marginal_tol: 1e-7,
                    ..SinkhornConfig::default()
                },
                ..GwConfig::default()
            },
            ..TrainConfig::default()
        },
        ablation: false,
    };

    // sanity floor: nearest class mean on raw fundus vectors
    let dataset = synth_dataset(&spec).unwrap();
    let folds = kfold_split(dataset.len(), config.folds, config.seed).unwrap();
    let probe = nearest_class_mean_accuracy(&dataset.x_f, &dataset.labels, &folds).unwrap();
    println!("nearest-class-mean probe on fundus vectors: {probe:.4}");

    let report = run_protocol(&config).unwrap();
    for group in &report.groups {
        println!(
            "\nprotocol {} / {}: mean over {} folds",
            report.protocol,
            group.variant,
            group.folds.len()
        );
        println!(
            "  ACC {:.4} +- {:.4}",
            group.mean.acc, group.std.acc
        );
        if let Some(auc) = group.mean.auc {
            println!("  AUC {:.4} +- {:.4}", auc, group.std.auc.unwrap_or(0.0));
        }
        println!("  F1  {:.4} +- {:.4}", group.mean.f1, group.std.f1);
        for fold in &group.folds {
            println!(
                "    fold {}: acc {:.4} auc {} f1 {:.4} (n={})",
                fold.fold,
                fold.acc,
                fold.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into()),
                fold.f1,
                fold.n_test
            );
        }
    }
    println!("\nruntime: {:.1}s", report.runtime_seconds);
}
