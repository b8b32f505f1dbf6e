//! Class-constrained Gromov-Wasserstein alignment on mirrored spaces.
//!
//! Two modalities share the same latent geometry (here literally the same
//! points), so the ground-truth matching is the identity. Labeled GW must
//! recover it from intra-domain distances alone while keeping all mass
//! inside class blocks.
//!
//! ```bash
//! cargo run --example labeled_gw_recovery
//! ```

use lot_align::{
    labeled_gw, DenseMatrix, Direction, EmbeddingBatch, GwConfig, LabelVector, SeededRng,
};

fn main() {
    let mut rng = SeededRng::new(18);
    let n = 6;
    let points = DenseMatrix::from_vec(n, 3, (0..n * 3).map(|_| rng.normal()).collect()).unwrap();
    let labels = LabelVector::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
    let batch = EmbeddingBatch::new(points.clone(), points, labels.clone()).unwrap();

    let config = GwConfig {
        epsilon: 0.01,
        ..GwConfig::default()
    };
    let plan = labeled_gw(&batch, Direction::FundusToOct, &config).unwrap();

    println!("class-wise plan (rows: fundus samples, cols: OCT samples)");
    for i in 0..n {
        let row: Vec<String> = plan.matrix().row(i).iter().map(|v| format!("{v:.4}")).collect();
        println!("  y={} [{}]", labels[i], row.join(", "));
    }

    println!("\nrow mass on the true match:");
    for i in 0..n {
        let row_mass: f64 = plan.matrix().row(i).iter().sum();
        println!(
            "  sample {i}: {:.1}% (row mass {:.4})",
            100.0 * plan.matrix()[(i, i)] / row_mass,
            row_mass
        );
    }

    let off_class: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| labels[i] != labels[j])
        .map(|(i, j)| plan.matrix()[(i, j)])
        .sum();
    println!("\ntotal mass outside class blocks: {off_class} (exactly zero)");
    println!(
        "solver: {} iterations, residual {:.2e}",
        plan.info().iterations,
        plan.info().residual
    );
}
