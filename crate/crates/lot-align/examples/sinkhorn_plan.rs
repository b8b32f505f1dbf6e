//! Entropic optimal transport basics: solve a small problem, inspect the
//! plan, and see what a class mask does to the support.
//!
//! ```bash
//! cargo run --example sinkhorn_plan
//! ```

use lot_align::{
    class_mask, sinkhorn, uniform_histogram, DenseMatrix, LabelVector, SeededRng, SinkhornConfig,
};

fn print_plan(title: &str, plan: &DenseMatrix) {
    println!("{title}");
    for i in 0..plan.rows() {
        let row: Vec<String> = plan.row(i).iter().map(|v| format!("{v:.4}")).collect();
        println!("  [{}]", row.join(", "));
    }
}

fn main() {
    let mut rng = SeededRng::new(7);
    let n = 4;
    let cost = DenseMatrix::from_vec(n, n, (0..n * n).map(|_| rng.next_f64()).collect()).unwrap();
    let marginal = uniform_histogram(n).unwrap();

    let config = SinkhornConfig {
        epsilon: 0.05,
        ..SinkhornConfig::default()
    };
    let plan = sinkhorn(&cost, &marginal, &marginal, &config, None).unwrap();
    println!(
        "unmasked solve: {} iterations, residual {:.2e}, converged {}",
        plan.info().iterations,
        plan.info().residual,
        plan.info().converged
    );
    print_plan("plan:", plan.matrix());
    println!("transport cost <C,T> = {:.6}\n", plan.transport_cost(&cost));

    // restrict transport to matching classes: samples 0,1 vs 2,3
    let labels = LabelVector::new(vec![0, 0, 1, 1], 2).unwrap();
    let mask = class_mask(&labels, &labels).unwrap();
    let masked = sinkhorn(&cost, &marginal, &marginal, &config, Some(&mask)).unwrap();
    print_plan("class-masked plan (off-class entries exactly zero):", masked.matrix());
    println!(
        "masked transport cost <C,T> = {:.6}",
        masked.transport_cost(&cost)
    );

    // smaller epsilon concentrates the plan toward the exact assignment
    let sharp = sinkhorn(
        &cost,
        &marginal,
        &marginal,
        &SinkhornConfig {
            epsilon: 1e-3,
            ..SinkhornConfig::default()
        },
        None,
    )
    .unwrap();
    print_plan("plan at epsilon 1e-3 (near the optimal permutation):", sharp.matrix());
}
