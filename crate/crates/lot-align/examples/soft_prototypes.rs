//! Soft prototypes from a class-wise plan, and the cosine alignment loss.
//!
//! Each sample's plan row, normalized, is a distribution over opposite-
//! modality matches; its expectation is the sample's prototype. The cosine
//! loss drives predictor heads toward those prototypes.
//!
//! ```bash
//! cargo run --example soft_prototypes
//! ```

use lot_align::proto::{
    cosine_alignment_loss, match_distribution, sample_match, soft_prototypes, Modality,
};
use lot_align::{
    labeled_gw, DenseMatrix, Direction, EmbeddingBatch, GwConfig, LabelVector, SeededRng,
};

fn main() {
    let mut rng = SeededRng::new(5);
    let n = 6;
    let d = 4;
    let e_f = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap();
    let e_o = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap();
    let labels = LabelVector::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
    let batch = EmbeddingBatch::new(e_f.clone(), e_o.clone(), labels.clone()).unwrap();

    let t_fo = labeled_gw(&batch, Direction::FundusToOct, &GwConfig::default()).unwrap();
    let p = match_distribution(&t_fo).unwrap();

    println!("match distribution p(j|i) (support stays inside the class):");
    for i in 0..n {
        let row: Vec<String> = p.row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("  y={} [{}]", labels[i], row.join(", "));
    }

    let protos = soft_prototypes(&p, &e_o, Modality::Oct).unwrap();
    println!("\nOCT prototype of sample 0 (expectation over its matches):");
    println!("  {:?}", protos.matrix().row(0));

    // stochastic matching draws concrete partners instead
    let mut draw_rng = SeededRng::new(99);
    let draws: Vec<usize> = (0..8).map(|_| sample_match(&p, 0, &mut draw_rng).unwrap()).collect();
    println!("  eight sampled matches for sample 0: {draws:?}");

    // cosine loss of a noisy predictor against the prototypes
    let mut pred = protos.matrix().clone();
    for v in pred.data_mut() {
        *v += 0.3 * rng.normal();
    }
    let (loss, grad) = cosine_alignment_loss(&pred, &protos).unwrap();
    println!("\ncosine alignment loss of a noisy predictor: {loss:.4}");
    println!("gradient row norms:");
    for i in 0..n {
        let norm: f64 = grad.row(i).iter().map(|g| g * g).sum::<f64>().sqrt();
        println!("  sample {i}: {norm:.5}");
    }
    let (perfect, _) = cosine_alignment_loss(protos.matrix(), &protos).unwrap();
    println!("loss when predictions equal the prototypes: {perfect:.1e}");
}
