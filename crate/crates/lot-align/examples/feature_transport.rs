//! Feature-level coupling and the cross-modal projected feature.
//!
//! Given a converged OCT-to-fundus sample plan, the feature plan couples
//! OCT feature dimensions with fundus feature dimensions; its barycentric
//! projection maps OCT vectors into fundus feature space (the cross-modal
//! token the fusion network consumes).
//!
//! ```bash
//! cargo run --example feature_transport
//! ```

use lot_align::{
    barycentric_project, feature_plan, labeled_gw, DenseMatrix, Direction, EmbeddingBatch,
    GwConfig, LabelVector, SeededRng,
};

fn main() {
    let mut rng = SeededRng::new(42);
    let n = 8;
    let (d_f, d_o) = (3, 5);

    // OCT features are a linear scramble of the fundus features plus noise,
    // so a meaningful feature-to-feature coupling exists
    let e_f = DenseMatrix::from_vec(n, d_f, (0..n * d_f).map(|_| rng.normal()).collect()).unwrap();
    let mixing =
        DenseMatrix::from_vec(d_f, d_o, (0..d_f * d_o).map(|_| rng.normal()).collect()).unwrap();
    let e_o = {
        let mut m = e_f.matmul(&mixing);
        for v in m.data_mut() {
            *v += 0.05 * rng.normal();
        }
        m
    };
    let labels = LabelVector::new(vec![0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap();
    let batch = EmbeddingBatch::new(e_f, e_o.clone(), labels).unwrap();

    let config = GwConfig {
        epsilon: 0.02,
        ..GwConfig::default()
    };
    let t_of = labeled_gw(&batch, Direction::OctToFundus, &config).unwrap();
    let t_v = feature_plan(&batch, &t_of, &config).unwrap();

    println!("feature plan ({d_o} OCT dims x {d_f} fundus dims):");
    for l in 0..d_o {
        let row: Vec<String> = t_v.matrix().row(l).iter().map(|v| format!("{v:.4}")).collect();
        println!("  [{}]", row.join(", "));
    }
    println!(
        "row sums ~ 1/{d_o}: {:?}",
        t_v.matrix()
            .row_sums()
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
    );

    let projected = barycentric_project(&t_v, &e_o).unwrap();
    println!(
        "\nprojected OCT rows live in fundus feature space: {}x{}",
        projected.rows(),
        projected.cols()
    );
    println!("first projected row: {:?}", projected.row(0));
}
