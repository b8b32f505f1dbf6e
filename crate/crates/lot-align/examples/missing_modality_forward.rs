//! Inference under every availability pattern with one parameter set.
//!
//! A sample lacking a modality substitutes the matching predictor head's
//! output for both the absent embedding and its prototype feature; the
//! substitution is literal graph surgery, reproducible by composing the
//! pieces by hand.
//!
//! ```bash
//! cargo run --example missing_modality_forward
//! ```

use lot_align::fusion::{Availability, Batch, FusionModel, ModelConfig, ProtoSource};
use lot_align::{DenseMatrix, LabelVector, SeededRng};

fn main() {
    let config = ModelConfig {
        input_dim_f: 6,
        input_dim_o: 5,
        embed_dim: 4,
        hidden_dim: 8,
        num_classes: 3,
        no_alignment: false,
        literal_projection: false,
    };
    let model = FusionModel::init(config.clone(), 11).unwrap();
    let mut rng = SeededRng::new(12);
    let n = 3;
    let batch = Batch::new(
        DenseMatrix::from_vec(n, 6, (0..n * 6).map(|_| rng.normal()).collect()).unwrap(),
        DenseMatrix::from_vec(n, 5, (0..n * 5).map(|_| rng.normal()).collect()).unwrap(),
        LabelVector::new(vec![0, 1, 2], 3).unwrap(),
    )
    .unwrap();

    for (name, avail) in [
        ("complete", Availability::complete(n)),
        ("OCT missing", Availability::without_oct(n)),
        ("fundus missing", Availability::without_fundus(n)),
        (
            "mixed",
            Availability::new(vec![true, false, true], vec![false, true, true]).unwrap(),
        ),
    ] {
        let fwd = model.forward(&batch, &avail, &ProtoSource::Heads).unwrap();
        println!("{name:>15}: logits row 0 = {:?}", fwd.logits_value().row(0));
    }

    // the OCT-missing forward is exactly head_f2o composed into the graph
    let missing = model
        .forward(&batch, &Availability::without_oct(n), &ProtoSource::Heads)
        .unwrap();
    let e_f = model.encode_fundus(&batch.x_f);
    let surrogate = model.predict_oct_prototype(&e_f);
    let manual = model
        .forward_from_embeddings(&e_f, &surrogate, &ProtoSource::Heads)
        .unwrap();
    println!(
        "\nmanual surrogate composition reproduces the OCT-missing forward bitwise: {}",
        missing.logits_value() == manual.logits_value()
    );
}
