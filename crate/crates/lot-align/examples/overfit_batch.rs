//! Train the fusion network on one fixed batch and watch the loss fall.
//!
//! ```bash
//! cargo run --example overfit_batch
//! ```

use lot_align::fusion::{
    train_step, Availability, Batch, FusionModel, ModelConfig, Optimizer, TrainConfig,
};
use lot_align::{DenseMatrix, LabelVector, SeededRng};

fn main() {
    let config = ModelConfig {
        input_dim_f: 5,
        input_dim_o: 4,
        embed_dim: 4,
        hidden_dim: 8,
        num_classes: 2,
        no_alignment: false,
        literal_projection: false,
    };
    let mut rng = SeededRng::new(3);
    let n = 8;
    let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut x_f = DenseMatrix::zeros(n, config.input_dim_f);
    let mut x_o = DenseMatrix::zeros(n, config.input_dim_o);
    for (i, &label) in y.iter().enumerate() {
        let shift = if label == 0 { -1.0 } else { 1.0 };
        for v in x_f.row_mut(i) {
            *v = shift + 0.4 * rng.normal();
        }
        for v in x_o.row_mut(i) {
            *v = -shift + 0.4 * rng.normal();
        }
    }
    let batch = Batch::new(x_f, x_o, LabelVector::new(y, 2).unwrap()).unwrap();
    let avail = Availability::complete(n);

    let mut model = FusionModel::init(config, 1).unwrap();
    let train = TrainConfig::default();
    let mut optimizer = Optimizer::new(train.optimizer);
    let mut step_rng = SeededRng::new(2);

    println!("step  total     ce        p_oct     p_fundus");
    for step in 0..50 {
        let record = train_step(
            &mut model,
            &mut optimizer,
            &batch,
            &avail,
            &train,
            &mut step_rng,
            step,
        )
        .unwrap();
        if step % 5 == 0 || step == 49 {
            let c = record.components;
            println!(
                "{step:>4}  {:.6}  {:.6}  {:.6}  {:.6}",
                c.total, c.ce, c.p_oct, c.p_fundus
            );
        }
    }
}
