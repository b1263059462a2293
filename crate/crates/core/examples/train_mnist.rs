//! Trains on MNIST with the library API and reports test accuracy per epoch.
//!
//! `cargo run --release --example train_mnist -- [layers] [epochs] [lr] [train_limit]`
//!
//! Data comes from `$CONN_MNIST_DIR` or `data/mnist`.

use conn::data::{load_mnist, resolve_data_dir};
use conn::{evaluate, train_epoch, Model, TrainConfig};

fn main() -> conn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let config = TrainConfig {
        layers: arg(0, "1").parse().expect("layers"),
        epochs: arg(1, "2").parse().expect("epochs"),
        learning_rate: arg(2, "0.2").parse().expect("learning rate"),
        ..TrainConfig::default()
    };
    let limit: usize = arg(3, "55000").parse().expect("train limit");

    let splits = load_mnist(&resolve_data_dir(None))?;
    let train = splits.train.truncated(limit);
    let mut model = Model::initialize(config.grid_size, config.layers, config.activation_shift, config.seed)?;
    println!("{}", conn::MetricsRecord::CSV_HEADER);
    for epoch in 1..=config.epochs {
        let (next, record) = train_epoch(model, &train, &splits.validation, &config, epoch)?;
        model = next;
        println!("{}", record.csv_row());
        let test = evaluate(&model, &splits.test)?;
        println!("# test accuracy {:.4}, loss {:.4}", test.accuracy, test.mean_loss);
    }
    Ok(())
}
