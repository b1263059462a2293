//! Saves a model, reloads it and shows that a damaged file is refused.

use conn::checkpoint::encode;
use conn::optics::infer;
use conn::{load_checkpoint, save_checkpoint, Model, RealGrid};

fn main() -> conn::Result<()> {
    let dir = std::env::temp_dir().join("conn-checkpoint-example");
    let path = dir.join("model.ckpt");
    let model = Model::initialize(64, 2, 0.01, 42)?;
    save_checkpoint(&model, &path)?;
    let loaded = load_checkpoint(&path)?;
    let x = RealGrid::filled(64, 0.5)?;
    println!("identical parameters: {}", loaded == model);
    println!("identical readout:    {}", infer(&loaded, &x)? == infer(&model, &x)?);

    let mut bytes = encode(&model);
    bytes[64] ^= 0xff;
    let damaged = dir.join("damaged.ckpt");
    std::fs::write(&damaged, bytes)?;
    match load_checkpoint(&damaged) {
        Err(e) => println!("damaged file: {e}"),
        Ok(_) => println!("damaged file loaded unexpectedly"),
    }
    Ok(())
}
