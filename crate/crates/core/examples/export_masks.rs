//! Writes SLM-ready rasters for each layer's W, B and θ.
//!
//! `cargo run --release --example export_masks -- [checkpoint] [out_dir]`
//!
//! Without a checkpoint a freshly initialized 3-layer model is exported.

use std::path::PathBuf;

use conn::export::export_masks;
use conn::{load_checkpoint, Model};

fn main() -> conn::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = match args.next() {
        Some(path) => load_checkpoint(path)?,
        None => Model::initialize(64, 3, 0.01, 0)?,
    };
    let out_dir = args.next().map_or_else(|| std::env::temp_dir().join("conn-masks"), PathBuf::from);
    for path in export_masks(&model, &out_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}
