//! Compares analytic gradients with central finite differences.
//!
//! `cargo run --release --example gradient_check -- [grid] [layers] [seed]`

use conn::grad::{grad_check_report, random_grad_check_case};

fn main() -> conn::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("numeric argument"));
    let grid = args.next().unwrap_or(8) as usize;
    let layers = args.next().unwrap_or(3) as usize;
    let seed = args.next().unwrap_or(1);
    let step = 1e-5;
    let case = random_grad_check_case(grid, layers, 0.01, seed, step)?;
    let report = grad_check_report(&case.model, &case.input, case.label, step)?;
    println!("{grid}x{grid}, {layers} layer(s), {} parameters", report.checked);
    println!("max relative error {:.3e}", report.max_rel_error);
    if let Some(id) = report.worst {
        println!("worst: layer {} {} cell {}", id.layer, id.kind.name(), id.index);
    }
    Ok(())
}
