//! Throughput and energy efficiency of an optical stack.

use conn::energy::EnergyReport;

fn main() -> conn::Result<()> {
    println!("three 512x512 layers, 10 MHz, 0.1 W (rounded node count):");
    println!("{}\n", EnergyReport::new(3, 512, 1e7, 0.1, Some(786_000))?);
    println!("same stack, exact node count:");
    println!("{}\n", EnergyReport::new(3, 512, 1e7, 0.1, None)?);
    println!("one 64x64 layer at the same clock and power:");
    println!("{}", EnergyReport::new(1, 64, 1e7, 0.1, None)?);
    Ok(())
}
