//! Centered unitary transforms: round trip, Parseval and a point source.

use conn::{fft2, ifft2, Complex64, Field};

fn main() -> conn::Result<()> {
    let field = Field::from_fn(16, |r, c| {
        let (y, x) = (r as f64 - 8.0, c as f64 - 8.0);
        Complex64::new((-(x * x + y * y) / 8.0).exp(), 0.1 * x)
    })?;
    let spectrum = fft2(&field);
    let back = ifft2(&spectrum);
    println!("round-trip error   {:.2e}", back.max_abs_diff(&field)?);
    println!("energy (space)     {:.12}", field.energy());
    println!("energy (spectrum)  {:.12}", spectrum.energy());

    // A point at the center becomes a flat field of height 1/N.
    let mut point = Field::zeros(8)?;
    point[(4, 4)] = Complex64::new(1.0, 0.0);
    let flat = ifft2(&point);
    println!("centered impulse   every cell = {:.4}", flat[(0, 0)].re);
    Ok(())
}
