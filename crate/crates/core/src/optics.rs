//! Forward model of a stack of 4f layers.
//!
//! Each layer preprocesses its input as `W ∘ E + B`, convolves it with a
//! Fourier-plane phase mask `exp(iθ)` and hands the result to the next layer
//! through a shifted ReLU acting on the field modulus. The last layer's field
//! is detected as intensity and integrated over ten detector regions.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::{fft2_in_place, ifft2_in_place, intensity};
use crate::field::{check_side, Field, RealGrid};
use crate::grad::{ForwardTape, LayerRecord};

pub const NUM_CLASSES: usize = 10;

/// Integrated intensity per detector region, indexed by class.
pub type Readout = [f64; NUM_CLASSES];

pub const DEFAULT_ACTIVATION_SHIFT: f64 = 0.01;

/// Learnable parameters of one 4f layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Elementwise transmittance `W`.
    pub weight: RealGrid,
    /// Additive field offset `B`, applied to the real part.
    pub bias: RealGrid,
    /// Fourier-plane phase angles `θ` in radians, stored unwrapped.
    pub phase: RealGrid,
}

impl LayerParams {
    pub fn new(weight: RealGrid, bias: RealGrid, phase: RealGrid) -> Result<Self> {
        weight.ensure_same_shape(&bias)?;
        weight.ensure_same_shape(&phase)?;
        Ok(LayerParams {
            weight,
            bias,
            phase,
        })
    }

    /// `W = 1`, `B = 0`, `θ = 0`: a fully transparent layer.
    pub fn identity(side: usize) -> Result<Self> {
        Ok(LayerParams {
            weight: RealGrid::ones(side)?,
            bias: RealGrid::zeros(side)?,
            phase: RealGrid::zeros(side)?,
        })
    }

    pub fn side(&self) -> usize {
        self.weight.side()
    }

    /// The unit-modulus Fourier-plane mask `exp(iθ)`.
    pub fn mask(&self) -> Field {
        Field::from_vec(
            self.side(),
            self.side(),
            self.phase.iter().map(|&t| Complex64::from_polar(1.0, t)).collect(),
        )
        .expect("phase grid shape is valid")
    }
}

/// Axis-aligned detector rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    fn overlaps(&self, other: &Region) -> bool {
        self.row < other.row + other.height
            && other.row < self.row + self.height
            && self.col < other.col + other.width
            && other.col < self.col + self.width
    }

    fn fits(&self, side: usize) -> bool {
        self.row + self.height <= side && self.col + self.width <= side
    }
}

/// Ten disjoint detector regions, one per digit class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectorLayout {
    regions: [Region; NUM_CLASSES],
}

impl DetectorLayout {
    /// Validates that regions are non-empty and pairwise disjoint.
    pub fn new(regions: [Region; NUM_CLASSES]) -> Result<Self> {
        for (k, r) in regions.iter().enumerate() {
            if r.area() == 0 {
                return Err(Error::Layout(format!("region {k} is empty")));
            }
            for (j, other) in regions.iter().enumerate().skip(k + 1) {
                if r.overlaps(other) {
                    return Err(Error::Layout(format!("regions {k} and {j} overlap")));
                }
            }
        }
        Ok(DetectorLayout { regions })
    }

    /// Squares of side `N/8` in two rows of five, centered with equal gaps.
    pub fn default_for(side: usize) -> Result<Self> {
        check_side(side, side)?;
        if side < 8 {
            return Err(Error::Layout(format!(
                "default detector layout needs a grid of at least 8, got {side}"
            )));
        }
        let s = side / 8;
        let gap_x = (side - 5 * s) / 6;
        let gap_y = (side - 2 * s) / 3;
        let x0 = (side - (5 * s + 4 * gap_x)) / 2;
        let y0 = (side - (2 * s + gap_y)) / 2;
        let regions = std::array::from_fn(|k| Region {
            row: y0 + (k / 5) * (s + gap_y),
            col: x0 + (k % 5) * (s + gap_x),
            height: s,
            width: s,
        });
        Self::new(regions)
    }

    pub fn regions(&self) -> &[Region; NUM_CLASSES] {
        &self.regions
    }

    pub fn check_fits(&self, side: usize) -> Result<()> {
        match self.regions.iter().position(|r| !r.fits(side)) {
            Some(k) => Err(Error::Layout(format!(
                "region {k} {:?} lies outside the {side}x{side} grid",
                self.regions[k]
            ))),
            None => Ok(()),
        }
    }
}

/// An ordered stack of 4f layers sharing one grid, activation and detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<LayerParams>,
    grid_size: usize,
    activation_shift: f64,
    detector: DetectorLayout,
}

impl Model {
    pub fn new(
        layers: Vec<LayerParams>,
        activation_shift: f64,
        detector: DetectorLayout,
    ) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("a model needs at least one layer".into()))?;
        let grid_size = first.side();
        if let Some(bad) = layers.iter().position(|l| l.side() != grid_size) {
            return Err(Error::shape(format!(
                "layer {bad} has side {} but layer 0 has side {grid_size}",
                layers[bad].side()
            )));
        }
        if !(activation_shift >= 0.0 && activation_shift.is_finite()) {
            return Err(Error::Config(format!(
                "activation shift must be finite and >= 0, got {activation_shift}"
            )));
        }
        detector.check_fits(grid_size)?;
        Ok(Model {
            layers,
            grid_size,
            activation_shift,
            detector,
        })
    }

    /// Transparent model with the default detector layout.
    pub fn identity(grid_size: usize, layers: usize, activation_shift: f64) -> Result<Self> {
        let stack = (0..layers)
            .map(|_| LayerParams::identity(grid_size))
            .collect::<Result<Vec<_>>>()?;
        Self::new(stack, activation_shift, DetectorLayout::default_for(grid_size)?)
    }

    /// Training initialization: `W = 1`, `B = 0`, `θ ~ U[0, 2π)` from `seed`.
    pub fn initialize(
        grid_size: usize,
        layers: usize,
        activation_shift: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::identity(grid_size, layers, activation_shift)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            for t in layer.phase.as_mut_slice() {
                *t = rng.random_range(0.0..TAU);
            }
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn activation_shift(&self) -> f64 {
        self.activation_shift
    }

    pub fn detector(&self) -> &DetectorLayout {
        &self.detector
    }

    pub fn parameter_count(&self) -> usize {
        3 * self.layers.len() * self.grid_size * self.grid_size
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.is_finite() && l.phase.is_finite())
    }

    /// Every scalar parameter, layer by layer, in `W`, `B`, `θ` order.
    pub fn parameter_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        let cells = self.grid_size * self.grid_size;
        (0..self.layers.len()).flat_map(move |layer| {
            ParamKind::ALL.into_iter().flat_map(move |kind| {
                (0..cells).map(move |index| ParamId { layer, kind, index })
            })
        })
    }

    pub fn parameter(&self, id: ParamId) -> f64 {
        self.layers[id.layer].grid(id.kind).as_slice()[id.index]
    }

    pub fn parameter_mut(&mut self, id: ParamId) -> &mut f64 {
        &mut self.layers[id.layer].grid_mut(id.kind).as_mut_slice()[id.index]
    }
}

/// Which of a layer's three parameter grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight = 0,
    Bias = 1,
    Phase = 2,
}

impl ParamKind {
    pub const ALL: [ParamKind; 3] = [ParamKind::Weight, ParamKind::Bias, ParamKind::Phase];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Weight => "weight",
            ParamKind::Bias => "bias",
            ParamKind::Phase => "phase",
        }
    }
}

/// Address of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub layer: usize,
    pub kind: ParamKind,
    /// Row-major cell index.
    pub index: usize,
}

impl LayerParams {
    pub fn grid(&self, kind: ParamKind) -> &RealGrid {
        match kind {
            ParamKind::Weight => &self.weight,
            ParamKind::Bias => &self.bias,
            ParamKind::Phase => &self.phase,
        }
    }

    pub fn grid_mut(&mut self, kind: ParamKind) -> &mut RealGrid {
        match kind {
            ParamKind::Weight => &mut self.weight,
            ParamKind::Bias => &mut self.bias,
            ParamKind::Phase => &mut self.phase,
        }
    }
}

/// Intensity of two superposed beams whose polarizations differ by `alpha`.
///
/// `mean_cos_psi` is the time-averaged cosine of their phase difference. At
/// `alpha = π/2` the coherent term vanishes and intensities simply add.
pub fn superpose_intensity(i1: f64, i2: f64, alpha: f64, mean_cos_psi: f64) -> Result<f64> {
    if !(i1 >= 0.0 && i2 >= 0.0) {
        return Err(Error::Domain(format!(
            "beam intensities must be non-negative, got {i1} and {i2}"
        )));
    }
    if !(-1.0..=1.0).contains(&mean_cos_psi) {
        return Err(Error::Domain(format!(
            "mean phase cosine must lie in [-1, 1], got {mean_cos_psi}"
        )));
    }
    let cos_alpha = alpha.cos();
    // cos(π/2) is 6e-17 in floating point; orthogonal beams do not interfere.
    let cos_alpha = if cos_alpha.abs() < 1e-15 { 0.0 } else { cos_alpha };
    Ok(i1 + i2 + 2.0 * (i1 * i2).sqrt() * cos_alpha * mean_cos_psi)
}

/// `W ∘ X + B` for a real amplitude image.
pub fn preprocess(x: &RealGrid, layer: &LayerParams) -> Result<Field> {
    x.ensure_same_shape(&layer.weight)?;
    let values = x
        .iter()
        .zip(layer.weight.iter())
        .zip(layer.bias.iter())
        .map(|((&x, &w), &b)| Complex64::new(w * x + b, 0.0))
        .collect();
    Field::from_vec(x.side(), x.side(), values)
}

/// `W ∘ E + B` for a complex field; the real bias shifts the real part.
pub fn preprocess_field(e: &Field, layer: &LayerParams) -> Result<Field> {
    if e.side() != layer.side() {
        return Err(Error::shape(format!(
            "field side {} does not match layer side {}",
            e.side(),
            layer.side()
        )));
    }
    let values = e
        .iter()
        .zip(layer.weight.iter())
        .zip(layer.bias.iter())
        .map(|((&v, &w), &b)| v * w + b)
        .collect();
    Field::from_vec(e.side(), e.side(), values)
}

struct Propagation {
    spectrum: Field,
    masked: Field,
    output: Field,
}

fn propagate_with(pre: &Field, mask: impl Fn(usize, Complex64) -> Complex64) -> Propagation {
    let mut spectrum = pre.clone();
    fft2_in_place(&mut spectrum);
    let mut masked = spectrum.clone();
    for (i, v) in masked.as_mut_slice().iter_mut().enumerate() {
        *v = mask(i, *v);
    }
    let mut output = masked.clone();
    ifft2_in_place(&mut output);
    Propagation {
        spectrum,
        masked,
        output,
    }
}

fn propagate_layer(pre: &Field, layer: &LayerParams) -> Result<Propagation> {
    if pre.side() != layer.side() {
        return Err(Error::shape(format!(
            "field side {} does not match layer side {}",
            pre.side(),
            layer.side()
        )));
    }
    let phase = layer.phase.as_slice();
    Ok(propagate_with(pre, |i, v| v * Complex64::cis(phase[i])))
}

/// `ifft2(fft2(pre) ∘ exp(iθ))`.
pub fn propagate_4f(pre: &Field, layer: &LayerParams) -> Result<Field> {
    Ok(propagate_layer(pre, layer)?.output)
}

/// `ifft2(fft2(pre) ∘ mask)` for an arbitrary complex mask on the centered
/// spectrum. Training only ever applies phase-only masks.
#[cfg(feature = "test-hooks")]
pub fn propagate_4f_with_complex_mask(pre: &Field, mask: &Field) -> Result<Field> {
    pre.ensure_same_shape(mask)?;
    let m = mask.as_slice();
    Ok(propagate_with(pre, |i, v| v * m[i]).output)
}

/// Per-cell gain of the shifted ReLU: `max(0, 1 - shift/|v|)`.
fn relu_gain(v: Complex64, shift: f64) -> f64 {
    let m = v.norm();
    if m <= shift {
        0.0
    } else {
        1.0 - shift / m
    }
}

/// Reduces each cell's modulus by `shift`, clamping at zero and keeping phase.
pub fn shifted_relu(f: &Field, shift: f64) -> Field {
    f.map(|v| v * relu_gain(v, shift))
}

/// Sum of intensity over each detector region.
pub fn region_readout(intensity: &RealGrid, layout: &DetectorLayout) -> Result<Readout> {
    let side = intensity.side();
    layout.check_fits(side)?;
    let values = intensity.as_slice();
    Ok(std::array::from_fn(|k| {
        let r = layout.regions[k];
        (r.row..r.row + r.height)
            .map(|row| values[row * side + r.col..row * side + r.col + r.width].iter().sum::<f64>())
            .sum()
    }))
}

/// Index of the brightest region; ties go to the lowest index.
pub fn classify(readout: &Readout) -> usize {
    let mut best = 0;
    for (k, &v) in readout.iter().enumerate().skip(1) {
        if v > readout[best] {
            best = k;
        }
    }
    best
}

fn check_input(model: &Model, x: &RealGrid) -> Result<()> {
    if x.side() != model.grid_size {
        return Err(Error::shape(format!(
            "input side {} does not match model grid {}",
            x.side(),
            model.grid_size
        )));
    }
    Ok(())
}

/// Runs the full optical stack and records every intermediate for backprop.
pub fn forward(model: &Model, x: &RealGrid) -> Result<(Readout, ForwardTape)> {
    check_input(model, x)?;
    let last = model.layers.len() - 1;
    let mut records = Vec::with_capacity(model.layers.len());
    let mut input = Field::from_real(x);
    for (l, layer) in model.layers.iter().enumerate() {
        let pre = preprocess_field(&input, layer)?;
        let Propagation {
            spectrum,
            masked,
            output,
        } = propagate_layer(&pre, layer)?;
        let (next, gain) = if l < last {
            let shift = model.activation_shift;
            let gain: Vec<f64> = output.iter().map(|&v| relu_gain(v, shift)).collect();
            let next = output.with_values(
                output.iter().zip(&gain).map(|(&v, &g)| v * g).collect(),
            );
            let gain = RealGrid::from_vec(output.side(), output.side(), gain)?;
            (Some(next), Some(gain))
        } else {
            (None, None)
        };
        records.push(LayerRecord {
            input,
            pre,
            spectrum,
            masked,
            output,
            activation_gain: gain,
        });
        match next {
            Some(next) => input = next,
            None => break,
        }
    }
    let final_intensity = intensity(&records[last].output);
    let readout = region_readout(&final_intensity, &model.detector)?;
    Ok((
        readout,
        ForwardTape {
            layers: records,
            intensity: final_intensity,
            readout,
        },
    ))
}

/// Forward pass without recording a tape.
pub fn infer(model: &Model, x: &RealGrid) -> Result<Readout> {
    check_input(model, x)?;
    let last = model.layers.len() - 1;
    let mut field = Field::from_real(x);
    for (l, layer) in model.layers.iter().enumerate() {
        let pre = preprocess_field(&field, layer)?;
        field = propagate_4f(&pre, layer)?;
        if l < last {
            field = shifted_relu(&field, model.activation_shift);
        }
    }
    region_readout(&intensity(&field), &model.detector)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn superposition_cases() {
        assert_eq!(superpose_intensity(1.0, 1.0, FRAC_PI_2, 0.7).unwrap(), 2.0);
        assert_eq!(superpose_intensity(1.0, 1.0, FRAC_PI_2, -1.0).unwrap(), 2.0);
        assert_eq!(superpose_intensity(4.0, 9.0, 0.0, 1.0).unwrap(), 25.0);
        assert_eq!(superpose_intensity(0.0, 5.0, 1.234, -0.3).unwrap(), 5.0);
        assert!(matches!(
            superpose_intensity(-1.0, 1.0, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn preprocess_cases() {
        let x = RealGrid::from_fn(8, |r, col| ((r * 8 + col) % 7) as f64 / 7.0).unwrap();
        let id = LayerParams::identity(8).unwrap();
        assert_eq!(preprocess(&x, &id).unwrap(), Field::from_real(&x));

        let mut layer = LayerParams::identity(8).unwrap();
        layer.bias = RealGrid::from_fn(8, |r, _| r as f64 - 3.0).unwrap();
        let zeros = RealGrid::zeros(8).unwrap();
        assert_eq!(preprocess(&zeros, &layer).unwrap(), Field::from_real(&layer.bias));

        layer.weight = RealGrid::filled(8, 2.0).unwrap();
        layer.bias = x.map(|v| -v);
        assert_eq!(preprocess(&x, &layer).unwrap(), Field::from_real(&x));

        assert!(preprocess(&RealGrid::zeros(4).unwrap(), &layer).is_err());
    }

    #[test]
    fn propagate_identity_and_global_phase() {
        let f = Field::from_fn(8, |r, col| c(r as f64 - 2.0, (col as f64 * 0.7).cos())).unwrap();
        let mut layer = LayerParams::identity(8).unwrap();
        let out = propagate_4f(&f, &layer).unwrap();
        assert!(out.max_abs_diff(&f).unwrap() < 1e-12 * f.energy().sqrt());

        layer.phase = RealGrid::filled(8, 0.9).unwrap();
        let out = propagate_4f(&f, &layer).unwrap();
        let expected = f.scale(Complex64::cis(0.9));
        assert!(out.max_abs_diff(&expected).unwrap() < 1e-12 * f.energy().sqrt());
        let (a, b) = (intensity(&out), intensity(&f));
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).abs() < 1e-12 * (1.0 + q));
        }
    }

    #[test]
    fn shifted_relu_cases() {
        let f = Field::from_fn(4, |r, col| c(r as f64 - 1.5, col as f64 * 0.1)).unwrap();
        assert_eq!(shifted_relu(&f, 0.0), f);

        let at_turn = Field::filled(2, Complex64::from_polar(0.5, FRAC_PI_3)).unwrap();
        assert!(shifted_relu(&at_turn, 0.5).iter().all(|v| *v == c(0.0, 0.0)));

        let v = Field::filled(2, Complex64::from_polar(2.0, FRAC_PI_4)).unwrap();
        let out = shifted_relu(&v, 0.5);
        let expected = Complex64::from_polar(1.5, FRAC_PI_4);
        assert!(out.iter().all(|o| (o - expected).norm() < 1e-15));
    }

    #[test]
    fn default_layout_geometry() {
        let layout = DetectorLayout::default_for(64).unwrap();
        let cols: Vec<_> = layout.regions()[..5].iter().map(|r| r.col).collect();
        assert_eq!(cols, vec![4, 16, 28, 40, 52]);
        assert_eq!(layout.regions()[0].row, 16);
        assert_eq!(layout.regions()[5].row, 40);
        assert!(layout.regions().iter().all(|r| r.height == 8 && r.width == 8));
        for side in [8, 16, 32, 128, 512] {
            let l = DetectorLayout::default_for(side).unwrap();
            l.check_fits(side).unwrap();
        }
        assert!(DetectorLayout::default_for(4).is_err());
    }

    #[test]
    fn layout_validation() {
        let mut regions = *DetectorLayout::default_for(64).unwrap().regions();
        regions[1] = regions[0];
        assert!(matches!(DetectorLayout::new(regions), Err(Error::Layout(_))));
        regions[1] = Region {
            row: 0,
            col: 0,
            height: 0,
            width: 3,
        };
        assert!(matches!(DetectorLayout::new(regions), Err(Error::Layout(_))));
        let layout = DetectorLayout::default_for(64).unwrap();
        let small = RealGrid::zeros(32).unwrap();
        assert!(matches!(region_readout(&small, &layout), Err(Error::Layout(_))));
    }

    #[test]
    fn readout_cases() {
        let layout = DetectorLayout::default_for(32).unwrap();
        assert_eq!(region_readout(&RealGrid::zeros(32).unwrap(), &layout).unwrap(), [0.0; 10]);
        assert_eq!(region_readout(&RealGrid::ones(32).unwrap(), &layout).unwrap(), [16.0; 10]);
        let mut delta = RealGrid::zeros(32).unwrap();
        let r3 = layout.regions()[3];
        delta[(r3.row + 1, r3.col + 2)] = 7.0;
        let mut expected = [0.0; 10];
        expected[3] = 7.0;
        assert_eq!(region_readout(&delta, &layout).unwrap(), expected);
    }

    #[test]
    fn classify_cases() {
        let mut r = [0.0; 10];
        r[8] = 7.0;
        assert_eq!(classify(&r), 8);
        assert_eq!(classify(&[3.0; 10]), 0);
        assert_eq!(classify(&[1.0, 9.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 1);
    }

    #[test]
    fn identity_forward_reads_out_squared_input() {
        let x = RealGrid::from_fn(32, |r, col| ((r * 3 + col * 5) % 11) as f64 / 10.0).unwrap();
        let layout = DetectorLayout::default_for(32).unwrap();
        let expected = region_readout(&x.map(|v| v * v), &layout).unwrap();
        for layers in [1, 3] {
            let model = Model::identity(32, layers, 0.0).unwrap();
            let (readout, tape) = forward(&model, &x).unwrap();
            assert_eq!(tape.layers.len(), layers);
            for (a, b) in readout.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b));
            }
            let fast = infer(&model, &x).unwrap();
            assert_eq!(fast, readout);
        }
    }

    #[test]
    fn initialize_draws_phases_in_range() {
        let m = Model::initialize(16, 2, 0.01, 3).unwrap();
        for layer in m.layers() {
            assert!(layer.phase.iter().all(|&t| (0.0..2.0 * PI).contains(&t)));
            assert!(layer.weight.iter().all(|&w| w == 1.0));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(m, Model::initialize(16, 2, 0.01, 3).unwrap());
        assert_ne!(m, Model::initialize(16, 2, 0.01, 4).unwrap());
    }
}
