//! Reverse-mode gradients of the optical stack.
//!
//! A loss is real, so the gradient carried for a complex intermediate `v` is
//! `∂L/∂Re v + i ∂L/∂Im v`. With that convention:
//!
//! * `I = |v|^2` sends `g_v = 2 g_I v`;
//! * a unitary map `v = A u` sends `g_u = A^H g_v`, so `fft2` and `ifft2`
//!   swap roles on the way back;
//! * `M = S ∘ exp(iθ)` sends `g_S = g_M ∘ exp(-iθ)` and
//!   `g_θ = Im(conj(M) g_M)`;
//! * `P = W ∘ E + B` with real `W`, `B` sends `g_W = Re(conj(g_P) E)`,
//!   `g_B = Re(g_P)` and `g_E = W g_P`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft2_in_place, ifft2_in_place};
use crate::field::{Field, RealGrid};
use crate::optics::{LayerParams, Model, ParamId, Readout};
use crate::training::{sample_gradients, sample_loss};

/// Intermediates of one layer's forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    /// Field entering the layer (the real image lifted to a field for layer 0).
    pub input: Field,
    /// `W ∘ input + B`.
    pub pre: Field,
    /// `fft2(pre)`.
    pub spectrum: Field,
    /// `spectrum ∘ exp(iθ)`.
    pub masked: Field,
    /// `ifft2(masked)`.
    pub output: Field,
    /// Per-cell shifted-ReLU gain `max(0, 1 - s/|v|)` applied to `output`;
    /// `None` on the last layer, which feeds the detector directly.
    pub activation_gain: Option<RealGrid>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    pub layers: Vec<LayerRecord>,
    pub intensity: RealGrid,
    pub readout: Readout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weight: RealGrid,
    pub bias: RealGrid,
    pub phase: RealGrid,
}

impl LayerGradients {
    fn zeros(side: usize) -> Result<Self> {
        Ok(LayerGradients {
            weight: RealGrid::zeros(side)?,
            bias: RealGrid::zeros(side)?,
            phase: RealGrid::zeros(side)?,
        })
    }

    fn grids(&self) -> [&RealGrid; 3] {
        [&self.weight, &self.bias, &self.phase]
    }

    fn grids_mut(&mut self) -> [&mut RealGrid; 3] {
        [&mut self.weight, &mut self.bias, &mut self.phase]
    }
}

/// Loss gradients with the same layout as the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Result<Self> {
        let layers = model
            .layers()
            .iter()
            .map(|l| LayerGradients::zeros(l.side()))
            .collect::<Result<_>>()?;
        Ok(Gradients { layers })
    }

    /// Checks that every gradient grid matches the corresponding parameter.
    pub fn check_matches(&self, model: &Model) -> Result<()> {
        if self.layers.len() != model.layers().len() {
            return Err(Error::Consistency(format!(
                "gradients have {} layers, model has {}",
                self.layers.len(),
                model.layers().len()
            )));
        }
        for (l, (g, p)) in self.layers.iter().zip(model.layers()).enumerate() {
            if g.grids().iter().any(|grid| grid.side() != p.side()) {
                return Err(Error::Consistency(format!(
                    "layer {l} gradient shape does not match parameter side {}",
                    p.side()
                )));
            }
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Consistency("gradient layer counts differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ga, gb) in a.grids_mut().into_iter().zip(b.grids()) {
                ga.ensure_same_shape(gb)
                    .map_err(|e| Error::Consistency(e.to_string()))?;
                for (x, y) in ga.as_mut_slice().iter_mut().zip(gb.iter()) {
                    *x += scale * y;
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for grid in layer.grids_mut() {
                grid.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    /// Flat inner product over all parameters.
    pub fn dot(&self, other: &Gradients) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.grids().into_iter().zip(b.grids()))
            .map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| p * q).sum::<f64>())
            .sum()
    }

    pub fn get(&self, id: ParamId) -> f64 {
        self.layers[id.layer].grids()[id.kind as usize].as_slice()[id.index]
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.grids())
            .flat_map(|g| g.iter().copied())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.grids())
            .all(RealGrid::is_finite)
    }
}

fn check_tape(model: &Model, tape: &ForwardTape) -> Result<()> {
    if tape.layers.len() != model.layers().len() {
        return Err(Error::Consistency(format!(
            "tape has {} layers, model has {}",
            tape.layers.len(),
            model.layers().len()
        )));
    }
    let side = model.grid_size();
    let last = tape.layers.len() - 1;
    for (l, rec) in tape.layers.iter().enumerate() {
        let sides = [
            rec.input.side(),
            rec.pre.side(),
            rec.spectrum.side(),
            rec.masked.side(),
            rec.output.side(),
        ];
        if sides.iter().any(|&s| s != side) {
            return Err(Error::Consistency(format!(
                "tape layer {l} does not match model grid {side}"
            )));
        }
        if rec.activation_gain.is_some() != (l < last) {
            return Err(Error::Consistency(format!(
                "tape layer {l} activation record is inconsistent with layer count"
            )));
        }
    }
    if tape.intensity.side() != side {
        return Err(Error::Consistency("tape intensity does not match model grid".into()));
    }
    Ok(())
}

/// Seeds the field gradient at the detector: `g_O = 2 d_readout[k] O` inside
/// region `k`, zero elsewhere.
fn detector_adjoint(model: &Model, output: &Field, d_readout: &Readout) -> Field {
    let side = output.side();
    let mut g = Field::zeros(side).expect("side already validated");
    let values = output.as_slice();
    let grad = g.as_mut_slice();
    for (region, &d) in model.detector().regions().iter().zip(d_readout) {
        for row in region.row..region.row + region.height {
            for col in region.col..region.col + region.width {
                let i = row * side + col;
                grad[i] = values[i] * (2.0 * d);
            }
        }
    }
    g
}

/// Pulls a gradient back through the shifted ReLU.
///
/// For an active cell the map is `y = v (1 - s/m)` with `m = |v|`, giving
/// `g_v = c g_y + (s/m^3) Re(conj(v) g_y) v`. Cells at or below the turning
/// point get a zero subgradient.
fn relu_adjoint(g_y: &mut Field, output: &Field, gain: &RealGrid, shift: f64) {
    for ((g, &v), &c) in g_y
        .as_mut_slice()
        .iter_mut()
        .zip(output.as_slice())
        .zip(gain.as_slice())
    {
        if c == 0.0 {
            *g = Complex64::new(0.0, 0.0);
            continue;
        }
        let m = v.norm();
        let radial = shift / (m * m * m) * (v.conj() * *g).re;
        *g = *g * c + v * radial;
    }
}

fn layer_adjoint(
    layer: &LayerParams,
    rec: &LayerRecord,
    mut g: Field,
    grads: &mut LayerGradients,
    need_input: bool,
) -> Option<Field> {
    // O = ifft2(M)  =>  g_M = fft2(g_O)
    fft2_in_place(&mut g);
    for (((dp, gm), m), &t) in grads
        .phase
        .as_mut_slice()
        .iter_mut()
        .zip(g.as_mut_slice())
        .zip(rec.masked.as_slice())
        .zip(layer.phase.as_slice())
    {
        *dp = (m.conj() * *gm).im;
        *gm *= Complex64::cis(-t);
    }
    // S = fft2(P)  =>  g_P = ifft2(g_S)
    ifft2_in_place(&mut g);
    for (((gp, e), dw), db) in g
        .as_mut_slice()
        .iter_mut()
        .zip(rec.input.as_slice())
        .zip(grads.weight.as_mut_slice())
        .zip(grads.bias.as_mut_slice())
    {
        *dw = gp.re * e.re + gp.im * e.im;
        *db = gp.re;
    }
    if !need_input {
        return None;
    }
    for (gp, &w) in g.as_mut_slice().iter_mut().zip(layer.weight.as_slice()) {
        *gp *= w;
    }
    Some(g)
}

/// Exact gradients of a loss whose derivative with respect to the readout is
/// `d_readout`.
pub fn backward(model: &Model, tape: &ForwardTape, d_readout: &Readout) -> Result<Gradients> {
    check_tape(model, tape)?;
    let mut grads = Gradients::zeros_like(model)?;
    let last = tape.layers.len() - 1;
    let mut g = detector_adjoint(model, &tape.layers[last].output, d_readout);
    for l in (0..=last).rev() {
        let rec = &tape.layers[l];
        if let Some(gain) = &rec.activation_gain {
            relu_adjoint(&mut g, &rec.output, gain, model.activation_shift());
        }
        match layer_adjoint(&model.layers()[l], rec, g, &mut grads.layers[l], l > 0) {
            Some(next) => g = next,
            None => break,
        }
    }
    Ok(grads)
}

/// Summary of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<ParamId>,
    pub checked: usize,
}

/// Gradient magnitude below which the error is measured absolutely.
pub const GRAD_CHECK_ABS_THRESHOLD: f64 = 1e-8;

/// Error between an analytic and a numerical derivative: relative to the
/// numerical value, or absolute when it is below
/// [`GRAD_CHECK_ABS_THRESHOLD`].
pub fn gradient_error(analytic: f64, numerical: f64) -> f64 {
    let diff = (analytic - numerical).abs();
    if numerical.abs() < GRAD_CHECK_ABS_THRESHOLD {
        diff
    } else {
        diff / numerical.abs()
    }
}

/// Compares `backward` with central differences of the cross-entropy loss
/// for every parameter. The step for parameter `p` is `step * max(1, |p|)`.
pub fn grad_check_report(
    model: &Model,
    x: &RealGrid,
    label: usize,
    step: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let analytic = sample_gradients(model, x, label)?.grads;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in model.parameter_ids() {
        let p = probe.parameter(id);
        let h = step * p.abs().max(1.0);
        let (plus, minus) = (p + h, p - h);
        *probe.parameter_mut(id) = plus;
        let loss_plus = sample_loss(&probe, x, label)?;
        *probe.parameter_mut(id) = minus;
        let loss_minus = sample_loss(&probe, x, label)?;
        *probe.parameter_mut(id) = p;
        let numerical = (loss_plus - loss_minus) / (plus - minus);
        let err = gradient_error(analytic.get(id), numerical);
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some(id);
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Maximum relative error between analytic and finite-difference gradients.
pub fn grad_check(model: &Model, x: &RealGrid, label: usize, step: f64) -> Result<f64> {
    Ok(grad_check_report(model, x, label, step)?.max_rel_error)
}

/// A randomized model, input and label for gradient checking.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub model: Model,
    pub input: RealGrid,
    pub label: usize,
}

/// Smallest distance between any inter-layer modulus and the activation
/// turning point.
pub fn turning_point_margin(model: &Model, x: &RealGrid) -> Result<f64> {
    let (_, tape) = crate::optics::forward(model, x)?;
    let shift = model.activation_shift();
    Ok(tape
        .layers
        .iter()
        .filter(|rec| rec.activation_gain.is_some())
        .flat_map(|rec| rec.output.iter().map(move |v| (v.norm() - shift).abs()))
        .fold(f64::INFINITY, f64::min))
}

/// Draws `W ~ U[0.5, 1.5)`, `B ~ U[-0.2, 0.2)`, `θ ~ U[0, 2π)` and an input
/// `x ~ U[0, 1)` from `seed`. Inputs whose inter-layer moduli come within
/// `10 * step` of the activation kink are redrawn.
pub fn random_grad_check_case(
    grid: usize,
    layers: usize,
    activation_shift: f64,
    seed: u64,
    step: f64,
) -> Result<GradCheckCase> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::identity(grid, layers, activation_shift)?;
    for layer in model.layers_mut() {
        layer.weight.as_mut_slice().iter_mut().for_each(|w| *w = rng.random_range(0.5..1.5));
        layer.bias.as_mut_slice().iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
        layer.phase.as_mut_slice().iter_mut().for_each(|t| *t = rng.random_range(0.0..std::f64::consts::TAU));
    }
    let label = rng.random_range(0..crate::optics::NUM_CLASSES);
    for _ in 0..100 {
        let input = RealGrid::from_fn(grid, |_, _| rng.random_range(0.0..1.0))?;
        if turning_point_margin(&model, &input)? > 10.0 * step {
            return Ok(GradCheckCase { model, input, label });
        }
    }
    Err(Error::Consistency(
        "could not draw an input away from the activation turning point".into(),
    ))
}
