//! Finite-difference verification of the stage VJPs and the full reverse pass.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;

use super::vjp::*;
use crate::amplitude::{build_lowpass, fill_undefined, lowpass_downsample, power, spcen, LowpassKernel};
use crate::config::{default_config, FrontendConfig, FrontendParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::gabor::{analyze, build_gabor, GaborKernel, Waveform};
use crate::grid::{ComplexGrid, Grid, Mask, MaskedGrid};
use crate::phase::{argument_with_threshold, differentiate, phasor, rotate_to_conv2, unwrap, unwrap_offsets, Axis, PowGate};
use crate::pipeline::{forward, Trace};

/// Smallest admissible distance of an unwrap step from ±π.
pub const UNWRAP_MARGIN: f64 = 1e-3;
/// Smallest admissible magnitude of a defined time-frequency element.
pub const MIN_MAGNITUDE: f64 = 1e-6;
/// Smallest admissible sPCEN root base.
pub const MIN_SPCEN_BASE: f64 = 1e-6;
pub const LINEAR_TOLERANCE: f64 = 1e-8;
pub const SMOOTH_TOLERANCE: f64 = 1e-3;
/// Step used by the per-stage checks of nonlinear stages.
pub const STAGE_STEP: f64 = 1e-6;
/// Step for linear and bilinear stages, where central differences carry no
/// truncation error and a larger step only shrinks rounding error.
pub const LINEAR_STAGE_STEP: f64 = 1e-4;
/// Step used by the end-to-end check.
pub const PIPELINE_STEP: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn central(f: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((f(h)? - f(-h)?) / (2.0 * h))
}

/// Reject evaluation points where the readout is not differentiable.
pub fn check_smooth(trace: &Trace) -> Result<()> {
    if let Some(theta1) = &trace.theta1 {
        for (z, &m) in trace.tf.data.as_slice().iter().zip(theta1.mask.as_slice()) {
            if m && z.norm() < MIN_MAGNITUDE {
                return Err(Error::NonSmooth(format!(
                    "defined element with magnitude {:e} below {MIN_MAGNITUDE:e}",
                    z.norm()
                )));
            }
        }
    }
    for path in &trace.paths {
        if path.unwrap_margin < UNWRAP_MARGIN {
            return Err(Error::NonSmooth(format!(
                "{} unwrap step within {:e} of π",
                path.feature, path.unwrap_margin
            )));
        }
    }
    if let Some(p) = &trace.pow {
        for bin in 0..p.down.rows() {
            let (alpha, delta) = (trace.params.spcen_alpha[bin], trace.params.spcen_delta[bin]);
            let smooth = crate::amplitude::spcen_smoother(p.down.data.row(bin), trace.params.spcen_s[bin]);
            for (f, sm) in p.down.data.row(bin).iter().zip(smooth) {
                let base = f / (trace.config.epsilon + sm).powf(alpha) + delta;
                if base < MIN_SPCEN_BASE {
                    return Err(Error::NonSmooth(format!("sPCEN base {base:e} at bin {bin}")));
                }
            }
        }
    }
    Ok(())
}

/// Discrete decisions of the forward pass must agree between two nearby points.
fn same_decisions(a: &Trace, b: &Trace) -> bool {
    a.theta1.as_ref().map(|t| &t.mask) == b.theta1.as_ref().map(|t| &t.mask)
        && a.paths.iter().zip(&b.paths).all(|(p, q)| p.unwrap_offsets == q.unwrap_offsets && p.down.mask == q.down.mask)
}

/// One directional-derivative comparison of the end-to-end check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    /// Parameter array probed, or `all`.
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub readout: f64,
    pub step: f64,
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }
}

/// Random perturbation direction with a per-array scale matched to each parameter's range.
pub fn probe_direction(params: &FrontendParams, rng: &mut impl Rng) -> FrontendParams {
    let mut dir = FrontendParams::zeros(params.num_bins());
    let scales: Vec<Box<dyn Fn(f64) -> f64>> = vec![
        Box::new(|_| 1e-3),
        Box::new(|v| 0.1 * v),
        Box::new(|v| 0.1 * v),
        Box::new(|v| 0.1 * v),
        Box::new(|v| 0.1 * v),
        Box::new(|v| 0.1 * v),
        Box::new(|_| 0.1),
        Box::new(|v| 0.1 * v),
        Box::new(|v| 0.1 * v),
        Box::new(|v| 0.1 * v.min(1.0 - v).max(1e-3)),
    ];
    for ((d, p), scale) in dir.arrays_mut().into_iter().zip(params.arrays()).zip(scales) {
        for (dv, &pv) in d.iter_mut().zip(p.iter()) {
            *dv = rng.gen_range(-1.0..1.0) * scale(pv);
        }
    }
    dir
}

/// Compare reverse-mode directional derivatives of the readout (sum of all
/// output planes) against central differences with step `h`, once per
/// parameter array and once along a joint direction.
pub fn grad_check(
    wave: &Waveform,
    params: &FrontendParams,
    config: &FrontendConfig,
    rng: &mut impl Rng,
    h: f64,
) -> Result<GradCheckReport> {
    let trace = forward(wave, params, config)?;
    check_smooth(&trace)?;
    let readout = trace.bundle().readout();
    let grads = trace.backward(&trace.readout_cotangents())?;
    let floor = 1e-7 * readout.abs().max(1.0);

    let full = probe_direction(params, rng);
    let mut directions: Vec<(String, FrontendParams)> = Vec::new();
    for (i, name) in PARAM_NAMES.iter().enumerate() {
        let mut d = FrontendParams::zeros(params.num_bins());
        *d.arrays_mut()[i] = full.arrays()[i].clone();
        directions.push((name.to_string(), d));
    }
    directions.push(("all".to_string(), full));

    let mut entries = Vec::with_capacity(directions.len());
    for (name, dir) in directions {
        let analytic = grads.params.dot(&dir);
        let eval = |step: f64| -> Result<f64> {
            let t = forward(wave, &params.offset(&dir, step), config)?;
            check_smooth(&t)?;
            if !same_decisions(&trace, &t) {
                return Err(Error::NonSmooth(format!("discrete decisions change along the `{name}` probe")));
            }
            Ok(t.bundle().readout())
        };
        let numeric = central(eval, h)?;
        entries.push(GradCheckEntry { rel_err: rel_err(analytic, numeric, floor), name, analytic, numeric });
    }
    Ok(GradCheckReport { readout, step: h, entries, tolerance: SMOOTH_TOLERANCE })
}

/// Geometry used by [`seeded_grad_check`]: at most 6 bins, 25 taps and a
/// stride of 6. At full size the phase paths contain so many unwrap steps that
/// a point with none of them near ±π essentially never occurs.
pub fn probe_config(config: &FrontendConfig) -> FrontendConfig {
    FrontendConfig {
        num_bins: config.num_bins.min(6),
        window_width: config.window_width.min(24),
        lowpass_stride: config.lowpass_stride.min(6),
        ..config.clone()
    }
}

/// Outcome of [`seeded_grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeededGradCheck {
    pub config: FrontendConfig,
    pub report: GradCheckReport,
    /// Draws discarded because they violated a smoothness precondition.
    pub rejected: usize,
}

/// Draw noise signals and random parameters from `seed` until one point is
/// smooth along every probe, then run [`grad_check`] there.
pub fn seeded_grad_check(config: &FrontendConfig, seed: u64, max_draws: usize) -> Result<SeededGradCheck> {
    let cfg = probe_config(config);
    cfg.validate()?;
    let mut rng = crate::synth::rng(seed);
    let len = 3 * cfg.window_width + 1;
    for rejected in 0..max_draws {
        let wave = crate::synth::white_noise(len, cfg.sample_rate_hint, &mut rng)?;
        let params = crate::synth::random_params(cfg.num_bins, cfg.window_width, &mut rng);
        match grad_check(&wave, &params, &cfg, &mut rng, PIPELINE_STEP) {
            Ok(report) => return Ok(SeededGradCheck { config: cfg, report, rejected }),
            Err(Error::NonSmooth(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NonSmooth(format!("no smooth evaluation point in {max_draws} draws")))
}

/// A stage of the front-end with a hand-written VJP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    GaborSynthesis,
    Convolution,
    Power,
    Argument,
    Rotation,
    Unwrap,
    Difference,
    Interpolation,
    LowpassSynthesis,
    LowpassConvolution,
    Spcen,
    Phasor,
    PowGate,
}

impl Stage {
    pub const ALL: [Stage; 13] = [
        Stage::GaborSynthesis,
        Stage::Convolution,
        Stage::Power,
        Stage::Argument,
        Stage::Rotation,
        Stage::Unwrap,
        Stage::Difference,
        Stage::Interpolation,
        Stage::LowpassSynthesis,
        Stage::LowpassConvolution,
        Stage::Spcen,
        Stage::Phasor,
        Stage::PowGate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GaborSynthesis => "gabor-synthesis",
            Stage::Convolution => "convolution",
            Stage::Power => "power",
            Stage::Argument => "argument",
            Stage::Rotation => "rotation",
            Stage::Unwrap => "unwrap",
            Stage::Difference => "difference",
            Stage::Interpolation => "interpolation",
            Stage::LowpassSynthesis => "lowpass-synthesis",
            Stage::LowpassConvolution => "lowpass-convolution",
            Stage::Spcen => "spcen",
            Stage::Phasor => "phasor",
            Stage::PowGate => "pow-gate",
        }
    }

    /// Linear (or bilinear) stages, for which central differences are exact up to rounding.
    pub fn is_linear(self) -> bool {
        matches!(
            self,
            Stage::Convolution
                | Stage::Rotation
                | Stage::Unwrap
                | Stage::Difference
                | Stage::Interpolation
                | Stage::LowpassConvolution
                | Stage::PowGate
        )
    }

    pub fn tolerance(self) -> f64 {
        if self.is_linear() {
            LINEAR_TOLERANCE
        } else {
            SMOOTH_TOLERANCE
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageCheck {
    pub stage: Stage,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    pub tolerance: f64,
}

impl StageCheck {
    pub fn passed(&self) -> bool {
        self.rel_err < self.tolerance
    }
}

fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn uniform_grid(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Grid<f64> {
    Grid::from_vec(rows, cols, uniform_vec(rng, rows * cols, lo, hi)).expect("sized")
}

fn complex_grid(rng: &mut impl Rng, rows: usize, cols: usize) -> Grid<Complex64> {
    Grid::from_fn(rows, cols, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_mask(rng: &mut impl Rng, rows: usize, cols: usize, p_undefined: f64) -> Mask {
    Grid::from_fn(rows, cols, |_, _| !rng.gen_bool(p_undefined))
}

fn dot(a: &Grid<f64>, b: &Grid<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn cdot(a: &Grid<Complex64>, b: &Grid<Complex64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &Grid<f64>, v: &Grid<f64>, e: f64) -> Grid<f64> {
    let data = x.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a + e * b).collect();
    Grid::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

fn caxpy(x: &Grid<Complex64>, v: &Grid<Complex64>, e: f64) -> Grid<Complex64> {
    let data = x.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a + b * e).collect();
    Grid::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

fn vaxpy(x: &[f64], v: &[f64], e: f64) -> Vec<f64> {
    x.iter().zip(v).map(|(a, b)| a + e * b).collect()
}

fn small_config(m: usize, w: usize, stride: usize) -> FrontendConfig {
    FrontendConfig { num_bins: m, window_width: w, lowpass_stride: stride, ..default_config() }
}

/// Directional derivative of `⟨ū, stage(x)⟩` two ways for one random point.
/// Returns `(analytic, numeric)`.
fn stage_pair(stage: Stage, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let h = if stage.is_linear() { LINEAR_STAGE_STEP } else { STAGE_STEP };
    match stage {
        Stage::GaborSynthesis => {
            let cfg = small_config(3, 10, 1);
            let mut p = FrontendParams::uniform(3, 1.0);
            p.eta = uniform_vec(rng, 3, 0.05, 0.45);
            p.sigma_gabor = uniform_vec(rng, 3, 1.5, 5.0);
            let up = complex_grid(rng, 3, 11);
            let (ve, vs) = (uniform_vec(rng, 3, -1.0, 1.0), uniform_vec(rng, 3, -1.0, 1.0));
            let (eb, sb) = gabor_synthesis_vjp(&p, &cfg, &up)?;
            let analytic = vdot(&eb, &ve) + vdot(&sb, &vs);
            let numeric = central(
                |e| {
                    let q = FrontendParams::with_gabor(vaxpy(&p.eta, &ve, e), vaxpy(&p.sigma_gabor, &vs, e));
                    Ok(cdot(&up, &build_gabor(&q, &cfg)?.taps))
                },
                h,
            )?;
            Ok((analytic, numeric))
        }
        Stage::Convolution => {
            let x = uniform_vec(rng, 30, -1.0, 1.0);
            let vx = uniform_vec(rng, 30, -1.0, 1.0);
            let taps = complex_grid(rng, 2, 9);
            let vt = complex_grid(rng, 2, 9);
            let up = complex_grid(rng, 2, 22);
            let kernel = GaborKernel { taps: taps.clone() };
            let (xb, tb) = analyze_vjp(&x, &kernel, &up)?;
            let analytic = vdot(&xb, &vx) + cdot(&tb, &vt);
            let numeric = central(
                |e| {
                    let k = GaborKernel { taps: caxpy(&taps, &vt, e) };
                    let w = Waveform::new(vaxpy(&x, &vx, e), 1.0)?;
                    Ok(cdot(&up, &analyze(&w, &k)?.data))
                },
                h,
            )?;
            Ok((analytic, numeric))
        }
        Stage::Power => {
            let z = complex_grid(rng, 2, 5);
            let v = complex_grid(rng, 2, 5);
            let up = uniform_grid(rng, 2, 5, -1.0, 1.0);
            let zb = power_vjp(&ComplexGrid::fully_defined(z.clone()), &up)?;
            let numeric = central(|e| Ok(dot(&up, &power(&ComplexGrid::fully_defined(caxpy(&z, &v, e))).data)), h)?;
            Ok((cdot(&zb, &v), numeric))
        }
        Stage::Argument => {
            let mut z = Grid::from_fn(2, 6, |_, _| {
                Complex64::from_polar(rng.gen_range(0.3..2.0), rng.gen_range(-PI + 0.05..PI - 0.05))
            });
            let mut v = complex_grid(rng, 2, 6);
            // one zero-amplitude element: undefined, held fixed
            z[(1, 2)] = Complex64::new(0.0, 0.0);
            v[(1, 2)] = Complex64::new(0.0, 0.0);
            let up = uniform_grid(rng, 2, 6, -1.0, 1.0);
            let tf = ComplexGrid::fully_defined(z.clone());
            let th = argument_with_threshold(&tf, 0.0);
            let zb = argument_vjp(&tf, &th.mask, &up)?;
            let numeric = central(
                |e| Ok(dot(&up, &argument_with_threshold(&ComplexGrid::fully_defined(caxpy(&z, &v, e)), 0.0).data)),
                h,
            )?;
            Ok((cdot(&zb, &v), numeric))
        }
        Stage::Rotation => loop {
            let mut theta = MaskedGrid::new(uniform_grid(rng, 2, 6, -3.0, 3.0), random_mask(rng, 2, 6, 0.2))?;
            theta = theta.finalize();
            let eta = uniform_vec(rng, 2, 0.0, 0.5);
            let centers: Vec<f64> = (0..6).map(|k| (k + 5) as f64).collect();
            let p = FrontendParams::with_gabor(eta.clone(), vec![1.0; 2]);
            let rotated = rotate_to_conv2(&theta, &p, &centers)?;
            if rotated.data.as_slice().iter().any(|v| PI - v.abs() < 0.05) {
                continue;
            }
            let vt = uniform_grid(rng, 2, 6, -1.0, 1.0);
            let ve = uniform_vec(rng, 2, -1.0, 1.0);
            let up = uniform_grid(rng, 2, 6, -1.0, 1.0);
            let (tb, eb) = rotation_vjp(&theta.mask, &centers, &up)?;
            let analytic = dot(&tb, &vt) + vdot(&eb, &ve);
            let numeric = central(
                |e| {
                    let t = MaskedGrid::new(axpy(&theta.data, &vt, e), theta.mask.clone())?;
                    let q = FrontendParams::with_gabor(vaxpy(&eta, &ve, e), vec![1.0; 2]);
                    Ok(dot(&up, &rotate_to_conv2(&t, &q, &centers)?.data))
                },
                h,
            )?;
            return Ok((analytic, numeric));
        },
        Stage::Unwrap => loop {
            let theta = MaskedGrid::new(uniform_grid(rng, 3, 8, -PI, PI), random_mask(rng, 3, 8, 0.15))?;
            let axis = if rng.gen_bool(0.5) { Axis::Time } else { Axis::Frequency };
            if unwrap_offsets(&theta, axis).1 < 0.05 {
                continue;
            }
            let v = uniform_grid(rng, 3, 8, -1.0, 1.0);
            let up = uniform_grid(rng, 3, 8, -1.0, 1.0);
            let analytic = dot(&unwrap_vjp(&theta.mask, &up)?, &v);
            let numeric = central(
                |e| Ok(dot(&up, &unwrap(&MaskedGrid::new(axpy(&theta.data, &v, e), theta.mask.clone())?, axis).data)),
                h,
            )?;
            return Ok((analytic, numeric));
        },
        Stage::Difference => {
            let x = MaskedGrid::new(uniform_grid(rng, 3, 7, -2.0, 2.0), random_mask(rng, 3, 7, 0.2))?;
            let v = uniform_grid(rng, 3, 7, -1.0, 1.0);
            let (ut, uf) = (uniform_grid(rng, 3, 7, -1.0, 1.0), uniform_grid(rng, 3, 7, -1.0, 1.0));
            let analytic = dot(&difference_vjp(&x.mask, Axis::Time, &ut)?, &v)
                + dot(&difference_vjp(&x.mask, Axis::Frequency, &uf)?, &v);
            let numeric = central(
                |e| {
                    let g = MaskedGrid::new(axpy(&x.data, &v, e), x.mask.clone())?;
                    Ok(dot(&ut, &differentiate(&g, Axis::Time).data) + dot(&uf, &differentiate(&g, Axis::Frequency).data))
                },
                h,
            )?;
            Ok((analytic, numeric))
        }
        Stage::Interpolation => {
            let mut mask = random_mask(rng, 3, 9, 0.4);
            mask[(0, 0)] = false;
            mask[(0, 8)] = false;
            for c in 0..9 {
                mask[(2, c)] = false;
            }
            let x = MaskedGrid::new(uniform_grid(rng, 3, 9, -2.0, 2.0), mask)?;
            let v = uniform_grid(rng, 3, 9, -1.0, 1.0);
            let up = uniform_grid(rng, 3, 9, -1.0, 1.0);
            let analytic = dot(&fill_vjp(&x.mask, &up)?, &v);
            let numeric = central(
                |e| Ok(dot(&up, &fill_undefined(&MaskedGrid::new(axpy(&x.data, &v, e), x.mask.clone())?).data)),
                h,
            )?;
            Ok((analytic, numeric))
        }
        Stage::LowpassSynthesis => {
            let cfg = small_config(2, 10, 1);
            let sigma = uniform_vec(rng, 2, 0.1, 1.5);
            let vs = uniform_vec(rng, 2, -1.0, 1.0);
            let up = uniform_grid(rng, 2, 11, -1.0, 1.0);
            let analytic = vdot(&lowpass_synthesis_vjp(&sigma, &cfg, &up)?, &vs);
            let numeric = central(|e| Ok(dot(&up, &build_lowpass(&vaxpy(&sigma, &vs, e), &cfg)?.taps)), h)?;
            Ok((analytic, numeric))
        }
        Stage::LowpassConvolution => {
            let x = MaskedGrid::new(uniform_grid(rng, 2, 20, -2.0, 2.0), random_mask(rng, 2, 20, 0.25))?;
            let vx = uniform_grid(rng, 2, 20, -1.0, 1.0);
            let taps = uniform_grid(rng, 2, 7, 0.0, 1.0);
            let vt = uniform_grid(rng, 2, 7, -1.0, 1.0);
            let kernel = LowpassKernel { taps: taps.clone(), stride: 2 };
            let out_mask = lowpass_downsample(&x, &kernel)?.mask;
            let up = uniform_grid(rng, 2, 7, -1.0, 1.0);
            let (xb, tb) = lowpass_downsample_vjp(&x, &kernel, &up)?;
            let analytic = dot(&xb, &vx) + dot(&tb, &vt);
            let numeric = central(
                |e| {
                    let k = LowpassKernel { taps: axpy(&taps, &vt, e), stride: 2 };
                    let out = lowpass_downsample(&MaskedGrid::new(axpy(&x.data, &vx, e), x.mask.clone())?, &k)?;
                    Ok(out.data.as_slice().iter().zip(up.as_slice()).zip(out_mask.as_slice())
                        .filter(|(_, &m)| m)
                        .map(|((a, b), _)| a * b)
                        .sum())
                },
                h,
            )?;
            Ok((analytic, numeric))
        }
        Stage::Spcen => {
            let cfg = small_config(2, 2, 1);
            let f = MaskedGrid::fully_defined(uniform_grid(rng, 2, 12, 0.1, 5.0));
            let mut p = FrontendParams::uniform(2, 1.0);
            p.spcen_alpha = uniform_vec(rng, 2, 0.3, 1.0);
            p.spcen_delta = uniform_vec(rng, 2, 0.5, 3.0);
            p.spcen_r = uniform_vec(rng, 2, 1.2, 3.0);
            p.spcen_s = uniform_vec(rng, 2, 0.05, 0.9);
            let vf = uniform_grid(rng, 2, 12, -1.0, 1.0);
            let dirs: Vec<Vec<f64>> = (0..4).map(|_| uniform_vec(rng, 2, -1.0, 1.0)).collect();
            let up = uniform_grid(rng, 2, 12, -1.0, 1.0);
            let g = spcen_vjp(&f, &p, &cfg, &up)?;
            let analytic = dot(&g.input, &vf)
                + vdot(&g.alpha, &dirs[0])
                + vdot(&g.delta, &dirs[1])
                + vdot(&g.r, &dirs[2])
                + vdot(&g.s, &dirs[3]);
            let numeric = central(
                |e| {
                    let mut q = p.clone();
                    q.spcen_alpha = vaxpy(&p.spcen_alpha, &dirs[0], e);
                    q.spcen_delta = vaxpy(&p.spcen_delta, &dirs[1], e);
                    q.spcen_r = vaxpy(&p.spcen_r, &dirs[2], e);
                    q.spcen_s = vaxpy(&p.spcen_s, &dirs[3], e);
                    Ok(dot(&up, &spcen(&MaskedGrid::fully_defined(axpy(&f.data, &vf, e)), &q, &cfg)?.data))
                },
                h,
            )?;
            Ok((analytic, numeric))
        }
        Stage::Phasor => {
            let th = MaskedGrid::new(uniform_grid(rng, 2, 6, -4.0, 4.0), random_mask(rng, 2, 6, 0.2))?;
            let v = uniform_grid(rng, 2, 6, -1.0, 1.0);
            let (ur, ui) = (uniform_grid(rng, 2, 6, -1.0, 1.0), uniform_grid(rng, 2, 6, -1.0, 1.0));
            let analytic = dot(&phasor_vjp(&th, &ur, &ui)?, &v);
            let numeric = central(
                |e| {
                    let p = phasor(&MaskedGrid::new(axpy(&th.data, &v, e), th.mask.clone())?);
                    Ok(dot(&ur, &p.re) + dot(&ui, &p.im))
                },
                h,
            )?;
            Ok((analytic, numeric))
        }
        Stage::PowGate => {
            let f = MaskedGrid::new(uniform_grid(rng, 2, 6, -2.0, 2.0), random_mask(rng, 2, 6, 0.2))?;
            let p = MaskedGrid::new(uniform_grid(rng, 2, 6, 0.0, 2.0), random_mask(rng, 2, 6, 0.2))?;
            let (vf, vp) = (uniform_grid(rng, 2, 6, -1.0, 1.0), uniform_grid(rng, 2, 6, -1.0, 1.0));
            let up = uniform_grid(rng, 2, 6, -1.0, 1.0);
            let gated_mask = f.pow_gate(&p)?.mask;
            let (fb, pb) = pow_gate_vjp(&f.data, &p.data, &gated_mask, &up)?;
            let analytic = dot(&fb, &vf) + dot(&pb, &vp);
            let numeric = central(
                |e| {
                    let fe = MaskedGrid::new(axpy(&f.data, &vf, e), f.mask.clone())?;
                    let pe = MaskedGrid::new(axpy(&p.data, &vp, e), p.mask.clone())?;
                    Ok(dot(&up, &fe.pow_gate(&pe)?.data))
                },
                h,
            )?;
            Ok((analytic, numeric))
        }
    }
}

/// Check one stage at a random point. `corrupt` scales the VJP by 1.01 to
/// exercise the failure path of the harness.
pub fn check_stage(stage: Stage, rng: &mut impl Rng, corrupt: bool) -> Result<StageCheck> {
    let (mut analytic, numeric) = stage_pair(stage, rng)?;
    if corrupt {
        analytic *= 1.01;
    }
    Ok(StageCheck {
        stage,
        analytic,
        numeric,
        rel_err: rel_err(analytic, numeric, 1e-12),
        tolerance: stage.tolerance(),
    })
}

/// Check every stage at `trials` random points each, keeping the worst result per stage.
pub fn check_stages(rng: &mut impl Rng, trials: usize, corrupt: Option<Stage>) -> Result<Vec<StageCheck>> {
    let mut out = Vec::with_capacity(Stage::ALL.len());
    for stage in Stage::ALL {
        let mut worst: Option<StageCheck> = None;
        for _ in 0..trials.max(1) {
            let c = check_stage(stage, rng, corrupt == Some(stage))?;
            if worst.as_ref().is_none_or(|w| c.rel_err > w.rel_err) {
                worst = Some(c);
            }
        }
        out.push(worst.expect("at least one trial"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_stage_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for c in check_stages(&mut rng, 5, None).unwrap() {
            assert!(c.passed(), "{}: analytic {} numeric {} rel {:e}", c.stage, c.analytic, c.numeric, c.rel_err);
        }
    }

    #[test]
    fn corrupted_stage_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let checks = check_stages(&mut rng, 1, Some(Stage::Spcen)).unwrap();
        for c in checks {
            assert_eq!(c.passed(), c.stage != Stage::Spcen, "{}", c.stage);
        }
    }

    #[test]
    fn full_pipeline_matches_finite_differences() {
        let out = seeded_grad_check(&default_config(), 1, 50).unwrap();
        assert!(out.report.passed(), "{:#?}", out.report);
        assert_eq!(out.report.entries.len(), PARAM_NAMES.len() + 1);
    }

    #[test]
    fn stage_names_roundtrip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("nope".parse::<Stage>().is_err());
    }
}
