//! Vector-Jacobian products of the individual stages.
//!
//! Complex cotangents are stored as `∂L/∂re + i·∂L/∂im`. Undefined elements
//! never carry gradient; in particular the argument of a zero-amplitude
//! element backpropagates exactly zero.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::amplitude::{fill_plan, fill_undefined, fill_weights, lowpass_std, spcen_smoother, LowpassKernel};
use crate::config::{FrontendConfig, FrontendParams};
use crate::error::{Error, Result};
use crate::gabor::{gaussian_envelope, GaborKernel};
use crate::grid::{check_shapes, ComplexGrid, Grid, Mask, MaskedGrid};
use crate::phase::{difference_operands, lines, Axis};

const TWO_PI: f64 = 2.0 * PI;

/// Gabor synthesis w.r.t. (η, σ). Returns `(eta_bar, sigma_bar)`.
pub fn gabor_synthesis_vjp(
    params: &FrontendParams,
    config: &FrontendConfig,
    taps_bar: &Grid<Complex64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes(taps_bar.shape(), (config.num_bins, config.taps()))?;
    let half = config.half_width();
    let mut eta_bar = vec![0.0; config.num_bins];
    let mut sigma_bar = vec![0.0; config.num_bins];
    for m in 0..config.num_bins {
        let sigma = params.sigma_gabor[m];
        let env = gaussian_envelope(sigma, half);
        let norm: f64 = env.iter().sum();
        let mut d_norm = 0.0;
        let d_env: Vec<f64> = env
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let n = j as f64 - half as f64;
                let d = a * n * n / sigma.powi(3);
                d_norm += d;
                d
            })
            .collect();
        for (j, tb) in taps_bar.row(m).iter().enumerate() {
            let n = j as f64 - half as f64;
            let carrier = Complex64::from_polar(1.0, TWO_PI * params.eta[m] * n);
            let tap = carrier * (env[j] / norm);
            // ⟨t̄, ∂t⟩ = Re(conj(t̄)·∂t)
            eta_bar[m] += (tb.conj() * Complex64::new(0.0, TWO_PI * n) * tap).re;
            let d_mag = d_env[j] / norm - env[j] * d_norm / (norm * norm);
            sigma_bar[m] += (tb.conj() * carrier).re * d_mag;
        }
    }
    Ok((eta_bar, sigma_bar))
}

/// Filterbank convolution w.r.t. the signal and the taps.
pub fn analyze_vjp(x: &[f64], kernel: &GaborKernel, upstream: &Grid<Complex64>) -> Result<(Vec<f64>, Grid<Complex64>)> {
    let taps = kernel.len();
    let frames = upstream.cols();
    if upstream.rows() != kernel.num_bins() || x.len() + 1 != frames + taps {
        return Err(Error::ShapeMismatch(format!(
            "convolution cotangent {}x{} for {} samples and {} taps",
            upstream.rows(),
            frames,
            x.len(),
            taps
        )));
    }
    let last = taps - 1;
    let per_bin: Vec<(Vec<f64>, Vec<Complex64>)> = (0..kernel.num_bins())
        .into_par_iter()
        .map(|m| {
            let filt = kernel.taps.row(m);
            let ub = upstream.row(m);
            let mut x_bar = vec![0.0; x.len()];
            let mut t_bar = vec![Complex64::new(0.0, 0.0); taps];
            for (k, u) in ub.iter().enumerate() {
                if u.re == 0.0 && u.im == 0.0 {
                    continue;
                }
                for j in 0..taps {
                    let i = k + last - j;
                    t_bar[j] += u * x[i];
                    x_bar[i] += u.re * filt[j].re + u.im * filt[j].im;
                }
            }
            (x_bar, t_bar)
        })
        .collect();
    let mut x_bar = vec![0.0; x.len()];
    let mut taps_bar = Grid::filled(kernel.num_bins(), taps, Complex64::new(0.0, 0.0));
    for (m, (xb, tb)) in per_bin.into_iter().enumerate() {
        x_bar.iter_mut().zip(xb).for_each(|(a, b)| *a += b);
        taps_bar.row_mut(m).copy_from_slice(&tb);
    }
    Ok((x_bar, taps_bar))
}

/// Squared modulus: `z̄ = 2·z·ū`.
pub fn power_vjp(tf: &ComplexGrid, upstream: &Grid<f64>) -> Result<Grid<Complex64>> {
    check_shapes(tf.shape(), upstream.shape())?;
    let data = tf.data.as_slice().iter().zip(upstream.as_slice()).map(|(z, u)| z * (2.0 * u)).collect();
    Grid::from_vec(upstream.rows(), upstream.cols(), data)
}

/// Principal argument: `(∂θ/∂re, ∂θ/∂im) = (−im, re)/|z|²`, zero where `mask` is false.
pub fn argument_vjp(tf: &ComplexGrid, mask: &Mask, upstream: &Grid<f64>) -> Result<Grid<Complex64>> {
    check_shapes(tf.shape(), upstream.shape())?;
    check_shapes(mask.shape(), upstream.shape())?;
    let data = tf
        .data
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .zip(upstream.as_slice())
        .map(|((z, &m), u)| {
            if !m {
                return Complex64::new(0.0, 0.0);
            }
            let r2 = z.norm_sqr();
            Complex64::new(-z.im / r2, z.re / r2) * *u
        })
        .collect();
    Grid::from_vec(upstream.rows(), upstream.cols(), data)
}

/// Rotation to the origin-anchored phase. Identity on θ; the center
/// frequencies receive `−2π·Σ_t c_t·ū[m][t]`.
pub fn rotation_vjp(mask: &Mask, frame_centers: &[f64], upstream: &Grid<f64>) -> Result<(Grid<f64>, Vec<f64>)> {
    check_shapes(mask.shape(), upstream.shape())?;
    if frame_centers.len() != upstream.cols() {
        return Err(Error::ShapeMismatch("frame offsets do not match the grid".into()));
    }
    let theta_bar = masked_copy(upstream, mask);
    let eta_bar = (0..upstream.rows())
        .map(|m| {
            -TWO_PI * theta_bar.row(m).iter().zip(frame_centers).map(|(u, c)| u * c).sum::<f64>()
        })
        .collect();
    Ok((theta_bar, eta_bar))
}

/// Unwrapping adds locally constant 2π multiples, so its VJP is the identity on defined elements.
pub fn unwrap_vjp(mask: &Mask, upstream: &Grid<f64>) -> Result<Grid<f64>> {
    check_shapes(mask.shape(), upstream.shape())?;
    Ok(masked_copy(upstream, mask))
}

fn masked_copy(upstream: &Grid<f64>, mask: &Mask) -> Grid<f64> {
    let mut out = upstream.clone();
    for (v, &m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        if !m {
            *v = 0.0;
        }
    }
    out
}

/// Difference stencil; `input_mask` is the mask of the differenced grid.
pub fn difference_vjp(input_mask: &Mask, axis: Axis, upstream: &Grid<f64>) -> Result<Grid<f64>> {
    check_shapes(input_mask.shape(), upstream.shape())?;
    let mask = input_mask.as_slice();
    let ub = upstream.as_slice();
    let mut out = vec![0.0; ub.len()];
    for line in lines(upstream.shape(), axis) {
        for w in 0..line.len() {
            let Some((a, b)) = difference_operands(&line, w) else { continue };
            if mask[a] && mask[b] {
                out[b] += ub[line[w]];
                out[a] -= ub[line[w]];
            }
        }
    }
    Grid::from_vec(upstream.rows(), upstream.cols(), out)
}

/// Gap interpolation: gradient of filled values flows to the defined neighbors
/// through the interpolation weights.
pub fn fill_vjp(mask: &Mask, upstream: &Grid<f64>) -> Result<Grid<f64>> {
    check_shapes(mask.shape(), upstream.shape())?;
    let mut out = Grid::filled(upstream.rows(), upstream.cols(), 0.0);
    for r in 0..upstream.rows() {
        let plan = fill_plan(mask.row(r));
        let ub = upstream.row(r);
        let row = out.row_mut(r);
        for (k, fill) in plan.into_iter().enumerate() {
            match fill {
                None => row[k] += ub[k],
                Some(fill) => {
                    for (i, w) in fill_weights(fill, k) {
                        row[i] += w * ub[k];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Strided lowpass convolution on an already filled input. Returns `(input_bar, taps_bar)`.
pub fn lowpass_conv_vjp(filled: &Grid<f64>, kernel: &LowpassKernel, upstream: &Grid<f64>) -> Result<(Grid<f64>, Grid<f64>)> {
    let frames = kernel
        .output_frames(filled.cols())
        .ok_or(Error::SignalTooShort { len: filled.cols(), needed: kernel.len() })?;
    check_shapes(upstream.shape(), (filled.rows(), frames))?;
    let taps = kernel.len();
    let mut in_bar = Grid::filled(filled.rows(), filled.cols(), 0.0);
    let mut taps_bar = Grid::filled(filled.rows(), taps, 0.0);
    for m in 0..filled.rows() {
        let filt = kernel.taps.row(m);
        let src = filled.row(m);
        let ub = upstream.row(m);
        let ib = in_bar.row_mut(m);
        let mut tb = vec![0.0; taps];
        for (j, &u) in ub.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let start = j * kernel.stride;
            for i in 0..taps {
                ib[start + i] += filt[i] * u;
                tb[i] += src[start + i] * u;
            }
        }
        taps_bar.row_mut(m).copy_from_slice(&tb);
    }
    Ok((in_bar, taps_bar))
}

/// Mask-aware lowpass downsampling (interpolation then strided convolution).
/// Cotangents at undefined outputs are ignored.
pub fn lowpass_downsample_vjp(input: &MaskedGrid, kernel: &LowpassKernel, upstream: &Grid<f64>) -> Result<(Grid<f64>, Grid<f64>)> {
    let filled = fill_undefined(input);
    let half = kernel.half_width();
    let mut ub = upstream.clone();
    for m in 0..ub.rows() {
        for (j, u) in ub.row_mut(m).iter_mut().enumerate() {
            let center = j * kernel.stride + half;
            if center < input.cols() && !input.is_defined(m, center) {
                *u = 0.0;
            }
        }
    }
    let (filled_bar, taps_bar) = lowpass_conv_vjp(&filled.data, kernel, &ub)?;
    Ok((fill_vjp(&input.mask, &filled_bar)?, taps_bar))
}

/// Lowpass synthesis w.r.t. its width factors.
pub fn lowpass_synthesis_vjp(sigma: &[f64], config: &FrontendConfig, taps_bar: &Grid<f64>) -> Result<Vec<f64>> {
    check_shapes(taps_bar.shape(), (sigma.len(), config.taps()))?;
    let half = config.half_width() as isize;
    let ds_dsigma = 0.5 * (config.window_width as f64 - 1.0);
    Ok(sigma
        .iter()
        .enumerate()
        .map(|(m, &sg)| {
            let s = lowpass_std(sg, config.window_width);
            let ns: Vec<f64> = (-half..=half).map(|n| n as f64).collect();
            let env: Vec<f64> = ns.iter().map(|n| (-n * n / (2.0 * s * s)).exp()).collect();
            let d_env: Vec<f64> = env.iter().zip(&ns).map(|(a, n)| a * n * n / s.powi(3) * ds_dsigma).collect();
            let norm: f64 = env.iter().sum();
            let d_norm: f64 = d_env.iter().sum();
            taps_bar
                .row(m)
                .iter()
                .enumerate()
                .map(|(j, tb)| tb * (d_env[j] / norm - env[j] * d_norm / (norm * norm)))
                .sum()
        })
        .collect())
}

/// Gradients of sPCEN w.r.t. its input and per-bin parameters.
#[derive(Debug, Clone)]
pub struct SpcenGrads {
    pub input: Grid<f64>,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
}

/// sPCEN, backpropagated through the smoother recursion in reverse time order.
pub fn spcen_vjp(input: &MaskedGrid, params: &FrontendParams, config: &FrontendConfig, upstream: &Grid<f64>) -> Result<SpcenGrads> {
    check_shapes(input.shape(), upstream.shape())?;
    let (rows, cols) = input.shape();
    let mut g = SpcenGrads {
        input: Grid::filled(rows, cols, 0.0),
        alpha: vec![0.0; rows],
        delta: vec![0.0; rows],
        r: vec![0.0; rows],
        s: vec![0.0; rows],
    };
    let eps = config.epsilon;
    for m in 0..rows {
        let f = input.data.row(m);
        let (alpha, delta, r, s) = (params.spcen_alpha[m], params.spcen_delta[m], params.spcen_r[m], params.spcen_s[m]);
        let smooth = spcen_smoother(f, s);
        let inv_r = 1.0 / r;
        let delta_root = delta.powf(inv_r);
        let fb = g.input.row_mut(m);
        let mut carry = 0.0;
        for n in (0..cols).rev() {
            let u = if input.is_defined(m, n) { upstream[(m, n)] } else { 0.0 };
            let base_m = eps + smooth[n];
            let q = base_m.powf(-alpha);
            let b = f[n] * q + delta;
            let dy_db = inv_r * b.powf(inv_r - 1.0);
            fb[n] += u * dy_db * q;
            let m_bar = u * dy_db * f[n] * (-alpha) * base_m.powf(-alpha - 1.0) + carry;
            g.alpha[m] += u * dy_db * f[n] * q * (-base_m.ln());
            g.delta[m] += u * (dy_db - inv_r * delta.powf(inv_r - 1.0));
            g.r[m] += u * (-inv_r * inv_r) * (b.powf(inv_r) * b.ln() - delta_root * delta.ln());
            if n > 0 {
                fb[n] += s * m_bar;
                g.s[m] += m_bar * (f[n] - smooth[n - 1]);
                carry = (1.0 - s) * m_bar;
            } else {
                fb[0] += m_bar;
            }
        }
    }
    Ok(g)
}

/// Phasor map: `θ̄ = −sin θ·ū_re + cos θ·ū_im` on defined elements.
pub fn phasor_vjp(theta: &MaskedGrid, up_re: &Grid<f64>, up_im: &Grid<f64>) -> Result<Grid<f64>> {
    check_shapes(theta.shape(), up_re.shape())?;
    check_shapes(theta.shape(), up_im.shape())?;
    let data = theta
        .data
        .as_slice()
        .iter()
        .zip(theta.mask.as_slice())
        .zip(up_re.as_slice().iter().zip(up_im.as_slice()))
        .map(|((t, &m), (ur, ui))| {
            if m {
                let (s, c) = t.sin_cos();
                -s * ur + c * ui
            } else {
                0.0
            }
        })
        .collect();
    Grid::from_vec(theta.rows(), theta.cols(), data)
}

/// POW gating product rule on the defined elements of the gated output.
/// Returns `(feature_bar, pow_bar)`.
pub fn pow_gate_vjp(feature: &Grid<f64>, pow: &Grid<f64>, gated_mask: &Mask, upstream: &Grid<f64>) -> Result<(Grid<f64>, Grid<f64>)> {
    check_shapes(feature.shape(), pow.shape())?;
    check_shapes(feature.shape(), upstream.shape())?;
    check_shapes(feature.shape(), gated_mask.shape())?;
    let mut f_bar = Grid::filled(feature.rows(), feature.cols(), 0.0);
    let mut p_bar = f_bar.clone();
    for i in 0..upstream.as_slice().len() {
        if gated_mask.as_slice()[i] {
            let u = upstream.as_slice()[i];
            f_bar.as_mut_slice()[i] = u * pow.as_slice()[i];
            p_bar.as_mut_slice()[i] = u * feature.as_slice()[i];
        }
    }
    Ok((f_bar, p_bar))
}
