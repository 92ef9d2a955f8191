//! Direct-sum short-time Fourier transforms used as ground truth for the
//! frontend's phase conventions.
//!
//! Everything here is a literal nested sum over frames, bins and taps.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{FrontendConfig, FrontendParams};
use crate::error::{Error, Result};
use crate::gabor::{analyze, build_gabor, gaussian_envelope, Waveform};
use crate::grid::{ComplexGrid, Grid, MaskedGrid};
use crate::phase::{argument, argument_with_threshold, differentiate, rotate_to_conv2, unwrap, wrap, Axis, PhaseConvention};

/// Phase comparisons only use elements whose magnitude exceeds this fraction
/// of the largest magnitude in the grid.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;

/// Parameters of a Gaussian-window STFT.
#[derive(Debug, Clone, PartialEq)]
pub struct StftSpec {
    /// Window taps for offsets `n = -W/2..=W/2`, summing to one.
    pub window: Vec<f64>,
    /// Bin frequencies in cycles/sample.
    pub freqs: Vec<f64>,
    pub hop: usize,
    pub convention: PhaseConvention,
}

impl StftSpec {
    /// l1-normalized Gaussian window of `width + 1` taps and standard deviation `sigma`.
    pub fn gaussian(width: usize, sigma: f64, freqs: Vec<f64>, hop: usize, convention: PhaseConvention) -> Result<Self> {
        if width == 0 || !width.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("window width {width} must be positive and even")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParam(format!("window sigma {sigma} must be positive")));
        }
        if hop == 0 {
            return Err(Error::InvalidConfig("hop must be positive".into()));
        }
        if let Some(f) = freqs.iter().find(|f| !(0.0..=0.5).contains(*f)) {
            return Err(Error::InvalidParam(format!("bin frequency {f} outside [0, 0.5]")));
        }
        let mut window = gaussian_envelope(sigma, width / 2);
        let norm: f64 = window.iter().sum();
        window.iter_mut().for_each(|w| *w /= norm);
        Ok(StftSpec { window, freqs, hop, convention })
    }

    pub fn with_convention(&self, convention: PhaseConvention) -> Self {
        StftSpec { convention, ..self.clone() }
    }

    pub fn half_width(&self) -> usize {
        self.window.len() / 2
    }

    pub fn num_frames(&self, len: usize) -> Option<usize> {
        (len >= self.window.len()).then(|| (len - self.window.len()) / self.hop + 1)
    }

    /// Absolute sample index of each frame's window center.
    pub fn frame_centers(&self, len: usize) -> Vec<f64> {
        let frames = self.num_frames(len).unwrap_or(0);
        (0..frames).map(|t| (t * self.hop + self.half_width()) as f64).collect()
    }
}

/// `e^{-2πi·f·n}` with the argument reduced modulo one cycle first.
fn carrier(f: f64, n: f64) -> Complex64 {
    let cycles = (f * n).rem_euclid(1.0);
    Complex64::from_polar(1.0, -2.0 * PI * cycles)
}

/// `X(f, c) = Σ_n x[c+n]·w(n)·e^{-2πif·n}` (window-anchored) or
/// `Σ_n x[c+n]·w(n)·e^{-2πif·(c+n)}` (origin-anchored), with `c` the frame center.
pub fn stft_direct(wave: &Waveform, spec: &StftSpec) -> Result<ComplexGrid> {
    let x = wave.samples();
    let taps = spec.window.len();
    let frames = spec.num_frames(x.len()).ok_or(Error::SignalTooShort { len: x.len(), needed: taps })?;
    let half = spec.half_width() as isize;
    let rows = spec.freqs.len();
    let mut out = Grid::filled(rows, frames, Complex64::new(0.0, 0.0));
    out.as_mut_slice().par_chunks_mut(frames).enumerate().for_each(|(k, row)| {
        let f = spec.freqs[k];
        // window-anchored kernel w(n)·e^{-2πifn}, shared by all frames
        let kernel: Vec<Complex64> = spec
            .window
            .iter()
            .enumerate()
            .map(|(j, &w)| carrier(f, (j as isize - half) as f64) * w)
            .collect();
        for (t, o) in row.iter_mut().enumerate() {
            let start = t * spec.hop;
            let c = start as isize + half;
            let segment = &x[start..start + taps];
            *o = match spec.convention {
                PhaseConvention::Conv1 => segment.iter().zip(&kernel).map(|(s, k)| k * s).sum(),
                PhaseConvention::Conv2 => segment
                    .iter()
                    .zip(&spec.window)
                    .enumerate()
                    .map(|(j, (s, w))| carrier(f, (c + j as isize - half) as f64) * (w * s))
                    .sum(),
            };
        }
    });
    Ok(ComplexGrid::fully_defined(out))
}

fn magnitude_floor(grid: &ComplexGrid) -> f64 {
    let peak = grid.data.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
    MAGNITUDE_FLOOR * peak
}

/// Phase, masked below [`MAGNITUDE_FLOOR`] of the peak magnitude.
pub fn high_magnitude_phase(grid: &ComplexGrid) -> MaskedGrid {
    let floor = magnitude_floor(grid);
    argument_with_threshold(grid, floor * floor)
}

/// Unwrap along time, then the forward difference (rad/sample when hop is 1).
pub fn instantaneous_frequency(theta: &MaskedGrid) -> MaskedGrid {
    differentiate(&unwrap(theta, Axis::Time), Axis::Time)
}

/// Negated frequency difference of the phase unwrapped along frequency
/// (radians per bin step).
pub fn group_delay(theta: &MaskedGrid) -> MaskedGrid {
    let mut d = differentiate(&unwrap(theta, Axis::Frequency), Axis::Frequency);
    d.data.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
    d.finalize()
}

/// Largest `|p(a - b - offset)|` over elements defined in both grids.
fn max_wrapped_deviation(a: &MaskedGrid, b: &MaskedGrid, offset: impl Fn(usize, usize) -> f64) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut count = 0;
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            if a.is_defined(r, c) && b.is_defined(r, c) {
                let d = wrap(a.data[(r, c)] - b.data[(r, c)] - offset(r, c)).abs();
                worst = worst.max(d);
                count += 1;
            }
        }
    }
    (worst, count)
}

/// Maximum deviation found for one relation, and how many elements it covered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub max: f64,
    pub elements: usize,
}

impl Deviation {
    fn new((max, elements): (f64, usize)) -> Self {
        Deviation { max, elements }
    }
}

/// Deviations of the three phase relations between the two conventions.
/// All differences are compared modulo 2π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationReport {
    /// `∠X₁ − ∠X₂ − 2πf·c`.
    pub phase: Deviation,
    /// `IF₁ − IF₂ − 2πf·hop`.
    pub inst_freq: Deviation,
    /// `GD₁ − GD₂ + 2πc·Δf`, where `Δf` is the step to the previous bin.
    pub group_delay: Deviation,
}

/// Compute both conventions for `spec` and measure how far their phases,
/// instantaneous frequencies and group delays are from the expected offsets.
pub fn verify_relations(wave: &Waveform, spec: &StftSpec) -> Result<RelationReport> {
    let x1 = stft_direct(wave, &spec.with_convention(PhaseConvention::Conv1))?;
    let x2 = stft_direct(wave, &spec.with_convention(PhaseConvention::Conv2))?;
    let centers = spec.frame_centers(wave.len());
    let (t1, t2) = (high_magnitude_phase(&x1), high_magnitude_phase(&x2));
    let f = &spec.freqs;

    let phase = max_wrapped_deviation(&t1, &t2, |r, c| 2.0 * PI * f[r] * centers[c]);
    let hop = spec.hop as f64;
    let inst_freq = max_wrapped_deviation(&instantaneous_frequency(&t1), &instantaneous_frequency(&t2), |r, _| {
        2.0 * PI * f[r] * hop
    });
    let step = |r: usize| match (r, f.len()) {
        (_, 0 | 1) => 0.0,
        (0, _) => f[1] - f[0],
        _ => f[r] - f[r - 1],
    };
    let group_delay = max_wrapped_deviation(&group_delay(&t1), &group_delay(&t2), |r, c| {
        -2.0 * PI * centers[c] * step(r)
    });
    Ok(RelationReport {
        phase: Deviation::new(phase),
        inst_freq: Deviation::new(inst_freq),
        group_delay: Deviation::new(group_delay),
    })
}

/// Agreement between the frontend's filterbank and the direct sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendComparison {
    /// `max|analyze − STFT₁| / max|STFT₁|`.
    pub complex_rel_err: f64,
    /// Wrapped error of the rotated frontend phase against `∠STFT₂`.
    pub conv2_phase: Deviation,
}

/// The window spec equivalent to uniform frontend parameters.
pub fn spec_for_params(params: &FrontendParams, config: &FrontendConfig) -> Result<StftSpec> {
    let m = params.eta.len();
    if m == 0 || params.sigma_gabor.len() != m {
        return Err(Error::Precondition("empty or mismatched gabor parameters".into()));
    }
    let sigma = params.sigma_gabor[0];
    if params.sigma_gabor.iter().any(|&s| (s - sigma).abs() > 1e-12 * sigma) {
        return Err(Error::Precondition("oracle comparison needs a constant gabor width".into()));
    }
    if m > 1 {
        let d = params.eta[1] - params.eta[0];
        if d <= 0.0 || params.eta.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-12) {
            return Err(Error::Precondition("oracle comparison needs uniformly spaced centers".into()));
        }
    }
    StftSpec::gaussian(config.window_width, sigma, params.eta.clone(), 1, PhaseConvention::Conv1)
}

pub fn compare_to_frontend(wave: &Waveform, params: &FrontendParams, config: &FrontendConfig) -> Result<FrontendComparison> {
    let spec = spec_for_params(params, config)?;
    let ours = analyze(wave, &build_gabor(params, config)?)?;
    let x1 = stft_direct(wave, &spec)?;
    let peak = x1.data.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = ours.data.as_slice().iter().zip(x1.data.as_slice()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let complex_rel_err = if peak > 0.0 { diff / peak } else { diff };

    let x2 = stft_direct(wave, &spec.with_convention(PhaseConvention::Conv2))?;
    let theta2 = rotate_to_conv2(&argument(&ours, config), params, &spec.frame_centers(wave.len()))?;
    let conv2_phase = max_wrapped_deviation(&theta2, &high_magnitude_phase(&x2), |_, _| 0.0);
    Ok(FrontendComparison { complex_rel_err, conv2_phase: Deviation::new(conv2_phase) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000.0).unwrap()
    }

    fn uniform_spec(width: usize, sigma: f64, bins: usize) -> StftSpec {
        let freqs = (0..bins).map(|k| k as f64 / (2 * bins) as f64).collect();
        StftSpec::gaussian(width, sigma, freqs, 1, PhaseConvention::Conv1).unwrap()
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let w = Waveform::new(vec![0.0; 100], 1.0).unwrap();
        let x = stft_direct(&w, &uniform_spec(16, 4.0, 5)).unwrap();
        assert!(x.data.as_slice().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn conventions_share_magnitudes() {
        let w = noise(300, 1);
        let spec = uniform_spec(32, 6.0, 8);
        let a = stft_direct(&w, &spec).unwrap();
        let b = stft_direct(&w, &spec.with_convention(PhaseConvention::Conv2)).unwrap();
        for (p, q) in a.data.as_slice().iter().zip(b.data.as_slice()) {
            assert!((p.norm() - q.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn short_signal_rejected() {
        let w = Waveform::new(vec![1.0; 10], 1.0).unwrap();
        assert!(matches!(stft_direct(&w, &uniform_spec(16, 4.0, 2)), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn relations_hold_on_noise() {
        let r = verify_relations(&noise(400, 2), &uniform_spec(40, 8.0, 12)).unwrap();
        assert!(r.phase.max < 1e-9, "{r:?}");
        assert!(r.inst_freq.max < 1e-6, "{r:?}");
        assert!(r.group_delay.max < 1e-6, "{r:?}");
        assert!(r.phase.elements > 0 && r.group_delay.elements > 0);
    }

    #[test]
    fn impulse_phase_is_linear_in_frequency() {
        let t0 = 60usize;
        let mut x = vec![0.0; 128];
        x[t0] = 1.0;
        let spec = uniform_spec(40, 8.0, 16);
        let w = Waveform::new(x, 1.0).unwrap();
        let theta = high_magnitude_phase(&stft_direct(&w, &spec).unwrap());
        let gd = group_delay(&theta);
        let centers = spec.frame_centers(128);
        let df = spec.freqs[1] - spec.freqs[0];
        let mut checked = 0;
        for r in 0..gd.rows() {
            for c in 0..gd.cols() {
                if gd.is_defined(r, c) {
                    let expect = 2.0 * PI * (t0 as f64 - centers[c]) * df;
                    assert!(wrap(gd.data[(r, c)] - expect).abs() < 1e-9);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn tone_if_on_ridge() {
        let f0 = 1000.0 / 16000.0;
        let x = (0..1200).map(|n| (2.0 * PI * f0 * n as f64).cos()).collect();
        let w = Waveform::new(x, 16000.0).unwrap();
        // five standard deviations per side keeps the mirror image at -f0 negligible
        let spec = StftSpec::gaussian(600, 60.0, vec![f0], 1, PhaseConvention::Conv1).unwrap();
        let inst = instantaneous_frequency(&high_magnitude_phase(&stft_direct(&w, &spec).unwrap()));
        for c in 0..inst.cols() {
            assert!((inst.data[(0, c)] - 2.0 * PI * f0).abs() < 1e-6);
        }
    }

    #[test]
    fn energy_over_dense_filterbank_matches_windowed_energy() {
        // Bins k/K for 0 <= k <= K/2 with K >= window length; interior bins
        // stand for their negative-frequency mirrors too.
        let width = 64;
        let k_total = width + 2;
        let freqs: Vec<f64> = (0..=k_total / 2).map(|k| k as f64 / k_total as f64).collect();
        let spec = StftSpec::gaussian(width, 12.0, freqs.clone(), 1, PhaseConvention::Conv1).unwrap();
        let w = noise(400, 3);
        let x = stft_direct(&w, &spec).unwrap();
        for t in (0..x.data.cols()).step_by(37) {
            let total: f64 = (0..freqs.len())
                .map(|k| {
                    let weight = if k == 0 || k == k_total / 2 { 1.0 } else { 2.0 };
                    weight * x.data[(k, t)].norm_sqr()
                })
                .sum();
            let energy: f64 =
                spec.window.iter().enumerate().map(|(j, wv)| (w.samples()[t + j] * wv).powi(2)).sum();
            assert!((total / (k_total as f64 * energy) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn frontend_matches_oracle_on_uniform_bank() {
        let config = FrontendConfig { num_bins: 8, window_width: 64, lowpass_stride: 8, ..default_config() };
        let params = FrontendParams::uniform(8, 10.0);
        let cmp = compare_to_frontend(&noise(400, 4), &params, &config).unwrap();
        assert!(cmp.complex_rel_err < 1e-12, "{cmp:?}");
        assert!(cmp.conv2_phase.max < 1e-6, "{cmp:?}");
    }

    #[test]
    fn nonuniform_centers_refused() {
        let config = FrontendConfig { num_bins: 3, window_width: 16, lowpass_stride: 2, ..default_config() };
        let params = FrontendParams::with_gabor(vec![0.0, 0.1, 0.3], vec![3.0; 3]);
        assert!(matches!(compare_to_frontend(&noise(100, 5), &params, &config), Err(Error::Precondition(_))));
        let params = FrontendParams::with_gabor(vec![0.0, 0.1, 0.2], vec![3.0, 3.0, 4.0]);
        assert!(matches!(compare_to_frontend(&noise(100, 5), &params, &config), Err(Error::Precondition(_))));
    }
}
