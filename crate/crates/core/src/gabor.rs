//! Complex Gabor filterbank and its stride-1 application to a waveform.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{FrontendConfig, FrontendParams};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Grid};

/// Mono signal. The sample rate is carried as metadata only.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::SignalTooShort { len: 0, needed: 1 });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("sample {i} is not finite")));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `M × (W+1)` complex taps; column `j` holds tap `n = j - W/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborKernel {
    pub taps: Grid<Complex64>,
}

impl GaborKernel {
    pub fn num_bins(&self) -> usize {
        self.taps.rows()
    }

    pub fn len(&self) -> usize {
        self.taps.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.cols() == 0
    }

    pub fn half_width(&self) -> usize {
        self.taps.cols() / 2
    }
}

/// Unnormalized Gaussian envelope exp(-n²/2σ²) over n = -W/2..=W/2.
pub(crate) fn gaussian_envelope(sigma: f64, half: usize) -> Vec<f64> {
    let h = half as isize;
    (-h..=h)
        .map(|n| {
            let n = n as f64;
            (-n * n / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Synthesize the l1-normalized Gabor filters.
///
/// The normalizer is the exact finite sum of the envelope, not the
/// closed-form Gaussian integral, since the filter is truncated to W+1 taps.
pub fn build_gabor(params: &FrontendParams, config: &FrontendConfig) -> Result<GaborKernel> {
    config.validate()?;
    if params.eta.len() != config.num_bins || params.sigma_gabor.len() != config.num_bins {
        return Err(Error::InvalidParam(format!(
            "gabor parameters must have {} entries",
            config.num_bins
        )));
    }
    if let Some(i) = params.sigma_gabor.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParam(format!("sigma_gabor[{i}] must be positive")));
    }
    let half = config.half_width();
    let taps_per_bin = config.taps();
    let mut taps = Grid::filled(config.num_bins, taps_per_bin, Complex64::new(0.0, 0.0));
    for m in 0..config.num_bins {
        let env = gaussian_envelope(params.sigma_gabor[m], half);
        let norm: f64 = env.iter().sum();
        let eta = params.eta[m];
        for (j, (t, a)) in taps.row_mut(m).iter_mut().zip(&env).enumerate() {
            let n = j as f64 - half as f64;
            *t = Complex64::from_polar(a / norm, 2.0 * PI * eta * n);
        }
    }
    Ok(GaborKernel { taps })
}

/// Absolute sample index of the window center of each stride-1 frame.
pub fn frame_centers(num_frames: usize, half_width: usize) -> Vec<f64> {
    (0..num_frames).map(|k| (k + half_width) as f64).collect()
}

/// Number of valid frames for a signal of `len` samples.
pub fn num_valid_frames(len: usize, taps: usize) -> Option<usize> {
    (len >= taps).then(|| len - taps + 1)
}

/// Convolve every filter with the signal, keeping only frames whose window
/// lies fully inside it. Frame `k` is centered on sample `k + W/2`:
///
/// `out[m][k] = Σ_n taps[m][n] · x[k + W/2 - n]`
///
/// With a symmetric envelope this equals the window-anchored STFT at η_m.
pub fn analyze(wave: &Waveform, kernel: &GaborKernel) -> Result<ComplexGrid> {
    let x = wave.samples();
    let taps = kernel.len();
    let frames = num_valid_frames(x.len(), taps)
        .ok_or(Error::SignalTooShort { len: x.len(), needed: taps })?;
    let mut out = Grid::filled(kernel.num_bins(), frames, Complex64::new(0.0, 0.0));
    let last = taps - 1;
    out.as_mut_slice()
        .par_chunks_mut(frames)
        .enumerate()
        .for_each(|(m, row)| {
            let filt = kernel.taps.row(m);
            for (k, o) in row.iter_mut().enumerate() {
                // x[k + W/2 - n] for n = j - W/2 is x[k + W - j]
                let window = &x[k..k + taps];
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, t) in filt.iter().enumerate() {
                    acc += t * window[last - j];
                }
                *o = acc;
            }
        });
    Ok(ComplexGrid::fully_defined(out))
}
