//! Seeded test signals and parameter draws.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::FrontendParams;
use crate::error::Result;
use crate::gabor::Waveform;

/// The generator behind every seeded draw in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform white noise in [-1, 1).
pub fn white_noise(len: usize, sample_rate: f64, rng: &mut impl Rng) -> Result<Waveform> {
    Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), sample_rate)
}

/// `amplitude·cos(2πf·n + phase)` with `f` in cycles/sample.
pub fn tone(len: usize, sample_rate: f64, freq: f64, amplitude: f64, phase: f64) -> Result<Waveform> {
    Waveform::new(
        (0..len).map(|n| amplitude * (2.0 * PI * freq * n as f64 + phase).cos()).collect(),
        sample_rate,
    )
}

/// Linear chirp sweeping from `f0` to `f1` cycles/sample.
pub fn chirp(len: usize, sample_rate: f64, f0: f64, f1: f64) -> Result<Waveform> {
    let rate = (f1 - f0) / len.max(1) as f64;
    Waveform::new(
        (0..len)
            .map(|n| {
                let n = n as f64;
                (2.0 * PI * (f0 * n + 0.5 * rate * n * n)).cos()
            })
            .collect(),
        sample_rate,
    )
}

/// Unit impulse at sample `t0`.
pub fn impulse(len: usize, sample_rate: f64, t0: usize) -> Result<Waveform> {
    let mut x = vec![0.0; len];
    if let Some(v) = x.get_mut(t0) {
        *v = 1.0;
    }
    Waveform::new(x, sample_rate)
}

/// White noise with samples in `gap` set to exactly zero.
pub fn noise_with_gap(len: usize, sample_rate: f64, gap: std::ops::Range<usize>, rng: &mut impl Rng) -> Result<Waveform> {
    let mut x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for v in &mut x[gap.start.min(len)..gap.end.min(len)] {
        *v = 0.0;
    }
    Waveform::new(x, sample_rate)
}

/// Random parameters away from every constraint boundary, for a filterbank
/// of `num_bins` bins and `window_width + 1` taps. Centers are sorted.
pub fn random_params(num_bins: usize, window_width: usize, rng: &mut impl Rng) -> FrontendParams {
    let w = window_width as f64;
    let mut eta: Vec<f64> = (0..num_bins).map(|_| rng.gen_range(0.03..0.47)).collect();
    eta.sort_by(f64::total_cmp);
    let sigma_gabor = (0..num_bins).map(|_| rng.gen_range(w / 8.0..w / 3.0)).collect();
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..num_bins).map(|_| rng.gen_range(lo..hi)).collect() };
    FrontendParams {
        eta,
        sigma_gabor,
        sigma_lowpass_pow: draw(0.2, 0.6),
        sigma_lowpass_phs: draw(0.2, 0.6),
        sigma_lowpass_if: draw(0.2, 0.6),
        sigma_lowpass_gd: draw(0.2, 0.6),
        spcen_alpha: draw(0.5, 0.99),
        spcen_delta: draw(1.0, 3.0),
        spcen_r: draw(1.5, 3.0),
        spcen_s: draw(0.05, 0.5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_draws_repeat() {
        let a = white_noise(16, 1.0, &mut rng(3)).unwrap();
        let b = white_noise(16, 1.0, &mut rng(3)).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn gap_is_exactly_silent() {
        let w = noise_with_gap(100, 1.0, 40..60, &mut rng(1)).unwrap();
        assert!(w.samples()[40..60].iter().all(|&v| v == 0.0));
        assert!(w.samples()[..40].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn random_params_validate() {
        let config = crate::config::FrontendConfig {
            num_bins: 5,
            window_width: 24,
            lowpass_stride: 4,
            ..crate::config::default_config()
        };
        let p = random_params(5, 24, &mut rng(9));
        p.validate(&config).unwrap();
        assert!(p.eta.windows(2).all(|w| w[0] <= w[1]));
    }
}
