//! Structural configuration, learnable parameters and their mel-like initialization.
//!
//! All frequencies are in cycles/sample; `sample_rate_hint` is metadata used
//! only to convert the mel band edges supplied in Hz.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One output feature of the front-end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    Pow,
    Phs1,
    Phs2,
    If1,
    If2,
    Gd1,
    Gd2,
}

impl Feature {
    pub const ALL: [Feature; 7] = [
        Feature::Pow,
        Feature::Phs1,
        Feature::Phs2,
        Feature::If1,
        Feature::If2,
        Feature::Gd1,
        Feature::Gd2,
    ];

    pub const PHASE: [Feature; 6] = [
        Feature::Phs1,
        Feature::Phs2,
        Feature::If1,
        Feature::If2,
        Feature::Gd1,
        Feature::Gd2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Pow => "pow",
            Feature::Phs1 => "phs1",
            Feature::Phs2 => "phs2",
            Feature::If1 => "if1",
            Feature::If2 => "if2",
            Feature::Gd1 => "gd1",
            Feature::Gd2 => "gd2",
        }
    }

    pub fn is_phase(self) -> bool {
        self != Feature::Pow
    }

    /// Whether the phase is rotated to the origin-anchored convention first.
    pub fn uses_conv2(self) -> bool {
        matches!(self, Feature::Phs2 | Feature::If2 | Feature::Gd2)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature `{s}`")))
    }
}

/// Ordered set of features. Iteration follows [`Feature::ALL`] order.
pub type FeatureSet = BTreeSet<Feature>;

/// Parse a comma-separated feature list. `all` and the empty string are accepted.
pub fn parse_feature_list(s: &str) -> Result<FeatureSet> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        return Ok(FeatureSet::new());
    }
    if s.eq_ignore_ascii_case("all") {
        return Ok(Feature::ALL.into_iter().collect());
    }
    s.split(',').map(str::parse).collect()
}

pub fn format_feature_list(set: &FeatureSet) -> String {
    set.iter().map(|f| f.name()).collect::<Vec<_>>().join(",")
}

/// Structural hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    /// Number of frequency bins M.
    pub num_bins: usize,
    /// Window width W; every filter has W+1 taps indexed -W/2..=W/2.
    pub window_width: usize,
    pub lowpass_stride: usize,
    pub sample_rate_hint: f64,
    pub selected_features: FeatureSet,
    /// Phase features multiplied elementwise by POW.
    pub pow_gate: FeatureSet,
    pub epsilon: f64,
    /// Squared magnitude at or below which the phase is undefined.
    pub zero_amp_threshold: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        default_config()
    }
}

pub fn default_config() -> FrontendConfig {
    FrontendConfig {
        num_bins: 40,
        window_width: 400,
        lowpass_stride: 100,
        sample_rate_hint: 16000.0,
        selected_features: Feature::ALL.into_iter().collect(),
        pow_gate: FeatureSet::new(),
        epsilon: 5e-8,
        zero_amp_threshold: 0.0,
    }
}

impl FrontendConfig {
    pub fn half_width(&self) -> usize {
        self.window_width / 2
    }

    pub fn taps(&self) -> usize {
        self.window_width + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_bins == 0 {
            return bad("num_bins must be at least 1".into());
        }
        if self.window_width < 2 || !self.window_width.is_multiple_of(2) {
            return bad(format!("window_width must be even and >= 2, got {}", self.window_width));
        }
        if self.lowpass_stride == 0 {
            return bad("lowpass_stride must be at least 1".into());
        }
        if !(self.sample_rate_hint.is_finite() && self.sample_rate_hint > 0.0) {
            return bad(format!("sample_rate_hint must be positive, got {}", self.sample_rate_hint));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.zero_amp_threshold.is_finite() && self.zero_amp_threshold >= 0.0) {
            return bad(format!(
                "zero_amp_threshold must be nonnegative, got {}",
                self.zero_amp_threshold
            ));
        }
        if self.pow_gate.contains(&Feature::Pow) {
            return bad("pow cannot gate itself".into());
        }
        Ok(())
    }

    /// Features that need the power path, either as output or as a gate.
    pub fn needs_pow(&self) -> bool {
        self.selected_features.contains(&Feature::Pow)
            || self.selected_features.iter().any(|f| self.pow_gate.contains(f))
    }

    pub fn is_gated(&self, feature: Feature) -> bool {
        feature.is_phase() && self.pow_gate.contains(&feature)
    }
}

/// Learnable parameters, one entry per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendParams {
    /// Gabor center frequencies in cycles/sample.
    pub eta: Vec<f64>,
    /// Gabor envelope width in samples.
    pub sigma_gabor: Vec<f64>,
    pub sigma_lowpass_pow: Vec<f64>,
    pub sigma_lowpass_phs: Vec<f64>,
    pub sigma_lowpass_if: Vec<f64>,
    pub sigma_lowpass_gd: Vec<f64>,
    pub spcen_alpha: Vec<f64>,
    pub spcen_delta: Vec<f64>,
    pub spcen_r: Vec<f64>,
    pub spcen_s: Vec<f64>,
}

/// Names of the parameter arrays, in serialization order.
pub const PARAM_NAMES: [&str; 10] = [
    "eta",
    "sigma_gabor",
    "sigma_lowpass_pow",
    "sigma_lowpass_phs",
    "sigma_lowpass_if",
    "sigma_lowpass_gd",
    "spcen_alpha",
    "spcen_delta",
    "spcen_r",
    "spcen_s",
];

pub const LOWPASS_SIGMA_INIT: f64 = 0.4;
pub const SPCEN_ALPHA_INIT: f64 = 0.96;
pub const SPCEN_DELTA_INIT: f64 = 2.0;
pub const SPCEN_R_INIT: f64 = 2.0;
pub const SPCEN_S_INIT: f64 = 0.04;
/// Default mel band for [`init_params_mel`], in Hz.
pub const MEL_FMIN: f64 = 60.0;
pub const MEL_FMAX: f64 = 7800.0;

const SIGMA_FLOOR: f64 = 1e-6;

impl FrontendParams {
    /// Parameters with the given centers and Gabor widths, every other array at its default.
    pub fn with_gabor(eta: Vec<f64>, sigma_gabor: Vec<f64>) -> Self {
        let m = eta.len();
        FrontendParams {
            eta,
            sigma_gabor,
            sigma_lowpass_pow: vec![LOWPASS_SIGMA_INIT; m],
            sigma_lowpass_phs: vec![LOWPASS_SIGMA_INIT; m],
            sigma_lowpass_if: vec![LOWPASS_SIGMA_INIT; m],
            sigma_lowpass_gd: vec![LOWPASS_SIGMA_INIT; m],
            spcen_alpha: vec![SPCEN_ALPHA_INIT; m],
            spcen_delta: vec![SPCEN_DELTA_INIT; m],
            spcen_r: vec![SPCEN_R_INIT; m],
            spcen_s: vec![SPCEN_S_INIT; m],
        }
    }

    /// Uniformly spaced centers `eta[m] = m / (2M)` with a constant Gabor width.
    ///
    /// With these parameters the Gabor filterbank is a Gaussian-window STFT.
    pub fn uniform(num_bins: usize, sigma: f64) -> Self {
        let eta = (0..num_bins).map(|m| m as f64 / (2 * num_bins) as f64).collect();
        Self::with_gabor(eta, vec![sigma; num_bins])
    }

    /// All-zero arrays, used as a gradient accumulator.
    pub fn zeros(num_bins: usize) -> Self {
        let z = vec![0.0; num_bins];
        FrontendParams {
            eta: z.clone(),
            sigma_gabor: z.clone(),
            sigma_lowpass_pow: z.clone(),
            sigma_lowpass_phs: z.clone(),
            sigma_lowpass_if: z.clone(),
            sigma_lowpass_gd: z.clone(),
            spcen_alpha: z.clone(),
            spcen_delta: z.clone(),
            spcen_r: z.clone(),
            spcen_s: z,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.eta.len()
    }

    /// Sum over all arrays of elementwise products.
    pub fn dot(&self, other: &FrontendParams) -> f64 {
        self.arrays()
            .iter()
            .zip(other.arrays())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    /// `self + step · direction`, elementwise.
    pub fn offset(&self, direction: &FrontendParams, step: f64) -> FrontendParams {
        let mut out = self.clone();
        for (o, d) in out.arrays_mut().into_iter().zip(direction.arrays()) {
            o.iter_mut().zip(d.iter()).for_each(|(v, dv)| *v += step * dv);
        }
        out
    }

    pub fn arrays(&self) -> [&Vec<f64>; 10] {
        [
            &self.eta,
            &self.sigma_gabor,
            &self.sigma_lowpass_pow,
            &self.sigma_lowpass_phs,
            &self.sigma_lowpass_if,
            &self.sigma_lowpass_gd,
            &self.spcen_alpha,
            &self.spcen_delta,
            &self.spcen_r,
            &self.spcen_s,
        ]
    }

    pub fn arrays_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.eta,
            &mut self.sigma_gabor,
            &mut self.sigma_lowpass_pow,
            &mut self.sigma_lowpass_phs,
            &mut self.sigma_lowpass_if,
            &mut self.sigma_lowpass_gd,
            &mut self.spcen_alpha,
            &mut self.spcen_delta,
            &mut self.spcen_r,
            &mut self.spcen_s,
        ]
    }

    pub fn validate(&self, config: &FrontendConfig) -> Result<()> {
        let m = config.num_bins;
        for (name, arr) in PARAM_NAMES.iter().zip(self.arrays()) {
            if arr.len() != m {
                return Err(Error::InvalidParam(format!(
                    "{name} has {} entries, expected {m}",
                    arr.len()
                )));
            }
            if let Some(i) = arr.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name}[{i}] is not finite")));
            }
        }
        let positive = [
            ("sigma_gabor", &self.sigma_gabor),
            ("sigma_lowpass_pow", &self.sigma_lowpass_pow),
            ("sigma_lowpass_phs", &self.sigma_lowpass_phs),
            ("sigma_lowpass_if", &self.sigma_lowpass_if),
            ("sigma_lowpass_gd", &self.sigma_lowpass_gd),
            ("spcen_delta", &self.spcen_delta),
            ("spcen_r", &self.spcen_r),
        ];
        for (name, arr) in positive {
            if let Some(i) = arr.iter().position(|&v| v <= 0.0) {
                return Err(Error::InvalidParam(format!("{name}[{i}] must be positive")));
            }
        }
        if let Some(i) = self.spcen_s.iter().position(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::InvalidParam(format!("spcen_s[{i}] must lie in (0, 1]")));
        }
        Ok(())
    }

    /// Project onto the admissible set after a caller-side update:
    /// eta into [0, 0.5], widths and sPCEN delta/r positive, s into (0, 1].
    pub fn clamp(&mut self) {
        for e in &mut self.eta {
            *e = e.clamp(0.0, 0.5);
        }
        for arr in [
            &mut self.sigma_gabor,
            &mut self.sigma_lowpass_pow,
            &mut self.sigma_lowpass_phs,
            &mut self.sigma_lowpass_if,
            &mut self.sigma_lowpass_gd,
            &mut self.spcen_delta,
            &mut self.spcen_r,
        ] {
            for v in arr.iter_mut() {
                *v = v.max(SIGMA_FLOOR);
            }
        }
        for s in &mut self.spcen_s {
            *s = s.clamp(SIGMA_FLOOR, 1.0);
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Gaussian width whose frequency-response FWHM equals `fwhm` cycles/sample.
///
/// The envelope exp(-n²/2σ²) has response ∝ exp(-2π²σ²f²), which falls to
/// one half at f = sqrt(ln 2 / 2) / (πσ).
pub fn sigma_for_fwhm(fwhm: f64) -> f64 {
    (2.0 * std::f64::consts::LN_2).sqrt() / (std::f64::consts::PI * fwhm)
}

/// Mel-like initialization: centers at the peaks of M triangular mel filters
/// spanning `[fmin, fmax]` Hz, widths matched to each triangle's FWHM.
pub fn init_params_mel(config: &FrontendConfig, fmin: f64, fmax: f64) -> Result<FrontendParams> {
    config.validate()?;
    let nyquist = config.sample_rate_hint / 2.0;
    if !(fmin.is_finite() && fmax.is_finite() && fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(Error::InvalidParam(format!(
            "mel band [{fmin}, {fmax}] Hz must satisfy 0 <= fmin < fmax <= {nyquist}"
        )));
    }
    let m = config.num_bins;
    let fs = config.sample_rate_hint;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let step = (hi - lo) / (m + 1) as f64;
    let edges: Vec<f64> = (0..m + 2).map(|i| mel_to_hz(lo + step * i as f64)).collect();

    let eta = (0..m).map(|i| edges[i + 1] / fs).collect();
    let sigma_gabor = (0..m)
        .map(|i| sigma_for_fwhm((edges[i + 2] - edges[i]) / 2.0 / fs))
        .collect();
    Ok(FrontendParams::with_gabor(eta, sigma_gabor))
}

/// Sort the center frequencies ascending. Other arrays keep their bin order.
pub fn reorder_centers(mut params: FrontendParams) -> FrontendParams {
    params.eta.sort_by(f64::total_cmp);
    params
}
