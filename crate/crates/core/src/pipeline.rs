//! End-to-end dataflow of the front-end and the feature bundle it produces.
//!
//! ```text
//! wave ─ gabor ─┬─ |·|² ─ lowpass ─ sPCEN ─────────────────────────── POW
//!               └─ arg ─┬──────────── unwrap(t) ─ lowpass ─ phasor ── PHS1
//!                       │             unwrap(t) ─ diff(t) ─ lowpass ─ IF1
//!                       │             unwrap(f) ─ diff(f) ─ lowpass ─ GD1
//!                       └─ rotate ─── (same three paths) ──────────── PHS2 / IF2 / GD2
//! ```
//!
//! [`forward`] keeps every intermediate so the reverse pass in
//! [`grad`](crate::grad) can reuse them.

use crate::amplitude::{build_lowpass, lowpass_downsample, power, spcen, LowpassKernel};
use crate::config::{Feature, FrontendConfig, FrontendParams};
use crate::error::{Error, Result};
use crate::gabor::{analyze, build_gabor, frame_centers, GaborKernel, Waveform};
use crate::grid::{ComplexGrid, Grid, Mask, MaskedGrid};
use crate::phase::{argument, differentiate, phasor, rotate_to_conv2, unwrap, unwrap_offsets, Axis, PhasorGrid, PowGate};

/// Values of one output channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelData {
    Plane(MaskedGrid),
    Phasor(PhasorGrid),
}

impl ChannelData {
    pub fn mask(&self) -> &Mask {
        match self {
            ChannelData::Plane(g) => &g.mask,
            ChannelData::Phasor(p) => &p.mask,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask().shape()
    }

    fn gate(&self, pow: &MaskedGrid) -> Result<ChannelData> {
        Ok(match self {
            ChannelData::Plane(g) => ChannelData::Plane(g.pow_gate(pow)?),
            ChannelData::Phasor(p) => ChannelData::Phasor(p.pow_gate(pow)?),
        })
    }
}

/// One named output of the front-end with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub feature: Feature,
    pub gated: bool,
    pub data: ChannelData,
}

impl Channel {
    /// `if2`, or `if2*pow` when gated.
    pub fn name(&self) -> String {
        if self.gated {
            format!("{}*pow", self.feature.name())
        } else {
            self.feature.name().to_string()
        }
    }

    /// Real planes of this channel; phasors contribute `.re` and `.im`.
    pub fn planes(&self) -> Vec<(String, &Grid<f64>, &Mask)> {
        match &self.data {
            ChannelData::Plane(g) => vec![(self.name(), &g.data, &g.mask)],
            ChannelData::Phasor(p) => vec![
                (format!("{}.re", self.name()), &p.re, &p.mask),
                (format!("{}.im", self.name()), &p.im, &p.mask),
            ],
        }
    }
}

/// Stack of output channels on one shared bin-by-frame shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub channels: Vec<Channel>,
    pub config: FrontendConfig,
    pub params: FrontendParams,
}

impl FeatureBundle {
    pub fn planes(&self) -> Vec<(String, &Grid<f64>, &Mask)> {
        self.channels.iter().flat_map(Channel::planes).collect()
    }

    pub fn num_planes(&self) -> usize {
        self.channels
            .iter()
            .map(|c| match c.data {
                ChannelData::Plane(_) => 1,
                ChannelData::Phasor(_) => 2,
            })
            .sum()
    }

    /// `(bins, frames)`, or `None` for an empty bundle.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.channels.first().map(|c| c.data.shape())
    }

    pub fn channel(&self, feature: Feature) -> Option<&Channel> {
        self.channels.iter().find(|c| c.feature == feature)
    }

    /// Sum of every defined element of every plane.
    pub fn readout(&self) -> f64 {
        self.planes()
            .iter()
            .map(|(_, g, m)| {
                g.as_slice().iter().zip(m.as_slice()).filter(|(_, &d)| d).map(|(v, _)| v).sum::<f64>()
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct PowTrace {
    pub power: MaskedGrid,
    pub kernel: LowpassKernel,
    /// Lowpassed power, the sPCEN input.
    pub down: MaskedGrid,
    pub out: MaskedGrid,
}

#[derive(Debug, Clone)]
pub struct PathTrace {
    pub feature: Feature,
    pub unwrap_axis: Axis,
    /// Smallest distance of a wrapped unwrap step from ±π.
    pub unwrap_margin: f64,
    pub unwrap_offsets: Vec<i64>,
    /// Lowpass input: unwrapped phase (PHS) or its difference (IF, GD).
    pub pre_lowpass: MaskedGrid,
    pub kernel: LowpassKernel,
    pub down: MaskedGrid,
    pub pre_gate: ChannelData,
    pub output: ChannelData,
}

/// Forward pass with every intermediate retained.
#[derive(Debug, Clone)]
pub struct Trace {
    pub config: FrontendConfig,
    pub params: FrontendParams,
    pub wave: Waveform,
    pub gabor: GaborKernel,
    pub tf: ComplexGrid,
    pub centers: Vec<f64>,
    pub theta1: Option<MaskedGrid>,
    pub theta2: Option<MaskedGrid>,
    pub pow: Option<PowTrace>,
    pub paths: Vec<PathTrace>,
}

fn lowpass_sigma(params: &FrontendParams, feature: Feature) -> &[f64] {
    match feature {
        Feature::Pow => &params.sigma_lowpass_pow,
        Feature::Phs1 | Feature::Phs2 => &params.sigma_lowpass_phs,
        Feature::If1 | Feature::If2 => &params.sigma_lowpass_if,
        Feature::Gd1 | Feature::Gd2 => &params.sigma_lowpass_gd,
    }
}

pub fn forward(wave: &Waveform, params: &FrontendParams, config: &FrontendConfig) -> Result<Trace> {
    config.validate()?;
    params.validate(config)?;
    let needed = 2 * config.window_width + 1;
    if wave.len() < needed {
        return Err(Error::SignalTooShort { len: wave.len(), needed });
    }
    let gabor = build_gabor(params, config)?;
    let tf = analyze(wave, &gabor)?;
    let centers = frame_centers(tf.data.cols(), config.half_width());

    let pow = if config.needs_pow() {
        let power = power(&tf);
        let kernel = build_lowpass(&params.sigma_lowpass_pow, config)?;
        let down = lowpass_downsample(&power, &kernel)?;
        let out = spcen(&down, params, config)?;
        Some(PowTrace { power, kernel, down, out })
    } else {
        None
    };

    let phase: Vec<Feature> = config.selected_features.iter().copied().filter(|f| f.is_phase()).collect();
    let theta1 = (!phase.is_empty()).then(|| argument(&tf, config));
    let theta2 = match (&theta1, phase.iter().any(|f| f.uses_conv2())) {
        (Some(t1), true) => Some(rotate_to_conv2(t1, params, &centers)?),
        _ => None,
    };

    let mut paths = Vec::with_capacity(phase.len());
    for feature in phase {
        let theta = if feature.uses_conv2() { theta2.as_ref() } else { theta1.as_ref() }
            .expect("phase computed for every selected phase feature");
        let axis = match feature {
            Feature::Gd1 | Feature::Gd2 => Axis::Frequency,
            _ => Axis::Time,
        };
        let (offsets, margin) = unwrap_offsets(theta, axis);
        let unwrapped = unwrap(theta, axis);
        let pre_lowpass = match feature {
            Feature::Phs1 | Feature::Phs2 => unwrapped,
            _ => differentiate(&unwrapped, axis),
        };
        let kernel = build_lowpass(lowpass_sigma(params, feature), config)?;
        let down = lowpass_downsample(&pre_lowpass, &kernel)?;
        let pre_gate = match feature {
            Feature::Phs1 | Feature::Phs2 => ChannelData::Phasor(phasor(&down)),
            _ => ChannelData::Plane(down.clone().finalize()),
        };
        let output = match (&pow, config.is_gated(feature)) {
            (Some(p), true) => pre_gate.gate(&p.out)?,
            _ => pre_gate.clone(),
        };
        paths.push(PathTrace {
            feature,
            unwrap_axis: axis,
            unwrap_margin: margin,
            unwrap_offsets: offsets,
            pre_lowpass,
            kernel,
            down,
            pre_gate,
            output,
        });
    }

    Ok(Trace {
        config: config.clone(),
        params: params.clone(),
        wave: wave.clone(),
        gabor,
        tf,
        centers,
        theta1,
        theta2,
        pow,
        paths,
    })
}

impl Trace {
    pub fn is_gated(&self, feature: Feature) -> bool {
        self.pow.is_some() && self.config.is_gated(feature)
    }

    /// Output channels in canonical order, undefined entries set to 0.
    pub fn channels(&self) -> Vec<Channel> {
        let mut out = Vec::new();
        if self.config.selected_features.contains(&Feature::Pow) {
            if let Some(p) = &self.pow {
                out.push(Channel {
                    feature: Feature::Pow,
                    gated: false,
                    data: ChannelData::Plane(p.out.clone().finalize()),
                });
            }
        }
        for path in &self.paths {
            let data = match &path.output {
                ChannelData::Plane(g) => ChannelData::Plane(g.clone().finalize()),
                ChannelData::Phasor(p) => ChannelData::Phasor(p.clone()),
            };
            out.push(Channel { feature: path.feature, gated: self.is_gated(path.feature), data });
        }
        out
    }

    pub fn bundle(&self) -> FeatureBundle {
        FeatureBundle { channels: self.channels(), config: self.config.clone(), params: self.params.clone() }
    }

    pub fn into_bundle(self) -> FeatureBundle {
        self.bundle()
    }
}
