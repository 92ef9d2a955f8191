//! Reverse pass over a retained forward [`Trace`].

use num_complex::Complex64;

use super::vjp::*;
use super::{Gradients, ParamGrads};
use crate::config::Feature;
use crate::error::{Error, Result};
use crate::grid::{Grid, MaskedGrid};
use crate::pipeline::{ChannelData, PathTrace, Trace};

fn add_into(acc: &mut Grid<f64>, other: &Grid<f64>) {
    acc.as_mut_slice().iter_mut().zip(other.as_slice()).for_each(|(a, b)| *a += b);
}

fn add_vec(acc: &mut [f64], other: &[f64]) {
    acc.iter_mut().zip(other).for_each(|(a, b)| *a += b);
}

fn masked(upstream: &Grid<f64>, mask: &crate::grid::Mask) -> Grid<f64> {
    let mut out = upstream.clone();
    for (v, &m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        if !m {
            *v = 0.0;
        }
    }
    out
}

impl Trace {
    /// Cotangents of [`FeatureBundle::readout`](crate::pipeline::FeatureBundle::readout):
    /// one on every defined element of every plane.
    pub fn readout_cotangents(&self) -> Vec<Grid<f64>> {
        self.bundle().planes().into_iter().map(|(_, _, m)| m.map(|&d| if d { 1.0 } else { 0.0 })).collect()
    }

    /// Backpropagate one cotangent per output plane (in [`FeatureBundle::planes`]
    /// order) to the parameters and the waveform.
    ///
    /// [`FeatureBundle::planes`]: crate::pipeline::FeatureBundle::planes
    pub fn backward(&self, cotangents: &[Grid<f64>]) -> Result<Gradients> {
        let bundle = self.bundle();
        let planes = bundle.planes();
        if cotangents.len() != planes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cotangents for {} output planes",
                cotangents.len(),
                planes.len()
            )));
        }
        for (c, (name, g, _)) in cotangents.iter().zip(&planes) {
            if c.shape() != g.shape() {
                return Err(Error::ShapeMismatch(format!("cotangent for `{name}` has the wrong shape")));
            }
        }

        let m = self.config.num_bins;
        let mut grads = ParamGrads::zeros(m);
        let (rows, cols) = self.tf.shape();
        let mut theta1_bar = Grid::filled(rows, cols, 0.0);
        let mut theta2_bar = Grid::filled(rows, cols, 0.0);
        let mut pow_bar = self.pow.as_ref().map(|p| Grid::filled(p.out.rows(), p.out.cols(), 0.0));

        let mut next = cotangents.iter();
        if let (true, Some(p)) = (self.config.selected_features.contains(&Feature::Pow), self.pow.as_ref()) {
            let c = next.next().expect("cotangent count checked");
            add_into(pow_bar.as_mut().expect("pow path exists"), &masked(c, &p.out.mask));
        }

        for path in &self.paths {
            let ups: Vec<&Grid<f64>> = match path.output {
                ChannelData::Plane(_) => vec![next.next().expect("cotangent count checked")],
                ChannelData::Phasor(_) => {
                    vec![next.next().expect("cotangent count checked"), next.next().expect("cotangent count checked")]
                }
            };
            let theta_bar = self.backward_path(path, &ups, pow_bar.as_mut(), &mut grads)?;
            if path.feature.uses_conv2() {
                add_into(&mut theta2_bar, &theta_bar);
            } else {
                add_into(&mut theta1_bar, &theta_bar);
            }
        }

        if let Some(theta2) = &self.theta2 {
            let (t1, eta_bar) = rotation_vjp(&theta2.mask, &self.centers, &theta2_bar)?;
            add_into(&mut theta1_bar, &t1);
            add_vec(&mut grads.eta, &eta_bar);
        }

        let mut tf_bar = Grid::filled(rows, cols, Complex64::new(0.0, 0.0));
        if let Some(theta1) = &self.theta1 {
            tf_bar = argument_vjp(&self.tf, &theta1.mask, &theta1_bar)?;
        }

        if let (Some(p), Some(pb)) = (&self.pow, pow_bar) {
            let sp = spcen_vjp(&p.down, &self.params, &self.config, &pb)?;
            add_vec(&mut grads.spcen_alpha, &sp.alpha);
            add_vec(&mut grads.spcen_delta, &sp.delta);
            add_vec(&mut grads.spcen_r, &sp.r);
            add_vec(&mut grads.spcen_s, &sp.s);
            let (power_bar, taps_bar) = lowpass_downsample_vjp(&p.power, &p.kernel, &sp.input)?;
            let sigma_bar = lowpass_synthesis_vjp(&self.params.sigma_lowpass_pow, &self.config, &taps_bar)?;
            add_vec(&mut grads.sigma_lowpass_pow, &sigma_bar);
            let z_bar = power_vjp(&self.tf, &masked(&power_bar, &p.power.mask))?;
            tf_bar.as_mut_slice().iter_mut().zip(z_bar.as_slice()).for_each(|(a, b)| *a += b);
        }

        let (wave_bar, taps_bar) = analyze_vjp(self.wave.samples(), &self.gabor, &tf_bar)?;
        let (eta_bar, sigma_bar) = gabor_synthesis_vjp(&self.params, &self.config, &taps_bar)?;
        add_vec(&mut grads.eta, &eta_bar);
        add_vec(&mut grads.sigma_gabor, &sigma_bar);

        Ok(Gradients { params: grads, wave: wave_bar })
    }

    /// Reverse one phase path down to the (possibly rotated) wrapped phase.
    fn backward_path(
        &self,
        path: &PathTrace,
        ups: &[&Grid<f64>],
        pow_bar: Option<&mut Grid<f64>>,
        grads: &mut ParamGrads,
    ) -> Result<Grid<f64>> {
        let gated = self.is_gated(path.feature);
        let out_mask = path.output.mask();
        let ups: Vec<Grid<f64>> = ups.iter().map(|u| masked(u, out_mask)).collect();

        // Undo gating, giving cotangents of the pre-gate channel values.
        let pre_ups: Vec<Grid<f64>> = if gated {
            let pow = &self.pow.as_ref().expect("gated paths have a pow path").out;
            let pow_bar = pow_bar.expect("gated paths have a pow path");
            let values: Vec<&Grid<f64>> = match &path.pre_gate {
                ChannelData::Plane(g) => vec![&g.data],
                ChannelData::Phasor(p) => vec![&p.re, &p.im],
            };
            let mut out = Vec::with_capacity(values.len());
            for (v, u) in values.into_iter().zip(&ups) {
                let (f_bar, p_bar) = pow_gate_vjp(v, &pow.data, out_mask, u)?;
                add_into(pow_bar, &p_bar);
                out.push(f_bar);
            }
            out
        } else {
            ups
        };

        let down_bar = match &path.pre_gate {
            ChannelData::Plane(_) => masked(&pre_ups[0], &path.down.mask),
            ChannelData::Phasor(_) => phasor_vjp(&path.down, &pre_ups[0], &pre_ups[1])?,
        };

        let (pre_bar, taps_bar) = lowpass_downsample_vjp(&path.pre_lowpass, &path.kernel, &down_bar)?;
        let (sigma, sigma_bar) = match path.feature {
            Feature::Phs1 | Feature::Phs2 => (&self.params.sigma_lowpass_phs, &mut grads.sigma_lowpass_phs),
            Feature::If1 | Feature::If2 => (&self.params.sigma_lowpass_if, &mut grads.sigma_lowpass_if),
            Feature::Gd1 | Feature::Gd2 => (&self.params.sigma_lowpass_gd, &mut grads.sigma_lowpass_gd),
            Feature::Pow => unreachable!("pow is not a phase path"),
        };
        add_vec(sigma_bar, &lowpass_synthesis_vjp(sigma, &self.config, &taps_bar)?);

        let theta: &MaskedGrid = if path.feature.uses_conv2() { self.theta2.as_ref() } else { self.theta1.as_ref() }
            .expect("phase exists for every path");
        let unwrapped_bar = match path.feature {
            Feature::Phs1 | Feature::Phs2 => pre_bar,
            _ => difference_vjp(&theta.mask, path.unwrap_axis, &masked(&pre_bar, &path.pre_lowpass.mask))?,
        };
        unwrap_vjp(&theta.mask, &unwrapped_bar)
    }
}
