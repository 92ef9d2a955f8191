//! Phase feature stages: argument, convention rotation, unwrapping,
//! differencing, phasor conversion and POW gating.
//!
//! Every stage propagates the validity mask. Nothing here turns an undefined
//! element into a defined one; only the interpolation inside
//! [`lowpass_downsample`](crate::amplitude::lowpass_downsample) fills values.

use std::f64::consts::PI;

use crate::config::{FrontendConfig, FrontendParams};
use crate::error::{Error, Result};
use crate::gabor::Waveform;
use crate::grid::{check_shapes, ComplexGrid, Grid, Mask, MaskedGrid};
use crate::pipeline::{self, FeatureBundle};

const TWO_PI: f64 = 2.0 * PI;

/// Which STFT phase a feature is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseConvention {
    /// Complex sinusoid anchored to the moving window.
    Conv1,
    /// Complex sinusoid anchored to the time origin.
    Conv2,
}

/// Axis of a bin-by-frame grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Time,
    Frequency,
}

/// Unit phasors as a two-channel real image.
///
/// Defined entries have unit modulus, undefined entries are `0 + 0i`.
/// POW gating scales the modulus and so lifts the unit-modulus property.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorGrid {
    pub re: Grid<f64>,
    pub im: Grid<f64>,
    pub mask: Mask,
}

impl PhasorGrid {
    pub fn shape(&self) -> (usize, usize) {
        self.re.shape()
    }
}

/// Principal value in (-π, π].
pub fn wrap(theta: f64) -> f64 {
    let w = theta - TWO_PI * ((theta - PI) / TWO_PI).ceil();
    // guard rounding at the lower edge
    if w <= -PI {
        w + TWO_PI
    } else {
        w
    }
}

/// Principal argument; undefined where `|z|² <= zero_amp_threshold`.
pub fn argument(grid: &ComplexGrid, config: &FrontendConfig) -> MaskedGrid {
    argument_with_threshold(grid, config.zero_amp_threshold)
}

pub fn argument_with_threshold(grid: &ComplexGrid, threshold: f64) -> MaskedGrid {
    let data = grid.data.map(|z| wrap(z.im.atan2(z.re)));
    let mut mask = grid.mask.clone();
    for (m, z) in mask.as_mut_slice().iter_mut().zip(grid.data.as_slice()) {
        if z.norm_sqr() <= threshold {
            *m = false;
        }
    }
    MaskedGrid { data, mask }.finalize()
}

/// Convert window-anchored phase to origin-anchored phase:
/// `θ₂ = p(θ₁ − 2π·η_m·c_t)` where `c_t` is the absolute sample index of frame `t`'s window center.
pub fn rotate_to_conv2(theta1: &MaskedGrid, params: &FrontendParams, frame_centers: &[f64]) -> Result<MaskedGrid> {
    let (rows, cols) = theta1.shape();
    if params.eta.len() != rows || frame_centers.len() != cols {
        return Err(Error::ShapeMismatch(format!(
            "rotation of a {rows}x{cols} grid with {} centers and {} frame offsets",
            params.eta.len(),
            frame_centers.len()
        )));
    }
    let mut out = theta1.clone();
    for m in 0..rows {
        let eta = params.eta[m];
        if eta == 0.0 {
            continue;
        }
        for (t, v) in out.data.row_mut(m).iter_mut().enumerate() {
            *v = wrap(*v - TWO_PI * eta * frame_centers[t]);
        }
    }
    Ok(out.finalize())
}

/// Flat indices of every line along `axis`.
pub(crate) fn lines(shape: (usize, usize), axis: Axis) -> Vec<Vec<usize>> {
    let (rows, cols) = shape;
    match axis {
        Axis::Time => (0..rows).map(|r| (0..cols).map(|c| r * cols + c).collect()).collect(),
        Axis::Frequency => (0..cols).map(|c| (0..rows).map(|r| r * cols + c).collect()).collect(),
    }
}

/// Integer 2π multiples added by unwrapping, plus the smallest distance of
/// any wrapped step from ±π (`f64::INFINITY` when there is no step).
pub(crate) fn unwrap_offsets(grid: &MaskedGrid, axis: Axis) -> (Vec<i64>, f64) {
    let data = grid.data.as_slice();
    let mask = grid.mask.as_slice();
    let mut offsets = vec![0i64; data.len()];
    let mut margin = f64::INFINITY;
    for line in lines(grid.shape(), axis) {
        let mut k_acc = 0i64;
        for w in 1..line.len() {
            let (prev, cur) = (line[w - 1], line[w]);
            if !mask[cur] {
                continue;
            }
            if !mask[prev] {
                k_acc = 0;
                continue;
            }
            let d = data[cur] - data[prev];
            let wd = wrap(d);
            margin = margin.min(PI - wd.abs());
            k_acc += ((wd - d) / TWO_PI).round() as i64;
            offsets[cur] = k_acc;
        }
    }
    (offsets, margin)
}

/// 1-D phase unwrapping along `axis`; each run restarts after an undefined gap.
pub fn unwrap(grid: &MaskedGrid, axis: Axis) -> MaskedGrid {
    let (offsets, _) = unwrap_offsets(grid, axis);
    let mut out = grid.clone();
    for ((v, &k), &m) in out.data.as_mut_slice().iter_mut().zip(&offsets).zip(grid.mask.as_slice()) {
        if m {
            *v += TWO_PI * k as f64;
        }
    }
    out.finalize()
}

/// Difference along `axis`: `out[k] = in[k] − in[k−1]` for `k ≥ 1`, and the
/// first element repeats the first difference. An output is undefined when
/// either operand is; a line of length one has no difference and is undefined.
pub fn differentiate(grid: &MaskedGrid, axis: Axis) -> MaskedGrid {
    let data = grid.data.as_slice();
    let mask = grid.mask.as_slice();
    let mut out = vec![0.0; data.len()];
    let mut out_mask = vec![false; data.len()];
    for line in lines(grid.shape(), axis) {
        for w in 0..line.len() {
            let Some((a, b)) = difference_operands(&line, w) else { continue };
            if mask[a] && mask[b] {
                out[line[w]] = data[b] - data[a];
                out_mask[line[w]] = true;
            }
        }
    }
    let (rows, cols) = grid.shape();
    MaskedGrid {
        data: Grid::from_vec(rows, cols, out).expect("shape preserved"),
        mask: Grid::from_vec(rows, cols, out_mask).expect("shape preserved"),
    }
}

/// Flat indices `(earlier, later)` whose difference lands at position `w` of `line`.
pub(crate) fn difference_operands(line: &[usize], w: usize) -> Option<(usize, usize)> {
    match (line.len(), w) {
        (0 | 1, _) => None,
        (_, 0) => Some((line[0], line[1])),
        _ => Some((line[w - 1], line[w])),
    }
}

pub fn phasor(grid: &MaskedGrid) -> PhasorGrid {
    let mut re = grid.data.clone();
    let mut im = grid.data.clone();
    for ((r, i), (&theta, &m)) in re
        .as_mut_slice()
        .iter_mut()
        .zip(im.as_mut_slice())
        .zip(grid.data.as_slice().iter().zip(grid.mask.as_slice()))
    {
        if m {
            let (s, c) = theta.sin_cos();
            *r = c;
            *i = s;
        } else {
            *r = 0.0;
            *i = 0.0;
        }
    }
    PhasorGrid { re, im, mask: grid.mask.clone() }
}

/// Elementwise multiplication of a phase feature by the compressed power.
pub trait PowGate: Sized {
    fn pow_gate(&self, pow: &MaskedGrid) -> Result<Self>;
}

fn gate_mask(mask: &Mask, pow: &MaskedGrid) -> Mask {
    let mut out = mask.clone();
    for (o, &p) in out.as_mut_slice().iter_mut().zip(pow.mask.as_slice()) {
        *o &= p;
    }
    out
}

fn gate_values(values: &Grid<f64>, mask: &Mask, pow: &Grid<f64>) -> Grid<f64> {
    let mut out = values.clone();
    for ((o, &p), &m) in out.as_mut_slice().iter_mut().zip(pow.as_slice()).zip(mask.as_slice()) {
        *o = if m { *o * p } else { 0.0 };
    }
    out
}

impl PowGate for MaskedGrid {
    fn pow_gate(&self, pow: &MaskedGrid) -> Result<Self> {
        check_shapes(self.shape(), pow.shape())?;
        let mask = gate_mask(&self.mask, pow);
        Ok(MaskedGrid { data: gate_values(&self.data, &mask, &pow.data), mask })
    }
}

impl PowGate for PhasorGrid {
    fn pow_gate(&self, pow: &MaskedGrid) -> Result<Self> {
        check_shapes(self.shape(), pow.shape())?;
        let mask = gate_mask(&self.mask, pow);
        Ok(PhasorGrid {
            re: gate_values(&self.re, &mask, &pow.data),
            im: gate_values(&self.im, &mask, &pow.data),
            mask,
        })
    }
}

pub fn pow_gate<G: PowGate>(feature: &G, pow: &MaskedGrid) -> Result<G> {
    feature.pow_gate(pow)
}

/// Run the full front-end on a waveform and collect the selected features.
pub fn extract_features(wave: &Waveform, params: &FrontendParams, config: &FrontendConfig) -> Result<FeatureBundle> {
    Ok(pipeline::forward(wave, params, config)?.into_bundle())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn row(values: &[f64]) -> MaskedGrid {
        MaskedGrid::fully_defined(Grid::from_vec(1, values.len(), values.to_vec()).unwrap())
    }

    fn with_mask(values: &[f64], mask: &[bool]) -> MaskedGrid {
        MaskedGrid::new(
            Grid::from_vec(1, values.len(), values.to_vec()).unwrap(),
            Grid::from_vec(1, mask.len(), mask.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn wrap_principal_value() {
        assert!((wrap(1.5 * PI) + 0.5 * PI).abs() < 1e-15);
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert_eq!(wrap(0.25), 0.25);
        assert!((wrap(7.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn argument_examples() {
        let z = Grid::from_vec(1, 4, vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, -0.0),
        ])
        .unwrap();
        let th = argument_with_threshold(&ComplexGrid::fully_defined(z), 0.0);
        assert_eq!(th.data.row(0)[0], 0.0);
        assert_eq!(th.data.row(0)[1], PI / 2.0);
        assert_eq!(th.mask.row(0), &[true, true, false, true]);
        assert_eq!(th.data.row(0)[2], 0.0);
        assert_eq!(th.data.row(0)[3], PI);
    }

    #[test]
    fn rotation_with_zero_center_is_identity() {
        let th = row(&[0.1, -2.0, 3.0]);
        let p = FrontendParams::with_gabor(vec![0.0], vec![1.0]);
        let out = rotate_to_conv2(&th, &p, &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(out, th);
    }

    #[test]
    fn rotation_flattens_tone_phase() {
        let eta = 0.07;
        let centers: Vec<f64> = (0..50).map(|t| (t + 10) as f64).collect();
        let th1 = row(&centers.iter().map(|c| wrap(TWO_PI * eta * c + 0.3)).collect::<Vec<_>>());
        let p = FrontendParams::with_gabor(vec![eta], vec![1.0]);
        let th2 = rotate_to_conv2(&th1, &p, &centers).unwrap();
        for v in th2.data.as_slice() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn unwrap_single_jump() {
        let out = unwrap(&row(&[3.0, -3.0]), Axis::Time);
        assert_eq!(out.data.row(0)[0], 3.0);
        assert!((out.data.row(0)[1] - (3.0 + (TWO_PI - 6.0))).abs() < 1e-12);
        assert!((out.data.row(0)[1] - 3.28319).abs() < 1e-5);
    }

    #[test]
    fn unwrap_leaves_smooth_sequence() {
        let x = [0.0, 1.0, 2.5, 1.0, -1.5];
        assert_eq!(unwrap(&row(&x), Axis::Time).data.row(0), &x);
    }

    #[test]
    fn unwrap_restarts_after_gap() {
        let g = with_mask(&[3.0, -3.0, 0.0, -3.0, 3.0], &[true, true, false, true, true]);
        let out = unwrap(&g, Axis::Time);
        assert_eq!(out.data.row(0)[3], -3.0);
        assert!((out.data.row(0)[4] - (-3.0 - (TWO_PI - 6.0))).abs() < 1e-12);
        assert_eq!(out.mask, g.mask);
    }

    #[test]
    fn unwrap_along_frequency() {
        let g = MaskedGrid::fully_defined(Grid::from_vec(2, 1, vec![3.0, -3.0]).unwrap());
        let out = unwrap(&g, Axis::Frequency);
        assert!((out.data.as_slice()[1] - 3.28319).abs() < 1e-5);
    }

    #[test]
    fn difference_of_ramp_is_slope() {
        let x: Vec<f64> = (0..6).map(|k| 0.4 * k as f64 - 1.0).collect();
        let d = differentiate(&row(&x), Axis::Time);
        assert!(d.data.as_slice().iter().all(|v| (v - 0.4).abs() < 1e-12));
        assert!(d.mask.as_slice().iter().all(|&m| m));
    }

    #[test]
    fn difference_masks_undefined_operands() {
        let g = with_mask(&[0.0, 1.0, 0.0, 3.0, 4.0], &[true, true, false, true, true]);
        let d = differentiate(&g, Axis::Time);
        assert_eq!(d.mask.row(0), &[true, true, false, false, true]);
        assert_eq!(d.data.row(0), &[1.0, 1.0, 0.0, 0.0, 1.0]);
        let single = differentiate(&row(&[2.0]), Axis::Time);
        assert_eq!(single.mask.row(0), &[false]);
    }

    #[test]
    fn complex_exponential_row_gives_exact_increment() {
        let inc = 0.9;
        let z: Vec<Complex64> = (0..40).map(|t| Complex64::from_polar(1.0, inc * t as f64)).collect();
        let g = ComplexGrid::fully_defined(Grid::from_vec(1, 40, z).unwrap());
        let d = differentiate(&unwrap(&argument_with_threshold(&g, 0.0), Axis::Time), Axis::Time);
        for v in d.data.as_slice() {
            assert!((v - inc).abs() < 1e-12);
        }
    }

    #[test]
    fn phasor_examples() {
        let g = with_mask(&[0.0, PI, 1.0], &[true, true, false]);
        let p = phasor(&g);
        assert_eq!((p.re.row(0)[0], p.im.row(0)[0]), (1.0, 0.0));
        assert_eq!(p.re.row(0)[1], -1.0);
        assert!(p.im.row(0)[1].abs() < 1e-15);
        assert_eq!((p.re.row(0)[2], p.im.row(0)[2]), (0.0, 0.0));
    }

    #[test]
    fn gating() {
        let f = row(&[0.5, -2.0, 3.0]);
        let ones = row(&[1.0; 3]);
        assert_eq!(pow_gate(&f, &ones).unwrap(), f);
        let zeros = row(&[0.0; 3]);
        assert!(pow_gate(&f, &zeros).unwrap().data.as_slice().iter().all(|&v| v == 0.0));

        let ph = phasor(&row(&[0.3, 2.0]));
        let p = row(&[0.25, 4.0]);
        let gated = pow_gate(&ph, &p).unwrap();
        for k in 0..2 {
            let modulus = gated.re.row(0)[k].hypot(gated.im.row(0)[k]);
            assert!((modulus - p.data.row(0)[k]).abs() < 1e-12);
        }
        let masked_pow = with_mask(&[1.0, 1.0], &[true, false]);
        let g2 = pow_gate(&ph, &masked_pow).unwrap();
        assert_eq!(g2.mask.row(0), &[true, false]);
        assert_eq!(g2.re.row(0)[1], 0.0);
        assert!(pow_gate(&f, &row(&[1.0; 2])).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn wrap_of_unwrap_is_wrap(x in proptest::collection::vec(-20.0f64..20.0, 1..40)) {
                let g = row(&x);
                let u = unwrap(&g, Axis::Time);
                for (a, b) in u.data.as_slice().iter().zip(&x) {
                    prop_assert!(wrap(wrap(*a) - wrap(*b)).abs() < 1e-9);
                }
            }

            #[test]
            fn unwrapped_difference_ignores_whole_row_offsets(
                x in proptest::collection::vec(-PI..PI, 2..30),
                k in -5i32..5,
            ) {
                let shifted: Vec<f64> = x.iter().map(|v| v + TWO_PI * k as f64).collect();
                let a = differentiate(&unwrap(&row(&x), Axis::Time), Axis::Time);
                let b = differentiate(&unwrap(&row(&shifted), Axis::Time), Axis::Time);
                for (u, v) in a.data.as_slice().iter().zip(b.data.as_slice()) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }

            #[test]
            fn phasor_unit_modulus(
                x in proptest::collection::vec(-50.0f64..50.0, 1..40),
                m in proptest::collection::vec(any::<bool>(), 40),
            ) {
                let g = with_mask(&x, &m[..x.len()]);
                let p = phasor(&g);
                for k in 0..x.len() {
                    let r2 = p.re.row(0)[k].powi(2) + p.im.row(0)[k].powi(2);
                    if m[k] {
                        prop_assert!((r2 - 1.0).abs() < 1e-9);
                    } else {
                        prop_assert_eq!(r2, 0.0);
                    }
                }
            }

            #[test]
            fn masks_never_grow(
                x in proptest::collection::vec(-5.0f64..5.0, 2..30),
                m in proptest::collection::vec(any::<bool>(), 30),
            ) {
                let g = with_mask(&x, &m[..x.len()]);
                for out in [unwrap(&g, Axis::Time), differentiate(&g, Axis::Time)] {
                    for (o, i) in out.mask.as_slice().iter().zip(g.mask.as_slice()) {
                        prop_assert!(!*o || *i);
                    }
                }
                let p = phasor(&g);
                prop_assert_eq!(&p.mask, &g.mask);
            }
        }
    }
}
