//! Power path: squared modulus, mask-aware Gaussian lowpass downsampling and sPCEN.
//!
//! The lowpass here is shared with every phase path.

use rayon::prelude::*;

use crate::config::{FrontendConfig, FrontendParams};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Grid, MaskedGrid};

/// Per-bin real lowpass filters of W+1 taps applied with a fixed stride.
#[derive(Debug, Clone, PartialEq)]
pub struct LowpassKernel {
    pub taps: Grid<f64>,
    pub stride: usize,
}

impl LowpassKernel {
    pub fn len(&self) -> usize {
        self.taps.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.cols() == 0
    }

    pub fn half_width(&self) -> usize {
        self.taps.cols() / 2
    }

    /// Output frame count for an input of `cols` frames.
    pub fn output_frames(&self, cols: usize) -> Option<usize> {
        (cols >= self.len()).then(|| (cols - self.len()) / self.stride + 1)
    }
}

/// Standard deviation in samples of the lowpass envelope for width factor `sigma`.
pub fn lowpass_std(sigma: f64, window_width: usize) -> f64 {
    0.5 * sigma * (window_width as f64 - 1.0)
}

pub fn build_lowpass(sigma: &[f64], config: &FrontendConfig) -> Result<LowpassKernel> {
    config.validate()?;
    if sigma.len() != config.num_bins {
        return Err(Error::InvalidParam(format!(
            "lowpass sigma has {} entries, expected {}",
            sigma.len(),
            config.num_bins
        )));
    }
    if let Some(i) = sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParam(format!("lowpass sigma[{i}] must be positive")));
    }
    let half = config.half_width() as isize;
    let mut taps = Grid::filled(config.num_bins, config.taps(), 0.0);
    for (m, &s) in sigma.iter().enumerate() {
        let std = lowpass_std(s, config.window_width);
        let row = taps.row_mut(m);
        for (t, n) in row.iter_mut().zip(-half..=half) {
            let n = n as f64;
            *t = (-n * n / (2.0 * std * std)).exp();
        }
        let norm: f64 = row.iter().sum();
        row.iter_mut().for_each(|t| *t /= norm);
    }
    Ok(LowpassKernel { taps, stride: config.lowpass_stride })
}

pub fn power(grid: &ComplexGrid) -> MaskedGrid {
    MaskedGrid { data: grid.data.map(|z| z.norm_sqr()), mask: grid.mask.clone() }
}

/// One run of undefined entries and how it is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Fill {
    /// Linear interpolation between defined neighbors `left` and `right`.
    Between { left: usize, right: usize },
    /// Hold the value at `source`.
    Hold { source: usize },
    /// No defined value anywhere in the row.
    Zero,
}

/// How each undefined entry of a row is filled; `None` for defined entries.
pub(crate) fn fill_plan(mask: &[bool]) -> Vec<Option<Fill>> {
    let first = mask.iter().position(|&m| m);
    let last = mask.iter().rposition(|&m| m);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => return vec![Some(Fill::Zero); mask.len()],
    };
    let mut plan = vec![None; mask.len()];
    let mut prev = first;
    for (k, p) in plan.iter_mut().enumerate() {
        if mask[k] {
            prev = k;
            continue;
        }
        *p = Some(if k < first {
            Fill::Hold { source: first }
        } else if k > last {
            Fill::Hold { source: last }
        } else {
            let right = k + mask[k..].iter().position(|&m| m).expect("interior gap has a right edge");
            Fill::Between { left: prev, right }
        });
    }
    plan
}

pub(crate) fn fill_weights(fill: Fill, k: usize) -> [(usize, f64); 2] {
    match fill {
        Fill::Between { left, right } => {
            let w = (k - left) as f64 / (right - left) as f64;
            [(left, 1.0 - w), (right, w)]
        }
        Fill::Hold { source } => [(source, 1.0), (source, 0.0)],
        Fill::Zero => [(k, 0.0), (k, 0.0)],
    }
}

/// Fill undefined entries along each row by linear interpolation between the
/// nearest defined neighbors, holding the edge value for leading and trailing
/// runs. A row with no defined entry becomes zeros. The mask is returned unchanged.
pub fn fill_undefined(grid: &MaskedGrid) -> MaskedGrid {
    let mut data = grid.data.clone();
    for r in 0..grid.rows() {
        let plan = fill_plan(grid.mask.row(r));
        let src = grid.data.row(r);
        let row = data.row_mut(r);
        for (k, fill) in plan.into_iter().enumerate() {
            if let Some(fill) = fill {
                row[k] = fill_weights(fill, k).iter().map(|&(i, w)| w * src[i]).sum();
            }
        }
    }
    MaskedGrid { data, mask: grid.mask.clone() }
}

/// Strided lowpass along time with W+1 taps and valid framing.
///
/// Output frame `j` is centered on input frame `j·stride + W/2` and is
/// undefined iff that center input is undefined.
pub fn lowpass_downsample(grid: &MaskedGrid, kernel: &LowpassKernel) -> Result<MaskedGrid> {
    if grid.rows() != kernel.taps.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} bins in grid, {} in lowpass kernel",
            grid.rows(),
            kernel.taps.rows()
        )));
    }
    let frames = kernel.output_frames(grid.cols()).ok_or(Error::SignalTooShort {
        len: grid.cols(),
        needed: kernel.len(),
    })?;
    let filled = fill_undefined(grid);
    let taps = kernel.len();
    let half = kernel.half_width();
    let stride = kernel.stride;
    let mut data = Grid::filled(grid.rows(), frames, 0.0);
    let cols = grid.cols();
    data.as_mut_slice()
        .par_chunks_mut(frames)
        .enumerate()
        .for_each(|(m, row)| {
            let filt = kernel.taps.row(m);
            let src = &filled.data.as_slice()[m * cols..(m + 1) * cols];
            for (j, o) in row.iter_mut().enumerate() {
                let start = j * stride;
                *o = filt.iter().zip(&src[start..start + taps]).map(|(a, b)| a * b).sum();
            }
        });
    let mask = Grid::from_fn(grid.rows(), frames, |m, j| {
        *grid.mask.get(m, j * stride + half)
    });
    Ok(MaskedGrid { data, mask })
}

/// Smoother state of the sPCEN recursion, initialized with the first frame.
pub(crate) fn spcen_smoother(row: &[f64], s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len());
    let mut state = row.first().copied().unwrap_or(0.0);
    for &f in row {
        state = (1.0 - s) * state + s * f;
        out.push(state);
    }
    out
}

/// Compression applied to one element given its smoother value.
pub(crate) fn spcen_value(f: f64, smooth: f64, alpha: f64, delta: f64, r: f64, eps: f64) -> f64 {
    (f / (eps + smooth).powf(alpha) + delta).powf(1.0 / r) - delta.powf(1.0 / r)
}

/// Smoothed per-channel energy normalization.
///
/// The smoother starts from the first frame, so a constant row maps to a constant row.
pub fn spcen(grid: &MaskedGrid, params: &FrontendParams, config: &FrontendConfig) -> Result<MaskedGrid> {
    let m = grid.rows();
    for (name, arr) in [
        ("spcen_alpha", &params.spcen_alpha),
        ("spcen_delta", &params.spcen_delta),
        ("spcen_r", &params.spcen_r),
        ("spcen_s", &params.spcen_s),
    ] {
        if arr.len() != m {
            return Err(Error::ShapeMismatch(format!("{name} has {} entries, grid has {m} bins", arr.len())));
        }
    }
    for bin in 0..m {
        if !(params.spcen_delta[bin] > 0.0 && params.spcen_r[bin] > 0.0) {
            return Err(Error::InvalidParam(format!("sPCEN delta and r must be positive at bin {bin}")));
        }
        let s = params.spcen_s[bin];
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidParam(format!("spcen_s[{bin}] must lie in (0, 1]")));
        }
        if let Some(frame) = grid.data.row(bin).iter().position(|&f| f < 0.0) {
            return Err(Error::NegativePower { bin, frame });
        }
    }
    let mut data = grid.data.clone();
    for bin in 0..m {
        let (alpha, delta, r) = (params.spcen_alpha[bin], params.spcen_delta[bin], params.spcen_r[bin]);
        let smooth = spcen_smoother(grid.data.row(bin), params.spcen_s[bin]);
        for (o, sm) in data.row_mut(bin).iter_mut().zip(smooth) {
            *o = spcen_value(*o, sm, alpha, delta, r, config.epsilon);
        }
    }
    Ok(MaskedGrid { data, mask: grid.mask.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use num_complex::Complex64;

    fn cfg(m: usize, w: usize, stride: usize) -> FrontendConfig {
        FrontendConfig { num_bins: m, window_width: w, lowpass_stride: stride, ..default_config() }
    }

    fn masked(rows: usize, values: Vec<f64>, mask: Vec<bool>) -> MaskedGrid {
        let cols = values.len() / rows;
        MaskedGrid::new(Grid::from_vec(rows, cols, values).unwrap(), Grid::from_vec(rows, cols, mask).unwrap())
            .unwrap()
    }

    #[test]
    fn lowpass_taps_sum_to_one() {
        let c = cfg(3, 400, 100);
        let k = build_lowpass(&[0.4, 0.01, 2.0], &c).unwrap();
        for m in 0..3 {
            let s: f64 = k.taps.row(m).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_lowpass_approaches_impulse() {
        let c = cfg(1, 400, 1);
        let k = build_lowpass(&[1e-3], &c).unwrap();
        assert!(k.taps[(0, 200)] > 0.999);
    }

    #[test]
    fn nonpositive_lowpass_sigma_rejected() {
        let c = cfg(2, 4, 1);
        assert!(build_lowpass(&[0.4, -0.1], &c).is_err());
    }

    #[test]
    fn power_values() {
        let z = Grid::from_vec(1, 3, vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, 2.1)])
            .unwrap();
        let p = power(&ComplexGrid::fully_defined(z));
        assert_eq!(p.data.row(0)[0], 25.0);
        assert_eq!(p.data.row(0)[1], 0.0);
        assert!((p.data.row(0)[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interior_gap_is_interpolated() {
        let g = masked(1, vec![1.0, 0.0, 3.0], vec![true, false, true]);
        let f = fill_undefined(&g);
        assert_eq!(f.data.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(f.mask, g.mask);
    }

    #[test]
    fn edge_runs_hold_and_empty_rows_zero() {
        let g = masked(2, vec![9.0, 9.0, 4.0, 6.0, 9.0, 5.0, 5.0, 5.0, 5.0, 5.0],
            vec![false, false, true, true, false, false, false, false, false, false]);
        let f = fill_undefined(&g);
        assert_eq!(f.data.row(0), &[4.0, 4.0, 4.0, 6.0, 6.0]);
        assert_eq!(f.data.row(1), &[0.0; 5]);
    }

    #[test]
    fn center_undefined_frames_stay_undefined() {
        let c = cfg(1, 2, 1);
        let k = build_lowpass(&[0.4], &c).unwrap();
        let g = masked(1, vec![1.0, 2.0, 0.0, 4.0, 5.0], vec![true, true, false, true, true]);
        let out = lowpass_downsample(&g, &k).unwrap();
        assert_eq!(out.mask.row(0), &[true, false, true]);
        // frame 0 sees the interpolated 3.0 at its right edge
        let t = k.taps.row(0);
        assert!((out.data.row(0)[0] - (t[0] * 1.0 + t[1] * 2.0 + t[2] * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn all_undefined_row_is_masked_zero() {
        let c = cfg(1, 2, 1);
        let k = build_lowpass(&[0.4], &c).unwrap();
        let g = masked(1, vec![7.0; 4], vec![false; 4]);
        let out = lowpass_downsample(&g, &k).unwrap();
        assert!(out.data.row(0).iter().all(|&v| v == 0.0));
        assert!(out.mask.row(0).iter().all(|&m| !m));
    }

    #[test]
    fn narrow_input_rejected() {
        let c = cfg(1, 4, 2);
        let k = build_lowpass(&[0.4], &c).unwrap();
        let g = MaskedGrid::fully_defined(Grid::filled(1, 4, 1.0));
        assert!(lowpass_downsample(&g, &k).is_err());
        let g = MaskedGrid::fully_defined(Grid::filled(1, 9, 1.0));
        assert_eq!(lowpass_downsample(&g, &k).unwrap().cols(), 3);
    }

    fn spcen_params(alpha: f64, delta: f64, r: f64, s: f64) -> FrontendParams {
        let mut p = FrontendParams::uniform(1, 1.0);
        p.spcen_alpha = vec![alpha];
        p.spcen_delta = vec![delta];
        p.spcen_r = vec![r];
        p.spcen_s = vec![s];
        p
    }

    #[test]
    fn spcen_zero_input_is_zero() {
        let c = default_config();
        let g = MaskedGrid::fully_defined(Grid::filled(1, 6, 0.0));
        let out = spcen(&g, &FrontendParams::uniform(1, 1.0), &c).unwrap();
        assert!(out.data.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spcen_closed_form_at_unit_input() {
        // (1/(1+5e-8)^0.96 + 2)^0.5 - 2^0.5, evaluated with 30-digit arithmetic
        let c = default_config();
        let g = MaskedGrid::fully_defined(Grid::filled(1, 3, 1.0));
        let out = spcen(&g, &spcen_params(0.96, 2.0, 2.0, 1.0), &c).unwrap();
        for &v in out.data.as_slice() {
            assert!((v - 0.317_837_231_339_376_4).abs() < 1e-12);
        }
    }

    #[test]
    fn spcen_degenerates_to_identity() {
        let c = default_config();
        let vals = vec![0.5, 2.0, 3.5, 0.1];
        let g = MaskedGrid::fully_defined(Grid::from_vec(1, 4, vals.clone()).unwrap());
        let out = spcen(&g, &spcen_params(0.0, 1e-300, 1.0, 0.3), &c).unwrap();
        for (o, v) in out.data.as_slice().iter().zip(vals) {
            assert!((o - v).abs() < 1e-12);
        }
    }

    #[test]
    fn spcen_constant_in_constant_out() {
        let c = default_config();
        let g = MaskedGrid::fully_defined(Grid::filled(2, 7, 3.25));
        let mut p = FrontendParams::uniform(2, 1.0);
        p.spcen_s = vec![0.04, 0.5];
        let out = spcen(&g, &p, &c).unwrap();
        for m in 0..2 {
            let row = out.data.row(m);
            assert!(row.iter().all(|&v| v == row[0]));
        }
    }

    #[test]
    fn spcen_rejects_negative_power() {
        let c = default_config();
        let g = MaskedGrid::fully_defined(Grid::from_vec(1, 3, vec![1.0, -0.5, 1.0]).unwrap());
        assert!(matches!(
            spcen(&g, &FrontendParams::uniform(1, 1.0), &c),
            Err(Error::NegativePower { bin: 0, frame: 1 })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lowpass_preserves_constants(sigma in 0.01f64..3.0, stride in 1usize..40, value in -50.0f64..50.0, half in 1usize..30) {
                let c = cfg(1, 2 * half, stride);
                let k = build_lowpass(&[sigma], &c).unwrap();
                let g = MaskedGrid::fully_defined(Grid::filled(1, 4 * half + 3 * stride + 1, value));
                let out = lowpass_downsample(&g, &k).unwrap();
                for &v in out.data.as_slice() {
                    prop_assert!((v - value).abs() <= 1e-10 * value.abs().max(1.0));
                }
            }

            #[test]
            fn spcen_finite_and_monotone_without_normalization(
                row in proptest::collection::vec(0.0f64..1e6, 2..30),
                bump in 0.0f64..10.0,
                idx in 0usize..30,
            ) {
                let c = default_config();
                let idx = idx % row.len();
                let g = MaskedGrid::fully_defined(Grid::from_vec(1, row.len(), row.clone()).unwrap());
                let out = spcen(&g, &FrontendParams::uniform(1, 1.0), &c).unwrap();
                prop_assert!(out.data.as_slice().iter().all(|v| v.is_finite()));

                let p = spcen_params(0.0, 2.0, 2.0, 0.04);
                let base = spcen(&g, &p, &c).unwrap();
                let mut bumped = row;
                bumped[idx] += bump;
                let g2 = MaskedGrid::fully_defined(Grid::from_vec(1, bumped.len(), bumped).unwrap());
                let more = spcen(&g2, &p, &c).unwrap();
                prop_assert!(more.data.row(0)[idx] >= base.data.row(0)[idx]);
            }
        }
    }
}
