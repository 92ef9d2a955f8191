//! 8-bit binary PGM heatmaps of container planes.

use std::path::{Path, PathBuf};

use crate::container::FeatureContainer;
use crate::error::{Error, Result};

/// Map defined values to 0..=255 by min-max scaling with floor rounding.
/// Constant planes become 128 and undefined elements 0.
pub fn to_pixels(values: &[f32], mask: &[bool]) -> Vec<u8> {
    let defined = values.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v as f64);
    let (lo, hi) = defined.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    values
        .iter()
        .zip(mask)
        .map(|(&v, &m)| match m {
            false => 0,
            true if hi <= lo => 128,
            true => ((v as f64 - lo) / (hi - lo) * 255.0).floor().clamp(0.0, 255.0) as u8,
        })
        .collect()
}

/// P5 image with bin 0 on the bottom row and frames left to right.
pub fn encode_pgm(values: &[f32], mask: &[bool], bins: usize, frames: usize) -> Vec<u8> {
    let pixels = to_pixels(values, mask);
    let mut out = format!("P5\n{frames} {bins}\n255\n").into_bytes();
    for bin in (0..bins).rev() {
        out.extend_from_slice(&pixels[bin * frames..(bin + 1) * frames]);
    }
    out
}

/// File name for plane `index`, with characters outside `[A-Za-z0-9._-]` replaced.
pub fn plane_file_name(index: usize, name: &str) -> String {
    let safe: String =
        name.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect();
    format!("{index:02}_{safe}.pgm")
}

/// Write one PGM per plane into `dir`, creating it if needed.
pub fn render_container(container: &FeatureContainer, dir: &Path) -> Result<Vec<PathBuf>> {
    if container.bins == 0 || container.frames == 0 {
        return Err(Error::Format("container has no frames to render".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(container.num_channels());
    for (i, name) in container.names.iter().enumerate() {
        let path = dir.join(plane_file_name(i, name));
        std::fs::write(
            &path,
            encode_pgm(&container.planes[i], &container.masks[i], container.bins, container.frames),
        )?;
        written.push(path);
    }
    Ok(written)
}
