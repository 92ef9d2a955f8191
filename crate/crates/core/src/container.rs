//! The `LFX1` binary feature container.
//!
//! Little-endian layout:
//!
//! | field | type |
//! |---|---|
//! | magic | `b"LFX1"` |
//! | version | `u16`, currently 1 |
//! | channel count C, bins M, frames L | `u32` each |
//! | C names | `u32` byte length, then UTF-8 |
//! | payload | `C·M·L` × `f32`, `[channel][bin][frame]` |
//! | masks | per channel `ceil(M·L/8)` bytes; element `bin·L + frame` is bit `i % 8` of byte `i / 8`, 1 = defined |

use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::FeatureBundle;

pub const MAGIC: &[u8; 4] = b"LFX1";
pub const VERSION: u16 = 1;

/// Planes in storage precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureContainer {
    pub bins: usize,
    pub frames: usize,
    pub names: Vec<String>,
    /// One `bins·frames` row-major plane per name.
    pub planes: Vec<Vec<f32>>,
    pub masks: Vec<Vec<bool>>,
}

impl FeatureContainer {
    pub fn from_bundle(bundle: &FeatureBundle) -> Self {
        let (bins, frames) = bundle.shape().unwrap_or((0, 0));
        let mut c = FeatureContainer { bins, frames, names: Vec::new(), planes: Vec::new(), masks: Vec::new() };
        for (name, data, mask) in bundle.planes() {
            c.names.push(name);
            c.planes.push(
                data.as_slice().iter().zip(mask.as_slice()).map(|(&v, &m)| if m { v as f32 } else { 0.0 }).collect(),
            );
            c.masks.push(mask.as_slice().to_vec());
        }
        c
    }

    pub fn num_channels(&self) -> usize {
        self.names.len()
    }

    pub fn plane(&self, name: &str) -> Option<(&[f32], &[bool])> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((&self.planes[i], &self.masks[i]))
    }

    fn validate(&self) -> Result<()> {
        let n = self.bins * self.frames;
        if self.planes.len() != self.names.len() || self.masks.len() != self.names.len() {
            return Err(Error::ShapeMismatch("names, planes and masks differ in count".into()));
        }
        if self.planes.iter().any(|p| p.len() != n) || self.masks.iter().any(|m| m.len() != n) {
            return Err(Error::ShapeMismatch(format!("every plane must hold {} x {} values", self.bins, self.frames)));
        }
        for v in [self.names.len(), self.bins, self.frames] {
            u32::try_from(v).map_err(|_| Error::ShapeMismatch(format!("dimension {v} exceeds u32")))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let n = self.bins * self.frames;
        let mask_len = n.div_ceil(8);
        let mut out = Vec::with_capacity(18 + self.names.len() * (4 * n + mask_len + 8));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.names.len(), self.bins, self.frames] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for name in &self.names {
            let len = u32::try_from(name.len()).map_err(|_| Error::ShapeMismatch("channel name too long".into()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for plane in &self.planes {
            for v in plane {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for mask in &self.masks {
            let mut bytes = vec![0u8; mask_len];
            for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                bytes[i / 8] |= 1 << (i % 8);
            }
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not an LFX1 container".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("two bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let channels = r.u32()? as usize;
        let bins = r.u32()? as usize;
        let frames = r.u32()? as usize;
        let n = bins
            .checked_mul(frames)
            .ok_or_else(|| Error::Format("container dimensions overflow".into()))?;

        let mut names = Vec::with_capacity(channels.min(1024));
        for _ in 0..channels {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("channel name is not UTF-8".into()))?;
            names.push(name.to_string());
        }
        let mut planes = Vec::with_capacity(names.len());
        for _ in 0..channels {
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("payload size overflows".into()))?)?;
            planes.push(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("four bytes"))).collect());
        }
        let mut masks = Vec::with_capacity(names.len());
        for _ in 0..channels {
            let raw = r.take(n.div_ceil(8))?;
            masks.push((0..n).map(|i| raw[i / 8] >> (i % 8) & 1 == 1).collect());
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after container", bytes.len() - r.pos)));
        }
        Ok(FeatureContainer { bins, frames, names, planes, masks })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("container is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}
