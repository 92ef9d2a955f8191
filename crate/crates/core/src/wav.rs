//! WAV ingestion: 16-bit PCM and 32-bit float, any channel count.

use std::io::Read;
use std::path::Path;

use hound::{SampleFormat, WavReader};

use crate::error::{Error, Result};
use crate::gabor::Waveform;

fn map_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Format("truncated WAV data".into())
        }
        hound::Error::IoError(io) => Error::Io(io),
        hound::Error::Unsupported => Error::UnsupportedFormat("codec not supported".into()),
        hound::Error::FormatError(msg) => Error::Format(format!("bad WAV: {msg}")),
        other => Error::Format(format!("bad WAV: {other}")),
    }
}

/// Errors while reading sample data: a short read means the data chunk is truncated.
fn map_sample_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Format(format!("truncated WAV data: {io}")),
        other => map_err(other),
    }
}

fn downmix(interleaved: Vec<f64>, channels: usize) -> Vec<f64> {
    if channels == 1 {
        return interleaved;
    }
    interleaved.chunks_exact(channels).map(|frame| frame.iter().sum::<f64>() / channels as f64).collect()
}

/// Decode a WAV stream. Channels are averaged and 16-bit samples scaled by 1/32768.
pub fn decode_wav(reader: impl Read) -> Result<Waveform> {
    let mut reader = WavReader::new(reader).map_err(map_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_sample_err)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_sample_err)?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat(format!("{bits}-bit {format:?} samples")));
        }
    };
    if !samples.len().is_multiple_of(channels) {
        return Err(Error::Format("truncated WAV data".into()));
    }
    if samples.is_empty() {
        return Err(Error::Format("WAV file contains no audio".into()));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("non-finite sample at index {i}")));
    }
    Waveform::new(downmix(samples, channels), spec.sample_rate as f64)
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    decode_wav(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Encode mono 16-bit PCM, clipping to [-1, 1).
pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut w = hound::WavWriter::create(path, spec).map_err(map_err)?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(map_err)?;
    }
    w.finalize().map_err(map_err)
}
