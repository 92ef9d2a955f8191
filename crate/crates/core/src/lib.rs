//! Learnable audio front-end computing amplitude and phase features from a
//! Gabor filterbank, with hand-written reverse-mode gradients.
//!
//! ```no_run
//! use leafx::{default_config, extract_features, synth};
//!
//! let config = default_config();
//! let params = leafx::cli::default_params(&config)?;
//! let wave = synth::tone(16000, 16000.0, 1000.0 / 16000.0, 0.5, 0.0)?;
//! let bundle = extract_features(&wave, &params, &config)?;
//! assert_eq!(bundle.num_planes(), 9);
//! # Ok::<(), leafx::Error>(())
//! ```

pub mod amplitude;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod gabor;
pub mod grad;
pub mod grid;
pub mod oracle;
pub mod phase;
pub mod pipeline;
pub mod render;
pub mod synth;
pub mod textio;
pub mod wav;

pub use config::{default_config, Feature, FeatureSet, FrontendConfig, FrontendParams};
pub use container::FeatureContainer;
pub use error::{Error, Result};
pub use gabor::Waveform;
pub use grid::{ComplexGrid, Grid, Mask, MaskedGrid};
pub use phase::extract_features;
pub use pipeline::{forward, Channel, ChannelData, FeatureBundle, Trace};
