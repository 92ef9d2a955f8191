//! The `leafx` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{default_config, init_params_mel, parse_feature_list, FrontendConfig, FrontendParams, MEL_FMAX, MEL_FMIN};
use crate::container::FeatureContainer;
use crate::error::{Error, Result};
use crate::gabor::Waveform;
use crate::grad::{check_stages, seeded_grad_check, Stage};
use crate::oracle::{compare_to_frontend, spec_for_params, verify_relations};
use crate::phase::extract_features;
use crate::render::render_container;
use crate::textio::{format_config, format_params, read_config, read_params};
use crate::{synth, wav};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

/// Finite-difference draws tried before `gradcheck` gives up on finding a smooth point.
const GRADCHECK_DRAWS: usize = 200;
const STAGE_TRIALS: usize = 3;

pub const ORACLE_COMPLEX_TOL: f64 = 1e-5;
pub const ORACLE_PHASE_TOL: f64 = 1e-6;
pub const RELATION_PHASE_TOL: f64 = 1e-9;
pub const RELATION_DERIVATIVE_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "leafx", version, about = "Learnable amplitude and phase audio features")]
struct Cli {
    /// Worker threads for the filterbank (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Setup {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter file; defaults to the mel initialization.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Comma-separated features, overriding the configuration.
    #[arg(long)]
    features: Option<String>,
    /// Multiply phase features by POW; without a value every selected phase feature is gated.
    #[arg(long, num_args = 0..=1, default_missing_value = "all", value_name = "LIST")]
    pow_gate: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract features from a WAV file into an LFX1 container.
    Features {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        setup: Setup,
    },
    /// Render every plane of a container as a PGM heatmap.
    Render {
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every VJP and the full reverse pass against finite differences.
    Gradcheck {
        #[command(flatten)]
        setup: Setup,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale one stage's VJP by 1.01 (harness self-test).
        #[arg(long, hide = true)]
        corrupt_vjp: Option<String>,
    },
    /// Compare the filterbank with direct STFT sums on seeded noise.
    OracleCompare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Signal length in samples; defaults to one second at the configured rate.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Write the default configuration and mel-initialized parameters.
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
}

/// Exit status for an error class.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::NonSmooth(_) => EXIT_TOLERANCE,
        _ => EXIT_FORMAT,
    }
}

fn load_config(path: Option<&Path>) -> Result<FrontendConfig> {
    path.map_or_else(|| Ok(default_config()), read_config)
}

fn resolve(setup: &Setup, sample_rate: Option<f64>) -> Result<(FrontendConfig, FrontendParams)> {
    let mut config = load_config(setup.config.as_deref())?;
    if let Some(sr) = sample_rate {
        config.sample_rate_hint = sr;
    }
    if let Some(list) = &setup.features {
        config.selected_features = parse_feature_list(list)?;
    }
    if let Some(list) = &setup.pow_gate {
        config.pow_gate = parse_feature_list(list)?.into_iter().filter(|f| f.is_phase()).collect();
    }
    config.validate()?;
    let params = match &setup.params {
        Some(p) => read_params(p)?,
        None => default_params(&config)?,
    };
    params.validate(&config)?;
    Ok((config, params))
}

/// Mel initialization over the default band, capped at the Nyquist frequency.
pub fn default_params(config: &FrontendConfig) -> Result<FrontendParams> {
    init_params_mel(config, MEL_FMIN, MEL_FMAX.min(config.sample_rate_hint / 2.0))
}

fn cmd_features(input: &Path, out: &Path, setup: &Setup) -> Result<String> {
    let wave = wav::read_wav(input)?;
    let (config, params) = resolve(setup, Some(wave.sample_rate()))?;
    if config.selected_features.is_empty() {
        return Err(Error::InvalidConfig("no features selected".into()));
    }
    let bundle = extract_features(&wave, &params, &config)?;
    let container = FeatureContainer::from_bundle(&bundle);
    container.write(out)?;
    Ok(format!(
        "wrote {} channels of {} bins x {} frames to {}\n",
        container.num_channels(),
        container.bins,
        container.frames,
        out.display()
    ))
}

fn cmd_render(input: &Path, out: &Path) -> Result<String> {
    let container = FeatureContainer::read(input)?;
    let files = render_container(&container, out)?;
    let mut s = String::new();
    for f in files {
        let _ = writeln!(s, "{}", f.display());
    }
    Ok(s)
}

fn status(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

/// Text report of the gradient checks and whether all of them passed.
pub fn gradcheck_report(config: &FrontendConfig, seed: u64, corrupt: Option<Stage>) -> Result<(String, bool)> {
    let mut s = String::new();
    let mut all_ok = true;
    let _ = writeln!(s, "{:<22}{:>14}{:>12}  status", "stage", "rel_err", "tolerance");
    let mut rng = synth::rng(seed);
    for c in check_stages(&mut rng, STAGE_TRIALS, corrupt)? {
        all_ok &= c.passed();
        let _ = writeln!(s, "{:<22}{:>14.3e}{:>12.0e}  {}", c.stage.name(), c.rel_err, c.tolerance, status(c.passed()));
    }
    let run = seeded_grad_check(config, seed, GRADCHECK_DRAWS)?;
    let _ = writeln!(
        s,
        "pipeline: {} bins, {} taps, stride {}, h = {:e}, {} non-smooth draws rejected",
        run.config.num_bins,
        run.config.taps(),
        run.config.lowpass_stride,
        run.report.step,
        run.rejected
    );
    let _ = writeln!(s, "{:<22}{:>16}{:>16}{:>14}  status", "direction", "analytic", "numeric", "rel_err");
    for e in &run.report.entries {
        let ok = e.rel_err < run.report.tolerance;
        let _ = writeln!(
            s,
            "{:<22}{:>16.8e}{:>16.8e}{:>14.3e}  {}",
            e.name,
            e.analytic,
            e.numeric,
            e.rel_err,
            status(ok)
        );
    }
    all_ok &= run.report.passed();
    let _ = writeln!(s, "max pipeline rel_err {:.3e} (tolerance {:e})", run.report.max_rel_err(), run.report.tolerance);
    let _ = writeln!(s, "result: {}", if all_ok { "PASS" } else { "FAIL" });
    Ok((s, all_ok))
}

/// Uniform filterbank for the oracle comparison: centers `m/(2M)` and a
/// width of one eighth of the window.
pub fn oracle_params(config: &FrontendConfig) -> FrontendParams {
    FrontendParams::uniform(config.num_bins, config.window_width as f64 / 8.0)
}

pub fn oracle_report(config: &FrontendConfig, seed: u64, samples: usize) -> Result<(String, bool)> {
    let wave: Waveform = synth::white_noise(samples, config.sample_rate_hint, &mut synth::rng(seed))?;
    let params = oracle_params(config);
    let cmp = compare_to_frontend(&wave, &params, config)?;
    let rel = verify_relations(&wave, &spec_for_params(&params, config)?)?;
    let rows = [
        ("filterbank vs STFT1 (relative)", cmp.complex_rel_err, ORACLE_COMPLEX_TOL, None),
        ("rotated phase vs STFT2 phase", cmp.conv2_phase.max, ORACLE_PHASE_TOL, Some(cmp.conv2_phase.elements)),
        ("phase offset 2*pi*f*t", rel.phase.max, RELATION_PHASE_TOL, Some(rel.phase.elements)),
        ("IF1 - IF2 = 2*pi*f", rel.inst_freq.max, RELATION_DERIVATIVE_TOL, Some(rel.inst_freq.elements)),
        ("GD1 - GD2 = -2*pi*t*df", rel.group_delay.max, RELATION_DERIVATIVE_TOL, Some(rel.group_delay.elements)),
    ];
    let mut s = format!(
        "{} samples, {} bins, {} taps, sigma {}\n",
        samples,
        config.num_bins,
        config.taps(),
        params.sigma_gabor[0]
    );
    let mut all_ok = true;
    for (name, err, tol, n) in rows {
        let ok = err < tol;
        all_ok &= ok;
        let count = n.map(|n| format!("{n} elements")).unwrap_or_default();
        let _ = writeln!(s, "{name:<32}{err:>12.3e}{tol:>10.0e}  {:<5}{count}", status(ok));
    }
    let _ = writeln!(s, "result: {}", if all_ok { "PASS" } else { "FAIL" });
    Ok((s, all_ok))
}

fn dispatch(command: Command) -> Result<(String, i32)> {
    match command {
        Command::Features { input, out, setup } => Ok((cmd_features(&input, &out, &setup)?, EXIT_OK)),
        Command::Render { input, out } => Ok((cmd_render(&input, &out)?, EXIT_OK)),
        Command::Gradcheck { setup, seed, corrupt_vjp } => {
            let (config, _) = resolve(&setup, None)?;
            let corrupt = corrupt_vjp.map(|s| s.parse::<Stage>()).transpose()?;
            let (text, ok) = gradcheck_report(&config, seed, corrupt)?;
            Ok((text, if ok { EXIT_OK } else { EXIT_TOLERANCE }))
        }
        Command::OracleCompare { config, seed, samples } => {
            let config = load_config(config.as_deref())?;
            let samples = samples.unwrap_or(config.sample_rate_hint.round() as usize);
            let (text, ok) = oracle_report(&config, seed, samples)?;
            Ok((text, if ok { EXIT_OK } else { EXIT_TOLERANCE }))
        }
        Command::Init { config: cfg_path, params: params_path } => {
            let config = default_config();
            std::fs::write(&cfg_path, format_config(&config))?;
            std::fs::write(&params_path, format_params(&default_params(&config)?))?;
            Ok((format!("wrote {} and {}\n", cfg_path.display(), params_path.display()), EXIT_OK))
        }
    }
}

/// Parse `args` (including the program name), run the command and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::InvalidConfig(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok((text, code)) => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            code
        }
        Err(e) => {
            eprintln!("leafx: {e}");
            exit_code(&e)
        }
    }
}
