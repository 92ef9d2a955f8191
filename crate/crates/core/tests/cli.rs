use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leafx::container::FeatureContainer;
use leafx::{synth, wav};

fn leafx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leafx")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    /// Small geometry so the debug binary stays fast.
    fn small_config(&self) -> String {
        let p = self.path("small.cfg");
        std::fs::write(&p, "num_bins = 8\nwindow_width = 64\nlowpass_stride = 16\n").unwrap();
        p.to_string_lossy().into_owned()
    }

    fn tone_wav(&self) -> String {
        let w = synth::tone(2000, 16000.0, 1000.0 / 16000.0, 0.5, 0.0).unwrap();
        let p = self.path("tone.wav");
        wav::write_wav_i16(&p, w.samples(), 16000).unwrap();
        p.to_string_lossy().into_owned()
    }
}

fn read(p: &Path) -> FeatureContainer {
    FeatureContainer::read(p).unwrap()
}

#[test]
fn pow_only_gives_one_channel() {
    let ws = Workspace::new();
    let (cfg, input, out) = (ws.small_config(), ws.tone_wav(), ws.s("pow.lfx"));
    let o = leafx(&["features", &input, "--out", &out, "--config", &cfg, "--features", "pow"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = read(Path::new(&out));
    assert_eq!(c.names, vec!["pow"]);
    assert_eq!((c.bins, c.frames), (8, (2000 - 64 - 65) / 16 + 1));
}

#[test]
fn all_features_and_gating() {
    let ws = Workspace::new();
    let (cfg, input) = (ws.small_config(), ws.tone_wav());
    let out = ws.s("all.lfx");
    assert_eq!(code(&leafx(&["features", &input, "--out", &out, "--config", &cfg])), 0);
    assert_eq!(read(Path::new(&out)).num_channels(), 9);

    let gated = ws.s("gated.lfx");
    assert_eq!(code(&leafx(&["features", &input, "--out", &gated, "--config", &cfg, "--pow-gate"])), 0);
    let c = read(Path::new(&gated));
    assert_eq!(c.names[0], "pow");
    assert!(c.names[1..].iter().all(|n| n.contains("*pow")), "{:?}", c.names);

    let some = ws.s("some.lfx");
    let o = leafx(&["features", &input, "--out", &some, "--config", &cfg, "--features", "if1,gd2", "--pow-gate=gd2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(read(Path::new(&some)).names, vec!["if1", "gd2*pow"]);
}

#[test]
fn features_are_byte_identical_across_runs_and_threads() {
    let ws = Workspace::new();
    let (cfg, input) = (ws.small_config(), ws.tone_wav());
    let (a, b, c) = (ws.s("a.lfx"), ws.s("b.lfx"), ws.s("c.lfx"));
    assert_eq!(code(&leafx(&["features", &input, "--out", &a, "--config", &cfg])), 0);
    assert_eq!(code(&leafx(&["features", &input, "--out", &b, "--config", &cfg])), 0);
    assert_eq!(code(&leafx(&["--threads", "3", "features", &input, "--out", &c, "--config", &cfg])), 0);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(bytes, std::fs::read(&c).unwrap());
}

#[test]
fn render_writes_one_pgm_per_plane() {
    let ws = Workspace::new();
    let (cfg, input, lfx) = (ws.small_config(), ws.tone_wav(), ws.s("r.lfx"));
    assert_eq!(code(&leafx(&["features", &input, "--out", &lfx, "--config", &cfg])), 0);
    let dir = ws.path("img");
    assert_eq!(code(&leafx(&["render", &lfx, "--out", &dir.to_string_lossy()])), 0);
    let mut names: Vec<String> =
        std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names.len(), 9);
    assert_eq!(names[0], "00_pow.pgm");
    let img = std::fs::read(dir.join("00_pow.pgm")).unwrap();
    assert!(img.starts_with(b"P5\n"));
}

#[test]
fn gradcheck_passes_and_is_reproducible() {
    let a = leafx(&["gradcheck", "--seed", "4"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    let b = leafx(&["gradcheck", "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("result: PASS"));
}

#[test]
fn corrupted_vjp_fails_gradcheck() {
    for stage in ["spcen", "difference"] {
        let o = leafx(&["gradcheck", "--corrupt-vjp", stage]);
        assert_eq!(code(&o), 4, "{stage}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    }
}

#[test]
fn oracle_compare_small() {
    let ws = Workspace::new();
    let cfg = ws.small_config();
    let o = leafx(&["oracle-compare", "--config", &cfg, "--seed", "2", "--samples", "600"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn exit_codes_by_error_class() {
    let ws = Workspace::new();
    assert_eq!(code(&leafx(&[])), 1);
    assert_eq!(code(&leafx(&["features"])), 1);
    assert_eq!(code(&leafx(&["nope"])), 1);
    assert_eq!(code(&leafx(&["--help"])), 0);

    let missing = ws.s("missing.wav");
    assert_eq!(code(&leafx(&["features", &missing, "--out", &ws.s("x.lfx")])), 2);

    let junk = ws.path("junk.lfx");
    std::fs::write(&junk, b"LFX1garbage").unwrap();
    assert_eq!(code(&leafx(&["render", &junk.to_string_lossy(), "--out", &ws.s("o")])), 3);

    let bad_cfg = ws.path("bad.cfg");
    std::fs::write(&bad_cfg, "num_bins = 8\ncolour = blue\n").unwrap();
    let input = ws.tone_wav();
    let o = leafx(&["features", &input, "--out", &ws.s("y.lfx"), "--config", &bad_cfg.to_string_lossy()]);
    assert_eq!(code(&o), 3);

    let o = leafx(&["features", &input, "--out", &ws.s("z.lfx"), "--features", "pow,xyz"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn init_files_round_trip_through_features() {
    let ws = Workspace::new();
    let (cfg, params) = (ws.s("init.cfg"), ws.s("init.params"));
    assert_eq!(code(&leafx(&["init", "--config", &cfg, "--params", &params])), 0);
    let loaded = leafx::textio::read_params(Path::new(&params)).unwrap();
    assert_eq!(loaded, leafx::cli::default_params(&leafx::default_config()).unwrap());
    assert_eq!(leafx::textio::read_config(Path::new(&cfg)).unwrap(), leafx::default_config());
}
