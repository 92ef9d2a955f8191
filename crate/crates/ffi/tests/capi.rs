use std::ffi::{CStr, CString};
use std::ptr;

use leafx::{synth, FeatureContainer};
use leafx_ffi::*;

fn small_frontend(dir: &std::path::Path) -> *mut LeafxFrontend {
    let cfg = dir.join("small.cfg");
    std::fs::write(&cfg, "num_bins = 8\nwindow_width = 64\nlowpass_stride = 16\n").unwrap();
    let path = CString::new(cfg.to_str().unwrap()).unwrap();
    let mut fe = ptr::null_mut();
    let status = unsafe { leafx_frontend_from_files(path.as_ptr(), ptr::null(), &mut fe) };
    assert_eq!(status, LeafxStatus::Ok);
    assert!(!fe.is_null());
    fe
}

fn last_error() -> String {
    let p = leafx_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn extract_matches_core_container() {
    let dir = tempfile::tempdir().unwrap();
    let fe = small_frontend(dir.path());
    assert_eq!(unsafe { leafx_frontend_num_bins(fe) }, 8);
    let wave = synth::white_noise(1000, 16000.0, &mut synth::rng(5)).unwrap();

    let mut feats = ptr::null_mut();
    let s = wave.samples();
    assert_eq!(unsafe { leafx_extract(fe, s.as_ptr(), s.len(), 16000.0, &mut feats) }, LeafxStatus::Ok);
    assert!(leafx_last_error_message().is_null());

    let (mut c, mut m, mut l) = (0, 0, 0);
    assert_eq!(unsafe { leafx_features_dims(feats, &mut c, &mut m, &mut l) }, LeafxStatus::Ok);
    assert_eq!((c, m), (9, 8));

    let out = dir.path().join("f.lfx");
    let out_c = CString::new(out.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { leafx_features_write(feats, out_c.as_ptr()) }, LeafxStatus::Ok);
    let container = FeatureContainer::read(&out).unwrap();
    assert_eq!((container.bins, container.frames), (m, l));

    for i in 0..c {
        let name = unsafe { CStr::from_ptr(leafx_features_channel_name(feats, i)) };
        assert_eq!(name.to_str().unwrap(), container.names[i]);
        let mut plane = vec![f32::NAN; m * l];
        let mut mask = vec![7u8; m * l];
        unsafe {
            assert_eq!(leafx_features_copy_plane(feats, i, plane.as_mut_ptr(), plane.len()), LeafxStatus::Ok);
            assert_eq!(leafx_features_copy_mask(feats, i, mask.as_mut_ptr(), mask.len()), LeafxStatus::Ok);
        }
        assert_eq!(plane, container.planes[i]);
        assert_eq!(mask, container.masks[i].iter().map(|&b| b as u8).collect::<Vec<_>>());
    }
    assert!(unsafe { leafx_features_channel_name(feats, c) }.is_null());

    unsafe {
        leafx_features_free(feats);
        leafx_frontend_free(fe);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let fe = small_frontend(dir.path());
    let mut feats = ptr::null_mut();

    let short = [0.1f64; 10];
    let status = unsafe { leafx_extract(fe, short.as_ptr(), short.len(), 16000.0, &mut feats) };
    assert_eq!(status, LeafxStatus::SignalTooShort);
    assert!(last_error().contains("too short"));
    assert!(feats.is_null());

    assert_eq!(unsafe { leafx_extract(fe, ptr::null(), 5, 16000.0, &mut feats) }, LeafxStatus::NullPointer);
    assert_eq!(unsafe { leafx_extract(ptr::null(), short.as_ptr(), 10, 16000.0, &mut feats) }, LeafxStatus::NullPointer);
    assert_eq!(unsafe { leafx_features_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, LeafxStatus::NullPointer);

    let missing = CString::new(dir.path().join("absent.cfg").to_str().unwrap()).unwrap();
    let mut other = ptr::null_mut();
    assert_eq!(unsafe { leafx_frontend_from_files(missing.as_ptr(), ptr::null(), &mut other) }, LeafxStatus::Io);
    assert!(other.is_null());

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "num_bins = 8\ncolour = blue\n").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { leafx_frontend_from_files(bad.as_ptr(), ptr::null(), &mut other) }, LeafxStatus::Format);

    unsafe {
        leafx_frontend_free(fe);
        leafx_frontend_free(ptr::null_mut());
        leafx_features_free(ptr::null_mut());
    }
}

#[test]
fn buffer_checks() {
    let dir = tempfile::tempdir().unwrap();
    let fe = small_frontend(dir.path());
    let wave = synth::white_noise(600, 16000.0, &mut synth::rng(1)).unwrap();
    let mut feats = ptr::null_mut();
    let s = wave.samples();
    assert_eq!(unsafe { leafx_extract(fe, s.as_ptr(), s.len(), 16000.0, &mut feats) }, LeafxStatus::Ok);

    let mut buf = vec![0f32; 3];
    unsafe {
        assert_eq!(leafx_features_copy_plane(feats, 0, buf.as_mut_ptr(), buf.len()), LeafxStatus::InvalidArgument);
        assert_eq!(leafx_features_copy_plane(feats, 99, buf.as_mut_ptr(), buf.len()), LeafxStatus::OutOfRange);
        assert_eq!(leafx_features_copy_mask(feats, 0, ptr::null_mut(), 3), LeafxStatus::NullPointer);
        leafx_features_free(feats);
        leafx_frontend_free(fe);
    }
}

#[test]
fn default_frontend_and_version() {
    let mut fe = ptr::null_mut();
    assert_eq!(unsafe { leafx_frontend_new_default(&mut fe) }, LeafxStatus::Ok);
    assert_eq!(unsafe { leafx_frontend_num_bins(fe) }, 40);
    let v = unsafe { CStr::from_ptr(leafx_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    assert_eq!(unsafe { leafx_frontend_new_default(ptr::null_mut()) }, LeafxStatus::NullPointer);
    unsafe { leafx_frontend_free(fe) };
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header_path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/leafx.h");
    let header = std::fs::read_to_string(header_path).unwrap();
    for sym in [
        "leafx_version",
        "leafx_last_error_message",
        "leafx_frontend_new_default",
        "leafx_frontend_from_files",
        "leafx_frontend_num_bins",
        "leafx_frontend_free",
        "leafx_extract",
        "leafx_features_dims",
        "leafx_features_channel_name",
        "leafx_features_copy_plane",
        "leafx_features_copy_mask",
        "leafx_features_write",
        "leafx_features_free",
        "LEAFX_STATUS_NON_SMOOTH",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }

    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(&src, "#include \"leafx.h\"\nint main(void) { return leafx_version() == NULL; }\n").unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    match std::process::Command::new(&cc).args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include]).arg(&src).status() {
        Ok(status) => assert!(status.success(), "{cc} rejected the header"),
        Err(e) => eprintln!("skipping C compile check: {cc} unavailable ({e})"),
    }
}
