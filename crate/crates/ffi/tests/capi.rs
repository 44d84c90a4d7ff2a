use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dsotfs_ffi::*;

const M: usize = 64;
const N: usize = 16;
const DF: f64 = 1.92e6;

fn frame() -> *mut DsotfsFrame {
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { dsotfs_frame_new(M, N, DF, 8, 0.3e12, &mut f) }, DsotfsStatus::Ok);
    assert!(!f.is_null());
    f
}

fn last_error() -> String {
    let p = dsotfs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn bits(len: usize) -> Vec<u8> {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 63) as u8
        })
        .collect()
}

#[test]
fn frame_lifecycle_and_errors() {
    let f = frame();
    assert_eq!(unsafe { dsotfs_frame_len(f) }, M * N);
    unsafe { dsotfs_frame_free(f) };
    unsafe { dsotfs_frame_free(ptr::null_mut()) };
    assert_eq!(unsafe { dsotfs_frame_len(ptr::null()) }, 0);

    let mut g = ptr::null_mut();
    assert_eq!(unsafe { dsotfs_frame_new(0, N, DF, 0, 0.3e12, &mut g) }, DsotfsStatus::InvalidArgument);
    assert!(g.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { dsotfs_frame_new(M, N, DF, 0, 0.3e12, ptr::null_mut()) }, DsotfsStatus::NullPointer);
    assert!(last_error().contains("out"));
}

#[test]
fn modulate_rejects_bad_input() {
    let f = frame();
    let b = bits(M * N * 2);
    let mut s = vec![DsotfsComplex::default(); M * N];
    let st = unsafe { dsotfs_modulate(f, 9, b.as_ptr(), b.len(), 4, 0.0, s.as_mut_ptr(), s.len()) };
    assert_eq!(st, DsotfsStatus::InvalidArgument);
    let st = unsafe { dsotfs_modulate(f, DsotfsWaveform::Otfs as u32, b.as_ptr(), b.len(), 4, 0.0, s.as_mut_ptr(), 10) };
    assert_eq!(st, DsotfsStatus::BufferTooSmall);
    let st = unsafe { dsotfs_modulate(f, DsotfsWaveform::Otfs as u32, b.as_ptr(), 10, 4, 0.0, s.as_mut_ptr(), s.len()) };
    assert_eq!(st, DsotfsStatus::LengthMismatch);
    let st = unsafe { dsotfs_modulate(f, DsotfsWaveform::Ofdm as u32, b.as_ptr(), b.len(), 4, 0.1, s.as_mut_ptr(), s.len()) };
    assert_eq!(st, DsotfsStatus::Unsupported);
    let st = unsafe { dsotfs_modulate(f, DsotfsWaveform::Otfs as u32, b.as_ptr(), b.len(), 8, 0.0, s.as_mut_ptr(), s.len()) };
    assert_eq!(st, DsotfsStatus::Unsupported);
    unsafe { dsotfs_frame_free(f) };
}

#[test]
fn dft_spreading_lowers_papr() {
    let f = frame();
    let b = bits(M * N * 2);
    let mut papr = [0.0; 2];
    for (i, w) in [DsotfsWaveform::Otfs, DsotfsWaveform::DftSOtfs].into_iter().enumerate() {
        let mut s = vec![DsotfsComplex::default(); M * N];
        let st = unsafe { dsotfs_modulate(f, w as u32, b.as_ptr(), b.len(), 4, 0.0, s.as_mut_ptr(), s.len()) };
        assert_eq!(st, DsotfsStatus::Ok);
        assert_eq!(unsafe { dsotfs_papr_db(s.as_ptr(), s.len(), &mut papr[i]) }, DsotfsStatus::Ok);
    }
    assert!(papr[1] < papr[0], "{papr:?}");
    let zeros = [DsotfsComplex::default(); 8];
    let mut out = 0.0;
    assert_eq!(unsafe { dsotfs_papr_db(zeros.as_ptr(), 8, &mut out) }, DsotfsStatus::Numerical);
    unsafe { dsotfs_frame_free(f) };
}

#[test]
fn channel_then_estimate_recovers_the_target() {
    let f = frame();
    let res_tau = 1.0 / (M as f64 * DF);
    let res_nu = DF / N as f64;
    let (tau, nu) = (5.37 * res_tau, -1.62 * res_nu);
    let gain = DsotfsComplex { re: 0.6, im: -0.3 };
    let mut ch = ptr::null_mut();
    let st = unsafe { dsotfs_channel_new(f, &tau, &nu, &gain, 1, true, &mut ch) };
    assert_eq!(st, DsotfsStatus::Ok);

    let b = bits(M * N * 2);
    let mut tx = vec![DsotfsComplex::default(); M * N];
    let st = unsafe {
        dsotfs_modulate(f, DsotfsWaveform::DftSOtfs as u32, b.as_ptr(), b.len(), 4, 0.0, tx.as_mut_ptr(), tx.len())
    };
    assert_eq!(st, DsotfsStatus::Ok);
    let mut rx = vec![DsotfsComplex::default(); M * N];
    assert_eq!(unsafe { dsotfs_channel_apply(ch, tx.as_ptr(), rx.as_mut_ptr(), rx.len()) }, DsotfsStatus::Ok);

    let mut est = [DsotfsTarget::default()];
    let st = unsafe { dsotfs_estimate_active(f, tx.as_ptr(), rx.as_ptr(), tx.len(), 1, 2000.0, est.as_mut_ptr()) };
    assert_eq!(st, DsotfsStatus::Ok);
    assert!((est[0].tau - tau).abs() < 0.01 * res_tau, "{:?}", est[0]);
    assert!((est[0].nu - nu).abs() < 0.01 * res_nu, "{:?}", est[0]);
    assert!((est[0].alpha.re - gain.re).abs() < 1e-2 && (est[0].alpha.im - gain.im).abs() < 1e-2);
    assert!((est[0].range - tau * 299_792_458.0 / 2.0).abs() < 1e-2);

    let st = unsafe { dsotfs_channel_apply(ch, tx.as_ptr(), rx.as_mut_ptr(), 7) };
    assert_eq!(st, DsotfsStatus::LengthMismatch);
    unsafe { dsotfs_channel_free(ch) };
    unsafe { dsotfs_frame_free(f) };
}

#[test]
fn unresolvable_paths_are_rejected() {
    let f = frame();
    let taus = [1e-8, 1e-8];
    let nus = [0.0, 0.0];
    let gains = [DsotfsComplex { re: 1.0, im: 0.0 }; 2];
    let mut ch = ptr::null_mut();
    let st = unsafe { dsotfs_channel_new(f, taus.as_ptr(), nus.as_ptr(), gains.as_ptr(), 2, false, &mut ch) };
    assert_eq!(st, DsotfsStatus::InvalidArgument);
    assert!(ch.is_null());
    assert!(last_error().contains("resolvable"));
    let st = unsafe { dsotfs_channel_new(f, ptr::null(), nus.as_ptr(), gains.as_ptr(), 2, false, &mut ch) };
    assert_eq!(st, DsotfsStatus::NullPointer);
    unsafe { dsotfs_frame_free(f) };
}

#[test]
fn pilot_power_matches_the_library() {
    let (mut sp, mut sinr) = (0.0, 0.0);
    let st = unsafe { dsotfs_optimize_pilot_power(1.0, 10f64.powf(-1.5), 3, 64, 16, &mut sp, &mut sinr) };
    assert_eq!(st, DsotfsStatus::Ok);
    let lib = dsotfs::analysis::optimize_pilot_power(1.0, 10f64.powf(-1.5), 3, 64, 16).unwrap();
    assert_eq!(sp, lib.sigma_p2);
    assert_eq!(sinr, lib.sinr);
    let st = unsafe { dsotfs_optimize_pilot_power(0.0, 0.1, 3, 64, 16, &mut sp, &mut sinr) };
    assert_eq!(st, DsotfsStatus::InvalidArgument);
    let st = unsafe { dsotfs_optimize_pilot_power(1.0, 0.1, 3, 64, 16, ptr::null_mut(), &mut sinr) };
    assert_eq!(st, DsotfsStatus::NullPointer);
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dsotfs.h")).unwrap();
    for name in [
        "dsotfs_last_error",
        "dsotfs_frame_new",
        "dsotfs_frame_free",
        "dsotfs_frame_len",
        "dsotfs_channel_new",
        "dsotfs_channel_free",
        "dsotfs_channel_apply",
        "dsotfs_modulate",
        "dsotfs_estimate_active",
        "dsotfs_optimize_pilot_power",
        "dsotfs_papr_db",
        "typedef struct DsotfsFrame DsotfsFrame;",
        "DSOTFS_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("libdsotfs_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "dsotfs.h"
int main(void) {
    DsotfsFrame *f = NULL;
    if (dsotfs_frame_new(16, 4, 15e3, 0, 3e11, &f) != DSOTFS_STATUS_OK) return 1;
    if (dsotfs_frame_len(f) != 64) return 2;
    double sp = 0, sinr = 0;
    if (dsotfs_optimize_pilot_power(1.0, 0.1, 2, 16, 4, &sp, &sinr) != DSOTFS_STATUS_OK) return 3;
    DsotfsFrame *bad = NULL;
    if (dsotfs_frame_new(0, 4, 15e3, 0, 3e11, &bad) != DSOTFS_STATUS_INVALID_ARGUMENT) return 4;
    if (dsotfs_last_error() == NULL) return 5;
    dsotfs_frame_free(f);
    printf("%.6f\n", sp);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let sp: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(sp > 0.0 && sp < 1.0);
}
