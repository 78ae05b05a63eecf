use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ministl_ffi::*;

const TINY: &str = "\
model: {name: metavp-gated_attention, hid_S: 4, hid_T: 8, N_S: 2, N_T: 2, mlp_ratio: 2.0}
data: {size: 32, train_count: 4, test_count: 3, T: 3, T_prime: 2}
seed: 9
";

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        ministl_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn model(yaml: &str) -> *mut MinistlModel {
    let mut m = ptr::null_mut();
    let s = unsafe { ministl_model_from_config(cstr(yaml).as_ptr(), &mut m) };
    assert_eq!(s, MinistlStatus::Ok, "{}", last_error());
    m
}

#[test]
fn model_handles_match_the_library() {
    let m = model(TINY);
    let mut shape = MinistlShape::default();
    let mut params = 0u64;
    let mut macs = 0u64;
    unsafe {
        assert_eq!(ministl_model_shape(m, &mut shape), MinistlStatus::Ok);
        assert_eq!(ministl_model_param_count(m, &mut params), MinistlStatus::Ok);
        assert_eq!(ministl_model_macs(m, &mut macs), MinistlStatus::Ok);
    }
    assert_eq!(shape, MinistlShape { channels: 1, height: 32, width: 32, t: 3, t_prime: 2 });

    let cfg = ministl::harness::ExperimentConfig::from_yaml(TINY).unwrap();
    let direct = ministl::Registry::with_defaults().build(&cfg.model.name, &cfg.model_config().unwrap(), cfg.seed).unwrap();
    assert_eq!(params, direct.num_params() as u64);
    assert_eq!(macs, ministl::metrics::estimate_flops(&direct).unwrap().macs);

    let ctx: Vec<f32> = (0..3 * 1024).map(|i| (i % 17) as f32 / 16.0).collect();
    let mut out = vec![0f32; 2 * 1024];
    let s = unsafe { ministl_model_predict(m, ctx.as_ptr(), ctx.len(), 1, out.as_mut_ptr(), out.len()) };
    assert_eq!(s, MinistlStatus::Ok, "{}", last_error());
    let batch = ministl::VideoBatch::new(ministl::Tensor::new(vec![1, 3, 1, 32, 32], ctx.clone()), ministl::FrameSpec::new(1, 32, 32), ministl::Role::Context).unwrap();
    assert_eq!(out, direct.predict(&batch).unwrap().data().data());

    let s = unsafe { ministl_model_predict(m, ctx.as_ptr(), ctx.len() - 1, 1, out.as_mut_ptr(), out.len()) };
    assert_eq!(s, MinistlStatus::InvalidArgument);
    assert!(last_error().contains("context"));
    unsafe { ministl_model_free(m) };
}

#[test]
fn checkpoints_round_trip_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("m.safetensors").to_str().unwrap());
    let m = model(TINY);
    let mut back = ptr::null_mut();
    let (mut a, mut b) = (0u64, 0u64);
    unsafe {
        assert_eq!(ministl_model_save(m, path.as_ptr()), MinistlStatus::Ok);
        assert_eq!(ministl_model_load(path.as_ptr(), &mut back), MinistlStatus::Ok);
        ministl_model_param_count(m, &mut a);
        ministl_model_param_count(back, &mut b);
        ministl_model_free(m);
        ministl_model_free(back);
    }
    assert_eq!(a, b);

    let mut missing = ptr::null_mut();
    let s = unsafe { ministl_model_load(cstr("/nonexistent.safetensors").as_ptr(), &mut missing) };
    assert_eq!(s, MinistlStatus::Io);
    assert!(missing.is_null());
}

#[test]
fn errors_map_to_status_codes() {
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ministl_model_from_config(cstr("model: {name: nope}\n").as_ptr(), &mut m), MinistlStatus::Registry);
        assert!(last_error().contains("nope"));
        assert_eq!(ministl_model_from_config(cstr("model: {name: convlstm}\ntrain: {epochz: 1}\n").as_ptr(), &mut m), MinistlStatus::Config);
        assert_eq!(ministl_model_from_config(ptr::null(), &mut m), MinistlStatus::InvalidArgument);
        assert_eq!(ministl_model_from_config(cstr(TINY).as_ptr(), ptr::null_mut()), MinistlStatus::InvalidArgument);
        assert_eq!(ministl_model_param_count(ptr::null(), &mut 0), MinistlStatus::InvalidArgument);
        ministl_model_free(ptr::null_mut());
        ministl_dataset_free(ptr::null_mut());
        let needed = ministl_last_error(ptr::null_mut(), 0);
        assert_eq!(needed, last_error().len());
        let mut small = [0 as c_char; 4];
        ministl_last_error(small.as_mut_ptr(), small.len());
        assert_eq!(CStr::from_ptr(small.as_ptr()).to_bytes().len(), 3);
    }
}

#[test]
fn datasets_and_metrics() {
    let mut ds = ptr::null_mut();
    let mut n = 0usize;
    let mut shape = MinistlShape::default();
    let (mut ctx, mut tgt) = (vec![0f32; 3 * 1024], vec![0f32; 2 * 1024]);
    let mut hash = [0 as c_char; 65];
    unsafe {
        assert_eq!(ministl_dataset_from_config(cstr(TINY).as_ptr(), 1, &mut ds), MinistlStatus::Ok);
        ministl_dataset_len(ds, &mut n);
        ministl_dataset_shape(ds, &mut shape);
        assert_eq!(ministl_dataset_get(ds, 2, ctx.as_mut_ptr(), ctx.len(), tgt.as_mut_ptr(), tgt.len()), MinistlStatus::Ok);
        assert_eq!(ministl_dataset_get(ds, 3, ctx.as_mut_ptr(), ctx.len(), tgt.as_mut_ptr(), tgt.len()), MinistlStatus::InvalidArgument);
        assert_eq!(ministl_dataset_hash(ds, hash.as_mut_ptr(), 64), MinistlStatus::InvalidArgument);
        assert_eq!(ministl_dataset_hash(ds, hash.as_mut_ptr(), hash.len()), MinistlStatus::Ok);
        assert_eq!(ministl_dataset_from_config(cstr(TINY).as_ptr(), 7, &mut ds), MinistlStatus::InvalidArgument);
    }
    assert_eq!((n, shape.t, shape.t_prime), (3, 3, 2));

    let cfg = ministl::harness::ExperimentConfig::from_yaml(TINY).unwrap();
    let direct = ministl::harness::bench::clean_test_split(&cfg).unwrap();
    let pair = direct.batch(&[2]).unwrap();
    assert_eq!(ctx, pair.context.data().data());
    assert_eq!(tgt, pair.target.data().data());
    assert_eq!(unsafe { CStr::from_ptr(hash.as_ptr()) }.to_str().unwrap(), direct.content_hash());

    let mut m = MinistlMetrics::default();
    let pred: Vec<f32> = tgt.iter().map(|v| (v + 0.1).min(1.0)).collect();
    unsafe {
        assert_eq!(ministl_metrics(pred.as_ptr(), tgt.as_ptr(), 2, 1, 32, 32, &mut m), MinistlStatus::Ok);
    }
    let p = ministl::VideoBatch::new(ministl::Tensor::new(vec![1, 2, 1, 32, 32], pred), ministl::FrameSpec::new(1, 32, 32), ministl::Role::Prediction).unwrap();
    let (mse_paper, mse_pixel) = ministl::metrics::mse(&p, &pair.target).unwrap();
    assert_eq!((m.mse_paper, m.mse_pixel), (mse_paper, mse_pixel));
    assert!((m.ssim - ministl::metrics::ssim(&p, &pair.target).unwrap()).abs() < 1e-12);
    unsafe { ministl_dataset_free(ds) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ministl.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct MinistlModel MinistlModel;"));
}

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    [deps.join("libministl_ffi.a"), deps.parent()?.join("libministl_ffi.a")].into_iter().find(|p| p.is_file())
}

#[test]
fn c_program_links_against_the_header() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = static_lib().expect("static library is built alongside the tests");
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok 0.1.0 1x32x32"));
}
