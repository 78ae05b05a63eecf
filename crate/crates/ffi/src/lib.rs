//! C ABI over the ministl toolkit.
//!
//! Models and datasets cross the boundary as opaque handles that the caller
//! frees. Every fallible call returns a [`MinistlStatus`]; the message of the
//! most recent failure on the calling thread is available through
//! [`ministl_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ministl::datagen::{Dataset, Split};
use ministl::harness::ExperimentConfig;
use ministl::metrics::{estimate_flops, QualityAccumulator};
use ministl::models::checkpoint;
use ministl::{Error, FrameSpec, Model, Registry, Role, Tensor, VideoBatch};

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinistlStatus {
    Ok = 0,
    /// A null pointer, non UTF-8 string or wrongly sized buffer.
    InvalidArgument = 1,
    Config = 2,
    Registry = 3,
    Geometry = 4,
    Contract = 5,
    Io = 6,
    Format = 7,
    Runtime = 8,
    Panic = 9,
}

impl From<&Error> for MinistlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config { .. } => Self::Config,
            Error::Registry(_) => Self::Registry,
            Error::Geometry(_) => Self::Geometry,
            Error::Contract(_) => Self::Contract,
            Error::Io { .. } => Self::Io,
            Error::Format { .. } | Error::Checkpoint { .. } => Self::Format,
            _ => Self::Runtime,
        }
    }
}

/// Opaque model handle.
pub struct MinistlModel(Model<f32>);

/// Opaque dataset handle.
pub struct MinistlDataset(Dataset);

/// Frame geometry and horizons of a model or dataset.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MinistlShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Context frames.
    pub t: usize,
    /// Predicted frames.
    pub t_prime: usize,
}

/// Quality metrics of a prediction against its target.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MinistlMetrics {
    /// Squared error summed over a frame, averaged over frames.
    pub mse_paper: f64,
    pub mae_paper: f64,
    pub mse_pixel: f64,
    pub mae_pixel: f64,
    pub ssim: f64,
    /// Decibels; infinite for a perfect prediction.
    pub psnr: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(MinistlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MinistlStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records any failure or panic and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MinistlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MinistlStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            set_error(format!("panic: {}", msg.unwrap_or_default()));
            MinistlStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(format!("{what} is null")))
}

unsafe fn floats<'a>(p: *const f32, len: usize, what: &str) -> Result<&'a [f32], Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn floats_mut<'a>(p: *mut f32, len: usize, what: &str) -> Result<&'a mut [f32], Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn expect_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got == want {
        Ok(())
    } else {
        Err(invalid(format!("{what} holds {got} values, expected {want}")))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ministl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// NUL-terminated) and returns the full message length in bytes, excluding
/// the terminator. Passing a null `buf` only queries the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ministl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

fn parse_config(yaml: &str) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::from_yaml(yaml)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Builds a freshly initialised model from an experiment config given as
/// YAML text. The model entry, frame geometry and seed come from the config.
///
/// # Safety
/// `config_yaml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_model_from_config(config_yaml: *const c_char, out: *mut *mut MinistlModel) -> MinistlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = parse_config(text(config_yaml, "config_yaml")?)?;
        let model = Registry::with_defaults().build(&cfg.model.name, &cfg.model_config()?, cfg.seed)?;
        *out = Box::into_raw(Box::new(MinistlModel(model)));
        Ok(())
    })
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_model_load(path: *const c_char, out: *mut *mut MinistlModel) -> MinistlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let model = checkpoint::load(Path::new(text(path, "path")?), &Registry::with_defaults())?;
        *out = Box::into_raw(Box::new(MinistlModel(model)));
        Ok(())
    })
}

/// Writes a model checkpoint.
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ministl_model_save(model: *const MinistlModel, path: *const c_char) -> MinistlStatus {
    guard(|| {
        let model = handle(model, "model")?;
        checkpoint::save(&model.0, Path::new(text(path, "path")?), &[])?;
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ministl_model_free(model: *mut MinistlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_model_shape(model: *const MinistlModel, out: *mut MinistlShape) -> MinistlStatus {
    guard(|| {
        let cfg = &handle(model, "model")?.0.config;
        let fs = cfg.frame_spec;
        *out_ptr(out, "out")? = MinistlShape { channels: fs.channels, height: fs.height, width: fs.width, t: cfg.t, t_prime: cfg.t_prime };
        Ok(())
    })
}

/// Number of trainable scalars.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_model_param_count(model: *const MinistlModel, out: *mut u64) -> MinistlStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(model, "model")?.0.num_params() as u64;
        Ok(())
    })
}

/// Multiply-accumulate count of one forward pass at batch size 1.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_model_macs(model: *const MinistlModel, out: *mut u64) -> MinistlStatus {
    guard(|| {
        *out_ptr(out, "out")? = estimate_flops(&handle(model, "model")?.0)?.macs;
        Ok(())
    })
}

/// Predicts `t_prime` frames for `batch` clips. `context` holds
/// `batch·t·C·H·W` values in [0, 1]; `out` receives `batch·t_prime·C·H·W`.
///
/// # Safety
/// `model` must be a live handle and the buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ministl_model_predict(
    model: *const MinistlModel,
    context: *const f32,
    context_len: usize,
    batch: usize,
    out: *mut f32,
    out_len: usize,
) -> MinistlStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let cfg = &model.config;
        let fs = cfg.frame_spec;
        expect_len(context_len, batch * cfg.t * fs.pixels(), "context")?;
        expect_len(out_len, batch * cfg.t_prime * fs.pixels(), "out")?;
        let data = floats(context, context_len, "context")?.to_vec();
        let ctx = VideoBatch::new(Tensor::new(vec![batch, cfg.t, fs.channels, fs.height, fs.width], data), fs, Role::Context)?;
        let pred = model.predict(&ctx)?;
        floats_mut(out, out_len, "out")?.copy_from_slice(pred.data().data());
        Ok(())
    })
}

/// Builds the train (`split` 0) or test (`split` 1) dataset described by an
/// experiment config. Clips are rendered on demand.
///
/// # Safety
/// `config_yaml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_dataset_from_config(
    config_yaml: *const c_char,
    split: u32,
    out: *mut *mut MinistlDataset,
) -> MinistlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = parse_config(text(config_yaml, "config_yaml")?)?;
        let split = match split {
            0 => Split::Train,
            1 => Split::Test,
            s => return Err(invalid(format!("split must be 0 (train) or 1 (test), got {s}"))),
        };
        let ds = Dataset::build(cfg.data.dataset_spec(split, cfg.seed))?;
        *out = Box::into_raw(Box::new(MinistlDataset(ds)));
        Ok(())
    })
}

/// Releases a dataset handle. Null is ignored.
///
/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ministl_dataset_free(dataset: *mut MinistlDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_dataset_len(dataset: *const MinistlDataset, out: *mut usize) -> MinistlStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(dataset, "dataset")?.0.len();
        Ok(())
    })
}

/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_dataset_shape(dataset: *const MinistlDataset, out: *mut MinistlShape) -> MinistlStatus {
    guard(|| {
        let spec = handle(dataset, "dataset")?.0.spec();
        let fs = spec.frame_spec;
        *out_ptr(out, "out")? = MinistlShape { channels: fs.channels, height: fs.height, width: fs.width, t: spec.t, t_prime: spec.t_prime };
        Ok(())
    })
}

/// Renders clip `index` into `context` (`t·C·H·W` values) and `target`
/// (`t_prime·C·H·W` values).
///
/// # Safety
/// `dataset` must be a live handle and the buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ministl_dataset_get(
    dataset: *const MinistlDataset,
    index: usize,
    context: *mut f32,
    context_len: usize,
    target: *mut f32,
    target_len: usize,
) -> MinistlStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.0;
        let spec = ds.spec();
        if index >= ds.len() {
            return Err(invalid(format!("index {index} out of range for {} clips", ds.len())));
        }
        let px = spec.frame_spec.pixels();
        expect_len(context_len, spec.t * px, "context")?;
        expect_len(target_len, spec.t_prime * px, "target")?;
        let pair = ds.get(index)?.pair;
        floats_mut(context, context_len, "context")?.copy_from_slice(pair.context.data().data());
        floats_mut(target, target_len, "target")?.copy_from_slice(pair.target.data().data());
        Ok(())
    })
}

/// Writes the hex content hash of the whole dataset (64 characters plus NUL)
/// into `buf`, which must hold at least 65 bytes.
///
/// # Safety
/// `dataset` must be a live handle; `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ministl_dataset_hash(dataset: *const MinistlDataset, buf: *mut c_char, len: usize) -> MinistlStatus {
    guard(|| {
        let hash = handle(dataset, "dataset")?.0.materialize()?.content_hash();
        if buf.is_null() || len <= hash.len() {
            return Err(invalid(format!("hash buffer needs {} bytes", hash.len() + 1)));
        }
        ptr::copy_nonoverlapping(hash.as_ptr(), buf.cast::<u8>(), hash.len());
        *buf.add(hash.len()) = 0;
        Ok(())
    })
}

/// Scores `frames` predicted frames of geometry `C×H×W` against their
/// targets. Both buffers hold `frames·C·H·W` values.
///
/// # Safety
/// Both buffers must hold `frames·channels·height·width` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ministl_metrics(
    prediction: *const f32,
    target: *const f32,
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    out: *mut MinistlMetrics,
) -> MinistlStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let fs = FrameSpec::new(channels, height, width);
        fs.validate()?;
        let n = frames * fs.pixels();
        let dims = vec![1, frames, channels, height, width];
        let pred = VideoBatch::new(Tensor::new(dims.clone(), floats(prediction, n, "prediction")?.to_vec()), fs, Role::Prediction)?;
        let tgt = VideoBatch::new(Tensor::new(dims, floats(target, n, "target")?.to_vec()), fs, Role::Target)?;
        let mut acc = QualityAccumulator::new(fs.pixels());
        acc.add(&pred, &tgt);
        *out = MinistlMetrics {
            mse_paper: acc.mse_paper(),
            mae_paper: acc.mae_paper(),
            mse_pixel: acc.mse_pixel(),
            mae_pixel: acc.mae_pixel(),
            ssim: acc.ssim(),
            psnr: acc.psnr(),
        };
        Ok(())
    })
}
