//! C interface to `dim-core`.
//!
//! Every fallible call returns a [`DimStatus`]; on failure the message is kept
//! per thread and read back with [`dim_last_error`]. Handles are opaque and
//! must be released with their `*_free` function. Panics never cross the
//! boundary; they surface as `DIM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dim_core::data::{AudioFeatureSequence, MotionSequence};
use dim_core::finetune::GeneratorModel;
use dim_core::metrics::{frechet_distance, mse, pcc_mean};
use dim_core::tensor_file::{load_f32, save_tensor_file, TensorData};
use dim_core::Error;
use ndarray::{Array2, Ix2};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Config = 6,
    MissingPrerequisite = 7,
    Internal = 8,
    Panic = 9,
}

/// Row-major `rows × cols` float32 matrix.
pub struct DimTensor {
    data: Array2<f32>,
}

/// A fine-tuned generator checkpoint.
pub struct DimGenerator {
    inner: GeneratorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (DimStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DimStatus {
    match e {
        Error::InvalidArgument(_) | Error::TokenOutOfRange { .. } => DimStatus::InvalidArgument,
        Error::Shape(_) => DimStatus::Shape,
        Error::Io(_) => DimStatus::Io,
        Error::TensorFile { .. } | Error::Json(_) | Error::Csv(_) => DimStatus::Format,
        Error::Config(_) => DimStatus::Config,
        Error::MissingPrerequisite(_) => DimStatus::MissingPrerequisite,
        _ => DimStatus::Internal,
    }
}

fn core(e: Error) -> Failure {
    (status_of(&e), e.to_string())
}

fn at(path: &std::path::Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| (status_of(&e), format!("{}: {e}", path.display()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DimStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dim-ffi".into());
            DimStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| (DimStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err((DimStatus::NullPointer, "path is null".into()));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DimStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err((DimStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length plus one, or 0 when
/// the last call succeeded.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn dim_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && cap > 0 {
                let n = bytes.len().min(cap);
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Copies `rows * cols` floats from `data` into a new tensor.
///
/// # Safety
/// `data` must be valid for `rows * cols` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dim_tensor_new(rows: usize, cols: usize, data: *const f32, out: *mut *mut DimTensor) -> DimStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n > 0)
            .ok_or_else(|| (DimStatus::Shape, format!("bad tensor shape {rows}x{cols}")))?;
        if data.is_null() {
            return Err((DimStatus::NullPointer, "data is null".into()));
        }
        let v = std::slice::from_raw_parts(data, n).to_vec();
        let data = Array2::from_shape_vec((rows, cols), v).map_err(|e| (DimStatus::Shape, e.to_string()))?;
        put(out, DimTensor { data })
    })
}

/// Loads a rank-2 float32 DIMT file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dim_tensor_load(path: *const c_char, out: *mut *mut DimTensor) -> DimStatus {
    guard(|| {
        let path = path_arg(path)?;
        let arr = load_f32(&path).map_err(at(&path))?;
        let data = arr
            .into_dimensionality::<Ix2>()
            .map_err(|e| (DimStatus::Shape, format!("expected a rank-2 tensor: {e}")))?;
        put(out, DimTensor { data })
    })
}

/// # Safety
/// `t` must be a live tensor handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dim_tensor_save(t: *const DimTensor, path: *const c_char) -> DimStatus {
    guard(|| {
        let t = deref(t, "tensor")?;
        let path = path_arg(path)?;
        save_tensor_file(&path, &TensorData::from(t.data.clone().into_dyn())).map_err(at(&path))
    })
}

/// 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn dim_tensor_rows(t: *const DimTensor) -> usize {
    t.as_ref().map_or(0, |t| t.data.nrows())
}

/// 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live tensor handle.
#[no_mangle]
pub unsafe extern "C" fn dim_tensor_cols(t: *const DimTensor) -> usize {
    t.as_ref().map_or(0, |t| t.data.ncols())
}

/// Copies the row-major contents into `out`; `len` must equal rows * cols.
///
/// # Safety
/// `t` must be a live tensor handle; `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dim_tensor_read(t: *const DimTensor, out: *mut f32, len: usize) -> DimStatus {
    guard(|| {
        let t = deref(t, "tensor")?;
        if out.is_null() {
            return Err((DimStatus::NullPointer, "output buffer is null".into()));
        }
        if len != t.data.len() {
            return Err((DimStatus::Shape, format!("buffer holds {len} floats, tensor has {}", t.data.len())));
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, s) in dst.iter_mut().zip(t.data.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dim_tensor_free(t: *mut DimTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

unsafe fn pair_metric(
    a: *const DimTensor,
    b: *const DimTensor,
    out: *mut f64,
    f: impl FnOnce(&Array2<f32>, &Array2<f32>) -> dim_core::Result<f64>,
) -> DimStatus {
    guard(|| {
        let (a, b) = (deref(a, "first tensor")?, deref(b, "second tensor")?);
        if out.is_null() {
            return Err((DimStatus::NullPointer, "output pointer is null".into()));
        }
        *out = f(&a.data, &b.data).map_err(core)?;
        Ok(())
    })
}

/// Fréchet distance between Gaussian fits of the rows of `a` and `b`.
///
/// # Safety
/// `a`, `b` must be live tensor handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dim_frechet_distance(a: *const DimTensor, b: *const DimTensor, out: *mut f64) -> DimStatus {
    pair_metric(a, b, out, |a, b| frechet_distance(a.view(), b.view()))
}

/// Mean squared error over all entries of two equally shaped tensors.
///
/// # Safety
/// `a`, `b` must be live tensor handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dim_mse(a: *const DimTensor, b: *const DimTensor, out: *mut f64) -> DimStatus {
    pair_metric(a, b, out, |a, b| mse(a.view(), b.view()))
}

/// Column-wise Pearson correlation, averaged over columns.
///
/// # Safety
/// `a`, `b` must be live tensor handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dim_pcc(a: *const DimTensor, b: *const DimTensor, out: *mut f64) -> DimStatus {
    pair_metric(a, b, out, |a, b| pcc_mean(a.view(), b.view()))
}

/// Loads a fine-tuned checkpoint directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dim_generator_load(dir: *const c_char, out: *mut *mut DimGenerator) -> DimStatus {
    guard(|| {
        let dir = path_arg(dir)?;
        let inner = GeneratorModel::load(&dir).map_err(at(&dir))?;
        put(out, DimGenerator { inner })
    })
}

/// Listener motion (`T × 56`) for a speaker clip (`T × 56`) and its audio
/// features (`T_a × D_a`).
///
/// # Safety
/// All handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dim_generator_listen(
    g: *const DimGenerator,
    speaker: *const DimTensor,
    audio: *const DimTensor,
    out: *mut *mut DimTensor,
) -> DimStatus {
    guard(|| {
        let g = deref(g, "generator")?;
        let speaker = MotionSequence::new(deref(speaker, "speaker")?.data.clone()).map_err(core)?;
        let audio = AudioFeatureSequence::new(deref(audio, "audio")?.data.clone()).map_err(core)?;
        let gen = g.inner.generate_listener(&speaker, &audio).map_err(core)?;
        put(out, DimTensor { data: gen.motion.into_frames() })
    })
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dim_generator_free(g: *mut DimGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_slot_is_cleared_on_success() {
        let mut t = std::ptr::null_mut();
        let s = unsafe { dim_tensor_new(0, 3, [1.0f32].as_ptr(), &mut t) };
        assert_eq!(s, DimStatus::Shape);
        assert!(unsafe { dim_last_error(std::ptr::null_mut(), 0) } > 1);
        let s = unsafe { dim_tensor_new(1, 1, [1.0f32].as_ptr(), &mut t) };
        assert_eq!(s, DimStatus::Ok);
        assert_eq!(unsafe { dim_last_error(std::ptr::null_mut(), 0) }, 0);
        unsafe { dim_tensor_free(t) };
    }

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Config("x".into())), DimStatus::Config);
        assert_eq!(status_of(&Error::Divergence("x".into())), DimStatus::Internal);
    }
}
