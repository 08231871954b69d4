use std::ffi::CString;
use std::ptr::null_mut;

use candle_core::DType;
use dim_core::data::{synth_dyads, Role, SynthConfig};
use dim_core::dim::{DimConfig, DimModel};
use dim_core::finetune::{GeneratorModel, Task};
use dim_core::metrics::frechet_distance;
use dim_core::vq::{VqConfig, VqModel};
use dim_ffi::*;
use ndarray::Array2;

fn tensor(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> *mut DimTensor {
    let data: Vec<f32> = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
    let mut t = null_mut();
    assert_eq!(unsafe { dim_tensor_new(rows, cols, data.as_ptr(), &mut t) }, DimStatus::Ok);
    t
}

fn read(t: *const DimTensor) -> Array2<f32> {
    let (r, c) = unsafe { (dim_tensor_rows(t), dim_tensor_cols(t)) };
    let mut buf = vec![0f32; r * c];
    assert_eq!(unsafe { dim_tensor_read(t, buf.as_mut_ptr(), buf.len()) }, DimStatus::Ok);
    Array2::from_shape_vec((r, c), buf).unwrap()
}

fn last_error() -> String {
    let n = unsafe { dim_last_error(null_mut(), 0) };
    let mut buf = vec![0u8; n];
    unsafe { dim_last_error(buf.as_mut_ptr().cast(), n) };
    String::from_utf8(buf[..n.saturating_sub(1)].to_vec()).unwrap()
}

#[test]
fn save_load_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("t.dimt").to_str().unwrap()).unwrap();
    let t = tensor(3, 4, |r, c| r as f32 * 0.1 - c as f32 * 1e-7);
    assert_eq!(unsafe { dim_tensor_save(t, path.as_ptr()) }, DimStatus::Ok);
    let mut u = null_mut();
    assert_eq!(unsafe { dim_tensor_load(path.as_ptr(), &mut u) }, DimStatus::Ok);
    assert_eq!(read(t), read(u));
    unsafe {
        dim_tensor_free(t);
        dim_tensor_free(u);
    }
}

#[test]
fn metrics_match_the_library() {
    let a = tensor(40, 3, |r, c| ((r * 7 + c * 3) % 11) as f32 / 11.0);
    let b = tensor(40, 3, |r, c| ((r * 5 + c) % 13) as f32 / 6.0);
    let mut fd = f64::NAN;
    assert_eq!(unsafe { dim_frechet_distance(a, b, &mut fd) }, DimStatus::Ok);
    let oracle = frechet_distance(read(a).view(), read(b).view()).unwrap();
    assert_eq!(fd, oracle);
    let mut m = f64::NAN;
    assert_eq!(unsafe { dim_mse(a, a, &mut m) }, DimStatus::Ok);
    assert_eq!(m, 0.0);
    let mut p = f64::NAN;
    assert_eq!(unsafe { dim_pcc(a, a, &mut p) }, DimStatus::Ok);
    assert!((p - 1.0).abs() < 1e-12);
    unsafe {
        dim_tensor_free(a);
        dim_tensor_free(b);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut out = 0.0;
    assert_eq!(unsafe { dim_mse(std::ptr::null(), std::ptr::null(), &mut out) }, DimStatus::NullPointer);
    assert!(last_error().contains("null"));

    let a = tensor(2, 3, |_, _| 1.0);
    let b = tensor(3, 3, |_, _| 1.0);
    assert_eq!(unsafe { dim_mse(a, b, &mut out) }, DimStatus::Shape);

    let missing = CString::new("/nonexistent/dir/x.dimt").unwrap();
    let mut t = null_mut();
    assert_eq!(unsafe { dim_tensor_load(missing.as_ptr(), &mut t) }, DimStatus::Io);
    assert!(t.is_null());
    assert!(last_error().contains("x.dimt"));

    let mut small = [0i8; 4];
    let full = unsafe { dim_last_error(small.as_mut_ptr(), small.len()) };
    assert!(full > small.len());
    assert_eq!(small[3], 0);

    let mut buf = [0f32; 5];
    assert_eq!(unsafe { dim_tensor_read(a, buf.as_mut_ptr(), buf.len()) }, DimStatus::Shape);

    let mut g = null_mut();
    assert_eq!(unsafe { dim_generator_load(missing.as_ptr(), &mut g) }, DimStatus::MissingPrerequisite);
    unsafe {
        dim_tensor_free(a);
        dim_tensor_free(b);
        dim_tensor_free(null_mut());
        dim_generator_free(null_mut());
    }
}

#[test]
fn generator_round_trip_matches_library() {
    let vq = VqConfig {
        codebook_size: 16,
        code_dim: 8,
        hidden_dim: 8,
        layers: 1,
        heads: 2,
        intermediate: 16,
        ..VqConfig::default()
    };
    let dim = DimConfig {
        model_dim: 8,
        layers: 1,
        heads: 2,
        intermediate: 16,
        ..DimConfig::default()
    };
    let sample = synth_dyads(&SynthConfig {
        n_clips: 1,
        frames: 16,
        ..SynthConfig::default()
    })
    .unwrap()
    .remove(0);
    let vs = VqModel::new(Role::Speaker, vq.clone(), DType::F32).unwrap();
    let vl = VqModel::new(Role::Listener, vq, DType::F32).unwrap();
    let model = DimModel::new(dim, vs, vl, sample.audio.width()).unwrap();
    let gen = GeneratorModel::new(Task::Listener, model);
    let dir = tempfile::tempdir().unwrap();
    gen.save(dir.path()).unwrap();
    let expected = gen.generate_listener(&sample.speaker, &sample.audio).unwrap().motion.into_frames();

    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut g = null_mut();
    assert_eq!(unsafe { dim_generator_load(path.as_ptr(), &mut g) }, DimStatus::Ok);
    let sp = sample.speaker.frames();
    let au = sample.audio.features();
    let s = tensor(sp.nrows(), sp.ncols(), |r, c| sp[[r, c]]);
    let a = tensor(au.nrows(), au.ncols(), |r, c| au[[r, c]]);
    let mut out = null_mut();
    assert_eq!(unsafe { dim_generator_listen(g, s, a, &mut out) }, DimStatus::Ok);
    assert_eq!(read(out), expected);

    let bad = tensor(16, 3, |_, _| 0.0);
    let mut none = null_mut();
    assert_eq!(unsafe { dim_generator_listen(g, bad, a, &mut none) }, DimStatus::Shape);
    unsafe {
        for t in [s, a, out, bad] {
            dim_tensor_free(t);
        }
        dim_generator_free(g);
    }
}
