use std::path::PathBuf;

use reinpaint_core::metrics::{mse, perceptual, PerceptualSpec};
use reinpaint_core::{Error, ImageBuffer};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn pair() -> (ImageBuffer, ImageBuffer) {
    let a = ImageBuffer::from_fn(20, 14, |x, y| [x as f32 / 20.0, y as f32 / 14.0, 0.3]).unwrap();
    let b = ImageBuffer::from_fn(20, 14, |x, y| [0.5, ((x * y) % 5) as f32 / 5.0, 0.9]).unwrap();
    (a, b)
}

#[cfg(feature = "onnx")]
#[test]
fn squared_difference_model_matches_scaled_mse() {
    let backend = PerceptualSpec::External {
        model: fixture("sq_diff.onnx"),
    }
    .load()
    .unwrap();
    let (a, b) = pair();
    let got = perceptual(&a, &b, &backend).unwrap();
    // inputs are mapped to [-1, 1], which scales squared errors by 4
    let want = 4.0 * mse(&a, &b).unwrap();
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    assert_eq!(perceptual(&a, &a, &backend).unwrap(), 0.0);
    // a second resolution gets its own plan
    let small = ImageBuffer::filled(8, 8, [0.2; 3]).unwrap();
    let other = ImageBuffer::filled(8, 8, [0.7; 3]).unwrap();
    let d = perceptual(&small, &other, &backend).unwrap();
    assert!((d - 1.0).abs() < 1e-6, "{d}");
}

#[cfg(feature = "onnx")]
#[test]
fn asymmetric_model_is_symmetrized() {
    let backend = PerceptualSpec::External {
        model: fixture("mean_diff.onnx"),
    }
    .load()
    .unwrap();
    let (a, b) = pair();
    let ab = perceptual(&a, &b, &backend).unwrap();
    let ba = perceptual(&b, &a, &backend).unwrap();
    assert_eq!(ab, ba);
    assert!(ab.abs() < 1e-6);
}

#[cfg(feature = "onnx")]
#[test]
fn bad_models_are_load_errors() {
    for name in ["one_input.onnx", "missing.onnx", "make_onnx_fixtures.py"] {
        let err = PerceptualSpec::External { model: fixture(name) }.load().unwrap_err();
        assert!(matches!(err, Error::ModelLoad(_)), "{name}: {err}");
    }
}

#[cfg(not(feature = "onnx"))]
#[test]
fn external_mode_needs_the_onnx_feature() {
    let err = PerceptualSpec::External {
        model: fixture("sq_diff.onnx"),
    }
    .load()
    .unwrap_err();
    assert!(matches!(err, Error::ModelLoad(_)));
    let _ = pair;
    let _ = (mse, perceptual);
}
