//! ONNX-backed perceptual distance (LPIPS-style models exported to ONNX).

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use tract_onnx::prelude::*;

use super::perceptual::ExternalDistance;
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, CHANNELS};

type Plan = Arc<TypedRunnableModel>;

pub(crate) struct OnnxPerceptual {
    path: String,
    model: InferenceModel,
    // one optimized plan per input resolution
    plans: Mutex<HashMap<(usize, usize), Plan>>,
}

impl std::fmt::Debug for OnnxPerceptual {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxPerceptual")
            .field("path", &self.path)
            .finish_non_exhaustive()
    }
}

impl OnnxPerceptual {
    pub(crate) fn load(path: &Path) -> Result<Self> {
        let load_err = |e: TractError| Error::ModelLoad(format!("{}: {e}", path.display()));
        let model = tract_onnx::onnx().model_for_path(path).map_err(load_err)?;
        let inputs = model.input_outlets().map_err(load_err)?.len();
        if inputs != 2 {
            return Err(Error::ModelLoad(format!(
                "{}: expected 2 inputs, found {inputs}",
                path.display()
            )));
        }
        Ok(Self {
            path: path.display().to_string(),
            model,
            plans: Mutex::new(HashMap::new()),
        })
    }

    fn plan(&self, w: usize, h: usize) -> Result<Plan> {
        let mut plans = self.plans.lock().expect("plan cache poisoned");
        if let Some(p) = plans.get(&(w, h)) {
            return Ok(p.clone());
        }
        let err = |e: TractError| Error::ModelLoad(format!("{}: {e}", self.path));
        let fact = f32::fact([1, CHANNELS, h, w]);
        let plan = self
            .model
            .clone()
            .with_input_fact(0, fact.clone().into())
            .and_then(|m| m.with_input_fact(1, fact.into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(err)?;
        plans.insert((w, h), plan.clone());
        Ok(plan)
    }
}

fn to_tensor(img: &ImageBuffer) -> Tensor {
    let (w, h) = img.dims();
    let data = img.data();
    tract_ndarray::Array4::from_shape_fn((1, CHANNELS, h, w), |(_, c, y, x)| {
        data[(y * w + x) * CHANNELS + c] * 2.0 - 1.0
    })
    .into_tensor()
}

impl OnnxPerceptual {
    fn run_once(&self, plan: &Plan, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
        let err = |e: TractError| Error::BackendFailure(format!("{}: {e}", self.path));
        let out = plan
            .run(tvec!(to_tensor(a).into(), to_tensor(b).into()))
            .map_err(err)?;
        let first = out
            .first()
            .ok_or_else(|| Error::BackendFailure(format!("{}: model has no output", self.path)))?;
        let view = first.to_plain_array_view::<f32>().map_err(err)?;
        view.iter()
            .next()
            .map(|&v| v as f64)
            .ok_or_else(|| Error::BackendFailure(format!("{}: empty output", self.path)))
    }
}

impl ExternalDistance for OnnxPerceptual {
    /// Mean of both argument orders, so the distance is symmetric even if
    /// the model is not.
    fn distance(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
        let (w, h) = a.dims();
        let plan = self.plan(w, h)?;
        Ok((self.run_once(&plan, a, b)? + self.run_once(&plan, b, a)?) / 2.0)
    }
}
