//! Inpainting backends.
//!
//! Every backend maps `(masked image, mask, seed)` to a full image. The
//! [`inpaint`] entry point validates dimensions and re-imposes the KEEP
//! region from the input afterwards, so callers can rely on
//! `output|KEEP == input|KEEP` regardless of what the backend did.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ensure_dims, BinaryMask, ImageBuffer, CHANNELS};

mod builtin;
mod degrade;
#[cfg(feature = "external")]
mod external;

pub use builtin::{
    builtin_diffusion, builtin_mean_fill, DiffusionOutput, DiffusionParams, FillOutput,
};
pub use degrade::{blurred_noise, degrade_blend, degrade_noise, DegradeNoiseParams};
#[cfg(feature = "external")]
pub use external::{HttpBackend, HttpOptions, SubprocessBackend, SubprocessOptions};

/// One inpainting call.
#[derive(Clone, Copy, Debug)]
pub struct InpaintRequest<'a> {
    /// Input with MASKED pixels already zeroed.
    pub masked: &'a ImageBuffer,
    pub mask: &'a BinaryMask,
    pub seed: u64,
    /// The image before masking. Only oracle and degradation backends look
    /// at it.
    pub original: Option<&'a ImageBuffer>,
    /// Replacement content for the blend degradation.
    pub donor: Option<&'a ImageBuffer>,
}

impl<'a> InpaintRequest<'a> {
    pub fn new(masked: &'a ImageBuffer, mask: &'a BinaryMask, seed: u64) -> Self {
        Self {
            masked,
            mask,
            seed,
            original: None,
            donor: None,
        }
    }

    pub fn with_original(mut self, original: &'a ImageBuffer) -> Self {
        self.original = Some(original);
        self
    }

    pub fn with_donor(mut self, donor: &'a ImageBuffer) -> Self {
        self.donor = Some(donor);
        self
    }
}

pub trait Inpainter: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;

    /// Raw backend call; use [`inpaint`] to get the validated result.
    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer>;
}

/// Runs `backend` and enforces the output contract: same dimensions as the
/// input, KEEP pixels copied from the input.
pub fn inpaint(backend: &dyn Inpainter, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
    ensure_dims(req.masked.dims(), req.mask.dims())?;
    for extra in [req.original, req.donor].into_iter().flatten() {
        ensure_dims(req.masked.dims(), extra.dims())?;
    }
    if req.mask.masked_count() == 0 {
        return Ok(req.masked.clone());
    }
    let out = backend.run(req)?;
    if out.dims() != req.masked.dims() {
        return Err(Error::ProtocolViolation(format!(
            "{} returned {}x{} for a {}x{} input",
            backend.name(),
            out.width(),
            out.height(),
            req.masked.width(),
            req.masked.height()
        )));
    }
    Ok(restore_keep(out, req.masked, req.mask))
}

pub(crate) fn restore_keep(out: ImageBuffer, input: &ImageBuffer, mask: &BinaryMask) -> ImageBuffer {
    let (w, h) = out.dims();
    let mut data = out.into_data();
    for (i, &keep) in mask.keep_flags().iter().enumerate() {
        if keep {
            let px = i * CHANNELS;
            data[px..px + CHANNELS].copy_from_slice(&input.data()[px..px + CHANNELS]);
        }
    }
    ImageBuffer::from_vec(w, h, data).expect("dimensions unchanged")
}

/// Built-in backends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    /// Returns the unmasked image it was given; a perfect inpainter.
    #[serde(alias = "echo")]
    Oracle,
    MeanFill,
    Diffusion {
        #[serde(default)]
        max_iters: Option<usize>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Diffusion plus seeded blurred noise in the hole, a stand-in for a
    /// stochastic generative model.
    Jitter {
        #[serde(default = "default_jitter_amplitude")]
        amplitude: f64,
        #[serde(default = "default_jitter_factor")]
        down_factor: usize,
    },
    /// Fills the hole from a donor image.
    Blend,
    /// Original plus blurred Gaussian noise in the hole.
    Noise {
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_down_factor")]
        down_factor: usize,
    },
    Http {
        url: String,
        #[serde(flatten)]
        options: ExternalOptions,
    },
    Subprocess {
        command: String,
        #[serde(flatten)]
        options: ExternalOptions,
    },
}

fn default_tol() -> f64 {
    DiffusionParams::default().tol
}

fn default_sigma() -> f64 {
    DegradeNoiseParams::default().sigma
}

fn default_down_factor() -> usize {
    DegradeNoiseParams::default().down_factor
}

fn default_jitter_amplitude() -> f64 {
    0.05
}

fn default_jitter_factor() -> usize {
    4
}

/// Knobs shared by the external clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalOptions {
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: Option<u64>,
    pub max_inflight: usize,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        Self {
            retries: 2,
            backoff_ms: 200,
            timeout_ms: None,
            max_inflight: 4,
        }
    }
}

/// Named backend as written in a run config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: BackendKind,
}

impl BackendSpec {
    pub fn new(kind: BackendKind) -> Self {
        Self { name: None, kind }
    }

    pub fn named(name: impl Into<String>, kind: BackendKind) -> Self {
        Self {
            name: Some(name.into()),
            kind,
        }
    }

    pub fn diffusion() -> Self {
        Self::new(BackendKind::Diffusion {
            max_iters: None,
            tol: default_tol(),
        })
    }

    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.kind {
            BackendKind::Oracle => "oracle".into(),
            BackendKind::MeanFill => "mean_fill".into(),
            BackendKind::Diffusion { .. } => "diffusion".into(),
            BackendKind::Jitter { .. } => "jitter".into(),
            BackendKind::Blend => "blend".into(),
            BackendKind::Noise { .. } => "noise".into(),
            BackendKind::Http { .. } => "http".into(),
            BackendKind::Subprocess { .. } => "subprocess".into(),
        }
    }

    /// Default request timeout for external backends that do not set one.
    pub fn build(&self, default_timeout_ms: u64) -> Result<Arc<dyn Inpainter>> {
        let name = self.display_name();
        let backend: Arc<dyn Inpainter> = match &self.kind {
            BackendKind::Oracle => Arc::new(builtin::Oracle { name }),
            BackendKind::MeanFill => Arc::new(builtin::MeanFill { name }),
            BackendKind::Diffusion { max_iters, tol } => {
                let params = DiffusionParams {
                    max_iters: *max_iters,
                    tol: *tol,
                };
                params.validate()?;
                Arc::new(builtin::Diffusion { name, params })
            }
            BackendKind::Jitter {
                amplitude,
                down_factor,
            } => {
                let noise = DegradeNoiseParams {
                    sigma: *amplitude,
                    down_factor: *down_factor,
                };
                noise.validate()?;
                Arc::new(builtin::Jitter {
                    name,
                    diffusion: DiffusionParams::default(),
                    noise,
                })
            }
            BackendKind::Blend => Arc::new(degrade::Blend { name }),
            BackendKind::Noise { sigma, down_factor } => {
                let params = DegradeNoiseParams {
                    sigma: *sigma,
                    down_factor: *down_factor,
                };
                params.validate()?;
                Arc::new(degrade::Noise { name, params })
            }
            #[cfg(feature = "external")]
            BackendKind::Http { url, options } => Arc::new(HttpBackend::new(
                name,
                url,
                HttpOptions::from_options(options, default_timeout_ms),
            )?),
            #[cfg(feature = "external")]
            BackendKind::Subprocess { command, options } => Arc::new(SubprocessBackend::new(
                name,
                command,
                SubprocessOptions::from_options(options, default_timeout_ms),
            )?),
            #[cfg(not(feature = "external"))]
            BackendKind::Http { .. } | BackendKind::Subprocess { .. } => {
                let _ = default_timeout_ms;
                return Err(Error::Config(
                    "external backends need the `external` feature".into(),
                ));
            }
        };
        Ok(backend)
    }
}
