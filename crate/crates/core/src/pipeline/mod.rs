//! The multi-pass evaluation.
//!
//! For an image X and a first-pass method F₁: draw a free-form mask M₁,
//! inpaint `X̂₁ = F₁(X ⊙ M₁, M₁)`, then for k = 1..K draw a patch mask Mₚᵏ,
//! form `M₂ᵏ = 1 − (1 − Mₚᵏ) ⊙ M₁`, re-inpaint `X̂₂ᵏ = F₂(X̂₁ ⊙ M₂ᵏ, M₂ᵏ)`
//! and average `d(X̂₁, X̂₂ᵏ)` over k.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{apply_mask, ensure_dims, BinaryMask, ImageBuffer};
use crate::inpaint::{inpaint, BackendSpec, InpaintRequest, Inpainter};
use crate::maskgen::{
    compose_second_mask, default_patch_size, patch_mask, random_mask, validate_band,
    PatchMaskParams, RandomMaskParams,
};
use crate::metrics::{PerceptualSpec, Scorer, SubMetric};
use crate::seed::{unit_f64, SeedHasher};

mod corpus;
mod record;
mod run;
mod synth;

pub use corpus::{list_ids, Corpus};
pub use record::{read_records, sort_records, write_records, EvalRecord, RecordError, Score};
pub use run::{run, RunOptions, RunOutcome, DEFAULT_HTTP_TIMEOUT_MS};
pub use synth::{
    synth_config, synth_summary, validate_synth, SynthOptions, SynthReport, VariantSummary, BLEND,
    NATURAL, NOISE,
};

/// Which pair of images the sub-metric compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `d(X, X̂₁)`.
    OrigFirst,
    /// `mean_k d(X, X̂₂ᵏ)`.
    OrigSecond,
    /// `mean_k d(X̂₁, X̂₂ᵏ)`; needs no original.
    FirstSecond,
}

impl Objective {
    pub const ALL: [Objective; 3] = [
        Objective::OrigFirst,
        Objective::OrigSecond,
        Objective::FirstSecond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::OrigFirst => "orig_first",
            Objective::OrigSecond => "orig_second",
            Objective::FirstSecond => "first_second",
        }
    }

    pub fn needs_original(self) -> bool {
        self != Objective::FirstSecond
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "orig_first" | "original_first" | "0_to_1" => Ok(Objective::OrigFirst),
            "orig_second" | "original_second" | "0_to_2" => Ok(Objective::OrigSecond),
            "first_second" | "1_to_2" => Ok(Objective::FirstSecond),
            _ => Err(Error::Config(format!("unknown objective `{s}`"))),
        }
    }
}

/// Masked-patch probability of the second-pass masks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SecondMask {
    /// The same probability for every k.
    Ratio(f64),
    /// A probability drawn uniformly from the band for each k.
    Band([f64; 2]),
}

impl Default for SecondMask {
    fn default() -> Self {
        SecondMask::Ratio(0.4)
    }
}

impl SecondMask {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SecondMask::Ratio(p) => validate_band([p, p]),
            SecondMask::Band(b) => validate_band(b),
        }
    }

    /// Probability used for the pass keyed by `seed`.
    pub fn prob(&self, seed: u64) -> f64 {
        match *self {
            SecondMask::Ratio(p) => p,
            SecondMask::Band([lo, hi]) => {
                lo + (hi - lo) * unit_f64(SeedHasher::new(seed).str("ratio").finish())
            }
        }
    }
}

/// First-pass results supplied on disk instead of by a backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecomputedMethod {
    pub name: String,
    pub dir: PathBuf,
}

/// Run parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Directory of original images.
    pub corpus: Option<PathBuf>,
    /// First-pass methods run by the harness.
    pub first: Vec<BackendSpec>,
    /// First-pass methods whose outputs already exist.
    pub precomputed: Vec<PrecomputedMethod>,
    /// Re-inpainting method.
    pub second: BackendSpec,
    /// Masked-fraction band of the first mask.
    pub first_band: Option<[f64; 2]>,
    /// Generator parameters for the first mask. Unset means the defaults
    /// scaled to each image's size.
    pub first_mask: Option<RandomMaskParams>,
    pub second_mask: SecondMask,
    /// Unset means 32 px scaled from 512 px to the image's smaller side.
    pub patch_size: Option<usize>,
    pub k: usize,
    pub metric: SubMetric,
    pub perceptual: PerceptualSpec,
    pub objectives: Vec<Objective>,
    pub run_seed: u64,
    /// Seed for picking blend donors; defaults to `run_seed`.
    pub donor_seed: Option<u64>,
    /// Store wall-clock time per record. Off by default so that records are
    /// reproducible byte for byte.
    pub record_timing: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            first: Vec::new(),
            precomputed: Vec::new(),
            second: BackendSpec::diffusion(),
            first_band: Some([0.2, 0.4]),
            first_mask: None,
            second_mask: SecondMask::default(),
            patch_size: None,
            k: 10,
            metric: SubMetric::Perceptual,
            perceptual: PerceptualSpec::default(),
            objectives: vec![Objective::FirstSecond],
            run_seed: 0,
            donor_seed: None,
            record_timing: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.objectives.is_empty() {
            return bad("at least one objective is required");
        }
        if self.first.is_empty() && self.precomputed.is_empty() {
            return bad("no first-pass method configured");
        }
        if !self.first.is_empty() && self.corpus.is_none() {
            return bad("first-pass backends need a corpus of originals");
        }
        if self.patch_size == Some(0) {
            return bad("patch_size must be at least 1");
        }
        if let Some(b) = self.first_band {
            validate_band(b).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(p) = &self.first_mask {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.second_mask
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let names = self.method_names();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return bad("first-pass method names must be unique");
        }
        Ok(())
    }

    /// First-pass method names in configuration order.
    pub fn method_names(&self) -> Vec<String> {
        self.first
            .iter()
            .map(BackendSpec::display_name)
            .chain(self.precomputed.iter().map(|p| p.name.clone()))
            .collect()
    }
}

/// Seeds of one (image, method) work unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordSeeds {
    /// M₁; shared by every method so all of them fill the same hole.
    pub first_mask: u64,
    pub first: u64,
    /// Mₚᵏ.
    pub patches: Vec<u64>,
    /// F₂ call for pass k.
    pub second: Vec<u64>,
}

impl RecordSeeds {
    pub fn derive(run_seed: u64, image_id: &str, method: &str, k: usize) -> Self {
        let root = SeedHasher::new(run_seed);
        let patches: Vec<u64> = (0..k as u64)
            .map(|i| root.str(image_id).str(method).u64(i).finish())
            .collect();
        Self {
            first_mask: root.str("first_mask").str(image_id).finish(),
            first: root.str("first").str(image_id).str(method).finish(),
            second: patches
                .iter()
                .map(|&s| SeedHasher::new(s).str("second").finish())
                .collect(),
            patches,
        }
    }
}

pub struct FirstPass {
    pub mask: BinaryMask,
    pub inpainted: ImageBuffer,
}

pub struct SecondPass {
    pub patch_seed: u64,
    pub mask_prob: f64,
    pub mask: BinaryMask,
    pub inpainted: ImageBuffer,
}

pub struct Consistency {
    pub passes: Vec<SecondPass>,
    /// `d(X̂₁, X̂₂ᵏ)` in pass order.
    pub distances: Vec<f64>,
    pub d: f64,
}

/// Mean that does not depend on the order of `values`: the sum runs over a
/// sorted copy.
pub fn order_free_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// Resolved, ready-to-run evaluation settings shared by every work unit.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub second: Arc<dyn Inpainter>,
    pub scorer: Scorer,
    pub k: usize,
    pub first_band: Option<[f64; 2]>,
    pub first_mask: Option<RandomMaskParams>,
    pub second_mask: SecondMask,
    pub patch_size: Option<usize>,
}

impl Evaluator {
    pub fn new(second: Arc<dyn Inpainter>, scorer: Scorer, k: usize) -> Self {
        let defaults = EvalConfig::default();
        Self {
            second,
            scorer,
            k,
            first_band: defaults.first_band,
            first_mask: None,
            second_mask: defaults.second_mask,
            patch_size: None,
        }
    }

    pub fn from_config(cfg: &EvalConfig, http_timeout_ms: u64) -> Result<Self> {
        cfg.validate()?;
        let perceptual = if cfg.metric == SubMetric::Perceptual {
            cfg.perceptual.load()?
        } else {
            Default::default()
        };
        Ok(Self {
            second: cfg.second.build(http_timeout_ms)?,
            scorer: Scorer::with_perceptual(cfg.metric, perceptual),
            k: cfg.k,
            first_band: cfg.first_band,
            first_mask: cfg.first_mask.clone(),
            second_mask: cfg.second_mask,
            patch_size: cfg.patch_size,
        })
    }

    pub fn first_mask_params(&self, w: usize, h: usize) -> RandomMaskParams {
        let params = match &self.first_mask {
            Some(p) => p.clone(),
            None => RandomMaskParams::scaled_for(w, h),
        };
        match self.first_band {
            Some(b) => params.with_band(Some(b)),
            None => params,
        }
    }

    pub fn patch_size_for(&self, w: usize, h: usize) -> usize {
        self.patch_size
            .unwrap_or_else(|| default_patch_size(w, h))
    }

    /// Draws M₁ and runs F₁ on `X ⊙ M₁`. The request carries X itself, for
    /// the oracle and degradation backends, and the optional blend donor.
    pub fn first_pass(
        &self,
        original: &ImageBuffer,
        f1: &dyn Inpainter,
        mask_seed: u64,
        seed: u64,
        donor: Option<&ImageBuffer>,
    ) -> Result<FirstPass> {
        let (w, h) = original.dims();
        let mask = random_mask(w, h, &self.first_mask_params(w, h), mask_seed)?;
        let masked = apply_mask(original, &mask)?;
        let mut req = InpaintRequest::new(&masked, &mask, seed).with_original(original);
        if let Some(d) = donor {
            req = req.with_donor(d);
        }
        let inpainted = inpaint(f1, &req)?;
        Ok(FirstPass { mask, inpainted })
    }

    /// The K re-inpaintings of `first` (X̂₁) under masks composed with
    /// `first_mask` (M₁). `seeds` pairs a patch-mask seed with an F₂ seed.
    /// X̂₁ is the unmasked image of these requests, so an oracle F₂ echoes
    /// it back.
    pub fn second_passes(
        &self,
        first: &ImageBuffer,
        first_mask: &BinaryMask,
        seeds: &[(u64, u64)],
    ) -> Result<Vec<SecondPass>> {
        ensure_dims(first.dims(), first_mask.dims())?;
        let (w, h) = first.dims();
        let patch_size = self.patch_size_for(w, h);
        seeds
            .iter()
            .map(|&(patch_seed, f2_seed)| {
                let mask_prob = self.second_mask.prob(patch_seed);
                let patch = patch_mask(
                    w,
                    h,
                    &PatchMaskParams {
                        patch_size,
                        mask_prob,
                    },
                    patch_seed,
                )?;
                let mask = compose_second_mask(&patch, first_mask)?;
                if first_mask
                    .keep_flags()
                    .iter()
                    .zip(mask.keep_flags())
                    .any(|(&k1, &k2)| !k1 && !k2)
                {
                    return Err(Error::BadParams(
                        "second mask re-masks a first-pass pixel".into(),
                    ));
                }
                let masked = apply_mask(first, &mask)?;
                let req = InpaintRequest::new(&masked, &mask, f2_seed).with_original(first);
                let inpainted = inpaint(self.second.as_ref(), &req)?;
                Ok(SecondPass {
                    patch_seed,
                    mask_prob,
                    mask,
                    inpainted,
                })
            })
            .collect()
    }

    /// `D = (1/K) Σ d(X̂₁, X̂₂ᵏ)`, with the per-pass details.
    pub fn consistency_score(
        &self,
        first: &ImageBuffer,
        first_mask: &BinaryMask,
        seeds: &[(u64, u64)],
    ) -> Result<Consistency> {
        if seeds.is_empty() {
            return Err(Error::BadParams("need at least one second pass".into()));
        }
        let passes = self.second_passes(first, first_mask, seeds)?;
        let distances = passes
            .iter()
            .map(|p| self.scorer.score(first, &p.inpainted))
            .collect::<Result<Vec<_>>>()?;
        Ok(Consistency {
            d: order_free_mean(&distances),
            passes,
            distances,
        })
    }
}

/// Scores the requested objectives. `original` may be absent when only
/// [`Objective::FirstSecond`] is requested.
pub fn objective_scores(
    original: Option<&ImageBuffer>,
    first: &ImageBuffer,
    second: &[ImageBuffer],
    scorer: &Scorer,
    objectives: &[Objective],
) -> Result<BTreeMap<Objective, f64>> {
    let mut out = BTreeMap::new();
    for &obj in objectives {
        let v = match obj {
            Objective::OrigFirst => scorer.score(original.ok_or(Error::MissingOriginal)?, first)?,
            Objective::OrigSecond => {
                let x = original.ok_or(Error::MissingOriginal)?;
                mean_over(second, |x2| scorer.score(x, x2))?
            }
            Objective::FirstSecond => mean_over(second, |x2| scorer.score(first, x2))?,
        };
        out.insert(obj, v);
    }
    Ok(out)
}

fn mean_over(
    images: &[ImageBuffer],
    f: impl Fn(&ImageBuffer) -> Result<f64>,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::BadParams("need at least one second-pass image".into()));
    }
    let v = images.iter().map(f).collect::<Result<Vec<_>>>()?;
    Ok(order_free_mean(&v))
}
