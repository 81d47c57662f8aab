//! Sanity check of the score's direction: a real first-pass method against
//! two deliberately bad ones (donor blend and blurred noise) on the same
//! masks. A useful score ranks the real method best.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inpaint::{BackendKind, BackendSpec, DegradeNoiseParams};
use crate::metrics::{Orientation, SubMetric};

use super::record::{EvalRecord, Score};
use super::{run, EvalConfig, RunOptions, RunOutcome};

pub const NATURAL: &str = "natural";
pub const BLEND: &str = "blend";
pub const NOISE: &str = "noise";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SynthOptions {
    pub noise: DegradeNoiseParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    /// Mean D over records with a finite D.
    pub mean_d: Option<Score>,
    pub count: usize,
    pub inf_count: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub metric: SubMetric,
    pub orientation: Orientation,
    pub variants: Vec<VariantSummary>,
    pub natural_beats_blend: bool,
    pub natural_beats_noise: bool,
}

impl SynthReport {
    pub fn ordering_holds(&self) -> bool {
        self.natural_beats_blend && self.natural_beats_noise
    }

    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == name)
    }

    pub fn verdict(&self) -> String {
        let rel = match self.orientation {
            Orientation::LowerIsBetter => "<",
            Orientation::HigherIsBetter => ">",
        };
        let mark = |ok: bool| if ok { "holds" } else { "VIOLATED" };
        format!(
            "verdict: {} (NATURAL {rel} BLEND {}, NATURAL {rel} NOISE {})",
            if self.ordering_holds() { "PASS" } else { "FAIL" },
            mark(self.natural_beats_blend),
            mark(self.natural_beats_noise),
        )
    }
}

/// Replaces the first-pass methods of `cfg` with the three variants: the
/// first configured backend as NATURAL, the blend and the noise
/// degradations.
pub fn synth_config(cfg: &EvalConfig, opts: &SynthOptions) -> Result<EvalConfig> {
    let natural = cfg
        .first
        .first()
        .ok_or_else(|| Error::Config("validate-synth needs a first-pass backend".into()))?;
    opts.noise.validate()?;
    Ok(EvalConfig {
        first: vec![
            BackendSpec::named(NATURAL, natural.kind.clone()),
            BackendSpec::named(BLEND, BackendKind::Blend),
            BackendSpec::named(
                NOISE,
                BackendKind::Noise {
                    sigma: opts.noise.sigma,
                    down_factor: opts.noise.down_factor,
                },
            ),
        ],
        precomputed: Vec::new(),
        ..cfg.clone()
    })
}

/// Per-variant mean D and the ordering verdict, computed from records.
pub fn synth_summary(records: &[EvalRecord], metric: SubMetric) -> Result<SynthReport> {
    let variants: Vec<VariantSummary> = [NATURAL, BLEND, NOISE]
        .iter()
        .map(|&name| {
            let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.method == name).collect();
            let finite: Vec<f64> = mine
                .iter()
                .filter_map(|r| r.d)
                .map(|s| s.0)
                .filter(|v| v.is_finite())
                .collect();
            VariantSummary {
                variant: name.to_string(),
                mean_d: (!finite.is_empty())
                    .then(|| Score(finite.iter().sum::<f64>() / finite.len() as f64)),
                count: finite.len(),
                inf_count: mine
                    .iter()
                    .filter_map(|r| r.d)
                    .filter(|s| s.0.is_infinite())
                    .count(),
                failed: mine.iter().filter(|r| !r.is_ok()).count(),
            }
        })
        .collect();
    let mean = |i: usize| variants[i].mean_d.map(|s| s.0).ok_or(Error::NoRecords);
    let orientation = metric.orientation();
    let natural = mean(0)?;
    let beats = |other: Result<f64>| other.map(|o| orientation.better(natural, o));
    Ok(SynthReport {
        metric,
        orientation,
        natural_beats_blend: beats(mean(1))?,
        natural_beats_noise: beats(mean(2))?,
        variants,
    })
}

/// Runs the three variants over the corpus and summarizes them.
pub fn validate_synth(
    cfg: &EvalConfig,
    opts: &SynthOptions,
    run_opts: &RunOptions,
) -> Result<(SynthReport, RunOutcome)> {
    let synth = synth_config(cfg, opts)?;
    let outcome = run(&synth, run_opts)?;
    let report = synth_summary(&outcome.records, synth.metric)?;
    Ok((report, outcome))
}
