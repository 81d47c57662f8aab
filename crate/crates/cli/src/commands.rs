use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use chrono::{SecondsFormat, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use reinpaint_core::desk::write_desk_corpus;
use reinpaint_core::image::{apply_mask, load_image, load_mask, save_image, save_mask};
use reinpaint_core::inpaint::{
    inpaint, BackendKind, BackendSpec, DegradeNoiseParams, ExternalOptions, InpaintRequest,
};
use reinpaint_core::maskgen::{
    default_patch_size, mask_ratio, patch_mask, random_mask, PatchMaskParams, RandomMaskParams,
};
use reinpaint_core::metrics::{Orientation, SubMetric};
use reinpaint_core::pipeline::{
    read_records, run, synth_config, synth_summary, EvalConfig, Objective, RunOptions,
    SynthOptions, DEFAULT_HTTP_TIMEOUT_MS,
};
use reinpaint_core::report::{aggregate, emit, to_text, Format, ReportOptions, StdKind};
use reinpaint_core::seed::SeedHasher;
use reinpaint_core::Error;

use crate::config::{absolute, expand_matrix, load_value, parse_config, resolve_paths, set_key};
use crate::{
    EvalFlags, EvaluateArgs, GenCorpusArgs, GenMasksArgs, InpaintArgs, MaskKind, ReportArgs,
    SynthArgs,
};

pub const TIMEOUT_ENV: &str = "REINPAINT_HTTP_TIMEOUT_MS";

/// Some records of an otherwise completed run failed.
#[derive(Debug)]
pub struct FailedRecords(pub usize);

impl std::fmt::Display for FailedRecords {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} record(s) failed", self.0)
    }
}

impl std::error::Error for FailedRecords {}

/// `validate-synth --strict` and the ordering did not hold.
#[derive(Debug)]
pub struct OrderingViolated;

impl std::fmt::Display for OrderingViolated {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("synthetic ordering check failed")
    }
}

impl std::error::Error for OrderingViolated {}

/// 2 configuration/input, 3 backend, 4 i/o, 1 failed strict check.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. } | Error::UnsupportedFormat(_) => 4,
                Error::AllBackendsFailed => 3,
                e if e.is_backend() => 3,
                _ => 2,
            };
        }
        if cause.is::<FailedRecords>() {
            return 3;
        }
        if cause.is::<OrderingViolated>() {
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    2
}

/// The error and its causes, skipping causes already quoted by the message
/// above them.
pub fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let s = cause.to_string();
        if !msg.contains(&s) {
            msg.push_str(": ");
            msg.push_str(&s);
        }
    }
    msg
}

pub fn http_timeout_ms() -> Result<u64> {
    match std::env::var(TIMEOUT_ENV) {
        Ok(v) => Ok(v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{TIMEOUT_ENV}={v} is not a millisecond count")))?),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_HTTP_TIMEOUT_MS),
        Err(e) => bail!(Error::Config(format!("{TIMEOUT_ENV}: {e}"))),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))?;
    Ok(())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

// gen-masks

#[derive(Serialize)]
struct MaskEntry {
    file: String,
    seed: u64,
    ratio: f64,
}

#[derive(Serialize)]
struct MaskIndex {
    kind: &'static str,
    width: usize,
    height: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio_band: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    patch_size: Option<usize>,
    masks: Vec<MaskEntry>,
}

pub fn gen_masks(args: &GenMasksArgs) -> Result<()> {
    let (w, h) = args.size;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let mut index = MaskIndex {
        kind: "normal",
        width: w,
        height: h,
        seed: args.seed,
        ratio_band: None,
        mask_prob: None,
        patch_size: None,
        masks: Vec::with_capacity(args.count),
    };
    let draw: Box<dyn Fn(u64) -> reinpaint_core::Result<_>> = match args.kind {
        MaskKind::Normal => {
            if args.ratio.is_some() || args.patch_size.is_some() {
                bail!(Error::BadParams(
                    "--ratio and --patch-size apply to --kind patch".into()
                ));
            }
            let params = RandomMaskParams::scaled_for(w, h).with_band(args.ratio_band);
            index.ratio_band = args.ratio_band;
            Box::new(move |seed| random_mask(w, h, &params, seed))
        }
        MaskKind::Patch => {
            if args.ratio_band.is_some() {
                bail!(Error::BadParams("--ratio-band applies to --kind normal".into()));
            }
            let params = PatchMaskParams {
                patch_size: args.patch_size.unwrap_or_else(|| default_patch_size(w, h)),
                mask_prob: args.ratio.unwrap_or(0.4),
            };
            params.validate()?;
            index.kind = "patch";
            index.mask_prob = Some(params.mask_prob);
            index.patch_size = Some(params.patch_size);
            Box::new(move |seed| patch_mask(w, h, &params, seed))
        }
    };
    for i in 0..args.count {
        let seed = SeedHasher::new(args.seed).u64(i as u64).finish();
        let mask = draw(seed)?;
        let file = format!("mask_{i:04}.png");
        save_mask(&mask, args.out.join(&file))?;
        index.masks.push(MaskEntry {
            file,
            seed,
            ratio: mask_ratio(&mask),
        });
    }
    write_json(&args.out.join("index.json"), &index)?;
    println!("wrote {} masks to {}", args.count, args.out.display());
    Ok(())
}

// gen-corpus

pub fn gen_corpus(args: &GenCorpusArgs) -> Result<()> {
    let (w, h) = args.size;
    let ids = write_desk_corpus(&args.out, args.count, w, h, args.seed)?;
    println!("wrote {} images to {}", ids.len(), args.out.display());
    Ok(())
}

// inpaint

/// A builtin name (`diffusion`, `mean-fill`, ...), an `http(s)://` URL or a
/// JSON backend spec.
pub fn parse_backend(s: &str) -> Result<BackendSpec> {
    let t = s.trim();
    let spec = if t.starts_with('{') {
        serde_json::from_str(t).map_err(|e| Error::Config(format!("backend spec: {e}")))?
    } else if t.starts_with("http://") || t.starts_with("https://") {
        BackendSpec::new(BackendKind::Http {
            url: t.to_string(),
            options: ExternalOptions::default(),
        })
    } else {
        serde_json::from_value(json!({ "kind": t.replace('-', "_") }))
            .map_err(|_| Error::Config(format!("unknown backend `{t}`")))?
    };
    Ok(spec)
}

pub fn inpaint_cmd(args: &InpaintArgs, timeout_ms: u64) -> Result<()> {
    let spec = parse_backend(&args.backend)?;
    let backend = spec.build(timeout_ms)?;
    let image = load_image(&args.image)?;
    let mask = load_mask(&args.mask)?;
    let masked = apply_mask(&image, &mask)?;
    let donor = args.donor.as_deref().map(load_image).transpose()?;
    let mut req = InpaintRequest::new(&masked, &mask, args.seed).with_original(&image);
    if let Some(d) = &donor {
        req = req.with_donor(d);
    } else if matches!(spec.kind, BackendKind::Blend) {
        bail!(Error::Config("the blend backend needs --donor".into()));
    }
    let out = inpaint(backend.as_ref(), &req)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    save_image(&out, &args.out)?;
    info!(
        "{} filled {:.1}% of {}",
        backend.name(),
        100.0 * mask_ratio(&mask),
        args.image.display()
    );
    Ok(())
}

// evaluate / validate-synth

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_path: Option<PathBuf>,
    /// Fully resolved configuration, every default spelled out.
    pub config: Value,
    pub output_dir: PathBuf,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub exit_code: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.jsonl";

impl RunManifest {
    fn start(command: &str, config_path: Option<&Path>, cfg: &EvalConfig, dir: &Path) -> Result<Self> {
        let m = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            config: serde_json::to_value(cfg)?,
            output_dir: absolute(dir),
            started_at: now(),
            finished_at: None,
            exit_code: None,
            error: None,
        };
        m.write(dir)?;
        Ok(m)
    }

    fn finish(mut self, dir: &Path, err: Option<&anyhow::Error>) -> Result<()> {
        self.finished_at = Some(now());
        self.exit_code = Some(err.map_or(0, exit_code));
        self.error = err.map(describe);
        self.write(dir)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), self)
    }
}

fn apply_flags(value: &mut Value, flags: &EvalFlags) -> Result<()> {
    if !flags.objective.is_empty() {
        set_key(value, "objectives", serde_json::to_value(&flags.objective)?)?;
    }
    if let Some(seed) = flags.seed {
        set_key(value, "run_seed", json!(seed))?;
    }
    if let Some(k) = flags.k {
        set_key(value, "k", json!(k))?;
    }
    if let Some(metric) = flags.metric {
        set_key(value, "metric", serde_json::to_value(metric)?)?;
    }
    if let Some(corpus) = &flags.corpus {
        set_key(value, "corpus", json!(absolute(corpus)))?;
    }
    Ok(())
}

fn run_options(flags: &EvalFlags, dir: &Path, resume: bool, timeout_ms: u64) -> RunOptions {
    RunOptions {
        workers: flags.workers.unwrap_or(0),
        http_timeout_ms: timeout_ms,
        records_path: Some(dir.join(RECORDS)),
        resume,
    }
}

fn formats(requested: &[Format]) -> Vec<Format> {
    if requested.is_empty() {
        Format::ALL.to_vec()
    } else {
        requested.to_vec()
    }
}

fn load_config_file(path: &Path) -> Result<(PathBuf, Value)> {
    let path = absolute(path);
    let mut value = load_value(&path)?;
    resolve_paths(&mut value, path.parent().unwrap_or(Path::new("/")));
    Ok((path, value))
}

pub fn evaluate(args: &EvaluateArgs, timeout_ms: u64) -> Result<()> {
    let (config_path, value) = load_config_file(&args.config)?;
    let runs = expand_matrix(value)?;
    // check every combination before spending time on any of them
    let mut planned = Vec::with_capacity(runs.len());
    for r in runs {
        let mut config = r.config;
        apply_flags(&mut config, &args.flags)?;
        let cfg = parse_config(&config).map_err(|e| {
            if r.name.is_empty() {
                e
            } else {
                e.context(format!("matrix {}", r.name))
            }
        })?;
        planned.push((r.name, r.overrides, cfg));
    }
    let formats = formats(&args.format);
    let mut failed = 0;
    let mut index = Vec::new();
    for (name, overrides, cfg) in &planned {
        let dir = if name.is_empty() {
            args.out.clone()
        } else {
            args.out.join(name)
        };
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let manifest = RunManifest::start("evaluate", Some(&config_path), cfg, &dir)?;
        let result = evaluate_one(cfg, &manifest.config, &dir, args, timeout_ms, &formats);
        manifest.finish(&dir, result.as_ref().err())?;
        let run_failed = result?;
        if !name.is_empty() {
            index.push(json!({"run": name, "overrides": overrides, "failed": run_failed}));
        }
        failed += run_failed;
    }
    if !index.is_empty() {
        write_json(&args.out.join("matrix.json"), &index)?;
    }
    if failed > 0 {
        bail!(FailedRecords(failed));
    }
    Ok(())
}

fn evaluate_one(
    cfg: &EvalConfig,
    snapshot: &Value,
    dir: &Path,
    args: &EvaluateArgs,
    timeout_ms: u64,
    formats: &[Format],
) -> Result<usize> {
    let outcome = run(cfg, &run_options(&args.flags, dir, args.resume, timeout_ms))?;
    let failed = outcome.records.len() - outcome.ok_count();
    for r in outcome.failed() {
        if let Some(e) = &r.error {
            warn!("{} / {}: {}: {}", r.image_id, r.method, e.kind, e.message);
        }
    }
    let report = aggregate(
        &outcome.records,
        &ReportOptions {
            std_kind: std_kind(args.sample_std),
            config: Some(snapshot.clone()),
            ..Default::default()
        },
    )?;
    emit(&report, dir, "report", formats)?;
    if outcome.reused > 0 {
        info!("reused {} records", outcome.reused);
    }
    print!("{}", to_text(&report));
    Ok(failed)
}

fn std_kind(sample: bool) -> StdKind {
    if sample {
        StdKind::Sample
    } else {
        StdKind::Population
    }
}

pub fn validate_synth_cmd(args: &SynthArgs, timeout_ms: u64) -> Result<()> {
    let (config_path, mut value) = match &args.config {
        Some(p) => {
            let (path, value) = load_config_file(p)?;
            (Some(path), value)
        }
        None => (
            None,
            serde_json::to_value(EvalConfig {
                first: vec![BackendSpec::diffusion()],
                ..Default::default()
            })?,
        ),
    };
    if value.get("matrix").is_some() {
        bail!(Error::Config("validate-synth does not take a matrix".into()));
    }
    apply_flags(&mut value, &args.flags)?;
    if let Some(seed) = args.donor_seed {
        set_key(&mut value, "donor_seed", json!(seed))?;
    }
    let base = parse_config(&value)?;
    let defaults = DegradeNoiseParams::default();
    let opts = SynthOptions {
        noise: DegradeNoiseParams {
            sigma: args.sigma.unwrap_or(defaults.sigma),
            down_factor: args.down_factor.unwrap_or(defaults.down_factor),
        },
    };
    let cfg = synth_config(&base, &opts)?;
    let dir = &args.out;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = RunManifest::start("validate-synth", config_path.as_deref(), &cfg, dir)?;
    let result = (|| {
        let outcome = run(&cfg, &run_options(&args.flags, dir, false, timeout_ms))?;
        let report = synth_summary(&outcome.records, cfg.metric)?;
        write_json(&dir.join("synth.json"), &report)?;
        Ok((report, outcome.records.len() - outcome.ok_count()))
    })();
    let strict_fail = matches!(&result, Ok((r, _)) if args.strict && !r.ordering_holds());
    let strict_err = strict_fail.then(|| anyhow::Error::new(OrderingViolated));
    manifest.finish(dir, result.as_ref().err().or(strict_err.as_ref()))?;
    let (report, failed) = result?;
    let direction = match report.orientation {
        Orientation::LowerIsBetter => "lower is better",
        Orientation::HigherIsBetter => "higher is better",
    };
    println!("metric: {} ({direction})", report.metric.name());
    for v in &report.variants {
        let mean = v.mean_d.map_or("n/a".to_string(), |s| format!("{:.6}", s.0));
        println!(
            "{:<8} mean D = {mean}  (n = {}, inf = {}, failed = {})",
            v.variant.to_uppercase(),
            v.count,
            v.inf_count,
            v.failed
        );
    }
    println!("{}", report.verdict());
    if strict_fail {
        bail!(OrderingViolated);
    }
    if failed > 0 {
        bail!(FailedRecords(failed));
    }
    Ok(())
}

// report

pub fn report_cmd(args: &ReportArgs) -> Result<()> {
    if !args.records.is_file() {
        bail!(Error::Io {
            path: args.records.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such records file"),
        });
    }
    let (records, skipped) = read_records(&args.records)?;
    if skipped > 0 {
        warn!("skipped {skipped} unreadable line(s) in {}", args.records.display());
    }
    let dir = args
        .records
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let config = fs::read_to_string(dir.join(MANIFEST))
        .ok()
        .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
        .map(|m| m.config);
    let report = aggregate(
        &records,
        &ReportOptions {
            std_kind: std_kind(args.sample_std),
            bins: args.bins,
            skipped_lines: skipped,
            config,
        },
    )?;
    let out = args.out.clone().unwrap_or_else(|| dir.to_path_buf());
    emit(&report, &out, "report", &formats(&args.format))?;
    print!("{}", to_text(&report));
    Ok(())
}

pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("`{s}` is not WxH"))?;
    let dim = |v: &str| match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("`{v}` is not a positive size")),
    };
    Ok((dim(w)?, dim(h)?))
}

pub fn parse_band(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("`{s}` is not LO,HI"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([num(a)?, num(b)?])
}

pub fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn parse_metric(s: &str) -> Result<SubMetric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_and_band_parsing() {
        assert_eq!(parse_size("64x32"), Ok((64, 32)));
        assert!(parse_size("64").is_err());
        assert!(parse_size("0x3").is_err());
        assert_eq!(parse_band("0.1, 0.3"), Ok([0.1, 0.3]));
        assert!(parse_band("0.1").is_err());
    }

    #[test]
    fn backend_strings() {
        assert_eq!(parse_backend("mean-fill").unwrap().kind, BackendKind::MeanFill);
        assert_eq!(parse_backend("diffusion").unwrap(), BackendSpec::diffusion());
        assert!(matches!(
            parse_backend("http://localhost:1").unwrap().kind,
            BackendKind::Http { .. }
        ));
        let spec = parse_backend(r#"{"kind": "noise", "sigma": 0.1, "name": "n"}"#).unwrap();
        assert_eq!(spec.display_name(), "n");
        assert!(parse_backend("nope").is_err());
    }

    #[test]
    fn exit_codes() {
        let code = |e: anyhow::Error| exit_code(&e);
        assert_eq!(code(Error::Config("x".into()).into()), 2);
        assert_eq!(code(Error::Timeout("x".into()).into()), 3);
        assert_eq!(code(Error::AllBackendsFailed.into()), 3);
        assert_eq!(code(anyhow::Error::new(FailedRecords(1)).context("run")), 3);
        assert_eq!(code(Error::UnsupportedFormat("x".into()).into()), 4);
        assert_eq!(code(anyhow::anyhow!("other")), 2);
    }
}
