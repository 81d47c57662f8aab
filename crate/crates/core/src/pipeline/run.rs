//! Corpus-level runs: one work unit per (image, first-pass method).

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::image::{ensure_dims, resize_bilinear, ImageBuffer};
use crate::inpaint::{BackendKind, Inpainter};
use crate::maskgen::mask_ratio;
use crate::seed::SeedHasher;

use super::record::{sort_records, write_records, EvalRecord, Score};
use super::{objective_scores, read_records, Corpus, EvalConfig, Evaluator, Objective, RecordSeeds};

/// Default request timeout for external backends, in milliseconds.
pub const DEFAULT_HTTP_TIMEOUT_MS: u64 = 120_000;

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Concurrent work units; 0 means one per available core.
    pub workers: usize,
    pub http_timeout_ms: u64,
    /// JSON-lines file receiving records as they complete. At the end it is
    /// rewritten in (image id, method) order.
    pub records_path: Option<PathBuf>,
    /// Keep successful records already in `records_path` and run only the
    /// missing or failed work units.
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 0,
            http_timeout_ms: DEFAULT_HTTP_TIMEOUT_MS,
            records_path: None,
            resume: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// All records, sorted by (image id, method).
    pub records: Vec<EvalRecord>,
    /// How many came from a previous run.
    pub reused: usize,
}

impl RunOutcome {
    pub fn failed(&self) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter(|r| !r.is_ok())
    }

    pub fn ok_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_ok()).count()
    }
}

enum Source {
    Backend {
        inpainter: Arc<dyn Inpainter>,
        needs_donor: bool,
    },
    Precomputed(Corpus),
}

struct Method {
    name: String,
    source: Source,
}

struct Context<'a> {
    cfg: &'a EvalConfig,
    evaluator: Evaluator,
    corpus: Option<Corpus>,
    methods: Vec<Method>,
    second_name: String,
}

/// Evaluates every configured method on every image. Failed work units
/// become records with an `error` and do not stop the run; if every unit
/// fails the records are still written and [`Error::AllBackendsFailed`] is
/// returned.
pub fn run(cfg: &EvalConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let ctx = Context::new(cfg, opts)?;
    let mut jobs: Vec<(String, usize)> = Vec::new();
    for (mi, m) in ctx.methods.iter().enumerate() {
        let ids = match &m.source {
            Source::Backend { .. } => ctx.corpus.as_ref().expect("validated").ids(),
            Source::Precomputed(c) => c.ids(),
        };
        jobs.extend(ids.iter().map(|id| (id.clone(), mi)));
    }
    if jobs.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut kept = Vec::new();
    if let (true, Some(path)) = (opts.resume, &opts.records_path) {
        if path.exists() {
            let wanted: HashSet<(&str, &str)> = jobs
                .iter()
                .map(|(id, mi)| (id.as_str(), ctx.methods[*mi].name.as_str()))
                .collect();
            let (previous, _) = read_records(path)?;
            let mut seen = HashSet::new();
            for r in previous {
                let key = (r.image_id.clone(), r.method.clone());
                if r.is_ok() && wanted.contains(&r.key()) && seen.insert(key) {
                    kept.push(r);
                }
            }
            log::info!("resuming: {} completed records kept", kept.len());
        }
    }
    let done: HashSet<(String, String)> = kept
        .iter()
        .map(|r| (r.image_id.clone(), r.method.clone()))
        .collect();
    jobs.retain(|(id, mi)| !done.contains(&(id.clone(), ctx.methods[*mi].name.clone())));

    let mut sink = match &opts.records_path {
        Some(path) => {
            let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            for r in &kept {
                writeln!(f, "{}", r.to_json_line()).map_err(|e| Error::io(path, e))?;
            }
            Some((path, f))
        }
        None => None,
    };

    let workers = match opts.workers {
        0 => thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let total = jobs.len();
    let mut fresh = Vec::with_capacity(total);
    thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (ctx, jobs, next) = (&ctx, &jobs, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((id, mi)) = jobs.get(i) else { break };
                if tx.send(ctx.evaluate(id, *mi)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            match &record.error {
                None => log::info!(
                    "[{}/{}] {} / {}: D = {}",
                    fresh.len() + 1,
                    total,
                    record.image_id,
                    record.method,
                    record.d.map_or(f64::NAN, |s| s.0)
                ),
                Some(e) => log::warn!(
                    "[{}/{}] {} / {} failed: {}",
                    fresh.len() + 1,
                    total,
                    record.image_id,
                    record.method,
                    e.message
                ),
            }
            if let Some((path, f)) = sink.as_mut() {
                writeln!(f, "{}", record.to_json_line()).map_err(|e| Error::io(*path, e))?;
                f.flush().map_err(|e| Error::io(*path, e))?;
            }
            fresh.push(record);
        }
        Ok(())
    })?;

    let reused = kept.len();
    let mut records = kept;
    records.extend(fresh);
    sort_records(&mut records);
    if let Some(path) = &opts.records_path {
        drop(sink);
        write_records(path, &records)?;
    }
    if records.iter().all(|r| !r.is_ok()) {
        if let Some(e) = records.iter().find_map(|r| r.error.as_ref()) {
            log::error!("every record failed; first error: {}", e.message);
        }
        return Err(Error::AllBackendsFailed);
    }
    Ok(RunOutcome { records, reused })
}

impl<'a> Context<'a> {
    fn new(cfg: &'a EvalConfig, opts: &RunOptions) -> Result<Self> {
        let evaluator = Evaluator::from_config(cfg, opts.http_timeout_ms)?;
        let corpus = cfg.corpus.as_ref().map(Corpus::open).transpose()?;
        let mut methods = Vec::new();
        for spec in &cfg.first {
            methods.push(Method {
                name: spec.display_name(),
                source: Source::Backend {
                    inpainter: spec.build(opts.http_timeout_ms)?,
                    needs_donor: spec.kind == BackendKind::Blend,
                },
            });
        }
        for p in &cfg.precomputed {
            methods.push(Method {
                name: p.name.clone(),
                source: Source::Precomputed(Corpus::open(&p.dir)?),
            });
        }
        Ok(Self {
            cfg,
            evaluator,
            corpus,
            methods,
            second_name: cfg.second.display_name(),
        })
    }

    fn evaluate(&self, image_id: &str, method: usize) -> EvalRecord {
        let start = Instant::now();
        let name = &self.methods[method].name;
        let mut record = self.try_evaluate(image_id, method).unwrap_or_else(|e| {
            EvalRecord::failed(image_id, name, &self.second_name, self.cfg.metric, &e)
        });
        if self.cfg.record_timing {
            record.elapsed_ms = Some(start.elapsed().as_millis() as u64);
        }
        record
    }

    fn try_evaluate(&self, image_id: &str, method: usize) -> Result<EvalRecord> {
        let cfg = self.cfg;
        let m = &self.methods[method];
        let seeds = RecordSeeds::derive(cfg.run_seed, image_id, &m.name, cfg.k);
        let needs_original = cfg.objectives.iter().any(|o| o.needs_original());
        let (original, first_mask, first, first_mask_id) = match &m.source {
            Source::Backend {
                inpainter,
                needs_donor,
            } => {
                let corpus = self.corpus.as_ref().expect("validated");
                let x = corpus.load(image_id)?;
                let donor = if *needs_donor {
                    Some(self.donor_for(image_id, &x)?)
                } else {
                    None
                };
                let fp = self.evaluator.first_pass(
                    &x,
                    inpainter.as_ref(),
                    seeds.first_mask,
                    seeds.first,
                    donor.as_ref(),
                )?;
                let id = format!("{:016x}", seeds.first_mask);
                (Some(x), fp.mask, fp.inpainted, id)
            }
            Source::Precomputed(dir) => {
                let x1 = dir.load(image_id)?;
                let m1 = dir.load_mask(image_id)?;
                ensure_dims(x1.dims(), m1.dims())?;
                // the original is only touched when an objective needs it
                let x = if needs_original {
                    let corpus = self.corpus.as_ref().ok_or(Error::MissingOriginal)?;
                    if !corpus.image_path(image_id).is_file() {
                        return Err(Error::MissingOriginal);
                    }
                    let x = corpus.load(image_id)?;
                    ensure_dims(x.dims(), x1.dims())?;
                    Some(x)
                } else {
                    None
                };
                let id = format!("{image_id}.mask.png");
                (x, m1, x1, id)
            }
        };

        let pairs: Vec<(u64, u64)> = seeds
            .patches
            .iter()
            .copied()
            .zip(seeds.second.iter().copied())
            .collect();
        let consistency = self.evaluator.consistency_score(&first, &first_mask, &pairs)?;
        let seconds: Vec<ImageBuffer> = consistency
            .passes
            .iter()
            .map(|p| p.inpainted.clone())
            .collect();
        let others: Vec<Objective> = cfg
            .objectives
            .iter()
            .copied()
            .filter(|&o| o != Objective::FirstSecond)
            .collect();
        let mut objectives: BTreeMap<Objective, Score> = objective_scores(
            original.as_ref(),
            &first,
            &seconds,
            &self.evaluator.scorer,
            &others,
        )?
        .into_iter()
        .map(|(k, v)| (k, Score(v)))
        .collect();
        if cfg.objectives.contains(&Objective::FirstSecond) {
            objectives.insert(Objective::FirstSecond, Score(consistency.d));
        }
        Ok(EvalRecord {
            image_id: image_id.to_string(),
            method: m.name.clone(),
            second: self.second_name.clone(),
            metric: cfg.metric,
            first_mask_id,
            first_mask_ratio: Some(mask_ratio(&first_mask)),
            second_mask_ids: consistency
                .passes
                .iter()
                .map(|p| format!("{:016x}", p.patch_seed))
                .collect(),
            second_mask_ratios: consistency.passes.iter().map(|p| mask_ratio(&p.mask)).collect(),
            distances: consistency.distances.iter().map(|&d| Score(d)).collect(),
            d: Some(Score(consistency.d)),
            objectives,
            elapsed_ms: None,
            error: None,
        })
    }

    /// A seeded choice among the other corpus images, resized to `x` if
    /// needed.
    fn donor_for(&self, image_id: &str, x: &ImageBuffer) -> Result<ImageBuffer> {
        let corpus = self.corpus.as_ref().expect("validated");
        let others: Vec<&String> = corpus.ids().iter().filter(|id| *id != image_id).collect();
        if others.is_empty() {
            return Err(Error::Config(
                "the blend method needs at least two corpus images".into(),
            ));
        }
        let seed = self.cfg.donor_seed.unwrap_or(self.cfg.run_seed);
        let pick = SeedHasher::new(seed).str("donor").str(image_id).finish();
        let donor = corpus.load(others[(pick % others.len() as u64) as usize])?;
        if donor.dims() == x.dims() {
            Ok(donor)
        } else {
            resize_bilinear(&donor, x.width(), x.height())
        }
    }
}
