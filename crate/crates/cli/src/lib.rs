//! Commands behind the `texcal` executable.
//!
//! Each command reads the artifacts of the previous one from the output
//! directory (see [`layout`]) and fails with a hint naming the missing step.

pub mod error;
pub mod layout;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use texcal_core::augment::{gaussian_blur, gaussian_noise, mix64, RngStream, Variant};
use texcal_core::classifier::{predict_logits, train, ModelConfig, ModelParams, TrainReport, TrainSample};
use texcal_core::io::{
    echo_config, read_checkpoint, read_logits, read_manifest, read_pgm, read_temperature, write_checkpoint,
    write_json, write_logits, write_reliability, write_sweep, write_temperature, ExperimentConfig, SweepRow, TemperatureDiagnostics,
};
use texcal_core::metrics::{summarize, ReliabilityReport};
use texcal_core::scaling::{fit_temperature, nll, scale_probabilities, Temperature};
use texcal_core::synth::{generate_dataset, group_views, id_hash, DatasetManifest, DatasetSummary, ManifestRecord, TestGroup};
use texcal_core::{Error, Exec, ImageBuffer};

pub use error::{CliError, CliResult};
pub use layout::Layout;

const FORMAT_VERSION: u32 = 1;
const SWEEP_NOISE_KEY: u64 = 0x0073_7765_6570;

/// Everything a command needs: the effective config and where to write.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub layout: Layout,
    pub exec: Exec,
    pub force: bool,
    /// Suppresses progress output on stdout.
    pub quiet: bool,
}

#[derive(Debug, Serialize)]
struct RunInfo<'a> {
    format_version: u32,
    texcal_version: &'static str,
    root_seed: u64,
    variants: &'a [Variant],
    parallel: bool,
}

impl Context {
    /// Creates the output directory, echoes the effective config and writes
    /// `run_info.json`.
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>, exec: Exec, force: bool) -> CliResult<Self> {
        cfg.validate()?;
        let layout = Layout::new(out);
        create_dir(&layout.root)?;
        echo_config(&cfg, &layout.root)?;
        let info = RunInfo {
            format_version: FORMAT_VERSION,
            texcal_version: env!("CARGO_PKG_VERSION"),
            root_seed: cfg.root_seed,
            variants: &cfg.variants,
            parallel: exec.is_parallel(),
        };
        write_json(&info, &layout.run_info())?;
        Ok(Self {
            cfg,
            layout,
            exec,
            force,
            quiet: false,
        })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn require(path: PathBuf, what: &'static str, hint: impl Into<String>) -> CliResult<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Missing {
            what,
            path,
            hint: hint.into(),
        })
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Renders the dataset, splits it, assigns folds and writes the perturbed
/// test groups. Refuses to touch an existing dataset without `force`.
pub fn cmd_gen(ctx: &Context) -> CliResult<DatasetSummary> {
    let dir = ctx.layout.data_dir();
    if dir.exists() {
        if !ctx.force {
            return Err(CliError::Refused(dir));
        }
        fs::remove_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    }
    create_dir(&dir)?;
    let manifest = generate_dataset(&ctx.cfg.dataset, ctx.cfg.root_seed, &dir, ctx.exec)?;
    let summary = manifest.summary();
    ctx.say(summary.to_string());
    Ok(summary)
}

fn load_manifest(ctx: &Context) -> CliResult<DatasetManifest> {
    let path = require(ctx.layout.manifest(), "dataset manifest", "texcal gen")?;
    Ok(read_manifest(&path)?)
}

fn load_images<'a>(ctx: &Context, records: &[&'a ManifestRecord]) -> CliResult<Vec<(&'a ManifestRecord, ImageBuffer)>> {
    let dir = ctx.layout.data_dir();
    let images = ctx.exec.try_map(records, |r| read_pgm(&dir.join(&r.path)))?;
    Ok(records.iter().copied().zip(images).collect())
}

/// Cross-validated training of one variant; writes the checkpoint, the
/// pooled out-of-fold holdout logits and the training report.
pub fn cmd_train(ctx: &Context, variant: Variant) -> CliResult<TrainReport> {
    let manifest = load_manifest(ctx)?;
    let records: Vec<&ManifestRecord> = manifest.train().collect();
    let d = &ctx.cfg.dataset;
    let seed = ctx.cfg.root_seed;
    let samples = ctx.exec.try_map(&load_images(ctx, &records)?, |(r, img)| {
        let fold = r.fold.ok_or_else(|| Error::InvalidInput(format!("training sample {} has no fold", r.sample_id)))?;
        Ok::<_, Error>(TrainSample {
            id: r.sample_id.clone(),
            label: r.label(),
            fold,
            validation: group_views(&r.sample_id, img, d.blur_cap, d.noise_cap, seed)?,
            image: img.clone(),
        })
    })?;
    let mut tc = ctx.cfg.train.clone();
    tc.seed = seed;
    ctx.say(format!("training variant {variant} on {} samples", samples.len()));
    let outcome = train(&samples, &ctx.cfg.model, &tc, &ctx.cfg.augment, variant, ctx.exec)?;
    let l = &ctx.layout;
    write_checkpoint(&ctx.cfg.model, &outcome.params, &l.checkpoint(variant))?;
    write_logits(&outcome.holdout, &l.holdout(variant))?;
    write_json(&outcome.report, &l.train_report(variant))?;
    let r = &outcome.report;
    ctx.say(format!(
        "variant {variant}: epoch budget {} (best fold {}), fold accuracies {}, final train accuracy {:.4}",
        r.epoch_budget,
        r.best_fold,
        r.fold_accuracies.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(" "),
        r.final_train_accuracy
    ));
    Ok(outcome.report)
}

/// Fits the temperature on the holdout logits of one variant.
pub fn cmd_calibrate(ctx: &Context, variant: Variant) -> CliResult<TemperatureDiagnostics> {
    let path = require(ctx.layout.holdout(variant), "holdout logits", format!("texcal train --variant {variant}"))?;
    let holdout = read_logits(&path)?;
    let t = fit_temperature(&holdout, &ctx.cfg.fit)?;
    let diag = TemperatureDiagnostics {
        format_version: FORMAT_VERSION,
        temperature: t.value,
        nll_at_fit: t.nll_at_fit,
        nll_uncalibrated: nll(&holdout, &Temperature::identity())?,
        iterations: t.iterations,
        holdout_size: holdout.len(),
    };
    write_temperature(&t, &ctx.layout.temperature(variant))?;
    write_json(&diag, &ctx.layout.temperature_diagnostics(variant))?;
    ctx.say(format!(
        "variant {variant}: T = {:.4}, holdout NLL {:.4} -> {:.4} ({} rows)",
        t.value, diag.nll_uncalibrated, diag.nll_at_fit, diag.holdout_size
    ));
    Ok(diag)
}

fn load_model(ctx: &Context, variant: Variant) -> CliResult<(ModelConfig, ModelParams)> {
    let path = require(ctx.layout.checkpoint(variant), "model checkpoint", format!("texcal train --variant {variant}"))?;
    Ok(read_checkpoint(&path)?)
}

fn load_temperature(ctx: &Context, variant: Variant, calibrated: bool) -> CliResult<Temperature> {
    if !calibrated {
        return Ok(Temperature::identity());
    }
    let path = require(
        ctx.layout.temperature(variant),
        "temperature file",
        format!("texcal calibrate --variant {variant}"),
    )?;
    Ok(read_temperature(&path)?)
}

/// Persisted evaluation of one variant on the expanded test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub variant: Variant,
    pub calibrated: bool,
    pub temperature: f64,
    #[serde(flatten)]
    pub summary: ReliabilityReport,
}

/// Evaluates the expanded test set, uncalibrated or at the fitted
/// temperature, and writes the metrics with a reliability diagram.
pub fn cmd_report(ctx: &Context, variant: Variant, calibrated: bool) -> CliResult<EvalReport> {
    let (model, params) = load_model(ctx, variant)?;
    let t = load_temperature(ctx, variant, calibrated)?;
    let manifest = load_manifest(ctx)?;
    let records: Vec<&ManifestRecord> = manifest.expanded_test().collect();
    let samples: Vec<(String, usize, ImageBuffer)> = load_images(ctx, &records)?
        .into_iter()
        .map(|(r, img)| (r.record_id(), r.label(), img))
        .collect();
    let logits = predict_logits(&params, &model, &samples, ctx.exec)?;
    write_logits(&logits, &ctx.layout.test_logits(variant))?;

    let summary = summarize(&scale_probabilities(&logits, &t)?, ctx.cfg.binning)?;
    let l = &ctx.layout;
    write_reliability(&summary.bins, &l.reliability_csv(variant, calibrated))?;
    let title = format!("Variant {variant}, {} (T = {:.3})", layout::tag(calibrated), t.value);
    write_text(&l.reliability_svg(variant, calibrated), &svg::reliability_svg(&summary, &title))?;
    let report = EvalReport {
        format_version: FORMAT_VERSION,
        variant,
        calibrated,
        temperature: t.value,
        summary,
    };
    write_json(&report, &l.report(variant, calibrated))?;
    let s = &report.summary;
    ctx.say(format!(
        "variant {variant} {}: n {} accuracy {:.4} avg confidence {:.4} ECE {:.4} MCE {:.4} ACE {:.4}",
        layout::tag(calibrated),
        s.n,
        s.accuracy,
        s.avg_confidence,
        s.ece,
        s.mce,
        s.ace
    ));
    Ok(report)
}

/// One perturbation of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    Blur,
    Noise,
}

impl Perturbation {
    pub const ALL: [Perturbation; 2] = [Perturbation::Blur, Perturbation::Noise];

    pub fn as_str(self) -> &'static str {
        match self {
            Perturbation::Blur => "blur",
            Perturbation::Noise => "noise",
        }
    }

    fn apply(self, img: &ImageBuffer, sigma: f64, sample_id: &str, seed: u64) -> texcal_core::Result<ImageBuffer> {
        match self {
            Perturbation::Blur => gaussian_blur(img, sigma),
            Perturbation::Noise => {
                let stream = RngStream::new(seed, mix64(id_hash(sample_id) ^ SWEEP_NOISE_KEY ^ sigma.to_bits()));
                gaussian_noise(img, sigma, &stream)
            }
        }
    }
}

/// Applies every grid sigma to each clean test image and records accuracy,
/// average confidence and ECE per level.
pub fn cmd_sweep(ctx: &Context, variant: Variant, calibrated: bool) -> CliResult<Vec<SweepRow>> {
    let (model, params) = load_model(ctx, variant)?;
    let t = load_temperature(ctx, variant, calibrated)?;
    let manifest = load_manifest(ctx)?;
    let records: Vec<&ManifestRecord> = manifest.test_group(TestGroup::A).collect();
    let clean = load_images(ctx, &records)?;
    let seed = ctx.cfg.root_seed;

    let mut rows = Vec::new();
    for p in Perturbation::ALL {
        let grid = match p {
            Perturbation::Blur => &ctx.cfg.sweep.blur_sigmas,
            Perturbation::Noise => &ctx.cfg.sweep.noise_sigmas,
        };
        for &sigma in grid {
            let samples = ctx.exec.try_map(&clean, |(r, img)| {
                Ok::<_, Error>((r.sample_id.clone(), r.label(), p.apply(img, sigma, &r.sample_id, seed)?))
            })?;
            let logits = predict_logits(&params, &model, &samples, ctx.exec)?;
            let s = summarize(&scale_probabilities(&logits, &t)?, ctx.cfg.binning)?;
            rows.push(SweepRow {
                perturbation: p.as_str().into(),
                sigma,
                accuracy: s.accuracy,
                avg_confidence: s.avg_confidence,
                ece: s.ece,
            });
        }
    }

    let l = &ctx.layout;
    write_sweep(&rows, &l.sweep_csv(variant, calibrated))?;
    for p in Perturbation::ALL {
        let part: Vec<SweepRow> = rows.iter().filter(|r| r.perturbation == p.as_str()).cloned().collect();
        let title = format!("Variant {variant}, {}: {} sweep", layout::tag(calibrated), p.as_str());
        let chart = svg::sweep_svg(&part, &title, &format!("{} sigma", p.as_str()), p == Perturbation::Blur);
        write_text(&l.sweep_svg(variant, calibrated, p.as_str()), &chart)?;
        let first = &part[0];
        let last = &part[part.len() - 1];
        ctx.say(format!(
            "variant {variant} {} {} sweep: accuracy {:.4} at sigma {} -> {:.4} at sigma {}",
            layout::tag(calibrated),
            p.as_str(),
            first.accuracy,
            first.sigma,
            last.accuracy,
            last.sigma
        ));
    }
    Ok(rows)
}

/// One row of the combined results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub temperature: f64,
    pub uncalibrated: ReliabilityReport,
    pub calibrated: ReliabilityReport,
}

impl SummaryRow {
    fn cells(&self) -> [f64; 9] {
        let (u, c) = (&self.uncalibrated, &self.calibrated);
        [
            u.ece,
            c.ece,
            u.mce,
            c.mce,
            u.ace,
            c.ace,
            u.avg_confidence,
            c.avg_confidence,
            u.accuracy,
        ]
    }
}

const SUMMARY_COLUMNS: [&str; 10] = [
    "dataset",
    "ece_uncalibrated",
    "ece_calibrated",
    "mce_uncalibrated",
    "mce_calibrated",
    "ace_uncalibrated",
    "ace_calibrated",
    "avg_confidence_uncalibrated",
    "avg_confidence_calibrated",
    "accuracy",
];

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = SUMMARY_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.cells().iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{},{}", r.variant, cells.join(","));
    }
    out
}

pub fn summary_markdown(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "| Dataset | ECE uncal | ECE cal | MCE uncal | MCE cal | ACE uncal | ACE cal | AvgConf uncal | AvgConf cal | Accuracy |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let c = r.cells();
        let _ = write!(out, "| {} |", r.variant);
        for v in &c[..6] {
            let _ = write!(out, " {v:.4} |");
        }
        for v in &c[6..] {
            let _ = write!(out, " {:.1}% |", 100.0 * v);
        }
        out.push('\n');
    }
    out
}

fn stage<T>(name: impl Into<String>, result: CliResult<T>) -> CliResult<T> {
    result.map_err(|e| e.in_stage(name))
}

/// The whole experiment: generate, then train, calibrate, report and sweep
/// each configured variant, then write the combined table.
pub fn cmd_all(ctx: &Context) -> CliResult<Vec<SummaryRow>> {
    stage("gen", cmd_gen(ctx))?;
    let mut rows = Vec::new();
    for &v in &ctx.cfg.variants {
        stage(format!("train {v}"), cmd_train(ctx, v))?;
        let diag = stage(format!("calibrate {v}"), cmd_calibrate(ctx, v))?;
        let uncal = stage(format!("report {v} uncalibrated"), cmd_report(ctx, v, false))?;
        let cal = stage(format!("report {v} calibrated"), cmd_report(ctx, v, true))?;
        if uncal.summary.accuracy.to_bits() != cal.summary.accuracy.to_bits() {
            let e = Error::Numeric(format!(
                "accuracy changed under temperature scaling: {} vs {}",
                uncal.summary.accuracy, cal.summary.accuracy
            ));
            return Err(CliError::from(e).in_stage(format!("report {v} calibrated")));
        }
        stage(format!("sweep {v} uncalibrated"), cmd_sweep(ctx, v, false))?;
        stage(format!("sweep {v} calibrated"), cmd_sweep(ctx, v, true))?;
        rows.push(SummaryRow {
            variant: v,
            temperature: diag.temperature,
            uncalibrated: uncal.summary,
            calibrated: cal.summary,
        });
    }
    let md = summary_markdown(&rows);
    stage("summary", write_text(&ctx.layout.summary_csv(), &summary_csv(&rows)))?;
    stage("summary", write_text(&ctx.layout.summary_md(), &md))?;
    ctx.say(md);
    Ok(rows)
}
