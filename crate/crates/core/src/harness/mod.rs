//! Experiment harness behind the `ebsmooth` CLI.
//!
//! Every command reads an [`ExperimentConfig`], writes its outputs into
//! `output_dir`, and finishes with `<command>.manifest.json`. Result CSVs
//! depend only on the config, never on wall time or worker count; timings go
//! to separate `*_timing.csv` files.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod idx;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{load_config, parse_config, BaseKind, EstimatorKind, ExperimentConfig, PipelineSpec};
pub use dataset::{gen_dataset, DatasetSpec, LabeledDataset, Splits};

use crate::adversarial::train_xhat;
use crate::certify::{certify_keyed, prop1_oracle, CertResult, NoiseKey};
use crate::classifier::{BaseClassifier, EbClassifier};
use crate::energy::{train_deen_logged, EnergyNet};
use crate::par::{map_range, with_workers, Execution};
use crate::sampler::{jump, langevin_walk};
use crate::score::{ScoreSource, SmoothedModel, ZeroEnergy};
use crate::stats::{stream_id, RngStream};
use crate::{Error, Point, Result};
use report::{fmt_f64, write_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    TrainEnergy,
    TrainXhat,
    Certify,
    Curve,
    WalkJump,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::GenData => "gen-data",
            Self::TrainEnergy => "train-energy",
            Self::TrainXhat => "train-xhat",
            Self::Certify => "certify",
            Self::Curve => "curve",
            Self::WalkJump => "walk-jump",
            Self::OracleCheck => "oracle-check",
        }
    }

    /// Stage id mixed into every seed of the command.
    fn stage(self) -> u64 {
        match self {
            Self::GenData => 1,
            Self::TrainEnergy => 2,
            Self::TrainXhat => 3,
            Self::Certify | Self::Curve | Self::OracleCheck => 4,
            Self::WalkJump => 5,
        }
    }
}

/// Files written and a one-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

/// Run one command end to end and write its manifest.
pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let start = Instant::now();
    let mut outcome = with_workers(cfg.workers, || dispatch(cmd, cfg))?;
    let manifest_path = cfg.output_dir.join(format!("{}.manifest.json", cmd.name()));
    let manifest = report::Manifest {
        command: cmd.name().to_string(),
        config_hash: report::sha256_hex(cfg.canonical_json().as_bytes()),
        seed: cfg.seed,
        version: report::version_string(),
        workers: cfg.workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: outcome.outputs.iter().map(|p| file_name(p)).collect(),
    };
    report::write_manifest(&manifest_path, &manifest)?;
    outcome.outputs.push(manifest_path);
    Ok(outcome)
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn dispatch(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    match cmd {
        Command::GenData => gen_data(cfg),
        Command::TrainEnergy => train_energy(cfg),
        Command::TrainXhat => train_classifier(cfg),
        Command::Certify => certification(cfg, false),
        Command::Curve => certification(cfg, true),
        Command::WalkJump => walk_jump_outputs(cfg),
        Command::OracleCheck => oracle_check(cfg),
    }
}

fn stage_seed(cfg: &ExperimentConfig, cmd: Command, sub: u64) -> u64 {
    stream_id(&[cfg.seed, cmd.stage(), sub])
}

fn test_split(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let mut test = gen_dataset(&cfg.dataset, cfg.seed)?.test;
    if let Some(n) = cfg.pipeline.max_test_points {
        test.truncate(n);
    }
    Ok(test)
}

/// Runtime choice of Bayes estimator.
#[derive(Debug, Clone)]
pub enum AnyEstimator {
    Learned(EnergyNet),
    ClosedForm(SmoothedModel),
    Identity(ZeroEnergy),
}

macro_rules! forward {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEstimator::Learned($e) => $body,
            AnyEstimator::ClosedForm($e) => $body,
            AnyEstimator::Identity($e) => $body,
        }
    };
}

impl ScoreSource for AnyEstimator {
    fn dim(&self) -> usize {
        forward!(self, e => ScoreSource::dim(e))
    }
    fn sigma(&self) -> f64 {
        forward!(self, e => ScoreSource::sigma(e))
    }
    fn energy(&self, y: &[f64]) -> f64 {
        forward!(self, e => ScoreSource::energy(e, y))
    }
    fn energy_grad(&self, y: &[f64]) -> Point {
        forward!(self, e => ScoreSource::energy_grad(e, y))
    }
    fn energy_hvp(&self, y: &[f64], v: &[f64]) -> Point {
        forward!(self, e => ScoreSource::energy_hvp(e, y, v))
    }
    fn denoise(&self, y: &[f64]) -> Point {
        forward!(self, e => ScoreSource::denoise(e, y))
    }
    fn denoise_vjp(&self, y: &[f64], v: &[f64]) -> Point {
        forward!(self, e => ScoreSource::denoise_vjp(e, y, v))
    }
}

fn dataset_dim(cfg: &ExperimentConfig) -> Result<usize> {
    Ok(match &cfg.dataset {
        DatasetSpec::Mixture { means, .. } => means[0].len(),
        DatasetSpec::Gaussian { dim, .. } => *dim,
        DatasetSpec::Idx { .. } => gen_dataset(&cfg.dataset, cfg.seed)?.train.dim,
    })
}

/// The estimator at the pipeline scale `cfg.sigma`.
pub fn build_estimator(cfg: &ExperimentConfig) -> Result<AnyEstimator> {
    estimator_at(cfg, cfg.pipeline.estimator, &cfg.energy_path(), cfg.sigma)
}

fn estimator_at(cfg: &ExperimentConfig, kind: EstimatorKind, path: &Path, sigma: f64) -> Result<AnyEstimator> {
    Ok(match kind {
        EstimatorKind::Learned => {
            let net = checkpoint::load_energy(path)?;
            if net.sigma() != sigma {
                return Err(Error::config(format!(
                    "energy checkpoint {} is for sigma {}, pipeline needs {sigma}",
                    path.display(),
                    net.sigma()
                )));
            }
            AnyEstimator::Learned(net)
        }
        EstimatorKind::ClosedForm => AnyEstimator::ClosedForm(SmoothedModel::new(cfg.dataset.closed_form_model()?, sigma)),
        EstimatorKind::Identity => AnyEstimator::Identity(ZeroEnergy { dim: dataset_dim(cfg)?, sigma }),
    })
}

pub fn build_base(cfg: &ExperimentConfig) -> Result<BaseClassifier> {
    match cfg.pipeline.base {
        BaseKind::Trained => Ok(checkpoint::load_classifier(&cfg.classifier_path())?.0.into()),
        BaseKind::Hyperplane => cfg
            .dataset
            .labeling_hyperplane()
            .map(BaseClassifier::from)
            .ok_or_else(|| Error::config("pipeline.base = \"hyperplane\" needs a gaussian dataset")),
    }
}

fn gen_data(cfg: &ExperimentConfig) -> Result<Outcome> {
    let splits = gen_dataset(&cfg.dataset, cfg.seed)?;
    let train = cfg.output_dir.join("train.csv");
    let test = cfg.output_dir.join("test.csv");
    dataset::write_dataset_csv(&splits.train, &train)?;
    dataset::write_dataset_csv(&splits.test, &test)?;
    Ok(Outcome {
        outputs: vec![train, test],
        summary: format!("{} train / {} test points", splits.train.len(), splits.test.len()),
    })
}

fn train_energy(cfg: &ExperimentConfig) -> Result<Outcome> {
    let splits = gen_dataset(&cfg.dataset, cfg.seed)?;
    let mut gen = RngStream::new(stage_seed(cfg, Command::TrainEnergy, cfg.deen.seed), 0);
    let (net, losses) = train_deen_logged(&splits.train.points, &cfg.deen, &mut gen, Execution::Parallel)?;
    let ckpt = cfg.energy_path();
    if let Some(parent) = ckpt.parent() {
        std::fs::create_dir_all(parent)?;
    }
    checkpoint::save_energy(&net, &ckpt)?;
    let log = cfg.output_dir.join("deen_log.csv");
    write_csv(
        &log,
        &["step".to_string(), "loss".to_string()],
        losses.iter().enumerate().map(|(i, l)| vec![i.to_string(), fmt_f64(*l)]),
    )?;
    let last = losses.last().copied().unwrap_or(f64::NAN);
    Ok(Outcome { outputs: vec![ckpt, log], summary: format!("final DEEN loss {last:.6}") })
}

fn train_classifier(cfg: &ExperimentConfig) -> Result<Outcome> {
    let splits = gen_dataset(&cfg.dataset, cfg.seed)?;
    let estimator = build_estimator(cfg)?;
    let mut gen = RngStream::new(stage_seed(cfg, Command::TrainXhat, cfg.train.seed), 0);
    let train = &splits.train;
    let (clf, log) = train_xhat(
        &train.points,
        &train.labels,
        train.classes,
        &estimator,
        &cfg.train,
        &cfg.attack,
        &mut gen,
        Execution::Parallel,
    )?;
    let ckpt = cfg.classifier_path();
    if let Some(parent) = ckpt.parent() {
        std::fs::create_dir_all(parent)?;
    }
    checkpoint::save_classifier(&clf, cfg.sigma, &ckpt)?;
    let log_path = cfg.output_dir.join("train_log.csv");
    let header: Vec<String> = ["step", "clean_loss", "adversarial_loss", "attack_success"].iter().map(|s| s.to_string()).collect();
    write_csv(
        &log_path,
        &header,
        log.iter().map(|r| {
            vec![r.step.to_string(), fmt_f64(r.clean_loss), fmt_f64(r.adversarial_loss), fmt_f64(r.attack_success)]
        }),
    )?;
    let timing = cfg.output_dir.join("train_timing.csv");
    report::write_timing_csv(&timing, "step", &log.iter().map(|r| r.wall_time_s).collect::<Vec<_>>())?;
    let last = log.last().map_or(f64::NAN, |r| r.adversarial_loss);
    Ok(Outcome {
        outputs: vec![ckpt, log_path, timing],
        summary: format!("final adversarial loss {last:.6}"),
    })
}

/// Certify every test point of the config; returns `(labels, results, seconds)`.
pub fn certify_test_set(cfg: &ExperimentConfig) -> Result<(Vec<usize>, Vec<CertResult>, Vec<f64>)> {
    let test = test_split(cfg)?;
    let clf = EbClassifier::new(build_base(cfg)?, build_estimator(cfg)?, cfg.sigma, 1)?;
    let seed = stage_seed(cfg, Command::Certify, 0);
    let out = map_range(Execution::Parallel, test.len(), |i| {
        let t = Instant::now();
        let key = NoiseKey { seed, point: i as u64 };
        let r = certify_keyed(&clf, &test.points[i], cfg.sigma, &cfg.confidence, key, Execution::Sequential);
        r.map(|r| (r, t.elapsed().as_secs_f64()))
    });
    let mut results = Vec::with_capacity(out.len());
    let mut secs = Vec::with_capacity(out.len());
    for o in out {
        let (r, s) = o?;
        results.push(r);
        secs.push(s);
    }
    Ok((test.labels, results, secs))
}

fn certification(cfg: &ExperimentConfig, with_curve: bool) -> Result<Outcome> {
    let (labels, results, secs) = certify_test_set(cfg)?;
    if results.is_empty() {
        log::warn!("test set is empty; writing empty outputs");
    }
    let per_point = cfg.output_dir.join("certify.csv");
    report::write_cert_csv(&per_point, &labels, &results)?;
    let timing = cfg.output_dir.join("certify_timing.csv");
    report::write_timing_csv(&timing, "index", &secs)?;
    let mut outputs = vec![per_point, timing];
    let abstains = results.iter().filter(|r| r.abstained()).count();
    let mut summary = format!("{} points, {abstains} abstained", results.len());
    if with_curve {
        let rows = if results.is_empty() { Vec::new() } else { report::curve(&labels, &results, &cfg.pipeline.radii) };
        let path = cfg.output_dir.join("curve.csv");
        report::write_curve_csv(&path, &rows, results.len())?;
        outputs.push(path);
        for r in &rows {
            summary.push_str(&format!("; r={}: {:.4}", r.radius, r.certified_accuracy));
        }
    }
    Ok(Outcome { outputs, summary })
}

fn walk_jump_outputs(cfg: &ExperimentConfig) -> Result<Outcome> {
    let test = test_split(cfg)?;
    let coarse = build_estimator(cfg)?;
    let wj = &cfg.walk_jump;
    let fine = match &cfg.pipeline.fine_energy {
        Some(p) => estimator_at(cfg, EstimatorKind::Learned, p, wj.sigma_prime)?,
        None => estimator_at(cfg, EstimatorKind::ClosedForm, Path::new(""), wj.sigma_prime)?,
    };
    let seed = stage_seed(cfg, Command::WalkJump, wj.seed);
    let keep = cfg.pipeline.trajectory;
    let rows = map_range(Execution::Parallel, test.len(), |i| -> Result<(Point, Point, Point, Option<Vec<Point>>)> {
        let mut noise = RngStream::keyed(seed, &[i as u64, 0]);
        let y: Point = test.points[i].iter().map(|x| x + cfg.sigma * noise.normal()).collect();
        let y0 = jump(&coarse, &y)?;
        let mut gen = RngStream::keyed(seed, &[i as u64, 1]);
        let walk = langevin_walk(&fine, &y0, wj, &mut gen, keep && i == 0)?;
        let out = jump(&fine, &walk.last)?;
        Ok((y, y0, out, walk.trajectory))
    });
    let d = test.dim;
    let mut header = vec!["index".to_string()];
    for prefix in ["y", "xhat", "out"] {
        header.extend((0..d).map(|j| format!("{prefix}{j}")));
    }
    let mut table = Vec::with_capacity(rows.len());
    let mut trajectory = None;
    for (i, r) in rows.into_iter().enumerate() {
        let (y, y0, out, traj) = r?;
        let mut row = vec![i.to_string()];
        row.extend(y.iter().chain(&y0).chain(&out).map(|v| fmt_f64(*v)));
        table.push(row);
        if traj.is_some() {
            trajectory = traj;
        }
    }
    let path = cfg.output_dir.join("walk_jump.csv");
    write_csv(&path, &header, table)?;
    let mut outputs = vec![path];
    if let Some(traj) = trajectory {
        let path = cfg.output_dir.join("trajectory.csv");
        let mut header = vec!["step".to_string()];
        header.extend((0..d).map(|j| format!("y{j}")));
        header.push("energy".to_string());
        write_csv(
            &path,
            &header,
            traj.iter().enumerate().map(|(t, y)| {
                let mut r = vec![t.to_string()];
                r.extend(y.iter().map(|v| fmt_f64(*v)));
                r.push(fmt_f64(fine.energy(y)));
                r
            }),
        )?;
        outputs.push(path);
    }
    Ok(Outcome { outputs, summary: format!("{} walk-jump runs", test.len()) })
}

/// Summary of [`Command::OracleCheck`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleSummary {
    pub points: usize,
    pub abstained: usize,
    pub class_violations: usize,
    pub radius_violations: usize,
}

/// Certify `h ∘ x̂` with the closed-form estimator and compare with the analytic prediction.
pub fn oracle_comparison(cfg: &ExperimentConfig) -> Result<(OracleSummary, Vec<Vec<String>>)> {
    let DatasetSpec::Gaussian { sigma0, .. } = &cfg.dataset else {
        return Err(Error::config("oracle-check needs a gaussian dataset"));
    };
    let mut cc = cfg.clone();
    cc.pipeline.base = BaseKind::Hyperplane;
    cc.pipeline.estimator = EstimatorKind::ClosedForm;
    let (_, results, _) = certify_test_set(&cc)?;
    let test = test_split(&cc)?;
    let h = cc.dataset.labeling_hyperplane().expect("gaussian dataset");
    let mut s = OracleSummary { points: results.len(), abstained: 0, class_violations: 0, radius_violations: 0 };
    let mut rows = Vec::with_capacity(results.len());
    for (i, (x, r)) in test.points.iter().zip(&results).enumerate() {
        let o = prop1_oracle(&h, x, cc.sigma, *sigma0)?;
        let class_ok = r.predicted.is_none_or(|p| p == o.class);
        let radius_ok = r.radius <= o.radius + 1e-9;
        s.abstained += usize::from(r.abstained());
        s.class_violations += usize::from(!class_ok);
        s.radius_violations += usize::from(!radius_ok);
        rows.push(vec![
            i.to_string(),
            o.class.to_string(),
            fmt_f64(o.radius),
            u8::from(o.on_boundary).to_string(),
            r.predicted.map_or("-1".to_string(), |p| p.to_string()),
            fmt_f64(r.radius),
            u8::from(class_ok).to_string(),
            u8::from(radius_ok).to_string(),
        ]);
    }
    Ok((s, rows))
}

fn oracle_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (s, rows) = oracle_comparison(cfg)?;
    let path = cfg.output_dir.join("oracle_check.csv");
    let header: Vec<String> = [
        "index",
        "oracle_class",
        "oracle_radius",
        "on_boundary",
        "predicted",
        "radius",
        "class_agrees",
        "radius_sound",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_csv(&path, &header, rows)?;
    Ok(Outcome {
        outputs: vec![path],
        summary: format!(
            "{} points, {} abstained, {} class violations, {} radius violations",
            s.points, s.abstained, s.class_violations, s.radius_violations
        ),
    })
}
