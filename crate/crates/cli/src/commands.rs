use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::{DatasetArgs, SimArgs, SwitchOptArgs, SweepArgs, TrainArgs};
use uwoc_core::dataset::{self, MLSample, Task};
use uwoc_core::linksim::{self, LinkConfig, SweepPlan, SweepRow};
use uwoc_ml::metrics::MetricsReport;
use uwoc_ml::switchopt::{run_switchopt_with, CrossValidator, SwitchOptParams, SwitchOptResult};
use uwoc_ml::{ClassifierKind, ClassifierSpec};

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = create(path)?;
    linksim::write_sweep_csv(rows, &mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parallelism(cfg: &RunConfig, sim: &SimArgs) -> Option<usize> {
    sim.parallelism.map(|n| n as usize).or(cfg.parallelism)
}

/// Prints `label: done/total` to stderr about every tenth of the way.
fn progress(label: &'static str, total: usize) -> impl Fn(usize) + Sync {
    let step = (total / 10).max(1);
    let last = AtomicUsize::new(0);
    move |done| {
        if done == total || done >= last.load(Ordering::Relaxed) + step {
            last.store(done, Ordering::Relaxed);
            eprintln!("{label}: {done}/{total} points");
        }
    }
}

#[derive(Debug, Serialize)]
struct CoverageEntry {
    config: usize,
    label: String,
    speed_mps: f64,
    coverage_m: f64,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    seed: u64,
    n_frames: usize,
    fer_threshold: f64,
    coverage: Vec<CoverageEntry>,
}

fn summarize(rows: &[SweepRow], plan: &SweepPlan, seed: u64, threshold: f64) -> Result<SweepSummary> {
    let mut coverage = Vec::new();
    for &c in &plan.configs {
        let cfg = LinkConfig::by_index(c)?;
        for &v in &plan.speeds {
            coverage.push(CoverageEntry {
                config: c,
                label: cfg.to_string(),
                speed_mps: v,
                coverage_m: linksim::coverage(rows, c, v, threshold),
            });
        }
    }
    Ok(SweepSummary { seed, n_frames: plan.n_frames, fer_threshold: threshold, coverage })
}

pub fn sweep(cfg: &RunConfig, a: SweepArgs) -> Result<()> {
    let mut plan = cfg.sweep.clone();
    if let Some(v) = a.speeds {
        plan.speeds = v;
    }
    if let Some(d) = a.distances {
        plan.distances = d;
    }
    if let Some(c) = a.configs {
        plan.configs = c;
    }
    if let Some(r) = a.repeats {
        plan.repeats = r;
    }
    if let Some(n) = a.sim.frames {
        plan.n_frames = n;
    }
    plan.validate().map_err(|e| CliError::config("/sweep", e))?;
    let sim = cfg.simulator()?;
    let rows = linksim::sweep_with_progress(
        &sim,
        &plan,
        cfg.seed,
        parallelism(cfg, &a.sim),
        progress("sweep", plan.n_points()),
    )?;
    write_sweep(a.out.as_deref().unwrap_or(&cfg.outputs.sweep_csv), &rows)?;
    let summary = summarize(&rows, &plan, cfg.seed, cfg.coverage_threshold)?;
    write_json(a.summary.as_deref().unwrap_or(&cfg.outputs.sweep_summary), &summary)
}

pub fn dataset(cfg: &RunConfig, a: DatasetArgs) -> Result<()> {
    let mut plan = cfg.dataset.clone();
    if let Some(n) = a.sim.frames {
        plan.n_frames = n;
    }
    plan.sweep_plan().validate().map_err(|e| CliError::config("/dataset", e))?;
    let sim = cfg.simulator()?;
    let total = plan.sweep_plan().n_points();
    let (samples, rows) =
        dataset::generate(&sim, &plan, cfg.seed, parallelism(cfg, &a.sim), progress("dataset", total))?;
    let out = a.out.as_deref().unwrap_or(&cfg.outputs.dataset_csv);
    let mut w = create(out)?;
    dataset::write_csv(&samples, &mut w)?;
    w.flush().map_err(|e| CliError::io(out, e))?;
    if let Some(p) = a.sweep_out {
        write_sweep(&p, &rows)?;
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Vec<MLSample>> {
    if !path.exists() {
        return Err(CliError::Input { path: path.into(), message: "dataset file not found".into() });
    }
    Ok(dataset::load(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct EpochAccuracy {
    pub epoch: usize,
    pub accuracy: f64,
}

/// Output of `train`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TrainOutput {
    pub task: Task,
    pub classifier: ClassifierKind,
    pub n_h: Option<usize>,
    pub n_p: Option<usize>,
    pub n_folds: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub report: MetricsReport,
    /// Cross-validated accuracy after each epoch; empty for non-recurrent kinds.
    pub accuracy_by_epoch: Vec<EpochAccuracy>,
}

pub fn train_output(
    cfg: &RunConfig,
    samples: &[MLSample],
    task: Task,
    kind: ClassifierKind,
    hidden: Option<usize>,
    epochs: Option<usize>,
    folds: usize,
) -> Result<TrainOutput> {
    let mut spec = ClassifierSpec { kind, seed: cfg.seed, ..cfg.classifier.clone() };
    spec.n_h = hidden.unwrap_or(spec.n_h);
    spec.n_p = epochs.unwrap_or(spec.n_p);
    spec.validate().map_err(|e| CliError::config("/classifier", e))?;
    if kind.rnn().is_some() {
        let counts: Vec<usize> = (1..=spec.n_p).collect();
        let mut reports = uwoc_ml::evaluate_epochs(&spec, samples, task, folds, cfg.seed, &counts)?;
        let by_epoch = reports.iter().zip(1..).map(|(r, epoch)| EpochAccuracy { epoch, accuracy: r.accuracy }).collect();
        let report = reports.pop().expect("at least one epoch");
        Ok(TrainOutput {
            task,
            classifier: kind,
            n_h: Some(spec.n_h),
            n_p: Some(spec.n_p),
            n_folds: folds,
            seed: cfg.seed,
            report,
            accuracy_by_epoch: by_epoch,
        })
    } else {
        let report = uwoc_ml::evaluate(&spec, samples, task, folds, cfg.seed)?;
        Ok(TrainOutput { task, classifier: kind, n_h: None, n_p: None, n_folds: folds, seed: cfg.seed, report, accuracy_by_epoch: vec![] })
    }
}

pub fn train(cfg: &RunConfig, a: TrainArgs) -> Result<()> {
    let folds = a.folds.unwrap_or(cfg.folds);
    if folds < 2 {
        return Err(CliError::config("/folds", "at least 2 folds are required"));
    }
    let samples = load_dataset(a.dataset.as_deref().unwrap_or(&cfg.outputs.dataset_csv))?;
    let out = train_output(cfg, &samples, a.task, a.classifier, a.hidden, a.epochs, folds)?;
    eprintln!("train: {} on {}: accuracy {:.4}", out.classifier, out.task, out.report.accuracy);
    write_json(a.out.as_deref().unwrap_or(&cfg.outputs.metrics_json), &out)
}

/// Output of `switchopt`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SwitchOptOutput {
    pub params: SwitchOptParams,
    #[serde(flatten)]
    pub result: SwitchOptResult,
}

pub fn switchopt_params(cfg: &RunConfig, a: &SwitchOptArgs) -> Result<SwitchOptParams> {
    let mut p = cfg.switchopt.clone();
    if let Some(t) = a.task {
        p.task = t;
    }
    if let Some(c) = &a.candidates {
        p.candidates = c.clone();
    }
    if let Some(g) = &a.grid_nh {
        p.grid_nh = g.clone();
    }
    if let Some(g) = &a.grid_np {
        p.grid_np = g.clone();
    }
    if let Some(b) = a.beta {
        p.beta = b;
    }
    if let Some(e) = a.epsilon {
        p.epsilon = e;
    }
    if let Some(m) = a.max_alternations {
        p.max_alternations = m;
    }
    if let Some(k) = a.folds {
        p.k = k;
    }
    p.seed = cfg.seed;
    p.validate().map_err(|e| CliError::config("/switchopt", e))?;
    Ok(p)
}

pub fn switchopt(cfg: &RunConfig, a: SwitchOptArgs) -> Result<()> {
    let params = switchopt_params(cfg, &a)?;
    let samples = load_dataset(a.dataset.as_deref().unwrap_or(&cfg.outputs.dataset_csv))?;
    let mut cv = CrossValidator::new(&samples, &params, cfg.classifier.clone())?;
    let result = run_switchopt_with(&params, &mut cv, |t| {
        eprintln!(
            "switchopt: {} iter {} {:?} n_h={} n_p={} omega={:.4}{}",
            t.candidate,
            t.iteration,
            t.half_step,
            t.n_h,
            t.n_p,
            t.omega,
            if t.cached { " (cached)" } else { "" }
        )
    })?;
    eprintln!("switchopt: chose {} n_h={} n_p={} omega={:.4}", result.u_opt, result.n_h_opt, result.n_p_opt, result.omega);
    write_json(a.out.as_deref().unwrap_or(&cfg.outputs.switchopt_json), &SwitchOptOutput { params, result })
}
