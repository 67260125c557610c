//! Plot-ready CSV emission from sweep, metrics and SwitchOpt outputs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::commands::{create, SwitchOptOutput, TrainOutput};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ReportArgs;
use uwoc_core::linksim::{self, LinkConfig, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Family {
    Fer,
    Throughput,
    Accuracy,
}

impl Family {
    pub fn file_name(self) -> &'static str {
        match self {
            Family::Fer => "fer_vs_distance.csv",
            Family::Throughput => "throughput_vs_distance.csv",
            Family::Accuracy => "accuracy_vs_epochs.csv",
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Input { path: path.into(), message: e.to_string() })
}

fn source(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Repeat-pooled rows of one sweep: `(config, speed, distance, frames, errors)`.
fn pooled(rows: &[SweepRow]) -> Vec<(usize, f64, f64, usize, usize)> {
    let mut out: Vec<(usize, f64, f64, usize, usize)> = Vec::new();
    let keys: BTreeSet<(usize, u64)> = rows.iter().map(|r| (r.config, r.speed.to_bits())).collect();
    for (c, v) in keys {
        let speed = f64::from_bits(v);
        let mut curve: Vec<(f64, usize, usize)> = Vec::new();
        for r in rows.iter().filter(|r| r.config == c && r.speed == speed) {
            match curve.iter_mut().find(|p| p.0 == r.distance) {
                Some(p) => {
                    p.1 += r.n_frames;
                    p.2 += r.n_frame_errors;
                }
                None => curve.push((r.distance, r.n_frames, r.n_frame_errors)),
            }
        }
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.extend(curve.into_iter().map(|(d, n, e)| (c, speed, d, n, e)));
    }
    out
}

struct Csv {
    path: PathBuf,
    w: csv::Writer<std::io::BufWriter<File>>,
}

impl Csv {
    fn new(dir: &Path, family: Family, header: &[&str]) -> Result<Self> {
        let path = dir.join(family.file_name());
        let w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(&path)?);
        let mut out = Self { path, w };
        out.row(header.iter().map(|s| s.to_string()))?;
        Ok(out)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let path = &self.path;
        self.w.write_record(fields.into_iter().collect::<Vec<_>>()).map_err(|e| CliError::Input {
            path: path.clone(),
            message: e.to_string(),
        })
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))?;
        let inner = self.w.into_inner().map_err(|e| CliError::io(&self.path, e.into_error()))?;
        inner.into_inner().map_err(|e| CliError::io(&self.path, e.into_error()))?.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn run(cfg: &RunConfig, a: ReportArgs) -> Result<()> {
    let wanted: BTreeSet<Family> = match &a.emit {
        Some(f) => f.iter().copied().collect(),
        None => {
            let mut s = BTreeSet::new();
            if !a.sweeps.is_empty() {
                s.extend([Family::Fer, Family::Throughput]);
            }
            if !a.metrics.is_empty() || !a.switchopts.is_empty() {
                s.insert(Family::Accuracy);
            }
            s
        }
    };
    if wanted.is_empty() {
        return Err(CliError::config("", "report needs at least one --sweep, --metrics or --switchopt input"));
    }
    let needs_sweep = wanted.contains(&Family::Fer) || wanted.contains(&Family::Throughput);
    if needs_sweep && a.sweeps.is_empty() {
        return Err(CliError::config("", "fer and throughput reports need a --sweep input"));
    }
    if wanted.contains(&Family::Accuracy) && a.metrics.is_empty() && a.switchopts.is_empty() {
        return Err(CliError::config("", "the accuracy report needs a --metrics or --switchopt input"));
    }
    let dir = a.out_dir.as_deref().unwrap_or(&cfg.outputs.report_dir);

    if needs_sweep {
        let mut fer = wanted
            .contains(&Family::Fer)
            .then(|| {
                Csv::new(
                    dir,
                    Family::Fer,
                    &["source", "config", "label", "speed_mps", "distance_m", "n_frames", "n_frame_errors", "fer"],
                )
            })
            .transpose()?;
        let mut tput = wanted
            .contains(&Family::Throughput)
            .then(|| Csv::new(dir, Family::Throughput, &["source", "config", "label", "speed_mps", "distance_m", "fer", "throughput_bps"]))
            .transpose()?;
        for path in &a.sweeps {
            let rows = linksim::read_sweep_csv(open(path)?, path)?;
            let src = source(path);
            for (c, v, d, n, e) in pooled(&rows) {
                let link = LinkConfig::by_index(c)?;
                let rate = e as f64 / n as f64;
                let common = [src.clone(), c.to_string(), link.to_string(), v.to_string(), d.to_string()];
                if let Some(w) = fer.as_mut() {
                    w.row(common.iter().cloned().chain([n.to_string(), e.to_string(), rate.to_string()]))?;
                }
                if let Some(w) = tput.as_mut() {
                    let t = linksim::throughput(&link, &cfg.ofdm, cfg.link.n_tx, rate)?;
                    w.row(common.iter().cloned().chain([rate.to_string(), t.to_string()]))?;
                }
            }
        }
        fer.map(Csv::finish).transpose()?;
        tput.map(Csv::finish).transpose()?;
    }

    if wanted.contains(&Family::Accuracy) {
        let mut w = Csv::new(dir, Family::Accuracy, &["source", "origin", "task", "classifier", "n_h", "epoch", "accuracy"])?;
        for path in &a.metrics {
            let m: TrainOutput = read_json(path)?;
            let n_h = m.n_h.map(|h| h.to_string()).unwrap_or_default();
            for e in &m.accuracy_by_epoch {
                w.row([
                    source(path),
                    "train".into(),
                    m.task.to_string(),
                    m.classifier.to_string(),
                    n_h.clone(),
                    e.epoch.to_string(),
                    e.accuracy.to_string(),
                ])?;
            }
        }
        for path in &a.switchopts {
            let s: SwitchOptOutput = read_json(path)?;
            let mut seen = BTreeSet::new();
            for t in &s.result.trace {
                if seen.insert((t.candidate, t.n_h, t.n_p)) {
                    w.row([
                        source(path),
                        "switchopt".into(),
                        s.params.task.to_string(),
                        t.candidate.to_string(),
                        t.n_h.to_string(),
                        t.n_p.to_string(),
                        t.omega.to_string(),
                    ])?;
                }
            }
        }
        w.finish()?;
    }
    Ok(())
}
