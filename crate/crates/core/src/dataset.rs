//! Labelled feature vectors for configuration learning.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::linksim::{optimal_config, sweep_with_progress, LinkConfig, LinkSimulator, SweepPlan, SweepRow, N_CONFIGS};
use crate::phy::{FrameWaveform, OfdmModem};
use crate::seed::{mix_seed, rng_from_seed};

/// Detectors and bins per detector that make up a feature vector.
pub const FEATURE_DETECTORS: usize = 4;
pub const N_FEATURES: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct MLSample {
    pub sample_id: usize,
    pub speed: f64,
    pub distance: f64,
    pub repeat: usize,
    /// Optimal configuration, 1-based.
    pub label6: usize,
    pub features: Vec<f64>,
}

impl MLSample {
    pub fn label(&self, task: Task) -> usize {
        task.project(self.label6).expect("labels are validated on construction")
    }
}

/// Grid of the dataset sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetPlan {
    pub speeds: Vec<f64>,
    pub distances: Vec<f64>,
    pub repeats: usize,
    /// Frames per (speed, distance, repeat, configuration) point.
    pub n_frames: usize,
}

impl Default for DatasetPlan {
    fn default() -> Self {
        Self {
            speeds: vec![0.1, 0.3, 0.4, 0.5],
            distances: (1..=60).map(f64::from).collect(),
            repeats: 4,
            n_frames: 25,
        }
    }
}

impl DatasetPlan {
    pub fn n_samples(&self) -> usize {
        self.speeds.len() * self.distances.len() * self.repeats
    }

    pub fn sweep_plan(&self) -> SweepPlan {
        SweepPlan {
            speeds: self.speeds.clone(),
            distances: self.distances.clone(),
            repeats: self.repeats,
            configs: (1..=N_CONFIGS).collect(),
            n_frames: self.n_frames,
        }
    }
}

/// Magnitudes of all DFT bins of the first data symbol on detectors 0..4,
/// detector-major.
pub fn extract_features(capture: &FrameWaveform, modem: &OfdmModem) -> Result<Vec<f64>> {
    if capture.n_rx() < FEATURE_DETECTORS {
        return Err(contract(format!(
            "feature capture needs {FEATURE_DETECTORS} detectors, got {}",
            capture.n_rx()
        )));
    }
    if capture.symbol_samples != modem.symbol_samples()
        || capture.samples.iter().any(|s| s.len() < 2 * capture.symbol_samples)
    {
        return Err(contract("feature capture must hold a pilot and a data symbol"));
    }
    let mut out = Vec::with_capacity(FEATURE_DETECTORS * modem.fft_size());
    for rx in 0..FEATURE_DETECTORS {
        let bins = modem.demodulate(capture.symbol(rx, 1))?;
        out.extend(bins.iter().map(|b| b.norm()));
    }
    Ok(out)
}

/// Runs the sweep and turns every (speed, distance, repeat) into a sample
/// labelled with its best configuration. Features come from the capture of
/// the labelled configuration. Sweep rows are returned alongside.
pub fn generate(
    sim: &LinkSimulator,
    plan: &DatasetPlan,
    seed: u64,
    parallelism: Option<usize>,
    progress: impl Fn(usize) + Sync,
) -> Result<(Vec<MLSample>, Vec<SweepRow>)> {
    let rows = sweep_with_progress(sim, &plan.sweep_plan(), seed, parallelism, progress)?;
    let samples = label_sweep(&rows, sim.modem())?;
    Ok((samples, rows))
}

/// Groups canonical sweep rows six at a time into samples.
pub fn label_sweep(rows: &[SweepRow], modem: &OfdmModem) -> Result<Vec<MLSample>> {
    if rows.len() % N_CONFIGS != 0 {
        return Err(contract("sweep rows do not cover all configurations"));
    }
    rows.chunks(N_CONFIGS)
        .enumerate()
        .map(|(id, group)| {
            let refs: Vec<&SweepRow> = group.iter().collect();
            let label6 = optimal_config(&refs)?;
            let row = group.iter().find(|r| r.config == label6).expect("checked by optimal_config");
            if group.iter().any(|r| r.speed != row.speed || r.distance != row.distance || r.repeat != row.repeat) {
                return Err(contract("sweep rows are not in canonical order"));
            }
            let capture = row.capture.as_ref().ok_or_else(|| contract("sweep row lacks a feature capture"))?;
            Ok(MLSample {
                sample_id: id,
                speed: row.speed,
                distance: row.distance,
                repeat: row.repeat,
                label6,
                features: extract_features(capture, modem)?,
            })
        })
        .collect()
}

/// Classification tasks derived from the six-class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    /// Frequency spreading or not.
    B1,
    /// Time spreading or not.
    B2,
    /// Rate 1/3 or 1/2.
    B3,
    /// No / frequency / time-frequency spreading.
    C3,
    C6,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::B1, Task::B2, Task::B3, Task::C3, Task::C6];

    pub fn n_classes(self) -> usize {
        match self {
            Task::B1 | Task::B2 | Task::B3 => 2,
            Task::C3 => 3,
            Task::C6 => 6,
        }
    }

    /// Zero-based class of a 1-based six-class label.
    pub fn project(self, label6: usize) -> Result<usize> {
        let cfg = LinkConfig::by_index(label6)?;
        Ok(match self {
            Task::B1 => usize::from(cfg.nf > 1),
            Task::B2 => usize::from(cfg.nt > 1),
            Task::B3 => usize::from(cfg.rate == crate::turbo::CodeRate::R13),
            Task::C3 => cfg.spreading_group(),
            Task::C6 => label6 - 1,
        })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| contract(format!("unknown task '{s}', expected one of: b1, b2, b3, c3, c6")))
    }
}

pub fn project_labels(samples: &[MLSample], task: Task) -> Vec<usize> {
    samples.iter().map(|s| s.label(task)).collect()
}

/// Stratified `k`-fold split of sample indices. Classes are shuffled
/// separately and dealt round-robin, so fold sizes differ by at most one.
pub fn kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(contract(format!("k must be at least 2, got {k}")));
    }
    if k > labels.len() {
        return Err(contract(format!("cannot split {} samples into {k} folds", labels.len())));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut order = Vec::with_capacity(labels.len());
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng_from_seed(mix_seed(seed, &[c as u64])));
        order.extend(members);
    }
    let mut folds = vec![Vec::new(); k];
    for (j, i) in order.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["sample_id", "speed_mps", "distance_m", "repeat", "label6"].map(String::from).into();
    h.extend((0..N_FEATURES).map(|i| format!("f{i:03}")));
    h
}

pub fn write_csv<W: Write>(samples: &[MLSample], out: W) -> Result<()> {
    let err = |e: csv::Error| contract(format!("writing dataset CSV: {e}"));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(csv_header()).map_err(err)?;
    for s in samples {
        if s.features.len() != N_FEATURES {
            return Err(contract(format!("sample {} has {} features", s.sample_id, s.features.len())));
        }
        let mut rec = vec![
            s.sample_id.to_string(),
            s.speed.to_string(),
            s.distance.to_string(),
            s.repeat.to_string(),
            s.label6.to_string(),
        ];
        rec.extend(s.features.iter().map(f64::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| contract(format!("writing dataset CSV: {e}")))?;
    Ok(())
}

/// Parses a dataset CSV; `origin` names the source in errors.
pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Vec<MLSample>> {
    let perr = |line: usize, message: String| Error::Parse { path: origin.to_path_buf(), line, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(perr(1, "empty file, expected a header row".into())),
        Some(h) => h.map_err(|e| perr(1, e.to_string()))?,
    };
    let want = csv_header();
    for (i, w) in want.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == w => {}
            got => return Err(perr(1, format!("column {}: expected '{w}', found '{}'", i + 1, got.unwrap_or("")))),
        }
    }
    if header.len() != want.len() {
        return Err(perr(1, format!("expected {} columns, found {}", want.len(), header.len())));
    }
    let mut out = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        if rec.len() != want.len() {
            return Err(perr(line, format!("expected {} fields, found {}", want.len(), rec.len())));
        }
        let parse_f = |j: usize| -> Result<f64> {
            let v: f64 = rec[j].parse().map_err(|_| perr(line, format!("column '{}': cannot parse '{}'", want[j], &rec[j])))?;
            if !v.is_finite() {
                return Err(perr(line, format!("column '{}': value must be finite", want[j])));
            }
            Ok(v)
        };
        let parse_u = |j: usize| -> Result<usize> {
            rec[j].parse().map_err(|_| perr(line, format!("column '{}': cannot parse '{}'", want[j], &rec[j])))
        };
        let label6 = parse_u(4)?;
        if !(1..=N_CONFIGS).contains(&label6) {
            return Err(perr(line, format!("column 'label6': {label6} is not in 1..=6")));
        }
        let features = (5..want.len()).map(parse_f).collect::<Result<Vec<_>>>()?;
        if let Some(j) = features.iter().position(|&f| f < 0.0) {
            return Err(perr(line, format!("column '{}': amplitudes must be nonnegative", want[j + 5])));
        }
        out.push(MLSample {
            sample_id: parse_u(0)?,
            speed: parse_f(1)?,
            distance: parse_f(2)?,
            repeat: parse_u(3)?,
            label6,
            features,
        });
    }
    Ok(out)
}

pub fn save(samples: &[MLSample], path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let file = std::fs::File::create(path).map_err(io)?;
    write_csv(samples, std::io::BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<Vec<MLSample>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_csv(std::io::BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::OfdmParams;
    use num_complex::Complex64;

    fn modem() -> OfdmModem {
        OfdmModem::new(&OfdmParams::default()).unwrap()
    }

    fn capture_from(symbols: &[Vec<f64>], n_rx: usize) -> FrameWaveform {
        let samples: Vec<Complex64> = symbols.iter().flatten().map(|&x| Complex64::new(x, 0.0)).collect();
        FrameWaveform { samples: vec![samples; n_rx], symbol_samples: 34, snapshots: vec![] }
    }

    #[test]
    fn features_of_silence_and_single_pair() {
        let m = modem();
        let zero = capture_from(&[vec![0.0; 34], vec![0.0; 34]], 4);
        assert_eq!(extract_features(&zero, &m).unwrap(), vec![0.0; 128]);
        let mut pairs = vec![Complex64::new(0.0, 0.0); 15];
        pairs[2] = Complex64::new(1.0, 0.0);
        let cap = capture_from(&[vec![0.0; 34], m.modulate(&pairs).unwrap()], 4);
        let f = extract_features(&cap, &m).unwrap();
        for rx in 0..4 {
            let nz: Vec<usize> = (0..32).filter(|&k| f[rx * 32 + k] > 1e-9).collect();
            assert_eq!(nz, vec![3, 29]);
        }
        assert!(extract_features(&capture_from(&[vec![0.0; 34], vec![0.0; 34]], 3), &m).is_err());
    }

    #[test]
    fn features_ignore_global_phase() {
        let m = modem();
        let mut rng = rng_from_seed(3);
        let base: Vec<Complex64> = (0..68)
            .map(|_| Complex64::new(rand::Rng::random_range(&mut rng, -1.0..1.0), rand::Rng::random_range(&mut rng, -1.0..1.0)))
            .collect();
        let rot = Complex64::from_polar(1.0, 0.77);
        let a = FrameWaveform { samples: vec![base.clone(); 4], symbol_samples: 34, snapshots: vec![] };
        let b = FrameWaveform { samples: vec![base.iter().map(|z| z * rot).collect(); 4], symbol_samples: 34, snapshots: vec![] };
        let (fa, fb) = (extract_features(&a, &m).unwrap(), extract_features(&b, &m).unwrap());
        for (x, y) in fa.iter().zip(&fb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn label_projection() {
        assert_eq!(Task::B1.project(5).unwrap(), 1);
        assert_eq!(Task::B2.project(5).unwrap(), 1);
        assert_eq!(Task::B3.project(5).unwrap(), 0);
        assert_eq!(Task::C3.project(5).unwrap(), 2);
        assert_eq!((1..=6).map(|l| Task::C6.project(l).unwrap()).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!((1..=6).filter(|&l| Task::B1.project(l).unwrap() == 0).count(), 2);
        assert!(Task::B1.project(7).is_err());
        assert_eq!("c3".parse::<Task>().unwrap(), Task::C3);
        assert!("b4".parse::<Task>().is_err());
    }

    #[test]
    fn folds_are_stratified_and_balanced() {
        let labels: Vec<usize> = (0..960).map(|i| (i * 7 + i / 13) % 6).collect();
        let folds = kfold_split(&labels, 5, 11).unwrap();
        assert!(folds.iter().all(|f| f.len() == 192));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..960).collect::<Vec<_>>());
        for c in 0..6 {
            let total = labels.iter().filter(|&&l| l == c).count();
            for f in &folds {
                let n = f.iter().filter(|&&i| labels[i] == c).count();
                assert!(n.abs_diff(total / 5) <= 1);
            }
        }
        assert_eq!(folds, kfold_split(&labels, 5, 11).unwrap());
        assert!(kfold_split(&labels[..4], 5, 1).is_err());
        assert!(kfold_split(&labels, 1, 1).is_err());
    }

    fn sample(id: usize) -> MLSample {
        MLSample {
            sample_id: id,
            speed: 0.3,
            distance: 17.0,
            repeat: 2,
            label6: 1 + id % 6,
            features: (0..128).map(|i| (i as f64 * 0.1 + id as f64).sqrt() / 3.0).collect(),
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let x: Vec<MLSample> = (0..5).map(sample).collect();
        let mut buf = Vec::new();
        write_csv(&x, &mut buf).unwrap();
        assert_eq!(read_csv(&buf[..], Path::new("m")).unwrap(), x);
        let text = String::from_utf8(buf).unwrap();
        let bad = text.replacen("label6", "label", 1);
        let err = read_csv(bad.as_bytes(), Path::new("m")).unwrap_err().to_string();
        assert!(err.contains("label6"), "{err}");
        assert!(read_csv(&b""[..], Path::new("m")).is_err());
        let broken = text.replacen(",0.3,", ",zz,", 1);
        let err = read_csv(broken.as_bytes(), Path::new("m")).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("speed_mps"), "{err}");
    }
}
