//! k-fold cross-validation.

use crate::error::{contract, Result};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::train::{fit, ClassifierSpec, RnnTrainer};
use uwoc_core::dataset::{kfold_split, project_labels, MLSample, Task};
use uwoc_core::seed::mix_seed;

/// Feature rows and projected labels of a task, ready for training.
#[derive(Debug, Clone)]
pub struct TaskData<'a> {
    pub rows: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl<'a> TaskData<'a> {
    pub fn new(samples: &'a [MLSample], task: Task) -> Self {
        Self {
            rows: samples.iter().map(|s| s.features.as_slice()).collect(),
            labels: project_labels(samples, task),
            n_classes: task.n_classes(),
        }
    }

    pub fn folds(&self, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
        Ok(kfold_split(&self.labels, k, seed)?)
    }

    fn split(&self, folds: &[Vec<usize>], j: usize) -> (Vec<&'a [f64]>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (f, idx) in folds.iter().enumerate() {
            if f != j {
                rows.extend(idx.iter().map(|&i| self.rows[i]));
                labels.extend(idx.iter().map(|&i| self.labels[i]));
            }
        }
        (rows, labels)
    }

    fn held_out(&self, fold: &[usize]) -> (Vec<&'a [f64]>, Vec<usize>) {
        (fold.iter().map(|&i| self.rows[i]).collect(), fold.iter().map(|&i| self.labels[i]).collect())
    }
}

fn fold_spec(spec: &ClassifierSpec, j: usize) -> ClassifierSpec {
    ClassifierSpec { seed: mix_seed(spec.seed, &[j as u64]), ..spec.clone() }
}

/// Trains on every fold but `j` and scores fold `j`. Each fold owns its
/// seed, so the result does not depend on which folds ran before.
pub fn evaluate_fold(spec: &ClassifierSpec, data: &TaskData, folds: &[Vec<usize>], j: usize) -> Result<ConfusionMatrix> {
    let (x, y) = data.split(folds, j);
    let model = fit(&fold_spec(spec, j), &x, &y, data.n_classes)?;
    let (vx, vy) = data.held_out(&folds[j]);
    ConfusionMatrix::from_predictions(data.n_classes, &vy, &model.predict(&vx)?)
}

/// Cross-validated metrics of `spec` on `task`; `seed` fixes the split.
pub fn evaluate(spec: &ClassifierSpec, samples: &[MLSample], task: Task, k: usize, seed: u64) -> Result<MetricsReport> {
    let data = TaskData::new(samples, task);
    let folds = data.folds(k, seed)?;
    let cms = (0..k).map(|j| evaluate_fold(spec, &data, &folds, j)).collect::<Result<Vec<_>>>()?;
    MetricsReport::from_folds(&cms)
}

/// Reports of a recurrent spec after each epoch count in `epochs`, from one
/// training run per fold up to the largest count. Identical to calling
/// `evaluate` once per count with `n_p` set to it.
pub fn evaluate_epochs(
    spec: &ClassifierSpec,
    samples: &[MLSample],
    task: Task,
    k: usize,
    seed: u64,
    epochs: &[usize],
) -> Result<Vec<MetricsReport>> {
    let data = TaskData::new(samples, task);
    let folds = data.folds(k, seed)?;
    evaluate_epochs_on(spec, &data, &folds, epochs)
}

pub fn evaluate_epochs_on(
    spec: &ClassifierSpec,
    data: &TaskData,
    folds: &[Vec<usize>],
    epochs: &[usize],
) -> Result<Vec<MetricsReport>> {
    if spec.kind.rnn().is_none() {
        return Err(contract(format!("{} has no epoch schedule", spec.kind)));
    }
    if epochs.is_empty() || epochs.contains(&0) {
        return Err(contract("epoch counts must be given and positive"));
    }
    let mut trainers = fold_trainers(spec, data, folds)?;
    let mut sorted = epochs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let reports = advance_folds(&mut trainers, data, folds, &sorted)?;
    Ok(epochs.iter().map(|e| reports[sorted.binary_search(e).expect("listed")].clone()).collect())
}

/// One fresh trainer per fold, each on every other fold's rows.
pub fn fold_trainers(spec: &ClassifierSpec, data: &TaskData, folds: &[Vec<usize>]) -> Result<Vec<RnnTrainer>> {
    (0..folds.len())
        .map(|j| {
            let (x, y) = data.split(folds, j);
            RnnTrainer::new(&x, &y, data.n_classes, &fold_spec(spec, j))
        })
        .collect()
}

/// Runs every fold's trainer up to each count in ascending `epochs`,
/// scoring the held-out folds at each stop. Counts below a trainer's
/// current epoch are a contract error.
pub fn advance_folds(
    trainers: &mut [RnnTrainer],
    data: &TaskData,
    folds: &[Vec<usize>],
    epochs: &[usize],
) -> Result<Vec<MetricsReport>> {
    if trainers.len() != folds.len() {
        return Err(contract("one trainer per fold required"));
    }
    // per_epoch[e][j]: fold j's matrix after epochs[e]
    let mut per_epoch = vec![Vec::with_capacity(folds.len()); epochs.len()];
    for (j, (t, fold)) in trainers.iter_mut().zip(folds).enumerate() {
        let (vx, vy) = data.held_out(fold);
        for (e, &target) in epochs.iter().enumerate() {
            if target < t.epoch() {
                return Err(contract(format!("fold {j} is already past epoch {target}")));
            }
            while t.epoch() < target {
                t.run_epoch()?;
            }
            let pred = t.classifier().predict(&vx)?;
            per_epoch[e].push(ConfusionMatrix::from_predictions(data.n_classes, &vy, &pred)?);
        }
    }
    per_epoch.iter().map(|cms| MetricsReport::from_folds(cms)).collect()
}
