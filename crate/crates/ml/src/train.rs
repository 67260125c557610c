//! Classifier specifications and training.
//!
//! Feature vectors hold one block of 32 bin magnitudes per detector; the
//! recurrent models read them as 32 steps of 4 detector values.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baseline::{AdaBoost, DecisionTree, LinearSvm, SvmParams, TreeParams};
use crate::error::{contract, Error, Result};
use crate::rnn::{RnnKind, RnnModel, Sequences};
use crate::standardize::Standardizer;
use uwoc_core::dataset::{FEATURE_DETECTORS, N_FEATURES};
use uwoc_core::seed::{mix_seed, rng_from_seed, SimRng};

pub const SEQ_INPUTS: usize = FEATURE_DETECTORS;
pub const SEQ_STEPS: usize = N_FEATURES / FEATURE_DETECTORS;

/// Rows per forward pass at prediction time.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Lstm,
    BiLstm,
    Gru,
    Tree,
    AdaBoost,
    Svm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::Lstm,
        ClassifierKind::BiLstm,
        ClassifierKind::Gru,
        ClassifierKind::Tree,
        ClassifierKind::AdaBoost,
        ClassifierKind::Svm,
    ];
    pub const BASELINES: [ClassifierKind; 3] = [ClassifierKind::Tree, ClassifierKind::AdaBoost, ClassifierKind::Svm];

    pub fn rnn(self) -> Option<RnnKind> {
        match self {
            ClassifierKind::Lstm => Some(RnnKind::Lstm),
            ClassifierKind::BiLstm => Some(RnnKind::BiLstm),
            ClassifierKind::Gru => Some(RnnKind::Gru),
            _ => None,
        }
    }
}

impl From<RnnKind> for ClassifierKind {
    fn from(k: RnnKind) -> Self {
        match k {
            RnnKind::Lstm => ClassifierKind::Lstm,
            RnnKind::BiLstm => ClassifierKind::BiLstm,
            RnnKind::Gru => ClassifierKind::Gru,
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Lstm => "lstm",
            ClassifierKind::BiLstm => "bilstm",
            ClassifierKind::Gru => "gru",
            ClassifierKind::Tree => "tree",
            ClassifierKind::AdaBoost => "adaboost",
            ClassifierKind::Svm => "svm",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL.into_iter().find(|k| k.to_string().eq_ignore_ascii_case(s)).ok_or_else(|| {
            contract(format!("unknown classifier '{s}', expected one of: lstm, bilstm, gru, tree, adaboost, svm"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    /// Hidden units of the recurrent kinds.
    pub n_h: usize,
    /// Training epochs of the recurrent kinds.
    pub n_p: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub tree: TreeParams,
    pub boost_rounds: usize,
    pub boost_learning_rate: f64,
    pub svm: SvmParams,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Lstm,
            n_h: 600,
            n_p: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            tree: TreeParams::default(),
            boost_rounds: 50,
            boost_learning_rate: 1.0,
            svm: SvmParams::default(),
        }
    }
}

impl ClassifierSpec {
    pub fn rnn(kind: RnnKind, n_h: usize, n_p: usize, seed: u64) -> Self {
        Self { kind: kind.into(), n_h, n_p, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.rnn().is_some() {
            if self.n_h == 0 || self.n_p == 0 {
                return Err(contract("recurrent classifiers need n_h >= 1 and n_p >= 1"));
            }
            if self.batch_size == 0 || !(self.learning_rate > 0.0) {
                return Err(contract("batch_size and learning_rate must be positive"));
            }
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Recurrent model plus the standardization it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnClassifier {
    pub model: RnnModel,
    pub scaler: Standardizer,
}

impl RnnClassifier {
    pub fn sequences(&self, rows: &[&[f64]]) -> Result<Sequences> {
        let z: Vec<Vec<f64>> = rows.iter().map(|r| self.scaler.transform(r)).collect();
        let zr: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
        Sequences::from_rows(&zr, SEQ_STEPS, SEQ_INPUTS)
    }

    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(PREDICT_CHUNK) {
            out.extend(self.model.predict(&self.sequences(chunk)?)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRnn {
    pub classifier: RnnClassifier,
    /// Mean training cross-entropy of each epoch.
    pub loss_trace: Vec<f64>,
}

fn check_rows(x: &[&[f64]], y: &[usize], n_classes: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(contract(format!("{} rows vs {} labels", x.len(), y.len())));
    }
    if x.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(contract("features contain non-finite values"));
    }
    let mut seen = vec![false; n_classes];
    for &l in y {
        *seen.get_mut(l).ok_or_else(|| contract(format!("label {l} outside 0..{n_classes}")))? = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(contract("training data must contain at least two classes"));
    }
    Ok(())
}

pub fn train_rnn(x: &[&[f64]], y: &[usize], n_classes: usize, spec: &ClassifierSpec) -> Result<TrainedRnn> {
    train_rnn_with(x, y, n_classes, spec, |_, _| Ok(()))
}

/// Trains for exactly `spec.n_p` epochs, calling `on_epoch(epoch, model)`
/// after each one (1-based). The shuffle stream does not depend on `n_p`,
/// so the model after epoch `e` is the model a run with `n_p = e` returns.
pub fn train_rnn_with(
    x: &[&[f64]],
    y: &[usize],
    n_classes: usize,
    spec: &ClassifierSpec,
    mut on_epoch: impl FnMut(usize, &RnnClassifier) -> Result<()>,
) -> Result<TrainedRnn> {
    let mut t = RnnTrainer::new(x, y, n_classes, spec)?;
    for _ in 0..spec.n_p {
        t.run_epoch()?;
        on_epoch(t.epoch(), t.classifier())?;
    }
    Ok(t.into_trained())
}

/// Training state advanced one epoch at a time, so a run can be stopped
/// and later continued to more epochs with the same result as one long run.
#[derive(Debug, Clone)]
pub struct RnnTrainer {
    clf: RnnClassifier,
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    batch_size: usize,
    adam: Adam,
    order: Vec<usize>,
    rng: SimRng,
    loss_trace: Vec<f64>,
}

impl RnnTrainer {
    /// `spec.n_p` is ignored; the caller decides how many epochs to run.
    pub fn new(x: &[&[f64]], y: &[usize], n_classes: usize, spec: &ClassifierSpec) -> Result<Self> {
        spec.validate()?;
        let kind = spec.kind.rnn().ok_or_else(|| contract(format!("{} is not a recurrent classifier", spec.kind)))?;
        check_rows(x, y, n_classes)?;
        let scaler = Standardizer::fit(x)?;
        let model = RnnModel::new(kind, SEQ_INPUTS, spec.n_h, n_classes, mix_seed(spec.seed, &[0]))?;
        let rows = x.iter().map(|r| scaler.transform(r)).collect();
        let adam = Adam::new(model.n_params(), spec.learning_rate);
        Ok(Self {
            clf: RnnClassifier { model, scaler },
            rows,
            labels: y.to_vec(),
            batch_size: spec.batch_size,
            adam,
            order: (0..y.len()).collect(),
            rng: rng_from_seed(mix_seed(spec.seed, &[1])),
            loss_trace: Vec::new(),
        })
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.loss_trace.len()
    }

    pub fn classifier(&self) -> &RnnClassifier {
        &self.clf
    }

    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    /// One pass over the shuffled training set; returns its mean loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        self.order.shuffle(&mut self.rng);
        let mut grad = vec![0.0; self.clf.model.n_params()];
        let mut total = 0.0;
        for batch in self.order.chunks(self.batch_size) {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| self.rows[i].as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| self.labels[i]).collect();
            let seq = Sequences::from_rows(&rows, SEQ_STEPS, SEQ_INPUTS)?;
            total += self.clf.model.loss_and_grad(&seq, &labels, &mut grad)? * batch.len() as f64;
            self.adam.step(self.clf.model.params_mut(), &grad);
        }
        let loss = total / self.labels.len() as f64;
        self.loss_trace.push(loss);
        Ok(loss)
    }

    pub fn into_trained(self) -> TrainedRnn {
        TrainedRnn { classifier: self.clf, loss_trace: self.loss_trace }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Rnn(RnnClassifier),
    Tree(DecisionTree),
    AdaBoost(AdaBoost),
    Svm(LinearSvm),
}

impl Model {
    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        Ok(match self {
            Model::Rnn(m) => m.predict(rows)?,
            Model::Tree(m) => rows.iter().map(|r| m.predict(r)).collect(),
            Model::AdaBoost(m) => rows.iter().map(|r| m.predict(r)).collect(),
            Model::Svm(m) => rows.iter().map(|r| m.predict(r)).collect(),
        })
    }
}

/// Trains any classifier kind on `x` with zero-based labels `y`.
pub fn fit(spec: &ClassifierSpec, x: &[&[f64]], y: &[usize], n_classes: usize) -> Result<Model> {
    spec.validate()?;
    check_rows(x, y, n_classes)?;
    Ok(match spec.kind {
        ClassifierKind::Lstm | ClassifierKind::BiLstm | ClassifierKind::Gru => {
            Model::Rnn(train_rnn(x, y, n_classes, spec)?.classifier)
        }
        ClassifierKind::Tree => Model::Tree(DecisionTree::fit(x, y, n_classes, spec.tree)?),
        ClassifierKind::AdaBoost => {
            Model::AdaBoost(AdaBoost::fit(x, y, n_classes, spec.boost_rounds, spec.boost_learning_rate)?)
        }
        ClassifierKind::Svm => Model::Svm(LinearSvm::fit(x, y, n_classes, spec.svm, spec.seed)?),
    })
}
