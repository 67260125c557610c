//! SwitchOpt: alternating grid search over hidden units and epochs for each
//! recurrent candidate, then selection of the best candidate.
//!
//! Each alternation first searches `n_h` with `n_p` fixed, then `n_p` with
//! `n_h` fixed, starting from `n_p = beta`. Both half-steps include the
//! incumbent point, so the incumbent score never decreases.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::evaluate::{advance_folds, fold_trainers, TaskData};
use crate::metrics::MetricsReport;
use crate::rnn::RnnKind;
use crate::train::{ClassifierSpec, RnnTrainer};
use uwoc_core::dataset::{MLSample, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchOptParams {
    pub candidates: Vec<RnnKind>,
    pub grid_nh: Vec<usize>,
    pub grid_np: Vec<usize>,
    pub beta: usize,
    pub epsilon: f64,
    pub max_alternations: usize,
    pub task: Task,
    pub k: usize,
    pub seed: u64,
}

impl Default for SwitchOptParams {
    fn default() -> Self {
        Self {
            candidates: RnnKind::ALL.to_vec(),
            grid_nh: vec![200, 400, 600],
            grid_np: (5..=50).step_by(5).collect(),
            beta: 10,
            epsilon: 0.005,
            max_alternations: 5,
            task: Task::C6,
            k: 5,
            seed: 0,
        }
    }
}

fn check_grid(name: &str, grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(contract(format!("{name} is empty")));
    }
    if grid.contains(&0) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(contract(format!("{name} must be positive and strictly ascending")));
    }
    Ok(())
}

impl SwitchOptParams {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(contract("no candidates"));
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if self.candidates[..i].contains(c) {
                return Err(contract(format!("candidate {c} listed twice")));
            }
        }
        check_grid("grid_nh", &self.grid_nh)?;
        check_grid("grid_np", &self.grid_np)?;
        if !self.grid_np.contains(&self.beta) {
            return Err(contract(format!("beta = {} is not in grid_np", self.beta)));
        }
        if !(self.epsilon > 0.0) {
            return Err(contract(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_alternations == 0 {
            return Err(contract("max_alternations must be at least 1"));
        }
        Ok(())
    }

    /// Candidates in tie-break order.
    fn ordered_candidates(&self) -> Vec<RnnKind> {
        RnnKind::ALL.into_iter().filter(|k| self.candidates.contains(k)).collect()
    }
}

/// Source of Ω values. `omega(u, n_h, n_ps)` returns one score per entry of
/// `n_ps`, in order.
pub trait Evaluator {
    fn omega(&mut self, u: RnnKind, n_h: usize, n_ps: &[usize]) -> Result<Vec<f64>>;

    /// Full report for a point already scored, if the evaluator keeps one.
    fn report(&self, _u: RnnKind, _n_h: usize, _n_p: usize) -> Option<MetricsReport> {
        None
    }
}

/// Closure-backed evaluator, one call per point.
pub struct FnEvaluator<F>(pub F);

impl<F: FnMut(RnnKind, usize, usize) -> Result<f64>> Evaluator for FnEvaluator<F> {
    fn omega(&mut self, u: RnnKind, n_h: usize, n_ps: &[usize]) -> Result<Vec<f64>> {
        n_ps.iter().map(|&n_p| (self.0)(u, n_h, n_p)).collect()
    }
}

/// k-fold accuracy on a dataset. Fold trainers of the current candidate are
/// kept between calls, so asking for more epochs at a known `n_h` continues
/// training instead of restarting it, and every epoch grid value passed on
/// the way is scored too.
pub struct CrossValidator<'a> {
    data: TaskData<'a>,
    folds: Vec<Vec<usize>>,
    base: ClassifierSpec,
    checkpoints: Vec<usize>,
    reports: HashMap<(RnnKind, usize, usize), MetricsReport>,
    trainers: HashMap<(RnnKind, usize), Vec<RnnTrainer>>,
}

impl<'a> CrossValidator<'a> {
    /// `base` supplies the optimizer settings; its kind, size and seed are
    /// replaced per evaluation.
    pub fn new(samples: &'a [MLSample], params: &SwitchOptParams, base: ClassifierSpec) -> Result<Self> {
        let data = TaskData::new(samples, params.task);
        let folds = data.folds(params.k, params.seed)?;
        Ok(Self {
            data,
            folds,
            base: ClassifierSpec { seed: params.seed, ..base },
            checkpoints: params.grid_np.clone(),
            reports: HashMap::new(),
            trainers: HashMap::new(),
        })
    }

    fn train_to(&mut self, u: RnnKind, n_h: usize, missing: &[usize]) -> Result<()> {
        // Only the current candidate's trainers are worth their memory.
        self.trainers.retain(|(k, _), _| *k == u);
        let first = missing[0];
        let resumable = self.trainers.get(&(u, n_h)).is_some_and(|t| t[0].epoch() <= first);
        let mut trainers = match self.trainers.remove(&(u, n_h)) {
            Some(t) if resumable => t,
            _ => {
                let spec = ClassifierSpec { kind: u.into(), n_h, ..self.base.clone() };
                fold_trainers(&spec, &self.data, &self.folds)?
            }
        };
        let start = trainers[0].epoch();
        let last = *missing.last().expect("nonempty");
        let mut stops: Vec<usize> = self.checkpoints.iter().copied().filter(|&e| e > start && e <= last).collect();
        stops.extend_from_slice(missing);
        stops.sort_unstable();
        stops.dedup();
        let reports = advance_folds(&mut trainers, &self.data, &self.folds, &stops)?;
        for (e, r) in stops.into_iter().zip(reports) {
            self.reports.insert((u, n_h, e), r);
        }
        self.trainers.insert((u, n_h), trainers);
        Ok(())
    }
}

impl Evaluator for CrossValidator<'_> {
    fn omega(&mut self, u: RnnKind, n_h: usize, n_ps: &[usize]) -> Result<Vec<f64>> {
        let mut missing: Vec<usize> = n_ps.iter().copied().filter(|&e| !self.reports.contains_key(&(u, n_h, e))).collect();
        missing.sort_unstable();
        missing.dedup();
        if missing.contains(&0) {
            return Err(contract("epoch counts must be positive"));
        }
        if !missing.is_empty() {
            self.train_to(u, n_h, &missing)?;
        }
        Ok(n_ps.iter().map(|&e| self.reports[&(u, n_h, e)].accuracy).collect())
    }

    fn report(&self, u: RnnKind, n_h: usize, n_p: usize) -> Option<MetricsReport> {
        self.reports.get(&(u, n_h, n_p)).cloned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfStep {
    /// `n_h` searched, `n_p` fixed.
    HiddenUnits,
    /// `n_p` searched, `n_h` fixed.
    Epochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub candidate: RnnKind,
    /// 1-based alternation index.
    pub iteration: usize,
    pub half_step: HalfStep,
    pub n_h: usize,
    pub n_p: usize,
    pub omega: f64,
    /// Served from the cache instead of a new training run.
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub candidate: RnnKind,
    pub n_h: usize,
    pub n_p: usize,
    pub omega: f64,
    pub alternations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchOptResult {
    pub u_opt: RnnKind,
    pub n_h_opt: usize,
    pub n_p_opt: usize,
    pub omega: f64,
    pub metrics: Option<MetricsReport>,
    pub candidates: Vec<CandidateResult>,
    pub trace: Vec<TraceEntry>,
}

/// A failed run together with everything traced before the failure.
#[derive(Debug, thiserror::Error)]
#[error("switchopt aborted after {} evaluations: {error}", trace.len())]
pub struct Aborted {
    #[source]
    pub error: Error,
    pub trace: Vec<TraceEntry>,
}

struct Search<'e, E: Evaluator, L: FnMut(&TraceEntry)> {
    eval: &'e mut E,
    seed: u64,
    cache: HashMap<(RnnKind, usize, usize, u64), f64>,
    trace: Vec<TraceEntry>,
    on_entry: L,
}

impl<E: Evaluator, L: FnMut(&TraceEntry)> Search<'_, E, L> {
    /// Scores `points` (all sharing `n_h`) and returns the first maximizer.
    fn half_step(
        &mut self,
        u: RnnKind,
        iteration: usize,
        half_step: HalfStep,
        points: &[(usize, usize)],
    ) -> Result<(usize, usize, f64)> {
        let seed = self.seed;
        let mut fresh: Vec<(usize, usize)> = Vec::new();
        for &(n_h, n_p) in points {
            if !self.cache.contains_key(&(u, n_h, n_p, seed)) {
                fresh.push((n_h, n_p));
            }
        }
        let mut by_nh: Vec<(usize, Vec<usize>)> = Vec::new();
        for &(n_h, n_p) in &fresh {
            match by_nh.iter_mut().find(|(h, _)| *h == n_h) {
                Some((_, ps)) => ps.push(n_p),
                None => by_nh.push((n_h, vec![n_p])),
            }
        }
        for (n_h, ps) in by_nh {
            let scores = self.eval.omega(u, n_h, &ps)?;
            if scores.len() != ps.len() {
                return Err(contract("evaluator returned the wrong number of scores"));
            }
            for (n_p, omega) in ps.into_iter().zip(scores) {
                if omega.is_nan() {
                    return Err(contract(format!("evaluator returned NaN at ({u}, {n_h}, {n_p})")));
                }
                self.cache.insert((u, n_h, n_p, seed), omega);
            }
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for &(n_h, n_p) in points {
            let omega = self.cache[&(u, n_h, n_p, seed)];
            let entry = TraceEntry { candidate: u, iteration, half_step, n_h, n_p, omega, cached: !fresh.contains(&(n_h, n_p)) };
            (self.on_entry)(&entry);
            self.trace.push(entry);
            if best.map_or(true, |(_, _, b)| omega > b) {
                best = Some((n_h, n_p, omega));
            }
        }
        best.ok_or_else(|| contract("empty half-step"))
    }

    fn alternate(&mut self, u: RnnKind, p: &SwitchOptParams) -> Result<CandidateResult> {
        let mut n_p = p.beta;
        let mut n_h = p.grid_nh[0];
        let mut prev: Option<f64> = None;
        let mut omega = f64::NEG_INFINITY;
        let mut i = 0;
        while i < p.max_alternations {
            i += 1;
            let pts: Vec<_> = p.grid_nh.iter().map(|&h| (h, n_p)).collect();
            let (h, _, o) = self.half_step(u, i, HalfStep::HiddenUnits, &pts)?;
            n_h = h;
            // The score before the first alternation is the best point at n_p = beta.
            let before = *prev.get_or_insert(o);
            let pts: Vec<_> = p.grid_np.iter().map(|&e| (n_h, e)).collect();
            let (_, e, o) = self.half_step(u, i, HalfStep::Epochs, &pts)?;
            n_p = e;
            omega = o;
            if (omega - before).abs() < p.epsilon {
                break;
            }
            prev = Some(omega);
        }
        Ok(CandidateResult { candidate: u, n_h, n_p, omega, alternations: i })
    }
}

/// Optimizes a single candidate.
pub fn alternate_optimize(
    u: RnnKind,
    params: &SwitchOptParams,
    eval: &mut impl Evaluator,
) -> std::result::Result<(CandidateResult, Vec<TraceEntry>), Aborted> {
    let one = SwitchOptParams { candidates: vec![u], ..params.clone() };
    let r = run_switchopt(&one, eval)?;
    Ok((r.candidates.into_iter().next().expect("one candidate"), r.trace))
}

pub fn run_switchopt(
    params: &SwitchOptParams,
    eval: &mut impl Evaluator,
) -> std::result::Result<SwitchOptResult, Aborted> {
    run_switchopt_with(params, eval, |_| {})
}

/// Runs every candidate and picks the best final score, ties going to the
/// earlier kind in LSTM, Bi-LSTM, GRU order. `on_entry` sees each trace
/// entry as it is recorded.
pub fn run_switchopt_with<E: Evaluator>(
    params: &SwitchOptParams,
    eval: &mut E,
    on_entry: impl FnMut(&TraceEntry),
) -> std::result::Result<SwitchOptResult, Aborted> {
    params.validate().map_err(|error| Aborted { error, trace: Vec::new() })?;
    let mut search = Search { eval, seed: params.seed, cache: HashMap::new(), trace: Vec::new(), on_entry };
    let mut results = Vec::new();
    for u in params.ordered_candidates() {
        match search.alternate(u, params) {
            Ok(r) => results.push(r),
            Err(error) => return Err(Aborted { error, trace: search.trace }),
        }
    }
    let mut best = &results[0];
    for r in &results[1..] {
        if r.omega > best.omega {
            best = r;
        }
    }
    let metrics = search.eval.report(best.candidate, best.n_h, best.n_p);
    Ok(SwitchOptResult {
        u_opt: best.candidate,
        n_h_opt: best.n_h,
        n_p_opt: best.n_p,
        omega: best.omega,
        metrics,
        candidates: results.clone(),
        trace: search.trace,
    })
}
