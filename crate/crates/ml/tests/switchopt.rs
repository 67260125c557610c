use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use uwoc_core::dataset::{MLSample, Task, N_FEATURES};
use uwoc_core::seed::rng_from_seed;
use uwoc_ml::switchopt::{run_switchopt, CrossValidator, FnEvaluator, HalfStep, SwitchOptParams, SwitchOptResult};
use uwoc_ml::{evaluate, ClassifierSpec, Result, RnnKind};

fn quad(h: usize, p: usize) -> f64 {
    -((h as f64 - 600.0).powi(2)) - (p as f64 - 20.0).powi(2)
}

fn mock(f: impl Fn(RnnKind, usize, usize) -> f64) -> FnEvaluator<impl FnMut(RnnKind, usize, usize) -> Result<f64>> {
    FnEvaluator(move |u, h, p| Ok(f(u, h, p)))
}

fn wide() -> SwitchOptParams {
    SwitchOptParams { grid_nh: vec![200, 400, 600, 800, 1000], epsilon: 1e-9, max_alternations: 10, ..Default::default() }
}

fn check_invariants(r: &SwitchOptResult, p: &SwitchOptParams) {
    // every half-step covers its grid exactly once
    let mut steps: BTreeMap<(u8, usize, u8), Vec<(usize, usize)>> = BTreeMap::new();
    for t in &r.trace {
        let key = (t.candidate as u8, t.iteration, t.half_step as u8);
        steps.entry(key).or_default().push((t.n_h, t.n_p));
    }
    for ((_, _, hs), pts) in &steps {
        let grid_len = if *hs == HalfStep::HiddenUnits as u8 { p.grid_nh.len() } else { p.grid_np.len() };
        assert_eq!(pts.len(), grid_len);
        assert_eq!(pts.iter().collect::<HashSet<_>>().len(), grid_len);
    }
    for c in &r.candidates {
        let mut incumbent = f64::NEG_INFINITY;
        let mut it = 0;
        let mut best_in_step = f64::NEG_INFINITY;
        let mut last_step = None;
        for t in r.trace.iter().filter(|t| t.candidate == c.candidate) {
            let step = (t.iteration, t.half_step);
            if last_step.is_some() && last_step != Some(step) {
                assert!(best_in_step >= incumbent);
                incumbent = best_in_step;
                best_in_step = f64::NEG_INFINITY;
            }
            last_step = Some(step);
            best_in_step = best_in_step.max(t.omega);
            it = it.max(t.iteration);
        }
        assert!(best_in_step >= incumbent);
        assert_eq!(best_in_step, c.omega);
        assert_eq!(it, c.alternations);
        assert!(c.alternations <= p.max_alternations);
        assert!(r.omega >= c.omega);
    }
    assert!(r
        .trace
        .iter()
        .any(|t| (t.candidate, t.n_h, t.n_p, t.omega) == (r.u_opt, r.n_h_opt, r.n_p_opt, r.omega)));
}

#[test]
fn quadratic_mock_converges_to_its_maximizer() {
    let p = wide();
    let r = run_switchopt(&p, &mut mock(|_, h, e| quad(h, e))).unwrap();
    assert_eq!((r.n_h_opt, r.n_p_opt), (600, 20));
    assert_eq!(r.omega, 0.0);
    assert_eq!(r.u_opt, RnnKind::Lstm);
    check_invariants(&r, &p);
}

#[test]
fn degenerate_grids_take_one_alternation() {
    let p = SwitchOptParams { grid_nh: vec![400], grid_np: vec![10], beta: 10, ..Default::default() };
    let r = run_switchopt(&p, &mut mock(|_, h, e| quad(h, e))).unwrap();
    assert_eq!((r.n_h_opt, r.n_p_opt), (400, 10));
    assert!(r.candidates.iter().all(|c| c.alternations == 1));
    assert_eq!(r.trace.len(), 6);
    check_invariants(&r, &p);
}

#[test]
fn infinite_epsilon_stops_after_one_alternation() {
    let p = SwitchOptParams { epsilon: f64::INFINITY, ..wide() };
    let r = run_switchopt(&p, &mut mock(|_, h, e| quad(h, e))).unwrap();
    assert!(r.trace.iter().all(|t| t.iteration == 1));
    assert!(r.candidates.iter().all(|c| c.alternations == 1));
    check_invariants(&r, &p);
}

#[test]
fn ties_go_to_the_earlier_candidate() {
    let score = |u: RnnKind| match u {
        RnnKind::Lstm => 0.90,
        RnnKind::BiLstm => 0.95,
        RnnKind::Gru => 0.95,
    };
    let p = SwitchOptParams::default();
    let r = run_switchopt(&p, &mut mock(move |u, _, _| score(u))).unwrap();
    assert_eq!(r.u_opt, RnnKind::BiLstm);
    check_invariants(&r, &p);

    // listing order does not matter
    let p = SwitchOptParams { candidates: vec![RnnKind::Gru, RnnKind::BiLstm, RnnKind::Lstm], ..p };
    assert_eq!(run_switchopt(&p, &mut mock(move |u, _, _| score(u))).unwrap().u_opt, RnnKind::BiLstm);

    let p = SwitchOptParams { candidates: vec![RnnKind::Gru], ..p };
    assert_eq!(run_switchopt(&p, &mut mock(move |u, _, _| score(u))).unwrap().u_opt, RnnKind::Gru);
}

#[test]
fn bumpy_surface_keeps_the_invariants() {
    for seed in 0..20u64 {
        let f = move |u: RnnKind, h: usize, e: usize| {
            let z = uwoc_core::seed::mix_seed(seed, &[u as u64, h as u64, e as u64]);
            (z % 1000) as f64 / 1000.0
        };
        let p = SwitchOptParams { epsilon: 1e-3, seed, ..wide() };
        let a = run_switchopt(&p, &mut mock(f)).unwrap();
        check_invariants(&a, &p);
        let b = run_switchopt(&p, &mut mock(f)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn result_json_layout() {
    let r = run_switchopt(&SwitchOptParams::default(), &mut mock(|_, h, e| quad(h, e))).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    for key in ["u_opt", "n_h_opt", "n_p_opt", "metrics", "trace"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["u_opt"], "lstm");
    assert_eq!(v["trace"][0]["half_step"], "hidden_units");
}

fn small_set() -> Vec<MLSample> {
    let mut rng = rng_from_seed(3);
    (0..40)
        .map(|i| {
            let label6 = 1 + i % 6;
            let features = (0..N_FEATURES)
                .map(|j| if label6 >= 4 && j < 32 { 1.0 } else { 0.0 } + rng.random_range(0.0..0.3))
                .collect();
            MLSample { sample_id: i, speed: 0.5, distance: i as f64, repeat: 0, label6, features }
        })
        .collect()
}

#[test]
fn resumed_training_matches_fresh_runs() {
    let samples = small_set();
    let p = SwitchOptParams { grid_np: vec![1, 2, 4], beta: 2, task: Task::B1, k: 4, seed: 9, ..Default::default() };
    let base = ClassifierSpec { batch_size: 8, ..Default::default() };
    let mut cv = CrossValidator::new(&samples, &p, base.clone()).unwrap();
    use uwoc_ml::switchopt::Evaluator;
    let a = cv.omega(RnnKind::Lstm, 3, &[2]).unwrap();
    let b = cv.omega(RnnKind::Lstm, 3, &[4, 3, 1]).unwrap();
    for (n_p, omega) in [(2, a[0]), (4, b[0]), (3, b[1]), (1, b[2])] {
        let spec = ClassifierSpec { kind: RnnKind::Lstm.into(), n_h: 3, n_p, seed: 9, ..base.clone() };
        let direct = evaluate(&spec, &samples, Task::B1, 4, 9).unwrap();
        assert_eq!(direct.accuracy, omega, "n_p = {n_p}");
        assert_eq!(cv.report(RnnKind::Lstm, 3, n_p), Some(direct));
    }
}

#[test]
fn cross_validator_end_to_end() {
    let samples = small_set();
    let p = SwitchOptParams {
        candidates: vec![RnnKind::Gru],
        grid_nh: vec![4, 8],
        grid_np: vec![1, 2, 3],
        beta: 2,
        max_alternations: 2,
        task: Task::B1,
        k: 4,
        seed: 5,
        ..Default::default()
    };
    let base = ClassifierSpec { batch_size: 8, ..Default::default() };
    let mut cv = CrossValidator::new(&samples, &p, base.clone()).unwrap();
    let r = run_switchopt(&p, &mut cv).unwrap();
    check_invariants(&r, &p);
    let m = r.metrics.clone().expect("report of the chosen point");
    assert_eq!(m.accuracy, r.omega);
    let direct = evaluate(
        &ClassifierSpec { kind: r.u_opt.into(), n_h: r.n_h_opt, n_p: r.n_p_opt, seed: 5, ..base },
        &samples,
        Task::B1,
        4,
        5,
    )
    .unwrap();
    assert_eq!(direct, m);
}
