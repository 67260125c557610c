use rand::Rng;
use uwoc_core::dataset::{self, DatasetPlan, N_FEATURES};
use uwoc_core::linksim::{
    coverage, point_seed, read_sweep_csv, sweep, write_sweep_csv, ChannelMode, LinkConfig, LinkSimulator, SweepPlan,
    SweepRow,
};
use uwoc_core::phy::OfdmParams;
use uwoc_core::seed::rng_from_seed;

fn csv_bytes(rows: &[SweepRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_sweep_csv(rows, &mut out).unwrap();
    out
}

fn small_plan() -> SweepPlan {
    SweepPlan { speeds: vec![0.1, 0.5], distances: vec![8.0, 30.0], repeats: 2, configs: vec![1, 5], n_frames: 3 }
}

#[test]
fn noiseless_loopback_hundred_frames_per_config() {
    let sim = LinkSimulator::with_defaults().unwrap();
    let mut rng = rng_from_seed(100);
    for cfg in LinkConfig::all() {
        let k = sim.info_bits(&cfg).unwrap();
        for _ in 0..100 {
            let info: Vec<u8> = (0..k).map(|_| rng.random_range(0..2u8)).collect();
            let (out, _) = sim.transmit(&cfg, &info, ChannelMode::Identity, false, &mut rng).unwrap();
            assert_eq!(out, info, "config {}", cfg.index);
        }
    }
}

#[test]
fn zero_fer_rows_follow_the_closed_form() {
    let ofdm = OfdmParams::default();
    let t_ofdm = (ofdm.fft_size + ofdm.cp_samples) as f64 / ofdm.sample_rate;
    for cfg in LinkConfig::all() {
        let want = 2.0 * 32.0 * cfg.rate.value() / (2 * cfg.nf * cfg.nt) as f64 / t_ofdm;
        let got = uwoc_core::linksim::throughput(&cfg, &ofdm, 1, 0.0).unwrap();
        assert!((got / want - 1.0).abs() < 1e-12);
        assert_eq!(uwoc_core::linksim::throughput(&cfg, &ofdm, 1, 1.0).unwrap(), 0.0);
    }
}

#[test]
fn sweep_ignores_the_schedule() {
    let sim = LinkSimulator::with_defaults().unwrap();
    let plan = small_plan();
    let serial = sweep(&sim, &plan, 7, Some(1)).unwrap();
    assert_eq!(serial.len(), plan.n_points());
    for par in [Some(2), Some(5), None] {
        let rows = sweep(&sim, &plan, 7, par).unwrap();
        assert_eq!(rows, serial, "{par:?}");
    }
    assert_eq!(csv_bytes(&serial), csv_bytes(&sweep(&sim, &plan, 7, Some(3)).unwrap()));
    assert_ne!(csv_bytes(&serial), csv_bytes(&sweep(&sim, &plan, 8, Some(1)).unwrap()));
}

#[test]
fn rows_are_pure_functions_of_their_point() {
    let sim = LinkSimulator::with_defaults().unwrap();
    let plan = small_plan();
    let rows = sweep(&sim, &plan, 11, None).unwrap();
    let swapped = SweepPlan { configs: vec![5, 1], ..plan.clone() };
    let other = sweep(&sim, &swapped, 11, None).unwrap();
    for r in &rows {
        let twin = other
            .iter()
            .find(|o| (o.config, o.speed, o.distance, o.repeat) == (r.config, r.speed, r.distance, r.repeat))
            .unwrap();
        assert_eq!(twin, r);
        let vi = plan.speeds.iter().position(|&v| v == r.speed).unwrap();
        let di = plan.distances.iter().position(|&d| d == r.distance).unwrap();
        let cfg = LinkConfig::by_index(r.config).unwrap();
        let p = sim.simulate_point(&cfg, r.distance, r.speed, plan.n_frames, point_seed(11, vi, di, r.repeat, r.config)).unwrap();
        assert_eq!((p.n_frames, p.n_frame_errors), (r.n_frames, r.n_frame_errors));
        assert_eq!(p.capture, r.capture);
    }
}

#[test]
fn short_links_decode_and_long_links_fail() {
    let sim = LinkSimulator::with_defaults().unwrap();
    let plan = SweepPlan { speeds: vec![0.1], distances: vec![3.0, 60.0], repeats: 1, configs: vec![1, 6], n_frames: 10 };
    let rows = sweep(&sim, &plan, 3, None).unwrap();
    for r in &rows {
        let at = (r.config, r.distance, r.fer);
        if r.distance == 3.0 {
            assert_eq!(r.n_frame_errors, 0, "{at:?}");
        } else if r.config == 1 {
            assert_eq!(r.fer, 1.0, "{at:?}");
        }
    }
    assert_eq!(coverage(&rows, 1, 0.1, 0.1), 3.0);
    let back = read_sweep_csv(&csv_bytes(&rows)[..], std::path::Path::new("mem")).unwrap();
    assert_eq!(back.len(), rows.len());
    assert!(back.iter().zip(&rows).all(|(a, b)| a.fer == b.fer && a.throughput == b.throughput));
}

#[test]
fn frames_per_point_of_one_gives_binary_fer() {
    let sim = LinkSimulator::with_defaults().unwrap();
    let plan = SweepPlan { n_frames: 1, ..small_plan() };
    for r in sweep(&sim, &plan, 1, None).unwrap() {
        assert!(r.fer == 0.0 || r.fer == 1.0);
        assert_eq!(r.n_frames, 1);
    }
}

#[test]
fn dataset_regeneration_is_byte_identical() {
    let sim = LinkSimulator::with_defaults().unwrap();
    let plan = DatasetPlan { speeds: vec![0.1, 0.4], distances: vec![5.0, 25.0, 45.0], repeats: 2, n_frames: 2 };
    let bytes = |par| {
        let (samples, rows) = dataset::generate(&sim, &plan, 99, par, |_| {}).unwrap();
        assert_eq!(samples.len(), plan.n_samples());
        assert_eq!(rows.len(), plan.n_samples() * 6);
        assert!(samples.iter().all(|s| s.features.len() == N_FEATURES && (1..=6).contains(&s.label6)));
        let mut out = Vec::new();
        dataset::write_csv(&samples, &mut out).unwrap();
        out
    };
    let a = bytes(Some(1));
    assert_eq!(a, bytes(None));
    let back = dataset::read_csv(&a[..], std::path::Path::new("mem")).unwrap();
    let mut again = Vec::new();
    dataset::write_csv(&back, &mut again).unwrap();
    assert_eq!(again, a);
}
