use num_complex::Complex64;
use proptest::prelude::*;
use uwoc_core::channel::{attenuation, link_snr, OpticalLinkParams};
use uwoc_core::dataset::kfold_split;
use uwoc_core::linksim::{throughput, LinkConfig};
use uwoc_core::phy::{despread_symbol, hadamard, qpsk_hard, qpsk_map, spread_symbol, OfdmModem, OfdmParams, SpreadingLayout, SpreadingSpec};
use uwoc_core::turbo::{build_interleaver, invert_permutation};

fn complex() -> impl Strategy<Value = Complex64> {
    (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

fn lengths() -> impl Strategy<Value = (usize, usize)> {
    (0..5u32, 0..4u32).prop_map(|(f, t)| (1 << f, 1 << t))
}

proptest! {
    #[test]
    fn qpsk_hard_inverts_map(bits in prop::collection::vec(0..2u8, 0..40).prop_filter("even", |b| b.len() % 2 == 0)) {
        let sym = qpsk_map(&bits).unwrap();
        prop_assert!(sym.iter().all(|s| (s.norm_sqr() - 1.0).abs() < 1e-15));
        prop_assert_eq!(qpsk_hard(&sym), bits);
    }

    #[test]
    fn despreading_inverts_spreading(s in complex(), (nf, nt) in lengths()) {
        let spec = SpreadingSpec::new(nf, nt);
        let chips = spread_symbol(s, &spec).unwrap();
        prop_assert_eq!(chips.len(), nf * nt);
        prop_assert!((despread_symbol(&chips, &spec).unwrap() - s).norm() < 1e-10);
    }

    #[test]
    fn grid_spreading_roundtrip((nf, nt) in lengths(), seed in any::<u64>()) {
        let layout = SpreadingLayout::new(SpreadingSpec::new(nf, nt), 80, 15).unwrap();
        let mut x = seed;
        let symbols: Vec<Complex64> = (0..layout.capacity()).map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            Complex64::new((x >> 40) as f64 / 1e7 - 0.8, (x >> 20 & 0xfffff) as f64 / 1e6 - 0.5)
        }).collect();
        let back = layout.despread(&layout.spread(&symbols).unwrap()).unwrap();
        prop_assert!(back.iter().zip(&symbols).all(|(a, b)| (a - b).norm() < 1e-10));
    }

    #[test]
    fn ofdm_is_real_and_invertible(pairs in prop::collection::vec(complex(), 15)) {
        let modem = OfdmModem::new(&OfdmParams::default()).unwrap();
        let samples = modem.modulate(&pairs).unwrap();
        prop_assert_eq!(samples.len(), 34);
        // cyclic prefix repeats the tail
        prop_assert_eq!(&samples[..2], &samples[32..]);
        let bins = modem.demodulate(&samples).unwrap();
        let half = modem.conj_combine(&bins);
        prop_assert!(half.iter().zip(&pairs).all(|(a, b)| (a - b).norm() < 1e-10 * (1.0 + b.norm())));
        prop_assert!(bins[0].norm() < 1e-10 && bins[16].norm() < 1e-10);
    }

    #[test]
    fn attenuation_is_multiplicative(a in 0.0..50.0f64, b in 0.0..50.0f64, c in 0.0..1.0f64) {
        let joint = attenuation(c, a + b).unwrap();
        prop_assert!((joint - attenuation(c, a).unwrap() * attenuation(c, b).unwrap()).abs() <= 1e-14);
    }

    #[test]
    fn snr_falls_with_distance(d in 0.5..80.0f64, step in 0.01..10.0f64) {
        let p = OpticalLinkParams::default();
        prop_assert!(link_snr(&p, d + step).unwrap() < link_snr(&p, d).unwrap());
    }

    #[test]
    fn throughput_is_linear_in_success(fer in 0.0..=1.0f64, c in 1..=6usize) {
        let cfg = LinkConfig::by_index(c).unwrap();
        let ofdm = OfdmParams::default();
        let full = throughput(&cfg, &ofdm, 1, 0.0).unwrap();
        prop_assert!((throughput(&cfg, &ofdm, 1, fer).unwrap() - full * (1.0 - fer)).abs() <= 1e-6);
    }

    #[test]
    fn interleavers_are_permutations(k in 1..2000usize, seed in any::<u64>()) {
        let p = build_interleaver(k, seed).unwrap();
        let inv = invert_permutation(&p);
        prop_assert!(p.iter().enumerate().all(|(i, &j)| inv[j] == i));
    }

    #[test]
    fn folds_partition_the_samples(labels in prop::collection::vec(0..4usize, 10..200), k in 2..10usize, seed in any::<u64>()) {
        let folds = kfold_split(&labels, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn hadamard_rows_are_exactly_orthogonal() {
    for n in [1, 2, 4, 8, 16, 32, 64] {
        let h = hadamard(n).unwrap();
        for (i, a) in h.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                let dot: i64 = a.iter().zip(b).map(|(x, y)| i64::from(*x) * i64::from(*y)).sum();
                assert_eq!(dot, if i == j { n as i64 } else { 0 });
            }
        }
    }
    assert!(hadamard(12).is_err());
}
