//! Randomized invariants over the public API.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use proptest::prelude::*;

use crate::beamform::optimal_beamforming;
use crate::channel::{colinearity, rng_from_seed, sample_iid, ChannelMatrix};
use crate::conic::Tolerances;
use crate::datavec::{enumerate_all, reduced_set};
use crate::modem::Constellation;
use crate::sim::ExperimentConfig;
use crate::{slp, slpro};

const MODS: [&str; 7] = ["bpsk", "qpsk", "8psk", "8qam", "16qam", "16apsk", "64qam"];

fn k(name: &str) -> Constellation {
    name.parse().unwrap()
}

fn channel(users: usize, antennas: usize, seed: u64) -> ChannelMatrix {
    sample_iid(users, antennas, 1.0, &mut rng_from_seed(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotated_points_detect_to_themselves(
        m in 0..MODS.len(),
        idx in 0usize..64,
        theta in 0.0..TAU,
        amp in 0.1f64..10.0,
    ) {
        let c = k(MODS[m]);
        let idx = idx % c.order();
        let rx = c.point(idx) * amp * Complex64::from_polar(1.0, theta);
        prop_assert_eq!(c.detect(rx, theta, amp), idx);
    }

    #[test]
    fn colinearity_is_bounded_and_scale_free(seed in any::<u64>(), s in 0.1f64..10.0, phase in 0.0..TAU) {
        let h = channel(2, 3, seed);
        let c = colinearity(h.row(0), h.row(1)).unwrap();
        prop_assert!(c.norm() <= 1.0 + 1e-12);
        let scaled: Vec<Complex64> = h.row(1).iter().map(|z| z * Complex64::from_polar(s, phase)).collect();
        let d = colinearity(h.row(0), &scaled).unwrap();
        prop_assert!((d.norm() - c.norm()).abs() < 1e-12);
    }

    #[test]
    fn reduced_set_covers_every_vector_once(a in 0..MODS.len() - 1, b in 0..MODS.len() - 1) {
        let ks = [k(MODS[a]), k(MODS[b])];
        let full = enumerate_all(&ks).unwrap();
        let red = reduced_set(&ks).unwrap();
        let group = red.group().len();
        prop_assert_eq!(red.len() * group, full.len());
        let mut seen = vec![false; full.len()];
        for n in 0..red.len() {
            for &z in red.group() {
                let v: Vec<Complex64> = red.vector(n).iter().map(|&s| z.apply(s)).collect();
                let syms: Vec<usize> = v.iter().zip(&ks).map(|(s, c)| c.index_of(*s).unwrap()).collect();
                let m = full.full_index(&syms);
                prop_assert!(!seen[m]);
                seen[m] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn argument_cut_contains_the_arc(l in -10.0f64..10.0, w in 0.0..=PI, t in 0.0f64..=1.0, r in 1.0f64..5.0) {
        let cut = slpro::argument_cut(l, l + w).unwrap();
        for s in cut.slack(Complex64::from_polar(r, l + t * w)) {
            prop_assert!(s >= -1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slp_outputs_are_feasible_and_detect(
        seed in any::<u64>(),
        m in 0..5usize,
        gamma in 1.0f64..20.0,
        theta in 0.0..TAU,
    ) {
        let ks = vec![k(MODS[m]); 2];
        let h = channel(2, 2, seed);
        let rot = [0.0, theta];
        let sol = slp::solve_block_reduced(&h, &ks, &[gamma, gamma], 1.0, Some(&rot), &Tolerances::default()).unwrap();
        prop_assert!(slp::verify_outputs(&h, &ks, &sol.outputs, &[gamma, gamma], 1.0, Some(&rot)).unwrap() <= 1e-7);
        prop_assert_eq!(slp::noiseless_errors(&h, &ks, &sol.outputs, &[gamma, gamma], 1.0, Some(&rot)).unwrap(), 0);
    }

    #[test]
    fn slp_power_is_homogeneous_in_the_target(seed in any::<u64>(), gamma in 1.0f64..10.0, c in 1.5f64..8.0) {
        let ks = vec![k("qpsk"); 2];
        let h = channel(2, 2, seed);
        let tol = Tolerances::default();
        let p = slp::solve_block_reduced(&h, &ks, &[gamma; 2], 1.0, None, &tol).unwrap().average_power;
        let q = slp::solve_block_reduced(&h, &ks, &[c * gamma; 2], 1.0, None, &tol).unwrap().average_power;
        prop_assert!((q - c * p).abs() <= 1e-7 * q);
    }

    #[test]
    fn beamforming_meets_targets(seed in any::<u64>(), g1 in 0.5f64..10.0, g2 in 0.5f64..10.0) {
        let h = channel(2, 3, seed);
        let sol = optimal_beamforming(&h, &[g1, g2], 1.0, &Tolerances::default()).unwrap();
        for (s, g) in sol.sinr.iter().zip([g1, g2]) {
            prop_assert!(*s >= g * (1.0 - 1e-5));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn rotation_search_is_bracketed(seed in any::<u64>()) {
        let ks = vec![k("qpsk"); 2];
        let h = channel(2, 2, seed);
        let opts = slpro::Options { eps: 1e-3, ..Default::default() };
        let sol = slpro::solve(&h, &ks, &[3.0, 3.0], 1.0, &opts).unwrap();
        prop_assert!(sol.lower <= sol.upper * (1.0 + 1e-9));
        prop_assert!(sol.upper <= sol.unrotated_power * (1.0 + 1e-9));
        prop_assert!(sol.certified && sol.gap <= 1e-3);
        let again = slp::solve_block_reduced(&h, &ks, &[3.0, 3.0], 1.0, Some(&sol.theta), &Tolerances::default()).unwrap();
        prop_assert!((again.average_power - sol.upper).abs() <= 1e-7 * sol.upper);
    }
}

#[test]
fn config_round_trips_through_json() {
    let text = r#"{"methods":["OB","SLPRo"],"users":2,"antennas":4,"modulations":["qpsk","16qam"],
        "snr_db":[3.0],"channel":{"model":"correlated","a":[0.5,0.1]},"trials":4,"seed":1}"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let again = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(&cfg).unwrap(), serde_json::to_value(&again).unwrap());
}
