//! Block-level power minimization under per-user SINR targets.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{dot, ChannelMatrix};
use crate::conic::{AffineExpr, ComplexExpr, ConicProblem, SolveStatus, Tolerances};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingSolution {
    /// Precoder columns `w_j`, one per user.
    pub beams: Vec<Vec<Complex64>>,
    pub power: f64,
    pub sinr: Vec<f64>,
    pub status: SolveStatus,
}

/// Linear SINR target from a dB value.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(value: f64) -> f64 {
    10.0 * value.log10()
}

/// `10·log10` of the arithmetic mean of linear powers.
pub fn average_power_db(powers: &[f64]) -> Result<f64> {
    if powers.is_empty() {
        return Err(Error::InvalidArgument("no power samples".into()));
    }
    Ok(linear_to_db(powers.iter().sum::<f64>() / powers.len() as f64))
}

/// Achieved SINR of every user for precoder columns `beams`.
pub fn achieved_sinr(h: &ChannelMatrix, beams: &[Vec<Complex64>], sigma: f64) -> Vec<f64> {
    (0..h.users())
        .map(|j| {
            let row = h.row(j);
            let gains: Vec<f64> = beams.iter().map(|w| dot(row, w).norm_sqr()).collect();
            let interference: f64 =
                gains.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, g)| g).sum();
            gains[j] / (interference + sigma * sigma)
        })
        .collect()
}

/// Minimum-power precoder meeting `SINR_j ≥ γ_j`.
///
/// Each `h_j w_j` is taken real and nonnegative, which turns every SINR
/// constraint into the cone `‖(h_j w_1, …, h_j w_K, σ)‖ ≤ √(1 + 1/γ_j)·h_j w_j`.
pub fn optimal_beamforming(
    h: &ChannelMatrix,
    gamma: &[f64],
    sigma: f64,
    tol: &Tolerances,
) -> Result<BeamformingSolution> {
    let (k, m) = (h.users(), h.antennas());
    if gamma.len() != k {
        return Err(Error::Dimension(format!("{} SINR targets for {k} users", gamma.len())));
    }
    if gamma.iter().any(|&g| !(g > 0.0 && g.is_finite())) || !(sigma > 0.0) {
        return Err(Error::InvalidArgument("SINR targets and noise level must be positive".into()));
    }

    let mut prob = ConicProblem::new();
    let beams: Vec<Vec<ComplexExpr>> =
        (0..k).map(|_| (0..m).map(|_| prob.add_complex_var()).collect()).collect();
    for w in &beams {
        for z in w {
            for part in [&z.re, &z.im] {
                prob.add_square(part.terms[0].0, 1.0);
            }
        }
    }
    let response = |j: usize, w: &[ComplexExpr]| {
        let mut s = ComplexExpr::zero();
        for (g, z) in h.row(j).iter().zip(w) {
            s.add_scaled(*g, z);
        }
        s
    };
    for j in 0..k {
        let own = response(j, &beams[j]);
        prob.add_eq(own.im.clone());
        let mut rest = Vec::with_capacity(2 * k + 1);
        for w in &beams {
            let s = response(j, w);
            rest.push(s.re);
            rest.push(s.im);
        }
        rest.push(AffineExpr::constant(sigma));
        prob.add_soc(own.re * (1.0 + 1.0 / gamma[j]).sqrt(), rest);
    }

    let sol = prob.solve(tol);
    if sol.status != SolveStatus::Optimal {
        return Err(Error::from_status(sol.status));
    }
    let beams: Vec<Vec<Complex64>> =
        beams.iter().map(|w| w.iter().map(|z| z.eval(&sol.x)).collect()).collect();
    let power = beams.iter().flatten().map(|z| z.norm_sqr()).sum();
    let sinr = achieved_sinr(h, &beams, sigma);
    Ok(BeamformingSolution {
        beams,
        power,
        sinr,
        status: sol.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{rng_from_seed, sample_iid};
    use nalgebra::{DMatrix, DVector};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Fixed point of the dual uplink power iteration; total downlink power
    /// equals `σ²·Σλ`.
    fn uplink_duality_power(h: &ChannelMatrix, gamma: &[f64], sigma: f64) -> f64 {
        let (k, m) = (h.users(), h.antennas());
        let cols: Vec<DVector<Complex64>> = (0..k)
            .map(|j| DVector::from_iterator(m, h.row(j).iter().map(|z| z.conj())))
            .collect();
        let mut lambda = vec![1.0; k];
        for _ in 0..5000 {
            let mut s = DMatrix::<Complex64>::identity(m, m);
            for (l, hc) in lambda.iter().zip(&cols) {
                s += hc * hc.adjoint() * c(*l, 0.0);
            }
            let inv = s.try_inverse().unwrap();
            let next: Vec<f64> = (0..k)
                .map(|j| {
                    let q = (cols[j].adjoint() * &inv * &cols[j])[(0, 0)].re;
                    1.0 / ((1.0 + 1.0 / gamma[j]) * q)
                })
                .collect();
            let delta: f64 = next.iter().zip(&lambda).map(|(a, b)| (a - b).abs()).sum();
            lambda = next;
            if delta < 1e-14 {
                break;
            }
        }
        sigma * sigma * lambda.iter().sum::<f64>()
    }

    #[test]
    fn single_user_matched_filter() {
        let h = ChannelMatrix::from_rows(vec![vec![c(1.0, 0.5), c(-0.3, 2.0), c(0.2, 0.0)]]).unwrap();
        let norm2: f64 = h.row(0).iter().map(|z| z.norm_sqr()).sum();
        let (gamma, sigma) = (4.0, 0.7);
        let sol = optimal_beamforming(&h, &[gamma], sigma, &Tolerances::default()).unwrap();
        let expected = gamma * sigma * sigma / norm2;
        assert!((sol.power - expected).abs() < 1e-6 * expected);
        let scale = gamma.sqrt() * sigma / norm2;
        for (w, hz) in sol.beams[0].iter().zip(h.row(0)) {
            assert!((w - hz.conj() * scale).norm() < 1e-5);
        }
    }

    #[test]
    fn orthogonal_users_decouple() {
        let h = ChannelMatrix::from_rows(vec![
            vec![c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 2.0)],
        ])
        .unwrap();
        let sol = optimal_beamforming(&h, &[3.0, 3.0], 1.0, &Tolerances::default()).unwrap();
        let expected = 3.0 / 1.0 + 3.0 / 4.0;
        assert!((sol.power - expected).abs() < 1e-6);
    }

    #[test]
    fn matches_uplink_duality_and_meets_targets() {
        let mut rng = rng_from_seed(5);
        for _ in 0..10 {
            let h = sample_iid(3, 3, 1.0, &mut rng).unwrap();
            let gamma = [3.0, 6.0, 2.0];
            let sol = optimal_beamforming(&h, &gamma, 1.0, &Tolerances::default()).unwrap();
            let reference = uplink_duality_power(&h, &gamma, 1.0);
            assert!((sol.power - reference).abs() < 1e-5 * reference, "{} vs {reference}", sol.power);
            for (s, g) in sol.sinr.iter().zip(gamma) {
                assert!((s - g).abs() < 1e-4 * g);
            }
        }
    }

    #[test]
    fn h_test_power() {
        let h = crate::fixtures::h_test();
        let sol = optimal_beamforming(&h, &[3.0, 3.0], 1.0, &Tolerances::default()).unwrap();
        let reference = uplink_duality_power(&h, &[3.0, 3.0], 1.0);
        assert!((linear_to_db(sol.power) - linear_to_db(reference)).abs() < 1e-5);
    }

    #[test]
    fn power_is_monotone_in_targets() {
        let mut rng = rng_from_seed(17);
        let h = sample_iid(2, 2, 1.0, &mut rng).unwrap();
        let mut last = 0.0;
        for g in [1.0, 2.0, 4.0, 8.0] {
            let p = optimal_beamforming(&h, &[g, 3.0], 1.0, &Tolerances::default()).unwrap().power;
            assert!(p >= last - 1e-9);
            last = p;
        }
    }

    #[test]
    fn colinear_users_are_infeasible() {
        let h = ChannelMatrix::from_rows(vec![
            vec![c(1.0, 0.0), c(1.0, 0.0)],
            vec![c(2.0, 0.0), c(2.0, 0.0)],
        ])
        .unwrap();
        let err = optimal_beamforming(&h, &[3.0, 3.0], 1.0, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible), "{err:?}");
    }

    #[test]
    fn averaging_examples() {
        assert!((average_power_db(&[10.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(average_power_db(&[1.0, 1.0]).unwrap().abs() < 1e-12);
        assert!((average_power_db(&[10.0, 1000.0]).unwrap() - 27.0329).abs() < 1e-4);
        assert!(average_power_db(&[]).is_err());
    }
}
