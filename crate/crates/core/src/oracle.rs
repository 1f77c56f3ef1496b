//! Exhaustive rotation grid with a convex fixed-rotation solve per point.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::conic::Tolerances;
use crate::datavec::reduced_set;
use crate::modem::Constellation;
use crate::slp;
use crate::{Error, Result};

pub const MAX_USERS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Rotation of users `1..K` in radians (`θ_1 = 0`).
    pub theta: Vec<f64>,
    /// `None` when the fixed-rotation problem failed.
    pub power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub theta: Vec<f64>,
    pub power: f64,
    pub resolution_deg: f64,
    pub grid: Vec<GridPoint>,
}

impl OracleResult {
    /// `theta_2_deg,…,power` rows for plotting the landscape.
    pub fn to_csv(&self) -> String {
        let k = self.theta.len();
        let mut out = String::new();
        let header: Vec<String> = (2..=k).map(|j| format!("theta{j}_deg")).collect();
        let _ = writeln!(out, "{},power", header.join(","));
        for p in &self.grid {
            let angles: Vec<String> = p.theta[1..].iter().map(|t| format!("{:.6}", t.to_degrees())).collect();
            let power = p.power.map_or_else(|| "nan".to_string(), |v| format!("{v:.12e}"));
            let _ = writeln!(out, "{},{power}", angles.join(","));
        }
        out
    }
}

/// Minimum of the fixed-rotation block SLP power over a uniform grid of
/// `θ_2..θ_K` with spacing `resolution_deg`.
pub fn grid_search(
    h: &ChannelMatrix,
    constellations: &[Constellation],
    gamma: &[f64],
    sigma: f64,
    resolution_deg: f64,
    tol: &Tolerances,
) -> Result<OracleResult> {
    let k = h.users();
    if k > MAX_USERS {
        return Err(Error::InvalidArgument(format!("grid oracle supports at most {MAX_USERS} users, got {k}")));
    }
    if !(resolution_deg > 0.0 && resolution_deg <= 360.0) {
        return Err(Error::InvalidArgument(format!("grid resolution {resolution_deg}°")));
    }
    let steps = (360.0 / resolution_deg).round() as usize;
    let count = steps.pow(k as u32 - 1);
    let set = reduced_set(constellations)?;
    let grid: Vec<GridPoint> = (0..count)
        .into_par_iter()
        .map(|mut idx| {
            let mut theta = vec![0.0; k];
            for t in theta.iter_mut().skip(1) {
                *t = ((idx % steps) as f64 * resolution_deg).to_radians();
                idx /= steps;
            }
            let power = match slp::solve_block(h, &set, gamma, sigma, Some(&theta), tol) {
                Ok(sol) => Some(sol.average_power),
                Err(e) => {
                    log::info!("grid point {theta:?} skipped: {e}");
                    None
                }
            };
            GridPoint { theta, power }
        })
        .collect();
    let best = grid
        .iter()
        .filter_map(|p| p.power.map(|v| (v, p)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(Error::Infeasible)?;
    Ok(OracleResult {
        theta: best.1.theta.clone(),
        power: best.0,
        resolution_deg,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn k(name: &str) -> Constellation {
        name.parse().unwrap()
    }

    #[test]
    fn single_user_is_one_solve() {
        let h = ChannelMatrix::from_rows(vec![vec![Complex64::new(1.0, 1.0)]]).unwrap();
        let r = grid_search(&h, &[k("qpsk")], &[3.0], 1.0, 10.0, &Tolerances::default()).unwrap();
        assert_eq!(r.grid.len(), 1);
        assert_eq!(r.theta, vec![0.0]);
        assert!((r.power - 1.5).abs() < 1e-7);
    }

    #[test]
    fn orthogonal_users_are_rotation_invariant() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let h = ChannelMatrix::from_rows(vec![vec![one, zero], vec![zero, one]]).unwrap();
        let r = grid_search(&h, &[k("qpsk"), k("qpsk")], &[3.0, 3.0], 1.0, 15.0, &Tolerances::default()).unwrap();
        let powers: Vec<f64> = r.grid.iter().map(|p| p.power.unwrap()).collect();
        let (lo, hi) = powers.iter().fold((f64::MAX, f64::MIN), |(a, b), &p| (a.min(p), b.max(p)));
        assert!(hi - lo < 1e-6);
        assert_eq!(r.to_csv().lines().count(), 25);
    }

    #[test]
    fn finer_grid_never_worse() {
        let h = crate::fixtures::h_test();
        let ks = [k("qpsk"), k("qpsk")];
        let tol = Tolerances::default();
        let coarse = grid_search(&h, &ks, &[3.0, 3.0], 1.0, 10.0, &tol).unwrap();
        let fine = grid_search(&h, &ks, &[3.0, 3.0], 1.0, 5.0, &tol).unwrap();
        assert!(fine.power <= coarse.power + 1e-9);
    }

    #[test]
    fn rejects_too_many_users() {
        let h = crate::channel::sample_iid(4, 4, 1.0, &mut crate::channel::rng_from_seed(1)).unwrap();
        let ks = vec![k("bpsk"); 4];
        assert!(grid_search(&h, &ks, &[1.0; 4], 1.0, 30.0, &Tolerances::default()).is_err());
    }
}
