//! Symbol-level precoding: minimum-power output vectors that place every
//! user's noiseless receive sample inside its symbol's detection region.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{dot, ChannelMatrix};
use crate::conic::{ComplexExpr, ConicProblem, SolveStatus, Tolerances};
use crate::datavec::{enumerate_all, expand_solutions, reduced_set, DataVectorSet, Mode};
use crate::modem::{Constellation, Sign, SymbolClass};
use crate::{Error, Result};

/// Coordinates with magnitude below this are treated as lying on an axis.
const AXIS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowKind {
    EqReal,
    EqImag,
    IneqReal(Sign),
    IneqImag(Sign),
    /// `Im{s} − slope·Re{s} = 0`.
    PhaseEquality { slope: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub kind: RowKind,
    pub user: usize,
    pub slot: usize,
    pub rhs: f64,
}

impl DetectionRow {
    /// Row as `c_re·Re{s} + c_im·Im{s} (= | ≥) bound`.
    pub fn canonical(&self) -> (f64, f64, Relation, f64) {
        match self.kind {
            RowKind::EqReal => (1.0, 0.0, Relation::Eq, self.rhs),
            RowKind::EqImag => (0.0, 1.0, Relation::Eq, self.rhs),
            RowKind::IneqReal(s) => (s.value(), 0.0, Relation::Ge, s.value() * self.rhs),
            RowKind::IneqImag(s) => (0.0, s.value(), Relation::Ge, s.value() * self.rhs),
            // Steep lines are scaled by 1/slope to keep coefficients bounded.
            RowKind::PhaseEquality { slope } if slope.abs() > 1.0 => {
                (-1.0, 1.0 / slope, Relation::Eq, 0.0)
            }
            RowKind::PhaseEquality { slope } => (-slope, 1.0, Relation::Eq, 0.0),
        }
    }

    /// Amount by which `s` violates the row (zero when satisfied).
    pub fn violation(&self, s: Complex64) -> f64 {
        let (a, b, rel, bound) = self.canonical();
        let lhs = a * s.re + b * s.im;
        match rel {
            Relation::Eq => (lhs - bound).abs(),
            Relation::Ge => (bound - lhs).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionConstraints {
    pub rows: Vec<DetectionRow>,
}

impl DetectionConstraints {
    /// Largest violation given the noiseless receive value of each
    /// `(user, slot)`.
    pub fn max_violation(&self, mut received: impl FnMut(usize, usize) -> Complex64) -> f64 {
        self.rows
            .iter()
            .map(|r| r.violation(received(r.user, r.slot)))
            .fold(0.0, f64::max)
    }
}

fn user_rows(
    class: SymbolClass,
    d: Complex64,
    scale: f64,
    user: usize,
    slot: usize,
) -> Vec<DetectionRow> {
    let row = |kind, rhs| DetectionRow {
        kind,
        user,
        slot,
        rhs,
    };
    let (re, im) = (scale * d.re, scale * d.im);
    match class {
        SymbolClass::Inner => vec![row(RowKind::EqReal, re), row(RowKind::EqImag, im)],
        SymbolClass::EdgeRealFree(s) => {
            vec![row(RowKind::IneqReal(s), re), row(RowKind::EqImag, im)]
        }
        SymbolClass::EdgeImagFree(s) => {
            vec![row(RowKind::EqReal, re), row(RowKind::IneqImag(s), im)]
        }
        SymbolClass::Corner(sr, si) => {
            vec![row(RowKind::IneqReal(sr), re), row(RowKind::IneqImag(si), im)]
        }
        SymbolClass::CircularOutermost => {
            let tiny = AXIS_EPS * d.norm();
            if d.im.abs() <= tiny {
                vec![
                    row(RowKind::IneqReal(Sign::of(d.re)), re),
                    row(RowKind::PhaseEquality { slope: 0.0 }, 0.0),
                ]
            } else if d.re.abs() <= tiny {
                vec![row(RowKind::EqReal, 0.0), row(RowKind::IneqImag(Sign::of(d.im)), im)]
            } else {
                vec![
                    row(RowKind::IneqReal(Sign::of(d.re)), re),
                    row(RowKind::IneqImag(Sign::of(d.im)), im),
                    row(RowKind::PhaseEquality { slope: d.im / d.re }, 0.0),
                ]
            }
        }
    }
}

/// Detection-region rows for symbol tuple `symbols` transmitted in `slot`.
pub fn build_constraints(
    symbols: &[usize],
    constellations: &[Constellation],
    gamma: &[f64],
    sigma: f64,
    slot: usize,
) -> Result<DetectionConstraints> {
    if symbols.len() != constellations.len() || gamma.len() != constellations.len() {
        return Err(Error::Dimension(format!(
            "{} symbols, {} constellations, {} SINR targets",
            symbols.len(),
            constellations.len(),
            gamma.len()
        )));
    }
    let mut rows = Vec::new();
    for (j, ((&s, k), &g)) in symbols.iter().zip(constellations).zip(gamma).enumerate() {
        if s >= k.order() {
            return Err(Error::InvalidArgument(format!("symbol index {s} for {}", k.name())));
        }
        rows.extend(user_rows(k.classify_symbol(s), k.point(s), sigma * g.sqrt(), j, slot));
    }
    Ok(DetectionConstraints { rows })
}

/// Effective rows `e^{−iθ_j}·h_j` seen by the constraints.
pub fn effective_rows(h: &ChannelMatrix, rotation: Option<&[f64]>) -> Result<Vec<Vec<Complex64>>> {
    if let Some(theta) = rotation {
        if theta.len() != h.users() {
            return Err(Error::Dimension(format!(
                "{} rotation angles for {} users",
                theta.len(),
                h.users()
            )));
        }
    }
    Ok((0..h.users())
        .map(|j| {
            let t = rotation.map_or(Complex64::new(1.0, 0.0), |th| Complex64::from_polar(1.0, -th[j]));
            h.row(j).iter().map(|&g| t * g).collect()
        })
        .collect())
}

/// Worst detection-row violation of output `x` for symbol tuple `symbols`.
pub fn constraint_residual(
    rows: &[Vec<Complex64>],
    constraints: &DetectionConstraints,
    x: &[Complex64],
) -> f64 {
    constraints.max_violation(|user, _| dot(&rows[user], x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSymbolSolution {
    pub output: Vec<Complex64>,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlpSolution {
    /// One output vector per data vector, in the order of the solved set
    /// (lexicographic when the set is full or the result was expanded).
    pub outputs: Vec<Vec<Complex64>>,
    pub powers: Vec<f64>,
    /// `(1/N)·Σ‖x[n]‖²`.
    pub average_power: f64,
    /// Rotation applied to each user's constraints, radians.
    pub rotation: Vec<f64>,
    pub mode: Mode,
    pub status: SolveStatus,
    pub max_residual: f64,
}

/// Real row `a` with `a·y = c_re·Re{g x} + c_im·Im{g x}` for `y` interleaving
/// `(Re x_m, Im x_m)`.
fn real_row(g: &[Complex64], c_re: f64, c_im: f64) -> Vec<f64> {
    let mut a = Vec::with_capacity(2 * g.len());
    for z in g {
        a.push(c_re * z.re + c_im * z.im);
        a.push(-c_re * z.im + c_im * z.re);
    }
    a
}

/// Exact optimum of the per-vector QP `min ‖x‖²` by an active-set iteration
/// seeded with the rows nearly active at `x`.
///
/// Returns `None` when the iteration does not settle on a point that meets
/// every row and the KKT sign conditions.
fn polish(rows: &[Vec<Complex64>], cons: &DetectionConstraints, x: &[Complex64]) -> Option<Vec<Complex64>> {
    let all: Vec<(Vec<f64>, f64, Relation)> = cons
        .rows
        .iter()
        .map(|r| {
            let (a, b, rel, bound) = r.canonical();
            (real_row(&rows[r.user], a, b), bound, rel)
        })
        .collect();
    let n = 2 * x.len();
    let scale = cons.rows.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);
    let slack = |i: usize, y: &[f64]| all[i].0.iter().zip(y).map(|(a, v)| a * v).sum::<f64>() - all[i].1;
    let start: Vec<f64> = x.iter().flat_map(|z| [z.re, z.im]).collect();
    let mut active: Vec<usize> = (0..all.len())
        .filter(|&i| all[i].2 == Relation::Eq || slack(i, &start) <= 1e-5 * all[i].1.abs().max(1.0))
        .collect();

    for _ in 0..4 * all.len() + 8 {
        let (y, mu) = if active.is_empty() {
            (vec![0.0; n], DVector::zeros(0))
        } else {
            let a = DMatrix::from_fn(active.len(), n, |i, j| all[active[i]].0[j]);
            let b = DVector::from_iterator(active.len(), active.iter().map(|&i| all[i].1));
            let gram = &a * a.transpose();
            let eps = 1e-13 * gram.amax().max(1.0);
            let mu = gram.svd(true, true).solve(&b, eps).ok()?;
            ((a.transpose() * &mu).iter().copied().collect(), mu)
        };
        let mu_scale = mu.amax().max(1.0);
        let worst_dual = active
            .iter()
            .zip(mu.iter())
            .filter(|(&i, _)| all[i].2 == Relation::Ge)
            .map(|(&i, &m)| (i, m))
            .min_by(|p, q| p.1.total_cmp(&q.1));
        if let Some((i, _)) = worst_dual.filter(|&(_, m)| m < -1e-9 * mu_scale) {
            active.retain(|&j| j != i);
            continue;
        }
        let worst_primal = (0..all.len())
            .filter(|i| !active.contains(i))
            .map(|i| (i, slack(i, &y)))
            .min_by(|p, q| p.1.total_cmp(&q.1));
        if let Some((i, _)) = worst_primal.filter(|&(_, s)| s < -1e-12 * scale) {
            active.push(i);
            continue;
        }
        let out: Vec<Complex64> = (0..x.len()).map(|m| Complex64::new(y[2 * m], y[2 * m + 1])).collect();
        return (constraint_residual(rows, cons, &out) <= 1e-12 * scale).then_some(out);
    }
    None
}

fn lower_rows(prob: &mut ConicProblem, rows: &[Vec<Complex64>], cons: &DetectionConstraints, x: &[ComplexExpr]) {
    let received: Vec<ComplexExpr> = rows
        .iter()
        .map(|g| {
            let mut s = ComplexExpr::zero();
            for (gm, xm) in g.iter().zip(x) {
                s.add_scaled(*gm, xm);
            }
            s
        })
        .collect();
    for r in &cons.rows {
        let (a, b, rel, bound) = r.canonical();
        let s = &received[r.user];
        let expr = s.re.clone() * a + s.im.clone() * b
            - crate::conic::AffineExpr::constant(bound);
        match rel {
            Relation::Eq => prob.add_eq(expr),
            Relation::Ge => prob.add_ge(expr),
        }
    }
}

/// Solves `min Σ_n w_n‖x[n]‖²` for independent constraint groups in one
/// conic program and polishes each block.
fn solve_groups(
    rows: &[Vec<Complex64>],
    groups: &[DetectionConstraints],
    antennas: usize,
    tol: &Tolerances,
) -> Result<(Vec<Vec<Complex64>>, f64)> {
    let mut prob = ConicProblem::new();
    let weight = 1.0 / groups.len() as f64;
    let vars: Vec<Vec<ComplexExpr>> = groups
        .iter()
        .map(|cons| {
            let x: Vec<ComplexExpr> = (0..antennas).map(|_| prob.add_complex_var()).collect();
            for z in &x {
                prob.add_square(z.re.terms[0].0, weight);
                prob.add_square(z.im.terms[0].0, weight);
            }
            lower_rows(&mut prob, rows, cons, &x);
            x
        })
        .collect();
    let sol = prob.solve(tol);
    if sol.status != SolveStatus::Optimal {
        return Err(Error::from_status(sol.status));
    }
    let mut worst = 0.0f64;
    let outputs = vars
        .iter()
        .zip(groups)
        .map(|(x, cons)| {
            let raw: Vec<Complex64> = x.iter().map(|z| z.eval(&sol.x)).collect();
            let out = polish(rows, cons, &raw).unwrap_or(raw);
            worst = worst.max(constraint_residual(rows, cons, &out));
            out
        })
        .collect();
    Ok((outputs, worst))
}

/// Minimum-power output for a single symbol tuple.
pub fn solve_per_symbol(
    h: &ChannelMatrix,
    symbols: &[usize],
    constellations: &[Constellation],
    gamma: &[f64],
    sigma: f64,
    rotation: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<PerSymbolSolution> {
    check_users(h, constellations)?;
    let rows = effective_rows(h, rotation)?;
    let cons = build_constraints(symbols, constellations, gamma, sigma, 0)?;
    let (mut outs, _) = solve_groups(&rows, std::slice::from_ref(&cons), h.antennas(), tol)?;
    let output = outs.pop().expect("one group");
    let power = norm_sqr(&output);
    Ok(PerSymbolSolution { output, power })
}

fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

fn check_users(h: &ChannelMatrix, constellations: &[Constellation]) -> Result<()> {
    if h.users() != constellations.len() {
        return Err(Error::Dimension(format!(
            "{} users in channel, {} constellations",
            h.users(),
            constellations.len()
        )));
    }
    Ok(())
}

/// Block solve over every vector stored in `set`, minimizing the average
/// power. Outputs follow the set's own order.
pub fn solve_block(
    h: &ChannelMatrix,
    set: &DataVectorSet,
    gamma: &[f64],
    sigma: f64,
    rotation: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<SlpSolution> {
    check_users(h, set.constellations())?;
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty data-vector set".into()));
    }
    let rows = effective_rows(h, rotation)?;
    let groups = (0..set.len())
        .map(|n| build_constraints(set.symbols(n), set.constellations(), gamma, sigma, n))
        .collect::<Result<Vec<_>>>()?;
    let (outputs, max_residual) = solve_groups(&rows, &groups, h.antennas(), tol)?;
    let powers: Vec<f64> = outputs.iter().map(|x| norm_sqr(x)).collect();
    let average_power = powers.iter().sum::<f64>() / powers.len() as f64;
    Ok(SlpSolution {
        outputs,
        powers,
        average_power,
        rotation: rotation.map_or_else(|| vec![0.0; h.users()], <[f64]>::to_vec),
        mode: set.mode(),
        status: SolveStatus::Optimal,
        max_residual,
    })
}

/// Expands a solution on a reduced set to every joint data vector.
pub fn expand(set: &DataVectorSet, sol: SlpSolution) -> Result<SlpSolution> {
    if set.mode() == Mode::Full {
        return Ok(sol);
    }
    let outputs = expand_solutions(set, &sol.outputs)?;
    let powers: Vec<f64> = outputs.iter().map(|x| norm_sqr(x)).collect();
    let average_power = powers.iter().sum::<f64>() / powers.len() as f64;
    Ok(SlpSolution {
        outputs,
        powers,
        average_power,
        ..sol
    })
}

/// Solves on the symmetry-reduced set and expands to all `N` vectors.
pub fn solve_block_reduced(
    h: &ChannelMatrix,
    constellations: &[Constellation],
    gamma: &[f64],
    sigma: f64,
    rotation: Option<&[f64]>,
    tol: &Tolerances,
) -> Result<SlpSolution> {
    let set = reduced_set(constellations)?;
    let sol = solve_block(h, &set, gamma, sigma, rotation, tol)?;
    expand(&set, sol)
}

/// Largest constraint violation of `outputs` (lexicographic, full set).
pub fn verify_outputs(
    h: &ChannelMatrix,
    constellations: &[Constellation],
    outputs: &[Vec<Complex64>],
    gamma: &[f64],
    sigma: f64,
    rotation: Option<&[f64]>,
) -> Result<f64> {
    let set = enumerate_all(constellations)?;
    if outputs.len() != set.len() {
        return Err(Error::Dimension(format!("{} outputs for {} vectors", outputs.len(), set.len())));
    }
    let rows = effective_rows(h, rotation)?;
    let mut worst = 0.0f64;
    for (n, x) in outputs.iter().enumerate() {
        let cons = build_constraints(set.symbols(n), constellations, gamma, sigma, n)?;
        worst = worst.max(constraint_residual(&rows, &cons, x));
    }
    Ok(worst)
}

/// Count of user symbols that the noiseless receive samples decode wrongly.
pub fn noiseless_errors(
    h: &ChannelMatrix,
    constellations: &[Constellation],
    outputs: &[Vec<Complex64>],
    gamma: &[f64],
    sigma: f64,
    rotation: Option<&[f64]>,
) -> Result<usize> {
    let set = enumerate_all(constellations)?;
    let mut errors = 0;
    for (n, x) in outputs.iter().enumerate() {
        for (j, k) in constellations.iter().enumerate() {
            let theta = rotation.map_or(0.0, |t| t[j]);
            let y = h.apply_row(j, x);
            if k.detect(y, theta, sigma * gamma[j].sqrt()) != set.symbols(n)[j] {
                errors += 1;
            }
        }
    }
    Ok(errors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub symbols: Vec<usize>,
    /// Output vector as `[re, im]` per antenna.
    pub output: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub modulations: Vec<String>,
    pub gamma: Vec<f64>,
    pub sigma: f64,
    /// Per-user constellation rotation in `[0, 2π)`.
    pub rotation: Vec<f64>,
    pub average_power: f64,
    pub entries: Vec<TableEntry>,
}

impl LookupTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn output(&self, n: usize) -> Vec<Complex64> {
        self.entries[n].output.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
    }

    pub fn outputs(&self) -> Vec<Vec<Complex64>> {
        (0..self.entries.len()).map(|n| self.output(n)).collect()
    }
}

/// Reduced set → (joint rotation search | plain block SLP) → expansion.
pub fn lookup_table(
    h: &ChannelMatrix,
    constellations: &[Constellation],
    gamma: &[f64],
    sigma: f64,
    rotate: bool,
    options: &crate::slpro::Options,
) -> Result<LookupTable> {
    let sol = if rotate {
        crate::slpro::solve(h, constellations, gamma, sigma, options)?.solution
    } else {
        solve_block_reduced(h, constellations, gamma, sigma, None, &options.tolerances)?
    };
    let set = enumerate_all(constellations)?;
    let entries = sol
        .outputs
        .iter()
        .enumerate()
        .map(|(n, x)| TableEntry {
            symbols: set.symbols(n).to_vec(),
            output: x.iter().map(|z| [z.re, z.im]).collect(),
        })
        .collect();
    Ok(LookupTable {
        modulations: constellations.iter().map(Constellation::name).collect(),
        gamma: gamma.to_vec(),
        sigma,
        rotation: sol.rotation.iter().map(|t| t.rem_euclid(TAU)).collect(),
        average_power: sol.average_power,
        entries,
    })
}
