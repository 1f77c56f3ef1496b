//! Joint constellation rotation and precoding.
//!
//! The per-user rotations `u_j = e^{−iθ_j}` are lifted into a Hermitian
//! matrix `T = conj(u) uᵀ` that is coupled to the stacked output vectors
//! through `F[:, j] = u_j·p`. Dropping the rank constraint gives a
//! semidefinite relaxation; argument cuts on `T` restrict the phase of its
//! entries to the box of the current branch-and-bound node.
//!
//! The relaxation keeps one PSD block `[[Y_n, F_n], [F_nᴴ, T]]` per data
//! vector instead of one block over all of them. Both have the same optimal
//! value: for fixed `F` and `T` each lifts to `Y_n = F_n T⁺ F_nᴴ`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::conic::{
    hermitian_embed_exprs, AffineExpr, ComplexExpr, ConicProblem, SolveStatus, Tolerances,
};
use crate::datavec::{reduced_set, DataVectorSet};
use crate::modem::Constellation;
use crate::slp::{self, build_constraints, Relation, SlpSolution};
use crate::{Error, Result};

/// Relative margin below the incumbent required to keep a node.
const PRUNE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Options {
    /// Relative optimality gap `(U − L)/L` at which the search stops.
    pub eps: f64,
    pub node_cap: usize,
    /// Largest `λ₂/λ₁` accepted as a rank-one relaxation.
    pub rank_tol: f64,
    pub tolerances: Tolerances,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            eps: 1e-4,
            node_cap: 10_000,
            rank_tol: 1e-6,
            tolerances: Tolerances::default(),
        }
    }
}

/// Convex hull of the unit arc `{e^{iφ} : φ ∈ [l, u]}` pushed outward,
/// as three half-planes in `(w, v) = (Re c, Im c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgumentCut {
    pub l: f64,
    pub u: f64,
    pub a: f64,
    pub b: f64,
}

impl ArgumentCut {
    /// Rows `(c_w, c_v, bound)` meaning `c_w·w + c_v·v ≥ bound`.
    pub fn rows(&self) -> [(f64, f64, f64); 3] {
        let (sl, cl) = self.l.sin_cos();
        let (su, cu) = self.u.sin_cos();
        [
            (-sl, cl, 0.0),
            (su, -cu, 0.0),
            (self.a, self.b, self.a * self.a + self.b * self.b),
        ]
    }

    /// Slack of each row at `c` (nonnegative when satisfied).
    pub fn slack(&self, c: Complex64) -> [f64; 3] {
        self.rows().map(|(w, v, bound)| w * c.re + v * c.im - bound)
    }
}

pub fn argument_cut(l: f64, u: f64) -> Result<ArgumentCut> {
    let width = u - l;
    if !(0.0..=PI + 1e-12).contains(&width) {
        return Err(Error::InvalidArgument(format!(
            "argument interval [{l}, {u}] must have width in [0, π]"
        )));
    }
    Ok(ArgumentCut {
        l,
        u,
        a: 0.5 * (l.cos() + u.cos()),
        b: 0.5 * (l.sin() + u.sin()),
    })
}

/// Optimal blocks of one relaxation solve.
#[derive(Debug, Clone)]
pub struct Relaxation {
    /// `tr(P)/N`.
    pub bound: f64,
    /// `F_n` (M×K) for every stored data vector.
    pub f: Vec<DMatrix<Complex64>>,
    pub t: DMatrix<Complex64>,
}

#[derive(Debug, Clone)]
pub enum RelaxOutcome {
    Solved(Relaxation),
    Infeasible,
    Unresolved(SolveStatus),
}

/// Phase intervals of `T_ij` for `i < j` implied by the branching box on
/// `arg T_1j`, kept only when narrow enough to cut.
fn cut_intervals(box_: &[(f64, f64)]) -> Vec<(usize, usize, f64, f64)> {
    let k = box_.len() + 1;
    let mut out = Vec::new();
    for j in 1..k {
        let (l, u) = box_[j - 1];
        out.push((0, j, l, u));
    }
    for i in 1..k {
        for j in i + 1..k {
            let (li, ui) = box_[i - 1];
            let (lj, uj) = box_[j - 1];
            let (l, u) = (lj - ui, uj - li);
            if u - l <= PI {
                out.push((i, j, l, u));
            }
        }
    }
    out
}

/// Solves the relaxation for the box `box_` (one interval per user `2..K`).
pub fn sdp_relax(
    h: &ChannelMatrix,
    set: &DataVectorSet,
    gamma: &[f64],
    sigma: f64,
    box_: &[(f64, f64)],
    tol: &Tolerances,
) -> Result<RelaxOutcome> {
    let (k, m) = (h.users(), h.antennas());
    if set.users() != k {
        return Err(Error::Dimension(format!("{} users in set, {k} in channel", set.users())));
    }
    if box_.len() + 1 != k {
        return Err(Error::Dimension(format!("{} intervals for {k} users", box_.len())));
    }
    let mut prob = ConicProblem::new();

    // Shared rotation block: unit diagonal, free off-diagonal.
    let mut t_upper: Vec<Vec<ComplexExpr>> = vec![Vec::new(); k];
    for i in 0..k {
        for j in 0..k {
            let e = if j < i {
                ComplexExpr::zero()
            } else if i == j {
                ComplexExpr::constant(Complex64::new(1.0, 0.0))
            } else {
                prob.add_complex_var()
            };
            t_upper[i].push(e);
        }
    }
    for (i, j, l, u) in cut_intervals(box_) {
        let cut = argument_cut(l, u)?;
        let c = &t_upper[i][j];
        for (w, v, bound) in cut.rows() {
            prob.add_ge(c.re.clone() * w + c.im.clone() * v - AffineExpr::constant(bound));
        }
    }

    let n_vec = set.len();
    let weight = 1.0 / n_vec as f64;
    let mut f_vars: Vec<Vec<Vec<ComplexExpr>>> = Vec::with_capacity(n_vec);
    for n in 0..n_vec {
        let mut y: Vec<Vec<ComplexExpr>> = vec![vec![ComplexExpr::zero(); m]; m];
        for r in 0..m {
            for c in r..m {
                y[r][c] = if r == c {
                    let v = prob.add_var();
                    prob.add_linear(v, weight);
                    ComplexExpr {
                        re: AffineExpr::var(v),
                        im: AffineExpr::zero(),
                    }
                } else {
                    prob.add_complex_var()
                };
            }
        }
        let f: Vec<Vec<ComplexExpr>> =
            (0..m).map(|_| (0..k).map(|_| prob.add_complex_var()).collect()).collect();

        let cons = build_constraints(set.symbols(n), set.constellations(), gamma, sigma, n)?;
        for row in &cons.rows {
            let j = row.user;
            let mut s = ComplexExpr::zero();
            for (a, g) in h.row(j).iter().enumerate() {
                s.add_scaled(*g, &f[a][j]);
            }
            let (cr, ci, rel, bound) = row.canonical();
            let expr = s.re * cr + s.im * ci - AffineExpr::constant(bound);
            match rel {
                Relation::Eq => prob.add_eq(expr),
                Relation::Ge => prob.add_ge(expr),
            }
        }

        let block = hermitian_embed_exprs(m + k, |r, c| match (r < m, c < m) {
            (true, true) => y[r][c].clone(),
            (true, false) => f[r][c - m].clone(),
            (false, false) => t_upper[r - m][c - m].clone(),
            (false, true) => unreachable!("upper triangle only"),
        });
        prob.add_psd(block);
        f_vars.push(f);
    }

    let sol = prob.solve(tol);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Ok(RelaxOutcome::Infeasible),
        other => return Ok(RelaxOutcome::Unresolved(other)),
    }
    let f = f_vars
        .iter()
        .map(|fv| DMatrix::from_fn(m, k, |r, c| fv[r][c].eval(&sol.x)))
        .collect();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i <= j {
            t_upper[i][j].eval(&sol.x)
        } else {
            t_upper[j][i].eval(&sol.x).conj()
        }
    });
    Ok(RelaxOutcome::Solved(Relaxation {
        bound: sol.objective,
        f,
        t,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Rotation per user, radians, with `θ_1 = 0`.
    pub theta: Vec<f64>,
    /// `λ₂/λ₁` of `P` (zero when rank one).
    pub rank_defect: f64,
    /// `|α_k|`, one for an exact rank-one lift.
    pub alpha_modulus: Vec<f64>,
}

fn candidate_from_alpha(alpha: &[Complex64], rank_defect: f64) -> Candidate {
    let base = alpha[0].arg();
    Candidate {
        theta: alpha
            .iter()
            .enumerate()
            .map(|(i, a)| if i == 0 { 0.0 } else { (base - a.arg()).rem_euclid(TAU) })
            .collect(),
        rank_defect,
        alpha_modulus: alpha.iter().map(|a| a.norm()).collect(),
    }
}

/// Eigenpairs of a Hermitian matrix sorted by decreasing eigenvalue.
fn sorted_eigen(a: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Rotation candidate from the top eigenpair of `P` and the coupling
/// block `F` (stacked `NM×K`).
pub fn extract_candidate(p: &DMatrix<Complex64>, f: &DMatrix<Complex64>) -> Result<Candidate> {
    if p.nrows() != f.nrows() || p.nrows() != p.ncols() {
        return Err(Error::Dimension("P must be square with as many rows as F".into()));
    }
    let (values, vectors) = sorted_eigen(p);
    let lambda = values[0];
    if !(lambda > 1e-12) {
        return Err(Error::InvalidArgument("degenerate relaxation: λ_max ≈ 0".into()));
    }
    let e = vectors.column(0);
    let alpha: Vec<Complex64> = (0..f.ncols())
        .map(|c| e.dotc(&f.column(c)) / lambda.sqrt())
        .collect();
    let defect = values.get(1).map_or(0.0, |v| v.max(0.0) / lambda);
    Ok(candidate_from_alpha(&alpha, defect))
}

/// Pseudo-inverse square root of a Hermitian PSD matrix.
fn pinv_sqrt(t: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (values, vectors) = sorted_eigen(t);
    let cutoff = 1e-9 * values[0].max(1e-300);
    let mut out = DMatrix::zeros(t.nrows(), t.ncols());
    for (i, &v) in values.iter().enumerate() {
        if v > cutoff {
            let col = vectors.column(i);
            out += col * col.adjoint() * Complex64::new(1.0 / v.sqrt(), 0.0);
        }
    }
    out
}

/// Stacks the per-vector `F_n` into one `NM×K` matrix.
pub fn stack_f(relax: &Relaxation) -> DMatrix<Complex64> {
    let m = relax.f[0].nrows();
    let k = relax.f[0].ncols();
    DMatrix::from_fn(m * relax.f.len(), k, |r, c| relax.f[r / m][(r % m, c)])
}

/// The minimal `P = F T⁺ Fᴴ` completing a relaxation solution.
pub fn completed_p(relax: &Relaxation) -> DMatrix<Complex64> {
    let f = stack_f(relax);
    let r = pinv_sqrt(&relax.t);
    let b = &f * r;
    &b * b.adjoint()
}

/// Same candidate as `extract_candidate(completed_p(relax), F)`, computed
/// through the `K×K` Gram matrix of `B = F T^{+1/2}`.
pub fn relaxation_candidate(relax: &Relaxation) -> Result<Candidate> {
    let f = stack_f(relax);
    let b = &f * pinv_sqrt(&relax.t);
    let gram = b.adjoint() * &b;
    let (values, vectors) = sorted_eigen(&gram);
    let lambda = values[0];
    if !(lambda > 1e-12) {
        return Err(Error::InvalidArgument("degenerate relaxation: λ_max ≈ 0".into()));
    }
    let e = (&b * vectors.column(0)) / Complex64::new(lambda.sqrt(), 0.0);
    let alpha: Vec<Complex64> = (0..f.ncols())
        .map(|c| e.dotc(&f.column(c)) / lambda.sqrt())
        .collect();
    let defect = values.get(1).map_or(0.0, |v| v.max(0.0) / lambda);
    Ok(candidate_from_alpha(&alpha, defect))
}

/// `(K − Σ_j |T_1j|)/K`: zero when the first row of `T` is unimodular.
pub fn modulus_defect(t: &DMatrix<Complex64>) -> f64 {
    let k = t.nrows() as f64;
    (k - t.row(0).iter().map(|z| z.norm()).sum::<f64>()) / k
}

/// Fixed-rotation block SLP; any solution is a valid incumbent.
pub fn upper_bound(
    h: &ChannelMatrix,
    set: &DataVectorSet,
    gamma: &[f64],
    sigma: f64,
    theta: &[f64],
    tol: &Tolerances,
) -> Result<SlpSolution> {
    slp::solve_block(h, set, gamma, sigma, Some(theta), tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSolution {
    /// Per-user rotation in `[0, 2π)`, `θ_1 = 0`.
    pub theta: Vec<f64>,
    /// Expanded lookup solution at `theta` (lexicographic over all vectors).
    pub solution: SlpSolution,
    /// Block SLP power without rotation.
    pub unrotated_power: f64,
    /// Incumbent power `U`.
    pub upper: f64,
    /// Certified lower bound `L`.
    pub lower: f64,
    pub gap: f64,
    pub nodes: usize,
    pub certified: bool,
    /// `λ₂/λ₁` of the relaxation that produced the incumbent (zero when the
    /// unrotated start was never improved).
    pub rank_defect: f64,
    pub modulus_defect: f64,
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Vec<(f64, f64)>,
    bound: f64,
    depth: usize,
    seq: u64,
}

impl Node {
    fn widest(&self) -> Option<(usize, f64)> {
        self.bounds
            .iter()
            .enumerate()
            .map(|(i, (l, u))| (i, u - l))
            .fold(None, |best, (i, w)| match best {
                Some((_, bw)) if bw >= w => best,
                _ => Some((i, w)),
            })
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-heap order: lowest bound, then widest interval, then oldest.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        let w = |n: &Node| n.widest().map_or(0.0, |(_, w)| w);
        other
            .bound
            .total_cmp(&self.bound)
            .then(w(self).total_cmp(&w(other)))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    h: &'a ChannelMatrix,
    set: &'a DataVectorSet,
    gamma: &'a [f64],
    sigma: f64,
    options: &'a Options,
    incumbent: SlpSolution,
    rank_defect: f64,
    modulus_defect: f64,
    evaluated: usize,
}

impl Search<'_> {
    /// Relaxes a box and tries its candidate; `None` when the box can be
    /// discarded.
    fn evaluate(&mut self, bounds: Vec<(f64, f64)>, parent: f64, depth: usize, seq: u64) -> Result<Option<Node>> {
        self.evaluated += 1;
        let tol = &self.options.tolerances;
        let relax = match sdp_relax(self.h, self.set, self.gamma, self.sigma, &bounds, tol)? {
            RelaxOutcome::Solved(r) => r,
            RelaxOutcome::Infeasible => return Ok(None),
            RelaxOutcome::Unresolved(status) => {
                log::warn!("relaxation unresolved ({status:?}) at depth {depth}; keeping parent bound");
                return Ok(Some(Node { bounds, bound: parent, depth, seq }));
            }
        };
        if let Ok(cand) = relaxation_candidate(&relax) {
            match upper_bound(self.h, self.set, self.gamma, self.sigma, &cand.theta, tol) {
                Ok(sol) if sol.average_power < self.incumbent.average_power => {
                    log::debug!(
                        "incumbent {:.6} → {:.6} at depth {depth} (λ₂/λ₁ = {:.2e})",
                        self.incumbent.average_power,
                        sol.average_power,
                        cand.rank_defect
                    );
                    self.incumbent = sol;
                    self.rank_defect = cand.rank_defect;
                    self.modulus_defect = modulus_defect(&relax.t);
                }
                Ok(_) => {}
                Err(e) => log::debug!("candidate rejected: {e}"),
            }
        }
        Ok(Some(Node {
            bounds,
            bound: relax.bound.max(parent),
            depth,
            seq,
        }))
    }

    fn keep(&self, node: &Node) -> bool {
        node.bound < self.incumbent.average_power * (1.0 - PRUNE_MARGIN)
    }
}

/// Initial boxes on `arg T_1j = −θ_j`.
///
/// Rotating user `j`'s constellation by `2π/r_j`, with `r_j` its rotational
/// order, only relabels its symbols, so `θ_j ∈ [0, 2π/r_j)` covers every
/// distinct problem. Intervals wider than π are split into equal parts.
pub fn root_boxes(constellations: &[Constellation]) -> Vec<Vec<(f64, f64)>> {
    let mut boxes: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    for k in constellations.iter().skip(1) {
        let width = TAU / k.rotational_order() as f64;
        let parts = (width / PI - 1e-12).ceil().max(1.0) as usize;
        let step = width / parts as f64;
        let pieces: Vec<(f64, f64)> = (0..parts)
            .map(|i| (TAU - width + i as f64 * step, TAU - width + (i + 1) as f64 * step))
            .collect();
        boxes = boxes
            .into_iter()
            .flat_map(|b| {
                pieces.iter().map(move |&p| {
                    let mut next = b.clone();
                    next.push(p);
                    next
                })
            })
            .collect();
    }
    boxes
}

/// Best-first branch-and-bound over the rotations of users `2..K`.
pub fn solve(
    h: &ChannelMatrix,
    constellations: &[Constellation],
    gamma: &[f64],
    sigma: f64,
    options: &Options,
) -> Result<RotationSolution> {
    if !(options.eps > 0.0) {
        return Err(Error::InvalidArgument("ε must be positive".into()));
    }
    let set = reduced_set(constellations)?;
    solve_on(h, &set, gamma, sigma, options)
}

/// As [`solve`], on a caller-supplied (full or reduced) data-vector set.
pub fn solve_on(
    h: &ChannelMatrix,
    set: &DataVectorSet,
    gamma: &[f64],
    sigma: f64,
    options: &Options,
) -> Result<RotationSolution> {
    let k = h.users();
    let zero = vec![0.0; k];
    let start = upper_bound(h, set, gamma, sigma, &zero, &options.tolerances)?;
    let unrotated_power = start.average_power;
    let mut search = Search {
        h,
        set,
        gamma,
        sigma,
        options,
        incumbent: start,
        rank_defect: 0.0,
        modulus_defect: 0.0,
        evaluated: 0,
    };

    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    for bounds in root_boxes(set.constellations()) {
        if let Some(node) = search.evaluate(bounds, 0.0, 1, seq)? {
            open.push(node);
        }
        seq += 1;
    }

    let mut lower;
    loop {
        let upper = search.incumbent.average_power;
        while open.peek().is_some_and(|n| !search.keep(n)) {
            open.pop();
        }
        lower = open.peek().map_or(upper, |n| n.bound.min(upper));
        if (upper - lower) / lower <= options.eps || search.evaluated >= options.node_cap {
            break;
        }
        let node = open.pop().expect("nonempty after gap check");
        let Some((axis, _)) = node.widest() else {
            continue;
        };
        let (l, u) = node.bounds[axis];
        let mid = 0.5 * (l + u);
        for half in [(l, mid), (mid, u)] {
            let mut bounds = node.bounds.clone();
            bounds[axis] = half;
            if let Some(child) = search.evaluate(bounds, node.bound, node.depth + 1, seq)? {
                if search.keep(&child) {
                    open.push(child);
                }
            }
            seq += 1;
        }
    }

    let upper = search.incumbent.average_power;
    let gap = ((upper - lower) / lower).max(0.0);
    let certified = gap <= options.eps;
    if !certified {
        log::warn!("node cap {} reached with gap {gap:.3e}", options.node_cap);
    }
    let theta: Vec<f64> = search.incumbent.rotation.iter().map(|t| t.rem_euclid(TAU)).collect();
    let solution = slp::expand(set, SlpSolution { rotation: theta.clone(), ..search.incumbent })?;
    Ok(RotationSolution {
        theta,
        solution,
        unrotated_power,
        upper,
        lower,
        gap,
        nodes: search.evaluated,
        certified,
        rank_defect: search.rank_defect,
        modulus_defect: search.modulus_defect,
    })
}
