//! Solver-agnostic conic programs over real scalar variables.
//!
//! Problems are built from affine expressions; complex quantities are
//! lowered through [`ComplexExpr`] and Hermitian PSD blocks through the
//! standard real embedding `[[Re H, −Im H], [Im H, Re H]]`. The backend is
//! Clarabel's interior-point method.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalError,
}

const STALL_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feasibility: f64,
    pub gap_rel: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-8,
            gap_rel: 1e-8,
            max_iter: 500,
        }
    }
}

/// `Σ coef·x[var] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn var(index: usize) -> Self {
        AffineExpr {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn add_term(&mut self, index: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    /// Scale used to normalize residuals: `1 + |c| + Σ|a_i x_i|`.
    fn magnitude(&self, x: &[f64]) -> f64 {
        1.0 + self.constant.abs() + self.terms.iter().map(|&(i, c)| (c * x[i]).abs()).sum::<f64>()
    }

    fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self += rhs;
        self
    }
}

impl AddAssign for AffineExpr {
    fn add_assign(&mut self, rhs: AffineExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + rhs.scaled(-1.0)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, s: f64) -> AffineExpr {
        self.scaled(s)
    }
}

/// Complex affine expression held as real and imaginary parts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComplexExpr {
    pub re: AffineExpr,
    pub im: AffineExpr,
}

impl ComplexExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(z: Complex64) -> Self {
        ComplexExpr {
            re: AffineExpr::constant(z.re),
            im: AffineExpr::constant(z.im),
        }
    }

    /// Complex variable stored as consecutive real indices `(re, im)`.
    pub fn var(re: usize, im: usize) -> Self {
        ComplexExpr {
            re: AffineExpr::var(re),
            im: AffineExpr::var(im),
        }
    }

    pub fn conj(self) -> Self {
        ComplexExpr {
            re: self.re,
            im: -self.im,
        }
    }

    /// `self += g · z` for a constant gain `g` and variable pair `z`.
    pub fn add_scaled(&mut self, g: Complex64, z: &ComplexExpr) {
        self.re += z.re.clone() * g.re - z.im.clone() * g.im;
        self.im += z.re.clone() * g.im + z.im.clone() * g.re;
    }

    pub fn scale(&self, g: Complex64) -> ComplexExpr {
        let mut out = ComplexExpr::zero();
        out.add_scaled(g, self);
        out
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.re.eval(x), self.im.eval(x))
    }
}

impl Add for ComplexExpr {
    type Output = ComplexExpr;
    fn add(self, rhs: ComplexExpr) -> ComplexExpr {
        ComplexExpr {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

/// Symmetric matrix of affine expressions constrained PSD; stored as the
/// upper triangle by columns.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    dim: usize,
    upper: Vec<AffineExpr>,
}

impl PsdBlock {
    pub fn from_fn(dim: usize, mut entry: impl FnMut(usize, usize) -> AffineExpr) -> Self {
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for col in 0..dim {
            for row in 0..=col {
                upper.push(entry(row, col));
            }
        }
        PsdBlock { dim, upper }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn entry(&self, row: usize, col: usize) -> &AffineExpr {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        &self.upper[c * (c + 1) / 2 + r]
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.entry(r, c).eval(x))
    }
}

/// Real symmetric embedding `[[Re H, −Im H], [Im H, Re H]]` of a Hermitian matrix.
///
/// `H ⪰ 0` iff the embedding is PSD; each eigenvalue of `H` appears twice.
pub fn hermitian_embed(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let q = h.nrows();
    DMatrix::from_fn(2 * q, 2 * q, |r, c| {
        let z = h[(r % q, c % q)];
        match (r < q, c < q) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Embedding of a Hermitian matrix of expressions, given its upper triangle
/// (`row <= col`); diagonal entries must have zero imaginary part.
pub fn hermitian_embed_exprs(
    q: usize,
    mut upper: impl FnMut(usize, usize) -> ComplexExpr,
) -> PsdBlock {
    let mut cache: Vec<Option<ComplexExpr>> = vec![None; q * q];
    let mut get = |r: usize, c: usize| -> ComplexExpr {
        let (a, b, conj) = if r <= c { (r, c, false) } else { (c, r, true) };
        let slot = &mut cache[a * q + b];
        let z = slot.get_or_insert_with(|| upper(a, b)).clone();
        if conj {
            z.conj()
        } else {
            z
        }
    };
    PsdBlock::from_fn(2 * q, |r, c| {
        let z = get(r % q, c % q);
        match (r < q, c < q) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// `min ½xᵀQx + cᵀx` subject to affine equalities, inequalities
/// (`expr ≤ 0`), second-order cones and PSD blocks.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    num_vars: usize,
    /// Upper-triangular entries of `Q`.
    quad: Vec<(usize, usize, f64)>,
    linear: Vec<f64>,
    equalities: Vec<AffineExpr>,
    inequalities: Vec<AffineExpr>,
    /// `(t, x₁…)` with `‖x‖ ≤ t`.
    cones: Vec<Vec<AffineExpr>>,
    psd: Vec<PsdBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest normalized constraint violation at `x`.
    pub residual: f64,
    pub iterations: u32,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.linear.push(0.0);
        self.num_vars - 1
    }

    /// Complex scalar as two fresh real variables.
    pub fn add_complex_var(&mut self) -> ComplexExpr {
        let re = self.add_var();
        let im = self.add_var();
        ComplexExpr::var(re, im)
    }

    /// Adds `½·q·x_i·x_j` (and the symmetric term when `i ≠ j`).
    pub fn add_quadratic(&mut self, i: usize, j: usize, q: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.quad.push((a, b, q));
    }

    /// Adds `weight·x_i²` to the objective.
    pub fn add_square(&mut self, i: usize, weight: f64) {
        self.add_quadratic(i, i, 2.0 * weight);
    }

    pub fn add_linear(&mut self, i: usize, c: f64) {
        self.linear[i] += c;
    }

    pub fn add_objective(&mut self, expr: &AffineExpr) {
        for &(i, c) in &expr.terms {
            self.linear[i] += c;
        }
    }

    pub fn add_eq(&mut self, expr: AffineExpr) {
        self.equalities.push(expr);
    }

    /// `expr ≤ 0`.
    pub fn add_le(&mut self, expr: AffineExpr) {
        self.inequalities.push(expr);
    }

    /// `expr ≥ 0`.
    pub fn add_ge(&mut self, expr: AffineExpr) {
        self.inequalities.push(-expr);
    }

    pub fn add_soc(&mut self, t: AffineExpr, rest: Vec<AffineExpr>) {
        let mut cone = Vec::with_capacity(rest.len() + 1);
        cone.push(t);
        cone.extend(rest);
        self.cones.push(cone);
    }

    pub fn add_psd(&mut self, block: PsdBlock) {
        self.psd.push(block);
    }

    fn check(&self) -> Result<(), String> {
        let n = self.num_vars;
        let bad = |e: &AffineExpr| e.terms.iter().any(|&(i, _)| i >= n);
        if self.quad.iter().any(|&(i, j, _)| i >= n || j >= n)
            || self.equalities.iter().any(bad)
            || self.inequalities.iter().any(bad)
            || self.cones.iter().flatten().any(bad)
            || self.psd.iter().flat_map(|b| &b.upper).any(bad)
        {
            return Err("expression references an undeclared variable".into());
        }
        if self.cones.iter().any(|c| c.is_empty()) {
            return Err("empty second-order cone".into());
        }
        self.check_quadratic_psd()
    }

    /// Factorization attempt on the part of `Q` that is not diagonal.
    fn check_quadratic_psd(&self) -> Result<(), String> {
        let mut touched: Vec<usize> = Vec::new();
        let mut diag = std::collections::HashMap::new();
        for &(i, j, q) in &self.quad {
            if i == j {
                *diag.entry(i).or_insert(0.0) += q;
            } else {
                touched.push(i);
                touched.push(j);
            }
        }
        if diag.values().any(|&d: &f64| d < 0.0) && touched.is_empty() {
            return Err("objective Hessian has a negative diagonal".into());
        }
        if touched.is_empty() {
            return Ok(());
        }
        touched.extend(diag.keys().copied());
        touched.sort_unstable();
        touched.dedup();
        let pos = |v: usize| touched.binary_search(&v).unwrap();
        let mut q = DMatrix::<f64>::zeros(touched.len(), touched.len());
        for &(i, j, v) in &self.quad {
            let (a, b) = (pos(i), pos(j));
            q[(a, b)] += v;
            if a != b {
                q[(b, a)] += v;
            }
        }
        let scale = q.amax().max(1.0);
        let shifted = &q + DMatrix::identity(q.nrows(), q.ncols()) * (1e-10 * scale);
        if shifted.cholesky().is_none() {
            return Err("objective Hessian is not positive semidefinite".into());
        }
        Ok(())
    }

    /// Objective value at `x`.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let quad: f64 = self
            .quad
            .iter()
            .map(|&(i, j, q)| {
                if i == j {
                    0.5 * q * x[i] * x[i]
                } else {
                    q * x[i] * x[j]
                }
            })
            .sum();
        quad + self.linear.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest normalized violation over all constraints at `x`.
    pub fn residual_at(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for e in &self.equalities {
            worst = worst.max(e.eval(x).abs() / e.magnitude(x));
        }
        for e in &self.inequalities {
            worst = worst.max(e.eval(x).max(0.0) / e.magnitude(x));
        }
        for cone in &self.cones {
            let t = cone[0].eval(x);
            let norm = cone[1..].iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            let scale = 1.0 + t.abs() + norm;
            worst = worst.max((norm - t).max(0.0) / scale);
        }
        for block in &self.psd {
            let m = block.eval(x);
            let scale = 1.0 + m.amax();
            let min = m.symmetric_eigen().eigenvalues.min();
            worst = worst.max((-min).max(0.0) / scale);
        }
        worst
    }

    /// Plain-text sparse dump: one `kind row index coef` line per term.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vars {}", self.num_vars);
        for &(i, j, q) in &self.quad {
            let _ = writeln!(out, "quad {i} {j} {q:e}");
        }
        for (i, &c) in self.linear.iter().enumerate() {
            if c != 0.0 {
                let _ = writeln!(out, "lin {i} {c:e}");
            }
        }
        let rows = |kind: &str, exprs: &[AffineExpr], out: &mut String| {
            for (r, e) in exprs.iter().enumerate() {
                for &(i, c) in &e.terms {
                    let _ = writeln!(out, "{kind} {r} {i} {c:e}");
                }
                if e.constant != 0.0 {
                    let _ = writeln!(out, "{kind} {r} const {:e}", e.constant);
                }
            }
        };
        rows("eq", &self.equalities, &mut out);
        rows("le", &self.inequalities, &mut out);
        for (k, cone) in self.cones.iter().enumerate() {
            rows(&format!("soc{k}"), cone, &mut out);
        }
        for (k, block) in self.psd.iter().enumerate() {
            let _ = writeln!(out, "psd{k} dim {}", block.dim);
            rows(&format!("psd{k}"), &block.upper, &mut out);
        }
        out
    }

    pub fn solve(&self, tol: &Tolerances) -> ConicSolution {
        let failed = |status| ConicSolution {
            status,
            x: vec![0.0; self.num_vars],
            objective: f64::NAN,
            residual: f64::INFINITY,
            iterations: 0,
        };
        if let Err(msg) = self.check() {
            log::warn!("rejecting malformed conic problem: {msg}");
            return failed(SolveStatus::NumericalError);
        }
        let n = self.num_vars;

        // Rows of A x + s = b with s in the cone; a constraint expression
        // e(x) = a·x + c lands in the cone as s = e, i.e. A = −a, b = c.
        let mut rows_i = Vec::new();
        let mut cols_j = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut push = |e: &AffineExpr, sign: f64| {
            let r = b.len();
            for &(i, c) in &e.terms {
                rows_i.push(r);
                cols_j.push(i);
                vals.push(-sign * c);
            }
            b.push(sign * e.constant);
        };
        let mut cones = Vec::new();
        // Zero cone holds s = −e, which is the same set.
        for e in &self.equalities {
            push(e, 1.0);
        }
        if !self.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }
        // e ≤ 0  ⇔  −e ≥ 0.
        for e in &self.inequalities {
            push(e, -1.0);
        }
        if !self.inequalities.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(self.inequalities.len()));
        }
        for cone in &self.cones {
            for e in cone {
                push(e, 1.0);
            }
            cones.push(SupportedConeT::SecondOrderConeT(cone.len()));
        }
        for block in &self.psd {
            let mut k = 0;
            for col in 0..block.dim {
                for row in 0..=col {
                    let s = if row == col { 1.0 } else { std::f64::consts::SQRT_2 };
                    push(&block.upper[k], s);
                    k += 1;
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows_i, cols_j, vals);
        let (qi, qj, qv): (Vec<_>, Vec<_>, Vec<_>) = {
            let mut qi = Vec::new();
            let mut qj = Vec::new();
            let mut qv = Vec::new();
            for &(i, j, q) in &self.quad {
                qi.push(i);
                qj.push(j);
                qv.push(q);
            }
            (qi, qj, qv)
        };
        let p = CscMatrix::new_from_triplets(n, n, qi, qj, qv);

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(tol.max_iter)
            .tol_feas(tol.feasibility)
            .tol_gap_rel(tol.gap_rel)
            .tol_gap_abs(tol.gap_rel)
            .chordal_decomposition_enable(false)
            .build()
            .expect("static solver settings");
        let mut solver = match DefaultSolver::new(&p, &self.linear, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("conic backend rejected problem: {e}");
                return failed(SolveStatus::NumericalError);
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let info = &solver.info;
        log::debug!(
            "backend status {:?} after {} iterations (gap {:e})",
            sol.status,
            sol.iterations,
            info.gap_rel
        );
        let x = sol.x.clone();
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            // Stalled exits are kept when the iterate is feasible and the
            // duality gap is already small.
            SolverStatus::AlmostSolved
            | SolverStatus::InsufficientProgress
            | SolverStatus::NumericalError
            | SolverStatus::MaxIterations
            | SolverStatus::MaxTime
                if (info.gap_rel.min(info.gap_abs)) <= STALL_GAP
                    && self.residual_at(&x) <= tol.feasibility =>
            {
                SolveStatus::Optimal
            }
            SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIterations,
            _ => SolveStatus::NumericalError,
        };
        let (objective, residual) = if status == SolveStatus::Optimal {
            (self.objective_at(&x), self.residual_at(&x))
        } else {
            (f64::NAN, f64::INFINITY)
        };
        ConicSolution {
            status,
            x,
            objective,
            residual,
            iterations: sol.iterations,
        }
    }
}
