//! A small conic modeling layer: scalar variables, affine expressions,
//! equality / nonnegativity / PSD constraints and a linear objective,
//! compiled to Clarabel's `A x + s = b, s ∈ K` form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;

use crate::error::SolveError;
use crate::linalg::{hermitian_part, CMat, RMat};

/// Affine expression `Σ cᵢ xᵢ + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(i: usize, c: f64) -> Self {
        Self {
            terms: vec![(i, c)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, i: usize, c: f64) {
        if c != 0.0 {
            self.terms.push((i, c));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, c: f64) {
        if c == 0.0 {
            return;
        }
        for &(i, v) in &other.terms {
            self.terms.push((i, v * c));
        }
        self.constant += other.constant * c;
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self::zero();
        out.add_scaled(self, c);
        out
    }

    /// Merges repeated variables and drops zero coefficients.
    pub fn compact(&self) -> Self {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, v) in &self.terms {
            *map.entry(i).or_insert(0.0) += v;
        }
        Self {
            terms: map.into_iter().filter(|(_, v)| *v != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, v)| v * x[i]).sum::<f64>()
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self += rhs;
        self
    }
}

impl AddAssign for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self -= rhs;
        self
    }
}

impl SubAssign for LinExpr {
    fn sub_assign(&mut self, rhs: LinExpr) {
        self.add_scaled(&rhs, -1.0);
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, rhs: f64) -> LinExpr {
        self.scaled(rhs)
    }
}

/// Complex affine expression, real and imaginary parts kept separately.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CExpr {
    pub re: LinExpr,
    pub im: LinExpr,
}

impl CExpr {
    pub fn real(re: LinExpr) -> Self {
        Self { re, im: LinExpr::zero() }
    }

    pub fn constant(z: Complex64) -> Self {
        Self {
            re: LinExpr::constant(z.re),
            im: LinExpr::constant(z.im),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.scaled(-1.0),
        }
    }

    /// `self += z · other`.
    pub fn add_scaled(&mut self, other: &CExpr, z: Complex64) {
        self.re.add_scaled(&other.re, z.re);
        self.re.add_scaled(&other.im, -z.im);
        self.im.add_scaled(&other.re, z.im);
        self.im.add_scaled(&other.im, z.re);
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.re.eval(x), self.im.eval(x))
    }
}

/// Square matrix of complex affine expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct CAffineMatrix {
    pub n: usize,
    pub entries: Vec<CExpr>,
}

impl CAffineMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![CExpr::default(); n * n],
        }
    }

    pub fn constant(m: &CMat) -> Self {
        let n = m.nrows();
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.entries[i * n + j] = CExpr::constant(m[(i, j)]);
            }
        }
        out
    }

    pub fn at(&self, i: usize, j: usize) -> &CExpr {
        &self.entries[i * self.n + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut CExpr {
        &mut self.entries[i * self.n + j]
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.at(i, j).eval(x))
    }

    /// Real symmetric embedding `[Re, −Im; Im, Re]`.
    pub fn realified(&self) -> SymExprMatrix {
        let n = self.n;
        let mut out = SymExprMatrix::zeros(2 * n);
        for j in 0..n {
            for i in 0..=j {
                let z = self.at(i, j);
                out.set(i, j, z.re.clone());
                out.set(i + n, j + n, z.re.clone());
                // Upper-right block holds −Im(X[i, j]); the transposed
                // position (j, i + n) holds Im(X[i, j]) = −Im(X[j, i]).
                out.set(i, j + n, z.im.scaled(-1.0));
                if i != j {
                    out.set(j, i + n, z.im.clone());
                }
            }
        }
        out
    }
}

/// Symmetric matrix of real affine expressions, upper triangle stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymExprMatrix {
    pub n: usize,
    upper: Vec<LinExpr>,
}

impl SymExprMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![LinExpr::zero(); n * (n + 1) / 2],
        }
    }

    fn index(i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        j * (j + 1) / 2 + i
    }

    pub fn get(&self, i: usize, j: usize) -> &LinExpr {
        &self.upper[Self::index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, e: LinExpr) {
        self.upper[Self::index(i, j)] = e;
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        &mut self.upper[Self::index(i, j)]
    }

    pub fn eval(&self, x: &[f64]) -> RMat {
        RMat::from_fn(self.n, self.n, |i, j| self.get(i, j).eval(x))
    }

    /// Upper triangle in column-major order.
    pub fn upper_column_major(&self) -> &[LinExpr] {
        &self.upper
    }
}

/// Hermitian matrix variable parametrized by `n²` real scalars: the
/// diagonal, then real and imaginary parts of the strict upper triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermVar {
    pub offset: usize,
    pub n: usize,
}

impl HermVar {
    fn upper_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        // Row-major enumeration of strict upper pairs.
        let before: usize = (0..i).map(|r| self.n - 1 - r).sum();
        before + (j - i - 1)
    }

    fn n_upper(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entry(&self, i: usize, j: usize) -> CExpr {
        if i == j {
            return CExpr::real(LinExpr::var(self.offset + i));
        }
        let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        let u = self.upper_index(a, b);
        CExpr {
            re: LinExpr::var(self.offset + self.n + u),
            im: LinExpr::term(self.offset + self.n + self.n_upper() + u, sign),
        }
    }

    pub fn trace(&self) -> LinExpr {
        let mut e = LinExpr::zero();
        for i in 0..self.n {
            e.add_term(self.offset + i, 1.0);
        }
        e
    }

    /// `Tr(M X)` as a complex affine expression.
    pub fn trace_product(&self, m: &CMat) -> CExpr {
        let n = self.n;
        let mut re = LinExpr::zero();
        let mut im = LinExpr::zero();
        for i in 0..n {
            let c = m[(i, i)];
            re.add_term(self.offset + i, c.re);
            im.add_term(self.offset + i, c.im);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let u = self.upper_index(i, j);
                let vr = self.offset + n + u;
                let vi = self.offset + n + self.n_upper() + u;
                // M[j,i] X[i,j] + M[i,j] X[j,i] with X[i,j] = u + jv.
                let s = m[(j, i)] + m[(i, j)];
                let d = (m[(j, i)] - m[(i, j)]) * Complex64::new(0.0, 1.0);
                re.add_term(vr, s.re);
                im.add_term(vr, s.im);
                re.add_term(vi, d.re);
                im.add_term(vi, d.im);
            }
        }
        CExpr { re, im }
    }

    /// `Tr(G X)` for Hermitian `G`, which is real.
    pub fn real_trace_product(&self, g: &CMat) -> LinExpr {
        self.trace_product(&hermitian_part(g)).re
    }

    pub fn as_matrix(&self) -> CAffineMatrix {
        let mut out = CAffineMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                *out.at_mut(i, j) = self.entry(i, j);
            }
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> CMat {
        CMat::from_fn(self.n, self.n, |i, j| self.entry(i, j).eval(x))
    }

    /// Writes the Hermitian part of `m` into the variable's slots of `x`.
    pub fn store(&self, m: &CMat, x: &mut [f64]) {
        let h = hermitian_part(m);
        for i in 0..self.n {
            x[self.offset + i] = h[(i, i)].re;
            for j in (i + 1)..self.n {
                let u = self.upper_index(i, j);
                x[self.offset + self.n + u] = h[(i, j)].re;
                x[self.offset + self.n + self.n_upper() + u] = h[(i, j)].im;
            }
        }
    }
}

/// Real symmetric matrix variable, `n(n+1)/2` scalars in upper column-major
/// order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymVar {
    pub offset: usize,
    pub n: usize,
}

impl SymVar {
    pub fn entry(&self, i: usize, j: usize) -> LinExpr {
        LinExpr::var(self.offset + SymExprMatrix::index(i, j))
    }

    pub fn as_matrix(&self) -> SymExprMatrix {
        let mut out = SymExprMatrix::zeros(self.n);
        for j in 0..self.n {
            for i in 0..=j {
                out.set(i, j, self.entry(i, j));
            }
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> RMat {
        RMat::from_fn(self.n, self.n, |i, j| self.entry(i, j).eval(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockKind {
    Free,
    Nonneg,
    Hermitian { n: usize },
    Symmetric { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdConstraint {
    pub name: String,
    pub matrix: SymExprMatrix,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub blocks: Vec<VarBlock>,
    pub n_vars: usize,
    /// Minimized.
    pub objective: LinExpr,
    pub equalities: Vec<(String, LinExpr)>,
    /// Each expression must be nonnegative.
    pub inequalities: Vec<(String, LinExpr)>,
    pub psd: Vec<PsdConstraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    /// Reached only reduced accuracy.
    pub reduced_accuracy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: u32,
    pub static_reg: f64,
    /// Extra attempts, each with ten times the previous regularization.
    pub retries: u32,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            static_reg: 1e-6,
            retries: 2,
            verbose: false,
        }
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_block(&mut self, name: &str, kind: BlockKind, len: usize) -> usize {
        let offset = self.n_vars;
        self.blocks.push(VarBlock {
            name: name.to_string(),
            kind,
            offset,
            len,
        });
        self.n_vars += len;
        offset
    }

    pub fn add_free(&mut self, name: &str) -> usize {
        self.push_block(name, BlockKind::Free, 1)
    }

    pub fn add_nonneg(&mut self, name: &str) -> usize {
        let i = self.push_block(name, BlockKind::Nonneg, 1);
        self.inequalities.push((format!("{name} >= 0"), LinExpr::var(i)));
        i
    }

    /// Hermitian variable; when `psd` is set the realified matrix is
    /// constrained to the PSD cone.
    pub fn add_hermitian(&mut self, name: &str, n: usize, psd: bool) -> HermVar {
        let offset = self.push_block(name, BlockKind::Hermitian { n }, n * n);
        let v = HermVar { offset, n };
        if psd {
            self.add_psd_hermitian(&format!("{name} psd"), &v.as_matrix());
        }
        v
    }

    pub fn add_symmetric(&mut self, name: &str, n: usize) -> SymVar {
        let offset = self.push_block(name, BlockKind::Symmetric { n }, n * (n + 1) / 2);
        SymVar { offset, n }
    }

    pub fn add_eq(&mut self, name: &str, e: LinExpr) {
        self.equalities.push((name.to_string(), e.compact()));
    }

    /// `e ≥ 0`.
    pub fn add_ge0(&mut self, name: &str, e: LinExpr) {
        self.inequalities.push((name.to_string(), e.compact()));
    }

    /// `a ≤ b`.
    pub fn add_le(&mut self, name: &str, a: LinExpr, b: LinExpr) {
        self.add_ge0(name, b - a);
    }

    pub fn add_psd(&mut self, name: &str, m: SymExprMatrix) {
        let mut m = m;
        for e in m.upper.iter_mut() {
            *e = e.compact();
        }
        self.psd.push(PsdConstraint {
            name: name.to_string(),
            matrix: m,
        });
    }

    pub fn add_psd_hermitian(&mut self, name: &str, m: &CAffineMatrix) {
        self.add_psd(name, m.realified());
    }

    pub fn set_objective(&mut self, e: LinExpr) {
        self.objective = e.compact();
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let check = |e: &LinExpr, what: &str| -> Result<(), SolveError> {
            for &(i, v) in &e.terms {
                if i >= self.n_vars {
                    return Err(SolveError::Malformed(format!("{what} references undeclared variable {i}")));
                }
                if !v.is_finite() {
                    return Err(SolveError::Malformed(format!("{what} has non-finite coefficient")));
                }
            }
            if !e.constant.is_finite() {
                return Err(SolveError::Malformed(format!("{what} has non-finite constant")));
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (name, e) in self.equalities.iter().chain(&self.inequalities) {
            check(e, name)?;
        }
        for c in &self.psd {
            for e in c.matrix.upper_column_major() {
                check(e, &c.name)?;
            }
        }
        Ok(())
    }

    /// Number of scalar rows in the compiled cone system.
    pub fn n_rows(&self) -> usize {
        self.equalities.len()
            + self.inequalities.len()
            + self.psd.iter().map(|c| c.matrix.n * (c.matrix.n + 1) / 2).sum::<usize>()
    }

    /// Clarabel data `(q, A, b, cones)`.
    fn compile(&self) -> (Vec<f64>, CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
        let mut q = vec![0.0; self.n_vars];
        for &(i, v) in &self.objective.terms {
            q[i] += v;
        }
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        // s = b − A x must equal the expression, so A = −coefficients.
        let mut push = |e: &LinExpr, scale: f64, b: &mut Vec<f64>| {
            let r = b.len();
            for &(i, v) in &e.terms {
                rows.push(r);
                cols.push(i);
                vals.push(-v * scale);
            }
            b.push(e.constant * scale);
        };
        let mut cones = Vec::new();
        if !self.equalities.is_empty() {
            for (_, e) in &self.equalities {
                push(e, 1.0, &mut b);
            }
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }
        if !self.inequalities.is_empty() {
            for (_, e) in &self.inequalities {
                push(e, 1.0, &mut b);
            }
            cones.push(SupportedConeT::NonnegativeConeT(self.inequalities.len()));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for c in &self.psd {
            let n = c.matrix.n;
            for j in 0..n {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { sqrt2 };
                    push(c.matrix.get(i, j), scale, &mut b);
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(n));
        }
        let a = CscMatrix::new_from_triplets(b.len(), self.n_vars, rows, cols, vals);
        (q, a, b, cones)
    }

    /// Solves with Clarabel. Numerical breakdowns are retried with stronger
    /// static regularization before being reported.
    pub fn solve(&self, opts: &SolverOptions) -> Result<ConicSolution, SolveError> {
        self.validate()?;
        let (q, a, b, cones) = self.compile();
        let p = CscMatrix::<f64>::zeros((self.n_vars, self.n_vars));
        let mut last = SolveError::NotConverged("no attempt".into());
        for attempt in 0..=opts.retries {
            let reg = opts.static_reg * 10f64.powi(attempt as i32);
            match self.solve_once(&p, &q, &a, &b, &cones, opts, reg) {
                Err(SolveError::NotConverged(msg)) => last = SolveError::NotConverged(msg),
                other => return other,
            }
        }
        Err(last)
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_once(
        &self,
        p: &CscMatrix<f64>,
        q: &[f64],
        a: &CscMatrix<f64>,
        b: &[f64],
        cones: &[SupportedConeT<f64>],
        opts: &SolverOptions,
        static_reg: f64,
    ) -> Result<ConicSolution, SolveError> {
        let settings = DefaultSettingsBuilder::default()
            .verbose(opts.verbose)
            .tol_gap_abs(opts.tol)
            .tol_gap_rel(opts.tol)
            .tol_feas(opts.tol)
            .max_iter(opts.max_iter)
            .static_regularization_constant(static_reg)
            // The realified blocks decompose, but the decomposed problem
            // stalls on these instances.
            .chordal_decomposition_enable(false)
            .build()
            .map_err(|e| SolveError::Malformed(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(p, q, a, b, cones, settings)
            .map_err(|e| SolveError::Malformed(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let reduced_accuracy = match sol.status {
            SolverStatus::Solved => false,
            SolverStatus::AlmostSolved => true,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Err(SolveError::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Err(SolveError::Unbounded)
            }
            other => return Err(SolveError::NotConverged(format!("{other:?}"))),
        };
        Ok(ConicSolution {
            objective: self.objective.eval(&sol.x),
            x: sol.x.clone(),
            iterations: sol.iterations,
            reduced_accuracy,
        })
    }

    /// Largest constraint violation at `x`: equality residuals, negative
    /// parts of inequalities and negative eigenvalues of PSD blocks.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (_, e) in &self.equalities {
            worst = worst.max(e.eval(x).abs());
        }
        for (_, e) in &self.inequalities {
            worst = worst.max(-e.eval(x));
        }
        for c in &self.psd {
            let m = c.matrix.eval(x);
            let lmin = m.symmetric_eigen().eigenvalues.min();
            worst = worst.max(-lmin);
        }
        worst
    }

    /// Self-describing text dump: variable blocks, objective, then every
    /// constraint as coefficient triplets.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conic-program v1");
        let _ = writeln!(out, "variables {}", self.n_vars);
        for b in &self.blocks {
            let _ = writeln!(out, "block {} {:?} offset={} len={}", b.name, b.kind, b.offset, b.len);
        }
        let expr = |out: &mut String, e: &LinExpr| {
            let _ = write!(out, " const={:e}", e.constant);
            for &(i, v) in &e.terms {
                let _ = write!(out, " ({i},{v:e})");
            }
            let _ = writeln!(out);
        };
        let _ = write!(out, "minimize");
        expr(&mut out, &self.objective);
        for (name, e) in &self.equalities {
            let _ = write!(out, "eq \"{name}\"");
            expr(&mut out, e);
        }
        for (name, e) in &self.inequalities {
            let _ = write!(out, "ge0 \"{name}\"");
            expr(&mut out, e);
        }
        for c in &self.psd {
            let _ = writeln!(out, "psd \"{}\" dim={}", c.name, c.matrix.n);
            for j in 0..c.matrix.n {
                for i in 0..=j {
                    let _ = write!(out, "  [{i},{j}]");
                    expr(&mut out, c.matrix.get(i, j));
                }
            }
        }
        out
    }
}
