//! Linear inequality systems and Fourier–Motzkin elimination.
//!
//! A system is generic over [`Scalars`], which fixes the coefficient and the
//! constant-term types. [`Mixed`] pairs exact `Rational64` coefficients with
//! `f64` constants (entropy values), so floating error stays in the constant
//! slot. [`Exact`] uses big rationals for both.
//!
//! Elimination substitutes equalities first and then runs Fourier–Motzkin
//! with three pruning layers: duplicate/dominance pruning of parallel rows,
//! Chernikov's history rule (a combination is kept only when its source rows
//! have rank `|sources| - 1` on the eliminated columns), and removal of rows
//! implied by a nonnegative combination of the others, found by an exact
//! simplex over the multipliers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Debug, Display};
use std::hash::Hash;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio, Rational64};
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

use crate::error::{schema, Error, Result};

mod implied;

use implied::Combination;

/// Default tolerance for variable-free checks.
pub const DEFAULT_TOL: f64 = 1e-7;

/// Coefficient and constant types of a linear system.
pub trait Scalars: Clone + Debug + Send + Sync + 'static {
    type Coef: Clone + Num + Signed + Ord + Hash + Display + Debug + Send + Sync;
    type Const: Clone + Num + Signed + PartialOrd + Display + Debug + Send + Sync;

    fn scale(c: &Self::Const, k: &Self::Coef) -> Self::Const;
    fn divide(c: &Self::Const, k: &Self::Coef) -> Self::Const;
    fn tol(t: f64) -> Self::Const;
    fn const_to_f64(c: &Self::Const) -> f64;
    fn coef_small(k: &Self::Coef) -> Option<Ratio<i128>>;
    fn scale_small(c: &Self::Const, k: &Ratio<i128>) -> Self::Const;
}

/// Exact rational coefficients with floating constants.
#[derive(Clone, Debug)]
pub struct Mixed;

impl Scalars for Mixed {
    type Coef = Rational64;
    type Const = f64;

    fn scale(c: &f64, k: &Rational64) -> f64 {
        c * ratio_f64(k)
    }
    fn divide(c: &f64, k: &Rational64) -> f64 {
        c / ratio_f64(k)
    }
    fn tol(t: f64) -> f64 {
        t
    }
    fn const_to_f64(c: &f64) -> f64 {
        *c
    }
    fn coef_small(k: &Rational64) -> Option<Ratio<i128>> {
        Some(Ratio::new_raw(*k.numer() as i128, *k.denom() as i128))
    }
    fn scale_small(c: &f64, k: &Ratio<i128>) -> f64 {
        c * (*k.numer() as f64 / *k.denom() as f64)
    }
}

fn ratio_f64(k: &Rational64) -> f64 {
    *k.numer() as f64 / *k.denom() as f64
}

/// Big rationals throughout; results are exact.
#[derive(Clone, Debug)]
pub struct Exact;

impl Scalars for Exact {
    type Coef = BigRational;
    type Const = BigRational;

    fn scale(c: &BigRational, k: &BigRational) -> BigRational {
        c * k
    }
    fn divide(c: &BigRational, k: &BigRational) -> BigRational {
        c / k
    }
    fn tol(t: f64) -> BigRational {
        BigRational::from_f64(t).unwrap_or_else(BigRational::zero)
    }
    fn const_to_f64(c: &BigRational) -> f64 {
        c.to_f64().unwrap_or(f64::NAN)
    }
    fn coef_small(k: &BigRational) -> Option<Ratio<i128>> {
        Some(Ratio::new_raw(k.numer().to_i128()?, k.denom().to_i128()?))
    }
    fn scale_small(c: &BigRational, k: &Ratio<i128>) -> BigRational {
        c * BigRational::new(BigInt::from(*k.numer()), BigInt::from(*k.denom()))
    }
}

/// Exact rational with the same value as `x`.
pub fn exact(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite value")
}

pub fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inequality<S: Scalars> {
    pub coeffs: Vec<S::Coef>,
    pub rel: Relation,
    pub constant: S::Const,
}

impl<S: Scalars> Inequality<S> {
    fn lhs(&self, x: &[S::Const]) -> S::Const {
        self.coeffs
            .iter()
            .zip(x)
            .filter(|(a, _)| !a.is_zero())
            .fold(S::Const::zero(), |acc, (a, v)| acc + S::scale(v, a))
    }

    pub fn holds(&self, x: &[S::Const], tol: f64) -> bool {
        let d = self.lhs(x) - self.constant.clone();
        let t = S::tol(tol);
        match self.rel {
            Relation::Le => d <= t,
            Relation::Ge => d >= -t,
            Relation::Eq => d.abs() <= t,
        }
    }
}

pub type RateSystem = LinearSystem<Mixed>;
pub type ExactSystem = LinearSystem<Exact>;

/// Linear relations over named variables, some of them implicitly `>= 0`.
#[derive(Clone, Debug)]
pub struct LinearSystem<S: Scalars> {
    variables: Vec<String>,
    rows: Vec<Inequality<S>>,
    nonneg: Vec<bool>,
}

impl<S: Scalars> LinearSystem<S> {
    pub fn new<N: Into<String>>(variables: impl IntoIterator<Item = N>) -> Self {
        let variables: Vec<String> = variables.into_iter().map(Into::into).collect();
        let nonneg = vec![false; variables.len()];
        Self { variables, rows: Vec::new(), nonneg }
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn rows(&self) -> &[Inequality<S>] {
        &self.rows
    }

    pub fn is_nonneg(&self, var: &str) -> Result<bool> {
        Ok(self.nonneg[self.index(var)?])
    }

    pub fn index(&self, var: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| Error::Schema(format!("unknown variable {var}")))
    }

    pub fn add_variable(&mut self, name: impl Into<String>, nonneg: bool) -> Result<usize> {
        let name = name.into();
        if self.variables.contains(&name) {
            return schema(format!("variable {name} already declared"));
        }
        self.variables.push(name);
        self.nonneg.push(nonneg);
        for r in &mut self.rows {
            r.coeffs.push(S::Coef::zero());
        }
        Ok(self.variables.len() - 1)
    }

    pub fn set_nonneg(&mut self, var: &str, nonneg: bool) -> Result<()> {
        let i = self.index(var)?;
        self.nonneg[i] = nonneg;
        Ok(())
    }

    pub fn set_all_nonneg(&mut self) {
        self.nonneg.iter_mut().for_each(|b| *b = true);
    }

    /// Add `sum(coef * var) rel constant`. Repeated names accumulate.
    pub fn push<N: AsRef<str>>(
        &mut self,
        terms: &[(S::Coef, N)],
        rel: Relation,
        constant: S::Const,
    ) -> Result<()> {
        let mut coeffs = vec![S::Coef::zero(); self.variables.len()];
        for (c, n) in terms {
            let i = self.index(n.as_ref())?;
            coeffs[i] = coeffs[i].clone() + c.clone();
        }
        self.push_row(Inequality { coeffs, rel, constant })
    }

    /// Add `sum(vars) rel constant` with unit coefficients.
    pub fn push_sum<N: AsRef<str>>(&mut self, vars: &[N], rel: Relation, constant: S::Const) -> Result<()> {
        let terms: Vec<(S::Coef, &str)> = vars.iter().map(|v| (S::Coef::one(), v.as_ref())).collect();
        self.push(&terms, rel, constant)
    }

    pub fn push_row(&mut self, row: Inequality<S>) -> Result<()> {
        if row.coeffs.len() != self.variables.len() {
            return schema("coefficient vector length differs from the variable count");
        }
        self.rows.push(row);
        Ok(())
    }

    /// Evaluate against a named assignment covering every variable.
    pub fn evaluate_point(&self, assignment: &BTreeMap<String, S::Const>, tol: f64) -> Result<bool> {
        let x = self
            .variables
            .iter()
            .map(|v| {
                assignment
                    .get(v)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("assignment is missing {v}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.evaluate(&x, tol))
    }

    /// Evaluate a point given in declared variable order.
    pub fn evaluate(&self, x: &[S::Const], tol: f64) -> bool {
        let t = S::tol(tol);
        let nonneg_ok = self.nonneg.iter().zip(x).all(|(nn, v)| !nn || *v >= -t.clone());
        nonneg_ok && self.rows.iter().all(|r| r.holds(x, tol))
    }

    /// Fix `var = value`, removing it from the system.
    pub fn substitute(&self, var: &str, value: &S::Const) -> Result<Self> {
        let i = self.index(var)?;
        let mut out = Self {
            variables: self.variables.clone(),
            rows: Vec::with_capacity(self.rows.len() + 1),
            nonneg: self.nonneg.clone(),
        };
        if self.nonneg[i] {
            // keep the sign condition as a variable-free row
            let mut coeffs = vec![S::Coef::zero(); self.variables.len()];
            coeffs[i] = -S::Coef::one();
            out.rows.push(Inequality { coeffs, rel: Relation::Le, constant: S::Const::zero() });
        }
        out.rows.extend(self.rows.iter().cloned());
        for r in &mut out.rows {
            let a = std::mem::replace(&mut r.coeffs[i], S::Coef::zero());
            r.constant = r.constant.clone() - S::scale(value, &a);
        }
        out.variables.remove(i);
        out.nonneg.remove(i);
        for r in &mut out.rows {
            r.coeffs.remove(i);
        }
        Ok(out)
    }

    /// Project out one variable.
    pub fn eliminate(&self, var: &str) -> Result<Self> {
        self.eliminate_with(var, ElimOptions::default())
    }

    pub fn eliminate_with(&self, var: &str, opts: ElimOptions) -> Result<Self> {
        let v = self.index(var)?;
        let mut engine = Engine::from_system(self, &[v]);
        engine.opts = opts;
        engine.step(v);
        Ok(engine.into_system(self))
    }

    /// Project onto the variables in `keep` (order preserved from declaration).
    pub fn project<N: AsRef<str>>(&self, keep: &[N]) -> Result<Self> {
        self.project_with(keep, ElimOptions::default())
    }

    pub fn project_with<N: AsRef<str>>(&self, keep: &[N], opts: ElimOptions) -> Result<Self> {
        let keep_idx = keep.iter().map(|k| self.index(k.as_ref())).collect::<Result<Vec<_>>>()?;
        let drop: Vec<usize> = (0..self.variables.len()).filter(|i| !keep_idx.contains(i)).collect();
        let mut engine = Engine::from_system(self, &drop);
        engine.opts = opts;
        engine.run(&drop, None);
        Ok(engine.into_system(self))
    }

    /// True iff some point satisfies every relation, up to `tol` on the
    /// variable-free rows left after eliminating everything.
    pub fn feasible(&self, tol: f64) -> bool {
        self.witness(tol).is_some()
    }

    /// Feasibility by Farkas' lemma: the system is infeasible iff some
    /// nonnegative combination of its rows (each loosened by `tol`) has zero
    /// coefficients and a negative constant. One exact simplex instead of a
    /// full elimination, for systems whose projections are too large for
    /// Fourier–Motzkin. Falls back to `feasible` if the tableau overflows.
    pub fn farkas_feasible(&self, tol: f64) -> bool {
        let n = self.variables.len();
        let mut rows: Vec<(Vec<S::Coef>, S::Const)> = Vec::new();
        for r in &self.rows {
            let neg = || (r.coeffs.iter().map(|c| -c.clone()).collect(), -r.constant.clone());
            match r.rel {
                Relation::Le => rows.push((r.coeffs.clone(), r.constant.clone())),
                Relation::Ge => rows.push(neg()),
                Relation::Eq => {
                    rows.push((r.coeffs.clone(), r.constant.clone()));
                    rows.push(neg());
                }
            }
        }
        for v in (0..n).filter(|&v| self.nonneg[v]) {
            let mut a = vec![S::Coef::zero(); n];
            a[v] = -S::Coef::one();
            rows.push((a, S::Const::zero()));
        }
        let cols: Vec<(&[S::Coef], &S::Const)> = rows.iter().map(|(a, b)| (a.as_slice(), b)).collect();
        match implied::cheapest_combination::<S>(&cols, &vec![S::Coef::zero(); n], &S::tol(tol)) {
            Combination::Contradiction(_) => false,
            Combination::Cheapest(_) => true,
            Combination::None => self.feasible(tol),
        }
    }

    /// A point satisfying the system within tolerance, reconstructed by
    /// back-substitution through the elimination stages.
    pub fn witness(&self, tol: f64) -> Option<Vec<S::Const>> {
        self.witness_with(tol, ElimOptions::default())
    }

    pub fn witness_with(&self, tol: f64, opts: ElimOptions) -> Option<Vec<S::Const>> {
        let all: Vec<usize> = (0..self.variables.len()).collect();
        let mut engine = Engine::from_system(self, &all);
        engine.opts = opts;
        let mut trail = Vec::new();
        if !engine.run(&all, Some((&mut trail, tol))) {
            return None;
        }
        if !engine.constant_rows_hold(tol) {
            return None;
        }
        Some(back_substitute::<S>(self.variables.len(), trail))
    }
}

impl<S: Scalars> Display for LinearSystem<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vars: {}", self.variables.join(" "))?;
        let nn: Vec<&str> = self
            .variables
            .iter()
            .zip(&self.nonneg)
            .filter(|(_, b)| **b)
            .map(|(v, _)| v.as_str())
            .collect();
        writeln!(f, "nonneg: {}", nn.join(" "))?;
        for r in &self.rows {
            let terms: Vec<String> = r
                .coeffs
                .iter()
                .zip(&self.variables)
                .filter(|(c, _)| !c.is_zero())
                .map(|(c, v)| format!("{c}*{v}"))
                .collect();
            let lhs = if terms.is_empty() { "0".to_string() } else { terms.join(" + ") };
            writeln!(f, "{lhs} {} {}", r.rel, r.constant)?;
        }
        Ok(())
    }
}

/// Slack allowed when a row is dropped as implied by the others.
const IMPLIED_SLACK: f64 = 1e-12;
/// A contradiction below this replaces the whole system.
const CONTRADICTION: f64 = 1e-9;

/// Pruning switches; all on by default and none changes the projection
/// beyond `IMPLIED_SLACK`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElimOptions {
    /// Drop duplicate rows and rows dominated by a parallel tighter row.
    pub prune: bool,
    /// Apply Chernikov's history rule.
    pub chernikov: bool,
    /// After each elimination, drop rows implied by a nonnegative
    /// combination of the others.
    pub implied: bool,
}

impl Default for ElimOptions {
    fn default() -> Self {
        Self { prune: true, chernikov: true, implied: true }
    }
}

impl ElimOptions {
    /// Plain Fourier–Motzkin without any pruning.
    pub const RAW: Self = Self { prune: false, chernikov: false, implied: false };
}

type Hist = Vec<u64>;

fn hist_union(a: &Hist, b: &Hist) -> Hist {
    a.iter().zip(b).map(|(x, y)| x | y).collect()
}

fn hist_subset(a: &Hist, b: &Hist) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

fn hist_count(h: &Hist) -> u32 {
    h.iter().map(|w| w.count_ones()).sum()
}

/// Internal row: `a x <= b`, or `a x = b` when `eq`.
#[derive(Clone, Debug)]
struct Row<S: Scalars> {
    a: Vec<S::Coef>,
    b: S::Const,
    eq: bool,
    hist: Hist,
}

/// What back-substitution needs to recover one eliminated variable.
enum Stage<S: Scalars> {
    /// `a x = b` with `a[var] != 0`.
    Substituted { var: usize, row: Row<S> },
    /// Rows mentioning `var` before its elimination.
    Bounded { var: usize, rows: Vec<Row<S>> },
}

struct Engine<S: Scalars> {
    n: usize,
    rows: Vec<Row<S>>,
    fme_steps: usize,
    opts: ElimOptions,
    /// Rows at the last history reset, indexed by history bit.
    origin: Vec<Vec<S::Coef>>,
    /// Variables removed by Fourier–Motzkin since the last reset.
    eliminated: Vec<usize>,
    removed: Vec<bool>,
    /// Row count after the last implied-row pass.
    settled: usize,
}

impl<S: Scalars> Engine<S> {
    fn from_system(sys: &LinearSystem<S>, eliminating: &[usize]) -> Self {
        let n = sys.variables.len();
        let mut rows = Vec::new();
        for r in &sys.rows {
            match r.rel {
                Relation::Le => rows.push((r.coeffs.clone(), r.constant.clone(), false)),
                Relation::Ge => rows.push((
                    r.coeffs.iter().map(|c| -c.clone()).collect(),
                    -r.constant.clone(),
                    false,
                )),
                Relation::Eq => rows.push((r.coeffs.clone(), r.constant.clone(), true)),
            }
        }
        for &v in eliminating {
            if sys.nonneg[v] {
                let mut a = vec![S::Coef::zero(); n];
                a[v] = -S::Coef::one();
                rows.push((a, S::Const::zero(), false));
            }
        }
        let mut e = Self {
            n,
            rows: Vec::new(),
            fme_steps: 0,
            opts: ElimOptions::default(),
            origin: Vec::new(),
            eliminated: Vec::new(),
            removed: vec![false; n],
            settled: 0,
        };
        e.rows = rows.into_iter().map(|(a, b, eq)| Row { a, b, eq, hist: Vec::new() }).collect();
        e.reset_history();
        e
    }

    fn reset_history(&mut self) {
        let words = self.rows.len().div_ceil(64).max(1);
        for (i, r) in self.rows.iter_mut().enumerate() {
            r.hist = vec![0; words];
            r.hist[i / 64] |= 1 << (i % 64);
        }
        self.origin = self.rows.iter().map(|r| r.a.clone()).collect();
        self.eliminated.clear();
        self.fme_steps = 0;
    }

    fn into_system(self, orig: &LinearSystem<S>) -> LinearSystem<S> {
        let keep: Vec<usize> = (0..self.n).filter(|&i| !self.removed[i]).collect();
        let mut out = LinearSystem {
            variables: keep.iter().map(|&i| orig.variables[i].clone()).collect(),
            rows: Vec::new(),
            nonneg: keep.iter().map(|&i| orig.nonneg[i]).collect(),
        };
        for r in self.rows {
            out.rows.push(Inequality {
                coeffs: keep.iter().map(|&i| r.a[i].clone()).collect(),
                rel: if r.eq { Relation::Eq } else { Relation::Le },
                constant: r.b,
            });
        }
        out
    }

    /// Eliminate `vars` (equalities first). With a trail, stops early on a
    /// violated variable-free row and records stages for back-substitution.
    fn run(&mut self, vars: &[usize], mut trail: Option<(&mut Vec<Stage<S>>, f64)>) -> bool {
        let mut pending: Vec<usize> = vars.to_vec();
        // equality substitution
        loop {
            let pick = pending.iter().position(|&v| self.rows.iter().any(|r| r.eq && !r.a[v].is_zero()));
            let Some(p) = pick else { break };
            let v = pending.remove(p);
            let stage = self.substitute(v);
            if let Some((t, _)) = trail.as_mut() {
                t.push(stage);
            }
        }
        self.reset_history();
        if self.opts.implied && !pending.is_empty() {
            self.drop_implied();
        }
        while !pending.is_empty() {
            if let Some((_, tol)) = trail.as_ref() {
                if !self.constant_rows_hold(*tol) {
                    return false;
                }
            }
            let (p, _) = pending
                .iter()
                .enumerate()
                .map(|(p, &v)| {
                    let pos = self.rows.iter().filter(|r| r.a[v].is_positive()).count();
                    let neg = self.rows.iter().filter(|r| r.a[v].is_negative()).count();
                    (p, pos * neg)
                })
                .min_by_key(|&(p, cost)| (cost, p))
                .expect("pending is nonempty");
            let v = pending.remove(p);
            let stage = self.fme(v);
            if let Some((t, _)) = trail.as_mut() {
                t.push(stage);
            }
        }
        true
    }

    fn step(&mut self, v: usize) {
        if self.rows.iter().any(|r| r.eq && !r.a[v].is_zero()) {
            self.substitute(v);
        } else {
            self.fme(v);
        }
    }

    fn substitute(&mut self, v: usize) -> Stage<S> {
        let k = self.rows.iter().position(|r| r.eq && !r.a[v].is_zero()).expect("equality present");
        let e = self.rows.remove(k);
        self.removed[v] = true;
        let mut next = Vec::with_capacity(self.rows.len());
        for r in std::mem::take(&mut self.rows) {
            if r.a[v].is_zero() {
                next.push(r);
                continue;
            }
            let f = r.a[v].clone() / e.a[v].clone();
            let a: Vec<S::Coef> = r.a.iter().zip(&e.a).map(|(x, y)| x.clone() - f.clone() * y.clone()).collect();
            let b = r.b.clone() - S::scale(&e.b, &f);
            next.push(Row { a, b, eq: r.eq, hist: hist_union(&r.hist, &e.hist) });
        }
        self.rows = self.prune(next);
        Stage::Substituted { var: v, row: e }
    }

    fn fme(&mut self, v: usize) -> Stage<S> {
        let (with, mut rest): (Vec<Row<S>>, Vec<Row<S>>) =
            std::mem::take(&mut self.rows).into_iter().partition(|r| !r.a[v].is_zero());
        self.fme_steps += 1;
        self.removed[v] = true;
        self.eliminated.push(v);
        let limit = self.fme_steps as u32 + 1;
        let pos: Vec<&Row<S>> = with.iter().filter(|r| r.a[v].is_positive()).collect();
        let neg: Vec<&Row<S>> = with.iter().filter(|r| r.a[v].is_negative()).collect();
        for p in &pos {
            for q in &neg {
                let hist = hist_union(&p.hist, &q.hist);
                if self.opts.chernikov && (hist_count(&hist) > limit || !self.minimal_support(&hist)) {
                    continue;
                }
                let cp = p.a[v].clone();
                let cq = -q.a[v].clone();
                let mut a: Vec<S::Coef> =
                    p.a.iter().zip(&q.a).map(|(x, y)| x.clone() * cq.clone() + y.clone() * cp.clone()).collect();
                a[v] = S::Coef::zero();
                let b = S::scale(&p.b, &cq) + S::scale(&q.b, &cp);
                rest.push(Row { a, b, eq: false, hist });
            }
        }
        self.rows = self.prune(rest);
        // a step that did not grow the system rarely creates implied rows
        if self.opts.implied && self.rows.len() > self.settled {
            self.drop_implied();
            self.settled = self.rows.len();
        }
        self.settled = self.settled.min(self.rows.len());
        Stage::Bounded { var: v, rows: with }
    }

    /// Drop rows implied by the others. Histories restart afterwards since
    /// the history rule assumes rows only ever leave on structural grounds.
    fn drop_implied(&mut self) {
        let eps = S::tol(IMPLIED_SLACK);
        let active = |q: &Row<S>| !q.eq && q.a.iter().any(|c| !c.is_zero());
        let mut keep = vec![true; self.rows.len()];
        // rows already shown irredundant; a candidate implied by these alone
        // is dropped without the full-size check
        let mut basis: Vec<usize> = Vec::new();
        let mut dropped = false;
        let mut contradiction = None;
        for i in 0..self.rows.len() {
            let r = &self.rows[i];
            if !active(r) {
                continue;
            }
            let test = |set: &mut dyn Iterator<Item = usize>| {
                let cols: Vec<(&[S::Coef], &S::Const)> =
                    set.map(|j| (self.rows[j].a.as_slice(), &self.rows[j].b)).collect();
                implied::cheapest_combination::<S>(&cols, &r.a, &eps)
            };
            let mut verdict = test(&mut basis.iter().copied());
            if matches!(verdict, Combination::None | Combination::Cheapest(_))
                && !matches!(&verdict, Combination::Cheapest(c) if *c <= r.b.clone() + eps.clone())
            {
                let n = self.rows.len();
                verdict = test(&mut (0..n).filter(|&j| j != i && keep[j] && active(&self.rows[j])));
            }
            match verdict {
                Combination::Cheapest(c) if c <= r.b.clone() + eps.clone() => {
                    keep[i] = false;
                    dropped = true;
                }
                Combination::Contradiction(c) => {
                    contradiction = Some(c);
                    break;
                }
                _ => basis.push(i),
            }
        }
        if let Some(c) = contradiction {
            // the variable-free consequence settles feasibility
            if c < -S::tol(CONTRADICTION) {
                self.rows.clear();
                keep.clear();
            }
            self.rows.push(Row { a: vec![S::Coef::zero(); self.n], b: c, eq: false, hist: Vec::new() });
            keep.push(true);
            dropped = true;
        }
        if dropped {
            let mut k = keep.into_iter();
            self.rows.retain(|_| k.next().unwrap_or(true));
            self.reset_history();
        }
    }

    /// A combination is irredundant only if its source rows, restricted to
    /// the eliminated columns, have rank exactly `|hist| - 1`.
    fn minimal_support(&self, hist: &Hist) -> bool {
        let src: Vec<usize> = (0..self.origin.len()).filter(|&i| hist[i / 64] >> (i % 64) & 1 == 1).collect();
        let cols: Vec<usize> =
            self.eliminated.iter().copied().filter(|&c| src.iter().any(|&i| !self.origin[i][c].is_zero())).collect();
        if src.len() > cols.len() + 1 {
            return false;
        }
        let mut m: Vec<Vec<S::Coef>> =
            src.iter().map(|&i| cols.iter().map(|&c| self.origin[i][c].clone()).collect()).collect();
        rank(&mut m) + 1 == src.len()
    }

    /// Normalize rows and drop dominated parallel rows. Under Chernikov's rule
    /// a row only dominates another when its history is a subset, otherwise
    /// later combinations could be discarded on the wrong grounds.
    fn prune(&self, rows: Vec<Row<S>>) -> Vec<Row<S>> {
        if !self.opts.prune {
            return rows;
        }
        let mut out: Vec<Option<Row<S>>> = Vec::with_capacity(rows.len());
        let mut groups: HashMap<(Vec<S::Coef>, bool), Vec<usize>> = HashMap::new();
        let mut free_le: Option<usize> = None;
        for mut r in rows {
            if let Some(lead) = r.a.iter().find(|c| !c.is_zero()).cloned() {
                let s = lead.abs();
                if !s.is_one() {
                    r.a.iter_mut().for_each(|c| *c = c.clone() / s.clone());
                    r.b = S::divide(&r.b, &s);
                }
            } else if !r.eq {
                // variable-free rows never combine again; keep the tightest
                match free_le {
                    Some(i) if out[i].as_ref().is_some_and(|q| q.b <= r.b) => {}
                    Some(i) => out[i] = Some(r),
                    None => {
                        free_le = Some(out.len());
                        out.push(Some(r));
                    }
                }
                continue;
            }
            let members = groups.entry((r.a.clone(), r.eq)).or_default();
            let dominates = |q: &Row<S>, r: &Row<S>| {
                let tighter = if r.eq { q.b == r.b } else { q.b <= r.b };
                tighter && (!self.opts.chernikov || hist_subset(&q.hist, &r.hist))
            };
            if members.iter().any(|&i| out[i].as_ref().is_some_and(|q| dominates(q, &r))) {
                continue;
            }
            members.retain(|&i| {
                let gone = out[i].as_ref().is_some_and(|q| dominates(&r, q));
                if gone {
                    out[i] = None;
                }
                !gone
            });
            members.push(out.len());
            out.push(Some(r));
        }
        out.into_iter().flatten().collect()
    }

    fn constant_rows_hold(&self, tol: f64) -> bool {
        let t = S::tol(tol);
        self.rows.iter().filter(|r| r.a.iter().all(|c| c.is_zero())).all(|r| {
            if r.eq {
                r.b.abs() <= t
            } else {
                r.b >= -t.clone()
            }
        })
    }
}

fn rank<T: Clone + Num + Signed>(m: &mut [Vec<T>]) -> usize {
    let cols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else { continue };
        m.swap(r, p);
        for i in r + 1..m.len() {
            if m[i][c].is_zero() {
                continue;
            }
            let f = m[i][c].clone() / m[r][c].clone();
            for j in c..cols {
                let d = f.clone() * m[r][j].clone();
                m[i][j] = m[i][j].clone() - d;
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

fn back_substitute<S: Scalars>(n: usize, trail: Vec<Stage<S>>) -> Vec<S::Const> {
    let mut x = vec![S::Const::zero(); n];
    let two = S::Const::one() + S::Const::one();
    for stage in trail.into_iter().rev() {
        match stage {
            Stage::Substituted { var, row } => {
                let mut rhs = row.b.clone();
                for (i, a) in row.a.iter().enumerate() {
                    if i != var && !a.is_zero() {
                        rhs = rhs - S::scale(&x[i], a);
                    }
                }
                x[var] = S::divide(&rhs, &row.a[var]);
            }
            Stage::Bounded { var, rows } => {
                let mut lo: Option<S::Const> = None;
                let mut hi: Option<S::Const> = None;
                for r in rows {
                    let mut rhs = r.b.clone();
                    for (i, a) in r.a.iter().enumerate() {
                        if i != var && !a.is_zero() {
                            rhs = rhs - S::scale(&x[i], a);
                        }
                    }
                    let bound = S::divide(&rhs, &r.a[var]);
                    if r.a[var].is_positive() {
                        if hi.as_ref().is_none_or(|h| bound < *h) {
                            hi = Some(bound);
                        }
                    } else if lo.as_ref().is_none_or(|l| bound > *l) {
                        lo = Some(bound);
                    }
                }
                x[var] = match (lo, hi) {
                    (Some(l), Some(h)) => {
                        if l >= h {
                            (l + h) / two.clone()
                        } else {
                            l
                        }
                    }
                    (Some(l), None) => l,
                    (None, Some(h)) => {
                        if h >= S::Const::zero() {
                            S::Const::zero()
                        } else {
                            h
                        }
                    }
                    (None, None) => S::Const::zero(),
                };
            }
        }
    }
    x
}
