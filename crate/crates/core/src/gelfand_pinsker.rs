//! Binary additive channel with state known at the transmitter.
//!
//! `Y = X xor S xor N` with `N ~ Bernoulli(delta)`, `P(S = 1) = eps` and the
//! Hamming cost `P(X = 1) <= tau`. [`alpha_tr`] is the capacity with state at
//! both ends (closed form); [`alpha_t`] searches the Gelfand-Pinsker
//! expression `I(U;Y) - I(U;S)` with `|U| = 4`; [`prop1_refute`] checks, one
//! deterministic encoder map at a time, that no pmf meets all the no-rate-loss
//! conditions.

use std::fmt;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::open_half;
use crate::entropy::{binary_convolution, binary_entropy, Axis};
use crate::error::{domain, precondition, schema, Result};
use crate::polytope::{big, exact, Relation};
use crate::rng::RngKey;
use crate::{ExactSystem, JointPmf};

/// Auxiliary alphabet size from the cardinality bound `min{|X||S|, |X|+|S|+|Y|-2}`.
pub const AUX_SIZE: usize = 4;

/// Problem parameters `(tau, delta, eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GPInstance {
    pub tau: f64,
    pub delta: f64,
    pub eps: f64,
}

impl GPInstance {
    pub fn new(tau: f64, delta: f64, eps: f64) -> Result<Self> {
        let inst = Self { tau, delta, eps };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        open_half("tau", self.tau)?;
        open_half("delta", self.delta)?;
        if !(0.0..=1.0).contains(&self.eps) {
            return domain(format!("eps = {} must lie in [0, 1]", self.eps));
        }
        Ok(())
    }

    /// `P(Y != S)` when `X ~ Bernoulli(tau)` is independent of `S`.
    pub fn theta(&self) -> f64 {
        self.delta * (1.0 - self.tau) + (1.0 - self.delta) * self.tau
    }

    fn p_s(&self) -> [f64; 2] {
        [1.0 - self.eps, self.eps]
    }

    /// `W(y | x, s)`.
    fn w(&self, y: usize, x: usize, s: usize) -> f64 {
        if y == x ^ s {
            1.0 - self.delta
        } else {
            self.delta
        }
    }
}

/// Capacity with state at both ends: `h_b(tau * delta) - h_b(delta)`.
pub fn alpha_tr(inst: &GPInstance) -> Result<f64> {
    inst.validate()?;
    Ok(binary_entropy(binary_convolution(inst.tau, inst.delta)?)? - binary_entropy(inst.delta)?)
}

/// The value at the feasible point `U = X`, `X ~ Bernoulli(tau)` independent
/// of `S`: `h_b(tau * (eps * delta)) - h_b(eps * delta)`.
pub fn independent_input_bound(inst: &GPInstance) -> Result<f64> {
    inst.validate()?;
    let n = binary_convolution(inst.eps, inst.delta)?;
    Ok(binary_entropy(binary_convolution(inst.tau, n)?)? - binary_entropy(n)?)
}

/// A pmf over `(U, S, X, Y)` in the test-channel set of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GPDistribution {
    pub inst: GPInstance,
    pub joint: JointPmf,
}

const MEMBER_TOL: f64 = 1e-9;

impl GPDistribution {
    /// Validate `joint` against the three test-channel conditions.
    pub fn new(inst: GPInstance, joint: JointPmf) -> Result<Self> {
        let d = Self { inst, joint };
        d.validate()?;
        Ok(d)
    }

    /// Build from `P(U = u, X = x | S = s)`, indexed `q[s][2 * u + x]`.
    pub fn from_conditional(inst: GPInstance, q: &[[f64; 2 * AUX_SIZE]; 2]) -> Result<Self> {
        let ps = inst.p_s();
        let joint = JointPmf::from_fn(axes(), |i| {
            let (u, s, x, y) = (i[0], i[1], i[2], i[3]);
            ps[s] * q[s][2 * u + x] * inst.w(y, x, s)
        })?;
        Self::new(inst, joint)
    }

    pub fn validate(&self) -> Result<()> {
        self.inst.validate()?;
        let j = &self.joint;
        let names: Vec<&str> = j.axes().iter().map(|a| a.name.as_str()).collect();
        if names != ["U", "S", "X", "Y"] {
            return schema(format!("expected axes U, S, X, Y; found {names:?}"));
        }
        let sizes = j.sizes();
        if sizes[0] > AUX_SIZE || sizes[1..] != [2, 2, 2] {
            return schema(format!("expected |U| <= {AUX_SIZE} and binary S, X, Y; found {sizes:?}"));
        }
        let ps1 = j.marginal(&["S"])?.probs()[1];
        if (ps1 - self.inst.eps).abs() > MEMBER_TOL {
            return schema(format!("P(S = 1) = {ps1}, expected {}", self.inst.eps));
        }
        let px1 = j.marginal(&["X"])?.probs()[1];
        if px1 > self.inst.tau + MEMBER_TOL {
            return schema(format!("P(X = 1) = {px1} exceeds tau = {}", self.inst.tau));
        }
        // the channel law must hold given every (u, x, s)
        let mut bad = None;
        let (su, sx) = (sizes[0], 2);
        let mut cells = vec![[0.0; 2]; su * 2 * sx];
        j.for_each(|i, p| cells[(i[0] * 2 + i[1]) * sx + i[2]][i[3]] += p);
        for (k, c) in cells.iter().enumerate() {
            let (s, x) = ((k / sx) % 2, k % sx);
            let want = self.inst.w(1, x, s) * (c[0] + c[1]);
            if (c[1] - want).abs() > MEMBER_TOL {
                bad = Some(k);
            }
        }
        if let Some(k) = bad {
            return schema(format!("P(Y | U, S, X) differs from the channel at cell {k}"));
        }
        Ok(())
    }

    /// `I(U;Y) - I(U;S)`.
    pub fn objective(&self) -> Result<f64> {
        Ok(self.joint.mutual_info(&["U"], &["Y"])? - self.joint.mutual_info(&["U"], &["S"])?)
    }

    pub fn cost(&self) -> Result<f64> {
        Ok(self.joint.marginal(&["X"])?.probs()[1])
    }
}

fn axes() -> Vec<Axis> {
    vec![Axis::new("U", AUX_SIZE), Axis::new("S", 2), Axis::new("X", 2), Axis::new("Y", 2)]
}

/// Optimizer settings. Also the JSON config file schema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GPSearch {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for GPSearch {
    fn default() -> Self {
        Self { restarts: 64, max_iters: 2000, tol: 1e-10, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct AlphaT {
    pub value: f64,
    pub witness: GPDistribution,
    /// The run that produced `value` stopped on the improvement tolerance
    /// rather than the iteration cap.
    pub converged: bool,
}

/// Best `I(U;Y) - I(U;S)` found over the test channels with `|U| = 4`.
///
/// A lower bound on `alpha_T` with an achieving pmf. At `eps` in `{0, 1}` the
/// state is deterministic and the closed form is returned.
pub fn alpha_t(inst: &GPInstance, search: &GPSearch) -> Result<AlphaT> {
    inst.validate()?;
    if search.restarts == 0 || search.max_iters == 0 || !(search.tol > 0.0) {
        return domain("search needs restarts >= 1, max_iters >= 1 and tol > 0");
    }
    let base = Point::independent(inst);
    if inst.eps == 0.0 || inst.eps == 1.0 {
        return Ok(AlphaT { value: alpha_tr(inst)?, witness: base.to_distribution(inst)?, converged: true });
    }
    let ctx = Ctx::new(inst);
    let free = [true; 16];
    let mut runs: Vec<(f64, Point, bool)> = (0..search.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngKey::new(search.seed, 1, r as u64).rng();
            let start = if r == 0 { base } else { Point::random(&ctx, &free, &mut rng) };
            ctx.ascend(start, &free, search)
        })
        .collect();
    let maps: Vec<(f64, Point, bool)> = (0..256u32)
        .into_par_iter()
        .filter_map(|f| {
            let mask = map_mask(f);
            if ctx.min_cost(&mask) > inst.tau {
                return None;
            }
            let mut rng = RngKey::new(search.seed, 2, f as u64).rng();
            Some(ctx.ascend(Point::random(&ctx, &mask, &mut rng), &mask, search))
        })
        .collect();
    runs.extend(maps);
    // first strict maximum: independent of thread scheduling
    let (value, best, converged) = runs
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one run");
    let witness = best.to_distribution(inst)?;
    Ok(AlphaT { value, witness, converged })
}

/// `alpha_TR - alpha_T` with the optimizer's convergence flag.
pub fn rate_loss_gap(inst: &GPInstance, search: &GPSearch) -> Result<(f64, bool)> {
    let t = alpha_t(inst, search)?;
    Ok((alpha_tr(inst)? - t.value, t.converged))
}

/// Allowed cells for the encoder map `x = f(u, s)`; bit `2u + s` of `f`.
fn map_mask(f: u32) -> [bool; 16] {
    let mut m = [false; 16];
    for s in 0..2 {
        for u in 0..AUX_SIZE {
            let x = (f >> (2 * u + s) & 1) as usize;
            m[cell(s, u, x)] = true;
        }
    }
    m
}

fn cell(s: usize, u: usize, x: usize) -> usize {
    s * 2 * AUX_SIZE + 2 * u + x
}

/// `P(U = u, X = x | S = s)` stored at `cell(s, u, x)`.
#[derive(Clone, Copy, Debug)]
struct Point([f64; 16]);

impl Point {
    fn independent(inst: &GPInstance) -> Self {
        let mut q = [0.0; 16];
        for s in 0..2 {
            q[cell(s, 0, 0)] = 1.0 - inst.tau;
            q[cell(s, 1, 1)] = inst.tau;
        }
        Point(q)
    }

    /// A random point on the allowed cells, pulled toward zero cost if needed.
    fn random(ctx: &Ctx, mask: &[bool; 16], rng: &mut impl Rng) -> Self {
        let mut q = [0.0; 16];
        for s in 0..2 {
            let row = s * 8..s * 8 + 8;
            let mut total = 0.0;
            for k in row.clone().filter(|&k| mask[k]) {
                // exponential weights give a uniform draw on the simplex
                q[k] = -rng.gen::<f64>().max(1e-300).ln();
                total += q[k];
            }
            row.for_each(|k| q[k] /= total);
        }
        let mut p = Point(q);
        let cost = ctx.cost(&p);
        if cost > ctx.tau {
            let cheap = ctx.cheapest(mask);
            let floor = ctx.cost(&cheap);
            // target a point strictly inside the budget
            let lam = (cost - 0.999 * ctx.tau - 0.001 * floor) / (cost - floor);
            for k in 0..16 {
                p.0[k] = (1.0 - lam) * p.0[k] + lam * cheap.0[k];
            }
        }
        p
    }

    fn to_distribution(self, inst: &GPInstance) -> Result<GPDistribution> {
        let mut q = [[0.0; 8]; 2];
        for s in 0..2 {
            q[s].copy_from_slice(&self.0[s * 8..s * 8 + 8]);
        }
        GPDistribution::from_conditional(*inst, &q)
    }
}

/// Flat evaluation of the objective and its gradient.
struct Ctx {
    tau: f64,
    ps: [f64; 2],
    w: [[[f64; 2]; 2]; 2],
}

fn xlog(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

fn log_or_floor(p: f64) -> f64 {
    p.max(1e-300).log2()
}

impl Ctx {
    fn new(inst: &GPInstance) -> Self {
        let mut w = [[[0.0; 2]; 2]; 2];
        for (s, ws) in w.iter_mut().enumerate() {
            for (x, wx) in ws.iter_mut().enumerate() {
                for (y, v) in wx.iter_mut().enumerate() {
                    *v = inst.w(y, x, s);
                }
            }
        }
        Self { tau: inst.tau, ps: inst.p_s(), w }
    }

    fn cost(&self, p: &Point) -> f64 {
        (0..2).map(|s| self.ps[s] * (0..AUX_SIZE).map(|u| p.0[cell(s, u, 1)]).sum::<f64>()).sum()
    }

    /// Zero-cost mass placement on the allowed cells, falling back to `x = 1`.
    fn cheapest(&self, mask: &[bool; 16]) -> Point {
        let mut q = [0.0; 16];
        for s in 0..2 {
            let k = (0..AUX_SIZE)
                .map(|u| cell(s, u, 0))
                .find(|&k| mask[k])
                .or_else(|| (0..16).find(|&k| mask[k] && k / 8 == s))
                .expect("every state row has an allowed cell");
            q[k] = 1.0;
        }
        Point(q)
    }

    fn min_cost(&self, mask: &[bool; 16]) -> f64 {
        self.cost(&self.cheapest(mask))
    }

    fn marginals(&self, p: &Point) -> ([[f64; 2]; AUX_SIZE], [[f64; 2]; AUX_SIZE]) {
        let mut uy = [[0.0; 2]; AUX_SIZE];
        let mut us = [[0.0; 2]; AUX_SIZE];
        for s in 0..2 {
            for u in 0..AUX_SIZE {
                for x in 0..2 {
                    let m = self.ps[s] * p.0[cell(s, u, x)];
                    us[u][s] += m;
                    for y in 0..2 {
                        uy[u][y] += m * self.w[s][x][y];
                    }
                }
            }
        }
        (uy, us)
    }

    /// `H(Y) - H(U,Y) + H(U,S) - H(S)`.
    fn value(&self, p: &Point) -> f64 {
        let (uy, us) = self.marginals(p);
        let mut y = [0.0; 2];
        let mut v = 0.0;
        for u in 0..AUX_SIZE {
            for k in 0..2 {
                y[k] += uy[u][k];
                v += xlog(uy[u][k]) - xlog(us[u][k]);
            }
        }
        v + xlog(self.ps[0]) + xlog(self.ps[1]) - xlog(y[0]) - xlog(y[1])
    }

    /// Partial derivatives in `P(u, x | s)` up to a per-state constant.
    fn gradient(&self, p: &Point) -> [f64; 16] {
        let (uy, us) = self.marginals(p);
        let y = [uy.iter().map(|r| r[0]).sum::<f64>(), uy.iter().map(|r| r[1]).sum::<f64>()];
        let mut g = [0.0; 16];
        for s in 0..2 {
            for u in 0..AUX_SIZE {
                for x in 0..2 {
                    let mut d = -log_or_floor(us[u][s]);
                    for k in 0..2 {
                        d += self.w[s][x][k] * (log_or_floor(uy[u][k]) - log_or_floor(y[k]));
                    }
                    g[cell(s, u, x)] = self.ps[s] * d;
                }
            }
        }
        g
    }

    /// Pairwise coordinate ascent: move mass between two allowed cells of the
    /// same state row along the steepest direction, step-halving until the
    /// objective improves.
    fn ascend(&self, mut p: Point, mask: &[bool; 16], search: &GPSearch) -> (f64, Point, bool) {
        let mut f = self.value(&p);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(112);
        for _ in 0..search.max_iters {
            let g = self.gradient(&p);
            pairs.clear();
            for a in (0..16).filter(|&a| mask[a] && p.0[a] > 0.0) {
                for b in (0..16).filter(|&b| mask[b] && b != a && b / 8 == a / 8) {
                    let slope = g[b] - g[a];
                    if slope > 0.0 {
                        pairs.push((slope, a, b));
                    }
                }
            }
            pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
            let start = f;
            for &(_, a, b) in &pairs {
                let s = a / 8;
                let mut t = p.0[a];
                // moving mass onto x = 1 spends budget
                if b % 2 == 1 && a % 2 == 0 {
                    t = t.min((self.tau - self.cost(&p)).max(0.0) / self.ps[s]);
                }
                for _ in 0..40 {
                    if t < 1e-15 {
                        break;
                    }
                    let mut q = p;
                    q.0[a] -= t;
                    q.0[b] += t;
                    q.0[a] = q.0[a].max(0.0);
                    let v = self.value(&q);
                    if v > f {
                        p = q;
                        f = v;
                        break;
                    }
                    t *= 0.5;
                }
            }
            if f - start < search.tol {
                return (f, p, true);
            }
        }
        (f, p, false)
    }
}

/// The four no-rate-loss conditions evaluated on a pmf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NoRateLossFlags {
    /// `S` independent of `X` and `P(X = 1) = tau`.
    pub tr_optimal_marginal: bool,
    /// `S - Y - U`.
    pub s_y_u_markov: bool,
    /// `X - (U, S) - Y`.
    pub x_us_y_markov: bool,
    /// `H(X | U, S) = 0`.
    pub x_function_of_us: bool,
}

impl NoRateLossFlags {
    pub fn all(&self) -> bool {
        self.tr_optimal_marginal && self.s_y_u_markov && self.x_us_y_markov && self.x_function_of_us
    }
}

pub fn no_rate_loss_report(p: &GPDistribution, tol: f64) -> Result<NoRateLossFlags> {
    p.validate()?;
    let j = &p.joint;
    let px1 = p.cost()?;
    Ok(NoRateLossFlags {
        tr_optimal_marginal: j.mutual_info(&["S"], &["X"])? <= tol && (px1 - p.inst.tau).abs() <= tol,
        s_y_u_markov: j.cond_mutual_info(&["S"], &["U"], &["Y"])? <= tol,
        x_us_y_markov: j.cond_mutual_info(&["X"], &["Y"], &["U", "S"])? <= tol,
        x_function_of_us: j.cond_entropy(&["X"], &["U", "S"])? <= tol,
    })
}

/// Which contradiction rules out an encoder map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// The map forces `psi1 = psi2`.
    PsiEqual,
    /// The map forces `psi1 + psi2 <= 1`.
    PsiSumAtMostOne,
    /// The output marginals are reachable but the channel law given `(U, S)`
    /// is not.
    Markov,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::PsiEqual => "psi1 != psi2",
            Violation::PsiSumAtMostOne => "psi1 + psi2 > 1",
            Violation::Markov => "Markov-chain contradiction",
        })
    }
}

/// One encoder map `z`; `z_i = 1` means `X = 0` at `(U, S) = (i mod 4, i / 4)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CaseRecord {
    pub z: u8,
    pub case: u8,
    pub violation: Violation,
}

impl CaseRecord {
    /// `z0 .. z7` as a bit string.
    pub fn z_bits(&self) -> String {
        (0..8).map(|i| if self.z >> i & 1 == 1 { '1' } else { '0' }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop1Certificate {
    pub inst: GPInstance,
    pub cases: Vec<CaseRecord>,
}

impl Prop1Certificate {
    /// CSV with columns `z_bits, case_label, violated_identity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("z_bits,case_label,violated_identity\n");
        for c in &self.cases {
            out.push_str(&format!("{},Case {},{}\n", c.z_bits(), c.case, c.violation));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub enum Prop1Outcome {
    Refuted(Prop1Certificate),
    /// A map admitting a pmf with every condition; carries the pmf.
    Counterexample { z: u8, pmf: GPDistribution },
}

/// Case number of the hand proof for `m` ones among `z0..z3` and `l` among
/// `z4..z7`. Mirrored counts share a case; `m = l = 1` is labeled 6 as printed.
pub fn case_label(z: u8) -> u8 {
    let m = (z & 0x0f).count_ones();
    let l = (z >> 4).count_ones();
    if m == 0 || l == 0 {
        return 1;
    }
    if m == 4 || l == 4 {
        return 2;
    }
    match (m.max(l), m.min(l)) {
        (3, 3) => 3,
        (3, 2) => 4,
        (3, 1) => 5,
        (2, 2) => 6,
        (2, 1) => 7,
        _ => 6,
    }
}

/// Check all 256 encoder maps; needs `eps` in `(0, 1)`.
pub fn prop1_refute(inst: &GPInstance, tol: f64) -> Result<Prop1Outcome> {
    inst.validate()?;
    if !(inst.eps > 0.0 && inst.eps < 1.0) {
        return precondition(format!("prop1_refute needs eps in (0, 1), got {}", inst.eps));
    }
    prop1_relaxed(inst, tol)
}

/// [`prop1_refute`] without the guard on `eps`.
pub fn prop1_relaxed(inst: &GPInstance, tol: f64) -> Result<Prop1Outcome> {
    inst.validate()?;
    let results: Vec<Result<std::result::Result<CaseRecord, (u8, GPDistribution)>>> =
        (0..=255u8).into_par_iter().map(|z| check_map(inst, z, tol)).collect();
    let mut cases = Vec::with_capacity(256);
    for r in results {
        match r? {
            Ok(c) => cases.push(c),
            Err((z, pmf)) => return Ok(Prop1Outcome::Counterexample { z, pmf }),
        }
    }
    Ok(Prop1Outcome::Refuted(Prop1Certificate { inst: *inst, cases }))
}

const BETA: [&str; 4] = ["b0", "b1", "b2", "b3"];
const GAMMA: [&str; 4] = ["g0", "g1", "g2", "g3"];

/// Exact parameters: `tau, delta, eps` as given, `theta` derived exactly.
struct ExactParams {
    tau: BigRational,
    delta: BigRational,
    eps: BigRational,
    theta: BigRational,
}

impl ExactParams {
    fn new(inst: &GPInstance) -> Self {
        let (tau, delta, eps) = (exact(inst.tau), exact(inst.delta), exact(inst.eps));
        let one = big(1);
        let theta = &delta * (&one - &tau) + (&one - &delta) * &tau;
        Self { tau, delta, eps, theta }
    }

    /// `P(S = s, Y = y)`.
    fn p_sy(&self, s: usize, y: usize) -> BigRational {
        let one = big(1);
        let ps = if s == 0 { &one - &self.eps } else { self.eps.clone() };
        let py = if (s ^ y) == 0 { &one - &self.theta } else { self.theta.clone() };
        ps * py
    }

    fn w(&self, y: usize, x: usize, s: usize) -> BigRational {
        if y == x ^ s {
            big(1) - &self.delta
        } else {
            self.delta.clone()
        }
    }

    /// `P(S = s, X = x, Y = y)` under the product input law.
    fn p_sxy(&self, s: usize, x: usize, y: usize) -> BigRational {
        let one = big(1);
        let ps = if s == 0 { &one - &self.eps } else { self.eps.clone() };
        let px = if x == 0 { &one - &self.tau } else { self.tau.clone() };
        ps * px * self.w(y, x, s)
    }
}

fn x_of(z: u8, u: usize, s: usize) -> usize {
    1 - (z >> (4 * s + u) & 1) as usize
}

fn simplex_rows(sys: &mut ExactSystem) -> Result<()> {
    sys.push_sum(&BETA, Relation::Eq, big(1))?;
    sys.push_sum(&GAMMA, Relation::Eq, big(1))
}

/// The marginal on `(S, X, Y)` must be the product-input law.
fn table_rows(sys: &mut ExactSystem, z: u8, e: &ExactParams) -> Result<()> {
    for s in 0..2 {
        for y in 0..2 {
            let names = if y == 0 { &BETA } else { &GAMMA };
            for x in 0..2 {
                let terms: Vec<_> =
                    (0..4).filter(|&u| x_of(z, u, s) == x).map(|u| (e.p_sy(s, y), names[u])).collect();
                sys.push(&terms, Relation::Eq, e.p_sxy(s, x, y))?;
            }
        }
    }
    Ok(())
}

/// `P(Y | U, S, X)` equals the channel: `P(u,s,0) W(1|x,s) = P(u,s,1) W(0|x,s)`.
fn markov_rows(sys: &mut ExactSystem, z: u8, e: &ExactParams) -> Result<()> {
    for s in 0..2 {
        for u in 0..4 {
            let x = x_of(z, u, s);
            let terms = [(e.p_sy(s, 0) * e.w(1, x, s), BETA[u]), (-(e.p_sy(s, 1) * e.w(0, x, s)), GAMMA[u])];
            sys.push(&terms, Relation::Eq, big(0))?;
        }
    }
    Ok(())
}

fn new_system(extra: &[&str]) -> ExactSystem {
    let mut sys = ExactSystem::new(BETA.iter().chain(&GAMMA).copied());
    sys.set_all_nonneg();
    for v in extra {
        sys.add_variable(*v, false).expect("fresh name");
    }
    sys
}

/// `psi1 = sum b_i z_i = sum g_i z_{i+4}`, `psi2 = sum g_i z_i = sum b_i z_{i+4}`.
fn structural(z: u8) -> Result<ExactSystem> {
    let mut sys = new_system(&["psi1", "psi2"]);
    simplex_rows(&mut sys)?;
    let on = |i: usize| z >> i & 1 == 1;
    for (psi, first, second) in [("psi1", &BETA, &GAMMA), ("psi2", &GAMMA, &BETA)] {
        for (names, off) in [(first, 0), (second, 4)] {
            let mut terms: Vec<_> = (0..4).filter(|&u| on(u + off)).map(|u| (big(1), names[u])).collect();
            terms.push((big(-1), psi));
            sys.push(&terms, Relation::Eq, big(0))?;
        }
    }
    Ok(sys)
}

fn check_map(
    inst: &GPInstance,
    z: u8,
    tol: f64,
) -> Result<std::result::Result<CaseRecord, (u8, GPDistribution)>> {
    let e = ExactParams::new(inst);
    let mut sys = new_system(&[]);
    simplex_rows(&mut sys)?;
    table_rows(&mut sys, z, &e)?;
    let record = |violation| Ok(Ok(CaseRecord { z, case: case_label(z), violation }));
    if !sys.feasible(tol) {
        // which psi identity the map cannot meet
        let st = structural(z)?;
        let mut eq = st.clone();
        eq.push(&[(big(1), "psi1"), (big(-1), "psi2")], Relation::Ge, exact(tol))?;
        let mut ne = st.clone();
        ne.push(&[(big(1), "psi2"), (big(-1), "psi1")], Relation::Ge, exact(tol))?;
        if !eq.feasible(0.0) && !ne.feasible(0.0) {
            return record(Violation::PsiEqual);
        }
        let mut sum = st;
        sum.push_sum(&["psi1", "psi2"], Relation::Ge, big(1) + exact(tol))?;
        if !sum.feasible(0.0) {
            return record(Violation::PsiSumAtMostOne);
        }
        // only reachable when eps is 0 or 1: the s-rows alone decide
        return record(Violation::Markov);
    }
    markov_rows(&mut sys, z, &e)?;
    match sys.witness(tol) {
        None => record(Violation::Markov),
        Some(v) => Ok(Err((z, counterexample(inst, z, &v)?))),
    }
}

/// Assemble `p(u, s, x, y) = P(S=s, Y=y) [beta_u | gamma_u] 1{x = f(u, s)}`.
fn counterexample(inst: &GPInstance, z: u8, v: &[BigRational]) -> Result<GPDistribution> {
    let e = ExactParams::new(inst);
    let val: Vec<f64> = v.iter().map(|r| r.to_f64().unwrap_or(f64::NAN).max(0.0)).collect();
    let weights: Vec<f64> = {
        let mut w = Vec::with_capacity(32);
        crate::entropy::for_each_index(&[4, 2, 2, 2], |i| {
            let (u, s, x, y) = (i[0], i[1], i[2], i[3]);
            let coef = e.p_sy(s, y).to_f64().unwrap_or(f64::NAN);
            let b = if y == 0 { val[u] } else { val[4 + u] };
            w.push(if x == x_of(z, u, s) { coef * b } else { 0.0 });
        });
        w
    };
    let joint = JointPmf::from_weights(axes(), weights)?;
    GPDistribution::new(*inst, joint)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(t: f64, d: f64, e: f64) -> GPInstance {
        GPInstance::new(t, d, e).unwrap()
    }

    #[test]
    fn alpha_tr_values() {
        let v = alpha_tr(&inst(0.125, 0.01, 0.3)).unwrap();
        let want = binary_entropy(0.1325).unwrap() - binary_entropy(0.01).unwrap();
        assert!((v - want).abs() < 1e-12);
        assert!((v - 0.4834).abs() < 1e-4);
        assert!(alpha_tr(&inst(1e-9, 0.2, 0.5)).unwrap() < 1e-6);
        let noiseless = alpha_tr(&inst(0.3, 1e-12, 0.5)).unwrap();
        assert!((noiseless - binary_entropy(0.3).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GPInstance::new(0.5, 0.1, 0.2).is_err());
        assert!(GPInstance::new(0.1, 0.0, 0.2).is_err());
        assert!(GPInstance::new(0.1, 0.1, 1.2).is_err());
    }

    #[test]
    fn closed_form_at_deterministic_state() {
        let search = GPSearch::default();
        for e in [0.0, 1.0] {
            let i = inst(0.125, 0.01, e);
            let t = alpha_t(&i, &search).unwrap();
            assert_eq!(t.value, alpha_tr(&i).unwrap());
            // the witness achieves it
            assert!((t.witness.objective().unwrap() - t.value).abs() < 1e-9);
            assert!(rate_loss_gap(&i, &search).unwrap().0.abs() < 1e-9);
        }
    }

    #[test]
    fn optimizer_meets_the_independent_input_bound() {
        let search = GPSearch { restarts: 8, ..GPSearch::default() };
        let i = inst(0.3, 0.1, 0.2);
        let t = alpha_t(&i, &search).unwrap();
        assert!(t.value >= independent_input_bound(&i).unwrap() - 1e-9);
        assert!(t.value <= alpha_tr(&i).unwrap() + 1e-9);
        assert!((t.witness.objective().unwrap() - t.value).abs() < 1e-9);
        assert!(t.witness.cost().unwrap() <= 0.3 + 1e-9);
    }

    #[test]
    fn gap_is_positive_for_uniform_state() {
        let i = inst(0.125, 0.01, 0.5);
        assert!(independent_input_bound(&i).unwrap().abs() < 1e-12);
        let (gap, _) = rate_loss_gap(&i, &GPSearch { restarts: 8, ..GPSearch::default() }).unwrap();
        assert!(gap > 1e-3, "gap {gap}");
    }

    #[test]
    fn optimizer_is_deterministic() {
        let i = inst(0.2, 0.1, 0.3);
        let s = GPSearch { restarts: 4, ..GPSearch::default() };
        assert_eq!(alpha_t(&i, &s).unwrap().value, alpha_t(&i, &s).unwrap().value);
    }

    #[test]
    fn report_flags() {
        let i = inst(0.125, 0.01, 0.0);
        let d = Point::independent(&i).to_distribution(&i).unwrap();
        assert!(no_rate_loss_report(&d, 1e-9).unwrap().all());
        // X uniform given (U, S), so H(X | U, S) = 1
        let i = inst(0.45, 0.1, 0.5);
        let mut q = [[0.0; 8]; 2];
        for row in &mut q {
            row[0] = 0.5;
            row[1] = 0.5;
        }
        let d = GPDistribution::from_conditional(i, &q);
        // P(X = 1) = 0.5 exceeds tau: not a member
        assert!(d.is_err());
        let i = inst(0.125, 0.1, 0.5);
        let mut q = [[0.0; 8]; 2];
        for row in &mut q {
            row[0] = 0.8;
            row[2] = 0.1;
            row[3] = 0.1;
        }
        let d = GPDistribution::from_conditional(i, &q).unwrap();
        assert!(!no_rate_loss_report(&d, 1e-9).unwrap().x_function_of_us);
    }

    #[test]
    fn case_labels() {
        assert_eq!(case_label(0b1111_0000), 1);
        assert_eq!(case_label(0b0000_1111), 1);
        assert_eq!(case_label(0b0001_1111), 2);
        assert_eq!(case_label(0b1110_0111), 3);
        assert_eq!(case_label(0b1100_0111), 4);
        assert_eq!(case_label(0b0111_0011), 4);
        assert_eq!(case_label(0b0001_0111), 5);
        assert_eq!(case_label(0b0011_0011), 6);
        assert_eq!(case_label(0b0001_0011), 7);
        assert_eq!(case_label(0b0001_0001), 6);
    }

    #[test]
    fn certificate_covers_every_map() {
        let i = inst(0.125, 0.01, 0.3);
        let Prop1Outcome::Refuted(cert) = prop1_refute(&i, 1e-9).unwrap() else {
            panic!("expected a refutation");
        };
        let zs: Vec<u8> = cert.cases.iter().map(|c| c.z).collect();
        assert_eq!(zs, (0..=255u8).collect::<Vec<_>>());
        // m = 0: psi1 = psi2 = 0
        let c = cert.cases.iter().find(|c| c.z == 0b1111_0000).unwrap();
        assert_eq!((c.case, c.violation), (1, Violation::PsiEqual));
        assert_eq!(cert.to_csv().lines().count(), 257);
    }

    #[test]
    fn guard_and_relaxed_check_at_constant_state() {
        let i = inst(0.125, 0.01, 0.0);
        assert!(matches!(prop1_refute(&i, 1e-9), Err(crate::Error::Precondition(_))));
        let Prop1Outcome::Counterexample { pmf, .. } = prop1_relaxed(&i, 1e-9).unwrap() else {
            panic!("expected a feasible map");
        };
        assert!(no_rate_loss_report(&pmf, 1e-6).unwrap().all());
    }
}
