//! Rate regions of a single test channel, membership tests, and the analytic
//! suboptimality results for Example 1.
//!
//! Every region is built as a [`RateSystem`] over nonnegative auxiliary rates
//! plus free message rates `R1, R2, R3`. Membership fixes the message rates
//! and asks the polytope engine whether the auxiliary rates can be chosen.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_rational::Rational64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{make_example1, open_half, BroadcastChannel, Example1Params};
use crate::entropy::{binary_convolution, binary_entropy, binary_entropy_inverse, ci_check, Axis};
use crate::error::{domain, precondition, schema, Error, Result};
use crate::polytope::Relation::{Eq, Ge, Le};
use crate::rng::RngKey;
use crate::{JointPmf, RateSystem};

pub use crate::polytope::DEFAULT_TOL;

/// Upper endpoint of the Corollary-1 window as printed for `delta1 = 0.01`,
/// `tau = 1/8`. The stated condition solves to about 0.2323 instead.
pub const COROLLARY1_PRINTED_HIGH: f64 = 0.21;

/// Cost slack allowed when validating `E[kappa(X)] <= tau`.
const COST_SLACK: f64 = 1e-9;

/// A pmf over auxiliaries and the channel input, together with the channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestChannel {
    pub joint: JointPmf,
    pub channel: BroadcastChannel,
    #[serde(default)]
    pub field_sizes: BTreeMap<String, usize>,
    pub tau: f64,
}

impl TestChannel {
    pub fn new(
        joint: JointPmf,
        channel: BroadcastChannel,
        field_sizes: BTreeMap<String, usize>,
        tau: f64,
    ) -> Result<Self> {
        let t = Self { joint, channel, field_sizes, tau };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        let xs = self.joint.axis_size("X")?;
        if xs != self.channel.input_size {
            return schema(format!("axis X has size {xs}, channel input has {}", self.channel.input_size));
        }
        for y in ["Y1", "Y2", "Y3"] {
            if self.joint.has_axis(y) {
                return schema(format!("joint must not carry output axis {y}"));
            }
        }
        for (name, q) in &self.field_sizes {
            let s = self.joint.axis_size(name)?;
            if s != *q {
                return schema(format!("axis {name} has size {s} but field size {q}"));
            }
            prime_power(*q)?;
        }
        if !self.tau.is_finite() {
            return domain("tau must be finite");
        }
        let cost = self.expected_cost();
        if cost > self.tau + COST_SLACK {
            return domain(format!("expected cost {cost} exceeds tau = {}", self.tau));
        }
        Ok(())
    }

    pub fn expected_cost(&self) -> f64 {
        let xi = self.joint.axis_index("X").expect("validated X axis");
        self.joint.expect(|idx| self.channel.cost[idx[xi]])
    }

    /// The joint extended with `Y1, Y2, Y3`.
    pub fn with_outputs(&self) -> Result<JointPmf> {
        self.channel.attach_outputs(&self.joint, "X")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    /// Read a test-channel file. `"channel"` may be an inline object or a
    /// path, resolved relative to the file.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut v: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(serde_json::Value::String(rel)) = v.get("channel") {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            let ch: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(base.join(rel))?)?;
            v["channel"] = ch;
        }
        let t: Self = serde_json::from_value(v)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("test channel serializes")
    }

    fn require(&self, axes: &[&str]) -> Result<()> {
        for a in axes {
            if !self.joint.has_axis(a) {
                return schema(format!("test channel lacks axis {a}"));
            }
        }
        Ok(())
    }

    fn field(&self, axis: &str) -> Result<usize> {
        match self.field_sizes.get(axis) {
            Some(q) => Ok(*q),
            None => schema(format!("no field size declared for {axis}")),
        }
    }
}

/// A message-rate triple in bits per channel use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl RateTriple {
    pub fn new(r1: f64, r2: f64, r3: f64) -> Result<Self> {
        let p = Self { r1, r2, r3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for r in self.as_array() {
            if !(r.is_finite() && r >= 0.0) {
                return domain(format!("rate {r} must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r1, self.r2, self.r3]
    }

    /// Componentwise scaling, used by downward-closure checks.
    pub fn scaled(&self, s: [f64; 3]) -> Self {
        Self { r1: self.r1 * s[0], r2: self.r2 * s[1], r3: self.r3 * s[2] }
    }
}

impl FromStr for RateTriple {
    type Err = Error;

    /// Parse `"r1,r2,r3"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return schema(format!("expected three comma-separated rates, got {s:?}"));
        }
        let mut r = [0.0; 3];
        for (slot, p) in r.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| Error::Schema(format!("bad rate {p:?}")))?;
        }
        Self::new(r[0], r[1], r[2])
    }
}

impl fmt::Display for RateTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.r1, self.r2, self.r3)
    }
}

/// The rate regions this module can build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Marton2,
    Nem,
    Beta1,
    Beta2,
    BetaF,
}

impl RegionKind {
    pub const ALL: [RegionKind; 5] =
        [RegionKind::Marton2, RegionKind::Nem, RegionKind::Beta1, RegionKind::Beta2, RegionKind::BetaF];

    /// Auxiliary axes the test channel must carry, besides `X`.
    pub fn aux_axes(self) -> &'static [&'static str] {
        match self {
            RegionKind::Marton2 => &["Q", "W", "V1", "V2"],
            RegionKind::Nem => &["Q", "W", "U12", "U23", "U31", "V1", "V2", "V3"],
            RegionKind::Beta1 => &["U21", "U31", "V1"],
            RegionKind::Beta2 => &["U21", "U31", "V1", "V2", "V3"],
            RegionKind::BetaF => &["U12", "U13", "U21", "U23", "U31", "U32", "V1", "V2", "V3"],
        }
    }

    /// The axes that live in a finite field.
    pub fn field_axes(self) -> &'static [&'static str] {
        match self {
            RegionKind::Marton2 | RegionKind::Nem => &[],
            RegionKind::Beta1 | RegionKind::Beta2 => &["U21", "U31"],
            RegionKind::BetaF => &BF_U,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Marton2 => "marton2",
            RegionKind::Nem => "nem",
            RegionKind::Beta1 => "beta1",
            RegionKind::Beta2 => "beta2",
            RegionKind::BetaF => "betaf",
        }
    }
}

impl FromStr for RegionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Schema(format!("unknown region kind {s:?}")))
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Membership of `point` in the region of `kind` for one test channel.
/// For `Marton2` the third rate must be zero.
pub fn region_member(kind: RegionKind, test: &TestChannel, point: RateTriple, tol: f64) -> Result<bool> {
    match kind {
        RegionKind::Marton2 => {
            if point.r3 > tol {
                return Ok(false);
            }
            marton2_region_check(test, (point.r1, point.r2), tol)
        }
        RegionKind::Nem => nem_member(test, point, tol),
        RegionKind::Beta1 => beta1_member(test, point, tol),
        RegionKind::Beta2 => beta2_member(test, point, tol),
        RegionKind::BetaF => betaf_member(test, point, tol),
    }
}

// ---------------------------------------------------------------------------
// Finite-field helpers

/// `q = p^m` with `p` prime, as `(p, m)`.
fn prime_power(q: usize) -> Result<(usize, u32)> {
    if q < 2 {
        return schema(format!("field size {q} is not a prime power"));
    }
    let p = (2..=q).find(|d| q.is_multiple_of(*d)).expect("q >= 2 has a divisor");
    let (mut r, mut m) = (q, 0);
    while r % p == 0 {
        r /= p;
        m += 1;
    }
    if r != 1 {
        return schema(format!("field size {q} is not a prime power"));
    }
    Ok((p, m))
}

/// Addition in GF(q): digitwise mod `p` in the base-`p` representation.
fn gf_add(q: usize, a: usize, b: usize) -> usize {
    let (p, m) = prime_power(q).expect("validated field size");
    let (mut a, mut b, mut out, mut place) = (a, b, 0, 1);
    for _ in 0..m {
        out += ((a % p + b % p) % p) * place;
        a /= p;
        b /= p;
        place *= p;
    }
    out
}

/// Append the axis `"{a}+{b}"` holding the field sum of two axes.
fn with_sum_axis(pmf: &JointPmf, a: &str, b: &str, q: usize) -> Result<(JointPmf, String)> {
    let (ia, ib) = (pmf.axis_index(a)?, pmf.axis_index(b)?);
    let name = format!("{a}+{b}");
    let out = pmf.with_derived_axis(&name, q, |idx| gf_add(q, idx[ia], idx[ib]))?;
    Ok((out, name))
}

// ---------------------------------------------------------------------------
// Entropy cache

/// A marginal over a subset of axes that answers entropy queries confined to
/// that subset without touching the full tensor.
struct Layer {
    cover: u64,
    pmf: JointPmf,
    /// Position in `pmf` of each full-tensor axis (unused outside `cover`).
    map: Vec<usize>,
}

/// Memoised joint entropies of one pmf, keyed by axis mask.
pub(crate) struct Entropies {
    full: JointPmf,
    layers: Vec<Layer>,
    cache: HashMap<u64, f64>,
}

impl Entropies {
    fn new(full: JointPmf, layers: &[Vec<String>]) -> Result<Self> {
        let mut built = Vec::new();
        for names in layers {
            let cover = full.mask(names)?;
            let pmf = full.marginal(names)?;
            let mut map = vec![0; full.axes().len()];
            let mut k = 0;
            for (i, slot) in map.iter_mut().enumerate() {
                if cover >> i & 1 == 1 {
                    *slot = k;
                    k += 1;
                }
            }
            built.push(Layer { cover, pmf, map });
        }
        built.sort_by_key(|l| l.pmf.probs().len());
        Ok(Self { full, layers: built, cache: HashMap::new() })
    }

    fn h_mask(&mut self, m: u64) -> f64 {
        if let Some(v) = self.cache.get(&m) {
            return *v;
        }
        let v = match self.layers.iter().find(|l| m & !l.cover == 0) {
            Some(l) => {
                let mut lm = 0u64;
                for i in 0..l.map.len() {
                    if m >> i & 1 == 1 {
                        lm |= 1 << l.map[i];
                    }
                }
                l.pmf.entropy_mask(lm)
            }
            None => self.full.entropy_mask(m),
        };
        self.cache.insert(m, v);
        v
    }

    fn mask<S: AsRef<str>>(&self, names: &[S]) -> Result<u64> {
        self.full.mask(names)
    }

    /// `H(a)`.
    fn h<S: AsRef<str>>(&mut self, a: &[S]) -> Result<f64> {
        let m = self.mask(a)?;
        Ok(self.h_mask(m))
    }

    /// `H(a | c)`.
    fn hc<S: AsRef<str>, T: AsRef<str>>(&mut self, a: &[S], c: &[T]) -> Result<f64> {
        let (ma, mc) = (self.mask(a)?, self.mask(c)?);
        Ok(self.h_mask(ma | mc) - self.h_mask(mc))
    }

    /// `I(a; b | c)`.
    fn mi<S: AsRef<str>, T: AsRef<str>, U: AsRef<str>>(&mut self, a: &[S], b: &[T], c: &[U]) -> Result<f64> {
        let (ma, mb, mc) = (self.mask(a)?, self.mask(b)?, self.mask(c)?);
        Ok(self.h_mask(ma | mc) + self.h_mask(mb | mc) - self.h_mask(ma | mb | mc) - self.h_mask(mc))
    }

    /// `I(a; b; c | d) = I(a; b | d) + I(ab; c | d)`.
    fn mi3(&mut self, a: &[&str], b: &[&str], c: &[&str], d: &[&str]) -> Result<f64> {
        let ab: Vec<&str> = a.iter().chain(b).copied().collect();
        Ok(self.mi(a, b, d)? + self.mi(&ab, c, d)?)
    }
}

fn int(n: i64) -> Rational64 {
    Rational64::from_integer(n)
}

/// Fix the message rates and test feasibility of the remaining system.
/// Membership by the Farkas test: elimination stalls on degenerate joints
/// (all constants zero) and on the large subset families.
fn member(sys: &RateSystem, point: RateTriple, tol: f64) -> Result<bool> {
    point.validate()?;
    let s = sys.substitute("R1", &point.r1)?.substitute("R2", &point.r2)?.substitute("R3", &point.r3)?;
    Ok(s.farkas_feasible(tol))
}

/// Project a region system onto `(R1, R2, R3)`.
pub fn project_rates(sys: &RateSystem) -> Result<RateSystem> {
    sys.project(&["R1", "R2", "R3"])
}

/// Evaluate a point against a system that only involves `R1, R2, R3`.
pub fn evaluate_rates(projected: &RateSystem, point: RateTriple, tol: f64) -> Result<bool> {
    let a: BTreeMap<String, f64> =
        [("R1", point.r1), ("R2", point.r2), ("R3", point.r3)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    projected.evaluate_point(&a, tol)
}

/// A system with free `R1..R3` followed by the named nonnegative variables.
fn rate_system(aux: &[String]) -> RateSystem {
    let mut sys = RateSystem::new(["R1", "R2", "R3"].iter().map(|s| s.to_string()).chain(aux.iter().cloned()));
    sys.set_all_nonneg();
    for r in ["R1", "R2", "R3"] {
        sys.set_nonneg(r, false).expect("declared");
    }
    sys
}

/// Add `R = sum(parts)`.
fn link(sys: &mut RateSystem, r: &str, parts: &[&str]) -> Result<()> {
    let mut terms = vec![(int(1), r.to_string())];
    terms.extend(parts.iter().map(|p| (int(-1), p.to_string())));
    sys.push(&terms, Eq, 0.0)
}

// ---------------------------------------------------------------------------
// Marton's two-user region

/// Right-hand sides of the two-user Marton region of one test channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Marton2Bounds {
    pub r1_max: f64,
    pub r2_max: f64,
    pub sum_max: f64,
}

pub fn marton2_bounds(test: &TestChannel) -> Result<Marton2Bounds> {
    test.require(RegionKind::Marton2.aux_axes())?;
    if test.channel.output_sizes[2] != 1 {
        return schema("the two-user region needs a channel whose third output is trivial");
    }
    let mut e = Entropies::new(test.with_outputs()?, &[])?;
    let r1_max = e.mi(&["W", "V1"], &["Y1"], &["Q"])?;
    let r2_max = e.mi(&["W", "V2"], &["Y2"], &["Q"])?;
    let common = e.mi(&["W"], &["Y1"], &["Q"])?.min(e.mi(&["W"], &["Y2"], &["Q"])?);
    let sum_max = common + e.mi(&["V1"], &["Y1"], &["Q", "W"])? + e.mi(&["V2"], &["Y2"], &["Q", "W"])?
        - e.mi(&["V1"], &["V2"], &["Q", "W"])?;
    Ok(Marton2Bounds { r1_max, r2_max, sum_max })
}

/// Both per-user bounds and the sum bound of Marton's region, within `tol`.
pub fn marton2_region_check(test: &TestChannel, pair: (f64, f64), tol: f64) -> Result<bool> {
    let b = marton2_bounds(test)?;
    let (r1, r2) = pair;
    if !(r1.is_finite() && r2.is_finite()) {
        return domain("rates must be finite");
    }
    Ok(r1 >= -tol && r2 >= -tol && r1 <= b.r1_max + tol && r2 <= b.r2_max + tol && r1 + r2 <= b.sum_max + tol)
}

// ---------------------------------------------------------------------------
// Natural extension of Marton's region to three users

/// Auxiliary rates of the three-layer scheme, in declaration order.
pub const NEM_RATES: [&str; 18] = [
    "K1", "K2", "K3", "K12", "K23", "K31", "L12", "L23", "L31", "S12", "S23", "S31", "T1", "T2", "T3", "S1", "S2",
    "S3",
];

/// The cyclic triples `(i, j, k)`.
const CYCLIC: [(u8, u8, u8); 3] = [(1, 2, 3), (2, 3, 1), (3, 1, 2)];

/// Name of the semi-private index for the cyclic pair containing `a, b`.
fn pair(a: u8, b: u8) -> String {
    match (a.min(b), a.max(b)) {
        (1, 2) => "12".into(),
        (2, 3) => "23".into(),
        (1, 3) => "31".into(),
        _ => unreachable!("indices are distinct and in 1..=3"),
    }
}

pub fn nem_system(test: &TestChannel) -> Result<RateSystem> {
    test.require(RegionKind::Nem.aux_axes())?;
    let mut e = Entropies::new(test.with_outputs()?, &[])?;
    let names: Vec<String> = NEM_RATES.iter().map(|s| s.to_string()).collect();
    let mut sys = rate_system(&names);
    let qw = ["Q", "W"];
    let u = |p: &str| format!("U{p}");
    let all_u = ["U12", "U23", "U31"];
    let cond = |extra: &[&str]| -> Vec<String> {
        qw.iter().chain(extra).map(|s| s.to_string()).collect()
    };

    // I(U12; U23; U31 | QW) does not depend on the triple.
    let i3 = e.mi3(&["U12"], &["U23"], &["U31"], &qw)?;
    let uv = all_u.iter().copied().chain(qw).collect::<Vec<_>>();
    let v123 = e.mi(&["V1"], &["V2"], &uv)? + e.mi(&["V1", "V2"], &["V3"], &uv)?;
    let sext = e.mi(&["V1"], &["U23"], &cond(&["U12", "U31"]))?
        + e.mi(&["V2"], &["U31"], &cond(&["U12", "U23"]))?
        + v123
        + i3
        + e.mi(&["V3"], &["U12"], &cond(&["U23", "U31"]))?;

    for (i, j, k) in CYCLIC {
        let (ij, jk, ki) = (pair(i, j), pair(j, k), pair(k, i));
        let (uij, ujk, uki) = (u(&ij), u(&jk), u(&ki));
        let (si, sj) = (format!("S{i}"), format!("S{j}"));
        let (sij, sjk, ski) = (format!("S{ij}"), format!("S{jk}"), format!("S{ki}"));
        let (vi, vj) = (format!("V{i}"), format!("V{j}"));

        // encoder: binning rates cover the dependence between codewords
        sys.push_sum(&[&si], Ge, 0.0)?;
        let pairwise = e.mi(&[&uij], &[&ujk], &qw)?;
        sys.push_sum(&[&sij, &sjk], Ge, pairwise)?;
        sys.push_sum(&[&sij, &sjk, &ski], Ge, i3)?;
        let vi_jk = e.mi(&[&vi], &[&ujk], &cond(&[&uij, &uki]))?;
        sys.push_sum(&[&si, &sij, &sjk, &ski], Ge, i3 + vi_jk)?;
        let vj_ki = e.mi(&[&vj], &[&uki], &cond(&[&uij, &ujk]))?;
        let vi_vj = e.mi(&[&vi], &[&vj], &cond(&[&ujk, &uij, &uki]))?;
        sys.push_sum(&[&si, &sj, &sij, &sjk, &ski], Ge, vi_jk + vj_ki + i3 + vi_vj)?;
        sys.push_sum(&["S1", "S2", "S3", "S12", "S23", "S31"], Ge, sext)?;

        // decoder i: public, both semi-private codebooks it shares, private
        let yi = format!("Y{i}");
        let (ti, kij, lij, kki, lki) = (format!("T{i}"), format!("K{ij}"), format!("L{ij}"), format!("K{ki}"), format!("L{ki}"));
        let shared = e.mi(&[&uij], &[&uki], &qw)?;
        let c14 = e.mi(&[&vi], &[&yi], &cond(&[&uij, &uki]))?;
        sys.push_sum(&[&ti, &si], Le, c14)?;
        let c15 = e.mi(&[&uij, &vi], &[&yi], &cond(&[&uki]))? + shared;
        sys.push_sum(&[&kij, &lij, &sij, &ti, &si], Le, c15)?;
        let c16 = e.mi(&[&uki, &vi], &[&yi], &cond(&[&uij]))? + shared;
        sys.push_sum(&[&kki, &lki, &ski, &ti, &si], Le, c16)?;
        let c17 = e.mi(&[&uij, &uki, &vi], &[&yi], &qw)? + shared;
        sys.push_sum(&[&kij, &lij, &sij, &kki, &lki, &ski, &ti, &si], Le, c17)?;
        let c18 = e.mi(&["W", &uij, &uki, &vi], &[&yi], &["Q"])? + shared;
        sys.push_sum(&["K1", "K2", "K3", &kij, &lij, &sij, &kki, &lki, &ski, &ti, &si], Le, c18)?;
    }
    // R_j = T_j + K_jk + L_ij + K_j
    link(&mut sys, "R1", &["T1", "K12", "L31", "K1"])?;
    link(&mut sys, "R2", &["T2", "K23", "L12", "K2"])?;
    link(&mut sys, "R3", &["T3", "K31", "L23", "K3"])?;
    Ok(sys)
}

pub fn nem_member(test: &TestChannel, point: RateTriple, tol: f64) -> Result<bool> {
    member(&nem_system(test)?, point, tol)
}

// ---------------------------------------------------------------------------
// One-layer nested-coset region (user 1 decodes the sum)

const SUM_AXIS: &str = "U21+U31";

/// Joint with outputs and the field-sum axis for the beta regions.
fn beta_joint(test: &TestChannel, kind: RegionKind) -> Result<(JointPmf, f64)> {
    test.require(kind.aux_axes())?;
    let (q2, q3) = (test.field("U21")?, test.field("U31")?);
    if q2 != q3 {
        return schema(format!("U21 and U31 must share one field, got sizes {q2} and {q3}"));
    }
    let (full, _) = with_sum_axis(&test.with_outputs()?, "U21", "U31", q2)?;
    Ok((full, (q2 as f64).log2()))
}

/// One printed inequality `coeffs . (R1, R2, R3) <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrintedBound {
    pub label: String,
    pub coeffs: [i64; 3],
    pub rhs: f64,
}

impl PrintedBound {
    fn new(label: impl Into<String>, coeffs: [i64; 3], rhs: f64) -> Self {
        Self { label: label.into(), coeffs, rhs }
    }

    pub fn holds(&self, p: RateTriple, tol: f64) -> bool {
        let lhs: f64 = self.coeffs.iter().zip(p.as_array()).map(|(c, r)| *c as f64 * r).sum();
        lhs <= self.rhs + tol
    }
}

/// The closed-form inequality list of the one-layer region.
pub fn beta1_bounds(test: &TestChannel) -> Result<Vec<PrintedBound>> {
    let (full, _) = beta_joint(test, RegionKind::Beta1)?;
    let mut e = Entropies::new(full, &[])?;
    let s = SUM_AXIS;
    let h_v1_sy1 = e.hc(&["V1"], &[s, "Y1"])?;
    let h_v1s_y1 = e.hc(&["V1", s], &["Y1"])?;
    let h_all = e.h(&["U21", "U31", "V1"])?;
    let h_u_y = [e.hc(&["U21"], &["Y2"])?, e.hc(&["U31"], &["Y3"])?];
    let h_v1 = e.h(&["V1"])?;

    let mut out = vec![PrintedBound::new("R1 <= I(V1;S,Y1)", [1, 0, 0], h_v1 - h_v1_sy1)];
    for (jx, (u, y)) in [("U21", "Y2"), ("U31", "Y3")].into_iter().enumerate() {
        let mut c = [1, 0, 0];
        c[jx + 1] = 1;
        let h_v1u = e.h(&["V1", u])?;
        out.push(PrintedBound::new(format!("R1+R{} decode-sum", jx + 2), c, h_v1u - h_u_y[jx] - h_v1_sy1));
        out.push(PrintedBound::new(format!("R1+R{} joint", jx + 2), c, h_v1u - h_v1s_y1));
        let mut cj = [0, 0, 0];
        cj[jx + 1] = 1;
        out.push(PrintedBound::new(format!("R{} <= I({u};{y})", jx + 2), cj, e.mi(&[u], &[y], &[] as &[&str])?));
    }
    let i23 = e.mi(&["U21"], &["U31"], &[] as &[&str])?;
    let r23 = e.mi(&["U21"], &["Y2"], &[] as &[&str])? + e.mi(&["U31"], &["Y3"], &[] as &[&str])? - i23;
    out.push(PrintedBound::new("R2+R3", [0, 1, 1], r23));
    out.push(PrintedBound::new("R1+R2+R3 max", [1, 1, 1], h_all - h_v1s_y1 - h_u_y[0].max(h_u_y[1])));
    out.push(PrintedBound::new("R1+R2+R3 sum", [1, 1, 1], h_all - h_v1_sy1 - h_u_y[0] - h_u_y[1]));
    out.push(PrintedBound::new("2R1+R2+R3", [2, 1, 1], h_v1 + h_all - 2.0 * h_v1s_y1));
    let h_u = e.h(&["U21", "U31"])?;
    for (jx, u) in ["U21", "U31"].into_iter().enumerate() {
        let mut c = [1, 1, 1];
        c[jx + 1] = 2;
        let rhs = e.h(&["V1", u])? + h_u - 2.0 * h_u_y[jx] - h_v1s_y1;
        out.push(PrintedBound::new(format!("R1+R2+R3+R{}", jx + 2), c, rhs));
    }
    Ok(out)
}

/// Membership by the closed-form inequality list.
pub fn beta1_member(test: &TestChannel, point: RateTriple, tol: f64) -> Result<bool> {
    point.validate()?;
    Ok(beta1_bounds(test)?.iter().all(|b| b.holds(point, tol)))
}

/// The user-1 decoding constraints, shared by both nested-coset regions.
fn push_user1_decoding(sys: &mut RateSystem, e: &mut Entropies, lq: f64) -> Result<()> {
    let h_v1 = e.h(&["V1"])?;
    sys.push_sum(&["K1", "L1"], Le, h_v1 - e.hc(&["V1"], &[SUM_AXIS, "Y1"])?)?;
    let joint = lq + h_v1 - e.hc(&["V1", SUM_AXIS], &["Y1"])?;
    for j in ["21", "31"] {
        sys.push_sum(&["K1", "L1", &format!("S{j}"), &format!("T{j}")], Le, joint)?;
    }
    Ok(())
}

/// Variables of the one-layer system before elimination.
pub const BETA1_RATES: [&str; 6] = ["S21", "S31", "K1", "L1", "T21", "T31"];

/// The one-layer bounds before eliminating the binning rates.
pub fn beta1_raw_system(test: &TestChannel) -> Result<RateSystem> {
    let (full, lq) = beta_joint(test, RegionKind::Beta1)?;
    let mut e = Entropies::new(full, &[])?;
    let mut sys = rate_system(&BETA1_RATES.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    let h_v1 = e.h(&["V1"])?;
    // encoder
    for u in ["U21", "U31"] {
        sys.push_sum(&[&format!("S{}", &u[1..])], Ge, lq - e.h(&[u])?)?;
    }
    sys.push_sum(&["K1"], Ge, 0.0)?;
    sys.push_sum(&["S21", "S31"], Ge, 2.0 * lq - e.h(&["U21", "U31"])?)?;
    for u in ["U21", "U31"] {
        sys.push_sum(&[&format!("S{}", &u[1..]), "K1"], Ge, lq + h_v1 - e.h(&[u, "V1"])?)?;
    }
    sys.push_sum(&["S21", "S31", "K1"], Ge, 2.0 * lq + h_v1 - e.h(&["U21", "U31", "V1"])?)?;
    // decoders 2 and 3
    for (u, y) in [("U21", "Y2"), ("U31", "Y3")] {
        let j = &u[1..];
        sys.push_sum(&[&format!("S{j}"), &format!("T{j}")], Le, lq - e.hc(&[u], &[y])?)?;
    }
    push_user1_decoding(&mut sys, &mut e, lq)?;
    link(&mut sys, "R1", &["L1"])?;
    link(&mut sys, "R2", &["T21"])?;
    link(&mut sys, "R3", &["T31"])?;
    Ok(sys)
}

/// Membership through the unprojected one-layer system.
pub fn beta1_raw_member(test: &TestChannel, point: RateTriple, tol: f64) -> Result<bool> {
    member(&beta1_raw_system(test)?, point, tol)
}

/// Agreement counts between the closed-form list and the raw system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Beta1Comparison {
    pub points: usize,
    pub agree: usize,
    /// Accepted by the closed-form list but not by the raw system.
    pub printed_only: usize,
    /// Accepted by the raw system but not by the closed-form list.
    pub raw_only: usize,
}

impl Beta1Comparison {
    pub fn merge(self, o: Self) -> Self {
        Self {
            points: self.points + o.points,
            agree: self.agree + o.agree,
            printed_only: self.printed_only + o.printed_only,
            raw_only: self.raw_only + o.raw_only,
        }
    }

    pub fn agreement_rate(&self) -> f64 {
        if self.points == 0 {
            1.0
        } else {
            self.agree as f64 / self.points as f64
        }
    }
}

/// Compare both membership paths on `points`.
pub fn beta1_compare(test: &TestChannel, points: &[RateTriple], tol: f64) -> Result<Beta1Comparison> {
    let bounds = beta1_bounds(test)?;
    let projected = project_rates(&beta1_raw_system(test)?)?;
    let mut c = Beta1Comparison::default();
    for p in points {
        p.validate()?;
        let printed = bounds.iter().all(|b| b.holds(*p, tol));
        let raw = evaluate_rates(&projected, *p, tol)?;
        c.points += 1;
        match (printed, raw) {
            (a, b) if a == b => c.agree += 1,
            (true, false) => c.printed_only += 1,
            _ => c.raw_only += 1,
        }
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// Two-layer nested-coset region

pub const BETA2_RATES: [&str; 10] = ["S21", "S31", "T21", "T31", "K1", "K2", "K3", "L1", "L2", "L3"];

pub fn beta2_system(test: &TestChannel) -> Result<RateSystem> {
    let (full, lq) = beta_joint(test, RegionKind::Beta2)?;
    let mut e = Entropies::new(full, &[])?;
    let mut sys = rate_system(&BETA2_RATES.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    let us = ["21", "31"];
    let h_v: Vec<f64> = (1..=3).map(|b| e.h(&[format!("V{b}")])).collect::<Result<_>>()?;
    // encoder: every nonempty (A, B)
    for a in 0..4usize {
        for b in 0..8usize {
            if a == 0 && b == 0 {
                continue;
            }
            let mut vars = Vec::new();
            let mut axes = Vec::new();
            let mut rhs = 0.0;
            for (t, u) in us.iter().enumerate() {
                if a >> t & 1 == 1 {
                    vars.push(format!("S{u}"));
                    axes.push(format!("U{u}"));
                    rhs += lq;
                }
            }
            for t in 0..3 {
                if b >> t & 1 == 1 {
                    vars.push(format!("K{}", t + 1));
                    axes.push(format!("V{}", t + 1));
                    rhs += h_v[t];
                }
            }
            rhs -= e.h(&axes)?;
            sys.push_sum(&vars, Ge, rhs)?;
        }
    }
    // decoders 2 and 3 decode their coset codeword and private codeword
    for (j, u) in [(2usize, "U21"), (3, "U31")] {
        let (v, y) = (format!("V{j}"), format!("Y{j}"));
        let (s, t, k, l) = (format!("S{}", &u[1..]), format!("T{}", &u[1..]), format!("K{j}"), format!("L{j}"));
        sys.push_sum(&[&s, &t], Le, lq - e.hc(&[u], &[v.as_str(), y.as_str()])?)?;
        sys.push_sum(&[&k, &l], Le, h_v[j - 1] - e.hc(&[v.as_str()], &[y.as_str(), u])?)?;
        sys.push_sum(&[&s, &t, &k, &l], Le, lq + h_v[j - 1] - e.hc(&[v.as_str(), u], &[y.as_str()])?)?;
    }
    push_user1_decoding(&mut sys, &mut e, lq)?;
    link(&mut sys, "R1", &["L1"])?;
    link(&mut sys, "R2", &["T21", "L2"])?;
    link(&mut sys, "R3", &["T31", "L3"])?;
    Ok(sys)
}

pub fn beta2_member(test: &TestChannel, point: RateTriple, tol: f64) -> Result<bool> {
    member(&beta2_system(test)?, point, tol)
}

// ---------------------------------------------------------------------------
// Full nested-coset region: every user decodes a sum of the other two

const BF_U: [&str; 6] = ["U12", "U13", "U21", "U23", "U31", "U32"];

/// The two indices other than `j`, ascending.
fn others(j: usize) -> (usize, usize) {
    match j {
        1 => (2, 3),
        2 => (1, 3),
        _ => (1, 2),
    }
}

/// Name of the sum axis decoded by user `j`.
pub fn betaf_sum_axis(j: usize) -> String {
    let (i, k) = others(j);
    format!("U{i}{j}+U{k}{j}")
}

pub fn betaf_rate_names() -> Vec<String> {
    let mut v: Vec<String> = BF_U.iter().map(|u| format!("S{}", &u[1..])).collect();
    v.extend(BF_U.iter().map(|u| format!("T{}", &u[1..])));
    v.extend((1..=3).map(|j| format!("K{j}")));
    v.extend((1..=3).map(|j| format!("L{j}")));
    v
}

pub fn betaf_system(test: &TestChannel) -> Result<RateSystem> {
    test.require(RegionKind::BetaF.aux_axes())?;
    let mut lq = BTreeMap::new();
    for u in BF_U {
        lq.insert(u, (test.field(u)? as f64).log2());
    }
    let mut full = test.with_outputs()?;
    let mut qj = [0usize; 4];
    for j in 1..=3 {
        let (i, k) = others(j);
        let (a, b) = (format!("U{i}{j}"), format!("U{k}{j}"));
        let (qa, qb) = (test.field(&a)?, test.field(&b)?);
        if qa != qb {
            return schema(format!("{a} and {b} must share one field, got sizes {qa} and {qb}"));
        }
        qj[j] = qa;
        full = with_sum_axis(&full, &a, &b, qa)?.0;
    }
    // Encoder constants only need the auxiliaries; decoder j only its output.
    let aux: Vec<String> = BF_U.iter().map(|s| s.to_string()).chain((1..=3).map(|j| format!("V{j}"))).collect();
    let mut layers = vec![aux.clone()];
    for j in 1..=3 {
        let mut l = aux.clone();
        l.push(betaf_sum_axis(j));
        l.push(format!("Y{j}"));
        layers.push(l);
    }
    let mut e = Entropies::new(full, &layers)?;
    let mut sys = rate_system(&betaf_rate_names());
    let h_v: Vec<f64> = (1..=3).map(|b| e.h(&[format!("V{b}")])).collect::<Result<_>>()?;

    // encoder: every nonempty (A, B)
    for a in 0..64usize {
        for b in 0..8usize {
            if a == 0 && b == 0 {
                continue;
            }
            let mut vars = Vec::new();
            let mut axes = Vec::new();
            let mut rhs = 0.0;
            for (t, u) in BF_U.iter().enumerate() {
                if a >> t & 1 == 1 {
                    vars.push(format!("S{}", &u[1..]));
                    axes.push(u.to_string());
                    rhs += lq[u];
                }
            }
            for t in 0..3 {
                if b >> t & 1 == 1 {
                    vars.push(format!("K{}", t + 1));
                    axes.push(format!("V{}", t + 1));
                    rhs += h_v[t];
                }
            }
            rhs -= e.h(&axes)?;
            sys.push_sum(&vars, Ge, rhs)?;
        }
    }

    // decoder j: own coset codewords U_ji, U_jk, the sum Z_j, private V_j
    for j in 1..=3usize {
        let (i, k) = others(j);
        let own = [format!("U{j}{i}"), format!("U{j}{k}")];
        let z = betaf_sum_axis(j);
        let (vj, yj) = (format!("V{j}"), format!("Y{j}"));
        let lqj = (qj[j] as f64).log2();
        let side_i = [format!("S{i}{j}"), format!("T{i}{j}")];
        let side_k = [format!("S{k}{j}"), format!("T{k}{j}")];
        let kl = [format!("K{j}"), format!("L{j}")];
        for a in 0..4usize {
            let (mut ua, mut uc, mut st) = (Vec::new(), Vec::new(), Vec::new());
            let mut lsum = 0.0;
            for (t, u) in own.iter().enumerate() {
                if a >> t & 1 == 1 {
                    ua.push(u.clone());
                    st.push(format!("S{}", &u[1..]));
                    st.push(format!("T{}", &u[1..]));
                    lsum += lq[u.as_str()];
                } else {
                    uc.push(u.clone());
                }
            }
            let cat = |xs: &[&[String]]| -> Vec<String> { xs.iter().flat_map(|x| x.iter().cloned()).collect() };
            let one = |s: &String| vec![s.clone()];
            let (zs, vs, ys) = (one(&z), one(&vj), one(&yj));

            let c1 = lsum - e.hc(&ua, &cat(&[&uc, &zs, &vs, &ys]))?;
            sys.push_sum(&st, Le, c1)?;
            let c2 = lsum + lqj - e.hc(&cat(&[&ua, &zs]), &cat(&[&uc, &vs, &ys]))?;
            sys.push_sum(&cat(&[&st, &side_i]), Le, c2)?;
            sys.push_sum(&cat(&[&st, &side_k]), Le, c2)?;
            let c4 = lsum + h_v[j - 1] - e.hc(&cat(&[&ua, &vs]), &cat(&[&uc, &zs, &ys]))?;
            sys.push_sum(&cat(&[&st, &kl]), Le, c4)?;
            let c5 = lsum + lqj + h_v[j - 1] - e.hc(&cat(&[&ua, &vs, &zs]), &cat(&[&uc, &ys]))?;
            sys.push_sum(&cat(&[&st, &kl, &side_i]), Le, c5)?;
            sys.push_sum(&cat(&[&st, &kl, &side_k]), Le, c5)?;
        }
    }
    link(&mut sys, "R1", &["T12", "T13", "L1"])?;
    link(&mut sys, "R2", &["T21", "T23", "L2"])?;
    link(&mut sys, "R3", &["T31", "T32", "L3"])?;
    Ok(sys)
}

pub fn betaf_member(test: &TestChannel, point: RateTriple, tol: f64) -> Result<bool> {
    member(&betaf_system(test)?, point, tol)
}

// ---------------------------------------------------------------------------
// Example 1: the linear-coding point and the suboptimality results

/// `(h_b(tau*d1) - h_b(d1), 1 - h_b(d2), 1 - h_b(d3))`, defined when
/// `tau*d1 <= min(d2, d3)`.
pub fn lemma1_point(tau: f64, delta1: f64, delta2: f64, delta3: f64) -> Result<RateTriple> {
    let p = Example1Params::new(tau, delta1, delta2, delta3)?;
    let eff = binary_convolution(tau, delta1)?;
    if eff > delta2.min(delta3) {
        return precondition(format!(
            "tau*delta1 = {eff} exceeds min(delta2, delta3) = {}; the linear-coding point needs tau*delta1 <= min(delta2, delta3)",
            delta2.min(delta3)
        ));
    }
    RateTriple::new(
        binary_entropy(eff)? - binary_entropy(p.delta1)?,
        1.0 - binary_entropy(p.delta2)?,
        1.0 - binary_entropy(p.delta3)?,
    )
}

/// Whether `h_b(d2) + h_b(d3) < 1 + h_b(d1*tau)`, the condition under which
/// the linear-coding point lies outside the three-user Marton region.
pub fn theorem2_holds(tau: f64, delta1: f64, delta2: f64, delta3: f64) -> Result<bool> {
    Example1Params::new(tau, delta1, delta2, delta3)?;
    Ok(binary_entropy(delta2)? + binary_entropy(delta3)? < 1.0 + binary_entropy(binary_convolution(delta1, tau)?)?)
}

/// The interval of `delta = delta2 = delta3` on which Marton's region is
/// strictly smaller than capacity: `low = tau*d1`,
/// `high = h_b^{-1}((1 + h_b(d1*tau)) / 2)`.
pub fn corollary1_window(delta1: f64, tau: f64) -> Result<(f64, f64)> {
    open_half("delta1", delta1)?;
    open_half("tau", tau)?;
    let low = binary_convolution(tau, delta1)?;
    let high = binary_entropy_inverse((1.0 + binary_entropy(low)?) / 2.0)?;
    Ok((low, high))
}

fn example1_axes_joint(
    aux: &[(&str, usize)],
    x_of: impl Fn(&[usize]) -> usize,
    weight: impl Fn(&[usize]) -> f64,
) -> Result<JointPmf> {
    let axes: Vec<Axis> = aux.iter().map(|(n, s)| Axis::new(*n, *s)).collect();
    let aux_pmf = JointPmf::from_fn(axes, weight)?;
    aux_pmf.with_derived_axis("X", 8, x_of)
}

fn bern(p: f64, b: usize) -> f64 {
    if b == 1 {
        p
    } else {
        1.0 - p
    }
}

/// The one-layer test channel: `V1 ~ Bern(tau)`, `U21, U31` uniform, all
/// independent, and `X = (V1, U21, U31)`.
pub fn example1_beta1_test_channel(params: Example1Params) -> Result<TestChannel> {
    let ch = make_example1(params)?;
    let tau = params.tau;
    let joint = example1_axes_joint(
        &[("U21", 2), ("U31", 2), ("V1", 2)],
        |i| 4 * i[2] + 2 * i[0] + i[1],
        |i| 0.25 * bern(tau, i[2]),
    )?;
    let fields = [("U21".to_string(), 2), ("U31".to_string(), 2)].into_iter().collect();
    TestChannel::new(joint, ch, fields, tau)
}

/// The one-layer test channel with constant private axes `V2, V3`.
pub fn example1_beta2_test_channel(params: Example1Params) -> Result<TestChannel> {
    let ch = make_example1(params)?;
    let tau = params.tau;
    let joint = example1_axes_joint(
        &[("U21", 2), ("U31", 2), ("V1", 2), ("V2", 1), ("V3", 1)],
        |i| 4 * i[2] + 2 * i[0] + i[1],
        |i| 0.25 * bern(tau, i[2]),
    )?;
    let fields = [("U21".to_string(), 2), ("U31".to_string(), 2)].into_iter().collect();
    TestChannel::new(joint, ch, fields, tau)
}

/// The one-layer test channel written on the three-layer axes:
/// `U12 = X2`, `U31 = X3`, `V1 = X1`, everything else constant.
pub fn example1_nem_test_channel(params: Example1Params) -> Result<TestChannel> {
    let ch = make_example1(params)?;
    let tau = params.tau;
    let names = [("Q", 1), ("W", 1), ("U12", 2), ("U23", 1), ("U31", 2), ("V1", 2), ("V2", 1), ("V3", 1)];
    let joint = example1_axes_joint(&names, |i| 4 * i[5] + 2 * i[2] + i[4], |i| 0.25 * bern(tau, i[5]))?;
    TestChannel::new(joint, ch, BTreeMap::new(), tau)
}

/// A three-layer test channel that carries user 2 on the public layer:
/// `W = X2`, `U31 = X3`, `V1 = X1`, everything else constant.
pub fn example1_nem_public_test_channel(params: Example1Params) -> Result<TestChannel> {
    let ch = make_example1(params)?;
    let tau = params.tau;
    let names = [("Q", 1), ("W", 2), ("U12", 1), ("U23", 1), ("U31", 2), ("V1", 2), ("V2", 1), ("V3", 1)];
    let joint = example1_axes_joint(&names, |i| 4 * i[5] + 2 * i[1] + i[4], |i| 0.25 * bern(tau, i[5]))?;
    TestChannel::new(joint, ch, BTreeMap::new(), tau)
}

/// A feasible rate assignment for [`example1_nem_test_channel`] that
/// delivers `R2 = 1 - h_b(d2)` on `L12` and `R3 = 1 - h_b(d3)` on `K31`.
pub fn example1_nem_assignment(params: Example1Params) -> Result<BTreeMap<String, f64>> {
    params.validate()?;
    let mut a: BTreeMap<String, f64> = NEM_RATES.iter().map(|v| (v.to_string(), 0.0)).collect();
    let (r2, r3) = (1.0 - binary_entropy(params.delta2)?, 1.0 - binary_entropy(params.delta3)?);
    a.insert("L12".into(), r2);
    a.insert("K31".into(), r3);
    a.insert("R1".into(), 0.0);
    a.insert("R2".into(), r2);
    a.insert("R3".into(), r3);
    Ok(a)
}

// ---------------------------------------------------------------------------
// Structure of test channels that carry users 2 and 3 at capacity

/// One check of the test-channel characterization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma3Check {
    /// Item number, 1 through 6.
    pub item: u8,
    pub label: String,
    pub value: f64,
    pub target: f64,
    /// `None` when the check needs rates and none were supplied.
    pub holds: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma3Report {
    pub tol: f64,
    pub checks: Vec<Lemma3Check>,
}

impl Lemma3Report {
    /// Whether every evaluated check of `item` holds.
    pub fn item_holds(&self, item: u8) -> bool {
        self.checks.iter().filter(|c| c.item == item).all(|c| c.holds != Some(false))
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.holds != Some(false))
    }

    pub fn failures(&self) -> Vec<&Lemma3Check> {
        self.checks.iter().filter(|c| c.holds == Some(false)).collect()
    }
}

impl fmt::Display for Lemma3Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match c.holds {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "skip",
            };
            // round-off below the printed precision would show as -0.000000
            let show = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
            writeln!(f, "item {} {status} {}: {:.6} vs {:.6}", c.item, c.label, show(c.value), show(c.target))?;
        }
        Ok(())
    }
}

/// Crossover of receiver `k` (0-based) as a BSC from input coordinate `k`.
fn bsc_crossover(ch: &BroadcastChannel, k: usize) -> Result<f64> {
    let Some(fact) = &ch.factorization else {
        return precondition("the channel has no input factorization X = (X1, X2, X3)");
    };
    if ch.output_sizes[k] != 2 {
        return precondition(format!("receiver {} is not binary", k + 1));
    }
    let w = ch.marginal(k);
    let d = w[0][1 - fact[k][0]];
    for (x, row) in w.iter().enumerate() {
        if fact[k][x] > 1 || (row[1 - fact[k][x]] - d).abs() > 1e-12 {
            return precondition(format!("receiver {} does not see a BSC from X{}", k + 1, k + 1));
        }
    }
    Ok(d)
}

/// Evaluate the six items of the characterization on a three-layer test
/// channel. Rate identities are evaluated only when `rates` is given.
pub fn lemma3_items(test: &TestChannel, rates: Option<&BTreeMap<String, f64>>, tol: f64) -> Result<Lemma3Report> {
    test.require(RegionKind::Nem.aux_axes())?;
    let (d2, d3) = (bsc_crossover(&test.channel, 1)?, bsc_crossover(&test.channel, 2)?);
    let fact = test.channel.factorization.clone().expect("checked by bsc_crossover");
    let xi = test.joint.axis_index("X")?;
    let mut full = test.with_outputs()?;
    for c in 0..3 {
        let f = fact[c].clone();
        full = full.with_derived_axis(&format!("X{}", c + 1), 2, move |idx| f[idx[xi]])?;
    }
    let mut e = Entropies::new(full.clone(), &[])?;
    let mut checks = Vec::new();
    let mut push = |item: u8, label: String, value: f64, target: f64, holds: Option<bool>| {
        checks.push(Lemma3Check { item, label, value, target, holds });
    };
    let rate = |v: &str| rates.and_then(|r| r.get(v).copied());

    for v in ["K1", "K2", "K3", "K23", "L23", "K12", "L31", "S2", "S3"] {
        let r = rate(v);
        push(1, format!("{v} = 0"), r.unwrap_or(f64::NAN), 0.0, r.map(|x| x.abs() <= tol));
    }
    let c = e.mi(&["U31", "V1", "V3"], &["Y2"], &["Q", "W", "U23", "U12", "V2"])?;
    push(1, "I(U31 V1 V3; Y2 | Q W U23 U12 V2) = 0".into(), c, 0.0, Some(c <= tol));

    let s31 = e.mi(&["U31"], &["U23"], &["Q", "W"])?;
    let s12 = e.mi(&["U12"], &["U23"], &["Q", "W"])?;
    let s23 = e.mi(&["U12"], &["U31"], &["Q", "W", "U23"])?;
    for (v, target, label) in [
        ("S31", s31, "S31 = I(U31; U23 | Q W)"),
        ("S12", s12, "S12 = I(U12; U23 | Q W)"),
        ("S23", s23, "S23 = I(U12; U31 | Q W U23)"),
    ] {
        let r = rate(v);
        push(2, label.into(), r.unwrap_or(f64::NAN), target, r.map(|x| (x - target).abs() <= tol));
    }
    push(2, "I(U12; U31 | Q W U23) = 0".into(), s23, 0.0, Some(s23 <= tol));

    let c = e.mi(&["V2", "U12"], &["V3", "U31"], &["Q", "W", "U23"])?;
    push(3, "I(V2 U12; V3 U31 | Q W U23) = 0".into(), c, 0.0, Some(c <= tol));
    for y in ["Y2", "Y3"] {
        let c = e.mi(&["W", "U23"], &[y], &["Q"])?;
        push(3, format!("I(W U23; {y} | Q) = 0"), c, 0.0, Some(c <= tol));
    }
    for (a, y, d) in [(["V2", "U12"], "Y2", d2), (["V3", "U31"], "Y3", d3)] {
        let c = e.mi(&a, &[y], &["Q", "W", "U23"])?;
        let target = 1.0 - binary_entropy(d)?;
        push(3, format!("I({} {}; {y} | Q W U23) = 1 - h_b(d)", a[0], a[1]), c, target, Some((c - target).abs() <= tol));
    }

    let chains: [(u8, &[&str], &[&str], &[&str]); 5] = [
        (4, &["V3", "X3", "V1", "U31"], &["X2", "Y2"], &["Q", "W", "U23", "U12", "V2"]),
        (4, &["V2", "X2", "V1", "U12"], &["X3", "Y3"], &["Q", "W", "U23", "U31", "V3"]),
        (5, &["X2"], &["X3"], &["Q", "W", "U12", "U23", "U31"]),
        (6, &["U12"], &["X3"], &["Q", "W", "U23", "U31"]),
        (6, &["U31"], &["X2"], &["Q", "W", "U23", "U12"]),
    ];
    for (item, a, b, c) in chains {
        let value = e.mi(a, b, c)?;
        let holds = ci_check(&full, a, b, c, tol)?;
        push(item, format!("{} - {} - {}", a.join(" "), c.join(" "), b.join(" ")), value, 0.0, Some(holds));
    }
    Ok(Lemma3Report { tol, checks })
}

/// Check that `rates` is a feasible three-layer assignment delivering
/// `R2 = 1 - h_b(d2)` and `R3 = 1 - h_b(d3)`, then evaluate every item.
/// Missing message rates are filled in from the rate links.
pub fn lemma3_audit(test: &TestChannel, rates: &BTreeMap<String, f64>, tol: f64) -> Result<Lemma3Report> {
    let sys = nem_system(test)?;
    let mut a = rates.clone();
    for v in NEM_RATES {
        if !a.contains_key(v) {
            return precondition(format!("rate assignment is missing {v}"));
        }
    }
    let sum = |a: &BTreeMap<String, f64>, vs: &[&str]| vs.iter().map(|v| a[*v]).sum::<f64>();
    for (r, parts) in [
        ("R1", ["T1", "K12", "L31", "K1"]),
        ("R2", ["T2", "K23", "L12", "K2"]),
        ("R3", ["T3", "K31", "L23", "K3"]),
    ] {
        if !a.contains_key(r) {
            let v = sum(&a, &parts);
            a.insert(r.to_string(), v);
        }
    }
    if !sys.evaluate_point(&a, tol)? {
        return precondition("the rate assignment violates the three-layer system");
    }
    let (d2, d3) = (bsc_crossover(&test.channel, 1)?, bsc_crossover(&test.channel, 2)?);
    for (r, d) in [("R2", d2), ("R3", d3)] {
        let target = 1.0 - binary_entropy(d)?;
        if (a[r] - target).abs() > tol {
            return precondition(format!("{r} = {} but the characterization needs {r} = {target}", a[r]));
        }
    }
    lemma3_items(test, Some(&a), tol)
}

// ---------------------------------------------------------------------------
// Random test-channel families

/// Shape of a random test-channel family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    /// Largest alphabet for non-field auxiliaries (including `Q`, `W`).
    pub max_aux: usize,
    /// Field size of every coset axis.
    pub q: usize,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self { max_aux: 2, q: 2 }
    }
}

/// Draw a random test channel of `kind` for `channel` meeting cost `tau`.
///
/// Auxiliary weights are cubed uniforms so that near-deterministic structure
/// shows up often; `X` given the auxiliaries is drawn the same way and then
/// mixed towards the cheapest input until the cost constraint holds.
pub fn random_test_channel(
    kind: RegionKind,
    channel: &BroadcastChannel,
    tau: f64,
    spec: FamilySpec,
    key: RngKey,
) -> Result<TestChannel> {
    if spec.max_aux == 0 {
        return domain("max_aux must be positive");
    }
    prime_power(spec.q)?;
    let cheapest = (0..channel.input_size)
        .min_by(|a, b| channel.cost[*a].total_cmp(&channel.cost[*b]))
        .expect("nonempty input");
    let kmin = channel.cost[cheapest];
    if kmin > tau {
        return domain(format!("no input meets cost {tau}"));
    }
    let mut rng = key.rng();
    let fields = kind.field_axes();
    let axes: Vec<Axis> = kind
        .aux_axes()
        .iter()
        .map(|n| {
            let size = if fields.contains(n) { spec.q } else { rng.gen_range(1..=spec.max_aux) };
            Axis::new(*n, size)
        })
        .collect();
    let n_aux: usize = axes.iter().map(|a| a.size).product();
    let weights: Vec<f64> = (0..n_aux).map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect();
    let aux = JointPmf::from_weights(axes.clone(), weights)?;
    let nx = channel.input_size;
    let rows: Vec<Vec<f64>> = (0..n_aux)
        .map(|_| {
            let w: Vec<f64> = (0..nx).map(|_| rng.gen::<f64>().powi(4) + 1e-6).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let mut cost = 0.0;
    for (k, p) in aux.probs().iter().enumerate() {
        cost += p * rows[k].iter().zip(&channel.cost).map(|(a, c)| a * c).sum::<f64>();
    }
    let lambda = if cost > tau { (tau - kmin) / (cost - kmin) } else { 1.0 };
    let sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
    let strides: Vec<usize> =
        (0..sizes.len()).map(|i| sizes[i + 1..].iter().product()).collect();
    let joint = aux.with_kernel(&[Axis::new("X", nx)], |idx| {
        let k: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        let mut row: Vec<f64> = rows[k].iter().map(|v| lambda * v).collect();
        row[cheapest] += 1.0 - lambda;
        row
    })?;
    let field_sizes = fields.iter().map(|f| (f.to_string(), spec.q)).collect();
    // rounding can leave the cost a hair above tau; the validation slack covers it
    TestChannel::new(joint, channel.clone(), field_sizes, tau)
}
