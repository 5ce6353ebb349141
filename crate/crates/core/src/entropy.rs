//! Discrete probability and information measures over labeled tensors.
//!
//! All logarithms are base 2 and `0 log 0 = 0`. Conditional quantities only
//! average over conditioning events of positive probability, which is what
//! computing them as differences of joint entropies gives automatically.

use std::collections::BTreeSet;
use std::fmt;
use std::iter::Sum;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{domain, schema, Error, Result};

/// Scalar used for probabilities. Implemented for `f32` and `f64`.
pub trait Prob: Float + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from(x).expect("literal representable")
    }
    /// Tolerance on the total mass of a pmf.
    fn mass_tol(len: usize) -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(4.0 * len.max(1) as f64))
    }
}

impl Prob for f32 {}
impl Prob for f64 {}

fn ensure_prob<F: Prob>(p: F, what: &str) -> Result<()> {
    if !(p >= F::zero() && p <= F::one()) {
        return domain(format!("{what} = {p} is not a probability"));
    }
    Ok(())
}

fn plogp<F: Prob>(p: F) -> F {
    if p > F::zero() {
        -p * p.log2()
    } else {
        F::zero()
    }
}

/// `h_b(p) = -p log2 p - (1-p) log2 (1-p)`.
pub fn binary_entropy<F: Prob>(p: F) -> Result<F> {
    ensure_prob(p, "p")?;
    Ok(plogp(p) + plogp(F::one() - p))
}

/// `a * b = a(1-b) + (1-a)b`, the crossover of two cascaded BSCs.
pub fn binary_convolution<F: Prob>(a: F, b: F) -> Result<F> {
    ensure_prob(a, "a")?;
    ensure_prob(b, "b")?;
    Ok(a * (F::one() - b) + (F::one() - a) * b)
}

/// The unique `p` in `[0, 1/2]` with `|h_b(p) - h| <= 1e-10`, by bisection.
pub fn binary_entropy_inverse(h: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return domain(format!("h = {h} outside [0, 1]"));
    }
    if h == 1.0 {
        return Ok(0.5);
    }
    if h == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = binary_entropy(mid)?;
        if (v - h).abs() <= 1e-10 && hi - lo < 1e-12 {
            return Ok(mid);
        }
        if v < h {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * 0.5 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub size: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Self { name: name.into(), size }
    }
}

/// Joint pmf over named finite axes, stored row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabeledJointPmf<F> {
    axes: Vec<Axis>,
    probs: Vec<F>,
}

#[derive(Deserialize)]
struct RawPmf {
    axes: Vec<Axis>,
    probs: Vec<f64>,
}

impl<'de, F: Prob> Deserialize<'de> for LabeledJointPmf<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawPmf::deserialize(d)?;
        let probs = raw.probs.into_iter().map(F::lit).collect();
        Self::new(raw.axes, probs).map_err(serde::de::Error::custom)
    }
}

impl<F: Prob> LabeledJointPmf<F> {
    pub fn new(axes: Vec<Axis>, probs: Vec<F>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for a in &axes {
            if a.size == 0 {
                return schema(format!("axis {} has size 0", a.name));
            }
            if !seen.insert(a.name.clone()) {
                return schema(format!("duplicate axis name {}", a.name));
            }
        }
        if axes.len() > 64 {
            return schema("at most 64 axes are supported");
        }
        let len: usize = axes.iter().map(|a| a.size).product();
        if probs.len() != len {
            return schema(format!("tensor has {} entries, axes need {len}", probs.len()));
        }
        if let Some(bad) = probs.iter().find(|p| !(**p >= F::zero()) || !p.is_finite()) {
            return domain(format!("negative or non-finite probability {bad}"));
        }
        let total: F = probs.iter().copied().sum();
        if (total - F::one()).abs() > F::mass_tol(len) {
            return domain(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { axes, probs })
    }

    /// Build from a function of the index tuple.
    pub fn from_fn(axes: Vec<Axis>, f: impl Fn(&[usize]) -> F) -> Result<Self> {
        let sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let mut probs = Vec::with_capacity(sizes.iter().product());
        for_each_index(&sizes, |idx| probs.push(f(idx)));
        Self::new(axes, probs)
    }

    /// Build from nonnegative weights, normalizing them.
    pub fn from_weights(axes: Vec<Axis>, weights: Vec<F>) -> Result<Self> {
        let total: F = weights.iter().copied().sum();
        if !(total > F::zero()) {
            return domain("weights must have positive total");
        }
        Self::new(axes, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown axis {name}")))
    }

    pub fn has_axis(&self, name: &str) -> bool {
        self.axes.iter().any(|a| a.name == name)
    }

    pub fn axis_size(&self, name: &str) -> Result<usize> {
        Ok(self.axes[self.axis_index(name)?].size)
    }

    /// Bit mask of the named axes.
    pub fn mask<S: AsRef<str>>(&self, names: &[S]) -> Result<u64> {
        let mut m = 0u64;
        for n in names {
            m |= 1u64 << self.axis_index(n.as_ref())?;
        }
        Ok(m)
    }

    /// Visit every `(index tuple, probability)` pair in storage order.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], F)) {
        let mut k = 0;
        for_each_index(&self.sizes(), |idx| {
            f(idx, self.probs[k]);
            k += 1;
        });
    }

    /// Marginal table over the axes in `mask`, in axis order.
    fn marginal_table(&self, mask: u64) -> Vec<F> {
        let sizes = self.sizes();
        let kept: Vec<usize> = (0..sizes.len()).filter(|i| mask >> i & 1 == 1).collect();
        let mut out_stride = vec![0usize; sizes.len()];
        let mut s = 1;
        for &i in kept.iter().rev() {
            out_stride[i] = s;
            s *= sizes[i];
        }
        let mut out = vec![F::zero(); s];
        if kept.len() == sizes.len() {
            out.copy_from_slice(&self.probs);
            return out;
        }
        let mut k = 0;
        let mut pos = 0usize;
        let mut idx = vec![0usize; sizes.len()];
        let n = self.probs.len();
        while k < n {
            out[pos] = out[pos] + self.probs[k];
            k += 1;
            // odometer increment that keeps `pos` in sync
            let mut ax = sizes.len();
            while ax > 0 {
                ax -= 1;
                idx[ax] += 1;
                pos += out_stride[ax];
                if idx[ax] < sizes[ax] {
                    break;
                }
                pos -= out_stride[ax] * sizes[ax];
                idx[ax] = 0;
            }
        }
        out
    }

    pub fn marginal<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let mask = self.mask(names)?;
        let axes = self
            .axes
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, a)| a.clone())
            .collect();
        Ok(Self { axes, probs: self.marginal_table(mask) })
    }

    /// Joint entropy of the axes in `mask`.
    pub fn entropy_mask(&self, mask: u64) -> F {
        if mask == 0 {
            return F::zero();
        }
        self.marginal_table(mask).into_iter().map(plogp).sum()
    }

    pub fn entropy<S: AsRef<str>>(&self, names: &[S]) -> Result<F> {
        Ok(self.entropy_mask(self.mask(names)?))
    }

    /// `H(a | c)`.
    pub fn cond_entropy<S: AsRef<str>>(&self, a: &[S], c: &[S]) -> Result<F> {
        let (ma, mc) = (self.mask(a)?, self.mask(c)?);
        Ok(self.entropy_mask(ma | mc) - self.entropy_mask(mc))
    }

    /// `I(a; b | c)`.
    pub fn cond_mutual_info<S: AsRef<str>>(&self, a: &[S], b: &[S], c: &[S]) -> Result<F> {
        let (ma, mb, mc) = (self.mask(a)?, self.mask(b)?, self.mask(c)?);
        Ok(self.cmi_mask(ma, mb, mc))
    }

    pub fn mutual_info<S: AsRef<str>>(&self, a: &[S], b: &[S]) -> Result<F> {
        Ok(self.cmi_mask(self.mask(a)?, self.mask(b)?, 0))
    }

    pub fn cmi_mask(&self, ma: u64, mb: u64, mc: u64) -> F {
        self.entropy_mask(ma | mc) + self.entropy_mask(mb | mc)
            - self.entropy_mask(ma | mb | mc)
            - self.entropy_mask(mc)
    }

    /// `E[g(index)]`.
    pub fn expect(&self, g: impl Fn(&[usize]) -> F) -> F {
        let mut acc = F::zero();
        self.for_each(|idx, p| {
            if p > F::zero() {
                acc = acc + p * g(idx);
            }
        });
        acc
    }

    /// Append an axis that is a deterministic function of the existing ones.
    pub fn with_derived_axis(
        &self,
        name: &str,
        size: usize,
        f: impl Fn(&[usize]) -> usize,
    ) -> Result<Self> {
        self.with_kernel(&[Axis::new(name, size)], |idx| {
            let mut row = vec![F::zero(); size];
            row[f(idx)] = F::one();
            row
        })
    }

    /// Append new axes drawn from `kernel(existing index)`, which returns a
    /// row-major distribution over the new axes.
    pub fn with_kernel(&self, new_axes: &[Axis], kernel: impl Fn(&[usize]) -> Vec<F>) -> Result<Self> {
        let width: usize = new_axes.iter().map(|a| a.size).product();
        let mut probs = Vec::with_capacity(self.probs.len() * width);
        let mut err = None;
        self.for_each(|idx, p| {
            let row = kernel(idx);
            if row.len() != width && err.is_none() {
                err = Some(format!("kernel row has {} entries, expected {width}", row.len()));
            }
            probs.extend(row.into_iter().map(|q| p * q));
        });
        if let Some(e) = err {
            return schema(e);
        }
        let mut axes = self.axes.clone();
        axes.extend(new_axes.iter().cloned());
        Self::new(axes, probs)
    }

    pub fn to_f64(&self) -> LabeledJointPmf<f64> {
        LabeledJointPmf {
            axes: self.axes.clone(),
            probs: self.probs.iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect(),
        }
    }
}

impl LabeledJointPmf<f64> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pmf serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Call `f` on every index tuple of a mixed-radix space, last digit fastest.
pub fn for_each_index(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; sizes.len()];
    loop {
        f(&idx);
        let mut ax = sizes.len();
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < sizes[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoKind {
    Entropy,
    ConditionalEntropy,
    MutualInfo,
    ConditionalMutualInfo,
    MultiInfo,
}

/// A symbolic information quantity. `groups` holds the target groups followed
/// by the conditioner group for the conditional kinds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoExpr {
    pub kind: InfoKind,
    pub groups: Vec<Vec<String>>,
}

fn owned(g: &[&str]) -> Vec<String> {
    g.iter().map(|s| s.to_string()).collect()
}

impl InfoExpr {
    pub fn h(a: &[&str]) -> Self {
        Self { kind: InfoKind::Entropy, groups: vec![owned(a)] }
    }
    pub fn h_given(a: &[&str], c: &[&str]) -> Self {
        Self { kind: InfoKind::ConditionalEntropy, groups: vec![owned(a), owned(c)] }
    }
    pub fn i(a: &[&str], b: &[&str]) -> Self {
        Self { kind: InfoKind::MutualInfo, groups: vec![owned(a), owned(b)] }
    }
    pub fn i_given(a: &[&str], b: &[&str], c: &[&str]) -> Self {
        Self { kind: InfoKind::ConditionalMutualInfo, groups: vec![owned(a), owned(b), owned(c)] }
    }
    /// `I(a;b;c|d) = I(a;b|d) + I(ab;c|d)`.
    pub fn multi(a: &[&str], b: &[&str], c: &[&str], given: &[&str]) -> Self {
        Self { kind: InfoKind::MultiInfo, groups: vec![owned(a), owned(b), owned(c), owned(given)] }
    }

    fn arity(&self) -> (usize, usize) {
        match self.kind {
            InfoKind::Entropy => (1, 1),
            InfoKind::ConditionalEntropy => (2, 2),
            InfoKind::MutualInfo => (2, 2),
            InfoKind::ConditionalMutualInfo => (3, 3),
            InfoKind::MultiInfo => (3, 4),
        }
    }

    /// Parse `H(A,B|C)`, `I(A;B|C)` or `I(A;B;C|D)`.
    pub fn parse(text: &str) -> Result<Self> {
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Schema(format!("cannot parse information expression {text:?}"));
        let (head, body) = t.split_once('(').ok_or_else(bad)?;
        let body = body.strip_suffix(')').ok_or_else(bad)?;
        let (targets, given) = match body.split_once('|') {
            Some((a, c)) => (a, Some(c)),
            None => (body, None),
        };
        let group = |s: &str| -> Vec<String> {
            s.split(',').filter(|x| !x.is_empty()).map(str::to_string).collect()
        };
        let tg: Vec<Vec<String>> = targets.split(';').map(group).collect();
        if tg.iter().any(|g| g.is_empty()) {
            return Err(bad());
        }
        let mut groups = tg.clone();
        let kind = match (head, tg.len(), given.is_some()) {
            ("H", 1, false) => InfoKind::Entropy,
            ("H", 1, true) => InfoKind::ConditionalEntropy,
            ("I", 2, false) => InfoKind::MutualInfo,
            ("I", 2, true) => InfoKind::ConditionalMutualInfo,
            ("I", 3, _) => InfoKind::MultiInfo,
            _ => return Err(bad()),
        };
        if let Some(c) = given {
            groups.push(group(c));
        } else if kind == InfoKind::MultiInfo {
            groups.push(vec![]);
        }
        Ok(Self { kind, groups })
    }
}

impl fmt::Display for InfoExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = |i: usize| self.groups[i].join(",");
        match self.kind {
            InfoKind::Entropy => write!(f, "H({})", g(0)),
            InfoKind::ConditionalEntropy => write!(f, "H({}|{})", g(0), g(1)),
            InfoKind::MutualInfo => write!(f, "I({};{})", g(0), g(1)),
            InfoKind::ConditionalMutualInfo => write!(f, "I({};{}|{})", g(0), g(1), g(2)),
            InfoKind::MultiInfo if self.groups[3].is_empty() => {
                write!(f, "I({};{};{})", g(0), g(1), g(2))
            }
            InfoKind::MultiInfo => write!(f, "I({};{};{}|{})", g(0), g(1), g(2), g(3)),
        }
    }
}

/// Evaluate `expr` on `pmf`, in bits.
pub fn info_quantity<F: Prob>(pmf: &LabeledJointPmf<F>, expr: &InfoExpr) -> Result<F> {
    let (lo, hi) = expr.arity();
    if expr.groups.len() < lo || expr.groups.len() > hi {
        return schema(format!("{:?} takes {lo}..={hi} groups", expr.kind));
    }
    let m: Vec<u64> = expr.groups.iter().map(|g| pmf.mask(g)).collect::<Result<_>>()?;
    let h = |mask: u64| pmf.entropy_mask(mask);
    Ok(match expr.kind {
        InfoKind::Entropy => h(m[0]),
        InfoKind::ConditionalEntropy => h(m[0] | m[1]) - h(m[1]),
        InfoKind::MutualInfo => pmf.cmi_mask(m[0], m[1], 0),
        InfoKind::ConditionalMutualInfo => pmf.cmi_mask(m[0], m[1], m[2]),
        InfoKind::MultiInfo => {
            let c = m.get(3).copied().unwrap_or(0);
            pmf.cmi_mask(m[0], m[1], c) + pmf.cmi_mask(m[0] | m[1], m[2], c)
        }
    })
}

/// True iff `I(a; b | c) <= tol`. Groups must be pairwise disjoint.
pub fn ci_check<F: Prob, S: AsRef<str>>(
    pmf: &LabeledJointPmf<F>,
    a: &[S],
    b: &[S],
    c: &[S],
    tol: F,
) -> Result<bool> {
    let (ma, mb, mc) = (pmf.mask(a)?, pmf.mask(b)?, pmf.mask(c)?);
    if ma & mb != 0 || ma & mc != 0 || mb & mc != 0 {
        return schema("ci_check groups overlap");
    }
    Ok(pmf.cmi_mask(ma, mb, mc) <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bits(names: &[&str]) -> Vec<Axis> {
        names.iter().map(|n| Axis::new(*n, 2)).collect()
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.5f64).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0f64).unwrap(), 0.0);
        // independent evaluation with natural logs
        let p: f64 = 0.1325;
        let oracle = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()) / 2f64.ln();
        assert_abs_diff_eq!(binary_entropy(p).unwrap(), oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(oracle, 0.5642, epsilon = 1e-4);
        assert!(binary_entropy(1.5f64).is_err());
        assert!(binary_entropy(-0.1f64).is_err());
        assert_abs_diff_eq!(binary_entropy(0.2f32).unwrap(), 0.7219281f32, epsilon = 1e-6);
    }

    #[test]
    fn convolution_values() {
        assert_eq!(binary_convolution(0.5, 0.37).unwrap(), 0.5);
        assert_abs_diff_eq!(binary_convolution(0.125, 0.01).unwrap(), 0.1325, epsilon = 1e-15);
        assert_eq!(binary_convolution(0.2, 0.0).unwrap(), 0.2);
        assert!(binary_convolution(0.2, 1.1).is_err());
    }

    #[test]
    fn inverse_values() {
        assert_eq!(binary_entropy_inverse(1.0).unwrap(), 0.5);
        assert_eq!(binary_entropy_inverse(0.0).unwrap(), 0.0);
        let p = binary_entropy_inverse(0.78213).unwrap();
        assert_abs_diff_eq!(p, 0.2323, epsilon = 1e-4);
        assert!(binary_entropy_inverse(1.2).is_err());
    }

    #[test]
    fn spec_examples() {
        let uni = LabeledJointPmf::from_fn(bits(&["A", "B"]), |_| 0.25f64).unwrap();
        assert_abs_diff_eq!(uni.mutual_info(&["A"], &["B"]).unwrap(), 0.0, epsilon = 1e-15);
        let eq = LabeledJointPmf::from_fn(bits(&["A", "B"]), |i| if i[0] == i[1] { 0.5 } else { 0.0 })
            .unwrap();
        assert_abs_diff_eq!(eq.cond_entropy(&["A"], &["B"]).unwrap(), 0.0, epsilon = 1e-15);
        let xor = uni.with_derived_axis("C", 2, |i| i[0] ^ i[1]).unwrap();
        let e = InfoExpr::multi(&["A"], &["B"], &["C"], &[]);
        assert_abs_diff_eq!(info_quantity(&xor, &e).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ci_examples() {
        let same = LabeledJointPmf::from_fn(bits(&["A", "B", "C"]), |i| {
            if i[0] == i[1] && i[1] == i[2] {
                0.5
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(ci_check(&same, &["A"], &["C"], &["B"], 1e-12).unwrap());
        let indep = LabeledJointPmf::from_fn(bits(&["A", "C"]), |_| 0.25).unwrap();
        assert!(ci_check(&indep, &["A"], &["C"], &[] as &[&str], 1e-12).unwrap());
        assert!(ci_check(&same, &["A"], &["A"], &["B"], 1e-12).is_err());
    }

    #[test]
    fn validation() {
        assert!(LabeledJointPmf::new(bits(&["A", "A"]), vec![0.25f64; 4]).is_err());
        assert!(LabeledJointPmf::new(bits(&["A"]), vec![0.5f64; 3]).is_err());
        assert!(LabeledJointPmf::new(bits(&["A"]), vec![0.6f64, 0.6]).is_err());
        assert!(LabeledJointPmf::new(bits(&["A"]), vec![1.5f64, -0.5]).is_err());
        let p = LabeledJointPmf::new(bits(&["A"]), vec![0.3f64, 0.7]).unwrap();
        assert!(p.entropy(&["Z"]).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let p = LabeledJointPmf::from_weights(
            vec![Axis::new("U", 3), Axis::new("X", 2)],
            vec![0.1, 0.7, 1.3, 0.2, 0.05, 0.9],
        )
        .unwrap();
        let s = p.to_json();
        let q = LabeledJointPmf::from_json(&s).unwrap();
        assert_eq!(p, q);
        assert_eq!(s, q.to_json());
        assert!(s.starts_with(r#"{"axes":[{"name":"U","size":3}"#));
    }

    #[test]
    fn parse_and_display() {
        for s in ["H(A)", "H(A,B|C)", "I(A;B)", "I(A;B|C,D)", "I(A;B;C)", "I(A;B;C|D)"] {
            assert_eq!(InfoExpr::parse(s).unwrap().to_string(), s);
        }
        assert!(InfoExpr::parse("J(A)").is_err());
        assert!(InfoExpr::parse("I(A)").is_err());
    }

    #[test]
    fn marginal_matches_direct_sum() {
        let p = LabeledJointPmf::from_weights(
            vec![Axis::new("A", 2), Axis::new("B", 3), Axis::new("C", 2)],
            (1..=12).map(|k| k as f64).collect(),
        )
        .unwrap();
        let m = p.marginal(&["A", "C"]).unwrap();
        let mut direct = [0.0; 4];
        p.for_each(|i, q| direct[2 * i[0] + i[2]] += q);
        for (a, b) in m.probs().iter().zip(direct) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }
}
