//! Redundancy test by exact simplex on the combination multipliers.
//!
//! A row `a x <= b` is implied by rows `a_i x <= b_i` when some `mu >= 0`
//! has `sum mu_i a_i = a` and `sum mu_i b_i <= b`. The multiplier polytope
//! only involves coefficients, so the tableau is exact; constants enter
//! through the objective alone.

use num_rational::Ratio;
use num_traits::{CheckedDiv, CheckedMul, CheckedSub, One, Signed, Zero};

use super::Scalars;

/// Tableau entries. Coefficients are small integers, so `i128` ratios
/// rarely overflow; when they do the test gives up and the row is kept.
pub(super) type Q = Ratio<i128>;

pub(super) enum Combination<C> {
    /// No nonnegative combination reproduces the target, or the search
    /// gave up on overflow.
    None,
    /// Smallest constant over the combinations found.
    Cheapest(C),
    /// A combination with zero coefficients and this negative constant;
    /// the rows are infeasible.
    Contradiction(C),
}

/// Smallest `sum mu_i (b_i + eps)` over `mu >= 0` with `sum mu_i a_i = target`.
pub(super) fn cheapest_combination<S: Scalars>(
    rows: &[(&[S::Coef], &S::Const)],
    target: &[S::Coef],
    eps: &S::Const,
) -> Combination<S::Const> {
    search::<S>(rows, target, eps).unwrap_or(Combination::None)
}

fn search<S: Scalars>(
    rows: &[(&[S::Coef], &S::Const)],
    target: &[S::Coef],
    eps: &S::Const,
) -> Option<Combination<S::Const>> {
    let n = target.len();
    let m = rows.len();
    let cols: Vec<usize> =
        (0..n).filter(|&j| !target[j].is_zero() || rows.iter().any(|(a, _)| !a[j].is_zero())).collect();
    let k = cols.len();
    // columns 0..m are multipliers, m..m+k artificials
    let mut t: Vec<Vec<Q>> = Vec::with_capacity(k);
    let mut rhs: Vec<Q> = Vec::with_capacity(k);
    for (r, &j) in cols.iter().enumerate() {
        let mut line = rows.iter().map(|(a, _)| S::coef_small(&a[j])).collect::<Option<Vec<Q>>>()?;
        let mut v = S::coef_small(&target[j])?;
        if v.is_negative() {
            line.iter_mut().for_each(|x| *x = -*x);
            v = -v;
        }
        line.extend((0..k).map(|i| if i == r { Q::one() } else { Q::zero() }));
        t.push(line);
        rhs.push(v);
    }
    let mut tab = Tableau { t, rhs, basis: (m..m + k).collect() };

    // phase 1: drive the artificials to zero; reduced costs start at
    // minus the column sums over the artificial rows
    let mut d: Vec<Q> = vec![Q::zero(); m + k];
    for line in &tab.t {
        for c in 0..m {
            d[c] = d[c].checked_sub(&line[c])?;
        }
    }
    while let Some(c) = (0..m + k).find(|&c| d[c].is_negative()) {
        let r = tab.ratio(c)?.expect("phase one is bounded");
        tab.pivot(r, c)?;
        let dc = d[c];
        for (dj, pj) in d.iter_mut().zip(&tab.t[r]) {
            if !pj.is_zero() {
                *dj = dj.checked_sub(&dc.checked_mul(pj)?)?;
            }
        }
    }
    if tab.basis.iter().zip(&tab.rhs).any(|(&b, v)| b >= m && !v.is_zero()) {
        return Some(Combination::None);
    }
    // degenerate artificials leave the basis or take their row with them
    let mut r = 0;
    while r < tab.basis.len() {
        if tab.basis[r] < m {
            r += 1;
            continue;
        }
        match (0..m).find(|&c| !tab.t[r][c].is_zero()) {
            Some(c) => {
                tab.pivot(r, c)?;
                r += 1;
            }
            None => {
                tab.t.remove(r);
                tab.rhs.remove(r);
                tab.basis.remove(r);
            }
        }
    }

    // phase 2 over the multipliers only, Bland's rule on the real costs;
    // each row is loosened by eps so round-off in the constants cannot pose
    // as a contradiction
    let costs: Vec<S::Const> = rows.iter().map(|(_, b)| (*b).clone() + eps.clone()).collect();
    let mut d: Vec<S::Const> = (0..m)
        .map(|c| {
            tab.basis.iter().zip(&tab.t).fold(costs[c].clone(), |acc, (&b, line)| {
                if line[c].is_zero() {
                    acc
                } else {
                    acc - S::scale_small(&costs[b], &line[c])
                }
            })
        })
        .collect();
    let neg_eps = -eps.clone();
    // any basic solution is a valid certificate, so a cap only costs tightness
    for _ in 0..64 * (m + k) {
        let Some(c) = (0..m).find(|&c| !tab.basis.contains(&c) && d[c] < neg_eps) else { break };
        let Some(r) = tab.ratio(c)? else {
            // the ray raising column c is a combination with zero coefficients
            return Some(Combination::Contradiction(d[c].clone()));
        };
        tab.pivot(r, c)?;
        let dc = d[c].clone();
        for (dj, pj) in d.iter_mut().zip(&tab.t[r]) {
            if !pj.is_zero() {
                *dj = dj.clone() - S::scale_small(&dc, pj);
            }
        }
    }
    let value = tab.basis.iter().zip(&tab.rhs).fold(S::Const::zero(), |acc, (&b, v)| acc + S::scale_small(&costs[b], v));
    Some(Combination::Cheapest(value))
}

struct Tableau {
    t: Vec<Vec<Q>>,
    rhs: Vec<Q>,
    basis: Vec<usize>,
}

impl Tableau {
    /// Leaving row for entering column `c`; smallest ratio, ties broken by
    /// the lowest basic index. `Some(None)` when the column is unbounded.
    fn ratio(&self, c: usize) -> Option<Option<usize>> {
        let mut best: Option<(usize, Q)> = None;
        for r in 0..self.t.len() {
            let a = &self.t[r][c];
            if !a.is_positive() {
                continue;
            }
            let q = self.rhs[r].checked_div(a)?;
            let better = match &best {
                None => true,
                Some((br, bq)) => q < *bq || (q == *bq && self.basis[r] < self.basis[*br]),
            };
            if better {
                best = Some((r, q));
            }
        }
        Some(best.map(|(r, _)| r))
    }

    fn pivot(&mut self, r: usize, c: usize) -> Option<()> {
        let p = self.t[r][c];
        if !p.is_one() {
            for x in self.t[r].iter_mut() {
                *x = x.checked_div(&p)?;
            }
            self.rhs[r] = self.rhs[r].checked_div(&p)?;
        }
        let prow = self.t[r].clone();
        let prhs = self.rhs[r];
        for i in 0..self.t.len() {
            if i == r || self.t[i][c].is_zero() {
                continue;
            }
            let f = self.t[i][c];
            for (x, y) in self.t[i].iter_mut().zip(&prow) {
                if !y.is_zero() {
                    *x = x.checked_sub(&f.checked_mul(y)?)?;
                }
            }
            self.rhs[i] = self.rhs[i].checked_sub(&f.checked_mul(&prhs)?)?;
        }
        self.basis[r] = c;
        Some(())
    }
}
