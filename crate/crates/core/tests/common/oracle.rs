//! Independent exact oracle for small linear systems: enumerate candidate
//! vertices of a pointed polyhedron (all variables nonnegative).

#![allow(dead_code)]

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

pub type Q = Ratio<i128>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct SmallSystem {
    pub n: usize,
    pub rows: Vec<(Vec<i64>, Rel, Q)>,
}

impl SmallSystem {
    fn holds(&self, x: &[Q]) -> bool {
        x.iter().all(|v| !v.is_negative())
            && self.rows.iter().all(|(a, rel, b)| {
                let lhs: Q = a.iter().zip(x).map(|(c, v)| Q::from(*c as i128) * v).sum();
                match rel {
                    Rel::Le => lhs <= *b,
                    Rel::Ge => lhs >= *b,
                    Rel::Eq => lhs == *b,
                }
            })
    }

    /// Exact feasibility. A nonempty pointed polyhedron has a vertex, which is
    /// the unique solution of some `n` active constraints.
    pub fn feasible(&self) -> bool {
        let mut planes: Vec<(Vec<Q>, Q)> = Vec::new();
        for (a, _, b) in &self.rows {
            planes.push((a.iter().map(|c| Q::from(*c as i128)).collect(), *b));
        }
        for i in 0..self.n {
            let mut e = vec![Q::zero(); self.n];
            e[i] = Q::one();
            planes.push((e, Q::zero()));
        }
        let mut pick = Vec::with_capacity(self.n);
        self.search(&planes, 0, &mut pick)
    }

    fn search(&self, planes: &[(Vec<Q>, Q)], start: usize, pick: &mut Vec<usize>) -> bool {
        if pick.len() == self.n {
            return match solve(planes, pick, self.n) {
                Some(x) => self.holds(&x),
                None => false,
            };
        }
        for k in start..planes.len() {
            pick.push(k);
            if self.search(planes, k + 1, pick) {
                return true;
            }
            pick.pop();
        }
        false
    }
}

fn solve(planes: &[(Vec<Q>, Q)], pick: &[usize], n: usize) -> Option<Vec<Q>> {
    let mut m: Vec<Vec<Q>> = pick
        .iter()
        .map(|&k| {
            let mut row = planes[k].0.clone();
            row.push(planes[k].1);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let p = m[col][col];
        for c in col..=n {
            m[col][c] /= p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col];
                for c in col..=n {
                    let d = m[col][c] * f;
                    m[r][c] -= d;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n]).collect())
}
