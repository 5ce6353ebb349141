//! Three-receiver discrete memoryless broadcast channels.

use serde::{Deserialize, Serialize};

use crate::entropy::{binary_convolution, Axis, LabeledJointPmf};
use crate::error::{domain, schema, Result};
use crate::rng::RngKey;

/// `W(y1, y2, y3 | x)` with a per-input cost. `transition` is row-major over
/// `(x, y1, y2, y3)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BroadcastChannel {
    pub input_size: usize,
    pub output_sizes: [usize; 3],
    pub transition: Vec<f64>,
    pub cost: Vec<f64>,
    /// Optional product structure of the input: `factorization[c][x]` is the
    /// value of coordinate `c` of input `x`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factorization: Option<[Vec<usize>; 3]>,
}

impl BroadcastChannel {
    pub fn new(
        input_size: usize,
        output_sizes: [usize; 3],
        transition: Vec<f64>,
        cost: Vec<f64>,
    ) -> Result<Self> {
        let ch = Self { input_size, output_sizes, transition, cost, factorization: None };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_sizes.contains(&0) {
            return schema("alphabet sizes must be positive");
        }
        if self.transition.len() != self.input_size * self.row_len() {
            return schema(format!(
                "transition has {} entries, expected {}",
                self.transition.len(),
                self.input_size * self.row_len()
            ));
        }
        if self.cost.len() != self.input_size {
            return schema("cost vector length must equal the input alphabet size");
        }
        if self.cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return domain("costs must be finite and nonnegative");
        }
        for x in 0..self.input_size {
            let row = self.row(x);
            if row.iter().any(|p| !(*p >= 0.0)) {
                return domain(format!("negative transition entry for input {x}"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return domain(format!("transition slice for input {x} sums to {s}"));
            }
        }
        if let Some(f) = &self.factorization {
            check_factorization(self.input_size, f)?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ch: Self = serde_json::from_str(s)?;
        ch.validate()?;
        Ok(ch)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("channel serializes")
    }

    fn row_len(&self) -> usize {
        self.output_sizes.iter().product()
    }

    /// `W(. | x)` over `(y1, y2, y3)`.
    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.row_len();
        &self.transition[x * n..(x + 1) * n]
    }

    pub fn prob(&self, x: usize, y: [usize; 3]) -> f64 {
        let [_, s2, s3] = self.output_sizes;
        self.row(x)[(y[0] * s2 + y[1]) * s3 + y[2]]
    }

    /// The marginal channel to receiver `k` (0-based), as `w[x][y]`.
    ///
    /// Terms are summed in sorted order, so two inputs whose slices hold the
    /// same multiset of entries get bit-identical marginals.
    pub fn marginal(&self, k: usize) -> Vec<Vec<f64>> {
        let [s1, s2, s3] = self.output_sizes;
        (0..self.input_size)
            .map(|x| {
                let mut terms = vec![Vec::new(); self.output_sizes[k]];
                for y1 in 0..s1 {
                    for y2 in 0..s2 {
                        for y3 in 0..s3 {
                            terms[[y1, y2, y3][k]].push(self.prob(x, [y1, y2, y3]));
                        }
                    }
                }
                terms
                    .into_iter()
                    .map(|mut t| {
                        t.sort_by(f64::total_cmp);
                        t.into_iter().sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Extend a pmf holding an input axis `x_axis` with axes `Y1, Y2, Y3`.
    pub fn attach_outputs(&self, joint: &LabeledJointPmf<f64>, x_axis: &str) -> Result<LabeledJointPmf<f64>> {
        let xi = joint.axis_index(x_axis)?;
        if joint.axes()[xi].size != self.input_size {
            return schema(format!(
                "axis {x_axis} has size {}, channel input has {}",
                joint.axes()[xi].size,
                self.input_size
            ));
        }
        let axes: Vec<Axis> =
            (0..3).map(|k| Axis::new(format!("Y{}", k + 1), self.output_sizes[k])).collect();
        joint.with_kernel(&axes, |idx| self.row(idx[xi]).to_vec())
    }

    /// Draw `(y1, y2, y3)` from `W(. | x)` using the addressed random key.
    pub fn sample(&self, x: usize, key: RngKey) -> Result<[usize; 3]> {
        if x >= self.input_size {
            return domain(format!("input {x} out of range 0..{}", self.input_size));
        }
        let u = key.uniform();
        let row = self.row(x);
        let mut acc = 0.0;
        let mut last = 0;
        for (j, p) in row.iter().enumerate() {
            if *p > 0.0 {
                last = j;
            }
            acc += p;
            if u < acc {
                return Ok(self.unflatten(j));
            }
        }
        Ok(self.unflatten(last))
    }

    fn unflatten(&self, j: usize) -> [usize; 3] {
        let [_, s2, s3] = self.output_sizes;
        [j / (s2 * s3), (j / s3) % s2, j % s3]
    }
}

fn check_factorization(input_size: usize, f: &[Vec<usize>; 3]) -> Result<()> {
    if f.iter().any(|c| c.len() != input_size) {
        return schema("each factorization map must list one coordinate per input symbol");
    }
    let ranges: Vec<usize> = f.iter().map(|c| c.iter().max().map_or(0, |m| m + 1)).collect();
    if ranges.iter().product::<usize>() != input_size {
        return schema(format!(
            "factorization ranges {ranges:?} do not multiply to input size {input_size}"
        ));
    }
    let mut seen = vec![false; input_size];
    for x in 0..input_size {
        let k = (f[0][x] * ranges[1] + f[1][x]) * ranges[2] + f[2][x];
        if std::mem::replace(&mut seen[k], true) {
            return schema("factorization maps two inputs to the same coordinates");
        }
    }
    Ok(())
}

/// The binary factorization used by Example 1: `x = 4 x1 + 2 x2 + x3`.
pub fn example1_factorization() -> [Vec<usize>; 3] {
    [
        (0..8).map(|x| x >> 2 & 1).collect(),
        (0..8).map(|x| x >> 1 & 1).collect(),
        (0..8).map(|x| x & 1).collect(),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub tau: f64,
}

impl Example1Params {
    pub fn new(tau: f64, delta1: f64, delta2: f64, delta3: f64) -> Result<Self> {
        let p = Self { delta1, delta2, delta3, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
            ("tau", self.tau),
        ] {
            open_half(name, v)?;
        }
        Ok(())
    }
}

/// Reject values outside the open interval `(0, 1/2)`.
pub fn open_half(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 0.5) {
        return domain(format!("{name} = {v} must lie in (0, 0.5)"));
    }
    Ok(())
}

fn bsc(delta: f64, input: usize, output: usize) -> f64 {
    if input == output {
        1.0 - delta
    } else {
        delta
    }
}

/// Example 1: `Y1 = X1+X2+X3+N1`, `Y2 = X2+N2`, `Y3 = X3+N3` over GF(2), with
/// cost 1 exactly when `x1 = 1`.
pub fn make_example1(params: Example1Params) -> Result<BroadcastChannel> {
    params.validate()?;
    build_example1(params.delta1, params.delta2, params.delta3)
}

/// Example-1 structure without the open-interval check; the simulator uses it
/// for noiseless and boundary experiments.
pub fn build_example1(d1: f64, d2: f64, d3: f64) -> Result<BroadcastChannel> {
    for (n, d) in [("delta1", d1), ("delta2", d2), ("delta3", d3)] {
        if !(0.0..=1.0).contains(&d) {
            return domain(format!("{n} = {d} is not a probability"));
        }
    }
    let mut transition = Vec::with_capacity(64);
    for x in 0..8usize {
        let (x1, x2, x3) = (x >> 2 & 1, x >> 1 & 1, x & 1);
        for y1 in 0..2 {
            for y2 in 0..2 {
                for y3 in 0..2 {
                    transition.push(bsc(d1, x1 ^ x2 ^ x3, y1) * bsc(d2, x2, y2) * bsc(d3, x3, y3));
                }
            }
        }
    }
    let cost = (0..8).map(|x| (x >> 2 & 1) as f64).collect();
    let mut ch = BroadcastChannel::new(8, [2, 2, 2], transition, cost)?;
    ch.factorization = Some(example1_factorization());
    Ok(ch)
}

/// True iff the `Y2` marginal depends on the input only through coordinate 2
/// and the `Y3` marginal only through coordinate 3, entrywise within `tol`.
pub fn is_three_to_one(channel: &BroadcastChannel, factorization: &[Vec<usize>; 3], tol: f64) -> Result<bool> {
    check_factorization(channel.input_size, factorization)?;
    for k in [1usize, 2] {
        let w = channel.marginal(k);
        let coord = &factorization[k];
        for x in 0..channel.input_size {
            for x2 in 0..x {
                if coord[x] != coord[x2] {
                    continue;
                }
                if w[x].iter().zip(&w[x2]).any(|(a, b)| (a - b).abs() > tol) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Crossover of the effective BSC seen by receiver 1 when `X1 ~ Bern(tau)`.
pub fn example1_effective_crossover(params: &Example1Params) -> Result<f64> {
    binary_convolution(params.tau, params.delta1)
}
