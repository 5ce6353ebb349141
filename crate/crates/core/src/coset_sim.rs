//! Nested linear codes over GF(2) and a Monte Carlo run of the linear scheme
//! on the Example-1 channel.
//!
//! Users 2 and 3 send codewords of coset codes whose generators share a row
//! prefix, so every sum of their codewords lies in one coset of the larger
//! code. Receiver 1 decodes that sum jointly with its own codeword and never
//! resolves the two interfering messages separately.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::RngKey;

/// Longest supported blocklength: codewords are packed into a `u64`.
pub const MAX_N: usize = 64;
/// Default bound on the elements enumerated by any one search.
pub const DEFAULT_CAP: u64 = 1 << 20;
/// Attempts at drawing a full-rank generator before keeping a deficient one.
pub const MAX_REGENERATIONS: usize = 16;

/// Binary matrix with each row packed into the low `cols` bits of a `u64`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GF2Matrix {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<u64>,
}

fn low_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl GF2Matrix {
    pub fn new(cols: usize, bits: Vec<u64>) -> Result<Self> {
        if cols == 0 || cols > MAX_N {
            return domain(format!("column count {cols} must lie in 1..={MAX_N}"));
        }
        if bits.iter().any(|r| r & !low_mask(cols) != 0) {
            return domain("row has bits beyond the column count");
        }
        Ok(Self { rows: bits.len(), cols, bits })
    }

    pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Self> {
        let bits = (0..rows).map(|_| rng.gen::<u64>() & low_mask(cols)).collect();
        Self::new(cols, bits)
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r] >> c & 1 == 1
    }

    /// First `k` rows.
    pub fn prefix(&self, k: usize) -> Self {
        Self { rows: k, cols: self.cols, bits: self.bits[..k].to_vec() }
    }

    /// `m * G` for the message bits `m` (bit `i` selects row `i`).
    pub fn encode(&self, m: u64) -> u64 {
        self.bits.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).fold(0, |acc, (_, r)| acc ^ r)
    }

    /// Reduced basis of the row space, one pivot bit per vector.
    pub fn echelon(&self) -> Vec<u64> {
        let mut basis: Vec<u64> = Vec::new();
        for &row in &self.bits {
            let mut v = row;
            for &b in &basis {
                v = v.min(v ^ b);
            }
            if v != 0 {
                basis.push(v);
                basis.sort_unstable_by(|a, b| b.cmp(a));
            }
        }
        basis
    }

    pub fn rank(&self) -> usize {
        self.echelon().len()
    }

    pub fn in_row_space(&self, v: u64) -> bool {
        reduce(&self.echelon(), v) == 0
    }
}

/// Reduce `v` against a basis sorted by decreasing leading bit.
fn reduce(basis: &[u64], mut v: u64) -> u64 {
    for &b in basis {
        v = v.min(v ^ b);
    }
    v
}

/// A coset code `bias + rowspace(outer)` whose generator starts with the
/// rows of `inner`, and whose message indices are split into `2^bin_bits`
/// equal bins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedCosetCode {
    pub inner_generator: GF2Matrix,
    pub outer_generator: GF2Matrix,
    pub bias: u64,
    pub bin_bits: usize,
    /// `bins[index]` is the bin of message index `index`.
    pub bins: Vec<u32>,
}

impl NestedCosetCode {
    pub fn new(inner: GF2Matrix, outer: GF2Matrix, bias: u64, bin_bits: usize, bins: Vec<u32>) -> Result<Self> {
        let c = Self { inner_generator: inner, outer_generator: outer, bias, bin_bits, bins };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (i, o) = (&self.inner_generator, &self.outer_generator);
        if i.cols != o.cols || i.rows > o.rows || o.bits[..i.rows] != i.bits[..] {
            return domain("the outer generator must start with the inner generator's rows");
        }
        if self.bias & !low_mask(o.cols) != 0 {
            return domain("bias has bits beyond the blocklength");
        }
        if self.bin_bits > o.rows || self.bins.len() != 1 << o.rows {
            return domain("bins must cover every message index of the outer code");
        }
        let mut count = vec![0usize; 1 << self.bin_bits];
        for &b in &self.bins {
            *count.get_mut(b as usize).ok_or_else(|| Error::Domain(format!("bin {b} out of range")))? += 1;
        }
        if count.iter().any(|&c| c != 1 << (o.rows - self.bin_bits)) {
            return domain("bins must have equal sizes");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.outer_generator.cols
    }

    pub fn k(&self) -> usize {
        self.outer_generator.rows
    }

    pub fn codeword(&self, index: u64) -> u64 {
        self.bias ^ self.outer_generator.encode(index)
    }

    pub fn bin(&self, index: u64) -> u32 {
        self.bins[index as usize]
    }

    /// Message indices of one bin, in increasing order.
    pub fn bin_members(&self, bin: u32) -> Vec<u64> {
        members(&self.bins, bin)
    }

    /// Reassign the bins with a uniformly random balanced partition.
    pub fn rebin(&mut self, bin_bits: usize, rng: &mut impl Rng) -> Result<()> {
        if bin_bits > self.k() {
            return domain(format!("{bin_bits} bin bits exceed the code dimension {}", self.k()));
        }
        self.bins = balanced_bins(self.k(), bin_bits, rng);
        self.bin_bits = bin_bits;
        Ok(())
    }
}

fn members(bins: &[u32], bin: u32) -> Vec<u64> {
    (0..bins.len() as u64).filter(|&i| bins[i as usize] == bin).collect()
}

fn balanced_bins(k: usize, bin_bits: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..1u32 << k).collect();
    perm.shuffle(rng);
    perm.into_iter().map(|p| p >> (k - bin_bits)).collect()
}

/// The two codes of users 2 and 3 and how many generators were redrawn for
/// rank deficiency.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedPair {
    pub code2: NestedCosetCode,
    pub code3: NestedCosetCode,
    pub regenerations: usize,
}

/// Draw a uniform `k2 x n` generator, take its first `k3` rows for user 3,
/// and draw independent uniform biases. Bins default to one index each.
pub fn build_nested_codes(n: usize, k2: usize, k3: usize, seed: u64) -> Result<NestedPair> {
    build_with(n, k2, k3, &mut RngKey::new(seed, 0, 0).rng())
}

fn build_with(n: usize, k2: usize, k3: usize, rng: &mut impl Rng) -> Result<NestedPair> {
    if !(k3 <= k2 && k2 <= n) || n == 0 || n > MAX_N || k2 > 31 {
        return domain(format!("need k3 <= k2 <= n <= {MAX_N} and k2 <= 31; got n={n}, k2={k2}, k3={k3}"));
    }
    let mut regenerations = 0;
    let mut g2 = GF2Matrix::random(k2, n, rng)?;
    while g2.rank() < k2 && regenerations < MAX_REGENERATIONS {
        g2 = GF2Matrix::random(k2, n, rng)?;
        regenerations += 1;
    }
    let g3 = g2.prefix(k3);
    let bias2 = rng.gen::<u64>() & low_mask(n);
    let bias3 = rng.gen::<u64>() & low_mask(n);
    let bins2 = balanced_bins(k2, k2, rng);
    let bins3 = balanced_bins(k3, k3, rng);
    Ok(NestedPair {
        code2: NestedCosetCode::new(g3.clone(), g2, bias2, k2, bins2)?,
        code3: NestedCosetCode::new(g3.clone(), g3, bias3, k3, bins3)?,
        regenerations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SumClosure {
    pub holds: bool,
    pub sum_size: u64,
}

/// Enumerate every `c2 + c3` and check it lies in `bias2 + bias3 +
/// rowspace(larger generator)`.
pub fn sum_closure_check(code2: &NestedCosetCode, code3: &NestedCosetCode, cap: u64) -> Result<SumClosure> {
    if code2.n() != code3.n() {
        return domain("codes must share the blocklength");
    }
    let pairs = 1u64.checked_shl((code2.k() + code3.k()) as u32).unwrap_or(u64::MAX);
    if pairs > cap {
        return Err(Error::Cap(format!("{pairs} codeword pairs exceed the cap {cap}")));
    }
    let big = if code2.k() >= code3.k() { code2 } else { code3 };
    let basis = big.outer_generator.echelon();
    let shift = code2.bias ^ code3.bias;
    let mut sums = HashSet::new();
    let mut holds = true;
    for a in 0..1u64 << code2.k() {
        let c2 = code2.codeword(a);
        for b in 0..1u64 << code3.k() {
            let s = c2 ^ code3.codeword(b);
            holds &= reduce(&basis, s ^ shift) == 0;
            sums.insert(s);
        }
    }
    Ok(SumClosure { holds, sum_size: sums.len() as u64 })
}

/// Simulation parameters; also the JSON config schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Dimension of user 1's codebook: it holds `2^k1` codewords.
    pub k1: usize,
    pub k2: usize,
    pub k3: usize,
    /// Message bits per user; user `j` sends `bin_bits[j] / n` bits per use.
    pub bin_bits: [usize; 3],
    /// User-1 codewords have weight `floor(tau_weight * n)`.
    pub tau_weight: f64,
    pub deltas: [f64; 3],
    pub trials: u64,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub cap: u64,
}

fn default_cap() -> u64 {
    DEFAULT_CAP
}

impl SimConfig {
    /// Rate `k / n` for users 2, 3 and `k1 / n` for user 1, no binning.
    pub fn example1(n: usize, k: usize, k1: usize, deltas: [f64; 3], tau: f64, trials: u64, seed: u64) -> Self {
        Self { n, k1, k2: k, k3: k, bin_bits: [k1, k, k], tau_weight: tau, deltas, trials, seed, cap: DEFAULT_CAP }
    }

    pub fn weight(&self) -> usize {
        (self.tau_weight * self.n as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k1, k2, k3) = (self.n, self.k1, self.k2, self.k3);
        if n == 0 || n > MAX_N || !(k3 <= k2 && k2 <= n) || k2 > 31 {
            return domain(format!("need k3 <= k2 <= n <= {MAX_N}; got n={n}, k2={k2}, k3={k3}"));
        }
        for (j, (&b, k)) in self.bin_bits.iter().zip([k1, k2, k3]).enumerate() {
            if b > k {
                return domain(format!("user {}: {b} message bits exceed dimension {k}", j + 1));
            }
        }
        if self.trials == 0 {
            return domain("trials must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.tau_weight) {
            return domain("tau_weight must lie in [0, 1]");
        }
        if self.deltas.iter().any(|d| !(0.0..=0.5).contains(d)) {
            return domain("crossover probabilities must lie in [0, 0.5]");
        }
        if binomial(n, self.weight()) < (1u128 << k1) {
            return domain(format!("fewer than 2^{k1} words of length {n} have weight {}", self.weight()));
        }
        let searches = [1u64 << k2, 1 << k3, (1u64 << k2).saturating_mul(1 << k1)];
        if let Some(s) = searches.iter().find(|&&s| s > self.cap) {
            return Err(Error::Cap(format!("decoder search of {s} elements exceeds the cap {}", self.cap)));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Block errors of one user with a 95% Wilson interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserStats {
    pub user: usize,
    pub trials: u64,
    pub errors: u64,
    pub rate_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub n: usize,
}

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// A BSC noise pattern on `n` bits.
pub fn bsc_noise(n: usize, delta: f64, rng: &mut impl Rng) -> u64 {
    (0..n).filter(|_| rng.gen::<f64>() < delta).fold(0, |acc, i| acc | 1 << i)
}

/// `count` distinct words of length `n` and weight `w`.
fn constant_weight_codebook(n: usize, w: usize, count: usize, rng: &mut impl Rng) -> Vec<u64> {
    let mut seen = HashSet::new();
    let mut positions: Vec<usize> = (0..n).collect();
    let mut book = Vec::with_capacity(count);
    while book.len() < count {
        positions.shuffle(rng);
        let word = positions[..w].iter().fold(0u64, |acc, &i| acc | 1 << i);
        if seen.insert(word) {
            book.push(word);
        }
    }
    book
}

/// Index minimizing `dist`, ties broken uniformly at random.
fn argmin(count: u64, rng: &mut impl Rng, mut dist: impl FnMut(u64) -> u32) -> u64 {
    let (mut best, mut best_d, mut ties) = (0, u32::MAX, 0u32);
    for i in 0..count {
        let d = dist(i);
        if d < best_d {
            (best, best_d, ties) = (i, d, 1);
        } else if d == best_d {
            ties += 1;
            if rng.gen_range(0..ties) == 0 {
                best = i;
            }
        }
    }
    best
}

/// Error indicators of users 1, 2, 3 in one trial.
fn trial(cfg: &SimConfig, t: u64) -> Result<[bool; 3]> {
    let mut rng = RngKey::new(cfg.seed, t, 0).rng();
    // a fresh code from the ensemble every trial
    let mut pair = build_with(cfg.n, cfg.k2, cfg.k3, &mut rng)?;
    pair.code2.rebin(cfg.bin_bits[1], &mut rng)?;
    pair.code3.rebin(cfg.bin_bits[2], &mut rng)?;
    let book1 = constant_weight_codebook(cfg.n, cfg.weight(), 1 << cfg.k1, &mut rng);
    let bins1 = balanced_bins(cfg.k1, cfg.bin_bits[0], &mut rng);

    // messages are bins; the encoder picks an index inside each bin
    let msg = [0, 1, 2].map(|j| rng.gen_range(0..1u32 << cfg.bin_bits[j]));
    let mut pick = |bins: &[u32], b: u32| *members(bins, b).choose(&mut rng).expect("bins are nonempty");
    let (i1, i2, i3) = (pick(&bins1, msg[0]), pick(&pair.code2.bins, msg[1]), pick(&pair.code3.bins, msg[2]));
    let (x1, x2, x3) = (book1[i1 as usize], pair.code2.codeword(i2), pair.code3.codeword(i3));

    let y1 = x1 ^ x2 ^ x3 ^ bsc_noise(cfg.n, cfg.deltas[0], &mut rng);
    let y2 = x2 ^ bsc_noise(cfg.n, cfg.deltas[1], &mut rng);
    let y3 = x3 ^ bsc_noise(cfg.n, cfg.deltas[2], &mut rng);

    let d2 = argmin(1 << cfg.k2, &mut rng, |i| (pair.code2.codeword(i) ^ y2).count_ones());
    let d3 = argmin(1 << cfg.k3, &mut rng, |i| (pair.code3.codeword(i) ^ y3).count_ones());
    // receiver 1: joint search over (sum codeword, own codeword); the sums
    // form the coset bias2 + bias3 + rowspace(G2)
    let shift = pair.code2.bias ^ pair.code3.bias;
    let g2 = &pair.code2.outer_generator;
    let m1 = 1u64 << cfg.k1;
    let joint = argmin((1u64 << cfg.k2) * m1, &mut rng, |i| {
        (shift ^ g2.encode(i / m1) ^ book1[(i % m1) as usize] ^ y1).count_ones()
    });
    let d1 = joint % m1;
    Ok([
        bins1[d1 as usize] != msg[0],
        pair.code2.bin(d2) != msg[1],
        pair.code3.bin(d3) != msg[2],
    ])
}

/// Monte Carlo block-error rates of the three users.
pub fn simulate_example1(cfg: &SimConfig) -> Result<Vec<UserStats>> {
    cfg.validate()?;
    let errors = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial(cfg, t).map(|e| e.map(u64::from)))
        .try_reduce(|| [0u64; 3], |a, b| Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]]))?;
    Ok((0..3)
        .map(|j| {
            let (lo, hi) = wilson(errors[j], cfg.trials, Z95);
            UserStats {
                user: j + 1,
                trials: cfg.trials,
                errors: errors[j],
                rate_estimate: errors[j] as f64 / cfg.trials as f64,
                ci_low: lo,
                ci_high: hi,
                seed: cfg.seed,
                n: cfg.n,
            }
        })
        .collect())
}

/// CSV with columns `user, trials, errors, rate_estimate, ci_low, ci_high, seed, n`.
pub fn stats_csv(stats: &[UserStats]) -> String {
    let mut out = String::from("user,trials,errors,rate_estimate,ci_low,ci_high,seed,n\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{:?},{:?},{:?},{},{}\n",
            s.user, s.trials, s.errors, s.rate_estimate, s.ci_low, s.ci_high, s.seed, s.n
        ));
    }
    out
}
