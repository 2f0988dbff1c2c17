//! Bounded-jump random walks on the integers.

use crate::error::{Error, Result};
use crate::rng::{self, Tag};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

/// Largest number of increment windows that may be enumerated (5^12).
pub const WINDOW_CEILING: u64 = 244_140_625;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(i64, f64)>", into = "Vec<(i64, f64)>")]
pub struct WalkKernel {
    offsets: Vec<i64>,
    probs: Vec<f64>,
}

impl TryFrom<Vec<(i64, f64)>> for WalkKernel {
    type Error = Error;
    fn try_from(v: Vec<(i64, f64)>) -> Result<Self> {
        let (o, p): (Vec<i64>, Vec<f64>) = v.into_iter().unzip();
        validate_kernel(&o, &p)
    }
}

impl From<WalkKernel> for Vec<(i64, f64)> {
    fn from(k: WalkKernel) -> Self {
        k.offsets.into_iter().zip(k.probs).collect()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Accept a kernel iff it is a probability vector with mean 0, variance 1 and
/// aperiodic support.
pub fn validate_kernel(offsets: &[i64], probs: &[f64]) -> Result<WalkKernel> {
    if offsets.is_empty() || offsets.len() != probs.len() {
        return Err(Error::Walk("offsets and probabilities must be nonempty and of equal length".into()));
    }
    let mut pairs: Vec<(i64, f64)> = offsets.iter().cloned().zip(probs.iter().cloned()).collect();
    pairs.sort_by_key(|p| p.0);
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Walk("repeated offset".into()));
    }
    if pairs.iter().any(|p| !(p.1 > 0.0 && p.1 <= 1.0) || p.0.abs() > 64) {
        return Err(Error::Walk("probabilities must lie in (0,1] and offsets in [-64,64]".into()));
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Walk(format!("probabilities sum to {total}, not 1")));
    }
    let mean: f64 = pairs.iter().map(|p| p.0 as f64 * p.1).sum();
    if mean.abs() > 1e-12 {
        return Err(Error::Walk(format!("mean must be 0, got {mean:e}")));
    }
    let var: f64 = pairs.iter().map(|p| (p.0 * p.0) as f64 * p.1).sum();
    if (var - 1.0).abs() > 1e-12 {
        return Err(Error::Walk(format!("variance must be 1, got {var}")));
    }
    let g = pairs.iter().fold(0, |g, p| gcd(g, p.0 - pairs[0].0));
    if g != 1 {
        return Err(Error::Walk(format!("kernel is periodic (support differences have gcd {g})")));
    }
    let (offsets, probs) = pairs.into_iter().unzip();
    Ok(WalkKernel { offsets, probs })
}

/// Probability mass function on a contiguous integer range.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    pub min: i64,
    pub probs: Vec<f64>,
}

impl Pmf {
    pub fn delta(at: i64) -> Self {
        Self { min: at, probs: vec![1.0] }
    }

    pub fn max(&self) -> i64 {
        self.min + self.probs.len() as i64 - 1
    }

    pub fn get(&self, x: i64) -> f64 {
        let i = x - self.min;
        if i < 0 || i >= self.probs.len() as i64 {
            0.0
        } else {
            self.probs[i as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (self.min + i as i64, p))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(x, p)| x as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(x, p)| (x as f64 - m).powi(2) * p).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub start: i64,
    pub increments: Vec<i64>,
}

impl Path {
    pub fn positions(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut x = self.start;
        out.push(x);
        for &d in &self.increments {
            x += d;
            out.push(x);
        }
        out
    }

    pub fn end(&self) -> i64 {
        self.start + self.increments.iter().sum::<i64>()
    }
}

impl WalkKernel {
    /// `q(0) = 3/8, q(+-1) = 1/4, q(+-2) = 1/16`.
    pub fn default_kernel() -> Self {
        validate_kernel(&[-2, -1, 0, 1, 2], &[1.0 / 16.0, 0.25, 0.375, 0.25, 1.0 / 16.0]).unwrap()
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Largest absolute jump.
    pub fn max_jump(&self) -> i64 {
        self.offsets.iter().map(|o| o.abs()).max().unwrap_or(0)
    }

    pub fn prob(&self, z: i64) -> f64 {
        self.offsets.iter().position(|&o| o == z).map_or(0.0, |i| self.probs[i])
    }

    pub fn as_pmf(&self) -> Pmf {
        let min = self.offsets[0];
        let max = *self.offsets.last().unwrap();
        let mut probs = vec![0.0; (max - min + 1) as usize];
        for (o, p) in self.offsets.iter().zip(&self.probs) {
            probs[(o - min) as usize] = *p;
        }
        Pmf { min, probs }
    }

    /// Convolve a pmf with one step.
    pub fn step(&self, p: &Pmf) -> Pmf {
        let min = p.min + self.offsets[0];
        let len = p.probs.len() + (self.offsets.last().unwrap() - self.offsets[0]) as usize;
        let mut out = vec![0.0; len];
        for (i, &pv) in p.probs.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            for (o, &q) in self.offsets.iter().zip(&self.probs) {
                out[(i as i64 + o - self.offsets[0]) as usize] += pv * q;
            }
        }
        Pmf { min, probs: out }
    }

    /// Exact `n`-fold convolution.
    pub fn n_step_distribution(&self, n: usize) -> Pmf {
        let mut p = Pmf::delta(0);
        for _ in 0..n {
            p = self.step(&p);
        }
        p
    }

    /// Sample `steps` IID increments from the stream `(seed, Walk, index)`.
    pub fn sample_path(&self, steps: usize, seed: u64, index: u64) -> Path {
        let mut r = rng::stream(seed, Tag::Walk, index);
        let sampler = self.sampler();
        let increments = (0..steps).map(|_| self.offsets[sampler.sample(&mut r)]).collect();
        Path { start: 0, increments }
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probs).expect("validated kernel")
    }

    /// Visit every increment window of length `w` with its probability.
    /// The callback receives kernel indices; `offsets()[idx]` gives the jump.
    pub fn for_each_window(&self, w: usize, mut f: impl FnMut(&[usize], f64)) -> Result<()> {
        let k = self.len() as u64;
        match k.checked_pow(w as u32) {
            Some(c) if c <= WINDOW_CEILING => {}
            _ => return Err(Error::Ceiling(format!("{} windows of length {w}", self.len()))),
        }
        let mut idx = vec![0usize; w];
        // Prefix products avoid recomputing the probability of shared prefixes.
        let mut pref = vec![1.0; w + 1];
        for i in 0..w {
            pref[i + 1] = pref[i] * self.probs[0];
        }
        loop {
            f(&idx, pref[w]);
            let mut pos = w;
            loop {
                if pos == 0 {
                    return Ok(());
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < self.len() {
                    break;
                }
                idx[pos] = 0;
            }
            for i in pos..w {
                pref[i + 1] = pref[i] * self.probs[idx[i]];
            }
        }
    }

    /// Exhaustive joint law of `w` consecutive increments.
    pub fn window_joint_law(&self, w: usize) -> Result<Vec<(Vec<i64>, f64)>> {
        if w > 10 {
            return Err(Error::Ceiling(format!("materialized window length {w} > 10; use for_each_window")));
        }
        let mut out = Vec::new();
        self.for_each_window(w, |idx, p| {
            out.push((idx.iter().map(|&i| self.offsets[i]).collect(), p));
        })?;
        Ok(out)
    }
}
