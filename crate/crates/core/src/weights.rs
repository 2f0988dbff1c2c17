//! Exact environment-averaged path weights with table lookup.
//!
//! For a fixed `lambda`, every full innovation row contributes a value that
//! depends only on the window of increments it spans. Those values (the
//! log-weight and the power sums of the row coefficients) are tabulated once,
//! so the weight of an `n`-step path costs `O(n)` lookups. Rows where two
//! paths overlap are merged and evaluated directly.

use crate::env_field::{EnvironmentSpec, InnovationLaw};
use crate::error::{Error, Result};
use crate::rows::{self, RowGeometry};
use crate::walk::WalkKernel;
use rand::distr::Distribution;

/// Power sums tracked per row: `P_1..=P_4` (index 0 unused).
pub type Pows = [f64; 5];

/// A walk stored both as kernel indices and as absolute positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkSample {
    /// `digits[r - 1]` is the kernel index of the increment `R(r) - R(r-1)`.
    pub digits: Vec<u8>,
    /// `pos[r] = y + R(r)`.
    pub pos: Vec<i64>,
}

impl WalkSample {
    pub fn sample(kernel: &WalkKernel, steps: usize, start: i64, rng: &mut impl rand::Rng) -> Self {
        let sampler = kernel.sampler();
        let offs = kernel.offsets();
        let mut digits = Vec::with_capacity(steps);
        let mut pos = Vec::with_capacity(steps + 1);
        pos.push(start);
        let mut x = start;
        for _ in 0..steps {
            let d = sampler.sample(rng);
            x += offs[d];
            digits.push(d as u8);
            pos.push(x);
        }
        Self { digits, pos }
    }

    pub fn from_increments(kernel: &WalkKernel, start: i64, incs: &[i64]) -> Result<Self> {
        let mut digits = Vec::with_capacity(incs.len());
        let mut pos = vec![start];
        for &d in incs {
            let i = kernel
                .offsets()
                .iter()
                .position(|&o| o == d)
                .ok_or_else(|| Error::Walk(format!("increment {d} not in kernel support")))?;
            digits.push(i as u8);
            pos.push(pos.last().unwrap() + d);
        }
        Ok(Self { digits, pos })
    }

    pub fn steps(&self) -> usize {
        self.digits.len()
    }
}

/// Aggregates of one joint evaluation over `k` paths.
#[derive(Clone, Debug, Default)]
pub struct RowTotals {
    /// `log E_env[exp(lambda * sum of omega over all visited points)]`.
    pub log_weight: f64,
    /// Power sums over all sites of the joint coefficients.
    pub pows: Pows,
    /// Power sums of each path's own coefficients.
    pub per_path: Vec<Pows>,
}

pub struct PathWeigher {
    geom: RowGeometry,
    law: InnovationLaw,
    lambda: f64,
    k: usize,
    table_log: Vec<f64>,
    table_pow: Vec<Pows>,
    /// Offset of the first site, relative to the row's first position.
    table_lo: Vec<i64>,
    table_hi: Vec<i64>,
}

const TABLE_CEILING: usize = 1 << 22;

impl PathWeigher {
    pub fn new(spec: &EnvironmentSpec, kernel: &WalkKernel, lambda: f64) -> Result<Self> {
        let geom = RowGeometry::new(spec);
        let k = kernel.len();
        let w = geom.width();
        let n = match k.checked_pow(w as u32) {
            Some(c) if c <= TABLE_CEILING => c,
            _ => return Err(Error::Ceiling(format!("{k}^{w} row windows"))),
        };
        let law = *spec.innovation();
        let offs = kernel.offsets();
        let mut table_log = Vec::with_capacity(n);
        let mut table_pow = Vec::with_capacity(n);
        let mut table_lo = Vec::with_capacity(n);
        let mut table_hi = Vec::with_capacity(n);
        let mut buf = Vec::new();
        let mut pos = Vec::with_capacity(w + 1);
        for idx in 0..n {
            pos.clear();
            pos.push(0i64);
            let mut rem = idx;
            let mut digits = vec![0usize; w];
            for d in (0..w).rev() {
                digits[d] = rem % k;
                rem /= k;
            }
            for &d in &digits {
                pos.push(pos.last().unwrap() + offs[d]);
            }
            let lo = geom.coeffs(&pos, 0, &mut buf);
            table_log.push(rows::log_weight(&law, lambda, &buf));
            table_pow.push(rows::power_sums(&buf));
            table_lo.push(lo);
            table_hi.push(lo + buf.len() as i64 - 1);
        }
        Ok(Self { geom, law, lambda, k, table_log, table_pow, table_lo, table_hi })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn geometry(&self) -> &RowGeometry {
        &self.geom
    }

    #[inline]
    fn window_index(&self, digits: &[u8]) -> usize {
        let mut idx = 0usize;
        for &d in digits {
            idx = idx * self.k + d as usize;
        }
        idx
    }

    /// Log-weight of a single path.
    pub fn single_log_weight(&self, path: &WalkSample) -> f64 {
        let n = path.steps() as i64;
        let w = self.geom.width() as i64;
        let mut total = 0.0;
        let mut buf = Vec::new();
        for r0 in self.geom.row_range(n) {
            let (lo, hi) = self.geom.present(r0, n).unwrap();
            if lo == 0 && hi as i64 == w {
                let a = r0 as usize;
                total += self.table_log[self.window_index(&path.digits[a..a + w as usize])];
            } else {
                let a = (r0 + lo as i64) as usize;
                let b = (r0 + hi as i64) as usize;
                self.geom.coeffs(&path.pos[a..=b], lo, &mut buf);
                total += rows::log_weight(&self.law, self.lambda, &buf);
            }
        }
        total
    }

    /// Joint evaluation over paths of equal length.
    pub fn joint(&self, paths: &[&WalkSample]) -> RowTotals {
        let kp = paths.len();
        let n = paths[0].steps() as i64;
        debug_assert!(paths.iter().all(|p| p.steps() as i64 == n));
        let w = self.geom.width() as i64;
        let mut out = RowTotals { per_path: vec![[0.0; 5]; kp], ..Default::default() };
        let mut spans = vec![(0i64, 0i64); kp];
        let mut vals: Vec<(f64, Pows)> = vec![(0.0, [0.0; 5]); kp];
        let mut buf = Vec::new();
        let mut merged = Vec::new();
        for r0 in self.geom.row_range(n) {
            let (lo, hi) = self.geom.present(r0, n).unwrap();
            let a = (r0 + lo as i64) as usize;
            let b = (r0 + hi as i64) as usize;
            let full = lo == 0 && hi as i64 == w;
            for (j, p) in paths.iter().enumerate() {
                if full {
                    let idx = self.window_index(&p.digits[a..a + w as usize]);
                    let base = p.pos[a];
                    spans[j] = (base + self.table_lo[idx], base + self.table_hi[idx]);
                    vals[j] = (self.table_log[idx], self.table_pow[idx]);
                } else {
                    let left = self.geom.coeffs(&p.pos[a..=b], lo, &mut buf);
                    spans[j] = (left, left + buf.len() as i64 - 1);
                    vals[j] = (rows::log_weight(&self.law, self.lambda, &buf), rows::power_sums(&buf));
                }
                for (acc, v) in out.per_path[j].iter_mut().zip(&vals[j].1) {
                    *acc += v;
                }
            }
            // Clusters of overlapping spans are evaluated jointly.
            let mut done = 0u32;
            for j in 0..kp {
                if done >> j & 1 == 1 {
                    continue;
                }
                let mut members = 1u32 << j;
                let (mut clo, mut chi) = spans[j];
                let mut grew = true;
                while grew {
                    grew = false;
                    for i in 0..kp {
                        if members >> i & 1 == 0 && spans[i].0 <= chi && spans[i].1 >= clo {
                            members |= 1 << i;
                            clo = clo.min(spans[i].0);
                            chi = chi.max(spans[i].1);
                            grew = true;
                        }
                    }
                }
                done |= members;
                if members.count_ones() == 1 {
                    out.log_weight += vals[j].0;
                    for (acc, v) in out.pows.iter_mut().zip(&vals[j].1) {
                        *acc += v;
                    }
                } else {
                    merged.clear();
                    merged.resize((chi - clo + 1) as usize, 0.0);
                    for (i, p) in paths.iter().enumerate() {
                        if members >> i & 1 == 1 {
                            self.geom.add_coeffs(&p.pos[a..=b], lo, clo, &mut merged);
                        }
                    }
                    out.log_weight += rows::log_weight(&self.law, self.lambda, &merged);
                    let pw: Pows = rows::power_sums(&merged);
                    for (acc, v) in out.pows.iter_mut().zip(&pw) {
                        *acc += v;
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Tag};

    fn visited(paths: &[&WalkSample]) -> Vec<(i64, i64)> {
        let mut pts = Vec::new();
        for p in paths {
            let s = p.steps() as i64;
            for (r, &x) in p.pos.iter().enumerate() {
                pts.push((s - r as i64, x));
            }
        }
        pts
    }

    #[test]
    fn single_weight_matches_site_map() {
        let k = WalkKernel::default_kernel();
        for spec in [EnvironmentSpec::default_preset(), EnvironmentSpec::sheared(), EnvironmentSpec::white()] {
            let pw = PathWeigher::new(&spec, &k, 0.37).unwrap();
            for i in 0..5 {
                let mut r = stream(1, Tag::Walk, i);
                let p = WalkSample::sample(&k, 3 + 7 * i as usize, 0, &mut r);
                let exact = spec.env_averaged_exp_weight(0.37, &visited(&[&p]));
                assert!((pw.single_log_weight(&p) - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn joint_weight_and_power_sums_match_site_map() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::default_preset();
        let lambda = 0.5;
        let pw = PathWeigher::new(&spec, &k, lambda).unwrap();
        for i in 0..20 {
            let mut r = stream(2, Tag::Walk, i);
            let a = WalkSample::sample(&k, 12, 0, &mut r);
            let b = WalkSample::sample(&k, 12, (i as i64 % 5) - 2, &mut r);
            let c = WalkSample::sample(&k, 12, 3, &mut r);
            let paths = [&a, &b, &c];
            let tot = pw.joint(&paths);
            let pts = visited(&paths);
            let exact = spec.env_averaged_exp_weight(lambda, &pts);
            assert!((tot.log_weight - exact).abs() < 1e-12);
            let cq = spec.path_site_coefficients(&pts);
            for n in 1..=4 {
                let direct: f64 = cq.values().map(|c| c.powi(n as i32)).sum();
                assert!((tot.pows[n] - direct).abs() < 1e-10 * (1.0 + direct.abs()));
            }
            for (j, p) in paths.iter().enumerate() {
                let own = spec.path_site_coefficients(&visited(&[p]));
                let d2: f64 = own.values().map(|c| c * c).sum();
                assert!((tot.per_path[j][2] - d2).abs() < 1e-10);
            }
        }
    }
}
