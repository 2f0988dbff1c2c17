//! Exact environment-and-walk averages of `exp(lambda * (eta_0 + ... + eta_n))`.
//!
//! Conditional on the walk, the log-average factorizes over innovation rows
//! and each full row depends on a window of `T - 1` consecutive increments.
//! Summing over walks is then a transfer-matrix product on increment
//! windows, with short boundary rows at both ends. Two value types run
//! through the same recursion: plain weights (with a running log offset) for
//! cumulant generating functions, and truncated power series in `lambda` for
//! exact cumulants of the sum.

use crate::env_field::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::rows::{self, RowGeometry};
use crate::walk::WalkKernel;

/// Highest cumulant order tracked by the series mode.
pub const SERIES_ORDER: usize = 6;
pub type Series = [f64; SERIES_ORDER + 1];

pub fn series_mul(a: &Series, b: &Series) -> Series {
    let mut c = [0.0; SERIES_ORDER + 1];
    for i in 0..=SERIES_ORDER {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..=SERIES_ORDER - i {
            c[i + j] += a[i] * b[j];
        }
    }
    c
}

/// `exp(a)` for a series with `a[0] = 0`.
pub fn series_exp(a: &Series) -> Series {
    // e' = a' e
    let mut e = [0.0; SERIES_ORDER + 1];
    e[0] = a[0].exp();
    for n in 1..=SERIES_ORDER {
        let mut s = 0.0;
        for k in 1..=n {
            s += k as f64 * a[k] * e[n - k];
        }
        e[n] = s / n as f64;
    }
    e
}

/// `log(a)` for a series with `a[0] > 0`.
pub fn series_log(a: &Series) -> Series {
    // a l' = a'
    let mut l = [0.0; SERIES_ORDER + 1];
    l[0] = a[0].ln();
    for n in 1..=SERIES_ORDER {
        let mut s = n as f64 * a[n];
        for k in 1..n {
            s -= k as f64 * l[k] * a[n - k];
        }
        l[n] = s / (n as f64 * a[0]);
    }
    l
}

trait Value: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn add_scaled(&mut self, o: &Self, p: f64);
    /// Rescale a vector of values, returning the log of the factor removed.
    fn renormalize(_v: &mut [Self]) -> f64 {
        0.0
    }
}

impl Value for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn add_scaled(&mut self, o: &Self, p: f64) {
        *self += o * p;
    }
    fn renormalize(v: &mut [Self]) -> f64 {
        let m = v.iter().cloned().fold(0.0, f64::max);
        if m > 0.0 && m.is_finite() {
            v.iter_mut().for_each(|x| *x /= m);
            m.ln()
        } else {
            0.0
        }
    }
}

impl Value for Series {
    fn zero() -> Self {
        [0.0; SERIES_ORDER + 1]
    }
    fn one() -> Self {
        let mut s = [0.0; SERIES_ORDER + 1];
        s[0] = 1.0;
        s
    }
    fn mul(&self, o: &Self) -> Self {
        series_mul(self, o)
    }
    fn add_scaled(&mut self, o: &Self, p: f64) {
        for (a, b) in self.iter_mut().zip(o) {
            *a += b * p;
        }
    }
}

/// Transfer-matrix engine for one environment and walk kernel.
pub struct Transfer<'a> {
    spec: &'a EnvironmentSpec,
    kernel: &'a WalkKernel,
    geom: RowGeometry,
}

/// Largest number of increment windows held in a table.
const TABLE_CEILING: usize = 1 << 22;

impl<'a> Transfer<'a> {
    pub fn new(spec: &'a EnvironmentSpec, kernel: &'a WalkKernel) -> Result<Self> {
        let geom = RowGeometry::new(spec);
        let k = kernel.len();
        match k.checked_pow(geom.width() as u32) {
            Some(c) if c <= TABLE_CEILING => Ok(Self { spec, kernel, geom }),
            _ => Err(Error::Ceiling(format!(
                "{} increment windows of length {}",
                k,
                geom.width()
            ))),
        }
    }

    /// `log E[exp(lambda * sum_{r=0}^{n} eta_r)]`.
    pub fn log_mgf(&self, n: usize, lambda: f64) -> f64 {
        let law = *self.spec.innovation();
        let mut buf = Vec::new();
        let (v, off) = self.run(n, |pos, m_lo| {
            self.geom.coeffs(pos, m_lo, &mut buf);
            rows::log_weight(&law, lambda, &buf).exp()
        });
        off + v.ln()
    }

    /// Cumulants `kappa_1..=kappa_6` of `eta_0 + ... + eta_n`, exactly.
    pub fn sum_cumulants(&self, n: usize) -> [f64; SERIES_ORDER + 1] {
        let kappa: Vec<f64> = (0..=SERIES_ORDER).map(|i| self.spec.kappa(i)).collect();
        let mut buf = Vec::new();
        let mut fact = [1.0; SERIES_ORDER + 1];
        for i in 1..=SERIES_ORDER {
            fact[i] = fact[i - 1] * i as f64;
        }
        let (m, _) = self.run(n, |pos, m_lo| {
            self.geom.coeffs(pos, m_lo, &mut buf);
            let p: [f64; SERIES_ORDER + 1] = rows::power_sums(&buf);
            let mut a = [0.0; SERIES_ORDER + 1];
            for i in 1..=SERIES_ORDER {
                a[i] = kappa[i] * p[i] / fact[i];
            }
            series_exp(&a)
        });
        let l = series_log(&m);
        let mut out = [0.0; SERIES_ORDER + 1];
        for i in 1..=SERIES_ORDER {
            out[i] = l[i] * fact[i];
        }
        out
    }

    /// Row product summed over all walks of `n` steps.
    /// `row(pos, m_lo)` evaluates one row from relative positions at slices `m_lo..`.
    fn run<V: Value>(&self, n: usize, mut row: impl FnMut(&[i64], usize) -> V) -> (V, f64) {
        let w = self.geom.width();
        let t = self.geom.extent;
        let k = self.kernel.len();
        let offs = self.kernel.offsets();
        let probs = self.kernel.probs();
        if n < w.max(1) {
            return (self.brute(n, &mut row), 0.0);
        }
        let l = w.saturating_sub(1);
        let n_states = k.pow(l as u32);
        let decode = |mut idx: usize, len: usize, out: &mut Vec<usize>| {
            out.clear();
            out.resize(len, 0);
            for d in (0..len).rev() {
                out[d] = idx % k;
                idx /= k;
            }
        };
        let mut digits = Vec::new();
        let mut pos = Vec::with_capacity(t);

        // Full rows, indexed by `w` increments (oldest digit most significant).
        let n_full = k.pow(w as u32);
        let mut full = Vec::with_capacity(n_full);
        for idx in 0..n_full {
            decode(idx, w, &mut digits);
            pos.clear();
            pos.push(0);
            for &d in &digits {
                let last = *pos.last().unwrap();
                pos.push(last + offs[d]);
            }
            full.push(row(&pos, 0));
        }

        // Start: state holds increments 1..=l; rows r0 = r - w for r = 0..w.
        let mut v: Vec<V> = Vec::with_capacity(n_states);
        for idx in 0..n_states {
            decode(idx, l, &mut digits);
            let mut abs = vec![0i64];
            let mut p = 1.0;
            for &d in &digits {
                abs.push(abs.last().unwrap() + offs[d]);
                p *= probs[d];
            }
            let mut val = V::one();
            for r in 0..w {
                // Row r0 = r - w sees walk times 0..=r at slices w-r..=w.
                val = val.mul(&row(&abs[..=r], w - r));
            }
            let mut scaled = V::zero();
            scaled.add_scaled(&val, p);
            v.push(scaled);
        }

        let mut log_off = 0.0;
        let stride = n_states / k.max(1);
        let mut next = vec![V::zero(); n_states];
        for _r in w..=n {
            next.iter_mut().for_each(|x| *x = V::zero());
            for (old, val) in v.iter().enumerate() {
                for d in 0..k {
                    let fi = if w == 0 { 0 } else { old * k + d };
                    let contrib = val.mul(&full[fi]);
                    let ni = if l == 0 { 0 } else { (old % stride) * k + d };
                    next[ni].add_scaled(&contrib, probs[d]);
                }
            }
            std::mem::swap(&mut v, &mut next);
            log_off += V::renormalize(&mut v);
        }

        // Tail: rows r0 = n - w + 1 ..= n see slices 0..=n-r0 (the last n - r0 increments).
        let mut total = V::zero();
        for (idx, val) in v.iter().enumerate() {
            decode(idx, l, &mut digits);
            let mut abs = vec![0i64];
            for &d in &digits {
                abs.push(abs.last().unwrap() + offs[d]);
            }
            let mut tail = V::one();
            for back in 0..w {
                // back = n - r0 in 0..w: positions of the last back+1 walk times.
                tail = tail.mul(&row(&abs[l - back..], 0));
            }
            total.add_scaled(&val.mul(&tail), 1.0);
        }
        (total, log_off)
    }

    fn brute<V: Value>(&self, n: usize, row: &mut impl FnMut(&[i64], usize) -> V) -> V {
        let mut total = V::zero();
        let offs = self.kernel.offsets();
        let ni = n as i64;
        self.kernel
            .for_each_window(n, |digits, p| {
                let mut x = vec![0i64];
                for &d in digits {
                    x.push(x.last().unwrap() + offs[d]);
                }
                let mut val = V::one();
                for r0 in self.geom.row_range(ni) {
                    if let Some((lo, hi)) = self.geom.present(r0, ni) {
                        let a = (r0 + lo as i64) as usize;
                        let b = (r0 + hi as i64) as usize;
                        val = val.mul(&row(&x[a..=b], lo));
                    }
                }
                total.add_scaled(&val, p);
            })
            .expect("short walks are within the enumeration ceiling");
        total
    }
}

/// `f_cgf(n, lambda) = log E[exp(lambda * sum_{s=0}^{n} eta_s)]`.
pub fn f_cgf(spec: &EnvironmentSpec, kernel: &WalkKernel, n: usize, lambda: f64) -> Result<f64> {
    Ok(Transfer::new(spec, kernel)?.log_mgf(n, lambda))
}

/// `c_N = f_cgf(N, N^{-1/4})`, exact.
pub fn c_n_exact(spec: &EnvironmentSpec, kernel: &WalkKernel, n: usize) -> Result<f64> {
    f_cgf(spec, kernel, n, (n as f64).powf(-0.25))
}

/// Exact cumulants of `eta_1 + ... + eta_s` (`s` terms).
pub fn eta_sum_cumulants_exact(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    s: usize,
) -> Result<[f64; SERIES_ORDER + 1]> {
    if s == 0 {
        return Ok([0.0; SERIES_ORDER + 1]);
    }
    Ok(Transfer::new(spec, kernel)?.sum_cumulants(s - 1))
}

/// Enumeration oracle: average of the exact conditional weight over all walks.
pub fn log_mgf_by_enumeration(spec: &EnvironmentSpec, kernel: &WalkKernel, n: usize, lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    let offs = kernel.offsets();
    kernel.for_each_window(n, |digits, p| {
        let mut pts = vec![(0i64, 0i64)];
        let mut x = 0;
        for (r, &d) in digits.iter().enumerate() {
            x += offs[d];
            pts.push((-(r as i64 + 1), x));
        }
        total += p * spec.env_averaged_exp_weight(lambda, &pts).exp();
    })?;
    Ok(total.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn presets() -> Vec<EnvironmentSpec> {
        vec![
            EnvironmentSpec::white(),
            EnvironmentSpec::default_preset(),
            EnvironmentSpec::sheared(),
            EnvironmentSpec::spatial(),
        ]
    }

    #[test]
    fn series_exp_log_roundtrip() {
        let a: Series = [0.0, 0.3, -0.2, 0.05, 0.01, -0.003, 0.0007];
        let e = series_exp(&a);
        let l = series_log(&e);
        for i in 0..=SERIES_ORDER {
            assert!((l[i] - a[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn transfer_matches_enumeration() {
        let k = WalkKernel::default_kernel();
        for spec in presets() {
            let tm = Transfer::new(&spec, &k).unwrap();
            for n in 0..=5 {
                for lambda in [0.3, 0.9] {
                    let a = tm.log_mgf(n, lambda);
                    let b = log_mgf_by_enumeration(&spec, &k, n, lambda).unwrap();
                    assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "n={n} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn zero_environment_gives_zero() {
        let k = WalkKernel::default_kernel();
        assert_eq!(c_n_exact(&EnvironmentSpec::zero(), &k, 64).unwrap(), 0.0);
    }

    #[test]
    fn white_cgf_is_explicit() {
        // Independent sites: log cosh(lambda) per visited point.
        let k = WalkKernel::default_kernel();
        let v = f_cgf(&EnvironmentSpec::white(), &k, 100, 0.4).unwrap();
        assert!((v - 101.0 * 0.4f64.cosh().ln()).abs() < 1e-11);
    }

    #[test]
    fn series_cumulants_match_derivatives_of_cgf() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::default_preset();
        let tm = Transfer::new(&spec, &k).unwrap();
        let n = 12;
        let kap = tm.sum_cumulants(n);
        let h = 1e-3;
        let f = |x: f64| tm.log_mgf(n, x);
        let d2 = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        let d3 = (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h * h * h);
        assert!((kap[1]).abs() < 1e-12);
        assert!((kap[2] - d2).abs() < 1e-5 * d2.abs(), "{} {d2}", kap[2]);
        assert!((kap[3] - d3).abs() < 1e-3 * d3.abs(), "{} {d3}", kap[3]);
    }

    #[test]
    fn cumulants_are_eventually_affine_in_length() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::default_preset();
        let c: Vec<_> = (20..23).map(|s| eta_sum_cumulants_exact(&spec, &k, s).unwrap()).collect();
        for n in 2..=6 {
            let d1 = c[1][n] - c[0][n];
            let d2 = c[2][n] - c[1][n];
            assert!((d1 - d2).abs() < 1e-8 * (1.0 + d1.abs()), "order {n}: {d1} vs {d2}");
        }
    }
}
