//! Innovation rows touched by walk paths.
//!
//! A path visiting `(base - r, X(r))` for `r = 0..=n` loads innovation row
//! `tau` through the walk times `r0..r0+T` with `r0 = base + i_min - tau`,
//! where `T` is the time extent of the kernel. Walk time `r0 + m` contributes
//! the kernel slice at time offset `i_min + m`. Row contributions depend on
//! positions only through their differences, which is what makes the
//! transfer-matrix and table-lookup evaluations possible.

use crate::env_field::{EnvironmentSpec, InnovationLaw};

#[derive(Clone, Debug)]
pub struct RowGeometry {
    /// Kernel time extent `T`.
    pub extent: usize,
    pub j_min: i64,
    pub j_max: i64,
    /// Per slice `m`: `(j, a[i_min + m, j])`.
    pub slices: Vec<Vec<(i64, f64)>>,
    /// `sum_j |a[i_min + m, j]|` per slice.
    pub slice_abs: Vec<f64>,
}

impl RowGeometry {
    pub fn new(spec: &EnvironmentSpec) -> Self {
        if spec.is_zero() {
            return Self { extent: 1, j_min: 0, j_max: 0, slices: vec![vec![]], slice_abs: vec![0.0] };
        }
        let (i_min, i_max) = spec.time_offsets();
        let (j_min, j_max) = spec.space_offsets();
        let extent = (i_max - i_min + 1) as usize;
        let mut slices = vec![Vec::new(); extent];
        for &(i, j, a) in spec.kernel() {
            slices[(i - i_min) as usize].push((j, a));
        }
        let slice_abs = slices.iter().map(|s| s.iter().map(|p| p.1.abs()).sum()).collect();
        Self { extent, j_min, j_max, slices, slice_abs }
    }

    /// Increments spanned by a full row.
    pub fn width(&self) -> usize {
        self.extent - 1
    }

    /// Dense row coefficients for one path. `pos[k]` is the position at slice
    /// `m_lo + k`. Returns the leftmost site and fills `out`.
    pub fn coeffs(&self, pos: &[i64], m_lo: usize, out: &mut Vec<f64>) -> i64 {
        let lo = pos.iter().min().unwrap() + self.j_min;
        let hi = pos.iter().max().unwrap() + self.j_max;
        out.clear();
        out.resize((hi - lo + 1) as usize, 0.0);
        self.add_coeffs(pos, m_lo, lo, out);
        lo
    }

    /// Accumulate into a dense buffer whose first entry is site `lo`.
    #[inline]
    pub fn add_coeffs(&self, pos: &[i64], m_lo: usize, lo: i64, out: &mut [f64]) {
        for (k, &p) in pos.iter().enumerate() {
            for &(j, a) in &self.slices[m_lo + k] {
                out[(p + j - lo) as usize] += a;
            }
        }
    }

    /// Site interval `[lo, hi]` touched by one path in one row.
    #[inline]
    pub fn span(&self, pos: &[i64]) -> (i64, i64) {
        let mut lo = pos[0];
        let mut hi = pos[0];
        for &p in &pos[1..] {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        (lo + self.j_min, hi + self.j_max)
    }

    /// Present slice range `[m_lo, m_hi]` of row `r0` for walk times `0..=n`.
    #[inline]
    pub fn present(&self, r0: i64, n: i64) -> Option<(usize, usize)> {
        let lo = (-r0).max(0);
        let hi = (self.extent as i64 - 1).min(n - r0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    /// Row indices `r0` touched by walk times `0..=n`.
    pub fn row_range(&self, n: i64) -> std::ops::RangeInclusive<i64> {
        -(self.extent as i64 - 1)..=n
    }
}

#[inline]
pub fn log_weight(law: &InnovationLaw, lambda: f64, c: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in c {
        if x != 0.0 {
            s += law.log_mgf(lambda * x);
        }
    }
    s
}

/// `P_n = sum_q c_q^n` for `n = 0..=order` (`P_0` is left at 0).
#[inline]
pub fn power_sums<const K: usize>(c: &[f64]) -> [f64; K] {
    let mut p = [0.0; K];
    for &x in c {
        let mut v = x;
        for pn in p.iter_mut().skip(1) {
            *pn += v;
            v *= x;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_coefficients_sum_to_visits() {
        let spec = EnvironmentSpec::default_preset();
        let g = RowGeometry::new(&spec);
        assert_eq!(g.extent, 3);
        let mut buf = Vec::new();
        g.coeffs(&[0, 2, 1], 0, &mut buf);
        let total: f64 = buf.iter().sum();
        assert!((total - 3.0).abs() < 1e-14);
        assert_eq!(g.present(-1, 10), Some((1, 2)));
        assert_eq!(g.present(9, 10), Some((0, 1)));
        assert_eq!(g.present(11, 10), None);
    }

    #[test]
    fn rows_reproduce_site_coefficients() {
        // Sum of all row contributions equals the direct site map.
        let spec = EnvironmentSpec::sheared();
        let g = RowGeometry::new(&spec);
        let (i_min, _) = spec.time_offsets();
        let x = [0i64, 1, 1, -1, 0, 2];
        let n = x.len() as i64 - 1;
        let pts: Vec<(i64, i64)> = x.iter().enumerate().map(|(r, &p)| (-(r as i64), p)).collect();
        let direct = spec.path_site_coefficients(&pts);
        let mut buf = Vec::new();
        for r0 in g.row_range(n) {
            let (lo, hi) = g.present(r0, n).unwrap();
            let pos: Vec<i64> = (lo..=hi).map(|m| x[(r0 + m as i64) as usize]).collect();
            let left = g.coeffs(&pos, lo, &mut buf);
            let tau = i_min - r0;
            for (k, &c) in buf.iter().enumerate() {
                let d = direct.get(&(tau, left + k as i64)).cloned().unwrap_or(0.0);
                assert!((c - d).abs() < 1e-15);
            }
        }
    }
}
