//! Moving-average random fields on the space-time lattice.
//!
//! `omega[t, x] = sum_{(i, j)} a[i, j] * U[t + i, x + j]` with IID two-point
//! innovations `U`. Covariances, joint cumulants and environment-averaged
//! exponential weights along fixed paths are all exact finite sums.

use crate::error::{Error, Result};
use crate::rng::{self, unit_f64, Tag};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest supported joint cumulant order of the field.
pub const MAX_ORDER: usize = 6;

/// Coordinates beyond this magnitude are rejected to keep index arithmetic
/// far from overflow.
const COORD_LIMIT: i64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnovationLaw {
    pub plus_value: f64,
    pub minus_value: f64,
    pub plus_prob: f64,
}

impl InnovationLaw {
    pub fn new(plus_value: f64, minus_value: f64, plus_prob: f64) -> Result<Self> {
        let law = Self { plus_value, minus_value, plus_prob };
        law.validate()?;
        Ok(law)
    }

    /// Symmetric +-1 innovation.
    pub fn rademacher() -> Self {
        Self { plus_value: 1.0, minus_value: -1.0, plus_prob: 0.5 }
    }

    /// Skewed unit-variance law: `sqrt(3)` with probability 1/4, `-sqrt(3)/3` otherwise.
    pub fn skewed() -> Self {
        let r3 = 3f64.sqrt();
        Self { plus_value: r3, minus_value: -r3 / 3.0, plus_prob: 0.25 }
    }

    /// The law of `-U` for `U` distributed as [`InnovationLaw::skewed`].
    pub fn skewed_left() -> Self {
        let r3 = 3f64.sqrt();
        Self { plus_value: r3 / 3.0, minus_value: -r3, plus_prob: 0.75 }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.plus_prob;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Innovation(format!("plus_prob must lie in (0,1), got {p}")));
        }
        if !self.plus_value.is_finite() || !self.minus_value.is_finite() {
            return Err(Error::Innovation("values must be finite".into()));
        }
        let mean = p * self.plus_value + (1.0 - p) * self.minus_value;
        let scale = self.max_abs().max(1.0);
        if mean.abs() > 1e-12 * scale {
            return Err(Error::Innovation(format!("mean must be zero, got {mean:e}")));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.plus_value.abs().max(self.minus_value.abs())
    }

    pub fn raw_moment(&self, n: usize) -> f64 {
        let p = self.plus_prob;
        p * self.plus_value.powi(n as i32) + (1.0 - p) * self.minus_value.powi(n as i32)
    }

    /// Cumulants `kappa_0..=kappa_n` (index 0 unused and set to 0).
    pub fn cumulants(&self, n: usize) -> Vec<f64> {
        let m: Vec<f64> = (0..=n).map(|k| self.raw_moment(k)).collect();
        crate::cumulants::cumulants_from_moments(&m)
    }

    pub fn cumulant(&self, n: usize) -> f64 {
        self.cumulants(n)[n]
    }

    /// `log E[exp(x U)]`, evaluated as a log-sum-exp.
    #[inline]
    pub fn log_mgf(&self, x: f64) -> f64 {
        if (x * self.max_abs()).abs() < 0.5 {
            // Small arguments: keep relative precision through expm1/ln_1p.
            let p = self.plus_prob;
            let e = p * (x * self.plus_value).exp_m1() + (1.0 - p) * (x * self.minus_value).exp_m1();
            return e.ln_1p();
        }
        let a = self.plus_prob.ln() + x * self.plus_value;
        let b = (1.0 - self.plus_prob).ln() + x * self.minus_value;
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln()
    }

    pub fn sample(&self, bits: u64) -> f64 {
        if unit_f64(bits) < self.plus_prob {
            self.plus_value
        } else {
            self.minus_value
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    kernel: Vec<(i64, i64, f64)>,
    innovation: InnovationLaw,
}

/// Validated moving-average environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecDoc", into = "SpecDoc")]
pub struct EnvironmentSpec {
    kernel: Vec<(i64, i64, f64)>,
    innovation: InnovationLaw,
    kappa: Vec<f64>,
    i_min: i64,
    i_max: i64,
    j_min: i64,
    j_max: i64,
}

impl TryFrom<SpecDoc> for EnvironmentSpec {
    type Error = Error;
    fn try_from(doc: SpecDoc) -> Result<Self> {
        build_environment_spec(doc.kernel, doc.innovation)
    }
}

impl From<EnvironmentSpec> for SpecDoc {
    fn from(s: EnvironmentSpec) -> Self {
        SpecDoc { kernel: s.kernel, innovation: s.innovation }
    }
}

/// Validate a kernel and innovation law. Repeated offsets are merged, zero
/// coefficients dropped; an all-zero kernel is allowed and yields the zero field.
pub fn build_environment_spec(
    kernel: impl IntoIterator<Item = (i64, i64, f64)>,
    innovation: InnovationLaw,
) -> Result<EnvironmentSpec> {
    innovation.validate()?;
    let mut merged: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut seen = false;
    for (i, j, a) in kernel {
        seen = true;
        if !a.is_finite() {
            return Err(Error::Kernel(format!("non-finite coefficient at ({i},{j})")));
        }
        if i.abs() > 64 || j.abs() > 64 {
            return Err(Error::Kernel(format!("offset ({i},{j}) outside the supported window")));
        }
        *merged.entry((i, j)).or_insert(0.0) += a;
    }
    if !seen {
        return Err(Error::Kernel("kernel is empty".into()));
    }
    let kernel: Vec<(i64, i64, f64)> =
        merged.into_iter().filter(|&(_, a)| a != 0.0).map(|((i, j), a)| (i, j, a)).collect();
    let (mut i_min, mut i_max, mut j_min, mut j_max) = (0, 0, 0, 0);
    if let Some(&(i, j, _)) = kernel.first() {
        (i_min, i_max, j_min, j_max) = (i, i, j, j);
    }
    for &(i, j, _) in &kernel {
        i_min = i_min.min(i);
        i_max = i_max.max(i);
        j_min = j_min.min(j);
        j_max = j_max.max(j);
    }
    let kappa = innovation.cumulants(8);
    Ok(EnvironmentSpec { kernel, innovation, kappa, i_min, i_max, j_min, j_max })
}

impl EnvironmentSpec {
    /// Single-site kernel with Rademacher innovations.
    pub fn white() -> Self {
        build_environment_spec([(0, 0, 1.0)], InnovationLaw::rademacher()).unwrap()
    }

    /// Uniform 3x3 kernel (coefficient 1/3) with the skewed innovation.
    pub fn default_preset() -> Self {
        let mut k = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                k.push((i, j, 1.0 / 3.0));
            }
        }
        build_environment_spec(k, InnovationLaw::skewed()).unwrap()
    }

    /// Same kernel as the default, with the innovation reflected.
    pub fn mirror() -> Self {
        let mut s = Self::default_preset();
        s.innovation = InnovationLaw::skewed_left();
        s.kappa = s.innovation.cumulants(8);
        s
    }

    /// Two-site diagonal kernel: breaks `f(t,x) = f(t,-x)` and produces a shear.
    pub fn sheared() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        build_environment_spec([(0, 0, a), (1, 1, a)], InnovationLaw::rademacher()).unwrap()
    }

    /// The identically zero field. Used as a control.
    pub fn zero() -> Self {
        build_environment_spec([(0, 0, 0.0)], InnovationLaw::rademacher()).unwrap()
    }

    /// Three-site kernel within a single time row: correlated in space,
    /// independent in time.
    pub fn spatial() -> Self {
        let a = 1.0 / 3f64.sqrt();
        build_environment_spec([(0, -1, a), (0, 0, a), (0, 1, a)], InnovationLaw::skewed()).unwrap()
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "white" => Ok(Self::white()),
            "default" => Ok(Self::default_preset()),
            "sheared" => Ok(Self::sheared()),
            "spatial" => Ok(Self::spatial()),
            "zero" => Ok(Self::zero()),
            "mirror" => Ok(Self::mirror()),
            _ => Err(Error::Config(format!(
                "unknown environment preset `{name}` (expected white, default, mirror, sheared, spatial or zero)"
            ))),
        }
    }

    pub fn kernel(&self) -> &[(i64, i64, f64)] {
        &self.kernel
    }

    pub fn innovation(&self) -> &InnovationLaw {
        &self.innovation
    }

    /// Innovation cumulant `kappa_n(U)` for `n <= 8`.
    #[inline]
    pub fn kappa(&self, n: usize) -> f64 {
        self.kappa[n]
    }

    pub fn is_zero(&self) -> bool {
        self.kernel.is_empty()
    }

    /// Dependence range under the max metric (diameter of the kernel support).
    pub fn range(&self) -> i64 {
        if self.is_zero() {
            return 0;
        }
        (self.i_max - self.i_min).max(self.j_max - self.j_min)
    }

    /// Time extent of the kernel minus one: covariances vanish at time lags beyond it.
    pub fn time_range(&self) -> i64 {
        if self.is_zero() {
            0
        } else {
            self.i_max - self.i_min
        }
    }

    pub fn space_range(&self) -> i64 {
        if self.is_zero() {
            0
        } else {
            self.j_max - self.j_min
        }
    }

    pub fn time_offsets(&self) -> (i64, i64) {
        (self.i_min, self.i_max)
    }

    pub fn space_offsets(&self) -> (i64, i64) {
        (self.j_min, self.j_max)
    }

    pub fn abs_sum(&self) -> f64 {
        self.kernel.iter().map(|k| k.2.abs()).sum()
    }

    pub fn sum(&self) -> f64 {
        self.kernel.iter().map(|k| k.2).sum()
    }

    /// Deterministic bound on `|omega|`.
    pub fn field_bound(&self) -> f64 {
        self.abs_sum() * self.innovation.max_abs()
    }

    /// Is the field a function of innovations on a single time row?
    pub fn is_time_independent(&self) -> bool {
        self.time_range() == 0
    }

    #[inline]
    pub fn coefficient(&self, i: i64, j: i64) -> f64 {
        // The kernel is small and sorted; a linear scan beats hashing here.
        for &(ki, kj, a) in &self.kernel {
            if ki == i && kj == j {
                return a;
            }
        }
        0.0
    }

    /// `E[omega(0,0) omega(t,x)]`.
    pub fn covariance_f(&self, t: i64, x: i64) -> f64 {
        if self.is_zero() || t.abs() > self.time_range() || x.abs() > self.space_range() {
            return 0.0;
        }
        let mut s = 0.0;
        for &(i, j, a) in &self.kernel {
            s += a * self.coefficient(i - t, j - x);
        }
        self.kappa(2) * s
    }

    /// Joint cumulant of `omega` at the given points (order = number of points).
    pub fn joint_cumulant_omega(&self, points: &[(i64, i64)]) -> Result<f64> {
        let n = points.len();
        if n == 0 || n > MAX_ORDER {
            return Err(Error::Order(n));
        }
        if n == 1 {
            return Ok(0.0);
        }
        let (t0, x0) = points[0];
        let mut s = 0.0;
        for &(i, j, a) in &self.kernel {
            let q = (t0 + i, x0 + j);
            let mut prod = a;
            for &(t, x) in &points[1..] {
                prod *= self.coefficient(q.0 - t, q.1 - x);
                if prod == 0.0 {
                    break;
                }
            }
            s += prod;
        }
        Ok(self.kappa(n) * s)
    }

    /// Innovation-site coefficients `c_q = sum_p a[q - p]` over a visited multiset.
    pub fn path_site_coefficients(&self, points: &[(i64, i64)]) -> BTreeMap<(i64, i64), f64> {
        let mut map = BTreeMap::new();
        for &(t, x) in points {
            for &(i, j, a) in &self.kernel {
                *map.entry((t + i, x + j)).or_insert(0.0) += a;
            }
        }
        map
    }

    /// `log E_env[exp(lambda * sum_p omega_p)]` over a visited multiset.
    pub fn env_averaged_exp_weight(&self, lambda: f64, points: &[(i64, i64)]) -> f64 {
        let c = self.path_site_coefficients(points);
        let vals: Vec<f64> = c.values().map(|&cq| self.innovation.log_mgf(lambda * cq)).collect();
        crate::exec::pairwise_sum(&vals)
    }

    /// Total covariance mass `sum_{t,x} f(t,x)`.
    pub fn sigma_squared(&self) -> f64 {
        let mut s = 0.0;
        let (d, w) = (self.time_range(), self.space_range());
        for t in -d..=d {
            for x in -w..=w {
                s += self.covariance_f(t, x);
            }
        }
        s
    }
}

/// Axis-aligned lattice rectangle, inclusive bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub t_min: i64,
    pub t_max: i64,
    pub x_min: i64,
    pub x_max: i64,
}

impl Region {
    pub fn new(t_min: i64, t_max: i64, x_min: i64, x_max: i64) -> Result<Self> {
        if t_min > t_max || x_min > x_max {
            return Err(Error::Region(format!("empty region [{t_min},{t_max}]x[{x_min},{x_max}]")));
        }
        for v in [t_min, t_max, x_min, x_max] {
            if v.abs() > COORD_LIMIT {
                return Err(Error::Region(format!("coordinate {v} exceeds index limit")));
            }
        }
        let cells = (t_max - t_min + 1).checked_mul(x_max - x_min + 1);
        match cells {
            Some(c) if c <= 1 << 32 => Ok(Self { t_min, t_max, x_min, x_max }),
            _ => Err(Error::Region("region too large".into())),
        }
    }

    pub fn width(&self) -> usize {
        (self.x_max - self.x_min + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn contains(&self, t: i64, x: i64) -> bool {
        t >= self.t_min && t <= self.t_max && x >= self.x_min && x <= self.x_max
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        self.contains(other.t_min, other.x_min) && self.contains(other.t_max, other.x_max)
    }
}

/// One sampled realization of the field on a rectangle.
#[derive(Clone, Debug)]
pub struct EnvironmentField {
    pub region: Region,
    pub values: Vec<f64>,
    pub spec: EnvironmentSpec,
    pub seed: u64,
}

impl EnvironmentField {
    #[inline]
    pub fn get(&self, t: i64, x: i64) -> f64 {
        debug_assert!(self.region.contains(t, x), "({t},{x}) outside {:?}", self.region);
        let r = (t - self.region.t_min) as usize;
        let c = (x - self.region.x_min) as usize;
        self.values[r * self.region.width() + c]
    }

    pub fn try_get(&self, t: i64, x: i64) -> Option<f64> {
        self.region.contains(t, x).then(|| self.get(t, x))
    }

    pub fn row(&self, t: i64) -> &[f64] {
        let w = self.region.width();
        let r = (t - self.region.t_min) as usize;
        &self.values[r * w..(r + 1) * w]
    }
}

/// Innovation at a single site. Each time row owns one counter stream and
/// each site a fixed offset in it, so values never depend on the region.
pub fn innovation_at(spec: &EnvironmentSpec, seed: u64, t: i64, x: i64) -> f64 {
    let mut out = [0.0];
    innovation_row(spec, seed, t, x, &mut out);
    out[0]
}

fn innovation_row(spec: &EnvironmentSpec, seed: u64, t: i64, x_start: i64, out: &mut [f64]) {
    let mut r = rng::stream(seed, Tag::Environment, t as u64);
    let pos = (x_start as i128 + (1i128 << 62)) as u128;
    r.set_word_pos(2 * pos);
    let law = spec.innovation();
    for v in out.iter_mut() {
        *v = law.sample(r.next_u64());
    }
}

/// Sample `omega` on `region`. Innovations are drawn on the region dilated by
/// the kernel support, keyed by site, so overlapping regions agree.
pub fn sample_environment(spec: &EnvironmentSpec, region: Region, seed: u64) -> Result<EnvironmentField> {
    let region = Region::new(region.t_min, region.t_max, region.x_min, region.x_max)?;
    let (w, h) = (region.width(), region.height());
    let mut values = vec![0.0; w * h];
    if spec.is_zero() {
        return Ok(EnvironmentField { region, values, spec: spec.clone(), seed });
    }
    let (i_min, i_max) = spec.time_offsets();
    let (j_min, j_max) = spec.space_offsets();
    let iw = w + (j_max - j_min) as usize;
    let ih = h + (i_max - i_min) as usize;
    let ut0 = region.t_min + i_min;
    let ux0 = region.x_min + j_min;
    let rows: Vec<Vec<f64>> = crate::exec::map_indexed(ih, |r| {
        let mut row = vec![0.0; iw];
        innovation_row(spec, seed, ut0 + r as i64, ux0, &mut row);
        row
    });
    for (r, out) in values.chunks_mut(w).enumerate() {
        for &(i, j, a) in spec.kernel() {
            let src = &rows[(r as i64 + i - i_min) as usize];
            let off = (j - j_min) as usize;
            for (o, u) in out.iter_mut().zip(&src[off..off + w]) {
                *o += a * u;
            }
        }
    }
    Ok(EnvironmentField { region, values, spec: spec.clone(), seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_preset_derived_quantities() {
        let s = EnvironmentSpec::default_preset();
        assert_eq!(s.range(), 2);
        assert!((s.field_bound() - 3.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((s.kappa(2) - 1.0).abs() < 1e-14);
        assert!((s.kappa(3) - 2.0 * 3f64.sqrt() / 3.0).abs() < 1e-14);
        assert!((s.kappa(4) + 2.0 / 3.0).abs() < 1e-13);
        assert!((s.covariance_f(0, 0) - 1.0).abs() < 1e-14);
        assert_eq!(s.covariance_f(3, 0), 0.0);
        assert!((s.covariance_f(1, 1) - 4.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn mirror_preset_flips_odd_cumulants() {
        let a = EnvironmentSpec::default_preset();
        let b = EnvironmentSpec::preset("mirror").unwrap();
        assert_eq!(a.kernel(), b.kernel());
        for n in 2..=8 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((b.kappa(n) - sign * a.kappa(n)).abs() < 1e-12, "{n}");
        }
    }

    #[test]
    fn white_preset_has_zero_range() {
        assert_eq!(EnvironmentSpec::white().range(), 0);
        assert!((EnvironmentSpec::white().sigma_squared() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_or_biased_innovations_are_rejected() {
        assert!(InnovationLaw::new(1.0, -1.0, 1.0).is_err());
        assert!(InnovationLaw::new(1.0, -0.5, 0.5).is_err());
        assert!(build_environment_spec(Vec::new(), InnovationLaw::rademacher()).is_err());
    }

    #[test]
    fn rademacher_fourth_cumulant() {
        assert!((InnovationLaw::rademacher().cumulant(4) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn covariance_is_symmetric() {
        for s in [EnvironmentSpec::default_preset(), EnvironmentSpec::sheared()] {
            for t in -3..=3 {
                for x in -3..=3 {
                    assert_eq!(s.covariance_f(t, x), s.covariance_f(-t, -x));
                }
            }
        }
        let sh = EnvironmentSpec::sheared();
        assert!((sh.covariance_f(1, 1) - 0.5).abs() < 1e-15);
        assert_eq!(sh.covariance_f(1, -1), 0.0);
    }

    #[test]
    fn third_cumulant_of_coincident_points() {
        let s = EnvironmentSpec::default_preset();
        let k = s.joint_cumulant_omega(&[(0, 0); 3]).unwrap();
        assert!((k - 2.0 * 3f64.sqrt() / 9.0).abs() < 1e-14);
        assert!(s.joint_cumulant_omega(&[(0, 0); 7]).is_err());
        let far = s.joint_cumulant_omega(&[(0, 0), (0, 0), (7, 0)]).unwrap();
        assert_eq!(far, 0.0);
        let c2 = s.joint_cumulant_omega(&[(0, 0), (1, -1)]).unwrap();
        assert!((c2 - s.covariance_f(1, -1)).abs() < 1e-15);
    }

    #[test]
    fn site_coefficients_sum_rule() {
        let s = EnvironmentSpec::default_preset();
        let pts = [(0, 0), (-1, 1), (-2, 1), (-3, 3), (-4, 2)];
        let c = s.path_site_coefficients(&pts);
        let total: f64 = c.values().sum();
        assert!((total - s.sum() * pts.len() as f64).abs() < 1e-12);
        assert!(s.path_site_coefficients(&[]).is_empty());
        let w = EnvironmentSpec::white().path_site_coefficients(&[(2, 5)]);
        assert_eq!(w.into_iter().collect::<Vec<_>>(), vec![((2, 5), 1.0)]);
    }

    #[test]
    fn exp_weight_matches_enumeration_over_innovations() {
        // Kernel with two sites in time: a 3-point path touches 4 innovations.
        let spec = build_environment_spec([(0, 0, 0.7), (1, 0, -0.4)], InnovationLaw::skewed()).unwrap();
        let pts = [(0, 0), (-1, 0), (-2, 0)];
        let lambda = 0.6;
        let sites: Vec<(i64, i64)> = spec.path_site_coefficients(&pts).keys().cloned().collect();
        assert_eq!(sites.len(), 4);
        let law = spec.innovation();
        let mut total = 0.0;
        for mask in 0..(1u32 << sites.len()) {
            let mut prob = 1.0;
            let mut u = BTreeMap::new();
            for (b, q) in sites.iter().enumerate() {
                let plus = mask >> b & 1 == 1;
                prob *= if plus { law.plus_prob } else { 1.0 - law.plus_prob };
                u.insert(*q, if plus { law.plus_value } else { law.minus_value });
            }
            let mut w = 0.0;
            for &(t, x) in &pts {
                for &(i, j, a) in spec.kernel() {
                    w += a * u[&(t + i, x + j)];
                }
            }
            total += prob * (lambda * w).exp();
        }
        let exact = spec.env_averaged_exp_weight(lambda, &pts);
        assert!((exact - total.ln()).abs() < 1e-13);
        assert_eq!(spec.env_averaged_exp_weight(0.0, &pts), 0.0);
    }

    #[test]
    fn second_derivative_of_exp_weight_is_pair_covariance() {
        let s = EnvironmentSpec::default_preset();
        let pts = [(0, 0), (-1, 1), (-2, 0), (-3, -1), (-4, -1)];
        let h = 1e-4;
        let d2 = (s.env_averaged_exp_weight(h, &pts) - 2.0 * s.env_averaged_exp_weight(0.0, &pts)
            + s.env_averaged_exp_weight(-h, &pts))
            / (h * h);
        let mut target = 0.0;
        for p in &pts {
            for q in &pts {
                target += s.covariance_f(q.0 - p.0, q.1 - p.1);
            }
        }
        assert!(((d2 - target) / target).abs() < 1e-6, "{d2} vs {target}");
    }

    #[test]
    fn sampling_is_reproducible_and_region_independent() {
        let s = EnvironmentSpec::default_preset();
        let a = sample_environment(&s, Region::new(0, 9, -5, 5).unwrap(), 11).unwrap();
        let b = sample_environment(&s, Region::new(0, 9, -5, 5).unwrap(), 11).unwrap();
        let c = sample_environment(&s, Region::new(3, 12, -2, 9).unwrap(), 11).unwrap();
        assert_eq!(a.values, b.values);
        for t in 3..=9 {
            for x in -2..=5 {
                assert_eq!(a.get(t, x), c.get(t, x));
            }
        }
        let bound = s.field_bound();
        assert!(a.values.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn sampled_value_equals_moving_average() {
        let s = EnvironmentSpec::sheared();
        let f = sample_environment(&s, Region::new(-2, 2, -2, 2).unwrap(), 5).unwrap();
        for t in -2..=2 {
            for x in -2..=2 {
                let direct: f64 =
                    s.kernel().iter().map(|&(i, j, a)| a * innovation_at(&s, 5, t + i, x + j)).sum();
                assert!((f.get(t, x) - direct).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_kernel_gives_zero_field() {
        let f = sample_environment(&EnvironmentSpec::zero(), Region::new(0, 3, 0, 3).unwrap(), 1).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spec_json_roundtrip() {
        let s = EnvironmentSpec::sheared();
        let js = serde_json::to_string(&s).unwrap();
        let back: EnvironmentSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(s, back);
        let bad = r#"{"kernel": [[0,0,1.0]], "innovation": {"plus_value": 1, "minus_value": -1, "plus_prob": 0.3}}"#;
        assert!(serde_json::from_str::<EnvironmentSpec>(bad).is_err());
    }
}
