//! Point-to-point partition functions by dynamic programming.

use crate::env_field::{sample_environment, EnvironmentField, EnvironmentSpec, Region};
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, Tag};
use crate::stats::Estimate;
use crate::walk::WalkKernel;
use crate::weights::{PathWeigher, WalkSample};

/// One DP layer: `value(z) = mant[z - lo] * exp(log_offset)`.
#[derive(Clone, Debug)]
pub struct Layer {
    pub lo: i64,
    pub mant: Vec<f64>,
    pub log_offset: f64,
}

impl Layer {
    pub fn hi(&self) -> i64 {
        self.lo + self.mant.len() as i64 - 1
    }

    pub fn mantissa(&self, z: i64) -> f64 {
        let i = z - self.lo;
        if i < 0 || i >= self.mant.len() as i64 {
            0.0
        } else {
            self.mant[i as usize]
        }
    }

    pub fn log_value(&self, z: i64) -> f64 {
        self.mantissa(z).ln() + self.log_offset
    }

    pub fn value(&self, z: i64) -> f64 {
        self.mantissa(z) * self.log_offset.exp()
    }

    fn renormalize(&mut self) {
        let m = self.mant.iter().cloned().fold(0.0, f64::max);
        if m > 0.0 {
            self.mant.iter_mut().for_each(|v| *v /= m);
            self.log_offset += m.ln();
        }
    }
}

/// `Z_{t-u, t}(z, y)` for every `u = 0..=t-s`, anchored at the terminal point `(t, y)`.
#[derive(Clone, Debug)]
pub struct PartitionSlab {
    pub t: i64,
    pub y: i64,
    pub lambda: f64,
    pub layers: Vec<Layer>,
}

impl PartitionSlab {
    /// `Z_{s', t}(x, y)` for `s' = t - u`, as a log.
    pub fn log_z(&self, s_prime: i64, x: i64) -> f64 {
        self.layers[(self.t - s_prime) as usize].log_value(x)
    }

    pub fn layer_at(&self, s_prime: i64) -> &Layer {
        &self.layers[(self.t - s_prime) as usize]
    }

    /// CSV dump with columns `u, z, mantissa, log_offset`.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["u", "z", "mantissa", "log_offset"])?;
        for (u, l) in self.layers.iter().enumerate() {
            for (i, m) in l.mant.iter().enumerate() {
                wr.serialize((u, l.lo + i as i64, m, l.log_offset))?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Space-time region a slab from `(t, y)` back to time `s` reads.
pub fn slab_region(kernel: &WalkKernel, s: i64, t: i64, y: i64) -> Result<Region> {
    let j = kernel.max_jump() * (t - s);
    Region::new(s, t, y - j, y + j)
}

fn check_cover(env: &EnvironmentField, need: &Region) -> Result<()> {
    if env.region.contains_region(need) {
        Ok(())
    } else {
        Err(Error::Region(format!("environment {:?} does not cover {:?}", env.region, need)))
    }
}

fn check_finite(l: &Layer, t: i64, layer: usize) -> Result<()> {
    if let Some(i) = l.mant.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t, x: l.lo + i as i64, layer });
    }
    Ok(())
}

pub fn partition_slab(
    env: &EnvironmentField,
    kernel: &WalkKernel,
    lambda: f64,
    s: i64,
    t: i64,
    y: i64,
) -> Result<PartitionSlab> {
    if s > t {
        return Err(Error::Argument(format!("need s <= t, got {s} > {t}")));
    }
    check_cover(env, &slab_region(kernel, s, t, y)?)?;
    let offs = kernel.offsets();
    let probs = kernel.probs();
    let (omin, omax) = (offs[0], *offs.last().unwrap());
    let mut layers = Vec::with_capacity((t - s + 1) as usize);
    let w0 = lambda * env.get(t, y);
    layers.push(Layer { lo: y, mant: vec![1.0], log_offset: w0 });
    for u in 1..=(t - s) {
        let prev = layers.last().unwrap();
        let time = t - u;
        let lo = prev.lo + omin;
        let len = prev.mant.len() + (omax - omin) as usize;
        let mut mant = vec![0.0; len];
        for (i, &pv) in prev.mant.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            for (o, q) in offs.iter().zip(probs) {
                mant[(i as i64 + o - omin) as usize] += pv * q;
            }
        }
        for (i, m) in mant.iter_mut().enumerate() {
            *m *= (lambda * env.get(time, lo + i as i64)).exp();
        }
        let mut l = Layer { lo, mant, log_offset: prev.log_offset };
        l.renormalize();
        check_finite(&l, time, u as usize)?;
        layers.push(l);
    }
    Ok(PartitionSlab { t, y, lambda, layers })
}

/// Path-enumeration oracle for `Z_{s,t}(x, y)` over all `x`, with weights
/// formed by direct exponentials. Cost is `|kernel|^{t-s}`.
pub fn slab_by_enumeration(
    env: &EnvironmentField,
    kernel: &WalkKernel,
    lambda: f64,
    s: i64,
    t: i64,
    y: i64,
) -> Result<std::collections::BTreeMap<i64, f64>> {
    if s > t {
        return Err(Error::Argument(format!("need s <= t, got {s} > {t}")));
    }
    check_cover(env, &slab_region(kernel, s, t, y)?)?;
    let mut out = std::collections::BTreeMap::new();
    kernel.for_each_window((t - s) as usize, |idx, p| {
        let mut x = y;
        let mut w = (lambda * env.get(t, x)).exp();
        for (r, &d) in idx.iter().enumerate() {
            x += kernel.offsets()[d];
            w *= (lambda * env.get(t - 1 - r as i64, x)).exp();
        }
        *out.entry(x).or_insert(0.0) += p * w;
    })?;
    Ok(out)
}

/// `Z_{s, s+v}(a, z)` for every `v = 0..=t-s`, started from `(s, a)`.
pub fn forward_slab(
    env: &EnvironmentField,
    kernel: &WalkKernel,
    lambda: f64,
    s: i64,
    a: i64,
    t: i64,
) -> Result<Vec<Layer>> {
    if s > t {
        return Err(Error::Argument(format!("need s <= t, got {s} > {t}")));
    }
    let j = kernel.max_jump() * (t - s);
    check_cover(env, &Region::new(s, t, a - j, a + j)?)?;
    let offs = kernel.offsets();
    let probs = kernel.probs();
    let (omin, omax) = (offs[0], *offs.last().unwrap());
    let mut layers = vec![Layer { lo: a, mant: vec![1.0], log_offset: lambda * env.get(s, a) }];
    for v in 1..=(t - s) {
        let prev = layers.last().unwrap();
        let time = s + v;
        // The path moves from z' to z with z' - z distributed as the kernel.
        let lo = prev.lo - omax;
        let len = prev.mant.len() + (omax - omin) as usize;
        let mut mant = vec![0.0; len];
        for (i, &pv) in prev.mant.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            let zp = prev.lo + i as i64;
            for (o, q) in offs.iter().zip(probs) {
                mant[(zp - o - lo) as usize] += pv * q;
            }
        }
        for (i, m) in mant.iter_mut().enumerate() {
            *m *= (lambda * env.get(time, lo + i as i64)).exp();
        }
        let mut l = Layer { lo, mant, log_offset: prev.log_offset };
        l.renormalize();
        check_finite(&l, time, v as usize)?;
        layers.push(l);
    }
    Ok(layers)
}

/// Relative defect of the composition law at an intermediate time, with the
/// junction weight counted once:
/// `|Z_{s,u}(a,b) - sum_y Z_{s,t}(a,y) exp(-lambda omega_{t,y}) Z_{t,u}(y,b)| / Z_{s,u}(a,b)`.
///
/// `env_left` drives the `[s, t]` factor; pass the same field for the identity.
#[allow(clippy::too_many_arguments)]
pub fn propagator_residual_split(
    env: &EnvironmentField,
    env_left: &EnvironmentField,
    kernel: &WalkKernel,
    lambda: f64,
    s: i64,
    t: i64,
    u: i64,
    a: i64,
    b: i64,
) -> Result<f64> {
    if !(s < t && t < u) {
        return Err(Error::Argument(format!("need s < t < u, got {s}, {t}, {u}")));
    }
    let back = partition_slab(env, kernel, lambda, s, u, b)?;
    let fwd = forward_slab(env_left, kernel, lambda, s, a, t)?;
    let lhs = back.layer_at(s);
    let right = back.layer_at(t);
    let left = &fwd[(t - s) as usize];
    let mut terms = Vec::new();
    for y in left.lo.max(right.lo)..=left.hi().min(right.hi()) {
        terms.push(left.mantissa(y) * right.mantissa(y) * (-lambda * env_left.get(t, y)).exp());
    }
    let sum = exec::pairwise_sum(&terms);
    let log_ratio = left.log_offset + right.log_offset - lhs.log_offset;
    let lm = lhs.mantissa(a);
    if lm == 0.0 {
        return Err(Error::Numeric(format!("Z_{{{s},{u}}}({a},{b}) vanishes")));
    }
    let ratio = sum / lm * log_ratio.exp();
    Ok((1.0 - ratio).abs())
}

#[allow(clippy::too_many_arguments)]
pub fn propagator_residual(
    env: &EnvironmentField,
    kernel: &WalkKernel,
    lambda: f64,
    s: i64,
    t: i64,
    u: i64,
    a: i64,
    b: i64,
) -> Result<f64> {
    propagator_residual_split(env, env, kernel, lambda, s, t, u, a, b)
}

/// `N^{1/2} exp(-c_N (t - s)) Z_{Ns, Nt}(N^{1/2} x, N^{1/2} y)` on the lattice
/// `x in N^{-1/2} Z`, for the slab's terminal point.
#[derive(Clone, Debug)]
pub struct RescaledField {
    pub n: usize,
    pub s: f64,
    pub t: f64,
    pub c_n: f64,
    /// Lattice position of the first value.
    pub lo: i64,
    pub values: Vec<f64>,
}

impl RescaledField {
    pub fn x(&self, i: usize) -> f64 {
        (self.lo + i as i64) as f64 / (self.n as f64).sqrt()
    }

    /// `N^{-1/2} sum_x phi(x) Z^N_{s,t}(x, y)`.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self.values.iter().enumerate().map(|(i, v)| phi(self.x(i)) * v).collect();
        exec::pairwise_sum(&terms) / (self.n as f64).sqrt()
    }

    pub fn total_mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }
}

/// Rescale the slab's deepest layer (`s' = s`) at lattice scale `N`.
pub fn rescaled_field(slab: &PartitionSlab, c_n: f64, n: usize) -> Result<RescaledField> {
    if !c_n.is_finite() {
        return Err(Error::Argument("c_N must be finite".into()));
    }
    let layer = slab.layers.last().unwrap();
    let u = (slab.layers.len() - 1) as f64;
    let nf = n as f64;
    let log_scale = 0.5 * nf.ln() - c_n * u / nf + layer.log_offset;
    let values = layer.mant.iter().map(|m| m * log_scale.exp()).collect();
    Ok(RescaledField {
        n,
        s: (slab.t as f64 - u) / nf,
        t: slab.t as f64 / nf,
        c_n,
        lo: layer.lo,
        values,
    })
}

/// Monte Carlo over `k` independent walks of the `k`-point moment
/// `E[exp(L - k * log_norm) * prod_j phi(y_j + R^j(s))]`, where `L` is the
/// exact environment average of the joint path weight. With
/// `log_norm = c_N t` this is the rescaled moment at macroscopic time `t`.
#[allow(clippy::too_many_arguments)]
pub fn moment_estimate_pathwise(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    lambda: f64,
    s: usize,
    y: &[i64],
    phi: &(dyn Fn(i64) -> f64 + Sync),
    log_norm: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::Argument("need at least 2 samples".into()));
    }
    if y.is_empty() || y.len() > 4 {
        return Err(Error::Argument("k must be between 1 and 4".into()));
    }
    let k = y.len();
    let pw = PathWeigher::new(spec, kernel, lambda)?;
    let vals = exec::map_indexed(samples, |i| {
        let mut r = rng::stream(seed, Tag::Walk, i as u64);
        let paths: Vec<WalkSample> = y.iter().map(|&yj| WalkSample::sample(kernel, s, yj, &mut r)).collect();
        let refs: Vec<&WalkSample> = paths.iter().collect();
        let l = pw.joint(&refs).log_weight;
        let f: f64 = paths.iter().map(|p| phi(*p.pos.last().unwrap())).product();
        (l - k as f64 * log_norm).exp() * f
    });
    Ok(Estimate::from_samples(&vals))
}

/// The same moment by sampling environments and running the DP per terminal point.
#[allow(clippy::too_many_arguments)]
pub fn moment_estimate_environment(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    lambda: f64,
    s: usize,
    y: &[i64],
    phi: &(dyn Fn(i64) -> f64 + Sync),
    log_norm: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::Argument("need at least 2 samples".into()));
    }
    let st = s as i64;
    let lo = y.iter().min().unwrap() - kernel.max_jump() * st;
    let hi = y.iter().max().unwrap() + kernel.max_jump() * st;
    let region = Region::new(0, st, lo, hi)?;
    let vals: Vec<Result<f64>> = exec::map_indexed(samples, |i| {
        let env = sample_environment(spec, region, rng::child_seed(seed, Tag::Environment, i as u64))?;
        let mut log_abs = 0.0;
        let mut sign = 1.0;
        for &yj in y {
            let slab = partition_slab(&env, kernel, lambda, 0, st, yj)?;
            let l = slab.layer_at(0);
            let terms: Vec<f64> = l.mant.iter().enumerate().map(|(x, m)| m * phi(l.lo + x as i64)).collect();
            let sum = exec::pairwise_sum(&terms);
            if sum == 0.0 {
                return Ok(0.0);
            }
            sign *= sum.signum();
            log_abs += sum.abs().ln() + l.log_offset - log_norm;
        }
        Ok(sign * log_abs.exp())
    });
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&vals))
}

/// Weighted mean of `N^{-1/2} R(Nt)` under the first-moment measure
/// `exp(L - c_N t)`, with a delta-method standard error.
pub fn first_moment_drift(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    n: usize,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let (s, lambda) = crate::functionals::scaled(n, t)?;
    if samples < 2 {
        return Err(Error::Argument("need at least 2 samples".into()));
    }
    let c_n = crate::transfer::c_n_exact(spec, kernel, n)?;
    let pw = PathWeigher::new(spec, kernel, lambda)?;
    let rn = (n as f64).sqrt();
    let pairs = exec::map_indexed(samples, |i| {
        let mut r = rng::stream(seed, Tag::Walk, i as u64);
        let p = WalkSample::sample(kernel, s, 0, &mut r);
        let w = (pw.single_log_weight(&p) - c_n * t).exp();
        (w, *p.pos.last().unwrap() as f64 / rn)
    });
    let w: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let wd: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
    let mw = exec::pairwise_mean(&w);
    let ratio = exec::pairwise_mean(&wd) / mw;
    let lin: Vec<f64> = pairs.iter().map(|(w, d)| w * (d - ratio) / mw).collect();
    let e = Estimate::from_samples(&lin);
    Ok(Estimate { estimate: ratio, std_error: e.std_error, samples })
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct MassRow {
    pub n: usize,
    /// `exp(-(c2* N^{1/2} + c3* N^{1/4} + c4*) t) E[mass]` by Monte Carlo over walks.
    pub normalized_mass: Estimate,
    /// `|normalized_mass - 1|`.
    pub deviation: f64,
    /// Exact `|exp((c_N - c2* N^{1/2} - c3* N^{1/4} - c4*) t) - 1|`.
    pub envelope: f64,
}

/// Environment mean of the total mass `N^{-1/2} sum_x Z^N_{0,t}(x, 0)`, normalized
/// by the three-term expansion of `c_N`.
pub fn mass_renormalization(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    n: usize,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<MassRow> {
    let (s, lambda) = crate::functionals::scaled(n, t)?;
    let report = crate::constants::ConstantsReport::exact(spec, kernel)?;
    let expansion = report.c_n_expansion(n) * t;
    let c_n = crate::transfer::f_cgf(spec, kernel, s, lambda)?;
    let normalized_mass = moment_estimate_pathwise(spec, kernel, lambda, s, &[0], &|_| 1.0, expansion, samples, seed)?;
    Ok(MassRow {
        n,
        deviation: (normalized_mass.estimate - 1.0).abs(),
        normalized_mass,
        envelope: (c_n - expansion).exp_m1().abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(spec: &EnvironmentSpec, seed: u64) -> EnvironmentField {
        sample_environment(spec, Region::new(-80, 80, -200, 200).unwrap(), seed).unwrap()
    }

    #[test]
    fn zero_lambda_gives_walk_distribution() {
        let k = WalkKernel::default_kernel();
        let e = env(&EnvironmentSpec::default_preset(), 1);
        let slab = partition_slab(&e, &k, 0.0, 0, 10, 3).unwrap();
        let p = k.n_step_distribution(10);
        for x in -20..=26 {
            assert!((slab.layer_at(0).value(x) - p.get(x - 3)).abs() < 1e-15);
        }
        for l in &slab.layers {
            let mass: f64 = l.mant.iter().sum::<f64>() * l.log_offset.exp();
            assert!((mass - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_step_slab() {
        let k = WalkKernel::default_kernel();
        let e = env(&EnvironmentSpec::default_preset(), 2);
        let slab = partition_slab(&e, &k, 0.7, 5, 5, 1).unwrap();
        assert!((slab.log_z(5, 1) - 0.7 * e.get(5, 1)).abs() < 1e-15);
        assert_eq!(slab.layers[0].mant.len(), 1);
    }

    #[test]
    fn slab_matches_path_enumeration() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::default_preset();
        let e = env(&spec, 3);
        let lambda = 0.8;
        let (s, t, y) = (2, 5, 1);
        let slab = partition_slab(&e, &k, lambda, s, t, y).unwrap();
        let brute = slab_by_enumeration(&e, &k, lambda, s, t, y).unwrap();
        assert_eq!(brute.len(), 13);
        for (x, v) in brute {
            let got = slab.layer_at(s).value(x);
            assert!(((got - v) / v).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_and_backward_agree() {
        let k = WalkKernel::default_kernel();
        let e = env(&EnvironmentSpec::sheared(), 4);
        let back = partition_slab(&e, &k, 0.5, -3, 9, 2).unwrap();
        let fwd = forward_slab(&e, &k, 0.5, -3, -1, 9).unwrap();
        let a = back.log_z(-3, -1);
        let b = fwd.last().unwrap().log_value(2);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn propagator_identity_and_negative_control() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::default_preset();
        let e = env(&spec, 5);
        let r = propagator_residual(&e, &k, 0.6, -20, 0, 20, 3, -2).unwrap();
        assert!(r < 1e-10, "{r}");
        assert!(propagator_residual(&e, &k, 0.0, -20, 0, 20, 3, -2).unwrap() < 1e-13);
        let other = env(&spec, 6);
        let bad = propagator_residual_split(&e, &other, &k, 0.6, -20, 0, 20, 3, -2).unwrap();
        assert!(bad > 1e-3, "{bad}");
    }

    #[test]
    fn region_must_cover_the_cone() {
        let k = WalkKernel::default_kernel();
        let e = env(&EnvironmentSpec::white(), 1);
        assert!(partition_slab(&e, &k, 0.1, -100, 0, 0).is_err());
        assert!(partition_slab(&e, &k, 0.1, 3, 2, 0).is_err());
    }

    #[test]
    fn rescaled_field_at_zero_lambda() {
        let k = WalkKernel::default_kernel();
        let e = env(&EnvironmentSpec::white(), 1);
        let slab = partition_slab(&e, &k, 0.0, 0, 1, 0).unwrap();
        let f = rescaled_field(&slab, 0.0, 16).unwrap();
        for (i, v) in f.values.iter().enumerate() {
            assert!((v - 4.0 * k.prob(f.lo + i as i64)).abs() < 1e-14);
        }
        assert!((f.total_mass() - 1.0).abs() < 1e-14);
        assert!(rescaled_field(&slab, f64::NAN, 16).is_err());
    }

    #[test]
    fn pathwise_moment_trivial_cases() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::default_preset();
        let e = moment_estimate_pathwise(&spec, &k, 0.0, 20, &[0, 3], &|_| 1.0, 0.0, 50, 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert!(moment_estimate_pathwise(&spec, &k, 0.0, 20, &[0], &|_| 1.0, 0.0, 1, 1).is_err());
    }

    #[test]
    fn pathwise_and_environment_estimators_agree() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::white();
        let n = 16usize;
        let lambda = (n as f64).powf(-0.25);
        let phi = |x: i64| (-(x as f64).powi(2) / (2.0 * n as f64)).exp();
        let norm = crate::transfer::c_n_exact(&spec, &k, n).unwrap();
        let a = moment_estimate_pathwise(&spec, &k, lambda, n, &[0, 2], &phi, norm, 20000, 7).unwrap();
        let b = moment_estimate_environment(&spec, &k, lambda, n, &[0, 2], &phi, norm, 4000, 8).unwrap();
        assert!(a.agrees_with(&b, 3.0), "{a:?} {b:?}");
    }

    #[test]
    fn drift_vanishes_for_symmetric_presets() {
        let k = WalkKernel::default_kernel();
        let d = first_moment_drift(&EnvironmentSpec::zero(), &k, 64, 1.0, 4000, 1).unwrap();
        assert!(d.estimate.abs() < 3.0 * d.std_error);
        let d = first_moment_drift(&EnvironmentSpec::default_preset(), &k, 64, 1.0, 4000, 1).unwrap();
        assert!(d.estimate.abs() < 3.0 * d.std_error, "{d:?}");
    }

    #[test]
    fn mass_of_zero_environment_is_one() {
        let k = WalkKernel::default_kernel();
        let m = mass_renormalization(&EnvironmentSpec::zero(), &k, 64, 1.0, 100, 1).unwrap();
        assert_eq!(m.normalized_mass.estimate, 1.0);
        assert_eq!(m.envelope, 0.0);
    }
}
