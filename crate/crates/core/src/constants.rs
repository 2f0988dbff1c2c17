//! Renormalization constants.
//!
//! `sigma2`, `v`, `gamma2` and `c2*, c3*, c4*` are finite sums over lags;
//! each term is an expectation over the walk at finitely many times, taken
//! exactly by convolving independent gap distributions. `c_N` is available
//! exactly from the transfer matrix and by Monte Carlo over single walks with
//! the environment average done exactly per path.

use crate::env_field::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, Tag};
use crate::stats::{self, Estimate};
use crate::transfer;
use crate::walk::{Pmf, WalkKernel};
use crate::weights::{PathWeigher, WalkSample};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Largest supported dependence time-range.
pub const MAX_TIME_RANGE: i64 = 4;

/// `E[g(R(t_1), ..., R(t_m))]` for a two-sided walk, `g` translation invariant.
pub struct TimeExpectation<'a> {
    kernel: &'a WalkKernel,
    cache: HashMap<usize, Pmf>,
}

impl<'a> TimeExpectation<'a> {
    pub fn new(kernel: &'a WalkKernel) -> Self {
        Self { kernel, cache: HashMap::new() }
    }

    fn pmf(&mut self, n: usize) -> Pmf {
        let k = self.kernel;
        self.cache.entry(n).or_insert_with(|| k.n_step_distribution(n)).clone()
    }

    pub fn expect(&mut self, times: &[i64], mut g: impl FnMut(&[i64]) -> f64) -> f64 {
        let mut distinct: Vec<i64> = times.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let gaps: Vec<Pmf> = distinct.windows(2).map(|w| self.pmf((w[1] - w[0]) as usize)).collect();
        let slot: Vec<usize> = times.iter().map(|t| distinct.binary_search(t).unwrap()).collect();
        let mut at = vec![0i64; distinct.len()];
        let mut args = vec![0i64; times.len()];
        fn rec(
            i: usize,
            prob: f64,
            gaps: &[Pmf],
            at: &mut Vec<i64>,
            slot: &[usize],
            args: &mut Vec<i64>,
            g: &mut dyn FnMut(&[i64]) -> f64,
        ) -> f64 {
            if i == gaps.len() {
                for (a, &s) in args.iter_mut().zip(slot) {
                    *a = at[s];
                }
                return prob * g(args);
            }
            let mut s = 0.0;
            for (x, p) in gaps[i].iter() {
                if p == 0.0 {
                    continue;
                }
                at[i + 1] = at[i] + x;
                s += rec(i + 1, prob * p, gaps, at, slot, args, g);
            }
            s
        }
        rec(0, 1.0, &gaps, &mut at, &slot, &mut args, &mut g)
    }
}

/// Total covariance mass, summed term by term.
pub fn sigma_squared(spec: &EnvironmentSpec) -> f64 {
    spec.sigma_squared()
}

fn check_range(spec: &EnvironmentSpec) -> Result<i64> {
    let d = spec.time_range();
    if d > MAX_TIME_RANGE {
        return Err(Error::Ceiling(format!("dependence time-range {d} > {MAX_TIME_RANGE}")));
    }
    Ok(d)
}

/// `f` evaluated between the `eta` points at walk times `a` and `b`.
#[inline]
fn f_between(spec: &EnvironmentSpec, ta: i64, xa: i64, tb: i64, xb: i64) -> f64 {
    // eta_r sits at (-r, R(r)).
    spec.covariance_f(-(tb - ta), xb - xa)
}

/// `E[eta_0 eta_s] = sum_x p^(|s|)(x) f(-s, x sign s)`.
pub fn eta_covariance(spec: &EnvironmentSpec, kernel: &WalkKernel, s: i64) -> f64 {
    let p = kernel.n_step_distribution(s.unsigned_abs() as usize);
    let sign = if s < 0 { -1 } else { 1 };
    p.iter().map(|(x, px)| px * spec.covariance_f(-s, x * sign)).sum()
}

pub fn c2_star(spec: &EnvironmentSpec, kernel: &WalkKernel) -> Result<f64> {
    let d = check_range(spec)?;
    let mut terms: Vec<f64> = (-d..=d).map(|s| eta_covariance(spec, kernel, s)).collect();
    terms.iter_mut().for_each(|t| *t *= 0.5);
    Ok(exec::pairwise_sum(&terms))
}

pub fn c3_star(spec: &EnvironmentSpec, kernel: &WalkKernel) -> Result<f64> {
    let d = check_range(spec)?;
    if spec.kappa(3) == 0.0 || spec.is_zero() {
        return Ok(0.0);
    }
    let mut ex = TimeExpectation::new(kernel);
    let mut terms = Vec::new();
    for s in -d..=d {
        for t in -d..=d {
            if (s - t).abs() > d {
                continue;
            }
            let times = [0, s, t];
            let v = ex.expect(&times, |x| {
                let pts: Vec<(i64, i64)> = times.iter().zip(x).map(|(&r, &p)| (-r, p)).collect();
                spec.joint_cumulant_omega(&pts).unwrap()
            });
            terms.push(v);
        }
    }
    Ok(exec::pairwise_sum(&terms) / 6.0)
}

/// Walk times `a < b` as a half-open increment interval.
fn interval(a: i64, b: i64) -> (i64, i64) {
    (a.min(b), a.max(b))
}

fn overlaps(i: (i64, i64), j: (i64, i64)) -> bool {
    i.0 < j.1 && j.0 < i.1
}

/// `Cov_R(f(eta_a, eta_b), f(eta_c, eta_d))` over the walk.
fn pair_cov(spec: &EnvironmentSpec, ex: &mut TimeExpectation, t: [i64; 4]) -> f64 {
    let d = spec.time_range();
    if (t[1] - t[0]).abs() > d || (t[3] - t[2]).abs() > d {
        return 0.0;
    }
    if !overlaps(interval(t[0], t[1]), interval(t[2], t[3])) {
        return 0.0;
    }
    let e12 = ex.expect(&t, |x| {
        f_between(spec, t[0], x[0], t[1], x[1]) * f_between(spec, t[2], x[2], t[3], x[3])
    });
    let e1 = ex.expect(&t[..2], |x| f_between(spec, t[0], x[0], t[1], x[1]));
    let e2 = ex.expect(&t[2..], |x| f_between(spec, t[2], x[0], t[3], x[1]));
    e12 - e1 * e2
}

/// `c4*` split into the averaged fourth cumulant of `omega` and the
/// covariance correction from averaging over the walk.
pub fn c4_star_parts(spec: &EnvironmentSpec, kernel: &WalkKernel) -> Result<(f64, f64)> {
    let d = check_range(spec)?;
    if spec.is_zero() {
        return Ok((0.0, 0.0));
    }
    let mut ex = TimeExpectation::new(kernel);
    let mut a4 = Vec::new();
    for s in -d..=d {
        for t in -d..=d {
            for u in -d..=d {
                let times = [0, s, t, u];
                let lo = *times.iter().min().unwrap();
                let hi = *times.iter().max().unwrap();
                if hi - lo > d {
                    continue;
                }
                a4.push(ex.expect(&times, |x| {
                    let pts: Vec<(i64, i64)> = times.iter().zip(x).map(|(&r, &p)| (-r, p)).collect();
                    spec.joint_cumulant_omega(&pts).unwrap()
                }));
            }
        }
    }
    let mut cov = Vec::new();
    let e = 2 * d;
    for s in -e..=e {
        for t in -e..=e {
            for u in -e..=e {
                cov.push(pair_cov(spec, &mut ex, [0, s, t, u]));
                cov.push(pair_cov(spec, &mut ex, [0, t, s, u]));
                cov.push(pair_cov(spec, &mut ex, [0, u, s, t]));
            }
        }
    }
    Ok((exec::pairwise_sum(&a4) / 24.0, exec::pairwise_sum(&cov) / 24.0))
}

pub fn c4_star(spec: &EnvironmentSpec, kernel: &WalkKernel) -> Result<f64> {
    let (a, b) = c4_star_parts(spec, kernel)?;
    Ok(a + b)
}

pub fn c_stars(spec: &EnvironmentSpec, kernel: &WalkKernel) -> Result<(f64, f64, f64)> {
    Ok((c2_star(spec, kernel)?, c3_star(spec, kernel)?, c4_star(spec, kernel)?))
}

/// Shear constant with lag sums truncated at `lag_limit`.
///
/// `v = 1/2 sum_{k,j} Cov(R(1) - R(0), f(k, R(j) - R(j+k)))`.
pub fn shear_v_window(spec: &EnvironmentSpec, kernel: &WalkKernel, lag_limit: i64) -> Result<f64> {
    check_range(spec)?;
    let mut ex = TimeExpectation::new(kernel);
    let mut terms = Vec::new();
    for k in -lag_limit..=lag_limit {
        if (-spec.space_range()..=spec.space_range()).all(|x| spec.covariance_f(k, x) == 0.0) {
            continue;
        }
        for j in -2 * lag_limit - 1..=2 * lag_limit + 1 {
            if !overlaps((0, 1), interval(j, j + k)) {
                continue;
            }
            let times = [0, 1, j, j + k];
            terms.push(ex.expect(&times, |x| (x[1] - x[0]) as f64 * spec.covariance_f(k, x[2] - x[3])));
        }
    }
    Ok(0.5 * exec::pairwise_sum(&terms))
}

/// Variance rate of the centered diagonal functional, lag sums truncated at `lag_limit`.
///
/// `gamma2 = 1/4 sum_{k1,k2,j} Cov(f(k1, R(0) - R(k1)), f(k2, R(j) - R(j+k2)))`.
pub fn gamma_squared_window(spec: &EnvironmentSpec, kernel: &WalkKernel, lag_limit: i64) -> Result<f64> {
    check_range(spec)?;
    let mut ex = TimeExpectation::new(kernel);
    let live: Vec<i64> = (-lag_limit..=lag_limit)
        .filter(|&k| (-spec.space_range()..=spec.space_range()).any(|x| spec.covariance_f(k, x) != 0.0))
        .collect();
    let mut terms = Vec::new();
    for &k1 in &live {
        for &k2 in &live {
            for j in -3 * lag_limit..=3 * lag_limit {
                let i1 = interval(0, k1);
                let i2 = interval(j, j + k2);
                if !overlaps(i1, i2) {
                    continue;
                }
                let times = [0, k1, j, j + k2];
                let e12 = ex.expect(&times, |x| {
                    spec.covariance_f(k1, x[0] - x[1]) * spec.covariance_f(k2, x[2] - x[3])
                });
                let e1 = ex.expect(&times[..2], |x| spec.covariance_f(k1, x[0] - x[1]));
                let e2 = ex.expect(&times[2..], |x| spec.covariance_f(k2, x[0] - x[1]));
                terms.push(e12 - e1 * e2);
            }
        }
    }
    Ok(0.25 * exec::pairwise_sum(&terms))
}

pub fn shear_v(spec: &EnvironmentSpec, kernel: &WalkKernel) -> Result<f64> {
    shear_v_window(spec, kernel, spec.time_range())
}

pub fn gamma_squared(spec: &EnvironmentSpec, kernel: &WalkKernel) -> Result<f64> {
    gamma_squared_window(spec, kernel, spec.time_range())
}

/// Monte Carlo `c_N` with the environment average exact per path.
/// The log is applied to the sample mean; the error is by the delta method.
pub fn c_n_estimate(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::Argument("N must be at least 1".into()));
    }
    if samples < 2 {
        return Err(Error::Argument("need at least 2 samples".into()));
    }
    let lambda = (n as f64).powf(-0.25);
    log_mgf_estimate(spec, kernel, n, lambda, samples, seed)
}

/// Monte Carlo `log E[exp(lambda * sum_{r=0}^{n} eta_r)]`.
pub fn log_mgf_estimate(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    n: usize,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let pw = PathWeigher::new(spec, kernel, lambda)?;
    let logs = exec::map_indexed(samples, |i| {
        let mut r = rng::stream(seed, Tag::Walk, i as u64);
        pw.single_log_weight(&WalkSample::sample(kernel, n, 0, &mut r))
    });
    let e = stats::log_mean_exp(&logs);
    if !e.estimate.is_finite() {
        return Err(Error::Numeric("sample mean of path weights is not positive".into()));
    }
    Ok(e)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CnEntry {
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub sigma2: f64,
    pub v: f64,
    pub gamma2: f64,
    pub c2_star: f64,
    pub c3_star: f64,
    pub c4_star: f64,
    pub c_n: Vec<CnEntry>,
    pub provenance: HashMap<String, Provenance>,
}

impl ConstantsReport {
    /// Exact constants only.
    pub fn exact(spec: &EnvironmentSpec, kernel: &WalkKernel) -> Result<Self> {
        let (c2, c3, c4) = c_stars(spec, kernel)?;
        let mut provenance = HashMap::new();
        for k in ["sigma2", "v", "gamma2", "c2_star", "c3_star", "c4_star"] {
            provenance.insert(k.to_string(), Provenance::Exact);
        }
        Ok(Self {
            sigma2: sigma_squared(spec),
            v: shear_v(spec, kernel)?,
            gamma2: gamma_squared(spec, kernel)?,
            c2_star: c2,
            c3_star: c3,
            c4_star: c4,
            c_n: Vec::new(),
            provenance,
        })
    }

    /// `c2* N^{1/2} + c3* N^{1/4} + c4*`.
    pub fn c_n_expansion(&self, n: usize) -> f64 {
        let nf = n as f64;
        self.c2_star * nf.sqrt() + self.c3_star * nf.powf(0.25) + self.c4_star
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TtcRow {
    pub n: usize,
    pub c_n: f64,
    pub c_n_se: f64,
    pub expansion: f64,
    pub d_n: f64,
    pub se: f64,
    pub envelope: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TtcReport {
    pub rows: Vec<TtcRow>,
    pub slope: f64,
    pub envelope_c: f64,
    pub decreasing: bool,
    pub within_envelope: bool,
    pub pass: bool,
}

/// `d_N = |c_N - c2* N^{1/2} - c3* N^{1/4} - c4*|` over an ascending `N` list.
///
/// With `samples = 0` the exact transfer-matrix `c_N` is used; otherwise the
/// Monte Carlo estimate. Passes iff the log-log slope is at most
/// `-0.25 + 0.15` (and at least `-0.4`), `d_N` decreases, and every point
/// lies within 3 standard errors of the envelope `C N^{-1/4}` fitted at the
/// smallest `N`.
pub fn ttc_check(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    ns: &[usize],
    samples: usize,
    seed: u64,
) -> Result<TtcReport> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("N list must be nonempty and ascending".into()));
    }
    let consts = ConstantsReport::exact(spec, kernel)?;
    let mut rows = Vec::new();
    for &n in ns {
        let (cn, se, prov) = if samples == 0 {
            (transfer::c_n_exact(spec, kernel, n)?, 0.0, Provenance::Exact)
        } else {
            let e = c_n_estimate(spec, kernel, n, samples, seed ^ n as u64)?;
            (e.estimate, e.std_error, Provenance::MonteCarlo)
        };
        let ex = consts.c_n_expansion(n);
        rows.push(TtcRow {
            n,
            c_n: cn,
            c_n_se: se,
            expansion: ex,
            d_n: (cn - ex).abs(),
            se,
            envelope: 0.0,
            provenance: prov,
        });
    }
    let envelope_c = rows[0].d_n * (rows[0].n as f64).powf(0.25);
    for r in rows.iter_mut() {
        r.envelope = envelope_c * (r.n as f64).powf(-0.25);
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.d_n.max(1e-300).ln()).collect();
    let slope = if rows.len() > 1 { stats::slope(&x, &y) } else { f64::NAN };
    let decreasing = rows.windows(2).all(|w| w[1].d_n < w[0].d_n + 3.0 * w[0].se.hypot(w[1].se));
    let within_envelope = rows.iter().all(|r| r.d_n <= r.envelope + 3.0 * r.se);
    let zero = rows.iter().all(|r| r.d_n == 0.0);
    let pass = zero || (decreasing && within_envelope && (-0.4..=-0.1).contains(&slope));
    Ok(TtcReport { rows, slope, envelope_c, decreasing, within_envelope, pass })
}
