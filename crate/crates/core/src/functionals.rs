//! Path functionals of `k`-tuples of walks: the off-diagonal and diagonal
//! quadratic terms, the third and fourth order corrections, and the
//! fifth-order remainder budget.
//!
//! A tuple runs for `s` steps and visits the points `(-r, y_j + R^j(r))`,
//! `r = 0..=s`. Centerings use `s` steps per walk.

use serde::{Deserialize, Serialize};

use crate::constants::ConstantsReport;
use crate::env_field::{EnvironmentSpec, InnovationLaw};
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, Tag};
use crate::stats::{self, Estimate};
use crate::walk::WalkKernel;
use crate::weights::{PathWeigher, Pows, WalkSample};

/// Largest `|lambda * c_q|` covered by the remainder constant.
pub const REMAINDER_RADIUS: f64 = 2.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub k: usize,
    pub s: usize,
    pub lambda: f64,
    pub y: Vec<i64>,
    pub off: f64,
    pub diag: f64,
    /// `Err^1..=Err^4`.
    pub err: [f64; 4],
    /// Realized remainder beyond fourth order. Bounded by `err5_budget`.
    pub err5: f64,
    pub err5_budget: f64,
    /// `log E_env[exp(lambda * sum of omega)]` over the whole tuple.
    pub log_weight: f64,
    pub endpoints: Vec<i64>,
}

fn points(path: &WalkSample) -> Vec<(i64, i64)> {
    path.pos.iter().enumerate().map(|(r, &x)| (-(r as i64), x)).collect()
}

fn check_paths(paths: &[&WalkSample], s: usize) -> Result<()> {
    if paths.is_empty() {
        return Err(Error::Argument("need at least one path".into()));
    }
    if paths.iter().any(|p| p.steps() < s) {
        return Err(Error::Argument(format!("paths must have at least {s} steps")));
    }
    Ok(())
}

/// `(Off_s, Diag_s)` by direct covariance sums over pairs of times within the
/// dependence range. `Diag` carries the centering `k s c2*`.
pub fn off_diag_eval(spec: &EnvironmentSpec, paths: &[&WalkSample], s: usize, c2_star: f64) -> Result<(f64, f64)> {
    check_paths(paths, s)?;
    let d = spec.time_range();
    let pts: Vec<Vec<(i64, i64)>> = paths.iter().map(|p| points(p)[..=s].to_vec()).collect();
    let pair = |a: &[(i64, i64)], b: &[(i64, i64)]| {
        let mut total = 0.0;
        for (r1, p1) in a.iter().enumerate() {
            let lo = r1.saturating_sub(d as usize);
            let hi = (r1 + d as usize).min(s);
            for p2 in &b[lo..=hi] {
                total += spec.covariance_f(p2.0 - p1.0, p2.1 - p1.1);
            }
        }
        total
    };
    let mut off = 0.0;
    let mut diag = 0.0;
    for (i, a) in pts.iter().enumerate() {
        diag += 0.5 * pair(a, a);
        for b in &pts[i + 1..] {
            off += pair(a, b);
        }
    }
    Ok((off, diag - (paths.len() * s) as f64 * c2_star))
}

/// Cumulant-weighted power sums: `kappa_n * sum_q c_q^n` over the whole tuple
/// (`total`) and summed over the walks individually (`own`), `n = 2, 3, 4`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CumulantSums {
    pub total: [f64; 3],
    pub own: [f64; 3],
}

impl CumulantSums {
    fn from_pows(spec: &EnvironmentSpec, total: &Pows, own: &[Pows]) -> Self {
        let mut out = Self::default();
        for n in 2..=4 {
            out.total[n - 2] = spec.kappa(n) * total[n];
            out.own[n - 2] = spec.kappa(n) * own.iter().map(|p| p[n]).sum::<f64>();
        }
        out
    }

    pub fn direct(spec: &EnvironmentSpec, paths: &[&WalkSample], s: usize) -> Self {
        let pows = |pts: &[(i64, i64)]| {
            let mut p = [0.0; 5];
            for c in spec.path_site_coefficients(pts).values() {
                for (n, v) in p.iter_mut().enumerate().skip(1) {
                    *v += c.powi(n as i32);
                }
            }
            p
        };
        let per: Vec<Vec<(i64, i64)>> = paths.iter().map(|p| points(p)[..=s].to_vec()).collect();
        let all: Vec<(i64, i64)> = per.concat();
        let own: Vec<Pows> = per.iter().map(|p| pows(p)).collect();
        Self::from_pows(spec, &pows(&all), &own)
    }
}

/// `Err^1..=Err^4` from cumulant sums.
pub fn errs_from_sums(k: usize, s: usize, lambda: f64, sums: &CumulantSums, consts: &ConstantsReport) -> [f64; 4] {
    let ks = (k * s) as f64;
    let l3 = lambda.powi(3);
    let l4 = lambda.powi(4);
    [
        l3 * (sums.own[1] / 6.0 - ks * consts.c3_star),
        l4 * (sums.own[2] / 24.0 - ks * (consts.c4_star - 0.5 * consts.gamma2)),
        l3 * (sums.total[1] - sums.own[1]) / 6.0,
        l4 * (sums.total[2] - sums.own[2]) / 24.0,
    ]
}

/// Constant of the fifth-order remainder of the innovation cumulant function:
/// `|log E[e^{xU}] - sum_{n<=4} kappa_n x^n / n!| <= K |x|^5` for `|x| <= 2`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RemainderBound {
    pub k5: f64,
    /// `k * sum_i max_j |a_{i,j}|` is the largest site coefficient for `k` walks.
    pub row_max: f64,
    pub abs_sum: f64,
}

fn remainder(law: &InnovationLaw, kappa: &[f64], x: f64) -> f64 {
    let mut poly = 0.0;
    let mut term = 1.0;
    for (n, kn) in kappa.iter().enumerate().take(5).skip(1) {
        term *= x / n as f64;
        poly += kn * term;
    }
    law.log_mgf(x) - poly
}

impl RemainderBound {
    pub fn new(spec: &EnvironmentSpec) -> Self {
        let law = spec.innovation();
        let kappa: Vec<f64> = (0..=8).map(|n| if n == 0 { 0.0 } else { spec.kappa(n) }).collect();
        // Near zero the Taylor tail is used, inflated by 10%.
        let cut: f64 = 0.05;
        let mut fact = 1.0;
        let mut tail = 0.0;
        for (n, kn) in kappa.iter().enumerate().skip(1) {
            fact *= n as f64;
            if n >= 5 {
                tail += kn.abs() / fact * cut.powi(n as i32 - 5);
            }
        }
        let steps = 4000;
        let mut grid = 0.0f64;
        for i in 0..=steps {
            let x = cut + (REMAINDER_RADIUS - cut) * i as f64 / steps as f64;
            for xs in [x, -x] {
                grid = grid.max(remainder(law, &kappa, xs).abs() / x.powi(5));
            }
        }
        // 1% covers the maximum falling between grid points.
        let k5 = (1.1 * tail).max(1.01 * grid);
        let mut rows: std::collections::BTreeMap<i64, f64> = Default::default();
        for &(i, _, a) in spec.kernel() {
            let e = rows.entry(i).or_insert(0.0);
            *e = e.max(a.abs());
        }
        Self { k5: if spec.is_zero() { 0.0 } else { k5 }, row_max: rows.values().sum(), abs_sum: spec.abs_sum() }
    }

    /// `K5 * c_max^4 * k * sum|a| * (s + 1) * lambda^5`, valid while `lambda * c_max <= 2`.
    pub fn budget(&self, k: usize, s: usize, lambda: f64) -> Result<f64> {
        let c_max = k as f64 * self.row_max;
        if lambda * c_max > REMAINDER_RADIUS {
            return Err(Error::Argument(format!(
                "lambda = {lambda} exceeds the remainder range: lambda * c_max = {} > {REMAINDER_RADIUS}",
                lambda * c_max
            )));
        }
        Ok(self.k5 * c_max.powi(4) * k as f64 * self.abs_sum * (s + 1) as f64 * lambda.powi(5))
    }
}

/// `(Err^1..=Err^4, err5_budget)` along a tuple, from exact site power sums.
pub fn err_eval(
    spec: &EnvironmentSpec,
    paths: &[&WalkSample],
    lambda: f64,
    s: usize,
    consts: &ConstantsReport,
) -> Result<([f64; 4], f64)> {
    check_paths(paths, s)?;
    let budget = RemainderBound::new(spec).budget(paths.len(), s, lambda)?;
    let sums = CumulantSums::direct(spec, paths, s);
    Ok((errs_from_sums(paths.len(), s, lambda, &sums, consts), budget))
}

/// Evaluates every functional of a tuple in `O(k s)` through the row tables.
pub struct FunctionalEvaluator<'a> {
    spec: &'a EnvironmentSpec,
    consts: &'a ConstantsReport,
    weigher: PathWeigher,
    bound: RemainderBound,
}

impl<'a> FunctionalEvaluator<'a> {
    pub fn new(spec: &'a EnvironmentSpec, kernel: &WalkKernel, lambda: f64, consts: &'a ConstantsReport) -> Result<Self> {
        Ok(Self {
            spec,
            consts,
            weigher: PathWeigher::new(spec, kernel, lambda)?,
            bound: RemainderBound::new(spec),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.weigher.lambda()
    }

    pub fn evaluate(&self, paths: &[&WalkSample]) -> Result<FunctionalSample> {
        check_paths(paths, 0)?;
        let s = paths[0].steps();
        if paths.iter().any(|p| p.steps() != s) {
            return Err(Error::Argument("paths must have equal length".into()));
        }
        let k = paths.len();
        let lambda = self.lambda();
        let rt = self.weigher.joint(paths);
        let sums = CumulantSums::from_pows(self.spec, &rt.pows, &rt.per_path);
        let off = 0.5 * (sums.total[0] - sums.own[0]);
        let diag = 0.5 * sums.own[0] - (k * s) as f64 * self.consts.c2_star;
        let err = errs_from_sums(k, s, lambda, &sums, self.consts);
        let second_to_fourth: f64 = (0..3).map(|i| lambda.powi(i as i32 + 2) * sums.total[i] / [2.0, 6.0, 24.0][i]).sum();
        Ok(FunctionalSample {
            k,
            s,
            lambda,
            y: paths.iter().map(|p| p.pos[0]).collect(),
            off,
            diag,
            err,
            err5: rt.log_weight - second_to_fourth,
            err5_budget: self.bound.budget(k, s, lambda)?,
            log_weight: rt.log_weight,
            endpoints: paths.iter().map(|p| *p.pos.last().unwrap()).collect(),
        })
    }

    /// Samples `samples` tuples of `s`-step walks from `y` and evaluates each.
    pub fn sample(&self, kernel: &WalkKernel, y: &[i64], s: usize, samples: usize, seed: u64) -> Result<Vec<FunctionalSample>> {
        let out = exec::map_indexed(samples, |i| {
            let mut r = rng::stream(seed, Tag::Walk, i as u64);
            let paths: Vec<WalkSample> = y.iter().map(|&yj| WalkSample::sample(kernel, s, yj, &mut r)).collect();
            let refs: Vec<&WalkSample> = paths.iter().collect();
            self.evaluate(&refs)
        });
        out.into_iter().collect()
    }
}

/// Lattice steps and coupling for macroscopic time `t` at scale `N`.
pub fn scaled(n: usize, t: f64) -> Result<(usize, f64)> {
    let s = n as f64 * t;
    if n == 0 || !(t > 0.0) || (s - s.round()).abs() > 1e-9 {
        return Err(Error::Argument(format!("N t must be a positive integer, got N = {n}, t = {t}")));
    }
    Ok((s.round() as usize, (n as f64).powf(-0.25)))
}

/// Macroscopic starting points rounded to the lattice `N^{-1/2} Z`.
pub fn lattice_starts(n: usize, y: &[f64]) -> Vec<i64> {
    y.iter().map(|v| (v * (n as f64).sqrt()).round() as i64).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropAReport {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub samples: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub err5_budget: f64,
}

/// Compares the exact log-weight with the moment-formula exponent
/// `N^{-1/2}(Off + Diag) - gamma^2 k t / 2 + sum_{a<=4} Err^a + k (c2* N^{1/2} + c3* N^{1/4} + c4*) t`.
#[allow(clippy::too_many_arguments)]
pub fn prop_a_residual(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    consts: &ConstantsReport,
    n: usize,
    t: f64,
    y: &[f64],
    samples: usize,
    seed: u64,
) -> Result<PropAReport> {
    let (s, lambda) = scaled(n, t)?;
    let k = y.len();
    let ev = FunctionalEvaluator::new(spec, kernel, lambda, consts)?;
    let rows = ev.sample(kernel, &lattice_starts(n, y), s, samples, seed)?;
    let rn = (n as f64).sqrt();
    let res: Vec<f64> = rows
        .iter()
        .map(|f| {
            let formula = (f.off + f.diag) / rn - 0.5 * consts.gamma2 * k as f64 * t
                + f.err.iter().sum::<f64>()
                + k as f64 * consts.c_n_expansion(n) * t;
            (f.log_weight - formula).abs()
        })
        .collect();
    Ok(PropAReport {
        n,
        k,
        t,
        samples,
        max_abs: res.iter().cloned().fold(0.0, f64::max),
        mean_abs: exec::pairwise_mean(&res),
        err5_budget: ev.bound.budget(k, s, lambda)?,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub estimate: Estimate,
    pub target: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub n: usize,
    pub k: usize,
    pub t: f64,
    pub stats: Vec<Statistic>,
    /// Sample means of `|Err^a|`, `a = 1..=4`.
    pub mean_abs_err: [Estimate; 4],
}

/// Sample statistics of the rescaled functionals against their limits.
#[allow(clippy::too_many_arguments)]
pub fn invariance_stats(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    consts: &ConstantsReport,
    k: usize,
    t: f64,
    n: usize,
    y: &[f64],
    samples: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    if y.len() != k {
        return Err(Error::Argument(format!("need {k} starting points, got {}", y.len())));
    }
    let (s, lambda) = scaled(n, t)?;
    let starts = lattice_starts(n, y);
    let ev = FunctionalEvaluator::new(spec, kernel, lambda, consts)?;
    let rows = ev.sample(kernel, &starts, s, samples, seed)?;
    let rn = (n as f64).sqrt();
    let diag: Vec<f64> = rows.iter().map(|f| f.diag / rn).collect();
    let off: Vec<f64> = rows.iter().map(|f| f.off / rn).collect();
    let mut stats_out = vec![
        Statistic { name: "mean_diag".into(), estimate: Estimate::from_samples(&diag), target: 0.0 },
        Statistic { name: "var_diag".into(), estimate: stats::variance(&diag), target: consts.gamma2 * k as f64 * t },
    ];
    for j in 0..k {
        let disp: Vec<f64> = rows.iter().map(|f| (f.endpoints[j] - starts[j]) as f64 / rn).collect();
        stats_out.push(Statistic {
            name: format!("cov_diag_r{}", j + 1),
            estimate: stats::covariance(&diag, &disp),
            target: consts.v * t,
        });
        let sq: Vec<f64> = disp.iter().map(|d| d * d).collect();
        stats_out.push(Statistic { name: format!("second_moment_r{}", j + 1), estimate: Estimate::from_samples(&sq), target: t });
    }
    if k >= 2 {
        let mut target = 0.0;
        for a in 0..k {
            for b in a + 1..k {
                let gap = (starts[a] - starts[b]) as f64 / rn;
                target += consts.sigma2 * crate::she_oracle::mean_local_time(gap, t, crate::she_oracle::PAIR_RATE)?;
            }
        }
        stats_out.push(Statistic { name: "mean_off".into(), estimate: Estimate::from_samples(&off), target });
    }
    let mean_abs_err = std::array::from_fn(|a| {
        let v: Vec<f64> = rows.iter().map(|f| f.err[a].abs()).collect();
        Estimate::from_samples(&v)
    });
    Ok(InvarianceReport { n, k, t, stats: stats_out, mean_abs_err })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpMomentRow {
    pub n: usize,
    pub lambda: f64,
    /// Log of the sample mean of the exponential functional.
    pub log_estimate: Estimate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub k: usize,
    pub t: f64,
    pub rows: Vec<ExpMomentRow>,
    /// Smallest `C >= 1` with `log E <= log C + C lambda^2 t` on the grid, per `N`.
    pub fitted_c: Vec<(usize, f64)>,
    pub ratio: f64,
    pub pass: bool,
}

fn fit_envelope(points: &[(f64, f64)], t: f64) -> f64 {
    let mut c = 1.0f64;
    for &(lambda, log_e) in points {
        let g = |c: f64| c.ln() + c * lambda * lambda * t - log_e;
        if g(c) >= 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (c, c * 2.0);
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        c = hi;
    }
    c
}

/// `E[exp(lambda (N^{-1/2}|Off| + N^{-1/2}|Diag| + sum_a |Err^a|))]` over a
/// grid of `lambda`, with the envelope constant fitted separately at each `N`.
#[allow(clippy::too_many_arguments)]
pub fn exp_moment_probe(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    consts: &ConstantsReport,
    k: usize,
    t: f64,
    ns: &[usize],
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ExpMomentReport> {
    let mut rows = Vec::new();
    let mut fitted_c = Vec::new();
    let y = vec![0.0; k];
    for (idx, &n) in ns.iter().enumerate() {
        let (s, lam_n) = scaled(n, t)?;
        let ev = FunctionalEvaluator::new(spec, kernel, lam_n, consts)?;
        let sample = ev.sample(kernel, &lattice_starts(n, &y), s, samples, rng::child_seed(seed, Tag::Walk, idx as u64))?;
        let rn = (n as f64).sqrt();
        let x: Vec<f64> = sample
            .iter()
            .map(|f| (f.off.abs() + f.diag.abs()) / rn + f.err.iter().map(|e| e.abs()).sum::<f64>())
            .collect();
        let mut pts = Vec::new();
        for &lambda in lambdas {
            let log_estimate = if lambda == 0.0 {
                Estimate::exact(0.0)
            } else {
                let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
                stats::log_mean_exp(&scaled)
            };
            if !log_estimate.estimate.is_finite() {
                return Err(Error::Numeric(format!("exponential moment overflow at N = {n}, lambda = {lambda}")));
            }
            pts.push((lambda, log_estimate.estimate));
            rows.push(ExpMomentRow { n, lambda, log_estimate });
        }
        fitted_c.push((n, fit_envelope(&pts, t)));
    }
    let cmax = fitted_c.iter().map(|c| c.1).fold(0.0, f64::max);
    let cmin = fitted_c.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let ratio = cmax / cmin;
    Ok(ExpMomentReport { k, t, rows, fitted_c, ratio, pass: ratio.is_finite() && ratio <= 2.0 })
}
