//! Continuum targets: sheared heat kernel, Brownian local time and
//! exponential local-time moments.
//!
//! Local times here are occupation densities with respect to Lebesgue time,
//! `L_a(t) = int_0^t delta(B_s - a) ds`.

use quadrature::double_exponential;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, Tag};
use crate::stats::Estimate;

/// Variance rate of the difference of two independent standard Brownian motions.
pub const PAIR_RATE: f64 = 2.0;

const QUAD_TOL: f64 = 1e-10;

/// Test functions accepted by the oracles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant,
    /// `exp(-(x - center)^2 / (2 width^2))`.
    Gaussian { center: f64, width: f64 },
    /// Indicator of `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant => 1.0,
            TestFunction::Gaussian { center, width } => (-(x - center).powi(2) / (2.0 * width * width)).exp(),
            TestFunction::Interval { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TestFunction::Gaussian { width, center } if !(width > 0.0 && center.is_finite()) => {
                Err(Error::Argument(format!("Gaussian width must be positive, got {width}")))
            }
            TestFunction::Interval { lo, hi } if !(lo <= hi) => {
                Err(Error::Argument(format!("empty interval [{lo}, {hi}]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalTimeQuery {
    pub y: Vec<f64>,
    pub t: f64,
    pub sigma2: f64,
    pub v: f64,
    pub phi: TestFunction,
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `exp(x^2) erfc(x)`.
fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * erfc(x)
    } else {
        let r = 1.0 / (x * x);
        (1.0 - 0.5 * r + 0.75 * r * r - 1.875 * r * r * r) / (x * std::f64::consts::PI.sqrt())
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("time must be positive, got {t}")))
    }
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let out = double_exponential::integrate(f, a, b, QUAD_TOL);
    if !out.integral.is_finite() || out.error_estimate > 1e-8 {
        return Err(Error::Numeric(format!(
            "quadrature on [{a}, {b}] did not converge (error estimate {:e})",
            out.error_estimate
        )));
    }
    Ok(out.integral)
}

/// Density at `x` of a Gaussian with mean `v t` and variance `t`.
pub fn heat_kernel_shear(t: f64, x: f64, v: f64) -> Result<f64> {
    check_time(t)?;
    let z = x - v * t;
    Ok((-z * z / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt())
}

/// `E|N(a, s2)|`.
fn mean_abs_gaussian(a: f64, s2: f64) -> f64 {
    let s = s2.sqrt();
    s * (2.0 / std::f64::consts::PI).sqrt() * (-a * a / (2.0 * s2)).exp() + a * (1.0 - 2.0 * norm_cdf(-a / s))
}

/// Expected occupation density at `0` up to time `t` of a Brownian motion of
/// variance rate `nu` started at `a`: `(E|B_t + a| - |a|) / nu`.
pub fn mean_local_time(a: f64, t: f64, nu: f64) -> Result<f64> {
    check_time(t)?;
    if !(nu > 0.0) {
        return Err(Error::Argument(format!("variance rate must be positive, got {nu}")));
    }
    Ok((mean_abs_gaussian(a, nu * t) - a.abs()) / nu)
}

/// `E[exp(beta L_0(s)) h(sqrt(2) B_s)]` for a standard Brownian motion from 0,
/// with `h` the pair part of the test function.
fn g_from_zero(beta: f64, s: f64, width: Option<f64>) -> Result<f64> {
    if s <= 0.0 {
        return Ok(1.0);
    }
    match width {
        None => Ok(2.0 * (beta * beta * s / 2.0).exp() * norm_cdf(beta * s.sqrt())),
        Some(w) => {
            let c = w * (std::f64::consts::PI / 2.0).sqrt();
            let a = beta * w / std::f64::consts::SQRT_2;
            // Joint density of (L, |B|) through m = L + |B|.
            let inner = |m: f64| c * (erfcx(a) - erfcx((m + beta * w * w) / (w * std::f64::consts::SQRT_2)) * (-m * m / (2.0 * w * w) - beta * m).exp());
            let norm = 2.0 / (2.0 * std::f64::consts::PI * s * s * s).sqrt();
            let top = beta * s + 14.0 * s.sqrt();
            integrate(|m| norm * m * (-m * m / (2.0 * s) + beta * m).exp() * inner(m), 0.0, top)
        }
    }
}

/// `E[exp(sigma2 L_0^D(t)) h(D_t)]` for `D` of rate 2 from `d`, `h(x) = exp(-x^2 / (4 w^2))`
/// or `h = 1` when `width` is `None`.
fn pair_part(d: f64, t: f64, sigma2: f64, width: Option<f64>) -> Result<f64> {
    let beta = sigma2 / PAIR_RATE.sqrt();
    let b0 = d.abs() / PAIR_RATE.sqrt();
    let survive = match width {
        None => erf(b0 / (2.0 * t).sqrt()),
        Some(w) => {
            let top = b0 + 14.0 * t.sqrt();
            let phi_t = |x: f64| (-x * x / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt();
            integrate(|x| (phi_t(x - b0) - phi_t(x + b0)) * (-x * x / (2.0 * w * w)).exp(), 0.0, top)?
        }
    };
    if b0 == 0.0 {
        return g_from_zero(beta, t, width);
    }
    let hit = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        b0 / (2.0 * std::f64::consts::PI * u * u * u).sqrt() * (-b0 * b0 / (2.0 * u)).exp()
    };
    let err = std::cell::RefCell::new(None);
    let after = integrate(
        |u| match g_from_zero(beta, t - u, width) {
            Ok(g) => hit(u) * g,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        0.0,
        t,
    );
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(survive + after?)
}

/// `E[exp(sigma2 L_0^{W^1 - W^2}(t))]` for independent standard Brownian
/// motions started at `y1`, `y2`.
pub fn exp_local_time_moment_k2(y1: f64, y2: f64, t: f64, sigma2: f64) -> Result<f64> {
    check_time(t)?;
    if !(sigma2 >= 0.0) {
        return Err(Error::Argument(format!("sigma2 must be nonnegative, got {sigma2}")));
    }
    pair_part(y1 - y2, t, sigma2, None)
}

/// `E[exp(sigma2 L_0^{W^1 - W^2}(t)) phi(W^1_t + v t) phi(W^2_t + v t)]` for a
/// constant or Gaussian `phi`.
pub fn exp_local_time_moment_k2_phi(y1: f64, y2: f64, t: f64, sigma2: f64, v: f64, phi: &TestFunction) -> Result<f64> {
    check_time(t)?;
    phi.validate()?;
    if !(sigma2 >= 0.0) {
        return Err(Error::Argument(format!("sigma2 must be nonnegative, got {sigma2}")));
    }
    match *phi {
        TestFunction::Constant => pair_part(y1 - y2, t, sigma2, None),
        TestFunction::Gaussian { center, width } => {
            // The sum and the difference of the two walks are independent.
            let m = 0.5 * (y1 + y2) + v * t - center;
            let w2 = width * width;
            let sum_part = width / (w2 + t).sqrt() * (-m * m / (w2 + t)).exp();
            Ok(sum_part * pair_part(y1 - y2, t, sigma2, Some(width))?)
        }
        TestFunction::Interval { .. } => {
            Err(Error::Argument("the k = 2 quadrature supports constant and Gaussian test functions".into()))
        }
    }
}

/// `E[phi(W_t + v t)]` for a Brownian motion started at `y`.
pub fn first_moment_closed_form(y: f64, t: f64, v: f64, phi: &TestFunction) -> Result<f64> {
    check_time(t)?;
    phi.validate()?;
    let m = y + v * t;
    Ok(match *phi {
        TestFunction::Constant => 1.0,
        TestFunction::Gaussian { center, width } => {
            let w2 = width * width;
            width / (w2 + t).sqrt() * (-(m - center).powi(2) / (2.0 * (w2 + t))).exp()
        }
        TestFunction::Interval { lo, hi } => norm_cdf((hi - m) / t.sqrt()) - norm_cdf((lo - m) / t.sqrt()),
    })
}

/// Optional test function applied at an intermediate time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MidTime {
    pub time: f64,
    pub phi: TestFunction,
}

/// Monte Carlo of `E[exp(sigma2 sum_{i<j} L_0^{W^i - W^j}(t)) prod_j phi(W^j_t + v t)]`.
///
/// Each sample runs a path on `4 * mesh` steps; local times are box-kernel
/// occupation counts with half-width `sqrt(2 dt)`, evaluated on that path and
/// on its every-fourth-point subsample, and combined as `2 X_fine - X_coarse`
/// to cancel the `sqrt(dt)` bias.
pub fn she_moment_mc(
    query: &LocalTimeQuery,
    mid: Option<&MidTime>,
    samples: usize,
    mesh: usize,
    seed: u64,
) -> Result<Estimate> {
    check_time(query.t)?;
    query.phi.validate()?;
    let k = query.y.len();
    if k == 0 || k > 4 {
        return Err(Error::Argument(format!("k must be between 1 and 4, got {k}")));
    }
    if samples < 100 {
        return Err(Error::Argument(format!("need at least 100 samples, got {samples}")));
    }
    if mesh == 0 {
        return Err(Error::Argument("mesh must be positive".into()));
    }
    if let Some(m) = mid {
        m.phi.validate()?;
        if !(m.time > 0.0 && m.time <= query.t) {
            return Err(Error::Argument(format!("mid time must lie in (0, t], got {}", m.time)));
        }
    }
    let fine = 4 * mesh;
    let dt = query.t / fine as f64;
    let mid_step = mid.map(|m| ((m.time / dt).round() as usize).clamp(1, fine));
    let vals = exec::map_indexed(samples, |i| {
        let mut r = rng::stream(seed, Tag::Brownian, i as u64);
        let mut w: Vec<Vec<f64>> = query
            .y
            .iter()
            .map(|&y| {
                let mut p = Vec::with_capacity(fine + 1);
                p.push(y);
                p
            })
            .collect();
        let sd = dt.sqrt();
        for _ in 0..fine {
            for p in w.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut r);
                p.push(p.last().unwrap() + sd * z);
            }
        }
        let occupation = |stride: usize| {
            let h = (PAIR_RATE * dt * stride as f64).sqrt();
            let mut total = 0.0;
            for a in 0..k {
                for b in a + 1..k {
                    let count = (0..fine).step_by(stride).filter(|&n| (w[a][n] - w[b][n]).abs() < h).count();
                    total += count as f64 * dt * stride as f64 / (2.0 * h);
                }
            }
            total
        };
        let mut weight: f64 = w.iter().map(|p| query.phi.eval(p[fine] + query.v * query.t)).product();
        if let (Some(m), Some(n)) = (mid, mid_step) {
            weight *= w.iter().map(|p| m.phi.eval(p[n] + query.v * m.time)).product::<f64>();
        }
        if weight == 0.0 || query.sigma2 == 0.0 || k == 1 {
            return weight;
        }
        weight * (2.0 * (query.sigma2 * occupation(1)).exp() - (query.sigma2 * occupation(4)).exp())
    });
    Ok(Estimate::from_samples(&vals))
}
