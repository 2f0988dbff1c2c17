//! The acceptance criteria as runnable checks.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::report::{AcceptanceReport, Check, CriterionRow};
use crate::constants::{self, ConstantsReport};
use crate::cumulants::{self, CumulantMode};
use crate::env_field::{sample_environment, EnvironmentSpec, Region};
use crate::error::{Error, Result};
use crate::exec;
use crate::functionals;
use crate::polymer;
use crate::rng::{self, Tag};
use crate::she_oracle::{self, LocalTimeQuery, TestFunction};
use crate::stats::{self, Estimate};
use crate::transfer;

/// A named output file.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Artifact {
    fn json(name: &str, value: &impl Serialize) -> Result<Self> {
        Ok(Self { name: name.into(), contents: serde_json::to_vec_pretty(value)? })
    }

    fn csv(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Self> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(header)?;
        for r in rows {
            wr.write_record(r)?;
        }
        let contents = wr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(Self { name: name.into(), contents })
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub rows: Vec<CriterionRow>,
    pub artifacts: Vec<Artifact>,
}

/// One-line titles, indexed by criterion number minus one.
pub const TITLES: [&str; 14] = [
    "exact propagator identity",
    "exhaustive-oracle equivalence",
    "first-moment renormalization",
    "expansion of c_N",
    "cumulant rates of the eta sums",
    "factorial-linear cumulant bound",
    "shear and variance constants",
    "second-moment convergence",
    "first-moment shear drift",
    "invariance statistics",
    "moment-formula residual",
    "continuum oracle self-consistency",
    "law of total cumulance",
    "exponential moment envelope",
];

fn seed_for(cfg: &ExperimentConfig, criterion: u32) -> u64 {
    rng::child_seed(cfg.seed, Tag::Config, criterion as u64)
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

pub fn run_criterion(id: u32, cfg: &ExperimentConfig) -> Result<Outcome> {
    match id {
        1 => propagator(cfg),
        2 => exhaustive(cfg),
        3 => first_moment_mass(cfg),
        4 => expansion(cfg),
        5 => cumulant_rates(cfg),
        6 => fer_bound(cfg),
        7 => shear_constants(cfg),
        8 => second_moment(cfg),
        9 => drift(cfg),
        10 => invariance(cfg),
        11 => prop_a(cfg),
        12 => oracle(cfg),
        13 => total_cumulance(cfg),
        14 => envelope(cfg),
        _ => Err(Error::Argument(format!("no criterion {id}"))),
    }
}

fn propagator(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("default")?;
    let kernel = cfg.kernel();
    let seed = seed_for(cfg, 1);
    let count = cfg.samples.tuples.unwrap_or(100);
    let tol = cfg.tolerance_or("propagator", 1e-10);
    let run = |i: usize, mismatched: bool| -> Result<(f64, Vec<String>)> {
        let mut r = rng::stream(seed, Tag::Config, i as u64 + if mismatched { 1 << 32 } else { 0 });
        let lambda = if mismatched { r.random_range(0.3..1.0) } else { r.random_range(0.1..1.0) };
        let span: i64 = r.random_range(2..=64);
        let s: i64 = r.random_range(-100..100);
        let t = s + r.random_range(1..span);
        let u = s + span;
        let a: i64 = r.random_range(-8..=8);
        let offs = kernel.offsets();
        let b = a + (0..span).map(|_| offs[r.random_range(0..offs.len())]).sum::<i64>();
        let j = kernel.max_jump() * span;
        let region = Region::new(s, u, a.min(b) - j, a.max(b) + j)?;
        let env = sample_environment(&spec, region, rng::child_seed(seed, Tag::Environment, i as u64))?;
        let res = if mismatched {
            let other = sample_environment(&spec, region, rng::child_seed(seed, Tag::Environment, i as u64 + (1 << 32)))?;
            polymer::propagator_residual_split(&env, &other, &kernel, lambda, s, t, u, a, b)?
        } else {
            polymer::propagator_residual(&env, &kernel, lambda, s, t, u, a, b)?
        };
        let row = [lambda, s as f64, t as f64, u as f64, a as f64, b as f64].iter().map(|v| v.to_string()).chain([f(res)]).collect();
        Ok((res, row))
    };
    let good: Vec<(f64, Vec<String>)> = exec::map_indexed(count, |i| run(i, false)).into_iter().collect::<Result<_>>()?;
    let bad: Vec<(f64, Vec<String>)> = exec::map_indexed(10, |i| run(i, true)).into_iter().collect::<Result<_>>()?;
    let max = good.iter().map(|g| g.0).fold(0.0, f64::max);
    let min_bad = bad.iter().map(|g| g.0).fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        rows: vec![
            CriterionRow::new(1, format!("max relative residual over {count} configurations"), max, 0.0, tol, 0.0, Check::AtMost),
            CriterionRow::new(1, "mismatched environments stay far from the identity", min_bad, 0.0, 1e-3, 0.0, Check::AtLeast),
        ],
        artifacts: vec![Artifact::csv(
            "propagator.csv",
            &["lambda", "s", "t", "u", "a", "b", "residual"],
            good.into_iter().map(|g| g.1).collect(),
        )?],
    })
}

fn exhaustive(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("default")?;
    let kernel = cfg.kernel();
    let seed = seed_for(cfg, 2);
    let tol = cfg.tolerance_or("slab", 1e-12);
    let errs: Vec<Result<f64>> = exec::map_indexed(40, |i| {
        let mut r = rng::stream(seed, Tag::Config, i as u64);
        let lambda = r.random_range(0.1..1.5);
        let len: i64 = (i % 4) as i64;
        let t: i64 = r.random_range(-20..20);
        let y: i64 = r.random_range(-5..=5);
        let region = Region::new(t - 3, t, y - 8, y + 8)?;
        let env = sample_environment(&spec, region, rng::child_seed(seed, Tag::Environment, i as u64))?;
        let slab = polymer::partition_slab(&env, &kernel, lambda, t - len, t, y)?;
        let brute = polymer::slab_by_enumeration(&env, &kernel, lambda, t - len, t, y)?;
        let layer = slab.layer_at(t - len);
        let mut worst = 0.0f64;
        for x in layer.lo.min(*brute.keys().next().unwrap())..=layer.hi().max(*brute.keys().last().unwrap()) {
            let want = brute.get(&x).copied().unwrap_or(0.0);
            let got = layer.value(x);
            let rel = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
            worst = worst.max(rel);
        }
        Ok(worst)
    });
    let worst = errs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let mut rows = vec![CriterionRow::new(2, "slab vs path enumeration, t - s <= 3", worst, 0.0, tol, 0.0, Check::AtMost)];
    let walks = cfg.samples.walks.unwrap_or(20_000);
    let mut table = Vec::new();
    for n in 1..=6usize {
        let exact = transfer::log_mgf_by_enumeration(&spec, &kernel, n, (n as f64).powf(-0.25))?;
        let est = constants::c_n_estimate(&spec, &kernel, n, walks, rng::child_seed(seed, Tag::Walk, n as u64))?;
        rows.push(CriterionRow::new(2, "c_N estimate vs enumeration", est.estimate, est.std_error, exact, 0.0, Check::Within).at(n));
        table.push(vec![n.to_string(), f(exact), f(est.estimate), f(est.std_error)]);
    }
    Ok(Outcome { rows, artifacts: vec![Artifact::csv("cn.csv", &["N", "exact", "estimate", "se"], table)?] })
}

fn first_moment_mass(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("mirror")?;
    let kernel = cfg.kernel();
    let seed = seed_for(cfg, 3);
    let ns = cfg.ns_or(&[64, 256, 1024]);
    let t = cfg.t.unwrap_or(1.0);
    let walks = cfg.samples.walks.unwrap_or(1_000_000);
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut devs = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let m = polymer::mass_renormalization(&spec, &kernel, n, t, walks, rng::child_seed(seed, Tag::Walk, i as u64))?;
        rows.push(CriterionRow::new(3, "|normalized mass - 1| vs exact envelope", m.deviation, m.normalized_mass.std_error, m.envelope, 0.0, Check::Within).at(n));
        table.push(vec![n.to_string(), f(m.normalized_mass.estimate), f(m.normalized_mass.std_error), f(m.deviation), f(m.envelope)]);
        devs.push(m.deviation);
    }
    if ns.len() > 1 {
        rows.push(CriterionRow::flag(3, "deviation decreases in N", devs.windows(2).all(|w| w[1] < w[0])));
        let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = devs.iter().map(|d| d.ln()).collect();
        let tol = cfg.tolerance_or("mass_slope", 0.15);
        rows.push(CriterionRow::new(3, "log-log slope of the deviation", stats::slope(&x, &y), 0.0, -0.25, tol, Check::Within));
    }
    Ok(Outcome {
        rows,
        artifacts: vec![Artifact::csv("first_moment_mass.csv", &["N", "normalized_mass", "se", "deviation", "envelope"], table)?],
    })
}

fn expansion(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("mirror")?;
    let kernel = cfg.kernel();
    let ns = cfg.ns_or(&[64, 256, 1024, 4096]);
    let samples = cfg.samples.walks.unwrap_or(0);
    let rep = constants::ttc_check(&spec, &kernel, &ns, samples, seed_for(cfg, 4))?;
    let mut rows = Vec::new();
    for r in &rep.rows {
        rows.push(CriterionRow::new(4, "d_N within the envelope fitted at the smallest N", r.d_n, r.se, r.envelope, 0.0, Check::AtMost).at(r.n));
    }
    rows.push(CriterionRow::flag(4, "d_N decreases in N", rep.decreasing));
    rows.push(CriterionRow::new(4, "log-log slope of d_N", rep.slope, 0.0, -0.25, cfg.tolerance_or("ttc_slope", 0.15), Check::Within));
    let table = rep
        .rows
        .iter()
        .map(|r| vec![r.n.to_string(), f(r.c_n), f(r.c_n_se), f(r.expansion), f(r.d_n), f(r.envelope)])
        .collect();
    Ok(Outcome {
        rows,
        artifacts: vec![Artifact::csv("ttc.csv", &["N", "c_n", "c_n_se", "expansion", "d_n", "envelope"], table)?],
    })
}

fn cumulant_rates(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("default")?;
    let kernel = cfg.kernel();
    let seed = seed_for(cfg, 5);
    let (c2, c3, _) = constants::c_stars(&spec, &kernel)?;
    let walks = cfg.samples.walks.unwrap_or(20_000);
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let fit_s = 64usize;
    for (n, limit) in [(2usize, 2.0 * c2), (3, 6.0 * c3)] {
        let exact_fit = cumulants::eta_sum_cumulant(&spec, &kernel, n, fit_s, CumulantMode::Exact, 0, 0)?.kappa;
        let c = (exact_fit / fit_s as f64 - limit).abs() * fit_s as f64;
        for s in [128usize, 256] {
            let exact = cumulants::eta_sum_cumulant(&spec, &kernel, n, s, CumulantMode::Exact, 0, 0)?.kappa;
            let gap = (exact / s as f64 - limit).abs();
            // Relative slack for rounding in the transfer-matrix sums.
            let slack = 1e-12 * (exact.abs() / s as f64).max(1.0);
            rows.push(CriterionRow::new(5, format!("exact |kappa_{n}/s - limit| <= C/s"), gap, 0.0, c / s as f64, slack, Check::AtMost).at(s));
            let mc = cumulants::eta_sum_cumulant(&spec, &kernel, n, s, CumulantMode::MonteCarlo, walks, rng::child_seed(seed, Tag::Walk, (n * 1000 + s) as u64))?;
            let mc_gap = (mc.kappa / s as f64 - limit).abs();
            rows.push(CriterionRow::new(5, format!("Monte Carlo |kappa_{n}/s - limit| <= C/s"), mc_gap, mc.se / s as f64, c / s as f64, 0.0, Check::AtMost).at(s));
            rows.push(CriterionRow::new(5, format!("Monte Carlo kappa_{n} vs exact"), mc.kappa, mc.se, exact, 0.0, Check::Within).at(s));
            table.push(vec![n.to_string(), s.to_string(), f(exact), f(mc.kappa), f(mc.se), f(limit), f(c)]);
        }
    }
    Ok(Outcome {
        rows,
        artifacts: vec![Artifact::csv("cumulant_rates.csv", &["n", "s", "exact", "mc", "mc_se", "limit", "c"], table)?],
    })
}

fn fer_bound(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kernel = cfg.kernel();
    let names: Vec<&str> = if cfg.preset.is_some() || cfg.environment.is_some() { vec!["config"] } else { vec!["default", "sheared"] };
    let tol = cfg.tolerance_or("fer_slope", 0.05);
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    for name in names {
        let spec = if name == "config" { cfg.spec_or("default")? } else { EnvironmentSpec::preset(name)? };
        let rep = cumulants::fer_bound_report(&spec, &kernel, 6, &[32, 64, 128, 256])?;
        for (n, slope) in &rep.slopes {
            rows.push(CriterionRow::new(6, format!("{name}: slope of b_n,s against ln s, n = {n}"), *slope, 0.0, 0.0, tol, Check::Within));
        }
        rows.push(CriterionRow::flag(6, format!("{name}: b_n,s finite"), rep.max_b.is_finite()));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf)?;
        artifacts.push(Artifact { name: format!("fer_bound_{name}.csv"), contents: buf });
    }
    Ok(Outcome { rows, artifacts })
}

fn shear_constants(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kernel = cfg.kernel();
    let tol = cfg.tolerance_or("window", 1e-12);
    // Floating-point slack for sums that vanish exactly.
    let zero_tol = 1e-14;
    let mut rows = Vec::new();
    for name in ["white", "default", "mirror", "sheared", "spatial"] {
        let spec = EnvironmentSpec::preset(name)?;
        let d = spec.time_range();
        let v = constants::shear_v(&spec, &kernel)?;
        let g2 = constants::gamma_squared(&spec, &kernel)?;
        if spec.is_time_independent() || name != "sheared" {
            rows.push(CriterionRow::new(7, format!("{name}: v = 0"), v, 0.0, 0.0, zero_tol, Check::Within));
        }
        if spec.is_time_independent() {
            rows.push(CriterionRow::new(7, format!("{name}: gamma^2 = 0"), g2, 0.0, 0.0, zero_tol, Check::Within));
        }
        rows.push(CriterionRow::new(7, format!("{name}: gamma^2 - v^2 >= 0"), g2 - v * v, 0.0, 0.0, zero_tol, Check::AtLeast));
        let v2 = constants::shear_v_window(&spec, &kernel, 2 * d.max(1))?;
        let g22 = constants::gamma_squared_window(&spec, &kernel, 2 * d.max(1))?;
        rows.push(CriterionRow::new(7, format!("{name}: v under window doubling"), v2, 0.0, v, tol, Check::Within));
        rows.push(CriterionRow::new(7, format!("{name}: gamma^2 under window doubling"), g22, 0.0, g2, tol, Check::Within));
    }
    let spec = cfg.spec_or("default")?;
    let report = ConstantsReport::exact(&spec, &kernel)?;
    Ok(Outcome { rows, artifacts: vec![Artifact::json("constants.json", &report)?] })
}

fn gaussian_phi(cfg: &ExperimentConfig) -> TestFunction {
    cfg.phi.clone().unwrap_or(TestFunction::Gaussian { center: 0.0, width: 1.0 })
}

#[derive(Serialize)]
struct MomentRecord {
    n: usize,
    k: usize,
    t: f64,
    estimate: f64,
    std_error: f64,
    samples: usize,
    target: f64,
    config_hash: String,
}

fn second_moment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("white")?;
    let kernel = cfg.kernel();
    let t = cfg.t.unwrap_or(1.0);
    let k = cfg.k.unwrap_or(2);
    if k != 2 {
        return Err(Error::Config("the moment check runs with k = 2".into()));
    }
    let y = cfg.y.clone().unwrap_or(vec![0.0; 2]);
    let phi = gaussian_phi(cfg);
    let walks = cfg.samples.walks.unwrap_or(100_000);
    let consts = ConstantsReport::exact(&spec, &kernel)?;
    let rel = cfg.tolerance_or("moment_relative", 0.05);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (i, n) in cfg.ns_or(&[1024]).into_iter().enumerate() {
        let (s, lambda) = functionals::scaled(n, t)?;
        let starts = functionals::lattice_starts(n, &y);
        let rn = (n as f64).sqrt();
        let ph = phi.clone();
        let eval = move |x: i64| ph.eval(x as f64 / rn);
        let log_norm = transfer::f_cgf(&spec, &kernel, s, lambda)?;
        let est = polymer::moment_estimate_pathwise(&spec, &kernel, lambda, s, &starts, &eval, log_norm, walks, rng::child_seed(seed_for(cfg, 8), Tag::Walk, i as u64))?;
        let ym: Vec<f64> = starts.iter().map(|&v| v as f64 / rn).collect();
        let target = she_oracle::exp_local_time_moment_k2_phi(ym[0], ym[1], t, consts.sigma2, consts.v, &phi)?;
        rows.push(CriterionRow::new(8, "two-point moment vs local-time quadrature", est.estimate, est.std_error, target, rel * target.abs(), Check::WithinMax).at(n));
        records.push(MomentRecord { n, k, t, estimate: est.estimate, std_error: est.std_error, samples: est.samples, target, config_hash: cfg.hash() });
    }
    Ok(Outcome { rows, artifacts: vec![Artifact::json("moment.json", &records)?] })
}

fn drift(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("sheared")?;
    let kernel = cfg.kernel();
    let t = cfg.t.unwrap_or(1.0);
    let walks = cfg.samples.walks.unwrap_or(100_000);
    let v = constants::shear_v(&spec, &kernel)?;
    let rel = cfg.tolerance_or("drift_relative", 0.10);
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (i, n) in cfg.ns_or(&[1024]).into_iter().enumerate() {
        let d = polymer::first_moment_drift(&spec, &kernel, n, t, walks, rng::child_seed(seed_for(cfg, 9), Tag::Walk, i as u64))?;
        rows.push(CriterionRow::new(9, "first-moment drift vs v t", d.estimate, d.std_error, v * t, rel * (v * t).abs(), Check::WithinMax).at(n));
        table.push(vec![n.to_string(), t.to_string(), f(d.estimate), f(d.std_error), f(v * t)]);
    }
    Ok(Outcome { rows, artifacts: vec![Artifact::csv("first_moment_drift.csv", &["N", "t", "drift", "se", "v_t"], table)?] })
}

fn invariance(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kernel = cfg.kernel();
    let names: Vec<&str> = if cfg.preset.is_some() || cfg.environment.is_some() { vec!["config"] } else { vec!["default", "sheared"] };
    let ns = cfg.ns_or(&[64, 256, 1024]);
    let t = cfg.t.unwrap_or(1.0);
    let k = cfg.k.unwrap_or(2);
    let y = cfg.y.clone().unwrap_or(vec![0.0; k]);
    let tuples = cfg.samples.tuples.unwrap_or(20_000);
    let rel = cfg.tolerance_or("invariance_relative", 0.10);
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (pi, name) in names.iter().enumerate() {
        let spec = if *name == "config" { cfg.spec_or("default")? } else { EnvironmentSpec::preset(name)? };
        let consts = ConstantsReport::exact(&spec, &kernel)?;
        let mut errs = Vec::new();
        for (i, &n) in ns.iter().enumerate() {
            let seed = rng::child_seed(seed_for(cfg, 10), Tag::Walk, (pi * 100 + i) as u64);
            let rep = functionals::invariance_stats(&spec, &kernel, &consts, k, t, n, &y, tuples, seed)?;
            for s in &rep.stats {
                let checked = s.name.starts_with("var_diag") || s.name.starts_with("cov_diag") || s.name == "mean_off";
                let row = CriterionRow::new(10, format!("{name}: {}", s.name), s.estimate.estimate, s.estimate.std_error, s.target, rel * s.target.abs(), Check::WithinMax).at(n);
                table.push(vec![n.to_string(), k.to_string(), t.to_string(), format!("{name}:{}", s.name), f(s.estimate.estimate), f(s.estimate.std_error), f(s.target), row.pass.to_string()]);
                if checked && i + 1 == ns.len() {
                    rows.push(row);
                }
            }
            errs.push(rep.mean_abs_err);
        }
        for a in 0..4 {
            let means: Vec<f64> = errs.iter().map(|e| e[a].estimate).collect();
            let ok = means.iter().all(|m| *m == 0.0) || means.windows(2).all(|w| w[1] < w[0]);
            rows.push(CriterionRow::flag(10, format!("{name}: mean |Err^{}| shrinks across N", a + 1), ok));
            for (n, m) in ns.iter().zip(&errs) {
                table.push(vec![n.to_string(), k.to_string(), t.to_string(), format!("{name}:mean_abs_err{}", a + 1), f(m[a].estimate), f(m[a].std_error), String::new(), String::new()]);
            }
        }
    }
    Ok(Outcome {
        rows,
        artifacts: vec![Artifact::csv("invariance.csv", &["N", "k", "t", "statistic", "estimate", "se", "target", "pass"], table)?],
    })
}

fn prop_a(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("default")?;
    let kernel = cfg.kernel();
    let consts = ConstantsReport::exact(&spec, &kernel)?;
    let ns = cfg.ns_or(&[64, 256, 1024]);
    let t = cfg.t.unwrap_or(1.0);
    let k = cfg.k.unwrap_or(2);
    let y = cfg.y.clone().unwrap_or(vec![0.0; k]);
    let tuples = cfg.samples.tuples.unwrap_or(1000);
    let mut reps = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        reps.push(functionals::prop_a_residual(&spec, &kernel, &consts, n, t, &y, tuples, rng::child_seed(seed_for(cfg, 11), Tag::Walk, i as u64))?);
    }
    let n0 = reps[0].n as f64;
    let c = (reps[0].max_abs - reps[0].err5_budget).max(0.0) * n0.powf(0.25);
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for r in &reps {
        let bound = r.err5_budget + c * (r.n as f64).powf(-0.25);
        rows.push(CriterionRow::new(11, "max residual <= remainder budget + C N^{-1/4}", r.max_abs, 0.0, bound, 0.0, Check::AtMost).at(r.n));
        table.push(vec![r.n.to_string(), k.to_string(), t.to_string(), f(r.max_abs), f(r.mean_abs), f(r.err5_budget), f(c)]);
    }
    Ok(Outcome {
        rows,
        artifacts: vec![Artifact::csv("prop_a.csv", &["N", "k", "t", "max_abs", "mean_abs", "err5_budget", "fitted_c"], table)?],
    })
}

fn oracle(cfg: &ExperimentConfig) -> Result<Outcome> {
    let seed = seed_for(cfg, 12);
    let samples = cfg.samples.brownian.unwrap_or(40_000);
    let mesh = cfg.samples.mesh.unwrap_or(256);
    let phi = cfg.phi.clone().unwrap_or(TestFunction::Constant);
    let sigma2 = 1.0;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut idx = 0;
    for &t in &[0.5, 1.0, 2.0] {
        for &d in &[0.0, 0.5, 1.0] {
            let q = LocalTimeQuery { y: vec![0.0, d], t, sigma2, v: 0.0, phi: phi.clone() };
            let mc = she_oracle::she_moment_mc(&q, None, samples, mesh, rng::child_seed(seed, Tag::Brownian, idx))?;
            let quad = she_oracle::exp_local_time_moment_k2_phi(0.0, d, t, sigma2, 0.0, &phi)?;
            rows.push(CriterionRow::new(12, format!("Brownian Monte Carlo vs quadrature, t = {t}, |y1 - y2| = {d}"), mc.estimate, mc.std_error, quad, 0.0, Check::Within));
            table.push(vec![t.to_string(), d.to_string(), f(mc.estimate), f(mc.std_error), f(quad)]);
            idx += 1;
        }
    }
    let draws = 1_000_000usize;
    for (j, &(a, t, nu)) in [(0.0f64, 1.0f64, 1.0f64), (0.5, 1.0, 2.0), (1.0, 2.0, 1.0)].iter().enumerate() {
        let vals = exec::map_indexed(draws / 1000, |b| {
            let mut r = rng::stream(seed, Tag::Joint, (j * 1_000_000 + b) as u64);
            (0..1000)
                .map(|_| {
                    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
                    ((nu * t).sqrt() * z + a).abs() - f64::abs(a)
                })
                .collect::<Vec<f64>>()
        });
        let flat: Vec<f64> = vals.concat().into_iter().map(|v| v / nu).collect();
        let e = Estimate::from_samples(&flat);
        let closed = she_oracle::mean_local_time(a, t, nu)?;
        rows.push(CriterionRow::new(12, format!("mean local time closed form vs Monte Carlo, a = {a}, t = {t}, rate = {nu}"), e.estimate, e.std_error, closed, 0.0, Check::Within).with_z(4.0));
    }
    Ok(Outcome { rows, artifacts: vec![Artifact::csv("oracle.csv", &["t", "gap", "mc", "se", "quadrature"], table)?] })
}

fn total_cumulance(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("default")?;
    let kernel = cfg.kernel();
    let seed = seed_for(cfg, 13);
    let walks = cfg.samples.walks.unwrap_or(20_000);
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut r = rng::stream(seed, Tag::Config, 0);
    for i in 0..20u64 {
        let lags: [i64; 4] = std::array::from_fn(|_| r.random_range(0..=6));
        let tc = cumulants::total_cumulance_residual(&spec, &kernel, lags, walks, rng::child_seed(seed, Tag::Walk, i))?;
        // Round-off floor for tuples where every term vanishes.
        let floor = 1e-12 * (1.0 + tc.mixed.abs());
        rows.push(CriterionRow::new(13, format!("residual at lags {lags:?}"), tc.residual.estimate, tc.residual.std_error, 0.0, floor, Check::Within));
        table.push(vec![format!("{lags:?}"), f(tc.decomposition.estimate), f(tc.mixed), f(tc.residual.estimate), f(tc.residual.std_error)]);
    }
    Ok(Outcome {
        rows,
        artifacts: vec![Artifact::csv("total_cumulance.csv", &["lags", "decomposition", "mixed", "residual", "se"], table)?],
    })
}

fn envelope(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.spec_or("default")?;
    let kernel = cfg.kernel();
    let consts = ConstantsReport::exact(&spec, &kernel)?;
    let ns = cfg.ns_or(&[64, 256]);
    let k = cfg.k.unwrap_or(2);
    let t = cfg.t.unwrap_or(1.0);
    let tuples = cfg.samples.tuples.unwrap_or(5000);
    let rep = functionals::exp_moment_probe(&spec, &kernel, &consts, k, t, &ns, &[0.25, 0.5, 1.0], tuples, seed_for(cfg, 14))?;
    let limit = cfg.tolerance_or("envelope_ratio", 2.0);
    let rows = vec![CriterionRow::new(14, "ratio of fitted envelope constants across N", rep.ratio, 0.0, limit, 0.0, Check::AtMost)];
    let table = rep
        .rows
        .iter()
        .map(|r| {
            let c = rep.fitted_c.iter().find(|c| c.0 == r.n).map(|c| c.1).unwrap_or(f64::NAN);
            vec![r.n.to_string(), r.lambda.to_string(), f(r.log_estimate.estimate), f(r.log_estimate.std_error), f(c)]
        })
        .collect();
    Ok(Outcome {
        rows,
        artifacts: vec![Artifact::csv("exp_moment.csv", &["N", "lambda", "log_estimate", "se", "fitted_c"], table)?],
    })
}

/// CLI subcommands and the criteria each one runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Constants,
    Cn,
    FirstMoment,
    Moment,
    Invariance,
    PropagatorCheck,
    CumulantBound,
    PropACheck,
    Oracle,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Cn => "cn",
            Command::FirstMoment => "first-moment",
            Command::Moment => "moment",
            Command::Invariance => "invariance",
            Command::PropagatorCheck => "propagator-check",
            Command::CumulantBound => "cumulant-bound",
            Command::PropACheck => "prop-a-check",
            Command::Oracle => "oracle",
            Command::All => "all",
        }
    }

    pub fn criteria(self) -> Vec<u32> {
        match self {
            Command::PropagatorCheck => vec![1],
            Command::Cn => vec![2],
            Command::FirstMoment => vec![3, 9],
            Command::Constants => vec![4, 7],
            Command::CumulantBound => vec![5, 6, 13],
            Command::Moment => vec![8],
            Command::Invariance => vec![10],
            Command::PropACheck => vec![11, 14],
            Command::Oracle => vec![12],
            Command::All => (1..=14).collect(),
        }
    }
}

/// Runs the criteria of `command`. Deterministic in `(config, seed)` apart from runtimes.
pub fn run_experiment(command: Command, cfg: &ExperimentConfig) -> Result<(AcceptanceReport, Vec<Artifact>)> {
    cfg.validate()?;
    let mut report = AcceptanceReport::new(command.name(), cfg.hash(), cfg.seed);
    let mut artifacts = Vec::new();
    for id in command.criteria() {
        let start = Instant::now();
        let out = run_criterion(id, cfg)?;
        report.runtime_s.insert(id, start.elapsed().as_secs_f64());
        report.rows.extend(out.rows);
        artifacts.extend(out.artifacts);
    }
    Ok((report, artifacts))
}

/// Writes `report.json`, `report.csv` and every artifact under `dir`.
pub fn write_outputs(dir: &std::path::Path, report: &AcceptanceReport, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    report.write_json(std::fs::File::create(dir.join("report.json"))?)?;
    report.write_csv(std::fs::File::create(dir.join("report.csv"))?)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_criterion_reachable_from_exactly_one_command() {
        let cmds = [
            Command::Constants,
            Command::Cn,
            Command::FirstMoment,
            Command::Moment,
            Command::Invariance,
            Command::PropagatorCheck,
            Command::CumulantBound,
            Command::PropACheck,
            Command::Oracle,
        ];
        for id in 1..=14 {
            assert_eq!(cmds.iter().filter(|c| c.criteria().contains(&id)).count(), 1, "{id}");
        }
        assert_eq!(Command::All.criteria().len(), 14);
    }

    #[test]
    fn empty_n_list_is_a_config_error() {
        let mut cfg = ExperimentConfig::with_seed(1);
        cfg.n = Some(vec![]);
        assert!(matches!(run_experiment(Command::Cn, &cfg), Err(Error::Config(_))));
    }
}
