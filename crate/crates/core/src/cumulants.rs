//! Moments, cumulants and set partitions.

use serde::{Deserialize, Serialize};

use crate::env_field::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, Tag};
use crate::stats::{self, Estimate};
use crate::transfer;
use crate::walk::WalkKernel;
use crate::weights::WalkSample;

pub const MAX_JOINT_ORDER: usize = 6;

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Cumulants from raw moments (`m[0] = 1`). Output index 0 is 0.
pub fn cumulants_from_moments(m: &[f64]) -> Vec<f64> {
    let n = m.len().saturating_sub(1);
    let mut k = vec![0.0; n + 1];
    for i in 1..=n {
        let mut s = m[i];
        for j in 1..i {
            s -= binom(i - 1, j - 1) * k[j] * m[i - j];
        }
        k[i] = s;
    }
    k
}

/// Raw moments from cumulants through the complete Bell recursion.
pub fn moments_from_cumulants(k: &[f64]) -> Vec<f64> {
    let n = k.len().saturating_sub(1);
    let mut m = vec![0.0; n + 1];
    m[0] = 1.0;
    for i in 1..=n {
        let mut s = 0.0;
        for j in 1..=i {
            s += binom(i - 1, j - 1) * k[j] * m[i - j];
        }
        m[i] = s;
    }
    m
}

/// All set partitions of `0..n` as block lists.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut a = vec![0usize; n];
    fn rec(i: usize, max: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        let n = a.len();
        if i == n {
            let nb = if n == 0 { 0 } else { a.iter().max().unwrap() + 1 };
            let mut blocks = vec![Vec::new(); nb];
            for (e, &b) in a.iter().enumerate() {
                blocks[b].push(e);
            }
            out.push(blocks);
            return;
        }
        for b in 0..=max {
            a[i] = b;
            rec(i + 1, if b == max { max + 1 } else { max }, a, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    rec(0, 0, &mut a, &mut out);
    out
}

/// Joint cumulant `kappa(X_{i_1}, ..., X_{i_n})` from a mixed-moment oracle.
///
/// `moment(sub)` must return `E[prod_{i in sub} X_i]` for any sub-multiset.
pub fn joint_cumulant(moment: impl Fn(&[usize]) -> f64, indices: &[usize]) -> Result<f64> {
    let n = indices.len();
    if n == 0 || n > MAX_JOINT_ORDER {
        return Err(Error::Order(n));
    }
    let mut fact = [1.0f64; 8];
    for i in 1..8 {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut total = 0.0;
    let mut buf = Vec::with_capacity(n);
    for part in set_partitions(n) {
        let nb = part.len();
        let mut prod = fact[nb - 1] * if nb % 2 == 1 { 1.0 } else { -1.0 };
        for block in &part {
            buf.clear();
            buf.extend(block.iter().map(|&e| indices[e]));
            prod *= moment(&buf);
        }
        total += prod;
    }
    Ok(total)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CumulantMode {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CumulantEntry {
    pub n: usize,
    pub s: usize,
    pub kappa: f64,
    pub se: f64,
    pub provenance: CumulantMode,
}

/// Number of jackknife groups used for Monte Carlo cumulant errors.
const JACKKNIFE_GROUPS: usize = 20;

/// `kappa_n(eta_1 + ... + eta_s)` for `n <= 6`.
///
/// `Exact` runs the transfer matrix. `MonteCarlo` samples walks; given a walk
/// the sum is a fixed linear combination of innovations, so its conditional
/// cumulants are exact and only the walk average is random. Errors come from
/// a grouped jackknife.
pub fn eta_sum_cumulant(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    n: usize,
    s: usize,
    mode: CumulantMode,
    samples: usize,
    seed: u64,
) -> Result<CumulantEntry> {
    if n == 0 || n > MAX_JOINT_ORDER {
        return Err(Error::Order(n));
    }
    match mode {
        CumulantMode::Exact => {
            if samples != 0 {
                return Err(Error::Argument("exact mode takes no samples".into()));
            }
            let k = transfer::eta_sum_cumulants_exact(spec, kernel, s)?;
            Ok(CumulantEntry { n, s, kappa: k[n], se: 0.0, provenance: mode })
        }
        CumulantMode::MonteCarlo => {
            if samples < 2 * JACKKNIFE_GROUPS {
                return Err(Error::Argument(format!(
                    "Monte Carlo mode needs at least {} samples",
                    2 * JACKKNIFE_GROUPS
                )));
            }
            let moments = exec::map_indexed(samples, |i| {
                let mut r = rng::stream(seed, Tag::Walk, i as u64);
                conditional_moments(spec, kernel, s, &mut r, n)
            });
            let (kappa, se) = jackknife_cumulant(&moments, n);
            Ok(CumulantEntry { n, s, kappa, se, provenance: mode })
        }
    }
}

/// Raw moments `E[S^j | R]`, `j = 0..=n`, of the `s`-term sum along one sampled walk.
fn conditional_moments(spec: &EnvironmentSpec, kernel: &WalkKernel, s: usize, r: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    if s == 0 {
        let mut m = vec![0.0; n + 1];
        m[0] = 1.0;
        return m;
    }
    let w = WalkSample::sample(kernel, s - 1, 0, r);
    let points: Vec<(i64, i64)> = w.pos.iter().enumerate().map(|(t, &x)| (-(t as i64), x)).collect();
    let c = spec.path_site_coefficients(&points);
    let mut k = vec![0.0; n + 1];
    for (j, kj) in k.iter_mut().enumerate().skip(2) {
        *kj = spec.kappa(j) * c.values().map(|v| v.powi(j as i32)).sum::<f64>();
    }
    moments_from_cumulants(&k)
}

fn cumulant_of_mean(rows: &[Vec<f64>], skip: std::ops::Range<usize>, n: usize) -> f64 {
    let mut m = vec![0.0; n + 1];
    let mut count = 0.0;
    for (i, r) in rows.iter().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
        count += 1.0;
    }
    m.iter_mut().for_each(|v| *v /= count);
    cumulants_from_moments(&m)[n]
}

fn jackknife_cumulant(rows: &[Vec<f64>], n: usize) -> (f64, f64) {
    let full = cumulant_of_mean(rows, 0..0, n);
    let g = JACKKNIFE_GROUPS;
    let size = rows.len() / g;
    let leave: Vec<f64> = (0..g)
        .map(|k| {
            let end = if k + 1 == g { rows.len() } else { (k + 1) * size };
            cumulant_of_mean(rows, k * size..end, n)
        })
        .collect();
    let (mean, _) = stats::mean_var(&leave);
    let ss: f64 = leave.iter().map(|x| (x - mean).powi(2)).sum();
    (full, ((g as f64 - 1.0) / g as f64 * ss).sqrt())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FerRow {
    pub n: usize,
    pub s: usize,
    pub kappa: f64,
    /// `(|kappa_n| / (n! s))^{1/n}`.
    pub b: f64,
    pub provenance: CumulantMode,
    pub se: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FerReport {
    pub rows: Vec<FerRow>,
    /// Least-squares slope of `b` against `ln s`, per order `n = 2..`.
    pub slopes: Vec<(usize, f64)>,
    pub max_b: f64,
    pub slope_tolerance: f64,
    pub pass: bool,
}

impl FerReport {
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "s", "kappa", "b", "provenance", "se"])?;
        for r in &self.rows {
            let prov = match r.provenance {
                CumulantMode::Exact => "exact",
                CumulantMode::MonteCarlo => "mc",
            };
            wr.write_record([
                r.n.to_string(),
                r.s.to_string(),
                format!("{:e}", r.kappa),
                format!("{:e}", r.b),
                prov.to_string(),
                format!("{:e}", r.se),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Exact `b_{n,s}` table for `n = 2..=n_max` over the `s` grid, with a no-trend check.
pub fn fer_bound_report(spec: &EnvironmentSpec, kernel: &WalkKernel, n_max: usize, grid: &[usize]) -> Result<FerReport> {
    if !(2..=MAX_JOINT_ORDER).contains(&n_max) {
        return Err(Error::Order(n_max));
    }
    if grid.len() < 2 || grid.contains(&0) {
        return Err(Error::Argument("the s grid needs at least two positive entries".into()));
    }
    let tm = transfer::Transfer::new(spec, kernel)?;
    let tables = exec::map_indexed(grid.len(), |i| tm.sum_cumulants(grid[i] - 1));
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    let tol = 0.05;
    for n in 2..=n_max {
        let mut bs = Vec::new();
        for (&s, k) in grid.iter().zip(&tables) {
            let b = (k[n].abs() / (factorial(n) * s as f64)).powf(1.0 / n as f64);
            bs.push(b);
            rows.push(FerRow { n, s, kappa: k[n], b, provenance: CumulantMode::Exact, se: 0.0 });
        }
        let xs: Vec<f64> = grid.iter().map(|&s| (s as f64).ln()).collect();
        slopes.push((n, stats::slope(&xs, &bs)));
    }
    let max_b = rows.iter().map(|r| r.b).fold(0.0, f64::max);
    let pass = max_b.is_finite() && slopes.iter().all(|(_, sl)| sl.abs() <= tol);
    Ok(FerReport { rows, slopes, max_b, slope_tolerance: tol, pass })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TotalCumulance {
    pub lags: [i64; 4],
    /// `E_R[kappa(eta_{r_1}, ..., eta_{r_4} | R)]` plus the three pair covariances.
    pub decomposition: Estimate,
    /// `kappa(eta_{r_1}, ..., eta_{r_4})` by exhaustive enumeration of the walk window.
    pub mixed: f64,
    /// `decomposition - mixed`.
    pub residual: Estimate,
}

/// Largest lag accepted by the enumeration of the mixed cumulant.
pub const MAX_TOTAL_CUMULANCE_LAG: i64 = 7;

const PAIRINGS: [[(usize, usize); 2]; 3] = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];

struct Conditional {
    k4: f64,
    pairs: [[f64; 4]; 4],
    triples: [[[f64; 4]; 4]; 4],
}

fn conditional(spec: &EnvironmentSpec, pts: &[(i64, i64); 4]) -> Result<Conditional> {
    let mut pairs = [[0.0; 4]; 4];
    let mut triples = [[[0.0; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            pairs[a][b] = spec.joint_cumulant_omega(&[pts[a], pts[b]])?;
            for c in 0..4 {
                triples[a][b][c] = spec.joint_cumulant_omega(&[pts[a], pts[b], pts[c]])?;
            }
        }
    }
    Ok(Conditional { k4: spec.joint_cumulant_omega(pts)?, pairs, triples })
}

fn lag_points(pos: &[i64], lags: &[i64; 4]) -> [(i64, i64); 4] {
    let mut p = [(0, 0); 4];
    for (q, &r) in p.iter_mut().zip(lags) {
        *q = (-r, pos[r as usize]);
    }
    p
}

fn check_lags(lags: &[i64; 4]) -> Result<i64> {
    if lags.iter().any(|&r| !(0..=MAX_TOTAL_CUMULANCE_LAG).contains(&r)) {
        return Err(Error::Argument(format!("lags must lie in 0..={MAX_TOTAL_CUMULANCE_LAG}, got {lags:?}")));
    }
    Ok(*lags.iter().max().unwrap())
}

/// Exact `kappa(eta_{r_1}, ..., eta_{r_4})` under a finite walk law given as
/// `(increments, probability)` pairs, through the joint-cumulant engine.
pub fn mixed_cumulant_exact(spec: &EnvironmentSpec, law: &[(Vec<i64>, f64)], lags: &[i64; 4]) -> Result<f64> {
    check_lags(lags)?;
    let mut m2 = [[0.0; 4]; 4];
    let mut m3 = [[[0.0; 4]; 4]; 4];
    let mut m4 = 0.0;
    for (incs, p) in law {
        let mut pos = vec![0i64];
        for d in incs {
            pos.push(pos.last().unwrap() + d);
        }
        if (pos.len() as i64) <= *lags.iter().max().unwrap() {
            return Err(Error::Argument("walk law is shorter than the largest lag".into()));
        }
        let c = conditional(spec, &lag_points(&pos, lags))?;
        for a in 0..4 {
            for b in 0..4 {
                m2[a][b] += p * c.pairs[a][b];
                for d in 0..4 {
                    m3[a][b][d] += p * c.triples[a][b][d];
                }
            }
        }
        let pairs_sum: f64 = PAIRINGS.iter().map(|[(a, b), (c2, d)]| c.pairs[*a][*b] * c.pairs[*c2][*d]).sum();
        m4 += p * (c.k4 + pairs_sum);
    }
    joint_cumulant(
        |sub: &[usize]| match sub.len() {
            0 => 1.0,
            1 => 0.0,
            2 => m2[sub[0]][sub[1]],
            3 => m3[sub[0]][sub[1]][sub[2]],
            _ => m4,
        },
        &[0, 1, 2, 3],
    )
}

/// Monte Carlo check of the law of total cumulance for four lags of the
/// `eta` sequence: conditional cumulants given the walk are exact, the walk
/// average and the pair covariances are sampled, and the result is compared
/// with the exactly enumerated mixed cumulant.
pub fn total_cumulance_residual(
    spec: &EnvironmentSpec,
    kernel: &WalkKernel,
    lags: [i64; 4],
    samples: usize,
    seed: u64,
) -> Result<TotalCumulance> {
    let w = check_lags(&lags)?;
    if samples < 2 {
        return Err(Error::Argument("need at least 2 samples".into()));
    }
    let law = kernel.window_joint_law(w as usize)?;
    let mixed = mixed_cumulant_exact(spec, &law, &lags)?;
    let conds: Vec<Result<Conditional>> = exec::map_indexed(samples, |i| {
        let mut r = rng::stream(seed, Tag::Walk, i as u64);
        let path = WalkSample::sample(kernel, w as usize, 0, &mut r);
        conditional(spec, &lag_points(&path.pos, &lags))
    });
    let conds: Vec<Conditional> = conds.into_iter().collect::<Result<_>>()?;
    let nf = samples as f64;
    let mut mean = [[0.0; 4]; 4];
    for c in &conds {
        for a in 0..4 {
            for b in 0..4 {
                mean[a][b] += c.pairs[a][b] / nf;
            }
        }
    }
    let g: Vec<f64> = conds
        .iter()
        .map(|c| {
            let cov: f64 = PAIRINGS
                .iter()
                .map(|[(a, b), (c2, d)]| (c.pairs[*a][*b] - mean[*a][*b]) * (c.pairs[*c2][*d] - mean[*c2][*d]))
                .sum();
            c.k4 + cov * nf / (nf - 1.0)
        })
        .collect();
    let decomposition = Estimate::from_samples(&g);
    let residual = Estimate { estimate: decomposition.estimate - mixed, ..decomposition };
    Ok(TotalCumulance { lags, decomposition, mixed, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n).len(), b);
        }
    }

    #[test]
    fn moment_cumulant_roundtrip() {
        let k = [0.0, 0.3, 1.7, -0.4, 2.2, -1.1, 0.9];
        let m = moments_from_cumulants(&k);
        let back = cumulants_from_moments(&m);
        for i in 1..k.len() {
            assert!((back[i] - k[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_moments() {
        let m = moments_from_cumulants(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m[4], 3.0);
        assert_eq!(m[6], 15.0);
    }

    #[test]
    fn rademacher_fourth_cumulant_from_partitions() {
        // E[X^n] = 1 for even n, 0 for odd.
        let k = joint_cumulant(|s| if s.len() % 2 == 0 { 1.0 } else { 0.0 }, &[0, 0, 0, 0]).unwrap();
        assert!((k + 2.0).abs() < 1e-14);
        assert!(joint_cumulant(|_| 1.0, &[0; 7]).is_err());
    }

    #[test]
    fn second_order_is_covariance() {
        // X0, X1 with E X0 = 1, E X1 = 2, E X0 X1 = 5.
        let m = |s: &[usize]| match s {
            [0] => 1.0,
            [1] => 2.0,
            [0, 1] | [1, 0] => 5.0,
            _ => unreachable!(),
        };
        assert_eq!(joint_cumulant(m, &[0, 1]).unwrap(), 3.0);
    }

    #[test]
    fn rademacher_fourth_cumulant() {
        let m = [1.0, 0.0, 1.0, 0.0, 1.0];
        assert!((cumulants_from_moments(&m)[4] + 2.0).abs() < 1e-15);
        let k4 = joint_cumulant(|sub: &[usize]| if sub.len().is_multiple_of(2) { 1.0 } else { 0.0 }, &[0, 0, 0, 0]).unwrap();
        assert!((k4 + 2.0).abs() < 1e-15);
    }

    #[test]
    fn eta_sum_mean_is_zero_and_modes_agree() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::default_preset();
        assert_eq!(eta_sum_cumulant(&spec, &k, 1, 5, CumulantMode::Exact, 0, 0).unwrap().kappa.abs(), 0.0);
        for s in 1..=4 {
            for n in 2..=6 {
                let e = eta_sum_cumulant(&spec, &k, n, s, CumulantMode::Exact, 0, 0).unwrap();
                let m = eta_sum_cumulant(&spec, &k, n, s, CumulantMode::MonteCarlo, 20000, 3 + s as u64).unwrap();
                assert!((e.kappa - m.kappa).abs() <= 3.0 * m.se + 1e-9 * e.kappa.abs(), "{n} {s} {e:?} {m:?}");
            }
        }
        assert!(eta_sum_cumulant(&spec, &k, 7, 4, CumulantMode::Exact, 0, 0).is_err());
        assert!(eta_sum_cumulant(&spec, &k, 2, 4, CumulantMode::Exact, 10, 0).is_err());
        assert!(eta_sum_cumulant(&spec, &k, 2, 4, CumulantMode::MonteCarlo, 10, 1).is_err());
    }

    #[test]
    fn eta_sum_second_cumulant_tracks_c2_star() {
        let k = WalkKernel::default_kernel();
        let spec = EnvironmentSpec::sheared();
        let c2 = crate::constants::c2_star(&spec, &k).unwrap();
        let e64 = eta_sum_cumulant(&spec, &k, 2, 64, CumulantMode::Exact, 0, 0).unwrap().kappa;
        let e128 = eta_sum_cumulant(&spec, &k, 2, 128, CumulantMode::Exact, 0, 0).unwrap().kappa;
        let c = (e64 / 64.0 - 2.0 * c2).abs() * 64.0;
        assert!(((e128 / 128.0 - 2.0 * c2).abs() * 128.0 - c).abs() < 1e-9);
        let m = eta_sum_cumulant(&spec, &k, 2, 64, CumulantMode::MonteCarlo, 4000, 1).unwrap();
        assert!((m.kappa / 64.0 - 2.0 * c2).abs() <= 3.0 * m.se / 64.0 + c / 64.0);
    }

    #[test]
    fn fer_report_zero_and_white() {
        let k = WalkKernel::default_kernel();
        let z = fer_bound_report(&EnvironmentSpec::zero(), &k, 6, &[8, 16, 32]).unwrap();
        assert!(z.pass);
        assert!(z.rows.iter().all(|r| r.b == 0.0));
        let w = fer_bound_report(&EnvironmentSpec::white(), &k, 6, &[8, 16, 32, 64]).unwrap();
        assert!(w.pass, "{:?}", w.slopes);
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,s,kappa,b,provenance,se"));
        assert_eq!(text.lines().count(), 1 + 5 * 4);
        assert!(fer_bound_report(&EnvironmentSpec::white(), &k, 7, &[8, 16]).is_err());
    }

    #[test]
    fn total_cumulance_fixed_path_is_exact() {
        let spec = EnvironmentSpec::default_preset();
        let law = vec![(vec![1, 0, -2, 1], 1.0)];
        let lags = [0, 1, 1, 3];
        let mixed = mixed_cumulant_exact(&spec, &law, &lags).unwrap();
        let pts = lag_points(&[0, 1, 1, -1, 0], &lags);
        let direct = spec.joint_cumulant_omega(&pts).unwrap();
        assert!((mixed - direct).abs() < 1e-12, "{mixed} {direct}");
    }

    #[test]
    fn total_cumulance_time_independent_distinct_lags() {
        let k = WalkKernel::default_kernel();
        let t = total_cumulance_residual(&EnvironmentSpec::spatial(), &k, [0, 1, 2, 3], 200, 1).unwrap();
        assert_eq!(t.mixed, 0.0);
        assert_eq!(t.decomposition.estimate, 0.0);
        assert_eq!(t.residual.estimate, 0.0);
    }

    #[test]
    fn total_cumulance_default_preset() {
        let k = WalkKernel::default_kernel();
        let t = total_cumulance_residual(&EnvironmentSpec::default_preset(), &k, [0, 1, 2, 2], 20000, 5).unwrap();
        assert!(t.residual.std_error > 0.0);
        assert!(t.residual.estimate.abs() <= 3.0 * t.residual.std_error, "{t:?}");
        assert!(total_cumulance_residual(&EnvironmentSpec::default_preset(), &k, [0, 1, 2, 9], 10, 5).is_err());
    }
}
