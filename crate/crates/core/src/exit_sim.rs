//! First-exit simulation and Monte Carlo estimators built on it.
//!
//! Paths are simulated on a skeleton. The first skeleton step that leaves `D`
//! is bisected in time by sampling the path at the midpoint conditionally on
//! both ends: the clock increment is split with the exact subordinator
//! bridge and the position follows the Brownian bridge in subordinated time.
//! At `alpha = 2` a skeleton step may also leave and return; that event is
//! detected with the flat-boundary bridge crossing probability.
//!
//! Every estimator walks each path once at `step / 2` and reads the `step`
//! skeleton off every other point, so the step-halving delta is computed
//! with common random numbers. Refinement draws are keyed by the dyadic
//! address of the interval being split, so both resolutions refine a shared
//! interval identically.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Shape};
use crate::quadrature::{gauss_legendre_on, integrate, Tolerance};
use crate::rng::RngStream;
use crate::sampling::{add_gaussian, subordinator, PositiveStableDensity};
use crate::stable_kernel::{c1_constant, levy_constant, KernelTable, StableParams};
use crate::stats::mean_and_se;

/// The process together with the tables its simulation needs.
#[derive(Debug, Clone)]
pub struct StableProcess {
    params: StableParams,
    kernel: Arc<KernelTable>,
    bridge: Option<Arc<PositiveStableDensity>>,
}

impl StableProcess {
    pub fn new(params: StableParams) -> Result<Self> {
        let kernel = KernelTable::shared(params)?;
        let bridge = if params.is_gaussian() { None } else { Some(PositiveStableDensity::shared(params.alpha() / 2.0)?) };
        Ok(Self { params, kernel, bridge })
    }

    pub fn params(&self) -> StableParams {
        self.params
    }

    pub fn kernel(&self) -> &KernelTable {
        &self.kernel
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub tau: f64,
    pub exit_position: Vec<f64>,
    /// No exit before the horizon; `tau` is then the horizon.
    pub censored: bool,
    pub steps_used: usize,
    pub final_step_size: f64,
    /// Exit position within `1e-12` of the boundary.
    pub boundary_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Estimate at `step` minus estimate at `step / 2`.
    pub bias_diagnostic: f64,
    /// Standard error of the paired step-halving delta.
    pub bias_std_error: f64,
    /// Deterministic bound on error not covered by `std_error` (0 if none).
    pub systematic_bound: f64,
}

impl MCEstimate {
    fn from_pairs(pairs: &[(f64, f64)], seed: u64) -> Self {
        let coarse: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let delta: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
        let (mean, std_error) = mean_and_se(&coarse);
        let (bias_diagnostic, bias_std_error) = mean_and_se(&delta);
        Self { mean, std_error, n_samples: pairs.len(), seed, bias_diagnostic, bias_std_error, systematic_bound: 0.0 }
    }

    fn exact(value: f64, seed: u64) -> Self {
        Self { mean: value, std_error: 0.0, n_samples: 0, seed, bias_diagnostic: 0.0, bias_std_error: 0.0, systematic_bound: 0.0 }
    }
}

/// Default refinement tolerance for a run of length `horizon` at `step`.
pub fn default_time_tol(horizon: f64, step: f64) -> f64 {
    if horizon.is_finite() {
        (1e-4 * horizon).min(step / 256.0)
    } else {
        step / 256.0
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

struct Walker<'a> {
    process: &'a StableProcess,
    domain: &'a Domain,
    time_tol: f64,
}

struct Refined {
    tau: f64,
    position: Vec<f64>,
    levels: usize,
    final_dt: f64,
}

impl Walker<'_> {
    fn gaussian(&self) -> bool {
        self.process.params.is_gaussian()
    }

    fn crossing_probability(&self, xa: &[f64], xb: &[f64], a: f64) -> f64 {
        if !self.domain.contains(xb) || !self.domain.contains(xa) {
            1.0
        } else {
            1.0 - self.domain.bridge_survival(xa, xb, a)
        }
    }

    /// Bisect the step `[s0, s0 + dt]` from `xa` (inside) to `xb` with clock
    /// increment `a`, known to contain the first exit.
    #[allow(clippy::too_many_arguments)]
    fn refine(
        &self,
        xa: &[f64],
        xb: &[f64],
        s0: f64,
        dt: f64,
        a: f64,
        depth: u64,
        index: u64,
        path: &RngStream,
    ) -> Result<Refined> {
        let mut xa = xa.to_vec();
        let mut xb = xb.to_vec();
        let (mut s0, mut dt, mut a, mut depth, mut index) = (s0, dt, a, depth, index);
        let mut xm = vec![0.0; xa.len()];
        let mut levels = 0;
        let beta = self.process.params.alpha() / 2.0;
        while dt > self.time_tol {
            let mut rng = path.substream2(depth + 1, index);
            if self.gaussian() {
                // the midpoint given a crossing somewhere in the step
                let half = 0.5 * a;
                let mut choice = None;
                for _ in 0..crate::sampling::REJECTION_CAP {
                    bridge_point(&xa, &xb, half, half, &mut xm, &mut rng);
                    let p1 = self.crossing_probability(&xa, &xm, half);
                    let p2 = if self.domain.contains(&xm) { self.crossing_probability(&xm, &xb, half) } else { 1.0 };
                    let pc = 1.0 - (1.0 - p1) * (1.0 - p2);
                    if rng.gen::<f64>() < pc {
                        choice = Some(rng.gen::<f64>() * pc < p1);
                        break;
                    }
                }
                match choice {
                    // the crossing is too unlikely to localise; stop at the current interval
                    None => break,
                    Some(true) => xb.copy_from_slice(&xm),
                    Some(false) => {
                        xa.copy_from_slice(&xm);
                        s0 += 0.5 * dt;
                    }
                }
                a = half;
                index = 2 * index + u64::from(choice == Some(false));
            } else {
                let bridge = self.process.bridge.as_ref().expect("alpha < 2 has a bridge table");
                let unit = 2.0 * (0.5 * dt).powf(1.0 / beta);
                let a1 = bridge.split(a / unit, &mut rng)? * unit;
                let a1 = a1.clamp(0.0, a);
                bridge_point(&xa, &xb, a1, a - a1, &mut xm, &mut rng);
                if self.domain.contains(&xm) {
                    xa.copy_from_slice(&xm);
                    s0 += 0.5 * dt;
                    a -= a1;
                    index = 2 * index + 1;
                } else {
                    xb.copy_from_slice(&xm);
                    a = a1;
                    index *= 2;
                }
            }
            dt *= 0.5;
            depth += 1;
            levels += 1;
        }
        if self.gaussian() {
            let mid: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| 0.5 * (p + q)).collect();
            Ok(Refined { tau: s0 + 0.5 * dt, position: self.domain.project_to_boundary(&mid), levels, final_dt: dt })
        } else {
            Ok(Refined { tau: s0 + dt, position: xb, levels, final_dt: dt })
        }
    }

    fn record(&self, r: Refined, steps: usize, horizon: f64, last: &[f64]) -> ExitRecord {
        if r.tau > horizon {
            return self.censored(horizon, last, steps + r.levels, r.final_dt);
        }
        let boundary_hit = self.domain.signed_distance(&r.position).abs() <= 1e-12;
        ExitRecord {
            tau: r.tau,
            exit_position: r.position,
            censored: false,
            steps_used: steps + r.levels,
            final_step_size: r.final_dt,
            boundary_hit,
        }
    }

    fn censored(&self, horizon: f64, last: &[f64], steps: usize, dt: f64) -> ExitRecord {
        ExitRecord {
            tau: horizon,
            exit_position: last.to_vec(),
            censored: true,
            steps_used: steps,
            final_step_size: dt,
            boundary_hit: false,
        }
    }

    /// Walk one path; returns the record at `step` and, when `coupled`, the
    /// record at `step / 2` from the same randomness.
    fn walk(&self, x0: &[f64], horizon: f64, step: f64, coupled: bool, path: &RngStream) -> Result<(ExitRecord, Option<ExitRecord>)> {
        let alpha = self.process.params.alpha();
        let h = if coupled { 0.5 * step } else { step };
        let n_steps = if coupled { 2 * (horizon / step).ceil() as u64 } else { (horizon / step).ceil() as u64 };
        let mut rng = path.substream(0);
        let mut x = x0.to_vec();
        let mut xn = x0.to_vec();
        let mut x_even = x0.to_vec();
        let mut a_first = 0.0;
        let mut fine: Option<ExitRecord> = None;
        let mut coarse: Option<ExitRecord> = None;
        let mut s = 0.0;
        let mut k = 0u64;
        while k < n_steps {
            let a = subordinator(h, alpha, &mut rng);
            xn.copy_from_slice(&x);
            add_gaussian(&mut xn, a, &mut rng);
            let out = !self.domain.contains(&xn);
            let crossed = if self.gaussian() {
                let u: f64 = rng.gen();
                out || u < self.crossing_probability(&x, &xn, a)
            } else {
                out
            };
            if fine.is_none() && crossed {
                let r = self.refine(&x, &xn, s, h, a, 0, k, path)?;
                fine = Some(self.record(r, k as usize + 1, horizon, &xn));
                if !coupled {
                    return Ok((fine.expect("just set"), None));
                }
            }
            if coupled && coarse.is_none() && k % 2 == 1 {
                let coarse_crossed = if self.gaussian() {
                    let u: f64 = rng.gen();
                    out || u < self.crossing_probability(&x_even, &xn, a_first + a)
                } else {
                    out
                };
                if coarse_crossed {
                    let r = self.refine_coarse(&x_even, &x, &xn, s - h, h, a_first, a, k, &mut rng, path)?;
                    coarse = Some(match r {
                        Some(r) => self.record(r, (k as usize).div_ceil(2), horizon, &xn),
                        None => self.censored(horizon, &xn, (k as usize).div_ceil(2), step),
                    });
                }
            }
            if let (Some(c), Some(f)) = (&coarse, &fine) {
                return Ok((c.clone(), Some(f.clone())));
            }
            if coupled && k.is_multiple_of(2) {
                x_even.copy_from_slice(&x);
                a_first = a;
            }
            std::mem::swap(&mut x, &mut xn);
            s += h;
            k += 1;
        }
        if coupled {
            let coarse = coarse.unwrap_or_else(|| self.censored(horizon, &x, n_steps as usize / 2, step));
            let fine = fine.unwrap_or_else(|| self.censored(horizon, &x, n_steps as usize, h));
            Ok((coarse, Some(fine)))
        } else {
            Ok((self.censored(horizon, &x, n_steps as usize, step), None))
        }
    }

    /// Refine a crossing coarse step whose midpoint `xm` is known.
    #[allow(clippy::too_many_arguments)]
    fn refine_coarse<R: Rng>(
        &self,
        xa: &[f64],
        xm: &[f64],
        xb: &[f64],
        s0: f64,
        h: f64,
        a1: f64,
        a2: f64,
        k: u64,
        rng: &mut R,
        path: &RngStream,
    ) -> Result<Option<Refined>> {
        let first = if !self.domain.contains(xm) {
            true
        } else if self.gaussian() {
            let p1 = self.crossing_probability(xa, xm, a1);
            let p2 = self.crossing_probability(xm, xb, a2);
            let pc = 1.0 - (1.0 - p1) * (1.0 - p2);
            if pc <= 0.0 {
                return Ok(None);
            }
            rng.gen::<f64>() * pc < p1
        } else {
            false
        };
        let r = if first {
            self.refine(xa, xm, s0, h, a1, 0, k - 1, path)?
        } else {
            self.refine(xm, xb, s0 + h, h, a2, 0, k, path)?
        };
        Ok(Some(r))
    }
}

/// Brownian bridge point at clock `a1` of a bridge of length `a1 + a2`.
fn bridge_point<R: Rng>(xa: &[f64], xb: &[f64], a1: f64, a2: f64, out: &mut [f64], rng: &mut R) {
    let a = a1 + a2;
    let w = if a > 0.0 { a1 / a } else { 0.5 };
    for i in 0..xa.len() {
        out[i] = xa[i] + w * (xb[i] - xa[i]);
    }
    let var = if a > 0.0 { a1 * a2 / a } else { 0.0 };
    add_gaussian(out, var, rng);
}

fn check_start(domain: &Domain, x: &[f64], params: StableParams) -> Result<()> {
    if x.len() != params.d() || domain.dim() != params.d() {
        return Err(Error::domain("dimension mismatch between point, domain and params"));
    }
    if !domain.contains(x) {
        return Err(Error::domain("start point is not in the domain"));
    }
    Ok(())
}

fn check_times(horizon: f64, step: f64) -> Result<()> {
    if !(horizon > 0.0) || !(step > 0.0) {
        return Err(Error::domain("horizon and step must be positive"));
    }
    Ok(())
}

/// One exit record at skeleton step `step`.
pub fn simulate_first_exit(
    process: &StableProcess,
    domain: &Domain,
    x: &[f64],
    horizon: f64,
    step: f64,
    stream: &RngStream,
) -> Result<ExitRecord> {
    check_start(domain, x, process.params)?;
    check_times(horizon, step)?;
    let w = Walker { process, domain, time_tol: default_time_tol(horizon, step) };
    Ok(w.walk(x, horizon, step, false, stream)?.0)
}

/// Exit records at `step` and `step / 2` from common random numbers.
pub fn simulate_first_exit_pair(
    process: &StableProcess,
    domain: &Domain,
    x: &[f64],
    horizon: f64,
    step: f64,
    stream: &RngStream,
) -> Result<(ExitRecord, ExitRecord)> {
    check_start(domain, x, process.params)?;
    check_times(horizon, step)?;
    let w = Walker { process, domain, time_tol: default_time_tol(horizon, step) };
    let (c, f) = w.walk(x, horizon, step, true, stream)?;
    Ok((c, f.expect("coupled walk returns both")))
}

fn paired_paths<F>(
    process: &StableProcess,
    domain: &Domain,
    x: &[f64],
    horizon: f64,
    step: f64,
    n_paths: usize,
    stream: &RngStream,
    f: F,
) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&ExitRecord) -> f64 + Sync,
{
    let w = Walker { process, domain, time_tol: default_time_tol(horizon, step) };
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let (c, fine) = w.walk(x, horizon, step, true, &stream.substream(i))?;
            Ok((f(&c), f(&fine.expect("coupled"))))
        })
        .collect()
}

/// Mean exit time; censored paths count at the horizon and are reported
/// through `systematic_bound` (fraction censored times horizon).
pub fn estimate_mean_exit_time(
    process: &StableProcess,
    domain: &Domain,
    x: &[f64],
    n_paths: usize,
    step: f64,
    horizon: f64,
    stream: &RngStream,
) -> Result<MCEstimate> {
    check_start(domain, x, process.params)?;
    check_times(horizon, step)?;
    let w = Walker { process, domain, time_tol: default_time_tol(horizon, step) };
    let rows: Vec<(f64, f64, bool)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let (c, f) = w.walk(x, horizon, step, true, &stream.substream(i))?;
            let f = f.expect("coupled");
            Ok((c.tau, f.tau, c.censored || f.censored))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let mut est = MCEstimate::from_pairs(&pairs, stream.seed());
    let censored = rows.iter().filter(|r| r.2).count();
    est.systematic_bound = censored as f64 / n_paths.max(1) as f64 * horizon;
    Ok(est)
}

/// `r_D(t, x, x) = E^x[tau < t; p(t - tau, X(tau), x)]`.
pub fn estimate_rd(
    process: &StableProcess,
    t: f64,
    x: &[f64],
    domain: &Domain,
    n_paths: usize,
    step: f64,
    stream: &RngStream,
) -> Result<MCEstimate> {
    if !(t > 0.0) {
        return Err(Error::domain("time must be positive"));
    }
    if !domain.has_boundary() {
        if x.len() != process.params.d() {
            return Err(Error::domain("dimension mismatch"));
        }
        return Ok(MCEstimate::exact(0.0, stream.seed()));
    }
    check_start(domain, x, process.params)?;
    check_times(t, step)?;
    let kernel = &process.kernel;
    let pairs = paired_paths(process, domain, x, t, step, n_paths, stream, |rec| {
        if rec.censored || rec.tau >= t {
            0.0
        } else {
            kernel.density(t - rec.tau, dist(&rec.exit_position, x))
        }
    })?;
    Ok(MCEstimate::from_pairs(&pairs, stream.seed()))
}

/// Sampling law of the depth `delta_D(x)` used to stratify `int_D r_D`.
///
/// Piecewise constant on a geometric grid, proportional to
/// `|dD_delta| min(t delta^{-d-alpha}, t^{-d/alpha})` at the cell ends.
#[derive(Debug, Clone)]
struct DepthLaw {
    edges: Vec<f64>,
    cdf: Vec<f64>,
}

impl DepthLaw {
    fn new(domain: &Domain, params: StableParams, t: f64, lo: f64, hi: f64) -> Result<Self> {
        let (d, a) = (params.d() as f64, params.alpha());
        let env = |q: f64| (t * q.powf(-d - a)).min(t.powf(-d / a));
        let n = 4000;
        let edges: Vec<f64> = (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect();
        let mut cdf = vec![0.0];
        let mut prev = domain.parallel_set(edges[0])?.boundary_area_q * env(edges[0]);
        for i in 0..n {
            let q = edges[i + 1].min(hi * (1.0 - 1e-12));
            let cur = domain.parallel_set(q)?.boundary_area_q * env(q);
            let mass = 0.5 * (prev + cur) * (edges[i + 1] - edges[i]);
            cdf.push(cdf[i] + mass);
            prev = cur;
        }
        let total = cdf[n];
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(Self { edges, cdf })
    }

    /// Inverse CDF; returns the depth and its sampling density.
    fn quantile(&self, u: f64) -> (f64, f64) {
        let j = match self.cdf.binary_search_by(|c| c.total_cmp(&u)) {
            Ok(j) => j.min(self.cdf.len() - 2),
            Err(j) => j.saturating_sub(1).min(self.cdf.len() - 2),
        };
        let (c0, c1) = (self.cdf[j], self.cdf[j + 1]);
        let (e0, e1) = (self.edges[j], self.edges[j + 1]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        (e0 + w * (e1 - e0), (c1 - c0) / (e1 - e0))
    }
}

/// Budget of `estimate_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZBudget {
    /// Quadrature points; rounded up to an even number (two per stratum).
    pub n_points: usize,
    pub n_paths: usize,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZEstimate {
    pub z: MCEstimate,
    /// Estimate of `int_D r_D(t, x, x) dx` (with the same errors).
    pub integral: f64,
    pub first_term: f64,
    /// Whether the domain boundary is `R`-smooth.
    pub r_smooth: bool,
}

/// `Z_D(t) = C1 |D| t^{-d/alpha} - int_D r_D(t, x, x) dx`.
pub fn estimate_z(process: &StableProcess, t: f64, domain: &Domain, budget: ZBudget, stream: &RngStream) -> Result<ZEstimate> {
    let params = process.params;
    if !(t > 0.0) {
        return Err(Error::domain("time must be positive"));
    }
    if domain.dim() != params.d() {
        return Err(Error::domain("dimension mismatch"));
    }
    if !domain.is_bounded() {
        return Err(Error::domain("the trace needs a bounded domain"));
    }
    if budget.n_points < 2 || budget.n_paths < 1 {
        return Err(Error::domain("need at least two points and one path"));
    }
    let (d, a) = (params.d() as f64, params.alpha());
    let m = domain.measures()?;
    let first = c1_constant(params).value() * m.volume * t.powf(-d / a);
    let delta_min = 1e-3 * t.powf(1.0 / a);
    let delta_max = domain.inradius() * (1.0 - 1e-9);
    if delta_min >= delta_max {
        return Err(Error::domain("time too large for the domain depth"));
    }
    let law = DepthLaw::new(domain, params, t, delta_min, delta_max)?;
    let strata = budget.n_points.div_ceil(2);
    let kernel = &process.kernel;
    let w = Walker { process, domain, time_tol: default_time_tol(t, budget.step) };
    // per point: (weighted coarse value, weighted fine value)
    let points: Vec<(f64, f64)> = (0..2 * strata as u64)
        .into_par_iter()
        .map(|i| {
            let point_stream = stream.substream(i);
            let mut rng = point_stream.substream(u64::MAX);
            let (k, j) = (i / 2, i % 2);
            let u = (k as f64 + (j as f64 + rng.gen::<f64>()) / 2.0) / strata as f64;
            let (delta, g) = law.quantile(u.clamp(0.0, 1.0));
            let x = domain.sample_level_set(delta, &mut rng)?;
            let weight = domain.parallel_set(delta)?.boundary_area_q / g;
            let mut sc = 0.0;
            let mut sf = 0.0;
            for p in 0..budget.n_paths as u64 {
                let (c, f) = w.walk(&x, t, budget.step, true, &point_stream.substream(p))?;
                let f = f.expect("coupled");
                let val = |r: &ExitRecord| {
                    if r.censored || r.tau >= t { 0.0 } else { kernel.density(t - r.tau, dist(&r.exit_position, &x)) }
                };
                sc += val(&c);
                sf += val(&f);
            }
            let n = budget.n_paths as f64;
            Ok((weight * sc / n, weight * sf / n))
        })
        .collect::<Result<_>>()?;
    let kf = strata as f64;
    let mut integral = 0.0;
    let mut integral_fine = 0.0;
    let mut var = 0.0;
    let mut var_delta = 0.0;
    for k in 0..strata {
        let (p, q) = (points[2 * k], points[2 * k + 1]);
        integral += 0.5 * (p.0 + q.0) / kf;
        integral_fine += 0.5 * (p.1 + q.1) / kf;
        // within-stratum variance of one point from the pair, then of their mean
        var += (p.0 - q.0).powi(2) / 2.0 / 2.0 / (kf * kf);
        let (dp, dq) = (p.0 - p.1, q.0 - q.1);
        var_delta += (dp - dq).powi(2) / 2.0 / 2.0 / (kf * kf);
    }
    // r_D <= p(t, 0) on the unsampled boundary slab
    let slab = m.volume - domain.parallel_set(delta_min)?.volume_q;
    let systematic = c1_constant(params).value() * t.powf(-d / a) * slab;
    let z = MCEstimate {
        mean: first - integral,
        std_error: var.sqrt(),
        n_samples: 2 * strata * budget.n_paths,
        seed: stream.seed(),
        bias_diagnostic: integral_fine - integral,
        bias_std_error: var_delta.sqrt(),
        systematic_bound: systematic,
    };
    Ok(ZEstimate { z, integral, first_term: first, r_smooth: m.r_smooth })
}

/// Target set of the Ikeda-Watanabe check.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSet {
    Empty,
    Region(Domain),
}

impl TargetSet {
    fn contains(&self, y: &[f64]) -> bool {
        match self {
            TargetSet::Empty => false,
            TargetSet::Region(a) => a.contains(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IwBudget {
    pub lhs_paths: usize,
    pub rhs_paths: usize,
    pub step: f64,
    /// Angular and radial nodes of the per-path integral over `D`.
    pub angular_nodes: usize,
    pub radial_nodes: usize,
}

/// `H(w) = int_w^inf v^{d - alpha - 1} p_1(v) dv`, so that
/// `int_0^T p(s, r) ds = alpha r^{alpha - d} H(r T^{-1/alpha})`.
struct TimeIntegratedKernel {
    params: StableParams,
    ln_w0: f64,
    dlw: f64,
    h: Vec<f64>,
    h_zero: f64,
    w_max: f64,
    tail: Vec<(f64, f64)>,
}

impl TimeIntegratedKernel {
    fn new(process: &StableProcess) -> Result<Self> {
        let params = process.params;
        let (d, a) = (params.d() as f64, params.alpha());
        if d - a <= 0.0 {
            return Err(Error::Unsupported("time-integrated kernel needs d > alpha".into()));
        }
        let k = &process.kernel;
        // far enough out that a few series terms suffice
        let w_max = 64.0 * k.rho_max();
        // large-v tail of p_1 from its leading expansion terms: p_1(v) ~ sum c_j v^{-alpha j - d}
        let tail: Vec<(f64, f64)> = (1..=6)
            .map(|j| {
                let jf = j as f64;
                let c = (-1f64).powi(j + 1) / crate::special::gamma(jf + 1.0)
                    * 2f64.powf(a * jf)
                    * crate::special::gamma(1.0 + a * jf / 2.0)
                    * crate::special::gamma((d + a * jf) / 2.0)
                    * crate::special::sin_pi(a * jf / 2.0)
                    / PI.powf(d / 2.0 + 1.0);
                (c, a * jf + d)
            })
            .collect();
        let tail_at = |w: f64| -> f64 { tail.iter().map(|&(c, p)| c * w.powf(d - a - p) / (p - d + a)).sum() };
        let n = 4000;
        let ln_w0 = (1e-6f64).ln();
        let dlw = (w_max.ln() - ln_w0) / (n - 1) as f64;
        let f = |v: f64| v.powf(d - a - 1.0) * k.unit_density(v);
        let tol = Tolerance::new(1e-15, 1e-12);
        let mut h = vec![0.0; n];
        h[n - 1] = tail_at(w_max);
        for i in (0..n - 1).rev() {
            let lo = (ln_w0 + i as f64 * dlw).exp();
            let hi = (ln_w0 + (i + 1) as f64 * dlw).exp();
            h[i] = h[i + 1] + integrate(f, &[lo, hi], tol, 200)?.value;
        }
        let h_zero = h[0] + integrate(f, &[0.0, 1e-6], tol, 200)?.value;
        Ok(Self { params, ln_w0, dlw, h, h_zero, w_max, tail })
    }

    fn h_at(&self, w: f64) -> f64 {
        let (d, a) = (self.params.d() as f64, self.params.alpha());
        if w >= self.w_max {
            return self.tail.iter().map(|&(c, p)| c * w.powf(d - a - p) / (p - d + a)).sum();
        }
        let lw = w.ln();
        if lw <= self.ln_w0 {
            // H(w) = H(0) - int_0^w v^{d-alpha-1} p_1(v) dv with p_1 ~ C1 near 0
            let c1 = c1_constant(self.params).value();
            return self.h_zero - c1 * w.powf(d - a) / (d - a);
        }
        let u = (lw - self.ln_w0) / self.dlw;
        let n = self.h.len();
        let j = (u.floor() as usize).clamp(1, n - 3);
        let s = u - j as f64;
        // Catmull-Rom in ln H
        let (p0, p1, p2, p3) = (self.h[j - 1].ln(), self.h[j].ln(), self.h[j + 1].ln(), self.h[j + 2].ln());
        (p1 + 0.5 * s * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0)))).exp()
    }

    /// `int_0^T p(s, r) ds`.
    fn integrated(&self, big_t: f64, r: f64) -> f64 {
        if big_t <= 0.0 {
            return 0.0;
        }
        let (d, a) = (self.params.d() as f64, self.params.alpha());
        a * r.powf(a - d) * self.h_at(r * big_t.powf(-1.0 / a))
    }
}

/// `P^x(X(tau_D) in A, t1 < tau_D < t2)` by direct simulation.
pub fn ikeda_watanabe_lhs(
    process: &StableProcess,
    domain: &Domain,
    x: &[f64],
    target: &TargetSet,
    t1: f64,
    t2: f64,
    n_paths: usize,
    step: f64,
    stream: &RngStream,
) -> Result<MCEstimate> {
    check_start(domain, x, process.params)?;
    if !(0.0 <= t1 && t1 < t2) {
        return Err(Error::domain("need 0 <= t1 < t2"));
    }
    if let TargetSet::Empty = target {
        return Ok(MCEstimate::exact(0.0, stream.seed()));
    }
    let pairs = paired_paths(process, domain, x, t2, step, n_paths, stream, |r| {
        (!r.censored && r.tau > t1 && r.tau < t2 && target.contains(&r.exit_position)) as u8 as f64
    })?;
    Ok(MCEstimate::from_pairs(&pairs, stream.seed()))
}

/// Both sides of the Ikeda-Watanabe identity for a ball `D`, its centre `x`
/// and a concentric annulus `A` outside `D`, in two dimensions.
///
/// The right side is `int_D int_{t1}^{t2} p_D(s,x,y) ds K(y) dy` with
/// `K(y) = nu(A - y)`; its free part is a radial quadrature and its killed
/// part an average over independent exit records of
/// `int_D K(y) int p(s - tau, X(tau), y) ds dy`.
pub fn validate_ikeda_watanabe(
    process: &StableProcess,
    domain: &Domain,
    x: &[f64],
    target: &TargetSet,
    t1: f64,
    t2: f64,
    budget: IwBudget,
    stream: &RngStream,
) -> Result<(MCEstimate, MCEstimate)> {
    let params = process.params;
    if params.is_gaussian() {
        return Err(Error::Unsupported("the identity involves the Lévy measure; alpha must be below 2".into()));
    }
    check_start(domain, x, params)?;
    if !(0.0 <= t1 && t1 < t2) {
        return Err(Error::domain("need 0 <= t1 < t2"));
    }
    let (center, radius) = match domain.shape() {
        Shape::Ball { center, radius } => (center.clone(), *radius),
        _ => return Err(Error::Unsupported("right-hand side is implemented for balls".into())),
    };
    let (inner, outer) = match target {
        TargetSet::Empty => {
            return Ok((MCEstimate::exact(0.0, stream.seed()), MCEstimate::exact(0.0, stream.seed())));
        }
        TargetSet::Region(a) => match a.shape() {
            Shape::Annulus { center: c, inner, outer } if *c == center => (*inner, *outer),
            Shape::Ball { .. } | Shape::Annulus { .. } | Shape::Box { .. } => {
                return Err(Error::Unsupported("right-hand side needs an annulus concentric with D".into()))
            }
            _ => return Err(Error::domain("target set must be bounded")),
        },
    };
    if inner <= radius {
        return Err(Error::domain("target set meets the closure of D"));
    }
    if params.d() != 2 || dist(x, &center) > 0.0 {
        return Err(Error::Unsupported("right-hand side is implemented for d = 2 from the centre".into()));
    }
    let lhs_stream = stream.substream(0);
    let rhs_stream = stream.substream(1);
    let lhs = ikeda_watanabe_lhs(process, domain, x, target, t1, t2, budget.lhs_paths, budget.step, &lhs_stream)?;

    let alpha = params.alpha();
    let levy = levy_constant(params)?;
    // K(rho) for |y - c| = rho, tabulated on [0, radius]
    let ang = gauss_legendre_on(64, 0.0, PI);
    let rad = gauss_legendre_on(64, inner, outer);
    let k_exact = |rho: f64| -> f64 {
        let mut s = 0.0;
        for &(sig, ws) in &rad {
            let mut inner_sum = 0.0;
            for &(phi, wp) in &ang {
                inner_sum += wp * (rho * rho + sig * sig - 2.0 * rho * sig * phi.cos()).powf(-(2.0 + alpha) / 2.0);
            }
            s += ws * sig * 2.0 * inner_sum;
        }
        levy * s
    };
    let n_k = 2001;
    let k_table: Vec<f64> = (0..n_k).map(|i| k_exact(radius * i as f64 / (n_k - 1) as f64)).collect();
    let k_of = |rho: f64| -> f64 {
        let u = (rho / radius).clamp(0.0, 1.0) * (n_k - 1) as f64;
        let j = (u.floor() as usize).min(n_k - 2);
        let s = u - j as f64;
        k_table[j] + s * (k_table[j + 1] - k_table[j])
    };
    let tik = TimeIntegratedKernel::new(process)?;

    // free part: 2 pi int_0^R rho K(rho) (G_{t2} - G_{t1})(rho) d rho
    let free = integrate(
        |rho: f64| {
            if rho <= 0.0 {
                return 0.0;
            }
            2.0 * PI * rho * k_of(rho) * (tik.integrated(t2, rho) - tik.integrated(t1, rho))
        },
        &[0.0, 0.25 * radius, 0.5 * radius, radius],
        Tolerance::new(1e-12, 1e-10),
        10_000,
    )?
    .value;

    // killed part: integral over D in polar coordinates around the exit point,
    // which absorbs the r^{alpha - d} singularity of the integrated kernel
    let n_ang = budget.angular_nodes.max(8);
    let n_rad = budget.radial_nodes.max(8);
    let psi = gauss_legendre_on(n_ang, -PI / 2.0, PI / 2.0);
    let srule = gauss_legendre_on(n_rad, 0.0, 1.0);
    let killed = |rec: &ExitRecord| -> f64 {
        if rec.censored || rec.tau >= t2 {
            return 0.0;
        }
        let (tb, ta) = (t2 - rec.tau, (t1 - rec.tau).max(0.0));
        let v: Vec<f64> = rec.exit_position.iter().zip(&center).map(|(p, c)| p - c).collect();
        let l = v[0].hypot(v[1]);
        if l <= radius {
            return 0.0;
        }
        let base = v[1].atan2(v[0]) + PI;
        let half = (radius / l).asin();
        let mut total = 0.0;
        for &(ps, wps) in &psi {
            // theta = base + half sin(psi) sweeps the directions that meet D
            let th = base + half * ps.sin();
            let jac = half * ps.cos();
            let (ux, uy) = (th.cos(), th.sin());
            // |v + s u|^2 = radius^2
            let b = v[0] * ux + v[1] * uy;
            let disc = b * b - (l * l - radius * radius);
            if disc <= 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            let (s_in, s_out) = (-b - sq, -b + sq);
            let mut line = 0.0;
            for &(z, wz) in &srule {
                let s = s_in + z * (s_out - s_in);
                let y = [v[0] + s * ux, v[1] + s * uy];
                let rho = y[0].hypot(y[1]);
                line += wz * s * k_of(rho) * (tik.integrated(tb, s) - tik.integrated(ta, s));
            }
            total += wps * jac * line * (s_out - s_in);
        }
        total
    };
    let pairs = paired_paths(process, domain, x, t2, budget.step, budget.rhs_paths, &rhs_stream, killed)?;
    let mut rhs = MCEstimate::from_pairs(&pairs, stream.seed());
    rhs.mean = free - rhs.mean;
    rhs.bias_diagnostic = -rhs.bias_diagnostic;
    Ok((lhs, rhs))
}

/// `E^x tau` for the ball `B(0, r)` from `|x|`.
pub fn ball_mean_exit_time(params: StableParams, r: f64, x_norm: f64) -> f64 {
    let (d, a) = (params.d() as f64, params.alpha());
    let g = crate::special::gamma;
    g(d / 2.0) / (2f64.powf(a) * g(1.0 + a / 2.0) * g((d + a) / 2.0)) * (r * r - x_norm * x_norm).powf(a / 2.0)
}

/// One row of an estimate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub quantity: String,
    pub t: f64,
    pub x: Vec<f64>,
    pub step: f64,
    pub estimate: MCEstimate,
}

/// CSV with columns `quantity,t,x0..x{d-1},mean,std_error,n,step,bias_diagnostic,seed`.
pub fn write_estimates_csv<W: std::io::Write>(mut out: W, records: &[EstimateRecord]) -> Result<()> {
    let d = records.iter().map(|r| r.x.len()).max().unwrap_or(0);
    let xs: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let mut head = vec!["quantity".to_string(), "t".into()];
    head.extend(xs);
    head.extend(["mean", "std_error", "n", "step", "bias_diagnostic", "seed"].map(String::from));
    writeln!(out, "{}", head.join(","))?;
    for r in records {
        let mut row = vec![r.quantity.clone(), r.t.to_string()];
        row.extend((0..d).map(|i| r.x.get(i).map(f64::to_string).unwrap_or_default()));
        let e = &r.estimate;
        row.extend([e.mean.to_string(), e.std_error.to_string(), e.n_samples.to_string(), r.step.to_string(), e.bias_diagnostic.to_string(), e.seed.to_string()]);
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proc(d: usize, a: f64) -> StableProcess {
        StableProcess::new(StableParams::new(d, a).unwrap()).unwrap()
    }

    #[test]
    fn exit_time_closed_form_values() {
        let p = StableParams::new(2, 2.0).unwrap();
        assert!((ball_mean_exit_time(p, 1.0, 0.0) - 0.25).abs() < 1e-14);
        let p = StableParams::new(2, 1.0).unwrap();
        assert!((ball_mean_exit_time(p, 1.0, 0.0) - 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn half_space_exit_is_outside() {
        let pr = proc(2, 1.3);
        let h = Domain::half_space(2, 0).unwrap();
        let root = RngStream::new(4, 0);
        for i in 0..300 {
            let r = simulate_first_exit(&pr, &h, &[0.3, 0.0], 5.0, 0.01, &root.substream(i)).unwrap();
            if !r.censored {
                assert!(r.exit_position[0] <= 0.0 && r.tau <= 5.0);
            }
        }
    }

    #[test]
    fn rejects_start_outside() {
        let pr = proc(2, 1.5);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let s = RngStream::new(0, 0);
        assert!(simulate_first_exit(&pr, &b, &[1.5, 0.0], 1.0, 0.01, &s).is_err());
        assert!(simulate_first_exit(&pr, &b, &[0.0, 0.0], 0.0, 0.01, &s).is_err());
    }

    #[test]
    fn whole_space_has_no_remainder() {
        let pr = proc(2, 1.5);
        let w = Domain::whole(2).unwrap();
        let e = estimate_rd(&pr, 0.5, &[0.0, 0.0], &w, 10, 0.01, &RngStream::new(0, 0)).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn coupled_pair_is_consistent() {
        let pr = proc(2, 1.5);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let root = RngStream::new(9, 0);
        for i in 0..200 {
            let (c, f) = simulate_first_exit_pair(&pr, &b, &[0.2, 0.1], 2.0, 0.02, &root.substream(i)).unwrap();
            // the finer skeleton can only see the exit earlier
            if !c.censored {
                assert!(!f.censored);
                assert!(f.tau <= c.tau + 1e-12);
                assert!(!b.contains(&c.exit_position));
            }
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let pr = proc(2, 1.2);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let s = RngStream::new(77, 3);
        let a = estimate_rd(&pr, 0.1, &[0.7, 0.0], &b, 200, 0.005, &s).unwrap();
        let c = estimate_rd(&pr, 0.1, &[0.7, 0.0], &b, 200, 0.005, &s).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let pr = proc(2, 1.2);
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let s = RngStream::new(78, 0);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| estimate_rd(&pr, 0.1, &[0.7, 0.0], &b, 300, 0.005, &s).unwrap());
        let c = three.install(|| estimate_rd(&pr, 0.1, &[0.7, 0.0], &b, 300, 0.005, &s).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn depth_law_is_a_density() {
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let law = DepthLaw::new(&b, StableParams::new(2, 1.5).unwrap(), 0.1, 1e-4, 0.999).unwrap();
        let mut total = 0.0;
        for j in 0..law.edges.len() - 1 {
            let (_, g) = law.quantile(0.5 * (law.cdf[j] + law.cdf[j + 1]));
            total += g * (law.edges[j + 1] - law.edges[j]);
        }
        assert!((total - 1.0).abs() < 1e-9);
        let (q, _) = law.quantile(0.0);
        assert!((q - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn time_integrated_kernel_matches_direct_quadrature() {
        let pr = proc(2, 1.0);
        let tik = TimeIntegratedKernel::new(&pr).unwrap();
        for &(tt, r) in &[(0.5, 0.3), (0.5, 1.7), (0.05, 0.9), (2.0, 0.01)] {
            let direct = integrate(|s: f64| if s <= 0.0 { 0.0 } else { pr.kernel.density(s, r) }, &[0.0, tt * 0.1, tt], Tolerance::new(1e-13, 1e-10), 2000)
                .unwrap()
                .value;
            let got = tik.integrated(tt, r);
            assert!((got - direct).abs() < 1e-6 * direct, "T {tt} r {r} got {got} want {direct}");
        }
    }

    #[test]
    fn estimate_csv_columns() {
        let rec = EstimateRecord { quantity: "rD".into(), t: 0.1, x: vec![0.5, 0.0], step: 0.01, estimate: MCEstimate::exact(1.5, 7) };
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "quantity,t,x0,x1,mean,std_error,n,step,bias_diagnostic,seed");
        assert_eq!(lines.next().unwrap(), "rD,0.1,0.5,0,1.5,0,0,0.01,0,7");
    }
}
