//! Stable subordinator, isotropic stable increments by Brownian
//! subordination, the subordinator bridge used to refine crossing steps, and
//! exact exit positions from balls.
//!
//! With `S` positive `beta`-stable, `E exp(-l S) = exp(-l^beta)`, the clock
//! `A_t = 2 t^{2/alpha} S`, `beta = alpha/2`, has
//! `E exp(-l A_t) = exp(-t (2 l)^{alpha/2})`, and `sqrt(A_t) Z` with `Z`
//! standard normal has characteristic function `exp(-t |xi|^alpha)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::unit_vector;
use crate::quadrature::{integrate, Tolerance};
use crate::special::{ln_gamma, sin_pi};
use crate::stable_kernel::StableParams;

/// Iteration cap of every rejection loop.
pub const REJECTION_CAP: usize = 10_000;

/// A displacement of the process over `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSample {
    pub dt: f64,
    pub jump: Vec<f64>,
}

/// Positive `beta`-stable draw with Laplace transform `exp(-l^beta)`
/// (Kanter's representation).
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    loop {
        let u = PI * rng.gen::<f64>();
        let e: f64 = Exp1.sample(rng);
        if u == 0.0 || e == 0.0 {
            continue;
        }
        let s = (beta * u).sin() / u.sin().powf(1.0 / beta)
            * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta);
        if s > 0.0 && s.is_finite() {
            return s;
        }
    }
}

/// Draw of the subordinator increment `A_dt`; deterministic `2 dt` at `alpha = 2`.
pub fn sample_subordinator_increment<R: Rng + ?Sized>(dt: f64, alpha: f64, rng: &mut R) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::domain(format!("time step must be positive, got {dt}")));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    Ok(subordinator(dt, alpha, rng))
}

#[inline]
pub(crate) fn subordinator<R: Rng + ?Sized>(dt: f64, alpha: f64, rng: &mut R) -> f64 {
    if alpha == 2.0 {
        2.0 * dt
    } else {
        2.0 * dt.powf(2.0 / alpha) * sample_positive_stable(alpha / 2.0, rng)
    }
}

pub fn sample_stable_increment<R: Rng + ?Sized>(dt: f64, params: StableParams, rng: &mut R) -> Result<IncrementSample> {
    let a = sample_subordinator_increment(dt, params.alpha(), rng)?;
    let s = a.sqrt();
    let jump = (0..params.d()).map(|_| s * Distribution::<f64>::sample(&StandardNormal, rng)).collect::<Vec<f64>>();
    Ok(IncrementSample { dt, jump })
}

/// Adds `sqrt(a) Z` to `x` in place.
#[inline]
pub(crate) fn add_gaussian<R: Rng + ?Sized>(x: &mut [f64], a: f64, rng: &mut R) {
    let s = a.sqrt();
    for v in x.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v += s * z;
    }
}

/// Tabulated density of the positive `beta`-stable law.
///
/// `ln f` lives on a uniform grid in `ln x`; the integral representation
/// `f(x) = g/pi x^{-g-1} int_0^pi a(u) exp(-a(u) x^{-g}) du`, `g = beta/(1-beta)`
/// covers small and moderate `x`, the convergent series covers large `x`.
#[derive(Debug, Clone)]
pub struct PositiveStableDensity {
    beta: f64,
    ln_lo: f64,
    step: f64,
    ln_f: Vec<f64>,
    series: Vec<(f64, f64)>,
    ln_hi: f64,
}

const DENSITY_STEP: f64 = 0.005;

impl PositiveStableDensity {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!("stable index must lie in (0,1), got {beta}")));
        }
        // coefficients of f(x) = sum_k s_k x^{-beta k - 1}
        let series: Vec<(f64, f64)> = (1..=200)
            .filter_map(|k| {
                let kf = k as f64;
                let s = sin_pi(beta * kf);
                if s == 0.0 {
                    return None;
                }
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 } * s.signum();
                Some((sign * (ln_gamma(beta * kf + 1.0) - ln_gamma(kf + 1.0) + s.abs().ln() - PI.ln()).exp(), beta * kf + 1.0))
            })
            .collect();
        let mut this = Self { beta, ln_lo: 0.0, step: DENSITY_STEP, ln_f: Vec::new(), series, ln_hi: 0.0 };
        // upper end: where the series sums with little cancellation
        let mut ln_hi = 0.0f64;
        while this.series_at(ln_hi.exp()).is_none() {
            ln_hi += 0.5;
        }
        // lower end: where ln f drops below -700
        let g = beta / (1.0 - beta);
        let a0 = (1.0 - beta) * beta.powf(beta / (1.0 - beta));
        let ln_lo = -((750.0 / a0).ln() / g);
        let n = ((ln_hi - ln_lo) / DENSITY_STEP).ceil() as usize + 1;
        let ln_f = (0..n + 2)
            .map(|j| this.integral_ln_density((ln_lo + (j as f64 - 1.0) * DENSITY_STEP).exp()))
            .collect::<Result<Vec<_>>>()?;
        this.ln_lo = ln_lo;
        this.ln_hi = ln_lo + (n - 1) as f64 * DENSITY_STEP;
        this.ln_f = ln_f;
        Ok(this)
    }

    pub fn shared(beta: f64) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<PositiveStableDensity>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("density cache poisoned").get(&beta.to_bits()) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(Self::new(beta)?);
        cache.lock().expect("density cache poisoned").insert(beta.to_bits(), Arc::clone(&t));
        Ok(t)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn series_at(&self, x: f64) -> Option<f64> {
        let lx = x.ln();
        let mut sum = 0.0;
        let mut max_term: f64 = 0.0;
        for &(c, p) in &self.series {
            let t = c * (-p * lx).exp();
            sum += t;
            max_term = max_term.max(t.abs());
            if t.abs() < 1e-17 * sum.abs() {
                return (sum > 0.0 && max_term < 1e2 * sum).then_some(sum);
            }
        }
        None
    }

    fn kanter_a(&self, u: f64) -> f64 {
        let b = self.beta;
        (b * u).sin().powf(b / (1.0 - b)) * ((1.0 - b) * u).sin() / u.sin().powf(1.0 / (1.0 - b))
    }

    fn integral_ln_density(&self, x: f64) -> Result<f64> {
        let b = self.beta;
        let g = b / (1.0 - b);
        let big = x.powf(-g);
        let a0 = (1.0 - b) * b.powf(b / (1.0 - b));
        // the integrand is concentrated where a(u) - a0 = O(1/big); a(u) - a0 grows like u^2
        let mut breaks = vec![0.0];
        let mut u = (1.0 / big).sqrt().min(1.0) * 1e-3;
        while u < PI / 2.0 {
            breaks.push(u);
            u *= 2.0;
        }
        breaks.extend_from_slice(&[PI / 2.0, 0.75 * PI, 0.9 * PI, PI]);
        let f = |u: f64| {
            if u <= 0.0 || u >= PI {
                return 0.0;
            }
            let a = self.kanter_a(u);
            let e = -(a - a0) * big;
            if e < -745.0 { 0.0 } else { a * e.exp() }
        };
        let est = integrate(f, &breaks, Tolerance::new(0.0, 1e-11), 20_000)?;
        if !(est.value > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok((g / PI).ln() - (g + 1.0) * x.ln() - a0 * big + est.value.ln())
    }

    /// Density at `x > 0`; exact zero below the underflow threshold.
    pub fn density(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let lx = x.ln();
        if lx >= self.ln_hi {
            let lxr = lx;
            return self.series.iter().map(|&(c, p)| c * (-p * lxr).exp()).sum::<f64>().max(0.0);
        }
        if lx <= self.ln_lo {
            return 0.0;
        }
        let u = (lx - self.ln_lo) / self.step;
        let j = (u.floor() as usize).min(self.ln_f.len() - 4);
        let s = u - j as f64;
        let (p0, p1, p2, p3) = (self.ln_f[j], self.ln_f[j + 1], self.ln_f[j + 2], self.ln_f[j + 3]);
        if !p0.is_finite() || !p3.is_finite() {
            // linear in the underflow shoulder
            return (p1 + s * (p2 - p1)).exp();
        }
        let v = p1 + 0.5 * s * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0)));
        v.exp()
    }

    /// Split the standardised sum `s = S1 + S2` of two independent copies:
    /// returns `S1` drawn from `f(s1) f(s - s1) / (f * f)(s)`.
    pub fn split<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<f64> {
        let f_half = self.density(0.5 * s);
        if f_half <= 0.0 {
            // both halves sit in the underflow region; the law concentrates at s/2
            return Ok(0.5 * s);
        }
        for _ in 0..REJECTION_CAP {
            let y = sample_positive_stable(self.beta, rng);
            let s1 = if rng.gen::<bool>() { y } else { s - y };
            if !(s1 > 0.0 && s1 < s) {
                continue;
            }
            let (f1, f2) = (self.density(s1), self.density(s - s1));
            if f1 + f2 <= 0.0 {
                continue;
            }
            // f is unimodal, so min(f1, f2) <= f(s/2) and the ratio is at most 1
            if rng.gen::<f64>() * (f1 + f2) * f_half <= f1 * f2 {
                return Ok(s1);
            }
        }
        Err(Error::SamplingFailure { iterations: REJECTION_CAP, detail: format!("subordinator bridge split at s = {s:e}") })
    }
}

/// Exact draw from the exit distribution of the ball `B(center, r)`.
///
/// From the centre, `|y| = r u^{-1/2}` with `u ~ Beta(alpha/2, 1 - alpha/2)`
/// and a uniform direction. Elsewhere the centred law is used as proposal;
/// the kernel ratio is bounded by `((r^2-|x|^2)/r^2)^{alpha/2} (r/(r-|x|))^d`.
pub fn sample_ball_exit_position<R: Rng + ?Sized>(
    x: &[f64],
    center: &[f64],
    r: f64,
    params: StableParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = params.d();
    let a = params.alpha();
    if params.is_gaussian() {
        return Err(Error::Unsupported("ball exit sampling needs alpha < 2".into()));
    }
    if x.len() != d || center.len() != d || !(r > 0.0) {
        return Err(Error::domain("ball exit: bad dimensions or radius"));
    }
    let rel: Vec<f64> = x.iter().zip(center).map(|(a, c)| (a - c) / r).collect();
    let rx = rel.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rx >= 1.0 {
        return Err(Error::domain("start point is not inside the ball"));
    }
    let beta = Beta::new(a / 2.0, 1.0 - a / 2.0).map_err(|e| Error::domain(e.to_string()))?;
    for _ in 0..REJECTION_CAP {
        let u: f64 = beta.sample(rng);
        if !(u > 0.0 && u < 1.0) {
            continue;
        }
        let rho = u.powf(-0.5);
        let dir = unit_vector(d, rng);
        let y: Vec<f64> = dir.iter().map(|v| v * rho).collect();
        let accept = if rx == 0.0 {
            1.0
        } else {
            let dxy = y.iter().zip(&rel).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            ((1.0 - rx) * rho / dxy).powi(d as i32)
        };
        if rng.gen::<f64>() < accept {
            return Ok(y.iter().zip(center).map(|(v, c)| c + r * v).collect());
        }
    }
    Err(Error::SamplingFailure { iterations: REJECTION_CAP, detail: format!("ball exit from |x - c|/r = {rx}") })
}
