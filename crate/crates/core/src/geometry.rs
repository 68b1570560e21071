//! Domains with closed-form distance functions, measures and parallel sets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, inner: f64, outer: f64 },
    Box { low: Vec<f64>, high: Vec<f64> },
    /// `{x : x[axis] > 0}` in `R^d`
    HalfSpace { d: usize, axis: usize },
    Interval { a: f64, b: f64 },
    /// All of `R^d`; nothing ever exits.
    Whole { d: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape", into = "Shape")]
pub struct Domain {
    shape: Shape,
    d: usize,
}

impl TryFrom<Shape> for Domain {
    type Error = Error;
    fn try_from(shape: Shape) -> Result<Self> {
        Domain::new(shape)
    }
}

impl From<Domain> for Shape {
    fn from(d: Domain) -> Shape {
        d.shape
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub volume: f64,
    pub surface_area: f64,
    /// Largest `R` for which the boundary is `R`-smooth; 0 when it is not.
    pub smoothness_radius: f64,
    pub r_smooth: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelSetReport {
    pub q: f64,
    pub boundary_area_q: f64,
    pub volume_q: f64,
}

/// Distance to the boundary together with an inside flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDistance {
    pub value: f64,
    pub inside: bool,
}

fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl Domain {
    pub fn new(shape: Shape) -> Result<Self> {
        let d = match &shape {
            Shape::Ball { center, radius } => {
                if center.is_empty() || !finite(center) || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::domain("ball needs a finite center and a positive radius"));
                }
                center.len()
            }
            Shape::Annulus { center, inner, outer } => {
                if center.is_empty() || !finite(center) || !(*inner > 0.0 && inner < outer && outer.is_finite()) {
                    return Err(Error::domain("annulus needs 0 < r_inner < r_outer"));
                }
                center.len()
            }
            Shape::Box { low, high } => {
                if low.is_empty() || low.len() != high.len() || !finite(low) || !finite(high) {
                    return Err(Error::domain("box corners must be finite and of equal dimension"));
                }
                if low.iter().zip(high).any(|(l, h)| l >= h) {
                    return Err(Error::domain("box needs corner_low < corner_high componentwise"));
                }
                low.len()
            }
            Shape::HalfSpace { d, axis } => {
                if *d < 1 || axis >= d {
                    return Err(Error::domain("half-space axis must be below the dimension"));
                }
                *d
            }
            Shape::Interval { a, b } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::domain("interval needs a < b"));
                }
                1
            }
            Shape::Whole { d } => {
                if *d < 1 {
                    return Err(Error::domain("dimension must be at least 1"));
                }
                *d
            }
        };
        Ok(Self { shape, d })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(Shape::Ball { center, radius })
    }

    pub fn annulus(center: Vec<f64>, inner: f64, outer: f64) -> Result<Self> {
        Self::new(Shape::Annulus { center, inner, outer })
    }

    pub fn cuboid(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        Self::new(Shape::Box { low, high })
    }

    pub fn half_space(d: usize, axis: usize) -> Result<Self> {
        Self::new(Shape::HalfSpace { d, axis })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(Shape::Interval { a, b })
    }

    pub fn whole(d: usize) -> Result<Self> {
        Self::new(Shape::Whole { d })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.shape, Shape::HalfSpace { .. } | Shape::Whole { .. })
    }

    pub fn has_boundary(&self) -> bool {
        !matches!(self.shape, Shape::Whole { .. })
    }

    /// Signed distance to the boundary: positive inside, negative outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => radius - dist(x, center),
            Shape::Annulus { center, inner, outer } => {
                let r = dist(x, center);
                (r - inner).min(outer - r)
            }
            Shape::Box { low, high } => {
                let mut inside = f64::INFINITY;
                let mut outside2 = 0.0;
                for i in 0..self.d {
                    let m = (x[i] - low[i]).min(high[i] - x[i]);
                    inside = inside.min(m);
                    let e = (low[i] - x[i]).max(x[i] - high[i]).max(0.0);
                    outside2 += e * e;
                }
                if inside >= 0.0 {
                    inside
                } else {
                    -outside2.sqrt()
                }
            }
            Shape::HalfSpace { axis, .. } => x[*axis],
            Shape::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Shape::Whole { .. } => f64::INFINITY,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > 0.0
    }

    /// `delta_D(x)`; 0 outside `D`, with the flag telling the two apart.
    pub fn distance_to_boundary(&self, x: &[f64]) -> BoundaryDistance {
        let s = self.signed_distance(x);
        if s > 0.0 {
            BoundaryDistance { value: s, inside: true }
        } else {
            BoundaryDistance { value: 0.0, inside: false }
        }
    }

    pub fn measures(&self) -> Result<Measures> {
        let d = self.d;
        let om = sphere_area(d);
        let df = d as f64;
        Ok(match &self.shape {
            Shape::Ball { radius, .. } => Measures {
                volume: om * radius.powi(d as i32) / df,
                surface_area: om * radius.powi(d as i32 - 1),
                smoothness_radius: *radius,
                r_smooth: true,
            },
            Shape::Annulus { inner, outer, .. } => Measures {
                volume: om * (outer.powi(d as i32) - inner.powi(d as i32)) / df,
                surface_area: om * (outer.powi(d as i32 - 1) + inner.powi(d as i32 - 1)),
                // interior balls are limited by the shell width, exterior ones by the hole
                smoothness_radius: (0.5 * (outer - inner)).min(*inner),
                r_smooth: true,
            },
            Shape::Box { low, high } => {
                let sides: Vec<f64> = low.iter().zip(high).map(|(l, h)| h - l).collect();
                let volume: f64 = sides.iter().product();
                let surface_area = if d == 1 { 2.0 } else { sides.iter().map(|s| 2.0 * volume / s).sum() };
                let r_smooth = d == 1;
                Measures {
                    volume,
                    surface_area,
                    smoothness_radius: if r_smooth { 0.5 * sides[0] } else { 0.0 },
                    r_smooth,
                }
            }
            Shape::Interval { a, b } => Measures {
                volume: b - a,
                surface_area: 2.0,
                smoothness_radius: 0.5 * (b - a),
                r_smooth: true,
            },
            Shape::HalfSpace { .. } | Shape::Whole { .. } => {
                return Err(Error::domain("unbounded domain has no finite volume"))
            }
        })
    }

    /// Largest value of `delta_D` over `D`.
    pub fn inradius(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => *radius,
            Shape::Annulus { inner, outer, .. } => 0.5 * (outer - inner),
            Shape::Box { low, high } => low.iter().zip(high).map(|(l, h)| 0.5 * (h - l)).fold(f64::INFINITY, f64::min),
            Shape::Interval { a, b } => 0.5 * (b - a),
            Shape::HalfSpace { .. } | Shape::Whole { .. } => f64::INFINITY,
        }
    }

    /// `|dD_q|` and `|D_q|` for the inner parallel set `D_q = {delta_D > q}`.
    pub fn parallel_set(&self, q: f64) -> Result<ParallelSetReport> {
        if !(q >= 0.0) {
            return Err(Error::domain("parallel-set depth must be nonnegative"));
        }
        let m = self.measures()?;
        if m.r_smooth && q >= m.smoothness_radius && !matches!(self.shape, Shape::Ball { .. }) {
            return Err(Error::domain(format!("depth {q} is not below the smoothness radius {}", m.smoothness_radius)));
        }
        if q >= self.inradius() {
            return Err(Error::domain(format!("depth {q} empties the domain")));
        }
        let d = self.d;
        let om = sphere_area(d);
        let df = d as f64;
        let (area, volume) = match &self.shape {
            Shape::Ball { radius, .. } => {
                let r = radius - q;
                (om * r.powi(d as i32 - 1), om * r.powi(d as i32) / df)
            }
            Shape::Annulus { inner, outer, .. } => {
                let (a, b) = (inner + q, outer - q);
                (om * (a.powi(d as i32 - 1) + b.powi(d as i32 - 1)), om * (b.powi(d as i32) - a.powi(d as i32)) / df)
            }
            Shape::Box { low, high } => {
                let sides: Vec<f64> = low.iter().zip(high).map(|(l, h)| h - l - 2.0 * q).collect();
                let volume: f64 = sides.iter().product();
                let area = if d == 1 { 2.0 } else { sides.iter().map(|s| 2.0 * volume / s).sum() };
                (area, volume)
            }
            Shape::Interval { a, b } => (2.0, b - a - 2.0 * q),
            _ => unreachable!("bounded shapes only"),
        };
        Ok(ParallelSetReport { q, boundary_area_q: area, volume_q: volume })
    }

    /// Uniform point on the level set `{delta_D = q}`, `0 <= q < inradius`.
    pub fn sample_level_set<R: Rng + ?Sized>(&self, q: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !(q >= 0.0 && q < self.inradius()) {
            return Err(Error::domain(format!("level {q} outside [0, inradius)")));
        }
        let d = self.d;
        Ok(match &self.shape {
            Shape::Ball { center, radius } => on_sphere(center, radius - q, d, rng),
            Shape::Annulus { center, inner, outer } => {
                let (a, b) = (inner + q, outer - q);
                let wa = a.powi(d as i32 - 1);
                let wb = b.powi(d as i32 - 1);
                let r = if rng.gen::<f64>() * (wa + wb) < wa { a } else { b };
                on_sphere(center, r, d, rng)
            }
            Shape::Box { low, high } => {
                let lo: Vec<f64> = low.iter().map(|l| l + q).collect();
                let hi: Vec<f64> = high.iter().map(|h| h - q).collect();
                if d == 1 {
                    return Ok(vec![if rng.gen::<bool>() { lo[0] } else { hi[0] }]);
                }
                let sides: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
                let vol: f64 = sides.iter().product();
                // face pairs normal to axis i have area vol / side_i each
                let weights: Vec<f64> = sides.iter().map(|s| vol / s).collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut axis = d - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        axis = i;
                        break;
                    }
                    u -= w;
                }
                (0..d)
                    .map(|i| {
                        if i == axis {
                            if rng.gen::<bool>() { lo[i] } else { hi[i] }
                        } else {
                            lo[i] + rng.gen::<f64>() * sides[i]
                        }
                    })
                    .collect()
            }
            Shape::Interval { a, b } => vec![if rng.gen::<bool>() { a + q } else { b - q }],
            _ => return Err(Error::domain("level sets of unbounded domains are not sampled")),
        })
    }

    /// Nearest boundary point.
    pub fn project_to_boundary(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Ball { center, radius } => radial_projection(x, center, *radius),
            Shape::Annulus { center, inner, outer } => {
                let r = dist(x, center);
                let target = if (r - inner).abs() <= (outer - r).abs() { *inner } else { *outer };
                radial_projection(x, center, target)
            }
            Shape::Box { low, high } => {
                if self.contains(x) {
                    let mut best = (f64::INFINITY, 0, 0.0);
                    for i in 0..self.d {
                        if x[i] - low[i] < best.0 {
                            best = (x[i] - low[i], i, low[i]);
                        }
                        if high[i] - x[i] < best.0 {
                            best = (high[i] - x[i], i, high[i]);
                        }
                    }
                    let mut y = x.to_vec();
                    y[best.1] = best.2;
                    y
                } else {
                    x.iter().zip(low.iter().zip(high)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
                }
            }
            Shape::HalfSpace { axis, .. } => {
                let mut y = x.to_vec();
                y[*axis] = 0.0;
                y
            }
            Shape::Interval { a, b } => vec![if (x[0] - a).abs() <= (b - x[0]).abs() { *a } else { *b }],
            Shape::Whole { .. } => x.to_vec(),
        }
    }

    /// Probability that a Brownian bridge from `xa` to `xb` (both inside) with
    /// per-coordinate variance `var` stays in `D`, treating each boundary
    /// piece as flat at the scale of the step.
    pub fn bridge_survival(&self, xa: &[f64], xb: &[f64], var: f64) -> f64 {
        let flat = |a: f64, b: f64| {
            if a <= 0.0 || b <= 0.0 {
                0.0
            } else {
                1.0 - (-2.0 * a * b / var).exp()
            }
        };
        match &self.shape {
            Shape::Ball { center, radius } => flat(radius - dist(xa, center), radius - dist(xb, center)),
            Shape::Annulus { center, inner, outer } => {
                let (ra, rb) = (dist(xa, center), dist(xb, center));
                flat(ra - inner, rb - inner) * flat(outer - ra, outer - rb)
            }
            Shape::Box { low, high } => (0..self.d)
                .map(|i| flat(xa[i] - low[i], xb[i] - low[i]) * flat(high[i] - xa[i], high[i] - xb[i]))
                .product(),
            Shape::HalfSpace { axis, .. } => flat(xa[*axis], xb[*axis]),
            Shape::Interval { a, b } => flat(xa[0] - a, xb[0] - a) * flat(b - xa[0], b - xb[0]),
            Shape::Whole { .. } => 1.0,
        }
    }

    /// The image of `D` under `x -> factor * x`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::domain("scale factor must be positive"));
        }
        let s = |v: &Vec<f64>| v.iter().map(|x| x * factor).collect::<Vec<_>>();
        Self::new(match &self.shape {
            Shape::Ball { center, radius } => Shape::Ball { center: s(center), radius: radius * factor },
            Shape::Annulus { center, inner, outer } => {
                Shape::Annulus { center: s(center), inner: inner * factor, outer: outer * factor }
            }
            Shape::Box { low, high } => Shape::Box { low: s(low), high: s(high) },
            Shape::Interval { a, b } => Shape::Interval { a: a * factor, b: b * factor },
            other => other.clone(),
        })
    }
}

fn radial_projection(x: &[f64], center: &[f64], r: f64) -> Vec<f64> {
    let v: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
    let n = norm(&v);
    if n == 0.0 {
        let mut y = center.to_vec();
        y[0] += r;
        return y;
    }
    center.iter().zip(&v).map(|(c, vi)| c + r * vi / n).collect()
}

fn on_sphere<R: Rng + ?Sized>(center: &[f64], r: f64, d: usize, rng: &mut R) -> Vec<f64> {
    let u = unit_vector(d, rng);
    center.iter().zip(&u).map(|(c, ui)| c + r * ui).collect()
}

/// Uniform direction on the unit sphere.
pub fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&g);
        if n > 1e-300 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Ball { center, radius } => write!(f, "ball:{}:{}", fmt_vec(center), radius),
            Shape::Annulus { center, inner, outer } => write!(f, "annulus:{}:{}:{}", fmt_vec(center), inner, outer),
            Shape::Box { low, high } => write!(f, "box:{}:{}", fmt_vec(low), fmt_vec(high)),
            Shape::HalfSpace { d, axis } => write!(f, "halfspace:{d}:{axis}"),
            Shape::Interval { a, b } => write!(f, "interval:{a}:{b}"),
            Shape::Whole { d } => write!(f, "whole:{d}"),
        }
    }
}

/// Parses `ball:0,0:1`, `annulus:0,0:1:2`, `box:0,0:1,1`, `halfspace:2:0`,
/// `interval:0:1` and `whole:2`.
impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let bad = || Error::Config(format!("cannot parse domain '{s}'"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let int = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let vec = |t: &str| t.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>();
        let shape = match parts.as_slice() {
            ["ball", c, r] => Shape::Ball { center: vec(c)?, radius: num(r)? },
            ["annulus", c, a, b] => Shape::Annulus { center: vec(c)?, inner: num(a)?, outer: num(b)? },
            ["box", lo, hi] => Shape::Box { low: vec(lo)?, high: vec(hi)? },
            ["halfspace", d, axis] => Shape::HalfSpace { d: int(d)?, axis: int(axis)? },
            ["interval", a, b] => Shape::Interval { a: num(a)?, b: num(b)? },
            ["whole", d] => Shape::Whole { d: int(d)? },
            _ => return Err(bad()),
        };
        Domain::new(shape).map_err(|e| Error::Config(e.to_string()))
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn shapes() -> impl Strategy<Value = (Domain, f64)> {
        prop_oneof![
            (1usize..=4, 0.1f64..5.0).prop_map(|(d, r)| (Domain::ball(vec![0.0; d], r).unwrap(), r)),
            (1usize..=4, 0.1f64..3.0, 0.05f64..3.0).prop_map(|(d, a, w)| {
                let dom = Domain::annulus(vec![0.5; d], a, a + w).unwrap();
                let r = dom.measures().unwrap().smoothness_radius;
                (dom, r)
            }),
        ]
    }

    proptest! {
        #[test]
        fn van_den_berg_sandwich((dom, r) in shapes(), frac in 0.0f64..0.999) {
            let d = dom.dim() as i32;
            let q = frac * r;
            let area = dom.measures().unwrap().surface_area;
            let aq = dom.parallel_set(q).unwrap().boundary_area_q;
            prop_assert!(aq > 0.0);
            let lo = ((r - q) / r).powi(d - 1) * area;
            let hi = (r / (r - q)).powi(d - 1) * area;
            prop_assert!(lo <= aq * (1.0 + 1e-12) && aq <= hi * (1.0 + 1e-12), "{lo} {aq} {hi}");
        }

        #[test]
        fn half_depth_parallel_set_bounds((dom, r) in shapes(), frac in 0.0f64..=0.5) {
            let d = dom.dim() as i32;
            let q = frac * r;
            let m = dom.measures().unwrap();
            let aq = dom.parallel_set(q).unwrap().boundary_area_q;
            let tol = 1.0 + 1e-12;
            prop_assert!(2f64.powi(1 - d) * m.surface_area <= aq * tol);
            prop_assert!(aq <= 2f64.powi(d - 1) * m.surface_area * tol);
            prop_assert!(m.surface_area <= 2f64.powi(d) * m.volume / r * tol);
            prop_assert!((aq - m.surface_area).abs() <= 2f64.powi(d) * d as f64 * q * m.surface_area / r * tol + 1e-12);
        }
    }
}
