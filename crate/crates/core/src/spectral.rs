//! Grid discretization of the killed generator on intervals and boxes.
//!
//! For `alpha < 2` the restricted fractional Laplacian is discretized on a
//! cell-centred grid: every lattice cell other than the node's own carries
//! the exact Lévy mass `A int_cell |z|^{-d-alpha}`, the node's own cell is
//! handled by a second-order Taylor expansion folded into the nearest
//! neighbours, and cells outside `D` (where `u = 0`) only enter through the
//! diagonal, which is the analytic mass outside the own cell.
//!
//! At `alpha = 2` the generator is the vertex-centred second-difference
//! Laplacian. On a box it is a Kronecker sum of one-dimensional operators,
//! and its spectrum is assembled from theirs.

use std::collections::BinaryHeap;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Shape};
use crate::quadrature::gauss_legendre_on;
use crate::special::gamma;
use crate::stable_kernel::{c1_constant, levy_constant, StableParams};

/// Largest matrix handed to the dense eigensolver.
pub const MAX_DENSE: usize = 5000;
/// Fewest interior nodes per side.
pub const MIN_NODES_PER_SIDE: usize = 16;

#[derive(Debug, Clone)]
enum Repr {
    Dense(Mat<f64>),
    /// `G = G_1 (+) G_2 (+) ...`, one factor per axis.
    KroneckerSum(Vec<Mat<f64>>),
}

/// Discretized generator `G` (negative definite).
#[derive(Debug, Clone)]
pub struct Generator {
    domain: Domain,
    alpha: f64,
    h: f64,
    /// Node coordinates per axis.
    axes: Vec<Vec<f64>>,
    repr: Repr,
}

impl Generator {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid_h(&self) -> f64 {
        self.h
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Number of unknowns.
    pub fn size(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// Node coordinates, first axis varying slowest.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for axis in &self.axes {
            out = out.into_iter().flat_map(|p| axis.iter().map(move |&c| [p.clone(), vec![c]].concat())).collect();
        }
        out
    }

    /// Dense copy of `G`.
    pub fn to_dense(&self) -> Result<Mat<f64>> {
        match &self.repr {
            Repr::Dense(m) => Ok(m.clone()),
            Repr::KroneckerSum(fs) => {
                let n = self.size();
                if n > MAX_DENSE {
                    return Err(Error::Refused(format!("{n} unknowns exceed the dense limit {MAX_DENSE}")));
                }
                let dims: Vec<usize> = fs.iter().map(|f| f.nrows()).collect();
                let mut m = Mat::<f64>::zeros(n, n);
                for r in 0..n {
                    let ri = unravel(r, &dims);
                    for (ax, f) in fs.iter().enumerate() {
                        for c_ax in 0..dims[ax] {
                            let v = f.read(ri[ax], c_ax);
                            if v != 0.0 {
                                let mut ci = ri.clone();
                                ci[ax] = c_ax;
                                let c = ravel(&ci, &dims);
                                m.write(r, c, m.read(r, c) + v);
                            }
                        }
                    }
                }
                Ok(m)
            }
        }
    }

    /// `G v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.size() {
            return Err(Error::domain("vector length does not match the grid"));
        }
        let m = self.to_dense()?;
        Ok((0..v.len()).map(|i| (0..v.len()).map(|j| m.read(i, j) * v[j]).sum()).collect())
    }
}

fn unravel(mut r: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for ax in (0..dims.len()).rev() {
        out[ax] = r % dims[ax];
        r /= dims[ax];
    }
    out
}

fn ravel(idx: &[usize], dims: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (i, d)| acc * d + i)
}

fn box_sides(domain: &Domain) -> Result<Vec<(f64, f64)>> {
    match domain.shape() {
        Shape::Interval { a, b } => Ok(vec![(*a, *b)]),
        Shape::Box { low, high } => Ok(low.iter().cloned().zip(high.iter().cloned()).collect()),
        _ => Err(Error::Unsupported("spectral grids are implemented for intervals and boxes".into())),
    }
}

/// Cells per axis for spacing `h`; the sides must be integer multiples of `h`.
fn cells_per_axis(sides: &[(f64, f64)], h: f64) -> Result<Vec<usize>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::domain("grid spacing must be positive"));
    }
    sides
        .iter()
        .map(|&(a, b)| {
            let n = ((b - a) / h).round();
            if n < 1.0 || ((b - a) - n * h).abs() > 1e-9 * (b - a) {
                Err(Error::domain(format!("side length {} is not a multiple of h = {h}", b - a)))
            } else {
                Ok(n as usize)
            }
        })
        .collect()
}

fn laplacian_1d(n: usize, h: f64) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(n, n);
    let c = 1.0 / (h * h);
    for i in 0..n {
        m.write(i, i, -2.0 * c);
        if i + 1 < n {
            m.write(i, i + 1, c);
            m.write(i + 1, i, c);
        }
    }
    m
}

/// `int_{R^d \ cell_0} |z|^{-d-alpha} dz` and `int_{cell_0} z_1^2 |z|^{-d-alpha} dz`
/// for the unit cell centred at 0.
fn own_cell_moments(d: usize, alpha: f64) -> (f64, f64) {
    match d {
        1 => (2.0 * 0.5f64.powf(-alpha) / alpha, 2.0 * 0.5f64.powf(2.0 - alpha) / (2.0 - alpha)),
        _ => {
            // polar coordinates over the eight triangles of the square
            let rule = gauss_legendre_on(48, 0.0, std::f64::consts::FRAC_PI_4);
            let rho = |th: f64| 0.5 / th.cos();
            let outside: f64 = 8.0 * rule.iter().map(|&(th, w)| w * rho(th).powf(-alpha) / alpha).sum::<f64>();
            let inside: f64 = 8.0 * rule.iter().map(|&(th, w)| w * rho(th).powf(2.0 - alpha) / (2.0 - alpha)).sum::<f64>();
            (outside, 0.5 * inside)
        }
    }
}

/// `int_{cell (i, j)} |z|^{-2-alpha} dz` over the unit cell centred at `(i, j)`.
fn cell_mass_2d(i: usize, j: usize, alpha: f64, near: &[(f64, f64)], far: &[(f64, f64)]) -> f64 {
    let rule = if i.max(j) <= 3 { near } else { far };
    let mut s = 0.0;
    for &(u, wu) in rule {
        for &(v, wv) in rule {
            let (x, y) = (i as f64 + u, j as f64 + v);
            s += wu * wv * (x * x + y * y).powf(-(2.0 + alpha) / 2.0);
        }
    }
    s
}

/// Assemble the killed generator on an interval or box with spacing `h`.
pub fn assemble_generator(domain: &Domain, h: f64, alpha: f64) -> Result<Generator> {
    let sides = box_sides(domain)?;
    let d = sides.len();
    let params = StableParams::new(d, alpha)?;
    let cells = cells_per_axis(&sides, h)?;
    if params.is_gaussian() {
        // vertex-centred: interior nodes a + i h, i = 1..n-1
        let interior: Vec<usize> = cells.iter().map(|n| n.saturating_sub(1)).collect();
        if interior.iter().any(|&n| n < MIN_NODES_PER_SIDE) {
            return Err(Error::Refused(format!("grid too coarse: fewer than {MIN_NODES_PER_SIDE} interior nodes per side")));
        }
        if interior.iter().any(|&n| n > MAX_DENSE) {
            return Err(Error::Refused(format!("more than {MAX_DENSE} nodes on one side")));
        }
        let axes = sides.iter().zip(&interior).map(|(&(a, _), &n)| (1..=n).map(|i| a + i as f64 * h).collect()).collect();
        let factors = interior.iter().map(|&n| laplacian_1d(n, h)).collect();
        return Ok(Generator { domain: domain.clone(), alpha, h, axes, repr: Repr::KroneckerSum(factors) });
    }
    if cells.iter().any(|&n| n < MIN_NODES_PER_SIDE) {
        return Err(Error::Refused(format!("grid too coarse: fewer than {MIN_NODES_PER_SIDE} interior nodes per side")));
    }
    if d > 2 {
        return Err(Error::Unsupported("fractional grids are implemented in one and two dimensions".into()));
    }
    let n: usize = cells.iter().product();
    if n > MAX_DENSE {
        return Err(Error::Refused(format!("{n} unknowns exceed the dense limit {MAX_DENSE}")));
    }
    let a_const = levy_constant(params)?;
    let scale = a_const * h.powf(-alpha);
    let (outside, m2) = own_cell_moments(d, alpha);
    // Taylor term of the own cell, per nearest neighbour
    let extra = scale * m2 / 2.0;
    let diag = scale * outside + 2.0 * d as f64 * extra;
    let axes: Vec<Vec<f64>> = sides.iter().zip(&cells).map(|(&(a, _), &n)| (0..n).map(|i| a + (i as f64 + 0.5) * h).collect()).collect();
    let mut m = Mat::<f64>::zeros(n, n);
    if d == 1 {
        let w = |k: usize| {
            let k = k as f64;
            scale * ((k - 0.5).powf(-alpha) - (k + 0.5).powf(-alpha)) / alpha
        };
        for i in 0..n {
            m.write(i, i, -diag);
            for j in 0..n {
                if i != j {
                    let k = i.abs_diff(j);
                    m.write(i, j, w(k) + if k == 1 { extra } else { 0.0 });
                }
            }
        }
    } else {
        let (nx, ny) = (cells[0], cells[1]);
        let near = gauss_legendre_on(16, -0.5, 0.5);
        let far = gauss_legendre_on(4, -0.5, 0.5);
        let mut w = vec![vec![0.0; ny]; nx];
        for (i, row) in w.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i + j > 0 {
                    *v = scale * cell_mass_2d(i, j, alpha, &near, &far);
                }
            }
        }
        w[1][0] += extra;
        w[0][1] += extra;
        for r in 0..n {
            let (ri, rj) = (r / ny, r % ny);
            for c in 0..n {
                let (ci, cj) = (c / ny, c % ny);
                let v = if r == c { -diag } else { w[ri.abs_diff(ci)][rj.abs_diff(cj)] };
                m.write(r, c, v);
            }
        }
    }
    Ok(Generator { domain: domain.clone(), alpha, h, axes, repr: Repr::Dense(m) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Smallest eigenvalues of `-G`, nondecreasing.
    pub eigenvalues: Vec<f64>,
    pub grid_h: f64,
    pub domain: Domain,
    pub alpha: f64,
    /// Number of eigenvalues kept.
    pub truncation_count: usize,
    /// Size of the discretized operator.
    pub unknowns: usize,
}

impl Spectrum {
    pub fn params(&self) -> Result<StableParams> {
        StableParams::new(self.domain.dim(), self.alpha)
    }

    pub fn largest(&self) -> f64 {
        *self.eigenvalues.last().expect("spectra are nonempty")
    }
}

fn sorted_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let neg = Mat::<f64>::from_fn(n, n, |i, j| -m.read(i, j));
    let mut ev = neg.selfadjoint_eigenvalues(Side::Lower);
    if ev.iter().any(|x| !x.is_finite()) {
        return Err(Error::Convergence { what: "dense symmetric eigensolver", achieved: f64::NAN });
    }
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// The `k` smallest sums `a_i + b_j + ...` of sorted lists.
fn smallest_sums(lists: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut best: BinaryHeap<OrderedF64> = BinaryHeap::new();
    fn rec(lists: &[Vec<f64>], acc: f64, k: usize, best: &mut BinaryHeap<OrderedF64>) {
        let Some((first, rest)) = lists.split_first() else {
            if best.len() < k {
                best.push(OrderedF64(acc));
            } else if acc < best.peek().expect("heap has k items").0 {
                best.pop();
                best.push(OrderedF64(acc));
            }
            return;
        };
        let floor: f64 = rest.iter().map(|l| l[0]).sum();
        for &v in first {
            if best.len() == k && acc + v + floor >= best.peek().expect("heap has k items").0 {
                break;
            }
            rec(rest, acc + v, k, best);
        }
    }
    rec(lists, 0.0, k, &mut best);
    let mut out: Vec<f64> = best.into_iter().map(|o| o.0).collect();
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedF64(f64);
impl Eq for OrderedF64 {}
impl PartialOrd for OrderedF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// The `k` smallest eigenvalues of `-G`.
pub fn eigen_spectrum(gen: &Generator, k: usize) -> Result<Spectrum> {
    let n = gen.size();
    if k == 0 || k > n {
        return Err(Error::domain(format!("k = {k} must lie in 1..={n}")));
    }
    let all = match &gen.repr {
        Repr::Dense(m) => sorted_eigenvalues(m)?,
        Repr::KroneckerSum(fs) => {
            let lists = fs.iter().map(sorted_eigenvalues).collect::<Result<Vec<_>>>()?;
            smallest_sums(&lists, k)
        }
    };
    let eigenvalues: Vec<f64> = all.into_iter().take(k).collect();
    if eigenvalues[0] <= 0.0 {
        return Err(Error::Convergence { what: "positive definiteness of the discretized operator", achieved: eigenvalues[0] });
    }
    Ok(Spectrum { eigenvalues, grid_h: gen.h, domain: gen.domain.clone(), alpha: gen.alpha, truncation_count: k, unknowns: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceValue {
    pub value: f64,
    /// `e^{-lambda_k t} k / (lambda_k t)`.
    pub truncation_bound: f64,
}

/// Relative size of the truncation tail accepted by `trace_from_spectrum`.
pub const TRUNCATION_TOL: f64 = 1e-6;

fn tail_estimate(lambda_k: f64, k: usize, t: f64) -> f64 {
    (-lambda_k * t).exp() * k as f64 / (lambda_k * t)
}

/// `sum_{n <= k} e^{-lambda_n t}` with its truncation bound.
pub fn trace_from_spectrum(spec: &Spectrum, t: f64) -> Result<TraceValue> {
    if !(t > 0.0) {
        return Err(Error::domain("time must be positive"));
    }
    // summed from the smallest terms up
    let value: f64 = spec.eigenvalues.iter().rev().map(|l| (-l * t).exp()).sum();
    let k = spec.eigenvalues.len();
    let bound = tail_estimate(spec.largest(), k, t);
    if bound > TRUNCATION_TOL * value {
        let params = spec.params()?;
        let (d, a) = (params.d() as f64, params.alpha());
        let vol = spec.domain.measures()?.volume;
        let weyl = |n: usize| (n as f64 * gamma(d / a + 1.0) / (c1_constant(params).value() * vol)).powf(a / d);
        let mut need = k.max(1);
        loop {
            need *= 2;
            let lam = weyl(need);
            if tail_estimate(lam, need, t) <= TRUNCATION_TOL * value || need > 1 << 40 {
                break;
            }
        }
        return Err(Error::Refused(format!("t = {t} is below the truncation limit of {k} eigenvalues; about {need} are needed")));
    }
    Ok(TraceValue { value, truncation_bound: bound })
}

/// `N(lambda) = #{n : lambda_n <= lambda}`.
pub fn counting_function(spec: &Spectrum, lam: f64) -> Result<usize> {
    if lam > spec.largest() {
        return Err(Error::Refused(format!("lambda = {lam} lies beyond the computed spectrum (max {})", spec.largest())));
    }
    Ok(spec.eigenvalues.partition_point(|&l| l <= lam))
}

/// `N(lambda) Gamma(d/alpha + 1) / (C1 |D| lambda^{d/alpha})`.
pub fn karamata_ratio(spec: &Spectrum, lam: f64) -> Result<f64> {
    let n = counting_function(spec, lam)?;
    let params = spec.params()?;
    let (d, a) = (params.d() as f64, params.alpha());
    let vol = spec.domain.measures()?.volume;
    Ok(n as f64 * gamma(d / a + 1.0) / (c1_constant(params).value() * vol * lam.powf(d / a)))
}

/// Least-squares slope of `ln n` against `ln lambda_n` over the upper half.
pub fn weyl_slope(spec: &Spectrum) -> Result<f64> {
    let k = spec.eigenvalues.len();
    if k < 8 {
        return Err(Error::domain("need at least eight eigenvalues for a slope"));
    }
    let pts: Vec<(f64, f64)> = (k / 2..k).map(|i| (spec.eigenvalues[i].ln(), ((i + 1) as f64).ln())).collect();
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// `lambda_1` at spacings `h` and `2 h`; flags a relative change above 2%.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementCheck {
    pub lambda1_h: f64,
    pub lambda1_2h: f64,
    pub relative_change: f64,
    pub flagged: bool,
}

pub fn refinement_check(domain: &Domain, h: f64, alpha: f64) -> Result<RefinementCheck> {
    let fine = eigen_spectrum(&assemble_generator(domain, h, alpha)?, 1)?.eigenvalues[0];
    let coarse = eigen_spectrum(&assemble_generator(domain, 2.0 * h, alpha)?, 1)?.eigenvalues[0];
    let rel = (fine - coarse).abs() / fine;
    Ok(RefinementCheck { lambda1_h: fine, lambda1_2h: coarse, relative_change: rel, flagged: rel > 0.02 })
}

/// Killed Gaussian kernel `p_D(t, x, x)` on a box, from the dense
/// eigenpairs of the one-dimensional second-difference operators.
pub fn box_killed_density_diagonal(domain: &Domain, t: f64, x: &[f64], h: f64) -> Result<f64> {
    let sides = box_sides(domain)?;
    if x.len() != sides.len() || !domain.contains(x) {
        return Err(Error::domain("point must lie in the box"));
    }
    if !(t > 0.0) {
        return Err(Error::domain("time must be positive"));
    }
    let cells = cells_per_axis(&sides, h)?;
    let mut prod = 1.0;
    for ((&(a, _), &n), &xi) in sides.iter().zip(&cells).zip(x) {
        if n - 1 > MAX_DENSE {
            return Err(Error::Refused(format!("more than {MAX_DENSE} nodes on one side")));
        }
        let m = laplacian_1d(n - 1, h);
        let neg = Mat::<f64>::from_fn(n - 1, n - 1, |i, j| -m.read(i, j));
        let eig = neg.selfadjoint_eigendecomposition(Side::Lower);
        let (s, u) = (eig.s().column_vector(), eig.u());
        // x between interior nodes j and j + 1 (index 0 is the node a + h)
        let pos = (xi - a) / h - 1.0;
        let j = pos.floor().clamp(-1.0, (n - 2) as f64);
        let frac = pos - j;
        let node = |idx: f64, col: usize| -> f64 {
            if idx < 0.0 || idx > (n - 2) as f64 {
                0.0
            } else {
                u.read(idx as usize, col)
            }
        };
        let mut sum = 0.0;
        for col in 0..n - 1 {
            let phi = ((1.0 - frac) * node(j, col) + frac * node(j + 1.0, col)) / h.sqrt();
            sum += (-s.read(col) * t).exp() * phi * phi;
        }
        prod *= sum;
    }
    Ok(prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_box() -> Domain {
        Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn interval_dirichlet_spectrum() {
        let i = Domain::interval(0.0, 1.0).unwrap();
        let s = eigen_spectrum(&assemble_generator(&i, 1.0 / 2000.0, 2.0).unwrap(), 5).unwrap();
        for (n, l) in s.eigenvalues.iter().enumerate() {
            let exact = PI * PI * ((n + 1) * (n + 1)) as f64;
            assert!((l - exact).abs() < 0.01 * exact);
        }
    }

    #[test]
    fn box_first_eigenvalue_and_sums() {
        let g = assemble_generator(&unit_box(), 1.0 / 40.0, 2.0).unwrap();
        let s = eigen_spectrum(&g, 20).unwrap();
        assert!((s.eigenvalues[0] - 2.0 * PI * PI).abs() < 0.02 * 2.0 * PI * PI);
        // the Kronecker shortcut agrees with a dense solve of the same matrix
        let dense = sorted_eigenvalues(&g.to_dense().unwrap()).unwrap();
        for (a, b) in s.eigenvalues.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-8 * b);
        }
    }

    #[test]
    fn symmetric_and_refuses_coarse_grids() {
        let g = assemble_generator(&unit_box(), 1.0 / 20.0, 1.5).unwrap();
        let m = g.to_dense().unwrap();
        for i in 0..m.nrows() {
            for j in 0..i {
                assert_eq!(m.read(i, j), m.read(j, i));
            }
        }
        assert!(matches!(assemble_generator(&unit_box(), 1.0 / 10.0, 1.5), Err(Error::Refused(_))));
        assert!(assemble_generator(&unit_box(), 0.3, 1.5).is_err());
        let ball = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(matches!(assemble_generator(&ball, 0.05, 1.5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn counting_and_ratio() {
        let s = eigen_spectrum(&assemble_generator(&unit_box(), 1.0 / 40.0, 2.0).unwrap(), 50).unwrap();
        let l1 = s.eigenvalues[0];
        assert_eq!(counting_function(&s, l1 * (1.0 - 1e-12)).unwrap(), 0);
        assert_eq!(counting_function(&s, l1).unwrap(), 1);
        assert!(counting_function(&s, s.largest() * 1.01).is_err());
        assert!(karamata_ratio(&s, s.largest()).unwrap() > 0.0);
    }

    #[test]
    fn trace_spectral_gap_and_monotone() {
        let s = eigen_spectrum(&assemble_generator(&unit_box(), 1.0 / 40.0, 2.0).unwrap(), 100).unwrap();
        let l1 = s.eigenvalues[0];
        let t = 5.0 / l1;
        let z = trace_from_spectrum(&s, t).unwrap().value;
        assert!((z / (-l1 * t).exp() - 1.0).abs() < 0.05);
        let mut prev = f64::INFINITY;
        for &t in &[0.05, 0.1, 0.2, 0.5] {
            let z = trace_from_spectrum(&s, t).unwrap().value;
            assert!(z < prev);
            prev = z;
        }
        assert!(matches!(trace_from_spectrum(&s, 1e-4), Err(Error::Refused(_))));
    }

    #[test]
    fn killed_kernel_oracle_matches_images() {
        // 1D interval (0,1): p_D(t,x,x) by the method of images
        let t: f64 = 0.01;
        let x: f64 = 0.1;
        let mut images = 0.0;
        for m in -20i32..=20 {
            let shift = 2.0 * m as f64;
            images += (-(shift).powi(2) / (4.0 * t)).exp() - (-(2.0 * x + shift).powi(2) / (4.0 * t)).exp();
        }
        images /= (4.0 * PI * t).sqrt();
        let i = Domain::interval(0.0, 1.0).unwrap();
        let got = box_killed_density_diagonal(&i, t, &[x], 1.0 / 1000.0).unwrap();
        assert!((got - images).abs() < 1e-3 * images, "{got} vs {images}");
    }

    #[test]
    fn smallest_sums_brute_force() {
        let a = vec![1.0, 3.0, 4.0, 9.0];
        let b = vec![0.5, 2.0, 7.0];
        let mut all: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x + y)).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(smallest_sums(&[a, b], 5), all[..5].to_vec());
    }
}
