//! Small statistical toolbox: two-sample KS, chi-square tail, Kendall trend
//! test, Rayleigh test and weighted least squares.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = a[i].min(b[j]);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    (d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let t = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(stat: f64, dof: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, stat / 2.0)
}

/// Pearson chi-square test of observed counts against cell probabilities.
pub fn chi_square_test(observed: &[u64], probs: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::domain("chi-square needs matching cells"));
    }
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    Ok((stat, chi_square_sf(stat, observed.len() - 1)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallResult {
    pub tau: f64,
    /// One-sided p-value against a negative association.
    pub p_negative: f64,
    /// One-sided p-value against a positive association.
    pub p_positive: f64,
}

fn concordance(x: &[f64], y: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = (x[j] - x[i]).signum() * (y[j] - y[i]).signum();
            s += a as i64;
        }
    }
    s
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Kendall rank correlation; exact permutation p-values for `n <= 8`,
/// normal approximation above.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<KendallResult> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::domain("Kendall test needs at least three paired values"));
    }
    let s = concordance(x, y);
    let pairs = (n * (n - 1) / 2) as f64;
    let tau = s as f64 / pairs;
    let (p_negative, p_positive) = if n <= 8 {
        let idx: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let all = permutations(n);
        let stats: Vec<i64> = all
            .iter()
            .map(|p| concordance(&idx, &p.iter().map(|&v| v as f64).collect::<Vec<_>>()))
            .collect();
        let total = stats.len() as f64;
        (
            stats.iter().filter(|&&v| v <= s).count() as f64 / total,
            stats.iter().filter(|&&v| v >= s).count() as f64 / total,
        )
    } else {
        let nf = n as f64;
        let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
        let z = s as f64 / var.sqrt();
        let norm = Normal::new(0.0, 1.0).expect("unit normal");
        (norm.cdf(z), 1.0 - norm.cdf(z))
    };
    Ok(KendallResult { tau, p_negative, p_positive })
}

/// Rayleigh test of uniformity for angles on the circle; returns the p-value.
pub fn rayleigh_test(angles: &[f64]) -> f64 {
    let n = angles.len() as f64;
    let (c, s) = angles.iter().fold((0.0, 0.0), |(c, s), a| (c + a.cos(), s + a.sin()));
    let z = (c * c + s * s) / n;
    // Zar's small-sample correction
    let p = (-z).exp() * (1.0 + (2.0 * z - z * z) / (4.0 * n) - (24.0 * z - 132.0 * z * z + 76.0 * z.powi(3) - 9.0 * z.powi(4)) / (288.0 * n * n));
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub chi2: f64,
}

/// Weighted least squares `y ~ X b` with weights `1/sigma^2`; the covariance
/// is the inverse normal matrix (no residual rescaling).
pub fn weighted_least_squares(design: &[Vec<f64>], y: &[f64], sigma: &[f64]) -> Result<LinearFit> {
    let n = y.len();
    if design.len() != n || sigma.len() != n || n == 0 {
        return Err(Error::domain("least squares: mismatched lengths"));
    }
    let p = design[0].len();
    if n < p {
        return Err(Error::domain("least squares: fewer rows than coefficients"));
    }
    let mut a = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    for i in 0..n {
        if !(sigma[i] > 0.0) {
            return Err(Error::domain("least squares: nonpositive sigma"));
        }
        let w = 1.0 / (sigma[i] * sigma[i]);
        for j in 0..p {
            rhs[j] += w * design[i][j] * y[i];
            for k in 0..p {
                a[j][k] += w * design[i][j] * design[i][k];
            }
        }
    }
    let inv = invert(&a)?;
    let coef: Vec<f64> = (0..p).map(|j| (0..p).map(|k| inv[j][k] * rhs[k]).sum()).collect();
    let chi2 = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|j| design[i][j] * coef[j]).sum();
            ((y[i] - fit) / sigma[i]).powi(2)
        })
        .sum();
    Ok(LinearFit { coef, cov: inv, chi2 })
}

fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let p = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..p).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).expect("nonempty");
        if m[piv][c].abs() < 1e-300 {
            return Err(Error::Singularity("singular normal matrix".into()));
        }
        m.swap(c, piv);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    let row_c = m[c].clone();
                    for (v, w) in m[r].iter_mut().zip(row_c) {
                        *v -= f * w;
                    }
                }
            }
        }
    }
    Ok(m.into_iter().map(|r| r[p..].to_vec()).collect())
}

/// Mean and standard error accumulated in a fixed order.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_detects_shift() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..2000).map(|_| r.gen::<f64>()).collect();
        let y: Vec<f64> = (0..2000).map(|_| r.gen::<f64>()).collect();
        let z: Vec<f64> = (0..2000).map(|_| r.gen::<f64>() + 0.1).collect();
        assert!(ks_two_sample(&x, &y).1 > 0.01);
        assert!(ks_two_sample(&x, &z).1 < 1e-6);
    }

    #[test]
    fn chi_square_tail() {
        // chi2 with 2 dof: sf = exp(-x/2)
        assert!((chi_square_sf(3.0, 2) - (-1.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn kendall_small_exact() {
        let t = [0.4, 0.2, 0.1, 0.05];
        let up = [1.0, 2.0, 3.0, 4.0];
        let k = kendall_tau(&t, &up).unwrap();
        assert_eq!(k.tau, -1.0);
        assert!((k.p_negative - 1.0 / 24.0).abs() < 1e-15);
        let k = kendall_tau(&t, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!(k.p_negative > 0.05);
    }

    #[test]
    fn wls_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let design: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        let y: Vec<f64> = xs.iter().map(|&x| 2.0 + 0.5 * x).collect();
        let fit = weighted_least_squares(&design, &y, &[1.0; 10]).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-12 && (fit.coef[1] - 0.5).abs() < 1e-12);
        // var(slope) = 1 / sum (x - mean)^2
        assert!((fit.cov[1][1] - 1.0 / 82.5).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_uniform_vs_clustered() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..5000).map(|_| r.gen::<f64>() * std::f64::consts::TAU).collect();
        let c: Vec<f64> = (0..5000).map(|_| r.gen::<f64>() * 2.0).collect();
        assert!(rayleigh_test(&u) > 0.01);
        assert!(rayleigh_test(&c) < 1e-6);
    }
}
