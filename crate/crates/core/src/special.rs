//! Special functions used by the kernels: gamma, `sin(pi x)` with exact
//! zeros, and the reduced Bessel function `z^{-nu} J_nu(z)` for the orders
//! `nu = d/2 - 1` that appear in radial Fourier inversion.

use std::f64::consts::PI;

#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `ln |Gamma(x)|`.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma_r(x).0
}

/// `sin(pi x)`, exact at integers and half-integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    if r == 0.5 {
        return 1.0;
    }
    if r == 1.5 {
        return -1.0;
    }
    (PI * r).sin()
}

/// Reduced Bessel function `Lambda_nu(z) = z^{-nu} J_nu(z)` for
/// `nu = d/2 - 1`, `d >= 1`, `z >= 0`. Entire in `z`, equal to
/// `1 / (2^nu Gamma(nu + 1))` at the origin.
#[derive(Debug, Clone, Copy)]
pub struct ReducedBessel {
    d: usize,
    nu: f64,
    at_zero: f64,
}

impl ReducedBessel {
    pub fn new(d: usize) -> Self {
        let nu = d as f64 / 2.0 - 1.0;
        let at_zero = 1.0 / (2f64.powf(nu) * gamma(nu + 1.0));
        Self { d, nu, at_zero }
    }

    pub fn order(&self) -> f64 {
        self.nu
    }

    pub fn at_zero(&self) -> f64 {
        self.at_zero
    }

    pub fn eval(&self, z: f64) -> f64 {
        let z = z.abs();
        let series_limit = 2.0f64.max(self.nu + 2.0);
        match self.d {
            // J_{-1/2}(z) = sqrt(2/(pi z)) cos z
            1 => (2.0 / PI).sqrt() * z.cos(),
            // J_{1/2}(z) = sqrt(2/(pi z)) sin z
            3 => {
                if z < 1e-4 {
                    (2.0 / PI).sqrt() * (1.0 - z * z / 6.0 + z.powi(4) / 120.0)
                } else {
                    (2.0 / PI).sqrt() * z.sin() / z
                }
            }
            _ if z <= series_limit => self.series(z),
            d if d % 2 == 0 => {
                let n = (d / 2 - 1) as i32;
                let j = match n {
                    0 => libm::j0(z),
                    1 => libm::j1(z),
                    _ => libm::jn(n, z),
                };
                j / z.powi(n)
            }
            _ => {
                // half-integer order n + 1/2 via spherical Bessel upward recurrence, stable for z > n
                let n = (self.d - 3) / 2;
                let mut jm1 = z.sin() / z;
                let mut j = z.sin() / (z * z) - z.cos() / z;
                if n == 0 {
                    return (2.0 / PI).sqrt() * jm1 / z.powf(self.nu - 0.5);
                }
                for k in 1..n {
                    let next = (2 * k + 1) as f64 / z * j - jm1;
                    jm1 = j;
                    j = next;
                }
                // J_{n+1/2}(z) = sqrt(2z/pi) j_n(z)
                (2.0 * z / PI).sqrt() * j / z.powf(self.nu)
            }
        }
    }

    fn series(&self, z: f64) -> f64 {
        let q = 0.25 * z * z;
        let mut term = self.at_zero;
        let mut sum = term;
        for m in 1..200 {
            term *= -q / (m as f64 * (m as f64 + self.nu));
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    }
}
