//! The half-space remainder `f_H(q) = r_H(1, q e_1, q e_1)` and the
//! second-term constant `C2(d, alpha) = int_0^inf f_H(q) dq`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exit_sim::{estimate_rd, MCEstimate, StableProcess};
use crate::geometry::Domain;
use crate::rng::RngStream;
use crate::stable_kernel::{c1_constant, StableParams};

/// Geometric grid of `n` nodes from `q_min` to `q_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGrid(Vec<f64>);

impl QGrid {
    pub fn geometric(q_min: f64, q_max: f64, n: usize) -> Result<Self> {
        if !(q_min > 0.0 && q_max > q_min) || n < 3 {
            return Err(Error::domain("need 0 < q_min < q_max and at least three nodes"));
        }
        let r = q_max / q_min;
        Ok(Self((0..n).map(|i| q_min * r.powf(i as f64 / (n - 1) as f64)).collect()))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0
    }

    pub fn q_min(&self) -> f64 {
        self.0[0]
    }

    pub fn q_max(&self) -> f64 {
        *self.0.last().expect("grid is nonempty")
    }

    /// Every other node, keeping the last one.
    fn coarsened(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).step_by(2).collect();
        if *idx.last().expect("nonempty") != self.0.len() - 1 {
            idx.push(self.0.len() - 1);
        }
        idx
    }
}

impl Default for QGrid {
    fn default() -> Self {
        Self::geometric(0.01, 8.0, 40).expect("valid default grid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2Result {
    pub value: f64,
    pub std_error: f64,
    /// Trapezoid error estimate plus the bound on `(0, q_min]`.
    pub quadrature_error: f64,
    /// Analytic tail `c q_max^{1-d-alpha} / (d + alpha - 1)`, also added to `value`.
    pub tail_bound: f64,
    pub q_max: f64,
    pub d: usize,
    pub alpha: f64,
    /// Fitted constant of `f_H(q) <= c q^{-d-alpha}` for `q >= 2`.
    pub tail_constant: f64,
    /// The fitted constant moved by more than 25% between fit windows.
    pub tail_fit_unstable: bool,
    /// Largest step-halving delta of the node estimates, integrated.
    pub bias_diagnostic: f64,
    pub nodes: Vec<(f64, MCEstimate)>,
}

impl C2Result {
    pub fn total_error(&self) -> f64 {
        self.std_error + self.quadrature_error + self.tail_bound
    }
}

/// `C2(d, 2) = (4 pi)^{-d/2} sqrt(pi) / 2`.
pub fn c2_gaussian(d: usize) -> f64 {
    (4.0 * PI).powf(-(d as f64) / 2.0) * PI.sqrt() / 2.0
}

/// `r_H(1, q e_1, q e_1)` for `H = {x_1 > 0}`.
pub fn f_h(q: f64, process: &StableProcess, n_paths: usize, step: f64, stream: &RngStream) -> Result<MCEstimate> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::domain(format!("f_H needs q > 0, got {q}")));
    }
    let d = process.params().d();
    let h = Domain::half_space(d, 0)?;
    let mut x = vec![0.0; d];
    x[0] = q;
    estimate_rd(process, 1.0, &x, &h, n_paths, step, stream)
}

fn trapezoid(q: &[f64], f: &[f64], idx: &[usize]) -> f64 {
    idx.windows(2).map(|w| 0.5 * (q[w[1]] - q[w[0]]) * (f[w[0]] + f[w[1]])).sum()
}

/// `C2(d, alpha)` by trapezoid quadrature of `f_H` over `grid` plus the tail bound.
pub fn compute_c2(params: StableParams, grid: &QGrid, n_paths_per_node: usize, step: f64, stream: &RngStream) -> Result<C2Result> {
    if n_paths_per_node < 2 {
        return Err(Error::domain("need at least two paths per node"));
    }
    let process = StableProcess::new(params)?;
    let q = grid.nodes();
    let nodes: Vec<(f64, MCEstimate)> = q
        .par_iter()
        .enumerate()
        .map(|(i, &qi)| Ok((qi, f_h(qi, &process, n_paths_per_node, step, &stream.substream(i as u64))?)))
        .collect::<Result<_>>()?;
    let f: Vec<f64> = nodes.iter().map(|n| n.1.mean).collect();
    let all: Vec<usize> = (0..q.len()).collect();
    let body = trapezoid(q, &f, &all);
    let coarse = trapezoid(q, &f, &grid.coarsened());

    // independent nodes: variance of a fixed linear combination
    let mut w = vec![0.0; q.len()];
    for i in 0..q.len() - 1 {
        let h = q[i + 1] - q[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    // (0, q_min]: f_H lies between f_H(q_min) and f_H(0+) = C1
    let c1 = c1_constant(params).value();
    let q0 = grid.q_min();
    let f0 = f[0].clamp(0.0, c1);
    let near = 0.5 * (c1 + f0) * q0;
    let near_err = 0.5 * (c1 - f0) * q0;
    w[0] += 0.5 * q0;
    let var: f64 = nodes.iter().zip(&w).map(|(n, wi)| (wi * n.1.std_error).powi(2)).sum();
    let bias: f64 = nodes.iter().zip(&w).map(|(n, wi)| wi * n.1.bias_diagnostic).sum();

    let (d, a) = (params.d() as f64, params.alpha());
    let window = |lo: f64, hi: f64| -> Option<f64> {
        let vals: Vec<f64> = nodes.iter().filter(|n| n.0 >= lo && n.0 <= hi).map(|n| n.1.mean.max(0.0) * n.0.powf(d + a)).collect();
        (!vals.is_empty()).then(|| vals.iter().cloned().fold(0.0, f64::max))
    };
    let qm = grid.q_max();
    let (lo_w, hi_w) = (window(2.0, (2.0 * qm).sqrt()), window((2.0 * qm).sqrt(), qm));
    let tail_constant = lo_w.into_iter().chain(hi_w).fold(0.0, f64::max);
    let tail_fit_unstable = match (lo_w, hi_w) {
        (Some(x), Some(y)) if x.max(y) > 0.0 => (x - y).abs() > 0.25 * x.max(y),
        _ => true,
    };
    let tail_bound = tail_constant * qm.powf(1.0 - d - a) / (d + a - 1.0);
    Ok(C2Result {
        value: near + body + tail_bound,
        std_error: var.sqrt(),
        quadrature_error: (body - coarse).abs() + near_err,
        tail_bound,
        q_max: qm,
        d: params.d(),
        alpha: a,
        tail_constant,
        tail_fit_unstable,
        bias_diagnostic: bias,
        nodes,
    })
}
