//! Trace experiments: configuration, the two-term pipeline, fits and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exit_sim::{estimate_z, MCEstimate, StableProcess, ZBudget};
use crate::geometry::Domain;
use crate::halfspace::{c2_gaussian, compute_c2, C2Result, QGrid};
use crate::rng::RngStream;
use crate::spectral::{assemble_generator, eigen_spectrum, karamata_ratio, refinement_check, weyl_slope, RefinementCheck};
use crate::stable_kernel::{c1_constant, StableParams};
use crate::stats::{kendall_tau, weighted_least_squares};

pub const SCHEMA_VERSION: u32 = 1;
pub const CURVE_COLUMNS: [&str; 7] = ["t", "Z_est", "Z_err", "first_term", "second_term", "residual", "residual_normalized"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Two-term check; needs an R-smooth domain and `alpha < 2`.
    Theorem,
    /// Box or Gaussian runs compared with the spectral oracle.
    Crosscheck,
}

impl FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(Self::Theorem),
            "crosscheck" => Ok(Self::Crosscheck),
            _ => Err(Error::Config(format!("unknown mode '{s}' (theorem|crosscheck)"))),
        }
    }
}

impl RunMode {
    fn as_str(self) -> &'static str {
        match self {
            Self::Theorem => "theorem",
            Self::Crosscheck => "crosscheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub alpha: f64,
    /// Strictly decreasing.
    pub t_grid: Vec<f64>,
    pub n_points: usize,
    pub n_paths: usize,
    /// Skeleton step as a fraction of `t`; the half-space runs use the same
    /// fraction of their unit horizon.
    pub step_fraction: f64,
    pub c2_paths: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub q_nodes: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Reject times with `t^{1/alpha} > R/2`.
    pub enforce_regime: bool,
    pub mode: RunMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: Domain::ball(vec![0.0, 0.0], 1.0).expect("unit disk"),
            alpha: 1.5,
            t_grid: vec![0.4, 0.2, 0.1, 0.05],
            n_points: 400,
            n_paths: 200,
            step_fraction: 1.0 / 64.0,
            c2_paths: 20_000,
            q_min: 0.01,
            q_max: 8.0,
            q_nodes: 40,
            seed: 1,
            out_dir: None,
            enforce_regime: true,
            mode: RunMode::Theorem,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'")))
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 14] = [
        "domain",
        "alpha",
        "t_grid",
        "n_points",
        "n_paths",
        "step_fraction",
        "c2_paths",
        "q_min",
        "q_max",
        "q_nodes",
        "seed",
        "out_dir",
        "enforce_regime",
        "mode",
    ];

    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "domain" => self.domain = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "t_grid" => self.t_grid = v.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_>>()?,
            "n_points" => self.n_points = parse_num(key, v)?,
            "n_paths" => self.n_paths = parse_num(key, v)?,
            "step_fraction" => self.step_fraction = parse_num(key, v)?,
            "c2_paths" => self.c2_paths = parse_num(key, v)?,
            "q_min" => self.q_min = parse_num(key, v)?,
            "q_max" => self.q_max = parse_num(key, v)?,
            "q_nodes" => self.q_nodes = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "out_dir" => self.out_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "enforce_regime" => self.enforce_regime = parse_num(key, v)?,
            "mode" => self.mode = v.parse()?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parse flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Canonical `key=value` text; parsing it gives back the same config.
    pub fn to_kv(&self) -> String {
        let grid: Vec<String> = self.t_grid.iter().map(f64::to_string).collect();
        let mut s = String::new();
        let out = self.out_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let _ = writeln!(s, "domain={}", self.domain);
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "t_grid={}", grid.join(","));
        let _ = writeln!(s, "n_points={}", self.n_points);
        let _ = writeln!(s, "n_paths={}", self.n_paths);
        let _ = writeln!(s, "step_fraction={}", self.step_fraction);
        let _ = writeln!(s, "c2_paths={}", self.c2_paths);
        let _ = writeln!(s, "q_min={}", self.q_min);
        let _ = writeln!(s, "q_max={}", self.q_max);
        let _ = writeln!(s, "q_nodes={}", self.q_nodes);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "out_dir={out}");
        let _ = writeln!(s, "enforce_regime={}", self.enforce_regime);
        let _ = writeln!(s, "mode={}", self.mode.as_str());
        s
    }

    /// SHA-256 of the canonical text, excluding the output directory.
    pub fn hash(&self) -> String {
        let text: String = self.to_kv().lines().filter(|l| !l.starts_with("out_dir=")).map(|l| format!("{l}\n")).collect();
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    pub fn params(&self) -> Result<StableParams> {
        StableParams::new(self.domain.dim(), self.alpha).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("t_grid must hold positive times".into()));
        }
        if self.t_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("t_grid must be strictly decreasing".into()));
        }
        if self.n_points < 2 || self.n_paths < 1 || self.c2_paths < 2 {
            return Err(Error::Config("path and point budgets are too small".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::Config("step_fraction must lie in (0, 1]".into()));
        }
        QGrid::geometric(self.q_min, self.q_max, self.q_nodes).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub z_est: f64,
    /// Monte Carlo standard error plus the truncated boundary slab.
    pub z_err: f64,
    pub first_term: f64,
    pub second_term: f64,
    pub residual: f64,
    pub residual_normalized: f64,
    pub bias_diagnostic: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCurve {
    pub rows: Vec<CurveRow>,
    pub volume: f64,
    pub surface_area: f64,
    pub smoothness_radius: f64,
    pub d: usize,
    pub alpha: f64,
    pub c2_used: f64,
}

impl TraceCurve {
    /// Assemble rows from `(t, estimate)` pairs and a second-term constant.
    pub fn from_estimates(domain: &Domain, params: StableParams, c2: f64, est: &[(f64, MCEstimate)]) -> Result<Self> {
        let m = domain.measures()?;
        let (d, a) = (params.d() as f64, params.alpha());
        let c1 = c1_constant(params).value();
        let rows = est
            .iter()
            .map(|&(t, e)| {
                let first = c1 * m.volume * t.powf(-d / a);
                let second = c2 * m.surface_area * t.powf((1.0 - d) / a);
                let residual = (e.mean - first + second).abs();
                CurveRow {
                    t,
                    z_est: e.mean,
                    z_err: e.std_error + e.systematic_bound,
                    first_term: first,
                    second_term: second,
                    residual,
                    residual_normalized: residual * m.smoothness_radius.powi(2) * t.powf((d - 2.0) / a) / m.volume,
                    bias_diagnostic: e.bias_diagnostic,
                    n_samples: e.n_samples,
                }
            })
            .collect();
        Ok(Self {
            rows,
            volume: m.volume,
            surface_area: m.surface_area,
            smoothness_radius: m.smoothness_radius,
            d: params.d(),
            alpha: a,
            c2_used: c2,
        })
    }

    /// Plot-ready CSV with a commented provenance line.
    pub fn to_csv(&self, config_hash: &str, seed: u64) -> String {
        let mut s = format!("# schema={SCHEMA_VERSION} config_hash={config_hash} seed={seed}\n");
        s.push_str(&CURVE_COLUMNS.join(","));
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{},{}", r.t, r.z_est, r.z_err, r.first_term, r.second_term, r.residual, r.residual_normalized);
        }
        s
    }

    /// Largest normalized residual, the empirical stand-in for `C3`.
    pub fn c3_hat(&self) -> f64 {
        self.rows.iter().map(|r| r.residual_normalized).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondTermFit {
    pub c2_fit: f64,
    pub ci: (f64, f64),
    /// Coefficient of the `t^{1/alpha}` nuisance term.
    pub nuisance: f64,
    /// Interval half-width above half the estimate.
    pub wide_interval: bool,
}

/// Weighted fit of `(first_term - Z_est) t^{(d-1)/alpha} = |dD| C2 + b t^{1/alpha}`.
pub fn fit_second_term(curve: &TraceCurve, domain: &Domain) -> Result<SecondTermFit> {
    if curve.rows.len() < 3 {
        return Err(Error::domain("the second-term fit needs at least three times"));
    }
    let area = domain.measures()?.surface_area;
    let (d, a) = (curve.d as f64, curve.alpha);
    let mut design = Vec::new();
    let mut y = Vec::new();
    let mut sigma = Vec::new();
    for r in &curve.rows {
        let w = r.t.powf((d - 1.0) / a);
        design.push(vec![area, r.t.powf(1.0 / a)]);
        y.push((r.first_term - r.z_est) * w);
        sigma.push((r.z_err * w).max(1e-300));
    }
    let fit = weighted_least_squares(&design, &y, &sigma)?;
    let se = fit.cov[0][0].max(0.0).sqrt();
    let c2 = fit.coef[0];
    Ok(SecondTermFit { c2_fit: c2, ci: (c2 - 1.96 * se, c2 + 1.96 * se), nuisance: fit.coef[1], wide_interval: 1.96 * se > 0.5 * c2.abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub kendall_tau: f64,
    /// One-sided p-value for growth of the normalized residual as `t` decreases.
    pub p_value: f64,
    pub passed: bool,
}

pub fn residual_trend(curve: &TraceCurve) -> Result<TrendCheck> {
    let t: Vec<f64> = curve.rows.iter().map(|r| r.t).collect();
    let res: Vec<f64> = curve.rows.iter().map(|r| r.residual_normalized).collect();
    let k = kendall_tau(&t, &res)?;
    Ok(TrendCheck { kendall_tau: k.tau, p_value: k.p_negative, passed: k.p_negative > 0.05 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BgLimitCheck {
    pub t: f64,
    pub scaled_trace: f64,
    pub target: f64,
    pub relative_deviation: f64,
}

/// `t^{d/alpha} Z_est` at the smallest time against `C1 |D|`.
pub fn bg_limit_check(curve: &TraceCurve) -> Result<BgLimitCheck> {
    let row = curve.rows.iter().min_by(|a, b| a.t.total_cmp(&b.t)).ok_or_else(|| Error::domain("empty curve"))?;
    let params = StableParams::new(curve.d, curve.alpha)?;
    let target = c1_constant(params).value() * curve.volume;
    let scaled = row.t.powf(curve.d as f64 / curve.alpha) * row.z_est;
    Ok(BgLimitCheck { t: row.t, scaled_trace: scaled, target, relative_deviation: (scaled - target) / target })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRun {
    pub config_hash: String,
    pub seed: u64,
    pub curve: TraceCurve,
    pub c2: Option<C2Result>,
    pub estimates: Vec<(f64, MCEstimate)>,
}

/// Z estimates over the t-grid, C2, and the assembled curve.
pub fn run_trace_experiment(cfg: &ExperimentConfig) -> Result<TraceRun> {
    cfg.validate()?;
    let params = cfg.params()?;
    let domain = &cfg.domain;
    if !domain.is_bounded() {
        return Err(Error::Config("trace experiments need a bounded domain".into()));
    }
    let m = domain.measures()?;
    if cfg.mode == RunMode::Theorem {
        if params.d() < 2 {
            return Err(Error::Config("the two-term expansion is stated for d >= 2".into()));
        }
        if params.is_gaussian() {
            return Err(Error::Config("theorem runs need alpha < 2; use mode=crosscheck".into()));
        }
        if !m.r_smooth {
            return Err(Error::Config(format!("domain {domain} is not R-smooth for any R > 0; boxes are allowed only with mode=crosscheck")));
        }
    }
    if cfg.enforce_regime && m.r_smooth {
        let bad: Vec<f64> = cfg.t_grid.iter().cloned().filter(|t| t.powf(1.0 / params.alpha()) > m.smoothness_radius / 2.0).collect();
        if !bad.is_empty() {
            return Err(Error::Config(format!(
                "times {bad:?} violate t^(1/alpha) <= R/2 = {}; set enforce_regime=false to run them anyway",
                m.smoothness_radius / 2.0
            )));
        }
    }
    let root = RngStream::new(cfg.seed, 0);
    let process = StableProcess::new(params)?;
    let mut estimates = Vec::new();
    for (i, &t) in cfg.t_grid.iter().enumerate() {
        let budget = ZBudget { n_points: cfg.n_points, n_paths: cfg.n_paths, step: cfg.step_fraction * t };
        let z = estimate_z(&process, t, domain, budget, &root.substream2(1, i as u64))?;
        estimates.push((t, z.z));
    }
    let (c2_value, c2) = if params.is_gaussian() {
        (c2_gaussian(params.d()), None)
    } else {
        let grid = QGrid::geometric(cfg.q_min, cfg.q_max, cfg.q_nodes)?;
        let r = compute_c2(params, &grid, cfg.c2_paths, cfg.step_fraction, &root.substream(2))?;
        (r.value, Some(r))
    };
    let curve = TraceCurve::from_estimates(domain, params, c2_value, &estimates)?;
    Ok(TraceRun { config_hash: cfg.hash(), seed: cfg.seed, curve, c2, estimates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub domain: Domain,
    pub alpha: f64,
    pub grid_h: f64,
    pub k: usize,
    pub lambda1: f64,
    /// Absent when too few eigenvalues were kept for a fit.
    pub weyl_slope: Option<f64>,
    pub slope_target: f64,
    pub karamata_ratio_top: f64,
    pub refinement: Option<RefinementCheck>,
}

pub fn summarize_spectrum(domain: &Domain, alpha: f64, h: f64, k: usize, with_refinement: bool) -> Result<SpectrumSummary> {
    let spec = eigen_spectrum(&assemble_generator(domain, h, alpha)?, k)?;
    let d = domain.dim() as f64;
    let refinement = if with_refinement { Some(refinement_check(domain, h, alpha)?) } else { None };
    Ok(SpectrumSummary {
        domain: domain.clone(),
        alpha,
        grid_h: h,
        k,
        lambda1: spec.eigenvalues[0],
        weyl_slope: weyl_slope(&spec).ok(),
        slope_target: d / alpha,
        karamata_ratio_top: karamata_ratio(&spec, spec.largest())?,
        refinement,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Config(format!("unknown format '{s}' (csv|json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub curve: TraceCurve,
    pub c2: Option<C2Result>,
    pub fit: Option<SecondTermFit>,
    pub trend: Option<TrendCheck>,
    pub bg_limit: BgLimitCheck,
    pub c3_hat: f64,
    pub spectrum: Option<SpectrumSummary>,
}

impl Report {
    pub fn new(cfg: &ExperimentConfig, run: &TraceRun, spectrum: Option<SpectrumSummary>) -> Result<Self> {
        let config = cfg
            .to_kv()
            .lines()
            .filter_map(|l| l.split_once('='))
            .filter(|(k, _)| *k != "out_dir")
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let enough = run.curve.rows.len() >= 3;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            config_hash: run.config_hash.clone(),
            seed: run.seed,
            config,
            curve: run.curve.clone(),
            c2: run.c2.clone(),
            fit: if enough { Some(fit_second_term(&run.curve, &cfg.domain)?) } else { None },
            trend: if enough { Some(residual_trend(&run.curve)?) } else { None },
            bg_limit: bg_limit_check(&run.curve)?,
            c3_hat: run.curve.c3_hat(),
            spectrum,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Write `trace.csv` and/or `report.json` into `dir`.
pub fn emit_report(report: &Report, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in formats {
        let (name, body) = match f {
            ReportFormat::Csv => ("trace.csv", report.curve.to_csv(&report.config_hash, report.seed)),
            ReportFormat::Json => ("report.json", report.to_json()?),
        };
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn synthetic(c2: f64, constant: f64, ts: &[f64], err: f64) -> (Domain, TraceCurve) {
        let disk = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = StableParams::new(2, 2.0).unwrap();
        let est: Vec<(f64, MCEstimate)> = ts
            .iter()
            .map(|&t| {
                let z = 1.0 / (4.0 * t) - c2 * 2.0 * PI * t.powf(-0.5) + constant;
                (t, MCEstimate { mean: z, std_error: err, n_samples: 1, seed: 0, bias_diagnostic: 0.0, bias_std_error: 0.0, systematic_bound: 0.0 })
            })
            .collect();
        let curve = TraceCurve::from_estimates(&disk, p, c2, &est).unwrap();
        (disk, curve)
    }

    #[test]
    fn config_round_trip_and_hash() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("alpha", "1.2").unwrap();
        cfg.set("t_grid", "0.3, 0.1,0.02").unwrap();
        let back = ExperimentConfig::parse(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(other.hash(), cfg.hash());
        other = cfg.clone();
        other.out_dir = Some("/tmp/x".into());
        assert_eq!(other.hash(), cfg.hash());
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ExperimentConfig::parse("alpha = 3"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("t_grid = 0.1, 0.2"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("nonsense = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("just words"), Err(Error::Config(_))));
        let ok = ExperimentConfig::parse("# comment\nseed = 9  # trailing\n\nmode = crosscheck").unwrap();
        assert_eq!(ok.seed, 9);
        assert_eq!(ok.mode, RunMode::Crosscheck);
    }

    #[test]
    fn guards() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("t_grid", "0.4,0.2").unwrap();
        // 0.4^(2/3) > 1/2
        assert!(matches!(run_trace_experiment(&cfg), Err(Error::Config(_))));
        cfg.set("domain", "box:0,0:1,1").unwrap();
        assert!(matches!(run_trace_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_gaussian_fit_recovers_c2() {
        let c2 = c2_gaussian(2);
        let (disk, curve) = synthetic(c2, 1.0 / 6.0, &[0.04, 0.02, 0.01, 0.005], 1e-3);
        let fit = fit_second_term(&curve, &disk).unwrap();
        assert!((fit.c2_fit - c2).abs() < 0.01 * c2);
        assert!(fit.ci.0 <= c2 && c2 <= fit.ci.1);
    }

    #[test]
    fn null_curve_fits_zero() {
        let (disk, curve) = synthetic(0.0, 0.0, &[0.04, 0.02, 0.01, 0.005], 1e-3);
        let fit = fit_second_term(&curve, &disk).unwrap();
        assert!(fit.ci.0 <= 0.0 && 0.0 <= fit.ci.1);
    }

    #[test]
    fn interval_shrinks_with_error() {
        let (disk, a) = synthetic(0.07, 0.1, &[0.04, 0.02, 0.01], 2e-3);
        let (_, b) = synthetic(0.07, 0.1, &[0.04, 0.02, 0.01], 2e-3 / 2f64.sqrt());
        let wa = fit_second_term(&a, &disk).unwrap();
        let wb = fit_second_term(&b, &disk).unwrap();
        let ratio = (wa.ci.1 - wa.ci.0) / (wb.ci.1 - wb.ci.0);
        assert!((ratio - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn csv_schema_and_json_round_trip() {
        let (_, curve) = synthetic(0.07, 0.1, &[0.04, 0.02, 0.01], 1e-3);
        let csv = curve.to_csv("abc", 5);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert_eq!(lines.next().unwrap().split(',').collect::<Vec<_>>(), CURVE_COLUMNS);
        for l in lines {
            assert_eq!(l.split(',').count(), CURVE_COLUMNS.len());
        }
        let cfg = ExperimentConfig::default();
        let run = TraceRun { config_hash: cfg.hash(), seed: cfg.seed, curve, c2: None, estimates: vec![] };
        let report = Report::new(&cfg, &run, None).unwrap();
        let back = Report::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn monotone_residual_fails_trend() {
        let (_, mut curve) = synthetic(0.07, 0.1, &[0.4, 0.2, 0.1, 0.05, 0.025], 1e-3);
        for (i, r) in curve.rows.iter_mut().enumerate() {
            r.residual_normalized = i as f64;
        }
        assert!(!residual_trend(&curve).unwrap().passed);
        for r in curve.rows.iter_mut() {
            r.residual_normalized = 1.0 / r.t;
        }
        assert!(!residual_trend(&curve).unwrap().passed);
        for (i, r) in curve.rows.iter_mut().enumerate() {
            r.residual_normalized = [0.3, 0.1, 0.4, 0.2, 0.25][i];
        }
        assert!(residual_trend(&curve).unwrap().passed);
    }
}
