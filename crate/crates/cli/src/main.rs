use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stabletrace::exit_sim::{estimate_mean_exit_time, estimate_rd, write_estimates_csv, EstimateRecord, StableProcess};
use stabletrace::experiments::{emit_report, run_trace_experiment, summarize_spectrum, ExperimentConfig, Report, ReportFormat};
use stabletrace::halfspace::{compute_c2, QGrid};
use stabletrace::quadrature::{integrate, Tolerance};
use stabletrace::sampling::sample_stable_increment;
use stabletrace::spectral::{assemble_generator, eigen_spectrum};
use stabletrace::stable_kernel::{transition_density, unit_sphere_area, KernelTable};
use stabletrace::stats::chi_square_test;
use stabletrace::{Domain, Error, RngStream, StableParams};

#[derive(Parser)]
#[command(name = "stabletrace", version, about = "Heat kernels, killed semigroups and trace asymptotics of isotropic alpha-stable processes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Root seed of every random stream (default 1; for `trace` it overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Transition density p_t(r) at a list of radii.
    Kernel {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,5")]
        r: Vec<f64>,
    },
    /// Chi-square test of sampled |X_t| against the radial law of p_t.
    SampleTest {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Mean exit time or killed-kernel diagonal at one point.
    Exit {
        /// Domain, e.g. ball:0,0:1 or box:0,0:1,1.
        #[arg(long)]
        domain: Domain,
        #[arg(long)]
        alpha: f64,
        /// Starting point, comma-separated.
        #[arg(long, value_delimiter = ',')]
        x: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Quantity::MeanExit)]
        quantity: Quantity,
        /// Time for the killed-kernel diagonal.
        #[arg(long, default_value_t = 0.1)]
        t: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Censoring horizon for the mean exit time.
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
    },
    /// The second-term constant C2(d, alpha) from the half-space remainder.
    C2 {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        alpha: f64,
        /// Paths per quadrature node.
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
        #[arg(long, default_value_t = 8.0)]
        qmax: f64,
        #[arg(long, default_value_t = 0.01)]
        qmin: f64,
        #[arg(long, default_value_t = 40)]
        nodes: usize,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        step: f64,
    },
    /// Two-term trace experiment; writes trace.csv and report.json.
    Trace {
        /// key=value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one configuration key (repeatable), e.g. --set alpha=1.2.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Also summarize the discretized spectrum at this grid size.
        #[arg(long)]
        spectrum_h: Option<f64>,
        #[arg(long, default_value_t = 400)]
        spectrum_k: usize,
    },
    /// Smallest eigenvalues of the discretized generator.
    Spectrum {
        /// interval, box, or an explicit domain such as box:0,0:2,1.
        #[arg(long)]
        domain: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 200)]
        k: usize,
        /// Repeat at 2h and report the relative change of the first eigenvalue.
        #[arg(long)]
        refine: bool,
    },
    /// Re-emit a saved report.json as CSV or JSON.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    MeanExit,
    Rd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Errors that end the run with a specific exit code.
enum Failure {
    Config(String),
    Statistical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Convergence { .. } | Error::SamplingFailure { .. } | Error::Refused(_) | Error::Singularity(_) => {
                Failure::Statistical(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }
}

fn params(d: usize, alpha: f64) -> Result<StableParams, Failure> {
    StableParams::new(d, alpha).map_err(|e| Failure::Config(e.to_string()))
}

/// Write `body` to `out/name`, or to stdout.
fn emit(out: &Option<PathBuf>, name: &str, body: &str) -> Outcome {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
            eprintln!("wrote {}", dir.join(name).display());
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(body.as_bytes())?;
        }
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String, Failure> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn kernel(c: &Common, d: usize, alpha: f64, t: f64, r: &[f64]) -> Outcome {
    let p = params(d, alpha)?;
    let mut body = String::from("r,density\n");
    for &ri in r {
        body += &format!("{ri},{}\n", transition_density(t, ri, p)?.value());
    }
    emit(&c.out, "kernel.csv", &body)
}

#[derive(Serialize)]
struct SampleTestResult {
    d: usize,
    alpha: f64,
    t: f64,
    n: usize,
    statistic: f64,
    p_value: f64,
    passed: bool,
}

fn sample_test(c: &Common, d: usize, alpha: f64, t: f64, n: usize, bins: usize) -> Outcome {
    let p = params(d, alpha)?;
    if bins < 2 || n < 10 * bins {
        return Err(Failure::Config("need at least two bins and ten samples per bin".into()));
    }
    let table = KernelTable::new(p)?;
    let area = unit_sphere_area(d)?;
    let radial = |r: f64| area * r.powi(d as i32 - 1) * table.density(t, r);
    // bin edges at multiples of the natural scale, the last bin open
    let scale = t.powf(1.0 / alpha);
    let edges: Vec<f64> = (0..bins).map(|i| scale * 4.0 * i as f64 / (bins - 1) as f64).collect();
    let mut probs = Vec::with_capacity(bins);
    for w in edges.windows(2) {
        probs.push(integrate(radial, w, Tolerance::new(1e-12, 1e-10), 2000)?.value);
    }
    probs.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
    let stream = RngStream::new(c.seed(), 0);
    let mut counts = vec![0u64; bins];
    let mut rng = stream.substream(0);
    for _ in 0..n {
        let jump = sample_stable_increment(t, p, &mut rng)?.jump;
        let r = jump.iter().map(|v| v * v).sum::<f64>().sqrt();
        let idx = edges.partition_point(|&e| e <= r).saturating_sub(1).min(bins - 1);
        counts[idx] += 1;
    }
    let (statistic, p_value) = chi_square_test(&counts, &probs)?;
    let res = SampleTestResult { d, alpha, t, n, statistic, p_value, passed: p_value > 1e-3 };
    emit(&c.out, "sample_test.json", &json(&res)?)?;
    if res.passed {
        Ok(())
    } else {
        Err(Failure::Statistical(format!("sampled radii reject the kernel (p = {p_value:.3e})")))
    }
}

#[allow(clippy::too_many_arguments)]
fn exit(c: &Common, domain: &Domain, alpha: f64, x: &[f64], q: Quantity, t: f64, paths: usize, step: f64, horizon: f64) -> Outcome {
    let process = StableProcess::new(params(domain.dim(), alpha)?)?;
    let stream = RngStream::new(c.seed(), 0);
    let rec = match q {
        Quantity::MeanExit => EstimateRecord {
            quantity: "mean_exit_time".into(),
            t: horizon,
            x: x.to_vec(),
            step,
            estimate: estimate_mean_exit_time(&process, domain, x, paths, step, horizon, &stream)?,
        },
        Quantity::Rd => EstimateRecord {
            quantity: "r_D".into(),
            t,
            x: x.to_vec(),
            step,
            estimate: estimate_rd(&process, t, x, domain, paths, step, &stream)?,
        },
    };
    let mut buf = Vec::new();
    write_estimates_csv(&mut buf, &[rec])?;
    emit(&c.out, "estimates.csv", &String::from_utf8_lossy(&buf))
}

#[allow(clippy::too_many_arguments)]
fn c2(c: &Common, d: usize, alpha: f64, paths: usize, qmax: f64, qmin: f64, nodes: usize, step: f64) -> Outcome {
    let p = params(d, alpha)?;
    let grid = QGrid::geometric(qmin, qmax, nodes).map_err(|e| Failure::Config(e.to_string()))?;
    let res = compute_c2(p, &grid, paths, step, &RngStream::new(c.seed(), 0))?;
    emit(&c.out, "c2.json", &json(&res)?)
}

fn trace(c: &Common, config: Option<&Path>, overrides: &[String], spectrum_h: Option<f64>, spectrum_k: usize) -> Outcome {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Failure::Config(format!("override '{o}' is not KEY=VALUE")))?;
        cfg.set(k, v)?;
    }
    if let Some(dir) = &c.out {
        cfg.out_dir = Some(dir.clone());
    }
    cfg.validate()?;
    let run = run_trace_experiment(&cfg)?;
    let spectrum = match spectrum_h {
        Some(h) => Some(summarize_spectrum(&cfg.domain, cfg.alpha, h, spectrum_k, false)?),
        None => None,
    };
    let report = Report::new(&cfg, &run, spectrum)?;
    match &cfg.out_dir {
        Some(dir) => {
            for p in emit_report(&report, &[ReportFormat::Csv, ReportFormat::Json], dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print!("{}", run.curve.to_csv(&run.config_hash, run.seed)),
    }
    match report.trend {
        Some(tr) if !tr.passed => Err(Failure::Statistical(format!(
            "normalized residual grows as t decreases (Kendall tau {:.3}, p = {:.3})",
            tr.kendall_tau, tr.p_value
        ))),
        _ => Ok(()),
    }
}

fn spectrum(c: &Common, domain: &str, alpha: f64, h: f64, k: usize, refine: bool) -> Outcome {
    let domain: Domain = match domain {
        "interval" => Domain::interval(0.0, 1.0)?,
        "box" => Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0])?,
        other => other.parse()?,
    };
    let spec = eigen_spectrum(&assemble_generator(&domain, h, alpha)?, k)?;
    let mut body = String::from("index,eigenvalue\n");
    for (i, l) in spec.eigenvalues.iter().enumerate() {
        body += &format!("{},{l}\n", i + 1);
    }
    let summary = summarize_spectrum(&domain, alpha, h, k, refine)?;
    match &c.out {
        Some(_) => {
            emit(&c.out, "spectrum.csv", &body)?;
            emit(&c.out, "spectrum.json", &json(&summary)?)
        }
        None => {
            emit(&c.out, "", &body)?;
            eprint!("{}", json(&summary)?);
            Ok(())
        }
    }
}

fn report(c: &Common, input: &Path, format: Format) -> Outcome {
    let report = Report::from_json(&fs::read_to_string(input)?)?;
    match format {
        Format::Csv => emit(&c.out, "trace.csv", &report.curve.to_csv(&report.config_hash, report.seed)),
        Format::Json => emit(&c.out, "report.json", &report.to_json()?),
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let c = &cli.common;
    match cli.cmd {
        Command::Kernel { d, alpha, t, r } => kernel(c, d, alpha, t, &r),
        Command::SampleTest { d, alpha, t, n, bins } => sample_test(c, d, alpha, t, n, bins),
        Command::Exit { domain, alpha, x, quantity, t, paths, step, horizon } => exit(c, &domain, alpha, &x, quantity, t, paths, step, horizon),
        Command::C2 { d, alpha, paths, qmax, qmin, nodes, step } => c2(c, d, alpha, paths, qmax, qmin, nodes, step),
        Command::Trace { config, overrides, spectrum_h, spectrum_k } => trace(c, config.as_deref(), &overrides, spectrum_h, spectrum_k),
        Command::Spectrum { domain, alpha, h, k, refine } => spectrum(c, &domain, alpha, h, k, refine),
        Command::Report { input, format } => report(c, &input, format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Statistical(m)) => {
            eprintln!("failed: {m}");
            ExitCode::from(3)
        }
    }
}
