use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use autores_core::asymptotics::{bounded_series, growing_series, SeriesFamily};
use autores_core::envelope::{initial_state, EnvelopeInvariants, EnvelopeOrbit};
use autores_core::experiments::{
    classify_capture, neighborhood_run, run_rows, simulate, threshold_scan, write_table, write_table_to,
    ConfigFile, RUN_HEADER,
};
use autores_core::model::PhysicalParams;
use autores_core::reduction::scale_params;
use autores_core::stability::eigen_report;
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

#[derive(Parser)]
#[command(name = "autores", version, about = "Capture into autoresonance: simulations and asymptotics")]
struct Cli {
    /// TOML file with [run], [integrator], [capture] and [scan] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the primary resonance equations and classify capture.
    Simulate(SimulateArgs),
    /// Scan the forcing for the capture transition.
    Threshold(ThresholdArgs),
    /// Coefficients of an algebraic asymptotic solution.
    Series(SeriesArgs),
    /// Eigenvalues of the variational matrix along an algebraic solution.
    Stability(StabilityArgs),
    /// Quadrature solution of the leading-order envelope system.
    Envelope(EnvelopeArgs),
    /// Scalings from physical to normalized parameters.
    Reduce(ReduceArgs),
    /// Perturbed run near the growing algebraic solution.
    Neighborhood(NeighborhoodArgs),
}

#[derive(Args)]
struct Output {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    f: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a0_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a0_im: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b0_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b0_im: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, allow_hyphen_values = true)]
    f_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    f_hi: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long, allow_hyphen_values = true)]
    f: f64,
    /// bounded (a2), growing-plus (a3) or growing-minus (a1).
    #[arg(long)]
    family: SeriesFamily,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long, allow_hyphen_values = true)]
    f: f64,
    #[arg(long)]
    family: SeriesFamily,
    #[arg(long, default_value_t = 100.0)]
    t: f64,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[arg(long)]
    e2: f64,
    #[arg(long, allow_hyphen_values = true)]
    h: f64,
    #[arg(long, allow_hyphen_values = true)]
    u0: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    phi0: f64,
    #[arg(long)]
    t1: f64,
    #[arg(long, default_value_t = 1001)]
    samples: usize,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    omega: f64,
    #[arg(long, allow_hyphen_values = true)]
    alpha1: f64,
    #[arg(long, allow_hyphen_values = true)]
    alpha2: f64,
    #[arg(long, allow_hyphen_values = true)]
    gamma: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct NeighborhoodArgs {
    #[arg(long, default_value_t = 12.1, allow_hyphen_values = true)]
    f: f64,
    /// Real perturbation added to both A and B at t0.
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    eps_perturb: f64,
    #[arg(long, default_value_t = 100.0)]
    t0: f64,
    #[arg(long, default_value_t = 150.0)]
    t1: f64,
    #[arg(long, default_value_t = 2001)]
    samples: usize,
    #[command(flatten)]
    out: Output,
}

fn emit<I>(out: &Option<PathBuf>, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    match out {
        Some(path) => write_table(path, header, rows)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_table_to(&mut lock, header, rows).context("writing to standard output")?;
        }
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    Ok(match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    })
}

fn family_code(f: SeriesFamily) -> f64 {
    match f {
        SeriesFamily::Bounded => 2.0,
        SeriesFamily::GrowingPlus => 3.0,
        SeriesFamily::GrowingMinus => 1.0,
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => {
            let mut run = config.run_config();
            if let Some(v) = a.f {
                run.f = v;
            }
            run.t0 = a.t0.unwrap_or(run.t0);
            run.t1 = a.t1.unwrap_or(run.t1);
            run.a0 = Complex64::new(a.a0_re.unwrap_or(run.a0.re), a.a0_im.unwrap_or(run.a0.im));
            run.b0 = Complex64::new(a.b0_re.unwrap_or(run.b0.re), a.b0_im.unwrap_or(run.b0.im));
            if let Some(r) = a.rtol {
                run.integrator.rtol = r;
            }
            run.sample_count = a.samples.unwrap_or(run.sample_count);
            let traj = simulate(&run)?;
            emit(&a.out.out, &RUN_HEADER, run_rows(&traj.samples))?;
            eprintln!(
                "# f={} span=[{}, {}] rtol={:e} status={:?} steps={}",
                run.f, run.t0, run.t1, run.integrator.rtol, traj.status, traj.stats.accepted
            );
            match classify_capture(&traj, run.f, &config.capture) {
                Ok(v) => eprintln!(
                    "# verdict={} late_ratio={:.6} drift={:.4} growth_exponent={:.4} window=[{}, {}]",
                    v.verdict, v.late_ratio, v.drift, v.growth_exponent, v.window.0, v.window.1
                ),
                Err(e) => eprintln!("# verdict unavailable: {e}"),
            }
        }
        Command::Threshold(a) => {
            let scan = config.scan;
            let template = config.run_config();
            let report = threshold_scan(
                a.f_lo.unwrap_or(scan.f_lo),
                a.f_hi.unwrap_or(scan.f_hi),
                a.steps.unwrap_or(scan.steps),
                &template,
                &config.capture,
                a.width.unwrap_or(scan.width),
            )?;
            // verdict column: 1 captured, 0 not captured, -1 undetermined
            let rows = report.table.iter().map(|v| {
                let code = match v.verdict {
                    autores_core::experiments::Verdict::Captured => 1.0,
                    autores_core::experiments::Verdict::NotCaptured => 0.0,
                    autores_core::experiments::Verdict::Undetermined => -1.0,
                };
                vec![v.f, code, v.late_ratio, v.drift, v.growth_exponent]
            });
            emit(&a.out.out, &["f", "captured", "late_ratio", "drift", "growth_exponent"], rows)?;
            eprintln!(
                "# empirical threshold for this initial data: f = {:.6} (bracket [{:.6}, {:.6}], span [{}, {}])",
                report.threshold, report.bracket.0, report.bracket.1, template.t0, template.t1
            );
            eprintln!("# growing algebraic solutions exist for |f| > 12 independently of initial data");
        }
        Command::Series(a) => {
            let s = match a.family {
                SeriesFamily::Bounded => bounded_series(a.f, a.order)?,
                fam => growing_series(a.f, fam, a.order)?,
            };
            let rows = s
                .coeffs
                .iter()
                .map(|c| vec![c.k as f64, c.a.re, c.a.im, c.b.re, c.b.im]);
            emit(&a.out.out, &["k", "re_a", "im_a", "re_b", "im_b"], rows)?;
            if let Some(psi) = s.psi {
                eprintln!("# family={} psi={psi:.16e} sin_psi={:.16e}", s.family, psi.sin());
                let mus: Vec<String> = s.mus.iter().map(|m| format!("{m:.10e}")).collect();
                eprintln!("# mu={}", mus.join(","));
            } else {
                eprintln!("# family={}", s.family);
            }
        }
        Command::Stability(a) => {
            let r = eigen_report(a.f, a.family, a.t)?;
            let rows = r
                .numeric
                .iter()
                .zip(&r.asymptotic)
                .map(|(n, p)| vec![family_code(r.family), r.t, n.re, n.im, p.re, p.im]);
            emit(
                &a.out.out,
                &["family", "t", "re_numeric", "im_numeric", "re_predicted", "im_predicted"],
                rows,
            )?;
            eprintln!("# family={} f={} classification={}", r.family, r.f, r.classification);
        }
        Command::Envelope(a) => {
            let inv = EnvelopeInvariants::new(a.e2, a.h, a.u0, a.phi0)?;
            initial_state(&inv)?;
            let orbit = EnvelopeOrbit::new(&inv)?;
            let n = a.samples.max(2);
            let rows = (0..n).map(|k| {
                let t = a.t1 * k as f64 / (n - 1) as f64;
                let ang = orbit.angles(t);
                let s = orbit.state(t);
                vec![
                    t,
                    (2.0 * ang.psi_e).cos(),
                    ang.phi,
                    ang.psi,
                    s.alpha0.re,
                    s.alpha0.im,
                    s.beta0.re,
                    s.beta0.im,
                ]
            });
            emit(
                &a.out.out,
                &["t", "u", "phi", "psi", "re_alpha0", "im_alpha0", "re_beta0", "im_beta0"],
                rows,
            )?;
            match orbit.period() {
                Some(p) => eprintln!(
                    "# G={:.16e} period={p:.16e} mean_phase_rate={:.16e}",
                    inv.g,
                    orbit.mean_phase_rate()
                ),
                None => eprintln!("# G={:.16e} separatrix (H = 0): no finite period", inv.g),
            }
        }
        Command::Reduce(a) => {
            let p = PhysicalParams {
                omega: a.omega,
                alpha1: a.alpha1,
                alpha2: a.alpha2,
                gamma: a.gamma,
                alpha: a.alpha,
                epsilon: a.epsilon,
            };
            let m = scale_params(&p)?;
            let listing = format!(
                "kappa={:.16e}\nlambda={:.16e}\nchi={:.16e}\nf={:.16e}\n",
                m.kappa, m.lambda, m.chi, m.f
            );
            let header = ["kappa", "lambda", "chi", "f"];
            let row = vec![m.kappa, m.lambda, m.chi, m.f];
            match &a.out.out {
                Some(path) => {
                    write_table(path, &header, [row])?;
                    print!("{listing}");
                }
                None => {
                    let stdout = io::stdout();
                    let mut lock = stdout.lock();
                    write!(lock, "{listing}\n").context("writing to standard output")?;
                    write_table_to(&mut lock, &header, [row]).context("writing to standard output")?;
                }
            }
        }
        Command::Neighborhood(a) => {
            let eps = Complex64::new(a.eps_perturb, 0.0);
            let r = neighborhood_run(a.f, (eps, eps), a.t0, a.t1, &config.integrator, a.samples)?;
            let rows = r
                .rows
                .iter()
                .map(|row| vec![row.t, row.a.re, row.a.im, row.a.norm(), row.a_series.re, row.a_series.im, row.comparative]);
            emit(
                &a.out.out,
                &["t", "re_A", "im_A", "abs_A", "re_A3", "im_A3", "comparative"],
                rows,
            )?;
            eprintln!(
                "# f={} perturbation={} max_comparative={:.6e} mean_comparative={:.6e}",
                r.f, a.eps_perturb, r.max_comparative, r.mean_comparative
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let io_failure = err
                .downcast_ref::<autores_core::Error>()
                .map(|e| e.is_io())
                .unwrap_or_else(|| err.downcast_ref::<io::Error>().is_some() || err.chain().any(|c| c.is::<io::Error>()));
            ExitCode::from(if io_failure { 2 } else { 1 })
        }
    }
}
