//! Numerical experiments on the primary resonance equations: capture
//! classification, threshold scans, runs near the growing algebraic solution,
//! and delimited text output.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{eval_series, growing_series, SeriesFamily};
use crate::integrator::{integrate, IntegratorConfig, Sample, Status, Trajectory};
use crate::model::{pack, primary_field, unpack};
use crate::{Error, Result};

/// Start and end of the standard capture runs.
pub const CAPTURE_SPAN: (f64, f64) = (100.0, 300.0);

/// Initial data for the capture runs. The imaginary part of `A` is often
/// quoted as `-793.88`; `-793.388` is what the two-term growing series
/// gives at `t = 100`, `f = 12.1`, and is used by default.
pub const CAPTURE_A0: Complex64 = Complex64 {
    re: 102.669,
    im: -793.388,
};
/// The `-793.88` variant of [`CAPTURE_A0`].
pub const CAPTURE_A0_UNCORRECTED: Complex64 = Complex64 {
    re: 102.669,
    im: -793.88,
};
pub const CAPTURE_B0: Complex64 = Complex64 {
    re: 386.825,
    im: 101.831,
};

/// Truncation order of the growing series used by the neighbourhood run.
pub const NEIGHBORHOOD_ORDER: usize = 2;

pub const RUN_HEADER: [&str; 7] = ["t", "re_A", "im_A", "re_B", "im_B", "abs_A", "abs_B"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Captured,
    NotCaptured,
    Undetermined,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Captured => "captured",
            Verdict::NotCaptured => "not-captured",
            Verdict::Undetermined => "undetermined",
        })
    }
}

/// Thresholds of the capture classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureCriteria {
    /// Captured band for the late mean of `|A|/t`.
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Largest relative trend of `|A|/t` across the late window.
    pub max_drift: f64,
    /// Fraction of the span forming the late window.
    pub window_fraction: f64,
    /// Late ratios below this are not captured.
    pub escape_ratio: f64,
    /// Amplitude growth exponents below this are not captured.
    pub max_growth_exponent: f64,
}

impl Default for CaptureCriteria {
    fn default() -> Self {
        Self {
            ratio_lo: 6.0,
            ratio_hi: 10.0,
            max_drift: 0.1,
            window_fraction: 0.2,
            escape_ratio: 1.0,
            max_growth_exponent: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureVerdict {
    pub f: f64,
    pub verdict: Verdict,
    /// Mean of `|A|/t` over the late window.
    pub late_ratio: f64,
    /// Relative change of the fitted `|A|/t` trend across the late window.
    pub drift: f64,
    /// `p` in `|A| ~ t^p`, from the mean amplitudes of the first and last windows.
    pub growth_exponent: f64,
    pub window: (f64, f64),
    pub diagnostic: Option<String>,
}

/// Classifies a trajectory of the primary resonance equations.
///
/// Captured: late `|A|/t` in `[ratio_lo, ratio_hi]` with drift below
/// `max_drift`. Not captured: late ratio below `escape_ratio`, or `|A|`
/// growing slower than `t^max_growth_exponent`. Anything else, and any
/// run that did not complete, is undetermined.
pub fn classify_capture(traj: &Trajectory, f: f64, criteria: &CaptureCriteria) -> Result<CaptureVerdict> {
    let (t0, t1) = match (traj.samples.first(), traj.samples.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::ShortTrajectory { t0: f64::NAN, t1: f64::NAN }),
    };
    if !(t0 > 0.0 && t1 >= 1.5 * t0) {
        return Err(Error::ShortTrajectory { t0, t1 });
    }
    let frac = criteria.window_fraction.clamp(1e-3, 0.5);
    let w_lo = t1 - frac * (t1 - t0);
    let window = (w_lo, t1);
    let undetermined = |msg: String| CaptureVerdict {
        f,
        verdict: Verdict::Undetermined,
        late_ratio: f64::NAN,
        drift: f64::NAN,
        growth_exponent: f64::NAN,
        window,
        diagnostic: Some(msg),
    };
    if traj.status != Status::Completed {
        return Ok(undetermined(format!(
            "integration stopped at t = {:.6} ({:?})",
            t1, traj.status
        )));
    }

    let late: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.t >= w_lo)
        .map(|s| (s.t, unpack(&s.y).0.norm()))
        .collect();
    let early: Vec<f64> = traj
        .samples
        .iter()
        .filter(|s| s.t <= t0 + frac * (t1 - t0))
        .map(|s| unpack(&s.y).0.norm())
        .collect();
    if late.len() < 3 || early.is_empty() {
        return Ok(undetermined("too few samples in the classification windows".into()));
    }

    let n = late.len() as f64;
    let ratios: Vec<(f64, f64)> = late.iter().map(|&(t, a)| (t, a / t)).collect();
    let late_ratio = ratios.iter().map(|r| r.1).sum::<f64>() / n;
    let mt = ratios.iter().map(|r| r.0).sum::<f64>() / n;
    let sxy: f64 = ratios.iter().map(|r| (r.0 - mt) * (r.1 - late_ratio)).sum();
    let sxx: f64 = ratios.iter().map(|r| (r.0 - mt).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let drift = if late_ratio > 0.0 {
        (slope * (t1 - w_lo) / late_ratio).abs()
    } else {
        0.0
    };

    let early_mean = early.iter().sum::<f64>() / early.len() as f64;
    let late_mean = late.iter().map(|r| r.1).sum::<f64>() / n;
    let t_early = t0 + 0.5 * frac * (t1 - t0);
    let t_late = 0.5 * (w_lo + t1);
    let growth_exponent = if early_mean > 0.0 && late_mean > 0.0 {
        (late_mean / early_mean).ln() / (t_late / t_early).ln()
    } else if late_mean == 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };

    let verdict = if (criteria.ratio_lo..=criteria.ratio_hi).contains(&late_ratio) && drift < criteria.max_drift {
        Verdict::Captured
    } else if late_ratio < criteria.escape_ratio || growth_exponent < criteria.max_growth_exponent {
        Verdict::NotCaptured
    } else {
        Verdict::Undetermined
    };
    Ok(CaptureVerdict {
        f,
        verdict,
        late_ratio,
        drift,
        growth_exponent,
        window,
        diagnostic: None,
    })
}

/// One integration of the primary resonance equations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub f: f64,
    pub t0: f64,
    pub t1: f64,
    pub a0: Complex64,
    pub b0: Complex64,
    pub integrator: IntegratorConfig,
    pub sample_count: usize,
}

impl RunConfig {
    /// Standard capture run at forcing `f`.
    pub fn capture(f: f64) -> Self {
        Self {
            f,
            t0: CAPTURE_SPAN.0,
            t1: CAPTURE_SPAN.1,
            a0: CAPTURE_A0,
            b0: CAPTURE_B0,
            integrator: IntegratorConfig::default(),
            sample_count: 2001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t1 > self.t0 && self.t1.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need t1 > t0 > 0 (got {}..{})",
                self.t0, self.t1
            )));
        }
        if !(self.f.is_finite() && self.a0.is_finite() && self.b0.is_finite()) {
            return Err(Error::InvalidParams("non-finite forcing or initial data".into()));
        }
        if self.sample_count < 2 {
            return Err(Error::InvalidParams("sample_count must be >= 2".into()));
        }
        self.integrator.validate()
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.sample_count;
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    self.t1
                } else {
                    self.t0 + (self.t1 - self.t0) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

pub fn simulate(run: &RunConfig) -> Result<Trajectory> {
    run.validate()?;
    integrate(
        primary_field(run.f),
        run.t0,
        &pack(run.a0, run.b0),
        run.t1,
        &run.integrator,
        Some(&run.grid()),
    )
}

pub fn run_and_classify(run: &RunConfig, criteria: &CaptureCriteria) -> Result<CaptureVerdict> {
    classify_capture(&simulate(run)?, run.f, criteria)
}

/// Result of [`threshold_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    /// Every probed forcing with its verdict, sorted by `f`.
    pub table: Vec<CaptureVerdict>,
    /// Final bracket of the transition.
    pub bracket: (f64, f64),
    /// Midpoint of the final bracket.
    pub threshold: f64,
}

/// Number of times a probe is retried on a longer span when undetermined.
pub const SCAN_RETRIES: usize = 3;

fn probe(template: &RunConfig, f: f64, criteria: &CaptureCriteria) -> Result<CaptureVerdict> {
    let mut run = RunConfig { f, ..template.clone() };
    let mut verdict = run_and_classify(&run, criteria)?;
    for _ in 0..SCAN_RETRIES {
        if verdict.verdict != Verdict::Undetermined {
            return Ok(verdict);
        }
        let span = run.t1 - run.t0;
        run.t1 += 0.5 * span;
        verdict = run_and_classify(&run, criteria)?;
    }
    if verdict.verdict == Verdict::Undetermined {
        return Err(Error::Scan(format!(
            "verdict at f = {f} still undetermined after {SCAN_RETRIES} window extensions"
        )));
    }
    Ok(verdict)
}

/// Grid scan of `steps + 1` forcings over `[f_lo, f_hi]` (run in parallel),
/// followed by bisection of the first verdict change down to `width`.
pub fn threshold_scan(
    f_lo: f64,
    f_hi: f64,
    steps: usize,
    template: &RunConfig,
    criteria: &CaptureCriteria,
    width: f64,
) -> Result<ScanReport> {
    if !(f_lo < f_hi) || !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Error::InvalidParams(format!("scan needs f_lo < f_hi (got {f_lo}, {f_hi})")));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidParams("scan width must be > 0".into()));
    }
    let steps = steps.max(1);
    let grid: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { f_hi } else { f_lo + (f_hi - f_lo) * k as f64 / steps as f64 })
        .collect();
    let mut table: Vec<CaptureVerdict> = grid
        .par_iter()
        .map(|&f| probe(template, f, criteria))
        .collect::<Result<_>>()?;

    let first = table[0].verdict;
    let last = table[table.len() - 1].verdict;
    if first == last {
        return Err(Error::Scan(format!(
            "no bracket: both ends of [{f_lo}, {f_hi}] are {first}"
        )));
    }
    let k = table.windows(2).position(|w| w[0].verdict != w[1].verdict).unwrap_or(0);
    let (mut lo, mut hi) = (table[k].f, table[k + 1].f);
    let lo_verdict = table[k].verdict;
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        let v = probe(template, mid, criteria)?;
        if v.verdict == lo_verdict {
            lo = mid;
        } else {
            hi = mid;
        }
        table.push(v);
    }
    table.sort_by(|a, b| a.f.total_cmp(&b.f));
    Ok(ScanReport {
        table,
        bracket: (lo, hi),
        threshold: 0.5 * (lo + hi),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodRow {
    pub t: f64,
    pub a: Complex64,
    pub b: Complex64,
    pub a_series: Complex64,
    /// `|(A - A₃) / A|`.
    pub comparative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodReport {
    pub f: f64,
    pub rows: Vec<NeighborhoodRow>,
    pub trajectory: Trajectory,
    pub max_comparative: f64,
    pub mean_comparative: f64,
}

/// Starts at the two-term growing-plus series plus `perturbation` and
/// measures the comparative difference to the series along the run.
pub fn neighborhood_run(
    f: f64,
    perturbation: (Complex64, Complex64),
    t0: f64,
    t1: f64,
    integrator: &IntegratorConfig,
    sample_count: usize,
) -> Result<NeighborhoodReport> {
    let series = growing_series(f, SeriesFamily::GrowingPlus, NEIGHBORHOOD_ORDER)?;
    let (a0, b0) = eval_series(&series, t0);
    let run = RunConfig {
        f,
        t0,
        t1,
        a0: a0 + perturbation.0,
        b0: b0 + perturbation.1,
        integrator: *integrator,
        sample_count,
    };
    let trajectory = simulate(&run)?;
    if !trajectory.is_completed() {
        return Err(Error::InvalidIntegration(format!(
            "neighbourhood run stopped early ({:?})",
            trajectory.status
        )));
    }
    let rows: Vec<NeighborhoodRow> = trajectory
        .samples
        .iter()
        .map(|s| {
            let (a, b) = unpack(&s.y);
            let (a_series, _) = eval_series(&series, s.t);
            NeighborhoodRow {
                t: s.t,
                a,
                b,
                a_series,
                comparative: ((a - a_series) / a).norm(),
            }
        })
        .collect();
    let max_comparative = rows.iter().map(|r| r.comparative).fold(0.0, f64::max);
    let mean_comparative = rows.iter().map(|r| r.comparative).sum::<f64>() / rows.len() as f64;
    Ok(NeighborhoodReport {
        f,
        rows,
        trajectory,
        max_comparative,
        mean_comparative,
    })
}

/// Writes a comma-separated table with 17 significant digits per value.
pub fn write_table<P, I>(path: P, header: &[&str], rows: I) -> Result<()>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = Vec<f64>>,
{
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    write_table_to(&mut w, header, rows).map_err(io)?;
    w.flush().map_err(io)
}

pub fn write_table_to<W, I>(w: &mut W, header: &[&str], rows: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<f64>>,
{
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn run_rows(samples: &[Sample]) -> impl Iterator<Item = Vec<f64>> + '_ {
    samples.iter().map(|s| {
        let (a, b) = unpack(&s.y);
        vec![s.t, a.re, a.im, b.re, b.im, a.norm(), b.norm()]
    })
}

/// Writes a trajectory of the primary resonance equations.
pub fn emit_run<P: AsRef<Path>>(traj: &Trajectory, path: P) -> Result<()> {
    write_table(path, &RUN_HEADER, run_rows(&traj.samples))
}

/// Reads back a file written by [`emit_run`].
pub fn read_run<P: AsRef<Path>>(path: P) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let parse_err = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("empty file".into()))?
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    if header.trim() != RUN_HEADER.join(",") {
        return Err(parse_err(format!("unexpected header '{header}'")));
    }
    let mut out = Vec::new();
    for (no, line) in lines.enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(format!("line {}: {e}", no + 2)))?;
        if vals.len() != RUN_HEADER.len() {
            return Err(parse_err(format!("line {}: expected {} columns", no + 2, RUN_HEADER.len())));
        }
        out.push(Sample {
            t: vals[0],
            y: vals[1..5].to_vec(),
        });
    }
    Ok(out)
}

/// `[run]` section of a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub f: f64,
    pub t0: f64,
    pub t1: f64,
    pub a0_re: f64,
    pub a0_im: f64,
    pub b0_re: f64,
    pub b0_im: f64,
    pub sample_count: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        let r = RunConfig::capture(12.1);
        Self {
            f: r.f,
            t0: r.t0,
            t1: r.t1,
            a0_re: r.a0.re,
            a0_im: r.a0.im,
            b0_re: r.b0.re,
            b0_im: r.b0.im,
            sample_count: r.sample_count,
        }
    }
}

/// `[scan]` section of a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub f_lo: f64,
    pub f_hi: f64,
    pub steps: usize,
    pub width: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            f_lo: 11.9,
            f_hi: 12.1,
            steps: 4,
            width: 0.05,
        }
    }
}

/// Configuration file: `[run]`, `[integrator]`, `[capture]`, `[scan]`
/// sections of flat `key = value` pairs, every key optional.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunSection,
    pub integrator: IntegratorConfig,
    pub capture: CaptureCriteria,
    pub scan: ScanSection,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path: PathBuf = path.as_ref().to_path_buf();
        let text = fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Self::parse(&text, &path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn run_config(&self) -> RunConfig {
        let r = &self.run;
        RunConfig {
            f: r.f,
            t0: r.t0,
            t1: r.t1,
            a0: Complex64::new(r.a0_re, r.a0_im),
            b0: Complex64::new(r.b0_re, r.b0_im),
            integrator: self.integrator,
            sample_count: r.sample_count,
        }
    }
}
