//! Adaptive Dormand–Prince 5(4) integration of real first-order systems.
//!
//! Complex states are carried as interleaved `[re, im, re, im, ...]` vectors.
//! The controller is the usual PI controller (safety 0.9, step ratio clamped
//! to `[0.2, 5]`); dense output uses the 4th-order continuous extension of the
//! pair, so requested sample times are hit without shortening steps.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Magnitude above which a component is treated as divergent.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude; `f64::INFINITY` for none.
    pub max_step: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            max_step: f64::INFINITY,
            initial_step: None,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::InvalidIntegration(format!("rtol = {} not in (0, 1)", self.rtol)));
        }
        if !(self.atol > 0.0) {
            return Err(Error::InvalidIntegration(format!("atol = {} must be > 0", self.atol)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidIntegration("max_steps must be > 0".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidIntegration("max_step must be > 0".into()));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidIntegration("initial_step must be finite and > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Completed,
    StepBudgetExhausted,
    BlowUpDetected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub status: Status,
    pub stats: Stats,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn is_completed(&self) -> bool {
        self.status == Status::Completed
    }

    /// Time of the last sample, if any.
    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error weights (5th minus embedded 4th order).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` (either direction).
///
/// Without a grid every accepted step is recorded; with a grid the samples
/// are exactly the grid times (which must lie in the span and be monotone in
/// the direction of integration). A step-budget or blow-up stop is not an
/// error: the partial trajectory is returned with its status set.
pub fn integrate<F>(
    rhs: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    cfg: &IntegratorConfig,
    grid: Option<&[f64]>,
) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidIntegration("non-finite time bounds".into()));
    }
    if t0 == t1 {
        return Err(Error::InvalidIntegration("t1 must differ from t0".into()));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidIntegration("initial state is not finite".into()));
    }
    let dir = (t1 - t0).signum();
    if let Some(g) = grid {
        let inside = g
            .iter()
            .all(|&s| s.is_finite() && (s - t0) * dir >= 0.0 && (t1 - s) * dir >= 0.0);
        let monotone = g.windows(2).all(|w| (w[1] - w[0]) * dir > 0.0);
        if !inside || !monotone {
            return Err(Error::InvalidIntegration(
                "sample grid must be strictly monotone and inside [t0, t1]".into(),
            ));
        }
    }

    let n = y0.len();
    let mut stepper = Stepper::new(n);
    let mut stats = Stats::default();
    let mut samples = Vec::new();
    let mut grid_iter = grid.map(|g| g.iter().copied().peekable());

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; n];
    rhs(t, &y, &mut f0);
    stats.evaluations += 1;

    match grid_iter.as_mut() {
        None => samples.push(Sample { t, y: y.clone() }),
        Some(it) => {
            while let Some(&s) = it.peek() {
                if s == t0 {
                    samples.push(Sample { t, y: y.clone() });
                    it.next();
                } else {
                    break;
                }
            }
        }
    }

    let span = (t1 - t0).abs();
    let max_step = cfg.max_step.min(span);
    let mut h = match cfg.initial_step {
        Some(h) => h.min(max_step),
        None => {
            let h = initial_step(&rhs, t, &y, &f0, dir, cfg, max_step);
            stats.evaluations += 1;
            h
        }
    };
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut status = Status::Completed;

    loop {
        if (t1 - t) * dir <= 0.0 {
            break;
        }
        if stats.accepted + stats.rejected >= cfg.max_steps {
            status = Status::StepBudgetExhausted;
            break;
        }
        let remaining = (t1 - t).abs();
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            // Step size collapse: the solution is not resolvable any more.
            status = Status::BlowUpDetected;
            break;
        }

        let err = stepper.step(&rhs, t, &y, &f0, h * dir, cfg);
        stats.evaluations += 6;

        if err.is_finite() && err <= 1.0 {
            let t_new = if last { t1 } else { t + h * dir };
            if let Some(it) = grid_iter.as_mut() {
                while let Some(&s) = it.peek() {
                    if (s - t_new) * dir <= 0.0 {
                        let theta = (s - t) / (t_new - t);
                        samples.push(Sample {
                            t: s,
                            y: stepper.dense(&y, theta, h * dir),
                        });
                        it.next();
                    } else {
                        break;
                    }
                }
            }
            t = t_new;
            std::mem::swap(&mut y, &mut stepper.y_new);
            f0.copy_from_slice(&stepper.k[6]);
            stats.accepted += 1;

            if grid_iter.is_none() {
                samples.push(Sample { t, y: y.clone() });
            }
            if y.iter().any(|v| !(v.abs() < BLOW_UP_THRESHOLD)) {
                if grid_iter.is_some() {
                    samples.push(Sample { t, y: y.clone() });
                }
                status = Status::BlowUpDetected;
                break;
            }

            let err = err.max(1e-10);
            let mut fac = err.powf(EXPO) * err_old.powf(-BETA) / SAFETY;
            fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            h = h_new.min(max_step);
            err_old = err;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() {
                (err.powf(EXPO) / SAFETY).min(1.0 / FAC_MIN)
            } else {
                1.0 / FAC_MIN
            };
            h /= fac;
            last_rejected = true;
        }
    }

    Ok(Trajectory {
        samples,
        status,
        stats,
    })
}

struct Stepper {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }

    /// One trial step of signed size `h`; `f0 = rhs(t, y)`. Returns the
    /// scaled error norm and leaves the proposed state in `y_new` and
    /// `rhs(t + h, y_new)` in `k[6]`.
    fn step<F>(&mut self, rhs: &F, t: f64, y: &[f64], f0: &[f64], h: f64, cfg: &IntegratorConfig) -> f64
    where
        F: Fn(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        self.k[0].copy_from_slice(f0);
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, tmp, k6);
        let y_new = &mut self.y_new;
        for i in 0..n {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, y_new, k7);

        let mut acc = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
            acc += (e / sc) * (e / sc);
        }
        (acc / n as f64).sqrt()
    }

    /// Continuous extension at `t + theta * h` of the last accepted step.
    fn dense(&self, y: &[f64], theta: f64, h: f64) -> Vec<f64> {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let th1 = 1.0 - theta;
        (0..y.len())
            .map(|i| {
                let ydiff = self.y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                let r5 = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                let r4 = ydiff - h * k7[i] - bspl;
                y[i] + theta * (ydiff + th1 * (bspl + theta * (r4 + th1 * r5)))
            })
            .collect()
    }
}

fn initial_step<F>(
    rhs: &F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    cfg: &IntegratorConfig,
    max_step: f64,
) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + dir * h0 * b).collect();
    let mut f1 = vec![0.0; n];
    rhs(t + dir * h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (1e-6f64).max(h0 * 1e-3)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(max_step)
}
