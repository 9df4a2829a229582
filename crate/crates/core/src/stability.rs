//! Linear stability of the algebraic solutions.
//!
//! Perturbing `A = A_ref + α`, `B = B_ref + β` in the primary resonance
//! equations gives
//!
//! ```text
//! α' = -i(2tα + (α* B + A* β)/2),   β' = -i(4tβ + A α/2)
//! ```
//!
//! written here as a 4×4 real matrix on `(Re α, Im α, Re β, Im β)`.

use std::fmt;

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{bounded_series, eval_series, growing_series, SeriesFamily};
use crate::{Error, Result};

/// Series order used for reference solutions.
pub const REFERENCE_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalMatrix {
    pub t: f64,
    pub m: Matrix4<f64>,
}

impl VariationalMatrix {
    pub fn eigenvalues(&self) -> [Complex64; 4] {
        let ev = self.m.complex_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2], ev[3]];
        out.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Unstable,
    Indeterminate,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Unstable => "unstable",
            Stability::Indeterminate => "indeterminate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    pub f: f64,
    pub t: f64,
    pub family: SeriesFamily,
    pub numeric: [Complex64; 4],
    pub asymptotic: [Complex64; 4],
    pub classification: Stability,
}

/// Jacobian at the point `(A, B)` and time `t`.
pub fn linearize_at(t: f64, a: Complex64, b: Complex64) -> VariationalMatrix {
    let i = Complex64::i();
    let mut m = Matrix4::zeros();
    for j in 0..4 {
        let mut v = [0.0; 4];
        v[j] = 1.0;
        let da = Complex64::new(v[0], v[1]);
        let db = Complex64::new(v[2], v[3]);
        let ra = -i * (2.0 * t * da + 0.5 * (da.conj() * b + a.conj() * db));
        let rb = -i * (4.0 * t * db + 0.5 * a * da);
        m[(0, j)] = ra.re;
        m[(1, j)] = ra.im;
        m[(2, j)] = rb.re;
        m[(3, j)] = rb.im;
    }
    VariationalMatrix { t, m }
}

/// Jacobian along a reference solution `t ↦ (A, B)`.
pub fn linearize<R>(reference: R, t: f64) -> Result<VariationalMatrix>
where
    R: Fn(f64) -> (Complex64, Complex64),
{
    let (a, b) = reference(t);
    if !(a.is_finite() && b.is_finite() && t.is_finite()) {
        return Err(Error::InvalidParams(format!("reference is not finite at t = {t}")));
    }
    Ok(linearize_at(t, a, b))
}

/// Leading-order eigenvalues along each family:
/// `A₁`: `±4√3 i t`, `±(f² - 144)^{1/4}/√6`;
/// `A₃`: `±4√3 i t`, `±i (f² - 144)^{1/4}/√6`;
/// `A₂`: `±4 i t`, `±2 i t`.
pub fn asymptotic_eigenvalues(f: f64, family: SeriesFamily, t: f64) -> Result<[Complex64; 4]> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    if family == SeriesFamily::Bounded {
        return Ok([c(0.0, -4.0 * t), c(0.0, -2.0 * t), c(0.0, 2.0 * t), c(0.0, 4.0 * t)]);
    }
    check_threshold(f)?;
    let fast = 4.0 * 3f64.sqrt() * t;
    let slow = (f * f - 144.0).powf(0.25) / 6f64.sqrt();
    Ok(match family {
        SeriesFamily::GrowingMinus => [c(0.0, -fast), c(-slow, 0.0), c(slow, 0.0), c(0.0, fast)],
        _ => [c(0.0, -fast), c(0.0, -slow), c(0.0, slow), c(0.0, fast)],
    })
}

fn check_threshold(f: f64) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::InvalidParams("non-finite forcing".into()));
    }
    if f.abs() < 12.0 {
        return Err(Error::BelowThreshold { f });
    }
    if f.abs() == 12.0 {
        return Err(Error::DegenerateThreshold);
    }
    Ok(())
}

pub fn classify_stability(f: f64, family: SeriesFamily) -> Result<Stability> {
    if family.is_growing() {
        check_threshold(f)?;
    }
    Ok(match family {
        SeriesFamily::GrowingMinus => Stability::Unstable,
        _ => Stability::Indeterminate,
    })
}

/// Reference solution of the given family, truncated at [`REFERENCE_ORDER`].
pub fn reference_solution(f: f64, family: SeriesFamily) -> Result<impl Fn(f64) -> (Complex64, Complex64)> {
    let s = match family {
        SeriesFamily::Bounded => bounded_series(f, REFERENCE_ORDER)?,
        _ => growing_series(f, family, REFERENCE_ORDER)?,
    };
    Ok(move |t| eval_series(&s, t))
}

pub fn eigen_report(f: f64, family: SeriesFamily, t: f64) -> Result<EigenReport> {
    let classification = classify_stability(f, family)?;
    let asymptotic = asymptotic_eigenvalues(f, family, t)?;
    let m = linearize(reference_solution(f, family)?, t)?;
    Ok(EigenReport {
        f,
        t,
        family,
        numeric: m.eigenvalues(),
        asymptotic,
        classification,
    })
}

/// Numeric eigenvalue closest to `target` and its relative distance.
pub fn closest(values: &[Complex64], target: Complex64) -> (Complex64, f64) {
    let best = values
        .iter()
        .copied()
        .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
        .unwrap_or_default();
    let rel = (best - target).norm() / target.norm().max(f64::MIN_POSITIVE);
    (best, rel)
}
