//! Vector fields for every level of the model.
//!
//! All functions here are pure evaluations; none of them integrates anything.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Constants of the physical two-oscillator system.
///
/// `x'' + ω² x = ε α₁ x y + 2 ε γ cos φ`, `y'' + (2ω)² y = ε α₂ x²`,
/// with forcing phase `φ = ω θ + α τ²` and slow time `τ = ε θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub omega: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.omega,
            self.alpha1,
            self.alpha2,
            self.gamma,
            self.alpha,
            self.epsilon,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite physical parameter".into()));
        }
        if self.omega <= 0.0 {
            return Err(Error::InvalidParams(format!("omega = {} must be > 0", self.omega)));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParams(format!("alpha = {} must be > 0", self.alpha)));
        }
        if self.alpha1 * self.alpha2 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "alpha1 * alpha2 = {} must be > 0",
                self.alpha1 * self.alpha2
            )));
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidParams(format!(
                "epsilon = {} must be >= 0",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Slow time `τ = ε θ`.
    pub fn slow_time(&self, theta: f64) -> f64 {
        self.epsilon * theta
    }

    /// Forcing phase `φ = ω θ + α τ²`, i.e. `(ω + ε α τ) θ`.
    pub fn forcing_phase(&self, theta: f64) -> f64 {
        let tau = self.slow_time(theta);
        self.omega * theta + self.alpha * tau * tau
    }
}

/// State `(t, A, B)` of the primary resonance equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceState {
    pub t: f64,
    pub a: Complex64,
    pub b: Complex64,
}

impl ResonanceState {
    pub fn new(t: f64, a: Complex64, b: Complex64) -> Self {
        Self { t, a, b }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.a.is_finite() && self.b.is_finite()
    }
}

/// Fast-time state of the physical system in first-order form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalState {
    pub theta: f64,
    pub x: f64,
    pub xdot: f64,
    pub y: f64,
    pub ydot: f64,
}

/// Amplitudes of the leading-order envelope system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeState {
    pub alpha0: Complex64,
    pub beta0: Complex64,
}

impl EnvelopeState {
    pub fn new(alpha0: Complex64, beta0: Complex64) -> Self {
        Self { alpha0, beta0 }
    }
}

/// Primary resonance equations:
/// `A' = -i(2tA + A*B/2 + f)`, `B' = -i(4tB + A²/4)`.
#[inline]
pub fn rhs_primary(t: f64, a: Complex64, b: Complex64, f: f64) -> (Complex64, Complex64) {
    let da = -I * (2.0 * t * a + 0.5 * a.conj() * b + f);
    let db = -I * (4.0 * t * b + 0.25 * a * a);
    (da, db)
}

/// Slow-time system obtained after removing the chirp phase from the envelopes.
pub fn rhs_slow(tau: f64, a: Complex64, b: Complex64, p: &PhysicalParams) -> (Complex64, Complex64) {
    let w = p.omega;
    let da = -2.0 * I * p.alpha * tau * a - I * (p.alpha1 / (2.0 * w)) * a.conj() * b
        - I * (p.gamma / (2.0 * w));
    let db = -4.0 * I * p.alpha * tau * b - I * (p.alpha2 / (4.0 * w)) * a * a;
    (da, db)
}

/// Rotating frame `A = a e^{-it²}`, `B = b e^{-2it²}`:
/// `i a' = a* b / 2 + f e^{it²}`, `i b' = a² / 4`.
#[inline]
pub fn rhs_rotating(t: f64, a: Complex64, b: Complex64, f: f64) -> (Complex64, Complex64) {
    let forcing = Complex64::from_polar(f, t * t);
    let da = -I * (0.5 * a.conj() * b + forcing);
    let db = -I * (0.25 * a * a);
    (da, db)
}

/// Leading-order envelope system `i α₀' = α₀* β₀ / 2`, `i β₀' = α₀² / 4`.
#[inline]
pub fn rhs_envelope_leading(s: &EnvelopeState) -> (Complex64, Complex64) {
    let da = -I * (0.5 * s.alpha0.conj() * s.beta0);
    let db = -I * (0.25 * s.alpha0 * s.alpha0);
    (da, db)
}

/// First-order form of the physical system; returns `(ẋ, ẍ, ẏ, ÿ)`.
pub fn rhs_physical(s: &PhysicalState, p: &PhysicalParams) -> (f64, f64, f64, f64) {
    let w2 = p.omega * p.omega;
    let forcing = 2.0 * p.gamma * p.forcing_phase(s.theta).cos();
    let xdd = -w2 * s.x + p.epsilon * (p.alpha1 * s.x * s.y + forcing);
    let ydd = -4.0 * w2 * s.y + p.epsilon * p.alpha2 * s.x * s.x;
    (s.xdot, xdd, s.ydot, ydd)
}

/// Packs `(A, B)` as `[Re A, Im A, Re B, Im B]`.
#[inline]
pub fn pack(a: Complex64, b: Complex64) -> [f64; 4] {
    [a.re, a.im, b.re, b.im]
}

/// Inverse of [`pack`].
#[inline]
pub fn unpack(y: &[f64]) -> (Complex64, Complex64) {
    (Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]))
}

/// [`rhs_primary`] in interleaved real form, ready for the integrator.
pub fn primary_field(f: f64) -> impl Fn(f64, &[f64], &mut [f64]) + Copy {
    move |t, y, dy| {
        let (a, b) = unpack(y);
        let (da, db) = rhs_primary(t, a, b, f);
        dy.copy_from_slice(&pack(da, db));
    }
}

/// [`rhs_rotating`] in interleaved real form.
pub fn rotating_field(f: f64) -> impl Fn(f64, &[f64], &mut [f64]) + Copy {
    move |t, y, dy| {
        let (a, b) = unpack(y);
        let (da, db) = rhs_rotating(t, a, b, f);
        dy.copy_from_slice(&pack(da, db));
    }
}

/// [`rhs_envelope_leading`] in interleaved real form (autonomous).
pub fn envelope_field() -> impl Fn(f64, &[f64], &mut [f64]) + Copy {
    |_t, y, dy| {
        let (a, b) = unpack(y);
        let (da, db) = rhs_envelope_leading(&EnvelopeState::new(a, b));
        dy.copy_from_slice(&pack(da, db));
    }
}

/// [`rhs_slow`] in interleaved real form; the independent variable is `τ`.
pub fn slow_field(p: PhysicalParams) -> impl Fn(f64, &[f64], &mut [f64]) + Copy {
    move |tau, y, dy| {
        let (a, b) = unpack(y);
        let (da, db) = rhs_slow(tau, a, b, &p);
        dy.copy_from_slice(&pack(da, db));
    }
}

/// [`rhs_physical`] with state `[x, ẋ, y, ẏ]`; the independent variable is `θ`.
pub fn physical_field(p: PhysicalParams) -> impl Fn(f64, &[f64], &mut [f64]) + Copy {
    move |theta, y, dy| {
        let s = PhysicalState {
            theta,
            x: y[0],
            xdot: y[1],
            y: y[2],
            ydot: y[3],
        };
        let (a, b, c, d) = rhs_physical(&s, &p);
        dy.copy_from_slice(&[a, b, c, d]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_params() -> PhysicalParams {
        PhysicalParams {
            omega: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
            gamma: 2.0,
            alpha: 1.0,
            epsilon: 0.0,
        }
    }

    #[test]
    fn primary_examples() {
        assert_eq!(rhs_primary(0.0, c(0.0, 0.0), c(0.0, 0.0), 5.0), (c(0.0, -5.0), c(0.0, 0.0)));
        let (da, db) = rhs_primary(1.0, c(2.0, 0.0), c(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(da.re, 0.0);
        assert_abs_diff_eq!(da.im, -4.0);
        assert_abs_diff_eq!(db.re, 0.0);
        assert_abs_diff_eq!(db.im, -1.0);
        let (da, db) = rhs_primary(2.0, c(1.0, 1.0), c(0.0, 1.0), 12.0);
        assert_abs_diff_eq!(da.re, 4.5, epsilon = 1e-14);
        assert_abs_diff_eq!(da.im, -16.5, epsilon = 1e-14);
        assert_abs_diff_eq!(db.re, 8.5, epsilon = 1e-14);
        assert_abs_diff_eq!(db.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn slow_examples() {
        let p = unit_params();
        let (da, db) = rhs_slow(0.0, c(0.0, 0.0), c(0.0, 0.0), &p);
        assert_abs_diff_eq!(da.im, -1.0);
        assert_abs_diff_eq!(da.re, 0.0);
        assert_eq!(db, c(0.0, 0.0));

        let p = PhysicalParams {
            gamma: 0.0,
            alpha2: 3.0,
            omega: 1.5,
            ..unit_params()
        };
        let (da, db) = rhs_slow(1.0, c(1.0, 0.0), c(0.0, 0.0), &p);
        assert_abs_diff_eq!(da.im, -2.0);
        assert_abs_diff_eq!(db.im, -3.0 / 6.0);
        assert_abs_diff_eq!(db.re, 0.0);
    }

    #[test]
    fn rotating_examples() {
        let (da, db) = rhs_rotating(0.0, c(0.0, 0.0), c(0.0, 0.0), 3.0);
        assert_abs_diff_eq!(da.re, 0.0);
        assert_abs_diff_eq!(da.im, -3.0);
        assert_eq!(db, c(0.0, 0.0));
        for t in [0.3, 7.0, 120.0] {
            let (da, db) = rhs_rotating(t, c(2.0, 0.0), c(0.0, 0.0), 0.0);
            assert_abs_diff_eq!(da.norm(), 0.0);
            assert_abs_diff_eq!(db.re, 0.0);
            assert_abs_diff_eq!(db.im, -1.0);
        }
    }

    #[test]
    fn envelope_examples() {
        let (da, db) = rhs_envelope_leading(&EnvelopeState::new(c(0.0, 0.0), c(5.0, 0.0)));
        assert_eq!(da.norm(), 0.0);
        assert_eq!(db.norm(), 0.0);
        let (da, db) = rhs_envelope_leading(&EnvelopeState::new(c(2.0, 0.0), c(0.0, 0.0)));
        assert_eq!(da.norm(), 0.0);
        assert_abs_diff_eq!(db.im, -1.0);
        let (da, db) = rhs_envelope_leading(&EnvelopeState::new(c(1.0, 1.0), c(1.0, 0.0)));
        assert_abs_diff_eq!(da.re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(da.im, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(db.re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(db.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn physical_examples() {
        let p = PhysicalParams {
            gamma: 0.7,
            ..unit_params()
        };
        let s = PhysicalState {
            theta: 3.3,
            x: 1.0,
            xdot: 0.0,
            y: 0.0,
            ydot: 0.0,
        };
        assert_eq!(rhs_physical(&s, &p), (0.0, -1.0, 0.0, 0.0));
        let s = PhysicalState {
            theta: 0.0,
            x: 0.0,
            xdot: 0.0,
            y: 1.0,
            ydot: 0.0,
        };
        assert_eq!(rhs_physical(&s, &p), (0.0, 0.0, 0.0, -4.0));
    }

    #[test]
    fn envelope_field_conserves_invariants_algebraically() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let a = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let b = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let (da, db) = rhs_envelope_leading(&EnvelopeState::new(a, b));
            // d/dt (|a|² + 2|b|²) and d/dt (a*² b + a² b*)
            let de2 = 2.0 * (a.conj() * da).re + 4.0 * (b.conj() * db).re;
            let dh = 2.0 * (2.0 * a.conj() * da.conj() * b + a.conj() * a.conj() * db).re;
            let scale = (a.norm() + b.norm()).powi(3).max(1.0);
            assert!(de2.abs() < 1e-12 * scale, "dE2 = {de2}");
            assert!(dh.abs() < 1e-12 * scale, "dH = {dh}");
        }
    }

    #[test]
    fn fields_are_pure() {
        let f = primary_field(12.1);
        let y = [0.3, -1.2, 7.0, 0.25];
        let mut d1 = [0.0; 4];
        let mut d2 = [0.0; 4];
        f(113.5, &y, &mut d1);
        f(113.5, &y, &mut d2);
        assert_eq!(d1.map(f64::to_bits), d2.map(f64::to_bits));
    }

    #[test]
    fn params_validation() {
        assert!(unit_params().validate().is_ok());
        assert!(PhysicalParams { alpha: 0.0, ..unit_params() }.validate().is_err());
        assert!(PhysicalParams { alpha2: -1.0, ..unit_params() }.validate().is_err());
        assert!(PhysicalParams { omega: -1.0, ..unit_params() }.validate().is_err());
        assert!(PhysicalParams { epsilon: -1e-3, ..unit_params() }.validate().is_err());
        assert!(PhysicalParams {
            alpha1: -1.0,
            alpha2: -2.0,
            ..unit_params()
        }
        .validate()
        .is_ok());
    }
}
