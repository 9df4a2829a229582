//! Neighbourhood of the bounded solution.
//!
//! The leading-order envelope system `i α₀' = α₀* β₀ / 2`, `i β₀' = α₀² / 4`
//! conserves `E² = |α₀|² + 2|β₀|²` and `H = α₀*² β₀ + α₀² β₀*`. In the angles
//! `α₀ = E e^{iφ} cos Ψ`, `β₀ = (E/√2) e^{iψ} sin Ψ`, `Φ = 2φ - ψ`, the
//! variable `u = cos 2Ψ` obeys
//!
//! ```text
//! u'² = (E²/4) (G - u³ - u² + u),   G = 1 - 4H²/E⁶,
//! φ'  = -H / (2E² (1 + u)).
//! ```
//!
//! For `H ≠ 0` the orbit oscillates between the two upper roots `r₂ ≤ u ≤ r₃`
//! of the cubic. Writing `u = r₂ + (r₃ - r₂) sin²ϑ` removes the turning-point
//! singularities: `dϑ/dt = (E/4) √(u - r₁)`, a smooth π-periodic integrand,
//! so time and phase are spectrally accurate antiderivatives in `ϑ`.
//! For `H = 0` the orbit is the separatrix `sin Ψ = tanh(k t + c)`,
//! `k = E / (2√2)`.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{bounded_series, eval_series, AsymptoticSeries};
use crate::integrator::{integrate, IntegratorConfig, Status};
use crate::model::EnvelopeState;
use crate::{Error, Result};

/// Conserved quantities and starting point of an envelope orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeInvariants {
    pub e2: f64,
    pub h: f64,
    pub g: f64,
    pub u0: f64,
    pub phi0: f64,
}

impl EnvelopeInvariants {
    pub fn new(e2: f64, h: f64, u0: f64, phi0: f64) -> Result<Self> {
        if !(e2.is_finite() && h.is_finite() && u0.is_finite() && phi0.is_finite()) {
            return Err(Error::InvalidParams("non-finite envelope invariants".into()));
        }
        if e2 <= 0.0 {
            return Err(Error::UndefinedAngles);
        }
        let g = 1.0 - 4.0 * h * h / (e2 * e2 * e2);
        Ok(Self { e2, h, g, u0, phi0 })
    }

    pub fn e(&self) -> f64 {
        self.e2.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularState {
    pub phi: f64,
    pub psi: f64,
    /// Amplitude angle `Ψ ∈ [0, π/2]`.
    pub psi_e: f64,
}

/// `(E², H)` of a state.
pub fn invariants_of(s: &EnvelopeState) -> (f64, f64) {
    let (a, b) = (s.alpha0, s.beta0);
    let e2 = a.norm_sqr() + 2.0 * b.norm_sqr();
    // (a*)² b + a² b* = 2 Re[(a*)² b]
    let h = 2.0 * (a.conj() * a.conj() * b).re;
    (e2, h)
}

/// Angles `(φ, ψ, Ψ)` together with `E` and `Φ = 2φ - ψ`.
pub fn to_angles(s: &EnvelopeState) -> Result<(AngularState, f64, f64)> {
    let (e2, _) = invariants_of(s);
    if !(e2 > 0.0) {
        return Err(Error::UndefinedAngles);
    }
    let e = e2.sqrt();
    let c = s.alpha0.norm();
    let sn = SQRT_2 * s.beta0.norm();
    let psi_e = sn.atan2(c);
    let phi = s.alpha0.arg();
    let psi = s.beta0.arg();
    let big_phi = wrap(2.0 * phi - psi);
    Ok((AngularState { phi, psi, psi_e }, e, big_phi))
}

pub fn from_angles(a: &AngularState, e: f64) -> EnvelopeState {
    EnvelopeState::new(
        Complex64::from_polar(e * a.psi_e.cos(), a.phi),
        Complex64::from_polar(e / SQRT_2 * a.psi_e.sin(), a.psi),
    )
}

/// `(φ', ψ', Ψ')` of the envelope system in angle form.
pub fn rhs_angles(a: &AngularState, e: f64, big_phi: f64) -> Result<(f64, f64, f64)> {
    let k = e / (2.0 * SQRT_2);
    let (s, c) = a.psi_e.sin_cos();
    if s == 0.0 {
        return Err(Error::CoordinateSingularity);
    }
    let dphi = -k * big_phi.cos() * s;
    let dpsi = -k * big_phi.cos() * c * c / s;
    let dpsi_e = k * big_phi.sin() * c;
    Ok((dphi, dpsi, dpsi_e))
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Sorted real roots `r₁ ≤ r₂ ≤ r₃` of `u³ + u² - u - G`, when all three are
/// real (`-5/27 ≤ G ≤ 1`).
pub fn cubic_roots(g: f64) -> Option<[f64; 3]> {
    // u = v - 1/3 gives v³ + p v + q with p = -4/3, q = 11/27 - G
    let p = -4.0 / 3.0;
    let q = 11.0 / 27.0 - g;
    let arg = 1.5 * q / p * (-3.0 / p).sqrt();
    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&arg) {
        return None;
    }
    let base = arg.clamp(-1.0, 1.0).acos() / 3.0;
    let amp = 2.0 * (-p / 3.0).sqrt();
    let mut r: [f64; 3] =
        std::array::from_fn(|k| amp * (base - 2.0 * PI * k as f64 / 3.0).cos() - 1.0 / 3.0);
    for x in &mut r {
        for _ in 0..3 {
            let f = ((*x + 1.0) * *x - 1.0) * *x - g;
            let d = (3.0 * *x + 2.0) * *x - 1.0;
            if d.abs() > 1e-8 {
                *x -= f / d;
            }
        }
    }
    r.sort_by(f64::total_cmp);
    Some(r)
}

/// State with the given invariants, `cos 2Ψ = u0`, `arg α₀ = φ0` and
/// `sin Φ ≥ 0` (so `u` starts out decreasing).
pub fn initial_state(inv: &EnvelopeInvariants) -> Result<EnvelopeState> {
    let e = inv.e();
    let u0 = inv.u0;
    if !(-1.0..=1.0).contains(&u0) {
        return Err(Error::NoRealOrbit { g: inv.g, u0 });
    }
    let psi_e = 0.5 * u0.acos();
    let (s, c) = psi_e.sin_cos();
    let denom = SQRT_2 * e * e * e * c * c * s;
    let cos_phi = if inv.h == 0.0 {
        0.0
    } else if denom == 0.0 {
        return Err(Error::NoRealOrbit { g: inv.g, u0 });
    } else {
        inv.h / denom
    };
    if cos_phi.abs() > 1.0 + 1e-9 {
        return Err(Error::NoRealOrbit { g: inv.g, u0 });
    }
    let cos_phi = cos_phi.clamp(-1.0, 1.0);
    let big_phi = cos_phi.acos();
    let a = AngularState {
        phi: inv.phi0,
        psi: inv.phi0 * 2.0 - big_phi,
        psi_e,
    };
    Ok(from_angles(&a, e))
}

/// Fourier representation of a smooth π-periodic function of `ϑ`,
/// `g ≈ mean + Σ a_k cos 2kϑ + b_k sin 2kϑ`, with exact antiderivative.
#[derive(Debug, Clone)]
struct PeriodicIntegral {
    mean: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PeriodicIntegral {
    const MAX_LOG2: u32 = 18;

    fn new<G: Fn(f64) -> f64>(g: G) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let mut n = 64usize;
        loop {
            let fft = planner.plan_fft_forward(n);
            let mut buf: Vec<Complex64> = (0..n)
                .map(|j| Complex64::new(g(PI * j as f64 / n as f64), 0.0))
                .collect();
            fft.process(&mut buf);
            let scale = 1.0 / n as f64;
            let mean = buf[0].re * scale;
            let half = n / 2;
            let tail = buf[half / 2..half].iter().map(|z| z.norm()).fold(0.0, f64::max) * scale;
            let size = buf[..half].iter().map(|z| z.norm()).fold(0.0, f64::max) * scale;
            if tail <= 1e-15 * size || n >= 1 << Self::MAX_LOG2 {
                let mut a: Vec<f64> = buf[1..half].iter().map(|z| 2.0 * z.re * scale).collect();
                let mut b: Vec<f64> = buf[1..half].iter().map(|z| -2.0 * z.im * scale).collect();
                let cut = 1e-18 * size;
                while a.last().is_some_and(|&x| x.abs() < cut) && b.last().is_some_and(|&x| x.abs() < cut) {
                    a.pop();
                    b.pop();
                }
                return Self { mean, a, b };
            }
            n *= 2;
        }
    }

    /// `∫₀^ϑ g`.
    fn antiderivative(&self, theta: f64) -> f64 {
        let step = Complex64::from_polar(1.0, 2.0 * theta);
        let mut rot = Complex64::new(1.0, 0.0);
        let mut acc = self.mean * theta;
        for (k, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            rot *= step;
            let kk = 2.0 * (k + 1) as f64;
            acc += (a * rot.im + b * (1.0 - rot.re)) / kk;
        }
        acc
    }

    /// Sup bound of the periodic part of the antiderivative.
    fn oscillation_bound(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(k, (a, b))| (a.abs() + 2.0 * b.abs()) / (2.0 * (k + 1) as f64))
            .sum::<f64>()
            * 2.0
    }
}

#[derive(Debug, Clone)]
enum OrbitKind {
    /// `u` constant (centre of the cubic).
    Fixed,
    /// `H = 0`: `sin Ψ = tanh(σ k t + c0)`, `σ = sign sin Φ`.
    Separatrix { sigma: f64, c0: f64 },
    Periodic {
        theta_start: f64,
        time: PeriodicIntegral,
        phase: PeriodicIntegral,
        t_start: f64,
        p_start: f64,
    },
}

/// Quadrature solution of the envelope system.
#[derive(Debug, Clone)]
pub struct EnvelopeOrbit {
    pub inv: EnvelopeInvariants,
    pub roots: [f64; 3],
    kind: OrbitKind,
    /// `+1` when `u` starts out decreasing.
    direction: f64,
}

impl EnvelopeOrbit {
    /// Orbit with `u` initially decreasing.
    pub fn new(inv: &EnvelopeInvariants) -> Result<Self> {
        Self::with_direction(inv, 1.0)
    }

    /// Orbit through an actual state (either direction).
    pub fn from_state(s: &EnvelopeState) -> Result<Self> {
        let (ang, _, big_phi) = to_angles(s)?;
        let (e2, h) = invariants_of(s);
        let inv = EnvelopeInvariants::new(e2, h, (2.0 * ang.psi_e).cos(), ang.phi)?;
        let direction = if big_phi.sin() < 0.0 { -1.0 } else { 1.0 };
        Self::with_direction(&inv, direction)
    }

    fn with_direction(inv: &EnvelopeInvariants, direction: f64) -> Result<Self> {
        let bad = || Error::NoRealOrbit { g: inv.g, u0: inv.u0 };
        let roots = cubic_roots(inv.g).ok_or_else(bad)?;
        let [r1, r2, r3] = roots;
        let e = inv.e();
        if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&inv.u0) {
            return Err(bad());
        }
        if inv.h == 0.0 {
            let s0 = (0.5 * (1.0 - inv.u0.clamp(-1.0, 1.0))).sqrt();
            return Ok(Self {
                inv: *inv,
                roots,
                kind: OrbitKind::Separatrix {
                    sigma: direction,
                    c0: s0.atanh(),
                },
                direction,
            });
        }
        let width = r3 - r2;
        let slack = 1e-9 * (1.0 + width);
        if inv.u0 < r2 - slack || inv.u0 > r3 + slack {
            return Err(bad());
        }
        if width < 1e-12 {
            return Ok(Self {
                inv: *inv,
                roots,
                kind: OrbitKind::Fixed,
                direction,
            });
        }
        let u_of = move |th: f64| r2 + width * th.sin().powi(2);
        let sq = move |th: f64| (u_of(th) - r1).sqrt();
        let scale = 4.0 / e;
        let h = inv.h;
        let time = PeriodicIntegral::new(|th| scale / sq(th));
        let phase = PeriodicIntegral::new(|th| -h / (2.0 * inv.e2 * (1.0 + u_of(th))) * scale / sq(th));
        let theta0 = ((inv.u0 - r2) / width).clamp(0.0, 1.0).sqrt().asin();
        // On [π/2, π] u decreases as ϑ grows; on [0, π/2] it increases.
        let theta_start = if direction > 0.0 { PI - theta0 } else { theta0 };
        let t_start = time.antiderivative(theta_start);
        let p_start = phase.antiderivative(theta_start);
        Ok(Self {
            inv: *inv,
            roots,
            kind: OrbitKind::Periodic {
                theta_start,
                time,
                phase,
                t_start,
                p_start,
            },
            direction,
        })
    }

    /// Period of `u(t)`; `None` on the separatrix.
    pub fn period(&self) -> Option<f64> {
        match &self.kind {
            OrbitKind::Fixed => Some(0.0),
            OrbitKind::Separatrix { .. } => None,
            OrbitKind::Periodic { time, .. } => Some(time.mean * PI),
        }
    }

    /// Orbit average of `φ'`.
    pub fn mean_phase_rate(&self) -> f64 {
        match &self.kind {
            OrbitKind::Separatrix { .. } => 0.0,
            OrbitKind::Fixed => -self.inv.h / (2.0 * self.inv.e2 * (1.0 + self.inv.u0)),
            OrbitKind::Periodic { time, phase, .. } => phase.mean / time.mean,
        }
    }

    fn theta_at(&self, t: f64) -> f64 {
        let OrbitKind::Periodic {
            theta_start,
            time,
            t_start,
            ..
        } = &self.kind
        else {
            return 0.0;
        };
        let target = t_start + t;
        let r1 = self.roots[0];
        let width = self.roots[2] - self.roots[1];
        let deriv = |th: f64| 4.0 / (self.inv.e() * (self.roots[1] + width * th.sin().powi(2) - r1).sqrt());
        let slope = time.mean;
        let bound = time.oscillation_bound() / slope + 1e-12;
        let guess = theta_start + t / slope;
        let (mut lo, mut hi) = (guess - bound, guess + bound);
        let mut th = guess;
        for _ in 0..100 {
            let f = time.antiderivative(th) - target;
            if f > 0.0 {
                hi = th;
            } else {
                lo = th;
            }
            let mut next = th - f / deriv(th);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - th).abs() <= 1e-15 * (1.0 + th.abs()) {
                return next;
            }
            th = next;
        }
        th
    }

    /// `u(t) = cos 2Ψ(t)`.
    pub fn u(&self, t: f64) -> f64 {
        match &self.kind {
            OrbitKind::Fixed => self.inv.u0,
            OrbitKind::Separatrix { sigma, c0 } => {
                let s = (sigma * self.inv.e() / (2.0 * SQRT_2) * t + c0).tanh();
                1.0 - 2.0 * s * s
            }
            OrbitKind::Periodic { .. } => {
                let th = self.theta_at(t);
                self.roots[1] + (self.roots[2] - self.roots[1]) * th.sin().powi(2)
            }
        }
    }

    /// `φ(t)`.
    pub fn phi(&self, t: f64) -> f64 {
        match &self.kind {
            OrbitKind::Fixed => self.inv.phi0 + self.mean_phase_rate() * t,
            OrbitKind::Separatrix { .. } => self.inv.phi0,
            OrbitKind::Periodic { phase, p_start, .. } => {
                self.inv.phi0 + phase.antiderivative(self.theta_at(t)) - p_start
            }
        }
    }

    /// Full state at time `t`, reconstructing `ψ = 2φ - Φ` from the second
    /// conservation law and the sign of `u'`.
    pub fn angles(&self, t: f64) -> AngularState {
        let e = self.inv.e();
        let (u, phi, sin_sign) = match &self.kind {
            OrbitKind::Periodic { .. } => {
                let th = self.theta_at(t);
                let u = self.roots[1] + (self.roots[2] - self.roots[1]) * th.sin().powi(2);
                let phi = self.phi(t);
                // u' ∝ sin 2ϑ and sin Φ = -u' / (√2 E s c²)
                (u, phi, -(2.0 * th).sin().signum())
            }
            OrbitKind::Separatrix { sigma, .. } => (self.u(t), self.inv.phi0, *sigma),
            OrbitKind::Fixed => (self.inv.u0, self.phi(t), 0.0),
        };
        let psi_e = 0.5 * u.clamp(-1.0, 1.0).acos();
        let (s, c) = psi_e.sin_cos();
        let denom = SQRT_2 * e * e * e * c * c * s;
        let cos_phi = if denom > 0.0 {
            (self.inv.h / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let sin_abs = (1.0 - cos_phi * cos_phi).max(0.0).sqrt();
        let big_phi = (sin_sign * sin_abs).atan2(cos_phi);
        AngularState {
            phi,
            psi: wrap(2.0 * phi - big_phi),
            psi_e,
        }
    }

    pub fn state(&self, t: f64) -> EnvelopeState {
        from_angles(&self.angles(t), self.inv.e())
    }

    /// `+1` if `u` starts out decreasing, `-1` otherwise.
    pub fn direction(&self) -> f64 {
        self.direction
    }
}

/// `u(t) = cos 2Ψ(t)` by quadrature.
pub fn psi_quadrature(inv: &EnvelopeInvariants, t: f64) -> Result<f64> {
    Ok(EnvelopeOrbit::new(inv)?.u(t))
}

/// `φ(t) = φ₀ - (H / 2E²) ∫₀ᵗ ds / (1 + u(s))`.
pub fn phase_drift(inv: &EnvelopeInvariants, t: f64) -> Result<f64> {
    Ok(EnvelopeOrbit::new(inv)?.phi(t))
}

/// Period of `u`, or `None` on the `H = 0` separatrix.
pub fn period(inv: &EnvelopeInvariants) -> Result<Option<f64>> {
    Ok(EnvelopeOrbit::new(inv)?.period())
}

/// Outcome of integrating the perturbation system around the bounded solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub f: f64,
    pub t_span: (f64, f64),
    pub initial_scale: f64,
    pub sup_norm: f64,
    pub final_norm: f64,
    /// Relative drift of `E²` from start to end.
    pub e2_drift: f64,
    pub pass: bool,
    pub escape_time: Option<f64>,
    pub status: Status,
}

/// Series order of the bounded reference solution in the probe.
pub const PROBE_SERIES_ORDER: usize = 5;

/// Rotating-frame perturbation `(α, β)` of the bounded solution,
/// `A = A₂ + α e^{-it²}`, `B = B₂ + β e^{-2it²}`:
///
/// ```text
/// i α' = α* β / 2 + (A₂* β e^{-it²} + α* B₂ e^{2it²}) / 2
/// i β' = α² / 4 + A₂ α e^{it²} / 2
/// ```
pub fn rhs_perturbation(t: f64, alpha: Complex64, beta: Complex64, reference: &AsymptoticSeries) -> (Complex64, Complex64) {
    let (a2, b2) = eval_series(reference, t);
    let i = Complex64::i();
    let rot = Complex64::from_polar(1.0, t * t);
    let da = -i * (0.5 * alpha.conj() * beta + 0.5 * (a2.conj() * beta * rot.conj() + alpha.conj() * b2 * rot * rot));
    let db = -i * (0.25 * alpha * alpha + 0.5 * a2 * alpha * rot);
    (da, db)
}

/// Integrates the perturbation system and checks that `(α, β)` stays within
/// ten times its initial size.
pub fn correction_boundedness_probe(
    f: f64,
    initial: &EnvelopeState,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<ProbeReport> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::InvalidParams(format!("bad probe span {t0}..{t1}")));
    }
    let reference = bounded_series(f, PROBE_SERIES_ORDER)?;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (da, db) = rhs_perturbation(
            t,
            Complex64::new(y[0], y[1]),
            Complex64::new(y[2], y[3]),
            &reference,
        );
        dy.copy_from_slice(&[da.re, da.im, db.re, db.im]);
    };
    let y0 = [
        initial.alpha0.re,
        initial.alpha0.im,
        initial.beta0.re,
        initial.beta0.im,
    ];
    let norm = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let initial_scale = norm(&y0);
    let e2_of = |y: &[f64]| y[0] * y[0] + y[1] * y[1] + 2.0 * (y[2] * y[2] + y[3] * y[3]);
    let e2_start = e2_of(&y0);
    let traj = integrate(rhs, t0, &y0, t1, cfg, None)?;
    let sup_norm = traj.samples.iter().map(|s| norm(&s.y)).fold(0.0, f64::max);
    let last = traj.last().map(|s| s.y.clone()).unwrap_or_else(|| y0.to_vec());
    let final_norm = norm(&last);
    let e2_drift = if e2_start > 0.0 {
        (e2_of(&last) - e2_start).abs() / e2_start
    } else {
        0.0
    };
    let bound = 10.0 * initial_scale;
    let escape_time = traj.samples.iter().find(|s| norm(&s.y) > bound).map(|s| s.t);
    let pass = traj.is_completed() && escape_time.is_none();
    Ok(ProbeReport {
        f,
        t_span,
        initial_scale,
        sup_norm,
        final_norm,
        e2_drift,
        pass,
        escape_time: if traj.is_completed() { escape_time } else { traj.end_time() },
        status: traj.status,
    })
}

/// Helper keeping `Ψ` away from the poles when sampling random orbits.
pub fn is_regular(a: &AngularState) -> bool {
    (2.0 * a.psi_e).sin().abs() > 1e-6 && a.psi_e < FRAC_PI_2
}
