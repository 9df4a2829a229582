//! Change of variables between the physical oscillators, the slow system and
//! the normalized primary resonance equations.
//!
//! With `a(τ) = λ A(t)`, `b(τ) = κ B(t)`, `τ = χ t` the slow system becomes
//! the normalized one exactly when
//!
//! ```text
//! χ = 1/√α,  κ = ω√α/α₁,  λ = ω√(α/(α₁α₂)),  f = √(α₁α₂) γ / (2 α ω²).
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::integrator::{integrate, IntegratorConfig};
use crate::model::{pack, physical_field, slow_field, unpack, PhysicalParams, ResonanceState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub kappa: f64,
    pub lambda: f64,
    pub chi: f64,
    pub f: f64,
}

impl ScalingMap {
    pub const IDENTITY: ScalingMap = ScalingMap {
        kappa: 1.0,
        lambda: 1.0,
        chi: 1.0,
        f: 0.0,
    };
}

pub fn scale_params(p: &PhysicalParams) -> Result<ScalingMap> {
    p.validate()?;
    let prod = p.alpha1 * p.alpha2;
    let sa = p.alpha.sqrt();
    Ok(ScalingMap {
        kappa: p.omega * sa / p.alpha1,
        lambda: p.omega * (p.alpha / prod).sqrt(),
        chi: 1.0 / sa,
        f: prod.sqrt() * p.gamma / (2.0 * p.alpha * p.omega * p.omega),
    })
}

/// `(τ, a, b) = (χ t, λ A, κ B)`.
pub fn normalized_to_slow(s: &ResonanceState, m: &ScalingMap) -> (f64, Complex64, Complex64) {
    (m.chi * s.t, m.lambda * s.a, m.kappa * s.b)
}

/// Inverse of [`normalized_to_slow`].
pub fn slow_to_normalized(tau: f64, a: Complex64, b: Complex64, m: &ScalingMap) -> ResonanceState {
    ResonanceState::new(tau / m.chi, a / m.lambda, b / m.kappa)
}

/// Physical displacements at slow time `τ` (fast time `θ = τ/ε`):
/// `x = 2 Re[a e^{i(ατ² + ωθ)}]`, `y = 2 Re[b e^{2i(ατ² + ωθ)}]`.
pub fn reconstruct_physical(a: Complex64, b: Complex64, tau: f64, p: &PhysicalParams) -> Result<(f64, f64)> {
    if p.epsilon <= 0.0 {
        return Err(Error::InvalidParams("reconstruction needs epsilon > 0".into()));
    }
    let theta = tau / p.epsilon;
    let phase = p.alpha * tau * tau + p.omega * theta;
    let x = 2.0 * (a * Complex64::from_polar(1.0, phase)).re;
    let y = 2.0 * (b * Complex64::from_polar(1.0, 2.0 * phase)).re;
    Ok((x, y))
}

/// Physical state `[x, ẋ, y, ẏ]` at `θ = 0` matching slow amplitudes `(a, b)`
/// at `τ = 0` to leading order.
pub fn physical_initial_state(a: Complex64, b: Complex64, p: &PhysicalParams) -> [f64; 4] {
    let i = Complex64::i();
    let w = p.omega;
    [
        2.0 * a.re,
        2.0 * (i * w * a).re,
        2.0 * b.re,
        2.0 * (2.0 * i * w * b).re,
    ]
}

/// Comparison of the peak envelope of `x(θ)` with `2|a(τ)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeComparison {
    /// `(τ, peak |x|, 2|a(τ)|)` for every local extremum of `x`.
    pub peaks: Vec<(f64, f64, f64)>,
    /// Largest `|peak - 2|a|| / 2|a|`.
    pub max_rel_error: f64,
}

/// Integrates the physical system and the slow system over `τ ∈ [0, tau1]`
/// from matching data and compares envelopes at the extrema of `x`.
pub fn validate_envelope(
    p: &PhysicalParams,
    a0: Complex64,
    b0: Complex64,
    tau1: f64,
    cfg: &IntegratorConfig,
) -> Result<EnvelopeComparison> {
    p.validate()?;
    if p.epsilon <= 0.0 || tau1 <= 0.0 {
        return Err(Error::InvalidParams("envelope validation needs epsilon > 0 and tau1 > 0".into()));
    }
    let theta1 = tau1 / p.epsilon;
    let per_period = 64.0;
    let n = (theta1 * p.omega / (2.0 * std::f64::consts::PI) * per_period).ceil() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| theta1 * k as f64 / (n - 1) as f64).collect();
    let phys = integrate(
        physical_field(*p),
        0.0,
        &physical_initial_state(a0, b0, p),
        theta1,
        cfg,
        Some(&grid),
    )?;
    if !phys.is_completed() {
        return Err(Error::InvalidIntegration(format!(
            "physical run stopped early: {:?}",
            phys.status
        )));
    }

    // Parabolic interpolation through three samples around each extremum.
    let mut extrema = Vec::new();
    for w in phys.samples.windows(3) {
        let (x0, x1, x2) = (w[0].y[0], w[1].y[0], w[2].y[0]);
        let is_max = x1 > x0 && x1 >= x2;
        let is_min = x1 < x0 && x1 <= x2;
        if !(is_max || is_min) {
            continue;
        }
        let h = w[1].t - w[0].t;
        let denom = x0 - 2.0 * x1 + x2;
        let shift = if denom != 0.0 { 0.5 * (x0 - x2) / denom } else { 0.0 };
        let peak = x1 - 0.25 * (x0 - x2) * shift;
        extrema.push((p.slow_time(w[1].t + shift * h), peak.abs()));
    }
    if extrema.is_empty() {
        return Err(Error::InvalidIntegration("no oscillation peaks found".into()));
    }

    let taus: Vec<f64> = extrema.iter().map(|e| e.0).collect();
    let slow = integrate(slow_field(*p), 0.0, &pack(a0, b0), tau1, cfg, Some(&taus))?;
    if slow.samples.len() != taus.len() {
        return Err(Error::InvalidIntegration("slow run stopped early".into()));
    }
    let mut max_rel_error: f64 = 0.0;
    let peaks: Vec<(f64, f64, f64)> = extrema
        .iter()
        .zip(&slow.samples)
        .map(|(&(tau, peak), s)| {
            let (a, _) = unpack(&s.y);
            let env = 2.0 * a.norm();
            max_rel_error = max_rel_error.max((peak - env).abs() / env);
            (tau, peak, env)
        })
        .collect();
    Ok(EnvelopeComparison { peaks, max_rel_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rhs_primary, rhs_slow};
    use approx::assert_abs_diff_eq;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn params(alpha: f64, gamma: f64) -> PhysicalParams {
        PhysicalParams {
            omega: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
            gamma,
            alpha,
            epsilon: 1e-3,
        }
    }

    #[test]
    fn unit_parameters() {
        let m = scale_params(&params(1.0, 12.0)).unwrap();
        assert_eq!((m.kappa, m.lambda, m.chi), (1.0, 1.0, 1.0));
        assert_abs_diff_eq!(m.f, 6.0, epsilon = 1e-15);
    }

    #[test]
    fn chirp_four() {
        let m = scale_params(&params(4.0, 12.0)).unwrap();
        assert_abs_diff_eq!(m.kappa, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.lambda, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.chi, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.f, 1.5, epsilon = 1e-15);
        let z = scale_params(&params(4.0, 0.0)).unwrap();
        assert_eq!(z.f, 0.0);
        assert_eq!((z.kappa, z.lambda, z.chi), (m.kappa, m.lambda, m.chi));
    }

    #[test]
    fn rejects_non_real_scalings() {
        let mut p = params(1.0, 1.0);
        p.alpha2 = -1.0;
        assert!(scale_params(&p).is_err());
        let p = params(0.0, 1.0);
        assert!(scale_params(&p).is_err());
    }

    #[test]
    fn rescaling_examples() {
        let s = ResonanceState::new(3.0, Complex64::new(1.0, 2.0), Complex64::new(-1.0, 0.5));
        let (tau, a, b) = normalized_to_slow(&s, &ScalingMap::IDENTITY);
        assert_eq!((tau, a, b), (s.t, s.a, s.b));

        let m = ScalingMap {
            kappa: 3.0,
            lambda: 2.0,
            chi: 0.5,
            f: 0.0,
        };
        let s = ResonanceState::new(2.0, Complex64::new(1.0, 0.0), Complex64::i());
        let (tau, a, b) = normalized_to_slow(&s, &m);
        assert_eq!((tau, a, b), (1.0, Complex64::new(2.0, 0.0), Complex64::new(0.0, 3.0)));
    }

    #[test]
    fn reconstruction_examples() {
        let p = params(1.0, 1.0);
        let z = Complex64::default();
        assert_eq!(reconstruct_physical(z, z, 0.3, &p).unwrap(), (0.0, 0.0));
        let (x, _) = reconstruct_physical(Complex64::new(1.0, 0.0), z, 0.0, &p).unwrap();
        assert_eq!(x, 2.0);
        let mut p0 = p;
        p0.epsilon = 0.0;
        assert!(reconstruct_physical(z, z, 0.0, &p0).is_err());
    }

    fn random_params(rng: &mut StdRng) -> PhysicalParams {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        PhysicalParams {
            omega: rng.gen_range(0.2..3.0),
            alpha1: sign * rng.gen_range(0.2..3.0),
            alpha2: sign * rng.gen_range(0.2..3.0),
            gamma: rng.gen_range(-5.0..5.0),
            alpha: rng.gen_range(0.2..3.0),
            epsilon: 1e-3,
        }
    }

    #[test]
    fn slow_field_is_conjugate_to_normalized_field() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_params(&mut rng);
            let m = scale_params(&p).unwrap();
            let t = rng.gen_range(-5.0..5.0);
            let a = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let b = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let (da, db) = rhs_primary(t, a, b, m.f);
            // d/dτ (λA, κB) = (λ/χ A', κ/χ B')
            let lhs = (m.lambda / m.chi * da, m.kappa / m.chi * db);
            let (tau, sa, sb) = normalized_to_slow(&ResonanceState::new(t, a, b), &m);
            let rhs = rhs_slow(tau, sa, sb, &p);
            let scale = 1.0 + rhs.0.norm() + rhs.1.norm();
            assert!((lhs.0 - rhs.0).norm() < 1e-12 * scale);
            assert!((lhs.1 - rhs.1).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn round_trip_and_homogeneity() {
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let m = scale_params(&p).unwrap();
            let s = ResonanceState::new(
                rng.gen_range(-10.0..10.0),
                Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
                Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            );
            let (tau, a, b) = normalized_to_slow(&s, &m);
            let back = slow_to_normalized(tau, a, b, &m);
            assert!((back.t - s.t).abs() < 1e-14 * (1.0 + s.t.abs()));
            assert!((back.a - s.a).norm() < 1e-14 * (1.0 + s.a.norm()));
            assert!((back.b - s.b).norm() < 1e-14 * (1.0 + s.b.norm()));

            let mut p2 = p;
            p2.gamma *= 2.0;
            let m2 = scale_params(&p2).unwrap();
            assert!((m2.f - 2.0 * m.f).abs() <= 1e-15 * m.f.abs().max(1.0));
            assert_eq!((m2.kappa, m2.lambda, m2.chi), (m.kappa, m.lambda, m.chi));
        }
    }

    #[test]
    fn reconstruction_matches_initial_state() {
        let p = params(1.0, 2.0);
        let a = Complex64::new(0.7, -0.2);
        let b = Complex64::new(-0.1, 0.4);
        let s = physical_initial_state(a, b, &p);
        let (x, y) = reconstruct_physical(a, b, 0.0, &p).unwrap();
        assert_abs_diff_eq!(s[0], x, epsilon = 1e-15);
        assert_abs_diff_eq!(s[2], y, epsilon = 1e-15);
    }

    #[test]
    fn small_epsilon_envelope_agrees() {
        let p = PhysicalParams {
            epsilon: 1e-2,
            ..params(1.0, 1.0)
        };
        let cfg = IntegratorConfig::default().with_rtol(1e-9);
        let cmp = validate_envelope(&p, Complex64::new(1.0, 0.0), Complex64::new(0.2, 0.0), 1.0, &cfg).unwrap();
        assert!(cmp.peaks.len() > 20);
        assert!(cmp.max_rel_error < 0.05, "max rel error {}", cmp.max_rel_error);
    }
}
