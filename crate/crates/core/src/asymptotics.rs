//! Algebraic asymptotic solutions `A = Σ a_k t^{-k}`, `B = Σ b_k t^{-k}` of the
//! primary resonance equations as `t → ∞`.
//!
//! Substituting the series and collecting the power `t^{1-n}` gives, for every
//! `n ≥ 0`,
//!
//! ```text
//! i [2 a_n + (a*_{-1} b_n + a*_n b_{-1}) / 2] = (n-2) a_{n-2} - i (S_n / 2 + f δ_{n1})
//! i [4 b_n +  a_{-1} a_n / 2]                = (n-2) b_{n-2} - i  T_n / 4
//! ```
//!
//! with `S_n = Σ a*_m b_l`, `T_n = Σ a_m a_l` over `m + l = n - 1`,
//! `0 ≤ m, l ≤ n - 1`. Products are collected by matching powers directly.
//!
//! For the bounded family (`a_{-1} = 0`) each stage is a diagonal solve. For
//! the growing families (`|a_{-1}| = 8`) the stage operator written on
//! `(Re a_n, Im a_n, Re b_n, Im b_n)` is the rank-3 matrix of
//! [`build_stage_matrix`]: the stage is solvable only when its right-hand side
//! is orthogonal to the adjoint null vector `Z`, and the solution carries a
//! free multiple `μ_n` of the null vector `Y₀`. Stage 1 solvability fixes the
//! turning angle (`sin Ψ = -12/f` for `a_{-1} = 8e^{iΨ}`); stage `n ≥ 3`
//! solvability fixes `μ_{n-2}`, which enters linearly.
//!
//! Coefficients are computed in double-double precision and rounded for the
//! public interface; [`series_residual`] uses the extended values.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dd::{Cdd, Dd};
use crate::{Error, Result};

/// Relative solvability tolerance for an accepted growing stage.
pub const SOLVABILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeriesFamily {
    /// `A₂/B₂`: decays like `-f/(2t)`.
    Bounded,
    /// `A₃/B₃`: `a_{-1} = +8 e^{iΨ}`, `sin Ψ = -12/f`.
    GrowingPlus,
    /// `A₁/B₁`: `a_{-1} = -8 e^{iΨ}`, `sin Ψ = +12/f`.
    GrowingMinus,
}

impl SeriesFamily {
    pub const ALL: [SeriesFamily; 3] = [
        SeriesFamily::Bounded,
        SeriesFamily::GrowingPlus,
        SeriesFamily::GrowingMinus,
    ];

    pub fn is_growing(self) -> bool {
        !matches!(self, SeriesFamily::Bounded)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeriesFamily::Bounded => "bounded",
            SeriesFamily::GrowingPlus => "growing-plus",
            SeriesFamily::GrowingMinus => "growing-minus",
        }
    }

    /// Sign of the leading coefficient `a_{-1} = ±8 e^{iΨ}`.
    fn leading_sign(self) -> f64 {
        match self {
            SeriesFamily::GrowingMinus => -1.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for SeriesFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bounded" | "a2" => Ok(SeriesFamily::Bounded),
            "growing-plus" | "plus" | "a3" => Ok(SeriesFamily::GrowingPlus),
            "growing-minus" | "minus" | "a1" => Ok(SeriesFamily::GrowingMinus),
            other => Err(Error::InvalidParams(format!(
                "unknown series family '{other}' (expected bounded, growing-plus or growing-minus)"
            ))),
        }
    }
}

/// Which root of `cos² Ψ = 1 - 144/f²` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CosBranch {
    #[default]
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTerm {
    pub k: i32,
    pub a: Complex64,
    pub b: Complex64,
}

/// One linear stage of a growing expansion, in real coordinates
/// `(Re a_n, Im a_n, Re b_n, Im b_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStage {
    pub order: i32,
    pub matrix: Matrix4<f64>,
    pub rhs: Vector4<f64>,
    /// `Y₀`, spanning the null space of `matrix`.
    pub null: Vector4<f64>,
    /// `Z`, spanning the null space of `matrixᵀ`.
    pub adjoint: Vector4<f64>,
    /// Minimum-norm particular solution (orthogonal to `Y₀`).
    pub particular: Vector4<f64>,
    /// `Z · rhs` after the free parameter of stage `order - 2` was fixed.
    pub solvability: f64,
}

#[derive(Debug, Clone)]
pub struct AsymptoticSeries {
    pub family: SeriesFamily,
    pub f: f64,
    /// Turning angle; `None` for the bounded family.
    pub psi: Option<f64>,
    /// Truncation order `K`: coefficients run over `k = -1..=K`.
    pub order: usize,
    pub coeffs: Vec<SeriesTerm>,
    /// `μ_0..=μ_K` (empty for the bounded family).
    pub mus: Vec<f64>,
    /// Stages `0..=K` (empty for the bounded family).
    pub stages: Vec<LinearStage>,
    exact: Vec<(Cdd, Cdd)>,
}

impl AsymptoticSeries {
    /// Coefficients `(a_k, b_k)`; zero outside `-1..=K`.
    pub fn coeff(&self, k: i32) -> (Complex64, Complex64) {
        self.coeffs
            .iter()
            .find(|c| c.k == k)
            .map(|c| (c.a, c.b))
            .unwrap_or_default()
    }

    /// Same series cut at a lower order.
    pub fn truncated(&self, order: usize) -> AsymptoticSeries {
        let order = order.min(self.order);
        let keep = order + 2;
        AsymptoticSeries {
            family: self.family,
            f: self.f,
            psi: self.psi,
            order,
            coeffs: self.coeffs[..keep].to_vec(),
            mus: self.mus.iter().copied().take(order + 1).collect(),
            stages: self.stages.iter().filter(|s| s.order <= order as i32).cloned().collect(),
            exact: self.exact[..keep].to_vec(),
        }
    }
}

/// Arithmetic shared by the `f64` public helpers and the `Dd` engine.
trait Field:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Neg<Output = Self>
    + From<f64>
{
}

impl Field for f64 {}
impl Field for Dd {}

fn stage_matrix_entries<T: Field>(s: T, c: T) -> [[T; 4]; 4] {
    let k4 = T::from(4.0);
    let z = T::from(0.0);
    [
        [k4 * c * s, -(k4 * c * c), k4 * s, -(k4 * c)],
        [k4 * s * s, -(k4 * c * s), k4 * c, k4 * s],
        [-(k4 * s), -(k4 * c), z, -k4],
        [k4 * c, -(k4 * s), k4, z],
    ]
}

fn null_entries<T: Field>(s: T, c: T) -> [T; 4] {
    let two = T::from(2.0);
    [s, -c, -(two * s * c), c * c - s * s]
}

fn adjoint_entries<T: Field>(s: T, c: T) -> [T; 4] {
    let two = T::from(2.0);
    [-c, -s, c * c - s * s, two * s * c]
}

/// Stage matrix for `a_{-1} = 8 e^{iΨ}`, `b_{-1} = -4 e^{2iΨ}`. Rank 3 for
/// every `Ψ`.
pub fn build_stage_matrix(psi: f64) -> Matrix4<f64> {
    let e = stage_matrix_entries(psi.sin(), psi.cos());
    Matrix4::from_fn(|i, j| e[i][j])
}

/// `Y₀ = (sin Ψ, -cos Ψ, -sin 2Ψ, cos 2Ψ)`, the right null vector.
pub fn null_vector(psi: f64) -> Vector4<f64> {
    Vector4::from(null_entries(psi.sin(), psi.cos()))
}

/// `Z = (-cos Ψ, -sin Ψ, cos 2Ψ, sin 2Ψ)`, checked against `Mᵀ Z = 0`.
pub fn adjoint_null(psi: f64) -> Result<Vector4<f64>> {
    let z = Vector4::from(adjoint_entries(psi.sin(), psi.cos()));
    let check = (build_stage_matrix(psi).transpose() * z).norm();
    if check > 1e-12 {
        return Err(Error::AdjointCheck(check));
    }
    Ok(z)
}

/// Basis `Y₁ = (cos Ψ, sin Ψ, 0, 0)`, `Y₂ = (0, 0, cos 2Ψ, sin 2Ψ)` completing
/// `Y₀`.
pub fn complement_basis(psi: f64) -> [Vector4<f64>; 2] {
    let (s, c) = psi.sin_cos();
    let (s2, c2) = (2.0 * psi).sin_cos();
    [Vector4::new(c, s, 0.0, 0.0), Vector4::new(0.0, 0.0, c2, s2)]
}

/// Bilinear interaction of two correction vectors through the quadratic
/// terms: rows 1–2 are `a*_Y b_X + a*_X b_Y`, rows 3–4 are `2 a_Y a_X`.
pub fn odot(y: &Vector4<f64>, x: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(
        y[2] * x[0] + y[3] * x[1] + y[0] * x[2] + y[1] * x[3],
        y[0] * x[3] - y[1] * x[2] + y[3] * x[0] - y[2] * x[1],
        2.0 * y[0] * x[0] - 2.0 * y[1] * x[1],
        2.0 * y[1] * x[0] + 2.0 * y[0] * x[1],
    )
}

/// Turning angle of a growing family, `cos Ψ > 0` branch.
pub fn turning_angle(f: f64, family: SeriesFamily) -> Result<f64> {
    turning_angle_with_branch(f, family, CosBranch::Positive)
}

pub fn turning_angle_with_branch(f: f64, family: SeriesFamily, branch: CosBranch) -> Result<f64> {
    let (s, c) = angle_sin_cos(f, family, branch)?;
    Ok(s.to_f64().atan2(c.to_f64()))
}

/// `(sin Ψ, cos Ψ)` of the turning angle in extended precision.
fn angle_sin_cos(f: f64, family: SeriesFamily, branch: CosBranch) -> Result<(Dd, Dd)> {
    if !family.is_growing() {
        return Err(Error::InvalidParams("the bounded family has no turning angle".into()));
    }
    if !f.is_finite() {
        return Err(Error::InvalidParams("non-finite forcing".into()));
    }
    if f.abs() < 12.0 {
        return Err(Error::BelowThreshold { f });
    }
    if f.abs() == 12.0 {
        return Err(Error::DegenerateThreshold);
    }
    // GrowingMinus: sin Ψ = 12/f; GrowingPlus: sin Ψ = -12/f.
    let s = Dd::from(-12.0 * family.leading_sign()) / Dd::from(f);
    let mut c = (Dd::ONE - s * s).sqrt();
    if branch == CosBranch::Negative {
        c = -c;
    }
    Ok((s, c))
}

/// Bounded expansion `A₂/B₂` through odd order `K`.
pub fn bounded_series(f: f64, order: usize) -> Result<AsymptoticSeries> {
    if order == 0 || order % 2 == 0 {
        return Err(Error::InvalidOrder {
            order,
            reason: "the bounded series needs an odd order >= 1",
        });
    }
    if !f.is_finite() {
        return Err(Error::InvalidParams("non-finite forcing".into()));
    }
    let fd = Dd::from(f);
    let mut eng = Coefficients::new(order + 2);
    for n in 1..=order as i32 {
        let (r1, r2) = eng.stage_rhs(n, fd);
        // 2i a_n = r1, 4i b_n = r2
        let a = r1.mul_i().scale(Dd::from(-0.5));
        let b = r2.mul_i().scale(Dd::from(-0.25));
        eng.set(n, a, b);
    }
    Ok(eng.finish(SeriesFamily::Bounded, f, None, order, Vec::new(), Vec::new()))
}

/// Growing expansion (`A₁/B₁` or `A₃/B₃`) through order `K`, `cos Ψ > 0`.
pub fn growing_series(f: f64, family: SeriesFamily, order: usize) -> Result<AsymptoticSeries> {
    growing_series_with_branch(f, family, order, CosBranch::Positive)
}

pub fn growing_series_with_branch(
    f: f64,
    family: SeriesFamily,
    order: usize,
    branch: CosBranch,
) -> Result<AsymptoticSeries> {
    if order == 0 {
        return Err(Error::InvalidOrder {
            order,
            reason: "the growing series needs order >= 1",
        });
    }
    let (s, c) = angle_sin_cos(f, family, branch)?;
    let psi = s.to_f64().atan2(c.to_f64());
    // a_{-1} = ±8 e^{iΨ} = 8 e^{iΨe}; the stage algebra is written for Ψe.
    let sign = Dd::from(family.leading_sign());
    let (se, ce) = (s * sign, c * sign);

    let m = stage_matrix_entries(se, ce);
    let y0 = null_entries(se, ce);
    let z = adjoint_entries(se, ce);
    let solver = BorderedSolver::new(&m, &y0, &z);
    let to_mat = |m: &[[Dd; 4]; 4]| Matrix4::from_fn(|i, j| m[i][j].to_f64());
    let to_vec = |v: &[Dd; 4]| Vector4::from_fn(|i, _| v[i].to_f64());

    let fd = Dd::from(f);
    let mut eng = Coefficients::new(order + 4);
    let e1 = Cdd::new(ce, se);
    let a_lead = e1.scale(Dd::from(8.0));
    let b_lead = (e1 * e1).scale(Dd::from(-4.0));
    eng.set(-1, a_lead, b_lead);
    // Stage 0 is homogeneous; its free multiple μ₀ must make stage 2
    // solvable, and that condition is proportional to μ₀.
    eng.set(0, Cdd::ZERO, Cdd::ZERO);

    let mut particular: Vec<[Dd; 4]> = vec![[Dd::ZERO; 4]];
    let mut mus: Vec<Dd> = vec![Dd::ZERO];
    let mut stages = vec![LinearStage {
        order: 0,
        matrix: to_mat(&m),
        rhs: Vector4::zeros(),
        null: to_vec(&y0),
        adjoint: to_vec(&z),
        particular: Vector4::zeros(),
        solvability: 0.0,
    }];

    let dot = |u: &[Dd; 4], v: &[Dd; 4]| u.iter().zip(v).fold(Dd::ZERO, |acc, (a, b)| acc + *a * *b);
    let realify = |p: Cdd, q: Cdd| [p.re, p.im, q.re, q.im];

    let last = order as i32 + 2;
    for n in 1..=last {
        if n >= 3 {
            let j = n - 2;
            let xj = particular[j as usize];
            let set_mu = |eng: &mut Coefficients, mu: Dd| {
                let v: [Dd; 4] = std::array::from_fn(|i| xj[i] + mu * y0[i]);
                eng.set(j, Cdd::new(v[0], v[1]), Cdd::new(v[2], v[3]));
            };
            let solv_at = |eng: &mut Coefficients, mu: Dd| {
                set_mu(eng, mu);
                let (p, q) = eng.stage_rhs(n, fd);
                dot(&z, &realify(p, q))
            };
            // Z · rhs_n is affine in μ_{n-2}; two secant passes absorb rounding.
            let mut mu = Dd::ZERO;
            for _ in 0..2 {
                let r0 = solv_at(&mut eng, mu);
                let r1 = solv_at(&mut eng, mu + Dd::ONE);
                let slope = r1 - r0;
                if slope.abs().to_f64() < 1e-14 {
                    return Err(Error::StageInconsistency {
                        stage: n,
                        residual: r0.to_f64(),
                        rhs_norm: f64::NAN,
                    });
                }
                mu = mu - r0 / slope;
            }
            set_mu(&mut eng, mu);
            mus.push(mu);
        }

        let (p, q) = eng.stage_rhs(n, fd);
        let rhs = realify(p, q);
        let solv = dot(&z, &rhs).to_f64();
        let rhs_norm = dot(&rhs, &rhs).sqrt().to_f64();
        if solv.abs() > SOLVABILITY_TOL * rhs_norm.max(1.0) {
            return Err(Error::StageInconsistency {
                stage: n,
                residual: solv,
                rhs_norm,
            });
        }
        let x = solver.solve(&rhs);
        eng.set(n, Cdd::new(x[0], x[1]), Cdd::new(x[2], x[3]));
        particular.push(x);
        if n <= order as i32 {
            stages.push(LinearStage {
                order: n,
                matrix: to_mat(&m),
                rhs: to_vec(&rhs),
                null: to_vec(&y0),
                adjoint: to_vec(&z),
                particular: to_vec(&x),
                solvability: solv,
            });
        }
    }

    let mus = mus.into_iter().take(order + 1).map(Dd::to_f64).collect();
    Ok(eng.finish(family, f, Some(psi), order, mus, stages))
}

/// Truncated sums `(A(t), B(t))`.
pub fn eval_series(s: &AsymptoticSeries, t: f64) -> (Complex64, Complex64) {
    let x = 1.0 / t;
    let mut a = Complex64::default();
    let mut b = Complex64::default();
    for c in s.coeffs.iter().rev().filter(|c| c.k >= 0) {
        a = a * x + c.a;
        b = b * x + c.b;
    }
    let (a_lead, b_lead) = s.coeff(-1);
    (a + a_lead * t, b + b_lead * t)
}

/// Norm of `(A' + i(2tA + A*B/2 + f), B' + i(4tB + A²/4))` for the truncated
/// series, evaluated in extended precision.
pub fn series_residual(s: &AsymptoticSeries, t: f64) -> f64 {
    residual_parts(s, t).0
}

/// [`series_residual`] divided by the size of the dominant terms
/// `|(2tA, 4tB)| + |f|`.
pub fn relative_series_residual(s: &AsymptoticSeries, t: f64) -> f64 {
    let (r, scale) = residual_parts(s, t);
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

fn residual_parts(s: &AsymptoticSeries, t: f64) -> (f64, f64) {
    let td = Dd::from(t);
    let x = Dd::ONE / td;
    let mut a = Cdd::ZERO;
    let mut b = Cdd::ZERO;
    let mut da = Cdd::ZERO;
    let mut db = Cdd::ZERO;
    // power = t^{-k}
    let mut power = td;
    for (idx, (ak, bk)) in s.exact.iter().enumerate() {
        let k = idx as i32 - 1;
        a += ak.scale(power);
        b += bk.scale(power);
        // d/dt t^{-k} = -k t^{-k-1}
        let dp = Dd::from(-k) * power * x;
        da += ak.scale(dp);
        db += bk.scale(dp);
        power *= x;
    }
    let f = Cdd::new(Dd::from(s.f), Dd::ZERO);
    let lin_a = a.scale(Dd::from(2.0) * td);
    let lin_b = b.scale(Dd::from(4.0) * td);
    let r1 = da + (lin_a + (a.conj() * b).scale(Dd::from(0.5)) + f).mul_i();
    let r2 = db + (lin_b + (a * a).scale(Dd::from(0.25))).mul_i();
    let res = (r1.norm_sqr() + r2.norm_sqr()).sqrt().to_f64();
    let scale = (lin_a.norm_sqr() + lin_b.norm_sqr()).sqrt().to_f64() + s.f.abs();
    (res, scale)
}

/// Least-squares slope of `ln residual` against `ln t` on `points`
/// log-spaced times in `[t_lo, t_hi]`.
pub fn residual_decay_slope(
    s: &AsymptoticSeries,
    t_lo: f64,
    t_hi: f64,
    points: usize,
    relative: bool,
) -> f64 {
    let points = points.max(2);
    let (l0, l1) = (t_lo.ln(), t_hi.ln());
    let samples: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let lt = l0 + (l1 - l0) * i as f64 / (points - 1) as f64;
            let t = lt.exp();
            let r = if relative {
                relative_series_residual(s, t)
            } else {
                series_residual(s, t)
            };
            (lt, r.ln())
        })
        .collect();
    let n = samples.len() as f64;
    let mx = samples.iter().map(|p| p.0).sum::<f64>() / n;
    let my = samples.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = samples.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = samples.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Coefficient store indexed by `k = -1, 0, 1, ...`.
struct Coefficients {
    a: Vec<Cdd>,
    b: Vec<Cdd>,
}

impl Coefficients {
    fn new(max_order: usize) -> Self {
        Self {
            a: vec![Cdd::ZERO; max_order + 2],
            b: vec![Cdd::ZERO; max_order + 2],
        }
    }

    fn get(&self, k: i32) -> (Cdd, Cdd) {
        let i = (k + 1) as usize;
        (self.a[i], self.b[i])
    }

    fn set(&mut self, k: i32, a: Cdd, b: Cdd) {
        let i = (k + 1) as usize;
        self.a[i] = a;
        self.b[i] = b;
    }

    /// Right-hand side of stage `n` from the coefficients of orders `< n`.
    fn stage_rhs(&self, n: i32, f: Dd) -> (Cdd, Cdd) {
        let mut s = Cdd::ZERO;
        let mut t = Cdd::ZERO;
        for m in 0..n {
            let l = n - 1 - m;
            let (am, _) = self.get(m);
            let (al, bl) = self.get(l);
            s += am.conj() * bl;
            t += am * al;
        }
        let (mut p, mut q) = if n >= 1 {
            let (a2, b2) = self.get(n - 2);
            let w = Dd::from(n - 2);
            (a2.scale(w), b2.scale(w))
        } else {
            (Cdd::ZERO, Cdd::ZERO)
        };
        let mut src = s.scale(Dd::from(0.5));
        if n == 1 {
            src += Cdd::new(f, Dd::ZERO);
        }
        p = p - src.mul_i();
        q = q - t.scale(Dd::from(0.25)).mul_i();
        (p, q)
    }

    fn finish(
        self,
        family: SeriesFamily,
        f: f64,
        psi: Option<f64>,
        order: usize,
        mus: Vec<f64>,
        stages: Vec<LinearStage>,
    ) -> AsymptoticSeries {
        let exact: Vec<(Cdd, Cdd)> = (-1..=order as i32).map(|k| self.get(k)).collect();
        let coeffs = exact
            .iter()
            .enumerate()
            .map(|(i, (a, b))| SeriesTerm {
                k: i as i32 - 1,
                a: a.to_c64(),
                b: b.to_c64(),
            })
            .collect();
        AsymptoticSeries {
            family,
            f,
            psi,
            order,
            coeffs,
            mus,
            stages,
            exact,
        }
    }
}

/// Minimum-norm solver for the rank-3 stage system `M x = r` (with
/// `Z · r = 0`), via the nonsingular bordered matrix `M + Z Y₀ᵀ`: its
/// solution satisfies `|Z|² (Y₀ · x) = Z · r = 0`, hence `M x = r`, `x ⊥ Y₀`.
struct BorderedSolver {
    lu: [[Dd; 4]; 4],
    perm: [usize; 4],
}

impl BorderedSolver {
    fn new(m: &[[Dd; 4]; 4], y0: &[Dd; 4], z: &[Dd; 4]) -> Self {
        let mut lu: [[Dd; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| m[i][j] + z[i] * y0[j]));
        let mut perm = [0, 1, 2, 3];
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&i, &j| {
                    lu[i][col]
                        .abs()
                        .to_f64()
                        .partial_cmp(&lu[j][col].abs().to_f64())
                        .unwrap()
                })
                .unwrap();
            lu.swap(col, pivot);
            perm.swap(col, pivot);
            let d = lu[col][col];
            for row in col + 1..4 {
                let factor = lu[row][col] / d;
                lu[row][col] = factor;
                for k in col + 1..4 {
                    let v = lu[col][k];
                    lu[row][k] -= factor * v;
                }
            }
        }
        Self { lu, perm }
    }

    fn solve(&self, r: &[Dd; 4]) -> [Dd; 4] {
        let mut x: [Dd; 4] = std::array::from_fn(|i| r[self.perm[i]]);
        for i in 0..4 {
            for k in 0..i {
                let v = self.lu[i][k] * x[k];
                x[i] -= v;
            }
        }
        for i in (0..4).rev() {
            for k in i + 1..4 {
                let v = self.lu[i][k] * x[k];
                x[i] -= v;
            }
            x[i] = x[i] / self.lu[i][i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{rngs::StdRng, Rng, SeedableRng};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn turning_angle_examples() {
        let psi = turning_angle(24.0, SeriesFamily::GrowingMinus).unwrap();
        assert_abs_diff_eq!(psi.sin(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(psi, PI / 6.0, epsilon = 1e-15);
        let psi = turning_angle(13.0, SeriesFamily::GrowingPlus).unwrap();
        assert_abs_diff_eq!(psi.sin(), -12.0 / 13.0, epsilon = 1e-15);
        assert!(psi.cos() > 0.0);
        let neg = turning_angle_with_branch(13.0, SeriesFamily::GrowingPlus, CosBranch::Negative).unwrap();
        assert_abs_diff_eq!(neg.sin(), -12.0 / 13.0, epsilon = 1e-15);
        assert!(neg.cos() < 0.0);

        assert!(matches!(
            turning_angle(11.0, SeriesFamily::GrowingPlus),
            Err(Error::BelowThreshold { .. })
        ));
        assert!(matches!(
            turning_angle(-12.0, SeriesFamily::GrowingMinus),
            Err(Error::DegenerateThreshold)
        ));
        assert!(turning_angle(13.0, SeriesFamily::Bounded).is_err());
    }

    #[test]
    fn stage_matrix_at_zero() {
        let m = build_stage_matrix(0.0);
        let expected = Matrix4::new(
            0.0, -4.0, 0.0, -4.0, //
            0.0, 0.0, 4.0, 0.0, //
            0.0, -4.0, 0.0, -4.0, //
            4.0, 0.0, 4.0, 0.0,
        );
        assert_abs_diff_eq!(m, expected, epsilon = 1e-15);
    }

    #[test]
    fn stage_matrix_rank_three_with_closed_form_null_vectors() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..100 {
            let psi = rng.gen_range(-PI..PI);
            let m = build_stage_matrix(psi);
            let sv = m.singular_values();
            let max = sv.max();
            let small = sv.iter().filter(|&&v| v < 1e-10 * max).count();
            assert_eq!(small, 1, "psi = {psi}, sv = {sv:?}");
            assert!((m * null_vector(psi)).norm() < 1e-13);
            let z = adjoint_null(psi).unwrap();
            assert!((m.transpose() * z).norm() < 1e-13);
        }
    }

    /// The closed-form matrix is the real form of `i L`, with `L` the linear part
    /// of the stage equations about `a_{-1} = 8e^{iΨ}`.
    #[test]
    fn stage_matrix_matches_linearized_operator() {
        for psi in [0.0, 0.4, -1.2, 2.9] {
            let e = Complex64::from_polar(1.0, psi);
            let am1 = 8.0 * e;
            let bm1 = -4.0 * e * e;
            let m = build_stage_matrix(psi);
            for j in 0..4 {
                let mut v = [0.0; 4];
                v[j] = 1.0;
                let (a, b) = (c(v[0], v[1]), c(v[2], v[3]));
                let la = 2.0 * a + 0.5 * (am1.conj() * b + a.conj() * bm1);
                let lb = 4.0 * b + 0.5 * am1 * a;
                let (p, q) = (Complex64::i() * la, Complex64::i() * lb);
                let col = Vector4::new(p.re, p.im, q.re, q.im);
                assert!((m.column(j) - col).norm() < 1e-13, "psi {psi} col {j}");
            }
        }
    }

    #[test]
    fn adjoint_examples() {
        let z = adjoint_null(0.0).unwrap();
        assert_abs_diff_eq!(z, Vector4::new(-1.0, 0.0, 1.0, 0.0), epsilon = 1e-15);
        let z = adjoint_null(PI / 2.0).unwrap();
        assert_abs_diff_eq!(z, Vector4::new(0.0, -1.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn odot_examples() {
        let x = Vector4::new(0.3, -1.1, 2.0, 0.7);
        let y = Vector4::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(odot(&y, &x), Vector4::new(x[2], x[3], 2.0 * x[0], 2.0 * x[1]));
        let y = Vector4::new(0.5, -0.25, 3.0, 1.0);
        let r = odot(&y, &x);
        assert_abs_diff_eq!(r[2], 2.0 * y[0] * x[0] - 2.0 * y[1] * x[1], epsilon = 1e-15);
        assert_abs_diff_eq!(r[3], 2.0 * y[1] * x[0] + 2.0 * y[0] * x[1], epsilon = 1e-15);
    }

    #[test]
    fn odot_is_polarized_quadratic_form() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..50 {
            let y = Vector4::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let x = Vector4::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let (ay, by) = (c(y[0], y[1]), c(y[2], y[3]));
            let (ax, bx) = (c(x[0], x[1]), c(x[2], x[3]));
            let p = ay.conj() * bx + ax.conj() * by;
            let q = 2.0 * ay * ax;
            assert!((odot(&y, &x) - Vector4::new(p.re, p.im, q.re, q.im)).norm() < 1e-13);
            // symmetric and bilinear
            assert!((odot(&y, &x) - odot(&x, &y)).norm() < 1e-13);
            let w = Vector4::from_fn(|_, _| rng.gen_range(-2.0..2.0));
            let (s, t) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let lhs = odot(&(s * y + t * w), &x);
            let rhs = s * odot(&y, &x) + t * odot(&w, &x);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn null_vector_self_interaction_is_invisible_to_adjoint() {
        for psi in [0.3, 1.0, -2.0] {
            let y0 = null_vector(psi);
            let [y1, _] = complement_basis(psi);
            let z = adjoint_null(psi).unwrap();
            assert!(z.dot(&odot(&y0, &y0)).abs() < 1e-13);
            assert!(z.dot(&odot(&y0, &y1)).abs() < 1e-13);
            assert!(z.dot(&y0).abs() < 1e-15);
        }
    }

    #[test]
    fn bounded_coefficients_at_twelve() {
        let s = bounded_series(12.0, 5).unwrap();
        let expect = [
            (1, c(-6.0, 0.0), c(0.0, 0.0)),
            (3, c(0.0, 3.0), c(-2.25, 0.0)),
            (5, c(1.125, 0.0), c(0.0, 3.9375)),
        ];
        for (k, a, b) in expect {
            let (ak, bk) = s.coeff(k);
            assert!((ak - a).norm() < 1e-12, "a_{k} = {ak}");
            assert!((bk - b).norm() < 1e-12, "b_{k} = {bk}");
        }
        let (a, _) = eval_series(&s, 1.0);
        assert!((a - c(-6.0 + 1.125, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn bounded_zero_forcing_vanishes() {
        let s = bounded_series(0.0, 9).unwrap();
        assert!(s.coeffs.iter().all(|c| c.a == Complex64::default() && c.b == Complex64::default()));
        for t in [1.0, 10.0, 1e3] {
            assert_eq!(series_residual(&s, t), 0.0);
        }
    }

    #[test]
    fn bounded_rejects_even_order() {
        assert!(bounded_series(3.0, 4).is_err());
        assert!(bounded_series(3.0, 0).is_err());
    }

    #[test]
    fn bounded_parity_pattern() {
        for f in [6.0, 12.0, 13.0, -7.5] {
            let s = bounded_series(f, 15).unwrap();
            for term in &s.coeffs {
                let scale = 1.0 + term.a.norm() + term.b.norm();
                match term.k.rem_euclid(4) {
                    0 | 2 => {
                        assert_eq!(term.a, Complex64::default());
                        assert_eq!(term.b, Complex64::default());
                    }
                    1 => {
                        assert!(term.a.im.abs() < 1e-14 * scale, "a_{} = {}", term.k, term.a);
                        assert!(term.b.re.abs() < 1e-14 * scale, "b_{} = {}", term.k, term.b);
                    }
                    _ => {
                        assert!(term.a.re.abs() < 1e-14 * scale, "a_{} = {}", term.k, term.a);
                        assert!(term.b.im.abs() < 1e-14 * scale, "b_{} = {}", term.k, term.b);
                    }
                }
            }
        }
    }

    #[test]
    fn bounded_far_field_is_small() {
        let s = bounded_series(12.0, 7).unwrap();
        let (a, _) = eval_series(&s, 1e6);
        assert!(a.norm() < 1e-5);
    }

    #[test]
    fn growing_minus_at_thirteen() {
        let s = growing_series(13.0, SeriesFamily::GrowingMinus, 1).unwrap();
        let psi = s.psi.unwrap();
        assert_abs_diff_eq!(psi.sin(), 12.0 / 13.0, epsilon = 1e-15);
        let (am1, bm1) = s.coeff(-1);
        assert!((am1 + 8.0 * Complex64::from_polar(1.0, psi)).norm() < 1e-12);
        assert!((bm1 + 4.0 * Complex64::from_polar(1.0, 2.0 * psi)).norm() < 1e-12);
        let (a1, _) = s.coeff(1);
        assert!((a1 - c(3.25, 0.0)).norm() < 1e-12, "a1 = {a1}");
    }

    #[test]
    fn growing_plus_b1_matches_closed_form() {
        let s = growing_series(13.0, SeriesFamily::GrowingPlus, 1).unwrap();
        let (_, b1) = s.coeff(1);
        // -cos Ψ (f/4 + 24/f) + 2i (1 + sin² Ψ) with cos Ψ = 5/13
        assert!((b1 - c(-1.960059171597633, 3.704142011834320)).norm() < 1e-12, "b1 = {b1}");
    }

    #[test]
    fn leading_order_algebra() {
        for fam in [SeriesFamily::GrowingPlus, SeriesFamily::GrowingMinus] {
            for f in [13.0, 24.0, -15.0] {
                let s = growing_series(f, fam, 1).unwrap();
                let (a, b) = s.coeff(-1);
                assert_abs_diff_eq!(a.norm_sqr(), 64.0, epsilon = 1e-12);
                assert!((b + a * a / 16.0).norm() < 1e-12);
                assert!((2.0 * a + 0.5 * a.conj() * b).norm() < 1e-12);
                assert!((4.0 * b + 0.25 * a * a).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn growing_stages_are_solvable_and_consistent() {
        for fam in [SeriesFamily::GrowingPlus, SeriesFamily::GrowingMinus] {
            let s = growing_series(13.0, fam, 7).unwrap();
            assert_eq!(s.stages.len(), 8);
            assert_eq!(s.mus.len(), 8);
            for st in &s.stages {
                let scale = st.rhs.norm().max(1.0);
                assert!(st.solvability.abs() < SOLVABILITY_TOL * scale);
                assert!((st.matrix * st.null).norm() < 1e-12);
                assert!((st.matrix.transpose() * st.adjoint).norm() < 1e-12);
                assert!((st.matrix * st.particular - st.rhs).norm() < 1e-10 * scale);
                assert!(st.particular.dot(&st.null).abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn growing_even_orders_vanish() {
        let s = growing_series(24.0, SeriesFamily::GrowingPlus, 8).unwrap();
        for k in [0, 2, 4, 6, 8] {
            let (a, b) = s.coeff(k);
            assert!(a.norm() < 1e-10 && b.norm() < 1e-10, "k = {k}: {a} {b}");
        }
    }

    #[test]
    fn growing_rejects_subthreshold() {
        assert!(matches!(
            growing_series(11.0, SeriesFamily::GrowingPlus, 3),
            Err(Error::BelowThreshold { .. })
        ));
        assert!(growing_series(13.0, SeriesFamily::GrowingPlus, 0).is_err());
    }

    #[test]
    fn growing_leading_growth_rate() {
        let s = growing_series(13.0, SeriesFamily::GrowingMinus, 3).unwrap();
        let t = 1e4;
        let (a, _) = eval_series(&s, t);
        assert!((a.norm() / t - 8.0).abs() < 1e-3);
    }

    #[test]
    fn raising_order_by_two_gains_t_squared() {
        let lo = growing_series(13.0, SeriesFamily::GrowingMinus, 1).unwrap();
        let hi = growing_series(13.0, SeriesFamily::GrowingMinus, 3).unwrap();
        let gain = |t: f64| series_residual(&lo, t) / series_residual(&hi, t);
        // the gain itself grows like t²
        let growth = gain(1e3) / gain(1e2);
        assert!((growth / 100.0 - 1.0).abs() < 0.05, "growth {growth}");
    }

    #[test]
    fn truncation_keeps_prefix() {
        let s = growing_series(13.0, SeriesFamily::GrowingPlus, 5).unwrap();
        let t = s.truncated(1);
        assert_eq!(t.order, 1);
        assert_eq!(t.coeffs.len(), 3);
        assert_eq!(t.coeff(1), s.coeff(1));
        assert_eq!(t.coeff(3), (Complex64::default(), Complex64::default()));
    }

    #[test]
    fn family_parsing() {
        assert_eq!("a3".parse::<SeriesFamily>().unwrap(), SeriesFamily::GrowingPlus);
        assert_eq!("growing-minus".parse::<SeriesFamily>().unwrap(), SeriesFamily::GrowingMinus);
        assert!("sideways".parse::<SeriesFamily>().is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn vec4() -> impl Strategy<Value = Vector4<f64>> {
        prop::array::uniform4(-10.0..10.0f64).prop_map(Vector4::from)
    }

    proptest! {
        #[test]
        fn null_vectors_hold_for_any_angle(psi in -7.0..7.0f64) {
            let m = build_stage_matrix(psi);
            let y0 = null_vector(psi);
            prop_assert!((m * y0).norm() < 1e-13);
            let z = adjoint_null(psi).unwrap();
            prop_assert!((m.transpose() * z).norm() < 1e-13);
            prop_assert!(z.dot(&odot(&y0, &y0)).abs() < 1e-13);
        }

        #[test]
        fn odot_is_symmetric_and_bilinear(x in vec4(), y in vec4(), w in vec4(), s in -3.0..3.0f64) {
            prop_assert!((odot(&x, &y) - odot(&y, &x)).norm() < 1e-12);
            let lhs = odot(&(x + s * w), &y);
            let rhs = odot(&x, &y) + s * odot(&w, &y);
            prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
        }

        #[test]
        fn growing_leading_terms(f in 12.01..60.0f64, neg in any::<bool>(), minus in any::<bool>()) {
            let f = if neg { -f } else { f };
            let fam = if minus { SeriesFamily::GrowingMinus } else { SeriesFamily::GrowingPlus };
            let s = growing_series(f, fam, 1).unwrap();
            let (a, b) = s.coeff(-1);
            prop_assert!((a.norm_sqr() - 64.0).abs() < 1e-12);
            prop_assert!((b + a * a / 16.0).norm() < 1e-12);
            let sign = if minus { 1.0 } else { -1.0 };
            prop_assert!((s.psi.unwrap().sin() - sign * 12.0 / f).abs() < 1e-15);
        }

        #[test]
        fn bounded_parity(f in -40.0..40.0f64) {
            let s = bounded_series(f, 5).unwrap();
            for k in [-1, 0, 2, 4] {
                let (a, b) = s.coeff(k);
                prop_assert!(a.norm() == 0.0 && b.norm() == 0.0);
            }
        }
    }
}
