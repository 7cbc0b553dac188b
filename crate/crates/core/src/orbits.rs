//! Closed-form orbit theory: effective potential, turning points, radial and
//! angular solutions, conic orbit equations and the regime classifier.
//!
//! Radial motion is written in y = sinh²r on the outer chart. On the inner
//! chart the same function continues as y = −sin²χ, so y = (z0/R)² − 1
//! throughout, and it obeys ẏ² = αy² + βy + γ with
//! α = 8E/R² − 4ω², β = 4(2R²E − L²)/R⁴, γ = −4L²/R⁴.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::geometry::{momentum_lift, ModelParams, PhaseState};
use crate::numerics;

/// Relative width of the equality band used by the classifier.
pub const CLASSIFY_BAND: f64 = 1e-12;

/// Number of parameter points per exported orbit curve.
pub const ORBIT_SAMPLES: usize = 720;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadialRegime {
    BoundedGeneric,
    Circular,
    UnboundedGeneric,
    Threshold,
    RepulsiveL2,
    NegL2Bounded,
    NegL2Unbounded,
    ZeroL2Bounded,
    ZeroL2Unbounded,
    /// No classical motion: E below the potential minimum, or L² ≥ ω²R⁴ with E ≤ ω²R²/2.
    Inadmissible,
}

impl RadialRegime {
    pub fn is_bounded(self) -> bool {
        matches!(self, Self::BoundedGeneric | Self::Circular | Self::NegL2Bounded | Self::ZeroL2Bounded)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConicKind {
    Ellipse,
    Circle,
    Ultraellipse,
    Equidistant,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicParams {
    pub p: f64,
    pub eps: f64,
    pub a_sq: f64,
    pub b_sq: f64,
    pub kind: ConicKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Carrier {
    TwoSheetedUpper,
    TwoSheetedLower,
    OneSheeted,
    HyperbolicCylinder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitClassification {
    pub regime: RadialRegime,
    pub conic: Option<ConicParams>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    /// Inner-chart turning angle, present for L² < 0.
    pub chi_max: Option<f64>,
    pub period: Option<f64>,
    /// None only for inadmissible inputs.
    pub carrier: Option<Carrier>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningRadii {
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub chi_max: Option<f64>,
}

fn near(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= CLASSIFY_BAND * a.abs().max(b.abs()).max(scale)
}

fn radial_coefficients(e: f64, l_sq: f64, params: &ModelParams) -> (f64, f64, f64) {
    let (w, r) = (params.omega, params.radius);
    let r2 = r * r;
    let r4 = r2 * r2;
    (8.0 * e / r2 - 4.0 * w * w, 4.0 * (2.0 * r2 * e - l_sq) / r4, -4.0 * l_sq / r4)
}

pub fn effective_potential(r: f64, l_sq: f64, params: &ModelParams) -> Result<f64> {
    let (w, rad) = (params.omega, params.radius);
    if !(r >= 0.0) || (r == 0.0 && l_sq != 0.0) {
        return Err(Error::InvalidParameter(format!("effective potential needs r > 0 (got r = {r}, L^2 = {l_sq})")));
    }
    let centrifugal = if l_sq == 0.0 { 0.0 } else { l_sq / (2.0 * rad * rad * r.sinh().powi(2)) };
    Ok(0.5 * w * w * rad * rad * r.tanh().powi(2) + centrifugal)
}

/// Interior minimum (r0, U_eff(r0)), present iff 0 ≤ L² < ω²R⁴.
pub fn eff_minimum(l_sq: f64, params: &ModelParams) -> Option<(f64, f64)> {
    let ceiling = params.l_sq_ceiling();
    if l_sq < 0.0 || l_sq >= ceiling {
        return None;
    }
    let x0 = (l_sq / ceiling).sqrt();
    let r0 = x0.sqrt().atanh();
    let e_min = params.omega * l_sq.sqrt() - l_sq / (2.0 * params.radius * params.radius);
    Some((r0, e_min))
}

/// Roots x1 ≤ x2 of ω²R⁴X² − (2R²E + L²)X + L² = 0 in X = tanh²r.
pub fn radial_roots(e: f64, l_sq: f64, params: &ModelParams) -> Result<(f64, f64)> {
    let (w, r) = (params.omega, params.radius);
    let r2 = r * r;
    let a = w * w * r2 * r2;
    let b = 2.0 * r2 * e + l_sq;
    let mut disc = b * b - 4.0 * a * l_sq;
    if disc < 0.0 {
        if disc >= -CLASSIFY_BAND * (b * b).max(4.0 * a * l_sq.abs()) {
            disc = 0.0;
        } else {
            let e_min = eff_minimum(l_sq, params).map(|m| m.1).unwrap_or(f64::NAN);
            return Err(Error::Inadmissible {
                e,
                l_sq,
                reason: format!("energy below the effective-potential minimum w*sqrt(L^2) - L^2/(2R^2) = {e_min}"),
            });
        }
    }
    let s = disc.sqrt();
    // Stable pairing: the larger-magnitude root from the sum, the other from the product.
    let q = if b >= 0.0 { 0.5 * (b + s) } else { 0.5 * (b - s) };
    if q == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (u, v) = (q / a, l_sq / q);
    Ok(if u <= v { (u, v) } else { (v, u) })
}

fn admissible(e: f64, l_sq: f64, params: &ModelParams) -> Result<RadialRegime> {
    match classify_regime(e, l_sq, params) {
        RadialRegime::Inadmissible => Err(Error::Inadmissible {
            e,
            l_sq,
            reason: if l_sq >= params.l_sq_ceiling() {
                format!("L^2 >= w^2 R^4 requires E > w^2 R^2 / 2 = {}", params.threshold_energy())
            } else if l_sq == 0.0 {
                "L^2 = 0 requires E >= 0".to_string()
            } else {
                let e_min = eff_minimum(l_sq, params).map(|m| m.1).unwrap_or(f64::NAN);
                format!("energy below the effective-potential minimum w*sqrt(L^2) - L^2/(2R^2) = {e_min}")
            },
        }),
        r => Ok(r),
    }
}

fn classify_regime(e: f64, l_sq: f64, params: &ModelParams) -> RadialRegime {
    let thr = params.threshold_energy();
    let ceiling = params.l_sq_ceiling();
    if near(l_sq, 0.0, ceiling) {
        return if e < 0.0 && !near(e, 0.0, thr) {
            RadialRegime::Inadmissible
        } else if e < thr && !near(e, thr, thr) {
            RadialRegime::ZeroL2Bounded
        } else {
            RadialRegime::ZeroL2Unbounded
        };
    }
    if l_sq < 0.0 {
        return if e < thr && !near(e, thr, thr) { RadialRegime::NegL2Bounded } else { RadialRegime::NegL2Unbounded };
    }
    if l_sq >= ceiling || near(l_sq, ceiling, ceiling) {
        return if e > thr && !near(e, thr, thr) { RadialRegime::RepulsiveL2 } else { RadialRegime::Inadmissible };
    }
    let e_min = eff_minimum(l_sq, params).expect("interior minimum exists").1;
    if near(e, e_min, thr) {
        RadialRegime::Circular
    } else if e < e_min {
        RadialRegime::Inadmissible
    } else if near(e, thr, thr) {
        RadialRegime::Threshold
    } else if e < thr {
        RadialRegime::BoundedGeneric
    } else {
        RadialRegime::UnboundedGeneric
    }
}

pub fn turning_radii(e: f64, l_sq: f64, params: &ModelParams) -> Result<TurningRadii> {
    let regime = admissible(e, l_sq, params)?;
    let (x1, x2) = radial_roots(e, l_sq, params)?;
    let bounded = regime.is_bounded();
    let r_max = if bounded && x2 > 0.0 && x2 < 1.0 { Some(x2.sqrt().atanh()) } else { None };
    let out = match regime {
        RadialRegime::Circular => {
            let r0 = eff_minimum(l_sq, params).expect("circular orbit has a minimum").0;
            TurningRadii { r_min: Some(r0), r_max: Some(r0), chi_max: None }
        }
        RadialRegime::NegL2Bounded | RadialRegime::NegL2Unbounded => {
            TurningRadii { r_min: None, r_max, chi_max: Some((-x1).sqrt().atan()) }
        }
        RadialRegime::ZeroL2Bounded | RadialRegime::ZeroL2Unbounded => TurningRadii { r_min: None, r_max, chi_max: None },
        _ => TurningRadii { r_min: Some(x1.max(0.0).sqrt().atanh()), r_max, chi_max: None },
    };
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RadialForm {
    /// y = y_c + A sin(w(t − t0)).
    Oscillating,
    /// y = y_c + A cosh(w(t − t0)).
    Hyperbolic,
    /// y = y_c + (β/4)(t − t0)².
    Parabolic,
    /// y ≡ y_c.
    Constant,
}

/// Closed-form radial motion y(t) = sinh²r (−sin²χ on the inner chart).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub regime: RadialRegime,
    pub form: RadialForm,
    pub y_c: f64,
    pub amplitude: f64,
    pub rate: f64,
    pub t0: f64,
}

impl RadialSolution {
    pub fn y(&self, t: f64) -> f64 {
        let s = t - self.t0;
        match self.form {
            RadialForm::Oscillating => self.y_c + self.amplitude * (self.rate * s).sin(),
            RadialForm::Hyperbolic => self.y_c + self.amplitude * (self.rate * s).cosh(),
            RadialForm::Parabolic => self.y_c + self.amplitude * s * s,
            RadialForm::Constant => self.y_c,
        }
    }

    pub fn y_dot(&self, t: f64) -> f64 {
        let s = t - self.t0;
        match self.form {
            RadialForm::Oscillating => self.amplitude * self.rate * (self.rate * s).cos(),
            RadialForm::Hyperbolic => self.amplitude * self.rate * (self.rate * s).sinh(),
            RadialForm::Parabolic => 2.0 * self.amplitude * s,
            RadialForm::Constant => 0.0,
        }
    }

    /// Outer-chart radius at time t, or None while the motion is on the inner chart.
    pub fn r(&self, t: f64) -> Option<f64> {
        let y = self.y(t);
        (y >= 0.0).then(|| y.sqrt().asinh())
    }

    pub fn period(&self) -> Option<f64> {
        match self.form {
            RadialForm::Oscillating => Some(2.0 * PI / self.rate),
            _ => None,
        }
    }
}

/// Radial solution in the regime of (E, L²) with phase origin t0: the
/// midpoint crossing for oscillating motion, the turning point for hyperbolic
/// and parabolic motion.
pub fn radial_solution(e: f64, l_sq: f64, params: &ModelParams, t0: f64) -> Result<RadialSolution> {
    let regime = admissible(e, l_sq, params)?;
    let (alpha, beta, gamma) = radial_coefficients(e, l_sq, params);
    let scale = 4.0 * params.omega * params.omega;
    if regime == RadialRegime::Circular {
        let (r0, _) = eff_minimum(l_sq, params).expect("circular orbit has a minimum");
        return Ok(RadialSolution { regime, form: RadialForm::Constant, y_c: r0.sinh().powi(2), amplitude: 0.0, rate: 0.0, t0 });
    }
    if matches!(regime, RadialRegime::Threshold) || (regime == RadialRegime::ZeroL2Unbounded && near(alpha, 0.0, scale)) {
        // ẏ² = βy + γ.
        return Ok(RadialSolution { regime, form: RadialForm::Parabolic, y_c: -gamma / beta, amplitude: beta / 4.0, rate: 0.0, t0 });
    }
    let disc = (beta * beta - 4.0 * alpha * gamma).max(0.0);
    let y_c = -beta / (2.0 * alpha);
    let amplitude = disc.sqrt() / (2.0 * alpha.abs());
    let rate = alpha.abs().sqrt();
    let form = if alpha < 0.0 { RadialForm::Oscillating } else { RadialForm::Hyperbolic };
    Ok(RadialSolution { regime, form, y_c, amplitude, rate, t0 })
}

/// y = (z0/R)² − 1 and its time derivative for a phase state.
pub fn radial_observables(state: &PhaseState, params: &ModelParams) -> Result<(f64, f64)> {
    let ph = momentum_lift(state, params)?;
    let r2 = params.radius * params.radius;
    let z0 = ph.z.z[0];
    // ż0 = −p0 under the ambient metric.
    Ok((z0 * z0 / r2 - 1.0, -2.0 * z0 * ph.p[0] / r2))
}

/// Radial solution whose phase matches a given state at time t.
pub fn radial_solution_from_state(state: &PhaseState, t: f64, e: f64, l_sq: f64, params: &ModelParams) -> Result<RadialSolution> {
    let mut sol = radial_solution(e, l_sq, params, 0.0)?;
    let (y, yd) = radial_observables(state, params)?;
    sol.t0 = match sol.form {
        RadialForm::Oscillating => {
            let theta = ((y - sol.y_c) / sol.amplitude).atan2(yd / (sol.amplitude * sol.rate));
            t - theta / sol.rate
        }
        RadialForm::Hyperbolic => t - (yd / (sol.amplitude * sol.rate)).asinh() / sol.rate,
        RadialForm::Parabolic => t - yd / (2.0 * sol.amplitude),
        RadialForm::Constant => t,
    };
    Ok(sol)
}

/// Travel time between two outer-chart radii inside one monotone leg,
/// by quadrature of dt = R dr / √(2(E − U_eff)). With X = tanh²r written as
/// X = m + h sin θ over the root pair, the integrand becomes 1/(2ω(1 − X)).
pub fn time_of_flight(r_a: f64, r_b: f64, e: f64, l_sq: f64, params: &ModelParams) -> Result<f64> {
    if !(r_a >= 0.0 && r_b >= 0.0) {
        return Err(Error::InvalidParameter("radii must be non-negative".into()));
    }
    if r_a == r_b {
        return Ok(0.0);
    }
    let regime = admissible(e, l_sq, params)?;
    if regime == RadialRegime::Circular {
        return Err(Error::CrossesTurningPoint("circular orbits have no radial travel".into()));
    }
    let (x1, x2) = radial_roots(e, l_sq, params)?;
    let (m, h) = (0.5 * (x1 + x2), 0.5 * (x2 - x1));
    let tol = 1e-12;
    let theta = |r: f64| -> Result<f64> {
        let x = r.tanh().powi(2);
        if x < x1 - tol || x > x2 + tol {
            return Err(Error::CrossesTurningPoint(format!("r = {r} lies outside the allowed band [{x1}, {x2}] in tanh^2 r")));
        }
        // Radii within a few ulps of a root are the turning point itself.
        let snap = 8.0 * f64::EPSILON * x2.abs().max(1.0);
        if (x - x1).abs() <= snap {
            return Ok(-FRAC_PI_2);
        }
        if (x - x2).abs() <= snap {
            return Ok(FRAC_PI_2);
        }
        Ok(((x - m) / h).clamp(-1.0, 1.0).asin())
    };
    let (ta, tb) = (theta(r_a)?, theta(r_b)?);
    let w = params.omega;
    let t = numerics::integrate(|th| 0.5 / (w * (1.0 - (m + h * th.sin()))), ta.min(tb), ta.max(tb), 1e-13, 1e-13)?;
    Ok(t)
}

/// Orbit relation between τ and φ for fixed L² and p_φ:
/// tanh τ = √(1 − L²/p_φ²) sin(φ0 − φ) for L² > 0,
/// sin(φ0 − φ) = (p_φ/√(p_φ² + |L²|)) tanh τ for L² < 0,
/// sinh τ = tan(φ0 − φ) for L² = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AngularSolution {
    Equatorial,
    Positive { k: f64, phi0: f64 },
    Negative { kappa: f64, phi0: f64 },
    Zero { phi0: f64 },
    ConstantAzimuth { phi0: f64 },
}

pub fn angular_solution(l_sq: f64, pphi: f64, phi0: f64) -> Result<AngularSolution> {
    if !(l_sq.is_finite() && pphi.is_finite()) {
        return Err(Error::NonFinite("angular solution inputs".into()));
    }
    let p2 = pphi * pphi;
    if l_sq > p2 && !near(l_sq, p2, 1.0) {
        return Err(Error::InvalidParameter(format!("outer motion requires L^2 <= p_phi^2 (got {l_sq} > {p2})")));
    }
    if pphi == 0.0 {
        return Ok(AngularSolution::ConstantAzimuth { phi0 });
    }
    if near(l_sq, p2, 1.0) {
        return Ok(AngularSolution::Equatorial);
    }
    Ok(if l_sq > 0.0 {
        AngularSolution::Positive { k: (1.0 - l_sq / p2).sqrt(), phi0 }
    } else if l_sq < 0.0 {
        AngularSolution::Negative { kappa: pphi.abs() / (p2 - l_sq).sqrt(), phi0 }
    } else {
        AngularSolution::Zero { phi0 }
    })
}

/// Angular solution through a state, with φ0 fixed by its (τ, p_τ, p_φ).
pub fn angular_solution_from_state(state: &PhaseState) -> Result<AngularSolution> {
    if !state.chart().is_outer() {
        return Err(Error::ChartMismatch("outer"));
    }
    let [_, tau, phi, _, ptau, pphi] = state.to_array();
    let l_sq = pphi * pphi / tau.cosh().powi(2) - ptau * ptau;
    if pphi == 0.0 {
        return angular_solution(l_sq, pphi, phi);
    }
    // sin(φ0 − φ) = tanh τ / k, cos(φ0 − φ) = p_τ / (k p_φ), k² = 1 − L²/p_φ².
    let k = (1.0 - l_sq / (pphi * pphi)).max(0.0).sqrt();
    let phi0 = if k == 0.0 { phi } else { phi + tau.tanh().atan2(ptau / pphi) };
    angular_solution(l_sq, pphi, phi0)
}

impl AngularSolution {
    /// τ on the orbit at azimuth φ, where defined.
    pub fn tau(&self, phi: f64) -> Option<f64> {
        match *self {
            Self::Equatorial => Some(0.0),
            Self::Positive { k, phi0 } => Some((k * (phi0 - phi).sin()).atanh()),
            Self::Negative { kappa, phi0 } => {
                let t = (phi0 - phi).sin() / kappa;
                (t.abs() < 1.0).then(|| t.atanh())
            }
            Self::Zero { phi0 } => {
                let c = (phi0 - phi).cos();
                (c > 0.0).then(|| (phi0 - phi).tan().asinh())
            }
            Self::ConstantAzimuth { .. } => None,
        }
    }

    /// Residual of the orbit relation in the form it is stated.
    pub fn residual(&self, tau: f64, phi: f64) -> f64 {
        match *self {
            Self::Equatorial => tau.tanh(),
            Self::Positive { k, phi0 } => tau.tanh() - k * (phi0 - phi).sin(),
            Self::Negative { kappa, phi0 } => (phi0 - phi).sin() - kappa * tau.tanh(),
            Self::Zero { phi0 } => tau.tanh() - (phi0 - phi).sin(),
            Self::ConstantAzimuth { phi0 } => (phi - phi0).sin(),
        }
    }
}

/// Conic parameters of the τ ≡ 0 orbit, 1/tanh²r = cos²φ/B² + sin²φ/A².
pub fn orbit_conic(e: f64, l_sq: f64, params: &ModelParams) -> Result<ConicParams> {
    if !(l_sq > 0.0) {
        return Err(Error::InvalidParameter(format!("conic orbits need L^2 > 0 (got {l_sq})")));
    }
    let regime = admissible(e, l_sq, params)?;
    let (w, r) = (params.omega, params.radius);
    let r2 = r * r;
    let s = 2.0 * e * r2 + l_sq;
    let p = 1.0 / (e * r2 / l_sq + 0.5);
    let mut conic = match regime {
        RadialRegime::Circular => ConicParams { p, eps: 0.0, a_sq: p, b_sq: p, kind: ConicKind::Circle },
        _ => {
            let eps = (1.0 - 4.0 * w * w * r2 * r2 * l_sq / (s * s)).max(0.0).sqrt();
            ConicParams { p, eps, a_sq: p / (1.0 - eps), b_sq: p / (1.0 + eps), kind: ConicKind::None }
        }
    };
    if regime == RadialRegime::Threshold {
        conic.a_sq = 1.0;
    }
    conic.kind = conic_kind(&conic);
    Ok(conic)
}

pub fn conic_kind(c: &ConicParams) -> ConicKind {
    if c.eps == 0.0 || near(c.a_sq, c.b_sq, 1.0) {
        ConicKind::Circle
    } else if near(c.a_sq, 1.0, 1.0) {
        ConicKind::Equidistant
    } else if c.a_sq < 1.0 {
        ConicKind::Ellipse
    } else if c.b_sq < 1.0 {
        ConicKind::Ultraellipse
    } else {
        ConicKind::None
    }
}

/// (E, L²) producing a conic with the given (p, ε).
pub fn energy_for_conic(p: f64, eps: f64, params: &ModelParams) -> (f64, f64) {
    let r2 = params.radius * params.radius;
    let l_sq = params.omega * params.omega * r2 * r2 * p * p / (1.0 - eps * eps);
    (l_sq * (2.0 / p - 1.0) / (2.0 * r2), l_sq)
}

/// |1/tanh²r − cos²φ/B² − sin²φ/A²|.
pub fn conic_residual(r: f64, phi: f64, c: &ConicParams) -> f64 {
    (1.0 / r.tanh().powi(2) - phi.cos().powi(2) / c.b_sq - phi.sin().powi(2) / c.a_sq).abs()
}

/// Relative residual of the Beltrami-plane form x₂²/B² + x₃²/A² = R².
pub fn beltrami_conic_residual(x: &[f64; 3], c: &ConicParams, params: &ModelParams) -> f64 {
    let r2 = params.radius * params.radius;
    ((x[1] * x[1] / c.b_sq + x[2] * x[2] / c.a_sq) / r2 - 1.0).abs()
}

/// Outer radius on the τ ≡ 0 conic at azimuth φ, if the conic reaches it.
pub fn conic_radius(phi: f64, c: &ConicParams) -> Option<f64> {
    let inv = phi.cos().powi(2) / c.b_sq + phi.sin().powi(2) / c.a_sq;
    (inv > 1.0).then(|| (1.0 / inv.sqrt()).atanh())
}

/// Negative-L² orbit with p_φ = 0 on the quadric
/// z0² = a(z0² − R²) + b[(z1² + z2²)cosh c + 2 z1 z2 sinh c],
/// a = 1/2 − ER²/|L²|, b = √(a² + ω²R⁴/|L²|), c = 4√|L²| β.
/// Outer branch: coth²r = a + b cosh(2τ + c); inner branch: cot²χ = −a + b cosh(2μ + c).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeL2Trajectory {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub radius: f64,
}

pub fn trajectory_negative_l2(e: f64, l_sq: f64, beta: f64, params: &ModelParams) -> Result<NegativeL2Trajectory> {
    if !(l_sq < 0.0) {
        return Err(Error::InvalidParameter(format!("negative-L^2 trajectory needs L^2 < 0 (got {l_sq})")));
    }
    let m = -l_sq;
    let r2 = params.radius * params.radius;
    let a = 0.5 - e * r2 / m;
    let b = (a * a + params.omega * params.omega * r2 * r2 / m).sqrt();
    Ok(NegativeL2Trajectory { a, b, c: 4.0 * m.sqrt() * beta, radius: params.radius })
}

impl NegativeL2Trajectory {
    /// The orbit through a state with p_φ = 0; c is fitted from its position and
    /// the sign of p_r p_τ. Azimuth π maps to c → −c.
    pub fn through_state(state: &PhaseState, e: f64, l_sq: f64, params: &ModelParams) -> Result<Self> {
        let mut t = trajectory_negative_l2(e, l_sq, 0.0, params)?;
        let [q1, q2, phi, p1, p2, _] = state.to_array();
        let (lhs, orient) =
            if state.chart().is_outer() { (1.0 / q1.tanh().powi(2) - t.a, 1.0) } else { (1.0 / q1.tan().powi(2) + t.a, q1.signum()) };
        let x = (lhs / t.b).max(1.0);
        let y = (x * x - 1.0).sqrt();
        // Outer: d(coth²r)/dt ∝ −p_r and dτ/dt ∝ −p_τ. Inner: d(cot²χ)/dt ∝ p_χ cot χ and dμ/dt ∝ p_μ.
        let sign = orient * (p1 * p2).signum();
        let u = if sign >= 0.0 { (x + y).ln() } else { -(x + y).ln() };
        let c = u - 2.0 * q2;
        t.c = if phi.cos() < 0.0 { -c } else { c };
        Ok(t)
    }

    pub fn beta(&self, l_sq: f64) -> f64 {
        self.c / (4.0 * (-l_sq).sqrt())
    }

    pub fn outer_coth_sq(&self, tau: f64) -> f64 {
        self.a + self.b * (2.0 * tau + self.c).cosh()
    }

    pub fn inner_cot_sq(&self, mu: f64) -> f64 {
        -self.a + self.b * (2.0 * mu + self.c).cosh()
    }

    /// Outer radius at τ, where coth²r > 1.
    pub fn outer_r(&self, tau: f64) -> Option<f64> {
        let v = self.outer_coth_sq(tau);
        (v > 1.0).then(|| (1.0 / v.sqrt()).atanh())
    }

    pub fn inner_chi(&self, mu: f64) -> f64 {
        (1.0 / self.inner_cot_sq(mu).sqrt()).atan()
    }

    /// Edges of the τ gap for unbounded motion (cosh(2τ + c) ≥ (1 − a)/b).
    pub fn tau_min(&self) -> Option<(f64, f64)> {
        let k = (1.0 - self.a) / self.b;
        (k > 1.0).then(|| {
            let h = 0.5 * k.acosh();
            (-h - 0.5 * self.c, h - 0.5 * self.c)
        })
    }

    /// Quadric residual with denominators cleared, in units of R², for an
    /// embedded point in the z3 = 0 plane.
    pub fn quadric_residual(&self, z: &[f64; 4]) -> f64 {
        let r2 = self.radius * self.radius;
        let lhs = z[0] * z[0];
        let rhs = self.a * (z[0] * z[0] - r2)
            + self.b * ((z[1] * z[1] + z[2] * z[2]) * self.c.cosh() + 2.0 * z[1] * z[2] * self.c.sinh());
        (lhs - rhs) / r2
    }

    /// Cleared-denominator residual of the inner branch at (χ, μ):
    /// cos²χ − sin²χ(−a + b cosh(2μ + c)).
    pub fn inner_residual(&self, chi: f64, mu: f64) -> f64 {
        chi.cos().powi(2) - chi.sin().powi(2) * self.inner_cot_sq(mu)
    }

    pub fn outer_residual(&self, r: f64, tau: f64) -> f64 {
        r.cosh().powi(2) - r.sinh().powi(2) * self.outer_coth_sq(tau)
    }
}

/// Which coefficient multiplies the squared bracket in the L² = 0 orbit equation
/// coth²r = ω²R²/2E + K(2β − tan φ/p_φ)².
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroL2Form {
    /// K = R√E, a common but incorrect normalisation.
    RootEnergy,
    /// K = 2ER², which follows from the separated equations.
    Separated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroL2Trajectory {
    pub e: f64,
    pub pphi: f64,
    pub beta: f64,
    pub base: f64,
    pub k: f64,
}

pub fn trajectory_zero_l2(e: f64, pphi: f64, beta: f64, params: &ModelParams, form: ZeroL2Form) -> Result<ZeroL2Trajectory> {
    if !(e > 0.0) || pphi == 0.0 {
        return Err(Error::InvalidParameter("L^2 = 0 orbit equation needs E > 0 and p_phi != 0".into()));
    }
    let (w, r) = (params.omega, params.radius);
    let k = match form {
        ZeroL2Form::RootEnergy => r * e.sqrt(),
        ZeroL2Form::Separated => 2.0 * e * r * r,
    };
    Ok(ZeroL2Trajectory { e, pphi, beta, base: w * w * r * r / (2.0 * e), k })
}

impl ZeroL2Trajectory {
    pub fn coth_sq(&self, phi: f64) -> f64 {
        self.base + self.k * (2.0 * self.beta - phi.tan() / self.pphi).powi(2)
    }

    pub fn r(&self, phi: f64) -> Option<f64> {
        let v = self.coth_sq(phi);
        (v > 1.0).then(|| (1.0 / v.sqrt()).atanh())
    }
}

pub fn classify(e: f64, l_sq: f64, params: &ModelParams) -> OrbitClassification {
    let regime = classify_regime(e, l_sq, params);
    if regime == RadialRegime::Inadmissible || !e.is_finite() || !l_sq.is_finite() {
        return OrbitClassification {
            regime: RadialRegime::Inadmissible,
            conic: None,
            r_min: None,
            r_max: None,
            chi_max: None,
            period: None,
            carrier: None,
        };
    }
    let radii = turning_radii(e, l_sq, params).ok();
    let conic = if l_sq > 0.0 && !near(l_sq, 0.0, params.l_sq_ceiling()) { orbit_conic(e, l_sq, params).ok() } else { None };
    let carrier = if near(l_sq, 0.0, params.l_sq_ceiling()) {
        Carrier::HyperbolicCylinder
    } else if l_sq < 0.0 {
        Carrier::OneSheeted
    } else {
        Carrier::TwoSheetedUpper
    };
    OrbitClassification {
        regime,
        conic,
        r_min: radii.and_then(|t| t.r_min),
        r_max: radii.and_then(|t| t.r_max),
        chi_max: radii.and_then(|t| t.chi_max),
        period: if regime.is_bounded() { Some(period(e, params)) } else { None },
        carrier: Some(carrier),
    }
}

/// T = π / (ω √(1 − 2E/ω²R²)), the radial period of every bounded regime.
pub fn period(e: f64, params: &ModelParams) -> f64 {
    PI / (params.omega * (1.0 - e / params.threshold_energy()).sqrt())
}

/// A phase state on the orbit family (E, L²): for L² > 0 the τ ≡ 0 pericentre,
/// for L² < 0 the outer turning point with p_φ = 0 (or an inbound point at r = 1
/// when unbounded), for L² = 0 radial motion from r_max (or inbound from r = 1).
pub fn analytic_initial_state(e: f64, l_sq: f64, params: &ModelParams) -> Result<PhaseState> {
    params.validate()?;
    let regime = admissible(e, l_sq, params)?;
    let radii = turning_radii(e, l_sq, params)?;
    // H = p_r²/(2R²) + U_eff on a τ = 0, p_φ² = L² or p_τ² = −L² slice.
    let inbound = |r: f64| -> Result<f64> {
        let u = effective_potential(r, l_sq, params)?;
        Ok(-params.radius * (2.0 * (e - u)).max(0.0).sqrt())
    };
    match regime {
        RadialRegime::ZeroL2Bounded | RadialRegime::ZeroL2Unbounded => {
            if let Some(r) = radii.r_max {
                if r > 0.0 {
                    return PhaseState::outer(r, 0.0, 0.0, 0.0, 0.0, 0.0);
                }
                return Err(Error::Singular("L^2 = 0 at E = 0 is the rest point at the origin".into()));
            }
            PhaseState::outer(1.0, 0.0, 0.0, inbound(1.0)?, 0.0, 0.0)
        }
        RadialRegime::NegL2Bounded | RadialRegime::NegL2Unbounded => {
            let pt = (-l_sq).sqrt();
            match radii.r_max {
                Some(r) => PhaseState::outer(r, 0.0, 0.0, 0.0, pt, 0.0),
                None => PhaseState::outer(1.0, 0.0, 0.0, inbound(1.0)?, pt, 0.0),
            }
        }
        _ => {
            let r = radii.r_min.expect("positive L^2 orbits have a pericentre");
            PhaseState::outer(r, 0.0, 0.0, 0.0, 0.0, l_sq.sqrt())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub e: f64,
    pub l_sq: f64,
    pub omega: f64,
    pub p_flat: f64,
    pub eps_flat: f64,
    pub radii: Vec<f64>,
    /// R² p(R) and ε(R) at each radius.
    pub scaled_p: Vec<f64>,
    pub eps: Vec<f64>,
    pub deviations: Vec<f64>,
    /// Least-squares slope of log(deviation) against log(R).
    pub slope: f64,
}

/// Deviation of the Beltrami image x = R tanh r (cos φ, sin φ) of the τ ≡ 0
/// orbit from the flat ellipse x₂²/B̃² + x₃²/Ã² = 1 with p̃ = L²/E and
/// ε̃ = √(1 − ω²L²/E²), as R grows with E, L², ω fixed.
pub fn contraction_check(e: f64, l_sq: f64, omega: f64, radii: &[f64]) -> Result<ConvergenceReport> {
    if !(l_sq > 0.0 && e > 0.0) || radii.len() < 2 {
        return Err(Error::InvalidParameter("contraction check needs E > 0, L^2 > 0 and at least two radii".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("radii must be increasing".into()));
    }
    let p_flat = l_sq / e;
    let disc = 1.0 - omega * omega * l_sq / (e * e);
    if disc < 0.0 {
        return Err(Error::Inadmissible { e, l_sq, reason: "flat-limit energy below w*sqrt(L^2)".into() });
    }
    let eps_flat = disc.sqrt();
    let (a_flat, b_flat) = (p_flat / (1.0 - eps_flat), p_flat / (1.0 + eps_flat));
    let mut scaled_p = Vec::new();
    let mut eps = Vec::new();
    let mut deviations = Vec::new();
    for &radius in radii {
        let params = ModelParams::new(omega, radius)?;
        let c = orbit_conic(e, l_sq, &params)?;
        scaled_p.push(c.p * radius * radius);
        eps.push(c.eps);
        let mut worst = 0.0f64;
        for i in 0..ORBIT_SAMPLES {
            let phi = 2.0 * PI * i as f64 / ORBIT_SAMPLES as f64;
            let r = conic_radius(phi, &c).ok_or_else(|| Error::Singular("flat-limit orbit must be closed".into()))?;
            let rho = radius * r.tanh();
            let (x2, x3) = (rho * phi.cos(), rho * phi.sin());
            worst = worst.max((x2 * x2 / b_flat + x3 * x3 / a_flat - 1.0).abs());
        }
        deviations.push(worst);
    }
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = deviations.iter().map(|d| d.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(ConvergenceReport { e, l_sq, omega, p_flat, eps_flat, radii: radii.to_vec(), scaled_p, eps, deviations, slope: sxy / sxx })
}

/// Uniform parameter grid on [a, b] with n points.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}
