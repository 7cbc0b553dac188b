//! Chart atlas of the hyperboloid z0² + z1² − z2² − z3² = R².
//!
//! Outer charts cover |z0| ≥ R with coordinates (r, τ, φ), inner charts cover
//! |z0| < R with (χ, μ, φ). The ambient metric is diag(−1, −1, 1, 1); chart
//! momenta are lifted to ambient momenta p = η J g⁻¹ p_chart.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ambient metric signature.
pub const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Tolerance used when deciding whether a point lies on the hyperboloid.
pub const ON_SURFACE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub omega: f64,
    pub radius: f64,
}

impl ModelParams {
    pub fn new(omega: f64, radius: f64) -> Result<Self> {
        let p = Self { omega, radius };
        p.validate()?;
        Ok(p)
    }

    /// ω = R = 1.
    pub fn unit() -> Self {
        Self { omega: 1.0, radius: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }

    /// ω²R²/2, the asymptotic height of the potential.
    pub fn threshold_energy(&self) -> f64 {
        0.5 * self.omega * self.omega * self.radius * self.radius
    }

    /// ω²R⁴, the upper bound on L² for an attractive effective potential.
    pub fn l_sq_ceiling(&self) -> f64 {
        self.omega * self.omega * self.radius.powi(4)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChartId {
    OuterPlus,
    OuterMinus,
    InnerPlus,
    InnerMinus,
}

impl ChartId {
    pub fn is_outer(self) -> bool {
        matches!(self, ChartId::OuterPlus | ChartId::OuterMinus)
    }

    /// Sign of z0 on this chart.
    pub fn sign(self) -> f64 {
        match self {
            ChartId::OuterPlus | ChartId::InnerPlus => 1.0,
            ChartId::OuterMinus | ChartId::InnerMinus => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChartId::OuterPlus => "outer+",
            ChartId::OuterMinus => "outer-",
            ChartId::InnerPlus => "inner+",
            ChartId::InnerMinus => "inner-",
        }
    }

    fn with_family(outer: bool, sign: f64) -> Self {
        match (outer, sign >= 0.0) {
            (true, true) => ChartId::OuterPlus,
            (true, false) => ChartId::OuterMinus,
            (false, true) => ChartId::InnerPlus,
            (false, false) => ChartId::InnerMinus,
        }
    }
}

/// Chart coordinates: (r, τ, φ) on outer charts, (χ, μ, φ) on inner charts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: ChartId,
    pub q1: f64,
    pub q2: f64,
    pub phi: f64,
}

impl ChartPoint {
    pub fn new(chart: ChartId, q1: f64, q2: f64, phi: f64) -> Result<Self> {
        let pt = Self { chart, q1, q2, phi: phi.rem_euclid(TAU) };
        pt.validate()?;
        Ok(pt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q1.is_finite() && self.q2.is_finite() && self.phi.is_finite()) {
            return Err(Error::NonFinite("chart point".into()));
        }
        if self.chart.is_outer() {
            if self.q1 < 0.0 {
                return Err(Error::InvalidParameter(format!("r must be non-negative, got {}", self.q1)));
            }
        } else if self.q1.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidParameter(format!("chi must lie in (-pi/2, pi/2), got {}", self.q1)));
        }
        Ok(())
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.q1, self.q2, self.phi]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub z: [f64; 4],
}

impl EmbeddingPoint {
    pub fn new(z: [f64; 4]) -> Self {
        Self { z }
    }

    /// z0² + z1² − z2² − z3², equal to R² on the surface.
    pub fn quadric(&self) -> f64 {
        quadric(&self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub point: ChartPoint,
    pub p1: f64,
    pub p2: f64,
    pub pphi: f64,
}

impl PhaseState {
    pub fn new(point: ChartPoint, p1: f64, p2: f64, pphi: f64) -> Result<Self> {
        let s = Self { point, p1, p2, pphi };
        s.validate()?;
        Ok(s)
    }

    /// Outer-chart state on the upper sheet.
    pub fn outer(r: f64, tau: f64, phi: f64, pr: f64, ptau: f64, pphi: f64) -> Result<Self> {
        Self::new(ChartPoint::new(ChartId::OuterPlus, r, tau, phi)?, pr, ptau, pphi)
    }

    /// Inner-chart state with z0 > 0.
    pub fn inner(chi: f64, mu: f64, phi: f64, pchi: f64, pmu: f64, pphi: f64) -> Result<Self> {
        Self::new(ChartPoint::new(ChartId::InnerPlus, chi, mu, phi)?, pchi, pmu, pphi)
    }

    pub fn validate(&self) -> Result<()> {
        self.point.validate()?;
        if !(self.p1.is_finite() && self.p2.is_finite() && self.pphi.is_finite()) {
            return Err(Error::NonFinite("momenta".into()));
        }
        if self.point.q1 == 0.0 && (self.p2 != 0.0 || self.pphi != 0.0) {
            return Err(Error::Singular("angular momenta at the chart origin".into()));
        }
        if !self.point.chart.is_outer() && self.point.q2 == 0.0 && self.pphi != 0.0 {
            return Err(Error::Singular("azimuthal momentum on the mu = 0 axis".into()));
        }
        Ok(())
    }

    pub fn chart(&self) -> ChartId {
        self.point.chart
    }

    /// (q1, q2, φ, p1, p2, pφ).
    pub fn to_array(&self) -> [f64; 6] {
        [self.point.q1, self.point.q2, self.point.phi, self.p1, self.p2, self.pphi]
    }

    /// Builds a state without range checks; φ is kept as given.
    pub fn from_array(chart: ChartId, x: &[f64; 6]) -> Self {
        Self {
            point: ChartPoint { chart, q1: x[0], q2: x[1], phi: x[2] },
            p1: x[3],
            p2: x[4],
            pphi: x[5],
        }
    }

    pub fn with_normalized_phi(mut self) -> Self {
        self.point.phi = self.point.phi.rem_euclid(TAU);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPhase {
    pub z: EmbeddingPoint,
    pub p: [f64; 4],
}

impl EmbeddingPhase {
    pub fn new(z: [f64; 4], p: [f64; 4]) -> Self {
        Self { z: EmbeddingPoint::new(z), p }
    }

    /// Σ z_μ p_μ; vanishes for momenta tangent to the surface.
    pub fn tangency(&self) -> f64 {
        (0..4).map(|i| self.z.z[i] * self.p[i]).sum()
    }
}

pub fn quadric(z: &[f64; 4]) -> f64 {
    z[0] * z[0] + z[1] * z[1] - z[2] * z[2] - z[3] * z[3]
}

/// Relative constraint residual |z·z − R²| / R².
pub fn constraint_residual(z: &EmbeddingPoint, params: &ModelParams) -> f64 {
    let r2 = params.radius * params.radius;
    (z.quadric() - r2).abs() / r2
}

pub(crate) fn embed_s<S: Scalar>(chart: ChartId, q: &[S; 3], radius: f64) -> [S; 4] {
    let s = chart.sign();
    let (c, sp) = (q[2].cos(), q[2].sin());
    if chart.is_outer() {
        let (sh, ch) = (q[0].sinh(), q[0].cosh());
        let (st, ct) = (q[1].sinh(), q[1].cosh());
        [ch * (s * radius), sh * st * radius, sh * ct * c * radius, sh * ct * sp * radius]
    } else {
        let (sx, cx) = (q[0].sin(), q[0].cos());
        let (sm, cm) = (q[1].sinh(), q[1].cosh());
        [cx * (s * radius), sx * cm * radius, sx * sm * c * radius, sx * sm * sp * radius]
    }
}

pub fn embed(point: &ChartPoint, params: &ModelParams) -> EmbeddingPoint {
    EmbeddingPoint::new(embed_s(point.chart, &point.coords(), params.radius))
}

pub fn chart_select(z: &EmbeddingPoint, params: &ModelParams) -> Result<ChartId> {
    let res = constraint_residual(z, params);
    if !(res <= ON_SURFACE_TOL) {
        return Err(Error::ConstraintViolation(res));
    }
    let outer = z.z[0].abs() >= params.radius;
    Ok(ChartId::with_family(outer, z.z[0]))
}

pub fn unembed(z: &EmbeddingPoint, chart: ChartId, params: &ModelParams) -> Result<ChartPoint> {
    let res = constraint_residual(z, params);
    if !(res <= ON_SURFACE_TOL) {
        return Err(Error::ConstraintViolation(res));
    }
    let rad = params.radius;
    let [z0, z1, z2, z3] = z.z;
    let tol = ON_SURFACE_TOL * rad;
    if z0 * chart.sign() < 0.0 && z0.abs() > tol {
        return Err(Error::ChartMismatch(chart.name()));
    }
    if chart.is_outer() {
        if z0.abs() < rad - tol {
            return Err(Error::ChartMismatch(chart.name()));
        }
        let transverse = z2 * z2 + z3 * z3;
        let diff = transverse - z1 * z1;
        // Pick the sinh²r estimate with the smaller cancellation.
        let sinh_sq = if transverse <= 4.0 * diff.abs() {
            diff.max(0.0) / (rad * rad)
        } else {
            ((z0 * z0 - rad * rad) / (rad * rad)).max(0.0)
        };
        let sinh_r = sinh_sq.sqrt();
        if sinh_r == 0.0 {
            return Ok(ChartPoint { chart, q1: 0.0, q2: 0.0, phi: 0.0 });
        }
        let r = sinh_r.asinh();
        let tau = (z1 / (rad * sinh_r)).asinh();
        let phi = z3.atan2(z2).rem_euclid(TAU);
        Ok(ChartPoint { chart, q1: r, q2: tau, phi })
    } else {
        if z0.abs() > rad + tol {
            return Err(Error::ChartMismatch(chart.name()));
        }
        let rho = (rad * rad - z0 * z0).max(0.0).sqrt();
        let chi = if z1 < 0.0 { -rho } else { rho }.atan2(z0.abs());
        let sin_chi = chi.sin();
        if sin_chi == 0.0 {
            return Ok(ChartPoint { chart, q1: 0.0, q2: 0.0, phi: 0.0 });
        }
        let (a, b) = (z2 / (rad * sin_chi), z3 / (rad * sin_chi));
        let sinh_mu = a.hypot(b);
        let mu = sinh_mu.asinh();
        let phi = if sinh_mu == 0.0 { 0.0 } else { b.atan2(a).rem_euclid(TAU) };
        Ok(ChartPoint { chart, q1: chi, q2: mu, phi })
    }
}

/// Ambient momenta p = η J g⁻¹ p_chart, generic over the scalar type.
pub(crate) fn momentum_lift_s<S: Scalar>(chart: ChartId, q: &[S; 3], p: &[S; 3], radius: f64) -> [S; 4] {
    let s = chart.sign();
    let (c, sp) = (q[2].cos(), q[2].sin());
    let zero = S::cst(0.0);
    let mut v = if chart.is_outer() {
        let (sh, ch) = (q[0].sinh(), q[0].cosh());
        let (st, ct) = (q[1].sinh(), q[1].cosh());
        let mut v = [sh * s * p[0], ch * st * p[0], ch * ct * c * p[0], ch * ct * sp * p[0]];
        if sh.value() != 0.0 {
            let a = p[1] / sh;
            let b = p[2] / (sh * ct);
            v[1] = v[1] - ct * a;
            v[2] = v[2] - st * c * a - sp * b;
            v[3] = v[3] - st * sp * a + c * b;
        }
        v
    } else {
        let (sx, cx) = (q[0].sin(), q[0].cos());
        let (sm, cm) = (q[1].sinh(), q[1].cosh());
        let mut v = [sx * s * p[0], -(cx * cm * p[0]), -(cx * sm * c * p[0]), -(cx * sm * sp * p[0])];
        if sx.value() != 0.0 {
            let a = p[1] / sx;
            v[1] = v[1] + sm * a;
            v[2] = v[2] + cm * c * a;
            v[3] = v[3] + cm * sp * a;
            if sm.value() != 0.0 {
                let b = p[2] / (sx * sm);
                v[2] = v[2] - sp * b;
                v[3] = v[3] + c * b;
            }
        }
        v
    };
    for (i, vi) in v.iter_mut().enumerate() {
        *vi = if ETA[i] < 0.0 { zero - *vi / radius } else { *vi / radius };
    }
    v
}

pub fn momentum_lift(state: &PhaseState, params: &ModelParams) -> Result<EmbeddingPhase> {
    state.validate()?;
    let q = state.point.coords();
    let z = embed_s(state.point.chart, &q, params.radius);
    let p = momentum_lift_s(state.point.chart, &q, &[state.p1, state.p2, state.pphi], params.radius);
    Ok(EmbeddingPhase::new(z, p))
}

/// Jacobian columns ∂z/∂q_a at a chart point.
fn embedding_jacobian(point: &ChartPoint, params: &ModelParams) -> [[f64; 4]; 3] {
    use crate::scalar::Dual;
    let q = Dual::<3>::seed(&point.coords());
    let z = embed_s(point.chart, &q, params.radius);
    let mut cols = [[0.0; 4]; 3];
    for (mu, zm) in z.iter().enumerate() {
        for a in 0..3 {
            cols[a][mu] = zm.d[a];
        }
    }
    cols
}

/// Chart momenta p_a = Σ_μ p_μ ∂z^μ/∂q^a at a given chart point.
pub fn chart_momenta(p: &[f64; 4], point: &ChartPoint, params: &ModelParams) -> [f64; 3] {
    let cols = embedding_jacobian(point, params);
    let mut out = [0.0; 3];
    for a in 0..3 {
        out[a] = (0..4).map(|mu| p[mu] * cols[a][mu]).sum();
    }
    out
}

/// Chart representation of an ambient phase point in the chart `chart_select` picks.
pub fn to_phase_state(ph: &EmbeddingPhase, params: &ModelParams) -> Result<PhaseState> {
    let chart = chart_select(&ph.z, params)?;
    to_phase_state_in(ph, chart, params)
}

pub fn to_phase_state_in(ph: &EmbeddingPhase, chart: ChartId, params: &ModelParams) -> Result<PhaseState> {
    let point = unembed(&ph.z, chart, params)?;
    let [p1, p2, pphi] = chart_momenta(&ph.p, &point, params);
    Ok(PhaseState { point, p1, p2, pphi })
}

pub fn beltrami(z: &EmbeddingPoint, params: &ModelParams) -> Result<[f64; 3]> {
    let z0 = z.z[0];
    if z0 == 0.0 {
        return Err(Error::Singular("Beltrami projection undefined at z0 = 0".into()));
    }
    let k = params.radius / z0;
    Ok([k * z.z[1], k * z.z[2], k * z.z[3]])
}

/// Re-expresses a point in the chart family selected by its embedding; a point
/// exactly on |z0| = R moves to the opposite family.
pub fn chart_transition(point: &ChartPoint, params: &ModelParams) -> Result<ChartPoint> {
    point.validate()?;
    let z = embed(point, params);
    let mut chart = chart_select(&z, params)?;
    if z.z[0].abs() == params.radius && chart.is_outer() == point.chart.is_outer() {
        chart = ChartId::with_family(!point.chart.is_outer(), z.z[0]);
    }
    unembed(&z, chart, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn embed_examples() {
        let p = ModelParams::unit();
        let o = embed(&ChartPoint::new(ChartId::OuterPlus, 0.0, 0.7, 1.1).unwrap(), &p);
        assert!(close(&o.z, &[1.0, 0.0, 0.0, 0.0], 1e-15));
        let a = embed(&ChartPoint::new(ChartId::OuterPlus, 1f64.asinh(), 0.0, 0.0).unwrap(), &p);
        assert!(close(&a.z, &[SQRT_2, 0.0, 1.0, 0.0], 1e-15));
        assert!(constraint_residual(&a, &p) < 1e-15);
        let b = embed(&ChartPoint::new(ChartId::InnerPlus, FRAC_PI_4, 0.0, 0.0).unwrap(), &p);
        assert!(close(&b.z, &[SQRT_2 / 2.0, SQRT_2 / 2.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn chart_select_examples() {
        let p = ModelParams::unit();
        let sel = |z| chart_select(&EmbeddingPoint::new(z), &p).unwrap();
        assert_eq!(sel([2.0, 0.0, 3f64.sqrt(), 0.0]), ChartId::OuterPlus);
        assert_eq!(sel([SQRT_2 / 2.0, SQRT_2 / 2.0, 0.0, 0.0]), ChartId::InnerPlus);
        assert_eq!(sel([1.0, 0.0, 0.0, 0.0]), ChartId::OuterPlus);
        assert_eq!(sel([-2.0, 0.0, 3f64.sqrt(), 0.0]), ChartId::OuterMinus);
        assert!(chart_select(&EmbeddingPoint::new([2.0, 0.0, 0.0, 0.0]), &p).is_err());
    }

    #[test]
    fn unembed_examples() {
        let p = ModelParams::unit();
        let o = unembed(&EmbeddingPoint::new([1.0, 0.0, 0.0, 0.0]), ChartId::OuterPlus, &p).unwrap();
        assert_eq!(o.coords(), [0.0, 0.0, 0.0]);
        let a = unembed(&EmbeddingPoint::new([SQRT_2, 0.0, 1.0, 0.0]), ChartId::OuterPlus, &p).unwrap();
        assert!(close(&a.coords(), &[1f64.asinh(), 0.0, 0.0], 1e-15));
        let b = unembed(&EmbeddingPoint::new([SQRT_2 / 2.0, SQRT_2 / 2.0, 0.0, 0.0]), ChartId::InnerPlus, &p)
            .unwrap();
        assert!(close(&b.coords(), &[FRAC_PI_4, 0.0, 0.0], 1e-15));
        assert!(unembed(&EmbeddingPoint::new([SQRT_2, 0.0, 1.0, 0.0]), ChartId::InnerPlus, &p).is_err());
    }

    #[test]
    fn momentum_lift_examples() {
        let p = ModelParams::unit();
        let big_p = 0.8;
        let a = momentum_lift(&PhaseState::outer(1.0, 0.0, 0.0, big_p, 0.0, 0.0).unwrap(), &p).unwrap();
        assert!(close(&a.p, &[-1f64.sinh() * big_p, 0.0, 1f64.cosh() * big_p, 0.0], 1e-15));
        let zero = momentum_lift(&PhaseState::outer(0.4, 0.3, 2.0, 0.0, 0.0, 0.0).unwrap(), &p).unwrap();
        assert_eq!(zero.p, [0.0; 4]);
        let q = 1.3;
        let c = momentum_lift(&PhaseState::outer(1.0, 0.0, FRAC_PI_2, 0.0, 0.0, q).unwrap(), &p).unwrap();
        assert!(close(&c.p, &[0.0, 0.0, -q / 1f64.sinh(), 0.0], 1e-15));
    }

    #[test]
    fn lifted_momenta_are_tangent_with_plain_sum() {
        let p = ModelParams::new(1.0, 1.7).unwrap();
        let s = PhaseState::outer(0.9, -0.4, 1.2, 0.3, -1.1, 0.6).unwrap();
        let ph = momentum_lift(&s, &p).unwrap();
        assert!(ph.tangency().abs() < 1e-12);
        let [z0, z1, z2, z3] = ph.z.z;
        let signed = z0 * ph.p[0] + z1 * ph.p[1] - z2 * ph.p[2] - z3 * ph.p[3];
        assert!(signed.abs() > 1e-3);
    }

    #[test]
    fn beltrami_examples() {
        let p = ModelParams::unit();
        assert_eq!(beltrami(&EmbeddingPoint::new([1.0, 0.0, 0.0, 0.0]), &p).unwrap(), [0.0; 3]);
        let b = beltrami(&EmbeddingPoint::new([2.0, 0.0, 3f64.sqrt(), 0.0]), &p).unwrap();
        assert!(close(&b, &[0.0, 3f64.sqrt() / 2.0, 0.0], 1e-15));
        let c = beltrami(&EmbeddingPoint::new([SQRT_2, 0.0, 1.0, 0.0]), &p).unwrap();
        assert!(close(&c, &[0.0, 1.0 / SQRT_2, 0.0], 1e-15));
        assert!(beltrami(&EmbeddingPoint::new([0.0, 1.0, 0.0, 0.0]), &p).is_err());
    }

    #[test]
    fn chart_transition_examples() {
        let p = ModelParams::unit();
        let boundary = ChartPoint::new(ChartId::OuterPlus, 0.0, 0.0, 0.0).unwrap();
        let t = chart_transition(&boundary, &p).unwrap();
        assert_eq!(t.chart, ChartId::InnerPlus);
        assert_eq!(t.q1, 0.0);
        let inner = ChartPoint::new(ChartId::InnerPlus, FRAC_PI_4, 0.0, 0.0).unwrap();
        let same = chart_transition(&inner, &p).unwrap();
        assert_eq!(same.chart, ChartId::InnerPlus);
        assert!(close(&same.coords(), &inner.coords(), 1e-15));

        // Near-boundary point: inner → outer → inner round trip.
        let near = ChartPoint::new(ChartId::InnerPlus, 1e-4, 0.3, 0.5).unwrap();
        let back = chart_transition(&near, &p).unwrap();
        assert!(close(&back.coords(), &near.coords(), 1e-9));
    }

    #[test]
    fn chart_momenta_invert_lift() {
        let p = ModelParams::new(1.0, 2.0).unwrap();
        for s in [
            PhaseState::outer(0.7, 0.5, 4.0, -0.2, 0.9, 1.4).unwrap(),
            PhaseState::inner(-0.6, 0.8, 2.5, 0.4, -0.7, 0.3).unwrap(),
        ] {
            let ph = momentum_lift(&s, &p).unwrap();
            let back = to_phase_state_in(&ph, s.chart(), &p).unwrap();
            assert!(close(&back.to_array(), &s.to_array(), 1e-12), "{back:?} vs {s:?}");
        }
    }

    #[test]
    fn degenerate_initial_data_rejected() {
        assert!(PhaseState::outer(0.0, 0.0, 0.0, 1.0, 0.5, 0.0).is_err());
        assert!(PhaseState::outer(0.0, 0.0, 0.0, 1.0, 0.0, 0.0).is_ok());
    }
}
