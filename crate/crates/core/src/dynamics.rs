//! Hamiltonians, canonical equations of motion and adaptive integration.
//!
//! Integration runs in chart coordinates away from the null set |z0| = R and
//! hands over to a constrained ambient formulation inside a thin band around
//! it, where both chart families degenerate. Events are located by bisection
//! on single re-taken steps.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::dop853;
use crate::error::{Error, Result};
use crate::geometry::{
    chart_momenta, chart_transition, constraint_residual, embed_s, momentum_lift, momentum_lift_s, quadric,
    to_phase_state, ChartId, ChartPoint, EmbeddingPhase, ModelParams, PhaseState, ETA,
};
use crate::invariants::{HamiltonianMode, InvariantSet};
use crate::numerics::bisect;
use crate::scalar::{Dual, Scalar};

/// Relative constraint drift that aborts an ambient step.
pub const CONSTRAINT_BUDGET: f64 = 1e-8;
const EVENT_TIME_TOL: f64 = 1e-12;

pub fn potential(point: &ChartPoint, params: &ModelParams) -> f64 {
    let k = params.threshold_energy();
    if point.chart.is_outer() {
        k * point.q1.tanh().powi(2)
    } else {
        -k * point.q1.tan().powi(2)
    }
}

/// Chart Hamiltonian on (q1, q2, φ, p1, p2, pφ); angular terms are dropped when
/// their coordinate factor vanishes, which is only legitimate for zero momenta.
pub(crate) fn hamiltonian_s<S: Scalar>(chart: ChartId, x: &[S; 6], params: &ModelParams, mode: HamiltonianMode) -> S {
    let r2 = params.radius * params.radius;
    let k = params.threshold_energy();
    let zero = S::cst(0.0);
    let osc = mode == HamiltonianMode::Oscillator;
    if chart.is_outer() {
        let sh = x[0].sinh();
        let ang = if sh.value() == 0.0 {
            zero
        } else {
            let ct = x[1].cosh();
            (x[5] * x[5] / (ct * ct) - x[4] * x[4]) / (sh * sh)
        };
        let kin = (x[3] * x[3] + ang) / (2.0 * r2);
        if osc {
            kin + x[0].tanh().sq() * k
        } else {
            kin
        }
    } else {
        let sx = x[0].sin();
        let ang = if sx.value() == 0.0 {
            zero
        } else {
            let sm = x[1].sinh();
            let az = if sm.value() == 0.0 { zero } else { x[5] * x[5] / (sm * sm) };
            (x[4] * x[4] + az) / (sx * sx)
        };
        let kin = (ang - x[3] * x[3]) / (2.0 * r2);
        if osc {
            kin - x[0].tan().sq() * k
        } else {
            kin
        }
    }
}

pub fn hamiltonian(state: &PhaseState, params: &ModelParams, mode: HamiltonianMode) -> Result<f64> {
    state.validate()?;
    if !state.chart().is_outer() && state.point.q2 == 0.0 && state.pphi != 0.0 {
        return Err(Error::Singular("azimuthal momentum on the mu = 0 axis".into()));
    }
    let h = hamiltonian_s(state.chart(), &state.to_array(), params, mode);
    if !h.is_finite() {
        return Err(Error::NonFinite("hamiltonian".into()));
    }
    Ok(h)
}

/// Time derivative of (q1, q2, φ, p1, p2, pφ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDerivative {
    pub dq: [f64; 3],
    pub dp: [f64; 3],
}

fn chart_rhs(chart: ChartId, x: &[f64; 6], params: &ModelParams, mode: HamiltonianMode) -> [f64; 6] {
    let h = hamiltonian_s(chart, &Dual::<6>::seed(x), params, mode);
    let g = h.d;
    [g[3], g[4], g[5], -g[0], -g[1], -g[2]]
}

pub fn equations_of_motion(state: &PhaseState, params: &ModelParams, mode: HamiltonianMode) -> Result<PhaseDerivative> {
    state.validate()?;
    let d = chart_rhs(state.chart(), &state.to_array(), params, mode);
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("equations of motion are not finite at this state".into()));
    }
    Ok(PhaseDerivative { dq: [d[0], d[1], d[2]], dp: [d[3], d[4], d[5]] })
}

fn eta_dot(a: &[f64], b: &[f64]) -> f64 {
    (0..4).map(|i| ETA[i] * a[i] * b[i]).sum()
}

/// Constrained ambient flow on y = (z, ż).
fn ambient_rhs(y: &[f64; 8], params: &ModelParams, mode: HamiltonianMode) -> [f64; 8] {
    let (z, v) = (&y[..4], &y[4..]);
    let lambda = eta_dot(v, v) / (params.radius * params.radius);
    let mut out = [0.0; 8];
    out[..4].copy_from_slice(v);
    for i in 0..4 {
        out[4 + i] = lambda * z[i];
    }
    if mode == HamiltonianMode::Oscillator {
        let k2 = 2.0 * params.threshold_energy();
        let z0sq = z[0] * z[0];
        let num = z[2] * z[2] + z[3] * z[3] - z[1] * z[1];
        let grad = [-k2 * num / (z0sq * z[0]), -k2 * z[1] / z0sq, k2 * z[2] / z0sq, k2 * z[3] / z0sq];
        for i in 0..4 {
            out[4 + i] -= ETA[i] * grad[i];
        }
    }
    out
}

fn project_ambient(y: &mut [f64; 8], params: &ModelParams) {
    let q = quadric(&[y[0], y[1], y[2], y[3]]);
    let s = params.radius / q.sqrt();
    for zi in y.iter_mut().take(4) {
        *zi *= s;
    }
    let (z, v) = y.split_at_mut(4);
    let c = eta_dot(z, v) / eta_dot(z, z);
    for i in 0..4 {
        v[i] -= c * z[i];
    }
}

fn ambient_to_phase(y: &[f64; 8]) -> EmbeddingPhase {
    EmbeddingPhase::new([y[0], y[1], y[2], y[3]], [-y[4], -y[5], y[6], y[7]])
}

fn phase_to_ambient(ph: &EmbeddingPhase) -> [f64; 8] {
    let z = ph.z.z;
    [z[0], z[1], z[2], z[3], -ph.p[0], -ph.p[1], ph.p[2], ph.p[3]]
}

fn chart_to_phase(chart: ChartId, x: &[f64; 6], params: &ModelParams) -> EmbeddingPhase {
    let q = [x[0], x[1], x[2]];
    let z = embed_s(chart, &q, params.radius);
    let p = momentum_lift_s(chart, &q, &[x[3], x[4], x[5]], params.radius);
    EmbeddingPhase::new(z, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Chart coordinates with ambient hand-off inside the boundary band.
    ChartSwitching,
    /// Constrained ambient integration throughout.
    Ambient,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_span: (f64, f64),
    /// Half-width of the band around |z0| = R, in units of R, inside which no
    /// chart representation is integrated.
    pub boundary_band: f64,
    /// Half-width, in units of R, of the zone integrated in ambient form. Chart
    /// coordinates lose roughly 1/width digits of energy next to |z0| = R, so the
    /// hand-off happens well before the chart-switch band is reached.
    pub handoff_band: f64,
    /// Phase distance below which a return to the initial point is logged.
    pub closure_tol: f64,
    pub scheme: Scheme,
    pub max_steps: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 0.05,
            t_span: (0.0, 10.0),
            boundary_band: 1e-6,
            handoff_band: 0.1,
            closure_tol: 1e-6,
            scheme: Scheme::ChartSwitching,
            max_steps: 10_000_000,
        }
    }
}

impl IntegrationConfig {
    pub fn with_span(t0: f64, t1: f64) -> Self {
        Self { t_span: (t0, t1), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("boundary_band", self.boundary_band),
            ("handoff_band", self.handoff_band),
            ("closure_tol", self.closure_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.t_span.1 > self.t_span.0) || !self.t_span.0.is_finite() || !self.t_span.1.is_finite() {
            return Err(Error::InvalidParameter("t_span must satisfy t0 < t1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ChartCrossing,
    RadialTurningPoint,
    PeriodClosure,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    /// +1 when the event function rises through zero, −1 when it falls.
    /// Radial turning points with +1 are minima of |z0|.
    pub direction: i8,
    /// Phase distance to the initial point (closure events only).
    pub distance: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: PhaseState,
    pub ambient: EmbeddingPhase,
    pub invariants: InvariantSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub mode: HamiltonianMode,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

/// Euclidean distance between ambient phase points in (z/R, p).
pub fn phase_distance(a: &EmbeddingPhase, b: &EmbeddingPhase, params: &ModelParams) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        s += ((a.z.z[i] - b.z.z[i]) / params.radius).powi(2) + (a.p[i] - b.p[i]).powi(2);
    }
    s.sqrt()
}

impl Trajectory {
    pub fn events_of(&self, kind: EventKind) -> Vec<Event> {
        self.events.iter().copied().filter(|e| e.kind == kind).collect()
    }

    /// max_t |q(t) − q(0)| / max(|q(0)|, floor) for a named invariant.
    pub fn relative_drift(&self, name: &str, floor: f64) -> f64 {
        let pick = |s: &Sample| s.invariants.scalars().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v);
        let Some(q0) = self.samples.first().and_then(pick) else { return f64::NAN };
        let scale = q0.abs().max(floor);
        self.samples.iter().filter_map(pick).map(|q| (q - q0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.samples.iter().map(|s| constraint_residual(&s.ambient.z, &self.params)).fold(0.0, f64::max)
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }
}

/// Radial period from consecutive same-direction turning points.
pub fn measure_period(traj: &Trajectory) -> Option<f64> {
    for dir in [1, -1] {
        let ts: Vec<f64> = traj
            .events
            .iter()
            .filter(|e| e.kind == EventKind::RadialTurningPoint && e.direction == dir)
            .map(|e| e.t)
            .collect();
        if ts.len() >= 2 {
            return Some((ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64);
        }
    }
    None
}

#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Chart(ChartId),
    Ambient,
}

/// Sign tracker with a dead zone, so tangential contacts do not register.
struct SignWatch {
    last: i8,
    last_t: f64,
    prev: i8,
}

impl SignWatch {
    fn new(v: f64, dead: f64, t: f64) -> Self {
        let s = sign(v, dead);
        Self { last: s, last_t: t, prev: s }
    }
}

fn sign(v: f64, dead: f64) -> i8 {
    if v > dead {
        1
    } else if v < -dead {
        -1
    } else {
        0
    }
}

struct Integrator<'a> {
    params: &'a ModelParams,
    cfg: &'a IntegrationConfig,
    mode: HamiltonianMode,
    origin: EmbeddingPhase,
    origin_rate: [f64; 8],
    samples: Vec<Sample>,
    events: Vec<Event>,
}

impl<'a> Integrator<'a> {
    fn in_band(&self, ph: &EmbeddingPhase, factor: f64) -> bool {
        let width = self.cfg.boundary_band.max(self.cfg.handoff_band);
        (ph.z.z[0].abs() - self.params.radius).abs() < factor * width * self.params.radius
    }

    fn closure_coordinate(&self, ph: &EmbeddingPhase) -> f64 {
        let r = self.params.radius;
        let mut g = 0.0;
        for i in 0..4 {
            g += (ph.z.z[i] - self.origin.z.z[i]) / r * self.origin_rate[i] / r;
            g += (ph.p[i] - self.origin.p[i]) * self.origin_rate[4 + i] * ETA[i];
        }
        g
    }

    fn event_values(&self, ph: &EmbeddingPhase) -> [f64; 3] {
        [ph.z.z[0].abs() - self.params.radius, -ph.z.z[0] * ph.p[0], self.closure_coordinate(ph)]
    }

    fn dead_zones(&self, ph: &EmbeddingPhase) -> [f64; 3] {
        let pscale = ph.p.iter().map(|v| v.abs()).fold(1.0, f64::max);
        [1e-12 * self.params.radius, 1e-10 * self.params.radius * pscale, 0.0]
    }

    fn record(&mut self, t: f64, state: PhaseState, ph: EmbeddingPhase) -> Result<()> {
        let invariants = InvariantSet::from_ambient(&ph, self.params, self.mode)?;
        self.samples.push(Sample { t, state: state.with_normalized_phi(), ambient: ph, invariants });
        Ok(())
    }
}

/// Error-controlled step attempts for one system; returns (h_used, y_new, f_new, h_next).
#[allow(clippy::too_many_arguments)]
fn attempt<const N: usize>(
    f: &impl Fn(&[f64; N]) -> [f64; N],
    valid: &impl Fn(&[f64; N]) -> bool,
    y: &[f64; N],
    f0: &[f64; N],
    mut h: f64,
    t: f64,
    t_end: f64,
    cfg: &IntegrationConfig,
) -> Result<(f64, [f64; N], [f64; N], f64)> {
    loop {
        let h_try = h.min(cfg.max_step).min(t_end - t);
        if h_try < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let st = dop853::step(f, y, f0, h_try, cfg.rel_tol, cfg.abs_tol);
        let finite = st.y.iter().chain(st.f.iter()).all(|v| v.is_finite()) && st.error.is_finite();
        if finite && st.error <= 1.0 && valid(&st.y) {
            let h_next = h_try * dop853::step_factor(st.error, true);
            return Ok((h_try, st.y, st.f, h_next));
        }
        let shrink = if finite && valid(&st.y) { dop853::step_factor(st.error, false) } else { 0.25 };
        h = h_try * shrink;
    }
}

pub fn integrate(
    initial: &PhaseState,
    params: &ModelParams,
    cfg: &IntegrationConfig,
    mode: HamiltonianMode,
) -> Result<Trajectory> {
    params.validate()?;
    cfg.validate()?;
    initial.validate()?;
    let h0 = hamiltonian(initial, params, mode)?;
    if !h0.is_finite() {
        return Err(Error::NonFinite("initial energy".into()));
    }
    let origin = momentum_lift(initial, params)?;
    let origin_rate = ambient_rhs(&phase_to_ambient(&origin), params, mode);
    let mut it = Integrator { params, cfg, mode, origin, origin_rate, samples: Vec::new(), events: Vec::new() };

    let (t0, t1) = cfg.t_span;
    let mut t = t0;
    let mut stage = if cfg.scheme == Scheme::Ambient || it.in_band(&origin, 1.0) {
        Stage::Ambient
    } else {
        Stage::Chart(initial.chart())
    };
    let mut xc = initial.to_array();
    let mut ya = phase_to_ambient(&origin);
    it.record(t, *initial, origin)?;

    let ev0 = it.event_values(&origin);
    let dz0 = it.dead_zones(&origin);
    let mut watches: Vec<SignWatch> = (0..3).map(|i| SignWatch::new(ev0[i], dz0[i], t)).collect();
    let mut h: Option<f64> = None;
    let mut steps = 0usize;

    while t < t1 {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::StepUnderflow { t });
        }
        // One accepted step in the current stage, plus a closure that re-takes a
        // partial step of length s from the same start, used for event refinement.
        let (h_used, ph_new, h_next, state_new, restep): (f64, EmbeddingPhase, f64, PhaseState, Box<dyn Fn(f64) -> EmbeddingPhase + '_>) =
            match stage {
                Stage::Chart(chart) => {
                    let f = move |x: &[f64; 6]| chart_rhs(chart, x, params, mode);
                    let start = xc;
                    let valid = move |x: &[f64; 6]| {
                        if chart.is_outer() {
                            x[0] > 0.0
                        } else {
                            x[0] * start[0] > 0.0 && x[0].abs() < std::f64::consts::FRAC_PI_2
                        }
                    };
                    let f0 = f(&xc);
                    let hh = h.unwrap_or_else(|| dop853::initial_step(&f, &xc, &f0, cfg.rel_tol, cfg.abs_tol));
                    let (hu, xn, _, hn) = attempt(&f, &valid, &xc, &f0, hh, t, t1, cfg)?;
                    xc = xn;
                    let ph = chart_to_phase(chart, &xn, params);
                    let restep = move |s: f64| {
                        let y = dop853::step(&f, &start, &f0, s, cfg.rel_tol, cfg.abs_tol).y;
                        chart_to_phase(chart, &y, params)
                    };
                    (hu, ph, hn, PhaseState::from_array(chart, &xn), Box::new(restep))
                }
                Stage::Ambient => {
                    let f = move |y: &[f64; 8]| ambient_rhs(y, params, mode);
                    let start = ya;
                    let f0 = f(&ya);
                    let hh = h.unwrap_or_else(|| dop853::initial_step(&f, &ya, &f0, cfg.rel_tol, cfg.abs_tol));
                    let valid = |y: &[f64; 8]| y[0] != 0.0;
                    let (hu, mut yn, _, hn) = attempt(&f, &valid, &ya, &f0, hh, t, t1, cfg)?;
                    let drift = (quadric(&[yn[0], yn[1], yn[2], yn[3]]) / (params.radius * params.radius) - 1.0).abs();
                    if drift > CONSTRAINT_BUDGET {
                        return Err(Error::ConstraintDrift { t: t + hu, residual: drift });
                    }
                    project_ambient(&mut yn, params);
                    ya = yn;
                    let ph = ambient_to_phase(&yn);
                    let state = to_phase_state(&ph, params)?;
                    let restep = move |s: f64| {
                        let mut y = dop853::step(&f, &start, &f0, s, cfg.rel_tol, cfg.abs_tol).y;
                        project_ambient(&mut y, params);
                        ambient_to_phase(&y)
                    };
                    (hu, ph, hn, state, Box::new(restep))
                }
            };

        // Events on [t, t + h_used].
        let ev = it.event_values(&ph_new);
        let dz = it.dead_zones(&ph_new);
        let kinds = [EventKind::ChartCrossing, EventKind::RadialTurningPoint, EventKind::PeriodClosure];
        for i in 0..3 {
            let s_new = sign(ev[i], dz[i]);
            let w = &mut watches[i];
            let mut hit: Option<(f64, i8)> = None;
            if s_new != 0 && w.last != 0 && s_new != w.last {
                if w.prev != 0 {
                    let prev = w.prev;
                    let g = |s: f64| {
                        let ph = restep(s);
                        let v = it.event_values(&ph)[i];
                        if v == 0.0 {
                            -f64::from(prev)
                        } else {
                            v
                        }
                    };
                    let s = bisect(g, 0.0, h_used, EVENT_TIME_TOL);
                    hit = Some((t + s, s_new));
                } else {
                    hit = Some((w.last_t, s_new));
                }
            }
            if s_new != 0 {
                w.last = s_new;
            }
            w.prev = s_new;
            w.last_t = t + h_used;
            if let Some((te, dir)) = hit {
                match kinds[i] {
                    EventKind::PeriodClosure => {
                        if dir > 0 {
                            let ph = restep((te - t).clamp(0.0, h_used));
                            let d = phase_distance(&ph, &it.origin, params);
                            if d < cfg.closure_tol {
                                it.events.push(Event { t: te, kind: kinds[i], direction: dir, distance: Some(d) });
                            }
                        }
                    }
                    kind => it.events.push(Event { t: te, kind, direction: dir, distance: None }),
                }
            }
        }

        t += h_used;
        if t1 - t < 1e-13 * t1.abs().max(1.0) {
            t = t1;
        }
        it.record(t, state_new, ph_new)?;
        h = Some(h_next);

        // Stage changes.
        match stage {
            Stage::Chart(_) if cfg.scheme == Scheme::ChartSwitching && it.in_band(&ph_new, 1.0) => {
                ya = phase_to_ambient(&ph_new);
                stage = Stage::Ambient;
                h = None;
            }
            Stage::Ambient if cfg.scheme == Scheme::ChartSwitching && !it.in_band(&ph_new, 2.0) => {
                let pt = chart_transition(&state_new.point, params)?;
                let [p1, p2, pphi] = chart_momenta(&ph_new.p, &pt, params);
                let state = PhaseState { point: pt, p1, p2, pphi };
                xc = state.to_array();
                let rhs = chart_rhs(pt.chart, &xc, params, mode);
                if rhs.iter().all(|v| v.is_finite()) {
                    stage = Stage::Chart(pt.chart);
                    h = None;
                }
            }
            _ => {}
        }
    }
    it.events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(Trajectory { params: *params, mode, samples: it.samples, events: it.events })
}

/// Formats a number with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub const TRAJECTORY_COLUMNS: [&str; 28] = [
    "t", "chart", "q1", "q2", "phi", "p1", "p2", "pphi", "z0", "z1", "z2", "z3", "H", "L1", "L2", "L3", "Lsq", "C1",
    "C2", "D11", "D12", "D13", "D21", "D22", "D23", "D31", "D32", "D33",
];

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = TRAJECTORY_COLUMNS.join(",");
    out.push('\n');
    for s in &traj.samples {
        let inv = &s.invariants;
        let g = &inv.generators;
        let mut row = vec![fmt_num(s.t), s.state.chart().name().to_string()];
        row.extend(s.state.to_array().iter().map(|v| fmt_num(*v)));
        row.extend(s.ambient.z.z.iter().map(|v| fmt_num(*v)));
        row.extend([inv.hamiltonian, g.l1, g.l2, g.l3, inv.l_squared, inv.casimir1, inv.casimir2].map(fmt_num));
        row.extend(inv.df.d.iter().flatten().map(|v| fmt_num(*v)));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn invariants_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    if let Some(s) = traj.samples.first() {
        for (name, _) in s.invariants.scalars() {
            out.push(',');
            out.push_str(name);
        }
    }
    out.push('\n');
    for s in &traj.samples {
        let mut row = vec![fmt_num(s.t)];
        row.extend(s.invariants.scalars().into_iter().map(|(_, v)| fmt_num(v)));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn events_json(traj: &Trajectory) -> String {
    serde_json::to_string_pretty(&traj.events).expect("events serialize")
}
