//! Canonical Poisson brackets on chart phase space with two derivative
//! backends, and sweeps verifying the so(2,2) table and the quadratic
//! Demkov–Fradkin algebra.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::dynamics::hamiltonian_s;
use crate::error::{Error, Result};
use crate::geometry::{embed_s, momentum_lift_s, ChartId, ModelParams, PhaseState};
use crate::invariants::{df_s, generators_s, HamiltonianMode, GBAR};
use crate::scalar::{Dual, Scalar};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Dual,
    FiniteDifference,
}

/// Built-in phase-space functions that can be evaluated on dual numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    /// Canonical coordinate by index in (q1, q2, φ, p1, p2, pφ).
    Coordinate(usize),
    Rotation(usize),
    /// Rotation generator in the orientation with L1, L3 reversed.
    MirroredRotation(usize),
    Boost(usize),
    DemkovFradkin(usize, usize),
    Hamiltonian(HamiltonianMode),
    LSquared,
    Casimir1,
    Casimir2,
}

impl Quantity {
    pub fn eval<S: Scalar>(&self, chart: ChartId, x: &[S; 6], params: &ModelParams) -> S {
        if let Quantity::Coordinate(i) = self {
            return x[*i];
        }
        if let Quantity::Hamiltonian(mode) = self {
            return hamiltonian_s(chart, x, params, *mode);
        }
        let q = [x[0], x[1], x[2]];
        let z = embed_s(chart, &q, params.radius);
        let p = momentum_lift_s(chart, &q, &[x[3], x[4], x[5]], params.radius);
        let (l, n) = generators_s(&z, &p);
        let form = |a: &[S; 3], b: &[S; 3]| a[0] * b[0] * GBAR[0] + a[1] * b[1] * GBAR[1] + a[2] * b[2] * GBAR[2];
        match *self {
            Quantity::Rotation(i) => l[i],
            Quantity::MirroredRotation(i) => {
                if i == 1 {
                    l[1]
                } else {
                    -l[i]
                }
            }
            Quantity::Boost(i) => n[i],
            Quantity::DemkovFradkin(i, k) => df_s(&z, &n, params)[i][k],
            Quantity::LSquared => form(&l, &l),
            Quantity::Casimir1 => form(&n, &l),
            Quantity::Casimir2 => form(&n, &n) + form(&l, &l),
            Quantity::Coordinate(_) | Quantity::Hamiltonian(_) => unreachable!(),
        }
    }
}

type Evaluator = Arc<dyn Fn(&PhaseState, &ModelParams) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Builtin(Quantity),
    Bracket(Box<Observable>, Box<Observable>),
    Custom(Evaluator),
}

/// Named phase-space function.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    kind: Kind,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Observable({})", self.name)
    }
}

const LABELS: [&str; 6] = ["q1", "q2", "phi", "p1", "p2", "pphi"];

impl Observable {
    pub fn builtin(q: Quantity) -> Self {
        let name = match q {
            Quantity::Coordinate(i) => LABELS[i].to_string(),
            Quantity::Rotation(i) => format!("L{}", i + 1),
            Quantity::MirroredRotation(i) => format!("L~{}", i + 1),
            Quantity::Boost(i) => format!("N{}", i + 1),
            Quantity::DemkovFradkin(i, k) => format!("D{}{}", i + 1, k + 1),
            Quantity::Hamiltonian(HamiltonianMode::Oscillator) => "H_osc".into(),
            Quantity::Hamiltonian(HamiltonianMode::Free) => "H_free".into(),
            Quantity::LSquared => "L^2".into(),
            Quantity::Casimir1 => "C1".into(),
            Quantity::Casimir2 => "C2".into(),
        };
        Self { name, kind: Kind::Builtin(q) }
    }

    pub fn custom(name: &str, f: impl Fn(&PhaseState, &ModelParams) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.to_string(), kind: Kind::Custom(Arc::new(f)) }
    }

    /// The bracket {f, g} as an observable in its own right.
    pub fn bracket_of(f: &Observable, g: &Observable) -> Self {
        Self { name: format!("{{{},{}}}", f.name, g.name), kind: Kind::Bracket(Box::new(f.clone()), Box::new(g.clone())) }
    }

    pub fn value(&self, state: &PhaseState, params: &ModelParams) -> f64 {
        match &self.kind {
            Kind::Builtin(q) => q.eval(state.chart(), &state.to_array(), params),
            Kind::Bracket(f, g) => bracket_with(f, g, state, params, Backend::Dual).unwrap_or(f64::NAN),
            Kind::Custom(e) => e(state, params),
        }
    }

    /// Gradient in (q1, q2, φ, p1, p2, pφ). Dual numbers are used when the
    /// observable supports them; anything else falls back to differences.
    pub fn gradient(&self, state: &PhaseState, params: &ModelParams, backend: Backend) -> Result<[f64; 6]> {
        let g = match (&self.kind, backend) {
            (Kind::Builtin(q), Backend::Dual) => q.eval(state.chart(), &Dual::<6>::seed(&state.to_array()), params).d,
            _ => self.fd_gradient(state, params),
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", self.name)));
        }
        Ok(g)
    }

    /// Fourth-order central differences with h = 1e-5·max(1, |x_i|).
    fn fd_gradient(&self, state: &PhaseState, params: &ModelParams) -> [f64; 6] {
        let x = state.to_array();
        let chart = state.chart();
        let mut g = [0.0; 6];
        for i in 0..6 {
            let h = 1e-5 * x[i].abs().max(1.0);
            let at = |k: f64| {
                let mut y = x;
                y[i] += k * h;
                self.value(&PhaseState::from_array(chart, &y), params)
            };
            g[i] = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h);
        }
        g
    }
}

pub fn bracket_with(f: &Observable, g: &Observable, state: &PhaseState, params: &ModelParams, backend: Backend) -> Result<f64> {
    let a = f.gradient(state, params, backend)?;
    let b = g.gradient(state, params, backend)?;
    Ok((0..3).map(|i| a[i] * b[3 + i] - b[i] * a[3 + i]).sum())
}

/// {f, g} = Σ (∂f/∂q ∂g/∂p − ∂g/∂q ∂f/∂p).
pub fn bracket(f: &Observable, g: &Observable, state: &PhaseState, params: &ModelParams) -> Result<f64> {
    bracket_with(f, g, state, params, Backend::Dual)
}

pub fn jacobi_residual(f: &Observable, g: &Observable, h: &Observable, state: &PhaseState, params: &ModelParams) -> Result<f64> {
    let t1 = bracket(f, &Observable::bracket_of(g, h), state, params)?;
    let t2 = bracket(g, &Observable::bracket_of(h, f), state, params)?;
    let t3 = bracket(h, &Observable::bracket_of(f, g), state, params)?;
    Ok((t1 + t2 + t3).abs())
}

/// Reproducible outer-chart states away from coordinate singularities:
/// r ∈ [0.3, 2], τ ∈ [−1.5, 1.5], φ ∈ [0, 2π), momenta in [−2, 2].
pub fn sample_states(n: usize, seed: u64) -> Vec<PhaseState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = rng.gen_range(0.3..=2.0);
            let tau = rng.gen_range(-1.5..=1.5);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let mut p = [0.0; 3];
            for v in p.iter_mut() {
                *v = rng.gen_range(-2.0..=2.0);
            }
            PhaseState::outer(r, tau, phi, p[0], p[1], p[2]).expect("sampled state is regular")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketCheck {
    pub lhs: String,
    pub rhs: String,
    pub samples: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Variants known to be inexact; reported, never failing.
    pub flagged: bool,
    /// Largest relative gap between dual and difference backends, when measured.
    pub backend_gap: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub pairs: Vec<BracketCheck>,
}

impl BracketReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(|p| p.flagged || p.pass)
    }

    pub fn get(&self, lhs: &str) -> Option<&BracketCheck> {
        self.pairs.iter().find(|p| p.lhs == lhs)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:<44} {:>7} {:>11} {:>9} {:>11}  status", "bracket", "expected", "n", "residual", "tol", "fd gap");
        for p in &self.pairs {
            let status = match (p.pass, p.flagged) {
                (true, _) => "pass",
                (false, true) => "FLAGGED",
                (false, false) => "FAIL",
            };
            let gap = p.backend_gap.map(|g| format!("{g:.2e}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<28} {:<44} {:>7} {:>11.3e} {:>9.1e} {:>11}  {}",
                p.lhs, p.rhs, p.samples, p.max_residual, p.tolerance, gap, status
            );
        }
        out
    }
}

/// Values a relation's right-hand side may use.
pub struct RhsContext {
    /// Rotation generators in the orientation the relation is stated in.
    pub l: [f64; 3],
    pub n: [f64; 3],
    pub d: [[f64; 3]; 3],
    pub omega_sq: f64,
    pub r_sq: f64,
}

type Rhs = Box<dyn Fn(&RhsContext) -> f64 + Send + Sync>;

struct Relation {
    f: Observable,
    g: Observable,
    rhs_name: String,
    rhs: Rhs,
    tolerance: f64,
    flagged: bool,
    relative: bool,
}

fn context(state: &PhaseState, params: &ModelParams, mirrored: bool) -> RhsContext {
    let x = state.to_array();
    let chart = state.chart();
    let q = [x[0], x[1], x[2]];
    let z = embed_s(chart, &q, params.radius);
    let p = momentum_lift_s(chart, &q, &[x[3], x[4], x[5]], params.radius);
    let (mut l, n) = generators_s(&z, &p);
    if mirrored {
        l[0] = -l[0];
        l[2] = -l[2];
    }
    RhsContext { l, n, d: df_s(&z, &n, params), omega_sq: params.omega * params.omega, r_sq: params.radius * params.radius }
}

fn run_relations(relations: &[Relation], params: &ModelParams, n_points: usize, seed: u64, mirrored: bool, fd_gap: bool) -> BracketReport {
    let states = sample_states(n_points, seed);
    let m = relations.len();
    let per_point: Vec<Vec<(f64, f64)>> = states
        .par_iter()
        .map(|s| {
            let ctx = context(s, params, mirrored);
            relations
                .iter()
                .map(|rel| {
                    let lhs = bracket(&rel.f, &rel.g, s, params).unwrap_or(f64::NAN);
                    let rhs = (rel.rhs)(&ctx);
                    let scale = if rel.relative { lhs.abs().max(1.0) } else { 1.0 };
                    let res = (lhs - rhs).abs() / scale;
                    let gap = if fd_gap {
                        let fd = bracket_with(&rel.f, &rel.g, s, params, Backend::FiniteDifference).unwrap_or(f64::NAN);
                        (fd - lhs).abs() / lhs.abs().max(1.0)
                    } else {
                        0.0
                    };
                    (res, gap)
                })
                .collect()
        })
        .collect();
    let mut worst = vec![(0.0f64, 0.0f64); m];
    for row in &per_point {
        for (w, v) in worst.iter_mut().zip(row) {
            w.0 = if v.0.is_nan() { f64::NAN } else { w.0.max(v.0) };
            w.1 = if v.1.is_nan() { f64::NAN } else { w.1.max(v.1) };
        }
    }
    BracketReport {
        pairs: relations
            .iter()
            .zip(worst)
            .map(|(rel, (res, gap))| BracketCheck {
                lhs: format!("{{{},{}}}", rel.f.name, rel.g.name),
                rhs: rel.rhs_name.clone(),
                samples: n_points,
                max_residual: res,
                tolerance: rel.tolerance,
                pass: res <= rel.tolerance,
                flagged: rel.flagged,
                backend_gap: fd_gap.then_some(gap),
            })
            .collect(),
    }
}

fn rot(i: usize) -> Observable {
    Observable::builtin(Quantity::Rotation(i))
}
fn boost(i: usize) -> Observable {
    Observable::builtin(Quantity::Boost(i))
}
fn mrot(i: usize) -> Observable {
    Observable::builtin(Quantity::MirroredRotation(i))
}
fn dfo(i: usize, k: usize) -> Observable {
    Observable::builtin(Quantity::DemkovFradkin(i - 1, k - 1))
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// The 15 independent brackets among {N_i, L_i}, expected to follow
/// {A_i, B_j} = ḡ_ii ḡ_jj ε_ijk X_k.
pub fn verify_so22(params: &ModelParams, n_points: usize, seed: u64) -> BracketReport {
    verify_so22_tol(params, n_points, seed, 1e-6)
}

pub fn verify_so22_tol(params: &ModelParams, n_points: usize, seed: u64, tol: f64) -> BracketReport {
    #[derive(Clone, Copy)]
    enum G {
        L,
        N,
    }
    let mut pairs: Vec<(G, usize, G, usize, G)> = Vec::new();
    for i in 0..3 {
        for j in (i + 1)..3 {
            pairs.push((G::L, i, G::L, j, G::L));
        }
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            pairs.push((G::N, i, G::N, j, G::L));
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            pairs.push((G::N, i, G::L, j, G::N));
        }
    }
    let obs = |g: G, i: usize| match g {
        G::L => rot(i),
        G::N => boost(i),
    };
    let relations: Vec<Relation> = pairs
        .into_iter()
        .map(|(ga, i, gb, j, gx)| {
            let sign = GBAR[i] * GBAR[j];
            let k = if i == j { 0 } else { 3 - i - j };
            let coeff = if i == j { 0.0 } else { sign * levi_civita(i, j, k) };
            let xname = match gx {
                G::L => format!("L{}", k + 1),
                G::N => format!("N{}", k + 1),
            };
            let rhs_name = if coeff == 0.0 { "0".to_string() } else if coeff > 0.0 { xname } else { format!("-{xname}") };
            Relation {
                f: obs(ga, i),
                g: obs(gb, j),
                rhs_name,
                rhs: Box::new(move |c: &RhsContext| {
                    if coeff == 0.0 {
                        0.0
                    } else {
                        let x = match gx {
                            G::L => c.l[k],
                            G::N => c.n[k],
                        };
                        coeff * x
                    }
                }),
                tolerance: tol,
                flagged: false,
                relative: false,
            }
        })
        .collect();
    run_relations(&relations, params, n_points, seed, false, false)
}

fn rel(f: Observable, g: Observable, name: &str, tol: f64, flagged: bool, rhs: impl Fn(&RhsContext) -> f64 + Send + Sync + 'static) -> Relation {
    Relation { f, g, rhs_name: name.to_string(), rhs: Box::new(rhs), tolerance: tol, flagged, relative: true }
}

/// Corrected forms of the three relations whose commonly quoted coefficients fail.
/// Coefficients are those returned by [`fit_df_coefficients`].
pub const FITTED_DD: [(usize, usize, usize, usize, [f64; 3]); 3] =
    [(1, 2, 1, 3, [-1.0, 0.0, -2.0]), (1, 2, 2, 3, [-1.0, 0.0, 2.0]), (1, 3, 2, 3, [-1.0, 0.0, 2.0])];

/// Quadratic algebra of the Demkov–Fradkin tensor with the rotation generators
/// in mirrored orientation. Residuals are relative to max(1, |lhs|).
pub fn verify_df_algebra(params: &ModelParams, n_points: usize, seed: u64) -> BracketReport {
    verify_df_algebra_tol(params, n_points, seed, 1e-6)
}

pub fn verify_df_algebra_tol(params: &ModelParams, n_points: usize, seed: u64, tol: f64) -> BracketReport {
    let d = |c: &RhsContext, i: usize, k: usize| c.d[i - 1][k - 1];
    let l = |c: &RhsContext, i: usize| c.l[i - 1];
    let mut rels: Vec<Relation> = Vec::new();
    // {D_ij, L_k} block.
    let dl: [((usize, usize), usize, &str, fn(&RhsContext) -> f64); 15] = [
        ((1, 2), 1, "-D13", |c| -c.d[0][2]),
        ((1, 2), 2, "-D23", |c| -c.d[1][2]),
        ((1, 2), 3, "-D11-D22", |c| -c.d[0][0] - c.d[1][1]),
        ((1, 3), 1, "D12", |c| c.d[0][1]),
        ((1, 3), 2, "-D11-D33", |c| -c.d[0][0] - c.d[2][2]),
        ((1, 3), 3, "-D23", |c| -c.d[1][2]),
        ((2, 3), 1, "D22-D33", |c| c.d[1][1] - c.d[2][2]),
        ((2, 3), 2, "-D12", |c| -c.d[0][1]),
        ((2, 3), 3, "-D13", |c| -c.d[0][2]),
        ((1, 1), 2, "-2D13", |c| -2.0 * c.d[0][2]),
        ((1, 1), 3, "-2D12", |c| -2.0 * c.d[0][1]),
        ((2, 2), 1, "-2D23", |c| -2.0 * c.d[1][2]),
        ((2, 2), 3, "-2D12", |c| -2.0 * c.d[0][1]),
        ((3, 3), 1, "2D23", |c| 2.0 * c.d[1][2]),
        ((3, 3), 2, "-2D13", |c| -2.0 * c.d[0][2]),
    ];
    for ((i, j), k, name, f) in dl {
        rels.push(rel(dfo(i, j), mrot(k - 1), name, tol, false, f));
    }
    for k in 1..=3 {
        rels.push(rel(mrot(k - 1), dfo(k, k), "0", tol, false, |_| 0.0));
    }
    // {D_ij, D_kl} block.
    rels.push(rel(dfo(1, 1), dfo(1, 2), "2w^2 L3 + (2/R^2) L3 D11", tol, false, move |c| {
        2.0 * c.omega_sq * l(c, 3) + 2.0 / c.r_sq * l(c, 3) * d(c, 1, 1)
    }));
    rels.push(rel(dfo(1, 1), dfo(1, 3), "2w^2 L2 + (2/R^2) L2 D11", tol, false, move |c| {
        2.0 * c.omega_sq * l(c, 2) + 2.0 / c.r_sq * l(c, 2) * d(c, 1, 1)
    }));
    rels.push(rel(dfo(1, 1), dfo(2, 3), "(2/R^2)(L2 D12 + L3 D13)", tol, false, move |c| {
        2.0 / c.r_sq * (l(c, 2) * d(c, 1, 2) + l(c, 3) * d(c, 1, 3))
    }));
    rels.push(rel(dfo(1, 1), dfo(2, 2), "(4/R^2) L3 D12", tol, false, move |c| 4.0 / c.r_sq * l(c, 3) * d(c, 1, 2)));
    rels.push(rel(dfo(2, 2), dfo(1, 2), "2w^2 L3 - (2/R^2) L3 D22", tol, false, move |c| {
        2.0 * c.omega_sq * l(c, 3) - 2.0 / c.r_sq * l(c, 3) * d(c, 2, 2)
    }));
    rels.push(rel(dfo(2, 2), dfo(1, 3), "-(2/R^2)(L3 D23 + L1 D12)", tol, false, move |c| {
        -2.0 / c.r_sq * (l(c, 3) * d(c, 2, 3) + l(c, 1) * d(c, 1, 2))
    }));
    rels.push(rel(dfo(2, 2), dfo(2, 3), "2w^2 L1 - (2/R^2) L1 D22", tol, false, move |c| {
        2.0 * c.omega_sq * l(c, 1) - 2.0 / c.r_sq * l(c, 1) * d(c, 2, 2)
    }));
    rels.push(rel(dfo(2, 2), dfo(3, 3), "-(4/R^2) L1 D23", tol, false, move |c| -4.0 / c.r_sq * l(c, 1) * d(c, 2, 3)));
    rels.push(rel(dfo(3, 3), dfo(1, 2), "-(2/R^2)(L2 D23 - L1 D13)", tol, false, move |c| {
        -2.0 / c.r_sq * (l(c, 2) * d(c, 2, 3) - l(c, 1) * d(c, 1, 3))
    }));
    rels.push(rel(dfo(3, 3), dfo(1, 3), "2w^2 L2 - (2/R^2) L2 D33", tol, false, move |c| {
        2.0 * c.omega_sq * l(c, 2) - 2.0 / c.r_sq * l(c, 2) * d(c, 3, 3)
    }));
    rels.push(rel(dfo(3, 3), dfo(2, 3), "-2w^2 L1 + (2/R^2) L1 D33", tol, false, move |c| {
        -2.0 * c.omega_sq * l(c, 1) + 2.0 / c.r_sq * l(c, 1) * d(c, 3, 3)
    }));
    rels.push(rel(dfo(3, 3), dfo(1, 1), "-(4/R^2) L2 D13", tol, false, move |c| -4.0 / c.r_sq * l(c, 2) * d(c, 1, 3)));
    // Commonly quoted forms of the remaining three, known not to hold.
    let cc = |c: &RhsContext| 2.0 * c.omega_sq - 1.0 / (4.0 * c.r_sq * c.r_sq);
    rels.push(rel(dfo(1, 2), dfo(1, 3), "-(2w^2-1/4R^4) L1 + (1/R^2)(L1 D11 + L2 D12 + L3 D13)", tol, true, move |c| {
        -cc(c) * l(c, 1) + (l(c, 1) * d(c, 1, 1) + l(c, 2) * d(c, 1, 2) + l(c, 3) * d(c, 1, 3)) / c.r_sq
    }));
    rels.push(rel(dfo(1, 2), dfo(2, 3), "(2w^2-1/4R^4) L2 + (1/R^2)(L1 D12 + L2 D22 - L3 D23)", tol, true, move |c| {
        cc(c) * l(c, 2) + (l(c, 1) * d(c, 1, 2) + l(c, 2) * d(c, 2, 2) - l(c, 3) * d(c, 2, 3)) / c.r_sq
    }));
    rels.push(rel(dfo(1, 3), dfo(2, 3), "-(2w^2-1/4R^4) L3 + (1/R^2)(-L1 D13 + L2 D23 - L3 D33)", tol, true, move |c| {
        -cc(c) * l(c, 3) + (-l(c, 1) * d(c, 1, 3) + l(c, 2) * d(c, 2, 3) - l(c, 3) * d(c, 3, 3)) / c.r_sq
    }));
    // Corrected forms.
    for (i, j, k, m, coef) in FITTED_DD {
        let idx = if (i, j, k, m) == (1, 2, 1, 3) { 1 } else if (i, j, k, m) == (1, 2, 2, 3) { 2 } else { 3 };
        let name = format!("-w^2 L{idx} {} (2/R^2) L{idx} D{idx}{idx} (fitted)", if coef[2] < 0.0 { "-" } else { "+" });
        rels.push(rel(dfo(i, j), dfo(k, m), &name, tol, false, move |c| {
            let li = l(c, idx);
            coef[0] * c.omega_sq * li + coef[1] * li / (c.r_sq * c.r_sq) + coef[2] * li * d(c, idx, idx) / c.r_sq
        }));
    }
    run_relations(&rels, params, n_points, seed, true, true)
}

/// {H_osc, q} for every conserved quantity q in {L_i, L², D_ik}.
pub fn verify_conservation(params: &ModelParams, n_points: usize, seed: u64) -> BracketReport {
    let h = Observable::builtin(Quantity::Hamiltonian(HamiltonianMode::Oscillator));
    let mut rels = Vec::new();
    let mut qs: Vec<Observable> = (0..3).map(rot).collect();
    qs.push(Observable::builtin(Quantity::LSquared));
    for i in 1..=3 {
        for k in i..=3 {
            qs.push(dfo(i, k));
        }
    }
    for q in qs {
        rels.push(Relation { f: h.clone(), g: q, rhs_name: "0".into(), rhs: Box::new(|_| 0.0), tolerance: 1e-6, flagged: false, relative: false });
    }
    run_relations(&rels, params, n_points, seed, false, false)
}

/// Least-squares coefficients for the three relations {D12,D13}, {D12,D23},
/// {D13,D23} over the basis [ω² L̃k, L̃k/R⁴, L̃k Dkk/R²], with ω and R varied
/// across samples so all three basis functions are separable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFit {
    pub relation: String,
    pub basis: Vec<String>,
    pub fitted: Vec<f64>,
    pub adopted: Vec<f64>,
    /// Largest relative residual of the adopted rational coefficients.
    pub residual: f64,
}

pub fn fit_df_coefficients(n_points: usize, seed: u64) -> Vec<CoefficientFit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let states = sample_states(n_points, seed);
    let params: Vec<ModelParams> =
        (0..n_points).map(|_| ModelParams { omega: rng.gen_range(0.5..2.0), radius: rng.gen_range(0.5..2.0) }).collect();
    FITTED_DD
        .iter()
        .map(|&(i, j, k, m, adopted)| {
            let idx = [1, 2, 3][FITTED_DD.iter().position(|x| x.0 == i && x.1 == j && x.2 == k && x.3 == m).unwrap()];
            let (f, g) = (dfo(i, j), dfo(k, m));
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            for (s, p) in states.iter().zip(&params) {
                let c = context(s, p, true);
                let lhs = bracket(&f, &g, s, p).unwrap_or(f64::NAN);
                let li = c.l[idx - 1];
                let w = 1.0 / lhs.abs().max(1.0);
                rows.push([c.omega_sq * li * w, li / (c.r_sq * c.r_sq) * w, li * c.d[idx - 1][idx - 1] / c.r_sq * w]);
                rhs.push(lhs * w);
            }
            let a = DMatrix::from_fn(rows.len(), 3, |r, col| rows[r][col]);
            let y = DVector::from_vec(rhs);
            let sol = a.clone().svd(true, true).solve(&y, 1e-14).expect("svd solve");
            let adopted_v = DVector::from_column_slice(&adopted);
            let residual = (a * adopted_v - y).amax();
            CoefficientFit {
                relation: format!("{{D{i}{j},D{k}{m}}}"),
                basis: vec![format!("w^2 L{idx}"), format!("L{idx}/R^4"), format!("L{idx} D{idx}{idx}/R^2")],
                fitted: sol.iter().copied().collect(),
                adopted: adopted.to_vec(),
                residual,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_pair() {
        let p = ModelParams::unit();
        let s = PhaseState::outer(0.8, 0.3, 1.0, 0.5, -0.2, 0.9).unwrap();
        let q1 = Observable::builtin(Quantity::Coordinate(0));
        let p1 = Observable::builtin(Quantity::Coordinate(3));
        assert_eq!(bracket(&q1, &p1, &s, &p).unwrap(), 1.0);
        assert!((bracket_with(&q1, &p1, &s, &p, Backend::FiniteDifference).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rotation_bracket_example() {
        let p = ModelParams::unit();
        for s in sample_states(50, 1) {
            let l3 = rot(2).value(&s, &p);
            assert!((bracket(&rot(0), &rot(1), &s, &p).unwrap() + l3).abs() < 1e-9);
            assert!((bracket(&boost(0), &boost(1), &s, &p).unwrap() + l3).abs() < 1e-9);
            assert!(bracket(&boost(1), &rot(1), &s, &p).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn custom_observable_uses_differences() {
        let p = ModelParams::unit();
        let s = PhaseState::outer(0.8, 0.3, 1.0, 0.5, -0.2, 0.9).unwrap();
        let h = Observable::custom("H", |s, p| crate::dynamics::hamiltonian(s, p, HamiltonianMode::Oscillator).unwrap());
        let d33 = dfo(3, 3);
        assert!(bracket(&h, &d33, &s, &p).unwrap().abs() < 1e-8);
    }

    #[test]
    fn sampler_is_reproducible() {
        assert_eq!(sample_states(5, 7), sample_states(5, 7));
        assert_ne!(sample_states(5, 7), sample_states(5, 8));
    }
}
