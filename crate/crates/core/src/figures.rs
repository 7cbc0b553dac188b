//! Data behind the nine orbit figures: effective-potential profiles and
//! point clouds on the hyperboloid with meshes of their carrier surfaces.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::dynamics::fmt_num;
use crate::error::{Error, Result};
use crate::geometry::ModelParams;
use crate::orbits::{
    conic_radius, effective_potential, energy_for_conic, linspace, orbit_conic, trajectory_negative_l2, trajectory_zero_l2,
    ZeroL2Form, ORBIT_SAMPLES,
};

/// Radial range of the potential profiles, r ∈ (0, R_PROFILE].
pub const R_PROFILE: f64 = 4.0;
pub const PROFILE_POINTS: usize = 400;
/// Unbounded curves are cut at this outer radius.
pub const R_CUT: f64 = 3.0;
const MESH: usize = 41;

pub const FIG1_L_SQ: [f64; 4] = [0.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0];
pub const FIG2_L_SQ: [f64; 3] = [2.0, 3.0, 4.0];
pub const FIG3_L_SQ: [f64; 3] = [-1.0, -2.0, -3.0];
pub const FIG4_CONICS: [(f64, f64); 3] = [(0.3, 0.3), (0.4, 0.3), (0.5, 0.3)];
pub const FIG5_CONICS: [(f64, f64); 3] = [(0.2, 0.0), (0.5, 0.0), (0.8, 0.0)];
pub const FIG6_CONICS: [(f64, f64); 3] = [(1.0 / 3.0, 2.0 / 3.0), (2.0 / 3.0, 1.0 / 3.0), (8.0 / 9.0, 1.0 / 9.0)];
pub const FIG7_CONICS: [(f64, f64); 3] = [(0.2, 0.8), (0.5, 0.8), (0.8, 0.8)];
pub const FIG8_ENERGIES: [f64; 5] = [-1.5, -0.5, 0.25, 0.5, 1.5];
pub const FIG8_ABS_L_SQ: f64 = 1.0;
pub const FIG9_ENERGIES: [f64; 3] = [0.2, 0.5, 0.8];
pub const FIG9_PPHI: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub description: String,
    pub params: BTreeMap<String, f64>,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    fn new(name: String, description: String, params: &[(&str, f64)], columns: &[&str]) -> Self {
        Self {
            name,
            description,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub id: u8,
    pub title: String,
    pub datasets: Vec<Dataset>,
}

pub fn figure(id: u8) -> Result<FigureData> {
    let p = ModelParams::unit();
    match id {
        1 => profiles(1, "Effective potential, 0 <= L^2 < w^2 R^4", &FIG1_L_SQ, &p),
        2 => profiles(2, "Effective potential, L^2 >= w^2 R^4", &FIG2_L_SQ, &p),
        3 => profiles(3, "Effective potential, L^2 < 0", &FIG3_L_SQ, &p),
        4 => conics(4, "Ellipses", &FIG4_CONICS, &p),
        5 => conics(5, "Circles", &FIG5_CONICS, &p),
        6 => conics(6, "Equidistant curves", &FIG6_CONICS, &p),
        7 => conics(7, "Ultraellipses", &FIG7_CONICS, &p),
        8 => negative(&p),
        9 => cylinder(&p),
        _ => Err(Error::InvalidParameter(format!("figure id must be in 1..=9 (got {id})"))),
    }
}

fn profiles(id: u8, title: &str, family: &[f64], p: &ModelParams) -> Result<FigureData> {
    let mut datasets = Vec::new();
    for (k, &l_sq) in family.iter().enumerate() {
        let mut d = Dataset::new(
            format!("fig{id}_ueff_{k}"),
            format!("U_eff(r) for L^2 = {l_sq}"),
            &[("l_sq", l_sq), ("omega", p.omega), ("radius", p.radius)],
            &["r", "u_eff"],
        );
        for i in 1..=PROFILE_POINTS {
            let r = R_PROFILE * i as f64 / PROFILE_POINTS as f64;
            d.rows.push(vec![r, effective_potential(r, l_sq, p)?]);
        }
        datasets.push(d);
    }
    Ok(FigureData { id, title: title.into(), datasets })
}

fn outer_point(r: f64, tau: f64, phi: f64, radius: f64) -> [f64; 4] {
    let sh = r.sinh();
    [radius * r.cosh(), radius * sh * tau.sinh(), radius * sh * tau.cosh() * phi.cos(), radius * sh * tau.cosh() * phi.sin()]
}

fn inner_point(chi: f64, mu: f64, phi: f64, radius: f64) -> [f64; 4] {
    let s = chi.sin();
    [radius * chi.cos(), radius * s * mu.cosh(), radius * s * mu.sinh() * phi.cos(), radius * s * mu.sinh() * phi.sin()]
}

fn conics(id: u8, title: &str, family: &[(f64, f64)], p: &ModelParams) -> Result<FigureData> {
    let mut datasets = Vec::new();
    let mut r_extent = 0.0f64;
    for (k, &(pp, eps)) in family.iter().enumerate() {
        let (e, l_sq) = energy_for_conic(pp, eps, p);
        let c = orbit_conic(e, l_sq, p)?;
        let mut d = Dataset::new(
            format!("fig{id}_orbit_{k}"),
            format!("{:?} with p = {pp}, eps = {eps} on the tau = 0 section", c.kind),
            &[("p", pp), ("eps", eps), ("e", e), ("l_sq", l_sq), ("a_sq", c.a_sq), ("b_sq", c.b_sq), ("omega", p.omega), ("radius", p.radius)],
            &["phi", "r", "z0", "z1", "z2", "z3"],
        );
        for i in 0..ORBIT_SAMPLES {
            let phi = 2.0 * PI * i as f64 / ORBIT_SAMPLES as f64;
            if let Some(r) = conic_radius(phi, &c).filter(|r| *r <= R_CUT) {
                r_extent = r_extent.max(r);
                let z = outer_point(r, 0.0, phi, p.radius);
                d.rows.push(vec![phi, r, z[0], z[1], z[2], z[3]]);
            }
        }
        datasets.push(d);
    }
    let mut mesh = Dataset::new(
        format!("fig{id}_carrier"),
        "upper sheet z0^2 - z2^2 - z3^2 = R^2 of the two-sheeted section z1 = 0".into(),
        &[("radius", p.radius)],
        &["u", "v", "z0", "z1", "z2", "z3"],
    );
    for r in linspace(0.0, (1.1 * r_extent).min(R_CUT), MESH) {
        for phi in linspace(0.0, 2.0 * PI, MESH) {
            let z = outer_point(r, 0.0, phi, p.radius);
            mesh.rows.push(vec![r, phi, z[0], z[1], z[2], z[3]]);
        }
    }
    datasets.push(mesh);
    Ok(FigureData { id, title: title.into(), datasets })
}

/// Negative-L² orbits with p_φ = 0 in the z3 = 0 plane. Each energy yields an
/// outer and an inner branch; the four sign choices of (z1, z2) give the
/// mirror-image arcs.
fn negative(p: &ModelParams) -> Result<FigureData> {
    let l_sq = -FIG8_ABS_L_SQ;
    let mut datasets = Vec::new();
    for (k, &e) in FIG8_ENERGIES.iter().enumerate() {
        let t = trajectory_negative_l2(e, l_sq, 0.0, p)?;
        let mut d = Dataset::new(
            format!("fig8_orbit_{k}"),
            format!("L^2 = {l_sq}, E = {e}, p_phi = 0"),
            &[("e", e), ("l_sq", l_sq), ("a", t.a), ("b", t.b), ("omega", p.omega), ("radius", p.radius)],
            &["arc", "branch", "s", "z0", "z1", "z2", "z3"],
        );
        let params = linspace(-3.0, 3.0, ORBIT_SAMPLES);
        for (arc, (s1, s2)) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)].into_iter().enumerate() {
            for &tau in &params {
                if let Some(r) = t.outer_r(tau).filter(|r| *r <= R_CUT) {
                    let z = outer_point(r, tau, 0.0, p.radius);
                    d.rows.push(vec![arc as f64, 0.0, tau, z[0], s1 * z[1], s2 * z[2], z[3]]);
                }
            }
            for &mu in &params {
                let z = inner_point(t.inner_chi(mu), mu, 0.0, p.radius);
                d.rows.push(vec![arc as f64, 1.0, mu, z[0], s1 * z[1], s2 * z[2], z[3]]);
            }
        }
        datasets.push(d);
    }
    let mut mesh = Dataset::new(
        "fig8_carrier".into(),
        "one-sheeted hyperboloid z0^2 + z1^2 - z2^2 = R^2 (z3 = 0)".into(),
        &[("radius", p.radius)],
        &["u", "v", "z0", "z1", "z2", "z3"],
    );
    for v in linspace(-R_CUT, R_CUT, MESH) {
        for u in linspace(0.0, 2.0 * PI, MESH) {
            let ch = p.radius * v.cosh();
            mesh.rows.push(vec![u, v, ch * u.cos(), ch * u.sin(), p.radius * v.sinh(), 0.0]);
        }
    }
    datasets.push(mesh);
    Ok(FigureData { id: 8, title: "Orbits with negative L^2".into(), datasets })
}

/// L² = 0 orbits with sinh τ = −tan φ, which lie in the plane z1 + z3 = 0.
fn cylinder(p: &ModelParams) -> Result<FigureData> {
    let mut datasets = Vec::new();
    for (k, &e) in FIG9_ENERGIES.iter().enumerate() {
        let t = trajectory_zero_l2(e, FIG9_PPHI, 0.0, p, ZeroL2Form::Separated)?;
        let mut d = Dataset::new(
            format!("fig9_orbit_{k}"),
            format!("L^2 = 0, E = {e}, p_phi = {FIG9_PPHI}"),
            &[("e", e), ("l_sq", 0.0), ("pphi", FIG9_PPHI), ("omega", p.omega), ("radius", p.radius)],
            &["phi", "r", "tau", "z0", "z1", "z2", "z3"],
        );
        let edge = FRAC_PI_2 * (1.0 - 1.0 / ORBIT_SAMPLES as f64);
        for phi in linspace(-edge, edge, ORBIT_SAMPLES) {
            if let Some(r) = t.r(phi) {
                let tau = (-phi.tan()).asinh();
                let z = outer_point(r, tau, phi, p.radius);
                d.rows.push(vec![phi, r, tau, z[0], z[1], z[2], z[3]]);
            }
        }
        datasets.push(d);
    }
    let mut mesh = Dataset::new(
        "fig9_carrier".into(),
        "hyperbolic cylinder z0^2 - z2^2 = R^2 in the plane z1 = -z3".into(),
        &[("radius", p.radius)],
        &["u", "v", "z0", "z1", "z2", "z3"],
    );
    for u in linspace(-1.5, 1.5, MESH) {
        for v in linspace(-2.0, 2.0, MESH) {
            mesh.rows.push(vec![u, v, p.radius * u.cosh(), v, p.radius * u.sinh(), -v]);
        }
    }
    datasets.push(mesh);
    Ok(FigureData { id: 9, title: "Orbits with L^2 = 0".into(), datasets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quadric;

    #[test]
    fn every_point_is_on_the_hyperboloid() {
        for id in 4..=9 {
            let f = figure(id).unwrap();
            for d in &f.datasets {
                let off = d.columns.iter().position(|c| c == "z0").unwrap();
                assert!(!d.rows.is_empty(), "{}", d.name);
                for row in &d.rows {
                    let z = [row[off], row[off + 1], row[off + 2], row[off + 3]];
                    assert!((quadric(&z) - 1.0).abs() < 1e-9, "{} {:?}", d.name, z);
                }
            }
        }
    }

    #[test]
    fn conic_families_have_captioned_kinds() {
        use crate::orbits::ConicKind::*;
        // (p, ε) = (0.2, 0.8) lies exactly on A² = 1.
        let expected = [
            (4, [Ellipse, Ellipse, Ellipse]),
            (5, [Circle, Circle, Circle]),
            (6, [Equidistant, Equidistant, Equidistant]),
            (7, [Equidistant, Ultraellipse, Ultraellipse]),
        ];
        for (id, kinds) in expected {
            let f = figure(id).unwrap();
            let orbits: Vec<_> = f.datasets.iter().filter(|d| d.name.contains("orbit")).collect();
            assert_eq!(orbits.len(), 3);
            for (d, kind) in orbits.iter().zip(kinds) {
                let c = orbit_conic(d.params["e"], d.params["l_sq"], &ModelParams::unit()).unwrap();
                assert_eq!(c.kind, kind, "{}", d.name);
            }
        }
        assert!(figure(0).is_err() && figure(10).is_err());
    }
}
