//! Inhomogeneous couplings and the population/frequency compensation plan
//! that restores the homogeneous steady-state diagram.
//!
//! Weights are normalized to the ±1 species: w_{±1} = 1, w_0 = N_0/N_{±1}.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::model::ModelParams;
use crate::stationary::{census, CensusOptions, PhaseLabel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationPlan {
    pub phi: f64,
    /// N_0 / N_{±1}.
    pub pop_ratio: f64,
    /// λ_{±1} / λ_0.
    pub coupling_ratio: f64,
    /// Ω_0 / Ω_{±1}.
    pub freq_ratio: f64,
    /// Renormalized coupling Λ = λ_m √w_m, common to all species.
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

impl CompensationPlan {
    pub fn weights(&self) -> [f64; 3] {
        [1.0, self.pop_ratio, 1.0]
    }

    pub fn couplings(&self) -> [f64; 3] {
        let l = self.big_lambda;
        [l, l / self.pop_ratio.sqrt(), l]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Population ratio √(1 + tan²φ) = 1/|cos φ|.
pub fn pop_ratio(phi: f64) -> Result<f64> {
    let c = phi.cos().abs();
    if c < 1e-9 {
        return Err(Error::InvalidParams(format!("population ratio unbounded at phi = {phi}")));
    }
    Ok(1.0 / c)
}

pub fn make_plan(phi: f64, big_lambda: f64, compensate_freq: bool) -> Result<CompensationPlan> {
    if !phi.is_finite() || !big_lambda.is_finite() || big_lambda < 0.0 {
        return Err(Error::InvalidParams("plan needs finite phi and Lambda >= 0".into()));
    }
    let r = pop_ratio(phi)?;
    Ok(CompensationPlan {
        phi,
        pop_ratio: r,
        coupling_ratio: r.sqrt(),
        freq_ratio: if compensate_freq { 1.0 / r } else { 1.0 },
        big_lambda,
    })
}

/// Installs the plan's φ, weights, couplings and frequencies on `base`.
/// Ω_{±1} is taken from the species-(+1) entry of `base`.
pub fn params_from_plan(plan: &CompensationPlan, base: &ModelParams) -> ModelParams {
    let om = base.omega[2];
    ModelParams {
        phi: plan.phi,
        weight: plan.weights(),
        lam: plan.couplings(),
        omega: [om, om * plan.freq_ratio, om],
        ..base.clone()
    }
}

/// Stationary labels over a (φ, Λ) grid with a plan applied at every
/// point, in row-major order (φ outer).
pub fn compensated_labels(
    phis: &[f64],
    lambdas: &[f64],
    base: &ModelParams,
    compensate_freq: bool,
    opts: &CensusOptions,
) -> Result<Vec<PhaseLabel>> {
    let jobs: Vec<(f64, f64)> = phis.iter().flat_map(|&f| lambdas.iter().map(move |&l| (f, l))).collect();
    jobs.par_iter()
        .map(|&(phi, lam)| {
            let p = params_from_plan(&make_plan(phi, lam, compensate_freq)?, base);
            Ok(census(&p, opts)?.label)
        })
        .collect()
}

/// A dwell direction of the cavity field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityVertex {
    pub angle: f64,
    pub radius: f64,
    /// Fraction of samples in the peak bin and its two neighbours.
    pub occupancy: f64,
}

/// Dwell directions of the cavity field as peaks of its polar-angle
/// occupancy.
///
/// Samples are binned by angle into `bins` sectors and the counts are
/// smoothed with a circular (1, 2, 1) kernel. A vertex is a strict local
/// maximum whose smoothed count exceeds `floor` times the mean; its radius
/// is the mean |a| over the peak bin and both neighbours.
pub fn cavity_vertices(traj: &Trajectory, bins: usize, floor: f64) -> Vec<CavityVertex> {
    if bins < 3 || traj.states.is_empty() {
        return Vec::new();
    }
    let mut count = vec![0.0; bins];
    let mut rsum = vec![0.0; bins];
    for st in &traj.states {
        let c = st.cavity;
        let k = ((c.im.atan2(c.re).rem_euclid(TAU) / TAU * bins as f64) as usize).min(bins - 1);
        count[k] += 1.0;
        rsum[k] += c.norm();
    }
    let at = |v: &[f64], k: isize| v[k.rem_euclid(bins as isize) as usize];
    let smooth: Vec<f64> =
        (0..bins as isize).map(|k| at(&count, k - 1) + 2.0 * at(&count, k) + at(&count, k + 1)).collect();
    let mean = smooth.iter().sum::<f64>() / bins as f64;
    let total = traj.states.len() as f64;
    (0..bins as isize)
        .filter(|&k| {
            let s = smooth[k as usize];
            s > at(&smooth, k - 1) && s >= at(&smooth, k + 1) && s > floor * mean
        })
        .map(|k| {
            let n = at(&count, k - 1) + at(&count, k) + at(&count, k + 1);
            let r = at(&rsum, k - 1) + at(&rsum, k) + at(&rsum, k + 1);
            CavityVertex { angle: (k as f64 + 0.5) * TAU / bins as f64, radius: r / n, occupancy: n / total }
        })
        .collect()
}

/// Net number of turns of the cavity phase over the trajectory.
pub fn cavity_winding(traj: &Trajectory) -> f64 {
    let mut total = 0.0;
    for w in traj.states.windows(2) {
        let (a, b) = (w[0].cavity, w[1].cavity);
        let d = b.im.atan2(b.re) - a.im.atan2(a.re);
        total += (d + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    }
    total / TAU
}

/// (max − min) / mean of the vertex radii.
pub fn vertex_radius_distortion(vertices: &[CavityVertex]) -> Option<f64> {
    if vertices.len() < 2 {
        return None;
    }
    let r: Vec<f64> = vertices.iter().map(|v| v.radius).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let max = r.iter().cloned().fold(f64::MIN, f64::max);
    let min = r.iter().cloned().fold(f64::MAX, f64::min);
    Some((max - min) / mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemState;
    use crate::stationary::find_all_stationary;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn plan_examples() {
        let p = make_plan(2.0 * PI / 3.0, 40.0, true).unwrap();
        assert!((p.pop_ratio - 2.0).abs() < 1e-12);
        assert!((p.freq_ratio - 0.5).abs() < 1e-12);
        assert!((p.coupling_ratio - 2f64.sqrt()).abs() < 1e-12);
        let z = make_plan(0.0, 40.0, true).unwrap();
        assert_eq!((z.pop_ratio, z.freq_ratio), (1.0, 1.0));
        assert!((make_plan(PI / 3.0, 1.0, false).unwrap().pop_ratio - 2.0).abs() < 1e-12);
        assert!(make_plan(PI / 2.0, 1.0, false).is_err());
    }

    #[test]
    fn renormalized_coupling_is_uniform() {
        let plan = make_plan(2.0, 33.0, true).unwrap();
        let p = params_from_plan(&plan, &ModelParams::benchmark(0.0, 0.0, 1.0));
        for s in p.source_coupling() {
            assert!((s - 33.0).abs() < 1e-12);
        }
        for i in 0..3 {
            assert!((p.omega[i] * p.weight[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_phase_plan_leaves_base_unchanged() {
        let base = ModelParams::benchmark(0.05, 0.0, 20.0);
        assert_eq!(params_from_plan(&make_plan(0.0, 20.0, true).unwrap(), &base), base);
    }

    #[test]
    fn json_round_trip() {
        let plan = make_plan(2.2, 17.5, false).unwrap();
        let text = plan.to_json();
        assert!(text.contains("\"Lambda\""));
        assert_eq!(CompensationPlan::from_json(&text).unwrap(), plan);
    }

    /// Polygon orbit that lingers near each corner; corner k has radius radii[k].
    fn polygon_orbit(radii: &[f64], turns: usize) -> Trajectory {
        let n = radii.len();
        let per = 400;
        let mut states = Vec::new();
        for step in 0..turns * n * per {
            let k = (step / per) % n;
            let u = (step % per) as f64 / per as f64;
            // smoothstep keeps the phase near the corner for most of the segment
            let e = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
            let th = TAU * (k as f64 + e) / n as f64 + 0.1;
            let r = radii[k] + (radii[(k + 1) % n] - radii[k]) * e;
            states.push(SystemState { cavity: Complex64::from_polar(r, th), ..SystemState::normal() });
        }
        let times = (0..states.len()).map(|i| i as f64).collect();
        Trajectory { times, states, params: ModelParams::benchmark(0.0, 0.0, 1.0) }
    }

    #[test]
    fn regular_hexagon_has_no_distortion() {
        let tr = polygon_orbit(&[0.09; 6], 3);
        let v = cavity_vertices(&tr, 36, 0.5);
        assert_eq!(v.len(), 6);
        assert!(vertex_radius_distortion(&v).unwrap() < 1e-9);
        assert!((cavity_winding(&tr) - 3.0).abs() < 0.01);
    }

    #[test]
    fn uneven_hexagon_distortion() {
        let radii = [0.10, 0.09, 0.08, 0.10, 0.09, 0.08];
        let v = cavity_vertices(&polygon_orbit(&radii, 2), 36, 0.5);
        assert_eq!(v.len(), 6);
        let d = vertex_radius_distortion(&v).unwrap();
        assert!(d > 0.1 && d < 0.25 + 1e-9, "{d}");
    }

    #[test]
    fn stationary_field_has_one_vertex() {
        let mut tr = polygon_orbit(&[0.05; 6], 1);
        for st in &mut tr.states {
            st.cavity = Complex64::new(0.03, 0.04);
        }
        assert_eq!(cavity_vertices(&tr, 36, 0.5).len(), 1);
        assert!(vertex_radius_distortion(&cavity_vertices(&tr, 36, 0.5)).is_none());
        assert_eq!(cavity_winding(&tr), 0.0);
    }

    #[test]
    fn full_plan_keeps_stationary_roots() {
        let phi = 2.0 * PI / 3.0;
        let hom = ModelParams::benchmark(0.0, phi, 54.0);
        let comp = params_from_plan(&make_plan(phi, 54.0, true).unwrap(), &hom);
        let a = find_all_stationary(&hom, &Default::default()).unwrap();
        let b = find_all_stationary(&comp, &Default::default()).unwrap();
        assert_eq!(a.len(), b.len());
        for r in &a {
            assert!(b.iter().any(|q| r.distance(q) < 1e-8));
        }
    }
}
