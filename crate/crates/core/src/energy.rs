//! Energy landscape of the reciprocal (κ = 0) model: local and global minima
//! of the effective spin energy and the resulting ground-state phases.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{energy_eff, energy_eff_gradient, ModelParams, Species};
use crate::stationary::{PhaseFlag, PhaseLabel, PhaseTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundConfig {
    pub sx: [f64; 3],
    pub energy: f64,
    pub hessian_positive: bool,
    /// Within the degeneracy tolerance of the lowest energy found.
    pub global: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptions {
    /// Absolute energy window, in units of the mean Ω, for degenerate minima.
    pub e_tol: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub dedup_tol: f64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions { e_tol: 1e-9, grad_tol: 1e-12, max_iter: 500, dedup_tol: 1e-7 }
    }
}

fn require_reciprocal(p: &ModelParams) -> Result<()> {
    p.validate()?;
    if p.kappa != 0.0 {
        return Err(Error::InvalidParams(format!("energy landscape needs kappa = 0, got {}", p.kappa)));
    }
    Ok(())
}

/// Hessian of the effective energy in s_x.
pub fn energy_hessian(sx: [f64; 3], p: &ModelParams) -> Matrix3<f64> {
    let lam = p.source_coupling();
    Matrix3::from_fn(|i, j| {
        let c = ((Species::from_index(i).as_f64() - Species::from_index(j).as_f64()) * p.phi).cos();
        let mut h = -lam[i] * lam[j] * c / (2.0 * p.omega_c);
        if i == j {
            let r2 = (1.0 - sx[i] * sx[i]).max(1e-300);
            h += 0.5 * p.weight[i] * p.omega[i] / (r2 * r2.sqrt());
        }
        h
    })
}

fn energy_or_inf(sx: [f64; 3], p: &ModelParams) -> f64 {
    if sx.iter().any(|s| s.abs() >= 1.0) {
        return f64::INFINITY;
    }
    energy_eff(sx, p).unwrap_or(f64::INFINITY)
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Descends from `seed` with Newton steps where the Hessian is positive
/// definite and gradient steps elsewhere, backtracking on the energy.
fn descend(seed: [f64; 3], p: &ModelParams, opts: &EnergyOptions) -> [f64; 3] {
    let mut x = seed;
    let mut e = energy_or_inf(x, p);
    for _ in 0..opts.max_iter {
        let g = energy_eff_gradient(x, p);
        if norm3(&g) < opts.grad_tol {
            break;
        }
        let gv = Vector3::from(g);
        let h = energy_hessian(x, p);
        let (dir, newton) = match h.cholesky() {
            Some(ch) => (-ch.solve(&gv), true),
            None => (-gv / h.norm().max(1.0), false),
        };
        let gn = norm3(&g);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial = [x[0] + t * dir[0], x[1] + t * dir[1], x[2] + t * dir[2]];
            let et = energy_or_inf(trial, p);
            let flatter = newton && et.is_finite() && norm3(&energy_eff_gradient(trial, p)) < gn;
            if et <= e || flatter {
                x = trial;
                e = et.min(e);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

/// The 25 starting points: zero and the eight sign patterns at three
/// magnitudes.
pub fn energy_seeds() -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]];
    for mag in [0.3, 0.7, 0.95] {
        for pattern in 0..8u32 {
            let sign = |b: u32| if pattern >> b & 1 == 1 { -mag } else { mag };
            out.push([sign(0), sign(1), sign(2)]);
        }
    }
    out
}

/// All local minima reached from the standard seeds, sorted by energy,
/// with the degenerate lowest ones marked global.
pub fn minimize_energy(p: &ModelParams, opts: &EnergyOptions) -> Result<Vec<GroundConfig>> {
    require_reciprocal(p)?;
    let mut found: Vec<GroundConfig> = Vec::new();
    for seed in energy_seeds() {
        let x = descend(seed, p, opts);
        let hessian_positive = energy_hessian(x, p).cholesky().is_some();
        if !hessian_positive || norm3(&energy_eff_gradient(x, p)) > 1e-10 {
            continue;
        }
        if found.iter().any(|f| (0..3).all(|i| (f.sx[i] - x[i]).abs() < opts.dedup_tol)) {
            continue;
        }
        found.push(GroundConfig { sx: x, energy: energy_eff(x, p)?, hessian_positive, global: false });
    }
    found.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.sx.partial_cmp(&b.sx).unwrap()));
    let om = p.omega.iter().sum::<f64>() / 3.0;
    if let Some(e0) = found.first().map(|f| f.energy) {
        for f in &mut found {
            f.global = f.energy - e0 <= opts.e_tol * om;
        }
    }
    Ok(found)
}

/// Ground-state label from the number of degenerate global minima.
pub fn ground_phase(p: &ModelParams, opts: &EnergyOptions) -> Result<PhaseLabel> {
    let minima = minimize_energy(p, opts)?;
    let global: Vec<&GroundConfig> = minima.iter().filter(|m| m.global).collect();
    let trivial = global.len() == 1 && global[0].sx.iter().all(|s| s.abs() < 1e-6);
    Ok(match global.len() {
        1 if trivial => PhaseLabel::new(PhaseTag::NP, 1),
        2 => PhaseLabel::new(PhaseTag::SOP, 2),
        4 => PhaseLabel::new(PhaseTag::PFSOP, 4),
        6 => PhaseLabel::new(PhaseTag::FSOP, 6),
        k => {
            let mut l = PhaseLabel::new(PhaseTag::SOP, k);
            l.flags.push(PhaseFlag::IrregularCount { count: k });
            l
        }
    })
}

/// Positive minimizer of the single-species energy
/// −(Ω/2)√(1−s²) − (λ²/4ω_c)s², found by golden-section search.
pub fn local_spin_minimum(lambda: f64, p: &ModelParams) -> Result<f64> {
    require_reciprocal(p)?;
    let om = p.omega[1];
    if lambda * lambda <= om * p.omega_c {
        return Ok(0.0);
    }
    let f = |s: f64| -0.5 * om * (1.0 - s * s).max(0.0).sqrt() - lambda * lambda / (4.0 * p.omega_c) * s * s;
    let mut s = golden_min(f, 0.0, 1.0, 1e-12);
    // Newton polish on the stationarity condition.
    let target = lambda * lambda / (p.omega_c * om);
    for _ in 0..4 {
        let r = (1.0 - s * s).sqrt();
        let step = (1.0 / r - target) / (s / (r * r * r));
        if !step.is_finite() {
            break;
        }
        s = (s - step).clamp(0.0, 1.0 - f64::EPSILON);
    }
    Ok(s)
}

/// Minimizer of a unimodal function on [a, b].
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn reciprocal(phi: f64, lam: f64) -> ModelParams {
        ModelParams::homogeneous(500.0, 0.0, 0.0, phi, lam)
    }

    #[test]
    fn rejects_open_cavity() {
        assert!(minimize_energy(&ModelParams::benchmark(0.0, 1.0, 75.0), &Default::default()).is_err());
    }

    #[test]
    fn below_threshold_single_trivial_minimum() {
        let m = minimize_energy(&reciprocal(1.0, 5.0), &Default::default()).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m[0].sx.iter().all(|s| s.abs() < 1e-9));
        assert_eq!(ground_phase(&reciprocal(1.0, 5.0), &Default::default()).unwrap().tag, PhaseTag::NP);
    }

    #[test]
    fn frustrated_point_has_six_minima() {
        let p = reciprocal(2.0 * PI / 3.0, 75.0);
        let m = minimize_energy(&p, &Default::default()).unwrap();
        let g: Vec<_> = m.iter().filter(|c| c.global).collect();
        assert_eq!(g.len(), 6);
        for c in g {
            let neg = c.sx.iter().filter(|s| **s < 0.0).count();
            assert!(neg == 1 || neg == 2);
            assert!(c.sx.iter().all(|s| s.abs() < 1.0));
        }
    }

    #[test]
    fn ferro_point_has_two_minima() {
        let m = minimize_energy(&reciprocal(0.0, 75.0), &Default::default()).unwrap();
        let g: Vec<_> = m.iter().filter(|c| c.global).collect();
        assert_eq!(g.len(), 2);
        for c in g {
            assert!((c.sx[0] - c.sx[1]).abs() < 1e-9 && (c.sx[1] - c.sx[2]).abs() < 1e-9);
        }
    }

    #[test]
    fn intermediate_angle_is_partial() {
        let l = ground_phase(&reciprocal(PI / 2.0, 75.0), &Default::default()).unwrap();
        assert_eq!((l.tag, l.degeneracy), (PhaseTag::PFSOP, 4));
    }

    #[test]
    fn off_tuned_is_not_fully_frustrated() {
        for d in [-0.05, 0.05] {
            let l = ground_phase(&reciprocal(2.0 * PI / 3.0 + d, 75.0), &Default::default()).unwrap();
            assert!(l.degeneracy < 6, "{l:?}");
        }
    }

    #[test]
    fn local_minimum_matches_stationarity() {
        let p = reciprocal(0.0, 1.0);
        let thr = (p.omega[1] * p.omega_c).sqrt();
        assert_eq!(local_spin_minimum(0.9 * thr, &p).unwrap(), 0.0);
        let lam = 2.0 * thr;
        let s = local_spin_minimum(lam, &p).unwrap();
        let closed = (1.0 - (p.omega_c / (lam * lam)).powi(2)).sqrt();
        assert!((s - closed).abs() < 1e-9, "{s} vs {closed}");
        assert!(local_spin_minimum(1e4, &p).unwrap() > 0.999);
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        assert!((golden_min(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-12) - 0.3).abs() < 1e-9);
    }
}
