//! Stationary states of the spin-only dynamics and their phase label.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{Matrix6, Vector6};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{evolve, perturb, IntegratorConfig, Mode};
use crate::model::{apply_symmetry, Eom, ModelParams, SpinVector, SymmetryOp, SystemState};
use crate::stability::{self, chart_of, lift, reduced_jacobian, reduced_rhs, StabilityOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub spins: [SpinVector; 3],
    pub cavity: Complex64,
    pub residual: f64,
    pub stable: bool,
    /// Largest real part of the linear spectrum, once assessed.
    pub max_re: Option<f64>,
}

impl FixedPoint {
    pub fn new(spins: [SpinVector; 3], p: &ModelParams) -> Self {
        let eom = Eom::new(p);
        let st = SystemState { spins, cavity: Complex64::new(0.0, 0.0) };
        let y = st.to_spin_vec();
        FixedPoint { spins, cavity: eom.cavity(&y), residual: residual(&spins, p), stable: false, max_re: None }
    }

    pub fn normal(p: &ModelParams) -> Self {
        Self::new([SpinVector::DOWN; 3], p)
    }

    pub fn state(&self) -> SystemState {
        SystemState { spins: self.spins, cavity: self.cavity }
    }

    pub fn sx(&self) -> [f64; 3] {
        self.spins.map(|s| s.sx)
    }

    /// Max-norm distance in spin space.
    pub fn distance(&self, other: &FixedPoint) -> f64 {
        let mut d: f64 = 0.0;
        for (a, b) in self.spins.iter().zip(&other.spins) {
            d = d.max((a.sx - b.sx).abs()).max((a.sy - b.sy).abs()).max((a.sz - b.sz).abs());
        }
        d
    }

    pub fn is_trivial(&self, tol: f64) -> bool {
        self.spins.iter().all(|s| s.sx.abs() < tol && s.sy.abs() < tol)
    }
}

/// ‖rhs_adiabatic‖_∞.
pub fn residual(spins: &[SpinVector; 3], p: &ModelParams) -> f64 {
    let eom = Eom::new(p);
    residual_with(&eom, spins)
}

fn residual_with(eom: &Eom, spins: &[SpinVector; 3]) -> f64 {
    let y = SystemState { spins: *spins, cavity: Complex64::new(0.0, 0.0) }.to_spin_vec();
    eom.adiabatic(&y).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-11, max_iter: 200 }
    }
}

/// Damped Newton iteration in the (s_x, s_y) chart. The hemisphere of each
/// spin is taken from the seed and kept throughout.
pub fn newton_solve(seed: &[SpinVector; 3], p: &ModelParams, opts: &NewtonOptions) -> Result<FixedPoint> {
    let eom = Eom::new(p);
    let seed = seed.map(|s| s.normalized());
    let (mut z, sigma) = chart_of(&seed);
    let mut spins = lift(&z, &sigma).ok_or_else(|| Error::Domain("seed on the equator".into()))?;
    let mut res = residual_with(&eom, &spins);
    let norm = |f: &[f64; 6]| f.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut f = reduced_rhs(&eom, &spins);
    for _ in 0..opts.max_iter {
        if res < opts.tol {
            let spins = polish(&eom, spins, sigma, res);
            return Ok(FixedPoint::new(spins, p));
        }
        let jac: Matrix6<f64> = reduced_jacobian(&eom, &spins);
        let rhs = -Vector6::from_column_slice(&f);
        let step = jac.lu().solve(&rhs).ok_or(Error::SingularJacobian)?;
        if !step.iter().all(|x| x.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        let f_norm = norm(&f);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: [f64; 6] = std::array::from_fn(|k| z[k] + t * step[k]);
            if let Some(s) = lift(&trial, &sigma) {
                let ft = reduced_rhs(&eom, &s);
                if norm(&ft) < (1.0 - 1e-4 * t) * f_norm || t < 1e-6 {
                    z = trial;
                    spins = s;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence("line search failed".into()));
        }
        res = residual_with(&eom, &spins);
    }
    if res < opts.tol {
        return Ok(FixedPoint::new(spins, p));
    }
    Err(Error::NoConvergence(format!("residual {res:.3e} after {} iterations", opts.max_iter)))
}

/// Full Newton steps past the tolerance, kept while the residual shrinks.
fn polish(eom: &Eom, mut spins: [SpinVector; 3], sigma: [f64; 3], mut res: f64) -> [SpinVector; 3] {
    for _ in 0..3 {
        let (z, _) = chart_of(&spins);
        let f = reduced_rhs(eom, &spins);
        let Some(step) = reduced_jacobian(eom, &spins).lu().solve(&-Vector6::from_column_slice(&f)) else { break };
        let trial: [f64; 6] = std::array::from_fn(|k| z[k] + step[k]);
        let Some(s) = lift(&trial, &sigma) else { break };
        let r = residual_with(eom, &s);
        if r >= res {
            break;
        }
        spins = s;
        res = r;
    }
    spins
}

/// Seeds used by [`find_all_stationary`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStrategy {
    /// Magnitudes s* applied to the eight (±1, ±1, ±1) sign patterns of s_x.
    pub pattern_scales: Vec<f64>,
    pub include_normal: bool,
    pub n_random: usize,
    pub seed: u64,
    pub dedup_tol: f64,
    pub newton: NewtonOptions,
}

impl Default for SeedStrategy {
    fn default() -> Self {
        SeedStrategy {
            pattern_scales: vec![0.5, 0.9],
            include_normal: true,
            n_random: 64,
            seed: 0,
            dedup_tol: 1e-6,
            newton: NewtonOptions::default(),
        }
    }
}

impl SeedStrategy {
    pub fn seeds(&self) -> Vec<[SpinVector; 3]> {
        let mut out = Vec::new();
        if self.include_normal {
            out.push([SpinVector::DOWN; 3]);
        }
        for &s in &self.pattern_scales {
            for bits in 0..8u32 {
                let sign = |k: u32| if bits & (1 << (2 - k)) == 0 { 1.0 } else { -1.0 };
                out.push(std::array::from_fn(|i| SpinVector::lower(s * sign(i as u32), 0.0)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.n_random {
            out.push(std::array::from_fn(|_| {
                let u: f64 = rng.random_range(-1.0..1.0);
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - u * u).sqrt();
                SpinVector::new(r * t.cos(), r * t.sin(), -u.abs())
            }));
        }
        out
    }
}

fn push_unique(roots: &mut Vec<FixedPoint>, fp: FixedPoint, tol: f64) -> bool {
    if roots.iter().any(|r| r.distance(&fp) < tol) {
        return false;
    }
    roots.push(fp);
    true
}

/// All roots reached from the seeds, deduplicated in seed order and closed
/// under parity.
pub fn find_all_stationary(p: &ModelParams, strategy: &SeedStrategy) -> Result<Vec<FixedPoint>> {
    let seeds = strategy.seeds();
    let solved: Vec<Option<FixedPoint>> =
        seeds.par_iter().map(|s| newton_solve(s, p, &strategy.newton).ok()).collect();
    let mut roots = Vec::new();
    for fp in solved.into_iter().flatten() {
        push_unique(&mut roots, fp, strategy.dedup_tol);
    }
    let n = roots.len();
    for k in 0..n {
        let img = apply_symmetry(&roots[k].state(), SymmetryOp::Z2Parity);
        let mut fp = FixedPoint::new(img.spins, p);
        fp.residual = fp.residual.max(roots[k].residual);
        push_unique(&mut roots, fp, strategy.dedup_tol);
    }
    if roots.is_empty() {
        return Err(Error::NoConvergence("no stationary state found, not even the normal phase".into()));
    }
    Ok(roots)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseTag {
    NP,
    SOP,
    #[serde(rename = "pFSOP")]
    PFSOP,
    FSOP,
    DP,
}

impl PhaseTag {
    pub const ALL: [PhaseTag; 5] = [PhaseTag::NP, PhaseTag::SOP, PhaseTag::PFSOP, PhaseTag::FSOP, PhaseTag::DP];

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseTag::NP => "NP",
            PhaseTag::SOP => "SOP",
            PhaseTag::PFSOP => "pFSOP",
            PhaseTag::FSOP => "FSOP",
            PhaseTag::DP => "DP",
        }
    }
}

impl fmt::Display for PhaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PhaseTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Malformed(format!("unknown phase tag `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseFlag {
    /// Stable nontrivial count outside {2, 4, 6}.
    IrregularCount { count: usize },
    /// The normal phase is stable alongside nontrivial stable roots.
    NormalCoexists,
    /// Roots whose linear verdict fell in the dead band and were settled by integration.
    MarginalResolved { count: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseLabel {
    pub tag: PhaseTag,
    pub degeneracy: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<PhaseFlag>,
}

impl PhaseLabel {
    pub fn new(tag: PhaseTag, degeneracy: usize) -> Self {
        PhaseLabel { tag, degeneracy, flags: Vec::new() }
    }

    pub fn is_flagged(&self) -> bool {
        self.flags.iter().any(|f| !matches!(f, PhaseFlag::MarginalResolved { .. }))
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(d={})", self.tag, self.degeneracy)
    }
}

/// Distance below which a root counts as the normal phase.
const TRIVIAL_TOL: f64 = 1e-6;

/// Phase label from roots that already carry a stability verdict.
pub fn classify_phase(roots: &[FixedPoint], _p: &ModelParams) -> PhaseLabel {
    let np_stable = roots.iter().any(|r| r.is_trivial(TRIVIAL_TOL) && r.stable);
    let n = roots.iter().filter(|r| !r.is_trivial(TRIVIAL_TOL) && r.stable).count();
    let mut label = match n {
        0 if np_stable => PhaseLabel::new(PhaseTag::NP, 1),
        0 => PhaseLabel::new(PhaseTag::DP, 0),
        2 => PhaseLabel::new(PhaseTag::SOP, 2),
        4 => PhaseLabel::new(PhaseTag::PFSOP, 4),
        6 => PhaseLabel::new(PhaseTag::FSOP, 6),
        k => {
            let mut l = PhaseLabel::new(PhaseTag::SOP, k);
            l.flags.push(PhaseFlag::IrregularCount { count: k });
            l
        }
    };
    if n > 0 && np_stable {
        label.flags.push(PhaseFlag::NormalCoexists);
    }
    label
}

/// How roots in the dead band are settled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalPolicy {
    pub kick: f64,
    pub t_end: f64,
    /// Final distance from the root below which it counts as stable.
    pub radius: f64,
}

impl Default for MarginalPolicy {
    fn default() -> Self {
        MarginalPolicy { kick: 1e-6, t_end: 200.0, radius: 1e-4 }
    }
}

/// Roots with stability verdicts and the resulting phase label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub roots: Vec<FixedPoint>,
    pub label: PhaseLabel,
}

impl Census {
    pub fn stable_roots(&self) -> impl Iterator<Item = &FixedPoint> {
        self.roots.iter().filter(|r| r.stable)
    }

    pub fn stable_nontrivial(&self) -> Vec<&FixedPoint> {
        self.roots.iter().filter(|r| r.stable && !r.is_trivial(TRIVIAL_TOL)).collect()
    }

    pub fn normal(&self) -> Option<&FixedPoint> {
        self.roots.iter().find(|r| r.is_trivial(TRIVIAL_TOL))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CensusOptions {
    pub seeds: SeedStrategy,
    pub stability: StabilityOptions,
    pub marginal: MarginalPolicy,
}

fn settles_back(fp: &FixedPoint, p: &ModelParams, policy: &MarginalPolicy, seed: u64) -> bool {
    let start = perturb(&fp.state(), policy.kick, seed);
    let cfg = IntegratorConfig::default().with_t_end(policy.t_end).with_mode(Mode::Adiabatic);
    match evolve(&start, p, &cfg) {
        Ok(end) => {
            let d = end
                .spins
                .iter()
                .zip(&fp.spins)
                .map(|(a, b)| (a.sx - b.sx).abs().max((a.sy - b.sy).abs()).max((a.sz - b.sz).abs()))
                .fold(0.0, f64::max);
            d < policy.radius
        }
        Err(_) => false,
    }
}

/// Root census with stability verdicts and phase label.
pub fn census(p: &ModelParams, opts: &CensusOptions) -> Result<Census> {
    p.validate()?;
    let mut roots = find_all_stationary(p, &opts.seeds)?;
    let mut marginal = 0;
    let verdicts: Vec<Result<(f64, bool, bool)>> = roots
        .par_iter()
        .enumerate()
        .map(|(k, r)| {
            let rep = stability::assess(r, p, &opts.stability)?;
            let stable = if rep.marginal {
                settles_back(r, p, &opts.marginal, opts.seeds.seed.wrapping_add(k as u64))
            } else {
                rep.stable
            };
            Ok((rep.max_re, stable, rep.marginal))
        })
        .collect();
    for (r, v) in roots.iter_mut().zip(verdicts) {
        let (max_re, stable, marg) = v?;
        r.max_re = Some(max_re);
        r.stable = stable;
        marginal += marg as usize;
    }
    let mut label = classify_phase(&roots, p);
    if marginal > 0 {
        label.flags.push(PhaseFlag::MarginalResolved { count: marginal });
    }
    Ok(Census { roots, label })
}

#[derive(Serialize)]
struct RootLine<'a> {
    sx: [f64; 3],
    sy: [f64; 3],
    sz: [f64; 3],
    cavity: [f64; 2],
    residual: f64,
    stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_re: &'a Option<f64>,
}

/// One JSON object per root.
pub fn write_roots_jsonl<W: Write>(mut w: W, roots: &[FixedPoint]) -> Result<()> {
    for r in roots {
        let line = RootLine {
            sx: r.spins.map(|s| s.sx),
            sy: r.spins.map(|s| s.sy),
            sz: r.spins.map(|s| s.sz),
            cavity: [r.cavity.re, r.cavity.im],
            residual: r.residual,
            stable: r.stable,
            max_re: &r.max_re,
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Images of `fp` under the group generated by the cyclic shift and parity.
pub fn z6_orbit(fp: &FixedPoint) -> Vec<SystemState> {
    let mut out = Vec::with_capacity(6);
    let mut s = fp.state();
    for _ in 0..3 {
        out.push(s);
        out.push(apply_symmetry(&s, SymmetryOp::Z2Parity));
        s = apply_symmetry(&s, SymmetryOp::Z3Cyclic);
    }
    out
}
