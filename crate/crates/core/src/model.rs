//! Mean-field equations of motion for three collective spins coupled to one
//! damped cavity mode.
//!
//! All quantities are normalized: each spin is a unit Bloch vector
//! `s = S / N_m` and the cavity amplitude is `a = α / √N̄`. In these units
//! the particle number drops out of every equation. Species-resolved
//! parameters are always stored per species; the homogeneous model is just
//! the special case of identical entries.
//!
//! Vector layouts follow the species order `(−1, 0, +1)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnetic sublevel label `m ∈ {−1, 0, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct Species(i8);

impl Species {
    pub const MINUS: Species = Species(-1);
    pub const ZERO: Species = Species(0);
    pub const PLUS: Species = Species(1);

    /// Canonical ordering used by every array in the crate.
    pub const ALL: [Species; 3] = [Species::MINUS, Species::ZERO, Species::PLUS];

    pub fn new(m: i8) -> Result<Self> {
        match m {
            -1..=1 => Ok(Species(m)),
            _ => Err(Error::Domain(format!("species label {m} outside {{-1, 0, 1}}"))),
        }
    }

    pub fn m(self) -> i8 {
        self.0
    }

    pub fn index(self) -> usize {
        (self.0 + 1) as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < 3, "species index {i} out of range");
        Species(i as i8 - 1)
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

impl TryFrom<i8> for Species {
    type Error = Error;
    fn try_from(m: i8) -> Result<Self> {
        Species::new(m)
    }
}

impl From<Species> for i8 {
    fn from(s: Species) -> i8 {
        s.0
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Physical constants of the model. `Ω = 1` sets the unit of energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Cavity detuning ω_c.
    pub omega_c: f64,
    /// Cavity decay κ.
    pub kappa: f64,
    /// Spin damping γ.
    pub gamma: f64,
    /// Species-dependent phase φ.
    pub phi: f64,
    /// Spin frequencies Ω_m.
    pub omega: [f64; 3],
    /// Spin-cavity couplings λ_m.
    pub lam: [f64; 3],
    /// Population fractions N_m / N̄.
    pub weight: [f64; 3],
}

impl ModelParams {
    pub const BENCH_OMEGA_C: f64 = 500.0;
    pub const BENCH_KAPPA: f64 = 150.0;

    pub fn homogeneous(omega_c: f64, kappa: f64, gamma: f64, phi: f64, lam: f64) -> Self {
        ModelParams {
            omega_c,
            kappa,
            gamma,
            phi,
            omega: [1.0; 3],
            lam: [lam; 3],
            weight: [1.0; 3],
        }
    }

    /// ω_c = 500, κ = 150, Ω = 1 with the given γ, φ and λ.
    pub fn benchmark(gamma: f64, phi: f64, lam: f64) -> Self {
        Self::homogeneous(Self::BENCH_OMEGA_C, Self::BENCH_KAPPA, gamma, phi, lam)
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Sets every λ_m to `lam`.
    pub fn with_lambda(mut self, lam: f64) -> Self {
        self.lam = [lam; 3];
        self
    }

    /// Scales all couplings so that the species-0 coupling equals `lam`,
    /// keeping the inhomogeneity pattern.
    pub fn with_lambda_scaled(mut self, lam: f64) -> Self {
        let r = if self.lam[1] != 0.0 { lam / self.lam[1] } else { 0.0 };
        if r == 0.0 {
            self.lam = [lam; 3];
        } else {
            for l in &mut self.lam {
                *l *= r;
            }
        }
        self
    }

    pub fn is_homogeneous(&self) -> bool {
        let same = |v: &[f64; 3]| v[0] == v[1] && v[1] == v[2];
        same(&self.omega) && same(&self.lam) && same(&self.weight)
    }

    /// Parameters seen by the mirror-transformed state: φ → π − φ and the
    /// per-species entries of `±1` exchanged.
    pub fn mirrored(&self) -> Self {
        let swap = |v: [f64; 3]| [v[2], v[1], v[0]];
        ModelParams {
            phi: PI - self.phi,
            omega: swap(self.omega),
            lam: swap(self.lam),
            weight: swap(self.weight),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega_c, self.kappa, self.gamma, self.phi]
            .into_iter()
            .chain(self.omega)
            .chain(self.lam)
            .chain(self.weight);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.omega_c <= 0.0 {
            return Err(Error::InvalidParams(format!("omega_c = {} must be > 0", self.omega_c)));
        }
        if self.kappa < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParams("kappa and gamma must be >= 0".into()));
        }
        if self.omega.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParams("spin frequencies must be > 0".into()));
        }
        if self.lam.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidParams("couplings must be >= 0".into()));
        }
        if self.weight.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParams("population weights must be > 0".into()));
        }
        Ok(())
    }

    /// Renormalized coupling Λ_m = λ_m √w_m, the strength with which species
    /// `m` sources the cavity.
    pub fn source_coupling(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.lam[i] * self.weight[i].sqrt())
    }

    /// Strength λ_m / √w_m with which the cavity acts back on species `m`.
    pub fn back_coupling(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.lam[i] / self.weight[i].sqrt())
    }
}

/// D[Φ] = ω_c cos Φ + κ sin Φ.
pub fn d_coupling(phi: f64, p: &ModelParams) -> f64 {
    p.omega_c * phi.cos() + p.kappa * phi.sin()
}

/// Normalized Bloch vector of one species.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpinVector {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl SpinVector {
    pub const DOWN: SpinVector = SpinVector { sx: 0.0, sy: 0.0, sz: -1.0 };

    pub fn new(sx: f64, sy: f64, sz: f64) -> Self {
        SpinVector { sx, sy, sz }
    }

    /// Point on the lower hemisphere with the given transverse components.
    pub fn lower(sx: f64, sy: f64) -> Self {
        let sz = -(1.0 - sx * sx - sy * sy).max(0.0).sqrt();
        SpinVector { sx, sy, sz }
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.sx * self.sx + self.sy * self.sy + self.sz * self.sz
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        SpinVector { sx: self.sx / n, sy: self.sy / n, sz: self.sz / n }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        SpinVector { sx: v[0], sy: v[1], sz: v[2] }
    }
}

/// Three spins (species order −1, 0, +1) and the rescaled cavity amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub spins: [SpinVector; 3],
    pub cavity: Complex64,
}

/// Flat layout of a full state: three `(sx, sy, sz)` triples followed by
/// `(Re a, Im a)`.
pub type FullVec = [f64; 11];
/// Flat layout of the spin-only state used after adiabatic elimination.
pub type SpinVec = [f64; 9];

impl SystemState {
    /// Normal phase: all spins down, empty cavity.
    pub fn normal() -> Self {
        SystemState { spins: [SpinVector::DOWN; 3], cavity: Complex64::new(0.0, 0.0) }
    }

    pub fn spin(&self, s: Species) -> &SpinVector {
        &self.spins[s.index()]
    }

    pub fn sx(&self) -> [f64; 3] {
        self.spins.map(|s| s.sx)
    }

    pub fn to_full(&self) -> FullVec {
        let mut y = [0.0; 11];
        y[..9].copy_from_slice(&self.to_spin_vec());
        y[9] = self.cavity.re;
        y[10] = self.cavity.im;
        y
    }

    pub fn from_full(y: &FullVec) -> Self {
        let mut spins = [SpinVector::default(); 3];
        for (i, s) in spins.iter_mut().enumerate() {
            *s = SpinVector::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
        }
        SystemState { spins, cavity: Complex64::new(y[9], y[10]) }
    }

    pub fn to_spin_vec(&self) -> SpinVec {
        let mut y = [0.0; 9];
        for (i, s) in self.spins.iter().enumerate() {
            y[3 * i] = s.sx;
            y[3 * i + 1] = s.sy;
            y[3 * i + 2] = s.sz;
        }
        y
    }

    pub fn from_spin_vec(y: &SpinVec, cavity: Complex64) -> Self {
        let mut full = [0.0; 11];
        full[..9].copy_from_slice(y);
        full[9] = cavity.re;
        full[10] = cavity.im;
        Self::from_full(&full)
    }

    /// Largest deviation of any spin from the unit sphere.
    pub fn norm_defect(&self) -> f64 {
        self.spins.iter().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Max-norm distance over all eleven real components.
    pub fn distance(&self, other: &SystemState) -> f64 {
        let (a, b) = (self.to_full(), other.to_full());
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.to_full().iter().all(|x| x.is_finite())
    }
}

/// Time derivative of a [`SystemState`], same layout but no norm constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateRate {
    pub spins: [[f64; 3]; 3],
    pub cavity: Complex64,
}

impl StateRate {
    pub fn from_full(dy: &FullVec) -> Self {
        let mut spins = [[0.0; 3]; 3];
        for (i, s) in spins.iter_mut().enumerate() {
            s.copy_from_slice(&dy[3 * i..3 * i + 3]);
        }
        StateRate { spins, cavity: Complex64::new(dy[9], dy[10]) }
    }

    pub fn to_full(&self) -> FullVec {
        let mut y = [0.0; 11];
        for i in 0..3 {
            y[3 * i..3 * i + 3].copy_from_slice(&self.spins[i]);
        }
        y[9] = self.cavity.re;
        y[10] = self.cavity.im;
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.to_full().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Precomputed coefficients of the equations of motion for one parameter
/// set. Building this once per trajectory keeps trigonometry out of the
/// inner loop.
#[derive(Clone, Debug)]
pub struct Eom {
    params: ModelParams,
    /// e^{imφ}
    phase: [Complex64; 3],
    /// λ_m / √w_m
    back: [f64; 3],
    /// λ_m √w_m
    source: [f64; 3],
    /// Λ-weighted D[(m − m')φ] / (ω_c² + κ²), pre-multiplied by λ_m / √w_m.
    kernel: [[f64; 3]; 3],
    /// −(ω_c + iκ) / (2(ω_c² + κ²))
    cavity_gain: Complex64,
}

impl Eom {
    pub fn new(p: &ModelParams) -> Self {
        let phase = Species::ALL.map(|s| Complex64::from_polar(1.0, s.as_f64() * p.phi));
        let back = p.back_coupling();
        let source = p.source_coupling();
        let denom = p.omega_c * p.omega_c + p.kappa * p.kappa;
        let mut kernel = [[0.0; 3]; 3];
        for (i, si) in Species::ALL.iter().enumerate() {
            for (j, sj) in Species::ALL.iter().enumerate() {
                let d = d_coupling((si.as_f64() - sj.as_f64()) * p.phi, p);
                kernel[i][j] = back[i] * source[j] * d / denom;
            }
        }
        let cavity_gain = -Complex64::new(p.omega_c, p.kappa) / (2.0 * denom);
        Eom { params: p.clone(), phase, back, source, kernel, cavity_gain }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Coupling matrix K with h_m = Σ_{m'} K_{mm'} s_{x,m'} the effective
    /// transverse field on species `m` after adiabatic elimination.
    pub fn kernel(&self) -> &[[f64; 3]; 3] {
        &self.kernel
    }

    /// Right-hand side of the full spin + cavity equations.
    pub fn full(&self, y: &FullVec) -> FullVec {
        let p = &self.params;
        let a = Complex64::new(y[9], y[10]);
        let mut dy = [0.0; 11];
        let mut drive = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            let (sx, sy, sz) = (y[3 * i], y[3 * i + 1], y[3 * i + 2]);
            // e^{−imφ} a + c.c.
            let quad = 2.0 * (self.phase[i].conj() * a).re;
            let field = self.back[i] * quad;
            dy[3 * i] = -p.omega[i] * sy + p.gamma * sx * sz;
            dy[3 * i + 1] = p.omega[i] * sx - field * sz + p.gamma * sy * sz;
            dy[3 * i + 2] = field * sy - p.gamma * (1.0 - sz * sz);
            drive += self.phase[i] * (self.source[i] * sx);
        }
        let da = -Complex64::new(p.kappa, p.omega_c) * a - Complex64::new(0.0, 0.5) * drive;
        dy[9] = da.re;
        dy[10] = da.im;
        dy
    }

    /// Cavity amplitude slaved to the spins.
    pub fn cavity(&self, y: &SpinVec) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            sum += self.phase[i] * (self.source[i] * y[3 * i]);
        }
        self.cavity_gain * sum
    }

    /// Effective transverse fields h_m = (λ_m/√w_m) F̃_m / (ω_c² + κ²).
    pub fn fields(&self, y: &SpinVec) -> [f64; 3] {
        let sx = [y[0], y[3], y[6]];
        self.kernel.map(|row| row[0] * sx[0] + row[1] * sx[1] + row[2] * sx[2])
    }

    /// Right-hand side of the spin-only equations with the cavity eliminated.
    pub fn adiabatic(&self, y: &SpinVec) -> SpinVec {
        let p = &self.params;
        let h = self.fields(y);
        let mut dy = [0.0; 9];
        for i in 0..3 {
            let (sx, sy, sz) = (y[3 * i], y[3 * i + 1], y[3 * i + 2]);
            dy[3 * i] = -p.omega[i] * sy + p.gamma * sx * sz;
            dy[3 * i + 1] = p.omega[i] * sx + h[i] * sz + p.gamma * sy * sz;
            dy[3 * i + 2] = -h[i] * sy - p.gamma * (1.0 - sz * sz);
        }
        dy
    }
}

pub fn rhs_full(state: &SystemState, p: &ModelParams) -> StateRate {
    StateRate::from_full(&Eom::new(p).full(&state.to_full()))
}

pub fn cavity_adiabatic(spins: &[SpinVector; 3], p: &ModelParams) -> Complex64 {
    let st = SystemState { spins: *spins, cavity: Complex64::new(0.0, 0.0) };
    Eom::new(p).cavity(&st.to_spin_vec())
}

/// Spin derivatives with the cavity replaced by [`cavity_adiabatic`].
pub fn rhs_adiabatic(spins: &[SpinVector; 3], p: &ModelParams) -> [[f64; 3]; 3] {
    let st = SystemState { spins: *spins, cavity: Complex64::new(0.0, 0.0) };
    let dy = Eom::new(p).adiabatic(&st.to_spin_vec());
    [0, 1, 2].map(|i| [dy[3 * i], dy[3 * i + 1], dy[3 * i + 2]])
}

/// Mean-field energy per particle of the closed system (conserved when
/// κ = γ = 0).
pub fn mean_field_energy(state: &SystemState, p: &ModelParams) -> f64 {
    let a = state.cavity;
    let mut e = p.omega_c * a.norm_sqr();
    for (i, s) in Species::ALL.iter().enumerate() {
        let quad = 2.0 * (Complex64::from_polar(1.0, -s.as_f64() * p.phi) * a).re;
        let sp = state.spins[i];
        e += p.weight[i] * (0.5 * p.omega[i] * sp.sz + 0.5 * p.back_coupling()[i] * quad * sp.sx);
    }
    e
}

/// Discrete symmetries of the equations of motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymmetryOp {
    /// (a, s_x, s_y) → −(a, s_x, s_y).
    Z2Parity,
    /// Species ±1 exchanged with transverse components negated; pairs with
    /// φ → π − φ (see [`ModelParams::mirrored`]).
    SpeciesMirror,
    /// s_m → s_{m−1} (cyclically) with a → a e^{i2π/3}; a symmetry at φ = 2π/3.
    Z3Cyclic,
}

impl FromStr for SymmetryOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "z2" | "z2parity" | "parity" => Ok(SymmetryOp::Z2Parity),
            "mirror" | "speciesmirror" => Ok(SymmetryOp::SpeciesMirror),
            "z3" | "z3cyclic" | "cyclic" => Ok(SymmetryOp::Z3Cyclic),
            _ => Err(Error::UnknownSymmetry(s.to_string())),
        }
    }
}

const COS_2PI_3: f64 = -0.5;
const SIN_2PI_3: f64 = 0.866_025_403_784_438_6;

pub fn apply_symmetry(state: &SystemState, op: SymmetryOp) -> SystemState {
    let [m, z, p] = state.spins;
    match op {
        SymmetryOp::Z2Parity => {
            let flip = |s: SpinVector| SpinVector::new(-s.sx, -s.sy, s.sz);
            SystemState { spins: state.spins.map(flip), cavity: -state.cavity }
        }
        SymmetryOp::SpeciesMirror => {
            let flip = |s: SpinVector| SpinVector::new(-s.sx, -s.sy, s.sz);
            SystemState { spins: [flip(p), z, flip(m)], cavity: state.cavity }
        }
        SymmetryOp::Z3Cyclic => {
            let rot = Complex64::new(COS_2PI_3, SIN_2PI_3);
            // new s_m = old s_{m−1}: (−1, 0, +1) ← (+1, −1, 0)
            SystemState { spins: [p, m, z], cavity: state.cavity * rot }
        }
    }
}

/// Orthonormal combinations of the three s_x components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectiveCoords {
    pub xc: f64,
    pub xd1: f64,
    pub xd2: f64,
}

pub fn collective_coords(spins: &[SpinVector; 3]) -> CollectiveCoords {
    let (sm, s0, sp) = (spins[0].sx, spins[1].sx, spins[2].sx);
    collective_from_sx([sm, s0, sp])
}

pub(crate) fn collective_from_sx(sx: [f64; 3]) -> CollectiveCoords {
    let [sm, s0, sp] = sx;
    CollectiveCoords {
        xc: (sp + s0 + sm) / 3f64.sqrt(),
        xd1: (sp - 2.0 * s0 + sm) / 6f64.sqrt(),
        xd2: (-sp + sm) / 2f64.sqrt(),
    }
}

/// Spin-only energy per particle after integrating out the cavity in the
/// reciprocal limit (κ is ignored). `sx` in species order (−1, 0, +1); the
/// spins sit on the lower hemisphere with s_y = 0.
pub fn energy_eff(sx: [f64; 3], p: &ModelParams) -> Result<f64> {
    if let Some(bad) = sx.iter().find(|s| s.abs() > 1.0 || !s.is_finite()) {
        return Err(Error::Domain(format!("|s_x| = {bad} exceeds 1")));
    }
    let lam = p.source_coupling();
    let mut local = 0.0;
    for i in 0..3 {
        local -= 0.5 * p.weight[i] * p.omega[i] * (1.0 - sx[i] * sx[i]).sqrt();
    }
    // |Σ Λ_m e^{imφ} s_m|² expanded over pairs
    let mut coherent = 0.0;
    for (i, si) in Species::ALL.iter().enumerate() {
        for (j, sj) in Species::ALL.iter().enumerate() {
            let c = ((si.as_f64() - sj.as_f64()) * p.phi).cos();
            coherent += lam[i] * lam[j] * c * sx[i] * sx[j];
        }
    }
    Ok(local - coherent / (4.0 * p.omega_c))
}

/// Gradient of [`energy_eff`] with respect to the three s_x.
pub fn energy_eff_gradient(sx: [f64; 3], p: &ModelParams) -> [f64; 3] {
    let lam = p.source_coupling();
    let mut g = [0.0; 3];
    for i in 0..3 {
        let r = (1.0 - sx[i] * sx[i]).max(1e-300).sqrt();
        g[i] = 0.5 * p.weight[i] * p.omega[i] * sx[i] / r;
        for j in 0..3 {
            let c = ((Species::from_index(i).as_f64() - Species::from_index(j).as_f64()) * p.phi).cos();
            g[i] -= lam[i] * lam[j] * c * sx[j] / (2.0 * p.omega_c);
        }
    }
    g
}
