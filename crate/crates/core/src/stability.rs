//! Linear stability of stationary states, NP boundary analytics and
//! exceptional-point tracking.

use std::io::Write;

use nalgebra::{Matrix6, Vector6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen;
use crate::error::{Error, Result};
use crate::model::{d_coupling, Eom, ModelParams, SpinVector};
use crate::stationary::{newton_solve, FixedPoint, NewtonOptions};

/// Permutation from the published coordinate order (+1, 0, −1) to the
/// internal species order (−1, 0, +1), applied to both blocks.
const PUBLIC_ORDER: [usize; 6] = [2, 1, 0, 5, 4, 3];

/// Linearized dynamics in the coordinates
/// (δs_x,1, δs_x,0, δs_x,−1, δs_y,1, δs_y,0, δs_y,−1).
#[derive(Clone, Debug, PartialEq)]
pub struct DynMatrix(pub Matrix6<f64>);

impl DynMatrix {
    fn from_internal(j: &Matrix6<f64>) -> Self {
        DynMatrix(Matrix6::from_fn(|a, b| j[(PUBLIC_ORDER[a], PUBLIC_ORDER[b])]))
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Lower-left 3×3 block minus its diagonal Larmor part.
    pub fn coupling_block(&self, omega: [f64; 3]) -> [[f64; 3]; 3] {
        let om = [omega[2], omega[1], omega[0]];
        std::array::from_fn(|i| std::array::from_fn(|j| self.0[(3 + i, j)] - if i == j { om[i] } else { 0.0 }))
    }

    pub fn eigenvalues(&self) -> [Complex64; 6] {
        eigen::eigenvalues(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    /// Dead band around Re = 0.
    pub stab_tol: f64,
    /// Eigenvalue proximity for an exceptional point, in units of the mean Ω.
    pub ep_tol: f64,
    /// Eigenvector condition number above which a near-degeneracy is defective.
    pub cond_thresh: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions { stab_tol: 1e-8, ep_tol: 1e-4, cond_thresh: 1e6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpDetail {
    pub min_gap: f64,
    pub cond: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eigenvalues: [Complex64; 6],
    pub max_re: f64,
    pub stable: bool,
    /// max_re lies inside the dead band.
    pub marginal: bool,
    pub ep_flag: bool,
    pub ep_detail: EpDetail,
}

/// Eigenvalues closer than this (relative to ‖M‖) are treated as one cluster
/// when extracting eigenvectors.
const CLUSTER_TOL: f64 = 1e-9;

pub fn analyze(m: &DynMatrix, omega_scale: f64, opts: &StabilityOptions) -> StabilityReport {
    let eigenvalues = m.eigenvalues();
    let max_re = if eigenvalues.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NAN
    };
    let (min_gap, _, _) = eigen::min_gap(&eigenvalues);
    let vecs = eigen::eigenvectors(&m.0, &eigenvalues, CLUSTER_TOL);
    let cond = eigen::condition_number(&vecs);
    StabilityReport {
        eigenvalues,
        max_re,
        stable: max_re < -opts.stab_tol,
        marginal: max_re.abs() <= opts.stab_tol,
        ep_flag: min_gap < opts.ep_tol * omega_scale && cond > opts.cond_thresh,
        ep_detail: EpDetail { min_gap, cond },
    }
}

pub(crate) fn omega_scale(p: &ModelParams) -> f64 {
    p.omega.iter().sum::<f64>() / 3.0
}

/// Stability of a fixed point under the adiabatic spin dynamics.
pub fn assess(fp: &FixedPoint, p: &ModelParams, opts: &StabilityOptions) -> Result<StabilityReport> {
    let m = dyn_matrix_at(fp, p)?;
    Ok(analyze(&m, omega_scale(p), opts))
}

/// Analytic dynamical matrix of the normal phase.
pub fn dyn_matrix_np(p: &ModelParams) -> DynMatrix {
    let lam = p.lam[1];
    let om = p.omega[1];
    let denom = p.omega_c * p.omega_c + p.kappa * p.kappa;
    let m_of = |k: usize| 1.0 - k as f64;
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        m[(i, i)] = -p.gamma;
        m[(3 + i, 3 + i)] = -p.gamma;
        m[(i, 3 + i)] = -om;
        for j in 0..3 {
            let b = -lam * lam / denom * d_coupling((m_of(i) - m_of(j)) * p.phi, p);
            m[(3 + i, j)] = b + if i == j { om } else { 0.0 };
        }
    }
    DynMatrix(m)
}

/// Reduced coordinates (s_x,−1, s_x,0, s_x,1, s_y,−1, s_y,0, s_y,1).
pub(crate) type Chart = [f64; 6];

pub(crate) fn chart_of(spins: &[SpinVector; 3]) -> (Chart, [f64; 3]) {
    let z = [spins[0].sx, spins[1].sx, spins[2].sx, spins[0].sy, spins[1].sy, spins[2].sy];
    let sigma = spins.map(|s| if s.sz > 0.0 { 1.0 } else { -1.0 });
    (z, sigma)
}

/// s_z from the sphere constraint, or `None` outside the chart.
pub(crate) fn lift(z: &Chart, sigma: &[f64; 3]) -> Option<[SpinVector; 3]> {
    let mut out = [SpinVector::DOWN; 3];
    for i in 0..3 {
        let r2 = z[i] * z[i] + z[3 + i] * z[3 + i];
        if r2 >= 1.0 {
            return None;
        }
        out[i] = SpinVector::new(z[i], z[3 + i], sigma[i] * (1.0 - r2).sqrt());
    }
    Some(out)
}

pub(crate) fn reduced_rhs(eom: &Eom, spins: &[SpinVector; 3]) -> Chart {
    let y = crate::model::SystemState { spins: *spins, cavity: Complex64::new(0.0, 0.0) }.to_spin_vec();
    let dy = eom.adiabatic(&y);
    [dy[0], dy[3], dy[6], dy[1], dy[4], dy[7]]
}

/// Analytic Jacobian of the reduced vector field in internal order.
pub(crate) fn reduced_jacobian(eom: &Eom, spins: &[SpinVector; 3]) -> Matrix6<f64> {
    let p = eom.params();
    let k = eom.kernel();
    let g = p.gamma;
    let sx = spins.map(|s| s.sx);
    let h: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| k[i][j] * sx[j]).sum());
    let mut jac = Matrix6::zeros();
    for i in 0..3 {
        let SpinVector { sx, sy, sz } = spins[i];
        let dzx = -sx / sz;
        let dzy = -sy / sz;
        jac[(i, i)] = g * sz + g * sx * dzx;
        jac[(i, 3 + i)] = -p.omega[i] + g * sx * dzy;
        let c = h[i] + g * sy;
        for j in 0..3 {
            jac[(3 + i, j)] = k[i][j] * sz;
        }
        jac[(3 + i, i)] += p.omega[i] + c * dzx;
        jac[(3 + i, 3 + i)] = g * sz + c * dzy;
    }
    jac
}

fn check_point(fp: &FixedPoint) -> Result<()> {
    for s in &fp.spins {
        if (s.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("spin off the unit sphere (|s| = {})", s.norm())));
        }
        if s.sz.abs() < 1e-12 {
            return Err(Error::Domain("spin on the equator, chart undefined".into()));
        }
    }
    Ok(())
}

/// Jacobian of the reduced adiabatic dynamics at a fixed point.
pub fn dyn_matrix_at(fp: &FixedPoint, p: &ModelParams) -> Result<DynMatrix> {
    check_point(fp)?;
    let eom = Eom::new(p);
    Ok(DynMatrix::from_internal(&reduced_jacobian(&eom, &fp.spins)))
}

/// Central finite-difference Jacobian, the reference for [`dyn_matrix_at`].
pub fn dyn_matrix_fd(fp: &FixedPoint, p: &ModelParams, step: f64) -> Result<DynMatrix> {
    check_point(fp)?;
    let eom = Eom::new(p);
    let (z0, sigma) = chart_of(&fp.spins);
    let mut jac = Matrix6::zeros();
    for col in 0..6 {
        let mut zp = z0;
        let mut zm = z0;
        zp[col] += step;
        zm[col] -= step;
        let (sp, sm) = match (lift(&zp, &sigma), lift(&zm, &sigma)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Domain("finite-difference stencil leaves the chart".into())),
        };
        let fp_ = reduced_rhs(&eom, &sp);
        let fm_ = reduced_rhs(&eom, &sm);
        for row in 0..6 {
            jac[(row, col)] = (fp_[row] - fm_[row]) / (2.0 * step);
        }
    }
    Ok(DynMatrix::from_internal(&jac))
}

/// Largest entrywise relative deviation between two matrices, with entries
/// below `floor` compared absolutely.
pub fn relative_deviation(a: &DynMatrix, b: &DynMatrix, floor: f64) -> f64 {
    a.0.iter()
        .zip(b.0.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// P(φ) = ω_c²(2cos2φ + 1)² − 8κ² sin²φ (cos2φ + 2).
pub fn p_function(phi: f64, p: &ModelParams) -> f64 {
    let c2 = (2.0 * phi).cos();
    let s = phi.sin();
    p.omega_c * p.omega_c * (2.0 * c2 + 1.0).powi(2) - 8.0 * p.kappa * p.kappa * s * s * (c2 + 2.0)
}

/// Closed-form NP spectrum: ν = −γ ± iΩ and μ = −γ ± i√(Ω² − λ²Ω(3ω_c ± √P)/(2(ω_c² + κ²))).
pub fn mu_nu_np_analytic(p: &ModelParams) -> [Complex64; 6] {
    let om = p.omega[1];
    let lam = p.lam[1];
    let denom = p.omega_c * p.omega_c + p.kappa * p.kappa;
    let sqrt_p = Complex64::new(p_function(p.phi, p), 0.0).sqrt();
    let shift = Complex64::new(-p.gamma, 0.0);
    let i = Complex64::i();
    let mut out = [shift; 6];
    out[0] = shift + i * om;
    out[1] = shift - i * om;
    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
        let inner = om * om - lam * lam * om * (3.0 * p.omega_c + sign * sqrt_p) / (2.0 * denom);
        let root = i * inner.sqrt();
        out[2 + 2 * k] = shift + root;
        out[3 + 2 * k] = shift - root;
    }
    eigen::sort_spectrum(&mut out);
    out
}

/// Angles in [0, π] at which P(φ) vanishes, sorted. Empty for κ = 0.
pub fn phi_c(p: &ModelParams) -> Vec<f64> {
    if p.kappa == 0.0 {
        return Vec::new();
    }
    let r = 3.0 * p.kappa / (p.kappa * p.kappa + p.omega_c * p.omega_c).sqrt();
    let mut out = Vec::new();
    for inner in [1.0 + r, 1.0 - r] {
        if inner < 0.0 {
            continue;
        }
        let c = 0.5 * inner.sqrt();
        if c > 1.0 {
            continue;
        }
        out.push(c.acos());
        out.push((-c).acos());
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    out
}

/// Coupling at which the normal phase loses stability, or `None` where
/// P(φ) < 0 and no static threshold exists.
pub fn lambda_c(phi: f64, p: &ModelParams) -> Option<f64> {
    let pv = p_function(phi, p);
    if pv < 0.0 {
        return None;
    }
    let om = p.omega[1];
    let den = 2.0 * (2.0 * phi).cos() + (4.0 * phi).cos() - 3.0;
    if den.abs() > 1e-4 {
        let val = om * (-3.0 * p.omega_c + pv.sqrt()) / den;
        return Some(val.sqrt());
    }
    Some(lambda_c_numeric(phi, p))
}

fn np_growth(phi: f64, lam: f64, p: &ModelParams) -> f64 {
    let q = p.clone().with_phi(phi).with_gamma(0.0).with_lambda(lam);
    mu_nu_np_analytic(&q)[2..].iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Bisection for the smallest λ with an NP eigenvalue in the right half plane.
pub fn lambda_c_numeric(phi: f64, p: &ModelParams) -> f64 {
    let unstable = |lam: f64| np_growth(phi, lam, p) > 1e-12;
    let mut hi = p.omega[1].sqrt().max(1.0);
    while !unstable(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Parameter varied along a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathParam {
    Phi,
    Lambda,
}

impl PathParam {
    pub fn apply(self, template: &ModelParams, value: f64) -> ModelParams {
        match self {
            PathParam::Phi => template.clone().with_phi(value),
            PathParam::Lambda => template.clone().with_lambda_scaled(value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpLocation {
    pub param: f64,
    /// Coalescing eigenvalue.
    pub eigenvalue: Complex64,
    pub gap: f64,
    /// Eigenvector condition number with eigenvalues closer than the
    /// proximity tolerance treated as one cluster.
    pub cond: f64,
    /// Condition number of the individually computed eigenvectors.
    pub raw_cond: f64,
    pub max_re: f64,
    pub spins: [SpinVector; 3],
}

/// Result of following a fixed point along a path.
#[derive(Clone, Debug, Default)]
pub struct PathScan {
    pub params: Vec<f64>,
    /// Spectra relabelled for continuity between consecutive samples.
    pub spectra: Vec<[Complex64; 6]>,
    pub roots: Vec<FixedPoint>,
    pub eps: Vec<EpLocation>,
    /// Every refined gap minimum, including those rejected as plain crossings.
    pub candidates: Vec<EpLocation>,
    /// First parameter at which the tracked root was lost.
    pub broken_at: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct EpOptions {
    pub stability: StabilityOptions,
    /// Bisection stops when the bracket is narrower than this.
    pub param_tol: f64,
    pub newton: NewtonOptions,
}

impl Default for EpOptions {
    fn default() -> Self {
        EpOptions { stability: StabilityOptions::default(), param_tol: 1e-13, newton: NewtonOptions::default() }
    }
}

struct Sample {
    root: FixedPoint,
    matrix: DynMatrix,
    spectrum: [Complex64; 6],
}

fn sample(param: PathParam, template: &ModelParams, value: f64, seed: &[SpinVector; 3], nopts: &NewtonOptions) -> Option<Sample> {
    let p = param.apply(template, value);
    let root = newton_solve(seed, &p, nopts).ok()?;
    let matrix = dyn_matrix_at(&root, &p).ok()?;
    let spectrum = matrix.eigenvalues();
    Some(Sample { root, matrix, spectrum })
}

/// Follows the fixed point that starts at `start` along `values` and
/// reports every exceptional point met on the way.
///
/// Eigenvalues are labelled by continuity, and every interior local minimum
/// of a pairwise distance is refined by golden-section search. A minimum is
/// accepted as an EP only if both the eigenvalue gap and the eigenvector
/// condition number pass the thresholds in `opts`; plain level crossings
/// keep well-conditioned eigenvectors and are rejected.
pub fn detect_ep(
    param: PathParam,
    template: &ModelParams,
    values: &[f64],
    start: &[SpinVector; 3],
    opts: &EpOptions,
) -> PathScan {
    let mut scan = PathScan::default();
    let mut seed = *start;
    let mut last: Option<f64> = None;
    for &v in values {
        let cur = match last {
            Some(from) => continue_to(param, template, from, v, &mut seed, opts),
            None => sample(param, template, v, &seed, &opts.newton).ok_or(v),
        };
        let cur = match cur {
            Ok(c) => c,
            Err(at) => {
                scan.broken_at = Some(at);
                break;
            }
        };
        last = Some(v);
        let spectrum = match scan.spectra.last() {
            Some(last) => eigen::match_continuation(last, &cur.spectrum),
            None => cur.spectrum,
        };
        seed = cur.root.spins;
        scan.params.push(v);
        scan.spectra.push(spectrum);
        scan.roots.push(cur.root);
    }
    let n = scan.params.len();
    let mut candidates = Vec::new();
    for k in 1..n.saturating_sub(1) {
        for i in 0..6 {
            for j in i + 1..6 {
                let g = |q: usize| (scan.spectra[q][i] - scan.spectra[q][j]).norm();
                if g(k) <= g(k - 1) && g(k) <= g(k + 1) && g(k) < g(k - 1).max(g(k + 1)) {
                    let centre = 0.5 * (scan.spectra[k][i] + scan.spectra[k][j]);
                    if centre.im >= -1e-12 {
                        candidates.push((k, centre));
                    }
                }
            }
        }
    }
    if scan.broken_at.is_some() && n >= 2 {
        for i in 0..6 {
            for j in i + 1..6 {
                let g = |q: usize| (scan.spectra[q][i] - scan.spectra[q][j]).norm();
                let centre = 0.5 * (scan.spectra[n - 1][i] + scan.spectra[n - 1][j]);
                if g(n - 1) < g(n - 2) && centre.im >= -1e-12 {
                    candidates.push((n - 1, centre));
                }
            }
        }
    }
    for (k, centre) in candidates {
        let a = scan.params[k - 1];
        let b = if k + 1 < n { scan.params[k + 1] } else { scan.broken_at.unwrap_or(scan.params[k]) };
        let Some((ep, accepted)) = refine(param, template, (a, b), &scan.roots[k].spins, centre, opts) else { continue };
        scan.candidates.push(ep.clone());
        if !accepted {
            continue;
        }
        let tol = 1e3 * opts.param_tol * ep.param.abs().max(1.0);
        if !scan.eps.iter().any(|e: &EpLocation| (e.param - ep.param).abs() < tol && (e.eigenvalue - ep.eigenvalue).norm() < 1e-6) {
            scan.eps.push(ep);
        }
    }
    scan.eps.sort_by(|a, b| a.param.total_cmp(&b.param));
    scan
}

/// Moves the tracked root from `from` to `to`, subdividing the step when
/// Newton fails. On failure returns the parameter that could not be reached.
fn continue_to(
    param: PathParam,
    template: &ModelParams,
    from: f64,
    to: f64,
    seed: &mut [SpinVector; 3],
    opts: &EpOptions,
) -> std::result::Result<Sample, f64> {
    let mut at = from;
    let mut h = to - from;
    let min_h = (to - from).abs() * 2f64.powi(-24);
    loop {
        let target = if (to - at).abs() <= h.abs() { to } else { at + h };
        match sample(param, template, target, seed, &opts.newton) {
            Some(s) => {
                *seed = s.root.spins;
                at = target;
                if target == to {
                    return Ok(s);
                }
                h *= 2.0;
            }
            None => {
                h *= 0.5;
                if h.abs() < min_h {
                    return Err(target);
                }
            }
        }
    }
}

fn next_up(x: f64) -> f64 {
    if x >= 0.0 { f64::from_bits(x.to_bits() + 1) } else { f64::from_bits(x.to_bits() - 1) }
}

fn next_down(x: f64) -> f64 {
    if x > 0.0 { f64::from_bits(x.to_bits() - 1) } else { -next_up(-x) }
}

fn scale_of(m: &DynMatrix) -> f64 {
    m.0.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300)
}

/// Distance between the two eigenvalues nearest to `centre`.
fn local_gap(spectrum: &[Complex64; 6], centre: Complex64) -> (f64, Complex64) {
    let mut idx: Vec<usize> = (0..6).collect();
    idx.sort_by(|&a, &b| (spectrum[a] - centre).norm().total_cmp(&(spectrum[b] - centre).norm()));
    let (a, b) = (spectrum[idx[0]], spectrum[idx[1]]);
    ((a - b).norm(), 0.5 * (a + b))
}

fn refine(
    param: PathParam,
    template: &ModelParams,
    bracket: (f64, f64),
    seed: &[SpinVector; 3],
    centre: Complex64,
    opts: &EpOptions,
) -> Option<(EpLocation, bool)> {
    let seed = *seed;
    let mut centre = centre;
    let mut eval = |x: f64| -> (f64, Option<Sample>) {
        match sample(param, template, x, &seed, &opts.newton) {
            Some(s) => {
                let (gap, c) = local_gap(&s.spectrum, centre);
                centre = c;
                (gap, Some(s))
            }
            None => (f64::INFINITY, None),
        }
    };
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = bracket;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..200 {
        if (b - a).abs() <= opts.param_tol * a.abs().max(1.0) {
            break;
        }
        if f1.0 <= f2.0 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2);
        }
    }
    let (mut x, (mut gap, s)) = if f1.0 <= f2.0 { (x1, f1) } else { (x2, f2) };
    let mut s = s?;
    // The bracket may end on the floating-point grid; probe the neighbouring
    // representable parameters as well.
    let mut probe = x;
    for _ in 0..64 {
        probe = next_down(probe);
        if let (g, Some(t)) = eval(probe) {
            if g < gap {
                (x, gap, s) = (probe, g, t);
            }
        }
    }
    probe = x;
    for _ in 0..64 {
        probe = next_up(probe);
        if let (g, Some(t)) = eval(probe) {
            if g < gap {
                (x, gap, s) = (probe, g, t);
            }
        }
    }
    let p = param.apply(template, x);
    let om = omega_scale(&p);
    let rep = analyze(&s.matrix, om, &opts.stability);
    let (_, mid) = local_gap(&s.spectrum, centre);
    let tol = opts.stability.ep_tol * om;
    let cond = if gap < tol {
        let rel = tol / scale_of(&s.matrix);
        eigen::condition_number(&eigen::eigenvectors(&s.matrix.0, &s.spectrum, rel))
    } else {
        rep.ep_detail.cond
    };
    let accepted = gap < tol && cond > opts.stability.cond_thresh;
    let loc = EpLocation {
        param: x,
        eigenvalue: mid,
        gap,
        cond,
        raw_cond: rep.ep_detail.cond,
        max_re: rep.max_re,
        spins: s.root.spins,
    };
    Some((loc, accepted))
}

pub const SPECTRUM_FLOW_HEADER: &str = "param,re_1,re_2,re_3,re_4,re_5,re_6,im_1,im_2,im_3,im_4,im_5,im_6";

/// Writes `param, re_1..re_6, im_1..im_6` rows.
pub fn write_spectrum_flow<W: Write>(mut w: W, scan: &PathScan, preamble: &[String]) -> Result<()> {
    for line in preamble {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{SPECTRUM_FLOW_HEADER}")?;
    for (x, ev) in scan.params.iter().zip(&scan.spectra) {
        let mut row = vec![format!("{x:.12e}")];
        row.extend(ev.iter().map(|z| format!("{:.12e}", z.re)));
        row.extend(ev.iter().map(|z| format!("{:.12e}", z.im)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Vector (1, −2cos φ, 1) spanning the kernel of the NP coupling block.
pub fn np_kernel_vector(phi: f64) -> Vector6<f64> {
    Vector6::new(1.0, -2.0 * phi.cos(), 1.0, 0.0, 0.0, 0.0)
}
