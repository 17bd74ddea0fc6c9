//! Long-time attractors: chiral rotation, swap cycles between frustrated
//! vertices, chaos. Includes the spectral and Lyapunov tools used to tell
//! them apart.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate, perturb, IntegratorConfig, Mode, Stepper, Trajectory};
use crate::model::{collective_from_sx, Eom, ModelParams, SystemState};
use crate::stationary::{residual, FixedPoint};

/// Drops the leading `fraction` of the samples.
pub fn trim_transient(traj: &Trajectory, fraction: f64) -> Result<Trajectory> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParams(format!("transient fraction {fraction} outside [0, 1)")));
    }
    let start = (fraction * traj.len() as f64).floor() as usize;
    if traj.len() - start < 64 {
        return Err(Error::InsufficientData(format!("{} samples left after trimming", traj.len() - start)));
    }
    Ok(Trajectory {
        times: traj.times[start..].to_vec(),
        states: traj.states[start..].to_vec(),
        params: traj.params.clone(),
    })
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y <= -PI {
        y + TAU
    } else {
        y
    }
}

/// Unwrapped θ_m = atan2(s_y, s_x) for each species, in species order.
pub fn phase_angles(traj: &Trajectory) -> Result<Vec<[f64; 3]>> {
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(traj.len());
    for (t, st) in traj.times.iter().zip(&traj.states) {
        let mut th = [0.0; 3];
        for (i, s) in st.spins.iter().enumerate() {
            if s.sx.abs() + s.sy.abs() <= 1e-6 {
                return Err(Error::UndefinedAngle(*t));
            }
            let raw = s.sy.atan2(s.sx);
            th[i] = match out.last() {
                Some(prev) => prev[i] + wrap(raw - prev[i]),
                None => raw,
            };
        }
        out.push(th);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Circular mean and resultant length of a set of angles.
fn circular_mean(angles: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut c, mut s, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        c += a.cos();
        s += a.sin();
        n += 1;
    }
    let n = n.max(1) as f64;
    (s.atan2(c), (c * c + s * s).sqrt() / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiralMetrics {
    /// Mean dθ_m/dt per species.
    pub velocities: [f64; 3],
    pub mean_velocity: f64,
    /// (max − min) / |mean| of the species velocities.
    pub velocity_spread: f64,
    /// Circular means of θ_0 − θ_{−1}, θ_{+1} − θ_0 and θ_{−1} − θ_{+1}.
    pub relative_phases: [f64; 3],
    /// Largest distance of a relative phase from the locked value ±2π/3.
    pub lock_residual: f64,
    /// Smallest resultant length of the relative phases.
    pub lock_strength: f64,
    /// +1 if the relative phases lock to +2π/3, −1 for −2π/3.
    pub handedness: i8,
    /// Coefficient of variation of |a(t)|.
    pub radius_cv: f64,
    pub mean_radius: f64,
    /// Lock or radius visibly noisy although the phases remain locked on average.
    pub thickened: bool,
}

pub fn chiral_metrics(traj: &Trajectory) -> Result<ChiralMetrics> {
    let th = phase_angles(traj)?;
    let dur = traj.duration();
    if dur <= 0.0 {
        return Err(Error::InsufficientData("zero-length window".into()));
    }
    let first = th[0];
    let last = th[th.len() - 1];
    let velocities: [f64; 3] = std::array::from_fn(|i| (last[i] - first[i]) / dur);
    let mean_velocity = mean(&velocities);
    let vmax = velocities.iter().cloned().fold(f64::MIN, f64::max);
    let vmin = velocities.iter().cloned().fold(f64::MAX, f64::min);
    let velocity_spread = (vmax - vmin) / mean_velocity.abs().max(1e-300);
    let pairs = [(0usize, 1usize), (1, 2), (2, 0)];
    let stats: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(a, b)| circular_mean(th.iter().map(|t| t[b] - t[a])))
        .collect();
    let handedness: i8 = if stats[0].0 >= 0.0 { 1 } else { -1 };
    let target = handedness as f64 * TAU / 3.0;
    let lock_residual = stats.iter().map(|(m, _)| wrap(m - target).abs()).fold(0.0, f64::max);
    let lock_strength = stats.iter().map(|(_, r)| *r).fold(f64::INFINITY, f64::min);
    let radii: Vec<f64> = traj.states.iter().map(|s| s.cavity.norm()).collect();
    let mean_radius = mean(&radii);
    let radius_cv = std_dev(&radii) / mean_radius.max(1e-300);
    Ok(ChiralMetrics {
        velocities,
        mean_velocity,
        velocity_spread,
        relative_phases: [stats[0].0, stats[1].0, stats[2].0],
        lock_residual,
        lock_strength,
        handedness,
        radius_cv,
        mean_radius,
        thickened: lock_strength < 0.99 || radius_cv > 0.02,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chirality {
    CCW,
    CW,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub vertex: usize,
    pub entry: f64,
    pub exit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellRecord {
    pub visits: Vec<Visit>,
    pub chirality: Chirality,
}

/// Vertices in s_x space and the membership radius derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexSet {
    pub points: Vec<[f64; 3]>,
    pub radius: f64,
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl VertexSet {
    /// Membership radius is a quarter of the smallest inter-vertex distance.
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        let mut dmin = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                dmin = dmin.min(dist3(&points[i], &points[j]));
            }
        }
        let radius = if dmin.is_finite() { 0.25 * dmin } else { 0.0 };
        VertexSet { points, radius }
    }

    pub fn from_fixed_points(fps: &[FixedPoint]) -> Self {
        Self::new(fps.iter().map(|f| f.sx()).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the vertex whose ball contains `sx`.
    pub fn member(&self, sx: &[f64; 3]) -> Option<usize> {
        self.points
            .iter()
            .enumerate()
            .map(|(k, v)| (k, dist3(v, sx)))
            .filter(|&(_, d)| d < self.radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    }

    /// Angle of each vertex in the (X_d1, X_d2) plane.
    pub fn angles(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|v| {
                let c = collective_from_sx(*v);
                c.xd2.atan2(c.xd1)
            })
            .collect()
    }
}

/// Speed of the adiabatic flow at each sample.
fn speeds(traj: &Trajectory) -> Vec<f64> {
    let eom = Eom::new(&traj.params);
    traj.states
        .iter()
        .map(|s| eom.adiabatic(&s.to_spin_vec()).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect()
}

/// Slow regions of the orbit. Local speed minima slower than half the
/// median speed are grouped by single linkage at `cluster_radius`; groups
/// with at least two members give a vertex at their centroid.
pub fn detect_vertices(traj: &Trajectory, cluster_radius: f64) -> VertexSet {
    let v = speeds(traj);
    let slow = 0.5 * median(&v);
    let pts: Vec<[f64; 3]> = (1..v.len().saturating_sub(1))
        .filter(|&k| v[k] < v[k - 1] && v[k] <= v[k + 1] && v[k] < slow)
        .map(|k| traj.states[k].sx())
        .collect();
    let mut parent: Vec<usize> = (0..pts.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if dist3(&pts[i], &pts[j]) < cluster_radius {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut sums: std::collections::BTreeMap<usize, ([f64; 3], usize)> = Default::default();
    for i in 0..pts.len() {
        let r = root(&mut parent, i);
        let e = sums.entry(r).or_insert(([0.0; 3], 0));
        for c in 0..3 {
            e.0[c] += pts[i][c];
        }
        e.1 += 1;
    }
    let points = sums.into_values().filter(|(_, n)| *n >= 2).map(|(c, n)| c.map(|x| x / n as f64)).collect();
    VertexSet::new(points)
}

/// Segments the trajectory into visits of the vertex balls. A new visit
/// starts only after the orbit has left the previous ball; re-entering the
/// same vertex extends the previous visit.
pub fn dwell_record(traj: &Trajectory, vertices: &VertexSet) -> DwellRecord {
    let mut visits: Vec<Visit> = Vec::new();
    let mut inside: Option<usize> = None;
    for (t, st) in traj.times.iter().zip(&traj.states) {
        let m = vertices.member(&st.sx());
        match (inside, m) {
            (Some(a), Some(b)) if a == b => {
                visits.last_mut().expect("open visit").exit = *t;
            }
            (Some(_), Some(_)) | (None, Some(_)) => {
                let b = m.unwrap();
                match visits.last_mut() {
                    Some(last) if last.vertex == b => last.exit = *t,
                    _ => visits.push(Visit { vertex: b, entry: *t, exit: *t }),
                }
                inside = Some(b);
            }
            (_, None) => inside = None,
        }
    }
    let chirality = chirality_of(&visits, vertices);
    DwellRecord { visits, chirality }
}

fn chirality_of(visits: &[Visit], vertices: &VertexSet) -> Chirality {
    let ang = vertices.angles();
    let mut pos = 0;
    let mut neg = 0;
    for w in visits.windows(2) {
        let d = wrap(ang[w[1].vertex] - ang[w[0].vertex]);
        if d.abs() > PI - 1e-3 {
            return Chirality::Mixed;
        }
        if d > 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    match (pos, neg) {
        (p, 0) if p > 0 => Chirality::CCW,
        (0, n) if n > 0 => Chirality::CW,
        _ => Chirality::Mixed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    /// Distinct vertices per cycle.
    pub length: usize,
    pub cycles: usize,
    pub period: f64,
    /// (max − min) / mean of the individual cycle durations.
    pub period_spread: f64,
}

/// Checks that the visit sequence repeats with a fixed order and returns
/// the cycle statistics.
pub fn cycle_stats(record: &DwellRecord) -> Option<CycleStats> {
    let seq: Vec<usize> = record.visits.iter().map(|v| v.vertex).collect();
    let mut distinct = seq.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let k = distinct.len();
    if k < 2 || seq.len() < 2 * k + 2 {
        return None;
    }
    if (0..seq.len() - k).any(|i| seq[i] != seq[i + k]) {
        return None;
    }
    if seq[..k].iter().collect::<std::collections::BTreeSet<_>>().len() != k {
        return None;
    }
    let durations: Vec<f64> =
        (1..seq.len() - k).map(|i| record.visits[i + k].entry - record.visits[i].entry).collect();
    let period = mean(&durations);
    let spread = (durations.iter().cloned().fold(f64::MIN, f64::max)
        - durations.iter().cloned().fold(f64::MAX, f64::min))
        / period;
    Some(CycleStats { length: k, cycles: durations.len() / k, period, period_spread: spread })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    /// Peaks must exceed the median power by this factor.
    pub peak_snr: f64,
    pub max_peaks: usize,
    /// Peaks weaker than this fraction of the strongest one are ignored.
    pub dominance: f64,
    /// Smallest admissible ω0, in frequency bins.
    pub min_omega0_bins: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { peak_snr: 100.0, max_peaks: 16, dominance: 1e-4, min_omega0_bins: 4.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq: f64,
    pub power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Angular frequencies.
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    /// Bin width 2π / T.
    pub resolution: f64,
    pub noise_floor: f64,
    /// Dominant peaks sorted by frequency.
    pub peaks: Vec<Peak>,
    pub omega0: Option<f64>,
    pub odd_harmonic_score: f64,
}

impl SpectrumReport {
    pub fn write_csv<W: Write>(&self, mut w: W, preamble: &[String]) -> Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "freq,power")?;
        for (f, p) in self.freqs.iter().zip(&self.power) {
            writeln!(w, "{f:.9e},{p:.9e}")?;
        }
        Ok(())
    }
}

fn odd_multiple_match(f: f64, base: f64, tol: f64) -> bool {
    let n = (f / base).round();
    n >= 1.0 && (n as i64) % 2 == 1 && (f - n * base).abs() <= tol
}

/// Hann-windowed periodogram with peak and harmonic analysis.
pub fn fourier_spectrum(series: &[f64], dt: f64, cfg: &SpectrumConfig) -> Result<SpectrumReport> {
    let n = series.len();
    if n < 1024 {
        return Err(Error::InsufficientData(format!("spectrum needs >= 1024 samples, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParams("sample spacing must be positive".into()));
    }
    let m = mean(series);
    let mut buf: Vec<Complex64> = series
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let w = 0.5 * (1.0 - (TAU * k as f64 / (n - 1) as f64).cos());
            Complex64::new((x - m) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let resolution = TAU / (n as f64 * dt);
    let freqs: Vec<f64> = (0..=half).map(|k| k as f64 * resolution).collect();
    let power: Vec<f64> = (0..=half).map(|k| buf[k].norm_sqr() / n as f64).collect();
    let scale = series.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
    let flat = series.iter().all(|x| (x - m).abs() <= 1e-12 * scale);
    let noise_floor = median(&power[1..]) * cfg.peak_snr;
    let mut report = SpectrumReport {
        freqs,
        power,
        resolution,
        noise_floor,
        peaks: Vec::new(),
        omega0: None,
        odd_harmonic_score: 0.0,
    };
    if flat {
        return Ok(report);
    }
    let pw = &report.power;
    let mut peaks: Vec<Peak> = (1..half)
        .filter(|&k| pw[k] > pw[k - 1] && pw[k] >= pw[k + 1] && pw[k] > noise_floor)
        .map(|k| {
            let (l, c, r) = (pw[k - 1].max(1e-300).ln(), pw[k].ln(), pw[k + 1].max(1e-300).ln());
            let den = l - 2.0 * c + r;
            let off = if den.abs() > 1e-300 { (0.5 * (l - r) / den).clamp(-0.5, 0.5) } else { 0.0 };
            Peak { freq: (k as f64 + off) * resolution, power: pw[k] }
        })
        .collect();
    let strongest = peaks.iter().map(|p| p.power).fold(0.0, f64::max);
    peaks.retain(|p| p.power >= cfg.dominance * strongest);
    peaks.sort_by(|a, b| b.power.total_cmp(&a.power));
    peaks.truncate(cfg.max_peaks);
    peaks.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    let tol = resolution;
    let mut omega0 = None;
    for (i, c) in peaks.iter().enumerate() {
        if c.freq < cfg.min_omega0_bins * resolution {
            continue;
        }
        let others: Vec<&Peak> = peaks.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p).collect();
        let explained = others.iter().filter(|p| odd_multiple_match(p.freq, c.freq, tol)).count();
        if others.is_empty() || explained as f64 >= 0.8 * others.len() as f64 {
            omega0 = Some(c.freq);
            break;
        }
    }
    if let Some(w0) = omega0 {
        let hits = peaks.iter().filter(|p| odd_multiple_match(p.freq, w0, tol)).count();
        report.odd_harmonic_score = hits as f64 / peaks.len() as f64;
    }
    report.peaks = peaks;
    report.omega0 = omega0;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub t_end: f64,
    pub transient_fraction: f64,
    /// Renormalization interval in units of 1/Ω.
    pub renorm_interval: f64,
    pub d0: f64,
    pub segments: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            t_end: 2000.0,
            transient_fraction: 0.5,
            renorm_interval: 1.0,
            d0: 1e-8,
            segments: 10,
            rel_tol: 1e-11,
            abs_tol: 1e-14,
            mode: Mode::Adiabatic,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Growth rate of each segment of the post-transient window.
    pub segment_rates: Vec<f64>,
}

fn benettin<F, const N: usize>(f: F, y0: [f64; N], y1: [f64; N], cfg: &LyapunovConfig, tau: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64; N]) -> [f64; N] + Copy,
{
    let norm = |a: &[f64; N], b: &[f64; N]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut d = norm(&y0, &y1);
    let mut y1 = y1;
    for i in 0..N {
        y1[i] = y0[i] + (y1[i] - y0[i]) * cfg.d0 / d;
    }
    let mut a = Stepper::new(f, y0, cfg.rel_tol, cfg.abs_tol, tau);
    let mut b = Stepper::new(f, y1, cfg.rel_tol, cfg.abs_tol, tau);
    let mut none = |_: f64, _: &dyn Fn(f64) -> [f64; N]| true;
    let steps = (cfg.t_end / tau).floor() as usize;
    let mut logs = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t = k as f64 * tau;
        a.advance(t, &mut none)?;
        b.advance(t, &mut none)?;
        let (ya, yb) = (*a.y(), *b.y());
        d = norm(&ya, &yb);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Integration { t, reason: "tangent separation collapsed".into() });
        }
        logs.push((d / cfg.d0).ln());
        let mut yn = ya;
        for i in 0..N {
            yn[i] = ya[i] + (yb[i] - ya[i]) * cfg.d0 / d;
        }
        b.reset_state(yn);
    }
    Ok(logs)
}

/// Largest Lyapunov exponent from two nearby trajectories with periodic
/// renormalization.
pub fn lyapunov_max(state0: &SystemState, p: &ModelParams, cfg: &LyapunovConfig) -> Result<LyapunovEstimate> {
    p.validate()?;
    let om = p.omega.iter().sum::<f64>() / 3.0;
    let tau = cfg.renorm_interval / om;
    let eom = Eom::new(p);
    let kicked = perturb(state0, cfg.d0, cfg.seed);
    let logs = match cfg.mode {
        Mode::Adiabatic => {
            benettin(|y: &[f64; 9]| eom.adiabatic(y), state0.to_spin_vec(), kicked.to_spin_vec(), cfg, tau)?
        }
        Mode::Full => benettin(|y: &[f64; 11]| eom.full(y), state0.to_full(), kicked.to_full(), cfg, tau)?,
    };
    let skip = (cfg.transient_fraction * logs.len() as f64).floor() as usize;
    let tail = &logs[skip..];
    let nseg = cfg.segments.max(1).min(tail.len().max(1));
    if tail.is_empty() {
        return Err(Error::InsufficientData("Lyapunov window is empty".into()));
    }
    let value = tail.iter().sum::<f64>() / (tail.len() as f64 * tau);
    let chunk = tail.len() / nseg;
    let segment_rates: Vec<f64> = (0..nseg)
        .map(|s| {
            let part = &tail[s * chunk..if s + 1 == nseg { tail.len() } else { (s + 1) * chunk }];
            part.iter().sum::<f64>() / (part.len() as f64 * tau)
        })
        .collect();
    let stderr = if nseg > 1 {
        let m = mean(&segment_rates);
        (segment_rates.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (nseg - 1) as f64).sqrt() / (nseg as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(LyapunovEstimate { value, stderr, segment_rates })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestorationReport {
    pub mean_sx: [f64; 3],
    pub mean_sy: [f64; 3],
    pub mean_cavity: Complex64,
    pub max_cavity: f64,
    /// Whole periods averaged over.
    pub periods: usize,
    /// No period was detected and the full window was used.
    pub caveat: bool,
}

/// Series used to find the emergent frequency: s_x of species +1.
pub fn probe_series(traj: &Trajectory) -> Vec<f64> {
    traj.series(|s| s.spins[2].sx)
}

/// Time averages over an integer number of periods of the emergent
/// frequency, or over the full window when none is found.
pub fn symmetry_restoration(traj: &Trajectory, _p: &ModelParams) -> RestorationReport {
    let dt = traj.dt();
    let omega0 = fourier_spectrum(&probe_series(traj), dt, &SpectrumConfig::default()).ok().and_then(|r| r.omega0);
    let n = traj.len();
    let (start, periods) = match omega0 {
        Some(w) => {
            let period = TAU / w;
            let k = (traj.duration() / period).floor() as usize;
            if k >= 1 {
                let len = ((k as f64 * period) / dt).round() as usize;
                (n - len.min(n), k)
            } else {
                (0, 0)
            }
        }
        None => (0, 0),
    };
    let window = &traj.states[start..];
    let m = window.len() as f64;
    let mut mean_sx = [0.0; 3];
    let mut mean_sy = [0.0; 3];
    let mut mean_cavity = Complex64::new(0.0, 0.0);
    for s in window {
        for i in 0..3 {
            mean_sx[i] += s.spins[i].sx / m;
            mean_sy[i] += s.spins[i].sy / m;
        }
        mean_cavity += s.cavity / m;
    }
    let max_cavity = traj.states.iter().map(|s| s.cavity.norm()).fold(0.0, f64::max);
    RestorationReport { mean_sx, mean_sy, mean_cavity, max_cavity, periods, caveat: periods == 0 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttractorKind {
    Stationary,
    Chiral,
    Swap,
    Chaotic,
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryMetrics {
    pub residual: f64,
    pub displacement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapMetrics {
    pub vertices: VertexSet,
    pub cycle: CycleStats,
    pub dwell: DwellRecord,
    pub omega0: Option<f64>,
    pub odd_harmonic_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractorVerdict {
    pub kind: AttractorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chiral: Option<ChiralMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swap: Option<SwapMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AttractorVerdict {
    fn new(kind: AttractorKind) -> Self {
        AttractorVerdict {
            kind,
            stationary: None,
            chiral: None,
            swap: None,
            lyapunov: None,
            omega0: None,
            notes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub integrator: IntegratorConfig,
    pub transient_fraction: f64,
    pub stationary_residual: f64,
    pub stationary_displacement: f64,
    pub max_velocity_spread: f64,
    pub max_lock_residual: f64,
    pub min_lock_strength: f64,
    pub max_period_spread: f64,
    /// Chaos threshold in units of Ω.
    pub lyap_thresh: f64,
    pub lyapunov: LyapunovConfig,
    pub spectrum: SpectrumConfig,
    /// Clustering radius for vertex detection from slow regions.
    pub vertex_cluster_radius: f64,
    /// Kick applied to the normal phase to start a run.
    pub initial_kick: f64,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            integrator: IntegratorConfig::default(),
            transient_fraction: 0.5,
            stationary_residual: 1e-8,
            stationary_displacement: 1e-6,
            max_velocity_spread: 0.01,
            max_lock_residual: 0.05,
            min_lock_strength: 0.8,
            max_period_spread: 0.05,
            lyap_thresh: 1e-3,
            lyapunov: LyapunovConfig::default(),
            spectrum: SpectrumConfig::default(),
            vertex_cluster_radius: 0.5,
            initial_kick: 1e-3,
            seed: 1,
        }
    }
}

fn stationary_metrics(traj: &Trajectory, p: &ModelParams) -> StationaryMetrics {
    let last = traj.last();
    let res = residual(&last.spins, p);
    let tail = (traj.len() / 10).max(1);
    let displacement = traj.states[traj.len() - tail..].iter().map(|s| s.distance(last)).fold(0.0, f64::max);
    StationaryMetrics { residual: res, displacement }
}

/// Decision cascade: stationary, chiral, swap, chaotic, unresolved.
///
/// `traj` should already be trimmed. Vertices for the swap test are the
/// stable nontrivial points of `fps` when there are at least two of them,
/// otherwise they are detected from the slow regions of the orbit.
pub fn classify_attractor(traj: &Trajectory, fps: &[FixedPoint], p: &ModelParams, cfg: &ClassifyConfig) -> AttractorVerdict {
    let st = stationary_metrics(traj, p);
    if st.residual < cfg.stationary_residual && st.displacement < cfg.stationary_displacement {
        let mut v = AttractorVerdict::new(AttractorKind::Stationary);
        v.stationary = Some(st);
        return v;
    }
    let spectrum = fourier_spectrum(&probe_series(traj), traj.dt(), &cfg.spectrum).ok();
    let omega0 = spectrum.as_ref().and_then(|s| s.omega0);
    let mut notes = Vec::new();
    match chiral_metrics(traj) {
        Ok(m) => {
            if m.velocity_spread < cfg.max_velocity_spread
                && m.lock_residual < cfg.max_lock_residual
                && m.lock_strength >= cfg.min_lock_strength
            {
                let mut v = AttractorVerdict::new(AttractorKind::Chiral);
                v.chiral = Some(m);
                v.omega0 = omega0;
                return v;
            }
        }
        Err(e) => notes.push(format!("phase angles unavailable: {e}")),
    }
    let stable: Vec<FixedPoint> = fps.iter().filter(|f| f.stable && !f.is_trivial(1e-6)).cloned().collect();
    let vertices = if stable.len() >= 2 {
        VertexSet::from_fixed_points(&stable)
    } else {
        detect_vertices(traj, cfg.vertex_cluster_radius)
    };
    if vertices.len() >= 2 {
        let dwell = dwell_record(traj, &vertices);
        if let Some(cycle) = cycle_stats(&dwell) {
            if cycle.period_spread < cfg.max_period_spread {
                let mut v = AttractorVerdict::new(AttractorKind::Swap);
                v.omega0 = omega0;
                v.swap = Some(SwapMetrics {
                    vertices,
                    cycle,
                    dwell,
                    omega0,
                    odd_harmonic_score: spectrum.map(|s| s.odd_harmonic_score).unwrap_or(0.0),
                });
                return v;
            }
        }
    }
    let om = p.omega.iter().sum::<f64>() / 3.0;
    let mut v = match lyapunov_max(traj.last(), p, &cfg.lyapunov) {
        Ok(l) => {
            let kind = if l.value > cfg.lyap_thresh * om { AttractorKind::Chaotic } else { AttractorKind::Unresolved };
            let mut v = AttractorVerdict::new(kind);
            v.lyapunov = Some(l);
            v
        }
        Err(e) => {
            let mut v = AttractorVerdict::new(AttractorKind::Unresolved);
            v.notes.push(format!("Lyapunov estimate failed: {e}"));
            v
        }
    };
    v.omega0 = omega0;
    v.notes.extend(notes);
    v
}

/// Integrates from a kicked normal phase, trims the transient and
/// classifies the attractor.
pub fn classify_run(p: &ModelParams, fps: &[FixedPoint], cfg: &ClassifyConfig) -> Result<(Trajectory, AttractorVerdict)> {
    let start = perturb(&SystemState::normal(), cfg.initial_kick, cfg.seed);
    let traj = integrate(&start, p, &cfg.integrator)?;
    let trimmed = trim_transient(&traj, cfg.transient_fraction)?;
    let verdict = classify_attractor(&trimmed, fps, p, cfg);
    Ok((trimmed, verdict))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub lambda_star: f64,
    pub beta: f64,
    pub amplitude: f64,
    pub points: usize,
}

/// Least-squares fit of ω0 = A |λ − λ*|^β in log-log coordinates.
pub fn fit_power_law(lambdas: &[f64], omegas: &[f64], lambda_star: f64) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = lambdas
        .iter()
        .zip(omegas)
        .filter(|(l, w)| w.is_finite() && **w > 0.0 && (*l - lambda_star).abs() > 0.0)
        .map(|(l, w)| ((l - lambda_star).abs().ln(), w.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientData(format!("power-law fit needs >= 4 points, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("all λ at the same distance from λ*".into()));
    }
    let beta = sxy / sxx;
    Ok(PowerLawFit { lambda_star, beta, amplitude: (my - beta * mx).exp(), points: pts.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub lambda: f64,
    pub omega0: Option<f64>,
    pub resolution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub fit: PowerLawFit,
}

/// Emergent frequency at each λ followed by a power-law fit against
/// `lambda_star`. Points without a resolved ω0 are kept in the report but
/// left out of the fit.
pub fn omega0_scaling(
    template: &ModelParams,
    lambdas: &[f64],
    lambda_star: f64,
    cfg: &ClassifyConfig,
) -> Result<ScalingReport> {
    use rayon::prelude::*;
    let points: Vec<Result<ScalingPoint>> = lambdas
        .par_iter()
        .map(|&lam| {
            let p = template.clone().with_lambda_scaled(lam);
            let start = perturb(&SystemState::normal(), cfg.initial_kick, cfg.seed);
            let traj = integrate(&start, &p, &cfg.integrator)?;
            let trimmed = trim_transient(&traj, cfg.transient_fraction)?;
            let rep = fourier_spectrum(&probe_series(&trimmed), trimmed.dt(), &cfg.spectrum)?;
            Ok(ScalingPoint { lambda: lam, omega0: rep.omega0, resolution: rep.resolution })
        })
        .collect();
    let points: Vec<ScalingPoint> = points.into_iter().collect::<Result<_>>()?;
    let (ls, ws): (Vec<f64>, Vec<f64>) =
        points.iter().filter_map(|pt| pt.omega0.map(|w| (pt.lambda, w))).unzip();
    let fit = fit_power_law(&ls, &ws, lambda_star)?;
    Ok(ScalingReport { points, fit })
}

/// Uses the adiabatic integrator configuration unless told otherwise.
pub fn classification_integrator(t_end: f64) -> IntegratorConfig {
    IntegratorConfig::default().with_t_end(t_end).with_mode(Mode::Adiabatic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpinVector;

    fn larmor_traj(n: usize, dt: f64) -> Trajectory {
        let p = ModelParams::benchmark(0.0, 1.0, 0.0);
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let states = times
            .iter()
            .map(|&t| {
                let s = |ph: f64| SpinVector::new(0.6 * (t + ph).cos(), 0.6 * (t + ph).sin(), -0.8);
                SystemState { spins: [s(0.0), s(-TAU / 3.0), s(TAU / 3.0)], cavity: Complex64::from_polar(0.1, t) }
            })
            .collect();
        Trajectory { times, states, params: p }
    }

    #[test]
    fn trimming_rules() {
        let tr = larmor_traj(1000, 0.05);
        assert_eq!(trim_transient(&tr, 0.5).unwrap().len(), 500);
        assert_eq!(trim_transient(&tr, 0.0).unwrap().len(), 1000);
        assert!(trim_transient(&larmor_traj(100, 0.05), 0.99).is_err());
    }

    #[test]
    fn larmor_angles_grow_linearly() {
        let tr = larmor_traj(2000, 0.05);
        let th = phase_angles(&tr).unwrap();
        for (t, a) in tr.times.iter().zip(&th) {
            assert!((a[0] - th[0][0] - t).abs() < 1e-6);
        }
    }

    #[test]
    fn undefined_angle_is_reported() {
        let mut tr = larmor_traj(100, 0.05);
        tr.states[37].spins[1] = SpinVector::DOWN;
        match phase_angles(&tr) {
            Err(Error::UndefinedAngle(t)) => assert!((t - 37.0 * 0.05).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_chiral_orbit_metrics() {
        let tr = larmor_traj(4000, 0.05);
        let m = chiral_metrics(&tr).unwrap();
        assert!(m.velocity_spread < 1e-9);
        assert!((m.mean_velocity - 1.0).abs() < 1e-9);
        assert!(m.lock_residual < 1e-9);
        assert_eq!(m.handedness, -1);
        assert!(m.radius_cv < 1e-12);
    }

    #[test]
    fn sine_has_single_peak() {
        let dt = 0.05;
        let x: Vec<f64> = (0..8192).map(|k| (1.3 * k as f64 * dt).sin()).collect();
        let r = fourier_spectrum(&x, dt, &SpectrumConfig::default()).unwrap();
        assert_eq!(r.peaks.len(), 1);
        assert!((r.peaks[0].freq - 1.3).abs() < r.resolution);
        assert!((r.omega0.unwrap() - 1.3).abs() < r.resolution);
    }

    #[test]
    fn square_wave_has_odd_comb() {
        let dt = 0.05;
        let w0 = 0.05;
        let x: Vec<f64> = (0..65536).map(|k| (w0 * k as f64 * dt).sin().signum()).collect();
        let r = fourier_spectrum(&x, dt, &SpectrumConfig::default()).unwrap();
        assert!((r.omega0.unwrap() - w0).abs() < r.resolution);
        assert!(r.odd_harmonic_score > 0.8, "{}", r.odd_harmonic_score);
    }

    #[test]
    fn constant_series_has_no_peaks() {
        let r = fourier_spectrum(&vec![0.3; 2048], 0.1, &SpectrumConfig::default()).unwrap();
        assert!(r.peaks.is_empty());
        assert!(r.omega0.is_none());
        assert!(fourier_spectrum(&vec![0.3; 100], 0.1, &SpectrumConfig::default()).is_err());
    }

    #[test]
    fn synthetic_power_law_is_recovered() {
        let ls: Vec<f64> = (1..=8).map(|k| 50.0 - 0.3 * k as f64).collect();
        let ws: Vec<f64> = ls.iter().map(|l| (50.0f64 - l).abs().powf(0.1)).collect();
        let fit = fit_power_law(&ls, &ws, 50.0).unwrap();
        assert!((fit.beta - 0.1).abs() < 1e-12);
        assert!(fit_power_law(&ls[..3], &ws[..3], 50.0).is_err());
    }

    #[test]
    fn dwell_segmentation_and_cycles() {
        let verts = VertexSet::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let p = ModelParams::benchmark(0.0, 1.0, 0.0);
        let mut times = Vec::new();
        let mut states = Vec::new();
        for k in 0..900 {
            let v = (k / 30) % 3;
            let inside = k % 30 < 20;
            let mut sx = [0.3, 0.3, 0.3];
            if inside {
                sx = verts.points[v];
            }
            times.push(k as f64);
            states.push(SystemState {
                spins: [0, 1, 2].map(|i| SpinVector::lower(sx[i] * 0.99, 0.0)),
                cavity: Complex64::new(0.0, 0.0),
            });
        }
        let tr = Trajectory { times, states, params: p };
        let rec = dwell_record(&tr, &verts);
        assert_eq!(rec.visits.len(), 30);
        for w in rec.visits.windows(2) {
            assert_ne!(w[0].vertex, w[1].vertex);
            assert!(w[0].entry <= w[0].exit);
        }
        let c = cycle_stats(&rec).unwrap();
        assert_eq!(c.length, 3);
        assert!((c.period - 90.0).abs() < 1e-9);
        assert!(c.period_spread < 1e-12);
    }
}
