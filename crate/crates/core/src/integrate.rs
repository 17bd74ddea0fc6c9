//! Adaptive Dormand–Prince 5(4) integration with dense output onto a uniform
//! sampling grid.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Eom, ModelParams, SpinVector, SystemState};

/// Which set of equations drives the trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Spins and cavity.
    Full,
    /// Spins only, cavity slaved to the instantaneous spin configuration.
    #[default]
    Adiabatic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub sample_dt: f64,
    pub max_step: f64,
    pub mode: Mode,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-14,
            t_end: 2000.0,
            sample_dt: 0.05,
            max_step: 1.0,
            mode: Mode::Adiabatic,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_sample_dt(mut self, dt: f64) -> Self {
        self.sample_dt = dt;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.sample_dt > 0.0
            && self.sample_dt <= self.t_end
            && self.max_step > 0.0
            && self.t_end.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid integrator config {self:?}")))
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.t_end / self.sample_dt + 1e-9).floor() as usize + 1
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];
// Continuous extension of order 4 (Shampine's coefficients).
const P: [[f64; 4]; 7] = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
];

const MIN_STEP: f64 = 1e-12;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Step-by-step Dormand–Prince integrator for an autonomous system of
/// dimension `N`. Keeps its step size across calls to [`Stepper::advance`].
pub struct Stepper<F, const N: usize> {
    f: F,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    steps: u64,
}

impl<F, const N: usize> Stepper<F, N>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    pub fn new(f: F, y0: [f64; N], rel_tol: f64, abs_tol: f64, max_step: f64) -> Self {
        let k1 = f(&y0);
        let mut s = Stepper { f, t: 0.0, y: y0, k1, h: 0.0, rel_tol, abs_tol, max_step, steps: 0 };
        s.h = s.initial_step();
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Replaces the current state, keeping time and step size.
    pub fn reset_state(&mut self, y: [f64; N]) {
        self.y = y;
        self.k1 = (self.f)(&y);
    }

    fn scale(&self, y: &[f64; N], y_new: &[f64; N], i: usize) -> f64 {
        self.abs_tol + self.rel_tol * y[i].abs().max(y_new[i].abs())
    }

    fn rms(&self, v: &[f64; N], y: &[f64; N], y_new: &[f64; N]) -> f64 {
        let s: f64 = (0..N).map(|i| (v[i] / self.scale(y, y_new, i)).powi(2)).sum();
        (s / N as f64).sqrt()
    }

    // Hairer, Nørsett & Wanner, Solving ODEs I, starting step heuristic.
    fn initial_step(&self) -> f64 {
        let d0 = self.rms(&self.y, &self.y, &self.y);
        let d1 = self.rms(&self.k1, &self.y, &self.y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = axpy(&self.y, h0, &[(1.0, &self.k1)]);
        let f1 = (self.f)(&y1);
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - self.k1[i];
        }
        let d2 = self.rms(&diff, &self.y, &self.y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.max_step)
    }

    /// Integrates up to `t_target`, calling `observe(t, y)` for every grid
    /// time in `grid` that falls inside each accepted step.
    pub fn advance<G>(&mut self, t_target: f64, grid: &mut G) -> Result<()>
    where
        G: FnMut(f64, &dyn Fn(f64) -> [f64; N]) -> bool,
    {
        while self.t < t_target {
            let mut h = self.h.min(self.max_step);
            let last = self.t + h >= t_target;
            if last {
                h = t_target - self.t;
            }
            let f = &self.f;
            let y = self.y;
            let k1 = self.k1;
            let k2 = f(&axpy(&y, h, &[(A2[0], &k1)]));
            let k3 = f(&axpy(&y, h, &[(A3[0], &k1), (A3[1], &k2)]));
            let k4 = f(&axpy(&y, h, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]));
            let k5 = f(&axpy(&y, h, &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)]));
            let k6 = f(&axpy(
                &y,
                h,
                &[(A6[0], &k1), (A6[1], &k2), (A6[2], &k3), (A6[3], &k4), (A6[4], &k5)],
            ));
            let y_new = axpy(
                &y,
                h,
                &[(B[0], &k1), (B[2], &k3), (B[3], &k4), (B[4], &k5), (B[5], &k6)],
            );
            let k7 = f(&y_new);
            if y_new.iter().chain(k7.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Integration { t: self.t, reason: "non-finite right-hand side".into() });
            }
            let ks = [&k1, &k2, &k3, &k4, &k5, &k6, &k7];
            let mut err = [0.0; N];
            for (e, k) in E.iter().zip(ks.iter()) {
                for i in 0..N {
                    err[i] += h * e * k[i];
                }
            }
            let en = self.rms(&err, &y, &y_new);
            let _ = C;
            if en <= 1.0 {
                let t0 = self.t;
                let interp = |t: f64| -> [f64; N] {
                    let th = (t - t0) / h;
                    let pw = [th, th * th, th * th * th, th * th * th * th];
                    let mut out = y;
                    for (j, k) in ks.iter().enumerate() {
                        let w = P[j][0] * pw[0] + P[j][1] * pw[1] + P[j][2] * pw[2] + P[j][3] * pw[3];
                        if w != 0.0 {
                            for i in 0..N {
                                out[i] += h * w * k[i];
                            }
                        }
                    }
                    out
                };
                let t1 = if last { t_target } else { t0 + h };
                let endpoint = |t: f64| if t >= t1 { y_new } else { interp(t) };
                if !grid(t1, &endpoint) {
                    return Ok(());
                }
                self.t = t1;
                self.y = y_new;
                self.k1 = k7;
                self.steps += 1;
                let fac = if en == 0.0 { 10.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 10.0) };
                if !last {
                    self.h = h * fac;
                } else {
                    self.h = self.h.max(h * fac.min(1.0));
                }
            } else {
                let fac = (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
                self.h = h * fac;
                if self.h < MIN_STEP {
                    return Err(Error::Integration {
                        t: self.t,
                        reason: format!("step size {:.3e} underflow", self.h),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Uniformly sampled solution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub params: ModelParams,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn last(&self) -> &SystemState {
        self.states.last().expect("empty trajectory")
    }

    pub fn max_norm_defect(&self) -> f64 {
        self.states.iter().map(SystemState::norm_defect).fold(0.0, f64::max)
    }

    pub fn cavity(&self) -> Vec<Complex64> {
        self.states.iter().map(|s| s.cavity).collect()
    }

    /// Series of one scalar observable.
    pub fn series(&self, f: impl Fn(&SystemState) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    pub const CSV_HEADER: &'static str =
        "t,sx_-1,sy_-1,sz_-1,sx_0,sy_0,sz_0,sx_1,sy_1,sz_1,a_re,a_im";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for x in s.to_full() {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str, params: ModelParams) -> Result<Self> {
        let mut times = Vec::new();
        let mut states = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Malformed(format!("{e}: {x}"))))
                .collect::<Result<_>>()?;
            if v.len() != 12 {
                return Err(Error::Malformed(format!("expected 12 columns, got {}", v.len())));
            }
            times.push(v[0]);
            let mut y = [0.0; 11];
            y.copy_from_slice(&v[1..]);
            states.push(SystemState::from_full(&y));
        }
        Ok(Trajectory { times, states, params })
    }
}

fn sampler<'a, const N: usize>(
    dt: f64,
    n: usize,
    out: &'a mut Vec<(f64, [f64; N])>,
) -> impl FnMut(f64, &dyn Fn(f64) -> [f64; N]) -> bool + 'a {
    move |t1, interp| {
        while out.len() < n {
            let tk = out.len() as f64 * dt;
            if tk > t1 + 1e-12 * dt {
                break;
            }
            out.push((tk, interp(tk.min(t1))));
        }
        true
    }
}

/// Integrates from `state0` at t = 0 and samples every `cfg.sample_dt`.
pub fn integrate(state0: &SystemState, p: &ModelParams, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    p.validate()?;
    if !state0.is_finite() {
        return Err(Error::Integration { t: 0.0, reason: "non-finite initial state".into() });
    }
    let eom = Eom::new(p);
    let n = cfg.n_samples();
    let t_stop = (n - 1) as f64 * cfg.sample_dt;
    let states = match cfg.mode {
        Mode::Full => {
            let mut samples: Vec<(f64, [f64; 11])> = Vec::with_capacity(n);
            samples.push((0.0, state0.to_full()));
            let mut st = Stepper::new(|y: &[f64; 11]| eom.full(y), state0.to_full(), cfg.rel_tol, cfg.abs_tol, cfg.max_step);
            st.advance(t_stop, &mut sampler(cfg.sample_dt, n, &mut samples))?;
            samples.into_iter().map(|(t, y)| (t, SystemState::from_full(&y))).collect::<Vec<_>>()
        }
        Mode::Adiabatic => {
            let mut samples: Vec<(f64, [f64; 9])> = Vec::with_capacity(n);
            samples.push((0.0, state0.to_spin_vec()));
            let mut st = Stepper::new(
                |y: &[f64; 9]| eom.adiabatic(y),
                state0.to_spin_vec(),
                cfg.rel_tol,
                cfg.abs_tol,
                cfg.max_step,
            );
            st.advance(t_stop, &mut sampler(cfg.sample_dt, n, &mut samples))?;
            samples
                .into_iter()
                .map(|(t, y)| (t, SystemState::from_spin_vec(&y, eom.cavity(&y))))
                .collect()
        }
    };
    let (times, states): (Vec<f64>, Vec<SystemState>) = states.into_iter().unzip();
    if times.len() < 2 {
        return Err(Error::Integration { t: t_stop, reason: "fewer than two samples".into() });
    }
    Ok(Trajectory { times, states, params: p.clone() })
}

/// Integrates without storing samples and returns the final state.
pub fn evolve(state0: &SystemState, p: &ModelParams, cfg: &IntegratorConfig) -> Result<SystemState> {
    let eom = Eom::new(p);
    let mut ignore = |_: f64, _: &dyn Fn(f64) -> [f64; 11]| true;
    match cfg.mode {
        Mode::Full => {
            let mut st = Stepper::new(|y: &[f64; 11]| eom.full(y), state0.to_full(), cfg.rel_tol, cfg.abs_tol, cfg.max_step);
            st.advance(cfg.t_end, &mut ignore)?;
            Ok(SystemState::from_full(st.y()))
        }
        Mode::Adiabatic => {
            let mut ignore9 = |_: f64, _: &dyn Fn(f64) -> [f64; 9]| true;
            let mut st = Stepper::new(
                |y: &[f64; 9]| eom.adiabatic(y),
                state0.to_spin_vec(),
                cfg.rel_tol,
                cfg.abs_tol,
                cfg.max_step,
            );
            st.advance(cfg.t_end, &mut ignore9)?;
            Ok(SystemState::from_spin_vec(st.y(), eom.cavity(st.y())))
        }
    }
}

/// Random unit vector in the tangent plane of `s`.
fn tangent_direction(s: &SpinVector, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let n = s.normalized().to_array();
    loop {
        let v: [f64; 3] = [0; 3].map(|_| rng.random_range(-1.0..1.0));
        let dot = v[0] * n[0] + v[1] * n[1] + v[2] * n[2];
        let t = [v[0] - dot * n[0], v[1] - dot * n[1], v[2] - dot * n[2]];
        let len = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        if len > 1e-3 {
            return t.map(|x| x / len);
        }
    }
}

/// Deterministic small kick: each spin moves by `magnitude` along a random
/// tangent direction and is projected back onto the sphere; the cavity is
/// shifted by `magnitude` in a random direction.
pub fn perturb(state: &SystemState, magnitude: f64, seed: u64) -> SystemState {
    if magnitude == 0.0 {
        return *state;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = *state;
    for s in &mut out.spins {
        let d = tangent_direction(s, &mut rng);
        *s = SpinVector::new(s.sx + magnitude * d[0], s.sy + magnitude * d[1], s.sz + magnitude * d[2])
            .normalized();
    }
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    out.cavity += Complex64::from_polar(magnitude, theta);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mean_field_energy;
    use std::f64::consts::PI;

    #[test]
    fn dense_output_on_exponential() {
        let f = |y: &[f64; 2]| [y[0], -y[1]];
        let mut st = Stepper::new(f, [1.0, 1.0], 1e-10, 1e-12, 0.5);
        let mut worst: f64 = 0.0;
        let mut samples = Vec::new();
        st.advance(5.0, &mut sampler(0.01, 501, &mut samples)).unwrap();
        assert_eq!(samples.len(), 501);
        for (t, y) in samples {
            worst = worst.max((y[0] - t.exp()).abs() / t.exp());
            worst = worst.max((y[1] - (-t).exp()).abs() / (-t).exp());
        }
        assert!(worst < 1e-8, "worst relative error {worst}");
    }

    #[test]
    fn normal_state_stays_put() {
        let p = ModelParams::benchmark(0.05, 2.0 * PI / 3.0, 30.0);
        let cfg = IntegratorConfig::default().with_t_end(50.0);
        let tr = integrate(&SystemState::normal(), &p, &cfg).unwrap();
        assert_eq!(tr.len(), 1001);
        for s in &tr.states {
            assert!(s.distance(&SystemState::normal()) < 1e-9);
        }
    }

    #[test]
    fn free_larmor_precession() {
        let p = ModelParams::benchmark(0.0, 1.0, 0.0);
        let mut st = SystemState::normal();
        let s0 = SpinVector::new(0.6, 0.3, -(1.0 - 0.45f64).sqrt());
        st.spins[1] = s0;
        let cfg = IntegratorConfig::default().with_t_end(200.0 * PI).with_sample_dt(0.1);
        for mode in [Mode::Adiabatic, Mode::Full] {
            let tr = integrate(&st, &p, &cfg.clone().with_mode(mode)).unwrap();
            for (t, s) in tr.times.iter().zip(&tr.states) {
                let exact = s0.sx * t.cos() - s0.sy * t.sin();
                assert!((s.spins[1].sx - exact).abs() < 1e-6, "{mode:?} t={t}");
            }
        }
    }

    #[test]
    fn grid_spacing_is_uniform() {
        let p = ModelParams::benchmark(0.05, 1.0, 5.0);
        let cfg = IntegratorConfig::default().with_t_end(10.0).with_sample_dt(0.3);
        let tr = integrate(&perturb(&SystemState::normal(), 0.1, 1), &p, &cfg).unwrap();
        assert_eq!(tr.len(), 34);
        for (k, t) in tr.times.iter().enumerate() {
            assert!((t - k as f64 * 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_system_conserves_energy_and_norm() {
        let p = ModelParams::homogeneous(500.0, 0.0, 0.0, 2.0 * PI / 3.0, 20.0);
        let st = perturb(&SystemState::normal(), 0.3, 11);
        let cfg = IntegratorConfig::default().with_t_end(1000.0).with_sample_dt(1.0);
        let tr = integrate(&st, &p, &cfg).unwrap();
        let e0 = mean_field_energy(&tr.states[0], &p);
        for s in &tr.states {
            let rel = ((mean_field_energy(s, &p) - e0) / e0).abs();
            assert!(rel < 1e-8, "e0 {e0} rel {rel}");
        }
        assert!(tr.max_norm_defect() < 1e-7, "{}", tr.max_norm_defect());
    }

    #[test]
    fn full_mode_energy_drift_is_small() {
        let p = ModelParams::homogeneous(500.0, 0.0, 0.0, 2.0 * PI / 3.0, 20.0);
        let st = perturb(&SystemState::normal(), 0.3, 11);
        let cfg = IntegratorConfig::default()
            .with_t_end(100.0)
            .with_sample_dt(1.0)
            .with_mode(Mode::Full)
            .with_tolerances(1e-12, 1e-15);
        let tr = integrate(&st, &p, &cfg).unwrap();
        let e0 = mean_field_energy(&tr.states[0], &p);
        let worst = tr.states.iter().map(|s| ((mean_field_energy(s, &p) - e0) / e0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn perturb_contract() {
        let np = SystemState::normal();
        assert_eq!(perturb(&np, 0.0, 3), np);
        assert_eq!(perturb(&np, 1e-6, 3), perturb(&np, 1e-6, 3));
        assert_ne!(perturb(&np, 1e-6, 3), perturb(&np, 1e-6, 4));
        let k = perturb(&np, 1e-3, 5);
        assert!(k.norm_defect() < 1e-15);
        let d = k.distance(&np);
        assert!(d > 1e-5 && d < 2e-3);
    }

    #[test]
    fn invalid_config_rejected() {
        let p = ModelParams::benchmark(0.05, 1.0, 5.0);
        let cfg = IntegratorConfig { sample_dt: 0.0, ..Default::default() };
        assert!(integrate(&SystemState::normal(), &p, &cfg).is_err());
        let mut bad = SystemState::normal();
        bad.spins[0].sx = f64::NAN;
        assert!(integrate(&bad, &p, &IntegratorConfig::default().with_t_end(1.0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = ModelParams::benchmark(0.05, 1.0, 5.0);
        let cfg = IntegratorConfig::default().with_t_end(2.0).with_sample_dt(0.5);
        let tr = integrate(&perturb(&SystemState::normal(), 0.1, 1), &p, &cfg).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(Trajectory::CSV_HEADER));
        let back = Trajectory::read_csv(&text, p).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.states, tr.states);
    }
}
