use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use nrdicke_core::compensate::{self, cavity_vertices, cavity_winding, vertex_radius_distortion};
use nrdicke_core::dynamics::{self, classification_integrator, fourier_spectrum, probe_series, trim_transient};
use nrdicke_core::stability::{self, EpOptions, PathParam};
use nrdicke_core::stationary::{self, FixedPoint};
use nrdicke_core::sweep::{self, DpResolution, Header};
use nrdicke_core::{
    census, classify_run, integrate, perturb, CensusOptions, ClassifyConfig, GridRange, IntegratorConfig,
    ModelParams, PhaseRecord, SweepMode, SweepSpec, SystemState,
};
use serde_json::json;

use crate::{open_output, parse, CliError, CliResult, Command, Ctx, ModeArg, ModelArgs, EXIT_NUMERIC, EXIT_OK};

pub fn dispatch(cmd: Command, ctx: &Ctx) -> CliResult<i32> {
    match cmd {
        Command::Trajectory(a) => trajectory(a, ctx),
        Command::Stationary(a) => stationary(a, ctx),
        Command::Stability(a) => stability(a, ctx),
        Command::Classify(a) => classify(a, ctx),
        Command::Sweep(a) => sweep_cmd(a, ctx),
        Command::Groundstate(a) => groundstate(a, ctx),
        Command::Scaling(a) => scaling(a, ctx),
        Command::Compensate(a) => compensate_cmd(a, ctx),
    }
}

fn validated(p: ModelParams) -> CliResult<ModelParams> {
    p.validate()?;
    Ok(p)
}

fn finish(mut w: Box<dyn Write>) -> CliResult<i32> {
    w.flush()?;
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Phase φ; accepts pi literals such as 2pi/3.
    #[arg(long, value_parser = parse::real, allow_hyphen_values = true)]
    pub phi: f64,
    /// Coupling λ.
    #[arg(long, value_parser = parse::real)]
    pub lambda: f64,
    /// Integration time.
    #[arg(long, default_value = "2000", value_parser = parse::real)]
    pub t_end: f64,
    /// Output sampling interval.
    #[arg(long, default_value = "0.05", value_parser = parse::real)]
    pub sample_dt: f64,
    /// Equations to integrate.
    #[arg(long, value_enum, default_value_t = ModeArg::Adiabatic)]
    pub mode: ModeArg,
    /// Step-size control tolerance.
    #[arg(long, default_value = "1e-11", value_parser = parse::real)]
    pub rel_tol: f64,
    /// Step-size control tolerance.
    #[arg(long, default_value = "1e-14", value_parser = parse::real)]
    pub abs_tol: f64,
    /// Size of the random kick applied to the normal state.
    #[arg(long, default_value = "1e-3", value_parser = parse::real)]
    pub kick: f64,
    /// Output CSV (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn trajectory(a: TrajectoryArgs, ctx: &Ctx) -> CliResult<i32> {
    let p = validated(a.model.params(a.phi, a.lambda))?;
    let cfg = IntegratorConfig::default()
        .with_t_end(a.t_end)
        .with_sample_dt(a.sample_dt)
        .with_mode(a.mode.into())
        .with_tolerances(a.rel_tol, a.abs_tol);
    cfg.validate()?;
    let start = perturb(&SystemState::normal(), a.kick, ctx.seed);
    let tr = integrate(&start, &p, &cfg)?;
    let mut w = open_output(a.output.as_deref())?;
    for line in ctx.preamble(&json!({ "model": p, "integrator": cfg, "kick": a.kick, "seed": ctx.seed }))? {
        writeln!(w, "# {line}")?;
    }
    tr.write_csv(&mut w)?;
    finish(w)
}

#[derive(Args, Debug)]
pub struct StationaryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Phase φ; pi literals such as 2pi/3 are accepted.
    #[arg(long, value_parser = parse::real, allow_hyphen_values = true)]
    pub phi: f64,
    /// Coupling λ.
    #[arg(long, value_parser = parse::real)]
    pub lambda: f64,
    /// Output JSON lines: a header, then one root per line (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn stationary(a: StationaryArgs, ctx: &Ctx) -> CliResult<i32> {
    let p = validated(a.model.params(a.phi, a.lambda))?;
    let c = census(&p, &CensusOptions::default())?;
    let mut header = ctx.header("roots", &p)?;
    header["label"] = serde_json::to_value(&c.label)?;
    let mut w = open_output(a.output.as_deref())?;
    writeln!(w, "{header}")?;
    stationary::write_roots_jsonl(&mut w, &c.roots)?;
    if a.output.is_some() {
        let stable = c.stable_roots().count();
        println!("{} degeneracy {} roots {} stable {}", c.label.tag, c.label.degeneracy, c.roots.len(), stable);
    }
    finish(w)
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Value or lo:hi:n range; exactly one of --phi and --lambda is a range.
    #[arg(long, value_parser = parse::range, allow_hyphen_values = true)]
    pub phi: GridRange,
    /// Value or lo:hi:n range of λ.
    #[arg(long, value_parser = parse::range)]
    pub lambda: GridRange,
    /// Follow the normal phase.
    #[arg(long)]
    pub np: bool,
    /// Otherwise follow this stable nontrivial root of the path's first point.
    #[arg(long, default_value_t = 0)]
    pub root: usize,
    /// Eigenvalue flow CSV (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Exceptional-point report as JSON lines (stdout if --output is set, else stderr).
    #[arg(long)]
    pub ep_out: Option<PathBuf>,
}

fn stability(a: StabilityArgs, ctx: &Ctx) -> CliResult<i32> {
    let (param, path, fixed) = match (a.phi.n > 1, a.lambda.n > 1) {
        (true, false) => (PathParam::Phi, a.phi, a.lambda.lo),
        (false, true) => (PathParam::Lambda, a.lambda, a.phi.lo),
        _ => return Err(CliError::Usage("exactly one of --phi and --lambda must be a lo:hi:n range".into())),
    };
    let template = match param {
        PathParam::Phi => a.model.params(path.lo, fixed),
        PathParam::Lambda => a.model.params(fixed, path.lo),
    };
    let template = validated(template)?;
    let values = path.values();
    let start = if a.np {
        FixedPoint::normal(&template).spins
    } else {
        let first = param.apply(&template, values[0]);
        let c = census(&first, &CensusOptions::default())?;
        let roots = c.stable_nontrivial();
        let r = roots.get(a.root).ok_or_else(|| {
            CliError::Usage(format!(
                "path start has {} stable nontrivial roots, --root {} is out of range (use --np for the normal phase)",
                roots.len(),
                a.root
            ))
        })?;
        r.spins
    };
    let scan = stability::detect_ep(param, &template, &values, &start, &EpOptions::default());
    let path_name = match param {
        PathParam::Phi => "phi",
        PathParam::Lambda => "lambda",
    };
    let mut pre = ctx.preamble(&template)?;
    pre.push(format!("path: {path_name} from {} to {} in {} points", path.lo, path.hi, path.n));
    if let Some(at) = scan.broken_at {
        pre.push(format!("root lost at {path_name} = {at}"));
    }
    let mut w = open_output(a.output.as_deref())?;
    stability::write_spectrum_flow(&mut w, &scan, &pre)?;
    w.flush()?;
    let mut rep: Box<dyn Write> = match (&a.ep_out, &a.output) {
        (Some(p), _) => open_output(Some(p))?,
        (None, Some(_)) => Box::new(std::io::stdout()),
        (None, None) => Box::new(std::io::stderr()),
    };
    for ep in &scan.eps {
        writeln!(rep, "{}", serde_json::to_string(&json!({ path_name: ep.param, "ep": ep }))?)?;
    }
    rep.flush()?;
    Ok(if scan.spectra.is_empty() { EXIT_NUMERIC } else { EXIT_OK })
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Phase φ; pi literals such as 2pi/3 are accepted.
    #[arg(long, value_parser = parse::real, allow_hyphen_values = true)]
    pub phi: f64,
    /// Coupling λ.
    #[arg(long, value_parser = parse::real)]
    pub lambda: f64,
    /// Integration time.
    #[arg(long, default_value = "2000", value_parser = parse::real)]
    pub t_end: f64,
    /// Output sampling interval.
    #[arg(long, default_value = "0.05", value_parser = parse::real)]
    pub sample_dt: f64,
    /// Leading fraction of the run discarded as transient.
    #[arg(long, default_value = "0.5", value_parser = parse::real)]
    pub transient: f64,
    /// Size of the random kick applied to the normal state.
    #[arg(long, default_value = "1e-3", value_parser = parse::real)]
    pub kick: f64,
    /// Horizon of the Lyapunov estimate (defaults to --t-end).
    #[arg(long, value_parser = parse::real)]
    pub lyap_t_end: Option<f64>,
    /// Verdict JSON (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Cavity trace t, Re a, Im a after the transient.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Power spectrum of the probe observable.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
}

fn classify(a: ClassifyArgs, ctx: &Ctx) -> CliResult<i32> {
    let p = validated(a.model.params(a.phi, a.lambda))?;
    let mut cfg = ClassifyConfig {
        integrator: classification_integrator(a.t_end).with_sample_dt(a.sample_dt),
        transient_fraction: a.transient,
        initial_kick: a.kick,
        seed: ctx.seed,
        ..ClassifyConfig::default()
    };
    cfg.lyapunov.t_end = a.lyap_t_end.unwrap_or(a.t_end);
    cfg.integrator.validate()?;
    let c = census(&p, &CensusOptions::default())?;
    let (tr, verdict) = classify_run(&p, &c.roots, &cfg)?;
    let mut out = ctx.header("verdict", &p)?;
    out["classify"] = serde_json::to_value(&cfg)?;
    out["label"] = serde_json::to_value(&c.label)?;
    out["verdict"] = serde_json::to_value(&verdict)?;
    let mut w = open_output(a.output.as_deref())?;
    writeln!(w, "{}", serde_json::to_string_pretty(&out)?)?;
    w.flush()?;
    if let Some(path) = &a.trace {
        let mut t = open_output(Some(path))?;
        for line in ctx.preamble(&p)? {
            writeln!(t, "# {line}")?;
        }
        writeln!(t, "t,a_re,a_im")?;
        for (time, s) in tr.times.iter().zip(&tr.states) {
            writeln!(t, "{time},{},{}", s.cavity.re, s.cavity.im)?;
        }
        t.flush()?;
    }
    if let Some(path) = &a.spectrum {
        let rep = fourier_spectrum(&probe_series(&tr), tr.dt(), &cfg.spectrum)?;
        let mut s = open_output(Some(path))?;
        rep.write_csv(&mut s, &ctx.preamble(&p)?)?;
        s.flush()?;
    }
    if a.output.is_some() {
        println!("{:?}", verdict.kind);
    }
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// lo:hi:n grid in φ (pi literals allowed).
    #[arg(long, value_parser = parse::range)]
    pub phi: GridRange,
    /// lo:hi:n grid in λ.
    #[arg(long, value_parser = parse::range)]
    pub lambda: GridRange,
    /// Phase map (JSON lines).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Continue a partially written phase map.
    #[arg(long)]
    pub resume: bool,
    /// Companion CSV with one row per grid point.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Classify the attractor at points without a stable fixed point.
    #[arg(long)]
    pub integrate_dp: bool,
    /// Run length used by --integrate-dp.
    #[arg(long, default_value = "2000", value_parser = parse::real)]
    pub t_end: f64,
}

fn run_sweep(spec: SweepSpec, output: &Path, resume: bool, csv: Option<&Path>, ctx: &Ctx) -> CliResult<i32> {
    spec.validate()?;
    let header = Header::for_spec(&spec).with_command(ctx.command_line.clone());
    let records: Vec<PhaseRecord> = if resume {
        sweep::resume_with_header(&spec, &header, output)?
    } else {
        let mut w = open_output(Some(output))?;
        let r = sweep::sweep_with_header(&spec, &header, &mut w)?;
        w.flush()?;
        r
    };
    if let Some(path) = csv {
        let mut w = open_output(Some(path))?;
        sweep::write_csv(&records, &mut w)?;
        w.flush()?;
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &records {
        let key = match &r.label {
            Some(l) => format!("{}({})", l.tag, l.degeneracy),
            None => "error".into(),
        };
        *counts.entry(key).or_default() += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    println!("{} points; {}", records.len(), summary.join(", "));
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} points failed; see the status field in {}", output.display());
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

fn sweep_cmd(a: SweepArgs, ctx: &Ctx) -> CliResult<i32> {
    let template = a.model.params(a.phi.lo, 1.0);
    let mut spec = SweepSpec::new(a.phi, a.lambda, template, SweepMode::SteadyState);
    if a.integrate_dp {
        spec.dp_resolution = DpResolution::IntegrateDP;
        spec.classify.integrator = classification_integrator(a.t_end);
        spec.classify.lyapunov.t_end = a.t_end;
        spec.classify.seed = ctx.seed;
    }
    run_sweep(spec, &a.output, a.resume, a.csv.as_deref(), ctx)
}

#[derive(Args, Debug)]
pub struct GroundArgs {
    /// Cavity detuning.
    #[arg(long, default_value = "500", value_parser = parse::real)]
    pub omega_c: f64,
    /// Spin frequency of every species.
    #[arg(long, default_value = "1", value_parser = parse::real)]
    pub omega: f64,
    #[arg(long, value_parser = parse::range)]
    pub phi: GridRange,
    /// Value or lo:hi:n range of λ.
    #[arg(long, value_parser = parse::range)]
    pub lambda: GridRange,
    /// Phase map (JSON lines).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Continue a partially written phase map.
    #[arg(long)]
    pub resume: bool,
    /// Companion CSV with one row per grid point.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn groundstate(a: GroundArgs, ctx: &Ctx) -> CliResult<i32> {
    let mut template = ModelParams::homogeneous(a.omega_c, 0.0, 0.0, a.phi.lo, 1.0);
    template.omega = [a.omega; 3];
    let spec = SweepSpec::new(a.phi, a.lambda, template, SweepMode::GroundState);
    run_sweep(spec, &a.output, a.resume, a.csv.as_deref(), ctx)
}

#[derive(Args, Debug)]
pub struct ScalingArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Phase φ; pi literals such as 2pi/3 are accepted.
    #[arg(long, default_value = "2pi/3", value_parser = parse::real, allow_hyphen_values = true)]
    pub phi: f64,
    /// Comma list or lo:hi:n range of λ values.
    #[arg(long)]
    pub lambdas: String,
    /// Critical coupling the fit measures distances from.
    #[arg(long, value_parser = parse::real)]
    pub lambda_star: f64,
    /// Integration time.
    #[arg(long, default_value = "40000", value_parser = parse::real)]
    pub t_end: f64,
    /// Output sampling interval.
    #[arg(long, default_value = "0.5", value_parser = parse::real)]
    pub sample_dt: f64,
    /// Per-point CSV lambda,omega0,resolution (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn scaling(a: ScalingArgs, ctx: &Ctx) -> CliResult<i32> {
    let lambdas = parse::list(&a.lambdas).map_err(CliError::Usage)?;
    if lambdas.len() < 4 {
        return Err(CliError::Usage("--lambdas needs at least four values".into()));
    }
    let template = validated(a.model.params(a.phi, lambdas[0]))?;
    let cfg = ClassifyConfig {
        integrator: classification_integrator(a.t_end).with_sample_dt(a.sample_dt),
        seed: ctx.seed,
        ..ClassifyConfig::default()
    };
    let rep = dynamics::omega0_scaling(&template, &lambdas, a.lambda_star, &cfg)?;
    let mut w = open_output(a.output.as_deref())?;
    for line in ctx.preamble(&template)? {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# fit: {}", serde_json::to_string(&rep.fit)?)?;
    writeln!(w, "lambda,omega0,resolution")?;
    for pt in &rep.points {
        let om = pt.omega0.map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "{},{om},{}", pt.lambda, pt.resolution)?;
    }
    w.flush()?;
    if a.output.is_some() {
        println!("{}", serde_json::to_string(&rep.fit)?);
    }
    Ok(EXIT_OK)
}

#[derive(Args, Debug)]
pub struct CompensateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Phase φ; pi literals such as 2pi/3 are accepted.
    #[arg(long, value_parser = parse::real, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// Renormalized coupling Λ.
    #[arg(long, value_parser = parse::real)]
    pub lambda: Option<f64>,
    /// Compensate populations only and keep the spin frequencies equal.
    #[arg(long)]
    pub populations_only: bool,
    /// Read the plan from this JSON file instead of --phi/--lambda.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Write the plan as JSON.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
    /// Integrate from the kicked normal state and measure the cavity orbit.
    #[arg(long)]
    pub run: bool,
    /// Integration time.
    #[arg(long, default_value = "1400", value_parser = parse::real)]
    pub t_end: f64,
    /// Output sampling interval.
    #[arg(long, default_value = "0.05", value_parser = parse::real)]
    pub sample_dt: f64,
    /// Size of the random kick applied to the normal state.
    #[arg(long, default_value = "1e-3", value_parser = parse::real)]
    pub kick: f64,
    /// Angular bins used to locate the orbit's dwell directions.
    #[arg(long, default_value_t = 36)]
    pub bins: usize,
    /// Cavity trace t, Re a, Im a after the transient.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Report JSON (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn compensate_cmd(a: CompensateArgs, ctx: &Ctx) -> CliResult<i32> {
    let plan = match &a.plan {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read plan {}: {e}", path.display())))?;
            compensate::CompensationPlan::from_json(&text)?
        }
        None => {
            let (Some(phi), Some(lam)) = (a.phi, a.lambda) else {
                return Err(CliError::Usage("give --phi and --lambda, or --plan".into()));
            };
            compensate::make_plan(phi, lam, !a.populations_only)?
        }
    };
    if let Some(path) = &a.plan_out {
        fs::write(path, plan.to_json() + "\n")?;
    }
    let base = a.model.params(plan.phi, plan.big_lambda);
    let p = validated(compensate::params_from_plan(&plan, &base))?;
    let mut out = ctx.header("compensation", &p)?;
    out["plan"] = serde_json::to_value(plan)?;
    if a.run {
        let cfg = classification_integrator(a.t_end).with_sample_dt(a.sample_dt);
        cfg.validate()?;
        let tr = integrate(&perturb(&SystemState::normal(), a.kick, ctx.seed), &p, &cfg)?;
        let tr = trim_transient(&tr, 0.5)?;
        let vertices = cavity_vertices(&tr, a.bins, 0.5);
        out["run"] = json!({
            "t_end": a.t_end,
            "vertices": vertices,
            "distortion": vertex_radius_distortion(&vertices),
            "winding": cavity_winding(&tr),
        });
        if let Some(path) = &a.trace {
            let mut t = open_output(Some(path))?;
            for line in ctx.preamble(&p)? {
                writeln!(t, "# {line}")?;
            }
            writeln!(t, "t,a_re,a_im")?;
            for (time, s) in tr.times.iter().zip(&tr.states) {
                writeln!(t, "{time},{},{}", s.cavity.re, s.cavity.im)?;
            }
            t.flush()?;
        }
    }
    let mut w = open_output(a.output.as_deref())?;
    writeln!(w, "{}", serde_json::to_string_pretty(&out)?)?;
    finish(w)
}
