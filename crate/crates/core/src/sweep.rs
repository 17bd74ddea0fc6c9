//! Parallel (φ, λ) phase-map sweeps with an ordered, resumable JSONL output.
//!
//! The output starts with one header line holding the spec and its SHA-256
//! digest, followed by one record per grid point in row-major order
//! (φ index outer, λ index inner).

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{classify_run, AttractorVerdict, ClassifyConfig};
use crate::energy::{ground_phase, minimize_energy, EnergyOptions};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::stationary::{census, CensusOptions, PhaseLabel, PhaseTag};

pub const FORMAT: &str = "nrdicke-phase-map";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CSV_HEADER: &str = "phi,lambda,label,degeneracy";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridRange {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        GridRange { lo, hi, n }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.n <= 1 {
            return self.lo;
        }
        if i + 1 == self.n {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    SteadyState,
    GroundState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DpResolution {
    StabilityOnly,
    IntegrateDP,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub phi: GridRange,
    pub lambda: GridRange,
    /// Every point uses this template with φ and λ replaced.
    pub template: ModelParams,
    pub mode: SweepMode,
    pub dp_resolution: DpResolution,
    pub census: CensusOptions,
    pub classify: ClassifyConfig,
}

impl SweepSpec {
    pub fn new(phi: GridRange, lambda: GridRange, template: ModelParams, mode: SweepMode) -> Self {
        SweepSpec {
            phi,
            lambda,
            template,
            mode,
            dp_resolution: DpResolution::StabilityOnly,
            census: CensusOptions::default(),
            classify: ClassifyConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.n < 2 || self.lambda.n < 2 {
            return Err(Error::InvalidParams("grid needs at least 2 points per axis".into()));
        }
        let eps = 1e-12;
        let in_phi = |x: f64| x.is_finite() && (-eps..=std::f64::consts::PI + eps).contains(&x);
        if !in_phi(self.phi.lo) || !in_phi(self.phi.hi) {
            return Err(Error::InvalidParams("phi range must lie in [0, pi]".into()));
        }
        if !(self.lambda.lo >= 0.0 && self.lambda.hi.is_finite() && self.lambda.hi >= 0.0) {
            return Err(Error::InvalidParams("lambda range must lie in [0, inf)".into()));
        }
        self.template.validate()?;
        if self.mode == SweepMode::GroundState && self.template.kappa != 0.0 {
            return Err(Error::InvalidParams("ground-state sweeps need kappa = 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.phi.n * self.lambda.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (φ, λ) at a row-major index.
    pub fn point(&self, index: usize) -> (f64, f64) {
        (self.phi.value(index / self.lambda.n), self.lambda.value(index % self.lambda.n))
    }

    pub fn params_at(&self, index: usize) -> ModelParams {
        let (phi, lam) = self.point(index);
        self.template.clone().with_phi(phi).with_lambda_scaled(lam)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: String,
    pub spec_hash: String,
    pub spec: SweepSpec,
    /// Command line that produced the file, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
}

impl Header {
    pub fn for_spec(spec: &SweepSpec) -> Self {
        Header {
            format: FORMAT.into(),
            version: VERSION.into(),
            spec_hash: spec.hash(),
            spec: spec.clone(),
            command: None,
        }
    }

    pub fn with_command(mut self, command: impl Into<String>) -> Self {
        self.command = Some(command.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub index: usize,
    pub phi: f64,
    pub lambda: f64,
    /// "ok", or the error that stopped this point.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<PhaseLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attractor: Option<AttractorVerdict>,
    /// s_x of the stable roots, or of the global minima in ground-state mode.
    #[serde(default)]
    pub roots: Vec<[f64; 3]>,
    /// Wall time in milliseconds. Not written to the phase map.
    #[serde(skip)]
    pub elapsed_ms: f64,
}

impl PhaseRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn evaluate(spec: &SweepSpec, index: usize) -> Result<(PhaseLabel, Option<AttractorVerdict>, Vec<[f64; 3]>)> {
    let p = spec.params_at(index);
    match spec.mode {
        SweepMode::SteadyState => {
            let c = census(&p, &spec.census)?;
            let roots: Vec<[f64; 3]> = c.stable_roots().map(|r| r.sx()).collect();
            let attractor = if c.label.tag == PhaseTag::DP && spec.dp_resolution == DpResolution::IntegrateDP {
                Some(classify_run(&p, &c.roots, &spec.classify)?.1)
            } else {
                None
            };
            Ok((c.label, attractor, roots))
        }
        SweepMode::GroundState => {
            let opts = EnergyOptions::default();
            let label = ground_phase(&p, &opts)?;
            let roots = minimize_energy(&p, &opts)?.into_iter().filter(|m| m.global).map(|m| m.sx).collect();
            Ok((label, None, roots))
        }
    }
}

/// Runs one grid point. Failures are captured in the record.
pub fn run_point(spec: &SweepSpec, index: usize) -> PhaseRecord {
    let start = Instant::now();
    let (phi, lambda) = spec.point(index);
    let mut rec = PhaseRecord {
        index,
        phi,
        lambda,
        status: "ok".into(),
        label: None,
        attractor: None,
        roots: Vec::new(),
        elapsed_ms: 0.0,
    };
    match evaluate(spec, index) {
        Ok((label, attractor, roots)) => {
            rec.label = Some(label);
            rec.attractor = attractor;
            rec.roots = roots;
        }
        Err(e) => rec.status = e.to_string(),
    }
    rec.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    rec
}

const CHUNK: usize = 256;

fn run_range<W: Write>(spec: &SweepSpec, from: usize, w: &mut W, out: &mut Vec<PhaseRecord>) -> Result<()> {
    let mut start = from;
    while start < spec.len() {
        let end = (start + CHUNK).min(spec.len());
        let chunk: Vec<PhaseRecord> = (start..end).into_par_iter().map(|i| run_point(spec, i)).collect();
        for rec in &chunk {
            writeln!(w, "{}", serde_json::to_string(rec)?)?;
        }
        w.flush()?;
        out.extend(chunk);
        start = end;
    }
    Ok(())
}

/// Runs the full grid and writes the phase map to `w`.
pub fn sweep<W: Write>(spec: &SweepSpec, w: W) -> Result<Vec<PhaseRecord>> {
    sweep_with_header(spec, &Header::for_spec(spec), w)
}

/// Like [`sweep`] with a caller-supplied header, which must describe `spec`.
pub fn sweep_with_header<W: Write>(spec: &SweepSpec, header: &Header, mut w: W) -> Result<Vec<PhaseRecord>> {
    spec.validate()?;
    if header.spec_hash != spec.hash() {
        return Err(Error::SpecMismatch { expected: spec.hash(), found: header.spec_hash.clone() });
    }
    writeln!(w, "{}", serde_json::to_string(header)?)?;
    let mut out = Vec::with_capacity(spec.len());
    run_range(spec, 0, &mut w, &mut out)?;
    Ok(out)
}

/// Parses a phase map, returning the header and the complete records in
/// order. A truncated final line is ignored.
pub fn read_phase_map<R: BufRead>(r: R) -> Result<(Header, Vec<PhaseRecord>)> {
    let (header, records, _) = read_with_lines(r)?;
    Ok((header, records))
}

fn read_with_lines<R: BufRead>(r: R) -> Result<(Header, Vec<PhaseRecord>, String)> {
    let mut lines = r.lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::Malformed("empty phase map".into())),
    };
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Malformed(format!("header: {e}")))?;
    let mut kept = first + "\n";
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        match serde_json::from_str::<PhaseRecord>(&line) {
            Ok(rec) if rec.index == records.len() => {
                kept += &line;
                kept.push('\n');
                records.push(rec);
            }
            _ => break,
        }
    }
    Ok((header, records, kept))
}

/// Completes a partially written phase map in place. An empty or missing
/// file is treated as a fresh run; a file written for a different spec is
/// refused.
pub fn resume(spec: &SweepSpec, path: &Path) -> Result<Vec<PhaseRecord>> {
    resume_with_header(spec, &Header::for_spec(spec), path)
}

/// Like [`resume`]; `header` is written only when the run starts fresh.
pub fn resume_with_header(spec: &SweepSpec, header: &Header, path: &Path) -> Result<Vec<PhaseRecord>> {
    spec.validate()?;
    let empty = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    if empty {
        let mut w = BufWriter::new(File::create(path)?);
        let out = sweep_with_header(spec, header, &mut w)?;
        w.flush()?;
        return Ok(out);
    }
    let (header, mut records, kept) = read_with_lines(BufReader::new(File::open(path)?))?;
    let expected = spec.hash();
    if header.spec_hash != expected {
        return Err(Error::SpecMismatch { expected, found: header.spec_hash });
    }
    let mut f = OpenOptions::new().write(true).truncate(true).open(path)?;
    f.write_all(kept.as_bytes())?;
    let mut w = BufWriter::new(f);
    run_range(spec, records.len(), &mut w, &mut records)?;
    w.flush()?;
    Ok(records)
}

/// Companion CSV with one row per grid point. Failed points get the label
/// "error".
pub fn write_csv<W: Write>(records: &[PhaseRecord], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let (tag, deg) = match &r.label {
            Some(l) => (l.tag.to_string(), l.degeneracy.to_string()),
            None => ("error".into(), String::new()),
        };
        writeln!(w, "{},{},{},{}", r.phi, r.lambda, tag, deg)?;
    }
    Ok(())
}

/// Index pairs whose labels differ under φ → π − φ. Only meaningful when
/// the φ grid is symmetric about π/2.
pub fn mirror_mismatches(spec: &SweepSpec, records: &[PhaseRecord]) -> Vec<(usize, usize)> {
    let (np, nl) = (spec.phi.n, spec.lambda.n);
    let mut out = Vec::new();
    for i in 0..np / 2 {
        for j in 0..nl {
            let a = i * nl + j;
            let b = (np - 1 - i) * nl + j;
            let la = records.get(a).and_then(|r| r.label.as_ref()).map(|l| (l.tag, l.degeneracy));
            let lb = records.get(b).and_then(|r| r.label.as_ref()).map(|l| (l.tag, l.degeneracy));
            if la != lb {
                out.push((a, b));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small_spec() -> SweepSpec {
        SweepSpec::new(
            GridRange::new(0.0, PI, 5),
            GridRange::new(5.0, 60.0, 4),
            ModelParams::benchmark(0.05, 0.0, 1.0),
            SweepMode::SteadyState,
        )
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = GridRange::new(0.0, PI, 7);
        assert_eq!(g.value(0), 0.0);
        assert_eq!(g.value(6), PI);
        assert_eq!(g.values().len(), 7);
    }

    #[test]
    fn validation_rules() {
        let mut s = small_spec();
        s.phi.n = 1;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.phi.hi = 4.0;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.mode = SweepMode::GroundState;
        assert!(s.validate().is_err());
        s.template.kappa = 0.0;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn hash_changes_with_spec() {
        let a = small_spec();
        let mut b = small_spec();
        assert_eq!(a.hash(), b.hash());
        b.lambda.n = 5;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn sweep_is_ordered_mirror_symmetric_and_deterministic() {
        let spec = small_spec();
        let mut first = Vec::new();
        let recs = sweep(&spec, &mut first).unwrap();
        assert_eq!(recs.len(), spec.len());
        assert!(recs.iter().enumerate().all(|(i, r)| r.index == i && r.is_ok()));
        assert!(mirror_mismatches(&spec, &recs).is_empty());
        let mut second = Vec::new();
        sweep(&spec, &mut second).unwrap();
        assert_eq!(first, second);
        let (h, back) = read_phase_map(&first[..]).unwrap();
        assert_eq!(h.spec, spec);
        assert_eq!(back.len(), recs.len());
    }

    #[test]
    fn resume_completes_truncated_file() {
        let spec = small_spec();
        let mut full = Vec::new();
        sweep(&spec, &mut full).unwrap();
        let text = String::from_utf8(full.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.jsonl");
        let cut: usize = text.match_indices('\n').nth(8).unwrap().0 + 20;
        std::fs::write(&path, &text[..cut]).unwrap();
        resume(&spec, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), full);
        resume(&spec, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), full);
        let mut other = spec.clone();
        other.lambda.hi = 61.0;
        assert!(matches!(resume(&other, &path), Err(Error::SpecMismatch { .. })));
        let empty = dir.path().join("empty.jsonl");
        std::fs::write(&empty, "").unwrap();
        resume(&spec, &empty).unwrap();
        assert_eq!(std::fs::read(&empty).unwrap(), full);
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let spec = small_spec();
        let recs = sweep(&spec, std::io::sink()).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), spec.len() + 1);
        assert!(text.starts_with(CSV_HEADER));
    }
}
