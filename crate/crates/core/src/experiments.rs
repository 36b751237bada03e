//! Scripted scenarios pitting the simulator and the ascent against the
//! stability statements for `J0(j01 r)`, `J1(j11 r) cos(theta)` and the
//! rotating wave, with CSV evidence and per-criterion verdicts.
//!
//! Every distance verdict is computed from the CSV text of its run, so
//! re-reading the CSVs reproduces it. Runs whose energy, inertia or mean
//! drift exceeds the gates turn every verdict citing them INVALID.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bessel::{e1_basis, j0, j1, radial_moment_integral, radial_moment_transformed, table};
use crate::elliptic::{CirculationVector, EllipticContext};
use crate::error::{Error, Result};
use crate::euler::{orbit_distance, plan_steps, rotating_wave, run_with, DtPolicy, Drifts, Probes, RunOutput, SimConfig, TimeSeries};
use crate::fourier::rotate;
use crate::grid::{make_grid, GridRef, ScalarField};
use crate::perturb::fourier_bessel;
use crate::rearrangement::{burton_ascent_from, follower, rearrange_class, CellList, Termination};
use crate::spectra::constrained_spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Stability,
    RotatingWave,
    Structural,
    Rigidity,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stability => "stability",
            Self::RotatingWave => "rotating-wave",
            Self::Structural => "structural",
            Self::Rigidity => "rigidity",
        }
    }
}

/// Annulus companion of the stability run: uniform vorticity with unit
/// circulation, `gamma` perturbed by the same relative amount as `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusVariant {
    pub a: f64,
    pub nr: usize,
    pub ntheta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: ExperimentKind,
    pub nr: usize,
    pub ntheta: usize,
    /// Perturbation sizes as fractions of the steady state's `L^p` norm.
    pub amplitudes: Vec<f64>,
    pub p: f64,
    pub t_end: f64,
    pub cfl: f64,
    pub seed: u64,
    /// Allowed ratio of the sup-in-time distance to the initial one.
    pub response_factor: f64,
    pub drift_gate: f64,
    pub mean_drift_gate: f64,
    /// Time between recorded diagnostics.
    pub record_interval: f64,
    pub hyperdiffusion: f64,
    pub waves: Vec<u32>,
    /// Horizon of wave `n` in units of its period `2 pi n`.
    pub wave_periods: f64,
    pub propagation_tol: f64,
    pub annulus: Option<AnnulusVariant>,
    pub ascent_runs: usize,
    pub ascent_tol: f64,
    pub class_tol: f64,
    pub max_iters: usize,
}

impl ExperimentSpec {
    pub fn preset(name: ExperimentKind) -> Self {
        let mut s = Self {
            name,
            nr: 48,
            ntheta: 96,
            amplitudes: vec![1e-1, 1e-2, 1e-3],
            p: 2.0,
            t_end: 10.0,
            cfl: 0.8,
            seed: 1,
            response_factor: 5.0,
            drift_gate: 1e-3,
            mean_drift_gate: 1e-8,
            record_interval: 0.25,
            hyperdiffusion: 0.0,
            waves: Vec::new(),
            wave_periods: 1.0,
            propagation_tol: 1e-2,
            annulus: None,
            ascent_runs: 0,
            ascent_tol: 1e-2,
            class_tol: 1e-10,
            max_iters: 500,
        };
        match name {
            ExperimentKind::Stability => {
                s.annulus = Some(AnnulusVariant {
                    a: 0.5,
                    nr: 24,
                    ntheta: 96,
                })
            }
            ExperimentKind::RotatingWave => {
                s.nr = 64;
                s.ntheta = 128;
                s.amplitudes.clear();
                s.waves = vec![4, 8, 16];
                s.record_interval = 0.5;
            }
            ExperimentKind::Structural => {}
            ExperimentKind::Rigidity => {
                s.amplitudes.clear();
                s.ascent_runs = 20;
            }
        }
        s
    }

    /// Preset of the named experiment overlaid with the fields present in
    /// `text`, which must be a JSON object with a `name` entry.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        let Value::Object(fields) = user else {
            return Err(Error::Format("experiment config must be a JSON object".into()));
        };
        let name: ExperimentKind = serde_json::from_value(
            fields
                .get("name")
                .cloned()
                .ok_or_else(|| Error::Format("experiment config lacks `name`".into()))?,
        )?;
        let Value::Object(mut base) = serde_json::to_value(Self::preset(name))? else {
            unreachable!("spec serializes to an object")
        };
        base.extend(fields);
        let spec: Self = serde_json::from_value(Value::Object(base))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("horizon must be > 0, got {}", self.t_end));
        }
        if self.amplitudes.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad("amplitudes must be positive".into());
        }
        if self.amplitudes.windows(2).any(|w| w[1] >= w[0]) {
            return bad("amplitudes must be strictly decreasing".into());
        }
        if matches!(self.name, ExperimentKind::Stability | ExperimentKind::Structural) && self.amplitudes.is_empty() {
            return bad("at least one amplitude is required".into());
        }
        if self.name == ExperimentKind::RotatingWave && (self.waves.is_empty() || self.waves.contains(&0)) {
            return bad("waves must be a non-empty list of positive integers".into());
        }
        if !(self.p >= 1.0) {
            return bad(format!("p must be >= 1, got {}", self.p));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.record_interval > 0.0) || !(self.wave_periods > 0.0) || !(self.response_factor > 0.0) {
            return bad("record interval, wave periods and response factor must be positive".into());
        }
        if self.hyperdiffusion < 0.0 {
            return bad("hyperdiffusion must be >= 0".into());
        }
        make_grid(0.0, self.nr, self.ntheta)?;
        if let Some(an) = &self.annulus {
            if !(an.a > 0.0) {
                return bad("annulus variant needs a > 0".into());
            }
            make_grid(an.a, an.nr, an.ntheta)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Invalid,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 2,
            Status::Invalid => 3,
        }
    }

    /// INVALID dominates FAIL, which dominates PASS.
    pub fn combine(self, other: Status) -> Status {
        use Status::*;
        match (self, other) {
            (Invalid, _) | (_, Invalid) => Invalid,
            (Fail, _) | (_, Fail) => Fail,
            _ => Pass,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub criterion: String,
    pub status: Status,
    pub value: f64,
    /// `<=`, `<` or `>` between value and threshold.
    pub comparison: &'static str,
    pub threshold: f64,
    /// Where the threshold comes from.
    pub provenance: String,
    pub evidence: Vec<String>,
}

impl Verdict {
    fn new(criterion: impl Into<String>, value: f64, comparison: &'static str, threshold: f64, provenance: &str, evidence: Vec<String>) -> Self {
        let ok = match comparison {
            "<=" => value <= threshold,
            "<" => value < threshold,
            ">" => value > threshold,
            _ => false,
        };
        Self {
            criterion: criterion.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            value,
            comparison,
            threshold,
            provenance: provenance.into(),
            evidence,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub label: String,
    /// Initial `L^p` distance from the steady state.
    pub delta: f64,
    pub sup_distance: f64,
    pub sup_orbit_distance: Option<f64>,
    pub max_proxy_defect: Option<f64>,
    pub final_error: Option<f64>,
    pub drifts: Drifts,
    pub valid: bool,
    pub dt: f64,
    pub steps: usize,
    pub series_file: String,
}

/// A named output file produced by an experiment.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: ExperimentKind,
    pub status: Status,
    pub spec: ExperimentSpec,
    pub reference_norm: f64,
    pub runs: Vec<RunRecord>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
}

impl ExperimentReport {
    fn finish(mut self) -> Self {
        let invalid: Vec<&str> = self.runs.iter().filter(|r| !r.valid).map(|r| r.series_file.as_str()).collect();
        for v in &mut self.verdicts {
            if v.evidence.iter().any(|e| invalid.contains(&e.as_str())) {
                v.status = Status::Invalid;
            }
        }
        self.status = self.verdicts.iter().fold(Status::Pass, |s, v| s.combine(v.status));
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }
}

/// Largest entry of a named column of a CSV table (NaN if any entry is NaN).
pub fn column_max(csv: &str, column: &str) -> Result<f64> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
    let col = header
        .split(',')
        .position(|h| h == column)
        .ok_or_else(|| Error::Format(format!("no column `{column}`")))?;
    let mut best = f64::NEG_INFINITY;
    for line in lines.filter(|l| !l.is_empty()) {
        let cell = line.split(',').nth(col).ok_or_else(|| Error::Format("short CSV row".into()))?;
        let v: f64 = cell.parse().map_err(|_| Error::Format(format!("bad number `{cell}`")))?;
        if v.is_nan() {
            return Ok(f64::NAN);
        }
        best = best.max(v);
    }
    Ok(best)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    match spec.name {
        ExperimentKind::Stability => exp_stability(spec),
        ExperimentKind::RotatingWave => exp_rotating_wave(spec),
        ExperimentKind::Structural => exp_structural(spec),
        ExperimentKind::Rigidity => exp_rigidity(spec),
    }
}

struct Job {
    label: String,
    omega0: ScalarField,
    gamma: Vec<f64>,
    t_end: f64,
    delta: f64,
    probes: Probes,
}

struct Finished {
    record: RunRecord,
    output: RunOutput,
    csv: String,
}

fn drift_scales(w0: &ScalarField) -> (f64, f64) {
    let rms = w0.l2_norm() / w0.grid().total_measure().sqrt();
    (rms, w0.map(f64::abs).moment_of_inertia())
}

fn simulate(ctx: &EllipticContext, spec: &ExperimentSpec, job: Job) -> Result<Finished> {
    let g = ctx.grid();
    let mut cfg = SimConfig {
        a: g.a(),
        nr: g.nr(),
        ntheta: g.ntheta(),
        gamma: job.gamma,
        dt: DtPolicy::Cfl { cfl: spec.cfl },
        t_end: job.t_end,
        snapshot_stride: 1,
        hyperdiffusion: spec.hyperdiffusion,
        p: spec.p,
    };
    let (dt, _) = plan_steps(ctx, &cfg, &job.omega0)?;
    cfg.snapshot_stride = ((spec.record_interval / dt).round() as usize).max(1);
    let output = run_with(ctx, &cfg, &job.omega0, &job.probes)?;
    let csv = output.series.to_csv();
    let (ms, is) = drift_scales(&job.omega0);
    let drifts = output.series.drifts(ms, is);
    let series_file = format!("series_{}.csv", job.label);
    let sup_distance = if job.probes.reference.is_some() {
        column_max(&csv, "dist_ref_p")?
    } else {
        f64::NAN
    };
    let sup_orbit_distance = match job.probes.orbit {
        Some(_) => Some(column_max(&csv, "orbit_dist")?),
        None => None,
    };
    let record = RunRecord {
        label: job.label,
        delta: job.delta,
        sup_distance,
        sup_orbit_distance,
        max_proxy_defect: None,
        final_error: None,
        valid: drifts.within_gate(spec.drift_gate, spec.mean_drift_gate),
        drifts,
        dt: output.dt,
        steps: output.steps,
        series_file,
    };
    Ok(Finished { record, output, csv })
}

fn run_jobs(ctx: &EllipticContext, spec: &ExperimentSpec, jobs: Vec<Job>) -> Result<Vec<Finished>> {
    jobs.into_par_iter().map(|j| simulate(ctx, spec, j)).collect()
}

fn disk(spec: &ExperimentSpec) -> Result<(GridRef, EllipticContext)> {
    let g = make_grid(0.0, spec.nr, spec.ntheta)?;
    let ctx = EllipticContext::new(&g)?;
    Ok((g, ctx))
}

/// `w + delta * shape / |shape|_p`.
fn perturbed(w: &ScalarField, shape: &ScalarField, delta: f64, p: f64) -> Result<ScalarField> {
    if delta == 0.0 {
        return Ok(w.clone());
    }
    Ok(w.axpy(delta / shape.lp_norm(p)?, shape))
}

fn label(prefix: &str, rel: f64) -> String {
    format!("{prefix}{rel:e}").replace('-', "m")
}

fn gate_verdict(criterion: &str, done: &[&RunRecord], spec: &ExperimentSpec) -> Verdict {
    let worst = done.iter().map(|r| r.drifts.energy.max(r.drifts.inertia)).fold(0.0, f64::max);
    let mean = done.iter().map(|r| r.drifts.mean).fold(0.0, f64::max);
    let mut v = Verdict::new(
        criterion,
        worst,
        "<=",
        spec.drift_gate,
        "harness gate on relative E and I drift",
        done.iter().map(|r| r.series_file.clone()).collect(),
    );
    if mean > spec.mean_drift_gate || v.status != Status::Pass {
        v.status = Status::Invalid;
    }
    v
}

/// Bounded and halving response over an amplitude ladder.
fn ladder_verdicts(tag: &str, ladder: &[&RunRecord], spec: &ExperimentSpec, out: &mut Vec<Verdict>) {
    let files = |rs: &[&RunRecord]| rs.iter().map(|r| r.series_file.clone()).collect::<Vec<_>>();
    let worst = ladder.iter().map(|r| r.sup_distance / r.delta).fold(f64::NEG_INFINITY, nan_max);
    out.push(Verdict::new(
        format!("{tag}: sup distance <= {} x initial distance", spec.response_factor),
        worst,
        "<=",
        spec.response_factor,
        "harness response factor",
        files(ladder),
    ));
    if ladder.len() > 1 {
        let ratio = ladder
            .windows(2)
            .map(|w| w[1].sup_distance / w[0].sup_distance)
            .fold(f64::NEG_INFINITY, nan_max);
        out.push(Verdict::new(
            format!("{tag}: sup distance at least halves down the ladder"),
            ratio,
            "<=",
            0.5,
            "harness monotonicity rule",
            files(ladder),
        ));
    }
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn series_artifacts(done: &[Finished]) -> Vec<Artifact> {
    done.iter()
        .map(|f| Artifact {
            name: f.record.series_file.clone(),
            contents: f.csv.clone(),
        })
        .collect()
}

pub fn exp_stability(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let (g, ctx) = disk(spec)?;
    let t = table();
    let ws = ScalarField::radial(&g, |r| j0(t.j01 * r));
    let norm = ws.lp_norm(spec.p)?;
    let shape = fourier_bessel(&g, spec.seed, 1.0)?;
    let mut jobs = vec![Job {
        label: "control".into(),
        omega0: ws.clone(),
        gamma: Vec::new(),
        t_end: spec.t_end,
        delta: 0.0,
        probes: Probes {
            reference: Some(ws.clone()),
            ..Probes::default()
        },
    }];
    for &rel in &spec.amplitudes {
        jobs.push(Job {
            label: label("delta", rel),
            omega0: perturbed(&ws, &shape, rel * norm, spec.p)?,
            gamma: Vec::new(),
            t_end: spec.t_end,
            delta: rel * norm,
            probes: Probes {
                reference: Some(ws.clone()),
                ..Probes::default()
            },
        });
    }
    let done = run_jobs(&ctx, spec, jobs)?;
    let mut verdicts = Vec::new();
    let big = constrained_spectrum(&ctx, 1)?.eigenvalues[0];
    verdicts.push(Verdict::new(
        "g' = j01^2 lies below the first constrained eigenvalue",
        t.j01 * t.j01 / big,
        "<",
        1.0,
        "Bessel zero and computed spectrum",
        Vec::new(),
    ));
    let control = &done[0].record;
    verdicts.push(Verdict::new(
        "unperturbed steady state: sup distance / |w_s|",
        control.sup_distance / norm,
        "<=",
        1e-10,
        "round-off",
        vec![control.series_file.clone()],
    ));
    let ladder: Vec<&RunRecord> = done[1..].iter().map(|f| &f.record).collect();
    ladder_verdicts("disk", &ladder, spec, &mut verdicts);
    let mut runs: Vec<RunRecord> = done.iter().map(|f| f.record.clone()).collect();
    let mut artifacts = series_artifacts(&done);
    let mut notes = vec![format!("discrete first constrained eigenvalue {big:.8}")];

    if let Some(an) = &spec.annulus {
        let ga = make_grid(an.a, an.nr, an.ntheta)?;
        let actx = EllipticContext::new(&ga)?;
        let wa = ScalarField::constant(&ga, 1.0);
        let anorm = wa.lp_norm(spec.p)?;
        let ashape = fourier_bessel(&ga, spec.seed, 1.0)?;
        let jobs = spec
            .amplitudes
            .iter()
            .map(|&rel| {
                Ok(Job {
                    label: label("annulus_delta", rel),
                    omega0: perturbed(&wa, &ashape, rel * anorm, spec.p)?,
                    gamma: vec![1.0 + rel],
                    t_end: spec.t_end,
                    delta: rel * anorm,
                    probes: Probes {
                        reference: Some(wa.clone()),
                        ..Probes::default()
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let adone = run_jobs(&actx, spec, jobs)?;
        let aladder: Vec<&RunRecord> = adone.iter().map(|f| &f.record).collect();
        ladder_verdicts("annulus", &aladder, spec, &mut verdicts);
        notes.push(format!(
            "annulus a={}: uniform vorticity with circulation 1 + delta/|w_s|",
            an.a
        ));
        runs.extend(adone.iter().map(|f| f.record.clone()));
        artifacts.extend(series_artifacts(&adone));
    }
    let all: Vec<&RunRecord> = runs.iter().collect();
    verdicts.push(gate_verdict("conservation gate", &all, spec));
    Ok(ExperimentReport {
        name: spec.name,
        status: Status::Pass,
        spec: spec.clone(),
        reference_norm: norm,
        runs,
        verdicts,
        notes,
        artifacts,
    }
    .finish())
}

/// `J1(j11 r) cos(theta)`.
fn dipole(g: &GridRef) -> ScalarField {
    let k = table().j11;
    ScalarField::from_fn(g, |r, th| j1(k * r) * th.cos())
}

pub fn exp_rotating_wave(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let (g, ctx) = disk(spec)?;
    let ws = dipole(&g);
    let norm = ws.lp_norm(spec.p)?;
    let jobs = spec
        .waves
        .iter()
        .map(|&n| {
            let w0 = rotating_wave(&g, n, 0.0)?;
            Ok(Job {
                label: format!("n{n}"),
                delta: w0.lp_distance(&ws, spec.p)?,
                omega0: w0,
                gamma: Vec::new(),
                t_end: spec.wave_periods * 2.0 * PI * n as f64,
                probes: Probes {
                    reference: Some(ws.clone()),
                    orbit: Some(ws.clone()),
                    keep_snapshots: false,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut done = run_jobs(&ctx, spec, jobs)?;
    let mut verdicts = Vec::new();
    for (f, &n) in done.iter_mut().zip(&spec.waves) {
        let t_end = spec.wave_periods * 2.0 * PI * n as f64;
        let exact = rotating_wave(&g, n, t_end)?;
        let err = f.output.final_state.omega.lp_distance(&exact, spec.p)? / exact.lp_norm(spec.p)?;
        let r = &mut f.record;
        r.final_error = Some(err);
        let ev = vec![r.series_file.clone()];
        verdicts.push(Verdict::new(
            format!("n={n}: max distance to w_s / |w_s| within the horizon"),
            r.sup_distance / norm,
            ">",
            0.5,
            "harness instability threshold",
            ev.clone(),
        ));
        verdicts.push(Verdict::new(
            format!("n={n}: max orbit distance / initial distance"),
            r.sup_orbit_distance.unwrap_or(f64::NAN) / r.delta,
            "<=",
            spec.response_factor,
            "harness response factor",
            ev.clone(),
        ));
        verdicts.push(Verdict::new(
            format!("n={n}: relative error against the exact travelling wave"),
            err,
            "<=",
            spec.propagation_tol,
            "exact solution",
            ev,
        ));
    }
    let mut notes = Vec::new();
    if spec.p == 2.0 {
        // |J1(j11 r) cos|_2^2 = pi J0(j11)^2 / 2 since J1(j11) = 0
        let t = table();
        let dip2 = PI * j0(t.j11).powi(2) / 2.0;
        let mut worst: f64 = 0.0;
        for &n in &spec.waves {
            let nf = n as f64;
            let half = rotating_wave(&g, n, PI * nf)?.lp_distance(&ws, 2.0)?;
            let half_exact = (4.0 * dip2 + PI * (2.0 / nf).powi(2)).sqrt();
            let (orb, _) = orbit_distance(&rotating_wave(&g, n, 1.234)?, &ws, 2.0)?;
            let orb_exact = 2.0 / nf * PI.sqrt();
            worst = worst.max((half / half_exact - 1.0).abs()).max((orb / orb_exact - 1.0).abs());
            notes.push(format!(
                "n={n}: half-period distance {half:.6} (closed form {half_exact:.6}), orbit distance {orb:.6} (closed form {orb_exact:.6})"
            ));
        }
        verdicts.push(Verdict::new(
            "closed-form distances of the analytic wave (relative error)",
            worst,
            "<=",
            1e-3,
            "angular Parseval identities",
            Vec::new(),
        ));
    }
    let runs: Vec<RunRecord> = done.iter().map(|f| f.record.clone()).collect();
    let all: Vec<&RunRecord> = runs.iter().collect();
    verdicts.push(gate_verdict("conservation gate", &all, spec));
    Ok(ExperimentReport {
        name: spec.name,
        status: Status::Pass,
        spec: spec.clone(),
        reference_norm: norm,
        artifacts: series_artifacts(&done),
        runs,
        verdicts,
        notes,
    }
    .finish())
}

/// Proxy for the distance from `w` to `(w_s + E1)` intersected with the
/// class of `w_s`: the class member ordered like the least-squares fit of
/// `w` in `w_s + E1`. Returns the distance and how far that member is from
/// `w_s + E1`.
pub fn structural_proxy(w: &ScalarField, ws: &ScalarField, basis: &[ScalarField; 3], p: f64) -> Result<(f64, f64)> {
    let project = |f: &ScalarField| {
        let mut out = ScalarField::zeros(f.grid());
        for e in basis {
            out = out.axpy(f.inner(e), e);
        }
        out
    };
    let target = ws + &project(&(w - ws));
    let member = follower(&target, ws, p)?;
    let d = member.lp_distance(w, p)?;
    let dev = &member.to_field() - ws;
    let defect = (&dev - &project(&dev)).lp_norm(p)?;
    Ok((d, defect))
}

pub fn exp_structural(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let (g, ctx) = disk(spec)?;
    let ws = dipole(&g);
    let norm = ws.lp_norm(spec.p)?;
    let basis = e1_basis(&g)?;
    let shape = fourier_bessel(&g, spec.seed, 1.0)?;
    let probes = Probes {
        reference: Some(ws.clone()),
        orbit: None,
        keep_snapshots: true,
    };
    let mid = spec.amplitudes[spec.amplitudes.len() / 2];
    let angle = 2.0 * (mid / 2.0).asin();
    let rotated = rotate(&ws, angle);
    let mut jobs = vec![
        Job {
            label: "control".into(),
            omega0: ws.clone(),
            gamma: Vec::new(),
            t_end: spec.t_end,
            delta: 0.0,
            probes: probes.clone(),
        },
        Job {
            label: "rotation".into(),
            delta: rotated.lp_distance(&ws, spec.p)?,
            omega0: rotated,
            gamma: Vec::new(),
            t_end: spec.t_end,
            probes: probes.clone(),
        },
    ];
    for &rel in &spec.amplitudes {
        jobs.push(Job {
            label: label("delta", rel),
            omega0: perturbed(&ws, &shape, rel * norm, spec.p)?,
            gamma: Vec::new(),
            t_end: spec.t_end,
            delta: rel * norm,
            probes: probes.clone(),
        });
    }
    let mut done = run_jobs(&ctx, spec, jobs)?;
    let proxies: Vec<(String, String)> = done
        .par_iter()
        .map(|f| {
            let mut csv = String::from("t,d,proxy_defect,dist_ref_p\n");
            for (t, w) in &f.output.snapshots {
                let (d, defect) = structural_proxy(w, &ws, &basis, spec.p)?;
                let dr = w.lp_distance(&ws, spec.p)?;
                csv.push_str(&format!("{t:.15e},{d:.15e},{defect:.15e},{dr:.15e}\n"));
            }
            Ok((format!("structural_{}.csv", f.record.label), csv))
        })
        .collect::<Result<_>>()?;
    let mut artifacts = series_artifacts(&done);
    let mut verdicts = Vec::new();
    for (f, (name, csv)) in done.iter_mut().zip(&proxies) {
        let sup_d = column_max(csv, "d")?;
        f.record.max_proxy_defect = Some(column_max(csv, "proxy_defect")?);
        let ev = vec![name.clone(), f.record.series_file.clone()];
        let r = &f.record;
        if r.label == "control" {
            verdicts.push(Verdict::new(
                "unperturbed: sup proxy distance / |w_s|",
                sup_d / norm,
                "<=",
                spec.response_factor * spec.amplitudes[spec.amplitudes.len() - 1],
                "harness: below the smallest tested response",
                ev,
            ));
        } else {
            verdicts.push(Verdict::new(
                format!("{}: sup proxy distance / initial distance", r.label),
                sup_d / r.delta,
                "<=",
                spec.response_factor,
                "harness response factor",
                ev,
            ));
        }
        artifacts.push(Artifact {
            name: name.clone(),
            contents: csv.clone(),
        });
    }
    let runs: Vec<RunRecord> = done.iter().map(|f| f.record.clone()).collect();
    let all: Vec<&RunRecord> = runs.iter().collect();
    verdicts.push(gate_verdict("conservation gate", &all, spec));
    Ok(ExperimentReport {
        name: spec.name,
        status: Status::Pass,
        spec: spec.clone(),
        reference_norm: norm,
        runs,
        verdicts,
        notes: vec![format!("rotation control angle {angle:.6e}")],
        artifacts,
    }
    .finish())
}

/// Outcome of one candidate in the orbit-identification check.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub label: String,
    pub inertia: f64,
    pub norm: f64,
    pub orbit_distance: f64,
    pub classified_member: bool,
    pub orbit_member: bool,
}

/// Members of the rotation orbit of `alpha J0(j11 r) + beta J1(j11 r) cos`
/// and coefficient-perturbed look-alikes, classified by `(I, |.|_2)`.
pub fn classify_candidates(g: &GridRef, alpha: f64, beta: f64) -> Result<Vec<Candidate>> {
    let k = table().j11;
    let field = |a: f64, b: f64| ScalarField::from_fn(g, |r, th| a * j0(k * r) + b * j1(k * r) * th.cos());
    let ws = field(alpha, beta);
    let (i0, n0) = (ws.moment_of_inertia(), ws.l2_norm());
    let radial = ScalarField::radial(g, |r| j0(k * r));
    let dip = dipole(g);
    let (ra, db) = (radial.l2_norm().powi(2), dip.l2_norm().powi(2));
    // same L2 norm with a smaller radial part
    let alpha_s = 0.9 * alpha;
    let beta_s = ((alpha * alpha - alpha_s * alpha_s) * ra / db + beta * beta).sqrt();
    let mut cands: Vec<(String, ScalarField)> = [0.3, 1.0, PI / 2.0, 2.5, PI]
        .iter()
        .map(|&t| (format!("rotation {t:.4}"), rotate(&ws, t)))
        .collect();
    cands.push(("beta -> -beta".into(), field(alpha, -beta)));
    cands.push(("alpha + 5%".into(), field(1.05 * alpha, beta)));
    cands.push(("alpha - 5%".into(), field(0.95 * alpha, beta)));
    cands.push(("beta + 5%".into(), field(alpha, 1.05 * beta)));
    cands.push(("alpha -> -alpha".into(), field(-alpha, beta)));
    cands.push(("alpha - 10%, norm kept".into(), field(alpha_s, beta_s)));
    let iscale = ws.map(f64::abs).moment_of_inertia();
    cands
        .into_par_iter()
        .map(|(label, c)| {
            let (od, _) = orbit_distance(&c, &ws, 2.0)?;
            let (ic, nc) = (c.moment_of_inertia(), c.l2_norm());
            Ok(Candidate {
                label,
                inertia: ic,
                norm: nc,
                orbit_distance: od,
                classified_member: (ic - i0).abs() <= 1e-9 * iscale && (nc - n0).abs() <= 1e-9 * n0,
                orbit_member: od <= 1e-6 * n0,
            })
        })
        .collect()
}

pub fn exp_rigidity(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let (g, ctx) = disk(spec)?;
    let t = table();
    let ws = ScalarField::radial(&g, |r| j0(t.j01 * r));
    let norm = ws.l2_norm();
    let class = CellList::from_field(&ws);
    let none = CirculationVector::none();
    let reports = (0..spec.ascent_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(i as u64));
            let order = ScalarField::from_values(&g, (0..g.len()).map(|_| rng.random::<f64>()).collect())?;
            let start = rearrange_class(&class, &order)?;
            let d0 = start.lp_distance(&ws, 2.0)? / norm;
            let rep = burton_ascent_from(&ctx, &class, start, &none, spec.max_iters, 1e-8 * norm)?;
            let d1 = rep.final_arrangement.lp_distance(&ws, 2.0)? / norm;
            Ok((d0, d1, rep))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = String::from("run,iterations,termination,initial_distance,final_distance,energy_first,energy_last,max_class_defect\n");
    let mut trace = String::from("run,iteration,energy,class_defect\n");
    let mut worst_dist: f64 = 0.0;
    let mut worst_drop: f64 = 0.0;
    let mut worst_defect: f64 = 0.0;
    for (i, (d0, d1, rep)) in reports.iter().enumerate() {
        let e = &rep.energies;
        let term = match rep.termination {
            Termination::FixedPoint => "fixed_point",
            Termination::MaxIters => "max_iters",
        };
        summary.push_str(&format!(
            "{i},{},{term},{d0:.15e},{d1:.15e},{:.15e},{:.15e},{:.15e}\n",
            rep.iterations,
            e[0],
            e[e.len() - 1],
            rep.max_class_defect()
        ));
        for (k, (en, cd)) in e.iter().zip(&rep.class_defects).enumerate() {
            trace.push_str(&format!("{i},{k},{en:.15e},{cd:.15e}\n"));
        }
        worst_dist = worst_dist.max(*d1);
        let scale = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for w in e.windows(2) {
            worst_drop = worst_drop.max((w[0] - w[1]) / scale);
        }
        worst_defect = worst_defect.max(rep.max_class_defect());
    }
    let ev = vec!["ascent.csv".to_string(), "ascent_energies.csv".to_string()];
    let mut verdicts = vec![
        Verdict::new(
            format!("{} random in-class seeds: max final relative distance", spec.ascent_runs),
            worst_dist,
            "<=",
            spec.ascent_tol,
            "harness convergence tolerance",
            ev.clone(),
        ),
        Verdict::new(
            "ascent energies non-decreasing (max relative drop)",
            worst_drop,
            "<=",
            1e-12,
            "round-off",
            ev.clone(),
        ),
        Verdict::new(
            "every iterate equimeasurable with w_s (max quantile L1 defect)",
            worst_defect,
            "<=",
            spec.class_tol,
            "harness equimeasurability gate",
            ev,
        ),
    ];

    let integral = radial_moment_integral();
    let transformed = radial_moment_transformed();
    verdicts.push(Verdict::new(
        "int_0^1 J0(j11 r) r^3 dr",
        integral,
        "<",
        0.0,
        "sign needed by the rigidity argument",
        Vec::new(),
    ));
    verdicts.push(Verdict::new(
        "moment integral against its integrated-by-parts form",
        (integral - transformed).abs(),
        "<=",
        1e-10,
        "closed-form transformation",
        Vec::new(),
    ));
    let cands = classify_candidates(&g, 1.0, 1.0)?;
    let mut table_csv = String::from("label,I,norm,orbit_distance,classified_member,orbit_member\n");
    for c in &cands {
        table_csv.push_str(&format!(
            "{},{:.15e},{:.15e},{:.15e},{},{}\n",
            c.label, c.inertia, c.norm, c.orbit_distance, c.classified_member, c.orbit_member
        ));
    }
    let mismatches = cands.iter().filter(|c| c.classified_member != c.orbit_member).count();
    verdicts.push(Verdict::new(
        "(I, L2) classifier disagreements with orbit membership",
        mismatches as f64,
        "<=",
        0.0,
        "exact classification required",
        vec!["classifier.csv".into()],
    ));
    Ok(ExperimentReport {
        name: spec.name,
        status: Status::Pass,
        spec: spec.clone(),
        reference_norm: norm,
        runs: Vec::new(),
        verdicts,
        notes: vec![format!("moment integral {integral:.15e}, transformed {transformed:.15e}")],
        artifacts: vec![
            Artifact {
                name: "ascent.csv".into(),
                contents: summary,
            },
            Artifact {
                name: "ascent_energies.csv".into(),
                contents: trace,
            },
            Artifact {
                name: "classifier.csv".into(),
                contents: table_csv,
            },
        ],
    }
    .finish())
}

/// Conservation diagnostics of a finished series, scaled as in the gates.
pub fn series_drifts(series: &TimeSeries, omega0: &ScalarField) -> Drifts {
    let (ms, is) = drift_scales(omega0);
    series.drifts(ms, is)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_overlay() {
        for k in [
            ExperimentKind::Stability,
            ExperimentKind::RotatingWave,
            ExperimentKind::Structural,
            ExperimentKind::Rigidity,
        ] {
            ExperimentSpec::preset(k).validate().unwrap();
        }
        let s = ExperimentSpec::from_json(r#"{"name": "rotating-wave", "waves": [2]}"#).unwrap();
        assert_eq!(s.waves, vec![2]);
        assert_eq!(s.nr, 64);
        assert!(ExperimentSpec::from_json(r#"{"waves": [2]}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"name": "stability", "bogus": 1}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"name": "stability", "amplitudes": [0.01, 0.1]}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"name": "stability", "t_end": 0}"#).is_err());
    }

    #[test]
    fn status_ordering() {
        assert_eq!(Status::Pass.combine(Status::Fail), Status::Fail);
        assert_eq!(Status::Fail.combine(Status::Invalid), Status::Invalid);
        assert_eq!(Status::Invalid.exit_code(), 3);
    }

    #[test]
    fn column_max_reads_csv() {
        let csv = "t,x\n0,1.5\n1,2.5\n2,-1\n";
        assert_eq!(column_max(csv, "x").unwrap(), 2.5);
        assert!(column_max("t,x\n0,nan\n", "x").unwrap().is_nan());
        assert!(column_max(csv, "y").is_err());
    }

    #[test]
    fn classifier_on_a_coarse_grid() {
        let g = make_grid(0.0, 24, 48).unwrap();
        let c = classify_candidates(&g, 1.0, 1.0).unwrap();
        assert!(c.iter().all(|c| c.classified_member == c.orbit_member));
        assert_eq!(c.iter().filter(|c| c.orbit_member).count(), 6);
    }

    #[test]
    fn proxy_vanishes_on_the_steady_state() {
        let g = make_grid(0.0, 24, 48).unwrap();
        let ws = dipole(&g);
        let basis = e1_basis(&g).unwrap();
        let (d, defect) = structural_proxy(&ws, &ws, &basis, 2.0).unwrap();
        assert!(d < 1e-12 && defect < 1e-12, "{d} {defect}");
    }
}
