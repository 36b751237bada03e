//! The `vorstab` command line: eigenvalues, simulations, ascents and the
//! experiment suite. Outputs go to `--out`; `manifest.json` is written last.
//!
//! Exit codes: 0 success, 1 bad flags or input, 2 an experiment verdict
//! failed, 3 an experiment run was invalid, 4 solver failure, 5 non-finite
//! vorticity.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bessel::{j0, j1, table};
use crate::elliptic::{CirculationVector, EllipticContext};
use crate::error::{Error, Result};
use crate::euler::{rotating_wave, run_with, Probes, SimConfig};
use crate::experiments::{run_experiment, series_drifts, ExperimentKind, ExperimentSpec};
use crate::grid::{make_grid, GridRef, ScalarField};
use crate::io::{read_field, write_atomic, write_field, write_json};
use crate::perturb::fourier_bessel;
use crate::rearrangement::{burton_ascent, AscentOptions};
use crate::spectra::{constrained_spectrum, dirichlet_spectrum, lambda_cap1_pair};

#[derive(Parser, Debug)]
#[command(name = "vorstab", version, about = "Stability laboratory for steady 2D ideal flows on the disk and annulus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues of the Dirichlet, constrained or free-constant problems.
    Eig(EigArgs),
    /// Integrate the Euler equations from a JSON configuration.
    Simulate(SimulateArgs),
    /// Energy ascent over the rearrangement class of a field.
    Ascend(AscendArgs),
    /// Run one of the scripted experiments.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Domain {
    Disk,
    Annulus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Which {
    Dirichlet,
    Cap,
    Constrained,
}

#[derive(Args, Debug, Serialize)]
struct EigArgs {
    #[arg(long, value_enum)]
    domain: Domain,
    /// Inner radius (annulus only).
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    nr: usize,
    #[arg(long)]
    ntheta: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, value_enum, default_value_t = Which::Dirichlet)]
    which: Which,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AscendArgs {
    /// Field CSV whose rearrangement class is searched.
    #[arg(long)]
    seed: PathBuf,
    /// Circulations around the inner boundaries (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long)]
    fp_tol: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentKind,
    /// JSON overrides of the experiment's preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Initial vorticity of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    File { path: PathBuf },
    Uniform { value: f64 },
    /// `J0(j01 r)`.
    BesselRadial,
    /// `J1(j11 r) cos(theta)`.
    Dipole,
    RotatingWave { n: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub seed: u64,
    /// `L^2` size relative to the initial field's norm.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    pub initial: InitialCondition,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    /// Record distances to the unperturbed initial field.
    #[serde(default)]
    pub track_reference: bool,
    /// Also record the distance to its rotation orbit (disk only).
    #[serde(default)]
    pub track_orbit: bool,
    #[serde(default)]
    pub snapshots: bool,
}

#[derive(Debug, Serialize)]
struct ConfigDigest {
    source: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct GridInfo {
    a: f64,
    nr: usize,
    ntheta: usize,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command_line: Vec<String>,
    version: &'static str,
    configs: Vec<ConfigDigest>,
    grid: Option<GridInfo>,
    tolerances: serde_json::Value,
    outputs: Vec<String>,
    wall_time_s: f64,
    exit_code: i32,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }
    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.files.push(name.to_string());
        Ok(())
    }
    fn json<T: Serialize + ?Sized>(&mut self, name: &str, v: &T) -> Result<()> {
        write_json(&self.dir.join(name), v)?;
        self.files.push(name.to_string());
        Ok(())
    }
    fn field(&mut self, name: &str, f: &ScalarField) -> Result<()> {
        write_field(&self.dir.join(name), f)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

struct Done {
    code: i32,
    grid: Option<GridInfo>,
    tolerances: serde_json::Value,
    configs: Vec<ConfigDigest>,
    outputs: Option<Outputs>,
}

fn grid_info(g: &GridRef) -> Option<GridInfo> {
    Some(GridInfo {
        a: g.a(),
        nr: g.nr(),
        ntheta: g.ntheta(),
    })
}

/// Exit code for a library error.
pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) => 5,
        Error::SingularCirculationMatrix(_)
        | Error::SolveFailed { .. }
        | Error::Eigen(_)
        | Error::NoSignChange { .. }
        | Error::EnergyDecrease(_) => 4,
        _ => 1,
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("VORSTAB_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let start = Instant::now();
    let result = match cli.command {
        Command::Eig(a) => cmd_eig(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Ascend(a) => cmd_ascend(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(done) => {
            if let Some(out) = done.outputs {
                let manifest = RunManifest {
                    command_line: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
                    version: env!("CARGO_PKG_VERSION"),
                    configs: done.configs,
                    grid: done.grid,
                    tolerances: done.tolerances,
                    outputs: out.files.clone(),
                    wall_time_s: start.elapsed().as_secs_f64(),
                    exit_code: done.code,
                };
                if let Err(e) = write_json(&out.dir.join("manifest.json"), &manifest) {
                    eprintln!("error: {e}");
                    return 1;
                }
            }
            done.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            error_code(&e)
        }
    }
}

fn cmd_eig(args: EigArgs) -> Result<Done> {
    let a = match (args.domain, args.a) {
        (Domain::Disk, None | Some(0.0)) => 0.0,
        (Domain::Disk, Some(a)) => {
            return Err(Error::InvalidArgument(format!("the disk has no inner radius (got --a {a})")));
        }
        (Domain::Annulus, Some(a)) if a > 0.0 => a,
        (Domain::Annulus, _) => return Err(Error::InvalidArgument("the annulus needs --a in (0, 1)".into())),
    };
    let g = make_grid(a, args.nr, args.ntheta)?;
    let ctx = EllipticContext::new(&g)?;
    let (values, fields, summary) = match args.which {
        Which::Cap => {
            let (v, f) = lambda_cap1_pair(&ctx)?;
            (vec![v], vec![vec![f]], serde_json::json!({ "multiplicities": [1] }))
        }
        Which::Dirichlet | Which::Constrained => {
            let res = if args.which == Which::Dirichlet {
                dirichlet_spectrum(&ctx, args.count)?
            } else {
                constrained_spectrum(&ctx, args.count)?
            };
            let s = serde_json::to_value(res.summary())?;
            (res.eigenvalues, res.eigenfields, s)
        }
    };
    for v in &values {
        println!("{v}");
    }
    let mut outputs = None;
    if let Some(dir) = &args.out {
        let mut out = Outputs::new(dir)?;
        let mut names = Vec::new();
        for (i, group) in fields.iter().enumerate() {
            let mut g_names = Vec::new();
            for (j, f) in group.iter().enumerate() {
                let name = format!("eigenfield_{i}_{j}.csv");
                out.field(&name, f)?;
                g_names.push(name);
            }
            names.push(g_names);
        }
        let mut doc = summary;
        doc["which"] = serde_json::to_value(args.which)?;
        doc["eigenvalues"] = serde_json::to_value(&values)?;
        doc["field_files"] = serde_json::to_value(&names)?;
        out.json("eigen.json", &doc)?;
        outputs = Some(out);
    }
    let canonical = serde_json::to_vec(&args)?;
    Ok(Done {
        code: 0,
        grid: grid_info(&g),
        tolerances: serde_json::json!({ "cluster_tol": crate::spectra::default_cluster_tol(&g) }),
        configs: vec![ConfigDigest {
            source: "arguments".into(),
            sha256: sha256_hex(&canonical),
        }],
        outputs,
    })
}

/// Builds the initial vorticity of a simulation configuration.
pub fn initial_field(cfg: &SimulateConfig, base: &Path) -> Result<(GridRef, ScalarField, ScalarField)> {
    let sim = &cfg.sim;
    let g = make_grid(sim.a, sim.nr, sim.ntheta)?;
    let t = table();
    let w = match &cfg.initial {
        InitialCondition::File { path } => read_field(&base.join(path), Some(&g))?,
        InitialCondition::Uniform { value } => ScalarField::constant(&g, *value),
        InitialCondition::BesselRadial => ScalarField::radial(&g, |r| j0(t.j01 * r)),
        InitialCondition::Dipole => ScalarField::from_fn(&g, |r, th| j1(t.j11 * r) * th.cos()),
        InitialCondition::RotatingWave { n } => rotating_wave(&g, *n, 0.0)?,
    };
    let w0 = match cfg.perturbation {
        Some(p) => {
            let d = fourier_bessel(&g, p.seed, p.amplitude * w.l2_norm())?;
            &w + &d
        }
        None => w.clone(),
    };
    Ok((g, w, w0))
}

fn read_config(path: &Path) -> Result<(String, ConfigDigest)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    let digest = ConfigDigest {
        source: path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
    };
    Ok((text, digest))
}

fn cmd_simulate(args: SimulateArgs) -> Result<Done> {
    let (text, digest) = read_config(&args.config)?;
    let cfg: SimulateConfig = serde_json::from_str(&text)?;
    cfg.sim.validate()?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let (g, reference, w0) = initial_field(&cfg, base)?;
    let ctx = EllipticContext::new(&g)?;
    let probes = Probes {
        reference: cfg.track_reference.then(|| reference.clone()),
        orbit: cfg.track_orbit.then(|| reference.clone()),
        keep_snapshots: cfg.snapshots,
    };
    let out_run = run_with(&ctx, &cfg.sim, &w0, &probes)?;
    let mut out = Outputs::new(&args.out)?;
    out.text("series.csv", &out_run.series.to_csv())?;
    for (i, (_, f)) in out_run.snapshots.iter().enumerate() {
        out.field(&format!("snap_{i}.csv"), f)?;
    }
    out.field("final.csv", &out_run.final_state.omega)?;
    let drifts = series_drifts(&out_run.series, &w0);
    let summary = serde_json::json!({
        "dt": out_run.dt,
        "steps": out_run.steps,
        "t_end": out_run.final_state.t,
        "drifts": drifts,
        "max_distance": out_run.series.max_distance(),
        "max_orbit_distance": out_run.series.max_orbit_distance(),
    });
    out.json("summary.json", &summary)?;
    println!("steps {} dt {:e}", out_run.steps, out_run.dt);
    println!(
        "relative drifts: E {:e} I {:e} mean {:e} enstrophy {:e}",
        drifts.energy, drifts.inertia, drifts.mean, drifts.enstrophy
    );
    Ok(Done {
        code: 0,
        grid: grid_info(&g),
        tolerances: serde_json::json!({ "solver_tol": crate::elliptic::SOLVER_TOL }),
        configs: vec![digest],
        outputs: Some(out),
    })
}

fn cmd_ascend(args: AscendArgs) -> Result<Done> {
    let text = std::fs::read_to_string(&args.seed)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", args.seed.display())))?;
    let seed = crate::io::field_from_csv(&text, None)?;
    let g = seed.grid().clone();
    let gamma = if g.is_disk() && args.gamma.iter().all(|&x| x == 0.0) {
        CirculationVector::none()
    } else {
        CirculationVector(args.gamma.clone())
    };
    let ctx = EllipticContext::new(&g)?;
    let opts = AscentOptions {
        max_iters: args.max_iters,
        fp_tol: args.fp_tol,
    };
    let rep = burton_ascent(&ctx, &seed, &gamma, &opts)?;
    let mut out = Outputs::new(&args.out)?;
    out.json("ascent.json", &rep)?;
    out.field("final.csv", &rep.final_field)?;
    println!("iterations {} termination {:?}", rep.iterations, rep.termination);
    for e in &rep.energies {
        println!("{e}");
    }
    Ok(Done {
        code: 0,
        grid: grid_info(&g),
        tolerances: serde_json::json!({ "max_iters": args.max_iters, "fp_tol": args.fp_tol }),
        configs: vec![ConfigDigest {
            source: args.seed.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        }],
        outputs: Some(out),
    })
}

fn cmd_experiment(args: ExperimentArgs) -> Result<Done> {
    let (spec, digest) = match &args.config {
        Some(path) => {
            let (text, digest) = read_config(path)?;
            let mut value: serde_json::Value = serde_json::from_str(&text)?;
            match value.get("name") {
                None => value["name"] = serde_json::to_value(args.name)?,
                Some(n) if *n != serde_json::to_value(args.name)? => {
                    return Err(Error::InvalidArgument(format!("config names experiment {n}")));
                }
                _ => {}
            }
            (ExperimentSpec::from_json(&value.to_string())?, digest)
        }
        None => {
            let spec = ExperimentSpec::preset(args.name);
            let digest = ConfigDigest {
                source: "preset".into(),
                sha256: sha256_hex(&serde_json::to_vec(&spec)?),
            };
            (spec, digest)
        }
    };
    let report = run_experiment(&spec)?;
    let mut out = Outputs::new(&args.out)?;
    for a in &report.artifacts {
        out.text(&a.name, &a.contents)?;
    }
    out.json("report.json", &report)?;
    for v in &report.verdicts {
        let tag = serde_json::to_value(v.status)?;
        println!(
            "{} {}: {:e} {} {:e}",
            tag.as_str().unwrap_or("?"),
            v.criterion,
            v.value,
            v.comparison,
            v.threshold
        );
    }
    let g = make_grid(0.0, spec.nr, spec.ntheta)?;
    Ok(Done {
        code: report.exit_code(),
        grid: grid_info(&g),
        tolerances: serde_json::json!({
            "response_factor": spec.response_factor,
            "drift_gate": spec.drift_gate,
            "mean_drift_gate": spec.mean_drift_gate,
        }),
        configs: vec![digest],
        outputs: Some(out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_errors_exit_one() {
        assert_eq!(main_with(["vorstab", "eig", "--domain", "disk", "--ntheta", "16"]), 1);
        assert_eq!(main_with(["vorstab", "bogus"]), 1);
        assert_eq!(main_with(["vorstab", "--version"]), 0);
    }

    #[test]
    fn error_codes() {
        assert_eq!(error_code(&Error::NonFinite(1.0)), 5);
        assert_eq!(error_code(&Error::Eigen("x".into())), 4);
        assert_eq!(error_code(&Error::Format("x".into())), 1);
    }

    #[test]
    fn simulate_config_parses() {
        let text = r#"{"a": 0, "nr": 8, "ntheta": 16, "dt": {"kind": "cfl", "cfl": 0.5},
                       "t_end": 0.1, "initial": {"kind": "rotating_wave", "n": 4},
                       "perturbation": {"seed": 3, "amplitude": 0.01}}"#;
        let cfg: SimulateConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.initial, InitialCondition::RotatingWave { n: 4 });
        let (_, w, w0) = initial_field(&cfg, Path::new(".")).unwrap();
        let rel = w.lp_distance(&w0, 2.0).unwrap() / w.l2_norm();
        assert!((rel - 0.01).abs() < 1e-12);
    }
}
