//! Time integration of the vorticity equation `w_t + v . grad w = 0`,
//! `v = (psi_y, -psi_x)`, `-Lap psi = w`, on the disk and annulus.
//!
//! In polar coordinates `w_t = (1/r) J(psi, w)` with
//! `J(p, q) = p_r q_theta - p_theta q_r`. `J` uses Arakawa's flux form on the
//! `(r, theta)` index grid. Walls reflect `psi` about its boundary value and
//! mirror `w`; the pole is a wall of zero length whose `psi` value is
//! extrapolated from the two innermost rings. All radial fluxes through walls
//! and the pole then vanish and the diagonal ones telescope, so the mean and
//! enstrophy tendencies are zero to round-off.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::elliptic::{CirculationVector, EllipticContext, StreamFunction};
use crate::error::{Error, Result};
use crate::fourier::{d_theta, ring_means, rotate_with, RingFft};
use crate::grid::{make_grid, GridRef, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DtPolicy {
    Fixed { dt: f64 },
    Cfl { cfl: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub a: f64,
    pub nr: usize,
    pub ntheta: usize,
    #[serde(default)]
    pub gamma: Vec<f64>,
    pub dt: DtPolicy,
    pub t_end: f64,
    /// Steps between recorded diagnostics (snapshots share the stride).
    #[serde(default = "one")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub hyperdiffusion: f64,
    /// Exponent of the distance to the reference field.
    #[serde(default = "two")]
    pub p: f64,
}

fn one() -> usize {
    1
}
fn two() -> f64 {
    2.0
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("end time must be > 0, got {}", self.t_end)));
        }
        match self.dt {
            DtPolicy::Cfl { cfl } if !(cfl > 0.0 && cfl <= 1.0) => {
                return Err(Error::InvalidArgument(format!("CFL number must be in (0, 1], got {cfl}")));
            }
            DtPolicy::Fixed { dt } if !(dt > 0.0) || !dt.is_finite() => {
                return Err(Error::InvalidArgument(format!("time step must be > 0, got {dt}")));
            }
            _ => {}
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidArgument("snapshot stride must be >= 1".into()));
        }
        if self.hyperdiffusion < 0.0 {
            return Err(Error::InvalidArgument("hyperdiffusion must be >= 0".into()));
        }
        if self.p < 1.0 {
            return Err(Error::InvalidArgument(format!("p must be >= 1, got {}", self.p)));
        }
        Ok(())
    }

    pub fn gamma(&self) -> CirculationVector {
        CirculationVector(self.gamma.clone())
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub omega: ScalarField,
    pub psi: StreamFunction,
}

impl SimState {
    pub fn new(ctx: &EllipticContext, omega: ScalarField, gamma: &CirculationVector) -> Result<Self> {
        let psi = ctx.solve_vcp_full(&omega, gamma)?;
        Ok(Self { t: 0.0, omega, psi })
    }
}

#[derive(Debug, Clone)]
pub struct Velocity {
    pub ur: ScalarField,
    pub utheta: ScalarField,
}

/// `u_r = psi_theta / r` (spectral) and `u_theta = -psi_r` (centred in `r`,
/// reflected about the boundary values at walls, one-sided next to the pole).
pub fn velocity(ctx: &EllipticContext, psi: &ScalarField, traces: &[f64]) -> Result<Velocity> {
    let g = ctx.grid();
    psi.check_grid(&ScalarField::zeros(g))?;
    let n = g.ntheta();
    let nr = g.nr();
    let h = g.dr();
    let dth = d_theta(psi);
    let mut ur = dth.into_values();
    for j in 0..nr {
        let r = g.r(j);
        for v in &mut ur[j * n..(j + 1) * n] {
            *v /= r;
        }
    }
    let c_outer = traces.first().copied().unwrap_or(0.0);
    let c_inner = traces.get(1).copied().unwrap_or(0.0);
    let p = psi.values();
    let mut ut = vec![0.0; g.len()];
    for j in 0..nr {
        for k in 0..n {
            let idx = j * n + k;
            let up = if j + 1 < nr { p[idx + n] } else { 2.0 * c_outer - p[idx] };
            let dpdr = if j > 0 {
                (up - p[idx - n]) / (2.0 * h)
            } else if g.is_disk() {
                (-3.0 * p[idx] + 4.0 * p[idx + n] - p[idx + 2 * n]) / (2.0 * h)
            } else {
                (up - (2.0 * c_inner - p[idx])) / (2.0 * h)
            };
            ut[idx] = -dpdr;
        }
    }
    Ok(Velocity {
        ur: ScalarField::from_parts(g.clone(), ur),
        utheta: ScalarField::from_parts(g.clone(), ut),
    })
}

/// Largest stable step for CFL number `cfl`.
pub fn cfl_dt(ctx: &EllipticContext, vel: &Velocity, cfl: f64) -> f64 {
    let g = ctx.grid();
    let n = g.ntheta();
    let mut dt = f64::INFINITY;
    for j in 0..g.nr() {
        let arc = g.r(j) * g.dtheta();
        for k in 0..n {
            let idx = j * n + k;
            let ur = vel.ur.values()[idx].abs();
            let ut = vel.utheta.values()[idx].abs();
            if ur > 0.0 {
                dt = dt.min(g.dr() / ur);
            }
            if ut > 0.0 {
                dt = dt.min(arc / ut);
            }
        }
    }
    cfl * dt
}

/// Padded copy with one ghost ring on each side in `r`.
struct Padded<'a> {
    n: usize,
    data: Vec<f64>,
    _g: &'a GridRef,
}

impl<'a> Padded<'a> {
    fn new(g: &'a GridRef, vals: &[f64], lo: impl Fn(f64) -> f64, hi: impl Fn(f64) -> f64) -> Self {
        let n = g.ntheta();
        let nr = g.nr();
        let mut data = Vec::with_capacity((nr + 2) * n);
        data.extend(vals[..n].iter().map(|&v| lo(v)));
        data.extend_from_slice(vals);
        data.extend(vals[(nr - 1) * n..].iter().map(|&v| hi(v)));
        Self { n, data, _g: g }
    }
    #[inline]
    fn at(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.n + k]
    }
}

/// Value of `psi` at the pole from even extrapolation of the two innermost
/// ring means (`A + B r^2` through `r = h/2, 3h/2`).
fn pole_value(psi: &ScalarField) -> f64 {
    let m = ring_means(psi);
    (9.0 * m[0] - m[1]) / 8.0
}

/// Arakawa Jacobian `J(p, q)` on the index grid (without the `1/r` factor),
/// given boundary values of `p` (outer first).
pub fn arakawa_jacobian(g: &GridRef, p: &ScalarField, traces: &[f64], q: &ScalarField) -> Vec<f64> {
    let n = g.ntheta();
    let nr = g.nr();
    let c_outer = traces.first().copied().unwrap_or(0.0);
    let c_inner = if g.is_disk() {
        pole_value(p)
    } else {
        traces.get(1).copied().unwrap_or(0.0)
    };
    let pp = Padded::new(g, p.values(), |v| 2.0 * c_inner - v, |v| 2.0 * c_outer - v);
    let qq = Padded::new(g, q.values(), |v| v, |v| v);
    let scale = -1.0 / (12.0 * g.dr() * g.dtheta());
    let mut out = vec![0.0; g.len()];
    for j in 1..=nr {
        for k in 0..n {
            let kn = (k + 1) % n;
            let ks = (k + n - 1) % n;
            let qc = qq.at(j, k);
            let (pe, qe) = (pp.at(j + 1, k), qq.at(j + 1, k));
            let (pw, qw) = (pp.at(j - 1, k), qq.at(j - 1, k));
            let (pn, qn) = (pp.at(j, kn), qq.at(j, kn));
            let (ps, qs) = (pp.at(j, ks), qq.at(j, ks));
            let (pne, qne) = (pp.at(j + 1, kn), qq.at(j + 1, kn));
            let (pnw, qnw) = (pp.at(j - 1, kn), qq.at(j - 1, kn));
            let (pse, qse) = (pp.at(j + 1, ks), qq.at(j + 1, ks));
            let (psw, qsw) = (pp.at(j - 1, ks), qq.at(j - 1, ks));
            let s = (qc + qe) * (pn + pne - ps - pse) - (qc + qw) * (pn + pnw - ps - psw)
                - (qc + qn) * (pe + pne - pw - pnw)
                + (qc + qs) * (pe + pse - pw - psw)
                + (qc + qne) * (pn - pe)
                - (qc + qsw) * (pw - ps)
                - (qc + qnw) * (pn - pw)
                + (qc + qse) * (pe - ps);
            out[(j - 1) * n + k] = scale * s;
        }
    }
    out
}

/// Mean-preserving `-Lap` with zero-flux walls, used for hyperdiffusion.
fn neumann_neg_laplacian(ctx: &EllipticContext, u: &ScalarField) -> ScalarField {
    let g = ctx.grid();
    let n = g.ntheta();
    let nr = g.nr();
    let h2 = g.dr() * g.dr();
    let ang = ctx
        .fft()
        .apply_multiplier(u.values(), |m| rustfft::num_complex::Complex64::new((m * m) as f64, 0.0));
    let v = u.values();
    let mut out = vec![0.0; g.len()];
    for j in 0..nr {
        let r = g.r(j);
        for k in 0..n {
            let idx = j * n + k;
            let fo = if j + 1 < nr { g.r_face(j + 1) * (v[idx + n] - v[idx]) } else { 0.0 };
            let fi = if j > 0 { g.r_face(j) * (v[idx] - v[idx - n]) } else { 0.0 };
            out[idx] = -(fo - fi) / (r * h2) + ang[idx] / (r * r);
        }
    }
    ScalarField::from_parts(g.clone(), out)
}

/// Tendency `w_t` for the pair `(w, gamma)`.
pub fn rhs(ctx: &EllipticContext, omega: &ScalarField, gamma: &CirculationVector) -> Result<ScalarField> {
    let psi = ctx.solve_vcp_full(omega, gamma)?;
    Ok(rhs_with(ctx, omega, &psi, 0.0))
}

fn rhs_with(ctx: &EllipticContext, omega: &ScalarField, psi: &StreamFunction, nu: f64) -> ScalarField {
    let g = ctx.grid();
    let n = g.ntheta();
    let mut jac = arakawa_jacobian(g, &psi.field, &psi.traces, omega);
    for j in 0..g.nr() {
        let inv = 1.0 / g.r(j);
        for v in &mut jac[j * n..(j + 1) * n] {
            *v *= inv;
        }
    }
    let mut out = ScalarField::from_parts(g.clone(), jac);
    if nu > 0.0 {
        let l2 = neumann_neg_laplacian(ctx, &neumann_neg_laplacian(ctx, omega));
        out = out.axpy(-nu, &l2);
    }
    out
}

/// One classical RK4 step.
pub fn step(
    ctx: &EllipticContext,
    state: &SimState,
    dt: f64,
    gamma: &CirculationVector,
    nu: f64,
) -> Result<SimState> {
    let w0 = &state.omega;
    let k1 = rhs_with(ctx, w0, &state.psi, nu);
    let w1 = w0.axpy(0.5 * dt, &k1);
    let k2 = rhs_with(ctx, &w1, &ctx.solve_vcp_full(&w1, gamma)?, nu);
    let w2 = w0.axpy(0.5 * dt, &k2);
    let k3 = rhs_with(ctx, &w2, &ctx.solve_vcp_full(&w2, gamma)?, nu);
    let w3 = w0.axpy(dt, &k3);
    let k4 = rhs_with(ctx, &w3, &ctx.solve_vcp_full(&w3, gamma)?, nu);
    let mut vals = w0.values().to_vec();
    for (i, v) in vals.iter_mut().enumerate() {
        *v += dt / 6.0 * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]);
    }
    let t = state.t + dt;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(t));
    }
    let omega = ScalarField::from_parts(ctx.grid().clone(), vals);
    let psi = ctx.solve_vcp_full(&omega, gamma)?;
    Ok(SimState { t, omega, psi })
}

#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub t: f64,
    pub energy: f64,
    pub inertia: f64,
    pub gamma: Vec<f64>,
    pub mean: f64,
    pub enstrophy: f64,
    pub m4: f64,
    pub dist_ref: Option<f64>,
    pub orbit_dist: Option<f64>,
    pub orbit_angle: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TimeSeries {
    pub records: Vec<Record>,
}

/// Relative changes of the conserved quantities between the first and any
/// later record (largest over the run).
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Drifts {
    pub energy: f64,
    pub inertia: f64,
    pub mean: f64,
    pub enstrophy: f64,
}

impl Drifts {
    pub fn within_gate(&self, quad: f64, mean: f64) -> bool {
        self.energy <= quad && self.inertia <= quad && self.mean <= mean
    }
}

impl TimeSeries {
    pub fn csv_header(n_gamma: usize) -> String {
        let mut h = String::from("t,E,I");
        for i in 0..n_gamma {
            h.push_str(&format!(",gamma{}", i + 1));
        }
        h.push_str(",mean,enstrophy,m4,dist_ref_p,orbit_dist,orbit_angle");
        h
    }

    pub fn to_csv(&self) -> String {
        let ng = self.records.first().map_or(0, |r| r.gamma.len());
        let mut s = Self::csv_header(ng);
        s.push('\n');
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.15e}"));
        for r in &self.records {
            s.push_str(&format!("{:.15e},{:.15e},{:.15e}", r.t, r.energy, r.inertia));
            for g in &r.gamma {
                s.push_str(&format!(",{g:.15e}"));
            }
            s.push_str(&format!(
                ",{:.15e},{:.15e},{:.15e},{},{},{}\n",
                r.mean,
                r.enstrophy,
                r.m4,
                opt(r.dist_ref),
                opt(r.orbit_dist),
                opt(r.orbit_angle)
            ));
        }
        s
    }

    /// `mean` is measured against the RMS of the initial vorticity and `I`
    /// against `int r^2 |w0|`, so that vanishing initial values do not
    /// inflate the ratios.
    pub fn drifts(&self, mean_scale: f64, inertia_scale: f64) -> Drifts {
        let Some(first) = self.records.first() else {
            return Drifts::default();
        };
        let rel = |a: f64, b: f64, s: f64| (a - b).abs() / s.max(f64::MIN_POSITIVE);
        let mut d = Drifts::default();
        for r in &self.records {
            d.energy = d.energy.max(rel(r.energy, first.energy, first.energy.abs()));
            d.inertia = d.inertia.max(rel(r.inertia, first.inertia, first.inertia.abs().max(inertia_scale)));
            d.mean = d.mean.max(rel(r.mean, first.mean, first.mean.abs().max(mean_scale)));
            d.enstrophy = d.enstrophy.max(rel(r.enstrophy, first.enstrophy, first.enstrophy.abs()));
        }
        d
    }

    pub fn max_distance(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.dist_ref).reduce(f64::max)
    }
    pub fn max_orbit_distance(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.orbit_dist).reduce(f64::max)
    }
}

/// Optional comparison targets recorded at every snapshot.
#[derive(Debug, Clone, Default)]
pub struct Probes {
    /// Fixed field for `dist_ref_p`.
    pub reference: Option<ScalarField>,
    /// Field whose rotation orbit gives `orbit_dist` (disk only).
    pub orbit: Option<ScalarField>,
    /// Keep the vorticity of every recorded snapshot.
    pub keep_snapshots: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub final_state: SimState,
    pub dt: f64,
    pub steps: usize,
    pub snapshots: Vec<(f64, ScalarField)>,
}

fn record(
    ctx: &EllipticContext,
    state: &SimState,
    gamma: &CirculationVector,
    p: f64,
    probes: &Probes,
    fft: &RingFft,
) -> Result<Record> {
    let w = &state.omega;
    let energy = ctx.energy(w, gamma)?;
    let dist_ref = match &probes.reference {
        Some(r) => Some(w.lp_distance(r, p)?),
        None => None,
    };
    let (orbit_dist, orbit_angle) = match &probes.orbit {
        Some(r) => {
            let (d, a) = orbit_distance_with(fft, w, r, p)?;
            (Some(d), Some(a))
        }
        None => (None, None),
    };
    Ok(Record {
        t: state.t,
        energy,
        inertia: w.moment_of_inertia(),
        gamma: gamma.0.clone(),
        mean: w.mean(),
        enstrophy: w.inner(w),
        m4: w.map(|x| x.powi(4)).integrate(),
        dist_ref,
        orbit_dist,
        orbit_angle,
    })
}

/// Time step and step count used for `config` starting from `omega0`: the
/// CFL-derived (or fixed) step shrunk so that it divides `t_end` exactly.
pub fn plan_steps(ctx: &EllipticContext, config: &SimConfig, omega0: &ScalarField) -> Result<(f64, usize)> {
    config.validate()?;
    let psi = ctx.solve_vcp_full(omega0, &config.gamma())?;
    let vel = velocity(ctx, &psi.field, &psi.traces)?;
    let limit = cfl_dt(ctx, &vel, 1.0);
    let raw_dt = match config.dt {
        DtPolicy::Fixed { dt } => {
            if dt > limit {
                return Err(Error::InvalidArgument(format!(
                    "time step {dt} exceeds the CFL limit {limit}"
                )));
            }
            dt
        }
        DtPolicy::Cfl { cfl } => cfl * limit,
    };
    let raw_dt = raw_dt.min(config.t_end);
    let steps = (config.t_end / raw_dt).ceil() as usize;
    Ok((config.t_end / steps as f64, steps))
}

/// Integrates from `omega0` to `config.t_end` on an existing context.
pub fn run_with(
    ctx: &EllipticContext,
    config: &SimConfig,
    omega0: &ScalarField,
    probes: &Probes,
) -> Result<RunOutput> {
    let (dt, steps) = plan_steps(ctx, config, omega0)?;
    let gamma = config.gamma();
    let mut state = SimState::new(ctx, omega0.clone(), &gamma)?;
    let fft = RingFft::new(ctx.grid().ntheta());
    let nu = config.hyperdiffusion;
    let mut series = TimeSeries::default();
    let mut snapshots = Vec::new();
    series.records.push(record(ctx, &state, &gamma, config.p, probes, &fft)?);
    if probes.keep_snapshots {
        snapshots.push((state.t, state.omega.clone()));
    }
    for i in 1..=steps {
        state = step(ctx, &state, dt, &gamma, nu)?;
        if i == steps {
            state.t = config.t_end;
        }
        if i % config.snapshot_stride == 0 || i == steps {
            series.records.push(record(ctx, &state, &gamma, config.p, probes, &fft)?);
            if probes.keep_snapshots {
                snapshots.push((state.t, state.omega.clone()));
            }
        }
    }
    Ok(RunOutput {
        series,
        final_state: state,
        dt,
        steps,
        snapshots,
    })
}

/// Builds the grid and context from the configuration and integrates.
pub fn run(config: &SimConfig, omega0: &ScalarField) -> Result<RunOutput> {
    let grid = make_grid(config.a, config.nr, config.ntheta)?;
    if !grid.same_shape(omega0.grid()) {
        return Err(Error::GridMismatch("initial field does not match the configured grid".into()));
    }
    let ctx = EllipticContext::new(&grid)?;
    run_with(&ctx, config, omega0, &Probes::default())
}

/// Exact travelling wave `J1(j11 r) cos(theta - t/n) + 2/n` on the disk.
pub fn rotating_wave(grid: &GridRef, n: u32, t: f64) -> Result<ScalarField> {
    if !grid.is_disk() {
        return Err(Error::InvalidGrid("the rotating wave lives on the disk".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let k = crate::bessel::table().j11;
    let nf = n as f64;
    Ok(ScalarField::from_fn(grid, |r, th| {
        crate::bessel::j1(k * r) * (th - t / nf).cos() + 2.0 / nf
    }))
}

/// Minimum over rotations of `reference` of the `L^p` distance to `f`, and
/// the minimizing angle in `[0, 2 pi)`.
pub fn orbit_distance(f: &ScalarField, reference: &ScalarField, p: f64) -> Result<(f64, f64)> {
    let fft = RingFft::new(f.grid().ntheta());
    orbit_distance_with(&fft, f, reference, p)
}

fn orbit_distance_with(fft: &RingFft, f: &ScalarField, reference: &ScalarField, p: f64) -> Result<(f64, f64)> {
    if !f.grid().is_disk() {
        return Err(Error::InvalidGrid("orbit distance is defined on the disk".into()));
    }
    f.check_grid(reference)?;
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    // rotating the reference by alpha samples it at theta + alpha; the
    // reported angle is the rotation that carries reference onto f
    let dist = |alpha: f64| f.lp_distance(&rotate_with(fft, reference, -alpha), p).unwrap_or(f64::INFINITY);
    let coarse = 64;
    let hstep = 2.0 * PI / coarse as f64;
    let (mut best_a, mut best_d) = (0.0, f64::INFINITY);
    for i in 0..coarse {
        let a = i as f64 * hstep;
        let d = dist(a);
        if d < best_d {
            best_d = d;
            best_a = a;
        }
    }
    let (mut lo, mut hi) = (best_a - hstep, best_a + hstep);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - gr * (hi - lo);
    let mut x2 = lo + gr * (hi - lo);
    let (mut f1, mut f2) = (dist(x1), dist(x2));
    while hi - lo > 1e-11 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = dist(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = dist(x2);
        }
    }
    let a = 0.5 * (lo + hi);
    let d = dist(a);
    let (a, d) = if d <= best_d { (a, d) } else { (best_a, best_d) };
    Ok((d, a.rem_euclid(2.0 * PI)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::build_context;
    use crate::fourier::rotate;

    fn ctx(a: f64, nr: usize, nt: usize) -> EllipticContext {
        build_context(&make_grid(a, nr, nt).unwrap()).unwrap()
    }

    fn three_form(g: &GridRef, p: &ScalarField, traces: &[f64], q: &ScalarField) -> Vec<f64> {
        let n = g.ntheta();
        let nr = g.nr();
        let c_outer = traces.first().copied().unwrap_or(0.0);
        let c_inner = if g.is_disk() { pole_value(p) } else { traces[1] };
        let pp = Padded::new(g, p.values(), |v| 2.0 * c_inner - v, |v| 2.0 * c_outer - v);
        let qq = Padded::new(g, q.values(), |v| v, |v| v);
        let de = 4.0 * g.dr() * g.dtheta();
        let mut out = vec![0.0; g.len()];
        for j in 1..=nr {
            for k in 0..n {
                let kn = (k + 1) % n;
                let ks = (k + n - 1) % n;
                let p_ = |jj: usize, kk: usize| pp.at(jj, kk);
                let q_ = |jj: usize, kk: usize| qq.at(jj, kk);
                let jpp = (p_(j + 1, k) - p_(j - 1, k)) * (q_(j, kn) - q_(j, ks))
                    - (p_(j, kn) - p_(j, ks)) * (q_(j + 1, k) - q_(j - 1, k));
                let jpx = p_(j + 1, k) * (q_(j + 1, kn) - q_(j + 1, ks))
                    - p_(j - 1, k) * (q_(j - 1, kn) - q_(j - 1, ks))
                    - p_(j, kn) * (q_(j + 1, kn) - q_(j - 1, kn))
                    + p_(j, ks) * (q_(j + 1, ks) - q_(j - 1, ks));
                let jxp = q_(j, kn) * (p_(j + 1, kn) - p_(j - 1, kn))
                    - q_(j, ks) * (p_(j + 1, ks) - p_(j - 1, ks))
                    - q_(j + 1, k) * (p_(j + 1, kn) - p_(j + 1, ks))
                    + q_(j - 1, k) * (p_(j - 1, kn) - p_(j - 1, ks));
                out[(j - 1) * n + k] = (jpp + jpx + jxp) / (3.0 * de);
            }
        }
        out
    }

    fn wavy(g: &GridRef, s: f64) -> ScalarField {
        ScalarField::from_fn(g, |r, t| (2.0 * r + s).sin() * (t + s).cos() + r * r * (3.0 * t - s).sin() + 0.2 * s)
    }

    #[test]
    fn flux_form_matches_three_form_average() {
        for a in [0.0, 0.4] {
            let c = ctx(a, 8, 16);
            let p = wavy(c.grid(), 0.3);
            let q = wavy(c.grid(), 1.1);
            let tr = [0.2, -0.1];
            let j1 = arakawa_jacobian(c.grid(), &p, &tr, &q);
            let j2 = three_form(c.grid(), &p, &tr, &q);
            for (x, y) in j1.iter().zip(&j2) {
                assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn jacobian_of_coordinate_functions() {
        let c = ctx(0.5, 8, 16);
        let g = c.grid();
        let p = ScalarField::radial(g, |r| r);
        let q = ScalarField::from_fn(g, |_, t| t.sin());
        let j = arakawa_jacobian(g, &p, &[1.0, 0.5], &q);
        for jj in 0..g.nr() {
            for k in 0..g.ntheta() {
                let want = g.theta(k).cos() * (g.dtheta().sin() / g.dtheta());
                assert!((j[jj * g.ntheta() + k] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tendencies_conserve_mean_and_enstrophy() {
        for a in [0.0, 0.5] {
            let c = ctx(a, 24, 32);
            let w = wavy(c.grid(), 0.7);
            let gamma = CirculationVector(vec![0.3; c.inner_boundaries()]);
            let t = rhs(&c, &w, &gamma).unwrap();
            let scale = t.l2_norm() * w.l2_norm();
            assert!(t.integrate().abs() < 1e-12 * t.l2_norm());
            assert!(w.inner(&t).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn radial_fields_are_steady() {
        for a in [0.0, 0.5] {
            let c = ctx(a, 16, 32);
            let w = ScalarField::radial(c.grid(), |r| (3.0 * r).cos());
            let gamma = CirculationVector(vec![1.0; c.inner_boundaries()]);
            assert!(rhs(&c, &w, &gamma).unwrap().max_abs() < 1e-11);
            let zero = rhs(&c, &ScalarField::constant(c.grid(), 2.0), &gamma).unwrap();
            assert!(zero.max_abs() < 1e-11);
        }
    }

    #[test]
    fn velocity_examples() {
        let c = ctx(0.0, 32, 32);
        let g = c.grid();
        let psi = ScalarField::radial(g, |r| (1.0 - r * r) / 4.0);
        let v = velocity(&c, &psi, &[0.0]).unwrap();
        assert_eq!(v.ur.max_abs(), 0.0);
        let want = ScalarField::radial(g, |r| r / 2.0);
        let err = &v.utheta - &want;
        for j in 0..g.nr() - 1 {
            assert!(err.ring(j).iter().all(|e| e.abs() < 1e-12));
        }
        // the wall ghost is only a reflection, exact up to O(dr^2) in psi
        assert!(err.max_abs() < g.dr());
        let z = velocity(&c, &ScalarField::zeros(g), &[0.0]).unwrap();
        assert_eq!(z.ur.max_abs() + z.utheta.max_abs(), 0.0);
    }

    #[test]
    fn wave_tendency_is_rotation() {
        let n = 4;
        let c = ctx(0.0, 64, 128);
        let w = rotating_wave(c.grid(), n, 0.0).unwrap();
        let t = rhs(&c, &w, &CirculationVector::none()).unwrap();
        let want = d_theta(&w).scale(-1.0 / n as f64);
        let err = (&t - &want).l2_norm() / want.l2_norm();
        assert!(err < 2e-2, "relative tendency error {err}");
    }

    #[test]
    fn rotating_wave_properties() {
        let g = make_grid(0.0, 32, 64).unwrap();
        let w0 = rotating_wave(&g, 4, 0.0).unwrap();
        let w1 = rotating_wave(&g, 4, 2.0).unwrap();
        assert!((&rotate(&w0, -0.5) - &w1).max_abs() < 1e-12);
        assert!((w0.mean() - 0.5).abs() < 1e-6);
        let ws = ScalarField::from_fn(&g, |r, t| crate::bessel::j1(crate::bessel::table().j11 * r) * t.cos());
        let d: Vec<f64> = [1, 4, 16]
            .iter()
            .map(|&n| rotating_wave(&g, n, 0.0).unwrap().lp_distance(&ws, 2.0).unwrap())
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2]);
        assert!(rotating_wave(&make_grid(0.5, 8, 16).unwrap(), 4, 0.0).is_err());
    }

    #[test]
    fn orbit_distance_examples() {
        let g = make_grid(0.0, 16, 32).unwrap();
        let reference = ScalarField::from_fn(&g, |r, t| r * t.cos() + r * r * (2.0 * t).sin());
        let f = rotate(&reference, -0.3);
        let (d, a) = orbit_distance(&f, &reference, 2.0).unwrap();
        assert!(d < 1e-8 && (a - 0.3).abs() < 1e-6, "{d} {a}");
        let bump = ScalarField::radial(&g, |r| (-(r * r) * 10.0).exp());
        let (d, _) = orbit_distance(&(&reference + &bump), &reference, 2.0).unwrap();
        assert!((d - bump.l2_norm()).abs() < 1e-8);
        let radial = ScalarField::radial(&g, |r| r);
        let (d, _) = orbit_distance(&reference, &radial, 2.0).unwrap();
        assert!((d - reference.lp_distance(&radial, 2.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig {
            a: 0.0,
            nr: 8,
            ntheta: 16,
            gamma: vec![],
            dt: DtPolicy::Cfl { cfl: 0.5 },
            t_end: 1.0,
            snapshot_stride: 1,
            hyperdiffusion: 0.0,
            p: 2.0,
        };
        assert!(cfg.validate().is_ok());
        cfg.dt = DtPolicy::Cfl { cfl: 1.5 };
        assert!(cfg.validate().is_err());
        cfg.dt = DtPolicy::Cfl { cfl: 0.5 };
        cfg.t_end = 0.0;
        assert!(cfg.validate().is_err());
    }
}
