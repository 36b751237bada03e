//! Eigenvalues of the zero-Dirichlet Laplacian, of the constrained problem
//! `-Lu = Lu, u in Y` (solved on the vorticity side through `T`) and the
//! constant `Lambda_1` over the space with free inner boundary constant.
//!
//! Every operator here commutes with rotations, so each angular Fourier mode
//! is solved separately. Modes `m != 0` of `T` coincide with those of the
//! Dirichlet inverse; only the radial block needs the dense mean-free
//! projection.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::EllipticContext;
use crate::error::{Error, Result};
use crate::fourier::radial_field;
use crate::grid::{GridRef, ScalarField};

/// Eigenvalues grouped into clusters, with orthonormal eigenfields per group.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenfields: Vec<Vec<ScalarField>>,
    pub multiplicities: Vec<usize>,
    /// Unclustered values of each group.
    pub members: Vec<Vec<f64>>,
    /// Relative tolerance used to merge nearby values.
    pub cluster_tol: f64,
    /// Set when two groups are separated by less than ten cluster tolerances.
    pub ambiguous: bool,
    /// Relative asymmetry of the operator before symmetrization.
    pub symmetry_defect: f64,
}

impl EigenResult {
    /// Relative spread `(max - min) / mean` of group `i`.
    pub fn spread(&self, i: usize) -> f64 {
        let m = &self.members[i];
        let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / self.eigenvalues[i]
    }

    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            eigenvalues: self.eigenvalues.clone(),
            multiplicities: self.multiplicities.clone(),
            members: self.members.clone(),
            cluster_tol: self.cluster_tol,
            ambiguous: self.ambiguous,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenSummary {
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub members: Vec<Vec<f64>>,
    pub cluster_tol: f64,
    pub ambiguous: bool,
}

/// Smallest relative gap that separates groups.
pub const BASE_CLUSTER_TOL: f64 = 1e-6;

/// Merge tolerance used by default: the base gap, widened to the size of the
/// discretization error so that a continuum eigenvalue shared by different
/// angular modes stays one group.
pub fn default_cluster_tol(grid: &GridRef) -> f64 {
    BASE_CLUSTER_TOL.max(2.0 * grid.dr() * grid.dr())
}

struct Candidate {
    value: f64,
    m: usize,
    profile: Vec<f64>,
}

/// Eigenpairs `(value, profile)` of the symmetric tridiagonal radial block
/// of mode `m`; profiles are on the field side (unweighted).
fn mode_pairs(ctx: &EllipticContext, m: usize) -> Vec<(f64, Vec<f64>)> {
    let r = ctx.grid().r_centers();
    let s = ctx.mode(m).symmetrized(r);
    let eig = SymmetricEigen::new(s);
    unweight(&eig, r)
}

fn unweight(eig: &SymmetricEigen<f64, nalgebra::Dyn>, r: &[f64]) -> Vec<(f64, Vec<f64>)> {
    let mut out: Vec<(f64, Vec<f64>)> = (0..eig.eigenvalues.len())
        .map(|i| {
            let col = eig.eigenvectors.column(i);
            let prof = col.iter().zip(r).map(|(y, rj)| y / rj.sqrt()).collect();
            (eig.eigenvalues[i], prof)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn dirichlet_candidates(ctx: &EllipticContext, per_mode: usize, skip_radial: bool) -> Vec<Candidate> {
    let nm = ctx.grid().ntheta() / 2;
    let start = usize::from(skip_radial);
    (start..=nm)
        .into_par_iter()
        .flat_map_iter(|m| {
            mode_pairs(ctx, m)
                .into_iter()
                .take(per_mode)
                .map(move |(value, profile)| Candidate { value, m, profile })
        })
        .collect()
}

/// Fields carried by one candidate: the radial profile, or its `cos` and
/// `sin` modulations (a single `cos` at the Nyquist wavenumber).
fn candidate_fields(grid: &GridRef, c: &Candidate) -> Vec<ScalarField> {
    if c.m == 0 {
        return vec![radial_field(grid, &c.profile)];
    }
    let n = grid.ntheta();
    let m = c.m as f64;
    let make = |f: fn(f64) -> f64| {
        let mut vals = Vec::with_capacity(grid.len());
        for &p in &c.profile {
            for k in 0..n {
                vals.push(p * f(m * grid.theta(k)));
            }
        }
        ScalarField::from_values(grid, vals).expect("finite eigenvector")
    };
    if c.m == n / 2 {
        vec![make(f64::cos)]
    } else {
        vec![make(f64::cos), make(f64::sin)]
    }
}

fn assemble(
    grid: &GridRef,
    mut cands: Vec<Candidate>,
    count: usize,
    tol: f64,
    symmetry_defect: f64,
) -> Result<EigenResult> {
    cands.retain(|c| c.value.is_finite());
    cands.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.m.cmp(&b.m)));
    if cands.first().is_some_and(|c| c.value <= 0.0) {
        return Err(Error::Eigen(format!(
            "non-positive eigenvalue {}",
            cands[0].value
        )));
    }
    let mut groups: Vec<Vec<Candidate>> = Vec::new();
    for c in cands {
        match groups.last_mut() {
            Some(g) if (c.value - g[0].value).abs() <= tol * g[0].value => g.push(c),
            _ => {
                if groups.len() == count + 1 {
                    break;
                }
                groups.push(vec![c]);
            }
        }
    }
    if groups.len() < count {
        return Err(Error::Eigen(format!(
            "requested {count} eigenvalues, grid supports {}",
            groups.len()
        )));
    }
    // the extra group only serves the ambiguity check
    let ambiguous = groups.windows(2).any(|w| {
        let hi = w[0].iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
        (w[1][0].value - hi) <= 10.0 * tol * hi
    });
    groups.truncate(count);
    let mut res = EigenResult {
        eigenvalues: Vec::new(),
        eigenfields: Vec::new(),
        multiplicities: Vec::new(),
        members: Vec::new(),
        cluster_tol: tol,
        ambiguous,
        symmetry_defect,
    };
    for g in groups {
        let mut fields = Vec::new();
        let mut members = Vec::new();
        for c in &g {
            for f in candidate_fields(grid, c) {
                members.push(c.value);
                fields.push(f);
            }
        }
        let fields = orthonormalize(fields);
        res.eigenvalues.push(members.iter().sum::<f64>() / members.len() as f64);
        res.multiplicities.push(fields.len());
        res.members.push(members);
        res.eigenfields.push(fields);
    }
    Ok(res)
}

/// Stabilized Gram-Schmidt followed by the sign convention: the first
/// significant component of the weighted vector is positive.
pub fn orthonormalize(fields: Vec<ScalarField>) -> Vec<ScalarField> {
    let mut out: Vec<ScalarField> = Vec::with_capacity(fields.len());
    for f in fields {
        let mut v = f;
        for _ in 0..2 {
            for q in &out {
                v = v.axpy(-v.inner(q), q);
            }
        }
        let n = v.l2_norm();
        if n > 0.0 {
            out.push(normalize_sign(&v.scale(1.0 / n)));
        }
    }
    out
}

fn normalize_sign(f: &ScalarField) -> ScalarField {
    let g = f.grid();
    let weighted: Vec<f64> = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * g.measure(i).sqrt())
        .collect();
    let big = weighted.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    match weighted.iter().find(|v| v.abs() > 1e-8 * big) {
        Some(v) if *v < 0.0 => f.scale(-1.0),
        _ => f.clone(),
    }
}

/// First `count` distinct zero-Dirichlet eigenvalues with eigenfields.
pub fn dirichlet_spectrum(ctx: &EllipticContext, count: usize) -> Result<EigenResult> {
    dirichlet_spectrum_with_tol(ctx, count, default_cluster_tol(ctx.grid()))
}

pub fn dirichlet_spectrum_with_tol(
    ctx: &EllipticContext,
    count: usize,
    tol: f64,
) -> Result<EigenResult> {
    check_count(count)?;
    let cands = dirichlet_candidates(ctx, count + 1, false);
    assemble(ctx.grid(), cands, count, tol, 0.0)
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidArgument("eigenvalue count must be >= 1".into()));
    }
    Ok(())
}

/// Dense matrix of `T` on radial profiles (mode 0), acting on values at the
/// ring centres.
pub(crate) fn radial_t_matrix(ctx: &EllipticContext) -> DMatrix<f64> {
    let g = ctx.grid();
    let nr = g.nr();
    let op = ctx.mode(0);
    let w: Vec<f64> = (0..nr).map(|j| g.ring_measure(j) * g.ntheta() as f64).collect();
    let area: f64 = w.iter().sum();
    let mut p = DMatrix::zeros(nr, nr);
    for col in 0..nr {
        let mut e = vec![0.0; nr];
        e[col] = 1.0;
        let u = op.solve_real(&e);
        for (row, val) in u.into_iter().enumerate() {
            p[(row, col)] = val;
        }
    }
    if ctx.inner_boundaries() == 1 {
        let z = ctx.zeta_profile(0);
        let q11 = ctx.q_matrix()[(0, 0)];
        for row in 0..nr {
            for col in 0..nr {
                p[(row, col)] += q11 * z[row] * z[col] * w[col];
            }
        }
    }
    // mean-free projection on both sides
    let mut proj = DMatrix::<f64>::identity(nr, nr);
    for row in 0..nr {
        for col in 0..nr {
            proj[(row, col)] -= w[col] / area;
        }
    }
    &proj * p * &proj
}

/// First `count` distinct constrained eigenvalues `L_k = 1 / mu_k` with
/// vorticity-side eigenfields.
pub fn constrained_spectrum(ctx: &EllipticContext, count: usize) -> Result<EigenResult> {
    constrained_spectrum_with_tol(ctx, count, default_cluster_tol(ctx.grid()))
}

pub fn constrained_spectrum_with_tol(
    ctx: &EllipticContext,
    count: usize,
    tol: f64,
) -> Result<EigenResult> {
    check_count(count)?;
    let g = ctx.grid();
    let nr = g.nr();
    let r = g.r_centers();
    let t = radial_t_matrix(ctx);
    let sq: Vec<f64> = r.iter().map(|x| x.sqrt()).collect();
    let mut s = DMatrix::zeros(nr, nr);
    for row in 0..nr {
        for col in 0..nr {
            s[(row, col)] = sq[row] * t[(row, col)] / sq[col];
        }
    }
    let asym = (&s - s.transpose()).norm();
    let symmetry_defect = asym / s.norm().max(f64::MIN_POSITIVE);
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue in radial block".into()));
    }
    // direction of the constants in the weighted space is the null vector
    let norm = sq.iter().map(|y| y * y).sum::<f64>().sqrt();
    let ones: Vec<f64> = sq.iter().map(|x| x / norm).collect();
    let null = (0..nr)
        .max_by(|&a, &b| {
            let oa: f64 = eig.eigenvectors.column(a).iter().zip(&ones).map(|(x, y)| x * y).sum();
            let ob: f64 = eig.eigenvectors.column(b).iter().zip(&ones).map(|(x, y)| x * y).sum();
            oa.abs().total_cmp(&ob.abs())
        })
        .ok_or_else(|| Error::Eigen("empty radial block".into()))?;
    let mut cands: Vec<Candidate> = (0..nr)
        .filter(|&i| i != null && eig.eigenvalues[i] > 0.0)
        .map(|i| Candidate {
            value: 1.0 / eig.eigenvalues[i],
            m: 0,
            profile: eig.eigenvectors.column(i).iter().zip(r).map(|(y, rj)| y / rj.sqrt()).collect(),
        })
        .collect();
    cands.extend(dirichlet_candidates(ctx, count + 1, true));
    assemble(g, cands, count, tol, symmetry_defect)
}

/// `Lambda_1`: smallest Rayleigh quotient over fields vanishing on the outer
/// circle and constant (free) on the inner one; on the disk this is the
/// first Dirichlet eigenvalue.
pub fn lambda_cap1(ctx: &EllipticContext) -> Result<f64> {
    Ok(lambda_cap1_pair(ctx)?.0)
}

/// `Lambda_1` and its (radial) minimizer.
pub fn lambda_cap1_pair(ctx: &EllipticContext) -> Result<(f64, ScalarField)> {
    let g = ctx.grid();
    let nr = g.nr();
    let r = g.r_centers();
    let h = g.dr();
    // stiffness of the radial Dirichlet form with the inner constant c as an
    // extra unknown, divided by the ring weights r_j h
    let mut k = DMatrix::zeros(nr + 1, nr + 1);
    for j in 0..nr {
        let rout = g.r_face(j + 1);
        if j + 1 < nr {
            let s = rout / h;
            k[(j, j)] += s;
            k[(j + 1, j + 1)] += s;
            k[(j, j + 1)] -= s;
            k[(j + 1, j)] -= s;
        } else {
            k[(j, j)] += 2.0 * rout / h;
        }
    }
    let c = nr;
    if g.is_disk() {
        k[(c, c)] = 1.0;
    } else {
        let s = 2.0 * g.a() / h;
        k[(0, 0)] += s;
        k[(c, c)] += s;
        k[(0, c)] -= s;
        k[(c, 0)] -= s;
    }
    // Schur complement eliminates the massless constant
    let kcc = k[(c, c)];
    let mut ks = DMatrix::zeros(nr, nr);
    for i in 0..nr {
        for j in 0..nr {
            ks[(i, j)] = k[(i, j)] - k[(i, c)] * k[(c, j)] / kcc;
        }
    }
    let mut s = DMatrix::zeros(nr, nr);
    for i in 0..nr {
        for j in 0..nr {
            s[(i, j)] = ks[(i, j)] / ((r[i] * h).sqrt() * (r[j] * h).sqrt());
        }
    }
    let eig = SymmetricEigen::new(s);
    let pairs = unweight(&eig, r);
    let (radial_val, radial_prof) = pairs
        .into_iter()
        .next()
        .ok_or_else(|| Error::Eigen("empty radial block".into()))?;
    let higher = mode_pairs(ctx, 1)[0].0;
    if higher < radial_val {
        return Err(Error::Eigen(format!(
            "first-mode value {higher} below radial value {radial_val}"
        )));
    }
    let f = orthonormalize(vec![radial_field(g, &radial_prof)]).remove(0);
    Ok((radial_val, f))
}

/// Which form of the Poincare-type inequality to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
pub enum Inequality {
    /// `L1 int u^2 <= int |grad u|^2` for mean-free `u` with constant traces.
    X,
    /// The same inequality on the smaller space with zero boundary fluxes.
    Y,
    /// `int |grad u|^2 <= (1 / L1) int (Lap u)^2` on the flux-free space.
    Gradient,
}

#[derive(Debug, Clone, Serialize)]
pub struct RayleighReport {
    pub which: Inequality,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`, nonnegative when the inequality holds.
    pub defect: f64,
    pub equality: bool,
    pub traces: Vec<f64>,
    pub lambda1: f64,
}

/// Evaluates the inequality for `u` against a precomputed constrained
/// spectrum.
pub fn rayleigh_check_with(
    ctx: &EllipticContext,
    spectrum: &EigenResult,
    u: &ScalarField,
    which: Inequality,
) -> Result<RayleighReport> {
    let lambda1 = spectrum.eigenvalues[0];
    let traces = check_membership(ctx, u, which)?;
    let grad = ctx.dirichlet_form(u, &traces)?;
    let mass = u.inner(u);
    let (lhs, rhs) = match which {
        Inequality::X | Inequality::Y => (lambda1 * mass, grad),
        Inequality::Gradient => {
            let lap = ctx.neg_laplacian(u, &traces)?;
            (grad, lap.inner(&lap) / lambda1)
        }
    };
    let defect = rhs - lhs;
    let scale = lhs.abs().max(rhs.abs());
    let tol = BASE_CLUSTER_TOL.max(2.0 * spectrum.spread(0));
    Ok(RayleighReport {
        which,
        lhs,
        rhs,
        defect,
        equality: defect.abs() <= tol * scale,
        traces,
        lambda1,
    })
}

pub fn rayleigh_check(
    ctx: &EllipticContext,
    u: &ScalarField,
    which: Inequality,
) -> Result<RayleighReport> {
    let spec = constrained_spectrum(ctx, 1)?;
    rayleigh_check_with(ctx, &spec, u, which)
}

/// Constant boundary values of `u`. For the flux-free space these are the
/// boundary ring means (the values that make the discrete flux vanish); for
/// the larger space they are extrapolated. Violations are reported.
pub fn check_membership(ctx: &EllipticContext, u: &ScalarField, which: Inequality) -> Result<Vec<f64>> {
    let g = ctx.grid();
    let scale = u.max_abs();
    if scale == 0.0 {
        return Ok(vec![0.0; ctx.boundaries()]);
    }
    let mean = u.mean();
    if mean.abs() > 1e-8 * scale {
        return Err(Error::Membership(format!("mean {mean:e} is not zero")));
    }
    let mut traces = Vec::with_capacity(ctx.boundaries());
    for i in 0..ctx.boundaries() {
        let ext = ctx.extrapolate_trace(u, i)?;
        let avg = ext.iter().sum::<f64>() / ext.len() as f64;
        let dev = ext.iter().fold(0.0f64, |m, v| m.max((v - avg).abs()));
        if dev > 1e-2 * scale {
            return Err(Error::Membership(format!(
                "trace on boundary {i} varies by {dev:e}"
            )));
        }
        let trace = match which {
            Inequality::X => avg,
            Inequality::Y | Inequality::Gradient => {
                let ring = if i == 0 { g.nr() - 1 } else { 0 };
                let vals = u.ring(ring);
                let flux = ctx.boundary_flux(u, i)?;
                let perimeter = 2.0 * std::f64::consts::PI * if i == 0 { 1.0 } else { g.a() };
                if flux.abs() > 1e-2 * perimeter * scale {
                    return Err(Error::Membership(format!(
                        "flux through boundary {i} is {flux:e}"
                    )));
                }
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        traces.push(trace);
    }
    Ok(traces)
}

/// Largest principal angle between the spans of two orthonormal families.
pub fn subspace_angle(a: &[ScalarField], b: &[ScalarField]) -> f64 {
    let m = DMatrix::from_fn(a.len(), b.len(), |i, j| a[i].inner(&b[j]));
    let sv = m.singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    if a.len() != b.len() {
        return std::f64::consts::FRAC_PI_2;
    }
    smin.acos()
}

/// `L_1 - Lambda_1` on one grid.
pub fn threshold_margin(ctx: &EllipticContext) -> Result<(f64, f64, f64)> {
    let big = constrained_spectrum(ctx, 1)?.eigenvalues[0];
    let cap = lambda_cap1(ctx)?;
    Ok((big, cap, big - cap))
}
