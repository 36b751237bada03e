//! Discrete elliptic operators on the disk and annulus: the zero-Dirichlet
//! inverse Laplacian, harmonic measures, the circulation-corrected Green
//! operator `P`, the mean-free operator `T`, the vorticity/circulation
//! solver, boundary fluxes and the kinetic energy.
//!
//! The Laplacian is discretised per angular Fourier mode with a conservative
//! second-order finite-volume stencil in `r`. Boundary values enter through
//! reflected ghost cells (`u_ghost = 2c - u_cell`); on the disk the innermost
//! face has zero length, so the pole needs no closure beyond that. Boundary
//! index 0 is the outer circle, index 1 the inner circle of an annulus.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{radial_field, ring_means, RingFft};
use crate::grid::{GridRef, ScalarField};

/// Circulations around the inner boundary components.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct CirculationVector(pub Vec<f64>);

impl CirculationVector {
    pub fn none() -> Self {
        Self(Vec::new())
    }
    pub fn single(g: f64) -> Self {
        Self(vec![g])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }
}

/// Symmetric tridiagonal-in-`r` operator of one angular mode.
#[derive(Debug, Clone)]
pub(crate) struct RadialOperator {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    cprime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl RadialOperator {
    fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        let mut cprime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        let mut prev_c = 0.0;
        for j in 0..n {
            let l = if j > 0 { lower[j] } else { 0.0 };
            let d = diag[j] - l * prev_c;
            inv_denom[j] = 1.0 / d;
            cprime[j] = if j + 1 < n { upper[j] * inv_denom[j] } else { 0.0 };
            prev_c = cprime[j];
        }
        Self {
            lower,
            diag,
            upper,
            cprime,
            inv_denom,
        }
    }

    /// Thomas solve on a strided complex column.
    fn solve_strided(&self, buf: &mut [Complex64], offset: usize, stride: usize) {
        let n = self.diag.len();
        let mut prev = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let idx = offset + j * stride;
            let l = if j > 0 { self.lower[j] } else { 0.0 };
            let val = (buf[idx] - prev * l) * self.inv_denom[j];
            buf[idx] = val;
            prev = val;
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let idx = offset + j * stride;
            let next = buf[idx + stride];
            buf[idx] -= next * self.cprime[j];
        }
    }

    pub fn solve_real(&self, rhs: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.solve_strided(&mut buf, 0, 1);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// `W^(1/2) A W^(-1/2)` with `W = diag(r_j)`, a symmetric matrix.
    pub fn symmetrized(&self, r: &[f64]) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m[(j, j)] = self.diag[j];
            if j + 1 < n {
                let s = (r[j] / r[j + 1]).sqrt() * self.upper[j];
                m[(j, j + 1)] = s;
                m[(j + 1, j)] = s;
            }
        }
        m
    }
}

/// Constant boundary value and the solution with it, split off from the
/// interior values.
#[derive(Debug, Clone)]
pub struct StreamFunction {
    pub field: ScalarField,
    /// Constant boundary values, outer circle first.
    pub traces: Vec<f64>,
}

/// Assembled operators for one grid. Immutable once built.
#[derive(Debug, Clone)]
pub struct EllipticContext {
    grid: GridRef,
    fft: RingFft,
    modes: Vec<RadialOperator>,
    /// Ghost coupling `2 r_b / (r_j dr^2)` into the first / last ring.
    inner_coupling: f64,
    outer_coupling: f64,
    zeta: Vec<ScalarField>,
    zeta_profiles: Vec<Vec<f64>>,
    p_matrix: DMatrix<f64>,
    q_matrix: DMatrix<f64>,
}

pub const SOLVER_TOL: f64 = 1e-12;

impl EllipticContext {
    pub fn new(grid: &GridRef) -> Result<Self> {
        build_context(grid)
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }
    pub fn zeta(&self) -> &[ScalarField] {
        &self.zeta
    }
    pub fn p_matrix(&self) -> &DMatrix<f64> {
        &self.p_matrix
    }
    pub fn q_matrix(&self) -> &DMatrix<f64> {
        &self.q_matrix
    }
    pub(crate) fn fft(&self) -> &RingFft {
        &self.fft
    }
    pub fn inner_boundaries(&self) -> usize {
        self.grid.inner_boundaries()
    }
    pub fn boundaries(&self) -> usize {
        1 + self.inner_boundaries()
    }

    /// Radial operator for angular wavenumber `|m|`.
    pub(crate) fn mode(&self, m: usize) -> &RadialOperator {
        &self.modes[m]
    }
    pub(crate) fn zeta_profile(&self, i: usize) -> &[f64] {
        &self.zeta_profiles[i]
    }

    fn check(&self, v: &ScalarField) -> Result<()> {
        if !self.grid.same_shape(v.grid()) {
            return Err(Error::GridMismatch("field is not on the context grid".into()));
        }
        Ok(())
    }

    fn check_gamma(&self, gamma: &CirculationVector) -> Result<()> {
        if gamma.len() != self.inner_boundaries() {
            return Err(Error::InvalidArgument(format!(
                "circulation vector has length {}, domain has {} inner boundaries",
                gamma.len(),
                self.inner_boundaries()
            )));
        }
        Ok(())
    }

    /// Solves `-Lu = v` with the given constant boundary values.
    pub fn solve_with_traces(&self, v: &ScalarField, traces: &[f64]) -> Result<ScalarField> {
        self.check(v)?;
        let n = self.grid.ntheta();
        let nr = self.grid.nr();
        let mut buf = Vec::with_capacity(self.grid.len());
        self.fft.forward_all(v.values(), &mut buf);
        let c_outer = traces.first().copied().unwrap_or(0.0);
        let c_inner = traces.get(1).copied().unwrap_or(0.0);
        buf[(nr - 1) * n] += Complex64::new(self.outer_coupling * c_outer * n as f64, 0.0);
        if !self.grid.is_disk() {
            buf[0] += Complex64::new(self.inner_coupling * c_inner * n as f64, 0.0);
        }
        for i in 0..n {
            let m = self.fft.wavenumber(i).unsigned_abs() as usize;
            self.modes[m].solve_strided(&mut buf, i, n);
        }
        let mut out = vec![0.0; self.grid.len()];
        self.fft.inverse_all(&mut buf, &mut out);
        let u = ScalarField::from_parts(self.grid.clone(), out);
        if !u.is_finite() {
            return Err(Error::SolveFailed { residual: f64::NAN });
        }
        Ok(u)
    }

    /// `Gv`: inverse of `-Laplacian` with zero boundary values.
    pub fn dirichlet_solve(&self, v: &ScalarField) -> Result<ScalarField> {
        self.solve_with_traces(v, &[])
    }

    /// Discrete `-Laplacian u` given the constant boundary values of `u`.
    pub fn neg_laplacian(&self, u: &ScalarField, traces: &[f64]) -> Result<ScalarField> {
        self.check(u)?;
        let g = &self.grid;
        let n = g.ntheta();
        let nr = g.nr();
        let angular = self
            .fft
            .apply_multiplier(u.values(), |m| Complex64::new((m * m) as f64, 0.0));
        let h2 = g.dr() * g.dr();
        let c_outer = traces.first().copied().unwrap_or(0.0);
        let c_inner = traces.get(1).copied().unwrap_or(0.0);
        let uv = u.values();
        let mut out = vec![0.0; g.len()];
        for j in 0..nr {
            let r = g.r(j);
            let rin = g.r_face(j);
            let rout = g.r_face(j + 1);
            for k in 0..n {
                let idx = j * n + k;
                let uc = uv[idx];
                let outer_flux = if j + 1 < nr {
                    rout * (uv[idx + n] - uc)
                } else {
                    rout * 2.0 * (c_outer - uc)
                };
                let inner_flux = if j > 0 {
                    rin * (uc - uv[idx - n])
                } else if g.is_disk() {
                    0.0
                } else {
                    rin * 2.0 * (uc - c_inner)
                };
                out[idx] = -(outer_flux - inner_flux) / (r * h2) + angular[idx] / (r * r);
            }
        }
        Ok(ScalarField::from_parts(g.clone(), out))
    }

    /// `Pv = Gv + sum q_ij (int v zeta_i) zeta_j`.
    pub fn apply_p(&self, v: &ScalarField) -> Result<ScalarField> {
        let mut u = self.dirichlet_solve(v)?;
        let nb = self.inner_boundaries();
        let moments: Vec<f64> = self.zeta.iter().map(|z| v.inner(z)).collect();
        for j in 0..nb {
            let c: f64 = (0..nb).map(|i| self.q_matrix[(i, j)] * moments[i]).sum();
            u = u.axpy(c, &self.zeta[j]);
        }
        Ok(u)
    }

    /// `h_gamma = -sum q_ij gamma_i zeta_j`.
    pub fn h_gamma(&self, gamma: &CirculationVector) -> Result<ScalarField> {
        self.check_gamma(gamma)?;
        let mut h = ScalarField::zeros(&self.grid);
        let nb = self.inner_boundaries();
        for j in 0..nb {
            let c: f64 = (0..nb).map(|i| self.q_matrix[(i, j)] * gamma.0[i]).sum();
            h = h.axpy(-c, &self.zeta[j]);
        }
        Ok(h)
    }

    /// Boundary values of `Pv + h_gamma` (zero on the outer circle).
    fn p_traces(&self, v: &ScalarField, gamma: &CirculationVector) -> Vec<f64> {
        let nb = self.inner_boundaries();
        let mut traces = vec![0.0];
        for j in 0..nb {
            let c: f64 = (0..nb)
                .map(|i| self.q_matrix[(i, j)] * (v.inner(&self.zeta[i]) - gamma.0[i]))
                .sum();
            traces.push(c);
        }
        traces
    }

    /// `Tv = Pv - mean(Pv)` on mean-free `v`.
    pub fn apply_t(&self, v: &ScalarField) -> Result<ScalarField> {
        Ok(self.apply_t_full(v)?.field)
    }

    pub fn apply_t_full(&self, v: &ScalarField) -> Result<StreamFunction> {
        let m = v.mean();
        if m.abs() > 1e-10 * v.max_abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "T acts on mean-free fields, mean = {m:e}"
            )));
        }
        self.solve_vcp_full(v, &CirculationVector::zeros(self.inner_boundaries()))
    }

    /// Unique mean-free `psi` with `-Laplacian psi = v`, constant boundary
    /// values and boundary fluxes `-gamma_i` on the inner circles.
    pub fn solve_vcp(&self, v: &ScalarField, gamma: &CirculationVector) -> Result<ScalarField> {
        Ok(self.solve_vcp_full(v, gamma)?.field)
    }

    pub fn solve_vcp_full(
        &self,
        v: &ScalarField,
        gamma: &CirculationVector,
    ) -> Result<StreamFunction> {
        self.check_gamma(gamma)?;
        let u = self.apply_p(v)?.axpy(1.0, &self.h_gamma(gamma)?);
        let a = u.mean();
        let traces = self.p_traces(v, gamma).into_iter().map(|c| c - a).collect();
        Ok(StreamFunction {
            field: u.add_constant(-a),
            traces,
        })
    }

    /// Outward flux `int dU/dn dS` over boundary `i` from a second-order
    /// one-sided difference on the three nearest rings (no trace needed).
    pub fn boundary_flux(&self, u: &ScalarField, i: usize) -> Result<f64> {
        self.check(u)?;
        let (rings, r_b) = self.boundary_rings(i)?;
        let h = self.grid.dr();
        let means: Vec<f64> = rings.iter().map(|&j| ring_means(u)[j]).collect();
        // derivative along the inward coordinate s, nodes at h/2, 3h/2, 5h/2
        let du_ds = (-2.0 * means[0] + 3.0 * means[1] - means[2]) / h;
        Ok(-du_ds * r_b * 2.0 * std::f64::consts::PI)
    }

    /// Quadratic extrapolation of `u` to boundary `i`, one value per angle.
    pub fn extrapolate_trace(&self, u: &ScalarField, i: usize) -> Result<Vec<f64>> {
        self.check(u)?;
        let (rings, _) = self.boundary_rings(i)?;
        let n = self.grid.ntheta();
        Ok((0..n)
            .map(|k| {
                15.0 / 8.0 * u.get(rings[0], k) - 1.25 * u.get(rings[1], k)
                    + 3.0 / 8.0 * u.get(rings[2], k)
            })
            .collect())
    }

    /// Flux through boundary `i` consistent with the discrete operator, for a
    /// field with known constant boundary values.
    pub fn conservative_flux(&self, u: &ScalarField, traces: &[f64], i: usize) -> Result<f64> {
        self.check(u)?;
        let (rings, r_b) = self.boundary_rings(i)?;
        let c = traces.get(i).copied().unwrap_or(0.0);
        let g = &self.grid;
        let s: f64 = u.ring(rings[0]).iter().map(|&v| c - v).sum();
        Ok(s * r_b * g.dtheta() * 2.0 / g.dr())
    }

    fn boundary_rings(&self, i: usize) -> Result<([usize; 3], f64)> {
        let nr = self.grid.nr();
        match i {
            0 => Ok(([nr - 1, nr - 2, nr - 3], 1.0)),
            1 if !self.grid.is_disk() => Ok(([0, 1, 2], self.grid.a())),
            _ => Err(Error::InvalidArgument(format!(
                "boundary index {i} out of range for a domain with {} boundaries",
                self.boundaries()
            ))),
        }
    }

    /// Discrete Dirichlet integral `int |grad u|^2` given constant boundary
    /// values; matches the operator through summation by parts.
    pub fn dirichlet_form(&self, u: &ScalarField, traces: &[f64]) -> Result<f64> {
        self.check(u)?;
        let g = &self.grid;
        let n = g.ntheta();
        let nr = g.nr();
        let h = g.dr();
        let dth = g.dtheta();
        let angular = self
            .fft
            .apply_multiplier(u.values(), |m| Complex64::new((m * m) as f64, 0.0));
        let uv = u.values();
        let c_outer = traces.first().copied().unwrap_or(0.0);
        let c_inner = traces.get(1).copied().unwrap_or(0.0);
        let mut radial = 0.0;
        let mut ang = 0.0;
        for j in 0..nr {
            let r = g.r(j);
            for k in 0..n {
                let idx = j * n + k;
                ang += uv[idx] * angular[idx] * h * dth / r;
                if j + 1 < nr {
                    let d = uv[idx + n] - uv[idx];
                    radial += g.r_face(j + 1) * d * d / h * dth;
                } else {
                    let d = c_outer - uv[idx];
                    radial += g.r_face(nr) * d * d / (0.5 * h) * dth;
                }
                if j == 0 && !g.is_disk() {
                    let d = uv[idx] - c_inner;
                    radial += g.r_face(0) * d * d / (0.5 * h) * dth;
                }
            }
        }
        Ok(radial + ang)
    }

    /// `E = 1/2 int v Pv + int h_gamma v + 1/2 sum q_ij gamma_i gamma_j`.
    pub fn energy(&self, v: &ScalarField, gamma: &CirculationVector) -> Result<f64> {
        self.check_gamma(gamma)?;
        let pv = self.apply_p(v)?;
        let h = self.h_gamma(gamma)?;
        let nb = self.inner_boundaries();
        let mut quad = 0.0;
        for i in 0..nb {
            for j in 0..nb {
                quad += self.q_matrix[(i, j)] * gamma.0[i] * gamma.0[j];
            }
        }
        Ok(0.5 * v.inner(&pv) + h.inner(v) + 0.5 * quad)
    }

    /// `1/2 int |grad psi|^2` of the stream function of `(v, gamma)`.
    pub fn kinetic_energy(&self, v: &ScalarField, gamma: &CirculationVector) -> Result<f64> {
        let s = self.solve_vcp_full(v, gamma)?;
        Ok(0.5 * self.dirichlet_form(&s.field, &s.traces)?)
    }

    pub fn moment_of_inertia(&self, f: &ScalarField) -> f64 {
        f.moment_of_inertia()
    }
}

/// Assembles the per-mode radial operators, the harmonic measures and the
/// circulation matrices.
pub fn build_context(grid: &GridRef) -> Result<EllipticContext> {
    let g = grid;
    let nr = g.nr();
    let n = g.ntheta();
    let h2 = g.dr() * g.dr();
    let mut modes = Vec::with_capacity(n / 2 + 1);
    for m in 0..=n / 2 {
        let mut lower = vec![0.0; nr];
        let mut diag = vec![0.0; nr];
        let mut upper = vec![0.0; nr];
        for j in 0..nr {
            let r = g.r(j);
            let rin = g.r_face(j);
            let rout = g.r_face(j + 1);
            let mut d = (m * m) as f64 / (r * r);
            if j + 1 < nr {
                d += rout / (r * h2);
                upper[j] = -rout / (r * h2);
            } else {
                d += 2.0 * rout / (r * h2);
            }
            if j > 0 {
                d += rin / (r * h2);
                lower[j] = -rin / (r * h2);
            } else if !g.is_disk() {
                d += 2.0 * rin / (r * h2);
            }
            diag[j] = d;
        }
        modes.push(RadialOperator::new(lower, diag, upper));
    }
    let outer_coupling = 2.0 / (g.r(nr - 1) * h2);
    let inner_coupling = if g.is_disk() { 0.0 } else { 2.0 * g.a() / (g.r(0) * h2) };

    let nb = g.inner_boundaries();
    let mut zeta_profiles = Vec::with_capacity(nb);
    let mut zeta = Vec::with_capacity(nb);
    if nb == 1 {
        let mut rhs = vec![0.0; nr];
        rhs[0] = inner_coupling;
        let prof = modes[0].solve_real(&rhs);
        zeta.push(radial_field(g, &prof));
        zeta_profiles.push(prof);
    }
    let mut ctx = EllipticContext {
        grid: g.clone(),
        fft: RingFft::new(n),
        modes,
        inner_coupling,
        outer_coupling,
        zeta,
        zeta_profiles,
        p_matrix: DMatrix::zeros(nb, nb),
        q_matrix: DMatrix::zeros(nb, nb),
    };
    let mut p = DMatrix::zeros(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            // int grad zeta_i . grad zeta_j by polarisation of the Dirichlet form
            let ti = unit_traces(nb, i);
            let tj = unit_traces(nb, j);
            let sum_tr: Vec<f64> = ti.iter().zip(&tj).map(|(a, b)| a + b).collect();
            let zsum = ctx.zeta[i].axpy(1.0, &ctx.zeta[j]);
            let a = ctx.dirichlet_form(&zsum, &sum_tr)?;
            let b = ctx.dirichlet_form(&ctx.zeta[i], &ti)?;
            let c = ctx.dirichlet_form(&ctx.zeta[j], &tj)?;
            p[(i, j)] = 0.5 * (a - b - c);
        }
    }
    let q = if nb == 0 {
        DMatrix::zeros(0, 0)
    } else {
        let det = p.determinant();
        p.clone()
            .try_inverse()
            .filter(|_| det.abs() > 1e-300)
            .ok_or(Error::SingularCirculationMatrix(det))?
    };
    ctx.p_matrix = p;
    ctx.q_matrix = q;
    Ok(ctx)
}

fn unit_traces(nb: usize, i: usize) -> Vec<f64> {
    let mut t = vec![0.0; nb + 1];
    t[i + 1] = 1.0;
    t
}
