//! Bessel functions `J0`, `J1`, their first zeros, and the disk reference
//! fields built from them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{GridRef, ScalarField};

/// Switch from the power series to Miller's backward recurrence.
const SERIES_LIMIT: f64 = 12.0;

/// First positive zeros of `J0` and `J1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselTable {
    pub j01: f64,
    pub j11: f64,
    pub tolerance: f64,
}

impl BesselTable {
    pub fn new() -> Self {
        let tolerance = 1e-13;
        let j01 = find_zero(0, 2.0, 3.0).expect("J0 changes sign on [2, 3]");
        let j11 = find_zero(1, 3.0, 4.5).expect("J1 changes sign on [3, 4.5]");
        Self { j01, j11, tolerance }
    }
}

impl Default for BesselTable {
    fn default() -> Self {
        Self::new()
    }
}

/// `J0(j01)`-based constants are used all over; compute them once.
pub fn table() -> &'static BesselTable {
    use std::sync::OnceLock;
    static TABLE: OnceLock<BesselTable> = OnceLock::new();
    TABLE.get_or_init(BesselTable::new)
}

/// Bessel function of the first kind of integer order `n`.
pub fn bessel_j(n: u32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("argument must be finite, got {x}")));
    }
    let sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let x = x.abs();
    Ok(sign * if x <= SERIES_LIMIT { series(n, x) } else { miller(n, x) })
}

pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        series(0, x)
    } else {
        miller(0, x)
    }
}

pub fn j1(x: f64) -> f64 {
    let s = x.signum();
    let x = x.abs();
    s * if x <= SERIES_LIMIT { series(1, x) } else { miller(1, x) }
}

fn series(n: u32, x: f64) -> f64 {
    let h = 0.5 * x;
    let h2 = h * h;
    let mut term = (1..=n).fold(1.0, |t, i| t * h / i as f64);
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -h2 / (k * (k + n as f64));
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) || k > 200.0 {
            return sum;
        }
    }
}

/// Backward recurrence normalised by `J0 + 2 sum J_2k = 1`.
fn miller(n: u32, x: f64) -> f64 {
    let n = n as usize;
    let start = 2 * ((x + n as f64 + 20.0 + (40.0 * x).sqrt()) as usize / 2);
    let (mut jp1, mut j) = (0.0_f64, 1e-30_f64);
    let mut jn = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            jn *= 1e-250;
        }
        // j now holds J_{k-1}
        if k - 1 == n {
            jn = j;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * j;
        }
    }
    // the loop ends with j = J_0
    norm += j;
    jn / norm
}

/// First `count` positive zeros of `J_n`, located by a sign scan from `n`
/// and refined by bisection.
pub fn zeros(n: u32, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let step = 0.1;
    let mut x = (n as f64).max(step);
    let mut fx = bessel_j(n, x)?;
    while out.len() < count {
        let y = x + step;
        let fy = bessel_j(n, y)?;
        if fx == 0.0 || fx.signum() != fy.signum() {
            out.push(find_zero(n, x, y)?);
        }
        x = y;
        fx = fy;
    }
    Ok(out)
}

/// Zero of `J_n` inside `[lo, hi]` by bisection, to `1e-13`.
pub fn find_zero(n: u32, lo: f64, hi: f64) -> Result<f64> {
    let f = |x: f64| bessel_j(n, x);
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { order: n, lo, hi });
    }
    while b - a > 1e-14 {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre quadrature with 64 panels of 8 nodes (512 nodes).
pub fn composite_gauss(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const PANELS: usize = 64;
    const ORDER: usize = 8;
    let (x, w) = gauss_legendre(ORDER);
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * h;
            x.iter()
                .zip(&w)
                .map(|(xi, wi)| wi * f(mid + 0.5 * h * xi))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

/// `int_0^1 J0(j11 r) r^3 dr`, the radial weight coupling the `J0(j11 r)`
/// component of a vorticity field to its moment of inertia.
pub fn radial_moment_integral() -> f64 {
    let k = table().j11;
    composite_gauss(|r| j0(k * r) * r.powi(3), 0.0, 1.0)
}

/// The same integral after substitution and integration by parts:
/// `-(2 / j11^4) int_0^j11 J1(s) s^2 ds`.
pub fn radial_moment_transformed() -> f64 {
    let k = table().j11;
    -2.0 / k.powi(4) * composite_gauss(|s| j1(s) * s * s, 0.0, k)
}

/// The three fields `J0(j11 r)`, `J1(j11 r) sin(theta)`, `J1(j11 r) cos(theta)`
/// spanning the first constrained eigenspace of the disk, made exactly
/// mean-free on the grid and orthonormalised.
pub fn e1_basis(grid: &GridRef) -> Result<[ScalarField; 3]> {
    if !grid.is_disk() {
        return Err(Error::InvalidGrid("E1 basis is only defined on the disk".into()));
    }
    let k = table().j11;
    let radial = ScalarField::radial(grid, |r| j0(k * r));
    let radial = radial.add_constant(-radial.mean());
    let sin = ScalarField::from_fn(grid, |r, t| j1(k * r) * t.sin());
    let cos = ScalarField::from_fn(grid, |r, t| j1(k * r) * t.cos());
    let [a, b, c] = gram_schmidt([radial, sin, cos]);
    Ok([a, b, c])
}

/// Modified Gram-Schmidt under the grid inner product.
pub fn gram_schmidt<const N: usize>(fields: [ScalarField; N]) -> [ScalarField; N] {
    let mut out: Vec<ScalarField> = Vec::with_capacity(N);
    for f in fields {
        let mut v = f;
        for _ in 0..2 {
            for q in &out {
                let c = v.inner(q);
                v = v.axpy(-c, q);
            }
        }
        let n = v.l2_norm();
        out.push(v.scale(1.0 / n));
    }
    out.try_into().expect("length preserved")
}
