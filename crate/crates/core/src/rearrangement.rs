//! Distribution functions, equimeasurability, monotone rearrangement, the
//! nearest element of a rearrangement class, and energy ascent over a class.
//!
//! Polar cells have unequal measures, so permuting cell values does not
//! preserve the distribution. A rearrangement is instead a monotone transport
//! of the source quantile function onto cells sorted by an order field; a
//! cell straddling two source values receives one fragment of each. The
//! fragments keep the class exact, and the cell averages give the field that
//! the elliptic operators see.

use serde::Serialize;

use crate::elliptic::{CirculationVector, EllipticContext};
use crate::error::{Error, Result};
use crate::grid::{GridRef, ScalarField};

/// Values with measures, sorted increasingly by `(value, cell index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellList {
    entries: Vec<(f64, f64)>,
    total: f64,
}

impl CellList {
    pub fn from_field(f: &ScalarField) -> Self {
        let g = f.grid();
        let pairs = f
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, g.measure(i)))
            .collect();
        Self::from_pairs(pairs)
    }

    /// From unsorted `(value, measure)` pairs; order of equal values is kept.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = pairs.iter().map(|p| p.1).sum();
        Self {
            entries: pairs,
            total,
        }
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }
    pub fn total_measure(&self) -> f64 {
        self.total
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Measure of `{value > s}`.
    pub fn distribution(&self, s: f64) -> f64 {
        let start = self.entries.partition_point(|e| e.0 <= s);
        self.entries[start..].iter().map(|e| e.1).sum()
    }

    /// `int |Q_self - Q_other| dm` over the common measure interval, where
    /// `Q` are the right-continuous quantile functions.
    pub fn quantile_l1(&self, other: &CellList) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (
            a.first().map_or(0.0, |e| e.1),
            b.first().map_or(0.0, |e| e.1),
        );
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            let step = ra.min(rb);
            acc += (a[i].0 - b[j].0).abs() * step;
            ra -= step;
            rb -= step;
            if ra <= 0.0 {
                i += 1;
                ra = a.get(i).map_or(0.0, |e| e.1);
            }
            if rb <= 0.0 {
                j += 1;
                rb = b.get(j).map_or(0.0, |e| e.1);
            }
        }
        acc
    }
}

/// Measure of `{f > s}`.
pub fn distribution(f: &ScalarField, s: f64) -> f64 {
    let g = f.grid();
    f.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > s)
        .map(|(i, _)| g.measure(i))
        .sum()
}

/// Relative tolerance on total measures when comparing classes.
const MEASURE_TOL: f64 = 1e-12;

/// Quantile comparison of two distributions; unequal total measures are an
/// error rather than a mismatch.
pub fn equimeasurable_lists(f: &CellList, g: &CellList, tol: f64) -> Result<bool> {
    let (mf, mg) = (f.total_measure(), g.total_measure());
    if (mf - mg).abs() > MEASURE_TOL * mf.max(mg) {
        return Err(Error::InvalidArgument(format!(
            "total measures differ: {mf} vs {mg}"
        )));
    }
    Ok(f.quantile_l1(g) <= tol)
}

pub fn equimeasurable(f: &ScalarField, g: &ScalarField, tol: f64) -> Result<bool> {
    equimeasurable_lists(&CellList::from_field(f), &CellList::from_field(g), tol)
}

/// A member of a discretized rearrangement class: per-cell fragments of the
/// source distribution.
#[derive(Debug, Clone)]
pub struct Rearranged {
    grid: GridRef,
    /// `(cell, value, measure)`, grouped by cell in order of increasing `order`.
    fragments: Vec<(usize, f64, f64)>,
}

impl Rearranged {
    /// Identity arrangement of a field.
    pub fn identity(f: &ScalarField) -> Self {
        let g = f.grid();
        Self {
            grid: g.clone(),
            fragments: f
                .values()
                .iter()
                .enumerate()
                .map(|(i, &v)| (i, v, g.measure(i)))
                .collect(),
        }
    }

    pub fn fragments(&self) -> &[(usize, f64, f64)] {
        &self.fragments
    }

    /// Cell averages of the fragments.
    pub fn to_field(&self) -> ScalarField {
        let mut vals = vec![0.0; self.grid.len()];
        for &(c, v, m) in &self.fragments {
            vals[c] += v * m;
        }
        for (i, v) in vals.iter_mut().enumerate() {
            *v /= self.grid.measure(i);
        }
        ScalarField::from_parts(self.grid.clone(), vals)
    }

    pub fn cell_list(&self) -> CellList {
        CellList::from_pairs(self.fragments.iter().map(|f| (f.1, f.2)).collect())
    }

    /// `int f * order` evaluated fragment by fragment.
    pub fn pairing(&self, order: &ScalarField) -> f64 {
        self.fragments
            .iter()
            .map(|&(c, v, m)| v * m * order.values()[c])
            .sum()
    }

    /// Exact `L^p` distance from the fragments to a cell field.
    pub fn lp_distance(&self, w: &ScalarField, p: f64) -> Result<f64> {
        check_p(p)?;
        let s: f64 = self
            .fragments
            .iter()
            .map(|&(c, v, m)| (v - w.values()[c]).abs().powf(p) * m)
            .sum();
        Ok(s.powf(1.0 / p))
    }

    /// Number of cells carrying more than one fragment.
    pub fn split_cells(&self) -> usize {
        self.fragments
            .windows(2)
            .filter(|w| w[0].0 == w[1].0)
            .count()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    Ok(())
}

/// Fills targets, taken in the given order with their measures, from the
/// increasing quantile function of `source`. Returns fragments
/// `(target index, value, measure)`.
pub fn monotone_fill(source: &CellList, targets: &[(usize, f64)]) -> Vec<(usize, f64, f64)> {
    let src = source.entries();
    let mut out = Vec::with_capacity(src.len() + targets.len());
    let mut i = 0;
    let mut left = src.first().map_or(0.0, |e| e.1);
    let last = targets.len().saturating_sub(1);
    for (t, &(cell, measure)) in targets.iter().enumerate() {
        let mut need = measure;
        while i < src.len() {
            if t == last {
                // rounding in the cumulative sums is absorbed by the last cell
                out.push((cell, src[i].0, left));
                i += 1;
                left = src.get(i).map_or(0.0, |e| e.1);
                continue;
            }
            if left <= need {
                if left > 0.0 {
                    out.push((cell, src[i].0, left));
                }
                need -= left;
                i += 1;
                left = src.get(i).map_or(0.0, |e| e.1);
            } else {
                if need > 0.0 {
                    out.push((cell, src[i].0, need));
                }
                left -= need;
                break;
            }
        }
    }
    out
}

/// Rearrangement of `source` increasing along `order`: maximizes the
/// pairing with `order` within the class.
pub fn transport_rearrange(source: &ScalarField, order: &ScalarField) -> Result<Rearranged> {
    source.check_grid(order)?;
    rearrange_class(&CellList::from_field(source), order)
}

/// As [`transport_rearrange`] for a class given by its distribution.
pub fn rearrange_class(class: &CellList, order: &ScalarField) -> Result<Rearranged> {
    let g = order.grid();
    let mut cells: Vec<usize> = (0..g.len()).collect();
    let ov = order.values();
    cells.sort_by(|&a, &b| ov[a].total_cmp(&ov[b]).then(a.cmp(&b)));
    let targets: Vec<(usize, f64)> = cells.iter().map(|&c| (c, g.measure(c))).collect();
    let total: f64 = targets.iter().map(|t| t.1).sum();
    if (total - class.total_measure()).abs() > MEASURE_TOL * total {
        return Err(Error::InvalidArgument(format!(
            "class measure {} differs from domain measure {total}",
            class.total_measure()
        )));
    }
    Ok(Rearranged {
        grid: g.clone(),
        fragments: monotone_fill(class, &targets),
    })
}

/// Element of the class of `reference` nearest to `w` in `L^p`.
pub fn follower(w: &ScalarField, reference: &ScalarField, p: f64) -> Result<Rearranged> {
    check_p(p)?;
    transport_rearrange(reference, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FixedPoint,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct AscentOptions {
    pub max_iters: usize,
    /// Absolute fixed-point tolerance; `None` means `1e-8 * |seed|_2`.
    pub fp_tol: Option<f64>,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            fp_tol: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AscentReport {
    pub iterations: usize,
    pub energies: Vec<f64>,
    /// Fixed-point residual of each iterate.
    pub residuals: Vec<f64>,
    /// Quantile L1 distance of each iterate's fragments from the class.
    pub class_defects: Vec<f64>,
    pub termination: Termination,
    #[serde(skip)]
    pub final_field: ScalarField,
    #[serde(skip)]
    pub final_arrangement: Rearranged,
}

impl AscentReport {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&0.0)
    }
    pub fn max_class_defect(&self) -> f64 {
        self.class_defects.iter().cloned().fold(0.0, f64::max)
    }
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.energies.windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

/// Ascent `v <- rearrangement of the class increasing along Pv + h_gamma`,
/// starting from the seed itself.
pub fn burton_ascent(
    ctx: &EllipticContext,
    seed: &ScalarField,
    gamma: &CirculationVector,
    opts: &AscentOptions,
) -> Result<AscentReport> {
    let class = CellList::from_field(seed);
    let fp_tol = opts.fp_tol.unwrap_or(1e-8 * seed.l2_norm());
    burton_ascent_from(ctx, &class, Rearranged::identity(seed), gamma, opts.max_iters, fp_tol)
}

/// Ascent over the class `class` from an arbitrary member `start`.
pub fn burton_ascent_from(
    ctx: &EllipticContext,
    class: &CellList,
    start: Rearranged,
    gamma: &CirculationVector,
    max_iters: usize,
    fp_tol: f64,
) -> Result<AscentReport> {
    if start.fragments.iter().any(|f| !f.1.is_finite()) {
        return Err(Error::InvalidArgument("seed is not finite".into()));
    }
    let h = ctx.h_gamma(gamma)?;
    let mut arr = start;
    let mut v = arr.to_field();
    let mut energy = ctx.energy(&v, gamma)?;
    let mut report = AscentReport {
        iterations: 0,
        energies: vec![energy],
        residuals: Vec::new(),
        class_defects: vec![arr.cell_list().quantile_l1(class)],
        termination: Termination::MaxIters,
        final_field: v.clone(),
        final_arrangement: arr.clone(),
    };
    loop {
        let psi = ctx.apply_p(&v)?.axpy(1.0, &h);
        let next = rearrange_class(class, &psi)?;
        let next_v = next.to_field();
        let residual = (&v - &next_v).l2_norm();
        report.residuals.push(residual);
        if residual <= fp_tol {
            report.termination = Termination::FixedPoint;
            break;
        }
        if report.iterations == max_iters {
            break;
        }
        let next_e = ctx.energy(&next_v, gamma)?;
        let scale = energy.abs().max(next_e.abs()).max(f64::MIN_POSITIVE);
        if next_e < energy - 1e-10 * scale {
            return Err(Error::EnergyDecrease(energy - next_e));
        }
        report.iterations += 1;
        report.energies.push(next_e);
        report.class_defects.push(next.cell_list().quantile_l1(class));
        arr = next;
        v = next_v;
        energy = next_e;
    }
    report.final_field = v;
    report.final_arrangement = arr;
    Ok(report)
}
