use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::FoliationError;
use crate::symbol::SymbolFamily;
use crate::symplectic::{GeometryError, SymplecticChart};

/// Default threshold on the n-th singular value of a frame.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// The Hamiltonian fields of an n-member subfamily evaluated at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFrame {
    pub base: Vec<f64>,
    /// Family indices of the spanning members, ascending.
    pub members: Vec<usize>,
    /// `2n × n`, column `k` is `X_{a_members[k]}(base)`.
    pub frame: DMatrix<f64>,
    /// Descending.
    pub singular_values: Vec<f64>,
}

impl DistributionFrame {
    /// The n-th (smallest) singular value.
    pub fn sigma_n(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    pub fn is_regular(&self, rank_tol: f64) -> bool {
        self.sigma_n() >= rank_tol
    }
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// All `k`-subsets of `0..m` in lexicographic order.
fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    if k > m {
        return out;
    }
    loop {
        out.push(current.clone());
        let Some(i) = (0..k).rev().find(|&i| current[i] < m - k + i) else {
            return out;
        };
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

pub(crate) fn member_fields(
    chart: &SymplecticChart,
    family: &SymbolFamily,
    p: &[f64],
) -> Result<Vec<DVector<f64>>, GeometryError> {
    family.members().iter().map(|a| chart.field(a, p)).collect()
}

/// Builds the frame at `p` from the n-member subfamily with the largest n-th
/// singular value (first such subset on ties).
pub fn distribution_frame(
    chart: &SymplecticChart,
    family: &SymbolFamily,
    p: &[f64],
) -> Result<DistributionFrame, FoliationError> {
    let n = chart.n();
    if family.len() < n {
        return Err(FoliationError::FamilyTooSmall {
            needed: n,
            got: family.len(),
        });
    }
    let fields = member_fields(chart, family, p)?;
    let mut best: Option<DistributionFrame> = None;
    for subset in combinations(family.len(), n) {
        let columns: Vec<DVector<f64>> = subset.iter().map(|&i| fields[i].clone()).collect();
        let frame = DMatrix::from_columns(&columns);
        let singular_values = sorted_singular_values(&frame);
        let candidate = DistributionFrame {
            base: p.to_vec(),
            members: subset,
            frame,
            singular_values,
        };
        if best.as_ref().is_none_or(|b| candidate.sigma_n() > b.sigma_n()) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one subset"))
}

fn sigma_n_at(chart: &SymplecticChart, family: &SymbolFamily, p: &[f64]) -> Result<f64, FoliationError> {
    match distribution_frame(chart, family, p) {
        Ok(frame) => Ok(frame.sigma_n()),
        // a symbol without a derivative here counts as a rank drop
        Err(FoliationError::Geometry(GeometryError::Symbol(_))) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// `max_{i<j} |ω_p(X_{a_i}, X_{a_j})|` over the whole family.
pub fn isotropy_residual(chart: &SymplecticChart, family: &SymbolFamily, p: &[f64]) -> Result<f64, FoliationError> {
    let fields = member_fields(chart, family, p)?;
    let omega = chart.form_matrix(p)?;
    let mut worst = 0.0f64;
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            worst = worst.max(fields[i].dot(&(&omega * &fields[j])).abs());
        }
    }
    Ok(worst)
}

/// Largest distance from a pairwise Lie bracket `[X_{a_i}, X_{a_j}](p)` to the
/// span of the frame at `p`.
pub fn involutivity_residual(
    chart: &SymplecticChart,
    family: &SymbolFamily,
    p: &[f64],
    fd_step: f64,
) -> Result<f64, FoliationError> {
    chart.check_margin(p, fd_step)?;
    let frame = distribution_frame(chart, family, p)?;
    if !frame.is_regular(DEFAULT_RANK_TOL) {
        return Err(FoliationError::NotRegular {
            point: p.to_vec(),
            sigma_n: frame.sigma_n(),
        });
    }
    let q = frame.frame.clone().qr().q();
    let mut worst = 0.0f64;
    let members = family.members();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let v = chart.field_lie_bracket(&members[i], &members[j], p, fd_step)?;
            let projected = &q * (q.transpose() * &v);
            worst = worst.max((v - projected).norm());
        }
    }
    Ok(worst)
}

/// A uniform lattice over `[lo, hi]^{2n}` with `nodes_per_axis` nodes per axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lattice {
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Lattice {
    pub fn new(dim: usize, nodes_per_axis: usize, lo: f64, hi: f64) -> Self {
        Self {
            dim,
            nodes_per_axis,
            lo,
            hi,
        }
    }

    /// Lattice spanning the chart's bounding box, pulled in by a relative 1e-6
    /// so that box faces land inside the open region.
    pub fn covering(chart: &SymplecticChart, nodes_per_axis: usize) -> Self {
        let (lo, hi) = chart.bounds();
        let inset = 1e-6 * (hi - lo);
        Self::new(chart.dim(), nodes_per_axis, lo + inset, hi - inset)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes_per_axis - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.pow(self.dim as u32)
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        let m = self.nodes_per_axis;
        let mut idx = vec![0; self.dim];
        let mut rest = flat;
        for k in (0..self.dim).rev() {
            idx[k] = rest % m;
            rest /= m;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.nodes_per_axis + i)
    }

    pub fn coordinate(&self, i: f64) -> f64 {
        self.lo + i * self.spacing()
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.coordinate(i as f64)).collect()
    }

    /// Lattice nodes strictly inside the chart region, in flat-index order.
    pub fn points_in(&self, chart: &SymplecticChart) -> Vec<Vec<f64>> {
        (0..self.node_count())
            .map(|f| self.point(&self.index(f)))
            .filter(|p| chart.contains(p))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularCell {
    /// Lower-corner lattice index of the cell.
    pub cell: Vec<usize>,
    /// A point of the cell where the frame rank drops.
    pub witness: Vec<f64>,
    pub sigma_n: f64,
}

/// Sampled estimate of the set where no n family members have independent
/// differentials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularSetEstimate {
    pub lattice: Lattice,
    pub rank_tol: f64,
    pub sampled_cells: usize,
    pub cells: Vec<SingularCell>,
    pub covering_fraction: f64,
    /// Smallest n-th singular value over sampled lattice nodes, and where.
    pub min_sigma_n: f64,
    pub min_sigma_point: Vec<f64>,
}

impl SingularSetEstimate {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Re-evaluates every witness; `true` when each still has `σ_n < rank_tol`.
    pub fn recheck(&self, chart: &SymplecticChart, family: &SymbolFamily) -> Result<bool, FoliationError> {
        for cell in &self.cells {
            if sigma_n_at(chart, family, &cell.witness)? >= self.rank_tol {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Classifies every lattice cell whose corners lie in the region as regular or
/// singular. A cell is singular when the smallest frame singular value found in
/// it drops below `rank_tol`; cells whose corner samples suggest a zero nearby
/// are searched with a bounded compass search.
pub fn richness_scan(
    chart: &SymplecticChart,
    family: &SymbolFamily,
    lattice: &Lattice,
    rank_tol: f64,
) -> Result<SingularSetEstimate, FoliationError> {
    if family.len() < chart.n() {
        return Err(FoliationError::FamilyTooSmall {
            needed: chart.n(),
            got: family.len(),
        });
    }
    if lattice.nodes_per_axis < 2 || lattice.dim != chart.dim() {
        return Err(FoliationError::InvalidGrid(format!(
            "lattice needs at least 2 nodes per axis over {} axes",
            chart.dim()
        )));
    }
    let sigma: Vec<Option<f64>> = (0..lattice.node_count())
        .into_par_iter()
        .map(|f| {
            let p = lattice.point(&lattice.index(f));
            if chart.contains(&p) {
                sigma_n_at(chart, family, &p).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_, _>>()?;

    let (min_sigma_n, min_sigma_point) = sigma
        .iter()
        .enumerate()
        .filter_map(|(f, s)| s.map(|s| (s, f)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(s, f)| (s, lattice.point(&lattice.index(f))))
        .unwrap_or((f64::INFINITY, Vec::new()));

    let cells_per_axis = lattice.nodes_per_axis - 1;
    let cell_lattice = Lattice::new(lattice.dim, cells_per_axis, 0.0, 1.0);
    let corners: Vec<Vec<usize>> = (0..1usize << lattice.dim)
        .map(|mask| (0..lattice.dim).map(|k| (mask >> (lattice.dim - 1 - k)) & 1).collect())
        .collect();

    let outcomes: Vec<Option<Option<SingularCell>>> = (0..cell_lattice.node_count())
        .into_par_iter()
        .map(|c| -> Result<Option<Option<SingularCell>>, FoliationError> {
            let cell = cell_lattice.index(c);
            let mut samples = Vec::with_capacity(corners.len() + 1);
            for corner in &corners {
                let idx: Vec<usize> = cell.iter().zip(corner).map(|(a, b)| a + b).collect();
                match sigma[lattice.flat(&idx)] {
                    Some(s) => samples.push((s, lattice.point(&idx))),
                    None => return Ok(None),
                }
            }
            let center: Vec<f64> = cell.iter().map(|&i| lattice.coordinate(i as f64 + 0.5)).collect();
            samples.push((sigma_n_at(chart, family, &center)?, center));
            let (lo, hi) = samples.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), (s, _)| (lo.min(*s), hi.max(*s)));
            let (start_sigma, start) = samples
                .iter()
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .cloned()
                .expect("nonempty samples");
            if lo < rank_tol {
                return Ok(Some(Some(SingularCell {
                    cell,
                    witness: start,
                    sigma_n: start_sigma,
                })));
            }
            if lo > 2.0 * (hi - lo) {
                return Ok(Some(None));
            }
            let cell_lo: Vec<f64> = cell.iter().map(|&i| lattice.coordinate(i as f64)).collect();
            let (s, p) = compass_search(chart, family, start, start_sigma, &cell_lo, lattice.spacing(), rank_tol)?;
            Ok(Some((s < rank_tol).then_some(SingularCell {
                cell,
                witness: p,
                sigma_n: s,
            })))
        })
        .collect::<Result<_, _>>()?;

    let sampled_cells = outcomes.iter().filter(|o| o.is_some()).count();
    let cells: Vec<SingularCell> = outcomes.into_iter().flatten().flatten().collect();
    let covering_fraction = if sampled_cells == 0 {
        0.0
    } else {
        cells.len() as f64 / sampled_cells as f64
    };
    Ok(SingularSetEstimate {
        lattice: lattice.clone(),
        rank_tol,
        sampled_cells,
        cells,
        covering_fraction,
        min_sigma_n,
        min_sigma_point,
    })
}

/// Minimizes `σ_n` over the closed cell `[cell_lo, cell_lo + width]^{2n}`.
fn compass_search(
    chart: &SymplecticChart,
    family: &SymbolFamily,
    start: Vec<f64>,
    start_sigma: f64,
    cell_lo: &[f64],
    width: f64,
    rank_tol: f64,
) -> Result<(f64, Vec<f64>), FoliationError> {
    let mut best = start;
    let mut best_sigma = start_sigma;
    let mut step = 0.25 * width;
    let mut evaluations = 0;
    while step > 1e-14 * width && best_sigma >= rank_tol && evaluations < 20_000 {
        let mut improved = false;
        for k in 0..best.len() {
            for dir in [1.0, -1.0] {
                let mut q = best.clone();
                q[k] = (q[k] + dir * step).clamp(cell_lo[k], cell_lo[k] + width);
                if !chart.contains(&q) {
                    continue;
                }
                evaluations += 1;
                let s = sigma_n_at(chart, family, &q)?;
                if s < best_sigma {
                    best_sigma = s;
                    best = q;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((best_sigma, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(exprs: &[&str], n: usize) -> SymbolFamily {
        SymbolFamily::parse(exprs, n).unwrap()
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert_eq!(combinations(2, 2), vec![vec![0, 1]]);
        assert!(combinations(1, 2).is_empty());
    }

    #[test]
    fn frame_columns_are_hamiltonian_fields() {
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let fam = family(&["x1^2 + y1^2", "x2^2 + y2^2", "x1"], 2);
        let p = [0.3, 0.1, 0.2, 0.4];
        let frame = distribution_frame(&chart, &fam, &p).unwrap();
        for (k, &m) in frame.members.iter().enumerate() {
            let x = chart.field(fam.get(m), &p).unwrap();
            assert_eq!(frame.frame.column(k), x.column(0));
        }
        assert!(frame.singular_values[0] >= frame.sigma_n());
    }

    #[test]
    fn isotropy_examples() {
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(isotropy_residual(&chart, &family(&["x1", "x2"], 2), &p).unwrap(), 0.0);
        assert_eq!(isotropy_residual(&chart, &family(&["x1", "y1"], 2), &p).unwrap(), 1.0);
        let disk = SymplecticChart::standard_disk(0.9).unwrap();
        assert_eq!(isotropy_residual(&disk, &family(&["x1^2 + y1^2"], 1), &[0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn involutivity_examples() {
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let p = [0.3, 0.1, 0.2, 0.4];
        assert!(involutivity_residual(&chart, &family(&["x1", "x2"], 2), &p, 1e-4).unwrap() <= 1e-12);
        let rot = family(&["x1^2 + y1^2", "x2^2 + y2^2"], 2);
        assert!(involutivity_residual(&chart, &rot, &p, 1e-4).unwrap() <= 1e-6);
        let disk = SymplecticChart::standard_disk(0.9).unwrap();
        assert_eq!(involutivity_residual(&disk, &family(&["x1^3 - y1"], 1), &[0.1, 0.2], 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn non_commuting_pair_is_not_involutive_in_r4() {
        // X_{x1 y2} and X_{x2} do not close up on span{X_{x1 y2}, X_{x2}}
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let fam = family(&["x1*y2", "y1^2"], 2);
        let r = involutivity_residual(&chart, &fam, &[0.3, 0.2, 0.1, 0.4], 1e-4).unwrap();
        assert!(r > 1e-3, "{r}");
    }

    #[test]
    fn richness_scan_flags_only_the_origin_cell() {
        let chart = SymplecticChart::bergman_disk(0.95, 2.0).unwrap();
        let fam = family(&["x1^2 + y1^2"], 1);
        let lattice = Lattice::covering(&chart, 64);
        let est = richness_scan(&chart, &fam, &lattice, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(est.cells.len(), 1);
        assert_eq!(est.cells[0].cell, vec![31, 31]);
        assert!(est.cells[0].sigma_n < DEFAULT_RANK_TOL);
        assert!(est.recheck(&chart, &fam).unwrap());
        assert!(est.covering_fraction > 0.0 && est.covering_fraction < 1e-3);
    }

    #[test]
    fn richness_scan_dimension_two() {
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let lattice = Lattice::covering(&chart, 5);
        let est = richness_scan(&chart, &family(&["x1", "x2"], 2), &lattice, DEFAULT_RANK_TOL).unwrap();
        assert!(est.is_empty());
        assert_eq!(est.sampled_cells, 4usize.pow(4));
        let degenerate = richness_scan(&chart, &family(&["x1", "2*x1"], 2), &lattice, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(degenerate.cells.len(), degenerate.sampled_cells);
        assert_eq!(degenerate.covering_fraction, 1.0);
        assert!(matches!(
            richness_scan(&chart, &family(&["x1"], 2), &lattice, DEFAULT_RANK_TOL),
            Err(FoliationError::FamilyTooSmall { needed: 2, got: 1 })
        ));
    }
}
