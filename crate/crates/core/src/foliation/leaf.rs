//! Leaves traced as `Φ(t) = φ¹_{t_1} ∘ … ∘ φⁿ_{t_n}(p)`, the composition of the
//! flows of the n fields spanning the distribution at `p`.

use rayon::prelude::*;
use serde::Serialize;

use super::flow::hamiltonian_flow;
use super::frame::{distribution_frame, isotropy_residual, DEFAULT_RANK_TOL};
use super::FoliationError;
use crate::symbol::SymbolFamily;
use crate::symplectic::SymplecticChart;

/// Points reached stepping away from a start node; `None` once escaped.
type Ray = Vec<Option<Vec<f64>>>;

/// Tangent differences shorter than this are skipped by the Lagrangian check.
pub const DEGENERATE_TANGENT: f64 = 1e-12;

/// The parameter lattice `{-m, ..., m}^n · Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeafGrid {
    /// `T`; the lattice covers `[-T, T]^n`.
    pub half_width: f64,
    /// `Δt`.
    pub spacing: f64,
}

impl LeafGrid {
    pub fn new(half_width: f64, spacing: f64) -> Result<Self, FoliationError> {
        if !(spacing > 0.0 && half_width >= spacing && half_width.is_finite()) {
            return Err(FoliationError::InvalidGrid(format!(
                "leaf grid needs 0 < Δt ≤ T, got Δt = {spacing}, T = {half_width}"
            )));
        }
        Ok(Self { half_width, spacing })
    }

    /// Nodes on each side of zero.
    pub fn half_count(&self) -> usize {
        (self.half_width / self.spacing + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LeafDiagnostics {
    pub constancy: f64,
    pub isotropy: f64,
    pub lagrangian: f64,
    /// `None` when a commutation probe left the region.
    pub flow_commutation: Option<f64>,
    pub escaped: bool,
    pub escaped_nodes: usize,
    pub degenerate_tangents: usize,
}

/// A traced leaf: lattice parameters mapped to chart points.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafTrace {
    pub base: Vec<f64>,
    pub grid: LeafGrid,
    pub rk4_step: f64,
    /// Family members whose flows parametrize the leaf.
    pub members: Vec<usize>,
    n: usize,
    /// Row-major over `(t_1, ..., t_n)`, `None` where the node escaped.
    points: Vec<Option<Vec<f64>>>,
    pub diagnostics: LeafDiagnostics,
}

impl LeafTrace {
    pub fn n(&self) -> usize {
        self.n
    }

    fn side(&self) -> usize {
        2 * self.grid.half_count() + 1
    }

    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    /// Signed lattice index of a flat node.
    pub fn lattice_index(&self, flat: usize) -> Vec<i64> {
        let side = self.side();
        let m = self.grid.half_count() as i64;
        let mut idx = vec![0i64; self.n];
        let mut rest = flat;
        for k in (0..self.n).rev() {
            idx[k] = (rest % side) as i64 - m;
            rest /= side;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[i64]) -> Option<usize> {
        let m = self.grid.half_count() as i64;
        let side = self.side();
        idx.iter().try_fold(0usize, |acc, &i| {
            (i.abs() <= m).then(|| acc * side + (i + m) as usize)
        })
    }

    pub fn params(&self, flat: usize) -> Vec<f64> {
        self.lattice_index(flat)
            .into_iter()
            .map(|i| i as f64 * self.grid.spacing)
            .collect()
    }

    pub fn point(&self, flat: usize) -> Option<&[f64]> {
        self.points[flat].as_deref()
    }

    pub fn point_at(&self, idx: &[i64]) -> Option<&[f64]> {
        self.flat_index(idx).and_then(|f| self.point(f))
    }

    /// Non-escaped points in flat order.
    pub fn traced_points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().filter_map(|p| p.as_deref())
    }
}

/// Traces the leaf through `p` on `grid`, then fills every diagnostic.
pub fn trace_leaf(
    chart: &SymplecticChart,
    family: &SymbolFamily,
    p: &[f64],
    grid: LeafGrid,
    rk4_step: f64,
) -> Result<LeafTrace, FoliationError> {
    if !(rk4_step > 0.0 && rk4_step <= grid.spacing) {
        return Err(FoliationError::InvalidGrid(format!(
            "rk4 step {rk4_step} must lie in (0, Δt = {}]",
            grid.spacing
        )));
    }
    let frame = distribution_frame(chart, family, p)?;
    if !frame.is_regular(DEFAULT_RANK_TOL) {
        return Err(FoliationError::NotRegular {
            point: p.to_vec(),
            sigma_n: frame.sigma_n(),
        });
    }
    let n = chart.n();
    let m = grid.half_count();
    let side = 2 * m + 1;
    let mut points: Vec<Option<Vec<f64>>> = vec![None; side.pow(n as u32)];
    let center: usize = (0..n).fold(0, |acc, _| acc * side + m);
    points[center] = Some(p.to_vec());

    // Sweep axes from the innermost flow (t_n) outwards; each sweep starts
    // from nodes that are zero on this and all earlier axes.
    for axis in (0..n).rev() {
        let stride = side.pow((n - 1 - axis) as u32);
        let symbol = family.get(frame.members[axis]);
        let starts: Vec<usize> = (0..points.len())
            .filter(|&f| {
                let mut rest = f;
                let mut ok = true;
                for k in (0..n).rev() {
                    let i = rest % side;
                    rest /= side;
                    if k <= axis && i != m {
                        ok = false;
                    }
                }
                ok
            })
            .collect();
        let sweeps: Vec<(usize, Ray, Ray)> = starts
            .par_iter()
            .map(|&start| -> Result<_, FoliationError> {
                let mut rays = Vec::with_capacity(2);
                for dt in [grid.spacing, -grid.spacing] {
                    let mut ray = Vec::with_capacity(m);
                    let mut current = points[start].clone();
                    for _ in 0..m {
                        current = match current {
                            Some(q) => match hamiltonian_flow(chart, symbol, &q, dt, rk4_step) {
                                Ok(next) => Some(next),
                                Err(FoliationError::Escaped { .. }) => None,
                                Err(e) => return Err(e),
                            },
                            None => None,
                        };
                        ray.push(current.clone());
                    }
                    rays.push(ray);
                }
                let backward = rays.pop().expect("two rays");
                let forward = rays.pop().expect("two rays");
                Ok((start, forward, backward))
            })
            .collect::<Result<_, _>>()?;
        for (start, forward, backward) in sweeps {
            for (j, q) in forward.into_iter().enumerate() {
                points[start + (j + 1) * stride] = q;
            }
            for (j, q) in backward.into_iter().enumerate() {
                points[start - (j + 1) * stride] = q;
            }
        }
    }

    let escaped_nodes = points.iter().filter(|q| q.is_none()).count();
    if points.len() > 1 && escaped_nodes == points.len() - 1 {
        return Err(FoliationError::AllEscaped { base: p.to_vec() });
    }

    let mut leaf = LeafTrace {
        base: p.to_vec(),
        grid,
        rk4_step,
        members: frame.members.clone(),
        n,
        points,
        diagnostics: LeafDiagnostics::default(),
    };

    let isotropy = leaf
        .traced_points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|q| isotropy_residual(chart, family, q))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let lagrangian = lagrangian_residual(chart, &leaf)?;
    let mut flow_commutation = Some(0.0f64);
    for a in 0..n {
        for b in a + 1..n {
            let (i, j) = (frame.members[a], frame.members[b]);
            match flow_commutation_residual(chart, family, p, i, j, grid.spacing, grid.spacing, rk4_step) {
                Ok(r) => flow_commutation = flow_commutation.map(|w| w.max(r)),
                Err(FoliationError::Escaped { .. }) => flow_commutation = None,
                Err(e) => return Err(e),
            }
        }
    }
    leaf.diagnostics = LeafDiagnostics {
        constancy: leafwise_constancy(&leaf, family)?,
        isotropy,
        lagrangian: lagrangian.residual,
        flow_commutation,
        escaped: escaped_nodes > 0,
        escaped_nodes,
        degenerate_tangents: lagrangian.degenerate_tangents,
    };
    Ok(leaf)
}

/// `max |a(Φ(t)) − a(p)|` over the symbols and non-escaped nodes.
pub fn leafwise_constancy(leaf: &LeafTrace, symbols: &SymbolFamily) -> Result<f64, FoliationError> {
    let mut worst = 0.0f64;
    for a in symbols.members() {
        let at_base = a.eval(&leaf.base)?;
        for q in leaf.traced_points() {
            worst = worst.max((a.eval(q)? - at_base).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagrangianResidual {
    pub residual: f64,
    pub degenerate_tangents: usize,
}

/// `max |ω(Δ_iΦ, Δ_jΦ)| / (‖Δ_iΦ‖ ‖Δ_jΦ‖)` over interior lattice nodes, with
/// central differences along the lattice. Curves (`n = 1`) give zero.
pub fn lagrangian_residual(chart: &SymplecticChart, leaf: &LeafTrace) -> Result<LagrangianResidual, FoliationError> {
    let mut out = LagrangianResidual {
        residual: 0.0,
        degenerate_tangents: 0,
    };
    if leaf.n < 2 {
        return Ok(out);
    }
    let h = leaf.grid.spacing;
    for flat in 0..leaf.node_count() {
        let Some(q) = leaf.point(flat) else { continue };
        let idx = leaf.lattice_index(flat);
        let mut tangents = Vec::with_capacity(leaf.n);
        for axis in 0..leaf.n {
            let mut up = idx.clone();
            let mut down = idx.clone();
            up[axis] += 1;
            down[axis] -= 1;
            match (leaf.point_at(&up), leaf.point_at(&down)) {
                (Some(u), Some(d)) => {
                    let diff: Vec<f64> = u.iter().zip(d).map(|(a, b)| (a - b) / (2.0 * h)).collect();
                    tangents.push(nalgebra::DVector::from_vec(diff));
                }
                _ => break,
            }
        }
        if tangents.len() < leaf.n {
            continue;
        }
        let omega = chart.form_matrix(q)?;
        for i in 0..leaf.n {
            for j in i + 1..leaf.n {
                let (ni, nj) = (tangents[i].norm(), tangents[j].norm());
                if ni < DEGENERATE_TANGENT || nj < DEGENERATE_TANGENT {
                    out.degenerate_tangents += 1;
                    continue;
                }
                let w = tangents[i].dot(&(&omega * &tangents[j])).abs() / (ni * nj);
                out.residual = out.residual.max(w);
            }
        }
    }
    Ok(out)
}

/// `‖φ^i_s(φ^j_t(p)) − φ^j_t(φ^i_s(p))‖` for family members `i`, `j`.
#[allow(clippy::too_many_arguments)]
pub fn flow_commutation_residual(
    chart: &SymplecticChart,
    family: &SymbolFamily,
    p: &[f64],
    i: usize,
    j: usize,
    s: f64,
    t: f64,
    rk4_step: f64,
) -> Result<f64, FoliationError> {
    let (a, b) = (family.get(i), family.get(j));
    let ij = hamiltonian_flow(chart, a, &hamiltonian_flow(chart, b, p, t, rk4_step)?, s, rk4_step)?;
    let ji = hamiltonian_flow(chart, b, &hamiltonian_flow(chart, a, p, s, rk4_step)?, t, rk4_step)?;
    Ok(ij.iter().zip(&ji).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn family(exprs: &[&str], n: usize) -> SymbolFamily {
        SymbolFamily::parse(exprs, n).unwrap()
    }

    #[test]
    fn circle_leaf_of_the_oscillator() {
        let chart = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let fam = family(&["x1^2 + y1^2"], 1);
        let grid = LeafGrid::new(PI / 4.0, PI / 16.0).unwrap();
        let leaf = trace_leaf(&chart, &fam, &[0.5, 0.0], grid, 1e-3).unwrap();
        assert_eq!(leaf.node_count(), 9);
        let q = leaf.point_at(&[4]).unwrap();
        assert!(q[0].abs() < 1e-8 && (q[1] + 0.5).abs() < 1e-8);
        assert_eq!(leaf.point_at(&[0]).unwrap(), &[0.5, 0.0]);
        assert!(leaf.diagnostics.constancy <= 1e-8);
        assert_eq!(leaf.diagnostics.lagrangian, 0.0);
        assert!(!leaf.diagnostics.escaped);

        let one = family(&["1 + 0*x1"], 1);
        assert_eq!(leafwise_constancy(&leaf, &one).unwrap(), 0.0);
        let full = trace_leaf(&chart, &fam, &[0.5, 0.0], LeafGrid::new(PI, PI / 16.0).unwrap(), 1e-3).unwrap();
        let x1 = family(&["x1"], 1);
        assert!((leafwise_constancy(&full, &x1).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bergman_form_traces_the_same_circle() {
        let chart = SymplecticChart::bergman_disk(0.95, 2.0).unwrap();
        let fam = family(&["x1^2 + y1^2"], 1);
        let leaf = trace_leaf(&chart, &fam, &[0.5, 0.0], LeafGrid::new(PI, PI / 16.0).unwrap(), 1e-3).unwrap();
        for q in leaf.traced_points() {
            assert!((q[0] * q[0] + q[1] * q[1] - 0.25).abs() <= 1e-8);
        }
    }

    #[test]
    fn translation_plane_leaf() {
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let fam = family(&["x1", "x2"], 2);
        let grid = LeafGrid::new(0.5, 0.25).unwrap();
        let leaf = trace_leaf(&chart, &fam, &[0.0; 4], grid, 0.05).unwrap();
        for flat in 0..leaf.node_count() {
            let t = leaf.params(flat);
            let q = leaf.point(flat).unwrap();
            assert!(q[0].abs() < 1e-15 && q[2].abs() < 1e-15);
            assert!((q[1] + t[0]).abs() < 1e-14 && (q[3] + t[1]).abs() < 1e-14);
        }
        assert!(leaf.diagnostics.lagrangian <= 1e-12);
        assert!(leaf.diagnostics.flow_commutation.unwrap() <= 1e-13);
    }

    #[test]
    fn torus_leaf_diagnostics() {
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let fam = family(&["x1^2 + y1^2", "x2^2 + y2^2"], 2);
        let leaf = trace_leaf(&chart, &fam, &[0.5, 0.0, 0.5, 0.0], LeafGrid::new(1.0, 0.05).unwrap(), 1e-3).unwrap();
        let d = &leaf.diagnostics;
        assert!(d.constancy <= 1e-8, "{d:?}");
        assert!(d.lagrangian <= 1e-4, "{d:?}");
        assert!(d.isotropy <= 1e-12);
        assert!(d.flow_commutation.unwrap() <= 1e-9);
    }

    #[test]
    fn escaped_nodes_are_flagged_and_skipped() {
        let chart = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let fam = family(&["x1"], 1);
        let leaf = trace_leaf(&chart, &fam, &[0.0, 0.5], LeafGrid::new(1.0, 0.25).unwrap(), 0.05).unwrap();
        assert!(leaf.diagnostics.escaped);
        // y runs 0.5 - t; t = -0.5 lands on the open boundary, so three nodes escape
        assert_eq!(leaf.diagnostics.escaped_nodes, 3);
        assert!(leaf.point_at(&[-2]).is_none() && leaf.point_at(&[-1]).is_some());
        let err = trace_leaf(&chart, &fam, &[0.0, 0.0], LeafGrid::new(1.5, 1.5).unwrap(), 0.1);
        assert!(matches!(err, Err(FoliationError::AllEscaped { .. })));
    }

    #[test]
    fn trace_is_reversible() {
        let chart = SymplecticChart::bergman_disk(0.95, 2.0).unwrap();
        let fam = family(&["x1^2*y1 + x1"], 1);
        let leaf = trace_leaf(&chart, &fam, &[0.1, 0.2], LeafGrid::new(0.5, 0.1).unwrap(), 1e-3).unwrap();
        let a = fam.get(leaf.members[0]);
        for k in 1..=5i64 {
            let (Some(q), Some(prev)) = (leaf.point_at(&[k]), leaf.point_at(&[k - 1])) else { continue };
            let back = hamiltonian_flow(&chart, a, q, -0.1, 1e-3).unwrap();
            let err = back.iter().zip(prev).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-11, "k={k}: {err}");
        }
    }

    #[test]
    fn step_halving_is_fourth_order() {
        let chart = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let fam = family(&["x1^2 + y1^2"], 1);
        let grid = LeafGrid::new(1.0, 0.1).unwrap();
        let coarse = trace_leaf(&chart, &fam, &[0.5, 0.0], grid, 0.1).unwrap().diagnostics.constancy;
        let fine = trace_leaf(&chart, &fam, &[0.5, 0.0], grid, 0.05).unwrap().diagnostics.constancy;
        assert!(coarse / fine >= 8.0, "{coarse} / {fine}");
    }

    #[test]
    fn rejects_bad_steps_and_singular_base() {
        let chart = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let fam = family(&["x1^2 + y1^2"], 1);
        assert!(LeafGrid::new(0.1, 0.2).is_err());
        let grid = LeafGrid::new(0.2, 0.1).unwrap();
        assert!(matches!(trace_leaf(&chart, &fam, &[0.5, 0.0], grid, 0.2), Err(FoliationError::InvalidGrid(_))));
        assert!(matches!(trace_leaf(&chart, &fam, &[0.0, 0.0], grid, 0.01), Err(FoliationError::NotRegular { .. })));
    }
}
