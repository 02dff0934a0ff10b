use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::RunConfig;
use super::report::{Residual, StageVerdict, Status};
use super::space_for;
use crate::bergman::{
    commutativity_matrix, commutator_norm, correspondence_scan, toeplitz_matrix, wick_symbol, CommutativityVerdict,
    DiskSymbol, NormMode, OperatorMatrix,
};
use crate::foliation::{distribution_frame, richness_scan, trace_leaf, Lattice, LeafGrid, LeafTrace};
use crate::symbol::SymbolFamily;
use crate::symplectic::SymplecticChart;

pub const OPERATOR: &str = "operator_commutativity";
pub const RICHNESS: &str = "richness";
pub const POISSON: &str = "poisson_commutativity";
pub const FOLIATION: &str = "foliation";
pub const CORRESPONDENCE: &str = "correspondence";

/// Singular cells listed in the report before truncating the list.
const MAX_LISTED_CELLS: usize = 32;

type Files = Vec<(String, Vec<u8>)>;

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

pub fn poisson(chart: &SymplecticChart, family: &SymbolFamily, points: &[Vec<f64>], tau_comm: f64) -> StageVerdict {
    let pairs = pairs(family.len());
    let per_point = points
        .par_iter()
        .map(|p| {
            let mut worst = (0.0f64, None);
            for &(i, j) in &pairs {
                let v = chart.poisson_bracket(family.get(i), family.get(j), p)?.abs();
                if v > worst.0 || worst.1.is_none() {
                    worst = (v, Some((i, j)));
                }
            }
            Ok((worst, p))
        })
        .collect::<Result<Vec<_>, crate::symplectic::GeometryError>>();
    let per_point = match per_point {
        Ok(v) => v,
        Err(e) => return StageVerdict::failed(POISSON, format!("bracket evaluation failed: {e}")),
    };
    let mut best = (0.0, None, None);
    for ((v, pair), p) in per_point {
        if pair.is_some() && (best.2.is_none() || v > best.0) {
            best = (v, pair, Some(p));
        }
    }
    let mut stage = StageVerdict::new(POISSON);
    stage.push(Residual::new("max_poisson_bracket", best.0, tau_comm, best.2.cloned()));
    stage.data = json!({ "pairs": pairs.len(), "points": points.len() });
    if pairs.is_empty() {
        stage.notices.push("single symbol: nothing to bracket".into());
    }
    let stage = stage.settle();
    if stage.status == Status::Fail {
        if let (Some((i, j)), Some(p)) = (best.1, best.2) {
            return StageVerdict {
                witness: Some(json!({
                    "pair": [i, j],
                    "names": [family.names()[i], family.names()[j]],
                    "value": best.0,
                    "point": p,
                })),
                ..stage
            };
        }
    }
    stage
}

/// Points at least a tenth of the chart extent from the boundary, up to five,
/// spread along the lattice order.
fn interior_sample(chart: &SymplecticChart, points: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = chart.bounds();
    let inner: Vec<&Vec<f64>> = points.iter().filter(|p| chart.margin(p) >= 0.1 * (hi - lo)).collect();
    if inner.is_empty() {
        return Vec::new();
    }
    let count = count.min(inner.len());
    (0..count).map(|i| inner[(i + 1) * inner.len() / (count + 1)].clone()).collect()
}

pub fn spot_checks(chart: &SymplecticChart, family: &SymbolFamily, points: &[Vec<f64>], fd_step: f64) -> Value {
    let sample = interior_sample(chart, points, 5);
    let k = family.len();
    let mut field = 0.0f64;
    let mut jacobi = 0.0f64;
    let mut errors = Vec::new();
    for p in &sample {
        for (i, j) in pairs(k) {
            match chart.field_bracket_residual(family.get(i), family.get(j), p, fd_step) {
                Ok(r) => field = field.max(r),
                Err(e) => errors.push(e.to_string()),
            }
        }
        for (i, j) in pairs(k) {
            for l in j + 1..k {
                match chart.jacobi_residual(family.get(i), family.get(j), family.get(l), p, fd_step) {
                    Ok(r) => jacobi = jacobi.max(r),
                    Err(e) => errors.push(e.to_string()),
                }
            }
        }
    }
    errors.dedup();
    json!({
        "points": sample,
        "field_bracket_residual": if k >= 2 { json!(field) } else { Value::Null },
        "jacobi_residual": if k >= 3 { json!(jacobi) } else { Value::Null },
        "errors": errors,
    })
}

/// Rank of the matrix whose rows are the member differentials stacked over
/// the sample points; below the family size means some member is a fixed
/// linear combination of the others.
fn differential_rank(family: &SymbolFamily, points: &[Vec<f64>]) -> usize {
    let stride = (points.len() / 512).max(1);
    let sample: Vec<&Vec<f64>> = points.iter().step_by(stride).collect();
    let dim = 2 * family.dim();
    let mut m = DMatrix::<f64>::zeros(family.len(), sample.len() * dim);
    for (i, member) in family.members().iter().enumerate() {
        for (s, p) in sample.iter().enumerate() {
            if let Ok(g) = member.gradient(p) {
                for (d, v) in g.into_iter().enumerate() {
                    m[(i, s * dim + d)] = v;
                }
            }
        }
    }
    let sv = m.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * top.max(f64::MIN_POSITIVE)).count()
}

pub fn richness(
    chart: &SymplecticChart,
    family: &SymbolFamily,
    lattice: &Lattice,
    points: &[Vec<f64>],
    config: &RunConfig,
) -> StageVerdict {
    let est = match richness_scan(chart, family, lattice, config.numerics.tau_rank) {
        Ok(e) => e,
        Err(e) => return StageVerdict::failed(RICHNESS, e.to_string()),
    };
    let mut stage = StageVerdict::new(RICHNESS);
    stage.push(Residual::new(
        "singular_covering_fraction",
        est.covering_fraction,
        config.numerics.max_singular_fraction,
        Some(est.min_sigma_point.clone()),
    ));
    let rank = differential_rank(family, points);
    if rank < family.len() {
        stage.notices.push(format!(
            "degenerate family: member differentials have rank {rank} < {} members",
            family.len()
        ));
    }
    let listed: Vec<_> = est.cells.iter().take(MAX_LISTED_CELLS).collect();
    stage.data = json!({
        "lattice": est.lattice,
        "rank_tol": est.rank_tol,
        "sampled_cells": est.sampled_cells,
        "singular_cell_count": est.cells.len(),
        "singular_cells": listed,
        "min_sigma_n": est.min_sigma_n,
        "min_sigma_point": est.min_sigma_point,
        "differential_rank": rank,
    });
    let stage = stage.settle();
    if stage.status == Status::Fail {
        let witness = est.cells.first().map(|c| json!({ "cell": c.cell, "point": c.witness, "sigma_n": c.sigma_n }));
        return StageVerdict { witness, ..stage };
    }
    stage
}

fn default_base_points(chart: &SymplecticChart, family: &SymbolFamily, points: &[Vec<f64>], config: &RunConfig) -> Vec<Vec<f64>> {
    let (lo, hi) = chart.bounds();
    let floor = 1e3 * config.numerics.tau_rank;
    let candidates: Vec<&Vec<f64>> = points
        .iter()
        .filter(|p| chart.margin(p) >= 0.125 * (hi - lo))
        .filter(|p| distribution_frame(chart, family, p).is_ok_and(|f| f.sigma_n() >= floor))
        .collect();
    let count = config.grids.default_leaves.min(candidates.len());
    (0..count)
        .map(|i| candidates[(i + 1) * candidates.len() / (count + 1)].clone())
        .collect()
}

fn leaf_csv(leaf: &LeafTrace) -> Vec<u8> {
    let n = leaf.n();
    let mut header: Vec<String> = (1..=n).map(|i| format!("t_{i}")).collect();
    for i in 1..=n {
        header.push(format!("x_{i}"));
        header.push(format!("y_{i}"));
    }
    header.push("escaped".into());
    let rows = (0..leaf.node_count()).map(|f| {
        let mut row: Vec<String> = leaf.params(f).iter().map(|t| t.to_string()).collect();
        match leaf.point(f) {
            Some(q) => {
                row.extend(q.iter().map(|v| v.to_string()));
                row.push("0".into());
            }
            None => {
                row.extend(std::iter::repeat_n(String::new(), 2 * n));
                row.push("1".into());
            }
        }
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(&header, rows)
}

fn max_with_arg(values: impl Iterator<Item = (f64, Vec<f64>)>) -> (f64, Option<Vec<f64>>) {
    values.fold((0.0, None), |(m, a), (v, p)| if a.is_none() || v > m { (v, Some(p)) } else { (m, a) })
}

pub fn foliation(chart: &SymplecticChart, family: &SymbolFamily, config: &RunConfig, points: &[Vec<f64>]) -> (StageVerdict, Files) {
    let nm = &config.numerics;
    let grid = match LeafGrid::new(config.grids.leaf_half_width, config.grids.leaf_spacing) {
        Ok(g) => g,
        Err(e) => return (StageVerdict::failed(FOLIATION, e.to_string()), Vec::new()),
    };
    let bases = if config.grids.base_points.is_empty() {
        default_base_points(chart, family, points, config)
    } else {
        config.grids.base_points.clone()
    };
    if bases.is_empty() {
        return (
            StageVerdict::failed(FOLIATION, "no regular base point away from the boundary"),
            Vec::new(),
        );
    }
    let traced: Vec<_> = bases
        .par_iter()
        .map(|p| trace_leaf(chart, family, p, grid, nm.rk4_step))
        .collect();
    let mut leaves = Vec::new();
    for (p, result) in bases.iter().zip(traced) {
        match result {
            Ok(leaf) => leaves.push(leaf),
            Err(e) => {
                let mut stage = StageVerdict::failed(FOLIATION, format!("leaf through {p:?}: {e}"));
                stage.witness = Some(json!({ "base_point": p }));
                return (stage, Vec::new());
            }
        }
    }

    let mut stage = StageVerdict::new(FOLIATION);
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for (i, leaf) in leaves.iter().enumerate() {
        let name = format!("leaf_{i}.csv");
        files.push((name.clone(), leaf_csv(leaf)));
        let d = &leaf.diagnostics;
        if d.escaped {
            stage.notices.push(format!("leaf {i}: {} of {} nodes left the region", d.escaped_nodes, leaf.node_count()));
        }
        if d.degenerate_tangents > 0 {
            stage.notices.push(format!("leaf {i}: {} degenerate tangent pairs skipped", d.degenerate_tangents));
        }
        if d.flow_commutation.is_none() {
            stage.notices.push(format!("leaf {i}: flow commutation probe left the region"));
        }
        summaries.push(json!({
            "base_point": leaf.base,
            "members": leaf.members.iter().map(|&m| &family.names()[m]).collect::<Vec<_>>(),
            "diagnostics": d,
            "file": name,
        }));
    }
    let worst = |f: &dyn Fn(&LeafTrace) -> Option<f64>| {
        max_with_arg(leaves.iter().filter_map(|l| f(l).map(|v| (v, l.base.clone()))))
    };
    let (v, at) = worst(&|l| Some(l.diagnostics.constancy));
    stage.push(Residual::new("leafwise_constancy", v, nm.constancy_tol, at));
    let (v, at) = worst(&|l| Some(l.diagnostics.lagrangian));
    stage.push(Residual::new("lagrangian_residual", v, nm.lagrangian_tol, at));
    let (v, at) = worst(&|l| Some(l.diagnostics.isotropy));
    stage.push(Residual::new("isotropy_residual", v, nm.isotropy_tol, at));
    if chart.n() >= 2 {
        let (v, at) = worst(&|l| l.diagnostics.flow_commutation);
        if at.is_some() {
            stage.push(Residual::new("flow_commutation_residual", v, nm.flow_commutation_tol, at));
        }
    }
    stage.data = json!({ "grid": grid, "rk4_step": nm.rk4_step, "leaves": summaries });
    let stage = stage.settle();
    if stage.status == Status::Fail {
        let failing = stage.residuals.iter().find(|r| !r.holds()).cloned();
        let witness = failing.map(|r| json!({ "residual": r.name, "value": r.value, "base_point": r.argmax }));
        return (StageVerdict { witness, ..stage }, files);
    }
    (stage, files)
}

fn fmt_pair(family_names: &[String], (i, j): (usize, usize)) -> String {
    format!("{{{},{}}}", family_names[i], family_names[j])
}

pub fn operator_commutativity(family: &SymbolFamily, config: &RunConfig) -> (StageVerdict, Files) {
    let nm = &config.numerics;
    let table = match commutativity_matrix(family, &nm.h_list, nm.truncation, nm.tau_comm) {
        Ok(t) => t,
        Err(e) => return (StageVerdict::failed(OPERATOR, e.to_string()), Vec::new()),
    };
    let rows = table.entries.iter().map(|e| {
        vec![
            e.h.to_string(),
            e.lambda.to_string(),
            e.n.to_string(),
            fmt_pair(family.names(), e.pair),
            e.commutator_norm.to_string(),
        ]
    });
    let csv = csv_bytes(&["h", "lambda", "N", "pair", "commutator_norm"], rows);
    let mut stage = StageVerdict::new(OPERATOR);
    let max_norm = table.entries.iter().map(|e| e.commutator_norm).fold(0.0, f64::max);
    stage.push(Residual::new("max_commutator_norm", max_norm, nm.tau_comm, None));
    if let CommutativityVerdict::NotCommutative { pair, names, h, norm } = &table.verdict {
        stage.witness = Some(json!({ "pair": [pair.0, pair.1], "names": [names.0, names.1], "h": h, "norm": norm }));
    }
    stage.data = json!({ "per_h_max": table.per_h_max, "file": "operator_commutators.csv" });
    (stage.settle(), vec![("operator_commutators.csv".into(), csv)])
}

pub fn correspondence(chart: &SymplecticChart, family: &SymbolFamily, config: &RunConfig, points: &[Vec<f64>]) -> (StageVerdict, Files) {
    let nm = &config.numerics;
    let scan = match correspondence_scan(family.get(0), family.get(1), &nm.h_list, nm.truncation, chart, points) {
        Ok(s) => s,
        Err(e) => return (StageVerdict::failed(CORRESPONDENCE, e.to_string()), Vec::new()),
    };
    let label = fmt_pair(family.names(), (0, 1));
    let rows = scan.rows.iter().map(|r| {
        vec![
            r.h.to_string(),
            r.lambda.to_string(),
            r.n.to_string(),
            label.clone(),
            r.commutator_norm.to_string(),
        ]
    });
    let csv = csv_bytes(&["h", "lambda", "N", "pair", "commutator_norm"], rows);
    let mut stage = StageVerdict::new(CORRESPONDENCE);
    let max_c = scan.rows.iter().map(|r| r.commutator_norm).fold(0.0, f64::max);
    let [lo, hi] = nm.slope_band;
    if scan.bracket_max > nm.tau_comm {
        match scan.slope {
            Some(s) => stage.push(Residual::new("slope_band_excess", (lo - s).max(s - hi).max(0.0), 0.0, None)),
            None => {
                stage.status = Status::Fail;
                stage.notices.push("some C(h) vanished although the bracket does not; slope undefined".into());
            }
        }
    } else {
        stage.notices.push("classical bracket vanishes on the lattice: checking the noise floor".into());
        stage.push(Residual::new("max_commutator_norm", max_c, nm.tau_comm, None));
    }
    stage.data = json!({
        "rows": scan.rows,
        "slope": scan.slope,
        "slope_band": nm.slope_band,
        "bracket_max": scan.bracket_max,
        "bracket_argmax": scan.bracket_argmax,
        "file": "scan.csv",
    });
    let stage = stage.settle();
    let stage = if stage.status == Status::Fail {
        StageVerdict {
            witness: Some(json!({ "slope": scan.slope, "max_commutator_norm": max_c })),
            ..stage
        }
    } else {
        stage
    };
    (stage, vec![("scan.csv".into(), csv)])
}

pub fn toeplitz(config: &RunConfig, symbols: &[(String, DiskSymbol)]) -> (StageVerdict, Files) {
    let nm = &config.numerics;
    let mut files = Vec::new();
    let mut per_h = Vec::new();
    let mut worst: (f64, Option<Value>) = (0.0, None);
    for (hi, &h) in nm.h_list.iter().enumerate() {
        let space = match space_for(config, h) {
            Ok(s) => s,
            Err(e) => return (StageVerdict::failed(OPERATOR, e.to_string()), Vec::new()),
        };
        let ops: Result<Vec<OperatorMatrix>, _> = symbols.iter().map(|(_, s)| toeplitz_matrix(&space, s)).collect();
        let ops = match ops {
            Ok(o) => o,
            Err(e) => return (StageVerdict::failed(OPERATOR, e.to_string()), Vec::new()),
        };
        let mut wick = Vec::new();
        for ((name, _), op) in symbols.iter().zip(&ops) {
            let m = op.entries();
            let rows = (0..m.nrows()).flat_map(|j| {
                (0..m.ncols()).map(move |k| {
                    vec![j.to_string(), k.to_string(), m[(j, k)].re.to_string(), m[(j, k)].im.to_string()]
                })
            });
            files.push((format!("matrix_{name}_h{hi}.csv"), csv_bytes(&["j", "k", "re", "im"], rows)));
            if !config.grids.wick_samples.is_empty() {
                if let Ok(w) = wick_symbol(&space, op, &config.grids.wick_samples) {
                    wick.push(json!({
                        "symbol": name,
                        "re": w.values.iter().map(|v| v.re).collect::<Vec<_>>(),
                        "im": w.values.iter().map(|v| v.im).collect::<Vec<_>>(),
                        "unreliable": w.unreliable,
                    }));
                }
            }
        }
        let mut norms = Vec::new();
        for (i, j) in pairs(ops.len()) {
            let c = match commutator_norm(&ops[i], &ops[j], NormMode::Operator) {
                Ok(c) => c,
                Err(e) => return (StageVerdict::failed(OPERATOR, e.to_string()), Vec::new()),
            };
            if worst.1.is_none() || c > worst.0 {
                worst = (c, Some(json!({ "pair": [i, j], "names": [symbols[i].0, symbols[j].0], "h": h, "norm": c })));
            }
            norms.push(json!({ "pair": [i, j], "commutator_norm": c }));
        }
        per_h.push(json!({
            "h": h,
            "lambda": space.lambda(),
            "N": space.truncation(),
            "commutators": norms,
            "operator_norms": ops.iter().map(|o| o.operator_norm()).collect::<Vec<_>>(),
            "wick": wick,
        }));
    }
    let mut stage = StageVerdict::new(OPERATOR);
    stage.push(Residual::new("max_commutator_norm", worst.0, nm.tau_comm, None));
    stage.data = json!({ "per_h": per_h, "wick_samples": config.grids.wick_samples });
    let stage = stage.settle();
    if stage.status == Status::Fail {
        return (StageVerdict { witness: worst.1, ..stage }, files);
    }
    (stage, files)
}
