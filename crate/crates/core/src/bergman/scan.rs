use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{commutator_norm, toeplitz_matrix, BergmanError, BergmanSpace, DiskSymbol, NormMode};
use crate::symbol::{Symbol, SymbolFamily};
use crate::symplectic::SymplecticChart;

/// Truncation degree as a function of `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationRule {
    Fixed(usize),
    /// `N(h) = min(cap, ⌈factor / h⌉)`.
    Scaled { factor: f64, cap: usize },
}

impl Default for TruncationRule {
    fn default() -> Self {
        TruncationRule::Scaled { factor: 8.0, cap: 160 }
    }
}

impl TruncationRule {
    pub fn degree(&self, h: f64) -> usize {
        match *self {
            TruncationRule::Fixed(n) => n,
            TruncationRule::Scaled { factor, cap } => ((factor / h - 1e-9).ceil() as usize).clamp(1, cap),
        }
    }

    /// The same rule at twice the degree.
    pub fn doubled(&self) -> Self {
        match *self {
            TruncationRule::Fixed(n) => TruncationRule::Fixed(2 * n),
            TruncationRule::Scaled { factor, cap } => TruncationRule::Scaled {
                factor: 2.0 * factor,
                cap: 2 * cap,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub h: f64,
    pub lambda: f64,
    pub n: usize,
    pub commutator_norm: f64,
    pub frobenius_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceScan {
    pub rows: Vec<ScanRow>,
    /// Least-squares slope of `log C` against `log h`; `None` when some `C(h)` vanishes.
    pub slope: Option<f64>,
    /// `max |{a, b}|` over the bracket sample points, under the reference chart.
    pub bracket_max: f64,
    pub bracket_argmax: Option<Vec<f64>>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn check_h_list(h_list: &[f64], min_len: usize) -> Result<(), BergmanError> {
    if h_list.len() < min_len {
        return Err(BergmanError::InvalidScan(format!(
            "need at least {min_len} values of h, got {}",
            h_list.len()
        )));
    }
    if let Some(&h) = h_list.iter().find(|&&h| !(h > 0.0 && h < 1.0)) {
        return Err(BergmanError::InvalidWeight(h));
    }
    Ok(())
}

/// Operator commutator norms `C(h) = ‖[T_a, T_b]‖` along `h_list`, their
/// log–log slope, and the size of the classical bracket for comparison.
pub fn correspondence_scan(
    a: &Symbol,
    b: &Symbol,
    h_list: &[f64],
    rule: TruncationRule,
    bracket_chart: &SymplecticChart,
    bracket_points: &[Vec<f64>],
) -> Result<CorrespondenceScan, BergmanError> {
    check_h_list(h_list, 3)?;
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(BergmanError::InvalidScan("h values must be strictly decreasing".into()));
    }
    let (da, db) = (DiskSymbol::real(a.clone())?, DiskSymbol::real(b.clone())?);
    let rows = h_list
        .par_iter()
        .map(|&h| -> Result<ScanRow, BergmanError> {
            let space = BergmanSpace::new(h, rule.degree(h))?;
            let ta = toeplitz_matrix(&space, &da)?;
            let tb = toeplitz_matrix(&space, &db)?;
            Ok(ScanRow {
                h,
                lambda: space.lambda(),
                n: space.truncation(),
                commutator_norm: commutator_norm(&ta, &tb, NormMode::Operator)?,
                frobenius_norm: commutator_norm(&ta, &tb, NormMode::Frobenius)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let cs: Vec<f64> = rows.iter().map(|r| r.commutator_norm).collect();

    let mut bracket_max = 0.0f64;
    let mut bracket_argmax = None;
    for p in bracket_points {
        let v = bracket_chart
            .poisson_bracket(a, b, p)
            .map_err(|e| BergmanError::InvalidScan(e.to_string()))?
            .abs();
        if v > bracket_max {
            bracket_max = v;
            bracket_argmax = Some(p.clone());
        }
    }
    Ok(CorrespondenceScan {
        slope: log_log_slope(&hs, &cs),
        rows,
        bracket_max,
        bracket_argmax,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairNorm {
    pub h: f64,
    pub lambda: f64,
    pub n: usize,
    pub pair: (usize, usize),
    pub commutator_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CommutativityVerdict {
    Commutative {
        max_norm: f64,
    },
    NotCommutative {
        pair: (usize, usize),
        names: (String, String),
        h: f64,
        norm: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutativityTable {
    /// One entry per `(h, pair)`, `h` in input order, pairs lexicographic.
    pub entries: Vec<PairNorm>,
    /// `(h, max pairwise norm)`.
    pub per_h_max: Vec<(f64, f64)>,
    pub verdict: CommutativityVerdict,
}

/// Pairwise operator commutator norms of a family over `h_list`.
pub fn commutativity_matrix(
    family: &SymbolFamily,
    h_list: &[f64],
    rule: TruncationRule,
    tau_comm: f64,
) -> Result<CommutativityTable, BergmanError> {
    check_h_list(h_list, 1)?;
    let symbols = family
        .members()
        .iter()
        .map(|m| DiskSymbol::real(m.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let k = symbols.len();
    let per_h = h_list
        .par_iter()
        .map(|&h| -> Result<Vec<PairNorm>, BergmanError> {
            let space = BergmanSpace::new(h, rule.degree(h))?;
            let ops = symbols
                .iter()
                .map(|s| toeplitz_matrix(&space, s))
                .collect::<Result<Vec<_>, _>>()?;
            let mut out = Vec::new();
            for i in 0..k {
                for j in i + 1..k {
                    out.push(PairNorm {
                        h,
                        lambda: space.lambda(),
                        n: space.truncation(),
                        pair: (i, j),
                        commutator_norm: commutator_norm(&ops[i], &ops[j], NormMode::Operator)?,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let per_h_max = h_list
        .iter()
        .zip(&per_h)
        .map(|(&h, rows)| (h, rows.iter().map(|r| r.commutator_norm).fold(0.0, f64::max)))
        .collect();
    let entries: Vec<PairNorm> = per_h.into_iter().flatten().collect();
    let worst = entries
        .iter()
        .fold(None::<&PairNorm>, |w, e| match w {
            Some(w) if w.commutator_norm >= e.commutator_norm => Some(w),
            _ => Some(e),
        });
    let verdict = match worst {
        Some(w) if w.commutator_norm > tau_comm => CommutativityVerdict::NotCommutative {
            pair: w.pair,
            names: (family.names()[w.pair.0].clone(), family.names()[w.pair.1].clone()),
            h: w.h,
            norm: w.commutator_norm,
        },
        w => CommutativityVerdict::Commutative {
            max_norm: w.map_or(0.0, |w| w.commutator_norm),
        },
    };
    Ok(CommutativityTable {
        entries,
        per_h_max,
        verdict,
    })
}
