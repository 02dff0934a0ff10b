//! Functions of a Lagrangian submersion Poisson-commute.

use rayon::prelude::*;
use serde::Serialize;

use super::frame::isotropy_residual;
use super::FoliationError;
use crate::symbol::{OuterFunction, Symbol, SymbolFamily};
use crate::symplectic::SymplecticChart;

/// Default bound on pairwise `|{F_i, F_j}|` for the submersion.
pub const DEFAULT_ISOTROPY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbelianCheck {
    /// `max |{a, b}|` over pairs and grid points.
    pub max_bracket: f64,
    pub argmax: Option<Vec<f64>>,
    /// Largest pairwise isotropy residual of the submersion on the grid.
    pub isotropy: f64,
}

/// Builds `(u∘F, v∘F)` from outer expressions in `s1..sk`, `k = |F|`.
pub fn compose_pair(submersion: &SymbolFamily, u: &str, v: &str) -> Result<(Symbol, Symbol), FoliationError> {
    let inner: Vec<_> = submersion.members().iter().map(|m| m.ast().clone()).collect();
    let build = |text: &str| -> Result<Symbol, FoliationError> {
        let outer = OuterFunction::parse(text, inner.len())?;
        Ok(Symbol::new(outer.compose(&inner)?))
    };
    Ok((build(u)?, build(v)?))
}

/// Checks the submersion's level sets are isotropic on `grid`, then returns
/// the largest `|{a, b}|` over the given composed pairs.
pub fn prop_abelian_check(
    chart: &SymplecticChart,
    submersion: &SymbolFamily,
    pairs: &[(Symbol, Symbol)],
    grid: &[Vec<f64>],
    isotropy_tol: f64,
) -> Result<AbelianCheck, FoliationError> {
    let k = submersion.len();
    let mut isotropy = 0.0f64;
    for p in grid {
        for i in 0..k {
            for j in i + 1..k {
                let value = chart.poisson_bracket(submersion.get(i), submersion.get(j), p)?.abs();
                if value > isotropy_tol {
                    return Err(FoliationError::PreconditionViolated {
                        pair: (i, j),
                        names: (submersion.names()[i].clone(), submersion.names()[j].clone()),
                        value,
                        point: p.clone(),
                    });
                }
            }
        }
        if k >= 2 {
            isotropy = isotropy.max(isotropy_residual(chart, submersion, p)?);
        }
    }
    let per_point: Vec<(f64, &Vec<f64>)> = grid
        .par_iter()
        .map(|p| -> Result<_, FoliationError> {
            let mut worst = 0.0f64;
            for (a, b) in pairs {
                worst = worst.max(chart.poisson_bracket(a, b, p)?.abs());
            }
            Ok((worst, p))
        })
        .collect::<Result<_, _>>()?;
    let (max_bracket, argmax) = per_point
        .into_iter()
        .fold((0.0, None), |(m, arg), (v, p)| if v > m { (v, Some(p.clone())) } else { (m, arg) });
    Ok(AbelianCheck { max_bracket, argmax, isotropy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::Lattice;

    #[test]
    fn functions_of_one_hamiltonian() {
        let chart = SymplecticChart::standard_disk(1.0).unwrap();
        let f = SymbolFamily::parse(&["x1^2 + y1^2"], 1).unwrap();
        let pair = compose_pair(&f, "s1", "s1^2").unwrap();
        let grid: Vec<_> = Lattice::covering(&chart, 32)
            .points_in(&chart)
            .into_iter()
            .filter(|p| p[0].hypot(p[1]) > 1e-3)
            .collect();
        let check = prop_abelian_check(&chart, &f, &[pair], &grid, DEFAULT_ISOTROPY_TOL).unwrap();
        assert!(check.max_bracket <= 1e-12, "{check:?}");
    }

    #[test]
    fn functions_of_coordinates() {
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let f = SymbolFamily::parse(&["x1", "x2"], 2).unwrap();
        let pair = compose_pair(&f, "sin(s1)", "exp(s2)").unwrap();
        let grid = Lattice::covering(&chart, 5).points_in(&chart);
        let check = prop_abelian_check(&chart, &f, &[pair], &grid, DEFAULT_ISOTROPY_TOL).unwrap();
        assert!(check.max_bracket <= 1e-12);
        assert_eq!(check.isotropy, 0.0);
    }

    #[test]
    fn canonical_pair_is_rejected() {
        let chart = SymplecticChart::standard_box(2, -1.0, 1.0).unwrap();
        let f = SymbolFamily::parse(&["x1", "y1"], 2).unwrap();
        let pair = compose_pair(&f, "s1", "s2").unwrap();
        let grid = Lattice::covering(&chart, 3).points_in(&chart);
        match prop_abelian_check(&chart, &f, &[pair], &grid, DEFAULT_ISOTROPY_TOL) {
            Err(FoliationError::PreconditionViolated { pair, names, value, .. }) => {
                assert_eq!(pair, (0, 1));
                assert_eq!(names, ("a1".to_string(), "a2".to_string()));
                assert!((value - 1.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }
}
