use std::f64::consts::TAU;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{BergmanError, BergmanSpace, C64};
use crate::symbol::Symbol;

/// Wick symbols are only trusted inside this radius at finite truncation.
pub const RELIABLE_RADIUS: f64 = 0.9;

/// A bounded function on the disk in the variables `x1 = Re z`, `y1 = Im z`.
#[derive(Debug, Clone)]
pub enum DiskSymbol {
    Real(Symbol),
    Complex { re: Symbol, im: Symbol },
}

impl DiskSymbol {
    pub fn real(a: Symbol) -> Result<Self, BergmanError> {
        check_dim(&a)?;
        Ok(DiskSymbol::Real(a))
    }

    pub fn complex(re: Symbol, im: Symbol) -> Result<Self, BergmanError> {
        check_dim(&re)?;
        check_dim(&im)?;
        Ok(DiskSymbol::Complex { re, im })
    }

    pub fn is_real(&self) -> bool {
        matches!(self, DiskSymbol::Real(_))
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<C64, BergmanError> {
        let p = [x, y];
        Ok(match self {
            DiskSymbol::Real(a) => C64::new(a.eval(&p)?, 0.0),
            DiskSymbol::Complex { re, im } => C64::new(re.eval(&p)?, im.eval(&p)?),
        })
    }
}

impl fmt::Display for DiskSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiskSymbol::Real(a) => write!(f, "{}", a.ast()),
            DiskSymbol::Complex { re, im } => write!(f, "({}) + i({})", re.ast(), im.ast()),
        }
    }
}

fn check_dim(a: &Symbol) -> Result<(), BergmanError> {
    if a.dim() != 1 {
        return Err(BergmanError::SymbolDimension(a.dim()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Operator,
    Frobenius,
}

/// An operator compressed to `span{e_0, …, e_N}`.
///
/// The compression to the guarded span `{e_0, …, e_{N+guard}}` is kept as
/// well: products are formed there and cut back to the `N + 1` block, which
/// keeps the rim of the block free of the artefacts a product of two
/// truncated matrices would have in its last rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    entries: DMatrix<C64>,
    extended: DMatrix<C64>,
    pub h: f64,
    pub lambda: f64,
    pub n: usize,
    guard: usize,
    pub label: String,
}

impl OperatorMatrix {
    fn from_extended(space: &BergmanSpace, extended: DMatrix<C64>, label: String) -> Self {
        let size = space.size();
        Self {
            entries: extended.view((0, 0), (size, size)).into_owned(),
            extended,
            h: space.h(),
            lambda: space.lambda(),
            n: space.truncation(),
            guard: space.guard(),
            label,
        }
    }

    pub fn identity(space: &BergmanSpace) -> Self {
        let m = space.extended_size();
        Self::from_extended(space, DMatrix::identity(m, m), "1".into())
    }

    /// The `(N+1) × (N+1)` matrix `A_{jk} = ⟨A e_k, e_j⟩`.
    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.n + 1
    }

    pub fn operator_norm(&self) -> f64 {
        spectral_norm(&self.entries)
    }

    fn check_space(&self, other: &OperatorMatrix) -> Result<(), BergmanError> {
        if self.lambda != other.lambda || self.n != other.n || self.guard != other.guard {
            let tag = |a: &OperatorMatrix| format!("λ={}, N={}, guard={}", a.lambda, a.n, a.guard);
            return Err(BergmanError::SpaceMismatch {
                left: tag(self),
                right: tag(other),
            });
        }
        Ok(())
    }

    fn with_extended(&self, extended: DMatrix<C64>, label: String) -> Self {
        let size = self.size();
        Self {
            entries: extended.view((0, 0), (size, size)).into_owned(),
            extended,
            h: self.h,
            lambda: self.lambda,
            n: self.n,
            guard: self.guard,
            label,
        }
    }

    /// `AB − BA`.
    pub fn commutator(&self, other: &OperatorMatrix) -> Result<OperatorMatrix, BergmanError> {
        self.check_space(other)?;
        let c = &self.extended * &other.extended - &other.extended * &self.extended;
        Ok(self.with_extended(c, format!("[{}, {}]", self.label, other.label)))
    }
}

fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// `T_a` compressed to the space, by tensor quadrature: Gauss–Legendre in
/// `r²` and an FFT over uniform angles at each radial node.
pub fn toeplitz_matrix(space: &BergmanSpace, a: &DiskSymbol) -> Result<OperatorMatrix, BergmanError> {
    let m = space.extended_size();
    let n_theta = space.angular_nodes();
    let rule = space.radial();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_theta);
    let real = a.is_real();

    // modes[i][d + m - 1] = (1/n_θ) Σ_l a(r_i, θ_l) e^{i d θ_l}
    let modes: Vec<Vec<C64>> = rule
        .u
        .par_iter()
        .map(|&u| -> Result<Vec<C64>, BergmanError> {
            let r = u.sqrt();
            let mut buf = (0..n_theta)
                .map(|l| {
                    let theta = TAU * l as f64 / n_theta as f64;
                    a.eval(r * theta.cos(), r * theta.sin())
                })
                .collect::<Result<Vec<_>, _>>()?;
            fft.process(&mut buf);
            let scale = 1.0 / n_theta as f64;
            let mut out = vec![C64::new(0.0, 0.0); 2 * m - 1];
            for d in 0..m as i64 {
                let plus = buf[(-d).rem_euclid(n_theta as i64) as usize] * scale;
                let minus = buf[d as usize % n_theta] * scale;
                let (plus, minus) = if real {
                    (plus, plus.conj())
                } else {
                    (plus, minus)
                };
                out[(d + m as i64 - 1) as usize] = plus;
                out[(m as i64 - 1 - d) as usize] = minus;
            }
            if real {
                out[m - 1].im = 0.0;
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let basis: Vec<Vec<f64>> = rule
        .u
        .iter()
        .map(|&u| (0..m).map(|k| space.basis_modulus(k, u.sqrt())).collect())
        .collect();

    let columns: Vec<Vec<C64>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let rows = if real { k + 1 } else { m };
            (0..rows)
                .map(|j| {
                    let offset = k + m - 1 - j;
                    let mut acc = C64::new(0.0, 0.0);
                    for (i, w) in rule.w.iter().enumerate() {
                        acc += modes[i][offset] * (w * basis[i][j] * basis[i][k]);
                    }
                    acc
                })
                .collect()
        })
        .collect();

    let mut full = DMatrix::from_element(m, m, C64::new(0.0, 0.0));
    for (k, col) in columns.iter().enumerate() {
        for (j, &v) in col.iter().enumerate() {
            full[(j, k)] = v;
            if real {
                full[(k, j)] = v.conj();
            }
        }
    }
    Ok(OperatorMatrix::from_extended(space, full, a.to_string()))
}

/// Norm of `AB − BA` on the `N + 1` block.
pub fn commutator_norm(a: &OperatorMatrix, b: &OperatorMatrix, mode: NormMode) -> Result<f64, BergmanError> {
    let c = a.commutator(b)?;
    Ok(match mode {
        NormMode::Operator => spectral_norm(c.entries()),
        NormMode::Frobenius => c.entries().norm(),
    })
}

/// Operator composition `AB`, the star product of the Wick symbols at truncation.
pub fn star_product(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix, BergmanError> {
    a.check_space(b)?;
    Ok(a.with_extended(&a.extended * &b.extended, format!("{} * {}", a.label, b.label)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WickSymbolGrid {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<C64>,
    pub h: f64,
    pub lambda: f64,
    pub n: usize,
    /// Indices of samples with `|z| > RELIABLE_RADIUS`.
    pub unreliable: Vec<usize>,
}

/// `ã(z) = Σ A_{jk} e_j(z) conj(e_k(z)) / Σ |e_k(z)|²` on the `N + 1` block.
pub fn wick_symbol(space: &BergmanSpace, a: &OperatorMatrix, samples: &[[f64; 2]]) -> Result<WickSymbolGrid, BergmanError> {
    if a.lambda != space.lambda() || a.n != space.truncation() {
        return Err(BergmanError::SpaceMismatch {
            left: space.label(),
            right: format!("λ={}, N={}", a.lambda, a.n),
        });
    }
    let size = space.size();
    let mut unreliable = Vec::new();
    let values = samples
        .iter()
        .enumerate()
        .map(|(s, &[x, y])| {
            let r = x.hypot(y);
            if r > RELIABLE_RADIUS {
                unreliable.push(s);
            }
            let theta = y.atan2(x);
            let e: Vec<C64> = (0..size)
                .map(|k| C64::from_polar(space.basis_modulus(k, r), k as f64 * theta))
                .collect();
            let kernel: f64 = e.iter().map(|v| v.norm_sqr()).sum();
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..size {
                for k in 0..size {
                    acc += a.entries[(j, k)] * e[j] * e[k].conj();
                }
            }
            acc / kernel
        })
        .collect();
    Ok(WickSymbolGrid {
        points: samples.to_vec(),
        values,
        h: space.h(),
        lambda: space.lambda(),
        n: space.truncation(),
        unreliable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::Symbol;

    fn real(expr: &str) -> DiskSymbol {
        DiskSymbol::real(Symbol::parse(expr, 1).unwrap()).unwrap()
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn gamma_ratio(k: usize, lambda: f64) -> f64 {
        (1..=k).map(|i| i as f64 / (i as f64 + lambda + 1.0)).product()
    }

    #[test]
    fn constant_symbol_gives_identity() {
        for lambda in [0.0, 2.0, 6.0, 20.0, 38.0] {
            let s = BergmanSpace::from_lambda(lambda, 32).unwrap();
            let t = toeplitz_matrix(&s, &real("1")).unwrap();
            let id = DMatrix::<C64>::identity(33, 33);
            assert!(max_abs(&(t.entries() - id)) <= 1e-12, "λ={lambda}");
        }
    }

    #[test]
    fn gram_matrix_by_direct_summation() {
        // independent of the FFT path: plain double sums over the tensor grid
        let s = BergmanSpace::from_lambda(6.0, 12).unwrap();
        let rule = s.radial();
        let nt = s.angular_nodes();
        for j in 0..=12usize {
            for k in 0..=12usize {
                let mut acc = C64::new(0.0, 0.0);
                for (u, w) in rule.u.iter().zip(&rule.w) {
                    let r = u.sqrt();
                    let norm = (gamma_ratio(j, 6.0) * gamma_ratio(k, 6.0)).sqrt();
                    for l in 0..nt {
                        let th = TAU * l as f64 / nt as f64;
                        let phase = C64::from_polar(1.0, (k as f64 - j as f64) * th);
                        acc += phase * (w * r.powi((j + k) as i32) / norm / nt as f64);
                    }
                }
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((acc - expected).norm() <= 1e-10, "({j},{k}) {acc}");
            }
        }
    }

    #[test]
    fn radial_symbol_is_diagonal_with_moment_ratios() {
        let s = BergmanSpace::from_lambda(0.0, 32).unwrap();
        let t = toeplitz_matrix(&s, &real("x1^2 + y1^2")).unwrap();
        assert!((t.entries()[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((t.entries()[(1, 1)].re - 2.0 / 3.0).abs() < 1e-12);
        for j in 0..33 {
            for k in 0..33 {
                let v = t.entries()[(j, k)];
                if j == k {
                    let oracle = gamma_ratio(k + 1, 0.0) / gamma_ratio(k, 0.0);
                    assert!((v.re - oracle).abs() <= 1e-10 && v.im == 0.0);
                } else {
                    assert!(v.norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn real_part_of_z_is_tridiagonal() {
        let s = BergmanSpace::from_lambda(0.0, 2).unwrap();
        let t = toeplitz_matrix(&s, &real("x1")).unwrap();
        let a01 = 0.5 * 0.5f64.sqrt();
        assert!((t.entries()[(0, 1)].re - a01).abs() < 1e-10);
        for j in 0..3usize {
            for k in 0..3usize {
                if j.abs_diff(k) != 1 {
                    assert!(t.entries()[(j, k)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn complex_symbol_z_is_a_weighted_shift() {
        // T_z e_k = sqrt(‖z^{k+1}‖²/‖z^k‖²) e_{k+1}
        let s = BergmanSpace::from_lambda(2.0, 10).unwrap();
        let z = DiskSymbol::complex(Symbol::parse("x1", 1).unwrap(), Symbol::parse("y1", 1).unwrap()).unwrap();
        let t = toeplitz_matrix(&s, &z).unwrap();
        for j in 0..11 {
            for k in 0..11 {
                let expected = if j == k + 1 {
                    (gamma_ratio(k + 1, 2.0) / gamma_ratio(k, 2.0)).sqrt()
                } else {
                    0.0
                };
                assert!((t.entries()[(j, k)] - expected).norm() < 1e-12, "({j},{k})");
            }
        }
    }

    #[test]
    fn real_symbols_give_hermitian_matrices() {
        let s = BergmanSpace::new(0.2, 24).unwrap();
        for expr in ["x1", "y1", "x1^3 - x1*y1 + 2", "exp(-(x1^2+y1^2))*sin(3*x1)"] {
            let t = toeplitz_matrix(&s, &real(expr)).unwrap();
            let defect = t.entries() - t.entries().adjoint();
            assert!(max_abs(&defect) <= 1e-12, "{expr}");
        }
    }

    #[test]
    fn positivity_and_norm_bound() {
        let s = BergmanSpace::new(0.25, 24).unwrap();
        let t = toeplitz_matrix(&s, &real("(x1 - 0.3)^2 + y1^4")).unwrap();
        let eig = t.entries().clone().symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-10));
        let t = toeplitz_matrix(&s, &real("sin(4*x1)*cos(y1)")).unwrap();
        assert!(t.operator_norm() <= 1.0 + 1e-10);
    }

    #[test]
    fn commutators() {
        let s = BergmanSpace::from_lambda(0.0, 32).unwrap();
        let a = toeplitz_matrix(&s, &real("x1^2 + y1^2")).unwrap();
        let b = toeplitz_matrix(&s, &real("(x1^2 + y1^2)^2")).unwrap();
        assert_eq!(commutator_norm(&a, &a, NormMode::Operator).unwrap(), 0.0);
        assert!(commutator_norm(&a, &b, NormMode::Operator).unwrap() <= 1e-10);
        assert!(commutator_norm(&a, &b, NormMode::Frobenius).unwrap() <= 1e-10);
        let other = BergmanSpace::from_lambda(0.0, 16).unwrap();
        let c = toeplitz_matrix(&other, &real("x1")).unwrap();
        assert!(matches!(commutator_norm(&a, &c, NormMode::Operator), Err(BergmanError::SpaceMismatch { .. })));
    }

    #[test]
    fn real_and_imaginary_part_regression() {
        // pinned: the compressed commutator is diagonal with largest entry
        // 1 / (2(λ + 2)) = h / 4
        let s = BergmanSpace::new(0.5, 32).unwrap();
        let x = toeplitz_matrix(&s, &real("x1")).unwrap();
        let y = toeplitz_matrix(&s, &real("y1")).unwrap();
        let c = commutator_norm(&x, &y, NormMode::Operator).unwrap();
        assert!((c - 0.125).abs() < 1e-12, "{c}");
    }

    #[test]
    fn star_product_algebra() {
        let s = BergmanSpace::new(0.3, 16).unwrap();
        let a = toeplitz_matrix(&s, &real("x1*y1 + x1")).unwrap();
        let b = toeplitz_matrix(&s, &real("y1^2")).unwrap();
        let id = OperatorMatrix::identity(&s);
        assert_eq!(star_product(&id, &a).unwrap().entries(), a.entries());
        let ab = star_product(&a, &b).unwrap();
        let ba = star_product(&b, &a).unwrap();
        let comm = a.commutator(&b).unwrap();
        assert_eq!(&(ab.entries() - ba.entries()), comm.entries());
        let r1 = toeplitz_matrix(&s, &real("x1^2 + y1^2")).unwrap();
        let r2 = toeplitz_matrix(&s, &real("exp(-(x1^2 + y1^2))")).unwrap();
        let d = star_product(&r1, &r2).unwrap().entries() - star_product(&r2, &r1).unwrap().entries();
        assert!(max_abs(&d) <= 1e-15);
    }

    #[test]
    fn wick_symbols() {
        let s = BergmanSpace::from_lambda(0.0, 32).unwrap();
        let samples: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let r = 0.9 * (i as f64 / 39.0);
                let th = 0.7 * i as f64;
                [r * th.cos(), r * th.sin()]
            })
            .collect();
        let id = wick_symbol(&s, &OperatorMatrix::identity(&s), &samples).unwrap();
        assert!(id.values.iter().all(|v| (v - 1.0).norm() <= 1e-10));
        assert!(id.unreliable.is_empty());

        let t = toeplitz_matrix(&s, &real("x1^2 + y1^2")).unwrap();
        let w = wick_symbol(&s, &t, &[[0.0, 0.0], [0.95, 0.0]]).unwrap();
        assert!((w.values[0].re - 0.5).abs() < 1e-12);
        assert_eq!(w.unreliable, vec![1]);
        let t = toeplitz_matrix(&s, &real("x1")).unwrap();
        assert!(wick_symbol(&s, &t, &[[0.0, 0.0]]).unwrap().values[0].norm() < 1e-15);
    }
}
