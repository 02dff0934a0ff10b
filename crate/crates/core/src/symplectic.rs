//! Symplectic linear algebra on a chart of `R^{2n}`.
//!
//! Conventions, fixed once here:
//!
//! * the form acts as `ω_p(u, v) = uᵀ Ω(p) v`;
//! * the Hamiltonian field of `f` satisfies `df(v) = ω(X_f, v)` for every `v`,
//!   i.e. it solves `Ω(p)ᵀ X_f = ∇f(p)`;
//! * `{f, g} = ω(X_f, X_g) = df(X_g)`, so on the standard chart `{x1, y1} = 1`;
//! * the Lie bracket of vector fields is `[X, Y] = DX·Y − DY·X`, the sign under
//!   which `[X_f, X_g] = X_{f,g}` holds with the conventions above.
//!
//! Coordinates are interleaved `(x1, y1, ..., xn, yn)`; the standard form pairs
//! `x_i` with `y_i` through 2×2 blocks `[[0, 1], [-1, 0]]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::symbol::{Symbol, SymbolError};

/// Default central finite-difference step for derivatives of computed fields.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("point {point:?} lies outside the chart region")]
    OutsideRegion { point: Vec<f64> },
    #[error("point {point:?} has boundary margin {available:e}, needs at least {required:e}")]
    Margin {
        point: Vec<f64>,
        required: f64,
        available: f64,
    },
    #[error("symplectic form is singular at {point:?}")]
    SingularForm { point: Vec<f64> },
    #[error("dimension mismatch: chart has {expected} coordinates, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// The open box `(lo, hi)^{2n}`.
    Box { lo: f64, hi: f64 },
    /// The open disk of the given radius (`n = 1` only).
    Disk { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormKind {
    Standard,
    /// `c (1 − |p|²)^{-2} dx∧dy` on a disk of radius < 1.
    BergmanDisk { constant: f64 },
}

/// An open region of `R^{2n}` carrying a symplectic form field.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticChart {
    n: usize,
    region: Region,
    form: FormKind,
}

impl SymplecticChart {
    pub fn new(n: usize, region: Region, form: FormKind) -> Result<Self, GeometryError> {
        if n == 0 {
            return Err(GeometryError::InvalidChart("half-dimension must be positive".into()));
        }
        match region {
            Region::Box { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                return Err(GeometryError::InvalidChart(format!("empty box ({lo}, {hi})")));
            }
            Region::Disk { radius } => {
                if n != 1 {
                    return Err(GeometryError::InvalidChart("disk regions require n = 1".into()));
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(GeometryError::InvalidChart(format!("disk radius {radius} must be positive")));
                }
            }
            Region::Box { .. } => {}
        }
        if let FormKind::BergmanDisk { constant } = form {
            let Region::Disk { radius } = region else {
                return Err(GeometryError::InvalidChart("bergman-disk form needs a disk region".into()));
            };
            if radius >= 1.0 {
                return Err(GeometryError::InvalidChart(format!(
                    "bergman-disk radius {radius} must be < 1"
                )));
            }
            if !(constant > 0.0 && constant.is_finite()) {
                return Err(GeometryError::InvalidChart(format!(
                    "bergman-disk constant {constant} must be positive"
                )));
            }
        }
        Ok(Self { n, region, form })
    }

    pub fn standard_box(n: usize, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Self::new(n, Region::Box { lo, hi }, FormKind::Standard)
    }

    pub fn standard_disk(radius: f64) -> Result<Self, GeometryError> {
        Self::new(1, Region::Disk { radius }, FormKind::Standard)
    }

    pub fn bergman_disk(radius: f64, constant: f64) -> Result<Self, GeometryError> {
        Self::new(1, Region::Disk { radius }, FormKind::BergmanDisk { constant })
    }

    /// Half-dimension `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension `2n`.
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn form(&self) -> FormKind {
        self.form
    }

    /// Distance from `p` to the region boundary; negative outside.
    pub fn margin(&self, p: &[f64]) -> f64 {
        match self.region {
            Region::Box { lo, hi } => p
                .iter()
                .map(|&x| (x - lo).min(hi - x))
                .fold(f64::INFINITY, f64::min),
            Region::Disk { radius } => radius - p.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().all(|x| x.is_finite()) && self.margin(p) > 0.0
    }

    /// Axis-aligned bounds of the region, per coordinate.
    pub fn bounds(&self) -> (f64, f64) {
        match self.region {
            Region::Box { lo, hi } => (lo, hi),
            Region::Disk { radius } => (-radius, radius),
        }
    }

    fn check_point(&self, p: &[f64]) -> Result<(), GeometryError> {
        if p.len() != self.dim() {
            return Err(GeometryError::Dimension {
                expected: self.dim(),
                found: p.len(),
            });
        }
        if !self.contains(p) {
            return Err(GeometryError::OutsideRegion { point: p.to_vec() });
        }
        Ok(())
    }

    pub(crate) fn check_margin(&self, p: &[f64], required: f64) -> Result<(), GeometryError> {
        self.check_point(p)?;
        let available = self.margin(p);
        if available < required {
            return Err(GeometryError::Margin {
                point: p.to_vec(),
                required,
                available,
            });
        }
        Ok(())
    }

    fn form_scale(&self, p: &[f64]) -> f64 {
        match self.form {
            FormKind::Standard => 1.0,
            FormKind::BergmanDisk { constant } => {
                let s = 1.0 - p.iter().map(|x| x * x).sum::<f64>();
                constant / (s * s)
            }
        }
    }

    /// The matrix `Ω(p)` with `ω_p(u, v) = uᵀ Ω(p) v`.
    pub fn form_matrix(&self, p: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.check_point(p)?;
        let scale = self.form_scale(p);
        let mut omega = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.n {
            omega[(2 * i, 2 * i + 1)] = scale;
            omega[(2 * i + 1, 2 * i)] = -scale;
        }
        Ok(omega)
    }

    pub fn omega(&self, p: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> Result<f64, GeometryError> {
        let omega = self.form_matrix(p)?;
        Ok(u.dot(&(omega * v)))
    }

    /// `v ↦ ω_p(v, ·)`.
    pub fn flat(&self, v: &TangentVector) -> Result<Covector, GeometryError> {
        let omega = self.form_matrix(&v.base)?;
        Ok(Covector {
            base: v.base.clone(),
            components: omega.transpose() * &v.components,
        })
    }

    /// Inverse of [`flat`](Self::flat): the unique `v` with `ω_p(v, ·) = α`.
    pub fn sharp(&self, alpha: &Covector) -> Result<TangentVector, GeometryError> {
        let components = self.solve_dual(&alpha.base, alpha.components.clone())?;
        Ok(TangentVector {
            base: alpha.base.clone(),
            components,
        })
    }

    fn solve_dual(&self, p: &[f64], rhs: DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        let omega = self.form_matrix(p)?;
        omega
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| GeometryError::SingularForm { point: p.to_vec() })
    }

    /// Components of `X_f(p)`.
    pub fn field<F: ScalarField + ?Sized>(&self, f: &F, p: &[f64]) -> Result<DVector<f64>, GeometryError> {
        self.check_point(p)?;
        let grad = f.gradient(p)?;
        self.solve_dual(p, grad)
    }

    pub fn hamiltonian_field<F: ScalarField + ?Sized>(&self, f: &F, p: &[f64]) -> Result<TangentVector, GeometryError> {
        Ok(TangentVector {
            base: p.to_vec(),
            components: self.field(f, p)?,
        })
    }

    /// `{f, g}(p) = df_p(X_g(p))`.
    pub fn poisson_bracket<F, G>(&self, f: &F, g: &G, p: &[f64]) -> Result<f64, GeometryError>
    where
        F: ScalarField + ?Sized,
        G: ScalarField + ?Sized,
    {
        let xg = self.field(g, p)?;
        Ok(f.gradient(p)?.dot(&xg))
    }

    /// Jacobian of the Hamiltonian field of `f` by central differences.
    fn field_jacobian<F: ScalarField + ?Sized>(&self, f: &F, p: &[f64], step: f64) -> Result<DMatrix<f64>, GeometryError> {
        let dim = self.dim();
        let mut jac = DMatrix::zeros(dim, dim);
        let mut q = p.to_vec();
        for k in 0..dim {
            q[k] = p[k] + step;
            let plus = self.field(f, &q)?;
            q[k] = p[k] - step;
            let minus = self.field(f, &q)?;
            q[k] = p[k];
            jac.set_column(k, &((plus - minus) / (2.0 * step)));
        }
        Ok(jac)
    }

    /// `[X_f, X_g]` at `p`, derivatives by central differences.
    pub fn field_lie_bracket<F, G>(&self, f: &F, g: &G, p: &[f64], step: f64) -> Result<DVector<f64>, GeometryError>
    where
        F: ScalarField + ?Sized,
        G: ScalarField + ?Sized,
    {
        self.check_margin(p, step)?;
        let xf = self.field(f, p)?;
        let xg = self.field(g, p)?;
        let dxf = self.field_jacobian(f, p, step)?;
        let dxg = self.field_jacobian(g, p, step)?;
        Ok(dxf * xg - dxg * xf)
    }

    /// `|{f,{g,h}} + {g,{h,f}} + {h,{f,g}}|`; inner brackets are exact, outer
    /// ones differentiate the inner bracket by central differences.
    pub fn jacobi_residual<F, G, H>(&self, f: &F, g: &G, h: &H, p: &[f64], step: f64) -> Result<f64, GeometryError>
    where
        F: ScalarField + ?Sized,
        G: ScalarField + ?Sized,
        H: ScalarField + ?Sized,
    {
        self.check_margin(p, step)?;
        let gh = BracketField::new(self, g, h, step);
        let hf = BracketField::new(self, h, f, step);
        let fg = BracketField::new(self, f, g, step);
        let total = self.poisson_bracket(f, &gh, p)? + self.poisson_bracket(g, &hf, p)? + self.poisson_bracket(h, &fg, p)?;
        Ok(total.abs())
    }

    /// `‖[X_f, X_g](p) − X_{f,g}(p)‖₂`.
    pub fn field_bracket_residual<F, G>(&self, f: &F, g: &G, p: &[f64], step: f64) -> Result<f64, GeometryError>
    where
        F: ScalarField + ?Sized,
        G: ScalarField + ?Sized,
    {
        let lie = self.field_lie_bracket(f, g, p, step)?;
        let fg = BracketField::new(self, f, g, step);
        let x_fg = self.field(&fg, p)?;
        Ok((lie - x_fg).norm())
    }
}

/// A tangent vector at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Vec<f64>,
    pub components: DVector<f64>,
}

/// A cotangent vector at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct Covector {
    pub base: Vec<f64>,
    pub components: DVector<f64>,
}

impl Covector {
    pub fn apply(&self, v: &TangentVector) -> f64 {
        self.components.dot(&v.components)
    }
}

/// A smooth function with a gradient, analytic or numerical.
pub trait ScalarField: Sync {
    fn value(&self, p: &[f64]) -> Result<f64, GeometryError>;
    fn gradient(&self, p: &[f64]) -> Result<DVector<f64>, GeometryError>;
}

impl ScalarField for Symbol {
    fn value(&self, p: &[f64]) -> Result<f64, GeometryError> {
        Ok(self.eval(p)?)
    }

    fn gradient(&self, p: &[f64]) -> Result<DVector<f64>, GeometryError> {
        Ok(DVector::from_vec(Symbol::gradient(self, p)?))
    }
}

/// `{f, g}` as a function, with its gradient taken by central differences.
pub struct BracketField<'a, F: ?Sized, G: ?Sized> {
    chart: &'a SymplecticChart,
    f: &'a F,
    g: &'a G,
    step: f64,
}

impl<'a, F: ScalarField + ?Sized, G: ScalarField + ?Sized> BracketField<'a, F, G> {
    pub fn new(chart: &'a SymplecticChart, f: &'a F, g: &'a G, step: f64) -> Self {
        Self { chart, f, g, step }
    }
}

impl<F: ScalarField + ?Sized, G: ScalarField + ?Sized> ScalarField for BracketField<'_, F, G> {
    fn value(&self, p: &[f64]) -> Result<f64, GeometryError> {
        self.chart.poisson_bracket(self.f, self.g, p)
    }

    fn gradient(&self, p: &[f64]) -> Result<DVector<f64>, GeometryError> {
        let mut grad = DVector::zeros(p.len());
        let mut q = p.to_vec();
        for k in 0..p.len() {
            q[k] = p[k] + self.step;
            let plus = self.value(&q)?;
            q[k] = p[k] - self.step;
            let minus = self.value(&q)?;
            q[k] = p[k];
            grad[k] = (plus - minus) / (2.0 * self.step);
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sym(text: &str, n: usize) -> Symbol {
        Symbol::parse(text, n).unwrap()
    }

    fn bergman() -> SymplecticChart {
        SymplecticChart::bergman_disk(0.95, 2.0).unwrap()
    }

    #[test]
    fn form_matrix_examples() {
        let std = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let m = std.form_matrix(&[0.3, -0.2]).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let b = bergman();
        assert_eq!(b.form_matrix(&[0.0, 0.0]).unwrap(), DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]));
        let half = 0.5f64.sqrt();
        let m = b.form_matrix(&[half, 0.0]).unwrap();
        assert!((m[(0, 1)] - 8.0).abs() < 1e-12 && (m[(1, 0)] + 8.0).abs() < 1e-12);
        assert!(matches!(b.form_matrix(&[0.96, 0.0]), Err(GeometryError::OutsideRegion { .. })));
    }

    #[test]
    fn chart_validation() {
        assert!(SymplecticChart::new(2, Region::Disk { radius: 0.5 }, FormKind::Standard).is_err());
        assert!(SymplecticChart::new(1, Region::Box { lo: -1.0, hi: 1.0 }, FormKind::BergmanDisk { constant: 2.0 }).is_err());
        assert!(SymplecticChart::bergman_disk(1.0, 2.0).is_err());
        assert!(SymplecticChart::bergman_disk(0.9, 0.0).is_err());
        assert!(SymplecticChart::standard_box(1, 1.0, 1.0).is_err());
        assert!(SymplecticChart::standard_box(0, -1.0, 1.0).is_err());
    }

    #[test]
    fn hamiltonian_field_examples() {
        let std = SymplecticChart::standard_box(1, -2.0, 2.0).unwrap();
        let osc = sym("(x1^2 + y1^2)/2", 1);
        let x = std.field(&osc, &[1.0, 0.0]).unwrap();
        assert_eq!(x.as_slice(), &[0.0, -1.0]);
        let x1 = sym("x1", 1);
        assert_eq!(std.field(&x1, &[0.4, 0.9]).unwrap().as_slice(), &[0.0, -1.0]);
        let b = bergman().field(&x1, &[0.0, 0.0]).unwrap();
        assert!((b[0]).abs() < 1e-15 && (b[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn bracket_examples_and_sign_convention() {
        let std = SymplecticChart::standard_box(1, -2.0, 2.0).unwrap();
        let (x1, y1) = (sym("x1", 1), sym("y1", 1));
        assert_eq!(std.poisson_bracket(&x1, &y1, &[0.3, 0.1]).unwrap(), 1.0);
        assert_eq!(std.poisson_bracket(&y1, &x1, &[0.3, 0.1]).unwrap(), -1.0);
        let b = bergman().poisson_bracket(&x1, &y1, &[0.0, 0.0]).unwrap();
        assert!((b - 0.5).abs() < 1e-15);
        let f = sym("sin(x1)*exp(y1) + x1^3", 1);
        for chart in [std, bergman()] {
            let v = chart.poisson_bracket(&f, &f, &[0.2, -0.4]).unwrap();
            assert!(v.abs() <= 1e-14);
        }
    }

    #[test]
    fn canonical_pairs_in_higher_dimension() {
        let chart = SymplecticChart::standard_box(3, -1.0, 1.0).unwrap();
        let p = [0.1, -0.2, 0.3, 0.4, -0.5, 0.6];
        for i in 1..=3 {
            for j in 1..=3 {
                let b = chart
                    .poisson_bracket(&sym(&format!("x{i}"), 3), &sym(&format!("y{j}"), 3), &p)
                    .unwrap();
                assert_eq!(b, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn duality_between_field_and_differential() {
        let mut rng = StdRng::seed_from_u64(11);
        let f = sym("x1^2*y1 - sin(x1 + 2*y1)", 1);
        for chart in [SymplecticChart::standard_box(1, -1.0, 1.0).unwrap(), bergman()] {
            for _ in 0..100 {
                let r: f64 = rng.gen_range(0.0..0.9);
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let p = [r * t.cos(), r * t.sin()];
                let v = DVector::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
                let xf = chart.hamiltonian_field(&f, &p).unwrap();
                let lhs = chart.omega(&p, &xf.components, &v).unwrap();
                let rhs = ScalarField::gradient(&f, &p).unwrap().dot(&v);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
                let alpha = chart.flat(&xf).unwrap();
                let back = chart.sharp(&alpha).unwrap();
                assert!((back.components - &xf.components).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_residual_examples() {
        let std = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let (f, g, h) = (sym("x1", 1), sym("y1", 1), sym("x1*y1", 1));
        assert!(std.jacobi_residual(&f, &g, &h, &[0.2, 0.3], 1e-4).unwrap() <= 1e-6);
        assert!(std.jacobi_residual(&h, &h, &f, &[0.2, 0.3], 1e-4).unwrap() <= 1e-12);
        let (f, g, h) = (sym("x1", 1), sym("y1^2", 1), sym("sin(x1)", 1));
        assert!(bergman().jacobi_residual(&f, &g, &h, &[0.2, 0.1], 1e-4).unwrap() <= 1e-5);
        assert!(matches!(
            std.jacobi_residual(&f, &g, &h, &[0.99995, 0.0], 1e-4),
            Err(GeometryError::Margin { .. })
        ));
    }

    #[test]
    fn field_bracket_residual_examples() {
        let std = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let (x1, y1) = (sym("x1", 1), sym("y1", 1));
        assert!(std.field_bracket_residual(&x1, &y1, &[0.1, 0.2], 1e-4).unwrap() <= 1e-10);
        let f = sym("x1^2*y1", 1);
        assert!(std.field_bracket_residual(&f, &f, &[0.1, 0.2], 1e-4).unwrap() <= 1e-12);
        let (a, b) = (sym("x1^2", 1), sym("y1^2", 1));
        assert!(std.field_bracket_residual(&a, &b, &[0.3, 0.4], 1e-4).unwrap() <= 1e-5);
        // the usual DY·X − DX·Y convention would leave 2‖X_{f,g}‖ here
        let lie = std.field_lie_bracket(&a, &b, &[0.3, 0.4], 1e-4).unwrap();
        assert!((lie[0] - 1.2).abs() < 1e-8 && (lie[1] + 1.6).abs() < 1e-8);
    }
}
