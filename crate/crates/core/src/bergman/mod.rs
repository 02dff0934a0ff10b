//! Weighted Bergman spaces of the unit disk, Toeplitz operators truncated to
//! polynomials of bounded degree, Wick symbols, and commutator scans in `h`.
//!
//! The space `A²_λ` carries the probability measure
//! `(λ+1)/π (1−|z|²)^λ dA`, with `λ(h) = 2(1/h − 1)`. The orthonormal basis is
//! `e_k = z^k / ‖z^k‖`.

mod operator;
mod scan;

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::symbol::SymbolError;

pub use operator::{
    commutator_norm, star_product, toeplitz_matrix, wick_symbol, DiskSymbol, NormMode, OperatorMatrix,
    WickSymbolGrid, RELIABLE_RADIUS,
};
pub use scan::{
    commutativity_matrix, correspondence_scan, log_log_slope, CommutativityTable, CommutativityVerdict,
    CorrespondenceScan, PairNorm, ScanRow, TruncationRule,
};

pub type C64 = nalgebra::Complex<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BergmanError {
    #[error("weight parameter h = {0} must lie in (0, 1)")]
    InvalidWeight(f64),
    #[error("weight exponent λ = {0} must exceed -1")]
    InvalidExponent(f64),
    #[error("operators live on different spaces ({left} vs {right})")]
    SpaceMismatch { left: String, right: String },
    #[error("disk symbols take one complex variable, got dimension {0}")]
    SymbolDimension(usize),
    #[error("{0}")]
    InvalidScan(String),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

/// `λ(h) = 2(1/h − 1)`.
pub fn lambda_of(h: f64) -> f64 {
    2.0 * (1.0 / h - 1.0)
}

/// Extra basis degrees kept beyond the truncation for operator products.
pub fn default_guard(n: usize) -> usize {
    (n / 4).max(4)
}

/// Gauss–Legendre rule on `u = r² ∈ [0, 1]` with the radial part of the
/// measure folded into the weights, so `Σ w_i f(u_i) ≈ (λ+1) ∫ f(u)(1−u)^λ du`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RadialRule {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

impl RadialRule {
    pub fn new(nodes: usize, lambda: f64) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(nodes.max(1)).expect("nonzero"));
        let (u, w) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, wx)| {
                let u = 0.5 * (x + 1.0);
                (u, 0.5 * wx * (lambda + 1.0) * (1.0 - u).powf(lambda))
            })
            .unzip();
        Self { u, w }
    }

    /// `Σ w_i u_i^k`, the squared norm of `z^k`.
    pub fn moment(&self, k: usize) -> f64 {
        self.u.iter().zip(&self.w).map(|(u, w)| w * u.powi(k as i32)).sum()
    }
}

fn radial_node_count(size: usize, lambda: f64) -> usize {
    (2 * size + 2 * lambda.max(0.0).ceil() as usize).max(64)
}

fn angular_node_count(size: usize) -> usize {
    (4 * size + 4).max(64)
}

/// Squared norm of `z^k` in `A²_λ`, by quadrature.
pub fn basis_norm(k: usize, lambda: f64) -> Result<f64, BergmanError> {
    if !(lambda > -1.0) {
        return Err(BergmanError::InvalidExponent(lambda));
    }
    Ok(RadialRule::new(radial_node_count(k, lambda), lambda).moment(k))
}

/// `A²_λ` truncated to `span{e_0, …, e_N}`, plus `guard` further basis
/// vectors used when forming operator products.
#[derive(Debug, Clone)]
pub struct BergmanSpace {
    h: f64,
    lambda: f64,
    n: usize,
    guard: usize,
    radial: RadialRule,
    angular_nodes: usize,
    /// `ln ‖z^k‖²` for `k < N + 1 + guard`.
    log_norms: Vec<f64>,
}

impl BergmanSpace {
    pub fn new(h: f64, n: usize) -> Result<Self, BergmanError> {
        if !(h > 0.0 && h < 1.0) {
            return Err(BergmanError::InvalidWeight(h));
        }
        Self::build(h, lambda_of(h), n, default_guard(n))
    }

    /// The space with weight exponent `λ` directly; `λ = 0` is the unweighted
    /// Bergman space (`h = 1`).
    pub fn from_lambda(lambda: f64, n: usize) -> Result<Self, BergmanError> {
        if !(lambda > -1.0) {
            return Err(BergmanError::InvalidExponent(lambda));
        }
        Self::build(2.0 / (lambda + 2.0), lambda, n, default_guard(n))
    }

    pub fn with_guard(self, guard: usize) -> Result<Self, BergmanError> {
        Self::build(self.h, self.lambda, self.n, guard)
    }

    fn build(h: f64, lambda: f64, n: usize, guard: usize) -> Result<Self, BergmanError> {
        let size = n + 1 + guard;
        let radial = RadialRule::new(radial_node_count(size, lambda), lambda);
        let log_norms = (0..size).map(|k| radial.moment(k).ln()).collect();
        Ok(Self {
            h,
            lambda,
            n,
            guard,
            radial,
            angular_nodes: angular_node_count(size),
            log_norms,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Truncation degree `N`.
    pub fn truncation(&self) -> usize {
        self.n
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    /// `N + 1`.
    pub fn size(&self) -> usize {
        self.n + 1
    }

    pub(crate) fn extended_size(&self) -> usize {
        self.n + 1 + self.guard
    }

    pub fn radial_nodes(&self) -> usize {
        self.radial.u.len()
    }

    pub fn angular_nodes(&self) -> usize {
        self.angular_nodes
    }

    /// Outermost radius sampled by the quadrature.
    pub fn max_radius(&self) -> f64 {
        self.radial.u.iter().cloned().fold(0.0, f64::max).sqrt()
    }

    /// Squared basis norms `‖z^k‖²`, `k = 0..=N`.
    pub fn norms(&self) -> Vec<f64> {
        self.log_norms[..self.size()].iter().map(|l| l.exp()).collect()
    }

    pub(crate) fn radial(&self) -> &RadialRule {
        &self.radial
    }

    /// `|e_k|` at radius `r`, evaluated in log space.
    pub(crate) fn basis_modulus(&self, k: usize, r: f64) -> f64 {
        if k == 0 {
            return (-0.5 * self.log_norms[0]).exp();
        }
        if r == 0.0 {
            return 0.0;
        }
        (k as f64 * r.ln() - 0.5 * self.log_norms[k]).exp()
    }

    pub(crate) fn label(&self) -> String {
        format!("λ={}, N={}, guard={}", self.lambda, self.n, self.guard)
    }
}
