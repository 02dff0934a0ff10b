use nalgebra::DVector;

use super::FoliationError;
use crate::symplectic::{GeometryError, ScalarField, SymplecticChart};

fn field_or_escape<F: ScalarField + ?Sized>(
    chart: &SymplecticChart,
    f: &F,
    p: &DVector<f64>,
) -> Result<DVector<f64>, FoliationError> {
    match chart.field(f, p.as_slice()) {
        Ok(v) => Ok(v),
        Err(GeometryError::OutsideRegion { point }) => Err(FoliationError::Escaped { point }),
        Err(e) => Err(e.into()),
    }
}

/// Time-`t` map of the Hamiltonian flow of `f`, classical RK4 with
/// `ceil(|t| / max_step)` equal steps.
///
/// Returns [`FoliationError::Escaped`] as soon as a stage point leaves the region.
pub fn hamiltonian_flow<F: ScalarField + ?Sized>(
    chart: &SymplecticChart,
    f: &F,
    p: &[f64],
    t: f64,
    max_step: f64,
) -> Result<Vec<f64>, FoliationError> {
    if !(max_step > 0.0) {
        return Err(FoliationError::InvalidGrid(format!("rk4 step {max_step} must be positive")));
    }
    if !chart.contains(p) {
        return Err(FoliationError::Escaped { point: p.to_vec() });
    }
    if t == 0.0 {
        return Ok(p.to_vec());
    }
    let steps = (t.abs() / max_step).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut y = DVector::from_column_slice(p);
    for _ in 0..steps {
        let k1 = field_or_escape(chart, f, &y)?;
        let k2 = field_or_escape(chart, f, &(&y + &k1 * (0.5 * h)))?;
        let k3 = field_or_escape(chart, f, &(&y + &k2 * (0.5 * h)))?;
        let k4 = field_or_escape(chart, f, &(&y + &k3 * h))?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !chart.contains(y.as_slice()) {
            return Err(FoliationError::Escaped { point: y.as_slice().to_vec() });
        }
    }
    Ok(y.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::Symbol;

    #[test]
    fn harmonic_oscillator_quarter_turn() {
        let chart = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let f = Symbol::parse("x1^2 + y1^2", 1).unwrap();
        let q = hamiltonian_flow(&chart, &f, &[0.5, 0.0], std::f64::consts::FRAC_PI_4, 1e-3).unwrap();
        assert!(q[0].abs() < 1e-8 && (q[1] + 0.5).abs() < 1e-8, "{q:?}");
    }

    #[test]
    fn translation_escapes_the_box() {
        let chart = SymplecticChart::standard_box(1, -1.0, 1.0).unwrap();
        let f = Symbol::parse("x1", 1).unwrap();
        let q = hamiltonian_flow(&chart, &f, &[0.0, 0.0], 0.5, 0.1).unwrap();
        assert!((q[1] + 0.5).abs() < 1e-15);
        assert!(matches!(
            hamiltonian_flow(&chart, &f, &[0.0, 0.0], 1.5, 0.1),
            Err(FoliationError::Escaped { .. })
        ));
    }

    #[test]
    fn backward_flow_inverts_forward_flow() {
        let chart = SymplecticChart::bergman_disk(0.95, 2.0).unwrap();
        let f = Symbol::parse("x1^2*y1 + sin(x1)", 1).unwrap();
        let p = [0.2, -0.3];
        let q = hamiltonian_flow(&chart, &f, &p, 0.4, 1e-3).unwrap();
        let back = hamiltonian_flow(&chart, &f, &q, -0.4, 1e-3).unwrap();
        assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
    }
}
