//! Banach iteration `u_{n+1} = 𝒢(u_n)`.

use super::{lipschitz_cert, NeuralOperator, OperatorError};
use crate::grid::Field;

/// Iterates above this norm are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    /// Final iterate, used as `u*`.
    pub fixed_point: Field,
    /// `‖u_n − u*‖` for `n = 0..=iterations`.
    pub iterates_norms: Vec<f64>,
    /// `‖u_{n+1} − u_n‖` for each step taken.
    pub step_norms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
}

/// Iterates `op` from `u0`. With a certified contraction factor `q̂ < 1` the
/// stopping rule is the a-posteriori bound `‖u_{n+1} − u_n‖ ≤ tol (1 − q̂)/q̂`,
/// which guarantees `‖u_{n+1} − u*‖ ≤ tol`; otherwise it stops on `step < tol`.
pub fn iterate_to_fixed_point(
    op: &NeuralOperator,
    u0: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult, OperatorError> {
    if op.in_channels() != op.out_channels() {
        return Err(OperatorError::Shape("fixed-point iteration needs a self-map".into()));
    }
    let q = lipschitz_cert(op).product;
    iterate_map(|u| op.forward(u), u0, tol, max_iter, (q < 1.0).then_some(q))
}

/// Generic form of [`iterate_to_fixed_point`] over any map.
pub fn iterate_map<F>(
    mut map: F,
    u0: &Field,
    tol: f64,
    max_iter: usize,
    q_hat: Option<f64>,
) -> Result<FixedPointResult, OperatorError>
where
    F: FnMut(&Field) -> Result<Field, OperatorError>,
{
    if !(tol > 0.0) {
        return Err(OperatorError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let threshold = match q_hat {
        Some(q) if q > 0.0 && q < 1.0 => tol * (1.0 - q) / q,
        _ => tol,
    };
    let mut iterates = vec![u0.clone()];
    let mut step_norms = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    while step_norms.len() < max_iter {
        let cur = iterates.last().unwrap();
        let next = match map(cur) {
            Ok(f) => f,
            Err(OperatorError::NonFiniteState(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if !next.same_shape(cur) {
            return Err(OperatorError::Shape("map changed the field shape".into()));
        }
        let step = next.sub(cur).expect("shape checked").l2_norm();
        let norm = next.l2_norm();
        iterates.push(next);
        step_norms.push(step);
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            diverged = true;
            break;
        }
        if step <= threshold {
            converged = true;
            break;
        }
    }
    let star = iterates.last().unwrap().clone();
    let iterates_norms = iterates
        .iter()
        .map(|u| u.sub(&star).expect("shape checked").l2_norm())
        .collect();
    Ok(FixedPointResult {
        fixed_point: star,
        iterates_norms,
        iterations: step_norms.len(),
        step_norms,
        converged,
        diverged,
    })
}
