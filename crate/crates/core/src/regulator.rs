//! Regulator equations
//!
//! ```text
//! Π S = A Π + B Γ + E
//!   0 = C_e Π + D_e Γ + H_e
//! ```
//!
//! solved jointly for `(Π, Γ)` through `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.

use crate::error::{Error, Result};
use crate::model::{AgentPlant, Exosystem};
use crate::numerics::{self, kron, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSolution {
    pub pi: Matrix,
    pub gamma: Matrix,
    /// `‖Π S − A Π − B Γ − E‖_F`
    pub residual_state: f64,
    /// `‖C_e Π + D_e Γ + H_e‖_F`
    pub residual_output: f64,
    /// False when the stacked system is rank deficient; the solution is then
    /// the minimum-norm one.
    pub unique: bool,
}

fn residuals(plant: &AgentPlant, s: &Matrix, pi: &Matrix, gamma: &Matrix) -> (f64, f64) {
    let state = (pi * s - &plant.a * pi - &plant.b * gamma - &plant.e).norm();
    let output = (&plant.c_e * pi + &plant.d_e * gamma + &plant.h_e).norm();
    (state, output)
}

/// Acceptance bound on both residuals.
fn residual_bound(plant: &AgentPlant, s: &Matrix) -> f64 {
    let size = [
        &plant.a, &plant.b, &plant.e, &plant.c_e, &plant.d_e, &plant.h_e, s,
    ]
    .iter()
    .map(|m| m.norm())
    .sum::<f64>();
    1e-8 * (1.0 + size)
}

pub fn solve_regulator(plant: &AgentPlant, exo: &Exosystem) -> Result<RegulatorSolution> {
    let (n, m, r, q) = (plant.states(), plant.inputs(), plant.outputs(), exo.dim());
    if plant.exo_dim() != q || !exo.s.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "plant expects q = {}, exosystem has q = {q}",
            plant.exo_dim()
        )));
    }
    let iq = Matrix::identity(q, q);
    let in_ = Matrix::identity(n, n);

    let mut lhs = Matrix::zeros((n + r) * q, (n + m) * q);
    lhs.view_mut((0, 0), (n * q, n * q))
        .copy_from(&(kron(&exo.s.transpose(), &in_) - kron(&iq, &plant.a)));
    lhs.view_mut((0, n * q), (n * q, m * q))
        .copy_from(&(-kron(&iq, &plant.b)));
    lhs.view_mut((n * q, 0), (r * q, n * q))
        .copy_from(&kron(&iq, &plant.c_e));
    lhs.view_mut((n * q, n * q), (r * q, m * q))
        .copy_from(&kron(&iq, &plant.d_e));

    let mut rhs = Matrix::zeros((n + r) * q, 1);
    rhs.view_mut((0, 0), (n * q, 1))
        .copy_from_slice(plant.e.as_slice());
    rhs.view_mut((n * q, 0), (r * q, 1))
        .copy_from_slice((-&plant.h_e).as_slice());

    let (z, rank) = numerics::least_squares(&lhs, &rhs)?;
    let pi = Matrix::from_column_slice(n, q, &z.as_slice()[..n * q]);
    let gamma = Matrix::from_column_slice(m, q, &z.as_slice()[n * q..]);
    let (residual_state, residual_output) = residuals(plant, &exo.s, &pi, &gamma);
    let bound = residual_bound(plant, &exo.s);
    if residual_state > bound || residual_output > bound {
        return Err(Error::A3Violation {
            agent: 0,
            residual: residual_state.max(residual_output),
        });
    }
    Ok(RegulatorSolution {
        pi,
        gamma,
        residual_state,
        residual_output,
        unique: rank == (n + m) * q,
    })
}

/// `G = Γ − F Π`.
pub fn feedforward_gain(sol: &RegulatorSolution, f: &Matrix) -> Result<Matrix> {
    if f.shape() != (sol.gamma.nrows(), sol.pi.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "F is {}x{}, expected {}x{}",
            f.nrows(),
            f.ncols(),
            sol.gamma.nrows(),
            sol.pi.nrows()
        )));
    }
    Ok(&sol.gamma - f * &sol.pi)
}
