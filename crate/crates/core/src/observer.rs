//! Observer gains, the `λ0`/`μ0` bounds and the consensus coupling `γ`.

use crate::error::{Error, Result};
use crate::model::{composite_pair, AgentPlant};
use crate::numerics::{self, Matrix};
use crate::synthesis;

/// Admissible slack on the `Re ≤ μ0` observer bound.
pub const MU0_SLACK: f64 = 1e-6;

/// Observer part of one agent's controller.
#[derive(Debug, Clone, PartialEq)]
pub enum ObserverGain {
    /// Luenberger gain on the plant and exosystem estimate.
    Informed { l1: Matrix, l2: Matrix },
    /// Luenberger gain on the plant estimate only.
    Uninformed { l: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentGains {
    pub f: Matrix,
    pub g: Matrix,
    pub observer: ObserverGain,
}

/// Everything the distributed controller needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub agents: Vec<AgentGains>,
    pub gamma: f64,
    pub gamma_min: f64,
    pub lambda0: f64,
    pub mu0: f64,
}

/// Smallest closed-loop eigenvalue over all agents.
pub fn compute_lambda0(fs: &[Matrix], plants: &[AgentPlant]) -> Result<f64> {
    if fs.len() != plants.len() || fs.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} feedback matrices for {} plants",
            fs.len(),
            plants.len()
        )));
    }
    let mut lambda0 = f64::INFINITY;
    for (f, p) in fs.iter().zip(plants) {
        let acl = &p.a + &p.b * f;
        let scale = 1.0 + acl.norm();
        for z in numerics::spectrum(&acl)?.values() {
            if z.im.abs() > 1e-7 * scale {
                return Err(Error::NonRealEigenvalue { re: z.re, im: z.im });
            }
            lambda0 = lambda0.min(z.re);
        }
    }
    Ok(lambda0)
}

/// Default observer bound: six times the fastest state-feedback eigenvalue.
pub fn default_mu0(lambda0: f64) -> f64 {
    6.0 * lambda0
}

/// `count` distinct reals spread geometrically over `[3μ0, 1.05μ0]`.
pub fn observer_targets(mu0: f64, count: usize) -> Vec<f64> {
    let (hi, lo) = (1.05 * mu0, 3.0 * mu0);
    if count == 1 {
        return vec![hi];
    }
    let ratio = lo / hi;
    (0..count)
        .map(|k| hi * ratio.powf(k as f64 / (count - 1) as f64))
        .collect()
}

/// Places the spectrum of `A + L C` at `targets` through the dual pair.
fn place_observer(a: &Matrix, c: &Matrix, mu0: f64) -> Result<Matrix> {
    let n = a.nrows();
    if c.nrows() == 0 {
        return Err(Error::PlacementFailed("no measurements available".into()));
    }
    let unobservable: Vec<_> = crate::model::undetectable_modes(c, a)?;
    let targets = observer_targets(mu0, n);
    let k = synthesis::place(&a.transpose(), &c.transpose(), &targets).map_err(|e| {
        if unobservable.is_empty() {
            Error::PlacementFailed(e.to_string())
        } else {
            Error::PlacementFailed(format!(
                "undetectable modes at {:?}",
                unobservable.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>()
            ))
        }
    })?;
    let l = k.transpose();
    check_bound(&(a + &l * c), mu0)?;
    Ok(l)
}

fn check_bound(m: &Matrix, mu0: f64) -> Result<()> {
    let spec = numerics::spectrum(m)?;
    match spec.max_re() {
        Some(max) if max > mu0 + MU0_SLACK => Err(Error::PlacementFailed(format!(
            "observer eigenvalue with real part {max} exceeds mu0 = {mu0}"
        ))),
        _ => Ok(()),
    }
}

/// `A_cc = [[A + L1 C_y, E + L1 H_y], [L2 C_y, S + L2 H_y]]`.
pub fn informed_observer_matrix(plant: &AgentPlant, s: &Matrix, l1: &Matrix, l2: &Matrix) -> Matrix {
    let (a, c) = composite_pair(plant, s);
    let mut l = Matrix::zeros(l1.nrows() + l2.nrows(), l1.ncols());
    l.rows_mut(0, l1.nrows()).copy_from(l1);
    l.rows_mut(l1.nrows(), l2.nrows()).copy_from(l2);
    a + l * c
}

/// Gains `(L1, L2)` putting the spectrum of the informed estimator error
/// dynamics left of `μ0`.
pub fn informed_observer_gains(plant: &AgentPlant, s: &Matrix, mu0: f64) -> Result<(Matrix, Matrix)> {
    if mu0 >= 0.0 {
        return Err(Error::PreconditionViolated("mu0 must be negative".into()));
    }
    let (a, c) = composite_pair(plant, s);
    let l = place_observer(&a, &c, mu0)?;
    let n = plant.states();
    Ok((l.rows(0, n).into_owned(), l.rows(n, s.nrows()).into_owned()))
}

/// Gain `L` putting the spectrum of `A + L C_y` left of `μ0`.
pub fn uninformed_observer_gain(plant: &AgentPlant, mu0: f64) -> Result<Matrix> {
    if mu0 >= 0.0 {
        return Err(Error::PreconditionViolated("mu0 must be negative".into()));
    }
    place_observer(&plant.a, &plant.c_y, mu0)
}

/// `max Re(λ_i(S) − γ λ_j(L33))` over all pairs.
pub fn gamma_bound(s: &Matrix, l33: &Matrix, gamma: f64) -> Result<f64> {
    let ss = numerics::spectrum(s)?;
    let ls = numerics::spectrum(l33)?;
    let mut max = f64::NEG_INFINITY;
    for a in ss.values() {
        for b in ls.values() {
            max = max.max(a.re - gamma * b.re);
        }
    }
    Ok(max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaChoice {
    pub gamma: f64,
    pub gamma_min: f64,
}

/// `γ = margin · γ_min`, where `γ_min` is the least coupling meeting
/// `max Re(λ_i(S) − γλ_j(L33)) ≤ μ0`. With no uninformed agents the bound is
/// vacuous and `γ = margin`.
pub fn select_gamma(s: &Matrix, l33: &Matrix, mu0: f64, margin: f64) -> Result<GammaChoice> {
    if margin < 1.0 {
        return Err(Error::PreconditionViolated("gamma margin must be at least 1".into()));
    }
    if l33.nrows() == 0 {
        return Ok(GammaChoice {
            gamma: margin,
            gamma_min: 0.0,
        });
    }
    let ls = numerics::spectrum(l33)?;
    let min_re = ls.min_re().unwrap_or(0.0);
    if min_re <= 0.0 {
        return Err(Error::Infeasible(format!(
            "L33 has an eigenvalue with real part {min_re}"
        )));
    }
    let s_max = numerics::spectrum(s)?.max_re().unwrap_or(f64::NEG_INFINITY);
    // Re(λ_i(S) − γλ_j) = Re λ_i(S) − γ Re λ_j, so the worst pair uses the
    // largest Re λ(S) and the smallest Re λ(L33).
    let gamma_min = ((s_max - mu0) / min_re).max(0.0);
    let gamma = if gamma_min > 0.0 { margin * gamma_min } else { margin };
    Ok(GammaChoice { gamma, gamma_min })
}
