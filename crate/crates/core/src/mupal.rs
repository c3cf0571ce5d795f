//! Four networked MuPAL-α research aircraft tracking a lateral manoeuvre.
//!
//! States are sideways velocity, roll rate, roll angle, yaw rate and the two
//! actuator lags; the measured and regulated outputs are sideways velocity and
//! roll angle. Agent 1 is the only one that sees the exosystem.

use nalgebra::{dmatrix, dvector};

use crate::graph::{Digraph, Edge};
use crate::model::{AgentPlant, EstimatorInit, Exosystem, Scenario, SynthesisOptions};
use crate::numerics::{Matrix, Vector};

pub fn s() -> Matrix {
    dmatrix![
        0.0, 0.0, 0.0, 0.0, 0.0;
        0.0, 0.0, -2.0 / 3.0, 0.0, -0.1;
        0.0, 0.25, 0.0, 0.0, 0.0;
        0.0, 0.0, 0.0, 0.0, 1.0;
        0.0, 0.0, 0.0, -1.0, 0.0
    ]
}

pub fn a() -> Matrix {
    dmatrix![
        -0.178, 6.079, 9.763, -65.623, 0.0, 2.890;
        -0.057, -3.810, 0.0, 1.343, -10.750, 1.187;
        0.0, 1.0, 0.0, 0.094, 0.0, 0.0;
        0.025, -0.062, 0.0, -0.475, 0.345, -2.220;
        0.0, 0.0, 0.0, 0.0, -11.111, 0.0;
        0.0, 0.0, 0.0, 0.0, 0.0, -11.111
    ]
}

pub fn b() -> Matrix {
    dmatrix![
        0.0, -2.89;
        10.75, -1.187;
        0.0, 0.0;
        -0.345, 2.22;
        22.2222, 0.0;
        0.0, 22.2222
    ]
}

/// Measured and regulated outputs pick sideways velocity and roll angle.
pub fn c() -> Matrix {
    dmatrix![
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0;
        0.0, 0.0, 1.0, 0.0, 0.0, 0.0
    ]
}

pub fn h_e() -> Matrix {
    dmatrix![
        -1.0, 0.0, 0.0, 0.0, 0.0;
        0.0, 0.0, -1.0, 0.0, 0.0
    ]
}

pub fn h_y_informed() -> Matrix {
    dmatrix![
        1.0, -1.0, 0.0, 0.0, 0.0;
        1.0, -1.0, 0.0, 0.0, 0.0
    ]
}

/// Published steady-state input map, rounded to four decimals.
pub fn gamma_published() -> Matrix {
    dmatrix![
        -0.0045, -0.0877, 0.0472, -0.0145, 0.0327;
        0.0112, -0.0427, -0.0139, -0.0065, 0.0100
    ]
}

/// Published steady-state state map, rounded to four decimals.
pub fn pi_published() -> Matrix {
    dmatrix![
        1.0, 0.0, 0.0, 0.0, 0.0;
        0.0002, 0.2480, -0.0138, 0.0, -0.0866;
        0.0, 0.0, 1.0, 0.0, 0.0;
        -0.0022, 0.0211, 0.1467, -0.0002, -0.0076;
        -0.0089, -0.1773, 0.0837, -0.0231, 0.0659;
        0.0223, -0.0847, -0.0329, -0.011, 0.0203
    ]
}

/// The disturbance input is not published; it is recovered from the
/// published `(Π, Γ)` as `E = Π S − A Π − B Γ`, which makes them an exact
/// solution of the regulator equations.
pub fn e() -> Matrix {
    let pi = pi_published();
    &pi * s() - a() * &pi - b() * gamma_published()
}

pub fn plant(informed: bool) -> AgentPlant {
    AgentPlant {
        a: a(),
        b: b(),
        e: e(),
        c_y: c(),
        d_y: Matrix::zeros(2, 2),
        h_y: if informed { h_y_informed() } else { Matrix::zeros(2, 5) },
        c_e: c(),
        d_e: Matrix::zeros(2, 2),
        h_e: h_e(),
    }
}

pub fn graph() -> Digraph {
    let edge = |tail, head, weight| Edge { tail, head, weight };
    Digraph::new(
        5,
        vec![
            edge(0, 1, 2.0),
            edge(4, 1, 1.0),
            edge(1, 2, 2.0),
            edge(2, 3, 2.0),
            edge(2, 4, 0.7),
            edge(3, 4, 0.5),
        ],
    )
    .expect("static graph is well formed")
}

pub fn x0() -> Vec<Vector> {
    vec![
        dvector![-1.0, 0.0, -1.0, 1.0, 0.0, 0.0],
        dvector![0.0, -1.0, -1.0, 0.0, -1.0, -1.0],
        dvector![-1.0, 0.0, -1.0, 1.0, 0.0, -1.0],
        dvector![-1.0, 1.0, -1.0, 1.0, 0.0, -1.0],
    ]
}

pub fn w0() -> Vector {
    dvector![1.0, 1.0, 0.0, 0.0, 0.0]
}

/// The full example: eigenvalues in `(−2.5, −0.3)`, `μ0 = −12`, coupling
/// margin 2.4 (so `γ = 24`), 1 % estimator error.
pub fn scenario() -> Scenario {
    Scenario {
        agents: (0..4).map(|i| plant(i == 0)).collect(),
        exosystem: Exosystem { s: s(), w0: w0() },
        graph: graph(),
        informed: 1,
        x0: x0(),
        estimator_init: EstimatorInit::RelativePerturbation(1.01),
        synthesis: SynthesisOptions {
            interval: (-2.5, -0.3),
            mu0: Some(-12.0),
            gamma_margin: 2.4,
            seed: 0,
            max_candidates: 500,
            overshoot_flags: Vec::new(),
        },
    }
}
