use nalgebra::dmatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use noreg::graph::{Digraph, Edge};
use noreg::model::{AgentPlant, EstimatorInit, Exosystem, Scenario, SynthesisOptions};
use noreg::numerics::{Matrix, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0) * scale)
}

/// Fully actuated two-state agents with a harmonic exosystem and a random
/// leader-follower graph.
pub fn random_scenario(r: &mut ChaCha8Rng) -> Scenario {
    let agents = r.gen_range(2..=4);
    let informed = r.gen_range(1..agents);
    let omega = r.gen_range(0.2..2.0);
    let s = dmatrix![0.0, omega; -omega, 0.0];
    let plant = |r: &mut ChaCha8Rng, inf: bool| AgentPlant {
        a: randn(r, 2, 2, 2.0),
        b: Matrix::identity(2, 2) + randn(r, 2, 2, 0.3),
        e: randn(r, 2, 2, 1.0),
        c_y: Matrix::identity(2, 2) + randn(r, 2, 2, 0.3),
        d_y: Matrix::zeros(2, 2),
        h_y: if inf { randn(r, 2, 2, 1.0) } else { Matrix::zeros(2, 2) },
        c_e: Matrix::identity(2, 2),
        d_e: Matrix::zeros(2, 2),
        h_e: randn(r, 2, 2, 1.0),
    };
    let plants = (0..agents).map(|i| plant(r, i < informed)).collect();
    let mut edges = Vec::new();
    for head in 1..=agents {
        if head <= informed {
            edges.push(Edge { tail: 0, head, weight: r.gen_range(0.5..2.0) });
        } else {
            edges.push(Edge { tail: r.gen_range(1..head), head, weight: r.gen_range(0.5..2.0) });
        }
    }
    for tail in 1..=agents {
        for head in 1..=agents {
            if tail != head && !edges.iter().any(|e| e.tail == tail && e.head == head) && r.gen_bool(0.2) {
                edges.push(Edge { tail, head, weight: r.gen_range(0.2..1.0) });
            }
        }
    }
    Scenario {
        agents: plants,
        exosystem: Exosystem {
            s,
            w0: Vector::from_fn(2, |_, _| r.gen_range(-1.0..1.0)),
        },
        graph: Digraph::new(agents + 1, edges).unwrap(),
        informed,
        x0: (0..agents).map(|_| Vector::from_fn(2, |_, _| r.gen_range(-1.0..1.0))).collect(),
        estimator_init: EstimatorInit::RelativePerturbation(1.01),
        synthesis: SynthesisOptions::default(),
    }
}

