//! JSON scenario and gains files.
//!
//! Matrices are written as arrays of rows. Optional plant blocks (`E`, `Dy`,
//! `Hy`, `De`, `He`) default to zero matrices of the implied shape.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Digraph, Edge};
use crate::model::{AgentPlant, EstimatorInit, Exosystem, Scenario, SynthesisOptions};
use crate::numerics::{Matrix, Vector};
use crate::observer::{AgentGains, ControllerGains, ObserverGain};

type Rows = Vec<Vec<f64>>;

/// Pretty JSON with innermost arrays kept on one line.
fn pretty<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    let mut out = String::with_capacity(text.len());
    let mut rest = text.as_str();
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        rest = &rest[open..];
        let close = rest.find(']').expect("balanced brackets");
        let inner = &rest[1..close];
        if inner.contains(['[', '{', '"']) {
            out.push('[');
            rest = &rest[1..];
        } else {
            let items: Vec<&str> = inner.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
            out.push('[');
            out.push_str(&items.join(", "));
            out.push(']');
            rest = &rest[close + 1..];
        }
    }
    out.push_str(rest);
    out
}

fn to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(name: &str, rows: &Rows, cols_if_empty: usize) -> Result<Matrix> {
    let cols = rows.first().map_or(cols_if_empty, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidScenario(format!("{name} has rows of unequal length")));
    }
    Ok(Matrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn opt_block(name: &str, rows: &Option<Rows>, r: usize, c: usize) -> Result<Matrix> {
    match rows {
        Some(rows) => from_rows(name, rows, c),
        None => Ok(Matrix::zeros(r, c)),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentJson {
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    e: Option<Rows>,
    #[serde(rename = "Cy")]
    c_y: Rows,
    #[serde(rename = "Dy", default, skip_serializing_if = "Option::is_none")]
    d_y: Option<Rows>,
    #[serde(rename = "Hy", default, skip_serializing_if = "Option::is_none")]
    h_y: Option<Rows>,
    #[serde(rename = "Ce")]
    c_e: Rows,
    #[serde(rename = "De", default, skip_serializing_if = "Option::is_none")]
    d_e: Option<Rows>,
    #[serde(rename = "He", default, skip_serializing_if = "Option::is_none")]
    h_e: Option<Rows>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExosystemJson {
    #[serde(rename = "S")]
    s: Rows,
    w0: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphJson {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
enum EstimatorInitJson {
    Exact,
    Relative { factor: f64 },
    Explicit { xi: Vec<Vec<f64>>, eta: Vec<Vec<f64>> },
}

fn default_interval() -> (f64, f64) {
    SynthesisOptions::default().interval
}
fn default_margin() -> f64 {
    SynthesisOptions::default().gamma_margin
}
fn default_candidates() -> usize {
    SynthesisOptions::default().max_candidates
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthesisJson {
    #[serde(default = "default_interval")]
    interval: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu0: Option<f64>,
    #[serde(default = "default_margin")]
    gamma_margin: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_candidates")]
    max_candidates: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    overshoot_flags: Vec<Vec<bool>>,
}

impl Default for SynthesisJson {
    fn default() -> Self {
        SynthesisJson::from(&SynthesisOptions::default())
    }
}

impl From<&SynthesisOptions> for SynthesisJson {
    fn from(o: &SynthesisOptions) -> Self {
        SynthesisJson {
            interval: o.interval,
            mu0: o.mu0,
            gamma_margin: o.gamma_margin,
            seed: o.seed,
            max_candidates: o.max_candidates,
            overshoot_flags: o.overshoot_flags.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioJson {
    agents: Vec<AgentJson>,
    exosystem: ExosystemJson,
    graph: GraphJson,
    informed: usize,
    x0: Vec<Vec<f64>>,
    #[serde(default = "exact_init")]
    estimator_init: EstimatorInitJson,
    #[serde(default)]
    synthesis: SynthesisJson,
}

fn exact_init() -> EstimatorInitJson {
    EstimatorInitJson::Exact
}

fn agent_from_json(i: usize, a: &AgentJson, q: usize) -> Result<AgentPlant> {
    let name = |m: &str| format!("agent {}: {m}", i + 1);
    let am = from_rows(&name("A"), &a.a, 0)?;
    let n = am.nrows();
    let b = from_rows(&name("B"), &a.b, 0)?;
    let m = b.ncols();
    let c_y = from_rows(&name("Cy"), &a.c_y, n)?;
    let c_e = from_rows(&name("Ce"), &a.c_e, n)?;
    let (p, r) = (c_y.nrows(), c_e.nrows());
    Ok(AgentPlant {
        a: am,
        b,
        e: opt_block(&name("E"), &a.e, n, q)?,
        c_y,
        d_y: opt_block(&name("Dy"), &a.d_y, p, m)?,
        h_y: opt_block(&name("Hy"), &a.h_y, p, q)?,
        c_e,
        d_e: opt_block(&name("De"), &a.d_e, r, m)?,
        h_e: opt_block(&name("He"), &a.h_e, r, q)?,
    })
}

fn agent_to_json(p: &AgentPlant) -> AgentJson {
    AgentJson {
        a: to_rows(&p.a),
        b: to_rows(&p.b),
        e: Some(to_rows(&p.e)),
        c_y: to_rows(&p.c_y),
        d_y: Some(to_rows(&p.d_y)),
        h_y: Some(to_rows(&p.h_y)),
        c_e: to_rows(&p.c_e),
        d_e: Some(to_rows(&p.d_e)),
        h_e: Some(to_rows(&p.h_e)),
    }
}

fn vectors(v: &[Vec<f64>]) -> Vec<Vector> {
    v.iter().map(|x| Vector::from_vec(x.clone())).collect()
}

fn unvectors(v: &[Vector]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

/// Parses and validates a scenario document.
pub fn scenario_from_json(text: &str) -> Result<Scenario> {
    let doc: ScenarioJson = serde_json::from_str(text)?;
    let q = doc.exosystem.w0.len();
    let agents = doc
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| agent_from_json(i, a, q))
        .collect::<Result<Vec<_>>>()?;
    let edges = doc
        .graph
        .edges
        .iter()
        .map(|&(tail, head, weight)| Edge { tail, head, weight })
        .collect();
    let estimator_init = match doc.estimator_init {
        EstimatorInitJson::Exact => EstimatorInit::Exact,
        EstimatorInitJson::Relative { factor } => EstimatorInit::RelativePerturbation(factor),
        EstimatorInitJson::Explicit { xi, eta } => EstimatorInit::Explicit {
            xi: vectors(&xi),
            eta: vectors(&eta),
        },
    };
    let sy = doc.synthesis;
    let scenario = Scenario {
        agents,
        exosystem: Exosystem {
            s: from_rows("S", &doc.exosystem.s, q)?,
            w0: Vector::from_vec(doc.exosystem.w0),
        },
        graph: Digraph::new(doc.graph.nodes, edges)?,
        informed: doc.informed,
        x0: vectors(&doc.x0),
        estimator_init,
        synthesis: SynthesisOptions {
            interval: sy.interval,
            mu0: sy.mu0,
            gamma_margin: sy.gamma_margin,
            seed: sy.seed,
            max_candidates: sy.max_candidates,
            overshoot_flags: sy.overshoot_flags,
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Serializes a scenario with every block written out.
pub fn scenario_to_json(s: &Scenario) -> String {
    let doc = ScenarioJson {
        agents: s.agents.iter().map(agent_to_json).collect(),
        exosystem: ExosystemJson {
            s: to_rows(&s.exosystem.s),
            w0: s.exosystem.w0.iter().copied().collect(),
        },
        graph: GraphJson {
            nodes: s.graph.node_count(),
            edges: s.graph.edges().iter().map(|e| (e.tail, e.head, e.weight)).collect(),
        },
        informed: s.informed,
        x0: unvectors(&s.x0),
        estimator_init: match &s.estimator_init {
            EstimatorInit::Exact => EstimatorInitJson::Exact,
            EstimatorInit::RelativePerturbation(factor) => EstimatorInitJson::Relative { factor: *factor },
            EstimatorInit::Explicit { xi, eta } => EstimatorInitJson::Explicit {
                xi: unvectors(xi),
                eta: unvectors(eta),
            },
        },
        synthesis: SynthesisJson::from(&s.synthesis),
    };
    pretty(&doc)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    scenario_from_json(&fs::read_to_string(path)?)
}

pub fn save_scenario(path: impl AsRef<Path>, s: &Scenario) -> Result<()> {
    fs::write(path, scenario_to_json(s) + "\n")?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ObserverJson {
    Informed {
        #[serde(rename = "L1")]
        l1: Rows,
        #[serde(rename = "L2")]
        l2: Rows,
    },
    Uninformed {
        #[serde(rename = "L")]
        l: Rows,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentGainsJson {
    #[serde(rename = "F")]
    f: Rows,
    #[serde(rename = "G")]
    g: Rows,
    observer: ObserverJson,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsJson {
    agents: Vec<AgentGainsJson>,
    gamma: f64,
    gamma_min: f64,
    lambda0: f64,
    mu0: f64,
}

pub fn gains_to_json(g: &ControllerGains) -> String {
    let doc = GainsJson {
        agents: g
            .agents
            .iter()
            .map(|a| AgentGainsJson {
                f: to_rows(&a.f),
                g: to_rows(&a.g),
                observer: match &a.observer {
                    ObserverGain::Informed { l1, l2 } => ObserverJson::Informed {
                        l1: to_rows(l1),
                        l2: to_rows(l2),
                    },
                    ObserverGain::Uninformed { l } => ObserverJson::Uninformed { l: to_rows(l) },
                },
            })
            .collect(),
        gamma: g.gamma,
        gamma_min: g.gamma_min,
        lambda0: g.lambda0,
        mu0: g.mu0,
    };
    pretty(&doc)
}

/// Parses a gains document. Shapes are checked against a scenario by
/// [`check_gains`].
pub fn gains_from_json(text: &str) -> Result<ControllerGains> {
    let doc: GainsJson = serde_json::from_str(text)?;
    let agents = doc
        .agents
        .iter()
        .map(|a| {
            Ok(AgentGains {
                f: from_rows("F", &a.f, 0)?,
                g: from_rows("G", &a.g, 0)?,
                observer: match &a.observer {
                    ObserverJson::Informed { l1, l2 } => ObserverGain::Informed {
                        l1: from_rows("L1", l1, 0)?,
                        l2: from_rows("L2", l2, 0)?,
                    },
                    ObserverJson::Uninformed { l } => ObserverGain::Uninformed {
                        l: from_rows("L", l, 0)?,
                    },
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ControllerGains {
        agents,
        gamma: doc.gamma,
        gamma_min: doc.gamma_min,
        lambda0: doc.lambda0,
        mu0: doc.mu0,
    })
}

pub fn load_gains(path: impl AsRef<Path>) -> Result<ControllerGains> {
    gains_from_json(&fs::read_to_string(path)?)
}

pub fn save_gains(path: impl AsRef<Path>, g: &ControllerGains) -> Result<()> {
    fs::write(path, gains_to_json(g) + "\n")?;
    Ok(())
}

/// Verifies that every gain block has the shape the scenario requires.
pub fn check_gains(s: &Scenario, g: &ControllerGains) -> Result<()> {
    if g.agents.len() != s.agent_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} gain sets for {} agents",
            g.agents.len(),
            s.agent_count()
        )));
    }
    let q = s.exosystem.dim();
    for (i, (p, a)) in s.agents.iter().zip(&g.agents).enumerate() {
        let (n, m, y) = (p.states(), p.inputs(), p.measurements());
        let mut expect = vec![("F", &a.f, m, n), ("G", &a.g, m, q)];
        match (&a.observer, i < s.informed) {
            (ObserverGain::Informed { l1, l2 }, true) => {
                expect.push(("L1", l1, n, y));
                expect.push(("L2", l2, q, y));
            }
            (ObserverGain::Uninformed { l }, false) => expect.push(("L", l, n, y)),
            _ => {
                return Err(Error::DimensionMismatch(format!(
                    "agent {}: observer kind does not match the informed count",
                    i + 1
                )))
            }
        }
        for (name, mat, r, c) in expect {
            if mat.shape() != (r, c) {
                return Err(Error::DimensionMismatch(format!(
                    "agent {}: {name} is {}x{}, expected {r}x{c}",
                    i + 1,
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
    }
    if !(g.gamma.is_finite() && g.gamma >= 0.0) {
        return Err(Error::DimensionMismatch(format!("invalid coupling gain {}", g.gamma)));
    }
    Ok(())
}
