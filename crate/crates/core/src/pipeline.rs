//! End-to-end gain synthesis: regulator equations, nonovershooting state
//! feedback, observer bounds, observers and the coupling gain.

use crate::error::{Error, Result};
use crate::graph;
use crate::model::Scenario;
use crate::numerics::Vector;
use crate::observer::{
    compute_lambda0, default_mu0, informed_observer_gains, select_gamma,
    uninformed_observer_gain, AgentGains, ControllerGains, ObserverGain,
};
use crate::regulator::{feedforward_gain, solve_regulator, RegulatorSolution};
use crate::synthesis::{synthesize_nonovershooting_f, NonovershootingFeedback, SearchOptions};

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub gains: ControllerGains,
    pub regulators: Vec<RegulatorSolution>,
    pub feedbacks: Vec<NonovershootingFeedback>,
}

/// `x̃_{i,0} = x_{i,0} − Π_i w_0`.
pub fn regulation_error_initial(s: &Scenario, regulators: &[RegulatorSolution]) -> Vec<Vector> {
    s.x0.iter()
        .zip(regulators)
        .map(|(x0, r)| x0 - &r.pi * &s.exosystem.w0)
        .collect()
}

pub fn solve_all_regulators(s: &Scenario) -> Result<Vec<RegulatorSolution>> {
    s.agents
        .iter()
        .enumerate()
        .map(|(i, p)| {
            solve_regulator(p, &s.exosystem)
                .map_err(|e| match e {
                    Error::A3Violation { residual, .. } => Error::A3Violation { agent: i + 1, residual },
                    e => e,
                })
                .map_err(|e| e.in_stage(format!("regulator equations, agent {}", i + 1)))
        })
        .collect()
}

pub fn synthesize(s: &Scenario) -> Result<SynthesisOutcome> {
    s.validate().map_err(|e| e.in_stage("scenario"))?;
    let opts = &s.synthesis;
    let regulators = solve_all_regulators(s)?;
    let starts = regulation_error_initial(s, &regulators);

    let mut feedbacks = Vec::with_capacity(s.agent_count());
    for (i, (p, x0)) in s.agents.iter().zip(&starts).enumerate() {
        let search = SearchOptions {
            max_candidates: opts.max_candidates,
            seed: opts.seed,
            overshoot_flags: opts.flags_for(i, p.outputs()),
        };
        let fb = synthesize_nonovershooting_f(p, x0, opts.interval, &search)
            .map_err(|e| e.in_stage(format!("state feedback search, agent {}", i + 1)))?;
        feedbacks.push(fb);
    }

    let fs: Vec<_> = feedbacks.iter().map(|f| f.f.clone()).collect();
    let lambda0 = compute_lambda0(&fs, &s.agents).map_err(|e| e.in_stage("lambda0"))?;
    let mu0 = opts.mu0.unwrap_or_else(|| default_mu0(lambda0));
    if mu0 >= lambda0 {
        return Err(Error::PreconditionViolated(format!(
            "mu0 = {mu0} must lie left of lambda0 = {lambda0}"
        ))
        .in_stage("observer bound"));
    }

    let sm = &s.exosystem.s;
    let mut agents = Vec::with_capacity(s.agent_count());
    for (i, p) in s.agents.iter().enumerate() {
        let stage = || format!("observer gains, agent {}", i + 1);
        let observer = if i < s.informed {
            let (l1, l2) = informed_observer_gains(p, sm, mu0).map_err(|e| e.in_stage(stage()))?;
            ObserverGain::Informed { l1, l2 }
        } else {
            ObserverGain::Uninformed {
                l: uninformed_observer_gain(p, mu0).map_err(|e| e.in_stage(stage()))?,
            }
        };
        let g = feedforward_gain(&regulators[i], &fs[i]).map_err(|e| e.in_stage(stage()))?;
        agents.push(AgentGains {
            f: fs[i].clone(),
            g,
            observer,
        });
    }

    let part = graph::partition(&graph::laplacian(&s.graph), s.informed)
        .map_err(|e| e.in_stage("coupling gain"))?;
    let choice = select_gamma(sm, &part.l33, mu0, opts.gamma_margin)
        .map_err(|e| e.in_stage("coupling gain"))?;

    Ok(SynthesisOutcome {
        gains: ControllerGains {
            agents,
            gamma: choice.gamma,
            gamma_min: choice.gamma_min,
            lambda0,
            mu0,
        },
        regulators,
        feedbacks,
    })
}
