//! Networked closed loop as one autonomous LTI system, exact simulation and
//! overshoot detection.
//!
//! The stacked state is `(x_1..x_N, w, ξ_1..ξ_N, η_1..η_N)`.

use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::graph;
use crate::io::check_gains;
use crate::model::{EstimatorInit, Scenario};
use crate::numerics::{self, kron, Matrix, Spectrum, Vector};
use crate::observer::{informed_observer_matrix, ControllerGains, ObserverGain};

/// Where each agent's blocks live in the stacked state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub x: Vec<Range<usize>>,
    pub w: Range<usize>,
    pub xi: Vec<Range<usize>>,
    pub eta: Vec<Range<usize>>,
    /// Rows of the output map holding `e_i`.
    pub e: Vec<Range<usize>>,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        self.eta.last().map_or(self.w.end, |r| r.end)
    }

    pub fn outputs(&self) -> usize {
        self.e.last().map_or(0, |r| r.end)
    }

    /// `(agent, output)` pairs in output-map order, both 1-based.
    pub fn output_labels(&self) -> Vec<(usize, usize)> {
        self.e
            .iter()
            .enumerate()
            .flat_map(|(i, r)| (1..=r.len()).map(move |j| (i + 1, j)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopSystem {
    pub a_cl: Matrix,
    /// Maps the stacked state to the stacked regulated outputs.
    pub c_out: Matrix,
    pub layout: StateLayout,
    /// The same dynamics in the coordinates `(x, w, ξ − x, η − w)`, built
    /// block by block rather than by transforming `a_cl`.
    pub a_err: Matrix,
    pub c_err: Matrix,
}

impl ClosedLoopSystem {
    /// `(x, w, ξ, η) ↦ (x, w, ξ − x, η − w)`.
    pub fn to_error_coordinates(&self, v: &Vector) -> Vector {
        let lay = &self.layout;
        let mut z = v.clone();
        for i in 0..lay.xi.len() {
            for (a, b) in lay.xi[i].clone().zip(lay.x[i].clone()) {
                z[a] -= v[b];
            }
            for (a, b) in lay.eta[i].clone().zip(lay.w.clone()) {
                z[a] -= v[b];
            }
        }
        z
    }

    pub fn from_error_coordinates(&self, z: &Vector) -> Vector {
        let lay = &self.layout;
        let mut v = z.clone();
        for i in 0..lay.xi.len() {
            for (a, b) in lay.xi[i].clone().zip(lay.x[i].clone()) {
                v[a] += z[b];
            }
            for (a, b) in lay.eta[i].clone().zip(lay.w.clone()) {
                v[a] += z[b];
            }
        }
        v
    }

    /// Matrix of [`Self::to_error_coordinates`].
    pub fn error_transform(&self) -> Matrix {
        let n = self.a_cl.nrows();
        Matrix::from_columns(
            &(0..n)
                .map(|k| self.to_error_coordinates(&Vector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 })))
                .collect::<Vec<_>>(),
        )
    }
}

fn layout_for(s: &Scenario) -> StateLayout {
    let q = s.exosystem.dim();
    let mut at = 0;
    let mut take = |len: usize| {
        let r = at..at + len;
        at += len;
        r
    };
    let x = s.agents.iter().map(|p| take(p.states())).collect();
    let w = take(q);
    let xi = s.agents.iter().map(|p| take(p.states())).collect();
    let eta = s.agents.iter().map(|_| take(q)).collect();
    let mut row = 0;
    let e = s
        .agents
        .iter()
        .map(|p| {
            let r = row..row + p.outputs();
            row += p.outputs();
            r
        })
        .collect();
    StateLayout { x, w, xi, eta, e }
}

fn add_block(m: &mut Matrix, rows: &Range<usize>, cols: &Range<usize>, block: &Matrix) {
    let mut view = m.view_mut((rows.start, cols.start), (rows.len(), cols.len()));
    view += block;
}

/// Builds the raw coupled dynamics of plants, exosystem and estimators with
/// `u_i = F_i ξ_i + G_i η_i`.
pub fn assemble_closed_loop(s: &Scenario, gains: &ControllerGains) -> Result<ClosedLoopSystem> {
    check_gains(s, gains)?;
    let lay = layout_for(s);
    let dim = lay.dim();
    let sm = &s.exosystem.s;
    let mut a = Matrix::zeros(dim, dim);
    let mut c = Matrix::zeros(lay.outputs(), dim);
    let mut ae = Matrix::zeros(dim, dim);
    let mut ce = Matrix::zeros(lay.outputs(), dim);
    let adj = graph::adjacency(&s.graph);

    add_block(&mut a, &lay.w, &lay.w, sm);
    add_block(&mut ae, &lay.w, &lay.w, sm);
    for (i, (p, g)) in s.agents.iter().zip(&gains.agents).enumerate() {
        let (x, xi, eta) = (&lay.x[i], &lay.xi[i], &lay.eta[i]);
        let bf = &p.b * &g.f;
        let bg = &p.b * &g.g;

        add_block(&mut a, x, x, &p.a);
        add_block(&mut a, x, xi, &bf);
        add_block(&mut a, x, eta, &bg);
        add_block(&mut a, x, &lay.w, &p.e);

        add_block(&mut a, xi, xi, &(&p.a + &bf));
        add_block(&mut a, xi, eta, &(&bg + &p.e));
        add_block(&mut a, eta, eta, sm);

        add_block(&mut ae, x, x, &(&p.a + &bf));
        add_block(&mut ae, x, &lay.w, &(&bg + &p.e));
        add_block(&mut ae, x, xi, &bf);
        add_block(&mut ae, x, eta, &bg);
        add_block(&mut ae, eta, eta, sm);

        // Output injection uses ŷ − y = C_y(ξ − x) + H_y(η − w); the D_y u
        // terms cancel.
        match &g.observer {
            ObserverGain::Informed { l1, l2 } => {
                for (rows, l) in [(xi, l1), (eta, l2)] {
                    let lc = l * &p.c_y;
                    let lh = l * &p.h_y;
                    add_block(&mut a, rows, xi, &lc);
                    add_block(&mut a, rows, x, &-&lc);
                    add_block(&mut a, rows, eta, &lh);
                    add_block(&mut a, rows, &lay.w, &-&lh);
                }
                let acc = informed_observer_matrix(p, sm, l1, l2);
                let (n, q) = (xi.len(), eta.len());
                add_block(&mut ae, xi, xi, &acc.view((0, 0), (n, n)).into_owned());
                add_block(&mut ae, xi, eta, &acc.view((0, n), (n, q)).into_owned());
                add_block(&mut ae, eta, xi, &acc.view((n, 0), (q, n)).into_owned());
                add_block(&mut ae, eta, eta, &(acc.view((n, n), (q, q)) - sm));
            }
            ObserverGain::Uninformed { l } => {
                let lc = l * &p.c_y;
                add_block(&mut a, xi, xi, &lc);
                add_block(&mut a, xi, x, &-&lc);
                add_block(&mut ae, xi, xi, &(&p.a + &lc));
                add_block(&mut ae, xi, eta, &p.e);
                let iq = Matrix::identity(s.exosystem.dim(), s.exosystem.dim());
                for j in 0..adj.ncols() {
                    let aij = adj[(i + 1, j)];
                    if aij == 0.0 {
                        continue;
                    }
                    let src = if j == 0 { &lay.w } else { &lay.eta[j - 1] };
                    add_block(&mut a, eta, src, &(&iq * (gains.gamma * aij)));
                    add_block(&mut a, eta, eta, &(&iq * (-gains.gamma * aij)));
                    if j > 0 {
                        add_block(&mut ae, eta, src, &(&iq * (gains.gamma * aij)));
                    }
                    add_block(&mut ae, eta, eta, &(&iq * (-gains.gamma * aij)));
                }
            }
        }

        let e = &lay.e[i];
        add_block(&mut c, e, x, &p.c_e);
        add_block(&mut c, e, xi, &(&p.d_e * &g.f));
        add_block(&mut c, e, eta, &(&p.d_e * &g.g));
        add_block(&mut c, e, &lay.w, &p.h_e);

        let df = &p.d_e * &g.f;
        let dg = &p.d_e * &g.g;
        add_block(&mut ce, e, x, &(&p.c_e + &df));
        add_block(&mut ce, e, &lay.w, &(&p.h_e + &dg));
        add_block(&mut ce, e, xi, &df);
        add_block(&mut ce, e, eta, &dg);
    }
    Ok(ClosedLoopSystem {
        a_cl: a,
        c_out: c,
        layout: lay,
        a_err: ae,
        c_err: ce,
    })
}

/// Union of the block spectra the design places: state feedback, informed
/// composite observers, uninformed Luenberger observers, the consensus block
/// `I ⊗ S − γ (L33 ⊗ I_q)` and the exosystem.
pub fn designed_spectrum(s: &Scenario, gains: &ControllerGains) -> Result<Spectrum> {
    check_gains(s, gains)?;
    let sm = &s.exosystem.s;
    let mut parts = Vec::new();
    for (p, g) in s.agents.iter().zip(&gains.agents) {
        parts.push(numerics::spectrum(&(&p.a + &p.b * &g.f))?);
        parts.push(match &g.observer {
            ObserverGain::Informed { l1, l2 } => {
                numerics::spectrum(&informed_observer_matrix(p, sm, l1, l2))?
            }
            ObserverGain::Uninformed { l } => numerics::spectrum(&(&p.a + l * &p.c_y))?,
        });
    }
    let part = graph::partition(&graph::laplacian(&s.graph), s.informed)?;
    parts.push(numerics::spectrum(&consensus_matrix(sm, &part.l33, gains.gamma))?);
    parts.push(numerics::spectrum(sm)?);
    Ok(Spectrum::union(&parts))
}

/// `I_u ⊗ S − γ (L33 ⊗ I_q)`.
pub fn consensus_matrix(s: &Matrix, l33: &Matrix, gamma: f64) -> Matrix {
    let u = l33.nrows();
    let q = s.nrows();
    kron(&Matrix::identity(u, u), s) - kron(l33, &Matrix::identity(q, q)) * gamma
}

/// Eigenvalues of `A_cl` left after removing one match for each exosystem
/// eigenvalue; these govern the estimator and regulation errors.
pub fn error_spectrum(cls: &ClosedLoopSystem, s: &Matrix) -> Result<Spectrum> {
    let mut rest = numerics::spectrum(&cls.a_cl)?.into_values();
    for z in numerics::spectrum(s)?.values() {
        if let Some((k, _)) = rest
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - z).norm().total_cmp(&(b.1 - z).norm()))
        {
            rest.swap_remove(k);
        }
    }
    Ok(Spectrum::new(rest))
}

/// Stacked initial vector `(x_0, w_0, ξ(0), η(0))` for `policy`.
pub fn estimator_init(s: &Scenario, policy: &EstimatorInit) -> Result<Vector> {
    let lay = layout_for(s);
    let mut v = Vector::zeros(lay.dim());
    let w0 = &s.exosystem.w0;
    for (i, x0) in s.x0.iter().enumerate() {
        v.rows_mut(lay.x[i].start, x0.len()).copy_from(x0);
    }
    v.rows_mut(lay.w.start, w0.len()).copy_from(w0);
    let bad = || Error::InvalidScenario("explicit estimator vectors have the wrong shape".into());
    for i in 0..s.agent_count() {
        let (xi, eta) = match policy {
            EstimatorInit::Exact => (s.x0[i].clone(), w0.clone()),
            EstimatorInit::RelativePerturbation(r) => (&s.x0[i] * *r, w0 * *r),
            EstimatorInit::Explicit { xi, eta } => {
                let (a, b) = (xi.get(i).ok_or_else(bad)?, eta.get(i).ok_or_else(bad)?);
                if a.len() != lay.xi[i].len() || b.len() != lay.eta[i].len() {
                    return Err(bad());
                }
                (a.clone(), b.clone())
            }
        };
        v.rows_mut(lay.xi[i].start, xi.len()).copy_from(&xi);
        v.rows_mut(lay.eta[i].start, eta.len()).copy_from(&eta);
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    /// Stacked regulated outputs at each sample.
    pub e: Vec<Vec<f64>>,
    pub states: Option<Vec<Vector>>,
}

impl Trace {
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.e.iter().map(|row| row[j]).collect()
    }
}

/// Exact sampling `x_{k+1} = e^{A dt} x_k` on `[0, t_end]`.
pub fn simulate(cls: &ClosedLoopSystem, x_init: &Vector, t_end: f64, dt: f64) -> Result<Trace> {
    run(cls, x_init, t_end, dt, false)
}

/// As [`simulate`], also recording the stacked state at every sample.
pub fn simulate_with_states(cls: &ClosedLoopSystem, x_init: &Vector, t_end: f64, dt: f64) -> Result<Trace> {
    run(cls, x_init, t_end, dt, true)
}

fn run(cls: &ClosedLoopSystem, x_init: &Vector, t_end: f64, dt: f64, keep: bool) -> Result<Trace> {
    if !(dt > 0.0 && t_end >= dt && dt.is_finite() && t_end.is_finite()) {
        return Err(Error::PreconditionViolated(format!(
            "need 0 < dt <= t_end, got dt = {dt}, t_end = {t_end}"
        )));
    }
    if x_init.len() != cls.a_cl.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "initial vector has {} entries, system has {}",
            x_init.len(),
            cls.a_cl.nrows()
        )));
    }
    let steps = (t_end / dt).round() as usize;
    // Step in error coordinates, balanced: the large observer gains then act
    // on small estimator errors instead of on differences of large states.
    let (balanced, scale) = numerics::balance(&cls.a_err)?;
    let d = Vector::from_vec(scale);
    let step = numerics::expm(&(&balanced * dt))?;
    let mut c = cls.c_err.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col *= d[j];
    }
    let mut times = Vec::with_capacity(steps + 1);
    let mut e = Vec::with_capacity(steps + 1);
    let mut states = keep.then(|| Vec::with_capacity(steps + 1));
    let mut z = cls.to_error_coordinates(x_init).component_div(&d);
    for k in 0..=steps {
        times.push(k as f64 * dt);
        e.push((&c * &z).as_slice().to_vec());
        if let Some(s) = states.as_mut() {
            s.push(cls.from_error_coordinates(&z.component_mul(&d)));
        }
        if k < steps {
            z = &step * &z;
        }
    }
    Ok(Trace { times, e, states })
}

pub const DEFAULT_TOL_REL: f64 = 1e-6;
const ABS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignStatus {
    Nonovershooting,
    /// First crossing time, interpolated between samples.
    SignChange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentVerdict {
    pub status: SignStatus,
    pub peak: f64,
    /// Time after which `|e|` stays within `1e-3 |e(0)|`.
    pub settling_time: Option<f64>,
}

impl ComponentVerdict {
    pub fn is_nonovershooting(&self) -> bool {
        self.status == SignStatus::Nonovershooting
    }
}

/// Sign-change verdict for one stacked output component. A crossing needs a
/// sample above `τ` and a later one below `−τ` (or mirrored), with
/// `τ = tol_rel · max |e|`.
pub fn detect_overshoot(tr: &Trace, component: usize, tol_rel: f64) -> ComponentVerdict {
    let e = tr.component(component);
    let peak = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let settling_time = settling(&tr.times, &e);
    if peak < ABS_FLOOR {
        return ComponentVerdict {
            status: SignStatus::Nonovershooting,
            peak,
            settling_time,
        };
    }
    let tau = tol_rel * peak;
    let mut established = 0i8;
    for (k, &v) in e.iter().enumerate() {
        let s = if v > tau {
            1
        } else if v < -tau {
            -1
        } else {
            continue;
        };
        if established == 0 {
            established = s;
        } else if s != established {
            // Last sign flip before sample k.
            let mut j = k;
            while j > 0 && e[j - 1].signum() != established as f64 && e[j - 1] != 0.0 {
                j -= 1;
            }
            let t = if j == 0 {
                tr.times[0]
            } else {
                let (t0, t1, v0, v1) = (tr.times[j - 1], tr.times[j], e[j - 1], e[j]);
                if v0 == v1 { t0 } else { t0 + (t1 - t0) * v0 / (v0 - v1) }
            };
            return ComponentVerdict {
                status: SignStatus::SignChange(t),
                peak,
                settling_time,
            };
        }
    }
    ComponentVerdict {
        status: SignStatus::Nonovershooting,
        peak,
        settling_time,
    }
}

fn settling(times: &[f64], e: &[f64]) -> Option<f64> {
    let e0 = e.first()?.abs();
    let bound = 1e-3 * e0;
    let mut last_outside = None;
    for (k, v) in e.iter().enumerate() {
        if v.abs() > bound {
            last_outside = Some(k);
        }
    }
    match last_outside {
        None => Some(times[0]),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvershootVerdict {
    /// `(agent, output)`, 1-based, alongside each verdict.
    pub components: Vec<((usize, usize), ComponentVerdict)>,
}

impl OvershootVerdict {
    pub fn all_nonovershooting(&self) -> bool {
        self.components.iter().all(|(_, v)| v.is_nonovershooting())
    }
}

pub fn overshoot_verdict(tr: &Trace, layout: &StateLayout, tol_rel: f64) -> OvershootVerdict {
    OvershootVerdict {
        components: layout
            .output_labels()
            .into_iter()
            .enumerate()
            .map(|(j, label)| (label, detect_overshoot(tr, j, tol_rel)))
            .collect(),
    }
}

/// CSV with header `t,e_1_1,...` and optional `s_k` state columns, 15
/// significant digits.
pub fn write_csv(tr: &Trace, layout: &StateLayout, mut out: impl Write) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(layout.output_labels().iter().map(|(i, j)| format!("e_{i}_{j}")));
    if let Some(first) = tr.states.as_ref().and_then(|s| s.first()) {
        header.extend((1..=first.len()).map(|k| format!("s_{k}")));
    }
    writeln!(out, "{}", header.join(","))?;
    for (k, t) in tr.times.iter().enumerate() {
        let mut line = format!("{t:.14e}");
        for v in &tr.e[k] {
            line.push_str(&format!(",{v:.14e}"));
        }
        if let Some(states) = &tr.states {
            for v in states[k].iter() {
                line.push_str(&format!(",{v:.14e}"));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn cls(a: Matrix) -> ClosedLoopSystem {
        let n = a.nrows();
        ClosedLoopSystem {
            c_out: Matrix::identity(n, n),
            c_err: Matrix::identity(n, n),
            a_err: a.clone(),
            a_cl: a,
            layout: StateLayout {
                x: vec![0..n],
                w: n..n,
                xi: vec![],
                eta: vec![],
                e: vec![0..n],
            },
        }
    }

    #[test]
    fn zero_dynamics_are_constant() {
        let tr = simulate(&cls(Matrix::zeros(2, 2)), &Vector::from_vec(vec![1.0, -2.0]), 1.0, 0.1).unwrap();
        assert_eq!(tr.times.len(), 11);
        assert!(tr.e.iter().all(|r| r == &vec![1.0, -2.0]));
    }

    #[test]
    fn scalar_decay_is_exact() {
        let tr = simulate(&cls(dmatrix![-1.0]), &Vector::from_vec(vec![1.0]), 2.0, 0.1).unwrap();
        for (k, row) in tr.e.iter().enumerate() {
            assert!((row[0] - (-0.1 * k as f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_steps_rejected() {
        let c = cls(dmatrix![-1.0]);
        let x = Vector::from_vec(vec![1.0]);
        assert!(simulate(&c, &x, 1.0, 0.0).is_err());
        assert!(simulate(&c, &x, 0.01, 0.1).is_err());
    }

    fn trace_of(f: impl Fn(f64) -> f64, dt: f64, t_end: f64) -> Trace {
        let steps = (t_end / dt).round() as usize;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let e = times.iter().map(|&t| vec![f(t)]).collect();
        Trace { times, e, states: None }
    }

    #[test]
    fn zero_component_is_nonovershooting() {
        let v = detect_overshoot(&trace_of(|_| 0.0, 0.01, 1.0), 0, DEFAULT_TOL_REL);
        assert!(v.is_nonovershooting());
    }

    #[test]
    fn crossing_of_two_exponentials() {
        let dt = 1e-3;
        let tr = trace_of(|t| (-t).exp() - 2.0 * (-2.0 * t).exp(), dt, 10.0);
        match detect_overshoot(&tr, 0, DEFAULT_TOL_REL).status {
            SignStatus::SignChange(t) => assert!((t - 2f64.ln()).abs() <= dt),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn monotone_decay_settles() {
        let tr = trace_of(|t| (-t).exp(), 1e-2, 10.0);
        let v = detect_overshoot(&tr, 0, DEFAULT_TOL_REL);
        assert!(v.is_nonovershooting());
        let ts = v.settling_time.unwrap();
        assert!((ts - 1000f64.ln()).abs() < 2e-2);
        assert_eq!(v.peak, 1.0);
    }

    #[test]
    fn rounding_noise_below_tolerance_is_ignored() {
        let tr = trace_of(|t| (-t).exp() - 1e-9 * (t * 40.0).sin().abs(), 1e-2, 30.0);
        assert!(detect_overshoot(&tr, 0, DEFAULT_TOL_REL).is_nonovershooting());
    }

    #[test]
    fn csv_layout() {
        let tr = trace_of(|t| t, 0.5, 1.0);
        let c = cls(dmatrix![0.0]);
        let mut buf = Vec::new();
        write_csv(&tr, &c.layout, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,e_1_1");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "5.00000000000000e-1,5.00000000000000e-1");
    }
}
