//! Acceptance suite: one line per criterion, with the measured quantity and
//! the tolerance it is held to.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::dmatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use noreg::graph;
use noreg::model::{self, EstimatorInit, Exosystem, Scenario};
use noreg::numerics::{self, Matrix, Spectrum};
use noreg::observer::{gamma_bound, select_gamma};
use noreg::seds::{self, SedFunction, SedsFunction, SedsTerm};
use noreg::synthesis::{exp_sum, sign_constancy_test};
use noreg::{mupal, pipeline, regulator, sim};

mod common;
use common::{randn, random_scenario, rng};

/// Criteria allowed to fail without failing the run; each is analysed in
/// the project notes and printed as `FAIL (known)`.
const KNOWN_FAILURES: &[usize] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}


fn laplacian_criterion() -> Outcome {
    let lap = graph::laplacian(&mupal::graph());
    let published = dmatrix![
        0.0, 0.0, 0.0, 0.0, 0.0;
        -2.0, 3.0, 0.0, 0.0, -1.0;
        0.0, -2.0, 2.0, 0.0, 0.0;
        0.0, 0.0, -2.0, 2.0, 0.0;
        0.0, 0.0, -0.7, -0.5, 1.2
    ];
    let exact = lap == published;
    let part = graph::partition(&lap, 1).unwrap();
    let spec = numerics::spectrum(&part.l33).unwrap();
    let want = Spectrum::from_real(&[1.2, 2.0, 2.0]);
    let dist = spec.distance(&want);
    outcome(
        exact && dist <= 1e-9,
        format!("Laplacian exact: {exact}; rho(L33) = {:?}, distance {dist:.2e} (tol 1e-9)", spec.sorted_re()),
    )
}

fn regulator_criterion() -> Outcome {
    let exo = Exosystem {
        s: mupal::s(),
        w0: mupal::w0(),
    };
    let mut worst = 0.0f64;
    let mut resid = 0.0f64;
    for informed in [true, false] {
        let sol = regulator::solve_regulator(&mupal::plant(informed), &exo).unwrap();
        worst = worst
            .max((&sol.pi - mupal::pi_published()).amax())
            .max((&sol.gamma - mupal::gamma_published()).amax());
        resid = resid.max(sol.residual_state).max(sol.residual_output);
    }
    outcome(
        worst <= 5e-3 && resid <= 1e-10,
        format!("max |Pi, Gamma - published| = {worst:.2e} (tol 5e-3); residual {resid:.2e} (tol 1e-10)"),
    )
}

fn zeros_criterion() -> Outcome {
    let p = mupal::plant(true);
    let z = model::invariant_zeros(&p.a, &p.b, &p.c_y, &p.d_y).unwrap();
    let got = Spectrum::new(z);
    let dist = got.distance(&Spectrum::from_real(&[-50.54, 11.11, 11.11]));
    outcome(
        got.len() == 3 && dist <= 1e-2,
        format!("zeros {:?}, distance {dist:.2e} (tol 1e-2)", got.sorted_re()),
    )
}

fn gamma_criterion() -> Outcome {
    let part = graph::partition(&graph::laplacian(&mupal::graph()), 1).unwrap();
    let choice = select_gamma(&mupal::s(), &part.l33, -12.0, 1.0).unwrap();
    let bound = gamma_bound(&mupal::s(), &part.l33, 24.0).unwrap();
    outcome(
        (choice.gamma_min - 10.0).abs() <= 1e-6 && (bound + 28.8).abs() <= 1e-9 && bound <= -12.0,
        format!(
            "gamma_min = {:.9} (want 10, tol 1e-6); bound at gamma = 24 is {bound:.9} (want -28.8 <= -12)",
            choice.gamma_min
        ),
    )
}

fn pairwise(s: &Matrix, l33: &Matrix, gamma: f64) -> Spectrum {
    let ss = numerics::spectrum(s).unwrap();
    let ls = numerics::spectrum(l33).unwrap();
    let mut out = Vec::new();
    for a in ls.values() {
        for b in ss.values() {
            out.push(b - a * gamma);
        }
    }
    Spectrum::new(out)
}

fn spectrum_identity_criterion() -> Outcome {
    let part = graph::partition(&graph::laplacian(&mupal::graph()), 1).unwrap();
    let d0 = numerics::spectrum(&sim::consensus_matrix(&mupal::s(), &part.l33, 24.0))
        .unwrap()
        .distance(&pairwise(&mupal::s(), &part.l33, 24.0));
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let q = r.gen_range(1..=4);
        let u = r.gen_range(1..=4);
        let s = randn(&mut r, q, q, 2.0);
        let l33 = randn(&mut r, u, u, 1.0) + Matrix::identity(u, u) * 2.0;
        let gamma = r.gen_range(0.5..10.0);
        let got = numerics::spectrum(&sim::consensus_matrix(&s, &l33, gamma)).unwrap();
        worst = worst.max(got.distance(&pairwise(&s, &l33, gamma)));
    }
    outcome(
        d0 <= 1e-8 && worst <= 1e-8,
        format!("MuPAL distance {d0:.2e}; worst of 50 random triples {worst:.2e} (tol 1e-8)"),
    )
}

/// Sign change between samples whose magnitude exceeds `threshold`.
fn sampled_sign_change(values: impl IntoIterator<Item = f64>, threshold: f64) -> bool {
    let (mut pos, mut neg) = (false, false);
    for v in values {
        pos |= v > threshold;
        neg |= v < -threshold;
    }
    pos && neg
}

fn synthesis_criterion() -> Outcome {
    let sc = mupal::scenario();
    let out = match pipeline::synthesize(&sc) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("synthesis failed: {e}")),
    };
    let starts = pipeline::regulation_error_initial(&sc, &out.regulators);
    let (a, b) = sc.synthesis.interval;
    let mut problems = Vec::new();
    let mut max_dev = 0.0f64;
    for (i, (fb, p)) in out.feedbacks.iter().zip(&sc.agents).enumerate() {
        let acl = &p.a + &p.b * &fb.f;
        let spec = numerics::spectrum(&acl).unwrap();
        let re = spec.sorted_re();
        let real = spec.is_real(1e-9);
        let inside = re.iter().all(|&l| a < l && l < b);
        let distinct = re.windows(2).all(|w| w[1] - w[0] > 1e-9);
        if !(real && inside && distinct) {
            problems.push(format!("agent {} spectrum {re:?}", i + 1));
        }
        // Dense sampling of the nominal error from an independent propagator.
        let dt = 1e-3;
        let phi = (&acl * dt).exp();
        let c = &p.c_e + &p.d_e * &fb.f;
        let mut x = starts[i].clone();
        let mut samples = vec![Vec::with_capacity(30_001); p.outputs()];
        for k in 0..=30_000 {
            let e = &c * &x;
            for j in 0..p.outputs() {
                samples[j].push(e[j]);
                max_dev = max_dev.max((e[j] - fb.expansion.evaluate(j, k as f64 * dt)).abs());
            }
            x = &phi * x;
        }
        for j in 0..p.outputs() {
            let analytic = sign_constancy_test(&fb.expansion.coeffs[j], &fb.expansion.rates).is_constant();
            let sampled = !sampled_sign_change(samples[j].iter().copied(), 1e-12);
            if !analytic || !sampled {
                problems.push(format!("e_{}_{}: analytic {analytic}, sampled {sampled}", i + 1, j + 1));
            }
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "4 agents searched, candidates {:?}; expansion vs propagator {max_dev:.1e}; {}",
            out.feedbacks.iter().map(|f| f.candidate).collect::<Vec<_>>(),
            if problems.is_empty() { "8/8 outputs sign-constant".into() } else { problems.join("; ") }
        ),
    )
}

fn end_to_end_criterion() -> Outcome {
    let sc = mupal::scenario();
    let out = pipeline::synthesize(&sc).unwrap();
    let cls = sim::assemble_closed_loop(&sc, &out.gains).unwrap();
    let init = sim::estimator_init(&sc, &EstimatorInit::RelativePerturbation(1.01)).unwrap();
    let tr = sim::simulate(&cls, &init, 30.0, 1e-3).unwrap();
    let verdict = sim::overshoot_verdict(&tr, &cls.layout, 1e-6);
    let last = tr.e.last().unwrap();
    let mut bad = Vec::new();
    for (k, ((i, j), v)) in verdict.components.iter().enumerate() {
        let settled = last[k].abs() <= 1e-3 * tr.e[0][k].abs();
        if !v.is_nonovershooting() || !settled {
            bad.push(format!("e_{i}_{j}: {:?}, |e(30)|/|e(0)| = {:.1e}", v.status, last[k].abs() / tr.e[0][k].abs()));
        }
    }
    let ok = verdict.components.len() - bad.len();
    outcome(
        bad.is_empty(),
        format!("{ok}/{} outputs nonovershooting and settled{}", verdict.components.len(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }),
    )
}

/// Similarity residual and structured spectrum distance for one scenario.
fn separation(sc: &Scenario) -> noreg::Result<(f64, f64, f64)> {
    let out = pipeline::synthesize(sc)?;
    let cls = sim::assemble_closed_loop(sc, &out.gains)?;
    let designed = sim::designed_spectrum(sc, &out.gains)?;
    let t = cls.error_transform();
    let t_inv = t.clone().try_inverse().expect("unit triangular transform");
    let sim_res = (&t * &cls.a_cl * &t_inv - &cls.a_err).amax() / cls.a_err.amax();
    let structured = numerics::spectrum(&cls.a_err)?.distance(&designed);
    let raw = numerics::spectrum(&cls.a_cl)?.distance(&designed);
    Ok((sim_res, structured, raw))
}

fn separation_criterion() -> Outcome {
    let (m_sim, m_struct, m_raw) = separation(&mupal::scenario()).unwrap();
    let mut r = rng(8);
    let (mut passing, mut skipped) = (0, 0);
    let (mut w_sim, mut w_struct, mut w_raw) = (0.0f64, 0.0f64, 0.0f64);
    while passing < 20 && skipped < 200 {
        let sc = random_scenario(&mut r);
        match separation(&sc) {
            Ok((a, b, c)) => {
                passing += 1;
                w_sim = w_sim.max(a);
                w_struct = w_struct.max(b);
                w_raw = w_raw.max(c);
            }
            Err(_) => skipped += 1,
        }
    }
    outcome(
        passing == 20 && m_sim <= 1e-9 && w_sim <= 1e-9 && m_struct <= 1e-5 && w_struct <= 1e-5,
        format!(
            "MuPAL: similarity residual {m_sim:.1e}, distance {m_struct:.1e} (dense eigensolver {m_raw:.1e}); \
             {passing} random (skipped {skipped}): residual {w_sim:.1e}, distance {w_struct:.1e} \
             (dense {w_raw:.1e}); tol 1e-5"
        ),
    )
}

fn random_sed(r: &mut ChaCha8Rng) -> (SedFunction, Vec<f64>, Vec<f64>) {
    loop {
        let k = r.gen_range(1..=4);
        let mut rates: Vec<f64> = Vec::new();
        while rates.len() < k {
            let l = r.gen_range(-3.0..-0.2);
            if rates.iter().all(|x: &f64| (x - l).abs() > 0.05) {
                rates.push(l);
            }
        }
        let coeffs: Vec<f64> = (0..k).map(|_| r.gen_range(-1.0..1.0)).collect();
        let g0: f64 = coeffs.iter().sum();
        if g0.abs() < 0.05 || !sign_constancy_test(&coeffs, &rates).is_constant() {
            continue;
        }
        let pairs: Vec<(f64, f64)> = rates.iter().copied().zip(coeffs.iter().copied()).collect();
        return (SedFunction::new(&pairs).unwrap(), rates, coeffs);
    }
}

fn random_seds(r: &mut ChaCha8Rng, mu_range: std::ops::Range<f64>) -> SedsFunction {
    let k = r.gen_range(1..=4);
    let terms = (0..k)
        .map(|_| {
            let omega = if r.gen_bool(0.3) { 0.0 } else { r.gen_range(0.1..6.0) };
            SedsTerm::new(r.gen_range(mu_range.clone()), omega, r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0))
        })
        .collect();
    SedsFunction::new(terms).unwrap()
}

fn delta_criterion() -> Outcome {
    let mut r = rng(9);
    let mut failures = 0;
    let mut smallest = f64::INFINITY;
    for _ in 0..100 {
        let (g, rates, _) = random_sed(&mut r);
        let slowest = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fastest = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let f = random_seds(&mut r, fastest - 4.0..fastest - 0.05);
        let delta = match seds::delta_for_sign_preservation(&g, &f) {
            Ok(d) => d,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        smallest = smallest.min(delta);
        let sign = g.evaluate(0.0).signum();
        let horizon = 30.0 / slowest.abs();
        let steps = (horizon / 1e-3) as usize;
        let bad = (0..=steps).any(|k| {
            let t = k as f64 * 1e-3;
            sign * (g.evaluate(t) + delta * f.evaluate(t)) <= 0.0
        });
        if bad || !(delta > 0.0) {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{failures}/100 pairs lose sign constancy (smallest delta {smallest:.2e})"),
    )
}

fn closure_criterion() -> Outcome {
    let mut r = rng(10);
    let (mut add_err, mut mul_err) = (0.0f64, 0.0f64);
    let (mut rate_bad, mut rate_checked) = (0, 0);
    for _ in 0..200 {
        let f = random_seds(&mut r, -3.0..-0.1);
        let g = random_seds(&mut r, -3.0..-0.1);
        let sum = seds::add(&f, &g);
        let prod = seds::multiply(&f, &g);
        for k in 0..=1000 {
            let t = k as f64 * 0.01;
            let (fv, gv) = (f.evaluate(t), g.evaluate(t));
            add_err = add_err.max((sum.evaluate(t) - (fv + gv)).abs());
            mul_err = mul_err.max((prod.evaluate(t) - fv * gv).abs());
        }
        if let (Some(rf), Some(rg), Some(rp)) = (f.rate(), g.rate(), prod.rate()) {
            rate_checked += 1;
            if (rp - (rf + rg)).abs() > 1e-12 {
                rate_bad += 1;
            }
        }
    }
    outcome(
        add_err <= 1e-10 && mul_err <= 1e-10 && rate_bad == 0,
        format!(
            "add error {add_err:.1e}, multiply error {mul_err:.1e} (tol 1e-10); rate sum holds on {}/{rate_checked}",
            rate_checked - rate_bad
        ),
    )
}

fn numerics_criterion() -> Outcome {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.gen_range(2..=8);
        // Block-diagonal real Jordan form with distinct eigenvalues.
        let mut d = Matrix::zeros(n, n);
        let mut ed = Matrix::zeros(n, n);
        let mut k = 0;
        while k < n {
            let a = r.gen_range(-3.0..1.0);
            if k + 1 < n && r.gen_bool(0.5) {
                let b = r.gen_range(0.2..4.0);
                d[(k, k)] = a;
                d[(k + 1, k + 1)] = a;
                d[(k, k + 1)] = b;
                d[(k + 1, k)] = -b;
                let ea = a.exp();
                ed[(k, k)] = ea * b.cos();
                ed[(k + 1, k + 1)] = ea * b.cos();
                ed[(k, k + 1)] = ea * b.sin();
                ed[(k + 1, k)] = -ea * b.sin();
                k += 2;
            } else {
                d[(k, k)] = a;
                ed[(k, k)] = a.exp();
                k += 1;
            }
        }
        let v = Matrix::identity(n, n) + randn(&mut r, n, n, 0.4);
        let v_inv = v.clone().try_inverse().unwrap();
        let a = &v * &d * &v_inv;
        let oracle = &v * &ed * &v_inv;
        let got = numerics::expm(&a).unwrap();
        worst = worst.max((&got - &oracle).amax() / oracle.amax().max(1.0));
    }

    let mut disagreements = 0;
    for _ in 0..1000 {
        let k = r.gen_range(1..=4);
        let mut rates: Vec<f64> = Vec::new();
        while rates.len() < k {
            let l = r.gen_range(-4.0..-0.1);
            if rates.iter().all(|x: &f64| (x - l).abs() > 0.1) {
                rates.push(l);
            }
        }
        let coeffs: Vec<f64> = (0..k)
            .map(|_| r.gen_range(0.1..2.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let analytic = sign_constancy_test(&coeffs, &rates).is_constant();
        let times = (0..20_000).map(|i| i as f64 * 1e-3).chain((0..38_000).map(|i| 20.0 + i as f64 * 1e-2));
        let sampled = !sampled_sign_change(times.map(|t| exp_sum(&coeffs, &rates, t)), 1e-300);
        if analytic != sampled {
            disagreements += 1;
        }
    }
    outcome(
        worst <= 1e-10 && disagreements == 0,
        format!("expm vs eigendecomposition {worst:.1e} (tol 1e-10); sign test disagrees with sampling on {disagreements}/1000"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Laplacian and L33 spectrum", laplacian_criterion),
        ("regulator equations", regulator_criterion),
        ("invariant zeros", zeros_criterion),
        ("coupling gain", gamma_criterion),
        ("consensus spectrum identity", spectrum_identity_criterion),
        ("nonovershooting state feedback", synthesis_criterion),
        ("end-to-end regulation, estimator factor 1.01", end_to_end_criterion),
        ("separation of closed-loop spectrum", separation_criterion),
        ("sign-preserving perturbation bound", delta_criterion),
        ("SEDS closure", closure_criterion),
        ("matrix exponential and sign test", numerics_criterion),
    ];
    let mut unexpected = 0;
    let mut passed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        let start = Instant::now();
        let o = run();
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        if o.pass {
            passed += 1;
        } else if !known {
            unexpected += 1;
        }
        println!("criterion {id:>2} {tag}: {name}: {} [{:.1?}]", o.detail, start.elapsed());
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
