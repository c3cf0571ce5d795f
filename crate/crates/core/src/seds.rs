//! Sums of exponentially decaying sinusoids
//!
//! ```text
//! f(t) = Σ e^{μ_i t} (α_i sin ω_i t + β_i cos ω_i t),   μ_i < 0, ω_i ≥ 0
//! ```
//!
//! closed under addition and multiplication, and the perturbation bound `δ`
//! that keeps `g + δ f` free of zeros when `g` is a zero-free sum of real
//! exponentials decaying more slowly than `f`.

use crate::error::{Error, Result};
use crate::synthesis::{sign_changes, sign_constancy_test};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SedsTerm {
    pub mu: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl SedsTerm {
    pub fn new(mu: f64, omega: f64, alpha: f64, beta: f64) -> Self {
        SedsTerm { mu, omega, alpha, beta }
    }

    fn magnitude(&self) -> f64 {
        self.alpha.abs() + self.beta.abs()
    }

    fn eval(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        (self.mu * t).exp() * (self.alpha * s + self.beta * c)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SedsFunction {
    terms: Vec<SedsTerm>,
}

impl SedsFunction {
    pub fn new(terms: Vec<SedsTerm>) -> Result<Self> {
        for t in &terms {
            if !(t.mu < 0.0) || !(t.omega >= 0.0) || !t.alpha.is_finite() || !t.beta.is_finite() {
                return Err(Error::PreconditionViolated(format!(
                    "term needs mu < 0 and omega >= 0, got mu = {}, omega = {}",
                    t.mu, t.omega
                )));
            }
        }
        Ok(SedsFunction { terms }.normalized())
    }

    pub fn zero() -> Self {
        SedsFunction::default()
    }

    /// `β e^{μ t}`.
    pub fn exponential(mu: f64, beta: f64) -> Result<Self> {
        SedsFunction::new(vec![SedsTerm::new(mu, 0.0, 0.0, beta)])
    }

    pub fn terms(&self) -> &[SedsTerm] {
        &self.terms
    }

    /// Largest decay exponent among nonzero terms.
    pub fn rate(&self) -> Option<f64> {
        self.terms
            .iter()
            .filter(|t| t.magnitude() > 0.0)
            .map(|t| t.mu)
            .reduce(f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.magnitude() == 0.0)
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    /// Merges terms sharing `(μ, ω)`, drops `sin 0t` parts and negligible terms.
    fn normalized(self) -> Self {
        let mut merged: Vec<SedsTerm> = Vec::with_capacity(self.terms.len());
        for mut t in self.terms {
            if t.omega == 0.0 {
                t.alpha = 0.0;
            }
            match merged.iter_mut().find(|m| m.mu == t.mu && m.omega == t.omega) {
                Some(m) => {
                    m.alpha += t.alpha;
                    m.beta += t.beta;
                }
                None => merged.push(t),
            }
        }
        let max = merged.iter().map(SedsTerm::magnitude).fold(0.0, f64::max);
        merged.retain(|t| t.magnitude() > 0.0 && t.magnitude() >= 1e-14 * max);
        merged.sort_by(|a, b| b.mu.total_cmp(&a.mu).then(a.omega.total_cmp(&b.omega)));
        SedsFunction { terms: merged }
    }
}

pub fn add(f: &SedsFunction, g: &SedsFunction) -> SedsFunction {
    let mut terms = f.terms.clone();
    terms.extend_from_slice(&g.terms);
    SedsFunction { terms }.normalized()
}

pub fn multiply(f: &SedsFunction, g: &SedsFunction) -> SedsFunction {
    let mut terms = Vec::with_capacity(2 * f.terms.len() * g.terms.len());
    for a in &f.terms {
        for b in &g.terms {
            let mu = a.mu + b.mu;
            // (α1 s1 + β1 c1)(α2 s2 + β2 c2) via product-to-sum identities.
            terms.push(SedsTerm {
                mu,
                omega: a.omega + b.omega,
                alpha: 0.5 * (a.alpha * b.beta + a.beta * b.alpha),
                beta: 0.5 * (a.beta * b.beta - a.alpha * b.alpha),
            });
            let d = a.omega - b.omega;
            let mut alpha = 0.5 * (a.alpha * b.beta - a.beta * b.alpha);
            if d < 0.0 {
                alpha = -alpha;
            }
            terms.push(SedsTerm {
                mu,
                omega: d.abs(),
                alpha,
                beta: 0.5 * (a.alpha * b.alpha + a.beta * b.beta),
            });
        }
    }
    SedsFunction { terms }.normalized()
}

/// `Σ β_i e^{λ_i t}` with distinct negative `λ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SedFunction {
    lambdas: Vec<f64>,
    betas: Vec<f64>,
}

impl SedFunction {
    pub fn new(terms: &[(f64, f64)]) -> Result<Self> {
        let mut lambdas: Vec<f64> = terms.iter().map(|t| t.0).collect();
        if lambdas.iter().any(|&l| !(l < 0.0)) {
            return Err(Error::PreconditionViolated("SED rates must be negative".into()));
        }
        lambdas.sort_by(f64::total_cmp);
        if lambdas.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::PreconditionViolated("SED rates must be distinct".into()));
        }
        Ok(SedFunction {
            lambdas: terms.iter().map(|t| t.0).collect(),
            betas: terms.iter().map(|t| t.1).collect(),
        })
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        crate::synthesis::exp_sum(&self.betas, &self.lambdas, t)
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lambdas.iter().copied().zip(self.betas.iter().copied())
    }

    pub fn to_seds(&self) -> SedsFunction {
        SedsFunction {
            terms: self
                .terms()
                .map(|(l, b)| SedsTerm::new(l, 0.0, 0.0, b))
                .collect(),
        }
        .normalized()
    }

    fn negated(&self) -> Self {
        SedFunction {
            lambdas: self.lambdas.clone(),
            betas: self.betas.iter().map(|b| -b).collect(),
        }
    }
}

const GRID: usize = 10_000;

/// Location and value of the maximum of `h` on `[lo, hi]`: grid search
/// followed by golden-section refinement around the best grid point.
fn maximize(h: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let step = (hi - lo) / GRID as f64;
    let mut best = (lo, h(lo));
    for k in 1..=GRID {
        let t = lo + step * k as f64;
        let v = h(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (h(x1), h(x2));
    while b - a > 1e-10 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = h(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = h(x2);
        }
    }
    for (t, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (t, v);
        }
    }
    best
}

/// A positive `δ` such that `g(t) + δ f(t) ≠ 0` for all `t ≥ 0`.
///
/// Requires `g` zero-free on `t ≥ 0` and every decay rate of `f` below every
/// rate of `g`. With `f1 = −Σ (|α_i| + |β_i|) e^{μ_i t} ≤ f` and `t̄` past the
/// last extremum of `g`, the bound is the smaller of
/// `1 / sup_{[0, t̄]} (−f1/g)` and `inf_{[t̄, ∞)} (g/g1) · g1(t̄)/|f1(t̄)|`,
/// where `g1` keeps the terms of `g` whose sign matches `g`. The result is
/// halved so the inequality is strict where the supremum is attained.
pub fn delta_for_sign_preservation(g: &SedFunction, f: &SedsFunction) -> Result<f64> {
    if f.is_zero() {
        return Ok(1.0);
    }
    let g_min_rate = g.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let f_rate = f.rate().unwrap_or(f64::NEG_INFINITY);
    if !(f_rate < g_min_rate) {
        return Err(Error::PreconditionViolated(format!(
            "f decays at {f_rate}, not faster than the fastest rate of g ({g_min_rate})"
        )));
    }
    let g0 = g.evaluate(0.0);
    if g0 == 0.0 || !sign_constancy_test(&g.betas, &g.lambdas).is_constant() {
        return Err(Error::PreconditionViolated("g has a zero on t >= 0".into()));
    }
    let g = if g0 < 0.0 { g.negated() } else { g.clone() };

    let f1_terms: Vec<(f64, f64)> = f.terms.iter().map(|t| (t.mu, -t.magnitude())).collect();
    let f1 = |t: f64| -> f64 { f1_terms.iter().map(|(mu, c)| c * (mu * t).exp()).sum() };

    // Extrema of g are sign changes of g'.
    let dg: Vec<f64> = g.terms().map(|(l, b)| l * b).collect();
    let last_extremum = sign_changes(&dg, &g.lambdas).last().copied().unwrap_or(0.0);
    let t_bar = 1.0 + last_extremum;

    let ratio = |t: f64| -f1(t) / g.evaluate(t);
    let (_, sup) = maximize(ratio, 0.0, t_bar);
    if !sup.is_finite() || sup <= 0.0 {
        return Err(Error::PreconditionViolated("g vanishes on [0, t_bar]".into()));
    }
    let delta1 = 1.0 / sup;

    let g1_terms: Vec<(f64, f64)> = g.terms().filter(|(_, b)| *b > 0.0).collect();
    let g1 = |t: f64| -> f64 { g1_terms.iter().map(|(l, b)| b * (l * t).exp()).sum() };
    let mut sorted = g.lambdas.clone();
    sorted.sort_by(f64::total_cmp);
    let gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(sorted.last().map_or(1.0, |l| l.abs()), f64::min);
    let t_far = t_bar + 40.0 / gap;
    // g/g1 → 1 at infinity, since the slowest term of a positive g is positive.
    let (_, neg_inf) = maximize(|t| -g.evaluate(t) / g1(t), t_bar, t_far);
    let gamma0 = (-neg_inf).min(1.0);
    let delta2 = gamma0 * g1(t_bar) / f1(t_bar).abs();

    Ok(0.5 * delta1.min(delta2))
}
