//! Agents, exosystem and scenarios, plus the structural assumption checks
//! and invariant zeros.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{self, Digraph};
use crate::numerics::{self, Complex64, Matrix, Vector};
use crate::regulator;

/// Tolerance for "no negative real part" style boundary tests.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Relative rank tolerance used by the PBH tests.
const PBH_RANK_TOL: f64 = 1e-8;

/// One agent:
///
/// ```text
/// ẋ = A x + B u + E w
/// y = C_y x + D_y u + H_y w
/// e = C_e x + D_e u + H_e w
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlant {
    pub a: Matrix,
    pub b: Matrix,
    pub e: Matrix,
    pub c_y: Matrix,
    pub d_y: Matrix,
    pub h_y: Matrix,
    pub c_e: Matrix,
    pub d_e: Matrix,
    pub h_e: Matrix,
}

impl AgentPlant {
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn measurements(&self) -> usize {
        self.c_y.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.c_e.nrows()
    }

    pub fn exo_dim(&self) -> usize {
        self.e.ncols()
    }

    /// Checks every shape relation and that all entries are finite.
    pub fn validate(&self) -> Result<()> {
        let (n, m, q) = (self.states(), self.inputs(), self.exo_dim());
        let (p, r) = (self.measurements(), self.outputs());
        let expect = [
            ("A", &self.a, n, n),
            ("B", &self.b, n, m),
            ("E", &self.e, n, q),
            ("C_y", &self.c_y, p, n),
            ("D_y", &self.d_y, p, m),
            ("H_y", &self.h_y, p, q),
            ("C_e", &self.c_e, r, n),
            ("D_e", &self.d_e, r, m),
            ("H_e", &self.h_e, r, q),
        ];
        for (name, mat, rows, cols) in expect {
            if mat.shape() != (rows, cols) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::DimensionMismatch(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Autonomous signal generator `ẇ = S w`, `w(0) = w0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exosystem {
    pub s: Matrix,
    pub w0: Vector,
}

impl Exosystem {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }
}

/// Initial estimator state policy.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorInit {
    /// `ξ_i(0) = x_i(0)`, `η_i(0) = w(0)`.
    Exact,
    /// `ξ_i(0) = r·x_i(0)`, `η_i(0) = r·w(0)`.
    RelativePerturbation(f64),
    Explicit { xi: Vec<Vector>, eta: Vec<Vector> },
}

/// Design knobs for the gain synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Closed-loop eigenvalues are drawn from the open interval `(a, b)`.
    pub interval: (f64, f64),
    /// Observer bound; `None` means six times the slowest closed-loop eigenvalue.
    pub mu0: Option<f64>,
    pub gamma_margin: f64,
    pub seed: u64,
    pub max_candidates: usize,
    /// Per agent, per output: whether overshoot must be avoided. Empty means
    /// every output of every agent.
    pub overshoot_flags: Vec<Vec<bool>>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            interval: (-2.5, -0.3),
            mu0: None,
            gamma_margin: 2.0,
            seed: 0,
            max_candidates: 500,
            overshoot_flags: Vec::new(),
        }
    }
}

impl SynthesisOptions {
    pub fn flags_for(&self, agent: usize, outputs: usize) -> Vec<bool> {
        match self.overshoot_flags.get(agent) {
            Some(f) => f.clone(),
            None => vec![true; outputs],
        }
    }
}

/// A complete multi-agent problem. Agents `0..informed` see the exosystem
/// through their measurements; the rest do not.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub agents: Vec<AgentPlant>,
    pub exosystem: Exosystem,
    pub graph: Digraph,
    pub informed: usize,
    pub x0: Vec<Vector>,
    pub estimator_init: EstimatorInit,
    pub synthesis: SynthesisOptions,
}

impl Scenario {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        let n_agents = self.agents.len();
        if n_agents == 0 {
            return bad("no agents".into());
        }
        if self.graph.agent_count() != n_agents {
            return bad(format!(
                "graph has {} nodes but there are {n_agents} agents",
                self.graph.node_count()
            ));
        }
        if self.informed > n_agents {
            return bad(format!("informed count {} exceeds {n_agents}", self.informed));
        }
        let q = self.exosystem.dim();
        if !self.exosystem.s.is_square() || self.exosystem.w0.len() != q {
            return bad("exosystem S must be square and match w0".into());
        }
        if self.exosystem.s.iter().chain(self.exosystem.w0.iter()).any(|v| !v.is_finite()) {
            return bad("exosystem has non-finite entries".into());
        }
        if self.x0.len() != n_agents {
            return bad(format!("{} initial states for {n_agents} agents", self.x0.len()));
        }
        for (i, (plant, x0)) in self.agents.iter().zip(&self.x0).enumerate() {
            plant
                .validate()
                .map_err(|e| Error::InvalidScenario(format!("agent {}: {e}", i + 1)))?;
            if plant.exo_dim() != q {
                return bad(format!("agent {}: E has {} columns, q = {q}", i + 1, plant.exo_dim()));
            }
            if x0.len() != plant.states() {
                return bad(format!("agent {}: initial state has wrong length", i + 1));
            }
            if i >= self.informed && plant.h_y.iter().any(|&v| v != 0.0) {
                return bad(format!("agent {} is uninformed but H_y is nonzero", i + 1));
            }
            if let Some(flags) = self.synthesis.overshoot_flags.get(i) {
                if flags.len() != plant.outputs() {
                    return bad(format!("agent {}: overshoot flag count mismatch", i + 1));
                }
            }
        }
        let (a, b) = self.synthesis.interval;
        if !(a < b && b < 0.0) {
            return bad(format!("synthesis interval ({a}, {b}) must satisfy a < b < 0"));
        }
        if self.synthesis.gamma_margin < 1.0 {
            return bad("gamma margin must be at least 1".into());
        }
        if let Some(mu0) = self.synthesis.mu0 {
            if mu0 >= 0.0 {
                return bad("mu0 must be negative".into());
            }
        }
        if let EstimatorInit::Explicit { xi, eta } = &self.estimator_init {
            let ok = xi.len() == n_agents
                && eta.len() == n_agents
                && xi.iter().zip(&self.agents).all(|(v, p)| v.len() == p.states())
                && eta.iter().all(|v| v.len() == q);
            if !ok {
                return bad("explicit estimator vectors have the wrong shape".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
}

impl Assumption {
    pub const ALL: [Assumption; 6] = [
        Assumption::A1,
        Assumption::A2,
        Assumption::A3,
        Assumption::A4,
        Assumption::A5,
        Assumption::A6,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Assumption::A1 => "A.1 exosystem antistable",
            Assumption::A2 => "A.2 (A_i, B_i) stabilizable",
            Assumption::A3 => "A.3 regulator equations solvable",
            Assumption::A4 => "A.4 informed composite pair detectable",
            Assumption::A5 => "A.5 (C_y,i, A_i) detectable",
            Assumption::A6 => "A.6 spanning tree rooted at node 0",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    /// Human-readable evidence for a failure, e.g. the offending eigenvalue.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, a: Assumption) -> &AssumptionCheck {
        self.checks
            .iter()
            .find(|c| c.assumption == a)
            .expect("report holds all six assumptions")
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{:<42} {}", c.assumption.label(), if c.passed { "pass" } else { "FAIL" })?;
            if let Some(w) = &c.witness {
                write!(f, "  ({w})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Eigenvalues of `a` with `Re λ ≥ −tol` at which `[a − λI, b]` loses rank.
pub fn uncontrollable_modes(a: &Matrix, b: &Matrix) -> Result<Vec<Complex64>> {
    pbh_defects(a, b, false)
}

/// Eigenvalues of `a` with `Re λ ≥ −tol` at which `[a − λI; c]` loses rank.
pub fn undetectable_modes(c: &Matrix, a: &Matrix) -> Result<Vec<Complex64>> {
    pbh_defects(a, c, true)
}

fn pbh_defects(a: &Matrix, other: &Matrix, dual: bool) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let mut out = Vec::new();
    for lam in numerics::spectrum(a)?.into_values() {
        if lam.re < -BOUNDARY_TOL {
            continue;
        }
        let shifted = a - Matrix::identity(n, n) * lam.re;
        let imag = Matrix::identity(n, n) * -lam.im;
        let (re, im) = if dual {
            let z = Matrix::zeros(other.nrows(), n);
            (stack_rows(&shifted, other), stack_rows(&imag, &z))
        } else {
            let z = Matrix::zeros(n, other.ncols());
            (stack_cols(&shifted, other), stack_cols(&imag, &z))
        };
        if numerics::complex_rank(&re, &im, PBH_RANK_TOL) < n {
            out.push(lam);
        }
    }
    Ok(out)
}

pub(crate) fn stack_rows(top: &Matrix, bottom: &Matrix) -> Matrix {
    let mut m = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.rows_mut(0, top.nrows()).copy_from(top);
    m.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    m
}

pub(crate) fn stack_cols(left: &Matrix, right: &Matrix) -> Matrix {
    let mut m = Matrix::zeros(left.nrows(), left.ncols() + right.ncols());
    m.columns_mut(0, left.ncols()).copy_from(left);
    m.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    m
}

/// `[[a, b], [c, d]]`.
pub(crate) fn blocks(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Matrix {
    stack_rows(&stack_cols(a, b), &stack_cols(c, d))
}

/// `[[A, E], [0, S]]` and `[C_y, H_y]`: the plant augmented with the exosystem.
pub fn composite_pair(plant: &AgentPlant, s: &Matrix) -> (Matrix, Matrix) {
    let z = Matrix::zeros(s.nrows(), plant.states());
    let a = blocks(&plant.a, &plant.e, &z, s);
    let c = stack_cols(&plant.c_y, &plant.h_y);
    (a, c)
}

fn fmt_modes(modes: &[Complex64]) -> String {
    modes
        .iter()
        .map(|z| format!("{:.6}{:+.6}i", z.re, z.im))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn check_assumptions(s: &Scenario) -> Result<AssumptionReport> {
    let mut checks = Vec::with_capacity(6);
    let spec_s = numerics::spectrum(&s.exosystem.s)?;
    let stable: Vec<Complex64> = spec_s
        .values()
        .iter()
        .copied()
        .filter(|z| z.re < -BOUNDARY_TOL)
        .collect();
    checks.push(AssumptionCheck {
        assumption: Assumption::A1,
        passed: stable.is_empty(),
        witness: (!stable.is_empty()).then(|| format!("S has eigenvalues {}", fmt_modes(&stable))),
    });

    let mut witness = Vec::new();
    for (i, p) in s.agents.iter().enumerate() {
        let bad = uncontrollable_modes(&p.a, &p.b)?;
        if !bad.is_empty() {
            witness.push(format!("agent {}: uncontrollable modes {}", i + 1, fmt_modes(&bad)));
        }
    }
    checks.push(verdict(Assumption::A2, witness));

    let mut witness = Vec::new();
    for (i, p) in s.agents.iter().enumerate() {
        match regulator::solve_regulator(p, &s.exosystem) {
            Ok(_) => {}
            Err(Error::A3Violation { residual, .. }) => {
                witness.push(format!("agent {}: residual {residual:.3e}", i + 1))
            }
            Err(e) => return Err(e),
        }
    }
    checks.push(verdict(Assumption::A3, witness));

    let mut witness = Vec::new();
    for (i, p) in s.agents.iter().enumerate().take(s.informed) {
        let (a, c) = composite_pair(p, &s.exosystem.s);
        let bad = undetectable_modes(&c, &a)?;
        if !bad.is_empty() {
            witness.push(format!("agent {}: undetectable modes {}", i + 1, fmt_modes(&bad)));
        }
    }
    checks.push(verdict(Assumption::A4, witness));

    let mut witness = Vec::new();
    for (i, p) in s.agents.iter().enumerate().skip(s.informed) {
        let bad = undetectable_modes(&p.c_y, &p.a)?;
        if !bad.is_empty() {
            witness.push(format!("agent {}: undetectable modes {}", i + 1, fmt_modes(&bad)));
        }
    }
    checks.push(verdict(Assumption::A5, witness));

    let rooted = graph::rooted_spanning_tree_exists(&s.graph);
    checks.push(AssumptionCheck {
        assumption: Assumption::A6,
        passed: rooted,
        witness: (!rooted).then(|| "some agent is unreachable from node 0".to_string()),
    });
    Ok(AssumptionReport { checks })
}

fn verdict(assumption: Assumption, witness: Vec<String>) -> AssumptionCheck {
    AssumptionCheck {
        assumption,
        passed: witness.is_empty(),
        witness: (!witness.is_empty()).then(|| witness.join("; ")),
    }
}

/// Rosenbrock system matrix `[[A − λI, B], [C, D]]` at complex `λ`, split
/// into real and imaginary parts.
fn rosenbrock_at(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, lam: Complex64) -> (Matrix, Matrix) {
    let n = a.nrows();
    let re = blocks(&(a - Matrix::identity(n, n) * lam.re), b, c, d);
    let mut im = Matrix::zeros(re.nrows(), re.ncols());
    for i in 0..n {
        im[(i, i)] = -lam.im;
    }
    (re, im)
}

fn normal_rank(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, rng: &mut ChaCha8Rng) -> usize {
    let scale = 1.0 + a.norm();
    (0..3)
        .map(|_| {
            let lam = Complex64::new(rng.gen_range(-1.0..1.0) * scale, rng.gen_range(-1.0..1.0) * scale);
            let (re, im) = rosenbrock_at(a, b, c, d, lam);
            numerics::complex_rank(&re, &im, 1e-10)
        })
        .max()
        .unwrap_or(0)
}

/// Finite eigenvalues of the square pencil `M − λN` via `(M − σN)⁻¹N`.
fn pencil_eigenvalues(m: &Matrix, nmat: &Matrix, sigma: f64) -> Option<Vec<Complex64>> {
    let lu = (m - nmat * sigma).lu();
    let k = lu.solve(nmat)?;
    if k.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scale = k.norm().max(1e-300);
    let nu = numerics::spectrum(&k).ok()?;
    Some(
        nu.into_values()
            .into_iter()
            .filter(|v| v.norm() > 1e-9 * scale)
            .map(|v| Complex64::new(sigma, 0.0) + v.inv())
            .collect(),
    )
}

/// Invariant zeros of `(A, B, C, D)`: the finite points where the Rosenbrock
/// matrix drops below its normal rank, with multiplicity.
pub fn invariant_zeros(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let (m, p) = (b.ncols(), c.nrows());
    if !a.is_square() || b.nrows() != n || c.ncols() != n || d.shape() != (p, m) {
        return Err(Error::DimensionMismatch("invariant_zeros: inconsistent shapes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x2e05);
    let r = normal_rank(a, b, c, d, &mut rng);
    if r < n + m.min(p) {
        return Err(Error::DegeneratePencil);
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // Square down with a fixed random projection; the zeros of the original
    // system are a subset of the squared system's zeros.
    let k = m.min(p);
    let (bs, cs, ds) = if m > p {
        let r = Matrix::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
        (b * &r, c.clone(), d * &r)
    } else if p > m {
        let r = Matrix::from_fn(k, p, |_, _| rng.gen_range(-1.0..1.0));
        (b.clone(), &r * c, &r * d)
    } else {
        (b.clone(), c.clone(), d.clone())
    };
    let pencil_m = blocks(a, &bs, &cs, &ds);
    let mut pencil_n = Matrix::zeros(n + k, n + k);
    for i in 0..n {
        pencil_n[(i, i)] = 1.0;
    }

    let scale = 1.0 + a.norm() + bs.norm() + cs.norm() + ds.norm();
    let shifts = [0.618_033_988_7 * scale, -0.414_213_562_4 * scale, 1.324_717_957_2 * scale];
    let mut runs: Vec<Vec<Complex64>> = shifts
        .iter()
        .filter_map(|&s| pencil_eigenvalues(&pencil_m, &pencil_n, s))
        .collect();
    if runs.len() < 2 {
        return Err(Error::NoConvergence(n + k));
    }
    let reference = runs.remove(0);
    let other = &runs[0];

    // Keep candidates that both shifts agree on, then confirm the rank drop
    // on the original pencil.
    let mut used = vec![false; other.len()];
    let mut zeros = Vec::new();
    for z in reference {
        let tol = 1e-5 * (1.0 + z.norm());
        let hit = other
            .iter()
            .enumerate()
            .filter(|(j, w)| !used[*j] && (*w - z).norm() <= tol)
            .min_by(|x, y| (x.1 - z).norm().total_cmp(&(y.1 - z).norm()));
        let Some((j, _)) = hit else { continue };
        used[j] = true;
        let (re, im) = rosenbrock_at(a, b, c, d, z);
        let sv = numerics::complex_singular_values(&re, &im);
        if sv.len() >= r && sv[r - 1] <= 1e-6 * sv[0] {
            let z = if z.im.abs() <= 1e-9 * (1.0 + z.re.abs()) {
                Complex64::new(z.re, 0.0)
            } else {
                z
            };
            zeros.push(z);
        }
    }
    zeros.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(zeros)
}

/// Outcome of the `n − 3p ≥ z` rule of thumb for search success.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub n: usize,
    pub p: usize,
    /// Number of invariant zeros of `(A, B, C_y, 0)` in the open left half-plane.
    pub z: usize,
    pub met: bool,
    pub note: String,
}

pub fn feasibility_heuristic(plant: &AgentPlant) -> Result<FeasibilityReport> {
    let n = plant.states();
    let p = plant.inputs().max(plant.measurements());
    let d = Matrix::zeros(plant.measurements(), plant.inputs());
    let z = match invariant_zeros(&plant.a, &plant.b, &plant.c_y, &d) {
        Ok(zs) => zs.iter().filter(|z| z.re < 0.0).count(),
        Err(Error::DegeneratePencil) => 0,
        Err(e) => return Err(e),
    };
    Ok(feasibility_from_counts(n, p, z))
}

pub fn feasibility_from_counts(n: usize, p: usize, z: usize) -> FeasibilityReport {
    let lhs = n as i64 - 3 * p as i64;
    let met = lhs >= z as i64;
    let note = if met {
        format!("{n} - 3*{p} = {lhs} >= {z}: heuristic met")
    } else {
        format!("{n} - 3*{p} = {lhs} < {z}: heuristic not met (advisory)")
    };
    FeasibilityReport { n, p, z, met, note }
}
