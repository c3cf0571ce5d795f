//! Nonovershooting state feedback by eigenstructure assignment.
//!
//! Candidate sets of real closed-loop eigenvalues are drawn from an
//! interval. Each eigenvalue gets an eigenvector/input-direction pair that is
//! invisible in every output except one, so each output is driven by only a
//! few modes. `F = W V⁻¹` then realises the structure, and the modal
//! expansion of the error is checked for sign changes analytically.

mod sign;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use sign::{exp_sum, sign_changes, sign_constancy_test, SignVerdict};

use crate::error::{Error, Result};
use crate::model::{stack_cols, stack_rows, AgentPlant};
use crate::numerics::{self, Matrix, Vector, DEFAULT_KERNEL_TOL};

/// Largest eigenvector-matrix condition number accepted by [`build_feedback`].
pub const MAX_CONDITION: f64 = 1e12;

/// Closed-loop eigenstructure: column `k` of `eigenvectors` and of
/// `input_directions` belong to `eigenvalues[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAssignment {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    pub input_directions: Matrix,
    /// For each output, the modes allowed to appear in it.
    pub coupling: Vec<Vec<usize>>,
}

/// `ẽ_j(t) = Σ_k coeffs[j][k] e^{rates[k] t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalErrorExpansion {
    pub rates: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
}

impl ModalErrorExpansion {
    pub fn evaluate(&self, output: usize, t: f64) -> f64 {
        exp_sum(&self.coeffs[output], &self.rates, t)
    }

    pub fn outputs(&self) -> usize {
        self.coeffs.len()
    }
}

/// Orthonormal basis (columns, `n + m` rows) of the pairs `(v, w)` with
/// `(A − λI)v + Bw = 0` and `(C_e)_J v + (D_e)_J w = 0`.
pub fn candidate_directions(plant: &AgentPlant, lambda: f64, zero_rows: &[usize]) -> Matrix {
    let n = plant.states();
    let top = stack_cols(&(&plant.a - Matrix::identity(n, n) * lambda), &plant.b);
    let mut rows = top;
    for &j in zero_rows {
        let row = stack_cols(
            &plant.c_e.rows(j, 1).into_owned(),
            &plant.d_e.rows(j, 1).into_owned(),
        );
        rows = stack_rows(&rows, &row);
    }
    numerics::kernel_basis(&rows, DEFAULT_KERNEL_TOL)
}

/// `F = W V⁻¹`.
pub fn build_feedback(assignment: &ModeAssignment) -> Result<Matrix> {
    feedback_from(&assignment.eigenvectors, &assignment.input_directions)
}

fn feedback_from(v: &Matrix, w: &Matrix) -> Result<Matrix> {
    let condition = numerics::condition_number(v);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularV { condition });
    }
    let ft = v
        .transpose()
        .lu()
        .solve(&w.transpose())
        .ok_or(Error::SingularV { condition })?;
    Ok(ft.transpose())
}

/// Picks one `(v, w)` from each basis so that the `v`s are as close to
/// mutually orthogonal as the bases allow. Starts from the first basis
/// vector and sweeps, replacing each `v_k` by the admissible direction with
/// the largest component orthogonal to the others.
pub(crate) fn select_directions(bases: &[Matrix], n: usize) -> (Matrix, Matrix) {
    let k = bases.len();
    let m = bases.first().map_or(0, |b| b.nrows() - n);
    let mut v = Matrix::zeros(n, k);
    let mut w = Matrix::zeros(m, k);
    let set = |v: &mut Matrix, w: &mut Matrix, idx: usize, pair: Vector| {
        let vn = pair.rows(0, n).norm();
        let s = if vn > 0.0 { 1.0 / vn } else { 1.0 };
        v.set_column(idx, &(pair.rows(0, n) * s));
        w.set_column(idx, &(pair.rows(n, m) * s));
    };
    for (i, b) in bases.iter().enumerate() {
        set(&mut v, &mut w, i, b.column(0).into_owned());
    }
    if bases.iter().all(|b| b.ncols() <= 1) || k < 2 {
        return (v, w);
    }
    for _sweep in 0..5 {
        for (i, b) in bases.iter().enumerate() {
            if b.ncols() <= 1 {
                continue;
            }
            let others = v.clone().remove_column(i);
            let complement = numerics::kernel_basis(&others.transpose(), 1e-10);
            if complement.ncols() == 0 {
                continue;
            }
            // Parametrise the admissible v's by an orthonormal basis of their
            // span so the objective is a plain ratio of norms.
            let qv = b.rows(0, n).into_owned();
            let svd = qv.clone().svd(true, true);
            let (Some(u), Some(vt)) = (svd.u, svd.v_t) else { continue };
            let smax = svd.singular_values.max();
            let keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&j| svd.singular_values[j] > 1e-10 * smax)
                .collect();
            if keep.is_empty() {
                continue;
            }
            let uk = Matrix::from_columns(&keep.iter().map(|&j| u.column(j)).collect::<Vec<_>>());
            let proj = complement.transpose() * &uk;
            let psvd = proj.svd(false, true);
            let Some(pvt) = psvd.v_t else { continue };
            let best = pvt.row(0).transpose();
            // Back to basis coordinates: a = V_v Σ⁻¹ best.
            let mut a = Vector::zeros(b.ncols());
            for (c, &j) in keep.iter().enumerate() {
                a += vt.row(j).transpose() * (best[c] / svd.singular_values[j]);
            }
            set(&mut v, &mut w, i, b * a);
        }
    }
    (v, w)
}

/// Places the spectrum of `A + BF` at the given distinct values.
pub fn place(a: &Matrix, b: &Matrix, eigenvalues: &[f64]) -> Result<Matrix> {
    let n = a.nrows();
    if eigenvalues.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} target eigenvalues for {n} states",
            eigenvalues.len()
        )));
    }
    let mut bases = Vec::with_capacity(n);
    for &lam in eigenvalues {
        let m = stack_cols(&(a - Matrix::identity(n, n) * lam), b);
        let basis = numerics::kernel_basis(&m, DEFAULT_KERNEL_TOL);
        if basis.ncols() == 0 {
            return Err(Error::PlacementFailed(format!("no eigenvector available for {lam}")));
        }
        bases.push(basis);
    }
    let (v, w) = select_directions(&bases, n);
    feedback_from(&v, &w)
}

fn real_distinct_spectrum(m: &Matrix) -> Result<Vec<f64>> {
    let spec = numerics::spectrum(m)?;
    let scale = 1.0 + m.norm();
    let mut re = Vec::with_capacity(spec.len());
    for z in spec.values() {
        if z.im.abs() > 1e-7 * scale {
            return Err(Error::NonRealEigenvalue { re: z.re, im: z.im });
        }
        re.push(z.re);
    }
    re.sort_by(f64::total_cmp);
    if re.windows(2).any(|p| p[1] - p[0] <= 1e-8 * scale) {
        return Err(Error::DefectiveClosedLoop);
    }
    Ok(re)
}

fn flush(coeffs: &mut [Vec<f64>]) {
    let max = coeffs
        .iter()
        .flatten()
        .fold(0.0f64, |acc, c| acc.max(c.abs()));
    for c in coeffs.iter_mut().flatten() {
        if c.abs() < 1e-12 * max {
            *c = 0.0;
        }
    }
}

fn expansion_from(plant: &AgentPlant, rates: &[f64], v: &Matrix, w: &Matrix, x0: &Vector) -> Result<ModalErrorExpansion> {
    let alpha = v
        .clone()
        .lu()
        .solve(x0)
        .ok_or(Error::DefectiveClosedLoop)?;
    let out = &plant.c_e * v + &plant.d_e * w;
    let mut coeffs: Vec<Vec<f64>> = (0..plant.outputs())
        .map(|j| (0..rates.len()).map(|k| alpha[k] * out[(j, k)]).collect())
        .collect();
    flush(&mut coeffs);
    Ok(ModalErrorExpansion {
        rates: rates.to_vec(),
        coeffs,
    })
}

/// Modal expansion of `ẽ = (C_e + D_e F) x̃` along the trajectory of
/// `ẋ̃ = (A + BF) x̃` from `x̃0`.
pub fn modal_error_expansion(f: &Matrix, plant: &AgentPlant, x0: &Vector) -> Result<ModalErrorExpansion> {
    let n = plant.states();
    let acl = &plant.a + &plant.b * f;
    let rates = real_distinct_spectrum(&acl)?;
    let mut v = Matrix::zeros(n, n);
    for (k, &lam) in rates.iter().enumerate() {
        let kernel = numerics::kernel_basis(&(&acl - Matrix::identity(n, n) * lam), 1e-7);
        if kernel.ncols() == 0 {
            // Fall back to the smallest singular direction.
            let svd = (&acl - Matrix::identity(n, n) * lam).svd(false, true);
            let vt = svd.v_t.ok_or(Error::DefectiveClosedLoop)?;
            let j = svd.singular_values.imin();
            v.set_column(k, &vt.row(j).transpose());
        } else {
            v.set_column(k, &kernel.column(0));
        }
    }
    let w = f * &v;
    expansion_from(plant, &rates, &v, &w, x0)
}

/// Search settings for [`synthesize_nonovershooting_f`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub max_candidates: usize,
    pub seed: u64,
    /// Which outputs must not overshoot; empty means all.
    pub overshoot_flags: Vec<bool>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_candidates: 500,
            seed: 0,
            overshoot_flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonovershootingFeedback {
    pub f: Matrix,
    pub assignment: ModeAssignment,
    pub expansion: ModalErrorExpansion,
    /// Index of the successful candidate set in the search sequence.
    pub candidate: usize,
}

fn primes(count: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= k).all(|&p| k % p != 0) {
            out.push(k);
        }
        k += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Sorted candidate eigenvalue sets in `(a, b)`: a randomly shifted Halton
/// sequence, keeping sets whose neighbours are at least `(b − a)/(10n)` apart.
pub fn candidate_sets(n: usize, interval: (f64, f64), seed: u64, count: usize) -> Vec<Vec<f64>> {
    let (a, b) = interval;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = primes(n);
    let shift: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let gap = (b - a) / (10.0 * n as f64);
    let mut out = Vec::with_capacity(count);
    let limit = 1000 * count as u64 + 10_000;
    let mut i = 1u64;
    while out.len() < count && i < limit {
        let mut set: Vec<f64> = (0..n)
            .map(|d| {
                let u = (radical_inverse(i, bases[d]) + shift[d]).fract();
                a + (b - a) * u
            })
            .collect();
        i += 1;
        set.sort_by(f64::total_cmp);
        let inside = set.iter().all(|&x| x > a && x < b);
        if inside && set.windows(2).all(|p| p[1] - p[0] >= gap) {
            out.push(set);
        }
    }
    out
}

enum Outcome {
    Success(NonovershootingFeedback),
    Failure { failing_outputs: Vec<usize> },
}

fn evaluate_candidate(
    plant: &AgentPlant,
    x0: &Vector,
    interval: (f64, f64),
    flagged: &[usize],
    eigenvalues: &[f64],
    index: usize,
) -> Outcome {
    let n = plant.states();
    let rho = plant.outputs();
    let all: Vec<usize> = (0..rho).collect();
    let fail = Outcome::Failure {
        failing_outputs: flagged.to_vec(),
    };

    let mut bases = Vec::with_capacity(n);
    let mut zeroed: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (k, &lam) in eigenvalues.iter().enumerate() {
        let zero_rows: Vec<usize> = if flagged.is_empty() {
            Vec::new()
        } else {
            let home = flagged[k % flagged.len()];
            flagged.iter().copied().filter(|&j| j != home).collect()
        };
        let mut basis = candidate_directions(plant, lam, &zero_rows);
        let mut z = zero_rows;
        if basis.ncols() == 0 {
            basis = candidate_directions(plant, lam, &[]);
            z = Vec::new();
        }
        if basis.ncols() == 0 {
            return fail;
        }
        bases.push(basis);
        zeroed.push(z);
    }
    let (v, w) = select_directions(&bases, n);
    let Ok(f) = feedback_from(&v, &w) else { return fail };

    let acl = &plant.a + &plant.b * &f;
    let Ok(spec) = real_distinct_spectrum(&acl) else { return fail };
    let (a, b) = interval;
    if spec.iter().any(|&x| x < a - 1e-7 || x > b + 1e-7) {
        return fail;
    }
    let Ok(expansion) = expansion_from(plant, eigenvalues, &v, &w, x0) else {
        return fail;
    };

    let failing: Vec<usize> = flagged
        .iter()
        .copied()
        .filter(|&j| !sign_constancy_test(&expansion.coeffs[j], &expansion.rates).is_constant())
        .collect();
    if !failing.is_empty() {
        return Outcome::Failure {
            failing_outputs: failing,
        };
    }
    let coupling = all
        .iter()
        .map(|&j| (0..n).filter(|&k| !zeroed[k].contains(&j)).collect())
        .collect();
    Outcome::Success(NonovershootingFeedback {
        f,
        assignment: ModeAssignment {
            eigenvalues: eigenvalues.to_vec(),
            eigenvectors: v,
            input_directions: w,
            coupling,
        },
        expansion,
        candidate: index,
    })
}

/// Searches candidate eigenvalue sets in `interval` for a feedback whose
/// nominal error from `x0` changes sign in no flagged output. Candidates are
/// evaluated in parallel; the lowest successful index wins.
pub fn synthesize_nonovershooting_f(
    plant: &AgentPlant,
    x0: &Vector,
    interval: (f64, f64),
    options: &SearchOptions,
) -> Result<NonovershootingFeedback> {
    let (a, b) = interval;
    if !(a < b && b < 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "interval ({a}, {b}) must satisfy a < b < 0"
        )));
    }
    if x0.len() != plant.states() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::PreconditionViolated("initial state must be finite and n-dimensional".into()));
    }
    let rho = plant.outputs();
    let flagged: Vec<usize> = if options.overshoot_flags.is_empty() {
        (0..rho).collect()
    } else {
        (0..rho).filter(|&j| options.overshoot_flags.get(j).copied().unwrap_or(true)).collect()
    };
    let sets = candidate_sets(plant.states(), interval, options.seed, options.max_candidates);

    let chunk = (4 * rayon::current_num_threads()).max(8);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for (c, group) in sets.chunks(chunk).enumerate() {
        let outcomes: Vec<Outcome> = group
            .par_iter()
            .enumerate()
            .map(|(i, set)| evaluate_candidate(plant, x0, interval, &flagged, set, c * chunk + i))
            .collect();
        for (i, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Outcome::Success(found) => return Ok(found),
                Outcome::Failure { failing_outputs } => {
                    let better = best
                        .as_ref()
                        .map_or(true, |(_, f)| failing_outputs.len() < f.len());
                    if better {
                        best = Some((c * chunk + i, failing_outputs));
                    }
                }
            }
        }
    }
    let (idx, failing_outputs) = best.unwrap_or((0, flagged.clone()));
    Err(Error::SearchFailed {
        candidates: sets.len(),
        failing_outputs,
        best_eigenvalues: sets.get(idx).cloned().unwrap_or_default(),
    })
}
