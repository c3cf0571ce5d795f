//! Dense linear-algebra kernel shared by every other module.

mod eigen;
mod expm;

use nalgebra::{Complex, DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Dense real matrix. Entries are stored column-major by nalgebra, which is
/// also the `vec(·)` ordering used by the Kronecker identities.
pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type Complex64 = Complex<f64>;

/// Default relative tolerance for null spaces and numerical rank.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-9;

/// Multiplicity-inclusive eigenvalue list of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<Complex64>);

impl Spectrum {
    pub fn new(values: Vec<Complex64>) -> Self {
        Spectrum(values)
    }

    pub fn from_real(values: &[f64]) -> Self {
        Spectrum(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest real part (spectral abscissa); `None` for an empty spectrum.
    pub fn max_re(&self) -> Option<f64> {
        self.0.iter().map(|z| z.re).reduce(f64::max)
    }

    pub fn min_re(&self) -> Option<f64> {
        self.0.iter().map(|z| z.re).reduce(f64::min)
    }

    /// True when every eigenvalue has imaginary part at most `tol` in modulus.
    pub fn is_real(&self, tol: f64) -> bool {
        self.0.iter().all(|z| z.im.abs() <= tol)
    }

    /// Real parts sorted ascending.
    pub fn sorted_re(&self) -> Vec<f64> {
        let mut re: Vec<f64> = self.0.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        re
    }

    /// Eigenvalues sorted by real part, then imaginary part.
    pub fn sorted(&self) -> Vec<Complex64> {
        let mut v = self.0.clone();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    /// Concatenates several spectra into one multiset.
    pub fn union<'a>(parts: impl IntoIterator<Item = &'a Spectrum>) -> Spectrum {
        Spectrum(parts.into_iter().flat_map(|s| s.0.iter().copied()).collect())
    }

    /// Bottleneck distance between two multisets: the smallest `t` such that
    /// the eigenvalues can be paired one-to-one with every pair within `t`.
    /// Infinite when the lengths differ.
    pub fn distance(&self, other: &Spectrum) -> f64 {
        multiset_distance(&self.0, &other.0)
    }

    pub fn matches(&self, other: &Spectrum, tol: f64) -> bool {
        self.len() == other.len() && perfect_matching_within(&self.0, &other.0, tol)
    }
}

impl std::fmt::Display for Spectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, z) in self.sorted().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if z.im.abs() < 1e-12 * (1.0 + z.re.abs()) {
                write!(f, "{:.6}", z.re)?;
            } else {
                write!(f, "{:.6}{:+.6}i", z.re, z.im)?;
            }
        }
        write!(f, "}}")
    }
}

fn perfect_matching_within(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    let n = a.len();
    if n != b.len() {
        return false;
    }
    let adj: Vec<Vec<usize>> = a
        .iter()
        .map(|x| (0..n).filter(|&j| (x - b[j]).norm() <= tol).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let mut seen = vec![false; n];
        if !augment(i, &adj, &mut owner, &mut seen) {
            return false;
        }
    }
    true
}

fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &j in &adj[i] {
        if seen[j] {
            continue;
        }
        seen[j] = true;
        if owner[j].is_none() || augment(owner[j].unwrap(), adj, owner, seen) {
            owner[j] = Some(i);
            return true;
        }
    }
    false
}

fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    if a.is_empty() {
        return 0.0;
    }
    let mut d: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| (x - y).norm()))
        .collect();
    d.sort_by(f64::total_cmp);
    d.dedup();
    let (mut lo, mut hi) = (0usize, d.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching_within(a, b, d[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    d[lo]
}

/// Kronecker product: block (i, j) of the result is `a[(i, j)] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Eigenvalues of a square matrix.
pub fn spectrum(a: &Matrix) -> Result<Spectrum> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    eigen::eigenvalues(a).map(Spectrum)
}

/// Matrix exponential.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    expm::expm(a)
}

/// Diagonal similarity `D = diag(scale)` with `D⁻¹ A D` balanced, returned
/// with the balanced matrix. Entries of `scale` are powers of two.
pub fn balance(a: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch("non-finite matrix entries".into()));
    }
    let mut b = a.clone();
    let scale = eigen::balance(&mut b);
    Ok((b, scale))
}

/// Singular values sorted in decreasing order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank: singular values above `tol * max(1, σ_max)`.
pub fn rank(a: &Matrix, tol: f64) -> usize {
    let s = singular_values(a);
    let Some(&smax) = s.first() else { return 0 };
    let thresh = tol * smax.max(1.0);
    s.iter().filter(|&&v| v > thresh).count()
}

/// Ratio of extreme singular values of a square matrix.
pub fn condition_number(a: &Matrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Real embedding `[[X, -Y], [Y, X]]` of the complex matrix `X + iY`.
/// Its singular values are those of `X + iY`, each repeated twice.
fn complex_embedding(re: &Matrix, im: &Matrix) -> Matrix {
    let (r, c) = re.shape();
    let mut m = Matrix::zeros(2 * r, 2 * c);
    m.view_mut((0, 0), (r, c)).copy_from(re);
    m.view_mut((0, c), (r, c)).copy_from(&(-im));
    m.view_mut((r, 0), (r, c)).copy_from(im);
    m.view_mut((r, c), (r, c)).copy_from(re);
    m
}

/// Singular values of `X + iY`, decreasing.
pub fn complex_singular_values(re: &Matrix, im: &Matrix) -> Vec<f64> {
    singular_values(&complex_embedding(re, im))
        .into_iter()
        .step_by(2)
        .collect()
}

/// Numerical rank of `X + iY` with the same rule as [`rank`].
pub fn complex_rank(re: &Matrix, im: &Matrix, tol: f64) -> usize {
    let s = complex_singular_values(re, im);
    let Some(&smax) = s.first() else { return 0 };
    let thresh = tol * smax.max(1.0);
    s.iter().filter(|&&v| v > thresh).count()
}

/// Orthonormal basis (as columns) of the numerical null space of `a`:
/// right singular vectors whose singular value is below `tol * σ_max`.
pub fn kernel_basis(a: &Matrix, tol: f64) -> Matrix {
    let (r, c) = a.shape();
    if c == 0 {
        return Matrix::zeros(0, 0);
    }
    if r == 0 {
        return Matrix::identity(c, c);
    }
    // Pad wide matrices with zero rows so the SVD yields a full set of
    // right singular vectors.
    let padded;
    let m = if r < c {
        padded = a.clone().resize_vertically(c, 0.0);
        &padded
    } else {
        a
    };
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let thresh = tol * smax;
    let cols: Vec<Vector> = (0..sv.len())
        .filter(|&i| smax == 0.0 || sv[i] < thresh)
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(c, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Solution strategy for [`solve_linear`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Require `‖a·x − b‖ ≤ 1e−10·‖b‖`; otherwise report inconsistency.
    Exact,
    /// Minimum-norm least-squares solution, whatever the residual.
    MinNorm,
}

/// Relative residual bound accepted by [`SolveMode::Exact`].
pub const EXACT_RESIDUAL_TOL: f64 = 1e-10;

/// Minimum-norm least-squares solution together with the numerical rank
/// used for the pseudo-inverse.
pub(crate) fn least_squares(a: &Matrix, b: &Matrix) -> Result<(Matrix, usize)> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve: a is {}x{}, b is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok((Matrix::zeros(c, b.ncols()), 0));
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = f64::EPSILON * (r.max(c) as f64) * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd
        .solve(b, eps)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok((x, rank))
}

/// Solves `a·x = b`.
pub fn solve_linear(a: &Matrix, b: &Matrix, mode: SolveMode) -> Result<Matrix> {
    let (x, _) = least_squares(a, b)?;
    if mode == SolveMode::Exact {
        let residual = relative_residual(a, &x, b);
        if residual > EXACT_RESIDUAL_TOL {
            return Err(Error::Inconsistent { residual });
        }
    }
    Ok(x)
}

pub(crate) fn relative_residual(a: &Matrix, x: &Matrix, b: &Matrix) -> f64 {
    let res = (a * x - b).norm();
    let scale = b.norm();
    if scale == 0.0 {
        res
    } else {
        res / scale
    }
}

/// Block-diagonal stacking.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        m.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    m
}
