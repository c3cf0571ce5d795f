//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants (degrees 3, 5, 7, 9 and 13).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Low-degree approximant: U and V built from even powers of `a`.
fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut v = DMatrix::<f64>::zeros(n, n);
    for k in 0..b.len() / 2 {
        u += &power * b[2 * k + 1];
        v += &power * b[2 * k];
        power = &power * &a2;
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &B13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// `e^A` via `D e^{D⁻¹AD} D⁻¹` with `D` from diagonal balancing.
pub(crate) fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
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
    let scale = super::eigen::balance(&mut b);
    let mut e = expm_unbalanced(&b)?;
    let n = e.nrows();
    for i in 0..n {
        for j in 0..n {
            e[(i, j)] *= scale[i] / scale[j];
        }
    }
    Ok(e)
}

fn expm_unbalanced(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let nrm = norm1(a);
    if !nrm.is_finite() {
        return Err(Error::DimensionMismatch("non-finite matrix entries".into()));
    }

    for &(degree, theta) in &THETA {
        if nrm <= theta {
            let b: &[f64] = match degree {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, b);
            return solve_pade(u, v);
        }
    }

    let squarings = if nrm > THETA_13 {
        (nrm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(u, v)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::DimensionMismatch("singular Padé denominator".into()))
}
