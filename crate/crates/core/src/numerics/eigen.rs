//! Eigenvalues of real nonsymmetric matrices.
//!
//! Diagonal balancing, Householder reduction to upper Hessenberg form, then
//! the shifted double-step Francis QR iteration with the classical
//! exceptional shifts. This is the EISPACK `balanc`/`orthes`/`hqr` sequence,
//! restricted to eigenvalues.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

const RADIX: f64 = 2.0;

/// Scales rows and columns by powers of two so that each row and column
/// pair has comparable off-diagonal norm. Similarity preserving: on return
/// `a` holds `D⁻¹ A D` with `D = diag(scale)`.
pub(crate) fn balance(a: &mut DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut scale = vec![1.0; n];
    let sqrdx = RADIX * RADIX;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                scale[i] *= f;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
    scale
}

/// Orthogonal similarity reduction to upper Hessenberg form, in place.
fn hessenberg(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        h[(m, m - 1)] = scale * g;
    }
    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
#[allow(unused_assignments)]
fn hqr(mut h: DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let nn = h.nrows();
    let mut wr = vec![0.0; nn];
    let mut wi = vec![0.0; nn];
    let eps = f64::EPSILON;
    let low = 0isize;
    let mut n = nn as isize - 1;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut x, mut y, mut w);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let max_iter = 60 * nn.max(1);
    let mut iter = 0usize;
    let mut total = 0usize;
    macro_rules! at {
        ($i:expr, $j:expr) => {
            h[($i as usize, $j as usize)]
        };
    }

    while n >= low {
        let mut l = n;
        while l > low {
            s = at!(l - 1, l - 1).abs() + at!(l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if at!(l, l - 1).abs() <= eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            at!(n, n) += exshift;
            wr[n as usize] = at!(n, n);
            wi[n as usize] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            w = at!(n, n - 1) * at!(n - 1, n);
            p = (at!(n - 1, n - 1) - at!(n, n)) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            at!(n, n) += exshift;
            at!(n - 1, n - 1) += exshift;
            x = at!(n, n);
            let (i0, i1) = ((n - 1) as usize, n as usize);
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                wr[i0] = x + z;
                wr[i1] = wr[i0];
                if z != 0.0 {
                    wr[i1] = x - w / z;
                }
                wi[i0] = 0.0;
                wi[i1] = 0.0;
            } else {
                wr[i0] = x + p;
                wr[i1] = x + p;
                wi[i0] = z;
                wi[i1] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = at!(n, n);
            y = 0.0;
            w = 0.0;
            if l < n {
                y = at!(n - 1, n - 1);
                w = at!(n, n - 1) * at!(n - 1, n);
            }
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    at!(i, i) -= x;
                }
                s = at!(n, n - 1).abs() + at!(n - 1, n - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        at!(i, i) -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total += 1;
            if total > max_iter {
                return Err(Error::NoConvergence(nn));
            }

            let mut m = n - 2;
            while m >= l {
                z = at!(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / at!(m + 1, m) + at!(m, m + 1);
                q = at!(m + 1, m + 1) - z - r - s;
                r = at!(m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if at!(m, m - 1).abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (at!(m - 1, m - 1).abs() + z.abs() + at!(m + 1, m + 1).abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=n {
                at!(i, i - 2) = 0.0;
                if i > m + 2 {
                    at!(i, i - 3) = 0.0;
                }
            }

            let mut k = m;
            while k < n {
                let notlast = k != n - 1;
                if k != m {
                    p = at!(k, k - 1);
                    q = at!(k + 1, k - 1);
                    r = if notlast { at!(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        at!(k, k - 1) = -s * x;
                    } else if l != m {
                        at!(k, k - 1) = -at!(k, k - 1);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn as isize {
                        p = at!(k, j) + q * at!(k + 1, j);
                        if notlast {
                            p += r * at!(k + 2, j);
                            at!(k + 2, j) -= p * z;
                        }
                        at!(k, j) -= p * x;
                        at!(k + 1, j) -= p * y;
                    }
                    let imax = n.min(k + 3);
                    for i in 0..=imax {
                        p = x * at!(i, k) + y * at!(i, k + 1);
                        if notlast {
                            p += z * at!(i, k + 2);
                            at!(i, k + 2) -= p * r;
                        }
                        at!(i, k) -= p;
                        at!(i, k + 1) -= p * q;
                    }
                }
                k += 1;
            }
        }
    }

    Ok(wr
        .into_iter()
        .zip(wi)
        .map(|(re, im)| Complex::new(re, im))
        .collect())
}

/// All eigenvalues of a real square matrix, multiplicity inclusive.
///
/// Reducible matrices are split along the strongly connected components of
/// their sparsity graph; each irreducible diagonal block is solved alone.
pub(crate) fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let mut out = Vec::with_capacity(a.nrows());
    for comp in strong_components(a) {
        if comp.len() == 1 {
            let k = comp[0];
            out.push(Complex::new(a[(k, k)], 0.0));
            continue;
        }
        let mut h = a.select_rows(&comp).select_columns(&comp);
        balance(&mut h);
        hessenberg(&mut h);
        out.extend(hqr(h)?);
    }
    Ok(out)
}

/// Strongly connected components of the graph with an edge `i -> j` whenever
/// `a[(i, j)] != 0` (iterative Tarjan).
pub(crate) fn strong_components(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && a[(i, j)] != 0.0).collect())
        .collect();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(u, _)) = call.last() {
                low[u] = low[u].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}
