//! Sign changes of real exponential sums `g(t) = Σ c_k e^{r_k t}` on `t ≥ 0`.
//!
//! A sum of `k` real exponentials has at most `k − 1` real zeros. Factoring
//! out one exponential leaves a function whose derivative is again an
//! exponential sum with one term fewer, so its extrema come from a recursive
//! call and each monotone piece holds at most one zero.

/// Outcome of [`sign_constancy_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignVerdict {
    ConstantSign,
    /// First time at which the sum changes sign.
    Crosses(f64),
}

impl SignVerdict {
    pub fn is_constant(self) -> bool {
        matches!(self, SignVerdict::ConstantSign)
    }
}

/// `Σ c_k e^{r_k t}`.
pub fn exp_sum(coeffs: &[f64], rates: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .zip(rates)
        .map(|(c, r)| c * (r * t).exp())
        .sum()
}

#[derive(Clone, Copy)]
struct Term {
    c: f64,
    r: f64,
}

/// `g(t)·e^{−r_max t}`: same sign as `g`, never overflows. Returns the value
/// and the magnitude scale used as a rounding floor.
fn scaled(terms: &[Term], rmax: f64, t: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut s = 0.0;
    for term in terms {
        let x = term.c * ((term.r - rmax) * t).exp();
        v += x;
        s += x.abs();
    }
    (v, s)
}

fn sign_at(terms: &[Term], rmax: f64, t: f64) -> i8 {
    let (v, s) = scaled(terms, rmax, t);
    if v.abs() <= 1e-14 * s {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

fn bisect(terms: &[Term], rmax: f64, mut lo: f64, mut hi: f64, s_lo: i8) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * (1.0 + hi) {
            break;
        }
        let s = sign_at(terms, rmax, mid);
        if s == s_lo {
            lo = mid;
        } else if s == 0 {
            return mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Strictly positive times where the sum changes sign, increasing.
fn crossings(terms: &[Term]) -> Vec<f64> {
    if terms.len() < 2 {
        return Vec::new();
    }
    let rmax = terms.iter().map(|t| t.r).fold(f64::NEG_INFINITY, f64::max);
    let dominant = terms
        .iter()
        .filter(|t| t.r == rmax)
        .map(|t| t.c)
        .sum::<f64>();
    let sign_inf: i8 = if dominant > 0.0 { 1 } else { -1 };

    // Extrema of g·e^{−r_0 t} are the zeros of Σ_{k≥1} c_k (r_k − r_0) e^{r_k t}.
    let r0 = terms[0].r;
    let deriv: Vec<Term> = terms[1..]
        .iter()
        .map(|t| Term {
            c: t.c * (t.r - r0),
            r: t.r,
        })
        .filter(|t| t.c != 0.0)
        .collect();
    let mut marks = vec![0.0];
    marks.extend(crossings(&deriv));

    let mut out = Vec::new();
    for w in 0..marks.len() {
        let lo = marks[w];
        let s_lo = sign_at(terms, rmax, lo);
        if w + 1 < marks.len() {
            let hi = marks[w + 1];
            let s_hi = sign_at(terms, rmax, hi);
            if s_lo != 0 && s_hi != 0 && s_lo != s_hi {
                out.push(bisect(terms, rmax, lo, hi, s_lo));
            }
        } else if s_lo != 0 && s_lo != sign_inf {
            let mut hi = (2.0 * lo).max(lo + 1.0);
            while sign_at(terms, rmax, hi) != sign_inf && hi < 1e12 {
                hi *= 2.0;
            }
            out.push(bisect(terms, rmax, lo, hi, s_lo));
        }
    }
    out
}

/// All sign-change times of `Σ c_k e^{r_k t}` on `t > 0`.
pub fn sign_changes(coeffs: &[f64], rates: &[f64]) -> Vec<f64> {
    assert_eq!(coeffs.len(), rates.len(), "one rate per coefficient");
    let mut terms: Vec<Term> = coeffs
        .iter()
        .zip(rates)
        .filter(|(c, _)| **c != 0.0)
        .map(|(&c, &r)| Term { c, r })
        .collect();
    terms.sort_by(|a, b| a.r.total_cmp(&b.r));
    // Merge equal rates so the recursion sees distinct exponents.
    let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
    for t in terms {
        match merged.last_mut() {
            Some(last) if last.r == t.r => last.c += t.c,
            _ => merged.push(t),
        }
    }
    merged.retain(|t| t.c != 0.0);
    if merged.len() == 2 {
        let (a, b) = (merged[0], merged[1]);
        if a.c * b.c < 0.0 {
            let t = (-a.c / b.c).ln() / (b.r - a.r);
            if t > 0.0 {
                return vec![t];
            }
        }
        return Vec::new();
    }
    crossings(&merged)
}

/// Decides whether `Σ c_k e^{r_k t}` keeps one sign for all `t ≥ 0`. A zero
/// at `t = 0` or a touching zero does not count as a sign change.
pub fn sign_constancy_test(coeffs: &[f64], rates: &[f64]) -> SignVerdict {
    match sign_changes(coeffs, rates).first() {
        Some(&t) => SignVerdict::Crosses(t),
        None => SignVerdict::ConstantSign,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_term_cases() {
        assert_eq!(sign_constancy_test(&[-2.0, 1.0], &[-1.0, -2.0]), SignVerdict::ConstantSign);
        match sign_constancy_test(&[1.0, -2.0], &[-1.0, -2.0]) {
            SignVerdict::Crosses(t) => assert!((t - 2f64.ln()).abs() < 1e-12),
            v => panic!("{v:?}"),
        }
        assert_eq!(sign_constancy_test(&[1.0], &[-1.0]), SignVerdict::ConstantSign);
        assert_eq!(sign_constancy_test(&[], &[]), SignVerdict::ConstantSign);
    }

    #[test]
    fn zero_at_origin_is_not_a_crossing() {
        assert!(sign_constancy_test(&[1.0, -1.0], &[-1.0, -2.0]).is_constant());
        assert!(sign_constancy_test(&[1.0, -2.0, 1.0], &[-1.0, -2.0, -3.0]).is_constant());
    }

    #[test]
    fn three_terms_with_two_crossings() {
        // e^{-t}(x - 1/2)(x - 1/3) with x = e^{-t}.
        let coeffs = [1.0 / 6.0, -5.0 / 6.0, 1.0];
        let rates = [-1.0, -2.0, -3.0];
        let roots = sign_changes(&coeffs, &rates);
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 2f64.ln()).abs() < 1e-10);
        assert!((roots[1] - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn tangent_zero_is_not_a_crossing() {
        // e^{-t}(x - 1/2)^2 with x = e^{-t}.
        let coeffs = [0.25, -1.0, 1.0];
        let rates = [-1.0, -2.0, -3.0];
        assert!(sign_constancy_test(&coeffs, &rates).is_constant());
    }

    fn sampled_crossing(coeffs: &[f64], rates: &[f64]) -> bool {
        let rmax = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let horizon = 50.0 / rmax.abs();
        let steps = (horizon / 1e-3) as usize;
        let (mut pos, mut neg) = (false, false);
        for k in 0..=steps {
            let v = exp_sum(coeffs, rates, k as f64 * 1e-3);
            pos |= v > 1e-12;
            neg |= v < -1e-12;
        }
        pos && neg
    }

    fn draw() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..=4).prop_flat_map(|k| {
            (
                prop::collection::vec(
                    (0.05f64..2.0, any::<bool>()).prop_map(|(m, s)| if s { m } else { -m }),
                    k,
                ),
                prop::collection::vec(0usize..25, k),
            )
                .prop_filter_map("distinct rates", |(c, slots)| {
                    let mut s = slots.clone();
                    s.sort_unstable();
                    s.dedup();
                    (s.len() == slots.len())
                        .then(|| (c, slots.iter().map(|&i| -0.2 - 0.2 * i as f64).collect()))
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn agrees_with_dense_sampling((coeffs, rates) in draw()) {
            let analytic = !sign_constancy_test(&coeffs, &rates).is_constant();
            prop_assert_eq!(analytic, sampled_crossing(&coeffs, &rates));
        }
    }
}
