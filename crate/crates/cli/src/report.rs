//! Plain-text reports, numbers to six significant digits.

use noreg::numerics::{Complex64, Spectrum};

pub fn sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

pub fn complex(z: &Complex64) -> String {
    if z.im.abs() <= 1e-9 * z.norm().max(1.0) {
        sig(z.re)
    } else {
        let sign = if z.im < 0.0 { '-' } else { '+' };
        format!("{}{sign}{}i", sig(z.re), sig(z.im.abs()))
    }
}

pub fn spectrum(s: &Spectrum) -> String {
    let parts: Vec<String> = s.sorted().iter().map(complex).collect();
    format!("{{{}}}", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig(10.0), "10");
        assert_eq!(sig(-28.8), "-28.8");
        assert_eq!(sig(1.0 / 3.0), "0.333333");
        assert_eq!(sig(-2.3662749), "-2.36627");
        assert_eq!(sig(123456.7), "123457");
        assert_eq!(sig(1234567.0), "1.23457e6");
        assert_eq!(sig(1.5e-7), "1.50000e-7");
        assert_eq!(sig(0.0), "0");
    }

    #[test]
    fn complex_formatting() {
        assert_eq!(complex(&Complex64::new(-1.0, 2.0)), "-1+2i");
        assert_eq!(complex(&Complex64::new(0.5, -0.25)), "0.5-0.25i");
        assert_eq!(complex(&Complex64::new(3.0, 1e-14)), "3");
    }
}
