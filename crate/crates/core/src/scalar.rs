//! Bracketed scalar root finding and unimodal minimisation.

use crate::error::{Error, Result};

/// Finds a zero of `f` in `[a, b]` by the Illinois variant of regula falsi,
/// falling back to a bisection step whenever the secant point stalls.
///
/// Stops once the bracket is narrower than `rel_tol * max(|a|,|b|, 1e-300)`
/// or `f` vanishes exactly.
pub fn illinois<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let (mut fa, mut fb) = (f(a), f(b));
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::NumericDomain(format!(
            "bracket endpoints give non-finite values ({fa}, {fb})"
        )));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NotFound(format!(
            "no sign change on [{a}, {b}] (f = {fa}, {fb})"
        )));
    }
    let mut side = 0i8;
    for _ in 0..500 {
        let width = b - a;
        if width <= rel_tol * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        // keep the iterate well inside the bracket
        if !(c > a + 0.01 * width && c < b - 0.01 * width) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if !fc.is_finite() {
            return Err(Error::NumericDomain(format!("f({c}) is not finite")));
        }
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Golden-section minimisation of `f` on `[a, b]`. Returns `(x, f(x))`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // the midpoint can lose to a probe on a flat valley
    [(x, fx), (c, fc), (d, fd)].into_iter().fold(
        (x, fx),
        |best, cand| if cand.1 < best.1 { cand } else { best },
    )
}

/// Minimum of `f` over `n + 1` equally spaced points of `[a, b]`.
pub fn grid_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> (f64, f64) {
    let mut best = (a, f64::INFINITY);
    for i in 0..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        let y = f(x);
        if y < best.1 {
            best = (x, y);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn illinois_finds_sqrt2() {
        let r = illinois(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn illinois_handles_flat_tail() {
        let r = illinois(|x| (x - 0.3f64).powi(3), -1.0, 5.0, 1e-14).unwrap();
        assert!((r - 0.3).abs() < 1e-9);
    }

    #[test]
    fn illinois_rejects_same_sign() {
        assert!(matches!(
            illinois(|x| x * x + 1.0, -1.0, 1.0, 1e-12),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn golden_finds_parabola_min() {
        let (x, y) = golden_section(|x| (x - 1.25).powi(2), -4.0, 4.0, 1e-10);
        assert!((x - 1.25).abs() < 1e-8);
        assert!(y < 1e-16);
    }

    #[test]
    fn grid_min_picks_lowest() {
        let (x, _) = grid_min(|x| (x - 0.5).abs(), 0.0, 1.0, 10);
        assert!((x - 0.5).abs() < 1e-15);
    }
}
