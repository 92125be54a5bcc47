//! Adaptive Simpson quadrature.

const MAX_DEPTH: u32 = 50;

/// Integral of `f` over `[a, b]` to relative tolerance `rel_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Absolute target from a coarse magnitude estimate so that relative
    // accuracy is measured against the whole integral, not each panel.
    let scale = coarse_magnitude(&f, a, b).max(whole.abs());
    let abs_tol = (rel_tol * scale).max(f64::MIN_POSITIVE);
    recurse(&f, a, b, fa, fm, fb, whole, abs_tol, MAX_DEPTH)
}

fn coarse_magnitude<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let n = 64;
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h).abs() * h.abs()).sum()
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let v = adaptive_simpson(|x| x * x, 0.0, 3.0, 1e-10);
        assert!((v - 9.0).abs() < 1e-9);
        let v = adaptive_simpson(|x: f64| (-5.0 * x).exp(), -1.0, 1.0, 1e-8);
        let exact = ((5.0f64).exp() - (-5.0f64).exp()) / 5.0;
        assert!((v - exact).abs() / exact < 1e-7);
    }
}
