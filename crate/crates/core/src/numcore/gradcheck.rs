use super::matrix::Matrix;

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Relative error between an analytic and a numeric derivative.
#[inline]
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Largest relative error between `analytic` and central differences of `f`
/// at `x`.
pub fn grad_check(f: impl FnMut(&Matrix) -> f64, x: &Matrix, analytic: &Matrix) -> f64 {
    grad_check_with_step(f, x, analytic, FD_STEP)
}

pub fn grad_check_with_step(mut f: impl FnMut(&Matrix) -> f64, x: &Matrix, analytic: &Matrix, h: f64) -> f64 {
    assert!(x.same_shape(analytic), "gradient shape differs from input shape");
    let mut probe = x.clone();
    let mut worst = 0.0_f64;
    for i in 0..x.as_slice().len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic.as_slice()[i], numeric));
    }
    worst
}
