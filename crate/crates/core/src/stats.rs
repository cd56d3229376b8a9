//! Least-squares line fitting for experiment reports.

use num_traits::Float;

/// `y = slope * x + intercept` with its coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

pub type LinearFitF64 = LinearFit<f64>;

/// Ordinary least squares over paired samples. `None` with fewer than two
/// points, mismatched lengths, or constant `x`.
pub fn linear_fit<T: Float>(xs: &[T], ys: &[T]) -> Option<LinearFit<T>> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = T::from(xs.len())?;
    let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a + b) / n;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == T::zero() { T::one() } else { (sxy * sxy) / (sxx * syy) };
    Some(LinearFit { slope, intercept, r_squared })
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Float>(v: &[T]) -> Option<T> {
    if v.is_empty() {
        return None;
    }
    Some(v.iter().fold(T::zero(), |a, &b| a + b) / T::from(v.len())?)
}
