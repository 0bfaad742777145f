//! Fixed-panel quadrature rules used by the cost identity and the closed-form routes.

/// Composite Simpson rule on `[a, b]` with `panels` sub-intervals.
///
/// An odd panel count is bumped to the next even number. An empty interval integrates to zero.
pub fn simpson<F>(f: F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    if b == a {
        return 0.0;
    }
    let n = even_panels(panels);
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let v = f(a + h * i as f64);
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (f(a) + 4.0 * odd + 2.0 * even + f(b))
}

/// Composite Simpson rule over uniformly spaced samples (`values.len()` odd).
///
/// Falls back to the trapezoid rule when the sample count is even.
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    if n % 2 == 0 {
        return trapezoid_samples(values, h);
    }
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Composite trapezoid rule over uniformly spaced samples.
pub fn trapezoid_samples(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * (values[0] + values[values.len() - 1]) + inner)
}

/// Smallest even panel count that is at least `panels` (and at least 2).
pub fn even_panels(panels: usize) -> usize {
    let n = panels.max(2);
    n + n % 2
}
