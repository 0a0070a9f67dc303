//! Gauss rules on the interval and on the reference triangle.

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gauss_unit_interval(n: usize) -> Vec<(f64, f64)> {
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// A quadrature point on the reference triangle `{r, s ≥ 0, r + s ≤ 1}`;
/// the weights sum to the reference area 1/2.
#[derive(Debug, Clone, Copy)]
pub struct TrianglePoint {
    pub r: f64,
    pub s: f64,
    pub weight: f64,
}

/// Collapsed (Duffy) product rule with `n × n` points, exact for
/// polynomials of total degree `2n − 2`.
pub fn triangle_rule(n: usize) -> Vec<TrianglePoint> {
    let line = gauss_unit_interval(n);
    let mut pts = Vec::with_capacity(n * n);
    for &(a, wa) in &line {
        for &(b, wb) in &line {
            pts.push(TrianglePoint {
                r: a,
                s: (1.0 - a) * b,
                weight: wa * wb * (1.0 - a),
            });
        }
    }
    pts
}

/// Rule used by the C1 element: 36 points, exact to degree 10.
pub fn element_rule() -> Vec<TrianglePoint> {
    triangle_rule(6)
}
