//! Gauss–Legendre rules.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
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
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&v| v * half).collect(),
    )
}

/// Composite rule: `panels` equal panels of `order`-point Gauss–Legendre on `[a, b]`.
pub fn composite_gauss(order: usize, panels: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(order * panels);
    let mut ws = Vec::with_capacity(order * panels);
    for p in 0..panels {
        let (x, w) = gauss_legendre_on(order, a + p as f64 * h, a + (p + 1) as f64 * h);
        xs.extend(x);
        ws.extend(w);
    }
    (xs, ws)
}

/// Tensor-product Gauss grid on the square `[-half, half]²`: points and weights.
pub fn tensor_gauss_square(order: usize, half: f64) -> Vec<([f64; 2], f64)> {
    let (x, w) = gauss_legendre_on(order, -half, half);
    let mut out = Vec::with_capacity(order * order);
    for i in 0..order {
        for j in 0..order {
            out.push(([x[i], x[j]], w[i] * w[j]));
        }
    }
    out
}

/// Trapezoid weights for `n + 1` equispaced nodes on an interval of length `len`.
pub fn trapezoid_weights(n: usize, len: f64) -> Vec<f64> {
    let h = len / n as f64;
    (0..=n)
        .map(|i| if i == 0 || i == n { 0.5 * h } else { h })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..=40 {
            let (x, w) = gauss_legendre(n);
            let deg = 2 * n - 1;
            for p in 0..=deg.min(30) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} q={q}");
            }
        }
    }

    #[test]
    fn weights_sum_and_symmetry() {
        let (x, w) = gauss_legendre(17);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for i in 0..17 {
            assert_eq!(x[i], -x[16 - i]);
        }
    }

    #[test]
    fn composite_integrates_cosine() {
        let (x, w) = composite_gauss(8, 4, 0.0, std::f64::consts::PI);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
        assert!((q - 2.0).abs() < 1e-13);
    }
}
