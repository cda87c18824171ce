//! Gauss–Legendre rules on `[-1, 1]`.

use std::sync::OnceLock;

const MAX_NODES: usize = 64;

static RULES: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();

fn compute(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
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

/// Nodes and weights of the `n`-point rule, `1 <= n <= 64`.
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    assert!((1..=MAX_NODES).contains(&n), "unsupported Gauss-Legendre order {n}");
    let rules = RULES.get_or_init(|| (1..=MAX_NODES).map(compute).collect());
    let (x, w) = &rules[n - 1];
    (x, w)
}

/// Integrates `f` over `[a, b]` with the `n`-point rule.
pub fn integrate(n: usize, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}
