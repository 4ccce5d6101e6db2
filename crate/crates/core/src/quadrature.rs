//! Gauss–Legendre rules on intervals and composite panels.

use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `order`-point rule on [-1, 1]. Nodes from Newton iteration on `P_order`
    /// started at the Chebyshev-like guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[order - 1 - i] = x;
            weights[order - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A composite rule: one Gauss–Legendre panel per interval between breakpoints.
#[derive(Clone, Debug)]
pub struct CompositeRule {
    points: Vec<(f64, f64)>,
}

impl CompositeRule {
    pub fn new(breakpoints: &[f64], order: usize) -> Self {
        let rule = GaussLegendre::new(order);
        let mut points = Vec::with_capacity(order * breakpoints.len());
        for w in breakpoints.windows(2) {
            if w[1] > w[0] {
                points.extend(rule.on_interval(w[0], w[1]));
            }
        }
        CompositeRule { points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Points restricted to `[0, upper]`, assuming `upper` is one of the breakpoints.
    pub fn points_below(&self, upper: f64) -> impl Iterator<Item = &(f64, f64)> {
        self.points.iter().filter(move |(x, _)| *x <= upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        for order in 1..=20 {
            let rule = GaussLegendre::new(order);
            for deg in 0..(2 * order) {
                let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "order {order} deg {deg}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn known_two_point_rule() {
        let rule = GaussLegendre::new(2);
        let pts: Vec<_> = rule.on_interval(-1.0, 1.0).collect();
        assert!((pts[1].0 - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((pts[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn composite_rule_handles_kinks() {
        let rule = CompositeRule::new(&[0.0, 0.2, 1.0], 8);
        let got: f64 = rule
            .points()
            .iter()
            .map(|(x, w)| w * (x - 0.2f64).abs())
            .sum();
        let want = 0.5 * 0.04 + 0.5 * 0.64;
        assert!((got - want).abs() < 1e-14);
    }
}
