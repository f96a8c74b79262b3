//! Gauss quadrature rules used by the parametrix evaluator.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Computed by Newton iteration on the Legendre recurrence; accurate to
/// machine precision for the node counts used here (n ≤ 64).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(z) and P_n'(z) by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|&v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|&v| 0.5 * v).collect(),
    )
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for the weight
/// `exp(-x^2)` on the whole line.
///
/// Uses the orthonormal Hermite recurrence, which keeps every intermediate
/// quantity O(1).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        // Initial guesses (largest root first), standard asymptotics.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut h_prev = 0.0;
        for _ in 0..200 {
            // Orthonormal Hermite functions: h_{j+1} = z sqrt(2/(j+1)) h_j - sqrt(j/(j+1)) h_{j-1}.
            let mut h0 = std::f64::consts::PI.powf(-0.25);
            let mut h1 = 0.0;
            for j in 0..n {
                let jf = j as f64;
                let h2 = h1;
                h1 = h0;
                h0 = z * (2.0 / (jf + 1.0)).sqrt() * h1 - (jf / (jf + 1.0)).sqrt() * h2;
            }
            // h_n'(z) = sqrt(2n) h_{n-1}(z).
            h_prev = h1;
            let dz = h0 / ((2.0 * nf).sqrt() * h1);
            z -= dz;
            if dz.abs() < 1e-14 * (1.0 + z.abs()) {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        let w = 1.0 / (2.0 * nf * h_prev * h_prev) * 2.0;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Composite trapezoid rule on a uniform grid with step `h`.
pub fn trapezoid_uniform(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * values[0] + inner + 0.5 * values[values.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        // Degree-9 polynomial is exact for a 5-point rule.
        let approx: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(8)).sum();
        assert!((approx - 2.0 / 9.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_unit_matches_exponential() {
        let (x, w) = gauss_legendre_unit(16);
        let approx: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.exp()).sum();
        assert!((approx - (std::f64::consts::E - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        for n in [4usize, 9, 20, 32] {
            let (x, w) = gauss_hermite(n);
            let sqrt_pi = std::f64::consts::PI.sqrt();
            let m0: f64 = w.iter().sum();
            let m2: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi * xi).sum();
            assert!((m0 - sqrt_pi).abs() < 1e-12 * sqrt_pi, "n={n} m0={m0}");
            assert!((m2 - sqrt_pi / 2.0).abs() < 1e-11, "n={n} m2={m2}");
        }
    }

    #[test]
    fn hermite_integrates_cosine() {
        // ∫ exp(-x²) cos(x) dx = sqrt(pi) exp(-1/4).
        let (x, w) = gauss_hermite(24);
        let approx: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.cos()).sum();
        let exact = std::f64::consts::PI.sqrt() * (-0.25f64).exp();
        assert!((approx - exact).abs() < 1e-13);
    }

    #[test]
    fn trapezoid_linear_exact() {
        let h = 0.1;
        let values: Vec<f64> = (0..=10).map(|j| 3.0 * (j as f64) * h + 1.0).collect();
        assert!((trapezoid_uniform(&values, h) - 2.5).abs() < 1e-14);
    }
}
