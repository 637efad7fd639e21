//! Small shared numeric helpers: quadrature nodes, special functions,
//! seed derivation, and least squares.

use nalgebra::{DMatrix, DVector};

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Newton iteration from the Chebyshev initial guesses; exact for
/// polynomials of degree <= 2n - 1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n and its derivative at x via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { p1 } else { p1 };
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, &g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Counter-based seed derivation: hashes a master seed together with
/// arbitrary labels into a child seed. Stable across platforms and
/// independent of evaluation order, so parallel repeats stay reproducible.
pub fn derive_seed(master: u64, parts: &[&[u8]]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ master;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // Separator so ("ab","c") differs from ("a","bc").
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ordinary least squares y = a + b x; returns (slope, intercept, slope stderr).
pub fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    assert!(n >= 2 && ys.len() == n);
    let nf = n as f64;
    let xbar = xs.iter().sum::<f64>() / nf;
    let ybar = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let stderr = if n > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (ssr / ((nf - 2.0) * sxx)).sqrt()
    } else {
        0.0
    };
    (slope, intercept, stderr)
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and
/// eigenvector columns permuted to match.
pub fn symmetric_eigen_desc(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let eig = mat.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Inverse of the cumulative sum: smallest index i with positive weight and
/// sum(weights[..=i]) >= u. Ties resolve to the lowest such index so draws
/// are reproducible bit-for-bit.
pub fn cumsum_invert(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        if acc >= u {
            return i;
        }
    }
    // Roundoff pushed u past the total; last positive-weight entry wins.
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // degree 14 <= 2*8-1
        let quad: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_abs_diff_eq!(quad, 2.0 / 15.0, epsilon = 1e-13);
        let total: f64 = w.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn gauss_legendre_large_rule_is_accurate() {
        let (x, w) = gauss_legendre(356);
        let total: f64 = w.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-12);
        let quad: f64 = x.iter().zip(&w).map(|(x, w)| w * (3.0 * x).cos()).sum();
        let exact = 2.0 * (3.0f64).sin() / 3.0;
        assert_abs_diff_eq!(quad, exact, epsilon = 1e-12);
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(5.0), (24.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            ln_gamma(0.5),
            0.5 * std::f64::consts::PI.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn derive_seed_separates_labels() {
        let a = derive_seed(7, &[b"ab", b"c"]);
        let b = derive_seed(7, &[b"a", b"bc"]);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(7, &[b"ab", b"c"]));
    }

    #[test]
    fn ols_recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 - 0.75 * x).collect();
        let (slope, intercept, stderr) = ols_line(&xs, &ys);
        assert_abs_diff_eq!(slope, -0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(intercept, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stderr, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn cumsum_invert_breaks_ties_low() {
        let w = [0.25, 0.25, 0.5];
        assert_eq!(cumsum_invert(&w, 0.25), 0);
        assert_eq!(cumsum_invert(&w, 0.2500001), 1);
        assert_eq!(cumsum_invert(&w, 1.5), 2);
        // zero-weight entries are never selected
        let w = [0.0, 0.4, 0.0, 0.6];
        assert_eq!(cumsum_invert(&w, 0.0), 1);
        assert_eq!(cumsum_invert(&w, 0.5), 3);
    }
}
