//! Orthonormal Legendre polynomials on `[-1, 1]` with first and second
//! derivatives. These are the 1D building blocks of the tensor-product
//! element basis and of the temporal basis.

/// Value and first two derivatives of the orthonormal Legendre polynomials
/// `L_k(s) = sqrt(k + 1/2) P_k(s)` for `k = 0..=degree`, at a single point.
///
/// The derivative recurrences `P'_{k+1} = P'_{k-1} + (2k+1) P_k` and
/// `P''_{k+1} = P''_{k-1} + (2k+1) P'_k` are valid on the closed interval,
/// endpoints included, which matters for face traces.
pub fn orthonormal_legendre(degree: usize, s: f64) -> Vec<[f64; 3]> {
    let n = degree + 1;
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut ddp = vec![0.0; n];
    p[0] = 1.0;
    if n > 1 {
        p[1] = s;
        dp[1] = 1.0;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * s * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = if k >= 1 { dp[k - 1] } else { 0.0 } + (2.0 * kf + 1.0) * p[k];
        ddp[k + 1] = if k >= 1 { ddp[k - 1] } else { 0.0 } + (2.0 * kf + 1.0) * dp[k];
    }
    (0..n)
        .map(|k| {
            let c = (k as f64 + 0.5).sqrt();
            [c * p[k], c * dp[k], c * ddp[k]]
        })
        .collect()
}

/// Endpoint values of the orthonormal Legendre basis: `L_k(1) = sqrt(k+1/2)`
/// and `L_k(-1) = (-1)^k sqrt(k+1/2)`, exact by construction.
pub fn orthonormal_legendre_endpoint(degree: usize, right: bool) -> Vec<f64> {
    (0..=degree)
        .map(|k| {
            let c = (k as f64 + 0.5).sqrt();
            if right || k % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    #[test]
    fn gram_matrix_is_identity() {
        let deg = 7;
        let rule = gauss_legendre(deg + 1);
        let mut gram = vec![vec![0.0; deg + 1]; deg + 1];
        for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
            let vals = orthonormal_legendre(deg, s);
            for i in 0..=deg {
                for j in 0..=deg {
                    gram[i][j] += w * vals[i][0] * vals[j][0];
                }
            }
        }
        for i in 0..=deg {
            for j in 0..=deg {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i][j] - expect).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let deg = 6;
        let h = 1e-6;
        for &s in &[-0.83, -0.2, 0.0, 0.41, 0.97] {
            let v = orthonormal_legendre(deg, s);
            let vp = orthonormal_legendre(deg, s + h);
            let vm = orthonormal_legendre(deg, s - h);
            for k in 0..=deg {
                let fd1 = (vp[k][0] - vm[k][0]) / (2.0 * h);
                let fd2 = (vp[k][0] - 2.0 * v[k][0] + vm[k][0]) / (h * h);
                assert!((fd1 - v[k][1]).abs() < 1e-5 * v[k][1].abs().max(1.0));
                assert!((fd2 - v[k][2]).abs() < 2e-3 * v[k][2].abs().max(1.0));
            }
        }
    }

    #[test]
    fn endpoint_values_are_exact() {
        let deg = 9;
        let right = orthonormal_legendre(deg, 1.0);
        let left = orthonormal_legendre(deg, -1.0);
        let re = orthonormal_legendre_endpoint(deg, true);
        let le = orthonormal_legendre_endpoint(deg, false);
        for k in 0..=deg {
            assert_eq!(right[k][0], re[k]);
            assert_eq!(left[k][0], le[k]);
            // P_k'(1) = k(k+1)/2 scaled by the normalisation constant.
            let c = (k as f64 + 0.5).sqrt();
            let expect = c * (k * (k + 1)) as f64 / 2.0;
            assert!((right[k][1] - expect).abs() < 1e-11 * expect.max(1.0));
        }
    }
}
