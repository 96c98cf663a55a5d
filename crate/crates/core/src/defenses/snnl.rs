//! Soft nearest-neighbour loss over embedding rows.

use crate::nn::Matrix;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `−mean_i log(Σ_{j≠i, y_j=y_i} e^{−d_ij/T} / Σ_{j≠i} e^{−d_ij/T})` with
/// `d_ij = ‖h_i − h_j‖²`. Points without a same-label partner are left out
/// of the mean; returns 0 when none remain.
pub fn snnl(h: &Matrix, labels: &[usize], temperature: f64) -> f64 {
    snnl_with_grad(h, labels, temperature).0
}

/// Loss and its gradient with respect to every row of `h`.
pub fn snnl_with_grad(h: &Matrix, labels: &[usize], temperature: f64) -> (f64, Matrix) {
    let n = h.rows();
    assert_eq!(labels.len(), n, "one label per embedding row");
    let mut grad = Matrix::zeros(n, h.cols());
    let valid: Vec<usize> = (0..n)
        .filter(|&i| (0..n).any(|j| j != i && labels[j] == labels[i]))
        .collect();
    if valid.is_empty() {
        return (0.0, grad);
    }
    let m = valid.len() as f64;
    let mut loss = 0.0;
    let mut w = vec![0.0; n];
    for &i in &valid {
        let hi = h.row(i);
        let d: Vec<f64> = (0..n).map(|j| sq_dist(hi, h.row(j))).collect();
        // shifting by the nearest distance rescales S and Z alike
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| d[j])
            .fold(f64::INFINITY, f64::min);
        let (mut s, mut z) = (0.0, 0.0);
        for j in 0..n {
            w[j] = if j == i {
                0.0
            } else {
                (-(d[j] - dmin) / temperature).exp()
            };
            z += w[j];
            if labels[j] == labels[i] {
                s += w[j];
            }
        }
        loss += -(s / z).ln();
        for j in 0..n {
            if j == i || w[j] == 0.0 {
                continue;
            }
            let same = if labels[j] == labels[i] { 1.0 } else { 0.0 };
            // ∂ℓ_i/∂d_ij = (w_ij / T)(same/S − 1/Z)
            let c = w[j] / temperature * (same / s - 1.0 / z) / m;
            let hj = h.row(j).to_vec();
            for (k, (&a, &b)) in hi.iter().zip(&hj).enumerate() {
                let g = 2.0 * c * (a - b);
                grad.set(i, k, grad.get(i, k) + g);
                grad.set(j, k, grad.get(j, k) - g);
            }
        }
    }
    (loss / m, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_embeddings_closed_form() {
        let h = Matrix::filled(6, 3, 0.7);
        let labels = [0, 0, 0, 1, 1, 1];
        // n_c = 3, n = 6
        let expected = -(2.0f64 / 5.0).ln();
        assert!((snnl(&h, &labels, 1.0) - expected).abs() < 1e-12);
        let labels = [0, 0, 1, 1, 1, 1];
        // points of class 0: -ln(1/5); class 1: -ln(3/5)
        let expected = (2.0 * -(0.2f64).ln() + 4.0 * -(0.6f64).ln()) / 6.0;
        assert!((snnl(&h, &labels, 3.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn separated_classes_vanish() {
        let h = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![1e3, 0.0],
            vec![1e3, 0.1],
        ])
        .unwrap();
        assert!(snnl(&h, &[0, 0, 1, 1], 1.0) < 1e-12);
    }

    #[test]
    fn lone_points_are_skipped() {
        let h = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let (l, g) = snnl_with_grad(&h, &[0, 1, 2], 1.0);
        assert_eq!(l, 0.0);
        assert_eq!(g, Matrix::zeros(3, 1));
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            vals in prop::collection::vec(-1.5f64..1.5, 12),
            labels in prop::collection::vec(0usize..2, 6),
            t in 0.5f64..5.0,
        ) {
            let h = Matrix::from_vec(6, 2, vals).unwrap();
            let (_, g) = snnl_with_grad(&h, &labels, t);
            let eps = 1e-6;
            for idx in 0..12 {
                let mut hp = h.clone();
                hp.as_mut_slice()[idx] += eps;
                let mut hm = h.clone();
                hm.as_mut_slice()[idx] -= eps;
                let fd = (snnl(&hp, &labels, t) - snnl(&hm, &labels, t)) / (2.0 * eps);
                let an = g.as_slice()[idx];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
                prop_assert!(err < 1e-4, "idx {idx}: fd {fd} analytic {an}");
            }
        }
    }
}
