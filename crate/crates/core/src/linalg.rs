//! Dense symmetric linear algebra helpers shared by the kernel routines.

use nalgebra::{DMatrix, DVector};

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
///
/// Each eigenvector is sign-normalized so that its first component with
/// magnitude above `1e-12` is positive. Together with the descending order
/// this makes decompositions reproducible across runs.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    if n == 0 {
        return SymEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    SymEigen { values, vectors }
}

/// `V diag(values) Vᵀ`, symmetrized.
pub fn reassemble(vectors: &DMatrix<f64>, values: &[f64]) -> DMatrix<f64> {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    let mut out = DMatrix::zeros(n, n);
    out.gemm(1.0, &scaled, &vectors.transpose(), 0.0);
    symmetrize(&mut out);
    out
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

/// Applies the centering projector `J = I - 11ᵀ/n` on both sides.
pub fn double_center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| m.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_is_descending_and_sign_normalized() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = sym_eigen(&m);
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
        for j in 0..3 {
            let col = e.vectors.column(j);
            let first = col.iter().find(|v| v.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
        let back = reassemble(&e.vectors, e.values.as_slice());
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn double_centering_zeroes_row_sums() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 5.0]);
        let c = double_center(&m);
        for i in 0..2 {
            assert!(c.row(i).sum().abs() < 1e-14);
        }
    }
}
