//! Dense linear-algebra primitives, seeded randomness and the orthogonal
//! constructions used by the privacy audit.

mod matrix;
mod ortho;
mod rng;

pub use matrix::{DenseMatrix, DenseVector};
pub use ortho::{
    householder_to_e1, random_orthogonal, sample_ortho_witness, OrthoWitness, ALIGNED_TOL,
    NON_IDENTITY_TOL, ORTHO_TOL,
};
pub use rng::SeededRng;

pub(crate) use matrix::{axpy, dot};

/// Largest eigenvalue of `AᵀA / rows` by power iteration.
pub fn gram_max_eigenvalue(a: &DenseMatrix, iters: usize) -> f64 {
    let n = a.cols();
    if n == 0 || a.rows() == 0 {
        return 0.0;
    }
    let mut v = DenseVector::from_raw(vec![1.0 / (n as f64).sqrt(); n]);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let av = a.mul_vec(&v).expect("shape checked");
        let mut w = a.tr_mul_vec(&av).expect("shape checked").into_vec();
        w.iter_mut().for_each(|x| *x /= a.rows() as f64);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        w.iter_mut().for_each(|x| *x /= norm);
        v = DenseVector::from_raw(w);
    }
    lambda
}
