//! Orthogonal matrices that fix a given vector.
//!
//! For a nonzero `θ⁰ ∈ ℝᵈ` (d ≥ 2) every matrix `U = P·diag(1, V)·P`, with `P`
//! the Householder reflection taking `θ⁰` to `‖θ⁰‖·e₁` and `V` any orthogonal
//! `(d−1)×(d−1)` matrix, is orthogonal and satisfies `U·θ⁰ = θ⁰`. Choosing
//! `V ≠ I` makes `U ≠ I`; sampling `V` from a continuous distribution gives
//! arbitrarily many distinct such `U`.

use serde::Serialize;

use super::matrix::{dot, DenseMatrix, DenseVector};
use super::rng::SeededRng;
use crate::error::{Error, Result};

/// Orthogonality tolerance for witnesses and random orthogonal matrices.
pub const ORTHO_TOL: f64 = 1e-10;
/// A witness counts as non-identity when `max |U − I|` exceeds this.
pub const NON_IDENTITY_TOL: f64 = 1e-6;
/// Below `‖v‖₂ ≤ ALIGNED_TOL·‖θ⁰‖₂` the Householder vector is treated as zero.
pub const ALIGNED_TOL: f64 = 1e-12;

/// Householder reflection `P = I − 2vvᵀ/vᵀv` with `P·θ⁰ = ‖θ⁰‖₂·e₁`.
///
/// Returns the identity when `θ⁰` is already a positive multiple of `e₁`.
pub fn householder_to_e1(theta0: &DenseVector) -> Result<DenseMatrix> {
    let d = theta0.len();
    if d < 2 {
        return Err(Error::DimensionTooSmall {
            required: 2,
            actual: d,
        });
    }
    let norm = theta0.norm2();
    if norm == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot reflect the zero vector onto e1".into(),
        ));
    }
    let x = theta0.as_slice();
    let tail_sq: f64 = x[1..].iter().map(|v| v * v).sum();
    let mut v = x.to_vec();
    // v₁ = x₁ − ‖x‖; rewritten to avoid cancellation when x₁ > 0.
    v[0] = if x[0] > 0.0 {
        -tail_sq / (x[0] + norm)
    } else {
        x[0] - norm
    };
    let vtv = dot(&v, &v);
    if vtv.sqrt() <= ALIGNED_TOL * norm {
        return Ok(DenseMatrix::identity(d));
    }
    let mut p = DenseMatrix::identity(d);
    for r in 0..d {
        for c in 0..d {
            p.set(r, c, p.get(r, c) - 2.0 * v[r] * v[c] / vtv);
        }
    }
    Ok(p)
}

/// Haar-random orthogonal matrix: Gram–Schmidt (with one reorthogonalization
/// pass) on a Gaussian matrix, which fixes the signs of R's diagonal positive.
pub fn random_orthogonal(dim: usize, rng: &mut SeededRng) -> Result<DenseMatrix> {
    if dim == 0 {
        return Err(Error::DimensionTooSmall {
            required: 1,
            actual: 0,
        });
    }
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut ok = true;
        for _ in 0..dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            for _pass in 0..2 {
                for q in &cols {
                    let proj = dot(q, &v);
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= proj * qi;
                    }
                }
            }
            let n = dot(&v, &v).sqrt();
            if n < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|x| *x /= n);
            cols.push(v);
        }
        if !ok {
            continue;
        }
        let mut m = DenseMatrix::zeros(dim, dim);
        for (c, col) in cols.iter().enumerate() {
            for (r, &val) in col.iter().enumerate() {
                m.set(r, c, val);
            }
        }
        return Ok(m);
    }
}

/// A non-identity orthogonal `U` with `U·θ⁰ = θ⁰`, together with its factors.
#[derive(Debug, Clone, Serialize)]
pub struct OrthoWitness {
    pub u: DenseMatrix,
    pub householder_p: DenseMatrix,
    pub inner_v: DenseMatrix,
    pub fixed_vector: DenseVector,
}

impl OrthoWitness {
    /// Assembles `U = P·diag(1, V)·P` for a caller-supplied inner block `V`.
    ///
    /// Checks orthogonality and the fixed-point property, but not
    /// non-triviality: `V = I` yields the identity member of the family.
    pub fn from_inner(theta0: &DenseVector, inner_v: DenseMatrix) -> Result<Self> {
        let d = theta0.len();
        if d < 2 {
            return Err(Error::DimensionTooSmall {
                required: 2,
                actual: d,
            });
        }
        if inner_v.rows() != d - 1 || inner_v.cols() != d - 1 {
            return Err(Error::Shape(format!(
                "inner block must be {0}x{0}, got {1}x{2}",
                d - 1,
                inner_v.rows(),
                inner_v.cols()
            )));
        }
        if inner_v.orthogonality_defect() > ORTHO_TOL {
            return Err(Error::DegenerateInput("inner block is not orthogonal".into()));
        }
        let p = householder_to_e1(theta0)?;
        let mut u1 = DenseMatrix::identity(d);
        for r in 0..d - 1 {
            for c in 0..d - 1 {
                u1.set(r + 1, c + 1, inner_v.get(r, c));
            }
        }
        let u = p.matmul(&u1)?.matmul(&p)?;
        let w = Self {
            u,
            householder_p: p,
            inner_v,
            fixed_vector: theta0.clone(),
        };
        if w.orthogonality_defect() > ORTHO_TOL || w.fixed_point_defect() > w.fixed_point_tol() {
            return Err(Error::DegenerateInput(
                "assembled witness violates U·Uᵀ = I or U·θ⁰ = θ⁰".into(),
            ));
        }
        Ok(w)
    }

    pub fn dim(&self) -> usize {
        self.u.rows()
    }

    pub fn orthogonality_defect(&self) -> f64 {
        self.u.orthogonality_defect()
    }

    /// `max |U·θ⁰ − θ⁰|`.
    pub fn fixed_point_defect(&self) -> f64 {
        self.u
            .mul_vec(&self.fixed_vector)
            .map_or(f64::INFINITY, |v| v.max_abs_diff(&self.fixed_vector))
    }

    pub fn fixed_point_tol(&self) -> f64 {
        ORTHO_TOL * (1.0 + self.fixed_vector.norm_inf())
    }

    /// `max |U − I|`.
    pub fn distance_from_identity(&self) -> f64 {
        self.u.max_abs_diff(&DenseMatrix::identity(self.dim()))
    }

    pub fn is_identity(&self) -> bool {
        self.distance_from_identity() <= NON_IDENTITY_TOL
    }

    /// Short hex digest of `U`'s bit pattern, for reports.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in self.u.as_slice() {
            h.update(v.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Samples a witness for `θ⁰`. At `d = 2` the only admissible inner block
/// is `V = [−1]`; above that `V` is Haar-random and resampled until `U ≠ I`.
pub fn sample_ortho_witness(theta0: &DenseVector, rng: &mut SeededRng) -> Result<OrthoWitness> {
    let d = theta0.len();
    if d < 2 {
        return Err(Error::DimensionTooSmall {
            required: 2,
            actual: d,
        });
    }
    if theta0.norm2() == 0.0 {
        return Err(Error::DegenerateInput(
            "witness construction needs a nonzero vector".into(),
        ));
    }
    if d == 2 {
        return OrthoWitness::from_inner(theta0, DenseMatrix::from_raw(1, 1, vec![-1.0]));
    }
    loop {
        let v = random_orthogonal(d - 1, rng)?;
        let w = OrthoWitness::from_inner(theta0, v)?;
        if !w.is_identity() {
            return Ok(w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec(xs: &[f64]) -> DenseVector {
        DenseVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn householder_three_four() {
        // v = [3,4] − 5e₁ = [−2,4], vᵀv = 20, P = I − vvᵀ/10.
        let p = householder_to_e1(&vec(&[3.0, 4.0])).unwrap();
        let expected = DenseMatrix::from_rows(&[vec![0.6, 0.8], vec![0.8, -0.6]]).unwrap();
        assert!(p.max_abs_diff(&expected) < 1e-15);
        let img = p.mul_vec(&vec(&[3.0, 4.0])).unwrap();
        assert!(img.max_abs_diff(&vec(&[5.0, 0.0])) < 1e-14);
    }

    #[test]
    fn householder_aligned_is_identity() {
        assert_eq!(householder_to_e1(&vec(&[5.0, 0.0])).unwrap(), DenseMatrix::identity(2));
        assert_eq!(
            householder_to_e1(&vec(&[1.0, 0.0, 0.0])).unwrap(),
            DenseMatrix::identity(3)
        );
    }

    #[test]
    fn householder_negative_axis_reflects() {
        let p = householder_to_e1(&vec(&[-2.0, 0.0, 0.0])).unwrap();
        let img = p.mul_vec(&vec(&[-2.0, 0.0, 0.0])).unwrap();
        assert!(img.max_abs_diff(&vec(&[2.0, 0.0, 0.0])) < 1e-15);
    }

    #[test]
    fn householder_errors() {
        assert!(matches!(
            householder_to_e1(&vec(&[0.0, 0.0])),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            householder_to_e1(&vec(&[1.0])),
            Err(Error::DimensionTooSmall { .. })
        ));
    }

    #[test]
    fn witness_three_four_reflection() {
        // P·diag(1,−1)·P with P = [[.6,.8],[.8,−.6]].
        let w = sample_ortho_witness(&vec(&[3.0, 4.0]), &mut SeededRng::new(0, 0)).unwrap();
        let expected = DenseMatrix::from_rows(&[vec![-0.28, 0.96], vec![0.96, 0.28]]).unwrap();
        assert!(w.u.max_abs_diff(&expected) < 1e-14);
        assert!(w.fixed_point_defect() < 1e-14);
        assert!(w.orthogonality_defect() < 1e-14);
    }

    #[test]
    fn witness_with_quarter_turn_on_e1() {
        let rot = DenseMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let w = OrthoWitness::from_inner(&DenseVector::basis(3, 0), rot).unwrap();
        let expected = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(w.u, expected);
    }

    #[test]
    fn witness_needs_two_dims() {
        let err = sample_ortho_witness(&vec(&[2.0]), &mut SeededRng::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::DimensionTooSmall { required: 2, actual: 1 }));
    }

    #[test]
    fn random_orthogonal_small_dims() {
        let mut rng = SeededRng::new(42, 0);
        let one = random_orthogonal(1, &mut rng).unwrap();
        assert_eq!(one.get(0, 0).abs(), 1.0);
        let three = random_orthogonal(3, &mut rng).unwrap();
        assert!(three.orthogonality_defect() <= 1e-10);
        let two = random_orthogonal(2, &mut rng).unwrap();
        let c0 = two.column(0);
        let c1 = two.column(1);
        assert!((dot(&c0, &c0) - 1.0).abs() < 1e-12);
        assert!(dot(&c0, &c1).abs() < 1e-12);
        assert!(random_orthogonal(0, &mut rng).is_err());
    }

    #[test]
    fn random_orthogonal_signs_vary_in_dim_one() {
        let signs: std::collections::BTreeSet<i64> = (0..32)
            .map(|s| random_orthogonal(1, &mut SeededRng::new(s, 0)).unwrap().get(0, 0) as i64)
            .collect();
        assert_eq!(signs.len(), 2);
    }
}
