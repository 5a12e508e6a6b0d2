use fedbcd::numkit::{householder_to_e1, sample_ortho_witness, DenseVector, SeededRng};

// A rotation that leaves the starting point where it is.
fn main() -> fedbcd::Result<()> {
    let theta0 = DenseVector::new(vec![0.3, -1.2, 0.5, 2.0])?;
    let p = householder_to_e1(&theta0)?;
    let pe = p.mul_vec(&theta0)?;
    println!("P theta0 = {:?}", pe.as_slice().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("|theta0| = {:.3}", theta0.norm2());

    let mut rng = SeededRng::new(42, fedbcd::streams::WITNESS);
    for _ in 0..3 {
        let w = sample_ortho_witness(&theta0, &mut rng)?;
        println!(
            "{}  ||U'U - I|| {:.1e}  ||U theta0 - theta0|| {:.1e}  ||U - I|| {:.3}",
            &w.fingerprint()[..12],
            w.orthogonality_defect(),
            w.fixed_point_defect(),
            w.distance_from_identity()
        );
    }

    // Two dimensions leave only the reflection across theta0.
    let flat = DenseVector::new(vec![1.0, 1.0])?;
    let w = sample_ortho_witness(&flat, &mut rng)?;
    println!("d=2: U = {:?}", w.u.as_slice());
    Ok(())
}
