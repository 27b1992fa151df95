//! Seeded Haar-random unitaries and projections.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{GrassmannSignature, Operator, Projection};
use crate::linalg::{self, CMatrix, C64};

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix, with the
/// diagonal of `R` rotated to be positive.
pub fn haar_unitary_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    assert!(n >= 1, "unitary dimension must be positive");
    let g = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let phases = DVector::from_fn(n, |i, _| {
        let d = r[(i, i)];
        if d.norm() == 0.0 {
            linalg::ONE
        } else {
            d / d.norm()
        }
    });
    q * CMatrix::from_diagonal(&phases)
}

pub fn haar_unitary(n: usize, seed: u64) -> CMatrix {
    haar_unitary_with(n, &mut rng_from_seed(seed))
}

/// `u diag(1^k, 0^(n-k)) u*` per block with Haar `u`.
pub fn random_projection_with<R: Rng + ?Sized>(sig: &GrassmannSignature, rng: &mut R) -> Projection {
    let bases: Vec<CMatrix> = sig
        .shape()
        .dims()
        .iter()
        .zip(sig.ranks())
        .map(|(&n, &k)| haar_unitary_with(n, rng).columns(0, k).into_owned())
        .collect();
    Projection::from_bases(sig.shape(), &bases)
}

pub fn random_projection(sig: &GrassmannSignature, seed: u64) -> Projection {
    random_projection_with(sig, &mut rng_from_seed(seed))
}

/// Haar unitary in every block of the algebra.
pub fn random_unitary_operator<R: Rng + ?Sized>(
    shape: &crate::algebra::AlgebraShape,
    rng: &mut R,
) -> Operator {
    let blocks = shape.dims().iter().map(|&n| haar_unitary_with(n, rng)).collect();
    Operator::new(shape.clone(), blocks).expect("haar blocks match the shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{validate_projection, AlgebraShape};
    use crate::linalg::{norm, Tolerance};

    #[test]
    fn scalar_unitary_has_unit_modulus() {
        let u = haar_unitary(1, 3);
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unitarity_residual() {
        for seed in 0..20 {
            let u = haar_unitary(7, seed);
            assert!(norm(&(u.adjoint() * &u - CMatrix::identity(7, 7))) <= 1e-12);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(haar_unitary(5, 42), haar_unitary(5, 42));
        assert_ne!(haar_unitary(5, 42), haar_unitary(5, 43));
    }

    #[test]
    fn random_projection_signatures() {
        let tol = Tolerance::default();
        let shape = AlgebraShape::new(vec![3, 4, 2]).unwrap();
        let zero = GrassmannSignature::new(shape.clone(), vec![0, 0, 0]).unwrap();
        assert!(random_projection(&zero, 1).is_zero());
        for seed in 0..20 {
            let sig = GrassmannSignature::new(shape.clone(), vec![1, 2, 2]).unwrap();
            let p = random_projection(&sig, seed);
            let checked = validate_projection(p.op(), &tol).unwrap();
            assert_eq!(checked.ranks(), sig.ranks());
            assert!(norm(&(p.block(2) - CMatrix::identity(2, 2))) < 1e-12);
        }
    }
}
