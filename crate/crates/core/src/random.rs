//! Random instance generators: Haar states and unitaries, Gaussian PSD
//! operators, induced mixed states and random channels.

use rand::RngCore;

use crate::linalg::{gram_schmidt, partial_trace, CMatrix, CVector};
use crate::quantum::{DensityOperator, KrausChannel};
use crate::rng::complex_normal;

pub fn random_gaussian_matrix<R: RngCore + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Haar-random unit vector.
pub fn random_pure<R: RngCore + ?Sized>(rng: &mut R, d: usize) -> CVector {
    let v = CVector::from_fn(d, |_, _| complex_normal(rng));
    let n = v.norm();
    v.unscale(n)
}

/// Haar-random unitary from Gram–Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: RngCore + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    loop {
        let q = gram_schmidt(&random_gaussian_matrix(rng, d, d));
        if q.ncols() == d {
            return q;
        }
    }
}

/// Random isometry `d_in → d_out` (requires `d_out ≥ d_in`).
pub fn random_isometry<R: RngCore + ?Sized>(rng: &mut R, d_out: usize, d_in: usize) -> CMatrix {
    assert!(d_out >= d_in);
    loop {
        let q = gram_schmidt(&random_gaussian_matrix(rng, d_out, d_in));
        if q.ncols() == d_in {
            return q;
        }
    }
}

/// `(G + G†)/2` with Gaussian `G`.
pub fn random_hermitian<R: RngCore + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let g = random_gaussian_matrix(rng, d, d);
    (&g + g.adjoint()).scale(0.5)
}

/// `G G†` with `G` a `d × rank` Gaussian matrix.
pub fn random_psd_rank<R: RngCore + ?Sized>(rng: &mut R, d: usize, rank: usize) -> CMatrix {
    let g = random_gaussian_matrix(rng, d, rank);
    &g * g.adjoint()
}

/// Mixed state of rank `≤ k`: reduction of a Haar pure state on `d ⊗ k`.
pub fn random_density_rank<R: RngCore + ?Sized>(rng: &mut R, d: usize, k: usize) -> DensityOperator {
    let psi = random_pure(rng, d * k);
    let full = &psi * psi.adjoint();
    let red = partial_trace(&full, &[d, k], &[0]).expect("dims are consistent");
    DensityOperator::from_psd_unchecked(red)
}

/// Full-rank mixed state (Hilbert–Schmidt measure).
pub fn random_density<R: RngCore + ?Sized>(rng: &mut R, d: usize) -> DensityOperator {
    random_density_rank(rng, d, d)
}

/// Random channel with `k` Kraus operators, cut from a random isometry
/// `d_in → d_out·k`.
pub fn random_channel<R: RngCore + ?Sized>(rng: &mut R, d_in: usize, d_out: usize, k: usize) -> KrausChannel {
    let v = random_isometry(rng, d_out * k, d_in);
    let ops = (0..k).map(|j| v.rows(j * d_out, d_out).into_owned()).collect();
    KrausChannel::new(ops).expect("isometry blocks have consistent shapes")
}
