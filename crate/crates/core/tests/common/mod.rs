//! Shared data generators for the integration tests.

#![allow(dead_code)]

use blockg_core::design::{center_design, BlockPartition, CenteredDesign};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random design with response `X β + noise`, centered with the given blocks.
pub fn random_design(
    rng: &mut ChaCha8Rng,
    n: usize,
    sizes: &[usize],
    beta: &[f64],
    noise: f64,
) -> CenteredDesign {
    let p: usize = sizes.iter().sum();
    let x = normal_matrix(rng, n, p);
    let e = normal_vector(rng, n);
    let y = &x * DVector::from_column_slice(beta) + e * noise;
    center_design(&x, &y, BlockPartition::contiguous(sizes).unwrap()).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
