//! Random inputs and dense-algebra oracles shared by the integration tests.
//! Oracles lean on nalgebra's own factorizations so they stay independent of
//! the crate's Jacobi SVD.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Product of random `rows×rank` and `rank×cols` factors.
pub fn with_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    uniform(rng, rows, rank) * uniform(rng, rank, cols)
}

pub fn orthonormal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    uniform(rng, n, n).qr().q()
}

/// `Aᵀ (A Aᵀ)⁻¹` for full row rank `A`, via LU.
pub fn min_norm_right_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = a * a.transpose();
    let inv = gram.lu().try_inverse().expect("A Aᵀ invertible");
    a.transpose() * inv
}

/// Projector onto the null space of full-row-rank `A`: `I − Aᵀ(AAᵀ)⁻¹A`.
pub fn null_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    DMatrix::identity(n, n) - min_norm_right_inverse(a) * a
}

/// Moore–Penrose inverse from nalgebra's SVD.
pub fn nalgebra_pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(1e-10 * smax.max(f64::MIN_POSITIVE))
        .expect("svd with vectors")
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn random_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()
}

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// `y = Aθ + b` on the unit cube.
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearModel {
    /// Full row rank with singular values in [1, 2].
    pub fn random(seed: u64, d: usize, m: usize) -> Self {
        let mut rng = rng(seed);
        let q1 = orthonormal(&mut rng, d);
        let q2 = orthonormal(&mut rng, m);
        let s = DMatrix::from_fn(d, m, |i, j| if i == j { rng.gen_range(1.0..2.0) } else { 0.0 });
        let a = q1 * s * q2.transpose();
        let b = DVector::from_fn(d, |_, _| rng.gen_range(5.0..10.0));
        Self { a, b }
    }

    pub fn eval(&self, theta: &[f64]) -> DVector<f64> {
        &self.a * vector(theta) + &self.b
    }
}

impl ioredux_core::ModelRunner for LinearModel {
    fn output_labels(&self) -> Vec<String> {
        (1..=self.a.nrows()).map(|i| format!("y{i}")).collect()
    }

    fn run(&self, _point_id: &str, theta_hat: &[f64]) -> ioredux_core::Result<Vec<f64>> {
        Ok(self.eval(theta_hat).iter().copied().collect())
    }
}
