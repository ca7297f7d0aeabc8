//! Orthonormal shifted-Legendre polynomial chaos over the unit cube.
//!
//! Coefficients come from discrete projection with sparse-grid weights, and
//! gradients are assembled from the derivative recurrence so the Jacobian is
//! exact for the fitted polynomial.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rowmajor;
use crate::sparsegrid::{binomial, multi_indices_up_to, SparseGrid};

pub const MAX_LEGENDRE_DEGREE: usize = 64;
pub const DEFAULT_TERM_CAP: usize = 200_000;
const PRUNE_REL: f64 = 1e-14;

fn check_domain(n: usize, x: f64) -> Result<()> {
    if n > MAX_LEGENDRE_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "Legendre degree {n} above {MAX_LEGENDRE_DEGREE}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutsideCube { index: 0, value: x });
    }
    Ok(())
}

/// Values and first derivatives of `L̃_0..=L̃_max` at `x`.
///
/// Uses the Bonnet recurrence for `P_n(2x-1)` and
/// `P'_{k+1} = P'_{k-1} + (2k+1) P_k`, which has no division and so stays
/// valid at the endpoints.
pub(crate) fn legendre_table(max: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let t = 2.0 * x - 1.0;
    let mut p = vec![0.0; max + 1];
    let mut dp = vec![0.0; max + 1];
    p[0] = 1.0;
    if max >= 1 {
        p[1] = t;
        dp[1] = 1.0;
    }
    for k in 1..max {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * t * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
    for n in 0..=max {
        let norm = (2.0 * n as f64 + 1.0).sqrt();
        p[n] *= norm;
        // chain rule for t = 2x - 1
        dp[n] *= 2.0 * norm;
    }
    (p, dp)
}

pub fn legendre_eval(n: usize, x: f64) -> Result<f64> {
    check_domain(n, x)?;
    Ok(legendre_table(n, x).0[n])
}

pub fn legendre_deriv(n: usize, x: f64) -> Result<f64> {
    check_domain(n, x)?;
    Ok(legendre_table(n, x).1[n])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    pub dim: usize,
    pub indices: Vec<Vec<usize>>,
    pub max_total_degree: usize,
}

impl MultiIndexSet {
    /// Validates an arbitrary index list: zero index present, no duplicates,
    /// downward closed.
    pub fn new(dim: usize, indices: Vec<Vec<usize>>) -> Result<Self> {
        use std::collections::HashSet;
        if indices.iter().any(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "multi-index of wrong length, expected {dim}"
            )));
        }
        let set: HashSet<&[usize]> = indices.iter().map(Vec::as_slice).collect();
        if set.len() != indices.len() {
            return Err(Error::InvalidArgument("duplicate multi-index".into()));
        }
        if !set.contains(vec![0; dim].as_slice()) {
            return Err(Error::InvalidArgument("multi-index set lacks the zero index".into()));
        }
        for a in &indices {
            for j in 0..dim {
                if a[j] > 0 {
                    let mut b = a.clone();
                    b[j] -= 1;
                    if !set.contains(b.as_slice()) {
                        return Err(Error::InvalidArgument(format!(
                            "multi-index set not downward closed: {a:?} present, {b:?} missing"
                        )));
                    }
                }
            }
        }
        let max_total_degree = indices.iter().map(|a| a.iter().sum()).max().unwrap_or(0);
        Ok(Self {
            dim,
            indices,
            max_total_degree,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn max_degree_per_dim(&self) -> usize {
        self.indices.iter().flatten().copied().max().unwrap_or(0)
    }
}

pub fn total_degree_set(dim: usize, degree: usize) -> Result<MultiIndexSet> {
    total_degree_set_capped(dim, degree, DEFAULT_TERM_CAP)
}

pub fn total_degree_set_capped(dim: usize, degree: usize, cap: usize) -> Result<MultiIndexSet> {
    if dim == 0 {
        return Err(Error::InvalidArgument("multi-index dimension must be >= 1".into()));
    }
    if binomial(dim + degree, degree) > cap as u128 {
        return Err(Error::IndexSetTooLarge { dim, degree, cap });
    }
    let mut indices = multi_indices_up_to(dim, degree);
    // graded order; within a degree, leading coordinates vary slowest
    indices.sort_by(|a, b| {
        let (da, db): (usize, usize) = (a.iter().sum(), b.iter().sum());
        da.cmp(&db).then_with(|| b.cmp(a))
    });
    Ok(MultiIndexSet {
        dim,
        indices,
        max_total_degree: degree,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateProvenance {
    pub design_hash: String,
    /// Largest |Φ̃(θ_q) − ỹ(θ_q)| over design points and outputs.
    pub fit_residual: f64,
}

/// Vector-valued gPCE `Φ̃(θ) = Σ_α c_α L̃_α(θ)`, one coefficient row per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub index_set: MultiIndexSet,
    #[serde(with = "rowmajor::matrix")]
    pub coeffs: DMatrix<f64>,
    pub p: usize,
    pub provenance: SurrogateProvenance,
}

fn check_cube(theta: &[f64]) -> Result<()> {
    for (i, &v) in theta.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutsideCube { index: i, value: v });
        }
    }
    Ok(())
}

/// Row `q` holds `L̃_α(θ_q)` for every α in the set.
fn basis_matrix(points: &[Vec<f64>], set: &MultiIndexSet) -> DMatrix<f64> {
    let maxd = set.max_degree_per_dim();
    let mut b = DMatrix::zeros(points.len(), set.len());
    for (q, pt) in points.iter().enumerate() {
        let tables: Vec<Vec<f64>> = pt.iter().map(|&x| legendre_table(maxd, x).0).collect();
        for (s, alpha) in set.indices.iter().enumerate() {
            b[(q, s)] = alpha.iter().enumerate().map(|(j, &a)| tables[j][a]).product();
        }
    }
    b
}

pub fn fit_gpce(grid: &SparseGrid, reduced_outputs: &DMatrix<f64>, index_set: &MultiIndexSet) -> Result<Surrogate> {
    if reduced_outputs.ncols() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} output columns for {} grid points",
            reduced_outputs.ncols(),
            grid.len()
        )));
    }
    if index_set.dim != grid.dim {
        return Err(Error::DimensionMismatch(format!(
            "index set dimension {} vs grid dimension {}",
            index_set.dim, grid.dim
        )));
    }
    for pt in &grid.points {
        check_cube(pt)?;
    }
    let basis = basis_matrix(&grid.points, index_set);
    let mut weighted = reduced_outputs.clone();
    for (q, w) in grid.weights.iter().enumerate() {
        weighted.column_mut(q).scale_mut(*w);
    }
    let mut coeffs = weighted * &basis;
    if let Some(pos) = coeffs.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            row: pos % coeffs.nrows(),
            col: pos / coeffs.nrows(),
        });
    }
    let cmax = coeffs.amax();
    coeffs.apply(|c| {
        if c.abs() < PRUNE_REL * cmax {
            *c = 0.0;
        }
    });
    let fitted = &coeffs * basis.transpose();
    let fit_residual = (fitted - reduced_outputs).amax();
    Ok(Surrogate {
        index_set: index_set.clone(),
        p: coeffs.nrows(),
        coeffs,
        provenance: SurrogateProvenance {
            design_hash: grid.content_hash(),
            fit_residual,
        },
    })
}

impl Surrogate {
    pub fn dim(&self) -> usize {
        self.index_set.dim
    }

    fn check_point(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point of length {}, surrogate has dimension {}",
                theta.len(),
                self.dim()
            )));
        }
        check_cube(theta)
    }

    pub fn eval(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check_point(theta)?;
        let maxd = self.index_set.max_degree_per_dim();
        let tables: Vec<Vec<f64>> = theta.iter().map(|&x| legendre_table(maxd, x).0).collect();
        let phi = DVector::from_iterator(
            self.index_set.len(),
            self.index_set
                .indices
                .iter()
                .map(|alpha| alpha.iter().enumerate().map(|(j, &a)| tables[j][a]).product::<f64>()),
        );
        Ok(&self.coeffs * phi)
    }

    /// p×m Jacobian `∂Φ̃_i/∂θ_j`.
    pub fn grad(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(theta)?;
        let m = self.dim();
        let maxd = self.index_set.max_degree_per_dim();
        let tables: Vec<(Vec<f64>, Vec<f64>)> = theta.iter().map(|&x| legendre_table(maxd, x)).collect();
        // dphi[(s, j)] = ∂L̃_α_s / ∂θ_j
        let mut dphi = DMatrix::zeros(self.index_set.len(), m);
        for (s, alpha) in self.index_set.indices.iter().enumerate() {
            for j in 0..m {
                let mut prod = 1.0;
                for (k, &a) in alpha.iter().enumerate() {
                    prod *= if k == j { tables[k].1[a] } else { tables[k].0[a] };
                    if prod == 0.0 {
                        break;
                    }
                }
                dphi[(s, j)] = prod;
            }
        }
        Ok(&self.coeffs * dphi)
    }
}

pub fn eval_surrogate(s: &Surrogate, theta: &[f64]) -> Result<DVector<f64>> {
    s.eval(theta)
}

pub fn grad_surrogate(s: &Surrogate, theta: &[f64]) -> Result<DMatrix<f64>> {
    s.grad(theta)
}
