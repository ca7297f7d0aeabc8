//! Dense linear-algebra kernel for output-space reduction.
//!
//! Row standardization of the snapshot matrix, a one-sided Jacobi SVD,
//! variance-threshold PCA truncation, projection onto the retained axes and
//! the Moore–Penrose pseudoinverse with a relative singular-value cutoff.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rowmajor;

/// Relative floor below which a row's standard deviation counts as zero.
pub const DEGENERATE_ROW_TOL: f64 = 1e-12;

/// Singular values below `PINV_CUTOFF * sigma_max` are treated as zero.
pub const PINV_CUTOFF: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 80;

/// A d×k matrix whose columns are model outputs at the design points.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    row_labels: Vec<String>,
    design_ids: Vec<String>,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>, row_labels: Vec<String>, design_ids: Vec<String>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InvalidArgument("snapshot matrix needs at least one row".into()));
        }
        if row_labels.len() != data.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} row labels for {} rows",
                row_labels.len(),
                data.nrows()
            )));
        }
        if design_ids.len() != data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} design ids for {} columns",
                design_ids.len(),
                data.ncols()
            )));
        }
        check_finite(&data)?;
        let mut seen = HashSet::new();
        for id in &design_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate design id {id}")));
            }
        }
        Ok(Self {
            data,
            row_labels,
            design_ids,
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn design_ids(&self) -> &[String] {
        &self.design_ids
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// Writes `design_id,<label_1>,...,<label_d>` with one line per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["design_id".to_string()];
        header.extend(self.row_labels.iter().cloned());
        out.write_record(&header)?;
        for (j, id) in self.design_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.data.column(j).iter().map(|v| fmt_f64(*v)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, source: &str) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: source.to_string(),
            reason,
        };
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("design_id") {
            return Err(bad("first column must be design_id".into()));
        }
        let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut cols: Vec<f64> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != labels.len() + 1 {
                return Err(bad(format!("row {} has {} fields", ids.len() + 1, rec.len())));
            }
            ids.push(rec[0].to_string());
            for field in rec.iter().skip(1) {
                cols.push(field.trim().parse().map_err(|_| bad(format!("bad number {field:?}")))?);
            }
        }
        let data = DMatrix::from_vec(labels.len(), ids.len(), cols);
        Self::new(data, labels, ids)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    // Display for f64 is shortest round-trip.
    format!("{v}")
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Per-row affine map to zero mean and unit population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Self {
            means: vec![0.0; d],
            scales: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(y.len())?;
        Ok(DVector::from_fn(y.len(), |i, _| {
            (y[i] - self.means[i]) / self.scales[i]
        }))
    }

    pub fn invert(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(z.len())?;
        Ok(DVector::from_fn(z.len(), |i, _| z[i] * self.scales[i] + self.means[i]))
    }

    pub fn apply_matrix(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(y.nrows())?;
        Ok(DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
            (y[(i, j)] - self.means[i]) / self.scales[i]
        }))
    }

    pub fn invert_matrix(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(z.nrows())?;
        Ok(DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| {
            z[(i, j)] * self.scales[i] + self.means[i]
        }))
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {n}, standardization has {} rows",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Centers each row and scales it by its population standard deviation.
///
/// Rows whose deviation falls below `1e-12 * max(1, |mean|)` keep scale 1,
/// so they standardize to zeros instead of blowing up.
pub fn standardize_rows(y: &SnapshotMatrix) -> Result<(DMatrix<f64>, Standardization)> {
    standardize_matrix(y.data())
}

pub fn standardize_matrix(y: &DMatrix<f64>) -> Result<(DMatrix<f64>, Standardization)> {
    check_finite(y)?;
    let k = y.ncols() as f64;
    let mut means = Vec::with_capacity(y.nrows());
    let mut scales = Vec::with_capacity(y.nrows());
    for row in y.row_iter() {
        let mean = row.iter().sum::<f64>() / k;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
        let sd = var.sqrt();
        means.push(mean);
        scales.push(if sd < DEGENERATE_ROW_TOL * mean.abs().max(1.0) {
            1.0
        } else {
            sd
        });
    }
    let st = Standardization { means, scales };
    let z = st.apply_matrix(y)?;
    Ok((z, st))
}

/// Thin singular value decomposition `A = U diag(S) Vᵀ`.
///
/// `u` is r×n, `v` is c×n with n = min(r, c); singular values are sorted
/// nonincreasing and each column of `u` has its largest-magnitude entry
/// positive.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }
}

pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    check_finite(a)?;
    if a.nrows() >= a.ncols() {
        Ok(jacobi_svd_tall(a))
    } else {
        let t = jacobi_svd_tall(&a.transpose());
        let mut out = Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
        fix_signs(&mut out);
        Ok(out)
    }
}

/// One-sided (Hestenes) Jacobi on the columns of a tall matrix.
fn jacobi_svd_tall(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let (x, y) = (w[(i, p)], w[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let smax = order.first().map_or(0.0, |&j| norms[j]);
    let tiny = smax * f64::EPSILON * (m.max(n) as f64);
    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut s = DVector::<f64>::zeros(n);
    let mut needs_completion = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        vs.set_column(dst, &v.column(src));
        if norms[src] > tiny && norms[src] > 0.0 {
            u.set_column(dst, &(w.column(src) / norms[src]));
        } else {
            needs_completion.push(dst);
        }
    }
    for &j in &needs_completion {
        complete_column(&mut u, j, &needs_completion);
    }
    let mut out = Svd {
        u,
        singular_values: s,
        v: vs,
    };
    fix_signs(&mut out);
    out
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

/// Fills column `j` with a unit vector orthogonal to every already-set column.
fn complete_column(u: &mut DMatrix<f64>, j: usize, pending: &[usize]) {
    let m = u.nrows();
    let filled: Vec<usize> = (0..u.ncols())
        .filter(|c| *c != j && (!pending.contains(c) || u.column(*c).norm() > 0.5))
        .collect();
    for k in 0..m {
        let mut cand = DVector::<f64>::zeros(m);
        cand[k] = 1.0;
        for _ in 0..2 {
            for &c in &filled {
                let col = u.column(c);
                let d = col.dot(&cand);
                cand -= col * d;
            }
        }
        let nrm = cand.norm();
        if nrm > 0.5 {
            u.set_column(j, &(cand / nrm));
            return;
        }
    }
}

fn fix_signs(svd: &mut Svd) {
    for j in 0..svd.u.ncols() {
        let mut best = 0usize;
        for i in 0..svd.u.nrows() {
            if svd.u[(i, j)].abs() > svd.u[(best, j)].abs() {
                best = i;
            }
        }
        if svd.u[(best, j)] < 0.0 {
            svd.u.column_mut(j).neg_mut();
            svd.v.column_mut(j).neg_mut();
        }
    }
}

/// Truncated left singular basis of a standardized snapshot matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    #[serde(with = "rowmajor::matrix")]
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub p: usize,
    pub retained_variance: f64,
    pub standardization: Standardization,
}

impl PcaBasis {
    pub fn output_dim(&self) -> usize {
        self.u.nrows()
    }

    /// Maps reduced coordinates back to physical output units.
    pub fn reconstruct(&self, reduced: &DVector<f64>) -> Result<DVector<f64>> {
        if reduced.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "reduced vector of length {}, basis has p={}",
                reduced.len(),
                self.p
            )));
        }
        self.standardization.invert(&(&self.u * reduced))
    }
}

/// Keeps the smallest number of leading singular vectors whose squared
/// singular values reach `variance_threshold` of the total.
pub fn truncated_pca(
    ystd: &DMatrix<f64>,
    variance_threshold: f64,
    standardization: Standardization,
) -> Result<PcaBasis> {
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance threshold {variance_threshold} not in (0, 1]"
        )));
    }
    if standardization.dim() != ystd.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "standardization has {} rows, matrix has {}",
            standardization.dim(),
            ystd.nrows()
        )));
    }
    if ystd.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateSnapshots);
    }
    let dec = svd(ystd)?;
    let s = &dec.singular_values;
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSnapshots);
    }
    let mut cum = 0.0;
    let mut p = s.len();
    for (i, v) in s.iter().enumerate() {
        cum += v * v;
        if cum / total >= variance_threshold {
            p = i + 1;
            break;
        }
    }
    let retained: f64 = s.iter().take(p).map(|v| v * v).sum::<f64>() / total;
    Ok(PcaBasis {
        u: dec.u.columns(0, p).into_owned(),
        singular_values: s.iter().copied().collect(),
        p,
        retained_variance: retained.min(1.0),
        standardization,
    })
}

/// `U₁:pᵀ · standardize(y)`.
pub fn project(basis: &PcaBasis, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != basis.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "output vector of length {}, basis expects {}",
            y.len(),
            basis.output_dim()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let z = basis.standardization.apply(y)?;
    Ok(basis.u.tr_mul(&z))
}

/// Moore–Penrose pseudoinverse together with the numerical rank used.
pub fn pseudoinverse_with_rank(j: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let (rows, cols) = j.shape();
    if rows == 0 || cols == 0 || j.iter().all(|v| *v == 0.0) {
        check_finite(j)?;
        return Ok((DMatrix::zeros(cols, rows), 0));
    }
    let dec = svd(j)?;
    let smax = dec.singular_values[0];
    let cutoff = PINV_CUTOFF * smax;
    let mut pinv = DMatrix::<f64>::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        rank += 1;
        pinv += (dec.v.column(k) / s) * dec.u.column(k).transpose();
    }
    Ok((pinv, rank))
}

pub fn pseudoinverse(j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    pseudoinverse_with_rank(j).map(|(p, _)| p)
}
