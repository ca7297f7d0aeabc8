//! Reduced-order model assembly and its two uses: verifying the reduced
//! input directions against the model, and turning output targets into
//! input plans without any iteration.
//!
//! With `Ȳ = U₁:pᵀ · standardize(Y)` and a chaos surrogate `Φ̃` fitted to
//! `Ȳ`, the reduced input direction for output axis `j` is
//! `τ_j = ∇Φ̃(θ⁰)† e_j`, the minimum-norm solution of `∇Φ̃(θ⁰) z = e_j`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpce::{fit_gpce, total_degree_set, Surrogate};
use crate::model::{ModelRunner, ParameterSpace};
use crate::reduction::{project, pseudoinverse_with_rank, standardize_rows, truncated_pca, PcaBasis, SnapshotMatrix};
use crate::rowmajor;
use crate::sparsegrid::SparseGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomSettings {
    pub variance_threshold: f64,
    pub theta0: Vec<f64>,
    /// Total degree of the chaos basis.
    pub degree: usize,
}

impl RomSettings {
    /// Cube center, degree equal to the design level.
    pub fn for_grid(grid: &SparseGrid, variance_threshold: f64) -> Self {
        Self {
            variance_threshold,
            theta0: vec![0.5; grid.dim],
            degree: grid.level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub fit_residual: f64,
    pub jacobian_rank: usize,
    /// `max_j ‖∇Φ̃(θ⁰) τ_j − e_j‖∞`.
    pub direction_residual: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedRom {
    pub space: ParameterSpace,
    pub output_labels: Vec<String>,
    pub basis: PcaBasis,
    pub surrogate: Surrogate,
    pub theta0: Vec<f64>,
    #[serde(with = "rowmajor::matrix")]
    pub jacobian: DMatrix<f64>,
    #[serde(with = "rowmajor::matrix")]
    pub jacobian_pinv: DMatrix<f64>,
    /// Column j is τ_j.
    #[serde(with = "rowmajor::matrix")]
    pub directions: DMatrix<f64>,
    pub design_hash: String,
    /// Hashes of any further inputs (snapshot file, config) keyed by role.
    #[serde(default)]
    pub input_hashes: BTreeMap<String, String>,
    pub diagnostics: BuildDiagnostics,
}

pub fn build_rom(
    snapshots: &SnapshotMatrix,
    grid: &SparseGrid,
    space: &ParameterSpace,
    settings: &RomSettings,
) -> Result<ReducedRom> {
    if snapshots.design_ids() != grid.point_ids.as_slice() {
        return Err(Error::DimensionMismatch(
            "snapshot columns are not aligned with the design points".into(),
        ));
    }
    if space.dim() != grid.dim {
        return Err(Error::DimensionMismatch(format!(
            "parameter space has dimension {}, design has {}",
            space.dim(),
            grid.dim
        )));
    }
    let theta0 = settings.theta0.clone();
    if theta0.len() != grid.dim {
        return Err(Error::DimensionMismatch(format!(
            "theta0 has length {}, design dimension is {}",
            theta0.len(),
            grid.dim
        )));
    }
    if let Some((i, v)) = theta0.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::OutsideCube { index: i, value: *v });
    }

    let (ystd, standardization) = standardize_rows(snapshots)?;
    let basis = truncated_pca(&ystd, settings.variance_threshold, standardization)?;
    let reduced = basis.u.tr_mul(&ystd);
    let index_set = total_degree_set(grid.dim, settings.degree)?;
    let surrogate = fit_gpce(grid, &reduced, &index_set)?;

    let jacobian = surrogate.grad(&theta0)?;
    let (jacobian_pinv, rank) = pseudoinverse_with_rank(&jacobian)?;
    let directions = jacobian_pinv.clone();
    let p = basis.p;
    let residual = (&jacobian * &directions - DMatrix::<f64>::identity(p, p)).amax();

    let mut warnings = Vec::new();
    if rank < p {
        let msg = format!("Jacobian at theta0 is rank deficient: numerical rank {rank} < p = {p}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(ReducedRom {
        space: space.clone(),
        output_labels: snapshots.row_labels().to_vec(),
        design_hash: grid.content_hash(),
        diagnostics: BuildDiagnostics {
            fit_residual: surrogate.provenance.fit_residual,
            jacobian_rank: rank,
            direction_residual: residual,
            warnings,
        },
        basis,
        surrogate,
        theta0,
        jacobian,
        jacobian_pinv,
        directions,
        input_hashes: BTreeMap::new(),
    })
}

impl ReducedRom {
    pub fn p(&self) -> usize {
        self.basis.p
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn direction(&self, j: usize) -> DVector<f64> {
        self.directions.column(j).into_owned()
    }

    /// Physical outputs whose projection equals `reduced`.
    pub fn reconstruct(&self, reduced: &DVector<f64>) -> Result<DVector<f64>> {
        self.basis.reconstruct(reduced)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

pub fn reduced_directions(rom: &ReducedRom) -> &DMatrix<f64> {
    &rom.directions
}

/// `U_{ij} · s_j`, one column per retained component.
pub fn export_loadings(rom: &ReducedRom) -> DMatrix<f64> {
    let mut l = rom.basis.u.clone();
    for j in 0..rom.p() {
        l.column_mut(j).scale_mut(rom.basis.singular_values[j]);
    }
    l
}

/// Projected model response to each direction step, divided by `delta`.
///
/// Column j is `(project(y(θ⁰ + δτ_j)) − project(y(θ⁰))) / δ`; the identity
/// matrix is the ideal outcome.
pub fn verify_directions(rom: &ReducedRom, runner: &dyn ModelRunner, delta: f64, jobs: usize) -> Result<DMatrix<f64>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let p = rom.p();
    let mut batch = vec![("theta0".to_string(), rom.space.from_unit(&rom.theta0)?)];
    for j in 0..p {
        let tau = rom.directions.column(j);
        let theta: Vec<f64> = rom.theta0.iter().zip(tau.iter()).map(|(t, d)| t + delta * d).collect();
        if let Some((i, v)) = theta.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::DirectionOutsideCube {
                direction: j + 1,
                index: i,
                value: *v,
            });
        }
        batch.push((format!("tau_{}", j + 1), rom.space.from_unit(&theta)?));
    }
    let ys = runner.run_batch(&batch, jobs)?;
    let base = project(&rom.basis, &DVector::from_vec(ys[0].clone()))?;
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        let r = project(&rom.basis, &DVector::from_vec(ys[j + 1].clone()))?;
        m.set_column(j, &((r - &base) / delta));
    }
    Ok(m)
}

/// Runs the surrogate in place of the model: outputs are the physical
/// reconstruction of `Φ̃(θ)`.
pub struct SurrogateRunner<'a> {
    pub rom: &'a ReducedRom,
}

impl ModelRunner for SurrogateRunner<'_> {
    fn output_labels(&self) -> Vec<String> {
        self.rom.output_labels.clone()
    }

    fn run(&self, _point_id: &str, theta_hat: &[f64]) -> Result<Vec<f64>> {
        let theta = self.rom.space.to_unit(theta_hat)?;
        let r = self.rom.surrogate.eval(&theta)?;
        Ok(self.rom.reconstruct(&r)?.iter().copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub target: Vec<f64>,
    /// Reduced-space offset `a = project(target) − Φ̃(θ⁰)`.
    pub coefficients: Vec<f64>,
    pub theta_unclamped: Vec<f64>,
    pub theta_plan: Vec<f64>,
    pub clamped: Vec<bool>,
    /// Largest distance of the unclamped plan outside the cube.
    pub cube_violation: f64,
    pub predicted_reduced: Vec<f64>,
    pub predicted_outputs: Vec<f64>,
    #[serde(default)]
    pub achieved_outputs: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl PlanResult {
    pub fn reachable(&self) -> bool {
        !self.clamped.iter().any(|c| *c)
    }

    /// `(achieved − target) / |target|` per output, once evaluated.
    pub fn relative_errors(&self) -> Option<Vec<f64>> {
        self.achieved_outputs.as_ref().map(|a| {
            a.iter()
                .zip(&self.target)
                .map(|(y, t)| if *t == 0.0 { *y - *t } else { (y - t) / t.abs() })
                .collect()
        })
    }
}

/// `θ_plan = clamp(θ⁰ + ∇Φ̃(θ⁰)† (project(target) − Φ̃(θ⁰)))`.
pub fn plan_for_target(rom: &ReducedRom, y_target: &[f64]) -> Result<PlanResult> {
    let target = DVector::from_column_slice(y_target);
    let projected = project(&rom.basis, &target)?;
    let center = rom.surrogate.eval(&rom.theta0)?;
    let a = projected - center;
    let step = &rom.jacobian_pinv * &a;
    let raw: Vec<f64> = rom.theta0.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
    let plan: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let clamped: Vec<bool> = raw.iter().zip(&plan).map(|(r, c)| r != c).collect();
    let violation = raw.iter().map(|v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);

    let mut warnings = Vec::new();
    if clamped.iter().any(|c| *c) {
        let names: Vec<&str> = clamped
            .iter()
            .zip(&rom.space.names)
            .filter(|(c, _)| **c)
            .map(|(_, n)| n.as_str())
            .collect();
        warnings.push(format!(
            "target not reachable inside the parameter box: clamped {} (max violation {violation:.4})",
            names.join(", ")
        ));
    }
    let predicted = rom.surrogate.eval(&plan)?;
    let outputs = rom.reconstruct(&predicted)?;
    Ok(PlanResult {
        target: y_target.to_vec(),
        coefficients: a.iter().copied().collect(),
        theta_unclamped: raw,
        theta_plan: plan,
        clamped,
        cube_violation: violation,
        predicted_reduced: predicted.iter().copied().collect(),
        predicted_outputs: outputs.iter().copied().collect(),
        achieved_outputs: None,
        warnings,
    })
}

/// Runs the model at each plan and records the achieved outputs.
pub fn evaluate_plans(rom: &ReducedRom, plans: &mut [PlanResult], runner: &dyn ModelRunner, jobs: usize) -> Result<()> {
    let batch = plans
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((format!("plan_{}", i + 1), rom.space.from_unit(&p.theta_plan)?)))
        .collect::<Result<Vec<_>>>()?;
    let ys = runner.run_batch(&batch, jobs)?;
    for (plan, y) in plans.iter_mut().zip(ys) {
        plan.achieved_outputs = Some(y);
    }
    Ok(())
}
