//! Model runners and design evaluation.
//!
//! A runner maps physical parameter vectors to output vectors. The built-in
//! synthetic model runs in-process; [`ExternalRunner`] drives any other model
//! through a CSV batch exchange with a user command.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::sync::Mutex;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::synthetic::SyntheticModel;
use super::ParameterSpace;
use crate::error::{Error, Result};
use crate::reduction::{fmt_f64, SnapshotMatrix};

/// Overrides the configured external-model command when set.
pub const EXTERNAL_COMMAND_ENV: &str = "IOREDUX_MODEL_CMD";

pub trait ModelRunner: Send + Sync {
    fn output_labels(&self) -> Vec<String>;

    fn run(&self, point_id: &str, theta_hat: &[f64]) -> Result<Vec<f64>>;

    /// Evaluates a batch, returning outputs in batch order.
    fn run_batch(&self, batch: &[(String, Vec<f64>)], jobs: usize) -> Result<Vec<Vec<f64>>> {
        let work = || -> Result<Vec<Vec<f64>>> {
            batch
                .par_iter()
                .map(|(id, theta_hat)| self.run(id, theta_hat))
                .collect()
        };
        if jobs <= 1 {
            return batch.iter().map(|(id, th)| self.run(id, th)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
        pool.install(work)
    }
}

impl ModelRunner for SyntheticModel {
    fn output_labels(&self) -> Vec<String> {
        SyntheticModel::output_labels(self)
    }

    fn run(&self, point_id: &str, theta_hat: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(theta_hat)
            .map(|o| o.values)
            .map_err(|e| Error::Evaluation {
                point_id: point_id.to_string(),
                reason: e.to_string(),
            })
    }
}

/// Evaluates the model at every unit-cube design point; column `j` of the
/// result belongs to `point_ids[j]` whatever order the runs finish in.
pub fn evaluate_design(
    space: &ParameterSpace,
    point_ids: &[String],
    points: &[Vec<f64>],
    runner: &dyn ModelRunner,
    jobs: usize,
) -> Result<SnapshotMatrix> {
    if point_ids.len() != points.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} point ids for {} points",
            point_ids.len(),
            points.len()
        )));
    }
    let batch = point_ids
        .iter()
        .zip(points)
        .map(|(id, theta)| {
            space
                .from_unit(theta)
                .map(|th| (id.clone(), th))
                .map_err(|e| Error::Evaluation {
                    point_id: id.clone(),
                    reason: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let outputs = runner.run_batch(&batch, jobs)?;
    let labels = runner.output_labels();
    let d = labels.len();
    for ((id, _), y) in batch.iter().zip(&outputs) {
        if y.len() != d {
            return Err(Error::Evaluation {
                point_id: id.clone(),
                reason: format!("model returned {} outputs, expected {d}", y.len()),
            });
        }
    }
    let data = DMatrix::from_fn(d, outputs.len(), |i, j| outputs[j][i]);
    SnapshotMatrix::new(data, labels, point_ids.to_vec())
}

/// Runs an external model through `batch_in.csv` / `batch_out.csv`.
///
/// The command is run with `sh -c` inside `workdir`; it must read
/// `point_id,theta_hat_1..theta_hat_m` rows from `batch_in.csv` and write
/// `point_id,y_1..y_d` rows to `batch_out.csv`. The paths are also exported
/// as `IOREDUX_BATCH_IN` and `IOREDUX_BATCH_OUT`.
#[derive(Debug)]
pub struct ExternalRunner {
    command: String,
    workdir: PathBuf,
    labels: Vec<String>,
    dim: usize,
    lock: Mutex<()>,
}

impl ExternalRunner {
    pub fn new(command: impl Into<String>, workdir: impl Into<PathBuf>, dim: usize, labels: Vec<String>) -> Self {
        Self {
            command: command.into(),
            workdir: workdir.into(),
            labels,
            dim,
            lock: Mutex::new(()),
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn exchange(&self, batch: &[(String, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
        // one batch in flight per runner
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(&self.workdir)?;
        let input = self.workdir.join("batch_in.csv");
        let output = self.workdir.join("batch_out.csv");
        if output.exists() {
            fs::remove_file(&output)?;
        }

        let mut w = csv::Writer::from_path(&input)?;
        let mut header = vec!["point_id".to_string()];
        header.extend((1..=self.dim).map(|i| format!("theta_hat_{i}")));
        w.write_record(&header)?;
        for (id, th) in batch {
            if th.len() != self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "point {id} has {} coordinates, expected {}",
                    th.len(),
                    self.dim
                )));
            }
            let mut rec = vec![id.clone()];
            rec.extend(th.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        drop(w);

        let first_id = batch.first().map(|(id, _)| id.clone()).unwrap_or_default();
        let fail = |reason: String| Error::Evaluation {
            point_id: first_id.clone(),
            reason,
        };
        let status = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .current_dir(&self.workdir)
            .env("IOREDUX_BATCH_IN", &input)
            .env("IOREDUX_BATCH_OUT", &output)
            .status()
            .map_err(|e| fail(format!("cannot start external model: {e}")))?;
        if !status.success() {
            return Err(fail(format!("external model exited with {status}")));
        }
        self.read_output(&output, batch)
    }

    fn read_output(&self, path: &std::path::Path, batch: &[(String, Vec<f64>)]) -> Result<Vec<Vec<f64>>> {
        let src = path.display().to_string();
        let bad = |reason: String| Error::Format {
            path: src.clone(),
            reason,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let d = self.labels.len();
        let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(bad(format!("row has {} fields, expected {}", rec.len(), d + 1)));
            }
            let id = rec[0].to_string();
            let vals = rec
                .iter()
                .skip(1)
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(format!("bad number {f:?} for {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.insert(id.clone(), vals).is_some() {
                return Err(bad(format!("duplicate point_id {id}")));
            }
        }
        let mut out = Vec::with_capacity(batch.len());
        for (id, _) in batch {
            match rows.remove(id) {
                Some(v) => out.push(v),
                None => return Err(bad(format!("missing point_id {id}"))),
            }
        }
        if let Some(extra) = rows.keys().min() {
            return Err(bad(format!("unexpected point_id {extra}")));
        }
        Ok(out)
    }
}

impl ModelRunner for ExternalRunner {
    fn output_labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn run(&self, point_id: &str, theta_hat: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.exchange(&[(point_id.to_string(), theta_hat.to_vec())])?;
        Ok(out.remove(0))
    }

    fn run_batch(&self, batch: &[(String, Vec<f64>)], _jobs: usize) -> Result<Vec<Vec<f64>>> {
        self.exchange(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorkflowConfig;

    fn model() -> SyntheticModel {
        SyntheticModel::new(WorkflowConfig::default().model).unwrap()
    }

    #[test]
    fn single_point_design_matches_direct_call() {
        let m = model();
        let center = vec![0.5; 10];
        let snap = evaluate_design(m.space(), &["c".to_string()], std::slice::from_ref(&center), &m, 1).unwrap();
        let direct = m.evaluate(&m.space().from_unit(&center).unwrap()).unwrap();
        assert_eq!(snap.data().column(0).as_slice(), direct.values.as_slice());
        assert_eq!(snap.nrows(), 6);
    }

    #[test]
    fn permuting_design_permutes_columns() {
        let m = model();
        let pts = vec![vec![0.0; 10], vec![1.0; 10], vec![0.3; 10]];
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let s1 = evaluate_design(m.space(), &ids, &pts, &m, 2).unwrap();
        let perm = [2, 0, 1];
        let pts2: Vec<_> = perm.iter().map(|&i| pts[i].clone()).collect();
        let ids2: Vec<_> = perm.iter().map(|&i| ids[i].clone()).collect();
        let s2 = evaluate_design(m.space(), &ids2, &pts2, &m, 3).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(s2.data().column(j), s1.data().column(i));
        }
    }

    #[test]
    fn failing_point_is_named() {
        let m = model();
        let mut bad = vec![0.5; 10];
        bad[3] = 1.5;
        let err = evaluate_design(m.space(), &["ok".into(), "bad".into()], &[vec![0.5; 10], bad], &m, 1).unwrap_err();
        match err {
            Error::Evaluation { point_id, .. } => assert_eq!(point_id, "bad"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn external_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = dir.path().join("fixture.csv");
        fs::write(&fixture, "point_id,y_1,y_2\nq1,3.5,4\nq0,1,2.25\n").unwrap();
        let cmd = format!("cp '{}' batch_out.csv", fixture.display());
        let runner = ExternalRunner::new(cmd, dir.path().join("work"), 2, vec!["u".into(), "v".into()]);
        let space = ParameterSpace::unit(2);
        let snap = evaluate_design(
            &space,
            &["q0".into(), "q1".into()],
            &[vec![0.1, 0.2], vec![0.3, 0.4]],
            &runner,
            4,
        )
        .unwrap();
        assert_eq!(snap.data(), &DMatrix::from_row_slice(2, 2, &[1.0, 3.5, 2.25, 4.0]));
        let written = fs::read_to_string(dir.path().join("work/batch_in.csv")).unwrap();
        assert_eq!(written, "point_id,theta_hat_1,theta_hat_2\nq0,0.1,0.2\nq1,0.3,0.4\n");
    }

    #[test]
    fn external_missing_and_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let space = ParameterSpace::unit(1);
        let ids: Vec<String> = vec!["a".into(), "b".into()];
        let pts = vec![vec![0.1], vec![0.2]];
        for body in [
            "point_id,y\na,1\n",
            "point_id,y\na,1\nb,2\nb,3\n",
            "point_id,y\na,1\nb,2\nc,3\n",
        ] {
            let fixture = dir.path().join("f.csv");
            fs::write(&fixture, body).unwrap();
            let runner = ExternalRunner::new(
                format!("cp '{}' batch_out.csv", fixture.display()),
                dir.path().join("w"),
                1,
                vec!["y".into()],
            );
            assert!(matches!(
                evaluate_design(&space, &ids, &pts, &runner, 1),
                Err(Error::Format { .. })
            ));
        }
    }

    #[test]
    fn external_command_failure() {
        let dir = tempfile::tempdir().unwrap();
        let runner = ExternalRunner::new("exit 3", dir.path(), 1, vec!["y".into()]);
        let err = runner.run("z", &[0.5]).unwrap_err();
        assert!(matches!(err, Error::Evaluation { ref point_id, .. } if point_id == "z"));
    }
}
