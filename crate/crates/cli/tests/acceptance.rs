//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ioredux_core::gpce::{fit_gpce, total_degree_set};
use ioredux_core::model::evaluate_design;
use ioredux_core::model::ode::rk4;
use ioredux_core::pipeline::evaluate_plans;
use ioredux_core::reduction::pseudoinverse_with_rank;
use ioredux_core::sparsegrid::smolyak_grid;
use ioredux_core::{
    build_rom, plan_for_target, verify_directions, ModelRunner, ParameterSpace, ReducedRom, RomSettings,
    SyntheticModel, WorkflowConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn main() {
    let criteria: [Criterion; 9] = [
        ("sparse-grid parity", secs(1), sparse_grid_parity),
        ("pseudoinverse correctness", secs(5), pseudoinverse_correctness),
        ("surrogate exactness", secs(10), surrogate_exactness),
        ("linear-model end-to-end oracle", secs(30), linear_end_to_end),
        ("minimum-norm property", secs(5), minimum_norm),
        ("nonlinear verification", secs(300), nonlinear_verification),
        ("planning behavior", secs(120), planning_behavior),
        ("model physics", secs(10), model_physics),
        ("determinism", secs(600), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; took {took:.2?}, budget {budget:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} ({took:.2?}): {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// `Aᵀ (A Aᵀ)⁻¹` through LU, independent of the crate's SVD.
fn min_norm_right_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let inv = (a * a.transpose()).lu().try_inverse().expect("A Aᵀ invertible");
    a.transpose() * inv
}

// 1
fn sparse_grid_parity() -> Check {
    let n = smolyak_grid(10, 2).map_err(|e| e.to_string())?.len();
    ensure(n == 221, || format!("{n} points, expected 221"))?;
    Ok("221 points for m=10, w=2".into())
}

// 2
fn pseudoinverse_correctness() -> Check {
    let mut rng = rng(2);
    let mut worst: f64 = 0.0;
    let mut deficient = 0;
    for case in 0..100 {
        let lo = if case % 2 == 0 { 2 } else { 1 };
        let r = rng.gen_range(lo..=12);
        let c = rng.gen_range(lo..=12);
        let a = if case % 2 == 0 {
            deficient += 1;
            let k = rng.gen_range(1..r.min(c));
            uniform(&mut rng, r, k) * uniform(&mut rng, k, c)
        } else {
            uniform(&mut rng, r, c)
        };
        let (x, _) = pseudoinverse_with_rank(&a).map_err(|e| e.to_string())?;
        let smax = spectral_norm(&a);
        let xnorm = spectral_norm(&x);
        let ax = &a * &x;
        let xa = &x * &a;
        let res = [
            (&ax * &a - &a).amax() / smax,
            (&xa * &x - &x).amax() / xnorm,
            (&ax - ax.transpose()).amax(),
            (&xa - xa.transpose()).amax(),
        ];
        for (k, v) in res.iter().enumerate() {
            worst = worst.max(*v);
            ensure(*v <= 1e-10, || {
                format!("case {case} ({r}x{c}) condition {} residual {v:e}", k + 1)
            })?;
        }
    }
    Ok(format!(
        "100 shapes ({deficient} rank-deficient), worst scaled residual {worst:.1e}"
    ))
}

// 3
fn surrogate_exactness() -> Check {
    let m = 10;
    let grid = smolyak_grid(m, 2).map_err(|e| e.to_string())?;
    let mut rng = rng(3);
    let c0 = rng.gen_range(-1.0..1.0);
    let b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let q0 = uniform(&mut rng, m, m);
    let q = (&q0 + q0.transpose()) * 0.5;
    let f = |t: &[f64]| {
        let t = DVector::from_column_slice(t);
        c0 + b.dot(&t) + t.dot(&(&q * &t))
    };
    let data = DMatrix::from_fn(1, grid.len(), |_, k| f(&grid.points[k]));
    let set = total_degree_set(m, 2).map_err(|e| e.to_string())?;
    let s = fit_gpce(&grid, &data, &set).map_err(|e| e.to_string())?;
    let (mut worst_val, mut worst_grad): (f64, f64) = (0.0, 0.0);
    let h = 1e-6;
    for _ in 0..100 {
        let t: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let v = s.eval(&t).map_err(|e| e.to_string())?[0];
        worst_val = worst_val.max((v - f(&t)).abs());
        let g = s.grad(&t).map_err(|e| e.to_string())?;
        for j in 0..m {
            let mut up = t.clone();
            let mut dn = t.clone();
            up[j] = (up[j] + h).min(1.0);
            dn[j] = (dn[j] - h).max(0.0);
            let fd = (s.eval(&up).map_err(|e| e.to_string())?[0] - s.eval(&dn).map_err(|e| e.to_string())?[0])
                / (up[j] - dn[j]);
            worst_grad = worst_grad.max((fd - g[(0, j)]).abs() / g[(0, j)].abs().max(1.0));
        }
    }
    ensure(worst_val <= 1e-10, || format!("pointwise error {worst_val:e}"))?;
    ensure(worst_grad <= 1e-6, || format!("gradient relative error {worst_grad:e}"))?;
    Ok(format!(
        "max pointwise error {worst_val:.1e}, max gradient error {worst_grad:.1e}"
    ))
}

struct Linear {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Linear {
    fn new(seed: u64) -> Self {
        let mut rng = rng(seed);
        let q1 = uniform(&mut rng, 6, 6).qr().q();
        let q2 = uniform(&mut rng, 10, 10).qr().q();
        let s = DMatrix::from_fn(6, 10, |i, j| if i == j { rng.gen_range(1.0..2.0) } else { 0.0 });
        Self {
            a: q1 * s * q2.transpose(),
            b: DVector::from_fn(6, |_, _| rng.gen_range(5.0..10.0)),
        }
    }

    fn eval(&self, t: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(t) + &self.b
    }

    fn rom(&self) -> Result<ReducedRom, String> {
        let grid = smolyak_grid(10, 2).map_err(|e| e.to_string())?;
        let space = ParameterSpace::unit(10);
        let snap = evaluate_design(&space, &grid.point_ids, &grid.points, self, 1).map_err(|e| e.to_string())?;
        build_rom(&snap, &grid, &space, &RomSettings::for_grid(&grid, 0.95)).map_err(|e| e.to_string())
    }

    fn reduced_jacobian(&self, rom: &ReducedRom) -> DMatrix<f64> {
        let inv_scale = DMatrix::from_diagonal(&DVector::from_iterator(
            6,
            rom.basis.standardization.scales.iter().map(|s| 1.0 / s),
        ));
        rom.basis.u.transpose() * inv_scale * &self.a
    }
}

impl ModelRunner for Linear {
    fn output_labels(&self) -> Vec<String> {
        (1..=6).map(|i| format!("y{i}")).collect()
    }

    fn run(&self, _: &str, t: &[f64]) -> ioredux_core::Result<Vec<f64>> {
        Ok(self.eval(t).iter().copied().collect())
    }
}

// 4
fn linear_end_to_end() -> Check {
    let model = Linear::new(4);
    let rom = model.rom()?;
    ensure(rom.p() == 6, || format!("p = {}, expected 6", rom.p()))?;
    let tau_oracle = min_norm_right_inverse(&model.reduced_jacobian(&rom));
    let tau_err = (&rom.directions - tau_oracle).amax();
    ensure(tau_err <= 1e-6, || format!("direction error {tau_err:e}"))?;

    let v = verify_directions(&rom, &model, 1.0, 1).map_err(|e| e.to_string())?;
    let v_err = (v - DMatrix::<f64>::identity(6, 6)).amax();
    ensure(v_err <= 1e-6, || {
        format!("verification deviates from identity by {v_err:e}")
    })?;

    let mut rng = rng(40);
    let mut plans = Vec::new();
    for _ in 0..20 {
        let t: Vec<f64> = (0..10).map(|_| rng.gen_range(0.4..0.6)).collect();
        plans.push(plan_for_target(&rom, model.eval(&t).as_slice()).map_err(|e| e.to_string())?);
    }
    evaluate_plans(&rom, &mut plans, &model, 1).map_err(|e| e.to_string())?;
    let plan_err = plans
        .iter()
        .flat_map(|p| p.relative_errors().unwrap_or_default())
        .fold(0.0f64, |a, e| a.max(e.abs()));
    ensure(plan_err <= 1e-6, || format!("planning relative error {plan_err:e}"))?;
    Ok(format!(
        "direction error {tau_err:.1e}, identity error {v_err:.1e}, planning error {plan_err:.1e}"
    ))
}

// 5
fn minimum_norm() -> Check {
    let model = Linear::new(5);
    let rom = model.rom()?;
    let j = &rom.jacobian;
    let null = DMatrix::<f64>::identity(10, 10) - min_norm_right_inverse(j) * j;
    let mut rng = rng(50);
    let mut slack = f64::INFINITY;
    for k in 0..rom.p() {
        let tau = rom.direction(k);
        for _ in 0..100 {
            let w = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
            let z = &tau + &null * w;
            let gap = z.norm() - tau.norm();
            slack = slack.min(gap);
            ensure(tau.norm() <= z.norm() + 1e-12, || {
                format!("direction {} beaten by a perturbed solution by {:e}", k + 1, -gap)
            })?;
        }
    }
    Ok(format!(
        "{} directions x 100 perturbations, smallest norm gap {slack:.2e}",
        rom.p()
    ))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ioredux")
}

fn ioredux(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin())
        .arg("--dir")
        .arg(dir)
        .args(args)
        .env_remove("IOREDUX_MODEL_CMD")
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if out.status.success() {
        Ok(stdout)
    } else {
        Err(format!(
            "ioredux {} exited {:?}: {}{}",
            args.join(" "),
            out.status.code(),
            stdout,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn full_pipeline(dir: &Path) -> Result<(), String> {
    ioredux(dir, &["sample"])?;
    ioredux(dir, &["evaluate", "--jobs", "4"])?;
    ioredux(dir, &["reduce"])?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = r
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|r| r.iter().map(String::from).collect())
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

// 6
fn nonlinear_verification() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_pipeline(dir.path())?;
    ioredux(dir.path(), &["verify", "--jobs", "4"])?;
    let (_, rows) = read_csv(&dir.path().join("verification.csv"))?;
    let p = rows.len();
    let (mut diag_lo, mut diag_hi, mut off): (f64, f64, f64) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| format!("bad cell {cell}"))?;
            if i == j {
                diag_lo = diag_lo.min(v);
                diag_hi = diag_hi.max(v);
            } else {
                off = off.max(v.abs());
            }
        }
    }
    ensure((0.9..=1.1).contains(&diag_lo) && (0.9..=1.1).contains(&diag_hi), || {
        format!("diagonal range [{diag_lo}, {diag_hi}]")
    })?;
    ensure(off <= 0.05, || format!("off-diagonal magnitude {off}"))?;
    Ok(format!(
        "p = {p}, diagonal in [{diag_lo:.4}, {diag_hi:.4}], max |off-diagonal| {off:.4}"
    ))
}

// 7
fn planning_behavior() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_pipeline(dir.path())?;
    let model = SyntheticModel::new(WorkflowConfig::default().model).map_err(|e| e.to_string())?;
    let center = model.space().from_unit(&[0.5; 10]).map_err(|e| e.to_string())?;
    let y0 = model.evaluate(&center).map_err(|e| e.to_string())?;
    let mut text = format!("target_id,{}\n", y0.labels.join(","));
    for (id, factor) in [("lean", 0.95), ("generous", 1.05)] {
        let mut v = y0.values.clone();
        *v.last_mut().unwrap() *= factor;
        let cells: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        text.push_str(&format!("{id},{}\n", cells.join(",")));
    }
    let targets = dir.path().join("targets.csv");
    std::fs::write(&targets, text).map_err(|e| e.to_string())?;
    ioredux(
        dir.path(),
        &["plan", "--targets", targets.to_str().unwrap(), "--evaluate", "--strict"],
    )?;

    let (header, rows) = read_csv(&dir.path().join("plans.csv"))?;
    let col = |name: &str| header.iter().position(|h| h == name).ok_or(format!("no column {name}"));
    let theta_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("theta_"))
        .map(|(i, _)| i)
        .collect();
    let num = |row: &Vec<String>, i: usize| row[i].parse::<f64>().map_err(|_| format!("bad cell {}", row[i]));
    let spend = col("achieved_spending")?;
    let mut worst: f64 = 0.0;
    for row in &rows {
        for (i, h) in header.iter().enumerate() {
            if h.starts_with("relerr_") {
                worst = worst.max(num(row, i)?.abs());
            }
        }
    }
    let distance: f64 = theta_cols
        .iter()
        .map(|&i| Ok((num(&rows[0], i)? - num(&rows[1], i)?).powi(2)))
        .sum::<Result<f64, String>>()?
        .sqrt();
    let (lean, generous) = (num(&rows[0], spend)?, num(&rows[1], spend)?);
    ensure(distance > 1e-3, || format!("plans coincide (distance {distance:e})"))?;
    ensure(worst <= 0.05, || format!("relative error {worst}"))?;
    ensure(lean < generous, || {
        format!("achieved spending not ordered: {lean} vs {generous}")
    })?;
    Ok(format!(
        "spending goals differ by {:.1}%, plan distance {distance:.3}, max relative error {worst:.2e}",
        (1.05 / 0.95 - 1.0) * 100.0
    ))
}

// 8
fn model_physics() -> Check {
    let cfg = WorkflowConfig::default().model;
    let model = SyntheticModel::new(cfg.clone()).map_err(|e| e.to_string())?;
    let traj = model.simulate(&model.space().upper).map_err(|e| e.to_string())?;
    let groups = cfg.groups.len();
    let mut drift: f64 = 0.0;
    for g in 0..groups {
        let n0 = traj.states[0].group_population(g);
        for s in &traj.states {
            drift = drift.max((s.group_population(g) - n0).abs() / n0);
        }
    }
    ensure(drift <= 1e-8, || format!("population drift {drift:e}"))?;

    let mut quiet = cfg;
    quiet.transmission.beta.iter_mut().for_each(|b| *b = 0.0);
    let quiet = SyntheticModel::new(quiet).map_err(|e| e.to_string())?;
    let t = quiet.simulate(&quiet.space().upper).map_err(|e| e.to_string())?;
    let any = t
        .states
        .iter()
        .flat_map(|s| &s.cumulative_infections)
        .any(|x| *x != 0.0);
    ensure(!any, || "infections with zero transmission".into())?;

    let solve = |h: f64| -> Result<f64, String> {
        let (_, xs) = rk4(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, 1.0, h, |_, _| Ok(())).map_err(|e| e.to_string())?;
        Ok(xs.last().unwrap()[0])
    };
    let reference = solve(1e-4)?;
    let err = |h: f64| solve(h).map(|x| (x - reference).abs());
    let ratio = err(0.1)? / err(0.05)?;
    ensure((12.0..=20.0).contains(&ratio), || {
        format!("RK4 convergence factor {ratio}")
    })?;
    Ok(format!(
        "population drift {drift:.1e}, zero-transmission infections 0, RK4 factor {ratio:.2}"
    ))
}

// 9
fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_pipeline(a.path())?;
    full_pipeline(b.path())?;
    for f in ["design.csv", "design.json", "snapshots.csv", "rom.json"] {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    Ok("design, snapshot and ROM artifacts byte-identical across two runs".into())
}
