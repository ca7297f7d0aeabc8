use std::path::Path;

use ioredux_core::model::{evaluate_design, ExternalRunner, EXTERNAL_COMMAND_ENV};
use ioredux_core::pipeline::{evaluate_plans, export_loadings};
use ioredux_core::sparsegrid::{smolyak_grid_capped, DesignManifest};
use ioredux_core::{
    build_rom, plan_for_target, verify_directions, ModelRunner, PlanResult, ReducedRom, RomSettings, SnapshotMatrix,
    SparseGrid, SyntheticModel,
};

use crate::exit::{CliError, CliResult, Stage, CONFIG, EVALUATION, PROVENANCE, REDUCTION, TARGETS, VERIFICATION};
use crate::files::{check_input, check_listed, labelled_csv, read_file, sig4, write_file, LoadedConfig, Recorder};
use crate::*;

pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = LoadedConfig::load(cli.config.as_deref())?;
    let dir = cli.dir.as_path();
    match cli.command {
        Command::Sample(a) => sample(&cfg, dir, a),
        Command::Evaluate(a) => evaluate(&cfg, dir, a),
        Command::Reduce(a) => reduce(&cfg, dir, a),
        Command::Verify(a) => verify(&cfg, dir, a),
        Command::Plan(a) => plan(&cfg, dir, a),
        Command::Report => report(&cfg, dir),
    }
}

fn sample(cfg: &LoadedConfig, dir: &Path, args: SampleArgs) -> CliResult<()> {
    let c = &cfg.config;
    let level = args.level.unwrap_or(c.design.level);
    let grid = smolyak_grid_capped(c.dim(), level, c.design.max_points).stage(CONFIG)?;
    let rec = Recorder::start("sample", cfg);
    let csv_path = dir.join(DESIGN_CSV);
    let json_path = dir.join(DESIGN_JSON);
    write_file(&csv_path, &grid.design_csv())?;
    write_file(&json_path, &pretty(&grid.manifest())?)?;
    rec.finish(&[&csv_path, &json_path])?;
    println!(
        "design: {} points (dim {}, level {level}) -> {}",
        grid.len(),
        grid.dim,
        csv_path.display()
    );
    Ok(())
}

fn evaluate(cfg: &LoadedConfig, dir: &Path, args: JobsArgs) -> CliResult<()> {
    let mut rec = Recorder::start("evaluate", cfg);
    let (grid, design_hash) = load_design(cfg, dir)?;
    rec.input(DESIGN_CSV, design_hash);
    let runner = make_runner(cfg, dir)?;
    let space = cfg.config.model.parameter_space().stage(CONFIG)?;
    log::info!("evaluating {} design points with {} job(s)", grid.len(), args.jobs);
    let snapshots =
        evaluate_design(&space, &grid.point_ids, &grid.points, runner.as_ref(), args.jobs).stage(EVALUATION)?;
    let path = dir.join(SNAPSHOTS_CSV);
    let mut bytes = Vec::new();
    snapshots.write_csv(&mut bytes).stage(EVALUATION)?;
    write_file(&path, &bytes)?;
    rec.finish(&[&path])?;
    println!(
        "snapshots: {} outputs x {} points -> {}",
        snapshots.nrows(),
        snapshots.ncols(),
        path.display()
    );
    Ok(())
}

fn reduce(cfg: &LoadedConfig, dir: &Path, args: ReduceArgs) -> CliResult<()> {
    let c = &cfg.config;
    let mut rec = Recorder::start("reduce", cfg);
    let (grid, design_hash) = load_design(cfg, dir)?;
    let snap_path = dir.join(SNAPSHOTS_CSV);
    let snap_hash = check_input(&snap_path)?;
    let snapshots = SnapshotMatrix::read_csv(read_file(&snap_path)?.as_slice(), &snap_path.display().to_string())
        .stage(REDUCTION)?;
    rec.input(DESIGN_CSV, design_hash.clone());
    rec.input(SNAPSHOTS_CSV, snap_hash.clone());

    let threshold = args.threshold.unwrap_or(c.reduce.variance_threshold);
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CliError::new(CONFIG, format!("threshold {threshold} not in (0, 1]")));
    }
    let settings = RomSettings {
        variance_threshold: threshold,
        theta0: c.theta0(),
        degree: c.degree(),
    };
    let space = c.model.parameter_space().stage(CONFIG)?;
    let mut rom = build_rom(&snapshots, &grid, &space, &settings).stage(REDUCTION)?;
    rom.input_hashes.insert(DESIGN_CSV.into(), design_hash);
    rom.input_hashes.insert(SNAPSHOTS_CSV.into(), snap_hash);
    for w in &rom.diagnostics.warnings {
        eprintln!("warning: {w}");
    }

    let rom_path = dir.join(ROM_JSON);
    let summary_path = dir.join(ROM_SUMMARY);
    write_file(&rom_path, &rom.to_json().stage(REDUCTION)?)?;
    let summary = rom_summary(&rom);
    write_file(&summary_path, summary.as_bytes())?;
    rec.finish(&[&rom_path, &summary_path])?;
    print!("{summary}");
    Ok(())
}

fn rom_summary(rom: &ReducedRom) -> String {
    let d = &rom.diagnostics;
    let svs: Vec<String> = rom.basis.singular_values.iter().map(|s| sig4(*s)).collect();
    let mut s = String::new();
    s.push_str(&format!("retained components p: {}\n", rom.p()));
    s.push_str(&format!("retained variance: {}\n", sig4(rom.basis.retained_variance)));
    s.push_str(&format!("singular values: {}\n", svs.join(" ")));
    s.push_str(&format!("jacobian rank: {}\n", d.jacobian_rank));
    s.push_str(&format!("surrogate fit residual: {}\n", sig4(d.fit_residual)));
    s.push_str(&format!("direction residual: {}\n", sig4(d.direction_residual)));
    for w in &d.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}

fn verify(cfg: &LoadedConfig, dir: &Path, args: VerifyArgs) -> CliResult<()> {
    let v = &cfg.config.verify;
    let mut rec = Recorder::start("verify", cfg);
    let (rom, rom_hash) = load_rom(dir)?;
    rec.input(ROM_JSON, rom_hash);
    let runner = make_runner(cfg, dir)?;
    check_compatible(cfg, &rom, runner.as_ref())?;
    let delta = args.delta.unwrap_or(v.delta);
    let m = verify_directions(&rom, runner.as_ref(), delta, args.jobs).stage(VERIFICATION)?;

    let p = rom.p();
    let mut worst_diag: f64 = 0.0;
    let mut worst_off: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i == j {
                worst_diag = worst_diag.max((m[(i, j)] - 1.0).abs());
            } else {
                worst_off = worst_off.max(m[(i, j)].abs());
            }
        }
    }
    let pass = worst_diag <= v.diagonal_tolerance && worst_off <= v.off_diagonal_tolerance;

    let path = dir.join(VERIFICATION_CSV);
    let mut header = vec!["component".to_string()];
    header.extend((1..=p).map(|j| format!("tau_{j}")));
    let labels: Vec<String> = (1..=p).map(|i| format!("pc_{i}")).collect();
    let rows: Vec<Vec<f64>> = (0..p).map(|i| m.row(i).iter().copied().collect()).collect();
    write_file(&path, &labelled_csv(&header, &labels, &rows))?;
    rec.finish(&[&path])?;

    println!("verification matrix (delta = {delta}):");
    for row in &rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{:>10}", sig4(*x))).collect();
        println!("  {}", cells.join(" "));
    }
    println!(
        "max |diag - 1| = {} (tol {}), max |off-diag| = {} (tol {}): {}",
        sig4(worst_diag),
        v.diagonal_tolerance,
        sig4(worst_off),
        v.off_diagonal_tolerance,
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::new(VERIFICATION, "verification matrix outside tolerance"))
    }
}

fn plan(cfg: &LoadedConfig, dir: &Path, args: PlanArgs) -> CliResult<()> {
    let mut rec = Recorder::start("plan", cfg);
    let (rom, rom_hash) = load_rom(dir)?;
    rec.input(ROM_JSON, rom_hash);
    let targets_bytes = read_file(&args.targets).map_err(|e| CliError::new(TARGETS, e.message))?;
    rec.input(
        &args.targets.display().to_string(),
        ioredux_core::artifact::sha256_hex(&targets_bytes),
    );
    let targets = read_targets(&targets_bytes, &args.targets, &rom.output_labels)?;

    let mut plans = targets
        .iter()
        .map(|(_, y)| plan_for_target(&rom, y))
        .collect::<Result<Vec<PlanResult>, _>>()
        .stage(TARGETS)?;
    if args.evaluate {
        let runner = make_runner(cfg, dir)?;
        check_compatible(cfg, &rom, runner.as_ref())?;
        evaluate_plans(&rom, &mut plans, runner.as_ref(), args.jobs).stage(EVALUATION)?;
    }

    let path = dir.join(PLANS_CSV);
    write_file(&path, &plans_csv(&rom, &targets, &plans))?;
    rec.finish(&[&path])?;

    for ((id, _), plan) in targets.iter().zip(&plans) {
        let theta: Vec<String> = plan.theta_plan.iter().map(|t| sig4(*t)).collect();
        println!("{id}: theta = [{}]", theta.join(", "));
        if let Some(errs) = plan.relative_errors() {
            let e: Vec<String> = errs.iter().map(|x| sig4(*x)).collect();
            println!("{id}: relative error = [{}]", e.join(", "));
        }
        for w in &plan.warnings {
            eprintln!("warning: {id}: {w}");
        }
    }
    let unreachable = plans.iter().filter(|p| !p.reachable()).count();
    if args.strict && unreachable > 0 {
        return Err(CliError::new(
            TARGETS,
            format!("{unreachable} target(s) not reachable inside the parameter box"),
        ));
    }
    Ok(())
}

type Targets = Vec<(String, Vec<f64>)>;

fn read_targets(bytes: &[u8], path: &Path, labels: &[String]) -> CliResult<Targets> {
    let bad = |reason: String| CliError::new(TARGETS, format!("malformed targets {}: {reason}", path.display()));
    let mut rdr = csv::Reader::from_reader(bytes);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("target_id")
        .chain(labels.iter().map(String::as_str))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(bad(format!("header must be {}", expected.join(","))));
    }
    let mut out: Targets = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let id = rec[0].to_string();
        if out.iter().any(|(o, _)| *o == id) {
            return Err(bad(format!("duplicate target_id {id}")));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("target {id}: bad value {f:?}"))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        out.push((id, values));
    }
    if out.is_empty() {
        return Err(bad("no targets".into()));
    }
    Ok(out)
}

fn plans_csv(rom: &ReducedRom, targets: &Targets, plans: &[PlanResult]) -> Vec<u8> {
    let names = &rom.space.names;
    let labels = &rom.output_labels;
    let mut header = vec!["target_id".to_string(), "reachable".to_string()];
    header.extend(names.iter().map(|n| format!("theta_{n}")));
    header.extend(names.iter().map(|n| format!("physical_{n}")));
    header.extend(names.iter().map(|n| format!("clamped_{n}")));
    header.extend((1..=rom.p()).map(|j| format!("a_{j}")));
    header.extend(labels.iter().map(|l| format!("target_{l}")));
    header.extend(labels.iter().map(|l| format!("predicted_{l}")));
    header.extend(labels.iter().map(|l| format!("achieved_{l}")));
    header.extend(labels.iter().map(|l| format!("relerr_{l}")));

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for ((id, _), p) in targets.iter().zip(plans) {
        let num = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let physical = rom.space.from_unit(&p.theta_plan).unwrap_or_default();
        let blank = vec![String::new(); labels.len()];
        let mut rec = vec![id.clone(), p.reachable().to_string()];
        rec.extend(num(&p.theta_plan));
        rec.extend(num(&physical));
        rec.extend(p.clamped.iter().map(|c| c.to_string()));
        rec.extend(num(&p.coefficients));
        rec.extend(num(&p.target));
        rec.extend(num(&p.predicted_outputs));
        rec.extend(p.achieved_outputs.as_deref().map(num).unwrap_or_else(|| blank.clone()));
        rec.extend(p.relative_errors().as_deref().map(num).unwrap_or(blank));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn report(cfg: &LoadedConfig, dir: &Path) -> CliResult<()> {
    let mut rec = Recorder::start("report", cfg);
    let (rom, rom_hash) = load_rom(dir)?;
    rec.input(ROM_JSON, rom_hash);
    let p = rom.p();
    let components: Vec<String> = (1..=p).map(|j| format!("pc_{j}")).collect();

    let loadings = export_loadings(&rom);
    let mut header = vec!["output".to_string()];
    header.extend(components.iter().cloned());
    let rows: Vec<Vec<f64>> = (0..loadings.nrows())
        .map(|i| loadings.row(i).iter().copied().collect())
        .collect();
    let loadings_path = dir.join(LOADINGS_CSV);
    write_file(&loadings_path, &labelled_csv(&header, &rom.output_labels, &rows))?;

    let mut header = vec!["parameter".to_string()];
    header.extend((1..=p).map(|j| format!("tau_{j}")));
    let rows: Vec<Vec<f64>> = (0..rom.directions.nrows())
        .map(|i| rom.directions.row(i).iter().copied().collect())
        .collect();
    let directions_path = dir.join(DIRECTIONS_CSV);
    write_file(&directions_path, &labelled_csv(&header, &rom.space.names, &rows))?;
    rec.finish(&[&loadings_path, &directions_path])?;
    println!(
        "loadings -> {}, directions -> {}",
        loadings_path.display(),
        directions_path.display()
    );
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::new(CONFIG, e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn load_design(cfg: &LoadedConfig, dir: &Path) -> CliResult<(SparseGrid, String)> {
    let csv_path = dir.join(DESIGN_CSV);
    let json_path = dir.join(DESIGN_JSON);
    let hash = check_input(&csv_path)?;
    check_listed(&json_path, &csv_path)?;
    let manifest: DesignManifest = serde_json::from_slice(&read_file(&json_path)?)
        .map_err(|e| CliError::new(PROVENANCE, format!("{}: {e}", json_path.display())))?;
    let grid = SparseGrid::read_design(
        read_file(&csv_path)?.as_slice(),
        &manifest,
        &csv_path.display().to_string(),
    )
    .stage(PROVENANCE)?;
    if grid.dim != cfg.config.dim() {
        return Err(CliError::new(
            CONFIG,
            format!(
                "design has dimension {}, config defines {} parameters",
                grid.dim,
                cfg.config.dim()
            ),
        ));
    }
    Ok((grid, hash))
}

fn load_rom(dir: &Path) -> CliResult<(ReducedRom, String)> {
    let path = dir.join(ROM_JSON);
    let hash = check_input(&path)?;
    let rom = ReducedRom::from_json(&read_file(&path)?)
        .map_err(|e| CliError::new(PROVENANCE, format!("{}: {e}", path.display())))?;
    Ok((rom, hash))
}

/// The ROM must describe the same parameters and outputs the runner uses.
fn check_compatible(cfg: &LoadedConfig, rom: &ReducedRom, runner: &dyn ModelRunner) -> CliResult<()> {
    let space = cfg.config.model.parameter_space().stage(CONFIG)?;
    if space != rom.space || runner.output_labels() != rom.output_labels {
        return Err(CliError::new(
            PROVENANCE,
            "the ROM was built for a different parameter box or output list than the current config",
        ));
    }
    Ok(())
}

fn make_runner(cfg: &LoadedConfig, dir: &Path) -> CliResult<Box<dyn ModelRunner>> {
    let c = &cfg.config;
    let from_env = std::env::var(EXTERNAL_COMMAND_ENV)
        .ok()
        .filter(|s| !s.trim().is_empty());
    let external = c.external.as_ref();
    let command = from_env.or_else(|| external.map(|e| e.command.clone()));
    match command {
        Some(command) => {
            let workdir = external
                .and_then(|e| e.workdir.as_ref())
                .map(|w| cfg.base_dir().join(w))
                .unwrap_or_else(|| dir.join("external"));
            log::info!("external model: {command} (workdir {})", workdir.display());
            Ok(Box::new(ExternalRunner::new(
                command,
                workdir,
                c.dim(),
                c.model.output_labels(),
            )))
        }
        None => Ok(Box::new(SyntheticModel::new(c.model.clone()).stage(CONFIG)?)),
    }
}
