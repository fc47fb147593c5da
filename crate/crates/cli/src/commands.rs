use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::{json, Value};

use nvb_core::analysis::{closure_accounting, verify_levels, verify_neighbor_rules, CheckResult};
use nvb_core::corr::{build_corresponding_sequence, verify_corr};
use nvb_core::driver::{self, RunConfig};
use nvb_core::generate::{self, apply_ref_policy};
use nvb_core::io::{parse_nvbm, to_nvbm};
use nvb_core::refine::{uniform, Dialect, UniformKind};
use nvb_core::stability::{
    check_conditions, compute_weights_with, measure_h1_stability_with, NodeWeights, PowerOptions,
};
use nvb_core::Mesh;

use crate::{
    AnalyzeArgs, Cli, CliError, Command, CorrArgs, Format, GenerateArgs, MeshArgs, Outcome, RefineArgs, StabilityArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cli: &Cli) -> Result<Outcome> {
    fs::create_dir_all(&cli.out).map_err(|source| CliError::Io { path: cli.out.clone(), source })?;
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Refine(a) => refine(cli, a),
        Command::Analyze(a) => analyze(cli, a),
        Command::Stability(a) => stability(cli, a),
        Command::CorrCheck(a) => corr_check(cli, a),
    }
}

fn name_of<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

fn read_mesh_file(path: &Path) -> Result<Mesh> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_nvbm(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// A path to an existing file, otherwise a built-in name.
fn load_named(name: &str) -> Result<Mesh> {
    let path = Path::new(name);
    if path.is_file() {
        return read_mesh_file(path);
    }
    if name.ends_with(".nvbm") || name.contains(std::path::MAIN_SEPARATOR) {
        return Err(CliError::Usage(format!("{name}: no such mesh file")));
    }
    Ok(generate::builtin(name)?)
}

fn load_mesh(cli: &Cli, m: &MeshArgs) -> Result<Mesh> {
    Ok(apply_ref_policy(&load_named(&m.mesh)?, m.ref_edges.policy(cli.seed)))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}

fn write_json(path: PathBuf, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|source| CliError::Json { path: path.clone(), source })?;
    text.push('\n');
    write(path, &text)
}

fn write_csv<R: IntoIterator<Item = Vec<String>>>(path: PathBuf, header: &[&str], rows: R) -> Result<()> {
    let err = |source| CliError::Csv { path: path.clone(), source };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<Outcome> {
    let mesh = load_mesh(cli, &a.mesh)?;
    let file = match &a.name {
        Some(n) => n.clone(),
        None => {
            let stem = Path::new(&a.mesh.mesh).file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
            format!("{stem}.nvbm")
        }
    };
    let path = cli.out.join(file);
    write(path.clone(), &to_nvbm(&mesh))?;
    println!("{}: {} vertices, {} elements", path.display(), mesh.num_nodes(), mesh.num_elements());
    Ok(Outcome::Pass)
}

fn refine(cli: &Cli, a: &RefineArgs) -> Result<Outcome> {
    let initial = load_mesh(cli, &a.mesh)?;
    let config = RunConfig {
        dialect: a.dialect.into(),
        policy: a.policy.policy(),
        strategy: a.marking.strategy(cli.seed),
        edge_rule: a.marking.edge_rule(cli.seed),
        steps: a.marking.steps,
    };
    let run = driver::run(&initial, &config)?;
    for (l, m) in run.meshes.iter().enumerate() {
        write(cli.out.join(format!("step_{l:03}.nvbm")), &to_nvbm(m))?;
    }
    let counts = run.element_counts();
    let ledger = closure_accounting(&counts, &run.marked_counts(), None)?;
    let rows = run.records.iter().map(|r| {
        let rho = ledger.rows[r.step + 1].rho.map(|x| format!("{x:.6}")).unwrap_or_default();
        vec![
            (r.step + 1).to_string(),
            r.marked.to_string(),
            r.elements_after.to_string(),
            r.closure_iters.to_string(),
            rho,
        ]
    });
    write_csv(cli.out.join("trace.csv"), &["step", "marked", "elements", "closure_iters", "rho"], rows)?;
    let summary = json!({
        "mesh": a.mesh.mesh,
        "ref_edges": name_of(&a.mesh.ref_edges),
        "seed": cli.seed,
        "dialect": config.dialect,
        "policy": name_of(&a.policy),
        "marking": config.strategy,
        "edge_rule": config.edge_rule,
        "steps": config.steps,
        "element_counts": counts,
        "max_rho": ledger.max_rho,
        "records": run.records,
    });
    write_json(cli.out.join("run.json"), &summary)?;
    println!(
        "{} steps: {} -> {} elements, max rho {}",
        config.steps,
        counts[0],
        counts[counts.len() - 1],
        ledger.max_rho.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
    );
    Ok(Outcome::Pass)
}

fn step_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    for e in entries {
        let p = e.map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?.path();
        let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if name.starts_with("step_") && name.ends_with(".nvbm") {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("{}: no step_*.nvbm files", dir.display())));
    }
    Ok(files)
}

fn read_marked(path: &Path) -> Result<Vec<usize>> {
    let err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let col = r
        .headers()
        .map_err(err)?
        .iter()
        .position(|h| h == "marked")
        .ok_or_else(|| CliError::Usage(format!("{}: no `marked` column", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(err)?;
        let cell = rec.get(col).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        let v = cell
            .parse()
            .map_err(|_| CliError::Usage(format!("{}: row {}: bad marked count {cell:?}", path.display(), i + 2)))?;
        out.push(v);
    }
    Ok(out)
}

fn run_dialect(dir: &Path) -> Result<Option<Dialect>> {
    let path = dir.join("run.json");
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    let v: Value = serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.clone(), source })?;
    match v.get("dialect") {
        None => Ok(None),
        Some(d) => serde_json::from_value(d.clone()).map(Some).map_err(|source| CliError::Json { path, source }),
    }
}

fn check_rows(file: &str, checks: &[CheckResult]) -> Vec<Vec<String>> {
    checks
        .iter()
        .map(|c| {
            let w = c.witnesses.first().map(|w| w.detail.clone()).unwrap_or_default();
            vec![
                file.to_string(),
                c.name.clone(),
                c.passed.to_string(),
                c.checked.to_string(),
                c.violations.to_string(),
                w,
            ]
        })
        .collect()
}

fn analyze(cli: &Cli, a: &AnalyzeArgs) -> Result<Outcome> {
    let mut files = Vec::new();
    for p in &a.inputs {
        if p.is_dir() {
            files.extend(step_files(p)?);
        } else {
            files.push(p.clone());
        }
    }
    let run_dir = match a.inputs.as_slice() {
        [d] if d.is_dir() => Some(d.clone()),
        _ => None,
    };
    let dialect = match (a.dialect, &run_dir) {
        (Some(d), _) => d.into(),
        (None, Some(dir)) => run_dialect(dir)?.unwrap_or(Dialect::RefineNvb),
        (None, None) => Dialect::RefineNvb,
    };
    let meshes = files.iter().map(|f| read_mesh_file(f)).collect::<Result<Vec<_>>>()?;
    let initial = match &a.initial {
        Some(name) => load_named(name)?,
        None => meshes[0].clone(),
    };
    let neighbor_rules = dialect != Dialect::Refine;

    let mut failures = Vec::new();
    let mut reports = Vec::new();
    let mut csv_rows = Vec::new();
    let mut max_jump = 0;
    for (f, m) in files.iter().zip(&meshes) {
        let name = f.display().to_string();
        let levels = verify_levels(m, &initial, dialect == Dialect::RefineNvb);
        max_jump = max_jump.max(levels.max_level_jump);
        csv_rows.extend(check_rows(&name, &levels.checks));
        let mut checks: Vec<&CheckResult> = levels.checks.iter().collect();
        let neighbors = neighbor_rules.then(|| verify_neighbor_rules(m, &initial));
        if let Some(n) = &neighbors {
            csv_rows.extend(check_rows(&name, &n.checks));
            checks.extend(&n.checks);
        }
        for c in checks.into_iter().filter(|c| !c.passed) {
            failures.push(format!("{name}: {} ({} violations)", c.name, c.violations));
        }
        reports.push(json!({
            "file": name,
            "elements": m.num_elements(),
            "levels": levels,
            "neighbor_rules": neighbors,
        }));
    }

    let trace = a.trace.clone().or_else(|| run_dir.map(|d| d.join("trace.csv")).filter(|p| p.is_file()));
    let ledger = match &trace {
        Some(path) => {
            let marked = read_marked(path)?;
            let counts: Vec<usize> = meshes.iter().map(Mesh::num_elements).collect();
            let ledger = closure_accounting(&counts, &marked, a.rho_bound)?;
            if !ledger.counting_holds {
                failures.push("closure ledger: more marked elements than new elements".into());
            }
            if !ledger.exceeding.is_empty() {
                failures.push(format!("closure ledger: rho above the bound at steps {:?}", ledger.exceeding));
            }
            write(cli.out.join("ledger.csv"), &ledger.to_csv())?;
            Some(ledger)
        }
        None => None,
    };

    match cli.format {
        Format::Json => write_json(
            cli.out.join("analysis.json"),
            &json!({
                "dialect": dialect,
                "passed": failures.is_empty(),
                "max_level_jump": max_jump,
                "failures": failures,
                "meshes": reports,
                "ledger": ledger,
            }),
        )?,
        Format::Csv => write_csv(
            cli.out.join("analysis.csv"),
            &["file", "check", "passed", "checked", "violations", "first_witness"],
            csv_rows,
        )?,
    }
    println!("{} meshes, max level jump {max_jump}, {} failed checks", meshes.len(), failures.len());
    Ok(match failures.first() {
        None => Outcome::Pass,
        Some(f) => Outcome::Violation(f.clone()),
    })
}

fn read_weights(path: &Path, n: usize) -> Result<NodeWeights> {
    let err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let col = r
        .headers()
        .map_err(err)?
        .iter()
        .position(|h| h == "d")
        .ok_or_else(|| CliError::Usage(format!("{}: no `d` column", path.display())))?;
    let mut d = Vec::with_capacity(n);
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(err)?;
        let cell = rec.get(col).unwrap_or("").trim();
        match cell.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => d.push(v),
            _ => return Err(CliError::Usage(format!("{}: row {}: bad weight {cell:?}", path.display(), i + 2))),
        }
    }
    if d.len() != n {
        return Err(CliError::Usage(format!("{}: {} weights for {n} nodes", path.display(), d.len())));
    }
    Ok(NodeWeights::from_values(d))
}

fn stability(cli: &Cli, a: &StabilityArgs) -> Result<Outcome> {
    let mesh = load_mesh(cli, &a.mesh)?;
    let mut weights = match &a.weights {
        Some(p) => read_weights(p, mesh.num_nodes())?,
        None => compute_weights_with(&mesh, a.path_rule.into())?,
    };
    if let Some(ratio) = a.debug_inject_ratio {
        if !(ratio >= 1.0) {
            return Err(CliError::Usage(format!("injected ratio {ratio} must be at least 1")));
        }
        let v = mesh.elements()[0].v;
        let mut d = weights.d.clone();
        d[v[0]] = ratio * d[v[1]].max(d[v[2]]);
        weights = NodeWeights::from_values(d);
    }
    let report = check_conditions(&mesh, &weights);
    let measurement = match a.fine_levels {
        0 => None,
        k => {
            let fine = (0..k).fold(mesh.clone(), |m, _| uniform(&m, UniformKind::Bisec3));
            let opts = PowerOptions { seed: cli.seed, ..PowerOptions::default() };
            Some(measure_h1_stability_with(&mesh, &fine, opts)?)
        }
    };

    write(cli.out.join("weights.csv"), &weights.to_csv(&mesh))?;
    match cli.format {
        Format::Json => write_json(
            cli.out.join("stability.json"),
            &json!({
                "mesh": a.mesh.mesh,
                "path_rule": name_of(&a.path_rule),
                "fine_levels": a.fine_levels,
                "nodes": mesh.num_nodes(),
                "elements": mesh.num_elements(),
                "passed": report.passed(),
                "measurement": measurement,
                "report": report,
            }),
        )?,
        Format::Csv => write_csv(
            cli.out.join("stability.csv"),
            &["elem", "max_ratio", "s", "lambda_min", "lambda_min_eigen", "c6", "c7", "c8", "passed"],
            report.elements.iter().map(|c| {
                vec![
                    c.elem.to_string(),
                    c.max_ratio.to_string(),
                    c.s.to_string(),
                    c.lambda_min.to_string(),
                    c.lambda_min_eigen.to_string(),
                    c.c6.to_string(),
                    c.c7.to_string(),
                    c.c8.to_string(),
                    c.passed.to_string(),
                ]
            }),
        )?,
    }
    let constant = measurement.as_ref().map(|m| format!("{:.6}", m.constant)).unwrap_or_else(|| "-".into());
    println!(
        "{} elements: max ratio {:.4}, max S {:.4}, min lambda {:.4}, {} violations, measured constant {constant}",
        mesh.num_elements(),
        report.c5_realized,
        report.max_s,
        report.min_lambda_min,
        report.violations
    );
    Ok(match report.elements.iter().find(|c| !c.passed) {
        None => Outcome::Pass,
        Some(c) => Outcome::Violation(format!(
            "element {}: ratio {}, S {}, lambda_min {} ({} violations)",
            c.elem, c.max_ratio, c.s, c.lambda_min, report.violations
        )),
    })
}

fn corr_check(cli: &Cli, a: &CorrArgs) -> Result<Outcome> {
    let initial = load_mesh(cli, &a.mesh)?;
    let policy = a.policy.policy();
    let config = RunConfig {
        dialect: Dialect::Refine,
        policy: policy.clone(),
        strategy: a.marking.strategy(cli.seed),
        edge_rule: a.marking.edge_rule(cli.seed),
        steps: a.marking.steps,
    };
    let run = driver::run(&initial, &config)?;
    let seq = build_corresponding_sequence(&initial, &run.markings, &policy)?;

    let mut failures = Vec::new();
    let mut steps = Vec::new();
    for l in 0..seq.red.len() {
        let report = verify_corr(&seq.maps[l], &seq.red[l], &seq.shadow[l]);
        let marked = run.markings.get(l).map(|m| m.elements.len());
        let shadow_marked = seq.shadow_markings.get(l).map(|m| m.elements.len());
        let marked_ok = match (marked, shadow_marked) {
            (Some(m), Some(s)) => s <= 2 * m,
            _ => true,
        };
        if let Some(c) = report.first_violation() {
            failures.push(format!("step {l}: {} ({} violations)", c.name, c.violations));
        }
        if !marked_ok {
            failures.push(format!("step {l}: shadow marks more than twice the red marks"));
        }
        steps.push((l, marked, shadow_marked, report, marked_ok));
    }

    let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    match cli.format {
        Format::Json => write_json(
            cli.out.join("corr.json"),
            &json!({
                "mesh": a.mesh.mesh,
                "policy": name_of(&a.policy),
                "passed": failures.is_empty(),
                "failures": failures,
                "steps": steps.iter().map(|(l, m, s, r, ok)| json!({
                    "step": l,
                    "red_elements": seq.red[*l].num_elements(),
                    "shadow_elements": seq.shadow[*l].num_elements(),
                    "marked": m,
                    "shadow_marked": s,
                    "marked_bound_holds": ok,
                    "report": r,
                })).collect::<Vec<_>>(),
            }),
        )?,
        Format::Csv => write_csv(
            cli.out.join("corr.csv"),
            &["step", "red_elements", "shadow_elements", "marked", "shadow_marked", "passed"],
            steps.iter().map(|(l, m, s, r, ok)| {
                vec![
                    l.to_string(),
                    seq.red[*l].num_elements().to_string(),
                    seq.shadow[*l].num_elements().to_string(),
                    opt(*m),
                    opt(*s),
                    (r.passed() && *ok).to_string(),
                ]
            }),
        )?,
    }
    println!(
        "{} steps: {} -> {} elements, {} failed checks",
        run.records.len(),
        seq.red[0].num_elements(),
        seq.red[seq.red.len() - 1].num_elements(),
        failures.len()
    );
    Ok(match failures.first() {
        None => Outcome::Pass,
        Some(f) => Outcome::Violation(f.clone()),
    })
}
