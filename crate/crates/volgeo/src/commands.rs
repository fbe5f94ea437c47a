//! Subcommand implementations. Each returns the process exit code on
//! success; configuration and IO problems come back as [`CliError`].

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use volgeo_core::diagnostics::{self, LadderRow};
use volgeo_core::pde::Margins;
use volgeo_core::{fcheck, oracle, solver};
use volgeo_core::{Field, Grid, Layered, Metric, ProblemData, Target};

use crate::config::{Format, Mode, RunConfig};
use crate::error::{exit, CliError, Result};
use crate::output;

fn margins_json(m: &Margins) -> Value {
    json!({
        "min_utt": m.min_utt,
        "min_b": m.min_b,
        "min_q": m.min_q,
        "max_q": m.max_q,
        "min": m.min(),
        "max_margin": m.max_margin,
        "worst": m.worst.to_string(),
    })
}

fn row_json(row: &LadderRow) -> Value {
    let mut obj = serde_json::Map::new();
    for (name, v) in LadderRow::COLUMNS.iter().zip(row.values()) {
        let value = match *name {
            "converged" => json!(row.converged),
            "newton_iterations" => json!(row.newton_iterations),
            _ => json!(v),
        };
        obj.insert(name.to_string(), value);
    }
    Value::Object(obj)
}

/// Prints `summary` and, if JSON output is enabled, writes it to `name`.
fn emit(cfg: &RunConfig, name: &str, summary: &Value) -> Result<()> {
    // A closed pipe on stdout is not an error; the files are still written.
    let _ = writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(summary).expect("serializable summary")
    );
    if cfg.output.wants(Format::Json) {
        output::ensure_dir(&cfg.output.directory)?;
        output::write_json(&cfg.output.directory.join(name), summary)?;
    }
    Ok(())
}

pub fn solve(cfg: &RunConfig) -> Result<u8> {
    let p = cfg.problem()?;
    let scfg = cfg.solver.to_config()?;
    let lambda = scfg.bulge.unwrap_or_else(|| solver::default_bulge(&p));
    let start = solver::initial_path(&p, lambda)?;
    let r = solver::newton_solve(&p, &start, &scfg)?;
    let row = LadderRow::from_solve(p.target().level(), &r, &p);
    let summary = json!({
        "mode": cfg.problem.mode,
        "level": p.target().level(),
        "bulge": lambda,
        "status": format!("{:?}", r.status),
        "converged": r.converged(),
        "iterations": r.iterations,
        "residual": r.residual,
        "history": r.history,
        "margins": margins_json(&r.margins),
        "diagnostics": row_json(&row),
        "max_h": diagnostics::h_quantity(&r.u, &p, cfg.diagnostics.h_coefficient).max_value(),
        "formal_energy": p.b() != 0.0,
    });
    if cfg.output.wants(Format::Field) {
        output::ensure_dir(&cfg.output.directory)?;
        output::write_field(&cfg.output.directory.join("solution.field"), &r.u)?;
    }
    emit(cfg, "solve.json", &summary)?;
    Ok(if r.converged() {
        exit::OK
    } else {
        exit::NOT_CONVERGED
    })
}

pub fn ladder(cfg: &RunConfig) -> Result<u8> {
    if cfg.problem.mode == Mode::FixedF {
        return Err(CliError::config(
            "`ladder` needs problem.mode epsilon-ladder or degenerate-f",
        ));
    }
    let p = cfg.problem()?;
    let scfg = cfg.solver.to_config()?;
    let run = solver::epsilon_ladder(&p, &scfg)?;
    let dir = &cfg.output.directory;
    if !cfg.output.formats.is_empty() {
        output::ensure_dir(dir)?;
    }
    if cfg.output.wants(Format::Csv) {
        output::write_ladder_csv(&dir.join("ladder.csv"), &run.report)?;
    }
    let mut fields = Vec::new();
    if cfg.output.wants(Format::Field) {
        for (k, (_, u)) in run.solutions.iter().enumerate() {
            let name = format!("rung_{k:02}.field");
            output::write_field(&dir.join(&name), u)?;
            fields.push(name);
        }
    }
    let max_h: Vec<f64> = run
        .solutions
        .iter()
        .map(|(level, u)| {
            let rung = p.with_level(*level).expect("level validated by the ladder");
            diagnostics::h_quantity(u, &rung, cfg.diagnostics.h_coefficient).max_value()
        })
        .collect();
    let summary = json!({
        "mode": cfg.problem.mode,
        "shifted": run.report.shifted,
        "formal_energy": run.report.formal_energy,
        "all_converged": run.report.all_converged(),
        "levels": scfg.levels(),
        "rows": run.report.rows.iter().map(row_json).collect::<Vec<_>>(),
        "max_h": max_h,
        "fields": fields,
    });
    emit(cfg, "ladder.json", &summary)?;
    Ok(if run.report.all_converged() {
        exit::OK
    } else {
        exit::NOT_CONVERGED
    })
}

/// Problem at the configured geometry whose endpoints are those of the
/// manufactured solution.
fn manufactured_problem(cfg: &RunConfig, grid: Grid, b: f64) -> Result<(Field, ProblemData)> {
    let torus = *grid.torus();
    let u = oracle::manufactured_solution(grid);
    let p = ProblemData::new(
        grid,
        cfg.metric(torus)?,
        cfg.coefficient(torus),
        b,
        Target::Constant(0.1),
        u.spatial_layer(0),
        u.spatial_layer(grid.nt() - 1),
    )?;
    Ok((u, p))
}

fn verify_linearization(cfg: &RunConfig) -> Result<(bool, Value)> {
    const STEPS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
    let grid = cfg.grid()?;
    let psi = oracle::linearization_direction(grid);
    let mut pass = true;
    let mut cases = Vec::new();
    for b in [0.0, 0.5] {
        let (u, p) = manufactured_problem(cfg, grid, b)?;
        let c = oracle::check_linearization(&u, &psi, &p, &STEPS)?;
        // Without the drift term Q is quadratic in u and the central
        // difference is exact, so only the rounding floor is checked.
        let ok = c.at_rounding_floor || (c.slope - 2.0).abs() <= 0.2;
        pass &= ok;
        cases.push(json!({
            "b": b,
            "steps": c.steps,
            "errors": c.errors,
            "slope": c.slope,
            "scale": c.scale,
            "at_rounding_floor": c.at_rounding_floor,
            "pass": ok,
        }));
    }
    Ok((pass, Value::Array(cases)))
}

fn verify_identities(cfg: &RunConfig) -> Result<(bool, Value)> {
    let g = &cfg.geometry;
    let sizes = [
        cfg.verify.base_nx,
        2 * cfg.verify.base_nx,
        4 * cfg.verify.base_nx,
    ];
    let mut grad = Vec::new();
    let mut norm = Vec::new();
    for n in sizes {
        let grid = Grid::with_shape(g.dim, n, n + 1, g.length)?;
        let (u, p) = manufactured_problem(cfg, grid, cfg.problem.b)?;
        grad.push(oracle::check_gradient_identity(&u, &p));
        norm.push(oracle::check_gradient_norm_identity(&u, &p));
    }
    let tol = cfg.verify.order_tolerance;
    let mut pass = true;
    let mut out = serde_json::Map::new();
    for (label, errs) in [("gradient", grad), ("gradient_norm", norm)] {
        let orders: Vec<f64> = oracle::refinement_ratios(&errs)
            .iter()
            .map(|r| r.log2())
            .collect();
        let ok = orders.iter().all(|o| (o - 2.0).abs() <= tol);
        pass &= ok;
        out.insert(
            label.into(),
            json!({ "nx": sizes, "errors": errs, "orders": orders, "pass": ok }),
        );
    }
    Ok((pass, Value::Object(out)))
}

fn verify_concavity(cfg: &RunConfig) -> Result<(bool, Value)> {
    const TOL: f64 = 1e-10;
    let mut pass = true;
    let mut out = Vec::new();
    for dim in [1, 2] {
        let r = oracle::check_concavity(cfg.verify.samples, cfg.verify.seed + dim as u64, dim)?;
        pass &= r.passes(TOL);
        out.push(json!({
            "dim": dim,
            "samples": r.samples,
            "max_scaled_eigenvalue": r.max_scaled_eigenvalue,
            "min_scaled_form": r.min_scaled_form,
            "pass": r.passes(TOL),
        }));
    }
    Ok((pass, Value::Array(out)))
}

fn verify_commutation(cfg: &RunConfig, metric: &Metric) -> Result<(bool, Value)> {
    let grid = cfg.grid()?;
    let c = oracle::check_flat_commutation(&oracle::manufactured_solution(grid), metric)?;
    Ok((
        c.exact_to_rounding(),
        json!({
            "discrepancy": c.discrepancy,
            "scale": c.scale,
            "rounding_scale": c.rounding_scale,
            "pass": c.exact_to_rounding(),
        }),
    ))
}

pub fn verify(cfg: &RunConfig) -> Result<u8> {
    let grid = cfg.grid()?;
    let metric = cfg.metric(*grid.torus())?;
    let (lin_ok, lin) = verify_linearization(cfg)?;
    let (id_ok, ids) = verify_identities(cfg)?;
    let (cc_ok, cc) = verify_concavity(cfg)?;
    let (cm_ok, cm) = if metric.is_flat() {
        verify_commutation(cfg, &metric)?
    } else {
        (true, Value::Null)
    };
    let pass = lin_ok && id_ok && cc_ok && cm_ok;
    let summary = json!({
        "pass": pass,
        "linearization": lin,
        "identities": ids,
        "concavity": cc,
        "commutation": cm,
    });
    emit(cfg, "verify.json", &summary)?;
    Ok(if pass {
        exit::OK
    } else {
        exit::VERIFICATION_FAILED
    })
}

pub fn checkf(cfg: &RunConfig) -> Result<u8> {
    let grid = cfg.grid()?;
    let f = cfg.target_field(grid)?;
    let record = fcheck::f_admissibility(&f)?;
    let growth = fcheck::gradient_growth_check(&f)?;
    let mut root_margin = f64::INFINITY;
    let mut root_layer = 0;
    for t in 0..grid.nt() {
        let r = fcheck::root_gradient_check(&f.spatial_layer(t))?;
        if r.min_margin < root_margin {
            root_margin = r.min_margin;
            root_layer = t;
        }
    }
    let summary = json!({
        "record": {
            "sup_f": record.sup_f,
            "sup_sqrt_t": record.sqrt_t,
            "sup_sqrt_grad": record.sqrt_grad,
            "sup_f_tt": record.f_tt,
            "sup_sqrt_hess": record.sqrt_hess,
        },
        "growth_constant": if growth.is_bounded() { json!(growth.constant) } else { json!("unbounded") },
        "growth_argmax": growth.argmax.map(|n| n.to_string()),
        "root_gradient_min_margin": root_margin,
        "root_gradient_layer": root_layer,
    });
    emit(cfg, "checkf.json", &summary)?;
    Ok(exit::OK)
}

pub fn report(inputs: &[PathBuf], out: &Path) -> Result<u8> {
    if inputs.is_empty() {
        return Err(CliError::config("`report` needs at least one ladder CSV"));
    }
    let tables = inputs
        .iter()
        .map(|p| Ok((p.clone(), output::read_ladder_csv(p)?)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        output::ensure_dir(parent)?;
    }
    output::write_long_csv(out, &tables)?;
    Ok(exit::OK)
}

/// Writes the endpoint and coefficient fields of the configured problem so
/// they can be inspected or edited and fed back as `file` profiles.
pub fn dump_inputs(cfg: &RunConfig) -> Result<u8> {
    let p = cfg.problem()?;
    let dir = &cfg.output.directory;
    output::ensure_dir(dir)?;
    output::write_spatial(&dir.join("u0.field"), p.u0())?;
    output::write_spatial(&dir.join("u1.field"), p.u1())?;
    output::write_spatial(&dir.join("a.field"), p.a())?;
    output::write_spatial(&dir.join("curvature.field"), &p.metric().curvature())?;
    if let Target::Shifted { f, .. } = p.target() {
        output::write_field(&dir.join("f.field"), f)?;
    }
    Ok(exit::OK)
}
