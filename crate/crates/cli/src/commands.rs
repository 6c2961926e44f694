use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

use pepkit::bounds::{
    analytic_gm_bound, fgm_bound, format_significant, gm_certificate, numeric_bound,
    verify_certificate, write_bound_table, BoundReport, BoundRow, BoundSource, ReferenceBound,
};
use pepkit::minors::{positive_definiteness_suite, verification_report};
use pepkit::schedule::{gm_schedule, hbm_schedule, load_schedule, save_schedule, FgmVariant};
use pepkit::sdp::SdpConfig;
use pepkit::simulate::{
    cocoercivity_check, fgm_equivalence_suite, nu, phi1_oracle, phi2_oracle,
    primal_feasibility_check, random_quadratic_oracle, run_fo, DEFAULT_DIM,
};
use pepkit::stepopt::{crosscheck, recover_steps, render_schedule, solve_lin};

use crate::config::{MethodParams, MethodSpec, OutputFormat, RunConfig, Variant};
use crate::{Suite, TableKind};

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn row_or_failure(
    method: &str,
    n: usize,
    params: &str,
    source: BoundSource,
    r: pepkit::Result<BoundReport>,
) -> BoundRow {
    match r {
        Ok(report) => BoundRow::from_report(method, n, params, &report),
        Err(e) => {
            log::warn!("{method} n={n} {params}: {e}");
            BoundRow::failed(method, n, params, source, &e)
        }
    }
}

fn emit_rows(cfg: &RunConfig, rows: &[BoundRow]) -> Result<()> {
    let mut w = sink(cfg.out.as_deref())?;
    match cfg.format {
        OutputFormat::Csv => write_bound_table(rows, &mut w, cfg.digits)?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn cmd_bound(cfg: &RunConfig, method: &MethodSpec, p: &MethodParams) -> Result<()> {
    let mut rows = Vec::new();
    let file_schedule = match method {
        MethodSpec::File(path) => {
            Some(load_schedule(path).with_context(|| format!("loading {}", path.display()))?)
        }
        _ => None,
    };
    for &n in &cfg.grid {
        match method {
            MethodSpec::Gm => {
                let params = format!("h={}", p.h);
                let analytic = !p.numeric && p.h > 0.0 && p.h <= 1.0;
                let (source, r) = if analytic {
                    (BoundSource::Analytic, analytic_gm_bound(n, p.h))
                } else {
                    (
                        BoundSource::DualSdp,
                        gm_schedule(n, p.h).and_then(|s| numeric_bound(&s, &cfg.sdp)),
                    )
                };
                rows.push(row_or_failure("gm", n, &params, source, r));
            }
            MethodSpec::Hbm => {
                let params = format!("alpha={},beta={}", p.alpha, p.beta);
                let r = hbm_schedule(n, p.alpha, p.beta).and_then(|s| numeric_bound(&s, &cfg.sdp));
                rows.push(row_or_failure("hbm", n, &params, BoundSource::DualSdp, r));
            }
            MethodSpec::Fgm => {
                let variants = match p.variant {
                    Some(v) => vec![v],
                    None => vec![Variant::Main, Variant::Aux],
                };
                for v in variants {
                    let params = match v {
                        Variant::Main => "variant=main",
                        Variant::Aux => "variant=aux",
                    };
                    let r = fgm_bound(n, FgmVariant::from(v), &cfg.sdp);
                    rows.push(row_or_failure("fgm", n, params, BoundSource::DualSdp, r));
                }
                let reference = ReferenceBound::Nesterov;
                rows.push(BoundRow::from_report(
                    reference.label(),
                    n,
                    "",
                    &reference.report(n),
                ));
            }
            MethodSpec::File(path) => {
                let s = file_schedule.as_ref().expect("loaded above");
                let params = path.display().to_string();
                let r = s.truncated(n).and_then(|t| numeric_bound(&t, &cfg.sdp));
                rows.push(row_or_failure("file", n, &params, BoundSource::DualSdp, r));
            }
        }
    }
    emit_rows(cfg, &rows)
}

#[derive(Serialize)]
struct OptimizeRow {
    n: usize,
    factor: Option<f64>,
    inverse_factor: Option<f64>,
    recovery: Option<String>,
    substitution_residual: Option<f64>,
    crosscheck_difference: Option<f64>,
    crosscheck: String,
    schedule_file: Option<String>,
}

/// Returns whether every row recovered a schedule that passed the crosscheck.
pub fn cmd_optimize(cfg: &RunConfig, dir: &Path, render: Option<bool>) -> Result<bool> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut rows = Vec::new();
    for &n in &cfg.grid {
        let mut row = OptimizeRow {
            n,
            factor: None,
            inverse_factor: None,
            recovery: None,
            substitution_residual: None,
            crosscheck_difference: None,
            crosscheck: "not-run".into(),
            schedule_file: None,
        };
        let sol = match solve_lin(n, &cfg.sdp) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("n={n}: {e}");
                row.crosscheck = format!("error: {e}");
                rows.push(row);
                continue;
            }
        };
        row.factor = Some(sol.factor);
        row.inverse_factor = Some(sol.inverse_factor());
        match recover_steps(&sol) {
            Ok(rec) => {
                row.recovery = Some(rec.path.to_string());
                row.substitution_residual =
                    Some(rec.forward_residual.unwrap_or(rec.verbatim_residual));
                let path = dir.join(format!("optimized_n{n}.json"));
                save_schedule(&rec.schedule, &path)?;
                row.schedule_file = Some(path.display().to_string());
                if let Some(plus) = render {
                    eprint!("n = {n}\n{}", render_schedule(&rec.schedule, plus));
                }
                match crosscheck(&rec.schedule, &sol, &cfg.sdp) {
                    Ok(cc) => {
                        row.crosscheck_difference = Some(cc.difference);
                        row.crosscheck = if cc.pass { "pass" } else { "fail" }.into();
                    }
                    Err(e) => row.crosscheck = format!("error: {e}"),
                }
            }
            Err(e) => {
                log::warn!("n={n}: {e}");
                row.crosscheck = format!("recovery failed: {e}");
            }
        }
        rows.push(row);
    }

    let mut w = sink(cfg.out.as_deref())?;
    match cfg.format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &rows)?;
            writeln!(w)?;
        }
        OutputFormat::Csv => {
            let mut c = csv::Writer::from_writer(&mut w);
            c.write_record([
                "n",
                "factor",
                "inverse_factor",
                "recovery",
                "substitution_residual",
                "crosscheck_difference",
                "crosscheck",
                "schedule_file",
            ])?;
            let sig = |v: Option<f64>| {
                v.map(|x| format_significant(x, cfg.digits))
                    .unwrap_or_default()
            };
            let sci = |v: Option<f64>| v.map(|x| format!("{x:.2e}")).unwrap_or_default();
            for r in &rows {
                c.write_record([
                    r.n.to_string(),
                    sig(r.factor),
                    sig(r.inverse_factor),
                    r.recovery.clone().unwrap_or_default(),
                    sci(r.substitution_residual),
                    sci(r.crosscheck_difference),
                    r.crosscheck.clone(),
                    r.schedule_file.clone().unwrap_or_default(),
                ])?;
            }
            c.flush()?;
        }
    }
    Ok(rows.iter().all(|r| r.crosscheck == "pass"))
}

#[derive(Serialize)]
struct Check {
    suite: &'static str,
    check: String,
    pass: bool,
    detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    records: Option<Value>,
}

fn check(suite: &'static str, name: &str, pass: bool, detail: String) -> Check {
    Check {
        suite,
        check: name.to_string(),
        pass,
        detail,
        records: None,
    }
}

fn gradient_suite(cfg: &SdpConfig) -> Result<Vec<Check>> {
    let mut worst = 0.0_f64;
    let mut certified = true;
    let mut failures = Vec::new();
    for n in 1..=10 {
        for h in [0.1, 0.25, 0.5, 0.75, 1.0] {
            let s = gm_schedule(n, h)?;
            let analytic = analytic_gm_bound(n, h)?.factor;
            match numeric_bound(&s, cfg) {
                Ok(r) => worst = worst.max((r.factor - analytic).abs()),
                Err(e) => failures.push(format!("n={n} h={h}: {e}")),
            }
            certified &= verify_certificate(&s, &gm_certificate(n, h)?, 1e-9)?.pass;
        }
    }
    let mut detail = format!("max |numeric - analytic| = {worst:.2e} over n <= 10");
    if !failures.is_empty() {
        detail = format!("{detail}; {}", failures.join("; "));
    }
    Ok(vec![
        check(
            "gradient",
            "numeric-vs-analytic",
            failures.is_empty() && worst <= 1e-5,
            detail,
        ),
        check(
            "gradient",
            "certificates",
            certified,
            "explicit certificates PSD and in the multiplier set".into(),
        ),
    ])
}

fn appendix_suite(seed: u64) -> Result<Vec<Check>> {
    let records = verification_report(20, seed)?;
    let failed = records.iter().filter(|r| !r.pass).count();
    let mut identities = check(
        "appendix",
        "determinant-identities",
        failed == 0,
        format!("{} records up to N = 20, {failed} failed", records.len()),
    );
    identities.records = Some(serde_json::to_value(&records)?);
    let pd = positive_definiteness_suite(200)?;
    let min = pd
        .iter()
        .map(|r| r.s0_min_eigenvalue.min(r.s1_min_eigenvalue))
        .fold(f64::INFINITY, f64::min);
    let pd_check = check(
        "appendix",
        "positive-definiteness",
        pd.iter().all(|r| r.pass),
        format!("smallest eigenvalue {min:.3e} over N <= 200"),
    );
    Ok(vec![identities, pd_check])
}

fn fgm_equivalence(seed: u64) -> Result<Vec<Check>> {
    let r = fgm_equivalence_suite(100, 8, 15, seed)?;
    Ok(vec![check(
        "fgm-equiv",
        "trajectory-equivalence",
        r.max_residual <= 1e-8,
        format!(
            "{} quadratics, max relative deviation {:.2e}",
            r.trials, r.max_residual
        ),
    )])
}

fn cocoercivity_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut oracles = vec![phi2_oracle(1.0, DEFAULT_DIM)?];
    for (n, h) in [(1, 0.5), (5, 1.0), (20, 1.5)] {
        oracles.push(phi1_oracle(n, h, 1.0, 1.0)?);
    }
    for i in 0..5 {
        oracles.push(random_quadratic_oracle(
            2 + i,
            1.0,
            seed.wrapping_add(i as u64),
        )?);
    }
    for o in &oracles {
        let r = cocoercivity_check(o, 200, seed, 1e-12);
        out.push(check(
            "cocoercivity",
            o.name(),
            r.violations == 0,
            format!("{} pairs, max violation {:.2e}", r.pairs, r.max_violation),
        ));
    }
    let traj = run_fo(
        &phi1_oracle(8, 0.7, 1.0, 1.0)?,
        &gm_schedule(8, 0.7)?,
        &nu(DEFAULT_DIM),
    )?;
    let feas = primal_feasibility_check(&traj)?;
    out.push(check(
        "cocoercivity",
        "trajectory-feasibility",
        feas.is_feasible(1e-12),
        format!("max constraint violation {:.2e}", feas.max_violation),
    ));
    Ok(out)
}

/// Returns whether every check passed.
pub fn cmd_verify(
    suites: &[Suite],
    seed: u64,
    cfg: &SdpConfig,
    out: Option<&Path>,
) -> Result<bool> {
    let mut checks = Vec::new();
    for s in suites {
        checks.extend(match s {
            Suite::Gradient => gradient_suite(cfg)?,
            Suite::Appendix => appendix_suite(seed)?,
            Suite::FgmEquiv => fgm_equivalence(seed)?,
            Suite::Cocoercivity => cocoercivity_suite(seed)?,
            Suite::All => unreachable!("expanded by the caller"),
        });
    }
    for c in &checks {
        println!(
            "{} {}/{}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.suite,
            c.check,
            c.detail
        );
    }
    if let Some(path) = out {
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        serde_json::to_writer_pretty(f, &checks)?;
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn inverse(r: pepkit::Result<BoundReport>, what: &str, n: usize) -> Option<f64> {
    r.map(|b| b.inverse_factor)
        .map_err(|e| log::warn!("{what} n={n}: {e}"))
        .ok()
}

fn write_wide(cfg: &RunConfig, header: &[&str], rows: &[(usize, Vec<Option<f64>>)]) -> Result<()> {
    let mut w = sink(cfg.out.as_deref())?;
    match cfg.format {
        OutputFormat::Csv => {
            let mut c = csv::Writer::from_writer(&mut w);
            c.write_record(std::iter::once("n").chain(header.iter().copied()))?;
            for (n, vals) in rows {
                let cells = vals.iter().map(|v| {
                    v.map(|x| format_significant(x, cfg.digits))
                        .unwrap_or_default()
                });
                c.write_record(std::iter::once(n.to_string()).chain(cells))?;
            }
            c.flush()?;
        }
        OutputFormat::Json => {
            let list: Vec<Value> = rows
                .iter()
                .map(|(n, vals)| {
                    let mut m = Map::new();
                    m.insert("n".into(), json!(n));
                    for (h, v) in header.iter().zip(vals) {
                        m.insert((*h).into(), json!(v));
                    }
                    Value::Object(m)
                })
                .collect();
            serde_json::to_writer_pretty(&mut w, &list)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Inverse factors (`f(x_N) - f* <= L R^2 / value`) per method.
pub fn cmd_table(cfg: &RunConfig, kind: TableKind) -> Result<()> {
    let sdp = &cfg.sdp;
    match kind {
        TableKind::Momentum => {
            let rows: Vec<_> = cfg
                .grid
                .iter()
                .map(|&n| {
                    let hbm = inverse(
                        hbm_schedule(n, 1.0, 0.5).and_then(|s| numeric_bound(&s, sdp)),
                        "hbm",
                        n,
                    );
                    let main = inverse(fgm_bound(n, FgmVariant::Main, sdp), "fgm", n);
                    let aux = inverse(fgm_bound(n, FgmVariant::Auxiliary, sdp), "fgm-aux", n);
                    let classical = 1.0 / ReferenceBound::ClassicalGradient.factor(n);
                    let nesterov = 1.0 / ReferenceBound::Nesterov.factor(n);
                    (n, vec![hbm, main, aux, Some(classical), Some(nesterov)])
                })
                .collect();
            write_wide(
                cfg,
                &[
                    "hbm",
                    "fgm_main",
                    "fgm_aux",
                    "classical_gradient",
                    "nesterov_reference",
                ],
                &rows,
            )
        }
        TableKind::Optimized => {
            let rows: Vec<_> = cfg
                .grid
                .iter()
                .map(|&n| {
                    let opt = solve_lin(n, sdp)
                        .map(|s| s.inverse_factor())
                        .map_err(|e| log::warn!("optimized n={n}: {e}"))
                        .ok();
                    let main = inverse(fgm_bound(n, FgmVariant::Main, sdp), "fgm", n);
                    let lower = 1.0 / ReferenceBound::ResistingOracle.factor(n);
                    (n, vec![opt, main, Some(lower)])
                })
                .collect();
            write_wide(cfg, &["optimized", "fgm_main", "resisting_oracle"], &rows)
        }
        TableKind::Plot => {
            let mut w = sink(cfg.out.as_deref())?;
            let mut points: Vec<(&str, usize, Option<f64>)> = Vec::new();
            for &n in &cfg.grid {
                points.push(("gm", n, inverse(analytic_gm_bound(n, 1.0), "gm", n)));
                points.push((
                    "hbm",
                    n,
                    inverse(
                        hbm_schedule(n, 1.0, 0.5).and_then(|s| numeric_bound(&s, sdp)),
                        "hbm",
                        n,
                    ),
                ));
                points.push((
                    "fgm",
                    n,
                    inverse(fgm_bound(n, FgmVariant::Main, sdp), "fgm", n),
                ));
                points.push((
                    "resisting-oracle",
                    n,
                    Some(1.0 / ReferenceBound::ResistingOracle.factor(n)),
                ));
            }
            points.sort_by_key(|p| (p.0, p.1));
            match cfg.format {
                OutputFormat::Csv => {
                    let mut c = csv::Writer::from_writer(&mut w);
                    c.write_record(["method", "n", "inverse_factor"])?;
                    for (m, n, v) in &points {
                        let cell = v
                            .map(|x| format_significant(x, cfg.digits))
                            .unwrap_or_default();
                        c.write_record([m.to_string(), n.to_string(), cell])?;
                    }
                    c.flush()?;
                }
                OutputFormat::Json => {
                    let list: Vec<Value> = points
                        .iter()
                        .map(|(m, n, v)| json!({"method": m, "n": n, "inverse_factor": v}))
                        .collect();
                    serde_json::to_writer_pretty(&mut w, &list)?;
                    writeln!(w)?;
                }
            }
            Ok(())
        }
    }
}
