//! Experiment dispatch: build the density and the samples, run the module
//! pipelines, collect rows. All sample loops preserve index order, so a
//! report is a pure function of (config, seed).

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind};
use crate::report::{ext, num, ExperimentReport};
use relax_core::density::{monotone_family, Domain};
use relax_core::extval::ExtValue;
use relax_core::laminate::{ks_envelope, replay, KsConfig};
use relax_core::mat::{det3, Mat};
use relax_core::membrane::{
    identity_check, IdentityBudgets, MembraneBudgets, MembraneDensityHandle,
    PlanarPiecewiseAffineMap,
};
use relax_core::par::map_indexed;
use relax_core::thinfilm::{gamma_report, EpsSchedule, GammaBudgets};
use relax_core::zest::{membrane_growth_constant, optimize_upper, OptimizeOptions};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sample {index}: {source}")]
    Laminate {
        index: usize,
        source: relax_core::laminate::LaminateError,
    },
    #[error("thin-film setup: {0}")]
    ThinFilm(#[from] relax_core::thinfilm::ThinFilmError),
    #[error("interchange setup: {0}")]
    Interchange(#[from] relax_core::interchange::InterchangeError),
}

fn entry_columns(planar: bool) -> Vec<String> {
    if planar {
        ["f11", "f12", "f21", "f22", "f31", "f32"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        [
            "f11", "f12", "f13", "f21", "f22", "f23", "f31", "f32", "f33",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

fn entry_values(m: &Mat) -> Vec<String> {
    m.entries().iter().map(|x| num(*x)).collect()
}

fn planar_map_from(samples: &[Mat]) -> Result<PlanarPiecewiseAffineMap, ConfigError> {
    if samples.is_empty() {
        return Err(ConfigError::Invalid("at least one region needed".into()));
    }
    let frac = 1.0 / samples.len() as f64;
    let mut regions = Vec::new();
    let mut acc = 0.0;
    for (i, m) in samples.iter().enumerate() {
        let xi = m
            .as_m32()
            .ok_or_else(|| ConfigError::Invalid("planar samples required".into()))?;
        let f = if i + 1 == samples.len() {
            1.0 - acc
        } else {
            frac
        };
        acc += f;
        regions.push((f, *xi));
    }
    Ok(PlanarPiecewiseAffineMap::new(regions))
}

/// Run one experiment to a structured report.
pub fn run(kind: ExperimentKind, config: &ExperimentConfig) -> Result<ExperimentReport, RunError> {
    let start = Instant::now();
    let density = config.density.build()?;
    let mut report = match kind {
        ExperimentKind::Envelope => run_envelope(config, density)?,
        ExperimentKind::Membrane => run_membrane(config, density)?,
        ExperimentKind::Identity => run_identity(config, density)?,
        ExperimentKind::Thinfilm => run_thinfilm(config, density)?,
        ExperimentKind::Interchange => run_interchange(config, density)?,
        ExperimentKind::Growth => run_growth(config, density)?,
        ExperimentKind::Family => run_family(config, density)?,
    };
    report.experiment = kind.to_string();
    let mut echoed = config.clone();
    echoed.experiment = Some(kind);
    report.config_echo = echoed.echo();
    report.wall_clock = start.elapsed();
    Ok(report)
}

fn blank_report() -> ExperimentReport {
    ExperimentReport {
        experiment: String::new(),
        config_echo: String::new(),
        columns: vec![],
        rows: vec![],
        summary: vec![],
        property_failures: 0,
        wall_clock: std::time::Duration::ZERO,
    }
}

fn run_envelope(
    config: &ExperimentConfig,
    density: relax_core::Density,
) -> Result<ExperimentReport, RunError> {
    let samples = config.samples.generate(config.seed)?;
    let planar = config.samples.is_planar();
    if (density.domain == Domain::M32) != planar {
        return Err(
            ConfigError::Invalid("sample shape must match the density domain".into()).into(),
        );
    }
    let depth = config.envelope.depth;
    let opts = OptimizeOptions {
        budget: config.budget,
        seed: config.seed,
        ..OptimizeOptions::default()
    };
    let ks_cfg = KsConfig::for_density(&density).coarse();

    let results: Vec<Result<(Vec<String>, usize), RunError>> = map_indexed(samples.len(), |i| {
        let f = &samples[i];
        let out = optimize_upper(&density, f, &opts);
        let mut row = vec![num(i as f64)];
        row.extend(entry_values(f));
        row.push(ext(density.at(f)));
        row.push(ext(out.value));
        row.push(out.winner.clone());
        row.push(num(out.exhausted as u8 as f64));
        let mut failures = usize::from(out.value > density.at(f));
        if depth > 0 {
            let env = ks_envelope(&density, f, depth, &ks_cfg)
                .map_err(|source| RunError::Laminate { index: i, source })?;
            for v in &env.chain {
                row.push(ext(*v));
            }
            let rep = replay(&env.tree, Some(&density));
            let sound = rep.value_error <= 1e-12
                && rep.matrix_error <= 1e-12 * (1.0 + f.norm())
                && rep.max_minor <= 1e-12 * (1.0 + f.norm());
            row.push(num(sound as u8 as f64));
            failures += usize::from(!sound);
            failures += env.chain.windows(2).filter(|w| w[1] > w[0]).count();
        }
        Ok((row, failures))
    });

    let mut report = blank_report();
    report.columns = vec!["idx".into()];
    report.columns.extend(entry_columns(planar));
    report.columns.extend(
        ["w_value", "zest_value", "winner", "budget_exhausted"]
            .iter()
            .map(|s| s.to_string()),
    );
    if depth > 0 {
        for i in 0..=depth {
            report.columns.push(format!("ks_r{i}"));
        }
        report.columns.push("certificate_sound".into());
    }
    for r in results {
        let (row, failures) = r?;
        report.property_failures += failures;
        report.rows.push(row);
    }
    report
        .summary
        .push(("samples".into(), report.rows.len().to_string()));
    Ok(report)
}

fn run_membrane(
    config: &ExperimentConfig,
    density: relax_core::Density,
) -> Result<ExperimentReport, RunError> {
    if density.domain != Domain::M33 {
        return Err(ConfigError::Invalid("membrane experiments need a 3x3 density".into()).into());
    }
    let samples = config.samples.generate(config.seed)?;
    let handle = MembraneDensityHandle::new(
        density.clone(),
        MembraneBudgets {
            zeta: config.membrane.zeta_budget,
            constructions: config.budget,
        },
    );
    let rows: Vec<(Vec<String>, usize)> = map_indexed(samples.len(), |i| {
        let xi = *samples[i].as_m32().expect("membrane samples are planar");
        let w0 = handle.w0(&xi);
        let out = handle.wmem_outcome(&xi);
        let mut row = vec![num(i as f64)];
        row.extend(entry_values(&Mat::M32(xi)));
        row.push(ext(w0));
        row.push(ext(out.value));
        row.push(out.winner.clone());
        (row, usize::from(out.value > w0))
    });
    let mut report = blank_report();
    report.columns = vec!["idx".into()];
    report.columns.extend(entry_columns(true));
    report
        .columns
        .extend(["w0", "wmem", "winner"].iter().map(|s| s.to_string()));
    for (row, failures) in rows {
        report.property_failures += failures;
        report.rows.push(row);
    }
    Ok(report)
}

fn run_identity(
    config: &ExperimentConfig,
    density: relax_core::Density,
) -> Result<ExperimentReport, RunError> {
    if density.domain != Domain::M33 {
        return Err(ConfigError::Invalid("identity experiments need a 3x3 density".into()).into());
    }
    let samples = config.samples.generate(config.seed)?;
    let xis: Vec<_> = samples
        .iter()
        .map(|m| *m.as_m32().expect("identity samples are planar"))
        .collect();
    let budgets = IdentityBudgets {
        outer_b: config.identity.outer_b,
        zeta_b: config.identity.zeta_b,
        outer_a: config.identity.outer_a,
        zeta_a: config.identity.zeta_a,
        inner_a: config.identity.inner_a,
    };
    let result = identity_check(&density, &xis, budgets);
    let mut report = blank_report();
    report.columns = vec!["idx".into()];
    report.columns.extend(entry_columns(true));
    report.columns.extend(
        ["route_a", "route_b", "gap", "winner_a", "winner_b"]
            .iter()
            .map(|s| s.to_string()),
    );
    for (i, row) in result.rows.iter().enumerate() {
        let mut r = vec![num(i as f64)];
        r.extend(entry_values(&Mat::M32(row.xi)));
        r.push(ext(row.route_a));
        r.push(ext(row.route_b));
        r.push(num(row.gap));
        r.push(row.winner_a.clone());
        r.push(row.winner_b.clone());
        report.property_failures += usize::from(row.gap > config.identity.max_gap);
        report.rows.push(r);
    }
    report.summary.push(("max_gap".into(), num(result.max_gap)));
    Ok(report)
}

fn run_thinfilm(
    config: &ExperimentConfig,
    density: relax_core::Density,
) -> Result<ExperimentReport, RunError> {
    if density.domain != Domain::M33 {
        return Err(ConfigError::Invalid("thin films need a 3x3 density".into()).into());
    }
    let samples = config.samples.generate(config.seed)?;
    let psi = planar_map_from(&samples)?;
    let schedule = EpsSchedule::new(config.thinfilm.eps.clone());
    let params = relax_core::thinfilm::RecoveryParams {
        j: config.thinfilm.j,
        blend: config.thinfilm.blend,
        grid: config.thinfilm.grid,
        quad: config.thinfilm.quad,
        director_budget: config.thinfilm.director_budget,
    };
    let budgets = GammaBudgets {
        // the pointwise lower bound runs one reduction per quadrature
        // point; keep it desk-scale regardless of the membrane budget
        zeta: config.membrane.zeta_budget.min(600),
        membrane: MembraneBudgets {
            zeta: config.membrane.zeta_budget,
            constructions: config.budget,
        },
    };
    let gamma = gamma_report(&density, &psi, &params, &schedule, &budgets)?;
    let mut report = blank_report();
    report.columns = ["eps", "lower", "upper", "membrane", "gap"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for row in &gamma.rows {
        report.rows.push(vec![
            num(row.eps),
            num(row.lower),
            num(row.upper),
            num(row.membrane),
            num(row.gap),
        ]);
    }
    report.property_failures += gamma.pointwise_violations + usize::from(!gamma.sandwich_ok);
    report.summary.push((
        "pointwise_violations".into(),
        gamma.pointwise_violations.to_string(),
    ));
    report
        .summary
        .push(("sandwich_ok".into(), gamma.sandwich_ok.to_string()));
    Ok(report)
}

fn run_interchange(
    config: &ExperimentConfig,
    density: relax_core::Density,
) -> Result<ExperimentReport, RunError> {
    if density.domain != Domain::M33 {
        return Err(ConfigError::Invalid("interchange needs a 3x3 density".into()).into());
    }
    let samples = config.samples.generate(config.seed)?;
    let psi = planar_map_from(&samples)?;
    let kind = match config.interchange.kind.as_str() {
        "gamma" => relax_core::MultifunctionKind::Gamma,
        "lambda" => relax_core::MultifunctionKind::Lambda,
        other => {
            return Err(
                ConfigError::Invalid(format!("unknown multifunction kind '{other}'")).into(),
            )
        }
    };
    let gamma = relax_core::build_multifunction(&psi, config.interchange.j, kind)?;
    let fiber = relax_core::interchange::fiber_from_density(&density, &psi);
    let rows: Vec<relax_core::interchange::GapRow> =
        map_indexed(config.interchange.blends.len(), |i| {
            relax_core::interchange_gap(
                &fiber,
                &psi,
                &gamma,
                config.interchange.grid,
                config.interchange.blends[i],
                config.interchange.search_budget,
            )
        });
    let mut report = blank_report();
    report.columns = ["n", "lhs", "rhs", "gap"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for row in &rows {
        report.property_failures += usize::from(row.gap < -1e-9);
        report.rows.push(vec![
            num(row.blend as f64),
            num(row.lhs),
            num(row.rhs),
            num(row.gap),
        ]);
    }
    for pair in rows.windows(2) {
        report.property_failures += usize::from(pair[1].gap > pair[0].gap + 1e-12);
    }
    if let Some(last) = rows.last() {
        report.summary.push((
            "final_gap_over_rhs".into(),
            num(last.gap / last.rhs.max(1e-300)),
        ));
    }
    report.summary.push(("j".into(), num(gamma.j)));
    report.summary.push(("j_min".into(), num(gamma.j_min)));
    Ok(report)
}

fn run_growth(
    config: &ExperimentConfig,
    density: relax_core::Density,
) -> Result<ExperimentReport, RunError> {
    if density.domain != Domain::M32 {
        return Err(
            ConfigError::Invalid("the growth audit runs on a 3x2 membrane density".into()).into(),
        );
    }
    let samples = config.samples.generate(config.seed)?;
    let opts = OptimizeOptions {
        budget: config.budget,
        seed: config.seed,
        ..OptimizeOptions::default()
    };
    let values: Vec<(Mat, ExtValue)> = map_indexed(samples.len(), |i| {
        (
            samples[i],
            optimize_upper(&density, &samples[i], &opts).value,
        )
    });
    let c = membrane_growth_constant(config.growth.alpha, config.growth.beta, density.p);
    let audit = relax_core::check_growth(&values, c, density.p);
    let mut report = blank_report();
    report.columns = ["idx", "norm", "measured", "bound", "ratio", "pass"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for (i, s) in audit.samples.iter().enumerate() {
        let ratio = s.measured.to_f64() / s.bound;
        report.rows.push(vec![
            num(i as f64),
            num(s.matrix.norm()),
            ext(s.measured),
            num(s.bound),
            num(ratio),
            num(s.pass as u8 as f64),
        ]);
        report.property_failures += usize::from(!s.pass);
    }
    report.summary.push(("constant".into(), num(audit.c)));
    report
        .summary
        .push(("worst_ratio".into(), num(audit.worst_ratio)));
    Ok(report)
}

fn run_family(
    config: &ExperimentConfig,
    density: relax_core::Density,
) -> Result<ExperimentReport, RunError> {
    if density.domain != Domain::M33 {
        return Err(ConfigError::Invalid("the family needs a 3x3 density".into()).into());
    }
    let samples = config.samples.generate(config.seed)?;
    let ns = config.family.n_values.clone();
    let members: Vec<_> = ns.iter().map(|&n| monotone_family(&density, n)).collect();
    let cap = config.family.cap;
    let rows: Vec<(Vec<String>, usize)> = map_indexed(samples.len(), |i| {
        let f = &samples[i];
        let f33 = f.as_m33().expect("family samples are 3x3");
        let d = det3(f33);
        let values: Vec<ExtValue> = members.iter().map(|wn| wn.at(f)).collect();
        let mut failures = values.windows(2).filter(|w| w[1] < w[0]).count();
        if d > 0.0 {
            failures += values.iter().filter(|v| **v != density.at(f)).count();
        } else {
            let sup = values.iter().copied().max().unwrap_or(ExtValue::Infinite);
            failures += usize::from(sup.to_f64() <= cap);
        }
        let mut row = vec![num(i as f64), num(d)];
        row.extend(values.iter().map(|v| ext(*v)));
        (row, failures)
    });
    let mut report = blank_report();
    report.columns = vec!["idx".into(), "det".into()];
    report.columns.extend(ns.iter().map(|n| format!("w_n{n}")));
    for (row, failures) in rows {
        report.property_failures += failures;
        report.rows.push(row);
    }
    Ok(report)
}
