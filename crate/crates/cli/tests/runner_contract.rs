//! Contract checks of the experiment runner: schemas and the worked
//! examples that reports must reproduce.

use relax_cli::config::{DensitySpec, ExperimentConfig, ExperimentKind, SampleSpec};
use relax_cli::runner::run;

#[test]
fn envelope_reproduces_octahedron_finite_value() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Envelope);
    cfg.density = DensitySpec {
        kind: "det_barrier".into(),
        p: 4.0,
        mode: Some("nonzero".into()),
        ..DensitySpec::default()
    };
    cfg.samples = SampleSpec {
        kind: "explicit".into(),
        shape: "m33".into(),
        count: 1,
        matrices: Some(vec![vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]]),
        ..SampleSpec::default()
    };
    let report = run(ExperimentKind::Envelope, &cfg).unwrap();
    let w_col = report.columns.iter().position(|c| c == "w_value").unwrap();
    let z_col = report
        .columns
        .iter()
        .position(|c| c == "zest_value")
        .unwrap();
    assert_eq!(
        report.rows[0][w_col], "inf",
        "the barrier blows up at rank 2"
    );
    let zest: f64 = report.rows[0][z_col].parse().unwrap();
    assert!(zest.is_finite(), "the construction escapes the constraint");
    assert_eq!(report.property_failures, 0);
}

#[test]
fn thinfilm_report_schema() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Thinfilm);
    cfg.thinfilm.grid = 8;
    cfg.thinfilm.eps = vec![1e-1, 1e-2];
    cfg.membrane.zeta_budget = 200;
    cfg.budget = 400;
    let report = run(ExperimentKind::Thinfilm, &cfg).unwrap();
    assert_eq!(report.columns, ["eps", "lower", "upper", "membrane", "gap"]);
    assert_eq!(report.rows.len(), 2);
}

#[test]
fn growth_with_zero_samples_is_empty_but_valid() {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Growth);
    cfg.samples.count = 0;
    cfg.samples.rank_deficient = 0;
    cfg.samples.include_zero = false;
    let report = run(ExperimentKind::Growth, &cfg).unwrap();
    assert!(report.rows.is_empty());
    assert_eq!(report.property_failures, 0);
    let csv = report.export(relax_cli::report::ExportFormat::Csv);
    let (header, rows) = relax_cli::report::parse_csv_rows(&csv);
    assert_eq!(header.len(), 6);
    assert!(rows.is_empty());
}

#[test]
fn seeded_samples_are_reproducible_and_marked() {
    let spec = SampleSpec {
        kind: "seeded".into(),
        shape: "m32".into(),
        count: 12,
        rank_deficient: 3,
        include_zero: true,
        ..SampleSpec::default()
    };
    let a = spec.generate(42).unwrap();
    let b = spec.generate(42).unwrap();
    assert_eq!(a.len(), 12);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.entries(), y.entries());
    }
    assert_eq!(a[0].norm(), 0.0, "zero matrix first");
    for m in &a[1..=3] {
        let xi = m.as_m32().unwrap();
        assert!(relax_core::cross_columns(xi).norm() <= 1e-12 * (1.0 + xi.norm()));
    }
    let full_rank = a[4].as_m32().unwrap();
    assert!(relax_core::cross_columns(full_rank).norm() > 1e-6);
}
