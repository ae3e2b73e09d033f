//! Extended-real energy densities with determinant-type constraints, the
//! out-of-plane reduction `W_0`, the monotone approximation family and
//! growth auditing.

use crate::extval::{ExtValue, Finite, Infinite};
use crate::mat::{adjoin_column, cross_columns, det3, Mat, Mat32, Vec3};
use crate::search::{geometric_grid, golden_min};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DensityError {
    #[error("matrix shape does not match the density domain")]
    DomainMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    M33,
    M32,
}

/// Where the density is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintMode {
    /// `W = +inf` iff `det F <= 0`.
    StrictPositive,
    /// `W = +inf` iff `det F = 0` (barrier on `|det F|`).
    Nonzero,
    /// Barrier on the column cross product `|xi_1 ^ xi_2|` (3x2 domain).
    AbsBarrier,
    /// Finite everywhere.
    None,
}

/// Barrier profile `h : [0, inf) -> [0, inf]`, bounded on `[delta, inf)` for
/// every `delta > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HFunction {
    /// `h(0) = +inf`, `h(t) = t^{-alpha}`.
    ReciprocalPower { alpha: f64 },
    /// Piecewise-linear on increasing knots, `+inf` left of the first knot,
    /// constant right of the last.
    Table(Vec<(f64, f64)>),
}

impl HFunction {
    pub fn reciprocal() -> HFunction {
        HFunction::ReciprocalPower { alpha: 1.0 }
    }

    pub fn eval(&self, t: f64) -> ExtValue {
        debug_assert!(t >= 0.0);
        match self {
            HFunction::ReciprocalPower { alpha } => {
                if t > 0.0 {
                    ExtValue::finite(t.powf(-alpha))
                } else {
                    Infinite
                }
            }
            HFunction::Table(knots) => {
                if knots.is_empty() || t < knots[0].0 {
                    return Infinite;
                }
                match knots.windows(2).find(|w| t <= w[1].0) {
                    Some(w) => {
                        let (t0, v0) = w[0];
                        let (t1, v1) = w[1];
                        let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                        ExtValue::finite(v0 + s * (v1 - v0))
                    }
                    None => ExtValue::finite(knots.last().unwrap().1),
                }
            }
        }
    }
}

/// `|F|^p` from the squared norm, with the common even exponents kept in
/// exact multiplicative form (the hot path of every density evaluation).
pub fn growth_power(norm_squared: f64, p: f64) -> f64 {
    if p == 2.0 {
        norm_squared
    } else if p == 4.0 {
        norm_squared * norm_squared
    } else {
        norm_squared.powf(0.5 * p)
    }
}

type Evaluator = Arc<dyn Fn(&Mat) -> ExtValue + Send + Sync>;

/// An energy density over 3x3 or 3x2 matrices, with its growth exponent,
/// coercivity constant and constraint mode. Immutable after construction;
/// evaluation is pure.
#[derive(Clone)]
pub struct Density {
    pub domain: Domain,
    pub p: f64,
    /// Coercivity constant `C` with `W(F) >= C |F|^p`.
    pub coercivity: f64,
    pub mode: ConstraintMode,
    pub name: String,
    eval: Evaluator,
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Density")
            .field("domain", &self.domain)
            .field("p", &self.p)
            .field("coercivity", &self.coercivity)
            .field("mode", &self.mode)
            .field("name", &self.name)
            .finish()
    }
}

impl Density {
    pub fn custom(
        domain: Domain,
        p: f64,
        coercivity: f64,
        mode: ConstraintMode,
        name: impl Into<String>,
        eval: impl Fn(&Mat) -> ExtValue + Send + Sync + 'static,
    ) -> Density {
        assert!(p > 1.0, "growth exponent must exceed 1");
        assert!(coercivity > 0.0, "coercivity constant must be positive");
        Density {
            domain,
            p,
            coercivity,
            mode,
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    fn matches(&self, f: &Mat) -> bool {
        matches!(
            (self.domain, f),
            (Domain::M33, Mat::M33(_)) | (Domain::M32, Mat::M32(_))
        )
    }

    /// Shape-checked evaluation.
    pub fn eval(&self, f: &Mat) -> Result<ExtValue, DensityError> {
        if !self.matches(f) {
            return Err(DensityError::DomainMismatch);
        }
        Ok((self.eval)(f))
    }

    /// Evaluation on a matrix known to match the domain. Panics otherwise.
    pub fn at(&self, f: &Mat) -> ExtValue {
        assert!(
            self.matches(f),
            "matrix shape does not match density domain"
        );
        (self.eval)(f)
    }

    pub fn has_det_constraint(&self) -> bool {
        self.mode != ConstraintMode::None
    }
}

/// `W(F) = |F|^p + h(det-type quantity)` on 3x3 matrices. Coercive with
/// `C = 1`.
pub fn make_det_barrier(p: f64, h: HFunction, mode: ConstraintMode) -> Density {
    assert!(p > 1.0);
    let name = format!("det_barrier(p={p},{mode:?})");
    Density::custom(Domain::M33, p, 1.0, mode, name, move |m| {
        let f = m.as_m33().expect("3x3 density");
        let bulk = ExtValue::finite(growth_power(f.norm_squared(), p));
        let d = det3(f);
        let barrier = match mode {
            ConstraintMode::StrictPositive => {
                if d > 0.0 {
                    h.eval(d)
                } else {
                    Infinite
                }
            }
            ConstraintMode::Nonzero | ConstraintMode::AbsBarrier => h.eval(d.abs()),
            ConstraintMode::None => Finite(0.0),
        };
        bulk.add(&barrier)
    })
}

/// `W(xi) = |xi|^p + h(|xi_1 ^ xi_2|)` on 3x2 matrices; infinite exactly on
/// the rank-deficient set.
pub fn make_membrane_barrier(p: f64, h: HFunction) -> Density {
    assert!(p > 1.0);
    assert!(
        h.eval(0.0).is_infinite(),
        "membrane barrier requires h(0) = +inf"
    );
    let name = format!("membrane_barrier(p={p})");
    Density::custom(
        Domain::M32,
        p,
        1.0,
        ConstraintMode::AbsBarrier,
        name,
        move |m| {
            let xi = m.as_m32().expect("3x2 density");
            let bulk = ExtValue::finite(growth_power(xi.norm_squared(), p));
            bulk.add(&h.eval(cross_columns(xi).norm()))
        },
    )
}

/// Plain convex power `|F|^p`, finite everywhere. Handy as a control density.
pub fn convex_power(domain: Domain, p: f64) -> Density {
    Density::custom(
        domain,
        p,
        1.0,
        ConstraintMode::None,
        format!("convex_power(p={p})"),
        move |m| ExtValue::finite(growth_power(m.norm_squared(), p)),
    )
}

/// Member `W_n` of the monotone approximation family of a strictly-positive
/// determinant barrier: `W_n = W` on `det F > 0`, `n (1 + |F|^p)` elsewhere.
pub fn monotone_family(w: &Density, n: u32) -> Density {
    assert!(n >= 1);
    assert_eq!(w.domain, Domain::M33, "family is defined on 3x3 densities");
    assert_eq!(
        w.mode,
        ConstraintMode::StrictPositive,
        "family approximates the strict-positive constraint"
    );
    let inner = w.clone();
    let p = w.p;
    Density::custom(
        Domain::M33,
        p,
        w.coercivity.min(1.0),
        ConstraintMode::None,
        format!("{}~n{}", w.name, n),
        move |m| {
            let f = m.as_m33().expect("3x3 density");
            if det3(f) > 0.0 {
                inner.at(m)
            } else {
                ExtValue::finite(n as f64 * (1.0 + growth_power(f.norm_squared(), p)))
            }
        },
    )
}

// ---------------------------------------------------------------------------
// membrane reduction W_0
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ReduceOptions {
    /// Evaluation budget for the zeta search.
    pub budget: usize,
    /// Extra candidate zetas that must be probed (the returned minimum is
    /// then `<=` the density at each of them).
    pub probes: Vec<Vec3>,
    /// Coordinate resolution target for the golden refinement.
    pub tol: f64,
    /// Coarse grid resolution per axis.
    pub grid: usize,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            budget: 2000,
            probes: Vec::new(),
            tol: 1e-8,
            grid: 11,
        }
    }
}

impl ReduceOptions {
    pub fn with_budget(budget: usize) -> ReduceOptions {
        ReduceOptions {
            budget,
            ..ReduceOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceOutcome {
    pub value: ExtValue,
    /// Witness for the upper bound, absent only when the value is `+inf`.
    pub zeta: Option<Vec3>,
    pub evals: usize,
    pub exhausted: bool,
}

/// Upper approximation of `W_0(xi) = inf_zeta W(xi | zeta)` with certificate.
///
/// The search never over-reports: the returned value is the minimum of the
/// density over every zeta actually probed. It reports `+inf` only when the
/// whole candidate set is infinite and the exact cross-product test confirms
/// `xi_1 ^ xi_2 = 0` for a constrained density.
pub fn membrane_reduce(w: &Density, xi: &Mat32, opts: &ReduceOptions) -> ReduceOutcome {
    assert_eq!(
        w.domain,
        Domain::M33,
        "membrane reduction needs a 3x3 density"
    );
    let mut evals = 0usize;
    let mut best = Infinite;
    let mut best_zeta: Option<Vec3> = None;
    let budget = opts.budget.max(8);

    let probe = |z: Vec3, evals: &mut usize, best: &mut ExtValue, best_zeta: &mut Option<Vec3>| {
        *evals += 1;
        let v = w.at(&Mat::M33(adjoin_column(xi, &z)));
        if v < *best {
            *best = v;
            *best_zeta = Some(z);
        }
    };

    // mandatory probes first so the upper-bound contract holds against them
    for z in &opts.probes {
        probe(*z, &mut evals, &mut best, &mut best_zeta);
    }
    probe(Vec3::ZERO, &mut evals, &mut best, &mut best_zeta);

    // seed along the cross direction, where the determinant is positive
    let cross = cross_columns(xi);
    if let Some(dir) = cross.normalized() {
        for r in geometric_grid(1e-3, 1e3, 13) {
            if evals >= budget {
                break;
            }
            probe(dir.scale(r), &mut evals, &mut best, &mut best_zeta);
        }
    }

    if best.is_infinite() {
        // grid fallback; for constrained densities with an exactly vanishing
        // cross product everything stays infinite and that is the answer
        let r = 2.0;
        let g = opts.grid.max(3);
        'outer: for i in 0..g {
            for j in 0..g {
                for k in 0..g {
                    if evals >= budget {
                        break 'outer;
                    }
                    let c = |t: usize| -1.0 + 2.0 * t as f64 / (g as f64 - 1.0);
                    probe(
                        Vec3([r * c(i), r * c(j), r * c(k)]),
                        &mut evals,
                        &mut best,
                        &mut best_zeta,
                    );
                }
            }
        }
        if best.is_infinite() {
            let exactly_degenerate = cross == Vec3::ZERO;
            if exactly_degenerate && w.has_det_constraint() {
                return ReduceOutcome {
                    value: Infinite,
                    zeta: None,
                    evals,
                    exhausted: false,
                };
            }
            return ReduceOutcome {
                value: Infinite,
                zeta: None,
                evals,
                exhausted: true,
            };
        }
    }

    // coercivity radius: W(xi|zeta) >= C |zeta|^p, so nothing beyond it helps
    let radius = |b: &ExtValue| -> f64 { (b.to_f64() / w.coercivity).powf(1.0 / w.p).max(1e-6) };

    // coarse grid on the coercivity cube
    let g = opts.grid.max(3);
    let r0 = radius(&best);
    'grid: for i in 0..g {
        for j in 0..g {
            for k in 0..g {
                if evals + 1 > budget.saturating_sub(200) {
                    break 'grid;
                }
                let c = |t: usize| -1.0 + 2.0 * t as f64 / (g as f64 - 1.0);
                let z = Vec3([r0 * c(i), r0 * c(j), r0 * c(k)]);
                if z.norm() <= r0 {
                    probe(z, &mut evals, &mut best, &mut best_zeta);
                }
            }
        }
    }

    // coordinate-wise golden refinement around the incumbent; each cycle
    // shrinks the bracket, each golden pass narrows it by ~1e-7
    let mut exhausted = false;
    let mut center = best_zeta.expect("finite incumbent");
    let mut bracket = radius(&best).min(1e6);
    'refine: for _cycle in 0..3 {
        if bracket < opts.tol {
            break;
        }
        for axis in 0..3 {
            let per_axis = 34;
            if evals + per_axis > budget {
                exhausted = true;
                break 'refine;
            }
            let (zstar, vstar) = golden_min(
                center.0[axis] - bracket,
                center.0[axis] + bracket,
                32,
                |z| {
                    let mut cand = center;
                    cand.0[axis] = z;
                    w.at(&Mat::M33(adjoin_column(xi, &cand)))
                },
            );
            evals += per_axis;
            if vstar < best {
                best = vstar;
                center.0[axis] = zstar;
                best_zeta = Some(center);
            }
        }
        bracket *= 0.1;
    }

    ReduceOutcome {
        value: best,
        zeta: best_zeta,
        evals,
        exhausted,
    }
}

// ---------------------------------------------------------------------------
// growth audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GrowthSample {
    pub matrix: Mat,
    pub bound: f64,
    pub measured: ExtValue,
    pub pass: bool,
}

/// Audit of `value <= c (1 + |F|^p)` over a batch of samples.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub samples: Vec<GrowthSample>,
    pub c: f64,
    pub p: f64,
    pub worst_ratio: f64,
    pub all_pass: bool,
}

pub fn check_growth(values: &[(Mat, ExtValue)], c: f64, p: f64) -> GrowthReport {
    let mut samples = Vec::with_capacity(values.len());
    let mut worst: f64 = 0.0;
    for (m, v) in values {
        let bound = c * (1.0 + m.norm().powf(p));
        let ratio = v.to_f64() / bound;
        let pass = v.to_f64() <= bound;
        worst = worst.max(ratio);
        samples.push(GrowthSample {
            matrix: *m,
            bound,
            measured: *v,
            pass,
        });
    }
    GrowthReport {
        all_pass: samples.iter().all(|s| s.pass),
        samples,
        c,
        p,
        worst_ratio: worst,
    }
}
