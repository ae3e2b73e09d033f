//! Membrane pipeline: reduce the 3x3 density over the out-of-plane column,
//! then run the 2D envelope estimator on the reduction. Includes the
//! two-route consistency diagnostic for the reduce/relax interchange.

use crate::density::{membrane_reduce, Density, Domain, ReduceOptions};
use crate::extval::ExtValue;
use crate::mat::{Mat, Mat32};
use crate::par::map_indexed;
use crate::zest::{optimize_upper, OptimizeOptions, ZestOutcome};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;

/// Piecewise-affine planar deformation: `(area fraction, gradient)` regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarPiecewiseAffineMap {
    pub regions: Vec<(f64, Mat32)>,
}

impl PlanarPiecewiseAffineMap {
    pub fn new(regions: Vec<(f64, Mat32)>) -> Self {
        assert!(!regions.is_empty());
        assert!(regions.iter().all(|(a, _)| *a > 0.0));
        let total: f64 = regions.iter().map(|(a, _)| a).sum();
        assert!((total - 1.0).abs() <= 1e-12, "area fractions must sum to 1");
        PlanarPiecewiseAffineMap { regions }
    }

    pub fn single(xi: Mat32) -> Self {
        PlanarPiecewiseAffineMap {
            regions: vec![(1.0, xi)],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MembraneBudgets {
    /// Out-of-plane search evaluations per reduction.
    pub zeta: usize,
    /// Construction evaluations for the planar estimator.
    pub constructions: usize,
}

impl Default for MembraneBudgets {
    fn default() -> Self {
        MembraneBudgets {
            zeta: 2000,
            constructions: 5000,
        }
    }
}

/// The reduced membrane density of a 3x3 source, with a transparent
/// exact-key cache (cached and uncached evaluations are identical).
pub struct MembraneDensityHandle {
    source: Density,
    budgets: MembraneBudgets,
    reduced: Density,
    cache: Mutex<HashMap<[u64; 6], ExtValue>>,
}

fn bits_key(xi: &Mat32) -> [u64; 6] {
    let mut k = [0u64; 6];
    for (i, c) in xi.cols.iter().enumerate() {
        for (j, x) in c.0.iter().enumerate() {
            k[i * 3 + j] = x.to_bits();
        }
    }
    k
}

/// The reduction `W_0` as a planar density backed by the zeta search.
pub fn reduced_density(w: &Density, zeta_budget: usize) -> Density {
    assert_eq!(w.domain, Domain::M33);
    let inner = w.clone();
    let mode = if w.has_det_constraint() {
        crate::density::ConstraintMode::AbsBarrier
    } else {
        crate::density::ConstraintMode::None
    };
    Density::custom(
        Domain::M32,
        w.p,
        w.coercivity,
        mode,
        format!("reduce({})", w.name),
        move |m| {
            let xi = m.as_m32().expect("planar reduction");
            membrane_reduce(&inner, xi, &ReduceOptions::with_budget(zeta_budget)).value
        },
    )
}

impl MembraneDensityHandle {
    pub fn new(source: Density, budgets: MembraneBudgets) -> Self {
        assert_eq!(source.domain, Domain::M33);
        let reduced = reduced_density(&source, budgets.zeta);
        MembraneDensityHandle {
            source,
            budgets,
            reduced,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn source(&self) -> &Density {
        &self.source
    }

    /// Upper estimate of `W_0` at `xi` (uncached; the search is the cost).
    pub fn w0(&self, xi: &Mat32) -> ExtValue {
        self.reduced.at(&Mat::M32(*xi))
    }

    /// Upper estimate of the membrane density `Z W_0` at `xi`.
    pub fn wmem(&self, xi: &Mat32) -> ExtValue {
        if let Some(v) = self.cache.lock().unwrap().get(&bits_key(xi)) {
            return *v;
        }
        let v = self.wmem_outcome(xi).value;
        self.cache.lock().unwrap().insert(bits_key(xi), v);
        v
    }

    pub fn wmem_outcome(&self, xi: &Mat32) -> ZestOutcome {
        let opts = OptimizeOptions {
            budget: self.budgets.constructions,
            ..OptimizeOptions::default()
        };
        optimize_upper(&self.reduced, &Mat::M32(*xi), &opts)
    }
}

/// Membrane density estimate at a single planar gradient.
pub fn membrane_density(w: &Density, xi: &Mat32, budgets: MembraneBudgets) -> ZestOutcome {
    MembraneDensityHandle::new(w.clone(), budgets).wmem_outcome(xi)
}

/// `I_mem(psi) = sum |V_i| W_mem(grad_i)`.
pub fn membrane_functional(
    handle: &MembraneDensityHandle,
    psi: &PlanarPiecewiseAffineMap,
) -> ExtValue {
    let mut acc = ExtValue::finite(0.0);
    for (area, xi) in &psi.regions {
        acc = acc.add(&handle.wmem(xi).scale(*area));
        if acc.is_infinite() {
            return ExtValue::Infinite;
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// two-route identity diagnostic
// ---------------------------------------------------------------------------

/// Budgets for the two estimation routes. Route A nests a full 3x3
/// estimator inside the zeta search, so its knobs are smaller.
#[derive(Debug, Clone, Copy)]
pub struct IdentityBudgets {
    pub outer_b: usize,
    pub zeta_b: usize,
    pub outer_a: usize,
    pub zeta_a: usize,
    pub inner_a: usize,
}

impl Default for IdentityBudgets {
    fn default() -> Self {
        IdentityBudgets {
            outer_b: 5000,
            zeta_b: 2000,
            outer_a: 1200,
            zeta_a: 400,
            inner_a: 300,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub xi: Mat32,
    /// Relax-then-reduce route.
    pub route_a: ExtValue,
    /// Reduce-then-relax route.
    pub route_b: ExtValue,
    pub gap: f64,
    pub winner_a: String,
    pub winner_b: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    pub max_gap: f64,
}

/// Relative gap between estimating `Z[(Z W)_0]` and `Z[W_0]`. Both routes
/// bound the same exact quantity from above, so the gap measures how well
/// the construction library and budgets resolve the identity, not the
/// identity itself.
pub fn identity_check(w: &Density, samples: &[Mat32], budgets: IdentityBudgets) -> IdentityReport {
    assert_eq!(w.domain, Domain::M33);

    // route A inner density: the 3x3 envelope estimate of W
    let inner = w.clone();
    let inner_budget = budgets.inner_a;
    let zw = Density::custom(
        Domain::M33,
        w.p,
        w.coercivity,
        crate::density::ConstraintMode::None,
        format!("zest({})", w.name),
        move |m| {
            let opts = OptimizeOptions::fast(inner_budget);
            optimize_upper(&inner, m, &opts).value
        },
    );
    let reduced_a = reduced_density(&zw, budgets.zeta_a);
    let reduced_b = reduced_density(w, budgets.zeta_b);

    let rows: Vec<IdentityRow> = map_indexed(samples.len(), |i| {
        let xi = samples[i];
        // both routes use the same case-adapted schedule (no direction
        // sweep) so the gap measures the reduce/relax order, not schedule
        // asymmetry
        let opts_a = OptimizeOptions {
            budget: budgets.outer_a,
            direction_sweep: false,
            compose_winner: false,
            polish: false,
            ..OptimizeOptions::default()
        };
        let opts_b = OptimizeOptions {
            budget: budgets.outer_b,
            direction_sweep: false,
            ..OptimizeOptions::default()
        };
        let a = optimize_upper(&reduced_a, &Mat::M32(xi), &opts_a);
        let b = optimize_upper(&reduced_b, &Mat::M32(xi), &opts_b);
        let gap = match (a.value, b.value) {
            (ExtValue::Finite(x), ExtValue::Finite(y)) => (x - y).abs() / (1.0 + x.min(y)),
            (x, y) => {
                if x.is_infinite() && y.is_infinite() {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        };
        IdentityRow {
            xi,
            route_a: a.value,
            route_b: b.value,
            gap,
            winner_a: a.winner,
            winner_b: b.winner,
        }
    });
    let max_gap = rows.iter().map(|r| r.gap).fold(0.0_f64, f64::max);
    IdentityReport { rows, max_gap }
}
