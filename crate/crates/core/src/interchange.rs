//! Desk-scale check of the inf/integral permutation over determinant
//! half-space constraints: the pointwise constrained minima integrate to the
//! same value that blended continuous selections approach from above.

use crate::density::Density;
use crate::extval::ExtValue;
use crate::mat::{adjoin_column, cross_columns, sphere_design, Mat, Mat32, Vec3};
use crate::membrane::PlanarPiecewiseAffineMap;
use crate::par::map_indexed;
use crate::search::golden_min;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum InterchangeError {
    #[error("no witness direction separates the regions at the grid resolution")]
    Infeasible,
}

/// Closed convex constraint cell `{zeta : det(xi | zeta) >= 1/j}` (or the
/// reflected `<= -1/j`): a half-space with normal `xi_1 ^ xi_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexCellSet {
    pub normal: Vec3,
    /// Offset `1/j` on the signed determinant.
    pub level: f64,
    /// `+1` for the upper half-space, `-1` for the reflection.
    pub side: f64,
}

impl ConvexCellSet {
    pub fn upper(xi: &Mat32, j: f64) -> ConvexCellSet {
        ConvexCellSet {
            normal: cross_columns(xi),
            level: 1.0 / j,
            side: 1.0,
        }
    }

    pub fn lower(xi: &Mat32, j: f64) -> ConvexCellSet {
        ConvexCellSet {
            normal: cross_columns(xi),
            level: 1.0 / j,
            side: -1.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.normal.norm() == 0.0
    }

    pub fn contains(&self, zeta: &Vec3) -> bool {
        self.side * self.normal.dot(zeta) >= self.level - 1e-12 * (1.0 + zeta.norm())
    }

    /// Exact Euclidean projection onto the half-space.
    pub fn project(&self, zeta: &Vec3) -> Vec3 {
        let n2 = self.normal.dot(&self.normal);
        if n2 == 0.0 {
            return *zeta;
        }
        let signed = self.side * self.normal.dot(zeta);
        if signed >= self.level {
            *zeta
        } else {
            zeta.add(&self.normal.scale(self.side * (self.level - signed) / n2))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MultifunctionKind {
    /// Signed partition: each region constrained to one side, the common
    /// boundary set to the intersection.
    Gamma,
    /// Uniform family: every region on the positive side.
    Lambda,
}

/// Region-wise constraint multifunction on the strip partition, with the
/// witness that certifies the complement set is nonempty.
#[derive(Debug, Clone, Serialize)]
pub struct RegionalMultifunction {
    pub kind: MultifunctionKind,
    pub cells: Vec<ConvexCellSet>,
    /// Sign of each region in the gamma partition (all `+1` for lambda).
    pub signs: Vec<f64>,
    pub witness: Vec3,
    pub j: f64,
    /// Smallest level at which the witness works (gamma kind).
    pub j_min: f64,
}

/// Build the constraint family for the regions of `psi`.
///
/// The gamma kind searches a direction grid for a witness with nonzero
/// determinant against every region gradient, fixes the sign partition from
/// the witness and reports `j_min = ceil(1 / min_i |det|)`.
pub fn build_multifunction(
    psi: &PlanarPiecewiseAffineMap,
    j: f64,
    kind: MultifunctionKind,
) -> Result<RegionalMultifunction, InterchangeError> {
    assert!(j > 0.0);
    let crosses: Vec<Vec3> = psi
        .regions
        .iter()
        .map(|(_, xi)| cross_columns(xi))
        .collect();
    if crosses.iter().any(|c| c.norm() == 0.0) {
        return Err(InterchangeError::Infeasible);
    }
    match kind {
        MultifunctionKind::Lambda => {
            let cells: Vec<ConvexCellSet> = psi
                .regions
                .iter()
                .map(|(_, xi)| ConvexCellSet::upper(xi, j))
                .collect();
            // witness for the intersection on the complement
            let mut dirs = sphere_design(3);
            dirs.extend(crosses.iter().filter_map(|c| c.normalized()));
            let best = dirs
                .iter()
                .map(|d| {
                    let worst = crosses
                        .iter()
                        .map(|c| c.dot(d))
                        .fold(f64::INFINITY, f64::min);
                    (worst, *d)
                })
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            if best.0 <= 0.0 {
                return Err(InterchangeError::Infeasible);
            }
            let witness = best.1.scale(1.0 / (j * best.0));
            Ok(RegionalMultifunction {
                kind,
                signs: vec![1.0; psi.regions.len()],
                cells,
                witness,
                j,
                j_min: (1.0 / best.0).ceil().max(1.0),
            })
        }
        MultifunctionKind::Gamma => {
            let dirs = sphere_design(3);
            let best = dirs
                .iter()
                .map(|d| {
                    let worst = crosses
                        .iter()
                        .map(|c| c.dot(d).abs())
                        .fold(f64::INFINITY, f64::min);
                    (worst, *d)
                })
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            if best.0 <= 0.0 {
                return Err(InterchangeError::Infeasible);
            }
            let j_min = (1.0 / best.0).ceil().max(1.0);
            let j_eff = j.max(j_min);
            let signs: Vec<f64> = crosses
                .iter()
                .map(|c| if c.dot(&best.1) >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            let cells: Vec<ConvexCellSet> = psi
                .regions
                .iter()
                .zip(&signs)
                .map(|((_, xi), s)| {
                    if *s > 0.0 {
                        ConvexCellSet::upper(xi, j_eff)
                    } else {
                        ConvexCellSet::lower(xi, j_eff)
                    }
                })
                .collect();
            let witness = best.1.scale(1.0 / (j_eff * best.0));
            Ok(RegionalMultifunction {
                kind,
                signs,
                cells,
                witness,
                j: j_eff,
                j_min,
            })
        }
    }
}

/// Density on fibers: `(x, zeta) -> [0, +inf]`, continuous in `zeta`.
pub type FiberDensity<'a> = dyn Fn(usize, (f64, f64), &Vec3) -> ExtValue + Sync + 'a;

/// Builds the fiber density `f(x, zeta) = W(grad psi(x) | zeta)`.
pub fn fiber_from_density<'a>(
    w: &'a Density,
    psi: &'a PlanarPiecewiseAffineMap,
) -> impl Fn(usize, (f64, f64), &Vec3) -> ExtValue + Sync + 'a {
    move |region: usize, _x: (f64, f64), zeta: &Vec3| {
        w.at(&Mat::M33(adjoin_column(&psi.regions[region].1, zeta)))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapRow {
    pub blend: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// One interchange measurement on a `grid x grid` quadrature of the unit
/// square with strip regions: `rhs` integrates the pointwise constrained
/// minima, `lhs` the blended continuous selection with ramp width
/// `1/blend`. The blend value at each point is probed by the pointwise
/// search, so `gap >= 0` exactly and shrinks with the blend zone.
pub fn interchange_gap(
    f: &FiberDensity<'_>,
    psi: &PlanarPiecewiseAffineMap,
    gamma: &RegionalMultifunction,
    grid: usize,
    blend: usize,
    search_budget: usize,
) -> GapRow {
    let breaks = {
        let mut b = vec![0.0];
        let mut acc = 0.0;
        for (a, _) in &psi.regions {
            acc += a;
            b.push(acc);
        }
        *b.last_mut().unwrap() = 1.0;
        b
    };
    let region_of = |x1: f64| -> usize {
        let k = breaks.len() - 1;
        (0..k).find(|&i| x1 < breaks[i + 1]).unwrap_or(k - 1)
    };
    let boundary_dist = |x1: f64, x2: f64| -> f64 {
        let mut d = x2.min(1.0 - x2);
        for &b in &breaks {
            d = d.min((x1 - b).abs());
        }
        d
    };

    // blend anchor: best point of the intersection of all cells (the value
    // of the multifunction on the region complement), seeded at the witness
    let anchor = common_min(f, psi, &gamma.cells, gamma.witness, search_budget);

    // region argmins, each seeded with the anchor and the witness
    let region_mins: Vec<Vec3> = psi
        .regions
        .iter()
        .enumerate()
        .map(|(i, _)| {
            pointwise_min(
                f,
                i,
                (0.5, 0.5),
                &gamma.cells[i],
                &[anchor, gamma.witness],
                search_budget,
            )
            .1
        })
        .collect();

    let cells = map_indexed(grid * grid, |idx| {
        let ix = idx % grid;
        let iy = idx / grid;
        let x1 = (ix as f64 + 0.5) / grid as f64;
        let x2 = (iy as f64 + 0.5) / grid as f64;
        let region = region_of(x1);
        let cell = &gamma.cells[region];
        let ramp = (blend as f64 * boundary_dist(x1, x2)).min(1.0);
        let selection = anchor
            .scale(1.0 - ramp)
            .add(&region_mins[region].scale(ramp));
        let lhs_val = f(region, (x1, x2), &selection);
        let (rhs_val, _) = pointwise_min(
            f,
            region,
            (x1, x2),
            cell,
            &[gamma.witness, region_mins[region], selection],
            search_budget,
        );
        (lhs_val.to_f64(), rhs_val.to_f64())
    });
    let lhs = cells.iter().map(|c| c.0).sum::<f64>() / (grid * grid) as f64;
    let rhs = cells.iter().map(|c| c.1).sum::<f64>() / (grid * grid) as f64;
    GapRow {
        blend,
        lhs,
        rhs,
        gap: lhs - rhs,
    }
}

/// Best common point of the intersection of every region cell, minimizing
/// the area-weighted objective. Coordinate golden descent from the witness;
/// infeasible probes count as infinite, so the result stays inside the
/// (convex) intersection.
fn common_min(
    f: &FiberDensity<'_>,
    psi: &PlanarPiecewiseAffineMap,
    cells: &[ConvexCellSet],
    witness: Vec3,
    budget: usize,
) -> Vec3 {
    let objective = |z: &Vec3| -> ExtValue {
        if !cells.iter().all(|c| c.contains(z)) {
            return ExtValue::Infinite;
        }
        let mut acc = ExtValue::finite(0.0);
        for (i, (area, _)) in psi.regions.iter().enumerate() {
            acc = acc.add(&f(i, (0.5, 0.5), z).scale(*area));
            if acc.is_infinite() {
                return acc;
            }
        }
        acc
    };
    let mut best = objective(&witness);
    let mut center = witness;
    let mut evals = 1usize;
    for k in 0..4 {
        let cand = witness.scale(2.0_f64.powi(k));
        let v = objective(&cand);
        evals += 1;
        if v < best {
            best = v;
            center = cand;
        }
    }
    let r0 = (best.to_f64().min(1e12) + 1.0).cbrt().max(1.0) * 2.0;
    for cycle in 0..3 {
        if evals + 90 > budget {
            break;
        }
        evals += 90;
        let r = r0 * 0.4_f64.powi(cycle);
        for axis in 0..3 {
            let (z, v) = golden_min(center.0[axis] - r, center.0[axis] + r, 28, |t| {
                let mut cand = center;
                cand.0[axis] = t;
                objective(&cand)
            });
            if v < best {
                best = v;
                center.0[axis] = z;
            }
        }
    }
    center
}

/// Constrained pointwise minimum over a half-space cell: probe projections,
/// a coarse feasible grid and golden refinements in the (normal, tangent)
/// frame. Every probe is feasible; all `probes` are projected and included,
/// so the result is `<=` the density at each projected probe.
pub fn pointwise_min(
    f: &FiberDensity<'_>,
    region: usize,
    x: (f64, f64),
    cell: &ConvexCellSet,
    probes: &[Vec3],
    budget: usize,
) -> (ExtValue, Vec3) {
    let n2 = cell.normal.dot(&cell.normal);
    assert!(n2 > 0.0, "empty constraint cell");
    let unit = cell.normal.scale(cell.side / n2.sqrt());
    let floor = cell.level / n2.sqrt();
    let t1 = unit.any_orthogonal();
    let t2 = unit.cross(&t1);
    let at = |s: f64, a: f64, b: f64| unit.scale(s.max(floor)).add(&t1.scale(a)).add(&t2.scale(b));

    let mut best = ExtValue::Infinite;
    let mut best_z = at(floor, 0.0, 0.0);
    let mut evals = 0usize;
    let probe = |z: Vec3, best: &mut ExtValue, best_z: &mut Vec3, evals: &mut usize| {
        *evals += 1;
        let v = f(region, x, &z);
        if v < *best {
            *best = v;
            *best_z = z;
        }
    };
    for z in probes {
        probe(cell.project(z), &mut best, &mut best_z, &mut evals);
    }
    probe(at(floor, 0.0, 0.0), &mut best, &mut best_z, &mut evals);
    for k in -3..5 {
        probe(
            at(floor + 2.0_f64.powi(k), 0.0, 0.0),
            &mut best,
            &mut best_z,
            &mut evals,
        );
    }
    let reach = (best.to_f64().min(1e12) + 1.0).cbrt().max(1.0) * 2.0;
    let g = 5usize;
    'grid: for i in 0..g {
        for jj in 0..g {
            for k in 0..g {
                if evals >= budget {
                    break 'grid;
                }
                let c = |t: usize| -1.0 + 2.0 * t as f64 / (g as f64 - 1.0);
                probe(
                    at(
                        floor + (c(i) + 1.0) * reach / 2.0,
                        c(jj) * reach,
                        c(k) * reach,
                    ),
                    &mut best,
                    &mut best_z,
                    &mut evals,
                );
            }
        }
    }
    for _ in 0..2 {
        if evals + 90 > budget {
            break;
        }
        evals += 90;
        let s0 = best_z.dot(&unit);
        let a0 = best_z.dot(&t1);
        let b0 = best_z.dot(&t2);
        let r = reach.max(1e-6);
        let (s1, _) = golden_min(floor, s0 + r, 28, |s| f(region, x, &at(s, a0, b0)));
        let (a1, _) = golden_min(a0 - r, a0 + r, 28, |a| f(region, x, &at(s1, a, b0)));
        let (b1, _) = golden_min(b0 - r, b0 + r, 28, |b| f(region, x, &at(s1, a1, b)));
        probe(at(s1, a1, b1), &mut best, &mut best_z, &mut evals);
    }
    (best, best_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_det_barrier, ConstraintMode, HFunction};
    use crate::sampling;
    use approx::assert_abs_diff_eq;

    fn single_plane() -> PlanarPiecewiseAffineMap {
        PlanarPiecewiseAffineMap::single(Mat32::from_cols(Vec3::E1, Vec3::E2))
    }

    #[test]
    fn lambda_halfspace_shape() {
        let gamma = build_multifunction(&single_plane(), 2.0, MultifunctionKind::Lambda).unwrap();
        let cell = &gamma.cells[0];
        // det(xi | zeta) = zeta_3 >= 1/2
        assert_eq!(cell.normal, Vec3::E3);
        assert!(cell.contains(&Vec3([7.0, -2.0, 0.5])));
        assert!(!cell.contains(&Vec3([0.0, 0.0, 0.49])));
        assert!(cell.contains(&gamma.witness));
    }

    #[test]
    fn gamma_partition_with_opposed_normals() {
        let psi = PlanarPiecewiseAffineMap::new(vec![
            (0.5, Mat32::from_cols(Vec3::E1, Vec3::E2)),
            (0.5, Mat32::from_cols(Vec3::E2, Vec3::E1)),
        ]);
        let gamma = build_multifunction(&psi, 2.0, MultifunctionKind::Gamma).unwrap();
        assert_eq!(gamma.signs.len(), 2);
        assert!(
            gamma.signs[0] * gamma.signs[1] < 0.0,
            "normals e3 and -e3 split"
        );
        // the witness sits in every signed cell with margin 1/j
        for cell in &gamma.cells {
            assert!(cell.contains(&gamma.witness));
        }
    }

    #[test]
    fn degenerate_region_is_infeasible() {
        let psi = PlanarPiecewiseAffineMap::single(Mat32::from_cols(Vec3::E1, Vec3::E1));
        for kind in [MultifunctionKind::Lambda, MultifunctionKind::Gamma] {
            assert_eq!(
                build_multifunction(&psi, 2.0, kind).unwrap_err(),
                InterchangeError::Infeasible
            );
        }
    }

    #[test]
    fn lambda_nesting_in_j() {
        let psi = single_plane();
        let a = build_multifunction(&psi, 2.0, MultifunctionKind::Lambda).unwrap();
        let b = build_multifunction(&psi, 4.0, MultifunctionKind::Lambda).unwrap();
        // larger j relaxes the offset: every zeta feasible at level j stays
        // feasible at level j' > j
        let mut rng = sampling::rng_for(71, 0);
        for _ in 0..200 {
            let z = sampling::gaussian_vec3(&mut rng).scale(3.0);
            if a.cells[0].contains(&z) {
                assert!(b.cells[0].contains(&z));
            }
        }
    }

    #[test]
    fn segments_stay_feasible() {
        let cell = ConvexCellSet::upper(&Mat32::from_cols(Vec3::E1, Vec3::E2), 3.0);
        let mut rng = sampling::rng_for(73, 0);
        for _ in 0..100 {
            let a = cell.project(&sampling::gaussian_vec3(&mut rng).scale(2.0));
            let b = cell.project(&sampling::gaussian_vec3(&mut rng).scale(2.0));
            for k in 0..=10 {
                let t = k as f64 / 10.0;
                let z = a.scale(1.0 - t).add(&b.scale(t));
                assert!(cell.contains(&z));
            }
        }
    }

    #[test]
    fn quadratic_fiber_with_feasible_target_closes_the_gap() {
        // f(x, zeta) = |zeta - g(x)|^2 with g itself a feasible selection
        let psi = single_plane();
        let gamma = build_multifunction(&psi, 2.0, MultifunctionKind::Lambda).unwrap();
        let target = Vec3([0.2, -0.3, 1.0]);
        let f = move |_r: usize, _x: (f64, f64), z: &Vec3| {
            ExtValue::finite(z.sub(&target).dot(&z.sub(&target)))
        };
        let row = interchange_gap(&f, &psi, &gamma, 16, 8, 400);
        assert!(row.gap >= -1e-9);
        assert!(row.gap.abs() <= 1e-8, "gap {}", row.gap);
        assert_abs_diff_eq!(row.rhs, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn barrier_fiber_single_region_matches_constrained_reduction() {
        let w = make_det_barrier(2.0, HFunction::reciprocal(), ConstraintMode::StrictPositive);
        let psi = single_plane();
        let gamma = build_multifunction(&psi, 2.0, MultifunctionKind::Lambda).unwrap();
        let fiber = fiber_from_density(&w, &psi);
        let row = interchange_gap(&fiber, &psi, &gamma, 16, 16, 500);
        // both sides approach the constrained reduction value
        let expected = 2.0 + 3.0 * 2.0_f64.powf(-2.0 / 3.0);
        assert!(row.gap >= -1e-9);
        assert!((row.rhs - expected).abs() <= 1e-3, "rhs {}", row.rhs);
        assert!(row.gap <= 0.01 * row.rhs);
    }
}
