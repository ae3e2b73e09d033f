//! Piecewise-affine test fields stored as exact (weight, gradient-offset)
//! cell lists. Every construction here has piecewise-constant gradients, so
//! cell energies are exact finite sums with no quadrature error.

use crate::density::Density;
use crate::extval::ExtValue;
use crate::mat::{
    cross_columns, rank_one_matrix, DyadLeft, Mat, Mat32, Mat33, RankOneDyad, Vec2, Vec3,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("invalid construction parameters: {0}")]
    BadParams(String),
    #[error("field invariant violated: {0}")]
    BrokenInvariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub weight: f64,
    pub offset: Mat,
}

/// Zero-boundary piecewise-affine perturbation, reduced to its volume
/// fractions and constant gradient offsets. Invariants: weights positive and
/// summing to 1, weighted offsets summing to 0 (zero trace forces zero mean
/// gradient).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineField {
    pub cells: Vec<Cell>,
    /// Construction name and parameters, for reports and replay.
    pub label: String,
}

const FIELD_TOL: f64 = 1e-12;

impl PiecewiseAffineField {
    pub fn new(cells: Vec<Cell>, label: impl Into<String>) -> Result<Self, FieldError> {
        if cells.is_empty() {
            return Err(FieldError::BrokenInvariant("no cells".into()));
        }
        if cells.iter().any(|c| c.weight <= 0.0 || c.weight.is_nan()) {
            return Err(FieldError::BrokenInvariant(
                "cell weights must be positive".into(),
            ));
        }
        let total: f64 = cells.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > FIELD_TOL {
            return Err(FieldError::BrokenInvariant(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let mut mean = cells[0].offset.zero_like();
        let scale = cells
            .iter()
            .map(|c| c.offset.max_abs_entry())
            .fold(0.0_f64, f64::max);
        for c in &cells {
            mean = mean.add(&c.offset.scale(c.weight));
        }
        if mean.max_abs_entry() > FIELD_TOL * (1.0 + scale) {
            return Err(FieldError::BrokenInvariant(format!(
                "weighted offsets do not vanish (|mean| = {:e})",
                mean.max_abs_entry()
            )));
        }
        Ok(PiecewiseAffineField {
            cells,
            label: label.into(),
        })
    }

    /// Single-cell field with zero offset (the `t = 0` baseline).
    pub fn trivial(shape: &Mat) -> Self {
        PiecewiseAffineField {
            cells: vec![Cell {
                weight: 1.0,
                offset: shape.zero_like(),
            }],
            label: "trivial".into(),
        }
    }
}

/// Parameters of the explicit constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstructionParams {
    /// Four 3x2 cells `(F1 -/+ nu | F2 +/- nu)`, weights 1/4.
    Diamond { nu: Vec3 },
    /// Four 3x2 cells shifting one column at a time, weights 1/4.
    Square { nu: Vec3 },
    /// Eight 3x3 cells `(F1 +- nu | F2 +- nu | F3 +- s nu)`, weights 1/8.
    /// `axis` selects which column carries the `s nu` shift.
    Octahedron { nu: Vec3, s: f64, axis: usize },
    /// Rank-one two-gradient construction with explicit boundary-layer
    /// wedges (volumes of a `k x k x 1` box with a `k0`-frame).
    Fonseca {
        a: DyadLeft,
        b: Vec3,
        theta: f64,
        k: f64,
        k0: f64,
    },
    /// Stripe realization of one Kohn-Strang step at `xi` with fixed
    /// `(t, a, b)`, stripe count `n` and direction-perturbation index `l`.
    KsRealization {
        xi: Mat32,
        t: f64,
        a: Vec2,
        b: Vec3,
        n: usize,
        l: usize,
    },
}

pub fn construct(params: &ConstructionParams) -> Result<PiecewiseAffineField, FieldError> {
    match params {
        ConstructionParams::Diamond { nu } => {
            if nu.norm() == 0.0 {
                return Err(FieldError::BadParams("diamond needs nu != 0".into()));
            }
            let n = *nu;
            let m = n.scale(-1.0);
            let cells = [(m, n), (m, m), (n, m), (n, n)]
                .into_iter()
                .map(|(c1, c2)| Cell {
                    weight: 0.25,
                    offset: Mat::M32(Mat32::from_cols(c1, c2)),
                })
                .collect();
            PiecewiseAffineField::new(cells, format!("diamond(nu={:?})", nu.0))
        }
        ConstructionParams::Square { nu } => {
            if nu.norm() == 0.0 {
                return Err(FieldError::BadParams("square needs nu != 0".into()));
            }
            let n = *nu;
            let m = n.scale(-1.0);
            let z = Vec3::ZERO;
            let cells = [(z, n), (m, z), (z, m), (n, z)]
                .into_iter()
                .map(|(c1, c2)| Cell {
                    weight: 0.25,
                    offset: Mat::M32(Mat32::from_cols(c1, c2)),
                })
                .collect();
            PiecewiseAffineField::new(cells, format!("square(nu={:?})", nu.0))
        }
        ConstructionParams::Octahedron { nu, s, axis } => {
            if nu.norm() == 0.0 || *s == 0.0 {
                return Err(FieldError::BadParams(
                    "octahedron needs nu != 0 and s != 0".into(),
                ));
            }
            if *axis > 2 {
                return Err(FieldError::BadParams("axis must be 0, 1 or 2".into()));
            }
            // sign table of the eight tetrahedra (alpha, beta in {-1,1},
            // gamma in {-s, s})
            let signs = [
                (-1.0, -1.0, -1.0),
                (1.0, -1.0, -1.0),
                (1.0, 1.0, -1.0),
                (-1.0, 1.0, -1.0),
                (-1.0, -1.0, 1.0),
                (1.0, -1.0, 1.0),
                (1.0, 1.0, 1.0),
                (-1.0, 1.0, 1.0),
            ];
            let cells = signs
                .into_iter()
                .map(|(al, be, ga)| {
                    let mut cols = [Vec3::ZERO; 3];
                    let others: [usize; 2] = match axis {
                        0 => [1, 2],
                        1 => [0, 2],
                        _ => [0, 1],
                    };
                    cols[others[0]] = nu.scale(al);
                    cols[others[1]] = nu.scale(be);
                    cols[*axis] = nu.scale(ga * s);
                    Cell {
                        weight: 0.125,
                        offset: Mat::M33(Mat33::from_cols(cols[0], cols[1], cols[2])),
                    }
                })
                .collect();
            PiecewiseAffineField::new(
                cells,
                format!("octahedron(nu={:?},s={s},axis={axis})", nu.0),
            )
        }
        ConstructionParams::Fonseca { a, b, theta, k, k0 } => {
            let th = *theta;
            if !(0.0 < th && th < 1.0) {
                return Err(FieldError::BadParams("theta must be in (0,1)".into()));
            }
            if !(*k > *k0 && *k0 > 0.0) {
                return Err(FieldError::BadParams("need k > k0 > 0".into()));
            }
            let dyad = |left: DyadLeft, scale: f64| {
                rank_one_matrix(&RankOneDyad { a: left, b: *b }).scale(scale)
            };
            let mut cells = Vec::new();
            match a {
                DyadLeft::Full(av) => {
                    let au = av
                        .normalized()
                        .ok_or_else(|| FieldError::BadParams("a must be nonzero".into()))?;
                    let tau = au.any_orthogonal();
                    let eta = au.cross(&tau);
                    // frustum volumes of the k x k x 1 box split at the k0-frame
                    let s_frustum = k * k + (k - k0) * (k - k0) + k * (k - k0);
                    let w_plus = th * s_frustum / (3.0 * k * k);
                    let w_minus = (1.0 - th) * s_frustum / (3.0 * k * k);
                    let w_t = (k * k0 - k0 * k0 / 3.0) / (4.0 * k * k);
                    let g = 2.0 * th / k0;
                    cells.push(Cell {
                        weight: w_plus,
                        offset: dyad(DyadLeft::Full(au), 1.0),
                    });
                    cells.push(Cell {
                        weight: w_minus,
                        offset: dyad(DyadLeft::Full(au), -th / (1.0 - th)),
                    });
                    for dir in [tau, eta] {
                        for sign in [1.0, -1.0] {
                            cells.push(Cell {
                                weight: w_t,
                                offset: dyad(DyadLeft::Full(dir), sign * g),
                            });
                        }
                    }
                }
                DyadLeft::Planar(av) => {
                    let norm = av.norm();
                    if norm == 0.0 {
                        return Err(FieldError::BadParams("a must be nonzero".into()));
                    }
                    let au = av.scale(1.0 / norm);
                    let tau = au.perp();
                    // trapezoid areas of the k x 1 strip split at the k0-frame
                    let w_plus = th * (2.0 * k - k0) / (2.0 * k);
                    let w_minus = (1.0 - th) * (2.0 * k - k0) / (2.0 * k);
                    let w_t = k0 / (4.0 * k);
                    let g = 2.0 * th / k0;
                    cells.push(Cell {
                        weight: w_plus,
                        offset: dyad(DyadLeft::Planar(au), 1.0),
                    });
                    cells.push(Cell {
                        weight: w_minus,
                        offset: dyad(DyadLeft::Planar(au), -th / (1.0 - th)),
                    });
                    for sign in [1.0, -1.0] {
                        cells.push(Cell {
                            weight: w_t,
                            offset: dyad(DyadLeft::Planar(tau), sign * g),
                        });
                    }
                }
            }
            PiecewiseAffineField::new(cells, format!("fonseca(theta={theta},k={k},k0={k0})"))
        }
        ConstructionParams::KsRealization { xi, t, a, b, n, l } => {
            let t = *t;
            if !(0.0 < t && t < 1.0) {
                return Err(FieldError::BadParams("t must be in (0,1)".into()));
            }
            if *n < 3 {
                return Err(FieldError::BadParams("stripe count n must be >= 3".into()));
            }
            if a.norm() == 0.0 {
                return Err(FieldError::BadParams("a must be nonzero".into()));
            }
            let cross = cross_columns(xi);
            let nu = cross
                .normalized()
                .ok_or_else(|| FieldError::BadParams("xi must have rank 2".into()))?;
            // perturb b out of the column span when necessary
            let in_span = nu.dot(b).abs() <= 1e-12 * (1.0 + b.norm());
            let b_l = if in_span {
                b.add(&nu.scale(1.0 / (*l).max(1) as f64))
            } else {
                *b
            };
            let nf = *n as f64;
            let dyad = |left: Vec2, scale: f64| {
                rank_one_matrix(&RankOneDyad::planar(left, b_l)).scale(scale)
            };
            let a = *a;
            let aperp = a.perp();
            let apar = Vec2([a.0[0] + aperp.0[0], a.0[1] + aperp.0[1]]);
            let aminus = Vec2([a.0[0] - aperp.0[0], a.0[1] - aperp.0[1]]);
            let zero = Mat::M32(Mat32::ZERO);
            let cells = vec![
                // interior stripes
                Cell {
                    weight: (1.0 - t) * (1.0 - 2.0 / nf),
                    offset: dyad(a, -t),
                },
                Cell {
                    weight: t * (1.0 - 2.0 / nf),
                    offset: dyad(a, 1.0 - t),
                },
                // top and bottom matching wedges
                Cell {
                    weight: t / (2.0 * nf),
                    offset: dyad(a, 1.0 - t),
                },
                Cell {
                    weight: t / (2.0 * nf),
                    offset: dyad(a, 1.0 - t),
                },
                Cell {
                    weight: (1.0 - t) / (2.0 * nf),
                    offset: dyad(apar, -t),
                },
                Cell {
                    weight: (1.0 - t) / (2.0 * nf),
                    offset: dyad(aminus, -t),
                },
                // flat triangles
                Cell {
                    weight: 1.0 / (2.0 * nf),
                    offset: zero,
                },
                Cell {
                    weight: 1.0 / (2.0 * nf),
                    offset: zero,
                },
            ];
            PiecewiseAffineField::new(cells, format!("ks_realization(t={t},n={n},l={l})"))
        }
    }
}

/// Exact cell-wise quadrature of the perturbed energy,
/// `sum_c w_c W(F + G_c)`. Infinite as soon as one cell is infinite.
pub fn energy_of(w: &Density, f: &Mat, field: &PiecewiseAffineField) -> ExtValue {
    let mut acc = ExtValue::finite(0.0);
    for cell in &field.cells {
        let v = w.at(&f.add(&cell.offset));
        acc = acc.add(&v.scale(cell.weight));
        if acc.is_infinite() {
            return ExtValue::Infinite;
        }
    }
    acc
}

/// Vitali pasting: refine each outer cell by its own zero-boundary field.
/// Weights multiply, offsets add. `None` keeps a cell as is.
pub fn compose(
    outer: &PiecewiseAffineField,
    refinements: &[Option<PiecewiseAffineField>],
) -> Result<PiecewiseAffineField, FieldError> {
    if refinements.len() != outer.cells.len() {
        return Err(FieldError::BadParams(
            "one refinement slot per outer cell".into(),
        ));
    }
    let mut cells = Vec::new();
    for (cell, refine) in outer.cells.iter().zip(refinements) {
        match refine {
            None => cells.push(*cell),
            Some(inner) => {
                for ic in &inner.cells {
                    cells.push(Cell {
                        weight: cell.weight * ic.weight,
                        offset: cell.offset.add(&ic.offset),
                    });
                }
            }
        }
    }
    PiecewiseAffineField::new(cells, format!("{}+refined", outer.label))
}

/// Push a field through `(P, Q)`: offsets become `P G Q`. For left-right
/// isotropic densities the construction energy is exactly invariant.
pub fn conjugate_transform(
    field: &PiecewiseAffineField,
    p: &Mat33,
    q: &Mat33,
) -> PiecewiseAffineField {
    let cells = field
        .cells
        .iter()
        .map(|c| {
            let g = c.offset.as_m33().expect("conjugation needs a 3x3 ambient");
            Cell {
                weight: c.weight,
                offset: Mat::M33(p.mul_mat(g).mul_mat(q)),
            }
        })
        .collect();
    PiecewiseAffineField {
        cells,
        label: format!("{}@conj", field.label),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_det_barrier, ConstraintMode, HFunction};
    use crate::mat::det3;
    use approx::assert_abs_diff_eq;

    #[test]
    fn octahedron_at_rank_two_point() {
        // F = (e1 | e2 | 0), nu = e3, s = 1: all eight cells have |det| = 1
        let f = Mat33::from_cols(Vec3::E1, Vec3::E2, Vec3::ZERO);
        let field = construct(&ConstructionParams::Octahedron {
            nu: Vec3::E3,
            s: 1.0,
            axis: 2,
        })
        .unwrap();
        assert_eq!(field.cells.len(), 8);
        for c in &field.cells {
            assert_abs_diff_eq!(c.weight, 0.125);
            let g = c.offset.as_m33().unwrap();
            assert_abs_diff_eq!(det3(&f.add(g)).abs(), 1.0, epsilon = 1e-14);
        }
        let w = make_det_barrier(4.0, HFunction::reciprocal(), ConstraintMode::Nonzero);
        let e = energy_of(&w, &Mat::M33(f), &field);
        assert!(e.is_finite());
        assert!(w.at(&Mat::M33(f)).is_infinite());
    }

    #[test]
    fn diamond_mean_zero_by_symmetry() {
        let field = construct(&ConstructionParams::Diamond {
            nu: Vec3([0.3, -1.2, 0.4]),
        })
        .unwrap();
        assert_eq!(field.cells.len(), 4);
        // the constructor would have rejected a nonzero mean
    }

    #[test]
    fn ks_realization_weights() {
        let xi = Mat32::from_cols(Vec3::E1, Vec3::E2);
        let field = construct(&ConstructionParams::KsRealization {
            xi,
            t: 0.5,
            a: Vec2([1.0, 0.0]),
            b: Vec3::E3,
            n: 10,
            l: 1,
        })
        .unwrap();
        let total: f64 = field.cells.iter().map(|c| c.weight).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fonseca_volumes_sum_to_one() {
        for a in [
            DyadLeft::Full(Vec3([0.2, 0.5, -1.0])),
            DyadLeft::Planar(Vec2([3.0, 4.0])),
        ] {
            let field = construct(&ConstructionParams::Fonseca {
                a,
                b: Vec3([0.1, 0.2, 0.3]),
                theta: 0.3,
                k: 64.0,
                k0: 4.0,
            })
            .unwrap();
            let total: f64 = field.cells.iter().map(|c| c.weight).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn trivial_field_energy_is_density_value() {
        let w = make_det_barrier(2.0, HFunction::reciprocal(), ConstraintMode::StrictPositive);
        let f = Mat::M33(Mat33::from_diag(1.0, 1.0, 2.0));
        let field = PiecewiseAffineField::trivial(&f);
        assert_eq!(energy_of(&w, &f, &field), w.at(&f));
    }

    #[test]
    fn compose_identity_keeps_field() {
        let field = construct(&ConstructionParams::Square {
            nu: Vec3([0.0, 1.0, 0.0]),
        })
        .unwrap();
        let shape = Mat::M32(Mat32::ZERO);
        let idrefs: Vec<Option<PiecewiseAffineField>> = field
            .cells
            .iter()
            .map(|_| Some(PiecewiseAffineField::trivial(&shape)))
            .collect();
        let composed = compose(&field, &idrefs).unwrap();
        assert_eq!(composed.cells.len(), field.cells.len());
        for (a, b) in composed.cells.iter().zip(&field.cells) {
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.offset, b.offset);
        }
    }

    #[test]
    fn compose_preserves_invariants_randomly() {
        let mut rng = crate::sampling::rng_for(31, 0);
        for _ in 0..20 {
            let outer = construct(&ConstructionParams::Diamond {
                nu: crate::sampling::gaussian_vec3(&mut rng),
            })
            .unwrap();
            let refs: Vec<Option<PiecewiseAffineField>> = (0..4)
                .map(|_| {
                    Some(
                        construct(&ConstructionParams::Square {
                            nu: crate::sampling::gaussian_vec3(&mut rng),
                        })
                        .unwrap(),
                    )
                })
                .collect();
            // the constructor revalidates the invariants
            let composed = compose(&outer, &refs).unwrap();
            assert_eq!(composed.cells.len(), 16);
        }
    }

    #[test]
    fn energy_never_beats_the_convex_minorant() {
        // W >= C |.|^p and the mean-zero offsets give, by convexity,
        // sum w W(F + G) >= C |F|^p for every admissible field
        let w = make_det_barrier(2.0, HFunction::reciprocal(), ConstraintMode::Nonzero);
        let mut rng = crate::sampling::rng_for(97, 0);
        for _ in 0..30 {
            let f = crate::sampling::gaussian_mat33(&mut rng);
            let field = construct(&ConstructionParams::Octahedron {
                nu: crate::sampling::gaussian_vec3(&mut rng),
                s: 0.75,
                axis: 1,
            })
            .unwrap();
            let e = energy_of(&w, &Mat::M33(f), &field);
            if let crate::extval::ExtValue::Finite(v) = e {
                assert!(v >= f.norm_squared() - 1e-9);
            }
        }
    }

    #[test]
    fn winning_fields_serialize_for_replay() {
        let field = construct(&ConstructionParams::Square {
            nu: Vec3([0.25, -1.0, 0.5]),
        })
        .unwrap();
        let json = serde_json::to_string(&field).unwrap();
        let back: PiecewiseAffineField = serde_json::from_str(&json).unwrap();
        assert_eq!(back, field);
    }

    #[test]
    fn conjugation_is_energy_invariant_for_isotropic_density() {
        let w = make_det_barrier(2.0, HFunction::reciprocal(), ConstraintMode::Nonzero);
        let mut rng = crate::sampling::rng_for(37, 0);
        for _ in 0..20 {
            let f = crate::sampling::gaussian_mat33(&mut rng);
            let p = crate::sampling::random_rotation(&mut rng);
            let q = crate::sampling::random_rotation(&mut rng);
            let field = construct(&ConstructionParams::Octahedron {
                nu: crate::sampling::gaussian_vec3(&mut rng),
                s: 1.5,
                axis: 2,
            })
            .unwrap();
            let moved = conjugate_transform(&field, &p, &q);
            let fmoved = Mat::M33(p.mul_mat(&f).mul_mat(&q));
            let e0 = energy_of(&w, &Mat::M33(f), &field);
            let e1 = energy_of(&w, &fmoved, &moved);
            match (e0, e1) {
                (ExtValue::Finite(a), ExtValue::Finite(b)) => {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-9 * (1.0 + a.abs()))
                }
                (a, b) => assert_eq!(a.is_infinite(), b.is_infinite()),
            }
        }
    }
}
