//! Rank-one convexification: the Kohn-Strang step and its recursion with
//! laminate certificates, plus the singular-value lifting construction with
//! its explicit growth constant.

use crate::density::Density;
use crate::extval::{ExtValue, Infinite};
use crate::mat::{
    circle_directions, hemisphere, rank_one_matrix, rotation_svd, sphere_design, DyadLeft, Mat,
    Mat33, RankOneDyad, Vec3,
};
use crate::par::{argmin_by_key, map_indexed};
use crate::search::{geometric_grid, golden_min};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LaminateError {
    #[error("memoized recursion exceeded the node cap")]
    DepthBudget,
    #[error("rotation-valued decomposition failed to reconstruct the input")]
    SingularDecomposition,
}

// ---------------------------------------------------------------------------
// certificates
// ---------------------------------------------------------------------------

/// Recursive certificate of a Kohn-Strang value. A node mixes its two
/// children along a rank-one direction: `matrix = (1-t) minus + t plus` and
/// `plus - minus = a (x) b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LaminateTree {
    Leaf {
        matrix: Mat,
        value: ExtValue,
    },
    Node {
        t: f64,
        dyad: RankOneDyad,
        matrix: Mat,
        value: ExtValue,
        minus: Box<LaminateTree>,
        plus: Box<LaminateTree>,
    },
}

impl LaminateTree {
    pub fn matrix(&self) -> &Mat {
        match self {
            LaminateTree::Leaf { matrix, .. } | LaminateTree::Node { matrix, .. } => matrix,
        }
    }

    pub fn value(&self) -> ExtValue {
        match self {
            LaminateTree::Leaf { value, .. } | LaminateTree::Node { value, .. } => *value,
        }
    }

    /// `(weight, leaf)` pairs; weights are the products of the mixing
    /// fractions down the tree.
    pub fn leaves(&self) -> Vec<(f64, &Mat)> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a LaminateTree, w: f64, out: &mut Vec<(f64, &'a Mat)>) {
            match t {
                LaminateTree::Leaf { matrix, .. } => out.push((w, matrix)),
                LaminateTree::Node {
                    t: frac,
                    minus,
                    plus,
                    ..
                } => {
                    walk(minus, w * (1.0 - frac), out);
                    walk(plus, w * frac, out);
                }
            }
        }
        walk(self, 1.0, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            LaminateTree::Leaf { .. } => 0,
            LaminateTree::Node { minus, plus, .. } => 1 + minus.depth().max(plus.depth()),
        }
    }
}

/// Result of replaying a certificate bottom-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayReport {
    /// Largest deviation between stored and recomputed node values.
    pub value_error: f64,
    /// Largest barycentric reconstruction defect over all nodes.
    pub matrix_error: f64,
    /// Largest 2x2 minor of any sibling difference (rank-one soundness).
    pub max_minor: f64,
    pub leaf_count: usize,
}

/// Recompute every node value and barycentric reconstruction. When `w` is
/// given, leaf values are re-derived from the density; otherwise the stored
/// leaf values are trusted and only the mixing arithmetic is replayed.
pub fn replay(tree: &LaminateTree, w: Option<&Density>) -> ReplayReport {
    fn minors(d: &Mat) -> f64 {
        let cols: Vec<Vec3> = match d {
            Mat::M33(m) => m.cols.to_vec(),
            Mat::M32(m) => m.cols.to_vec(),
        };
        let mut worst = 0.0_f64;
        for i in 0..cols.len() {
            for j in (i + 1)..cols.len() {
                let c = cols[i].cross(&cols[j]);
                worst = worst.max(c.0[0].abs()).max(c.0[1].abs()).max(c.0[2].abs());
            }
        }
        worst
    }
    fn walk(t: &LaminateTree, w: Option<&Density>, rep: &mut ReplayReport) -> ExtValue {
        match t {
            LaminateTree::Leaf { matrix, value } => {
                let v = match w {
                    Some(d) => d.at(matrix),
                    None => *value,
                };
                rep.leaf_count += 1;
                let defect = match (v, *value) {
                    (ExtValue::Finite(a), ExtValue::Finite(b)) => (a - b).abs(),
                    (a, b) => {
                        if a.is_infinite() == b.is_infinite() {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    }
                };
                rep.value_error = rep.value_error.max(defect);
                v
            }
            LaminateTree::Node {
                t: frac,
                matrix,
                value,
                minus,
                plus,
                ..
            } => {
                let vm = walk(minus, w, rep);
                let vp = walk(plus, w, rep);
                let recomputed = vm.scale(1.0 - frac).add(&vp.scale(*frac));
                let defect = match (recomputed, *value) {
                    (ExtValue::Finite(a), ExtValue::Finite(b)) => (a - b).abs(),
                    (a, b) => {
                        if a.is_infinite() == b.is_infinite() {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    }
                };
                rep.value_error = rep.value_error.max(defect);
                let bar = minus
                    .matrix()
                    .scale(1.0 - frac)
                    .add(&plus.matrix().scale(*frac));
                rep.matrix_error = rep.matrix_error.max(bar.sub(matrix).max_abs_entry());
                rep.max_minor = rep
                    .max_minor
                    .max(minors(&plus.matrix().sub(minus.matrix())));
                recomputed
            }
        }
    }
    let mut rep = ReplayReport {
        value_error: 0.0,
        matrix_error: 0.0,
        max_minor: 0.0,
        leaf_count: 0,
    };
    walk(tree, w, &mut rep);
    rep
}

// ---------------------------------------------------------------------------
// the Kohn-Strang step
// ---------------------------------------------------------------------------

/// Discretization of the `(t, a, b, r)` infimum. All values found are upper
/// bounds of the exact step; refining any grid can only lower them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsConfig {
    /// `t` runs over `k / t_divisions`, `k = 1 .. t_divisions - 1`.
    pub t_divisions: usize,
    /// Direction samples for `a` (half circle in 2D, hemisphere design in 3D).
    pub a_dirs: usize,
    /// Direction samples for `b` (full sphere design).
    pub b_dirs: usize,
    /// Geometric magnitude grid for the dyad.
    pub radii: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Local golden refinements on `(t, r)` around the discrete winner.
    pub refine_passes: usize,
    /// Memo entries allowed before `DepthBudget`.
    pub node_cap: usize,
    /// Memo key quantization.
    pub quantum: f64,
    /// Coercivity data of the underlying density, used to cap the radius:
    /// a leaf larger than the incumbent in `C |.|^p` cannot improve.
    pub coercivity: f64,
    pub p: f64,
}

impl Default for KsConfig {
    fn default() -> Self {
        KsConfig {
            t_divisions: 16,
            a_dirs: 32,
            b_dirs: 92,
            radii: 8,
            r_min: 0.05,
            r_max: 8.0,
            refine_passes: 2,
            node_cap: 200_000,
            quantum: 1e-6,
            coercivity: 1.0,
            p: 2.0,
        }
    }
}

impl KsConfig {
    pub fn for_density(w: &Density) -> KsConfig {
        KsConfig {
            coercivity: w.coercivity,
            p: w.p,
            ..KsConfig::default()
        }
    }

    /// Small grids for recursion depth >= 2 and for tests.
    pub fn coarse(&self) -> KsConfig {
        KsConfig {
            t_divisions: 8,
            a_dirs: 8,
            b_dirs: 12,
            radii: 5,
            refine_passes: 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsSplit {
    pub t: f64,
    /// Dyad with the magnitude folded into `b`.
    pub dyad: RankOneDyad,
}

fn dyad_directions(f: &Mat, cfg: &KsConfig) -> (Vec<DyadLeft>, Vec<Vec3>) {
    let freq_for = |count: usize| (1..=6).find(|q| 10 * q * q + 2 >= count).unwrap_or(6);
    let a: Vec<DyadLeft> = match f {
        Mat::M32(_) => circle_directions(cfg.a_dirs)
            .into_iter()
            .map(DyadLeft::Planar)
            .collect(),
        Mat::M33(_) => hemisphere(&sphere_design(freq_for(cfg.a_dirs * 2)))
            .into_iter()
            .map(DyadLeft::Full)
            .collect(),
    };
    let b = sphere_design(freq_for(cfg.b_dirs));
    (a, b)
}

fn split_leaves(f: &Mat, t: f64, d: &Mat) -> (Mat, Mat) {
    (f.sub(&d.scale(t)), f.add(&d.scale(1.0 - t)))
}

fn combine<O: Fn(&Mat) -> ExtValue>(oracle: &O, f: &Mat, t: f64, d: &Mat) -> ExtValue {
    let (minus, plus) = split_leaves(f, t, d);
    let vm = oracle(&minus);
    if vm.is_infinite() {
        // a split with an infinite leaf never improves
        return Infinite;
    }
    let vp = oracle(&plus);
    if vp.is_infinite() {
        return Infinite;
    }
    vm.scale(1.0 - t).add(&vp.scale(t))
}

/// One Kohn-Strang step at `f` against the oracle for the previous level.
/// Deterministic for a fixed config: candidates are enumerated on fixed
/// grids and reduced by `(value, index)` order. The `t = 0` baseline is
/// always a candidate, so the result never exceeds `oracle(f)`.
pub fn ks_step<O>(oracle: &O, f: &Mat, cfg: &KsConfig) -> (ExtValue, Option<KsSplit>)
where
    O: Fn(&Mat) -> ExtValue + Sync,
{
    let baseline = oracle(f);
    let (a_dirs, b_dirs) = dyad_directions(f, cfg);
    let ts: Vec<f64> = (1..cfg.t_divisions)
        .map(|k| k as f64 / cfg.t_divisions as f64)
        .collect();
    let radii = geometric_grid(cfg.r_min, cfg.r_max, cfg.radii);

    // coercivity cap: with incumbent value v, any leaf with C r^p (1-t)^p
    // beyond v cannot be part of an improving split
    let r_cap = |t: f64| -> f64 {
        match baseline.value() {
            Some(v) => {
                let reach = (v / cfg.coercivity).powf(1.0 / cfg.p);
                (2.0 * reach / t.min(1.0 - t)).max(cfg.r_min)
            }
            None => f64::INFINITY,
        }
    };

    let n_t = ts.len();
    let n_a = a_dirs.len();
    let n_b = b_dirs.len();
    let n_r = radii.len();
    let total = n_t * n_a * n_b * n_r;

    let values = map_indexed(total, |idx| {
        let ri = idx % n_r;
        let bi = (idx / n_r) % n_b;
        let ai = (idx / (n_r * n_b)) % n_a;
        let ti = idx / (n_r * n_b * n_a);
        let t = ts[ti];
        let r = radii[ri];
        if r > r_cap(t) {
            return Infinite;
        }
        let dyad = RankOneDyad {
            a: a_dirs[ai],
            b: b_dirs[bi].scale(r),
        };
        combine(oracle, f, t, &rank_one_matrix(&dyad))
    });

    let best_idx = argmin_by_key(&values, |v| *v).expect("non-empty candidate set");
    if values[best_idx] >= baseline {
        return (baseline, None);
    }

    // decode the winner and polish (t, r) locally
    let ri = best_idx % n_r;
    let bi = (best_idx / n_r) % n_b;
    let ai = (best_idx / (n_r * n_b)) % n_a;
    let ti = best_idx / (n_r * n_b * n_a);
    let mut best_t = ts[ti];
    let mut best_r = radii[ri];
    let mut best_v = values[best_idx];
    let a = a_dirs[ai];
    let b_hat = b_dirs[bi];

    for _ in 0..cfg.refine_passes {
        let dt = 1.0 / cfg.t_divisions as f64;
        let (t_new, v_t) = golden_min(
            (best_t - dt).max(1e-3),
            (best_t + dt).min(1.0 - 1e-3),
            24,
            |t| {
                let dyad = RankOneDyad {
                    a,
                    b: b_hat.scale(best_r),
                };
                combine(oracle, f, t, &rank_one_matrix(&dyad))
            },
        );
        if v_t < best_v {
            best_v = v_t;
            best_t = t_new;
        }
        let (lr_new, v_r) = golden_min(
            (best_r.ln() - 1.0).max(cfg.r_min.ln()),
            (best_r.ln() + 1.0).min(cfg.r_max.ln()),
            24,
            |lr| {
                let dyad = RankOneDyad {
                    a,
                    b: b_hat.scale(lr.exp()),
                };
                combine(oracle, f, best_t, &rank_one_matrix(&dyad))
            },
        );
        if v_r < best_v {
            best_v = v_r;
            best_r = lr_new.exp();
        }
    }

    if best_v < baseline {
        (
            best_v,
            Some(KsSplit {
                t: best_t,
                dyad: RankOneDyad {
                    a,
                    b: b_hat.scale(best_r),
                },
            }),
        )
    } else {
        (baseline, None)
    }
}

// ---------------------------------------------------------------------------
// the recursion with certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct KsEnvelope {
    /// `chain[i]` is the level-`i` value at `f`; nonincreasing in `i`.
    pub chain: Vec<ExtValue>,
    /// Certificate for the deepest level. Its stored values replay exactly;
    /// its root matrix is `f` itself.
    pub tree: LaminateTree,
}

struct Memo {
    levels: Vec<Mutex<HashMap<[i64; 9], ExtValue>>>,
    entries: AtomicUsize,
    cap: usize,
    poisoned: AtomicBool,
}

impl Memo {
    fn key(f: &Mat, quantum: f64) -> [i64; 9] {
        let mut key = [0i64; 9];
        let q = |x: f64| (x / quantum).round() as i64;
        match f {
            Mat::M33(m) => {
                for (c, col) in m.cols.iter().enumerate() {
                    for (r, x) in col.0.iter().enumerate() {
                        key[c * 3 + r] = q(*x);
                    }
                }
            }
            Mat::M32(m) => {
                for (c, col) in m.cols.iter().enumerate() {
                    for (r, x) in col.0.iter().enumerate() {
                        key[c * 3 + r] = q(*x);
                    }
                }
            }
        }
        key
    }
}

fn eval_level(w: &Density, memo: &Memo, cfg: &KsConfig, level: usize, f: &Mat) -> ExtValue {
    if level == 0 {
        return w.at(f);
    }
    if memo.poisoned.load(Ordering::Relaxed) {
        return Infinite;
    }
    let key = Memo::key(f, cfg.quantum);
    if let Some(v) = memo.levels[level - 1].lock().unwrap().get(&key) {
        return *v;
    }
    let level_cfg = if level >= 2 {
        cfg.coarse()
    } else {
        cfg.clone()
    };
    let oracle = |x: &Mat| eval_level(w, memo, cfg, level - 1, x);
    let (v, _) = ks_step(&oracle, f, &level_cfg);
    if memo.entries.fetch_add(1, Ordering::Relaxed) >= memo.cap {
        memo.poisoned.store(true, Ordering::Relaxed);
    }
    memo.levels[level - 1].lock().unwrap().insert(key, v);
    v
}

/// Kohn-Strang chain `R_0 >= R_1 >= ... >= R_depth` at `f` with a laminate
/// certificate for the final level. Deterministic for fixed config.
pub fn ks_envelope(
    w: &Density,
    f: &Mat,
    depth: usize,
    cfg: &KsConfig,
) -> Result<KsEnvelope, LaminateError> {
    let memo = Memo {
        levels: (0..depth.max(1))
            .map(|_| Mutex::new(HashMap::new()))
            .collect(),
        entries: AtomicUsize::new(0),
        cap: cfg.node_cap,
        poisoned: AtomicBool::new(false),
    };
    let chain: Vec<ExtValue> = (0..=depth)
        .map(|i| eval_level(w, &memo, cfg, i, f))
        .collect();
    if memo.poisoned.load(Ordering::Relaxed) {
        return Err(LaminateError::DepthBudget);
    }

    fn build(w: &Density, memo: &Memo, cfg: &KsConfig, level: usize, f: &Mat) -> LaminateTree {
        if level == 0 {
            return LaminateTree::Leaf {
                matrix: *f,
                value: w.at(f),
            };
        }
        let level_cfg = if level >= 2 {
            cfg.coarse()
        } else {
            cfg.clone()
        };
        let oracle = |x: &Mat| eval_level(w, memo, cfg, level - 1, x);
        let (_, split) = ks_step(&oracle, f, &level_cfg);
        match split {
            None => build(w, memo, cfg, level - 1, f),
            Some(s) => {
                let d = rank_one_matrix(&s.dyad);
                let (fm, fp) = split_leaves(f, s.t, &d);
                let minus = build(w, memo, cfg, level - 1, &fm);
                let plus = build(w, memo, cfg, level - 1, &fp);
                let value = minus.value().scale(1.0 - s.t).add(&plus.value().scale(s.t));
                LaminateTree::Node {
                    t: s.t,
                    dyad: s.dyad,
                    matrix: *f,
                    value,
                    minus: Box::new(minus),
                    plus: Box::new(plus),
                }
            }
        }
    }

    let tree = build(w, &memo, cfg, depth, f);
    if memo.poisoned.load(Ordering::Relaxed) {
        return Err(LaminateError::DepthBudget);
    }
    Ok(KsEnvelope { chain, tree })
}

// ---------------------------------------------------------------------------
// singular-value lifting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SvLift {
    pub tree: LaminateTree,
    /// Explicit growth bound `2^3 beta (1 + 2^{p/2} 3^{p/2} alpha^p)(1+|F|^p)`.
    pub bound: f64,
    /// Unweighted sum of `beta (1 + |leaf|^p)` over the leaves; always below
    /// `bound`.
    pub leaf_sum: f64,
}

/// Laminate that replaces every singular value below `alpha` by `+-alpha`.
/// Each split mixes the `-alpha` and `+alpha` branches with fraction
/// `t = (g + alpha) / (2 alpha)`, so the barycenter restores `g` exactly and
/// sibling leaves differ by a rank-one matrix.
pub fn sv_lift(f: &Mat33, alpha: f64, beta: f64, p: f64) -> Result<SvLift, LaminateError> {
    assert!(alpha >= 1.0, "lifting threshold must satisfy alpha >= 1");
    assert!(beta > 0.0 && p > 1.0);
    let growth = |m: &Mat33| beta * (1.0 + m.norm().powf(p));
    let bound = 8.0
        * beta
        * (1.0 + 2.0_f64.powf(p / 2.0) * 3.0_f64.powf(p / 2.0) * alpha.powf(p))
        * (1.0 + f.norm().powf(p));

    // the lift is unnecessary once every singular value clears the
    // threshold (then v(F) >= alpha^3 >= alpha and the direct bound holds)
    if f.singular_values()[0] >= alpha {
        let tree = LaminateTree::Leaf {
            matrix: Mat::M33(*f),
            value: ExtValue::finite(growth(f)),
        };
        return Ok(SvLift {
            tree,
            bound,
            leaf_sum: growth(f),
        });
    }

    let svd = rotation_svd(f);
    if svd.reconstruct().sub(f).norm() > 1e-8 * (1.0 + f.norm()) {
        return Err(LaminateError::SingularDecomposition);
    }
    let g0 = [svd.g.entry(0, 0), svd.g.entry(1, 1), svd.g.entry(2, 2)];
    let small: Vec<usize> = (0..3).filter(|&i| g0[i].abs() < alpha).collect();

    struct Lift<'a> {
        alpha: f64,
        beta: f64,
        p: f64,
        svd: &'a crate::mat::SignedSvd,
    }

    impl Lift<'_> {
        fn assemble(&self, g: &[f64; 3]) -> Mat33 {
            self.svd
                .p
                .mul_mat(&self.svd.q.transpose())
                .mul_mat(&Mat33::from_diag(g[0], g[1], g[2]))
                .mul_mat(&self.svd.q)
        }

        fn growth(&self, m: &Mat33) -> f64 {
            self.beta * (1.0 + m.norm().powf(self.p))
        }

        fn build(&self, g: [f64; 3], slots: &[usize], root: Option<Mat33>) -> LaminateTree {
            match slots.split_first() {
                None => {
                    let m = self.assemble(&g);
                    LaminateTree::Leaf {
                        matrix: Mat::M33(m),
                        value: ExtValue::finite(self.growth(&m)),
                    }
                }
                Some((&j, rest)) => {
                    let t = (g[j] + self.alpha) / (2.0 * self.alpha);
                    let mut g_minus = g;
                    g_minus[j] = -self.alpha;
                    let mut g_plus = g;
                    g_plus[j] = self.alpha;
                    let minus = self.build(g_minus, rest, None);
                    let plus = self.build(g_plus, rest, None);
                    // plus - minus = 2 alpha * P Q^T e_j e_j^T Q: rank one
                    let q_row = self.svd.q.row(j);
                    let u = self.svd.p.mul_vec(&q_row);
                    let dyad = RankOneDyad::full(q_row, u.scale(2.0 * self.alpha));
                    let matrix = root.unwrap_or_else(|| self.assemble(&g));
                    let value = minus.value().scale(1.0 - t).add(&plus.value().scale(t));
                    LaminateTree::Node {
                        t,
                        dyad,
                        matrix: Mat::M33(matrix),
                        value,
                        minus: Box::new(minus),
                        plus: Box::new(plus),
                    }
                }
            }
        }
    }

    let lift = Lift {
        alpha,
        beta,
        p,
        svd: &svd,
    };
    let tree = lift.build(g0, &small, Some(*f));
    let leaf_sum: f64 = tree
        .leaves()
        .iter()
        .map(|(_, m)| lift.growth(m.as_m33().unwrap()))
        .sum();
    Ok(SvLift {
        tree,
        bound,
        leaf_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{
        convex_power, make_membrane_barrier, membrane_reduce, Domain, HFunction, ReduceOptions,
    };
    use crate::mat::Mat32;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ks_step_on_convex_density_keeps_value() {
        let w = convex_power(Domain::M32, 2.0);
        let cfg = KsConfig::for_density(&w).coarse();
        let mut rng = crate::sampling::rng_for(41, 0);
        for _ in 0..10 {
            let f = Mat::M32(crate::sampling::gaussian_mat32(&mut rng));
            let (v, split) = ks_step(&|x: &Mat| w.at(x), &f, &cfg);
            assert_eq!(v, w.at(&f), "convex density must not improve");
            assert!(split.is_none());
        }
    }

    #[test]
    fn ks_step_breaks_rank_one_point() {
        // W_0-style oracle of the 3x3 barrier at xi = (e1 | 0): one step with
        // both leaves of rank 2 yields a finite value
        let w = crate::density::make_det_barrier(
            2.0,
            HFunction::reciprocal(),
            crate::density::ConstraintMode::StrictPositive,
        );
        let oracle = |x: &Mat| {
            membrane_reduce(&w, x.as_m32().unwrap(), &ReduceOptions::with_budget(400)).value
        };
        let xi = Mat::M32(Mat32::from_cols(Vec3::E1, Vec3::ZERO));
        assert!(oracle(&xi).is_infinite());
        let cfg = KsConfig {
            t_divisions: 6,
            a_dirs: 6,
            b_dirs: 12,
            radii: 4,
            refine_passes: 0,
            ..KsConfig::for_density(&w)
        };
        let (v, split) = ks_step(&oracle, &xi, &cfg);
        assert!(v.is_finite(), "one lamination step must escape the barrier");
        assert!(split.is_some());
    }

    #[test]
    fn ks_step_value_decreases_with_finer_grids() {
        let w = make_membrane_barrier(2.0, HFunction::reciprocal());
        let xi = Mat::M32(Mat32::from_cols(Vec3::E1, Vec3::E1.scale(0.5)));
        let coarse = KsConfig {
            t_divisions: 4,
            a_dirs: 4,
            b_dirs: 12,
            radii: 3,
            refine_passes: 0,
            ..KsConfig::for_density(&w)
        };
        // nested grids: doubling divisions keeps every coarse candidate
        let fine = KsConfig {
            t_divisions: 8,
            a_dirs: 8,
            b_dirs: 12,
            radii: 3,
            ..coarse.clone()
        };
        let o = |x: &Mat| w.at(x);
        let (vc, _) = ks_step(&o, &xi, &coarse);
        let (vf, _) = ks_step(&o, &xi, &fine);
        assert!(vf <= vc);
    }

    #[test]
    fn envelope_depth_zero_is_leaf() {
        let w = make_membrane_barrier(2.0, HFunction::reciprocal());
        let f = Mat::M32(Mat32::from_cols(Vec3::E1, Vec3::E2));
        let env = ks_envelope(&w, &f, 0, &KsConfig::for_density(&w)).unwrap();
        assert_eq!(env.chain.len(), 1);
        assert_eq!(env.chain[0], w.at(&f));
        assert!(matches!(env.tree, LaminateTree::Leaf { .. }));
    }

    #[test]
    fn envelope_chain_monotone_and_certificate_replays() {
        let w = make_membrane_barrier(2.0, HFunction::reciprocal());
        let cfg = KsConfig::for_density(&w).coarse();
        let mut rng = crate::sampling::rng_for(43, 0);
        for _ in 0..6 {
            let f = Mat::M32(crate::sampling::gaussian_mat32(&mut rng));
            let env = ks_envelope(&w, &f, 2, &cfg).unwrap();
            for pair in env.chain.windows(2) {
                assert!(pair[1] <= pair[0]);
            }
            let rep = replay(&env.tree, Some(&w));
            assert!(rep.value_error <= 1e-12, "value error {}", rep.value_error);
            assert!(rep.matrix_error <= 1e-12);
            assert!(rep.max_minor <= 1e-12 * (1.0 + f.norm()));
            assert_eq!(env.tree.matrix(), &f);
        }
    }

    #[test]
    fn sv_lift_zero_matrix_gives_eight_sign_leaves() {
        let lift = sv_lift(&Mat33::ZERO, 1.0, 1.0, 2.0).unwrap();
        let leaves = lift.tree.leaves();
        assert_eq!(leaves.len(), 8);
        for (wt, m) in &leaves {
            assert_abs_diff_eq!(*wt, 0.125, epsilon = 1e-15);
            let m = m.as_m33().unwrap();
            assert!(m.sv_product() >= 1.0 - 1e-12);
            assert_abs_diff_eq!(m.norm(), 3.0_f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn sv_lift_single_small_value() {
        let f = Mat33::from_diag(0.5, 2.0, 3.0);
        let lift = sv_lift(&f, 1.0, 1.0, 2.0).unwrap();
        match &lift.tree {
            LaminateTree::Node { t, minus, plus, .. } => {
                assert_abs_diff_eq!(*t, 0.75, epsilon = 1e-12);
                let lo = minus.matrix().as_m33().unwrap();
                let hi = plus.matrix().as_m33().unwrap();
                assert_abs_diff_eq!(
                    lo.sub(&Mat33::from_diag(-1.0, 2.0, 3.0)).norm(),
                    0.0,
                    epsilon = 1e-10
                );
                assert_abs_diff_eq!(
                    hi.sub(&Mat33::from_diag(1.0, 2.0, 3.0)).norm(),
                    0.0,
                    epsilon = 1e-10
                );
            }
            LaminateTree::Leaf { .. } => panic!("expected one split"),
        }
        assert!(lift.leaf_sum <= lift.bound);
    }

    #[test]
    fn node_cap_raises_depth_budget() {
        let w = make_membrane_barrier(2.0, HFunction::reciprocal());
        let cfg = KsConfig {
            node_cap: 3,
            ..KsConfig::for_density(&w).coarse()
        };
        let f = Mat::M32(Mat32::from_cols(Vec3::E1, Vec3::E1.scale(0.5)));
        assert_eq!(
            ks_envelope(&w, &f, 2, &cfg).unwrap_err(),
            LaminateError::DepthBudget
        );
    }

    #[test]
    fn certificate_json_round_trip() {
        let w = make_membrane_barrier(2.0, HFunction::reciprocal());
        let cfg = KsConfig::for_density(&w).coarse();
        let f = Mat::M32(Mat32::from_cols(Vec3::E1, Vec3::E1.scale(0.4)));
        let env = ks_envelope(&w, &f, 1, &cfg).unwrap();
        let json = serde_json::to_string(&env.tree).unwrap();
        let back: LaminateTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back.matrix(), env.tree.matrix());
        assert_eq!(back.value(), env.tree.value());
        let rep = replay(&back, Some(&w));
        assert!(rep.value_error <= 1e-12);
    }

    #[test]
    fn sv_lift_leaves_meet_threshold_on_random_input() {
        let mut rng = crate::sampling::rng_for(47, 0);
        let mut checked = 0;
        while checked < 100 {
            let mut f = crate::sampling::gaussian_mat33(&mut rng);
            f = f.scale(0.4);
            if f.sv_product() >= 1.0 {
                continue;
            }
            checked += 1;
            let lift = sv_lift(&f, 1.0, 2.0, 3.0).unwrap();
            for (_, m) in lift.tree.leaves() {
                assert!(m.as_m33().unwrap().sv_product() >= 1.0 - 1e-9);
            }
            assert!(lift.tree.leaves().len() <= 8);
            assert!(lift.leaf_sum <= lift.bound + 1e-9);
            let rep = replay(&lift.tree, None);
            assert!(rep.matrix_error <= 1e-10 * (1.0 + f.norm()));
            assert!(rep.max_minor <= 1e-10 * (1.0 + f.norm()));
        }
    }
}
