//! Convex set algebra on generator (vertex) lists and on `{x : Hx ≤ 1}`
//! inequality descriptions.
//!
//! [`ConvexBody`] is the workhorse: the sets carried around by the design
//! (contractive sets, disturbance sets, their images and sums) are all kept as
//! finite point lists whose convex hull is the set. Gauges and containment
//! factors reduce to small LPs over those points; facets are never computed.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::numerics::{solve_lp, LpProblem, LpStatus, Matrix, NumericsError, Tolerances, Vector};

/// Minkowski sums with more candidate points than this are pruned automatically.
pub const PRUNE_THRESHOLD: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("set does not contain the origin (not a C-set)")]
    NotACSet,
    #[error("point lies outside the cone generated by the set; gauge is infinite")]
    GaugeInfinite,
    #[error("negative scaling factor {0}")]
    NegativeScale(f64),
    #[error("generator list is empty")]
    Empty,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn check_dim(expected: usize, got: usize) -> Result<(), SetError> {
    if expected == got {
        Ok(())
    } else {
        Err(SetError::DimensionMismatch { expected, got })
    }
}

/// Convex hull of a finite, nonempty point list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BodyRepr", into = "BodyRepr")]
pub struct ConvexBody {
    /// One generator per column.
    points: Matrix,
    origin_inside: OnceLock<bool>,
}

#[derive(Serialize, Deserialize)]
struct BodyRepr {
    dimension: usize,
    generators: Vec<Vec<f64>>,
}

impl TryFrom<BodyRepr> for ConvexBody {
    type Error = SetError;
    fn try_from(r: BodyRepr) -> Result<Self, SetError> {
        ConvexBody::new(r.dimension, r.generators)
    }
}

impl From<ConvexBody> for BodyRepr {
    fn from(b: ConvexBody) -> Self {
        BodyRepr {
            dimension: b.dim(),
            generators: b.generators().map(|g| g.iter().copied().collect()).collect(),
        }
    }
}

impl PartialEq for ConvexBody {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl ConvexBody {
    pub fn new(dimension: usize, generators: Vec<Vec<f64>>) -> Result<Self, SetError> {
        if generators.is_empty() {
            return Err(SetError::Empty);
        }
        for g in &generators {
            check_dim(dimension, g.len())?;
        }
        let points = Matrix::from_fn(dimension, generators.len(), |i, j| generators[j][i]);
        Self::from_points(points)
    }

    /// Builds a body from a `dimension × count` matrix of column generators.
    pub fn from_points(points: Matrix) -> Result<Self, SetError> {
        if points.ncols() == 0 {
            return Err(SetError::Empty);
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(SetError::NonFinite);
        }
        Ok(ConvexBody {
            points,
            origin_inside: OnceLock::new(),
        })
    }

    pub fn origin(dimension: usize) -> Self {
        Self::from_points(Matrix::zeros(dimension, 1)).expect("origin is a valid body")
    }

    /// Vertices of the box `∏ [-b_k, b_k]`, ordered by binary counting
    /// (bit `k` clear means coordinate `k` at `-b_k`).
    pub fn centered_box(half_widths: &[f64]) -> Result<Self, SetError> {
        let n = half_widths.len();
        if half_widths.iter().any(|b| !b.is_finite()) {
            return Err(SetError::NonFinite);
        }
        let count = 1usize << n;
        let points = Matrix::from_fn(n, count, |i, j| {
            if j >> i & 1 == 1 {
                half_widths[i]
            } else {
                -half_widths[i]
            }
        });
        Self::from_points(points)
    }

    pub fn unit_box(dimension: usize) -> Self {
        Self::centered_box(&vec![1.0; dimension]).expect("finite widths")
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn generator(&self, k: usize) -> Vector {
        self.points.column(k).into_owned()
    }

    pub fn generators(&self) -> impl Iterator<Item = Vector> + '_ {
        self.points.column_iter().map(|c| c.into_owned())
    }

    /// Largest absolute coordinate over all generators.
    pub fn magnitude(&self) -> f64 {
        self.points.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Whether the origin lies in the hull (cached after the first call).
    pub fn contains_origin(&self) -> bool {
        *self.origin_inside.get_or_init(|| {
            if self.points.column_iter().any(|c| c.iter().all(|&v| v == 0.0)) {
                return true;
            }
            hull_contains(&self.points, None, &Vector::zeros(self.dim()))
        })
    }

    pub fn ensure_c_set(&self) -> Result<(), SetError> {
        if self.contains_origin() {
            Ok(())
        } else {
            Err(SetError::NotACSet)
        }
    }

    /// Minkowski gauge `min{λ ≥ 0 : x ∈ λ·self}`.
    pub fn gauge(&self, x: &Vector) -> Result<f64, SetError> {
        check_dim(self.dim(), x.len())?;
        self.ensure_c_set()?;
        if x.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let n = self.len();
        let mut lp = LpProblem::minimize(vec![1.0; n]);
        lp.nonnegative();
        for d in 0..self.dim() {
            lp.equal(self.points.row(d).iter().copied().collect(), x[d]);
        }
        let out = solve_lp(&lp)?;
        match out.status {
            LpStatus::Optimal => Ok((-out.value).max(0.0)),
            LpStatus::Infeasible => Err(SetError::GaugeInfinite),
            LpStatus::Unbounded => unreachable!("gauge LP is bounded below by zero"),
        }
    }

    /// Membership test through the gauge.
    pub fn contains(&self, x: &Vector) -> Result<bool, SetError> {
        match self.gauge(x) {
            Ok(g) => Ok(g <= 1.0 + Tolerances::DEFAULT.containment),
            Err(SetError::GaugeInfinite) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Support function `max_k a·v_k`.
    pub fn support(&self, a: &Vector) -> Result<f64, SetError> {
        check_dim(self.dim(), a.len())?;
        let values = a.transpose() * &self.points;
        Ok(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Axis-aligned bounding box `(lower, upper)` when the body equals it.
    pub fn as_box(&self) -> Option<(Vector, Vector)> {
        let n = self.dim();
        let lo = Vector::from_fn(n, |i, _| self.points.row(i).min());
        let hi = Vector::from_fn(n, |i, _| self.points.row(i).max());
        let free: Vec<usize> = (0..n).filter(|&i| hi[i] > lo[i]).collect();
        if free.len() > 16 {
            return None;
        }
        for mask in 0..(1usize << free.len()) {
            let mut corner = lo.clone();
            for (bit, &i) in free.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    corner[i] = hi[i];
                }
            }
            let is_generator = self.points.column_iter().any(|c| {
                c.iter()
                    .zip(corner.iter())
                    .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))
            });
            if !is_generator && !hull_contains(&self.points, None, &corner) {
                return None;
            }
        }
        Some((lo, hi))
    }
}

/// Feasibility of `x = Σ c_k p_k, Σ c_k = 1, c ≥ 0` over the columns of
/// `points`, skipping column `skip`.
fn hull_contains(points: &Matrix, skip: Option<usize>, x: &Vector) -> bool {
    let cols: Vec<usize> = (0..points.ncols()).filter(|&k| Some(k) != skip).collect();
    if cols.is_empty() {
        return false;
    }
    let mut lp = LpProblem::maximize(vec![0.0; cols.len()]);
    lp.nonnegative();
    for d in 0..points.nrows() {
        lp.equal(cols.iter().map(|&k| points[(d, k)]).collect(), x[d]);
    }
    lp.equal(vec![1.0; cols.len()], 1.0);
    matches!(solve_lp(&lp), Ok(out) if out.is_optimal())
}

fn hull_contains_subset(points: &Matrix, subset: &[usize], x: &Vector) -> bool {
    if subset.is_empty() {
        return false;
    }
    let mut lp = LpProblem::maximize(vec![0.0; subset.len()]);
    lp.nonnegative();
    for d in 0..points.nrows() {
        lp.equal(subset.iter().map(|&k| points[(d, k)]).collect(), x[d]);
    }
    lp.equal(vec![1.0; subset.len()], 1.0);
    matches!(solve_lp(&lp), Ok(out) if out.is_optimal())
}

/// `{M v : v ∈ body}`; generators are mapped one by one.
pub fn linear_image(m: &Matrix, body: &ConvexBody) -> Result<ConvexBody, SetError> {
    check_dim(m.ncols(), body.dim())?;
    ConvexBody::from_points(m * body.points())
}

/// Minkowski sum as all pairwise generator sums, pruned once the product
/// exceeds [`PRUNE_THRESHOLD`].
pub fn minkowski_sum(a: &ConvexBody, b: &ConvexBody) -> Result<ConvexBody, SetError> {
    let raw = minkowski_sum_raw(a, b)?;
    if raw.len() > PRUNE_THRESHOLD {
        Ok(prune_generators(&raw))
    } else {
        Ok(raw)
    }
}

/// Minkowski sum without pruning (`|a|·|b|` generators, `a`-major order).
pub fn minkowski_sum_raw(a: &ConvexBody, b: &ConvexBody) -> Result<ConvexBody, SetError> {
    check_dim(a.dim(), b.dim())?;
    let (na, nb) = (a.len(), b.len());
    let pts = Matrix::from_fn(a.dim(), na * nb, |i, j| {
        a.points[(i, j / nb)] + b.points[(i, j % nb)]
    });
    ConvexBody::from_points(pts)
}

/// Sum of several bodies, pruning after every partial sum.
pub fn minkowski_sum_all<'a, I>(bodies: I) -> Result<Option<ConvexBody>, SetError>
where
    I: IntoIterator<Item = &'a ConvexBody>,
{
    let mut acc: Option<ConvexBody> = None;
    for b in bodies {
        let b = prune_generators(b);
        acc = Some(match acc {
            None => b,
            Some(a) => prune_generators(&minkowski_sum_raw(&a, &b)?),
        });
    }
    Ok(acc)
}

/// Drops near-duplicate points, keeping the first of each cluster.
fn dedup_columns(points: &Matrix, tol: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for k in 0..points.ncols() {
        let c = points.column(k);
        let dup = kept.iter().any(|&j| {
            points
                .column(j)
                .iter()
                .zip(c.iter())
                .all(|(a, b)| (a - b).abs() <= tol)
        });
        if !dup {
            kept.push(k);
        }
    }
    kept
}

/// Removes every generator that lies in the hull of the remaining ones.
///
/// Points are first deduplicated. Unique maximizers of a fixed family of
/// directions are extreme and kept without an LP; every other point is tested
/// against the known-extreme hull and then, if needed, against all others.
pub fn prune_generators(body: &ConvexBody) -> ConvexBody {
    let tol = Tolerances::DEFAULT.prune * body.magnitude().max(f64::MIN_POSITIVE);
    let idx = dedup_columns(body.points(), tol);
    let pts = body.points().select_columns(&idx);
    let n = pts.ncols();
    let dim = pts.nrows();
    if n <= 1 {
        return ConvexBody::from_points(pts).expect("nonempty");
    }

    let mut extreme = vec![false; n];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e75);
    let mut dirs: Vec<Vector> = Vec::new();
    for i in 0..dim {
        let mut e = Vector::zeros(dim);
        e[i] = 1.0;
        dirs.push(e.clone());
        dirs.push(-e);
    }
    for _ in 0..(8 * dim + 16) {
        dirs.push(Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)));
    }
    for d in &dirs {
        let vals = d.transpose() * &pts;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        let mut second = f64::NEG_INFINITY;
        for (k, &v) in vals.iter().enumerate() {
            if v > best.0 {
                second = best.0;
                best = (v, k);
            } else if v > second {
                second = v;
            }
        }
        let scale = d.lp_norm(1) * body.magnitude();
        if best.0 - second > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            extreme[best.1] = true;
        }
    }
    let known: Vec<usize> = (0..n).filter(|&k| extreme[k]).collect();

    let keep = exec::map_range(n, |k| {
        if extreme[k] {
            return true;
        }
        let p = pts.column(k).into_owned();
        if hull_contains_subset(&pts, &known, &p) {
            return false;
        }
        !hull_contains(&pts, Some(k), &p)
    });
    let idx: Vec<usize> = (0..n).filter(|&k| keep[k]).collect();
    ConvexBody::from_points(pts.select_columns(&idx)).expect("a vertex always survives")
}

/// Whether every generator of `body` satisfies every row of `poly` (slack 1e-9).
pub fn contained_in_h(body: &ConvexBody, poly: &HPolytope) -> Result<bool, SetError> {
    Ok(poly.max_row_value(body)? <= 1.0 + Tolerances::DEFAULT.containment)
}

/// Smallest `μ ≥ 0` with `a ⊆ μ·b`: the largest gauge of a generator of `a`.
pub fn containment_factor(a: &ConvexBody, b: &ConvexBody) -> Result<f64, SetError> {
    check_dim(b.dim(), a.dim())?;
    b.ensure_c_set()?;
    let tol = Tolerances::DEFAULT.zero * a.magnitude();
    let idx = dedup_columns(a.points(), tol);
    let pts = a.points();
    let max = exec::try_max_range(idx.len(), |k| b.gauge(&pts.column(idx[k]).into_owned()))?;
    Ok(max.max(0.0))
}

pub fn scale(body: &ConvexBody, t: f64) -> Result<ConvexBody, SetError> {
    if !(t >= 0.0) {
        return Err(SetError::NegativeScale(t));
    }
    ConvexBody::from_points(body.points() * t)
}

/// Polyhedron `{x : h·x ≤ 1 for every row h}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct HPolytope {
    dimension: usize,
    rows: Matrix,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    dimension: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<PolyRepr> for HPolytope {
    type Error = SetError;
    fn try_from(r: PolyRepr) -> Result<Self, SetError> {
        HPolytope::new(r.dimension, r.rows)
    }
}

impl From<HPolytope> for PolyRepr {
    fn from(p: HPolytope) -> Self {
        PolyRepr {
            dimension: p.dimension,
            rows: p
                .rows
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

impl HPolytope {
    pub fn new(dimension: usize, rows: Vec<Vec<f64>>) -> Result<Self, SetError> {
        for r in &rows {
            check_dim(dimension, r.len())?;
            if r.iter().any(|v| !v.is_finite()) {
                return Err(SetError::NonFinite);
            }
        }
        let m = Matrix::from_fn(rows.len(), dimension, |i, j| rows[i][j]);
        Ok(HPolytope { dimension, rows: m })
    }

    /// `{x : |x_k| ≤ b_k}`, two rows per coordinate.
    pub fn centered_box(half_widths: &[f64]) -> Result<Self, SetError> {
        let n = half_widths.len();
        let mut rows = Vec::with_capacity(2 * n);
        for (k, &b) in half_widths.iter().enumerate() {
            if !(b > 0.0) || !b.is_finite() {
                return Err(SetError::NonFinite);
            }
            let mut r = vec![0.0; n];
            r[k] = 1.0 / b;
            rows.push(r.clone());
            r[k] = -1.0 / b;
            rows.push(r);
        }
        Self::new(n, rows)
    }

    pub fn dim(&self) -> usize {
        self.dimension
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    /// `{x : h·x ≤ t}`, i.e. the polytope scaled by `t > 0`.
    pub fn scaled(&self, t: f64) -> Result<Self, SetError> {
        if !(t > 0.0) {
            return Err(SetError::NegativeScale(t));
        }
        Ok(HPolytope {
            dimension: self.dimension,
            rows: &self.rows / t,
        })
    }

    pub fn contains(&self, x: &Vector) -> Result<bool, SetError> {
        check_dim(self.dimension, x.len())?;
        let v = &self.rows * x;
        Ok(v.iter().all(|&r| r <= 1.0 + Tolerances::DEFAULT.containment))
    }

    /// `max_{h, v} h·v` over rows `h` and generators `v` of `body` (0 without rows).
    pub fn max_row_value(&self, body: &ConvexBody) -> Result<f64, SetError> {
        check_dim(self.dimension, body.dim())?;
        if self.rows.nrows() == 0 {
            return Ok(0.0);
        }
        let v = &self.rows * body.points();
        Ok(v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Half widths when the polytope is exactly a centered axis-aligned box.
    pub fn box_half_widths(&self) -> Option<Vec<f64>> {
        let n = self.dimension;
        let mut pos: Vec<Option<f64>> = vec![None; n];
        let mut neg: Vec<Option<f64>> = vec![None; n];
        for r in self.rows.row_iter() {
            let nz: Vec<usize> = (0..n).filter(|&j| r[j] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let j = nz[0];
            let slot = if r[j] > 0.0 { &mut pos[j] } else { &mut neg[j] };
            let b = 1.0 / r[j].abs();
            match slot {
                Some(prev) if (*prev - b).abs() > 1e-12 * b => return None,
                _ => *slot = Some(b),
            }
        }
        (0..n)
            .map(|j| match (pos[j], neg[j]) {
                (Some(a), Some(b)) if (a - b).abs() <= 1e-12 * a => Some(a),
                _ => None,
            })
            .collect()
    }
}
