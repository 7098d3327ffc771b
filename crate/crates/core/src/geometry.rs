//! Projections, fiber charts, tube decompositions and dyadic nets.
//!
//! All objects are immutable after construction and safe to read from many
//! threads. Dimensions are small (at most [`crate::field::MAX_DIMS`]), so the
//! linear algebra is done with direct elimination on dense vectors.

use crate::error::{Error, Result};
use crate::field::Rect;
use serde::Serialize;

const TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Modified Gram-Schmidt; returns an orthonormal basis of the span.
fn orthonormalize(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for b in &basis {
            let c = dot(&w, b);
            axpy(&mut w, -c, b);
        }
        let len = norm(&w);
        if len < TOL * (1.0 + norm(v)) {
            return Err(Error::DegenerateBasis(format!(
                "vector {v:?} is linearly dependent on the preceding ones"
            )));
        }
        basis.push(scaled(&w, 1.0 / len));
    }
    Ok(basis)
}

/// Extends an orthonormal family to an orthonormal basis of R^dims and
/// returns the added complement vectors.
fn orthonormal_complement(basis: &[Vec<f64>], dims: usize) -> Vec<Vec<f64>> {
    let mut full: Vec<Vec<f64>> = basis.to_vec();
    let mut complement = Vec::new();
    for k in 0..dims {
        if full.len() == dims {
            break;
        }
        let mut w = vec![0.0; dims];
        w[k] = 1.0;
        for b in &full {
            let c = dot(&w, b);
            axpy(&mut w, -c, b);
        }
        let len = norm(&w);
        if len > 1e-6 {
            let v = scaled(&w, 1.0 / len);
            full.push(v.clone());
            complement.push(v);
        }
    }
    complement
}

/// Solves the square system `M x = rhs` by Gaussian elimination with partial
/// pivoting. Returns `None` when the pivot collapses.
fn solve_square(m: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.iter().cloned().collect();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let (pivot, pmax) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pmax < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in row + 1..n {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Null-space basis of a small matrix (columns = unknowns).
fn null_space(rows: &[Vec<f64>], unknowns: usize) -> Vec<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let nr = a.len();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut row = 0;
    for col in 0..unknowns {
        if row >= nr {
            break;
        }
        let (pivot, pmax) = (row..nr)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pmax < TOL {
            continue;
        }
        a.swap(row, pivot);
        let inv = 1.0 / a[row][col];
        for c in 0..unknowns {
            a[row][c] *= inv;
        }
        for r in 0..nr {
            if r != row {
                let f = a[r][col];
                for c in 0..unknowns {
                    a[r][c] -= f * a[row][c];
                }
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
    let mut basis = Vec::new();
    for free in 0..unknowns {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![0.0; unknowns];
        v[free] = 1.0;
        for &(r, c) in &pivots {
            v[c] = -a[r][free];
        }
        basis.push(v);
    }
    basis
}

/// Orthogonal projection of rank `N'` from `R^N`, stored through orthonormal
/// bases of its range and kernel. For `N = 2`, rank 1, the kernel angle is
/// recorded.
#[derive(Debug, Clone)]
pub struct Projection {
    dims: usize,
    range: Vec<Vec<f64>>,
    kernel: Vec<Vec<f64>>,
    theta: Option<f64>,
}

impl Projection {
    /// Rank-1 projection of the plane whose kernel forms angle `theta` with
    /// the horizontal axis.
    pub fn from_angle(theta: f64) -> Self {
        let kernel = vec![vec![theta.cos(), theta.sin()]];
        let range = vec![vec![theta.sin(), -theta.cos()]];
        Projection {
            dims: 2,
            range,
            kernel,
            theta: Some(theta),
        }
    }

    /// Projection onto the span of the given (not necessarily orthonormal)
    /// range vectors.
    pub fn from_range_basis(dims: usize, range: &[Vec<f64>]) -> Result<Self> {
        let rank = range.len();
        if rank == 0 || rank >= dims {
            return Err(Error::Rank { rank, dims });
        }
        if range.iter().any(|v| v.len() != dims) {
            return Err(Error::DegenerateBasis("basis vector length mismatch".into()));
        }
        let range = orthonormalize(range)?;
        let kernel = orthonormal_complement(&range, dims);
        let theta = if dims == 2 && rank == 1 {
            Some(kernel[0][1].atan2(kernel[0][0]))
        } else {
            None
        };
        Ok(Projection {
            dims,
            range,
            kernel,
            theta,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn rank(&self) -> usize {
        self.range.len()
    }

    /// Kernel dimension N'' = N - N'.
    pub fn kernel_dim(&self) -> usize {
        self.dims - self.rank()
    }

    pub fn range_basis(&self) -> &[Vec<f64>] {
        &self.range
    }

    pub fn kernel_basis(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    /// Coordinates of `p(t)` in the orthonormal range basis.
    pub fn project(&self, t: &[f64]) -> Vec<f64> {
        self.range.iter().map(|r| dot(r, t)).collect()
    }

    /// Adjoint: range coordinates back to the point of `R^N` they name.
    pub fn embed(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        for (c, r) in coords.iter().zip(&self.range) {
            axpy(&mut out, *c, r);
        }
        out
    }

    /// True when the kernel meets the open positive quadrant/orthant, i.e.
    /// some kernel vector has all components of one strict sign.
    pub fn kernel_is_increasing(&self) -> bool {
        self.kernel.iter().any(|v| {
            v.iter().all(|&x| x > TOL) || v.iter().all(|&x| x < -TOL)
        })
    }
}

/// Covering constant: a rank-deficient image cell at level `j` receives
/// occupied cells from at most this many source cells at the same level.
pub fn projected_cell_count_bound(dims: usize) -> usize {
    let c = 2 * (dims as f64).sqrt().ceil() as usize + 1;
    c.pow(dims as u32)
}

/// Coordinate chart of a linear subspace `K`: a set of coordinate axes `V`,
/// the coordinate projection `q` onto them, and the inverse parametrization
/// `Γ : V -> K` with `q ∘ Γ = id` and `Γ(x) - x ⊥ V`.
#[derive(Debug, Clone)]
pub struct FiberChart {
    dims: usize,
    axes: Vec<usize>,
    kernel: Vec<Vec<f64>>,
    /// Column `j` is `Γ(e_{axes[j]})` in `R^N`.
    gamma: Vec<Vec<f64>>,
    pub conditioning_warning: bool,
}

impl FiberChart {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn chart_dim(&self) -> usize {
        self.axes.len()
    }

    /// Indices of the selected coordinate axes spanning V.
    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn subspace_basis(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    /// Images of the chart basis vectors; each has norm at most `sqrt(N)`.
    pub fn basis_images(&self) -> &[Vec<f64>] {
        &self.gamma
    }

    /// Linear parametrization `Γ(v)` for chart coordinates `v`.
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        for (c, col) in v.iter().zip(&self.gamma) {
            axpy(&mut out, *c, col);
        }
        out
    }

    /// Chart coordinates `q(t)` of a point: the selected components.
    pub fn project_coords(&self, t: &[f64]) -> Vec<f64> {
        self.axes.iter().map(|&k| t[k]).collect()
    }

    /// Parametrization of the affine fiber through `anchor`: the unique
    /// point of `anchor + span(K)` whose chart coordinates equal `v`.
    pub fn lift_affine(&self, anchor: &[f64], v: &[f64]) -> Vec<f64> {
        let qa = self.project_coords(anchor);
        let delta: Vec<f64> = v.iter().zip(&qa).map(|(a, b)| a - b).collect();
        let mut out = self.lift(&delta);
        for (o, a) in out.iter_mut().zip(anchor) {
            *o += a;
        }
        out
    }
}

/// Chooses chart axes for the subspace spanned by `basis` by scanning the
/// coordinate flag `R^1 ⊂ R^2 ⊂ …` and, each time the intersection with `K`
/// grows, selecting the smallest untaken axis on which the new direction has
/// component at least `1/sqrt(N)`. The resulting `Γ` satisfies
/// `|Γ(e_j)| ≤ sqrt(N)` per axis and is N-Lipschitz.
pub fn select_chart(dims: usize, basis: &[Vec<f64>]) -> Result<FiberChart> {
    let kernel = orthonormalize(basis)?;
    let npp = kernel.len();
    if npp == 0 || npp > dims {
        return Err(Error::DegenerateBasis(format!(
            "subspace dimension {npp} invalid in R^{dims}"
        )));
    }
    let threshold = 1.0 / (dims as f64).sqrt() - 1e-9;

    let mut selected: Vec<usize> = Vec::with_capacity(npp);
    let mut captured: Vec<Vec<f64>> = Vec::with_capacity(npp);
    for n in 1..=dims {
        // dim(K ∩ R^n) via the coefficient-space null space of the trailing
        // coordinate constraints.
        let constraint_rows: Vec<Vec<f64>> = (n..dims)
            .map(|r| kernel.iter().map(|b| b[r]).collect())
            .collect();
        let coeffs = if constraint_rows.is_empty() {
            (0..npp)
                .map(|i| {
                    let mut v = vec![0.0; npp];
                    v[i] = 1.0;
                    v
                })
                .collect()
        } else {
            null_space(&constraint_rows, npp)
        };
        if coeffs.len() <= captured.len() {
            continue;
        }
        // Extract the one new direction orthogonal to what is captured.
        let mut best: Option<Vec<f64>> = None;
        let mut best_len = 0.0;
        for c in &coeffs {
            let mut w = vec![0.0; dims];
            for (ci, b) in c.iter().zip(&kernel) {
                axpy(&mut w, *ci, b);
            }
            for cap in &captured {
                let d = dot(&w, cap);
                axpy(&mut w, -d, cap);
            }
            let len = norm(&w);
            if len > best_len {
                best_len = len;
                best = Some(scaled(&w, 1.0 / len));
            }
        }
        let v = match best {
            Some(v) if best_len > TOL => v,
            _ => continue,
        };
        if let Some(axis) = (0..n)
            .filter(|i| !selected.contains(i) && v[*i].abs() >= threshold)
            .min()
        {
            selected.push(axis);
            captured.push(v);
        }
    }

    if selected.len() == npp {
        if let Some(chart) = build_chart(dims, &kernel, &selected) {
            if chart_is_admissible(&chart, dims) {
                return Ok(chart);
            }
        }
    }
    // The scan can fail to qualify an axis only through numerical
    // degeneracy; fall back to the exhaustive search over coordinate
    // subspaces, which the sqrt(N) bound guarantees to succeed.
    exhaustive_chart(dims, &kernel)
}

fn chart_is_admissible(chart: &FiberChart, dims: usize) -> bool {
    let bound = (dims as f64).sqrt() + 1e-7;
    chart.gamma.iter().all(|col| norm(col) <= bound)
}

fn build_chart(dims: usize, kernel: &[Vec<f64>], axes: &[usize]) -> Option<FiberChart> {
    let npp = kernel.len();
    // Rows of the kernel basis at the chart axes.
    let m: Vec<Vec<f64>> = axes
        .iter()
        .map(|&r| kernel.iter().map(|b| b[r]).collect())
        .collect();
    let mut gamma = Vec::with_capacity(npp);
    let mut max_coeff = 0.0f64;
    for j in 0..npp {
        let mut rhs = vec![0.0; npp];
        rhs[j] = 1.0;
        let coeff = solve_square(&m, &rhs)?;
        let mut col = vec![0.0; dims];
        for (c, b) in coeff.iter().zip(kernel) {
            axpy(&mut col, *c, b);
            max_coeff = max_coeff.max(c.abs());
        }
        gamma.push(col);
    }
    Some(FiberChart {
        dims,
        axes: axes.to_vec(),
        kernel: kernel.to_vec(),
        gamma,
        conditioning_warning: max_coeff > 1e12,
    })
}

fn exhaustive_chart(dims: usize, kernel: &[Vec<f64>]) -> Result<FiberChart> {
    let npp = kernel.len();
    let mut best: Option<FiberChart> = None;
    let mut best_score = f64::INFINITY;
    let mut axes: Vec<usize> = (0..npp).collect();
    loop {
        if let Some(chart) = build_chart(dims, kernel, &axes) {
            let score = chart
                .gamma
                .iter()
                .map(|c| norm(c))
                .fold(0.0f64, f64::max);
            if score < best_score {
                best_score = score;
                best = Some(chart);
            }
        }
        // Next lexicographic subset of {0..dims}.
        let mut i = npp;
        loop {
            if i == 0 {
                let mut result = best.ok_or_else(|| {
                    Error::DegenerateBasis("no coordinate subspace charts the kernel".into())
                })?;
                if best_score > (dims as f64).sqrt() + 1e-7 {
                    result.conditioning_warning = true;
                }
                return Ok(result);
            }
            i -= 1;
            if axes[i] < dims - (npp - i) {
                axes[i] += 1;
                for k in i + 1..npp {
                    axes[k] = axes[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// The family of angles `θ_j = 2π j / 2^m`, `j = 1..=2^m`; every direction is
/// within `2π / 2^m` of the net.
pub fn angle_net(m: u32) -> Vec<f64> {
    assert!(m >= 1, "angle net needs level m >= 1");
    let count = 1usize << m;
    (1..=count)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / count as f64)
        .collect()
}

/// Middle line of a tube, as a point and unit direction, plus the
/// `t2 = alpha t1 + beta` form when the direction is not vertical.
#[derive(Debug, Clone)]
pub struct MiddleLine {
    pub point: [f64; 2],
    pub dir: [f64; 2],
    pub alpha_beta: Option<(f64, f64)>,
}

/// Decomposition of the window into tubes above dyadic intervals of the
/// projected segment, each partitioned into tilted squares of side `2^-n`
/// along the tube. Intervals and squares are indexed on exact dyadic grids
/// in the rotated (range, kernel) frame.
#[derive(Debug, Clone)]
pub struct TubeDecomposition {
    pub level: u32,
    pub theta: f64,
    pub range_dir: [f64; 2],
    pub kernel_dir: [f64; 2],
    pub window: Rect,
    /// Intervals are `[(u_first + i) h, (u_first + i + 1) h)`.
    pub u_first: i64,
    pub interval_count: usize,
    /// Squares are `[(v_first + j) h, (v_first + j + 1) h)` along the tube.
    pub v_first: i64,
    pub squares_per_tube: usize,
}

impl TubeDecomposition {
    pub fn h(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Rotated-frame coordinates (range, kernel) of a point.
    pub fn rotate(&self, p: &[f64]) -> (f64, f64) {
        (
            p[0] * self.range_dir[0] + p[1] * self.range_dir[1],
            p[0] * self.kernel_dir[0] + p[1] * self.kernel_dir[1],
        )
    }

    /// Tube and square indices containing a point; exact grid boundaries
    /// resolve toward the lower index.
    pub fn locate(&self, p: &[f64]) -> Option<(usize, i64)> {
        let (u, v) = self.rotate(p);
        let h = self.h();
        let iu = tie_floor(u / h);
        let jv = tie_floor(v / h);
        let i = iu - self.u_first;
        if i < 0 || i >= self.interval_count as i64 {
            return None;
        }
        let j = jv - self.v_first;
        if j < 0 || j >= self.squares_per_tube as i64 {
            return None;
        }
        Some((i as usize, j))
    }

    /// Interval `I_i` as `[lo, hi)` on the range axis.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let h = self.h();
        let lo = (self.u_first + i as i64) as f64 * h;
        (lo, lo + h)
    }

    pub fn middle_line(&self, i: usize) -> MiddleLine {
        let h = self.h();
        let u_mid = ((self.u_first + i as i64) as f64 + 0.5) * h;
        let point = [u_mid * self.range_dir[0], u_mid * self.range_dir[1]];
        let dir = self.kernel_dir;
        let alpha_beta = if dir[0].abs() > TOL {
            let alpha = dir[1] / dir[0];
            let beta = point[1] - alpha * point[0];
            Some((alpha, beta))
        } else {
            None
        };
        MiddleLine {
            point,
            dir,
            alpha_beta,
        }
    }

    /// Corners of the tilted square `(i, j)` in parameter space.
    pub fn square_polygon(&self, i: usize, j: i64) -> [[f64; 2]; 4] {
        let h = self.h();
        let u0 = (self.u_first + i as i64) as f64 * h;
        let v0 = (self.v_first + j) as f64 * h;
        let corner = |u: f64, v: f64| {
            [
                u * self.range_dir[0] + v * self.kernel_dir[0],
                u * self.range_dir[1] + v * self.kernel_dir[1],
            ]
        };
        [
            corner(u0, v0),
            corner(u0 + h, v0),
            corner(u0 + h, v0 + h),
            corner(u0, v0 + h),
        ]
    }
}

/// Floor with exact integer values resolved to the lower cell.
fn tie_floor(x: f64) -> i64 {
    let f = x.floor();
    if f == x {
        f as i64 - 1
    } else {
        f as i64
    }
}

/// Builds the tube decomposition of the window under a rank-1 projection of
/// the plane. When the kernel is not an increasing direction the caller must
/// acknowledge working in the time-inverted chart.
pub fn decompose_tubes(
    p: &Projection,
    level: u32,
    window: &Rect,
    inverted_chart: bool,
) -> Result<TubeDecomposition> {
    if p.dims() != 2 || p.rank() != 1 {
        return Err(Error::Chart(
            "tube decomposition needs a rank-1 projection of the plane".into(),
        ));
    }
    let kernel = [p.kernel_basis()[0][0], p.kernel_basis()[0][1]];
    let increasing = (kernel[0] > TOL && kernel[1] > TOL) || (kernel[0] < -TOL && kernel[1] < -TOL);
    if !increasing && !inverted_chart {
        let axis_parallel = kernel[0].abs() <= TOL || kernel[1].abs() <= TOL;
        let reason = if axis_parallel {
            "kernel is axis-parallel"
        } else {
            "kernel is a decreasing direction"
        };
        return Err(Error::Chart(format!(
            "{reason}; restrict the time-inverted field (see time_invert) and pass inverted_chart = true"
        )));
    }
    let range_dir = [p.range_basis()[0][0], p.range_basis()[0][1]];
    let h = 0.5f64.powi(level as i32);
    let corners = [
        [window.lo[0], window.lo[1]],
        [window.hi[0], window.lo[1]],
        [window.lo[0], window.hi[1]],
        [window.hi[0], window.hi[1]],
    ];
    let mut u_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for c in corners {
        let u = c[0] * range_dir[0] + c[1] * range_dir[1];
        let v = c[0] * kernel[0] + c[1] * kernel[1];
        u_min = u_min.min(u);
        u_max = u_max.max(u);
        v_min = v_min.min(v);
        v_max = v_max.max(v);
    }
    let u_first = (u_min / h).floor() as i64;
    let interval_count = ((u_max / h).floor() as i64 - u_first + 1) as usize;
    let v_first = (v_min / h).floor() as i64;
    let squares_per_tube = ((v_max / h).floor() as i64 - v_first + 1) as usize;
    Ok(TubeDecomposition {
        level,
        theta: p.theta().unwrap_or_else(|| kernel[1].atan2(kernel[0])),
        range_dir,
        kernel_dir: kernel,
        window: window.clone(),
        u_first,
        interval_count,
        v_first,
        squares_per_tube,
    })
}

/// An affine subspace of `R^N` stored through a canonical representation:
/// the minimum-norm anchor point and an orthonormal direction basis.
#[derive(Debug, Clone, Serialize)]
pub struct AffineSubspace {
    pub anchor: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl AffineSubspace {
    /// Canonicalizes an arbitrary representation: orthonormalizes the
    /// directions (Gram-Schmidt in the given order, lexicographically
    /// positive signs) and replaces the offset by the minimum-norm point.
    pub fn new(offset: &[f64], directions: &[Vec<f64>]) -> Result<Self> {
        let mut dirs = orthonormalize(directions)?;
        for v in &mut dirs {
            if let Some(first) = v.iter().find(|x| x.abs() > TOL) {
                if *first < 0.0 {
                    for x in v.iter_mut() {
                        *x = -*x;
                    }
                }
            }
        }
        let mut anchor = offset.to_vec();
        for v in &dirs {
            let c = dot(&anchor, v);
            axpy(&mut anchor, -c, v);
        }
        Ok(AffineSubspace {
            anchor,
            directions: dirs,
        })
    }

    /// The line through `point` with direction `dir` (N'' = 1).
    pub fn line(point: &[f64], dir: &[f64]) -> Result<Self> {
        Self::new(point, &[dir.to_vec()])
    }

    pub fn dims(&self) -> usize {
        self.anchor.len()
    }

    pub fn point_at(&self, coords: &[f64]) -> Vec<f64> {
        let mut p = self.anchor.clone();
        for (c, v) in coords.iter().zip(&self.directions) {
            axpy(&mut p, *c, v);
        }
        p
    }
}

/// Distance between affine subspaces: the larger of the sup-norm gap between
/// canonical anchors and the sup-norm gap between canonical direction bases,
/// the latter minimized over per-vector sign flips.
pub fn subspace_distance(a: &AffineSubspace, b: &AffineSubspace) -> f64 {
    let anchor_gap = a
        .anchor
        .iter()
        .zip(&b.anchor)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let mut dir_gap = 0.0f64;
    for (u, v) in a.directions.iter().zip(&b.directions) {
        let plus = u
            .iter()
            .zip(v)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        let minus = u
            .iter()
            .zip(v)
            .map(|(x, y)| (x + y).abs())
            .fold(0.0f64, f64::max);
        dir_gap = dir_gap.max(plus.min(minus));
    }
    anchor_gap.max(dir_gap)
}

/// Bounds for the compact chart of fibers: lines whose minimum-norm anchor
/// has norm inside the closed interval.
#[derive(Debug, Clone, Copy)]
pub struct ChartBounds {
    pub anchor_min_norm: f64,
    pub anchor_max_norm: f64,
}

impl Default for ChartBounds {
    fn default() -> Self {
        ChartBounds {
            anchor_min_norm: 1.0,
            anchor_max_norm: 3.0,
        }
    }
}

/// Dyadic net over the chart of lines in the plane.
///
/// Elements are lines anchored at dyadic points of a `2^{-(n+1)}` grid inside
/// the chart annulus, with direction perpendicular to the anchor; every line
/// of the chart is within distance `2^-n` of the net. The element count grows
/// like `4^n`: the chart is a two-parameter family, so a `2^-n` covering
/// needs `O(2^{2n})` elements even though each coordinate family alone has
/// `O(2^n)` values per level.
#[derive(Debug)]
pub struct SubspaceNet {
    pub level: u32,
    /// Coefficient denominator exponent: anchors are `i / 2^{denom_log2}`.
    pub denom_log2: u32,
    pub bounds: ChartBounds,
    pub elements: Vec<AffineSubspace>,
}

pub fn subspace_net(level: u32, bounds: ChartBounds) -> Result<SubspaceNet> {
    if bounds.anchor_min_norm < 0.5 {
        return Err(Error::Parameter(
            "net charts need anchors of norm at least 1/2 for stable directions".into(),
        ));
    }
    if level > 12 {
        return Err(Error::Parameter(format!(
            "net level {level} would enumerate more than 2^26 elements"
        )));
    }
    let denom_log2 = level + 1;
    let scale = (1u64 << denom_log2) as f64;
    let lo = (-bounds.anchor_max_norm * scale).floor() as i64;
    let hi = (bounds.anchor_max_norm * scale).ceil() as i64;
    // Rounding an anchor moves it by at most 2^{-(n+2)} per coordinate, so
    // admit a matching slack around the annulus.
    let slack = 1.0 / scale;
    let min2 = (bounds.anchor_min_norm - slack).max(0.0).powi(2);
    let max2 = (bounds.anchor_max_norm + slack).powi(2);
    let mut elements = Vec::new();
    for i1 in lo..=hi {
        for i2 in lo..=hi {
            let a = [i1 as f64 / scale, i2 as f64 / scale];
            let n2 = a[0] * a[0] + a[1] * a[1];
            if n2 < min2 || n2 > max2 {
                continue;
            }
            let perp = [-a[1], a[0]];
            elements.push(AffineSubspace::line(&a, &perp)?);
        }
    }
    Ok(SubspaceNet {
        level,
        denom_log2,
        bounds,
        elements,
    })
}

impl SubspaceNet {
    /// Nearest net element to a line, by exhaustive scan.
    pub fn nearest(&self, line: &AffineSubspace) -> Option<(usize, f64)> {
        self.elements
            .iter()
            .enumerate()
            .map(|(i, e)| (i, subspace_distance(e, line)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Convex polygon helpers used as independent oracles by the partition and
/// good-square checks.
pub mod polygon {
    /// Signed area by the shoelace formula (positive when counterclockwise).
    pub fn area(poly: &[[f64; 2]]) -> f64 {
        let n = poly.len();
        if n < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            s += poly[i][0] * poly[j][1] - poly[j][0] * poly[i][1];
        }
        s / 2.0
    }

    /// Clips a convex polygon by the half-plane `n . x <= c`.
    pub fn clip_halfplane(poly: &[[f64; 2]], n: [f64; 2], c: f64) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(poly.len() + 1);
        let len = poly.len();
        for i in 0..len {
            let a = poly[i];
            let b = poly[(i + 1) % len];
            let da = n[0] * a[0] + n[1] * a[1] - c;
            let db = n[0] * b[0] + n[1] * b[1] - c;
            if da <= 0.0 {
                out.push(a);
            }
            if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                let t = da / (da - db);
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        out
    }

    /// Clips a convex polygon to an axis-aligned rectangle.
    pub fn clip_rect(poly: &[[f64; 2]], lo: [f64; 2], hi: [f64; 2]) -> Vec<[f64; 2]> {
        let mut p = poly.to_vec();
        p = clip_halfplane(&p, [1.0, 0.0], hi[0]);
        p = clip_halfplane(&p, [-1.0, 0.0], -lo[0]);
        p = clip_halfplane(&p, [0.0, 1.0], hi[1]);
        p = clip_halfplane(&p, [0.0, -1.0], -lo[1]);
        p
    }

    /// Point-in-convex-polygon test (vertices in counterclockwise order).
    pub fn contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
        let n = poly.len();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            if cross < 0.0 {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform_at;

    fn unit_rand(seed: u64, k: u64) -> f64 {
        2.0 * uniform_at(seed, 0, k) - 1.0
    }

    #[test]
    fn angle_projection_bases() {
        let p = Projection::from_angle(std::f64::consts::FRAC_PI_4);
        let s = 1.0 / 2.0f64.sqrt();
        let k = &p.kernel_basis()[0];
        assert!((k[0].abs() - s).abs() < 1e-12 && (k[1].abs() - s).abs() < 1e-12);
        assert!((k[0] - k[1]).abs() < 1e-12, "kernel spans (1,1)");
        let r = &p.range_basis()[0];
        assert!((r[0] + r[1]).abs() < 1e-12, "range spans (1,-1)");
        assert!((dot(k, r)).abs() < 1e-12);
    }

    #[test]
    fn full_rank_request_is_rejected() {
        let id2 = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            Projection::from_range_basis(2, &id2),
            Err(Error::Rank { rank: 2, dims: 2 })
        ));
        assert!(Projection::from_range_basis(3, &[]).is_err());
    }

    #[test]
    fn degenerate_basis_is_rejected() {
        let dep = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0]];
        assert!(matches!(
            Projection::from_range_basis(3, &dep),
            Err(Error::DegenerateBasis(_))
        ));
    }

    #[test]
    fn adjoint_composition_is_identity_on_range() {
        for trial in 0..50u64 {
            let dims = 4;
            let basis: Vec<Vec<f64>> = (0..2)
                .map(|r| (0..dims).map(|c| unit_rand(11, trial * 97 + r * 13 + c as u64)).collect())
                .collect();
            let p = match Projection::from_range_basis(dims, &basis) {
                Ok(p) => p,
                Err(_) => continue,
            };
            for probe in 0..5u64 {
                let y: Vec<f64> = (0..2).map(|c| unit_rand(12, trial * 31 + probe * 7 + c)).collect();
                let back = p.project(&p.embed(&y));
                let residual: f64 = back
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(residual < 1e-12, "residual {residual}");
            }
        }
    }

    #[test]
    fn chart_of_diagonal_line() {
        // K = span{(1,1)/sqrt(2)}: the scan picks the first axis and
        // Gamma(x e1) = (x, x); both candidate axes satisfy the bound.
        let s = 1.0 / 2.0f64.sqrt();
        let chart = select_chart(2, &[vec![s, s]]).unwrap();
        assert_eq!(chart.axes(), &[0]);
        let img = chart.lift(&[1.0]);
        assert!((img[0] - 1.0).abs() < 1e-12 && (img[1] - 1.0).abs() < 1e-12);
        assert!((norm(&img) - 2.0f64.sqrt()).abs() < 1e-12);
        // Exhaustive oracle over both candidate axes.
        for axes in [[0usize], [1usize]] {
            let c = build_chart(2, chart.subspace_basis(), &axes).unwrap();
            assert!(chart_is_admissible(&c, 2));
        }
    }

    #[test]
    fn chart_of_coordinate_subspace_is_identity() {
        let chart = select_chart(3, &[vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(chart.axes(), &[1]);
        let img = chart.lift(&[2.5]);
        assert!((img[1] - 2.5).abs() < 1e-12);
        assert!((norm(&img) - 2.5).abs() < 1e-12, "Lipschitz constant 1");
    }

    #[test]
    fn random_charts_satisfy_contracts() {
        for trial in 0..200u64 {
            let basis: Vec<Vec<f64>> = (0..2)
                .map(|r| (0..3).map(|c| unit_rand(21, trial * 101 + r * 17 + c as u64)).collect())
                .collect();
            let chart = match select_chart(3, &basis) {
                Ok(c) => c,
                Err(_) => continue,
            };
            // q o Gamma = id and Gamma(x) - x orthogonal to V.
            for (j, &axis) in chart.axes().iter().enumerate() {
                let mut e = vec![0.0; 2];
                e[j] = 1.0;
                let img = chart.lift(&e);
                let back = chart.project_coords(&img);
                let residual: f64 = back
                    .iter()
                    .zip(&e)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(residual < 1e-12);
                assert!((img[axis] - 1.0).abs() < 1e-12);
            }
            // Lipschitz bound |Gamma(v)| <= 3 |v| on random v.
            for probe in 0..5u64 {
                let v: Vec<f64> = (0..2).map(|c| unit_rand(22, trial * 13 + probe * 5 + c)).collect();
                let img = chart.lift(&v);
                assert!(norm(&img) <= 3.0 * norm(&v) + 1e-9);
            }
            // Per-axis norm bound sqrt(3).
            for col in chart.basis_images() {
                assert!(norm(col) <= 3.0f64.sqrt() + 1e-7);
            }
        }
    }

    #[test]
    fn affine_lift_hits_the_fiber() {
        let s = 1.0 / 2.0f64.sqrt();
        let chart = select_chart(2, &[vec![s, s]]).unwrap();
        let anchor = [1.5, -0.5];
        let p = chart.lift_affine(&anchor, &[2.0]);
        // The point has chart coordinate 2 and lies on anchor + span{(1,1)}.
        assert!((p[0] - 2.0).abs() < 1e-12);
        let diff = [p[0] - anchor[0], p[1] - anchor[1]];
        assert!((diff[0] - diff[1]).abs() < 1e-12);
    }

    #[test]
    fn angle_net_values() {
        use std::f64::consts::PI;
        let net = angle_net(2);
        let expect = [PI / 2.0, PI, 3.0 * PI / 2.0, 2.0 * PI];
        assert_eq!(net.len(), 4);
        for (a, b) in net.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let net1 = angle_net(1);
        assert!((net1[0] - PI).abs() < 1e-12 && (net1[1] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn angle_net_covering_radius() {
        let m = 5;
        let net = angle_net(m);
        let radius = 2.0 * std::f64::consts::PI / (1 << m) as f64;
        for k in 0..1000u64 {
            let theta = 2.0 * std::f64::consts::PI * uniform_at(31, 0, k);
            let best = net
                .iter()
                .map(|t| (t - theta).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= radius + 1e-12);
        }
    }

    #[test]
    fn tube_geometry_at_quarter_turn() {
        let p = Projection::from_angle(std::f64::consts::FRAC_PI_4);
        let window = Rect::cube(2, 1.0, 2.0);
        let tubes = decompose_tubes(&p, 3, &window, false).unwrap();
        let line = tubes.middle_line(0);
        let (alpha, _beta) = line.alpha_beta.unwrap();
        assert!((alpha - 1.0).abs() < 1e-12);
        // Interval width is exactly h.
        let (lo, hi) = tubes.interval(0);
        assert!((hi - lo - tubes.h()).abs() < 1e-15);
        // Interval count bounded by c 2^{n+1} with c from the segment length.
        let len = 2.0f64.sqrt(); // |p([1,2]^2)| at 45 degrees
        assert!(tubes.interval_count as f64 <= len * 8.0 + 1.0);
        assert!(tubes.interval_count <= 2usize.pow(4));
    }

    #[test]
    fn non_increasing_kernel_requires_inversion_flag() {
        let window = Rect::cube(2, 1.0, 2.0);
        // Axis-parallel kernel.
        let p = Projection::from_angle(0.0);
        let err = decompose_tubes(&p, 3, &window, false).unwrap_err();
        assert!(err.to_string().contains("time_invert"));
        assert!(decompose_tubes(&p, 3, &window, true).is_ok());
        // Decreasing kernel.
        let p = Projection::from_angle(2.5);
        assert!(decompose_tubes(&p, 3, &window, false).is_err());
        assert!(decompose_tubes(&p, 3, &window, true).is_ok());
    }

    #[test]
    fn tube_partition_area_bookkeeping() {
        // The tilted squares of each tube, clipped to the window, partition
        // the tube's part of the window: areas agree with the polygon oracle
        // and interior-disjointness is exact in index arithmetic.
        let window = Rect::cube(2, 1.0, 2.0);
        for &theta in &[std::f64::consts::FRAC_PI_4, 0.7, 1.1] {
            let p = Projection::from_angle(theta);
            let tubes = decompose_tubes(&p, 3, &window, false).unwrap();
            let h = tubes.h();
            let mut total = 0.0;
            for i in 0..tubes.interval_count {
                let (u_lo, u_hi) = tubes.interval(i);
                // Strip polygon of the tube in parameter space.
                let big = 10.0;
                let strip = [
                    rot_point(&tubes, u_lo, -big),
                    rot_point(&tubes, u_hi, -big),
                    rot_point(&tubes, u_hi, big),
                    rot_point(&tubes, u_lo, big),
                ];
                let clipped = polygon::clip_rect(&strip, [1.0, 1.0], [2.0, 2.0]);
                let strip_area = polygon::area(&clipped).abs();
                let mut square_sum = 0.0;
                for j in 0..tubes.squares_per_tube {
                    let poly = tubes.square_polygon(i, j as i64);
                    let clipped = polygon::clip_rect(&poly, [1.0, 1.0], [2.0, 2.0]);
                    square_sum += polygon::area(&clipped).abs();
                }
                assert!(
                    (square_sum - strip_area).abs() < 1e-9,
                    "theta {theta}, tube {i}: {square_sum} vs {strip_area}"
                );
                total += strip_area;
            }
            assert!((total - 1.0).abs() < 1e-9, "tubes cover the window");
        }
    }

    fn rot_point(t: &TubeDecomposition, u: f64, v: f64) -> [f64; 2] {
        [
            u * t.range_dir[0] + v * t.kernel_dir[0],
            u * t.range_dir[1] + v * t.kernel_dir[1],
        ]
    }

    #[test]
    fn locate_matches_polygon_oracle() {
        let p = Projection::from_angle(0.9);
        let window = Rect::cube(2, 1.0, 2.0);
        let tubes = decompose_tubes(&p, 4, &window, false).unwrap();
        for k in 0..500u64 {
            let pt = [
                1.0 + uniform_at(41, 0, 2 * k),
                1.0 + uniform_at(41, 0, 2 * k + 1),
            ];
            let (i, j) = tubes.locate(&pt).expect("window point lies in some square");
            let poly = tubes.square_polygon(i, j);
            assert!(polygon::contains(&poly, pt) || on_boundary(&poly, pt));
        }
    }

    fn on_boundary(poly: &[[f64; 2]; 4], p: [f64; 2]) -> bool {
        // Tie points sit on an edge; accept within rounding.
        let eps = 1e-9;
        let grown = [
            [poly[0][0] - eps, poly[0][1] - eps],
            [poly[1][0] + eps, poly[1][1] - eps],
            [poly[2][0] + eps, poly[2][1] + eps],
            [poly[3][0] - eps, poly[3][1] + eps],
        ];
        polygon::contains(&grown, p)
    }

    #[test]
    fn subspace_distance_is_a_metric_on_samples() {
        let sample = |k: u64| -> AffineSubspace {
            let angle = std::f64::consts::PI * uniform_at(51, 0, 3 * k);
            let radius = 1.0 + 2.0 * uniform_at(51, 0, 3 * k + 1);
            let anchor = [radius * angle.cos(), radius * angle.sin()];
            let dir = [-angle.sin(), angle.cos()];
            AffineSubspace::line(&anchor, &dir).unwrap()
        };
        for k in 0..1000u64 {
            let a = sample(3 * k);
            let b = sample(3 * k + 1);
            let c = sample(3 * k + 2);
            assert_eq!(subspace_distance(&a, &a), 0.0);
            let dab = subspace_distance(&a, &b);
            let dba = subspace_distance(&b, &a);
            assert!((dab - dba).abs() < 1e-12, "symmetry");
            let dac = subspace_distance(&a, &c);
            let dcb = subspace_distance(&c, &b);
            assert!(dab <= dac + dcb + 1e-9, "triangle: {dab} > {dac} + {dcb}");
        }
    }

    #[test]
    fn net_covers_chart_within_radius() {
        let level = 4;
        let bounds = ChartBounds {
            anchor_min_norm: 1.0,
            anchor_max_norm: 2.0,
        };
        let net = subspace_net(level, bounds).unwrap();
        let radius = 0.5f64.powi(level as i32);
        for k in 0..1000u64 {
            let angle = 2.0 * std::f64::consts::PI * uniform_at(61, 0, 2 * k);
            let r = 1.0 + uniform_at(61, 0, 2 * k + 1);
            let anchor = [r * angle.cos(), r * angle.sin()];
            let line = AffineSubspace::line(&anchor, &[-anchor[1], anchor[0]]).unwrap();
            let (_, d) = net.nearest(&line).unwrap();
            assert!(d <= radius + 1e-12, "probe {k}: nearest {d} > {radius}");
        }
    }

    #[test]
    fn net_counts_grow_with_the_chart_dimension() {
        // Two-parameter chart: counts scale like 4^n, i.e. C 2^n per
        // coordinate family.
        let bounds = ChartBounds::default();
        let c3 = subspace_net(3, bounds).unwrap().elements.len() as f64;
        let c4 = subspace_net(4, bounds).unwrap().elements.len() as f64;
        let c5 = subspace_net(5, bounds).unwrap().elements.len() as f64;
        assert!(c4 / c3 > 3.0 && c4 / c3 < 5.0);
        assert!(c5 / c4 > 3.0 && c5 / c4 < 5.0);
    }

    #[test]
    fn projected_count_bound_values() {
        assert_eq!(projected_cell_count_bound(2), 25);
        assert_eq!(projected_cell_count_bound(1), 3);
    }
}
