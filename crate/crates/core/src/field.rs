//! Brownian-sheet construction on dyadic lattices.
//!
//! A field is built from independent centred Gaussian cell increments of
//! variance `h^N` (with `h = 2^-n`) followed by an N-dimensional prefix sum,
//! so the covariance `Π min(s_k, t_k)` holds exactly at lattice vertices and
//! every value on a coordinate hyperplane `{t_k = 0}` is exactly zero.
//! Increments are keyed by `(seed, component, cell index)`, which makes the
//! construction reproducible under any degree of parallelism.

use crate::error::{Error, Result};
use crate::rng::normal_at;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAX_DIMS: usize = 8;

/// Default simulation memory budget: 2 GiB.
pub const DEFAULT_BUDGET_BYTES: u64 = 2 << 30;

/// Axis-aligned rectangle with dyadic-rational corners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Rect { lo, hi }
    }

    /// The cube `[lo, hi]^dims`.
    pub fn cube(dims: usize, lo: f64, hi: f64) -> Self {
        Rect {
            lo: vec![lo; dims],
            hi: vec![hi; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.dims() == other.dims()
            && self
                .lo
                .iter()
                .zip(&other.lo)
                .all(|(a, b)| b >= a)
            && self
                .hi
                .iter()
                .zip(&other.hi)
                .all(|(a, b)| b <= a)
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.len() == self.dims()
            && p.iter().zip(&self.lo).all(|(x, lo)| x >= lo)
            && p.iter().zip(&self.hi).all(|(x, hi)| x <= hi)
    }

    pub fn side(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }
}

/// Lattice description: dimension count, dyadic level and rectangles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of parameters N.
    pub dims: usize,
    /// Dyadic level n; the lattice spacing is `h = 2^-n`.
    pub level: u32,
    /// Simulation domain; the lower corner must be the origin so the
    /// prefix-sum construction anchors the field on the axes.
    pub domain: Rect,
    /// Analysis window, contained in the domain.
    pub window: Rect,
    /// Memory budget for simulation.
    pub budget_bytes: u64,
}

impl GridSpec {
    /// Standard spec: domain `[0,2]^N`, window `[1,2]^N`.
    pub fn new(dims: usize, level: u32) -> Self {
        GridSpec {
            dims,
            level,
            domain: Rect::cube(dims, 0.0, 2.0),
            window: Rect::cube(dims, 1.0, 2.0),
            budget_bytes: DEFAULT_BUDGET_BYTES,
        }
    }

    pub fn with_domain(mut self, domain: Rect) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_window(mut self, window: Rect) -> Self {
        self.window = window;
        self
    }

    pub fn with_budget(mut self, bytes: u64) -> Self {
        self.budget_bytes = bytes;
        self
    }

    pub fn h(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    fn is_lattice_multiple(&self, x: f64) -> bool {
        let scaled = x * (1u64 << self.level.min(62)) as f64;
        scaled.fract() == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::Domain("need at least one parameter axis".into()));
        }
        if self.dims > MAX_DIMS {
            return Err(Error::Domain(format!(
                "at most {MAX_DIMS} parameter axes supported, got {}",
                self.dims
            )));
        }
        if self.level > 40 {
            return Err(Error::LevelRange {
                level: self.level,
                dims: self.dims,
            });
        }
        if self.domain.dims() != self.dims || self.window.dims() != self.dims {
            return Err(Error::Domain("rectangle dimension mismatch".into()));
        }
        for k in 0..self.dims {
            if self.domain.lo[k] != 0.0 {
                return Err(Error::Domain(format!(
                    "domain must be anchored at the origin (axis {k} starts at {})",
                    self.domain.lo[k]
                )));
            }
            if self.domain.hi[k] <= 0.0 {
                return Err(Error::Domain(format!("empty domain on axis {k}")));
            }
            for x in [
                self.domain.lo[k],
                self.domain.hi[k],
                self.window.lo[k],
                self.window.hi[k],
            ] {
                if !self.is_lattice_multiple(x) {
                    return Err(Error::Domain(format!(
                        "corner {x} is not a multiple of the lattice spacing 2^-{}",
                        self.level
                    )));
                }
            }
        }
        if !self.domain.contains_rect(&self.window) {
            return Err(Error::Domain("window not contained in domain".into()));
        }
        // Vertex counts must stay within index arithmetic.
        let mut total: u128 = 1;
        for k in 0..self.dims {
            total = total.saturating_mul(self.vertices_on_axis(k) as u128);
        }
        if total > 1 << 46 {
            return Err(Error::LevelRange {
                level: self.level,
                dims: self.dims,
            });
        }
        Ok(())
    }

    /// Vertices on axis k, i.e. `hi_k * 2^n + 1`.
    pub fn vertices_on_axis(&self, k: usize) -> usize {
        (self.domain.hi[k] / self.h()).round() as usize + 1
    }

    pub fn vertex_counts(&self) -> Vec<usize> {
        (0..self.dims).map(|k| self.vertices_on_axis(k)).collect()
    }

    pub fn total_vertices(&self) -> usize {
        self.vertex_counts().iter().product()
    }

    pub fn required_bytes(&self, d: usize) -> u64 {
        self.total_vertices() as u64 * d as u64 * 8
    }
}

/// Read access to a d-vector field sampled on a dyadic lattice.
///
/// Implemented by simulated sheets and by analytic stand-ins used in tests.
pub trait Field: Sync {
    fn spec(&self) -> &GridSpec;
    fn d(&self) -> usize;
    /// Component `c` at the lattice vertex with multi-index `idx`.
    fn vertex(&self, idx: &[usize], c: usize) -> f64;

    fn level(&self) -> u32 {
        self.spec().level
    }

    fn h(&self) -> f64 {
        self.spec().h()
    }

    /// Multilinear interpolation of all components at an off-lattice point.
    ///
    /// The interpolation error is bounded by the lattice modulus of
    /// continuity `n 2^{-n/2}` at the working level.
    fn value_at(&self, point: &[f64], out: &mut [f64]) {
        let spec = self.spec();
        let dims = spec.dims;
        let h = spec.h();
        let mut base = [0usize; MAX_DIMS];
        let mut frac = [0f64; MAX_DIMS];
        for k in 0..dims {
            let u = (point[k] - spec.domain.lo[k]) / h;
            let max_cell = spec.vertices_on_axis(k) - 2;
            let i = (u.floor() as i64).clamp(0, max_cell as i64) as usize;
            base[k] = i;
            frac[k] = (u - i as f64).clamp(0.0, 1.0);
        }
        out.fill(0.0);
        let corners = 1usize << dims;
        let mut idx = [0usize; MAX_DIMS];
        for mask in 0..corners {
            let mut w = 1.0;
            for k in 0..dims {
                if mask >> k & 1 == 1 {
                    idx[k] = base[k] + 1;
                    w *= frac[k];
                } else {
                    idx[k] = base[k];
                    w *= 1.0 - frac[k];
                }
            }
            if w == 0.0 {
                continue;
            }
            for c in 0..out.len() {
                out[c] += w * self.vertex(&idx[..dims], c);
            }
        }
    }
}

/// A simulated (N, d)-Brownian sheet stored at lattice vertices.
pub struct SheetField {
    spec: GridSpec,
    d: usize,
    seed: u64,
    /// One row-major slab per component.
    components: Vec<Vec<f64>>,
    /// Vertex counts per axis.
    m: Vec<usize>,
}

impl Field for SheetField {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn d(&self) -> usize {
        self.d
    }

    #[inline]
    fn vertex(&self, idx: &[usize], c: usize) -> f64 {
        self.components[c][self.linear(idx)]
    }
}

impl SheetField {
    #[inline]
    pub fn linear(&self, idx: &[usize]) -> usize {
        let mut lin = 0usize;
        for k in 0..self.m.len() {
            lin = lin * self.m[k] + idx[k];
        }
        lin
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vertex_counts(&self) -> &[usize] {
        &self.m
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    /// Simulate an (N, d) sheet at the spec's lattice vertices.
    pub fn simulate(spec: &GridSpec, d: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if d == 0 {
            return Err(Error::Domain("need at least one component".into()));
        }
        let required = spec.required_bytes(d);
        if required > spec.budget_bytes {
            return Err(Error::Sizing {
                required,
                budget: spec.budget_bytes,
            });
        }
        let m = spec.vertex_counts();
        let dims = spec.dims;
        let total = spec.total_vertices();
        let cells: Vec<usize> = m.iter().map(|&v| v - 1).collect();
        let sigma = spec.h().powf(dims as f64 / 2.0);

        let mut components = Vec::with_capacity(d);
        for c in 0..d {
            let mut slab = vec![0.0f64; total];
            fill_increments(&mut slab, &m, &cells, sigma, seed, c as u64);
            // Contiguous axis first; the row-then-column order also keeps the
            // stored construction bitwise equal to the streaming row sweep.
            for axis in (0..dims).rev() {
                prefix_axis(&mut slab, &m, axis);
            }
            components.push(slab);
        }
        Ok(SheetField {
            spec: spec.clone(),
            d,
            seed,
            components,
            m,
        })
    }
}

/// Writes the white-noise increment of each cell into the vertex at its
/// upper corner; vertices on a coordinate hyperplane stay zero.
fn fill_increments(slab: &mut [f64], m: &[usize], cells: &[usize], sigma: f64, seed: u64, stream: u64) {
    let dims = m.len();
    let row = m[dims - 1];
    slab.par_chunks_mut(row).enumerate().for_each(|(outer, chunk)| {
        // Decode the leading indices of this lattice row.
        let mut idx = [0usize; MAX_DIMS];
        let mut rem = outer;
        for k in (0..dims - 1).rev() {
            idx[k] = rem % m[k];
            rem /= m[k];
        }
        if idx[..dims - 1].iter().any(|&i| i == 0) {
            chunk.fill(0.0);
            return;
        }
        // Linear cell index of (idx-1, j-1) for the fastest axis j.
        let mut cell_base = 0u64;
        for k in 0..dims - 1 {
            cell_base = cell_base * cells[k] as u64 + (idx[k] - 1) as u64;
        }
        cell_base *= cells[dims - 1] as u64;
        chunk[0] = 0.0;
        for j in 1..row {
            chunk[j] = sigma * normal_at(seed, stream, cell_base + (j - 1) as u64);
        }
    });
}

/// In-place prefix sum along one axis; each 1-D line is summed sequentially
/// in index order so the result does not depend on parallel scheduling.
fn prefix_axis(slab: &mut [f64], m: &[usize], axis: usize) {
    let stride: usize = m[axis + 1..].iter().product();
    let len = m[axis];
    let block = stride * len;
    slab.par_chunks_mut(block).for_each(|chunk| {
        for inner in 0..stride {
            let mut acc = chunk[inner];
            for k in 1..len {
                acc += chunk[k * stride + inner];
                chunk[k * stride + inner] = acc;
            }
        }
    });
}

/// Streams an N=2 sheet row by row without storing the lattice.
///
/// For each cell row `i` the visitor receives the vertex rows bounding it:
/// `lo[c][j] = W_c(i*h, j*h)` and `hi[c][j] = W_c((i+1)*h, j*h)`. Values are
/// bit-identical to [`SheetField::simulate`] with the same `(spec, d, seed)`.
pub fn sweep_rows_2d<V>(spec: &GridSpec, d: usize, seed: u64, mut visit: V) -> Result<()>
where
    V: FnMut(usize, &[Vec<f64>], &[Vec<f64>]),
{
    spec.validate()?;
    if spec.dims != 2 {
        return Err(Error::Domain("row sweep requires N = 2".into()));
    }
    let m = spec.vertex_counts();
    let (rows, cols) = (m[0], m[1]);
    let cells1 = (cols - 1) as u64;
    let sigma = spec.h();
    let mut prev: Vec<Vec<f64>> = vec![vec![0.0; cols]; d];
    let mut cur: Vec<Vec<f64>> = vec![vec![0.0; cols]; d];
    let mut rowbuf = vec![0.0f64; cols];
    for i in 1..rows {
        for c in 0..d {
            let cell_base = ((i - 1) as u64) * cells1;
            rowbuf[0] = 0.0;
            let mut acc = 0.0;
            for j in 1..cols {
                // Round the increment before accumulating, exactly as the
                // stored construction does, so both paths agree bitwise.
                let inc: f64 = sigma * normal_at(seed, c as u64, cell_base + (j - 1) as u64);
                acc += inc;
                rowbuf[j] = acc;
            }
            for j in 0..cols {
                cur[c][j] = prev[c][j] + rowbuf[j];
            }
        }
        visit(i - 1, &prev, &cur);
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(())
}

/// Analytic field for tests and synthetic harness inputs: evaluates a pure
/// function of the parameter point at every vertex.
pub struct AnalyticField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    spec: GridSpec,
    d: usize,
    f: F,
}

impl<F> AnalyticField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(spec: GridSpec, d: usize, f: F) -> Self {
        AnalyticField { spec, d, f }
    }
}

impl<F> Field for AnalyticField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn d(&self) -> usize {
        self.d
    }

    fn vertex(&self, idx: &[usize], c: usize) -> f64 {
        let h = self.spec.h();
        let mut p = [0f64; MAX_DIMS];
        for k in 0..self.spec.dims {
            p[k] = self.spec.domain.lo[k] + idx[k] as f64 * h;
        }
        let mut out = vec![0.0; self.d];
        (self.f)(&p[..self.spec.dims], &mut out);
        out[c]
    }
}

/// Values of the field along the line `t2 = alpha * t1 + beta` within the
/// analysis window, together with the quadratic time change
/// `phi(t1) = t1 (alpha t1 + beta)` under which the restriction is a
/// Brownian motion.
#[derive(Debug, Clone)]
pub struct LineTrace {
    pub alpha: f64,
    pub beta: f64,
    pub step: f64,
    /// Sampled first-axis parameters.
    pub params: Vec<f64>,
    /// One value row per component, aligned with `params`.
    pub values: Vec<Vec<f64>>,
}

impl LineTrace {
    pub fn time_change(&self, t1: f64) -> f64 {
        t1 * (self.alpha * t1 + self.beta)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// Restricts an N=2 field to an increasing line, multilinearly interpolated
/// at the given parameter step. Interpolation error is bounded by the
/// lattice modulus `n 2^{-n/2}` at the field's level.
pub fn restrict_to_line(
    field: &impl Field,
    alpha: f64,
    beta: f64,
    step: f64,
) -> Result<LineTrace> {
    let spec = field.spec();
    if spec.dims != 2 {
        return Err(Error::Domain("line restriction requires N = 2".into()));
    }
    if alpha <= 0.0 {
        return Err(Error::Domain(format!("need alpha > 0, got {alpha}")));
    }
    if step <= 0.0 {
        return Err(Error::Domain(format!("need step > 0, got {step}")));
    }
    let w = &spec.window;
    let lo = w.lo[0].max((w.lo[1] - beta) / alpha);
    let hi = w.hi[0].min((w.hi[1] - beta) / alpha);
    if lo > hi {
        return Err(Error::EmptyTrace);
    }
    let count = ((hi - lo) / step).floor() as usize + 1;
    let mut params = Vec::with_capacity(count);
    let mut values = vec![Vec::with_capacity(count); field.d()];
    let mut out = vec![0.0; field.d()];
    for k in 0..count {
        let t1 = lo + k as f64 * step;
        field.value_at(&[t1, alpha * t1 + beta], &mut out);
        params.push(t1);
        for c in 0..field.d() {
            values[c].push(out[c]);
        }
    }
    Ok(LineTrace {
        alpha,
        beta,
        step,
        params,
        values,
    })
}

/// The time-inverted process `(s, t) -> t W(s, 1/t)` sampled at a lattice of
/// `(s, 1/t)` points; it has the sheet covariance at the returned points.
pub struct InvertedSheet {
    pub s_coords: Vec<f64>,
    pub t_coords: Vec<f64>,
    /// `values[c][i * t_coords.len() + j]`.
    pub values: Vec<Vec<f64>>,
}

impl InvertedSheet {
    pub fn value(&self, i: usize, j: usize, c: usize) -> f64 {
        self.values[c][i * self.t_coords.len() + j]
    }
}

/// Evaluates the time inversion at the field's first-axis vertices and the
/// requested `t` values (each `1/t` must lie inside the second-axis domain).
pub fn time_invert(field: &impl Field, t_values: &[f64]) -> Result<InvertedSheet> {
    let spec = field.spec();
    if spec.dims != 2 {
        return Err(Error::Domain("time inversion requires N = 2".into()));
    }
    for &t in t_values {
        if t == 0.0 {
            return Err(Error::Domain("time inversion undefined at t = 0".into()));
        }
        let u = 1.0 / t;
        if !(spec.domain.lo[1]..=spec.domain.hi[1]).contains(&u) {
            return Err(Error::Domain(format!(
                "1/t = {u} outside the second-axis domain"
            )));
        }
    }
    let s_coords: Vec<f64> = (0..spec.vertices_on_axis(0))
        .map(|i| i as f64 * spec.h())
        .collect();
    let mut values = vec![Vec::with_capacity(s_coords.len() * t_values.len()); field.d()];
    let mut out = vec![0.0; field.d()];
    for &s in &s_coords {
        for &t in t_values {
            field.value_at(&[s, 1.0 / t], &mut out);
            for c in 0..field.d() {
                values[c].push(t * out[c]);
            }
        }
    }
    Ok(InvertedSheet {
        s_coords,
        t_coords: t_values.to_vec(),
        values,
    })
}

/// One trace of the transform `U(s, t) = e^{-s/2} W(e^s, t)`; for each fixed
/// `s` this has the law of a Brownian motion in `t`.
pub struct OuTrace {
    pub s: f64,
    pub t_coords: Vec<f64>,
    /// One row per component, aligned with `t_coords`.
    pub values: Vec<Vec<f64>>,
}

pub fn ou_transform(field: &impl Field, s_grid: &[f64]) -> Result<Vec<OuTrace>> {
    let spec = field.spec();
    if spec.dims != 2 {
        return Err(Error::Domain("the transform requires N = 2".into()));
    }
    let t_coords: Vec<f64> = (0..spec.vertices_on_axis(1))
        .map(|j| j as f64 * spec.h())
        .collect();
    let mut traces = Vec::with_capacity(s_grid.len());
    let mut out = vec![0.0; field.d()];
    for &s in s_grid {
        let x = s.exp();
        if !(spec.domain.lo[0]..=spec.domain.hi[0]).contains(&x) {
            return Err(Error::Range(format!(
                "e^s = {x} outside the first-axis domain [{}, {}]",
                spec.domain.lo[0], spec.domain.hi[0]
            )));
        }
        let scale = (-s / 2.0).exp();
        let mut values = vec![Vec::with_capacity(t_coords.len()); field.d()];
        for &t in &t_coords {
            field.value_at(&[x, t], &mut out);
            for c in 0..field.d() {
                values[c].push(scale * out[c]);
            }
        }
        traces.push(OuTrace {
            s,
            t_coords: t_coords.clone(),
            values,
        });
    }
    Ok(traces)
}
