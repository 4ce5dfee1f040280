//! Cell-centered scalar and vector fields on a uniform grid masked to a
//! domain, with distance-weighted norms, difference gradients and a binary
//! dump format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, PolygonalDomain};
use crate::numeric::CompensatedSum;

/// Uniform cell grid with a domain mask and cached boundary distances.
#[derive(Clone, Debug)]
pub struct Grid {
    domain: Arc<PolygonalDomain>,
    origin: Point,
    h: f64,
    dims: [usize; 2],
    mask: Vec<bool>,
    dist: Vec<f64>,
}

impl Grid {
    /// Cells `origin + [i h, (i+1) h] x [j h, (j+1) h]`; a cell is masked when
    /// its center lies in the domain.
    pub fn new(domain: Arc<PolygonalDomain>, origin: Point, h: f64, dims: [usize; 2]) -> Result<Arc<Grid>> {
        if !(h > 0.0 && h.is_finite()) || !origin.is_finite() {
            return Err(Error::Parameter(format!("invalid grid: h = {h}, origin = {origin:?}")));
        }
        if dims[0] == 0 || dims[1] == 0 {
            return Err(Error::Parameter(format!("grid dims must be positive, got {dims:?}")));
        }
        let n = dims[0] * dims[1];
        let (mask, dist): (Vec<bool>, Vec<f64>) = (0..n)
            .into_par_iter()
            .map(|c| {
                let x = Point::new(
                    origin.x + ((c % dims[0]) as f64 + 0.5) * h,
                    origin.y + ((c / dims[0]) as f64 + 0.5) * h,
                );
                if domain.contains(x) {
                    (true, domain.distance_to_boundary(x))
                } else {
                    (false, 0.0)
                }
            })
            .unzip();
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        Ok(Arc::new(Grid {
            domain,
            origin,
            h,
            dims,
            mask,
            dist,
        }))
    }

    /// Smallest grid with cell size `h` covering the domain's bounding box.
    pub fn covering(domain: Arc<PolygonalDomain>, h: f64) -> Result<Arc<Grid>> {
        let bb = domain.bounding_box();
        Self::aligned(domain, bb.min, h)
    }

    /// Grid covering the bounding box whose cell corners lie on
    /// `anchor + h Z^2`.
    pub fn aligned(domain: Arc<PolygonalDomain>, anchor: Point, h: f64) -> Result<Arc<Grid>> {
        if !(h > 0.0) {
            return Err(Error::Parameter(format!("h must be positive, got {h}")));
        }
        let bb = domain.bounding_box();
        let i0 = ((bb.min.x - anchor.x) / h + 1e-9).floor();
        let j0 = ((bb.min.y - anchor.y) / h + 1e-9).floor();
        let i1 = ((bb.max.x - anchor.x) / h - 1e-9).ceil();
        let j1 = ((bb.max.y - anchor.y) / h - 1e-9).ceil();
        let origin = Point::new(anchor.x + i0 * h, anchor.y + j0 * h);
        let dims = [(i1 - i0).max(1.0) as usize, (j1 - j0).max(1.0) as usize];
        Self::new(domain, origin, h, dims)
    }

    pub fn domain(&self) -> &PolygonalDomain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn is_masked(&self, c: usize) -> bool {
        self.mask[c]
    }

    /// Distance from the cell center to the boundary (0 off the mask).
    #[inline]
    pub fn dist(&self, c: usize) -> f64 {
        self.dist[c]
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.dims[0] + i
    }

    #[inline]
    pub fn ij(&self, c: usize) -> (usize, usize) {
        (c % self.dims[0], c / self.dims[0])
    }

    #[inline]
    pub fn center(&self, c: usize) -> Point {
        let (i, j) = self.ij(c);
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.h,
            self.origin.y + (j as f64 + 0.5) * self.h,
        )
    }

    pub fn cell_box(&self, c: usize) -> Aabb {
        let (i, j) = self.ij(c);
        let min = Point::new(self.origin.x + i as f64 * self.h, self.origin.y + j as f64 * self.h);
        Aabb::new(min, Point::new(min.x + self.h, min.y + self.h))
    }

    /// Cell containing `x` (half-open cells), if inside the grid.
    pub fn cell_of(&self, x: Point) -> Option<usize> {
        let fi = ((x.x - self.origin.x) / self.h).floor();
        let fj = ((x.y - self.origin.y) / self.h).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.dims[0] as f64 || fj >= self.dims[1] as f64 {
            return None;
        }
        Some(self.index(fi as usize, fj as usize))
    }

    /// Cell index range `[lo, hi)` per axis covered by `b`, when `b` is a
    /// union of whole cells (relative tolerance `1e-9`).
    pub fn box_cells(&self, b: &Aabb) -> Result<[[usize; 2]; 2]> {
        let snap = |v: f64, o: f64| -> Result<i64> {
            let f = (v - o) / self.h;
            let r = f.round();
            if (f - r).abs() > 1e-9 * f.abs().max(1.0) {
                return Err(Error::GridMismatch(format!("coordinate {v} is not on the grid (h = {})", self.h)));
            }
            Ok(r as i64)
        };
        let lo = [snap(b.min.x, self.origin.x)?, snap(b.min.y, self.origin.y)?];
        let hi = [snap(b.max.x, self.origin.x)?, snap(b.max.y, self.origin.y)?];
        let clamp = |v: i64, d: usize| v.clamp(0, d as i64) as usize;
        Ok([
            [clamp(lo[0], self.dims[0]), clamp(lo[1], self.dims[1])],
            [clamp(hi[0], self.dims[0]), clamp(hi[1], self.dims[1])],
        ])
    }

    /// Cells that are masked and whose center is at distance `>= h/2` from the
    /// boundary; these carry the quadrature.
    #[inline]
    pub fn is_active(&self, c: usize) -> bool {
        self.mask[c] && self.dist[c] >= 0.5 * self.h
    }

    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.origin == other.origin && self.h == other.h && self.dims == other.dims && self.mask == other.mask
    }
}

/// Scalar cell values on a grid; `mask` marks the cells where values are
/// defined (a subset of the grid mask).
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl GridFunction {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            mask: grid.mask.clone(),
            grid: Arc::clone(grid),
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    /// Samples `f` at masked cell centers.
    pub fn from_fn<F: Fn(Point) -> f64 + Sync>(grid: &Arc<Grid>, f: F) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|c| if grid.mask[c] { f(grid.center(c)) } else { 0.0 })
            .collect();
        Self {
            values,
            mask: grid.mask.clone(),
            grid: Arc::clone(grid),
        }
    }

    /// Wraps raw values; unmasked entries are zeroed.
    pub fn from_values(grid: &Arc<Grid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} cells", values.len(), grid.len())));
        }
        for (v, &m) in values.iter_mut().zip(&grid.mask) {
            if !m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::Parameter("values must be finite on masked cells".into()));
            }
        }
        Ok(Self {
            values,
            mask: grid.mask.clone(),
            grid: Arc::clone(grid),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, c: usize) -> f64 {
        self.values[c]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        let values = self
            .values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { f(v) } else { 0.0 })
            .collect();
        Self {
            values,
            mask: self.mask.clone(),
            grid: Arc::clone(&self.grid),
        }
    }

    /// `a f + b g` on the common mask.
    pub fn lin_comb(a: f64, f: &GridFunction, b: f64, g: &GridFunction) -> Result<Self> {
        if !Arc::ptr_eq(&f.grid, &g.grid) && !f.grid.same_geometry(&g.grid) {
            return Err(Error::GridMismatch("operands live on different grids".into()));
        }
        let mask: Vec<bool> = f.mask.iter().zip(&g.mask).map(|(&x, &y)| x && y).collect();
        let values = (0..f.values.len())
            .map(|c| if mask[c] { a * f.values[c] + b * g.values[c] } else { 0.0 })
            .collect();
        Ok(Self {
            values,
            mask,
            grid: Arc::clone(&f.grid),
        })
    }

    /// Restricts the definition mask to `keep`.
    pub fn restricted(&self, keep: &[bool]) -> Self {
        let mask: Vec<bool> = self.mask.iter().zip(keep).map(|(&a, &b)| a && b).collect();
        let values = self
            .values
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Self {
            values,
            mask,
            grid: Arc::clone(&self.grid),
        }
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        write_dump(w, &self.grid, &self.mask, &[&self.values], None)
    }

    /// Binary dump whose header carries `meta`.
    pub fn write_binary_with_meta<W: Write>(&self, w: W, meta: &serde_json::Value) -> Result<()> {
        write_dump(w, &self.grid, &self.mask, &[&self.values], Some(meta))
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_binary(BufWriter::new(File::create(path)?))
    }
}

/// Vector field with components sharing one grid and mask.
#[derive(Clone, Debug)]
pub struct VectorFieldGrid {
    components: Vec<GridFunction>,
}

impl VectorFieldGrid {
    pub fn new(components: Vec<GridFunction>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Parameter("a vector field needs at least one component".into()))?;
        for c in &components[1..] {
            if !Arc::ptr_eq(&c.grid, &first.grid) && !c.grid.same_geometry(&first.grid) {
                return Err(Error::GridMismatch("components live on different grids".into()));
            }
            if c.mask != first.mask {
                return Err(Error::GridMismatch("components have different masks".into()));
            }
        }
        Ok(Self { components })
    }

    pub fn from_fn<F: Fn(Point) -> [f64; 2] + Sync>(grid: &Arc<Grid>, f: F) -> Self {
        let a = GridFunction::from_fn(grid, |x| f(x)[0]);
        let b = GridFunction::from_fn(grid, |x| f(x)[1]);
        Self { components: vec![a, b] }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, k: usize) -> &GridFunction {
        &self.components[k]
    }

    pub fn components(&self) -> &[GridFunction] {
        &self.components
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.components[0].grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.components[0].mask
    }

    /// Cellwise Euclidean (Frobenius for gradients) magnitude.
    pub fn magnitude(&self) -> GridFunction {
        let first = &self.components[0];
        let values = (0..first.values.len())
            .map(|c| {
                self.components
                    .iter()
                    .map(|f| f.values[c] * f.values[c])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        GridFunction {
            values,
            mask: first.mask.clone(),
            grid: Arc::clone(&first.grid),
        }
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let vals: Vec<&Vec<f64>> = self.components.iter().map(|c| &c.values).collect();
        write_dump(w, self.grid(), self.mask(), &vals, None)
    }

    /// Binary dump whose header carries `meta`.
    pub fn write_binary_with_meta<W: Write>(&self, w: W, meta: &serde_json::Value) -> Result<()> {
        let vals: Vec<&Vec<f64>> = self.components.iter().map(|c| &c.values).collect();
        write_dump(w, self.grid(), self.mask(), &vals, Some(meta))
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_binary(BufWriter::new(File::create(path)?))
    }
}

/// Weighted norm with the number of masked cells dropped by the collar rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub value: f64,
    pub excluded: usize,
}

/// `(sum |f|^p d^power h^2)^{1/p}` over the given cells, skipping cells
/// outside the function's mask and those with `d < h/2`.
pub fn weighted_lp_norm_over<I: IntoIterator<Item = usize>>(
    f: &GridFunction,
    cells: I,
    p: f64,
    power: f64,
) -> Result<WeightedNorm> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("p must be in [1, inf), got {p}")));
    }
    let g = &f.grid;
    let mut acc = CompensatedSum::new();
    let mut excluded = 0;
    for c in cells {
        if !f.mask[c] {
            continue;
        }
        if !g.is_active(c) {
            excluded += 1;
            continue;
        }
        let v = f.values[c].abs();
        if v > 0.0 {
            acc.add(v.powf(p) * weight(g.dist[c], power));
        }
    }
    Ok(WeightedNorm {
        value: (acc.value() * g.cell_area()).powf(1.0 / p),
        excluded,
    })
}

#[inline]
fn weight(d: f64, power: f64) -> f64 {
    if power == 0.0 {
        1.0
    } else {
        d.powf(power)
    }
}

/// `‖f‖_{L^p(d^power)}` by midpoint quadrature over the masked cells.
pub fn weighted_lp_norm(f: &GridFunction, p: f64, power: f64) -> Result<WeightedNorm> {
    if !f.mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    weighted_lp_norm_over(f, 0..f.values.len(), p, power)
}

/// Cellwise Frobenius norm of a vector field, then `weighted_lp_norm`.
pub fn weighted_lp_norm_vector(u: &VectorFieldGrid, p: f64, power: f64) -> Result<WeightedNorm> {
    weighted_lp_norm(&u.magnitude(), p, power)
}

/// `sum f d^power h^2` over active cells of the function's mask.
pub fn weighted_integral(f: &GridFunction, power: f64) -> f64 {
    let g = &f.grid;
    let s: CompensatedSum = (0..f.values.len())
        .filter(|&c| f.mask[c] && g.is_active(c))
        .map(|c| f.values[c] * weight(g.dist[c], power))
        .collect();
    s.value() * g.cell_area()
}

/// Difference gradient: central where both axis neighbors are defined,
/// one-sided where one is; cells lacking both neighbors along some axis
/// drop out of the output mask.
pub fn gradient(f: &GridFunction) -> VectorFieldGrid {
    let g = &f.grid;
    let [nx, ny] = g.dims;
    let h = g.h;
    let defined = |i: isize, j: isize| -> Option<f64> {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            return None;
        }
        let c = g.index(i as usize, j as usize);
        f.mask[c].then(|| f.values[c])
    };
    let diff = |c: usize, axis: usize| -> Option<f64> {
        let (i, j) = g.ij(c);
        let (i, j) = (i as isize, j as isize);
        let (di, dj) = if axis == 0 { (1, 0) } else { (0, 1) };
        let here = f.values[c];
        match (defined(i - di, j - dj), defined(i + di, j + dj)) {
            (Some(a), Some(b)) => Some((b - a) / (2.0 * h)),
            (None, Some(b)) => Some((b - here) / h),
            (Some(a), None) => Some((here - a) / h),
            (None, None) => None,
        }
    };
    let n = f.values.len();
    let per_cell: Vec<Option<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|c| {
            if !f.mask[c] {
                return None;
            }
            Some((diff(c, 0)?, diff(c, 1)?))
        })
        .collect();
    let mask: Vec<bool> = per_cell.iter().map(Option::is_some).collect();
    let dx = per_cell.iter().map(|v| v.map_or(0.0, |d| d.0)).collect();
    let dy = per_cell.iter().map(|v| v.map_or(0.0, |d| d.1)).collect();
    let make = |values| GridFunction {
        grid: Arc::clone(g),
        values,
        mask: mask.clone(),
    };
    VectorFieldGrid {
        components: vec![make(dx), make(dy)],
    }
}

/// Subtracts the `d^{beta p}`-weighted mean over active cells.
pub fn weighted_mean_zero(f: &GridFunction, p: f64, beta: f64) -> Result<GridFunction> {
    let power = beta * p;
    let ones = GridFunction {
        values: vec![1.0; f.values.len()],
        mask: f.mask.clone(),
        grid: Arc::clone(&f.grid),
    };
    let total = weighted_integral(&ones, power);
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let c = weighted_integral(f, power) / total;
    Ok(f.map(|v| v - c))
}

/// Header of the binary grid dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format: String,
    pub version: u32,
    pub domain: String,
    pub h: f64,
    pub origin: Point,
    pub dims: [usize; 2],
    pub components: usize,
    /// Alternating run lengths of the mask, starting with unmasked cells.
    pub mask_rle: Vec<usize>,
    /// Caller-supplied provenance, e.g. the run configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

pub const DUMP_FORMAT: &str = "whardy-grid";

/// Run lengths of alternating `false`/`true` runs, starting with `false`.
pub fn rle_encode(mask: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut current = false;
    let mut run = 0;
    for &m in mask {
        if m == current {
            run += 1;
        } else {
            out.push(run);
            current = m;
            run = 1;
        }
    }
    out.push(run);
    out
}

pub fn rle_decode(runs: &[usize]) -> Vec<bool> {
    runs.iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat_n(k % 2 == 1, n))
        .collect()
}

fn write_dump<W: Write, V: AsRef<[f64]>>(
    mut w: W,
    grid: &Grid,
    mask: &[bool],
    comps: &[V],
    meta: Option<&serde_json::Value>,
) -> Result<()> {
    let header = DumpHeader {
        format: DUMP_FORMAT.into(),
        version: 1,
        domain: grid.domain.name().to_string(),
        h: grid.h,
        origin: grid.origin,
        dims: grid.dims,
        components: comps.len(),
        mask_rle: rle_encode(mask),
        meta: meta.cloned(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for comp in comps {
        for v in comp.as_ref() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parsed binary dump: header, mask and component-major values.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDump {
    pub header: DumpHeader,
    pub mask: Vec<bool>,
    pub components: Vec<Vec<f64>>,
}

impl GridDump {
    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: DumpHeader = serde_json::from_slice(&json)?;
        if header.format != DUMP_FORMAT {
            return Err(Error::Parameter(format!("unknown dump format {:?}", header.format)));
        }
        let n = header.dims[0] * header.dims[1];
        let mask = rle_decode(&header.mask_rle);
        if mask.len() != n {
            return Err(Error::GridMismatch(format!("mask has {} cells, dims give {n}", mask.len())));
        }
        let mut components = Vec::with_capacity(header.components);
        let mut buf = [0u8; 8];
        for _ in 0..header.components {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                v.push(f64::from_le_bytes(buf));
            }
            components.push(v);
        }
        Ok(Self {
            header,
            mask,
            components,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_domain, Preset, PresetParams};
    use proptest::prelude::*;

    fn square_grid(n: usize) -> Arc<Grid> {
        let dom = Arc::new(make_domain(Preset::UnitSquare, PresetParams::default()).unwrap());
        Grid::covering(dom, 1.0 / n as f64).unwrap()
    }

    #[test]
    fn unit_volume() {
        let g = square_grid(64);
        let f = GridFunction::constant(&g, 1.0);
        let n = weighted_lp_norm(&f, 2.0, 0.0).unwrap();
        assert!((n.value - 1.0).abs() < 2.0 * g.h());
        assert_eq!(n.excluded, 0);
    }

    #[test]
    fn norm_of_x() {
        let g = square_grid(128);
        let f = GridFunction::from_fn(&g, |p| p.x);
        let n = weighted_lp_norm(&f, 2.0, 0.0).unwrap().value;
        let exact = (1.0f64 / 3.0).sqrt();
        assert!((n / exact - 1.0).abs() < 2.0 * g.h() * g.h());
    }

    #[test]
    fn distance_integral_matches_triangle_split() {
        // Over each of the 4 triangles the distance is the height to its
        // base edge, so the integral is 4 * int_0^{1/2} t (1 - 2t) dt = 1/6.
        let g = square_grid(256);
        let f = GridFunction::constant(&g, 1.0);
        let n = weighted_lp_norm(&f, 1.0, 1.0).unwrap().value;
        assert!((n - 1.0 / 6.0).abs() < 2.0 * g.h(), "{n}");
    }

    #[test]
    fn collar_cells_are_counted() {
        let dom = Arc::new(make_domain(Preset::UnitSquare, PresetParams::default()).unwrap());
        // Offset grid: the first row of centers sits h/4 from the boundary.
        let h = 0.1;
        let g = Grid::new(dom, Point::new(-0.025, -0.025), h, [11, 11]).unwrap();
        let f = GridFunction::constant(&g, 1.0);
        let n = weighted_lp_norm(&f, 2.0, 0.0).unwrap();
        assert!(n.excluded > 0);
    }

    #[test]
    fn gradient_exact_on_linears_and_quadratics() {
        let g = square_grid(32);
        let lin = gradient(&GridFunction::from_fn(&g, |p| p.x));
        for c in 0..g.len() {
            if lin.mask()[c] {
                assert!((lin.component(0).get(c) - 1.0).abs() < 1e-12);
                assert!(lin.component(1).get(c).abs() < 1e-12);
            }
        }
        let quad = gradient(&GridFunction::from_fn(&g, |p| p.x * p.x + p.y * p.y));
        let [nx, ny] = g.dims();
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let c = g.index(i, j);
                let x = g.center(c);
                assert!((quad.component(0).get(c) - 2.0 * x.x).abs() < 1e-12);
                assert!((quad.component(1).get(c) - 2.0 * x.y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_second_order_on_trig() {
        let f = |p: Point| (3.0 * p.x).sin() * (2.0 * p.y).cos();
        let df = |p: Point| [3.0 * (3.0 * p.x).cos() * (2.0 * p.y).cos(), -2.0 * (3.0 * p.x).sin() * (2.0 * p.y).sin()];
        let err = |n: usize| {
            let g = square_grid(n);
            let gr = gradient(&GridFunction::from_fn(&g, f));
            let [nx, ny] = g.dims();
            let mut e: f64 = 0.0;
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    let c = g.index(i, j);
                    let d = df(g.center(c));
                    e = e.max((gr.component(0).get(c) - d[0]).abs());
                    e = e.max((gr.component(1).get(c) - d[1]).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < e1 / 3.5, "{e1} {e2}");
    }

    #[test]
    fn gradient_drops_isolated_cells() {
        let dom = Arc::new(make_domain(Preset::UnitSquare, PresetParams::default()).unwrap());
        let g = Grid::covering(dom, 0.5).unwrap();
        let mut keep = vec![false; g.len()];
        keep[0] = true;
        let f = GridFunction::constant(&g, 1.0).restricted(&keep);
        let gr = gradient(&f);
        assert!(gr.mask().iter().all(|&m| !m));
    }

    #[test]
    fn mean_zero_properties() {
        let g = square_grid(64);
        let five = weighted_mean_zero(&GridFunction::constant(&g, 5.0), 2.0, -0.3).unwrap();
        assert!(five.max_abs() < 1e-12);
        let x = weighted_mean_zero(&GridFunction::from_fn(&g, |p| p.x), 2.0, 0.0).unwrap();
        for c in 0..g.len() {
            assert!((x.get(c) - (g.center(c).x - 0.5)).abs() < 1e-12);
        }
        let f = GridFunction::from_fn(&g, |p| (p.x * 7.0).sin() + p.y * p.y);
        let once = weighted_mean_zero(&f, 2.0, -0.4).unwrap();
        let twice = weighted_mean_zero(&once, 2.0, -0.4).unwrap();
        for c in 0..g.len() {
            assert!((once.get(c) - twice.get(c)).abs() < 1e-14);
        }
        let scale = weighted_lp_norm(&f, 1.0, -0.8).unwrap().value;
        assert!(weighted_integral(&once, -0.8).abs() < 1e-12 * scale);
    }

    #[test]
    fn binary_dump_roundtrip() {
        let g = square_grid(8);
        let dom = Arc::new(make_domain(Preset::LShape, PresetParams::default()).unwrap());
        let gl = Grid::covering(dom, 1.0 / 8.0).unwrap();
        for grid in [g, gl] {
            let u = VectorFieldGrid::from_fn(&grid, |p| [p.x, -p.y * 2.0]);
            let mut buf = Vec::new();
            u.write_binary(&mut buf).unwrap();
            let header_len = u64::from_le_bytes(buf[..8].try_into().unwrap()) as usize;
            assert_eq!(buf.len(), 8 + header_len + 2 * 8 * grid.len());
            let d = GridDump::read(buf.as_slice()).unwrap();
            assert_eq!(d.mask, grid.mask());
            assert_eq!(d.components[0], u.component(0).values());
            assert_eq!(d.components[1], u.component(1).values());
        }
    }

    #[test]
    fn rle_roundtrip_edge_cases() {
        for m in [vec![], vec![true], vec![false], vec![true, true, false, true]] {
            let runs = rle_encode(&m);
            assert_eq!(rle_decode(&runs), m);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn norm_homogeneous_and_subadditive(a in -5.0f64..5.0, k1 in 1.0f64..6.0, k2 in 1.0f64..6.0, p in 1.0f64..4.0, power in -0.9f64..1.0) {
            let g = square_grid(24);
            let f = GridFunction::from_fn(&g, |x| (k1 * x.x).sin() + x.y);
            let h = GridFunction::from_fn(&g, |x| (k2 * x.y).cos() * x.x);
            let nf = weighted_lp_norm(&f, p, power).unwrap().value;
            let naf = weighted_lp_norm(&f.scaled(a), p, power).unwrap().value;
            prop_assert!((naf - a.abs() * nf).abs() <= 1e-12 * nf.max(1e-300));
            let sum = GridFunction::lin_comb(1.0, &f, 1.0, &h).unwrap();
            let ns = weighted_lp_norm(&sum, p, power).unwrap().value;
            let nh = weighted_lp_norm(&h, p, power).unwrap().value;
            prop_assert!(ns <= nf + nh + 1e-10);
        }

        #[test]
        fn gradient_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = square_grid(16);
            let f = GridFunction::from_fn(&g, |x| x.x * x.y + x.x.sin());
            let h = GridFunction::from_fn(&g, |x| x.y * x.y * x.y);
            let lhs = gradient(&GridFunction::lin_comb(a, &f, b, &h).unwrap());
            let (gf, gh) = (gradient(&f), gradient(&h));
            for k in 0..2 {
                let rhs = GridFunction::lin_comb(a, gf.component(k), b, gh.component(k)).unwrap();
                for c in 0..g.len() {
                    prop_assert!((lhs.component(k).get(c) - rhs.get(c)).abs() <= 1e-12 * (1.0 + rhs.get(c).abs()));
                }
            }
        }
    }
}
