//! Decomposition of a mean-zero grid function into pieces `g_t` supported on
//! the expanded cubes `U_t`, each with zero integral, by transferring shadow
//! masses through the boxes `B_t`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, GridFunction};
use crate::geometry::{Aabb, Point, PolygonalDomain};
use crate::numeric::CompensatedSum;
use crate::treecover::TreeCovering;

/// Cells per finest cube side.
pub const CELLS_PER_FINEST_SIDE: usize = 4;

/// Resolution at which every expanded cube and transfer box is a union of
/// cells, so `|B_t|` does not depend on `h`.
pub const EXACT_CELLS_PER_FINEST_SIDE: usize = 32;

/// Domain carrying the covering: the Whitney domain, or the square spanned
/// by the cubes of a chain.
pub fn covering_domain(cov: &TreeCovering) -> Result<Arc<PolygonalDomain>> {
    if let Some(dec) = cov.decomposition() {
        return Ok(dec.domain_arc());
    }
    let mut min = cov.cube(0).min;
    let mut max = cov.cube(0).max;
    for t in 1..cov.len() {
        let b = cov.cube(t);
        min = Point::new(min.x.min(b.min.x), min.y.min(b.min.y));
        max = Point::new(max.x.max(b.max.x), max.y.max(b.max.y));
    }
    Ok(Arc::new(PolygonalDomain::new(
        "cube",
        vec![min, Point::new(max.x, min.y), max, Point::new(min.x, max.y)],
    )?))
}

/// Grid with `h = finest side / 4` aligned to the cube lattice.
pub fn decomposition_grid(cov: &TreeCovering) -> Result<Arc<Grid>> {
    decomposition_grid_with(cov, CELLS_PER_FINEST_SIDE)
}

/// Grid with `h = finest side / cells_per_side` aligned to the cube lattice.
/// At 32 cells per finest side every `U_t` and `B_t` is an exact union of cells.
pub fn decomposition_grid_with(cov: &TreeCovering, cells_per_side: usize) -> Result<Arc<Grid>> {
    if cells_per_side == 0 || !cells_per_side.is_power_of_two() {
        return Err(Error::Parameter(format!(
            "cells per finest side must be a power of two, got {cells_per_side}"
        )));
    }
    let finest = (0..cov.len())
        .map(|t| cov.cube(t).max.x - cov.cube(t).min.x)
        .fold(f64::INFINITY, f64::min);
    let h = finest / cells_per_side as f64;
    Grid::aligned(covering_domain(cov)?, cov.cube(0).min, h)
}

/// Masked cells whose closed box meets the interior of `b`.
pub fn cells_overlapping(grid: &Grid, b: &Aabb) -> Vec<usize> {
    let h = grid.h();
    let o = grid.origin();
    let [nx, ny] = grid.dims();
    let eps = 1e-9 * h;
    let range = |lo: f64, hi: f64, org: f64, n: usize| -> (usize, usize) {
        let a = (((lo - org + eps) / h).floor().max(0.0) as usize).min(n);
        let z = (((hi - org - eps) / h).ceil().max(0.0) as usize).min(n);
        (a, z.max(a))
    };
    let (i0, i1) = range(b.min.x, b.max.x, o.x, nx);
    let (j0, j1) = range(b.min.y, b.max.y, o.y, ny);
    let mut out = Vec::with_capacity((i1 - i0) * (j1 - j0));
    for j in j0..j1 {
        for i in i0..i1 {
            let c = grid.index(i, j);
            if grid.is_masked(c) {
                out.push(c);
            }
        }
    }
    out
}

/// Cell sets of every `Q_t`, discrete `U_t` and snapped `B_t`.
#[derive(Clone, Debug)]
pub struct CellLayout {
    grid: Arc<Grid>,
    owner: Vec<Option<usize>>,
    q_cells: Vec<Vec<usize>>,
    u_cells: Vec<Vec<usize>>,
    b_cells: Vec<Vec<usize>>,
    collar: usize,
}

impl CellLayout {
    /// Fails with a grid mismatch when a cube is not a union of cells and
    /// with a cell-assignment error when two cubes claim the same cell.
    pub fn new(cov: &TreeCovering, grid: &Arc<Grid>) -> Result<Self> {
        let n = cov.len();
        let mut owner = vec![None; grid.len()];
        let mut q_cells = Vec::with_capacity(n);
        for t in 0..n {
            let [[i0, j0], [i1, j1]] = grid.box_cells(cov.cube(t))?;
            let mut cells = Vec::with_capacity((i1 - i0) * (j1 - j0));
            for j in j0..j1 {
                for i in i0..i1 {
                    let c = grid.index(i, j);
                    if !grid.is_masked(c) || owner[c].is_some() {
                        return Err(Error::CellAssignment { cell: c });
                    }
                    owner[c] = Some(t);
                    cells.push(c);
                }
            }
            q_cells.push(cells);
        }
        let u_cells = (0..n).map(|t| cells_overlapping(grid, cov.expanded(t))).collect();
        let b_cells = (0..n)
            .map(|t| cov.transfer(t).map(|b| cells_overlapping(grid, b)).unwrap_or_default())
            .collect();
        let collar = (0..grid.len())
            .filter(|&c| grid.is_masked(c) && owner[c].is_none())
            .count();
        Ok(Self {
            grid: Arc::clone(grid),
            owner,
            q_cells,
            u_cells,
            b_cells,
            collar,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.q_cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_cells.is_empty()
    }

    /// Cube owning each cell (`None` off the covered region).
    pub fn owner(&self) -> &[Option<usize>] {
        &self.owner
    }

    pub fn q_cells(&self, t: usize) -> &[usize] {
        &self.q_cells[t]
    }

    pub fn u_cells(&self, t: usize) -> &[usize] {
        &self.u_cells[t]
    }

    pub fn b_cells(&self, t: usize) -> &[usize] {
        &self.b_cells[t]
    }

    /// Masked cells outside every cube.
    pub fn collar_cells(&self) -> usize {
        self.collar
    }

    pub fn covered_mask(&self) -> Vec<bool> {
        self.owner.iter().map(Option::is_some).collect()
    }

    /// `|B_t|` from the snapped cells.
    pub fn b_area(&self, t: usize) -> f64 {
        self.b_cells[t].len() as f64 * self.grid.cell_area()
    }
}

/// Values on a sorted list of cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseField {
    pub cells: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseField {
    fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(c, _)| c);
        let mut out = SparseField::default();
        for (c, v) in pairs {
            if out.cells.last() == Some(&c) {
                *out.values.last_mut().expect("parallel vectors") += v;
            } else {
                out.cells.push(c);
                out.values.push(v);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn integral(&self, cell_area: f64) -> f64 {
        self.values.iter().copied().collect::<CompensatedSum>().value() * cell_area
    }
}

/// Pieces `g_t` with the shadow masses `m_t` used to build them.
#[derive(Clone, Debug)]
pub struct Decomposition {
    layout: Arc<CellLayout>,
    parts: Vec<SparseField>,
    shadow_mass: Vec<f64>,
    input: GridFunction,
}

impl Decomposition {
    pub fn layout(&self) -> &CellLayout {
        &self.layout
    }

    pub fn parts(&self) -> &[SparseField] {
        &self.parts
    }

    pub fn part(&self, t: usize) -> &SparseField {
        &self.parts[t]
    }

    /// `m_t`, the integral of `g` over the shadow of `t`.
    pub fn shadow_mass(&self) -> &[f64] {
        &self.shadow_mass
    }

    pub fn input(&self) -> &GridFunction {
        &self.input
    }

    /// `sum_t g_t` as dense cell values.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = vec![CompensatedSum::new(); self.layout.grid.len()];
        for part in &self.parts {
            for (&c, &v) in part.cells.iter().zip(&part.values) {
                out[c].add(v);
            }
        }
        out.iter().map(CompensatedSum::value).collect()
    }

    /// Worst violations of reconstruction, zero integrals and support.
    pub fn check(&self) -> DecompositionCheck {
        let area = self.layout.grid.cell_area();
        let rec = self.reconstruct();
        let g = &self.input;
        let reconstruction_error = self
            .layout
            .owner
            .iter()
            .enumerate()
            .filter(|(_, o)| o.is_some())
            .map(|(c, _)| (rec[c] - g.get(c)).abs())
            .fold(0.0, f64::max);
        let max_part_integral = self
            .parts
            .iter()
            .map(|p| p.integral(area).abs())
            .fold(0.0, f64::max);
        let support_violations = self
            .parts
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let u = &self.layout.u_cells[t];
                p.cells.iter().filter(|c| u.binary_search(c).is_err()).count()
            })
            .sum();
        DecompositionCheck {
            reconstruction_error,
            max_part_integral,
            support_violations,
            g_sup: g.max_abs(),
            g_l1: covered_l1(g, &self.layout),
        }
    }

    /// Writes the pieces as `u64` JSON-index length, JSON index, then per
    /// node `count` little-endian `u64` cell ids followed by `count` `f64`s.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        self.write_sparse(w, None)
    }

    /// As [`Self::write_binary`] with `meta` in the index.
    pub fn write_binary_with_meta<W: Write>(&self, w: W, meta: &serde_json::Value) -> Result<()> {
        self.write_sparse(w, Some(meta))
    }

    fn write_sparse<W: Write>(&self, mut w: W, meta: Option<&serde_json::Value>) -> Result<()> {
        let grid = &self.layout.grid;
        let mut nodes = Vec::new();
        let mut offset = 0u64;
        for (t, p) in self.parts.iter().enumerate() {
            if p.is_empty() {
                continue;
            }
            nodes.push(SparseIndexEntry {
                node: t,
                offset,
                count: p.len(),
            });
            offset += 16 * p.len() as u64;
        }
        let index = SparseIndex {
            format: SPARSE_FORMAT.into(),
            version: 1,
            h: grid.h(),
            origin: grid.origin(),
            dims: grid.dims(),
            nodes,
            meta: meta.cloned(),
        };
        let json = serde_json::to_vec(&index)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for e in &index.nodes {
            let p = &self.parts[e.node];
            for &c in &p.cells {
                w.write_all(&(c as u64).to_le_bytes())?;
            }
            for &v in &p.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_binary(BufWriter::new(File::create(path)?))
    }
}

pub const SPARSE_FORMAT: &str = "whardy-sparse";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseIndexEntry {
    pub node: usize,
    /// Byte offset from the start of the data block.
    pub offset: u64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    pub format: String,
    pub version: u32,
    pub h: f64,
    pub origin: Point,
    pub dims: [usize; 2],
    pub nodes: Vec<SparseIndexEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

/// Reads a sparse dump back into `(index, per-entry fields)`.
pub fn read_sparse<R: Read>(mut r: R) -> Result<(SparseIndex, Vec<SparseField>)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let index: SparseIndex = serde_json::from_slice(&json)?;
    if index.format != SPARSE_FORMAT {
        return Err(Error::Parameter(format!("unknown sparse format {:?}", index.format)));
    }
    let mut buf = [0u8; 8];
    let mut fields = Vec::with_capacity(index.nodes.len());
    for e in &index.nodes {
        let mut f = SparseField::default();
        for _ in 0..e.count {
            r.read_exact(&mut buf)?;
            f.cells.push(u64::from_le_bytes(buf) as usize);
        }
        for _ in 0..e.count {
            r.read_exact(&mut buf)?;
            f.values.push(f64::from_le_bytes(buf));
        }
        fields.push(f);
    }
    Ok((index, fields))
}

pub fn load_sparse(path: impl AsRef<Path>) -> Result<(SparseIndex, Vec<SparseField>)> {
    read_sparse(BufReader::new(File::open(path)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub reconstruction_error: f64,
    pub max_part_integral: f64,
    pub support_violations: usize,
    pub g_sup: f64,
    pub g_l1: f64,
}

impl DecompositionCheck {
    /// Reconstruction to `1e-12 ‖g‖_∞`, integrals to `1e-10 ‖g‖_1`, exact support.
    pub fn passes(&self) -> bool {
        self.reconstruction_error <= 1e-12 * self.g_sup
            && self.max_part_integral <= 1e-10 * self.g_l1
            && self.support_violations == 0
    }
}

fn covered_l1(g: &GridFunction, layout: &CellLayout) -> f64 {
    let s: CompensatedSum = layout
        .owner
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_some())
        .map(|(c, _)| g.get(c).abs())
        .collect();
    s.value() * layout.grid.cell_area()
}

fn covered_integral(g: &GridFunction, layout: &CellLayout) -> f64 {
    let s: CompensatedSum = layout
        .owner
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_some())
        .map(|(c, _)| g.get(c))
        .collect();
    s.value() * layout.grid.cell_area()
}

/// Subtracts the mean over the covered cells.
pub fn covered_mean_zero(g: &GridFunction, layout: &CellLayout) -> GridFunction {
    let covered = layout.owner.iter().filter(|o| o.is_some()).count();
    let mean = covered_integral(g, layout) / (covered as f64 * layout.grid.cell_area());
    g.map(|v| v - mean)
}

/// `g_t = g χ_{Q_t} + sum_{s child of t} m_s φ_s - m_t φ_t` with
/// `φ_t = χ_{B_t} / |B_t|` and `m_t` the integral of `g` over the shadow of `t`.
/// Collar cells are ignored; `g` must integrate to zero over the covered cells.
pub fn c_decompose(cov: &TreeCovering, layout: &Arc<CellLayout>, g: &GridFunction) -> Result<Decomposition> {
    if layout.len() != cov.len() {
        return Err(Error::GridMismatch(format!(
            "layout has {} cubes, covering has {}",
            layout.len(),
            cov.len()
        )));
    }
    if !Arc::ptr_eq(g.grid(), &layout.grid) && !g.grid().same_geometry(&layout.grid) {
        return Err(Error::GridMismatch("function and layout use different grids".into()));
    }
    let area = layout.grid.cell_area();
    let l1 = covered_l1(g, layout);
    let mean = covered_integral(g, layout);
    if mean.abs() > 1e-10 * l1 {
        return Err(Error::NonZeroMean {
            mean: mean.abs(),
            allowed: 1e-10 * l1,
        });
    }
    let tree = cov.tree();
    let n = cov.len();
    let mut mass = vec![CompensatedSum::new(); n];
    for (acc, cells) in mass.iter_mut().zip(&layout.q_cells) {
        for &c in cells {
            acc.add(g.get(c) * area);
        }
    }
    for &t in tree.order().iter().rev() {
        if let Some(p) = tree.parent(t) {
            let v = mass[t].value();
            mass[p].add(v);
        }
    }
    let m: Vec<f64> = mass.iter().map(CompensatedSum::value).collect();
    for t in 0..n {
        if tree.parent(t).is_some() && layout.b_cells[t].is_empty() {
            return Err(Error::Structure(format!("transfer box of node {t} contains no grid cell")));
        }
    }
    let parts = (0..n)
        .map(|t| {
            let mut pairs: Vec<(usize, f64)> = layout.q_cells[t].iter().map(|&c| (c, g.get(c))).collect();
            for &s in tree.children(t) {
                let a = m[s] / layout.b_area(s);
                pairs.extend(layout.b_cells[s].iter().map(|&c| (c, a)));
            }
            if tree.parent(t).is_some() {
                let a = m[t] / layout.b_area(t);
                pairs.extend(layout.b_cells[t].iter().map(|&c| (c, -a)));
            }
            SparseField::from_pairs(pairs)
        })
        .collect();
    Ok(Decomposition {
        layout: Arc::clone(layout),
        parts,
        shadow_mass: m,
        input: g.clone(),
    })
}

/// `(sum_t ‖g_t‖^q_{L^q(U_t, d^{-beta q})})^{1/q} / ‖g‖_{L^q(d^{-beta q})}`,
/// both over the covered region.
pub fn decomposition_ratio(dec: &Decomposition, q: f64, beta: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::Parameter(format!("q must be >= 1, got {q}")));
    }
    let grid = &dec.layout.grid;
    let power = -beta * q;
    let term = |c: usize, v: f64| v.abs().powf(q) * grid.dist(c).powf(power);
    let mut num = CompensatedSum::new();
    for p in &dec.parts {
        for (&c, &v) in p.cells.iter().zip(&p.values) {
            num.add(term(c, v));
        }
    }
    let mut den = CompensatedSum::new();
    for (c, o) in dec.layout.owner.iter().enumerate() {
        if o.is_some() {
            den.add(term(c, dec.input.get(c)));
        }
    }
    if den.value() <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((num.value() / den.value()).powf(1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_domain, Preset, PresetParams};
    use crate::treecover::{build_cube_chain, build_tree};
    use crate::whitney::WhitneyDecomposition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tree_for(preset: Preset, level: u32) -> TreeCovering {
        let dom = Arc::new(
            make_domain(
                preset,
                PresetParams {
                    level: 2,
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        let dec = Arc::new(WhitneyDecomposition::build(Arc::clone(&dom), level).unwrap());
        build_tree(&dec, dom.center()).unwrap()
    }

    fn setup(cov: &TreeCovering) -> Arc<CellLayout> {
        let grid = decomposition_grid(cov).unwrap();
        Arc::new(CellLayout::new(cov, &grid).unwrap())
    }

    #[test]
    fn single_cube_support_gives_identity() {
        let cov = tree_for(Preset::UnitSquare, 5);
        let layout = setup(&cov);
        let t = cov.len() / 2;
        let cells = layout.q_cells(t).to_vec();
        let mut vals = vec![0.0; layout.grid().len()];
        let half = cells.len() / 2;
        for (k, &c) in cells.iter().enumerate() {
            vals[c] = if k < half { 1.0 } else { -1.0 };
        }
        let g = GridFunction::from_values(layout.grid(), vals).unwrap();
        let dec = c_decompose(&cov, &layout, &g).unwrap();
        for (s, p) in dec.parts().iter().enumerate() {
            if s == t {
                for (&c, &v) in p.cells.iter().zip(&p.values) {
                    assert_eq!(v, g.get(c));
                }
                assert!(cells.iter().all(|c| p.cells.binary_search(c).is_ok()));
            } else {
                assert!(p.values.iter().all(|&v| v == 0.0));
            }
        }
        assert!((decomposition_ratio(&dec, 2.0, -0.3).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_cube_hand_computation() {
        // Chain on a 2x1 strip: root cell then one child of equal size.
        let cov = build_cube_chain(2, 1.0).unwrap();
        let layout = setup(&cov);
        let (r, c) = (0, 1);
        let mut vals = vec![0.0; layout.grid().len()];
        for &x in layout.q_cells(c) {
            vals[x] = 1.0;
        }
        for &x in layout.q_cells(r) {
            vals[x] = -1.0;
        }
        // The 2x2 snake has two further cells; g vanishes there.
        let g = GridFunction::from_values(layout.grid(), vals).unwrap();
        let keep: Vec<bool> = (0..layout.grid().len())
            .map(|x| layout.q_cells(r).contains(&x) || layout.q_cells(c).contains(&x))
            .collect();
        let g = g.restricted(&keep);
        let dec = c_decompose(&cov, &layout, &g).unwrap();
        let q_area = 0.25;
        let m_c = dec.shadow_mass()[c];
        assert!((m_c - q_area).abs() < 1e-14);
        let phi = q_area / layout.b_area(c);
        for (&x, &v) in dec.part(c).cells.iter().zip(&dec.part(c).values) {
            let expect = if layout.q_cells(c).contains(&x) { 1.0 } else { 0.0 }
                - if layout.b_cells(c).contains(&x) { phi } else { 0.0 };
            assert!((v - expect).abs() < 1e-14);
        }
        for (&x, &v) in dec.part(r).cells.iter().zip(&dec.part(r).values) {
            let expect = -(layout.q_cells(r).contains(&x) as i32 as f64)
                + if layout.b_cells(c).contains(&x) { phi } else { 0.0 };
            assert!((v - expect).abs() < 1e-14);
        }
        let chk = dec.check();
        assert!(chk.passes(), "{chk:?}");
    }

    #[test]
    fn decomposition_properties_on_random_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for preset in Preset::ALL {
            let cov = tree_for(preset, 6);
            let layout = setup(&cov);
            for _ in 0..3 {
                let vals: Vec<f64> = (0..layout.grid().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let g = covered_mean_zero(&GridFunction::from_values(layout.grid(), vals).unwrap(), &layout);
                let dec = c_decompose(&cov, &layout, &g).unwrap();
                let chk = dec.check();
                assert!(chk.passes(), "{preset:?} {chk:?}");
            }
        }
    }

    #[test]
    fn subtree_integrals_telescope() {
        let cov = tree_for(Preset::LShape, 6);
        let layout = setup(&cov);
        let g = covered_mean_zero(
            &GridFunction::from_fn(layout.grid(), |p| (5.0 * p.x).sin() + p.y * p.y),
            &layout,
        );
        let dec = c_decompose(&cov, &layout, &g).unwrap();
        let area = layout.grid().cell_area();
        let ints: Vec<f64> = dec.parts().iter().map(|p| p.integral(area)).collect();
        let tree = cov.tree();
        let mut sub = ints.clone();
        for &t in tree.order().iter().rev() {
            if let Some(p) = tree.parent(t) {
                sub[p] += sub[t];
            }
        }
        let scale = g.max_abs();
        assert!(sub.iter().all(|s| s.abs() < 1e-12 * scale));
    }

    #[test]
    fn linear_in_input() {
        let cov = tree_for(Preset::UnitSquare, 5);
        let layout = setup(&cov);
        let g1 = covered_mean_zero(&GridFunction::from_fn(layout.grid(), |p| p.x * p.y), &layout);
        let g2 = covered_mean_zero(&GridFunction::from_fn(layout.grid(), |p| (3.0 * p.y).cos()), &layout);
        let (a, b) = (2.5, -1.25);
        let mix = GridFunction::lin_comb(a, &g1, b, &g2).unwrap();
        let d1 = c_decompose(&cov, &layout, &g1).unwrap();
        let d2 = c_decompose(&cov, &layout, &g2).unwrap();
        let dm = c_decompose(&cov, &layout, &mix).unwrap();
        for t in 0..cov.len() {
            let (p1, p2, pm) = (d1.part(t), d2.part(t), dm.part(t));
            assert_eq!(p1.cells, pm.cells);
            for k in 0..pm.len() {
                assert!((pm.values[k] - (a * p1.values[k] + b * p2.values[k])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_nonzero_mean() {
        let cov = tree_for(Preset::UnitSquare, 5);
        let layout = setup(&cov);
        let g = GridFunction::constant(layout.grid(), 1.0);
        assert!(matches!(c_decompose(&cov, &layout, &g), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn transfer_cells_are_disjoint_and_shared() {
        for preset in Preset::ALL {
            let cov = tree_for(preset, 6);
            let layout = setup(&cov);
            let mut seen = vec![false; layout.grid().len()];
            for t in 0..cov.len() {
                let Some(p) = cov.parent(t) else { continue };
                for &c in layout.b_cells(t) {
                    assert!(!seen[c], "{preset:?}: cell {c} in two transfer sets");
                    seen[c] = true;
                    assert!(layout.u_cells(t).binary_search(&c).is_ok());
                    assert!(layout.u_cells(p).binary_search(&c).is_ok());
                }
            }
        }
    }

    #[test]
    fn sparse_dump_roundtrip() {
        let cov = tree_for(Preset::UnitSquare, 5);
        let layout = setup(&cov);
        let g = covered_mean_zero(&GridFunction::from_fn(layout.grid(), |p| p.x), &layout);
        let dec = c_decompose(&cov, &layout, &g).unwrap();
        let mut buf = Vec::new();
        dec.write_binary(&mut buf).unwrap();
        let (index, fields) = read_sparse(buf.as_slice()).unwrap();
        for (e, f) in index.nodes.iter().zip(&fields) {
            assert_eq!(f, dec.part(e.node));
        }
    }
}
