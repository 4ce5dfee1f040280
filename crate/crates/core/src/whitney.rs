//! Truncated Whitney decompositions into dyadic squares.
//!
//! Cubes live in a fixed dyadic frame: a square of side `L0` anchored at
//! `origin`. A cube of `level` l and integer `index` (a, b) is
//! `origin + [a, a+1] x [b, b+1] * L0 / 2^l`. Neighbor tests are carried out
//! on integer coordinates at the finest level so they involve no tolerance.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, PolygonalDomain, DIM};

/// Default expansion factor of `U_t` around `Q_t`.
pub const EXPANSION: f64 = 17.0 / 16.0;

/// Reference box of the dyadic lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Point,
    pub side: f64,
}

impl Frame {
    /// Bounding box inflated by 10%, with side snapped up to a power of two
    /// and centered on the bounding box.
    pub fn for_domain(dom: &PolygonalDomain) -> Frame {
        let bb = dom.bounding_box();
        let [hx, hy] = bb.half_widths();
        let side = 2.0 * 1.1 * hx.max(hy);
        let side = 2f64.powi(side.log2().ceil() as i32);
        let c = bb.center();
        Frame {
            origin: Point::new(c.x - 0.5 * side, c.y - 0.5 * side),
            side,
        }
    }
}

/// Dyadic square identified by level and integer index within a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: [i64; 2],
}

impl DyadicCube {
    pub fn new(level: u32, index: [i64; 2]) -> Self {
        Self { level, index }
    }

    /// Side length in physical units.
    pub fn side(&self, frame: &Frame) -> f64 {
        frame.side * 0.5f64.powi(self.level as i32)
    }

    /// Side length in frame units, `2^-level`.
    pub fn side_frame_units(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn diam(&self, frame: &Frame) -> f64 {
        self.side(frame) * (DIM as f64).sqrt()
    }

    pub fn bbox(&self, frame: &Frame) -> Aabb {
        let l = self.side(frame);
        let min = Point::new(
            frame.origin.x + self.index[0] as f64 * l,
            frame.origin.y + self.index[1] as f64 * l,
        );
        Aabb::new(min, Point::new(min.x + l, min.y + l))
    }

    pub fn center(&self, frame: &Frame) -> Point {
        self.bbox(frame).center()
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        (self.level > 0).then(|| DyadicCube::new(self.level - 1, self.index.map(|i| i.div_euclid(2))))
    }

    pub fn children(&self) -> [DyadicCube; 4] {
        let [a, b] = self.index;
        let l = self.level + 1;
        [
            DyadicCube::new(l, [2 * a, 2 * b]),
            DyadicCube::new(l, [2 * a + 1, 2 * b]),
            DyadicCube::new(l, [2 * a, 2 * b + 1]),
            DyadicCube::new(l, [2 * a + 1, 2 * b + 1]),
        ]
    }

    /// Integer extent `[lo, hi]` per axis at `fine_level >= level`.
    pub fn fine_extent(&self, fine_level: u32) -> [[i64; 2]; 2] {
        let s = 1i64 << (fine_level - self.level);
        [
            [self.index[0] * s, (self.index[0] + 1) * s],
            [self.index[1] * s, (self.index[1] + 1) * s],
        ]
    }
}

/// Dimension of the intersection of two closed dyadic cubes, or `None` when
/// they are disjoint. Uses integer arithmetic at `fine_level`.
pub fn intersection_dim(a: &DyadicCube, b: &DyadicCube, fine_level: u32) -> Option<usize> {
    let (ea, eb) = (a.fine_extent(fine_level), b.fine_extent(fine_level));
    let mut dim = 0;
    for k in 0..DIM {
        let lo = ea[k][0].max(eb[k][0]);
        let hi = ea[k][1].min(eb[k][1]);
        if lo > hi {
            return None;
        }
        if hi > lo {
            dim += 1;
        }
    }
    Some(dim)
}

/// Concentric box of side `factor * side(c)`, `factor` in `(1, 5/4)`.
pub fn expanded_cube(c: &DyadicCube, frame: &Frame, factor: f64) -> Result<Aabb> {
    if !(factor > 1.0 && factor < 1.25) {
        return Err(Error::Parameter(format!(
            "expansion factor must lie in (1, 5/4), got {factor}"
        )));
    }
    Ok(c.bbox(frame).scaled(factor))
}

/// Whitney predicate of a single cube: inside the open domain with
/// `dist(Q, boundary) >= diam(Q)`. Returns the exact distance when accepted.
pub fn acceptable(dom: &PolygonalDomain, frame: &Frame, c: &DyadicCube) -> Option<f64> {
    let b = c.bbox(frame);
    if !dom.contains(b.center()) {
        return None;
    }
    let dist = dom.box_distance_to_boundary(&b);
    (dist > 0.0 && dist >= c.diam(frame)).then_some(dist)
}

#[derive(Clone, Debug)]
pub struct WhitneyDecomposition {
    domain: Arc<PolygonalDomain>,
    frame: Frame,
    max_level: u32,
    cubes: Vec<DyadicCube>,
    dist: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
    face_neighbors: Vec<Vec<usize>>,
}

/// Builds the truncated Whitney decomposition: maximal dyadic cubes with
/// `diam(Q) <= dist(Q, boundary)`, no finer than `max_level`.
pub fn whitney_decompose(dom: &PolygonalDomain, max_level: u32) -> Result<WhitneyDecomposition> {
    WhitneyDecomposition::build(Arc::new(dom.clone()), max_level)
}

impl WhitneyDecomposition {
    pub fn build(domain: Arc<PolygonalDomain>, max_level: u32) -> Result<Self> {
        if max_level < 2 {
            return Err(Error::Parameter(format!("max_level must be >= 2, got {max_level}")));
        }
        if max_level > 16 {
            return Err(Error::Parameter(format!("max_level {max_level} exceeds 16")));
        }
        let frame = Frame::for_domain(&domain);
        let mut accepted: Vec<(DyadicCube, f64)> = Vec::new();
        let mut stack = vec![DyadicCube::new(0, [0, 0])];
        while let Some(c) = stack.pop() {
            if let Some(d) = acceptable(&domain, &frame, &c) {
                accepted.push((c, d));
                continue;
            }
            if c.level >= max_level {
                continue;
            }
            let b = c.bbox(&frame);
            let outside = !domain.contains(b.center()) && domain.box_distance_to_boundary(&b) > 0.0;
            if outside {
                continue;
            }
            stack.extend(c.children());
        }
        if accepted.is_empty() {
            return Err(Error::EmptyDecomposition { max_level });
        }
        accepted.sort_by_key(|a| a.0);
        let (cubes, dist): (Vec<_>, Vec<_>) = accepted.into_iter().unzip();
        let (neighbors, face_neighbors) = neighbor_lists(&cubes, max_level);
        Ok(Self {
            domain,
            frame,
            max_level,
            cubes,
            dist,
            neighbors,
            face_neighbors,
        })
    }

    pub fn domain(&self) -> &PolygonalDomain {
        &self.domain
    }

    pub fn domain_arc(&self) -> Arc<PolygonalDomain> {
        Arc::clone(&self.domain)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn cube(&self, id: usize) -> &DyadicCube {
        &self.cubes[id]
    }

    /// Exact `dist(Q_t, boundary)`.
    pub fn dist(&self, id: usize) -> f64 {
        self.dist[id]
    }

    pub fn bbox(&self, id: usize) -> Aabb {
        self.cubes[id].bbox(&self.frame)
    }

    pub fn side(&self, id: usize) -> f64 {
        self.cubes[id].side(&self.frame)
    }

    /// Expanded cube `U_t` with the default factor 17/16.
    pub fn expanded(&self, id: usize) -> Aabb {
        self.bbox(id).scaled(EXPANSION)
    }

    /// Width of the boundary collar not guaranteed to be covered.
    pub fn collar_width(&self) -> f64 {
        8.0 * (DIM as f64).sqrt() * self.frame.side * 0.5f64.powi(self.max_level as i32)
    }

    /// Neighbor list of `t`; `face_only` keeps cubes sharing a full
    /// (n-1)-dimensional face portion.
    pub fn neighbors(&self, t: usize, face_only: bool) -> Result<&[usize]> {
        if t >= self.cubes.len() {
            return Err(Error::IdOutOfRange {
                id: t,
                len: self.cubes.len(),
            });
        }
        Ok(if face_only {
            &self.face_neighbors[t]
        } else {
            &self.neighbors[t]
        })
    }

    pub fn face_neighbor_lists(&self) -> &[Vec<usize>] {
        &self.face_neighbors
    }

    /// Id of the cube whose closed box contains `x` (lowest id on ties).
    pub fn locate(&self, x: Point) -> Option<usize> {
        (0..self.cubes.len()).find(|&i| self.bbox(i).contains_closed(x))
    }

    /// Total area of accepted cubes.
    pub fn covered_area(&self) -> f64 {
        crate::numeric::sum((0..self.len()).map(|i| self.bbox(i).area()))
    }

    /// Maximum number of expanded cubes containing any of `points`.
    pub fn expanded_overlap_max(&self, points: &[Point]) -> usize {
        let boxes: Vec<Aabb> = (0..self.len()).map(|i| self.expanded(i)).collect();
        points
            .iter()
            .map(|p| boxes.iter().filter(|b| b.contains_closed(*p)).count())
            .max()
            .unwrap_or(0)
    }

    /// Checks the sandwich `diam <= dist <= 4 diam` (upper bound with
    /// `1e-12` slack), dyadic neighbor ratios, and the expanded-cube overlap
    /// at lattice points spaced half the finest side.
    pub fn verify(&self) -> WhitneyCheck {
        let mut lower = 0;
        let mut upper = 0;
        let mut max_ratio: f64 = 0.0;
        for i in 0..self.len() {
            let diam = self.cube(i).diam(&self.frame);
            let d = self.dist[i];
            lower += usize::from(diam > d);
            upper += usize::from(d > 4.0 * diam + 1e-12);
            max_ratio = max_ratio.max(d / diam);
        }
        let allowed = [0.25, 0.5, 1.0, 2.0, 4.0];
        let bad_neighbors = (0..self.len())
            .flat_map(|t| self.neighbors[t].iter().map(move |&s| (t, s)))
            .filter(|&(t, s)| !allowed.contains(&(self.side(s) / self.side(t))))
            .count();
        let finest = (0..self.len()).map(|i| self.side(i)).fold(f64::INFINITY, f64::min);
        let step = 0.5 * finest;
        let bb = self.domain.bounding_box();
        let nx = ((bb.max.x - bb.min.x) / step).ceil() as usize + 1;
        let ny = ((bb.max.y - bb.min.y) / step).ceil() as usize + 1;
        let mut count = vec![0u32; nx * ny];
        for i in 0..self.len() {
            let u = self.expanded(i);
            let lo = |a: f64, o: f64| (((a - o) / step).ceil().max(0.0)) as usize;
            let hi = |a: f64, o: f64, n: usize| ((((a - o) / step).floor()) as isize).min(n as isize - 1);
            let (i0, j0) = (lo(u.min.x, bb.min.x), lo(u.min.y, bb.min.y));
            let (i1, j1) = (hi(u.max.x, bb.min.x, nx), hi(u.max.y, bb.min.y, ny));
            for j in j0 as isize..=j1 {
                for k in i0 as isize..=i1 {
                    count[j as usize * nx + k as usize] += 1;
                }
            }
        }
        WhitneyCheck {
            cubes: self.len(),
            sandwich_lower_violations: lower,
            sandwich_upper_violations: upper,
            max_dist_over_diam: max_ratio,
            bad_neighbor_ratios: bad_neighbors,
            max_overlap: count.iter().copied().max().unwrap_or(0) as usize,
            overlap_samples: nx * ny,
        }
    }

    pub fn dump(&self) -> WhitneyDump {
        WhitneyDump {
            frame: self.frame,
            max_level: self.max_level,
            cubes: self
                .cubes
                .iter()
                .enumerate()
                .map(|(id, c)| CubeRecord {
                    id,
                    level: c.level,
                    index: c.index,
                    dist: self.dist[id],
                })
                .collect(),
            neighbors: self.neighbors.clone(),
            face_neighbors: self.face_neighbors.clone(),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.dump())?)?;
        Ok(())
    }
}

/// Outcome of [`WhitneyDecomposition::verify`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCheck {
    pub cubes: usize,
    pub sandwich_lower_violations: usize,
    pub sandwich_upper_violations: usize,
    pub max_dist_over_diam: f64,
    pub bad_neighbor_ratios: usize,
    pub max_overlap: usize,
    pub overlap_samples: usize,
}

/// Overlap bound `12^n` for expanded cubes.
pub const OVERLAP_BOUND: usize = 144;

impl WhitneyCheck {
    pub fn passes(&self) -> bool {
        self.sandwich_lower_violations == 0
            && self.sandwich_upper_violations == 0
            && self.bad_neighbor_ratios == 0
            && self.max_overlap <= OVERLAP_BOUND
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub id: usize,
    pub level: u32,
    pub index: [i64; 2],
    pub dist: f64,
}

/// JSON dump of a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyDump {
    pub frame: Frame,
    pub max_level: u32,
    pub cubes: Vec<CubeRecord>,
    pub neighbors: Vec<Vec<usize>>,
    pub face_neighbors: Vec<Vec<usize>>,
}

fn neighbor_lists(cubes: &[DyadicCube], fine: u32) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n_side = 1i64 << fine;
    let mut owner = vec![u32::MAX; (n_side * n_side) as usize];
    for (id, c) in cubes.iter().enumerate() {
        let e = c.fine_extent(fine);
        for x in e[0][0]..e[0][1] {
            for y in e[1][0]..e[1][1] {
                owner[(x * n_side + y) as usize] = id as u32;
            }
        }
    }
    let mut all = vec![Vec::new(); cubes.len()];
    let mut face = vec![Vec::new(); cubes.len()];
    for (id, c) in cubes.iter().enumerate() {
        let e = c.fine_extent(fine);
        let mut found = BTreeSet::new();
        let mut probe = |x: i64, y: i64| {
            if (0..n_side).contains(&x) && (0..n_side).contains(&y) {
                let o = owner[(x * n_side + y) as usize];
                if o != u32::MAX && o as usize != id {
                    found.insert(o as usize);
                }
            }
        };
        for x in (e[0][0] - 1)..=e[0][1] {
            probe(x, e[1][0] - 1);
            probe(x, e[1][1]);
        }
        for y in e[1][0]..e[1][1] {
            probe(e[0][0] - 1, y);
            probe(e[0][1], y);
        }
        for o in found {
            match intersection_dim(c, &cubes[o], fine) {
                Some(d) if d == DIM - 1 => {
                    all[id].push(o);
                    face[id].push(o);
                }
                Some(_) => all[id].push(o),
                None => {}
            }
        }
    }
    (all, face)
}
