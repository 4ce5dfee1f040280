//! Planar polygonal domains and exact distance/containment predicates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points within this distance of an edge are treated as boundary points.
pub const BOUNDARY_EPS: f64 = 1e-12;

/// Dimension of the ambient space.
pub const DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    #[inline]
    pub fn dist2(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

#[inline]
fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a.x * b.x + a.y * b.y
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (dot(p - a, ab) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * ab.x, a.y + t * ab.y))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(b - a, c - a)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Whether closed segments `[a, b]` and `[c, d]` share a point.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Exact distance between two closed segments.
pub fn segment_segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Axis-aligned box `[min.x, max.x] x [min.y, max.y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn from_center(center: Point, half_widths: [f64; 2]) -> Self {
        Self {
            min: Point::new(center.x - half_widths[0], center.y - half_widths[1]),
            max: Point::new(center.x + half_widths[0], center.y + half_widths[1]),
        }
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn half_widths(&self) -> [f64; 2] {
        [0.5 * (self.max.x - self.min.x), 0.5 * (self.max.y - self.min.y)]
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x).max(0.0) * (self.max.y - self.min.y).max(0.0)
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ]
    }

    pub fn contains_closed(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        other.min.x >= self.min.x
            && other.max.x <= self.max.x
            && other.min.y >= self.min.y
            && other.max.y <= self.max.y
    }

    /// Area of the intersection (zero for boxes that only touch).
    pub fn intersection_area(&self, other: &Aabb) -> f64 {
        let w = self.max.x.min(other.max.x) - self.min.x.max(other.min.x);
        let h = self.max.y.min(other.max.y) - self.min.y.max(other.min.y);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// Whether the open interiors intersect.
    pub fn interiors_overlap(&self, other: &Aabb) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Concentric box scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Aabb {
        let [hx, hy] = self.half_widths();
        Aabb::from_center(self.center(), [factor * hx, factor * hy])
    }

    /// Distance from the closed box to the closed segment `[a, b]`.
    pub fn segment_distance(&self, a: Point, b: Point) -> f64 {
        if self.contains_closed(a) || self.contains_closed(b) {
            return 0.0;
        }
        let c = self.corners();
        (0..4)
            .map(|k| segment_segment_distance(a, b, c[k], c[(k + 1) % 4]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Built-in test domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    UnitSquare,
    LShape,
    SlitSquare,
    KochPrefractal,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::UnitSquare,
        Preset::LShape,
        Preset::SlitSquare,
        Preset::KochPrefractal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::UnitSquare => "unit_square",
            Preset::LShape => "l_shape",
            Preset::SlitSquare => "slit_square",
            Preset::KochPrefractal => "koch_prefractal",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_square" | "square" => Ok(Preset::UnitSquare),
            "l_shape" | "lshape" => Ok(Preset::LShape),
            "slit_square" | "slit" => Ok(Preset::SlitSquare),
            "koch_prefractal" | "koch" => Ok(Preset::KochPrefractal),
            other => Err(Error::Parameter(format!("unknown domain preset `{other}`"))),
        }
    }
}

/// Parameters for [`make_domain`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    pub side: f64,
    /// Koch generation.
    pub level: u32,
    /// Slit notch aperture as a fraction of `side`.
    pub aperture: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self {
            side: 1.0,
            level: 0,
            aperture: 1e-3,
        }
    }
}

/// A simple, counter-clockwise polygon. The domain is its open interior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRecord", into = "DomainRecord")]
pub struct PolygonalDomain {
    name: String,
    vertices: Vec<Point>,
    #[serde(skip)]
    center: Option<Point>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DomainRecord {
    name: String,
    vertices: Vec<Point>,
}

impl TryFrom<DomainRecord> for PolygonalDomain {
    type Error = Error;
    fn try_from(r: DomainRecord) -> Result<Self> {
        PolygonalDomain::new(r.name, r.vertices)
    }
}

impl From<PolygonalDomain> for DomainRecord {
    fn from(d: PolygonalDomain) -> Self {
        DomainRecord {
            name: d.name,
            vertices: d.vertices,
        }
    }
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    0.5 * crate::numeric::sum((0..n).map(|i| cross(v[i], v[(i + 1) % n])))
}

impl PolygonalDomain {
    /// Validates and builds a domain. Clockwise input is rejected.
    pub fn new(name: impl Into<String>, vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidPolygon(format!("{n} vertices, need >= 3")));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidPolygon(format!("non-finite vertex {p:?}")));
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(Error::InvalidPolygon(
                "signed area must be positive (counter-clockwise order)".into(),
            ));
        }
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if a == b {
                return Err(Error::InvalidPolygon(format!("degenerate edge {i}")));
            }
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(Error::InvalidPolygon(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            vertices,
            center: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn num_edges(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        crate::numeric::sum(self.edges().map(|(a, b)| a.dist(b)))
    }

    pub fn bounding_box(&self) -> Aabb {
        let mut bb = Aabb::new(self.vertices[0], self.vertices[0]);
        for p in &self.vertices {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        bb
    }

    /// Area centroid of the polygon.
    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let n = v.len();
        let a = self.area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let (p, q) = (v[i], v[(i + 1) % n]);
            let c = cross(p, q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    /// Reference interior point used as the John center / tree root.
    /// Presets pick a point well inside; otherwise the centroid.
    pub fn center(&self) -> Point {
        self.center.unwrap_or_else(|| self.centroid())
    }

    pub fn with_center(mut self, center: Point) -> Self {
        self.center = Some(center);
        self
    }

    /// Exact Euclidean distance from `x` to the polygon boundary.
    pub fn distance_to_boundary(&self, x: Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(x, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Open-set membership: boundary points (within [`BOUNDARY_EPS`]) are outside.
    pub fn contains(&self, x: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if point_segment_distance(x, a, b) <= BOUNDARY_EPS {
                return false;
            }
            if (a.y > x.y) != (b.y > x.y) {
                let t = (x.y - a.y) / (b.y - a.y);
                if x.x < a.x + t * (b.x - a.x) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Exact distance from the closed box to the boundary polygon.
    pub fn box_distance_to_boundary(&self, b: &Aabb) -> f64 {
        self.edges()
            .map(|(p, q)| b.segment_distance(p, q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether the closed box lies in the open domain.
    pub fn contains_box(&self, b: &Aabb) -> bool {
        self.contains(b.center()) && self.box_distance_to_boundary(b) > 0.0
    }

    /// `count` points equispaced in arc length, starting at vertex 0.
    pub fn sample_boundary(&self, count: usize) -> Vec<Point> {
        if count == 0 {
            return Vec::new();
        }
        let lengths: Vec<f64> = self.edges().map(|(a, b)| a.dist(b)).collect();
        let perimeter = crate::numeric::sum(lengths.iter().copied());
        let spacing = perimeter / count as f64;
        let mut out = Vec::with_capacity(count);
        let mut edge = 0;
        let mut edge_start = 0.0;
        for k in 0..count {
            let s = k as f64 * spacing;
            while edge + 1 < lengths.len() && edge_start + lengths[edge] <= s + 1e-12 * perimeter {
                edge_start += lengths[edge];
                edge += 1;
            }
            let (a, b) = (self.vertices[edge], self.vertices[(edge + 1) % self.vertices.len()]);
            let t = ((s - edge_start) / lengths[edge]).clamp(0.0, 1.0);
            let t = if t < 1e-12 { 0.0 } else { t };
            out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
        out
    }

    /// Same domain with every coordinate multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let d = PolygonalDomain::new(
            self.name.clone(),
            self.vertices.iter().map(|p| p.scale(s)).collect(),
        )?;
        Ok(match self.center {
            Some(c) => d.with_center(c.scale(s)),
            None => d,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn koch_vertices(side: f64, level: u32) -> Vec<Point> {
    let h = side * 3f64.sqrt() / 2.0;
    let mut verts = vec![
        Point::new(0.0, 0.0),
        Point::new(side, 0.0),
        Point::new(0.5 * side, h),
    ];
    let (c60, s60) = (0.5, 3f64.sqrt() / 2.0);
    for _ in 0..level {
        let n = verts.len();
        let mut next = Vec::with_capacity(4 * n);
        for i in 0..n {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            let d = (b - a).scale(1.0 / 3.0);
            let p1 = a + d;
            let p3 = a + d.scale(2.0);
            // Rotate by -60 degrees so the bump points away from the CCW interior.
            let bump = Point::new(c60 * d.x + s60 * d.y, -s60 * d.x + c60 * d.y);
            next.extend([a, p1, p1 + bump, p3]);
        }
        verts = next;
    }
    verts
}

/// Builds one of the preset domains.
pub fn make_domain(preset: Preset, params: PresetParams) -> Result<PolygonalDomain> {
    let s = params.side;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Parameter(format!("side must be positive, got {s}")));
    }
    let p = |x: f64, y: f64| Point::new(s * x, s * y);
    let dom = match preset {
        Preset::UnitSquare => PolygonalDomain::new(
            "unit_square",
            vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)],
        )?
        .with_center(p(0.5, 0.5)),
        Preset::LShape => PolygonalDomain::new(
            "l_shape",
            vec![
                p(0.0, 0.0),
                p(1.0, 0.0),
                p(1.0, 0.5),
                p(0.5, 0.5),
                p(0.5, 1.0),
                p(0.0, 1.0),
            ],
        )?
        .with_center(p(0.25, 0.25)),
        Preset::SlitSquare => {
            let a = params.aperture;
            if !(a > 0.0 && a < 0.5) {
                return Err(Error::Parameter(format!("aperture must lie in (0, 0.5), got {a}")));
            }
            PolygonalDomain::new(
                "slit_square",
                vec![
                    p(0.0, 0.0),
                    p(1.0, 0.0),
                    p(1.0, 0.5 - 0.5 * a),
                    p(0.5, 0.5),
                    p(1.0, 0.5 + 0.5 * a),
                    p(1.0, 1.0),
                    p(0.0, 1.0),
                ],
            )?
            .with_center(p(0.25, 0.5))
        }
        Preset::KochPrefractal => {
            if params.level > 8 {
                return Err(Error::Parameter(format!(
                    "koch level {} too large (max 8)",
                    params.level
                )));
            }
            let d = PolygonalDomain::new("koch_prefractal", koch_vertices(s, params.level))?;
            let c = d.centroid();
            d.with_center(c)
        }
    };
    Ok(dom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> PolygonalDomain {
        make_domain(Preset::UnitSquare, PresetParams::default()).unwrap()
    }

    fn koch(level: u32) -> PolygonalDomain {
        make_domain(
            Preset::KochPrefractal,
            PresetParams {
                level,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn unit_square_vertices() {
        let d = square();
        let v: Vec<[f64; 2]> = d.vertices().iter().map(|&p| p.into()).collect();
        assert_eq!(v, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn koch_edge_counts() {
        assert_eq!(koch(0).num_edges(), 3);
        assert_eq!(koch(2).num_edges(), 48);
        assert_eq!(koch(4).num_edges(), 3 * 4usize.pow(4));
    }

    #[test]
    fn koch_perimeter_law() {
        for g in 0..5 {
            let d = koch(g);
            let expect = 3.0 * (4.0f64 / 3.0).powi(g as i32);
            assert!((d.perimeter() - expect).abs() < 1e-9 * expect, "level {g}");
        }
    }

    #[test]
    fn square_distances() {
        let d = square();
        assert_eq!(d.distance_to_boundary(Point::new(0.5, 0.5)), 0.5);
        assert_eq!(d.distance_to_boundary(Point::new(0.25, 0.5)), 0.25);
        assert_eq!(d.distance_to_boundary(Point::new(1.0, 0.3)), 0.0);
    }

    #[test]
    fn koch_centroid_distance_matches_edge_scan() {
        let d = koch(2);
        let c = d.centroid();
        let v = d.vertices();
        let mut best = f64::INFINITY;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            // Independent projection formula.
            let (ex, ey) = (b.x - a.x, b.y - a.y);
            let t = (((c.x - a.x) * ex + (c.y - a.y) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            let (px, py) = (a.x + t * ex, a.y + t * ey);
            best = best.min(((c.x - px).powi(2) + (c.y - py).powi(2)).sqrt());
        }
        assert!((d.distance_to_boundary(c) - best).abs() < 1e-12);
    }

    #[test]
    fn containment() {
        let d = square();
        assert!(d.contains(Point::new(0.5, 0.5)));
        assert!(!d.contains(Point::new(1.5, 0.5)));
        assert!(!d.contains(Point::new(1.0, 0.5)));
        assert!(!d.contains(Point::new(0.0, 0.0)));
    }

    #[test]
    fn slit_notch_is_excluded() {
        let d = make_domain(Preset::SlitSquare, PresetParams::default()).unwrap();
        assert!(!d.contains(Point::new(0.75, 0.5)));
        assert!(d.contains(Point::new(0.75, 0.49)));
        assert!(d.contains(d.center()));
    }

    #[test]
    fn boundary_samples_square() {
        let d = square();
        let s4 = d.sample_boundary(4);
        let v: Vec<[f64; 2]> = s4.iter().map(|&p| p.into()).collect();
        assert_eq!(v, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        let s8: Vec<[f64; 2]> = d.sample_boundary(8).iter().map(|&p| p.into()).collect();
        assert_eq!(
            s8,
            vec![
                [0.0, 0.0],
                [0.5, 0.0],
                [1.0, 0.0],
                [1.0, 0.5],
                [1.0, 1.0],
                [0.5, 1.0],
                [0.0, 1.0],
                [0.0, 0.5]
            ]
        );
    }

    #[test]
    fn boundary_samples_koch_one_per_edge() {
        let d = koch(1);
        let pts = d.sample_boundary(12);
        // Cumulative arc-length table: every edge has length 1/3.
        let mut cum = vec![0.0];
        for (a, b) in d.edges() {
            cum.push(cum.last().unwrap() + a.dist(b));
        }
        for (k, p) in pts.iter().enumerate() {
            assert!((cum[k] - k as f64 / 3.0).abs() < 1e-12);
            assert!(p.dist(d.vertices()[k]) < 1e-12, "sample {k}");
        }
    }

    #[test]
    fn rejects_bad_polygons() {
        let bowtie = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(PolygonalDomain::new("bowtie", bowtie).is_err());
        let cw = vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)];
        assert!(PolygonalDomain::new("cw", cw).is_err());
        assert!(make_domain(
            Preset::UnitSquare,
            PresetParams {
                side: -1.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = make_domain(Preset::LShape, PresetParams::default()).unwrap();
        let s = d.to_json().unwrap();
        assert!(s.contains("\"vertices\""));
        let back = PolygonalDomain::from_json(&s).unwrap();
        assert_eq!(back.vertices(), d.vertices());
        assert_eq!(back.name(), "l_shape");
    }

    #[test]
    fn box_containment() {
        let d = square();
        let inner = Aabb::new(Point::new(0.25, 0.25), Point::new(0.5, 0.5));
        assert!(d.contains_box(&inner));
        let touching = Aabb::new(Point::new(0.5, 0.5), Point::new(1.0, 1.0));
        assert!(!d.contains_box(&touching));
        assert!((d.box_distance_to_boundary(&inner) - 0.25).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distance_is_one_lipschitz(ax in -0.2f64..1.4, ay in -0.2f64..1.4,
                                         bx in -0.2f64..1.4, by in -0.2f64..1.4) {
                let d = koch(2);
                let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
                let diff = (d.distance_to_boundary(a) - d.distance_to_boundary(b)).abs();
                prop_assert!(diff <= a.dist(b) + 1e-9);
            }

            #[test]
            fn inside_implies_positive_distance(x in -0.2f64..1.2, y in -0.2f64..1.2) {
                let d = make_domain(Preset::SlitSquare, PresetParams::default()).unwrap();
                let p = Point::new(x, y);
                if d.contains(p) {
                    prop_assert!(d.distance_to_boundary(p) > 0.0);
                }
            }
        }
    }
}
