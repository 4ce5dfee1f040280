//! Covering numbers and box/Assouad dimension estimates for boundaries and
//! finite point sets.
//!
//! Covering uses closed balls of radius `r`. The greedy cover walks the
//! points in their stored order (arc length for boundaries, increasing `x`
//! for calibration sets); at each uncovered point `p` it places the ball,
//! among those centered at midpoints of `p` and points within `2r`, that
//! captures the most uncovered points. A maximal `2r`-separated subset gives the matching
//! lower bound, since no closed `r`-ball holds two of its points.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PolygonalDomain};
use crate::numeric::{fit_line, percentile, LineFit};

/// Finite sample of the set whose dimension is estimated.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverTarget {
    points: Vec<Point>,
    /// Arc-length spacing when the target samples a curve.
    spacing: Option<f64>,
    label: String,
}

impl CoverTarget {
    pub fn from_points(label: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter("cover target is empty".into()));
        }
        Ok(Self {
            points,
            spacing: None,
            label: label.into(),
        })
    }

    /// Boundary of `dom` sampled with arc-length spacing at most `spacing`.
    pub fn boundary(dom: &PolygonalDomain, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::Parameter(format!("spacing must be positive, got {spacing}")));
        }
        let count = (dom.perimeter() / spacing).ceil() as usize;
        let points = dom.sample_boundary(count.max(1));
        Ok(Self {
            points,
            spacing: Some(dom.perimeter() / count.max(1) as f64),
            label: format!("boundary({})", dom.name()),
        })
    }

    /// `{0} ∪ {1/k : 1 <= k <= kmax}` on the x-axis, in increasing order.
    pub fn harmonic(kmax: usize) -> Self {
        let mut points = vec![Point::new(0.0, 0.0)];
        points.extend((1..=kmax).rev().map(|k| Point::new(1.0 / k as f64, 0.0)));
        Self {
            points,
            spacing: None,
            label: format!("harmonic({kmax})"),
        }
    }

    /// Unit segment `[0, 1] x {0}` sampled with `n + 1` equispaced points.
    pub fn segment(n: usize) -> Self {
        let n = n.max(1);
        Self {
            points: (0..=n).map(|i| Point::new(i as f64 / n as f64, 0.0)).collect(),
            spacing: Some(1.0 / n as f64),
            label: "segment".into(),
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| p.scale(s)).collect(),
            spacing: self.spacing.map(|h| h * s),
            label: self.label.clone(),
        }
    }

    fn check_resolution(&self, r_min: f64) -> Result<()> {
        match self.spacing {
            Some(h) if h > r_min / 4.0 * (1.0 + 1e-9) => Err(Error::Parameter(format!(
                "sample spacing {h:e} exceeds r_min/4 = {:e}",
                r_min / 4.0
            ))),
            _ => Ok(()),
        }
    }
}

/// Upper (greedy cover) and lower (separated set) bounds on `N_r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverCount {
    pub greedy: usize,
    pub packing: usize,
}

struct HashGrid {
    cell: f64,
    bins: HashMap<(i64, i64), Vec<usize>>,
}

impl HashGrid {
    fn new(points: &[Point], idx: &[usize], cell: f64) -> Self {
        let mut bins: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for &i in idx {
            bins.entry(Self::key(points[i], cell)).or_default().push(i);
        }
        Self { cell, bins }
    }

    fn key(p: Point, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Indices within closed distance `r` of `p`.
    fn within(&self, points: &[Point], p: Point, r: f64, out: &mut Vec<usize>) {
        out.clear();
        let (kx, ky) = Self::key(p, self.cell);
        // Relative slack keeps exact ties stable under rescaling.
        let r = r * (1.0 + 1e-9);
        let reach = (r / self.cell).ceil() as i64;
        let r2 = r * r;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(b) = self.bins.get(&(kx + dx, ky + dy)) {
                    out.extend(b.iter().copied().filter(|&j| points[j].dist2(p) <= r2));
                }
            }
        }
    }
}

/// Angular sectors scanned for candidate centers per greedy step.
const SECTORS: usize = 16;

/// Number of cyclic starting offsets tried by the greedy cover.
const GREEDY_STARTS: usize = 8;

fn greedy_cover(points: &[Point], idx: &[usize], r: f64) -> usize {
    if idx.is_empty() {
        return 0;
    }
    let grid = HashGrid::new(points, idx, r);
    let starts = GREEDY_STARTS.min(idx.len());
    (0..starts)
        .map(|k| greedy_pass(points, idx, &grid, r, k * idx.len() / starts))
        .min()
        .unwrap_or(0)
}

fn greedy_pass(points: &[Point], idx: &[usize], grid: &HashGrid, r: f64, start: usize) -> usize {
    let mut covered = vec![false; points.len()];
    let mut partners = Vec::new();
    let mut near = Vec::new();
    let mut centers = Vec::new();
    for &i in idx[start..].iter().chain(&idx[..start]) {
        if covered[i] {
            continue;
        }
        // Candidate centers: midpoints of p with the farthest point within 2r
        // in each angular sector, so each candidate ball still contains p.
        let p = points[i];
        grid.within(points, p, 2.0 * r, &mut partners);
        let mut far = [(0.0f64, usize::MAX); SECTORS];
        for &q in &partners {
            let d = points[q] - p;
            let d2 = d.x * d.x + d.y * d.y;
            if d2 == 0.0 {
                continue;
            }
            let a = d.y.atan2(d.x) + std::f64::consts::PI;
            let k = ((a / std::f64::consts::TAU * SECTORS as f64) as usize).min(SECTORS - 1);
            if d2 > far[k].0 || (d2 == far[k].0 && q < far[k].1) {
                far[k] = (d2, q);
            }
        }
        let candidates: Vec<Point> = far
            .iter()
            .filter(|f| f.1 != usize::MAX)
            .map(|f| Point::new(0.5 * (p.x + points[f.1].x), 0.5 * (p.y + points[f.1].y)))
            .collect();
        let mut best = p;
        let mut best_gain = 0;
        for c in std::iter::once(p).chain(candidates) {
            grid.within(points, c, r, &mut near);
            let gain = near.iter().filter(|&&j| !covered[j]).count();
            if gain > best_gain {
                best_gain = gain;
                best = c;
            }
        }
        grid.within(points, best, r, &mut near);
        covered[i] = true;
        for &j in &near {
            covered[j] = true;
        }
        centers.push(best);
    }
    prune_redundant(points, grid, r, &centers)
}

/// Drops balls whose points are all covered by the remaining balls.
fn prune_redundant(points: &[Point], grid: &HashGrid, r: f64, centers: &[Point]) -> usize {
    let mut multiplicity = vec![0u32; points.len()];
    let mut near = Vec::new();
    let members: Vec<Vec<usize>> = centers
        .iter()
        .map(|&c| {
            grid.within(points, c, r, &mut near);
            near.clone()
        })
        .collect();
    for m in &members {
        for &j in m {
            multiplicity[j] += 1;
        }
    }
    let mut count = centers.len();
    for m in &members {
        if m.iter().all(|&j| multiplicity[j] >= 2) {
            for &j in m {
                multiplicity[j] -= 1;
            }
            count -= 1;
        }
    }
    count
}

fn separated_count(points: &[Point], idx: &[usize], sep: f64) -> usize {
    // Same relative slack as the cover so the two bounds stay ordered.
    let sep = sep * (1.0 + 1e-9);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let s2 = sep * sep;
    let mut count = 0;
    for &i in idx {
        let p = points[i];
        let (kx, ky) = HashGrid::key(p, sep);
        let clash = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                grid.get(&(kx + dx, ky + dy))
                    .is_some_and(|b| b.iter().any(|&j| points[j].dist2(p) <= s2))
            })
        });
        if !clash {
            grid.entry((kx, ky)).or_default().push(i);
            count += 1;
        }
    }
    count
}

/// Bounds on the number of closed `r`-balls needed to cover the target,
/// optionally restricted to the ball `B_R(x)`.
pub fn covering_number(target: &CoverTarget, r: f64, region: Option<(Point, f64)>) -> Result<CoverCount> {
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("radius must be positive, got {r}")));
    }
    let pts = target.points();
    let idx: Vec<usize> = match region {
        None => (0..pts.len()).collect(),
        Some((x, big_r)) => {
            if !(big_r > r) {
                return Err(Error::Parameter(format!("region radius {big_r} must exceed r = {r}")));
            }
            let r2 = big_r * big_r;
            (0..pts.len()).filter(|&i| pts[i].dist2(x) <= r2).collect()
        }
    };
    Ok(CoverCount {
        greedy: greedy_cover(pts, &idx, r),
        packing: separated_count(pts, &idx, 2.0 * r),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionKind {
    Box,
    Assouad,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalePair {
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: Option<f64>,
}

/// One covering measurement behind an Assouad estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverRow {
    pub center_x: f64,
    pub center_y: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub r: f64,
    pub n_r: usize,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub kind: DimensionKind,
    pub target: String,
    pub value: f64,
    pub fit: LineFit,
    pub scales: Vec<ScalePair>,
    /// Per-(center, R) regression slopes, sorted (Assouad only).
    pub slopes: Vec<f64>,
    #[serde(skip)]
    pub rows: Vec<CoverRow>,
    pub note: String,
}

const PREFRACTAL_NOTE: &str = "polygonal targets have dimension 1 below their feature size; \
     estimates reflect the scale window used";

/// Least-squares slope of `log N_r` against `-log r` over a geometric grid.
pub fn box_dimension(
    target: &CoverTarget,
    r_min: f64,
    r_max: f64,
    num_scales: usize,
) -> Result<DimensionEstimate> {
    if !(r_min > 0.0 && r_min < r_max) {
        return Err(Error::Parameter(format!("need 0 < r_min < r_max, got {r_min}, {r_max}")));
    }
    if num_scales < 4 {
        return Err(Error::Parameter(format!("num_scales must be >= 4, got {num_scales}")));
    }
    target.check_resolution(r_min)?;
    let radii = crate::numeric::geometric_grid(r_min, r_max, num_scales);
    let counts: Vec<usize> = radii
        .par_iter()
        .map(|&r| covering_number(target, r, None).map(|c| c.greedy))
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(&r, &n)| (-r.ln(), (n as f64).ln()))
        .unzip();
    if xs.len() < 4 {
        return Err(Error::DegenerateFit(format!("only {} usable scales", xs.len())));
    }
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::DegenerateFit("zero spread".into()))?;
    Ok(DimensionEstimate {
        kind: DimensionKind::Box,
        target: target.label().to_string(),
        value: fit.slope.max(0.0),
        fit,
        scales: radii.iter().map(|&r| ScalePair { r, big_r: None }).collect(),
        slopes: Vec::new(),
        rows: Vec::new(),
        note: PREFRACTAL_NOTE.into(),
    })
}

/// Percentile used to aggregate local slopes.
pub const ASSOUAD_PERCENTILE: f64 = 0.95;

/// Regression slope for one `(center, R)` pair and its cover rows.
type SlopeFit = (f64, Vec<CoverRow>);

/// Local covering growth: for sampled centers `x` and each `R`, the slope of
/// `log N_r(B_R(x) ∩ E)` against `log(R / r)` over the `r < R` in `r_grid`;
/// the estimate is the 95th percentile of all slopes.
pub fn assouad_dimension(
    target: &CoverTarget,
    r_grid: &[f64],
    big_r_grid: &[f64],
    centers: usize,
) -> Result<DimensionEstimate> {
    if r_grid.is_empty() || big_r_grid.is_empty() || centers == 0 {
        return Err(Error::DegenerateFit("empty scale grid or no centers".into()));
    }
    let r_min = r_grid.iter().copied().fold(f64::INFINITY, f64::min);
    if !(r_min > 0.0) {
        return Err(Error::Parameter("radii must be positive".into()));
    }
    target.check_resolution(r_min)?;
    let pts = target.points();
    let n = pts.len();
    let center_idx: Vec<usize> = if centers >= n {
        (0..n).collect()
    } else {
        (0..centers).map(|k| k * n / centers).collect()
    };
    let jobs: Vec<(usize, f64)> = center_idx
        .iter()
        .flat_map(|&c| big_r_grid.iter().map(move |&big_r| (c, big_r)))
        .collect();
    let per_job: Vec<Result<Option<SlopeFit>>> = jobs
        .par_iter()
        .map(|&(c, big_r)| {
            let x = pts[c];
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut rows = Vec::new();
            for &r in r_grid.iter().filter(|&&r| r < big_r) {
                let nr = covering_number(target, r, Some((x, big_r)))?.greedy;
                if nr > 0 {
                    xs.push((big_r / r).ln());
                    ys.push((nr as f64).ln());
                    rows.push(CoverRow {
                        center_x: x.x,
                        center_y: x.y,
                        big_r,
                        r,
                        n_r: nr,
                        slope: f64::NAN,
                    });
                }
            }
            if xs.len() < 3 {
                return Ok(None);
            }
            let slope = fit_line(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN);
            for row in &mut rows {
                row.slope = slope;
            }
            Ok(Some((slope, rows)))
        })
        .collect();
    let mut slopes = Vec::new();
    let mut rows = Vec::new();
    for j in per_job {
        if let Some((s, r)) = j? {
            if s.is_finite() {
                slopes.push(s);
            }
            rows.extend(r);
        }
    }
    if slopes.is_empty() {
        return Err(Error::DegenerateFit("no (center, R) pair had 3 usable radii".into()));
    }
    let value = percentile(&slopes, ASSOUAD_PERCENTILE).unwrap_or(0.0).max(0.0);
    let mean = crate::numeric::sum(slopes.iter().copied()) / slopes.len() as f64;
    slopes.sort_by(f64::total_cmp);
    let mut scales = Vec::new();
    for &big_r in big_r_grid {
        for &r in r_grid.iter().filter(|&&r| r < big_r) {
            scales.push(ScalePair { r, big_r: Some(big_r) });
        }
    }
    let lo = slopes[0];
    let hi = slopes[slopes.len() - 1];
    Ok(DimensionEstimate {
        kind: DimensionKind::Assouad,
        target: target.label().to_string(),
        value,
        fit: LineFit {
            slope: value,
            intercept: mean,
            r_squared: f64::NAN,
            max_residual: hi - lo,
        },
        scales,
        slopes,
        rows,
        note: PREFRACTAL_NOTE.into(),
    })
}

impl DimensionEstimate {
    /// Writes `center_x,center_y,R,r,N_r,slope` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["center_x", "center_y", "R", "r", "N_r", "slope"])?;
        for row in &self.rows {
            wr.write_record([
                row.center_x.to_string(),
                row.center_y.to_string(),
                row.big_r.to_string(),
                row.r.to_string(),
                row.n_r.to_string(),
                row.slope.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_domain, Preset, PresetParams};

    /// Minimal closed-ball cover of sorted reals with free centers.
    fn interval_cover(xs: &[f64], r: f64) -> usize {
        let mut count = 0;
        let mut reach = f64::NEG_INFINITY;
        for &x in xs {
            if x > reach {
                count += 1;
                reach = x + 2.0 * r;
            }
        }
        count
    }

    #[test]
    fn unit_segment_cover() {
        let t = CoverTarget::segment(1000);
        let c = covering_number(&t, 0.1, None).unwrap();
        let xs: Vec<f64> = t.points().iter().map(|p| p.x).collect();
        assert_eq!(interval_cover(&xs, 0.1), 5);
        assert!((5..=6).contains(&c.greedy), "greedy {}", c.greedy);
        assert!(c.packing <= c.greedy);
    }

    #[test]
    fn single_point_needs_one_ball() {
        let t = CoverTarget::from_points("pt", vec![Point::new(0.3, 0.7)]).unwrap();
        for r in [1e-6, 0.1, 10.0] {
            assert_eq!(covering_number(&t, r, None).unwrap(), CoverCount { greedy: 1, packing: 1 });
        }
    }

    #[test]
    fn harmonic_region_cover_brackets_exact() {
        let t = CoverTarget::harmonic(1000);
        let r = 1e-3;
        let c = covering_number(&t, r, Some((Point::new(0.0, 0.0), 0.1))).unwrap();
        let xs: Vec<f64> = t.points().iter().map(|p| p.x).filter(|&x| x <= 0.1).collect();
        let exact = interval_cover(&xs, r);
        assert!(c.packing <= exact && exact <= c.greedy, "{c:?} vs {exact}");
        assert!(c.greedy as f64 <= 1.1 * exact as f64, "{c:?} vs {exact}");
    }

    #[test]
    fn empty_region_gives_zero() {
        let t = CoverTarget::segment(10);
        let c = covering_number(&t, 0.1, Some((Point::new(5.0, 5.0), 1.0))).unwrap();
        assert_eq!(c.greedy, 0);
        assert!(covering_number(&t, 0.1, Some((Point::new(0.0, 0.0), 0.05))).is_err());
        assert!(covering_number(&t, 0.0, None).is_err());
    }

    #[test]
    fn cover_sandwich_on_square_boundary() {
        let dom = make_domain(Preset::UnitSquare, PresetParams::default()).unwrap();
        let t = CoverTarget::boundary(&dom, 1e-3).unwrap();
        for r in [0.01, 0.03, 0.1] {
            let c = covering_number(&t, r, None).unwrap();
            assert!(c.packing <= c.greedy && c.greedy <= 4 * c.packing, "{c:?}");
        }
    }

    #[test]
    fn square_boundary_box_dimension() {
        let dom = make_domain(Preset::UnitSquare, PresetParams::default()).unwrap();
        let t = CoverTarget::boundary(&dom, 2.5e-4).unwrap();
        let est = box_dimension(&t, 1e-3, 0.1, 8).unwrap();
        assert!((est.value - 1.0).abs() < 0.05, "{}", est.value);
    }

    fn koch4_target() -> CoverTarget {
        let dom = make_domain(
            Preset::KochPrefractal,
            PresetParams {
                level: 4,
                ..Default::default()
            },
        )
        .unwrap();
        CoverTarget::boundary(&dom, 3f64.powi(-4) / 16.0).unwrap()
    }

    #[test]
    fn koch_box_dimension_near_log4_over_log3() {
        let est = box_dimension(&koch4_target(), 3f64.powi(-4), 3f64.powi(-1), 13).unwrap();
        let target = 4f64.ln() / 3f64.ln();
        assert!((est.value - target).abs() < 0.05, "{}", est.value);
    }

    #[test]
    fn box_estimate_is_scale_invariant() {
        let t = koch4_target();
        let (lo, hi) = (3f64.powi(-4), 3f64.powi(-1));
        let a = box_dimension(&t, lo, hi, 13).unwrap().value;
        let b = box_dimension(&t.scaled(10.0), 10.0 * lo, 10.0 * hi, 13).unwrap().value;
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn harmonic_box_dimension() {
        let t = CoverTarget::harmonic(10_000);
        let est = box_dimension(&t, 1e-6, 1e-2, 9).unwrap();
        assert!((est.value - 0.5).abs() < 0.07, "{}", est.value);
    }

    #[test]
    fn resolution_and_fit_guards() {
        let dom = make_domain(Preset::UnitSquare, PresetParams::default()).unwrap();
        let coarse = CoverTarget::boundary(&dom, 0.1).unwrap();
        assert!(box_dimension(&coarse, 0.01, 0.1, 5).is_err());
        let t = CoverTarget::segment(1000);
        assert!(box_dimension(&t, 0.01, 0.1, 3).is_err());
        assert!(box_dimension(&t, 0.1, 0.01, 5).is_err());
    }
}
