//! Measured ratios for weighted Poincaré, fractional Poincaré, Korn and
//! Fefferman–Stein type inequalities on grid functions.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    gradient, weighted_integral, weighted_lp_norm, weighted_mean_zero, Grid, GridFunction, VectorFieldGrid,
};
use crate::geometry::{Aabb, Point};
use crate::numeric::CompensatedSum;

const DIM: f64 = 2.0;

/// Minimum Monte Carlo sample count for the fractional estimate.
pub const MIN_MC_SAMPLES: usize = 10_000;

/// Independent random streams; fixed so results do not depend on the thread count.
const MC_STREAMS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    ImprovedPoincare,
    FractionalPoincare,
    Korn,
    FeffermanStein,
    Divergence,
}

impl InequalityKind {
    pub fn name(self) -> &'static str {
        match self {
            InequalityKind::ImprovedPoincare => "improved_poincare",
            InequalityKind::FractionalPoincare => "fractional_poincare",
            InequalityKind::Korn => "korn",
            InequalityKind::FeffermanStein => "fefferman_stein",
            InequalityKind::Divergence => "divergence",
        }
    }
}

/// Why a ratio could not be formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFlag {
    /// Right-hand side vanishes.
    Degenerate,
    /// Symmetric gradient vanishes.
    RigidMotion,
    /// Maximal function vanishes for a nonzero input.
    ResolutionInsufficient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub inequality: InequalityKind,
    pub domain: String,
    pub p: f64,
    pub beta: f64,
    pub s: Option<f64>,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub h: f64,
    pub test_function: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; absent when flagged.
    pub ratio: Option<f64>,
    /// `ratio * tau^{n-s}` or `ratio / sigma^n`.
    pub normalized_ratio: Option<f64>,
    /// Standard error of the estimated `rhs`.
    pub std_error: Option<f64>,
    pub samples: Option<usize>,
    /// Masked cells dropped by the collar rule.
    pub excluded_cells: usize,
    pub flag: Option<ReportFlag>,
}

impl InequalityReport {
    fn new(inequality: InequalityKind, grid: &Grid, p: f64, beta: f64, lhs: f64, rhs: f64) -> Self {
        let ratio = (rhs > 0.0).then(|| lhs / rhs);
        Self {
            inequality,
            domain: grid.domain().name().to_string(),
            p,
            beta,
            s: None,
            tau: None,
            sigma: None,
            h: grid.h(),
            test_function: String::new(),
            lhs,
            rhs,
            ratio,
            normalized_ratio: None,
            std_error: None,
            samples: None,
            excluded_cells: 0,
            flag: ratio.is_none().then_some(ReportFlag::Degenerate),
        }
    }

    pub fn with_test_function(mut self, id: impl Into<String>) -> Self {
        self.test_function = id.into();
        self
    }
}

/// One JSON object per line.
pub fn write_json_lines<W: Write>(reports: &[InequalityReport], mut w: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    inequality: &'static str,
    domain: &'a str,
    test_function: &'a str,
    p: f64,
    beta: f64,
    s: Option<f64>,
    tau: Option<f64>,
    sigma: Option<f64>,
    h: f64,
    lhs: f64,
    rhs: f64,
    ratio: Option<f64>,
    normalized_ratio: Option<f64>,
    std_error: Option<f64>,
}

/// Summary table for plotting ratios against `h`, `beta`, `sigma` and `tau`.
pub fn write_csv<W: Write>(reports: &[InequalityReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(CsvRow {
            inequality: r.inequality.name(),
            domain: &r.domain,
            test_function: &r.test_function,
            p: r.p,
            beta: r.beta,
            s: r.s,
            tau: r.tau,
            sigma: r.sigma,
            h: r.h,
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
            normalized_ratio: r.normalized_ratio,
            std_error: r.std_error,
        })?;
    }
    out.flush()?;
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("p must be in [1, inf), got {p}")))
    }
}

/// `‖f - c‖_{L^p(d^{βp})} / ‖∇f‖_{L^p(d^{(β+1)p})}` with `c` the
/// `d^{βp}`-weighted mean of `f`.
pub fn improved_poincare_ratio(f: &GridFunction, p: f64, beta: f64) -> Result<InequalityReport> {
    check_p(p)?;
    let f = weighted_mean_zero(f, p, beta)?;
    let lhs = weighted_lp_norm(&f, p, beta * p)?;
    let grad = gradient(&f);
    let rhs = weighted_lp_norm(&grad.magnitude(), p, (beta + 1.0) * p)?;
    let mut r = InequalityReport::new(InequalityKind::ImprovedPoincare, f.grid(), p, beta, lhs.value, rhs.value);
    r.excluded_cells = lhs.excluded;
    Ok(r)
}

/// Bilinear interpolation of cell-centered values. Neighbors outside the
/// mask are dropped and the remaining weights renormalized.
pub fn interpolate(f: &GridFunction, x: Point) -> Option<f64> {
    let g = f.grid();
    let h = g.h();
    let [nx, ny] = g.dims();
    let o = g.origin();
    let fx = (x.x - o.x) / h - 0.5;
    let fy = (x.y - o.y) / h - 0.5;
    let i0 = fx.floor();
    let j0 = fy.floor();
    let (ax, ay) = (fx - i0, fy - j0);
    let mut num = 0.0;
    let mut den = 0.0;
    for (di, wx) in [(0, 1.0 - ax), (1, ax)] {
        for (dj, wy) in [(0, 1.0 - ay), (1, ay)] {
            let i = i0 as i64 + di;
            let j = j0 as i64 + dj;
            if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
                continue;
            }
            let c = g.index(i as usize, j as usize);
            let w = wx * wy;
            if f.mask()[c] && w > 0.0 {
                num += w * f.get(c);
                den += w;
            }
        }
    }
    if den > 0.0 {
        Some(num / den)
    } else {
        g.cell_of(x).filter(|&c| f.mask()[c]).map(|c| f.get(c))
    }
}

/// Parameters of the fractional estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionalParams {
    pub p: f64,
    pub beta: f64,
    pub s: f64,
    pub tau: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Monte Carlo estimate of
/// `∫_Ω ∫_{|x-y| < τ d(x)} |u(x)-u(y)|^p |x-y|^{-n-sp} δ(x,y)^{(β+s)p} dy dx`
/// with `δ = min(d(x), d(y))`. Returns `(estimate, standard error)`.
///
/// `x` is uniform on the masked cells, `y = x + r e^{iθ}` with `r` uniform on
/// `[0, τ d(x)]`, which cancels one power of `|x-y|` in the integrand.
/// `u` is evaluated by bilinear interpolation so the integrand stays finite.
pub fn fractional_seminorm(u: &GridFunction, fp: &FractionalParams) -> Result<(f64, f64)> {
    let FractionalParams { p, beta, s, tau, samples, seed } = *fp;
    check_p(p)?;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Parameter(format!("s must lie in (0, 1), got {s}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Parameter(format!("tau must lie in (0, 1), got {tau}")));
    }
    if samples < MIN_MC_SAMPLES {
        return Err(Error::Parameter(format!(
            "at least {MIN_MC_SAMPLES} Monte Carlo samples are required, got {samples}"
        )));
    }
    let grid = u.grid();
    let cells: Vec<usize> = (0..grid.len()).filter(|&c| u.mask()[c]).collect();
    if cells.is_empty() {
        return Err(Error::EmptyMask);
    }
    let dom = grid.domain();
    let volume = cells.len() as f64 * grid.cell_area();
    let weight_power = (beta + s) * p;
    let kernel_power = -DIM - s * p;
    let sample = |rng: &mut ChaCha8Rng| -> f64 {
        let c = cells[rng.gen_range(0..cells.len())];
        let b = grid.cell_box(c);
        let x = Point::new(rng.gen_range(b.min.x..b.max.x), rng.gen_range(b.min.y..b.max.y));
        if !dom.contains(x) {
            return 0.0;
        }
        let dx = dom.distance_to_boundary(x);
        let radius = tau * dx;
        let r = rng.gen_range(0.0..radius);
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        if r <= 0.0 {
            return 0.0;
        }
        let y = Point::new(x.x + r * theta.cos(), x.y + r * theta.sin());
        let (Some(ux), Some(uy)) = (interpolate(u, x), interpolate(u, y)) else {
            return 0.0;
        };
        let delta = dx.min(dom.distance_to_boundary(y));
        let integrand = (ux - uy).abs().powf(p) * r.powf(kernel_power) * delta.powf(weight_power);
        // density of y is 1 / (2π r radius)
        integrand * std::f64::consts::TAU * r * radius
    };
    let base = samples / MC_STREAMS;
    let extra = samples % MC_STREAMS;
    let partial: Vec<(CompensatedSum, CompensatedSum)> = (0..MC_STREAMS)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64);
            let n = base + usize::from(stream < extra);
            let mut sum = CompensatedSum::new();
            let mut sq = CompensatedSum::new();
            for _ in 0..n {
                let v = sample(&mut rng);
                sum.add(v);
                sq.add(v * v);
            }
            (sum, sq)
        })
        .collect();
    let mut sum = CompensatedSum::new();
    let mut sq = CompensatedSum::new();
    for (a, b) in partial {
        sum.add(a.value());
        sq.add(b.value());
    }
    let n = samples as f64;
    let mean = sum.value() / n;
    let var = (sq.value() / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((volume * mean, volume * (var / n).sqrt()))
}

/// `‖u - c‖_{L^p(d^{βp})}` against the p-th root of [`fractional_seminorm`].
/// The reported standard error is propagated through the root.
pub fn fractional_poincare_ratio(u: &GridFunction, fp: &FractionalParams) -> Result<InequalityReport> {
    let (integral, se) = fractional_seminorm(u, fp)?;
    let p = fp.p;
    let centered = weighted_mean_zero(u, p, fp.beta)?;
    let lhs = weighted_lp_norm(&centered, p, fp.beta * p)?;
    let rhs = integral.max(0.0).powf(1.0 / p);
    let mut r = InequalityReport::new(InequalityKind::FractionalPoincare, u.grid(), p, fp.beta, lhs.value, rhs);
    if lhs.value == 0.0 {
        r.ratio = Some(0.0);
        r.flag = None;
    }
    r.s = Some(fp.s);
    r.tau = Some(fp.tau);
    r.samples = Some(fp.samples);
    r.excluded_cells = lhs.excluded;
    r.std_error = Some(if integral > 0.0 { rhs * se / (p * integral) } else { 0.0 });
    r.normalized_ratio = r.ratio.map(|v| v * fp.tau.powf(DIM - fp.s));
    Ok(r)
}

/// Row-major `2 x 2` matrix.
pub type Matrix2 = [[f64; 2]; 2];

/// Cellwise difference Jacobian `J[i][j] = ∂_j u_i` with the mask where
/// every entry is defined.
pub fn jacobian(u: &VectorFieldGrid) -> Result<(Vec<Matrix2>, Vec<bool>)> {
    if u.dim() != 2 {
        return Err(Error::Parameter(format!("expected a planar vector field, got {} components", u.dim())));
    }
    let g0 = gradient(u.component(0));
    let g1 = gradient(u.component(1));
    let n = u.grid().len();
    let mask: Vec<bool> = (0..n).map(|c| g0.mask()[c] && g1.mask()[c]).collect();
    let jac = (0..n)
        .map(|c| {
            [
                [g0.component(0).get(c), g0.component(1).get(c)],
                [g1.component(0).get(c), g1.component(1).get(c)],
            ]
        })
        .collect();
    Ok((jac, mask))
}

fn frob(m: &[[f64; 2]; 2]) -> f64 {
    (m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]).sqrt()
}

fn sym(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let o = 0.5 * (m[0][1] + m[1][0]);
    [[m[0][0], o], [o, m[1][1]]]
}

fn skew(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let o = 0.5 * (m[0][1] - m[1][0]);
    [[0.0, o], [-o, 0.0]]
}

fn scalar_field(grid: &Arc<Grid>, values: Vec<f64>, mask: &[bool]) -> Result<GridFunction> {
    let keep = mask.to_vec();
    Ok(GridFunction::from_values(grid, values)?.restricted(&keep))
}

/// `u(x) - A x` with `A` the `d^{βp}`-weighted mean of the skew part of `Du`.
pub fn korn_normalize(u: &VectorFieldGrid, p: f64, beta: f64) -> Result<VectorFieldGrid> {
    let (jac, mask) = jacobian(u)?;
    let grid = u.grid();
    let skew_entry = scalar_field(grid, jac.iter().map(|m| skew(m)[0][1]).collect(), &mask)?;
    let ones = scalar_field(grid, vec![1.0; grid.len()], &mask)?;
    let total = weighted_integral(&ones, beta * p);
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let a = weighted_integral(&skew_entry, beta * p) / total;
    let shifted: Vec<GridFunction> = (0..2)
        .map(|k| {
            let comp = u.component(k);
            let values = (0..grid.len())
                .map(|c| {
                    let x = grid.center(c);
                    // A = [[0, a], [-a, 0]]
                    let ax = if k == 0 { a * x.y } else { -a * x.x };
                    comp.get(c) - ax
                })
                .collect();
            GridFunction::from_values(grid, values).map(|f| f.restricted(comp.mask()))
        })
        .collect::<Result<_>>()?;
    VectorFieldGrid::new(shifted)
}

/// Largest cellwise `| |Du|^2 - |ε|^2 - |η|^2 |` relative to `|Du|^2` (Frobenius).
pub fn frobenius_identity_residual(u: &VectorFieldGrid) -> Result<f64> {
    let (jac, mask) = jacobian(u)?;
    Ok(jac
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(j, _)| {
            let d2 = frob(j).powi(2);
            let e2 = frob(&sym(j)).powi(2);
            let w2 = frob(&skew(j)).powi(2);
            (d2 - e2 - w2).abs() / d2.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max))
}

/// `‖Dũ‖_{L^p(d^{βp})} / ‖ε(ũ)‖_{L^p(d^{βp})}` after [`korn_normalize`].
pub fn korn_ratio(u: &VectorFieldGrid, p: f64, beta: f64) -> Result<InequalityReport> {
    check_p(p)?;
    let (jac0, _) = jacobian(u)?;
    let scale = jac0.iter().map(frob).fold(0.0, f64::max);
    let un = korn_normalize(u, p, beta)?;
    let (jac, mask) = jacobian(&un)?;
    let grid = un.grid();
    let du = scalar_field(grid, jac.iter().map(frob).collect(), &mask)?;
    let eps = scalar_field(grid, jac.iter().map(|m| frob(&sym(m))).collect(), &mask)?;
    let lhs = weighted_lp_norm(&du, p, beta * p)?;
    let rhs = weighted_lp_norm(&eps, p, beta * p)?;
    let mut r = InequalityReport::new(InequalityKind::Korn, grid, p, beta, lhs.value, rhs.value);
    r.excluded_cells = lhs.excluded;
    if eps.max_abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        r.ratio = None;
        r.flag = Some(ReportFlag::RigidMotion);
    }
    Ok(r)
}

/// Which cubes enter the sharp maximal function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeFamily {
    /// Cubes with `σQ` inside the domain.
    Restricted,
    /// Every cube of the lattices.
    All,
}

/// Side of the coarsest cube in cells: the smallest power of two covering the grid.
fn coarsest_cells(grid: &Grid) -> usize {
    let [nx, ny] = grid.dims();
    nx.max(ny).next_power_of_two()
}

/// Sharp maximal function over the restricted family.
pub fn sharp_maximal(f: &GridFunction, sigma: f64, scales: u32) -> Result<GridFunction> {
    sharp_maximal_with(f, sigma, scales, CubeFamily::Restricted)
}

/// Sup of the mean oscillation `|Q|^{-1} ∫_Q |f - f_Q|` over dyadic cubes of
/// side `2^{-j} L0` (`j = 0..=scales`, stopping at one cell) on the lattice and
/// its three half-side shifts. `f` is extended by zero off its mask.
pub fn sharp_maximal_with(f: &GridFunction, sigma: f64, scales: u32, family: CubeFamily) -> Result<GridFunction> {
    if !(sigma >= 1.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be >= 1, got {sigma}")));
    }
    let grid = f.grid();
    let [nx, ny] = grid.dims();
    let vals: Vec<f64> = (0..grid.len()).map(|c| if f.mask()[c] { f.get(c) } else { 0.0 }).collect();
    // prefix[(j)*(nx+1) + i] = sum over cells [0,i) x [0,j)
    let stride = nx + 1;
    let mut prefix = vec![0.0; stride * (ny + 1)];
    for j in 0..ny {
        let mut row = 0.0;
        for i in 0..nx {
            row += vals[grid.index(i, j)];
            prefix[(j + 1) * stride + i + 1] = prefix[j * stride + i + 1] + row;
        }
    }
    let rect_sum = |i0: usize, j0: usize, i1: usize, j1: usize| -> f64 {
        prefix[j1 * stride + i1] - prefix[j0 * stride + i1] - prefix[j1 * stride + i0] + prefix[j0 * stride + i0]
    };
    let l0 = coarsest_cells(grid);
    let h = grid.h();
    let o = grid.origin();
    let dom = grid.domain();
    let mut lattices = Vec::new();
    for j in 0..=scales {
        let side = l0 >> j;
        if side == 0 {
            break;
        }
        let half = side / 2;
        let mut shifts = vec![(0, 0)];
        if half > 0 {
            shifts.extend([(half, 0), (0, half), (half, half)]);
        }
        for (sx, sy) in shifts {
            lattices.push((side, sx, sy));
        }
    }
    let per_lattice: Vec<Vec<f64>> = lattices
        .par_iter()
        .map(|&(side, sx, sy)| {
            let mut out = vec![0.0; grid.len()];
            let start = |shift: usize| -> i64 { shift as i64 - side as i64 };
            let mut cj = start(sy);
            while cj < ny as i64 {
                let mut ci = start(sx);
                while ci < nx as i64 {
                    let (i0, j0) = (ci.max(0) as usize, cj.max(0) as usize);
                    let (i1, j1) = (((ci + side as i64) as usize).min(nx), ((cj + side as i64) as usize).min(ny));
                    if i0 < i1 && j0 < j1 {
                        let cube = Aabb::new(
                            Point::new(o.x + ci as f64 * h, o.y + cj as f64 * h),
                            Point::new(o.x + (ci + side as i64) as f64 * h, o.y + (cj + side as i64) as f64 * h),
                        );
                        let admissible = match family {
                            CubeFamily::All => true,
                            CubeFamily::Restricted => dom.contains_box(&cube.scaled(sigma)),
                        };
                        if admissible {
                            // cells outside the grid are zero extension
                            let area = (side * side) as f64;
                            let mean = rect_sum(i0, j0, i1, j1) / area;
                            let outside = area - ((i1 - i0) * (j1 - j0)) as f64;
                            let mut osc = CompensatedSum::new();
                            osc.add(outside * mean.abs());
                            for jj in j0..j1 {
                                for ii in i0..i1 {
                                    osc.add((vals[grid.index(ii, jj)] - mean).abs());
                                }
                            }
                            let m = osc.value() / area;
                            for jj in j0..j1 {
                                for ii in i0..i1 {
                                    out[grid.index(ii, jj)] = m;
                                }
                            }
                        }
                    }
                    ci += side as i64;
                }
                cj += side as i64;
            }
            out
        })
        .collect();
    let values: Vec<f64> = (0..grid.len())
        .map(|c| per_lattice.iter().map(|l| l[c]).fold(0.0, f64::max))
        .collect();
    Ok(GridFunction::from_values(grid, values)?.restricted(f.mask()))
}

/// Parameters of the Fefferman–Stein measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeffermanSteinParams {
    pub p: f64,
    pub beta: f64,
    pub sigma: f64,
    pub scales: u32,
}

/// `‖f - c‖_{L^p(d^{βp})} / ‖M♯ f‖_{L^p(d^{βp})}`; the normalized ratio divides by `σ^n`.
pub fn fefferman_stein_ratio(f: &GridFunction, fp: &FeffermanSteinParams) -> Result<InequalityReport> {
    check_p(fp.p)?;
    let f = weighted_mean_zero(f, fp.p, fp.beta)?;
    let m = sharp_maximal(&f, fp.sigma, fp.scales)?;
    let lhs = weighted_lp_norm(&f, fp.p, fp.beta * fp.p)?;
    let rhs = weighted_lp_norm(&m, fp.p, fp.beta * fp.p)?;
    let mut r = InequalityReport::new(InequalityKind::FeffermanStein, f.grid(), fp.p, fp.beta, lhs.value, rhs.value);
    r.sigma = Some(fp.sigma);
    r.excluded_cells = lhs.excluded;
    if r.ratio.is_none() && lhs.value > 0.0 {
        r.flag = Some(ReportFlag::ResolutionInsufficient);
    }
    r.normalized_ratio = r.ratio.map(|v| v / fp.sigma.powf(DIM));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_domain, Preset, PresetParams};
    use crate::testfunctions::{checkerboard, PolynomialField, TrigPolynomial};
    use proptest::prelude::*;

    fn square_grid(h: f64) -> Arc<Grid> {
        let dom = make_domain(Preset::UnitSquare, PresetParams::default()).unwrap();
        Grid::covering(Arc::new(dom), h).unwrap()
    }

    #[test]
    fn poincare_linear_function_on_square_matches_closed_form() {
        // ‖x - 1/2‖_2 = (1/12)^{1/2}, ‖d‖_2 = (1/24)^{1/2}
        let grid = square_grid(1.0 / 256.0);
        let f = GridFunction::from_fn(&grid, |p| p.x);
        let r = improved_poincare_ratio(&f, 2.0, 0.0).unwrap();
        assert!((r.lhs - (1.0f64 / 12.0).sqrt()).abs() < 1e-5, "{}", r.lhs);
        assert!((r.rhs - (1.0f64 / 24.0).sqrt()).abs() < 1e-5, "{}", r.rhs);
        assert!((r.ratio.unwrap() - 2f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn poincare_constant_is_degenerate_and_shift_invariant() {
        let grid = square_grid(1.0 / 32.0);
        let r = improved_poincare_ratio(&GridFunction::constant(&grid, 3.0), 2.0, 0.0).unwrap();
        assert_eq!(r.flag, Some(ReportFlag::Degenerate));
        let t = TrigPolynomial::random(1, 5, 3);
        let f = GridFunction::from_fn(&grid, |p| t.eval(p));
        let a = improved_poincare_ratio(&f, 2.0, -0.3).unwrap();
        let b = improved_poincare_ratio(&f.map(|v| v + 7.0), 2.0, -0.3).unwrap();
        assert!((a.ratio.unwrap() - b.ratio.unwrap()).abs() < 1e-10 * a.ratio.unwrap());
    }

    #[test]
    fn korn_symmetric_gradient_ratio_is_one() {
        let grid = square_grid(1.0 / 32.0);
        let u = VectorFieldGrid::from_fn(&grid, |p| [p.x, -p.y]);
        let r = korn_ratio(&u, 2.0, 0.0).unwrap();
        assert!((r.ratio.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn korn_rotation_is_rigid() {
        let grid = square_grid(1.0 / 32.0);
        let u = VectorFieldGrid::from_fn(&grid, |p| [0.7 * p.y, -0.7 * p.x]);
        let r = korn_ratio(&u, 2.0, 0.0).unwrap();
        assert_eq!(r.flag, Some(ReportFlag::RigidMotion));
        assert!(r.ratio.is_none());
    }

    #[test]
    fn korn_normalization_centers_skew_part() {
        let dom = make_domain(Preset::LShape, PresetParams::default()).unwrap();
        let grid = Grid::covering(Arc::new(dom), 1.0 / 64.0).unwrap();
        let f = PolynomialField::random(5, 3);
        let u = VectorFieldGrid::from_fn(&grid, |p| f.eval(p));
        let un = korn_normalize(&u, 2.0, -0.2).unwrap();
        let (jac, mask) = jacobian(&un).unwrap();
        let skew_entry = scalar_field(&grid, jac.iter().map(|m| skew(m)[0][1]).collect(), &mask).unwrap();
        assert!(weighted_integral(&skew_entry, -0.4).abs() < 1e-12);
        let r = korn_ratio(&u, 2.0, -0.2).unwrap();
        assert!(r.ratio.unwrap() >= 1.0 - 1e-9);
        assert!(frobenius_identity_residual(&un).unwrap() < 1e-10);
    }

    #[test]
    fn sharp_maximal_of_constant_vanishes() {
        let grid = square_grid(1.0 / 32.0);
        let m = sharp_maximal(&GridFunction::constant(&grid, 2.5), 1.0, 6).unwrap();
        assert!(m.max_abs() < 1e-14);
    }

    #[test]
    fn sharp_maximal_half_indicator_vanishes_away_from_interface() {
        let grid = square_grid(1.0 / 32.0);
        let f = GridFunction::from_fn(&grid, |p| if p.x < 0.5 { 1.0 } else { 0.0 });
        let m = sharp_maximal(&f, 1.0, 6).unwrap();
        assert!(m.values().iter().all(|&v| v >= 0.0));
        // cells touching the interface see a straddling admissible cube
        let near = grid.cell_of(Point::new(0.49, 0.5)).unwrap();
        assert!(m.get(near) > 0.0);
        // no admissible cube through the corner cell crosses x = 1/2
        let corner = grid.cell_of(Point::new(0.01, 0.01)).unwrap();
        assert_eq!(m.get(corner), 0.0);
    }

    #[test]
    fn restricted_family_is_dominated_by_full_family() {
        let dom = make_domain(Preset::LShape, PresetParams::default()).unwrap();
        let grid = Grid::covering(Arc::new(dom), 1.0 / 32.0).unwrap();
        let t = TrigPolynomial::random(11, 6, 4);
        let f = GridFunction::from_fn(&grid, |p| t.eval(p));
        for sigma in [1.0, 2.0] {
            let r = sharp_maximal_with(&f, sigma, 6, CubeFamily::Restricted).unwrap();
            let a = sharp_maximal_with(&f, sigma, 6, CubeFamily::All).unwrap();
            for c in 0..grid.len() {
                assert!(r.get(c) <= a.get(c) + 1e-15);
            }
        }
    }

    #[test]
    fn fefferman_stein_checkerboard_is_finite() {
        let grid = square_grid(1.0 / 64.0);
        let f = GridFunction::from_fn(&grid, |p| checkerboard(p, 8, 1.0));
        let fp = FeffermanSteinParams { p: 2.0, beta: 0.0, sigma: 1.0, scales: 6 };
        let r = fefferman_stein_ratio(&f, &fp).unwrap();
        let ratio = r.ratio.unwrap();
        assert!(ratio > 0.0 && ratio < 1e23);
    }

    #[test]
    fn fefferman_stein_zero_is_degenerate() {
        let grid = square_grid(1.0 / 16.0);
        let fp = FeffermanSteinParams { p: 2.0, beta: 0.0, sigma: 1.0, scales: 4 };
        let r = fefferman_stein_ratio(&GridFunction::zeros(&grid), &fp).unwrap();
        assert_eq!(r.flag, Some(ReportFlag::Degenerate));
    }

    #[test]
    fn fractional_rejects_few_samples_and_constant_has_zero_ratio() {
        let grid = square_grid(1.0 / 32.0);
        let fp = FractionalParams { p: 2.0, beta: 0.0, s: 0.5, tau: 0.5, samples: 100, seed: 1 };
        assert!(fractional_poincare_ratio(&GridFunction::constant(&grid, 1.0), &fp).is_err());
        let fp = FractionalParams { samples: 20_000, ..fp };
        let r = fractional_poincare_ratio(&GridFunction::constant(&grid, 1.0), &fp).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.ratio, Some(0.0));
    }

    #[test]
    fn fractional_estimate_matches_quadrature_for_linear_function() {
        // u = x, p = 2, s = 1/2, β = -s: the weight is 1 and the inner
        // integral over B(x, τd) is π τ d(x).
        let grid = square_grid(1.0 / 64.0);
        let u = GridFunction::from_fn(&grid, |p| p.x);
        let (s, tau) = (0.5, 0.5);
        let fp = FractionalParams { p: 2.0, beta: -s, s, tau, samples: 400_000, seed: 3 };
        let (est, se) = fractional_seminorm(&u, &fp).unwrap();
        // ∫ d = 1/6 on the unit square
        let exact = std::f64::consts::PI * tau / 6.0;
        assert!((est - exact).abs() < 4.0 * se + 1e-3 * exact, "{est} vs {exact} ± {se}");
    }

    #[test]
    fn fractional_is_reproducible_for_a_seed() {
        let grid = square_grid(1.0 / 32.0);
        let u = GridFunction::from_fn(&grid, |p| p.x * p.y);
        let fp = FractionalParams { p: 2.0, beta: 0.0, s: 0.5, tau: 0.5, samples: 20_000, seed: 9 };
        let a = fractional_seminorm(&u, &fp).unwrap();
        let b = fractional_seminorm(&u, &fp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reports_serialize_to_json_lines_and_csv() {
        let grid = square_grid(1.0 / 16.0);
        let f = GridFunction::from_fn(&grid, |p| p.x);
        let r = improved_poincare_ratio(&f, 2.0, 0.0).unwrap().with_test_function("x");
        let mut buf = Vec::new();
        write_json_lines(&[r.clone(), r.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: InequalityReport = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, r);
        let mut csv_buf = Vec::new();
        write_csv(&[r], &mut csv_buf).unwrap();
        let csv_text = String::from_utf8(csv_buf).unwrap();
        assert!(csv_text.starts_with("inequality,domain,test_function,p,beta"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn ratios_are_scale_invariant(seed in 0u64..1000, alpha in -50.0f64..50.0) {
            prop_assume!(alpha.abs() > 1e-3);
            let grid = square_grid(1.0 / 16.0);
            let t = TrigPolynomial::random(seed, 4, 3);
            let f = GridFunction::from_fn(&grid, |p| t.eval(p));
            let a = improved_poincare_ratio(&f, 2.0, -0.3).unwrap();
            let b = improved_poincare_ratio(&f.scaled(alpha), 2.0, -0.3).unwrap();
            if let (Some(x), Some(y)) = (a.ratio, b.ratio) {
                prop_assert!((x - y).abs() <= 1e-10 * x);
            }
            let m = sharp_maximal(&f, 1.0, 4).unwrap();
            let ma = sharp_maximal(&f.scaled(alpha), 1.0, 4).unwrap();
            for c in 0..grid.len() {
                prop_assert!((ma.get(c) - alpha.abs() * m.get(c)).abs() <= 1e-12 * (1.0 + alpha.abs() * m.get(c)));
            }
        }

        #[test]
        fn frobenius_split_is_exact(seed in 0u64..1000) {
            let grid = square_grid(1.0 / 16.0);
            let f = PolynomialField::random(seed, 3);
            let u = VectorFieldGrid::from_fn(&grid, |p| f.eval(p));
            prop_assert!(frobenius_identity_residual(&u).unwrap() < 1e-10);
            let r = korn_ratio(&u, 2.0, 0.0).unwrap();
            prop_assert!(r.ratio.unwrap() >= 1.0 - 1e-9);
        }
    }
}
