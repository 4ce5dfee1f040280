//! Small numerical kernels shared across modules: compensated summation,
//! log-domain accumulation, least-squares lines and percentiles.

use serde::{Deserialize, Serialize};

/// Neumaier (improved Kahan-Babuska) compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Running `log(sum exp(x_i))` for nonnegative sums with extreme dynamic range.
#[derive(Clone, Copy, Debug)]
pub struct LogSum {
    max: f64,
    scaled: CompensatedSum,
}

impl Default for LogSum {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: CompensatedSum::new(),
        }
    }
}

impl LogSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_log(&mut self, log_x: f64) {
        if log_x == f64::NEG_INFINITY {
            return;
        }
        if log_x > self.max {
            let rescale = (self.max - log_x).exp();
            let old = self.scaled.value() * rescale;
            self.scaled = CompensatedSum::new();
            self.scaled.add(old);
            self.max = log_x;
        }
        self.scaled.add((log_x - self.max).exp());
    }

    pub fn merge(&mut self, other: &LogSum) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        let v = other.scaled.value();
        if v > 0.0 {
            self.add_log(other.max + v.ln());
        }
    }

    /// Natural log of the accumulated sum (`-inf` when empty).
    pub fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.value().ln()
        }
    }
}

/// Least-squares line `y = slope * x + intercept` with fit diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub max_residual: f64,
}

/// Ordinary least squares on `(x, y)` pairs; `None` for fewer than two
/// points or zero spread in `x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = sum(xs.iter().copied()) / nf;
    let my = sum(ys.iter().copied()) / nf;
    let sxx = sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let syy = sum(ys.iter().map(|y| (y - my) * (y - my)));
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = sum(
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (y - slope * x - intercept).powi(2)),
    );
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let max_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Some(LineFit {
        slope,
        intercept,
        r_squared,
        max_residual,
    })
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(v[lo] * (1.0 - frac) + v[hi] * frac)
}

/// `n` points geometrically spaced from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let s = sum([1e16, 1.0, -1e16, 1.0]);
        assert_eq!(s, 2.0);
    }

    #[test]
    fn log_sum_matches_direct_sum() {
        let xs = [0.5, 3.0, 1e-3, 42.0];
        let mut ls = LogSum::new();
        for x in xs {
            ls.add_log(f64::ln(x));
        }
        let direct: f64 = xs.iter().sum();
        assert!((ls.ln().exp() - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn log_sum_survives_overflow_range() {
        let mut ls = LogSum::new();
        ls.add_log(800.0);
        ls.add_log(800.0);
        assert!((ls.ln() - (800.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn fit_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn percentile_endpoints() {
        let v = [3.0, 1.0, 2.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(3.0));
        assert_eq!(percentile(&v, 0.5), Some(2.0));
    }
}
