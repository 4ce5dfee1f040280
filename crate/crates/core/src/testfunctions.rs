//! Seeded families of test functions used by the measurement studies.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// `sum a_k cos(pi (kx x + ky y) + phase_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    pub terms: Vec<TrigTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

impl TrigPolynomial {
    /// `modes` terms with amplitudes in [-1, 1] and integer frequencies in
    /// `0..=max_freq`.
    pub fn random(seed: u64, modes: usize, max_freq: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = (0..modes)
            .map(|_| TrigTerm {
                amplitude: rng.gen_range(-1.0..1.0),
                kx: rng.gen_range(0..=max_freq) as f64,
                ky: rng.gen_range(0..=max_freq) as f64,
                phase: rng.gen_range(0.0..2.0 * PI),
            })
            .collect();
        Self { terms }
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * (PI * (t.kx * p.x + t.ky * p.y) + t.phase).cos())
            .sum()
    }
}

/// Vector field whose components are polynomials `sum c_ab x^a y^b`, `a + b <= degree`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialField {
    pub degree: u32,
    /// Per component, coefficients in graded order `(a, b)`.
    pub coefficients: [Vec<f64>; 2],
}

impl PolynomialField {
    pub fn random(seed: u64, degree: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Self::monomials(degree).len();
        let mut draw = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let c0 = draw();
        let c1 = draw();
        Self {
            degree,
            coefficients: [c0, c1],
        }
    }

    fn monomials(degree: u32) -> Vec<(i32, i32)> {
        (0..=degree as i32)
            .flat_map(|s| (0..=s).map(move |a| (a, s - a)))
            .collect()
    }

    pub fn eval(&self, p: Point) -> [f64; 2] {
        let mono = Self::monomials(self.degree);
        let mut out = [0.0; 2];
        for (k, coeffs) in self.coefficients.iter().enumerate() {
            out[k] = mono
                .iter()
                .zip(coeffs)
                .map(|(&(a, b), c)| c * p.x.powi(a) * p.y.powi(b))
                .sum();
        }
        out
    }
}

/// `+1` / `-1` on an `n x n` board over `[0, side]^2`.
pub fn checkerboard(p: Point, n: u32, side: f64) -> f64 {
    let i = (p.x / side * n as f64).floor() as i64;
    let j = (p.y / side * n as f64).floor() as i64;
    if (i + j).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_families_are_reproducible() {
        assert_eq!(TrigPolynomial::random(3, 6, 4), TrigPolynomial::random(3, 6, 4));
        assert_ne!(TrigPolynomial::random(3, 6, 4), TrigPolynomial::random(4, 6, 4));
        assert_eq!(PolynomialField::random(9, 3), PolynomialField::random(9, 3));
    }

    #[test]
    fn polynomial_field_evaluates_monomials() {
        let f = PolynomialField {
            degree: 1,
            coefficients: [vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0]],
        };
        // graded order: 1, y, x
        assert_eq!(f.eval(Point::new(5.0, 7.0)), [1.0 + 14.0 + 15.0, 5.0]);
    }

    #[test]
    fn checkerboard_alternates() {
        assert_eq!(checkerboard(Point::new(0.1, 0.1), 4, 1.0), 1.0);
        assert_eq!(checkerboard(Point::new(0.3, 0.1), 4, 1.0), -1.0);
        assert_eq!(checkerboard(Point::new(0.3, 0.3), 4, 1.0), 1.0);
    }
}
