//! Measured ratios for the improved Poincaré, fractional Poincaré, Korn and
//! Fefferman–Stein inequalities on the L-shaped domain.
//!
//! `cargo run --release --example inequality_ratios`

use std::sync::Arc;

use whardy::fields::{Grid, GridFunction, VectorFieldGrid};
use whardy::geometry::{make_domain, Point, Preset, PresetParams};
use whardy::inequalities::{
    fefferman_stein_ratio, fractional_poincare_ratio, improved_poincare_ratio, korn_ratio, FeffermanSteinParams,
    FractionalParams,
};
use whardy::testfunctions::{checkerboard, PolynomialField, TrigPolynomial};

fn main() -> whardy::Result<()> {
    let dom = Arc::new(make_domain(Preset::LShape, PresetParams::default())?);
    let grid = Grid::covering(dom, 1.0 / 128.0)?;
    let poly = TrigPolynomial::random(1, 6, 4);
    let f = GridFunction::from_fn(&grid, |x| poly.eval(x));

    let r = improved_poincare_ratio(&f, 2.0, -0.3)?;
    println!("improved Poincaré  beta -0.3: ratio {:.4}", r.ratio.unwrap_or(f64::NAN));

    let fp = FractionalParams {
        p: 2.0,
        beta: 0.0,
        s: 0.5,
        tau: 0.5,
        samples: 200_000,
        seed: 1,
    };
    let r = fractional_poincare_ratio(&f, &fp)?;
    println!(
        "fractional Poincaré s 0.5: ratio {:.4} (rhs std error {:.1e})",
        r.ratio.unwrap_or(f64::NAN),
        r.std_error.unwrap_or(f64::NAN)
    );

    let field = PolynomialField::random(2, 3);
    let u = VectorFieldGrid::from_fn(&grid, |x| field.eval(x));
    let r = korn_ratio(&u, 2.0, 0.0)?;
    println!("Korn               cubic field: ratio {:.4}", r.ratio.unwrap_or(f64::NAN));

    let board = GridFunction::from_fn(&grid, |x| checkerboard(Point::new(x.x + 1.0, x.y + 1.0), 8, 2.0));
    for sigma in [1.0, 2.0, 4.0] {
        let fs = FeffermanSteinParams {
            p: 2.0,
            beta: 0.0,
            sigma,
            scales: 8,
        };
        let r = fefferman_stein_ratio(&board, &fs)?;
        println!("Fefferman–Stein    sigma {sigma}: ratio {:.4}", r.ratio.unwrap_or(f64::NAN));
    }
    Ok(())
}
