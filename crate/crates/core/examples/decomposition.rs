//! Splits a random mean-zero function into zero-mean pieces supported on
//! the expanded tree cubes and reports the weighted stability ratio.
//!
//! `cargo run --release --example decomposition`

use std::sync::Arc;

use whardy::decomp::{c_decompose, covered_mean_zero, decomposition_grid_with, decomposition_ratio, CellLayout};
use whardy::fields::GridFunction;
use whardy::geometry::{make_domain, Preset, PresetParams};
use whardy::testfunctions::TrigPolynomial;
use whardy::treecover::build_tree;
use whardy::whitney::WhitneyDecomposition;

fn main() -> whardy::Result<()> {
    let dom = Arc::new(make_domain(Preset::LShape, PresetParams::default())?);
    let dec = Arc::new(WhitneyDecomposition::build(Arc::clone(&dom), 6)?);
    let cov = build_tree(&dec, dom.center())?;
    let grid = decomposition_grid_with(&cov, 8)?;
    let layout = Arc::new(CellLayout::new(&cov, &grid)?);
    let poly = TrigPolynomial::random(7, 6, 4);
    let g = covered_mean_zero(&GridFunction::from_fn(&grid, |x| poly.eval(x)), &layout);
    let parts = c_decompose(&cov, &layout, &g)?;
    let check = parts.check();
    println!(
        "{} pieces on {} cells: reconstruction error {:.2e}, max piece integral {:.2e}, passes {}",
        parts.parts().len(),
        grid.len(),
        check.reconstruction_error,
        check.max_part_integral,
        check.passes()
    );
    for beta in [0.0, -0.3, -0.7] {
        println!("beta {beta:+.1}: stability ratio {:.3}", decomposition_ratio(&parts, 2.0, beta)?);
    }
    Ok(())
}
