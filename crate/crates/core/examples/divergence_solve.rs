//! Solves div u = f for a dipole right-hand side by assembling local
//! saddle-point solves on the expanded tree cubes.
//!
//! `cargo run --release --example divergence_solve`

use std::sync::Arc;

use whardy::decomp::{decomposition_grid_with, CellLayout};
use whardy::divergence::{dipole, solve_divergence, SolverOptions};
use whardy::geometry::{make_domain, Point, Preset, PresetParams};
use whardy::treecover::build_tree;
use whardy::whitney::WhitneyDecomposition;

fn main() -> whardy::Result<()> {
    let dom = Arc::new(make_domain(Preset::UnitSquare, PresetParams::default())?);
    for level in [4, 5] {
        let dec = Arc::new(WhitneyDecomposition::build(Arc::clone(&dom), level)?);
        let cov = build_tree(&dec, dom.center())?;
        let grid = decomposition_grid_with(&cov, 8)?;
        let layout = Arc::new(CellLayout::new(&cov, &grid)?);
        let f = dipole(&layout, Point::new(0.3, 0.5), Point::new(0.7, 0.5), 0.1);
        let sol = solve_divergence(&cov, &layout, &f, 2.0, 0.0, &SolverOptions::default())?;
        let max_iters = sol.local.iter().map(|l| l.iterations).max().unwrap_or(0);
        println!(
            "level {level}: {} local solves (max {max_iters} iterations), residual {:.1e}, ratio {:.3}",
            sol.local.len(),
            sol.residual,
            sol.report.ratio.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
