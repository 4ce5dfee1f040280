//! Hardy tree constant on the unit square across weights and refinement
//! levels, with the growth classification per weight exponent.
//!
//! `cargo run --release --example hardy_sweep`

use whardy::geometry::{Preset, PresetParams};
use whardy::hardy::{beta_sweep, hardy_report, snake_chain_bound, WeightSpec, DEFAULT_THETA_GRID};
use whardy::treecover::build_cube_chain;

fn main() -> whardy::Result<()> {
    let betas = [-0.9, -0.6, -0.3, 0.0, 0.3];
    let table = beta_sweep(Preset::UnitSquare, PresetParams::default(), 2.0, &betas, &[4, 5, 6], &DEFAULT_THETA_GRID)?;
    for g in &table.growth {
        println!("beta {:+.1}: values {:.3?}, ratios {:.3?}, {}", g.beta, g.values, g.ratios, g.classification.as_str());
    }
    let chain = build_cube_chain(5, 1.0)?;
    let rep = hardy_report(&chain, &WeightSpec::new(0.0, 2.0)?)?;
    println!(
        "snake chain m = 5: A_chain = {:.3} <= {:.1}",
        rep.a_chain.unwrap_or(f64::NAN),
        snake_chain_bound(5, 2.0)
    );
    Ok(())
}
