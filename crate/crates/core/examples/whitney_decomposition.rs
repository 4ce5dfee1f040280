//! Builds Whitney decompositions of the preset domains and prints the
//! sandwich, neighbor and overlap checks.
//!
//! `cargo run --release --example whitney_decomposition`

use std::sync::Arc;

use whardy::geometry::{make_domain, Preset, PresetParams};
use whardy::whitney::WhitneyDecomposition;

fn main() -> whardy::Result<()> {
    for preset in [Preset::UnitSquare, Preset::LShape, Preset::SlitSquare, Preset::KochPrefractal] {
        let dom = Arc::new(make_domain(preset, PresetParams::default())?);
        let dec = WhitneyDecomposition::build(dom, 7)?;
        let check = dec.verify();
        println!(
            "{preset:?}: {} cubes, max overlap {}, max dist/diam {:.3}, collar {:.4}, passes {}",
            dec.len(),
            check.max_overlap,
            check.max_dist_over_diam,
            dec.collar_width(),
            check.passes()
        );
    }
    Ok(())
}
