//! Tree covering of a Koch prefractal: expansion constant, chain-count
//! bound and the empirical shadow-growth constant.
//!
//! `cargo run --release --example tree_covering`

use std::sync::Arc;

use whardy::geometry::{make_domain, Preset, PresetParams};
use whardy::treecover::{build_tree, chain_bound, shadow_stats, verify_shadow_lemma};
use whardy::whitney::WhitneyDecomposition;

fn main() -> whardy::Result<()> {
    for level in 1..=3 {
        let params = PresetParams {
            level,
            ..PresetParams::default()
        };
        let dom = Arc::new(make_domain(Preset::KochPrefractal, params)?);
        let dec = Arc::new(WhitneyDecomposition::build(Arc::clone(&dom), 7)?);
        let cov = build_tree(&dec, dom.center())?;
        let stats = shadow_stats(cov.tree(), cov.levels());
        println!(
            "koch level {level}: {} cubes, K = {:.3}, chain count {} <= {:.1}, C_emp(1) = {:.2}",
            cov.len(),
            cov.k(),
            stats.max_chain_count(),
            chain_bound(cov.k()),
            verify_shadow_lemma(&stats, 1.0)?
        );
    }
    Ok(())
}
