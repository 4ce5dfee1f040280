//! Box and Assouad dimension of a square boundary, a Koch boundary and the
//! harmonic sequence.
//!
//! `cargo run --release --example dimension_estimates`

use whardy::dimension::{assouad_dimension, box_dimension, CoverTarget};
use whardy::geometry::{make_domain, Preset, PresetParams};
use whardy::numeric::geometric_grid;

fn main() -> whardy::Result<()> {
    for (preset, level) in [(Preset::UnitSquare, 0), (Preset::KochPrefractal, 4)] {
        let params = PresetParams {
            level,
            ..PresetParams::default()
        };
        let dom = make_domain(preset, params)?;
        let (r_min, r_max) = (1.0 / 81.0, 1.0 / 3.0);
        let target = CoverTarget::boundary(&dom, r_min / 16.0)?;
        let bx = box_dimension(&target, r_min, r_max, 13)?;
        let asd = assouad_dimension(
            &target,
            &geometric_grid(r_min, r_max / 3.0, 6),
            &geometric_grid(r_max / 3.0, 1.5 * r_max, 4),
            40,
        )?;
        println!("{preset:?}: box {:.3}, assouad {:.3}", bx.value, asd.value);
    }
    let harmonic = CoverTarget::harmonic(10_000);
    let bx = box_dimension(&harmonic, 1e-6, 1e-2, 9)?;
    println!("harmonic sequence: box {:.3}", bx.value);
    Ok(())
}
