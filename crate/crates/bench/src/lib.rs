//! Shared fixtures for the benchmarks.

use proxci::data::ProxyDataset;
use proxci::discrete::{CategoricalLaw, LawDims};
use proxci::sim::{simulate, SimConfig};

/// Dataset of `n` draws from the main simulation design.
pub fn default_dataset(n: usize, seed: u64) -> ProxyDataset {
    simulate(&SimConfig { n, seed, ..SimConfig::main_design() }).expect("default design is valid").data
}

/// Law with `d` categories for `U`, `W` and `Z` whose proxy matrices are
/// well conditioned.
pub fn banded_law(d: usize, d_x: usize, d_y: usize) -> CategoricalLaw {
    let near = |i: usize, j: usize| if i == j { 4.0 } else { 1.0 / (1.0 + i.abs_diff(j) as f64) };
    let y_values = (0..d_y).map(|y| y as f64).collect();
    CategoricalLaw::from_fn(LawDims::new(d, d_x, d, d, d_y), y_values, |u, x, w, z, a, y| {
        let treat = if a == 1 { 1.0 + u as f64 } else { 1.0 + (d - u) as f64 };
        let outcome = 1.0 + ((u + a + x) * (y + 1)) as f64 / (d * d_y) as f64;
        (1.0 + x as f64) * near(z, u) * near(w, u) * treat * outcome
    })
    .expect("positive mass")
}
