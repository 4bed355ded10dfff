//! Fixtures shared by the benchmarks.

use spheroid_core::lifecycle::CellState;
use spheroid_core::rng::Purpose;
use spheroid_core::{CellAgent, MetabolicState, RngStream, SupplyConfig, Vec3};

/// `n` proliferating cells packed in a ball at roughly tissue density.
pub fn cell_ball(n: usize, seed: u64) -> Vec<CellAgent> {
    let root = RngStream::new(seed);
    // Volume of n cells of radius 6 µm at ~60% packing.
    let radius = 6.0 * (n as f64 / 0.6).cbrt();
    let state = MetabolicState::initial(&SupplyConfig::default(), 770.0);
    (0..n as u64)
        .map(|i| {
            let mut s = root.substream(i, Purpose::Placement, 0);
            let r = radius * s.uniform().cbrt();
            let p: Vec3 = s.unit_vector() * r;
            CellAgent::new(i, i + 1, p, 6.0, CellState::Proliferating, state)
        })
        .collect()
}
