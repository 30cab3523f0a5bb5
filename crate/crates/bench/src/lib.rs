//! Seeded inputs shared by the benchmarks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topolens_core::persistence::PersistencePair;
use topolens_core::{
    build_complex, distance_matrix, lower_star_filtration, DistanceMatrix, Filtration, ImageParams,
    PersistenceDiagram, PersistenceImage, ScalarGrid,
};

/// Lower-star filtration of a smooth random field on a `side`×`side` grid.
pub fn random_filtration(side: usize, seed: u64) -> Filtration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c): (f64, f64, f64) = (
        rng.random_range(1.0..4.0),
        rng.random_range(1.0..4.0),
        rng.random(),
    );
    let values = (0..side * side)
        .map(|i| {
            let (r, col) = ((i / side) as f64, (i % side) as f64);
            let wave = ((a * r / side as f64 * 6.0).sin() * (b * col / side as f64 * 6.0).cos()
                + 1.0)
                / 2.0;
            (0.8 * wave + 0.2 * rng.random::<f64>() * c).clamp(0.0, 1.0)
        })
        .collect();
    let grid = ScalarGrid::new(side, side, values).expect("values lie in [0, 1]");
    let complex = Arc::new(build_complex(side, side).expect("side >= 2"));
    lower_star_filtration(&complex, &grid).expect("sizes match")
}

/// Diagram with `points` random dim-1 pairs.
pub fn random_diagram(points: usize, seed: u64) -> PersistenceDiagram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..points)
        .map(|_| {
            let birth: f64 = rng.random_range(0.0..0.9);
            let death = rng.random_range(birth..1.0);
            PersistencePair {
                dim: 1,
                birth,
                death,
                persistence: death - birth,
                birth_simplex: 0,
                death_simplex: 0,
            }
        })
        .collect();
    PersistenceDiagram {
        item_id: format!("d{seed}"),
        pairs,
        essential: Vec::new(),
    }
}

pub fn random_images(n: usize, seed: u64) -> Vec<PersistenceImage> {
    (0..n)
        .map(|i| {
            let d = random_diagram(6, seed + i as u64);
            topolens_core::vectorize::persistence_image(&d, &ImageParams::default())
                .expect("valid params")
        })
        .collect()
}

pub fn random_distances(n: usize, seed: u64) -> DistanceMatrix {
    distance_matrix(&random_images(n, seed)).expect("equal resolutions")
}
