use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;

use topolens_core::analysis::geodesic_distances;
use topolens_core::ingest::{load_idx, sample_per_class};
use topolens_core::persistence::compute_persistence;
use topolens_core::vectorize::persistence_image;
use topolens_core::{
    build_complex, classical_mds, distance_matrix, isomap, lower_star_filtration, synthetic,
    ImageParams, ScalarGrid,
};

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

#[test]
fn bundled_mnist_matches_its_header() {
    let items = load_idx(
        data("mnist5k-images-idx3-ubyte.gz"),
        data("mnist5k-labels-idx1-ubyte.gz"),
    )
    .unwrap();
    assert_eq!(items.len(), 5000);
    assert!(items
        .iter()
        .all(|r| r.width == 28 && r.height == 28 && r.label < 10));

    let sample = sample_per_class(&items, 100, 42).unwrap();
    assert_eq!(sample.len(), 1000);
    for label in 0..10 {
        assert_eq!(sample.iter().filter(|r| r.label == label).count(), 100);
    }
    assert_eq!(sample, sample_per_class(&items, 100, 42).unwrap());
}

/// Components of the sublevel set by flood fill over the triangulation's
/// neighbours (4-connectivity plus the down-right diagonal).
fn components(side: usize, values: &[f64], t: f64) -> usize {
    let mut seen = vec![false; side * side];
    let mut count = 0;
    for start in 0..side * side {
        if seen[start] || values[start] > t {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            let (r, c) = ((v / side) as i64, (v % side) as i64);
            for (dr, dc) in [(0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (-1, -1)] {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= side as i64 || nc >= side as i64 {
                    continue;
                }
                let u = nr as usize * side + nc as usize;
                if !seen[u] && values[u] <= t {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    count
}

proptest! {
    #[test]
    fn zero_dim_pairs_count_components(levels in proptest::collection::vec(0u8..=5, 25)) {
        let side = 5;
        let values: Vec<f64> = levels.iter().map(|&k| f64::from(k) / 5.0).collect();
        let complex = Arc::new(build_complex(side, side).unwrap());
        let f = lower_star_filtration(&complex, &ScalarGrid::new(side, side, values.clone()).unwrap()).unwrap();
        let (d, _) = compute_persistence(&f, false);
        for k in 0..=5 {
            let t = f64::from(k) / 5.0;
            let alive = d.pairs_of_dim(0).filter(|p| p.birth <= t && t < p.death).count()
                + d.essential.iter().filter(|e| e.dim == 0 && e.birth <= t).count();
            prop_assert_eq!(alive, components(side, &values, t));
        }
    }
}

#[test]
fn synthetic_corpus_end_to_end() {
    let items = synthetic::corpus(3);
    let complex = Arc::new(build_complex(synthetic::SIDE, synthetic::SIDE).unwrap());
    let images: Vec<_> = items
        .iter()
        .map(|item| {
            let grid = topolens_core::ingest::to_filtration_function(item, true);
            let f = lower_star_filtration(&complex, &grid).unwrap();
            let (mut d, cycles) = compute_persistence(&f, false);
            d.item_id = item.id.clone();
            for c in &cycles {
                assert!(d.pairs.contains(&c.pair));
            }
            persistence_image(&d, &ImageParams::default()).unwrap()
        })
        .collect();
    let dist = distance_matrix(&images).unwrap();
    let n = dist.len();
    assert_eq!(n, 30);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                assert!(dist.get(i, k) <= dist.get(i, j) + dist.get(j, k) + 1e-12);
            }
        }
    }

    let geo = geodesic_distances(&dist, 4).unwrap();
    for i in 0..n {
        for j in 0..n {
            assert!(geo.distances[i * n + j] >= dist.get(i, j) - 1e-12);
        }
    }
    for emb in [classical_mds(&dist).unwrap(), isomap(&dist, 4).unwrap()] {
        assert_eq!(emb.coords.len(), n);
        for axis in 0..2 {
            let mean = emb.coords.iter().map(|c| c[axis]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-9);
        }
    }
}
