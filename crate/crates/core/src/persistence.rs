//! Boundary-matrix reduction over Z/2, persistence pairs and representative
//! 1-cycles.

use serde::{Deserialize, Serialize};

use crate::filtration::{Filtration, Simplex, SimplexId};

const NO_COLUMN: u32 = u32::MAX;

/// Result of the left-to-right column reduction. Columns and rows are indexed
/// by filtration position, not by simplex id.
#[derive(Debug, Clone)]
pub struct ReducedMatrix {
    columns: Vec<Vec<u32>>,
}

impl ReducedMatrix {
    /// Reduced column at a filtration position, as ascending row positions.
    pub fn column(&self, position: usize) -> &[u32] {
        &self.columns[position]
    }

    /// Lowest nonzero row of a column.
    pub fn low(&self, position: usize) -> Option<usize> {
        self.columns[position].last().map(|&r| r as usize)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

fn add_into(target: &mut Vec<u32>, source: &[u32], scratch: &mut Vec<u32>) {
    scratch.clear();
    let (mut i, mut j) = (0, 0);
    while i < target.len() && j < source.len() {
        match target[i].cmp(&source[j]) {
            std::cmp::Ordering::Less => {
                scratch.push(target[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                scratch.push(source[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    scratch.extend_from_slice(&target[i..]);
    scratch.extend_from_slice(&source[j..]);
    std::mem::swap(target, scratch);
}

/// Standard persistence algorithm: each column, in filtration order, absorbs
/// earlier reduced columns sharing its low until its low is unique or it
/// vanishes.
pub fn reduce(filtration: &Filtration) -> ReducedMatrix {
    let complex = filtration.complex();
    let n = filtration.len();
    let mut columns: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut owner = vec![NO_COLUMN; n];
    let mut scratch = Vec::new();

    for (pos, &id) in filtration.order().iter().enumerate() {
        let mut col: Vec<u32> = complex
            .boundary(id)
            .into_iter()
            .map(|face| filtration.position(face) as u32)
            .collect();
        col.sort_unstable();
        while let Some(&low) = col.last() {
            let other = owner[low as usize];
            if other == NO_COLUMN {
                owner[low as usize] = pos as u32;
                break;
            }
            add_into(&mut col, &columns[other as usize], &mut scratch);
        }
        columns.push(col);
    }
    ReducedMatrix { columns }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub dim: u8,
    pub birth: f64,
    pub death: f64,
    pub persistence: f64,
    pub birth_simplex: SimplexId,
    pub death_simplex: SimplexId,
}

/// A homology class that never dies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssentialClass {
    pub dim: u8,
    pub birth: f64,
    pub simplex: SimplexId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub item_id: String,
    pub pairs: Vec<PersistencePair>,
    pub essential: Vec<EssentialClass>,
}

impl PersistenceDiagram {
    pub fn pairs_of_dim(&self, dim: u8) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(move |p| p.dim == dim)
    }
}

/// Reads pairs off a reduced matrix. Pairs are listed in order of their death
/// position; with `keep_zero == false` pairs with `death == birth` are dropped.
pub fn extract_pairs(
    matrix: &ReducedMatrix,
    filtration: &Filtration,
    keep_zero: bool,
) -> PersistenceDiagram {
    let complex = filtration.complex();
    let order = filtration.order();
    let mut is_birth = vec![false; matrix.len()];
    let mut pairs = Vec::new();

    for death_pos in 0..matrix.len() {
        let Some(birth_pos) = matrix.low(death_pos) else {
            continue;
        };
        is_birth[birth_pos] = true;
        let birth_simplex = order[birth_pos];
        let death_simplex = order[death_pos];
        let birth = filtration.value(birth_simplex);
        let death = filtration.value(death_simplex);
        if !keep_zero && death == birth {
            continue;
        }
        pairs.push(PersistencePair {
            dim: complex.dim(birth_simplex) as u8,
            birth,
            death,
            persistence: death - birth,
            birth_simplex,
            death_simplex,
        });
    }

    let essential = (0..matrix.len())
        .filter(|&pos| matrix.low(pos).is_none() && !is_birth[pos])
        .map(|pos| {
            let simplex = order[pos];
            EssentialClass {
                dim: complex.dim(simplex) as u8,
                birth: filtration.value(simplex),
                simplex,
            }
        })
        .collect();

    PersistenceDiagram {
        item_id: String::new(),
        pairs,
        essential,
    }
}

/// An explicit 1-cycle (a Z/2 chain of edges) representing a dim-1 pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceCycle {
    pub pair: PersistencePair,
    /// Edges as vertex-id pairs, in filtration order.
    pub edges: Vec<[u32; 2]>,
}

/// The reduced column of each dim-1 pair's death triangle, read as edges.
pub fn representative_cycles(
    matrix: &ReducedMatrix,
    filtration: &Filtration,
    diagram: &PersistenceDiagram,
) -> Vec<PersistenceCycle> {
    let complex = filtration.complex();
    diagram
        .pairs_of_dim(1)
        .map(|pair| {
            let column = matrix.column(filtration.position(pair.death_simplex));
            let edges = column
                .iter()
                .map(
                    |&row| match complex.simplex(filtration.order()[row as usize]) {
                        Simplex::Edge(e) => e,
                        other => unreachable!("triangle boundary holds {other:?}"),
                    },
                )
                .collect();
            PersistenceCycle {
                pair: pair.clone(),
                edges,
            }
        })
        .collect()
}

/// Cycles with persistence at least `tau`, in their original order.
pub fn filter_by_persistence(cycles: &[PersistenceCycle], tau: f64) -> Vec<PersistenceCycle> {
    debug_assert!((0.0..=1.0).contains(&tau), "tau {tau} outside [0, 1]");
    cycles
        .iter()
        .filter(|c| c.pair.persistence >= tau)
        .cloned()
        .collect()
}

/// Diagram plus dim-1 representatives for one filtration.
pub fn compute_persistence(
    filtration: &Filtration,
    keep_zero: bool,
) -> (PersistenceDiagram, Vec<PersistenceCycle>) {
    let matrix = reduce(filtration);
    let diagram = extract_pairs(&matrix, filtration, keep_zero);
    let cycles = representative_cycles(&matrix, filtration, &diagram);
    (diagram, cycles)
}
