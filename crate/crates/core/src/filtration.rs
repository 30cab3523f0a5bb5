//! Freudenthal triangulation of the pixel grid and the lower-star filtration
//! induced by a scalar field on its vertices.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::ingest::ScalarGrid;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FiltrationError {
    #[error("grid must be at least 2x2, got {width}x{height}")]
    GridTooSmall { width: usize, height: usize },
    #[error("complex is {expected} but the scalar field is {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("invalid complex: {0}")]
    InvalidComplex(String),
}

/// Identifier of a simplex inside a [`SimplicialComplex`]: vertices come
/// first, then edges, then triangles.
pub type SimplexId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Simplex {
    Vertex([u32; 1]),
    Edge([u32; 2]),
    Triangle([u32; 3]),
}

impl Simplex {
    /// Sorted vertex tuple.
    pub fn vertices(&self) -> &[u32] {
        match self {
            Simplex::Vertex(v) => v,
            Simplex::Edge(v) => v,
            Simplex::Triangle(v) => v,
        }
    }

    pub fn dim(&self) -> usize {
        self.vertices().len() - 1
    }
}

/// A 2-dimensional simplicial complex. Grid complexes carry their width and
/// height; vertex `row * width + col` sits at pixel `(row, col)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplicialComplex {
    width: usize,
    height: usize,
    num_vertices: usize,
    edges: Vec<[u32; 2]>,
    triangles: Vec<[u32; 3]>,
    /// Edge ids (local to `edges`) bounding each triangle.
    triangle_edges: Vec<[u32; 3]>,
}

impl SimplicialComplex {
    /// Builds a complex from explicit edges and triangles. Vertex tuples are
    /// sorted; every triangle edge must be listed.
    pub fn from_simplices(
        num_vertices: usize,
        edges: Vec<[u32; 2]>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self, FiltrationError> {
        let edges: Vec<[u32; 2]> = edges
            .into_iter()
            .map(|[a, b]| if a < b { [a, b] } else { [b, a] })
            .collect();
        let mut lookup = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if e[0] == e[1] || e[1] as usize >= num_vertices {
                return Err(FiltrationError::InvalidComplex(format!("bad edge {e:?}")));
            }
            if lookup.insert(*e, i as u32).is_some() {
                return Err(FiltrationError::InvalidComplex(format!(
                    "duplicate edge {e:?}"
                )));
            }
        }
        let mut sorted_triangles = Vec::with_capacity(triangles.len());
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for mut t in triangles {
            t.sort_unstable();
            let mut ids = [0u32; 3];
            for (slot, pair) in [[t[0], t[1]], [t[0], t[2]], [t[1], t[2]]]
                .iter()
                .enumerate()
            {
                ids[slot] = *lookup.get(pair).ok_or_else(|| {
                    FiltrationError::InvalidComplex(format!("triangle {t:?} lacks edge {pair:?}"))
                })?;
            }
            sorted_triangles.push(t);
            triangle_edges.push(ids);
        }
        Ok(Self {
            width: 0,
            height: 0,
            num_vertices,
            edges,
            triangles: sorted_triangles,
            triangle_edges,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn num_simplices(&self) -> usize {
        self.num_vertices + self.edges.len() + self.triangles.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn simplex(&self, id: SimplexId) -> Simplex {
        let id = id as usize;
        let v = self.num_vertices;
        let e = self.edges.len();
        if id < v {
            Simplex::Vertex([id as u32])
        } else if id < v + e {
            Simplex::Edge(self.edges[id - v])
        } else {
            Simplex::Triangle(self.triangles[id - v - e])
        }
    }

    pub fn dim(&self, id: SimplexId) -> usize {
        let id = id as usize;
        if id < self.num_vertices {
            0
        } else if id < self.num_vertices + self.edges.len() {
            1
        } else {
            2
        }
    }

    /// Simplex ids of the codimension-one faces.
    pub fn boundary(&self, id: SimplexId) -> Vec<SimplexId> {
        let v = self.num_vertices as u32;
        let e = self.edges.len() as u32;
        match self.simplex(id) {
            Simplex::Vertex(_) => Vec::new(),
            Simplex::Edge(vs) => vs.to_vec(),
            Simplex::Triangle(_) => self.triangle_edges[(id - v - e) as usize]
                .iter()
                .map(|&local| v + local)
                .collect(),
        }
    }

    /// `(row, col)` of a grid vertex.
    pub fn vertex_pixel(&self, vertex: u32) -> (usize, usize) {
        let w = self.width.max(1);
        (vertex as usize / w, vertex as usize % w)
    }
}

/// Freudenthal triangulation of a `width x height` vertex grid: each unit
/// square gets its horizontal, vertical and top-left to bottom-right diagonal
/// edges and two triangles.
pub fn build_complex(width: usize, height: usize) -> Result<SimplicialComplex, FiltrationError> {
    if width < 2 || height < 2 {
        return Err(FiltrationError::GridTooSmall { width, height });
    }
    let id = |r: usize, c: usize| (r * width + c) as u32;

    let mut edges = Vec::with_capacity(
        height * (width - 1) + width * (height - 1) + (width - 1) * (height - 1),
    );
    for r in 0..height {
        for c in 0..width - 1 {
            edges.push([id(r, c), id(r, c + 1)]);
        }
    }
    for r in 0..height - 1 {
        for c in 0..width {
            edges.push([id(r, c), id(r + 1, c)]);
        }
    }
    for r in 0..height - 1 {
        for c in 0..width - 1 {
            edges.push([id(r, c), id(r + 1, c + 1)]);
        }
    }

    let horizontal = |r: usize, c: usize| (r * (width - 1) + c) as u32;
    let vertical = |r: usize, c: usize| (height * (width - 1) + r * width + c) as u32;
    let diagonal = |r: usize, c: usize| {
        (height * (width - 1) + (height - 1) * width + r * (width - 1) + c) as u32
    };

    let mut triangles = Vec::with_capacity(2 * (width - 1) * (height - 1));
    let mut triangle_edges = Vec::with_capacity(2 * (width - 1) * (height - 1));
    for r in 0..height - 1 {
        for c in 0..width - 1 {
            // upper-right triangle: (r,c) (r,c+1) (r+1,c+1)
            triangles.push([id(r, c), id(r, c + 1), id(r + 1, c + 1)]);
            triangle_edges.push([horizontal(r, c), diagonal(r, c), vertical(r, c + 1)]);
            // lower-left triangle: (r,c) (r+1,c) (r+1,c+1)
            triangles.push([id(r, c), id(r + 1, c), id(r + 1, c + 1)]);
            triangle_edges.push([vertical(r, c), diagonal(r, c), horizontal(r + 1, c)]);
        }
    }

    Ok(SimplicialComplex {
        width,
        height,
        num_vertices: width * height,
        edges,
        triangles,
        triangle_edges,
    })
}

/// A complex with one value per simplex and a total order in which every
/// face precedes its cofaces.
#[derive(Debug, Clone)]
pub struct Filtration {
    complex: Arc<SimplicialComplex>,
    values: Vec<f64>,
    order: Vec<SimplexId>,
    position: Vec<u32>,
}

impl Filtration {
    pub fn complex(&self) -> &SimplicialComplex {
        &self.complex
    }

    pub fn complex_arc(&self) -> &Arc<SimplicialComplex> {
        &self.complex
    }

    /// Value of each simplex, indexed by simplex id.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, id: SimplexId) -> f64 {
        self.values[id as usize]
    }

    /// Simplex ids in filtration order.
    pub fn order(&self) -> &[SimplexId] {
        &self.order
    }

    /// Position of a simplex in the filtration order.
    pub fn position(&self, id: SimplexId) -> usize {
        self.position[id as usize] as usize
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Lower-star filtration of a grid complex: each simplex takes the maximum
/// grid value over its vertices.
pub fn lower_star_filtration(
    complex: &Arc<SimplicialComplex>,
    grid: &ScalarGrid,
) -> Result<Filtration, FiltrationError> {
    if complex.width() != grid.width() || complex.height() != grid.height() {
        return Err(FiltrationError::DimensionMismatch {
            expected: format!("{}x{}", complex.width(), complex.height()),
            found: format!("{}x{}", grid.width(), grid.height()),
        });
    }
    lower_star_from_vertex_values(complex, grid.values())
}

/// Lower-star filtration from explicit per-vertex values on any complex.
pub fn lower_star_from_vertex_values(
    complex: &Arc<SimplicialComplex>,
    vertex_values: &[f64],
) -> Result<Filtration, FiltrationError> {
    if vertex_values.len() != complex.num_vertices() {
        return Err(FiltrationError::DimensionMismatch {
            expected: format!("{} vertices", complex.num_vertices()),
            found: format!("{} values", vertex_values.len()),
        });
    }
    let n = complex.num_simplices();
    let values: Vec<f64> = (0..n as SimplexId)
        .map(|id| {
            complex
                .simplex(id)
                .vertices()
                .iter()
                .map(|&v| vertex_values[v as usize])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let mut order: Vec<SimplexId> = (0..n as SimplexId).collect();
    order.sort_by(|&a, &b| compare_simplices(complex, &values, a, b));

    let mut position = vec![0u32; n];
    for (pos, &id) in order.iter().enumerate() {
        position[id as usize] = pos as u32;
    }
    Ok(Filtration {
        complex: Arc::clone(complex),
        values,
        order,
        position,
    })
}

fn compare_simplices(
    complex: &SimplicialComplex,
    values: &[f64],
    a: SimplexId,
    b: SimplexId,
) -> Ordering {
    let (sa, sb) = (complex.simplex(a), complex.simplex(b));
    values[a as usize]
        .total_cmp(&values[b as usize])
        .then_with(|| sa.dim().cmp(&sb.dim()))
        .then_with(|| sa.vertices().cmp(sb.vertices()))
}
