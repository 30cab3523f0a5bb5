//! Persistence-based similarity analysis of 2D scalar-field corpora.
//!
//! The pipeline turns each raster into a lower-star filtration of a
//! triangulated pixel grid, reduces its boundary matrix to obtain persistence
//! pairs and representative 1-cycles, vectorizes the 1-dimensional pairs as
//! persistence images, and embeds the corpus in the plane from the pairwise
//! image distances.

pub mod analysis;
pub mod filtration;
pub mod ingest;
pub mod persistence;
pub mod project;
pub mod synthetic;
pub mod vectorize;

pub use analysis::{
    classical_mds, distance_matrix, isomap, tsne, DistanceMatrix, Embedding, EmbeddingMethod,
    TsneParams,
};
pub use filtration::{build_complex, lower_star_filtration, Filtration, SimplicialComplex};
pub use ingest::{LabeledRaster, ScalarGrid};
pub use persistence::{PersistenceCycle, PersistenceDiagram, PersistencePair};

pub use project::{Project, ProjectConfig};
pub use vectorize::{ImageMode, ImageParams, PersistenceImage, SortedDiff, WeightScale};
