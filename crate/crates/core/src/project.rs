//! Pipeline orchestration and the on-disk project store.
//!
//! Layout of a project directory:
//!
//! ```text
//! config.json        ProjectConfig used for the artifacts below
//! items.json         [{id, label, width, height, pixels (base64)}]
//! diagrams/<id>.json PersistenceDiagram
//! cycles/<id>.json   {item_id, cycles: [PersistenceCycle]}
//! pimages/<id>.json  PersistenceImage
//! distances.bin      n*n little-endian f64, row-major, items.json order
//! embeddings.json    [Embedding]
//! manifest.json      pipeline version, parameters, SHA-256 of every artifact
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place; the
//! manifest is written last.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    classical_mds, distance_matrix, isomap, tsne, AnalysisError, DistanceMatrix, Embedding,
    EmbeddingMethod, TsneParams,
};
use crate::filtration::{build_complex, lower_star_filtration, FiltrationError, SimplicialComplex};
use crate::ingest::{self, IngestError, LabeledRaster};
use crate::persistence::{compute_persistence, PersistenceCycle, PersistenceDiagram};
use crate::vectorize::{
    max_persistence, persistence_image, ImageMode, ImageParams, PersistenceImage, VectorizeError,
    WeightScale,
};

pub const PIPELINE_VERSION: &str = "topolens-pipeline/1";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("item {id}: {source}")]
    Filtration { id: String, source: FiltrationError },
    #[error("item {id}: {source}")]
    Vectorize { id: String, source: VectorizeError },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: checksum mismatch")]
    ChecksumMismatch { path: String },
    #[error("missing {kind} artifact for {id}")]
    MissingArtifact { id: String, kind: String },
    #[error("project was written by {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = ProjectError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Idx,
    Dir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputConfig {
    pub path: PathBuf,
    pub format: InputFormat,
    /// IDX label file; derived from `path` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageConfig {
    pub resolution: usize,
    pub sigma: f64,
    pub mode: ImageMode,
    /// Normalize weights by the corpus-wide largest persistence instead of
    /// each diagram's own.
    pub global_scale: bool,
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self {
            resolution: 10,
            sigma: 0.01,
            mode: ImageMode::Integrate,
            global_scale: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub methods: Vec<EmbeddingMethod>,
    pub k: usize,
    pub tsne: TsneParams,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            methods: EmbeddingMethod::ALL.to_vec(),
            k: 10,
            tsne: TsneParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub input: InputConfig,
    pub per_class: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_invert")]
    pub invert: bool,
    #[serde(default)]
    pub image: ImageConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    /// Worker threads; never persisted since artifacts do not depend on it.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

fn default_seed() -> u64 {
    42
}

fn default_invert() -> bool {
    true
}

impl ProjectConfig {
    pub fn new(input: InputConfig, per_class: usize) -> Self {
        Self {
            input,
            per_class,
            seed: default_seed(),
            invert: default_invert(),
            image: ImageConfig::default(),
            embedding: EmbeddingConfig::default(),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ProjectError::InvalidConfig(m));
        if self.per_class == 0 {
            return bad("per_class must be at least 1".into());
        }
        if self.image.resolution == 0 {
            return bad("resolution must be at least 1".into());
        }
        if !(self.image.sigma > 0.0 && self.image.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.image.sigma));
        }
        if self.embedding.k == 0 {
            return bad("k must be at least 1".into());
        }
        let t = &self.embedding.tsne;
        if t.perplexity.is_nan()
            || t.perplexity <= 0.0
            || t.learning_rate.is_nan()
            || t.learning_rate <= 0.0
        {
            return bad("perplexity and learning rate must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    fn labels_path(&self) -> PathBuf {
        if let Some(p) = &self.input.labels {
            return p.clone();
        }
        let path = &self.input.path;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let derived = name
            .replace("images-idx3", "labels-idx1")
            .replace("images.idx3", "labels.idx1");
        path.with_file_name(derived)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub pipeline_version: String,
    pub item_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageConfig>,
    /// Weight normalizer used when `image.global_scale` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_scale_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding_methods: Vec<EmbeddingMethod>,
    /// Relative path to lowercase hex SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    fn new(item_count: usize) -> Self {
        Self {
            pipeline_version: PIPELINE_VERSION.to_string(),
            item_count,
            image: None,
            global_scale_value: None,
            embedding_methods: Vec::new(),
            artifacts: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSet {
    pub item_id: String,
    pub cycles: Vec<PersistenceCycle>,
}

/// A fully loaded project, cross-indexed by item id.
#[derive(Debug, Clone)]
pub struct Project {
    pub config: ProjectConfig,
    pub manifest: Manifest,
    pub items: Vec<LabeledRaster>,
    pub diagrams: Vec<PersistenceDiagram>,
    pub cycles: Vec<Vec<PersistenceCycle>>,
    pub images: Vec<PersistenceImage>,
    pub distances: DistanceMatrix,
    pub embeddings: Vec<Embedding>,
    index: HashMap<String, usize>,
}

impl Project {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn embedding(&self, method: EmbeddingMethod) -> Option<&Embedding> {
        self.embeddings.iter().find(|e| e.method == method)
    }

    pub fn global_max_persistence(&self) -> f64 {
        max_persistence(&self.diagrams)
    }
}

const CONFIG: &str = "config.json";
const ITEMS: &str = "items.json";
const DISTANCES: &str = "distances.bin";
const EMBEDDINGS: &str = "embeddings.json";
const MANIFEST: &str = "manifest.json";
const DIAGRAMS: &str = "diagrams";
const CYCLES: &str = "cycles";
const PIMAGES: &str = "pimages";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProjectError + '_ {
    move |source| ProjectError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `root/rel` atomically and returns its checksum.
fn write_atomic(root: &Path, rel: &str, bytes: &[u8]) -> Result<String> {
    let path = root.join(rel);
    let dir = path.parent().unwrap_or(root);
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(&path))?;
    tmp.as_file().sync_all().map_err(io_err(&path))?;
    tmp.persist(&path).map_err(|e| ProjectError::Io {
        path: path.clone(),
        source: e.error,
    })?;
    Ok(sha256_hex(bytes))
}

fn to_json<T: Serialize>(value: &T, pretty: bool) -> Vec<u8> {
    let mut out = if pretty {
        serde_json::to_vec_pretty(value)
    } else {
        serde_json::to_vec(value)
    }
    .expect("artifact types serialize");
    out.push(b'\n');
    out
}

fn parse_json<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|source| ProjectError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_json(path, &bytes)
}

fn item_rel(kind: &str, id: &str) -> String {
    format!("{kind}/{id}.json")
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(ProjectError::InvalidConfig(format!(
            "item id {id:?} is not a valid file name"
        )));
    }
    Ok(())
}

fn remove_if_exists(path: &Path) -> Result<()> {
    let result = if path.is_dir() {
        fs::remove_dir_all(path)
    } else {
        fs::remove_file(path)
    };
    match result {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(io_err(path)(e)),
        _ => Ok(()),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| ProjectError::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

pub fn read_config(root: &Path) -> Result<ProjectConfig> {
    read_json(&root.join(CONFIG))
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    if !path.exists() {
        return Err(ProjectError::MissingArtifact {
            id: "project".into(),
            kind: MANIFEST.into(),
        });
    }
    let manifest: Manifest = read_json(&path)?;
    if manifest.pipeline_version != PIPELINE_VERSION {
        return Err(ProjectError::VersionMismatch {
            found: manifest.pipeline_version,
            expected: PIPELINE_VERSION.into(),
        });
    }
    Ok(manifest)
}

fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    write_atomic(root, MANIFEST, &to_json(manifest, true))?;
    Ok(())
}

/// Stage 0: load and subsample the corpus, write `config.json` and
/// `items.json`. Clears any artifacts of a previous run.
pub fn ingest_corpus(cfg: &ProjectConfig, root: &Path) -> Result<Vec<LabeledRaster>> {
    cfg.validate()?;
    let all = match cfg.input.format {
        InputFormat::Idx => ingest::load_idx(&cfg.input.path, cfg.labels_path())?,
        InputFormat::Dir => ingest::load_image_dir(&cfg.input.path)?,
    };
    let items = ingest::sample_per_class(&all, cfg.per_class, cfg.seed)?;
    for item in &items {
        check_id(&item.id)?;
    }
    log::info!("ingested {} of {} items", items.len(), all.len());

    fs::create_dir_all(root).map_err(io_err(root))?;
    for stale in [DIAGRAMS, CYCLES, PIMAGES, DISTANCES, EMBEDDINGS, MANIFEST] {
        remove_if_exists(&root.join(stale))?;
    }
    let mut manifest = Manifest::new(items.len());
    manifest.artifacts.insert(
        CONFIG.into(),
        write_atomic(root, CONFIG, &to_json(cfg, true))?,
    );
    manifest.artifacts.insert(
        ITEMS.into(),
        write_atomic(root, ITEMS, &to_json(&items, false))?,
    );
    write_manifest(root, &manifest)?;
    Ok(items)
}

/// Per-item topology of one raster.
pub struct ItemArtifacts {
    pub diagram: PersistenceDiagram,
    pub cycles: Vec<PersistenceCycle>,
}

/// Filtration, reduction and representative cycles for one raster.
pub fn item_persistence(
    item: &LabeledRaster,
    complex: &Arc<SimplicialComplex>,
    invert: bool,
) -> Result<ItemArtifacts> {
    let grid = ingest::to_filtration_function(item, invert);
    let filtration =
        lower_star_filtration(complex, &grid).map_err(|source| ProjectError::Filtration {
            id: item.id.clone(),
            source,
        })?;
    let (mut diagram, cycles) = compute_persistence(&filtration, false);
    diagram.item_id = item.id.clone();
    Ok(ItemArtifacts { diagram, cycles })
}

/// Stages 1 and 2 plus the distance matrix: writes per-item diagrams, cycles
/// and persistence images, then `distances.bin`.
pub fn compute(cfg: &ProjectConfig, root: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let old = read_manifest(root)?;
    let items: Vec<LabeledRaster> = read_json(&root.join(ITEMS))?;

    let mut complexes: HashMap<(usize, usize), Arc<SimplicialComplex>> = HashMap::new();
    for item in &items {
        if let std::collections::hash_map::Entry::Vacant(slot) =
            complexes.entry((item.width, item.height))
        {
            let complex = build_complex(item.width, item.height).map_err(|source| {
                ProjectError::Filtration {
                    id: item.id.clone(),
                    source,
                }
            })?;
            slot.insert(Arc::new(complex));
        }
    }

    let invert = cfg.invert;
    let topology: Vec<ItemArtifacts> = with_threads(cfg.threads, || {
        items
            .par_iter()
            .map(|item| item_persistence(item, &complexes[&(item.width, item.height)], invert))
            .collect::<Result<Vec<_>>>()
    })??;

    let diagrams: Vec<&PersistenceDiagram> = topology.iter().map(|t| &t.diagram).collect();
    let global = max_persistence(diagrams.iter().copied());
    let scale = if cfg.image.global_scale {
        if global > 0.0 {
            WeightScale::Global(global)
        } else {
            WeightScale::PerDiagram
        }
    } else {
        WeightScale::PerDiagram
    };
    let params = ImageParams {
        resolution: cfg.image.resolution,
        sigma: cfg.image.sigma,
        mode: cfg.image.mode,
        scale,
    };
    let images: Vec<PersistenceImage> = with_threads(cfg.threads, || {
        diagrams
            .par_iter()
            .map(|d| {
                persistence_image(d, &params).map_err(|source| ProjectError::Vectorize {
                    id: d.item_id.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let dist = with_threads(cfg.threads, || distance_matrix(&images))??;

    for stale in [DIAGRAMS, CYCLES, PIMAGES, EMBEDDINGS] {
        remove_if_exists(&root.join(stale))?;
    }
    let mut manifest = Manifest::new(items.len());
    manifest.image = Some(cfg.image.clone());
    if let WeightScale::Global(b) = scale {
        manifest.global_scale_value = Some(b);
    }
    for key in [CONFIG, ITEMS] {
        if let Some(sum) = old.artifacts.get(key) {
            manifest.artifacts.insert(key.into(), sum.clone());
        }
    }
    manifest.artifacts.insert(
        CONFIG.into(),
        write_atomic(root, CONFIG, &to_json(cfg, true))?,
    );

    for (t, image) in topology.iter().zip(&images) {
        let id = &t.diagram.item_id;
        let rel = item_rel(DIAGRAMS, id);
        manifest.artifacts.insert(
            rel.clone(),
            write_atomic(root, &rel, &to_json(&t.diagram, false))?,
        );
        let set = CycleSet {
            item_id: id.clone(),
            cycles: t.cycles.clone(),
        };
        let rel = item_rel(CYCLES, id);
        manifest.artifacts.insert(
            rel.clone(),
            write_atomic(root, &rel, &to_json(&set, false))?,
        );
        let rel = item_rel(PIMAGES, id);
        manifest.artifacts.insert(
            rel.clone(),
            write_atomic(root, &rel, &to_json(image, false))?,
        );
    }
    let bytes = encode_distances(&dist);
    manifest
        .artifacts
        .insert(DISTANCES.into(), write_atomic(root, DISTANCES, &bytes)?);
    write_manifest(root, &manifest)?;
    log::info!("computed artifacts for {} items", items.len());
    Ok(manifest)
}

pub fn encode_distances(dist: &DistanceMatrix) -> Vec<u8> {
    dist.as_slice()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect()
}

pub fn decode_distances(item_ids: Vec<String>, bytes: &[u8]) -> Result<DistanceMatrix> {
    let n = item_ids.len();
    if bytes.len() != 8 * n * n {
        return Err(ProjectError::InvalidConfig(format!(
            "{DISTANCES} holds {} bytes, expected {}",
            bytes.len(),
            8 * n * n
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DistanceMatrix::from_row_major(item_ids, values)?)
}

/// Stage 3: embeddings of the stored distance matrix.
pub fn embed(cfg: &ProjectConfig, root: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let mut manifest = read_manifest(root)?;
    let items: Vec<LabeledRaster> = read_json(&root.join(ITEMS))?;
    if !manifest.artifacts.contains_key(DISTANCES) {
        return Err(ProjectError::MissingArtifact {
            id: "project".into(),
            kind: DISTANCES.into(),
        });
    }
    let path = root.join(DISTANCES);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let dist = decode_distances(items.iter().map(|i| i.id.clone()).collect(), &bytes)?;

    let mut methods = cfg.embedding.methods.clone();
    methods.sort();
    methods.dedup();
    let embeddings = with_threads(cfg.threads, || {
        methods
            .iter()
            .map(|m| {
                log::info!("embedding with {m}");
                match m {
                    EmbeddingMethod::Mds => classical_mds(&dist),
                    EmbeddingMethod::Isomap => isomap(&dist, cfg.embedding.k),
                    EmbeddingMethod::Tsne => tsne(&dist, &cfg.embedding.tsne),
                }
            })
            .collect::<Result<Vec<_>, _>>()
    })??;

    manifest.artifacts.insert(
        CONFIG.into(),
        write_atomic(root, CONFIG, &to_json(cfg, true))?,
    );
    manifest.embedding_methods = methods;
    manifest.artifacts.insert(
        EMBEDDINGS.into(),
        write_atomic(root, EMBEDDINGS, &to_json(&embeddings, false))?,
    );
    write_manifest(root, &manifest)?;
    Ok(manifest)
}

/// Runs ingest, compute and embed into `root`.
pub fn run_pipeline(cfg: &ProjectConfig, root: &Path) -> Result<Manifest> {
    ingest_corpus(cfg, root)?;
    compute(cfg, root)?;
    embed(cfg, root)
}

fn artifact_kind(rel: &str) -> (String, String) {
    match rel.split_once('/') {
        Some((kind, file)) => (file.trim_end_matches(".json").to_string(), kind.to_string()),
        None => ("project".to_string(), rel.to_string()),
    }
}

/// Reads and checksum-verifies every artifact listed in the manifest.
pub fn load_project(root: &Path) -> Result<Project> {
    let manifest = read_manifest(root)?;
    let mut files: HashMap<&str, Vec<u8>> = HashMap::new();
    for (rel, sum) in &manifest.artifacts {
        let path = root.join(rel);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let (id, kind) = artifact_kind(rel);
                return Err(ProjectError::MissingArtifact { id, kind });
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        if &sha256_hex(&bytes) != sum {
            return Err(ProjectError::ChecksumMismatch { path: rel.clone() });
        }
        files.insert(rel.as_str(), bytes);
    }

    let mut take = |rel: &str, id: &str, kind: &str| {
        files
            .remove(rel)
            .ok_or_else(|| ProjectError::MissingArtifact {
                id: id.to_string(),
                kind: kind.to_string(),
            })
    };
    let config: ProjectConfig = parse_json(&root.join(CONFIG), &take(CONFIG, "project", CONFIG)?)?;
    let items: Vec<LabeledRaster> = parse_json(&root.join(ITEMS), &take(ITEMS, "project", ITEMS)?)?;

    let mut diagrams = Vec::with_capacity(items.len());
    let mut cycles = Vec::with_capacity(items.len());
    let mut images = Vec::with_capacity(items.len());
    for item in &items {
        let rel = item_rel(DIAGRAMS, &item.id);
        diagrams.push(parse_json::<PersistenceDiagram>(
            &root.join(&rel),
            &take(&rel, &item.id, DIAGRAMS)?,
        )?);
        let rel = item_rel(CYCLES, &item.id);
        cycles
            .push(parse_json::<CycleSet>(&root.join(&rel), &take(&rel, &item.id, CYCLES)?)?.cycles);
        let rel = item_rel(PIMAGES, &item.id);
        images.push(parse_json::<PersistenceImage>(
            &root.join(&rel),
            &take(&rel, &item.id, PIMAGES)?,
        )?);
    }
    let distances = decode_distances(
        items.iter().map(|i| i.id.clone()).collect(),
        &take(DISTANCES, "project", DISTANCES)?,
    )?;
    let embeddings: Vec<Embedding> = match files.remove(EMBEDDINGS) {
        Some(bytes) => parse_json(&root.join(EMBEDDINGS), &bytes)?,
        None => Vec::new(),
    };
    let index = items
        .iter()
        .enumerate()
        .map(|(i, item)| (item.id.clone(), i))
        .collect();
    Ok(Project {
        config,
        manifest,
        items,
        diagrams,
        cycles,
        images,
        distances,
        embeddings,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_corpus(dir: &Path) {
        // two labels, three rasters each: rings (one loop) and bars (none)
        for i in 0..3u8 {
            let mut ring = image::GrayImage::new(6, 6);
            for (x, y, p) in ring.enumerate_pixels_mut() {
                let edge = (1..=4).contains(&x)
                    && (1..=4).contains(&y)
                    && !((2..=3).contains(&x) && (2..=3).contains(&y));
                *p = image::Luma([if edge { 200 + 10 * i } else { 0 }]);
            }
            ring.save(dir.join(format!("0_{i}.png"))).unwrap();
            let mut bar = image::GrayImage::new(6, 6);
            for (x, _, p) in bar.enumerate_pixels_mut() {
                *p = image::Luma([if x == 2 + (i as u32 % 2) { 255 } else { 10 * i }]);
            }
            bar.save(dir.join(format!("1_{i}.png"))).unwrap();
        }
    }

    fn toy_config(input: &Path) -> ProjectConfig {
        let mut cfg = ProjectConfig::new(
            InputConfig {
                path: input.to_path_buf(),
                format: InputFormat::Dir,
                labels: None,
            },
            2,
        );
        cfg.embedding.k = 2;
        cfg.embedding.tsne.perplexity = 1.0;
        cfg.embedding.tsne.iterations = 100;
        cfg
    }

    #[test]
    fn pipeline_round_trip() {
        let input = tempfile::tempdir().unwrap();
        toy_corpus(input.path());
        let out = tempfile::tempdir().unwrap();
        let cfg = toy_config(input.path());
        let manifest = run_pipeline(&cfg, out.path()).unwrap();
        assert_eq!(manifest.item_count, 4);
        assert_eq!(
            fs::metadata(out.path().join(DISTANCES)).unwrap().len(),
            8 * 16
        );

        let project = load_project(out.path()).unwrap();
        assert_eq!(project.len(), 4);
        assert_eq!(project.embeddings.len(), 3);
        let ring = project.position("0_0").or(project.position("0_1")).unwrap();
        assert_eq!(project.diagrams[ring].pairs_of_dim(1).count(), 1);
        assert_eq!(project.cycles[ring].len(), 1);

        // in-memory recomputation equals what was stored
        let complex = Arc::new(build_complex(6, 6).unwrap());
        for (i, item) in project.items.iter().enumerate() {
            let fresh = item_persistence(item, &complex, true).unwrap();
            assert_eq!(fresh.diagram, project.diagrams[i]);
            assert_eq!(fresh.cycles, project.cycles[i]);
        }

        let again = tempfile::tempdir().unwrap();
        let mut single = cfg.clone();
        single.threads = Some(1);
        assert_eq!(
            run_pipeline(&single, again.path()).unwrap().artifacts,
            manifest.artifacts
        );
    }

    #[test]
    fn load_detects_damage() {
        let input = tempfile::tempdir().unwrap();
        toy_corpus(input.path());
        let out = tempfile::tempdir().unwrap();
        run_pipeline(&toy_config(input.path()), out.path()).unwrap();
        let project = load_project(out.path()).unwrap();
        let victim = project.items[0].id.clone();

        let dist = out.path().join(DISTANCES);
        let mut bytes = fs::read(&dist).unwrap();
        bytes[9] ^= 1;
        fs::write(&dist, &bytes).unwrap();
        assert!(matches!(
            load_project(out.path()),
            Err(ProjectError::ChecksumMismatch { path }) if path == DISTANCES
        ));
        bytes[9] ^= 1;
        fs::write(&dist, &bytes).unwrap();

        fs::remove_file(out.path().join(item_rel(PIMAGES, &victim))).unwrap();
        match load_project(out.path()) {
            Err(ProjectError::MissingArtifact { id, kind }) => {
                assert_eq!((id.as_str(), kind.as_str()), (victim.as_str(), PIMAGES));
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut manifest = read_manifest(out.path()).unwrap();
        manifest.pipeline_version = "topolens-pipeline/0".into();
        fs::write(out.path().join(MANIFEST), to_json(&manifest, true)).unwrap();
        assert!(matches!(
            load_project(out.path()),
            Err(ProjectError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn labels_path_follows_idx_naming() {
        let cfg = ProjectConfig::new(
            InputConfig {
                path: "data/mnist5k-images-idx3-ubyte.gz".into(),
                format: InputFormat::Idx,
                labels: None,
            },
            1,
        );
        assert_eq!(
            cfg.labels_path(),
            PathBuf::from("data/mnist5k-labels-idx1-ubyte.gz")
        );
    }

    #[test]
    fn config_validation_and_threads_not_persisted() {
        let mut cfg = toy_config(Path::new("x"));
        cfg.threads = Some(3);
        let text = String::from_utf8(to_json(&cfg, true)).unwrap();
        assert!(!text.contains("threads"));
        let back: ProjectConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.threads, None);
        cfg.per_class = 0;
        assert!(cfg.validate().is_err());
    }
}
