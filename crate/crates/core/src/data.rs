//! Embedding-set persistence and the synthetic world generator.
//!
//! File format `EMB1` (little-endian): magic `EMB1`, version byte, u32 row
//! count, u32 dimension, flags byte (bit 0 = normalized), then n·d f32 values
//! row-major, then a JSON trailer `{"ids": [...], "meta": {...}}` running to
//! the end of the file. Writes go through a temp file and rename, so readers
//! never observe partial files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, silu, Matrix, RngSeed};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
const EMB_VERSION: u8 = 1;
const FLAG_NORMALIZED: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMeta {
    pub source: String,
    pub dim: usize,
    pub normalized: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A bag of fixed-dimension vectors with per-row document identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: Matrix,
    pub ids: Vec<String>,
    pub meta: SetMeta,
}

impl EmbeddingSet {
    pub fn new(vectors: Matrix, ids: Vec<String>, meta: SetMeta) -> Result<Self> {
        let set = EmbeddingSet { vectors, ids, meta };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.vectors.rows() {
            return Err(Error::dim("EmbeddingSet ids", self.vectors.rows(), self.ids.len()));
        }
        if self.meta.dim != self.vectors.cols() {
            return Err(Error::dim("EmbeddingSet meta.dim", self.vectors.cols(), self.meta.dim));
        }
        let mut sorted = self.ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("duplicate ids in embedding set".into()));
        }
        self.vectors.check_finite("EmbeddingSet vectors")?;
        if self.meta.normalized {
            for i in 0..self.vectors.rows() {
                let norm = l2_norm(self.vectors.row(i));
                if norm > 0.0 && (norm - 1.0).abs() > 1e-5 {
                    return Err(Error::Domain(format!(
                        "set flagged normalized but row {i} has norm {norm}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Unit-L2 rows. Zero rows are left as zero; their count is returned.
    pub fn normalize_rows(&self) -> (EmbeddingSet, usize) {
        let mut vectors = self.vectors.clone();
        let zero_rows = vectors.normalize_rows_in_place(1e-12);
        let mut meta = self.meta.clone();
        meta.normalized = true;
        (
            EmbeddingSet {
                vectors,
                ids: self.ids.clone(),
                meta,
            },
            zero_rows,
        )
    }

    /// New set holding the given rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> EmbeddingSet {
        EmbeddingSet {
            vectors: self.vectors.gather_rows(idx),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            meta: self.meta.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Trailer {
    ids: Vec<String>,
    meta: SetMeta,
}

pub fn save(set: &EmbeddingSet, path: &Path) -> Result<()> {
    set.validate()?;
    let tmp = path.with_extension("emb.tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let werr = |e| Error::io(path, e);
        w.write_all(EMB_MAGIC).map_err(werr)?;
        w.write_all(&[EMB_VERSION]).map_err(werr)?;
        w.write_all(&(set.len() as u32).to_le_bytes()).map_err(werr)?;
        w.write_all(&(set.dim() as u32).to_le_bytes()).map_err(werr)?;
        let flags = if set.meta.normalized { FLAG_NORMALIZED } else { 0 };
        w.write_all(&[flags]).map_err(werr)?;
        for v in set.vectors.to_f32() {
            w.write_all(&v.to_le_bytes()).map_err(werr)?;
        }
        let trailer = Trailer {
            ids: set.ids.clone(),
            meta: set.meta.clone(),
        };
        let json = serde_json::to_vec(&trailer)?;
        w.write_all(&json).map_err(werr)?;
        w.flush().map_err(werr)?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<EmbeddingSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut offset: u64 = 0;
    let mut read_exact = |r: &mut BufReader<File>, buf: &mut [u8], what: &str| -> Result<()> {
        match r.read_exact(buf) {
            Ok(()) => {
                offset += buf.len() as u64;
                Ok(())
            }
            Err(e) => Err(Error::Parse {
                path: path.to_path_buf(),
                offset,
                message: format!("truncated while reading {what}: {e}"),
            }),
        }
    };

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != EMB_MAGIC {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("bad magic {magic:?}, expected {EMB_MAGIC:?}"),
        });
    }
    let mut version = [0u8; 1];
    read_exact(&mut r, &mut version, "version")?;
    if version[0] != EMB_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 4,
            message: format!("unsupported version {}", version[0]),
        });
    }
    let mut u32buf = [0u8; 4];
    read_exact(&mut r, &mut u32buf, "row count")?;
    let n = u32::from_le_bytes(u32buf) as usize;
    read_exact(&mut r, &mut u32buf, "dimension")?;
    let d = u32::from_le_bytes(u32buf) as usize;
    let mut flags = [0u8; 1];
    read_exact(&mut r, &mut flags, "flags")?;

    let mut payload = vec![0u8; n * d * 4];
    read_exact(&mut r, &mut payload, "vector payload")?;
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let vectors = Matrix::from_f32(n, d, &values)?;

    let mut trailer_bytes = Vec::new();
    r.read_to_end(&mut trailer_bytes)
        .map_err(|e| Error::io(path, e))?;
    let trailer: Trailer = serde_json::from_slice(&trailer_bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset,
        message: format!("bad json trailer: {e}"),
    })?;
    if trailer.meta.normalized != (flags[0] & FLAG_NORMALIZED != 0) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset,
            message: "normalized flag disagrees between header and trailer".into(),
        });
    }

    EmbeddingSet::new(vectors, trailer.ids, trailer.meta)
}

/// How the frozen synthetic encoders distort the latent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// Orthogonal map → SiLU → orthogonal map.
    Nonlinear,
    /// Orthogonal maps only; the easiest sanity tier.
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub latent_dim: usize,
    pub d1: usize,
    pub d2: usize,
    pub n_train_u: usize,
    pub n_train_v: usize,
    pub n_eval: usize,
    /// Number of latent clusters. Zero draws isotropic latents, which leaves
    /// the pairing unidentifiable; keep clusters on for matching experiments.
    #[serde(default = "default_clusters")]
    pub latent_clusters: usize,
    #[serde(default = "default_spread")]
    pub cluster_spread: f64,
    /// Cluster masses follow 1/(k+1)^exponent; 0 gives uniform clusters.
    /// Distinct masses anchor the cluster correspondence across spaces.
    #[serde(default = "default_weight_exponent")]
    pub cluster_weight_exponent: f64,
    /// Latent axes carrying full within-cluster variation; the rest get a
    /// small residual scale. Zero means all axes vary fully.
    #[serde(default)]
    pub cluster_noise_dims: usize,
    #[serde(default = "default_map_kind")]
    pub map_kind: MapKind,
    /// Use the same encoder for both spaces (requires d1 == d2).
    #[serde(default)]
    pub shared_maps: bool,
}

fn default_clusters() -> usize {
    32
}

fn default_spread() -> f64 {
    0.35
}

fn default_weight_exponent() -> f64 {
    1.0
}

fn default_map_kind() -> MapKind {
    MapKind::Nonlinear
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::Config("world dimensions must be >= 1".into()));
        }
        if self.latent_dim > self.d1.min(self.d2) {
            return Err(Error::Config(format!(
                "latent_dim {} exceeds min(d1, d2) = {}",
                self.latent_dim,
                self.d1.min(self.d2)
            )));
        }
        if self.n_train_u == 0 || self.n_train_v == 0 || self.n_eval == 0 {
            return Err(Error::Config("world sizes must be >= 1".into()));
        }
        if self.shared_maps && self.d1 != self.d2 {
            return Err(Error::Config("shared_maps requires d1 == d2".into()));
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread > 0.0) {
            return Err(Error::Config("cluster_spread must be > 0".into()));
        }
        Ok(())
    }
}

/// One frozen synthetic encoder: z ↦ normalize(act(z·embed)·rotate).
#[derive(Debug, Clone)]
pub struct SyntheticMap {
    embed: Matrix,
    rotate: Matrix,
    kind: MapKind,
}

impl SyntheticMap {
    pub fn apply(&self, latents: &Matrix) -> Matrix {
        let pre = latents.matmul(&self.embed);
        let hidden = match self.kind {
            MapKind::Nonlinear => silu(&pre),
            MapKind::Orthogonal => pre,
        };
        let mut out = hidden.matmul(&self.rotate);
        out.normalize_rows_in_place(1e-12);
        out
    }
}

/// Two unpaired training sets, a paired evaluation set from shared latents,
/// and (when clusters are on) attribute embeddings with per-document labels.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub seed: u64,
    pub map1: SyntheticMap,
    pub map2: SyntheticMap,
    pub train_u: EmbeddingSet,
    pub train_v: EmbeddingSet,
    pub eval_u: EmbeddingSet,
    pub eval_v: EmbeddingSet,
    /// Cluster label per evaluation row; empty when latent_clusters == 0.
    pub eval_labels: Vec<usize>,
    pub attr_space1: Option<EmbeddingSet>,
    pub attr_space2: Option<EmbeddingSet>,
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.sample(StandardNormal);
    }
    m
}

/// Random orthogonal matrix via modified Gram-Schmidt on a gaussian draw.
fn random_orthogonal(d: usize, rng: &mut ChaCha12Rng) -> Matrix {
    let mut q = standard_normal_matrix(d, d, rng);
    for i in 0..d {
        loop {
            for j in 0..i {
                let proj = crate::numerics::dot(q.row(i), q.row(j));
                let prev = q.row(j).to_vec();
                let row = q.row_mut(i);
                for (a, b) in row.iter_mut().zip(&prev) {
                    *a -= proj * b;
                }
            }
            let norm = l2_norm(q.row(i));
            if norm > 1e-8 {
                for v in q.row_mut(i) {
                    *v /= norm;
                }
                break;
            }
            // Degenerate draw; replace the row and retry.
            for v in q.row_mut(i) {
                *v = rng.sample(StandardNormal);
            }
        }
    }
    q
}

fn random_map(latent_dim: usize, d: usize, kind: MapKind, rng: &mut ChaCha12Rng) -> SyntheticMap {
    let embed_full = random_orthogonal(d, rng);
    let rows: Vec<usize> = (0..latent_dim).collect();
    let embed = embed_full.gather_rows(&rows);
    let rotate = random_orthogonal(d, rng);
    SyntheticMap { embed, rotate, kind }
}

struct LatentSampler {
    centers: Option<Matrix>,
    cumulative_weights: Vec<f64>,
    axis_scales: Vec<f64>,
    spread: f64,
    latent_dim: usize,
}

impl LatentSampler {
    fn new(config: &WorldConfig, rng: &mut ChaCha12Rng) -> Self {
        let centers = (config.latent_clusters > 0)
            .then(|| standard_normal_matrix(config.latent_clusters, config.latent_dim, rng));
        let mut cumulative_weights = Vec::new();
        if config.latent_clusters > 0 {
            let raw: Vec<f64> = (0..config.latent_clusters)
                .map(|k| 1.0 / ((k + 1) as f64).powf(config.cluster_weight_exponent))
                .collect();
            let total: f64 = raw.iter().sum();
            let mut acc = 0.0;
            for w in raw {
                acc += w / total;
                cumulative_weights.push(acc);
            }
        }
        // Anisotropic within-cluster noise so local neighborhoods carry
        // orientation information. With cluster_noise_dims set, variation
        // concentrates on that many axes.
        let live = if config.cluster_noise_dims == 0 {
            config.latent_dim
        } else {
            config.cluster_noise_dims.min(config.latent_dim)
        };
        let axis_scales = (0..config.latent_dim)
            .map(|j| {
                let scale = rng.random_range(0.5..1.0);
                if j < live {
                    scale
                } else {
                    0.05 * scale
                }
            })
            .collect();
        LatentSampler {
            centers,
            cumulative_weights,
            axis_scales,
            spread: config.cluster_spread,
            latent_dim: config.latent_dim,
        }
    }

    /// Draws `n` latents; returns the cluster label per row when clustered.
    fn draw(&self, n: usize, rng: &mut ChaCha12Rng) -> (Matrix, Vec<usize>) {
        let mut z = Matrix::zeros(n, self.latent_dim);
        let mut labels = Vec::new();
        for i in 0..n {
            match &self.centers {
                Some(centers) => {
                    let r: f64 = rng.random_range(0.0..1.0);
                    let k = self
                        .cumulative_weights
                        .iter()
                        .position(|&c| r < c)
                        .unwrap_or(centers.rows() - 1);
                    labels.push(k);
                    let row = z.row_mut(i);
                    for (j, v) in row.iter_mut().enumerate() {
                        let eps: f64 = rng.sample(StandardNormal);
                        *v = centers.get(k, j) + self.spread * self.axis_scales[j] * eps;
                    }
                }
                None => {
                    for v in z.row_mut(i) {
                        *v = rng.sample(StandardNormal);
                    }
                }
            }
        }
        (z, labels)
    }
}

fn make_set(vectors: Matrix, prefix: &str, source: &str, seed: u64) -> EmbeddingSet {
    let n = vectors.rows();
    let dim = vectors.cols();
    EmbeddingSet {
        vectors,
        ids: (0..n).map(|i| format!("{prefix}_{i}")).collect(),
        meta: SetMeta {
            source: source.to_string(),
            dim,
            normalized: true,
            seed: Some(seed),
        },
    }
}

/// Deterministic per seed. Training latents for the two sides are disjoint
/// draws; evaluation pairs share latents row-wise.
pub fn generate_synthetic_world(config: &WorldConfig, seed: RngSeed) -> Result<SyntheticWorld> {
    config.validate()?;
    let mut map_rng = ChaCha12Rng::seed_from_u64(seed.derive("world.maps").0);
    let map1 = random_map(config.latent_dim, config.d1, config.map_kind, &mut map_rng);
    let map2 = if config.shared_maps {
        map1.clone()
    } else {
        random_map(config.latent_dim, config.d2, config.map_kind, &mut map_rng)
    };

    let mut latent_rng = ChaCha12Rng::seed_from_u64(seed.derive("world.latents").0);
    let sampler = LatentSampler::new(config, &mut latent_rng);
    let (z_train_u, _) = sampler.draw(config.n_train_u, &mut latent_rng);
    let (z_train_v, _) = sampler.draw(config.n_train_v, &mut latent_rng);
    let (z_eval, eval_labels) = sampler.draw(config.n_eval, &mut latent_rng);

    let train_u = make_set(map1.apply(&z_train_u), "u_train", "synthetic.m1", seed.0);
    let train_v = make_set(map2.apply(&z_train_v), "v_train", "synthetic.m2", seed.0);
    let eval_u = make_set(map1.apply(&z_eval), "eval", "synthetic.m1", seed.0);
    let eval_v = make_set(map2.apply(&z_eval), "eval", "synthetic.m2", seed.0);

    let (attr_space1, attr_space2) = match &sampler.centers {
        Some(centers) => (
            Some(make_set(map1.apply(centers), "attr", "synthetic.m1.attrs", seed.0)),
            Some(make_set(map2.apply(centers), "attr", "synthetic.m2.attrs", seed.0)),
        ),
        None => (None, None),
    };

    Ok(SyntheticWorld {
        config: config.clone(),
        seed: seed.0,
        map1,
        map2,
        train_u,
        train_v,
        eval_u,
        eval_v,
        eval_labels,
        attr_space1,
        attr_space2,
    })
}
