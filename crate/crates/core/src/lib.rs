//! Unsupervised translation between text-embedding vector spaces.
//!
//! Given two bags of embeddings produced by different (unknown) encoders on
//! different documents, this crate learns a translator between the two spaces
//! with no paired data: space-specific adapters around a shared residual
//! backbone, trained with adversarial losses at the embedding and latent
//! levels plus reconstruction, cycle-consistency, and vector-space-preservation
//! terms. Optimal-transport baselines (Hungarian, EMD, Sinkhorn,
//! Gromov-Wasserstein) and retrieval-style metrics (mean cosine, top-1
//! accuracy, mean rank) are included for evaluation, along with a synthetic
//! world generator that makes end-to-end verification possible at desk scale.
//!
//! All training arithmetic is in `f64`; file formats store `f32`.

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod numerics;
pub mod trainer;
pub mod translator;

pub use baselines::{Assignment, TransportPlan};
pub use data::{EmbeddingSet, SetMeta, SyntheticWorld, WorldConfig};
pub use error::{Error, Result};
pub use evaluation::{AttributeTask, EvalReport};
pub use losses::{GanFlavor, GanSide, LossBreakdown, LossWeights, VspOptions};
pub use numerics::{Matrix, Parameter, RngSeed};
pub use trainer::{AblationFlags, TrainConfig, TrainOutcome};
pub use translator::{DiscriminatorSet, NetConfig, TranslatorNet};
