//! The translator network family: space-specific adapters around a shared
//! residual backbone, plus the four discriminators.
//!
//! Translation and reconstruction are compositions through the shared latent:
//! `translate_1to2 = B2 ∘ T ∘ A1`, `translate_2to1 = B1 ∘ T ∘ A2`,
//! `reconstruct_1 = B1 ∘ T ∘ A1`, `reconstruct_2 = B2 ∘ T ∘ A2`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    normalize_rows_backward, normalize_rows_cached, Matrix, Mlp, MlpCache, ParamModel, Parameter,
    ResidualBlock, RngSeed, RowNormCache,
};

/// Shapes and sizes of one translator + discriminator family.
///
/// `d1` and `d2` may differ. `adapter_depth` / `disc_depth` count hidden
/// blocks; zero means a single linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub d1: usize,
    pub d2: usize,
    pub latent_dim: usize,
    pub adapter_depth: usize,
    pub adapter_width: usize,
    pub backbone_blocks: usize,
    pub disc_depth: usize,
    pub disc_width: usize,
    pub normalize_output: bool,
}

impl NetConfig {
    /// Default sizes for a pair of `d1`/`d2`-dimensional spaces.
    pub fn new(d1: usize, d2: usize) -> Self {
        NetConfig {
            d1,
            d2,
            latent_dim: 256,
            adapter_depth: 1,
            adapter_width: 512,
            backbone_blocks: 3,
            disc_depth: 3,
            disc_width: 512,
            normalize_output: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d1", self.d1),
            ("d2", self.d2),
            ("latent_dim", self.latent_dim),
            ("adapter_width", self.adapter_width),
            ("disc_width", self.disc_width),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Which embedding space a batch belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    One,
    Two,
}

/// Translator parameters: input adapters A1/A2, shared backbone T, output
/// adapters B1/B2.
#[derive(Debug, Clone)]
pub struct TranslatorNet {
    pub config: NetConfig,
    a1: Mlp,
    a2: Mlp,
    backbone: Vec<ResidualBlock>,
    b1: Mlp,
    b2: Mlp,
}

pub(crate) struct LatentPass {
    adapter: MlpCache,
    blocks: Vec<MlpCache>,
}

pub(crate) struct OutputPass {
    adapter: MlpCache,
    norm: Option<RowNormCache>,
}

impl TranslatorNet {
    pub fn init(config: &NetConfig, seed: RngSeed) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed.derive("translator").0);
        let c = config;
        let a1 = Mlp::feedforward("a1", c.d1, c.adapter_width, c.adapter_depth, c.latent_dim, &mut rng);
        let a2 = Mlp::feedforward("a2", c.d2, c.adapter_width, c.adapter_depth, c.latent_dim, &mut rng);
        let backbone = (0..c.backbone_blocks)
            .map(|i| ResidualBlock::new(&format!("t{i}"), c.latent_dim, &mut rng))
            .collect();
        let b1 = Mlp::feedforward("b1", c.latent_dim, c.adapter_width, c.adapter_depth, c.d1, &mut rng);
        let b2 = Mlp::feedforward("b2", c.latent_dim, c.adapter_width, c.adapter_depth, c.d2, &mut rng);
        Ok(TranslatorNet {
            config: config.clone(),
            a1,
            a2,
            backbone,
            b1,
            b2,
        })
    }

    /// All parameters set to zero; used by tests and by the checkpoint loader.
    pub fn zeroed(config: &NetConfig) -> Result<Self> {
        let mut net = Self::init(config, RngSeed(0))?;
        for p in net.params_mut() {
            p.value.fill(0.0);
        }
        Ok(net)
    }

    pub fn input_dim(&self, side: Side) -> usize {
        match side {
            Side::One => self.config.d1,
            Side::Two => self.config.d2,
        }
    }

    fn check_width(&self, side: Side, x: &Matrix, context: &'static str) -> Result<()> {
        let want = self.input_dim(side);
        if x.cols() != want {
            return Err(Error::dim(context, want, x.cols()));
        }
        Ok(())
    }

    fn adapter_in(&self, side: Side) -> &Mlp {
        match side {
            Side::One => &self.a1,
            Side::Two => &self.a2,
        }
    }

    fn adapter_out(&self, side: Side) -> &Mlp {
        match side {
            Side::One => &self.b1,
            Side::Two => &self.b2,
        }
    }

    fn latent(&self, side: Side, x: &Matrix) -> Result<Matrix> {
        let mut cur = self.adapter_in(side).forward(x)?;
        for block in &self.backbone {
            cur = block.forward(&cur)?;
        }
        Ok(cur)
    }

    fn output(&self, side: Side, latent: &Matrix, normalize: bool) -> Result<Matrix> {
        let mut out = self.adapter_out(side).forward(latent)?;
        if normalize {
            out.normalize_rows_in_place(crate::numerics::ROW_NORM_EPS);
        }
        Ok(out)
    }

    /// Shared latent of a space-1 batch: T(A1(u)), shape n×Z.
    pub fn latent_1(&self, u: &Matrix) -> Result<Matrix> {
        self.check_width(Side::One, u, "latent_1")?;
        self.latent(Side::One, u)
    }

    /// Shared latent of a space-2 batch: T(A2(v)).
    pub fn latent_2(&self, v: &Matrix) -> Result<Matrix> {
        self.check_width(Side::Two, v, "latent_2")?;
        self.latent(Side::Two, v)
    }

    /// F1 = B2 ∘ T ∘ A1; rows unit-normalized when `normalize_output` is set.
    pub fn translate_1to2(&self, u: &Matrix) -> Result<Matrix> {
        self.check_width(Side::One, u, "translate_1to2")?;
        let l = self.latent(Side::One, u)?;
        self.output(Side::Two, &l, self.config.normalize_output)
    }

    /// F2 = B1 ∘ T ∘ A2.
    pub fn translate_2to1(&self, v: &Matrix) -> Result<Matrix> {
        self.check_width(Side::Two, v, "translate_2to1")?;
        let l = self.latent(Side::Two, v)?;
        self.output(Side::One, &l, self.config.normalize_output)
    }

    /// R1 = B1 ∘ T ∘ A1.
    pub fn reconstruct_1(&self, u: &Matrix) -> Result<Matrix> {
        self.check_width(Side::One, u, "reconstruct_1")?;
        let l = self.latent(Side::One, u)?;
        self.output(Side::One, &l, self.config.normalize_output)
    }

    /// R2 = B2 ∘ T ∘ A2.
    pub fn reconstruct_2(&self, v: &Matrix) -> Result<Matrix> {
        self.check_width(Side::Two, v, "reconstruct_2")?;
        let l = self.latent(Side::Two, v)?;
        self.output(Side::Two, &l, self.config.normalize_output)
    }

    /// F1 without output normalization, for losses defined on raw outputs.
    pub(crate) fn translate_1to2_raw(&self, u: &Matrix) -> Result<Matrix> {
        self.check_width(Side::One, u, "translate_1to2")?;
        let l = self.latent(Side::One, u)?;
        self.output(Side::Two, &l, false)
    }

    pub(crate) fn translate_2to1_raw(&self, v: &Matrix) -> Result<Matrix> {
        self.check_width(Side::Two, v, "translate_2to1")?;
        let l = self.latent(Side::Two, v)?;
        self.output(Side::One, &l, false)
    }

    // Cached passes for training. Gradients accumulate into the parameters on
    // the corresponding backward calls; caches are per-invocation so shared
    // components may appear in several paths of one step.

    pub(crate) fn latent_fwd(&self, side: Side, x: &Matrix) -> Result<(Matrix, LatentPass)> {
        self.check_width(side, x, "latent forward")?;
        let (mut cur, adapter) = self.adapter_in(side).forward_cached(x)?;
        let mut blocks = Vec::with_capacity(self.backbone.len());
        for block in &self.backbone {
            let (next, cache) = block.forward_cached(&cur)?;
            blocks.push(cache);
            cur = next;
        }
        Ok((cur, LatentPass { adapter, blocks }))
    }

    pub(crate) fn latent_bwd(&mut self, side: Side, pass: &LatentPass, upstream: &Matrix) -> Matrix {
        let mut up = upstream.clone();
        for (block, cache) in self.backbone.iter_mut().zip(&pass.blocks).rev() {
            up = block.backward(cache, &up);
        }
        match side {
            Side::One => self.a1.backward(&pass.adapter, &up),
            Side::Two => self.a2.backward(&pass.adapter, &up),
        }
    }

    /// Returns (raw output, possibly-normalized output, cache).
    pub(crate) fn output_fwd(
        &self,
        side: Side,
        latent: &Matrix,
        normalize: bool,
    ) -> Result<(Matrix, Matrix, OutputPass)> {
        let (raw, adapter) = self.adapter_out(side).forward_cached(latent)?;
        if normalize {
            let (out, norm) = normalize_rows_cached(&raw);
            Ok((raw, out, OutputPass { adapter, norm: Some(norm) }))
        } else {
            let out = raw.clone();
            Ok((raw, out, OutputPass { adapter, norm: None }))
        }
    }

    /// `up_out` flows through the normalization (when present); `up_raw` is
    /// added directly on the pre-normalization output.
    pub(crate) fn output_bwd(
        &mut self,
        side: Side,
        pass: &OutputPass,
        up_out: Option<&Matrix>,
        up_raw: Option<&Matrix>,
    ) -> Matrix {
        let mut d_raw = match (up_out, &pass.norm) {
            (Some(up), Some(norm)) => normalize_rows_backward(norm, up),
            (Some(up), None) => up.clone(),
            (None, _) => {
                let raw = up_raw.expect("output_bwd needs at least one upstream");
                Matrix::zeros(raw.rows(), raw.cols())
            }
        };
        if let Some(raw) = up_raw {
            d_raw.add_assign(raw);
        }
        match side {
            Side::One => self.b1.backward(&pass.adapter, &d_raw),
            Side::Two => self.b2.backward(&pass.adapter, &d_raw),
        }
    }
}

impl ParamModel for TranslatorNet {
    fn params(&self) -> Vec<&Parameter> {
        let mut out = self.a1.params();
        out.extend(self.a2.params());
        for block in &self.backbone {
            out.extend(block.params());
        }
        out.extend(self.b1.params());
        out.extend(self.b2.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.a1.params_mut();
        out.extend(self.a2.params_mut());
        for block in &mut self.backbone {
            out.extend(block.params_mut());
        }
        out.extend(self.b1.params_mut());
        out.extend(self.b2.params_mut());
        out
    }
}

/// The four adversaries: per-space embedding discriminators and per-space
/// latent discriminators. Plain MLPs, no residual connections, one logit per
/// row.
#[derive(Debug, Clone)]
pub struct DiscriminatorSet {
    pub d_emb_1: Mlp,
    pub d_emb_2: Mlp,
    pub d_lat_1: Mlp,
    pub d_lat_2: Mlp,
}

impl DiscriminatorSet {
    pub fn init(config: &NetConfig, seed: RngSeed) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed.derive("discriminators").0);
        let c = config;
        Ok(DiscriminatorSet {
            d_emb_1: Mlp::feedforward("d1", c.d1, c.disc_width, c.disc_depth, 1, &mut rng),
            d_emb_2: Mlp::feedforward("d2", c.d2, c.disc_width, c.disc_depth, 1, &mut rng),
            d_lat_1: Mlp::feedforward("d1l", c.latent_dim, c.disc_width, c.disc_depth, 1, &mut rng),
            d_lat_2: Mlp::feedforward("d2l", c.latent_dim, c.disc_width, c.disc_depth, 1, &mut rng),
        })
    }
}

impl ParamModel for DiscriminatorSet {
    fn params(&self) -> Vec<&Parameter> {
        let mut out = self.d_emb_1.params();
        out.extend(self.d_emb_2.params());
        out.extend(self.d_lat_1.params());
        out.extend(self.d_lat_2.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.d_emb_1.params_mut();
        out.extend(self.d_emb_2.params_mut());
        out.extend(self.d_lat_1.params_mut());
        out.extend(self.d_lat_2.params_mut());
        out
    }
}

/// One pre-sigmoid logit per row.
pub fn discriminate(disc: &Mlp, x: &Matrix) -> Result<Matrix> {
    if x.cols() != disc.in_dim() {
        return Err(Error::dim("discriminate", disc.in_dim(), x.cols()));
    }
    disc.forward(x)
}
