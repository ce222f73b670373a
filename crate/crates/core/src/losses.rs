//! Adversarial, reconstruction, cycle-consistency, and vector-space-
//! preservation losses, with analytic gradients for the training loop.
//!
//! Discriminator conventions: the embedding discriminator of a space sees
//! native embeddings of that space as real and translations *into* it as
//! fake. The latent discriminator of space 1 sees latents of space-1 inputs
//! as real and latents of space-2 inputs as fake; the space-2 one is the
//! mirror image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix, Mlp, MlpCache};
use crate::translator::{discriminate, DiscriminatorSet, Side, TranslatorNet};

/// Relative weights of the generator constraints and the overall
/// adversarial/generator tradeoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_gen: f64,
    pub lambda_rec: f64,
    pub lambda_cc: f64,
    pub lambda_vsp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_gen: 1.0,
            lambda_rec: 10.0,
            lambda_cc: 10.0,
            lambda_vsp: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_gen", self.lambda_gen),
            ("lambda_rec", self.lambda_rec),
            ("lambda_cc", self.lambda_cc),
            ("lambda_vsp", self.lambda_vsp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Every term of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adv_total: f64,
    pub gan_emb_1: f64,
    pub gan_emb_2: f64,
    pub gan_lat_1: f64,
    pub gan_lat_2: f64,
    pub rec: f64,
    pub cc: f64,
    pub vsp: f64,
    pub gen_total: f64,
    pub objective: f64,
}

impl LossBreakdown {
    pub const FIELD_NAMES: [&'static str; 10] = [
        "adv_total",
        "gan_emb_1",
        "gan_emb_2",
        "gan_lat_1",
        "gan_lat_2",
        "rec",
        "cc",
        "vsp",
        "gen_total",
        "objective",
    ];

    pub fn fields(&self) -> [f64; 10] {
        [
            self.adv_total,
            self.gan_emb_1,
            self.gan_emb_2,
            self.gan_lat_1,
            self.gan_lat_2,
            self.rec,
            self.cc,
            self.vsp,
            self.gen_total,
            self.objective,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanFlavor {
    /// Non-saturating logistic loss.
    NonSaturating,
    /// Least-squares variant, kept behind this flag for stability experiments.
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanSide {
    Generator,
    Discriminator,
}

/// Normalization of the VSP sum over batch pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VspPrefactor {
    /// 1/B, as printed.
    Batch,
    /// 1/B², for ablation.
    BatchSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VspOptions {
    pub prefactor: VspPrefactor,
    /// Include the i = j self terms of the pair sum.
    pub include_self: bool,
}

impl Default for VspOptions {
    fn default() -> Self {
        VspOptions {
            prefactor: VspPrefactor::Batch,
            include_self: true,
        }
    }
}

/// What the generator step optimizes besides the adversarial terms.
#[derive(Debug, Clone, Copy)]
pub struct LossPlan {
    pub weights: LossWeights,
    pub flavor: GanFlavor,
    pub vsp: VspOptions,
    pub latent_gan: bool,
}

impl Default for LossPlan {
    fn default() -> Self {
        LossPlan {
            weights: LossWeights::default(),
            flavor: GanFlavor::NonSaturating,
            vsp: VspOptions::default(),
            latent_gan: true,
        }
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_batch(name: &'static str, m: &Matrix) -> Result<()> {
    if m.rows() == 0 {
        return Err(Error::EmptyBatch(name));
    }
    Ok(())
}

// Per-logit value/gradient pairs. Values are means over the batch, so the
// gradients carry the 1/n factor.

fn disc_real_score(logits: &Matrix, flavor: GanFlavor) -> (f64, Matrix) {
    let n = logits.rows() as f64;
    match flavor {
        GanFlavor::NonSaturating => {
            let val = logits.data().iter().map(|&s| softplus(-s)).sum::<f64>() / n;
            let grad = logits.map(|s| (sigmoid(s) - 1.0) / n);
            (val, grad)
        }
        GanFlavor::LeastSquares => {
            let val = logits.data().iter().map(|&s| 0.5 * (s - 1.0).powi(2)).sum::<f64>() / n;
            let grad = logits.map(|s| (s - 1.0) / n);
            (val, grad)
        }
    }
}

fn disc_fake_score(logits: &Matrix, flavor: GanFlavor) -> (f64, Matrix) {
    let n = logits.rows() as f64;
    match flavor {
        GanFlavor::NonSaturating => {
            let val = logits.data().iter().map(|&s| softplus(s)).sum::<f64>() / n;
            let grad = logits.map(|s| sigmoid(s) / n);
            (val, grad)
        }
        GanFlavor::LeastSquares => {
            let val = logits.data().iter().map(|&s| 0.5 * s * s).sum::<f64>() / n;
            let grad = logits.map(|s| s / n);
            (val, grad)
        }
    }
}

fn gen_fake_score(logits: &Matrix, flavor: GanFlavor) -> (f64, Matrix) {
    let n = logits.rows() as f64;
    match flavor {
        GanFlavor::NonSaturating => {
            let val = logits.data().iter().map(|&s| softplus(-s)).sum::<f64>() / n;
            let grad = logits.map(|s| (sigmoid(s) - 1.0) / n);
            (val, grad)
        }
        GanFlavor::LeastSquares => {
            let val = logits.data().iter().map(|&s| 0.5 * (s - 1.0).powi(2)).sum::<f64>() / n;
            let grad = logits.map(|s| (s - 1.0) / n);
            (val, grad)
        }
    }
}

/// Standard GAN loss for one discriminator.
///
/// Discriminator side pushes real logits toward 1 and fake logits toward 0;
/// the generator side is the non-saturating form pushing fake logits toward
/// 1. Values only; the training path lives in the `*_with_grads` functions.
pub fn gan_loss(
    disc: &Mlp,
    real: &Matrix,
    fake: &Matrix,
    side: GanSide,
    flavor: GanFlavor,
) -> Result<f64> {
    check_batch("gan_loss real", real)?;
    check_batch("gan_loss fake", fake)?;
    match side {
        GanSide::Discriminator => {
            let real_logits = discriminate(disc, real)?;
            let fake_logits = discriminate(disc, fake)?;
            Ok(disc_real_score(&real_logits, flavor).0 + disc_fake_score(&fake_logits, flavor).0)
        }
        GanSide::Generator => {
            let fake_logits = discriminate(disc, fake)?;
            Ok(gen_fake_score(&fake_logits, flavor).0)
        }
    }
}

/// Sum of the four adversarial terms: both embedding-level discriminators and
/// both latent-level discriminators.
pub fn adversarial_total(
    net: &TranslatorNet,
    discs: &DiscriminatorSet,
    batch_u: &Matrix,
    batch_v: &Matrix,
    side: GanSide,
    flavor: GanFlavor,
) -> Result<f64> {
    check_batch("adversarial_total u", batch_u)?;
    check_batch("adversarial_total v", batch_v)?;
    let f12 = net.translate_1to2(batch_u)?;
    let f21 = net.translate_2to1(batch_v)?;
    let l1 = net.latent_1(batch_u)?;
    let l2 = net.latent_2(batch_v)?;
    let emb_1 = gan_loss(&discs.d_emb_1, batch_u, &f21, side, flavor)?;
    let emb_2 = gan_loss(&discs.d_emb_2, batch_v, &f12, side, flavor)?;
    let lat_1 = gan_loss(&discs.d_lat_1, &l1, &l2, side, flavor)?;
    let lat_2 = gan_loss(&discs.d_lat_2, &l2, &l1, side, flavor)?;
    Ok(emb_1 + emb_2 + lat_1 + lat_2)
}

fn mse_mean_rows(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "mse",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let n = pred.rows() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n)
}

/// Upstream of `mse_mean_rows` scaled by `weight`.
fn mse_upstream(pred: &Matrix, target: &Matrix, weight: f64) -> Matrix {
    let c = 2.0 * weight / pred.rows() as f64;
    pred.zip_map(target, |p, t| c * (p - t))
}

/// E‖R1(x)−x‖² + E‖R2(y)−y‖², means taken over rows.
pub fn reconstruction_loss(net: &TranslatorNet, batch_u: &Matrix, batch_v: &Matrix) -> Result<f64> {
    check_batch("reconstruction_loss u", batch_u)?;
    check_batch("reconstruction_loss v", batch_v)?;
    let r1 = net.reconstruct_1(batch_u)?;
    let r2 = net.reconstruct_2(batch_v)?;
    Ok(mse_mean_rows(&r1, batch_u)? + mse_mean_rows(&r2, batch_v)?)
}

/// E‖F2(F1(x))−x‖² + E‖F1(F2(y))−y‖².
pub fn cycle_loss(net: &TranslatorNet, batch_u: &Matrix, batch_v: &Matrix) -> Result<f64> {
    check_batch("cycle_loss u", batch_u)?;
    check_batch("cycle_loss v", batch_v)?;
    let c1 = net.translate_2to1(&net.translate_1to2(batch_u)?)?;
    let c2 = net.translate_1to2(&net.translate_2to1(batch_v)?)?;
    Ok(mse_mean_rows(&c1, batch_u)? + mse_mean_rows(&c2, batch_v)?)
}

/// Gram residual of one side: value plus gradient w.r.t. the translated batch.
fn vsp_side(source: &Matrix, translated_raw: &Matrix, opts: &VspOptions) -> (f64, Matrix) {
    let b = source.rows();
    let gram_src = source.matmul_a_bt(source);
    let gram_out = translated_raw.matmul_a_bt(translated_raw);
    let mut resid = gram_src.sub(&gram_out);
    if !opts.include_self {
        for i in 0..b {
            resid.set(i, i, 0.0);
        }
    }
    let pref = match opts.prefactor {
        VspPrefactor::Batch => 1.0 / b as f64,
        VspPrefactor::BatchSquared => 1.0 / (b * b) as f64,
    };
    let value = pref * resid.data().iter().map(|&d| d * d).sum::<f64>();
    // d/dW of pref·Σ (G−WWᵀ)² = −4·pref·(G−WWᵀ)·W for symmetric residual.
    let grad = resid.matmul(translated_raw).scale(-4.0 * pref);
    (value, grad)
}

/// Vector-space preservation: batch-pairwise dot products must survive
/// translation. Dot products are taken on raw translator outputs, before any
/// output normalization.
pub fn vsp_loss(
    net: &TranslatorNet,
    batch_u: &Matrix,
    batch_v: &Matrix,
    opts: &VspOptions,
) -> Result<f64> {
    check_batch("vsp_loss u", batch_u)?;
    check_batch("vsp_loss v", batch_v)?;
    if batch_u.rows() != batch_v.rows() {
        return Err(Error::Domain(format!(
            "vsp_loss batches must have equal row counts, got {} and {}",
            batch_u.rows(),
            batch_v.rows()
        )));
    }
    let f12 = net.translate_1to2_raw(batch_u)?;
    let f21 = net.translate_2to1_raw(batch_v)?;
    Ok(vsp_side(batch_u, &f12, opts).0 + vsp_side(batch_v, &f21, opts).0)
}

/// Assemble a [`LossBreakdown`] from raw term values.
pub fn generator_total(
    gan_terms: [f64; 4],
    rec: f64,
    cc: f64,
    vsp: f64,
    weights: &LossWeights,
) -> LossBreakdown {
    let adv_total = gan_terms.iter().sum();
    let gen_total = weights.lambda_rec * rec + weights.lambda_cc * cc + weights.lambda_vsp * vsp;
    LossBreakdown {
        adv_total,
        gan_emb_1: gan_terms[0],
        gan_emb_2: gan_terms[1],
        gan_lat_1: gan_terms[2],
        gan_lat_2: gan_terms[3],
        rec,
        cc,
        vsp,
        gen_total,
        objective: adv_total + weights.lambda_gen * gen_total,
    }
}

fn gen_disc_pull(disc: &Mlp, fake: &Matrix, flavor: GanFlavor) -> Result<(f64, Matrix)> {
    let (logits, cache): (Matrix, MlpCache) = disc.forward_cached(fake)?;
    let (value, d_logits) = gen_fake_score(&logits, flavor);
    Ok((value, disc.backward_input(&cache, &d_logits)))
}

/// One generator step: every loss term evaluated on shared forward passes,
/// gradients accumulated into the translator parameters. Discriminators stay
/// frozen. Returns the unweighted term values.
pub fn generator_step_losses(
    net: &mut TranslatorNet,
    discs: &DiscriminatorSet,
    batch_u: &Matrix,
    batch_v: &Matrix,
    plan: &LossPlan,
) -> Result<LossBreakdown> {
    check_batch("generator step u", batch_u)?;
    check_batch("generator step v", batch_v)?;
    let w = &plan.weights;
    let w_rec = w.lambda_gen * w.lambda_rec;
    let w_cc = w.lambda_gen * w.lambda_cc;
    let w_vsp = w.lambda_gen * w.lambda_vsp;
    if w_vsp > 0.0 && batch_u.rows() != batch_v.rows() {
        return Err(Error::Domain(
            "vsp requires equal batch sizes".to_string(),
        ));
    }
    let norm = net.config.normalize_output;

    let (l1, p_l1) = net.latent_fwd(Side::One, batch_u)?;
    let (l2, p_l2) = net.latent_fwd(Side::Two, batch_v)?;
    let (f12_raw, f12, p_f12) = net.output_fwd(Side::Two, &l1, norm)?;
    let (f21_raw, f21, p_f21) = net.output_fwd(Side::One, &l2, norm)?;

    // Adversarial pull on translations and latents, discriminators frozen.
    let (gan_emb_1, mut d_f21) = gen_disc_pull(&discs.d_emb_1, &f21, plan.flavor)?;
    let (gan_emb_2, mut d_f12) = gen_disc_pull(&discs.d_emb_2, &f12, plan.flavor)?;
    let (gan_lat_1, gan_lat_2, d_l1_adv, d_l2_adv) = if plan.latent_gan {
        let (lat_1, d_l2) = gen_disc_pull(&discs.d_lat_1, &l2, plan.flavor)?;
        let (lat_2, d_l1) = gen_disc_pull(&discs.d_lat_2, &l1, plan.flavor)?;
        (lat_1, lat_2, Some(d_l1), Some(d_l2))
    } else {
        (0.0, 0.0, None, None)
    };

    // Cycle consistency: the round trips re-enter the opposite adapters.
    let mut cc = 0.0;
    let mut cc_chain = None;
    if w_cc > 0.0 {
        let (lc2, p_lc2) = net.latent_fwd(Side::Two, &f12)?;
        let (_, c1, p_c1) = net.output_fwd(Side::One, &lc2, norm)?;
        let (lc1, p_lc1) = net.latent_fwd(Side::One, &f21)?;
        let (_, c2, p_c2) = net.output_fwd(Side::Two, &lc1, norm)?;
        cc = mse_mean_rows(&c1, batch_u)? + mse_mean_rows(&c2, batch_v)?;
        let d_c1 = mse_upstream(&c1, batch_u, w_cc);
        let d_c2 = mse_upstream(&c2, batch_v, w_cc);
        cc_chain = Some((p_lc2, p_c1, d_c1, p_lc1, p_c2, d_c2));
    }

    // Reconstruction through the same latents.
    let mut rec = 0.0;
    let mut rec_chain = None;
    if w_rec > 0.0 {
        let (_, r1, p_r1) = net.output_fwd(Side::One, &l1, norm)?;
        let (_, r2, p_r2) = net.output_fwd(Side::Two, &l2, norm)?;
        rec = mse_mean_rows(&r1, batch_u)? + mse_mean_rows(&r2, batch_v)?;
        let d_r1 = mse_upstream(&r1, batch_u, w_rec);
        let d_r2 = mse_upstream(&r2, batch_v, w_rec);
        rec_chain = Some((p_r1, d_r1, p_r2, d_r2));
    }

    // VSP acts on the raw outputs.
    let mut vsp = 0.0;
    let mut d_f12_raw = None;
    let mut d_f21_raw = None;
    if w_vsp > 0.0 {
        let (v1, g1) = vsp_side(batch_u, &f12_raw, &plan.vsp);
        let (v2, g2) = vsp_side(batch_v, &f21_raw, &plan.vsp);
        vsp = v1 + v2;
        d_f12_raw = Some(g1.scale(w_vsp));
        d_f21_raw = Some(g2.scale(w_vsp));
    }

    // Backward. Cycle chains first: they add gradient onto f12/f21.
    if let Some((p_lc2, p_c1, d_c1, p_lc1, p_c2, d_c2)) = cc_chain {
        let d_lc2 = net.output_bwd(Side::One, &p_c1, Some(&d_c1), None);
        d_f12.add_assign(&net.latent_bwd(Side::Two, &p_lc2, &d_lc2));
        let d_lc1 = net.output_bwd(Side::Two, &p_c2, Some(&d_c2), None);
        d_f21.add_assign(&net.latent_bwd(Side::One, &p_lc1, &d_lc1));
    }

    let mut d_l1 = net.output_bwd(Side::Two, &p_f12, Some(&d_f12), d_f12_raw.as_ref());
    let mut d_l2 = net.output_bwd(Side::One, &p_f21, Some(&d_f21), d_f21_raw.as_ref());
    if let Some((p_r1, d_r1, p_r2, d_r2)) = rec_chain {
        d_l1.add_assign(&net.output_bwd(Side::One, &p_r1, Some(&d_r1), None));
        d_l2.add_assign(&net.output_bwd(Side::Two, &p_r2, Some(&d_r2), None));
    }
    if let Some(d) = d_l1_adv {
        d_l1.add_assign(&d);
    }
    if let Some(d) = d_l2_adv {
        d_l2.add_assign(&d);
    }
    net.latent_bwd(Side::One, &p_l1, &d_l1);
    net.latent_bwd(Side::Two, &p_l2, &d_l2);

    Ok(generator_total(
        [gan_emb_1, gan_emb_2, gan_lat_1, gan_lat_2],
        rec,
        cc,
        vsp,
        w,
    ))
}

/// One discriminator step: translations and latents are treated as constants,
/// gradients accumulate into the discriminators only. Returns the four
/// per-discriminator losses (embedding 1, embedding 2, latent 1, latent 2).
pub fn discriminator_step_losses(
    net: &TranslatorNet,
    discs: &mut DiscriminatorSet,
    batch_u: &Matrix,
    batch_v: &Matrix,
    flavor: GanFlavor,
    latent_gan: bool,
) -> Result<[f64; 4]> {
    check_batch("discriminator step u", batch_u)?;
    check_batch("discriminator step v", batch_v)?;
    let f12 = net.translate_1to2(batch_u)?;
    let f21 = net.translate_2to1(batch_v)?;

    let train_one = |disc: &mut Mlp, real: &Matrix, fake: &Matrix| -> Result<f64> {
        let (real_logits, real_cache) = disc.forward_cached(real)?;
        let (rv, d_real) = disc_real_score(&real_logits, flavor);
        disc.backward(&real_cache, &d_real);
        let (fake_logits, fake_cache) = disc.forward_cached(fake)?;
        let (fv, d_fake) = disc_fake_score(&fake_logits, flavor);
        disc.backward(&fake_cache, &d_fake);
        Ok(rv + fv)
    };

    let emb_1 = train_one(&mut discs.d_emb_1, batch_u, &f21)?;
    let emb_2 = train_one(&mut discs.d_emb_2, batch_v, &f12)?;
    let (lat_1, lat_2) = if latent_gan {
        let l1 = net.latent_1(batch_u)?;
        let l2 = net.latent_2(batch_v)?;
        (
            train_one(&mut discs.d_lat_1, &l1, &l2)?,
            train_one(&mut discs.d_lat_2, &l2, &l1)?,
        )
    } else {
        (0.0, 0.0)
    };
    Ok([emb_1, emb_2, lat_1, lat_2])
}

// Per-term training entry points. Slower than `generator_step_losses` (each
// runs its own forward passes); used by gradient checks and tests.

pub fn reconstruction_loss_with_grads(
    net: &mut TranslatorNet,
    batch_u: &Matrix,
    batch_v: &Matrix,
    weight: f64,
) -> Result<f64> {
    check_batch("reconstruction u", batch_u)?;
    check_batch("reconstruction v", batch_v)?;
    let norm = net.config.normalize_output;
    let (l1, p_l1) = net.latent_fwd(Side::One, batch_u)?;
    let (l2, p_l2) = net.latent_fwd(Side::Two, batch_v)?;
    let (_, r1, p_r1) = net.output_fwd(Side::One, &l1, norm)?;
    let (_, r2, p_r2) = net.output_fwd(Side::Two, &l2, norm)?;
    let value = mse_mean_rows(&r1, batch_u)? + mse_mean_rows(&r2, batch_v)?;
    let d_l1 = net.output_bwd(Side::One, &p_r1, Some(&mse_upstream(&r1, batch_u, weight)), None);
    let d_l2 = net.output_bwd(Side::Two, &p_r2, Some(&mse_upstream(&r2, batch_v, weight)), None);
    net.latent_bwd(Side::One, &p_l1, &d_l1);
    net.latent_bwd(Side::Two, &p_l2, &d_l2);
    Ok(value)
}

pub fn cycle_loss_with_grads(
    net: &mut TranslatorNet,
    batch_u: &Matrix,
    batch_v: &Matrix,
    weight: f64,
) -> Result<f64> {
    check_batch("cycle u", batch_u)?;
    check_batch("cycle v", batch_v)?;
    let norm = net.config.normalize_output;
    let (l1, p_l1) = net.latent_fwd(Side::One, batch_u)?;
    let (l2, p_l2) = net.latent_fwd(Side::Two, batch_v)?;
    let (_, f12, p_f12) = net.output_fwd(Side::Two, &l1, norm)?;
    let (_, f21, p_f21) = net.output_fwd(Side::One, &l2, norm)?;
    let (lc2, p_lc2) = net.latent_fwd(Side::Two, &f12)?;
    let (_, c1, p_c1) = net.output_fwd(Side::One, &lc2, norm)?;
    let (lc1, p_lc1) = net.latent_fwd(Side::One, &f21)?;
    let (_, c2, p_c2) = net.output_fwd(Side::Two, &lc1, norm)?;
    let value = mse_mean_rows(&c1, batch_u)? + mse_mean_rows(&c2, batch_v)?;

    let d_lc2 = net.output_bwd(Side::One, &p_c1, Some(&mse_upstream(&c1, batch_u, weight)), None);
    let d_f12 = net.latent_bwd(Side::Two, &p_lc2, &d_lc2);
    let d_lc1 = net.output_bwd(Side::Two, &p_c2, Some(&mse_upstream(&c2, batch_v, weight)), None);
    let d_f21 = net.latent_bwd(Side::One, &p_lc1, &d_lc1);
    let d_l1 = net.output_bwd(Side::Two, &p_f12, Some(&d_f12), None);
    let d_l2 = net.output_bwd(Side::One, &p_f21, Some(&d_f21), None);
    net.latent_bwd(Side::One, &p_l1, &d_l1);
    net.latent_bwd(Side::Two, &p_l2, &d_l2);
    Ok(value)
}

pub fn vsp_loss_with_grads(
    net: &mut TranslatorNet,
    batch_u: &Matrix,
    batch_v: &Matrix,
    opts: &VspOptions,
    weight: f64,
) -> Result<f64> {
    check_batch("vsp u", batch_u)?;
    check_batch("vsp v", batch_v)?;
    if batch_u.rows() != batch_v.rows() {
        return Err(Error::Domain(
            "vsp requires equal batch sizes".to_string(),
        ));
    }
    let (l1, p_l1) = net.latent_fwd(Side::One, batch_u)?;
    let (l2, p_l2) = net.latent_fwd(Side::Two, batch_v)?;
    let (f12_raw, _, p_f12) = net.output_fwd(Side::Two, &l1, false)?;
    let (f21_raw, _, p_f21) = net.output_fwd(Side::One, &l2, false)?;
    let (v1, g1) = vsp_side(batch_u, &f12_raw, opts);
    let (v2, g2) = vsp_side(batch_v, &f21_raw, opts);
    let d_l1 = net.output_bwd(Side::Two, &p_f12, None, Some(&g1.scale(weight)));
    let d_l2 = net.output_bwd(Side::One, &p_f21, None, Some(&g2.scale(weight)));
    net.latent_bwd(Side::One, &p_l1, &d_l1);
    net.latent_bwd(Side::Two, &p_l2, &d_l2);
    Ok(v1 + v2)
}

/// Generator-side adversarial terms with gradients into the translator.
pub fn generator_adversarial_with_grads(
    net: &mut TranslatorNet,
    discs: &DiscriminatorSet,
    batch_u: &Matrix,
    batch_v: &Matrix,
    flavor: GanFlavor,
    latent_gan: bool,
    weight: f64,
) -> Result<[f64; 4]> {
    check_batch("generator adversarial u", batch_u)?;
    check_batch("generator adversarial v", batch_v)?;
    let norm = net.config.normalize_output;
    let (l1, p_l1) = net.latent_fwd(Side::One, batch_u)?;
    let (l2, p_l2) = net.latent_fwd(Side::Two, batch_v)?;
    let (_, f12, p_f12) = net.output_fwd(Side::Two, &l1, norm)?;
    let (_, f21, p_f21) = net.output_fwd(Side::One, &l2, norm)?;

    let (emb_1, d_f21) = gen_disc_pull(&discs.d_emb_1, &f21, flavor)?;
    let (emb_2, d_f12) = gen_disc_pull(&discs.d_emb_2, &f12, flavor)?;
    let mut d_l1 = net.output_bwd(Side::Two, &p_f12, Some(&d_f12.scale(weight)), None);
    let mut d_l2 = net.output_bwd(Side::One, &p_f21, Some(&d_f21.scale(weight)), None);
    let (lat_1, lat_2) = if latent_gan {
        let (lat_1, d_l2_a) = gen_disc_pull(&discs.d_lat_1, &l2, flavor)?;
        let (lat_2, d_l1_a) = gen_disc_pull(&discs.d_lat_2, &l1, flavor)?;
        d_l1.add_assign(&d_l1_a.scale(weight));
        d_l2.add_assign(&d_l2_a.scale(weight));
        (lat_1, lat_2)
    } else {
        (0.0, 0.0)
    };
    net.latent_bwd(Side::One, &p_l1, &d_l1);
    net.latent_bwd(Side::Two, &p_l2, &d_l2);
    Ok([emb_1, emb_2, lat_1, lat_2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_model_gradients, glorot_uniform, Matrix, ParamModel, RngSeed};
    use crate::translator::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn tiny_config(normalize: bool) -> NetConfig {
        NetConfig {
            d1: 4,
            d2: 3,
            latent_dim: 3,
            adapter_depth: 1,
            adapter_width: 5,
            backbone_blocks: 1,
            disc_depth: 1,
            disc_width: 5,
            normalize_output: normalize,
        }
    }

    /// Adapters and output maps are identity, backbone contributes nothing:
    /// F1, F2, R1, R2 are all exactly the identity map.
    fn identity_net(d: usize) -> TranslatorNet {
        let config = NetConfig {
            d1: d,
            d2: d,
            latent_dim: d,
            adapter_depth: 0,
            adapter_width: 1,
            backbone_blocks: 1,
            disc_depth: 0,
            disc_width: 1,
            normalize_output: false,
        };
        let mut net = TranslatorNet::zeroed(&config).unwrap();
        for p in net.params_mut() {
            if p.name.ends_with(".w") && (p.name.starts_with('a') || p.name.starts_with('b')) {
                for i in 0..d {
                    p.value.set(i, i, 1.0);
                }
            }
        }
        net
    }

    fn zero_discs(config: &NetConfig) -> DiscriminatorSet {
        let mut discs = DiscriminatorSet::init(config, RngSeed(0)).unwrap();
        for p in discs.params_mut() {
            p.value.fill(0.0);
        }
        discs
    }

    #[test]
    fn gan_loss_at_zero_logits() {
        let cfg = tiny_config(false);
        let discs = zero_discs(&cfg);
        let real = Matrix::zeros(3, 4);
        let fake = Matrix::zeros(5, 4);
        let d = gan_loss(&discs.d_emb_1, &real, &fake, GanSide::Discriminator, GanFlavor::NonSaturating).unwrap();
        assert!((d - 2.0 * LN2).abs() < 1e-12, "got {d}");
        let g = gan_loss(&discs.d_emb_1, &real, &fake, GanSide::Generator, GanFlavor::NonSaturating).unwrap();
        assert!((g - LN2).abs() < 1e-12, "got {g}");
    }

    #[test]
    fn gan_loss_confident_discriminator_vanishes() {
        // Single linear head: real inputs (zeros) land at +50, fake inputs
        // (ones) far negative.
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut head = Mlp::feedforward("d", 4, 1, 0, 1, &mut rng);
        for p in head.params_mut() {
            if p.name.ends_with(".w") {
                p.value.fill(-100.0);
            } else {
                p.value.fill(50.0);
            }
        }
        let real = Matrix::zeros(2, 4);
        let mut fake = Matrix::zeros(2, 4);
        fake.fill(1.0);
        let d = gan_loss(&head, &real, &fake, GanSide::Discriminator, GanFlavor::NonSaturating).unwrap();
        assert!(d < 1e-10, "confident discriminator loss {d}");
    }

    #[test]
    fn gan_loss_rejects_empty_batch() {
        let cfg = tiny_config(false);
        let discs = zero_discs(&cfg);
        let empty = Matrix::zeros(0, 4);
        let fake = Matrix::zeros(2, 4);
        assert!(matches!(
            gan_loss(&discs.d_emb_1, &empty, &fake, GanSide::Discriminator, GanFlavor::NonSaturating),
            Err(Error::EmptyBatch(_))
        ));
    }

    #[test]
    fn adversarial_total_is_sum_of_terms() {
        let cfg = tiny_config(true);
        let net = TranslatorNet::init(&cfg, RngSeed(3)).unwrap();
        let discs = DiscriminatorSet::init(&cfg, RngSeed(4)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let bu = glorot_uniform(3, 4, &mut rng);
        let bv = glorot_uniform(3, 3, &mut rng);
        let total = adversarial_total(&net, &discs, &bu, &bv, GanSide::Discriminator, GanFlavor::NonSaturating).unwrap();

        let f12 = net.translate_1to2(&bu).unwrap();
        let f21 = net.translate_2to1(&bv).unwrap();
        let l1 = net.latent_1(&bu).unwrap();
        let l2 = net.latent_2(&bv).unwrap();
        let side = GanSide::Discriminator;
        let fl = GanFlavor::NonSaturating;
        let by_hand = gan_loss(&discs.d_emb_1, &bu, &f21, side, fl).unwrap()
            + gan_loss(&discs.d_emb_2, &bv, &f12, side, fl).unwrap()
            + gan_loss(&discs.d_lat_1, &l1, &l2, side, fl).unwrap()
            + gan_loss(&discs.d_lat_2, &l2, &l1, side, fl).unwrap();
        assert!((total - by_hand).abs() < 1e-12);
    }

    #[test]
    fn adversarial_total_zero_discriminators() {
        // Four discriminator-side terms, each 2·ln2 at zero logits.
        let cfg = tiny_config(true);
        let net = TranslatorNet::init(&cfg, RngSeed(3)).unwrap();
        let discs = zero_discs(&cfg);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let bu = glorot_uniform(3, 4, &mut rng);
        let bv = glorot_uniform(3, 3, &mut rng);
        let total = adversarial_total(&net, &discs, &bu, &bv, GanSide::Discriminator, GanFlavor::NonSaturating).unwrap();
        assert!((total - 8.0 * LN2).abs() < 1e-12, "got {total}");
    }

    #[test]
    fn reconstruction_identity_net_is_zero() {
        let net = identity_net(3);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let bu = glorot_uniform(4, 3, &mut rng);
        let bv = glorot_uniform(2, 3, &mut rng);
        let rec = reconstruction_loss(&net, &bu, &bv).unwrap();
        assert!(rec < 1e-24, "identity reconstruction {rec}");
        let cc = cycle_loss(&net, &bu, &bv).unwrap();
        assert!(cc < 1e-24, "identity cycle {cc}");
        // Mismatched row counts are a domain error for VSP.
        assert!(vsp_loss(&net, &bu, &bv, &VspOptions::default()).is_err());
    }

    #[test]
    fn reconstruction_arithmetic() {
        // Zero net sends everything to zero; only the space-1 term is
        // nonzero: ‖[1,0]‖² = 1.
        let config = NetConfig {
            d1: 2,
            d2: 2,
            latent_dim: 2,
            adapter_depth: 0,
            adapter_width: 1,
            backbone_blocks: 1,
            disc_depth: 0,
            disc_width: 1,
            normalize_output: false,
        };
        let net = TranslatorNet::zeroed(&config).unwrap();
        let bu = Matrix::row_vector(vec![1.0, 0.0]);
        let bv = Matrix::row_vector(vec![0.0, 0.0]);
        let rec = reconstruction_loss(&net, &bu, &bv).unwrap();
        assert!((rec - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cycle_arithmetic_one_dim() {
        let config = NetConfig {
            d1: 1,
            d2: 1,
            latent_dim: 1,
            adapter_depth: 0,
            adapter_width: 1,
            backbone_blocks: 1,
            disc_depth: 0,
            disc_width: 1,
            normalize_output: false,
        };
        let net = TranslatorNet::zeroed(&config).unwrap();
        let bu = Matrix::row_vector(vec![2.0]);
        let bv = Matrix::row_vector(vec![0.0]);
        let cc = cycle_loss(&net, &bu, &bv).unwrap();
        assert!((cc - 4.0).abs() < 1e-15);
    }

    #[test]
    fn cycle_is_symmetric_under_relabeling() {
        let cfg = NetConfig {
            d1: 3,
            d2: 3,
            ..tiny_config(false)
        };
        let net = TranslatorNet::init(&cfg, RngSeed(11)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let bu = glorot_uniform(3, 3, &mut rng);
        let bv = glorot_uniform(3, 3, &mut rng);
        let a = cycle_loss(&net, &bu, &bv).unwrap();
        // Swapping space labels and batches leaves the sum unchanged; with a
        // symmetric net (same dims) swap the batches only.
        let b = {
            let f21 = net.translate_2to1(&bv).unwrap();
            let c2 = net.translate_1to2(&f21).unwrap();
            let f12 = net.translate_1to2(&bu).unwrap();
            let c1 = net.translate_2to1(&f12).unwrap();
            mse_mean_rows(&c2, &bv).unwrap() + mse_mean_rows(&c1, &bu).unwrap()
        };
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn vsp_identity_is_zero_and_single_entry_arithmetic() {
        let net = identity_net(2);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let bu = glorot_uniform(3, 2, &mut rng);
        let bv = glorot_uniform(3, 2, &mut rng);
        let v = vsp_loss(&net, &bu, &bv, &VspOptions::default()).unwrap();
        assert!(v < 1e-24);

        // B=1, u=[1], zero net: single Gram entry 1 → 0, loss 1.
        let config = NetConfig {
            d1: 1,
            d2: 1,
            latent_dim: 1,
            adapter_depth: 0,
            adapter_width: 1,
            backbone_blocks: 1,
            disc_depth: 0,
            disc_width: 1,
            normalize_output: false,
        };
        let zero = TranslatorNet::zeroed(&config).unwrap();
        let bu = Matrix::row_vector(vec![1.0]);
        let bv = Matrix::row_vector(vec![0.0]);
        let v = vsp_loss(&zero, &bu, &bv, &VspOptions::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vsp_invariant_under_orthogonal_maps() {
        // Applying a rotation to a batch and its translation preserves both
        // Gram matrices, hence the loss.
        let d = 2;
        let net = identity_net(d);
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..10 {
            let bu = glorot_uniform(4, d, &mut rng);
            let bv = glorot_uniform(4, d, &mut rng);
            let theta: f64 = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU);
            let rot = Matrix::from_rows(&[
                vec![theta.cos(), -theta.sin()],
                vec![theta.sin(), theta.cos()],
            ])
            .unwrap();
            let base = vsp_loss(&net, &bu, &bv, &VspOptions::default()).unwrap();
            let rotated = vsp_loss(&net, &bu.matmul(&rot), &bv.matmul(&rot), &VspOptions::default()).unwrap();
            assert!((base - rotated).abs() < 1e-9, "{base} vs {rotated}");
        }
    }

    #[test]
    fn generator_total_combinations() {
        let weights = LossWeights {
            lambda_gen: 1.0,
            lambda_rec: 0.0,
            lambda_cc: 0.0,
            lambda_vsp: 0.0,
        };
        let b = generator_total([0.1, 0.2, 0.3, 0.4], 1.0, 2.0, 3.0, &weights);
        assert_eq!(b.gen_total, 0.0);
        assert!((b.objective - b.adv_total).abs() < 1e-15);
        assert!((b.adv_total - 1.0).abs() < 1e-12);

        let weights = LossWeights {
            lambda_gen: 1.0,
            lambda_rec: 1.0,
            lambda_cc: 0.0,
            lambda_vsp: 0.0,
        };
        let b = generator_total([0.0; 4], 0.5, 0.0, 0.0, &weights);
        assert!((b.gen_total - 0.5).abs() < 1e-15);

        // Doubling every λ in L_gen doubles gen_total.
        let w1 = LossWeights {
            lambda_gen: 1.0,
            lambda_rec: 3.0,
            lambda_cc: 5.0,
            lambda_vsp: 7.0,
        };
        let w2 = LossWeights {
            lambda_gen: 1.0,
            lambda_rec: 6.0,
            lambda_cc: 10.0,
            lambda_vsp: 14.0,
        };
        let b1 = generator_total([0.0; 4], 0.3, 0.4, 0.5, &w1);
        let b2 = generator_total([0.0; 4], 0.3, 0.4, 0.5, &w2);
        assert!((b2.gen_total - 2.0 * b1.gen_total).abs() < 1e-12);
    }

    #[test]
    fn losses_nonnegative_and_finite() {
        let cfg = tiny_config(true);
        let net = TranslatorNet::init(&cfg, RngSeed(21)).unwrap();
        let discs = DiscriminatorSet::init(&cfg, RngSeed(22)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..20 {
            let bu = glorot_uniform(3, 4, &mut rng);
            let bv = glorot_uniform(3, 3, &mut rng);
            for v in [
                reconstruction_loss(&net, &bu, &bv).unwrap(),
                cycle_loss(&net, &bu, &bv).unwrap(),
                vsp_loss(&net, &bu, &bv, &VspOptions::default()).unwrap(),
                adversarial_total(&net, &discs, &bu, &bv, GanSide::Discriminator, GanFlavor::NonSaturating).unwrap(),
                adversarial_total(&net, &discs, &bu, &bv, GanSide::Generator, GanFlavor::NonSaturating).unwrap(),
            ] {
                assert!(v.is_finite() && v >= 0.0, "loss {v}");
            }
        }
    }

    #[test]
    fn shared_pass_step_matches_per_term_gradients() {
        let cfg = tiny_config(true);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let bu = glorot_uniform(3, 4, &mut rng);
        let bv = glorot_uniform(3, 3, &mut rng);
        let discs = DiscriminatorSet::init(&cfg, RngSeed(32)).unwrap();
        let plan = LossPlan::default();
        let w = &plan.weights;

        let mut net_a = TranslatorNet::init(&cfg, RngSeed(33)).unwrap();
        net_a.zero_grads();
        let breakdown = generator_step_losses(&mut net_a, &discs, &bu, &bv, &plan).unwrap();

        let mut net_b = TranslatorNet::init(&cfg, RngSeed(33)).unwrap();
        net_b.zero_grads();
        let gan = generator_adversarial_with_grads(&mut net_b, &discs, &bu, &bv, plan.flavor, true, 1.0).unwrap();
        let rec = reconstruction_loss_with_grads(&mut net_b, &bu, &bv, w.lambda_gen * w.lambda_rec).unwrap();
        let cc = cycle_loss_with_grads(&mut net_b, &bu, &bv, w.lambda_gen * w.lambda_cc).unwrap();
        let vsp = vsp_loss_with_grads(&mut net_b, &bu, &bv, &plan.vsp, w.lambda_gen * w.lambda_vsp).unwrap();

        assert!((breakdown.rec - rec).abs() < 1e-12);
        assert!((breakdown.cc - cc).abs() < 1e-12);
        assert!((breakdown.vsp - vsp).abs() < 1e-12);
        for (a, b) in breakdown.fields()[1..5].iter().zip(gan.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (pa, pb) in net_a.params().iter().zip(net_b.params().iter()) {
            for (ga, gb) in pa.grad.data().iter().zip(pb.grad.data()) {
                assert!(
                    (ga - gb).abs() <= 1e-9 * (1.0 + ga.abs()),
                    "{}: {ga} vs {gb}",
                    pa.name
                );
            }
        }
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        for normalize in [false, true] {
            let cfg = tiny_config(normalize);
            let mut rng = ChaCha12Rng::seed_from_u64(41);
            let bu = glorot_uniform(3, 4, &mut rng);
            let bv = glorot_uniform(3, 3, &mut rng);
            let discs = DiscriminatorSet::init(&cfg, RngSeed(42)).unwrap();
            let plan = LossPlan::default();
            let mut net = TranslatorNet::init(&cfg, RngSeed(43)).unwrap();
            net.zero_grads();
            generator_step_losses(&mut net, &discs, &bu, &bv, &plan).unwrap();
            let err = check_model_gradients(
                &mut net,
                |n| {
                    let adv = adversarial_total(n, &discs, &bu, &bv, GanSide::Generator, plan.flavor)?;
                    let rec = reconstruction_loss(n, &bu, &bv)?;
                    let cc = cycle_loss(n, &bu, &bv)?;
                    let vsp = vsp_loss(n, &bu, &bv, &plan.vsp)?;
                    Ok(generator_total([adv, 0.0, 0.0, 0.0], rec, cc, vsp, &plan.weights).objective)
                },
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "objective grad error {err} (normalize={normalize})");
        }
    }

    #[test]
    fn discriminator_gradient_matches_finite_differences() {
        let cfg = tiny_config(true);
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let bu = glorot_uniform(3, 4, &mut rng);
        let bv = glorot_uniform(3, 3, &mut rng);
        let net = TranslatorNet::init(&cfg, RngSeed(52)).unwrap();
        let mut discs = DiscriminatorSet::init(&cfg, RngSeed(53)).unwrap();
        discs.zero_grads();
        discriminator_step_losses(&net, &mut discs, &bu, &bv, GanFlavor::NonSaturating, true).unwrap();
        let err = check_model_gradients(
            &mut discs,
            |d| adversarial_total(&net, d, &bu, &bv, GanSide::Discriminator, GanFlavor::NonSaturating),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "discriminator grad error {err}");
    }
}
