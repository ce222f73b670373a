//! Alternating min–max training over two unpaired embedding sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::losses::{
    cycle_loss, discriminator_step_losses, generator_step_losses, reconstruction_loss, GanFlavor,
    LossBreakdown, LossPlan, LossWeights, VspOptions,
};
use crate::numerics::{Matrix, ParamModel, Parameter, RngSeed};
use crate::translator::{DiscriminatorSet, NetConfig, TranslatorNet};

/// Subtractive ablation switches. A set flag removes the matching loss term
/// (its λ is zeroed in the effective weights).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    #[serde(default)]
    pub no_vsp: bool,
    #[serde(default)]
    pub no_cc: bool,
    #[serde(default)]
    pub no_rec: bool,
    #[serde(default)]
    pub no_latent_gan: bool,
}

/// Everything one training run depends on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub net: NetConfig,
    pub weights: LossWeights,
    #[serde(default = "default_gan_flavor")]
    pub gan_flavor: GanFlavor,
    #[serde(default)]
    pub vsp: VspOptions,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub disc_steps_per_gen_step: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub ablation: AblationFlags,
    pub val_fraction: f64,
    pub normalize_inputs: bool,
}

fn default_gan_flavor() -> GanFlavor {
    GanFlavor::NonSaturating
}

impl TrainConfig {
    /// Conventional adversarial-training settings around a given net shape.
    pub fn new(net: NetConfig) -> Self {
        TrainConfig {
            net,
            weights: LossWeights::default(),
            gan_flavor: GanFlavor::NonSaturating,
            vsp: VspOptions::default(),
            lr_gen: 1e-4,
            lr_disc: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 128,
            steps: 2000,
            disc_steps_per_gen_step: 1,
            seeds: vec![0],
            ablation: AblationFlags::default(),
            val_fraction: 0.1,
            normalize_inputs: true,
        }
    }

    /// Loss weights after applying the ablation flags.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if self.ablation.no_rec {
            w.lambda_rec = 0.0;
        }
        if self.ablation.no_cc {
            w.lambda_cc = 0.0;
        }
        if self.ablation.no_vsp {
            w.lambda_vsp = 0.0;
        }
        w
    }

    fn loss_plan(&self) -> LossPlan {
        LossPlan {
            weights: self.effective_weights(),
            flavor: self.gan_flavor,
            vsp: self.vsp,
            latent_gan: !self.ablation.no_latent_gan,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.weights.validate()?;
        if !(self.lr_gen > 0.0 && self.lr_disc > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if self.disc_steps_per_gen_step == 0 {
            return Err(Error::Config("disc_steps_per_gen_step must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Bias-corrected adaptive-moment optimizer. Moment slots line up with the
/// parameter order of the model it steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, mut params: Vec<&mut Parameter>) {
        if self.m.is_empty() {
            for p in &params {
                self.m.push(Matrix::zeros(p.value.rows(), p.value.cols()));
                self.v.push(Matrix::zeros(p.value.rows(), p.value.cols()));
            }
        }
        assert_eq!(self.m.len(), params.len(), "optimizer slot mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pv, &g), (mv, vv)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * g;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * g * g;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// The mutable state of one run.
pub struct TrainState {
    pub net: TranslatorNet,
    pub discs: DiscriminatorSet,
    pub opt_gen: Adam,
    pub opt_disc: Adam,
    pub step: usize,
    pub history: Vec<LossBreakdown>,
}

/// Result of one seeded run.
pub struct TrainOutcome {
    pub net: TranslatorNet,
    pub history: Vec<LossBreakdown>,
    /// Unsupervised proxy on the held-out split: val cycle + reconstruction.
    pub val_proxy: f64,
    pub seed: u64,
}

fn split_indices(n: usize, val_fraction: f64, rng: &mut ChaCha12Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

fn sample_batch(data: &Matrix, batch: usize, rng: &mut ChaCha12Rng) -> Matrix {
    let n = data.rows();
    let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
    data.gather_rows(&idx)
}

/// Train one translator on two unpaired embedding sets.
///
/// Each step takes `disc_steps_per_gen_step` discriminator updates on fresh
/// minibatches, then one generator update. Deterministic given `seed`; the
/// input sets are never mutated. A non-finite loss aborts with the offending
/// term and step.
pub fn train(
    config: &TrainConfig,
    set_u: &EmbeddingSet,
    set_v: &EmbeddingSet,
    seed: RngSeed,
) -> Result<TrainOutcome> {
    config.validate()?;
    for (name, set, want) in [
        ("set_u", set_u, config.net.d1),
        ("set_v", set_v, config.net.d2),
    ] {
        if set.len() == 0 {
            return Err(Error::EmptyBatch("train input set"));
        }
        if set.dim() != want {
            return Err(Error::dim("train input", want, set.dim()));
        }
        set.vectors.check_finite(name)?;
    }

    let u_all = if config.normalize_inputs {
        set_u.normalize_rows().0.vectors
    } else {
        set_u.vectors.clone()
    };
    let v_all = if config.normalize_inputs {
        set_v.normalize_rows().0.vectors
    } else {
        set_v.vectors.clone()
    };

    let mut split_rng = ChaCha12Rng::seed_from_u64(seed.derive("split").0);
    let (u_train_idx, u_val_idx) = split_indices(u_all.rows(), config.val_fraction, &mut split_rng);
    let (v_train_idx, v_val_idx) = split_indices(v_all.rows(), config.val_fraction, &mut split_rng);
    let u_train = u_all.gather_rows(&u_train_idx);
    let u_val = u_all.gather_rows(&u_val_idx);
    let v_train = v_all.gather_rows(&v_train_idx);
    let v_val = v_all.gather_rows(&v_val_idx);

    let mut state = TrainState {
        net: TranslatorNet::init(&config.net, seed)?,
        discs: DiscriminatorSet::init(&config.net, seed)?,
        opt_gen: Adam::new(config.lr_gen, config.adam_beta1, config.adam_beta2, config.adam_eps),
        opt_disc: Adam::new(config.lr_disc, config.adam_beta1, config.adam_beta2, config.adam_eps),
        step: 0,
        history: Vec::with_capacity(config.steps),
    };
    let plan = config.loss_plan();
    let mut batch_rng = ChaCha12Rng::seed_from_u64(seed.derive("batches").0);

    for step in 0..config.steps {
        state.step = step;
        for _ in 0..config.disc_steps_per_gen_step {
            let bu = sample_batch(&u_train, config.batch_size, &mut batch_rng);
            let bv = sample_batch(&v_train, config.batch_size, &mut batch_rng);
            state.discs.zero_grads();
            let terms = discriminator_step_losses(
                &state.net,
                &mut state.discs,
                &bu,
                &bv,
                config.gan_flavor,
                plan.latent_gan,
            )?;
            let total: f64 = terms.iter().sum();
            if !total.is_finite() {
                return Err(Error::Numerical {
                    term: "discriminator adversarial".into(),
                    step,
                    value: total,
                });
            }
            state.opt_disc.step(state.discs.params_mut());
        }

        let bu = sample_batch(&u_train, config.batch_size, &mut batch_rng);
        let bv = sample_batch(&v_train, config.batch_size, &mut batch_rng);
        state.net.zero_grads();
        let breakdown = generator_step_losses(&mut state.net, &state.discs, &bu, &bv, &plan)?;
        for (name, value) in LossBreakdown::FIELD_NAMES.iter().zip(breakdown.fields()) {
            if !value.is_finite() {
                return Err(Error::Numerical {
                    term: (*name).to_string(),
                    step,
                    value,
                });
            }
        }
        state.opt_gen.step(state.net.params_mut());
        state.history.push(breakdown);
    }

    let val_proxy =
        cycle_loss(&state.net, &u_val, &v_val)? + reconstruction_loss(&state.net, &u_val, &v_val)?;
    Ok(TrainOutcome {
        net: state.net,
        history: state.history,
        val_proxy,
        seed: seed.0,
    })
}

/// Proxy score and seed of one candidate run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub val_proxy: f64,
}

pub struct MultiSeedOutcome {
    pub best: TrainOutcome,
    pub scores: Vec<SeedScore>,
}

/// Train once per configured seed and keep the run with the lowest
/// unsupervised validation proxy (no paired data involved).
pub fn multi_seed_select(
    config: &TrainConfig,
    set_u: &EmbeddingSet,
    set_v: &EmbeddingSet,
) -> Result<MultiSeedOutcome> {
    config.validate()?;
    let mut best: Option<TrainOutcome> = None;
    let mut scores = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let outcome = train(config, set_u, set_v, RngSeed(seed))?;
        scores.push(SeedScore {
            seed,
            val_proxy: outcome.val_proxy,
        });
        let better = match &best {
            None => true,
            Some(b) => outcome.val_proxy < b.val_proxy,
        };
        if better {
            best = Some(outcome);
        }
    }
    Ok(MultiSeedOutcome {
        best: best.expect("at least one seed"),
        scores,
    })
}

/// Uniform sample of `n` items without replacement, deterministic per seed.
pub fn subsample(set: &EmbeddingSet, n: usize, seed: RngSeed) -> Result<EmbeddingSet> {
    if n > set.len() {
        return Err(Error::Domain(format!(
            "cannot subsample {n} items from a set of {}",
            set.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed.derive("subsample").0);
    let mut idx: Vec<usize> = (0..set.len()).collect();
    // Partial Fisher-Yates: the first n slots end up a uniform sample.
    for i in 0..n {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(n);
    Ok(set.select(&idx))
}
