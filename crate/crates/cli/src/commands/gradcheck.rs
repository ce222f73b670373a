use std::process::ExitCode;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use v2v_core::losses::{
    adversarial_total, cycle_loss, cycle_loss_with_grads, discriminator_step_losses,
    generator_adversarial_with_grads, reconstruction_loss, reconstruction_loss_with_grads,
    vsp_loss, vsp_loss_with_grads, GanFlavor, GanSide, VspOptions,
};
use v2v_core::numerics::{
    check_model_gradients, finite_difference_check, glorot_uniform, silu, silu_backward, Linear,
    Matrix, Mlp, ParamModel, ResidualBlock, RngSeed,
};
use v2v_core::translator::{DiscriminatorSet, NetConfig, TranslatorNet};
use v2v_core::{Error, Result};

#[derive(Args)]
pub struct GradcheckArgs {
    /// Layer widths to exercise.
    #[arg(long, value_delimiter = ',', default_values_t = vec![4, 6, 8])]
    pub widths: Vec<usize>,
    /// Maximum allowed relative error between analytic and central-difference
    /// gradients.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

struct CheckOutcome {
    name: String,
    error: f64,
}

fn net_config(width: usize) -> NetConfig {
    NetConfig {
        d1: width,
        d2: width.saturating_sub(1).max(2),
        latent_dim: width.saturating_sub(1).max(2),
        adapter_depth: 1,
        adapter_width: width + 1,
        backbone_blocks: 1,
        disc_depth: 1,
        disc_width: width + 1,
        normalize_output: true,
    }
}

fn run_width(width: usize, seed: u64, out: &mut Vec<CheckOutcome>) -> Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ width as u64);
    let eps = 1e-5;

    // silu
    let x = glorot_uniform(3, width, &mut rng);
    let analytic = silu_backward(&x, &Matrix::from_vec(3, width, vec![1.0; 3 * width])?);
    let err = finite_difference_check(|p| Ok(silu(p).data().iter().sum()), &x, &analytic, eps)?;
    out.push(CheckOutcome {
        name: format!("silu[{width}]"),
        error: err,
    });

    // linear
    let mut lin = Linear::new("lin", width, width + 1, &mut rng);
    let x = glorot_uniform(2, width, &mut rng);
    let (y, cache) = lin.forward_cached(&x)?;
    let ones = Matrix::from_vec(y.rows(), y.cols(), vec![1.0; y.len()])?;
    let dx = lin.backward(&cache, &ones);
    let lin_ref = lin.clone();
    let err = finite_difference_check(
        |p| Ok(lin_ref.forward(p)?.data().iter().sum()),
        &x,
        &dx,
        eps,
    )?;
    out.push(CheckOutcome {
        name: format!("linear[{width}]"),
        error: err,
    });

    // layer_norm inside a one-hidden-layer mlp (exercises γ, β, and inputs)
    let mut mlp = Mlp::feedforward("m", width, width + 1, 1, width, &mut rng);
    let x = glorot_uniform(3, width, &mut rng);
    mlp.zero_grads();
    let (y, cache) = mlp.forward_cached(&x)?;
    let up = y.map(|v| 2.0 * v);
    mlp.backward(&cache, &up);
    let xc = x.clone();
    let err = check_model_gradients(
        &mut mlp,
        |m| Ok(m.forward(&xc)?.data().iter().map(|v| v * v).sum()),
        eps,
    )?;
    out.push(CheckOutcome {
        name: format!("layer_norm_mlp[{width}]"),
        error: err,
    });

    // residual block
    let mut block = ResidualBlock::new("blk", width, &mut rng);
    let x = glorot_uniform(3, width, &mut rng);
    block.zero_grads();
    let (y, cache) = block.forward_cached(&x)?;
    let up = y.map(|v| 2.0 * v);
    block.backward(&cache, &up);
    let xc = x.clone();
    let err = check_model_gradients(
        &mut block,
        |b| Ok(b.forward(&xc)?.data().iter().map(|v| v * v).sum()),
        eps,
    )?;
    out.push(CheckOutcome {
        name: format!("residual_block[{width}]"),
        error: err,
    });

    // full translator and per-loss gradients
    let cfg = net_config(width);
    let seed = RngSeed(seed ^ (width as u64) << 8);
    let discs = DiscriminatorSet::init(&cfg, seed)?;
    let bu = glorot_uniform(3, cfg.d1, &mut rng);
    let bv = glorot_uniform(3, cfg.d2, &mut rng);
    let vsp_opts = VspOptions::default();

    let checks: Vec<(&str, Box<dyn Fn(&mut TranslatorNet) -> Result<f64>>)> = vec![
        (
            "loss_rec",
            Box::new({
                let (bu, bv) = (bu.clone(), bv.clone());
                move |n: &mut TranslatorNet| reconstruction_loss(n, &bu, &bv)
            }),
        ),
        (
            "loss_cc",
            Box::new({
                let (bu, bv) = (bu.clone(), bv.clone());
                move |n: &mut TranslatorNet| cycle_loss(n, &bu, &bv)
            }),
        ),
        (
            "loss_vsp",
            Box::new({
                let (bu, bv) = (bu.clone(), bv.clone());
                move |n: &mut TranslatorNet| vsp_loss(n, &bu, &bv, &vsp_opts)
            }),
        ),
        (
            "loss_adv_gen",
            Box::new({
                let (bu, bv) = (bu.clone(), bv.clone());
                let discs = discs.clone();
                move |n: &mut TranslatorNet| {
                    adversarial_total(n, &discs, &bu, &bv, GanSide::Generator, GanFlavor::NonSaturating)
                }
            }),
        ),
    ];

    for (name, value_fn) in checks {
        let mut net = TranslatorNet::init(&cfg, seed)?;
        net.zero_grads();
        match name {
            "loss_rec" => {
                reconstruction_loss_with_grads(&mut net, &bu, &bv, 1.0)?;
            }
            "loss_cc" => {
                cycle_loss_with_grads(&mut net, &bu, &bv, 1.0)?;
            }
            "loss_vsp" => {
                vsp_loss_with_grads(&mut net, &bu, &bv, &vsp_opts, 1.0)?;
            }
            "loss_adv_gen" => {
                generator_adversarial_with_grads(
                    &mut net,
                    &discs,
                    &bu,
                    &bv,
                    GanFlavor::NonSaturating,
                    true,
                    1.0,
                )?;
            }
            _ => unreachable!(),
        }
        let err = check_model_gradients(&mut net, |n| value_fn(n), eps)?;
        out.push(CheckOutcome {
            name: format!("{name}[{width}]"),
            error: err,
        });
    }

    // discriminator-side gradients
    let net = TranslatorNet::init(&cfg, seed)?;
    let mut discs = DiscriminatorSet::init(&cfg, seed)?;
    discs.zero_grads();
    discriminator_step_losses(&net, &mut discs, &bu, &bv, GanFlavor::NonSaturating, true)?;
    let err = check_model_gradients(
        &mut discs,
        |d| adversarial_total(&net, d, &bu, &bv, GanSide::Discriminator, GanFlavor::NonSaturating),
        eps,
    )?;
    out.push(CheckOutcome {
        name: format!("loss_adv_disc[{width}]"),
        error: err,
    });

    Ok(())
}

pub fn run(args: GradcheckArgs) -> Result<ExitCode> {
    if args.widths.is_empty() {
        return Err(Error::Config("at least one width is required".into()));
    }
    let mut outcomes = Vec::new();
    for &width in &args.widths {
        if width < 2 {
            return Err(Error::Config("widths must be >= 2".into()));
        }
        run_width(width, args.seed, &mut outcomes)?;
    }

    let mut worst: f64 = 0.0;
    for c in &outcomes {
        let status = if c.error < args.tol { "ok" } else { "FAIL" };
        println!("{:<24} max_rel_err {:>12.3e}  {status}", c.name, c.error);
        worst = worst.max(c.error);
    }
    println!(
        "gradcheck: {} checks, worst {:.3e}, tol {:.1e}",
        outcomes.len(),
        worst,
        args.tol
    );
    if worst < args.tol {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::Numerical {
            term: "gradcheck".to_string(),
            step: 0,
            value: worst,
        })
    }
}
