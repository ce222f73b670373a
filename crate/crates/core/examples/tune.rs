//! Scratch harness for sizing the synthetic end-to-end run.
//! Usage: tune key=value ...   (steps, batch, lr, lr_disc, z, width, blocks,
//! disc_width, disc_depth, rec, cc, vsp, flavor=ns|ls, seeds, clusters,
//! spread, n_train, disc_steps)

use std::collections::HashMap;
use std::time::Instant;

use v2v_core::data::{generate_synthetic_world, MapKind, WorldConfig};
use v2v_core::evaluation::{cosine, eval_translation};
use v2v_core::losses::GanFlavor;
use v2v_core::numerics::RngSeed;
use v2v_core::trainer::{train, TrainConfig};
use v2v_core::translator::NetConfig;

fn main() {
    let kv: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| {
            a.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect();
    let getf = |k: &str, d: f64| kv.get(k).and_then(|v| v.parse().ok()).unwrap_or(d);
    let getu = |k: &str, d: usize| kv.get(k).and_then(|v| v.parse().ok()).unwrap_or(d);

    let steps = getu("steps", 2000);
    let n_train = getu("n_train", 5000);
    let world_cfg = WorldConfig {
        latent_dim: 32,
        d1: 64,
        d2: 64,
        n_train_u: n_train,
        n_train_v: getu("n_train_v", n_train),
        n_eval: 500,
        latent_clusters: getu("clusters", 32),
        cluster_weight_exponent: getf("zipf", 1.0),
        cluster_noise_dims: getu("noise_dims", 0),
        cluster_spread: getf("spread", 0.35),
        map_kind: MapKind::Nonlinear,
        shared_maps: false,
    };
    let world = generate_synthetic_world(&world_cfg, RngSeed(7)).unwrap();

    let naive = eval_translation(&world.eval_u.vectors, &world.eval_v.vectors, 500).unwrap();
    println!(
        "naive: cos {:.4} top1 {:.4} rank {:.2}",
        naive.mean_cos, naive.top1, naive.mean_rank
    );

    let net = NetConfig {
        d1: 64,
        d2: 64,
        latent_dim: getu("z", 48),
        adapter_depth: 1,
        adapter_width: getu("width", 96),
        backbone_blocks: getu("blocks", 2),
        disc_depth: getu("disc_depth", 1),
        disc_width: getu("disc_width", 64),
        normalize_output: true,
    };
    let mut cfg = TrainConfig::new(net);
    cfg.batch_size = getu("batch", 64);
    cfg.steps = steps;
    cfg.lr_gen = getf("lr", 3e-4);
    cfg.lr_disc = getf("lr_disc", cfg.lr_gen);
    cfg.disc_steps_per_gen_step = getu("disc_steps", 1);
    cfg.adam_beta1 = getf("beta1", cfg.adam_beta1);
    cfg.adam_beta2 = getf("beta2", cfg.adam_beta2);
    cfg.weights.lambda_rec = getf("rec", 10.0);
    cfg.weights.lambda_cc = getf("cc", 10.0);
    cfg.weights.lambda_vsp = getf("vsp", 2.0);
    cfg.weights.lambda_gen = getf("gen", 1.0);
    cfg.gan_flavor = match kv.get("flavor").map(|s| s.as_str()) {
        Some("ls") => GanFlavor::LeastSquares,
        _ => GanFlavor::NonSaturating,
    };

    for seed in 0..getu("seeds", 1) as u64 {
        let start = Instant::now();
        let out = match train(&cfg, &world.train_u, &world.train_v, RngSeed(seed)) {
            Ok(o) => o,
            Err(e) => {
                println!("seed {seed}: ABORT {e}");
                continue;
            }
        };
        let secs = start.elapsed().as_secs_f64();
        let pred = out.net.translate_1to2(&world.eval_u.vectors).unwrap();
        let report = eval_translation(&pred, &world.eval_v.vectors, 500).unwrap();
        let l1 = out.net.latent_1(&world.eval_u.vectors).unwrap();
        let l2 = out.net.latent_2(&world.eval_v.vectors).unwrap();
        // Centered latent cosine of true pairs minus shifted (wrong) pairs.
        let center = |m: &v2v_core::Matrix| -> v2v_core::Matrix {
            let mut mu = vec![0.0; m.cols()];
            for i in 0..m.rows() {
                for (j, &v) in m.row(i).iter().enumerate() {
                    mu[j] += v / m.rows() as f64;
                }
            }
            let mut out = m.clone();
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                for (j, v) in row.iter_mut().enumerate() {
                    *v -= mu[j];
                }
            }
            out
        };
        let l1c = center(&l1);
        let l2c = center(&l2);
        let n_eval = l1.rows();
        let paired: f64 = (0..n_eval)
            .map(|i| cosine(l1c.row(i), l2c.row(i)).unwrap())
            .sum::<f64>()
            / n_eval as f64;
        let shifted: f64 = (0..n_eval)
            .map(|i| cosine(l1c.row(i), l2c.row((i + 1) % n_eval)).unwrap())
            .sum::<f64>()
            / n_eval as f64;
        let latent_cos = paired - shifted;
        let last = out.history.last().unwrap();
        println!(
            "seed {seed}: {steps}st {secs:.0}s ({:.0}ms/st) | cos {:.4} top1 {:.4} rank {:.2} | latcos {:.3} proxy {:.4} | adv {:.2} rec {:.3} cc {:.3} vsp {:.3}",
            1000.0 * secs / steps as f64,
            report.mean_cos,
            report.top1,
            report.mean_rank,
            latent_cos,
            out.val_proxy,
            last.adv_total,
            last.rec,
            last.cc,
            last.vsp,
        );
    }
}
