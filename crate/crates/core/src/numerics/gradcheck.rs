//! Central finite-difference verification of analytic gradients.

use super::layers::ParamModel;
use super::matrix::Matrix;
use crate::error::{Error, Result};

const REL_FLOOR: f64 = 1e-12;

/// Central-difference gradient of a scalar function at `point`.
pub fn numeric_gradient<F>(mut f: F, point: &Matrix, eps: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> Result<f64>,
{
    let mut grad = Matrix::zeros(point.rows(), point.cols());
    let mut probe = point.clone();
    for idx in 0..point.len() {
        let orig = probe.data()[idx];
        probe.data_mut()[idx] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[idx] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[idx] = orig;
        let d = (plus - minus) / (2.0 * eps);
        if !d.is_finite() {
            return Err(Error::Numerical {
                term: "numeric_gradient".into(),
                step: idx,
                value: d,
            });
        }
        grad.data_mut()[idx] = d;
    }
    Ok(grad)
}

/// Max over coordinates of |analytic − numeric| / (|numeric| + 1e−12).
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0f64, |worst, (&a, &n)| {
            worst.max((a - n).abs() / (n.abs() + REL_FLOOR))
        })
}

/// Compare an analytic input-gradient against central differences of `f`.
pub fn finite_difference_check<F>(
    f: F,
    point: &Matrix,
    analytic: &Matrix,
    eps: f64,
) -> Result<f64>
where
    F: FnMut(&Matrix) -> Result<f64>,
{
    let numeric = numeric_gradient(f, point, eps)?;
    Ok(max_relative_error(analytic, &numeric))
}

/// Verify the gradients stored in a model's parameters against central
/// differences of `loss`. The caller must have run the backward pass that
/// filled `Parameter::grad` before calling this.
pub fn check_model_gradients<M, F>(model: &mut M, mut loss: F, eps: f64) -> Result<f64>
where
    M: ParamModel,
    F: FnMut(&mut M) -> Result<f64>,
{
    let analytic: Vec<Matrix> = model.params().iter().map(|p| p.grad.clone()).collect();
    let mut worst = 0.0f64;
    for pi in 0..analytic.len() {
        for ci in 0..analytic[pi].len() {
            let orig = model.params()[pi].value.data()[ci];
            model.params_mut()[pi].value.data_mut()[ci] = orig + eps;
            let plus = loss(model)?;
            model.params_mut()[pi].value.data_mut()[ci] = orig - eps;
            let minus = loss(model)?;
            model.params_mut()[pi].value.data_mut()[ci] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::Numerical {
                    term: format!("finite difference of {}", model.params()[pi].name),
                    step: ci,
                    value: numeric,
                });
            }
            let a = analytic[pi].data()[ci];
            worst = worst.max((a - numeric).abs() / (numeric.abs() + REL_FLOOR));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::layers::{
        glorot_uniform, silu, silu_backward, Linear, Mlp, ResidualBlock,
    };
    use crate::numerics::matrix::dot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn linear_layer_is_exactly_linear() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut lin = Linear::new("lin", 3, 2, &mut rng);
        let x = glorot_uniform(2, 3, &mut rng);
        // Scalar loss: sum of outputs.
        let (y, cache) = lin.forward_cached(&x).unwrap();
        let up = Matrix::from_vec(y.rows(), y.cols(), vec![1.0; y.len()]).unwrap();
        let dx = lin.backward(&cache, &up);
        let lin_ref = lin.clone();
        let err = finite_difference_check(
            |p| Ok(lin_ref.forward(p)?.data().iter().sum()),
            &x,
            &dx,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "linear input-grad error {err}");
    }

    #[test]
    fn silu_gradient_at_two() {
        let x = Matrix::row_vector(vec![2.0]);
        let up = Matrix::row_vector(vec![1.0]);
        let analytic = silu_backward(&x, &up);
        let err = finite_difference_check(
            |p| Ok(silu(p).data().iter().sum()),
            &x,
            &analytic,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "silu grad error {err}");
    }

    #[test]
    fn residual_block_gradient() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut block = ResidualBlock::new("blk", 4, &mut rng);
        let x = glorot_uniform(3, 4, &mut rng);
        let (y, cache) = block.forward_cached(&x).unwrap();
        let up = Matrix::from_vec(y.rows(), y.cols(), vec![1.0; y.len()]).unwrap();
        let dx = block.backward(&cache, &up);

        let block_ref = block.clone();
        let err = finite_difference_check(
            |p| Ok(block_ref.forward(p)?.data().iter().sum()),
            &x,
            &dx,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-4, "residual input-grad error {err}");

        let xc = x.clone();
        let err = check_model_gradients(
            &mut block,
            |b| Ok(b.forward(&xc)?.data().iter().sum()),
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-4, "residual param-grad error {err}");
    }

    #[test]
    fn mlp_weighted_loss_gradients() {
        // A non-trivial scalar head so every gradient path is exercised.
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut mlp = Mlp::feedforward("m", 3, 5, 2, 2, &mut rng);
        let x = glorot_uniform(4, 3, &mut rng);
        let w = glorot_uniform(1, 2, &mut rng);
        let loss_of = |y: &Matrix| -> f64 {
            (0..y.rows()).map(|i| dot(y.row(i), w.row(0)).powi(2)).sum()
        };

        let (y, cache) = mlp.forward_cached(&x).unwrap();
        let mut up = Matrix::zeros(y.rows(), y.cols());
        for i in 0..y.rows() {
            let s = dot(y.row(i), w.row(0));
            for j in 0..y.cols() {
                up.set(i, j, 2.0 * s * w.get(0, j));
            }
        }
        let dx = mlp.backward(&cache, &up);

        let mlp_ref = mlp.clone();
        let err =
            finite_difference_check(|p| Ok(loss_of(&mlp_ref.forward(p)?)), &x, &dx, 1e-4).unwrap();
        assert!(err < 1e-5, "mlp input-grad error {err}");

        let xc = x.clone();
        let err = check_model_gradients(&mut mlp, |m| Ok(loss_of(&m.forward(&xc)?)), 1e-4).unwrap();
        assert!(err < 1e-4, "mlp param-grad error {err}");
    }
}
