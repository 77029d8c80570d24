// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::diffcore::Tensor;
use crate::encoders::EncoderModel;
use crate::error::{Error, Result};

/// Work done by a fixed-point inversion.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InversionStats {
    /// Iterations summed over all inverted blocks.
    pub iterations: usize,
    /// Largest iteration count of a single block.
    pub max_block_iterations: usize,
    /// Largest final residual `‖h_l(x) - y‖` over the blocks.
    pub residual: f64,
}

/// Solves `h_l(x) = y` for block `l` by iterating `x <- y - g_l(x)`.
///
/// The iteration is a contraction whenever the branch is, so it converges
/// geometrically at the branch's Lipschitz rate. Stops once the residual
/// `‖x + g_l(x) - y‖` drops below `tol`.
pub fn invert_residual_block(
    model: &EncoderModel,
    l: usize,
    y: &Tensor,
    max_iter: usize,
    tol: f64,
) -> Result<(Tensor, InversionStats)> {
    if l >= model.depth() {
        return Err(Error::contract(format!(
            "block {l} out of range for depth {}",
            model.depth()
        )));
    }
    let mut x = y.clone();
    let mut residual = f64::INFINITY;
    for k in 0..=max_iter {
        let hx = model.apply_block(l, &x)?;
        let r = y.sub(&hx)?;
        residual = r.norm();
        if residual < tol {
            return Ok((
                x,
                InversionStats {
                    iterations: k,
                    max_block_iterations: k,
                    residual,
                },
            ));
        }
        if !residual.is_finite() || k == max_iter {
            break;
        }
        x = x.add(&r)?;
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// Inverts the whole residual stack, `h_1^{-1} ∘ … ∘ h_L^{-1}(y)`, for a
/// `(batch, time, hidden)` input.
pub fn invert_hidden(
    model: &EncoderModel,
    y: &Tensor,
    max_iter: usize,
    tol: f64,
) -> Result<(Tensor, InversionStats)> {
    let mut x = y.clone();
    let mut stats = InversionStats::default();
    for l in (0..model.depth()).rev() {
        let (prev, s) = invert_residual_block(model, l, &x, max_iter, tol)?;
        x = prev;
        stats.iterations += s.iterations;
        stats.max_block_iterations = stats.max_block_iterations.max(s.iterations);
        stats.residual = stats.residual.max(s.residual);
    }
    Ok((x, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{Activation, EncoderConfig};
    use crate::specnorm::SNConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(c: f64, depth: usize) -> EncoderModel {
        EncoderModel::new(
            EncoderConfig {
                input_dim: 3,
                hidden: 6,
                depth,
                kernel_width: 3,
                output_dim: None,
                activation: Activation::Tanh,
                sn: Some(SNConfig::with_cap(c)),
                ..EncoderConfig::default()
            },
            21,
        )
        .unwrap()
    }

    #[test]
    fn constant_branch_is_solved_exactly() {
        let mut m = model(0.5, 1);
        m.blocks[0].weight = Tensor::zeros(m.blocks[0].weight.shape());
        m.blocks[0].bias = Tensor::vector(vec![0.3, -0.2, 0.1, 0.0, 0.5, -0.4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = Tensor::randn(&[1, 4, 6], 1.0, &mut rng);
        let (x, _) = invert_residual_block(&m, 0, &y, 200, 1e-12).unwrap();
        for t in 0..4 {
            for c in 0..6 {
                let b: f64 = m.blocks[0].bias.data()[c];
                let expect = y.data()[t * 6 + c] - b.tanh();
                assert!((x.data()[t * 6 + c] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn block_round_trip_at_half_cap() {
        let m = model(0.5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::randn(&[1, 10, 6], 1.0, &mut rng);
        let y = m.apply_block(0, &x).unwrap();
        let (xr, stats) = invert_residual_block(&m, 0, &y, 200, 1e-10).unwrap();
        assert!(xr.distance(&x) < 1e-8);
        assert!(stats.iterations <= 60, "{}", stats.iterations);
    }

    #[test]
    fn larger_cap_needs_more_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(&[1, 10, 6], 1.0, &mut rng);
        let iters = |c: f64| {
            let mut m = model(c, 1);
            m.rescale_block(0, c, 200);
            let y = m.apply_block(0, &x).unwrap();
            invert_residual_block(&m, 0, &y, 2000, 1e-10)
                .unwrap()
                .1
                .iterations
        };
        assert!(iters(0.99) > iters(0.5));
    }

    #[test]
    fn identity_model_inverts_to_itself() {
        let m = EncoderModel::identity(3, 4, Activation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = Tensor::randn(&[2, 5, 3], 1.0, &mut rng);
        let (x, stats) = invert_hidden(&m, &y, 200, 1e-8).unwrap();
        assert_eq!(x, y);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn stack_round_trip() {
        for depth in [2, 8] {
            let m = model(0.9, depth);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let x = Tensor::randn(&[1, 12, 6], 0.5, &mut rng);
            let y = m.apply_hidden(&x).unwrap();
            let (xr, _) = invert_hidden(&m, &y, 200, 1e-8).unwrap();
            assert!(xr.distance(&x) < 1e-6, "depth {depth}: {}", xr.distance(&x));
        }
    }

    #[test]
    fn out_of_range_block_is_contract_error() {
        let m = model(0.5, 2);
        let y = Tensor::zeros(&[1, 3, 6]);
        assert!(matches!(
            invert_residual_block(&m, 5, &y, 10, 1e-8),
            Err(Error::Contract(_))
        ));
    }
}
