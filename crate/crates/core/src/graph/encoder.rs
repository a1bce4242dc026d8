//! Two-layer graph convolutional encoder with parametric ReLU activations.
//!
//! Forward pass: out = prelu_a2( A_hat * prelu_a1( A_hat * X * W1 ) * W2 ).
//! Both weight matrices are h x h (the representation width never changes),
//! and each layer has a single learnable slope shared across units. The
//! backward pass is hand-derived; `tests` checks it against central finite
//! differences.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::adj::NormAdj;
use crate::error::{Error, Result};

pub const DEFAULT_SLOPE: f64 = 0.25;

#[derive(Clone, Debug)]
pub struct GcnEncoder {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub slope1: f64,
    pub slope2: f64,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    /// A_hat * X.
    pub ax: Array2<f64>,
    /// Pre-activation of layer 1.
    pub z1: Array2<f64>,
    /// A_hat * prelu(z1).
    pub ah1: Array2<f64>,
    /// Pre-activation of layer 2.
    pub z2: Array2<f64>,
    /// prelu(z2): the encoder output.
    pub out: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub slope1: f64,
    pub slope2: f64,
}

impl ParamGrads {
    pub fn zeros(h: usize) -> Self {
        ParamGrads {
            w1: Array2::zeros((h, h)),
            w2: Array2::zeros((h, h)),
            slope1: 0.0,
            slope2: 0.0,
        }
    }

    pub fn add(&mut self, other: &ParamGrads) {
        self.w1 += &other.w1;
        self.w2 += &other.w2;
        self.slope1 += other.slope1;
        self.slope2 += other.slope2;
    }
}

fn prelu(z: &Array2<f64>, slope: f64) -> Array2<f64> {
    z.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// Elementwise product of `grad` with d prelu(z)/dz.
fn prelu_backward(z: &Array2<f64>, slope: f64, grad: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(z, |g, &v| {
        if v <= 0.0 {
            *g *= slope;
        }
    });
    out
}

/// d prelu(z)/d slope contracted with `grad`: sum of grad * z over the
/// non-positive branch.
fn slope_grad(z: &Array2<f64>, grad: &Array2<f64>) -> f64 {
    z.iter()
        .zip(grad.iter())
        .map(|(&v, &g)| if v <= 0.0 { g * v } else { 0.0 })
        .sum()
}

impl GcnEncoder {
    /// Seeded uniform(-1/sqrt(h), 1/sqrt(h)) weights, drawn w1 then w2 in
    /// row-major order; slopes start at 0.25.
    pub fn init(h: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if h == 0 {
            return Err(Error::Invalid {
                what: "hidden dimension".into(),
                reason: "must be positive".into(),
            });
        }
        let bound = 1.0 / (h as f64).sqrt();
        let mut draw = |rows: usize, cols: usize| {
            let mut m = Array2::zeros((rows, cols));
            for i in 0..rows {
                for j in 0..cols {
                    m[(i, j)] = rng.random_range(-bound..bound);
                }
            }
            m
        };
        let w1 = draw(h, h);
        let w2 = draw(h, h);
        Ok(GcnEncoder {
            w1,
            w2,
            slope1: DEFAULT_SLOPE,
            slope2: DEFAULT_SLOPE,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn forward(&self, x: &ArrayView2<f64>, adj: &NormAdj) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x, adj)?.out)
    }

    pub fn forward_cached(&self, x: &ArrayView2<f64>, adj: &NormAdj) -> Result<ForwardCache> {
        if x.ncols() != self.hidden_dim() {
            return Err(Error::BadDimension {
                expected: self.hidden_dim(),
                got: x.ncols(),
            });
        }
        let ax = adj.matmul(x);
        let z1 = ax.dot(&self.w1);
        let h1 = prelu(&z1, self.slope1);
        let ah1 = adj.matmul(&h1.view());
        let z2 = ah1.dot(&self.w2);
        let out = prelu(&z2, self.slope2);
        Ok(ForwardCache {
            ax,
            z1,
            ah1,
            z2,
            out,
        })
    }

    /// Parameter gradients for a loss whose gradient with respect to the
    /// encoder output is `grad_out`. A_hat is symmetric, so its transpose in
    /// the chain rule is itself.
    pub fn backward(
        &self,
        adj: &NormAdj,
        cache: &ForwardCache,
        grad_out: &Array2<f64>,
    ) -> ParamGrads {
        let dslope2 = slope_grad(&cache.z2, grad_out);
        let dz2 = prelu_backward(&cache.z2, self.slope2, grad_out);
        let dw2 = cache.ah1.t().dot(&dz2);
        let dah1 = dz2.dot(&self.w2.t());
        let dh1 = adj.matmul(&dah1.view());
        let dslope1 = slope_grad(&cache.z1, &dh1);
        let dz1 = prelu_backward(&cache.z1, self.slope1, &dh1);
        let dw1 = cache.ax.t().dot(&dz1);
        ParamGrads {
            w1: dw1,
            w2: dw2,
            slope1: dslope1,
            slope2: dslope2,
        }
    }

    /// One SGD step with decoupled weight decay on the weight matrices only;
    /// the slopes are not decayed.
    pub fn apply_step(&mut self, grads: &ParamGrads, lr: f64, weight_decay: f64) {
        self.w1.zip_mut_with(&grads.w1, |w, &g| {
            *w -= lr * (g + weight_decay * *w);
        });
        self.w2.zip_mut_with(&grads.w2, |w, &g| {
            *w -= lr * (g + weight_decay * *w);
        });
        self.slope1 -= lr * grads.slope1;
        self.slope2 -= lr * grads.slope2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy_setup() -> (Array2<f64>, NormAdj, GcnEncoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 4;
        let n = 5;
        let mut x = Array2::zeros((n, h));
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let edges = [(0u32, 1u32), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)];
        let adj = NormAdj::from_edges(n, &edges);
        let enc = GcnEncoder::init(h, &mut rng).unwrap();
        (x, adj, enc)
    }

    /// Scalar loss used to exercise every output entry: sum of sin(out).
    fn loss_of(enc: &GcnEncoder, x: &Array2<f64>, adj: &NormAdj) -> f64 {
        enc.forward(&x.view(), adj).unwrap().mapv(f64::sin).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (x, adj, enc) = toy_setup();
        let cache = enc.forward_cached(&x.view(), &adj).unwrap();
        let grad_out = cache.out.mapv(f64::cos);
        let grads = enc.backward(&adj, &cache, &grad_out);

        let eps = 1e-6;
        let h = enc.hidden_dim();
        let check = |analytic: f64, mut bump: Box<dyn FnMut(f64) -> GcnEncoder>| {
            let plus = loss_of(&bump(eps), &x, &adj);
            let minus = loss_of(&bump(-eps), &x, &adj);
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                ((analytic - numeric) / denom).abs() < 1e-5,
                "analytic {analytic} vs numeric {numeric}"
            );
        };

        for i in 0..h {
            for j in 0..h {
                let base = enc.clone();
                check(
                    grads.w1[(i, j)],
                    Box::new(move |d| {
                        let mut e = base.clone();
                        e.w1[(i, j)] += d;
                        e
                    }),
                );
                let base = enc.clone();
                check(
                    grads.w2[(i, j)],
                    Box::new(move |d| {
                        let mut e = base.clone();
                        e.w2[(i, j)] += d;
                        e
                    }),
                );
            }
        }
        let base = enc.clone();
        check(
            grads.slope1,
            Box::new(move |d| {
                let mut e = base.clone();
                e.slope1 += d;
                e
            }),
        );
        let base = enc.clone();
        check(
            grads.slope2,
            Box::new(move |d| {
                let mut e = base.clone();
                e.slope2 += d;
                e
            }),
        );
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let a = GcnEncoder::init(8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = GcnEncoder::init(8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.w1, b.w1);
        assert_eq!(a.w2, b.w2);
        let bound = 1.0 / 8f64.sqrt();
        assert!(a.w1.iter().chain(a.w2.iter()).all(|v| v.abs() < bound));
        assert_eq!(a.slope1, 0.25);
        // Different seed, different weights.
        let c = GcnEncoder::init(8, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_ne!(a.w1, c.w1);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (x, adj, enc) = toy_setup();
        let wide = ndarray::concatenate(
            ndarray::Axis(1),
            &[x.view(), x.view()],
        )
        .unwrap();
        let err = enc.forward(&wide.view(), &adj).unwrap_err();
        assert!(matches!(err, Error::BadDimension { expected: 4, got: 8 }));
    }

    #[test]
    fn weight_decay_shrinks_weights_but_not_slopes() {
        let (_, _, mut enc) = toy_setup();
        let before = enc.w1.clone();
        let slope_before = enc.slope1;
        enc.apply_step(&ParamGrads::zeros(4), 0.1, 0.5);
        for (b, a) in before.iter().zip(enc.w1.iter()) {
            assert!((a - b * (1.0 - 0.05)).abs() < 1e-15);
        }
        assert_eq!(enc.slope1, slope_before);
    }
}
