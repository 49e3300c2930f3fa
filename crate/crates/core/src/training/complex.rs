//! Asymmetric ComplEx scorer for parent–child event pairs.
//!
//! An event encoding `e` is projected into a real and an imaginary part,
//! `Re(e) = W_re·e + b_re` and `Im(e) = W_im·e + b_im`, and a pair is scored
//! with the antisymmetric half of the Hermitian product:
//!
//! `s(p, c) = Im(p)·(Re(c) ⊙ r) − Re(p)·(Im(c) ⊙ r)`
//!
//! where `r` holds the imaginary part of the relation embedding.

use rand::Rng;

use crate::encoder::dot;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplExHead {
    pub dim: usize,
    /// `d x d`, row-major.
    pub w_re: Vec<f64>,
    pub w_im: Vec<f64>,
    pub b_re: Vec<f64>,
    pub b_im: Vec<f64>,
    pub r: Vec<f64>,
}

/// Real and imaginary projections of one encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplExHead {
    pub fn zeros(dim: usize) -> Self {
        ComplExHead {
            dim,
            w_re: vec![0.0; dim * dim],
            w_im: vec![0.0; dim * dim],
            b_re: vec![0.0; dim],
            b_im: vec![0.0; dim],
            r: vec![0.0; dim],
        }
    }

    /// Uniform(-scale, scale) weights and relation vector, zero biases.
    pub fn random<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-scale..scale)).collect() };
        let w_re = draw(dim * dim);
        let w_im = draw(dim * dim);
        let r = draw(dim);
        ComplExHead {
            dim,
            w_re,
            w_im,
            b_re: vec![0.0; dim],
            b_im: vec![0.0; dim],
            r,
        }
    }

    /// The five parameter blocks in checkpoint order.
    pub fn blocks(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("complex.W_Re", &self.w_re),
            ("complex.W_Im", &self.w_im),
            ("complex.b_Re", &self.b_re),
            ("complex.b_Im", &self.b_im),
            ("complex.r", &self.r),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.w_re,
            &mut self.w_im,
            &mut self.b_re,
            &mut self.b_im,
            &mut self.r,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    fn check(&self, e: &[f64]) -> Result<()> {
        if e.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: e.len(),
            });
        }
        Ok(())
    }

    pub fn project(&self, e: &[f64]) -> Result<Projection> {
        self.check(e)?;
        let d = self.dim;
        let affine = |w: &[f64], b: &[f64]| -> Vec<f64> {
            (0..d).map(|a| dot(&w[a * d..(a + 1) * d], e) + b[a]).collect()
        };
        Ok(Projection {
            re: affine(&self.w_re, &self.b_re),
            im: affine(&self.w_im, &self.b_im),
        })
    }

    /// `s(parent, child)` over raw encodings.
    pub fn score(&self, parent: &[f64], child: &[f64]) -> Result<f64> {
        let p = self.project(parent)?;
        let c = self.project(child)?;
        Ok(score_projected(&p, &c, &self.r))
    }

    /// Adds `W_reᵀ·g_re + W_imᵀ·g_im` to `out`: the gradient reaching the
    /// encoding from gradients on its projections.
    pub(crate) fn backprop_encoding(&self, g_re: &[f64], g_im: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for a in 0..d {
            let row_re = &self.w_re[a * d..(a + 1) * d];
            let row_im = &self.w_im[a * d..(a + 1) * d];
            for b in 0..d {
                out[b] += row_re[b] * g_re[a] + row_im[b] * g_im[a];
            }
        }
    }

    /// Accumulates weight and bias gradients for one encoding `e` whose
    /// projections received `g_re` and `g_im`.
    pub(crate) fn accumulate_param_grad(grad: &mut ComplExHead, e: &[f64], g_re: &[f64], g_im: &[f64]) {
        let d = grad.dim;
        for a in 0..d {
            for b in 0..d {
                grad.w_re[a * d + b] += g_re[a] * e[b];
                grad.w_im[a * d + b] += g_im[a] * e[b];
            }
            grad.b_re[a] += g_re[a];
            grad.b_im[a] += g_im[a];
        }
    }
}

/// Score from already-projected parent and child.
pub fn score_projected(parent: &Projection, child: &Projection, r: &[f64]) -> f64 {
    parent
        .im
        .iter()
        .zip(&parent.re)
        .zip(child.re.iter().zip(&child.im))
        .zip(r)
        .map(|(((pi, pr), (cr, ci)), rk)| pi * cr * rk - pr * ci * rk)
        .sum()
}

/// `s(e_p, e_c)` for the given head.
pub fn complex_score(head: &ComplExHead, parent: &[f64], child: &[f64]) -> Result<f64> {
    head.score(parent, child)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn zero_inputs_score_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let head = ComplExHead::random(4, 0.5, &mut rng);
        assert_eq!(complex_score(&head, &[0.0; 4], &[0.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_one_dimensional_case() {
        let p = Projection {
            re: vec![3.0],
            im: vec![4.0],
        };
        let c = Projection {
            re: vec![1.0],
            im: vec![2.0],
        };
        assert_eq!(score_projected(&p, &c, &[1.0]), -2.0);
        assert_eq!(score_projected(&c, &p, &[1.0]), 2.0);
    }

    #[test]
    fn identity_projection_matches_projected_form() {
        let head = ComplExHead {
            dim: 1,
            w_re: vec![1.0],
            w_im: vec![1.0],
            b_re: vec![0.0],
            b_im: vec![1.0],
            r: vec![1.0],
        };
        // Re(c)=1, Im(c)=2, Re(p)=3, Im(p)=4
        assert_eq!(head.score(&[3.0], &[1.0]).unwrap(), -2.0);
        assert!(head.score(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn score_is_antisymmetric(seed in any::<u64>(), a in proptest::collection::vec(-3.0f64..3.0, 3), b in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut head = ComplExHead::random(3, 1.0, &mut rng);
            head.b_re = vec![0.3, -0.2, 0.1];
            head.b_im = vec![-0.5, 0.4, 0.0];
            let ab = head.score(&a, &b).unwrap();
            let ba = head.score(&b, &a).unwrap();
            prop_assert!((ab + ba).abs() <= 1e-9 * ab.abs().max(1.0));
        }
    }
}
