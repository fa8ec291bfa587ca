//! Named-parameter traversal shared by every layer.
//!
//! Parameter paths are dot-separated (`backbone.stem.conv.weight`). Traversal
//! order is fixed by construction, which makes random initialization and weight
//! files reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub trait Parameterized {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, t| n += t.numel());
        n
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_params(prefix, &mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    /// Fills every `weight` and `bias` tensor uniformly from `[-scale, scale]`.
    /// Normalization statistics and affine terms keep their identity values.
    fn randomize(&mut self, seed: u64, scale: f32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.visit_params_mut("", &mut |name, t| {
            if name.ends_with("weight") || name.ends_with("bias") {
                for v in t.data_mut() {
                    *v = rng.gen_range(-scale..=scale);
                }
            }
        });
    }

    /// Variance-preserving uniform weights, `±√(3 / fan_in)`, with `fan_in` the product of all but
    /// the leading axis; biases are zeroed.
    fn init_fan_in(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.visit_params_mut("", &mut |name, t| {
            if name.ends_with("weight") {
                let fan_in = t.numel() / t.shape().first().copied().unwrap_or(1).max(1);
                let bound = (3.0 / fan_in.max(1) as f32).sqrt();
                for v in t.data_mut() {
                    *v = rng.gen_range(-bound..=bound);
                }
            } else if name.ends_with("bias") {
                t.data_mut().fill(0.0);
            }
        });
    }

    fn zero_weights(&mut self) {
        self.visit_params_mut("", &mut |name, t| {
            if name.ends_with("weight") || name.ends_with("bias") {
                t.data_mut().fill(0.0);
            }
        });
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Parameterized> Parameterized for Vec<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, m) in self.iter().enumerate() {
            m.visit_params(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, m) in self.iter_mut().enumerate() {
            m.visit_params_mut(&join(prefix, &i.to_string()), f);
        }
    }
}
