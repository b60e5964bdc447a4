//! Named parameter collections and the Adam optimizer.
//!
//! Parameters are stored at 32-bit. A [`ParamStore`] uploads its tensors into
//! a graph (at either precision) in insertion order, so variable indices are
//! stable and gradient extraction can mirror the same order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::real::Real;
use super::tensor::Tensor;

/// Ordered name -> f32 tensor map holding a model's trainable state.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor<f32>)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<f32>) -> usize {
        let name = name.into();
        assert!(
            self.index_of(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, t));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, idx: usize) -> &Tensor<f32> {
        &self.entries[idx].1
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor<f32> {
        &mut self.entries[idx].1
    }

    pub fn by_name(&self, name: &str) -> &Tensor<f32> {
        let idx = self
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.get(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Insert every parameter into `g` as a differentiable leaf, in order.
    pub fn upload<F: Real>(&self, g: &mut Graph<F>) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| g.leaf(t.cast::<F>(), true))
            .collect()
    }

    /// Insert every parameter as a frozen constant (inference).
    pub fn upload_frozen<F: Real>(&self, g: &mut Graph<F>) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| g.constant(t.cast::<F>()))
            .collect()
    }

    /// Pull per-parameter gradients out of a graph after backward, converting
    /// to f32 and substituting zeros where no gradient flowed.
    pub fn extract_grads<F: Real>(&self, g: &Graph<F>, vars: &[Var]) -> Vec<Vec<f32>> {
        assert_eq!(vars.len(), self.entries.len());
        vars.iter()
            .zip(self.entries.iter())
            .map(|(v, (_, t))| match g.grad(*v) {
                Some(gr) => gr.iter().map(|x| x.as_f64() as f32).collect(),
                None => vec![0.0; t.len()],
            })
            .collect()
    }
}

/// Accumulate `src` into `dst` elementwise (deterministic batch reduction).
pub fn add_grads(dst: &mut [Vec<f32>], src: &[Vec<f32>]) {
    assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        for (dv, sv) in d.iter_mut().zip(s.iter()) {
            *dv += *sv;
        }
    }
}

pub fn scale_grads(grads: &mut [Vec<f32>], c: f32) {
    for g in grads.iter_mut() {
        for v in g.iter_mut() {
            *v *= c;
        }
    }
}

/// Adam with bias correction.
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u32,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            v: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Vec<f32>], lr: f32) {
        assert_eq!(grads.len(), params.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.get_mut(i).data_mut();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / b1t;
                let vhat = v[j] / b2t;
                p[j] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Uniform Kaiming-style initializer: U(-b, b) with b = sqrt(1 / fan_in).
pub fn init_uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<f32> {
    let bound = (1.0 / fan_in.max(1) as f32).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data)
}

/// Small-magnitude normal-ish init for embeddings (uniform +-0.05).
pub fn init_embedding(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-0.05..0.05)).collect();
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn adam_minimizes_quadratic() {
        // minimize (x - 3)^2 from 0
        let mut params = ParamStore::new();
        params.add("x", Tensor::from_vec(vec![0.0f32]));
        let mut adam = Adam::new(&params);
        for _ in 0..800 {
            let x = params.get(0).data()[0];
            let grad = vec![vec![2.0 * (x - 3.0)]];
            adam.step(&mut params, &grad, 0.05);
        }
        assert!((params.get(0).data()[0] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn upload_order_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamStore::new();
        params.add("a", init_uniform(&mut rng, vec![2, 2], 2));
        params.add("b", init_uniform(&mut rng, vec![3], 3));
        let mut g = Graph::<f64>::new();
        let vars = params.upload(&mut g);
        assert_eq!(vars.len(), 2);
        assert_eq!(g.value(vars[0]).shape(), &[2, 2]);
        assert_eq!(g.value(vars[1]).shape(), &[3]);
    }
}
