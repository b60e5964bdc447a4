//! Central-finite-difference verification of every registered op.
//!
//! The checker rebuilds the graph from scratch for each probe, so the
//! function under test must be a pure function of its inputs. All checks run
//! at 64-bit; finite differences are too noisy at 32-bit.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Outcome of one finite-difference check.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub op_name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub element_count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error("function produced a non-finite loss")]
    NonFiniteLoss,
    #[error("analytic gradient shape mismatch for input {input}: expected {expected} elements, got {got}")]
    ShapeMismatch {
        input: usize,
        expected: usize,
        got: usize,
    },
}

/// Compare the analytic gradient of `f` against central finite differences
/// `(f(x+eps) - f(x-eps)) / (2 eps)` element-wise over every input.
///
/// Relative error uses denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<B>(
    op_name: &str,
    mut build: B,
    inputs: &[Tensor<f64>],
    epsilon: f64,
) -> Result<GradCheckReport, GradCheckError>
where
    B: FnMut(&mut Graph<f64>, &[Var]) -> Var,
{
    assert!(epsilon > 0.0, "grad_check: epsilon must be positive");
    let eval = |tensors: &[Tensor<f64>], build: &mut B| -> (f64, Vec<Option<Vec<f64>>>, bool) {
        let mut g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let loss = build(&mut g, &vars);
        let value = g.scalar_value(loss);
        g.backward(loss);
        let grads = vars.iter().map(|v| g.grad(*v).map(|s| s.to_vec())).collect();
        (value, grads, g.grads_finite())
    };

    let (f0, analytic, finite) = eval(inputs, &mut build);
    if !f0.is_finite() || !finite {
        return Err(GradCheckError::NonFiniteLoss);
    }
    for (i, (g, t)) in analytic.iter().zip(inputs.iter()).enumerate() {
        if let Some(g) = g {
            if g.len() != t.len() {
                return Err(GradCheckError::ShapeMismatch {
                    input: i,
                    expected: t.len(),
                    got: g.len(),
                });
            }
        }
    }

    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut element_count = 0usize;
    for (i, t) in inputs.iter().enumerate() {
        let analytic_i = analytic[i].clone().unwrap_or_else(|| vec![0.0; t.len()]);
        for e in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[e] += epsilon;
            let (fp, _, _) = eval(&plus, &mut build);
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[e] -= epsilon;
            let (fm, _, _) = eval(&minus, &mut build);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(GradCheckError::NonFiniteLoss);
            }
            let numeric = (fp - fm) / (2.0 * epsilon);
            let a = analytic_i[e];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-8);
            if abs > max_abs {
                max_abs = abs;
            }
            if rel > max_rel {
                max_rel = rel;
            }
            element_count += 1;
        }
    }

    Ok(GradCheckReport {
        op_name: op_name.to_string(),
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        element_count: element_count.max(1),
    })
}

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const PASS_THRESHOLD: f64 = 1e-6;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Uniform values with magnitude in [0.1, 1.1]; keeps kinked ops (relu,
/// clamp, smooth-L1, max pooling) away from their non-differentiable points.
fn rand_vec_away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.1..1.1)
        })
        .collect()
}

/// Fixed random projection so reductions like softmax get a non-degenerate
/// scalarization (a plain sum has zero gradient through a softmax).
fn project(g: &mut Graph<f64>, out: Var, weights: &[f64]) -> Var {
    let w = g.constant(Tensor::new(g.value(out).shape().to_vec(), weights.to_vec()));
    let prod = g.mul(out, w);
    g.sum_all(prod)
}

/// Run the whole registered-op suite with randomized inputs of at most 64
/// elements. Returns one report per op; all must come in under
/// [`PASS_THRESHOLD`] at 64-bit.
pub fn standard_suite(seed: u64) -> Vec<Result<GradCheckReport, GradCheckError>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let eps = DEFAULT_EPSILON;

    // Elementwise unary ops.
    {
        let x = Tensor::new(vec![2, 3], rand_vec_away_from_zero(&mut rng, 6));
        let w = rand_vec(&mut rng, 6, -1.0, 1.0);
        out.push(grad_check(
            "relu",
            |g, v| {
                let y = g.relu(v[0]);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }
    {
        let x = Tensor::new(vec![2, 3], rand_vec(&mut rng, 6, -2.0, 2.0));
        let w = rand_vec(&mut rng, 6, -1.0, 1.0);
        out.push(grad_check(
            "sigmoid",
            |g, v| {
                let y = g.sigmoid(v[0]);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }
    {
        let x = Tensor::new(vec![6], rand_vec(&mut rng, 6, 0.5, 1.5));
        let w = rand_vec(&mut rng, 6, -1.0, 1.0);
        out.push(grad_check(
            "log",
            |g, v| {
                let y = g.log(v[0]);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }
    {
        let x = Tensor::new(vec![6], rand_vec(&mut rng, 6, -1.0, 1.0));
        let w = rand_vec(&mut rng, 6, -1.0, 1.0);
        out.push(grad_check(
            "exp",
            |g, v| {
                let y = g.exp(v[0]);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }
    {
        let x = Tensor::new(vec![8], rand_vec_away_from_zero(&mut rng, 8));
        let w = rand_vec(&mut rng, 8, -1.0, 1.0);
        out.push(grad_check(
            "clamp",
            |g, v| {
                let y = g.clamp(v[0], -0.9, 0.9);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }

    // Elementwise binary ops.
    {
        let a = Tensor::new(vec![2, 4], rand_vec(&mut rng, 8, -1.0, 1.0));
        let b = Tensor::new(vec![2, 4], rand_vec(&mut rng, 8, -1.0, 1.0));
        let w = rand_vec(&mut rng, 8, -1.0, 1.0);
        out.push(grad_check(
            "add",
            |g, v| {
                let y = g.add(v[0], v[1]);
                project(g, y, &w)
            },
            &[a.clone(), b.clone()],
            eps,
        ));
        let w2 = rand_vec(&mut rng, 8, -1.0, 1.0);
        out.push(grad_check(
            "mul",
            |g, v| {
                let y = g.mul(v[0], v[1]);
                project(g, y, &w2)
            },
            &[a, b],
            eps,
        ));
    }

    // Linear algebra.
    {
        let a = Tensor::new(vec![3, 4], rand_vec(&mut rng, 12, -1.0, 1.0));
        let b = Tensor::new(vec![4, 3], rand_vec(&mut rng, 12, -1.0, 1.0));
        let w = rand_vec(&mut rng, 9, -1.0, 1.0);
        out.push(grad_check(
            "matmul",
            |g, v| {
                let y = g.matmul(v[0], v[1]);
                project(g, y, &w)
            },
            &[a, b],
            eps,
        ));
    }
    {
        let a = Tensor::new(vec![3, 4], rand_vec(&mut rng, 12, -1.0, 1.0));
        let b = Tensor::new(vec![2, 4], rand_vec(&mut rng, 8, -1.0, 1.0));
        let w = rand_vec(&mut rng, 6, -1.0, 1.0);
        out.push(grad_check(
            "matmul_nt",
            |g, v| {
                let y = g.matmul_nt(v[0], v[1]);
                project(g, y, &w)
            },
            &[a, b],
            eps,
        ));
    }

    // Structure ops.
    {
        let a = Tensor::new(vec![2, 3], rand_vec(&mut rng, 6, -1.0, 1.0));
        let b = Tensor::new(vec![2, 2], rand_vec(&mut rng, 4, -1.0, 1.0));
        let w = rand_vec(&mut rng, 10, -1.0, 1.0);
        out.push(grad_check(
            "concat",
            |g, v| {
                let y = g.concat(&[v[0], v[1]], 1);
                project(g, y, &w)
            },
            &[a, b],
            eps,
        ));
    }
    {
        let t = Tensor::new(vec![5, 3], rand_vec(&mut rng, 15, -1.0, 1.0));
        let w = rand_vec(&mut rng, 12, -1.0, 1.0);
        out.push(grad_check(
            "embedding_lookup",
            |g, v| {
                let y = g.gather_rows(v[0], &[1, 4, 0, 1]);
                project(g, y, &w)
            },
            &[t],
            eps,
        ));
    }
    {
        let t = Tensor::new(vec![4, 6], rand_vec(&mut rng, 24, -1.0, 1.0));
        let w = rand_vec(&mut rng, 8, -1.0, 1.0);
        out.push(grad_check(
            "gather",
            |g, v| {
                let s = g.slice_cols(v[0], 2, 4);
                let y = g.gather_rows(s, &[3, 0, 2, 1]);
                project(g, y, &w)
            },
            &[t],
            eps,
        ));
    }

    // Normalization.
    {
        let x = Tensor::new(vec![2, 4], rand_vec(&mut rng, 8, -2.0, 2.0));
        let w = rand_vec(&mut rng, 8, -1.0, 1.0);
        out.push(grad_check(
            "softmax",
            |g, v| {
                let y = g.softmax(v[0], 1);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }
    {
        let x = Tensor::new(vec![2, 4], rand_vec(&mut rng, 8, -2.0, 2.0));
        let gain = Tensor::new(vec![4], rand_vec(&mut rng, 4, 0.5, 1.5));
        let bias = Tensor::new(vec![4], rand_vec(&mut rng, 4, -0.5, 0.5));
        let w = rand_vec(&mut rng, 8, -1.0, 1.0);
        out.push(grad_check(
            "layernorm",
            |g, v| {
                let y = g.layernorm(v[0], v[1], v[2], 1e-5);
                project(g, y, &w)
            },
            &[x, gain, bias],
            eps,
        ));
    }

    // Spatial ops.
    for (name, stride) in [("conv2d_s1", 1usize), ("conv2d_s2", 2usize)] {
        let x = Tensor::new(vec![2, 4, 4], rand_vec(&mut rng, 32, -1.0, 1.0));
        let wt = Tensor::new(vec![2, 2, 3, 3], rand_vec(&mut rng, 36, -0.5, 0.5));
        let b = Tensor::new(vec![2], rand_vec(&mut rng, 2, -0.5, 0.5));
        let outn = if stride == 1 { 2 * 4 * 4 } else { 2 * 2 * 2 };
        let w = rand_vec(&mut rng, outn, -1.0, 1.0);
        out.push(grad_check(
            name,
            move |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], stride, 1);
                project(g, y, &w)
            },
            &[x, wt, b],
            eps,
        ));
    }
    {
        let x = Tensor::new(vec![1, 4, 4], rand_vec_away_from_zero(&mut rng, 16));
        let w = rand_vec(&mut rng, 4, -1.0, 1.0);
        out.push(grad_check(
            "maxpool2",
            |g, v| {
                let y = g.maxpool2(v[0]);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }
    {
        let x = Tensor::new(vec![1, 3, 3], rand_vec(&mut rng, 9, -1.0, 1.0));
        let w = rand_vec(&mut rng, 36, -1.0, 1.0);
        out.push(grad_check(
            "upsample2",
            |g, v| {
                let y = g.upsample2(v[0]);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }
    {
        let x = Tensor::new(vec![2, 4, 4], rand_vec_away_from_zero(&mut rng, 32));
        let w = rand_vec(&mut rng, 32, -1.0, 1.0);
        out.push(grad_check(
            "center_pool",
            |g, v| {
                let y = g.center_pool(v[0]);
                project(g, y, &w)
            },
            &[x],
            eps,
        ));
    }

    // Fused losses.
    {
        let logits = Tensor::new(vec![4, 5], rand_vec(&mut rng, 20, -1.0, 1.0));
        out.push(grad_check(
            "cross_entropy",
            |g, v| g.cross_entropy_sum(v[0], &[0, 3, 2, 1], &[true, true, false, true]),
            &[logits],
            eps,
        ));
    }
    {
        let pred = Tensor::new(vec![8], rand_vec_away_from_zero(&mut rng, 8));
        let gt = Tensor::new(vec![8], vec![0.0; 8]);
        out.push(grad_check(
            "smooth_l1",
            |g, v| g.smooth_l1_sum(v[0], v[1], &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0]),
            &[pred, gt],
            eps,
        ));
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        // fn = sum(x): gradient is all-ones, error should be tiny.
        let x = Tensor::new(vec![2, 3], vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9]);
        let report = grad_check("sum", |g, v| g.sum_all(v[0]), &[x], 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-10, "{report:?}");
    }

    #[test]
    fn square_sum_gradient() {
        // fn = sum(x*x), x=[3.0]: analytic grad 6.0.
        let x = Tensor::from_vec(vec![3.0]);
        let report = grad_check(
            "square_sum",
            |g, v| {
                let y = g.mul(v[0], v[0]);
                g.sum_all(y)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.element_count, 1);
    }

    #[test]
    fn non_finite_loss_detected() {
        let x = Tensor::from_vec(vec![-1.0]);
        let err = grad_check("log_of_negative", |g, v| {
            let y = g.log(v[0]);
            g.sum_all(y)
        }, &[x], 1e-5);
        assert!(matches!(err, Err(GradCheckError::NonFiniteLoss)));
    }

    #[test]
    fn full_suite_passes() {
        for r in standard_suite(7) {
            let r = r.expect("suite op failed to evaluate");
            assert!(
                r.max_rel_error < PASS_THRESHOLD,
                "{} failed: {:?}",
                r.op_name,
                r
            );
        }
    }
}
