//! Toy encoder: a small MLP with tanh hidden layers and a linear embedding
//! output, plus a fully connected classification head. Forward and backward
//! are hand-rolled in f64 with fixed-order summation so runs are bit-stable.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One affine block: y = W x + b, with W stored row-major (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl AffineLayer {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        AffineLayer {
            w: vec![0.0; input_dim * output_dim],
            b: vec![0.0; output_dim],
            input_dim,
            output_dim,
        }
    }

    pub fn random(input_dim: usize, output_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // Xavier-uniform
        let lim = (6.0 / (input_dim + output_dim) as f64).sqrt();
        AffineLayer {
            w: (0..input_dim * output_dim)
                .map(|_| rng.gen_range(-lim..lim))
                .collect(),
            b: vec![0.0; output_dim],
            input_dim,
            output_dim,
        }
    }

    /// x is B x input_dim row-major; output B x output_dim.
    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut out = vec![0.0; batch * self.output_dim];
        for i in 0..batch {
            let xin = &x[i * self.input_dim..(i + 1) * self.input_dim];
            let row = &mut out[i * self.output_dim..(i + 1) * self.output_dim];
            for (o, r) in row.iter_mut().enumerate() {
                let mut acc = self.b[o];
                let wrow = &self.w[o * self.input_dim..(o + 1) * self.input_dim];
                for (wv, xv) in wrow.iter().zip(xin) {
                    acc += wv * xv;
                }
                *r = acc;
            }
        }
        out
    }
}

/// Gradients of one affine layer, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct AffineGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Encoder + classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// Hidden layers use tanh; the last encoder layer is linear and its
    /// output is the embedding.
    pub encoder: Vec<AffineLayer>,
    pub head: AffineLayer,
}

/// Activations cached by the forward pass for backprop.
pub struct ForwardCache {
    pub batch: usize,
    /// Post-activation of each encoder layer, input first: inputs[0] = x,
    /// inputs[l+1] = activation after layer l. Last entry is the embedding.
    pub activations: Vec<Vec<f64>>,
    pub embeddings: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub encoder: Vec<AffineGrad>,
    pub head: AffineGrad,
}

impl MlpModel {
    pub fn new_random(
        input_dim: usize,
        hidden_dims: &[usize],
        embedding_dim: usize,
        num_classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut encoder = Vec::new();
        let mut prev = input_dim;
        for &h in hidden_dims {
            encoder.push(AffineLayer::random(prev, h, rng));
            prev = h;
        }
        encoder.push(AffineLayer::random(prev, embedding_dim, rng));
        // zero-init head: logits start neutral and the trained direction
        // dominates even after few optimizer steps
        let head = AffineLayer::zeros(embedding_dim, num_classes);
        MlpModel { encoder, head }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].input_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.last().unwrap().output_dim
    }

    pub fn num_classes(&self) -> usize {
        self.head.output_dim
    }

    /// Full forward pass over a B x input_dim feature matrix.
    pub fn forward(&self, features: &[f64], batch: usize) -> Result<ForwardCache> {
        if features.len() != batch * self.input_dim() {
            return Err(Error::Shape(format!(
                "features length {} != B*input_dim = {}*{}",
                features.len(),
                batch,
                self.input_dim()
            )));
        }
        let n_layers = self.encoder.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(features.to_vec());
        for (l, layer) in self.encoder.iter().enumerate() {
            let mut a = layer.forward(activations.last().unwrap(), batch);
            if l + 1 < n_layers {
                for v in &mut a {
                    *v = v.tanh();
                }
            }
            activations.push(a);
        }
        let embeddings = activations.last().unwrap().clone();
        let logits = self.head.forward(&embeddings, batch);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits in forward pass".to_string()));
        }
        Ok(ForwardCache {
            batch,
            activations,
            embeddings,
            logits,
        })
    }

    /// Backprop given dL/dlogits and dL/dembeddings (either may be all-zero).
    /// Returns parameter gradients; input gradients are not needed.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &[f64],
        grad_embeddings: &[f64],
    ) -> ModelGrads {
        let batch = cache.batch;
        // head
        let mut head_grad = AffineGrad {
            w: vec![0.0; self.head.w.len()],
            b: vec![0.0; self.head.b.len()],
        };
        let d = self.head.input_dim;
        let c = self.head.output_dim;
        let mut delta = vec![0.0; batch * d]; // dL/dH accumulating both paths
        for i in 0..batch {
            let h = &cache.embeddings[i * d..(i + 1) * d];
            let gz = &grad_logits[i * c..(i + 1) * c];
            for o in 0..c {
                head_grad.b[o] += gz[o];
                for k in 0..d {
                    head_grad.w[o * d + k] += gz[o] * h[k];
                    delta[i * d + k] += self.head.w[o * d + k] * gz[o];
                }
            }
        }
        if !grad_embeddings.is_empty() {
            for (dv, gv) in delta.iter_mut().zip(grad_embeddings) {
                *dv += gv;
            }
        }
        // encoder, last layer is linear, earlier ones pass through tanh'
        let n_layers = self.encoder.len();
        let mut encoder_grads: Vec<AffineGrad> = self
            .encoder
            .iter()
            .map(|l| AffineGrad {
                w: vec![0.0; l.w.len()],
                b: vec![0.0; l.b.len()],
            })
            .collect();
        let mut delta_out = delta; // dL/d(output of layer l) post-activation
        for l in (0..n_layers).rev() {
            let layer = &self.encoder[l];
            let out_dim = layer.output_dim;
            let in_dim = layer.input_dim;
            let post = &cache.activations[l + 1];
            // through the nonlinearity (identity for the last layer)
            let mut delta_pre = delta_out;
            if l + 1 < n_layers {
                for (dv, hv) in delta_pre.iter_mut().zip(post) {
                    *dv *= 1.0 - hv * hv;
                }
            }
            let input = &cache.activations[l];
            let grad = &mut encoder_grads[l];
            let mut delta_in = vec![0.0; batch * in_dim];
            for i in 0..batch {
                let xin = &input[i * in_dim..(i + 1) * in_dim];
                let dp = &delta_pre[i * out_dim..(i + 1) * out_dim];
                for o in 0..out_dim {
                    grad.b[o] += dp[o];
                    for k in 0..in_dim {
                        grad.w[o * in_dim + k] += dp[o] * xin[k];
                        delta_in[i * in_dim + k] += layer.w[o * in_dim + k] * dp[o];
                    }
                }
            }
            delta_out = delta_in;
        }
        ModelGrads {
            encoder: encoder_grads,
            head: head_grad,
        }
    }

    /// Canonical parameter-tensor order: enc0.w, enc0.b, ..., head.w, head.b.
    /// The group index drives layer-wise learning rate decay (head = L).
    pub fn tensor_names_and_groups(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for l in 0..self.encoder.len() {
            out.push((format!("enc{l}.w"), l));
            out.push((format!("enc{l}.b"), l));
        }
        let head_group = self.encoder.len();
        out.push(("head.w".to_string(), head_group));
        out.push(("head.b".to_string(), head_group));
        out
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.push(&l.w);
            out.push(&l.b);
        }
        out.push(&self.head.w);
        out.push(&self.head.b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.encoder {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for g in &self.encoder {
            out.push(&g.w);
            out.push(&g.b);
        }
        out.push(&self.head.w);
        out.push(&self.head.b);
        out
    }
}

/// Mean of the non-CLS token rows of a (T+1) x D token matrix (row 0 is CLS).
pub fn pool_tokens(tokens: &[f64], rows: usize, dim: usize) -> Result<Vec<f64>> {
    if rows < 2 {
        return Err(Error::Shape("need at least one non-CLS token".to_string()));
    }
    if tokens.len() != rows * dim {
        return Err(Error::Shape("token matrix shape mismatch".to_string()));
    }
    let t = rows - 1;
    let mut out = vec![0.0; dim];
    for r in 1..rows {
        for k in 0..dim {
            out[k] += tokens[r * dim + k];
        }
    }
    for v in &mut out {
        *v /= t as f64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::softmax_cross_entropy;

    #[test]
    fn pool_excludes_cls_row() {
        let tokens = vec![9.0, 9.0, 1.0, 1.0, 3.0, 3.0];
        assert_eq!(pool_tokens(&tokens, 3, 2).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn pool_single_token() {
        let tokens = vec![5.0, 7.0, 1.5, -2.0];
        assert_eq!(pool_tokens(&tokens, 2, 2).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn pool_matches_naive_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (rows, dim) = (6, 4);
        let tokens: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pooled = pool_tokens(&tokens, rows, dim).unwrap();
        for k in 0..dim {
            let naive: f64 =
                (1..rows).map(|r| tokens[r * dim + k]).sum::<f64>() / (rows - 1) as f64;
            assert!((pooled[k] - naive).abs() < 1e-15);
        }
    }

    #[test]
    fn pool_rejects_cls_only() {
        assert!(pool_tokens(&[1.0, 2.0], 1, 2).is_err());
    }

    #[test]
    fn zero_weight_network_outputs_bias() {
        let mut model = MlpModel {
            encoder: vec![AffineLayer::zeros(2, 3)],
            head: AffineLayer::zeros(3, 2),
        };
        model.head.b = vec![0.7, -0.3];
        let cache = model.forward(&[1.0, 2.0], 1).unwrap();
        assert_eq!(cache.logits, vec![0.7, -0.3]);
    }

    #[test]
    fn identity_encoder_passes_features_through() {
        let mut layer = AffineLayer::zeros(3, 3);
        for k in 0..3 {
            layer.w[k * 3 + k] = 1.0;
        }
        let model = MlpModel {
            encoder: vec![layer],
            head: AffineLayer::zeros(3, 2),
        };
        let feats = vec![0.5, -1.0, 2.0];
        let cache = model.forward(&feats, 1).unwrap();
        assert_eq!(cache.embeddings, feats);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = MlpModel::new_random(4, &[5], 3, 2, &mut rng);
        assert!(model.forward(&[1.0, 2.0, 3.0], 1).is_err());
    }

    #[test]
    fn full_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (input_dim, hidden, embed, classes, b) = (3, [4], 3, 2, 5);
        let mut model = MlpModel::new_random(input_dim, &hidden, embed, classes, &mut rng);
        model.head = AffineLayer::random(embed, classes, &mut rng);
        let features: Vec<f64> = (0..b * input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();

        let loss_of = |m: &MlpModel| {
            let cache = m.forward(&features, b).unwrap();
            softmax_cross_entropy(&cache.logits, &labels, classes)
                .unwrap()
                .value
        };
        let cache = model.forward(&features, b).unwrap();
        let ce = softmax_cross_entropy(&cache.logits, &labels, classes).unwrap();
        let grads = model.backward(&cache, &ce.grad_logits, &[]);

        let h = 1e-5;
        let n_tensors = model.tensors().len();
        for t_idx in 0..n_tensors {
            let len = model.tensors()[t_idx].len();
            for k in 0..len {
                let mut plus = model.clone();
                plus.tensors_mut()[t_idx][k] += h;
                let mut minus = model.clone();
                minus.tensors_mut()[t_idx][k] -= h;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let analytic = grads.tensors()[t_idx][k];
                let rel = (analytic - fd).abs() / fd.abs().max(1e-6);
                assert!(rel < 1e-4, "tensor {t_idx} elem {k}: {analytic} vs {fd}");
            }
        }
    }
}
