use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Fully connected tanh network over one flat parameter vector.
///
/// Layer `k` stores its weight as an `(in, out)` row-major block followed by
/// the bias, so the forward pass is `h @ W + b`. The output layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    /// Gaussian init with std `1/sqrt(fan_in)`; the output layer is further
    /// scaled by `out_scale`. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], out_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output sizes");
        let mut params = Vec::with_capacity(Self::count(sizes));
        let layers = sizes.len() - 1;
        for k in 0..layers {
            let (fan_in, fan_out) = (sizes[k], sizes[k + 1]);
            let mut std = 1.0 / (fan_in as f64).sqrt();
            if k + 1 == layers {
                std *= out_scale;
            }
            let normal = Normal::new(0.0, std).expect("finite std");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn offsets(&self, k: usize) -> (usize, usize, usize) {
        let start: usize = self.sizes[..k + 1]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        let (i, o) = (self.sizes[k], self.sizes[k + 1]);
        (start, start + i * o, start + i * o + o)
    }

    fn layer(&self, k: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (w, b, end) = self.offsets(k);
        let shape = (self.sizes[k], self.sizes[k + 1]);
        (
            ArrayView2::from_shape(shape, &self.params[w..b]).unwrap(),
            ArrayView1::from(&self.params[b..end]),
        )
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let layers = self.sizes.len() - 1;
        for k in 0..layers {
            let (w, b) = self.layer(k);
            h = h.dot(&w) + &b;
            if k + 1 < layers {
                h.mapv_inplace(f64::tanh);
            }
        }
        h
    }

    /// Forward pass keeping each layer's input for [`Mlp::backward`].
    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<Array2<f64>>) {
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers);
        let mut h = x.to_owned();
        for k in 0..layers {
            let (w, b) = self.layer(k);
            let mut next = h.dot(&w) + &b;
            if k + 1 < layers {
                next.mapv_inplace(f64::tanh);
            }
            acts.push(h);
            h = next;
        }
        (h, acts)
    }

    /// Accumulates `d loss / d params` into `grad` given `dout = d loss / d output`.
    pub fn backward(&self, acts: &[Array2<f64>], dout: Array2<f64>, grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut d = dout;
        for k in (0..layers).rev() {
            let (wo, bo, end) = self.offsets(k);
            let shape = (self.sizes[k], self.sizes[k + 1]);
            let a = &acts[k];
            {
                let (gw, gb) = grad[wo..end].split_at_mut(bo - wo);
                let mut gw = ArrayViewMut2::from_shape(shape, gw).unwrap();
                gw += &a.t().dot(&d);
                let mut gb = ArrayViewMut1::from(gb);
                gb += &d.sum_axis(Axis(0));
            }
            if k > 0 {
                let (w, _) = self.layer(k);
                let mut back = d.dot(&w.t());
                // inputs of layer k are tanh outputs of layer k-1
                back.zip_mut_with(a, |g, &h| *g *= 1.0 - h * h);
                d = back;
            }
        }
    }

    /// Single-input convenience wrapper.
    pub fn forward_one(&self, x: &[f64]) -> Array1<f64> {
        let v = ArrayView2::from_shape((1, x.len()), x).unwrap();
        self.forward(v).row(0).to_owned()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.3 + j as f64 * 0.2);
        let loss = |net: &Mlp| net.forward(x.view()).mapv(|v| v * v).sum() * 0.5;
        let (out, acts) = net.forward_cached(x.view());
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&acts, out, &mut grad);
        for i in 0..net.num_params() {
            let h = 1e-6;
            let orig = net.params[i];
            net.params[i] = orig + h;
            let up = loss(&net);
            net.params[i] = orig - h;
            let down = loss(&net);
            net.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn shapes_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[4, 8, 1], 1.0, &mut rng);
        assert_eq!(net.num_params(), 4 * 8 + 8 + 8 + 1);
        assert_eq!(net.forward_one(&[0.1, 0.2, 0.3, 0.4]).len(), 1);
    }
}
