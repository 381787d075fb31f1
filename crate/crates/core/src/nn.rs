//! Small fully-connected networks with hand-written reverse mode and Adam.
//!
//! Everything is `f64` and row-major. Batches are matrices with one sample
//! per row; a layer computes `act(X · Wᵀ + b)` with `W` stored `out × in`.

use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Columns `range` of every row, as a new matrix.
    pub fn columns(&self, range: std::ops::Range<usize>) -> Matrix {
        let mut out = Matrix::zeros(self.rows, range.len());
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[range.clone()]);
        }
        out
    }

    /// Side-by-side concatenation.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            let row = out.row_mut(i);
            row[..self.cols].copy_from_slice(self.row(i));
            row[self.cols..].copy_from_slice(other.row(i));
        }
        Ok(out)
    }
}

/// `c ← α·op(a)·op(b) + β·c` on strided views; `m × k` times `k × n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` cannot alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::DimensionMismatch {
                expected: weights.rows(),
                found: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Uniform `[-1/√fan_in, 1/√fan_in]` for weights and bias.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        Self {
            weights: Matrix {
                rows: out_dim,
                cols: in_dim,
                data: weights,
            },
            bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn forward_batch(&self, x: &Matrix) -> Matrix {
        let (batch, in_dim, out_dim) = (x.rows(), self.in_dim(), self.out_dim());
        let mut z = Matrix::zeros(batch, out_dim);
        for i in 0..batch {
            z.row_mut(i).copy_from_slice(&self.bias);
        }
        // X (batch × in) · Wᵀ (in × out)
        gemm(
            batch,
            in_dim,
            out_dim,
            1.0,
            x.as_slice(),
            (in_dim, 1),
            self.weights.as_slice(),
            (1, in_dim),
            1.0,
            z.as_mut_slice(),
        );
        if self.activation == Activation::Relu {
            for v in z.as_mut_slice() {
                *v = v.max(0.0);
            }
        }
        z
    }
}

/// Gradient of a scalar loss with respect to one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    /// Weight and bias slices in the same order as [`Mlp::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Layer inputs and outputs of a batched forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

/// What [`Mlp::backward`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradRequest {
    pub params: bool,
    pub input: bool,
}

impl GradRequest {
    pub const PARAMS: GradRequest = GradRequest {
        params: true,
        input: false,
    };
    pub const INPUT: GradRequest = GradRequest {
        params: false,
        input: true,
    };
    pub const BOTH: GradRequest = GradRequest {
        params: true,
        input: true,
    };
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub params: Option<Gradients>,
    pub input: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim(),
                    found: pair[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Fan-in initialized network with `hidden` activation between layers and
    /// `output` activation on the last one.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let act = if l + 1 == n { output } else { hidden };
                Layer::init(sizes[l], sizes[l + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `[in, hidden..., out]`
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim() * l.out_dim() + l.out_dim())
            .sum()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                found: dim,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.forward_batch(&x)?.into_vec())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x.cols())?;
        let mut a = self.layers[0].forward_batch(x);
        for layer in &self.layers[1..] {
            a = layer.forward_batch(&a);
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        self.check_input(x.cols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward_batch(activations.last().expect("non-empty"));
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Reverse-mode pass for a scalar loss whose gradient with respect to the
    /// network output is `upstream` (`batch × out`). Gradients are summed over
    /// the batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        request: GradRequest,
    ) -> Result<Backward> {
        let batch = cache.input().rows();
        if upstream.rows() != batch {
            return Err(Error::DimensionMismatch {
                expected: batch,
                found: upstream.rows(),
            });
        }
        if upstream.cols() != self.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim(),
                found: upstream.cols(),
            });
        }
        let mut grads = request.params.then(|| Gradients::zeros_like(self));
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (in_dim, out_dim) = (layer.in_dim(), layer.out_dim());
            if layer.activation == Activation::Relu {
                let out = &cache.activations[l + 1];
                for (d, a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.activations[l];
            if let Some(g) = grads.as_mut() {
                let lg = &mut g.layers[l];
                // dW = δᵀ (out × batch) · X (batch × in)
                gemm(
                    out_dim,
                    batch,
                    in_dim,
                    1.0,
                    delta.as_slice(),
                    (1, out_dim),
                    input.as_slice(),
                    (in_dim, 1),
                    0.0,
                    lg.weights.as_mut_slice(),
                );
                for i in 0..batch {
                    for (b, d) in lg.bias.iter_mut().zip(delta.row(i)) {
                        *b += d;
                    }
                }
            }
            if l > 0 || request.input {
                // δ_prev = δ (batch × out) · W (out × in)
                let mut prev = Matrix::zeros(batch, in_dim);
                gemm(
                    batch,
                    out_dim,
                    in_dim,
                    1.0,
                    delta.as_slice(),
                    (out_dim, 1),
                    layer.weights.as_slice(),
                    (in_dim, 1),
                    0.0,
                    prev.as_mut_slice(),
                );
                delta = prev;
            }
        }
        Ok(Backward {
            params: grads,
            input: request.input.then_some(delta),
        })
    }

    /// `self ← τ·source + (1 − τ)·self`, elementwise.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (dst, src) in self.param_slices_mut().into_iter().zip(source.param_slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    pub fn copy_from(&mut self, source: &Mlp) {
        self.clone_from(source);
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    /// One moment buffer per parameter tensor, sized by `shapes`.
    pub fn new(shapes: &[usize], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_mlp(mlp: &Mlp, lr: f64) -> Self {
        let shapes: Vec<usize> = mlp.param_slices().iter().map(|s| s.len()).collect();
        Self::new(&shapes, lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first.len(),
                found: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.first) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.len(),
                    found: p.len().min(g.len()),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, mlp: &mut Mlp, grads: &Gradients) -> Result<()> {
        self.update(mlp.param_slices_mut(), grads.slices())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight loops over the stored parameters, sharing nothing with the
    /// GEMM path.
    fn naive_forward(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in mlp.layers() {
            let mut z = layer.bias.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                for (i, ai) in a.iter().enumerate() {
                    *zo += layer.weights.get(o, i) * ai;
                }
            }
            if layer.activation == Activation::Relu {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Loss Σ c ⊙ f(X), so the upstream gradient is `c`.
    fn probe_loss(mlp: &Mlp, x: &Matrix, c: &Matrix) -> f64 {
        let y = mlp.forward_batch(x).unwrap();
        y.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    pub(crate) fn gradient_check(sizes: &[usize], seed: u64) -> (usize, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mlp = Mlp::init(sizes, Activation::Relu, Activation::Identity, &mut rng);
        let x = random_matrix(3, sizes[0], &mut rng);
        let c = random_matrix(3, *sizes.last().unwrap(), &mut rng);
        let cache = mlp.forward_cached(&x).unwrap();
        let back = mlp.backward(&cache, &c, GradRequest::PARAMS).unwrap();
        let analytic: Vec<f64> = back
            .params
            .unwrap()
            .slices()
            .iter()
            .flat_map(|s| s.to_vec())
            .collect();
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut idx = 0;
        let n_tensors = mlp.param_slices().len();
        for t in 0..n_tensors {
            let len = mlp.param_slices()[t].len();
            for i in 0..len {
                let orig = mlp.param_slices()[t][i];
                mlp.param_slices_mut()[t][i] = orig + h;
                let up = probe_loss(&mlp, &x, &c);
                mlp.param_slices_mut()[t][i] = orig - h;
                let down = probe_loss(&mlp, &x, &c);
                mlp.param_slices_mut()[t][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[idx];
                let err = (a - numeric).abs();
                let tol = (1e-4 * a.abs().max(numeric.abs())).max(1e-6);
                worst = worst.max(err / tol);
                idx += 1;
            }
        }
        (idx, worst)
    }

    #[test]
    fn relu_identity_layer() {
        let layer = Layer::new(
            Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            vec![0.0, 0.0],
            Activation::Relu,
        )
        .unwrap();
        let mlp = Mlp::new(vec![layer]).unwrap();
        assert_eq!(mlp.forward(&[1.0, -1.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn zero_weights_return_bias() {
        let layer = Layer::new(Matrix::zeros(3, 4), vec![0.5, -2.0, 7.0], Activation::Identity).unwrap();
        let mlp = Mlp::new(vec![layer]).unwrap();
        assert_eq!(mlp.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::init(&[5, 8, 3], Activation::Relu, Activation::Identity, &mut rng);
        assert!(mlp.forward(&[1.0; 4]).is_err());
        let bad = vec![
            Layer::init(5, 8, Activation::Relu, &mut rng),
            Layer::init(7, 3, Activation::Identity, &mut rng),
        ];
        assert!(Mlp::new(bad).is_err());
    }

    #[test]
    fn batched_forward_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mlp = Mlp::init(&[5, 128, 128, 8], Activation::Relu, Activation::Identity, &mut rng);
        let x = random_matrix(16, 5, &mut rng);
        let batched = mlp.forward_batch(&x).unwrap();
        for i in 0..16 {
            let reference = naive_forward(&mlp, x.row(i));
            for (a, b) in batched.row(i).iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn small_net_gradient_check() {
        let (n, worst) = gradient_check(&[5, 8, 3], 7);
        assert_eq!(n, 5 * 8 + 8 + 8 * 3 + 3);
        assert!(worst <= 1.0, "worst normalized error {worst}");
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::init(&[5, 8, 3], Activation::Relu, Activation::Identity, &mut rng);
        let x = random_matrix(4, 5, &mut rng);
        let cache = mlp.forward_cached(&x).unwrap();
        let back = mlp.backward(&cache, &Matrix::zeros(4, 3), GradRequest::BOTH).unwrap();
        assert_eq!(back.params.unwrap().max_abs(), 0.0);
        assert!(back.input.unwrap().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_net_input_gradient_is_weight_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::init(&[4, 6, 3], Activation::Identity, Activation::Identity, &mut rng);
        let x = random_matrix(1, 4, &mut rng);
        let cache = mlp.forward_cached(&x).unwrap();
        let w1 = &mlp.layers()[0].weights;
        let w2 = &mlp.layers()[1].weights;
        for out in 0..3 {
            let mut up = Matrix::zeros(1, 3);
            up.set(0, out, 1.0);
            let grad = mlp.backward(&cache, &up, GradRequest::INPUT).unwrap().input.unwrap();
            for i in 0..4 {
                let expected: f64 = (0..6).map(|h| w2.get(out, h) * w1.get(h, i)).sum();
                assert!((grad.get(0, i) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut adam = Adam::new(&[2], 0.001);
        let mut p = [1.0, -2.0];
        adam.update(vec![&mut p], vec![&[0.3, 0.3]]).unwrap();
        let after_first = p;
        let m_before = adam.first_moments()[0].clone();
        adam.update(vec![&mut p], vec![&[0.0, 0.0]]).unwrap();
        // Moments decay but the update keeps moving along the old direction;
        // with fresh moments a zero gradient changes nothing.
        assert!(adam.first_moments()[0][0].abs() < m_before[0].abs());
        let mut fresh = Adam::new(&[2], 0.001);
        let mut q = after_first;
        fresh.update(vec![&mut q], vec![&[0.0, 0.0]]).unwrap();
        assert_eq!(q, after_first);
        assert_eq!(fresh.step_count(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(&[1], 0.001);
        let mut p = [0.5];
        adam.update(vec![&mut p], vec![&[1.0]]).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = lr / (1 + ε)
        assert!((p[0] - (0.5 - 0.001 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_constant_gradient_moves_monotonically() {
        let mut adam = Adam::new(&[1], 0.01);
        let mut p = [0.0];
        let mut prev = p[0];
        for _ in 0..100 {
            adam.update(vec![&mut p], vec![&[-2.0]]).unwrap();
            assert!(p[0] > prev);
            prev = p[0];
        }
        assert!((p[0] - 1.0).abs() < 1e-6, "{}", p[0]);
    }

    #[test]
    fn same_seed_same_initialization() {
        let a = Mlp::init(&[5, 16, 2], Activation::Relu, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(9));
        let b = Mlp::init(&[5, 16, 2], Activation::Relu, Activation::Identity, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.layers()[0].weights.as_slice().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn soft_update_is_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = Mlp::init(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let mut dst = Mlp::init(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let old = dst.clone();
        dst.soft_update_from(&src, 0.005);
        for ((d, s), o) in dst.param_slices().iter().zip(src.param_slices()).zip(old.param_slices()) {
            for i in 0..d.len() {
                assert_eq!(d[i], 0.005 * s[i] + 0.995 * o[i]);
            }
        }
    }
}
