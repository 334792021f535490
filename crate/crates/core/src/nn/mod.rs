//! Dense feed-forward networks with hand-written reverse mode, Adam, soft
//! target updates, a replay buffer and a binary checkpoint format.

mod checkpoint;
mod replay;

pub use checkpoint::{Checkpoint, Entry, CHECKPOINT_VERSION};
pub use replay::{Batch, ReplayBuffer};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::Rng;

/// `c = a' * b' + beta * c` with `a'` of shape `m x k`, `b'` of shape `k x n`,
/// all row-major; `ta`/`tb` read the stored matrix transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the length assertions above cover every index the strides reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `scale * tanh(z)`, bounded to `[-scale, scale]`.
    ScaledTanh(f64),
}

/// Multi-layer perceptron with ReLU hidden layers. Each layer stores an
/// `inputs x outputs` row-major weight block followed by its biases, all in
/// one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
    version: u64,
}

/// Activations of one batched forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    batch: usize,
    version: u64,
    shape: Vec<usize>,
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache has layers")
    }
}

pub struct Gradients {
    pub params: Vec<f64>,
    /// Gradient with respect to the batch input, `batch x inputs`.
    pub input: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Zero-initialised network.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Dimension(format!("layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            output,
            params: vec![0.0; param_count(sizes)],
            version: 0,
        })
    }

    /// He-uniform hidden layers, a small uniform output layer, zero biases.
    pub fn random(sizes: &[usize], output: OutputActivation, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let last = sizes.len() - 2;
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (i, o) = (w[0], w[1]);
            let bound = if l == last { 3e-3 } else { (6.0 / i as f64).sqrt() };
            for p in &mut net.params[off..off + i * o] {
                *p = rng.random_range(-bound..bound);
            }
            off += i * o + o;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension(format!("{} parameters for shape {sizes:?}", params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameters; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes
    }

    fn check_input(&self, input: &[f64], batch: usize) -> Result<()> {
        if batch == 0 || input.len() != batch * self.inputs() {
            return Err(Error::Dimension(format!(
                "input of length {} for batch {batch} x {} features",
                input.len(),
                self.inputs()
            )));
        }
        Ok(())
    }

    fn activate_output(&self, z: &mut [f64]) {
        if let OutputActivation::ScaledTanh(s) = self.output {
            for v in z {
                *v = s * v.tanh();
            }
        }
    }

    /// Forward pass over `batch` row-major inputs, keeping the activations.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Cache> {
        self.check_input(input, batch)?;
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input.to_vec());
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (i, o) = (w[0], w[1]);
            let weights = &self.params[off..off + i * o];
            let bias = &self.params[off + i * o..off + i * o + o];
            let mut z: Vec<f64> = bias.iter().copied().cycle().take(batch * o).collect();
            gemm(batch, i, o, &acts[l], false, weights, false, 1.0, &mut z);
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                self.activate_output(&mut z);
            }
            acts.push(z);
            off += i * o + o;
        }
        Ok(Cache { batch, version: self.version, shape: self.sizes.clone(), acts })
    }

    /// Single-input forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input, 1)?;
        let layers = self.sizes.len() - 1;
        let mut x = input.to_vec();
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (i, o) = (w[0], w[1]);
            let mut z = self.params[off + i * o..off + i * o + o].to_vec();
            for (r, xr) in x.iter().enumerate() {
                let row = &self.params[off + r * o..off + (r + 1) * o];
                for (zj, wj) in z.iter_mut().zip(row) {
                    *zj += xr * wj;
                }
            }
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                self.activate_output(&mut z);
            }
            x = z;
            off += i * o + o;
        }
        Ok(x)
    }

    /// Reverse pass: gradients of `sum(grad_out . output)` with respect to
    /// every parameter and to the input.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64]) -> Result<Gradients> {
        if cache.version != self.version || cache.shape != self.sizes {
            return Err(Error::StaleCache);
        }
        let batch = cache.batch;
        if grad_out.len() != batch * self.outputs() {
            return Err(Error::Dimension(format!(
                "output gradient of length {} for batch {batch} x {} outputs",
                grad_out.len(),
                self.outputs()
            )));
        }
        let layers = self.sizes.len() - 1;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.to_vec();
        if let OutputActivation::ScaledTanh(s) = self.output {
            for (d, y) in delta.iter_mut().zip(cache.output()) {
                let t = y / s;
                *d *= s * (1.0 - t * t);
            }
        }
        let mut offsets: Vec<usize> = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..layers).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.acts[l];
            gemm(i, batch, o, x, true, &delta, false, 0.0, &mut grads[off..off + i * o]);
            let gb = &mut grads[off + i * o..off + i * o + o];
            for row in delta.chunks_exact(o) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            let mut dx = vec![0.0; batch * i];
            gemm(batch, o, i, &delta, false, &self.params[off..off + i * o], true, 0.0, &mut dx);
            if l > 0 {
                for (d, a) in dx.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok(Gradients { params: grads, input: delta })
    }

    /// `self = coef * source + (1 - coef) * self`, elementwise.
    pub fn blend_toward(&mut self, source: &Mlp, coef: f64) -> Result<()> {
        if !self.same_shape(source) {
            return Err(Error::Dimension(format!("blend {:?} toward {:?}", self.sizes, source.sizes)));
        }
        soft_update(self.params_mut(), &source.params, coef);
        Ok(())
    }

    pub fn apply(&mut self, opt: &mut Adam, grads: &[f64]) -> Result<()> {
        opt.step(&mut self.params, grads)?;
        self.version += 1;
        Ok(())
    }
}

/// `target = xi * source + (1 - xi) * target`.
pub fn soft_update(target: &mut [f64], source: &[f64], xi: f64) {
    assert_eq!(target.len(), source.len(), "soft update of mismatched parameter vectors");
    let keep = 1.0 - xi;
    for (t, s) in target.iter_mut().zip(source) {
        *t = xi * s + keep * *t;
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer over {} parameters got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {i} is {}", grads[i])));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}
