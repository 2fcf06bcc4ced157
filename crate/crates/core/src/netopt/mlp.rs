//! Fully connected ReLU network with hand-written reverse mode.
//!
//! Parameters live in one flat buffer, layer by layer: the weight matrix
//! (row-major, `out x in`) followed by the bias vector. Optimizers and soft
//! target updates operate on that buffer directly.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Start of each layer's weight block in `params`.
    offsets: Vec<usize>,
    id: u64,
    /// Bumped on every parameter write; caches remember the value they saw.
    version: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Mlp {
            sizes: self.sizes.clone(),
            params: self.params.clone(),
            offsets: self.offsets.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.params == other.params
    }
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Cache {
    net_id: u64,
    version: u64,
    batch: usize,
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`
    /// (after ReLU for hidden layers, linear for the last one).
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Zero-initialised network. `sizes` lists input, hidden and output widths.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::contract("an mlp needs at least an input and an output size"));
        }
        if let Some(i) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::contract(format!("layer size {i} is zero")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut at = 0;
        for w in sizes.windows(2) {
            offsets.push(at);
            at += w[0] * w[1] + w[1];
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; at],
            offsets,
            id: fresh_id(),
            version: 0,
        })
    }

    /// Uniform initialisation in `±1/sqrt(fan_in)` for weights and biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for l in 0..net.num_layers() {
            let bound = 1.0 / (net.sizes[l] as f64).sqrt();
            let (start, end) = (net.offsets[l], net.layer_end(l));
            for p in &mut net.params[start..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
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

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat parameter buffer. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    fn layer_end(&self, l: usize) -> usize {
        self.offsets[l] + self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1]
    }

    /// Weight matrix (row-major `out x in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w0 = self.offsets[l];
        let b0 = w0 + n_in * n_out;
        (&self.params[w0..b0], &self.params[b0..b0 + n_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        self.version += 1;
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w0 = self.offsets[l];
        let (w, b) = self.params[w0..w0 + n_in * n_out + n_out].split_at_mut(n_in * n_out);
        (w, b)
    }

    /// Range of layer `l`'s weights and biases inside the flat buffer.
    pub fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let w0 = self.offsets[l];
        let b0 = w0 + self.sizes[l] * self.sizes[l + 1];
        (w0..b0, b0..b0 + self.sizes[l + 1])
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Cache)> {
        self.forward_batch(input, 1)
    }

    /// Forward pass over `batch` row-major samples packed in `input`.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<(Vec<f64>, Cache)> {
        if batch == 0 || input.len() != batch * self.input_dim() {
            return Err(Error::contract(format!(
                "forward expected {} x {} inputs, got {} values",
                batch,
                self.input_dim(),
                input.len()
            )));
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let mut out = Vec::with_capacity(batch * n_out);
            for _ in 0..batch {
                out.extend_from_slice(b);
            }
            let x = &acts[l];
            // out[B x n_out] += x[B x n_in] . w^T
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    n_in,
                    n_out,
                    1.0,
                    x.as_ptr(),
                    n_in as isize,
                    1,
                    w.as_ptr(),
                    1,
                    n_in as isize,
                    1.0,
                    out.as_mut_ptr(),
                    n_out as isize,
                    1,
                );
            }
            if l != last {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(out);
        }
        let output = acts.last().unwrap().clone();
        Ok((
            output,
            Cache {
                net_id: self.id,
                version: self.version,
                batch,
                acts,
            },
        ))
    }

    /// Forward pass without keeping the cache.
    pub fn predict_batch(&self, input: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.forward_batch(input, batch).map(|(out, _)| out)
    }

    fn check_cache(&self, cache: &Cache, output_grad: &[f64]) -> Result<()> {
        if cache.net_id != self.id || cache.version != self.version {
            return Err(Error::contract(
                "stale or foreign forward cache passed to backward",
            ));
        }
        if output_grad.len() != cache.batch * self.output_dim() {
            return Err(Error::contract(format!(
                "backward expected {} output gradients, got {}",
                cache.batch * self.output_dim(),
                output_grad.len()
            )));
        }
        Ok(())
    }

    /// Reverse pass: gradients of `sum(output * output_grad)` with respect to
    /// every parameter (flat, same layout as [`Mlp::params`]) and the input.
    pub fn backward(&self, cache: &Cache, output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_cache(cache, output_grad)?;
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.reverse(cache, output_grad, Some(&mut grads));
        Ok((grads, input_grad))
    }

    /// Reverse pass that only produces the input gradient.
    pub fn input_grad(&self, cache: &Cache, output_grad: &[f64]) -> Result<Vec<f64>> {
        self.check_cache(cache, output_grad)?;
        Ok(self.reverse(cache, output_grad, None))
    }

    fn reverse(&self, cache: &Cache, output_grad: &[f64], mut grads: Option<&mut Vec<f64>>) -> Vec<f64> {
        let batch = cache.batch;
        let mut delta = output_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &cache.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let (wr, br) = self.layer_ranges(l);
                let (gw, gb) = g[wr.start..br.end].split_at_mut(wr.len());
                // gw[n_out x n_in] = delta^T . x
                unsafe {
                    matrixmultiply::dgemm(
                        n_out,
                        batch,
                        n_in,
                        1.0,
                        delta.as_ptr(),
                        1,
                        n_out as isize,
                        x.as_ptr(),
                        n_in as isize,
                        1,
                        0.0,
                        gw.as_mut_ptr(),
                        n_in as isize,
                        1,
                    );
                }
                for row in delta.chunks_exact(n_out) {
                    for (acc, d) in gb.iter_mut().zip(row) {
                        *acc += d;
                    }
                }
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; batch * n_in];
            // prev[B x n_in] = delta[B x n_out] . w[n_out x n_in]
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    n_out,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    n_out as isize,
                    1,
                    w.as_ptr(),
                    n_in as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            if l > 0 {
                // ReLU mask from the stored post-activation of layer l-1.
                for (p, &a) in prev.iter_mut().zip(x.iter()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            weights.push(w.chunks_exact(self.sizes[l]).map(<[f64]>::to_vec).collect());
            biases.push(b.to_vec());
        }
        MlpCheckpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: self.sizes.clone(),
            weights,
            biases,
        }
    }

    pub fn from_checkpoint(ck: &MlpCheckpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::contract(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        let mut net = Self::zeros(&ck.layer_sizes)?;
        if ck.weights.len() != net.num_layers() || ck.biases.len() != net.num_layers() {
            return Err(Error::contract("checkpoint layer count does not match layer_sizes"));
        }
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (net.sizes[l], net.sizes[l + 1]);
            let rows = &ck.weights[l];
            if rows.len() != n_out || rows.iter().any(|r| r.len() != n_in) || ck.biases[l].len() != n_out {
                return Err(Error::contract(format!("checkpoint layer {l} has the wrong shape")));
            }
            let (w, b) = net.layer_mut(l);
            for (dst, src) in w.chunks_exact_mut(n_in).zip(rows) {
                dst.copy_from_slice(src);
            }
            b.copy_from_slice(&ck.biases[l]);
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&self.to_checkpoint()).map_err(|e| Error::json("mlp checkpoint", e))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: MlpCheckpoint =
            serde_json::from_str(s).map_err(|e| Error::json("mlp checkpoint", e))?;
        Self::from_checkpoint(&ck)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk parameter document. Weight matrices are nested row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

/// Expected parameter count for a layer-size list.
pub fn expected_param_count(sizes: &[usize]) -> usize {
    param_count(sizes)
}
