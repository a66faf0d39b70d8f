//! Sparse autoencoders with sigmoid units, greedy layer-wise stacking and
//! end-to-end fine-tuning.
//!
//! A single layer is trained on the sparse reconstruction objective
//!
//! ```text
//! J = 1/N Σᵢ ½‖y⁽ⁱ⁾ − x⁽ⁱ⁾‖²  +  λ/2 (‖W_enc‖² + ‖W_dec‖²)  +  β Σⱼ KL(ρ ‖ ρ̂ⱼ)
//! ```
//!
//! where `ρ̂ⱼ` is the mean activation of hidden unit `j` over the batch.
//! Fine-tuning unrolls the stack into `enc₁ … enc_L, dec_L … dec₁` and
//! minimises the first two terms only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, FeatureMatrix, Matrix, Rng};

const RHO_HAT_CLAMP: f64 = 1e-10;

#[inline]
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// Bernoulli KL divergence `KL(ρ ‖ ρ̂)`, with `ρ̂` clamped to
/// `[1e-10, 1 − 1e-10]`.
pub fn kl_divergence(rho: f64, rho_hat: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!(
            "sparsity target must lie in (0, 1), got {rho}"
        )));
    }
    Ok(kl_unchecked(rho, rho_hat))
}

fn kl_unchecked(rho: f64, rho_hat: f64) -> f64 {
    let q = rho_hat.clamp(RHO_HAT_CLAMP, 1.0 - RHO_HAT_CLAMP);
    rho * (rho / q).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - q)).ln()
}

/// d KL / d ρ̂; zero where the clamp is active.
fn kl_derivative(rho: f64, rho_hat: f64) -> f64 {
    if !(RHO_HAT_CLAMP..=1.0 - RHO_HAT_CLAMP).contains(&rho_hat) {
        return 0.0;
    }
    -rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat)
}

/// Fully connected sigmoid layer: `out = σ(in · wᵀ + b)`, `w` is
/// `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            w: Matrix::zeros(outputs, inputs),
            b: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    pub fn outputs(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul_nt(&self.w)?;
        for row in z.as_mut_slice().chunks_exact_mut(self.b.len()) {
            for (v, b) in row.iter_mut().zip(&self.b) {
                *v = sigmoid_scalar(*v + b);
            }
        }
        Ok(z)
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 2] {
        [self.w.as_mut_slice(), &mut self.b]
    }

    fn blocks(&self) -> [&[f64]; 2] {
        [self.w.as_slice(), &self.b]
    }

    fn is_finite(&self) -> bool {
        self.w.is_finite() && self.b.iter().all(|v| v.is_finite())
    }
}

/// One autoencoder: `m` inputs, `n` hidden units, untied decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AeLayer {
    /// `n × m` weights and `n` biases.
    pub encoder: Dense,
    /// `m × n` weights and `m` biases.
    pub decoder: Dense,
}

impl AeLayer {
    pub fn zeros(m: usize, n: usize) -> Self {
        AeLayer {
            encoder: Dense::zeros(m, n),
            decoder: Dense::zeros(n, m),
        }
    }

    /// Weights uniform in `±√(6/(m+n))`, biases zero.
    pub fn random(m: usize, n: usize, rng: &mut Rng) -> Self {
        let r = (6.0 / (m + n) as f64).sqrt();
        let mut layer = AeLayer::zeros(m, n);
        for w in layer
            .encoder
            .w
            .as_mut_slice()
            .iter_mut()
            .chain(layer.decoder.w.as_mut_slice())
        {
            *w = rng.uniform(-r, r).expect("non-empty range");
        }
        layer
    }

    pub fn from_parts(encoder: Dense, decoder: Dense) -> Result<Self> {
        let (n, m) = encoder.w.shape();
        if encoder.b.len() != n || decoder.w.shape() != (m, n) || decoder.b.len() != m {
            return Err(Error::invalid(format!(
                "autoencoder parts disagree: encoder {:?}+{}, decoder {:?}+{}",
                encoder.w.shape(),
                encoder.b.len(),
                decoder.w.shape(),
                decoder.b.len()
            )));
        }
        Ok(AeLayer { encoder, decoder })
    }

    pub fn input_width(&self) -> usize {
        self.encoder.inputs()
    }

    pub fn hidden_width(&self) -> usize {
        self.encoder.outputs()
    }

    /// Single-sample pass: hidden activation `a` and reconstruction `y`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.input_width() {
            return Err(Error::Shape {
                op: "autoencoder forward",
                left: (1, x.len()),
                right: self.encoder.w.shape(),
            });
        }
        let x = Matrix::new(1, x.len(), x.to_vec())?;
        let a = self.encoder.forward(&x)?;
        let y = self.decoder.forward(&a)?;
        Ok((a.into_vec(), y.into_vec()))
    }

    fn into_network(self) -> Vec<Dense> {
        vec![self.encoder, self.decoder]
    }

    fn from_network(mut net: Vec<Dense>) -> Self {
        let decoder = net.pop().expect("two layers");
        let encoder = net.pop().expect("two layers");
        AeLayer { encoder, decoder }
    }

    fn network(&self) -> [&Dense; 2] {
        [&self.encoder, &self.decoder]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeHyper {
    /// Weight decay λ.
    pub lambda: f64,
    /// Sparsity weight β.
    pub beta: f64,
    /// Sparsity target ρ.
    pub rho: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Samples per update; `None` means full batch.
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for AeHyper {
    fn default() -> Self {
        AeHyper {
            lambda: 1e-4,
            beta: 3.0,
            rho: 0.05,
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: None,
            epochs: 400,
            seed: 0,
        }
    }
}

impl AeHyper {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.rho > 0.0 && self.rho < 1.0) {
            bad.push(format!("rho {} not in (0, 1)", self.rho));
        }
        if !(self.lambda >= 0.0) {
            bad.push(format!("lambda {} < 0", self.lambda));
        }
        if !(self.beta >= 0.0) {
            bad.push(format!("beta {} < 0", self.beta));
        }
        if !(self.learning_rate > 0.0) {
            bad.push(format!("learning_rate {} <= 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bad.push(format!("momentum {} not in [0, 1)", self.momentum));
        }
        if self.epochs == 0 {
            bad.push("epochs must be >= 1".into());
        }
        if self.batch_size == Some(0) {
            bad.push("batch_size must be >= 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "autoencoder hyperparameters: {}",
                bad.join(", ")
            )))
        }
    }

    /// Hyperparameters for greedy layer `index`: identical except for a seed
    /// derived from `(seed, index)`.
    pub fn for_layer(&self, index: usize) -> AeHyper {
        AeHyper {
            seed: derive_seed(self.seed, &[index as u64]),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub total: f64,
    pub recon: f64,
    pub decay: f64,
    pub sparsity: f64,
}

/// Gradient of the sparse objective, one block per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub w_enc: Matrix,
    pub b_enc: Vec<f64>,
    pub w_dec: Matrix,
    pub b_dec: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Objective {
    lambda: f64,
    /// `(β, ρ)` applied to the first hidden layer's activations.
    sparsity: Option<(f64, f64)>,
}

impl Objective {
    fn sparse(h: &AeHyper) -> Self {
        Objective {
            lambda: h.lambda,
            sparsity: (h.beta > 0.0).then_some((h.beta, h.rho)),
        }
    }

    fn reconstruction(h: &AeHyper) -> Self {
        Objective {
            lambda: h.lambda,
            sparsity: None,
        }
    }
}

fn check_batch(net: &[&Dense], batch: &Matrix) -> Result<()> {
    if batch.cols() != net[0].inputs() {
        return Err(Error::Shape {
            op: "autoencoder batch",
            left: batch.shape(),
            right: net[0].w.shape(),
        });
    }
    Ok(())
}

fn forward_all(net: &[&Dense], x: &Matrix) -> Result<Vec<Matrix>> {
    let mut acts = Vec::with_capacity(net.len());
    let mut cur = net[0].forward(x)?;
    for layer in &net[1..] {
        let next = layer.forward(&cur)?;
        acts.push(cur);
        cur = next;
    }
    acts.push(cur);
    Ok(acts)
}

fn evaluate(net: &[&Dense], x: &Matrix, obj: Objective, acts: &[Matrix]) -> CostTerms {
    let n = x.rows() as f64;
    let y = acts.last().expect("at least one layer");
    let recon = 0.5
        * y.as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
        / n;
    let decay = 0.5 * obj.lambda * net.iter().map(|l| l.w.sum_squares()).sum::<f64>();
    let sparsity = match obj.sparsity {
        Some((beta, rho)) => {
            beta * acts[0]
                .col_means()
                .iter()
                .map(|&q| kl_unchecked(rho, q))
                .sum::<f64>()
        }
        None => 0.0,
    };
    CostTerms {
        total: recon + decay + sparsity,
        recon,
        decay,
        sparsity,
    }
}

fn cost_of(net: &[&Dense], x: &Matrix, obj: Objective) -> Result<CostTerms> {
    check_batch(net, x)?;
    let acts = forward_all(net, x)?;
    Ok(evaluate(net, x, obj, &acts))
}

/// Objective value and its gradient for a sigmoid network trained to
/// reproduce its input.
fn cost_and_grad(net: &[&Dense], x: &Matrix, obj: Objective) -> Result<(CostTerms, Vec<Dense>)> {
    check_batch(net, x)?;
    let acts = forward_all(net, x)?;
    let terms = evaluate(net, x, obj, &acts);
    let n = x.rows() as f64;

    let y = acts.last().expect("at least one layer");
    let mut delta = y.clone();
    for ((d, &yv), &xv) in delta
        .as_mut_slice()
        .iter_mut()
        .zip(y.as_slice())
        .zip(x.as_slice())
    {
        *d = (yv - xv) * yv * (1.0 - yv) / n;
    }

    let mut grads: Vec<Dense> = Vec::with_capacity(net.len());
    for l in (0..net.len()).rev() {
        let input = if l == 0 { x } else { &acts[l - 1] };
        let mut gw = delta.matmul_tn(input)?;
        if obj.lambda != 0.0 {
            for (g, w) in gw.as_mut_slice().iter_mut().zip(net[l].w.as_slice()) {
                *g += obj.lambda * w;
            }
        }
        let gb = column_sums(&delta);
        if l > 0 {
            let mut back = delta.matmul(&net[l].w)?;
            let a = &acts[l - 1];
            let sparse_term = match (l, obj.sparsity) {
                (1, Some((beta, rho))) => Some(
                    a.col_means()
                        .iter()
                        .map(|&q| beta * kl_derivative(rho, q) / n)
                        .collect::<Vec<_>>(),
                ),
                _ => None,
            };
            let width = a.cols();
            for (i, (d, &av)) in back.as_mut_slice().iter_mut().zip(a.as_slice()).enumerate() {
                if let Some(s) = &sparse_term {
                    *d += s[i % width];
                }
                *d *= av * (1.0 - av);
            }
            delta = back;
        }
        grads.push(Dense { w: gw, b: gb });
    }
    grads.reverse();
    Ok((terms, grads))
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut s = vec![0.0; m.cols()];
    for r in m.row_iter() {
        for (acc, v) in s.iter_mut().zip(r) {
            *acc += v;
        }
    }
    s
}

/// The three terms of the sparse objective on `batch`.
pub fn cost(layer: &AeLayer, batch: &FeatureMatrix, h: &AeHyper) -> Result<CostTerms> {
    kl_divergence(h.rho, h.rho)?;
    cost_of(&layer.network(), batch, Objective::sparse(h))
}

/// Exact gradient of `cost(..).total`.
pub fn gradient(layer: &AeLayer, batch: &FeatureMatrix, h: &AeHyper) -> Result<LayerGradient> {
    kl_divergence(h.rho, h.rho)?;
    let (_, mut g) = cost_and_grad(&layer.network(), batch, Objective::sparse(h))?;
    let dec = g.pop().expect("decoder");
    let enc = g.pop().expect("encoder");
    Ok(LayerGradient {
        w_enc: enc.w,
        b_enc: enc.b,
        w_dec: dec.w,
        b_dec: dec.b,
    })
}

struct Descent {
    history: Vec<f64>,
    /// Lowest-reconstruction parameters seen and their reconstruction term.
    best: Option<(f64, Vec<Dense>)>,
}

/// Gradient descent with momentum. Records the full-data objective before
/// the first update and after every epoch.
fn descend(
    net: &mut [Dense],
    data: &Matrix,
    h: &AeHyper,
    obj: Objective,
    epochs: usize,
    track_best: bool,
) -> Result<Descent> {
    let mut velocity: Vec<Dense> = net
        .iter()
        .map(|l| Dense::zeros(l.inputs(), l.outputs()))
        .collect();
    let mut rng = Rng::new(derive_seed(h.seed, &[0x5348_5546])); // batch order
    let n = data.rows();
    let batch = h.batch_size.filter(|&b| b < n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut out = Descent {
        history: Vec::with_capacity(epochs + 1),
        best: None,
    };

    let record = |terms: CostTerms, net: &[Dense], out: &mut Descent| -> Result<()> {
        if !terms.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "autoencoder training (objective {})",
                terms.total
            )));
        }
        out.history.push(terms.total);
        if track_best && out.best.as_ref().is_none_or(|(r, _)| terms.recon < *r) {
            out.best = Some((terms.recon, net.to_vec()));
        }
        Ok(())
    };

    let mut step = |net: &mut [Dense], grads: &[Dense]| {
        for ((layer, vel), g) in net.iter_mut().zip(velocity.iter_mut()).zip(grads) {
            for ((p, v), g) in layer
                .blocks_mut()
                .into_iter()
                .zip(vel.blocks_mut())
                .zip(g.blocks())
            {
                for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = h.momentum * *v - h.learning_rate * g;
                    *p += *v;
                }
            }
        }
    };

    for _ in 0..epochs {
        match batch {
            None => {
                let refs: Vec<&Dense> = net.iter().collect();
                let (terms, grads) = cost_and_grad(&refs, data, obj)?;
                record(terms, net, &mut out)?;
                step(net, &grads);
            }
            Some(size) => {
                let refs: Vec<&Dense> = net.iter().collect();
                record(cost_of(&refs, data, obj)?, net, &mut out)?;
                rng.shuffle(&mut order);
                for chunk in order.chunks(size) {
                    let mb = data.select_rows(chunk);
                    let refs: Vec<&Dense> = net.iter().collect();
                    let (_, grads) = cost_and_grad(&refs, &mb, obj)?;
                    step(net, &grads);
                }
            }
        }
    }
    let refs: Vec<&Dense> = net.iter().collect();
    record(cost_of(&refs, data, obj)?, net, &mut out)?;
    if net.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("autoencoder parameters".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainedLayer {
    pub layer: AeLayer,
    /// Objective on the full data before training and after each epoch
    /// (`epochs + 1` values).
    pub history: Vec<f64>,
}

/// Trains one sparse autoencoder with `n` hidden units on the rows of `data`.
pub fn train_layer(data: &FeatureMatrix, n: usize, h: &AeHyper) -> Result<TrainedLayer> {
    h.validate()?;
    if n == 0 || n >= data.cols() {
        return Err(Error::invalid(format!(
            "hidden width {n} must be in 1..{} to reduce a {}-wide input",
            data.cols(),
            data.cols()
        )));
    }
    let mut rng = Rng::new(h.seed);
    let mut net = AeLayer::random(data.cols(), n, &mut rng).into_network();
    let run = descend(&mut net, data, h, Objective::sparse(h), h.epochs, false)?;
    Ok(TrainedLayer {
        layer: AeLayer::from_network(net),
        history: run.history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedAutoencoder {
    layers: Vec<AeLayer>,
}

impl StackedAutoencoder {
    pub fn from_layers(layers: Vec<AeLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a stack needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].input_width() != pair[0].hidden_width() {
                return Err(Error::invalid(format!(
                    "layer {} expects {} inputs but layer {i} emits {}",
                    i + 1,
                    pair[1].input_width(),
                    pair[0].hidden_width()
                )));
            }
        }
        Ok(StackedAutoencoder { layers })
    }

    pub fn layers(&self) -> &[AeLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn bottleneck(&self) -> usize {
        self.layers.last().expect("non-empty").hidden_width()
    }

    /// `[m₀, s₁, …, s_L]`, input width first.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(AeLayer::hidden_width))
            .collect()
    }

    /// Encoders in order followed by decoders in reverse.
    fn unrolled(&self) -> Vec<&Dense> {
        self.layers
            .iter()
            .map(|l| &l.encoder)
            .chain(self.layers.iter().rev().map(|l| &l.decoder))
            .collect()
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::Shape {
                op: "stacked autoencoder",
                left: x.shape(),
                right: (self.input_width(), self.bottleneck()),
            });
        }
        Ok(())
    }

    /// Full encode–decode pass.
    pub fn reconstruct(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check_width(x)?;
        let acts = forward_all(&self.unrolled(), x)?;
        Ok(acts.into_iter().last().expect("non-empty"))
    }
}

/// Greedy layer-wise pretraining: layer `i` is trained on the activations of
/// layer `i − 1` with hyperparameters [`AeHyper::for_layer`]`(i)`.
pub fn train_stacked(
    data: &FeatureMatrix,
    widths: &[usize],
    h: &AeHyper,
) -> Result<StackedAutoencoder> {
    check_widths(data.cols(), widths)?;
    let mut layers = Vec::with_capacity(widths.len());
    let mut input = data.clone();
    for (i, &w) in widths.iter().enumerate() {
        let trained = train_layer(&input, w, &h.for_layer(i))?;
        if i + 1 < widths.len() {
            input = trained.layer.encoder.forward(&input)?;
        }
        layers.push(trained.layer);
    }
    StackedAutoencoder::from_layers(layers)
}

pub fn check_widths(input: usize, widths: &[usize]) -> Result<()> {
    if widths.is_empty() {
        return Err(Error::invalid("stack widths must not be empty"));
    }
    let mut prev = input;
    for &w in widths {
        if w == 0 || w >= prev {
            return Err(Error::invalid(format!(
                "stack widths must strictly decrease from the input width {input}: got {widths:?}"
            )));
        }
        prev = w;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FineTuned {
    pub stack: StackedAutoencoder,
    /// Reconstruction term `1/N Σ ½‖y − x‖²` before and after.
    pub recon_before: f64,
    pub recon_after: f64,
    /// Objective (reconstruction + decay) before and after each epoch.
    pub history: Vec<f64>,
}

/// End-to-end backpropagation through the unrolled stack on reconstruction
/// plus weight decay, for `h.epochs` epochs. Returns the parameters with the
/// lowest training reconstruction term seen, so it never ends worse than it
/// started.
pub fn fine_tune(
    stack: &StackedAutoencoder,
    data: &FeatureMatrix,
    h: &AeHyper,
) -> Result<FineTuned> {
    stack.check_width(data)?;
    let obj = Objective::reconstruction(h);
    let before = cost_of(&stack.unrolled(), data, obj)?;
    if h.epochs == 0 {
        return Ok(FineTuned {
            stack: stack.clone(),
            recon_before: before.recon,
            recon_after: before.recon,
            history: vec![before.total],
        });
    }
    h.validate()?;
    let depth = stack.depth();
    let mut net: Vec<Dense> = stack.unrolled().into_iter().cloned().collect();
    let run = descend(&mut net, data, h, obj, h.epochs, true)?;
    let (recon_after, best) = run.best.expect("at least one evaluation");
    let decoders: Vec<Dense> = best[depth..].iter().rev().cloned().collect();
    let layers = best[..depth]
        .iter()
        .cloned()
        .zip(decoders)
        .map(|(e, d)| AeLayer::from_parts(e, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(FineTuned {
        stack: StackedAutoencoder::from_layers(layers)?,
        recon_before: before.recon,
        recon_after,
        history: run.history,
    })
}

/// Bottleneck codes for each row of `x`.
pub fn encode(stack: &StackedAutoencoder, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    stack.check_width(x)?;
    let mut cur = stack.layers[0].encoder.forward(x)?;
    for layer in &stack.layers[1..] {
        cur = layer.encoder.forward(&cur)?;
    }
    Ok(cur)
}

/// Mean over rows of the squared reconstruction error `‖y − x‖²`.
pub fn reconstruction_error(stack: &StackedAutoencoder, x: &FeatureMatrix) -> Result<f64> {
    let y = stack.reconstruct(x)?;
    Ok(y.as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.rows() as f64)
}
