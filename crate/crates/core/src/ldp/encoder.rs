//! Dimension-reducing encoder trained server-side on public nodes.
//!
//! A single-hidden-layer autoencoder `x -> tanh(W_e z + b_e) -> W_d h + b_d`
//! on standardized inputs `z`, fit by per-sample SGD on squared
//! reconstruction error. Only the encoding half is published.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gcn::{read_tensors, write_tensors};
use crate::rng::SimRng;

const LEARNING_RATE: f64 = 0.01;
/// Relative padding added on both sides of the observed output range.
const RANGE_PADDING: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    mean: Array1<f64>,
    scale: f64,
    weights: Array2<f64>,
    bias: Array1<f64>,
    pub x_min: f64,
    pub x_max: f64,
}

impl Encoder {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    fn hidden(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        let z = (x - &self.mean) / self.scale;
        (z.dot(&self.weights) + &self.bias).mapv(f64::tanh)
    }

    /// Encoded vector, clamped to `[x_min, x_max]`.
    pub fn encode(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        self.hidden(x).mapv(|v| v.clamp(self.x_min, self.x_max))
    }

    /// Encoded vector rescaled to `[0, 1]`.
    pub fn encode_normalized(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        let span = self.x_max - self.x_min;
        self.encode(x).mapv(|v| (v - self.x_min) / span)
    }

    pub fn encode_rows(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.output_dim()));
        for (mut row, input) in out.outer_iter_mut().zip(x.outer_iter()) {
            row.assign(&self.encode(&input));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mean = self.mean.view().insert_axis(Axis(0)).to_owned();
        let bias = self.bias.view().insert_axis(Axis(0)).to_owned();
        let meta = ndarray::array![[self.scale, self.x_min, self.x_max]];
        write_tensors(
            path,
            &[("mean", &mean), ("weights", &self.weights), ("bias", &bias), ("meta", &meta)],
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tensors = read_tensors(path)?;
        let get = |name: &str| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::validation(format!("{}: missing `{name}`", path.display())))
        };
        let (mean, weights, bias, meta) = (get("mean")?, get("weights")?, get("bias")?, get("meta")?);
        if meta.len() != 3 || mean.ncols() != weights.nrows() || bias.ncols() != weights.ncols() {
            return Err(Error::validation(format!("{}: inconsistent encoder shapes", path.display())));
        }
        Ok(Self {
            mean: mean.row(0).to_owned(),
            scale: meta[[0, 0]],
            weights,
            bias: bias.row(0).to_owned(),
            x_min: meta[[0, 1]],
            x_max: meta[[0, 2]],
        })
    }
}

/// Full encoder/decoder pair, kept around for evaluating reconstruction.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    encoder: Encoder,
    dec_weights: Array2<f64>,
    dec_bias: Array1<f64>,
}

fn uniform_init(rows: usize, cols: usize, rng: &mut SimRng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

impl Autoencoder {
    pub fn train(public: &ArrayView2<f64>, d1: usize, epochs: usize, rng: &mut SimRng) -> Result<Self> {
        let (n, d) = public.dim();
        if n == 0 {
            return Err(Error::validation("public node set is empty"));
        }
        if d1 == 0 || d1 >= d {
            return Err(Error::validation(format!(
                "encoder dimension {d1} must be in [1, {d})"
            )));
        }
        let mean = public.mean_axis(Axis(0)).expect("non-empty");
        let var = public
            .outer_iter()
            .map(|row| (&row - &mean).mapv(|v| v * v).sum())
            .sum::<f64>()
            / (n * d) as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };

        let mut ae = Autoencoder {
            encoder: Encoder {
                mean,
                scale,
                weights: uniform_init(d, d1, rng),
                bias: Array1::zeros(d1),
                x_min: -1.0,
                x_max: 1.0,
            },
            dec_weights: uniform_init(d1, d, rng),
            dec_bias: Array1::zeros(d),
        };

        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            for &i in &order {
                ae.sgd_sample(&public.row(i));
            }
        }
        ae.set_range(public);
        Ok(ae)
    }

    fn sgd_sample(&mut self, x: &ArrayView1<f64>) {
        let enc = &mut self.encoder;
        let z = (x - &enc.mean) / enc.scale;
        let h = (z.dot(&enc.weights) + &enc.bias).mapv(f64::tanh);
        let recon = h.dot(&self.dec_weights) + &self.dec_bias;
        // d/d(recon) of mean squared error over the d outputs.
        let g_out = (&recon - &z) * (2.0 / z.len() as f64);
        let g_h = self.dec_weights.dot(&g_out);
        let g_pre = &g_h * &h.mapv(|v| 1.0 - v * v);

        let outer = |a: &Array1<f64>, b: &Array1<f64>| {
            a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
        };
        self.dec_weights.scaled_add(-LEARNING_RATE, &outer(&h, &g_out));
        self.dec_bias.scaled_add(-LEARNING_RATE, &g_out);
        enc.weights.scaled_add(-LEARNING_RATE, &outer(&z, &g_pre));
        enc.bias.scaled_add(-LEARNING_RATE, &g_pre);
    }

    fn set_range(&mut self, public: &ArrayView2<f64>) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in public.outer_iter() {
            for v in self.encoder.hidden(&row) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let mut pad = (hi - lo) * RANGE_PADDING;
        if pad <= 0.0 {
            pad = 1e-6;
        }
        self.encoder.x_min = lo - pad;
        self.encoder.x_max = hi + pad;
    }

    /// Mean squared reconstruction error in standardized input units.
    pub fn reconstruction_mse(&self, x: &ArrayView2<f64>) -> f64 {
        let enc = &self.encoder;
        let mut total = 0.0;
        for row in x.outer_iter() {
            let z = (&row - &enc.mean) / enc.scale;
            let h = (z.dot(&enc.weights) + &enc.bias).mapv(f64::tanh);
            let recon = h.dot(&self.dec_weights) + &self.dec_bias;
            total += (&recon - &z).mapv(|v| v * v).sum();
        }
        total / (x.nrows() * x.ncols()).max(1) as f64
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn into_encoder(self) -> Encoder {
        self.encoder
    }
}

/// Trains an autoencoder on `public` and returns its encoding half.
pub fn train_encoder(public: &ArrayView2<f64>, d1: usize, epochs: usize, seed: u64) -> Result<Encoder> {
    let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(seed);
    Autoencoder::train(public, d1, epochs, &mut rng).map(Autoencoder::into_encoder)
}
