//! Convolutional autoencoder over normalized spatial fields.
//!
//! Encoder: conv(3x3, stride 1, zero-padded, relu) + max-pool stages with
//! 16/8/4 filters, a relu bridge dense layer and a linear dense encoding of
//! dimension h. Decoder: the mirrored dense layers, then transposed
//! convolutions (9x9 kernels, stride 3, padding 3, relu) with 4/8/16
//! filters and a final sigmoid convolution back to one channel. Trained
//! with grid-point-wise MSE, Adam, and early stopping on validation MSE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    adam_step, AdamConfig, AdamState, Activation, LayerSpec, Network, Scalar, Tensor,
};
use crate::rng::stream;
use rand::seq::SliceRandom;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvAeConfig {
    pub latent_dim: usize,
    pub encoder_filters: Vec<usize>,
    pub conv_kernel: (usize, usize),
    pub conv_stride: (usize, usize),
    pub conv_padding: (usize, usize),
    pub pool_window: (usize, usize),
    /// Defaults to the pool window (downsampling); stride 1 is accepted for
    /// the literal no-downsampling variant, at the cost of a huge bridge.
    pub pool_stride: (usize, usize),
    pub bridge_width: usize,
    pub decoder_filters: Vec<usize>,
    pub decoder_kernel: (usize, usize),
    pub decoder_stride: (usize, usize),
    pub decoder_padding: (usize, usize),
    pub input_hw: (usize, usize),
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl ConvAeConfig {
    pub fn with_latent_dim(h: usize) -> Self {
        ConvAeConfig {
            latent_dim: h,
            encoder_filters: vec![16, 8, 4],
            conv_kernel: (3, 3),
            conv_stride: (1, 1),
            conv_padding: (1, 1),
            pool_window: (3, 3),
            pool_stride: (3, 3),
            bridge_width: 64,
            decoder_filters: vec![4, 8, 16],
            decoder_kernel: (9, 9),
            decoder_stride: (3, 3),
            decoder_padding: (3, 3),
            input_hw: (81, 81),
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("latent dimension h must be at least 1"));
        }
        if self.encoder_filters.is_empty() || self.decoder_filters.is_empty() {
            return Err(Error::config("encoder and decoder need at least one stage"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::config("batch size and max epochs must be positive"));
        }
        Ok(())
    }

    /// Spatial size the decoder starts from, solved backwards through the
    /// transposed-convolution chain so that the output lands exactly on the
    /// input extent.
    fn decoder_start(&self) -> Result<(usize, usize)> {
        let mut hw = self.input_hw;
        for (stage, _) in self.decoder_filters.iter().enumerate().rev() {
            let back = |out: usize, k: usize, s: usize, p: usize| -> Result<usize> {
                let num = out as isize - k as isize + 2 * p as isize;
                if num < 0 || num % s as isize != 0 {
                    return Err(Error::config(format!(
                        "decoder stage {stage}: no integer input extent reaches output {out} \
                         with kernel {k}, stride {s}, padding {p}"
                    )));
                }
                Ok((num / s as isize) as usize + 1)
            };
            hw = (
                back(hw.0, self.decoder_kernel.0, self.decoder_stride.0, self.decoder_padding.0)?,
                back(hw.1, self.decoder_kernel.1, self.decoder_stride.1, self.decoder_padding.1)?,
            );
            if hw.0 == 0 || hw.1 == 0 {
                return Err(Error::config(format!("decoder stage {stage}: extent collapsed to zero")));
            }
        }
        Ok(hw)
    }

    fn encoder_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        for &filters in &self.encoder_filters {
            specs.push(LayerSpec::Conv2d {
                filters,
                kernel: self.conv_kernel,
                stride: self.conv_stride,
                padding: self.conv_padding,
                activation: Activation::Relu,
            });
            specs.push(LayerSpec::MaxPool2d {
                window: self.pool_window,
                stride: self.pool_stride,
            });
        }
        specs.push(LayerSpec::Flatten);
        specs.push(LayerSpec::Dense {
            units: self.bridge_width,
            activation: Activation::Relu,
        });
        specs.push(LayerSpec::Dense {
            units: self.latent_dim,
            activation: Activation::Linear,
        });
        specs
    }

    fn decoder_specs(&self, start: (usize, usize)) -> Vec<LayerSpec> {
        let c0 = self.decoder_filters[0];
        let mut specs = vec![
            LayerSpec::Dense {
                units: self.bridge_width,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                units: c0 * start.0 * start.1,
                activation: Activation::Relu,
            },
            LayerSpec::Reshape {
                to: vec![c0, start.0, start.1],
            },
        ];
        for &filters in &self.decoder_filters {
            specs.push(LayerSpec::TConv2d {
                filters,
                kernel: self.decoder_kernel,
                stride: self.decoder_stride,
                padding: self.decoder_padding,
                activation: Activation::Relu,
            });
        }
        specs.push(LayerSpec::Conv2d {
            filters: 1,
            kernel: (3, 3),
            stride: (1, 1),
            padding: (1, 1),
            activation: Activation::Sigmoid,
        });
        specs
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvAeModel {
    pub config: ConvAeConfig,
    pub encoder: Network<f32>,
    pub decoder: Network<f32>,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

/// Builds encoder/decoder at any precision; used by the f64 gradient checks.
pub fn build_networks<S: Scalar>(config: &ConvAeConfig) -> Result<(Network<S>, Network<S>)> {
    config.validate()?;
    let mut rng = stream(config.seed, "init");
    let encoder = Network::build(
        &config.encoder_specs(),
        vec![1, config.input_hw.0, config.input_hw.1],
        &mut rng,
    )
    .map_err(|e| Error::config(format!("encoder: {e}")))?;
    let start = config.decoder_start()?;
    let decoder = Network::build(&config.decoder_specs(start), vec![config.latent_dim], &mut rng)
        .map_err(|e| Error::config(format!("decoder: {e}")))?;
    if decoder.out_shape() != [1, config.input_hw.0, config.input_hw.1] {
        return Err(Error::config(format!(
            "decoder output {:?} does not close back to the input {:?}",
            decoder.out_shape(),
            config.input_hw
        )));
    }
    Ok((encoder, decoder))
}

/// Builds an untrained model; fails if the geometry does not close.
pub fn build(config: &ConvAeConfig) -> Result<ConvAeModel> {
    let (encoder, decoder) = build_networks::<f32>(config)?;
    Ok(ConvAeModel {
        config: config.clone(),
        encoder,
        decoder,
        history: Vec::new(),
        best_epoch: None,
    })
}

impl ConvAeModel {
    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }
}

fn stack_fields(fields: &[Tensor<f32>], hw: (usize, usize)) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(fields.len() * hw.0 * hw.1);
    for (i, f) in fields.iter().enumerate() {
        if f.shape() != [hw.0, hw.1] {
            return Err(Error::shape(format!(
                "field {i} has shape {:?}, expected {hw:?}",
                f.shape()
            )));
        }
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::data(format!("field {i} is not normalized to [0,1]")));
        }
        data.extend_from_slice(f.data());
    }
    Tensor::new(vec![fields.len(), 1, hw.0, hw.1], data)
}

fn batch_mse(model: &ConvAeModel, batch: &Tensor<f32>) -> Result<f64> {
    let code = model.encoder.forward(batch)?;
    let recon = model.decoder.forward(&code)?;
    let mut total = 0.0;
    for (a, b) in recon.data().iter().zip(batch.data()) {
        let d = f64::from(a - b);
        total += d * d;
    }
    Ok(total / batch.len() as f64)
}

/// Mean squared error over whole tensors evaluated in eval-sized batches.
fn dataset_mse(model: &ConvAeModel, fields: &Tensor<f32>, eval_batch: usize) -> Result<f64> {
    let n = fields.shape()[0];
    let sample = fields.len() / n;
    let mut total = 0.0;
    let mut offset = 0;
    while offset < n {
        let take = eval_batch.min(n - offset);
        let slice = Tensor::new(
            vec![take, 1, model.config.input_hw.0, model.config.input_hw.1],
            fields.data()[offset * sample..(offset + take) * sample].to_vec(),
        )?;
        total += batch_mse(model, &slice)? * (take * sample) as f64;
        offset += take;
    }
    Ok(total / fields.len() as f64)
}

/// Trains with Adam on grid-point MSE; early stopping restores the
/// parameters of the best validation epoch. Shuffling, initialization and
/// everything downstream derive from `config.seed`.
pub fn train(
    config: &ConvAeConfig,
    fields01_train: &[Tensor<f32>],
    fields01_val: &[Tensor<f32>],
) -> Result<ConvAeModel> {
    if fields01_train.is_empty() || fields01_val.is_empty() {
        return Err(Error::config("training and validation sets must be non-empty"));
    }
    let mut model = build(config)?;
    let hw = config.input_hw;
    let train = stack_fields(fields01_train, hw)?;
    let val = stack_fields(fields01_val, hw)?;
    let n = fields01_train.len();
    let sample = hw.0 * hw.1;

    let adam_cfg = AdamConfig::with_lr(config.lr);
    let mut adam = {
        let enc = model.encoder.params();
        let dec = model.decoder.params();
        let all: Vec<&Tensor<f32>> = enc.into_iter().chain(dec).collect();
        AdamState::new(&all)
    };
    let mut shuffle_rng = stream(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..n).collect();

    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<(Vec<Tensor<f32>>, Vec<Tensor<f32>>)> = None;
    let mut since_improve = 0usize;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut train_sq_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut data = Vec::with_capacity(chunk.len() * sample);
            for &idx in chunk {
                data.extend_from_slice(&train.data()[idx * sample..(idx + 1) * sample]);
            }
            let batch = Tensor::new(vec![chunk.len(), 1, hw.0, hw.1], data)?;
            let enc_trace = model
                .encoder
                .forward_trace(&batch)
                .map_err(|e| Error::numeric(format!("epoch {epoch}: {e}")))?;
            let dec_trace = model
                .decoder
                .forward_trace(enc_trace.output())
                .map_err(|e| Error::numeric(format!("epoch {epoch}: {e}")))?;
            let recon = dec_trace.output();
            let scale = 2.0 / batch.len() as f32;
            let mut grad = recon.clone();
            let mut sq_sum = 0.0f64;
            for (g, x) in grad.data_mut().iter_mut().zip(batch.data()) {
                let r = *g - *x;
                sq_sum += f64::from(r) * f64::from(r);
                *g = scale * r;
            }
            train_sq_sum += sq_sum;
            let dec_grads = model.decoder.backward(&dec_trace, &grad)?;
            let enc_grads = model.encoder.backward(&enc_trace, &dec_grads.grad_input)?;
            let grads: Vec<&Tensor<f32>> =
                enc_grads.flat().into_iter().chain(dec_grads.flat()).collect();
            let mut params: Vec<&mut Tensor<f32>> = model
                .encoder
                .params_mut()
                .into_iter()
                .chain(model.decoder.params_mut())
                .collect();
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
        }
        let train_mse = train_sq_sum / train.len() as f64;
        let val_mse = dataset_mse(&model, &val, config.batch_size.max(32))?;
        model.history.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
        });
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            since_improve = 0;
            best_params = Some((
                model.encoder.params().into_iter().cloned().collect(),
                model.decoder.params().into_iter().cloned().collect(),
            ));
        } else {
            since_improve += 1;
            if since_improve >= config.patience {
                break;
            }
        }
    }
    if let Some((enc, dec)) = best_params {
        for (p, saved) in model.encoder.params_mut().into_iter().zip(enc) {
            *p = saved;
        }
        for (p, saved) in model.decoder.params_mut().into_iter().zip(dec) {
            *p = saved;
        }
    }
    model.best_epoch = Some(best_epoch);
    Ok(model)
}

fn check_encode_input(model: &ConvAeModel, field01: &Tensor<f32>) -> Result<()> {
    let hw = model.config.input_hw;
    if field01.shape() != [hw.0, hw.1] {
        return Err(Error::shape(format!(
            "field shape {:?}, expected {:?}",
            field01.shape(),
            hw
        )));
    }
    if field01.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::data("field is not normalized to [0,1]"));
    }
    Ok(())
}

/// Deterministic encoding of one normalized field.
pub fn encode(model: &ConvAeModel, field01: &Tensor<f32>) -> Result<Vec<f32>> {
    check_encode_input(model, field01)?;
    let hw = model.config.input_hw;
    let batch = Tensor::new(vec![1, 1, hw.0, hw.1], field01.data().to_vec())?;
    Ok(model.encoder.forward(&batch)?.into_data())
}

/// Batched encoding, one code row per field.
pub fn encode_batch(model: &ConvAeModel, fields01: &[Tensor<f32>]) -> Result<Vec<Vec<f32>>> {
    let hw = model.config.input_hw;
    let h = model.config.latent_dim;
    let mut codes = Vec::with_capacity(fields01.len());
    for chunk in fields01.chunks(64) {
        let batch = stack_fields(chunk, hw)?;
        let out = model.encoder.forward(&batch)?;
        for row in out.data().chunks_exact(h) {
            codes.push(row.to_vec());
        }
    }
    Ok(codes)
}

/// Decodes a latent code to a field in (0,1).
pub fn decode(model: &ConvAeModel, code: &[f32]) -> Result<Tensor<f32>> {
    if code.len() != model.config.latent_dim {
        return Err(Error::shape(format!(
            "code length {}, expected {}",
            code.len(),
            model.config.latent_dim
        )));
    }
    let batch = Tensor::new(vec![1, code.len()], code.to_vec())?;
    let out = model.decoder.forward(&batch)?;
    let hw = model.config.input_hw;
    out.reshape(vec![hw.0, hw.1])
}

/// Mean over fields and grid points of the squared reconstruction error,
/// on the normalized 0-1 scale.
pub fn reconstruction_mse(model: &ConvAeModel, fields01: &[Tensor<f32>]) -> Result<f64> {
    if fields01.is_empty() {
        return Err(Error::data("no fields to evaluate"));
    }
    let stacked = stack_fields(fields01, model.config.input_hw)?;
    dataset_mse(model, &stacked, 64)
}

/// Pixel-wise mean field of the inputs; its MSE is the baseline any useful
/// autoencoder must beat.
pub fn mean_field_baseline_mse(fields01: &[Tensor<f32>]) -> Result<f64> {
    let Some(first) = fields01.first() else {
        return Err(Error::data("no fields"));
    };
    let len = first.len();
    let mut mean = vec![0f64; len];
    for f in fields01 {
        for (m, v) in mean.iter_mut().zip(f.data()) {
            *m += f64::from(*v);
        }
    }
    for m in &mut mean {
        *m /= fields01.len() as f64;
    }
    let mut total = 0.0;
    for f in fields01 {
        for (m, v) in mean.iter().zip(f.data()) {
            total += (f64::from(*v) - m).powi(2);
        }
    }
    Ok(total / (fields01.len() * len) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check_network;
    use rand::Rng;

    fn toy_fields(count: usize, hw: (usize, usize), seed: u64) -> Vec<Tensor<f32>> {
        let mut rng = stream(seed, "convae-test");
        (0..count)
            .map(|_| {
                // Smooth-ish random fields in [0,1].
                let (cy, cx): (f64, f64) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
                let amp: f64 = rng.random_range(0.5..1.0);
                let data: Vec<f32> = (0..hw.0 * hw.1)
                    .map(|i| {
                        let y = (i / hw.1) as f64 / hw.0 as f64;
                        let x = (i % hw.1) as f64 / hw.1 as f64;
                        let d = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
                        (0.5 + 0.5 * amp * (-8.0 * d * d).exp() - 0.25 * amp * d) as f32
                    })
                    .map(|v| v.clamp(0.0, 1.0))
                    .collect();
                Tensor::new(vec![hw.0, hw.1], data).unwrap()
            })
            .collect()
    }

    fn small_config(h: usize) -> ConvAeConfig {
        // One pool stage on a 9x9 grid: conv -> pool(3) -> flatten -> dense.
        ConvAeConfig {
            encoder_filters: vec![4],
            decoder_filters: vec![4],
            input_hw: (9, 9),
            batch_size: 8,
            max_epochs: 30,
            patience: 5,
            ..ConvAeConfig::with_latent_dim(h)
        }
    }

    #[test]
    fn default_geometry_closes() {
        let config = ConvAeConfig::with_latent_dim(2);
        let model = build(&config).unwrap();
        assert_eq!(model.encoder.out_shape(), &[2]);
        assert_eq!(model.decoder.out_shape(), &[1, 81, 81]);
        // Encoder flattens 4 channels at 3x3 into 36 features.
        assert_eq!(config.decoder_start().unwrap(), (3, 3));

        let field = toy_fields(1, (81, 81), 0).pop().unwrap();
        let code = encode(&model, &field).unwrap();
        assert_eq!(code.len(), 2);
        let recon = decode(&model, &code).unwrap();
        assert_eq!(recon.shape(), &[81, 81]);
    }

    #[test]
    fn latent_dims_from_one_to_thirty_two() {
        for h in [1usize, 2, 4, 8, 16, 32] {
            let model = build(&ConvAeConfig::with_latent_dim(h)).unwrap();
            let field = toy_fields(1, (81, 81), h as u64).pop().unwrap();
            assert_eq!(encode(&model, &field).unwrap().len(), h);
        }
    }

    #[test]
    fn zero_latent_dim_is_rejected() {
        assert!(build(&ConvAeConfig::with_latent_dim(0)).is_err());
    }

    #[test]
    fn parameter_count_is_deterministic() {
        let a = build(&ConvAeConfig::with_latent_dim(4)).unwrap();
        let b = build(&ConvAeConfig::with_latent_dim(4)).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        assert!(a.param_count() > 0);
    }

    #[test]
    fn encode_is_deterministic_and_decode_stays_in_unit_interval() {
        let model = build(&small_config(3)).unwrap();
        let field = toy_fields(1, (9, 9), 3).pop().unwrap();
        assert_eq!(encode(&model, &field).unwrap(), encode(&model, &field).unwrap());
        let out = decode(&model, &[0.0, 0.0, 0.0]).unwrap();
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
        let out = decode(&model, &[5.0, -3.0, 0.7]).unwrap();
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn normalization_invariance_under_exact_rescaling() {
        use crate::dataio::{minmax_normalize, GridField, GridSpec};
        let model = build(&ConvAeConfig::with_latent_dim(2)).unwrap();
        let spec = GridSpec::default_domain();
        let raw = toy_fields(1, (81, 81), 9).pop().unwrap().map(|v| v * 20.0 + 260.0);
        let date = chrono::NaiveDate::from_ymd_opt(2007, 1, 3).unwrap();
        let base = GridField::new(spec, "t2m".into(), date, raw.clone()).unwrap();
        // Scaling by a power of two is exact in f32, so the normalized
        // fields (and codes) match bitwise.
        let scaled = GridField::new(spec, "t2m".into(), date, raw.map(|v| v * 4.0)).unwrap();
        let (a, _, _) = minmax_normalize(&base).unwrap();
        let (b, _, _) = minmax_normalize(&scaled).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(encode(&model, &a.values).unwrap(), encode(&model, &b.values).unwrap());
    }

    #[test]
    fn gradcheck_reduced_geometry_autoencoder() {
        // f64 instance of the one-pool-stage autoencoder on a 9x9 field,
        // encoder and decoder folded into one stack. All parameters
        // (including biases) are randomized: zero biases leave dead relu
        // units sitting exactly on their kinks, where the objective is not
        // differentiable and every check would be skipped.
        let config = small_config(2);
        let field = toy_fields(1, (9, 9), 17).pop().unwrap().to_f64();
        let input = field.reshape(vec![1, 1, 9, 9]).unwrap();

        let mut specs = config.encoder_specs();
        specs.extend(config.decoder_specs(config.decoder_start().unwrap()));
        let mut rng = stream(1, "gradcheck-compose");
        let mut net = Network::<f64>::build(&specs, vec![1, 9, 9], &mut rng).unwrap();
        for p in net.params_mut() {
            for v in p.data_mut() {
                *v = rng.random_range(-0.4..0.4);
            }
        }
        let target = input.clone();
        let loss = move |out: &Tensor<f64>| {
            let n = out.len() as f64;
            let mut grad = out.clone();
            let mut value = 0.0;
            for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
                let r = *g - *t;
                value += r * r / n;
                *g = 2.0 * r / n;
            }
            (value, grad)
        };
        let report = grad_check_network(&net, &input, loss, 1e-5).unwrap();
        assert!(report.checked > 0);
        assert!(
            report.max_rel_err < 1e-4,
            "max rel err {} over {} params ({} skipped)",
            report.max_rel_err,
            report.checked,
            report.skipped
        );
    }

    #[test]
    fn training_learns_structure_and_early_stops() {
        let config = ConvAeConfig {
            max_epochs: 60,
            patience: 6,
            ..small_config(4)
        };
        let train_fields = toy_fields(48, (9, 9), 100);
        let val_fields = toy_fields(12, (9, 9), 200);
        let model = train(&config, &train_fields, &val_fields).unwrap();
        let baseline = mean_field_baseline_mse(&train_fields).unwrap();
        let mse = reconstruction_mse(&model, &train_fields).unwrap();
        assert!(mse < baseline, "AE mse {mse} vs mean-field baseline {baseline}");
        assert!(mse <= 1.0);
        assert!(!model.history.is_empty());
        assert!(model.history.len() <= config.max_epochs);
        let best = model.best_epoch.unwrap();
        assert!(best < model.history.len());

        // Determinism: same seed, same history.
        let again = train(&config, &train_fields, &val_fields).unwrap();
        assert_eq!(model.history.len(), again.history.len());
        for (a, b) in model.history.iter().zip(&again.history) {
            assert_eq!(a.train_mse, b.train_mse);
            assert_eq!(a.val_mse, b.val_mse);
        }
    }

    #[test]
    fn serialization_round_trip_preserves_codes() {
        let config = small_config(3);
        let model = train(&config, &toy_fields(16, (9, 9), 5), &toy_fields(4, (9, 9), 6)).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ConvAeModel = serde_json::from_str(&json).unwrap();
        let field = toy_fields(1, (9, 9), 7).pop().unwrap();
        assert_eq!(encode(&model, &field).unwrap(), encode(&back, &field).unwrap());
    }
}
