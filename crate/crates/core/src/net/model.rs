use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::tensor::kernels::{self, ConvSpec, PoolSpec};
use crate::tensor::tape::{ParamId, Tape, Var};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
struct ConvLayer {
    weight: ParamId,
    bias: ParamId,
    spec: ConvSpec,
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    convs: Vec<ConvLayer>,
    pool: PoolSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

/// Where each layer's tensors sit in the flat parameter list.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    stages: Vec<Stage>,
    fc: Vec<Affine>,
    ident: Affine,
    verif: Affine,
}

/// Shared-weight siamese network: one 3D ConvNet backbone with FC6/FC7, an
/// identification head (FC1, n-way softmax) and a verification head
/// (E layer, FC2, 2-way softmax).
///
/// Both branches of a pair read the same parameter list; there is no
/// per-branch copy.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseModel<T: Element = f64> {
    config: NetworkConfig,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    layout: Layout,
}

/// Output of a siamese forward pass.
#[derive(Debug, Clone)]
pub struct SiameseOutput<T: Element = f64> {
    pub feature_1: Tensor<T>,
    pub feature_2: Tensor<T>,
    /// Class distribution for the first clip.
    pub ident_1: Tensor<T>,
    /// Class distribution for the second clip.
    pub ident_2: Tensor<T>,
    /// `(different, same)` distribution.
    pub verif: Tensor<T>,
}

/// Parameter handles on a [`Tape`], in the model's parameter order.
#[derive(Debug, Clone)]
pub struct TapeParams(Vec<Var>);

impl TapeParams {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        TapeParams(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

fn gaussian_init(shape: &[usize], fan_in: usize, gain: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, (gain / fan_in as f64).sqrt(), rng)
}

impl SiameseModel<f64> {
    /// Builds a model with fan-in-scaled Gaussian weights and zero biases,
    /// seeded from `config.seed`.
    pub fn build(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut add = |name: String, t: Tensor| {
            names.push(name);
            params.push(t);
            params.len() - 1
        };

        let mut stages = Vec::new();
        let mut in_ch = config.input_shape[0];
        for (b, block) in config.blocks.iter().enumerate() {
            let mut convs = Vec::new();
            for (j, &out_ch) in block.conv_channels.iter().enumerate() {
                let spec = config.conv.spec(out_ch);
                let [kt, kh, kw] = spec.kernel;
                let fan_in = in_ch * kt * kh * kw;
                let tag = format!("conv{}{}", b + 1, (b'a' + j as u8) as char);
                let weight = add(
                    format!("{tag}.weight"),
                    gaussian_init(&[out_ch, in_ch, kt, kh, kw], fan_in, 2.0, &mut rng),
                );
                let bias = add(format!("{tag}.bias"), Tensor::zeros(&[out_ch]));
                convs.push(ConvLayer { weight, bias, spec });
                in_ch = out_ch;
            }
            stages.push(Stage {
                convs,
                pool: block.pool,
            });
        }

        let mut fc = Vec::new();
        let mut width = config.flat_width()?;
        for (i, &out) in config.fc_dims.iter().enumerate() {
            let tag = format!("fc{}", 6 + i);
            let weight = add(
                format!("{tag}.weight"),
                gaussian_init(&[out, width], width, 2.0, &mut rng),
            );
            let bias = add(format!("{tag}.bias"), Tensor::zeros(&[out]));
            fc.push(Affine { weight, bias });
            width = out;
        }

        let n = config.n_classes;
        let ident = Affine {
            weight: add("fc1.weight".into(), gaussian_init(&[n, width], width, 1.0, &mut rng)),
            bias: add("fc1.bias".into(), Tensor::zeros(&[n])),
        };
        let verif = Affine {
            weight: add("fc2.weight".into(), gaussian_init(&[2, width], width, 1.0, &mut rng)),
            bias: add("fc2.bias".into(), Tensor::zeros(&[2])),
        };

        Ok(SiameseModel {
            config,
            names,
            params,
            layout: Layout {
                stages,
                fc,
                ident,
                verif,
            },
        })
    }

    /// Rebuilds a model from stored parameters; names and shapes must match
    /// what `config` implies.
    pub fn from_parameters(config: NetworkConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = Self::build(config)?;
        if named.len() != model.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                named.len()
            )));
        }
        for (i, (name, t)) in named.into_iter().enumerate() {
            if name != model.names[i] || t.shape() != model.params[i].shape() {
                return Err(Error::Config(format!(
                    "parameter {i}: expected {} {:?}, got {name} {:?}",
                    model.names[i],
                    model.params[i].shape(),
                    t.shape()
                )));
            }
            model.params[i] = t;
        }
        Ok(model)
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Registers every parameter on `tape` with its index as id.
    pub fn register(&self, tape: &mut Tape) -> Result<TapeParams> {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, p.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(TapeParams(vars))
    }

    /// Records the backbone and FC6/FC7 for `clip` (a tape value of the
    /// configured input shape) and returns the feature vector `f`.
    pub fn features_on_tape(&self, tape: &mut Tape, p: &TapeParams, clip: Var) -> Result<Var> {
        self.check_input(tape.value(clip).shape())?;
        let mut x = clip;
        for stage in &self.layout.stages {
            for conv in &stage.convs {
                x = tape.conv3d(x, p.0[conv.weight], p.0[conv.bias], conv.spec)?;
                x = tape.relu(x)?;
            }
            x = tape.maxpool3d(x, stage.pool)?;
        }
        let flat = tape.value(x).len();
        x = tape.reshape(x, &[flat])?;
        for layer in &self.layout.fc {
            x = tape.linear(x, p.0[layer.weight], p.0[layer.bias])?;
            x = tape.relu(x)?;
        }
        Ok(x)
    }

    /// `softmax(FC1 f)` on the tape.
    pub fn identify_on_tape(&self, tape: &mut Tape, p: &TapeParams, feature: Var) -> Result<Var> {
        let h = self.layout.ident;
        let logits = tape.linear(feature, p.0[h.weight], p.0[h.bias])?;
        tape.softmax(logits)
    }

    /// `softmax(FC2 |f1 - f2|)` on the tape.
    pub fn verify_on_tape(&self, tape: &mut Tape, p: &TapeParams, f1: Var, f2: Var) -> Result<Var> {
        let h = self.layout.verif;
        let e = tape.abs_diff(f1, f2)?;
        let logits = tape.linear(e, p.0[h.weight], p.0[h.bias])?;
        tape.softmax(logits)
    }
}

impl<T: Element> SiameseModel<T> {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn named_parameters(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Ids of the FC2 weight and bias.
    pub fn verification_head_ids(&self) -> [ParamId; 2] {
        [self.layout.verif.weight, self.layout.verif.bias]
    }

    /// Ids of the FC1 weight and bias.
    pub fn identification_head_ids(&self) -> [ParamId; 2] {
        [self.layout.ident.weight, self.layout.ident.bias]
    }

    /// Ids of every backbone and FC6/FC7 parameter.
    pub fn backbone_ids(&self) -> Vec<ParamId> {
        let heads = [self.identification_head_ids(), self.verification_head_ids()].concat();
        (0..self.params.len()).filter(|i| !heads.contains(i)).collect()
    }

    /// Same network in another precision.
    pub fn cast<U: Element>(&self) -> SiameseModel<U> {
        SiameseModel {
            config: self.config.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            layout: self.layout.clone(),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape != self.config.input_shape {
            return Err(Error::shape(
                "siamese input",
                format!("clip {shape:?}, model expects {:?}", self.config.input_shape),
            ));
        }
        Ok(())
    }

    /// Backbone forward pass that also reports the activation shape after
    /// every block and the flattened FC6 input width.
    pub fn forward_trace(&self, clip: &Tensor<T>) -> Result<ForwardTrace<T>> {
        self.check_input(clip.shape())?;
        let p = &self.params;
        let mut x = clip.clone();
        let mut block_shapes = Vec::new();
        for stage in &self.layout.stages {
            for conv in &stage.convs {
                x = kernels::conv3d_forward(&x, &p[conv.weight], &p[conv.bias], &conv.spec)?;
                x = kernels::relu(&x);
            }
            x = kernels::maxpool3d_forward(&x, &stage.pool)?.0;
            block_shapes.push(x.shape().to_vec());
        }
        let mut x = x.flatten();
        let fc_input_width = x.len();
        for layer in &self.layout.fc {
            x = kernels::relu(&kernels::fc_forward(&x, &p[layer.weight], &p[layer.bias])?);
        }
        let feature = x.ensure_finite("forward_features")?;
        Ok(ForwardTrace {
            block_shapes,
            fc_input_width,
            feature,
        })
    }

    /// Post-FC7 feature `f` for one clip.
    pub fn forward_features(&self, clip: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_trace(clip)?.feature)
    }

    /// Class distribution `softmax(FC1 f)`.
    pub fn identify(&self, feature: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.layout.ident;
        let logits = kernels::fc_forward(feature, &self.params[h.weight], &self.params[h.bias])?;
        Ok(kernels::softmax(&logits))
    }

    /// Similarity distribution `softmax(FC2 |f1 - f2|)` over (different, same).
    pub fn verify(&self, f1: &Tensor<T>, f2: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.layout.verif;
        let e = kernels::abs_diff(f1, f2)?;
        let logits = kernels::fc_forward(&e, &self.params[h.weight], &self.params[h.bias])?;
        Ok(kernels::softmax(&logits))
    }

    pub fn siamese_forward(&self, clip_1: &Tensor<T>, clip_2: &Tensor<T>) -> Result<SiameseOutput<T>> {
        let feature_1 = self.forward_features(clip_1)?;
        let feature_2 = self.forward_features(clip_2)?;
        Ok(SiameseOutput {
            ident_1: self.identify(&feature_1)?,
            ident_2: self.identify(&feature_2)?,
            verif: self.verify(&feature_1, &feature_2)?,
            feature_1,
            feature_2,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ForwardTrace<T: Element = f64> {
    /// `[C, T, H, W]` after each block's pool.
    pub block_shapes: Vec<Vec<usize>>,
    pub fc_input_width: usize,
    pub feature: Tensor<T>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(seed: u64, shape: [usize; 4]) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(&shape, 0.0, 1.0, &mut rng)
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = SiameseModel::build(NetworkConfig::tiny(5).with_seed(3)).unwrap();
        let b = SiameseModel::build(NetworkConfig::tiny(5).with_seed(3)).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        let c = SiameseModel::build(NetworkConfig::tiny(5).with_seed(4)).unwrap();
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn heads_have_expected_widths() {
        let m = SiameseModel::build(NetworkConfig::tiny(5)).unwrap();
        let [w1, b1] = m.identification_head_ids();
        assert_eq!(m.parameters()[w1].shape(), &[5, 32]);
        assert_eq!(m.parameters()[b1].shape(), &[5]);
        let [w2, b2] = m.verification_head_ids();
        assert_eq!(m.parameters()[w2].shape(), &[2, 32]);
        assert_eq!(m.parameters()[b2].shape(), &[2]);
        assert_eq!(m.parameter_names()[0], "conv1a.weight");
        assert!(m.parameter_names().contains(&"conv3b.bias".to_string()));
    }

    #[test]
    fn identical_clips_give_identical_outputs() {
        let m = SiameseModel::build(NetworkConfig::tiny(4).with_seed(1)).unwrap();
        let a = clip(1, m.config().input_shape);
        let out = m.siamese_forward(&a, &a).unwrap();
        assert_eq!(out.feature_1, out.feature_2);
        assert_eq!(out.ident_1, out.ident_2);
        // f_E = 0 and FC2 bias is zero at init, so the verdict is uniform.
        assert_eq!(out.verif.data(), &[0.5, 0.5]);
        assert!(out.feature_1.all_finite());
    }

    #[test]
    fn swapping_inputs_swaps_identification() {
        let m = SiameseModel::build(NetworkConfig::tiny(4).with_seed(2)).unwrap();
        let a = clip(1, m.config().input_shape);
        let b = clip(2, m.config().input_shape);
        let ab = m.siamese_forward(&a, &b).unwrap();
        let ba = m.siamese_forward(&b, &a).unwrap();
        assert!(ab.ident_1.max_abs_diff(&ba.ident_2) <= 1e-12);
        assert!(ab.ident_2.max_abs_diff(&ba.ident_1) <= 1e-12);
        assert!(ab.verif.max_abs_diff(&ba.verif) <= 1e-12);
        for p in [&ab.ident_1, &ab.ident_2, &ab.verif] {
            assert!((p.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_clip_shape_is_rejected() {
        let m = SiameseModel::build(NetworkConfig::tiny(4)).unwrap();
        let bad = Tensor::zeros(&[1, 8, 16, 15]);
        assert!(matches!(m.forward_features(&bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn tape_and_direct_forward_agree() {
        let m = SiameseModel::build(NetworkConfig::tiny(4).with_seed(5)).unwrap();
        let a = clip(7, m.config().input_shape);
        let b = clip(8, m.config().input_shape);
        let mut tape = Tape::new();
        let p = m.register(&mut tape).unwrap();
        let va = tape.constant(a.clone()).unwrap();
        let vb = tape.constant(b.clone()).unwrap();
        let fa = m.features_on_tape(&mut tape, &p, va).unwrap();
        let fb = m.features_on_tape(&mut tape, &p, vb).unwrap();
        let pa = m.identify_on_tape(&mut tape, &p, fa).unwrap();
        let pv = m.verify_on_tape(&mut tape, &p, fa, fb).unwrap();
        let out = m.siamese_forward(&a, &b).unwrap();
        assert_eq!(tape.value(fa), &out.feature_1);
        assert_eq!(tape.value(pa), &out.ident_1);
        assert_eq!(tape.value(pv), &out.verif);
    }

    #[test]
    fn single_precision_tracks_double() {
        let m = SiameseModel::build(NetworkConfig::tiny(4).with_seed(5)).unwrap();
        let a = clip(7, m.config().input_shape);
        let f64_feat = m.forward_features(&a).unwrap();
        let f32_feat = m.cast::<f32>().forward_features(&a.cast()).unwrap();
        assert!(f64_feat.max_abs_diff(&f32_feat.cast()) < 1e-4);
    }

    #[test]
    fn backbone_ids_exclude_heads() {
        let m = SiameseModel::build(NetworkConfig::tiny(4)).unwrap();
        let ids = m.backbone_ids();
        assert_eq!(ids.len() + 4, m.parameters().len());
        for h in m.verification_head_ids() {
            assert!(!ids.contains(&h));
        }
    }
}
