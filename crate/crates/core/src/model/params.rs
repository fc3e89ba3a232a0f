use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, ENCODER_STAGES, NUM_STAGES};
use crate::error::{Error, Result};
use crate::ops::BnState;
use crate::tensor::{Dims, Scalar, Tensor4};

/// A learnable array: conv kernels are rank 4, biases and BN affine
/// parameters rank 1.
#[derive(Debug, Clone, PartialEq)]
pub enum Param<T> {
    Tensor(Tensor4<T>),
    Vector(Vec<T>),
}

impl<T: Scalar> Param<T> {
    pub fn as_slice(&self) -> &[T] {
        match self {
            Param::Tensor(t) => t.data(),
            Param::Vector(v) => v,
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        match self {
            Param::Tensor(t) => t.data_mut(),
            Param::Vector(v) => v,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Param::Tensor(t) => {
                let d = t.dims();
                vec![d.n, d.c, d.h, d.w]
            }
            Param::Vector(v) => vec![v.len()],
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Param::Tensor(t) => Param::Tensor(Tensor4::zeros(t.dims())),
            Param::Vector(v) => Param::Vector(vec![T::zero(); v.len()]),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Param<U> {
        match self {
            Param::Tensor(t) => Param::Tensor(t.cast()),
            Param::Vector(v) => Param::Vector(v.iter().map(|&x| U::from_f64_lossy(x.as_f64())).collect()),
        }
    }
}

/// Named parameter arrays keyed by layer path, e.g. `enc.3.conv.1.weight`.
pub type ParamSet<T> = BTreeMap<String, Param<T>>;

/// All learnable tensors plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub values: ParamSet<T>,
    /// Keyed by the BN layer path, e.g. `dec.2.skip.bn`.
    pub bn: BTreeMap<String, BnState<T>>,
}

/// Gradients with the same keys and shapes as [`ModelParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub values: ParamSet<T>,
}

pub(crate) fn enc_block(stage: usize, j: usize) -> String {
    format!("enc.{stage}.conv.{j}")
}

pub(crate) fn dec_skip(stage: usize) -> String {
    format!("dec.{stage}.skip")
}

pub(crate) fn dec_conv(stage: usize) -> String {
    format!("dec.{stage}.conv")
}

impl<T: Scalar> ModelParams<T> {
    pub fn tensor(&self, path: &str) -> Result<&Tensor4<T>> {
        match self.values.get(path) {
            Some(Param::Tensor(t)) => Ok(t),
            _ => Err(Error::Usage(format!("missing conv weight {path}"))),
        }
    }

    pub fn vector(&self, path: &str) -> Result<&[T]> {
        match self.values.get(path) {
            Some(Param::Vector(v)) => Ok(v),
            _ => Err(Error::Usage(format!("missing parameter vector {path}"))),
        }
    }

    pub fn bn_state(&self, path: &str) -> Result<&BnState<T>> {
        self.bn
            .get(path)
            .ok_or_else(|| Error::Usage(format!("missing batch-norm state {path}")))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.values().map(|p| p.as_slice().len()).sum()
    }

    pub fn zero_grads(&self) -> ParamGrads<T> {
        ParamGrads {
            values: self
                .values
                .iter()
                .map(|(k, v)| (k.clone(), v.zeros_like()))
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            values: self.values.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            bn: self
                .bn
                .iter()
                .map(|(k, s)| {
                    let c = |v: &[T]| v.iter().map(|&x| U::from_f64_lossy(x.as_f64())).collect();
                    (
                        k.clone(),
                        BnState {
                            running_mean: c(&s.running_mean),
                            running_var: c(&s.running_var),
                            momentum: U::from_f64_lossy(s.momentum.as_f64()),
                            eps: U::from_f64_lossy(s.eps.as_f64()),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Checks that every parameter the graph needs exists with the shape the
    /// config implies.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let expected = layout(config);
        for (path, shape) in &expected {
            match self.values.get(path) {
                None => {
                    return Err(Error::dim(format!("parameter {path} missing")));
                }
                Some(p) if &p.shape() != shape => {
                    return Err(Error::dim(format!(
                        "shape mismatch for {path}: checkpoint has {:?}, config expects {:?}",
                        p.shape(),
                        shape
                    )));
                }
                _ => {}
            }
        }
        if self.values.len() != expected.len() {
            return Err(Error::dim(format!(
                "parameter count mismatch: have {}, config expects {}",
                self.values.len(),
                expected.len()
            )));
        }
        for (path, ch) in bn_layers(config) {
            let st = self.bn_state(&path)?;
            if st.channels() != ch || st.running_var.len() != ch {
                return Err(Error::dim(format!(
                    "shape mismatch for {path} running stats: {} vs {ch}",
                    st.channels()
                )));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> ParamGrads<T> {
    pub fn get(&self, path: &str) -> Option<&[T]> {
        self.values.get(path).map(|p| p.as_slice())
    }

    pub(crate) fn accumulate(&mut self, path: &str, grad: &[T]) {
        let dst = self
            .values
            .get_mut(path)
            .unwrap_or_else(|| panic!("gradient slot {path} missing"))
            .as_mut_slice();
        for (a, &b) in dst.iter_mut().zip(grad) {
            *a += b;
        }
    }

    /// Dot product with a direction of the same layout.
    pub fn dot(&self, other: &ParamSet<T>) -> f64 {
        let mut s = 0.0;
        for (k, g) in &self.values {
            if let Some(d) = other.get(k) {
                for (&a, &b) in g.as_slice().iter().zip(d.as_slice()) {
                    s += a.as_f64() * b.as_f64();
                }
            }
        }
        s
    }
}

enum Kind {
    Conv { cout: usize, cin: usize },
    Bn { c: usize },
}

/// Every layer in construction order.
fn layers(cfg: &ModelConfig) -> Vec<(String, Kind)> {
    let mut out = Vec::new();
    let mut cin = 3;
    for stage in 1..=ENCODER_STAGES {
        let cout = cfg.encoder_channels[stage - 1];
        for j in 0..cfg.convs_per_stage {
            let p = enc_block(stage, j);
            out.push((p.clone(), Kind::Conv { cout, cin }));
            out.push((format!("{p}.bn"), Kind::Bn { c: cout }));
            cin = cout;
        }
    }
    let c = cfg.num_classes;
    out.push((dec_conv(1), Kind::Conv { cout: c, cin }));
    for stage in 2..=NUM_STAGES {
        let skip_c = cfg.encoder_channels[NUM_STAGES - stage];
        let p = dec_skip(stage);
        out.push((format!("{p}.conv"), Kind::Conv { cout: c, cin: skip_c }));
        out.push((format!("{p}.bn"), Kind::Bn { c }));
        out.push((dec_conv(stage), Kind::Conv { cout: c, cin: 2 * c }));
    }
    out
}

fn layout(cfg: &ModelConfig) -> BTreeMap<String, Vec<usize>> {
    let mut m = BTreeMap::new();
    for (p, kind) in layers(cfg) {
        match kind {
            Kind::Conv { cout, cin } => {
                m.insert(format!("{p}.weight"), vec![cout, cin, 3, 3]);
                m.insert(format!("{p}.bias"), vec![cout]);
            }
            Kind::Bn { c } => {
                m.insert(format!("{p}.gamma"), vec![c]);
                m.insert(format!("{p}.beta"), vec![c]);
            }
        }
    }
    m
}

fn bn_layers(cfg: &ModelConfig) -> Vec<(String, usize)> {
    layers(cfg)
        .into_iter()
        .filter_map(|(p, k)| match k {
            Kind::Bn { c } => Some((p, c)),
            Kind::Conv { .. } => None,
        })
        .collect()
}

/// He-normal conv weights (`std = sqrt(2 / fan_in)`), zero biases, unit
/// BN scale, zero BN shift, running stats `(0, 1)`.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = ParamSet::new();
    let mut bn = BTreeMap::new();
    let momentum = T::from_f64_lossy(config.bn_momentum);
    let eps = T::from_f64_lossy(config.bn_eps);
    for (p, kind) in layers(config) {
        match kind {
            Kind::Conv { cout, cin } => {
                let std = (2.0 / (cin * 9) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let dims = Dims::new(cout, cin, 3, 3);
                let data = (0..dims.len())
                    .map(|_| T::from_f64_lossy(normal.sample(&mut rng)))
                    .collect();
                values.insert(format!("{p}.weight"), Param::Tensor(Tensor4::from_vec(dims, data)?));
                values.insert(format!("{p}.bias"), Param::Vector(vec![T::zero(); cout]));
            }
            Kind::Bn { c } => {
                values.insert(format!("{p}.gamma"), Param::Vector(vec![T::one(); c]));
                values.insert(format!("{p}.beta"), Param::Vector(vec![T::zero(); c]));
                bn.insert(p, BnState::new(c, momentum, eps));
            }
        }
    }
    Ok(ModelParams { values, bn })
}
