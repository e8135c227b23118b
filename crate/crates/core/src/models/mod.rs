//! Fully connected ReLU classifiers used as teacher and student.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{pcg, STREAM_INIT};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub class_count: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, class_count: usize) -> Result<Self> {
        let spec = MlpSpec {
            input_dim,
            hidden_dims,
            class_count,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.class_count == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config(format!("every layer width must be at least 1: {self}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_dims.len() + 2);
        widths.push(self.input_dim);
        widths.extend(&self.hidden_dims);
        widths.push(self.class_count);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Recovers the architecture from a parameter set.
    pub fn from_params(params: &ModelParams) -> Result<Self> {
        let n = params.layer_count();
        if n == 0 {
            return Err(Error::config("parameter set has no layers"));
        }
        let mut dims = Vec::with_capacity(n);
        for i in 0..n {
            let (fan_in, fan_out) = params.weight(i)?.dims2()?;
            dims.push((fan_in, fan_out));
        }
        let spec = MlpSpec {
            input_dim: dims[0].0,
            hidden_dims: dims[..n - 1].iter().map(|d| d.1).collect(),
            class_count: dims[n - 1].1,
        };
        params.validate_against(&spec)?;
        Ok(spec)
    }
}

impl std::fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.input_dim)?;
        for h in &self.hidden_dims {
            write!(f, "->{h}")?;
        }
        write!(f, "->{}", self.class_count)
    }
}

/// Named weight/bias tensors, `layer{i}.weight` of shape `[fan_in, fan_out]`
/// followed by `layer{i}.bias` of shape `[fan_out]`, in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    tensors: Vec<(String, Tensor)>,
}

pub fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

impl ModelParams {
    pub fn from_named(tensors: Vec<(String, Tensor)>) -> Self {
        ModelParams { tensors }
    }

    pub fn named(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn layer_count(&self) -> usize {
        self.tensors.len() / 2
    }

    fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::config(format!("parameter {name} missing")))
    }

    pub fn weight(&self, layer: usize) -> Result<&Tensor> {
        self.require(&weight_name(layer))
    }

    pub fn bias(&self, layer: usize) -> Result<&Tensor> {
        self.require(&bias_name(layer))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks names, order and shapes against `spec`, naming the first offending layer.
    pub fn validate_against(&self, spec: &MlpSpec) -> Result<()> {
        let dims = spec.layer_dims();
        if self.tensors.len() != 2 * dims.len() {
            return Err(Error::config(format!(
                "parameter set has {} tensors, architecture {spec} needs {}",
                self.tensors.len(),
                2 * dims.len()
            )));
        }
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let expected = [
                (weight_name(i), vec![fan_in, fan_out]),
                (bias_name(i), vec![fan_out]),
            ];
            for (slot, (name, shape)) in expected.into_iter().enumerate() {
                let (actual_name, t) = &self.tensors[2 * i + slot];
                if *actual_name != name {
                    return Err(Error::config(format!(
                        "expected parameter {name}, found {actual_name}"
                    )));
                }
                if t.shape() != shape.as_slice() {
                    return Err(Error::config(format!(
                        "layer {name} has shape {:?}, architecture {spec} needs {shape:?}",
                        t.shape()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Registers every tensor on `g` as a trainable leaf, in storage order.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self.tensors.iter().map(|(_, t)| g.param(t.clone())).collect(),
        }
    }

    /// Registers every tensor as a constant (no gradients).
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self.tensors.iter().map(|(_, t)| g.constant(t.clone())).collect(),
        }
    }
}

/// Graph handles for a [`ModelParams`], in the same order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub vars: Vec<Var>,
}

/// Glorot-uniform weights, zero biases. Bitwise deterministic in `seed`.
pub fn init(spec: &MlpSpec, seed: u64) -> ModelParams {
    let mut rng = pcg(seed, STREAM_INIT);
    let mut tensors = Vec::new();
    for (i, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        let weight = Tensor::new(vec![fan_in, fan_out], data).expect("sized from dims");
        tensors.push((weight_name(i), weight));
        tensors.push((bias_name(i), Tensor::zeros(&[fan_out])));
    }
    ModelParams { tensors }
}

/// Affine + ReLU layers with a final affine layer, recorded on `g`.
pub fn forward_graph(g: &mut Graph, bound: &BoundParams, batch: Var) -> Result<Var> {
    let layers = bound.vars.len() / 2;
    let width = g.value(batch).dims2()?.1;
    let expected = g.value(bound.vars[0]).dims2()?.0;
    if width != expected {
        return Err(Error::dim(format!(
            "batch has {width} features, model expects {expected}"
        )));
    }
    let mut h = batch;
    for i in 0..layers {
        let z = g.matmul(h, bound.vars[2 * i])?;
        let z = g.add_row(z, bound.vars[2 * i + 1])?;
        h = if i + 1 < layers { g.relu(z) } else { z };
    }
    Ok(h)
}

/// Logits of `batch` without recording gradients.
pub fn forward(params: &ModelParams, batch: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let x = g.constant(batch.clone());
    let out = forward_graph(&mut g, &bound, x)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = MlpSpec::new(4, vec![8, 6], 3).unwrap();
        let a = init(&spec, 7);
        let b = init(&spec, 7);
        assert_eq!(a, b);
        assert_ne!(a, init(&spec, 8));
        for i in 0..3 {
            assert!(a.bias(i).unwrap().data().iter().all(|&v| v == 0.0));
        }
        a.validate_against(&spec).unwrap();
    }

    #[test]
    fn init_respects_glorot_limit() {
        // 100 x 100 layer: 10^4 draws
        let spec = MlpSpec::new(100, vec![], 100).unwrap();
        let p = init(&spec, 3);
        let limit = (6.0f64 / 200.0).sqrt();
        let w = p.weight(0).unwrap().data();
        assert_eq!(w.len(), 10_000);
        assert!(w.iter().all(|v| v.abs() <= limit));
        // both tails are populated
        assert!(w.iter().any(|&v| v > 0.9 * limit));
        assert!(w.iter().any(|&v| v < -0.9 * limit));
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let spec = MlpSpec::new(3, vec![5], 4).unwrap();
        let mut p = init(&spec, 1);
        p.tensors_mut().for_each(|t| t.data_mut().fill(0.0));
        let x = Tensor::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
        assert_eq!(forward(&p, &x).unwrap(), Tensor::zeros(&[2, 4]));
    }

    #[test]
    fn single_layer_is_affine() {
        let spec = MlpSpec::new(2, vec![], 2).unwrap();
        let p = ModelParams::from_named(vec![
            (weight_name(0), Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap()),
            (bias_name(0), Tensor::vector(vec![0.5, -0.5])),
        ]);
        p.validate_against(&spec).unwrap();
        let x = Tensor::from_rows(&[[1.0, 1.0]]).unwrap();
        assert_eq!(forward(&p, &x).unwrap().data(), &[4.5, 5.5]);
    }

    #[test]
    fn tiny_net_matches_hand_forward() {
        // 2 -> 2 -> 2
        let p = ModelParams::from_named(vec![
            (weight_name(0), Tensor::from_rows(&[[1.0, -1.0], [2.0, 0.5]]).unwrap()),
            (bias_name(0), Tensor::vector(vec![0.0, 1.0])),
            (weight_name(1), Tensor::from_rows(&[[1.0, 2.0], [-1.0, 3.0]]).unwrap()),
            (bias_name(1), Tensor::vector(vec![0.25, 0.0])),
        ]);
        let x = Tensor::from_rows(&[[1.0, 2.0], [1.0, -1.0]]).unwrap();
        // row 0: h = relu([5, 1]) = [5, 1]; out = [5 - 1 + 0.25, 10 + 3] = [4.25, 13]
        // row 1: h = relu([-1, -1.5 + 1]) = [0, 0]; out = [0.25, 0]
        assert_eq!(forward(&p, &x).unwrap().data(), &[4.25, 13.0, 0.25, 0.0]);
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let p = init(&MlpSpec::new(3, vec![2], 2).unwrap(), 0);
        let x = Tensor::zeros(&[1, 4]);
        assert!(matches!(forward(&p, &x), Err(Error::Dimension(_))));
    }

    #[test]
    fn validation_names_the_layer() {
        let teacher = init(&MlpSpec::new(16, vec![256, 256], 20).unwrap(), 0);
        let student = MlpSpec::new(16, vec![32], 20).unwrap();
        let msg = teacher.validate_against(&student).unwrap_err().to_string();
        assert!(msg.contains("tensors"), "{msg}");
        let other = MlpSpec::new(16, vec![256, 128], 20).unwrap();
        let msg = teacher.validate_against(&other).unwrap_err().to_string();
        assert!(msg.contains("layer1.weight"), "{msg}");
    }

    #[test]
    fn spec_recovered_from_params() {
        let spec = MlpSpec::new(16, vec![32, 8], 20).unwrap();
        assert_eq!(MlpSpec::from_params(&init(&spec, 0)).unwrap(), spec);
        assert_eq!(spec.to_string(), "16->32->8->20");
    }
}
