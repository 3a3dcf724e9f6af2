use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};

/// Hidden widths of the intra-modality virtual sensing network.
pub const IMVS_HIDDEN: [usize; 7] = [32, 64, 128, 256, 512, 256, 64];
/// Hidden widths of the cross-modality inference network.
pub const CMI_HIDDEN: [usize; 8] = [20, 50, 100, 300, 300, 100, 50, 20];

/// Fully connected network: ReLU on hidden layers, identity on the output.
///
/// Layer `l` maps `x -> x W_l + b_l` with `W_l` of shape `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    /// Flat views in the order used by [`MlpModel::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }
}

pub fn imvs_layer_sizes(n_physical: usize, n_virtual: usize) -> Result<Vec<usize>> {
    if n_physical == 0 || n_virtual == 0 {
        return Err(contract("ImVS model needs at least one physical and one virtual sensor"));
    }
    let mut sizes = vec![n_physical];
    sizes.extend(IMVS_HIDDEN);
    sizes.push(n_virtual);
    Ok(sizes)
}

pub fn cmi_layer_sizes(n_pollutants: usize) -> Result<Vec<usize>> {
    if n_pollutants == 0 {
        return Err(contract("CmI model needs at least one input modality channel"));
    }
    let mut sizes = vec![n_pollutants];
    sizes.extend(CMI_HIDDEN);
    sizes.push(1);
    Ok(sizes)
}

/// `n_physical x 32 x 64 x 128 x 256 x 512 x 256 x 64 x n_virtual`, He-uniform initialized.
pub fn build_imvs_model(n_physical: usize, n_virtual: usize, seed: u64) -> Result<MlpModel> {
    MlpModel::new(&imvs_layer_sizes(n_physical, n_virtual)?, seed)
}

/// `n_pollutants x 20 x 50 x 100 x 300 x 300 x 100 x 50 x 20 x 1`, He-uniform initialized.
pub fn build_cmi_model(n_pollutants: usize, seed: u64) -> Result<MlpModel> {
    MlpModel::new(&cmi_layer_sizes(n_pollutants)?, seed)
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

impl MlpModel {
    /// He-uniform weights (`U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`), zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut model.weights {
            let limit = (6.0 / w.nrows() as f64).sqrt();
            w.mapv_inplace(|_| rng.gen_range(-limit..limit));
        }
        Ok(model)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(contract(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let weights = layer_sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), weights, biases })
    }

    /// Rebuilds a model from row-major weight buffers.
    pub fn from_parts(layer_sizes: &[usize], weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes)?;
        if weights.len() != model.weights.len() || biases.len() != model.biases.len() {
            return Err(contract("parameter count does not match layer sizes"));
        }
        for (dst, src) in model.weights.iter_mut().zip(weights) {
            let shape = dst.raw_dim();
            *dst = Array2::from_shape_vec(shape, src).map_err(|e| contract(e.to_string()))?;
        }
        for (dst, src) in model.biases.iter_mut().zip(biases) {
            if dst.len() != src.len() {
                return Err(contract("bias length does not match layer size"));
            }
            *dst = Array1::from(src);
        }
        if model.weights.iter().flatten().chain(model.biases.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(contract("non-finite parameter"));
        }
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Mutable flat views: `W_0, b_0, W_1, b_1, ...`.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn param_lengths(&self) -> Vec<usize> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w.len(), b.len()]).collect()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.n_inputs() {
            return Err(contract(format!("input has {} columns, model expects {}", x.ncols(), self.n_inputs())));
        }
        Ok(())
    }

    /// Activations of every layer, input first, output last.
    fn forward_trace(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w);
            z += b;
            if l < last {
                relu_inplace(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.forward_trace(x).pop().unwrap())
    }

    /// Reverse-mode gradients of `sum(upstream * forward(x))` with respect to
    /// every parameter.
    pub fn backward(&self, x: ArrayView2<'_, f64>, upstream: ArrayView2<'_, f64>) -> Result<Gradients> {
        Ok(self.forward_backward(x, |out| {
            if out.dim() != upstream.dim() {
                return Err(contract(format!(
                    "upstream gradient is {:?}, output is {:?}",
                    upstream.dim(),
                    out.dim()
                )));
            }
            Ok(upstream.to_owned())
        })?
        .0)
    }

    /// One forward pass, then backpropagates whatever gradient `seed` derives
    /// from the output. Returns the gradients and the output.
    pub(crate) fn forward_backward<F>(&self, x: ArrayView2<'_, f64>, seed: F) -> Result<(Gradients, Array2<f64>)>
    where
        F: FnOnce(&Array2<f64>) -> Result<Array2<f64>>,
    {
        self.check_input(&x)?;
        let acts = self.forward_trace(x);
        let n_layers = self.weights.len();
        let mut delta = seed(&acts[n_layers])?;
        let mut gw = Vec::with_capacity(n_layers);
        let mut gb = Vec::with_capacity(n_layers);
        for l in (0..n_layers).rev() {
            gw.push(acts[l].t().dot(&delta).as_standard_layout().into_owned());
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l].t());
                // ReLU derivative: activation > 0
                ndarray::Zip::from(&mut prev).and(&acts[l]).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        let out = acts.into_iter().last().unwrap();
        Ok((Gradients { weights: gw, biases: gb }, out))
    }
}
