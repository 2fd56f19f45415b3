//! Forward pass of the residual ConvLSTM temporal module.
//!
//! One ConvLSTM cell may sit on each of the three encoder scales
//! `E3, E4, E5`. A cell reads the feature map and its memory, produces an
//! output `O` and new memory, and the feature map is updated in place as
//! `E <- E + O`. Scales switched off in the placement mask pass through
//! untouched.
//!
//! Cell equations, with same-padded convolutions `*` and gates in the order
//! `i, f, g, o`:
//!
//! ```text
//! [i f g o] = W_x * x + W_h * h + b
//! c' = sigmoid(f) . c + sigmoid(i) . tanh(g)
//! h' = sigmoid(o) . tanh(c')
//! ```
//!
//! No peepholes and no normalization. When the hidden width `M` differs from
//! the feature width `D`, a 1x1 projection maps `h'` back to `D` channels;
//! it starts at zero so a freshly inserted module is the identity.

mod blob;

pub use blob::{read_tensors, write_tensors, NamedTensor};

use rand::Rng;
use thiserror::Error;

use crate::frame::RealFrame;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemporalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no module for enabled scale E{0}")]
    MissingModule(u8),
    #[error("tensor file: {0}")]
    Manifest(String),
}

impl TemporalError {
    pub fn code(&self) -> &'static str {
        match self {
            TemporalError::ShapeMismatch(_) => "SHAPE_MISMATCH",
            TemporalError::InvalidParams(_) => "INVALID_PARAMS",
            TemporalError::MissingModule(_) => "MISSING_MODULE",
            TemporalError::Manifest(_) => "MANIFEST_ERROR",
        }
    }
}

/// Encoder scales carrying temporal modules, in order.
pub const SCALES: [u8; 3] = [3, 4, 5];

/// A `(D, h, w)` feature map tagged with its encoder scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub scale: u8,
    pub values: RealFrame,
}

impl FeatureMap {
    pub fn new(scale: u8, values: RealFrame) -> Self {
        Self { scale, values }
    }

    pub fn zeros(scale: u8, dim: usize, height: usize, width: usize) -> Self {
        Self::new(scale, RealFrame::zeros(dim, height, width))
    }

    pub fn dim(&self) -> usize {
        self.values.channels()
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.values.height(), self.values.width())
    }
}

/// 1x1 convolution from `M` hidden channels back to `D` feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `(D, M)` row-major.
    pub weight: Vec<f32>,
    /// `(D)`.
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLSTMParams {
    pub kernel: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `(4M, D, k, k)`, gate blocks ordered i, f, g, o.
    pub w_x: Vec<f32>,
    /// `(4M, M, k, k)`.
    pub w_h: Vec<f32>,
    /// `(4M)`.
    pub bias: Vec<f32>,
    /// Present exactly when `M != D`.
    pub projection: Option<Projection>,
}

impl ConvLSTMParams {
    /// All-zero weights and biases.
    pub fn zeros(kernel: usize, input_dim: usize, hidden_dim: usize) -> Self {
        let (k2, m4) = (kernel * kernel, 4 * hidden_dim);
        Self {
            kernel,
            input_dim,
            hidden_dim,
            w_x: vec![0.0; m4 * input_dim * k2],
            w_h: vec![0.0; m4 * hidden_dim * k2],
            bias: vec![0.0; m4],
            projection: (input_dim != hidden_dim).then(|| Projection {
                weight: vec![0.0; input_dim * hidden_dim],
                bias: vec![0.0; input_dim],
            }),
        }
    }

    /// Gate weights and biases uniform in `+-1/sqrt(fan_in)`; projection (if
    /// any) left at zero.
    pub fn random(kernel: usize, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(kernel, input_dim, hidden_dim);
        let bound = 1.0 / (((input_dim + hidden_dim) * kernel * kernel) as f32).sqrt();
        for v in p.w_x.iter_mut().chain(p.w_h.iter_mut()).chain(p.bias.iter_mut()) {
            *v = rng.gen_range(-bound..=bound);
        }
        p
    }

    pub fn validate(&self) -> Result<(), TemporalError> {
        let bad = |m: String| Err(TemporalError::InvalidParams(m));
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        let (k2, m4) = (self.kernel * self.kernel, 4 * self.hidden_dim);
        if self.w_x.len() != m4 * self.input_dim * k2
            || self.w_h.len() != m4 * self.hidden_dim * k2
            || self.bias.len() != m4
        {
            return bad("gate tensor sizes do not match kernel/dims".into());
        }
        match (&self.projection, self.input_dim == self.hidden_dim) {
            (None, true) => Ok(()),
            (Some(p), false) => {
                if p.weight.len() != self.input_dim * self.hidden_dim || p.bias.len() != self.input_dim {
                    return bad("projection sizes do not match dims".into());
                }
                Ok(())
            }
            (Some(_), true) => bad("projection given although M == D".into()),
            (None, false) => bad("projection required when M != D".into()),
        }
    }

    pub fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let (k, d, m) = (self.kernel, self.input_dim, self.hidden_dim);
        let mut out = vec![
            NamedTensor::new(format!("{prefix}w_x"), vec![4 * m, d, k, k], self.w_x.clone()),
            NamedTensor::new(format!("{prefix}w_h"), vec![4 * m, m, k, k], self.w_h.clone()),
            NamedTensor::new(format!("{prefix}bias"), vec![4 * m], self.bias.clone()),
        ];
        if let Some(p) = &self.projection {
            out.push(NamedTensor::new(format!("{prefix}proj_w"), vec![d, m], p.weight.clone()));
            out.push(NamedTensor::new(format!("{prefix}proj_b"), vec![d], p.bias.clone()));
        }
        out
    }

    /// Rebuilds parameters from tensors named with `prefix`; kernel and dims
    /// are read from the `w_x` and `w_h` shapes.
    pub fn from_tensors(tensors: &mut Vec<NamedTensor>, prefix: &str) -> Result<Self, TemporalError> {
        let wx_name = format!("{prefix}w_x");
        let shape = tensors
            .iter()
            .find(|t| t.name == wx_name)
            .map(|t| t.shape.clone())
            .ok_or_else(|| TemporalError::Manifest(format!("missing tensor {wx_name}")))?;
        let [m4, d, k, k2] = shape[..] else {
            return Err(TemporalError::Manifest(format!("{wx_name} must be 4-D")));
        };
        if k != k2 || m4 % 4 != 0 {
            return Err(TemporalError::Manifest(format!("{wx_name} has bad shape {shape:?}")));
        }
        let m = m4 / 4;
        let w_x = blob::take(tensors, &wx_name, &[m4, d, k, k])?;
        let w_h = blob::take(tensors, &format!("{prefix}w_h"), &[m4, m, k, k])?;
        let bias = blob::take(tensors, &format!("{prefix}bias"), &[m4])?;
        let projection = if d != m {
            Some(Projection {
                weight: blob::take(tensors, &format!("{prefix}proj_w"), &[d, m])?,
                bias: blob::take(tensors, &format!("{prefix}proj_b"), &[d])?,
            })
        } else {
            None
        };
        let p = Self {
            kernel: k,
            input_dim: d,
            hidden_dim: m,
            w_x,
            w_h,
            bias,
            projection,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Hidden and cell tensors, both `(M, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLSTMState {
    pub hidden: RealFrame,
    pub cell: RealFrame,
}

impl ConvLSTMState {
    pub fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let (m, h, w) = self.hidden.shape();
        vec![
            NamedTensor::new(format!("{prefix}h"), vec![m, h, w], self.hidden.data().to_vec()),
            NamedTensor::new(format!("{prefix}c"), vec![m, h, w], self.cell.data().to_vec()),
        ]
    }

    pub fn from_tensors(
        tensors: &mut Vec<NamedTensor>,
        prefix: &str,
        shape: (usize, usize, usize),
    ) -> Result<Self, TemporalError> {
        let (m, h, w) = shape;
        let hidden = blob::take(tensors, &format!("{prefix}h"), &[m, h, w])?;
        let cell = blob::take(tensors, &format!("{prefix}c"), &[m, h, w])?;
        Ok(Self {
            hidden: RealFrame::from_vec(m, h, w, hidden).expect("shape checked"),
            cell: RealFrame::from_vec(m, h, w, cell).expect("shape checked"),
        })
    }
}

/// Zero memory for a `height x width` map.
pub fn init_state(height: usize, width: usize, params: &ConvLSTMParams) -> ConvLSTMState {
    ConvLSTMState {
        hidden: RealFrame::zeros(params.hidden_dim, height, width),
        cell: RealFrame::zeros(params.hidden_dim, height, width),
    }
}

/// Accumulates a same-padded convolution of `input` with `(c_out, c_in, k, k)`
/// weights into `out`, laid out `(c_out, h, w)`.
fn conv_same_acc(input: &RealFrame, weights: &[f32], kernel: usize, out: &mut [f32]) {
    let (c_in, h, w) = input.shape();
    let plane = h * w;
    let c_out = out.len() / plane;
    let r = (kernel / 2) as isize;
    for co in 0..c_out {
        let dst = &mut out[co * plane..(co + 1) * plane];
        for ci in 0..c_in {
            let src = input.plane(ci);
            let wk = &weights[(co * c_in + ci) * kernel * kernel..][..kernel * kernel];
            for ky in 0..kernel {
                let dy = ky as isize - r;
                let (y_lo, y_hi) = ((-dy).max(0) as usize, (h as isize - dy.max(0)).max(0) as usize);
                for kx in 0..kernel {
                    let wv = wk[ky * kernel + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - r;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx.max(0)).max(0) as usize;
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let s = &src[sy * w + (x_lo as isize + dx) as usize..][..x_hi - x_lo];
                        let d = &mut dst[y * w + x_lo..y * w + x_hi];
                        for (dv, &sv) in d.iter_mut().zip(s) {
                            *dv += wv * sv;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// One ConvLSTM step. Returns the output feature map (projected to `D`
/// channels when `M != D`) and the new state.
pub fn convlstm_step(
    x: &FeatureMap,
    state: &ConvLSTMState,
    params: &ConvLSTMParams,
) -> Result<(FeatureMap, ConvLSTMState), TemporalError> {
    params.validate()?;
    let (d, h, w) = x.values.shape();
    let m = params.hidden_dim;
    if d != params.input_dim {
        return Err(TemporalError::ShapeMismatch(format!(
            "input has {d} channels, params expect {}",
            params.input_dim
        )));
    }
    if state.hidden.shape() != (m, h, w) || state.cell.shape() != (m, h, w) {
        return Err(TemporalError::ShapeMismatch(format!(
            "state shape {:?} does not match ({m}, {h}, {w})",
            state.hidden.shape()
        )));
    }

    let plane = h * w;
    let mut pre = vec![0.0f32; 4 * m * plane];
    for (g, chunk) in pre.chunks_mut(plane).enumerate() {
        chunk.fill(params.bias[g]);
    }
    conv_same_acc(&x.values, &params.w_x, params.kernel, &mut pre);
    conv_same_acc(&state.hidden, &params.w_h, params.kernel, &mut pre);

    let mut hidden = RealFrame::zeros(m, h, w);
    let mut cell = RealFrame::zeros(m, h, w);
    let (pi, rest) = pre.split_at(m * plane);
    let (pf, rest) = rest.split_at(m * plane);
    let (pg, po) = rest.split_at(m * plane);
    let c_prev = state.cell.data();
    {
        let hd = hidden.data_mut();
        let cd = cell.data_mut();
        for k in 0..m * plane {
            let c = sigmoid(pf[k]) * c_prev[k] + sigmoid(pi[k]) * pg[k].tanh();
            cd[k] = c;
            hd[k] = sigmoid(po[k]) * c.tanh();
        }
    }

    let output = match &params.projection {
        None => hidden.clone(),
        Some(p) => {
            let mut out = vec![0.0f32; d * plane];
            for (od, chunk) in out.chunks_mut(plane).enumerate() {
                chunk.fill(p.bias[od]);
                for mi in 0..m {
                    let wv = p.weight[od * m + mi];
                    if wv == 0.0 {
                        continue;
                    }
                    for (o, &hv) in chunk.iter_mut().zip(hidden.plane(mi)) {
                        *o += wv * hv;
                    }
                }
            }
            RealFrame::from_vec(d, h, w, out).expect("shape computed above")
        }
    };
    Ok((FeatureMap::new(x.scale, output), ConvLSTMState { hidden, cell }))
}

/// Which of `E3, E4, E5` carry a temporal module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementMask(pub [bool; 3]);

impl PlacementMask {
    pub const ALL: PlacementMask = PlacementMask([true; 3]);
    pub const NONE: PlacementMask = PlacementMask([false; 3]);
}

/// Residual update `E_i <- E_i + O_i` on every enabled scale.
///
/// `features`, `states` and `modules` are indexed by position in
/// [`SCALES`]. A missing state on an enabled scale starts from zero memory.
/// Disabled scales keep their features and states unchanged.
pub fn residual_update(
    features: &[FeatureMap],
    states: &[Option<ConvLSTMState>],
    modules: &[Option<ConvLSTMParams>],
    mask: PlacementMask,
) -> Result<(Vec<FeatureMap>, Vec<Option<ConvLSTMState>>), TemporalError> {
    let n = SCALES.len();
    if features.len() != n || states.len() != n || modules.len() != n {
        return Err(TemporalError::ShapeMismatch(format!(
            "expected {n} scales, got {} features, {} states, {} modules",
            features.len(),
            states.len(),
            modules.len()
        )));
    }
    let mut out_features = features.to_vec();
    let mut out_states = states.to_vec();
    for i in 0..n {
        if !mask.0[i] {
            continue;
        }
        let params = modules[i]
            .as_ref()
            .ok_or(TemporalError::MissingModule(SCALES[i]))?;
        let (h, w) = features[i].spatial();
        let fresh;
        let state = match &states[i] {
            Some(s) => s,
            None => {
                fresh = init_state(h, w, params);
                &fresh
            }
        };
        let (output, new_state) = convlstm_step(&features[i], state, params)?;
        for (e, &o) in out_features[i]
            .values
            .data_mut()
            .iter_mut()
            .zip(output.values.data())
        {
            // Skipping exact zeros keeps E bit-identical (including -0.0).
            if o != 0.0 {
                *e += o;
            }
        }
        out_states[i] = Some(new_state);
    }
    Ok((out_features, out_states))
}

/// Stateful wrapper holding per-scale parameters and memory across steps.
#[derive(Debug, Clone)]
pub struct TemporalModule {
    pub modules: Vec<Option<ConvLSTMParams>>,
    pub mask: PlacementMask,
    states: Vec<Option<ConvLSTMState>>,
}

impl TemporalModule {
    pub fn new(modules: Vec<Option<ConvLSTMParams>>, mask: PlacementMask) -> Result<Self, TemporalError> {
        if modules.len() != SCALES.len() {
            return Err(TemporalError::ShapeMismatch(format!(
                "expected {} modules, got {}",
                SCALES.len(),
                modules.len()
            )));
        }
        for (i, m) in modules.iter().enumerate() {
            match m {
                Some(p) => p.validate()?,
                None if mask.0[i] => return Err(TemporalError::MissingModule(SCALES[i])),
                None => {}
            }
        }
        Ok(Self {
            modules,
            mask,
            states: vec![None; SCALES.len()],
        })
    }

    /// Clears memory, e.g. at the start of a random clip.
    pub fn reset(&mut self) {
        self.states = vec![None; SCALES.len()];
    }

    pub fn states(&self) -> &[Option<ConvLSTMState>] {
        &self.states
    }

    pub fn step(&mut self, features: &[FeatureMap]) -> Result<Vec<FeatureMap>, TemporalError> {
        let (out, states) = residual_update(features, &self.states, &self.modules, self.mask)?;
        self.states = states;
        Ok(out)
    }

    pub fn save_params(&self) -> Result<(String, Vec<u8>), TemporalError> {
        let mut tensors = Vec::new();
        for (i, m) in self.modules.iter().enumerate() {
            if let Some(p) = m {
                tensors.extend(p.to_tensors(&format!("e{}.", SCALES[i])));
            }
        }
        write_tensors(&tensors)
    }

    pub fn load_params(manifest: &str, blob: &[u8], mask: PlacementMask) -> Result<Self, TemporalError> {
        let mut tensors = read_tensors(manifest, blob)?;
        let mut modules = Vec::with_capacity(SCALES.len());
        for scale in SCALES {
            let prefix = format!("e{scale}.");
            let present = tensors.iter().any(|t| t.name.starts_with(&prefix));
            modules.push(if present {
                Some(ConvLSTMParams::from_tensors(&mut tensors, &prefix)?)
            } else {
                None
            });
        }
        if let Some(t) = tensors.first() {
            return Err(TemporalError::Manifest(format!("unexpected tensor {}", t.name)));
        }
        Self::new(modules, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frame(c: usize, h: usize, w: usize, rng: &mut impl Rng) -> RealFrame {
        let data = (0..c * h * w).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        RealFrame::from_vec(c, h, w, data).unwrap()
    }

    #[test]
    fn zero_params_halve_the_cell() {
        let p = ConvLSTMParams::zeros(3, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = ConvLSTMState {
            hidden: random_frame(2, 4, 5, &mut rng),
            cell: random_frame(2, 4, 5, &mut rng),
        };
        let x = FeatureMap::new(3, random_frame(2, 4, 5, &mut rng));
        let (out, next) = convlstm_step(&x, &state, &p).unwrap();
        for (k, &c) in state.cell.data().iter().enumerate() {
            assert!((next.cell.data()[k] - 0.5 * c).abs() <= 1e-7);
            let h = 0.5 * (0.5 * c).tanh();
            assert!((next.hidden.data()[k] - h).abs() <= 1e-7);
            assert_eq!(out.values.data()[k], next.hidden.data()[k]);
        }
    }

    #[test]
    fn zero_state_zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ConvLSTMParams::random(3, 4, 4, &mut rng);
        p.bias.fill(0.0);
        let s = init_state(6, 7, &p);
        assert_eq!(s.hidden.shape(), (4, 6, 7));
        let (out, next) = convlstm_step(&FeatureMap::zeros(4, 4, 6, 7), &s, &p).unwrap();
        assert!(out.values.data().iter().all(|&v| v == 0.0));
        assert!(next.cell.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_padding_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_frame(2, 5, 4, &mut rng);
        let k = 3;
        let weights: Vec<f32> = (0..3 * 2 * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut out = vec![0.0f32; 3 * 20];
        conv_same_acc(&input, &weights, k, &mut out);
        for co in 0..3 {
            for y in 0..5i64 {
                for x in 0..4i64 {
                    let mut acc = 0.0f64;
                    for ci in 0..2 {
                        for ky in 0..3i64 {
                            for kx in 0..3i64 {
                                let (sy, sx) = (y + ky - 1, x + kx - 1);
                                if (0..5).contains(&sy) && (0..4).contains(&sx) {
                                    let wv = weights[((co * 2 + ci) * 9) + (ky * 3 + kx) as usize];
                                    acc += wv as f64 * input.get(ci, sy as usize, sx as usize) as f64;
                                }
                            }
                        }
                    }
                    let got = out[co * 20 + (y * 4 + x) as usize] as f64;
                    assert!((got - acc).abs() < 1e-5, "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = ConvLSTMParams::zeros(1, 3, 3);
        let s = init_state(2, 2, &p);
        assert!(convlstm_step(&FeatureMap::zeros(3, 2, 2, 2), &s, &p).is_err());
        assert!(convlstm_step(&FeatureMap::zeros(3, 3, 2, 3), &s, &p).is_err());
        let mut even = ConvLSTMParams::zeros(2, 3, 3);
        assert!(even.validate().is_err());
        even.kernel = 1;
        assert!(even.validate().is_err());
    }

    #[test]
    fn empty_mask_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let feats: Vec<FeatureMap> = SCALES
            .iter()
            .map(|&s| FeatureMap::new(s, random_frame(3, 4, 4, &mut rng)))
            .collect();
        let modules = vec![Some(ConvLSTMParams::random(3, 3, 3, &mut rng)); 3];
        let states = vec![None, None, None];
        let (out, st) = residual_update(&feats, &states, &modules, PlacementMask::NONE).unwrap();
        assert_eq!(out, feats);
        assert_eq!(st, states);
    }

    #[test]
    fn enabled_scale_needs_module() {
        let feats: Vec<FeatureMap> = SCALES.iter().map(|&s| FeatureMap::zeros(s, 2, 2, 2)).collect();
        let err = residual_update(&feats, &[None, None, None], &[None, None, None], PlacementMask::ALL);
        assert_eq!(err.unwrap_err(), TemporalError::MissingModule(3));
        assert!(TemporalModule::new(vec![None, None, None], PlacementMask([false, true, false])).is_err());
    }

    #[test]
    fn params_and_state_survive_serialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut proj = ConvLSTMParams::random(3, 4, 2, &mut rng);
        if let Some(p) = proj.projection.as_mut() {
            p.weight.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let module = TemporalModule::new(
            vec![Some(proj), None, Some(ConvLSTMParams::random(1, 4, 4, &mut rng))],
            PlacementMask([true, false, true]),
        )
        .unwrap();
        let (manifest, blob) = module.save_params().unwrap();
        assert!(manifest.starts_with("name=e3.w_x shape=8,4,3,3 offset=0\n"));
        let loaded = TemporalModule::load_params(&manifest, &blob, module.mask).unwrap();
        assert_eq!(loaded.modules, module.modules);

        let state = ConvLSTMState {
            hidden: random_frame(2, 3, 3, &mut rng),
            cell: random_frame(2, 3, 3, &mut rng),
        };
        let (m, b) = write_tensors(&state.to_tensors("e3.")).unwrap();
        let mut ts = read_tensors(&m, &b).unwrap();
        assert_eq!(ConvLSTMState::from_tensors(&mut ts, "e3.", (2, 3, 3)).unwrap(), state);
    }
}
