//! Leaky Integrate-and-Fire dynamics converting real activations to spike
//! trains, plus the rectangular surrogate gradient used to backpropagate
//! through the threshold.
//!
//! The membrane follows a discrete Euler update with one step per frame:
//! `V ← V + (1/τ)·(−(V − v_rest) + r·I)`; crossing the threshold emits a
//! spike and hard-resets the membrane to `v_rest`. The reset branch is
//! detached in the backward pass.

use crate::error::{Result, SgnError};
use crate::tensor::{DenseTensor, SpikeTensor};

/// Membrane constants of a LIF stage.
#[derive(Debug, Clone, Copy)]
pub struct LifParams {
    /// Membrane time constant in steps.
    pub tau: f64,
    /// Resting potential; also the reset target.
    pub v_rest: f64,
    /// Input resistance.
    pub r: f64,
    /// Firing threshold.
    pub v_th: f64,
    /// Width of the rectangular surrogate window.
    pub surrogate_width: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams { tau: 2.0, v_rest: 0.0, r: 1.0, v_th: 1.0, surrogate_width: 1.0 }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(SgnError::Config("lif tau must be > 0".into()));
        }
        if self.v_th <= self.v_rest {
            return Err(SgnError::Config("lif threshold must exceed resting potential".into()));
        }
        if self.surrogate_width <= 0.0 {
            return Err(SgnError::Config("surrogate width must be > 0".into()));
        }
        Ok(())
    }
}

/// Membrane potentials carried across steps; one value per `(c, v)` lane.
#[derive(Debug, Clone)]
pub struct LifState {
    pub membrane: Vec<f64>,
    pub channels: usize,
    pub joints: usize,
}

impl LifState {
    pub fn resting(params: &LifParams, channels: usize, joints: usize) -> Self {
        LifState { membrane: vec![params.v_rest; channels * joints], channels, joints }
    }
}

/// One Euler step over a `(C, V)` input slice. Returns spikes for the step;
/// the state is updated in place (reset to `v_rest` on every spiking lane).
pub fn lif_step(state: &mut LifState, input: &[f64], params: &LifParams) -> Result<Vec<f64>> {
    if input.len() != state.membrane.len() {
        return Err(SgnError::Dimension("lif step input does not match state".into()));
    }
    if !input.iter().all(|x| x.is_finite()) {
        return Err(SgnError::Numerical("non-finite input to lif step".into()));
    }
    let mut spikes = vec![0.0; input.len()];
    for (i, (m, &cur)) in state.membrane.iter_mut().zip(input).enumerate() {
        let v_pre = *m + (-(*m - params.v_rest) + params.r * cur) / params.tau;
        if v_pre >= params.v_th {
            spikes[i] = 1.0;
            *m = params.v_rest;
        } else {
            *m = v_pre;
        }
    }
    Ok(spikes)
}

/// Rectangular surrogate derivative of the spike nonlinearity:
/// `1/width` inside `|u − v_th| ≤ width/2`, zero outside.
pub fn surrogate_grad(u_minus_th: f64, width: f64) -> f64 {
    debug_assert!(width > 0.0);
    if u_minus_th.abs() <= width / 2.0 {
        1.0 / width
    } else {
        0.0
    }
}

/// Trace of one LIF pass, retained for the backward sweep.
#[derive(Debug, Clone)]
pub struct LifTrace {
    /// Pre-reset membrane at every step, shape (T, C, V).
    pub v_pre: DenseTensor,
    /// Emitted spikes, shape (T, C, V).
    pub spikes: SpikeTensor,
}

/// Fold [`lif_step`] over the frame axis with a fresh resting state.
pub fn lif_sequence(params: &LifParams, input: &DenseTensor) -> Result<SpikeTensor> {
    Ok(lif_sequence_trace(params, input)?.spikes)
}

/// As [`lif_sequence`], additionally returning the membrane trace.
pub fn lif_sequence_trace(params: &LifParams, input: &DenseTensor) -> Result<LifTrace> {
    params.validate()?;
    let (t_dim, c_dim, v_dim) = input.shape();
    if !input.is_finite() {
        return Err(SgnError::Numerical("non-finite input to lif sequence".into()));
    }
    let lanes = c_dim * v_dim;
    let mut membrane = vec![params.v_rest; lanes];
    let mut v_pre = DenseTensor::zeros(t_dim, c_dim, v_dim);
    let mut spikes = DenseTensor::zeros(t_dim, c_dim, v_dim);
    let leak = 1.0 - 1.0 / params.tau;
    let drive = params.r / params.tau;
    let rest_term = params.v_rest / params.tau;
    for t in 0..t_dim {
        let in_start = (t * c_dim) * v_dim;
        let cur = &input.data()[in_start..in_start + lanes];
        let vp = &mut v_pre.data_mut()[in_start..in_start + lanes];
        let sp = &mut spikes.data_mut()[in_start..in_start + lanes];
        for i in 0..lanes {
            let v = membrane[i] * leak + rest_term + drive * cur[i];
            vp[i] = v;
            if v >= params.v_th {
                sp[i] = 1.0;
                membrane[i] = params.v_rest;
            } else {
                membrane[i] = v;
            }
        }
    }
    Ok(LifTrace { v_pre, spikes: SpikeTensor::from_dense_unchecked(spikes) })
}

/// Backward sweep through a LIF sequence. Given `d L / d spikes`, returns
/// `d L / d input` using the rectangular surrogate at the threshold and a
/// detached reset (no gradient through the reset branch).
pub fn lif_sequence_vjp(params: &LifParams, trace: &LifTrace, grad_spikes: &DenseTensor) -> DenseTensor {
    let (t_dim, c_dim, v_dim) = trace.v_pre.shape();
    assert_eq!(grad_spikes.shape(), (t_dim, c_dim, v_dim), "lif vjp shape mismatch");
    let lanes = c_dim * v_dim;
    let leak = 1.0 - 1.0 / params.tau;
    let drive = params.r / params.tau;
    let mut dinput = DenseTensor::zeros(t_dim, c_dim, v_dim);
    // dL/dV_after(t) carried backwards across steps.
    let mut dv_after = vec![0.0; lanes];
    for t in (0..t_dim).rev() {
        let start = (t * c_dim) * v_dim;
        let vp = &trace.v_pre.data()[start..start + lanes];
        let sp = &trace.spikes.dense().data()[start..start + lanes];
        let gs = &grad_spikes.data()[start..start + lanes];
        let di = &mut dinput.data_mut()[start..start + lanes];
        for i in 0..lanes {
            let sg = surrogate_grad(vp[i] - params.v_th, params.surrogate_width);
            // V_after = (1 - s)·V_pre + s·v_rest with s detached.
            let mut dv_pre = gs[i] * sg;
            if sp[i] == 0.0 {
                dv_pre += dv_after[i];
            }
            di[i] = dv_pre * drive;
            dv_after[i] = dv_pre * leak;
        }
    }
    dinput
}
