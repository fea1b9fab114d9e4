//! Joint least-squares fit of the restored image and model parameters.
//!
//! For each channel independently we minimize
//!
//! ```text
//! sum over observations (I - J_p exp(-beta z) - B (1 - exp(-gamma z)))^2
//! ```
//!
//! over every `J_p` and the channel's `(beta, B, gamma)` with full-batch Adam.
//! Gradients are accumulated over fixed chunks of pixels in parallel and the
//! chunk partial sums are added in chunk order, so results do not depend on
//! the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::PosedImage;
use crate::pairing::ObservationSet;
use crate::uifm::{ChannelModel, ModelMode, UifmParams};

/// Pixels per gradient-reduction chunk.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Objective is recorded every `log_every` steps (and at the last step).
    pub log_every: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            steps: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            log_every: 10,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("Adam moment decay rates must lie in [0, 1)".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidArgument("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u32,
}

impl Adam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    /// One update of every parameter whose `free` flag is set. Frozen
    /// entries keep both their value and their moments.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], free: &[bool]) {
        debug_assert_eq!(params.len(), self.first_moment.len());
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for (k, x) in params.iter_mut().enumerate() {
            if !free[k] {
                continue;
            }
            let g = grads[k];
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *x -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

/// Parameter groups excluded from optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FreezeSet {
    pub j: bool,
    pub beta: bool,
    pub veil: bool,
    pub gamma: bool,
}

impl FreezeSet {
    pub const NONE: FreezeSet = FreezeSet {
        j: false,
        beta: false,
        veil: false,
        gamma: false,
    };
    pub const PARAMS: FreezeSet = FreezeSet {
        j: false,
        beta: true,
        veil: true,
        gamma: true,
    };

    pub fn all(&self) -> bool {
        self.j && self.beta && self.veil && self.gamma
    }

    /// Parses a comma-separated list of `J`, `beta`, `B`, `gamma`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut set = FreezeSet::NONE;
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "J" | "j" => set.j = true,
                "beta" => set.beta = true,
                "B" | "veil" => set.veil = true,
                "gamma" => set.gamma = true,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown parameter group '{other}' (expected J, beta, B, gamma)"
                    )))
                }
            }
        }
        Ok(set)
    }

    pub fn names(&self) -> Vec<&'static str> {
        [(self.j, "J"), (self.beta, "beta"), (self.veil, "B"), (self.gamma, "gamma")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect()
    }
}

/// Restored intensities and model parameters being optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct RestorationState {
    pub width: u32,
    pub height: u32,
    /// Pixels with depth; `j` is NaN elsewhere.
    pub mask: Vec<bool>,
    pub j: Vec<[f64; 3]>,
    pub params: UifmParams,
    pub frozen: FreezeSet,
}

impl RestorationState {
    pub fn pixel_count(&self) -> usize {
        self.j.len()
    }
}

/// `J = I` on pixels with depth and `beta = B = gamma = 0.1`.
pub fn init_state(target: &PosedImage) -> RestorationState {
    init_state_with(target, UifmParams::uniform(0.1))
}

pub fn init_state_with(target: &PosedImage, params: UifmParams) -> RestorationState {
    let mask = target.depth_mask();
    let j = mask
        .iter()
        .enumerate()
        .map(|(p, &m)| if m { target.image.intensity(p) } else { [f64::NAN; 3] })
        .collect();
    RestorationState {
        width: target.width(),
        height: target.height(),
        mask,
        j,
        params,
        frozen: FreezeSet::NONE,
    }
}

/// Marks `groups` as frozen (in addition to any already frozen).
pub fn freeze(state: RestorationState, groups: FreezeSet) -> Result<RestorationState> {
    let frozen = FreezeSet {
        j: state.frozen.j || groups.j,
        beta: state.frozen.beta || groups.beta,
        veil: state.frozen.veil || groups.veil,
        gamma: state.frozen.gamma || groups.gamma,
    };
    if frozen.all() {
        return Err(Error::NoFreeParameters);
    }
    Ok(RestorationState { frozen, ..state })
}

/// Sum of squared residuals over every observation of channel `c`.
pub fn objective(obs: &ObservationSet, state: &RestorationState, c: usize) -> f64 {
    let model = state.params.channel(c);
    let pixels = obs.observed_pixels();
    pixels
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sum = 0.0;
            for &p in chunk {
                let j = state.j[p as usize][c];
                for k in obs.segment(p as usize) {
                    let r = model.residual(obs.intensity[k][c], obs.distance[k], j);
                    sum += r * r;
                }
            }
            sum
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// One objective sample of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// Number of Adam updates applied before the objective was evaluated.
    pub step: usize,
    pub channel: usize,
    pub objective: f64,
    pub beta: f64,
    pub veil: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub state: RestorationState,
    pub trace: Vec<TraceRecord>,
}

impl FitOutcome {
    /// Final objective per channel.
    pub fn final_objective(&self) -> [f64; 3] {
        let mut out = [f64::NAN; 3];
        for rec in &self.trace {
            out[rec.channel] = rec.objective;
        }
        out
    }
}

/// Objective and gradients for one channel in the flat layout
/// `[J over pixels..., beta, B, gamma]`.
fn channel_gradients(
    obs: &ObservationSet,
    pixels: &[u32],
    values: &[f64],
    model: ChannelModel,
    c: usize,
    grads: &mut [f64],
) -> f64 {
    let n = pixels.len();
    let (grad_j, grad_params) = grads.split_at_mut(n);
    let partials: Vec<[f64; 4]> = pixels
        .par_chunks(CHUNK)
        .zip(values[..n].par_chunks(CHUNK))
        .zip(grad_j.par_chunks_mut(CHUNK))
        .map(|((chunk, js), gj)| {
            let mut acc = [0.0; 4];
            for ((&p, &j), g) in chunk.iter().zip(js).zip(gj.iter_mut()) {
                let mut d_j = 0.0;
                for k in obs.segment(p as usize) {
                    let rg = model.residual_and_grads(obs.intensity[k][c], obs.distance[k], j);
                    acc[0] += rg.r * rg.r;
                    d_j += rg.d_j;
                    acc[1] += rg.d_beta;
                    acc[2] += rg.d_veil;
                    acc[3] += rg.d_gamma;
                }
                *g = d_j;
            }
            acc
        })
        .collect();
    let mut total = [0.0; 4];
    for part in partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    grad_params.copy_from_slice(&total[1..]);
    total[0]
}

fn fit_channel(
    obs: &ObservationSet,
    state: &RestorationState,
    pixels: &[u32],
    cfg: &AdamConfig,
    c: usize,
) -> Result<(Vec<f64>, [f64; 3], Vec<TraceRecord>)> {
    let n = pixels.len();
    let tied = state.params.mode == ModelMode::Tied;
    let mut values: Vec<f64> = pixels.iter().map(|&p| state.j[p as usize][c]).collect();
    values.extend([state.params.beta[c], state.params.veil[c], state.params.gamma[c]]);
    if tied {
        values[n + 2] = values[n];
    }
    let frozen = state.frozen;
    let mut free = vec![!frozen.j; n];
    free.extend([!frozen.beta, !frozen.veil, !frozen.gamma && !tied]);

    let model_of = |v: &[f64]| ChannelModel {
        beta: v[n],
        veil: v[n + 1],
        gamma: if tied { v[n] } else { v[n + 2] },
        tied,
    };
    let record = |step: usize, objective: f64, v: &[f64]| TraceRecord {
        step,
        channel: c,
        objective,
        beta: v[n],
        veil: v[n + 1],
        gamma: if tied { v[n] } else { v[n + 2] },
    };

    let mut adam = Adam::new(n + 3, *cfg);
    let mut grads = vec![0.0; n + 3];
    let mut trace = Vec::with_capacity(cfg.steps / cfg.log_every + 2);
    for step in 0..cfg.steps {
        let obj = channel_gradients(obs, pixels, &values, model_of(&values), c, &mut grads);
        if !obj.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { step, channel: c });
        }
        if step % cfg.log_every == 0 {
            trace.push(record(step, obj, &values));
        }
        adam.update(&mut values, &grads, &free);
        if tied {
            values[n + 2] = values[n];
        }
    }
    let obj = channel_gradients(obs, pixels, &values, model_of(&values), c, &mut grads);
    if !obj.is_finite() {
        return Err(Error::NonFinite {
            step: cfg.steps,
            channel: c,
        });
    }
    trace.push(record(cfg.steps, obj, &values));
    let params = [values[n], values[n + 1], values[n + 2]];
    values.truncate(n);
    Ok((values, params, trace))
}

/// Runs `cfg.steps` full-batch Adam updates on each channel independently.
pub fn fit(obs: &ObservationSet, state: RestorationState, cfg: &AdamConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    if state.frozen.all() {
        return Err(Error::NoFreeParameters);
    }
    if obs.is_empty() {
        return Err(Error::NothingToRestore(obs.target_id));
    }
    if obs.pixel_count() != state.pixel_count() {
        return Err(Error::InvalidArgument(format!(
            "observation set covers {} pixels but the state has {}",
            obs.pixel_count(),
            state.pixel_count()
        )));
    }
    let pixels: Vec<u32> = obs
        .observed_pixels()
        .into_iter()
        .filter(|&p| state.mask[p as usize])
        .collect();
    let mut out = state.clone();
    let mut trace = Vec::new();
    for c in 0..3 {
        let (values, params, channel_trace) = fit_channel(obs, &state, &pixels, cfg, c)?;
        for (&p, v) in pixels.iter().zip(values) {
            out.j[p as usize][c] = v;
        }
        out.params.beta[c] = params[0];
        out.params.veil[c] = params[1];
        out.params.gamma[c] = params[2];
        trace.extend(channel_trace);
    }
    out.params.enforce_mode();
    Ok(FitOutcome { state: out, trace })
}
