//! Underwater image formation model.
//!
//! Per channel `c`, an unattenuated intensity `J` seen through `z` meters of
//! water is observed as
//!
//! ```text
//! I = J * exp(-beta_c * z) + B_c * (1 - exp(-gamma_c * z))
//! ```
//!
//! `beta` is the attenuation coefficient, `B` the veiling light and `gamma`
//! the backscatter coefficient. In [`ModelMode::Tied`] the backscatter
//! coefficient is tied to the attenuation coefficient, which gives the
//! classic single-coefficient haze model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    #[default]
    Full,
    /// `gamma` is forced equal to `beta`.
    Tied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UifmParams {
    pub beta: [f64; 3],
    /// Veiling light `B`.
    pub veil: [f64; 3],
    pub gamma: [f64; 3],
    #[serde(default)]
    pub mode: ModelMode,
}

impl UifmParams {
    pub fn new(beta: [f64; 3], veil: [f64; 3], gamma: [f64; 3]) -> Self {
        Self {
            beta,
            veil,
            gamma,
            mode: ModelMode::Full,
        }
    }

    /// Haze model with a single coefficient per channel.
    pub fn tied(alpha: [f64; 3], veil: [f64; 3]) -> Self {
        Self {
            beta: alpha,
            veil,
            gamma: alpha,
            mode: ModelMode::Tied,
        }
    }

    pub fn uniform(value: f64) -> Self {
        Self::new([value; 3], [value; 3], [value; 3])
    }

    /// Re-establishes `gamma == beta` in tied mode.
    pub fn enforce_mode(&mut self) {
        if self.mode == ModelMode::Tied {
            self.gamma = self.beta;
        }
    }

    #[inline]
    pub fn channel(&self, c: usize) -> ChannelModel {
        ChannelModel {
            beta: self.beta[c],
            veil: self.veil[c],
            gamma: match self.mode {
                ModelMode::Full => self.gamma[c],
                ModelMode::Tied => self.beta[c],
            },
            tied: self.mode == ModelMode::Tied,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().chain(&self.veil).chain(&self.gamma).all(|v| v.is_finite())
    }

    /// Names of parameter groups holding a negative value on some channel.
    pub fn negative_groups(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, vals) in [("beta", &self.beta), ("B", &self.veil), ("gamma", &self.gamma)] {
            if vals.iter().any(|v| *v < 0.0) {
                out.push(name);
            }
        }
        out
    }
}

/// Residual of one observation and the gradients of `r^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualGrad {
    pub r: f64,
    pub d_j: f64,
    pub d_beta: f64,
    pub d_veil: f64,
    pub d_gamma: f64,
}

/// Model parameters of a single channel. Unchecked hot-path methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub beta: f64,
    pub veil: f64,
    pub gamma: f64,
    pub tied: bool,
}

impl ChannelModel {
    #[inline]
    pub fn forward(&self, j: f64, z: f64) -> f64 {
        j * (-self.beta * z).exp() + self.veil * (1.0 - (-self.gamma * z).exp())
    }

    #[inline]
    pub fn invert(&self, i: f64, z: f64) -> f64 {
        (i - self.veil * (1.0 - (-self.gamma * z).exp())) * (self.beta * z).exp()
    }

    #[inline]
    pub fn residual(&self, i: f64, z: f64, j: f64) -> f64 {
        i - self.forward(j, z)
    }

    /// In tied mode `d_beta` carries the backscatter contribution too and
    /// `d_gamma` is zero.
    #[inline]
    pub fn residual_and_grads(&self, i: f64, z: f64, j: f64) -> ResidualGrad {
        let att = (-self.beta * z).exp();
        let back = (-self.gamma * z).exp();
        // same association as `forward`, so r is exactly 0 at a generating J
        let r = i - (j * att + self.veil * (1.0 - back));
        let d_j = -r * att;
        let d_beta = r * j * z * att;
        let d_veil = -r * (1.0 - back);
        let d_gamma = -r * self.veil * z * back;
        if self.tied {
            ResidualGrad {
                r,
                d_j,
                d_beta: d_beta + d_gamma,
                d_veil,
                d_gamma: 0.0,
            }
        } else {
            ResidualGrad {
                r,
                d_j,
                d_beta,
                d_veil,
                d_gamma,
            }
        }
    }
}

fn check_channel(c: usize) -> Result<()> {
    if c >= 3 {
        return Err(Error::Domain(format!("channel {c} out of range")));
    }
    Ok(())
}

/// Observed intensity of `j` through `z` meters of water on channel `c`.
pub fn forward(j: f64, z: f64, params: &UifmParams, c: usize) -> Result<f64> {
    check_channel(c)?;
    if !j.is_finite() || !z.is_finite() || !params.is_finite() {
        return Err(Error::Domain("non-finite input".into()));
    }
    if z < 0.0 {
        return Err(Error::Domain(format!("negative distance {z}")));
    }
    Ok(params.channel(c).forward(j, z))
}

/// Single-view inversion: the `J` that produces `i` at distance `z`.
/// The result is not clamped and may leave `[0, 1]`; for `beta * z` beyond
/// about 20 the `exp(beta * z)` gain amplifies rounding error past 1e-9.
pub fn invert_single(i: f64, z: f64, params: &UifmParams, c: usize) -> Result<f64> {
    check_channel(c)?;
    if z < 0.0 {
        return Err(Error::Domain(format!("negative distance {z}")));
    }
    Ok(params.channel(c).invert(i, z))
}

pub fn residual_and_grads(i: f64, z: f64, j: f64, params: &UifmParams, c: usize) -> Result<ResidualGrad> {
    check_channel(c)?;
    if z < 0.0 {
        return Err(Error::Domain(format!("negative distance {z}")));
    }
    Ok(params.channel(c).residual_and_grads(i, z, j))
}
