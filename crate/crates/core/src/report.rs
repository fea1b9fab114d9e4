//! Plain-text records: fit reports and parameter files.
//!
//! Fit report, one record per line, `key=value` fields:
//!
//! ```text
//! fit target=3 mode=full observations=123456
//! final channel=0 beta=0.49 B=0.101 gamma=0.61 objective=0.52
//! ...                                   (one `final` per channel)
//! warning channel=1 negative=beta       (only when a value is negative)
//! trace step=0 channel=0 objective=1.9 beta=0.1 B=0.1 gamma=0.1
//! ...                                   (one per logging interval)
//! ```
//!
//! Parameter file (`truth/params.txt`):
//!
//! ```text
//! mode full
//! beta 0.5 0.3 0.15
//! B 0.1 0.15 0.25
//! gamma 0.6 0.4 0.2
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so reparsing is exact.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::optimizer::TraceRecord;
use crate::uifm::{ModelMode, UifmParams};

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub target_id: u32,
    pub params: UifmParams,
    pub final_objective: [f64; 3],
    pub observations: usize,
    pub trace: Vec<TraceRecord>,
}

fn mode_name(mode: ModelMode) -> &'static str {
    match mode {
        ModelMode::Full => "full",
        ModelMode::Tied => "tied",
    }
}

fn parse_mode(s: &str) -> Option<ModelMode> {
    match s {
        "full" => Some(ModelMode::Full),
        "tied" => Some(ModelMode::Tied),
        _ => None,
    }
}

impl FitReport {
    pub fn new(target_id: u32, params: UifmParams, observations: usize, trace: Vec<TraceRecord>) -> Self {
        let mut final_objective = [f64::NAN; 3];
        for rec in &trace {
            final_objective[rec.channel] = rec.objective;
        }
        Self {
            target_id,
            params,
            final_objective,
            observations,
            trace,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        writeln!(
            s,
            "fit target={} mode={} observations={}",
            self.target_id,
            mode_name(p.mode),
            self.observations
        )
        .unwrap();
        for c in 0..3 {
            writeln!(
                s,
                "final channel={c} beta={} B={} gamma={} objective={}",
                p.beta[c], p.veil[c], p.gamma[c], self.final_objective[c]
            )
            .unwrap();
        }
        for c in 0..3 {
            let neg: Vec<&str> = [("beta", p.beta[c]), ("B", p.veil[c]), ("gamma", p.gamma[c])]
                .into_iter()
                .filter_map(|(n, v)| (v < 0.0).then_some(n))
                .collect();
            if !neg.is_empty() {
                writeln!(s, "warning channel={c} negative={}", neg.join(",")).unwrap();
            }
        }
        for r in &self.trace {
            writeln!(
                s,
                "trace step={} channel={} objective={} beta={} B={} gamma={}",
                r.step, r.channel, r.objective, r.beta, r.veil, r.gamma
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::parse("<fit report>", line, msg);
        let mut target_id = None;
        let mut mode = ModelMode::Full;
        let mut observations = 0;
        let mut params = UifmParams::uniform(f64::NAN);
        let mut final_objective = [f64::NAN; 3];
        let mut trace = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(kind) = parts.next() else { continue };
            let fields: HashMap<&str, &str> = parts.filter_map(|kv| kv.split_once('=')).collect();
            let num = |key: &str| -> Result<f64> {
                fields
                    .get(key)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(i + 1, format!("missing or bad field '{key}'")))
            };
            let channel = || -> Result<usize> {
                let c = num("channel")? as usize;
                if c < 3 {
                    Ok(c)
                } else {
                    Err(bad(i + 1, format!("bad channel {c}")))
                }
            };
            match kind {
                "fit" => {
                    target_id = Some(num("target")? as u32);
                    mode = fields
                        .get("mode")
                        .and_then(|m| parse_mode(m))
                        .ok_or_else(|| bad(i + 1, "bad mode".into()))?;
                    observations = num("observations")? as usize;
                }
                "final" => {
                    let c = channel()?;
                    params.beta[c] = num("beta")?;
                    params.veil[c] = num("B")?;
                    params.gamma[c] = num("gamma")?;
                    final_objective[c] = num("objective")?;
                }
                "trace" => trace.push(TraceRecord {
                    step: num("step")? as usize,
                    channel: channel()?,
                    objective: num("objective")?,
                    beta: num("beta")?,
                    veil: num("B")?,
                    gamma: num("gamma")?,
                }),
                "warning" | "#" => {}
                other => return Err(bad(i + 1, format!("unknown record '{other}'"))),
            }
        }
        params.mode = mode;
        Ok(Self {
            target_id: target_id.ok_or_else(|| bad(0, "missing 'fit' header".into()))?,
            params,
            final_objective,
            observations,
            trace,
        })
    }
}

pub fn params_to_text(p: &UifmParams) -> String {
    let row = |v: &[f64; 3]| format!("{} {} {}", v[0], v[1], v[2]);
    format!(
        "mode {}\nbeta {}\nB {}\ngamma {}\n",
        mode_name(p.mode),
        row(&p.beta),
        row(&p.veil),
        row(&p.gamma)
    )
}

pub fn parse_params(text: &str) -> Result<UifmParams> {
    let bad = |line: usize, msg: &str| Error::parse("<params>", line, msg);
    let mut p = UifmParams::uniform(f64::NAN);
    let mut seen = [false; 3];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        if key == "mode" {
            p.mode = parts.next().and_then(parse_mode).ok_or_else(|| bad(i + 1, "bad mode"))?;
            continue;
        }
        let vals: Vec<f64> = parts
            .map(|v| v.parse().map_err(|_| bad(i + 1, "bad number")))
            .collect::<Result<_>>()?;
        let vals: [f64; 3] = vals.try_into().map_err(|_| bad(i + 1, "expected three values"))?;
        let slot = match key {
            "beta" => 0,
            "B" => 1,
            "gamma" => 2,
            _ => return Err(bad(i + 1, "unknown key")),
        };
        seen[slot] = true;
        match slot {
            0 => p.beta = vals,
            1 => p.veil = vals,
            _ => p.gamma = vals,
        }
    }
    if p.mode == ModelMode::Tied && !seen[2] {
        p.gamma = p.beta;
        seen[2] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(bad(0, "missing beta, B or gamma"));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_roundtrip_exact() {
        let p = UifmParams::new([0.5, 0.3, 0.15], [0.1, 0.15, 0.25], [0.6, 0.4, 1.0 / 3.0]);
        assert_eq!(parse_params(&params_to_text(&p)).unwrap(), p);
        assert!(parse_params("beta 1 2 3\n").is_err());
        let tied = parse_params("mode tied\nbeta 0.2 0.3 0.4\nB 0.1 0.1 0.1\n").unwrap();
        assert_eq!(tied.gamma, tied.beta);
    }

    #[test]
    fn fit_report_roundtrip_and_negative_flag() {
        let p = UifmParams::new([0.5, -0.01, 0.15], [0.1, 0.15, 0.25], [0.6, 0.4, -2.0]);
        let trace = vec![
            TraceRecord { step: 0, channel: 0, objective: 3.5, beta: 0.1, veil: 0.1, gamma: 0.1 },
            TraceRecord { step: 200, channel: 0, objective: 0.125, beta: 0.5, veil: 0.1, gamma: 0.6 },
        ];
        let r = FitReport::new(7, p, 99, trace);
        let text = r.to_text();
        assert!(text.contains("warning channel=1 negative=beta"));
        assert!(text.contains("warning channel=2 negative=gamma"));
        let back = FitReport::parse(&text).unwrap();
        assert_eq!(back.trace, r.trace);
        assert_eq!(back.params, r.params);
        assert_eq!(back.final_objective[0], 0.125);
        assert_eq!(back.observations, 99);
        assert!(FitReport::parse("final channel=0\n").is_err());
    }
}
