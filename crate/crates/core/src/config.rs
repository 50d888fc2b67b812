//! Flat `key = value` experiment configuration files.
//!
//! UTF-8 text, one assignment per line, `#` starts a comment. Every key is
//! optional; omitted keys fall back to the desk-scale defaults of
//! [`SimConfig`]. `l_max` defaults to `m - 1` when not set explicitly.
//!
//! Recognized keys:
//!
//! ```text
//! m, n, p, l_max, k_max, qam_order        integers
//! snr_db                                  comma-separated list of dB values
//! frames                                  trial count per SNR point
//! detectors                               comma list: mmse, mmse-bpic, ddip-bpic
//! bpic_iterations                         BPIC iteration count T
//! ddip_window, ddip_max_iterations        integers
//! ddip_epsilon, ddip_learning_rate        reals
//! ddip_trace                              true/false, dump the fitting trace
//! seed                                    u64 RNG seed
//! complexity_i                            fixed I for the complexity report
//! delta_f_hz, carrier_hz                  recorded metadata, reals
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{Detector, SimConfig};

/// A parsed configuration: the simulation parameters plus harness-level
/// options that sit outside [`SimConfig`].
#[derive(Debug, Clone)]
pub struct FileConfig {
    pub sim: SimConfig,
    /// Dump the network fitting trace (single-trial diagnostics).
    pub ddip_trace: bool,
    /// Fixed `I` for the complexity report; measured from a probe run when
    /// absent.
    pub complexity_i: Option<f64>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse value '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "key '{key}': expected true/false, got '{other}'"
        ))),
    }
}

/// Parse configuration text. Unknown keys and malformed values are errors
/// naming the offending key; the assembled config is validated before being
/// returned.
pub fn parse_config_str(text: &str) -> Result<FileConfig> {
    let mut sim = SimConfig::default();
    let mut ddip_trace = false;
    let mut complexity_i = None;
    let mut l_max_set = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();

        match key {
            "m" => sim.m = parse_num(key, value)?,
            "n" => sim.n = parse_num(key, value)?,
            "p" => sim.p = parse_num(key, value)?,
            "l_max" => {
                sim.l_max = parse_num(key, value)?;
                l_max_set = true;
            }
            "k_max" => sim.k_max = parse_num(key, value)?,
            "qam_order" => sim.qam_order = parse_num(key, value)?,
            "snr_db" => {
                sim.snr_db_list = value
                    .split(',')
                    .map(|v| parse_num::<f64>(key, v))
                    .collect::<Result<Vec<f64>>>()?;
            }
            "frames" => sim.frames = parse_num(key, value)?,
            "detectors" => {
                sim.detectors = value
                    .split(',')
                    .map(Detector::parse)
                    .collect::<Result<Vec<Detector>>>()?;
            }
            "bpic_iterations" => sim.bpic_iterations = parse_num(key, value)?,
            "ddip_window" => sim.ddip_window = parse_num(key, value)?,
            "ddip_epsilon" => sim.ddip_epsilon = parse_num(key, value)?,
            "ddip_learning_rate" => sim.ddip_learning_rate = parse_num(key, value)?,
            "ddip_max_iterations" => sim.ddip_max_iterations = parse_num(key, value)?,
            "ddip_trace" => ddip_trace = parse_bool(key, value)?,
            "seed" => sim.seed = parse_num(key, value)?,
            "complexity_i" => complexity_i = Some(parse_num(key, value)?),
            "delta_f_hz" => sim.delta_f_hz = parse_num(key, value)?,
            "carrier_hz" => sim.carrier_hz = parse_num(key, value)?,
            other => {
                return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1)))
            }
        }
    }

    if !l_max_set {
        sim.l_max = sim.m.saturating_sub(1);
    }
    sim.validate()?;
    Ok(FileConfig {
        sim,
        ddip_trace,
        complexity_i,
    })
}

/// Read and parse a configuration file.
pub fn parse_config_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| Error::Config(format!("config not found: {}", path.display())))?;
    parse_config_str(&text)
}
