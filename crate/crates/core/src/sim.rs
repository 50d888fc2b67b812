//! Monte Carlo experiment engine.
//!
//! A trial is one frame pushed through the full chain: random bits, QAM
//! grid, time-domain modulation, a fresh channel realization, AWGN, and the
//! real-valued model handed to every configured detector. All detectors in a
//! trial consume bit-identical `(H, y, x_true)`. Trials are parallelized by
//! frame with per-frame RNG substreams derived from `(seed, snr index,
//! frame index)`, so results do not depend on the worker count.

use rand::SeedableRng;
use rand_pcg::Pcg64;
use rayon::prelude::*;
use std::time::Instant;

use crate::bpic::{mmse_denoise, BpicDetector, RealAlphabet};
use crate::channel::{
    add_awgn, apply_channel_samplewise, effective_dd_matrix, sample_channel, snr_to_sigma2,
    to_real_model, ChannelRealization,
};
use crate::dd_frame::{demodulate, hard_demap, map_bits, modulate, Constellation, DDGrid};
use crate::ddip::{run_ddip, DdipConfig, DdipTracePoint};
use crate::error::{Error, Result};

/// The detectors the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    Mmse,
    MmseBpic,
    DdipBpic,
}

impl Detector {
    /// Canonical execution and reporting order.
    pub const ALL: [Detector; 3] = [Detector::Mmse, Detector::MmseBpic, Detector::DdipBpic];

    pub fn name(&self) -> &'static str {
        match self {
            Detector::Mmse => "mmse",
            Detector::MmseBpic => "mmse-bpic",
            Detector::DdipBpic => "ddip-bpic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "mmse" => Ok(Detector::Mmse),
            "mmse-bpic" => Ok(Detector::MmseBpic),
            "ddip-bpic" => Ok(Detector::DdipBpic),
            other => Err(Error::InvalidParameter(format!(
                "unknown detector '{other}' (expected mmse, mmse-bpic, or ddip-bpic)"
            ))),
        }
    }
}

/// Full experiment description. Defaults mirror the standard desk-scale
/// setting: a 12x7 grid, six paths spanning the whole delay range, 4-QAM,
/// ten BPIC iterations.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub m: usize,
    pub n: usize,
    /// Number of channel paths `P`.
    pub p: usize,
    pub l_max: usize,
    pub k_max: usize,
    pub qam_order: usize,
    pub snr_db_list: Vec<f64>,
    pub frames: usize,
    pub detectors: Vec<Detector>,
    /// BPIC iteration count `T`.
    pub bpic_iterations: usize,
    pub ddip_window: usize,
    pub ddip_epsilon: f64,
    pub ddip_learning_rate: f64,
    pub ddip_max_iterations: usize,
    pub seed: u64,
    /// Subcarrier spacing in Hz. Recorded for display; the discrete model
    /// never uses it.
    pub delta_f_hz: f64,
    /// Carrier frequency in Hz. Recorded for display only.
    pub carrier_hz: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            m: 12,
            n: 7,
            p: 6,
            l_max: 11,
            k_max: 3,
            qam_order: 4,
            snr_db_list: vec![10.0, 12.5, 15.0, 17.5],
            frames: 1000,
            detectors: Detector::ALL.to_vec(),
            bpic_iterations: 10,
            ddip_window: 30,
            ddip_epsilon: 1e-3,
            ddip_learning_rate: 0.01,
            ddip_max_iterations: 500,
            seed: 1,
            delta_f_hz: 15_000.0,
            carrier_hz: 10e9,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidParameter("m and n must be positive".into()));
        }
        if self.l_max >= self.m {
            return Err(Error::InvalidParameter(format!(
                "l_max = {} violates l_max <= M-1 = {}",
                self.l_max,
                self.m - 1
            )));
        }
        if self.k_max > self.n / 2 {
            return Err(Error::InvalidParameter(format!(
                "k_max = {} violates k_max <= floor(N/2) = {}",
                self.k_max,
                self.n / 2
            )));
        }
        let lattice = (self.l_max + 1) * (2 * self.k_max + 1);
        if self.p == 0 || self.p > lattice {
            return Err(Error::InvalidParameter(format!(
                "p = {} violates 1 <= P <= (l_max+1)(2 k_max+1) = {lattice}",
                self.p
            )));
        }
        Constellation::qam(self.qam_order)?;
        if self.snr_db_list.is_empty() {
            return Err(Error::InvalidParameter("snr_db list cannot be empty".into()));
        }
        if self.frames == 0 {
            return Err(Error::InvalidParameter("frames must be at least 1".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::InvalidParameter("detector list cannot be empty".into()));
        }
        if self.bpic_iterations == 0 {
            return Err(Error::InvalidParameter("bpic_iterations must be at least 1".into()));
        }
        if self.ddip_window == 0 || self.ddip_max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "ddip_window and ddip_max_iterations must be positive".into(),
            ));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.ddip_epsilon) || !positive(self.ddip_learning_rate) {
            return Err(Error::InvalidParameter(
                "ddip_epsilon and ddip_learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Constellation::qam(self.qam_order)
    }

    pub fn wants(&self, d: Detector) -> bool {
        self.detectors.contains(&d)
    }

    /// Configured detectors in canonical order.
    pub fn ordered_detectors(&self) -> Vec<Detector> {
        Detector::ALL
            .iter()
            .copied()
            .filter(|d| self.wants(*d))
            .collect()
    }

    pub fn ddip_config(&self, scale: f64) -> DdipConfig {
        DdipConfig {
            scale,
            window: self.ddip_window,
            epsilon: self.ddip_epsilon,
            learning_rate: self.ddip_learning_rate,
            max_iterations: self.ddip_max_iterations,
        }
    }
}

/// Outcome of a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// Complex-symbol error counts per detector, canonical order.
    pub symbol_errors: Vec<(Detector, usize)>,
    /// Stopping iteration of the network fit, when the detector ran.
    pub ddip_iterations: Option<usize>,
    pub ddip_truncated: bool,
    /// Wall time per pipeline stage in microseconds.
    pub stage_micros: Vec<(String, u64)>,
}

/// A trial plus everything needed to audit it.
#[derive(Debug, Clone)]
pub struct DetailedTrial {
    pub result: TrialResult,
    pub truth: DDGrid,
    pub decisions: Vec<(Detector, DDGrid)>,
    pub channel: ChannelRealization,
    pub ddip_trace: Option<Vec<DdipTracePoint>>,
}

/// Complex-symbol disagreements between two grids.
pub fn count_symbol_errors(truth: &DDGrid, decided: &DDGrid) -> usize {
    truth
        .as_slice()
        .iter()
        .zip(decided.as_slice())
        .filter(|(a, b)| a != b)
        .count()
}

/// Run one frame at the given SNR and score every configured detector
/// against the transmitted symbols.
pub fn run_trial<R: rand::Rng + ?Sized>(
    cfg: &SimConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<TrialResult> {
    run_trial_detailed(cfg, snr_db, rng).map(|d| d.result)
}

/// [`run_trial`] keeping the truth grid, per-detector decisions, the channel
/// realization, and the network fitting trace.
pub fn run_trial_detailed<R: rand::Rng + ?Sized>(
    cfg: &SimConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<DetailedTrial> {
    cfg.validate()?;
    let cons = cfg.constellation()?;
    let (m, n) = (cfg.m, cfg.n);
    let mn = m * n;

    let setup_start = Instant::now();
    let bits: Vec<u8> = (0..mn * cons.bits_per_symbol())
        .map(|_| rng.gen_range(0..2u8))
        .collect();
    let truth = map_bits(&bits, &cons, m, n)?;
    let s = modulate(&truth);
    let channel = sample_channel(cfg.p, cfg.l_max, cfg.k_max, m, n, rng)?;
    let sigma_c2 = snr_to_sigma2(snr_db);
    let faded = apply_channel_samplewise(&s, &channel);
    let received = add_awgn(&faded, sigma_c2, rng)?;
    let y_dd = demodulate(&received);
    let h_dd = effective_dd_matrix(&channel);
    let model = to_real_model(&h_dd, y_dd.as_slice(), sigma_c2, Some(truth.as_slice()));
    let alphabet = RealAlphabet::from_constellation(&cons);

    let mut stage_micros = vec![("setup".to_string(), setup_start.elapsed().as_micros() as u64)];
    let mut symbol_errors = Vec::new();
    let mut decisions = Vec::new();
    let mut ddip_iterations = None;
    let mut ddip_truncated = false;
    let mut ddip_trace = None;

    let needs_mmse = cfg.wants(Detector::Mmse) || cfg.wants(Detector::MmseBpic);
    let needs_bpic = cfg.wants(Detector::MmseBpic) || cfg.wants(Detector::DdipBpic);

    let mmse_estimate = if needs_mmse {
        let t = Instant::now();
        let est = mmse_denoise(&model)?;
        stage_micros.push(("mmse".to_string(), t.elapsed().as_micros() as u64));
        Some(est)
    } else {
        None
    };
    let bpic = if needs_bpic {
        Some(BpicDetector::new(&model, &alphabet)?)
    } else {
        None
    };

    let mut score = |det: Detector, estimate: &[f64]| -> Result<()> {
        let (decided, _) = hard_demap(estimate, &cons, m, n)?;
        symbol_errors.push((det, count_symbol_errors(&truth, &decided)));
        decisions.push((det, decided));
        Ok(())
    };

    for det in cfg.ordered_detectors() {
        match det {
            Detector::Mmse => {
                score(det, mmse_estimate.as_ref().expect("computed above"))?;
            }
            Detector::MmseBpic => {
                let t = Instant::now();
                let run = bpic
                    .as_ref()
                    .expect("built above")
                    .run(mmse_estimate.as_ref().expect("computed above"), cfg.bpic_iterations)?;
                stage_micros.push(("bpic(mmse)".to_string(), t.elapsed().as_micros() as u64));
                score(det, &run.x_hat)?;
            }
            Detector::DdipBpic => {
                let t = Instant::now();
                let fit = run_ddip(&model, &cfg.ddip_config(cons.amplitude()), rng)?;
                stage_micros.push(("ddip".to_string(), t.elapsed().as_micros() as u64));
                ddip_iterations = Some(fit.iterations);
                ddip_truncated = fit.truncated;

                let t = Instant::now();
                let run = bpic
                    .as_ref()
                    .expect("built above")
                    .run(&fit.x_init, cfg.bpic_iterations)?;
                stage_micros.push(("bpic(ddip)".to_string(), t.elapsed().as_micros() as u64));
                score(det, &run.x_hat)?;
                ddip_trace = Some(fit.trace);
            }
        }
    }

    Ok(DetailedTrial {
        result: TrialResult {
            symbol_errors,
            ddip_iterations,
            ddip_truncated,
            stage_micros,
        },
        truth,
        decisions,
        channel,
        ddip_trace,
    })
}

/// One SER measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SerPoint {
    pub detector: Detector,
    pub snr_db: f64,
    pub frames: usize,
    pub symbol_errors: u64,
    pub ser: f64,
    /// 95% Wilson binomial half-width.
    pub ci_halfwidth: f64,
}

/// Aggregated sweep output.
#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Detector-major, SNRs in input order within each detector.
    pub points: Vec<SerPoint>,
    /// Stopping iterations of every network fit, frame order within SNR,
    /// SNRs concatenated in input order.
    pub ddip_iteration_counts: Vec<u32>,
    pub ddip_truncated_trials: u64,
    pub symbols_per_frame: usize,
}

/// 95% Wilson score half-width for `errors` out of `total` Bernoulli draws.
pub fn wilson_halfwidth(errors: u64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let z = 1.959963984540054f64;
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent substream for one `(seed, snr index, frame)` triple.
pub fn trial_rng(seed: u64, snr_index: u64, frame: u64) -> Pcg64 {
    let mut s = splitmix64(seed);
    s = splitmix64(s ^ snr_index);
    s = splitmix64(s ^ frame);
    Pcg64::seed_from_u64(s)
}

fn with_trial_context(e: Error, snr_db: f64, frame: usize) -> Error {
    let ctx = |msg: String| format!("frame {frame} at {snr_db} dB: {msg}");
    match e {
        Error::InvalidInput(m) => Error::InvalidInput(ctx(m)),
        Error::InvalidParameter(m) => Error::InvalidParameter(ctx(m)),
        Error::DegenerateModel(m) => Error::DegenerateModel(ctx(m)),
        Error::Numerical(m) => Error::Numerical(ctx(m)),
        Error::Config(m) => Error::Config(ctx(m)),
        Error::MissingData(m) => Error::MissingData(ctx(m)),
    }
}

/// Run the full frames x SNR grid and aggregate SER per detector.
pub fn run_sweep(cfg: &SimConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mn = cfg.m * cfg.n;
    let mut per_detector_errors: Vec<Vec<u64>> = vec![Vec::new(); cfg.snr_db_list.len()];
    let mut iteration_counts = Vec::new();
    let mut truncated = 0u64;
    let detectors = cfg.ordered_detectors();

    for (si, &snr_db) in cfg.snr_db_list.iter().enumerate() {
        let trials: std::result::Result<Vec<TrialResult>, Error> = (0..cfg.frames)
            .into_par_iter()
            .map(|frame| {
                let mut rng = trial_rng(cfg.seed, si as u64, frame as u64);
                run_trial(cfg, snr_db, &mut rng).map_err(|e| with_trial_context(e, snr_db, frame))
            })
            .collect();
        let trials = trials?;

        let mut errors = vec![0u64; detectors.len()];
        for t in &trials {
            for (di, &(det, count)) in t.symbol_errors.iter().enumerate() {
                debug_assert_eq!(det, detectors[di]);
                errors[di] += count as u64;
            }
            if let Some(i) = t.ddip_iterations {
                iteration_counts.push(i as u32);
            }
            if t.ddip_truncated {
                truncated += 1;
            }
        }
        per_detector_errors[si] = errors;
    }

    let total_symbols = (cfg.frames * mn) as u64;
    let mut points = Vec::new();
    for (di, &det) in detectors.iter().enumerate() {
        for (si, &snr_db) in cfg.snr_db_list.iter().enumerate() {
            let symbol_errors = per_detector_errors[si][di];
            points.push(SerPoint {
                detector: det,
                snr_db,
                frames: cfg.frames,
                symbol_errors,
                ser: symbol_errors as f64 / total_symbols as f64,
                ci_halfwidth: wilson_halfwidth(symbol_errors, total_symbols),
            });
        }
    }

    Ok(SweepResult {
        points,
        ddip_iteration_counts: iteration_counts,
        ddip_truncated_trials: truncated,
        symbols_per_frame: mn,
    })
}

/// Empirical CDF of the network stopping iteration.
pub fn iteration_cdf(sweep: &SweepResult) -> Result<Vec<(u32, f64)>> {
    if sweep.ddip_iteration_counts.is_empty() {
        return Err(Error::MissingData(
            "no ddip-bpic trials in sweep; iteration CDF is undefined".into(),
        ));
    }
    let mut sorted = sweep.ddip_iteration_counts.clone();
    sorted.sort_unstable();
    let total = sorted.len() as f64;
    let mut cdf = Vec::new();
    let mut seen = 0usize;
    let mut idx = 0usize;
    while idx < sorted.len() {
        let value = sorted[idx];
        while idx < sorted.len() && sorted[idx] == value {
            idx += 1;
            seen += 1;
        }
        cdf.push((value, seen as f64 / total));
    }
    Ok(cdf)
}

/// Median of the recorded stopping iterations.
pub fn median_iterations(counts: &[u32]) -> Option<f64> {
    if counts.is_empty() {
        return None;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid] as f64
    } else {
        (sorted[mid - 1] as f64 + sorted[mid] as f64) / 2.0
    })
}

/// Deployment operation-count orders per detector.
#[derive(Debug, Clone)]
pub struct ComplexityReport {
    pub m: usize,
    pub n: usize,
    pub bpic_iterations: usize,
    pub ddip_iterations: f64,
    /// `(detector, deployment op count)` rows.
    pub entries: Vec<(String, f64)>,
}

impl ComplexityReport {
    pub fn ops(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, ops)| *ops)
    }

    /// Operation-count ratio of another detector over `ddip-bpic`.
    pub fn ratio_over_ddip(&self, name: &str) -> Option<f64> {
        let ddip = self.ops("ddip-bpic")?;
        self.ops(name).map(|ops| ops / ddip)
    }
}

/// Evaluate the deployment complexity orders at the given sizes: cubic
/// `M^3N^3` terms for the matrix-inversion detectors, quadratic `M^2N^2`
/// per-iteration terms, with `T` detector iterations and `I` network fitting
/// iterations.
pub fn complexity_report(m: usize, n: usize, t: usize, i_mean: f64) -> ComplexityReport {
    let mn = (m * n) as f64;
    let mn2 = mn * mn;
    let mn3 = mn2 * mn;
    let t = t as f64;
    let entries = vec![
        ("mmse-bpic".to_string(), mn3 + mn2 * t),
        ("uamp".to_string(), mn3 + mn2 * t),
        ("ep".to_string(), mn3 * t),
        ("bpicnet".to_string(), mn3 + mn + mn2 * t),
        ("ddip-bpic".to_string(), mn2 * i_mean + mn2 * t),
    ];
    ComplexityReport {
        m,
        n,
        bpic_iterations: t as usize,
        ddip_iterations: i_mean,
        entries,
    }
}

/// `detector,snr_db,frames,symbol_errors,ser,ci_halfwidth` rows.
pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("detector,snr_db,frames,symbol_errors,ser,ci_halfwidth\n");
    for p in &sweep.points {
        out.push_str(&format!(
            "{},{},{},{},{:.6e},{:.6e}\n",
            p.detector.name(),
            p.snr_db,
            p.frames,
            p.symbol_errors,
            p.ser,
            p.ci_halfwidth
        ));
    }
    out
}

/// `I,cum_fraction` rows.
pub fn cdf_csv(cdf: &[(u32, f64)]) -> String {
    let mut out = String::from("I,cum_fraction\n");
    for (i, frac) in cdf {
        out.push_str(&format!("{i},{frac:.6}\n"));
    }
    out
}

/// `iteration,loss,varsigma` rows; fields are empty where a value was not
/// computed (loss on the stopping iteration, variance while the window
/// fills).
pub fn ddip_trace_csv(trace: &[DdipTracePoint]) -> String {
    let mut out = String::from("iteration,loss,varsigma\n");
    for p in trace {
        let loss = p.loss.map(|l| format!("{l:.6e}")).unwrap_or_default();
        let vs = p.varsigma.map(|v| format!("{v:.6e}")).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", p.iteration, loss, vs));
    }
    out
}

/// `detector,deployment_ops,ratio_over_ddip_bpic` rows.
pub fn complexity_csv(report: &ComplexityReport) -> String {
    let mut out = String::from("detector,deployment_ops,ratio_over_ddip_bpic\n");
    for (name, ops) in &report.entries {
        let ratio = report
            .ratio_over_ddip(name)
            .map(|r| format!("{r:.4}"))
            .unwrap_or_default();
        out.push_str(&format!("{name},{ops},{ratio}\n"));
    }
    out
}
