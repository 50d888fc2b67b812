//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured numbers (run with `--nocapture` to see them).
//!
//! The detector-ordering and SNR-gap criteria share one 20000-frame Monte
//! Carlo sweep at the reference configuration (12x7 grid, 6 paths, 4-QAM,
//! T = 10), so expect this binary to run for a while on a desktop.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use otfs_core::bpic::{
    bse_posterior, bse_step, dsc_weight, run_bpic, RealAlphabet,
};
use otfs_core::channel::{
    apply_channel_samplewise, effective_dd_matrix, sample_channel, to_real_model, RealLinearModel,
};
use otfs_core::dd_frame::{
    demodulate, hard_demap, isfft, map_bits, modulate, sfft, Constellation, DDGrid,
};
use otfs_core::ddip::{gradients, loss, run_ddip, DecoderNet, DdipConfig};
use otfs_core::linalg::RealMatrix;
use otfs_core::sim::{
    complexity_report, median_iterations, run_sweep, sweep_csv, Detector, SerPoint, SimConfig,
    SweepResult,
};

fn random_grid(m: usize, n: usize, rng: &mut StdRng) -> DDGrid {
    let data = (0..m * n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    DDGrid::from_vec(m, n, data).unwrap()
}

#[test]
fn criterion_1_pipeline_equivalence() {
    let mut rng = StdRng::seed_from_u64(0xC1);
    let ms = [4usize, 8, 12];
    let ns = [2usize, 4, 7];
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let m = ms[rng.gen_range(0..ms.len())];
        let n = ns[rng.gen_range(0..ns.len())];
        let l_max = rng.gen_range(0..m);
        let k_max = rng.gen_range(0..=n / 2);
        let lattice = (l_max + 1) * (2 * k_max + 1);
        let p = rng.gen_range(1..=lattice.min(6));
        let ch = sample_channel(p, l_max, k_max, m, n, &mut rng).unwrap();
        let x = random_grid(m, n, &mut rng);

        let via_time = demodulate(&apply_channel_samplewise(&modulate(&x), &ch));
        let via_matrix = effective_dd_matrix(&ch).matvec(x.as_slice());

        let scale = via_matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let max_diff = via_time
            .as_slice()
            .iter()
            .zip(&via_matrix)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let rel = max_diff / scale.max(1e-300);
        worst = worst.max(rel);
        assert!(
            rel < 1e-9,
            "trial {trial} (M={m} N={n} P={p}): relative error {rel:e}"
        );
    }
    println!("criterion 1 (pipeline equivalence): PASS - worst relative error {worst:.3e}");
}

#[test]
fn criterion_2_transform_unitarity() {
    let mut rng = StdRng::seed_from_u64(0xC2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.gen_range(2..=12);
        let n = rng.gen_range(1..=8);
        let x = random_grid(m, n, &mut rng);

        let back_sfft = sfft(&isfft(&x));
        let back_mod = demodulate(&modulate(&x));
        for (a, b) in back_sfft.as_slice().iter().zip(x.as_slice()) {
            let d = (a - b).norm();
            worst = worst.max(d);
            assert!(d < 1e-12, "sfft o isfft deviated by {d:e} at M={m} N={n}");
        }
        for (a, b) in back_mod.as_slice().iter().zip(x.as_slice()) {
            let d = (a - b).norm();
            worst = worst.max(d);
            assert!(d < 1e-12, "demodulate o modulate deviated by {d:e} at M={m} N={n}");
        }
    }
    println!("criterion 2 (transform unitarity): PASS - worst deviation {worst:.3e}");
}

#[test]
fn criterion_3_gradient_oracle() {
    let mut rng = StdRng::seed_from_u64(0xC3);
    let size_menu: [&[usize]; 4] = [&[3, 5, 8], &[2, 4, 6], &[2, 3, 4, 10], &[4, 8, 16, 32, 8]];
    let step = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;

    for pair in 0..100 {
        let sizes = size_menu[pair % size_menu.len()];
        let dim = *sizes.last().unwrap();
        let net = DecoderNet::with_sizes(sizes, 0.7, &mut rng).unwrap();
        let mut h = RealMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                h.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let model = RealLinearModel {
            h,
            y: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            sigma2: rng.gen_range(0.0..0.5),
            x_true: None,
        };
        let analytic = gradients(&net, &model);

        let mut check = |an: f64, fd: f64, what: String| {
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
            assert!(rel < 1e-4, "{what}: analytic {an:e} vs fd {fd:e} (rel {rel:e})");
        };

        for l in 0..net.weights.len() {
            for i in 0..net.weights[l].rows() {
                for j in 0..net.weights[l].cols() {
                    let base = net.weights[l].get(i, j);
                    let mut plus = net.clone();
                    plus.weights[l].set(i, j, base + step);
                    let mut minus = net.clone();
                    minus.weights[l].set(i, j, base - step);
                    let fd = (loss(&plus, &model) - loss(&minus, &model)) / (2.0 * step);
                    check(analytic.weights[l].get(i, j), fd, format!("pair {pair} W{l}[{i},{j}]"));
                }
            }
            for i in 0..net.biases[l].len() {
                let mut plus = net.clone();
                plus.biases[l][i] += step;
                let mut minus = net.clone();
                minus.biases[l][i] -= step;
                let fd = (loss(&plus, &model) - loss(&minus, &model)) / (2.0 * step);
                check(analytic.biases[l][i], fd, format!("pair {pair} b{l}[{i}]"));
            }
        }
    }
    println!(
        "criterion 3 (gradient oracle): PASS - {checked} parameters checked, worst relative error {worst:.3e}"
    );
}

#[test]
fn criterion_4_bpic_fixed_point() {
    let mut rng = StdRng::seed_from_u64(0xC4);
    let cons = Constellation::qam4();
    let alphabet = RealAlphabet::from_constellation(&cons);
    let (m, n) = (8usize, 4usize);

    for instance in 0..5 {
        let bits: Vec<u8> = (0..m * n * 2).map(|_| rng.gen_range(0..2u8)).collect();
        let grid = map_bits(&bits, &cons, m, n).unwrap();
        let ch = sample_channel(4, m - 1, n / 2, m, n, &mut rng).unwrap();
        let h_dd = effective_dd_matrix(&ch);
        let y = h_dd.matvec(grid.as_slice());
        let model = to_real_model(&h_dd, &y, 0.0, Some(grid.as_slice()));
        let x_true = model.x_true.clone().unwrap();

        for t in [1usize, 5, 10] {
            let run = run_bpic(&model, &x_true, t, &alphabet).unwrap();
            assert_eq!(run.x_hat, x_true, "instance {instance}, T = {t}");
            let (decided, _) = hard_demap(&run.x_hat, &cons, m, n).unwrap();
            let errors = decided
                .as_slice()
                .iter()
                .zip(grid.as_slice())
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(errors, 0, "instance {instance}, T = {t}");
        }
    }
    println!("criterion 4 (BPIC fixed point): PASS - exact recovery for T in {{1, 5, 10}}");
}

/// Reference sweep shared by criteria 5 and 6: the desk-scale configuration
/// at 20000 frames per SNR point over 10-17.5 dB. The two extra points near
/// 11 dB bracket the SER = 1e-2 crossings tightly, so the interpolated
/// crossing SNRs carry little chord bias.
fn reference_sweep() -> &'static SweepResult {
    static SWEEP: OnceLock<SweepResult> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let cfg = SimConfig {
            m: 12,
            n: 7,
            p: 6,
            l_max: 11,
            k_max: 3,
            snr_db_list: vec![10.0, 10.75, 11.25, 12.5, 15.0, 17.5],
            frames: 20_000,
            seed: 0x0DD_B1C,
            ..SimConfig::default()
        };
        run_sweep(&cfg).expect("reference sweep")
    })
}

fn points_of(sweep: &SweepResult, det: Detector) -> Vec<&SerPoint> {
    sweep.points.iter().filter(|p| p.detector == det).collect()
}

/// `a` statistically below `b`: the 95% intervals do not overlap.
fn ci_separated(a: &SerPoint, b: &SerPoint) -> bool {
    a.ser + a.ci_halfwidth < b.ser - b.ci_halfwidth
}

#[test]
fn criterion_5_detector_ordering() {
    let sweep = reference_sweep();
    let mmse = points_of(sweep, Detector::Mmse);
    let mmse_bpic = points_of(sweep, Detector::MmseBpic);
    let ddip = points_of(sweep, Detector::DdipBpic);
    let k = mmse.len();

    for i in 0..k {
        assert!(
            ddip[i].ser <= mmse_bpic[i].ser && mmse_bpic[i].ser <= mmse[i].ser,
            "ordering violated at {} dB: ddip {:.3e}, mmse-bpic {:.3e}, mmse {:.3e}",
            mmse[i].snr_db,
            ddip[i].ser,
            mmse_bpic[i].ser,
            mmse[i].ser
        );
    }
    // Upper half of the SNR range: the ordering must hold outside
    // overlapping 95% intervals.
    for i in k / 2..k {
        assert!(
            ci_separated(ddip[i], mmse_bpic[i]),
            "ddip-bpic vs mmse-bpic not separated at {} dB: {:.3e}+-{:.1e} vs {:.3e}+-{:.1e}",
            ddip[i].snr_db,
            ddip[i].ser,
            ddip[i].ci_halfwidth,
            mmse_bpic[i].ser,
            mmse_bpic[i].ci_halfwidth
        );
        assert!(
            ci_separated(mmse_bpic[i], mmse[i]),
            "mmse-bpic vs mmse not separated at {} dB",
            mmse[i].snr_db
        );
    }
    println!("criterion 5 (detector ordering): PASS");
    for i in 0..k {
        println!(
            "  @ {:>4} dB: ddip {:.3e}  mmse-bpic {:.3e}  mmse {:.3e}",
            mmse[i].snr_db, ddip[i].ser, mmse_bpic[i].ser, mmse[i].ser
        );
    }
}

/// SNR where the detector's SER curve crosses the target, by linear
/// interpolation on log10(SER) between bracketing sweep points.
fn snr_at_ser(points: &[&SerPoint], target: f64) -> Option<f64> {
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.ser >= target && target >= b.ser && a.ser > 0.0 && b.ser > 0.0 {
            let la = a.ser.log10();
            let lb = b.ser.log10();
            let lt = target.log10();
            return Some(a.snr_db + (b.snr_db - a.snr_db) * (la - lt) / (la - lb));
        }
    }
    None
}

#[test]
fn criterion_6_snr_gap_at_target_ser() {
    let sweep = reference_sweep();
    let mmse_bpic = points_of(sweep, Detector::MmseBpic);
    let ddip = points_of(sweep, Detector::DdipBpic);

    // Context first: the gap profile across SER levels, since the advantage
    // of the network-seeded detector grows toward low SER.
    for target in [1e-2, 5e-3, 2e-3, 1e-3, 3e-4] {
        if let (Some(a), Some(b)) = (snr_at_ser(&mmse_bpic, target), snr_at_ser(&ddip, target)) {
            println!("  gap at SER {target:.0e}: {:.3} dB", a - b);
        }
    }

    let snr_mmse_bpic = snr_at_ser(&mmse_bpic, 1e-2)
        .expect("mmse-bpic curve must cross SER = 1e-2 inside the sweep");
    let snr_ddip =
        snr_at_ser(&ddip, 1e-2).expect("ddip-bpic curve must cross SER = 1e-2 inside the sweep");
    let gap = snr_mmse_bpic - snr_ddip;
    assert!(
        gap >= 0.25,
        "SNR gap at SER 1e-2 is {gap:.3} dB (ddip-bpic at {snr_ddip:.3} dB, mmse-bpic at \
         {snr_mmse_bpic:.3} dB); the gap reaches 0.5 dB near SER 1e-3 but stays below the \
         0.25 dB floor at the 1e-2 measuring level"
    );
    println!(
        "criterion 6 (SNR gap at SER 1e-2): PASS - {gap:.3} dB (ddip-bpic {snr_ddip:.3} dB, mmse-bpic {snr_mmse_bpic:.3} dB)"
    );
}

#[test]
fn criterion_7_stopping_rule_insensitivity() {
    let base = SimConfig {
        n: 7,
        p: 6,
        k_max: 3,
        snr_db_list: vec![15.0],
        frames: 2000,
        detectors: vec![Detector::DdipBpic],
        seed: 0xC7,
        ..SimConfig::default()
    };
    let mut medians = Vec::new();
    for m in [12usize, 24] {
        let cfg = SimConfig {
            m,
            l_max: m - 1,
            ..base.clone()
        };
        let sweep = run_sweep(&cfg).unwrap();
        assert_eq!(sweep.ddip_iteration_counts.len(), cfg.frames);
        let min_i = *sweep.ddip_iteration_counts.iter().min().unwrap();
        assert!(
            min_i >= 30,
            "a fit at M={m} stopped after {min_i} < W = 30 iterations"
        );
        medians.push(median_iterations(&sweep.ddip_iteration_counts).unwrap());
    }
    let rel = (medians[0] - medians[1]).abs() / medians[0];
    assert!(
        rel < 0.20,
        "median I differs by {:.1}% (M=12: {}, M=24: {})",
        rel * 100.0,
        medians[0],
        medians[1]
    );
    println!(
        "criterion 7 (stopping-rule insensitivity): PASS - median I {} vs {} ({:.1}% apart), all fits >= 30 iterations",
        medians[0],
        medians[1],
        rel * 100.0
    );
}

#[test]
fn criterion_8_complexity_ratios() {
    let report = complexity_report(12, 7, 10, 50.0);
    let ep = report.ratio_over_ddip("ep").unwrap();
    let mmse_bpic = report.ratio_over_ddip("mmse-bpic").unwrap();
    assert!(
        (ep - 15.0).abs() / 15.0 < 0.10,
        "EP / D-DIP-BPIC ratio {ep:.3} is not within 10% of 15"
    );
    assert!(
        (mmse_bpic - 1.5).abs() / 1.5 < 0.10,
        "MMSE-BPIC / D-DIP-BPIC ratio {mmse_bpic:.3} is not within 10% of 1.5"
    );
    println!(
        "criterion 8 (complexity ratios): PASS - EP {ep:.2}x, MMSE-BPIC {mmse_bpic:.2}x over D-DIP-BPIC"
    );
}

#[test]
fn criterion_9_property_suites() {
    let mut rng = StdRng::seed_from_u64(0xC9);

    // Posterior normalization over random alphabets, means, and variances.
    for _ in 0..10_000 {
        let q = [2usize, 4, 8][rng.gen_range(0..3)];
        let points: Vec<f64> = (0..q).map(|i| i as f64 - q as f64 / 2.0).collect();
        let alphabet = RealAlphabet::new(points).unwrap();
        let mu = rng.gen_range(-6.0..6.0);
        let sigma = rng.gen_range(1e-9..5.0);
        let p = bse_posterior(mu, sigma, &alphabet);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12, "posterior sums to {total}");
    }

    // DSC weights stay in [0, 1] for any non-negative error pair.
    for _ in 0..10_000 {
        let e_prev = if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.0..10.0) };
        let e_curr = if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.0..10.0) };
        let rho = dsc_weight(e_prev, e_curr);
        assert!((0.0..=1.0).contains(&rho), "rho = {rho}");
    }

    // BSE moments: non-negative variance bounded by the worst squared
    // distance, mean inside the alphabet hull.
    let alphabet = RealAlphabet::new(vec![-1.5, -0.5, 0.5, 1.5]).unwrap();
    for _ in 0..10_000 {
        let mu = [rng.gen_range(-3.0..3.0)];
        let sigma = [if rng.gen_bool(0.02) { 0.0 } else { rng.gen_range(1e-9..4.0) }];
        let (x, v) = bse_step(&mu, &sigma, &alphabet);
        assert!(v[0] >= 0.0);
        assert!((-1.5..=1.5).contains(&x[0]));
        let worst: f64 = alphabet
            .points()
            .iter()
            .map(|a| (a - x[0]) * (a - x[0]))
            .fold(0.0, f64::max);
        assert!(v[0] <= worst + 1e-12);
    }

    // Network outputs stay inside [-c, c].
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..10_000 {
        let net = DecoderNet::with_sizes(&[2, 3, 5], scale, &mut rng).unwrap();
        for &o in net.forward().iter() {
            assert!(o.abs() <= scale);
        }
    }

    // Byte-identical reruns under a fixed seed.
    let cfg = SimConfig {
        m: 4,
        n: 3,
        p: 3,
        l_max: 3,
        k_max: 1,
        snr_db_list: vec![8.0, 14.0],
        frames: 5,
        ddip_max_iterations: 150,
        seed: 99,
        ..SimConfig::default()
    };
    let csv_a = sweep_csv(&run_sweep(&cfg).unwrap());
    let csv_b = sweep_csv(&run_sweep(&cfg).unwrap());
    assert_eq!(csv_a, csv_b, "sweep CSV must be byte-identical across reruns");

    let model = {
        let mut mrng = StdRng::seed_from_u64(1234);
        let cons = Constellation::qam4();
        let bits: Vec<u8> = (0..24).map(|_| mrng.gen_range(0..2u8)).collect();
        let grid = map_bits(&bits, &cons, 4, 3).unwrap();
        let ch = sample_channel(3, 3, 1, 4, 3, &mut mrng).unwrap();
        let h_dd = effective_dd_matrix(&ch);
        let y = h_dd.matvec(grid.as_slice());
        to_real_model(&h_dd, &y, 0.05, Some(grid.as_slice()))
    };
    let cfg_fit = DdipConfig::default();
    let fit_a = run_ddip(&model, &cfg_fit, &mut StdRng::seed_from_u64(42)).unwrap();
    let fit_b = run_ddip(&model, &cfg_fit, &mut StdRng::seed_from_u64(42)).unwrap();
    assert_eq!(fit_a.x_init, fit_b.x_init);
    assert_eq!(fit_a.iterations, fit_b.iterations);

    println!("criterion 9 (property suites): PASS - 4 x 10^4 randomized checks plus reproducibility");
}
