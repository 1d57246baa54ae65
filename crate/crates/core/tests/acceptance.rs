//! Release-gate suite. Each test covers one numbered criterion and prints a
//! single PASS line when it holds (run with `--nocapture` to see them all).

use patchforge::features::{extract, ExtractConfig};
use patchforge::geometry::{generate_candidate, generation_bounds, scale_design};
use patchforge::objectives::{
    u_bw_specific, u_least_squares, u_stage2, BandSpec, CenterTerm,
};
use patchforge::optimizer::update_radius;
use patchforge::pipeline::{
    achieved_band, benchmark, run_variable_fidelity, strategy_a_init, RunConfig, Strategy,
};
use patchforge::simulator::total_cost;
use patchforge::{FeaturePoint, FeatureSet, Fidelity, MockSimulator, Response, Simulator, SweepSpec};

fn pass(n: usize, what: &str) {
    println!("acceptance criterion {n} ({what}): PASS");
}

#[test]
fn criterion_01_radius_rule_exactness() {
    let rhos = [0.9, 0.1, 0.5, -1.0, 0.05];
    let mut delta = 1.0;
    let mut trace = Vec::new();
    let mut rejected = 0;
    for &rho in &rhos {
        delta = update_radius(delta, rho);
        trace.push(delta);
        if rho <= 0.0 {
            rejected += 1;
        }
    }
    assert_eq!(trace, vec![2.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 9.0, 2.0 / 27.0]);
    assert_eq!(rejected, 1);
    pass(1, "radius rule exactness");
}

#[test]
fn criterion_02_cost_ledger_reproduction() {
    assert!((total_cost(421, 61, 60.0, 110.0) - 290.6).abs() <= 0.05);
    assert!((total_cost(542, 110, 60.0, 110.0) - 405.6).abs() <= 0.05);
    pass(2, "cost ledger reproduction");
}

#[test]
fn criterion_03_objective_unit_values() {
    // Two minima at 6.3/6.6 GHz, one maximum at -8 dB, threshold -10.2.
    let band = BandSpec::new(6.2, 6.8, -10.2);
    let fp = |freq: f64, level: f64| FeaturePoint { freq, level };
    let fs = FeatureSet {
        minima: vec![fp(6.3, -15.0), fp(6.6, -14.0)],
        maxima: vec![fp(6.45, -8.0)],
        crossings: vec![],
        window: (6.2, 6.8),
    };
    let expected = (2.2_f64).powi(2) + 100.0 * (0.1_f64.powi(2) + 0.2_f64.powi(2)).sqrt();
    let got = u_bw_specific(&fs, &band, None);
    assert!((got - expected).abs() <= 1e-6 && (got - 27.20).abs() <= 0.005);

    let band2 = BandSpec::new(5.35, 5.65, -10.5).with_center(5.5);
    let fs2 = FeatureSet {
        minima: vec![fp(5.1, -14.0), fp(5.5, -16.0), fp(5.9, -13.0)],
        maxima: vec![fp(5.3, -11.0), fp(5.7, -12.0)],
        crossings: vec![fp(5.2, -10.5), fp(5.8, -10.5)],
        window: (4.9, 6.1),
    };
    assert!((u_stage2(&fs2, &band2, CenterTerm::Literal, None) - 5.2).abs() <= 1e-12);

    let r = Response {
        freqs: vec![5.0, 6.0],
        levels: vec![-8.0, -12.0],
        fidelity: Fidelity::High,
        cost_units: 0.0,
    };
    let band3 = BandSpec::new(5.0, 6.0, -10.0);
    assert!((u_least_squares(&r, &band3).unwrap() - 2.0).abs() <= 1e-12);
    pass(3, "objective unit values");
}

#[test]
fn criterion_04_feature_extraction_oracle() {
    let sweep = SweepSpec::new(3.0, 9.0, 601);
    let window = (3.2, 8.8);
    let sim = MockSimulator::default();
    let gb = generation_bounds(10, 25.0, 35.0);
    let raw_cfg = ExtractConfig {
        parabolic_refine: false,
    };
    let mut checked = 0;
    for seed in 1..=1000u64 {
        let Ok(x) = generate_candidate(10, seed, &gb) else {
            continue;
        };
        let r = sim.simulate(&x, &sweep, Fidelity::High).unwrap();
        let raw = extract(&r, window, -10.0, &raw_cfg).unwrap();
        // Exhaustive grid-scan oracle over in-window interior samples.
        let idx: Vec<usize> = (0..r.freqs.len())
            .filter(|&i| r.freqs[i] >= window.0 && r.freqs[i] <= window.1)
            .collect();
        let mut oracle_minima = Vec::new();
        let mut oracle_maxima = Vec::new();
        for w in 1..idx.len() - 1 {
            let (a, b, c) = (r.levels[idx[w - 1]], r.levels[idx[w]], r.levels[idx[w + 1]]);
            if b < a && b < c {
                oracle_minima.push((r.freqs[idx[w]], b));
            }
            if b > a && b > c {
                oracle_maxima.push((r.freqs[idx[w]], b));
            }
        }
        let as_pairs =
            |v: &[FeaturePoint]| -> Vec<(f64, f64)> { v.iter().map(|p| (p.freq, p.level)).collect() };
        assert_eq!(as_pairs(&raw.minima), oracle_minima, "seed {seed}");
        assert_eq!(as_pairs(&raw.maxima), oracle_maxima, "seed {seed}");
        // Refined positions stay within half a grid step of the raw ones.
        let refined = extract(&r, window, -10.0, &ExtractConfig::default()).unwrap();
        let step = (9.0 - 3.0) / 600.0;
        for (a, b) in refined.minima.iter().zip(&raw.minima) {
            assert!((a.freq - b.freq).abs() <= 0.5 * step + 1e-12);
        }
        checked += 1;
    }
    assert!(checked >= 990, "only {checked} generated designs");
    // Threshold crossings against closed-form Lorentzian positions.
    for k in 1..=50 {
        let center = 5.0 + 0.03 * k as f64;
        let depth = -12.0 - 0.1 * k as f64;
        let width = 0.08 + 0.002 * k as f64;
        let freqs: Vec<f64> = (0..2001).map(|i| 4.0 + 0.0015 * i as f64).collect();
        let levels: Vec<f64> = freqs
            .iter()
            .map(|&f| depth / (1.0 + ((f - center) / width).powi(2)))
            .collect();
        let r = Response {
            freqs,
            levels,
            fidelity: Fidelity::High,
            cost_units: 0.0,
        };
        let fs = extract(&r, (4.2, 6.8), -10.0, &ExtractConfig::default()).unwrap();
        let off = width * (depth / -10.0 - 1.0).sqrt();
        assert_eq!(fs.crossings.len(), 2);
        assert!((fs.crossings[0].freq - (center - off)).abs() <= 1e-3);
        assert!((fs.crossings[1].freq - (center + off)).abs() <= 1e-3);
    }
    pass(4, "feature extraction oracle equivalence");
}

#[test]
fn criterion_05_jacobian_fidelity() {
    use patchforge::geometry::{build_bounds, DesignVector};
    use patchforge::optimizer::{build_surrogate, FdPolicy};

    // Clearly asymmetric outline: keeps the shape descriptors away from
    // zero, where the modal model's magnitude terms are non-smooth.
    let x = DesignVector {
        c: 30.0,
        rho_f: 0.2,
        phi_f: 1.0,
        rho: vec![0.7, 0.45, 0.6, 0.35, 0.65, 0.5, 0.75, 0.4],
        phi: vec![0.3, 0.5, 0.4, 0.6, 0.45, 0.55, 0.35, 0.5],
    };
    let (bounds, x) = build_bounds(&x, 25.0, 35.0).unwrap();
    let sim = MockSimulator::default();
    let sweep = SweepSpec::new(2.0, 9.0, 2801);
    let window = (2.2, 8.8);
    let eval = |x: &DesignVector| {
        let r = sim.simulate(x, &sweep, Fidelity::High).unwrap();
        let fs = extract(&r, window, -10.0, &ExtractConfig::default()).unwrap();
        (r, fs)
    };
    let center = eval(&x);
    let fd = FdPolicy {
        relative_step: 0.005,
        absolute_floor: 0.002,
    };
    let s = build_surrogate(&x, &center, &bounds, &fd, &mut |x| {
        Ok(eval(x))
    })
    .unwrap();
    let flat = x.to_flat();
    let n_min = center.1.minima.len();
    assert!(n_min >= 2, "need stable features, got {n_min}");
    let mut stable = 0;
    for d in 0..flat.len() {
        let h = fd.step(flat[d], d, &bounds);
        let probe = |v: f64| {
            let mut y = flat.clone();
            y[d] = v;
            eval(&DesignVector::from_flat(&y).unwrap()).1
        };
        let (plus, minus) = (probe(flat[d] + h), probe(flat[d] - h));
        if plus.minima.len() != n_min || minus.minima.len() != n_min {
            continue; // feature count not stable along this column
        }
        stable += 1;
        let mut fd_col = Vec::new();
        let mut cd_col = Vec::new();
        for (i, p0) in center.1.minima.iter().enumerate() {
            let near = |fs: &FeatureSet| {
                fs.minima
                    .iter()
                    .min_by(|a, b| {
                        (a.freq - p0.freq)
                            .abs()
                            .partial_cmp(&(b.freq - p0.freq).abs())
                            .unwrap()
                    })
                    .copied()
                    .unwrap()
            };
            let (pp, pm) = (near(&plus), near(&minus));
            fd_col.push(s.minima.freq[i][d]);
            fd_col.push(s.minima.level[i][d]);
            cd_col.push((pp.freq - pm.freq) / (2.0 * h));
            cd_col.push((pp.level - pm.level) / (2.0 * h));
        }
        let diff: f64 = fd_col
            .iter()
            .zip(&cd_col)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = cd_col.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            diff <= 0.05 * norm + 1e-6,
            "column {d}: fd-cd {diff} vs 5% of {norm}"
        );
    }
    assert!(stable >= flat.len() - 2, "only {stable} stable columns");
    pass(5, "Jacobian vs central-difference oracle");
}

#[test]
fn criterion_06_scaling_identity() {
    let sim = MockSimulator::default();
    let gb = generation_bounds(8, 25.0, 35.0);
    let mut max_err: f64 = 0.0;
    let mut n = 0;
    let mut seed = 1u64;
    while n < 50 {
        let Ok(x) = generate_candidate(8, seed, &gb) else {
            seed += 1;
            continue;
        };
        seed += 1;
        n += 1;
        for c in [0.5, 0.8, 1.25, 2.0] {
            let scaled = scale_design(&x, c);
            let sweep = SweepSpec::new(3.0, 9.0, 301);
            let r_scaled = sim.simulate(&scaled, &sweep, Fidelity::High).unwrap();
            let matched = SweepSpec::new(3.0 * c, 9.0 * c, 301);
            let r_ref = sim.simulate(&x, &matched, Fidelity::High).unwrap();
            for (a, b) in r_scaled.levels.iter().zip(&r_ref.levels) {
                max_err = max_err.max((a - b).abs());
            }
        }
    }
    assert!(max_err < 1e-9, "max scaling mismatch {max_err} dB");
    pass(6, "geometry-frequency scaling identity");
}

fn case1_config(seed: u64) -> RunConfig {
    RunConfig {
        strategy: Strategy::BandwidthSpecific,
        l: 25,
        band: BandSpec {
            beta: 20.0,
            ..BandSpec::new(6.2, 6.8, -10.2)
        },
        n_candidates: 200,
        c_low: 25.0,
        c_high: 35.0,
        broad_sweep: None,
        narrow_sweep: None,
        seed,
        budget_low: 700,
        budget_high: 80,
        benchmark_budget_high: 250,
        parallel_workers: 1,
        center_term: CenterTerm::Literal,
        feature_window: None,
    }
}

fn case2_config(seed: u64) -> RunConfig {
    RunConfig {
        strategy: Strategy::BandwidthEnhanced,
        l: 10,
        band: BandSpec::new(5.35, 5.65, -10.5).with_center(5.5),
        n_candidates: 200,
        c_low: 30.0,
        c_high: 40.0,
        broad_sweep: None,
        narrow_sweep: None,
        seed,
        budget_low: 700,
        budget_high: 80,
        benchmark_budget_high: 250,
        parallel_workers: 1,
        center_term: CenterTerm::Centered,
        feature_window: None,
    }
}

#[test]
fn criterion_07_strategy_a_end_to_end() {
    let mut successes = 0;
    for seed in 1..=10u64 {
        let sim = MockSimulator::default();
        let result = run_variable_fidelity(&case1_config(seed), &sim).unwrap();
        assert!(
            result.cost.total_equivalent <= 500.0,
            "seed {seed}: cost {}",
            result.cost.total_equivalent
        );
        if result.in_band_max_db <= -10.0 {
            successes += 1;
        }
    }
    assert!(successes >= 9, "only {successes}/10 seeds met the band spec");
    pass(7, "strategy A end-to-end");
}

#[test]
fn criterion_08_strategy_b_end_to_end() {
    let f_0 = 5.5;
    let mut successes = 0;
    for seed in 1..=10u64 {
        let sim = MockSimulator::default();
        let result = run_variable_fidelity(&case2_config(seed), &sim).unwrap();
        let initial_bw = achieved_band(&result.response_x0, f_0)
            .map(|(lo, hi)| hi - lo)
            .unwrap_or(0.0);
        let final_ok = match result.achieved_band {
            Some((lo, hi)) => lo <= f_0 && f_0 <= hi && (hi - lo) >= 1.5 * initial_bw,
            None => false,
        };
        if final_ok {
            successes += 1;
        }
    }
    assert!(
        successes >= 8,
        "only {successes}/10 seeds enhanced bandwidth 1.5x"
    );
    pass(8, "strategy B end-to-end");
}

#[test]
fn criterion_09_benchmark_harness() {
    let mut cfg = case1_config(9);
    cfg.n_candidates = 20;
    cfg.budget_low = 150;
    let sim = MockSimulator::default();
    let table = benchmark(&cfg, &sim).unwrap();
    assert_eq!(table.rows.len(), 6);
    let csv = table.to_csv();
    assert!(csv.starts_with("method,n_low,n_high,total_cost_rf_eq,wall_s,u0_db,note"));
    let feature_high = &table.rows[2];
    let pipeline = &table.rows[5];
    assert!(
        feature_high.total_cost > pipeline.total_cost,
        "single-fidelity feature method {} vs pipeline {}",
        feature_high.total_cost,
        pipeline.total_cost
    );
    pass(9, "benchmark harness");
}

#[test]
fn criterion_10_determinism_and_parallel_equivalence() {
    let mut cfg = case1_config(5);
    cfg.n_candidates = 40;
    cfg.budget_low = 250;
    cfg.budget_high = 25;
    let run = |cfg: &RunConfig| {
        let sim = MockSimulator::default();
        serde_json::to_string(&run_variable_fidelity(cfg, &sim).unwrap()).unwrap()
    };
    assert_eq!(run(&cfg), run(&cfg), "repeat runs differ");
    let pick = |workers: usize| {
        let mut c = cfg.clone();
        c.parallel_workers = workers;
        let sim = MockSimulator::default();
        strategy_a_init(&c, &sim).unwrap()
    };
    let reference = pick(1);
    for workers in [2, 4, 8] {
        assert_eq!(pick(workers), reference, "worker count {workers}");
    }
    pass(10, "determinism and parallel equivalence");
}
