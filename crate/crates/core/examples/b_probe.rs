use patchforge::objectives::{BandSpec, CenterTerm};
use patchforge::pipeline::*;
use patchforge::MockSimulator;
use patchforge::simulator::MockModalModel;

fn main() {
    for seed in 1..=10u64 {
        let cfg = RunConfig {
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
        };
        let sim = MockSimulator::default();
        let r = run_variable_fidelity(&cfg, &sim).unwrap();
        let b0 = achieved_band(&r.response_x0, 5.5);
        let bf = r.achieved_band;
        let model = MockModalModel::from_design(&r.x0).unwrap();
        let m0: Vec<(f64, f64)> = model
            .modes
            .iter()
            .filter(|m| m.freq > 4.3 && m.freq < 6.9)
            .map(|m| ((m.freq * 100.0).round() / 100.0, m.depth.round()))
            .collect();
        let mf: Vec<(f64, f64)> = r
            .features_x_f_star
            .minima
            .iter()
            .map(|p| ((p.freq * 100.0).round() / 100.0, (p.level).round()))
            .collect();
        println!(
            "seed {seed}: b0 {:?} bf {:?} | m0 {:?} -> mf {:?} | s1 {} s2 {} (acc {}) high {} | max {:+.2} cost {:.1}",
            b0.map(|(a, b)| ((a * 100.0).round() / 100.0, (b * 100.0).round() / 100.0)),
            bf.map(|(a, b)| ((a * 100.0).round() / 100.0, (b * 100.0).round() / 100.0)),
            m0,
            mf,
            r.low_tr_log.len(),
            r.low_tr_stage2_log.len(),
            r.low_tr_stage2_log.iter().filter(|i| i.accepted).count(),
            r.high_tr_log.len(),
            r.in_band_max_db,
            r.cost.total_equivalent
        );
    }
}
