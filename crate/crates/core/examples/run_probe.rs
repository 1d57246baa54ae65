use patchforge::features::{extract, ExtractConfig};
use patchforge::objectives::{classifier_score, BandSpec, CenterTerm};
use patchforge::pipeline::*;
use patchforge::{Fidelity, MockSimulator, Simulator, SweepSpec};

fn main() {
    for seed in 1..=10u64 {
        let cfg = RunConfig {
            strategy: Strategy::BandwidthSpecific,
            l: 25,
            band: BandSpec { beta: 20.0, ..BandSpec::new(6.2, 6.8, -10.2) },
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
        };
        let sim = MockSimulator::default();
        let r = run_variable_fidelity(&cfg, &sim).unwrap();
        let narrow = cfg.narrow_sweep();
        let x0_high = sim.simulate(&r.x0, &narrow, Fidelity::High).unwrap();
        let s0 = classifier_score(&x0_high, &cfg.band).unwrap();
        let fs0 = extract(&x0_high, cfg.feature_window(), -10.2, &ExtractConfig::default()).unwrap();
        let fsf = &r.features_x_f_star;
        println!(
            "seed {seed}: init max {s0:+.2} q0 {} | final max {:+.2} qf {} | lowTR iters {} accepted {} | highTR iters {} | cost {:.1}",
            fs0.minima.len(),
            r.in_band_max_db,
            fsf.minima.len(),
            r.low_tr_log.len(),
            r.low_tr_log.iter().filter(|i| i.accepted).count(),
            r.high_tr_log.len(),
            r.cost.total_equivalent
        );
        println!(
            "   x0 minima {:?}",
            fs0.minima.iter().map(|p| (p.freq * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
        println!(
            "   xf minima {:?}",
            fsf.minima.iter().map(|p| ((p.freq * 100.0).round() / 100.0, (p.level).round())).collect::<Vec<_>>()
        );
    }
}
