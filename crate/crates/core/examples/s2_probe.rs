use patchforge::objectives::{BandSpec, CenterTerm};
use patchforge::pipeline::*;
use patchforge::MockSimulator;

fn main() {
    for seed in [1u64] {
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
        println!("seed {seed}: final max {:+.2}", r.in_band_max_db);
        for rec in &r.low_tr_stage2_log {
            println!(
                "  s2 it {:>2} delta {:.4} rho {:+.3} u {:+.4} acc {} q {} p {}",
                rec.iteration, rec.delta, rec.rho, rec.u_true, rec.accepted, rec.n_minima, rec.n_maxima
            );
        }
        for rec in &r.high_tr_log {
            println!(
                "  hi it {:>2} delta {:.4} rho {:+.3} u {:+.4} acc {} q {} p {}",
                rec.iteration, rec.delta, rec.rho, rec.u_true, rec.accepted, rec.n_minima, rec.n_maxima
            );
        }
    }
}
