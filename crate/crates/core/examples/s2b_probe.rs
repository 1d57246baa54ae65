use patchforge::features::{extract, ExtractConfig};
use patchforge::objectives::{BandSpec, CenterTerm};
use patchforge::pipeline::*;
use patchforge::{Fidelity, MockSimulator, Simulator};

fn main() {
    let cfg = RunConfig {
        strategy: Strategy::BandwidthEnhanced,
        l: 10,
        band: BandSpec::new(5.35, 5.65, -10.5).with_center(5.5),
        n_candidates: 200,
        c_low: 30.0,
        c_high: 40.0,
        broad_sweep: None,
        narrow_sweep: None,
        seed: 1,
        budget_low: 700,
        budget_high: 80,
        benchmark_budget_high: 250,
        parallel_workers: 1,
        center_term: CenterTerm::Centered,
        feature_window: None,
    };
    let sim = MockSimulator::default();
    let r = run_variable_fidelity(&cfg, &sim).unwrap();
    let narrow = cfg.narrow_sweep();
    for (name, x) in [("x0", &r.x0), ("x_c*", &r.x_c_star), ("x_f*", &r.x_f_star)] {
        for fid in [Fidelity::Low, Fidelity::High] {
            let resp = sim.simulate(x, &narrow, fid).unwrap();
            let fs = extract(&resp, cfg.feature_window(), -10.5, &ExtractConfig::default()).unwrap();
            let mins: Vec<(f64, f64)> = fs
                .minima
                .iter()
                .map(|p| ((p.freq * 100.0).round() / 100.0, (p.level * 10.0).round() / 10.0))
                .collect();
            println!("{name} {fid:?}: minima {mins:?}");
        }
        println!("  c={} rho_f={} phi_f={}", x.c, x.rho_f, x.phi_f);
    }
}
