use patchforge::objectives::{BandSpec, CenterTerm};
use patchforge::pipeline::*;
use patchforge::MockSimulator;

fn main() {
    for seed in [3u64, 5, 9] {
        for n in [8usize, 20] {
            let cfg = RunConfig {
                strategy: Strategy::BandwidthSpecific,
                l: 25,
                band: BandSpec { beta: 20.0, ..BandSpec::new(6.2, 6.8, -10.2) },
                n_candidates: n,
                c_low: 25.0,
                c_high: 35.0,
                broad_sweep: None,
                narrow_sweep: None,
                seed,
                budget_low: 150,
                budget_high: 80,
                benchmark_budget_high: 250,
                parallel_workers: 1,
                center_term: CenterTerm::Literal,
                feature_window: None,
            };
            let sim = MockSimulator::default();
            let table = benchmark(&cfg, &sim).unwrap();
            println!("seed {seed} n {n}:");
            for row in &table.rows {
                println!(
                    "  {:<42} low {:>4} high {:>4} cost {:>7.1} u0 {:+.2} {}",
                    row.method, row.n_low, row.n_high, row.total_cost, row.u0_db, row.note
                );
            }
        }
    }
}
