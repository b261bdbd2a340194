use std::time::Instant;

use spkeval::benchmark::{Benchmark, BenchmarkConfig};

fn main() -> spkeval::Result<()> {
    let cfg = BenchmarkConfig::default();
    let t = Instant::now();
    let bench = Benchmark::build(&cfg)?;
    println!("built in {:.1}s: {} trials, cohort {}", t.elapsed().as_secs_f64(), bench.trials.len(), bench.cohort.len());
    for r in bench.run_all(cfg.cohort_top_k)? {
        println!(
            "{:<28} minDCF {:.4}  EER {:.2}%",
            r.chain, r.report.min_dcf, r.report.eer
        );
    }
    Ok(())
}
