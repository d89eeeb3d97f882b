//! Sweeps both synthetic settings with every estimator and prints interval
//! coverage. Pass the number of seeds as the first argument (default 5).
//!
//!     cargo run --release -p bayes-cfme --example coverage_report -- 10

use bayes_cfme::calibration::{coverage, run_sweep, SweepConfig};
use bayes_cfme::estimators::Method;
use bayes_cfme::synthetic::SettingSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(5);
    for spec in [SettingSpec::setting_a(), SettingSpec::setting_b()] {
        let mut cfg = SweepConfig::for_setting(spec);
        cfg.seeds = (0..seeds).collect();
        cfg.methods = Method::ALL.to_vec();
        let started = std::time::Instant::now();
        let result = run_sweep(&cfg)?;
        println!(
            "setting {} ({:.1} s)",
            spec.id,
            started.elapsed().as_secs_f64()
        );
        for c in coverage(&result, cfg.level)? {
            let fraction = c.fraction.map_or("n/a".into(), |f| format!("{f:.3}"));
            println!(
                "  {:<12} {fraction:>6}  ({} of {}, {} excluded)",
                c.method.name(),
                c.covered,
                c.evaluated,
                c.excluded
            );
        }
    }
    Ok(())
}
