//! Runs every mode on synthetic corpora and prints micro P/R/F1.
//!
//! `cargo run --release --example ablation -- [replicates] [out_dir] [top_n]`

use std::path::PathBuf;
use std::time::Instant;

use coupled_ie::pipeline::{Mode, Pipeline, PipelineConfig};
use coupled_ie::synthdata::{self, SynthSpec};

fn main() -> coupled_ie::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicates: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "target/ablation".into()));
    let top_n = args
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(PipelineConfig::default().top_n);
    for seed in 0..replicates {
        let dir = root.join(format!("seed{seed}"));
        let data = synthdata::generate(&SynthSpec {
            rng_seed: seed,
            ..SynthSpec::default()
        })?;
        synthdata::write_synth(&data, &dir)?;
        println!("replicate {seed}: {} gold facts", data.gold.facts.len());
        for mode in Mode::ALL {
            let start = Instant::now();
            let p = Pipeline::new(PipelineConfig {
                mode,
                top_n,
                rng_seed: seed,
                ..synthdata::pipeline_config(&dir, &dir.join("out"))
            })?;
            p.run_all(false)?;
            let r = p.report()?;
            let qa = r.qa.map(|q| q.mrr).unwrap_or(0.0);
            println!(
                "  {:<12} P={:.3} R={:.3} F1={:.3} MRR={:.3} ({:.1}s)",
                mode.as_str(),
                r.micro.precision,
                r.micro.recall,
                r.micro.f1,
                qa,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
