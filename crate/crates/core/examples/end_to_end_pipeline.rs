//! Runs every stage from a config file and prints the manifest.
//!
//! Usage: cargo run --release --example end_to_end_pipeline [CONFIG]

use revisit_lab::pipeline::{run_pipeline, PipelineConfig};

fn main() -> revisit_lab::Result<()> {
    let mut config = match std::env::args().nth(1) {
        Some(path) => PipelineConfig::from_file(path.as_ref())?,
        None => PipelineConfig::from_toml_str(include_str!("../configs/default.toml"))?,
    };
    config.pipeline.out_dir = std::env::temp_dir().join("revisit-lab-example-pipeline");
    config.pipeline.plot_data = true;
    let manifest = revisit_lab::with_thread_pool(|| run_pipeline(&config))??;
    print!("{}", manifest.to_toml_string());
    println!("outputs in {}", config.pipeline.out_dir.display());
    Ok(())
}
