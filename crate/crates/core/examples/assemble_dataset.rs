//! Joins action labels, revisit labels, sidecar and perf features into a
//! training set and prints label base rates.

use revisit_lab::attribution::{build_labels, derive_revisit_events, derive_saves, join_revisits};
use revisit_lab::dataset::{assemble, attach_revisit_label, extract_action_labels};
use revisit_lab::event::day_span;
use revisit_lab::features::PerfTables;
use revisit_lab::loggen::{emit_feature_sidecar, generate_log, GenConfig};
use revisit_lab::{Surface, TaskId};

fn main() -> revisit_lab::Result<()> {
    let config = GenConfig {
        n_users: 200,
        n_pins: 1_000,
        n_days: 14,
        ..GenConfig::default()
    };
    let log = generate_log(&config)?;
    let (first, last) = day_span(&log).expect("non-empty log");
    let saves = derive_saves(&log, Some(Surface::RelatedPins));
    let join = join_revisits(&saves, &derive_revisit_events(&log))?;
    let labels = build_labels(&join, &saves)?;
    let perf = PerfTables::compute(&log, &join, first, last)?;
    let sidecar = emit_feature_sidecar(&config, &log)?;
    let labeled = attach_revisit_label(extract_action_labels(&log)?, &labels)?;
    let data = assemble(&sidecar, &perf, &labeled, first, last)?;
    println!(
        "{} rows, {} features, {} requests",
        data.len(),
        data.feature_dim,
        data.requests().len()
    );
    for task in TaskId::ALL {
        let positives = data.examples.iter().filter(|e| e.label(task)).count();
        println!("  {task:<12} {:.4}", positives as f64 / data.len() as f64);
    }
    Ok(())
}
