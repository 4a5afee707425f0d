//! Generates a small synthetic log and prints its shape and revisit volume.

use revisit_lab::loggen::{emit_feature_sidecar, generate_log, GenConfig};
use revisit_lab::{Action, Surface};

fn main() -> revisit_lab::Result<()> {
    let config = GenConfig {
        n_users: 200,
        n_pins: 1_000,
        n_days: 14,
        ..GenConfig::default()
    };
    let log = generate_log(&config)?;
    let count = |s: Surface, a: Action| log.iter().filter(|e| e.surface == s && e.action == a).count();
    println!(
        "{} events from {} users over {} days",
        log.len(),
        config.n_users,
        config.n_days
    );
    println!(
        "related pins impressions: {}",
        count(Surface::RelatedPins, Action::Impression)
    );
    println!(
        "related pins repins:      {}",
        count(Surface::RelatedPins, Action::Repin)
    );
    println!("off-surface saves:        {}", count(Surface::Other, Action::Repin));
    println!(
        "own-profile grid clicks:  {}",
        count(Surface::OwnProfile, Action::GridClick)
    );
    let sidecar = emit_feature_sidecar(&config, &log)?;
    println!(
        "sidecar: {} candidate rows x {} features",
        sidecar.len(),
        config.feature_dim
    );
    let path = std::env::temp_dir().join("revisit-lab-example-events.csv");
    revisit_lab::event::write_event_log_file(&log, &path)?;
    println!("log written to {}", path.display());
    Ok(())
}
