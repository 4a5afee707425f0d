//! Trains the multi-task ranker on a generated dataset and prints the loss
//! curve and one ranked request.

use revisit_lab::pipeline::{self, PipelineConfig};
use revisit_lab::ranker::{rank, train, utilities_with_ratio, Candidate, TrainConfig};

fn main() -> revisit_lab::Result<()> {
    let dir = std::env::temp_dir().join("revisit-lab-example-train");
    let mut config = PipelineConfig::default();
    config.gen.n_users = 150;
    config.gen.n_pins = 800;
    config.pipeline.out_dir = dir.clone();
    config.pipeline.train = false;
    config.pipeline.evaluate = false;
    config.pipeline.analyze = false;
    pipeline::run_pipeline(&config)?;
    let data = revisit_lab::dataset::Dataset::read_file(&dir.join(pipeline::TRAIN_SET_FILE))?;

    let train_config = TrainConfig {
        learning_rate: 0.05,
        batch_size: 128,
        epochs: 3,
        ..TrainConfig::default()
    };
    let u = utilities_with_ratio(1.27);
    let outcome = train(&data, &train_config, &[1.0; 5], &u)?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("epoch {epoch}: mean loss {loss:.4}");
    }
    let request = data.requests()[0];
    let candidates: Vec<Candidate> = request
        .iter()
        .map(|r| Candidate {
            pin_id: &r.candidate_pin_id,
            features: &r.features,
        })
        .collect();
    for c in rank(&outcome.params, &u, &candidates)? {
        println!(
            "{:<10} score {:.4} p(repin&revisit) {:.4}",
            c.pin_id, c.score, c.probabilities[4]
        );
    }
    Ok(())
}
