//! Ranks the eval set with and without the revisit utility and prints the
//! Hits@3 lift per task.

use revisit_lab::evaluator::{eval_feed, lift, rank_dataset, Metric};
use revisit_lab::pipeline::{self, baseline_utilities, PipelineConfig};
use revisit_lab::ranker::read_model_file;
use revisit_lab::TaskId;

fn main() -> revisit_lab::Result<()> {
    let dir = std::env::temp_dir().join("revisit-lab-example-eval");
    let mut config = PipelineConfig::default();
    config.gen.n_users = 200;
    config.gen.n_pins = 1_500;
    config.pipeline.out_dir = dir.clone();
    config.pipeline.analyze = false;
    config.train.learning_rate = 0.05;
    config.train.batch_size = 256;
    pipeline::run_pipeline(&config)?;

    let model = read_model_file(&dir.join(pipeline::MODEL_FILE))?;
    let eval = revisit_lab::dataset::Dataset::read_file(&dir.join(pipeline::EVAL_SET_FILE))?;
    let with_revisit = eval_feed(&rank_dataset(&model, &model.utility_weights, &eval)?, 3)?;
    let without = eval_feed(
        &rank_dataset(&model, &baseline_utilities(&model.utility_weights), &eval)?,
        3,
    )?;
    let lifts = lift(&with_revisit, &without)?;
    let hits = Metric::ALL
        .iter()
        .position(|&m| m == Metric::Hits)
        .expect("hits metric");
    println!("{} requests", with_revisit.n_requests);
    for task in TaskId::ALL {
        println!(
            "{task:<12} hits@3 {:.4} vs {:.4}  lift {}%",
            with_revisit.value(task, Metric::Hits),
            without.value(task, Metric::Hits),
            lifts[task.index()][hits]
        );
    }
    Ok(())
}
