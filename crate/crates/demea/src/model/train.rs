//! Mini-batch training loop: shuffled batches, per-sample gradients reduced
//! in a fixed order, Adam updates, per-step loss history, per-epoch
//! checkpoints.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::nn::{adam_step, AdamParams, GradStore};

use super::{ModelError, ModelSession};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<TrainRecord>,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Receives `checkpoint.ckpt` after every epoch (and at early stops).
    pub checkpoint_dir: Option<PathBuf>,
    /// Prints a progress line to stderr every this many steps.
    pub log_every: Option<usize>,
}

/// Runs the configured number of epochs (or `max_steps`) of Adam over the
/// dataset. Batch gradients are the mean of per-sample gradients; samples
/// inside a batch may evaluate in parallel but reduce in sample order, so
/// results do not depend on thread count.
pub fn train(
    session: &mut ModelSession,
    dataset: &[Vec<Vector3<f64>>],
    options: &TrainOptions,
) -> Result<TrainOutcome, ModelError> {
    let n_vertices = session.template().vertex_count();
    if dataset.is_empty() {
        return Err(ModelError::Dataset("dataset is empty".into()));
    }
    for (i, sample) in dataset.iter().enumerate() {
        if sample.len() != n_vertices {
            return Err(ModelError::Dataset(format!(
                "sample {i} has {} vertices, the template has {n_vertices}",
                sample.len()
            )));
        }
    }
    let config = session.config().clone();
    let hp = AdamParams {
        lr: config.learning_rate,
        ..AdamParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Distinct stream so shuffling is decoupled from parameter init.
    rng.set_stream(1);

    let mut history: Vec<TrainRecord> = Vec::new();
    let mut step = 0usize;
    let mut stop = false;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let results: Vec<(f64, GradStore<f64>)> = {
                let frozen: &ModelSession = session;
                chunk
                    .par_iter()
                    .map(|&i| {
                        let mut grads = frozen.params.new_grad_store();
                        let loss = frozen.sample_loss_and_grads(&dataset[i], &mut grads)?;
                        Ok((loss, grads))
                    })
                    .collect::<Result<_, ModelError>>()?
            };
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for (loss, grads) in &results {
                batch_loss += loss * scale;
                session.params.accumulate(grads, scale);
            }
            if !batch_loss.is_finite() {
                session.params.zero_grads();
                return Err(ModelError::NonFiniteLoss {
                    step,
                    epoch,
                    loss: batch_loss,
                });
            }
            adam_step(&mut session.params, hp);
            history.push(TrainRecord {
                step,
                epoch,
                loss: batch_loss,
            });
            step += 1;
            if let Some(every) = options.log_every {
                if every > 0 && step % every == 0 {
                    eprintln!("step {step} (epoch {epoch}): loss {batch_loss:.6e}");
                }
            }
            if let Some(max) = config.max_steps {
                if step >= max {
                    stop = true;
                    break;
                }
            }
        }
        if let Some(dir) = &options.checkpoint_dir {
            session.save_params(dir.join("checkpoint.ckpt"))?;
        }
        if stop {
            break;
        }
    }
    let final_loss = history.last().map(|r| r.loss).unwrap_or(0.0);
    Ok(TrainOutcome {
        history,
        final_loss,
    })
}

/// Writes the per-step history as `step,epoch,loss` CSV.
pub fn write_loss_csv<P: AsRef<Path>>(path: P, history: &[TrainRecord]) -> Result<(), ModelError> {
    let path = path.as_ref();
    let mut text = String::from("step,epoch,loss\n");
    for r in history {
        text.push_str(&format!("{},{},{:.17e}\n", r.step, r.epoch, r.loss));
    }
    std::fs::write(path, text).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::io::build_supports;
    use crate::hierarchy::{build_hierarchy, extract_graph};
    use crate::model::{
        basic_config, generate_node_fields, push_through_deformation, ConvType, ModelConfig,
        SyntheticSpec, TrainingVariant,
    };
    use crate::shapes::icosphere;

    fn session_with(config: ModelConfig) -> ModelSession {
        let mesh = icosphere(2);
        let counts = [162usize, 60, 20, 8];
        let graph = extract_graph(&mesh, counts[config.graph_level]).unwrap();
        let hierarchy = build_hierarchy(&mesh, &graph, &counts).unwrap();
        let supports = build_supports(&hierarchy, None);
        ModelSession::new(config, hierarchy, graph, supports).unwrap()
    }

    fn small_dataset(session: &ModelSession, samples: usize) -> Vec<Vec<Vector3<f64>>> {
        let spec = SyntheticSpec {
            samples,
            seed: 99,
            ..SyntheticSpec::default()
        };
        let fields = generate_node_fields(session.template(), session.graph(), &spec);
        let binding =
            crate::edl::bind_skinning(session.template(), session.graph(), session.config().graph_level)
                .unwrap();
        push_through_deformation(session.template(), session.graph(), &binding, &fields).unwrap()
    }

    #[test]
    fn template_only_dataset_stays_at_zero_loss() {
        let mut config = basic_config(
            5,
            ConvType::Spiral,
            TrainingVariant::Edl,
            vec![4, 6, 8],
            2,
        );
        config.epochs = 4;
        config.batch_size = 1;
        let mut session = session_with(config);
        let dataset = vec![session.template().vertices().to_vec()];
        let outcome = train(&mut session, &dataset, &TrainOptions::default()).unwrap();
        assert_eq!(outcome.history.len(), 4);
        for r in &outcome.history {
            assert_eq!(r.loss, 0.0, "step {}: loss {}", r.step, r.loss);
        }
    }

    #[test]
    fn batch_gradients_equal_mean_of_per_sample_gradients() {
        let config = basic_config(
            5,
            ConvType::Spiral,
            TrainingVariant::Edl,
            vec![4, 6, 8],
            2,
        );
        let session = session_with(config);
        let dataset = small_dataset(&session, 4);

        let mut per_sample = Vec::new();
        for sample in &dataset {
            let mut grads = session.params.new_grad_store();
            session.sample_loss_and_grads(sample, &mut grads).unwrap();
            per_sample.push(grads);
        }

        let mut batched = session.clone();
        let frozen: &ModelSession = &session;
        let results: Vec<GradStore<f64>> = dataset
            .par_iter()
            .map(|s| {
                let mut grads = frozen.params.new_grad_store();
                frozen.sample_loss_and_grads(s, &mut grads).unwrap();
                grads
            })
            .collect();
        let scale = 1.0 / dataset.len() as f64;
        for grads in &results {
            batched.params.accumulate(grads, scale);
        }

        for id in session.params.ids() {
            let got = batched.params.grad(id);
            for (j, &g) in got.iter().enumerate() {
                let mean: f64 = per_sample
                    .iter()
                    .map(|gs| gs.slot(id)[j])
                    .sum::<f64>()
                    * scale;
                assert!(
                    (g - mean).abs() <= 1e-6 * mean.abs().max(1.0),
                    "param {} coord {j}: batch {g} vs mean {mean}",
                    session.params.name(id)
                );
            }
        }
    }

    #[test]
    fn loss_decreases_on_a_single_deformed_mesh() {
        let mut config = basic_config(
            5,
            ConvType::Spiral,
            TrainingVariant::Edl,
            vec![4, 6, 8],
            2,
        );
        config.epochs = 200;
        config.batch_size = 1;
        config.learning_rate = 1e-3;
        config.max_steps = Some(200);
        let mut session = session_with(config);
        let dataset = small_dataset(&session, 1);
        let outcome = train(&mut session, &dataset, &TrainOptions::default()).unwrap();
        let first = outcome.history.first().unwrap().loss;
        assert!(
            outcome.final_loss < first * 0.2,
            "loss {first} -> {} after {} steps",
            outcome.final_loss,
            outcome.history.len()
        );
    }

    #[test]
    fn shuffling_is_deterministic_across_runs() {
        let mut config = basic_config(
            5,
            ConvType::Spiral,
            TrainingVariant::Gl,
            vec![4, 6, 8],
            2,
        );
        config.epochs = 3;
        config.batch_size = 2;
        let dataset = {
            let session = session_with(config.clone());
            small_dataset(&session, 5)
        };
        let mut a = session_with(config.clone());
        let mut b = session_with(config);
        let oa = train(&mut a, &dataset, &TrainOptions::default()).unwrap();
        let ob = train(&mut b, &dataset, &TrainOptions::default()).unwrap();
        assert_eq!(oa.history, ob.history);
    }

    #[test]
    fn topology_mismatch_and_empty_dataset_are_rejected() {
        let config = basic_config(
            5,
            ConvType::Spiral,
            TrainingVariant::Edl,
            vec![4, 6, 8],
            2,
        );
        let mut session = session_with(config);
        assert!(matches!(
            train(&mut session, &[], &TrainOptions::default()),
            Err(ModelError::Dataset(_))
        ));
        let bad = vec![vec![Vector3::new(0.0, 0.0, 0.0); 10]];
        assert!(matches!(
            train(&mut session, &bad, &TrainOptions::default()),
            Err(ModelError::Dataset(_))
        ));
    }

    #[test]
    fn max_steps_stops_mid_epoch_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = basic_config(
            5,
            ConvType::Spiral,
            TrainingVariant::Edl,
            vec![4, 6, 8],
            2,
        );
        config.epochs = 100;
        config.batch_size = 2;
        config.max_steps = Some(3);
        let mut session = session_with(config);
        let dataset = small_dataset(&session, 6);
        let options = TrainOptions {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            log_every: None,
        };
        let outcome = train(&mut session, &dataset, &options).unwrap();
        assert_eq!(outcome.history.len(), 3);
        assert!(dir.path().join("checkpoint.ckpt").exists());
        assert!(dir.path().join("checkpoint.ckpt.moments").exists());
    }

    #[test]
    fn loss_csv_round_trips_the_history() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let history = vec![
            TrainRecord {
                step: 0,
                epoch: 0,
                loss: 0.5,
            },
            TrainRecord {
                step: 1,
                epoch: 0,
                loss: 0.25,
            },
        ];
        write_loss_csv(&path, &history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,epoch,loss"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "0");
        assert_eq!(row[1], "0");
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.5);
        assert_eq!(text.lines().count(), 3);
    }
}
