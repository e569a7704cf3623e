//! Hand-driven training of a masked network, without the harness.
//!
//! Shows the pieces the experiment driver wires together: a partitioned
//! trunk where each task only uses (and only updates) its own channels,
//! per-task gradients summed into one Adam step, and partition update steps
//! interleaved with training.
//!
//! Run with: `cargo run --example masked_training`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use maxroam::{
    Adam, Gradients, InitMode, LossKind, MaskedNetwork, PartitionSet, Result, SelectionStrategy,
    TaskFamilySpec, TaskKind,
};

fn main() -> Result<()> {
    // Two regression tasks with mildly anti-correlated targets.
    let spec = TaskFamilySpec {
        num_tasks: 2,
        input_dim: 6,
        latent_dim: 4,
        correlation: -0.3,
        noise_std: 0.05,
        kind: TaskKind::Regression,
        n_train: 128,
        n_val: 64,
    };
    let data = maxroam::synth::generate_seeded(&spec, 11)?;

    // A two-layer trunk, both layers partitioned at p = 0.5.
    let widths = [16, 12];
    let p = 0.5;
    let mut part_rng = ChaCha8Rng::seed_from_u64(1);
    let mut parts = PartitionSet::init(&widths, spec.num_tasks, p, InitMode::ExactCount, &mut part_rng)?;
    let mut net_rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = MaskedNetwork::init(spec.input_dim, &widths, spec.num_tasks, &mut net_rng)?;
    net.check_shapes(&parts)?;
    println!(
        "trunk widths {widths:?}, {} parameters, {} tasks at p = {p}",
        net.param_count(),
        spec.num_tasks
    );

    // Masking in action: channels a task does not own receive *exactly*
    // zero gradient, so Adam never touches them for that task.
    let (_, grads) = net.batch_gradients(
        0,
        &data.train.xs[..8],
        &data.train.ys[0][..8],
        LossKind::Squared,
        &parts,
    );
    let mask = parts.layer(0).task_mask(0);
    let masked_rows: Vec<usize> = (0..widths[0]).filter(|&j| !mask[j]).collect();
    for &j in &masked_rows {
        assert!(grads.layers[0].0[j].iter().all(|&g| g == 0.0));
        assert_eq!(grads.layers[0].1[j], 0.0);
    }
    println!(
        "task 0 owns {:?} of layer 0; rows {masked_rows:?} get exactly-zero gradients\n",
        parts.layer(0).active_set(0)
    );

    // A small training loop: full-batch gradients per task, summed, one
    // optimizer step; a partition update step every 8 iterations.
    let mut opt = Adam::new(1e-2, net.param_count());
    let mut strategy = SelectionStrategy::uniform(ChaCha8Rng::seed_from_u64(3));
    println!("iter | train loss t0 | train loss t1 | partition steps");
    for iter in 0..=40 {
        if iter > 0 && iter % 8 == 0 && !parts.is_complete() {
            for d in 0..parts.num_layers() {
                let vectors = net.layers[d].channel_vectors();
                parts
                    .layer_mut(d)
                    .apply_update_step(&mut strategy, Some(&vectors))?;
            }
        }
        let mut total = Gradients::zeros_like(&net);
        let mut losses = [0.0; 2];
        for task in 0..spec.num_tasks {
            let (loss, g) = net.batch_gradients(
                task,
                &data.train.xs,
                &data.train.ys[task],
                LossKind::Squared,
                &parts,
            );
            losses[task] = loss;
            total.add(&g);
        }
        net.apply_gradients(&mut opt, &total);
        if iter % 8 == 0 {
            println!(
                "{iter:>4} | {:>13.5} | {:>13.5} | {}",
                losses[0],
                losses[1],
                parts.layer(0).steps_done()
            );
        }
    }

    // Validation loss per task after training.
    for task in 0..spec.num_tasks {
        let val: f64 = data
            .val
            .xs
            .iter()
            .zip(&data.val.ys[task])
            .map(|(x, &y)| LossKind::Squared.loss(net.output(x, task, &parts), y))
            .sum::<f64>()
            / data.val.len() as f64;
        println!("task {task}: validation loss {val:.5}");
    }
    parts.check_invariants()?;
    Ok(())
}
