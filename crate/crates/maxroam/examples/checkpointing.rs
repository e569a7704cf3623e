//! Checkpoint and exact resume: dump network, optimizer, and partitions to
//! JSON mid-training, restore them in fresh objects, and land on
//! bit-identical parameters.
//!
//! Everything that training mutates serializes with full 64-bit precision:
//! the network and Adam state via serde, the partitions via their
//! documented snapshot form ({layer, S, T, mask, visited, steps_done} per
//! layer — the same shape `run` writes to partition.json).
//!
//! Run with: `cargo run --example checkpointing`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use maxroam::synth::{TaskFamilySpec, TaskKind};
use maxroam::{
    Adam, Gradients, InitMode, LayerSnapshot, LossKind, MaskedNetwork, PartitionSet, Result,
    SelectionStrategy,
};

/// One full-batch step on every task; returns the summed train loss.
fn train_step(
    net: &mut MaskedNetwork,
    opt: &mut Adam,
    parts: &PartitionSet,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
) -> f64 {
    let mut total = Gradients::zeros_like(net);
    let mut loss_sum = 0.0;
    for (task, targets) in ys.iter().enumerate() {
        let (loss, g) = net.batch_gradients(task, xs, targets, LossKind::Squared, parts);
        loss_sum += loss;
        total.add(&g);
    }
    net.apply_gradients(opt, &total);
    loss_sum
}

fn main() -> Result<()> {
    let spec = TaskFamilySpec {
        num_tasks: 2,
        input_dim: 8,
        latent_dim: 6,
        correlation: 0.0,
        noise_std: 0.05,
        kind: TaskKind::Regression,
        n_train: 64,
        n_val: 32,
    };
    let data = maxroam::synth::generate_seeded(&spec, 21)?;

    let mut net_rng = ChaCha8Rng::seed_from_u64(22);
    let mut net = MaskedNetwork::init(spec.input_dim, &[12, 8], spec.num_tasks, &mut net_rng)?;
    let mut parts = PartitionSet::init(&[12, 8], spec.num_tasks, 0.5, InitMode::ExactCount, &mut net_rng)?;
    let mut opt = Adam::new(1e-2, net.param_count());

    // Run the partition plan to completion first so the post-checkpoint
    // phase is pure optimization (no randomness left to replay).
    let mut strategy = SelectionStrategy::uniform(ChaCha8Rng::seed_from_u64(23));
    while !parts.is_complete() {
        for d in 0..parts.num_layers() {
            let vectors = net.layers[d].channel_vectors();
            parts.layer_mut(d).apply_update_step(&mut strategy, Some(&vectors))?;
        }
    }

    for _ in 0..30 {
        train_step(&mut net, &mut opt, &parts, &data.train.xs, &data.train.ys);
    }

    // --- checkpoint: three JSON files ---------------------------------
    let dir = tempfile::tempdir()?;
    let snaps = parts.snapshot();
    std::fs::write(dir.path().join("net.json"), serde_json::to_string_pretty(&net)?)?;
    std::fs::write(dir.path().join("opt.json"), serde_json::to_string_pretty(&opt)?)?;
    std::fs::write(dir.path().join("partition.json"), serde_json::to_string_pretty(&snaps)?)?;
    for name in ["net.json", "opt.json", "partition.json"] {
        let bytes = std::fs::metadata(dir.path().join(name))?.len();
        println!("wrote {name} ({bytes} bytes)");
    }
    println!("\npartition snapshot, layer 0:\n{}\n", serde_json::to_string(&snaps[0])?);

    // --- branch A: keep training in place ------------------------------
    let mut live_losses = Vec::new();
    for _ in 0..20 {
        live_losses.push(train_step(&mut net, &mut opt, &parts, &data.train.xs, &data.train.ys));
    }

    // --- branch B: restore from disk and repeat the same 20 steps ------
    let mut restored_net: MaskedNetwork =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("net.json"))?)?;
    let mut restored_opt: Adam =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("opt.json"))?)?;
    let restored_snaps: Vec<LayerSnapshot> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("partition.json"))?)?;
    let restored_parts = PartitionSet::from_snapshot(&restored_snaps)?;
    restored_parts.check_invariants()?;
    assert_eq!(restored_parts, parts, "partitions restore exactly");

    println!("iter | live loss      | resumed loss   | identical");
    for (i, &live) in live_losses.iter().enumerate() {
        let resumed = train_step(
            &mut restored_net,
            &mut restored_opt,
            &restored_parts,
            &data.train.xs,
            &data.train.ys,
        );
        if i % 5 == 0 || i == live_losses.len() - 1 {
            println!("{:>4} | {live:.12} | {resumed:.12} | {}", 30 + i, live == resumed);
        }
        assert_eq!(live, resumed, "loss diverged at resumed step {i}");
    }

    // Bit-exact, not approximately equal: every f64 round-tripped.
    assert_eq!(net.params_flat(), restored_net.params_flat());
    println!("\nall {} parameters bit-identical after 20 resumed steps", net.param_count());
    Ok(())
}
