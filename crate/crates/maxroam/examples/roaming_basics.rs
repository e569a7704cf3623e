//! The partition lifecycle on one layer: initialize, roam, complete.
//!
//! A layer with `S` parameters shared by `T` tasks starts with each task
//! owning a `p` fraction. Every update step swaps, per task, one active
//! parameter for one the task has never visited; under exact-count
//! initialization the plan finishes in exactly `S - round(p*S)` steps.
//!
//! Run with: `cargo run --example roaming_basics`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use maxroam::{
    plan_duration, update_ratio_for, visit_probability, InitMode, LayerPartition, PartitionSet,
    Result, RoamingSchedule, SelectionStrategy,
};

fn main() -> Result<()> {
    let (s, t, p) = (12, 3, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut part = LayerPartition::init(s, t, p, InitMode::ExactCount, &mut rng)?;
    let mut strategy = SelectionStrategy::uniform(ChaCha8Rng::seed_from_u64(8));

    println!("layer: S = {s} parameters, T = {t} tasks, sharing ratio p = {p}");
    let b0 = part.active_count(0);
    println!("exact-count init: every task holds round(p*S) = {b0} parameters\n");

    println!("step | task 0 active set                | visited | ratio r");
    let plan_len = s - b0;
    for step in 0..=plan_len {
        if step > 0 {
            part.apply_update_step(&mut strategy, None)?;
        }
        println!(
            "{:>4} | {:<32} | {:>4}/{s} | {:.3}",
            step,
            format!("{:?}", part.active_set(0)),
            part.visited_count(0),
            part.update_ratio(p),
        );
    }
    println!();

    // The plan's promises, checked live:
    assert!(part.is_complete(), "every task visited every parameter");
    assert_eq!(part.steps_done(), plan_len);
    for task in 0..t {
        assert_eq!(part.active_count(task), b0, "active size never changes");
        assert_eq!(part.visited_count(task), s);
    }
    part.check_invariants()?;
    println!("complete after exactly S - round(p*S) = {plan_len} steps; |active| pinned at {b0}");

    // One more step is a no-op: there is nothing left to visit.
    let frozen = part.clone();
    part.apply_update_step(&mut strategy, None)?;
    assert_eq!(part, frozen);
    println!("further steps are no-ops once complete\n");

    // The closed forms behind the trace above.
    println!("closed forms at p = {p}, S = {s}:");
    for c in [0, 2, 4, 6] {
        let r = update_ratio_for(c, s, p);
        println!(
            "  after {c} steps: update ratio r = {r:.3}, expected visited fraction = {:.3}",
            visit_probability(p, r)
        );
    }

    // A schedule ties steps to training epochs: one step every `delta`
    // epochs, stopping at a target ratio (1.0 = run the full plan).
    let mut layers_rng = ChaCha8Rng::seed_from_u64(9);
    let set = PartitionSet::init(&[16, 8], t, p, InitMode::ExactCount, &mut layers_rng)?;
    let (delta, iterations_per_epoch) = (0.25, 10);
    let mut schedule = RoamingSchedule::new(delta, 1.0, iterations_per_epoch)?;
    println!(
        "\ntwo-layer set (widths 16 and 8), one update step every {delta} epochs:\n  \
         plan duration = {} epochs (largest layer dominates)",
        plan_duration(&set, p, delta)
    );
    for iterations_done in [0, 2, 3, 5, 25] {
        let due = schedule.due_steps(iterations_done);
        println!(
            "  after {iterations_done} iterations ({} epochs): {due} update step(s) due",
            schedule.elapsed_epochs(iterations_done)
        );
        for _ in 0..due {
            schedule.advance();
        }
    }
    Ok(())
}
