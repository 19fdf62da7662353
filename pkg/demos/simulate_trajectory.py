"""Run the deterministic attention loop with and without suppression.

The synthetic scene seeds two concepts at fixed grid positions and lets the
query features relax toward the attention-weighted embeddings over six
countdown steps.  Without intervention the concepts' attention stays smeared
across each other's territory; with the per-pixel suppression each concept's
mass is fully contained in its winner region at every step.  An injection
schedule then swaps one concept's embedding for its negation late in the
countdown, the embedding-level edit that leaves early layout untouched.

Run:  python3 demos/simulate_trajectory.py
"""

import numpy as np

from crosstok import (
    EmbeddingMatrix,
    InjectionSchedule,
    SceneSpec,
    SuppressionConfig,
    run_simulation,
    synth_scene,
)

SPEC = SceneSpec(
    n_tokens=12,
    dim=32,
    grid=(16, 16),
    selected=(3, 7),
    concept_centers=((5.0, 5.0), (10.0, 10.0)),
    steps=6,
    seed=2024,
    bias_weight=2.0,
)


def describe(tag, trajectory):
    print(f"\n{tag}")
    print(f"{'step':>4} {'loc(tok3)':>10} {'loc(tok7)':>10}")
    for rec in trajectory.records:
        a, b = rec.localization
        print(f"{rec.step:>4} {a:>10.4f} {b:>10.4f}")


def main():
    baseline = run_simulation(SPEC)
    describe("baseline: attention leaks across regions", baseline)

    suppressed = run_simulation(SPEC, suppression=SuppressionConfig(beta=0.0))
    describe("suppressed: every step fully localized", suppressed)

    # swap concept 3's embedding below step 2; layout steps stay bit-identical
    base, _ = synth_scene(SPEC)
    flipped = base.values.copy()
    flipped[3] *= -1.0
    sched = InjectionSchedule(
        threshold_step=2,
        base=base,
        injected=EmbeddingMatrix(flipped, base.metadata),
        replaced_index=3,
    )
    injected = run_simulation(SPEC, schedule=sched)
    same = [
        rec.step
        for rec, ref in zip(injected.records, baseline.records)
        if np.array_equal(rec.attention.values, ref.attention.values)
    ]
    print(f"\ninjection below step 2: steps {same} match the baseline bit for bit,")
    print("the remaining steps see the swapped embedding.")

    out = run_simulation(SPEC, suppression=SuppressionConfig(beta=0.0), out_dir="demo_out/trajectory")
    print(f"\nwrote {len(out.records)} stacks + metrics.jsonl to demo_out/trajectory/")


if __name__ == "__main__":
    main()
