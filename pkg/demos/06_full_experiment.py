"""End-to-end runs: the post-communication drop and where each strategy lands.

Runs three experiments (T=100) on the default 4-client synthetic benchmark
and prints the mean validation-F1 change across communication boundaries
plus the final test scores.

Run: python demos/06_full_experiment.py   (about ten seconds)
"""

from fedfreq import ExperimentConfig, mean_boundary_change, run_experiment

for strategy in ("FEDAVG", "LOCAL_ONLY", "PFA_DET"):
    cfg = ExperimentConfig(
        strategy=strategy,
        total_epochs=100,
        local_epochs=5,
        data_scale=0.1,
        seed=0,
    )
    result = run_experiment(cfg)
    print(f"\n{strategy}")
    print(f"  macro F1 over clients: {result.macro_f1:.4f}   (held-out cohort: {result.ood_macro_f1:.4f})")
    for c in result.clients:
        delta = (
            f"{mean_boundary_change(result.rows, c.client):+.4f}"
            if strategy != "LOCAL_ONLY"
            else "   n/a"
        )
        print(
            f"  client {c.client}: test F1 {c.test_f1:.4f}  best val {c.best_val_f1:.4f} "
            f"(epoch {c.best_epoch:3d})  mean F1 change at communication {delta}"
        )

print(
    "\nReading the last column: replacing the client model with the plain"
    "\naverage drops validation F1 right after most communications (negative"
    "\ndeltas); the deputy-protected personalized model stays flat or improves."
)
