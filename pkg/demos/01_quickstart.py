"""Quickstart: one federated run on a synthetic road network.

Twenty sensors each hold a private traffic-like series. Every node trains its
own GRU encoder-decoder, FedAvg merges those weights, and a server-side Graph
Network learns from the nodes' encodings without ever seeing a raw reading.

Run:  python3 demos/01_quickstart.py
"""
import json
import tempfile

from cnfgnn.harness import desk_config, run

# A smaller series than the acceptance runs so this finishes in about a minute.
cfg = desk_config("at_fedavg", seed=0, dataset={"T": 800}, rounds_global=6)

with tempfile.TemporaryDirectory() as out:
    summary = run(cfg, out_dir=out)

    print(f"run {summary['run_id']}: {summary['rounds_run']} rounds, best at round {summary['best_round']}")
    print(f"  val RMSE  {summary['val_rmse']:.4f}")
    print(f"  test RMSE {summary['test_rmse']:.4f}")

    # Every message passed through the ledger; compare with the closed form.
    comm = summary["comm"]
    print(f"\nledger total   {comm['ledger_total_bytes']:,} bytes")
    print(f"formula total  {comm['analytic_total_bytes']:,} bytes")
    print(f"exact match: {comm['analytic_matches_ledger']}, per-round checks: {comm['per_round_checks_ok']}")
    for phase, b in sorted(comm["by_phase"].items()):
        print(f"  {phase:<12} {b:>12,}")

    # metrics.jsonl has one record per round; round 0 is the untrained model.
    with open(f"{out}/metrics.jsonl") as f:
        print("\nround  val RMSE")
        for line in f:
            rec = json.loads(line)
            print(f"{rec['round']:>5}  {rec['rmse']:.4f}")
