"""Strategy comparison on a single dataset.

The same 20-node network is trained under every strategy. Rows show test
RMSE alongside total traffic. ``centralized`` pools raw data at the server
and is shown only as a non-federated reference; ``local`` sends nothing.

Run:  python3 demos/02_strategies.py      (a few minutes on one core)
"""
import tempfile

from cnfgnn.federation import FEDERATED, STRATEGIES
from cnfgnn.harness import desk_config, run

rows = []
with tempfile.TemporaryDirectory() as out:
    for strategy in STRATEGIES:
        cfg = desk_config(strategy, seed=1)
        s = run(cfg, out_dir=f"{out}/{strategy}")
        rows.append((strategy, s["test_rmse"], s["comm"]["ledger_total_bytes"]))
        print(f"finished {strategy}")

print(f"\n{'strategy':<14}{'test RMSE':>10}{'traffic (MB)':>14}  federated")
for name, rmse, nbytes in sorted(rows, key=lambda r: r[1]):
    print(f"{name:<14}{rmse:>10.4f}{nbytes / 1e6:>14.2f}  {'yes' if name in FEDERATED else 'no'}")
