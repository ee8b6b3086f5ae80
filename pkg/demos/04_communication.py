"""Communication costs: closed forms, a large-scale table value, and the
client/server round trade-off measured on the ledger.

Run:  python3 demos/04_communication.py
"""
import tempfile

from cnfgnn.comms import CostParams, analytic_total, per_round_gn_cost
from cnfgnn.harness import desk_config, run_sweep

# Per GN round, split learning moves 4*V*S bytes. Alternating training
# amortises its encode/embed exchange over R_s server rounds.
v, s = 325, 1.0
print("per-round GN traffic, in units of V*S")
print(f"  split learning          {per_round_gn_cost('sl', v, s) / v:.2f}")
for rs in (1, 10, 20):
    print(f"  alternating, R_s={rs:<3}   {per_round_gn_cost('at', v, s, rs) / v:.2f}")

# Large-scale weight exchange: 325 nodes, 2369 non-self directed edges,
# a 2.347e-4 GB model, 104 rounds.
fmtl = analytic_total("fmtl", CostParams(num_nodes=325, node_weights_bytes=2.347e-4, rounds=104,
                                         nonself_directed_edges=2369))
print(f"\nFMTL peer exchange total: {fmtl:.3f} GB")

# Measured: a small sweep over client and server rounds at fixed R_g.
cfg = desk_config("at_fedavg", seed=0, dataset={"num_nodes": 10, "T": 400}, rounds_global=2)
cfg.sweep = {"rounds_client": [1, 10, 20], "rounds_server": [1, 10, 20]}
with tempfile.TemporaryDirectory() as out:
    rows = run_sweep(cfg, out_dir=out)

print(f"\n{'R_c':>4}{'R_s':>5}{'R_c/R_s':>9}{'bytes':>12}{'val RMSE':>10}{'best':>6}")
for r in sorted(rows, key=lambda r: (r["rounds_client"] + r["rounds_server"], -r["ratio"])):
    print(f"{r['rounds_client']:>4}{r['rounds_server']:>5}{r['ratio']:>9.2f}"
          f"{r['comm_bytes']:>12,}{r['val_rmse']:>10.4f}{r['best_round']:>6}")
print("\nat equal R_c + R_s, more client rounds per server round means less traffic")
