"""Inductive learning: forecasting nodes that never took part in training.

Only nodes west of the eta-quantile longitude train. Afterwards the shared
node model and the GN are applied to the whole graph, so unseen nodes get
spatial context from their trained neighbours. Normalisation statistics come
from visible nodes only. With very few visible nodes the GN sees too little
structure to help; the gain appears once a useful share of the graph trains.

Run:  python3 demos/03_inductive.py      (about two minutes on one core)
"""
import tempfile

from cnfgnn.harness import desk_config, run_inductive

print(f"{'eta':>5}{'visible':>9}  {'strategy':<12}{'full':>8}{'seen':>8}{'unseen':>8}")
with tempfile.TemporaryDirectory() as out:
    for eta in (0.25, 0.5, 0.75):
        for strategy in ("fedavg_only", "at_fedavg"):
            cfg = desk_config(strategy, seed=0)
            cfg.eta = eta
            s = run_inductive(cfg, out_dir=f"{out}/{strategy}-{eta}")["inductive"]
            t = s["test"]
            print(f"{eta:>5}{s['num_visible']:>5}/{s['num_total']:<3}  {strategy:<12}"
                  f"{t['full_rmse']:>8.4f}{t['seen_rmse']:>8.4f}{t['unseen_rmse']:>8.4f}")
