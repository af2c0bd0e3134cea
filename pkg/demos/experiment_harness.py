r"""
Replicated experiments from a config file
-----------------------------------------
The harness reads a YAML config, runs every replication with its own seed,
and writes one CSV trace per replication plus an aggregate with the median
and quartiles of the loss and true gradient norm on each x-axis. The same
steps are available on the command line as ``retro-opt run``,
``retro-opt check``, ``retro-opt aggregate`` and ``retro-opt sweep``.
"""
import json
import tempfile
from pathlib import Path

from retro_opt.harness import load_config, run_experiment, self_check, sweep

config_path = Path(__file__).resolve().parent.parent / "configs" / "least_squares.yaml"
cfg = load_config(config_path)
print(cfg.problem)

#%%
# Check gradients, the schedule and a short run before spending time.
print(self_check(cfg).format())

#%%
out = Path(tempfile.mkdtemp())
result = run_experiment(cfg, out)
print(sorted(p.name for p in out.iterdir()))
series = json.loads((out / "aggregate.json").read_text())["series"]["oracle_work"]
for x, med in list(zip(series["x"], series["grad_norm_true"]["median"]))[:8]:
    print(f"work {x:>8.0f}: median ||grad f|| {med:.4f}")

#%%
# A sweep reruns the experiment for each value of one dotted key.
results = sweep(cfg, "schedule.m1", ["2", "20"], out / "sweep")
for label, res in results.items():
    last = [t.records[-1].grad_norm_true for t in res.traces.values()]
    print(label, [round(v, 4) for v in last])
