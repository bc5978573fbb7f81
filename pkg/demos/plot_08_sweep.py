"""
Sweeps, tables and plots
========================

Run a small resumable sweep with an untrained network, then emit the results
table and the guidance-scale plot. The same flow is available as
``contextrecon sweep`` and ``contextrecon report``.
"""

# %%
import tempfile
from pathlib import Path

from contextrecon.harness import ExperimentConfig, run_sweep
from contextrecon.phantom import generate_dataset
from contextrecon.prior import ScoreModel, ScoreNet, make_schedule, save_checkpoint

out = Path(tempfile.mkdtemp())
ckpt = save_checkpoint(ScoreModel(ScoreNet(channels=(8, 16)), make_schedule()),
                       out / "untrained.ckpt")
records = generate_dataset(3, seed=1, grid=(32, 32))
cfg = ExperimentConfig(dataset="<memory>", checkpoint=str(ckpt), output_dir=str(out / "sweep"),
                       masks=("uniform1d:4:0.25",), gammas=(0.0, 1.0, 2.0),
                       metadata_mode=("Full", "Unconditional"), num_steps=5)

# %%
# Stop early, then resume: finished cells are reused from disk.
part = run_sweep(cfg, max_cells=2, records=records)
print("first pass: %d of %d cells" % (part.completed, part.total))
done = run_sweep(cfg, records=records)
print("resumed: %d reused, finished=%s" % (done.skipped, done.finished))
print((out / "sweep" / "table.txt").read_text())
print("plots:", sorted(p.name for p in (out / "sweep" / "plots").iterdir()))
