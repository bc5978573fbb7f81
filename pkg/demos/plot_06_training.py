"""
Training a small conditional prior
==================================

Fit the epsilon-prediction network on a few phantoms for a short run and
save a checkpoint. The reference prior used by the acceptance suite is the
same procedure at larger scale (``contextrecon.desk``).
"""

# %%
import tempfile
from pathlib import Path

from contextrecon.phantom import generate_dataset
from contextrecon.prior import TrainingConfig, load_checkpoint, save_checkpoint, train
from contextrecon.prior.training import smoothed

records = generate_dataset(64, seed=0, grid=(32, 32), num_coils=2)
cfg = TrainingConfig(epochs=20, batch_size=8, learning_rate=2e-3, channels=(8, 16),
                     max_steps=150)
result = train(records, cfg)
curve = smoothed(result.history, 25)
print("smoothed loss %.4f -> %.4f" % (curve[0], curve[-1]))

# %%
# Checkpoints reload bit-exactly.
path = save_checkpoint(result.model, Path(tempfile.mkdtemp()) / "toy.ckpt")
print("saved", path, "reloaded", type(load_checkpoint(path)).__name__)
