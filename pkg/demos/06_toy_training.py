"""End-to-end mini training run: synthesize a small multi-task dataset,
train for a few epochs, and compare against classical baselines.

Takes about a minute on a laptop CPU.
Run from the repo root:  python3 demos/06_toy_training.py
"""

import tempfile

import numpy as np

from phyfm.baselines import ls_estimate
from phyfm.datastore import generate_dataset, load_checkpoint
from phyfm.model import MultiTaskModel
from phyfm.phytasks import PilotObservation, nmse, pilot_selection, TASKS
from phyfm.profiles import model_config_for, toy_profile
from phyfm.training import TrainConfig, build_batch, eval_task, fit

with tempfile.TemporaryDirectory() as work:
    dataset = generate_dataset(toy_profile(), scenarios=40, samples=10,
                               master_seed=0, root=f"{work}/ds")
    print(f"dataset: {dataset.splits['train'].n_samples} train samples per task")

    model = MultiTaskModel(model_config_for(dataset.profile), seed=0)
    cfg = TrainConfig(epochs=6, batch_size=50, lr0=2e-3, seed=0)
    result = fit(model, dataset, cfg, f"{work}/run")
    print("\nepoch  lr        loss_ce  loss_det loss_pre loss_dec loss_loc  val")
    for row in result.log_rows:
        print(f"{row[0]:5d}  {row[1]:.6f}  " +
              " ".join(f"{v:8.4f}" for v in row[2:7]) + f"  {row[7]:.3f}")

    model.load_state_dict(load_checkpoint(result.checkpoint_path))
    test = dataset.splits["test"]

    print("\ntest-split metrics at the base operating point (10 dB):")
    for task in TASKS:
        value, _ = eval_task(model, dataset, test, task)
        print(f"  {task:9s} {value:.4f}")

    # channel estimation vs LS with the same 2 pilots
    batch = build_batch(test, "ce", np.arange(test.n_samples), dataset.profile)
    sel = pilot_selection(16, 2)
    ls_err = np.mean([nmse(ls_estimate(PilotObservation(
        y_pilot=batch.y_pilot[b], selection=sel, n_t=16, snr_db=10.0)),
        batch.h_true[b]) for b in range(test.n_samples)])
    model_err, _ = eval_task(model, dataset, test, "ce")
    print(f"\nCE NMSE: model {model_err:.4f} vs LS {ls_err:.4f} "
          f"(LS zero-fills 14 of 16 antenna rows)")
