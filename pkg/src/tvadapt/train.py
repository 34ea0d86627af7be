"""Training loop: Adam over the adapter set with warmup-cosine schedule."""

from __future__ import annotations

import json
import sys

import numpy as np

from .exceptions import NumericError
from .model import AdapterModel
from .retrieval import SimilarityMatrix, dsl, metrics_report
from .tensor import no_grad, rng_for


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, store, lr):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in store.trainable_items():
            if p.grad is None:
                continue
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def lr_at(step, total_steps, base_lr, warmup_frac):
    """Linear warmup over the first fraction, then cosine decay to zero."""
    if total_steps <= 0:
        return base_lr
    warm = int(round(total_steps * warmup_frac))
    if step < warm:
        return base_lr * (step + 1) / warm
    span = max(1, total_steps - warm)
    progress = (step - warm) / span
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * progress))


def evaluate_model(model, dataset, use_dsl=False, dsl_inv_temp=100.0, ks=(1, 5, 10)):
    """MetricsReports for both retrieval directions (optionally with DSL)."""
    with no_grad():
        z = model.encode_texts(dataset.tokens)
        v = model.encode_videos(dataset.videos, candidates=z.data, sel_key=("eval",))
    sim = SimilarityMatrix(v.data @ z.data.T)
    reports = {
        "video->text": metrics_report(sim, "video->text", ks),
        "text->video": metrics_report(sim, "text->video", ks),
    }
    if use_dsl:
        rescored = dsl(sim, inv_temp=dsl_inv_temp)
        reports["video->text (dsl)"] = metrics_report(rescored, "video->text", ks)
        reports["text->video (dsl)"] = metrics_report(rescored, "text->video", ks)
    return reports


def _nan_dump(model, step, loss_log):
    payload = {
        "step": step,
        "recent_losses": loss_log[-20:],
        "param_norms": {
            name: float(np.linalg.norm(t.data))
            for name, t in model.store.trainable_items()
        },
    }
    sys.stderr.write("training aborted on non-finite loss\n")
    sys.stderr.write(json.dumps(payload, indent=2) + "\n")


def train(config, dataset, model=None, max_steps=None, eval_each_epoch=True,
          progress=None):
    """Optimize the adapters on a paired dataset.

    Returns (model, history, steps_done); history holds one entry per
    epoch with the mean loss and both retrieval reports. Deterministic
    for a fixed config: batch order, random selection, and init all key
    off config.seed.
    """
    if model is None:
        model = AdapterModel(config)
    n = len(dataset)
    batch = min(config.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    total_steps = config.epochs * steps_per_epoch
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)
    opt = Adam()
    history = []
    loss_log = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        if step >= total_steps:
            break
        if batch >= n:
            order = np.arange(n)  # one full batch: shuffling only reorders sums
        else:
            order = rng_for(config.seed, "order", epoch).permutation(n)
        epoch_losses = []
        for start in range(0, n, batch):
            if step >= total_steps:
                break
            idx = order[start : start + batch]
            loss = model.batch_loss(
                dataset.videos[idx], dataset.tokens[idx], sel_key=("train", step)
            )
            value = loss.item()
            if not np.isfinite(value):
                _nan_dump(model, step, loss_log)
                raise NumericError(f"non-finite loss {value} at step {step}")
            loss_log.append(value)
            epoch_losses.append(value)
            model.store.zero_grad()
            loss.backward()
            opt.step(model.store, lr_at(step, total_steps, config.lr, config.warmup))
            step += 1
        entry = {"epoch": epoch, "steps": step, "loss": float(np.mean(epoch_losses))}
        if eval_each_epoch:
            entry["reports"] = evaluate_model(model, dataset)
        history.append(entry)
        if progress is not None:
            progress(entry)
    return model, history, step
