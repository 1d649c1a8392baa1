"""Pre-written training loop, optimiser driver and evaluation procedure.

Generated modules plug into this file: the modeling module supplies
forward/train_step, the post-processing module turns predictions into task
outputs, and everything else (splitting, batching, learning-rate schedule,
early stopping, scoring) lives here.
"""

import math
import random


def to_list(x):
    if hasattr(x, "tolist"):
        x = x.tolist()
    if isinstance(x, tuple):
        x = list(x)
    if isinstance(x, list):
        return [to_list(v) for v in x]
    return x


def as_tensors(data):
    if not isinstance(data, dict) or "inputs" not in data or "outputs" not in data:
        raise TypeError("prepare must return a dict with 'inputs' and 'outputs'")
    inputs, outputs = to_list(data["inputs"]), to_list(data["outputs"])
    sizes = {len(t) for t in inputs + outputs}
    if len(sizes) != 1:
        raise ValueError(f"tensors disagree on the number of samples: {sorted(sizes)}")
    return inputs, outputs


def take(tensors, idx):
    return [[t[i] for i in idx] for t in tensors]


def split(n, val_fraction, seed):
    """Deterministic shuffled train/validation split of n samples."""
    idx = list(range(n))
    random.Random(seed).shuffle(idx)
    n_val = max(1, int(round(n * val_fraction))) if n >= 2 else 0
    return idx[n_val:], idx[:n_val]


def leaves(x):
    if isinstance(x, list):
        for v in x:
            yield from leaves(v)
    else:
        yield x


def label_of(row):
    if isinstance(row, list):
        if len(row) == 1:
            return label_of(row[0])
        return max(range(len(row)), key=lambda i: row[i])
    return int(round(row))


def score(metric, final, target):
    name = metric.lower()
    if "acc" in name:
        if len(final) != len(target):
            raise ValueError(f"{len(final)} predictions for {len(target)} targets")
        hits = sum(label_of(p) == label_of(t) for p, t in zip(final, target))
        return hits / len(target)
    p = [float(v) for v in leaves(final)]
    t = [float(v) for v in leaves(target)]
    if len(p) != len(t):
        raise ValueError(f"{len(p)} predicted values for {len(t)} target values")
    err = [a - b for a, b in zip(p, t)]
    if "rmse" in name:
        return math.sqrt(sum(e * e for e in err) / len(err))
    if "mse" in name:
        return sum(e * e for e in err) / len(err)
    if "mae" in name:
        return sum(abs(e) for e in err) / len(err)
    if "r2" in name:
        mean = sum(t) / len(t)
        total = sum((v - mean) ** 2 for v in t)
        return 1.0 - sum(e * e for e in err) / total if total > 0 else 0.0
    raise ValueError(f"unsupported metric {metric!r}")


def evaluate(model, postprocess, plan, inputs, outputs, metric):
    predictions = to_list(model.forward(inputs))
    final = to_list(postprocess(predictions, plan))
    return score(metric, final, outputs[0])


class Driver:
    """Per-step hyperparameters: learning-rate schedule and optimiser options."""

    def __init__(self, hparams, epochs, maximize):
        self.hparams = dict(hparams)
        self.epochs = max(1, epochs)
        self.maximize = maximize
        self.base_lr = hparams.get("learning_rate")
        self.reductions = 0
        self.best = None
        self.stale = 0

    def step_hparams(self, epoch):
        hp = dict(self.hparams)
        if hp.get("optimizer", "sgd") != "sgd":
            hp.pop("momentum", None)
        if isinstance(self.base_lr, (int, float)):
            if hp.get("scheduler") == "cosine":
                hp["learning_rate"] = self.base_lr * 0.5 * (1 + math.cos(math.pi * epoch / self.epochs))
            else:
                hp["learning_rate"] = self.base_lr * (0.5 ** self.reductions)
        hp["epoch"] = epoch
        return hp

    def observe(self, value):
        """Plateau schedule: halve the rate after two epochs without gain."""
        better = self.best is None or (value > self.best if self.maximize else value < self.best)
        if better:
            self.best, self.stale = value, 0
        else:
            self.stale += 1
            if self.stale >= 2:
                self.reductions += 1
                self.stale = 0


def batches(idx, size, rng):
    order = list(idx)
    rng.shuffle(order)
    size = max(1, int(size))
    return [order[i:i + size] for i in range(0, len(order), size)]


def fit(model, postprocess, plan, inputs, outputs, cfg):
    """Trains for cfg['epochs'] epochs and scores on the validation split.

    Returns {status, score, epochs_run}. status is 'pruned' when training
    stopped early on a non-finite loss or score.
    """
    hparams = cfg.get("hparams", {})
    metric = cfg["metric"]
    maximize = cfg.get("direction", "minimize") == "maximize"
    seed = int(cfg.get("seed", 0))
    n = len(inputs[0])
    train_idx, val_idx = split(n, float(cfg.get("val_fraction", 0.2)), seed)
    fraction = float(cfg.get("data_fraction", 1.0))
    keep = max(1, int(round(len(train_idx) * fraction)))
    train_idx = train_idx[:keep]
    if not val_idx:
        val_idx = train_idx
    val_in, val_out = take(inputs, val_idx), take(outputs, val_idx)
    epochs = int(cfg.get("epochs", 1))
    patience = int(cfg.get("patience", 3))
    min_delta = float(cfg.get("min_delta", 0.0))
    early = bool(cfg.get("early_stopping", False))
    batch_size = hparams.get("batch_size", cfg.get("batch_size", 16))
    driver = Driver(hparams, epochs, maximize)
    rng = random.Random(seed + 1)

    best, bad, epochs_run, current = None, 0, 0, None
    for epoch in range(epochs):
        hp = driver.step_hparams(epoch)
        for idx in batches(train_idx, batch_size, rng):
            loss = float(model.train_step(take(inputs, idx), take(outputs, idx), hp))
            if not math.isfinite(loss):
                return {"status": "pruned", "score": None, "epochs_run": epochs_run,
                        "reason": f"non-finite loss at epoch {epoch + 1}"}
        epochs_run += 1
        current = evaluate(model, postprocess, plan, val_in, val_out, metric)
        if not math.isfinite(current):
            return {"status": "pruned", "score": None, "epochs_run": epochs_run,
                    "reason": f"non-finite {metric} at epoch {epoch + 1}"}
        driver.observe(current)
        if early:
            if best is None:
                gain = math.inf
            else:
                gain = current - best if maximize else best - current
            if gain > min_delta:
                best, bad = current, 0
            else:
                bad += 1
                if bad >= patience:
                    break
    if current is None:
        current = evaluate(model, postprocess, plan, val_in, val_out, metric)
    return {"status": "evaluated", "score": current, "epochs_run": epochs_run}
