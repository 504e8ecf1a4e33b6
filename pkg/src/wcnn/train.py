"""Training recipe: Adam, contrast normalization, augmentation, epoch loop.

Preprocessing order per sample: (optional) bilinear resize + random crop +
random horizontal flip, then global contrast normalization.  The resize
target defaults to input_size * 256 // 224, mirroring the full-scale
256 -> 224 recipe at any desk scale.

Adam hyperparameters default to lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8;
they are echoed in every report header.  All randomness flows from the
single seed through per-(epoch, sample) streams, so runs are reproducible
independent of batch size, and two identical single-threaded 64-bit runs
produce bit-identical checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import layers as L
from . import metrics as X
from . import model as M
from .data import ImageRecord
from .seeding import AUGMENT, SHUFFLE, stream_rng
from .tensor import ShapeError, Tensor


class NonFiniteGradientError(RuntimeError):
    def __init__(self, param_name: str):
        super().__init__(f"non-finite gradient for parameter {param_name!r}; step aborted")
        self.param_name = param_name


class NonFiniteLossError(RuntimeError):
    pass


# --- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, ad.Variable], state: AdamState) -> None:
    """One bias-corrected moment update, in place on the parameter values.

    Parameters whose `.grad` is unset are treated as zero-gradient (their
    moments decay, values stay put).  Any non-finite gradient aborts the step
    before touching anything, naming the offending parameter.
    """
    grads: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.zeros_like(p.value.data) if p.grad is None else p.grad.data
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
        grads[name] = g

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    correct1 = 1.0 - b1**t
    correct2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        dt = p.value.data.dtype
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.value.data)
            state.v[name] = np.zeros_like(p.value.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / correct1
        v_hat = v / correct2
        p.value.data -= dt.type(state.lr) * m_hat / (np.sqrt(v_hat) + dt.type(state.epsilon))


# --- preprocessing -------------------------------------------------------------


def global_contrast_normalization(image: np.ndarray) -> np.ndarray:
    """Per-image standardization: subtract the mean, divide by the deviation.

    The deviation is floored at 1e-8 so constant images map to zeros.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.size == 0:
        raise ShapeError("cannot normalize an empty image")
    return (image - image.mean()) / max(float(image.std()), 1e-8)


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Channel-wise bilinear resize of a [c, h, w] image (pixel-center mapping)."""
    c, h, w = image.shape
    if out_h < 1 or out_w < 1:
        raise ShapeError("resize target must be positive")
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    top = image[:, y0][:, :, x0] * (1 - wx) + image[:, y0][:, :, x1] * wx
    bottom = image[:, y1][:, :, x0] * (1 - wx) + image[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bottom * wy


def hflip(image: np.ndarray) -> np.ndarray:
    return image[:, :, ::-1].copy()


def augment(image: np.ndarray, rng: np.random.Generator, resize_to: int,
            crop_to: int, flip: bool = True) -> np.ndarray:
    """Resize, uniformly random crop, and coin-flip horizontal mirror.

    Draw order is fixed (row offset, column offset, flip) so streams are part
    of the reproducibility contract.  Crop offsets cover [0, resize-crop]
    inclusive.
    """
    if crop_to > resize_to:
        raise ShapeError(f"crop {crop_to} larger than resize target {resize_to}")
    if image.shape[1] < 2 or image.shape[2] < 2:
        raise ShapeError("augment needs at least a 2x2 image")
    out = bilinear_resize(image, resize_to, resize_to)
    oy = int(rng.integers(0, resize_to - crop_to + 1))
    ox = int(rng.integers(0, resize_to - crop_to + 1))
    out = out[:, oy:oy + crop_to, ox:ox + crop_to]
    if flip and rng.random() < 0.5:
        out = hflip(out)
    return out


# --- training loop --------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    lr_decay_every: int = 0  # 0 = constant schedule
    lr_decay_factor: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    augment: bool = True
    resize_to: int = 0  # 0 = input_size * 256 // 224
    flip: bool = True
    eval_every: int = 1
    threads: int = 1
    checkpoint_path: str | None = None

    def validate(self):
        if self.epochs < 1:
            raise ShapeError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ShapeError("batch size must be >= 2 while batch norm trains")
        if self.lr <= 0:
            raise ShapeError("learning rate must be positive")
        if self.eval_every < 1:
            raise ShapeError("eval_every must be >= 1")
        if self.lr_decay_every < 0 or not 0 < self.lr_decay_factor <= 1:
            raise ShapeError("lr decay needs every >= 0 and factor in (0, 1]")

    def resolved_resize(self, input_size: int) -> int:
        return self.resize_to if self.resize_to else input_size * 256 // 224

    def lr_at(self, epoch: int) -> float:
        """Constant by default; optional step decay every `lr_decay_every` epochs."""
        if not self.lr_decay_every:
            return self.lr
        return self.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)


@dataclass
class TrainReport:
    header: dict[str, str]
    rows: list[tuple[int, str, float, float]] = field(default_factory=list)
    best_epoch: int = -1
    best_test_acc: float = float("nan")
    final_train_loss: float = float("nan")
    loss_monotone_after_warmup: bool = True

    def to_text(self) -> str:
        lines = ["# training report"]
        for k in sorted(self.header):
            lines.append(f"# {k} = {self.header[k]}")
        lines.append("epoch\tsplit\tloss\tacc")
        for epoch, split, loss, acc in self.rows:
            loss_field = f"{loss:.6f}" if np.isfinite(loss) else "n/a"
            lines.append(f"{epoch}\t{split}\t{loss_field}\t{acc:.2f}")
        lines.append("# summary")
        lines.append(f"# best_epoch = {self.best_epoch}")
        lines.append(f"# best_test_acc = {self.best_test_acc:.2f}")
        lines.append(f"# final_train_loss = {self.final_train_loss:.6f}")
        lines.append(f"# loss_monotone_after_warmup = {self.loss_monotone_after_warmup}")
        return "\n".join(lines) + "\n"


def _prepare(record: ImageRecord, cfg: TrainConfig, input_size: int,
             rng: np.random.Generator | None) -> np.ndarray:
    img = record.pixels
    if cfg.augment and rng is not None:
        img = augment(img, rng, cfg.resolved_resize(input_size), input_size, cfg.flip)
    elif img.shape[1] != input_size or img.shape[2] != input_size:
        img = bilinear_resize(img, input_size, input_size)
    return global_contrast_normalization(img)


def _batch_tensor(images: list[np.ndarray], dtype: str) -> Tensor:
    return Tensor(np.stack(images), dtype=dtype)


def _targets(records: list[ImageRecord], head: str, num_classes: int):
    if head == "softmax":
        for r in records:
            if len(r.labels) != 1:
                raise ShapeError(
                    f"softmax head needs exactly one label per image, {r.path!r} has {len(r.labels)}"
                )
        return np.array([r.labels[0] for r in records], dtype=np.int64)
    targets = np.zeros((len(records), num_classes))
    for i, r in enumerate(records):
        targets[i, list(r.labels)] = 1.0
    return targets


def iter_batches(order, batch_size):
    for at in range(0, len(order), batch_size):
        yield order[at:at + batch_size]


def train(model: M.Model, train_records: list[ImageRecord],
          eval_records: list[ImageRecord], cfg: TrainConfig) -> TrainReport:
    """Run the epoch loop; returns the report and (optionally) saves the best
    checkpoint by test accuracy.

    Raises NonFiniteLossError with a batch diagnostic if the loss diverges.
    """
    cfg.validate()
    if not train_records:
        raise ShapeError("training set is empty")
    mcfg = model.config
    input_size = mcfg.input_size
    head, classes = mcfg.head, mcfg.num_classes

    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.adam_epsilon)
    header = {
        "adam.lr": str(cfg.lr), "adam.beta1": str(cfg.beta1),
        "adam.beta2": str(cfg.beta2), "adam.epsilon": str(cfg.adam_epsilon),
        "lr_schedule": ("constant" if not cfg.lr_decay_every else
                        f"step(every={cfg.lr_decay_every}, factor={cfg.lr_decay_factor})"),
        "augment": str(cfg.augment), "batch_size": str(cfg.batch_size),
        "epochs": str(cfg.epochs), "eval_every": str(cfg.eval_every),
        "precision": mcfg.precision, "seed": str(cfg.seed),
        "threads": str(cfg.threads),
        "resize_to": str(cfg.resolved_resize(input_size)),
        "train_images": str(len(train_records)),
        "eval_images": str(len(eval_records)),
    }
    report = TrainReport(header=header)

    best_acc = -1.0
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        state.lr = cfg.lr_at(epoch)
        order = stream_rng(cfg.seed, SHUFFLE, epoch).permutation(len(train_records))
        losses, correct, seen = [], 0, 0
        for batch_idx in iter_batches(order, cfg.batch_size):
            records = [train_records[i] for i in batch_idx]
            images = [
                _prepare(r, cfg, input_size, stream_rng(cfg.seed, AUGMENT, epoch, int(i)))
                for i, r in zip(batch_idx, records)
            ]
            batch = _batch_tensor(images, mcfg.precision)
            logits = M.forward(model, batch, mode="train")
            targets = _targets(records, head, classes)
            if head == "softmax":
                loss = L.softmax_cross_entropy(logits, targets)
            else:
                loss = L.sigmoid_bce_multilabel(logits, targets)
            loss_value = loss.value.item()
            if not np.isfinite(loss_value):
                raise NonFiniteLossError(
                    f"non-finite loss {loss_value} at epoch {epoch}, "
                    f"batch starting with {records[0].path!r}"
                )
            ad.backward(loss)
            adam_step(model.params, state)
            for p in model.params.values():
                p.grad = None
            losses.append(loss_value)
            if head == "softmax":
                correct += int((logits.value.data.argmax(axis=1) == targets).sum())
                seen += len(records)

        train_loss = float(np.mean(losses)) if losses else float("nan")
        train_acc = 100.0 * correct / seen if seen else float("nan")
        epoch_losses.append(train_loss)
        report.rows.append((epoch, "train", train_loss, train_acc))

        if eval_records and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1):
            result = evaluate(model, eval_records, batch_size=cfg.batch_size)
            test_acc = result["accuracy"]
            report.rows.append((epoch, "test", float("nan"), test_acc))
            if test_acc > best_acc:
                best_acc = test_acc
                report.best_epoch = epoch
                report.best_test_acc = test_acc
                if cfg.checkpoint_path:
                    M.save_model(model, cfg.checkpoint_path)

    report.final_train_loss = epoch_losses[-1]
    # trend check with stochasticity allowance: after the 3-epoch warmup, an
    # epoch average may wobble but not exceed twice the best average so far
    # (plus a small absolute slack for near-zero losses)
    best_seen = min(epoch_losses[:4], default=float("inf"))
    for cur in epoch_losses[4:]:
        if cur > 2.0 * best_seen + 0.05:
            report.loss_monotone_after_warmup = False
            break
        best_seen = min(best_seen, cur)
    return report


def evaluate(model: M.Model, records: list[ImageRecord], batch_size: int = 32) -> dict:
    """Eval-mode metrics: accuracy for softmax heads, plus the multi-label
    bundle (threshold 0.5) for multilabel heads."""
    if not records:
        raise ShapeError("evaluation set is empty")
    mcfg = model.config
    cfg = TrainConfig(augment=False)
    outputs = []
    for at in range(0, len(records), batch_size):
        chunk = records[at:at + batch_size]
        images = [_prepare(r, cfg, mcfg.input_size, None) for r in chunk]
        logits = M.forward(model, _batch_tensor(images, mcfg.precision), mode="eval")
        outputs.append(logits.value.data)
    logits = np.concatenate(outputs, axis=0)

    if mcfg.head == "softmax":
        labels = np.array([r.labels[0] for r in records])
        return {"accuracy": X.accuracy(logits.argmax(axis=1), labels)}

    outcomes = []
    exact = 0
    for row, r in zip(logits, records):
        predicted = frozenset(int(c) for c in np.nonzero(row > 0)[0])  # sigmoid > 0.5
        truth = frozenset(r.labels)
        outcomes.append(X.MultiLabelOutcome(predicted, truth))
        exact += predicted == truth
    bundle = X.multilabel_bundle(outcomes, mcfg.num_classes)
    bundle["accuracy"] = 100.0 * exact / len(records)
    return bundle


def run_splits(model_factory, manifest, splits, cfg: TrainConfig,
               load_images) -> tuple[list[TrainReport], tuple[float, float | None]]:
    """Rotate through (train, test) index pairs: fresh model per split, one
    training run each, accuracy aggregated as mean and population deviation.

    This is the group-rotation protocol: with leave-one-group-in splits each
    sample group trains once while the others test.
    """
    reports = []
    for train_idx, test_idx in splits:
        model = model_factory()
        reports.append(train(model, load_images(manifest, train_idx),
                             load_images(manifest, test_idx), cfg))
    aggregate = X.split_aggregate([r.best_test_acc for r in reports])
    return reports, aggregate
