"""Experiment harness: metrics, online loops, protocols, persistence.

Conventions:

* metrics are prequential: the score at step t is computed on the
  prediction made before x_t is revealed, and only then may the learner
  adapt.
* per-step metrics average over batch columns; protocol-level evaluation
  (zero-shot, continual) reports the per-sequence sum of per-step metrics
  averaged over sequences, so numbers scale with sequence length the way
  the task matrices expect.
* when the Bernoulli metric is selected, metric targets are frames
  thresholded at 0.5; learners always observe the raw frames.
"""

import dataclasses
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    ElmanConfig,
    ElmanModel,
    EsnConfig,
    EsnModel,
    build_elman,
    build_esn,
)
from .learners import ElmanLearner, EsnLearner, PTNCNLearner
from .numerics import make_rng
from .ptncn import Hyperparams, PTNCNConfig, PTNCNModel, build_model


class HarnessError(ValueError):
    """Raised on malformed harness inputs."""


class CheckpointError(ValueError):
    """Raised on malformed checkpoint files."""


METRIC_KINDS = ("squared_error", "bernoulli_ce", "categorical_ce", "bpc")
_EPS = 1e-12


def compute_metric(kind, preds, targets):
    """Scalar metric: summed over features, averaged over batch columns."""
    if kind not in METRIC_KINDS:
        raise HarnessError(f"unknown metric kind: {kind!r}")
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise HarnessError(
            f"prediction shape {preds.shape} != target shape {targets.shape}"
        )
    batch = preds.shape[1] if preds.ndim == 2 else 1
    if kind == "squared_error":
        return float(((preds - targets) ** 2).sum()) / batch
    p = np.clip(preds, _EPS, 1.0 - _EPS)
    if kind == "bernoulli_ce":
        ce = -(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p))
        return float(ce.sum()) / batch
    ce = float(-(targets * np.log(p)).sum()) / batch
    if kind == "categorical_ce":
        return ce
    return ce / np.log(2.0)  # bpc


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)  # (step, kind, value, wall_ms)

    def append(self, step, kind, value, wall_ms=0.0):
        if self.records and step < self.records[-1][0]:
            raise HarnessError("step indices must be monotone")
        self.records.append((int(step), kind, float(value), float(wall_ms)))

    def values(self, kind=None):
        return [v for (_, k, v, _) in self.records if kind is None or k == kind]

    def mean(self, kind=None):
        vals = self.values(kind)
        if not vals:
            raise HarnessError("no records for requested metric")
        return float(np.mean(vals))

    def tail_mean(self, count, kind=None):
        vals = self.values(kind)[-count:]
        return float(np.mean(vals)) if vals else float("nan")

    def __len__(self):
        return len(self.records)

    def to_csv(self, path, include_timing=True):
        with open(path, "w", encoding="utf-8") as fh:
            if include_timing:
                fh.write("step,metric,value,wall_ms\n")
                for step, kind, value, wall in self.records:
                    fh.write(f"{step},{kind},{value!r},{wall:.3f}\n")
            else:
                fh.write("step,metric,value\n")
                for step, kind, value, _ in self.records:
                    fh.write(f"{step},{kind},{value!r}\n")


def _metric_targets(kind, frames):
    return (frames > 0.5).astype(np.float64) if kind == "bernoulli_ce" else frames


def _as_sequences(data):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim == 2:      # one stream (T, d)
        return data[None, :, :], True
    if data.ndim == 3:      # dataset (N, T, d)
        return data, False
    raise HarnessError(f"expected (T,d) stream or (N,T,d) dataset, got {data.shape}")


@dataclass
class TrainSettings:
    metric: str = "squared_error"
    batch_size: int = 1
    train: bool = True
    log_every: int = 1


def run_online_training(learner, data, settings=None):
    """Prequential loop: score the prediction of x_t, then learn from x_t.

    ``data`` is one (T, d) stream or an (N, T, d) dataset; datasets are
    consumed in order, ``batch_size`` sequences in parallel per group,
    with learner state reset at every group boundary.
    """
    settings = settings or TrainSettings()
    sequences, is_stream = _as_sequences(data)
    if sequences.shape[1] == 0:
        raise HarnessError("empty stream")
    log = MetricsLog()
    step = 0
    count = sequences.shape[0]
    group_size = 1 if is_stream else max(1, settings.batch_size)
    for start in range(0, count, group_size):
        group = sequences[start:start + group_size]       # (B, T, d)
        frames = np.ascontiguousarray(group.transpose(2, 0, 1))  # (d, B, T)
        batch = group.shape[0]
        learner.reset(batch)
        for t in range(group.shape[1]):
            x_t = frames[:, :, t]
            t0 = time.perf_counter()
            pred = learner.predict()
            value = compute_metric(
                settings.metric, pred, _metric_targets(settings.metric, x_t)
            )
            learner.observe(x_t)
            if settings.train:
                learner.update()
            wall_ms = (time.perf_counter() - t0) * 1e3
            if step % settings.log_every == 0:
                log.append(step, settings.metric, value, wall_ms)
            step += 1
        learner.finish_sequence()
    return log


def evaluate_sequences(learner, dataset, metric="squared_error", batch_size=50):
    """Per-sequence sum of per-step metrics, averaged over sequences.

    The learner is driven without updates; pass a frozen learner
    (``train=False`` / ``eval_clone``) so this is also side-effect free.
    """
    sequences, _ = _as_sequences(dataset)
    total = 0.0
    for start in range(0, sequences.shape[0], batch_size):
        group = sequences[start:start + batch_size]
        frames = np.ascontiguousarray(group.transpose(2, 0, 1))
        learner.reset(group.shape[0])
        for t in range(group.shape[1]):
            pred = learner.predict()
            x_t = frames[:, :, t]
            targets = _metric_targets(metric, x_t)
            diffs = {
                "squared_error": lambda: ((pred - targets) ** 2).sum(axis=0),
                "bernoulli_ce": lambda: -(
                    targets * np.log(np.clip(pred, _EPS, 1 - _EPS))
                    + (1 - targets) * np.log(np.clip(1 - pred, _EPS, 1 - _EPS))
                ).sum(axis=0),
                "categorical_ce": lambda: -(
                    targets * np.log(np.clip(pred, _EPS, 1 - _EPS))
                ).sum(axis=0),
                "bpc": lambda: -(
                    targets * np.log(np.clip(pred, _EPS, 1 - _EPS))
                ).sum(axis=0) / np.log(2.0),
            }[metric]()
            total += float(diffs.sum())
            learner.observe(x_t)
        learner.finish_sequence()
    return total / sequences.shape[0]


def run_zero_shot(model, dataset, correction_enabled, hp=None,
                  metric="squared_error", batch_size=50):
    """Frozen-weight evaluation; state correction stays on unless ablated."""
    learner = PTNCNLearner(
        model, hp or Hyperparams(), train=False, correction=correction_enabled
    )
    return evaluate_sequences(learner, dataset, metric, batch_size)


@dataclass
class TaskSpec:
    name: str
    train_data: np.ndarray
    val_data: np.ndarray
    train_online: bool = True
    frozen: bool = False


@dataclass
class TaskMatrix:
    names: list
    rows: list  # rows[i] has i+1 entries: metric on task j after task i

    def entry(self, i, j):
        if j > i:
            raise HarnessError("upper triangle is absent")
        return self.rows[i][j]

    def forgetting(self, j):
        """Final metric on task j minus the metric right after learning it."""
        return self.rows[-1][j] - self.rows[j][j]

    def to_lines(self):
        out = []
        for i, row in enumerate(self.rows):
            cells = " ".join(f"{v:.4f}" for v in row)
            out.append(f"after {self.names[i]}: {cells}")
        return out


def run_continual(learner_factory, tasks, metric="squared_error",
                  eval_batch=50, settings=None):
    """One online pass per task in order, evaluating all seen tasks after
    each; fills the lower-triangular task matrix."""
    if not tasks:
        raise HarnessError("need at least one task")
    learner = learner_factory()
    train_settings = settings or TrainSettings(metric=metric, batch_size=1)
    rows = []
    for i, task in enumerate(tasks):
        if task.train_online and not task.frozen:
            run_online_training(learner, task.train_data, train_settings)
        evaluator = learner.eval_clone()
        rows.append([
            evaluate_sequences(evaluator, tasks[j].val_data, metric, eval_batch)
            for j in range(i + 1)
        ])
    return TaskMatrix(names=[t.name for t in tasks], rows=rows)


# ---------------------------------------------------------------------------
# scaling benchmark


@dataclass
class ScalingReport:
    widths: list
    median_ms: dict   # learner -> [ms per width]
    slopes: dict      # learner -> fitted log-log exponent

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("learner,width,median_ms,slope\n")
            for name, times in sorted(self.median_ms.items()):
                for w, ms in zip(self.widths, times):
                    fh.write(f"{name},{w},{ms:.6f},{self.slopes[name]:.4f}\n")


def _bench_learner(name, width, input_dim, seed):
    if name == "ptncn":
        cfg = PTNCNConfig(input_dim=input_dim, layer_dims=[width, width])
        model = build_model(cfg, 0.025, make_rng(seed))
        return PTNCNLearner(model, Hyperparams())
    if name in ("rtrl", "uoro"):
        cfg = ElmanConfig(input_dim=input_dim, hidden_dim=width,
                          output_dim=input_dim)
        model = build_elman(cfg, 0.025, make_rng(seed))
        rng = make_rng(seed + 1) if name == "uoro" else None
        return ElmanLearner(model, name, eta=1e-4, rng=rng)
    if name == "esn":
        cfg = EsnConfig(input_dim=input_dim, reservoir_dim=width,
                        output_dim=input_dim)
        return EsnLearner(build_esn(cfg, make_rng(seed)))
    raise HarnessError(f"unknown benchmark learner: {name!r}")


def benchmark_scaling(learners, widths, reps=20, warmup=5, input_dim=8, seed=0):
    """Median wall time of one full train step per learner per width.

    The fitted slope is the least-squares gradient of log(time) against
    log(width); it separates the quartic RTRL recursion from the
    quadratic-cost learners.
    """
    widths = list(widths)
    if len(widths) < 3:
        raise HarnessError("need at least 3 widths to fit a slope")
    rng = make_rng(seed + 999)
    xs = rng.standard_normal((warmup + reps, input_dim))
    median_ms, slopes = {}, {}
    for name in learners:
        times = []
        for width in widths:
            learner = _bench_learner(name, width, input_dim, seed)
            learner.reset(1)
            samples = []
            for i in range(warmup + reps):
                t0 = time.perf_counter()
                learner.predict()
                learner.observe(xs[i])
                learner.update()
                elapsed = (time.perf_counter() - t0) * 1e3
                if i >= warmup:
                    samples.append(elapsed)
            times.append(float(np.median(samples)))
        median_ms[name] = times
        slopes[name] = float(
            np.polyfit(np.log(widths), np.log(times), 1)[0]
        )
    return ScalingReport(widths=widths, median_ms=median_ms, slopes=slopes)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"PTNC"
CHECKPOINT_VERSION = 1


def _model_kind(model):
    if isinstance(model, PTNCNModel):
        return "ptncn"
    if isinstance(model, ElmanModel):
        return "elman"
    if isinstance(model, EsnModel):
        return "esn"
    raise CheckpointError(f"cannot checkpoint {type(model).__name__}")


def _model_arrays(model):
    if isinstance(model, EsnModel):
        return {"W_x": model.W_x, "W_r": model.W_r, "W_y": model.W_y, "c": model.c}
    return dict(sorted(model.params.items()))


def save_checkpoint(model, path, hyperparams=None, rng=None):
    """Write model kind, config, hyperparams, rng state, and all matrices.

    Layout: magic "PTNC", version byte, little-endian u32 header length,
    UTF-8 JSON header, then row-major IEEE-754 binary32 little-endian
    arrays in manifest order.
    """
    arrays = _model_arrays(model)
    header = {
        "model_kind": _model_kind(model),
        "config": dataclasses.asdict(model.cfg),
        "hyperparams": dataclasses.asdict(hyperparams) if hyperparams else None,
        "rng_state": _encode_rng_state(rng) if rng is not None else None,
        "arrays": [
            {"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(bytes([CHECKPOINT_VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _encode_rng_state(rng):
    state = rng.bit_generator.state
    return {
        "bit_generator": state["bit_generator"],
        "state": str(state["state"]["state"]),
        "inc": str(state["state"]["inc"]),
        "has_uint32": state["has_uint32"],
        "uinteger": state["uinteger"],
    }


def _decode_rng_state(blob):
    rng = make_rng(0)
    rng.bit_generator.state = {
        "bit_generator": blob["bit_generator"],
        "state": {"state": int(blob["state"]), "inc": int(blob["inc"])},
        "has_uint32": blob["has_uint32"],
        "uinteger": blob["uinteger"],
    }
    return rng


def _rebuild_model(kind, config, arrays):
    if kind == "ptncn":
        cfg = PTNCNConfig(**config)
        model = build_model(cfg, 0.0, make_rng(0))
        target = model.params
    elif kind == "elman":
        cfg = ElmanConfig(**config)
        model = build_elman(cfg, 0.0, make_rng(0))
        target = model.params
    elif kind == "esn":
        cfg = EsnConfig(**config)
        want = {
            "W_x": (cfg.reservoir_dim, 1 + cfg.input_dim),
            "W_r": (cfg.reservoir_dim, cfg.reservoir_dim),
            "W_y": (cfg.output_dim, cfg.reservoir_dim),
            "c": (cfg.output_dim, 1),
        }
        for name, shape in want.items():
            if name not in arrays or arrays[name].shape != shape:
                raise CheckpointError(
                    f"array {name!r} missing or mis-shaped for esn checkpoint"
                )
        model = EsnModel(
            cfg=cfg,
            W_x=arrays["W_x"], W_r=arrays["W_r"],
            W_y=arrays["W_y"], c=arrays["c"],
        )
        model.reset_state()
        return model
    else:
        raise CheckpointError(f"unknown model kind: {kind!r}")
    if set(arrays) != set(target):
        raise CheckpointError(
            f"array manifest {sorted(arrays)} does not match model "
            f"parameters {sorted(target)}"
        )
    for name, arr in arrays.items():
        if target[name].shape != arr.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: file {arr.shape}, "
                f"model {target[name].shape}"
            )
        target[name] = arr
    return model


def load_checkpoint(path):
    """Read a checkpoint; returns (model, meta) with hyperparams/rng in meta."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 9 or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if raw[4] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported version {raw[4]} (expected {CHECKPOINT_VERSION})"
        )
    (header_len,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[9:9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    offset = 9 + header_len
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        nbytes = 4 * int(np.prod(shape))
        if len(raw) < offset + nbytes:
            raise CheckpointError(f"{path}: truncated array {spec['name']!r}")
        arrays[spec["name"]] = (
            np.frombuffer(raw[offset:offset + nbytes], dtype="<f4")
            .reshape(shape)
            .astype(np.float64)
        )
        offset += nbytes
    model = _rebuild_model(header["model_kind"], header["config"], arrays)
    meta = {
        "hyperparams": (
            Hyperparams(**header["hyperparams"]) if header["hyperparams"] else None
        ),
        "rng": (
            _decode_rng_state(header["rng_state"]) if header["rng_state"] else None
        ),
    }
    return model, meta
