"""Command-line front end.

    tncn <subcommand> --config cfg.json [--set key.path=value]...
         [--seed N] [--out DIR] [--no-timing]

Subcommands: train | eval | zeroshot | continual | bench | gendata.
Every run writes the fully resolved configuration (effective_config.json)
and a run summary next to its outputs; training runs add metrics.csv and a
checkpoint.  Exit codes: 0 success, 1 usage/config error, 2 runtime error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import ElmanConfig, EsnConfig, build_elman, build_esn
from .datagen import (
    BounceConfig,
    CosineConfig,
    builtin_sprites,
    encode_char_corpus,
    gen_bouncing_dataset,
    gen_noisy_cosine,
    load_idx_sprites,
)
from .harness import (
    TaskSpec,
    TrainSettings,
    benchmark_scaling,
    evaluate_sequences,
    load_checkpoint,
    run_continual,
    run_online_training,
    run_zero_shot,
    save_checkpoint,
)
from .learners import ElmanLearner, EsnLearner, PTNCNLearner
from .numerics import make_rng
from .ptncn import Hyperparams, PTNCNConfig, build_model


class ConfigError(ValueError):
    """Raised for unknown keys, type mismatches, or missing fields."""


EXPERIMENTS = ("train", "eval", "zeroshot", "continual", "bench", "gendata")
MODEL_KINDS = ("ptncn", "elman-bptt", "elman-tbptt", "elman-rtrl",
               "elman-uoro", "esn")

# key -> default per section; None means required when the section is used.
_MODEL_KEYS = {
    "kind": "ptncn",
    "layer_dims": [20, 20],
    "state_activation": "tanh",
    "hidden_dim": 100,
    "reservoir_dim": 100,
    "spectral_radius": 0.9,
    "leak": 0.3,
    "input_variance": 0.01,
    "init_variance": 0.025,
    "eta": 0.01,
    "clip_norm": 1.0,
    "window": 5,
    "likelihood": None,   # derived from data when absent
}
_HYPER_KEYS = {
    "beta": 0.15, "gamma": 0.01, "lambda_sparse": 0.001, "xi": 0.4,
    "eta": 0.035, "max_norm_radius": 30.0, "sparsity_sign": "as_written",
    "update_inputs": "corrected", "hebbian_enabled": True,
    "always_unit_norm": False,
}
_DATA_KEYS = {
    "kind": None, "seed": 0,
    "sigma": 0.02, "dt": 0.05, "steps": 100000,
    "sprites": "digits", "frame_size": 64, "seq_len": 20, "num_objects": 2,
    "speed_min": 2.0, "speed_max": 5.0, "overlap_mode": "clamp_sum",
    "num_sequences": 100,
    "path": None, "vocab": None,
}
_TRAINING_KEYS = {"batch_size": 1, "epochs": 1, "metric": None, "log_every": 1}
_ZEROSHOT_KEYS = {"checkpoint": None, "correction": None}
_BENCH_KEYS = {"learners": ["ptncn", "uoro", "rtrl", "esn"],
               "widths": [32, 64, 128, 256], "reps": 20, "warmup": 5}


def _merge_section(name, raw, schema, required=()):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in section {name!r}")
    merged = dict(schema)
    merged.update(raw)
    for key in required:
        if merged.get(key) is None:
            raise ConfigError(f"missing required key {key!r} in section {name!r}")
    return merged


def parse_config(raw, overrides=(), seed=None):
    """Validate a raw config dict; fill defaults; apply --set overrides."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    raw = json.loads(json.dumps(raw))  # deep copy, reject non-JSON values
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key.path=value, got {item!r}")
        path, _, value = item.partition("=")
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass  # bare strings allowed
        node = raw
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set path {path!r} crosses a non-object")
        node[parts[-1]] = value

    allowed = {"experiment", "model", "hyperparams", "data", "training",
               "zeroshot", "continual", "bench"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level key {sorted(unknown)[0]!r}")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment must be one of {EXPERIMENTS}, got {experiment!r}"
        )

    if "model" in raw and raw["model"] == {}:
        raise ConfigError("section 'model' is empty; specify at least 'kind'")

    cfg = {"experiment": experiment}
    cfg["model"] = _merge_section("model", raw.get("model"), _MODEL_KEYS)
    if cfg["model"]["kind"] not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {cfg['model']['kind']!r}")
    cfg["hyperparams"] = _merge_section(
        "hyperparams", raw.get("hyperparams"), _HYPER_KEYS
    )
    if experiment == "continual":
        tasks = raw.get("continual", {}).get("tasks")
        if not tasks:
            raise ConfigError("continual experiment needs continual.tasks")
        cfg["continual"] = {
            "tasks": [
                _merge_section(f"continual.tasks[{i}]", t,
                               {**_DATA_KEYS, "name": f"T{i + 1}",
                                "val_sequences": 50, "frozen": False},
                               required=("kind",))
                for i, t in enumerate(tasks)
            ]
        }
    elif experiment == "bench":
        cfg["bench"] = _merge_section("bench", raw.get("bench"), _BENCH_KEYS)
    else:
        cfg["data"] = _merge_section(
            "data", raw.get("data"), _DATA_KEYS, required=("kind",)
        )
        if cfg["data"]["kind"] not in ("noisy_cosine", "bouncing", "char_corpus"):
            raise ConfigError(f"unknown data kind {cfg['data']['kind']!r}")
    cfg["training"] = _merge_section("training", raw.get("training"), _TRAINING_KEYS)
    cfg["zeroshot"] = _merge_section("zeroshot", raw.get("zeroshot"), _ZEROSHOT_KEYS)
    if experiment in ("eval", "zeroshot") and not cfg["zeroshot"]["checkpoint"]:
        raise ConfigError(f"{experiment} experiment needs zeroshot.checkpoint")
    if seed is not None:
        if "data" in cfg:
            cfg["data"]["seed"] = int(seed)
        for task in cfg.get("continual", {}).get("tasks", []):
            task["seed"] = int(seed) + int(task["seed"])
    return cfg


def _sprite_set(spec):
    if spec in ("digits", "glyphs", "clothing"):
        return builtin_sprites(spec)
    return load_idx_sprites(spec)


def _build_dataset(dcfg):
    """Returns (data, input_dim, default_likelihood)."""
    rng = make_rng(dcfg["seed"])
    if dcfg["kind"] == "noisy_cosine":
        stream = gen_noisy_cosine(
            CosineConfig(sigma=dcfg["sigma"], dt=dcfg["dt"], steps=dcfg["steps"]),
            rng,
        )
        return stream.reshape(-1, 1), 1, "gaussian"
    if dcfg["kind"] == "bouncing":
        sprites = _sprite_set(dcfg["sprites"])
        bcfg = BounceConfig(
            frame_size=dcfg["frame_size"], seq_len=dcfg["seq_len"],
            num_objects=dcfg["num_objects"],
            speed_range=(dcfg["speed_min"], dcfg["speed_max"]),
            overlap_mode=dcfg["overlap_mode"],
        )
        data = gen_bouncing_dataset(
            sprites, bcfg, dcfg["num_sequences"], seed=dcfg["seed"]
        )
        return data, dcfg["frame_size"] ** 2, "bernoulli"
    text = Path(dcfg["path"]).read_text(encoding="utf-8")
    stream = encode_char_corpus(text, vocab=dcfg["vocab"])
    return stream.one_hot(), stream.vocab_size, "categorical"


_OUTPUT_ACTS = {"gaussian": "identity", "bernoulli": "sigmoid",
                "categorical": "softmax"}
_DEFAULT_METRIC = {"gaussian": "squared_error", "bernoulli": "bernoulli_ce",
                   "categorical": "bpc"}


def _build_learner(mcfg, hcfg, input_dim, likelihood, seed):
    kind = mcfg["kind"]
    like = mcfg["likelihood"] or likelihood
    if kind == "ptncn":
        pcfg = PTNCNConfig(
            input_dim=input_dim, layer_dims=list(mcfg["layer_dims"]),
            state_activation=mcfg["state_activation"],
            output_activation=_OUTPUT_ACTS[like], output_likelihood=like,
        )
        model = build_model(pcfg, mcfg["init_variance"], make_rng(seed))
        return PTNCNLearner(model, Hyperparams(**hcfg)), model
    if kind.startswith("elman-"):
        ecfg = ElmanConfig(
            input_dim=input_dim, hidden_dim=mcfg["hidden_dim"],
            output_dim=input_dim, state_activation=mcfg["state_activation"],
            output_likelihood=like,
        )
        model = build_elman(ecfg, mcfg["init_variance"], make_rng(seed))
        algo = kind.split("-", 1)[1]
        learner = ElmanLearner(
            model, algo, eta=mcfg["eta"], window=mcfg["window"],
            clip_norm=mcfg["clip_norm"],
            rng=make_rng(seed + 1) if algo == "uoro" else None,
        )
        return learner, model
    scfg = EsnConfig(
        input_dim=input_dim, reservoir_dim=mcfg["reservoir_dim"],
        output_dim=input_dim, spectral_radius=mcfg["spectral_radius"],
        leak=mcfg["leak"], input_variance=mcfg["input_variance"],
        output_likelihood=like,
    )
    model = build_esn(scfg, make_rng(seed))
    return EsnLearner(model, eta=mcfg["eta"]), model


def _write_summary(out_dir, lines):
    with open(out_dir / "summary.txt", "w", encoding="utf-8") as fh:
        for key, value in lines:
            fh.write(f"{key}={value}\n")


def dispatch(cfg, out_dir, include_timing=True):
    """Run the configured experiment; write artifacts into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")

    experiment = cfg["experiment"]
    if experiment == "bench":
        report = benchmark_scaling(
            cfg["bench"]["learners"], cfg["bench"]["widths"],
            reps=cfg["bench"]["reps"], warmup=cfg["bench"]["warmup"],
        )
        report.to_csv(out_dir / "scaling.csv")
        _write_summary(out_dir, [(f"slope_{k}", f"{v:.4f}")
                                 for k, v in sorted(report.slopes.items())])
        return 0

    if experiment == "continual":
        tasks = []
        for tcfg in cfg["continual"]["tasks"]:
            data, input_dim, like = _build_dataset(tcfg)
            val_cfg = dict(tcfg)
            val_cfg["seed"] = tcfg["seed"] + 7919  # disjoint validation stream
            val_cfg["num_sequences"] = tcfg["val_sequences"]
            val, _, _ = _build_dataset(val_cfg)
            tasks.append(TaskSpec(name=tcfg["name"], train_data=data,
                                  val_data=val, frozen=tcfg["frozen"]))
        metric = cfg["training"]["metric"] or _DEFAULT_METRIC[like]
        seed = cfg["continual"]["tasks"][0]["seed"]

        def factory():
            learner, _ = _build_learner(
                cfg["model"], cfg["hyperparams"], input_dim, like, seed + 1
            )
            return learner

        matrix = run_continual(
            factory, tasks, metric=metric,
            settings=TrainSettings(metric=metric,
                                   batch_size=cfg["training"]["batch_size"]),
        )
        with open(out_dir / "task_matrix.csv", "w", encoding="utf-8") as fh:
            fh.write("after_task,eval_task,value\n")
            for i, row in enumerate(matrix.rows):
                for j, value in enumerate(row):
                    fh.write(f"{matrix.names[i]},{matrix.names[j]},{value!r}\n")
        lines = [("tasks", " ".join(matrix.names))]
        lines += [(f"forgetting_{matrix.names[j]}", f"{matrix.forgetting(j):.6f}")
                  for j in range(len(matrix.names) - 1)]
        _write_summary(out_dir, lines)
        return 0

    data, input_dim, like = _build_dataset(cfg["data"])
    metric = cfg["training"]["metric"] or _DEFAULT_METRIC[like]

    if experiment == "gendata":
        np.savez_compressed(out_dir / "data.npz", data=data.astype(np.float32))
        _write_summary(out_dir, [("shape", "x".join(map(str, data.shape))),
                                 ("input_dim", input_dim)])
        return 0

    if experiment in ("eval", "zeroshot"):
        model, meta = load_checkpoint(cfg["zeroshot"]["checkpoint"])
        hp = meta["hyperparams"] or Hyperparams(**cfg["hyperparams"])
        if experiment == "eval":
            learner = PTNCNLearner(model, hp, train=False)
            value = evaluate_sequences(learner, data, metric)
            _write_summary(out_dir, [("metric", metric), ("value", f"{value!r}")])
            return 0
        restrict = cfg["zeroshot"]["correction"]
        lines = [("metric", metric)]
        for flag in ([restrict] if restrict is not None else [True, False]):
            value = run_zero_shot(model, data, correction_enabled=flag, hp=hp,
                                  metric=metric)
            lines.append((f"correction_{'on' if flag else 'off'}", f"{value!r}"))
        _write_summary(out_dir, lines)
        return 0

    # train
    learner, model = _build_learner(
        cfg["model"], cfg["hyperparams"], input_dim, like,
        cfg["data"]["seed"] + 1,
    )
    settings = TrainSettings(metric=metric,
                             batch_size=cfg["training"]["batch_size"],
                             log_every=cfg["training"]["log_every"])
    log = None
    for _ in range(cfg["training"]["epochs"]):
        epoch_log = run_online_training(learner, data, settings)
        log = epoch_log if log is None else log
        if log is not epoch_log:
            for step, kind, value, wall in epoch_log.records:
                log.append(step + log.records[-1][0] + 1, kind, value, wall)
    log.to_csv(out_dir / "metrics.csv", include_timing=include_timing)
    hp = Hyperparams(**cfg["hyperparams"]) if cfg["model"]["kind"] == "ptncn" else None
    save_checkpoint(model, out_dir / "model.ckpt", hyperparams=hp)
    _write_summary(out_dir, [
        ("metric", metric),
        ("steps", len(log)),
        ("mean", f"{log.mean()!r}"),
        ("final", f"{log.records[-1][2]!r}"),
    ])
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="tncn",
        description="Online sequence-learning experiments",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=False,
                        help="JSON config file (defaults may suffice)")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        dest="overrides", help="override config key.path=value")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="runs/latest")
    parser.add_argument("--no-timing", action="store_true",
                        help="omit wall-time column from metric CSVs")
    args = parser.parse_args(argv)

    try:
        raw = {}
        if args.config:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        raw.setdefault("experiment", args.experiment)
        if raw["experiment"] != args.experiment:
            raise ConfigError(
                f"config experiment {raw['experiment']!r} does not match "
                f"subcommand {args.experiment!r}"
            )
        cfg = parse_config(raw, overrides=args.overrides, seed=args.seed)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return dispatch(cfg, args.out, include_timing=not args.no_timing)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
