"""Command-line pipeline: ingest, cooccur, train, eval, synth.

Settings come from an optional flat ``key = value`` file (``--config``) and
are overridden by command-line flags. Exit status is 0 on success, 2 for
usage or configuration errors and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .evaluation import (
    classification_summary,
    classify_sectors,
    hedge_experiment,
    hedge_summary,
    knn_neighbors,
    write_classification_csv,
    write_hedge_trials_csv,
)
from .panel import PanelError, ReturnsPanel, load_panel, slice_panel, write_wide_csv
from .sampler import (
    TestConfig,
    build_tables,
    p_value_histogram,
    write_histogram_csv,
    write_tables_csv,
)
from .similarity import (
    WindowConfig,
    build_cooccurrence,
    load_cooccurrence,
    pearson_matrix,
    save_cooccurrence,
    write_cooccurrence_csv,
)
from .testkit import FactorModelSpec, generate_factor_panel
from .trainer import (
    TrainConfig,
    TrainingError,
    load_embeddings_csv,
    save_embeddings_binary,
    save_embeddings_csv,
    save_train_log,
    train,
)

logger = logging.getLogger("assetembed")

LOSS_NAMES = {
    "individual-sigmoid": "individual_sigmoid",
    "aggregate-sigmoid": "aggregate_sigmoid",
    "hybrid-sigmoid-softmax": "hybrid_sigmoid_softmax",
    "sigmoid-softmax": "hybrid_sigmoid_softmax",
}


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # input
    input: Optional[str] = None
    format: str = "returns"
    layout: str = "wide"
    labels: Optional[str] = None
    strict: bool = True
    out: str = "out"
    # date splits (inclusive, compared as strings)
    train_start: Optional[str] = None
    train_end: Optional[str] = None
    test_start: Optional[str] = None
    test_end: Optional[str] = None
    # windows
    window: int = 22
    stride: int = 5
    top_k: int = 5
    similarity: str = "pearson"
    # proportion test
    alpha_pos: float = 0.05
    alpha_neg: float = 0.3
    bins: int = 20
    # training
    loss: str = "individual_sigmoid"
    dim: int = 16
    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.001
    num_pos: int = 5
    num_neg: int = 20
    lam: float = 0.001
    norm_mode: str = "penalty"
    lr_factor: float = 0.8
    lr_patience: int = 3
    min_lr: float = 1e-6
    # evaluation
    embeddings: Optional[str] = None
    folds: int = 5
    pool_size: int = 25
    repeats: int = 100
    anchor: Optional[str] = None
    neighbors: int = 5
    # synthetic panels
    blocks: int = 3
    assets_per_block: int = 20
    length: int = 1500
    factor_vol: float = 0.01
    idio_vol: float = 0.005
    cross_corr: float = 0.0
    # run
    seed: int = 0
    threads: Optional[int] = None

    def window_config(self) -> WindowConfig:
        return WindowConfig(self.window, self.stride, self.top_k, self.similarity)

    def test_config(self) -> TestConfig:
        return TestConfig(self.alpha_pos, self.alpha_neg)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.loss, dim=self.dim, epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.lr, num_pos=self.num_pos, num_neg=self.num_neg, lam=self.lam,
            norm_mode=self.norm_mode, lr_factor=self.lr_factor, lr_patience=self.lr_patience,
            min_lr=self.min_lr, seed=self.seed,
        )

    def digest(self, keys) -> str:
        d = dataclasses.asdict(self)
        blob = json.dumps({k: d[k] for k in sorted(keys)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


PANEL_KEYS = ("input", "format", "layout", "labels", "strict", "train_start", "train_end")
COOC_KEYS = PANEL_KEYS + ("window", "stride", "top_k", "similarity")
TRAIN_KEYS = COOC_KEYS + (
    "alpha_pos", "alpha_neg", "loss", "dim", "epochs", "batch_size", "lr", "num_pos",
    "num_neg", "lam", "norm_mode", "lr_factor", "lr_patience", "min_lr", "seed",
)

_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, value):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    if value is None or not isinstance(value, str):
        return value
    try:
        if "bool" in kind:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {key}") from None
    return value


def read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(PipelineConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = _coerce(f.name, v)
    if "loss" in values:
        name = str(values["loss"])
        values["loss"] = LOSS_NAMES.get(name, name)
    cfg = PipelineConfig(**values)
    try:
        cfg.window_config()
        cfg.test_config()
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


# --- stage helpers ----------------------------------------------------------


def _load_input(cfg: PipelineConfig) -> ReturnsPanel:
    if not cfg.input:
        raise ConfigError("no input panel given (--input)")
    return load_panel(cfg.input, cfg.format, cfg.layout, cfg.labels, cfg.strict)


def _train_panel(cfg: PipelineConfig, panel: ReturnsPanel) -> ReturnsPanel:
    if cfg.train_start or cfg.train_end:
        return slice_panel(panel, cfg.train_start or panel.dates[0], cfg.train_end or panel.dates[-1])
    return panel


def _write_manifest(out: Path, stage: str, cfg: PipelineConfig, keys, timings, extra=None):
    manifest = {
        "stage": stage,
        "config_hash": cfg.digest(keys),
        "config": {k: getattr(cfg, k) for k in sorted(keys)},
        "versions": {
            "assetembed": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "timings_sec": timings,
    }
    manifest.update(extra or {})
    (out / f"manifest-{stage}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _cooccurrence(cfg: PipelineConfig, panel: ReturnsPanel, out: Path):
    """Build or reuse the co-occurrence cache for ``cfg``."""
    key = hashlib.sha256(cfg.digest(COOC_KEYS).encode())
    key.update(Path(cfg.input).read_bytes())  # edits to the input invalidate the cache
    cache = out / "cache" / f"cooc-{key.hexdigest()[:16]}.cooc"
    if cache.exists():
        logger.info("reusing %s", cache)
        return load_cooccurrence(cache, panel.asset_ids), True
    cooc = build_cooccurrence(panel, cfg.window_config(), threads=cfg.threads)
    cache.parent.mkdir(parents=True, exist_ok=True)
    save_cooccurrence(cooc, cache)
    return cooc, False


# --- commands ---------------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = _load_input(cfg)
    write_wide_csv(panel, out / "returns.csv", out / "labels.csv")
    _write_manifest(out, "ingest", cfg, PANEL_KEYS, {}, {
        "n_assets": panel.n_assets, "n_dates": panel.n_dates,
        "first_date": panel.dates[0], "last_date": panel.dates[-1],
        "dropped_assets": list(panel.dropped),
    })
    print(f"{panel.n_assets} assets x {panel.n_dates} dates -> {out / 'returns.csv'}")


def cmd_cooccur(cfg: PipelineConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    panel = _train_panel(cfg, _load_input(cfg))
    t1 = time.perf_counter()
    cooc, reused = _cooccurrence(cfg, panel, out)
    t2 = time.perf_counter()
    save_cooccurrence(cooc, out / "cooccurrence.cooc")
    write_cooccurrence_csv(cooc, out / "cooccurrence.csv")
    tables = build_tables(cooc, cfg.test_config())
    hist = p_value_histogram(tables, cfg.bins)
    write_histogram_csv(hist, out / "pvalue_histogram.csv")
    write_tables_csv(tables, out / "sampling_tables.csv")
    row_sums = cooc.counts.sum(axis=1)
    expected = cfg.top_k * cooc.num_windows
    _write_manifest(out, "cooccur", cfg, COOC_KEYS,
                    {"load": t1 - t0, "cooccurrence": t2 - t1, "total": time.perf_counter() - t0},
                    {
                        "num_windows": cooc.num_windows,
                        "row_sum_expected": expected,
                        "row_sums_ok": bool(np.all(row_sums == expected)),
                        "cache_reused": reused,
                        "empty_anchors": [panel.asset_ids[i] for i in tables.empty_anchors()],
                    })
    print(f"W={cooc.num_windows} windows, row sums {'ok' if np.all(row_sums == expected) else 'MISMATCH'}"
          f" (k*W={expected}); outputs in {out}")


def cmd_train(cfg: PipelineConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    panel = _train_panel(cfg, _load_input(cfg))
    cooc, reused = _cooccurrence(cfg, panel, out)
    tables = build_tables(cooc, cfg.test_config())
    t1 = time.perf_counter()
    emb, log = train(tables, cfg.train_config(), panel.asset_ids)
    t2 = time.perf_counter()
    save_embeddings_csv(emb, out / "embeddings.csv")
    save_embeddings_binary(emb, out / "embeddings.embd")
    save_train_log(log, out / "train_log.csv")
    _write_manifest(out, "train", cfg, TRAIN_KEYS,
                    {"tables": t1 - t0, "train": t2 - t1},
                    {"skipped_anchors": [panel.asset_ids[i] for i in log.skipped_anchors],
                     "cooccurrence_cache_reused": reused,
                     "final_loss": log.records[-1].loss})
    print(f"trained {len(emb.asset_ids)} x {emb.dim} embeddings ({cfg.loss}); "
          f"final loss {log.records[-1].loss:.4f}; outputs in {out}")


def _embeddings(cfg: PipelineConfig):
    path = Path(cfg.embeddings or Path(cfg.out) / "embeddings.csv")
    if not path.exists():
        raise ConfigError(f"embeddings not found: {path} (run 'train' first)")
    return load_embeddings_csv(path)


def cmd_eval(cfg: PipelineConfig, task: str) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    emb = _embeddings(cfg)
    if task == "neighbors":
        if not cfg.anchor:
            raise ConfigError("neighbors task needs --anchor")
        if cfg.anchor not in emb.asset_ids:
            raise ConfigError(f"unknown anchor {cfg.anchor!r}")
        rows = knn_neighbors(emb, cfg.anchor, cfg.neighbors)
        labels = {}
        if cfg.labels:
            from .panel import load_labels
            labels = load_labels(cfg.labels)
        with open(out / "neighbors.csv", "w", encoding="utf-8") as fh:
            fh.write("rank,asset_id,sector,industry,similarity\n")
            for r, (a, s) in enumerate(rows, 1):
                sec, ind = labels.get(a, ("", ""))
                fh.write(f"{r},{a},{sec},{ind},{s!r}\n")
        text = "\n".join(f"{r:>2}  {a:<10} {labels.get(a, ('',))[0]:<24} {s:.4f}"
                         for r, (a, s) in enumerate(rows, 1))
        (out / "neighbors.txt").write_text(f"nearest neighbours of {cfg.anchor}\n{text}\n")
        print(text)
        return

    panel = _load_input(cfg)
    if task == "sector":
        if panel.labels is None:
            raise ConfigError("sector task needs --labels")
        if tuple(emb.asset_ids) != panel.asset_ids:
            raise ConfigError("embedding assets do not match the input panel")
        sectors = panel.sectors()
        report = classify_sectors(emb, sectors, cfg.folds, cfg.seed)
        base_panel = _train_panel(cfg, panel)
        baseline = classify_sectors(pearson_matrix(base_panel.returns), sectors, cfg.folds,
                                    cfg.seed, asset_ids=panel.asset_ids)
        write_classification_csv(report, out / "sector_report.csv")
        write_classification_csv(baseline, out / "sector_baseline_correlation.csv")
        text = (f"embeddings\n{classification_summary(report)}\n\n"
                f"correlation-row features\n{classification_summary(baseline)}\n")
        (out / "sector_summary.txt").write_text(text)
        print(text, end="")
    elif task == "hedge":
        if not (cfg.train_end and cfg.test_start):
            raise ConfigError("hedge task needs train_end and test_start")
        train_panel = _train_panel(cfg, panel)
        test_panel = slice_panel(panel, cfg.test_start, cfg.test_end or panel.dates[-1])
        if cfg.pool_size >= panel.n_assets:
            raise ConfigError(f"pool_size {cfg.pool_size} must be below N={panel.n_assets}")
        report = hedge_experiment(train_panel, test_panel, "embedding", emb,
                                  cfg.pool_size, cfg.repeats, cfg.seed)
        write_hedge_trials_csv(report, out / "hedge_trials.csv")
        with open(out / "hedge_report.csv", "w", encoding="utf-8") as fh:
            fh.write("method,mean_vol,t_stat,df,p_value\n")
            fh.write(f"embedding,{report.method_mean!r},{report.t_stat!r},{report.df!r},{report.p_value!r}\n")
            fh.write(f"pearson,{report.baseline_mean!r},,,\n")
        text = hedge_summary(report) + "\n"
        (out / "hedge_summary.txt").write_text(text)
        print(text, end="")
    else:
        raise ConfigError(f"unknown eval task {task!r}")


def cmd_synth(cfg: PipelineConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = FactorModelSpec(cfg.blocks, cfg.assets_per_block, cfg.length, cfg.factor_vol,
                           cfg.idio_vol, cfg.cross_corr, cfg.seed)
    panel = generate_factor_panel(spec)
    write_wide_csv(panel, out / "synth_returns.csv", out / "synth_labels.csv")
    print(f"wrote {panel.n_assets} x {panel.n_dates} synthetic panel to {out / 'synth_returns.csv'}")


# --- argument parsing -------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--input", help="returns or prices CSV")
    p.add_argument("--format", choices=["prices", "returns"])
    p.add_argument("--layout", choices=["wide", "long"])
    p.add_argument("--labels", help="asset_id,sector,industry CSV")
    p.add_argument("--lenient", dest="strict", action="store_const", const=False,
                   help="drop assets with missing values instead of failing")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    for key in ("train_start", "train_end", "test_start", "test_end"):
        p.add_argument("--" + key.replace("_", "-"), dest=key)


def _add_window(p):
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--similarity", choices=["pearson"])
    p.add_argument("--alpha-pos", dest="alpha_pos", type=float)
    p.add_argument("--alpha-neg", dest="alpha_neg", type=float)


def _add_train(p):
    p.add_argument("--loss", choices=sorted(LOSS_NAMES) + sorted(set(LOSS_NAMES.values())))
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--num-pos", dest="num_pos", type=int)
    p.add_argument("--num-neg", dest="num_neg", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--norm-mode", dest="norm_mode", choices=["penalty", "hard_renorm", "both"])
    p.add_argument("--lr-patience", dest="lr_patience", type=int)
    p.add_argument("--min-lr", dest="min_lr", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="assetembed", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and validate a panel, write normalised returns")
    _add_common(p)

    p = sub.add_parser("cooccur", help="co-occurrence counts and p-value histogram")
    _add_common(p)
    _add_window(p)
    p.add_argument("--bins", type=int)

    p = sub.add_parser("train", help="train embeddings")
    _add_common(p)
    _add_window(p)
    _add_train(p)

    p = sub.add_parser("eval", help="evaluate embeddings")
    p.add_argument("task", choices=["sector", "hedge", "neighbors"])
    _add_common(p)
    p.add_argument("--embeddings", help="embeddings CSV (default OUT/embeddings.csv)")
    p.add_argument("--folds", type=int)
    p.add_argument("--pool-size", dest="pool_size", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--anchor")
    p.add_argument("-m", "--neighbors", type=int)

    p = sub.add_parser("synth", help="write a synthetic block-factor panel")
    _add_common(p)
    p.add_argument("--blocks", type=int)
    p.add_argument("--assets-per-block", dest="assets_per_block", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--factor-vol", dest="factor_vol", type=float)
    p.add_argument("--idio-vol", dest="idio_vol", type=float)
    p.add_argument("--cross-corr", dest="cross_corr", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "cooccur":
            cmd_cooccur(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, args.task)
        elif args.command == "synth":
            cmd_synth(cfg)
    except (ConfigError, PanelError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
