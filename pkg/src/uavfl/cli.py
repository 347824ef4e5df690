"""Experiment orchestration CLI.

Subcommands
-----------
``outage``    Outage probability versus the density ratio lambda_u / lambda_a:
              closed-form quadrature next to its Monte Carlo oracle.
              Columns: ratio, p_out_analytical, quad_error, p_out_mc,
              mc_halfwidth, trials.
``fl``        Federated-training grid over p_out and client counts.
              Columns: p_out, K, partition_mode, seed, final_accuracy.
              Per-cell round traces land under <out>/traces/.
``fig3``      Two accuracy-versus-ratio pipelines: masks simulated from
              geometry SIR draws per round, versus the closed-form outage
              probability pushed through the accuracy-vs-p_out relation.
              Columns: ratio, acc_simulated, acc_analytical.
``validate``  Cross-engine oracle checks (association CDF, interference
              Laplace transform, outage probability). Columns: check, detail,
              value, bound, status.

Configuration is a flat key=value file with dotted section names (full-line
``#`` comments only); unknown or duplicate keys are hard errors so silent
drift from the reproduction defaults is impossible. Flags override file
values. Every CSV ends with provenance footer comments (config hash, seeds,
package version), and reruns with the same config and seeds reproduce every
byte at any ``--jobs`` level.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__, analysis, fl_core, geometry, nn
from .data_io import LabeledDataset, load_idx, partition, split_train_test, synthesize_digits
from .seeds import (
    STREAM_GEOM_MASK,
    STREAM_MC,
    STREAM_MODEL_INIT,
    STREAM_PARTITION,
    STREAM_SPLIT,
    generator,
    substream,
)


class ConfigError(ValueError):
    """Malformed config file or invalid key/value."""


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

def _f(text: str) -> float:
    return float(text)


def _i(text: str) -> int:
    return int(text)


def _s(text: str) -> str:
    return text


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _p_out_grid(text: str) -> Tuple[Union[float, str], ...]:
    out: List[Union[float, str]] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(part if part == fl_core.FROM_GEOMETRY else float(part))
    return tuple(out)


def _opt_f(text: str) -> Optional[float]:
    return None if text == "auto" else float(text)


# key -> (parser, default text or None when the key has no default)
_SCHEMA = {
    "network.lambda_u": (_f, "1e-5"),
    "network.ratio": (_f, None),      # lambda_u / lambda_a; exclusive with lambda_a
    "network.lambda_a": (_f, None),
    "network.alpha": (_f, "2.75"),
    "network.ell": (_f, "0.25"),
    "network.c1": (_f, "0.1581"),
    "network.c2": (_f, "43.9142"),
    "network.eta": (_f, "0.5"),
    "network.altitude": (_f, "100.0"),
    "network.window_radius": (_opt_f, "auto"),
    "fl.num_clients": (_i, "30"),
    "fl.rounds": (_i, "200"),
    "fl.samples_per_client": (_i, "20"),
    "fl.partition": (_s, "noniid"),
    "net.input_dim": (_i, "784"),
    "net.hidden_dims": (_ints, "64"),
    "net.learning_rate": (_f, "0.05"),
    "data.source": (_s, "synthetic"),
    "data.per_class": (_i, "200"),
    "data.noise": (_f, "0.55"),
    "data.dir": (_s, ""),
    "data.images": (_s, "train-images-idx3-ubyte"),
    "data.labels": (_s, "train-labels-idx1-ubyte"),
    "data.corpus_seed": (_i, "7"),
    "sweep.ratio": (_floats, "10,50,100,200,300"),
    "sweep.p_out": (_p_out_grid, "0,0.3,0.6,0.9"),
    "sweep.num_clients": (_ints, "10,30,50"),
    "fig3.curve_p_out": (_floats, "0.55,0.6,0.65,0.7"),
    "seeds": (_ints, "1,2,3,4,5"),
    "trials": (_i, "100000"),
    "output_dir": (_s, "out"),
}


def parse_config_text(text: str, origin: str = "<config>") -> Dict[str, str]:
    """Raw key -> value text pairs; rejects unknown and duplicate keys."""
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed, fully resolved experiment description."""

    lambda_u: float
    lambda_a: float
    alpha: float
    ell: float
    c1: float
    c2: float
    eta: float
    altitude: float
    window_radius: Optional[float]
    num_clients: int
    rounds: int
    samples_per_client: int
    partition_mode: str
    input_dim: int
    hidden_dims: Tuple[int, ...]
    learning_rate: float
    data_source: str
    per_class: int
    noise: float
    data_dir: str
    images_name: str
    labels_name: str
    corpus_seed: int
    ratio_grid: Tuple[float, ...]
    p_out_grid: Tuple[Union[float, str], ...]
    clients_grid: Tuple[int, ...]
    curve_p_out: Tuple[float, ...]
    seeds: Tuple[int, ...]
    trials: int
    output_dir: str

    def network(self, ratio: Optional[float] = None) -> geometry.NetworkConfig:
        """NetworkConfig at this experiment's parameters, optionally at a
        different density ratio (window recomputed unless pinned)."""
        lambda_a = self.lambda_u / ratio if ratio is not None else self.lambda_a
        return geometry.NetworkConfig(
            lambda_u=self.lambda_u,
            lambda_a=lambda_a,
            alpha=self.alpha,
            ell=self.ell,
            c1=self.c1,
            c2=self.c2,
            eta=self.eta,
            altitude_law=self.altitude,
            window_radius=self.window_radius,
        )


def resolve_config(
    raw: Dict[str, str], overrides: Optional[Dict[str, str]] = None
) -> Tuple[ExperimentConfig, Dict[str, str]]:
    """Apply defaults and flag overrides; return the typed config plus the
    canonical resolved mapping used for hashing and provenance."""
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if key not in _SCHEMA:
            raise ConfigError(f"override for unknown key {key!r}")
        merged[key] = value

    values: Dict[str, object] = {}
    resolved: Dict[str, str] = {}
    for key, (parse, default) in _SCHEMA.items():
        text = merged.get(key, default)
        if text is None:
            values[key] = None
            resolved[key] = ""
            continue
        try:
            values[key] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: cannot parse {text!r}") from exc
        resolved[key] = text

    if values["network.ratio"] is not None and values["network.lambda_a"] is not None:
        raise ConfigError("set network.ratio or network.lambda_a, not both")
    lambda_u = values["network.lambda_u"]
    if values["network.lambda_a"] is not None:
        lambda_a = values["network.lambda_a"]
    else:
        ratio = values["network.ratio"] if values["network.ratio"] is not None else 100.0
        lambda_a = lambda_u / ratio
    resolved["network.lambda_a"] = repr(float(lambda_a))

    if not values["seeds"]:
        raise ConfigError("seeds must be non-empty")
    if len(set(values["seeds"])) != len(values["seeds"]):
        raise ConfigError("seeds must be distinct")
    for grid_key in ("sweep.ratio", "sweep.p_out", "sweep.num_clients",
                     "fig3.curve_p_out"):
        if not values[grid_key]:
            raise ConfigError(f"{grid_key} must be non-empty")
    if values["data.source"] not in ("synthetic", "idx"):
        raise ConfigError("data.source must be 'synthetic' or 'idx'")

    cfg = ExperimentConfig(
        lambda_u=lambda_u,
        lambda_a=lambda_a,
        alpha=values["network.alpha"],
        ell=values["network.ell"],
        c1=values["network.c1"],
        c2=values["network.c2"],
        eta=values["network.eta"],
        altitude=values["network.altitude"],
        window_radius=values["network.window_radius"],
        num_clients=values["fl.num_clients"],
        rounds=values["fl.rounds"],
        samples_per_client=values["fl.samples_per_client"],
        partition_mode=values["fl.partition"],
        input_dim=values["net.input_dim"],
        hidden_dims=values["net.hidden_dims"],
        learning_rate=values["net.learning_rate"],
        data_source=values["data.source"],
        per_class=values["data.per_class"],
        noise=values["data.noise"],
        data_dir=values["data.dir"],
        images_name=values["data.images"],
        labels_name=values["data.labels"],
        corpus_seed=values["data.corpus_seed"],
        ratio_grid=values["sweep.ratio"],
        p_out_grid=values["sweep.p_out"],
        clients_grid=values["sweep.num_clients"],
        curve_p_out=values["fig3.curve_p_out"],
        seeds=values["seeds"],
        trials=values["trials"],
        output_dir=values["output_dir"],
    )
    return cfg, resolved


def config_hash(resolved: Dict[str, str]) -> str:
    canon = "\n".join(f"{k}={resolved[k]}" for k in sorted(resolved))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows, footer: Sequence[str]):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(_fmt(cell) for cell in row) for row in rows]
    lines += [f"# {entry}" for entry in footer]
    path.write_text("\n".join(lines) + "\n")


def _footer(resolved: Dict[str, str], cfg: ExperimentConfig, extra=()) -> List[str]:
    return [
        f"config_hash={config_hash(resolved)}",
        "seeds=" + ",".join(str(s) for s in cfg.seeds),
        f"version={__version__}",
        *extra,
    ]


# ---------------------------------------------------------------------------
# Data pipeline
# ---------------------------------------------------------------------------

def _corpus_spec(cfg: ExperimentConfig, data_dir_flag: Optional[str]):
    """Picklable description of the corpus for worker processes."""
    if cfg.data_source == "synthetic":
        return ("synthetic", cfg.per_class, cfg.noise, cfg.corpus_seed, cfg.input_dim)
    data_dir = data_dir_flag or cfg.data_dir or os.environ.get("UAVFL_DATA_DIR", "")
    if not data_dir:
        raise ConfigError(
            "data.source=idx needs data.dir, --data-dir, or UAVFL_DATA_DIR"
        )
    base = Path(data_dir)
    return ("idx", str(base / cfg.images_name), str(base / cfg.labels_name))


def build_corpus(spec) -> LabeledDataset:
    if spec[0] == "synthetic":
        _, per_class, noise, corpus_seed, dim = spec
        return synthesize_digits(per_class, noise, corpus_seed, dim=dim)
    _, images_path, labels_path = spec
    return load_idx(images_path, labels_path)


def _concat(datasets: Sequence[LabeledDataset]) -> LabeledDataset:
    return LabeledDataset(
        features=np.concatenate([ds.features for ds in datasets]),
        labels=np.concatenate([ds.labels for ds in datasets]),
        class_count=datasets[0].class_count,
    )


def client_gross_size(samples_per_client: int) -> int:
    """Smallest per-client draw whose 2:1 split leaves samples_per_client
    training items (e.g. 30 when 20 are to be kept for training)."""
    guess = samples_per_client + samples_per_client // 2
    for gross in range(guess, guess + 3):
        if gross - gross // 3 == samples_per_client:
            return gross
    raise ValueError(f"no gross size yields {samples_per_client} training items")


def build_fl_data(corpus: LabeledDataset, num_clients: int,
                  samples_per_client: int, mode: str, seed: int):
    """Partition, then split 2:1 inside each client.

    Every client draws its gross share from the corpus, keeps
    samples_per_client items for training, and contributes the rest to the
    network-wide test union. Returns (train partition, test union,
    train+test union).
    """
    gross = client_gross_size(samples_per_client)
    grosses = partition(
        corpus, num_clients, gross, mode, substream(seed, STREAM_PARTITION)
    )
    train_shares, test_shares = [], []
    for i, client_ds in enumerate(grosses.client_datasets):
        train_i, test_i = split_train_test(
            client_ds, substream(seed, STREAM_SPLIT, i)
        )
        train_shares.append(train_i)
        test_shares.append(test_i)
    train_partition = type(grosses)(
        client_datasets=tuple(train_shares), mode=mode
    )
    return train_partition, _concat(test_shares), _concat(train_shares + test_shares)


def _net_spec(cfg_like: dict, seed: int) -> nn.NetSpec:
    init_seed = int(
        generator(seed, STREAM_MODEL_INIT).integers(0, 2**63 - 1)
    )
    return nn.NetSpec(
        input_dim=cfg_like["input_dim"],
        hidden_dims=tuple(cfg_like["hidden_dims"]),
        output_dim=10,
        learning_rate=cfg_like["learning_rate"],
        init_seed=init_seed,
    )


# ---------------------------------------------------------------------------
# Training cells (module-level for pickling under --jobs)
# ---------------------------------------------------------------------------

def _trace_rows(trace: fl_core.TrainingTrace):
    rows = []
    for log in trace.rounds:
        rows.append((
            log.round_index,
            log.participating_size,
            log.global_accuracy,
            log.full_data_accuracy,
            log.aggregated,
            "".join("1" if b else "0" for b in log.mask),
        ))
    return rows


_TRACE_HEADER = (
    "round", "participating_size", "global_accuracy", "full_data_accuracy",
    "aggregated", "mask",
)


def _fl_cell(corpus_spec, cell: dict):
    """One (K, p_out, seed) training run; returns final accuracy + trace."""
    corpus = build_corpus(corpus_spec)
    if corpus.features.shape[1] != cell["input_dim"]:
        raise ConfigError(
            f"net.input_dim {cell['input_dim']} does not match corpus "
            f"feature length {corpus.features.shape[1]}"
        )
    data, eval_union, full_union = build_fl_data(
        corpus, cell["K"], cell["samples_per_client"], cell["mode"], cell["seed"]
    )
    fl = fl_core.FlConfig(
        num_clients=cell["K"],
        rounds=cell["rounds"],
        samples_per_client=cell["samples_per_client"],
        partition=cell["mode"],
        p_out=cell["p_out"],
        net_spec=_net_spec(cell, cell["seed"]),
        master_seed=cell["seed"],
    )
    trace = fl_core.run_training(fl, data, eval_union, full_eval_set=full_union)
    return trace.final_accuracy, _trace_rows(trace)


def _fig3_sim_cell(corpus_spec, network: geometry.NetworkConfig, cell: dict):
    """One geometry-masked training run for the simulated fig3 pipeline.

    Each round's mask comes from fresh SIR draws (one uplink realization per
    client) instead of a Bernoulli stream; identical partition/init seeds to
    the Bernoulli pipeline, so the two differ only in the mask model.
    """
    corpus = build_corpus(corpus_spec)
    data, eval_union, full_union = build_fl_data(
        corpus, cell["K"], cell["samples_per_client"], cell["mode"], cell["seed"]
    )
    fl = fl_core.FlConfig(
        num_clients=cell["K"],
        rounds=cell["rounds"],
        samples_per_client=cell["samples_per_client"],
        partition=cell["mode"],
        p_out=0.0,  # unused: the mask source overrides the Bernoulli stream
        net_spec=_net_spec(cell, cell["seed"]),
        master_seed=cell["seed"],
    )
    geom_rng = generator(cell["seed"], STREAM_GEOM_MASK)

    def mask_source(_round_index: int) -> np.ndarray:
        return np.array(
            [
                geometry.sample_uplink_sir(network, geom_rng).sir > network.eta
                for _ in range(cell["K"])
            ]
        )

    trace = fl_core.run_training(
        fl, data, eval_union, full_eval_set=full_union, mask_source=mask_source
    )
    return trace.final_accuracy, _trace_rows(trace)


def _run_cells(worker, tasks, jobs: int):
    """Evaluate cells, preserving task order at any parallelism level."""
    if jobs <= 1:
        return [worker(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(worker, *task) for task in tasks]
        return [fut.result() for fut in futures]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_outage(cfg: ExperimentConfig, resolved, args) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    rows, failures = [], []
    for index, ratio in enumerate(cfg.ratio_grid):
        network = cfg.network(ratio=ratio)
        p_analytical = quad_error = None
        try:
            result = analysis.outage_probability(network)
            p_analytical, quad_error = result.p_out, result.error_estimate
        except Exception as exc:  # report per-row, keep sweeping
            failures.append(f"ratio {ratio:g}: analytical failed: {exc}")
        p_mc = halfwidth = None
        trials = cfg.trials if args.trials is None else args.trials
        if trials > 0:
            try:
                mc = geometry.estimate_outage_mc(
                    network,
                    trials,
                    substream(cfg.seeds[0], STREAM_MC, index),
                    jobs=args.jobs,
                )
                p_mc, halfwidth = mc.mean, mc.half_width_95
            except Exception as exc:
                failures.append(f"ratio {ratio:g}: Monte Carlo failed: {exc}")
        rows.append((ratio, p_analytical, quad_error, p_mc, halfwidth,
                     trials if trials > 0 else None))
    write_csv(
        out_dir / "outage.csv",
        ("ratio", "p_out_analytical", "quad_error", "p_out_mc", "mc_halfwidth",
         "trials"),
        rows,
        _footer(resolved, cfg),
    )
    for failure in failures:
        print(f"error: {failure}", file=sys.stderr)
    print(f"wrote {out_dir / 'outage.csv'} ({len(rows)} rows)")
    return 1 if failures else 0


def _resolve_p_value(p, cfg: ExperimentConfig):
    """Numeric p_out for a grid entry (resolving the symbolic sentinel)."""
    if p == fl_core.FROM_GEOMETRY:
        return analysis.outage_probability(cfg.network()).p_out
    return float(p)


def cmd_fl(cfg: ExperimentConfig, resolved, args) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    corpus_spec = _corpus_spec(cfg, args.data_dir)
    p_values = [(_p, _resolve_p_value(_p, cfg)) for _p in cfg.p_out_grid]
    tasks, keys = [], []
    for K in cfg.clients_grid:
        for _, p in p_values:
            for seed in cfg.seeds:
                cell = dict(
                    K=K, p_out=p, seed=seed, mode=cfg.partition_mode,
                    rounds=cfg.rounds, samples_per_client=cfg.samples_per_client,
                    input_dim=cfg.input_dim, hidden_dims=cfg.hidden_dims,
                    learning_rate=cfg.learning_rate,
                )
                tasks.append((corpus_spec, cell))
                keys.append((K, p, seed))
    results = _run_cells(_fl_cell, tasks, args.jobs)

    rows = []
    for (K, p, seed), (final_acc, trace_rows) in zip(keys, results):
        rows.append((p, K, cfg.partition_mode, seed, final_acc))
        p_tag = f"{p:g}".replace(".", "p")
        trace_name = f"fl_K{K}_p{p_tag}_seed{seed}.csv"
        write_csv(
            out_dir / "traces" / trace_name,
            _TRACE_HEADER,
            trace_rows,
            _footer(resolved, cfg),
        )

    # Mean-accuracy trend across the p grid per K (diagnostic, not a gate).
    violations = 0
    for K in cfg.clients_grid:
        means = [
            float(np.mean([acc for (kk, pp, _), (acc, _r) in zip(keys, results)
                           if kk == K and pp == p]))
            for _, p in p_values
        ]
        order = np.argsort([p for _, p in p_values])
        sorted_means = [means[i] for i in order]
        violations += sum(
            1 for a, b in zip(sorted_means, sorted_means[1:]) if b > a + 1e-12
        )
    write_csv(
        out_dir / "fl.csv",
        ("p_out", "K", "partition_mode", "seed", "final_accuracy"),
        rows,
        _footer(resolved, cfg, extra=[f"p_out_trend_increases={violations}"]),
    )
    print(f"wrote {out_dir / 'fl.csv'} ({len(rows)} rows)")
    return 0


def cmd_fig3(cfg: ExperimentConfig, resolved, args) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    corpus_spec = _corpus_spec(cfg, args.data_dir)
    K = cfg.num_clients
    base_cell = dict(
        K=K, mode=cfg.partition_mode, rounds=cfg.rounds,
        samples_per_client=cfg.samples_per_client, input_dim=cfg.input_dim,
        hidden_dims=cfg.hidden_dims, learning_rate=cfg.learning_rate,
    )

    # Closed-form outage per ratio.
    p_by_ratio = [
        analysis.outage_probability(cfg.network(ratio=r)).p_out
        for r in cfg.ratio_grid
    ]

    # Accuracy-vs-p_out relation from Bernoulli-masked runs.
    curve_tasks = [
        (corpus_spec, dict(base_cell, p_out=p, seed=seed))
        for p in cfg.curve_p_out
        for seed in cfg.seeds
    ]
    curve_results = _run_cells(_fl_cell, curve_tasks, args.jobs)
    n_seeds = len(cfg.seeds)
    curve_acc = [
        float(np.mean([acc for acc, _ in
                       curve_results[i * n_seeds:(i + 1) * n_seeds]]))
        for i in range(len(cfg.curve_p_out))
    ]
    curve_order = np.argsort(cfg.curve_p_out)
    curve_p = [cfg.curve_p_out[i] for i in curve_order]
    curve_a = [curve_acc[i] for i in curve_order]

    # Geometry-masked runs per ratio.
    sim_tasks = [
        (corpus_spec, cfg.network(ratio=r), dict(base_cell, seed=seed))
        for r in cfg.ratio_grid
        for seed in cfg.seeds
    ]
    sim_results = _run_cells(_fig3_sim_cell, sim_tasks, args.jobs)

    rows, gaps = [], []
    for i, ratio in enumerate(cfg.ratio_grid):
        acc_sim = float(np.mean(
            [acc for acc, _ in sim_results[i * n_seeds:(i + 1) * n_seeds]]
        ))
        acc_analytical = float(np.interp(p_by_ratio[i], curve_p, curve_a))
        gaps.append(abs(acc_sim - acc_analytical))
        rows.append((ratio, acc_sim, acc_analytical))

    write_csv(
        out_dir / "accuracy_vs_p_out.csv",
        ("p_out", "mean_final_accuracy"),
        list(zip(curve_p, curve_a)),
        _footer(resolved, cfg),
    )
    mean_gap = float(np.mean(gaps))
    write_csv(
        out_dir / "fig3.csv",
        ("ratio", "acc_simulated", "acc_analytical"),
        rows,
        _footer(resolved, cfg, extra=[f"mean_abs_gap={_fmt(mean_gap)}"]),
    )
    print(f"wrote {out_dir / 'fig3.csv'} ({len(rows)} rows, "
          f"mean |sim - analytical| = {mean_gap:.4f})")
    return 0


# Oracle-check tolerances and the window widening used by the MC side (the
# default window's truncation bias would eat most of the outage tolerance;
# see the geometry module note).
_VALIDATE_KS_BOUND = 0.02
_VALIDATE_REL_ERR_BOUND = 0.05
_VALIDATE_POUT_BOUND = 0.02
_VALIDATE_WINDOW_FACTOR = 2.0
_VALIDATE_S_GRID = tuple(np.logspace(5.5, 8.5, 6))


def _widened(network: geometry.NetworkConfig) -> geometry.NetworkConfig:
    from dataclasses import replace
    return replace(
        network, window_radius=_VALIDATE_WINDOW_FACTOR * network.window()
    )


def cmd_validate(cfg: ExperimentConfig, resolved, args) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    trials = cfg.trials if args.trials is None else args.trials
    assoc_samples = min(10_000, trials)
    network = cfg.network()
    rows = []

    def record(check: str, detail: str, value: float, bound: float, ok: bool):
        status = "PASS" if ok else "FAIL"
        rows.append((check, detail, value, bound, status))
        print(f"{status}  {check:18s} {detail:28s} "
              f"value={value:.5f} bound={bound:g}")

    # Association-power distribution vs its empirical CDF.
    samples = np.sort(geometry.sample_association_powers(
        network, assoc_samples, substream(cfg.seeds[0], STREAM_MC, 101),
        jobs=args.jobs,
    ))
    cdf_vals = np.array([
        analysis.assoc_power_cdf(s, cfg.altitude, network) for s in samples
    ])
    n = len(samples)
    ranks = np.arange(1, n + 1)
    ks = max(
        float(np.max(np.abs(ranks / n - cdf_vals))),
        float(np.max(np.abs((ranks - 1) / n - cdf_vals))),
    )
    record("assoc_power_cdf", f"KS over {n} samples", ks, _VALIDATE_KS_BOUND,
           ks <= _VALIDATE_KS_BOUND)

    # Interference Laplace transform vs Monte Carlo.
    widened = _widened(network)
    means, _ = geometry.estimate_interference_laplace_mc(
        widened, _VALIDATE_S_GRID, trials,
        substream(cfg.seeds[0], STREAM_MC, 102), jobs=args.jobs,
    )
    for s, mc_val in zip(_VALIDATE_S_GRID, means):
        ana = analysis.interference_laplace(s, network)
        rel = abs(mc_val - ana) / ana
        record("interference_laplace", f"s={s:.3e}", rel,
               _VALIDATE_REL_ERR_BOUND, rel <= _VALIDATE_REL_ERR_BOUND)

    # Outage probability vs Monte Carlo across the ratio grid. The analytic
    # curve must be monotone outright; the MC curve only within the combined
    # 95% halfwidths of the two estimates being compared, so the check stays
    # calibrated at any trial count.
    previous_ana, previous_mc, previous_hw = -1.0, -1.0, 0.0
    monotone = True
    for index, ratio in enumerate(cfg.ratio_grid):
        net_r = cfg.network(ratio=ratio)
        ana = analysis.outage_probability(net_r).p_out
        estimate = geometry.estimate_outage_mc(
            _widened(net_r), trials,
            substream(cfg.seeds[0], STREAM_MC, 103 + index), jobs=args.jobs,
        )
        mc, halfwidth = estimate.mean, estimate.half_width_95
        gap = abs(ana - mc)
        record("outage_probability", f"ratio={ratio:g}", gap,
               _VALIDATE_POUT_BOUND, gap <= _VALIDATE_POUT_BOUND)
        monotone &= (ana >= previous_ana - 1e-12
                     and mc >= previous_mc - (halfwidth + previous_hw))
        previous_ana, previous_mc, previous_hw = ana, mc, halfwidth
    record("outage_monotone", "both curves vs ratio", float(monotone), 1.0,
           monotone)

    write_csv(
        out_dir / "validate.csv",
        ("check", "detail", "value", "bound", "status"),
        rows,
        _footer(resolved, cfg, extra=[f"trials={trials}"]),
    )
    failures = sum(1 for row in rows if row[-1] == "FAIL")
    print(f"wrote {out_dir / 'validate.csv'} "
          f"({len(rows)} checks, {failures} failures)")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--seed", type=int,
                        help="replace the seed list with this single seed")
    parser.add_argument("--trials", type=int,
                        help="Monte Carlo trial count override")
    parser.add_argument("--out", type=Path, help="output directory override")
    parser.add_argument("--data-dir", type=str,
                        help="IDX data directory (or set UAVFL_DATA_DIR)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes (results are identical at any "
                             "level)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uavfl",
        description="Outage analysis and intermittent federated learning "
                    "experiments for a cellular-connected UAV network",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("outage", "outage probability vs density ratio (quadrature + MC)"),
        ("fl", "federated-training grid over p_out and client counts"),
        ("fig3", "simulated vs analytical accuracy across density ratios"),
        ("validate", "run the cross-engine oracle checks"),
    ]:
        _add_common(sub.add_parser(name, help=help_text))
    args = parser.parse_args(argv)

    try:
        raw = (
            parse_config_text(args.config.read_text(), str(args.config))
            if args.config
            else {}
        )
        overrides = {}
        if args.seed is not None:
            overrides["seeds"] = str(args.seed)
        cfg, resolved = resolve_config(raw, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    command = {
        "outage": cmd_outage,
        "fl": cmd_fl,
        "fig3": cmd_fig3,
        "validate": cmd_validate,
    }[args.command]
    try:
        return command(cfg, resolved, args)
    except (ConfigError, ValueError) as exc:
        # ValueErrors here come from config-derived values rejected deeper in
        # the stack (partition arithmetic, network validation, ...).
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
