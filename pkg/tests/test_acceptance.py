"""End-to-end acceptance checks.

Ten independent checks, each printing one PASS/FAIL line to the live
terminal (past pytest's capture) and asserting its tolerance. Statistical
tolerances are pinned here as literals; nothing is inherited from the
library's own bounds, so a library change cannot silently relax a check.

The federated checks run the same pipeline the command line uses (synthetic
corpus with the default calibration: 200 per class, noise 0.55, corpus seed
7), five seeds unless stated otherwise. The heavy Monte Carlo checks share
one 100000-trial validation report.
"""
import numpy as np
import pytest

from uavfl import analysis, geometry
from uavfl.cli import _net_spec, build_corpus, build_fl_data, main
from uavfl.fl_core import FlConfig, run_training
from uavfl.nn import NetSpec, init_model, loss, sgd_step

SEEDS = (1, 2, 3, 4, 5)
NET_DEFAULTS = dict(input_dim=784, hidden_dims=(64,), learning_rate=0.05)


def _report(capsys, label: str, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} [{label}] {detail}", flush=True)


# ---------------------------------------------------------------------------
# Shared heavy artifacts
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def validate_rows(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_validate")
    main(["validate", "--trials", "100000", "--out", str(out)])
    rows = []
    for line in (out / "validate.csv").read_text().splitlines()[1:]:
        if not line.startswith("# "):
            rows.append(line.split(","))
    return rows


@pytest.fixture(scope="module")
def corpus():
    return build_corpus(("synthetic", 200, 0.55, 7, 784))


def _train(corpus, K, p_out, mode, seed, rounds=200):
    data, eval_union, _ = build_fl_data(corpus, K, 20, mode, seed)
    fl = FlConfig(
        num_clients=K, rounds=rounds, samples_per_client=20, partition=mode,
        p_out=p_out, net_spec=_net_spec(dict(NET_DEFAULTS), seed),
        master_seed=seed,
    )
    return run_training(fl, data, eval_union)


def _mean_acc(corpus, K, p_out, mode, seeds=SEEDS):
    return float(np.mean(
        [_train(corpus, K, p_out, mode, s).final_accuracy for s in seeds]
    ))


# ---------------------------------------------------------------------------
# 1-3: stochastic-geometry engines against their closed forms
# ---------------------------------------------------------------------------

def test_c01_association_power_distribution(validate_rows, capsys):
    ks = [float(r[2]) for r in validate_rows if r[0] == "assoc_power_cdf"]
    ok = len(ks) == 1 and ks[0] <= 0.02
    _report(capsys, "1 association-power distribution", ok,
            f"KS={ks[0]:.4f} (bound 0.02, 10000 samples)")
    assert ok


def test_c02_interference_laplace_transform(validate_rows, capsys):
    rels = [float(r[2]) for r in validate_rows
            if r[0] == "interference_laplace"]
    ok = len(rels) == 6 and max(rels) <= 0.05
    _report(capsys, "2 interference Laplace transform", ok,
            f"max rel err={max(rels):.4f} over {len(rels)} s-values "
            f"(bound 0.05, 100000 trials)")
    assert ok


def test_c03_outage_probability_cross_check(validate_rows, capsys):
    gaps = [float(r[2]) for r in validate_rows
            if r[0] == "outage_probability"]
    mono = [float(r[2]) for r in validate_rows if r[0] == "outage_monotone"]
    ok = len(gaps) == 5 and max(gaps) <= 0.02 and mono == [1.0]
    _report(capsys, "3 outage probability", ok,
            f"max |analytical - MC|={max(gaps):.4f} over {len(gaps)} density "
            f"ratios (bound 0.02), monotone={bool(mono and mono[0])}")
    assert ok


# ---------------------------------------------------------------------------
# 4: backpropagation against finite differences
# ---------------------------------------------------------------------------

def test_c04_backprop_matches_finite_differences(capsys):
    worst = 0.0
    rng = np.random.default_rng(11)
    for hidden in ((), (16,), (16, 8)):
        spec = NetSpec(input_dim=20, hidden_dims=hidden, output_dim=5,
                       learning_rate=1.0, init_seed=5)
        model = init_model(spec)
        x = rng.standard_normal(20)
        label = 3
        stepped = sgd_step(model, (x, label), 1.0)
        grad = model.values - stepped.values  # lr = 1
        coords = rng.choice(model.values.size,
                            size=min(100, model.values.size), replace=False)
        eps = 1e-6
        for c in coords:
            bumped = model.copy()
            bumped.values[c] += eps
            dipped = model.copy()
            dipped.values[c] -= eps
            fd = (loss(bumped, x, label) - loss(dipped, x, label)) / (2 * eps)
            scale = max(abs(fd), abs(grad[c]), 1e-8)
            worst = max(worst, abs(fd - grad[c]) / scale)
    ok = worst <= 1e-4
    _report(capsys, "4 backpropagation", ok,
            f"worst rel err vs central differences={worst:.2e} "
            f"(bound 1e-4, 100 coords x 3 architectures)")
    assert ok


# ---------------------------------------------------------------------------
# 5-7: federated training behavior
# ---------------------------------------------------------------------------

def test_c05_accuracy_degrades_with_outage(corpus, capsys):
    grid = (0.0, 0.3, 0.6, 0.9)
    details, ok = [], True
    for mode in ("iid", "noniid"):
        means = [_mean_acc(corpus, 30, p, mode) for p in grid]
        pairs_ok = all(b <= a + 0.03 for a, b in zip(means, means[1:]))
        ok &= pairs_ok
        details.append(f"{mode}: " + " -> ".join(f"{m:.3f}" for m in means))
    _report(capsys, "5 accuracy vs outage trend", ok,
            "; ".join(details) + " (non-increasing within 0.03)")
    assert ok


def test_c06_more_clients_help_under_outage(corpus, capsys):
    acc50 = _mean_acc(corpus, 50, 0.6, "noniid")
    acc10 = _mean_acc(corpus, 10, 0.6, "noniid")
    gap = acc50 - acc10
    ok = gap >= 0.10
    _report(capsys, "6 client-count gap", ok,
            f"K=50: {acc50:.3f}, K=10: {acc10:.3f}, gap={gap:+.3f} "
            f"(bound +0.10, p_out=0.6, noniid)")
    assert ok


def test_c07_accuracy_band_at_derived_outage(corpus, capsys):
    network = geometry.NetworkConfig(lambda_u=1e-5, lambda_a=1e-7)
    p = analysis.outage_probability(network).p_out
    mean = _mean_acc(corpus, 50, p, "noniid")
    ok = 0.65 <= mean <= 0.90
    _report(capsys, "7 accuracy at derived outage", ok,
            f"mean={mean:.3f} at p_out={p:.4f} (band [0.65, 0.90], "
            f"K=50, noniid)")
    assert ok


# ---------------------------------------------------------------------------
# 8: simulated vs analytical accuracy across density ratios
# ---------------------------------------------------------------------------

def test_c08_geometry_masks_match_bernoulli_masks(tmp_path, capsys):
    cfg = tmp_path / "fig3.cfg"
    cfg.write_text("seeds = 1,2,3\n")
    out = tmp_path / "out"
    code = main(["fig3", "--config", str(cfg), "--out", str(out)])
    footer = [ln[2:] for ln in (out / "fig3.csv").read_text().splitlines()
              if ln.startswith("# ")]
    gap = next(float(f.split("=", 1)[1]) for f in footer
               if f.startswith("mean_abs_gap="))
    ok = code == 0 and gap <= 0.05
    _report(capsys, "8 simulated vs analytical accuracy", ok,
            f"mean |gap|={gap:.4f} over 5 density ratios (bound 0.05, "
            f"K=30, noniid, 3 seeds)")
    assert ok


# ---------------------------------------------------------------------------
# 9-10: exactness and reproducibility
# ---------------------------------------------------------------------------

def test_c09_total_outage_freezes_the_model(corpus, capsys):
    trace = _train(corpus, 10, 1.0, "noniid", seed=1, rounds=200)
    reference = init_model(_net_spec(dict(NET_DEFAULTS), 1))
    identical = np.array_equal(trace.final_model.values, reference.values)
    flat = len({r.global_accuracy for r in trace.rounds}) == 1
    ok = identical and flat and len(trace.rounds) == 200
    _report(capsys, "9 total outage freezes the model", ok,
            f"bit-identical={identical}, accuracy constant={flat} "
            f"(200 rounds, p_out=1)")
    assert ok


def test_c10_reports_are_reproducible(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "fl.num_clients = 2\nfl.rounds = 2\nfl.partition = iid\n"
        "net.hidden_dims = 8\ndata.per_class = 6\nsweep.ratio = 100\n"
        "sweep.p_out = 0,0.9\nsweep.num_clients = 2\nseeds = 1,2\n"
        "trials = 2048\n"
    )
    runs = {}
    for tag, extra in [("o1", []), ("o2", ["--jobs", "2"])]:
        out = tmp_path / tag
        assert main(["outage", "--config", str(cfg), "--out", str(out)]) == 0
        runs[tag] = (out / "outage.csv").read_bytes()
    outage_ok = runs["o1"] == runs["o2"]

    fl_bytes = []
    for tag in ("f1", "f2"):
        out = tmp_path / tag
        assert main(["fl", "--config", str(cfg), "--out", str(out)]) == 0
        blob = (out / "fl.csv").read_bytes()
        for trace in sorted((out / "traces").iterdir()):
            blob += trace.read_bytes()
        fl_bytes.append(blob)
    fl_ok = fl_bytes[0] == fl_bytes[1]

    ok = outage_ok and fl_ok
    _report(capsys, "10 byte-identical reports", ok,
            f"outage jobs 1 vs 2 identical={outage_ok}, "
            f"fl rerun identical={fl_ok}")
    assert ok
