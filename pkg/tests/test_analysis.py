"""Theory-verification analyses: variance gap, limits, decay, Taylor,
weight evolution, and mode comparison plumbing."""

import csv
import math

import numpy as np
import pytest

from spred import analysis, envs, harness
from spred.agent import AgentConfig


def test_variance_gap_synthetic_closed_forms():
    v = analysis.variance_gap_synthetic(1_000_000, rng=0)
    assert abs(v["binary"] - 0.25) < 0.005
    assert abs(v["continuous"] - 1.0 / 12.0) < 0.005
    assert v["continuous"] < v["binary"]


@pytest.fixture(scope="module")
def tiny_snapshot(tmp_path_factory):
    """A briefly-trained checkpoint plus its demo file."""
    tmp = tmp_path_factory.mktemp("snap")
    spec = envs.get_spec("point-reach-2d")
    eps, rate = envs.generate_demos(spec, "suboptimal", 3, seed=1)
    demo = str(tmp / "demos.jsonl")
    envs.save_demos(demo, spec, eps, rate)
    cfg = harness.RunConfig(
        env="point-reach-2d",
        agent=AgentConfig(hidden=8, ensemble_m=4, n_replay_batch=16,
                          n_demo_batch=8, warmup=50, updates_per_episode=2),
        demo_file=demo, total_env_steps=400, eval_every=200,
        eval_episodes=2, seed=0, out_dir=str(tmp / "run"))
    out = harness.run_training(cfg)
    return f"{out}/checkpoint.json", demo


def test_variance_gap_on_snapshot(tiny_snapshot, tmp_path):
    ckpt, demo = tiny_snapshot
    out_csv = str(tmp_path / "vg.csv")
    table = analysis.variance_gap_experiment(ckpt, demo, n_resamples=60,
                                             batch=8, rng=0, out_csv=out_csv)
    assert set(table) == {"qfilter-ensemble-mean", "spred-p", "spred-e"}
    assert all(v >= 0.0 for v in table.values())
    assert table["spred-p"] <= 1.05 * table["qfilter-ensemble-mean"]
    with open(out_csv) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 3


def test_variance_gap_equal_when_weights_forced(tiny_snapshot, monkeypatch):
    ckpt, demo = tiny_snapshot
    monkeypatch.setattr(analysis, "_weight_for",
                        lambda mode, qd, qpi, alpha: 1.0)
    table = analysis.variance_gap_experiment(ckpt, demo, n_resamples=25,
                                             batch=8, rng=0)
    vals = list(table.values())
    assert vals[0] == pytest.approx(vals[1], rel=1e-12)
    assert vals[0] == pytest.approx(vals[2], rel=1e-12)


def test_variance_gap_warns_on_small_demo_set(tiny_snapshot):
    ckpt, demo = tiny_snapshot
    with pytest.warns(UserWarning):
        analysis.variance_gap_experiment(ckpt, demo, n_resamples=2,
                                         batch=10_000, rng=0)


def test_limit_behavior_assertions():
    rows = analysis.limit_behavior_table()
    assert analysis.check_limit_rows(rows) == []
    for r in rows:
        if r["scale"] >= 1e6:
            assert abs(r["p_p"] - 0.5) <= 1e-3
            assert r["p_e"] <= 1e-3
        if r["scale"] <= 1e-6 and r["A"] > 0:
            assert abs(r["p_e_mixture_beta"] - (math.e ** 0.1 - 1)) <= 1e-3
    with pytest.raises(ValueError):
        analysis.limit_behavior_table(spread_scales=(0.0, 1.0))


def test_suboptimal_decay():
    rows = analysis.suboptimal_decay_sim(steps=40, delta=1.0)
    assert rows[-1]["p_p"] < 1e-3
    assert rows[-1]["p_e"] == 0.0
    control = analysis.suboptimal_decay_sim(steps=40, delta=0.0)
    assert control[-1]["p_p"] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        analysis.suboptimal_decay_sim(steps=1)


def test_taylor_bound_and_examples():
    rows, max_dev = analysis.taylor_agreement()
    for r in rows:
        assert r["deviation"] <= r["bound"]
        if r["ratio"] == 0.0:
            assert r["deviation"] == 0.0
    # linear term ~ ratio / sqrt(2 pi) at the grid edge
    edge = [r for r in rows if abs(r["ratio"] - 0.05) < 1e-12][0]
    lin = 0.05 / math.sqrt(2 * math.pi)
    assert abs(edge["p_p_minus_half"] - lin) <= edge["bound"] + 1e-9
    with pytest.raises(ValueError):
        analysis.taylor_agreement(ratio_grid=[0.2])


def test_weight_report_buckets_and_svg(tmp_path):
    log = analysis.WeightLog(records=[
        (0, np.full(50, 0.5)),
        (100, np.concatenate([np.zeros(30), np.ones(20)])),
    ])
    out_csv = str(tmp_path / "w.csv")
    out_svg = str(tmp_path / "w.svg")
    rows = analysis.weight_evolution_report(log, out_csv=out_csv,
                                            out_svg=out_svg)
    assert rows[0]["mid"] == 1.0
    assert rows[1]["lt_0.1"] == pytest.approx(0.6)
    assert rows[1]["gt_0.9"] == pytest.approx(0.4)
    for r in rows:
        total = r["lt_0.1"] + r["mid"] + r["gt_0.9"]
        assert abs(total - 1.0) < 1e-12
        assert sum(r[f"bin_{b}"] for b in range(20)) == r["n"]
    svg1 = open(out_svg).read()
    analysis.weight_evolution_report(log, out_svg=out_svg)
    assert open(out_svg).read() == svg1  # deterministic markup
    assert svg1.startswith("<svg")
    with pytest.raises(ValueError):
        analysis.weight_evolution_report(analysis.WeightLog(records=[]))


def test_weight_log_load(tmp_path):
    p = tmp_path / "weights.jsonl"
    p.write_text('{"step": 0, "weights": []}\n'
                 '{"step": 5, "weights": [0.1, 0.9]}\n')
    log = analysis.WeightLog.load(p)
    assert len(log.records) == 1  # empty records skipped
    assert log.records[0][0] == 5


def test_compare_modes(tmp_path):
    def write_metrics(path, rates):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "success_rate"])
            for i, r in enumerate(rates):
                w.writerow([i * 100, r])

    a = str(tmp_path / "a.csv")
    b = str(tmp_path / "b.csv")
    write_metrics(a, [0.5, 0.5, 0.5])
    write_metrics(b, [0.0, 0.5, 1.0])
    rows = analysis.gaussian_vs_nonpara_compare(
        {"m1": [a], "m2": [a]}, out_csv=str(tmp_path / "cmp.csv"))
    assert rows[0]["final_mean"] == rows[1]["final_mean"]
    assert rows[0]["auc_mean"] == pytest.approx(0.5 * 200)  # constant curve
    rows = analysis.gaussian_vs_nonpara_compare({"m1": [a, b], "m2": [b, a]})
    assert all(r["n_runs"] == 2 for r in rows)
    with pytest.raises(ValueError):
        analysis.gaussian_vs_nonpara_compare({"m1": [a], "m2": [a, b]})
