from dataclasses import replace

import numpy as np
import pytest

from assocda.assoc import AssocConfig
from assocda.data import DomainPair, DomainPairSpec, make_pair
from assocda.harness import (
    ConfigurationError,
    TrainConfig,
    alpha_schedule,
    coverage,
    embedding_mmd_report,
    lr_schedule,
    read_trace_csv,
    run_experiment,
    train,
    write_embeddings_csv,
    write_trace_csv,
)
from assocda.network import MlpSpec

SMALL = MlpSpec(input_dim=2, hidden_dims=(16,), embedding_dim=16, num_classes=2, seed=0)


@pytest.fixture(scope="module")
def pair():
    return make_pair(DomainPairSpec(n_train=400, n_test=400, seed=0))


def quick(regime, **kw):
    base = dict(total_steps=120, base_lr=3e-3, per_class=20, unlabeled_batch_size=40,
                assoc_delay_steps=40, eval_every=50, regime=regime)
    base.update(kw)
    return TrainConfig(**base)


def test_lr_schedule_default_values():
    cfg = TrainConfig(total_steps=9000, assoc_delay_steps=500)
    assert lr_schedule(0, cfg) == 1e-4
    assert lr_schedule(5999, cfg) == 1e-4
    assert lr_schedule(6000, cfg) == pytest.approx(3.3e-5, rel=1e-12)


def test_lr_schedule_ceiling_boundary():
    cfg = TrainConfig(total_steps=3, assoc_delay_steps=0, base_lr=0.5)
    assert [lr_schedule(s, cfg) for s in range(3)] == [0.5, 0.5, 0.5 * 0.33]


def test_alpha_schedule():
    cfg = TrainConfig(assoc_delay_steps=500, alpha_after_delay=1.7)
    assert alpha_schedule(499, cfg) == 0.0
    assert alpha_schedule(500, cfg) == 1.7
    always = TrainConfig(assoc_delay_steps=0)
    assert alpha_schedule(0, always) == always.alpha_after_delay


@pytest.mark.parametrize(
    "so,to,da,expected",
    [(30.71, 0.50, 2.40, 0.9371), (35.96, 6.37, 10.53, 0.8594), (15.68, 7.09, 8.14, 0.8778), (4.59, 1.82, 2.34, 0.8123)],
)
def test_coverage_table_values(so, to, da, expected):
    assert round(coverage(so, to, da), 4) == expected


def test_coverage_endpoints_and_degenerate():
    assert coverage(20.0, 5.0, 5.0) == 1.0
    assert coverage(20.0, 5.0, 20.0) == 0.0
    assert coverage(5.0, 5.0, 4.0) is None


def test_config_validation(pair):
    with pytest.raises(ConfigurationError):
        TrainConfig(total_steps=10, assoc_delay_steps=11)
    with pytest.raises(ConfigurationError):
        TrainConfig(regime="adversarial")
    no_target = DomainPair(pair.source, None, pair.target_test, pair.source_test)
    with pytest.raises(ConfigurationError):
        train(no_target, quick("da_assoc"), SMALL)
    with pytest.raises(ConfigurationError):
        train(pair, quick("da_mmd", unlabeled_batch_size=10_000), SMALL)


def test_source_only_learns_source_but_not_shift(pair):
    rep = train(pair, quick("source_only", total_steps=600), SMALL)
    assert rep.final_source_error_pct < 2.0
    assert rep.final_target_error_pct > 5.0
    assert rep.unlabeled_draws == 0
    assert all(r["loss_walker"] is None and r["loss_mmd"] is None for r in rep.loss_trace)


def test_alpha_zero_collapses_to_source_only(pair):
    so = train(pair, quick("source_only"), SMALL)
    da = train(pair, quick("da_assoc", alpha_after_delay=0.0), SMALL)
    assert so.loss_trace == da.loss_trace
    assert np.array_equal(so.params.flat(), da.params.flat())


def test_determinism(pair):
    a = train(pair, quick("da_assoc"), SMALL)
    b = train(pair, quick("da_assoc"), SMALL)
    assert a.loss_trace == b.loss_trace
    assert a.eval_trace == b.eval_trace


@pytest.mark.parametrize("regime", ["da_assoc", "da_mmd"])
def test_objective_consistency_and_schedules(pair, regime):
    cfg = quick(regime, assoc=AssocConfig(1.0, 0.3), alpha_after_delay=1.5, mmd_weight=2.0)
    rep = train(pair, cfg, SMALL)
    for rec in rep.loss_trace:
        step = rec["step"]
        assert rec["lr"] == lr_schedule(step, cfg)
        if regime == "da_assoc":
            assert rec["alpha"] == alpha_schedule(step, cfg)
            assoc = 0.0 if rec["loss_walker"] is None else rec["loss_walker"] + 0.3 * rec["loss_visit"]
            expected = rec["loss_class"] + rec["alpha"] * assoc
        else:
            assert rec["alpha"] == (0.0 if step < cfg.assoc_delay_steps else 2.0)
            expected = rec["loss_class"] + rec["alpha"] * (rec["loss_mmd"] or 0.0)
        assert rec["loss_total"] == pytest.approx(expected, abs=1e-10)
    assert rep.unlabeled_draws == cfg.total_steps - cfg.assoc_delay_steps


def test_eval_cadence(pair):
    rep = train(pair, quick("source_only"), SMALL)
    assert [e["step"] for e in rep.eval_trace] == [0, 50, 100, 120]
    assert 0 <= rep.final_target_error_pct <= 100


def test_target_only_reads_labels_through_evaluation_interface(pair):
    rep = train(pair, quick("target_only", total_steps=400), SMALL)
    assert rep.final_target_error_pct < 10.0


def test_embedding_mmd_report(pair):
    so = train(pair, quick("source_only"), SMALL).params
    table = embedding_mmd_report({"source_only": so, "copy": so}, pair.source_test, pair.target_test)
    rows = table["rows"]
    assert rows["source_only"] == rows["copy"]
    with pytest.raises(ConfigurationError):
        embedding_mmd_report({"source_only": so, "da_assoc": None}, pair.source_test, pair.target_test)
    with pytest.raises(ConfigurationError):
        embedding_mmd_report({"da_assoc": so}, pair.source_test, pair.target_test)


def test_run_experiment_and_files(pair, tmp_path):
    res = run_experiment(pair, quick("source_only"), model_spec=SMALL)
    assert set(res.reports) == {"source_only", "target_only", "da_assoc", "da_mmd"}
    assert set(res.mmd_table["rows"]) == {"source_only", "da_assoc", "da_mmd"}
    assert res.coverage is not None
    rep = res.reports["da_assoc"]
    path = tmp_path / "trace.csv"
    write_trace_csv(rep, path)
    assert path.read_text().splitlines()[0] == "step,loss_total,loss_class,loss_walker,loss_visit,loss_mmd,lr,alpha"
    back = read_trace_csv(path)
    assert [r["loss_total"] for r in back] == [r["loss_total"] for r in rep.loss_trace]
    emb = tmp_path / "emb.csv"
    write_embeddings_csv(rep.params, [pair.source_test, pair.target_test], emb)
    lines = emb.read_text().splitlines()
    assert lines[0].startswith("sample_id,domain,label,e0,") and lines[0].endswith("e15")
    assert len(lines) == 1 + len(pair.source_test) + len(pair.target_test)
