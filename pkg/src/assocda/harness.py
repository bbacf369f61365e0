"""Training regimes (SO / TO / DA_assoc / DA_MMD), schedules and evaluation."""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .assoc import AssocConfig, assoc_forward_backward
from .data import DomainDataset, stratified_labeled_batch, unlabeled_batch
from .mmd import MmdConfig, median_heuristic, mmd2
from .network import (
    MlpSpec,
    backprop_external,
    classification_loss_and_grads,
    error_pct,
    forward,
    init_optimizer,
    init_params,
    optimizer_step,
)

REGIMES = ("source_only", "target_only", "da_assoc", "da_mmd")
DA_REGIMES = ("da_assoc", "da_mmd")
TRACE_COLUMNS = ("step", "loss_total", "loss_class", "loss_walker", "loss_visit", "loss_mmd", "lr", "alpha")
LR_DECAY_FACTOR = 0.33


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 5000
    base_lr: float = 1e-4
    lr_decay_factor: float = LR_DECAY_FACTOR
    per_class: int = 10
    unlabeled_batch_size: int = 100
    assoc: AssocConfig = AssocConfig()
    alpha_after_delay: float = 1.0
    assoc_delay_steps: int = 500
    regime: str = "da_assoc"
    mmd_weight: float = 1.0
    mmd: MmdConfig = MmdConfig()
    eval_every: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigurationError("total_steps must be >= 1")
        if not 0 <= self.assoc_delay_steps <= self.total_steps:
            raise ConfigurationError("assoc_delay_steps must lie in [0, total_steps]")
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}; choose from {REGIMES}")
        if self.base_lr <= 0:
            raise ConfigurationError("base_lr must be positive")
        if self.per_class < 1 or self.unlabeled_batch_size < 1:
            raise ConfigurationError("batch sizes must be >= 1")
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be >= 1")


def lr_schedule(step, cfg):
    """Constant rate, cut by ``lr_decay_factor`` for the last third of training."""
    boundary = math.ceil(2 * cfg.total_steps / 3)
    return cfg.base_lr if step < boundary else cfg.base_lr * cfg.lr_decay_factor


def alpha_schedule(step, cfg):
    return 0.0 if step < cfg.assoc_delay_steps else cfg.alpha_after_delay


def similarity_weight(step, cfg):
    """Weight on the similarity term: alpha for da_assoc, delayed mmd_weight for da_mmd."""
    if cfg.regime == "da_assoc":
        return alpha_schedule(step, cfg)
    if cfg.regime == "da_mmd":
        return 0.0 if step < cfg.assoc_delay_steps else cfg.mmd_weight
    return 0.0


@dataclass
class RunReport:
    regime: str
    seed: int
    final_target_error_pct: float
    final_source_error_pct: float
    final_embedding_mmd: float
    loss_trace: list = field(default_factory=list)
    eval_trace: list = field(default_factory=list)
    unlabeled_draws: int = 0
    params: object = None

    def to_dict(self, with_trace=False):
        d = {
            "regime": self.regime,
            "seed": self.seed,
            "final_target_error_pct": self.final_target_error_pct,
            "final_source_error_pct": self.final_source_error_pct,
            "final_embedding_mmd": self.final_embedding_mmd,
            "unlabeled_draws": self.unlabeled_draws,
            "eval_trace": self.eval_trace,
        }
        if with_trace:
            d["loss_trace"] = self.loss_trace
        return d


def _labeled_set(pair, regime):
    if regime == "target_only":
        # ceiling run: reads target labels through the evaluation interface on purpose
        t = pair.target
        return DomainDataset(t.inputs, t.evaluation_labels(), "source", t.num_classes)
    return pair.source


def _check_pair(pair, cfg):
    if pair.source is None or pair.source_test is None or pair.target_test is None:
        raise ConfigurationError("source, source_test and target_test sets are required")
    if cfg.regime in DA_REGIMES or cfg.regime == "target_only":
        if pair.target is None or len(pair.target) == 0:
            raise ConfigurationError(f"regime {cfg.regime} needs a target training set")
    if cfg.regime in DA_REGIMES and cfg.unlabeled_batch_size > len(pair.target):
        raise ConfigurationError("unlabeled_batch_size exceeds the target set size")
    if cfg.regime == "target_only" and pair.target.evaluation_labels() is None:
        raise ConfigurationError("target_only needs target labels for the ceiling run")


def default_model_spec(pair, seed=0):
    return MlpSpec(input_dim=pair.source.input_dim, num_classes=pair.num_classes, seed=seed)


def batch_streams(seed):
    """Independent labeled and unlabeled batch streams for a run."""
    lab, unl = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(lab), np.random.default_rng(unl)


def composite_loss_and_grads(params, xb, yb, xu, weight, regime, assoc_cfg=AssocConfig(), mmd_cfg=MmdConfig()):
    """Classification loss plus ``weight`` times the similarity term, with gradients.

    Returns ``(total, record, grads)`` where ``record`` holds the individual
    terms (``None`` for terms that were not evaluated).
    """
    tr = forward(params, xb)
    loss_class, grads = classification_loss_and_grads(tr, params, yb)
    rec = {"loss_class": loss_class, "loss_walker": None, "loss_visit": None, "loss_mmd": None}
    total = loss_class
    if weight != 0.0 and regime in DA_REGIMES:
        tu = forward(params, xu)
        if regime == "da_assoc":
            res = assoc_forward_backward(tr.embeddings, tu.embeddings, yb, assoc_cfg)
            rec["loss_walker"], rec["loss_visit"] = res.walker, res.visit
            sim = res.total
        else:
            res = mmd2(tr.embeddings, tu.embeddings, mmd_cfg, with_grad=True)
            rec["loss_mmd"] = sim = res.mmd_squared
        total = loss_class + weight * sim
        grads = (
            grads
            + backprop_external(tr, params, weight * res.grad_source)
            + backprop_external(tu, params, weight * res.grad_target)
        )
    return total, rec, grads


def embed(params, inputs):
    return forward(params, inputs).embeddings


def train(pair, cfg, model_spec=None):
    """Run one regime for ``cfg.total_steps`` steps; deterministic given the seed."""
    _check_pair(pair, cfg)
    spec = model_spec or default_model_spec(pair, cfg.seed)
    params = init_params(spec)
    opt = init_optimizer(params)
    labeled = _labeled_set(pair, cfg.regime)
    lab_rng, unl_rng = batch_streams(cfg.seed)
    trace, evals, draws = [], [], 0

    def evaluate(step):
        evals.append({
            "step": step,
            "source_error_pct": error_pct(params, pair.source_test.inputs, pair.source_test.evaluation_labels()),
            "target_error_pct": error_pct(params, pair.target_test.inputs, pair.target_test.evaluation_labels()),
        })

    for step in range(cfg.total_steps):
        if step % cfg.eval_every == 0:
            evaluate(step)
        lr = lr_schedule(step, cfg)
        weight = similarity_weight(step, cfg)
        xb, yb = stratified_labeled_batch(labeled, cfg.per_class, lab_rng)
        xu = None
        if weight != 0.0 and cfg.regime in DA_REGIMES:
            xu = unlabeled_batch(pair.target, cfg.unlabeled_batch_size, unl_rng)
            draws += 1
        total, rec, grads = composite_loss_and_grads(params, xb, yb, xu, weight, cfg.regime, cfg.assoc, cfg.mmd)
        trace.append({"step": step, "loss_total": total, **rec, "lr": lr, "alpha": weight})
        params, opt = optimizer_step(params, grads, opt, lr)
    evaluate(cfg.total_steps)

    final = evals[-1]
    own = mmd2(embed(params, pair.source_test.inputs), embed(params, pair.target_test.inputs), MmdConfig())
    return RunReport(
        regime=cfg.regime,
        seed=cfg.seed,
        final_target_error_pct=final["target_error_pct"],
        final_source_error_pct=final["source_error_pct"],
        final_embedding_mmd=own.mmd_squared,
        loss_trace=trace,
        eval_trace=evals,
        unlabeled_draws=draws,
        params=params,
    )


def coverage(so_err, to_err, da_err):
    """Fraction of the SO -> TO error gap closed by DA; ``None`` if the gap vanishes."""
    gap = to_err - so_err
    if abs(gap) < 1e-9:
        return None
    return (da_err - so_err) / gap


def embedding_mmd_report(params_by_regime, source_test, target_test, reference="source_only", multipliers=None):
    """Biased MMD^2 between source-test and target-test embeddings per regime.

    Every regime is scored with one kernel mixture whose base bandwidth is the
    median heuristic of the reference regime's pooled embeddings.
    """
    missing = [r for r, p in params_by_regime.items() if p is None]
    if missing:
        raise ConfigurationError(f"missing checkpoint for regime(s): {', '.join(missing)}")
    if reference not in params_by_regime:
        raise ConfigurationError(f"reference regime {reference!r} has no checkpoint")
    ref = params_by_regime[reference]
    base = median_heuristic(embed(ref, source_test.inputs), embed(ref, target_test.inputs))
    cfg = MmdConfig(
        bandwidth_multipliers=multipliers or MmdConfig().bandwidth_multipliers,
        use_median_heuristic=False,
        fixed_bandwidth=base,
        estimator="biased",
    )
    table = {}
    for regime, params in params_by_regime.items():
        res = mmd2(embed(params, source_test.inputs), embed(params, target_test.inputs), cfg)
        table[regime] = {
            "mmd": res.mmd_squared,
            "target_error_pct": error_pct(params, target_test.inputs, target_test.evaluation_labels()),
        }
    return {"reference": reference, "base_bandwidth": base, "rows": table}


@dataclass
class ExperimentResult:
    reports: dict
    coverage: float | None
    mmd_table: dict | None

    def to_dict(self):
        return {
            "regimes": {r: rep.to_dict() for r, rep in self.reports.items()},
            "coverage_da_assoc": self.coverage,
            "embedding_mmd": self.mmd_table,
        }


def run_experiment(pair, cfg, regimes=REGIMES, model_spec=None):
    """Train each regime with the same seed and compare them."""
    reports = {r: train(pair, replace(cfg, regime=r), model_spec) for r in regimes}
    cov = None
    if {"source_only", "target_only", "da_assoc"} <= reports.keys():
        cov = coverage(
            reports["source_only"].final_target_error_pct,
            reports["target_only"].final_target_error_pct,
            reports["da_assoc"].final_target_error_pct,
        )
    table = None
    if "source_only" in reports:
        compare = {r: reports[r].params for r in reports if r != "target_only"}
        table = embedding_mmd_report(compare, pair.source_test, pair.target_test)
    return ExperimentResult(reports, cov, table)


def _fmt(v):
    return "" if v is None else repr(v)


def write_trace_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in report.loss_trace:
            w.writerow([_fmt(rec[c]) for c in TRACE_COLUMNS])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (None if v == "" else float(v)) for k, v in r.items()} for r in rows]


def write_embeddings_csv(params, datasets, path):
    """``sample_id,domain,label,e0..e{d-1}`` for each sample of each dataset in order."""
    sid = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "domain", "label"] + [f"e{i}" for i in range(params.spec.embedding_dim)])
        for ds in datasets:
            emb = embed(params, ds.inputs)
            labels = ds.evaluation_labels()
            for i, row in enumerate(emb):
                label = "" if labels is None else int(labels[i])
                w.writerow([sid, ds.domain, label] + [repr(float(v)) for v in row])
                sid += 1


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_dict(cfg):
    d = asdict(cfg)
    d["mmd"]["bandwidth_multipliers"] = list(d["mmd"]["bandwidth_multipliers"])
    return d
