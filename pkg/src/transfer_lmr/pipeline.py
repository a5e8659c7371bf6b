"""Two-stage Transfer-LMR training, the CE and cRT baselines, and multi-seed comparisons."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lmr
from .config import ExperimentConfig, StageConfig
from .core import FeatureDataset, load_dataset, one_hot, rng_stream
from .metrics import MetricsReport, evaluate
from .model import (ClassifierParams, OptimizerState, forward, init_params, loss_and_grads,
                    sgd_step, softmax)
from .sampling import BatchSampler, SamplerSpec
from .synthgen import SynthSpec, generate, make_hdd_like, make_meteor_like

log = logging.getLogger(__name__)

METHODS = ("ce", "crt", "tlmr")
METHOD_LABELS = {"ce": "CE", "crt": "cRT", "tlmr": "Transfer-LMR"}


class DimensionMismatch(ValueError):
    error_id = "dimension_mismatch"


@dataclass
class TrainedModel:
    params: ClassifierParams
    config_digest: str
    log: list[dict] = field(default_factory=list)


def batches_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def check_dims(params: ClassifierParams, ds: FeatureDataset) -> None:
    _, _, d, c = ds.dims
    if params.in_dim != d or params.num_classes != c:
        raise DimensionMismatch(
            f"model expects D={params.in_dim}, C={params.num_classes}; dataset has D={d}, C={c}")


def predict_scores(params: ClassifierParams, ds: FeatureDataset, chunk: int = 4096) -> np.ndarray:
    """Class probabilities on the inference path (no refinement)."""
    check_dims(params, ds)
    out = [softmax(forward(params, ds.features[i:i + chunk])) for i in range(0, max(len(ds.labels), 1), chunk)]
    return np.concatenate(out) if out else np.zeros((0, ds.num_classes))


def evaluate_model(params: ClassifierParams, ds: FeatureDataset) -> MetricsReport:
    return evaluate(predict_scores(params, ds), ds.labels, ds.class_names)


def _run_stage(params, ds, cfg: ExperimentConfig, stage: StageConfig, lr: float, seed: int,
               stage_name: str, refine: Callable | None = None, on_step: Callable | None = None,
               log_metrics: bool = True):
    sampler = BatchSampler(SamplerSpec.from_labels(ds.labels, ds.num_classes, stage.sampler),
                           cfg.batch_size, rng_stream(seed, stage_name, "sampler"))
    aug_rng = rng_stream(seed, stage_name, "augment")
    state = OptimizerState(lr=lr, momentum=stage.momentum)
    records = []
    n_batches = batches_per_epoch(len(ds.labels), cfg.batch_size)
    for epoch in range(stage.epochs):
        losses = []
        for _ in range(n_batches):
            idx = sampler()
            x = ds.features[idx].astype(np.float64)
            y = ds.labels[idx]
            if cfg.noise_aug > 0:
                x = x + aug_rng.normal(0.0, cfg.noise_aug, size=x.shape)
            if refine is not None:
                loss, grads = loss_and_grads(params, x, refiner=refine(y))
            else:
                loss, grads = loss_and_grads(params, x, one_hot(y, ds.num_classes))
            params, state = sgd_step(params, grads, state)
            losses.append(loss)
            if on_step is not None:
                on_step(params)
        rec = {"stage": stage_name, "epoch": epoch + 1, "loss": float(np.mean(losses))}
        if log_metrics:
            rep = evaluate_model(params, ds)
            rec.update(train_avg_class_acc=rep.avg_class_acc, train_overall_acc=rep.overall_acc)
        records.append(rec)
        log.debug("%s epoch %d loss %.5f", stage_name, epoch + 1, rec["loss"])
    return params, records


def train_stage1(cfg: ExperimentConfig, train: FeatureDataset, seed: int | None = None,
                 on_step: Callable | None = None) -> TrainedModel:
    """Instance-balanced sampling with cross-entropy; this is also the CE baseline."""
    seed = cfg.seed if seed is None else seed
    _, _, d, c = train.dims
    params = init_params(cfg.model.arch, d, c, rng_stream(seed, "init"), hidden=cfg.model.hidden)
    params, records = _run_stage(params, train, cfg, cfg.stage1, cfg.stage1.lr, seed, "stage1",
                                 on_step=on_step)
    return TrainedModel(params, cfg.digest(), records)


def _lmr_refiner(cfg: ExperimentConfig, train: FeatureDataset, seed: int):
    table = lmr.contribution(train.class_counts, cfg.lmr.w_rec, cfg.lmr.decay)
    mix_rng = rng_stream(seed, "stage2", "mixer")

    def refine(labels):
        def run(Z):
            refined, trace = lmr.lmr_forward(Z, labels, table, cfg.lmr.p_mix, mix_rng)
            return refined.M_star, refined.Y_star, lambda dM: lmr.lmr_backward(trace, dM)
        return run

    return refine


def _stage2(stage1: TrainedModel, cfg, train, seed, use_lmr, on_step):
    check_dims(stage1.params, train)
    if use_lmr and cfg.batch_size < 2:
        raise ValueError("refinement needs batch_size >= 2")
    seed = cfg.seed if seed is None else seed
    refine = _lmr_refiner(cfg, train, seed) if use_lmr else None
    # classifier weights carry over from stage 1; nothing is reset
    params, records = _run_stage(stage1.params.copy(), train, cfg, cfg.stage2, cfg.stage2_lr, seed,
                                 "stage2", refine=refine, on_step=on_step)
    return TrainedModel(params, cfg.digest(), stage1.log + records)


def train_stage2_lmr(stage1: TrainedModel, cfg: ExperimentConfig, train: FeatureDataset,
                     seed: int | None = None, on_step: Callable | None = None) -> TrainedModel:
    """Class-balanced fine-tuning on refined, mixed features with soft cross-entropy."""
    return _stage2(stage1, cfg, train, seed, cfg.lmr.enabled, on_step)


def train_crt(stage1: TrainedModel, cfg: ExperimentConfig, train: FeatureDataset,
              seed: int | None = None, on_step: Callable | None = None) -> TrainedModel:
    """Class-balanced cross-entropy fine-tuning of the stage-1 model, no refinement."""
    return _stage2(stage1, cfg, train, seed, False, on_step)


def synth_spec_for(cfg: ExperimentConfig, seed: int) -> SynthSpec:
    d = cfg.data
    maker = make_meteor_like if d.profile == "meteor" else make_hdd_like
    base = maker(d.scale_divisor, D=d.D, T=d.T, seed=seed, alpha=d.alpha)
    test_counts = tuple(max(1, math.ceil(n * d.test_multiplier)) for n in base.counts)
    return maker(d.scale_divisor, D=d.D, T=d.T, seed=seed, alpha=d.alpha, sigma=d.sigma,
                 drift=d.drift, scale=d.mean_scale, test_counts=test_counts)


def load_data(cfg: ExperimentConfig, seed: int) -> tuple[FeatureDataset, FeatureDataset]:
    if cfg.data.train_path:
        train = load_dataset(cfg.data.train_path)
        test = load_dataset(cfg.data.test_path) if cfg.data.test_path else train
        return train, test
    data_seed = seed if cfg.data.regenerate_per_seed else cfg.seed
    return generate(synth_spec_for(cfg, data_seed))


def run_seeds(cfg: ExperimentConfig) -> list[int]:
    return [int(rng_stream(cfg.seed, "run", i).integers(0, 2**31 - 1)) for i in range(cfg.n_seeds)]


def run_single_seed(cfg: ExperimentConfig, seed: int) -> dict:
    train, test = load_data(cfg, seed)
    stage1 = train_stage1(cfg, train, seed)
    models = {
        "ce": stage1,
        "crt": train_crt(stage1, cfg, train, seed),
        "tlmr": train_stage2_lmr(stage1, cfg, train, seed),
    }
    return {
        "seed": seed,
        "reports": {m: evaluate_model(tm.params, test).to_dict() for m, tm in models.items()},
        "logs": {m: tm.log for m, tm in models.items()},
    }


def _run_one(args):
    cfg_dict, seed = args
    from .config import config_from_dict
    return run_single_seed(config_from_dict(cfg_dict), seed)


@dataclass
class ComparisonReport:
    config: dict
    seeds: list[int]
    runs: list[dict]

    def _metric(self, method, key):
        return [r["reports"][method][key] for r in self.runs]

    def median(self, method: str, key: str) -> float:
        vals = [v for v in self._metric(method, key) if v is not None]
        return float(np.median(vals)) if vals else None

    def median_class_acc(self, method: str, cls: int) -> float:
        return float(np.median([r["reports"][method]["per_class_acc"][cls] for r in self.runs]))

    def class_names(self) -> list[str]:
        return self.runs[0]["reports"]["ce"]["class_names"]

    def summary(self) -> dict:
        out = {}
        for m in METHODS:
            C = len(self.class_names())
            out[m] = {
                "per_class_ap": [float(np.median([r["reports"][m]["per_class_ap"][j] for r in self.runs
                                                  if r["reports"][m]["per_class_ap"][j] is not None]))
                                 for j in range(C)],
                "per_class_acc": [self.median_class_acc(m, j) for j in range(C)],
                "overall_map": self.median(m, "overall_map"),
                "avg_class_acc": self.median(m, "avg_class_acc"),
                "overall_acc": self.median(m, "overall_acc"),
            }
        return out

    def table(self) -> list[dict]:
        """Median rows shaped like the results table: per-class AP, mAP, Avg. C/A, Overall Acc."""
        rows = []
        names = self.class_names()
        for m, s in self.summary().items():
            row = {"method": METHOD_LABELS[m]}
            row.update({n: round(100 * ap, 2) for n, ap in zip(names, s["per_class_ap"])})
            row["Overall mAP"] = round(100 * s["overall_map"], 2)
            row["Avg. C/A"] = round(100 * s["avg_class_acc"], 2)
            row["Overall Acc."] = round(100 * s["overall_acc"], 2)
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {"config": self.config, "seeds": self.seeds,
                "per_seed": [{"seed": r["seed"], "reports": r["reports"]} for r in self.runs],
                "median": self.summary(), "table": self.table()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table_csv(self) -> str:
        rows = self.table()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()

    def plot_csv(self) -> str:
        """Long-format ``method, metric, seed, value`` rows for external plotting."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "metric", "seed", "value"])
        names = self.class_names()
        for r in self.runs:
            for m in METHODS:
                rep = r["reports"][m]
                vals = {"overall_map": rep["overall_map"], "avg_class_acc": rep["avg_class_acc"],
                        "overall_acc": rep["overall_acc"]}
                for j, n in enumerate(names):
                    vals[f"ap_{n}"] = rep["per_class_ap"][j]
                    vals[f"acc_{n}"] = rep["per_class_acc"][j]
                for k, v in vals.items():
                    w.writerow([m, k, r["seed"], "" if v is None else repr(float(v))])
        return buf.getvalue()

    def stage_logs(self) -> list[dict]:
        out = []
        for r in self.runs:
            for m in METHODS:
                for rec in r["logs"][m]:
                    out.append({"seed": r["seed"], "method": m, **rec})
        return out


def run_experiment(cfg: ExperimentConfig) -> ComparisonReport:
    """CE, cRT and Transfer-LMR over ``cfg.n_seeds`` derived seeds, merged in seed order."""
    seeds = run_seeds(cfg)
    if cfg.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(seeds))) as pool:
            runs = list(pool.map(_run_one, [(cfg.to_dict(), s) for s in seeds]))
    else:
        runs = [run_single_seed(cfg, s) for s in seeds]
    return ComparisonReport(cfg.to_dict(), seeds, runs)
