"""Experiment orchestration: multi-run settings, frozen-extractor probes,
the encoder depth sweep, and the stop-gradient collapse ablation.

Every run gets seed base_seed + run_index; pretraining happens once per
(method, run) and the classifier stage is repeated per label fraction,
so fraction curves share their pretrained weights within a run.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .augment import Window
from .config import RunConfig
from .data import (ScenarioSplit, SessionRecording, SplitConfig, make_scenario,
                   partition_sessions, split_users, synth_corpus, window_sessions)
from .errors import ConfigError, DataError
from .metrics import accuracy, kappa
from .models import FeatureExtractor, FeatureExtractorSpec
from .training import (TrainConfig, evaluate_classifier, pretrain_mtssl,
                       pretrain_simsiam, train_augmented, train_classifier,
                       train_supervised, transfer_learn)


def worker_count() -> int:
    """Parallel worker cap from SIAMTS_THREADS, defaulting to the CPU count."""
    raw = os.environ.get("SIAMTS_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SIAMTS_THREADS={raw!r} is not an integer")
    return max(1, n)


def run_map(fn: Callable, payloads: list) -> list:
    """Order-preserving map, fanned out over processes when allowed."""
    workers = min(worker_count(), len(payloads))
    if workers <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))


@dataclass
class RunRow:
    method: str
    fraction: float
    run: int
    seed: int
    kappa: float | None
    accuracy: float
    pretext_collapse: float | None = None


def aggregate_rows(rows: list[RunRow]) -> list[dict]:
    """Per (method, fraction): mean/std kappa over runs where it is defined."""
    groups: dict[tuple[str, float], list[RunRow]] = {}
    for row in rows:
        groups.setdefault((row.method, row.fraction), []).append(row)
    out = []
    for (method, fraction) in sorted(groups):
        cell = groups[(method, fraction)]
        kappas = [r.kappa for r in cell if r.kappa is not None]
        out.append({
            "method": method,
            "fraction": fraction,
            "runs": len(cell),
            "kappa_undefined_runs": len(cell) - len(kappas),
            "mean_kappa": float(np.mean(kappas)) if kappas else None,
            "std_kappa": float(np.std(kappas)) if kappas else None,
            "mean_accuracy": float(np.mean([r.accuracy for r in cell])),
        })
    return out


@dataclass
class ExperimentReport:
    config: dict
    rows: list[RunRow]
    aggregates: list[dict] = field(default_factory=list)

    def cell(self, method: str, fraction: float) -> dict:
        for agg in self.aggregates:
            if agg["method"] == method and np.isclose(agg["fraction"], fraction):
                return agg
        raise KeyError((method, fraction))


# ---------------------------------------------------------------------------
# one experiment run


def _scenario_for_run(corpus: list[SessionRecording], cfg: RunConfig,
                      run_seed: int) -> ScenarioSplit:
    if cfg.scenario == 2:
        d1, d2 = [], corpus
    else:
        d1, d2 = split_users(corpus, cfg.split.d1_fraction,
                             np.random.default_rng((cfg.seed, 104729)))
    return make_scenario(cfg.scenario, d1, d2, cfg.profile_obj.window_len,
                         cfg.split, np.random.default_rng((run_seed, 15485863)))


def _run_one(payload: tuple) -> list[RunRow]:
    corpus, cfg, run = payload
    run_seed = cfg.seed + run
    split = _scenario_for_run(corpus, cfg, run_seed)
    profile = cfg.profile_obj
    fe_spec = cfg.fe_spec()
    rows: list[RunRow] = []
    for method in cfg.methods:
        pretrained: FeatureExtractor | None = None
        collapse = None
        if method == "simsiam":
            model, trace = pretrain_simsiam(
                split.unlabelled, fe_spec, cfg.projector(), cfg.predictor(),
                profile.recipe, cfg.pretrain_cfg(run_seed),
                standardize=cfg.train.standardize)
            pretrained, collapse = model.fe, trace.collapse[-1]
        elif method == "mtssl":
            model, trace = pretrain_mtssl(split.unlabelled, fe_spec,
                                          profile.mtssl_specs, cfg.pretrain_cfg(run_seed))
            pretrained, collapse = model.fe, trace.collapse[-1]
        for fraction in cfg.label_fractions:
            labelled = split.labelled_at(fraction)
            ccfg = cfg.classifier_cfg(run_seed)
            if method in ("simsiam", "mtssl"):
                clf, _ = train_classifier(pretrained, labelled, split.val,
                                          split.n_classes, ccfg,
                                          finetune=cfg.train.finetune,
                                          hidden=cfg.classifier_hidden())
            elif method == "supervised":
                clf, _ = train_supervised(labelled, split.val, split.n_classes,
                                          fe_spec, ccfg, hidden=cfg.classifier_hidden())
            elif method == "augmented":
                clf, _ = train_augmented(labelled, split.val, split.n_classes,
                                         fe_spec, ccfg, profile.recipe,
                                         hidden=cfg.classifier_hidden())
            elif method == "transfer":
                clf, _ = transfer_learn(split.source_labelled, split.source_val,
                                        split.n_source_classes, labelled, split.val,
                                        split.n_classes, fe_spec, ccfg, ccfg,
                                        hidden=cfg.classifier_hidden())
            else:  # pragma: no cover - config validation rejects earlier
                raise ConfigError(f"unknown method {method!r}")
            ps = evaluate_classifier(clf, split.test, split.n_classes)
            rows.append(RunRow(method, fraction, run, run_seed,
                               kappa(ps), accuracy(ps), collapse))
    return rows


def run_experiment(corpus: list[SessionRecording], cfg: RunConfig) -> ExperimentReport:
    """Every (method, fraction) cell, cfg.runs times, aggregated."""
    expected = cfg.profile_obj.channels
    bad = [r for r in corpus if r.channels != expected]
    if bad:
        raise DataError(
            f"corpus has {bad[0].channels} channels but profile "
            f"{cfg.profile!r} expects {expected}")
    results = run_map(_run_one, [(corpus, cfg, run) for run in range(cfg.runs)])
    rows = [row for batch in results for row in batch]
    return ExperimentReport(cfg.resolved(), rows, aggregate_rows(rows))


def corpus_for(cfg: RunConfig) -> list[SessionRecording]:
    from .data import load_corpus

    if cfg.corpus is not None:
        return load_corpus(cfg.corpus)
    s = cfg.synth
    return synth_corpus(s.n_users, s.sessions_per_user, s.session_len, s.channels,
                        seed=cfg.seed, harmonics=s.harmonics,
                        noise_sigma=s.noise_sigma, amp_sigma=s.amp_sigma,
                        offset=s.offset)


# ---------------------------------------------------------------------------
# frozen-extractor probes


def _probe_subset(labelled_full: dict[int, list[Window]], per_user: int,
                  seed: int) -> list[Window]:
    """A fixed number of labelled windows per class, drawn reproducibly."""
    out: list[Window] = []
    for cls in sorted(labelled_full):
        pool = labelled_full[cls]
        order = np.random.default_rng((seed, 32452843, cls)).permutation(len(pool))
        out.extend(pool[i] for i in order[:per_user])
    return out


def frozen_probe(fe: FeatureExtractor, labelled_full: dict[int, list[Window]],
                 val: list[Window], test: list[Window], n_classes: int,
                 per_user: int, cfg: TrainConfig,
                 hidden: tuple[int, ...] = (256, 64)) -> float | None:
    """Train a head on frozen features from a fixed per-class sample and
    return test kappa."""
    probe = _probe_subset(labelled_full, per_user, cfg.seed)
    clf, _ = train_classifier(fe, probe, val, n_classes, cfg, finetune=False,
                              hidden=hidden)
    return kappa(evaluate_classifier(clf, test, n_classes))


@dataclass
class ProbeSetting:
    """Shared knobs for probe-style analyses."""

    fe_spec: FeatureExtractorSpec
    projector: tuple[int, ...]
    predictor: tuple[int, ...]
    recipe: tuple
    pretrain_cfg: TrainConfig
    probe_cfg: TrainConfig
    per_user: int
    window_len: int
    split: SplitConfig = field(default_factory=SplitConfig)
    hidden: tuple[int, ...] = (64,)


def _pools_for_probe(recordings: list[SessionRecording], setting: ProbeSetting,
                     seed: int):
    """Windows for probing one user group: unlabelled pool plus per-class
    labelled/val/test windows with classes 0..n-1."""
    pools = partition_sessions(recordings, setting.split)
    users = sorted({r.user_id for r in recordings})
    cls_of = {u: i for i, u in enumerate(users)}

    def relabelled(recs, overlap):
        out = []
        for rec in recs:
            out += window_sessions([rec], setting.window_len, overlap,
                                   label=cls_of[rec.user_id])
        return out

    labelled_full: dict[int, list[Window]] = {i: [] for i in range(len(users))}
    for w in relabelled(pools.labelled, setting.split.train_overlap):
        labelled_full[w.user_id].append(w)
    unlabelled = window_sessions(pools.unlabelled, setting.window_len,
                                 setting.split.train_overlap, label=None)
    val = relabelled(pools.val, setting.split.eval_overlap)
    test = relabelled(pools.test, setting.split.eval_overlap)
    return unlabelled, labelled_full, val, test, len(users)


def generalization_probe(pretrain_group: list[SessionRecording],
                         heldout_group: list[SessionRecording],
                         setting: ProbeSetting, seed: int) -> dict:
    """Pretrain on one user group; probe frozen features on (1) the same
    group's labelled windows and (2) a disjoint group never seen during
    pretraining, against a random-init extractor on the same probes."""
    unlab, lab1, val1, test1, n1 = _pools_for_probe(pretrain_group, setting, seed)
    pre_cfg = replace(setting.pretrain_cfg, seed=seed)
    probe_cfg = replace(setting.probe_cfg, seed=seed)
    model, _ = pretrain_simsiam(unlab, setting.fe_spec, setting.projector,
                                setting.predictor, setting.recipe, pre_cfg)
    random_fe = FeatureExtractor(setting.fe_spec, pretrain_group[0].channels,
                                 np.random.default_rng((seed, 49979687)))
    out = {
        "seen_users": frozen_probe(model.fe, lab1, val1, test1, n1,
                                   setting.per_user, probe_cfg, setting.hidden),
        "seen_users_random": frozen_probe(random_fe, lab1, val1, test1, n1,
                                          setting.per_user, probe_cfg, setting.hidden),
    }
    if heldout_group:
        _, lab2, val2, test2, n2 = _pools_for_probe(heldout_group, setting, seed)
        out["unseen_users"] = frozen_probe(model.fe, lab2, val2, test2, n2,
                                           setting.per_user, probe_cfg, setting.hidden)
        out["unseen_users_random"] = frozen_probe(random_fe, lab2, val2, test2, n2,
                                                  setting.per_user, probe_cfg,
                                                  setting.hidden)
    return out


# ---------------------------------------------------------------------------
# depth sweep and collapse ablation


def depth_sweep(recordings: list[SessionRecording], configs: list[tuple[int, ...]],
                setting: ProbeSetting, runs: int, base_seed: int = 0) -> list[dict]:
    """Mean seen-user probe kappa per extractor depth configuration.

    Every configuration shares seeds, schedule, and probe sets, so the
    comparison isolates architecture size.
    """
    results = []
    for filters in configs:
        fe_spec = FeatureExtractorSpec(tuple(filters),
                                       setting.fe_spec.kernel_size,
                                       setting.fe_spec.weight_decay_lambda)
        per_run = []
        for run in range(runs):
            seed = base_seed + run
            cfg = ProbeSetting(fe_spec, setting.projector, setting.predictor,
                               setting.recipe, setting.pretrain_cfg,
                               setting.probe_cfg, setting.per_user,
                               setting.window_len, setting.split, setting.hidden)
            probe = generalization_probe(recordings, [], cfg, seed)
            per_run.append(probe["seen_users"])
        defined = [k for k in per_run if k is not None]
        results.append({
            "filters": list(filters),
            "mean_kappa": float(np.mean(defined)) if defined else None,
            "std_kappa": float(np.std(defined)) if defined else None,
            "per_run": per_run,
        })
    return results


def collapse_ablation(unlabelled: list[Window], fe_spec: FeatureExtractorSpec,
                      projector: tuple[int, ...], predictor: tuple[int, ...],
                      recipe: tuple, cfg: TrainConfig, seeds: list[int]) -> list[dict]:
    """Final collapse statistic with and without the stop-gradient, per seed."""
    out = []
    for seed in seeds:
        scfg = replace(cfg, seed=seed)
        _, with_sg = pretrain_simsiam(unlabelled, fe_spec, projector, predictor,
                                      recipe, scfg, use_stop_gradient=True)
        _, without_sg = pretrain_simsiam(unlabelled, fe_spec, projector, predictor,
                                         recipe, scfg, use_stop_gradient=False)
        out.append({"seed": seed,
                    "with_stop_gradient": with_sg.collapse[-1],
                    "without_stop_gradient": without_sg.collapse[-1]})
    return out
