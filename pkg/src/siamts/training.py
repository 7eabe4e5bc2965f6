"""Training loops: siamese pretraining, transformation-recognition
pretraining, and the classifier stage with its baselines.

Randomness is split into independent named streams derived from one seed
(weight init, batch order, augmentation draws), so runs are reproducible
and the augmented baseline with zero-width augmentations matches plain
supervised training on the same expanded set step for step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .augment import AugmentationSpec, Window, mtssl_example, sample_positive_pair
from .data import stack_windows, window_labels
from .errors import ConfigError, DataError, NumericError
from .metrics import PredictionSet, accuracy, collapse_stat, kappa
from .models import (ClassifierModel, FeatureExtractor, FeatureExtractorSpec, Mlp,
                     MlpSpec, MtsslModel, SimSiamModel, build_mtssl, build_simsiam)
from .optim import Adam, decayed_lr


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float
    epochs: int
    batch_size: int = 32
    decay_rate: float = 0.96
    decay_steps: int | None = None  # None: one epoch's worth of steps
    weight_decay: float | None = None  # None: take the extractor spec's value
    patience: int = 5
    seed: int = 0
    collapse_eval_size: int = 256

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ConfigError(f"initial_lr must be > 0, got {self.initial_lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ConfigError(f"decay_rate must lie in (0, 1], got {self.decay_rate}")
        if self.decay_steps is not None and self.decay_steps < 1:
            raise ConfigError(f"decay_steps must be >= 1, got {self.decay_steps}")
        if self.weight_decay is not None and self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")


@dataclass
class TrainTrace:
    """Per-epoch task loss (regularization excluded), validation metric
    where one exists, and the embedding-collapse statistic where tracked."""

    loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    collapse: list[float] = field(default_factory=list)
    best_epoch: int = 0   # 1-indexed; 0 means no validation was used
    epochs_run: int = 0

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with tmp.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "val_metric", "collapse"])
            for i in range(self.epochs_run):
                writer.writerow([
                    i + 1,
                    f"{self.loss[i]:.10g}" if i < len(self.loss) else "",
                    f"{self.val_metric[i]:.10g}" if i < len(self.val_metric) else "",
                    f"{self.collapse[i]:.10g}" if i < len(self.collapse) else "",
                ])
        tmp.replace(path)


def _streams(seed: int) -> dict[str, np.random.Generator]:
    init, order, augment = np.random.SeedSequence(seed).spawn(3)
    return {"init": np.random.default_rng(init),
            "order": np.random.default_rng(order),
            "augment": np.random.default_rng(augment)}


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def l2_penalty(params: dict[str, Tensor]) -> Tensor:
    total = Tensor(0.0)
    for p in params.values():
        total = ad.add(total, ad.tensor_sum(ad.mul(p, p)))
    return total


# ---------------------------------------------------------------------------
# siamese objective


def simsiam_loss(p_i: Tensor, z_j: Tensor, p_j: Tensor, z_i: Tensor,
                 use_stop_gradient: bool = True) -> Tensor:
    """Symmetric negative cosine similarity between each view's prediction
    and the other view's projection, the latter held constant.

    Accepts single vectors or [B, D] batches (averaged).  Range [-1, 1];
    minimizing drives the two views' representations together.
    """
    if use_stop_gradient:
        z_j = ad.stop_gradient(z_j)
        z_i = ad.stop_gradient(z_i)
    s_ij = ad.cosine_similarity(p_i, z_j)
    s_ji = ad.cosine_similarity(p_j, z_i)
    if s_ij.ndim > 0:
        s_ij = ad.tensor_mean(s_ij)
        s_ji = ad.tensor_mean(s_ji)
    return ad.add(ad.mul(s_ij, Tensor(-0.5)), ad.mul(s_ji, Tensor(-0.5)))


# ---------------------------------------------------------------------------
# pretraining


def _resolve_decay(cfg: TrainConfig, steps_per_epoch: int) -> int:
    return cfg.decay_steps if cfg.decay_steps is not None else max(1, steps_per_epoch)


def _check_windows(windows: list[Window], purpose: str) -> None:
    if not windows:
        raise DataError(f"{purpose}: empty window list")
    shapes = {w.values.shape for w in windows}
    if len(shapes) > 1:
        raise DataError(f"{purpose}: mixed window shapes {sorted(shapes)}")


def pretrain_simsiam(unlabelled: list[Window], fe_spec: FeatureExtractorSpec,
                     projector: tuple[int, ...], predictor: tuple[int, ...],
                     recipe: tuple[AugmentationSpec, ...], cfg: TrainConfig,
                     use_stop_gradient: bool = True,
                     standardize: bool = True) -> tuple[SimSiamModel, TrainTrace]:
    """Train encoder + predictor on positive pairs from unlabelled windows."""
    _check_windows(unlabelled, "siamese pretraining")
    if not recipe:
        raise ConfigError("siamese pretraining needs at least one augmentation")
    streams = _streams(cfg.seed)
    model = build_simsiam(fe_spec, projector, predictor,
                          unlabelled[0].channels, streams["init"], standardize)
    params = model.params()
    fe_params = {f"fe.{k}": v for k, v in model.fe.params().items()}
    lam = cfg.weight_decay if cfg.weight_decay is not None else fe_spec.weight_decay_lambda

    eval_windows = unlabelled[:min(cfg.collapse_eval_size, len(unlabelled))]
    eval_x = stack_windows(eval_windows)

    adam = Adam()
    decay_steps = _resolve_decay(cfg, math.ceil(len(unlabelled) / cfg.batch_size))
    trace = TrainTrace()
    for _ in range(cfg.epochs):
        losses = []
        for idx in _batches(len(unlabelled), cfg.batch_size, streams["order"]):
            views_i, views_j = [], []
            for i in idx:
                vi, vj = sample_positive_pair(unlabelled[i], recipe, streams["augment"])
                views_i.append(vi)
                views_j.append(vj)
            x_i = Tensor(stack_windows(views_i))
            x_j = Tensor(stack_windows(views_j))
            z_i = model.encode(x_i)
            z_j = model.encode(x_j)
            task = simsiam_loss(model.predict(z_i), z_j, model.predict(z_j), z_i,
                                use_stop_gradient)
            if not -1.0 - 1e-9 <= float(task.data) <= 1.0 + 1e-9:
                raise NumericError(f"siamese loss {float(task.data)} outside [-1, 1]")
            loss = ad.add(task, ad.mul(l2_penalty(fe_params), Tensor(lam))) if lam else task
            grads = ad.grads_for(loss, params)
            adam.step(params, grads,
                      decayed_lr(cfg.initial_lr, adam.step_count, cfg.decay_rate, decay_steps))
            losses.append(float(task.data))
        trace.loss.append(float(np.mean(losses)))
        trace.collapse.append(collapse_stat(model.encode(Tensor(eval_x)).data))
        trace.epochs_run += 1
    return model, trace


def pretrain_mtssl(unlabelled: list[Window], fe_spec: FeatureExtractorSpec,
                   specs: tuple[AugmentationSpec, ...], cfg: TrainConfig,
                   head_hidden: int = 64) -> tuple[MtsslModel, TrainTrace]:
    """Train the extractor to recognize which transformations were applied:
    one binary head per transformation, each seeing its own 50/50 batch."""
    _check_windows(unlabelled, "transformation-recognition pretraining")
    if not specs:
        raise ConfigError("transformation recognition needs at least one augmentation")
    streams = _streams(cfg.seed)
    model = build_mtssl(fe_spec, len(specs), unlabelled[0].channels,
                        streams["init"], head_hidden)
    params = model.params()
    fe_params = {f"fe.{k}": v for k, v in model.fe.params().items()}
    lam = cfg.weight_decay if cfg.weight_decay is not None else fe_spec.weight_decay_lambda

    eval_windows = unlabelled[:min(cfg.collapse_eval_size, len(unlabelled))]
    eval_x = stack_windows(eval_windows)

    adam = Adam()
    decay_steps = _resolve_decay(cfg, math.ceil(len(unlabelled) / cfg.batch_size))
    trace = TrainTrace()
    for _ in range(cfg.epochs):
        losses = []
        for idx in _batches(len(unlabelled), cfg.batch_size, streams["order"]):
            head_losses = []
            for head, spec in zip(model.heads, specs):
                examples = [mtssl_example(unlabelled[i], spec, streams["augment"])
                            for i in idx]
                x = Tensor(stack_windows([w for w, _ in examples]))
                y = np.array([[bit] for _, bit in examples], dtype=float)
                logits = head.forward(model.fe.forward(x))
                head_losses.append(ad.sigmoid_bce(logits, y))
            task = head_losses[0]
            for extra in head_losses[1:]:
                task = ad.add(task, extra)
            task = ad.mul(task, Tensor(1.0 / len(head_losses)))
            loss = ad.add(task, ad.mul(l2_penalty(fe_params), Tensor(lam))) if lam else task
            grads = ad.grads_for(loss, params)
            adam.step(params, grads,
                      decayed_lr(cfg.initial_lr, adam.step_count, cfg.decay_rate, decay_steps))
            losses.append(float(task.data))
        trace.loss.append(float(np.mean(losses)))
        trace.collapse.append(collapse_stat(model.fe.forward(Tensor(eval_x)).data))
        trace.epochs_run += 1
    return model, trace


def mtssl_head_accuracy(model: MtsslModel, windows: list[Window], head_index: int,
                        spec: AugmentationSpec, rng: np.random.Generator,
                        batch_size: int = 256) -> float:
    """Balanced accuracy probe of one recognition head on fresh examples."""
    examples = [mtssl_example(w, spec, rng) for w in windows]
    correct = 0
    for i in range(0, len(examples), batch_size):
        chunk = examples[i:i + batch_size]
        x = Tensor(stack_windows([w for w, _ in chunk]))
        logits = model.heads[head_index].forward(model.fe.forward(x)).data[:, 0]
        pred = (logits > 0).astype(int)
        correct += int((pred == np.array([b for _, b in chunk])).sum())
    return correct / len(examples)


# ---------------------------------------------------------------------------
# classification stage


def extract_features(fe: FeatureExtractor, windows: list[Window],
                     batch_size: int = 256) -> np.ndarray:
    _check_windows(windows, "feature extraction")
    outs = []
    for i in range(0, len(windows), batch_size):
        x = Tensor(stack_windows(windows[i:i + batch_size]))
        outs.append(fe.forward(x).data)
    return np.concatenate(outs)


def _check_labels(windows: list[Window], n_classes: int, purpose: str) -> np.ndarray:
    labels = window_labels(windows)
    present = set(labels.tolist())
    missing = sorted(set(range(n_classes)) - present)
    if missing:
        raise DataError(f"{purpose}: classes without windows: {missing}")
    if present - set(range(n_classes)):
        raise DataError(f"{purpose}: labels outside [0, {n_classes})")
    return labels


def _val_score(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    ps = PredictionSet(y_true, y_pred, n_classes)
    score = kappa(ps)
    # a constant validation pool makes kappa undefined; fall back to accuracy
    return accuracy(ps) if score is None else score


class _EarlyStopper:
    """Track the best epoch; signal a stop after `patience` stale epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, metric: float) -> tuple[bool, bool]:
        """Returns (improved, should_stop) for this 1-indexed epoch."""
        if metric > self.best:
            self.best = metric
            self.best_epoch = epoch
            self.stale = 0
            return True, False
        self.stale += 1
        return False, self.stale >= self.patience


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items() if p.requires_grad}


def _restore(params: dict[str, Tensor], snap: dict[str, np.ndarray]) -> None:
    for k, arr in snap.items():
        params[k].data = arr


def _fit_softmax(forward, params: dict[str, Tensor], n_train: int, get_batch,
                 validate, cfg: TrainConfig, penalty_params, lam: float) -> TrainTrace:
    """Shared classifier loop: softmax cross-entropy, Adam with decayed lr,
    early stopping on the validation score with best-epoch restore."""
    adam = Adam()
    decay_steps = _resolve_decay(cfg, math.ceil(n_train / cfg.batch_size))
    stopper = _EarlyStopper(cfg.patience)
    trace = TrainTrace()
    streams = _streams(cfg.seed)
    best_state = _snapshot(params)
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for idx in _batches(n_train, cfg.batch_size, streams["order"]):
            x, y = get_batch(idx)
            task = ad.softmax_cross_entropy(forward(x), y)
            loss = (ad.add(task, ad.mul(l2_penalty(penalty_params), Tensor(lam)))
                    if lam and penalty_params else task)
            grads = ad.grads_for(loss, params)
            adam.step(params, grads,
                      decayed_lr(cfg.initial_lr, adam.step_count, cfg.decay_rate, decay_steps))
            losses.append(float(task.data))
        trace.loss.append(float(np.mean(losses)))
        trace.epochs_run += 1
        score = validate()
        trace.val_metric.append(score)
        improved, stop = stopper.update(epoch, score)
        if improved:
            best_state = _snapshot(params)
        if stop:
            break
    _restore(params, best_state)
    trace.best_epoch = stopper.best_epoch
    return trace


def train_classifier(fe: FeatureExtractor, labelled: list[Window], val: list[Window],
                     n_classes: int, cfg: TrainConfig, finetune: bool = True,
                     hidden: tuple[int, ...] = (256, 64)) -> tuple[ClassifierModel, TrainTrace]:
    """Attach a softmax head to a (copied) pretrained extractor and train.

    finetune=False freezes the extractor; features are then computed once
    and only the head trains, which is exact because the frozen extractor
    cannot change.
    """
    _check_windows(labelled, "classifier training")
    _check_windows(val, "classifier validation")
    labels = _check_labels(labelled, n_classes, "classifier training")
    val_labels = window_labels(val)
    streams = _streams(cfg.seed)
    fe = fe.clone()
    head = Mlp(MlpSpec(tuple(hidden) + (n_classes,), out_activation="softmax"),
               fe.out_dim, streams["init"])
    model = ClassifierModel(fe, head)
    lam = cfg.weight_decay if cfg.weight_decay is not None else fe.spec.weight_decay_lambda

    if finetune:
        x_train = stack_windows(labelled)
        params = model.params()
        fe_params = {f"fe.{k}": v for k, v in fe.params().items()}

        def get_batch(idx):
            return Tensor(x_train[idx]), labels[idx]

        def validate():
            preds = predict_classes(model, val)
            return _val_score(val_labels, preds, n_classes)

        trace = _fit_softmax(model.logits, params, len(labelled), get_batch,
                             validate, cfg, fe_params, lam)
        return model, trace

    feats = extract_features(fe, labelled)
    val_feats = extract_features(fe, val)
    params = {f"head.{k}": v for k, v in head.params().items()}

    def get_batch(idx):
        return Tensor(feats[idx]), labels[idx]

    def validate():
        preds = head.forward(Tensor(val_feats)).data.argmax(axis=1)
        return _val_score(val_labels, preds, n_classes)

    trace = _fit_softmax(head.forward, params, len(labelled), get_batch,
                         validate, cfg, {}, 0.0)
    return model, trace


def train_supervised(labelled: list[Window], val: list[Window], n_classes: int,
                     fe_spec: FeatureExtractorSpec, cfg: TrainConfig,
                     hidden: tuple[int, ...] = (256, 64)) -> tuple[ClassifierModel, TrainTrace]:
    """Baseline: extractor and head trained from scratch on labels alone."""
    _check_windows(labelled, "supervised training")
    streams = _streams(cfg.seed)
    fe = FeatureExtractor(fe_spec, labelled[0].channels, streams["init"])
    # hand the fresh extractor over without re-cloning so init comes from
    # the same stream as train_classifier's head init
    return _train_fresh(fe, labelled, val, n_classes, cfg, hidden, streams)


def _train_fresh(fe, labelled, val, n_classes, cfg, hidden, streams):
    labels = _check_labels(labelled, n_classes, "supervised training")
    val_labels = window_labels(val)
    head = Mlp(MlpSpec(tuple(hidden) + (n_classes,), out_activation="softmax"),
               fe.out_dim, streams["init"])
    model = ClassifierModel(fe, head)
    lam = cfg.weight_decay if cfg.weight_decay is not None else fe.spec.weight_decay_lambda
    x_train = stack_windows(labelled)
    params = model.params()
    fe_params = {f"fe.{k}": v for k, v in fe.params().items()}

    def get_batch(idx):
        return Tensor(x_train[idx]), labels[idx]

    def validate():
        preds = predict_classes(model, val)
        return _val_score(val_labels, preds, n_classes)

    trace = _fit_softmax(model.logits, params, len(labelled), get_batch,
                         validate, cfg, fe_params, lam)
    return model, trace


def augmented_training_set(labelled: list[Window], specs: tuple[AugmentationSpec, ...],
                           rng: np.random.Generator) -> list[Window]:
    """Originals plus one augmented copy per transform per original."""
    out = list(labelled)
    for spec in specs:
        out += [w.with_values(spec.apply(w.values, rng)) for w in labelled]
    return out


def train_augmented(labelled: list[Window], val: list[Window], n_classes: int,
                    fe_spec: FeatureExtractorSpec, cfg: TrainConfig,
                    specs: tuple[AugmentationSpec, ...],
                    hidden: tuple[int, ...] = (256, 64)) -> tuple[ClassifierModel, TrainTrace]:
    """Baseline: supervised training on a statically augmented set."""
    _check_windows(labelled, "augmented training")
    streams = _streams(cfg.seed)
    expanded = augmented_training_set(labelled, specs, streams["augment"])
    fe = FeatureExtractor(fe_spec, labelled[0].channels, streams["init"])
    return _train_fresh(fe, expanded, val, n_classes, cfg, hidden, streams)


def transfer_learn(source_labelled: list[Window], source_val: list[Window],
                   n_source: int, target_labelled: list[Window],
                   target_val: list[Window], n_target: int,
                   fe_spec: FeatureExtractorSpec, source_cfg: TrainConfig,
                   target_cfg: TrainConfig,
                   hidden: tuple[int, ...] = (256, 64)) -> tuple[ClassifierModel, TrainTrace]:
    """Baseline: supervise on the auxiliary users, then swap the head and
    fine-tune everything on the target users."""
    stage1, _ = train_supervised(source_labelled, source_val, n_source,
                                 fe_spec, source_cfg, hidden)
    return train_classifier(stage1.fe, target_labelled, target_val, n_target,
                            target_cfg, finetune=True, hidden=hidden)


def predict_classes(model: ClassifierModel, windows: list[Window],
                    batch_size: int = 256) -> np.ndarray:
    preds = []
    for i in range(0, len(windows), batch_size):
        x = Tensor(stack_windows(windows[i:i + batch_size]))
        preds.append(model.logits(x).data.argmax(axis=1))
    return np.concatenate(preds)


def evaluate_classifier(model: ClassifierModel, windows: list[Window],
                        n_classes: int) -> PredictionSet:
    _check_windows(windows, "evaluation")
    return PredictionSet(window_labels(windows), predict_classes(model, windows), n_classes)
