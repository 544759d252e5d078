"""Likelihood classifiers built on per-class phase-amplitude models.

Each class is aligned on its own, reduced by vertical and horizontal fPCA, and
given an amplitude model on ``(f0, c)`` and a phase model on ``z``. A test
function is aligned to every class's Karcher mean separately, projected onto
that class's bases and scored; the label with the largest log-likelihood wins,
with ties going to the class declared first.

Both model families (Gaussian and kernel density) are fitted at training time so
that one alignment pass per test function serves every rule.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .align import DEFAULT_SLOPE_CAP, MAX_LATTICE_N, DpLattice, SeparationResult, optimal_warp, separate
from .errors import GeometryError
from .fpca import (
    HorizontalFpca,
    L2Fpca,
    VerticalFpca,
    horizontal_fpca,
    l2_fpca,
    project_horizontal,
    project_l2,
    project_vertical,
    select_components,
    vertical_fpca,
)
from .funcrep import Grid, SampledFunction, check_common_grid, smooth_box
from .genmodel import CoefficientSample, Layout, Model, fit_gaussian, fit_kde, log_likelihood, training_samples
from .srsf import to_srsf, warp_action
from .warpspace import sphere_log, to_psi

RULES = ("amplitude", "phase", "joint", "baseline")
FAMILIES = ("gaussian", "kde")
RULE_TITLES = {
    "amplitude": "amplitude only",
    "phase": "phase only",
    "joint": "phase and amplitude",
    "baseline": "standard L2",
}
FAMILY_TITLES = {"gaussian": "Gaussian", "kde": "Kernel Density"}


@dataclass(frozen=True)
class ClassifierConfig:
    threshold: float = 0.95
    family: str = "gaussian"
    smooth_iters: int = 0
    lattice_n: int = MAX_LATTICE_N
    slope_cap: int = DEFAULT_SLOPE_CAP
    mode: str = "diagonal-blocks"
    bandwidth: str | float = "silverman"
    tol: float = 1e-4
    max_iter: int = 20

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ValueError("threshold must lie in (0, 1]")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.smooth_iters < 0:
            raise ValueError("smooth_iters must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ClassModel:
    label: str
    separation: SeparationResult
    vertical: VerticalFpca
    horizontal: HorizontalFpca
    k1: int
    k2: int
    amplitude: dict
    phase: dict
    baseline_basis: L2Fpca
    k_baseline: int
    baseline: dict


@dataclass(frozen=True, eq=False)
class TrainedClassifier:
    classes: tuple
    config: ClassifierConfig
    grid: Grid
    lattice: DpLattice

    @property
    def labels(self) -> list:
        return [c.label for c in self.classes]


def _fit_both(samples, layout, cfg: ClassifierConfig, vertical=None, horizontal=None) -> dict:
    return {
        "gaussian": fit_gaussian(samples, cfg.mode, layout, vertical, horizontal),
        "kde": fit_kde(samples, cfg.bandwidth, layout, vertical, horizontal),
    }


def _group(data) -> dict:
    groups: dict = {}
    for label, f in data:
        groups.setdefault(label, []).append(f)
    return groups


def _train_class(label, fs, cfg: ClassifierConfig, lattice: DpLattice) -> ClassModel:
    sep = separate(fs, lattice, tol=cfg.tol, max_iter=cfg.max_iter)
    vb = vertical_fpca(sep.aligned)
    hb = horizontal_fpca(sep.warps)
    k1 = select_components(vb.singular_values, cfg.threshold)
    k2 = select_components(hb.singular_values, cfg.threshold)
    samples = training_samples(sep.aligned, vb, hb, k1, k2)
    amp = _fit_both(samples, Layout(True, k1, 0), cfg, vb)
    ph = _fit_both(samples, Layout(False, 0, k2), cfg, None, hb)

    lb = l2_fpca(fs)
    kb = select_components(lb.singular_values, cfg.threshold)
    base_samples = [CoefficientSample(0.0, c, []) for c in lb.coefficients[:, :kb]]
    base = _fit_both(base_samples, Layout(False, kb, 0), cfg)
    return ClassModel(label, sep, vb, hb, k1, k2, amp, ph, lb, kb, base)


def train(
    data: Sequence[tuple],
    config: ClassifierConfig | None = None,
    workers: int | None = None,
) -> TrainedClassifier:
    """Fit per-class models on ``(label, function)`` pairs.

    Classes keep the order in which their labels first appear.
    """
    cfg = config or ClassifierConfig()
    groups = _group(data)
    if len(groups) < 2:
        raise ValueError("need at least two classes")
    for label, fs in groups.items():
        if len(fs) < 2:
            raise ValueError(f"class {label!r} has fewer than 2 samples")
    grid = check_common_grid([f for fs in groups.values() for f in fs])
    lattice = DpLattice(min(grid.n, cfg.lattice_n), cfg.slope_cap)
    items = [(label, [smooth_box(f, cfg.smooth_iters) for f in fs]) for label, fs in groups.items()]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            classes = list(pool.map(lambda it: _train_class(it[0], it[1], cfg, lattice), items))
    else:
        classes = [_train_class(label, fs, cfg, lattice) for label, fs in items]
    return TrainedClassifier(tuple(classes), cfg, grid, lattice)


def class_scores(clf: TrainedClassifier, f: SampledFunction) -> dict:
    """Log-likelihoods ``scores[family][rule][l]`` of ``f`` under every class.

    An antipodal warp (undefined sphere log) scores ``-inf`` in the phase and
    joint rules for that class.
    """
    if f.grid != clf.grid:
        raise ValueError("test function is not on the training grid")
    fs = smooth_box(f, clf.config.smooth_iters)
    q = to_srsf(fs)
    L = len(clf.classes)
    scores = {fam: {rule: np.empty(L) for rule in RULES} for fam in FAMILIES}
    for l, cm in enumerate(clf.classes):
        gam = optimal_warp(cm.separation.mu_q, q, clf.lattice)
        q_al = warp_action(q, gam)
        c = project_vertical(cm.vertical, q_al, cm.k1)
        amp_s = CoefficientSample(q.f0, c, [])
        try:
            v = sphere_log(cm.horizontal.mu_psi, to_psi(gam))
            ph_s = CoefficientSample(0.0, [], project_horizontal(cm.horizontal, v, cm.k2))
        except GeometryError:
            ph_s = None
        base_s = project_l2(cm.baseline_basis, fs, cm.k_baseline)
        for fam in FAMILIES:
            a = log_likelihood(cm.amplitude[fam], amp_s)
            p = -math.inf if ph_s is None else log_likelihood(cm.phase[fam], ph_s)
            row = scores[fam]
            row["amplitude"][l] = a
            row["phase"][l] = p
            row["joint"][l] = a + p
            row["baseline"][l] = log_likelihood(cm.baseline[fam], base_s)
    return scores


def decide(labels: Sequence, scores: np.ndarray):
    """Label with the largest score; the first class wins ties."""
    scores = np.asarray(scores, dtype=float)
    if np.all(np.isneginf(scores)):
        raise GeometryError("every class was rejected (undefined sphere log)")
    return labels[int(np.argmax(scores))]


def _classify(clf, f, rule, family):
    fam = family or clf.config.family
    if fam not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    return decide(clf.labels, class_scores(clf, f)[fam][rule])


def classify_amplitude(clf: TrainedClassifier, f: SampledFunction, family: str | None = None):
    return _classify(clf, f, "amplitude", family)


def classify_phase(clf: TrainedClassifier, f: SampledFunction, family: str | None = None):
    return _classify(clf, f, "phase", family)


def classify_joint(clf: TrainedClassifier, f: SampledFunction, family: str | None = None):
    return _classify(clf, f, "joint", family)


def classify_baseline_l2(clf: TrainedClassifier, f: SampledFunction, family: str | None = None):
    return _classify(clf, f, "baseline", family)


def predict_all(clf: TrainedClassifier, f: SampledFunction) -> dict:
    """Decisions of every rule and family from a single scoring pass."""
    scores = class_scores(clf, f)
    return {
        fam: {rule: decide(clf.labels, scores[fam][rule]) for rule in RULES} for fam in FAMILIES
    }


@dataclass(frozen=True, eq=False)
class CvReport:
    """Cross-validation summary. ``sd`` is the sample (n-1) standard deviation over folds."""

    k: int
    seed: int
    labels: list
    fold_accuracy: dict
    mean: dict
    sd: dict
    confusion: dict
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "labels": [str(x) for x in self.labels],
            "fold_accuracy": self.fold_accuracy,
            "mean": self.mean,
            "sd": self.sd,
            "confusion": self.confusion,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rule"] + [FAMILY_TITLES[f] for f in FAMILIES])
        for rule in RULES:
            w.writerow(
                [RULE_TITLES[rule]]
                + [f"{self.mean[f][rule]:.3f} ({self.sd[f][rule]:.3f})" for f in FAMILIES]
            )
        return buf.getvalue()


def stratified_folds(labels: Sequence, k: int, seed: int) -> np.ndarray:
    """Fold index per sample: each class is shuffled with one seeded stream and
    dealt round-robin into ``k`` folds."""
    rng = np.random.default_rng(seed)
    labels = list(labels)
    folds = np.empty(len(labels), dtype=int)
    for label in dict.fromkeys(labels):
        idx = np.array([i for i, x in enumerate(labels) if x == label])
        perm = rng.permutation(idx)
        folds[perm] = np.arange(perm.size) % k
    return folds


def kfold_cv(
    data: Sequence[tuple],
    config: ClassifierConfig | None = None,
    k: int = 5,
    seed: int = 0,
    workers: int | None = None,
) -> CvReport:
    cfg = config or ClassifierConfig()
    if k < 2:
        raise ValueError("k must be at least 2")
    data = list(data)
    labels = [lab for lab, _ in data]
    classes = list(dict.fromkeys(labels))
    for label in classes:
        if labels.count(label) < k:
            raise ValueError(f"class {label!r} has fewer than k={k} samples")
    folds = stratified_folds(labels, k, seed)
    pos = {lab: i for i, lab in enumerate(classes)}

    def run_fold(j):
        train_set = [d for d, fo in zip(data, folds) if fo != j]
        clf = train(train_set, cfg)
        held = [(i, data[i]) for i in np.flatnonzero(folds == j)]
        return [(i, predict_all(clf, f)) for i, (_, f) in held]

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_fold, range(k)))
    else:
        results = [run_fold(j) for j in range(k)]

    L = len(classes)
    fold_acc = {fam: {rule: [] for rule in RULES} for fam in FAMILIES}
    confusion = {fam: {rule: np.zeros((L, L), dtype=int) for rule in RULES} for fam in FAMILIES}
    for preds in results:
        for fam in FAMILIES:
            for rule in RULES:
                hits = 0
                for i, p in preds:
                    truth = labels[i]
                    confusion[fam][rule][pos[truth], pos[p[fam][rule]]] += 1
                    hits += p[fam][rule] == truth
                fold_acc[fam][rule].append(hits / len(preds))
    mean = {fam: {r: float(np.mean(fold_acc[fam][r])) for r in RULES} for fam in FAMILIES}
    sd = {fam: {r: float(np.std(fold_acc[fam][r], ddof=1)) for r in RULES} for fam in FAMILIES}
    conf = {fam: {r: confusion[fam][r].tolist() for r in RULES} for fam in FAMILIES}
    return CvReport(k, seed, classes, fold_acc, mean, sd, conf, cfg.as_dict())
