"""Split construction, experiment execution, and result aggregation.

Protocols
---------
``unseen``  repeated random participant-level partitions; no participant
            appears in more than one of train/val/test.
``seen5``   5-fold sample-level cross-validation, stratified so every
            (participant, class) group is dealt round-robin across folds.
``seen6``   the same with 6 folds.
``lopo``    leave-one-participant-out; validation is the next participant.
``sweep``   the seen5 splits repeated for each range-window size.

Every (method, split, run) trains a fresh model.  Augmentation only ever
touches the training split, and split hygiene is enforced before training:
sample origins must be disjoint across train/val/test, and for
participant-level protocols the participant sets must be too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import AugmentSpec
from .dataformat import LabeledSample, classes_for_mode
from .nn import ModelSpec, TrainConfig, build_model, predict_probs, train
from .pipeline import FeatureConfig, PreparedSample, prepare_dataset, stack_views
from .wrtft import StftConfig

METHOD_KINDS = ("td", "wrtft", "spn")
PROTOCOLS = ("unseen", "seen5", "seen6", "lopo", "sweep")
SESSION_CHOICES = ("both", "1", "2", "each")
DEFAULT_WS_SWEEP = (30, 35, 40, 45, 50, 55, 60)


class LeakageError(RuntimeError):
    """A sample or participant crossed split boundaries."""


def parse_method(token: str) -> tuple[str, bool]:
    """'spn+aug' -> ('spn', True); plain kinds pass through."""
    base, sep, suffix = token.partition("+")
    if base not in METHOD_KINDS or (sep and suffix != "aug"):
        raise ValueError(f"unknown method token {token!r}")
    return base, bool(sep)


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: str
    methods: tuple[str, ...] = ("spn+aug",)
    class_mode: int = 4
    ws: int = 40
    ws_values: tuple[int, ...] = DEFAULT_WS_SWEEP
    session: str = "both"
    seed: int = 0
    runs_per_config: int = 5
    n_partitions: int = 10
    n_val_participants: int = 4
    n_test_participants: int = 4
    stft: StftConfig = field(default_factory=StftConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if self.session not in SESSION_CHOICES:
            raise ValueError(f"session must be one of {SESSION_CHOICES}")
        if self.runs_per_config < 1 or self.n_partitions < 1:
            raise ValueError("runs_per_config and n_partitions must be >= 1")
        for token in self.methods:
            parse_method(token)

    def to_config_dict(self) -> dict:
        """JSON-serializable echo of every resolved setting."""
        return {
            "protocol": self.protocol,
            "methods": list(self.methods),
            "class_mode": self.class_mode,
            "ws": self.ws,
            "ws_values": list(self.ws_values),
            "session": self.session,
            "seed": self.seed,
            "runs_per_config": self.runs_per_config,
            "n_partitions": self.n_partitions,
            "n_val_participants": self.n_val_participants,
            "n_test_participants": self.n_test_participants,
            "stft": {
                "segment_len": self.stft.segment_len,
                "hop": self.stft.hop,
                "fft_len": self.stft.fft_len,
                "window_fn": self.stft.window_fn.value,
            },
            "train": {
                "lr": self.train.lr,
                "batch_size": self.train.batch_size,
                "max_epochs": self.train.max_epochs,
                "patience": self.train.patience,
                "seed": self.train.seed,
            },
            "augment": {
                "ts_shifts": list(self.augment.ts_shifts),
                "rs_shifts": list(self.augment.rs_shifts),
                "tw_sigma": self.augment.tw_sigma,
                "mw_sigma": self.augment.mw_sigma,
                "knots": self.augment.knots,
            },
        }


@dataclass(frozen=True)
class Split:
    name: str
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]
    by_participant: bool  # whether participant disjointness is required


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _participant_splits(
    participants: list[int], spec: ExperimentSpec, by_pid: dict[int, list[int]]
) -> list[Split]:
    n_val, n_test = spec.n_val_participants, spec.n_test_participants
    if len(participants) <= n_val + n_test:
        raise ValueError(
            f"{len(participants)} participants cannot supply {n_val} val + {n_test} test"
        )
    splits = []
    for k in range(spec.n_partitions):
        rng = np.random.default_rng([spec.seed, 17, k])
        perm = [participants[i] for i in rng.permutation(len(participants))]
        test_p, val_p = perm[:n_test], perm[n_test : n_test + n_val]
        train_p = perm[n_test + n_val :]
        splits.append(
            Split(
                name=f"partition{k}",
                train=tuple(i for p in sorted(train_p) for i in by_pid[p]),
                val=tuple(i for p in sorted(val_p) for i in by_pid[p]),
                test=tuple(i for p in sorted(test_p) for i in by_pid[p]),
                by_participant=True,
            )
        )
    return splits


def _kfold_splits(dataset, indices: list[int], k: int) -> list[Split]:
    groups: dict[tuple[int, int], list[int]] = {}
    for i in indices:
        s = dataset[i]
        groups.setdefault((s.participant_id, s.label.index), []).append(i)
    folds: list[list[int]] = [[] for _ in range(k)]
    for g, key in enumerate(sorted(groups)):
        for j, idx in enumerate(groups[key]):
            folds[(j + g) % k].append(idx)
    for f, fold in enumerate(folds):
        if not fold:
            raise ValueError(f"fold {f} is empty; not enough samples for {k} folds")
    splits = []
    for f in range(k):
        val_f = (f + 1) % k
        train_idx = [i for j in range(k) if j not in (f, val_f) for i in folds[j]]
        splits.append(
            Split(
                name=f"fold{f}",
                train=tuple(sorted(train_idx)),
                val=tuple(sorted(folds[val_f])),
                test=tuple(sorted(folds[f])),
                by_participant=False,
            )
        )
    return splits


def _lopo_splits(participants: list[int], by_pid: dict[int, list[int]]) -> list[Split]:
    if len(participants) < 3:
        raise ValueError("leave-one-out needs at least 3 participants")
    splits = []
    for j, p in enumerate(participants):
        val_p = participants[(j + 1) % len(participants)]
        train_idx = [
            i for q in participants if q not in (p, val_p) for i in by_pid[q]
        ]
        splits.append(
            Split(
                name=f"participant{p}",
                train=tuple(train_idx),
                val=tuple(by_pid[val_p]),
                test=tuple(by_pid[p]),
                by_participant=True,
            )
        )
    return splits


def make_splits(dataset: list[LabeledSample], spec: ExperimentSpec) -> list[Split]:
    """Dataset indices per split for the chosen protocol.

    Indices refer to positions in ``dataset`` after any session filtering
    done by the caller.
    """
    if not dataset:
        raise ValueError("empty dataset")
    indices = list(range(len(dataset)))
    by_pid: dict[int, list[int]] = {}
    for i in indices:
        by_pid.setdefault(dataset[i].participant_id, []).append(i)
    participants = sorted(by_pid)

    if spec.protocol == "unseen":
        return _participant_splits(participants, spec, by_pid)
    if spec.protocol in ("seen5", "sweep"):
        return _kfold_splits(dataset, indices, 5)
    if spec.protocol == "seen6":
        return _kfold_splits(dataset, indices, 6)
    if spec.protocol == "lopo":
        return _lopo_splits(participants, by_pid)
    raise ValueError(f"unhandled protocol {spec.protocol}")


def check_split_hygiene(
    dataset: list[LabeledSample],
    split: Split,
    train_ps: list[PreparedSample],
    val_ps: list[PreparedSample],
    test_ps: list[PreparedSample],
) -> None:
    """Raise LeakageError if any sample origin (or participant, where the
    protocol demands it) appears on both sides of a split boundary."""
    tr = {p.origin for p in train_ps}
    va = {p.origin for p in val_ps}
    te = {p.origin for p in test_ps}
    if tr & te or tr & va or va & te:
        raise LeakageError(f"sample origins overlap across {split.name}")
    if split.by_participant:
        tr_p = {p.participant_id for p in train_ps}
        va_p = {p.participant_id for p in val_ps}
        te_p = {p.participant_id for p in test_ps}
        if tr_p & te_p or tr_p & va_p or va_p & te_p:
            raise LeakageError(f"participants overlap across {split.name}")


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> np.ndarray:
    """Counts with true labels on rows, predictions on columns."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("label arrays must match")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def accuracy_stats(accuracies: list[float]) -> tuple[float, float]:
    """Mean and standard error (sample std over sqrt(n)); one run gives 0 SE."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.size == 0:
        raise ValueError("no accuracies")
    mean = float(a.mean())
    se = float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0
    return mean, se


def default_trainer(
    kind: str,
    train_ps: list[PreparedSample],
    val_ps: list[PreparedSample],
    num_classes: int,
    seed: int,
    train_cfg: TrainConfig,
):
    """Train a fresh model; returns a label-index predictor over prepared samples."""
    t_inputs, t_labels = stack_views(train_ps, kind)
    v_inputs, v_labels = stack_views(val_ps, kind)
    mspec = ModelSpec(
        kind=kind,
        num_classes=num_classes,
        td_shape=train_ps[0].td.shape[:2],
        wr_shape=train_ps[0].wr.shape[:2],
        seed=seed,
    )
    model = build_model(mspec)
    train(model, t_inputs, t_labels, v_inputs, v_labels, replace(train_cfg, seed=seed))

    def predict(samples: list[PreparedSample]) -> np.ndarray:
        inputs, _ = stack_views(samples, kind)
        return predict_probs(model, inputs).argmax(axis=1)

    return predict


@dataclass
class MethodResult:
    method: str
    ws: int
    session: str  # "all", "1", or "2"
    accuracies: list[float]  # sorted ascending
    mean_acc: float
    se: float
    n_runs: int
    confusion: list[list[int]]


@dataclass
class EvalReport:
    protocol: str
    class_mode: int
    class_names: list[str]
    config: dict
    results: list[MethodResult]

    def result_for(self, method: str, ws: int | None = None, session: str = "all") -> MethodResult:
        for r in self.results:
            if r.method == method and r.session == session and (ws is None or r.ws == ws):
                return r
        raise KeyError(f"no result for {method!r} ws={ws} session={session!r}")

    def to_json(self) -> str:
        payload = {
            "protocol": self.protocol,
            "class_mode": self.class_mode,
            "class_names": self.class_names,
            "config": self.config,
            "results": [
                {
                    "method": r.method,
                    "ws": r.ws,
                    "session": r.session,
                    "accuracies": r.accuracies,
                    "mean_acc": r.mean_acc,
                    "se": r.se,
                    "n_runs": r.n_runs,
                    "confusion": r.confusion,
                }
                for r in self.results
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        results = [
            MethodResult(
                method=r["method"],
                ws=int(r["ws"]),
                session=r["session"],
                accuracies=[float(a) for a in r["accuracies"]],
                mean_acc=float(r["mean_acc"]),
                se=float(r["se"]),
                n_runs=int(r["n_runs"]),
                confusion=[[int(v) for v in row] for row in r["confusion"]],
            )
            for r in d["results"]
        ]
        return cls(
            protocol=d["protocol"],
            class_mode=int(d["class_mode"]),
            class_names=list(d["class_names"]),
            config=dict(d["config"]),
            results=results,
        )

    def summary_rows(self) -> list[dict]:
        return [
            {
                "method": r.method,
                "protocol": self.protocol,
                "ws": r.ws,
                "session": r.session,
                "mean_acc": r.mean_acc,
                "se": r.se,
                "n_runs": r.n_runs,
            }
            for r in self.results
        ]


def filter_session(dataset: list[LabeledSample], session: str) -> list[LabeledSample]:
    if session in ("both", "each"):
        return list(dataset)
    wanted = int(session)
    return [s for s in dataset if s.session_id == wanted]


def run_experiment(
    dataset: list[LabeledSample],
    spec: ExperimentSpec,
    trainer=None,
    progress=None,
) -> EvalReport:
    """Execute the full protocol; deterministic for a fixed spec and dataset.

    ``trainer`` defaults to real model training and exists so tests can
    substitute cheap stand-ins.  ``progress`` is an optional callable
    receiving one status string per completed training run.
    """
    trainer = trainer or default_trainer
    data = filter_session(dataset, spec.session)
    if not data:
        raise ValueError(f"no samples left after session filter {spec.session!r}")
    labels = classes_for_mode(spec.class_mode)
    num_classes = len(labels)
    for s in data:
        if s.label not in labels:
            raise ValueError(f"sample labeled {s.label.value} invalid for mode {spec.class_mode}")

    splits = make_splits(data, spec)
    ws_list = list(spec.ws_values) if spec.protocol == "sweep" else [spec.ws]
    session_tags = ["all", "1", "2"] if spec.session == "each" else ["all"]

    # accumulators keyed by (method, ws, session_tag)
    accs: dict[tuple, list[float]] = {}
    cms: dict[tuple, np.ndarray] = {}

    for ws in ws_list:
        fcfg = FeatureConfig(ws=ws, stft=spec.stft)
        for si, split in enumerate(splits):
            subset = lambda idx: [data[i] for i in idx]
            plain_train = prepare_dataset(subset(split.train), fcfg, origins=list(split.train))
            val_ps = prepare_dataset(subset(split.val), fcfg, origins=list(split.val))
            test_ps = prepare_dataset(subset(split.test), fcfg, origins=list(split.test))
            aug_train: list[PreparedSample] | None = None

            for mi, token in enumerate(spec.methods):
                kind, use_aug = parse_method(token)
                if use_aug and aug_train is None:
                    aug_seed = _derive_seed(spec.seed, 555, ws, si)
                    aug_train = prepare_dataset(
                        subset(split.train),
                        fcfg,
                        origins=list(split.train),
                        augment=replace(spec.augment, rng_seed=aug_seed),
                    )
                train_ps = aug_train if use_aug else plain_train
                check_split_hygiene(data, split, train_ps, val_ps, test_ps)

                for run in range(spec.runs_per_config):
                    run_seed = _derive_seed(spec.seed, ws, si, mi, run)
                    predict = trainer(kind, train_ps, val_ps, num_classes, run_seed, spec.train)
                    y_pred = np.asarray(predict(test_ps))
                    y_true = np.array([p.label.index for p in test_ps])
                    for tag in session_tags:
                        if tag == "all":
                            mask = np.ones(len(test_ps), dtype=bool)
                        else:
                            mask = np.array(
                                [p.session_id == int(tag) for p in test_ps], dtype=bool
                            )
                        if not mask.any():
                            continue
                        key = (token, ws, tag)
                        acc = float((y_pred[mask] == y_true[mask]).mean())
                        accs.setdefault(key, []).append(acc)
                        cm = confusion_matrix(y_true[mask], y_pred[mask], num_classes)
                        cms[key] = cms.get(key, 0) + cm
                    if progress is not None:
                        progress(
                            f"{token} ws={ws} {split.name} run={run} "
                            f"acc={float((y_pred == y_true).mean()):.4f}"
                        )

    results = []
    for token in spec.methods:
        for ws in ws_list:
            for tag in session_tags:
                key = (token, ws, tag)
                if key not in accs:
                    continue
                ordered = sorted(accs[key])
                mean, se = accuracy_stats(ordered)
                results.append(
                    MethodResult(
                        method=token,
                        ws=ws,
                        session=tag,
                        accuracies=ordered,
                        mean_acc=mean,
                        se=se,
                        n_runs=len(ordered),
                        confusion=cms[key].tolist(),
                    )
                )

    return EvalReport(
        protocol=spec.protocol,
        class_mode=spec.class_mode,
        class_names=[c.value for c in labels],
        config=spec.to_config_dict(),
        results=results,
    )
