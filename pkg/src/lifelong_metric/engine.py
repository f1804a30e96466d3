"""Task-by-task lifelong metric learning.

:class:`LifelongMetricLearner` receives labeled batches tagged with a task id.
For the batch's task it fits a base metric, forms the passive-aggressive
target, solves the task weights against the shared dictionary and refines the
dictionary from every stored task summary.  Raw samples are held only for the
task currently being trained; switching tasks drops them.
"""

import io
import json
import warnings
import zipfile
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ._textio import format_matrix, parse_matrix
from .dictionary import (
    DEFAULT_J_SCALES,
    LifelongDictionary,
    TaskSummary,
    init_dictionary,
    refine_dictionary,
)
from .exceptions import ConfigurationError, DataError, ShapeError
from .learners import BaseLearnerConfig, fit_base, mean_gradient
from .metric import MetricKind, MetricMatrix
from .solver import SolverConfig, solve_weights
from .triplets import LabeledDataset, TripletSet, mine_triplets

__all__ = ["EngineConfig", "ActiveTask", "LifelongMetricLearner", "CHECKPOINT_VERSION"]

CHECKPOINT_VERSION = 1
DELTA_MODES = ("base", "task", "live")
# fixed member timestamp keeps checkpoints byte-reproducible
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class EngineConfig:
    d: int = 5
    lambda_t: float = 0.1
    gamma: float = 0.01
    dict_step: float = 1e-3
    dict_steps: int = 5
    symmetrized: bool = False
    num_clusters: int = 3
    j_scales: tuple = DEFAULT_J_SCALES
    neighbors: int = 3
    impostors: int = 10
    mining_mode: str = "sample"
    delta_at: str = "base"
    rounds: int = 1
    seed: int = 0
    base: BaseLearnerConfig = field(default_factory=BaseLearnerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        object.__setattr__(self, "j_scales", tuple(int(j) for j in self.j_scales))
        if self.d < 1:
            raise ConfigurationError(f"d must be >= 1, got {self.d}")
        if not self.lambda_t >= 0:
            raise ConfigurationError(f"lambda_t must be >= 0, got {self.lambda_t}")
        if not self.gamma >= 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        if not self.dict_step > 0:
            raise ConfigurationError(f"dict_step must be > 0, got {self.dict_step}")
        if self.dict_steps < 0:
            raise ConfigurationError(f"dict_steps must be >= 0, got {self.dict_steps}")
        if self.rounds < 1:
            raise ConfigurationError(f"rounds must be >= 1, got {self.rounds}")
        if self.delta_at not in DELTA_MODES:
            raise ConfigurationError(f"delta_at must be one of {DELTA_MODES}, got {self.delta_at!r}")
        if self.mining_mode not in ("sample", "enumerate"):
            raise ConfigurationError(f"unknown mining_mode {self.mining_mode!r}")
        if self.solver.lambda_t != self.lambda_t:
            object.__setattr__(self, "solver", replace(self.solver, lambda_t=self.lambda_t))

    @property
    def kind(self):
        return self.base.kind

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("base", "solver"):
                for key, sub in asdict(value).items():
                    out[f"{f.name}.{key}"] = sub.value if isinstance(sub, MetricKind) else sub
            else:
                out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data):
        base = {k[5:]: v for k, v in data.items() if k.startswith("base.")}
        solver = {k[7:]: v for k, v in data.items() if k.startswith("solver.")}
        top = {k: v for k, v in data.items() if "." not in k}
        return cls(base=BaseLearnerConfig(**base), solver=SolverConfig(**solver), **top)


@dataclass
class ActiveTask:
    """The one task whose raw samples are currently held."""

    task_id: str
    data: LabeledDataset
    triplets: TripletSet = None
    base_metric: MetricMatrix = None
    solver_state: object = None


class LifelongMetricLearner:
    """Lifelong metric learner over a shared dictionary.

    Parameters
    ----------
    config : EngineConfig, optional

    Attributes
    ----------
    dictionary : LifelongDictionary or None
        Set from the first batch ever observed.
    tasks : dict
        ``task_id -> TaskSummary`` in registration order.
    active : ActiveTask or None
    """

    def __init__(self, config=None):
        self.config = config or EngineConfig()
        self.dictionary = None
        self.tasks = {}
        self.active = None

    @property
    def m(self):
        return len(self.tasks)

    @property
    def task_ids(self):
        return list(self.tasks)

    def observe_batch(self, batch, task_id=None):
        """Add a batch for ``task_id`` (default: ``batch.task_id``) and retrain that task.

        A batch for the active task is appended to its buffer.  A batch for any
        other task, new or previously seen, starts a fresh buffer.
        """
        task_id = str(batch.task_id if task_id is None else task_id)
        batch = LabeledDataset(batch.X, batch.y, task_id)
        cfg = self.config
        if self.dictionary is None:
            self.dictionary = init_dictionary(batch, cfg.d, num_clusters=cfg.num_clusters,
                                              J_scales=cfg.j_scales, seed=cfg.seed)
        elif batch.d_hat != self.dictionary.d_hat:
            raise ShapeError(f"batch has {batch.d_hat} features, dictionary expects "
                             f"{self.dictionary.d_hat}")

        if self.active is not None and self.active.task_id == task_id:
            data = self.active.data.concat(batch)
        else:
            if self.active is not None and self.active.task_id in self.tasks:
                self.tasks[self.active.task_id].m_star = None
            data = batch
        self.active = ActiveTask(task_id, data)
        return self.update_task(task_id)

    def update_task(self, task_id):
        """Refit the active task's weights and refine the dictionary."""
        task_id = str(task_id)
        if self.active is None or self.active.task_id != task_id:
            raise ConfigurationError(f"task {task_id!r} has no active buffer")
        cfg = self.config
        act = self.active
        previous = self.tasks.get(task_id)
        d, d_hat = self.dictionary.d, self.dictionary.d_hat
        W_init = previous.W if previous is not None else np.eye(d)

        try:
            triplets = mine_triplets(act.data, cfg.neighbors, cfg.impostors, seed=cfg.seed,
                                     mode=cfg.mining_mode)
        except ConfigurationError as exc:
            warnings.warn(f"task {task_id!r}: {exc}", stacklevel=2)
            triplets = TripletSet(np.empty((0, 3), dtype=np.int64), act.data.n)
        act.triplets = triplets

        if len(triplets) == 0:
            warnings.warn(f"task {task_id!r} has no triplets; weights left unchanged", stacklevel=2)
            self.tasks[task_id] = TaskSummary(task_id, W_init.copy(), np.zeros((d_hat, d_hat)), 0,
                                              cfg.kind.value)
        else:
            base = fit_base(act.data, triplets, cfg.base)
            G = mean_gradient(base, act.data, triplets)
            m_star = base.values - cfg.base.pa_eta * G
            W, state = solve_weights(self.dictionary, m_star, W_init, cfg.solver)
            act.base_metric = base
            act.solver_state = state
            if cfg.delta_at in ("task", "live"):
                delta = mean_gradient(MetricMatrix(self.dictionary.metric(W), cfg.kind), act.data,
                                      triplets)
            else:
                delta = G
            self.tasks[task_id] = TaskSummary(task_id, W, delta, len(triplets), cfg.kind.value,
                                              m_star=m_star)

        if cfg.dict_steps > 0 and cfg.delta_at == "live" and len(triplets):
            summary = self.tasks[task_id]
            for r in range(cfg.rounds * cfg.dict_steps):
                if r and r % cfg.dict_steps == 0:
                    summary.W, act.solver_state = solve_weights(self.dictionary, summary.m_star,
                                                                summary.W, cfg.solver)
                summary.delta = mean_gradient(MetricMatrix(self.dictionary.metric(summary.W), cfg.kind),
                                              act.data, triplets)
                self.dictionary = refine_dictionary(
                    self.dictionary, list(self.tasks.values()), cfg.gamma, step=cfg.dict_step,
                    steps=1, symmetrized=cfg.symmetrized,
                )
        elif cfg.dict_steps > 0:
            self.dictionary = refine_dictionary(
                self.dictionary, list(self.tasks.values()), cfg.gamma, step=cfg.dict_step,
                steps=cfg.dict_steps, symmetrized=cfg.symmetrized,
            )
        return self

    def task_metric(self, task_id):
        """The task's metric ``L0^T W_t L0``."""
        summary = self.tasks[str(task_id)]
        return MetricMatrix(self.dictionary.metric(summary.W), MetricKind(summary.kind))

    # -- checkpoints -------------------------------------------------------

    def save(self, path):
        """Write a checkpoint: config, dictionary and per-task W / Delta.

        Raw samples and the active buffer are never written.
        """
        if self.dictionary is None:
            raise ConfigurationError("nothing to save: no batch observed yet")
        manifest = {
            "version": CHECKPOINT_VERSION,
            "d": self.dictionary.d,
            "d_hat": self.dictionary.d_hat,
            "tasks": [
                {"task_id": s.task_id, "kind": s.kind, "triplet_count": s.triplet_count}
                for s in self.tasks.values()
            ],
        }
        members = [
            ("manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n"),
            ("config.json", json.dumps(self.config.to_dict(), indent=1, sort_keys=True) + "\n"),
            ("dictionary.txt", format_matrix(self.dictionary.L0)),
        ]
        for idx, s in enumerate(self.tasks.values()):
            members.append((f"tasks/{idx:04d}/W.txt", format_matrix(s.W)))
            members.append((f"tasks/{idx:04d}/delta.txt", format_matrix(s.delta)))
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            for name, text in members:
                info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
                info.external_attr = 0o644 << 16
                zf.writestr(info, text.encode("ascii"))

    @classmethod
    def load(cls, path):
        with zipfile.ZipFile(path) as zf:
            def read(name):
                return zf.read(name).decode("ascii")

            manifest = json.loads(read("manifest.json"))
            if manifest.get("version") != CHECKPOINT_VERSION:
                raise DataError(f"{path}: unsupported checkpoint version {manifest.get('version')}")
            learner = cls(EngineConfig.from_dict(json.loads(read("config.json"))))
            learner.dictionary = LifelongDictionary(parse_matrix(read("dictionary.txt"),
                                                                 "dictionary.txt"))
            for idx, entry in enumerate(manifest["tasks"]):
                W = parse_matrix(read(f"tasks/{idx:04d}/W.txt"), f"task {idx} W")
                delta = parse_matrix(read(f"tasks/{idx:04d}/delta.txt"), f"task {idx} delta")
                learner.tasks[entry["task_id"]] = TaskSummary(
                    entry["task_id"], W, delta, entry["triplet_count"], entry["kind"]
                )
        return learner

    def state_bytes(self):
        """Serialized checkpoint as bytes (used to measure retained state)."""
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()
