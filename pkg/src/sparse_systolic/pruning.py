"""Structured l2-norm vector pruning and the iterative sparsity schedule.

Weight matrices are cut into tiles; every tile column (``orientation="column"``)
or tile row (``"row"``) is one vector. Pruning at sparsity ``s`` zeroes the
``floor(s * count)`` vectors with the smallest l2 norm across the whole
operator group, so each pruned vector becomes a zero column (or row) that the
sparse dataflows skip.

Retraining is out of scope: the schedule asks an *accuracy oracle* whether a
candidate weight set is still acceptable.
"""

from __future__ import annotations

import json
import re
import shlex
import subprocess
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .matrix import as_matrix, measure_sparsity, store_matrix

ORIENTATIONS = ("column", "row")
# guards floor(s * count) against 0.29 * 100 = 28.999...
_QUOTA_EPS = 1e-9


@dataclass(frozen=True)
class PruneConfig:
    vector_len: int
    orientation: str = "column"
    initial_sparsity: float = 0.7
    delta: float = 0.01
    target_accuracy: float = 1.0
    epsilon: float | None = None  # None means 2 % of target_accuracy
    max_attempts: int = 1

    def __post_init__(self):
        if self.vector_len < 1:
            raise ValueError("vector_len must be >= 1")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}")
        if not 0.0 <= self.initial_sparsity <= 1.0:
            raise ValueError("initial_sparsity must lie in [0, 1]")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if not 0.0 <= self.target_accuracy <= 1.0:
            raise ValueError("target_accuracy must lie in [0, 1]")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 0.02 * self.target_accuracy)
        if not 0.0 <= self.epsilon <= self.target_accuracy:
            raise ValueError("epsilon must lie in [0, target_accuracy]")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @property
    def accept_threshold(self) -> float:
        return self.target_accuracy - self.epsilon

    def sparsity_at(self, step: int) -> float:
        # rounding keeps 0.7 + 13 * 0.01 equal to 0.83 rather than 0.8300000000000001
        return min(1.0, round(self.initial_sparsity + step * self.delta, 12))

    @classmethod
    def from_dict(cls, d: dict) -> "PruneConfig":
        extra = set(d) - {f.name for f in fields(cls)}
        if extra:
            raise ValueError(f"unknown prune config fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PruneConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OperatorGroup:
    """Weight matrices of one operator kind that share a sparsity target."""

    group_id: int
    matrices: list
    kind: str = ""
    sparsity: float = 0.0

    def __post_init__(self):
        self.matrices = [as_matrix(m, copy=True) for m in self.matrices]


# ---------------------------------------------------------------------------


def _vector_table(matrices, tile_rows: int, tile_cols: int, orientation: str):
    """Norms and tie-break keys of every vector, in (matrix, tile, vector) order."""
    norms, keys = [], []
    for mi, m in enumerate(matrices):
        rows, cols = m.shape
        gr, gc = -(-rows // tile_rows), -(-cols // tile_cols)
        m64 = m.astype(np.float64)
        if orientation == "column":
            padded = np.zeros((gr * tile_rows, cols))
            padded[:rows] = m64
            nrm = np.sqrt((padded.reshape(gr, tile_rows, cols) ** 2).sum(axis=1))  # gr x cols
            ti, k = np.meshgrid(np.arange(gr), np.arange(cols), indexing="ij")
            tile = ti * gc + k // tile_cols
            vec = k % tile_cols
        else:
            padded = np.zeros((rows, gc * tile_cols))
            padded[:, :cols] = m64
            nrm = np.sqrt((padded.reshape(rows, gc, tile_cols) ** 2).sum(axis=2))  # rows x gc
            r, tj = np.meshgrid(np.arange(rows), np.arange(gc), indexing="ij")
            tile = (r // tile_rows) * gc + tj
            vec = r % tile_rows
        norms.append(nrm.ravel())
        keys.append(np.stack([np.full(nrm.size, mi), tile.ravel(), vec.ravel()], axis=1))
    return np.concatenate(norms), np.concatenate(keys)


def vector_count(matrices, tile_rows: int, tile_cols: int, orientation: str) -> int:
    total = 0
    for m in matrices:
        rows, cols = as_matrix(m).shape
        if orientation == "column":
            total += -(-rows // tile_rows) * cols
        else:
            total += rows * -(-cols // tile_cols)
    return total


def prune_vectors(group, tile_rows: int, tile_cols: int, cfg: PruneConfig,
                  sparsity: float | None = None) -> list[np.ndarray]:
    """Zero the ``floor(s * count)`` lowest-norm vectors of the group.

    ``sparsity`` defaults to ``cfg.initial_sparsity``. Ties in norm go to the
    lower ``(matrix, tile, vector)`` index; vectors that are already zero
    count toward the quota. Returns new matrices; the group is not modified.
    """
    matrices = group.matrices if isinstance(group, OperatorGroup) else [as_matrix(m) for m in group]
    s = cfg.initial_sparsity if sparsity is None else sparsity
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"sparsity must lie in [0, 1], got {s}")
    need = tile_rows if cfg.orientation == "column" else tile_cols
    if cfg.vector_len != need:
        raise ValueError(
            f"vector_len {cfg.vector_len} does not match the tile "
            f"{'height' if cfg.orientation == 'column' else 'width'} {need}"
        )
    out = [m.copy() for m in matrices]
    if not out:
        return out
    norms, keys = _vector_table(out, tile_rows, tile_cols, cfg.orientation)
    quota = int(np.floor(s * norms.size + _QUOTA_EPS))
    if quota == 0:
        return out
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0], norms))[:quota]
    for mi, tile, vec in keys[order]:
        m = out[mi]
        gc = -(-m.shape[1] // tile_cols)
        ti, tj = divmod(int(tile), gc)
        if cfg.orientation == "column":
            m[ti * tile_rows:(ti + 1) * tile_rows, tj * tile_cols + vec] = 0
        else:
            m[ti * tile_rows + vec, tj * tile_cols:(tj + 1) * tile_cols] = 0
    return out


# ---------------------------------------------------------------------------
# oracles: callables mapping a list of weight-matrix lists (one per group) to
# an accuracy in [0, 1]


class OracleError(RuntimeError):
    pass


@dataclass
class SparsityThresholdOracle:
    """1.0 while the measured zero fraction stays at or below ``threshold``, else 0.0."""

    threshold: float

    def __call__(self, weights) -> float:
        mats = [m for g in weights for m in g]
        zeros = sum(int(np.count_nonzero(m == 0)) for m in mats)
        total = sum(m.size for m in mats)
        return 1.0 if zeros / total <= self.threshold + 1e-12 else 0.0


@dataclass
class EnergyOracle:
    """Fraction of the reference weights' squared l2 norm that survives pruning."""

    reference: list = field(repr=False)

    def __post_init__(self):
        self._total = sum(float((np.asarray(m, dtype=np.float64) ** 2).sum()) for g in self.reference for m in g)

    def __call__(self, weights) -> float:
        kept = sum(float((np.asarray(m, dtype=np.float64) ** 2).sum()) for g in weights for m in g)
        return 1.0 if self._total == 0 else kept / self._total


_FLOAT = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")


@dataclass
class CommandOracle:
    """Runs an external evaluator on a directory of candidate weights.

    The directory holds ``group{j}_{i}.fsmx`` per matrix; its path is appended
    to ``command``. The last number printed on stdout is the accuracy.
    """

    command: str
    timeout: float | None = None

    def __call__(self, weights) -> float:
        with tempfile.TemporaryDirectory(prefix="prune-cand-") as tmp:
            for j, group in enumerate(weights):
                for i, m in enumerate(group):
                    store_matrix(m, Path(tmp) / f"group{j}_{i}.fsmx")
            argv = shlex.split(self.command) + [tmp]
            try:
                proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise OracleError(f"oracle command failed: {exc}") from exc
        if proc.returncode != 0:
            raise OracleError(f"oracle exited with {proc.returncode}: {proc.stderr.strip()}")
        found = _FLOAT.findall(proc.stdout)
        if not found:
            raise OracleError("oracle printed no accuracy value")
        return float(found[-1])


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleStep:
    step: int
    sparsities: tuple
    accuracy: float
    accepted: bool


@dataclass
class ScheduleResult:
    weights: list  # one list of matrices per group, the last accepted set
    sparsities: tuple  # per-group sparsity of that set (0 for the unpruned input)
    history: list

    @property
    def accepted_steps(self) -> int:
        return sum(1 for h in self.history if h.accepted)


def prune_schedule(groups: Sequence[OperatorGroup], cfgs, oracle: Callable,
                   tiles) -> ScheduleResult:
    """Raise every group's sparsity by its delta until the oracle rejects.

    ``cfgs`` and ``tiles`` (``(tile_rows, tile_cols)``) are given per group
    or once for all groups. Each step prunes the last *accepted* weights, so
    vectors pruned earlier stay zero. A rejected step is re-evaluated up to
    ``max_attempts`` times before the schedule stops; it also stops once every
    group has been accepted at sparsity 1.
    """
    groups = list(groups)
    n = len(groups)
    cfgs = list(cfgs) if isinstance(cfgs, (list, tuple)) else [cfgs] * n
    tiles = list(tiles) if tiles and isinstance(tiles[0], (list, tuple)) else [tuple(tiles)] * n
    if len(cfgs) != n or len(tiles) != n:
        raise ValueError("need one config and one tile shape per group")
    base = cfgs[0]
    if any((c.target_accuracy, c.epsilon, c.max_attempts) != (base.target_accuracy, base.epsilon, base.max_attempts)
           for c in cfgs):
        raise ValueError("all groups must share target_accuracy, epsilon and max_attempts")
    threshold = base.accept_threshold

    accepted = [list(g.matrices) for g in groups]
    accepted_s = tuple(0.0 for _ in groups)
    history: list[ScheduleStep] = []
    step = 0
    while True:
        s = tuple(c.sparsity_at(step) for c in cfgs)
        cand = [prune_vectors(accepted[j], *tiles[j], cfgs[j], s[j]) for j in range(n)]
        ok = False
        for _ in range(base.max_attempts):
            acc = float(oracle(cand))
            ok = acc >= threshold
            history.append(ScheduleStep(len(history), s, acc, ok))
            if ok:
                break
        if not ok:
            break
        accepted, accepted_s = cand, s
        if all(v >= 1.0 for v in s):
            break
        step += 1
    for g, sj in zip(groups, accepted_s):
        g.sparsity = sj
    return ScheduleResult(accepted, accepted_s, history)


def group_by_kind(named_matrices) -> list[OperatorGroup]:
    """Group ``(kind, matrix)`` pairs by operator kind, in first-seen order."""
    kinds: dict[str, list] = {}
    for kind, m in named_matrices:
        kinds.setdefault(kind.upper(), []).append(m)
    return [OperatorGroup(j, mats, kind) for j, (kind, mats) in enumerate(kinds.items())]


def pruned_sparsity(matrices) -> float:
    """Zero fraction over a list of matrices taken together."""
    zeros = sum(measure_sparsity(m) * as_matrix(m).size for m in matrices)
    return zeros / sum(as_matrix(m).size for m in matrices)
