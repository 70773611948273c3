"""Shared domain types: datasets, group rates, debiasing parameters, targets."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateLabels,
    DimMismatch,
    EmptyGroup,
    TargetOutOfRange,
)


class SensitiveGroup(enum.IntEnum):
    S0 = 0
    S1 = 1


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledExample:
    features: np.ndarray
    y: int
    s: SensitiveGroup


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded feature matrix with binary labels ``y`` and binary groups ``s``.

    Construction only checks shapes and value domains. Group coverage is
    checked by :func:`validate_dataset`, which every public factory calls.

    ``encoding_meta`` describes how source columns map onto feature columns,
    one mapping per source column with keys ``name``, ``kind``
    (``continuous`` or ``categorical``), ``columns`` (feature indices) and,
    for categoricals, ``categories``. When empty, every feature is treated
    as continuous.
    """

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    feature_names: tuple[str, ...] = ()
    encoding_meta: tuple[Mapping, ...] = ()
    source: Mapping = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if len(x) else x.reshape(0, 0)
        if x.ndim != 2:
            raise DimMismatch(f"feature matrix must be 2-D, got shape {x.shape}")
        y = np.asarray(self.y).astype(np.int8).reshape(-1)
        s = np.asarray(self.s).astype(np.int8).reshape(-1)
        if not (len(x) == len(y) == len(s)):
            raise DimMismatch(
                f"row counts differ: x={len(x)}, y={len(y)}, s={len(s)}"
            )
        if not np.isin(y, (0, 1)).all() or not np.array_equal(y, np.asarray(self.y).reshape(-1)):
            raise DegenerateLabels("labels must be binary (0/1)")
        if not np.isin(s, (0, 1)).all() or not np.array_equal(s, np.asarray(self.s).reshape(-1)):
            raise EmptyGroup("sensitive attribute must be binary (0/1)")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DimMismatch(
                f"{len(names)} feature names for {x.shape[1]} feature columns"
            )
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "s", _freeze(s))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "encoding_meta", tuple(self.encoding_meta))

    @classmethod
    def from_examples(
        cls,
        examples: Sequence[LabeledExample],
        feature_names: Sequence[str] = (),
        dim: int | None = None,
    ) -> "Dataset":
        if dim is None:
            dim = len(examples[0].features) if examples else len(feature_names)
        for i, ex in enumerate(examples):
            if len(ex.features) != dim:
                raise DimMismatch(
                    f"example {i} has {len(ex.features)} features, expected {dim}"
                )
        x = np.array([ex.features for ex in examples], dtype=np.float64).reshape(-1, dim)
        return cls(
            x=x,
            y=np.array([ex.y for ex in examples], dtype=np.int8),
            s=np.array([int(ex.s) for ex in examples], dtype=np.int8),
            feature_names=tuple(feature_names),
        )

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return len(self.y)

    def __iter__(self) -> Iterator[LabeledExample]:
        for xi, yi, si in zip(self.x, self.y, self.s):
            yield LabeledExample(xi, int(yi), SensitiveGroup(int(si)))

    @property
    def examples(self) -> list[LabeledExample]:
        return list(self)

    @property
    def continuous_mask(self) -> np.ndarray:
        if not self.encoding_meta:
            return np.ones(self.dim, dtype=bool)
        mask = np.zeros(self.dim, dtype=bool)
        for col in self.encoding_meta:
            if col["kind"] == "continuous":
                mask[list(col["columns"])] = True
        return mask

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(
            x=self.x[idx],
            y=self.y[idx],
            s=self.s[idx],
            feature_names=self.feature_names,
            encoding_meta=self.encoding_meta,
            source=self.source,
        )

    def with_features(self, x: np.ndarray) -> "Dataset":
        return Dataset(
            x=x,
            y=self.y,
            s=self.s,
            feature_names=self.feature_names,
            encoding_meta=self.encoding_meta,
            source=self.source,
        )


def validate_dataset(dataset: Dataset) -> Dataset:
    """Return ``dataset`` unchanged if both groups hold both label values."""
    for g in (0, 1):
        in_group = dataset.s == g
        if not in_group.any():
            raise EmptyGroup(f"group s={g} has no examples")
        labels = np.unique(dataset.y[in_group])
        if len(labels) < 2:
            raise DegenerateLabels(
                f"group s={g} contains only y={int(labels[0])}"
            )
    return dataset


def partition_by_group(
    examples: Iterable[LabeledExample],
) -> tuple[list[LabeledExample], list[LabeledExample]]:
    g0, g1 = [], []
    for ex in examples:
        (g1 if int(ex.s) == 1 else g0).append(ex)
    return g0, g1


@dataclass(frozen=True)
class GroupRates:
    """Biased acceptance rates ``P(y=1 | s=i)`` and group sizes."""

    p0: float
    p1: float
    n0: int
    n1: int

    def __post_init__(self):
        for name in ("p0", "p1"):
            p = getattr(self, name)
            if not 0.0 < p < 1.0:
                raise DegenerateLabels(f"{name}={p} must lie strictly in (0, 1)")
        if self.n0 < 1 or self.n1 < 1:
            raise EmptyGroup("group counts must be positive")

    def rate(self, s: int) -> float:
        return self.p1 if int(s) == 1 else self.p0

    def to_dict(self) -> dict:
        return {"p0": self.p0, "p1": self.p1, "n0": self.n0, "n1": self.n1}


@dataclass(frozen=True)
class DebiasingParams:
    """The four conditionals ``P(y=1 | ybar=j, s=i)``.

    The field ``d_y{j}_s{i}`` holds ``P(y=1 | ybar=j, s=i)``. The mapping from
    a fair score ``cbar`` to the observed-label probability for group ``s`` is
    the affine function ``slope(s) * cbar + intercept(s)``.
    """

    d_y0_s0: float
    d_y1_s0: float
    d_y0_s1: float
    d_y1_s1: float

    _TOL = 1e-12

    def __post_init__(self):
        for name in ("d_y0_s0", "d_y1_s0", "d_y0_s1", "d_y1_s1"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise TargetOutOfRange(f"{name}={v} is not a probability")
            object.__setattr__(self, name, v)
        for s in (0, 1):
            d0, d1 = self.for_group(s)
            if d1 < d0 - self._TOL:
                raise TargetOutOfRange(
                    f"group s={s}: P(y=1|ybar=1)={d1} < P(y=1|ybar=0)={d0}"
                )

    @classmethod
    def identity(cls) -> "DebiasingParams":
        return cls(0.0, 1.0, 0.0, 1.0)

    def for_group(self, s: int) -> tuple[float, float]:
        """``(d_ybar0, d_ybar1)`` for group ``s``."""
        if int(s) == 1:
            return self.d_y0_s1, self.d_y1_s1
        return self.d_y0_s0, self.d_y1_s0

    def slope(self, s: int) -> float:
        d0, d1 = self.for_group(s)
        return d1 - d0

    def intercept(self, s: int) -> float:
        return self.for_group(s)[0]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-group ``(d_ybar0, d_ybar1)`` as length-2 arrays indexed by ``s``."""
        return (
            np.array([self.d_y0_s0, self.d_y0_s1]),
            np.array([self.d_y1_s0, self.d_y1_s1]),
        )

    def is_identity(self) -> bool:
        return self == DebiasingParams.identity()

    def to_dict(self) -> dict:
        return {
            "d_y0_s0": self.d_y0_s0,
            "d_y1_s0": self.d_y1_s0,
            "d_y0_s1": self.d_y0_s1,
            "d_y1_s1": self.d_y1_s1,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DebiasingParams":
        return cls(d["d_y0_s0"], d["d_y1_s0"], d["d_y0_s1"], d["d_y1_s1"])


class TargetKind(str, enum.Enum):
    NONE = "none"
    POSITIVE_RATE = "positive_rate"
    TPR_TNR = "tpr_tnr"


PR_STRATEGIES = ("avg", "min", "max")


def _check_open_unit(name: str, v: float) -> float:
    v = float(v)
    if not (math.isfinite(v) and 0.0 < v < 1.0):
        raise TargetOutOfRange(f"{name}={v} must lie strictly in (0, 1)")
    return v


def _check_half_open_unit(name: str, v: float) -> float:
    v = float(v)
    if not (math.isfinite(v) and 0.0 < v <= 1.0):
        raise TargetOutOfRange(f"{name}={v} must lie in (0, 1]")
    return v


@dataclass(frozen=True)
class TargetSpec:
    """What the user asks for.

    ``pr_target`` is a probability or one of ``avg``/``min``/``max``;
    ``tnr_target`` is a probability or ``auto``. Unresolved tags are replaced
    by numbers before debiasing parameters can be built.
    """

    kind: TargetKind = TargetKind.NONE
    pr_target: float | str | None = None
    tpr_target: float | None = None
    tnr_target: float | str | None = None

    def __post_init__(self):
        kind = TargetKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is TargetKind.NONE:
            if any(v is not None for v in (self.pr_target, self.tpr_target, self.tnr_target)):
                raise TargetOutOfRange("target kind 'none' takes no target values")
        elif kind is TargetKind.POSITIVE_RATE:
            if self.tpr_target is not None or self.tnr_target is not None:
                raise TargetOutOfRange("positive-rate targets take no TPR/TNR values")
            if isinstance(self.pr_target, str):
                if self.pr_target not in PR_STRATEGIES:
                    raise TargetOutOfRange(f"unknown PR strategy {self.pr_target!r}")
            elif self.pr_target is None:
                raise TargetOutOfRange("positive-rate target needs a value or strategy")
            else:
                object.__setattr__(self, "pr_target", _check_open_unit("pr_target", self.pr_target))
        else:
            if self.pr_target is not None:
                raise TargetOutOfRange("TPR/TNR targets take no PR value")
            if self.tpr_target is None or self.tnr_target is None:
                raise TargetOutOfRange("TPR/TNR target needs both rates")
            object.__setattr__(self, "tpr_target", _check_half_open_unit("tpr_target", self.tpr_target))
            if isinstance(self.tnr_target, str):
                if self.tnr_target != "auto":
                    raise TargetOutOfRange(f"unknown TNR setting {self.tnr_target!r}")
            else:
                object.__setattr__(self, "tnr_target", _check_half_open_unit("tnr_target", self.tnr_target))

    @classmethod
    def none(cls) -> "TargetSpec":
        return cls()

    @classmethod
    def positive_rate(cls, value: float | str) -> "TargetSpec":
        return cls(TargetKind.POSITIVE_RATE, pr_target=value)

    @classmethod
    def tpr_tnr(cls, tpr: float, tnr: float | str) -> "TargetSpec":
        return cls(TargetKind.TPR_TNR, tpr_target=tpr, tnr_target=tnr)

    @property
    def is_resolved(self) -> bool:
        return not isinstance(self.pr_target, str) and not isinstance(self.tnr_target, str)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "pr_target": self.pr_target,
            "tpr_target": self.tpr_target,
            "tnr_target": self.tnr_target,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TargetSpec":
        return cls(
            TargetKind(d["kind"]),
            pr_target=d.get("pr_target"),
            tpr_target=d.get("tpr_target"),
            tnr_target=d.get("tnr_target"),
        )
