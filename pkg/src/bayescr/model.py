"""Model description: baseline family, knots and covariate subset per cause."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hazard import (
    CauseModel,
    HazardError,
    ParameterVector,
    PiecewiseConstantBaseline,
    WeibullBaseline,
)

# 0, 3, 6, 12, 24, 36, 48, 60 months and 0, 24, 48 months, in years
DEFAULT_KNOTS_FINE = (0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0)
DEFAULT_KNOTS_COARSE = (0.0, 2.0, 4.0)


class ModelSpecError(ValueError):
    pass


@dataclass(frozen=True)
class CauseSpec:
    label: str
    baseline: str = "weibull"
    covariates: tuple[str, ...] = ()
    knots: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.baseline not in ("weibull", "piecewise"):
            raise ModelSpecError(f"cause {self.label!r}: unknown baseline {self.baseline!r}")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if len(set(self.covariates)) != len(self.covariates):
            raise ModelSpecError(f"cause {self.label!r}: duplicate covariates")
        if self.baseline == "piecewise":
            knots = DEFAULT_KNOTS_FINE if self.knots is None else tuple(float(a) for a in self.knots)
            if not knots or knots[0] != 0 or any(b <= a for a, b in zip(knots, knots[1:])):
                raise ModelSpecError(f"cause {self.label!r}: knots must start at 0 and increase")
            object.__setattr__(self, "knots", knots)
        else:
            object.__setattr__(self, "knots", None)

    @property
    def baseline_names(self) -> list[str]:
        if self.baseline == "weibull":
            return ["alpha", "lambda"]
        return [f"gamma{r}" for r in range(1, len(self.knots) + 1)]

    @property
    def n_baseline(self) -> int:
        return len(self.baseline_names)

    @property
    def n_params(self) -> int:
        return self.n_baseline + len(self.covariates)

    def param_names(self) -> list[str]:
        return [f"{self.label}.{b}" for b in self.baseline_names] + [
            f"{self.label}.beta.{c}" for c in self.covariates
        ]

    def make_baseline(self, values: Sequence[float]):
        if self.baseline == "weibull":
            return WeibullBaseline(shape=float(values[0]), scale=float(values[1]))
        return PiecewiseConstantBaseline(knots=self.knots, levels=tuple(values))

    def to_dict(self) -> dict:
        d = {"label": self.label, "baseline": self.baseline, "covariates": list(self.covariates)}
        if self.knots is not None:
            d["knots"] = list(self.knots)
        return d


@dataclass(frozen=True)
class ModelSpec:
    """K cause-specific proportional-hazards models."""

    causes: tuple[CauseSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "causes", tuple(self.causes))
        if not self.causes:
            raise ModelSpecError("need at least one cause")
        labels = [c.label for c in self.causes]
        if len(set(labels)) != len(labels):
            raise ModelSpecError(f"duplicate cause labels {labels}")

    @property
    def K(self) -> int:
        return len(self.causes)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.causes]

    def param_names(self) -> list[str]:
        return [n for c in self.causes for n in c.param_names()]

    @property
    def n_params(self) -> int:
        return sum(c.n_params for c in self.causes)

    def offsets(self) -> list[int]:
        return list(np.cumsum([0] + [c.n_params for c in self.causes]))

    def column_indices(self, columns: Sequence[str]) -> list[list[int]]:
        columns = list(columns)
        out = []
        for c in self.causes:
            missing = [v for v in c.covariates if v not in columns]
            if missing:
                raise ModelSpecError(f"cause {c.label!r}: covariates {missing} not in data")
            out.append([columns.index(v) for v in c.covariates])
        return out

    def designs(self, data) -> list[np.ndarray]:
        """Per-cause design matrices for a dataset."""
        if data.K != self.K:
            raise ModelSpecError(f"data has {data.K} causes, model has {self.K}")
        return [data.X[:, idx] for idx in self.column_indices(data.columns)]

    def flatten(self, theta: ParameterVector) -> np.ndarray:
        if theta.K != self.K:
            raise ModelSpecError(f"parameter vector has {theta.K} causes, model has {self.K}")
        out = []
        for c, cm in zip(self.causes, theta.causes):
            base = cm.baseline.params
            if len(base) != c.n_baseline or len(cm.beta) != len(c.covariates):
                raise ModelSpecError(f"cause {c.label!r}: parameter dimensions do not match")
            out.extend(base)
            out.extend(cm.beta)
        return np.array(out, dtype=float)

    def unflatten(self, vec: Sequence[float]) -> ParameterVector:
        vec = np.asarray(vec, dtype=float)
        if len(vec) != self.n_params:
            raise ModelSpecError(f"expected {self.n_params} values, got {len(vec)}")
        causes, pos = [], 0
        for c in self.causes:
            base = vec[pos:pos + c.n_baseline]
            pos += c.n_baseline
            beta = vec[pos:pos + len(c.covariates)]
            pos += len(c.covariates)
            causes.append(CauseModel(c.make_baseline(base), beta.copy()))
        return ParameterVector(tuple(causes))

    def positive_mask(self) -> np.ndarray:
        """True for parameters constrained to be positive (baseline parameters)."""
        return np.array([
            flag for c in self.causes
            for flag in [True] * c.n_baseline + [False] * len(c.covariates)
        ])

    def to_dict(self) -> dict:
        return {"causes": [c.to_dict() for c in self.causes]}

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        causes = []
        for c in d["causes"]:
            causes.append(CauseSpec(
                label=str(c["label"]),
                baseline=c.get("baseline", "weibull"),
                covariates=tuple(c.get("covariates", ())),
                knots=tuple(c["knots"]) if c.get("knots") is not None else None,
            ))
        return cls(tuple(causes))


def covariate_vectors(spec: ModelSpec, row: np.ndarray, columns: Sequence[str]) -> list[np.ndarray]:
    """Split one full design row into per-cause covariate vectors."""
    row = np.asarray(row, dtype=float)
    return [row[idx] for idx in spec.column_indices(columns)]


__all__ = [
    "CauseSpec",
    "DEFAULT_KNOTS_COARSE",
    "DEFAULT_KNOTS_FINE",
    "HazardError",
    "ModelSpec",
    "ModelSpecError",
    "covariate_vectors",
]
