"""Trainable per-feature diagnosers and their persistence.

Each diagnoser holds a normal-profile model and an intrusive-profile model
over one feature, plus a precision weight measured on held-out training
data.  Diagnosing a feature value turns the two proximity scores into a
mass triple: precision goes to the closer hypotheses proportionally, the
rest stays on "don't know".

Two model families cover the feature types: a sparse centroid model for
count distributions and a one-dimensional Gaussian for the error ratio.
Both support capped-count online absorption so that a long stream keeps a
bounded per-sample learning rate instead of freezing.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .evidence import Diagnosis, INTRUSIVE, NORMAL, TIE_EPS
from .features import (
    FEATURE_KINDS,
    REQUEST_TOKEN,
    SESSION_ERROR_RATIO,
)

SNAPSHOT_VERSION = 1
# Learning-rate floor: past this many samples the mean update weight
# stops shrinking, which is what keeps late adaptation effective.
DEFAULT_ADAPT_CAP = 1000
DEFAULT_SIGMA_MIN = 0.01
_PDF_FLOOR = 1e-12
_PRECISION_FLOOR = 1e-6
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class UntrainedModel(RuntimeError):
    """Proximity was requested from a model with no absorbed samples."""


class EmptyTrainingSet(ValueError):
    """Training requires at least one sample per hypothesis."""


class AdaptationDisabled(RuntimeError):
    """Adapt was called on an agent running in frozen mode."""


class SnapshotError(ValueError):
    """A snapshot payload that cannot be loaded."""


class DistModel:
    """Sparse centroid over count distributions, scored by euclidean distance.

    The mean vector lives in a dict keyed by feature index (byte value or
    token).  ``norm2`` caches the squared L2 norm of the mean so a proximity
    query costs O(|x|) rather than O(|mean|):

        d2(x, m) = norm2 + sum_k[(x_k - m_k)^2 - m_k^2]  over k in x only.
    """

    __slots__ = ("mean", "n", "norm2")

    kind = "dist"

    def __init__(self, mean: Optional[dict] = None, n: int = 0):
        self.mean: dict = dict(mean) if mean else {}
        self.n = n
        self.norm2 = sum(v * v for v in self.mean.values())

    def absorb(self, x: Mapping, cap: Optional[int] = None) -> None:
        """Fold one count distribution into the running mean.

        With ``cap`` set, the effective count saturates so the new sample
        always carries weight at least 1/(cap+1).
        """
        n_eff = self.n if cap is None else min(self.n, cap)
        w = 1.0 / (n_eff + 1)
        keep = n_eff * w
        mean = {k: v * keep for k, v in self.mean.items()}
        for k, v in x.items():
            mean[k] = mean.get(k, 0.0) + v * w
        self.mean = mean
        self.n += 1
        self.norm2 = sum(v * v for v in mean.values())

    def distance(self, x: Mapping) -> float:
        if self.n == 0:
            raise UntrainedModel("no samples absorbed")
        d2 = self.norm2
        mean = self.mean
        for k, v in x.items():
            m = mean.get(k, 0.0)
            d2 += (v - m) * (v - m) - m * m
        # Cached-norm arithmetic can go slightly negative at exact matches.
        return math.sqrt(d2 if d2 > 0.0 else 0.0)

    def proximity(self, x: Mapping) -> float:
        return 1.0 / (1.0 + self.distance(x))

    def state(self) -> dict:
        return {
            "kind": self.kind,
            "mean": {str(k): v for k, v in self.mean.items()},
            "n": self.n,
        }


class GaussianModel:
    """One-dimensional Gaussian over a scalar feature, fit online.

    Welford accumulation with the same capped-count trick as DistModel.
    The deviation is floored so a constant training column still yields a
    usable density, and the density itself is floored so far-out queries
    never reach exact zero mass.
    """

    __slots__ = ("mu", "m2", "n", "sigma_min")

    kind = "gaussian"

    def __init__(self, mu: float = 0.0, m2: float = 0.0, n: int = 0,
                 sigma_min: float = DEFAULT_SIGMA_MIN):
        self.mu = mu
        self.m2 = m2
        self.n = n
        self.sigma_min = sigma_min

    @property
    def sigma(self) -> float:
        if self.n < 2:
            return self.sigma_min
        return max(math.sqrt(self.m2 / self.n), self.sigma_min)

    def absorb(self, x: float, cap: Optional[int] = None) -> None:
        n_eff = self.n if cap is None else min(self.n, cap)
        delta = x - self.mu
        self.mu += delta / (n_eff + 1)
        self.m2 += delta * (x - self.mu)
        if self.m2 < 0.0:
            self.m2 = 0.0
        self.n += 1

    def proximity(self, x: float) -> float:
        if self.n == 0:
            raise UntrainedModel("no samples absorbed")
        sigma = self.sigma
        z = (x - self.mu) / sigma
        pdf = _INV_SQRT_2PI / sigma * math.exp(-0.5 * z * z)
        return max(pdf, _PDF_FLOOR)

    def state(self) -> dict:
        return {
            "kind": self.kind,
            "mu": self.mu,
            "m2": self.m2,
            "n": self.n,
            "sigma_min": self.sigma_min,
        }


ProfileModel = Union[DistModel, GaussianModel]


def _model_from_state(payload: Mapping, key_type=int) -> ProfileModel:
    kind = payload.get("kind")
    if kind == DistModel.kind:
        try:
            mean = {key_type(k): float(v) for k, v in payload["mean"].items()}
            return DistModel(mean=mean, n=int(payload["n"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SnapshotError(f"bad dist model payload: {exc}") from None
    if kind == GaussianModel.kind:
        try:
            return GaussianModel(
                mu=float(payload["mu"]),
                m2=float(payload["m2"]),
                n=int(payload["n"]),
                sigma_min=float(payload.get("sigma_min", DEFAULT_SIGMA_MIN)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SnapshotError(f"bad gaussian model payload: {exc}") from None
    raise SnapshotError(f"unknown model kind: {kind!r}")


@dataclass
class Model:
    """A normal/intrusive profile pair with a precision weight."""

    m_normal: ProfileModel
    m_intrusive: ProfileModel
    precision: float
    feature_kind: str

    def diagnose(self, x) -> Diagnosis:
        s_n = self.m_normal.proximity(x)
        s_i = self.m_intrusive.proximity(x)
        total = s_n + s_i
        if total <= 0.0:
            return Diagnosis(0.0, 0.0, 1.0)
        p = self.precision
        return Diagnosis(p * s_n / total, p * s_i / total, 1.0 - p)

    def raw_decision(self, x) -> str:
        """Which profile is closer, before any fusion. Ties go intrusive."""
        s_n = self.m_normal.proximity(x)
        s_i = self.m_intrusive.proximity(x)
        return NORMAL if s_n - s_i > TIE_EPS else INTRUSIVE


def train(normals, intrusives, feature_kind: str,
          sigma_min: float = DEFAULT_SIGMA_MIN) -> Model:
    """Fit a profile pair from labeled feature values and measure precision.

    Precision is leave-nothing-out resubstitution accuracy: the fraction of
    training values whose closer profile matches their label, floored so a
    fully confused pair still produces a valid (near-vacuous) diagnoser.
    """
    if not normals or not intrusives:
        raise EmptyTrainingSet(f"{feature_kind}: both hypotheses need samples")
    if feature_kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind: {feature_kind!r}")
    if feature_kind == SESSION_ERROR_RATIO:
        m_n: ProfileModel = GaussianModel(sigma_min=sigma_min)
        m_i: ProfileModel = GaussianModel(sigma_min=sigma_min)
    else:
        m_n = DistModel()
        m_i = DistModel()
    for x in normals:
        m_n.absorb(x)
    for x in intrusives:
        m_i.absorb(x)
    model = Model(m_n, m_i, precision=1.0, feature_kind=feature_kind)
    correct = sum(1 for x in normals if model.raw_decision(x) == NORMAL)
    correct += sum(1 for x in intrusives if model.raw_decision(x) == INTRUSIVE)
    total = len(normals) + len(intrusives)
    model.precision = max(correct / total, _PRECISION_FLOOR)
    return model


@dataclass
class Acda:
    """An adaptive diagnoser agent: a model plus its adaptation switch.

    ``adapt`` folds the current feature value into the profile selected by
    the reference decision, using the capped learning rate.  In frozen mode
    the graph still diagnoses but adaptation raises.
    """

    agent_id: str
    model: Model
    adapt_enabled: bool = True
    adapt_cap: int = DEFAULT_ADAPT_CAP
    adapt_count: int = 0

    def diagnose(self, x) -> Diagnosis:
        return self.model.diagnose(x)

    def adapt(self, x, reference: str) -> None:
        if not self.adapt_enabled:
            raise AdaptationDisabled(self.agent_id)
        target = self.model.m_normal if reference == NORMAL else self.model.m_intrusive
        target.absorb(x, cap=self.adapt_cap)
        self.adapt_count += 1


def snapshot(agent: Acda) -> dict:
    """Serializable state of one agent's model pair."""
    return {
        "version": SNAPSHOT_VERSION,
        "feature_kind": agent.model.feature_kind,
        "precision": agent.model.precision,
        "m_normal": agent.model.m_normal.state(),
        "m_intrusive": agent.model.m_intrusive.state(),
    }


def snapshot_digest(payload: Mapping) -> str:
    """Canonical sha256 of a snapshot payload, for change detection."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def load_snapshot(payload: Mapping, agent_id: str,
                  adapt_enabled: bool = True,
                  adapt_cap: int = DEFAULT_ADAPT_CAP) -> Acda:
    """Rebuild an agent from :func:`snapshot` output.

    Raises SnapshotError on version or payload mismatches.  Derived fields
    (the cached mean norm) are recomputed, never trusted from the payload.
    """
    version = payload.get("version")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version: {version!r}")
    kind = payload.get("feature_kind")
    if kind not in FEATURE_KINDS:
        raise SnapshotError(f"unknown feature kind: {kind!r}")
    try:
        precision = float(payload["precision"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"bad precision: {exc}") from None
    if not 0.0 <= precision <= 1.0:
        raise SnapshotError(f"precision out of range: {precision}")
    # Count-distribution keys serialize as JSON strings; byte-keyed kinds
    # restore to ints, the token kind keeps its string keys.
    key_type = str if kind == REQUEST_TOKEN else int
    m_n = _model_from_state(payload["m_normal"], key_type)
    m_i = _model_from_state(payload["m_intrusive"], key_type)
    if type(m_n) is not type(m_i):
        raise SnapshotError("profile pair mixes model kinds")
    expected = GaussianModel if kind == SESSION_ERROR_RATIO else DistModel
    if not isinstance(m_n, expected):
        raise SnapshotError(f"{kind} snapshot holds a {m_n.kind} model")
    model = Model(m_n, m_i, precision=precision, feature_kind=kind)
    return Acda(agent_id=agent_id, model=model,
                adapt_enabled=adapt_enabled, adapt_cap=adapt_cap)
