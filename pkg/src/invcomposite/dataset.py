"""Study data container, CSV ingestion and design configuration."""

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstantOutcome,
    DegenerateStratum,
    DesignMismatch,
    InvalidSpec,
    MissingColumn,
    NonBinaryTreatment,
    NonFiniteValue,
    NonPositiveWeight,
    TooFewRows,
)


class Design(str, enum.Enum):
    CRE = "cre"
    SRE_REGRESSION = "sre-reg"
    SRE_STRATIFICATION = "sre-strat"
    OBS = "obs"


class CIMethod(str, enum.Enum):
    AUTO_TWO_STEP = "auto"
    TWO_STEP = "two-step"
    NORMAL = "normal"
    CHI2 = "chi2"
    UNION = "union"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StudyData:
    """Validated columns of one study.

    ``stratum`` holds contiguous codes 0..S-1 in first-appearance order and
    ``stratum_labels[k]`` is the original label of code k.
    """

    z: np.ndarray
    y: np.ndarray
    x: np.ndarray | None = None
    stratum: np.ndarray | None = None
    stratum_labels: tuple = ()
    user_weights: np.ndarray | None = None
    outcome_names: tuple = ()
    covariate_names: tuple = ()

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def L(self):
        return self.y.shape[1]

    @property
    def K(self):
        return 0 if self.x is None else self.x.shape[1]

    @property
    def S(self):
        return 1 if self.stratum is None else len(self.stratum_labels)

    @classmethod
    def from_arrays(cls, z, y, x=None, stratum=None, user_weights=None,
                    outcome_names=None, covariate_names=None):
        z = np.asarray(z, dtype=float).ravel()
        n = z.shape[0]
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[0] != n:
            raise InvalidSpec("outcome rows do not match treatment length",
                              rows=int(y.shape[0]), n=int(n))
        if x is not None:
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            if x.shape[1] == 0:
                x = None
            elif x.shape[0] != n:
                raise InvalidSpec("covariate rows do not match treatment length")
        L = y.shape[1]
        K = 0 if x is None else x.shape[1]

        for name, arr in (("treatment", z), ("outcomes", y), ("covariates", x)):
            if arr is None:
                continue
            bad = np.argwhere(~np.isfinite(arr.reshape(n, -1)))
            if bad.size:
                raise NonFiniteValue(f"non-finite value in {name}",
                                     row=int(bad[0][0]), col=int(bad[0][1]))

        if not np.all((z == 0) | (z == 1)):
            raise NonBinaryTreatment("treatment must be 0/1")
        if z.min() == z.max():
            arm = "control" if z[0] == 1 else "treated"
            raise NonBinaryTreatment(f"no {arm} units")
        if n < L + K + 2:
            raise TooFewRows(f"need at least L+K+2={L + K + 2} rows", n=int(n))
        const = np.flatnonzero(np.ptp(y, axis=0) == 0)
        if const.size:
            raise ConstantOutcome("outcome is constant over the sample", column=int(const[0]))

        codes, labels = None, ()
        if stratum is not None:
            raw = list(np.asarray(stratum).ravel())
            if len(raw) != n:
                raise InvalidSpec("stratum length does not match treatment length")
            codes, labels = _first_appearance_codes(raw)
            for k, lab in enumerate(labels):
                zs = z[codes == k]
                if zs.size < 2 or zs.min() == zs.max():
                    raise DegenerateStratum(f"stratum {lab} needs >= 2 units and both arms",
                                            stratum=lab)
            codes.setflags(write=False)

        if user_weights is not None:
            user_weights = np.asarray(user_weights, dtype=float).ravel()
            if user_weights.shape[0] != n:
                raise InvalidSpec("weights length does not match treatment length")
            if not np.all(np.isfinite(user_weights)):
                raise NonFiniteValue("non-finite weight",
                                     row=int(np.flatnonzero(~np.isfinite(user_weights))[0]))
            if np.any(user_weights <= 0):
                raise NonPositiveWeight("weights must be positive",
                                        row=int(np.flatnonzero(user_weights <= 0)[0]))
            user_weights = _frozen(user_weights)

        onames = tuple(outcome_names) if outcome_names else tuple(f"y{j + 1}" for j in range(L))
        cnames = tuple(covariate_names) if covariate_names else tuple(f"x{j + 1}" for j in range(K))
        return cls(z=_frozen(z), y=_frozen(y), x=None if x is None else _frozen(x),
                   stratum=codes, stratum_labels=labels, user_weights=user_weights,
                   outcome_names=onames, covariate_names=cnames)

    def subset(self, rows):
        """Rows as a new validated StudyData (used by bootstrap and per-stratum fits)."""
        rows = np.asarray(rows)
        strat = None
        if self.stratum is not None:
            strat = np.asarray(self.stratum_labels, dtype=object)[self.stratum[rows]]
        return StudyData.from_arrays(
            self.z[rows], self.y[rows],
            None if self.x is None else self.x[rows],
            strat,
            None if self.user_weights is None else self.user_weights[rows],
            self.outcome_names, self.covariate_names)

    def with_outcomes(self, y):
        return StudyData.from_arrays(
            self.z, y, self.x,
            None if self.stratum is None else np.asarray(self.stratum_labels, dtype=object)[self.stratum],
            self.user_weights)


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _first_appearance_codes(raw):
    try:
        if len({type(v) for v in raw}) > 1:
            raise TypeError
        arr = np.asarray(raw)
        if arr.dtype == object:
            raise TypeError
        uniq, first, inv = np.unique(arr, return_index=True, return_inverse=True)
    except TypeError:
        seen = {}
        codes = np.array([seen.setdefault(s, len(seen)) for s in raw], dtype=int)
        return codes, tuple(_plain(s) for s in seen)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inv.ravel()].astype(int), tuple(_plain(u) for u in uniq[order])


def _parse_label(s):
    try:
        return int(s)
    except ValueError:
        return s


def load_csv(path, roles):
    """Read a headed CSV and bind columns to roles.

    ``roles`` maps ``treatment`` to a column name, ``outcomes`` to a list of
    names, and optionally ``covariates`` (list), ``stratum`` and ``weights``.
    """
    if not roles.get("treatment") or not roles.get("outcomes"):
        raise MissingColumn("roles must name a treatment and at least one outcome")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TooFewRows("empty file", n=0) from None
        rows = [r for r in reader if r]
    index = {h: j for j, h in enumerate(header)}

    def col(name):
        if name not in index:
            raise MissingColumn(f"column {name!r} not found", column=name)
        return index[name]

    def numeric(names):
        js = [col(c) for c in names]
        out = np.empty((len(rows), len(js)))
        for i, r in enumerate(rows):
            for k, j in enumerate(js):
                try:
                    v = float(r[j])
                except (ValueError, IndexError):
                    v = math.nan
                if not math.isfinite(v):
                    raise NonFiniteValue(f"non-finite value in column {names[k]!r}",
                                         row=i + 1, col=names[k])
                out[i, k] = v
        return out

    outcomes = list(roles["outcomes"])
    covariates = list(roles.get("covariates") or [])
    z = numeric([roles["treatment"]])[:, 0]
    y = numeric(outcomes)
    x = numeric(covariates) if covariates else None
    w = numeric([roles["weights"]])[:, 0] if roles.get("weights") else None
    strat = None
    if roles.get("stratum"):
        j = col(roles["stratum"])
        strat = [_parse_label(r[j].strip()) for r in rows]
    return StudyData.from_arrays(z, y, x, strat, w, outcomes, covariates)


def to_csv(data, path, treatment="z", stratum="stratum", weights="w"):
    """Write columns back out; repr() keeps every float bit-exact."""
    header = [treatment, *data.outcome_names, *data.covariate_names]
    if data.stratum is not None:
        header.append(stratum)
    if data.user_weights is not None:
        header.append(weights)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(data.n):
            row = [repr(float(data.z[i]))]
            row += [repr(float(v)) for v in data.y[i]]
            if data.x is not None:
                row += [repr(float(v)) for v in data.x[i]]
            if data.stratum is not None:
                row.append(str(data.stratum_labels[data.stratum[i]]))
            if data.user_weights is not None:
                row.append(repr(float(data.user_weights[i])))
            wr.writerow(row)


@dataclass(frozen=True)
class DesignSpec:
    """Analysis choices: design, covariate adjustment, level and CI regime."""

    design: Design
    adjust_covariates: bool = False
    alpha: float = 0.05
    ci_method: CIMethod = CIMethod.AUTO_TWO_STEP
    eta: float | None = None
    inverse_logistic: bool = False
    r: float | str = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        object.__setattr__(self, "ci_method", CIMethod(self.ci_method))
        if not 0 < self.alpha < 1:
            raise InvalidSpec("alpha must lie in (0, 1)", alpha=self.alpha)
        if self.eta is not None and not 0 < self.eta <= self.alpha:
            raise InvalidSpec("eta must lie in (0, alpha]", eta=self.eta)

    @property
    def pretest_level(self):
        if self.ci_method is CIMethod.AUTO_TWO_STEP or self.eta is None:
            return self.alpha / 2
        return self.eta

    def check(self, data):
        if self.design is Design.OBS and data.x is None and data.user_weights is None:
            raise DesignMismatch("obs requires covariates or weights")
        if self.design in (Design.SRE_REGRESSION, Design.SRE_STRATIFICATION) and data.stratum is None:
            raise DesignMismatch(f"{self.design.value} requires a stratum column")
        if self.adjust_covariates and data.x is None:
            raise DesignMismatch("covariate adjustment requires covariates")
        if self.adjust_covariates and self.design is Design.SRE_STRATIFICATION:
            raise DesignMismatch("covariate adjustment is not defined for sre-strat")
        if self.inverse_logistic and self.design not in (Design.CRE, Design.SRE_REGRESSION):
            raise DesignMismatch("inverse logistic regression supports cre and sre-reg only")
        if self.inverse_logistic and self.adjust_covariates:
            raise DesignMismatch("inverse logistic regression has no covariate-adjusted form")
