"""Divided-difference selection of already-computed eigenpairs.

For distinct simple eigenvalues (lam_i, x_i, y_i) and (lam_j, x_j, y_j) of a
nonlinear eigenvalue problem F the generalized orthogonality

    y_i* F[lam_i, lam_j] x_j = 0,    F[lam, mu] = (F(lam) - F(mu)) / (lam - mu)

holds, while y* F'(lam) x != 0 characterizes simplicity.  A candidate
Ritz pair (theta, v) produced by a subspace method can therefore be tested
against every converged triplet in a registry:

    max_i |y_i* F[lam_i, theta] v| / |y_i* F'(lam_i) x_i| < eta

with 0 < eta < 1 accepts candidates heading for a new eigenvalue (the ratio
tends to 0) and rejects repeats (the ratio tends to 1 as (theta, v)
approaches a registered pair).  This replaces deflation or angle-based
locking: no transformation of the problem, no growing projectors, and it
works where eigenvectors of distinct eigenvalues (nearly) coincide.

The registry is a plain list of EigenTriplet; criterion_value / passes /
register are the operations on it.  Both scalar and homogeneous (projective)
eigenvalue representations are supported; in homogeneous mode the divided
difference and derivative are replaced by their projective counterparts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import homogeneous as hom
from .problems import dd_weights, norm1

__all__ = [
    "EigenTriplet",
    "SelectionConfig",
    "CandidatePair",
    "DefectiveEigenvalueError",
    "criterion_value",
    "passes",
    "register",
]

# |y* F'(lam) x| below this multiple of ||F'(lam)||_1 (unit x, y) is treated
# as a defective or multiple eigenvalue: the triplet cannot anchor the
# criterion because its denominator carries no information.
SIMPLICITY_RTOL = 1e-12

RECOMMENDED_ETA = 0.1


class DefectiveEigenvalueError(ValueError):
    """Raised when a triplet fails the simplicity threshold at registration."""


@dataclass
class SelectionConfig:
    """Selection parameters: threshold eta and value representation mode."""

    eta: float = RECOMMENDED_ETA
    mode: str = "standard"  # or "homogeneous"

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie strictly between 0 and 1")
        if self.mode not in ("standard", "homogeneous"):
            raise ValueError("mode must be 'standard' or 'homogeneous'")


@dataclass
class EigenTriplet:
    """A converged eigenvalue with right/left eigenvectors and metadata.

    value is the scalar eigenvalue (math.inf marks the infinite eigenvalue);
    point is its projective representation, always set in homogeneous mode.
    denom caches y* F'(lam) x (or y* DP(point) x), the criterion denominator.
    """

    value: complex
    right: np.ndarray
    left: np.ndarray
    denom: complex
    cond: float = math.nan
    residual: float = math.nan
    found_iteration: int = -1
    point: Optional[hom.ProjectivePoint] = None

    def to_dict(self):
        """JSON-ready dict; vectors as split re/im arrays."""
        if isinstance(self.value, float) and math.isinf(self.value):
            value = {"inf": True}
        else:
            value = [complex(self.value).real, complex(self.value).imag]
        d = {
            "value": value,
            "right": _vec_to_dict(self.right),
            "left": _vec_to_dict(self.left),
            "denom": [complex(self.denom).real, complex(self.denom).imag],
            "cond": None if math.isnan(self.cond) else float(self.cond),
            "residual": None if math.isnan(self.residual) else float(self.residual),
            "found_iteration": int(self.found_iteration),
        }
        if self.point is not None:
            d["point"] = {
                "alpha": [self.point.alpha.real, self.point.alpha.imag],
                "beta": [self.point.beta.real, self.point.beta.imag],
            }
        return d

    @staticmethod
    def from_dict(d):
        value = d["value"]
        if isinstance(value, dict) and value.get("inf"):
            value = math.inf
        else:
            value = complex(value[0], value[1])
        point = None
        if "point" in d:
            pa, pb = d["point"]["alpha"], d["point"]["beta"]
            point = hom.ProjectivePoint(complex(*pa), complex(*pb))
        cond = d.get("cond")
        residual = d.get("residual")
        return EigenTriplet(
            value=value,
            right=_vec_from_dict(d["right"]),
            left=_vec_from_dict(d["left"]),
            denom=complex(d["denom"][0], d["denom"][1]),
            cond=math.nan if cond is None else float(cond),
            residual=math.nan if residual is None else float(residual),
            found_iteration=int(d.get("found_iteration", -1)),
            point=point,
        )


def _vec_to_dict(v):
    v = np.asarray(v)
    return {"re": v.real.tolist(), "im": v.imag.tolist()}


def _vec_from_dict(d):
    return np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)


@dataclass
class CandidatePair:
    """A Ritz pair to be judged: value (scalar or ProjectivePoint) and vector."""

    theta: object
    v: np.ndarray


def _candidate_point(theta):
    if isinstance(theta, hom.ProjectivePoint):
        return theta
    return hom.from_scalar(theta)


def _left_rows(problem, triplet):
    # cached rows y* A_k, the only quantities of the problem the criterion
    # needs for a polynomial; m+1 inner products per tested candidate after
    # this one-time O(m n^2)/O(m nnz) setup per registered triplet
    rows = getattr(triplet, "_rows", None)
    if rows is None:
        y = triplet.left
        rows = np.array([np.conj(A.conj().T @ y) for A in problem.coeffs])
        triplet._rows = rows
    return rows


def _pair_value(problem, triplet, cand_theta, v, mode):
    """|y_i* F[lam_i, theta] v| / |denom_i| for one registered triplet."""
    if not hasattr(problem, "coeffs"):
        # general nonlinear problem: apply the divided-difference matrix
        dd = problem.divided_difference(triplet.value, complex(cand_theta))
        return abs(np.vdot(triplet.left, dd @ v)) / abs(triplet.denom)
    rows_v = _left_rows(problem, triplet) @ v
    m = problem.degree
    if mode == "homogeneous":
        p = triplet.point
        q = hom.align(_candidate_point(cand_theta), p)
        det = p.alpha * q.beta - q.alpha * p.beta
        if abs(det) <= hom.SWITCH_TOL:
            w = hom.hom_D_weights(m, p)
        else:
            w = (hom.hom_weights(m, p) - hom.hom_weights(m, q)) / det
    else:
        w = dd_weights(m, triplet.value, complex(cand_theta))
    return abs(np.dot(w, rows_v)) / abs(triplet.denom)


def criterion_value(problem, registry, cand, config=None):
    """max_i |y_i* F[lam_i, theta] v| / |denom_i| over the registry.

    An empty registry gives 0.0 (every candidate is new).  v is normalized
    defensively.  In homogeneous mode the projective divided difference is
    used with the registered point first and the candidate aligned to it;
    for polynomials the evaluation runs over cached rows y* A_k rather than
    assembled divided-difference matrices.
    """
    if config is None:
        config = SelectionConfig()
    if not registry:
        return 0.0
    v = np.asarray(cand.v)
    v = v / np.linalg.norm(v)
    worst = 0.0
    for t in registry:
        val = _pair_value(problem, t, cand.theta, v, config.mode)
        if val > worst:
            worst = val
    return worst


def passes(problem, registry, cand, config=None):
    """True when the candidate is accepted as heading for a new eigenvalue."""
    if config is None:
        config = SelectionConfig()
    return criterion_value(problem, registry, cand, config) < config.eta


def register(problem, registry, theta, x, y, config=None, residual=math.nan,
             iteration=-1):
    """Normalize, validate simplicity, and append a triplet to the registry.

    theta is a scalar in standard mode, a scalar or ProjectivePoint in
    homogeneous mode.  Raises DefectiveEigenvalueError when the criterion
    denominator |y* F'(lam) x| falls below SIMPLICITY_RTOL * ||F'(lam)||_1
    for unit x, y: such a value cannot be used as a selection anchor.
    Returns the new triplet.
    """
    if config is None:
        config = SelectionConfig()
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    x = x / np.linalg.norm(x)
    y = y / np.linalg.norm(y)

    if config.mode == "homogeneous":
        point = _candidate_point(theta)
        point = hom.scale_canonical(point)
        dF = hom.hom_D(problem, point)
        value = point.to_scalar()
    else:
        point = None
        value = complex(theta)
        dF = problem.derivative(value)
    denom = complex(np.vdot(y, dF @ x))
    scale = norm1(dF)
    if abs(denom) < SIMPLICITY_RTOL * scale:
        raise DefectiveEigenvalueError(
            f"|y* F'(lam) x| = {abs(denom):.3e} is below {SIMPLICITY_RTOL:g} * "
            f"||F'||_1 = {SIMPLICITY_RTOL * scale:.3e}: eigenvalue looks "
            "multiple or defective and cannot anchor the selection criterion"
        )
    # condition numbers only for survivors; the defective branch above
    # would otherwise warn or raise twice for the same root cause
    cond = math.nan
    if config.mode == "homogeneous":
        cond = hom.hom_condition_number(problem, point, x, y)
    elif hasattr(problem, "condition_number"):
        cond = problem.condition_number(value, x, y)
    triplet = EigenTriplet(
        value=value,
        right=x,
        left=y,
        denom=denom,
        cond=cond,
        residual=residual,
        found_iteration=iteration,
        point=point,
    )
    registry.append(triplet)
    return triplet
