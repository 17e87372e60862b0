"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np


@dataclass
class CheckReport:
    name: str
    n_checked: int
    max_rel_err: float
    worst_index: tuple | None
    analytic: float
    numeric: float
    tolerance: float
    passed: bool
    message: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        s = f"{status} {self.name:<28s} coords={self.n_checked:<6d} max_rel_err={self.max_rel_err:.3e} tol={self.tolerance:.0e}"
        if not self.passed and self.worst_index is not None:
            s += f" worst={self.worst_index} analytic={self.analytic:.6e} numeric={self.numeric:.6e}"
        if self.message:
            s += f" ({self.message})"
        return s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_index"] = None if self.worst_index is None else [int(i) for i in self.worst_index]
        return d


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def gradcheck(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    name: str = "",
    value_fn: Callable[[np.ndarray], float] | None = None,
    coords: np.ndarray | None = None,
) -> CheckReport:
    """Compare ``fun(x)[1]`` with ``(f(x+h e_i) - f(x-h e_i)) / 2h``.

    All coordinates are checked unless ``max_coords`` is set and smaller than
    ``x.size``, in which case a random subset of that size is used.
    ``value_fn`` (value only) is used for the perturbed evaluations when given.
    ``coords`` lists explicit flat indices to check and overrides ``max_coords``.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    value_fn = value_fn or (lambda z: fun(z)[0])
    f0, g = fun(x.copy())
    g = np.asarray(g, dtype=np.float64).reshape(x.shape)
    if not np.isfinite(f0):
        return CheckReport(name, 0, np.inf, None, np.nan, np.nan, tol, False, "non-finite value at x")
    bad = np.argwhere(~np.isfinite(g))
    if len(bad):
        return CheckReport(name, 0, np.inf, tuple(bad[0]), np.nan, np.nan, tol, False, "non-finite analytic gradient")
    flat = np.arange(x.size)
    if coords is not None:
        flat = np.asarray(coords, dtype=int).reshape(-1)
    elif max_coords is not None and max_coords < x.size:
        rng = rng or np.random.default_rng(0)
        flat = np.sort(rng.choice(x.size, size=max_coords, replace=False))
    worst, worst_i, worst_a, worst_n = 0.0, None, 0.0, 0.0
    xf = x.reshape(-1)
    for i in flat:
        orig = xf[i]
        xf[i] = orig + h
        fp = value_fn(x)
        xf[i] = orig - h
        fm = value_fn(x)
        xf[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            idx = np.unravel_index(i, x.shape)
            return CheckReport(name, len(flat), np.inf, idx, g.reshape(-1)[i], np.nan, tol, False, "non-finite perturbed value")
        num = (fp - fm) / (2 * h)
        a = g.reshape(-1)[i]
        e = float(rel_err(a, num))
        if e > worst or worst_i is None:
            worst, worst_i, worst_a, worst_n = e, np.unravel_index(i, x.shape), a, num
    return CheckReport(
        name,
        len(flat),
        worst,
        None if worst_i is None else tuple(int(v) for v in worst_i),
        float(worst_a),
        float(worst_n),
        tol,
        worst < tol,
    )


def reports_json(reports: list[CheckReport]) -> str:
    return json.dumps(
        {"passed": all(r.passed for r in reports), "checks": [r.to_dict() for r in reports]},
        indent=1,
        sort_keys=True,
    )
