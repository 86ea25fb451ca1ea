"""Binary logit for Transit vs Other with Other as the base alternative.

Utility of Transit is ``ASC + sum(coef * scaled feature)``; Other is fixed at 0,
so P(Transit) is the logistic function of the Transit utility.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, stats
from scipy.special import expit, log_expit

from .behavior import TRANSIT
from .errors import CollinearityError, ConvergenceError, SchemaError

ASC = "ASC"


@dataclass(frozen=True)
class Feature:
    name: str  # ChoiceObservation attribute
    label: str
    scale: float = 1.0


DEFAULT_FEATURES = (
    Feature("total_added_value", "Total added value ($1000/year)", 1000.0),
    Feature("add_value_frequency", "Add-value frequency (100 times/year)", 100.0),
    Feature("max_added_value", "Max single added value ($1000)", 1000.0),
    Feature("high_income", "Living in high household income area (Yes = 1)"),
    Feature("low_income", "Living in low household income area (Yes = 1)"),
    Feature("pass_user", "Using pass (Yes = 1)"),
    Feature("reduced_fare", "Reduced fare status (Yes = 1)"),
    Feature("od_redundancy", "OD-based redundancy"),
    Feature("downtown_destination", "Downtown destination (Yes = 1)"),
)


@dataclass(frozen=True)
class LogitSpec:
    features: tuple[Feature, ...] = DEFAULT_FEATURES
    chosen: str = TRANSIT
    base: str = "Other"

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names) or ASC in names:
            raise SchemaError("coefficient names must be unique", "choice.spec")
        if self.chosen == self.base:
            raise SchemaError("need exactly one base alternative", "choice.spec")

    @property
    def names(self) -> list[str]:
        return [ASC] + [f.name for f in self.features]

    def design(self, observations: Sequence) -> np.ndarray:
        X = np.ones((len(observations), len(self.features) + 1))
        for j, f in enumerate(self.features, start=1):
            X[:, j] = [float(getattr(o, f.name)) / f.scale for o in observations]
        return X

    def outcomes(self, observations: Sequence) -> np.ndarray:
        return np.array([1.0 if o.choice == self.chosen else 0.0 for o in observations])

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen,
            "base": self.base,
            "features": [{"name": f.name, "label": f.label, "scale": f.scale} for f in self.features],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LogitSpec":
        feats = tuple(
            Feature(str(f["name"]), str(f.get("label", f["name"])), float(f.get("scale", 1.0)))
            for f in doc.get("features", [])
        )
        return cls(features=feats, chosen=doc.get("chosen", TRANSIT), base=doc.get("base", "Other"))


def choice_probability(spec: LogitSpec, coefficients: Sequence[float], observation) -> dict[str, float]:
    x = spec.design([observation])[0]
    v = float(np.dot(x, np.asarray(coefficients, dtype=float)))
    if not math.isfinite(v):
        raise SchemaError("non-finite utility", "choice.utility")
    p = float(expit(v))
    return {spec.chosen: p, spec.base: float(expit(-v))}


def log_likelihood(spec: LogitSpec, coefficients, observations=None, *, X=None, y=None):
    """Log-likelihood and its analytic gradient."""
    if X is None:
        if not observations:
            raise SchemaError("no observations", "choice.empty")
        X, y = spec.design(observations), spec.outcomes(observations)
    beta = np.asarray(coefficients, dtype=float)
    v = X @ beta
    ll = float(np.sum(y * log_expit(v) + (1.0 - y) * log_expit(-v)))
    grad = X.T @ (y - expit(v))
    return ll, grad


def information_matrix(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    p = expit(X @ beta)
    w = p * (1.0 - p)
    return (X * w[:, None]).T @ X


def _collinear_features(X: np.ndarray, names: list[str]) -> list[str]:
    # columns carrying weight in the design matrix's numerical null space
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    _, s, vt = np.linalg.svd(X / scale, full_matrices=False)
    tol = s.max() * max(X.shape) * np.finfo(float).eps * 1e3
    null = vt[s <= tol]
    if len(null) == 0:
        return []
    weight = np.abs(null).max(axis=0)
    return [n for n, w in zip(names, weight) if w > 1e-6]


@dataclass
class FitResult:
    names: list[str]
    labels: list[str]
    estimates: np.ndarray
    std_errors: np.ndarray
    ll: float
    ll0: float
    n: int
    iterations: int
    converged: bool
    gradient_norm: float
    message: str = ""
    spec: LogitSpec = field(default_factory=LogitSpec)

    @property
    def n_params(self) -> int:
        return len(self.names)

    @property
    def adjusted_rho2(self) -> float:
        return 1.0 - (self.ll - self.n_params) / self.ll0

    @property
    def z_values(self) -> np.ndarray:
        return self.estimates / self.std_errors

    @property
    def p_values(self) -> np.ndarray:
        return 2.0 * stats.norm.sf(np.abs(self.z_values))

    def coefficient(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "n": self.n,
            "ll": self.ll,
            "ll0": self.ll0,
            "adjusted_rho2": self.adjusted_rho2,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "message": self.message,
            "coefficients": [
                {
                    "name": n,
                    "label": lab,
                    "estimate": float(b),
                    "std_error": float(se),
                    "z": float(z),
                    "p_value": float(p),
                    "stars": significance_stars(float(p)),
                }
                for n, lab, b, se, z, p in zip(
                    self.names, self.labels, self.estimates, self.std_errors, self.z_values, self.p_values
                )
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FitResult":
        spec = LogitSpec.from_dict(doc["spec"])
        coefs = doc["coefficients"]
        return cls(
            names=[c["name"] for c in coefs],
            labels=[c["label"] for c in coefs],
            estimates=np.array([c["estimate"] for c in coefs]),
            std_errors=np.array([c["std_error"] for c in coefs]),
            ll=doc["ll"],
            ll0=doc["ll0"],
            n=doc["n"],
            iterations=doc["iterations"],
            converged=doc["converged"],
            gradient_norm=doc["gradient_norm"],
            message=doc.get("message", ""),
            spec=spec,
        )

    def table(self) -> str:
        """Plain-text estimation table: value (standard error) and stars."""
        width = max(len(f"{self.spec.chosen}: {lab}") for lab in self.labels) + 2
        lines = [f"{'Parameters':<{width}}{'Value (standard error)':<28}", "-" * (width + 32)]
        for lab, b, se, p in zip(self.labels, self.estimates, self.std_errors, self.p_values):
            cell = f"{b:.3g} ({se:.3g})"
            lines.append(f"{self.spec.chosen + ': ' + lab:<{width}}{cell:<28}{significance_stars(float(p))}")
        lines.append(f"{self.spec.base + ': ASC':<{width}}{'0 (fixed)':<28}")
        lines.append("-" * (width + 32))
        lines.append(f"Number of individuals: {self.n}. Adjusted rho^2 = {self.adjusted_rho2:.3f}")
        lines.append("***: p<0.01; **: p<0.05; *: p<0.1; .: p<0.15")
        return "\n".join(lines) + "\n"


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    if p < 0.15:
        return "."
    return ""


def fit(
    spec: LogitSpec,
    observations: Sequence,
    tolerance: float = 1e-6,
    max_iterations: int = 500,
    ll_rtol: float = 1e-10,
) -> FitResult:
    """Maximum-likelihood estimates by BFGS on the analytic gradient.

    Converged when the gradient infinity norm drops below ``tolerance`` or the
    relative change in log-likelihood between iterations falls below
    ``ll_rtol``. Standard errors come from the inverse of the analytic
    information matrix at the optimum.
    """
    if not observations:
        raise SchemaError("no observations", "choice.empty")
    X, y = spec.design(observations), spec.outcomes(observations)
    names = spec.names
    bad = _collinear_features(X, names)
    if bad:
        raise CollinearityError(f"collinear features: {', '.join(bad)}", bad)

    def negll(beta):
        ll, g = log_likelihood(spec, beta, X=X, y=y)
        return -ll, -g

    history = [negll(np.zeros(X.shape[1]))[0]]
    stall = {"hit": False}

    def watch(intermediate_result):
        f = float(intermediate_result.fun)
        if abs(history[-1] - f) <= ll_rtol * max(abs(f), 1e-300):
            stall["hit"] = True
            raise StopIteration
        history.append(f)

    res = optimize.minimize(
        negll,
        np.zeros(X.shape[1]),
        jac=True,
        method="BFGS",
        callback=watch,
        options={"gtol": tolerance, "norm": np.inf, "maxiter": max_iterations},
    )
    beta = res.x
    ll, grad = log_likelihood(spec, beta, X=X, y=y)
    gnorm = float(np.max(np.abs(grad)))
    converged = gnorm < tolerance or stall["hit"] or (res.status == 2 and gnorm < 1e3 * tolerance)
    if not converged:
        raise ConvergenceError(f"no convergence after {res.nit} iterations: {res.message}")
    info = information_matrix(X, beta)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise CollinearityError("singular information matrix", names) from None
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        names=names,
        labels=[ASC] + [f.label for f in spec.features],
        estimates=beta,
        std_errors=se,
        ll=ll,
        ll0=len(y) * math.log(0.5),
        n=len(y),
        iterations=int(res.nit),
        converged=True,
        gradient_norm=gnorm,
        message=str(res.message),
        spec=spec,
    )


def feature_means(spec: LogitSpec, observations: Sequence) -> np.ndarray:
    return spec.design(observations).mean(axis=0)


def sensitivity_curve(
    result: FitResult,
    observations: Sequence,
    variable: str = "od_redundancy",
    grid: Iterable[float] | None = None,
    conditions: dict[str, float] | None = None,
) -> list[tuple[float, float]]:
    """P(chosen) over ``grid`` with other features at sample means.

    ``conditions`` pins selected features (raw units) instead of their means,
    e.g. ``{"high_income": 1, "low_income": 0}``.
    """
    grid = [i / 100 for i in range(101)] if grid is None else list(grid)
    if variable == "od_redundancy" and any(g < 0 or g > 1 for g in grid):
        raise SchemaError("grid outside [0, 1]", "choice.grid")
    spec = result.spec
    x = feature_means(spec, observations)
    j = spec.names.index(variable)
    scale = spec.features[j - 1].scale
    for name, value in (conditions or {}).items():
        i = spec.names.index(name)
        x[i] = float(value) / spec.features[i - 1].scale
    out = []
    for g in grid:
        x[j] = g / scale
        out.append((g, float(expit(x @ result.estimates))))
    return out


def elasticity(result: FitResult, observations: Sequence, variable: str = "od_redundancy", at: float = 0.5, conditions=None) -> float:
    """Point elasticity of P(chosen) w.r.t. ``variable`` (others at means)."""
    ((_, p),) = sensitivity_curve(result, observations, variable, [at], conditions)
    j = result.spec.names.index(variable)
    scale = result.spec.features[j - 1].scale
    return result.estimates[j] / scale * (1.0 - p) * at


def save_fit(result: FitResult) -> str:
    return json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
