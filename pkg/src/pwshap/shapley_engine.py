"""Value functions and exact-enumeration Shapley values (on-manifold, off-manifold, causal)."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from pwshap._rng import derive_seed
from pwshap.conditional_sampler import CapabilityError, ReferenceSampler

MODES = ("on_manifold", "off_manifold", "causal")
MAX_FEATURES = 20


class SizeError(ValueError):
    pass


@dataclass(frozen=True)
class Coalition:
    """Covariate indices held fixed, plus whether the treatment is in the coalition."""
    members: tuple[int, ...] = ()
    includes_treatment: bool = False

    def __post_init__(self):
        m = tuple(int(i) for i in self.members)
        if list(m) != sorted(set(m)):
            raise ValueError(f"coalition members must be sorted and unique, got {self.members}")
        if m and m[0] < 0:
            raise ValueError("negative covariate index")
        object.__setattr__(self, "members", m)

    def with_treatment(self) -> "Coalition":
        return Coalition(self.members, True)

    def feature_indices(self, n_covariates: int) -> tuple[int, ...]:
        if self.members and self.members[-1] >= n_covariates:
            raise ValueError(f"covariate index {self.members[-1]} out of range for {n_covariates} covariates")
        return self.members + ((n_covariates,) if self.includes_treatment else ())

    def mask(self, n_covariates: int) -> int:
        return sum(1 << i for i in self.feature_indices(n_covariates))

    def names(self, covariates) -> list[str]:
        return [covariates[i] for i in self.members]

    @classmethod
    def of(cls, covariates, names, includes_treatment=False) -> "Coalition":
        return cls(tuple(sorted(covariates.index(n) for n in names)), includes_treatment)


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    mc_std_error: float
    n_draws: int
    warnings: tuple[str, ...] = ()

    def __sub__(self, other: "ValueEstimate") -> "ValueEstimate":
        """Difference of two independently drawn estimates."""
        return ValueEstimate(self.value - other.value, math.hypot(self.mc_std_error, other.mc_std_error),
                             max(self.n_draws, other.n_draws), self.warnings + other.warnings)

    def to_dict(self) -> dict:
        out = {"value": self.value, "se": self.mc_std_error, "n_draws": self.n_draws}
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


def _mean_se(y: np.ndarray) -> tuple[float, float]:
    n = y.shape[0]
    if n < 2:
        return float(y.mean()), 0.0
    return float(y.mean()), float(y.std(ddof=1) / math.sqrt(n))


def _mask_indices(mask: int, m: int) -> tuple[int, ...]:
    return tuple(i for i in range(m) if mask >> i & 1)


def reference_draws(sampler: ReferenceSampler, x, known_idx, mode: str, n_draws: int, seed: int) -> np.ndarray:
    """Rows from the mode's reference law with the coordinates in `known_idx` set to x."""
    x = np.asarray(x, dtype=float)
    known = {int(i): float(x[i]) for i in known_idx}
    if mode == "on_manifold":
        rows = sampler.sample_conditional(known, n_draws, seed)
    elif mode == "off_manifold":
        rows = sampler.sample_marginal(n_draws, seed)
        for i, v in known.items():
            rows[:, i] = v
    elif mode == "causal":
        if not sampler.supports_do:
            raise CapabilityError(f"causal mode needs a sampler with do-support, got {type(sampler).__name__}")
        rows = sampler.sample_do(known, n_draws, seed)
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return rows


def _value_by_mask(model, sampler, x, mask: int, mode, n_draws, seed) -> ValueEstimate:
    m = len(x)
    idx = _mask_indices(mask, m)
    if len(idx) == m:
        return ValueEstimate(float(model.predict(np.asarray(x, dtype=float)[None, :])[0]), 0.0, 0)
    rows = reference_draws(sampler, x, idx, mode, n_draws, derive_seed(seed, "coalition", mask))
    value, se = _mean_se(model.predict(rows))
    warns = tuple(sampler.support_warnings({i: x[i] for i in idx})) if mode == "on_manifold" else ()
    return ValueEstimate(value, se, n_draws, warns)


def value_function(model, sampler, coalition: Coalition, x, mode: str = "on_manifold",
                   n_draws: int = 10_000, seed: int = 0) -> ValueEstimate:
    """E[f(x_S, X_rest)] under the mode's reference law; the seed is keyed by the coalition."""
    if n_draws < 2:
        raise ValueError("n_draws must be >= 2")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "causal" and not sampler.supports_do:
        raise CapabilityError("causal mode needs a sampler with do-support")
    x = np.asarray(x, dtype=float)
    return _value_by_mask(model, sampler, x, coalition.mask(len(x) - 1), mode, n_draws, seed)


def coalition_shapley_value(model, sampler, S: Coalition, x, mode: str = "on_manifold",
                            n_draws: int = 10_000, seed: int = 0) -> ValueEstimate:
    """phi_{S,T}(x) = v(S + T) - v(S)."""
    if S.includes_treatment:
        raise ValueError("S must exclude the treatment")
    with_t = value_function(model, sampler, S.with_treatment(), x, mode, n_draws, seed)
    without = value_function(model, sampler, S, x, mode, n_draws, seed)
    return with_t - without


def shapley_weights(m: int) -> list[Fraction]:
    """|S|!(m-|S|-1)!/m! for |S| = 0..m-1; checked to sum to one over subsets not containing j."""
    w = [Fraction(math.factorial(s) * math.factorial(m - s - 1), math.factorial(m)) for s in range(m)]
    assert sum(math.comb(m - 1, s) * w[s] for s in range(m)) == 1
    return w


@dataclass
class ShapleyReport:
    feature_names: tuple[str, ...]
    instance: tuple[float, ...]
    prediction: float
    attributions: dict[str, ValueEstimate]
    baseline: ValueEstimate
    mode: str
    n_draws: int
    seed: int
    coalitions: list[dict] | None = None
    direct: dict[str, ValueEstimate] | None = None
    indirect: dict[str, ValueEstimate] | None = None
    warnings: list[str] = field(default_factory=list)

    def efficiency_gap(self) -> ValueEstimate:
        """f(x) - baseline - sum(phi); zero by construction, SE from the pieces."""
        total = sum(a.value for a in self.attributions.values())
        return ValueEstimate(self.prediction - self.baseline.value - total, self.baseline.mc_std_error, self.n_draws)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "n_draws": self.n_draws,
            "seed": self.seed,
            "features": list(self.feature_names),
            "instance": list(self.instance),
            "prediction": self.prediction,
            "baseline": self.baseline.to_dict(),
            "attributions": {k: v.to_dict() for k, v in self.attributions.items()},
        }
        if self.direct is not None:
            out["direct"] = {k: v.to_dict() for k, v in self.direct.items()}
            out["indirect"] = {k: v.to_dict() for k, v in self.indirect.items()}
        if self.coalitions is not None:
            out["coalitions"] = self.coalitions
        if self.warnings:
            out["warnings"] = sorted(set(self.warnings))
        return out


def _coalition_task(model, sampler, x, mask, mode, n_draws, seed, causal_split):
    m = len(x)
    idx = _mask_indices(mask, m)
    if len(idx) == m:
        fx = float(model.predict(x[None, :])[0])
        return ValueEstimate(fx, 0.0, 0), {}
    rows = reference_draws(sampler, x, idx, mode, n_draws, derive_seed(seed, "coalition", mask))
    y = model.predict(rows)
    value, se = _mean_se(y)
    warns = tuple(sampler.support_warnings({i: x[i] for i in idx})) if mode == "on_manifold" else ()
    plug = {}
    if causal_split:
        for j in range(m):
            if mask >> j & 1:
                continue
            swapped = rows.copy()
            swapped[:, j] = x[j]
            yj = model.predict(swapped)
            plug[j] = (_mean_se(yj), _mean_se(yj - y))
    return ValueEstimate(value, se, n_draws, warns), plug


def full_shapley(model, sampler, x, mode: str = "on_manifold", n_draws: int = 10_000, seed: int = 0,
                 detail: bool = False, workers: int = 1, feature_names=None) -> ShapleyReport:
    """Exact enumeration over all 2^m coalitions.

    Each coalition's draws come from a seed keyed by its bitmask, so the
    result does not depend on `workers`. In causal mode each phi_j is split
    into direct + indirect parts that share those draws.
    """
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    if m > MAX_FEATURES:
        raise SizeError(f"{m} features; exact enumeration is limited to {MAX_FEATURES}, explain a subset")
    width = len(getattr(sampler, "feature_names", ()) or ())
    if width and width != m:
        raise ValueError(f"instance has {m} features but the sampler draws {width}")
    if n_draws < 2:
        raise ValueError("n_draws must be >= 2")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "causal" and not sampler.supports_do:
        raise CapabilityError("causal mode needs a sampler with do-support")
    names = tuple(feature_names or getattr(sampler, "feature_names", ()) or [f"x{j}" for j in range(m)])
    causal = mode == "causal"
    masks = list(range(1 << m))
    task = lambda mask: _coalition_task(model, sampler, x, mask, mode, n_draws, seed, causal)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, masks))
    else:
        results = [task(mask) for mask in masks]
    values = [r[0] for r in results]
    weights = [float(w) for w in shapley_weights(m)]

    attributions, direct, indirect = {}, {}, {}
    for j in range(m):
        phi = 0.0
        coef_by_mask = np.zeros(1 << m)
        d_val = d_var = i_val = i_var = 0.0
        for mask in masks:
            if mask >> j & 1:
                continue
            s = bin(mask).count("1")
            w = weights[s]
            upper = mask | (1 << j)
            if causal:
                (plug_val, plug_se), (diff_val, diff_se) = results[mask][1][j]
                d = diff_val
                ind = values[upper].value - plug_val
                d_val += w * d
                d_var += (w * diff_se) ** 2
                i_val += w * ind
                i_var += w * w * (values[upper].mc_std_error ** 2 + plug_se ** 2)
                phi += w * (d + ind)
            else:
                phi += w * (values[upper].value - values[mask].value)
            coef_by_mask[upper] += w
            coef_by_mask[mask] -= w
        se = math.sqrt(float(np.sum((coef_by_mask * np.array([v.mc_std_error for v in values])) ** 2)))
        attributions[names[j]] = ValueEstimate(phi, se, n_draws)
        if causal:
            direct[names[j]] = ValueEstimate(d_val, math.sqrt(d_var), n_draws)
            indirect[names[j]] = ValueEstimate(i_val, math.sqrt(i_var), n_draws)

    table = None
    if detail:
        table = [{"coalition": [names[i] for i in _mask_indices(mask, m)], **values[mask].to_dict()}
                 for mask in masks]
    warns = sorted({w for v in values for w in v.warnings})
    return ShapleyReport(names, tuple(float(v) for v in x), values[-1].value, attributions, values[0], mode,
                         n_draws, seed, table, direct if causal else None, indirect if causal else None, warns)


def causal_shapley_split(model, scenario, S: Coalition, j: int, x, n_draws: int = 10_000,
                         seed: int = 0) -> tuple[ValueEstimate, ValueEstimate]:
    """Direct and indirect parts of the causal coalition term v(S + j) - v(S).

    direct   = E[f(x_{S+j}, X_rest) | do(x_S)] - E[f(x_S, X_rest) | do(x_S)]
    indirect = E[f(x_{S+j}, X_rest) | do(x_{S+j})] - E[f(x_{S+j}, X_rest) | do(x_S)]
    Draws match value_function(mode="causal") with the same seed, so the two
    parts add up to that coalition term.
    """
    if not scenario.supports_do:
        raise CapabilityError("causal split needs a sampler with do-support")
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    mask = S.mask(m - 1)
    if mask >> j & 1:
        raise ValueError(f"feature {j} is already in the coalition")
    lower, plug = _coalition_task(model, scenario, x, mask, "causal", n_draws, seed, True)
    upper = _value_by_mask(model, scenario, x, mask | (1 << j), "causal", n_draws, seed)
    (plug_val, plug_se), (diff_val, diff_se) = plug[j]
    direct = ValueEstimate(diff_val, diff_se, n_draws)
    indirect = ValueEstimate(upper.value - plug_val, math.hypot(upper.mc_std_error, plug_se), n_draws)
    return direct, indirect


def coalition_subsets(n_covariates: int):
    """All covariate coalitions (treatment excluded), smallest first."""
    for size in range(n_covariates + 1):
        for members in combinations(range(n_covariates), size):
            yield Coalition(members)
