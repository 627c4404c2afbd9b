"""Reference distributions for value functions: exact structural scenarios, a chained linear imputer, and KNN.

All samplers work on feature rows laid out as (covariates..., treatment).
`known` maps feature index (or name) to the value held fixed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from pwshap._rng import derive_seed, stream
from pwshap.data import Dataset


class CapabilityError(RuntimeError):
    pass


class SupportError(RuntimeError):
    """Conditioning event has (numerically) zero probability under the sampler."""


def normalize_known(known, feature_names: Sequence[str]) -> dict[int, float]:
    if known is None:
        return {}
    if isinstance(known, tuple) and len(known) == 2 and not isinstance(known[0], (int, str)):
        known = dict(zip(known[0], known[1]))
    out = {}
    for key, val in dict(known).items():
        if isinstance(key, str):
            if key not in feature_names:
                raise KeyError(f"unknown feature {key!r}")
            key = feature_names.index(key)
        key = int(key)
        if not 0 <= key < len(feature_names):
            raise IndexError(f"feature index {key} out of range")
        out[key] = float(val)
    return out


class ReferenceSampler:
    feature_names: tuple[str, ...] = ()
    supports_do: bool = False

    def sample_conditional(self, known, n: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    def sample_marginal(self, n: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    def sample_do(self, intervened, n: int, seed: int) -> np.ndarray:
        raise CapabilityError(f"{type(self).__name__} cannot sample interventional distributions")

    def support_warnings(self, known) -> list[str]:
        return []


def sample_conditional(sampler: ReferenceSampler, known, n: int, rng_seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return sampler.sample_conditional(normalize_known(known, sampler.feature_names), n, rng_seed)


def sample_do(sampler: ReferenceSampler, intervened, n: int, rng_seed: int) -> np.ndarray:
    if not sampler.supports_do:
        raise CapabilityError(f"{type(sampler).__name__} does not support do-interventions")
    if n < 1:
        raise ValueError("n must be >= 1")
    return sampler.sample_do(normalize_known(intervened, sampler.feature_names), n, rng_seed)


# ---------------------------------------------------------------- exact backend

@dataclass(frozen=True)
class StructuralNode:
    """One structural equation.

    draw(parents, u) maps parent arrays and uniforms to values (inverse-CDF
    style, one uniform per row); likelihood(values, parents) is the density or
    pmf; bound is its supremum, used for rejection.
    """
    name: str
    parents: tuple[str, ...]
    draw: Callable
    likelihood: Callable
    bound: float
    kind: str = "continuous"
    latent: bool = False


def bernoulli_node(name: str, parents: Sequence[str], prob: Callable, latent: bool = False) -> StructuralNode:
    def draw(pa, u):
        return (u < prob(pa)).astype(float)

    def lik(v, pa):
        p = prob(pa)
        return np.where(v == 1.0, p, np.where(v == 0.0, 1.0 - p, 0.0))

    return StructuralNode(name, tuple(parents), draw, lik, 1.0, "binary", latent)


def uniform_node(name: str, parents: Sequence[str] = (), low: Callable | float = 0.0,
                 high: Callable | float = 1.0, max_density: float | None = None,
                 latent: bool = False) -> StructuralNode:
    lo_f = low if callable(low) else (lambda pa, c=float(low): c)
    hi_f = high if callable(high) else (lambda pa, c=float(high): c)
    if max_density is None:
        if parents:
            raise ValueError("uniform node with parents needs max_density")
        max_density = 1.0 / (float(high) - float(low))

    def draw(pa, u):
        lo, hi = lo_f(pa), hi_f(pa)
        return lo + (hi - lo) * u

    def lik(v, pa):
        lo, hi = lo_f(pa), hi_f(pa)
        return np.where((v >= lo) & (v <= hi), 1.0 / (hi - lo), 0.0)

    return StructuralNode(name, tuple(parents), draw, lik, float(max_density), "continuous", latent)


class GenerativeScenario(ReferenceSampler):
    """Exact sampler over executable structural equations.

    Conditionals use rejection: observed nodes are clamped during ancestral
    sampling and each proposal is kept with probability prod(lik / bound) over
    clamped nodes that have an unclamped parent.
    """

    supports_do = True

    def __init__(self, nodes: Sequence[StructuralNode], feature_names: Sequence[str] | None = None,
                 max_proposals: int = 20_000_000, max_batch: int = 400_000, name: str = ""):
        seen = set()
        for node in nodes:
            missing = [p for p in node.parents if p not in seen]
            if missing:
                raise ValueError(f"node {node.name!r} listed before its parents {missing}")
            seen.add(node.name)
        self.nodes = tuple(nodes)
        self._by_name = {nd.name: nd for nd in self.nodes}
        if feature_names is None:
            feature_names = [nd.name for nd in self.nodes if not nd.latent]
        for f in feature_names:
            if f not in self._by_name or self._by_name[f].latent:
                raise ValueError(f"feature {f!r} is not an observed node")
        self.feature_names = tuple(feature_names)
        self.max_proposals = int(max_proposals)
        self.max_batch = int(max_batch)
        self.name = name

    def _clamp(self, known: Mapping[int, float]) -> dict[str, float]:
        return {self.feature_names[i]: v for i, v in known.items()}

    def ancestral(self, n: int, clamp: Mapping[str, float], seed: int) -> dict[str, np.ndarray]:
        vals = {}
        for node in self.nodes:
            if node.name in clamp:
                vals[node.name] = np.full(n, float(clamp[node.name]))
            else:
                u = stream(seed, "node", node.name).random(n)
                vals[node.name] = np.asarray(node.draw({p: vals[p] for p in node.parents}, u), dtype=float)
        return vals

    def _rows(self, vals) -> np.ndarray:
        return np.column_stack([vals[f] for f in self.feature_names])

    def sample_marginal(self, n, seed):
        return self._rows(self.ancestral(n, {}, seed))

    def sample_do(self, intervened, n, seed):
        return self._rows(self.ancestral(n, self._clamp(normalize_known(intervened, self.feature_names)), seed))

    def sample_conditional(self, known, n, seed):
        clamp = self._clamp(normalize_known(known, self.feature_names))
        factors, fixed = [], []
        for node in self.nodes:
            if node.name in clamp:
                (factors if any(p not in clamp for p in node.parents) else fixed).append(node)
        for node in fixed:
            pa = {p: np.array([clamp[p]]) for p in node.parents}
            if float(node.likelihood(np.array([clamp[node.name]]), pa)[0]) <= 0.0:
                raise SupportError(f"{node.name}={clamp[node.name]} has zero probability given its parents")
        if not factors:
            return self._rows(self.ancestral(n, clamp, seed))

        kept, have, proposed, accepted = [], 0, 0, 0
        batch = max(256, 2 * n)
        k = 0
        while have < n:
            bseed = derive_seed(seed, "batch", k)
            vals = self.ancestral(batch, clamp, bseed)
            weight = np.ones(batch)
            for node in factors:
                pa = {p: vals[p] for p in node.parents}
                weight *= node.likelihood(vals[node.name], pa) / node.bound
            ok = stream(bseed, "accept").random(batch) < weight
            rows = self._rows(vals)[ok]
            kept.append(rows)
            have += rows.shape[0]
            accepted += rows.shape[0]
            proposed += batch
            if have >= n:
                break
            if proposed >= self.max_proposals:
                raise SupportError(
                    f"rejection sampler accepted {accepted} of {proposed} proposals for {dict(clamp)}; "
                    "conditioning event is (near) impossible")
            rate = max(accepted, 1) / proposed
            batch = int(min(self.max_batch, max(256, math.ceil(1.2 * (n - have) / rate))))
            k += 1
        return np.concatenate(kept, axis=0)[:n]


# ---------------------------------------------------------------- fitted backends

def _matrix_and_names(data, feature_names):
    if isinstance(data, Dataset):
        return data.X, data.feature_names
    X = np.asarray(data, dtype=float)
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(X.shape[1]))
    return X, tuple(feature_names)


class LinearChainImputer(ReferenceSampler):
    """Each column regressed on all others; conditionals drawn by Gibbs sweeps over the unknown columns.

    Continuous columns get Gaussian residual noise, 0/1 columns are
    thresholded: 1{u < clip(linear prediction, 0, 1)}.
    """

    def __init__(self, train, feature_names, intercepts, coefs, resid_sd, binary, constant, sweeps):
        self.train = train
        self.feature_names = tuple(feature_names)
        self.intercepts = intercepts
        self.coefs = coefs  # (k, k); coefs[j, j] == 0
        self.resid_sd = resid_sd
        self.binary = binary
        self.constant = constant
        self.sweeps = int(sweeps)

    def sample_marginal(self, n, seed):
        rng = stream(seed, "imputer-marginal")
        return self.train[rng.integers(0, self.train.shape[0], n)].copy()

    def sample_conditional(self, known, n, seed):
        known = normalize_known(known, self.feature_names)
        rng = stream(seed, "imputer")
        rows = self.train[rng.integers(0, self.train.shape[0], n)].copy()
        if not known:
            return rows
        for j, v in known.items():
            rows[:, j] = v
        unknown = [j for j in range(rows.shape[1]) if j not in known]
        for _ in range(self.sweeps):
            for j in unknown:
                if self.constant[j]:
                    rows[:, j] = self.intercepts[j]
                    continue
                mean = self.intercepts[j] + rows @ self.coefs[j]
                if self.binary[j]:
                    rows[:, j] = (rng.random(n) < np.clip(mean, 0.0, 1.0)).astype(float)
                else:
                    rows[:, j] = mean + self.resid_sd[j] * rng.standard_normal(n)
        return rows


def fit_imputer(data, sweeps: int = 10, feature_names=None) -> LinearChainImputer:
    X, names = _matrix_and_names(data, feature_names)
    n, k = X.shape
    if n < 20:
        raise ValueError("imputer needs at least 20 rows")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    intercepts = np.zeros(k)
    coefs = np.zeros((k, k))
    resid_sd = np.zeros(k)
    binary = np.array([bool(np.all((X[:, j] == 0) | (X[:, j] == 1))) for j in range(k)])
    constant = np.array([bool(np.all(X[:, j] == X[0, j])) for j in range(k)])
    for j in range(k):
        if constant[j]:
            intercepts[j] = X[0, j]
            continue
        others = [i for i in range(k) if i != j and not constant[i]]
        A = np.column_stack([np.ones(n)] + [X[:, i] for i in others])
        beta, *_ = np.linalg.lstsq(A, X[:, j], rcond=None)
        intercepts[j] = beta[0]
        coefs[j, others] = beta[1:]
        resid = X[:, j] - A @ beta
        dof = max(n - A.shape[1], 1)
        resid_sd[j] = math.sqrt(float(resid @ resid) / dof)
    return LinearChainImputer(X.copy(), names, intercepts, coefs, resid_sd, binary, constant, sweeps)


class EmpiricalKnnSampler(ReferenceSampler):
    """Draws training rows among the k nearest neighbours on the conditioned coordinates."""

    def __init__(self, train, feature_names, k: int | None = None, warn_distance: float = 1.0):
        self.train = np.asarray(train, dtype=float)
        self.feature_names = tuple(feature_names)
        n = self.train.shape[0]
        self.k = int(k) if k is not None else int(math.ceil(math.sqrt(n)))
        self.k = max(1, min(self.k, n))
        scale = self.train.std(axis=0)
        scale[scale == 0] = 1.0
        self.scale = scale
        self.warn_distance = warn_distance

    def _distances(self, known):
        idx = np.array(sorted(known))
        vals = np.array([known[i] for i in idx])
        diff = (self.train[:, idx] - vals) / self.scale[idx]
        return np.sqrt(np.sum(diff * diff, axis=1))

    def sample_marginal(self, n, seed):
        rng = stream(seed, "knn-marginal")
        return self.train[rng.integers(0, self.train.shape[0], n)].copy()

    def sample_conditional(self, known, n, seed):
        known = normalize_known(known, self.feature_names)
        rng = stream(seed, "knn")
        if not known:
            return self.train[rng.integers(0, self.train.shape[0], n)].copy()
        dist = self._distances(known)
        nearest = np.lexsort((np.arange(dist.size), dist))[: self.k]
        rows = self.train[nearest[rng.integers(0, self.k, n)]].copy()
        for j, v in known.items():
            rows[:, j] = v
        return rows

    def support_warnings(self, known):
        known = normalize_known(known, self.feature_names)
        if not known:
            return []
        d = float(self._distances(known).min())
        if d > self.warn_distance:
            names = {self.feature_names[i]: v for i, v in known.items()}
            return [f"conditioning values {names} lie {d:.2f} standardized units from the nearest training row"]
        return []


def fit_knn(data, k: int | None = None, feature_names=None, warn_distance: float = 1.0) -> EmpiricalKnnSampler:
    X, names = _matrix_and_names(data, feature_names)
    return EmpiricalKnnSampler(X, names, k, warn_distance)
