"""Black-box model contract, linear/logistic fitting, and propensity models."""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from pwshap.data import Dataset


class SingularDesignError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """IRLS did not converge; usually (quasi-)separation. `feature` names the culprit."""

    def __init__(self, message: str, feature: str | None = None):
        super().__init__(message)
        self.feature = feature


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[None, :] if X.ndim == 1 else X


class PredictiveModel:
    """f(c, t). `predict` takes rows laid out as `feature_names` (covariates, then treatment)."""

    feature_names: tuple[str, ...] = ()
    sup_norm_bound: float | None = None

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, X) -> np.ndarray:
        return self.predict(X)

    def predict_one(self, x) -> float:
        return float(self.predict(_as_2d(x))[0])


class FunctionModel(PredictiveModel):
    """Wrap a vectorised callable X -> y."""

    def __init__(self, feature_names: Sequence[str], fn: Callable[[np.ndarray], np.ndarray],
                 sup_norm_bound: float | None = None, name: str = "function"):
        self.feature_names = tuple(feature_names)
        self.fn = fn
        self.sup_norm_bound = sup_norm_bound
        self.name = name

    def predict(self, X) -> np.ndarray:
        X = _as_2d(X)
        out = np.asarray(self.fn(X), dtype=float)
        return np.broadcast_to(out, (X.shape[0],)).astype(float, copy=True)

    def __repr__(self):
        return f"FunctionModel({self.name})"


def _term_name(term) -> str:
    return "*".join(term) if term else "intercept"


def design_matrix(X: np.ndarray, names: Sequence[str], terms) -> np.ndarray:
    X = _as_2d(X)
    pos = {n: i for i, n in enumerate(names)}
    cols = []
    for term in terms:
        col = np.ones(X.shape[0])
        for name in term:
            col = col * X[:, pos[name]]
        cols.append(col)
    return np.column_stack(cols)


def polynomial_terms(names: Sequence[str], binary: Sequence[bool], treatment: str | None = None,
                     with_interactions: bool = False, degree: int = 1) -> list[tuple[str, ...]]:
    """Intercept, main effects, then products.

    degree 2 adds every pairwise product and squares of non-binary columns
    (squaring a 0/1 column only duplicates it). with_interactions adds T*C_i.
    """
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    terms = [()] + [(n,) for n in names]
    if degree == 2:
        for i, a in enumerate(names):
            for j in range(i, len(names)):
                b = names[j]
                if a == b and binary[i]:
                    continue
                terms.append((a, b))
    elif with_interactions:
        if treatment is None:
            raise ValueError("with_interactions needs the treatment name")
        terms += [(treatment, n) for n in names if n != treatment]
    return terms


class LinearInteractionModel(PredictiveModel):
    def __init__(self, feature_names: Sequence[str], intercept: float = 0.0, main: dict | None = None,
                 interactions: dict | None = None, sup_norm_bound: float | None = None,
                 rss: float | None = None):
        self.feature_names = tuple(feature_names)
        self.intercept = float(intercept)
        self.main = {k: float(v) for k, v in (main or {}).items()}
        self.interactions = {tuple(k): float(v) for k, v in (interactions or {}).items()}
        for name in list(self.main) + [n for pair in self.interactions for n in pair]:
            if name not in self.feature_names:
                raise ValueError(f"coefficient for unknown feature {name!r}")
        self.sup_norm_bound = sup_norm_bound
        self.rss = rss
        pos = {n: i for i, n in enumerate(self.feature_names)}
        self._main_idx = np.array([pos[k] for k in self.main], dtype=int)
        self._main_coef = np.array(list(self.main.values()), dtype=float)
        self._pairs = [(pos[a], pos[b], c) for (a, b), c in self.interactions.items()]

    def predict(self, X) -> np.ndarray:
        X = _as_2d(X)
        out = np.full(X.shape[0], self.intercept)
        if self._main_idx.size:
            out = out + X[:, self._main_idx] @ self._main_coef
        for i, j, c in self._pairs:
            out = out + c * X[:, i] * X[:, j]
        return out

    def scaled(self, a: float) -> "LinearInteractionModel":
        return LinearInteractionModel(self.feature_names, a * self.intercept,
                                      {k: a * v for k, v in self.main.items()},
                                      {k: a * v for k, v in self.interactions.items()})

    def to_dict(self) -> dict:
        return {
            "type": "linear",
            "feature_order": list(self.feature_names),
            "intercept": self.intercept,
            "main": dict(self.main),
            "interactions": {_term_name(k): v for k, v in self.interactions.items()},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LinearInteractionModel":
        inter = {tuple(k.split("*")): v for k, v in raw.get("interactions", {}).items()}
        return cls(raw["feature_order"], raw.get("intercept", 0.0), raw.get("main", {}), inter)

    def __repr__(self):
        return f"LinearInteractionModel(intercept={self.intercept}, main={self.main}, interactions={self.interactions})"


def _binary_columns(X: np.ndarray) -> list[bool]:
    return [bool(np.all((X[:, j] == 0) | (X[:, j] == 1))) for j in range(X.shape[1])]


def fit_linear(data: Dataset, with_interactions: bool = False, degree: int = 1,
               ridge: float | None = 1e-8) -> LinearInteractionModel:
    """Least squares on main effects (+ T*C_i, or all degree-2 terms).

    Falls back to a tiny ridge penalty when the design is rank deficient;
    pass ridge=None to get a SingularDesignError instead.
    """
    if data.y is None:
        raise ValueError("dataset has no outcome column")
    return fit_linear_xy(data.X, data.y, data.feature_names, treatment=data.treatment,
                         with_interactions=with_interactions, degree=degree, ridge=ridge)


def fit_linear_xy(X, y, names, treatment=None, with_interactions=False, degree=1, ridge=1e-8):
    X = _as_2d(X)
    y = np.asarray(y, dtype=float)
    terms = polynomial_terms(list(names), _binary_columns(X), treatment, with_interactions, degree)
    A = design_matrix(X, names, terms)
    n, p = A.shape
    if n <= p:
        raise SingularDesignError(f"need more rows than parameters ({n} <= {p})")
    rank = np.linalg.matrix_rank(A)
    if rank == p:
        coef = np.linalg.lstsq(A, y, rcond=None)[0]
    elif ridge is None:
        raise SingularDesignError(f"design matrix has rank {rank} < {p} and ridge fallback is disabled")
    else:
        penalty = ridge * np.eye(p)
        penalty[0, 0] = 0.0  # leave the intercept unpenalised
        coef = np.linalg.solve(A.T @ A + penalty, A.T @ y)
    rss = float(np.sum((y - A @ coef) ** 2))
    main, inter = {}, {}
    for term, c in zip(terms[1:], coef[1:]):
        if len(term) == 1:
            main[term[0]] = float(c)
        else:
            inter[term] = float(c)
    return LinearInteractionModel(names, float(coef[0]), main, inter, rss=rss)


def clip_propensity(p, clip_epsilon: float):
    if not 0.0 < clip_epsilon < 0.5:
        raise ValueError("clip_epsilon must lie in (0, 0.5)")
    arr = np.asarray(p, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("probabilities must lie in [0, 1]")
    out = np.minimum(np.maximum(arr, clip_epsilon), 1.0 - clip_epsilon)
    return float(out) if out.ndim == 0 else out


class PropensityModel:
    """pi(c) = P(T=1 | C=c) on covariate rows."""

    clip_epsilon: float = 0.01
    covariate_names: tuple[str, ...] = ()

    def propensity(self, C) -> np.ndarray:
        raise NotImplementedError

    def clipped(self, C) -> np.ndarray:
        return clip_propensity(self.propensity(C), self.clip_epsilon)

    def marginal(self, known: dict[int, float]) -> float | None:
        """Closed-form P(T=1 | C_S = c_S) if the model knows it, else None."""
        return None


class ConstantPropensity(PropensityModel):
    def __init__(self, p: float, covariate_names=(), clip_epsilon: float = 0.01):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must be a probability")
        self.p = float(p)
        self.covariate_names = tuple(covariate_names)
        self.clip_epsilon = clip_epsilon

    def propensity(self, C) -> np.ndarray:
        return np.full(_as_2d(C).shape[0], self.p)

    def marginal(self, known):
        return self.p


class LogisticModel(PredictiveModel, PropensityModel):
    """sigmoid(design(x) . coef). Serves as a propensity model or as an outcome model with logit link."""

    def __init__(self, feature_names, terms, coef, clip_epsilon: float = 0.01,
                 loglik_history=(), n_iter: int = 0):
        self.feature_names = tuple(feature_names)
        self.covariate_names = self.feature_names
        self.terms = [tuple(t) for t in terms]
        self.coef = np.asarray(coef, dtype=float)
        self.clip_epsilon = clip_epsilon
        self.loglik_history = tuple(loglik_history)
        self.n_iter = n_iter
        self.sup_norm_bound = 1.0

    def linear_predictor(self, X) -> np.ndarray:
        return design_matrix(_as_2d(X), self.feature_names, self.terms) @ self.coef

    def predict(self, X) -> np.ndarray:
        eta = self.linear_predictor(X)
        return 0.5 * (1.0 + np.tanh(0.5 * eta))

    def propensity(self, C) -> np.ndarray:
        return self.predict(C)

    def to_dict(self) -> dict:
        return {
            "type": "logistic",
            "feature_order": list(self.feature_names),
            "terms": [_term_name(t) for t in self.terms],
            "coefficients": [float(c) for c in self.coef],
            "iterations": self.n_iter,
        }


def _loglik(A, y, beta) -> float:
    eta = A @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _separating_feature(X, y, names) -> str | None:
    for j, name in enumerate(names):
        x0, x1 = X[y == 0, j], X[y == 1, j]
        if x0.max() < x1.min() or x1.max() < x0.min():
            return name
    return None


def fit_logistic(data, target=None, feature_names=None, with_interactions: bool = False,
                 treatment: str | None = None, degree: int = 1, clip_epsilon: float = 0.01,
                 tol: float = 1e-8, max_iter: int = 100) -> LogisticModel:
    """IRLS with step-halving, so the log-likelihood never decreases.

    `data` is either a Dataset (fits the propensity T ~ C) or a feature matrix
    with `target` and `feature_names`.
    """
    if isinstance(data, Dataset):
        X, y, names = data.C, data.t, data.covariates
    else:
        X, y, names = _as_2d(data), np.asarray(target, dtype=float), tuple(feature_names)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic target must be 0/1")
    if y.min() == y.max():
        raise ValueError(f"only one class present in the target (all {int(y[0])})")
    sep = _separating_feature(X, y, names)
    if sep is not None:
        raise ConvergenceError(f"perfect separation: feature {sep!r} splits the two classes", sep)
    terms = polynomial_terms(list(names), _binary_columns(X), treatment, with_interactions, degree)
    A = design_matrix(X, names, terms)
    beta = np.zeros(A.shape[1])
    ll = _loglik(A, y, beta)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = A @ beta
        p = 0.5 * (1.0 + np.tanh(0.5 * eta))
        W = p * (1.0 - p)
        grad = A.T @ (y - p)
        H = A.T @ (A * W[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            ll_new = _loglik(A, y, cand)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            scale *= 0.5
        else:
            cand, ll_new = beta, ll
        assert ll_new >= ll - 1e-9 * max(1.0, abs(ll)), "IRLS log-likelihood decreased"
        delta = np.max(np.abs(cand - beta))
        beta, ll = cand, max(ll_new, ll)
        history.append(ll)
        if delta < tol:
            converged = True
            break
    if not converged:
        sd = A.std(axis=0)
        sd[0] = 0.0
        worst = terms[int(np.argmax(np.abs(beta) * sd))]
        raise ConvergenceError(
            f"IRLS did not converge in {max_iter} iterations (likely separation along {_term_name(worst)!r})",
            _term_name(worst))
    return LogisticModel(names, terms, beta, clip_epsilon, history, it)


def sup_norm_over_box(model: PredictiveModel, box: dict, points_per_axis: int = 5) -> float:
    """max |f| on a grid over the declared domain box (exact at the corners for multilinear f)."""
    axes = []
    for name in model.feature_names:
        lo, hi = box[name]
        axes.append(np.unique(np.linspace(lo, hi, points_per_axis)) if hi > lo else np.array([lo]))
    grid = np.array(list(itertools.product(*axes)), dtype=float)
    return float(np.max(np.abs(model.predict(grid))))
