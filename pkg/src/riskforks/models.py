"""The model-family fork: regularized logistic regression, CART, random forest.

All three are implemented here directly so the fits are bit-deterministic
functions of (data, spec, seed) with no library-version drift in the scores.
Logistic regression uses IRLS with step-halving on penalized-deviance
increase; trees grow greedily on Gini impurity with midpoint thresholds; the
forest averages seeded-bootstrap trees in tree-index order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from riskforks.errors import DegenerateDesign, SingleClassError, TooFewTrainingRows

MIN_ROWS = 50
#: logistic scores are clipped into the open unit interval at this margin
SCORE_EPS = 1e-9
ILL_CONDITIONED_FALLBACK_L2 = 1e-6

MODEL_FAMILIES = ("logistic", "tree", "forest")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    l2: float = 0.0  # logistic ridge strength; 0 = unpenalized
    max_depth: int = 5
    min_leaf: int = 5
    n_trees: int = 100
    features_per_split: int | None = None  # forest mtry; None = ceil(sqrt(p))
    class_weight: tuple[float, float] = (1.0, 1.0)  # (negative, positive) in Gini

    def __post_init__(self):
        if self.family not in MODEL_FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        if self.l2 < 0:
            raise ValueError("l2 strength must be >= 0")
        if self.max_depth < 1 or self.min_leaf < 1 or self.n_trees < 1:
            raise ValueError("tree/forest sizes must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")
        if any(w <= 0 for w in self.class_weight):
            raise ValueError("class weights must be positive")


# --------------------------------------------------------------------------
# logistic regression (IRLS)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticFit:
    intercept: float
    coef: np.ndarray
    deviance: float
    converged: bool
    n_iter: int
    fallback_l2: float | None = None


def penalized_loglik(intercept: float, coef: np.ndarray, X: np.ndarray,
                     y: np.ndarray, l2: float) -> float:
    """Bernoulli log-likelihood minus the ridge penalty (intercept excluded)."""
    eta = intercept + X @ coef
    # y*log(p) + (1-y)*log(1-p) == y*eta - softplus(eta), stable for large |eta|
    ll = float((y * eta).sum() - np.logaddexp(0.0, eta).sum())
    return ll - 0.5 * l2 * float(coef @ coef)


def penalized_grad(intercept: float, coef: np.ndarray, X: np.ndarray,
                   y: np.ndarray, l2: float) -> np.ndarray:
    """Gradient of penalized_loglik w.r.t. [intercept, coef...]."""
    p = _sigmoid(intercept + X @ coef)
    resid = y - p
    return np.concatenate([[resid.sum()], X.T @ resid - l2 * coef])


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 100,
    init: np.ndarray | None = None,
) -> LogisticFit:
    """IRLS to gradient max-norm <= tol or max_iter sweeps.

    Step-halving guards against deviance increases. A singular normal-equation
    solve falls back to a tiny ridge (recorded on the fit) instead of failing.
    init warm-starts the sweep with [intercept, coef...].
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    Xb = np.column_stack([np.ones(n), X]) if p else np.ones((n, 1))
    beta = np.zeros(p + 1) if init is None else np.asarray(init, dtype=float).copy()
    fallback: float | None = None
    diag = np.zeros(p + 1)
    diag[1:] = l2

    def objective(b):
        return -2.0 * penalized_loglik(b[0], b[1:], X, y, l2)

    current = objective(beta)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        eta = Xb @ beta
        prob = _sigmoid(eta)
        grad = np.concatenate([[np.sum(y - prob)], X.T @ (y - prob) - l2 * beta[1:]])
        if np.max(np.abs(grad)) <= tol:
            converged = True
            break
        w = np.clip(prob * (1.0 - prob), 1e-10, None)
        H = (Xb * w[:, None]).T @ Xb + np.diag(diag)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            if fallback is None and l2 == 0.0:
                fallback = ILL_CONDITIONED_FALLBACK_L2
                diag[1:] += fallback
                H = (Xb * w[:, None]).T @ Xb + np.diag(diag)
                step = np.linalg.solve(H, grad)
            else:
                raise DegenerateDesign("logistic design is singular even with ridge fallback")
        candidate = beta + step
        cand_obj = objective(candidate)
        halvings = 0
        while cand_obj > current + 1e-12 and halvings < 30:
            step *= 0.5
            candidate = beta + step
            cand_obj = objective(candidate)
            halvings += 1
        beta = candidate
        current = cand_obj
    return LogisticFit(
        intercept=float(beta[0]),
        coef=beta[1:].copy(),
        deviance=float(current),
        converged=converged,
        n_iter=it,
        fallback_l2=fallback,
    )


@dataclass(frozen=True)
class LogisticModel:
    intercept: float
    coef: np.ndarray


# --------------------------------------------------------------------------
# classification tree (Gini, midpoint thresholds)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeModel:
    """Flattened tree: feature[i] == -1 marks a leaf with probability prob[i]."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    prob: np.ndarray


class _TreeBuilder:
    def __init__(self, X, y, max_depth, min_leaf, class_weight, mtry, rng):
        self.X, self.y = X, y
        self.max_depth, self.min_leaf = max_depth, min_leaf
        self.w0, self.w1 = class_weight
        self.mtry, self.rng = mtry, rng
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.prob: list[float] = []

    def _leaf(self, rows) -> int:
        pos = int(self.y[rows].sum())
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        # Laplace add-one smoothing keeps leaf probabilities strictly inside (0,1)
        self.prob.append((pos + 1.0) / (rows.size + 2.0))
        return node

    def _node_gini(self, pos, neg) -> float:
        wp, wn = self.w1 * pos, self.w0 * neg
        tot = wp + wn
        if tot == 0:
            return 0.0
        return 1.0 - (wp / tot) ** 2 - (wn / tot) ** 2

    def _best_split(self, rows):
        m = rows.size
        y = self.y[rows]
        pos_total = int(y.sum())
        parent = self._node_gini(pos_total, m - pos_total)
        if parent <= 0.0:
            return None
        p = self.X.shape[1]
        if self.mtry is None or self.mtry >= p:
            feats = range(p)
        else:
            feats = np.sort(self.rng.choice(p, size=self.mtry, replace=False))
        best = None  # (score, feat, threshold)
        for f in feats:
            x = self.X[rows, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            ys = y[order]
            boundaries = np.nonzero(xs[1:] > xs[:-1])[0]
            if boundaries.size == 0:
                continue
            cpos = np.cumsum(ys)
            lp = cpos[boundaries]
            lc = boundaries + 1.0
            ln = lc - lp
            rp = pos_total - lp
            rn = (m - lc) - rp
            ok = (lc >= self.min_leaf) & ((m - lc) >= self.min_leaf)
            if not ok.any():
                continue
            wl = self.w1 * lp + self.w0 * ln
            wr = self.w1 * rp + self.w0 * rn
            with np.errstate(divide="ignore", invalid="ignore"):
                gini_l = 1.0 - (self.w1 * lp / wl) ** 2 - (self.w0 * ln / wl) ** 2
                gini_r = 1.0 - (self.w1 * rp / wr) ** 2 - (self.w0 * rn / wr) ** 2
            score = np.where(ok, (wl * gini_l + wr * gini_r) / (wl + wr), np.inf)
            j = int(np.argmin(score))
            if best is None or score[j] < best[0] - 1e-15:
                cut = boundaries[j]
                best = (float(score[j]), int(f), float(0.5 * (xs[cut] + xs[cut + 1])))
        if best is None or parent - best[0] <= 1e-12:
            return None
        return best[1], best[2]

    def build(self, rows, depth) -> int:
        m = rows.size
        pos = int(self.y[rows].sum())
        if depth >= self.max_depth or pos == 0 or pos == m or m < 2 * self.min_leaf:
            return self._leaf(rows)
        split = self._best_split(rows)
        if split is None:
            return self._leaf(rows)
        f, thr = split
        node = len(self.feature)
        self.feature.append(f)
        self.threshold.append(thr)
        self.left.append(-1)
        self.right.append(-1)
        self.prob.append(0.0)
        mask = self.X[rows, f] <= thr
        self.left[node] = self.build(rows[mask], depth + 1)
        self.right[node] = self.build(rows[~mask], depth + 1)
        return node

    def model(self) -> TreeModel:
        return TreeModel(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=float),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            prob=np.array(self.prob, dtype=float),
        )


def _fit_tree(X, y, spec: ModelSpec, mtry, rng) -> TreeModel:
    builder = _TreeBuilder(X, y, spec.max_depth, spec.min_leaf, spec.class_weight, mtry, rng)
    builder.build(np.arange(X.shape[0]), 0)
    return builder.model()


def _tree_predict(tree: TreeModel, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if tree.feature[node] < 0:
            out[idx] = tree.prob[node]
            continue
        mask = X[idx, tree.feature[node]] <= tree.threshold[node]
        stack.append((int(tree.left[node]), idx[mask]))
        stack.append((int(tree.right[node]), idx[~mask]))
    return out


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeModel, ...]


# --------------------------------------------------------------------------
# unified fit / predict
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FittedModel:
    family: str
    model: object
    n_columns: int
    metadata: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


def fit_model(X: np.ndarray, y: np.ndarray, spec: ModelSpec, seed: int,
              metadata: dict | None = None, min_rows: int = MIN_ROWS) -> FittedModel:
    """Fit one family deterministically; see module docstring for the rules."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < min_rows:
        raise TooFewTrainingRows(f"{len(y)} training rows (< {min_rows})")
    if y.min() == y.max():
        raise SingleClassError("training labels contain a single class")
    warnings: list[str] = []
    if spec.family == "logistic":
        fit = fit_logistic(X, y, l2=spec.l2)
        if fit.fallback_l2 is not None:
            warnings.append(
                f"logistic design ill-conditioned; refit with L2={fit.fallback_l2:g}"
            )
        if not fit.converged:
            warnings.append(f"IRLS stopped at {fit.n_iter} iterations above tolerance")
        model = LogisticModel(fit.intercept, fit.coef)
    elif spec.family == "tree":
        model = _fit_tree(X, y, spec, mtry=None, rng=None)
    else:
        p = X.shape[1]
        mtry = spec.features_per_split or max(1, int(np.ceil(np.sqrt(p))))
        if mtry > p:
            warnings.append(f"features_per_split {mtry} clamped to {p} columns")
            mtry = p
        trees = []
        n = X.shape[0]
        for t in range(spec.n_trees):
            rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, t])
            rows = rng.integers(0, n, size=n)
            trees.append(_fit_tree(X[rows], y[rows], spec, mtry=mtry, rng=rng))
        model = ForestModel(tuple(trees))
    return FittedModel(spec.family, model, X.shape[1], dict(metadata or {}), tuple(warnings))


def predict_proba(fitted: FittedModel, X: np.ndarray) -> np.ndarray:
    """One probability per row, strictly inside (0,1)."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != fitted.n_columns:
        raise DegenerateDesign(
            f"design has {X.shape[1]} columns, model expects {fitted.n_columns}"
        )
    if fitted.family == "logistic":
        m: LogisticModel = fitted.model
        eta = m.intercept + (X @ m.coef if fitted.n_columns else 0.0)
        return np.clip(_sigmoid(np.asarray(eta, dtype=float)), SCORE_EPS, 1.0 - SCORE_EPS)
    if fitted.family == "tree":
        return _tree_predict(fitted.model, X)
    total = np.zeros(X.shape[0])
    for tree in fitted.model.trees:  # combined in tree-index order
        total += _tree_predict(tree, X)
    return total / len(fitted.model.trees)
