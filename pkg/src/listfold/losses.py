"""Listwise surrogate losses and their analytic score gradients.

Every loss takes the score vector *in truth order*: position 0 holds the
score of the item with the highest realized return, position 1 the next,
and so on. Values and gradients are returned together because training
evaluates both on every mini batch and they share intermediates.

Families
--------
listfold   stepwise long-short pair selection; even list length required.
listmle    top-down sequential selection (Plackett-Luce likelihood).
naive_pt   two truncated listmle factors, one on the scores and one on the
           negated scores of the reversed list; even length required.
mse        plain mean squared error against realized returns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LINEAR_GUARD",
    "Transform",
    "LossSpec",
    "LossResult",
    "exponential",
    "sigmoid",
    "linear",
    "make_transform",
    "listmle_loss",
    "listfold_loss",
    "naive_pt_loss",
    "mse_loss",
    "evaluate_loss",
    "loss_gradient_check",
]

# Floor for the linear transform: psi must stay strictly positive, but a
# linear map is not. Exponential and sigmoid are the supported research
# paths; linear is a guarded convenience.
LINEAR_GUARD = 1e-12

_FAMILIES = ("listfold", "listmle", "naive_pt", "mse")
_KINDS = ("exponential", "sigmoid", "linear")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class Transform:
    """Positive-valued map psi applied inside the listwise likelihoods."""

    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown transform kind: {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            return np.exp(x)
        if self.kind == "sigmoid":
            return _stable_sigmoid(x)
        return np.maximum(x, LINEAR_GUARD)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            return np.exp(x)
        if self.kind == "sigmoid":
            s = _stable_sigmoid(x)
            return s * (1.0 - s)
        # Subgradient 0 on the clamped branch.
        return np.where(x > LINEAR_GUARD, 1.0, 0.0)


def exponential() -> Transform:
    return Transform("exponential")


def sigmoid() -> Transform:
    return Transform("sigmoid")


def linear() -> Transform:
    return Transform("linear")


_ALIASES = {
    "exp": "exponential",
    "exponential": "exponential",
    "sgm": "sigmoid",
    "sigmoid": "sigmoid",
    "lin": "linear",
    "linear": "linear",
}


def make_transform(name: str) -> Transform:
    try:
        return Transform(_ALIASES[name.lower()])
    except KeyError:
        raise ValueError(f"unknown transform name: {name!r}") from None


@dataclass(frozen=True)
class LossSpec:
    """Choice of surrogate loss family plus its transformation function.

    The transform is ignored for the mse family. ListFold and naive_pt
    require an even list length at evaluation time; callers that may see
    odd universes are responsible for dropping the median-ranked item.
    """

    family: str
    transform: Transform | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown loss family: {self.family!r}")
        if self.family != "mse" and self.transform is None:
            object.__setattr__(self, "transform", exponential())


@dataclass(frozen=True)
class LossResult:
    value: float
    gradient: np.ndarray


def _check_scores(scores, even: bool = False, min_len: int = 1) -> np.ndarray:
    f = np.asarray(scores, dtype=float).ravel()
    if f.size < min_len:
        raise ValueError(f"score vector too short: {f.size} < {min_len}")
    if not np.all(np.isfinite(f)):
        raise ValueError("scores must be finite")
    if even and f.size % 2 != 0:
        raise ValueError(f"even list length required, got {f.size}")
    return f


def _listmle_prefix(f: np.ndarray, transform: Transform, stages: int):
    """Value and gradient of the first `stages` top-down selection terms."""
    n = f.size
    stages = min(stages, n)
    grad = np.zeros(n)
    if transform.kind == "exponential":
        # Suffix log-sum-exps, accumulated from the tail for stability.
        lse = np.logaddexp.accumulate(f[::-1])[::-1]
        value = float(np.sum(lse[:stages] - f[:stages]))
        for i in range(stages):
            grad[i:] += np.exp(f[i:] - lse[i])
        grad[:stages] -= 1.0
        return value, grad
    psi = transform(f)
    dpsi = transform.deriv(f)
    suffix = np.cumsum(psi[::-1])[::-1]
    value = float(np.sum(np.log(suffix[:stages]) - np.log(psi[:stages])))
    inv = 1.0 / suffix[:stages]
    cum = np.cumsum(inv)
    # position j accumulates 1/S_i for every stage i <= j that it appears in
    upto = np.minimum(np.arange(n), stages - 1)
    grad = dpsi * cum[upto]
    grad[:stages] -= dpsi[:stages] / psi[:stages]
    return value, grad


def listmle_loss(scores_in_truth_order, transform: Transform) -> LossResult:
    """Negative log Plackett-Luce likelihood of the truth ordering.

    value = -sum_i [log psi(f_i) - log sum_{k>=i} psi(f_k)], evaluated with
    a log-sum-exp path when the transform is exponential.
    """
    f = _check_scores(scores_in_truth_order)
    value, grad = _listmle_prefix(f, transform, f.size)
    return LossResult(value, grad)


def listfold_loss(scores_in_truth_order, transform: Transform) -> LossResult:
    """Stepwise pair-selection loss over a list of even length 2n.

    Stage i (1-based) selects the ordered pair (position i, position
    2n+1-i) out of all ordered pairs of positions still in the window
    [i, 2n+1-i]:

        value = -sum_i [log psi(f_i - f_{2n+1-i})
                        - log sum_{i<=u!=v<=2n+1-i} psi(f_u - f_v)]

    Depends on score differences only, hence shift invariant for any
    transform.
    """
    f = _check_scores(scores_in_truth_order, even=True, min_len=2)
    n2 = f.size
    n = n2 // 2
    value = 0.0
    grad = np.zeros(n2)
    for s in range(n):
        lo, hi = s, n2 - 1 - s
        w = f[lo : hi + 1]
        m = w.size
        diffs = w[:, None] - w[None, :]
        diag = np.eye(m, dtype=bool)
        d = w[0] - w[-1]
        if transform.kind == "exponential":
            mx = float(np.abs(diffs).max())
            q = np.exp(diffs - mx)
            q[diag] = 0.0
            denom = q.sum()
            log_d = mx + np.log(denom)
            q /= denom
            value += log_d - d
            gw = q.sum(axis=1) - q.sum(axis=0)
            # numerator term: d log psi(d) / df = +1 at the pair head, -1 at the tail
            gw[0] -= 1.0
            gw[-1] += 1.0
        else:
            p = transform(diffs)
            dp = transform.deriv(diffs)
            p[diag] = 0.0
            dp[diag] = 0.0
            denom = p.sum()
            value += float(np.log(denom) - np.log(transform(d)))
            gw = (dp.sum(axis=1) - dp.sum(axis=0)) / denom
            r = float(transform.deriv(d) / transform(d))
            gw[0] -= r
            gw[-1] += r
        grad[lo : hi + 1] += gw
    return LossResult(float(value), grad)


def naive_pt_loss(scores_in_truth_order, transform: Transform) -> LossResult:
    """Two-sided baseline: truncated listmle on the scores plus truncated
    listmle on the negated scores of the reversed list (n stages each).

    Unlike listfold this product does not define a probability on the
    permutation space; it is kept as the naive point of comparison.
    """
    f = _check_scores(scores_in_truth_order, even=True, min_len=2)
    n = f.size // 2
    v1, g1 = _listmle_prefix(f, transform, n)
    rev_neg = -f[::-1]
    v2, g2 = _listmle_prefix(rev_neg, transform, n)
    # d(rev_neg_u)/d(f_j) = -1 at u = 2n-1-j
    grad = g1 - g2[::-1]
    return LossResult(v1 + v2, grad)


def mse_loss(scores, returns) -> LossResult:
    f = np.asarray(scores, dtype=float).ravel()
    r = np.asarray(returns, dtype=float).ravel()
    if f.size != r.size:
        raise ValueError(f"length mismatch: {f.size} scores vs {r.size} returns")
    diff = f - r
    value = float(np.mean(diff * diff))
    grad = (2.0 / f.size) * diff
    return LossResult(value, grad)


def evaluate_loss(spec: LossSpec, scores_in_truth_order, returns_in_truth_order=None) -> LossResult:
    """Dispatch on spec.family. mse needs the aligned returns vector."""
    if spec.family == "listfold":
        return listfold_loss(scores_in_truth_order, spec.transform)
    if spec.family == "listmle":
        return listmle_loss(scores_in_truth_order, spec.transform)
    if spec.family == "naive_pt":
        return naive_pt_loss(scores_in_truth_order, spec.transform)
    if returns_in_truth_order is None:
        raise ValueError("mse loss needs realized returns")
    return mse_loss(scores_in_truth_order, returns_in_truth_order)


def loss_gradient_check(spec: LossSpec, scores, step: float = 1e-5, returns=None) -> float:
    """Max relative error between the analytic gradient and central finite
    differences of the loss value, component by component."""
    if step <= 0:
        raise ValueError("step must be positive")
    f = np.asarray(scores, dtype=float).ravel()
    if spec.family == "mse" and returns is None:
        returns = np.zeros_like(f)
    res = evaluate_loss(spec, f, returns)
    worst = 0.0
    for j in range(f.size):
        up = f.copy()
        dn = f.copy()
        up[j] += step
        dn[j] -= step
        fd = (evaluate_loss(spec, up, returns).value - evaluate_loss(spec, dn, returns).value) / (2 * step)
        ga = res.gradient[j]
        err = abs(ga - fd) / max(1.0, abs(ga), abs(fd))
        worst = max(worst, err)
    return worst
