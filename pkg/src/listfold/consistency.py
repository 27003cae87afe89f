"""Executable checks of the loss-consistency claims: brute-force permutation
enumeration, minimizer classification, counterexample search, and Monte
Carlo samplers for the two generative stories behind the losses.

The enumeration cap is list length 8 (8! = 40320 evaluations), which covers
half-lengths n <= 4 while keeping every report under a second. Minimizers
are grouped within an absolute tolerance of 1e-9 so genuinely tied sets
(the sigmoid case produces them) come out as sets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .losses import LossSpec, Transform, evaluate_loss, listfold_loss

__all__ = [
    "ENUMERATION_CAP",
    "MINIMIZER_TOL",
    "EnumerationReport",
    "SamplerSpec",
    "TheoremReport",
    "Witness",
    "SwapRecord",
    "enumerate_losses",
    "theorem1_minimizer_family",
    "verify_theorem1",
    "verify_theorem2",
    "counterexample_search",
    "order_sensitivity_probe",
    "sample_vase",
    "sample_plank_dart",
    "vase_probability",
    "plank_probability",
    "frequency_zscores",
]

ENUMERATION_CAP = 8
MINIMIZER_TOL = 1e-9


def _as_scores(scores) -> np.ndarray:
    f = np.asarray(scores, dtype=float).ravel()
    if f.size > ENUMERATION_CAP:
        raise ValueError(f"enumeration capped at {ENUMERATION_CAP} items, got {f.size}")
    if f.size < 2:
        raise ValueError("need at least two scores")
    if not np.all(np.isfinite(f)):
        raise ValueError("scores must be finite")
    return f


@dataclass(frozen=True)
class EnumerationReport:
    """Losses over every permutation of a score multiset.

    Entries are keyed by the value tuple, each with its loss and the number
    of index permutations producing it (greater than 1 only under ties).
    classification is one of descending-unique, binary-class-set, other.
    """

    scores: tuple[float, ...]
    family: str
    transform: str | None
    permutations: tuple[tuple[float, ...], ...]
    losses: tuple[float, ...]
    multiplicities: tuple[int, ...]
    minimizers: frozenset[tuple[float, ...]]
    min_value: float
    classification: str

    def loss_of(self, perm) -> float:
        return self.losses[self.permutations.index(tuple(perm))]

    def probability_mass(self) -> float:
        """sum of multiplicity * exp(-loss): 1 for the likelihood losses."""
        return float(
            sum(m * math.exp(-v) for m, v in zip(self.multiplicities, self.losses))
        )


def _classify(scores: np.ndarray, minimizers: frozenset) -> str:
    descending = tuple(np.sort(scores)[::-1])
    if minimizers == frozenset({descending}):
        return "descending-unique"
    if scores.size % 2 == 0:
        top = tuple(sorted(descending[: scores.size // 2]))
        if all(tuple(sorted(p[: scores.size // 2])) == top for p in minimizers):
            return "binary-class-set"
    return "other"


def enumerate_losses(scores, spec: LossSpec) -> EnumerationReport:
    """Evaluate the loss on every permutation of the multiset and group the
    minimizers within MINIMIZER_TOL.

    For the mse family the targets are the multiset sorted descending, so
    every family is minimized by a correct ranking. Ties in the multiset
    collapse to one entry with a multiplicity.
    """
    f = _as_scores(scores)
    if spec.family in ("listfold", "naive_pt") and f.size % 2 != 0:
        raise ValueError(f"{spec.family} requires an even list length")
    targets = np.sort(f)[::-1]
    seen: dict[tuple[float, ...], int] = {}
    for perm in itertools.permutations(f.tolist()):
        seen[perm] = seen.get(perm, 0) + 1
    perms = tuple(sorted(seen))
    losses = []
    for perm in perms:
        arr = np.asarray(perm)
        losses.append(evaluate_loss(spec, arr, targets).value)
    losses_arr = np.asarray(losses)
    min_value = float(losses_arr.min())
    minimizers = frozenset(
        perm for perm, v in zip(perms, losses_arr) if v <= min_value + MINIMIZER_TOL
    )
    return EnumerationReport(
        scores=tuple(f.tolist()),
        family=spec.family,
        transform=None if spec.transform is None else spec.transform.kind,
        permutations=perms,
        losses=tuple(float(v) for v in losses_arr),
        multiplicities=tuple(seen[p] for p in perms),
        minimizers=minimizers,
        min_value=min_value,
        classification=_classify(f, minimizers),
    )


def theorem1_minimizer_family(scores) -> frozenset[tuple[float, ...]]:
    """Predicted sigmoid minimizer set: with the 2n scores sorted descending
    as s_1 >= ... >= s_2n, the pairs (s_j, s_{n+j}) are each placed larger
    first at some mirrored position pair (i, 2n+1-i); the assignment of
    pairs to position pairs is free, giving n! members."""
    s = np.sort(np.asarray(scores, dtype=float))[::-1].tolist()
    n = len(s) // 2
    pairs = [(s[j], s[n + j]) for j in range(n)]
    family = set()
    for sigma in itertools.permutations(range(n)):
        seq = [0.0] * len(s)
        for slot, j in enumerate(sigma):
            seq[slot] = pairs[j][0]
            seq[len(s) - 1 - slot] = pairs[j][1]
        family.add(tuple(seq))
    return frozenset(family)


@dataclass
class TheoremReport:
    name: str
    seed: int
    trials_per_n: int
    n_values: tuple[int, ...]
    violations: list = field(default_factory=list)
    degenerate: int = 0
    trials_run: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [
            f"{self.name}: seed={self.seed} trials_per_n={self.trials_per_n} "
            f"n_values={list(self.n_values)}",
            f"trials_run={self.trials_run} degenerate={self.degenerate} "
            f"violations={len(self.violations)}",
        ]
        for v in self.violations:
            lines.append(f"  violation: {v}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _draw_distinct(rng: np.random.Generator, count: int, min_gap: float = 1e-6) -> np.ndarray:
    while True:
        f = rng.uniform(-3.0, 3.0, size=count)
        if np.min(np.diff(np.sort(f))) > min_gap:
            return f


def verify_theorem1(trials: int, n_range, seed: int) -> TheoremReport:
    """Enumerate sigmoid listfold on random distinct score sets and check
    the minimizer set equals the predicted pairing family exactly.

    Tied inputs enlarge the minimizer set; they are counted as degenerate,
    not as violations.
    """
    n_range = tuple(int(n) for n in n_range)
    if max(n_range) * 2 > ENUMERATION_CAP:
        raise ValueError(f"n values must satisfy 2n <= {ENUMERATION_CAP}")
    spec = LossSpec("listfold", Transform("sigmoid"))
    report = TheoremReport("theorem1-sigmoid", seed, trials, n_range)
    rng = np.random.default_rng(seed)
    for n in n_range:
        for _ in range(trials):
            f = rng.uniform(-3.0, 3.0, size=2 * n)
            report.trials_run += 1
            if np.unique(f).size < f.size:
                report.degenerate += 1
                continue
            enum = enumerate_losses(f, spec)
            predicted = theorem1_minimizer_family(f)
            if enum.minimizers != predicted:
                report.violations.append(
                    {
                        "scores": tuple(f.tolist()),
                        "found": sorted(enum.minimizers),
                        "predicted": sorted(predicted),
                    }
                )
    return report


def _half_respecting_permutations(scores: np.ndarray):
    s = np.sort(scores)[::-1]
    n = s.size // 2
    top, bottom = s[:n], s[n:]
    for pt in itertools.permutations(top.tolist()):
        for pb in itertools.permutations(bottom.tolist()):
            yield pt + pb


def verify_theorem2(trials: int, n_range, seed: int, restricted: bool = True) -> TheoremReport:
    """Check that exponential listfold is minimized by the descending sequence.

    restricted mode enumerates only permutations that keep the top half in
    the top positions (the proven statement) and demands uniqueness;
    unrestricted mode enumerates everything (the conjectured statement).
    All-tied inputs are flagged degenerate.
    """
    n_range = tuple(int(n) for n in n_range)
    if max(n_range) * 2 > ENUMERATION_CAP:
        raise ValueError(f"n values must satisfy 2n <= {ENUMERATION_CAP}")
    transform = Transform("exponential")
    mode = "restricted" if restricted else "unrestricted"
    report = TheoremReport(f"theorem2-exponential-{mode}", seed, trials, n_range)
    rng = np.random.default_rng(seed)
    for n in n_range:
        for _ in range(trials):
            f = rng.uniform(-3.0, 3.0, size=2 * n)
            report.trials_run += 1
            if np.unique(f).size < f.size:
                report.degenerate += 1
                continue
            descending = np.sort(f)[::-1]
            base = listfold_loss(descending, transform).value
            if restricted:
                worst = None
                for perm in _half_respecting_permutations(f):
                    if perm == tuple(descending):
                        continue
                    v = listfold_loss(np.asarray(perm), transform).value
                    if v <= base + MINIMIZER_TOL:
                        worst = (perm, v)
                        break
                if worst is not None:
                    report.violations.append(
                        {"scores": tuple(f.tolist()), "permutation": worst[0],
                         "loss": worst[1], "descending_loss": base}
                    )
            else:
                perms, losses = _listfold_exp_losses_all_perms(f)
                best = losses.min()
                if best < base - MINIMIZER_TOL:
                    j = int(np.argmin(losses))
                    report.violations.append(
                        {"scores": tuple(f.tolist()),
                         "permutation": tuple(perms[j].tolist()),
                         "loss": float(best), "descending_loss": base}
                    )
    return report


_PERM_CACHE: dict[int, np.ndarray] = {}


def _perm_table(m: int) -> np.ndarray:
    if m not in _PERM_CACHE:
        _PERM_CACHE[m] = np.array(list(itertools.permutations(range(m))), dtype=np.intp)
    return _PERM_CACHE[m]


def _listfold_exp_losses_all_perms(scores: np.ndarray):
    """Exponential listfold loss of every permutation at once.

    Peels the stage windows from both ends with running exp sums, so the
    whole table costs O(m! * m). Scores are centered first (the loss is
    shift invariant) and must span less than ~600 to stay inside float64;
    the sampling distributions used here stay far below that.
    """
    f = np.asarray(scores, dtype=float).ravel()
    f = f - f.mean()
    if f.size % 2 != 0:
        raise ValueError("even list length required")
    if np.ptp(f) > 600:
        raise ValueError("score spread too large for the vectorized evaluator")
    m = f.size
    n = m // 2
    table = _perm_table(m)
    vals = f[table]  # (m!, m)
    e_pos = np.exp(vals)
    e_neg = np.exp(-vals)
    sum_pos = e_pos.sum(axis=1)
    sum_neg = e_neg.sum(axis=1)
    loss = np.zeros(table.shape[0])
    remaining = float(m)
    for s in range(n):
        denom = sum_pos * sum_neg - remaining
        loss += np.log(denom) - (vals[:, s] - vals[:, m - 1 - s])
        sum_pos = sum_pos - e_pos[:, s] - e_pos[:, m - 1 - s]
        sum_neg = sum_neg - e_neg[:, s] - e_neg[:, m - 1 - s]
        remaining -= 2.0
    return vals, loss


@dataclass(frozen=True)
class Witness:
    scores: tuple[float, ...]
    permutation: tuple[float, ...]
    loss: float
    descending_loss: float

    @property
    def gap(self) -> float:
        return self.descending_loss - self.loss


_DISTRIBUTIONS = ("uniform", "normal", "clustered", "near-ties")


def _sample_scores(rng: np.random.Generator, size: int, distribution: str) -> np.ndarray:
    if distribution == "uniform":
        return rng.uniform(-5.0, 5.0, size=size)
    if distribution == "normal":
        return rng.normal(0.0, 2.0, size=size)
    if distribution == "clustered":
        centers = rng.normal(0.0, 3.0, size=2)
        return rng.choice(centers, size=size) + rng.normal(0.0, 0.05, size=size)
    if distribution == "near-ties":
        # one extreme straggler against a tight cluster, probing the
        # unresolved small-alpha case
        base = rng.normal(0.0, 0.02, size=size)
        base[0] += rng.choice([-1.0, 1.0]) * rng.uniform(2.0, 8.0)
        return base
    raise ValueError(f"unknown distribution {distribution!r}; pick from {_DISTRIBUTIONS}")


def counterexample_search(budget: int, size: int, distribution: str = "uniform",
                          seed: int = 0, loss_fn=None) -> list[Witness]:
    """Hunt for multisets where descending does not globally minimize the
    exponential listfold loss. Returns every witness found (expected none).

    loss_fn(scores_array) -> float overrides the evaluated loss; injecting a
    broken loss is the harness self-test and must produce witnesses.
    """
    if size % 2 != 0 or size > ENUMERATION_CAP:
        raise ValueError(f"size must be even and <= {ENUMERATION_CAP}")
    rng = np.random.default_rng(seed)
    transform = Transform("exponential")
    witnesses: list[Witness] = []
    for _ in range(budget):
        f = _sample_scores(rng, size, distribution)
        descending = np.sort(f)[::-1]
        if loss_fn is None:
            base = listfold_loss(descending, transform).value
            perms, losses = _listfold_exp_losses_all_perms(f)
            j = int(np.argmin(losses))
            if losses[j] < base - MINIMIZER_TOL:
                # confirm through the reference implementation before reporting
                confirmed = listfold_loss(perms[j], transform).value
                if confirmed < base - MINIMIZER_TOL:
                    witnesses.append(
                        Witness(tuple(f.tolist()), tuple(perms[j].tolist()),
                                float(confirmed), float(base))
                    )
        else:
            base = float(loss_fn(descending))
            for perm in itertools.permutations(f.tolist()):
                v = float(loss_fn(np.asarray(perm)))
                if v < base - MINIMIZER_TOL:
                    witnesses.append(Witness(tuple(f.tolist()), perm, v, base))
                    break
    return witnesses


@dataclass(frozen=True)
class SwapRecord:
    permutation: tuple[float, ...]
    swap: tuple[int, int]
    delta: float


def _discordant_pairs(seq: tuple[float, ...]) -> int:
    return sum(
        1
        for i in range(len(seq))
        for j in range(i + 1, len(seq))
        if seq[i] < seq[j]
    )


def order_sensitivity_probe(scores, spec: LossSpec) -> list[SwapRecord]:
    """Find every transposition that moves a permutation toward the truth
    (strictly fewer discordant pairs) yet *increases* the loss.

    An order-sensitive loss yields an empty list; the exponential listfold
    loss deliberately does not.
    """
    f = _as_scores(scores)
    if spec.family in ("listfold", "naive_pt") and f.size % 2 != 0:
        raise ValueError(f"{spec.family} requires an even list length")
    targets = np.sort(f)[::-1]
    records: list[SwapRecord] = []
    seen = set()
    for perm in itertools.permutations(f.tolist()):
        if perm in seen:
            continue
        seen.add(perm)
        base_disc = _discordant_pairs(perm)
        base_loss = evaluate_loss(spec, np.asarray(perm), targets).value
        for i in range(len(perm)):
            for j in range(i + 1, len(perm)):
                swapped = list(perm)
                swapped[i], swapped[j] = swapped[j], swapped[i]
                if _discordant_pairs(tuple(swapped)) >= base_disc:
                    continue
                v = evaluate_loss(spec, np.asarray(swapped), targets).value
                delta = v - base_loss
                if delta > MINIMIZER_TOL:
                    records.append(SwapRecord(perm, (i, j), float(delta)))
    return records


@dataclass(frozen=True)
class SamplerSpec:
    """Monte Carlo configuration for the generative ranking models.

    model 'vase' draws items sequentially with probability proportional to
    the remaining weights. model 'plank' throws two darts per stage, one
    against the widths w and one against the lengths l = 1/w, rejecting
    same-plank hits; w_i * l_i = 1 must hold within 1e-12.
    """

    model: str
    weights: np.ndarray
    draws: int
    seed: int = 0
    lengths: np.ndarray | None = None

    def __post_init__(self):
        if self.model not in ("vase", "plank"):
            raise ValueError(f"unknown sampler model {self.model!r}")
        w = np.asarray(self.weights, dtype=float).ravel()
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)
        if self.draws < 1:
            raise ValueError("draws must be >= 1")
        if self.model == "plank":
            if w.size % 2 != 0:
                raise ValueError("plank model needs an even number of planks")
            lengths = self.lengths
            if lengths is None:
                lengths = 1.0 / w
            lengths = np.asarray(lengths, dtype=float).ravel()
            if np.any(np.abs(w * lengths - 1.0) > 1e-12):
                raise ValueError("plank model requires w_i * l_i = 1 within 1e-12")
            object.__setattr__(self, "lengths", lengths)


def _categorical_rows(rng: np.random.Generator, weights: np.ndarray) -> np.ndarray:
    """One index per row, drawn proportionally to that row's weights."""
    totals = weights.sum(axis=1, keepdims=True)
    cum = np.cumsum(weights, axis=1)
    u = rng.random((weights.shape[0], 1)) * totals
    return (u >= cum).sum(axis=1)


def sample_vase(spec: SamplerSpec) -> dict[tuple[int, ...], int]:
    """Empirical counts of full orderings under sequential proportional
    sampling without replacement. Keys are item-index tuples."""
    if spec.model != "vase":
        raise ValueError("spec.model must be 'vase'")
    m = spec.weights.size
    rng = np.random.default_rng(spec.seed)
    live = np.tile(spec.weights, (spec.draws, 1))
    out = np.empty((spec.draws, m), dtype=np.intp)
    rows = np.arange(spec.draws)
    for stage in range(m):
        pick = _categorical_rows(rng, live)
        out[:, stage] = pick
        live[rows, pick] = 0.0
    counts: dict[tuple[int, ...], int] = {}
    for row in out:
        key = tuple(row.tolist())
        counts[key] = counts.get(key, 0) + 1
    return counts


def sample_plank_dart(spec: SamplerSpec) -> dict[tuple[int, ...], int]:
    """Empirical counts of marked sequences (A_1..A_n, B_n..B_1) under the
    simultaneous two-dart process with same-plank rejection."""
    if spec.model != "plank":
        raise ValueError("spec.model must be 'plank'")
    m = spec.weights.size
    n = m // 2
    rng = np.random.default_rng(spec.seed)
    live_w = np.tile(spec.weights, (spec.draws, 1))
    live_l = np.tile(spec.lengths, (spec.draws, 1))
    out = np.empty((spec.draws, m), dtype=np.intp)
    rows = np.arange(spec.draws)
    for stage in range(n):
        a = _categorical_rows(rng, live_w)
        b = _categorical_rows(rng, live_l)
        clash = a == b
        while clash.any():
            idx = np.where(clash)[0]
            a[idx] = _categorical_rows(rng, live_w[idx])
            b[idx] = _categorical_rows(rng, live_l[idx])
            clash = a == b
        out[:, stage] = a
        out[:, m - 1 - stage] = b
        live_w[rows, a] = 0.0
        live_w[rows, b] = 0.0
        live_l[rows, a] = 0.0
        live_l[rows, b] = 0.0
    counts: dict[tuple[int, ...], int] = {}
    for row in out:
        key = tuple(row.tolist())
        counts[key] = counts.get(key, 0) + 1
    return counts


def vase_probability(weights, sequence) -> float:
    """Closed-form sequential-selection probability of a full ordering."""
    w = np.asarray(weights, dtype=float)
    seq = list(sequence)
    prob = 1.0
    remaining = w.sum()
    for item in seq:
        prob *= w[item] / remaining
        remaining -= w[item]
    return float(prob)


def plank_probability(weights, sequence, lengths=None) -> float:
    """Closed-form probability of a marked plank sequence.

    Stage i keeps planks at positions i..2n-1-i of the sequence; the chance
    of marking (A_i, B_i) is w_A * l_B over the cross product of remaining
    widths and lengths minus the same-plank mass.
    """
    w = np.asarray(weights, dtype=float)
    l = 1.0 / w if lengths is None else np.asarray(lengths, dtype=float)
    seq = list(sequence)
    m = len(seq)
    n = m // 2
    prob = 1.0
    for stage in range(n):
        window = seq[stage : m - stage]
        sw = sum(w[i] for i in window)
        sl = sum(l[i] for i in window)
        a, b = seq[stage], seq[m - 1 - stage]
        prob *= w[a] * l[b] / (sw * sl - len(window))
    return float(prob)


def frequency_zscores(counts: dict[tuple[int, ...], int], draws: int,
                      prob_fn) -> dict[tuple[int, ...], tuple[float, float, float]]:
    """Per-permutation (empirical, analytic, z) where z uses the binomial
    standard error, so a failure names the offending permutation."""
    out = {}
    keys = set(counts)
    m = len(next(iter(keys))) if keys else 0
    for perm in itertools.permutations(range(m)):
        p = prob_fn(perm)
        emp = counts.get(perm, 0) / draws
        se = math.sqrt(p * (1.0 - p) / draws) if 0 < p < 1 else float("inf")
        z = (emp - p) / se if se > 0 and math.isfinite(se) else 0.0
        out[perm] = (emp, p, z)
    return out
