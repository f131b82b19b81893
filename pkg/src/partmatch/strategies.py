"""Match strategies: combine per-matcher similarities into a match decision.

Two combiners are supported. ``WeightedAverage`` sums weighted matcher
similarities and can skip the remaining matchers for a pair as soon as one
similarity is too low for the threshold to be reachable. ``LogisticRegression``
applies a fixed, externally trained model.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from rapidfuzz import process
from rapidfuzz.distance import Levenshtein

from .errors import ConfigurationError
from .model import Correspondence, Entity, MatchResult, MatchTask
from .similarity import SimilarityMeasure

WEIGHT_SUM_TOLERANCE = 1e-9
# Pruning compares against the bound minus this slack so float rounding in the
# weighted sum can never turn a pruned pair into a match.
PRUNE_SLACK = 1e-9

DEFAULT_WAM_PAIR_COST = 20
DEFAULT_LRM_PAIR_COST = 1000


@dataclass(frozen=True)
class WeightedAverage:
    weights: tuple[float, ...]
    threshold: float = 0.75
    pruning: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


@dataclass(frozen=True)
class LogisticRegression:
    intercept: float
    coefficients: tuple[float, ...]
    decision_threshold: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", tuple(float(b) for b in self.coefficients))


Combiner = Union[WeightedAverage, LogisticRegression]


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass(frozen=True)
class MatchStrategy:
    strategy_id: str
    matchers: tuple[SimilarityMeasure, ...]
    combiner: Combiner
    pair_memory_cost: float = field(default=0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "matchers", tuple(self.matchers))
        if not self.pair_memory_cost:
            default = (
                DEFAULT_WAM_PAIR_COST
                if isinstance(self.combiner, WeightedAverage)
                else DEFAULT_LRM_PAIR_COST
            )
            object.__setattr__(self, "pair_memory_cost", default)
        self._check()

    def _check(self) -> None:
        if not self.matchers:
            raise ConfigurationError("at least one matcher is required", "strategy.matchers")
        if self.pair_memory_cost <= 0:
            raise ConfigurationError("must be > 0", "strategy.c_ms")
        comb = self.combiner
        if isinstance(comb, WeightedAverage):
            if len(comb.weights) != len(self.matchers):
                raise ConfigurationError(
                    f"{len(comb.weights)} weights for {len(self.matchers)} matchers", "strategy.weights"
                )
            if any(w <= 0 for w in comb.weights):
                raise ConfigurationError("weights must be > 0", "strategy.weights")
            if abs(sum(comb.weights) - 1.0) > WEIGHT_SUM_TOLERANCE:
                raise ConfigurationError(f"weights sum to {sum(comb.weights)}, not 1", "strategy.weights")
            if not 0.0 < comb.threshold <= 1.0:
                raise ConfigurationError("threshold must lie in (0, 1]", "strategy.threshold")
        elif isinstance(comb, LogisticRegression):
            if len(comb.coefficients) != len(self.matchers):
                raise ConfigurationError(
                    f"{len(comb.coefficients)} coefficients for {len(self.matchers)} matchers",
                    "strategy.coefficients",
                )
            if not 0.0 < comb.decision_threshold < 1.0:
                raise ConfigurationError("must lie in (0, 1)", "strategy.decision_threshold")
        else:
            raise ConfigurationError(f"unsupported combiner {comb!r}", "strategy.kind")

    def validate(self, attributes: Iterable[str]) -> None:
        """Reject matchers that read attributes the input schema does not have."""
        known = set(attributes)
        for i, m in enumerate(self.matchers):
            if m.attribute not in known:
                raise ConfigurationError(
                    f"unknown attribute {m.attribute!r}", f"strategy.matchers[{i}].attribute"
                )

    def prune_bound(self, i: int) -> float:
        return prune_bound(self, i)

    def scorer(self) -> Callable[[Sequence[Any], Sequence[Any]], Optional[float]]:
        return _build_scorer(self)

    def prepare(self, entity: Entity) -> tuple[Any, ...]:
        return tuple(m.prepare(entity) for m in self.matchers)

    def evaluate_pair(self, e1: Entity, e2: Entity) -> Optional[Correspondence]:
        return evaluate_pair(self, e1, e2)


def prune_bound(strategy: MatchStrategy, i: int) -> float:
    """Smallest matcher-``i`` similarity that can still reach the threshold.

    Assumes every other matcher returns 1; the result is clamped to [0, 1].
    """
    comb = strategy.combiner
    if not isinstance(comb, WeightedAverage):
        raise ConfigurationError("pruning bounds exist only for weighted-average strategies", "strategy.kind")
    w = comb.weights[i]
    bound = (comb.threshold - (1.0 - w)) / w
    return min(1.0, max(0.0, bound))


def _build_scorer(strategy: MatchStrategy) -> Callable[[Sequence[Any], Sequence[Any]], Optional[float]]:
    """Compile the strategy into ``score(features_a, features_b) -> sim or None``.

    Features come from :meth:`MatchStrategy.prepare`; ``None`` marks an absent
    attribute value, which scores 0 for that matcher.
    """
    compares = [m.compare for m in strategy.matchers]
    comb = strategy.combiner

    if isinstance(comb, WeightedAverage):
        t = comb.threshold
        if comb.pruning:
            bounds = [prune_bound(strategy, i) - PRUNE_SLACK for i in range(len(compares))]
        else:
            bounds = [-1.0] * len(compares)
        steps = list(zip(range(len(compares)), compares, comb.weights, bounds))

        def score_wam(fa: Sequence[Any], fb: Sequence[Any]) -> Optional[float]:
            total = 0.0
            for i, cmp, w, lo in steps:
                x = fa[i]
                y = fb[i]
                s = 0.0 if x is None or y is None else cmp(x, y)
                if s < lo:
                    return None
                total += w * s
            if total > 1.0:
                total = 1.0
            return total if total >= t else None

        return score_wam

    beta0 = comb.intercept
    terms = list(zip(range(len(compares)), compares, comb.coefficients))
    cut = comb.decision_threshold

    def score_lrm(fa: Sequence[Any], fb: Sequence[Any]) -> Optional[float]:
        z = beta0
        for i, cmp, beta in terms:
            x = fa[i]
            y = fb[i]
            z += beta * (0.0 if x is None or y is None else cmp(x, y))
        p = sigmoid(z)
        return p if p >= cut else None

    return score_lrm


def evaluate_pair(strategy: MatchStrategy, e1: Entity, e2: Entity) -> Optional[Correspondence]:
    """Correspondence for ``(e1, e2)`` if the strategy declares a match, else ``None``."""
    sim = _build_scorer(strategy)(strategy.prepare(e1), strategy.prepare(e2))
    return None if sim is None else Correspondence.of(e1, e2, sim)


def _screen_cutoff(strategy: MatchStrategy) -> Optional[float]:
    """Cutoff for bulk screening on the first matcher, when that is possible.

    Applies to pruning weighted-average strategies whose first matcher is edit
    distance with a positive bound; candidates scoring below it would be
    pruned by the per-pair scorer anyway.
    """
    comb = strategy.combiner
    if not isinstance(comb, WeightedAverage) or not comb.pruning:
        return None
    if strategy.matchers[0].kind != "editDistance":
        return None
    lo = prune_bound(strategy, 0) - PRUNE_SLACK
    return lo if lo > 0 else None


def _build_tail(strategy: MatchStrategy) -> Callable[[Sequence[Any], Sequence[Any], float], Optional[float]]:
    """``tail(fa, fb, s0)``: finish a weighted-average score given matcher 0's similarity."""
    comb = strategy.combiner
    t = comb.threshold
    w0 = comb.weights[0]
    steps = [
        (i, strategy.matchers[i].compare, comb.weights[i], prune_bound(strategy, i) - PRUNE_SLACK)
        for i in range(1, len(strategy.matchers))
    ]

    def tail(fa: Sequence[Any], fb: Sequence[Any], s0: float) -> Optional[float]:
        total = 0.0
        total += w0 * s0
        for i, cmp, w, lo in steps:
            x = fa[i]
            y = fb[i]
            s = 0.0 if x is None or y is None else cmp(x, y)
            if s < lo:
                return None
            total += w * s
        if total > 1.0:
            total = 1.0
        return total if total >= t else None

    return tail


def evaluate_partition_pair(
    strategy: MatchStrategy,
    a: Sequence[Entity],
    b: Sequence[Entity],
    self_task: bool,
    task_id: str = "",
) -> MatchResult:
    """Match every entity of ``a`` against ``b`` (or every unordered pair of ``a``)."""
    started = time.perf_counter()
    prep = strategy.prepare
    fa = [prep(e) for e in a]
    keys_a = [e.key for e in a]
    if self_task:
        fb, keys_b = fa, keys_a
        pairs = len(a) * (len(a) - 1) // 2
    else:
        fb = [prep(e) for e in b]
        keys_b = [e.key for e in b]
        pairs = len(a) * len(b)

    cutoff = _screen_cutoff(strategy)
    if cutoff is None:
        found = _match_loop(strategy.scorer(), fa, keys_a, fb, keys_b, self_task)
    else:
        found = _match_screened(strategy, cutoff, fa, keys_a, fb, keys_b, self_task)

    return MatchResult(
        task_id=task_id,
        correspondences=frozenset(found),
        pairs_compared=pairs,
        elapsed=time.perf_counter() - started,
    )


def _match_loop(score, fa, keys_a, fb, keys_b, self_task: bool) -> list[Correspondence]:
    found: list[Correspondence] = []
    emit = found.append
    nb = len(fb)
    for i, (f1, k1) in enumerate(zip(fa, keys_a)):
        for j in range(i + 1 if self_task else 0, nb):
            sim = score(f1, fb[j])
            if sim is not None:
                k2 = keys_b[j]
                emit(Correspondence(k1, k2, sim) if k1 < k2 else Correspondence(k2, k1, sim))
    return found


def _match_screened(strategy, cutoff: float, fa, keys_a, fb, keys_b, self_task: bool) -> list[Correspondence]:
    # rapidfuzz scores one query against all choices in native code; None
    # choices (absent values) are skipped, which matches their score of 0.
    tail = _build_tail(strategy)
    col_b = [f[0] for f in fb]
    found: list[Correspondence] = []
    emit = found.append
    for i, (f1, k1) in enumerate(zip(fa, keys_a)):
        query = f1[0]
        if query is None:
            continue
        offset = i + 1 if self_task else 0
        choices = col_b[offset:] if offset else col_b
        hits = process.extract(
            query, choices, scorer=Levenshtein.normalized_similarity, score_cutoff=cutoff, limit=None
        )
        for _, s0, j in hits:
            j += offset
            sim = tail(f1, fb[j], s0)
            if sim is not None:
                k2 = keys_b[j]
                emit(Correspondence(k1, k2, sim) if k1 < k2 else Correspondence(k2, k1, sim))
    return found


def evaluate_task(strategy: MatchStrategy, task: MatchTask, a: Sequence[Entity], b: Sequence[Entity]) -> MatchResult:
    return evaluate_partition_pair(strategy, a, a if task.self_task else b, task.self_task, task.task_id)


def weighted_average_strategy(
    matchers: Sequence[SimilarityMeasure],
    weights: Sequence[float],
    threshold: float = 0.75,
    *,
    pruning: bool = True,
    strategy_id: str = "wam",
    pair_memory_cost: float = DEFAULT_WAM_PAIR_COST,
) -> MatchStrategy:
    return MatchStrategy(
        strategy_id, tuple(matchers), WeightedAverage(tuple(weights), threshold, pruning), pair_memory_cost
    )


def logistic_regression_strategy(
    matchers: Sequence[SimilarityMeasure],
    intercept: float,
    coefficients: Sequence[float],
    decision_threshold: float = 0.5,
    *,
    strategy_id: str = "lrm",
    pair_memory_cost: float = DEFAULT_LRM_PAIR_COST,
) -> MatchStrategy:
    return MatchStrategy(
        strategy_id,
        tuple(matchers),
        LogisticRegression(intercept, tuple(coefficients), decision_threshold),
        pair_memory_cost,
    )


def default_wam(strategy_id: str = "wam") -> MatchStrategy:
    """Edit distance on title plus trigram on description, equal weights, t = 0.75."""
    return weighted_average_strategy(
        [SimilarityMeasure("editDistance", "title"), SimilarityMeasure("trigram", "description")],
        [0.5, 0.5],
        0.75,
        strategy_id=strategy_id,
    )


def default_lrm(strategy_id: str = "lrm") -> MatchStrategy:
    """Jaccard on title, trigram on description, cosine on title.

    The coefficients are an illustrative hand-set model, not a trained one.
    """
    return logistic_regression_strategy(
        [
            SimilarityMeasure("jaccardToken", "title"),
            SimilarityMeasure("trigram", "description"),
            SimilarityMeasure("cosineToken", "title"),
        ],
        intercept=-9.0,
        coefficients=[5.0, 4.0, 5.0],
        decision_threshold=0.5,
        strategy_id=strategy_id,
    )


def strategy_to_dict(s: MatchStrategy) -> dict:
    d: dict[str, Any] = {
        "id": s.strategy_id,
        "matchers": [{"kind": m.kind, "attribute": m.attribute} for m in s.matchers],
        "c_ms": s.pair_memory_cost,
    }
    comb = s.combiner
    if isinstance(comb, WeightedAverage):
        d.update(kind="wam", weights=list(comb.weights), threshold=comb.threshold, pruning=comb.pruning)
    else:
        d.update(
            kind="lrm", intercept=comb.intercept, coefficients=list(comb.coefficients),
            decision_threshold=comb.decision_threshold,
        )
    return d


def strategy_from_dict(d: dict, field_prefix: str = "strategy") -> MatchStrategy:
    """Build a strategy from its config mapping; errors name the offending key."""
    kind = d.get("kind")
    try:
        matchers = tuple(
            SimilarityMeasure(m["kind"], m["attribute"]) for m in d.get("matchers", ())
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), f"{field_prefix}.matchers") from None
    sid = str(d.get("id", kind or "default"))
    try:
        if kind == "wam":
            return MatchStrategy(
                sid, matchers,
                WeightedAverage(tuple(d["weights"]), float(d.get("threshold", 0.75)), bool(d.get("pruning", True))),
                d.get("c_ms", DEFAULT_WAM_PAIR_COST),
            )
        if kind == "lrm":
            return MatchStrategy(
                sid, matchers,
                LogisticRegression(
                    float(d.get("intercept", 0.0)), tuple(d["coefficients"]),
                    float(d.get("decision_threshold", 0.5)),
                ),
                d.get("c_ms", DEFAULT_LRM_PAIR_COST),
            )
    except KeyError as exc:
        raise ConfigurationError("missing required key", f"{field_prefix}.{exc.args[0]}") from None
    except ConfigurationError as exc:
        if exc.field and not exc.field.startswith(field_prefix):
            raise ConfigurationError(str(exc), exc.field) from None
        raise
    raise ConfigurationError(f"unknown strategy kind {kind!r} (expected 'wam' or 'lrm')", f"{field_prefix}.kind")
