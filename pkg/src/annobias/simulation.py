"""Proposal-acceptance annotation simulator and comparison strategies.

An annotator shown a proposed class accepts it with probability that grows
with the proposal's ground-truth support but never reaches 1 and never drops
below a dataset-dependent offset.  On rejection the annotator picks among
the remaining classes in proportion to their ground-truth mass.  Six
alternative strategies model other annotator behaviors for comparison.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import (
    AnnotationSet,
    LabelDistribution,
    argmax_class,
    sample_class,
)

__all__ = [
    "Strategy",
    "SimulationParams",
    "acceptance_probability",
    "simulate_annotation",
    "simulate_annotation_set",
    "simulate_with_strategy",
    "simulate_strategy_set",
]

_REJECT_FALLBACKS = ("first", "random")


class Strategy(enum.Enum):
    """Annotator behavior models.

    ACCEPT_GT      accept/reject against the proposal; rejected draws follow
                   the ground truth over the remaining classes.
    ACCEPT_LIKELY  accept/reject against the proposal; a rejection yields the
                   most likely remaining class.
    TWO_ACCEPT_GT  offset-accept the proposal, then the most likely class;
                   final fallback samples ground truth over remaining classes.
    TWO_ACCEPT_RANDOM  like TWO_ACCEPT_GT but the final fallback is uniform
                   over the remaining classes.
    RANDOM         uniform over all classes, ignoring the proposal.
    GT             sample the ground-truth distribution directly.
    LIKELY         always the single most likely class.
    """

    ACCEPT_GT = "ACCEPT_GT"
    ACCEPT_LIKELY = "ACCEPT_LIKELY"
    TWO_ACCEPT_GT = "TWO_ACCEPT_GT"
    TWO_ACCEPT_RANDOM = "TWO_ACCEPT_RANDOM"
    RANDOM = "RANDOM"
    GT = "GT"
    LIKELY = "LIKELY"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        try:
            return cls[str(name).strip().upper().replace("-", "_")]
        except KeyError:
            valid = ", ".join(s.name for s in cls)
            raise ValueError(f"unknown strategy {name!r} (expected one of {valid})")


@dataclass(frozen=True)
class SimulationParams:
    """Knobs of the acceptance model.

    ``delta`` is the offset: the probability of accepting a proposal with no
    ground-truth support.  ``upper_bound`` caps acceptance below 1.
    ``repetitions`` is how many annotations to draw per image.
    ``reject_fallback`` decides the annotated class when a rejection occurs
    but the ground truth leaves no mass outside the proposal: ``"first"``
    picks the first non-proposal class, ``"random"`` picks uniformly among
    the non-proposal classes.
    """

    delta: float
    upper_bound: float = 0.99
    repetitions: int = 1
    reject_fallback: str = "first"

    def __post_init__(self):
        if not 0.0 <= self.delta < self.upper_bound:
            raise ValueError("delta must satisfy 0 <= delta < upper_bound")
        if not self.upper_bound < 1.0:
            raise ValueError("upper_bound must be < 1")
        if int(self.repetitions) < 1 or self.repetitions != int(self.repetitions):
            raise ValueError("repetitions must be an integer >= 1")
        object.__setattr__(self, "repetitions", int(self.repetitions))
        if self.reject_fallback not in _REJECT_FALLBACKS:
            raise ValueError(
                f"reject_fallback must be one of {_REJECT_FALLBACKS}, "
                f"got {self.reject_fallback!r}"
            )


def _check_proposal(gt: LabelDistribution, proposal: int) -> int:
    proposal = int(proposal)
    if not 0 <= proposal < gt.num_classes:
        raise IndexError(
            f"proposal {proposal} out of range for {gt.num_classes} classes"
        )
    return proposal


def acceptance_probability(
    gt: LabelDistribution, proposal: int, p: SimulationParams
) -> float:
    """Probability the annotator keeps the proposed class.

    Affine in the proposal's ground-truth mass: ``delta`` when the mass is
    zero, ``upper_bound`` when the proposal is certain.
    """
    proposal = _check_proposal(gt, proposal)
    return p.delta + (p.upper_bound - p.delta) * gt[proposal]


def _fallback_class(
    num_classes: int, proposal: int, policy: str, r: float
) -> int:
    """Annotated class when no rejection mass remains outside the proposal."""
    if policy == "first":
        return 0 if proposal != 0 else 1
    # uniform over the non-proposal classes, reusing the rejection uniform
    j = min(int(r * (num_classes - 1)), num_classes - 2)
    return j if j < proposal else j + 1


def _sample_rejected(
    gt: LabelDistribution, proposal: int, p: SimulationParams, r: float
) -> int:
    """Class for one rejected proposal, driven by the uniform draw ``r``.

    Walks the cumulative ground-truth mass of the non-proposal classes and
    returns the first class whose cumulative mass reaches ``r`` times the
    total non-proposal mass.  When that mass is zero the configured
    fallback decides.
    """
    remainder = 1.0 - gt[proposal]
    if remainder <= 0.0:
        return _fallback_class(gt.num_classes, proposal, p.reject_fallback, r)
    masked = np.array(gt.probs, copy=True)
    masked[proposal] = 0.0
    cum = np.cumsum(masked)
    target = r * remainder
    idx = int(np.searchsorted(cum, target, side="left"))
    if idx == proposal:
        idx += 1
    if idx >= gt.num_classes:
        return _fallback_class(gt.num_classes, proposal, p.reject_fallback, r)
    return idx


def simulate_annotation(
    gt: LabelDistribution, proposal: int, p: SimulationParams, rng: np.random.Generator
) -> int:
    """One annotation of one image under the acceptance model."""
    proposal = _check_proposal(gt, proposal)
    a = acceptance_probability(gt, proposal, p)
    if rng.random() <= a:
        return proposal
    return _sample_rejected(gt, proposal, p, rng.random())


def _rejected_classes_vectorized(
    gt: LabelDistribution, proposal: int, p: SimulationParams, r: np.ndarray
) -> np.ndarray:
    """Vector version of :func:`_sample_rejected` over many uniforms."""
    k = gt.num_classes
    remainder = 1.0 - gt[proposal]
    if remainder <= 0.0:
        if p.reject_fallback == "first":
            return np.full(r.shape, 0 if proposal != 0 else 1, dtype=np.int64)
        j = np.minimum((r * (k - 1)).astype(np.int64), k - 2)
        return np.where(j < proposal, j, j + 1)
    masked = np.array(gt.probs, copy=True)
    masked[proposal] = 0.0
    cum = np.cumsum(masked)
    idx = np.searchsorted(cum, r * remainder, side="left").astype(np.int64)
    idx[idx == proposal] += 1
    overflow = idx >= k
    if np.any(overflow):
        fb = np.array(
            [
                _fallback_class(k, proposal, p.reject_fallback, ri)
                for ri in r[overflow]
            ],
            dtype=np.int64,
        )
        idx[overflow] = fb
    return idx


def simulate_annotation_set(
    gt: LabelDistribution, proposal: int, p: SimulationParams, rng: np.random.Generator
) -> AnnotationSet:
    """Tally ``p.repetitions`` independent annotations of one image.

    Draws are batched (all acceptance uniforms first, then one uniform per
    rejection) — the per-draw law is identical to repeated
    :func:`simulate_annotation` calls and the result is deterministic for a
    given generator state.
    """
    proposal = _check_proposal(gt, proposal)
    n = p.repetitions
    a = acceptance_probability(gt, proposal, p)
    u = rng.random(n)
    accepted = u <= a
    n_rejected = int(n - accepted.sum())
    classes = np.full(n, proposal, dtype=np.int64)
    if n_rejected:
        r = rng.random(n_rejected)
        classes[~accepted] = _rejected_classes_vectorized(gt, proposal, p, r)
    counts = np.bincount(classes, minlength=gt.num_classes)
    return AnnotationSet(counts, n)


def _uniform_class(num_classes: int, rng: np.random.Generator) -> int:
    return min(int(rng.random() * num_classes), num_classes - 1)


def _most_likely_remaining(gt: LabelDistribution, proposal: int) -> int:
    masked = np.array(gt.probs, copy=True)
    masked[proposal] = -1.0
    return int(np.argmax(masked))


def simulate_with_strategy(
    strategy: Strategy,
    gt: LabelDistribution,
    proposal: int,
    p: SimulationParams,
    rng: np.random.Generator,
) -> int:
    """One annotation under any of the seven annotator models."""
    proposal = _check_proposal(gt, proposal)
    if strategy is Strategy.RANDOM:
        return _uniform_class(gt.num_classes, rng)
    if strategy is Strategy.GT:
        return sample_class(gt, rng)
    if strategy is Strategy.LIKELY:
        return argmax_class(gt)
    if strategy is Strategy.ACCEPT_GT:
        return simulate_annotation(gt, proposal, p, rng)
    if strategy is Strategy.ACCEPT_LIKELY:
        a = acceptance_probability(gt, proposal, p)
        if rng.random() <= a:
            return proposal
        return _most_likely_remaining(gt, proposal)
    if strategy in (Strategy.TWO_ACCEPT_GT, Strategy.TWO_ACCEPT_RANDOM):
        a = acceptance_probability(gt, proposal, p)
        if rng.random() <= a:
            return proposal
        likely = argmax_class(gt)
        if likely != proposal:
            a2 = acceptance_probability(gt, likely, p)
            if rng.random() <= a2:
                return likely
        r = rng.random()
        if strategy is Strategy.TWO_ACCEPT_GT:
            return _sample_rejected(gt, proposal, p, r)
        # uniform over the classes other than the original proposal
        k = gt.num_classes
        j = min(int(r * (k - 1)), k - 2)
        return j if j < proposal else j + 1
    raise ValueError(f"unknown strategy {strategy!r}")


def simulate_strategy_set(
    strategy: Strategy,
    gt: LabelDistribution,
    proposal: int,
    p: SimulationParams,
    rng: np.random.Generator,
) -> AnnotationSet:
    """Tally ``p.repetitions`` annotations under any strategy.

    The common strategies have vectorized paths; the two-stage acceptance
    strategies fall back to the scalar draw loop.
    """
    proposal = _check_proposal(gt, proposal)
    n = p.repetitions
    k = gt.num_classes
    if strategy is Strategy.ACCEPT_GT:
        return simulate_annotation_set(gt, proposal, p, rng)
    if strategy is Strategy.LIKELY:
        counts = np.zeros(k, dtype=np.int64)
        counts[argmax_class(gt)] = n
        return AnnotationSet(counts, n)
    if strategy is Strategy.RANDOM:
        classes = np.minimum((rng.random(n) * k).astype(np.int64), k - 1)
        return AnnotationSet(np.bincount(classes, minlength=k), n)
    if strategy is Strategy.GT:
        cum = np.cumsum(gt.probs)
        idx = np.searchsorted(cum, rng.random(n), side="right")
        positive = np.flatnonzero(gt.probs > 0)
        last = int(positive[-1]) if positive.size else k - 1
        idx = np.where(idx >= k, last, idx).astype(np.int64)
        return AnnotationSet(np.bincount(idx, minlength=k), n)
    if strategy is Strategy.ACCEPT_LIKELY:
        a = acceptance_probability(gt, proposal, p)
        accepted = rng.random(n) <= a
        classes = np.where(
            accepted, proposal, _most_likely_remaining(gt, proposal)
        ).astype(np.int64)
        return AnnotationSet(np.bincount(classes, minlength=k), n)
    classes = np.fromiter(
        (simulate_with_strategy(strategy, gt, proposal, p, rng) for _ in range(n)),
        dtype=np.int64,
        count=n,
    )
    return AnnotationSet(np.bincount(classes, minlength=k), n)
