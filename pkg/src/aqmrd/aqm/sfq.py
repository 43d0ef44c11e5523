"""Bucket selection and admission for stochastic fair queueing."""

from __future__ import annotations

from dataclasses import dataclass, field

from .types import Action, Verdict

_MASK = 0xFFFFFFFF


@dataclass
class SfqState:
    n_buckets: int
    bucket_limit: int
    capacity: int
    salt: int = 0
    lengths: list[int] = field(default_factory=list)

    @classmethod
    def create(cls, n_buckets: int, capacity: int) -> "SfqState":
        if n_buckets < 1:
            raise ValueError(f"n_buckets must be >= 1, got {n_buckets}")
        # each bucket gets an equal share of the physical buffer
        limit = max(1, capacity // n_buckets)
        return cls(n_buckets, limit, capacity, 0, [0] * n_buckets)


def sfq_bucket(flow_id: int, salt: int, n_buckets: int) -> int:
    # 32-bit multiplicative hash (Knuth) followed by an xorshift finaliser
    h = ((flow_id + 1) * 2654435761) & _MASK
    h ^= salt
    h ^= h >> 16
    h = (h * 0x45D9F3B) & _MASK
    h ^= h >> 16
    return h % n_buckets


def sfq_on_arrival(state: SfqState, flow_id: int, q: int) -> Verdict:
    bucket = sfq_bucket(flow_id, state.salt, state.n_buckets)
    if q >= state.capacity or state.lengths[bucket] >= state.bucket_limit:
        return Verdict(Action.DROP, 1.0, overflow=True, bucket=bucket)
    return Verdict(Action.ENQUEUE, 0.0, bucket=bucket)


def sfq_perturb(state: SfqState, salt: int) -> None:
    """Install a new hash salt; packets already queued stay where they are."""
    state.salt = salt & _MASK

