"""Autoregressive generation with temperature scaling and nucleus filtering.

Temperature reshapes the next-token distribution first; nucleus filtering
then keeps the smallest probability-sorted prefix whose mass reaches p and
renormalizes it. Ties at the nucleus boundary fall to ascending token id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np

from .corpus import ContextOverflowError, InputRepresentation, assemble_input
from .labels import act_row, emotion_row
from .model import forward
from .rng import stream

log = logging.getLogger(__name__)


@dataclass
class SamplingParams:
    p: float = 0.9
    temperature: float = 0.7
    max_new_tokens: int = 48
    rng_seed: int | None = None

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"nucleus mass p must be in (0, 1], got {self.p}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


def apply_temperature(logits, temperature):
    """softmax(logits / T) as a plain numpy vector."""
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    x = np.asarray(logits, dtype=np.float64) / temperature
    x = x - x.max()
    e = np.exp(x)
    return e / e.sum()


def nucleus_filter(probs, p):
    """Zero out everything beyond the smallest prefix with mass >= p, renormalize."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"nucleus mass p must be in (0, 1], got {p}")
    probs = np.asarray(probs, dtype=np.float64)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"probs must sum to 1 (got {total:.8f})")
    # sort by probability descending, ties by token id ascending
    order = np.lexsort((np.arange(probs.size), -probs))
    csum = np.cumsum(probs[order])
    reached = np.nonzero(csum >= p)[0]
    cut = int(reached[0]) if reached.size else probs.size - 1
    keep = order[: cut + 1]
    out = np.zeros_like(probs)
    out[keep] = probs[keep]
    return out / out.sum()


def sample_index(probs, rng):
    """Inverse-CDF draw; deterministic given the generator state."""
    csum = np.cumsum(probs)
    r = rng.random()
    return int(min(np.searchsorted(csum, r, side="right"), probs.size - 1))


def generate_ids(next_logits, eos_id, sampling, rng=None):
    """Core sampling loop over a prefix->logits callable.

    Returns the generated ids, excluding the terminating eos.
    """
    if rng is None:
        rng = (
            stream(sampling.rng_seed, "generate")
            if sampling.rng_seed is not None
            else np.random.default_rng()
        )
    out = []
    for _ in range(sampling.max_new_tokens):
        logits = next_logits(out)
        if logits is None:
            break  # context window exhausted
        probs = nucleus_filter(apply_temperature(logits, sampling.temperature), sampling.p)
        token = sample_index(probs, rng)
        if token == eos_id:
            break
        out.append(token)
    return out


def generate(history, topic, params, vocab, config, sampling,
             candidate_emotion=None, candidate_act=None):
    """Generate one reply conditioned on history, topic, and candidate labels.

    The emotion/act rows of generated positions carry the candidate labels
    (neutral-meta when None), mirroring how training samples were assembled.
    Returns (text, token_ids).
    """
    context = assemble_input(
        vocab, topic, list(history), [], candidate_emotion, candidate_act,
        config.max_positions,
    )
    # drop the trailing cls: generation extends the candidate span directly
    base_tokens = context.token_ids[:-1]
    base_emotion = context.emotion_ids[:-1]
    base_action = context.action_ids[:-1]

    cand_e = emotion_row(candidate_emotion)
    cand_a = act_row(candidate_act)
    if len(base_tokens) >= config.max_positions:
        raise ContextOverflowError("context leaves no room to generate after truncation")

    def next_logits(generated):
        n = len(base_tokens) + len(generated)
        if n >= config.max_positions:
            return None
        rep = InputRepresentation(
            token_ids=base_tokens + list(generated),
            position_ids=list(range(n)),
            emotion_ids=base_emotion + [cand_e] * len(generated),
            action_ids=base_action + [cand_a] * len(generated),
        )
        out = forward(rep, params, config, train_mode=False)
        return out.lm_logits.data[-1]

    ids = generate_ids(next_logits, vocab.eos_id, sampling)
    return vocab.decode(ids), ids
