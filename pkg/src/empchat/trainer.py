"""Optimization loop: Adam with linear decay to zero, global-norm clipping,
gradient accumulation, JSONL metric logging, and resumable checkpoints.

All randomness (shuffling, dropout) comes from streams derived from the base
seed and the epoch/step index, so a resumed run replays the uninterrupted
run's remaining steps exactly and two runs with one seed match bit for bit.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as tc
from .corpus import build_input
from .model import (
    ModelParams,
    forward,
    lm_loss,
    load_model,
    multichoice_loss,
    sample_losses,
    save_model,
    total_loss,
)
from .rng import stream

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 6.25e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    grad_accum_steps: int = 8
    batch_size: int = 4
    epochs: int = 20
    seed: int = 0
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.grad_accum_steps < 1:
            raise ValueError("grad_accum_steps must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


class AdamState:
    """First/second moment buffers, shape-matched to the parameters."""

    def __init__(self, params):
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def save(self, path):
        named = {}
        for k in self.m:
            named[f"m.{k}"] = self.m[k]
            named[f"v.{k}"] = self.v[k]
        tc.save_tensors(path, named)

    @classmethod
    def load(cls, path, params):
        state = cls(params)
        arrays = tc.load_tensors(path)
        for k in state.m:
            state.m[k] = np.array(arrays[f"m.{k}"])
            state.v[k] = np.array(arrays[f"v.{k}"])
        return state


def adam_step(params, state, step_index, config, lr=None):
    """Bias-corrected Adam update in place; step_index is 1-based."""
    if step_index < 1:
        raise ValueError("step_index is 1-based")
    lr = config.lr if lr is None else lr
    b1, b2, eps = config.beta1, config.beta2, config.eps
    bc1 = 1.0 - b1**step_index
    bc2 = 1.0 - b2**step_index
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        elif not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def clip_global_norm(grads, max_norm=1.0):
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm; scaling happens in place.
    """
    total = 0.0
    for g in grads:
        total += float(np.sum(np.square(g, dtype=np.float64)))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = max_norm / norm
        for g in grads:
            g *= factor
    return norm


def schedule_lr(step, total_steps, base_lr):
    """Linear decay to zero over total_steps."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step > total_steps:
        log.warning("schedule_lr: step %d beyond total %d, clamping to 0", step, total_steps)
        return 0.0
    return base_lr * (1.0 - step / total_steps)


def _zero_grads(params):
    for _, p in params.items():
        p.grad = None


def _materialize_grads(params):
    for _, p in params.items():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def _mean(values):
    return float(np.mean(values)) if values else None


def _group_units(samples):
    """Indices grouped by (conversation, position), in first-seen order."""
    groups = {}
    order = []
    for i, s in enumerate(samples):
        key = (s.conversation_index, s.position)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(i)
    return [groups[k] for k in order]


def _multichoice_unit_loss(indices, samples, reps, config, params, train_mode, rng):
    """Group loss for the softmax-over-candidates head variant.

    The gold sequence supplies L1; L2 ranks the gold among the utterance
    distractors; L3 ranks the gold emotion among the emotion distractors.
    """
    outputs = {}
    for i in indices:
        outputs[i] = forward(reps[i], params, config, train_mode=train_mode, rng=rng)
    gold = [i for i in indices if samples[i].source == "gold"]
    utt = [i for i in indices if samples[i].source == "utterance-distractor"]
    emo = [i for i in indices if samples[i].source == "emotion-distractor"]
    if len(gold) != 1:
        raise ValueError("multichoice grouping expects exactly one gold sample per position")
    g = gold[0]
    l1 = lm_loss(outputs[g], reps[g])
    l2 = (
        multichoice_loss([outputs[g]] + [outputs[i] for i in utt], 0, head="utterance")
        if utt
        else None
    )
    l3 = (
        multichoice_loss([outputs[g]] + [outputs[i] for i in emo], 0, head="emotion")
        if emo
        else None
    )
    total = total_loss(l1, l2, l3, config.c1, config.c2, config.c3)
    values = (
        l1.item(),
        None if l2 is None else l2.item(),
        None if l3 is None else l3.item(),
        total.item(),
    )
    return total, values


class _MetricLog:
    def __init__(self, path, append):
        self.path = path
        self._f = open(path, "a" if append else "w", encoding="utf-8")

    def write(self, record):
        self._f.write(json.dumps(record) + "\n")
        self._f.flush()

    def close(self):
        self._f.close()


def train(corpus, samples, vocab, model_config, train_config, out_dir, resume=None,
          vocab_path=None, history_window=None):
    """Run the full optimization loop and write a checkpoint series.

    history_window is recorded in checkpoint sidecars so inference-time
    consumers can mirror the training-time context length. Returns a summary
    dict: final checkpoint path, steps completed, and whether the run halted
    on a non-finite loss.
    """
    os.makedirs(out_dir, exist_ok=True)
    tcfg = train_config
    multichoice = model_config.head_variant == "multichoice"
    units = _group_units(samples) if multichoice else [[i] for i in range(len(samples))]
    group = tcfg.grad_accum_steps * tcfg.batch_size
    steps_per_epoch = len(units) // group
    if steps_per_epoch < 1:
        raise ValueError(
            f"{len(units)} training units cannot fill one accumulation group of {group}"
        )
    total_steps = tcfg.epochs * steps_per_epoch

    if resume is not None:
        params, model_config, sidecar = load_model(resume)
        state = AdamState.load(str(resume) + ".opt", params)
        start_step = int(sidecar["step"])
        if int(sidecar.get("seed", tcfg.seed)) != tcfg.seed:
            raise ValueError("resume seed differs from checkpoint seed")
    else:
        params = ModelParams.init(model_config, seed=tcfg.seed)
        state = AdamState(params)
        start_step = 0

    reps = [build_input(s, vocab, model_config.max_positions) for s in samples]
    flags = [(s.is_gold_utterance, s.is_gold_emotion) for s in samples]

    metrics = _MetricLog(os.path.join(out_dir, "metrics.jsonl"), append=resume is not None)

    def checkpoint(step):
        path = os.path.join(out_dir, f"step{step:06d}.ckpt")
        extra = {"step": step, "seed": tcfg.seed, "total_steps": total_steps}
        if history_window is not None:
            extra["history_window"] = history_window
        save_model(path, params, model_config, vocab_path=vocab_path, extra=extra)
        state.save(path + ".opt")
        return path

    last_ckpt = None
    last_ckpt_step = start_step if resume is not None else -1
    if resume is not None:
        last_ckpt = str(resume)
    halted = False
    step = start_step
    try:
        while step < total_steps:
            epoch = step // steps_per_epoch
            offset = step % steps_per_epoch
            perm = stream(tcfg.seed, "shuffle", epoch).permutation(len(units))
            for g_idx in range(offset, steps_per_epoch):
                drop_rng = stream(tcfg.seed, "dropout", step)
                _zero_grads(params)
                l1s, l2s, l3s, totals = [], [], [], []
                bad_loss = False
                base = g_idx * group
                for micro in range(tcfg.grad_accum_steps):
                    lo = base + micro * tcfg.batch_size
                    idxs = perm[lo : lo + tcfg.batch_size]
                    acc = None
                    for ui in idxs:
                        if multichoice:
                            total, (v1, v2, v3, vt) = _multichoice_unit_loss(
                                units[ui], samples, reps, model_config, params,
                                True, drop_rng,
                            )
                        else:
                            (si,) = units[ui]
                            total, report = sample_losses(
                                params,
                                model_config,
                                reps[si],
                                *flags[si],
                                train_mode=True,
                                rng=drop_rng,
                            )
                            v1, v2, v3, vt = report.l1, report.l2, report.l3, report.total
                        acc = total if acc is None else tc.add(acc, total)
                        if v1 is not None:
                            l1s.append(v1)
                        if v2 is not None:
                            l2s.append(v2)
                        if v3 is not None:
                            l3s.append(v3)
                        totals.append(vt)
                    micro_loss = tc.mul_scalar(acc, 1.0 / (len(idxs) * tcfg.grad_accum_steps))
                    if not np.isfinite(micro_loss.data):
                        bad_loss = True
                        break
                    micro_loss.backward()
                if bad_loss:
                    log.error("non-finite loss at step %d; halting with last checkpoint", step)
                    halted = True
                    break
                _materialize_grads(params)
                grads = [p.grad for _, p in params.items()]
                grad_norm = clip_global_norm(grads, tcfg.clip_norm)
                lr = schedule_lr(step, total_steps, tcfg.lr)
                adam_step(params, state, step + 1, tcfg, lr=lr)
                step += 1
                metrics.write(
                    {
                        "step": step,
                        "lr": lr,
                        "L1": _mean(l1s),
                        "L2": _mean(l2s),
                        "L3": _mean(l3s),
                        "total": _mean(totals),
                        "grad_norm": grad_norm,
                    }
                )
                if tcfg.checkpoint_every and step % tcfg.checkpoint_every == 0:
                    last_ckpt = checkpoint(step)
                    last_ckpt_step = step
            if halted:
                break
    finally:
        metrics.close()

    if not halted and last_ckpt_step != step:
        last_ckpt = checkpoint(step)
        last_ckpt_step = step

    return {
        "steps": step,
        "total_steps": total_steps,
        "checkpoint": last_ckpt,
        "metrics": metrics.path,
        "halted": halted,
    }
