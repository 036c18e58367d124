"""Multi-head decoder transformer: one trunk, three task heads.

Summed token/position/emotion/action embeddings feed pre-norm causal blocks.
The language-model head reuses the (tied) token embedding as its projection;
two 2-logit heads read the final hidden states at the cls position and the
position just before it, scoring next-utterance and next-emotion coherence.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as tc
from .corpus import InputRepresentation, assemble_input
from .labels import EMOTIONS, N_ACT_ROWS, N_EMOTION_ROWS, act_row, emotion_row
from .rng import stream

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    vocab_size: int
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 128
    d_ff: int = 512
    max_positions: int = 256
    n_emotions: int = len(EMOTIONS)
    n_actions: int = N_ACT_ROWS - 1
    n_topics: int = 10
    dropout: float = 0.1
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    head_variant: str = "binary"  # or "multichoice"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        for name in ("c1", "c2", "c3"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss coefficient {name} must be >= 0")
        if self.head_variant not in ("binary", "multichoice"):
            raise ValueError(f"unknown head_variant {self.head_variant!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @classmethod
    def full_scale(cls, vocab_size=40478):
        """Full-scale dimensions; not trainable on a desk, kept for reference."""
        return cls(
            vocab_size=vocab_size,
            n_layers=12,
            n_heads=12,
            d_model=768,
            d_ff=3072,
            max_positions=512,
        )

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass
class ForwardOutput:
    hidden: tc.Tensor  # (seq_len, d_model)
    lm_logits: tc.Tensor  # (seq_len, vocab_size)
    utterance_logits: tc.Tensor  # (2,), read at the cls position
    emotion_logits: tc.Tensor  # (2,), read one position before cls


@dataclass
class LossReport:
    l1: float | None
    l2: float | None
    l3: float | None
    c1: float
    c2: float
    c3: float
    total: float


class ModelParams:
    """Named parameter tensors; iteration order is fixed at creation."""

    def __init__(self, tensors):
        self.tensors = dict(tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def items(self):
        return self.tensors.items()

    def names(self):
        return list(self.tensors.keys())

    @property
    def token_embedding(self):
        return self.tensors["tok_emb"]

    @property
    def lm_projection(self):
        # weight tying: the LM output projection IS the token embedding
        return self.tensors["tok_emb"]

    @classmethod
    def init(cls, config, seed=0, dtype=np.float32):
        rng = stream(seed, "init")
        std = 0.02

        def normal(*shape):
            return tc.Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)

        def zeros(*shape):
            return tc.Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

        def ones(*shape):
            return tc.Tensor(np.ones(shape, dtype=dtype), requires_grad=True)

        d, dff = config.d_model, config.d_ff
        tensors = {
            "tok_emb": normal(config.vocab_size, d),
            "pos_emb": normal(config.max_positions, d),
            "emo_emb": normal(N_EMOTION_ROWS, d),
            "act_emb": normal(N_ACT_ROWS, d),
        }
        for i in range(config.n_layers):
            p = f"layer{i}."
            tensors[p + "ln1.g"] = ones(d)
            tensors[p + "ln1.b"] = zeros(d)
            for proj in ("wq", "wk", "wv", "wo"):
                tensors[p + f"attn.{proj}"] = normal(d, d)
            for b in ("bq", "bk", "bv", "bo"):
                tensors[p + f"attn.{b}"] = zeros(d)
            tensors[p + "ln2.g"] = ones(d)
            tensors[p + "ln2.b"] = zeros(d)
            tensors[p + "mlp.w1"] = normal(d, dff)
            tensors[p + "mlp.b1"] = zeros(dff)
            tensors[p + "mlp.w2"] = normal(dff, d)
            tensors[p + "mlp.b2"] = zeros(d)
        tensors["lnf.g"] = ones(d)
        tensors["lnf.b"] = zeros(d)
        tensors["head.next_utterance"] = normal(d, 2)
        tensors["head.next_emotion"] = normal(d, 2)
        return cls(tensors)

    def count(self):
        return sum(t.data.size for t in self.tensors.values())


def param_count(config):
    """Closed form for the total parameter count of a config.

    embeddings: (V + P + n_emotions+1 + n_actions+1) * d
    per layer:  4d (two layer norms) + 4(d^2+d) (attention) + 2*d*d_ff + d_ff + d (mlp)
    final norm: 2d; heads: 2 * (d*2)
    """
    d, dff = config.d_model, config.d_ff
    emb = (config.vocab_size + config.max_positions + N_EMOTION_ROWS + N_ACT_ROWS) * d
    per_layer = 4 * d + 4 * (d * d + d) + 2 * d * dff + dff + d
    return emb + config.n_layers * per_layer + 2 * d + 2 * (d * 2)


def _causal_mask(n, dtype):
    mask = np.triu(np.full((n, n), -1e9, dtype=dtype), k=1)
    return mask


def forward(rep, params, config, train_mode=False, rng=None):
    """Run the trunk and all heads over one input representation."""
    n = len(rep.token_ids)
    if not (len(rep.position_ids) == len(rep.emotion_ids) == len(rep.action_ids) == n):
        raise ValueError("input rows must have equal length")
    if n > config.max_positions:
        raise ValueError(f"sequence length {n} exceeds max_positions {config.max_positions}")
    if train_mode and config.dropout > 0 and rng is None:
        raise ValueError("train_mode forward needs an rng for dropout")

    def drop(t):
        if train_mode and config.dropout > 0:
            return tc.dropout(t, config.dropout, rng)
        return t

    x = tc.embedding(params["tok_emb"], rep.token_ids)
    x = tc.add(x, tc.embedding(params["pos_emb"], rep.position_ids))
    x = tc.add(x, tc.embedding(params["emo_emb"], rep.emotion_ids))
    x = tc.add(x, tc.embedding(params["act_emb"], rep.action_ids))
    x = drop(x)

    heads, d = config.n_heads, config.d_model
    hd = d // heads
    mask = _causal_mask(n, x.data.dtype)
    scale = 1.0 / np.sqrt(hd)

    for i in range(config.n_layers):
        p = f"layer{i}."
        h = tc.layer_norm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = tc.add(tc.matmul(h, params[p + "attn.wq"]), params[p + "attn.bq"])
        k = tc.add(tc.matmul(h, params[p + "attn.wk"]), params[p + "attn.bk"])
        v = tc.add(tc.matmul(h, params[p + "attn.wv"]), params[p + "attn.bv"])
        q = tc.transpose(tc.reshape(q, (n, heads, hd)), (1, 0, 2))
        k = tc.transpose(tc.reshape(k, (n, heads, hd)), (1, 0, 2))
        v = tc.transpose(tc.reshape(v, (n, heads, hd)), (1, 0, 2))
        scores = tc.mul_scalar(tc.matmul(q, tc.transpose(k, (0, 2, 1))), scale)
        att = tc.softmax(tc.add_const(scores, mask))
        att = drop(att)
        ctx = tc.reshape(tc.transpose(tc.matmul(att, v), (1, 0, 2)), (n, d))
        proj = tc.add(tc.matmul(ctx, params[p + "attn.wo"]), params[p + "attn.bo"])
        x = tc.add(x, drop(proj))

        m = tc.layer_norm(x, params[p + "ln2.g"], params[p + "ln2.b"])
        m = tc.gelu(tc.add(tc.matmul(m, params[p + "mlp.w1"]), params[p + "mlp.b1"]))
        m = tc.add(tc.matmul(m, params[p + "mlp.w2"]), params[p + "mlp.b2"])
        x = tc.add(x, drop(m))

    hidden = tc.layer_norm(x, params["lnf.g"], params["lnf.b"])
    lm_logits = tc.matmul(hidden, tc.transpose(params["tok_emb"], (1, 0)))
    h_last = tc.slice_rows(hidden, n - 1, n)  # cls position
    h_prev = tc.slice_rows(hidden, n - 2, n - 1)
    utterance_logits = tc.reshape(tc.matmul(h_last, params["head.next_utterance"]), (2,))
    emotion_logits = tc.reshape(tc.matmul(h_prev, params["head.next_emotion"]), (2,))
    return ForwardOutput(hidden, lm_logits, utterance_logits, emotion_logits)


# ---------------------------------------------------------------------------
# losses


def lm_loss(output, rep):
    """Mean next-token cross-entropy over the candidate span (gold text only)."""
    start, stop = rep.candidate_span
    if stop <= start:
        raise ValueError("lm_loss: empty candidate span")
    logits = tc.slice_rows(output.lm_logits, start - 1, stop - 1)
    targets = np.asarray(rep.token_ids[start:stop], dtype=np.int64)
    return tc.cross_entropy(logits, targets, reduction="mean")


def utterance_loss(output, is_gold_utterance):
    return tc.cross_entropy(output.utterance_logits, 1 if is_gold_utterance else 0)


def emotion_loss(output, is_gold_emotion):
    return tc.cross_entropy(output.emotion_logits, 1 if is_gold_emotion else 0)


def total_loss(l1, l2, l3, c1=1.0, c2=1.0, c3=1.0):
    """c1*L1 + c2*L2 + c3*L3 over scalar tensors; absent losses contribute 0."""
    for name, c in (("c1", c1), ("c2", c2), ("c3", c3)):
        if c < 0:
            raise ValueError(f"loss coefficient {name} must be >= 0")
    terms = [
        tc.mul_scalar(l, c)
        for l, c in ((l1, c1), (l2, c2), (l3, c3))
        if l is not None and c != 0.0
    ]
    if not terms:
        return tc.Tensor(0.0)
    acc = terms[0]
    for t in terms[1:]:
        acc = tc.add(acc, t)
    return acc


def sample_losses(params, config, rep, is_gold_utterance, is_gold_emotion,
                  train_mode=False, rng=None):
    """Per-sample loss triple and weighted total, honoring the skip rules:
    L1 and L3 only run on sequences whose candidate text is the gold one."""
    out = forward(rep, params, config, train_mode=train_mode, rng=rng)
    l1 = lm_loss(out, rep) if is_gold_utterance else None
    l2 = utterance_loss(out, is_gold_utterance)
    l3 = emotion_loss(out, is_gold_emotion) if is_gold_utterance else None
    total = total_loss(l1, l2, l3, config.c1, config.c2, config.c3)
    report = LossReport(
        l1=None if l1 is None else l1.item(),
        l2=l2.item(),
        l3=None if l3 is None else l3.item(),
        c1=config.c1,
        c2=config.c2,
        c3=config.c3,
        total=total.item(),
    )
    return total, report


def multichoice_loss(outputs, gold_index, head="utterance"):
    """Softmax-over-candidates variant: cross-entropy over the per-candidate
    positive logits of a group that contains exactly one gold entry."""
    if not 0 <= gold_index < len(outputs):
        raise ValueError("gold_index out of range")
    attr = "utterance_logits" if head == "utterance" else "emotion_logits"
    positives = [tc.slice_rows(getattr(o, attr), 1, 2) for o in outputs]
    return tc.cross_entropy(tc.concat(positives), gold_index)


# ---------------------------------------------------------------------------
# emotion prediction


def greedy_draft(history, topic, params, vocab, config, emotion=None, act=None,
                 max_new_tokens=24):
    """Deterministic argmax continuation of the history; the draft positions
    carry the given emotion/act rows like a real candidate span would."""
    context = assemble_input(
        vocab, topic, list(history), [], emotion, act, config.max_positions
    )
    tokens = context.token_ids[:-1]  # drop cls, extend the span directly
    emotions = context.emotion_ids[:-1]
    actions = context.action_ids[:-1]
    cand_e, cand_a = emotion_row(emotion), act_row(act)
    out_ids = []
    for _ in range(max_new_tokens):
        n = len(tokens) + len(out_ids)
        if n >= config.max_positions:
            break
        rep = InputRepresentation(
            token_ids=tokens + out_ids,
            position_ids=list(range(n)),
            emotion_ids=emotions + [cand_e] * len(out_ids),
            action_ids=actions + [cand_a] * len(out_ids),
        )
        nxt = int(np.argmax(forward(rep, params, config).lm_logits.data[-1]))
        if nxt == vocab.eos_id:
            break
        out_ids.append(nxt)
    return out_ids


def predict_emotion(history, topic, params, vocab, config, max_draft_tokens=24):
    """Score each emotion against gold-utterance-absent probes and rank them.

    Two probe candidates stand in for the unknown next utterance: a greedy
    draft conditioned on the probed emotion and one conditioned on the
    neutral-meta row. Each probe span (draft tokens + eos) carries the
    probed emotion id; the score is the product of the emotion head's
    positive probabilities on the two probes, so it stays inside (0, 1).
    Empty history degrades to topic-only context.
    """
    history = list(history)

    def head_score(draft_ids, label):
        rep = assemble_input(
            vocab, topic, history, draft_ids + [vocab.eos_id], label, None,
            config.max_positions,
        )
        out = forward(rep, params, config, train_mode=False)
        return float(tc.softmax(out.emotion_logits).data[1])

    neutral_ids = greedy_draft(
        history, topic, params, vocab, config, emotion=None,
        max_new_tokens=max_draft_tokens,
    )
    scores = {}
    for label in EMOTIONS:
        own_ids = greedy_draft(
            history, topic, params, vocab, config, emotion=label,
            max_new_tokens=max_draft_tokens,
        )
        scores[label] = head_score(own_ids, label) * head_score(neutral_ids, label)
    return sorted(scores.items(), key=lambda kv: -kv[1])


def utterance_score(params, config, rep):
    """P(candidate is the gold next utterance) for one assembled input."""
    out = forward(rep, params, config, train_mode=False)
    return float(tc.softmax(out.utterance_logits).data[1])


# ---------------------------------------------------------------------------
# checkpoints: tensor-core binary file + JSON sidecar


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sidecar_path(ckpt_path):
    return str(ckpt_path) + ".json"


def save_model(ckpt_path, params, config, vocab_path=None, extra=None):
    tc.save_tensors(ckpt_path, {k: v for k, v in params.items()})
    sidecar = {"config": config.to_json()}
    if vocab_path is not None:
        sidecar["vocab_path"] = str(vocab_path)
        sidecar["vocab_sha256"] = _sha256(vocab_path)
    if extra:
        sidecar.update(extra)
    with open(sidecar_path(ckpt_path), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(ckpt_path):
    with open(sidecar_path(ckpt_path), encoding="utf-8") as f:
        sidecar = json.load(f)
    config = ModelConfig.from_json(sidecar["config"])
    arrays = tc.load_tensors(ckpt_path)
    reference = ModelParams.init(config, seed=0)
    if set(arrays) != set(reference.tensors):
        missing = set(reference.tensors) ^ set(arrays)
        raise ValueError(f"checkpoint tensors do not match config: {sorted(missing)[:5]}")
    tensors = {}
    for name in reference.names():
        t = tc.Tensor(arrays[name], requires_grad=True)
        if t.data.shape != reference[name].data.shape:
            raise ValueError(f"shape mismatch for {name}")
        tensors[name] = t
    return ModelParams(tensors), config, sidecar
