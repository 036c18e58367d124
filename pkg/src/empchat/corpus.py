"""DailyDialog-format ingestion, sliding-window sample building with
distractors, and assembly of the four parallel id rows the model consumes.

Sequence layout: [topic] [bos] [speaker + tokens per history utterance]
[candidate tokens + eos] [cls]. Emotion and act ids are copied across each
utterance's span; the topic, bos, and cls positions carry the neutral-meta
ids. The candidate span carries the sample's candidate emotion and act.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field, asdict

from .labels import (
    ACTS,
    EMOTIONS,
    TOPICS,
    act_row,
    emotion_row,
)
from .rng import stream

log = logging.getLogger(__name__)

EMOTION_OF_DIGIT = {str(i): e for i, e in enumerate(EMOTIONS)}
ACT_OF_DIGIT = {str(i + 1): a for i, a in enumerate(ACTS)}
TOPIC_OF_DIGIT = {str(i + 1): t for i, t in enumerate(TOPICS)}

UTTERANCE_SEP = "__eou__"

# reference preprocessed split sizes for the real corpus; logged, not asserted
REFERENCE_SPLIT_SIZES = {"train": 76502, "validation": 13809}


class ContextOverflowError(ValueError):
    """A candidate or context cannot fit the position budget."""


@dataclass(frozen=True)
class Utterance:
    text: str
    emotion: str
    act: str

    def __post_init__(self):
        if self.emotion not in EMOTIONS:
            raise ValueError(f"unknown emotion {self.emotion!r}")
        if self.act not in ACTS:
            raise ValueError(f"unknown act {self.act!r}")
        if not self.text.strip():
            raise ValueError("utterance text empty after trimming")


@dataclass(frozen=True)
class Turn:
    """History entry with optional labels; None renders as neutral-meta rows."""

    text: str
    emotion: str | None = None
    act: str | None = None


@dataclass(frozen=True)
class Conversation:
    topic: str
    utterances: tuple

    def __post_init__(self):
        if self.topic not in TOPICS:
            raise ValueError(f"unknown topic {self.topic!r}")
        if len(self.utterances) < 2:
            raise ValueError("conversation needs at least 2 utterances")

    def speaker(self, index):
        """Alternating-speaker convention: parity of the utterance index."""
        return 1 if index % 2 == 0 else 2


@dataclass(frozen=True)
class TrainingSample:
    topic: str
    history: tuple  # (speaker, Utterance) pairs, oldest first
    candidate: Utterance
    candidate_emotion: str
    is_gold_utterance: bool
    is_gold_emotion: bool
    source: str  # gold | utterance-distractor | emotion-distractor
    conversation_index: int
    position: int  # 1-based target turn index within its conversation


@dataclass
class InputRepresentation:
    token_ids: list
    position_ids: list
    emotion_ids: list
    action_ids: list
    candidate_span: tuple = field(default=(0, 0))  # [start, stop) excluding cls

    def __post_init__(self):
        n = len(self.token_ids)
        if not (len(self.position_ids) == len(self.emotion_ids) == len(self.action_ids) == n):
            raise ValueError("input rows must have equal length")

    def __len__(self):
        return len(self.token_ids)


# ---------------------------------------------------------------------------
# loading


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return f.read().splitlines()


def load_corpus(dialogues_path, emotions_path, acts_path, topics_path):
    """Parse the four parallel DailyDialog files into validated conversations."""
    texts = _read_lines(dialogues_path)
    emotions = _read_lines(emotions_path)
    acts = _read_lines(acts_path)
    topics = _read_lines(topics_path)
    for name, lines in (("emotion", emotions), ("act", acts), ("topic", topics)):
        if len(lines) != len(texts):
            raise ValueError(
                f"{name} file has {len(lines)} lines but dialogue file has {len(texts)}"
            )
    if not texts:
        log.warning("empty corpus: %s has no lines", dialogues_path)
        return []

    conversations = []
    for lineno, (text_line, emo_line, act_line, topic_line) in enumerate(
        zip(texts, emotions, acts, topics), start=1
    ):
        utt_texts = [u.strip() for u in text_line.split(UTTERANCE_SEP) if u.strip()]
        emo_digits = emo_line.split()
        act_digits = act_line.split()
        if len(emo_digits) != len(utt_texts):
            raise ValueError(
                f"line {lineno}: {len(utt_texts)} utterances but {len(emo_digits)} emotion digits"
            )
        if len(act_digits) != len(utt_texts):
            raise ValueError(
                f"line {lineno}: {len(utt_texts)} utterances but {len(act_digits)} act digits"
            )
        topic_digit = topic_line.strip()
        if topic_digit not in TOPIC_OF_DIGIT:
            raise ValueError(f"line {lineno}: unknown topic digit {topic_digit!r}")
        utterances = []
        for u, e, a in zip(utt_texts, emo_digits, act_digits):
            if e not in EMOTION_OF_DIGIT:
                raise ValueError(f"line {lineno}: unknown emotion digit {e!r}")
            if a not in ACT_OF_DIGIT:
                raise ValueError(f"line {lineno}: unknown act digit {a!r}")
            utterances.append(Utterance(u, EMOTION_OF_DIGIT[e], ACT_OF_DIGIT[a]))
        if len(utterances) < 2:
            log.warning("line %d: skipping conversation with < 2 utterances", lineno)
            continue
        conversations.append(Conversation(TOPIC_OF_DIGIT[topic_digit], tuple(utterances)))
    return conversations


def load_corpus_jsonl(path):
    """JSON-lines alternative: {topic, utterances: [{text, emotion, act}]} per line."""
    conversations = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                utts = tuple(
                    Utterance(u["text"], u["emotion"], u["act"]) for u in obj["utterances"]
                )
                if len(utts) < 2:
                    log.warning("line %d: skipping conversation with < 2 utterances", lineno)
                    continue
                conversations.append(Conversation(obj["topic"], utts))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    return conversations


# ---------------------------------------------------------------------------
# sample building


def build_samples(corpus, history_window=2, n_utt_distractors=1, n_emo_distractors=1, rng_seed=0):
    """Sliding-window gold samples plus seeded utterance/emotion distractors.

    For every conversation position t in [history_window+1, n] (1-based)
    emits one gold sample, then n_utt_distractors candidates drawn uniformly
    from other conversations' utterances, then n_emo_distractors copies of
    the gold text carrying a uniformly drawn wrong emotion.
    """
    if history_window < 1:
        raise ValueError("history_window must be >= 1")
    if n_utt_distractors > 0 and len(corpus) < 2:
        raise ValueError("utterance distractors need at least 2 conversations")
    if n_emo_distractors >= len(EMOTIONS):
        raise ValueError(
            f"at most {len(EMOTIONS) - 1} distinct distractor emotions exist"
        )

    pool = []  # (conversation index, utterance) over the whole corpus
    for ci, conv in enumerate(corpus):
        pool.extend((ci, u) for u in conv.utterances)

    rng = stream(rng_seed, "distractors")
    samples = []
    for ci, conv in enumerate(corpus):
        n = len(conv.utterances)
        for t in range(history_window + 1, n + 1):
            gold = conv.utterances[t - 1]
            history = tuple(
                (conv.speaker(i), conv.utterances[i]) for i in range(t - 1 - history_window, t - 1)
            )
            samples.append(
                TrainingSample(
                    topic=conv.topic,
                    history=history,
                    candidate=gold,
                    candidate_emotion=gold.emotion,
                    is_gold_utterance=True,
                    is_gold_emotion=True,
                    source="gold",
                    conversation_index=ci,
                    position=t,
                )
            )
            for _ in range(n_utt_distractors):
                while True:
                    pi = int(rng.integers(0, len(pool)))
                    if pool[pi][0] != ci:
                        break
                distractor = pool[pi][1]
                samples.append(
                    TrainingSample(
                        topic=conv.topic,
                        history=history,
                        candidate=distractor,
                        candidate_emotion=distractor.emotion,
                        is_gold_utterance=False,
                        is_gold_emotion=False,
                        source="utterance-distractor",
                        conversation_index=ci,
                        position=t,
                    )
                )
            wrong_emotions = [e for e in EMOTIONS if e != gold.emotion]
            # distractor emotions form a set: drawn without replacement
            picks = rng.permutation(len(wrong_emotions))[:n_emo_distractors]
            for wi in picks:
                wrong = wrong_emotions[int(wi)]
                samples.append(
                    TrainingSample(
                        topic=conv.topic,
                        history=history,
                        candidate=gold,
                        candidate_emotion=wrong,
                        is_gold_utterance=True,
                        is_gold_emotion=False,
                        source="emotion-distractor",
                        conversation_index=ci,
                        position=t,
                    )
                )
    return samples


# ---------------------------------------------------------------------------
# input assembly


def assemble_input(vocab, topic, history, candidate_tokens, candidate_emotion,
                   candidate_act, max_len):
    """Shared assembly for training samples, probes, and generation contexts.

    history is a list of (speaker, Utterance); candidate_tokens may be empty
    (generation seeds and emotion-probe stubs append their own tail).
    """
    cand_ids = list(candidate_tokens)
    cand_emo = emotion_row(candidate_emotion)
    cand_act = act_row(candidate_act)

    head_len = 2  # topic + bos
    tail_len = len(cand_ids) + 1  # candidate span + cls
    if head_len + tail_len > max_len:
        raise ContextOverflowError(
            f"candidate span of {len(cand_ids)} tokens cannot fit in max_len {max_len}"
        )

    hist_tokens = []  # (token_id, emotion_row, act_row)
    for speaker, utt in history:
        span = [vocab.speaker_id(speaker)] + vocab.encode(utt.text)
        erow, arow = emotion_row(utt.emotion), act_row(utt.act)
        hist_tokens.extend((tid, erow, arow) for tid in span)

    budget = max_len - head_len - tail_len
    if len(hist_tokens) > budget:
        hist_tokens = hist_tokens[len(hist_tokens) - budget :]

    neutral_e, neutral_a = emotion_row(None), act_row(None)
    token_ids = [vocab.label_id(topic), vocab.bos_id]
    emotion_ids = [neutral_e, neutral_e]
    action_ids = [neutral_a, neutral_a]
    for tid, erow, arow in hist_tokens:
        token_ids.append(tid)
        emotion_ids.append(erow)
        action_ids.append(arow)

    span_start = len(token_ids)
    token_ids.extend(cand_ids)
    emotion_ids.extend([cand_emo] * len(cand_ids))
    action_ids.extend([cand_act] * len(cand_ids))
    span_stop = len(token_ids)

    token_ids.append(vocab.cls_id)
    emotion_ids.append(neutral_e)
    action_ids.append(neutral_a)

    return InputRepresentation(
        token_ids=token_ids,
        position_ids=list(range(len(token_ids))),
        emotion_ids=emotion_ids,
        action_ids=action_ids,
        candidate_span=(span_start, span_stop),
    )


def build_input(sample, vocab, max_len):
    """Id rows for a training sample; candidate span ends with eos."""
    candidate_tokens = vocab.encode(sample.candidate.text) + [vocab.eos_id]
    return assemble_input(
        vocab,
        sample.topic,
        list(sample.history),
        candidate_tokens,
        sample.candidate_emotion,
        sample.candidate.act,
        max_len,
    )


# ---------------------------------------------------------------------------
# sample cache: u64-length-prefixed JSON manifest, then u64 record count,
# then u32-length-prefixed JSON records (conversations first, then samples)

_CACHE_FORMAT = "empchat-samples"


def _sample_to_obj(s):
    return {
        "topic": s.topic,
        "history": [[spk, asdict(u)] for spk, u in s.history],
        "candidate": asdict(s.candidate),
        "candidate_emotion": s.candidate_emotion,
        "is_gold_utterance": s.is_gold_utterance,
        "is_gold_emotion": s.is_gold_emotion,
        "source": s.source,
        "conversation_index": s.conversation_index,
        "position": s.position,
    }


def _sample_from_obj(o):
    return TrainingSample(
        topic=o["topic"],
        history=tuple((spk, Utterance(**u)) for spk, u in o["history"]),
        candidate=Utterance(**o["candidate"]),
        candidate_emotion=o["candidate_emotion"],
        is_gold_utterance=o["is_gold_utterance"],
        is_gold_emotion=o["is_gold_emotion"],
        source=o["source"],
        conversation_index=o["conversation_index"],
        position=o["position"],
    )


def save_sample_cache(path, corpus, samples, manifest_extra=None):
    manifest = {
        "format": _CACHE_FORMAT,
        "version": 1,
        "n_conversations": len(corpus),
        "n_samples": len(samples),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    records = [
        {"topic": c.topic, "utterances": [asdict(u) for u in c.utterances]} for c in corpus
    ] + [_sample_to_obj(s) for s in samples]
    with open(path, "wb") as f:
        mbytes = json.dumps(manifest).encode()
        f.write(struct.pack("<Q", len(mbytes)))
        f.write(mbytes)
        f.write(struct.pack("<Q", len(records)))
        for rec in records:
            raw = json.dumps(rec, ensure_ascii=False).encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)


def load_sample_cache(path):
    with open(path, "rb") as f:
        (mlen,) = struct.unpack("<Q", f.read(8))
        manifest = json.loads(f.read(mlen).decode())
        if manifest.get("format") != _CACHE_FORMAT:
            raise ValueError(f"{path} is not a sample cache")
        (count,) = struct.unpack("<Q", f.read(8))
        records = []
        for _ in range(count):
            (rlen,) = struct.unpack("<I", f.read(4))
            records.append(json.loads(f.read(rlen).decode()))
    n_conv = manifest["n_conversations"]
    corpus = [
        Conversation(r["topic"], tuple(Utterance(**u) for u in r["utterances"]))
        for r in records[:n_conv]
    ]
    samples = [_sample_from_obj(r) for r in records[n_conv:]]
    return manifest, corpus, samples
