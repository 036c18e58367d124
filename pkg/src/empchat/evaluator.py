"""Reported metrics: Hit@1 against sampled distractors, perplexity, corpus
BLEU-4, token-level F1, and the next-emotion confusion matrix.

BLEU uses add-one smoothing on higher-order precisions whenever a matched
count is zero ((m+1)/(t+1), so an empty order contributes 1/1); order-1 is
never smoothed. Perplexity is natural-base. Hit@1 counts ties as misses.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field, asdict

import numpy as np

from .corpus import build_input, build_samples
from .decoder import SamplingParams, generate
from .labels import EMOTIONS
from .model import forward, predict_emotion, utterance_score

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    hit_at_1: float | None = None
    ppl: float | None = None
    bleu: float | None = None
    token_f1: float | None = None
    emotion_labels: list = field(default_factory=list)
    emotion_confusion: list = field(default_factory=list)
    emotion_precision: float | None = None
    emotion_recall: float | None = None
    emotion_f1: float | None = None
    notes: list = field(default_factory=list)

    def to_json(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# Hit@1


def hit_fraction(score_groups):
    """Fraction of groups whose first (gold) score strictly beats the rest."""
    if not score_groups:
        raise ValueError("no evaluation positions")
    hits = 0
    for gold, distractors in score_groups:
        if all(gold > d for d in distractors):
            hits += 1
    return hits / len(score_groups)


def build_ranking_groups(corpus, history_window=2, n_distractors=19, seed=0):
    """(gold sample, distractor samples) per eligible conversation position."""
    total_utts = sum(len(c.utterances) for c in corpus)
    for conv in corpus:
        if total_utts - len(conv.utterances) < n_distractors:
            raise ValueError(
                f"only {total_utts - len(conv.utterances)} distractor sources available, "
                f"need {n_distractors}"
            )
    samples = build_samples(
        corpus,
        history_window=history_window,
        n_utt_distractors=n_distractors,
        n_emo_distractors=0,
        rng_seed=seed,
    )
    groups = []
    current = None
    for s in samples:
        if s.source == "gold":
            current = (s, [])
            groups.append(current)
        else:
            current[1].append(s)
    return groups


def hit_at_1(params, config, vocab, corpus, history_window=2, n_distractors=19, seed=0,
             scorer=None):
    """Gold-vs-distractor ranking accuracy; ties count as misses."""
    groups = build_ranking_groups(corpus, history_window, n_distractors, seed)

    if scorer is None:
        def scorer(sample):
            rep = build_input(sample, vocab, config.max_positions)
            return utterance_score(params, config, rep)

    score_groups = []
    for gold, distractors in groups:
        gold_score = scorer(gold)
        distractor_scores = [scorer(d) for d in distractors]
        if config is not None and config.head_variant == "multichoice":
            # softmax over the candidate group; ranking is unchanged, the
            # scores just become comparable across groups
            raw = np.array([gold_score] + distractor_scores)
            z = np.exp(raw - raw.max())
            z /= z.sum()
            gold_score, distractor_scores = z[0], list(z[1:])
        score_groups.append((gold_score, distractor_scores))
    return hit_fraction(score_groups)


# ---------------------------------------------------------------------------
# perplexity


def _log_softmax(rows):
    shifted = rows - rows.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def span_nll(lm_logits, rep):
    """Summed -log p over the candidate span; returns (nll, token count)."""
    start, stop = rep.candidate_span
    logp = _log_softmax(np.asarray(lm_logits[start - 1 : stop - 1], dtype=np.float64))
    targets = rep.token_ids[start:stop]
    nll = -logp[np.arange(len(targets)), targets]
    return float(nll.sum()), len(targets)


def perplexity(params, config, vocab, samples):
    """exp of mean per-token negative log-probability over gold spans."""
    total_nll = 0.0
    total_tokens = 0
    for s in samples:
        if not s.is_gold_utterance:
            continue
        rep = build_input(s, vocab, config.max_positions)
        out = forward(rep, params, config, train_mode=False)
        nll, count = span_nll(out.lm_logits.data, rep)
        total_nll += nll
        total_tokens += count
    if total_tokens == 0:
        raise ValueError("no gold candidate tokens to evaluate")
    if not np.isfinite(total_nll):
        log.warning("zero-probability gold token: perplexity is infinite")
        return float("inf")
    return float(np.exp(total_nll / total_tokens))


# ---------------------------------------------------------------------------
# BLEU and token F1


def _ngram_counts(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references):
    """Corpus BLEU-4 with brevity penalty and pinned add-one smoothing."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference count mismatch")
    if not hypotheses:
        raise ValueError("empty corpus")
    matched = np.zeros(4)
    total = np.zeros(4)
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp, ref = list(hyp), list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hc = _ngram_counts(hyp, n)
            rc = _ngram_counts(ref, n)
            matched[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += sum(hc.values())
    precisions = []
    for n in range(1, 5):
        m, t = matched[n - 1], total[n - 1]
        if n == 1:
            precisions.append(m / t if t else 0.0)
        elif m == 0:
            precisions.append((m + 1) / (t + 1))
        else:
            precisions.append(m / t)
    if hyp_len == 0 or precisions[0] == 0.0 or any(p == 0.0 for p in precisions):
        return 0.0
    geo = float(np.exp(np.mean(np.log(precisions))))
    bp = 1.0 if hyp_len >= ref_len else float(np.exp(1.0 - ref_len / hyp_len))
    return bp * geo


def token_f1(hypothesis, reference):
    """Harmonic mean of multiset-overlap precision and recall for one pair."""
    hyp, ref = list(hypothesis), list(reference)
    if not hyp and not ref:
        return 1.0
    if not hyp or not ref:
        return 0.0
    overlap = sum((Counter(hyp) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(hyp)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def corpus_token_f1(hypotheses, references):
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference count mismatch")
    if not hypotheses:
        raise ValueError("empty corpus")
    return float(np.mean([token_f1(h, r) for h, r in zip(hypotheses, references)]))


# ---------------------------------------------------------------------------
# emotion confusion


def emotion_confusion(params, config, vocab, corpus, history_window=2,
                      exclude_no_emotion=False, micro=False, predictor=None):
    """Gold-vs-predicted next-emotion counts plus aggregate P/R/F1.

    Rows are gold labels, columns predictions. Aggregates are macro averages
    over classes present in the eval set (micro=True switches to pooled
    counts); F1 is the harmonic mean of the two aggregates.
    """
    labels = [e for e in EMOTIONS if not (exclude_no_emotion and e == "no-emotion")]
    index = {e: i for i, e in enumerate(labels)}
    k = len(labels)
    matrix = np.zeros((k, k), dtype=np.int64)

    if predictor is None:
        def predictor(history, topic):
            return predict_emotion(history, topic, params, vocab, config)

    for conv in corpus:
        n = len(conv.utterances)
        for t in range(history_window + 1, n + 1):
            gold = conv.utterances[t - 1].emotion
            if gold not in index:
                continue
            history = [
                (conv.speaker(i), conv.utterances[i])
                for i in range(t - 1 - history_window, t - 1)
            ]
            ranked = predictor(history, conv.topic)
            predicted = next(label for label, _ in ranked if label in index)
            matrix[index[gold], index[predicted]] += 1

    notes = []
    row_sums = matrix.sum(axis=1)
    col_sums = matrix.sum(axis=0)
    present = [i for i in range(k) if row_sums[i] > 0]
    skipped = [labels[i] for i in range(k) if row_sums[i] == 0]
    if skipped:
        notes.append(f"classes absent from eval set, skipped in macro average: {skipped}")
    if not present:
        raise ValueError("no evaluation positions with gold emotions")

    if micro:
        correct = float(np.trace(matrix))
        total = float(matrix.sum())
        precision = recall = correct / total
    else:
        precisions = []
        recalls = []
        for i in present:
            recalls.append(matrix[i, i] / row_sums[i])
            if col_sums[i] > 0:
                precisions.append(matrix[i, i] / col_sums[i])
            else:
                precisions.append(0.0)
                notes.append(f"class never predicted, precision counted as 0: {labels[i]}")
        precision = float(np.mean(precisions))
        recall = float(np.mean(recalls))
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return {
        "labels": labels,
        "matrix": matrix.tolist(),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "notes": notes,
    }


# ---------------------------------------------------------------------------
# full evaluation


def _config_hash(config):
    payload = json.dumps(config.to_json(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def evaluate_model(params, config, vocab, corpus, history_window=2, n_distractors=19,
                   seed=0, sampling=None, exclude_no_emotion=False, micro=False,
                   max_generation_positions=None):
    """Run every metric over a corpus and return (EvalReport, metadata)."""
    sampling = sampling or SamplingParams(rng_seed=seed)
    report = EvalReport()

    report.hit_at_1 = hit_at_1(
        params, config, vocab, corpus, history_window, n_distractors, seed
    )

    gold_samples = build_samples(corpus, history_window, 0, 0, rng_seed=seed)
    report.ppl = perplexity(params, config, vocab, gold_samples)

    hyps, refs = [], []
    positions = gold_samples
    if max_generation_positions is not None:
        positions = positions[:max_generation_positions]
    for i, s in enumerate(positions):
        per_position = SamplingParams(
            p=sampling.p,
            temperature=sampling.temperature,
            max_new_tokens=sampling.max_new_tokens,
            rng_seed=(sampling.rng_seed or 0) + i,
        )
        text, _ = generate(
            list(s.history), s.topic, params, vocab, config, per_position,
            candidate_emotion=s.candidate_emotion, candidate_act=s.candidate.act,
        )
        hyps.append(vocab.encode(text))
        refs.append(vocab.encode(s.candidate.text))
    report.bleu = bleu(hyps, refs)
    report.token_f1 = corpus_token_f1(hyps, refs)

    emo = emotion_confusion(
        params, config, vocab, corpus, history_window, exclude_no_emotion, micro
    )
    report.emotion_labels = emo["labels"]
    report.emotion_confusion = emo["matrix"]
    report.emotion_precision = emo["precision"]
    report.emotion_recall = emo["recall"]
    report.emotion_f1 = emo["f1"]
    report.notes = emo["notes"]

    meta = {
        "config_hash": _config_hash(config),
        "seed": seed,
        "n_distractors": n_distractors,
        "history_window": history_window,
        "sampling": sampling.to_json(),
    }
    return report, meta


def write_report(path, report, meta):
    payload = {**report.to_json(), **meta}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
