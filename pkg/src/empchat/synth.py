"""Deterministic synthetic dialog corpus for smoke tests and demos.

Six scripted four-turn conversations are instantiated with a per-copy tag
word appended to every utterance, so candidate replies stay unique across
copies (distractors never collide with the gold text byte for byte).
Third and fourth turns reuse a small shared phrase pool across scripts with
DIFFERENT emotion labels, which kills the lexical shortcut from reply text
to emotion: the next emotion is recoverable only from the history texts and
their emotion rows, the same evidence the stub probes see.
"""

import json

from .corpus import Conversation, Utterance

_P3 = ["That settles it then", "I hear you clearly", "Let us see about that"]
_P4 = ["So it goes my friend", "Time will tell us more", "We can talk tomorrow"]

SCRIPTS = [
    ("work", [
        ("Where is the quarterly report", "no-emotion", "question"),
        ("It is on your desk", "no-emotion", "inform"),
        (_P3[0], "happiness", "inform"),
        (_P4[0], "happiness", "inform"),
    ]),
    ("health", [
        ("I feel sick today", "sadness", "inform"),
        ("You should see a doctor", "no-emotion", "directive"),
        (_P3[1], "fear", "inform"),
        (_P4[1], "no-emotion", "inform"),
    ]),
    ("finance", [
        ("The bank charged me twice", "anger", "inform"),
        ("That is outrageous", "anger", "inform"),
        (_P3[2], "anger", "commissive"),
        (_P4[2], "anger", "inform"),
    ]),
    ("tourism", [
        ("We climbed the old tower", "happiness", "inform"),
        ("What a view that must be", "surprise", "inform"),
        (_P3[0], "surprise", "inform"),
        (_P4[0], "no-emotion", "inform"),
    ]),
    ("relationship", [
        ("He forgot my birthday again", "sadness", "inform"),
        ("That is really thoughtless", "disgust", "inform"),
        (_P3[1], "sadness", "inform"),
        (_P4[1], "disgust", "inform"),
    ]),
    ("school-life", [
        ("I won the science fair", "happiness", "inform"),
        ("Congratulations that is amazing", "happiness", "inform"),
        (_P3[2], "no-emotion", "question"),
        (_P4[2], "happiness", "inform"),
    ]),
]

# the history emotion pair alone determines the next emotion (every
# (e_{t-2}, e_{t-1}) key below is unique across scripts and positions),
# so the prediction task is solvable from evidence the stub probes carry
_EMOTION_KEYS = {
    (s[1][i][1], s[1][i + 1][1]): s[1][i + 2][1] for s in SCRIPTS for i in (0, 1)
}
assert len(_EMOTION_KEYS) == 11

TAGS = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "iota", "kappa", "lam", "mu", "nu", "xi", "omicron", "pi", "rho",
    "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega", "one", "two",
    "three", "four", "five", "six",
]


def toy_corpus(n_dialogues=30):
    """n_dialogues tagged copies cycling through the six scripts."""
    if n_dialogues > len(TAGS):
        raise ValueError(f"at most {len(TAGS)} dialogues available")
    conversations = []
    for i in range(n_dialogues):
        topic, turns = SCRIPTS[i % len(SCRIPTS)]
        tag = TAGS[i]
        utts = tuple(
            Utterance(f"{text} {tag}.", emotion, act) for text, emotion, act in turns
        )
        conversations.append(Conversation(topic, utts))
    return conversations


def corpus_text(corpus):
    """All utterance text, one line per conversation (tokenizer training food)."""
    return "\n".join(" ".join(u.text for u in c.utterances) for c in corpus)


def write_jsonl(path, corpus):
    with open(path, "w", encoding="utf-8") as f:
        for conv in corpus:
            obj = {
                "topic": conv.topic,
                "utterances": [
                    {"text": u.text, "emotion": u.emotion, "act": u.act}
                    for u in conv.utterances
                ],
            }
            f.write(json.dumps(obj) + "\n")
