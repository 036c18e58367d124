"""Closed label sets for emotions, dialog acts, and conversation topics."""

EMOTIONS = (
    "no-emotion",
    "anger",
    "disgust",
    "fear",
    "happiness",
    "sadness",
    "surprise",
)

ACTS = ("inform", "question", "directive", "commissive")

TOPICS = (
    "ordinary-life",
    "school-life",
    "culture-education",
    "attitude-emotion",
    "relationship",
    "tourism",
    "health",
    "work",
    "politics",
    "finance",
)

NEUTRAL = "neutral"

EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}
ACT_INDEX = {name: i for i, name in enumerate(ACTS)}
TOPIC_INDEX = {name: i for i, name in enumerate(TOPICS)}

# embedding-row id spaces: the real labels followed by the neutral-meta slot
EMOTION_ROW_NEUTRAL = len(EMOTIONS)
ACT_ROW_NEUTRAL = len(ACTS)
N_EMOTION_ROWS = len(EMOTIONS) + 1
N_ACT_ROWS = len(ACTS) + 1


def emotion_row(label):
    """Emotion-embedding row index for a label; None/'neutral' map to the meta slot."""
    if label is None or label == NEUTRAL:
        return EMOTION_ROW_NEUTRAL
    if label not in EMOTION_INDEX:
        raise ValueError(f"unknown emotion label {label!r}")
    return EMOTION_INDEX[label]


def act_row(label):
    if label is None or label == NEUTRAL:
        return ACT_ROW_NEUTRAL
    if label not in ACT_INDEX:
        raise ValueError(f"unknown act label {label!r}")
    return ACT_INDEX[label]
