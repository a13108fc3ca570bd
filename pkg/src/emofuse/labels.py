"""Frozen label vocabularies shared by every sub-system.

The emotion class order is alphabetical and must never change: score files,
checkpoints and fusion models all index classes by this order, and mixing
files produced under different orders would silently corrupt results.
"""

EMOTION_CLASSES = (
    "angry",
    "anxious",
    "disgust",
    "happy",
    "neutral",
    "sad",
    "surprise",
    "worried",
)

GENDERS = ("female", "male")

EMOTION_INDEX = {name: i for i, name in enumerate(EMOTION_CLASSES)}
GENDER_INDEX = {name: i for i, name in enumerate(GENDERS)}
