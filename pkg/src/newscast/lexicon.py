"""Bundled demo sentiment lexicon for the dictionary-ranking baseline.

Covers the generic sentiment adjectives the synthetic grammar emits. Planted
signal tokens are deliberately not scored here, so on synthetic data the
sentiment ranking carries no information about the planted return signal.
"""

DEMO_LEXICON = {
    "strong": 0.8,
    "solid": 0.6,
    "record": 0.9,
    "robust": 0.7,
    "upbeat": 0.65,
    "favorable": 0.55,
    "weak": -0.8,
    "poor": -0.75,
    "disappointing": -0.9,
    "soft": -0.45,
    "downbeat": -0.6,
    "adverse": -0.7,
}
