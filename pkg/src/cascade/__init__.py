"""Contextual sarcasm detection for discussion forums.

Content modeling (a convolutional comment encoder) combined with contextual
features: stylometric document vectors and personality trait vectors per
user, fused by canonical correlation analysis, plus per-forum discourse
vectors. See the ``cascade`` CLI for end-to-end runs.
"""

__version__ = "0.1.0"
