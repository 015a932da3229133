"""Token-level active learning for POS tagging.

Partially-supervised CRF tagger with cross-view consistency training,
data-selection strategies (random, uncertainty, committee, confusion-reducing,
and their oracle variants), a simulation harness with an evaluation suite,
and a live annotation HTTP service.
"""

__version__ = "0.1.0"
