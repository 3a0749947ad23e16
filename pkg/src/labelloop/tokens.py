"""The one tokenizer.

Dictionary features, bag-of-words vocabularies, and the search index all
tokenize through this module so that token boundaries agree everywhere:
lowercase, split on any non-alphanumeric character, no stemming, no
stop-word removal.
"""

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs, in document order."""
    return _TOKEN_RE.findall(text.lower())


def iter_ngrams(tokens: list[str], max_n: int = 2):
    """Yield unigrams then higher-order n-grams (space-joined), up to max_n."""
    yield from tokens
    for n in range(2, max_n + 1):
        for i in range(len(tokens) - n + 1):
            yield " ".join(tokens[i : i + n])
