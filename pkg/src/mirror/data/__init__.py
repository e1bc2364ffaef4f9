"""Bundled corpora: a 32-triple toy corpus and its first-8 subset, so the
verification suite and overfit tests run with zero downloads."""

import os

BUILTIN = {
    "toy": "toy_corpus.jsonl",
    "toy8": "toy8_corpus.jsonl",
}


def builtin_corpus_path(name: str) -> str:
    if name not in BUILTIN:
        raise KeyError(f"no builtin corpus named '{name}'")
    return os.path.join(os.path.dirname(__file__), BUILTIN[name])
