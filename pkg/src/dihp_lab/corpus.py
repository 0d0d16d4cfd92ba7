"""Access to the bundled instance corpus."""
from __future__ import annotations

import json
from importlib import resources

from .csp_core import Instance, instance_from_json


def corpus_names():
    files = resources.files("dihp_lab").joinpath("corpus")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_named(name) -> Instance:
    text = resources.files("dihp_lab").joinpath("corpus", name + ".json").read_text()
    return instance_from_json(json.loads(text))


def load_corpus():
    return {name: load_named(name) for name in corpus_names()}
