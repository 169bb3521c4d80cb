"""Random labelled samples for metric property checks."""
from __future__ import annotations

import random

from slicetype.evaluator import SLOTS, EvalSample, categorize

ATOMS = ["int", "str", "float", "bool", "None", "Ggnn", "Path", "any", "bytes"]
CTORS = ["List", "Dict", "Set", "Optional", "Union", "Tuple"]


def random_type(rng: random.Random, depth: int = 0) -> str:
    r = rng.random()
    if depth < 2 and r < 0.3:
        ctor = rng.choice(CTORS)
        n = 1 if ctor in ("List", "Set", "Optional") else rng.randint(2, 3)
        return f"{ctor}[{', '.join(random_type(rng, depth + 1) for _ in range(n))}]"
    if depth < 2 and r < 0.4:
        return " | ".join(random_type(rng, depth + 1) for _ in range(2))
    if r < 0.45:
        fields = [f"{k}{'?' if rng.random() < 0.4 else ''}:{rng.choice(['number', 'string'])}"
                  for k in rng.sample("abcd", rng.randint(1, 3))]
        return "{" + ", ".join(fields) + "}"
    return rng.choice(ATOMS)


def random_samples(n: int, seed: int) -> list[EvalSample]:
    rng = random.Random(seed)
    out = []
    for i in range(n):
        label = random_type(rng)
        preds = [random_type(rng) for _ in range(rng.randint(0, 6))]
        if rng.random() < 0.4:
            preds.insert(rng.randint(0, len(preds)), label)
        out.append(EvalSample(f"s{i}", label, rng.choice(SLOTS), categorize(label), preds))
    return out
