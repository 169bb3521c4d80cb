"""Okapi BM25 over character bigrams of type names."""
from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

K1 = 1.2
B = 0.75


def bigrams(name: str) -> list[str]:
    s = name.lower()
    return [s[i : i + 2] for i in range(len(s) - 1)]


class NameIndex:
    def __init__(self, names: Sequence[str], k1: float = K1, b: float = B):
        self.names = list(names)
        self.k1 = k1
        self.b = b
        self.docs = [Counter(bigrams(n)) for n in self.names]
        self.lengths = [sum(d.values()) for d in self.docs]
        self.avgdl = (sum(self.lengths) / len(self.lengths)) if self.lengths else 0.0
        df: Counter[str] = Counter()
        for d in self.docs:
            df.update(d.keys())
        n = len(self.names)
        # Lucene-style idf: never negative, so common bigrams still count a little
        self.idf = {t: math.log(1.0 + (n - c + 0.5) / (c + 0.5)) for t, c in df.items()}

    def scores(self, query: str) -> list[float]:
        terms = bigrams(query)
        out = []
        for doc, dl in zip(self.docs, self.lengths):
            norm = self.k1 * (1 - self.b + self.b * dl / self.avgdl) if self.avgdl else self.k1
            s = 0.0
            for t in terms:
                f = doc.get(t, 0)
                if f:
                    s += self.idf[t] * f * (self.k1 + 1) / (f + norm)
            out.append(s)
        return out
