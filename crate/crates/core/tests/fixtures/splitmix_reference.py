"""Standalone reference for known-intent sampling (SplitMix64 + Fisher-Yates).

Regenerate the fixture with: python3 splitmix_reference.py > known_intents_reference.json
"""
import json
import math

MASK = (1 << 64) - 1


def splitmix64(seed):
    state = seed & MASK
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


def sample(labels, ratio, seed):
    labels = sorted(labels, key=lambda s: [ord(c) for c in s])
    k = max(1, math.floor(ratio * len(labels) + 0.5))
    rng = splitmix64(seed)
    for i in range(len(labels) - 1, 0, -1):
        j = next(rng) % (i + 1)
        labels[i], labels[j] = labels[j], labels[i]
    return labels[:k]


cases = []
for labels, ratio, seed in [
    (list("abcde"), 0.4, 0),
    (list("abcde"), 0.4, 1),
    ([f"intent_{i:02}" for i in range(77)], 0.25, 0),
    ([f"intent_{i:02}" for i in range(77)], 0.25, 9),
    ([f"l{i}" for i in range(8)], 0.5, 3),
]:
    cases.append({"labels": labels, "ratio": ratio, "seed": seed, "expected": sample(labels, ratio, seed)})

first = splitmix64(0)
print(json.dumps({"splitmix64_seed0_first3": [next(first) for _ in range(3)], "cases": cases}, indent=1))
