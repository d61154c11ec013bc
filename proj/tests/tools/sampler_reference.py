"""Independent re-implementation of the pooled entropy sampler.

Regenerates the golden selection for tests/data/images20.jsonl. Shares no code
with the C++ library: MT19937-64 and the unbiased bounded draw are written out
from their published definitions.
"""
import json
import math
import sys


class MT19937_64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.index = 312
        self.mt[0] = seed & 0xFFFFFFFFFFFFFFFF
        for i in range(1, 312):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & 0xFFFFFFFFFFFFFFFF

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(312):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % 312] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + 156) % 312] ^ xa
        self.index = 0

    def __call__(self):
        if self.index >= 312:
            self._twist()
        y = self.mt[self.index]
        self.index += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & 0xFFFFFFFFFFFFFFFF


def draw_below(rng, bound):
    reject_below = (2**64 - bound) % bound
    while True:
        x = rng()
        if x >= reject_below:
            return x % bound


def entropy(counts):
    total = sum(counts.values())
    h = 0.0
    for c in sorted(counts.values()):
        if c:
            p = c / total
            h -= p * math.log(p)
    return h


def run(images, target, n_candidates, seed):
    eligible = [i for i in images if i["rotation"] == "zero" and 2 <= len(set(i["classes"])) <= 6]
    auto = [i for i in images if i["rotation"] == "zero" and len(set(i["classes"])) > 6]
    counts = {}
    selected = []
    for img in auto:
        selected.append(img["image_id"])
        for c in set(img["classes"]):
            counts[c] = counts.get(c, 0) + 1
    pools = [[i for i in eligible if len(set(i["classes"])) == k] for k in range(2, 7)]
    rng = MT19937_64(seed)
    turn = 0
    while len(selected) < target and any(pools):
        pool = pools[turn % 5]
        turn += 1
        if not pool:
            continue
        draws = min(n_candidates, len(pool))
        for i in range(draws):
            j = i + draw_below(rng, len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        best = None
        for i in range(draws):
            trial = dict(counts)
            for c in set(pool[i]["classes"]):
                trial[c] = trial.get(c, 0) + 1
            h = entropy(trial)
            key = (-h, pool[i]["image_id"])
            if best is None or key < best[0]:
                best = (key, i)
        chosen = pool.pop(best[1])
        selected.append(chosen["image_id"])
        for c in set(chosen["classes"]):
            counts[c] = counts.get(c, 0) + 1
    return selected


if __name__ == "__main__":
    check = MT19937_64(5489)
    for _ in range(9999):
        check()
    assert check() == 9981545732273789042, "MT19937-64 self-check failed"
    path, target, n, seed = sys.argv[1], int(sys.argv[2]), int(sys.argv[3]), int(sys.argv[4])
    with open(path) as fh:
        images = [json.loads(line) for line in fh if line.strip()]
    print(json.dumps(run(images, target, n, seed)))
