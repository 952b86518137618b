"""Independent, naive reference implementations used to derive expected values.

These are deliberately written from the pinned metric definitions with a
different structure from the package code (plain dicts and loops, no shared
helpers) so they can serve as oracles.
"""

import math
from collections import Counter


def ngram_counts(tokens, n):
    out = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i:i + n])
        out[g] = out.get(g, 0) + 1
    return out


def naive_bleu(pairs, n):
    """pairs: list of (candidate, references)."""
    match = [0] * n
    total = [0] * n
    c_len = 0
    r_len = 0
    for cand, refs in pairs:
        c_len += len(cand)
        best = None
        for ref in refs:
            key = (abs(len(ref) - len(cand)), len(ref))
            if best is None or key < best:
                best = key
        r_len += best[1]
        for k in range(1, n + 1):
            cc = ngram_counts(cand, k)
            clip = {}
            for ref in refs:
                for g, c in ngram_counts(ref, k).items():
                    clip[g] = max(clip.get(g, 0), c)
            match[k - 1] += sum(min(c, clip.get(g, 0)) for g, c in cc.items())
            total[k - 1] += max(len(cand) - k + 1, 0)
    acc = 0.0
    for k in range(n):
        num, den = match[k], total[k]
        if den == 0:
            return 0.0
        if num == 0:
            if k == 0:
                return 0.0
            num += 1
            den += 1
        acc += math.log(num / den)
    bp = 1.0 if c_len > r_len else (math.exp(1 - r_len / c_len) if c_len else 0.0)
    return bp * math.exp(acc / n)


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[-1][-1]


def naive_rouge_l(pairs, beta=1.2):
    scores = []
    for cand, refs in pairs:
        best = 0.0
        for ref in refs:
            l = lcs(cand, ref)
            if l == 0:
                continue
            r = l / len(ref)
            p = l / len(cand)
            f = (1 + beta * beta) * r * p / (r + beta * beta * p)
            best = max(best, f)
        scores.append(best)
    return sum(scores) / len(scores)


def naive_cider(pairs, max_order=4, scale=10.0):
    """Document frequencies from the pairs' own reference sets."""
    num_docs = len(pairs)
    df = [{} for _ in range(max_order)]
    for _, refs in pairs:
        for k in range(1, max_order + 1):
            grams = set()
            for ref in refs:
                grams.update(ngram_counts(ref, k))
            for g in grams:
                df[k - 1][g] = df[k - 1].get(g, 0) + 1

    def vec(tokens, k):
        return {g: c * (math.log(max(num_docs, 1)) - math.log(max(df[k - 1].get(g, 0), 1)))
                for g, c in ngram_counts(tokens, k).items()}

    def cos(u, v):
        nu = math.sqrt(sum(x * x for x in u.values()))
        nv = math.sqrt(sum(x * x for x in v.values()))
        if nu == 0 or nv == 0:
            return 0.0
        return sum(u[g] * v.get(g, 0.0) for g in u) / (nu * nv)

    out = []
    for cand, refs in pairs:
        s = 0.0
        for k in range(1, max_order + 1):
            cv = vec(cand, k)
            s += sum(cos(cv, vec(r, k)) for r in refs) / len(refs)
        out.append(scale * s / max_order)
    return sum(out) / len(out)


def naive_meteor(pairs):
    """Pinned METEOR-lite: greedy positional alignment, 9:1 recall weighting,
    0.5*(chunks/matches)^3 penalty on fragmented alignments only."""
    suffixes = ("ing", "ed", "es", "ly", "s")

    def stem(w):
        for s in suffixes:
            if w.endswith(s) and len(w) - len(s) >= 3:
                return w[: -len(s)]
        return w

    scores = []
    for cand, refs in pairs:
        best = 0.0
        for ref in refs:
            taken_r = set()
            align = {}
            for stage in (False, True):
                for i, cw in enumerate(cand):
                    if i in align:
                        continue
                    for j, rw in enumerate(ref):
                        if j in taken_r:
                            continue
                        same = (stem(cw) == stem(rw)) if stage else (cw == rw)
                        if same:
                            align[i] = j
                            taken_r.add(j)
                            break
            m = len(align)
            if m == 0:
                continue
            pairs_sorted = sorted(align.items())
            chunks = 1
            for (i0, j0), (i1, j1) in zip(pairs_sorted, pairs_sorted[1:]):
                if i1 != i0 + 1 or j1 != j0 + 1:
                    chunks += 1
            p = m / len(cand)
            r = m / len(ref)
            fmean = 10 * p * r / (r + 9 * p)
            pen = 0.5 * (chunks / m) ** 3 if chunks > 1 else 0.0
            best = max(best, fmean * (1 - pen))
        scores.append(best)
    return sum(scores) / len(scores)


def naive_spice(pairs, nouns, adjectives, verbs):
    matched = 0
    cand_total = 0
    ref_total = 0

    def tuples(tokens):
        out = Counter()
        npos = [i for i, t in enumerate(tokens) if t in nouns]
        for i in npos:
            out[("object", tokens[i])] += 1
            if i and tokens[i - 1] in adjectives:
                out[("attribute", tokens[i], tokens[i - 1])] += 1
        for i, t in enumerate(tokens):
            if t in verbs:
                before = [p for p in npos if p < i]
                beyond = [p for p in npos if p > i]
                if before and beyond:
                    out[("relation", tokens[before[-1]], t, tokens[beyond[0]])] += 1
        return out

    for cand, refs in pairs:
        ct = tuples(cand)
        merged = Counter()
        for ref in refs:
            for t, c in tuples(ref).items():
                merged[t] = max(merged[t], c)
        matched += sum(min(c, merged[t]) for t, c in ct.items())
        cand_total += sum(ct.values())
        ref_total += sum(merged.values())
    p = matched / cand_total if cand_total else 0.0
    r = matched / ref_total if ref_total else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def central_difference_gradient(f, x, eps=1e-4):
    """Numeric gradient of scalar f at flat numpy vector x."""
    import numpy as np

    g = np.zeros_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        up = f()
        x[i] = orig - eps
        down = f()
        x[i] = orig
        g[i] = (up - down) / (2 * eps)
    return g
