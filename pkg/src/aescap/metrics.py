"""Caption-quality and score-quality metrics.

All metrics operate on pre-tokenized candidate/reference pairs and use
deliberately pinned parameter choices so results are reproducible:

* BLEU-n — corpus-level modified n-gram precision with clipping, geometric
  mean over orders 1..n, brevity penalty from the closest reference length
  (ties -> shorter). When an order's clipped match count is zero, one is
  added to numerator and denominator for orders above 1.
* ROUGE-L — LCS F-measure with beta = 1.2, max over references, mean over pairs.
* CIDEr — per order 1..4, tf-idf cosine between candidate and each reference,
  averaged over references then orders, scaled by 10. idf = log(N / max(df, 1))
  with document frequencies over reference sets.
* METEOR-lite — unigram alignment (exact first, then suffix-stemmed),
  harmonic mean weighted 9:1 toward recall, fragmentation penalty
  0.5 * (chunks / matches)^3 applied only to fragmented (multi-chunk)
  alignments, max over references.
* SPICE-lite — rule-based proposition tuples over a shipped noun/adjective/
  verb lexicon; micro-averaged precision/recall over the corpus, F1 combined
  as 2PR/(P+R).
"""

from __future__ import annotations

import importlib.resources
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from .attributes import DISPLAY_NAMES
from .errors import ContractError

CIDER_MAX_ORDER = 4
CIDER_SCALE = 10.0
ROUGE_BETA = 1.2
METEOR_RECALL_WEIGHT = 9.0
METEOR_PENALTY_WEIGHT = 0.5
METEOR_PENALTY_POWER = 3.0


@dataclass
class EvalPair:
    """One scored candidate with its reference captions (all token lists)."""

    candidate: list[str]
    references: list[list[str]]
    attribute: str | None = None

    def __post_init__(self):
        if not self.references:
            raise ContractError("EvalPair needs at least one reference")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU


def bleu_n(pairs: list[EvalPair], n: int) -> float:
    if not 1 <= n <= 4:
        raise ContractError(f"bleu_n: order must be in 1..4, got {n}")
    matches = [0] * n
    totals = [0] * n
    cand_len = 0
    ref_len = 0
    for pair in pairs:
        cand = pair.candidate
        cand_len += len(cand)
        # closest reference length; ties broken toward the shorter reference
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in pair.references)[1]
        for k in range(1, n + 1):
            counts = _ngrams(cand, k)
            max_ref = Counter()
            for ref in pair.references:
                for gram, c in _ngrams(ref, k).items():
                    if c > max_ref[gram]:
                        max_ref[gram] = c
            matches[k - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[k - 1] += max(len(cand) - k + 1, 0)

    log_sum = 0.0
    for k in range(n):
        num, den = matches[k], totals[k]
        if den == 0:
            return 0.0
        if num == 0:
            if k == 0:
                return 0.0
            num, den = num + 1, den + 1  # add-one smoothing on higher orders
        log_sum += math.log(num / den)
    precision = math.exp(log_sum / n)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len) if cand_len else 0.0
    return bp * precision


# ---------------------------------------------------------------------------
# ROUGE-L


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(pairs: list[EvalPair]) -> float:
    if not pairs:
        return 0.0
    total = 0.0
    for pair in pairs:
        best = 0.0
        for ref in pair.references:
            lcs = _lcs_length(pair.candidate, ref)
            if lcs == 0:
                continue
            rec = lcs / len(ref)
            prec = lcs / len(pair.candidate)
            beta2 = ROUGE_BETA ** 2
            best = max(best, (1 + beta2) * rec * prec / (rec + beta2 * prec))
        total += best
    return total / len(pairs)


# ---------------------------------------------------------------------------
# CIDEr


@dataclass
class CiderStats:
    """Document frequencies over reference sets, one document per image."""

    doc_freq: list[Counter]
    num_docs: int

    @property
    def log_num_docs(self) -> float:
        return math.log(max(self.num_docs, 1))


def build_cider_stats(reference_sets: list[list[list[str]]]) -> CiderStats:
    doc_freq = [Counter() for _ in range(CIDER_MAX_ORDER)]
    for refs in reference_sets:
        for k in range(1, CIDER_MAX_ORDER + 1):
            grams = set()
            for ref in refs:
                grams.update(_ngrams(ref, k))
            for gram in grams:
                doc_freq[k - 1][gram] += 1
    return CiderStats(doc_freq=doc_freq, num_docs=len(reference_sets))


def _tfidf_vector(tokens: Sequence[str], order: int, stats: CiderStats) -> dict:
    vec = {}
    for gram, count in _ngrams(tokens, order).items():
        idf = stats.log_num_docs - math.log(max(stats.doc_freq[order - 1][gram], 1))
        vec[gram] = count * idf
    return vec


def _cosine(u: dict, v: dict) -> float:
    dot = sum(w * v[g] for g, w in u.items() if g in v)
    nu = math.sqrt(sum(w * w for w in u.values()))
    nv = math.sqrt(sum(w * w for w in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def cider(pairs: list[EvalPair], stats: CiderStats) -> float:
    if not pairs:
        return 0.0
    total = 0.0
    for pair in pairs:
        score = 0.0
        for order in range(1, CIDER_MAX_ORDER + 1):
            cand_vec = _tfidf_vector(pair.candidate, order, stats)
            sims = [_cosine(cand_vec, _tfidf_vector(ref, order, stats)) for ref in pair.references]
            score += sum(sims) / len(sims)
        total += CIDER_SCALE * score / CIDER_MAX_ORDER
    return total / len(pairs)


# ---------------------------------------------------------------------------
# METEOR-lite

_STEM_SUFFIXES = ("ing", "ed", "es", "ly", "s")


def _stem(word: str) -> str:
    for suffix in _STEM_SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            return word[: -len(suffix)]
    return word


def _align(cand: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Positional unigram alignment: exact matches first, then stem matches.

    Each pass walks the candidate left to right and takes the leftmost free
    reference position, which keeps the procedure deterministic.
    """
    pairs: list[tuple[int, int]] = []
    used_c: set[int] = set()
    used_r: set[int] = set()
    for key in (lambda w: w, _stem):
        for i, cw in enumerate(cand):
            if i in used_c:
                continue
            for j, rw in enumerate(ref):
                if j in used_r:
                    continue
                if key(cw) == key(rw):
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def _count_chunks(alignment: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in alignment:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(pairs: list[EvalPair]) -> float:
    if not pairs:
        return 0.0
    total = 0.0
    for pair in pairs:
        best = 0.0
        for ref in pair.references:
            alignment = _align(pair.candidate, ref)
            m = len(alignment)
            if m == 0 or not pair.candidate:
                continue
            prec = m / len(pair.candidate)
            rec = m / len(ref)
            fmean = ((METEOR_RECALL_WEIGHT + 1.0) * prec * rec
                     / (rec + METEOR_RECALL_WEIGHT * prec))
            chunks = _count_chunks(alignment)
            if chunks > 1:  # a single contiguous chunk is unfragmented
                penalty = METEOR_PENALTY_WEIGHT * (chunks / m) ** METEOR_PENALTY_POWER
            else:
                penalty = 0.0
            best = max(best, fmean * (1.0 - penalty))
        total += best
    return total / len(pairs)


# ---------------------------------------------------------------------------
# SPICE-lite


@lru_cache(maxsize=1)
def _lexicon() -> tuple[frozenset[str], frozenset[str], frozenset[str]]:
    raw = json.loads(importlib.resources.files("aescap.data")
                     .joinpath("spice_lexicon.json").read_text("utf-8"))
    return (frozenset(raw["nouns"]), frozenset(raw["adjectives"]), frozenset(raw["verbs"]))


def extract_tuples(tokens: Sequence[str]) -> Counter:
    """Proposition tuples: objects, (noun, adjective) pairs, verb-linked noun pairs.

    * every noun token -> ("object", noun)
    * adjective immediately before a noun -> ("attribute", noun, adjective)
    * verb with a noun somewhere before and after (nearest on each side)
      -> ("relation", left_noun, verb, right_noun)
    """
    nouns, adjectives, verbs = _lexicon()
    tuples: Counter = Counter()
    noun_positions = [i for i, t in enumerate(tokens) if t in nouns]
    for i in noun_positions:
        tuples[("object", tokens[i])] += 1
        if i > 0 and tokens[i - 1] in adjectives:
            tuples[("attribute", tokens[i], tokens[i - 1])] += 1
    for i, tok in enumerate(tokens):
        if tok not in verbs:
            continue
        left = [p for p in noun_positions if p < i]
        right = [p for p in noun_positions if p > i]
        if left and right:
            tuples[("relation", tokens[left[-1]], tok, tokens[right[0]])] += 1
    return tuples


def spice_lite(pairs: list[EvalPair]) -> tuple[float, float, float]:
    """Micro-averaged (precision, recall, F1) over proposition tuples."""
    matched = 0
    cand_total = 0
    ref_total = 0
    for pair in pairs:
        cand_tuples = extract_tuples(pair.candidate)
        merged: Counter = Counter()
        for ref in pair.references:
            for t, c in extract_tuples(ref).items():
                if c > merged[t]:
                    merged[t] = c
        matched += sum(min(c, merged[t]) for t, c in cand_tuples.items())
        cand_total += sum(cand_tuples.values())
        ref_total += sum(merged.values())
    precision = matched / cand_total if cand_total else 0.0
    recall = matched / ref_total if ref_total else 0.0
    return precision, recall, f1_combine(precision, recall)


def f1_combine(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


# ---------------------------------------------------------------------------
# score regression quality


def score_mse(preds: Sequence[float], targets: Sequence[float]) -> float:
    """Plain mean squared error; callers normalize scores to [0, 1] first."""
    if len(preds) != len(targets):
        raise ContractError(f"score_mse: {len(preds)} predictions vs {len(targets)} targets")
    if not preds:
        raise ContractError("score_mse: empty inputs")
    return sum((p - t) ** 2 for p, t in zip(preds, targets)) / len(preds)


# ---------------------------------------------------------------------------
# reporting


@dataclass
class AttributeMetrics:
    bleu1: float = 0.0
    bleu2: float = 0.0
    bleu3: float = 0.0
    bleu4: float = 0.0
    meteor: float = 0.0
    rouge_l: float = 0.0
    cider: float = 0.0
    spice_precision: float = 0.0
    spice_recall: float = 0.0
    spice_f1: float = 0.0
    score_mse: float | None = None
    num_pairs: int = 0


@dataclass
class MetricReport:
    per_attribute: dict[str, AttributeMetrics] = field(default_factory=dict)
    global_score_mse: float | None = None
    num_images: int = 0

    def to_dict(self) -> dict:
        return {
            "per_attribute": {
                attr: {k: v for k, v in vars(m).items()}
                for attr, m in self.per_attribute.items()
            },
            "global_score_mse": self.global_score_mse,
            "num_images": self.num_images,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def compute_attribute_metrics(pairs: list[EvalPair],
                              score_pairs: tuple[list[float], list[float]] | None = None
                              ) -> AttributeMetrics:
    """All caption metrics for one attribute's pairs, plus optional score MSE."""
    if not pairs:
        raise ContractError("compute_attribute_metrics: no evaluation pairs")
    stats = build_cider_stats([p.references for p in pairs])
    precision, recall, f1 = spice_lite(pairs)
    mse = None
    if score_pairs is not None and score_pairs[0]:
        mse = score_mse(score_pairs[0], score_pairs[1])
    return AttributeMetrics(
        bleu1=bleu_n(pairs, 1),
        bleu2=bleu_n(pairs, 2),
        bleu3=bleu_n(pairs, 3),
        bleu4=bleu_n(pairs, 4),
        meteor=meteor_lite(pairs),
        rouge_l=rouge_l(pairs),
        cider=cider(pairs, stats),
        spice_precision=precision,
        spice_recall=recall,
        spice_f1=f1,
        score_mse=mse,
        num_pairs=len(pairs),
    )


def render_report_table(report: MetricReport) -> str:
    """Plain-text table; caption metrics shown as percentages of their range."""
    cols = ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "ROUGE", "CIDEr",
            "SPICE-P", "SPICE-R", "SPICE-F1", "ScoreMSE"]
    header = f"{'Attribute':<24}" + "".join(f"{c:>9}" for c in cols)
    lines = [header, "-" * len(header)]
    for attr, m in report.per_attribute.items():
        pct = [m.bleu1 * 100, m.bleu2 * 100, m.bleu3 * 100, m.bleu4 * 100,
               m.meteor * 100, m.rouge_l * 100, m.cider / CIDER_SCALE * 100]
        spice = [m.spice_precision, m.spice_recall, m.spice_f1]
        row = f"{DISPLAY_NAMES.get(attr, attr):<24}"
        row += "".join(f"{v:>9.1f}" for v in pct)
        row += "".join(f"{v:>9.3f}" for v in spice)
        row += f"{m.score_mse:>9.3f}" if m.score_mse is not None else f"{'-':>9}"
        lines.append(row)
    if report.global_score_mse is not None:
        lines.append(f"Global score MSE (mean of 5 vs global): {report.global_score_mse:.4f}")
    return "\n".join(lines) + "\n"
