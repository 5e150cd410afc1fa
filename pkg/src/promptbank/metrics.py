"""Caption-quality and diversity metrics: BLEU@4, ROUGE-L, CIDEr, Self-BLEU.

All metrics share one frozen tokenizer (lowercase, punctuation split to
standalone tokens, whitespace split) so scores are reproducible without
external tooling. Absolute comparability with third-party evaluation
toolkits on external datasets is explicitly not a goal.

Conventions:
* BLEU@4 is corpus-level: clipped modified n-gram precisions pooled
  over items, geometric mean over n = 1..4, times the brevity penalty.
  An n level with no candidate n-grams contributes a factor of 1; any
  defined precision of 0 zeroes the score.
* ROUGE-L is the LCS F-measure with beta = 1.2, max over references,
  averaged over items.
* CIDEr is the length-penalty-free form: per n, the TF-IDF cosine
  between candidate and reference, averaged over references and over
  n = 1..4, scaled by 10. IDF is computed from the references of the
  evaluation run itself with a document-frequency floor of 1.
* Self-BLEU scores each sentence against all others as references.
"""

from __future__ import annotations

import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import LengthMismatch, MissingId, TooFewSentences

MAX_NGRAM = 4
ROUGE_BETA = 1.2
CIDER_SCALE = 10.0

_PUNCT_TABLE = {ord(c): f" {c} " for c in string.punctuation}


def metric_tokens(text: str) -> list[str]:
    """Frozen metric tokenizer: lowercase, isolate punctuation, split."""
    return text.lower().translate(_PUNCT_TABLE).split()


def _ngrams(toks: list[str], n: int) -> Counter:
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


@dataclass
class EvalReport:
    bleu4: float
    rouge_l: float
    cider: float
    self_bleu: float | None
    meteor: None = None  # reserved; needs external synonym resources
    per_item: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bleu4": self.bleu4,
            "rouge_l": self.rouge_l,
            "cider": self.cider,
            "self_bleu": self.self_bleu,
            "meteor": self.meteor,
            "per_item": self.per_item,
        }


def _check_lengths(candidates, references) -> None:
    if len(candidates) != len(references) or not candidates:
        raise LengthMismatch(
            f"{len(candidates)} candidates vs {len(references)} reference sets"
        )


def bleu4(candidates: list[str], references: list[list[str]]) -> float:
    """Corpus-level BLEU with 4-gram cap and brevity penalty."""
    _check_lengths(candidates, references)
    matched = [0] * MAX_NGRAM
    total = [0] * MAX_NGRAM
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, references):
        cand_toks = metric_tokens(cand)
        ref_toks = [metric_tokens(r) for r in refs]
        cand_len += len(cand_toks)
        # closest reference length; ties go to the shorter reference
        ref_len += min((abs(len(r) - len(cand_toks)), len(r)) for r in ref_toks)[1]
        for n in range(1, MAX_NGRAM + 1):
            cand_counts = _ngrams(cand_toks, n)
            if not cand_counts:
                continue
            max_ref: Counter = Counter()
            for toks in ref_toks:
                for gram, count in _ngrams(toks, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            total[n - 1] += sum(cand_counts.values())
            matched[n - 1] += sum(
                min(count, max_ref.get(gram, 0)) for gram, count in cand_counts.items()
            )
    log_sum = 0.0
    for n in range(MAX_NGRAM):
        if total[n] == 0:
            continue  # no candidate n-grams at this order: neutral factor
        if matched[n] == 0:
            return 0.0
        log_sum += math.log(matched[n] / total[n]) / MAX_NGRAM
    if cand_len == 0:
        return 0.0
    brevity = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_sum)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l_item(candidate: str, refs: list[str]) -> float:
    cand_toks = metric_tokens(candidate)
    best_prec = 0.0
    best_rec = 0.0
    for ref in refs:
        ref_toks = metric_tokens(ref)
        lcs = _lcs_length(cand_toks, ref_toks)
        if cand_toks:
            best_prec = max(best_prec, lcs / len(cand_toks))
        if ref_toks:
            best_rec = max(best_rec, lcs / len(ref_toks))
    denom = best_rec + ROUGE_BETA ** 2 * best_prec
    if denom == 0.0:
        return 0.0
    return (1 + ROUGE_BETA ** 2) * best_prec * best_rec / denom


def rouge_l(candidates: list[str], references: list[list[str]]) -> float:
    _check_lengths(candidates, references)
    return sum(rouge_l_item(c, r) for c, r in zip(candidates, references)) / len(candidates)


def _tfidf_vector(counts: Counter, doc_freq: Counter, n_docs: int) -> dict:
    vec = {}
    for gram, count in counts.items():
        idf = math.log(n_docs / max(1.0, doc_freq.get(gram, 0.0)))
        vec[gram] = count * idf
    return vec


def _tfidf_cosine(left: dict, right: dict) -> float:
    norm_l = sum(v * v for v in left.values())
    norm_r = sum(v * v for v in right.values())
    if norm_l == 0.0 or norm_r == 0.0:
        return 0.0
    dot = sum(v * right[g] for g, v in left.items() if g in right)
    return dot / math.sqrt(norm_l * norm_r)


def cider(candidates: list[str], references: list[list[str]]) -> tuple[float, list[float]]:
    """Corpus score and per-item scores, both on the 0..10 scale."""
    _check_lengths(candidates, references)
    n_docs = len(references)
    doc_freqs = [Counter() for _ in range(MAX_NGRAM)]
    for refs in references:
        for n in range(1, MAX_NGRAM + 1):
            grams = set()
            for ref in refs:
                grams.update(_ngrams(metric_tokens(ref), n))
            doc_freqs[n - 1].update(grams)

    per_item = []
    for cand, refs in zip(candidates, references):
        cand_toks = metric_tokens(cand)
        level_sum = 0.0
        for n in range(1, MAX_NGRAM + 1):
            cand_vec = _tfidf_vector(_ngrams(cand_toks, n), doc_freqs[n - 1], n_docs)
            sim_sum = 0.0
            for ref in refs:
                ref_vec = _tfidf_vector(
                    _ngrams(metric_tokens(ref), n), doc_freqs[n - 1], n_docs
                )
                sim_sum += _tfidf_cosine(cand_vec, ref_vec)
            level_sum += sim_sum / len(refs)
        per_item.append(CIDER_SCALE * level_sum / MAX_NGRAM)
    return sum(per_item) / len(per_item), per_item


def self_bleu(sentences: list[str]) -> float:
    """Mean BLEU of each sentence against the rest; lower is more diverse."""
    if len(sentences) < 2:
        raise TooFewSentences(f"need >= 2 sentences, got {len(sentences)}")
    scores = []
    for i, sentence in enumerate(sentences):
        others = sentences[:i] + sentences[i + 1:]
        scores.append(bleu4([sentence], [others]))
    return sum(scores) / len(scores)


def evaluate_run(pred_path: str | Path, ref_path: str | Path) -> EvalReport:
    """Score a prediction file against a reference file, aligned by id."""
    preds: dict[str, str] = {}
    with open(pred_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                preds[record["id"]] = record["text"]
    refs: dict[str, list[str]] = {}
    with open(ref_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                refs[record["id"]] = list(record["texts"])

    for item_id in refs:
        if not preds.get(item_id, "").strip():
            raise MissingId(item_id)  # absent or empty prediction
    for item_id in preds:
        if item_id not in refs:
            raise MissingId(item_id)

    ids = sorted(refs)
    candidates = [preds[i] for i in ids]
    references = [refs[i] for i in ids]

    corpus_bleu = bleu4(candidates, references)
    corpus_cider, item_ciders = cider(candidates, references)
    item_rouges = [rouge_l_item(c, r) for c, r in zip(candidates, references)]
    diversity = self_bleu(candidates) if len(candidates) >= 2 else None

    per_item = [
        {
            "id": item_id,
            "bleu4": bleu4([cand], [refs_i]),
            "rouge_l": rouge,
            "cider": cid,
        }
        for item_id, cand, refs_i, rouge, cid in zip(
            ids, candidates, references, item_rouges, item_ciders
        )
    ]
    return EvalReport(
        bleu4=corpus_bleu,
        rouge_l=sum(item_rouges) / len(item_rouges),
        cider=corpus_cider,
        self_bleu=diversity,
        per_item=per_item,
    )
