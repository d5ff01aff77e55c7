"""Reference BLEU-4 / ROUGE-L values for tests/fixtures/text_metrics_reference.json.

Uses nltk's sentence_bleu (smoothing method2) and the rouge_score package.
Both metrics see the rouge_score tokenization (lowercase, [a-z0-9]+ runs).

    pip install nltk rouge-score
    python3 text_metrics_oracle.py > ../fixtures/text_metrics_reference.json
"""

import json
import random

from nltk.translate.bleu_score import SmoothingFunction, sentence_bleu
from rouge_score import rouge_scorer, tokenize

BASE = [
    "The duck is swimming, not flying",
    "The person is dressed as a joker, not a clown",
    "The liquid is blue, not red",
    "The kitchen is missing a toaster, but has a refrigerator.",
    "The men are jumping over a rail, not under it",
    "The room has a view of trees, not a lake",
    "The bowl is on top of the table, not beneath it.",
    "The cat is not running, instead is sitting on the grass",
    "The beam is wood, not metal",
    "The animal holding the frisbee is a dog, not a cat",
    "There is no wine glass in the field",
    "The wall is gray, not white, and the cup has no umbrellas",
    "A small white toilet without any spare rolls of toilet paper",
    "The color of the ball is blue, not red",
]

FIXED = [
    ("the cat sat", "the cat sat down"),
    ("the cat sat down", "the cat sat"),
    ("A black cat playing on top of a wooden chair", "A black cat playing on top of a wooden chair"),
    ("red fox jumps high", "blue whale swims deep"),
    ("dog", "dog"),
    ("a b c d e f", "f e d c b a"),
    ("The man is riding along the beach, not driving", "The man is driving along the beach"),
    ("Two men in Germany jumping over a rail", "two MEN in germany... jumping OVER a rail!"),
    ("the the the the", "the the"),
    ("a view of a lake", "a view of a lake and a view of a lake"),
]


def variants(rng, sentence):
    words = sentence.split()
    out = []
    drop = [w for w in words if rng.random() > 0.25] or words[:1]
    out.append(" ".join(drop))
    swapped = words[:]
    i, j = rng.randrange(len(words)), rng.randrange(len(words))
    swapped[i], swapped[j] = swapped[j], swapped[i]
    out.append(" ".join(swapped))
    other = rng.choice(BASE).split()
    mixed = words[: len(words) // 2] + other[len(other) // 2 :]
    out.append(" ".join(mixed))
    return out


def main():
    rng = random.Random(20240515)
    pairs = list(FIXED)
    for s in BASE:
        for v in variants(rng, s):
            pairs.append((s, v))
    pairs = pairs[:50]
    assert len(pairs) == 50
    smooth = SmoothingFunction().method2
    scorer = rouge_scorer.RougeScorer(["rougeL"], use_stemmer=False)
    rows = []
    for ref, hyp in pairs:
        rt, ht = tokenize.tokenize(ref, None), tokenize.tokenize(hyp, None)
        bleu = sentence_bleu([rt], ht, smoothing_function=smooth) if ht else 0.0
        rouge = scorer.score(ref, hyp)["rougeL"].fmeasure
        rows.append({"reference": ref, "hypothesis": hyp, "bleu4": float(bleu), "rougeL": float(rouge)})
    print(json.dumps(rows, indent=1))


if __name__ == "__main__":
    main()
