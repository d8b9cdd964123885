"""Smoke test for the eagle_calib extension module.

Build and install the module first, for example:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/eagle_calib-*.whl

then run ``python python/smoke_test.py``. The checks compare the bindings
against small pure-Python reference implementations.
"""

import math
import os
import random
import sys
import tempfile

import eagle_calib as ec


def softmax(xs):
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    z = sum(e)
    return [v / z for v in e]


def reference_confidence(rows, scores, k):
    chosen = rows[-k:]
    mean = [sum(col) / k for col in zip(*chosen)]
    p = softmax(mean)
    raw = sum(pi * s for pi, s in zip(p, scores))
    return raw, raw / max(scores)


def reference_ece(conf, labels, bins):
    total = 0.0
    for m in range(bins):
        lo, hi = m / bins, (m + 1) / bins
        members = [
            i for i, c in enumerate(conf)
            if lo <= c < hi or (m == bins - 1 and c == 1.0)
        ]
        if members:
            acc = sum(labels[i] for i in members) / len(members)
            avg = sum(conf[i] for i in members) / len(members)
            total += len(members) * abs(acc - avg)
    return total / len(conf)


def reference_auroc(conf, labels):
    pos = [c for c, y in zip(conf, labels) if y]
    neg = [c for c, y in zip(conf, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def check(name, ok):
    print(("ok   " if ok else "FAIL ") + name)
    return ok


def main():
    rng = random.Random(0)
    digits = ec.ScoreSet.digits(9)
    results = []

    rows = [[rng.gauss(0, 3) for _ in range(10)] for _ in range(6)]
    got = ec.compute_confidence(rows, digits, k=3)
    want = reference_confidence(rows, digits.scores, 3)
    results.append(check("compute_confidence matches reference",
                         all(abs(a - b) < 1e-9 for a, b in zip(got, want))))
    dist = ec.score_distribution(rows, digits, layers=(3, 5))
    results.append(check("distribution sums to one", abs(sum(dist) - 1.0) < 1e-12))

    conf = [rng.random() for _ in range(300)]
    labels = [rng.random() < c for c in conf]
    results.append(check("ece matches reference",
                         abs(ec.ece(conf, labels, 10) - reference_ece(conf, labels, 10)) < 1e-12))
    results.append(check("auroc matches reference",
                         abs(ec.auroc(conf, labels) - reference_auroc(conf, labels)) < 1e-12))
    bins = ec.reliability_bins(conf, labels, 10)
    results.append(check("reliability bins cover every record",
                         sum(b["count"] for b in bins) == len(conf)))

    try:
        ec.auroc([0.1, 0.2], [True, True])
        results.append(check("degenerate labels raise", False))
    except ec.EagleError as e:
        results.append(check("degenerate labels raise", str(e).startswith("degenerate_labels")))

    with tempfile.TemporaryDirectory() as tmp:
        planted = os.path.join(tmp, "planted.eagle.jsonl")
        ec.generate_planted(planted, 2000, seed=1, sigma=0.0)
        res = ec.evaluate(planted, k=8)
        results.append(check("planted dump is calibrated", res["ece"] < 5.0))
        results.append(check("ablation has six rows", len(ec.ablate(planted)) == 6))
        results.append(check("sweep covers all ranges", len(ec.sweep(planted)) == 36))
        k, _ = ec.tune(planted)
        results.append(check("tuned k in range", 1 <= k <= 8))

        header, records = ec.read_dump(planted)
        copy = os.path.join(tmp, "copy.eagle.jsonl")
        ec.write_dump(copy, header["num_layers"], header["score_set"], records,
                      producer=header["producer"])
        with open(planted, "rb") as a, open(copy, "rb") as b:
            results.append(check("dump round-trips byte for byte", a.read() == b.read()))

        model = ec.ToyTransformer(seed=3)
        tokens = [12, 20, 17]
        layer = model.layer_logits(tokens, digits)
        final = model.final_logits(tokens)
        results.append(check("last layer equals final logits on score tokens",
                             all(abs(layer[-1][t] - final[t]) < 1e-12 for t in digits.token_ids)))
        toy = os.path.join(tmp, "toy.eagle.jsonl")
        model.write_dataset(toy, 50, digits, seed=4)
        results.append(check("transformer dump evaluates", ec.evaluate(toy)["count"] == 50))

    passed = sum(results)
    print(f"{passed}/{len(results)} checks passed")
    return 0 if passed == len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
