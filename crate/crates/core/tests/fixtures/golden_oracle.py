"""Scalar replay of the ten-round micro-fixture.

Recomputes every ledger column of golden.csv under golden.toml from the
update formulas alone and writes golden_ledger.csv. Floats are printed like
Rust's Display: shortest round-trip digits, positional notation.

Sums are explicit left folds so that every operation happens in the same
order as a straightforward implementation; Python's sum() is avoided because
newer versions compensate float sums.

The classifier never splits here: total hessian stays below
2 * min_child_weight, so every tree is a single leaf. Rows never coincide
(first_lt_obs differs on every row), so no training rows merge.
"""

import csv
import math
import sys
from decimal import Decimal
from pathlib import Path

HERE = Path(__file__).parent

THRESHOLD = 2.5
ACTIVATION = 4
OVERSAMPLE = 5
ETA_MAX = 1.0
FS_ALPHA = 0.01
FTL_REG = 0.0025
GBRT_ROUNDS = 3
GBRT_LR = 1.0
GBRT_LAMBDA = 1.0
GBRT_MCW = 25.0
COLD = {"Q10"}
WARM = {"Q90"}


def fmt(x):
    s = format(Decimal(repr(float(x))), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def fsum(xs):
    acc = 0.0
    for x in xs:
        acc = acc + x
    return acc


def dot(w, x):
    acc = 0.0
    for a, b in zip(w, x):
        acc = acc + a * b
    return acc


def normalize(masses):
    s = fsum(masses)
    return [m / s for m in masses]


def softmax_weights(log_masses):
    mx = -math.inf
    for v in log_masses:
        mx = max(mx, v)
    return normalize([math.exp(v - mx) for v in log_masses])


class Boa:
    def __init__(self, n):
        self.n = n
        self.prior = [1.0 / n] * n
        self.w = list(self.prior)
        self.tilted = [0.0] * n
        self.sq = [0.0] * n
        self.rng = [0.0] * n
        self.eta = [ETA_MAX] * n

    def predict(self, x):
        return dot(self.w, x)

    def update_at(self, x, pred, y):
        g = 2.0 * (pred - y)
        for i in range(self.n):
            r = g * (x[i] - pred)
            self.tilted[i] = self.tilted[i] + r + self.eta[i] * r * r
            self.sq[i] = self.sq[i] + r * r
            self.rng[i] = max(self.rng[i], abs(r))
        ln_n = math.log(float(self.n))
        for i in range(self.n):
            v, e = self.sq[i], self.rng[i]
            if v == 0.0 or e == 0.0:
                eta = ETA_MAX
            else:
                eta = min(min(ETA_MAX, 1.0 / (2.0 * e)), math.sqrt(ln_n / v))
                if not eta > 0.0:
                    eta = ETA_MAX
            self.eta[i] = eta
        self.w = softmax_weights(
            [math.log(self.prior[i]) + math.log(self.eta[i]) - self.eta[i] * self.tilted[i] for i in range(self.n)]
        )


class Sleeping:
    def __init__(self, n):
        self.inner = Boa(n)

    def predict(self, x, awake):
        if all(awake):
            return self.inner.predict(x)
        mass, acc = 0.0, 0.0
        for i, a in enumerate(awake):
            if a:
                mass = mass + self.inner.w[i]
                acc = acc + self.inner.w[i] * x[i]
        assert mass > 0.0
        return acc / mass

    def update(self, x, awake, y):
        p = self.predict(x, awake)
        self.inner.update_at([xi if a else p for xi, a in zip(x, awake)], p, y)


class FixedShare:
    def __init__(self, n):
        self.n = n
        self.w = [1.0 / n] * n
        self.eta = ETA_MAX
        self.s = 0.0

    def predict(self, x):
        return dot(self.w, x)

    def update_at(self, x, pred, y):
        g = 2.0 * (pred - y)
        r = [g * (xi - pred) for xi in x]
        v = softmax_weights([math.log(wi) - self.eta * ri for wi, ri in zip(self.w, r)])
        floor = FS_ALPHA / float(self.n)
        self.w = normalize([(1.0 - FS_ALPHA) * vi + floor for vi in v])
        hi, lo = -math.inf, math.inf
        for ri in r:
            hi, lo = max(hi, ri), min(lo, ri)
        self.s = self.s + (hi - lo) * (hi - lo)
        ln_n = math.log(float(self.n))
        self.eta = min(ETA_MAX, math.sqrt(8.0 * ln_n / self.s)) if self.s > 0.0 and ln_n > 0.0 else ETA_MAX


class Ftl:
    def __init__(self, c):
        self.c, self.la, self.lb, self.t = c, 0.0, 0.0, 1

    def select(self):
        return "boa_s" if self.lb + self.c * float(self.t) <= self.la else "boa"

    def record(self, la, lb):
        self.la, self.lb, self.t = self.la + la, self.lb + lb, self.t + 1


def label(err):
    if err <= -THRESHOLD:
        return 1
    if err >= THRESHOLD:
        return 3
    return 2


def wake(cls, t, names):
    want = None
    if t >= ACTIVATION:
        want = {1: WARM, 3: COLD}.get(cls)
    return [(n not in COLD and n not in WARM) or (want is not None and n in want) for n in names]


def classify(samples):
    """Single-leaf softmax boosting on (label, weight) rows; returns the label."""
    labels = [c for c, _ in samples]
    if all(c == labels[0] for c in labels):
        return labels[0]
    m = [0.0, 0.0, 0.0]
    for _ in range(GBRT_ROUNDS):
        mx = max(max(m[0], m[1]), m[2])
        e = [math.exp(v - mx) for v in m]
        z = fsum(e)
        p = [v / z for v in e]
        leaves = []
        for k in range(3):
            g = fsum([(p[k] - (1.0 if c == k + 1 else 0.0)) * w for c, w in samples])
            h = fsum([max(2.0 * p[k] * (1.0 - p[k]), 1e-16) * w for c, w in samples])
            assert h < 2.0 * GBRT_MCW
            leaves.append(-g / (h + GBRT_LAMBDA) * GBRT_LR)
        m = [m[k] + leaves[k] for k in range(3)]
    top = max(m)
    winners = [k for k in range(3) if m[k] == top]
    return winners[0] + 1 if len(winners) == 1 else 2


def main(out):
    with open(HERE / "golden.csv", newline="") as f:
        rows = list(csv.reader(f))
    header, data = rows[0], rows[1:]
    names = header[5:]
    n = len(names)
    unbiased = [i for i, nm in enumerate(names) if nm not in COLD and nm not in WARM]

    ub, full, sef, orc, fs = Boa(len(unbiased)), Boa(n), Sleeping(n), Sleeping(n), FixedShare(n)
    ftl, ftl_reg = Ftl(0.0), Ftl(FTL_REG)
    samples = []
    strategies = ["boa_unbiased", "boa", "boa_s", "ftl_boa", "ftl_boa_reg", "fixed_share", "oracle_class", "oracle_expert"]

    lines = []
    head = ["round", "date", "observation"] + ["x_" + e for e in names]
    head += ["awake", "oracle_awake", "pred_class", "true_class", "degenerate"]
    for s in strategies:
        head += [s + "_pred", s + "_loss"]
    head += ["ftl_choice", "ftl_reg_choice"]
    head += ["w_boa_unbiased_" + names[i] for i in unbiased]
    for s in ["boa", "boa_s", "fixed_share", "oracle_class"]:
        head += ["w_%s_%s" % (s, e) for e in names]
    lines.append(head)

    for t, rec in enumerate(data, start=1):
        date, y = rec[0], float(rec[3])
        x = [float(v) for v in rec[5:]]
        sub = [x[i] for i in unbiased]

        ub_pred = ub.predict(sub)
        pred_class = 2
        if t >= ACTIVATION and samples:
            pred_class = classify(samples)
        awake = wake(pred_class, t, names)

        weights = list(ub.w) + list(full.w) + list(sef.inner.w) + list(fs.w) + list(orc.inner.w)
        boa_pred = full.predict(x)
        sef_pred = sef.predict(x, awake)
        c1, c2 = ftl.select(), ftl_reg.select()
        fs_pred = fs.predict(x)

        truth = label(ub_pred - y)
        o_awake = wake(truth, t, names)
        o_pred = orc.predict(x, o_awake)

        sq = lambda p: (p - y) * (p - y)
        boa_loss, sef_loss, o_loss = sq(boa_pred), sq(sef_pred), sq(o_pred)
        o_exp_loss = 0.0 if any(a and (nm in COLD or nm in WARM) for a, nm in zip(o_awake, names)) else o_loss
        pick = lambda c: (sef_pred, sef_loss) if c == "boa_s" else (boa_pred, boa_loss)
        outcomes = [
            (ub_pred, sq(ub_pred)),
            (boa_pred, boa_loss),
            (sef_pred, sef_loss),
            pick(c1),
            pick(c2),
            (fs_pred, sq(fs_pred)),
            (o_pred, o_loss),
            (o_pred, o_exp_loss),
        ]

        ub.update_at(sub, ub_pred, y)
        full.update_at(x, boa_pred, y)
        sef.update(x, awake, y)
        orc.update(x, o_awake, y)
        fs.update_at(x, fs_pred, y)
        ftl.record(boa_loss, sef_loss)
        ftl_reg.record(boa_loss, sef_loss)
        samples.append((truth, OVERSAMPLE if abs(ub_pred - y) >= THRESHOLD else 1))

        bits = lambda m: "".join("1" if a else "0" for a in m)
        line = [str(t), date, fmt(y)] + [fmt(v) for v in x]
        line += [bits(awake), bits(o_awake), str(pred_class), str(truth), "0"]
        for p, l in outcomes:
            line += [fmt(p), fmt(l)]
        line += [c1, c2] + [fmt(w) for w in weights]
        lines.append(line)

    with open(out, "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(lines)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else HERE / "golden_ledger.csv")
