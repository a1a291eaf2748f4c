"""Fast oracle-equivalence checks bundled with the package.

Each check compares the optimized code path against an independent oracle
(schoolbook products, brute-force selection, LP endpoints, plain arithmetic)
on toy-sized parameters, and reports only deterministic quantities such as
booleans, case counts and operation counters. The resulting report is
therefore byte-stable and can be compared against a golden file.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from ..ckks import Decryptor, Encoder, Encryptor, Evaluator, chunk_count, keygen, toy_params
from ..distance import (
    PackedWeights,
    build_distance_matrix,
    decrypt_matrix,
    encrypted_pairwise_distance,
    pack_and_encrypt,
    plan_unfold,
    slot_reduce,
)
from ..errors import PrivacyViolation
from ..fl.messages import EncryptedUpdate, assert_ciphertext_only
from ..rns import Modulus, generate_primes, ntt_forward, ntt_inverse, sample
from ..robust import DistanceTable, RuleConfig, select

CHECKS: dict[str, Callable[[], dict]] = {}


def check(name: str):
    def register(fn):
        CHECKS[name] = fn
        return fn
    return register


class _Keys:
    def __init__(self, ring_degree: int, seed: int, steps=None):
        self.params = toy_params(ring_degree)
        self.keys = keygen(self.params, seed, steps)
        self.encoder = Encoder(self.params)
        self.encryptor = Encryptor(self.params, self.keys.public, seed + 1)
        self.decryptor = Decryptor(self.params, self.keys.secret)

    def evaluator(self):
        return Evaluator(self.params, self.keys.relin, self.keys.rotations)

    def enc(self, values):
        return self.encryptor.encrypt(self.encoder.encode(values))

    def dec(self, ct, length=None):
        return self.encoder.decode(self.decryptor.decrypt(ct), length)


def _schoolbook(a, b, q):
    n = len(a)
    out = [0] * n
    for i, x in enumerate(map(int, a)):
        for j, y in enumerate(map(int, b)):
            if i + j < n:
                out[i + j] += x * y
            else:
                out[i + j - n] -= x * y
    return [v % q for v in out]


@check("ntt-schoolbook")
def _ntt() -> dict:
    n, cases = 32, 50
    qs = generate_primes(30, 2, n)
    moduli = tuple(Modulus(q, n) for q in qs)
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(cases):
        a, b = sample("uniform", rng, moduli), sample("uniform", rng, moduli)
        prod = ntt_inverse(ntt_forward(a) * ntt_forward(b))
        ok &= all(row.tolist() == _schoolbook(ra, rb, q)
                  for row, q, ra, rb in zip(prod.coeffs, qs, a.coeffs, b.coeffs))
    return {"passed": ok, "cases": cases}


@check("ckks-homomorphism")
def _ckks() -> dict:
    k = _Keys(64, 11)
    ev = k.evaluator()
    rng = np.random.default_rng(2)
    slots, cases = k.params.slot_count, 20
    ok = True
    for _ in range(cases):
        x, y = rng.uniform(-1, 1, slots), rng.uniform(-1, 1, slots)
        cx, cy = k.enc(x), k.enc(y)
        ok &= np.max(np.abs(k.dec(cx) - x)) < 2**-25
        for got, want in [(ev.add(cx, cy), x + y), (ev.sub(cx, cy), x - y),
                          (ev.mul(cx, cy), x * y), (ev.rotate(cx, 1), np.roll(x, -1))]:
            ok &= np.max(np.abs(k.dec(got) - want)) < 2**-20 * max(1.0, np.max(np.abs(want)))
    return {"passed": bool(ok), "cases": cases}


@check("lazy-relinearization")
def _lazy() -> dict:
    k = _Keys(64, 12)
    chunks = 16
    rng = np.random.default_rng(3)
    a = pack_and_encrypt(rng.normal(size=chunks * k.params.slot_count), k.encryptor, k.encoder)
    b = pack_and_encrypt(rng.normal(size=chunks * k.params.slot_count), k.encryptor, k.encoder)
    lazy_ev, eager_ev = k.evaluator(), k.evaluator()
    dl = float(np.sum(k.dec(encrypted_pairwise_distance(a, b, lazy_ev, lazy=True))))
    de = float(np.sum(k.dec(encrypted_pairwise_distance(a, b, eager_ev, lazy=False))))
    lazy_n, eager_n = lazy_ev.counters.relinearizations, eager_ev.counters.relinearizations
    return {"passed": lazy_n == 1 and eager_n == chunks and abs(dl - de) < 1e-4 * abs(de),
            "chunks": chunks, "relin_lazy": lazy_n, "relin_eager": eager_n}


@check("hoisted-rotations")
def _hoist() -> dict:
    width = 64
    k = _Keys(128, 13, steps=sorted(set(range(1, width)) | {1 << j for j in range(6)}))
    x = np.random.default_rng(4).uniform(-1, 1, width)
    ct = k.enc(x)
    ev = k.evaluator()
    steps = list(range(1, 8))
    hoisted = ev.hoisted_rotations(ct, steps)
    batch_modups = ev.counters.modups
    ok = all(np.max(np.abs(k.dec(h) - k.dec(ev.rotate(ct, s)))) < 2**-22 for h, s in zip(hoisted, steps))
    seq_ev, full_ev = k.evaluator(), k.evaluator()
    seq = k.dec(slot_reduce(ct, 1, seq_ev, width))[0]
    full = k.dec(slot_reduce(ct, 7, full_ev, width))[0]
    ok &= abs(seq - full) < 2**-22 * width and abs(seq - x.sum()) < 1e-6 * width
    return {"passed": bool(ok and batch_modups == 1 and seq_ev.counters.modups == 6 and full_ev.counters.modups == 1),
            "modups_hoisted_batch": batch_modups, "modups_sequential_tree": seq_ev.counters.modups,
            "modups_hoisted_tree": full_ev.counters.modups}


@check("unfold-planner")
def _planner() -> dict:
    rng = np.random.default_rng(5)
    cases = 1000
    ok = True
    for _ in range(cases):
        t_h, t_d = rng.uniform(0.1, 10, 2)
        m_c = int(rng.integers(1, 100))
        m_b = int(rng.integers(m_c, 20 * m_c))
        n = 1 << int(rng.integers(0, 16))
        # the objective is linear in k, so the optimum sits at an endpoint of [1, k_max]
        k_max = min(m_b // m_c, int(math.log2(n)) + 1)
        ok &= plan_unfold(t_h, t_d, m_c, m_b, n).k == (k_max if t_d < t_h else 1)
    return {"passed": bool(ok), "cases": cases}


def _brute_krum(points, c, members=None):
    members = list(range(len(points))) if members is None else members
    phi = len(members) - c - 2
    best = None
    for i in members:
        dists = sorted(float(np.sum((points[i] - points[j]) ** 2)) for j in members if j != i)
        score = sum(dists[:phi])
        if best is None or score < best[0]:
            best = (score, i)
    return best[1]


def _brute(points, rule: RuleConfig):
    n = len(points)
    if rule.rule == "krum":
        return (_brute_krum(points, rule.c),)
    if rule.rule == "multi-krum":
        left, chosen = list(range(n)), []
        for _ in range(rule.l):
            pick = _brute_krum(points, rule.c, left)
            chosen.append(pick)
            left.remove(pick)
        return tuple(chosen)
    totals = [sum(float(np.sum((points[i] - points[j]) ** 2)) for j in range(n)) for i in range(n)]
    ranked = sorted(range(n), key=lambda i: (totals[i], i))
    return (ranked[(n + 1) // 2 - 1],)


@check("encrypted-selection")
def _selection() -> dict:
    k = _Keys(64, 14)
    rules = [RuleConfig("krum", 1), RuleConfig("multi-krum", 1, 3), RuleConfig("median", 1)]
    rng = np.random.default_rng(6)
    cases, ok = 0, True
    for _ in range(4):
        points = [rng.normal(size=40) for _ in range(8)]
        points[int(rng.integers(8))] += 6.0  # one outlier
        packed = [pack_and_encrypt(p, k.encryptor, k.encoder) for p in points]
        matrix = build_distance_matrix(packed, k.evaluator(), reduce=False, threads=1)
        table = DistanceTable(decrypt_matrix(matrix, k.decryptor, k.encoder))
        for rule in rules:
            ok &= select(rule, table).selected == _brute(points, rule)
            cases += 1
    return {"passed": bool(ok), "cases": cases}


@check("privacy-shape")
def _privacy() -> dict:
    k = _Keys(32, 15)
    ct = k.enc([1.0, 2.0])
    assert_ciphertext_only(EncryptedUpdate(0, "client-0", PackedWeights([ct], 2)))
    leaks = [PackedWeights([np.ones(2)], 2), PackedWeights([ct, 0.5], 2), PackedWeights([[ct, 3]], 2)]
    caught = 0
    for leak in leaks:
        try:
            assert_ciphertext_only(EncryptedUpdate(0, "client-0", leak))
        except PrivacyViolation:
            caught += 1
    return {"passed": caught == len(leaks), "cases": len(leaks)}


@check("packing-structure")
def _packing() -> dict:
    length = 61706
    counts = [chunk_count(length, 1 << e) for e in (13, 14, 15)]
    ok = counts == [math.ceil(length / (1 << (e - 1))) for e in (13, 14, 15)]
    ok &= all(a > b for a, b in itertools.pairwise(counts))
    return {"passed": ok, "chunks_8192": counts[0], "chunks_16384": counts[1], "chunks_32768": counts[2]}


def run_selftest(names=None) -> list[dict]:
    """Run the named checks (all by default); a crashing check is reported as failed."""
    rows = []
    for name in names or CHECKS:
        try:
            result = CHECKS[name]()
        except Exception as exc:  # reported, not raised: the selftest must finish
            result = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        rows.append({"check": name, **result})
    return rows
