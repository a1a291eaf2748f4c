import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hefl.errors import BasisError, DomainError, ParameterError
from hefl.rns import (
    Domain,
    Modulus,
    PolyRns,
    RnsBasis,
    apply_automorphism,
    convert_basis,
    digit_factor,
    generate_primes,
    mod_down,
    mod_up,
    ntt_forward,
    ntt_inverse,
    poly_add,
    poly_mul,
    poly_pointwise_mul,
    poly_sub,
    rns_decompose,
    sample,
)
from hefl.rns import kernels, sampling


def schoolbook(a, b, q):
    """O(N^2) negacyclic product with Python integers."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += int(a[i]) * int(b[j])
            else:
                out[k - n] -= int(a[i]) * int(b[j])
    return [v % q for v in out]


def crt_centered(rows, qs):
    big = math.prod(qs)
    out = []
    for col in zip(*rows):
        x = sum(int(r) * (big // q) * pow(big // q, -1, q) for r, q in zip(col, qs)) % big
        out.append(x - big if x > big // 2 else x)
    return out


@pytest.fixture(scope="module")
def basis():
    return RnsBasis.generate(16, [30, 25, 25, 25], [31], security_level=None)


# -- primes and moduli -------------------------------------------------------


def test_generated_primes_are_ntt_friendly():
    qs = generate_primes(40, 3, 8192)
    assert len(set(qs)) == 3
    for q in qs:
        assert q < 2**40 and q % (2 * 8192) == 1
    assert qs == sorted(qs, reverse=True)


def test_modulus_root_invariants():
    m = Modulus(generate_primes(45, 1, 1024)[0], 1024)
    assert pow(m.root, 2048, m.value) == 1
    assert pow(m.root, 1024, m.value) == m.value - 1
    assert m.n_inverse * 1024 % m.value == 1


def test_modulus_rejects_non_friendly_prime():
    with pytest.raises(ParameterError):
        Modulus(101, 8)  # 101 != 1 mod 16


def test_default_basis_passes_security_and_insecure_rejected():
    ok = RnsBasis.generate(8192, [46, 40, 40, 40], [51])
    assert ok.log_qp <= 218
    with pytest.raises(ParameterError):
        RnsBasis.generate(8192, [50, 40, 40, 40, 40], [51])


def test_basis_rejects_duplicate_primes():
    m = Modulus(17, 8)
    with pytest.raises(ParameterError):
        RnsBasis((m,), (m,), 8, None)


# -- modular multiplication kernel ----------------------------------------------


@settings(max_examples=200, deadline=None)
@given(bits=st.integers(20, 51), data=st.data())
def test_mulmod_matches_python_ints(bits, data):
    q = generate_primes(bits, 1, 8)[0]
    a = np.array([data.draw(st.integers(0, q - 1)) for _ in range(8)], dtype=np.int64)
    b = np.array([data.draw(st.integers(0, q - 1)) for _ in range(8)], dtype=np.int64)
    out = kernels.mulmod_rows(a[None], b[None], np.array([q], dtype=np.int64))[0]
    assert [int(v) for v in out] == [int(x) * int(y) % q for x, y in zip(a, b)]


# -- NTT -----------------------------------------------------------------------


def test_ntt_of_constant_is_constant():
    m = Modulus(generate_primes(40, 1, 64)[0], 64)
    c = np.zeros(64, dtype=np.int64)
    c[0] = 123456
    e = ntt_forward(PolyRns.from_signed(c, (m,)))
    assert np.all(e.coeffs == 123456)


def test_ntt_of_x_gives_odd_powers_of_root():
    m = Modulus(17, 8)
    e = ntt_forward(PolyRns.from_signed(np.array([0, 1, 0, 0, 0, 0, 0, 0]), (m,)))
    # direct evaluation of a(x) = x at every primitive 16th root of unity
    odd_powers = {pow(m.root, k, 17) for k in range(1, 16, 2)}
    assert set(e.coeffs[0].tolist()) == odd_powers
    assert len(set(e.coeffs[0].tolist())) == 8


@pytest.mark.parametrize("n", [8, 16, 32])
def test_ntt_convolution_matches_schoolbook(n):
    rng = np.random.default_rng(n)
    qs = generate_primes(30, 2, n)
    moduli = tuple(Modulus(q, n) for q in qs)
    for _ in range(1000 if n == 16 else 200):
        a = sample("uniform", rng, moduli)
        b = sample("uniform", rng, moduli)
        prod = ntt_inverse(ntt_forward(a) * ntt_forward(b))
        for row, q, ra, rb in zip(prod.coeffs, qs, a.coeffs, b.coeffs):
            assert row.tolist() == schoolbook(ra, rb, q)


def test_poly_mul_helper_matches_schoolbook():
    rng = np.random.default_rng(1)
    m = Modulus(generate_primes(35, 1, 32)[0], 32)
    a, b = sample("uniform", rng, (m,)), sample("uniform", rng, (m,))
    assert poly_mul(a, b).coeffs[0].tolist() == schoolbook(a.coeffs[0], b.coeffs[0], m.value)


def test_ntt_roundtrip_zero():
    m = Modulus(generate_primes(40, 1, 8192)[0], 8192)
    z = PolyRns.zero((m,))
    assert ntt_inverse(ntt_forward(z)) == z


def test_ntt_roundtrip_bit_exact_many():
    n = 8192
    qs = generate_primes(46, 4, n)
    moduli = tuple(Modulus(q, n) for q in qs)
    rng = np.random.default_rng(7)
    for _ in range(250):  # 250 x 4 primes = 1000 random residue polynomials
        a = sample("uniform", rng, moduli)
        assert ntt_inverse(ntt_forward(a)) == a


def test_inverse_of_all_ones_is_one():
    m = Modulus(generate_primes(40, 1, 256)[0], 256)
    ones = PolyRns(np.ones((1, 256), dtype=np.int64), (m,), Domain.EVALUATION)
    c = ntt_inverse(ones).coeffs[0]
    assert c[0] == 1 and not c[1:].any()


def test_ntt_domain_errors():
    m = Modulus(17, 8)
    p = PolyRns.zero((m,))
    with pytest.raises(DomainError):
        ntt_inverse(p)
    with pytest.raises(DomainError):
        ntt_forward(ntt_forward(p))


# -- residue arithmetic -----------------------------------------------------------


def test_add_zero_and_sub_self():
    rng = np.random.default_rng(3)
    m = (Modulus(97, 8),)
    a = sample("uniform", rng, m)
    assert a + PolyRns.zero(m) == a
    assert a - a == PolyRns.zero(m)
    assert -(-a) == a


def test_arith_matches_bigint_oracle_single_small_prime():
    rng = np.random.default_rng(4)
    m = (Modulus(97, 8),)
    for _ in range(100):
        a, b = sample("uniform", rng, m), sample("uniform", rng, m)
        ra, rb = a.coeffs[0].tolist(), b.coeffs[0].tolist()
        assert poly_add(a, b).coeffs[0].tolist() == [(x + y) % 97 for x, y in zip(ra, rb)]
        assert poly_sub(a, b).coeffs[0].tolist() == [(x - y) % 97 for x, y in zip(ra, rb)]
        assert poly_pointwise_mul(a, b).coeffs[0].tolist() == [(x * y) % 97 for x, y in zip(ra, rb)]


def test_rns_arith_matches_bigint_mod_q(basis):
    rng = np.random.default_rng(5)
    moduli = basis.moduli(3)
    qs = [m.value for m in moduli]
    big = math.prod(qs)
    for _ in range(50):
        xa = [int(v) for v in rng.integers(-(2**62), 2**62, size=16)]
        xb = [int(v) for v in rng.integers(-(2**62), 2**62, size=16)]
        xa = [v * 12345678901 for v in xa]  # exceed 64 bits
        a = PolyRns.from_signed(np.array(xa, dtype=object), moduli)
        b = PolyRns.from_signed(np.array(xb, dtype=object), moduli)
        for op, f in [(poly_add, lambda x, y: x + y), (poly_sub, lambda x, y: x - y),
                      (poly_pointwise_mul, lambda x, y: x * y)]:
            got = op(a, b).to_bigint(centered=False).tolist()
            assert got == [f(x, y) % big for x, y in zip(xa, xb)]


def test_mismatched_bases_rejected(basis):
    a = PolyRns.zero(basis.moduli(2))
    b = PolyRns.zero(basis.moduli(3))
    with pytest.raises(BasisError):
        a + b
    with pytest.raises(DomainError):
        a + ntt_forward(a)


def test_to_bigint_roundtrip(basis):
    rng = np.random.default_rng(6)
    moduli = basis.moduli(3)
    big = math.prod(m.value for m in moduli)
    vals = [int(rng.integers(0, 2**60)) * int(rng.integers(0, 2**40)) - big // 3 for _ in range(16)]
    p = PolyRns.from_signed(np.array(vals, dtype=object), moduli)
    assert p.to_bigint().tolist() == vals


# -- decomposition, ModUp, ModDown ---------------------------------------------------


def test_single_digit_when_alpha_covers_level(basis):
    rng = np.random.default_rng(8)
    p = sample("uniform", rng, basis.moduli(3))
    digits = rns_decompose(p, 4, basis)
    assert len(digits) == 1 and digits[0] == p


def test_beta_formula(basis):
    p = PolyRns.zero(basis.moduli(3))
    assert len(rns_decompose(p, 2, basis)) == 2  # ceil(4 / 2)
    assert len(rns_decompose(PolyRns.zero(basis.moduli(2)), 2, basis)) == 2  # ceil(3 / 2)
    assert len(rns_decompose(PolyRns.zero(basis.moduli(3)), 1, basis)) == 4


@pytest.mark.parametrize("alpha,level", [(1, 3), (1, 1), (2, 3), (2, 2), (3, 3), (4, 3)])
def test_decompose_recombination_oracle(basis, alpha, level):
    rng = np.random.default_rng(alpha * 10 + level)
    moduli = basis.moduli(level)
    qs = [m.value for m in moduli]
    big = math.prod(qs)
    p = sample("uniform", rng, moduli)
    truth = p.to_bigint(centered=False).tolist()
    total = [0] * 16
    for j, d in enumerate(rns_decompose(p, alpha, basis)):
        dq = [m.value for m in d.moduli]
        vals = crt_centered(d.coeffs, dq)
        hat = digit_factor(basis, alpha, j)
        total = [t + v * hat for t, v in zip(total, vals)]
    assert [t % big for t in total] == truth


def test_mod_up_zero_and_mod_down_zero(basis):
    z = PolyRns.zero(basis.moduli(3))
    ups = mod_up(rns_decompose(z, 1, basis), basis, 3)
    assert all(not u.coeffs.any() for u in ups)
    assert not mod_down(PolyRns.zero(basis.extended(3)), basis, 3).coeffs.any()


def test_mod_up_matches_crt_lift(basis):
    rng = np.random.default_rng(9)
    for alpha in (1, 2):
        p = sample("uniform", rng, basis.moduli(3))
        digits = rns_decompose(p, alpha, basis)
        for d, up in zip(digits, mod_up(digits, basis, 3)):
            lifted = crt_centered(d.coeffs, [m.value for m in d.moduli])
            for row, m in zip(up.coeffs, up.moduli):
                assert row.tolist() == [v % m.value for v in lifted]


def test_small_poly_survives_up_down_roundtrip(basis):
    rng = np.random.default_rng(10)
    q0 = basis.primes[0].value
    vals = rng.integers(-(q0 // 4) + 1, q0 // 4, size=16)
    x = PolyRns.from_signed(vals, basis.moduli(3))
    (up,) = mod_up([x], basis, 3)
    scaled = up.mul_scalar(basis.special_product)
    back = mod_down(scaled, basis, 3).to_bigint().tolist()
    assert max(abs(a - int(b)) for a, b in zip(back, vals)) <= 1
    # ModDown of an arbitrary element rounds x / P
    raw = mod_down(up, basis, 3).to_bigint().tolist()
    assert all(abs(r - int(v) / basis.special_product) <= 1 for r, v in zip(raw, vals))


def test_mod_down_evaluation_domain_matches_coefficient(basis):
    rng = np.random.default_rng(11)
    x = sample("uniform", rng, basis.extended(2))
    a = mod_down(x, basis, 2)
    b = ntt_inverse(mod_down(ntt_forward(x), basis, 2))
    assert a == b


def test_convert_basis_exact(basis):
    rng = np.random.default_rng(12)
    src = basis.moduli(1)
    big = math.prod(m.value for m in src)
    vals = [int(v) for v in rng.integers(-(2**40), 2**40, size=16)]
    vals = [v * 2**10 % big for v in vals]
    vals = [v - big if v > big // 2 else v for v in vals]
    p = PolyRns.from_signed(np.array(vals, dtype=object), src)
    out = convert_basis(p, basis.special + basis.primes[2:])
    for row, m in zip(out.coeffs, out.moduli):
        assert row.tolist() == [v % m.value for v in vals]


def test_automorphism_evaluation_matches_coefficient():
    n = 64
    m = (Modulus(generate_primes(40, 1, n)[0], n),)
    rng = np.random.default_rng(13)
    a = sample("uniform", rng, m)
    for g in (5, 25, 2 * n - 1, 3):
        direct = apply_automorphism(a, g)
        via_ntt = ntt_inverse(apply_automorphism(ntt_forward(a), g))
        assert direct == via_ntt


# -- sampling -----------------------------------------------------------------------


def test_sampling_is_deterministic(basis):
    for dist in ("ternary", "uniform", "cbd"):
        a = sample(dist, 42, basis.moduli(3))
        b = sample(dist, 42, basis.moduli(3))
        assert a.coeffs.tobytes() == b.coeffs.tobytes()


def test_sampling_requires_explicit_seed(basis):
    with pytest.raises(ParameterError):
        sample("ternary", None, basis.moduli(0))


def test_ternary_frequencies_within_three_sigma():
    draws = sampling.ternary(1, 100_000, p_zero=1 / 3)
    for value, p in ((-1, 1 / 3), (0, 1 / 3), (1, 1 / 3)):
        freq = np.mean(draws == value)
        sigma = math.sqrt(p * (1 - p) / draws.size)
        assert abs(freq - p) < 3 * sigma
    sparse = sampling.ternary(2, 100_000, p_zero=0.5)
    assert abs(np.mean(sparse == 0) - 0.5) < 3 * math.sqrt(0.25 / 1e5)


def test_cbd_mean_and_variance():
    eta = 21
    draws = sampling.centered_binomial(3, 100_000, eta)
    sigma_mean = math.sqrt(eta / 2 / draws.size)
    assert abs(draws.mean()) < 3 * sigma_mean
    assert abs(draws.var() - eta / 2) < 0.2
    assert np.abs(draws).max() <= eta


def test_uniform_residues_in_range(basis):
    p = sample("uniform", 5, basis.moduli(3))
    for row, m in zip(p.coeffs, p.moduli):
        assert row.min() >= 0 and row.max() < m.value
