"""Exact enumeration for one and two coupled systems at small ``N``.

Configurations are encoded as bitmasks ``b`` with ``sigma_i = 1 - 2 ((b >> i) & 1)``,
so that ``N R(sigma, tau) = N - 2 popcount(b_sigma ^ b_tau)`` and the Walsh
character ``prod_{i in S} sigma_i`` equals ``(-1)^popcount(b & S)``.

Disorder is drawn in one of two ways.

``tensor``
    The order-``2p`` term ``N^{-(2p-1)/2} sum g_{i_1..i_2p} sigma_{i_1}..sigma_{i_2p}``
    only depends on the set ``S`` of indices that appear an odd number of times,
    so it equals ``sum_S c_S sigma_S`` with independent Gaussian ``c_S`` of
    variance ``#{tuples with odd set S} / N^(2p-1)``. The energy table is the
    Walsh-Hadamard transform of ``c``. Coupling uses
    ``c^j = sqrt(t_p) c + sqrt(1 - t_p) c'^j`` coefficientwise.
``config-cholesky``
    The joint covariance ``N xi_{j,j'}(R)`` of both energy tables is factorized
    directly.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .errors import DomainError, NumericalError, SizeGuardError
from .mixture import CoupledModelSpec, poly_eval

__all__ = [
    "DisorderRealization",
    "ShellResult",
    "OverlapReport",
    "FunctionSpec",
    "GGResult",
    "ConcentrationReport",
    "spins",
    "popcount",
    "walsh_hadamard",
    "subset_tuple_counts",
    "sample_disorder",
    "exact_shell_energies",
    "shell_sums",
    "xor_shell_sums",
    "gibbs_probabilities",
    "overlap_statistics",
    "gg_residuals",
    "free_energy_concentration",
]

TENSOR_MAX_N = 20
CHOLESKY_MAX_N = 10
SWEEP_MAX_N = 13
GG_MAX_REPLICAS = 4
GG_MAX_DEGREE = 6
GG_MAX_TUPLES = 4_000_000
CHOLESKY_JITTER = 1e-10
SCHEMES = ("tensor", "config-cholesky")
_BLOCK = 1 << 16


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("THREADS", "1")))
    except ValueError:
        return 1


def _map(func, items):
    workers = _threads()
    if workers == 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(func, items))


def _rng(seed, realization: int, component: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(realization), int(component)))
    return np.random.Generator(np.random.Philox(ss))


@lru_cache(maxsize=None)
def spins(N: int) -> np.ndarray:
    """``(2^N, N)`` array of spin configurations in bitmask order."""
    b = np.arange(1 << N)[:, None]
    out = (1 - 2 * ((b >> np.arange(N)) & 1)).astype(float)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _popcount_table(bits: int) -> np.ndarray:
    t = np.zeros(1 << bits, dtype=np.int64)
    for i in range(bits):
        t += (np.arange(1 << bits) >> i) & 1
    return t


def popcount(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    table = _popcount_table(16)
    out = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        out += table[x & 0xFFFF]
        x = x >> 16
    return out


def walsh_hadamard(values: np.ndarray) -> np.ndarray:
    """Unnormalized transform ``out[b] = sum_S values[S] (-1)^popcount(b & S)``."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    N = n.bit_length() - 1
    if n != 1 << N:
        raise DomainError("length must be a power of two")
    a = v.reshape((2,) * N + v.shape[1:]) if N else v.copy()
    for axis in range(N):
        lo = np.take(a, 0, axis=axis)
        hi = np.take(a, 1, axis=axis)
        a = np.stack([lo + hi, lo - hi], axis=axis)
    return a.reshape(v.shape)


@lru_cache(maxsize=None)
def subset_tuple_counts(N: int, p: int) -> tuple:
    """Number of ``2p``-tuples in ``[N]^{2p}`` whose odd-multiplicity set is a fixed ``S``.

    Entry ``j`` is for ``|S| = j``; it equals ``(2p)! [t^{2p}] sinh^j t cosh^{N-j} t``.
    """
    out = []
    for j in range(N + 1):
        total = 0
        for r in range(N + 1):
            c = sum(comb(j, a) * (-1) ** a * comb(N - j, r - a)
                    for a in range(max(0, r - (N - j)), min(j, r) + 1))
            total += c * (N - 2 * r) ** (2 * p)
        out.append(total // (1 << N))
    return tuple(out)


@dataclass(frozen=True)
class DisorderRealization:
    """Energy tables (without fields) and per-site fields for one disorder draw."""

    N: int
    scheme: str
    energy1: np.ndarray
    energy2: np.ndarray
    field1: np.ndarray
    field2: np.ndarray
    seed: int
    realization: int
    regularized: bool = False

    def hamiltonian(self, j: int) -> np.ndarray:
        """``H^j`` over all ``2^N`` configurations, fields included."""
        s = spins(self.N)
        if j == 1:
            return self.energy1 + s @ self.field1
        if j == 2:
            return self.energy2 + s @ self.field2
        raise DomainError("system index must be 1 or 2")


def _check_size(N, scheme):
    if scheme not in SCHEMES:
        raise DomainError(f"scheme must be one of {SCHEMES}")
    if N < 1:
        raise DomainError("N must be at least 1")
    limit = TENSOR_MAX_N if scheme == "tensor" else CHOLESKY_MAX_N
    if N > limit:
        raise SizeGuardError(f"N={N} exceeds the {scheme} limit N <= {limit}")


def _sample_fields(coupled, N, rng):
    fl = coupled.field_law
    g = rng.standard_normal((2, N))
    g1 = g[0]
    g2 = fl.corr * g[0] + np.sqrt(max(1 - fl.corr ** 2, 0.0)) * g[1]
    return fl.mean1 + fl.std1 * g1, fl.mean2 + fl.std2 * g2


def _tensor_tables(coupled, N, seed, r):
    sizes = popcount(np.arange(1 << N))
    b1 = np.asarray(coupled.spec1.betas)
    b2 = np.asarray(coupled.spec2.betas)
    t = np.asarray(coupled.correlations)
    coef1 = np.zeros(1 << N)
    coef2 = np.zeros(1 << N)
    rngs = [_rng(seed, r, comp) for comp in (0, 1, 2)]
    for p in range(1, len(b1) + 1):
        draws = [g.standard_normal(1 << N) for g in rngs]
        if b1[p - 1] == 0.0 and b2[p - 1] == 0.0:
            continue
        counts = np.asarray(subset_tuple_counts(N, p), dtype=float)
        sd = np.sqrt(counts[sizes] / float(N) ** (2 * p - 1))
        common = np.sqrt(t[p - 1]) * draws[0]
        own = np.sqrt(1 - t[p - 1])
        coef1 += b1[p - 1] * sd * (common + own * draws[1])
        coef2 += b2[p - 1] * sd * (common + own * draws[2])
    return walsh_hadamard(coef1), walsh_hadamard(coef2)


@lru_cache(maxsize=8)
def _joint_factor(coupled, N):
    s = spins(N)
    R = (s @ s.T) / N
    blocks = [[N * poly_eval(coupled.coefficients(j, jp), R) for jp in (1, 2)] for j in (1, 2)]
    cov = np.block(blocks)
    if not np.any(cov):
        return np.zeros_like(cov), False
    try:
        return np.linalg.cholesky(cov), False
    except np.linalg.LinAlgError:
        pass
    reg = cov + CHOLESKY_JITTER * np.eye(cov.shape[0])
    try:
        return np.linalg.cholesky(reg), True
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None)), True


def _cholesky_tables(coupled, N, seed, r):
    L, reg = _joint_factor(coupled, N)
    z = _rng(seed, r, 0).standard_normal(L.shape[1])
    x = L @ z
    n = 1 << N
    return x[:n], x[n:], reg


def sample_disorder(coupled: CoupledModelSpec, N: int, seed: int = 0,
                    scheme: str = "tensor", realization: int = 0) -> DisorderRealization:
    """Draw correlated energy tables with ``Cov(X^1(s), X^2(t)) = N xi_12(R(s, t))``.

    Streams are keyed by ``(seed, realization, component)`` so a realization
    does not depend on which others were drawn.
    """
    _check_size(N, scheme)
    reg = False
    if scheme == "tensor":
        e1, e2 = _tensor_tables(coupled, N, seed, realization)
    else:
        e1, e2, reg = _cholesky_tables(coupled, N, seed, realization)
    h1, h2 = _sample_fields(coupled, N, _rng(seed, realization, 3))
    return DisorderRealization(N, scheme, e1, e2, h1, h2, int(seed), int(realization), reg)


def gibbs_probabilities(hamiltonian: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalized Gibbs weights and ``log Z``."""
    log_z = float(logsumexp(hamiltonian))
    return np.exp(hamiltonian - log_z), log_z


def _sweep_guard(N):
    if N > SWEEP_MAX_N:
        raise SizeGuardError(f"N={N} exceeds the pair-sweep limit N <= {SWEEP_MAX_N}")


def shell_sums(w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """``out[d] = sum_{popcount(s ^ t) = d} w1[s] w2[t]`` by a blocked pair sweep."""
    n = w1.shape[0]
    N = n.bit_length() - 1
    _sweep_guard(N)
    tau = np.arange(n)
    out = np.zeros(N + 1)
    rows = max(1, _BLOCK // n)
    table = _popcount_table(N) if N else np.zeros(1, dtype=np.int64)
    for start in range(0, n, rows):
        sig = np.arange(start, min(start + rows, n))
        d = table[sig[:, None] ^ tau[None, :]]
        out += np.bincount(d.ravel(), (w1[sig, None] * w2[None, :]).ravel(), minlength=N + 1)
    return out


def xor_shell_sums(w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """Same sums as ``shell_sums`` through XOR convolution.

    Accurate to ``1e-16`` relative to the total, not relative to each shell.
    """
    n = w1.shape[0]
    N = n.bit_length() - 1
    conv = walsh_hadamard(walsh_hadamard(w1) * walsh_hadamard(w2)) / n
    return np.bincount(popcount(np.arange(n)), conv, minlength=N + 1)


@dataclass(frozen=True)
class ShellResult:
    """Per-realization shell log sums and log partition functions.

    ``u[d] = 1 - 2d/N``; ``log_shell[d] = log sum_{R(s,t) = u[d]} exp(H^1(s) + H^2(t))``.
    """

    u: np.ndarray
    log_shell: np.ndarray
    log_z1: float
    log_z2: float
    gibbs_r: np.ndarray
    gibbs_r1: np.ndarray
    gibbs_r2: np.ndarray


def exact_shell_energies(real: DisorderRealization) -> ShellResult:
    """Shell log sums by a single pair sweep, plus overlap laws under the Gibbs measures."""
    N = real.N
    _sweep_guard(N)
    h1 = real.hamiltonian(1)
    h2 = real.hamiltonian(2)
    m1, m2 = h1.max(), h2.max()
    w1, w2 = np.exp(h1 - m1), np.exp(h2 - m2)
    with np.errstate(divide="ignore"):
        log_shell = np.log(shell_sums(w1, w2)) + m1 + m2
    log_z1 = float(m1 + np.log(w1.sum()))
    log_z2 = float(m2 + np.log(w2.sum()))
    p1, p2 = w1 / w1.sum(), w2 / w2.sum()
    u = 1 - 2 * np.arange(N + 1) / N
    return ShellResult(u, log_shell, log_z1, log_z2,
                       _clip_mass(xor_shell_sums(p1, p2)),
                       _clip_mass(xor_shell_sums(p1, p1)),
                       _clip_mass(xor_shell_sums(p2, p2)))


def _clip_mass(m):
    m = np.clip(m, 0.0, None)
    return m / m.sum()


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    m = v.shape[0]
    mean = v.mean(axis=0)
    se = v.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.full_like(mean, np.nan)
    return mean, se


@dataclass
class OverlapReport:
    """Disorder averages of exact Gibbs quantities over ``M`` realizations.

    ``p_shell[d]`` estimates ``p_{N,u}`` at ``u[d]`` (``-inf`` for empty shells);
    ``mass_*`` are ``E<I(R = u[d])>`` for ``R(s,t)``, ``R^1_12`` and ``R^2_12``.
    """

    N: int
    M: int
    u: np.ndarray
    p_shell: np.ndarray
    p_shell_se: np.ndarray
    p1: float
    p1_se: float
    p2: float
    p2_se: float
    mass_r: np.ndarray
    mass_r1: np.ndarray
    mass_r2: np.ndarray
    se_r: np.ndarray
    se_r1: np.ndarray
    se_r2: np.ndarray
    moments: dict = field(default_factory=dict)

    def moment(self, name: str) -> tuple[float, float]:
        return self.moments[name]

    def histogram_rows(self):
        """Rows ``(bin_lo, bin_hi, mass_R, mass_R1, mass_R2, se_R, se_R1, se_R2)``."""
        half = 1.0 / self.N
        order = np.argsort(self.u)
        return [(self.u[d] - half, self.u[d] + half, self.mass_r[d], self.mass_r1[d],
                 self.mass_r2[d], self.se_r[d], self.se_r1[d], self.se_r2[d]) for d in order]


def overlap_statistics(coupled: CoupledModelSpec, N: int, M: int, seed: int = 0,
                       scheme: str = "tensor") -> OverlapReport:
    """Exact per-realization enumeration averaged over ``M`` disorder draws."""
    _check_size(N, scheme)
    _sweep_guard(N)
    if M < 1:
        raise DomainError("M must be positive")

    def one(r):
        return exact_shell_energies(sample_disorder(coupled, N, seed, scheme, r))

    res = _map(one, range(M))
    u = res[0].u
    shells = np.array([r.log_shell for r in res]) / N
    finite = np.all(np.isfinite(shells), axis=0)
    p_shell = np.full(N + 1, -np.inf)
    p_se = np.full(N + 1, np.nan)
    if finite.any():
        p_shell[finite], p_se[finite] = _mean_se(shells[:, finite])
    p1, p1_se = _mean_se([r.log_z1 / N for r in res])
    p2, p2_se = _mean_se([r.log_z2 / N for r in res])
    mr, ser = _mean_se([r.gibbs_r for r in res])
    m1, se1 = _mean_se([r.gibbs_r1 for r in res])
    m2, se2 = _mean_se([r.gibbs_r2 for r in res])
    moments = {}
    for name, key in (("R", "gibbs_r"), ("R1", "gibbs_r1"), ("R2", "gibbs_r2")):
        law = np.array([getattr(r, key) for r in res])
        for k in (1, 2, 4):
            mean, se = _mean_se(law @ u ** k)
            moments[f"{name}^{k}"] = (float(mean), float(se))
    return OverlapReport(N, M, u, p_shell, p_se, float(p1), float(p1_se), float(p2),
                         float(p2_se), mr, m1, m2, ser, se1, se2, moments)


# --- Ghirlanda-Guerra functionals -------------------------------------------

_KINDS = ("R1", "R2", "R")


@dataclass(frozen=True)
class FunctionSpec:
    """Polynomial in overlaps: ``sum coef * prod factor`` with factors ``(kind, a, b)``.

    ``kind`` is ``"R1"`` for ``R(s^a, s^b)``, ``"R2"`` for ``R(t^a, t^b)`` and
    ``"R"`` for ``R(s^a, t^b)``; replicas are numbered from 1.
    """

    terms: tuple

    def __post_init__(self):
        terms = []
        for coef, factors in self.terms:
            fs = []
            for kind, a, b in factors:
                if kind not in _KINDS or int(a) < 1 or int(b) < 1:
                    raise DomainError(f"bad overlap factor {(kind, a, b)}")
                fs.append((kind, int(a), int(b)))
            terms.append((float(coef), tuple(fs)))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def constant(cls, c: float = 1.0) -> "FunctionSpec":
        return cls(((c, ()),))

    @classmethod
    def power(cls, kind: str, a: int, b: int, k: int, coef: float = 1.0) -> "FunctionSpec":
        return cls(((coef, ((kind, a, b),) * k),))

    @classmethod
    def parse(cls, text: str) -> "FunctionSpec":
        """Parse e.g. ``"R[1,1]^2"``, ``"1"``, ``"0.5*R1[1,2]^2 - R2[1,2]"``."""
        src = str(text).replace(" ", "").replace("-", "+-")
        terms = []
        for chunk in filter(None, src.split("+")):
            coef, factors = 1.0, []
            for tok in chunk.split("*"):
                sign = -1.0 if tok.startswith("-") else 1.0
                tok = tok.lstrip("-")
                coef *= sign
                if tok.startswith("R"):
                    try:
                        head, rest = tok.split("[", 1)
                        idx, _, pw = rest.partition("]")
                        a, b = (int(v) for v in idx.split(","))
                        k = int(pw[1:]) if pw.startswith("^") else 1
                        if pw and not pw.startswith("^"):
                            raise ValueError
                    except ValueError as exc:
                        raise DomainError(f"cannot parse factor {tok!r}") from exc
                    factors.extend([(head, a, b)] * k)
                elif tok:
                    try:
                        coef *= float(tok)
                    except ValueError as exc:
                        raise DomainError(f"cannot parse factor {tok!r}") from exc
            terms.append((coef, tuple(factors)))
        if not terms:
            raise DomainError("empty function")
        return cls(tuple(terms))

    @property
    def degree(self) -> int:
        return max(len(f) for _, f in self.terms)

    @property
    def max_replica(self) -> int:
        return max([max(a, b) for _, f in self.terms for _, a, b in f] or [0])

    def relabel(self, mapping: dict) -> "FunctionSpec":
        m = lambda a: mapping.get(a, a)
        return FunctionSpec(tuple((c, tuple((k, m(a), m(b)) for k, a, b in f))
                                  for c, f in self.terms))

    def times(self, other: "FunctionSpec") -> "FunctionSpec":
        return FunctionSpec(tuple((c1 * c2, f1 + f2) for c1, f1 in self.terms
                                  for c2, f2 in other.terms))


def psi_spec(coefficients, kind: str, a: int, b: int) -> FunctionSpec:
    """``psi(R_kind[a,b])`` for ``psi(x) = sum_k coefficients[k] x^k``."""
    return FunctionSpec(tuple((c, ((kind, a, b),) * k)
                              for k, c in enumerate(coefficients) if c != 0.0)
                        or ((0.0, ()),))


def _monomial_moment(factors, m1, m2, N):
    """``<prod of overlaps>`` under product Gibbs measures from Walsh moments."""
    D = len(factors)
    if D == 0:
        return 1.0
    if N ** D > GG_MAX_TUPLES:
        raise SizeGuardError(f"N^degree = {N ** D} index tuples exceeds {GG_MAX_TUPLES}")
    bits = 1 << np.arange(N, dtype=np.int64)
    grids = np.meshgrid(*([bits] * D), indexing="ij", sparse=True)
    masks = {}
    for (kind, a, b), g in zip(factors, grids):
        first = ("s", a) if kind in ("R1", "R") else ("t", a)
        second = ("t", b) if kind in ("R2", "R") else ("s", b)
        for key in (first, second):
            masks[key] = masks.get(key, 0) ^ g
    total = np.ones((1,) * D)
    for (system, _), mask in sorted(masks.items()):
        table = m1 if system == "s" else m2
        total = total * table[mask]
    return float(np.sum(total)) / float(N) ** D


def _expect(spec: FunctionSpec, m1, m2, N):
    return sum(c * _monomial_moment(f, m1, m2, N) for c, f in spec.terms)


@dataclass(frozen=True)
class GGResult:
    """Estimates of the four functionals with jackknife standard errors."""

    N: int
    M: int
    n: int
    estimates: dict

    def rows(self):
        return [(name, self.n, est, se) for name, (est, se) in self.estimates.items()]


def _gg_terms(f, psi, n):
    """Linear and product parts of each functional, as ``FunctionSpec`` lists.

    Each entry is ``(linear: [(weight, spec)], product: (weight, specA, specB) | None)``.
    """
    out = {}
    for j, kind in ((1, "R1"), (2, "R2")):
        lin = [(1.0, f.times(psi_spec(psi, kind, 1, n + 1)))]
        lin += [(-1.0 / n, f.times(psi_spec(psi, kind, 1, l))) for l in range(2, n + 1)]
        out[f"Phi{j}"] = (lin, (-1.0 / n, f, psi_spec(psi, kind, 1, 2)))
    out["Psi1"] = ([(1.0, f.times(psi_spec(psi, "R", 1, n + 1)))]
                   + [(-1.0 / n, f.times(psi_spec(psi, "R", 1, l))) for l in range(1, n + 1)],
                   None)
    out["Psi2"] = ([(1.0, f.times(psi_spec(psi, "R", n + 1, 1)))]
                   + [(-1.0 / n, f.times(psi_spec(psi, "R", l, 1))) for l in range(1, n + 1)],
                   None)
    return out


def _u_product(a, b):
    """Unbiased estimate of ``E[a] E[b]`` from paired samples."""
    m = a.shape[0]
    return (a.sum() * b.sum() - np.dot(a, b)) / (m * (m - 1))


def gg_residuals(coupled: CoupledModelSpec, N: int, M: int, n: int, psi, f: FunctionSpec,
                 seed: int = 0, scheme: str = "tensor") -> GGResult:
    """Estimate ``Phi_{1,n}, Psi_{1,n}, Phi_{2,n}, Psi_{2,n}`` for ``(f, psi)``.

    ``psi`` is a coefficient sequence ``(a_0, a_1, ...)`` of a polynomial and
    ``f`` a ``FunctionSpec`` over replicas ``1..n``. Replica moments are
    computed from the Walsh moments ``<sigma_S>`` of each Gibbs measure, so
    no sweep over ``n + 1`` replicas is needed.
    """
    _check_size(N, scheme)
    if not (1 <= n <= GG_MAX_REPLICAS):
        raise SizeGuardError(f"n must lie in 1..{GG_MAX_REPLICAS}")
    psi = tuple(float(c) for c in psi)
    if len(psi) - 1 > GG_MAX_DEGREE or f.degree > GG_MAX_DEGREE:
        raise SizeGuardError(f"polynomial degree must be at most {GG_MAX_DEGREE}")
    if f.max_replica > n:
        raise DomainError("f may only depend on replicas 1..n")
    if M < 2:
        raise DomainError("M must be at least 2")
    terms = _gg_terms(f, psi, n)
    specs = []
    for lin, prod in terms.values():
        specs += [s for _, s in lin]
        if prod is not None:
            specs += [prod[1], prod[2]]

    def one(r):
        real = sample_disorder(coupled, N, seed, scheme, r)
        m1 = walsh_hadamard(gibbs_probabilities(real.hamiltonian(1))[0])
        m2 = walsh_hadamard(gibbs_probabilities(real.hamiltonian(2))[0])
        return [_expect(s, m1, m2, N) for s in specs]

    vals = np.array(_map(one, range(M)))
    estimates = {}
    col = 0
    for name, (lin, prod) in terms.items():
        k = len(lin)
        w = np.array([wt for wt, _ in lin])
        linear = vals[:, col:col + k] @ w
        col += k
        a = b = None
        if prod is not None:
            a, b = vals[:, col], vals[:, col + 1]
            col += 2

        def stat(idx):
            s = linear[idx].mean()
            if prod is not None:
                s += prod[0] * _u_product(a[idx], b[idx])
            return s

        full = stat(np.arange(M))
        leave = np.array([stat(np.delete(np.arange(M), i)) for i in range(M)])
        se = np.sqrt((M - 1) / M * np.sum((leave - leave.mean()) ** 2))
        estimates[name] = (float(full), float(se))
    return GGResult(N, M, n, estimates)


# --- free energy concentration ----------------------------------------------

@dataclass(frozen=True)
class ConcentrationReport:
    """Fluctuations of ``(1/N) log Z^1`` over disorder and fields."""

    N: int
    M: int
    mean: float
    variance: float
    variance_se: float
    eps: np.ndarray
    tail_freq: np.ndarray
    fitted_k: float
    consistent: bool


def free_energy_concentration(coupled: CoupledModelSpec, N: int, M: int, seed: int = 0,
                              scheme: str = "tensor", eps=None) -> ConcentrationReport:
    """Sample variance of ``(1/N) log Z^1`` and a fit of ``K exp(-N eps^2 / K)`` to its tails."""
    _check_size(N, scheme)
    if M < 2:
        raise DomainError("M must be at least 2")

    def one(r):
        real = sample_disorder(coupled, N, seed, scheme, r)
        return gibbs_probabilities(real.hamiltonian(1))[1] / N

    x = np.array(_map(one, range(M)))
    dev = x - x.mean()
    var = float(x.var(ddof=1))
    # se of the sample variance from the fourth central moment
    m4 = float(np.mean(dev ** 4))
    var_se = float(np.sqrt(max(m4 - var ** 2, 0.0) / M))
    sd = np.sqrt(var)
    eps = np.asarray(eps if eps is not None else (np.linspace(0.5, 3.0, 6) * sd if sd > 0
                                                 else [0.1]), dtype=float)
    freq = np.array([np.mean(np.abs(dev) >= e) for e in eps])
    k = _fit_tail(N, eps, freq)
    bound = k * np.exp(-N * eps ** 2 / k)
    slack = 3 * np.sqrt(np.maximum(freq * (1 - freq), 1.0 / M) / M)
    return ConcentrationReport(N, M, float(x.mean()), var, var_se, eps, freq, float(k),
                               bool(np.all(freq <= bound + slack)))


def _fit_tail(N, eps, freq):
    """Least-squares fit of ``log K - N eps^2 / K`` to ``log freq`` over positive frequencies."""
    mask = freq > 0
    if not mask.any():
        return 1.0
    e, lf = eps[mask], np.log(freq[mask])

    def loss(logk):
        k = np.exp(logk)
        return float(np.sum((logk - N * e ** 2 / k - lf) ** 2))

    res = minimize_scalar(loss, bounds=(-20.0, 20.0), method="bounded")
    k = float(np.exp(res.x))
    if not np.isfinite(k) or k <= 0:
        raise NumericalError("tail fit failed")
    return k
