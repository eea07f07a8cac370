"""Upper-triangular cocycle bounds, Lyapunov norms and Pesin composition.

Window products of a sequence of upper-triangular GL_2(C) matrices with
bounded corner and negative Cesaro log-diagonals admit the bound
||A_{n+m} ... A_{m+1}|| <= C e^{eps m} e^{-(alpha-eps) n}; this module
computes the minimal such C, builds the adapted (Lyapunov) norms, and
iterates perturbed maps to exhibit the contraction of small balls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Divergence, HypothesisViolation


@dataclass
class TriangularCocycle:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    M: float
    lam: float
    mu: float
    cesaro_tol: float = 0.25

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        self.c = np.asarray(self.c, dtype=np.complex128)
        if not (len(self.a) == len(self.b) == len(self.c)):
            raise ValueError("sequence length mismatch")
        if np.any(np.abs(self.c) > self.M * (1 + 1e-12)):
            raise HypothesisViolation("|c_n| exceeds the declared bound M")
        if np.any(self.a == 0) or np.any(self.b == 0):
            raise HypothesisViolation("diagonal entry vanishes (not in GL_2)")
        if self.lam <= 0 or self.mu <= 0:
            raise HypothesisViolation("need lam, mu > 0")
        ca = np.log(np.abs(self.a)).mean()
        cb = np.log(np.abs(self.b)).mean()
        if abs(ca + self.lam) > self.cesaro_tol or abs(cb + self.mu) > self.cesaro_tol:
            raise HypothesisViolation(
                f"Cesaro means ({ca:.3f}, {cb:.3f}) off (-lam, -mu) "
                f"by more than {self.cesaro_tol}")

    @property
    def alpha(self):
        return min(self.lam, self.mu)

    def __len__(self):
        return len(self.a)

    def matrix(self, n):
        return np.array([[self.a[n], self.c[n]], [0.0, self.b[n]]],
                        dtype=np.complex128)

    def truncated(self, n):
        return TriangularCocycle(self.a[:n], self.b[:n], self.c[:n],
                                 self.M, self.lam, self.mu, self.cesaro_tol)


def random_triangular(rng, n, lam=1.0, mu=1.0, M=1.0, sigma=0.4,
                      recenter=True):
    """Random cocycle satisfying the hypotheses: i.i.d. log-diagonals."""
    rng = np.random.default_rng(rng)
    la = -lam + sigma * rng.standard_normal(n)
    lb = -mu + sigma * rng.standard_normal(n)
    if recenter:
        la += -lam - la.mean()
        lb += -mu - lb.mean()
    pa = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    pb = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    c = M * rng.uniform(0, 1, n) * np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    return TriangularCocycle(np.exp(la) * pa, np.exp(lb) * pb, c, M, lam, mu)


def _sigma_max_tri(A, B, C):
    """Largest singular value of [[A, C], [0, B]] (vectorized)."""
    a2 = np.abs(A) ** 2
    b2 = np.abs(B) ** 2
    c2 = np.abs(C) ** 2
    t = a2 + b2 + c2
    disc = np.sqrt(np.maximum(t ** 2 - 4.0 * a2 * b2, 0.0))
    return np.sqrt((t + disc) / 2.0)


def window_product_norms(tc: TriangularCocycle):
    """norms[m, n] = ||A_{m+n} ... A_{m+1}|| for m >= 0, m + n <= N.

    Row m, column n (n >= 1). Entries outside the triangle are 0.
    """
    N = len(tc)
    # products over windows (m+1 .. m+n] of the index sequence 0..N-1:
    # matrices A_{m+1}..A_{m+n} are tc.matrix(m+1-1)? The sequence is
    # 0-indexed: window (m, n) uses matrices with indices m+1..m+n, i.e.
    # array slots m+1..m+n; slot N-1 is the last usable.
    norms = np.zeros((N, N + 1))
    diagA = np.ones(N, dtype=np.complex128)
    diagB = np.ones(N, dtype=np.complex128)
    corner = np.zeros(N, dtype=np.complex128)
    for n in range(1, N + 1):
        ms = np.arange(0, N - n + 1)
        idx = ms + n  # matrix slot appended at step n for window start m
        valid = idx <= N - 1
        ms = ms[valid]
        idx = idx[valid]
        if len(ms) == 0:
            break
        corner[ms] = tc.a[idx] * corner[ms] + tc.c[idx] * diagB[ms]
        diagA[ms] = tc.a[idx] * diagA[ms]
        diagB[ms] = tc.b[idx] * diagB[ms]
        norms[ms, n] = _sigma_max_tri(diagA[ms], diagB[ms], corner[ms])
    return norms


def lemma15_bound(tc: TriangularCocycle, eps, checkpoints=()):
    """Minimal C with ||A_{m+n}..A_{m+1}|| <= C e^{eps m} e^{-(alpha-eps) n}.

    Scans all windows inside the generated horizon in one fused pass.
    With `checkpoints` (sorted horizon lengths), also returns the minimal C
    over the windows contained in each prefix horizon, so stability under
    horizon doubling can be read off a single scan.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    alpha = tc.alpha
    N = len(tc)
    diagA = np.ones(N, dtype=np.complex128)
    diagB = np.ones(N, dtype=np.complex128)
    corner = np.zeros(N, dtype=np.complex128)
    emm = np.exp(-eps * np.arange(N))
    best = 1.0
    cp = sorted(checkpoints)
    cp_best = {}
    for n in range(1, N):
        ms = np.arange(0, N - n)
        idx = ms + n
        corner[ms] = tc.a[idx] * corner[ms] + tc.c[idx] * diagB[ms]
        diagA[ms] = tc.a[idx] * diagA[ms]
        diagB[ms] = tc.b[idx] * diagB[ms]
        vals = (_sigma_max_tri(diagA[ms], diagB[ms], corner[ms])
                * emm[ms] * np.exp((alpha - eps) * n))
        best = max(best, float(vals.max()))
        for L in cp:
            # windows within the prefix horizon of length L: m + n <= L - 1
            if L not in cp_best:
                cp_best[L] = 1.0
            if n <= L - 1:
                sub = vals[: L - n]
                if len(sub):
                    cp_best[L] = max(cp_best[L], float(sub.max()))
    if not np.isfinite(best):
        raise HypothesisViolation("window products diverge")
    if cp:
        return best, [cp_best[L] for L in cp]
    return best


def lyapunov_norm(tc: TriangularCocycle, m, u, eps, rel_tail=1e-12,
                  max_terms=None):
    """Adapted norm ||u||'_m = sum_k ||A_{m+k-1}..A_m u|| e^{(alpha-eps) k}.

    Truncated when the running term falls below rel_tail of the partial
    sum; Divergence if the criterion is never met within the horizon.
    """
    alpha = tc.alpha
    u = np.asarray(u, dtype=np.complex128)
    total = float(np.linalg.norm(u))  # k = 0 term
    v = u.copy()
    k = 0
    N = len(tc)
    limit = max_terms if max_terms is not None else N - m
    while True:
        if k >= limit:
            raise Divergence("Lyapunov-norm truncation never met "
                             f"(last term ratio {term / total:.2e})"
                             if k else "empty horizon")
        v = tc.matrix(m + k) @ v
        k += 1
        term = float(np.linalg.norm(v)) * np.exp((alpha - eps) * k)
        total += term
        if term < rel_tail * total:
            return total


def lyapunov_norm_contraction_gap(tc, m, u, eps, rel_tail=1e-12):
    """||A_m u||'_{m+1} - e^{-(alpha-eps)} ||u||'_m (<= 0 up to truncation)."""
    left = lyapunov_norm(tc, m + 1, tc.matrix(m) @ np.asarray(u, complex),
                         eps, rel_tail)
    right = np.exp(-(tc.alpha - eps)) * lyapunov_norm(tc, m, u, eps, rel_tail)
    return left - right


class PerturbedMap:
    """f(x) = A x + R(x) with R quadratic, R(0) = 0, dR(0) = 0, ||d2 f|| <= M."""

    def __init__(self, A, quad=None):
        self.A = np.asarray(A, dtype=np.complex128)
        self.quad = quad  # (2, 2, 2) coefficients or None

    @classmethod
    def random_quadratic(cls, A, M, rng):
        q = rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2))
        # Hessian of component i is 2*sym(q[i]); bound its norm by M
        scale = 0.0
        for i in range(2):
            s = q[i] + q[i].T
            scale = max(scale, np.linalg.norm(s, 2))
        if scale > 0:
            q = q * (M / (np.sqrt(2.0) * scale))
        return cls(A, q)

    def __call__(self, x):
        y = x @ self.A.T if x.ndim > 1 else self.A @ x
        if self.quad is not None:
            if x.ndim > 1:
                y = y + np.einsum("ijk,nj,nk->ni", self.quad, x, x)
            else:
                y = y + np.einsum("ijk,j,k->i", self.quad, x, x)
        return y


def pesin_compose(maps, theta, n, n_sphere=64, rng=None):
    """Iterate the first n maps on a sampled sphere of radius theta.

    Returns the max image norm over the sample (the measured image radius).
    """
    rng = np.random.default_rng(rng)
    z = rng.standard_normal((n_sphere, 2)) + 1j * rng.standard_normal((n_sphere, 2))
    z *= theta / np.linalg.norm(z, axis=1)[:, None]
    for f in maps[:n]:
        z = f(z)
    return float(np.max(np.linalg.norm(z, axis=1)))


def pesin_radius_and_constant(tc: TriangularCocycle, eps, M, r,
                              n_probe=32, rng=None):
    """(rho, C) certified for the contraction of composed perturbed maps.

    C bounds sup_m ||.||'_m / (e^{eps m} ||.||) numerically over probes;
    rho is the proof's admissible initial radius (with a 1/2 safety) so
    that balls B(0, theta), theta < rho, map into
    B(0, C e^{-(alpha-2 eps) n} theta).
    """
    alpha = tc.alpha
    if not (0 < 3 * eps < alpha):
        raise HypothesisViolation("need 0 < eps < alpha/3")
    rng = np.random.default_rng(rng)
    chat = 1.0
    for m in range(0, min(len(tc) // 4, 48)):
        for _ in range(n_probe // 8 + 1):
            u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            val = lyapunov_norm(tc, m, u, eps) / np.linalg.norm(u)
            chat = max(chat, val * np.exp(-eps * m))
    gap = np.exp(-(alpha - 2 * eps)) - np.exp(-(alpha - eps))
    rho = gap / (chat ** 2 * (M / 2.0) * np.exp(eps))
    rho = min(rho, r / chat) * 0.5
    return rho, chat
