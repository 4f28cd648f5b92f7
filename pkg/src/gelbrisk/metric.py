"""The Gelbrich distance on mean-covariance pairs, and its certificates.

The squared distance between ``(m1, S1)`` and ``(m2, S2)`` is

    |m1 - m2|^2 + Tr[S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}]

i.e. a Euclidean mean term plus the Bures discrepancy between the
covariances.  It lower-bounds the 2-Wasserstein distance between any two
distributions carrying those moments and is attained by Gaussian pairs, which
is what the Monte-Carlo and SDP oracles in this module certify numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, NotPD, NotPSD, SingularCov, SolverDidNotConverge
from .linalg import sym_eig, sym_matrix, sqrtm_psd

__all__ = [
    "MomentPair",
    "AffineMap",
    "gelbrich_distance",
    "gelbrich_distance_mahalanobis",
    "optimal_pushforward_map",
    "gaussian_coupling_cost",
    "gelbrich_sq_sdp_oracle",
]

#: covariances may dip this far below PSD before we call them invalid
_PSD_SLACK = 1e-8
#: relative eigenvalue floor under which a covariance counts as singular
_PD_RTOL = 1e-10


@dataclass(eq=False)
class MomentPair:
    """A mean vector paired with a PSD covariance matrix.

    Construction symmetrizes ``cov`` and rejects inputs whose smallest
    eigenvalue falls below ``-1e-8 * max(1, |cov|_max)`` (NotPSD) or whose
    shapes disagree (DimMismatch).
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = sym_matrix(self.cov)
        if self.mean.ndim != 1 or self.cov.shape[0] != self.mean.shape[0]:
            raise DimMismatch(
                f"mean has shape {self.mean.shape} but cov has shape {self.cov.shape}"
            )
        floor = -_PSD_SLACK * max(1.0, float(np.abs(self.cov).max()))
        if float(np.linalg.eigvalsh(self.cov)[0]) < floor:
            raise NotPSD(f"covariance has eigenvalue below {floor:.3e}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(eq=False)
class AffineMap:
    """Affine transport map ``x -> A @ x + b`` with PSD ``A``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        self.A = sym_matrix(self.A)
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.b.shape[0] != self.A.shape[0]:
            raise DimMismatch(
                f"intercept has shape {self.b.shape} but A has shape {self.A.shape}"
            )
        slack = -_PSD_SLACK * max(1.0, float(np.abs(self.A).max()))
        if float(np.linalg.eigvalsh(self.A)[0]) < slack:
            raise NotPSD("map matrix must be PSD within tolerance")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.A.T + self.b


def _check_dims(p1: MomentPair, p2: MomentPair) -> int:
    if p1.dim != p2.dim:
        raise DimMismatch(f"moment pairs have dimensions {p1.dim} and {p2.dim}")
    return p1.dim


def _bures_sq(s1: np.ndarray, s2: np.ndarray, h: np.ndarray | None = None) -> float:
    """Squared Bures discrepancy, optionally in the metric induced by PD ``h``."""
    if h is None:
        root2 = sqrtm_psd(s2)
        cross = sqrtm_psd(sym_matrix(root2 @ s1 @ root2))
        tr = np.trace(s1) + np.trace(s2) - 2.0 * np.trace(cross)
    else:
        root2 = sqrtm_psd(s2)
        cross = sqrtm_psd(sym_matrix(root2 @ h @ s1 @ h @ root2))
        tr = np.trace(s1 @ h) + np.trace(s2 @ h) - 2.0 * np.trace(cross)
    # mathematically >= 0; clip rounding residue before the caller's sqrt
    return max(float(tr), 0.0)


def gelbrich_distance(p1: MomentPair, p2: MomentPair) -> float:
    """Gelbrich distance between two mean-covariance pairs.

    Parameters
    ----------
    p1, p2 : MomentPair
        Pairs of equal dimension.

    Returns
    -------
    float
        ``sqrt(|m1 - m2|^2 + Bures^2(S1, S2))``, nonnegative.

    Raises
    ------
    DimMismatch
        If the pairs live in different dimensions.
    """
    _check_dims(p1, p2)
    dmu = p1.mean - p2.mean
    return float(np.sqrt(float(dmu @ dmu) + _bures_sq(p1.cov, p2.cov)))


def gelbrich_distance_mahalanobis(p1: MomentPair, p2: MomentPair, H: np.ndarray) -> float:
    """Gelbrich distance in the Mahalanobis geometry induced by a PD matrix.

    The squared distance is ``|m1 - m2|_H^2 + Tr[S1 H + S2 H -
    2 (S2^{1/2} H S1 H S2^{1/2})^{1/2}]``; with ``H = I`` it reduces to
    :func:`gelbrich_distance`.

    Raises
    ------
    NotPD
        If ``H`` is not positive definite.
    """
    n = _check_dims(p1, p2)
    H = sym_matrix(H)
    if H.shape[0] != n:
        raise DimMismatch(f"H has shape {H.shape}, expected ({n}, {n})")
    if float(np.linalg.eigvalsh(H)[0]) <= 0.0:
        raise NotPD("H must be positive definite")
    dmu = p1.mean - p2.mean
    mean_term = float(dmu @ H @ dmu)
    return float(np.sqrt(mean_term + _bures_sq(p1.cov, p2.cov, h=H)))


def optimal_pushforward_map(p1: MomentPair, p2: MomentPair) -> AffineMap:
    """The affine map pushing ``p1`` onto ``p2`` with least quadratic cost.

    Parameters
    ----------
    p1 : MomentPair
        Source moments; the covariance must be positive definite.
    p2 : MomentPair
        Target moments.

    Returns
    -------
    AffineMap
        ``A = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2}`` and
        ``b = m2 - A m1``; pushing ``p1`` through it reproduces ``p2``
        (``A S1 A = S2`` up to 1e-7).

    Raises
    ------
    SingularCov
        If ``min eig(S1) <= 1e-10 * |S1|_max``; the degenerate case has no
        inverse root and is out of scope here.
    """
    _check_dims(p1, p2)
    w, v = sym_eig(p1.cov)
    if w[0] <= _PD_RTOL * float(np.abs(p1.cov).max()):
        raise SingularCov("source covariance is singular; no pushforward map exists")
    root = (v * np.sqrt(w)) @ v.T
    inv_root = (v / np.sqrt(w)) @ v.T
    inner = sqrtm_psd(sym_matrix(root @ p2.cov @ root))
    a = sym_matrix(inv_root @ inner @ inv_root)
    return AffineMap(A=a, b=p2.mean - a @ p1.mean)


def _gaussian_factor(cov: np.ndarray) -> np.ndarray:
    """Left factor L with L L^T = cov: Cholesky, or an eigenvalue root when
    the input is only semidefinite."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def gaussian_coupling_cost(
    p1: MomentPair, map: AffineMap, samples: int, seed: int
) -> float:
    """Monte-Carlo transport cost of coupling a Gaussian with its affine image.

    Draws ``samples`` points from the Gaussian with moments ``p1`` and
    estimates ``E |T(x) - x|^2`` for ``T(x) = A x + b``.  The estimator
    splits off the deterministic mean-shift term ``|(A - I) m1 + b|^2`` and
    averages only the centered part, so the identity map returns exactly 0.

    Parameters
    ----------
    p1 : MomentPair
        Source moments.
    map : AffineMap
        Transport map; dimensions must match ``p1``.
    samples : int
        Number of Monte-Carlo draws, at least 1.
    seed : int
        Seed for the generator; equal seeds give equal outputs.

    Returns
    -------
    float
        Unbiased estimate of the coupling cost, an upper bound on the
        squared 2-Wasserstein distance between ``p1``'s Gaussian and its
        image (and hence on the squared Gelbrich distance).
    """
    if map.A.shape[0] != p1.dim:
        raise DimMismatch(f"map dimension {map.A.shape[0]} != pair dimension {p1.dim}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    shift = map.A @ p1.mean + map.b - p1.mean
    disp = map.A - np.eye(p1.dim)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, p1.dim))
    centered = z @ _gaussian_factor(p1.cov).T
    moved = centered @ disp.T
    return float(shift @ shift) + float(np.mean(np.einsum("ij,ij->i", moved, moved)))


ORACLE_SIZE_LIMIT = 8


def gelbrich_sq_sdp_oracle(p1: MomentPair, p2: MomentPair, **solver_options) -> float:
    """Squared Gelbrich distance via its semidefinite representation.

    Solves ``min |m1 - m2|^2 + Tr[S1 + S2 - 2C]`` over square ``C`` subject
    to ``[[S1, C], [C.T, S2]] >= 0`` with the in-house ADMM solver.  This is
    an independent route to the closed form and exists for cross-checks, so
    it is deliberately restricted to small instances.

    Parameters
    ----------
    p1, p2 : MomentPair
        Pairs with ``dim <= 8``.
    **solver_options
        Forwarded to :func:`gelbrisk.sdp.admm_solve` (``tol``, ``max_iter``).

    Raises
    ------
    SolverDidNotConverge
        If ADMM stops without an Optimal certificate.
    """
    n = _check_dims(p1, p2)
    if n > ORACLE_SIZE_LIMIT:
        raise DimMismatch(
            f"oracle limited to n <= {ORACLE_SIZE_LIMIT} (got {n}); "
            "use gelbrich_distance for larger instances"
        )
    from .sdp import LmiProgram, SolveStatus, admm_solve

    prog = LmiProgram()
    c_vars = [[prog.scalar(f"c_{i}_{j}") for j in range(n)] for i in range(n)]
    block_const = np.zeros((2 * n, 2 * n))
    block_const[:n, :n] = p1.cov
    block_const[n:, n:] = p2.cov
    coeffs = []
    for i in range(n):
        for j in range(n):
            basis = np.zeros((2 * n, 2 * n))
            basis[i, n + j] = basis[n + j, i] = 1.0
            coeffs.append((c_vars[i][j], basis))
    prog.add_lmi(block_const, coeffs)
    dmu = p1.mean - p2.mean
    const = float(dmu @ dmu) + float(np.trace(p1.cov) + np.trace(p2.cov))
    prog.minimize(const, [(c_vars[i][i], -2.0) for i in range(n)])
    problem = prog.compile()
    solution = admm_solve(problem, **solver_options)
    if solution.status is not SolveStatus.OPTIMAL:
        raise SolverDidNotConverge(
            f"ADMM returned {solution.status.value} on the distance SDP"
        )
    return float(prog.objective_value(solution))
