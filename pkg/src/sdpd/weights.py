"""Spatial weight construction and the block operators of the stacked model.

Weights come in three layers: a 0/1 physical contiguity mask on a square
lattice, an economic-distance kernel built from time-varying drivers, and
their row-normalized Hadamard composition. The stacked model uses four block
operators on period-major ``nT`` vectors:

* ``W1``: block diagonal of the period weight matrices (contemporaneous lag),
* ``W2``: first block subdiagonal of identities (time lag),
* ``W3``: first block subdiagonal of the lagged weights (spatial time lag),
* ``S(eta) = I - lambda*W1 - gamma*W2 - rho*W3``, block lower-triangular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EstimationError, InputError

COINCIDENT_TOLERANCE = 1e-10


def grid_contiguity(n: int, scheme: str) -> np.ndarray:
    """0/1 adjacency of a sqrt(n) x sqrt(n) lattice.

    ``rook`` connects edge neighbors; ``queen`` adds corner neighbors.
    """
    side = math.isqrt(int(n))
    if side * side != n or n < 4:
        raise InputError(f"n must be a perfect square >= 4 to build a lattice, got {n}")
    scheme_lower = str(scheme).lower()
    if scheme_lower not in ("queen", "rook"):
        raise InputError(f"scheme must be 'queen' or 'rook', got {scheme!r}")
    if scheme_lower == "rook":
        offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    W = np.zeros((n, n))
    for r in range(side):
        for c in range(side):
            i = r * side + c
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if 0 <= rr < side and 0 <= cc < side:
                    W[i, rr * side + cc] = 1.0
    return W


def economic_kernel(z_t: np.ndarray) -> np.ndarray:
    """Inverse-distance kernel 1/||z_i - z_j|| with zero diagonal.

    Distances are absolute differences for a single driver column and
    Euclidean norms for several columns.
    """
    z = np.asarray(z_t, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if not np.all(np.isfinite(z)):
        raise InputError("drivers contain non-finite values")
    n = z.shape[0]
    diff = z[:, None, :] - z[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    off = ~np.eye(n, dtype=bool)
    tiny = (dist < COINCIDENT_TOLERANCE) & off
    if np.any(tiny):
        i, j = np.argwhere(tiny)[0]
        raise InputError(
            f"coincident drivers for units {int(i)} and {int(j)}: "
            f"|z_{int(i)} - z_{int(j)}| < {COINCIDENT_TOLERANCE}"
        )
    W = np.zeros((n, n))
    W[off] = 1.0 / dist[off]
    return W


def row_normalize(W: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; rows summing to zero are left as zeros."""
    W = np.asarray(W, dtype=float)
    if np.any(W < 0):
        i, j = np.argwhere(W < 0)[0]
        raise InputError(f"negative weight at ({int(i)}, {int(j)}); weights must be nonnegative")
    sums = W.sum(axis=1, keepdims=True)
    out = np.divide(W, sums, out=np.zeros_like(W), where=sums > 0)
    return out


def compose_weights(Wd: np.ndarray, We: np.ndarray) -> np.ndarray:
    """Row-normalized Hadamard product of contiguity mask and kernel."""
    Wd = np.asarray(Wd, dtype=float)
    We = np.asarray(We, dtype=float)
    if Wd.shape != We.shape:
        raise InputError(f"shape mismatch: contiguity {Wd.shape} vs kernel {We.shape}")
    return row_normalize(Wd * We)


@dataclass(frozen=True)
class WeightSequence:
    """Per-period weight matrices W_t for t = 0..T (index = period).

    ``W[0]`` may be ``None`` when initial-period weights are unavailable;
    operations that need them raise an input error.
    """

    n: int
    T: int
    W: tuple

    def __post_init__(self) -> None:
        if self.T < 1:
            raise InputError(f"weight sequence needs at least one period, got T={self.T}")
        mats = tuple(None if M is None else np.asarray(M, dtype=float) for M in self.W)
        object.__setattr__(self, "W", mats)
        if len(mats) != self.T + 1:
            raise InputError(f"weight sequence must have T+1 = {self.T + 1} matrices, got {len(mats)}")
        for t, M in enumerate(mats):
            if M is None:
                if t == 0:
                    continue
                raise InputError(f"missing weight matrix for period {t}")
            if M.shape != (self.n, self.n):
                raise InputError(f"period {t} weight matrix has shape {M.shape}, expected ({self.n}, {self.n})")
            if np.any(np.abs(np.diag(M)) > 0):
                raise InputError(f"period {t} weight matrix has a nonzero diagonal")
            if np.any(M < 0):
                raise InputError(f"period {t} weight matrix has negative entries")
            if not np.all(np.isfinite(M)):
                raise InputError(f"period {t} weight matrix has non-finite entries")

    @property
    def has_initial(self) -> bool:
        return self.W[0] is not None

    def max_row_sum(self) -> float:
        """Largest row sum across periods 1..T (the operator-norm constant)."""
        return max(float(self.W[t].sum(axis=1).max()) for t in range(1, self.T + 1))


def build_weight_sequence(
    Zpanel: np.ndarray,
    Wd: np.ndarray | None = None,
    scheme: str | None = None,
) -> WeightSequence:
    """Compose per-period weights from drivers for t = 0..T.

    ``Zpanel`` stacks the drivers with T+1 leading blocks (period 0 first):
    shape (T+1, n) or (T+1, n, p). Supply either an explicit contiguity mask
    ``Wd`` or a lattice ``scheme`` name.
    """
    Z = np.asarray(Zpanel, dtype=float)
    if Z.ndim == 2:
        Z = Z[:, :, None]
    if Z.ndim != 3:
        raise InputError(f"driver panel must be (T+1, n) or (T+1, n, p), got shape {Z.shape}")
    n = Z.shape[1]
    T = Z.shape[0] - 1
    if T < 1:
        raise InputError("driver panel must cover at least periods 0 and 1")
    if Wd is None:
        if scheme is None:
            raise InputError("either a contiguity matrix or a lattice scheme is required")
        Wd = grid_contiguity(n, scheme)
    else:
        Wd = np.asarray(Wd, dtype=float)
        if Wd.shape != (n, n):
            raise InputError(f"contiguity matrix has shape {Wd.shape}, expected ({n}, {n})")
    mats = [compose_weights(Wd, economic_kernel(Z[t])) for t in range(T + 1)]
    return WeightSequence(n=n, T=T, W=tuple(mats))


@dataclass(frozen=True)
class BlockOperator:
    """Tagged handle for one of the stacked-model operators.

    ``kind`` is ``"W1"``, ``"W2"``, ``"W3"``, ``"S"``, or one of the
    inverse-composed operators ``"G1"``, ``"G2"``, ``"G3"`` (``G_j = W_j
    S(eta)^{-1}``); the ``eta`` coefficients matter only for ``"S"`` and the
    ``G`` kinds.
    """

    kind: str
    seq: WeightSequence
    eta: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.kind not in ("W1", "W2", "W3", "S", "G1", "G2", "G3"):
            raise InputError(f"unknown block operator kind {self.kind!r}")
        object.__setattr__(self, "eta", tuple(float(x) for x in self.eta))


def _blocks(V: np.ndarray, n: int, T: int) -> tuple[np.ndarray, bool]:
    V = np.asarray(V, dtype=float)
    vector_input = V.ndim == 1
    if vector_input:
        V = V[:, None]
    if V.shape[0] != n * T:
        raise InputError(f"vector has {V.shape[0]} rows, expected {n * T}")
    return V, vector_input


def apply_w1(seq: WeightSequence, V: np.ndarray) -> np.ndarray:
    """Product with the block diagonal of W_1..W_T."""
    V, vec = _blocks(V, seq.n, seq.T)
    out = np.empty_like(V)
    n = seq.n
    for t in range(1, seq.T + 1):
        rows = slice((t - 1) * n, t * n)
        out[rows] = seq.W[t] @ V[rows]
    return out[:, 0] if vec else out


def apply_w2(seq: WeightSequence, V: np.ndarray) -> np.ndarray:
    """Product with the first block subdiagonal of identities (time shift)."""
    V, vec = _blocks(V, seq.n, seq.T)
    out = np.zeros_like(V)
    n = seq.n
    out[n:] = V[: (seq.T - 1) * n]
    return out[:, 0] if vec else out


def apply_w3(seq: WeightSequence, V: np.ndarray) -> np.ndarray:
    """Product with the first block subdiagonal of W_1..W_{T-1}."""
    V, vec = _blocks(V, seq.n, seq.T)
    out = np.zeros_like(V)
    n = seq.n
    for t in range(2, seq.T + 1):
        rows = slice((t - 1) * n, t * n)
        prev = slice((t - 2) * n, (t - 1) * n)
        out[rows] = seq.W[t - 1] @ V[prev]
    return out[:, 0] if vec else out


def apply_s(seq: WeightSequence, eta, V: np.ndarray) -> np.ndarray:
    """Product with S(eta) = I - lambda*W1 - gamma*W2 - rho*W3."""
    lam, gamma, rho = (float(x) for x in eta)
    V = np.asarray(V, dtype=float)
    out = V.copy()
    if lam != 0.0:
        out = out - lam * apply_w1(seq, V)
    if gamma != 0.0:
        out = out - gamma * apply_w2(seq, V)
    if rho != 0.0:
        out = out - rho * apply_w3(seq, V)
    return out


def apply_block(op: BlockOperator, v: np.ndarray) -> np.ndarray:
    """Apply a block operator to a stacked vector (or columns of a matrix)."""
    if op.kind == "W1":
        return apply_w1(op.seq, v)
    if op.kind == "W2":
        return apply_w2(op.seq, v)
    if op.kind == "W3":
        return apply_w3(op.seq, v)
    if op.kind == "S":
        return apply_s(op.seq, op.eta, v)
    inner = solve_s(op.seq, op.eta, v)
    if op.kind == "G1":
        return apply_w1(op.seq, inner)
    if op.kind == "G2":
        return apply_w2(op.seq, inner)
    return apply_w3(op.seq, inner)


def solve_s(seq: WeightSequence, eta, V: np.ndarray) -> np.ndarray:
    """Solve S(eta) X = V by forward block substitution.

    S is block lower-triangular with diagonal blocks ``I - lambda*W_t``, so
    the solve runs forward in time with one n x n factorization per period.
    """
    lam, gamma, rho = (float(x) for x in eta)
    V, vec = _blocks(V, seq.n, seq.T)
    n = seq.n
    out = np.empty_like(V)
    eye = np.eye(n)
    prev = None
    for t in range(1, seq.T + 1):
        rows = slice((t - 1) * n, t * n)
        rhs = V[rows].copy()
        if t > 1:
            W_prev = seq.W[t - 1]
            rhs += gamma * prev + rho * (W_prev @ prev)
        try:
            prev = np.linalg.solve(eye - lam * seq.W[t], rhs)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(f"singular period-{t} system at lambda={lam}") from exc
        out[rows] = prev
    return out[:, 0] if vec else out


def log_det_S(eta, seq: WeightSequence) -> float:
    """log |S(eta)| = sum_t log det(I - lambda*W_t) over periods 1..T."""
    lam = float(eta[0])
    total = 0.0
    eye = np.eye(seq.n)
    for t in range(1, seq.T + 1):
        sign, logdet = np.linalg.slogdet(eye - lam * seq.W[t])
        if sign <= 0 or not np.isfinite(logdet):
            raise EstimationError(
                f"I - lambda*W is singular or negative-definite at period {t} (lambda={lam})"
            )
        total += logdet
    return float(total)


def spectral_guard(eta, seq: WeightSequence) -> bool:
    """Stability check |lambda|*C_w + |gamma| + |rho|*C_w < 1.

    ``C_w`` is the largest row sum over the period weight matrices (1 for
    row-normalized weights); the time-shift blocks contribute |gamma| alone.
    """
    lam, gamma, rho = (float(x) for x in eta)
    c_w = seq.max_row_sum()
    return bool(abs(lam) * c_w + abs(gamma) + abs(rho) * c_w < 1.0)


def eigenvalue_cache(seq: WeightSequence) -> list[np.ndarray]:
    """Eigenvalues of each period weight matrix, for fast log-determinants."""
    return [np.linalg.eigvals(seq.W[t]) for t in range(1, seq.T + 1)]


def log_det_S_from_eigs(lam: float, eigs: list[np.ndarray]) -> float:
    """log |S| via cached eigenvalues: sum of log|1 - lambda*mu| per period."""
    total = 0.0
    for mu in eigs:
        factors = 1.0 - lam * mu
        if np.any(np.abs(factors) < 1e-300):
            raise EstimationError(f"singular period system at lambda={lam}")
        total += float(np.log(np.abs(factors)).sum())
    return total
