"""Core types: dimensions, parameter vector packing, panel containers, transforms.

Conventions used throughout the package:

* Stacked vectors are period-major: the length-``nT`` data vector holds all
  ``n`` units of period 1, then period 2, and so on.
* The flat parameter order is ``(lambda, gamma, rho, beta, delta,
  vec(Phi2), sigma_xi2, alpha)`` where ``Phi2 = [[kappa], [Gamma]]`` is
  vectorized column-major and ``alpha`` is the column-major lower triangle
  of ``Sigma_eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InputError(ValueError):
    """Invalid user-supplied data, configuration, or preconditions."""


class EstimationError(RuntimeError):
    """Numerical failure inside estimation or statistic evaluation."""


@dataclass(frozen=True)
class Dims:
    """Problem dimensions: panel sizes and regressor/driver counts."""

    n: int
    T: int
    k1: int
    k2: int
    p: int

    def __post_init__(self) -> None:
        for name in ("n", "T", "k1", "k2", "p"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InputError(f"dimension {name} must be a positive integer, got {value!r}")

    @property
    def L(self) -> int:
        return self.n * self.T

    @property
    def n_phi2(self) -> int:
        return self.p * (self.p + self.k2)

    @property
    def n_alpha(self) -> int:
        return self.p * (self.p + 1) // 2

    @property
    def n_params(self) -> int:
        return 3 + self.k1 + self.p + self.n_phi2 + 1 + self.n_alpha


def lower_triangle_indices(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the lower triangle of a p x p matrix, column-major.

    Column-major order enumerates column 0 top to bottom, then column 1, etc.,
    so for p=3 the sequence is (0,0),(1,0),(2,0),(1,1),(2,1),(2,2).
    """
    rows = []
    cols = []
    for j in range(p):
        for i in range(j, p):
            rows.append(i)
            cols.append(j)
    return np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)


def cov_to_alpha(sigma: np.ndarray) -> np.ndarray:
    """Vectorize the lower triangle of a symmetric matrix, column-major."""
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    rows, cols = lower_triangle_indices(p)
    return sigma[rows, cols].copy()


def alpha_to_cov(alpha: np.ndarray, p: int) -> np.ndarray:
    """Rebuild a symmetric matrix from its column-major lower-triangle vector."""
    alpha = np.asarray(alpha, dtype=float)
    expected = p * (p + 1) // 2
    if alpha.shape != (expected,):
        raise InputError(f"alpha must have length {expected} for p={p}, got shape {alpha.shape}")
    sigma = np.zeros((p, p))
    rows, cols = lower_triangle_indices(p)
    sigma[rows, cols] = alpha
    sigma[cols, rows] = alpha
    return sigma


def alpha_basis(p: int) -> list[np.ndarray]:
    """Symmetric basis matrices B_k with dSigma/dalpha_k = B_k.

    B_k has a 1 at the (i,j) and (j,i) positions of the k-th lower-triangle
    element (a single 1 on the diagonal when i = j).
    """
    rows, cols = lower_triangle_indices(p)
    basis = []
    for i, j in zip(rows, cols):
        B = np.zeros((p, p))
        B[i, j] = 1.0
        B[j, i] = 1.0
        basis.append(B)
    return basis


@dataclass(frozen=True)
class BlockIndex:
    """Index arrays locating each named parameter block in the flat vector."""

    dims: Dims
    lam: np.ndarray = field(init=False)
    gamma: np.ndarray = field(init=False)
    rho: np.ndarray = field(init=False)
    beta: np.ndarray = field(init=False)
    delta: np.ndarray = field(init=False)
    phi2: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)
    alpha: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        d = self.dims
        offset = 0

        def take(count: int) -> np.ndarray:
            nonlocal offset
            idx = np.arange(offset, offset + count)
            offset += count
            return idx

        object.__setattr__(self, "lam", take(1))
        object.__setattr__(self, "gamma", take(1))
        object.__setattr__(self, "rho", take(1))
        object.__setattr__(self, "beta", take(d.k1))
        object.__setattr__(self, "delta", take(d.p))
        object.__setattr__(self, "phi2", take(d.n_phi2))
        object.__setattr__(self, "sigma", take(1))
        object.__setattr__(self, "alpha", take(d.n_alpha))
        assert offset == d.n_params

    @property
    def eta(self) -> np.ndarray:
        """(lambda, gamma, rho)."""
        return np.concatenate([self.lam, self.gamma, self.rho])

    @property
    def phi1(self) -> np.ndarray:
        """(gamma, rho, beta)."""
        return np.concatenate([self.gamma, self.rho, self.beta])

    @property
    def omega(self) -> np.ndarray:
        """(beta, sigma_xi2): the nuisance block of the joint-null tests."""
        return np.concatenate([self.beta, self.sigma])

    @property
    def all(self) -> np.ndarray:
        return np.arange(self.dims.n_params)


@dataclass(frozen=True)
class ParamVector:
    """Model parameters in structured form.

    The outcome equation carries ``(lam, gamma, rho, beta, delta, sigma_xi2)``;
    the driver equation carries ``(kappa, Gamma, Sigma_eps)``.
    """

    lam: float
    gamma: float
    rho: float
    beta: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray
    Gamma: np.ndarray
    sigma_xi2: float
    Sigma_eps: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "delta", np.atleast_1d(np.asarray(self.delta, dtype=float)))
        kappa = np.asarray(self.kappa, dtype=float)
        if kappa.ndim < 2:
            kappa = kappa.reshape(1, 1) if kappa.size == 1 else np.diag(np.atleast_1d(kappa))
        object.__setattr__(self, "kappa", kappa)
        p = self.delta.shape[0]
        Gamma = np.asarray(self.Gamma, dtype=float)
        if Gamma.ndim < 2:
            Gamma = Gamma.reshape(-1, p)
        object.__setattr__(self, "Gamma", Gamma)
        Sigma = np.asarray(self.Sigma_eps, dtype=float)
        if Sigma.ndim < 2:
            Sigma = Sigma.reshape(1, 1)
        object.__setattr__(self, "Sigma_eps", Sigma)
        if self.kappa.shape != (p, p):
            raise InputError(f"kappa must be {p}x{p}, got {self.kappa.shape}")
        if self.Gamma.shape[1] != p:
            raise InputError(f"Gamma must have {p} columns, got {self.Gamma.shape}")
        if self.Sigma_eps.shape != (p, p):
            raise InputError(f"Sigma_eps must be {p}x{p}, got {self.Sigma_eps.shape}")

    @property
    def k1(self) -> int:
        return self.beta.shape[0]

    @property
    def k2(self) -> int:
        return self.Gamma.shape[0]

    @property
    def p(self) -> int:
        return self.delta.shape[0]

    @property
    def eta(self) -> np.ndarray:
        return np.array([self.lam, self.gamma, self.rho], dtype=float)

    @property
    def phi2_matrix(self) -> np.ndarray:
        """The (p+k2) x p coefficient matrix of the driver equation."""
        return np.vstack([self.kappa, self.Gamma])

    @property
    def alpha(self) -> np.ndarray:
        return cov_to_alpha(self.Sigma_eps)

    def pack(self) -> np.ndarray:
        """Flatten to the canonical order."""
        return np.concatenate(
            [
                [self.lam, self.gamma, self.rho],
                self.beta,
                self.delta,
                self.phi2_matrix.ravel(order="F"),
                [self.sigma_xi2],
                self.alpha,
            ]
        )

    @classmethod
    def unpack(cls, flat: np.ndarray, dims: Dims) -> "ParamVector":
        """Rebuild the structured parameters from a flat vector."""
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.shape[0] != dims.n_params:
            raise InputError(
                f"flat parameter vector has length {flat.shape[0]}, "
                f"expected {dims.n_params} for dims {dims}"
            )
        idx = BlockIndex(dims)
        phi2 = flat[idx.phi2].reshape(dims.p + dims.k2, dims.p, order="F")
        return cls(
            lam=float(flat[idx.lam][0]),
            gamma=float(flat[idx.gamma][0]),
            rho=float(flat[idx.rho][0]),
            beta=flat[idx.beta].copy(),
            delta=flat[idx.delta].copy(),
            kappa=phi2[: dims.p, :].copy(),
            Gamma=phi2[dims.p :, :].copy(),
            sigma_xi2=float(flat[idx.sigma][0]),
            Sigma_eps=alpha_to_cov(flat[idx.alpha], dims.p),
        )

    def replace(self, **changes) -> "ParamVector":
        fields = {
            "lam": self.lam,
            "gamma": self.gamma,
            "rho": self.rho,
            "beta": self.beta,
            "delta": self.delta,
            "kappa": self.kappa,
            "Gamma": self.Gamma,
            "sigma_xi2": self.sigma_xi2,
            "Sigma_eps": self.Sigma_eps,
        }
        fields.update(changes)
        return ParamVector(**fields)


@dataclass(frozen=True)
class PanelData:
    """Observed panel: outcome, regressors, drivers, and initial conditions.

    All stacked arrays are period-major with ``L = n*T`` rows covering periods
    1..T; period-0 values live in ``Y0``/``Z0`` (and ``W0`` for the weights).
    """

    n: int
    T: int
    Y: np.ndarray
    X1: np.ndarray
    Z: np.ndarray
    X2: np.ndarray
    Y0: np.ndarray
    Z0: np.ndarray
    W0: np.ndarray | None = None

    def __post_init__(self) -> None:
        n, T = self.n, self.T
        L = n * T
        object.__setattr__(self, "Y", np.asarray(self.Y, dtype=float).reshape(L))
        X1 = np.asarray(self.X1, dtype=float)
        object.__setattr__(self, "X1", X1.reshape(L, -1))
        Z = np.asarray(self.Z, dtype=float)
        object.__setattr__(self, "Z", Z.reshape(L, -1))
        X2 = np.asarray(self.X2, dtype=float)
        object.__setattr__(self, "X2", X2.reshape(L, -1))
        object.__setattr__(self, "Y0", np.asarray(self.Y0, dtype=float).reshape(n))
        Z0 = np.asarray(self.Z0, dtype=float)
        object.__setattr__(self, "Z0", Z0.reshape(n, -1))
        if self.Z0.shape[1] != self.Z.shape[1]:
            raise InputError(
                f"Z0 has {self.Z0.shape[1]} driver columns but Z has {self.Z.shape[1]}"
            )
        if self.W0 is not None:
            W0 = np.asarray(self.W0, dtype=float)
            if W0.shape != (n, n):
                raise InputError(f"W0 must be {n}x{n}, got {W0.shape}")
            object.__setattr__(self, "W0", W0)
        for name in ("Y", "X1", "Z", "X2", "Y0", "Z0"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputError(f"non-finite values in {name}")

    @property
    def L(self) -> int:
        return self.n * self.T

    @property
    def k1(self) -> int:
        return self.X1.shape[1]

    @property
    def k2(self) -> int:
        return self.X2.shape[1]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def dims(self) -> Dims:
        return Dims(n=self.n, T=self.T, k1=self.k1, k2=self.k2, p=self.p)

    @property
    def Y_lag(self) -> np.ndarray:
        """The stacked one-period lag of Y: block t holds Y at period t-1."""
        return np.concatenate([self.Y0, self.Y[: self.L - self.n]])

    @property
    def Z_lag(self) -> np.ndarray:
        """The stacked one-period lag of Z: block t holds Z at period t-1."""
        return np.vstack([self.Z0, self.Z[: self.L - self.n]])

    @property
    def K(self) -> np.ndarray:
        """Driver-equation regressors [Z_lag, X2], shape (L, p+k2)."""
        return np.hstack([self.Z_lag, self.X2])


def within_transform(A: np.ndarray, n: int, T: int) -> np.ndarray:
    """Two-way within projection: remove unit and period means per column.

    Subtracts each unit's time average and each period's cross-section
    average, then adds back the overall average; equivalent to multiplying by
    ``J_T (x) J_n`` with ``J_m = I_m - (1/m) 1 1'`` on period-major vectors.
    """
    A = np.asarray(A, dtype=float)
    vector_input = A.ndim == 1
    if vector_input:
        A = A[:, None]
    if A.shape[0] != n * T:
        raise InputError(f"array has {A.shape[0]} rows, expected n*T = {n * T}")
    cube = A.reshape(T, n, A.shape[1])
    period_means = cube.mean(axis=1, keepdims=True)
    unit_means = cube.mean(axis=0, keepdims=True)
    overall = cube.mean(axis=(0, 1), keepdims=True)
    out = cube - period_means - unit_means + overall
    out = out.reshape(n * T, A.shape[1])
    return out[:, 0] if vector_input else out


def ell0(
    gamma: float,
    rho: float,
    Y0: np.ndarray,
    W0: np.ndarray | None,
    T: int,
) -> np.ndarray:
    """Initial-period carry-over term of the outcome equation.

    Returns the length-``nT`` vector whose first block is
    ``gamma*Y0 + rho*W0@Y0`` and whose remaining blocks are zero; it is the
    part of the lag structure that involves period-0 data.
    """
    Y0 = np.asarray(Y0, dtype=float).ravel()
    n = Y0.shape[0]
    out = np.zeros(n * T)
    first = gamma * Y0
    if rho != 0.0:
        if W0 is None:
            raise InputError("rho is nonzero but no initial-period weight matrix W0 was supplied")
        first = first + rho * (np.asarray(W0, dtype=float) @ Y0)
    out[:n] = first
    return out
