"""Probabilistic movement primitives over track arc length.

A trajectory of ``n`` variables sampled at equidistant stations is projected
onto ``N_BF`` radial basis functions per variable by ridge regression; a set
of demonstration weight vectors is summarized by a Gaussian ``N(mu_w,
sigma_w)``.  New trajectories are drawn by sampling weights, and the
distribution is updated by conditioning on observations at single stations.
Covariance masking attenuates far-off-diagonal weight couplings so that
conditioning acts locally along the lap.
"""

from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    EmptyInput,
    NotPSD,
    SchemaError,
    SingularInnovation,
    SingularSystem,
)

DEFAULT_CENTER_SPACING = 15.0  # m of track per basis center


@dataclass
class BasisConfig:
    """Equally spaced Gaussian basis functions over one lap.

    ``width`` is the squared length scale h in ``exp(-(s - c)^2 / (2 h))``.
    ``ridge`` is the regression regularizer; ``None`` selects a scale-free
    default of ``1e-6 * trace(Phi^T Phi) / n_bf``.
    """

    track_length: float
    n_bf: int
    n_stations: int
    width: float | None = None
    ridge: float | None = None

    def __post_init__(self) -> None:
        if self.n_bf < 2:
            raise ValueError("need at least 2 basis functions")
        if self.n_stations < self.n_bf:
            raise ValueError("need at least as many stations as basis functions")
        if self.width is None:
            self.width = self.center_spacing ** 2
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be non-negative")

    @property
    def centers(self) -> np.ndarray:
        return np.linspace(0.0, self.track_length, self.n_bf)

    @property
    def center_spacing(self) -> float:
        return self.track_length / (self.n_bf - 1)

    @property
    def stations(self) -> np.ndarray:
        return np.arange(self.n_stations) * (self.track_length / self.n_stations)

    @classmethod
    def for_track_length(
        cls,
        track_length: float,
        n_stations: int,
        center_spacing: float = DEFAULT_CENTER_SPACING,
        ridge: float | None = None,
    ) -> "BasisConfig":
        n_bf = max(2, int(round(track_length / center_spacing)) + 1)
        return cls(track_length=track_length, n_bf=n_bf, n_stations=n_stations,
                   ridge=ridge)


def eval_basis(config: BasisConfig, s) -> np.ndarray:
    """Basis values at station(s) ``s``; shape (..., n_bf), each in (0, 1]."""
    s = np.asarray(s, dtype=float)
    d = s[..., None] - config.centers
    return np.exp(-(d ** 2) / (2.0 * config.width))


def basis_matrix(config: BasisConfig) -> np.ndarray:
    """Phi: basis evaluated at the equidistant stations, (n_stations, n_bf)."""
    return eval_basis(config, config.stations)


def _effective_ridge(config: BasisConfig, phi: np.ndarray) -> float:
    if config.ridge is not None:
        return config.ridge
    return 1e-6 * float(np.trace(phi.T @ phi)) / config.n_bf


def fit_weights(trajectory: np.ndarray, config: BasisConfig) -> np.ndarray:
    """Project per-variable station samples onto basis weights.

    ``trajectory`` has shape (n_vars, n_stations) or (n_stations,) for a
    single variable.  Returns the stacked weight vector of length
    ``n_vars * n_bf``.  The block-diagonal structure of the stacked basis
    makes the ridge solve separable per variable.
    """
    tau = np.atleast_2d(np.asarray(trajectory, dtype=float))
    if tau.shape[1] != config.n_stations:
        raise ValueError(
            f"trajectory has {tau.shape[1]} stations, config expects {config.n_stations}"
        )
    phi = basis_matrix(config)
    eps = _effective_ridge(config, phi)
    gram = phi.T @ phi + eps * np.eye(config.n_bf)
    if eps == 0.0:
        rank = np.linalg.matrix_rank(gram)
        if rank < config.n_bf:
            raise SingularSystem(
                f"basis normal matrix is rank {rank} < {config.n_bf} with ridge 0"
            )
    try:
        sol = np.linalg.solve(gram, phi.T @ tau.T)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return sol.T.reshape(-1)


def reconstruct(weights: np.ndarray, config: BasisConfig, n_vars: int = 1) -> np.ndarray:
    """Evaluate weights back to station samples, shape (n_vars, n_stations)."""
    w = np.asarray(weights, dtype=float).reshape(n_vars, config.n_bf)
    phi = basis_matrix(config)
    return w @ phi.T


def fit_distribution(weight_vectors) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and (biased, 1/N) covariance of demonstration weights."""
    ws = [np.asarray(w, dtype=float) for w in weight_vectors]
    if not ws:
        raise EmptyInput("no weight vectors")
    W = np.stack(ws)
    mu = W.mean(axis=0)
    centered = W - mu
    sigma = centered.T @ centered / len(ws)
    return mu, sigma


@dataclass
class ProMP:
    """Gaussian weight distribution over a basis for ``n`` named variables."""

    basis: BasisConfig
    variables: tuple[str, ...]
    mu_w: np.ndarray
    sigma_w: np.ndarray

    def __post_init__(self) -> None:
        self.variables = tuple(self.variables)
        self.mu_w = np.asarray(self.mu_w, dtype=float)
        self.sigma_w = np.asarray(self.sigma_w, dtype=float)
        d = self.n_vars * self.basis.n_bf
        if self.mu_w.shape != (d,):
            raise ValueError(f"mu_w must have length {d}")
        if self.sigma_w.shape != (d, d):
            raise ValueError(f"sigma_w must be {d}x{d}")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def dim(self) -> int:
        return self.n_vars * self.basis.n_bf

    def mean_trajectory(self) -> np.ndarray:
        """Reconstructed mean, shape (n_vars, n_stations)."""
        return reconstruct(self.mu_w, self.basis, self.n_vars)

    def station_variance(self, variable: int = 0) -> np.ndarray:
        """Marginal variance of one variable's reconstruction per station."""
        phi = basis_matrix(self.basis)
        nb = self.basis.n_bf
        block = self.sigma_w[variable * nb:(variable + 1) * nb,
                             variable * nb:(variable + 1) * nb]
        return np.einsum("sj,jk,sk->s", phi, block, phi)

    @classmethod
    def from_demonstrations(cls, trajectories, basis: BasisConfig, variables) -> "ProMP":
        """Fit weights per demonstration (n_vars, n_stations) and a Gaussian."""
        ws = [fit_weights(t, basis) for t in trajectories]
        mu, sigma = fit_distribution(ws)
        return cls(basis=basis, variables=tuple(variables), mu_w=mu, sigma_w=sigma)


@dataclass
class Observation:
    """A conditioning target ``{y*, Sigma_y*}`` at station ``s_prime``."""

    s_prime: float
    y_star: np.ndarray
    sigma_y_star: np.ndarray

    def __post_init__(self) -> None:
        self.y_star = np.atleast_1d(np.asarray(self.y_star, dtype=float))
        self.sigma_y_star = np.atleast_2d(np.asarray(self.sigma_y_star, dtype=float))
        n = len(self.y_star)
        if self.sigma_y_star.shape != (n, n):
            raise ValueError("sigma_y_star must be n x n")
        if not np.allclose(self.sigma_y_star, self.sigma_y_star.T, atol=1e-9):
            raise ValueError("sigma_y_star must be symmetric")


def stacked_basis_at(config: BasisConfig, s: float, n_vars: int) -> np.ndarray:
    """Block-diagonal basis column matrix at one station, (n_vars*n_bf, n_vars)."""
    phi = eval_basis(config, float(s))
    out = np.zeros((n_vars * config.n_bf, n_vars))
    for a in range(n_vars):
        out[a * config.n_bf:(a + 1) * config.n_bf, a] = phi
    return out


def sample(promp: ProMP, rng_seed, count: int = 1) -> np.ndarray:
    """Draw ``count`` trajectories, shape (count, n_vars, n_stations).

    Weights are drawn via a Cholesky factor with escalating diagonal jitter up
    to 1e-8 if the covariance is only semi-definite; an all-zero covariance
    reproduces the mean exactly.  Deterministic for a given seed.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    d = promp.dim
    if not np.any(promp.sigma_w):
        w = np.tile(promp.mu_w, (count, 1))
    else:
        chol = None
        for jitter in (0.0, 1e-12, 1e-10, 1e-8):
            try:
                chol = np.linalg.cholesky(promp.sigma_w + jitter * np.eye(d))
                break
            except np.linalg.LinAlgError:
                continue
        if chol is None:
            raise NotPSD("covariance not PSD within 1e-8 jitter")
        z = rng.standard_normal((count, d))
        w = promp.mu_w + z @ chol.T
    phi = basis_matrix(promp.basis)
    out = np.empty((count, promp.n_vars, promp.basis.n_stations))
    for i in range(count):
        out[i] = w[i].reshape(promp.n_vars, promp.basis.n_bf) @ phi.T
    return out


def condition(
    promp: ProMP,
    obs: Observation,
    use_masked: bool = False,
    bandwidth: int | None = None,
) -> ProMP:
    """Condition the weight distribution on one observation.

    ``mu_new = mu + L (y* - Psi^T mu)``, ``Sigma_new = Sigma - L Psi^T Sigma``
    with gain ``L = Sigma Psi (Sigma_y* + Psi^T Sigma Psi)^-1``.  With
    ``use_masked`` the covariance is first masked with ``bandwidth`` so the
    update stays local; the result is PSD-repaired if masking broke exactness.
    The prior is not modified.
    """
    if len(obs.y_star) != promp.n_vars:
        raise ValueError("observation dimension must match variable count")
    sigma = promp.sigma_w
    if use_masked:
        k = bandwidth if bandwidth is not None else default_bandwidth(promp.basis)
        sigma = mask_covariance(sigma, k, n_vars=promp.n_vars)
    psi = stacked_basis_at(promp.basis, obs.s_prime, promp.n_vars)
    sp = sigma @ psi
    innov = obs.sigma_y_star + psi.T @ sp
    try:
        gain = np.linalg.solve(innov.T, sp.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(str(exc)) from exc
    if not np.all(np.isfinite(gain)):
        raise SingularInnovation("non-finite conditioning gain")
    mu_new = promp.mu_w + gain @ (obs.y_star - psi.T @ promp.mu_w)
    sigma_new = sigma - gain @ sp.T
    sigma_new = 0.5 * (sigma_new + sigma_new.T)
    if use_masked:
        sigma_new = repair_psd(sigma_new)
    return replace(promp, mu_w=mu_new, sigma_w=sigma_new)


def default_bandwidth(config: BasisConfig, locality: float = 120.0) -> int:
    """Mask bandwidth in basis indices covering ``locality`` meters of track."""
    return max(2, int(round(locality / config.center_spacing)))


def factor_matrix(n_bf: int, bandwidth_k: int, decay: bool = True) -> np.ndarray:
    """Masking factor: 1 on the diagonal, fading to 0 at circular index
    distance ``bandwidth_k`` (raised cosine), hard zero beyond.

    With ``decay=False`` the factor is binary: 1 for distances strictly below
    the bandwidth, 0 otherwise.
    """
    if bandwidth_k < 1:
        raise ValueError("bandwidth must be >= 1")
    idx = np.arange(n_bf)
    dist = np.abs(idx[:, None] - idx[None, :])
    dist = np.minimum(dist, n_bf - dist)  # circular: the lap closes on itself
    if decay:
        f = 0.5 * (1.0 + np.cos(np.pi * dist / bandwidth_k))
        f[dist > bandwidth_k] = 0.0
    else:
        f = (dist < bandwidth_k).astype(float)
    return f


def mask_covariance(
    sigma_w: np.ndarray,
    bandwidth_k: int,
    n_vars: int | None = None,
    decay: bool = True,
) -> np.ndarray:
    """Apply the factor matrix element-wise to every variable block."""
    sigma = np.asarray(sigma_w, dtype=float)
    d = sigma.shape[0]
    if n_vars is None:
        n_vars = 1
    if d % n_vars != 0:
        raise ValueError("matrix size incompatible with variable count")
    nb = d // n_vars
    f = factor_matrix(nb, bandwidth_k, decay=decay)
    return sigma * np.tile(f, (n_vars, n_vars))


def repair_psd(sigma: np.ndarray, warn_tol: float = 1e-10) -> np.ndarray:
    """Clip negative eigenvalues at zero, warning when they are material."""
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    if vals[0] >= 0.0:
        return sigma
    if vals[0] < -warn_tol * max(1.0, vals[-1]):
        _warnings.warn(
            f"clipping negative covariance eigenvalue {vals[0]:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    repaired = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return 0.5 * (repaired + repaired.T)


# -- serialization ------------------------------------------------------------
#
# JSON with the basis parameters, ordered variable names, mu_w as a flat list
# and sigma_w as nested rows (row-major).


def promp_to_dict(promp: ProMP) -> dict:
    return {
        "format": "promp-v1",
        "variables": list(promp.variables),
        "basis": {
            "track_length": promp.basis.track_length,
            "n_bf": promp.basis.n_bf,
            "n_stations": promp.basis.n_stations,
            "width": promp.basis.width,
            "ridge": promp.basis.ridge,
        },
        "mu_w": promp.mu_w.tolist(),
        "sigma_w": promp.sigma_w.tolist(),
    }


def promp_from_dict(data: dict) -> ProMP:
    try:
        if data.get("format") != "promp-v1":
            raise SchemaError(f"unknown format {data.get('format')!r}")
        basis = BasisConfig(**data["basis"])
        return ProMP(
            basis=basis,
            variables=tuple(data["variables"]),
            mu_w=np.asarray(data["mu_w"], dtype=float),
            sigma_w=np.asarray(data["sigma_w"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad promp record: {exc}") from exc


def save_promp(promp: ProMP, path) -> None:
    with open(path, "w") as f:
        json.dump(promp_to_dict(promp), f, sort_keys=True)


def load_promp(path) -> ProMP:
    with open(path) as f:
        return promp_from_dict(json.load(f))
