"""Incidence/susceptance structures, factorization, PTDF rows, DC flow solves.

The sign convention used throughout: branch susceptance ``b = 1/x > 0`` and
flow is positive from the from-bus to the to-bus,
``flow = b * (theta_from - theta_to)``. The slack column of the PTDF matrix
is identically zero.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import splu

from .network import CaseSemanticError, PowerNetwork, validate_connectivity

__all__ = ["build_incidence", "factorize", "SusceptanceSystem", "SingularSystemError"]

# below this size a dense LU is cheaper than sparse machinery
_DENSE_LIMIT = 500

_BALANCE_TOL = 1e-8


class SingularSystemError(RuntimeError):
    """Reduced susceptance matrix is singular (islanding or zero reactance)."""


def build_incidence(net: PowerNetwork) -> sparse.csr_matrix:
    """E x N incidence over in-service branches, +1 at from-bus, -1 at to-bus."""
    index = net.bus_index
    rows, cols, vals = [], [], []
    for e, (_, br) in enumerate(net.in_service_branches()):
        rows += [e, e]
        cols += [index[br.from_bus], index[br.to_bus]]
        vals += [1.0, -1.0]
    n_e = len(net.in_service_branches())
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n_e, net.n_bus))


@dataclass
class SusceptanceSystem:
    """Factorized reduced susceptance matrix plus cached PTDF rows.

    Immutable after construction; backsolves are serialized internally so
    callers may request rows and flows from multiple threads.
    """

    net: PowerNetwork
    slack_index: int
    incidence: sparse.csr_matrix
    b_branch: np.ndarray  # 1/x per in-service branch
    r_branch: np.ndarray
    rate_branch: np.ndarray  # thermal limits, inf when unlimited
    branch_positions: list[int]  # in-service row -> original branch position
    _solver: object
    _keep: np.ndarray  # non-slack bus indices
    _b_red: sparse.csc_matrix
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _ptdf_cache: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def n_branch(self) -> int:
        return len(self.b_branch)

    @property
    def n_bus(self) -> int:
        return self.net.n_bus

    def solve_reduced(self, rhs: np.ndarray) -> np.ndarray:
        """Solve B_red y = rhs for a reduced (slack-dropped) right-hand side."""
        with self._lock:
            return self._solver(rhs)

    def ptdf_row(self, branch: int) -> np.ndarray:
        """Row of the PTDF matrix for an in-service branch index.

        One backsolve per distinct request; rows are cached. The slack entry
        is exactly zero.
        """
        cached = self._ptdf_cache.get(branch)
        if cached is not None:
            return cached
        a_row = np.asarray(self.incidence.getrow(branch).todense()).ravel()
        rhs = a_row[self._keep]
        w = self.solve_reduced(rhs)
        row = np.zeros(self.n_bus)
        row[self._keep] = self.b_branch[branch] * w
        row.setflags(write=False)
        with self._lock:
            self._ptdf_cache[branch] = row
        return row

    def ptdf_matrix(self) -> np.ndarray:
        """Full dense E x N PTDF matrix (assembled from cached rows)."""
        return np.vstack([self.ptdf_row(e) for e in range(self.n_branch)])

    def dc_flows(self, injections: np.ndarray, slack_absorb: bool = False):
        """Angles and branch flows for a nodal injection vector.

        Injections must balance to zero within 1e-8 unless ``slack_absorb``
        lets the slack bus soak up the residual (used for loss-factor
        reference flows).
        """
        p = np.asarray(injections, dtype=float)
        if p.shape != (self.n_bus,):
            raise ValueError(f"expected injection vector of length {self.n_bus}")
        imbalance = float(p.sum())
        if abs(imbalance) > _BALANCE_TOL and not slack_absorb:
            raise ValueError(
                f"injections do not balance (sum {imbalance:.3e}); "
                "pass slack_absorb=True to assign the residual to the slack bus"
            )
        theta = np.zeros(self.n_bus)
        theta[self._keep] = self.solve_reduced(p[self._keep])
        A = self.incidence
        flows = self.b_branch * (A @ theta)
        return theta, flows

    def factorization_residual(self) -> float:
        """max_k ||B_red solve(e_k) - e_k||_inf over unit vectors (health check)."""
        m = self.n_bus - 1
        B = self._b_red
        worst = 0.0
        for k in range(m):
            e = np.zeros(m)
            e[k] = 1.0
            worst = max(worst, float(np.abs(B @ self.solve_reduced(e) - e).max()))
        return worst


def factorize(net: PowerNetwork, slack: int | None = None) -> SusceptanceSystem:
    """Build and factorize the reduced DC susceptance matrix.

    ``slack`` is an external bus id (defaults to the case slack). Raises
    :class:`SingularSystemError` when the matrix cannot be factorized, which
    indicates islanding or a zero-reactance path.
    """
    islands = validate_connectivity(net)
    if islands:
        raise SingularSystemError(f"network is islanded: {islands}")
    index = net.bus_index
    slack_id = net.slack.id if slack is None else slack
    if slack_id not in index:
        raise CaseSemanticError(f"slack bus {slack_id} not in network")
    slack_index = index[slack_id]

    in_service = net.in_service_branches()
    positions = [k for k, _ in in_service]
    b = np.array([br.susceptance for _, br in in_service])
    r = np.array([br.r for _, br in in_service])
    rate = np.array([br.rate if br.rate > 0 else np.inf for _, br in in_service])
    A = build_incidence(net)
    B_full = (A.T.multiply(b) @ A).tocsc()
    keep = np.array([i for i in range(net.n_bus) if i != slack_index])
    B_red = B_full[keep][:, keep].tocsc()

    n = B_red.shape[0]
    try:
        if n < _DENSE_LIMIT:
            lu = lu_factor(B_red.toarray())

            def solver(rhs, _lu=lu):
                return lu_solve(_lu, rhs)
        else:
            fac = splu(B_red)

            def solver(rhs, _fac=fac):
                return _fac.solve(rhs)
    except (RuntimeError, ValueError) as exc:
        raise SingularSystemError(f"singular susceptance matrix: {exc}") from exc

    # reject factorizations of numerically singular systems
    probe = solver(np.ones(n))
    if not np.all(np.isfinite(probe)):
        raise SingularSystemError("singular susceptance matrix (non-finite solve)")

    return SusceptanceSystem(
        net=net,
        slack_index=slack_index,
        incidence=A,
        b_branch=b,
        r_branch=r,
        rate_branch=rate,
        branch_positions=positions,
        _solver=solver,
        _keep=keep,
        _b_red=B_red,
    )
