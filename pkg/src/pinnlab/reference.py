"""Finite-difference reference solutions on uniform grids.

Direct 5-point-stencil solves with zero Dirichlet data, used as the
verification oracle for the Poisson-family problems and for the coupled
optimality system of the Poisson control problem.  Solutions are
second-order accurate; the default n=129 grid keeps discretisation
error well below every tolerance it certifies.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import sampling as sp

_RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass
class GridSolution:
    box: sp.Box
    n: int                       # nodes per axis, boundary included
    fields: dict                 # name -> (n, n) array, index [i, j] ~ (x0_i, x1_j)
    field_names: tuple

    @property
    def h(self):
        return float((self.box.highs[0] - self.box.lows[0]) / (self.n - 1))

    def axis(self, k):
        return np.linspace(self.box.lows[k], self.box.highs[k], self.n)

    def to_csv(self, path):
        x0 = self.axis(0)
        x1 = self.axis(1)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x0", "x1", *self.field_names])
            for i in range(self.n):
                for j in range(self.n):
                    row = [repr(float(x0[i])), repr(float(x1[j]))]
                    row += [repr(float(self.fields[f][i, j]))
                            for f in self.field_names]
                    wr.writerow(row)


def _neg_laplacian(n, h):
    """Matrix of the 5-point -lap on the (n-2)^2 interior nodes."""
    m = n - 2
    main = 2.0 * np.ones(m)
    off = -np.ones(m - 1)
    T = sps.diags([off, main, off], (-1, 0, 1), format="csr")
    I = sps.identity(m, format="csr")
    A = (sps.kron(T, I) + sps.kron(I, T)) / h ** 2
    return A.tocsc()


def _check_residual(M, x, rhs):
    res = float(np.max(np.abs(M @ x - rhs)))
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if res > _RESIDUAL_TOL * scale:
        raise SolverError(f"direct solve residual {res:.2e} exceeds "
                          f"{_RESIDUAL_TOL:.0e} (scaled)")


def solve_poisson_fd(forcing, box: sp.Box, n: int,
                     sign: str = "lap") -> GridSolution:
    """Solve lap(w) = f (sign="lap") or -lap(w) = f (sign="neg_lap")
    with zero Dirichlet data on an n x n grid over the box.

    ``forcing`` maps an (m, 2) array of points to forcing values.
    """
    if n < 9:
        raise ValueError("need at least 9 nodes per axis")
    if sign not in ("lap", "neg_lap"):
        raise ValueError("sign must be 'lap' or 'neg_lap'")
    h = float((box.highs[0] - box.lows[0]) / (n - 1))
    h1 = float((box.highs[1] - box.lows[1]) / (n - 1))
    if abs(h - h1) > 1e-12 * max(abs(h), abs(h1)):
        raise ValueError("grid requires equal spacing per axis")
    x0 = np.linspace(box.lows[0], box.highs[0], n)
    x1 = np.linspace(box.lows[1], box.highs[1], n)
    XI, XJ = np.meshgrid(x0[1:-1], x1[1:-1], indexing="ij")
    pts = np.stack([XI.ravel(), XJ.ravel()], axis=1)
    f = np.asarray(forcing(pts), dtype=float).reshape(-1)
    A = _neg_laplacian(n, h)
    rhs = f if sign == "neg_lap" else -f
    w = spla.spsolve(A, rhs)
    _check_residual(A, w, rhs)
    W = np.zeros((n, n))
    W[1:-1, 1:-1] = w.reshape(n - 2, n - 2)
    return GridSolution(box, n, {"w": W}, ("w",))


def solve_ocp_poisson_fd(mu, n: int = 129) -> GridSolution:
    """Direct solve of the coupled Poisson control optimality system.

    Eliminates u = z / mu2 and solves {y - lap(z) = mu1,
    -lap(y) - z/mu2 = 0} with y = z = 0 on the boundary of [-1, 1]^2,
    then reconstructs u.  Any mu2 > 0 is accepted.
    """
    mu1, mu2 = float(mu[0]), float(mu[1])
    if mu2 <= 0.0:
        raise ValueError("mu2 must be positive")
    if n < 9:
        raise ValueError("need at least 9 nodes per axis")
    box = sp.box2d((-1.0, 1.0), (-1.0, 1.0))
    h = 2.0 / (n - 1)
    m = n - 2
    A = _neg_laplacian(n, h)
    I = sps.identity(m * m, format="csc")
    # unknowns [y; z]: y + A z = mu1 ;  A y - z/mu2 = 0
    M = sps.bmat([[I, A], [A, -I / mu2]], format="csc")
    rhs = np.concatenate([np.full(m * m, mu1), np.zeros(m * m)])
    try:
        lu = spla.splu(M)
        x = lu.solve(rhs)
    except RuntimeError as e:
        raise SolverError(f"sparse factorization failed: {e}") from None
    _check_residual(M, x, rhs)
    y = x[:m * m].reshape(m, m)
    z = x[m * m:].reshape(m, m)
    Y = np.zeros((n, n))
    Z = np.zeros((n, n))
    Y[1:-1, 1:-1] = y
    Z[1:-1, 1:-1] = z
    U = Z / mu2
    return GridSolution(box, n, {"y": Y, "u": U, "z": Z}, ("y", "u", "z"))


def interpolate(sol: GridSolution, x) -> np.ndarray:
    """Bilinear interpolation of every field at one point."""
    x = np.asarray(x, dtype=float)
    if not sol.box.contains(x):
        raise ValueError(f"point {x} outside the solution box")
    out = np.empty(len(sol.field_names))
    lo = sol.box.lows
    h0 = (sol.box.highs[0] - lo[0]) / (sol.n - 1)
    h1 = (sol.box.highs[1] - lo[1]) / (sol.n - 1)
    i = min(int((x[0] - lo[0]) / h0), sol.n - 2)
    j = min(int((x[1] - lo[1]) / h1), sol.n - 2)
    s = (x[0] - (lo[0] + i * h0)) / h0
    t = (x[1] - (lo[1] + j * h1)) / h1
    for k, name in enumerate(sol.field_names):
        F = sol.fields[name]
        out[k] = ((1 - s) * (1 - t) * F[i, j] + s * (1 - t) * F[i + 1, j]
                  + (1 - s) * t * F[i, j + 1] + s * t * F[i + 1, j + 1])
    return out


def interpolate_many(sol: GridSolution, X) -> np.ndarray:
    """Bilinear interpolation at a batch of points, (m, n_fields)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.stack([interpolate(sol, x) for x in X], axis=0)
