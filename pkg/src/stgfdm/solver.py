"""Sparse solve of the assembled system.

The direct path uses MKL PARDISO (through ``pypardiso``) when it can be
loaded and SuperLU otherwise; both apply a fill-reducing column ordering
before factorizing.  The iterative path is restarted GMRES with an
incomplete-LU preconditioner.
"""

from __future__ import annotations

import glob
import logging
import os
import site
import sys
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import SparseSystem
from .errors import NoConvergence, SingularSystem

log = logging.getLogger(__name__)

# a direct solve whose residual exceeds this is treated as singular
DIRECT_RESIDUAL_LIMIT = 1e-6


@dataclass(frozen=True)
class SolverOptions:
    method: str = "direct"  # "direct" | "pardiso" | "superlu" | "gmres"
    tol: float = 1e-10
    max_iters: int = 10_000
    restart: int = 100
    ilu_drop_tol: float = 1e-8
    ilu_fill_factor: float = 40.0


@dataclass
class SolveReport:
    solution: np.ndarray
    relative_residual: float
    iterations: int
    wall_time: float
    method: str  # "DirectLU" | "GMRES"
    backend: str = ""


def relative_residual(system: SparseSystem, x: np.ndarray) -> float:
    r = system.residual(x)
    return float(np.linalg.norm(r) / max(np.linalg.norm(system.rhs), 1e-300))


def _find_mkl_rt():
    roots = {sys.prefix, sys.base_prefix, site.USER_BASE or "", "/usr/local"}
    for root in sorted(r for r in roots if r):
        for pattern in ("lib/libmkl_rt.so*", "lib/libmkl_rt*.dylib", "Library/bin/mkl_rt*.dll"):
            hits = sorted(glob.glob(os.path.join(root, pattern)))
            if hits:
                return hits[0]
    return None


def _load_pardiso():
    if "PYPARDISO_MKL_RT" not in os.environ:
        path = _find_mkl_rt()
        if path:
            os.environ["PYPARDISO_MKL_RT"] = path
    try:
        import pypardiso
    except (ImportError, OSError) as exc:
        log.info("PARDISO unavailable (%s); falling back to SuperLU", exc)
        return None
    return pypardiso


_PARDISO = None
_PARDISO_TRIED = False


def pardiso_available() -> bool:
    global _PARDISO, _PARDISO_TRIED
    if not _PARDISO_TRIED:
        _PARDISO = _load_pardiso()
        _PARDISO_TRIED = True
    return _PARDISO is not None


def solve(system: SparseSystem, opts: SolverOptions = SolverOptions()) -> SolveReport:
    """Solve ``K x = F``; raises SingularSystem or NoConvergence."""
    t0 = time.perf_counter()
    K = system.csr()
    method = opts.method
    if method == "direct":
        method = "pardiso" if pardiso_available() else "superlu"
    if method == "pardiso":
        if not pardiso_available():
            raise SingularSystem("PARDISO backend requested but not loadable")
        x = _pardiso_solve(K, system.rhs)
    elif method == "superlu":
        try:
            lu = spla.splu(K.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        x = lu.solve(system.rhs)
    elif method == "gmres":
        return _gmres(system, K.tocsc(), opts, t0)
    else:
        raise ValueError(f"unknown solver method {opts.method!r}")
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution from the direct factorization")
    res = relative_residual(system, x)
    if res > DIRECT_RESIDUAL_LIMIT:
        raise SingularSystem(f"direct solve left relative residual {res:.3e}")
    return SolveReport(x, res, 0, time.perf_counter() - t0, "DirectLU", method)


def _pardiso_solve(K, rhs):
    ps = _PARDISO.PyPardisoSolver()
    ps.set_statistical_info_off()
    try:
        x = ps.solve(K, rhs.copy())
    except Exception as exc:  # PyPardisoError carries the MKL error code
        raise SingularSystem(f"PARDISO failed: {exc}") from exc
    finally:
        ps.free_memory(everything=True)
    return np.asarray(x, float).ravel()


def _gmres(system, K, opts, t0):
    try:
        ilu = spla.spilu(K, drop_tol=opts.ilu_drop_tol, fill_factor=opts.ilu_fill_factor)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    M = spla.LinearOperator(K.shape, ilu.solve)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(K, system.rhs, M=M, rtol=opts.tol, atol=0.0, restart=opts.restart,
                         maxiter=max(1, opts.max_iters // opts.restart),
                         callback=cb, callback_type="pr_norm")
    res = relative_residual(system, x)
    if not np.all(np.isfinite(x)) or (info != 0 and not res <= opts.tol):
        raise NoConvergence(f"GMRES stopped after {count[0]} iterations, "
                            f"relative residual {res:.3e}", best_residual=res, solution=x)
    return SolveReport(x, res, count[0], time.perf_counter() - t0, "GMRES", "gmres")
