"""Linear solves, the virtual-body problem, and Newton load-control continuation.

The optimization system is solved by full Newton at a sequence of penalty
values k, starting from the no-cloak displacement state.  Each converged state
seeds the next, larger k; a failing step is retried at geometric midpoints
(up to max_bisections) before the run is abandoned with a partial result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import CoupledSystem, Operators, dirichlet_single_field, load_vector
from .element import RegularizationParams
from .material import BaseMaterial
from .mesh import Mesh, build_rectangle


class SingularSystemError(RuntimeError):
    def __init__(self, message, dof=None):
        super().__init__(message)
        self.dof = dof


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Continuation schedule, Newton tolerances and penalty handling."""

    k_target: float = 1.0e7
    k0: float = 10.0
    k_growth: float = 10.0
    newton_tol: float = 1.0e-9
    # a stalled iteration (round-off floor of the factorization) is accepted
    # if the residual sits within this factor of the target tolerance
    stall_accept_factor: float = 100.0
    max_newton_iters: int = 25
    # backtracking halvings per Newton step; unit steps are always tried
    # first, so the quadratic phase near a root is unaffected
    max_backtracks: int = 8
    max_bisections: int = 8
    normalize_k: bool = True
    pivot_thresh: float = 1.0
    early_stop: bool = False
    early_stop_g_rel: float = 0.01
    early_stop_d_rel: float = 0.05
    virtual_h: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.k0 <= 0.0 or self.k_growth <= 1.0 or self.newton_tol <= 0.0:
            raise ValueError("invalid continuation parameters")

    def schedule(self) -> list[float]:
        ks = []
        k = self.k0
        while k < self.k_target * (1.0 - 1e-12):
            ks.append(k)
            k *= self.k_growth
        ks.append(self.k_target)
        return ks


def sparse_lu(a, pivot_thresh: float = 1.0):
    """LU-factorize a sparse square matrix (fill-reducing COLAMD ordering,
    partial pivoting); raises SingularSystemError naming an empty DOF when the
    matrix is structurally singular."""
    a = sp.csc_matrix(a)
    absa = abs(a)
    col_sums = np.asarray(absa.sum(axis=0)).ravel()
    row_sums = np.asarray(absa.sum(axis=1)).ravel()
    for sums, kind in ((row_sums, "row"), (col_sums, "column")):
        empty = np.flatnonzero(sums == 0.0)
        if len(empty):
            raise SingularSystemError(
                f"structurally singular system: {kind} of DOF {int(empty[0])} is empty",
                dof=int(empty[0]),
            )
    try:
        return splu(a, diag_pivot_thresh=pivot_thresh)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc


def back_solve(lu, rhs: np.ndarray) -> np.ndarray:
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("back substitution produced non-finite values")
    return x


def solve_linear(
    ops: Operators,
    load,
    qxi: np.ndarray | None = None,
    qeta: np.ndarray | None = None,
    uniform: bool = False,
    pivot_thresh: float = 1.0,
) -> np.ndarray:
    """Single-field elasticity solve on the operators' mesh for one load case."""
    a = ops.stiffness_matrix(qxi, qeta, uniform=uniform)
    rhs = load_vector(ops, load)
    idx, vals = dirichlet_single_field(ops.mesh, load)
    n = 2 * ops.mesh.n_nodes
    fixed = np.zeros(n, dtype=bool)
    fixed[idx] = True
    free = np.flatnonzero(~fixed)
    rhs_f = rhs[free]
    if len(idx):
        rhs_f = rhs_f - a[free][:, idx] @ vals
    lu = sparse_lu(a[free][:, free], pivot_thresh)
    u = np.zeros(n)
    u[free] = back_solve(lu, rhs_f)
    u[idx] = vals
    return u


def solve_nocloak(
    mesh: Mesh,
    load,
    base: BaseMaterial = BaseMaterial(),
    stiffness_ratio: float = 1.0e3,
) -> np.ndarray:
    """Physical-body solve with zero design (inhomogeneities stay stiffened)."""
    ops = Operators(mesh, base, stiffness_ratio)
    return solve_linear(ops, load)


def median_edge_length(mesh: Mesh) -> float:
    p = mesh.nodes[mesh.triangles]
    e = np.concatenate(
        [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]]
    )
    return float(np.median(np.hypot(e[:, 0], e[:, 1])))


def virtual_mesh_for(mesh: Mesh, target_h: float | None = None) -> Mesh:
    """Mesh of the hole-free body: the same mesh when nothing was removed,
    otherwise a fresh plain rectangle of comparable resolution."""
    if not mesh.has_hole():
        return mesh
    a = float(mesh.nodes[:, 0].max() - mesh.nodes[:, 0].min())
    b = float(mesh.nodes[:, 1].max() - mesh.nodes[:, 1].min())
    h = target_h if target_h is not None else median_edge_length(mesh)
    return build_rectangle(a, b, h)


def interpolate_nodal(vmesh: Mesh, u: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Evaluate a P1 nodal vector field of vmesh at arbitrary points.

    Point location uses a uniform background grid over triangle bounding
    boxes; points marginally outside (boundary round-off) are assigned to the
    triangle with the least-negative barycentric coordinate.
    """
    tri_pts = vmesh.nodes[vmesh.triangles]  # (M, 3, 2)
    lo = vmesh.nodes.min(axis=0)
    cell = max(vmesh.h, 1e-12)
    grid: dict[tuple[int, int], list[int]] = {}
    tmin = np.floor((tri_pts.min(axis=1) - lo) / cell).astype(int)
    tmax = np.floor((tri_pts.max(axis=1) - lo) / cell).astype(int)
    for t in range(len(tri_pts)):
        for ix in range(tmin[t, 0], tmax[t, 0] + 1):
            for iy in range(tmin[t, 1], tmax[t, 1] + 1):
                grid.setdefault((ix, iy), []).append(t)

    out = np.empty((len(pts), 2))
    ux = u[0::2]
    uy = u[1::2]
    for n, p in enumerate(pts):
        key = (int(np.floor((p[0] - lo[0]) / cell)), int(np.floor((p[1] - lo[1]) / cell)))
        best_lam, best_tri = None, -1
        for t in grid.get(key, ()):  # pragma: no branch
            a, b, c = tri_pts[t]
            m00, m01 = b[0] - a[0], c[0] - a[0]
            m10, m11 = b[1] - a[1], c[1] - a[1]
            det = m00 * m11 - m01 * m10
            l1 = ((p[0] - a[0]) * m11 - (p[1] - a[1]) * m01) / det
            l2 = (-(p[0] - a[0]) * m10 + (p[1] - a[1]) * m00) / det
            lam = np.array([1.0 - l1 - l2, l1, l2])
            if best_lam is None or lam.min() > best_lam.min():
                best_lam, best_tri = lam, t
            if lam.min() >= -1e-12:
                break
        if best_tri < 0 or best_lam.min() < -1e-6:
            raise ValueError(f"point {p} not found in the virtual mesh")
        nodes = vmesh.triangles[best_tri]
        out[n, 0] = best_lam @ ux[nodes]
        out[n, 1] = best_lam @ uy[nodes]
    return out.ravel()


@dataclass(frozen=True)
class VirtualSolution:
    utilde: np.ndarray  # on the physical mesh nodes, interleaved
    vmesh: Mesh
    u_virtual: np.ndarray  # on the virtual mesh nodes


def solve_virtual(
    mesh: Mesh,
    load,
    base: BaseMaterial = BaseMaterial(),
    target_h: float | None = None,
) -> VirtualSolution:
    """Homogeneous-body response under the load, sampled on the physical mesh."""
    vmesh = virtual_mesh_for(mesh, target_h)
    ops = Operators(vmesh, base, 1.0)
    uv = solve_linear(ops, load, uniform=True)
    if vmesh is mesh:
        ut = uv
    else:
        ut = interpolate_nodal(vmesh, uv, mesh.nodes)
    return VirtualSolution(utilde=ut, vmesh=vmesh, u_virtual=uv)


@dataclass(frozen=True)
class StepRecord:
    step: int
    k: float
    newton_iters: int
    res_inf: float
    res_tol: float
    res_history: tuple
    g_hat: tuple  # per load
    g_multi: float
    design_metric: float


@dataclass
class RunResult:
    xi: np.ndarray  # cloak-node values
    eta: np.ndarray
    cloak_nodes: np.ndarray
    u: list
    gamma: list
    utilde: list
    trace: list
    converged: bool
    failure_k: float | None
    config: SolverConfig
    step_seconds: list = field(default_factory=list)

    def g_monotone_fraction(self) -> float:
        """Fraction of continuation steps that did not increase the efficacy.

        Improvement is typical but not guaranteed; isolated increases are
        flagged by the runner, never treated as failures.
        """
        gs = [rec.g_multi for rec in self.trace]
        if len(gs) < 2:
            return 1.0
        good = sum(1 for a, b in zip(gs, gs[1:]) if b <= a * (1 + 1e-12))
        return good / (len(gs) - 1)

    def trace_rows(self) -> list[str]:
        n_loads = len(self.u)
        header = "step,k,newton_iters,res_inf," + ",".join(
            f"g_hat_{i}" for i in range(n_loads)
        ) + ",g_multi,design_metric"
        rows = [header]
        for rec in self.trace:
            gh = ",".join(f"{g:.17g}" for g in rec.g_hat)
            rows.append(
                f"{rec.step},{rec.k:.17g},{rec.newton_iters},{rec.res_inf:.17g},"
                f"{gh},{rec.g_multi:.17g},{rec.design_metric:.17g}"
            )
        return rows


def _newton(system: CoupledSystem, q: np.ndarray, k: float, config: SolverConfig):
    """Full Newton at fixed k; returns (ok, q, iters, res_inf, history)."""
    system.set_penalty(k)
    free = system.dofmap.free
    with np.errstate(over="ignore", invalid="ignore"):
        r = system.residual(q)
        rn = float(np.abs(r[free]).max()) if len(free) else 0.0
        # relative to the initial residual, floored by the forcing scale so a
        # state that already balances the applied loads is accepted
        tol = config.newton_tol * max(rn, system.force_scale())
        history = [rn]
        if rn <= tol:
            return True, q, 0, rn, history, tol
        best_rn, best_q = rn, q
        stalled = 0
        for it in range(1, config.max_newton_iters + 1):
            jac = system.jacobian(q)
            jr, rr = system.reduce(jac, r)
            try:
                lu = sparse_lu(jr, config.pivot_thresh)
                dq = back_solve(lu, -rr)
            except SingularSystemError:
                return False, q, it, rn, history, tol
            # full Newton step; backtrack only on blow-up.  Transient residual
            # growth is normal (the adjoints bootstrap from zero), so a step
            # is accepted unless it exceeds a generous cap over the best seen.
            alpha = 1.0
            cap = max(100.0 * best_rn, 10.0 * rn)
            for _ in range(config.max_backtracks + 1):
                q_new = q.copy()
                q_new[free] += alpha * dq
                r_new = system.residual(q_new)
                rn_new = float(np.abs(r_new[free]).max())
                if np.isfinite(rn_new) and rn_new <= cap:
                    break
                alpha *= 0.5
            else:
                return False, q, it, rn, history, tol
            q, r, rn = q_new, r_new, rn_new
            history.append(rn)
            if rn <= tol:
                return True, q, it, rn, history, tol
            # round-off stall: a plateau at the best achieved residual (not a
            # transient excursion above it) means the factorization floor was
            # hit; accept the best iterate if it is already close to target
            plateau = 0.9 * best_rn <= rn <= 10.0 * best_rn
            stalled = stalled + 1 if plateau else 0
            if rn < best_rn:
                best_rn, best_q = rn, q
            if stalled >= 2:
                if best_rn <= config.stall_accept_factor * tol:
                    return True, best_q, it, best_rn, history, best_rn * (1 + 1e-12)
                return False, q, it, rn, history, tol
    return False, q, config.max_newton_iters, rn, history, tol


def newton_continuation(
    mesh: Mesh,
    loads,
    config: SolverConfig = SolverConfig(),
    base: BaseMaterial = BaseMaterial(),
    reg: RegularizationParams = RegularizationParams(),
    stiffness_ratio: float = 1.0e3,
    log=None,
) -> RunResult:
    """Solve the design problem by Newton continuation in the penalty factor.

    log, when given, receives one line per Newton solve (k, iterations,
    residual, efficacy); pass sys.stderr for live progress.
    """
    system = CoupledSystem(
        mesh, loads, base, reg, stiffness_ratio, normalize_k=config.normalize_k
    )
    virtuals = [solve_virtual(mesh, ld, base, config.virtual_h) for ld in loads]
    system.set_virtual([v.utilde for v in virtuals])
    u0 = [solve_linear(system.ops, ld) for ld in loads]
    q = system.initial_state(u0)

    dm = system.dofmap
    trace: list[StepRecord] = []
    step_seconds: list[float] = []
    converged = True
    failure_k = None

    def g_values(qvec):
        from .metrics import g_hat

        qxi, qeta, qu, qg = system.split(qvec)
        gh = [
            g_hat(
                qu[i],
                system.utilde[i],
                mesh,
                mod_rigid=getattr(loads[i], "pure_traction", False),
            )
            for i in range(dm.n_loads)
        ]
        gm = float(np.dot(system.weights, gh))
        dmetric = float(np.sqrt(qxi @ (system.k_xi @ qxi) + qeta @ (system.k_eta @ qeta)))
        return tuple(gh), gm, dmetric

    prev_g = prev_d = None
    for step, k_step in enumerate(config.schedule()):
        t0 = time.perf_counter()
        pending = [k_step]
        consecutive_failures = 0
        substeps = 0
        q_good = q
        k_reached = trace[-1].k if trace else 0.0
        iters_total, rn, hist, tol = 0, np.nan, (), np.nan
        ok = True
        while pending:
            k_try = pending[-1]
            ok, q_new, iters, rn, hist, tol = _newton(system, q_good, k_try, config)
            iters_total += iters
            substeps += 1
            if log is not None:
                gh, gm, _ = g_values(q_new)
                log.write(
                    f"k={k_try:.6g} iters={iters} res_inf={rn:.3e} g={gm:.6g}\n"
                )
            if ok:
                pending.pop()
                q_good = q_new
                k_reached = k_try
                consecutive_failures = 0
                continue
            consecutive_failures += 1
            # give up after max_bisections failures in a row, a collapsed
            # k interval, or an unreasonable number of sub-steps
            too_small = k_reached > 0.0 and k_try / k_reached - 1.0 < 1e-6
            if (
                consecutive_failures > config.max_bisections
                or substeps > 50 * (1 + config.max_bisections)
                or too_small
            ):
                break
            k_mid = np.sqrt(k_reached * k_try) if k_reached > 0.0 else k_try / 10.0
            pending.append(k_mid)
        q = q_good
        step_seconds.append(time.perf_counter() - t0)
        if not ok:
            converged = False
            failure_k = k_step
            break
        gh, gm, dmetric = g_values(q)
        trace.append(
            StepRecord(
                step=step,
                k=k_step,
                newton_iters=iters_total,
                res_inf=rn,
                res_tol=tol,
                res_history=tuple(hist),
                g_hat=gh,
                g_multi=gm,
                design_metric=dmetric,
            )
        )
        if (
            config.early_stop
            and prev_g is not None
            and prev_g > 0.0
            and (prev_g - gm) / prev_g < config.early_stop_g_rel
            and prev_d > 0.0
            and abs(dmetric - prev_d) / prev_d > config.early_stop_d_rel
        ):
            break
        prev_g, prev_d = gm, dmetric

    qxi, qeta, qu, qg = system.split(q)
    result = RunResult(
        xi=qxi.copy(),
        eta=qeta.copy(),
        cloak_nodes=dm.cloak_nodes.copy(),
        u=[v.copy() for v in qu],
        gamma=[v.copy() for v in qg],
        utilde=[v.copy() for v in system.utilde],
        trace=trace,
        converged=converged,
        failure_k=failure_k,
        config=config,
        step_seconds=step_seconds,
    )
    if log is not None and result.g_monotone_fraction() < 0.9:
        log.write(
            f"note: efficacy decreased in only "
            f"{100 * result.g_monotone_fraction():.0f}% of steps\n"
        )
    return result
