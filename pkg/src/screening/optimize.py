"""Minimization of the particle energy over the hard-core admissible set.

Phase one is projected gradient descent in 3-D (Barzilai-Borwein steps,
Armijo backtracking, radial projection onto the hard-core spheres), which
lets electrons move between nuclei.  Phase two polishes an absorbed
configuration with L-BFGS on sphere coordinates ``x = R + d u/|u|``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .core import ElectronConfig, NuclearConfig
from .energy import EnergyBreakdown, particle_energy


class RefinementError(ValueError):
    """Electron not close enough to any hard-core sphere."""


@dataclass(frozen=True)
class OptimizeOptions:
    restarts: int = 8
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-5
    seed: int = 0
    initial_radius_factor: float = 1.5
    threads: int = 1

    def __post_init__(self):
        if self.restarts < 1 or self.max_iterations < 1 or self.threads < 1:
            raise ValueError("restarts, max_iterations and threads must be >= 1")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.initial_radius_factor < 1:
            raise ValueError("initial_radius_factor must be >= 1")

    def to_dict(self) -> dict:
        return {
            "restarts": self.restarts,
            "max_iterations": self.max_iterations,
            "gradient_tolerance": self.gradient_tolerance,
            "seed": self.seed,
            "initial_radius_factor": self.initial_radius_factor,
        }


@dataclass(frozen=True)
class OptimizeResult:
    config: ElectronConfig
    energy: EnergyBreakdown
    absorbed: bool
    per_nucleus_counts: tuple
    iterations: int
    restarts_used: int
    gradient_norm: float = math.nan
    farthest_distance: float = 0.0
    restart_energies: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "energy": self.energy.to_dict(),
            "absorbed": self.absorbed,
            "per_nucleus_counts": list(self.per_nucleus_counts),
            "iterations": self.iterations,
            "restarts_used": self.restarts_used,
            "gradient_norm": self.gradient_norm,
            "farthest_distance": self.farthest_distance,
        }


# -- fast kernels ------------------------------------------------------------------


def _energy_grad(x: np.ndarray, R: np.ndarray, Z: np.ndarray) -> tuple[float, np.ndarray]:
    dn = x[:, None, :] - R[None, :, :]
    rn = np.sqrt(np.einsum("ijk,ijk->ij", dn, dn))
    energy = -float(np.sum(Z[None, :] / rn))
    grad = np.einsum("j,ijk->ik", Z, dn / rn[..., None] ** 3)
    if len(x) > 1:
        de = x[:, None, :] - x[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", de, de)
        np.fill_diagonal(r2, 1.0)
        inv = 1.0 / np.sqrt(r2)
        np.fill_diagonal(inv, 0.0)
        energy += 0.5 * float(np.sum(inv))
        grad -= np.einsum("ij,ijk->ik", inv**3, de)
    return energy, grad


def _snap_to_sphere(x: np.ndarray, center: np.ndarray, d: float) -> np.ndarray:
    """Points at distance exactly >= d (and within a few ulps of d) from ``center``."""
    delta = x - center
    r = np.linalg.norm(delta, axis=1)
    r = np.where(r == 0, 1.0, r)
    delta = np.where((np.linalg.norm(delta, axis=1) == 0)[:, None], np.array([0.0, 0.0, 1.0]), delta)
    fac = d / r
    out = center + delta * fac[:, None]
    for _ in range(8):
        short = np.linalg.norm(out - center, axis=1) < d
        if not np.any(short):
            break
        fac = np.where(short, np.nextafter(fac, np.inf), fac)
        out = center + delta * fac[:, None]
    return out


def _project(x: np.ndarray, nuc: NuclearConfig) -> np.ndarray:
    d = nuc.hardcore_radius
    out = x.copy()
    for R in nuc.positions:
        inside = np.linalg.norm(out - R, axis=1) < d
        if np.any(inside):
            out[inside] = _snap_to_sphere(out[inside], R, d)
    return out


def _active_normals(x: np.ndarray, nuc: NuclearConfig, rtol: float = 1e-12):
    """Outward unit normals for electrons on a hard-core sphere, zero rows otherwise."""
    normals = np.zeros_like(x)
    d = nuc.hardcore_radius
    for R in nuc.positions:
        delta = x - R
        r = np.linalg.norm(delta, axis=1)
        on = r <= d * (1 + rtol)
        normals[on] = delta[on] / r[on, None]
    return normals


def projected_gradient(x: np.ndarray, grad: np.ndarray, nuc: NuclearConfig) -> np.ndarray:
    """Gradient with the inward-pushing normal component removed on active constraints."""
    n = _active_normals(x, nuc)
    gn = np.einsum("ij,ij->i", grad, n)
    return grad - np.maximum(gn, 0.0)[:, None] * n


def _nearest(x: np.ndarray, nuc: NuclearConfig) -> tuple[np.ndarray, np.ndarray]:
    dist = np.linalg.norm(x[:, None, :] - nuc.positions[None, :, :], axis=-1)
    idx = np.argmin(dist, axis=1)  # lowest index wins ties
    return idx, dist[np.arange(len(x)), idx]


def detect_absorption(cfg: ElectronConfig, nuc: NuclearConfig, tol: float = 1e-6):
    """``(all absorbed, assignment)``; assignment is the nearest-nucleus index or -1."""
    x = np.asarray(cfg.points)
    if len(x) == 0:
        return True, np.zeros(0, dtype=int)
    dist = np.linalg.norm(x[:, None, :] - nuc.positions[None, :, :], axis=-1)
    gap = np.abs(dist - nuc.hardcore_radius)
    idx = np.argmin(dist, axis=1)
    on = gap[np.arange(len(x)), idx] <= tol
    assignment = np.where(on, idx, -1)
    return bool(np.all(on)), assignment


# -- phase one ----------------------------------------------------------------------


def _initial_points(N: int, nuc: NuclearConfig, radius_factor: float, rng) -> np.ndarray:
    counts = rng.multinomial(N, nuc.fractions)
    pts = []
    for R, n in zip(nuc.positions, counts):
        v = rng.standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
        pts.append(R + radius_factor * nuc.hardcore_radius * v)
    return _project(np.concatenate(pts, axis=0), nuc)


def projected_descent(
    x0: np.ndarray,
    nuc: NuclearConfig,
    max_iterations: int,
    tol: float,
    *,
    stop_when_absorbed: float | None = None,
    history: list | None = None,
):
    """Projected gradient descent with BB steps; returns ``(x, energy, iterations)``.

    ``stop_when_absorbed``: leave early once every electron sits on a sphere and the
    projected-gradient norm is below this looser threshold.
    """
    R, Z, d = nuc.positions, nuc.charges, nuc.hardcore_radius
    x = _project(np.asarray(x0, dtype=float), nuc)
    E, g = _energy_grad(x, R, Z)
    if history is not None:
        history.append(E)
    pg = projected_gradient(x, g, nuc)
    t = 0.1 * d / max(float(np.max(np.linalg.norm(g, axis=1))), 1e-300)
    max_step = 0.5 * d
    it = 0
    for it in range(1, max_iterations + 1):
        gnorm = float(np.linalg.norm(pg))
        if gnorm <= tol:
            it -= 1
            break
        if stop_when_absorbed is not None and gnorm <= stop_when_absorbed:
            if detect_absorption(ElectronConfig(x), nuc, 1e-12)[0]:
                it -= 1
                break
        while True:
            step = -t * g
            length = np.linalg.norm(step, axis=1)
            too_long = length > max_step
            step[too_long] *= (max_step / length[too_long])[:, None]
            x_new = _project(x + step, nuc)
            E_new, g_new = _energy_grad(x_new, R, Z)
            if E_new <= E + 1e-4 * float(np.sum(g * (x_new - x))) or t < 1e-300:
                break
            t *= 0.5
        if E_new > E:
            # no descent possible at floating-point resolution
            break
        s = (x_new - x).ravel()
        y = (g_new - g).ravel()
        x, E, g = x_new, E_new, g_new
        if history is not None:
            history.append(E)
        pg = projected_gradient(x, g, nuc)
        sy = float(s @ y)
        if sy > 0:
            t = float(s @ s) / sy if it % 2 else sy / float(y @ y)
        else:
            t = 2 * t
        t = min(t, 1e6 * d)
    return x, E, it


# -- phase two ------------------------------------------------------------------------


def _sphere_polish(
    x: np.ndarray, centers: np.ndarray, nuc: NuclearConfig, tol: float, maxiter: int, rounds: int = 60
):
    """Alternate L-BFGS (in unnormalized sphere coordinates) and Newton until the
    tangential gradient meets ``tol`` or the energy stalls."""
    R, Z, d = nuc.positions, nuc.charges, nuc.hardcore_radius

    def fun(flat):
        u = flat.reshape(-1, 3)
        nu = np.linalg.norm(u, axis=1)
        xs = centers + d * u / nu[:, None]
        E, g = _energy_grad(xs, R, Z)
        uh = u / nu[:, None]
        tang = g - np.einsum("ij,ij->i", g, uh)[:, None] * uh
        return E, (d * tang / nu[:, None]).ravel()

    total = 0
    E = _energy_grad(x, R, Z)[0]
    for _ in range(rounds):
        res = _scipy_minimize(
            fun,
            ((x - centers) / d).ravel(),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": maxiter, "gtol": tol * 1e-2, "ftol": 1e-16, "maxcor": 30},
        )
        total += int(res.nit)
        u = res.x.reshape(-1, 3)
        out = np.empty_like(x)
        for Ra in R:
            rows = np.all(centers == Ra, axis=1)
            if np.any(rows):
                out[rows] = _snap_to_sphere(Ra + u[rows], Ra, d)
        out = _newton_on_spheres(out, centers, nuc, tol=1e-2 * tol)
        E_new, g = _energy_grad(out, R, Z)
        if E_new > E:
            break
        stalled = E_new >= E - 1e-14 * abs(E)
        x, E = out, E_new
        n = (x - centers) / d
        tang = g - np.einsum("ij,ij->i", g, n)[:, None] * n
        if stalled or np.linalg.norm(tang) <= tol:
            break
    return x, total


def _tangent_bases(n: np.ndarray) -> np.ndarray:
    """Orthonormal tangent frames, shape ``(N, 3, 2)``, for unit normals ``n``."""
    helper = np.where(np.abs(n[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(n, e1)
    return np.stack([e1, e2], axis=2)


def _hessian(x: np.ndarray, R: np.ndarray, Z: np.ndarray) -> np.ndarray:
    N = len(x)
    eye = np.eye(3)
    H = np.zeros((N, 3, N, 3))
    dn = x[:, None, :] - R[None, :, :]
    rn = np.linalg.norm(dn, axis=-1)
    nuc_blocks = -np.einsum(
        "ia,iakl->ikl",
        np.broadcast_to(Z, rn.shape),
        (3 * dn[..., :, None] * dn[..., None, :] - (rn**2)[..., None, None] * eye) / rn[..., None, None] ** 5,
    )
    de = x[:, None, :] - x[None, :, :]
    r = np.linalg.norm(de, axis=-1)
    np.fill_diagonal(r, 1.0)
    T = (3 * de[..., :, None] * de[..., None, :] - (r**2)[..., None, None] * eye) / r[..., None, None] ** 5
    T[np.arange(N), np.arange(N)] = 0.0
    H -= T.transpose(0, 2, 1, 3)
    idx = np.arange(N)
    H[idx, :, idx, :] = nuc_blocks + T.sum(axis=1)
    return H.reshape(3 * N, 3 * N)


def _newton_on_spheres(
    x: np.ndarray, centers: np.ndarray, nuc: NuclearConfig, steps: int = 20, tol: float = 0.0
):
    """Riemannian Newton with backtracking; a step is kept if it lowers the energy,
    or leaves it unchanged to rounding while lowering the gradient."""
    R, Z, d = nuc.positions, nuc.charges, nuc.hardcore_radius
    N = len(x)
    if N > 800:
        return x
    E, g = _energy_grad(x, R, Z)
    for _ in range(steps):
        n = (x - centers) / d
        B = _tangent_bases(n)
        G = np.einsum("ikl,ik->il", B, g).ravel()
        gnorm = np.linalg.norm(G)
        if gnorm <= tol:
            break
        H = _hessian(x, R, Z)
        Bfull = np.zeros((3 * N, 2 * N))
        for i in range(N):
            Bfull[3 * i : 3 * i + 3, 2 * i : 2 * i + 2] = B[i]
        Hr = Bfull.T @ H @ Bfull
        Hr -= np.diag(np.repeat(np.einsum("ij,ij->i", n, g) / d, 2))
        # |w| keeps the step a descent direction; the floor tames soft and zero (rotation) modes
        w, V = np.linalg.eigh(Hr)
        floor = 1e-6 * np.max(np.abs(w))
        step = -V @ ((V.T @ G) / np.maximum(np.abs(w), floor))
        longest = np.max(np.linalg.norm(step.reshape(N, 2), axis=1))
        if longest > 0.05 * d:
            step *= 0.05 * d / longest
        accepted = False
        for shrink in (1.0, 0.5, 0.25, 0.125, 0.0625):
            v = np.einsum("ikl,il->ik", B, shrink * step.reshape(N, 2))
            x_new = np.empty_like(x)
            for Ra in R:
                rows = np.all(centers == Ra, axis=1)
                if np.any(rows):
                    x_new[rows] = _snap_to_sphere(x[rows] + v[rows], Ra, d)
            E_new, g_new = _energy_grad(x_new, R, Z)
            n_new = (x_new - centers) / d
            G_new = g_new - np.einsum("ij,ij->i", g_new, n_new)[:, None] * n_new
            rounding = 1e-13 * abs(E)
            if E_new < E - rounding or (E_new <= E + rounding and np.linalg.norm(G_new) < gnorm):
                accepted = True
                break
        if not accepted:
            break
        x, E, g = x_new, E_new, g_new
    return x


def _summarize(x, nuc: NuclearConfig, iterations: int, restarts: int, energies=()) -> OptimizeResult:
    cfg = ElectronConfig(x)
    breakdown = particle_energy(cfg, nuc)
    absorbed, assign = detect_absorption(cfg, nuc, 1e-6 * nuc.hardcore_radius)
    counts = tuple(int(np.sum(assign == a)) for a in range(nuc.M))
    _, g = _energy_grad(x, nuc.positions, nuc.charges) if len(x) else (0.0, np.zeros((0, 3)))
    gnorm = float(np.linalg.norm(projected_gradient(x, g, nuc))) if len(x) else 0.0
    far = float(np.max(_nearest(x, nuc)[1])) if len(x) else 0.0
    return OptimizeResult(
        config=cfg,
        energy=breakdown,
        absorbed=absorbed,
        per_nucleus_counts=counts,
        iterations=iterations,
        restarts_used=restarts,
        gradient_norm=gnorm,
        farthest_distance=far,
        restart_energies=tuple(energies),
    )


def refine_on_spheres(result: OptimizeResult, nuc: NuclearConfig, opts: OptimizeOptions) -> OptimizeResult:
    """Polish a (near-)absorbed configuration with every electron pinned to its nearest sphere."""
    x = np.asarray(result.config.points, dtype=float)
    if len(x) == 0:
        return result
    idx, dist = _nearest(x, nuc)
    if np.any(np.abs(dist - nuc.hardcore_radius) > 0.05 * nuc.hardcore_radius):
        raise RefinementError("electron farther than 0.05 d from every hard-core sphere")
    centers = nuc.positions[idx]
    x_sphere = np.empty_like(x)
    for a, Ra in enumerate(nuc.positions):
        rows = idx == a
        if np.any(rows):
            x_sphere[rows] = _snap_to_sphere(x[rows], Ra, nuc.hardcore_radius)
    x_new, nit = _sphere_polish(x_sphere, centers, nuc, opts.gradient_tolerance, opts.max_iterations)
    # x_sphere equals x when the input is already on the spheres, so energy cannot rise
    E_sph = _energy_grad(x_sphere, nuc.positions, nuc.charges)[0]
    E_new = _energy_grad(x_new, nuc.positions, nuc.charges)[0]
    if E_new > E_sph:
        x_new = x_sphere
    return _summarize(x_new, nuc, result.iterations + nit, result.restarts_used, result.restart_energies)


def _run_restart(args) -> tuple[float, np.ndarray, int]:
    N, nuc, opts, restart = args
    rng = np.random.default_rng(opts.seed ^ restart)
    x0 = _initial_points(N, nuc, opts.initial_radius_factor, rng)
    # phase two cannot move electrons between spheres, but any electron that wants
    # to leave its sphere keeps an outward gradient component of order Z/d^2
    loose = max(opts.gradient_tolerance, 1e-4 * nuc.total_charge / nuc.hardcore_radius**2 * math.sqrt(N))
    x, E, it = projected_descent(
        x0, nuc, opts.max_iterations, opts.gradient_tolerance, stop_when_absorbed=loose
    )
    idx, dist = _nearest(x, nuc)
    if np.all(np.abs(dist - nuc.hardcore_radius) <= 0.05 * nuc.hardcore_radius):
        centers = nuc.positions[idx]
        xs = np.empty_like(x)
        for a, Ra in enumerate(nuc.positions):
            rows = idx == a
            if np.any(rows):
                xs[rows] = _snap_to_sphere(x[rows], Ra, nuc.hardcore_radius)
        x2, nit = _sphere_polish(xs, centers, nuc, opts.gradient_tolerance, opts.max_iterations)
        E2 = _energy_grad(x2, nuc.positions, nuc.charges)[0]
        if E2 <= E:
            x, E = x2, E2
        it += nit
    return E, x, it


def minimize(N: int, nuc: NuclearConfig, opts: OptimizeOptions | None = None) -> OptimizeResult:
    """Best configuration over ``opts.restarts`` seeded restarts (index breaks ties)."""
    opts = opts or OptimizeOptions()
    if N < 1:
        raise ValueError("N must be >= 1")
    jobs = [(N, nuc, opts, r) for r in range(opts.restarts)]
    workers = min(opts.threads, opts.restarts)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_restart, jobs))
    else:
        runs = [_run_restart(j) for j in jobs]
    energies = [r[0] for r in runs]
    best = int(np.argmin(energies))
    _, x, it = runs[best]
    return _summarize(x, nuc, it, opts.restarts, energies)


def default_threads() -> int:
    return os.cpu_count() or 1
