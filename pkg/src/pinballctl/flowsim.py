"""2-D incompressible Navier-Stokes on a uniform staggered grid.

Rotating cylinders are immersed through a smoothed-kernel velocity blend:
after the explicit advection-diffusion stage, face velocities inside a thin
band around each body are relaxed toward the solid-body rotation velocity,
and the momentum injected by that blend is summed into the hydrodynamic
force on the body (control-volume formulation).

Grid layout (MAC):
    u[i, j] at (i*h, (j+1/2)*h),  shape (nx+1, ny)   x-faces
    v[i, j] at ((i+1/2)*h, j*h),  shape (nx, ny+1)   y-faces
    p[i, j] at cell centers,      shape (nx, ny)

Boundary conditions: uniform inflow at x=0, zero-gradient outflow with a
global mass-flux correction at x=Lx, free-slip walls at y=0 and y=Ly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import fft as sp_fft

from .errors import ConfigError, GeometryError, InstabilityError, SolverDivergenceError

# Half-width of the body/fluid blending kernel, in grid cells.
KERNEL_HALF_WIDTH_CELLS = 2.0


@dataclass
class SolverConfig:
    """Solver parameters. Lengths are in units of the cylinder diameter."""

    domain_length: float = 16.0
    domain_height: float = 8.0
    resolution: int = 16          # grid cells per diameter
    reynolds: float = 100.0
    inflow_speed: float = 1.0
    diameter: float = 1.0
    density: float = 1.0
    span: float = 1.0
    cfl: float = 0.5
    poisson_tol: float = 1e-5
    poisson_max_iter: int = 10_000
    poisson_method: str = "dct"   # "dct" (direct) or "sor" (iterative)
    init_perturb: float = 0.0     # amplitude of the symmetry-breaking seed

    @property
    def viscosity(self) -> float:
        """Kinematic viscosity, always derived from U, D, Re."""
        return self.inflow_speed * self.diameter / self.reynolds

    def validate(self) -> None:
        if int(self.resolution) != self.resolution or self.resolution < 4:
            raise ConfigError(f"resolution must be an integer >= 4, got {self.resolution}")
        if self.domain_length <= 0 or self.domain_height <= 0:
            raise ConfigError("domain dimensions must be positive")
        if self.reynolds <= 0:
            raise ConfigError("reynolds must be positive")
        if self.inflow_speed <= 0 or self.diameter <= 0:
            raise ConfigError("inflow_speed and diameter must be positive")
        if self.density <= 0 or self.span <= 0:
            raise ConfigError("density and span must be positive")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl must be in (0, 1]")
        if self.poisson_tol <= 0 or self.poisson_max_iter < 1:
            raise ConfigError("poisson tolerance/max_iter must be positive")
        if self.poisson_method not in ("dct", "sor"):
            raise ConfigError(f"unknown poisson_method {self.poisson_method!r}")


@dataclass
class Body:
    """A circular cylinder with a prescribed rotation.

    ``spin`` is the dimensionless rate eps = omega*D/U with positive spin
    counterclockwise (angular velocity omega = spin*U/D), so the surface
    tangential speed is |spin|*U/2 at radius D/2.
    """

    center: tuple[float, float]
    radius: float
    spin: float = 0.0

    def angular_velocity(self, config: SolverConfig) -> float:
        return self.spin * config.inflow_speed / config.diameter


@dataclass
class FlowState:
    """Velocity/pressure fields plus the simulation clock."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    time: float = 0.0
    step_count: int = 0


def coefficient_of(force: float, config: SolverConfig) -> float:
    """Normalize a force to a drag/lift coefficient: F / (rho U^2 D L / 2)."""
    denom = 0.5 * config.density * config.inflow_speed**2 * config.diameter * config.span
    if denom == 0:
        raise ConfigError("coefficient normalization is zero")
    return force / denom


def smoothed_fluid_fraction(d: np.ndarray, half_width: float) -> np.ndarray:
    """Cosine-smoothed Heaviside of the signed distance to a body surface.

    Returns 0 deep inside the body (d <= -half_width), 1 in the free fluid
    (d >= half_width), and 1/2 exactly on the surface.
    """
    x = np.clip((d + half_width) / (2.0 * half_width), 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * x))


class _BodyFaces:
    """Precomputed face sets and kernel weights for one immersed body."""

    def __init__(self, body: Body, sim: "Simulation"):
        h = sim.h
        eps_k = KERNEL_HALF_WIDTH_CELLS * h
        cx, cy = body.center

        xu = np.arange(sim.nx + 1) * h
        yu = (np.arange(sim.ny) + 0.5) * h
        du = np.hypot(xu[:, None] - cx, yu[None, :] - cy) - body.radius
        wu = 1.0 - smoothed_fluid_fraction(du, eps_k)
        wu[0, :] = 0.0   # never touch inlet/outlet faces
        wu[-1, :] = 0.0
        iu, ju = np.nonzero(wu > 1e-14)
        self.iu, self.ju = iu, ju
        self.wu = wu[iu, ju]
        self.yrel_u = yu[ju] - cy

        xv = (np.arange(sim.nx) + 0.5) * h
        yv = np.arange(sim.ny + 1) * h
        dv = np.hypot(xv[:, None] - cx, yv[None, :] - cy) - body.radius
        wv = 1.0 - smoothed_fluid_fraction(dv, eps_k)
        wv[:, 0] = 0.0   # never touch wall faces
        wv[:, -1] = 0.0
        iv, jv = np.nonzero(wv > 1e-14)
        self.iv, self.jv = iv, jv
        self.wv = wv[iv, jv]
        self.xrel_v = xv[iv] - cx


class Simulation:
    """One pinball-style flow simulation owning its state and bodies."""

    def __init__(self, config: SolverConfig, bodies: list[Body] | None = None):
        config.validate()
        bodies = list(bodies) if bodies else []
        _check_geometry(config, bodies)

        self.config = config
        self.bodies = bodies
        self.h = config.diameter / config.resolution
        self.nx = int(round(config.domain_length * config.diameter / self.h))
        self.ny = int(round(config.domain_height * config.diameter / self.h))
        self.nu = config.viscosity

        u = np.full((self.nx + 1, self.ny), config.inflow_speed, dtype=np.float64)
        v = np.zeros((self.nx, self.ny + 1), dtype=np.float64)
        p = np.zeros((self.nx, self.ny), dtype=np.float64)
        self.state = FlowState(u=u, v=v, p=p)

        if config.init_perturb:
            # Smooth transverse seed, zero on walls; breaks the mirror
            # symmetry so vortex shedding starts in finite time.
            amp = config.init_perturb * config.inflow_speed
            lx = self.nx * self.h
            ly = self.ny * self.h
            xv = (np.arange(self.nx) + 0.5) * self.h
            yv = np.arange(self.ny + 1) * self.h
            v[:, 1:-1] += amp * np.outer(
                np.sin(2.0 * np.pi * xv / lx), np.sin(np.pi * yv[1:-1] / ly)
            )

        self._face_sets = [_BodyFaces(b, self) for b in bodies]
        self._forces = [(0.0, 0.0) for _ in bodies]
        self._sor_neighbors = None
        # Work buffers for the two-stage momentum update.
        self._work = (
            np.zeros_like(u), np.zeros_like(v),
            np.zeros_like(u), np.zeros_like(v),
            np.zeros_like(u), np.zeros_like(v),
        )

        # Enforce the body velocity and a divergence-free start.
        self._apply_bcs(u, v)
        if bodies:
            dt0 = self._time_step()
            self._blend_bodies(u, v, dt0)
        self._project(u, v, 1.0)

    # ----------------------------------------------------------------- grid

    @property
    def time(self) -> float:
        return self.state.time

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.h
        y = (np.arange(self.ny) + 0.5) * self.h
        return x, y

    # ------------------------------------------------------------- stepping

    def _time_step(self) -> float:
        cfg = self.config
        speed = max(
            float(np.max(np.abs(self.state.u))),
            float(np.max(np.abs(self.state.v))),
            cfg.inflow_speed,
        )
        for b in self.bodies:
            speed = max(speed, abs(b.angular_velocity(cfg)) * b.radius)
        dt_adv = self.h / speed
        dt_diff = self.h * self.h / (4.0 * self.nu)
        return cfg.cfl * min(dt_adv, dt_diff)

    def step(self, max_dt: float | None = None) -> FlowState:
        """Advance one fractional step; returns the updated state."""
        u, v = self.state.u, self.state.v
        dt = self._time_step()
        if max_dt is not None:
            dt = min(dt, max_dt)
        ru1, rv1, ru2, rv2, u1, v1 = self._work

        self._apply_bcs(u, v)
        self._momentum_rhs(u, v, ru1, rv1)
        np.multiply(ru1, dt, out=u1)
        u1 += u
        np.multiply(rv1, dt, out=v1)
        v1 += v
        self._apply_bcs(u1, v1)
        self._momentum_rhs(u1, v1, ru2, rv2)
        u += (0.5 * dt) * (ru1 + ru2)
        v += (0.5 * dt) * (rv1 + rv2)
        self._apply_bcs(u, v)

        self._forces = self._blend_bodies(u, v, dt)
        self._project(u, v, dt)

        self.state.time += dt
        self.state.step_count += 1
        if not (np.isfinite(u[::4, ::4]).all() and np.isfinite(v[::4, ::4]).all()):
            if not (np.isfinite(u).all() and np.isfinite(v).all()):
                raise InstabilityError(
                    f"non-finite velocity at t={self.state.time:.4f} "
                    f"(step {self.state.step_count})"
                )
        return self.state

    def run_until(self, t_end: float, callback=None) -> FlowState:
        """Step until the clock reaches t_end exactly."""
        while self.state.time < t_end - 1e-12:
            self.step(max_dt=t_end - self.state.time)
            if callback is not None:
                callback(self)
        return self.state

    def _apply_bcs(self, u: np.ndarray, v: np.ndarray) -> None:
        cfg = self.config
        u[0, :] = cfg.inflow_speed
        u[-1, :] = u[-2, :]
        # Global mass-flux correction keeps the Neumann pressure problem
        # compatible.
        u[-1, :] += (u[0, :].sum() - u[-1, :].sum()) / self.ny
        v[:, 0] = 0.0
        v[:, -1] = 0.0

    def _momentum_rhs(self, u, v, ru, rv) -> None:
        _momentum_kernel(u, v, self.h, self.nu, ru, rv)

    def _blend_bodies(self, u, v, dt) -> list[tuple[float, float]]:
        cfg = self.config
        scale = -cfg.density * self.h * self.h / dt
        forces = []
        for body, faces in zip(self.bodies, self._face_sets):
            omega = body.angular_velocity(cfg)
            cur = u[faces.iu, faces.ju]
            du = faces.wu * ((-omega) * faces.yrel_u - cur)
            u[faces.iu, faces.ju] = cur + du
            cur = v[faces.iv, faces.jv]
            dv = faces.wv * (omega * faces.xrel_v - cur)
            v[faces.iv, faces.jv] = cur + dv
            forces.append((scale * float(du.sum()), scale * float(dv.sum())))
        return forces

    def _project(self, u, v, dt) -> None:
        cfg = self.config
        inv_h = 1.0 / self.h
        div = (u[1:, :] - u[:-1, :]) * inv_h + (v[:, 1:] - v[:, :-1]) * inv_h
        rhs = div * (cfg.density / dt)
        if cfg.poisson_method == "dct":
            p = dct_poisson(rhs, self.h)
        else:
            # Absolute threshold chosen so the post-projection divergence
            # stays below poisson_tol * U/D.
            tol_abs = cfg.poisson_tol * cfg.density * cfg.inflow_speed / (dt * cfg.diameter)
            p = sor_poisson(
                rhs,
                self.h,
                tol_abs,
                cfg.poisson_max_iter,
                x0=self.state.p,
                neighbors=self._sor_neighbor_counts(rhs.shape),
            )
        self.state.p = p
        c = dt / cfg.density * inv_h
        u[1:-1, :] -= c * (p[1:, :] - p[:-1, :])
        v[:, 1:-1] -= c * (p[:, 1:] - p[:, :-1])

    def _sor_neighbor_counts(self, shape):
        if self._sor_neighbors is None or self._sor_neighbors.shape != shape:
            self._sor_neighbors = _neighbor_counts(shape)
        return self._sor_neighbors

    # ------------------------------------------------------------ analysis

    def divergence(self) -> np.ndarray:
        u, v = self.state.u, self.state.v
        return ((u[1:, :] - u[:-1, :]) + (v[:, 1:] - v[:, :-1])) / self.h

    def body_force(self, body: Body | int) -> tuple[float, float]:
        """(drag, lift) on a body from the most recent step's blend forcing."""
        if isinstance(body, int):
            idx = body
            if not 0 <= idx < len(self.bodies):
                raise GeometryError(f"no body with index {idx}")
        else:
            try:
                idx = next(i for i, b in enumerate(self.bodies) if b is body)
            except StopIteration:
                raise GeometryError("body is not registered with this simulation") from None
        return self._forces[idx]

    def vorticity(self) -> np.ndarray:
        """Cell-centered dv/dx - du/dy by central differences."""
        u, v = self.state.u, self.state.v
        uc = 0.5 * (u[:-1, :] + u[1:, :])
        vc = 0.5 * (v[:, :-1] + v[:, 1:])
        ucp = np.pad(uc, ((0, 0), (1, 1)), mode="edge")
        vcp = np.pad(vc, ((1, 1), (0, 0)), mode="edge")
        dvdx = (vcp[2:, :] - vcp[:-2, :]) / (2.0 * self.h)
        dudy = (ucp[:, 2:] - ucp[:, :-2]) / (2.0 * self.h)
        # One-sided edges: the padded copies halve the derivative there.
        dvdx[0, :] *= 2.0
        dvdx[-1, :] *= 2.0
        dudy[:, 0] *= 2.0
        dudy[:, -1] *= 2.0
        return dvdx - dudy

    def dump_fields(self, path) -> None:
        """Plain-text field dump: x,y,u,v,p,vorticity per cell, 9 digits."""
        x, y = self.cell_centers()
        uc = 0.5 * (self.state.u[:-1, :] + self.state.u[1:, :])
        vc = 0.5 * (self.state.v[:, :-1] + self.state.v[:, 1:])
        vort = self.vorticity()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x,y,u,v,p,vorticity\n")
            for j in range(self.ny):
                for i in range(self.nx):
                    fh.write(
                        f"{x[i]:.9g},{y[j]:.9g},{uc[i, j]:.9g},"
                        f"{vc[i, j]:.9g},{self.state.p[i, j]:.9g},{vort[i, j]:.9g}\n"
                    )


def _check_geometry(config: SolverConfig, bodies: list[Body]) -> None:
    h = config.diameter / config.resolution
    lx = config.domain_length * config.diameter
    ly = config.domain_height * config.diameter
    clearance = 2.0 * h
    for b in bodies:
        if b.radius <= 0:
            raise GeometryError("body radius must be positive")
        cx, cy = b.center
        if (
            cx - b.radius < clearance
            or cx + b.radius > lx - clearance
            or cy - b.radius < clearance
            or cy + b.radius > ly - clearance
        ):
            raise GeometryError(
                f"body at ({cx}, {cy}) is outside the domain or closer than "
                f"two cells to a boundary"
            )
    for i in range(len(bodies)):
        for j in range(i + 1, len(bodies)):
            bi, bj = bodies[i], bodies[j]
            dist = math.hypot(
                bi.center[0] - bj.center[0], bi.center[1] - bj.center[1]
            )
            if dist <= bi.radius + bj.radius:
                raise GeometryError(f"bodies {i} and {j} overlap")


def new_sim(config: SolverConfig, bodies: list[Body] | None = None) -> Simulation:
    """Create a simulation with an impulsive uniform-inflow start."""
    return Simulation(config, bodies)


def step(sim: Simulation) -> FlowState:
    return sim.step()


def body_force(sim: Simulation, body: Body | int) -> tuple[float, float]:
    return sim.body_force(body)


def vorticity(sim: Simulation) -> np.ndarray:
    return sim.vorticity()


@njit(cache=True)
def _momentum_kernel(u, v, h, nu, ru, rv):
    """Divergence-form convection plus diffusion on the staggered grid.

    Ghost conventions: free-slip walls (du/dy = 0 mirror, v = 0 faces),
    inflow plane v = 0 (anti-mirror), zero-gradient outflow. Boundary faces
    themselves are left untouched (ru/rv stay zero there).
    """
    nx = u.shape[0] - 1
    ny = u.shape[1]
    inv_h = 1.0 / h
    inv_h2 = inv_h * inv_h

    for i in range(1, nx):
        for j in range(ny):
            ue = 0.5 * (u[i, j] + u[i + 1, j])
            uw = 0.5 * (u[i - 1, j] + u[i, j])
            fuu = ue * ue - uw * uw
            if j + 1 < ny:
                ua = 0.5 * (u[i, j] + u[i, j + 1])
            else:
                ua = u[i, j]
            va = 0.5 * (v[i - 1, j + 1] + v[i, j + 1])
            if j > 0:
                ub = 0.5 * (u[i, j - 1] + u[i, j])
            else:
                ub = u[i, j]
            vb = 0.5 * (v[i - 1, j] + v[i, j])
            fuv = ua * va - ub * vb
            un = u[i, j + 1] if j + 1 < ny else u[i, j]
            us = u[i, j - 1] if j > 0 else u[i, j]
            lap = (u[i + 1, j] + u[i - 1, j] - 2.0 * u[i, j]) * inv_h2 + (
                un + us - 2.0 * u[i, j]
            ) * inv_h2
            ru[i, j] = -(fuu * inv_h + fuv * inv_h) + nu * lap

    for i in range(nx):
        for j in range(1, ny):
            vn = 0.5 * (v[i, j] + v[i, j + 1])
            vs = 0.5 * (v[i, j - 1] + v[i, j])
            fvv = vn * vn - vs * vs
            ue_c = 0.5 * (u[i + 1, j - 1] + u[i + 1, j])
            ve = 0.5 * (v[i, j] + v[i + 1, j]) if i + 1 < nx else v[i, j]
            uw_c = 0.5 * (u[i, j - 1] + u[i, j])
            vw = 0.5 * (v[i - 1, j] + v[i, j]) if i > 0 else 0.0
            fuv = ue_c * ve - uw_c * vw
            vee = v[i + 1, j] if i + 1 < nx else v[i, j]
            vww = -v[i, j] if i == 0 else v[i - 1, j]
            lap = (vee + vww - 2.0 * v[i, j]) * inv_h2 + (
                v[i, j + 1] + v[i, j - 1] - 2.0 * v[i, j]
            ) * inv_h2
            rv[i, j] = -(fuv * inv_h + fvv * inv_h) + nu * lap


# ------------------------------------------------------------------ Poisson


def _neighbor_counts(shape) -> np.ndarray:
    nb = np.full(shape, 4.0)
    nb[0, :] -= 1.0
    nb[-1, :] -= 1.0
    nb[:, 0] -= 1.0
    nb[:, -1] -= 1.0
    return nb


def _laplacian(p: np.ndarray, h: float) -> np.ndarray:
    # Padded sums include mirrored ghosts, hence the constant -4 diagonal.
    pp = np.pad(p, 1, mode="edge")
    return (
        pp[:-2, 1:-1] + pp[2:, 1:-1] + pp[1:-1, :-2] + pp[1:-1, 2:] - 4.0 * p
    ) / (h * h)


def dct_poisson(rhs: np.ndarray, h: float) -> np.ndarray:
    """Direct solve of the 5-point Neumann Poisson problem.

    The cell-centered Laplacian with mirrored ghost cells diagonalizes in
    the DCT-II basis, so this returns the exact (machine-precision) solution
    of the same discrete system the iterative solver targets, with the
    mean-zero gauge.
    """
    nx, ny = rhs.shape
    rhs = rhs - rhs.mean()
    rhat = sp_fft.dctn(rhs, type=2)
    lam_x = 2.0 * (np.cos(np.pi * np.arange(nx) / nx) - 1.0) / (h * h)
    lam_y = 2.0 * (np.cos(np.pi * np.arange(ny) / ny) - 1.0) / (h * h)
    denom = lam_x[:, None] + lam_y[None, :]
    denom[0, 0] = 1.0
    phat = rhat / denom
    phat[0, 0] = 0.0
    return sp_fft.idctn(phat, type=2)


def sor_poisson(
    rhs: np.ndarray,
    h: float,
    tol_abs: float,
    max_iter: int,
    x0: np.ndarray | None = None,
    omega: float | None = None,
    neighbors: np.ndarray | None = None,
    check_every: int = 16,
) -> np.ndarray:
    """Red-black SOR for the Neumann Poisson problem, mean-zero gauge.

    Stops when the residual max-norm drops below ``tol_abs``; raises
    SolverDivergenceError carrying the final residual otherwise.
    """
    nx, ny = rhs.shape
    p = np.zeros_like(rhs) if x0 is None else x0.astype(np.float64, copy=True)
    nb = _neighbor_counts(rhs.shape) if neighbors is None else neighbors
    if omega is None:
        omega = 2.0 / (1.0 + math.sin(math.pi / max(nx, ny)))
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    red = (ii + jj) % 2 == 0
    black = ~red
    h2rhs = rhs * (h * h)
    one_minus = 1.0 - omega
    ghosts = 4.0 - nb   # mirrored ghost copies contained in the padded sum

    residual = math.inf
    for it in range(1, max_iter + 1):
        for mask in (red, black):
            pp = np.pad(p, 1, mode="edge")
            s = pp[:-2, 1:-1] + pp[2:, 1:-1] + pp[1:-1, :-2] + pp[1:-1, 2:]
            s -= ghosts * p
            p = np.where(mask, one_minus * p + omega * (s - h2rhs) / nb, p)
        if it % check_every == 0 or it == max_iter:
            residual = float(np.max(np.abs(rhs - _laplacian(p, h))))
            if residual <= tol_abs:
                return p - p.mean()
    raise SolverDivergenceError(
        f"SOR failed to reach {tol_abs:g} in {max_iter} iterations "
        f"(residual {residual:g})",
        residual,
    )


def poisson_solve(
    rhs: np.ndarray,
    tol: float,
    max_iter: int,
    h: float = 1.0,
    method: str = "sor",
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Solve the Neumann Poisson problem to a relative residual tolerance.

    ``tol`` is relative to the max-norm of ``rhs`` (with a tiny absolute
    floor so a zero right-hand side returns immediately).
    """
    if not np.all(np.isfinite(rhs)):
        raise ConfigError("poisson rhs must be finite")
    tol_abs = tol * max(float(np.max(np.abs(rhs))), 1e-300)
    if method == "dct":
        return dct_poisson(rhs, h)
    return sor_poisson(rhs, h, tol_abs, max_iter, x0=x0)
