"""
Emitter position from TDoA: closed-form Bancroft (LS-BF), grid search (ML) and
Bancroft-seeded Gauss-Newton (LS-BF-GN), plus averaging of repeated fixes.

Forward model everywhere: tdoa_j(x) = (|x - v_j| - |x - v_1|) / c, the lag at
which the CAF of sensor j against the reference sensor peaks.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from src.estimation.tdoa_estimator import TdoaMeasurement
from src.utils.logger import Logger

logger = Logger(name="locator", component="localization").get_logger()

TdoaLike = Union[TdoaMeasurement, np.ndarray, Sequence[float]]


class DegenerateGeometryError(ValueError):
    """Raised when the sensor geometry cannot support a position fix"""


class Algorithm(str, Enum):
    LS_BF = "LS_BF"
    ML = "ML"
    LS_BF_GN = "LS_BF_GN"


class JacobianMode(str, Enum):
    ANALYTIC = "analytic"
    CONSTANT = "constant"   # rows (v_j - v_1)^T / |v_j - v_1|, independent of x


@dataclass(frozen=True, eq=False)
class SensorArray:
    positions: np.ndarray   # (n, d), row 0 is the reference sensor

    def __post_init__(self):
        positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "positions", positions)
        n, dim = positions.shape
        if dim not in (2, 3):
            raise DegenerateGeometryError(f"sensor positions must be 2D or 3D, got {dim}D")
        if n < dim + 1:
            raise DegenerateGeometryError(f"{dim}D localization needs at least {dim + 1} sensors, got {n}")
        if np.linalg.matrix_rank(positions[1:] - positions[0]) < dim:
            raise DegenerateGeometryError("sensor positions are collinear / coplanar")

    @property
    def num_sensors(self) -> int:
        return int(self.positions.shape[0])

    @property
    def dim(self) -> int:
        return int(self.positions.shape[1])

    @property
    def reference(self) -> np.ndarray:
        return self.positions[0]

    def translated(self, offset: Sequence[float]) -> "SensorArray":
        return SensorArray(self.positions + np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class GridSpec:
    bounds: Tuple[float, float, float, float]   # (x_min, x_max, y_min, y_max) [m]
    resolution: float

    def __post_init__(self):
        x_min, x_max, y_min, y_max = self.bounds
        if self.resolution <= 0:
            raise ValueError(f"grid resolution must be > 0, got {self.resolution}")
        if x_max < x_min or y_max < y_min:
            raise ValueError(f"invalid grid bounds {self.bounds}")

    @property
    def shape(self) -> Tuple[int, int]:
        """(rows along y, columns along x)"""
        x_min, x_max, y_min, y_max = self.bounds
        # tolerance so that 50 / 0.5 counts 101 points, not 100
        nx = int(np.floor((x_max - x_min) / self.resolution + 1e-9)) + 1
        ny = int(np.floor((y_max - y_min) / self.resolution + 1e-9)) + 1
        return ny, nx

    @property
    def num_points(self) -> int:
        ny, nx = self.shape
        return ny * nx

    def points(self) -> np.ndarray:
        """Grid points z_k in row-major order, index k = row * nx + col"""
        ny, nx = self.shape
        xs = self.bounds[0] + self.resolution * np.arange(nx)
        ys = self.bounds[2] + self.resolution * np.arange(ny)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def translated(self, offset: Sequence[float]) -> "GridSpec":
        dx, dy = float(offset[0]), float(offset[1])
        x_min, x_max, y_min, y_max = self.bounds
        return GridSpec((x_min + dx, x_max + dx, y_min + dy, y_max + dy), self.resolution)


@dataclass(frozen=True, eq=False)
class LocationEstimate:
    position: np.ndarray
    algorithm: Algorithm
    residual: float                    # [s^2]
    iterations: int = 0
    candidates: Optional[Tuple[np.ndarray, np.ndarray]] = None
    flags: Tuple[str, ...] = ()
    history: Tuple[float, ...] = field(default=(), repr=False)


def _tdoa_values(tdoa: TdoaLike) -> np.ndarray:
    if isinstance(tdoa, TdoaMeasurement):
        return tdoa.values
    return np.asarray(tdoa, dtype=float)


def predicted_tdoa(x: np.ndarray, sensors: SensorArray) -> np.ndarray:
    """Forward model for one point (d,) or many points (M, d) -> (n-1,) or (M, n-1)"""
    x = np.asarray(x, dtype=float)
    ranges = np.linalg.norm(x[..., None, :] - sensors.positions, axis=-1)
    return (ranges[..., 1:] - ranges[..., :1]) / SPEED_OF_LIGHT


def tdoa_residual(x: np.ndarray, sensors: SensorArray, tdoa: TdoaLike) -> float:
    """
        Sum over j = 2..n of (predicted_j(x) - measured_j)^2 [s^2]

        Measured values are tau_j - tau_1, the lag of the CAF peak of sensor j
        against the reference, so they are positive when sensor j is farther
        from the emitter. TDoAs signed tau_1 - tau_j must be negated first.
    """
    values = _tdoa_values(tdoa)
    return float(np.sum((predicted_tdoa(x, sensors) - values) ** 2))


def _bancroft_candidates(sensors: SensorArray, values: np.ndarray):
    """Linear parametrization x = P r1 + Q and the roots of the range quadratic in r1"""
    v = sensors.positions
    v1 = v[0]
    d = values * SPEED_OF_LIGHT                       # r_j - r_1
    a = 2.0 * (v[1:] - v1)
    h = np.sum(v[1:] ** 2, axis=1) - np.sum(v1 ** 2) - d ** 2

    if np.linalg.matrix_rank(a) < sensors.dim:
        raise DegenerateGeometryError("singular Bancroft system: sensor geometry is degenerate")
    pinv = np.linalg.pinv(a)
    p = -pinv @ (2.0 * d)
    q = pinv @ h

    # r1^2 = |P r1 + Q - v1|^2
    w = q - v1
    quad = np.array([p @ p - 1.0, 2.0 * (p @ w), w @ w])
    if abs(quad[0]) < 1e-12:
        roots = np.array([-quad[2] / quad[1]]) if quad[1] != 0 else np.array([0.0])
    else:
        roots = np.roots(quad)
    return p, q, roots


def solve_ls_bf(sensors: SensorArray, tdoa: TdoaLike) -> LocationEstimate:
    """
        Least-squares Bancroft fix: two candidate positions from the quadratic in
        the reference range r1, the one with the smaller TDoA residual is kept

        Args:
            sensors (SensorArray): sensor coordinates, row 0 is the reference
            tdoa: TdoaMeasurement or array of tau_j - tau_1 [s]
        Returns:
            out (LocationEstimate): selected fix, candidates hold both root positions
    """
    values = _tdoa_values(tdoa)
    if values.size != sensors.num_sensors - 1:
        raise ValueError(f"expected {sensors.num_sensors - 1} TDoA values, got {values.size}")
    p, q, roots = _bancroft_candidates(sensors, values)

    flags: Tuple[str, ...] = ()
    real = np.abs(np.imag(roots)) <= 1e-9 * np.maximum(1.0, np.abs(roots))
    valid = np.real(roots[real & (np.real(roots) >= 0)])
    if valid.size == 0:
        valid = np.real(roots)
        flags = ("no_real_root",) if not np.all(real) else ("negative_range",)
        logger.debug(f"LS-BF fallback on roots {roots}")

    positions = [p * r1 + q for r1 in valid]
    residuals = [tdoa_residual(x, sensors, values) for x in positions]
    best = int(np.argmin(residuals))
    candidates = (positions[0], positions[-1])
    return LocationEstimate(
        position=positions[best],
        algorithm=Algorithm.LS_BF,
        residual=residuals[best],
        candidates=candidates,
        flags=flags,
    )


def solve_ml_grid(
    sensors: SensorArray, tdoa: TdoaLike, grid: GridSpec, chunk_size: int = 65536
) -> LocationEstimate:
    """
        Grid point with the smallest TDoA residual, lowest row-major index on ties
    """
    values = _tdoa_values(tdoa)
    if sensors.dim != 2:
        raise ValueError("grid search is defined on the 2D plane")
    points = grid.points()

    best_index, best_residual = -1, np.inf
    for start in range(0, points.shape[0], chunk_size):
        chunk = points[start:start + chunk_size]
        errors = np.sum((predicted_tdoa(chunk, sensors) - values) ** 2, axis=1)
        k = int(np.argmin(errors))
        # strict comparison keeps the earlier chunk on ties
        if errors[k] < best_residual:
            best_index, best_residual = start + k, float(errors[k])

    return LocationEstimate(
        position=points[best_index].copy(),
        algorithm=Algorithm.ML,
        residual=best_residual,
    )


def range_difference_model(x: np.ndarray, sensors: SensorArray) -> np.ndarray:
    """h(x) = [|v_j - x| - |v_1 - x|] for j = 2..n [m]"""
    ranges = np.linalg.norm(sensors.positions - x, axis=1)
    return ranges[1:] - ranges[0]


def range_difference_jacobian(x: np.ndarray, sensors: SensorArray,
                              mode: JacobianMode = JacobianMode.ANALYTIC) -> np.ndarray:
    """dh/dx, (n - 1, d)"""
    v = sensors.positions
    if mode is JacobianMode.CONSTANT:
        baselines = v[1:] - v[0]
        return baselines / np.linalg.norm(baselines, axis=1, keepdims=True)
    offsets = x - v
    ranges = np.linalg.norm(offsets, axis=1, keepdims=True)
    if np.any(ranges == 0.0):
        raise DegenerateGeometryError("Jacobian undefined at a sensor position")
    units = offsets / ranges
    return units[1:] - units[0]


def solve_ls_bf_gn(
    sensors: SensorArray,
    tdoa: TdoaLike,
    delta: float = 1e-3,
    k_max: int = 50,
    jacobian: JacobianMode = JacobianMode.ANALYTIC,
    max_halvings: int = 30,
) -> LocationEstimate:
    """
        Gauss-Newton refinement of the range-difference equations seeded by LS-BF

        Args:
            sensors (SensorArray): sensor coordinates
            tdoa: TdoaMeasurement or array of tau_j - tau_1 [s]
            delta (float): stop once the step norm drops below delta [m]
            k_max (int): maximum number of iterations
            jacobian (JacobianMode): analytic derivative of h or the constant baseline rows
            max_halvings (int): step halvings tried before declaring a stall
        Returns:
            out (LocationEstimate): seed (lambda1) or refinement (lambda2), the smaller residual wins
    """
    values = _tdoa_values(tdoa)
    seed = solve_ls_bf(sensors, values)
    u = values * SPEED_OF_LIGHT

    def cost(x):
        return float(np.sum((range_difference_model(x, sensors) - u) ** 2))

    x = seed.position.copy()
    current = cost(x)
    history = [tdoa_residual(x, sensors, values)]
    flags = list(seed.flags)
    iterations = 0

    for _ in range(k_max + 1):
        try:
            jac = range_difference_jacobian(x, sensors, jacobian)
        except DegenerateGeometryError:
            flags.append("rank_deficient")
            break
        step, _, rank, _ = np.linalg.lstsq(jac, -(range_difference_model(x, sensors) - u), rcond=None)
        if rank < sensors.dim:
            flags.append("rank_deficient")
            break
        if np.linalg.norm(step) < delta:
            break
        if iterations >= k_max:
            flags.append("max_iterations")
            break

        # halve the step until the residual does not grow
        scale = 1.0
        for _ in range(max_halvings):
            trial = x + scale * step
            trial_cost = cost(trial)
            if trial_cost <= current:
                break
            scale *= 0.5
        else:
            flags.append("stalled")
            break

        x, current = trial, trial_cost
        iterations += 1
        history.append(tdoa_residual(x, sensors, values))

    if "rank_deficient" in flags:
        logger.warning("GN Jacobian is rank deficient, keeping the LS-BF fix")
        return LocationEstimate(
            position=seed.position, algorithm=Algorithm.LS_BF_GN, residual=seed.residual,
            iterations=iterations, candidates=(seed.position, x), flags=tuple(flags), history=tuple(history),
        )

    refined_residual = tdoa_residual(x, sensors, values)
    # lambda2 on a tie
    if seed.residual < refined_residual:
        position, residual = seed.position, seed.residual
        flags.append("seed_selected")
    else:
        position, residual = x, refined_residual

    return LocationEstimate(
        position=position,
        algorithm=Algorithm.LS_BF_GN,
        residual=residual,
        iterations=iterations,
        candidates=(seed.position, x),
        flags=tuple(flags),
        history=tuple(history),
    )


def average_estimates(estimates: Sequence[LocationEstimate], n_avg: Optional[int] = None) -> np.ndarray:
    """Component-wise mean of N_avg position fixes"""
    if len(estimates) == 0:
        raise ValueError("cannot average an empty list of estimates")
    if n_avg is not None and n_avg != len(estimates):
        raise ValueError(f"expected {n_avg} estimates, got {len(estimates)}")
    return np.mean([e.position for e in estimates], axis=0)


def locate(algorithm: Algorithm, sensors: SensorArray, tdoa: TdoaLike, grid: Optional[GridSpec] = None,
           delta: float = 1e-3, k_max: int = 50,
           jacobian: JacobianMode = JacobianMode.ANALYTIC) -> LocationEstimate:
    """Dispatch to one solver by name"""
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.LS_BF:
        return solve_ls_bf(sensors, tdoa)
    if algorithm is Algorithm.ML:
        if grid is None:
            raise ValueError("ML grid search needs a GridSpec")
        return solve_ml_grid(sensors, tdoa, grid)
    return solve_ls_bf_gn(sensors, tdoa, delta=delta, k_max=k_max, jacobian=jacobian)
