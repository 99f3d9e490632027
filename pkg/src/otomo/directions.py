"""Non-Pauli measurement directions, measurement maps and confidence radii.

Each qubit gets one Bloch direction per global setting; a k-qubit subset
is tomographically complete when the Kronecker products of its direction
columns span R^(3^k).  The measurement map sends a state's orthonormal
Pauli coordinates to outcome probabilities; the largest column norm of
its pseudoinverse (sigma) scales the Hilbert-Schmidt confidence radius.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Optional, Sequence, Union

import numpy as np

from .marginals import AXES, PauliSet

#: Bloch angles for the Pauli axes under v = (sin t cos p, sin t sin p, cos t)
PAULI_ANGLES = {"X": (math.pi / 2, 0.0), "Y": (math.pi / 2, math.pi / 2), "Z": (0.0, 0.0)}


def bloch_vector(theta: float, phi: float) -> np.ndarray:
    st = math.sin(theta)
    return np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])


@dataclass(frozen=True)
class BlochDirection:
    theta: float
    phi: float

    @property
    def vector(self) -> np.ndarray:
        return bloch_vector(self.theta, self.phi)


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """angles[i][alpha] = (theta, phi) for qubit i under setting alpha."""

    n: int
    m: int
    angles: np.ndarray  # shape (n, m, 2)

    def __post_init__(self):
        arr = np.asarray(self.angles, dtype=float)
        if arr.shape != (self.n, self.m, 2):
            raise ValueError(f"angles must have shape ({self.n}, {self.m}, 2)")
        object.__setattr__(self, "angles", arr)

    def direction(self, qubit: int, setting: int) -> BlochDirection:
        t, p = self.angles[qubit, setting]
        return BlochDirection(float(t), float(p))

    def vectors(self) -> np.ndarray:
        """Unit vectors, shape (n, m, 3)."""
        th = self.angles[..., 0]
        ph = self.angles[..., 1]
        return np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1
        )

    def setting_vectors(self, alpha: int) -> np.ndarray:
        """Vectors of one global setting, shape (n, 3)."""
        return self.vectors()[:, alpha, :]

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "m": self.m, "angles": self.angles.tolist()},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DirectionSet":
        d = json.loads(text)
        return cls(int(d["n"]), int(d["m"]), np.array(d["angles"], dtype=float))


def sample_uniform_directions(n: int, m: int, seed: int) -> DirectionSet:
    """Directions drawn i.i.d. uniformly on the sphere (normalised Gaussians)."""
    if n < 1 or m < 1:
        raise ValueError("need n, m >= 1")
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(n, m, 3))
    vec = raw / np.linalg.norm(raw, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(vec[..., 2], -1.0, 1.0))
    phi = np.arctan2(vec[..., 1], vec[..., 0])
    return DirectionSet(n, m, np.stack([theta, phi], axis=-1))


def pauli_to_directions(ps: PauliSet) -> DirectionSet:
    """Embed a Pauli set in the direction formalism (X, Y, Z axis vectors)."""
    angles = np.zeros((ps.n, len(ps.settings), 2))
    for a, s in enumerate(ps.settings):
        for i, ch in enumerate(s):
            angles[i, a] = PAULI_ANGLES[ch]
    return DirectionSet(ps.n, len(ps.settings), angles)


def standard_pauli_pairs() -> PauliSet:
    """The nine two-qubit Pauli settings XX, XY, ..., ZZ."""
    return PauliSet(2, tuple(a + b for a in AXES for b in AXES))


SettingsLike = Union[DirectionSet, PauliSet]


def _as_direction_set(settings: SettingsLike) -> DirectionSet:
    if isinstance(settings, PauliSet):
        return pauli_to_directions(settings)
    return settings


def z_matrix(ds: SettingsLike, subset: Sequence[int], k: int) -> np.ndarray:
    """Columns are the k-fold Kronecker products of the subset's directions,
    one column per setting; square of size 3^k."""
    ds = _as_direction_set(ds)
    subset = list(subset)
    if len(subset) != k:
        raise ValueError("subset size must equal k")
    if ds.m != 3 ** k:
        raise ValueError(f"need m = 3^k = {3 ** k} settings, got {ds.m}")
    vec = ds.vectors()
    cols = []
    for alpha in range(ds.m):
        col = reduce(np.kron, [vec[q, alpha] for q in subset])
        cols.append(col)
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class CompletenessReport:
    complete: bool
    worst_subset: tuple[int, ...]
    worst_det: float
    dets: dict[tuple[int, ...], float] = field(repr=False, default_factory=dict)


def completeness_check(ds: SettingsLike, k: int, tol: float = 1e-8) -> CompletenessReport:
    """Evaluate |det Z_S| on every k-subset; complete iff all exceed tol."""
    ds = _as_direction_set(ds)
    dets = {}
    for subset in itertools.combinations(range(ds.n), k):
        dets[subset] = abs(float(np.linalg.det(z_matrix(ds, subset, k))))
    worst = min(dets, key=dets.get)
    return CompletenessReport(dets[worst] > tol, worst, dets[worst], dets)


# ---------------------------------------------------------------------------
# measurement map and sigma


class IncompleteSettingsError(ValueError):
    """Settings do not span the operator space of the subset."""

    def __init__(self, subset, rank, needed):
        self.subset = tuple(subset)
        self.rank = rank
        self.needed = needed
        super().__init__(
            f"settings are tomographically incomplete on {self.subset}: "
            f"rank {rank} < {needed}"
        )


def _pauli_index_order(k: int) -> list[tuple[int, ...]]:
    """Indices into (I, X, Y, Z)^k graded by weight, then support, then axes."""
    idx = list(itertools.product(range(4), repeat=k))

    def key(t):
        support = tuple(i for i, v in enumerate(t) if v != 0)
        return (len(support), support, t)

    return sorted(idx, key=key)


def pauli_basis_ops(k: int) -> list[np.ndarray]:
    """Orthonormal Hermitian basis: Pauli products over sqrt(2^k), in the
    graded order used for measurement-map columns."""
    s0 = np.eye(2, dtype=complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    single = [s0, sx, sy, sz]
    norm = math.sqrt(2 ** k)
    return [
        reduce(np.kron, [single[i] for i in t]) / norm for t in _pauli_index_order(k)
    ]


@dataclass(frozen=True, eq=False)
class MeasurementMap:
    """Linear map from orthonormal Pauli coordinates of a |S|-qubit state to
    the outcome probabilities of m equally weighted settings."""

    subset: tuple[int, ...]
    matrix: np.ndarray       # (m * 2^k, 4^k)
    pinv: np.ndarray         # (4^k, m * 2^k)
    sigma: float
    n_settings: int

    @property
    def k(self) -> int:
        return len(self.subset)


def build_measurement_map(settings: SettingsLike, subset: Sequence[int]) -> MeasurementMap:
    """Map for the projective measurements of `settings` restricted to `subset`.

    Row (alpha, o) holds the orthonormal-Pauli coordinates of the POVM
    element (1/m) prod_q (1 + o_q v_q . sigma)/2; outcome strings run over
    {+,-}^k with qubit subset[0] as the most significant position and '+'
    first.  Raises IncompleteSettingsError when the rows do not span the
    operator space.
    """
    ds = _as_direction_set(settings)
    subset = tuple(sorted(subset))
    k = len(subset)
    if any(q < 0 or q >= ds.n for q in subset):
        raise ValueError(f"subset {subset} out of range for n={ds.n}")
    m = ds.m
    vec = ds.vectors()
    order = _pauli_index_order(k)
    dim = 4 ** k
    rows = np.zeros((m * 2 ** k, dim))
    outcomes = list(itertools.product((1, -1), repeat=k))
    scale = 1.0 / (m * math.sqrt(2 ** k))
    for alpha in range(m):
        vs = [vec[q, alpha] for q in subset]
        for oi, o in enumerate(outcomes):
            # tr(E P) factorises per qubit: 1 for identity, o_q v_q[a] for axis a
            row = np.empty(dim)
            for ci, t in enumerate(order):
                val = 1.0
                for q in range(k):
                    if t[q] != 0:
                        val *= o[q] * vs[q][t[q] - 1]
                row[ci] = val
            rows[alpha * 2 ** k + oi] = scale * row
    u, s, vt = np.linalg.svd(rows, full_matrices=False)
    cutoff = 1e-10 * s[0]
    rank = int(np.sum(s > cutoff))
    if rank < dim:
        raise IncompleteSettingsError(subset, rank, dim)
    pinv = (vt.T * (1.0 / s)) @ u.T  # Moore-Penrose; all s above cutoff here
    sigma = float(np.max(np.linalg.norm(pinv, axis=0)))
    return MeasurementMap(subset, rows, pinv, sigma, m)


@dataclass(frozen=True)
class SigmaReport:
    sigma_max: float
    per_subset: dict[tuple[int, ...], float]


def sigma_max(settings: SettingsLike, k: int) -> SigmaReport:
    """Worst sigma over all k-subsets of the qubits."""
    ds = _as_direction_set(settings)
    per = {}
    for subset in itertools.combinations(range(ds.n), k):
        per[subset] = build_measurement_map(ds, subset).sigma
    return SigmaReport(max(per.values()), per)


# ---------------------------------------------------------------------------
# confidence radii and sample counts


@dataclass(frozen=True)
class ConfidenceParams:
    """Total sample count N and failure probability delta."""

    N: int
    delta: float

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need N >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("need 0 < delta < 1")

    @property
    def u(self) -> float:
        return 2.0 * math.log(8.0 / self.delta) / (9.0 * self.N)

    @property
    def epsilon(self) -> float:
        u = self.u
        return 3.0 * math.sqrt(u) * (math.sqrt(u) + math.sqrt(u + 1.0))


def confidence_radius(cp: ConfidenceParams, sigma: float) -> float:
    """Hilbert-Schmidt radius epsilon(N, delta) * sigma."""
    return cp.epsilon * sigma


def samples_for_radius(sigma: float, radius: float, delta: float) -> int:
    """Smallest N with confidence radius <= radius, by bisection (the radius
    decreases monotonically in N)."""
    if sigma <= 0 or radius <= 0:
        raise ValueError("sigma and radius must be positive")

    def rad(n: int) -> float:
        return confidence_radius(ConfidenceParams(n, delta), sigma)

    lo, hi = 1, 1
    while rad(hi) > radius:
        lo = hi
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if rad(mid) <= radius:
            hi = mid
        else:
            lo = mid + 1
    return hi


def _u_for_relative_radius(x: float) -> float:
    """Solve 3 sqrt(u) (sqrt(u) + sqrt(u + 1)) = x for u; closed form
    u = x^2 / (9 + 6x)."""
    return x * x / (9.0 + 6.0 * x)


def sample_ratio(sigma: float, baseline: float, radius: float) -> float:
    """Real-valued N(sigma) / N(baseline) at a fixed confidence radius.

    N is proportional to log(8/delta)/u with u fixed by radius/sigma, so
    the ratio is exactly independent of delta.
    """
    if min(sigma, baseline, radius) <= 0:
        raise ValueError("sigma, baseline and radius must be positive")
    return _u_for_relative_radius(radius / baseline) / _u_for_relative_radius(
        radius / sigma
    )


# ---------------------------------------------------------------------------
# portfolio objective and direction optimisation


def all_subset_dets(ds: SettingsLike, k: int) -> dict[tuple[int, ...], float]:
    """|det Z_S| for every k-subset, with the determinants batched."""
    ds = _as_direction_set(ds)
    vec = ds.vectors()
    subsets = list(itertools.combinations(range(ds.n), k))
    mats = []
    for subset in subsets:
        cols = vec[subset[0]]
        for q in subset[1:]:
            cols = np.einsum("ap,aq->apq", cols, vec[q]).reshape(ds.m, -1)
        mats.append(cols.T)
    dets = np.abs(np.linalg.det(np.stack(mats)))
    return dict(zip(subsets, dets.tolist()))


def portfolio_objective(ds: SettingsLike, k: int, w1: float, w2: float) -> float:
    """w1 * sum |det Z_S| - w2 * sum |det Z_S|^2 over all k-subsets."""
    dets = np.array(list(all_subset_dets(ds, k).values()))
    return float(w1 * dets.sum() - w2 * (dets ** 2).sum())


def portfolio_gradient(ds: SettingsLike, k: int, w1: float, w2: float) -> np.ndarray:
    """Analytic gradient of the portfolio objective with respect to the
    angles, via d|det Z| = |det Z| tr(Z^-1 dZ); shape (n, m, 2)."""
    ds = _as_direction_set(ds)
    n, m = ds.n, ds.m
    th = ds.angles[..., 0]
    ph = ds.angles[..., 1]
    vec = ds.vectors()
    # derivative of the unit vector wrt theta and phi
    dth = np.stack(
        [np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=-1
    )
    dph = np.stack(
        [-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.zeros_like(th)], axis=-1
    )
    grad = np.zeros((n, m, 2))
    for subset in itertools.combinations(range(n), k):
        Z = z_matrix(ds, subset, k)
        det = float(np.linalg.det(Z))
        absd = abs(det)
        if absd < 1e-300:
            continue
        Zinv = np.linalg.inv(Z)
        weight = w1 - 2.0 * w2 * absd
        for q in subset:
            for alpha in range(m):
                for pi, dv in ((0, dth[q, alpha]), (1, dph[q, alpha])):
                    factors = [
                        dv if r == q else vec[r, alpha] for r in subset
                    ]
                    dcol = reduce(np.kron, factors)
                    # only column alpha moves: tr(Z^-1 dZ) = Z^-1[alpha,:] @ dcol
                    trace = float(Zinv[alpha, :] @ dcol)
                    grad[q, alpha, pi] += weight * absd * trace
    return grad


@dataclass(frozen=True)
class OptimizerConfig:
    """Weights must satisfy w1^2 + w2^2 = 1; constraint is "free" or a list
    of per-qubit partitions of the settings into orthonormal triples."""

    w1: float
    w2: float
    restarts: int = 20
    max_iters: int = 120
    grad_step: float = 1e-5
    constraint: Union[str, tuple] = "free"

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("weights must be non-negative")
        if abs(self.w1 ** 2 + self.w2 ** 2 - 1.0) > 1e-9:
            raise ValueError("weights must satisfy w1^2 + w2^2 = 1")


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    directions: DirectionSet
    objective: float
    sigma_max: float


def _rotation(a: float, b: float, c: float) -> np.ndarray:
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    rz1 = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz2 = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rz1 @ ry @ rz2


def _vectors_to_angles(vecs: np.ndarray) -> np.ndarray:
    theta = np.arccos(np.clip(vecs[..., 2], -1.0, 1.0))
    phi = np.arctan2(vecs[..., 1], vecs[..., 0])
    return np.stack([theta, phi], axis=-1)


#: parallel classes of the 3x3 grid (rows, columns, diagonals, anti-diagonals);
#: giving neighbouring qubits different classes avoids aligned triples
_GRID_CLASSES = (
    ((0, 1, 2), (3, 4, 5), (6, 7, 8)),
    ((0, 3, 6), (1, 4, 7), (2, 5, 8)),
    ((0, 4, 8), (1, 5, 6), (2, 3, 7)),
    ((0, 5, 7), (1, 3, 8), (2, 4, 6)),
)


def default_partitions(n: int, m: int) -> tuple:
    if m % 3:
        raise ValueError("orthonormal constraint needs m divisible by 3")
    if m == 9:
        return tuple(_GRID_CLASSES[q % 4] for q in range(n))
    one = tuple(tuple(range(3 * t, 3 * t + 3)) for t in range(m // 3))
    return tuple(one for _ in range(n))


def optimize_directions(
    n: int, k: int, cfg: OptimizerConfig, seed: int
) -> OptimizationResult:
    """Maximise the portfolio objective by multi-start gradient ascent.

    Gradients are central differences with step cfg.grad_step; each restart
    starts from fresh uniform directions (or random rotations under the
    orthonormal constraint) and climbs with a backtracking step size.  The
    best restart by objective is returned and is always checked for
    tomographic completeness.
    """
    m = 3 ** k
    orthonormal = cfg.constraint != "free"
    partitions = (
        default_partitions(n, m)
        if cfg.constraint in ("free", "orthonormal")
        else cfg.constraint
    )

    def params_to_ds(params: np.ndarray) -> DirectionSet:
        if not orthonormal:
            return DirectionSet(n, m, params.reshape(n, m, 2))
        angles = np.zeros((n, m, 2))
        p = params.reshape(n, -1, 3)
        for q in range(n):
            for t, triple in enumerate(partitions[q]):
                rot = _rotation(*p[q, t])
                for j, alpha in enumerate(triple):
                    angles[q, alpha] = _vectors_to_angles(rot[:, j])
        return DirectionSet(n, m, angles)

    def objective(params: np.ndarray) -> float:
        return portfolio_objective(params_to_ds(params), k, cfg.w1, cfg.w2)

    nparams = n * m * 2 if not orthonormal else n * (m // 3) * 3
    results = []
    for r in range(cfg.restarts):
        rng = np.random.default_rng([seed, r])
        if not orthonormal:
            params = sample_uniform_directions(n, m, int(rng.integers(2 ** 32))).angles.ravel().copy()
        else:
            params = rng.uniform(0, 2 * math.pi, size=nparams)
        f = objective(params)
        step = 0.5
        for _ in range(cfg.max_iters):
            grad = np.empty_like(params)
            h = cfg.grad_step
            for i in range(params.size):
                orig = params[i]
                params[i] = orig + h
                fp = objective(params)
                params[i] = orig - h
                fm = objective(params)
                params[i] = orig
                grad[i] = (fp - fm) / (2 * h)
            norm = np.linalg.norm(grad)
            if norm < 1e-12:
                break
            improved = False
            while step > 1e-9:
                trial = params + step * grad / norm
                ft = objective(trial)
                if ft > f:
                    params, f = trial, ft
                    improved = True
                    step = min(step * 1.6, 1.0)  # cap to avoid wild leaps
                    break
                step *= 0.5
            if not improved:
                break
        results.append((f, params.copy()))

    # best restart whose directions are actually complete on every subset
    for f, params in sorted(results, key=lambda t: -t[0]):
        ds = params_to_ds(params)
        if completeness_check(ds, k).complete:
            return OptimizationResult(ds, f, sigma_max(ds, k).sigma_max)
    raise RuntimeError("no restart produced tomographically complete directions")


# ---------------------------------------------------------------------------
# the published six-qubit direction table

#: [setting][qubit] = (theta, phi); nine settings for six qubits whose
#: per-qubit directions split into three orthonormal bases
TABLE_A1_ANGLES = (
    ((1.34851, -1.7187), (0.74451, 1.85896), (2.81234, -1.66384), (1.22444, -2.24737), (2.62025, -1.56922), (1.61654, 2.41608)),
    ((1.62452, -0.16006), (0.83181, -1.13389), (1.24291, -1.56911), (1.86266, 1.89939), (0.78386, 2.4564), (0.32988, 0.14995)),
    ((0.2289, 1.17782), (0.83405, -0.17509), (2.33714, 0.27682), (0.74332, -0.27308), (2.61964, -1.73379), (1.32478, -1.55164)),
    ((0.88628, 0.06155), (0.98653, -2.38924), (2.63105, -1.5318), (0.94539, 2.20137), (1.04552, 0.26519), (1.65486, 1.47209)),
    ((0.9695, 2.22663), (1.64509, 0.36903), (1.06042, -1.5596), (1.70326, -2.5176), (1.60308, 3.08691), (2.42079, -0.27072)),
    ((1.01301, -2.04348), (1.83028, 0.04163), (2.21489, 2.65553), (2.12737, 2.11179), (1.05058, -1.644), (1.56836, -2.29642)),
    ((2.70374, 0.28677), (2.08781, -1.20394), (1.16136, 1.41667), (2.56575, -0.74011), (2.09094, 1.49761), (0.04581, 2.36286)),
    ((1.69042, -1.54368), (1.55645, -1.52536), (1.54184, 3.13342), (2.56242, -2.33567), (1.532, 3.04614), (0.91042, 0.21545)),
    ((1.9898, 3.11515), (2.88169, -3.04215), (1.58265, -3.12376), (1.08649, -2.97173), (2.09094, 1.49761), (1.2526, 3.01513)),
)

#: per-qubit partition of the nine settings into orthonormal triples
#: (0-based setting indices)
TABLE_A1_PARTITIONS = (
    ((0, 1, 2), (3, 4, 5), (6, 7, 8)),
    ((0, 1, 4), (2, 3, 6), (5, 7, 8)),
    ((0, 1, 7), (2, 5, 6), (3, 4, 8)),
    ((0, 2, 3), (1, 7, 8), (4, 5, 6)),
    ((0, 4, 8), (1, 3, 6), (2, 5, 7)),
    ((0, 5, 6), (1, 3, 8), (2, 4, 7)),
)


def load_named_direction_set(name: str) -> DirectionSet:
    if name == "paper_table_a1":
        angles = np.zeros((6, 9, 2))
        for a in range(9):
            for q in range(6):
                angles[q, a] = TABLE_A1_ANGLES[a][q]
        return DirectionSet(6, 9, angles)
    raise ValueError(f"unknown direction set: {name!r}")
