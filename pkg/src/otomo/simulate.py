"""State preparation, sampling and marginal reconstruction.

Simulates the full experiment loop: build a (possibly noisy) Dicke state,
compute Born probabilities for product projective settings, draw counts,
marginalise them onto qubit subsets, and reconstruct the marginals by
linear inversion or by maximum-likelihood estimation over a physical
parametrisation, scored with Uhlmann fidelity and Monte-Carlo error bars.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .directions import (
    MeasurementMap,
    SettingsLike,
    _as_direction_set,
    build_measurement_map,
    pauli_basis_ops,
)
from .marginals import PauliSet

MAX_QUBITS = 12  # dense density matrices up to 4096 x 4096

PSD_TOL = -1e-9
STATE_TOL = 1e-8


# ---------------------------------------------------------------------------
# states


def dicke_vector(n: int, m: int) -> np.ndarray:
    """Amplitude vector of the Dicke state: equal weight on all n-bit
    computational states with exactly m ones."""
    if not 0 <= m <= n:
        raise ValueError("need 0 <= m <= n")
    if n > MAX_QUBITS:
        raise ValueError(f"state size capped at {MAX_QUBITS} qubits")
    vec = np.zeros(2 ** n, dtype=complex)
    norm = 1.0 / math.sqrt(math.comb(n, m))
    for idx in range(2 ** n):
        if idx.bit_count() == m:
            vec[idx] = norm
    return vec


def dicke_state(n: int, m: int) -> np.ndarray:
    """Density matrix of the pure Dicke state."""
    v = dicke_vector(n, m)
    return np.outer(v, v.conj())


def noise_state(p: float) -> np.ndarray:
    """Six-qubit noise model around the three-excitation Dicke state.

    Mixes the target state with the higher-order emission background
    (4/7 of the target plus 3/14 each of the two- and four-excitation
    Dicke states); the raw combination p*target + (1-p)/2*background has
    trace p + (1-p)/2, so the result is renormalised to unit trace.
    """
    if not 0 <= p <= 1:
        raise ValueError("need 0 <= p <= 1")
    rho3 = dicke_state(6, 3)
    noise = (
        4.0 / 7.0 * rho3
        + 3.0 / 14.0 * (dicke_state(6, 2) + dicke_state(6, 4))
    )
    raw = p * rho3 + 0.5 * (1.0 - p) * noise
    return raw / np.trace(raw).real


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on the sorted qubit list `keep`."""
    dim = rho.shape[0]
    n = dim.bit_length() - 1
    if rho.shape != (dim, dim) or 2 ** n != dim:
        raise ValueError("rho must be square with power-of-two dimension")
    keep = sorted(keep)
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"invalid qubits {keep} for n={n}")
    t = rho.reshape((2,) * (2 * n))
    traced = [q for q in range(n) if q not in keep]
    for offset, q in enumerate(traced):
        # row axis q has lost `offset` earlier axes, the column axis twice that
        t = np.trace(t, axis1=q - offset, axis2=q + n - 2 * offset)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def check_density_matrix(rho: np.ndarray, tol: float = 1e-10) -> None:
    """Raise unless rho is Hermitian, unit-trace and PSD within tolerance."""
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("matrix is not Hermitian within tolerance")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError("matrix does not have unit trace")
    ev = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    if ev.min() < PSD_TOL:
        raise ValueError(f"matrix has negative eigenvalue {ev.min():.3e}")


# ---------------------------------------------------------------------------
# Born probabilities and sampling


def _basis_rotation(v: np.ndarray) -> np.ndarray:
    """2x2 unitary whose rows are the +1/-1 eigenvectors of v . sigma."""
    theta = math.acos(max(-1.0, min(1.0, float(v[2]))))
    phi = math.atan2(float(v[1]), float(v[0]))
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    up = np.array([c, s * np.exp(1j * phi)])
    dn = np.array([s, -c * np.exp(1j * phi)])
    return np.stack([up.conj(), dn.conj()])


def setting_vectors(settings: SettingsLike, alpha: int) -> np.ndarray:
    """Bloch vectors (n, 3) of global setting alpha."""
    return _as_direction_set(settings).setting_vectors(alpha)


def born_probabilities(state: np.ndarray, setting: np.ndarray) -> np.ndarray:
    """Outcome probabilities of one product setting, indexed by outcome
    strings over {+,-} with qubit 0 the most significant position.

    `state` may be an amplitude vector or a density matrix; `setting` is an
    (n, 3) array of Bloch vectors.
    """
    setting = np.asarray(setting, dtype=float)
    n = setting.shape[0]
    rotations = [_basis_rotation(setting[q]) for q in range(n)]
    if state.ndim == 1:
        amp = state.reshape((2,) * n)
        for q in range(n):
            amp = np.tensordot(rotations[q], amp, axes=([1], [q]))
            amp = np.moveaxis(amp, 0, q)
        p = np.abs(amp.reshape(-1)) ** 2
    else:
        t = state.reshape((2,) * (2 * n))
        for q in range(n):
            u = rotations[q]
            t = np.tensordot(u, t, axes=([1], [q]))
            t = np.moveaxis(t, 0, q)
            t = np.tensordot(u.conj(), t, axes=([1], [q + n]))
            t = np.moveaxis(t, 0, q + n)
        mat = t.reshape(2 ** n, 2 ** n)
        p = np.diag(mat).real
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def outcome_string(index: int, n: int) -> str:
    return "".join("+" if index >> (n - 1 - i) & 1 == 0 else "-" for i in range(n))


def outcome_index(s: str) -> int:
    idx = 0
    for ch in s:
        idx = idx * 2 + (0 if ch == "+" else 1)
    return idx


def settings_id(settings: SettingsLike) -> str:
    """Stable hash identifying a measurement plan."""
    if isinstance(settings, PauliSet):
        payload = "pauli:" + ",".join(settings.settings)
    else:
        payload = "directions:" + settings.to_json()
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class CountsRecord:
    """Counts per setting per n-qubit outcome, plus the settings hash."""

    settings_ref: str
    n: int
    counts: tuple[np.ndarray, ...]  # each of shape (2^n,), integer

    @property
    def totals(self) -> np.ndarray:
        return np.array([int(c.sum()) for c in self.counts])

    def to_json(self) -> str:
        def num(v):
            f = float(v)
            return int(f) if f.is_integer() else f

        payload = {
            "settings": self.settings_ref,
            "n": self.n,
            "counts": [
                {
                    "setting": a,
                    "outcomes": {
                        outcome_string(i, self.n): num(v)
                        for i, v in enumerate(c)
                        if v
                    },
                }
                for a, c in enumerate(self.counts)
            ],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CountsRecord":
        d = json.loads(text)
        n = int(d["n"])
        entries = sorted(d["counts"], key=lambda e: e["setting"])
        integral = all(
            float(v).is_integer() for e in entries for v in e["outcomes"].values()
        )
        dtype = np.int64 if integral else np.float64
        counts = []
        for e in entries:
            arr = np.zeros(2 ** n, dtype=dtype)
            for s, v in e["outcomes"].items():
                arr[outcome_index(s)] = v
            counts.append(arr)
        return cls(d["settings"], n, tuple(counts))


def simulate_counts(
    state: np.ndarray,
    settings: SettingsLike,
    shots_per_setting: int,
    seed: int,
    model: str = "multinomial",
) -> CountsRecord:
    """Sample counts for every setting: multinomial totals are exactly the
    shot count; the poisson model draws each outcome with mean shots*p."""
    if shots_per_setting < 1:
        raise ValueError("need shots >= 1")
    if model not in ("multinomial", "poisson"):
        raise ValueError(f"unknown sampling model {model!r}")
    ds = _as_direction_set(settings)
    rng = np.random.default_rng(seed)
    counts = []
    for alpha in range(ds.m):
        p = born_probabilities(state, ds.setting_vectors(alpha))
        if model == "multinomial":
            counts.append(rng.multinomial(shots_per_setting, p).astype(np.int64))
        else:
            counts.append(rng.poisson(shots_per_setting * p).astype(np.int64))
    return CountsRecord(settings_id(settings), ds.n, tuple(counts))


def exact_counts(state: np.ndarray, settings: SettingsLike, shots: int) -> CountsRecord:
    """Idealised record with real-valued counts shots * p per outcome; used
    for exact-input pipelines (JSON serialisation truncates to integers)."""
    ds = _as_direction_set(settings)
    counts = []
    for alpha in range(ds.m):
        p = born_probabilities(state, ds.setting_vectors(alpha))
        counts.append(shots * p)
    return CountsRecord(settings_id(settings), ds.n, tuple(counts))


@dataclass(frozen=True, eq=False)
class MarginalCounts:
    subset: tuple[int, ...]
    counts: np.ndarray       # (m, 2^k)
    frequencies: np.ndarray  # rows sum to 1


def marginalize_counts(rec: CountsRecord, subset: Sequence[int]) -> MarginalCounts:
    """Sum counts over the outcomes of all qubits outside `subset`."""
    subset = tuple(sorted(subset))
    if not subset or subset[0] < 0 or subset[-1] >= rec.n:
        raise ValueError(f"invalid subset {subset} for n={rec.n}")
    k = len(subset)
    rows = []
    for alpha, c in enumerate(rec.counts):
        t = np.asarray(c).reshape((2,) * rec.n)
        other = tuple(q for q in range(rec.n) if q not in subset)
        marg = t.sum(axis=other) if other else t
        rows.append(marg.reshape(2 ** k))
        if rows[-1].sum() == 0:
            raise ValueError(f"setting {alpha} has zero total counts")
    counts = np.stack(rows)
    freqs = counts / counts.sum(axis=1, keepdims=True)
    return MarginalCounts(subset, counts, freqs)


# ---------------------------------------------------------------------------
# reconstruction


@dataclass(frozen=True, eq=False)
class LinearInversionResult:
    matrix: np.ndarray
    psd: bool
    hermiticity_error: float


def linear_inversion(freqs: np.ndarray, mmap: MeasurementMap) -> LinearInversionResult:
    """Estimate = pseudoinverse applied to the stacked frequency vector,
    reshaped into a Hermitian matrix (may fail positivity; flagged)."""
    f = np.asarray(freqs, dtype=float).reshape(-1)
    if f.size != mmap.matrix.shape[0]:
        raise ValueError(
            f"frequency vector has {f.size} entries, map has {mmap.matrix.shape[0]} rows"
        )
    # frequencies arrive normalised per setting; the map's POVM carries the
    # 1/m setting weights, so rescale to outcome probabilities of the POVM
    coords = mmap.pinv @ (f / mmap.n_settings)
    basis = pauli_basis_ops(mmap.k)
    rho = sum(c * b for c, b in zip(coords, basis))
    herm_err = float(np.max(np.abs(rho - rho.conj().T)))
    rho = (rho + rho.conj().T) / 2
    ev = np.linalg.eigvalsh(rho)
    return LinearInversionResult(rho, bool(ev.min() >= PSD_TOL), herm_err)


def _projectors_for_subset(settings: SettingsLike, subset: Sequence[int]) -> np.ndarray:
    """Stack of projector matrices, shape (m * 2^k, 2^k, 2^k), ordered like
    the measurement-map rows but without the 1/m weight."""
    ds = _as_direction_set(settings)
    subset = tuple(sorted(subset))
    k = len(subset)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    eye = np.eye(2, dtype=complex)
    vec = ds.vectors()
    out = []
    for alpha in range(ds.m):
        singles = []
        for q in subset:
            v = vec[q, alpha]
            vs = v[0] * sx + v[1] * sy + v[2] * sz
            singles.append(((eye + vs) / 2, (eye - vs) / 2))
        for o in itertools.product(range(2), repeat=k):
            P = singles[0][o[0]]
            for j in range(1, k):
                P = np.kron(P, singles[j][o[j]])
            out.append(P)
    return np.stack(out)


def _t_to_matrix(t: np.ndarray, dim: int) -> np.ndarray:
    """Lower-triangular T from the real parameter vector: diagonal first,
    then (real, imag) pairs row-major below the diagonal."""
    T = np.zeros((dim, dim), dtype=complex)
    T[np.diag_indices(dim)] = t[:dim]
    pos = dim
    for i in range(1, dim):
        for j in range(i):
            T[i, j] = t[pos] + 1j * t[pos + 1]
            pos += 2
    return T


def _matrix_to_t(T: np.ndarray) -> np.ndarray:
    dim = T.shape[0]
    t = np.zeros(dim * dim)
    t[:dim] = np.real(np.diag(T))
    pos = dim
    for i in range(1, dim):
        for j in range(i):
            t[pos] = T[i, j].real
            t[pos + 1] = T[i, j].imag
            pos += 2
    return t


def _rho_from_t(t: np.ndarray, dim: int) -> np.ndarray:
    T = _t_to_matrix(t, dim)
    G = T.conj().T @ T
    return G / np.trace(G).real


DENOM_FLOOR = 1e-12


def mle_cost(
    t: np.ndarray, counts: np.ndarray, projectors: np.ndarray
) -> float:
    """Gaussian-statistics cost: 1/2 sum N_a (p_obs - p_model)^2 / p_model."""
    dim = projectors.shape[1]
    rho = _rho_from_t(t, dim)
    q = np.einsum("oij,ji->o", projectors, rho).real
    q = np.maximum(q, DENOM_FLOOR)
    m = counts.shape[0]
    totals = counts.sum(axis=1)
    p_obs = counts / totals[:, None]
    qr = q.reshape(m, -1)
    return float(0.5 * np.sum(totals[:, None] * (p_obs - qr) ** 2 / qr))


_T_BASIS_CACHE: dict[int, list[np.ndarray]] = {}


def _t_basis(dim: int) -> list[np.ndarray]:
    if dim not in _T_BASIS_CACHE:
        basis = []
        for pi in range(dim * dim):
            dt = np.zeros(dim * dim)
            dt[pi] = 1.0
            basis.append(_t_to_matrix(dt, dim))
        _T_BASIS_CACHE[dim] = basis
    return _T_BASIS_CACHE[dim]


def mle_cost_gradient(
    t: np.ndarray, counts: np.ndarray, projectors: np.ndarray
) -> np.ndarray:
    """Analytic gradient of mle_cost with respect to the T parameters."""
    dim = projectors.shape[1]
    T = _t_to_matrix(t, dim)
    G = T.conj().T @ T
    tau = np.trace(G).real
    rho = G / tau
    q = np.einsum("oij,ji->o", projectors, rho).real
    q = np.maximum(q, DENOM_FLOOR)
    totals = counts.sum(axis=1)
    p_obs = (counts / totals[:, None]).reshape(-1)
    w = np.repeat(totals, counts.shape[1])
    # d/dq of 1/2 w (p-q)^2/q
    dL_dq = -0.5 * w * (p_obs - q) * (p_obs + q) / q ** 2
    grad = np.zeros(t.size)
    for pi, E in enumerate(_t_basis(dim)):
        dG = E.conj().T @ T + T.conj().T @ E
        dtau = np.trace(dG).real
        drho = dG / tau - rho * (dtau / tau)
        dq = np.einsum("oij,ji->o", projectors, drho).real
        grad[pi] = float(dL_dq @ dq)
    return grad


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    subset: tuple[int, ...]
    estimate: np.ndarray
    method: str
    cost: Optional[float]
    iterations: int

    def to_json_dict(self) -> dict:
        return {
            "subset": list(self.subset),
            "method": self.method,
            "cost": self.cost,
            "iterations": self.iterations,
            "matrix": [
                [[float(z.real), float(z.imag)] for z in row]
                for row in self.estimate
            ],
        }


def _psd_projected_init(
    counts: np.ndarray, settings: SettingsLike, subset: Sequence[int]
) -> np.ndarray:
    mmap = build_measurement_map(settings, subset)
    freqs = counts / counts.sum(axis=1, keepdims=True)
    rho = linear_inversion(freqs.reshape(-1), mmap).matrix
    ev, U = np.linalg.eigh(rho)
    ev = np.maximum(ev, 1e-6)
    rho = (U * ev) @ U.conj().T
    rho /= np.trace(rho).real
    # lower-triangular T with T^dag T = rho, via the exchange-reversed Cholesky
    dim = rho.shape[0]
    J = np.eye(dim)[::-1]
    L = np.linalg.cholesky(J @ rho @ J)
    T = J @ L.conj().T @ J
    return _matrix_to_t(T)


def mle_reconstruct(
    counts_per_setting: np.ndarray,
    settings: SettingsLike,
    subset: Sequence[int],
    init: Optional[np.ndarray] = None,
    restarts: int = 3,
    seed: int = 0,
    max_iters: int = 5000,
) -> ReconstructionResult:
    """Minimise the Gaussian-statistics cost over physical states.

    States are parametrised as T^dag T / tr(T^dag T) with lower-triangular
    T, so the estimate is positive semidefinite with unit trace by
    construction.  Descent follows the analytic gradient with backtracking
    line search and stops when the cost decrease falls below
    1e-9 * (1 + |L|); `restarts` perturbed copies of the initial point are
    tried and the best final cost wins.
    """
    subset = tuple(sorted(subset))
    counts = np.asarray(counts_per_setting, dtype=float)
    if counts.ndim != 2:
        raise ValueError("counts must be (settings, outcomes)")
    if np.any(counts.sum(axis=1) <= 0):
        raise ValueError("every setting needs positive total counts")
    projectors = _projectors_for_subset(settings, subset)
    dim = 2 ** len(subset)
    if projectors.shape[0] != counts.size:
        raise ValueError(
            f"counts size {counts.size} does not match {projectors.shape[0]} projectors"
        )
    if init is not None:
        build_measurement_map(settings, subset)  # validates completeness
        t0 = np.asarray(init, dtype=float)
    else:
        t0 = _psd_projected_init(counts, settings, subset)
    rng = np.random.default_rng(seed)
    best_t, best_cost, best_iters = None, math.inf, 0
    for r in range(restarts):
        t = t0.copy() if r == 0 else t0 + rng.normal(scale=0.01 * (1 + abs(t0).max()), size=t0.size)
        cost = mle_cost(t, counts, projectors)
        step = 0.1
        iters = 0
        for iters in range(1, max_iters + 1):
            grad = mle_cost_gradient(t, counts, projectors)
            gnorm = np.linalg.norm(grad)
            if gnorm < 1e-14:
                break
            improved = False
            while step > 1e-14:
                trial = t - step * grad / gnorm
                c2 = mle_cost(trial, counts, projectors)
                if c2 < cost:
                    delta = cost - c2
                    t, cost = trial, c2
                    improved = True
                    step *= 1.6
                    if delta < 1e-9 * (1.0 + abs(cost)):
                        improved = False  # converged
                    break
                step *= 0.5
            if not improved:
                break
        if cost < best_cost:
            best_t, best_cost, best_iters = t, cost, iters
    rho = _rho_from_t(best_t, dim)
    return ReconstructionResult(subset, rho, "mle", best_cost, best_iters)


# ---------------------------------------------------------------------------
# scoring


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 in [0, 1]."""
    if rho.shape != sigma.shape:
        raise ValueError("dimension mismatch")
    out = []
    for M in (rho, sigma):
        if np.max(np.abs(M - M.conj().T)) > STATE_TOL:
            raise ValueError("input is not Hermitian within tolerance")
        if abs(np.trace(M).real - 1.0) > STATE_TOL:
            raise ValueError("input does not have unit trace")
        ev, U = np.linalg.eigh((M + M.conj().T) / 2)
        if ev.min() < -STATE_TOL:
            raise ValueError(f"input has negative eigenvalue {ev.min():.3e}")
        out.append(((U * np.maximum(ev, 0.0)) @ U.conj().T, ev, U))
    (rho, ev_r, U_r), (sigma, _, _) = out
    sqrt_rho = (U_r * np.sqrt(np.maximum(ev_r, 0.0))) @ U_r.conj().T
    inner = sqrt_rho @ sigma @ sqrt_rho
    inner = (inner + inner.conj().T) / 2
    ev = np.maximum(np.linalg.eigvalsh(inner), 0.0)
    f = float(np.sum(np.sqrt(ev)) ** 2)
    return min(f, 1.0)


@dataclass(frozen=True)
class MonteCarloEntry:
    mean: float
    std: float
    samples: tuple[float, ...]


def monte_carlo_errors(
    rec: CountsRecord,
    settings: SettingsLike,
    subsets: Sequence[Sequence[int]],
    reference: np.ndarray,
    repeats: int = 100,
    seed: int = 0,
) -> dict[tuple[int, ...], MonteCarloEntry]:
    """Poisson-resample the record, re-run the MLE per subset and report the
    spread of the fidelity against the reference state's marginals."""
    if repeats < 1:
        raise ValueError("need repeats >= 1")
    seeds = np.random.SeedSequence(seed).spawn(repeats)
    fids: dict[tuple[int, ...], list[float]] = {
        tuple(sorted(s)): [] for s in subsets
    }
    refs = {
        sub: partial_trace(reference, sub) for sub in fids
    }
    for rep in range(repeats):
        rng = np.random.default_rng(seeds[rep])
        resampled = CountsRecord(
            rec.settings_ref,
            rec.n,
            tuple(rng.poisson(np.maximum(c, 0)).astype(np.int64) for c in rec.counts),
        )
        for sub in fids:
            marg = marginalize_counts(resampled, sub)
            est = mle_reconstruct(marg.counts, settings, sub, restarts=1)
            fids[sub].append(fidelity(est.estimate, refs[sub]))
    return {
        sub: MonteCarloEntry(
            float(np.mean(v)), float(np.std(v)), tuple(float(x) for x in v)
        )
        for sub, v in fids.items()
    }
