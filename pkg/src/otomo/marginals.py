"""Pauli measurement design for overlapping tomography of qubit marginals.

A connectivity (hyper)graph records which subsets of qubits need their
reduced states reconstructed.  A Pauli set (a list of n-qubit strings over
X/Y/Z) is complete for the graph when, restricted to every requested
subset, it realises all 3^k local Pauli assignments; this module builds
the requirement universe, verifies candidate sets, and provides the
colouring and recursive constructions together with analytic bounds on
the minimal set size.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

AXES = "XYZ"

X, Y, Z = 0, 1, 2  # axis indices


def axis_index(symbol: str) -> int:
    try:
        return AXES.index(symbol)
    except ValueError:
        raise ValueError(f"not a Pauli axis: {symbol!r}") from None


def _check_pauli_string(s: str, n: int) -> None:
    if len(s) != n:
        raise ValueError(f"Pauli string {s!r} has length {len(s)}, expected {n}")
    bad = set(s) - set(AXES)
    if bad:
        raise ValueError(f"Pauli string {s!r} contains invalid symbols {bad}")


@dataclass(frozen=True)
class PauliSet:
    """An ordered, duplicate-free list of n-qubit Pauli strings.

    Character i of each string is the axis measured on qubit i (leftmost
    character is qubit 0).
    """

    n: int
    settings: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "settings", tuple(self.settings))
        for s in self.settings:
            _check_pauli_string(s, self.n)
        if len(set(self.settings)) != len(self.settings):
            raise ValueError("duplicate settings in PauliSet")

    def __len__(self) -> int:
        return len(self.settings)

    def to_text(self, comments: Sequence[str] = ()) -> str:
        lines = [f"# {c}" for c in comments]
        lines.extend(self.settings)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PauliSet":
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(line)
        if not rows:
            raise ValueError("no Pauli strings found")
        return cls(len(rows[0]), tuple(rows))


@dataclass(frozen=True)
class ConnectivityHypergraph:
    """Vertices are qubits; each edge is a subset whose marginal is wanted.

    Edges that are subsets of other edges are dropped on construction:
    reconstructing a marginal also yields the marginals of its subsets.
    """

    n: int
    edges: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: list[tuple[int, ...]] = []
        for e in self.edges:
            e = tuple(sorted(set(e)))
            if not e:
                raise ValueError("empty edge")
            if e[0] < 0 or e[-1] >= self.n:
                raise ValueError(f"edge {e} out of range for n={self.n}")
            seen.append(e)
        if len(set(seen)) != len(seen):
            raise ValueError("duplicate edges")
        kept = [
            e
            for e in seen
            if not any(set(e) < set(f) for f in seen)
        ]
        kept.sort(key=lambda e: (len(e), e))
        object.__setattr__(self, "edges", tuple(kept))

    @property
    def edge_sizes(self) -> tuple[int, ...]:
        return tuple(sorted({len(e) for e in self.edges}))

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "edges": [list(e) for e in self.edges]}, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "ConnectivityHypergraph":
        data = json.loads(text)
        return cls(int(data["n"]), tuple(tuple(e) for e in data["edges"]))


@dataclass(frozen=True)
class Requirement:
    """One local Pauli assignment on one requested subset."""

    subset: tuple[int, ...]
    assignment: str

    def __post_init__(self):
        if len(self.subset) != len(self.assignment):
            raise ValueError("assignment length does not match subset size")


@dataclass(frozen=True)
class CoverReport:
    complete: bool
    missing: tuple[Requirement, ...]
    min_multiplicity: int
    max_multiplicity: int


def build_universe(h: ConnectivityHypergraph) -> list[Requirement]:
    """All local Pauli assignments needed for the marginals of h.

    For each edge e, every one of the 3^|e| axis assignments appears
    exactly once; the total size is the sum of 3^|e| over edges.
    """
    reqs = []
    for e in h.edges:
        for a in itertools.product(AXES, repeat=len(e)):
            reqs.append(Requirement(e, "".join(a)))
    return reqs


def covers(s: str, r: Requirement) -> bool:
    """True iff Pauli string s restricted to r.subset equals r.assignment."""
    return all(s[q] == r.assignment[i] for i, q in enumerate(r.subset))


def verify_cover(ps: PauliSet, h: ConnectivityHypergraph) -> CoverReport:
    """Check that ps realises every requirement of h, with multiplicities."""
    if ps.n != h.n:
        raise ValueError(f"PauliSet is on {ps.n} qubits, hypergraph on {h.n}")
    universe = build_universe(h)
    missing = []
    mults = []
    for r in universe:
        c = sum(1 for s in ps.settings if covers(s, r))
        mults.append(c)
        if c == 0:
            missing.append(r)
    if not mults:
        return CoverReport(True, (), 0, 0)
    return CoverReport(not missing, tuple(missing), min(mults), max(mults))


# ---------------------------------------------------------------------------
# clique number and strong chromatic number


def _conflict_adjacency(h: ConnectivityHypergraph) -> list[int]:
    """Bitmask adjacency of the graph where vertices clash when they share an edge."""
    adj = [0] * h.n
    for e in h.edges:
        for u, v in itertools.combinations(e, 2):
            adj[u] |= 1 << v
            adj[v] |= 1 << u
    return adj


def _max_clique_bitmask(adj: list[int], n: int) -> int:
    best = 0

    def grow(size: int, cand: int) -> None:
        nonlocal best
        if size > best:
            best = size
        while cand:
            if size + cand.bit_count() <= best:
                return
            v = (cand & -cand).bit_length() - 1
            cand &= cand - 1
            grow(size + 1, cand & adj[v])

    grow(0, (1 << n) - 1)
    return best


def clique_number(g: ConnectivityHypergraph) -> int:
    """Largest vertex set all of whose k-subsets are edges (uniform edge size k).

    Exact backtracking, limited to n <= 32.
    """
    if g.n > 32:
        raise ValueError("clique_number: size limit exceeded (n <= 32)")
    if not g.edges:
        return min(g.n, 1)
    sizes = {len(e) for e in g.edges}
    if len(sizes) > 1:
        raise ValueError("clique_number requires a uniform edge size")
    k = sizes.pop()
    if k == 2:
        return _max_clique_bitmask(_conflict_adjacency(g), g.n)

    edge_set = set(g.edges)
    best = k  # every edge is itself a clique

    def extend(s: list[int], cand: list[int]) -> None:
        nonlocal best
        if len(s) > best:
            best = len(s)
        for i, v in enumerate(cand):
            if len(s) + len(cand) - i <= best:
                return
            if len(s) >= k - 1:
                ok = all(
                    tuple(sorted(t + (v,))) in edge_set
                    for t in itertools.combinations(s, k - 1)
                )
                if not ok:
                    continue
            extend(s + [v], cand[i + 1 :])

    extend([], list(range(g.n)))
    return best


@dataclass(frozen=True)
class Colouring:
    count: int
    colours: tuple[int, ...]
    exact: bool


def _greedy_colouring(adj: list[int], n: int) -> tuple[int, list[int]]:
    order = sorted(range(n), key=lambda v: -adj[v].bit_count())
    colours = [-1] * n
    for v in order:
        used = {colours[u] for u in range(n) if adj[v] >> u & 1 and colours[u] >= 0}
        c = 0
        while c in used:
            c += 1
        colours[v] = c
    return max(colours, default=-1) + 1, colours


def _k_colourable(adj: list[int], n: int, k: int) -> Optional[list[int]]:
    order = sorted(range(n), key=lambda v: -adj[v].bit_count())
    colours = [-1] * n

    def bt(i: int, used: int) -> bool:
        if i == n:
            return True
        v = order[i]
        forb = 0
        for u in range(n):
            if adj[v] >> u & 1 and colours[u] >= 0:
                forb |= 1 << colours[u]
        for c in range(min(used + 1, k)):
            if forb >> c & 1:
                continue
            colours[v] = c
            if bt(i + 1, max(used, c + 1)):
                return True
        colours[v] = -1
        return False

    return colours if bt(0, 0) else None


def strong_chromatic_number(g: ConnectivityHypergraph) -> Colouring:
    """Fewest colours so that all vertices within any edge differ.

    Equivalent to properly colouring the pairwise-clash graph.  Exact by
    backtracking (with a clique lower bound) for n <= 20, greedy with
    exact=False beyond.
    """
    if g.n == 0:
        return Colouring(0, (), True)
    adj = _conflict_adjacency(g)
    greedy_k, greedy_cols = _greedy_colouring(adj, g.n)
    if greedy_k == 0:  # no edges at all
        return Colouring(1, tuple([0] * g.n), True)
    if g.n > 20:
        return Colouring(greedy_k, tuple(greedy_cols), False)
    lower = _max_clique_bitmask(adj, g.n)
    for k in range(lower, greedy_k):
        cols = _k_colourable(adj, g.n, k)
        if cols is not None:
            return Colouring(k, tuple(cols), True)
    return Colouring(greedy_k, tuple(greedy_cols), True)


# ---------------------------------------------------------------------------
# constructions


def complete_hypergraph(n: int, k: int) -> ConnectivityHypergraph:
    return ConnectivityHypergraph(n, tuple(itertools.combinations(range(n), k)))


def _base_is_complete(base: PauliSet, k: int) -> bool:
    if base.n < k:
        return False
    return verify_cover(base, complete_hypergraph(base.n, k)).complete


def colouring_construction(h: ConnectivityHypergraph, base: PauliSet) -> PauliSet:
    """Cover h by copying base columns along a strong colouring of h.

    Qubit i measures the base column of its colour, so any edge (whose
    vertices all have distinct colours) sees distinct base columns, which
    cover all local assignments because the base covers its complete
    instance.  Output size is the base size (identical rows, which can
    arise when fewer colours than base qubits are used, are merged).
    """
    if not h.edges:
        return PauliSet(h.n, tuple(dict.fromkeys(s[0] * h.n for s in base.settings)))
    k_max = max(len(e) for e in h.edges)
    if not _base_is_complete(base, k_max):
        raise ValueError("base Pauli set is not complete for its own qubit count")
    col = strong_chromatic_number(h)
    colours = col.colours
    if col.count > base.n:
        raise ValueError(
            f"base has {base.n} qubits but the colouring needs {col.count} colours"
        )
    rows = ["".join(s[colours[i]] for i in range(h.n)) for s in base.settings]
    return PauliSet(h.n, tuple(dict.fromkeys(rows)))


def relabel_axes(ps: PauliSet, perms: Sequence[str]) -> PauliSet:
    """Apply a per-qubit permutation of the axes; perms[i] is a 3-char string
    giving the images of X, Y, Z on qubit i."""
    if len(perms) != ps.n:
        raise ValueError("need one axis permutation per qubit")
    for p in perms:
        if sorted(p) != list(AXES):
            raise ValueError(f"invalid axis permutation {p!r}")
    rows = [
        "".join(perms[i][axis_index(ch)] for i, ch in enumerate(s))
        for s in ps.settings
    ]
    return PauliSet(ps.n, tuple(rows))


def _relabel_to_all_x(ps: PauliSet) -> PauliSet:
    """Relabel axes per qubit so the first setting becomes the all-X string."""
    perms = []
    for ch in ps.settings[0]:
        rest = [a for a in AXES if a != ch]
        perm = ["", "", ""]
        perm[axis_index(ch)] = "X"
        perm[axis_index(rest[0])] = "Y"
        perm[axis_index(rest[1])] = "Z"
        perms.append("".join(perm))
    return relabel_axes(ps, perms)


def recursive_construction(a: PauliSet, b: PauliSet, relabel: bool = True) -> PauliSet:
    """Combine pair-complete sets on n1 and n2 qubits into one on n1*n2 qubits.

    The first block tiles each a-string n2 times (qubit j takes a[j % n1]);
    the second block stretches each b-string (qubit j takes b[j // n1]).
    Qubit pairs with distinct residues mod n1 are covered by the first
    block, the rest by the second.  When both sets share a constant row
    the two copies merge, giving m1 + m2 - 1 settings; when not, both are
    axis-relabelled first so that their leading rows become all-X (pass
    relabel=False to keep the inputs as-is, giving the unmerged m1 + m2
    variant).
    """
    for ps, label in ((a, "a"), (b, "b")):
        if not _base_is_complete(ps, 2):
            raise ValueError(f"input {label} is not complete for all pairs")
    common = [ax for ax in AXES if ax * a.n in a.settings and ax * b.n in b.settings]
    if not common and relabel:
        a = _relabel_to_all_x(a)
        b = _relabel_to_all_x(b)
    n = a.n * b.n
    rows = [s * b.n for s in a.settings]
    rows.extend("".join(ch * a.n for ch in t) for t in b.settings)
    return PauliSet(n, tuple(dict.fromkeys(rows)))


# ---------------------------------------------------------------------------
# bounds on the minimal number of settings


#: exact minimal sizes for complete k-body tomography of n qubits
EXACT_SIZE_TABLE: dict[int, dict[int, int]] = {
    2: {2: 9, 3: 9, 4: 9, 5: 11, 6: 12, 7: 12, 8: 13, 9: 13, 10: 14,
        11: 15, 12: 15, 13: 15, 14: 15, 15: 15, 16: 15, 17: 15, 18: 15,
        19: 15, 20: 15},
    3: {3: 27, 4: 27, 5: 33, 6: 33},
}


def _table_exact(n: int, k: int) -> Optional[int]:
    if k == 1:
        return 3
    v = EXACT_SIZE_TABLE.get(k, {}).get(n)
    if v is not None:
        return v
    if n in (k, k + 1):
        return 3 ** k
    return None


def _table_lower(n: int, k: int) -> Optional[int]:
    """Exact value at the largest tabulated n' <= n (sizes grow with n)."""
    known = dict(EXACT_SIZE_TABLE.get(k, {}))
    known[k] = 3 ** k
    known[k + 1] = 3 ** k
    if k == 1:
        return 3
    below = [m for m in known if m <= n]
    return known[max(below)] if below else None


def _ceil_log(n: int, base: int) -> int:
    """Smallest x with base**x >= n (exact integer arithmetic)."""
    x, p = 0, 1
    while p < n:
        p *= base
        x += 1
    return x


def _upper_complete(n: int, k: int) -> tuple[int, list[str]]:
    """Best known constructive upper bound for complete instances."""
    candidates: list[tuple[int, str]] = []
    exact = _table_exact(n, k)
    if exact is not None:
        candidates.append((exact, "table"))
    if k == 2:
        candidates.append((6 * _ceil_log(n, 3) + 3, "log3-construction"))
        for alpha, size in EXACT_SIZE_TABLE[2].items():
            if alpha >= 2 and n >= 2:
                bound = (size - 1) * _ceil_log(n, alpha) + 1
                candidates.append((bound, f"recursion(alpha={alpha})"))
    if k == 3 and n > 6:
        half = (n + 1) // 2
        u_half, _ = _upper_complete(half, 3)
        u2, _ = _upper_complete(half, 2)
        candidates.append((u_half + 2 * u2, "doubling"))
    candidates.append((3 ** k * math.comb(n, k), "naive"))
    best = min(candidates)
    return best[0], [src for val, src in candidates if val == best[0]]


@dataclass(frozen=True)
class PhiBounds:
    lower: int
    upper: int
    exact: bool
    sources: tuple[str, ...]


def phi_bounds(
    n: int, k: int, g: Optional[ConnectivityHypergraph] = None
) -> PhiBounds:
    """Lower/upper bounds on the minimal Pauli set size.

    Without g the bounds refer to reconstructing all k-body marginals of
    n qubits; with g they refer to the marginals requested by g (the
    complete-instance upper bounds still apply, plus the colouring bound,
    while the lower bound comes from per-edge counting and the largest
    complete substructure).
    """
    if k < 1 or n < k:
        raise ValueError("need k >= 1 and n >= k")
    sources: list[str] = []
    if g is None:
        lowers = [(3 ** k, "3^k")]
        tl = _table_lower(n, k)
        if tl is not None:
            lowers.append((tl, "table"))
        upper, up_src = _upper_complete(n, k)
        lower, low_src = max(lowers)
        sources = [f"lower:{low_src}"] + [f"upper:{s}" for s in up_src]
        return PhiBounds(lower, upper, lower == upper, tuple(sources))

    if not g.edges:
        return PhiBounds(0, 0, True, ("empty",))
    lowers = [(max(3 ** len(e) for e in g.edges), "edge")]
    if len(g.edge_sizes) == 1 and g.n <= 32:
        ksz = g.edge_sizes[0]
        omega = clique_number(g)
        if omega >= ksz:
            lowers.append((phi_bounds(omega, ksz).lower, "clique"))
    uppers: list[tuple[int, str]] = []
    k_max = max(len(e) for e in g.edges)
    un, _ = _upper_complete(max(g.n, k_max), k_max)
    uppers.append((un, "complete"))
    chi = strong_chromatic_number(g)
    if chi.count >= k_max:
        uppers.append((phi_bounds(chi.count, k_max).upper, "colouring"))
    lower, low_src = max(lowers)
    upper, up_src = min(uppers)
    return PhiBounds(
        lower, upper, lower == upper, (f"lower:{low_src}", f"upper:{up_src}")
    )


# ---------------------------------------------------------------------------
# named connectivity instances


def _grid16_edges() -> list[tuple[int, int]]:
    edges = []
    for r in range(4):
        for c in range(4):
            v = 4 * r + c
            for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
                r2, c2 = r + dr, c + dc
                if 0 <= r2 < 4 and 0 <= c2 < 4:
                    edges.append((v, 4 * r2 + c2))
    return edges


# seven vertices: a 5-cycle 0-1-2-3-4 plus two vertices adjacent to everything;
# the unique connected 7-vertex graph with clique number 4 and chromatic number 5
G7_EDGES: tuple[tuple[int, int], ...] = tuple(
    [(i, (i + 1) % 5) for i in range(5)]
    + [(i, 5) for i in range(5)]
    + [(i, 6) for i in range(5)]
    + [(5, 6)]
)


def preset_connectivity(spec: str) -> ConnectivityHypergraph:
    """Named instances: complete:n:k, line:n:k, ring:n:k, grid16, g7."""
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    if name == "complete":
        n, k = int(args[0]), int(args[1])
        return complete_hypergraph(n, k)
    if name == "line":
        n, k = int(args[0]), int(args[1])
        return ConnectivityHypergraph(
            n, tuple(tuple(range(i, i + k)) for i in range(n - k + 1))
        )
    if name == "ring":
        n, k = int(args[0]), int(args[1])
        if n <= k:
            raise ValueError("ring needs n > k")
        return ConnectivityHypergraph(
            n, tuple(tuple(sorted((i + j) % n for j in range(k))) for i in range(n))
        )
    if name == "grid16":
        return ConnectivityHypergraph(16, tuple(_grid16_edges()))
    if name == "g7":
        return ConnectivityHypergraph(7, G7_EDGES)
    raise ValueError(f"unknown connectivity preset: {spec!r}")
