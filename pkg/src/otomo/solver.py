"""Exact and heuristic solvers for the minimal Pauli cover problem.

The decision variables are candidate n-qubit Pauli strings; a cover must
realise every requirement (a local assignment on a requested subset) at
least once.  `branch_and_bound` solves the binary program exactly within
a node/time budget, `greedy_cover` and `local_search_cover` provide
incumbents, and `ilp_export` writes the instance in CPLEX LP format for
external solvers.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .marginals import (
    AXES,
    ConnectivityHypergraph,
    PauliSet,
    Requirement,
    build_universe,
    covers,
)

MAX_ENUM_QUBITS = 12  # 3^12 candidate strings is the explicit-enumeration cap


@dataclass(frozen=True)
class CoverInstance:
    """Requirement universe plus the candidate settings allowed to cover it.

    With candidates=None all 3^n strings are eligible (n <= 12); an
    explicit candidate tuple restricts the search and disables the
    symmetry reductions that are only sound for the full candidate set.
    """

    n: int
    universe: tuple[Requirement, ...]
    candidates: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.candidates is None and self.n > MAX_ENUM_QUBITS:
            raise ValueError(
                f"implicit candidate enumeration capped at n <= {MAX_ENUM_QUBITS}"
            )
        if self.candidates is not None:
            for s in self.candidates:
                if len(s) != self.n or set(s) - set(AXES):
                    raise ValueError(f"invalid candidate string {s!r}")

    @classmethod
    def from_hypergraph(
        cls, h: ConnectivityHypergraph, candidates: Optional[Sequence[str]] = None
    ) -> "CoverInstance":
        return cls(
            h.n,
            tuple(build_universe(h)),
            tuple(candidates) if candidates is not None else None,
        )

    def candidate_strings(self) -> list[str]:
        if self.candidates is not None:
            return list(self.candidates)
        return ["".join(p) for p in itertools.product(AXES, repeat=self.n)]


@dataclass
class SolveReport:
    solution: PauliSet
    size: int
    lower_bound: int
    optimal: bool
    nodes_explored: int
    wall_time: float
    budget_hit: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "size": self.size,
                "lower_bound": self.lower_bound,
                "optimal": self.optimal,
                "nodes_explored": self.nodes_explored,
                "wall_time": self.wall_time,
                "budget_hit": self.budget_hit,
                "solution": list(self.solution.settings),
                "n": self.solution.n,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SolveReport":
        d = json.loads(text)
        return cls(
            PauliSet(d["n"], tuple(d["solution"])),
            d["size"],
            d["lower_bound"],
            d["optimal"],
            d["nodes_explored"],
            d["wall_time"],
            d["budget_hit"],
        )


@dataclass(frozen=True)
class Budget:
    max_nodes: Optional[int] = None
    max_time: Optional[float] = None  # seconds


def lower_bound(inst: CoverInstance, covered: Iterable[Requirement] = ()) -> int:
    """Max over edges of the number of still-uncovered assignments.

    Any single setting realises exactly one assignment per edge, so at
    least that many further settings are required.
    """
    done = set(covered)
    per_edge: dict[tuple[int, ...], int] = {}
    for r in inst.universe:
        if r not in done:
            per_edge[r.subset] = per_edge.get(r.subset, 0) + 1
    return max(per_edge.values(), default=0)


# ---------------------------------------------------------------------------
# compiled bitmask representation shared by the solvers


class _Compiled:
    def __init__(self, inst: CoverInstance):
        self.inst = inst
        self.n = inst.n
        self.cands = inst.candidate_strings()
        self.ncand = len(self.cands)
        self.reqs = list(inst.universe)
        self.nreq = len(self.reqs)
        self.full = (1 << self.nreq) - 1
        self.edges = sorted({r.subset for r in self.reqs}, key=lambda e: (len(e), e))
        req_index = {(r.subset, r.assignment): i for i, r in enumerate(self.reqs)}
        if len(set(self.cands)) != self.ncand:
            raise ValueError("duplicate candidate strings")
        self.cand_index = {s: i for i, s in enumerate(self.cands)}
        self.cand_cover = [0] * self.ncand
        self.req_cands = [0] * self.nreq
        for ci, s in enumerate(self.cands):
            m = 0
            for e in self.edges:
                a = "".join(s[q] for q in e)
                ri = req_index.get((e, a))
                if ri is not None:
                    m |= 1 << ri
                    self.req_cands[ri] |= 1 << ci
            self.cand_cover[ci] = m
        for ri, m in enumerate(self.req_cands):
            if m == 0:
                raise ValueError(f"requirement {self.reqs[ri]} has no covering candidate")
        # masks of requirements grouped by (qubit, symbol) within each edge,
        # for the per-qubit counting bound
        self.qs_masks: list[list[list[int]]] = [
            [[] for _ in AXES] for _ in range(self.n)
        ]
        for e in self.edges:
            for pos, q in enumerate(e):
                for si, sym in enumerate(AXES):
                    m = 0
                    for ri, r in enumerate(self.reqs):
                        if r.subset == e and r.assignment[pos] == sym:
                            m |= 1 << ri
                    self.qs_masks[q][si].append(m)
        self.per_edge_masks = []
        for e in self.edges:
            m = 0
            for ri, r in enumerate(self.reqs):
                if r.subset == e:
                    m |= 1 << ri
            self.per_edge_masks.append(m)

    def counting_bound(self, covered: int) -> int:
        """Settings still needed: per qubit, settings showing symbol s there
        can each realise at most one uncovered s-assignment of a given edge,
        and the three symbol classes are disjoint."""
        unc = self.full & ~covered
        best = 0
        for q in range(self.n):
            total = 0
            for masks in self.qs_masks[q]:
                if masks:
                    total += max((m & unc).bit_count() for m in masks)
            if total > best:
                best = total
        return best

    def edge_bound(self, covered: int) -> int:
        unc = self.full & ~covered
        return max(((m & unc).bit_count() for m in self.per_edge_masks), default=0)

    def is_axis_symmetric(self) -> bool:
        """True when the universe holds all assignments of every edge and all
        3^n strings are candidates, so per-qubit axis relabelling maps covers
        to covers."""
        if self.inst.candidates is not None:
            return False
        counts: dict[tuple[int, ...], int] = {}
        for r in self.reqs:
            counts[r.subset] = counts.get(r.subset, 0) + 1
        return all(counts[e] == 3 ** len(e) for e in counts)

    def vertex_automorphisms(self) -> list[tuple[int, ...]]:
        """Brute-force edge-set automorphisms; identity only for n > 8."""
        if self.n > 8:
            return [tuple(range(self.n))]
        eset = {e for e in self.edges}
        auts = []
        for p in itertools.permutations(range(self.n)):
            if all(tuple(sorted(p[v] for v in e)) in eset for e in eset):
                auts.append(p)
        return auts


def greedy_cover(inst: CoverInstance) -> PauliSet:
    """Repeatedly pick the candidate covering the most uncovered requirements
    (ties broken by string order)."""
    c = _Compiled(inst)
    covered = 0
    picked: list[int] = []
    while covered != c.full:
        best_ci, best_gain = -1, -1
        for ci in range(c.ncand):
            gain = (c.cand_cover[ci] & ~covered).bit_count()
            if gain > best_gain:
                best_ci, best_gain = ci, gain
        if best_gain <= 0:
            raise ValueError("instance is infeasible for the given candidates")
        picked.append(best_ci)
        covered |= c.cand_cover[best_ci]
    return PauliSet(inst.n, tuple(c.cands[i] for i in picked))


def local_search_cover(
    inst: CoverInstance,
    size: int,
    seed: int = 0,
    max_steps: int = 2_000_000,
    max_time: Optional[float] = None,
) -> Optional[PauliSet]:
    """Search for a complete cover of exactly `size` settings by annealed
    single-cell flips; returns None if none is found within the step budget.

    Only available with the implicit full candidate set.
    """
    if inst.candidates is not None:
        raise ValueError("local_search_cover requires the implicit candidate set")
    import random

    c = _Compiled(inst)
    rnd = random.Random(seed)
    n = inst.n
    rows = [list("X" * n)] + [
        [rnd.choice(AXES) for _ in range(n)] for _ in range(size - 1)
    ]

    def row_mask(row: list[str]) -> int:
        ci = 0
        for ch in row:
            ci = ci * 3 + AXES.index(ch)
        return c.cand_cover[ci]

    def uncovered(rows) -> int:
        cov = 0
        for r in rows:
            cov |= row_mask(r)
        return (c.full & ~cov).bit_count()

    cur = uncovered(rows)
    temperature = 2.0
    t0 = time.time()
    for step in range(max_steps):
        if cur == 0:
            break
        if max_time is not None and step % 2048 == 0 and time.time() - t0 > max_time:
            return None
        i = rnd.randrange(1, size)
        j = rnd.randrange(n)
        old = rows[i][j]
        new = rnd.choice(AXES)
        if new == old:
            continue
        rows[i][j] = new
        nxt = uncovered(rows)
        if nxt <= cur or rnd.random() < math.exp(-(nxt - cur) / max(temperature, 1e-3)):
            cur = nxt
        else:
            rows[i][j] = old
        temperature *= 0.99999
    if cur != 0:
        return None
    strings = list(dict.fromkeys("".join(r) for r in rows))
    if len(strings) < size:  # annealer may converge onto duplicate rows
        return None
    return PauliSet(inst.n, tuple(strings))


def _canon_row(s: str, auts: Sequence[tuple[int, ...]], full_group: bool) -> str:
    """Minimal image of s under vertex automorphisms combined with the
    per-qubit Y/Z swaps that stabilise the all-X string."""
    folded = "".join("Y" if ch in "YZ" else "X" for ch in s)
    if full_group:  # any vertex permutation allowed: sort the folded pattern
        return "".join(sorted(folded))
    best = None
    for p in auts:
        t = [""] * len(s)
        for i, ch in enumerate(folded):
            t[p[i]] = ch
        u = "".join(t)
        if best is None or u < best:
            best = u
    return best


class _BnB:
    def __init__(self, c: _Compiled, budget: Budget, best: Optional[list[int]]):
        self.c = c
        self.budget = budget
        self.best = best
        self.best_size = len(best) if best is not None else c.ncand + 1
        self.nodes = 0
        self.t0 = time.time()
        self.budget_hit = False

    def out_of_budget(self) -> bool:
        b = self.budget
        if b.max_nodes is not None and self.nodes >= b.max_nodes:
            self.budget_hit = True
        elif b.max_time is not None and time.time() - self.t0 > b.max_time:
            self.budget_hit = True
        return self.budget_hit

    def record(self, chosen: list[int]) -> None:
        if len(chosen) < self.best_size:
            self.best_size = len(chosen)
            self.best = list(chosen)

    def dfs(self, chosen: list[int], covered: int, allowed: int) -> None:
        c = self.c
        self.nodes += 1
        if self.nodes % 4096 == 0 and self.out_of_budget():
            return
        if covered == c.full:
            self.record(chosen)
            return
        depth = len(chosen)
        if depth + 1 >= self.best_size:
            return
        if depth + c.counting_bound(covered) >= self.best_size:
            return
        # branch on the uncovered requirement with fewest allowed candidates
        unc = c.full & ~covered
        pick_mask, pick_cnt = 0, None
        u = unc
        while u:
            ri = (u & -u).bit_length() - 1
            u &= u - 1
            m = c.req_cands[ri] & allowed
            cnt = m.bit_count()
            if pick_cnt is None or cnt < pick_cnt:
                pick_mask, pick_cnt = m, cnt
                if cnt <= 1:
                    break
        if pick_cnt == 0:
            return
        kids = []
        m = pick_mask
        while m:
            ci = (m & -m).bit_length() - 1
            m &= m - 1
            kids.append((-(c.cand_cover[ci] & unc).bit_count(), ci))
        kids.sort()
        excluded = 0
        for _, ci in kids:
            # excluding earlier siblings ensures each candidate set is
            # explored at most once
            self.dfs(
                chosen + [ci],
                covered | c.cand_cover[ci],
                allowed & ~excluded & ~(1 << ci),
            )
            excluded |= 1 << ci
            if self.budget_hit:
                return


def branch_and_bound(
    inst: CoverInstance,
    budget: Budget = Budget(),
    incumbent: Optional[PauliSet] = None,
) -> SolveReport:
    """Exact minimisation of the cover size by depth-first branch and bound.

    Branching picks the uncovered requirement with the fewest remaining
    candidates and tries them in order of decreasing fresh coverage.  For
    instances invariant under per-qubit axis relabelling the first setting
    is fixed to all-X, and the second is restricted to orbit
    representatives under the vertex automorphisms and Y/Z swaps.  If the
    budget runs out the best incumbent is returned with budget_hit=True
    and the root lower bound.
    """
    t0 = time.time()
    c = _Compiled(inst)
    if c.nreq == 0:
        return SolveReport(PauliSet(inst.n, ()), 0, 0, True, 0, time.time() - t0, False)
    root_lb = max(c.counting_bound(0), 1)
    inc_idx = None
    if incumbent is not None:
        if set(incumbent.settings) - set(c.cand_index):
            raise ValueError("incumbent uses settings outside the candidate set")
        cov = 0
        for s in incumbent.settings:
            cov |= c.cand_cover[c.cand_index[s]]
        if cov != c.full:
            raise ValueError("incumbent is not a complete cover")
        inc_idx = [c.cand_index[s] for s in incumbent.settings]

    search = _BnB(c, budget, inc_idx)
    finished = True
    if inc_idx is not None and len(inc_idx) <= root_lb:
        pass  # incumbent already matches the bound
    else:
        symmetric = c.is_axis_symmetric() and ("X" * c.n) in c.cand_index
        if symmetric:
            allx = c.cand_index["X" * c.n]
            base_cov = c.cand_cover[allx]
            if base_cov == c.full:
                search.record([allx])
            else:
                auts = c.vertex_automorphisms()
                full_group = len(auts) == math.factorial(c.n)
                canon = [
                    _canon_row(s, auts, full_group) if ci != allx else None
                    for ci, s in enumerate(c.cands)
                ]
                reps = sorted({v for v in canon if v is not None})
                rep_allowed = {r: 0 for r in reps}
                for ci, v in enumerate(canon):
                    if v is None:
                        continue
                    for r in reps:
                        if v >= r:
                            rep_allowed[r] |= 1 << ci
                for r in reps:
                    ci = c.cand_index[r]
                    search.dfs(
                        [allx, ci],
                        base_cov | c.cand_cover[ci],
                        rep_allowed[r] & ~(1 << ci),
                    )
                    if search.budget_hit:
                        break
        else:
            search.dfs([], 0, (1 << c.ncand) - 1)
        finished = not search.budget_hit

    if search.best is None:
        # no cover found within budget: fall back to greedy so the report
        # always carries a valid cover
        sol = greedy_cover(inst)
        return SolveReport(
            sol, len(sol), root_lb, False, search.nodes, time.time() - t0, True
        )
    solution = PauliSet(inst.n, tuple(c.cands[i] for i in search.best))
    size = len(solution)
    if finished:
        lb, optimal = size, True
    else:
        lb, optimal = root_lb, size <= root_lb
    return SolveReport(
        solution, size, lb, optimal, search.nodes, time.time() - t0,
        not finished,
    )


def exhaustive_min_cover(inst: CoverInstance, size_limit: Optional[int] = None) -> PauliSet:
    """Independent oracle: enumerate candidate subsets in index order and
    return a smallest complete cover.  Exponential; intended for tiny
    instances only.
    """
    c = _Compiled(inst)
    cap = size_limit if size_limit is not None else c.ncand

    for target in range(1, cap + 1):
        def dfs(start: int, chosen: list[int], covered: int) -> Optional[list[int]]:
            if covered == c.full:
                return chosen
            if len(chosen) == target:
                return None
            if c.ncand - start < target - len(chosen):
                return None
            if c.edge_bound(covered) > target - len(chosen):
                return None
            for ci in range(start, c.ncand):
                got = dfs(ci + 1, chosen + [ci], covered | c.cand_cover[ci])
                if got is not None:
                    return got
            return None

        found = dfs(0, [], 0)
        if found is not None:
            return PauliSet(inst.n, tuple(c.cands[i] for i in found))
    raise ValueError("no cover within the size limit")


def ilp_export(inst: CoverInstance, path: str) -> None:
    """Write the binary program in CPLEX LP format: one 0/1 variable per
    candidate, one >=1 constraint per requirement."""
    c = _Compiled(inst)
    names = [f"z_{s}" for s in c.cands]

    def wrap(terms: list[str], head: str) -> list[str]:
        lines = []
        cur = head
        for i, t in enumerate(terms):
            piece = t if i == 0 else " + " + t
            if len(cur) + len(piece) > 200:
                lines.append(cur)
                cur = "   " + piece.lstrip()
            else:
                cur += piece
        lines.append(cur)
        return lines

    out = ["\\ minimal Pauli cover instance", "Minimize"]
    out.extend(wrap(names, " obj: "))
    out.append("Subject To")
    for ri in range(c.nreq):
        terms = []
        m = c.req_cands[ri]
        while m:
            ci = (m & -m).bit_length() - 1
            m &= m - 1
            terms.append(names[ci])
        lines = wrap(terms, f" c{ri}: ")
        lines[-1] += " >= 1"
        out.extend(lines)
    out.append("Binary")
    out.extend(f" {name}" for name in names)
    out.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
