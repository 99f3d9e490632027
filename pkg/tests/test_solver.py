import pytest

from otomo.marginals import (
    AXES,
    PauliSet,
    build_universe,
    preset_connectivity,
    verify_cover,
)
from otomo.solver import (
    Budget,
    CoverInstance,
    SolveReport,
    branch_and_bound,
    exhaustive_min_cover,
    greedy_cover,
    ilp_export,
    local_search_cover,
    lower_bound,
)


def inst_for(preset: str) -> CoverInstance:
    return CoverInstance.from_hypergraph(preset_connectivity(preset))


# ---------------------------------------------------------------------------
# greedy and lower bound


def test_greedy_complete_2_2():
    assert len(greedy_cover(inst_for("complete:2:2"))) == 9


def test_greedy_complete_4_2_window():
    size = len(greedy_cover(inst_for("complete:4:2")))
    assert 9 <= size <= 13


def test_greedy_ring_7_3_at_least_27():
    assert len(greedy_cover(inst_for("ring:7:3"))) >= 27


def test_greedy_covers():
    sol = greedy_cover(inst_for("complete:4:2"))
    assert verify_cover(sol, preset_connectivity("complete:4:2")).complete


def test_lower_bound_values():
    assert lower_bound(inst_for("complete:6:2")) == 9
    assert lower_bound(inst_for("g7")) == 9
    inst = inst_for("complete:6:2")
    assert lower_bound(inst, build_universe(preset_connectivity("complete:6:2"))) == 0


def test_lower_bound_monotone():
    inst = inst_for("complete:3:2")
    universe = list(inst.universe)
    prev = lower_bound(inst)
    for i in range(1, len(universe) + 1):
        cur = lower_bound(inst, universe[:i])
        assert cur <= prev
        prev = cur


# ---------------------------------------------------------------------------
# branch and bound


def test_bnb_complete_4_2_optimal():
    inst = inst_for("complete:4:2")
    report = branch_and_bound(inst, Budget(max_time=60), greedy_cover(inst))
    assert report.size == 9
    assert report.optimal
    assert report.lower_bound == 9
    assert verify_cover(report.solution, preset_connectivity("complete:4:2")).complete


def test_bnb_complete_4_3_optimal():
    inst = inst_for("complete:4:3")
    report = branch_and_bound(inst, Budget(max_time=120), greedy_cover(inst))
    assert report.size == 27
    assert report.optimal


def test_bnb_without_incumbent():
    inst = inst_for("complete:3:2")
    report = branch_and_bound(inst, Budget(max_time=60))
    assert report.size == 9
    assert report.optimal


def test_bnb_line_instance():
    inst = inst_for("line:3:2")
    report = branch_and_bound(inst, Budget(max_time=60))
    assert report.size == 9
    assert report.optimal


def test_bnb_greedy_never_beats_optimal():
    for preset in ("complete:2:2", "complete:3:2", "complete:4:2", "line:3:2"):
        inst = inst_for(preset)
        g = greedy_cover(inst)
        rep = branch_and_bound(inst, Budget(max_time=120), g)
        assert rep.optimal
        assert len(g) >= rep.size


def test_bnb_budget_hit_reports_incumbent():
    inst = inst_for("complete:5:2")
    g = greedy_cover(inst)
    report = branch_and_bound(inst, Budget(max_nodes=50), g)
    assert report.budget_hit
    assert not report.optimal or report.size == report.lower_bound
    assert report.lower_bound <= report.size
    assert verify_cover(report.solution, preset_connectivity("complete:5:2")).complete


def test_bnb_determinism():
    inst = inst_for("complete:3:2")
    r1 = branch_and_bound(inst, Budget(max_time=60))
    r2 = branch_and_bound(inst, Budget(max_time=60))
    assert r1.solution == r2.solution
    assert r1.nodes_explored == r2.nodes_explored
    assert (r1.size, r1.lower_bound, r1.optimal) == (r2.size, r2.lower_bound, r2.optimal)


def test_bnb_rejects_bad_incumbent():
    inst = inst_for("complete:3:2")
    with pytest.raises(ValueError):
        branch_and_bound(inst, Budget(), PauliSet(3, ("XXX", "YYY")))


def test_bnb_explicit_candidates():
    h = preset_connectivity("complete:2:2")
    cands = tuple(a + b for a in AXES for b in AXES)
    inst = CoverInstance.from_hypergraph(h, candidates=cands)
    report = branch_and_bound(inst, Budget(max_time=30))
    assert report.size == 9
    assert report.optimal


def test_instance_infeasible_candidates():
    h = preset_connectivity("complete:2:2")
    inst = CoverInstance.from_hypergraph(h, candidates=("XX", "YY"))
    with pytest.raises(ValueError):
        greedy_cover(inst)


def test_candidate_cap():
    with pytest.raises(ValueError):
        CoverInstance.from_hypergraph(preset_connectivity("grid16"))


def test_empty_universe_needs_nothing():
    inst = CoverInstance(2, ())
    report = branch_and_bound(inst, Budget())
    assert report.size == 0 and report.optimal and report.lower_bound == 0


# ---------------------------------------------------------------------------
# oracle equivalence (independent exhaustive search)


@pytest.mark.parametrize("preset", ["complete:2:2", "complete:3:2", "line:3:2"])
def test_bnb_matches_exhaustive_oracle(preset):
    inst = inst_for(preset)
    oracle = exhaustive_min_cover(inst)
    report = branch_and_bound(inst, Budget(max_time=120), greedy_cover(inst))
    assert report.optimal
    assert report.size == len(oracle)


# ---------------------------------------------------------------------------
# local search


def test_local_search_finds_fixed_size():
    inst = inst_for("complete:4:2")
    found = local_search_cover(inst, 10, seed=1)
    assert found is not None
    assert len(found) == 10
    assert verify_cover(found, preset_connectivity("complete:4:2")).complete


def test_local_search_deterministic():
    inst = inst_for("complete:4:2")
    a = local_search_cover(inst, 10, seed=3)
    b = local_search_cover(inst, 10, seed=3)
    assert a == b


def test_local_search_impossible_size():
    inst = inst_for("complete:2:2")
    assert local_search_cover(inst, 8, seed=0, max_steps=20000) is None


# ---------------------------------------------------------------------------
# serialization and export


def test_solve_report_json_roundtrip():
    inst = inst_for("complete:3:2")
    report = branch_and_bound(inst, Budget(max_time=30))
    again = SolveReport.from_json(report.to_json())
    assert again.solution == report.solution
    assert again.size == report.size
    assert again.optimal == report.optimal


def _parse_lp(path):
    binaries, constraints = [], 0
    section = None
    for line in open(path):
        line = line.strip()
        if line in ("Minimize", "Subject To", "Binary", "End"):
            section = line
            continue
        if section == "Subject To" and line.startswith("c") and ":" in line:
            constraints += 1
        if section == "Binary" and line.startswith("z_"):
            binaries.append(line)
    return binaries, constraints


@pytest.mark.parametrize(
    "preset,nvars,ncons",
    [("complete:3:2", 27, 27), ("complete:4:2", 81, 54), ("line:3:2", 27, 18)],
)
def test_ilp_export_counts(tmp_path, preset, nvars, ncons):
    path = tmp_path / "model.lp"
    ilp_export(inst_for(preset), str(path))
    binaries, constraints = _parse_lp(path)
    assert len(binaries) == nvars
    assert constraints == ncons


def test_ilp_export_constraint_lists_covering_candidates(tmp_path):
    path = tmp_path / "model.lp"
    ilp_export(inst_for("complete:2:2"), str(path))
    text = path.read_text()
    assert "z_XX" in text
    # every pair requirement on 2 qubits is covered by exactly one string
    first = [l for l in text.splitlines() if l.strip().startswith("c0:")][0]
    assert first.count("z_") == 1
