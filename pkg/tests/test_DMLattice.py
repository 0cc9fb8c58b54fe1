import numpy as np
import pytest

from coronaLab.DMLattice import build_lattice, chain_density_check, covering_by_doubling, doubling_cells, \
    small_boundary_ratio, whitney_decompose
from coronaLab.Domain import BallDomain
from coronaLab.PointMeasure import PointMeasure, two_cluster
from coronaLab.errors import ChainNotNonDoubling


@pytest.fixture
def corners():
    return PointMeasure([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], np.ones(4))


@pytest.fixture
def segment_lattice(segment_measure):
    return build_lattice(segment_measure, C0=128.0, A0=16.0)


def test_single_atom_has_one_cell_per_generation(unit_atom):
    lat = build_lattice(unit_atom, k_range=(0, 3))
    assert lat.k_max == 3
    for k in range(4):
        cells = lat.generation_cells(k)
        assert len(cells) == 1
        assert cells[0].doubling
    assert all(row["passed"] for row in lat.audit())


def test_unit_square_corners_end_in_singletons(corners):
    lat = build_lattice(corners, C0=2.0, A0=10.0)
    finest = lat.generation_cells(lat.k_max)
    assert len(finest) == 4
    assert sorted(int(c.members[0]) for c in finest) == [0, 1, 2, 3]
    assert all(c.members.size == 1 for c in finest)
    assert all(row["passed"] for row in lat.audit())


def test_segment_lattice_passes_every_invariant(segment_lattice):
    rows = segment_lattice.audit()
    failed = [row for row in rows if not row["passed"]]
    assert failed == []
    checks = {row["check"] for row in rows}
    assert {"partition", "5B-disjointness", "members-in-28B", "B-inside-cell", "nesting"} <= checks


def test_segment_lattice_generations_partition_support(segment_lattice):
    for k in range(segment_lattice.k0, segment_lattice.k_max + 1):
        members = np.concatenate([c.members for c in segment_lattice.generation_cells(k)])
        np.testing.assert_array_equal(np.sort(members), np.arange(1000))


def test_relaxed_constants_are_flagged(segment_lattice):
    assert segment_lattice.relaxed


def test_doubling_cells_of_single_atom(unit_atom):
    lat = build_lattice(unit_atom, k_range=(0, 2))
    report = doubling_cells(lat)
    assert report.cells == {c.id for c in lat.cells}
    assert report.violations == []


def test_segment_cells_inside_the_segment_are_doubling(segment_lattice):
    for cell in segment_lattice.cells:
        reach = 100.0 * cell.radius
        if cell.center[0] - reach >= 0.0 and cell.center[0] + reach <= 1.0:
            assert cell.doubling, f"cell {cell.id} at generation {cell.generation}"


def test_light_cluster_next_to_heavy_one_is_not_doubling():
    mu = two_cluster(200, separation=1.0, width=0.01, mass_ratio=1000.0)
    lat = build_lattice(mu, C0=128.0, A0=16.0)
    light = lat.cell_containing(0, 1)
    assert np.all(mu.points[light.members, 0] < 0.5)
    assert not light.doubling


def test_small_boundary_ratio_bounds(segment_lattice, corners):
    for cell in segment_lattice.cells:
        assert 0.0 <= small_boundary_ratio(segment_lattice, cell, 0) <= 1.0
    lat = build_lattice(corners, C0=2.0, A0=10.0)
    singleton = lat.generation_cells(lat.k_max)[0]
    assert small_boundary_ratio(lat, singleton, 5) == 0.0


def test_covering_by_doubling(segment_lattice):
    doubling = next(c for c in segment_lattice.cells if c.doubling)
    family, uncovered = covering_by_doubling(segment_lattice, doubling)
    assert [c.id for c in family] == [doubling.id]
    assert uncovered == 0.0

    top = segment_lattice.generation_cells(segment_lattice.k0)[0]
    family, uncovered = covering_by_doubling(segment_lattice, top)
    assert uncovered == 0.0
    covered = np.concatenate([c.members for c in family])
    assert np.unique(covered).size == covered.size == 1000


def test_chain_density_check(unit_atom, segment_lattice):
    cell = segment_lattice.cells[-1]
    assert chain_density_check(segment_lattice, cell, cell).sum_ratio == pytest.approx(1.0)

    lat = build_lattice(unit_atom, k_range=(0, 3))
    with pytest.raises(ChainNotNonDoubling):
        chain_density_check(lat, lat.generation_cells(3)[0], lat.generation_cells(0)[0])


def test_whitney_decomposition_of_a_ball(segment_measure):
    lat = build_lattice(segment_measure, C0=128.0, A0=16.0, k_range=(0, 8))
    result = whitney_decompose(lat, BallDomain(2, 0.3, (0.5, 0.0)), 0.005)
    assert result.inside_ok
    assert result.cover_mass == pytest.approx(result.in_set_mass)
    assert result.doubling_fraction >= 0.5
    covered = np.concatenate([c.members for c in result.cells])
    assert np.unique(covered).size == covered.size


def test_whitney_reports_one_T0_for_every_cell(segment_measure):
    lat = build_lattice(segment_measure, C0=128.0, A0=16.0, k_range=(0, 8))
    open_set = BallDomain(2, 0.3, (0.5, 0.0))
    result = whitney_decompose(lat, open_set, 0.005)
    summary = result.summary()
    assert not result.t0_vacuous
    assert summary["max_t0"] == max(result.t0)
    assert summary["min_t0"] <= summary["max_t0"]
    # T0 B(Q) reaches the complement of the open set for every cell
    for cell in result.cells:
        depth = -float(open_set.sdf(cell.center[None, :])[0])
        assert depth <= summary["max_t0"] * cell.radius * (1 + 1e-12)


def test_whitney_rejects_bad_arguments(segment_lattice):
    with pytest.raises(ValueError):
        whitney_decompose(segment_lattice, BallDomain(2, 0.3, (0.5, 0.0)), 0.5)
    with pytest.raises(ValueError):
        whitney_decompose(segment_lattice, BallDomain(2, 0.1, (5.0, 5.0)), 0.005)


def test_lattice_document_lists_every_cell(segment_lattice):
    document = segment_lattice.to_dict()
    assert len(document["cells"]) == len(segment_lattice.cells)
    assert document["k_max"] == segment_lattice.k_max
