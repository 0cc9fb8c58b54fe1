import numpy as np
import pytest

from coronaLab.Corona import StoppingConfig, bad_cube_sweep, build_corona, classify_bad, classify_nice_ugly, \
    growth_check, joint_lattice, key_lemma_check, make_B0, packing_check, r_star_l1_check, t1_hypotheses
from coronaLab.DMLattice import DMCell, build_lattice, covering_by_doubling
from coronaLab.HarmonicMeasure import sample_exits
from coronaLab.PointMeasure import Ball, PointMeasure, circle, segment, segment_with_cluster
from coronaLab.errors import EmptyProbeFamily, NoThinBall, PreconditionFailed


def heaviest_doubling_cell(lat):
    family = [c for cell in lat.generation_cells(lat.k0) for c in covering_by_doubling(lat, cell)[0]]
    return max(family, key=lambda c: (lat.mass_of(c), -c.generation, -c.id))


@pytest.fixture
def circle_lattice():
    return build_lattice(circle(200), C0=128.0, A0=16.0)


def test_stopping_defaults():
    cfg = StoppingConfig()
    assert cfg.C2 == pytest.approx(40.0)
    assert 0.5 < cfg.lam < 1
    assert cfg.alpha == pytest.approx(1.0 / cfg.lam)


def test_stopping_rejects_large_eta():
    with pytest.raises(ValueError):
        StoppingConfig(eta=0.5)


def test_B0_of_a_central_atom(unit_atom):
    cfg = StoppingConfig()
    B = Ball((0.0, 0.0), 1.0)
    B0 = make_B0(unit_atom, B, cfg)
    np.testing.assert_array_equal(B0.center, B.center)
    assert B0.radius == pytest.approx(cfg.lam)


def test_B0_needs_mass_near_the_center():
    mu = PointMeasure([[0.9, 0.0]], [1.0])
    with pytest.raises(PreconditionFailed):
        make_B0(mu, Ball((0.0, 0.0), 1.0), StoppingConfig())


def test_no_bad_cells_when_omega_equals_mu(circle_lattice):
    mu = circle_lattice.base_measure
    report = classify_bad(circle_lattice, mu, Ball((0.0, 0.0), 1.2), StoppingConfig())
    assert report.bad1 == [] and report.bad2 == []
    assert report.G0.size == len(mu)
    assert report.eps1_achieved == pytest.approx(1.0)
    assert report.poisson_bounds == pytest.approx((1.0, 1.0))


def test_bad_cells_cover_an_arc_without_harmonic_measure(circle_lattice):
    mu = circle_lattice.base_measure
    angles = np.mod(np.arctan2(mu.points[:, 1], mu.points[:, 0]), 2 * np.pi)
    omega = mu.with_weights(np.where((angles > 0.0) & (angles < 0.2), 0.0, mu.weights))
    lat = build_lattice(omega, C0=128.0, A0=16.0)
    report = classify_bad(lat, mu, Ball((0.0, 0.0), 1.2), StoppingConfig())

    assert report.bad1
    assert report.bad2 == []
    bad = set(report.bad)
    for c in report.bad:
        assert not any(a.id in bad for a in lat.ancestors(lat.cells[c]))
    members = np.concatenate([lat.cells[c].members for c in report.bad])
    assert np.unique(members).size == members.size
    assert np.intersect1d(members, report.G0).size == 0
    assert report.checks[0]["passed"]


def test_bad_cube_sweep_has_a_row_per_A(circle_lattice):
    rows = bad_cube_sweep(circle_lattice, circle_lattice.base_measure, Ball((0.0, 0.0), 1.2),
                          StoppingConfig(), A_values=(10.0, 50.0))
    assert [row["A"] for row in rows] == [10.0, 50.0]
    assert not any(row["empty_G0"] for row in rows)


def test_single_atom_corona_is_a_chain(unit_atom):
    lat = build_lattice(unit_atom, k_range=(0, 3))
    tree = build_corona(lat, lat.cells[0], StoppingConfig())
    assert len(tree.nodes) == 4
    assert tree.levels() == 4
    assert all(node.label == "ugly" for node in tree.nodes.values())
    assert all(row["passed"] for row in tree.audit())
    expected = sum(1.0 / lat.cells[c].side_length for c in tree.nodes)
    assert packing_check(tree) == pytest.approx(expected)


def test_single_atom_has_no_maximal_transform(unit_atom):
    lat = build_lattice(unit_atom, k_range=(0, 3))
    tree = build_corona(lat, lat.cells[0], StoppingConfig())
    report = r_star_l1_check(tree, unit_atom)
    assert report.normalized == 0.0
    assert report.dominated


def test_classification_without_domain_uses_a_proxy_pole(unit_atom):
    lat = build_lattice(unit_atom, k_range=(0, 1))
    result = classify_nice_ugly(unit_atom, lat.cells[0], StoppingConfig())
    assert result.proxy_pole
    assert "proxy-pole" in result.flags
    assert result.label == "ugly"


def test_corona_rejects_a_non_doubling_root():
    mu = PointMeasure([[0.0, 0.0], [0.01, 0.0]], [1.0, 1000.0])
    lat = build_lattice(mu, C0=2.0, A0=16.0)
    light = lat.cell_containing(0, lat.k_max)
    assert not light.doubling
    with pytest.raises(PreconditionFailed):
        build_corona(lat, light, StoppingConfig())


@pytest.fixture
def clustered():
    return segment_with_cluster(300, cluster_atoms=30)


def test_packing_ratio_is_homogeneous_in_the_mass(clustered):
    cfg = StoppingConfig()
    lat = build_lattice(clustered, C0=128.0, A0=16.0)
    heavy = build_lattice(clustered.scaled(2.0), C0=128.0, A0=16.0)
    root, heavy_root = heaviest_doubling_cell(lat), heaviest_doubling_cell(heavy)
    assert root.id == heavy_root.id
    tree, heavy_tree = build_corona(lat, root, cfg), build_corona(heavy, heavy_root, cfg)
    assert list(tree.nodes) == list(heavy_tree.nodes)
    assert packing_check(heavy_tree) == pytest.approx(2.0 * packing_check(tree))


def test_corona_tree_on_a_clustered_segment(clustered):
    lat = build_lattice(clustered, C0=128.0, A0=16.0)
    tree = build_corona(lat, heaviest_doubling_cell(lat), StoppingConfig())
    assert all(row["passed"] for row in tree.audit())
    for node in tree.nodes.values():
        for c in node.next:
            assert lat.is_descendant(lat.cells[c], lat.cells[node.cell])
            assert lat.cells[c].generation > lat.cells[node.cell].generation
    report = r_star_l1_check(tree, clustered)
    assert report.dominated
    assert report.normalized > 0


@pytest.fixture
def boundary_ball(circle_lattice):
    cfg = StoppingConfig()
    B = Ball((1.0, 0.0), 0.5)
    B0 = B.scaled(cfg.lam)
    report = classify_bad(circle_lattice, circle_lattice.base_measure, B0, cfg)
    return cfg, B, B0, np.array([0.9, 0.0]), report


def test_growth_check_on_the_good_cells(circle_lattice, boundary_ball):
    cfg, _, B0, _, report = boundary_ball
    growth = growth_check(circle_lattice, report, B0, cfg)
    assert growth.rows
    assert growth.worst == max(growth.worst_cell, growth.worst_ball)
    assert 0 < growth.worst < np.inf


def test_key_lemma_probes_the_good_cells(circle_lattice, boundary_ball):
    cfg, B, B0, x_B, report = boundary_ball
    key = key_lemma_check(circle_lattice, report, B0, B, x_B, cfg, cap=64)
    assert not key.vacuous
    assert 0 < key.probe_points <= 64 + len(key.probe_cells)
    assert key.worst_truncated >= 0
    assert key.worst_maximal > 0


def test_t1_hypotheses_when_omega_equals_mu(circle_lattice, boundary_ball):
    cfg, B, B0, x_B, report = boundary_ball
    t1 = t1_hypotheses(circle_lattice, report, B0, B, x_B, cfg)
    assert not t1.degenerate
    assert t1.G1.size > 0
    assert t1.nu_mass_ok
    assert 0 <= t1.delta1 < 1
    assert t1.covered_fraction >= report.eps2_achieved / 3.0
    assert t1.operator_norm > 0


def test_key_lemma_without_probe_cells(circle_lattice, boundary_ball):
    cfg, _, B0, x_B, report = boundary_ball
    tiny = Ball((1.0, 0.0), 0.001)
    key = key_lemma_check(circle_lattice, report, B0, tiny, x_B, cfg, cap=16)
    assert key.vacuous
    assert key.probe_points == 0
    with pytest.raises(EmptyProbeFamily):
        key_lemma_check(circle_lattice, report, B0, tiny, x_B, cfg, cap=16, strict=True)


def whole_cell(mu, members=None, center=(0.5, 0.0), radius=1.0):
    members = np.arange(len(mu)) if members is None else np.asarray(members)
    return DMCell(0, 0, np.asarray(center, dtype=float), int(members[0]), radius, 56.0 * radius, members,
                  doubling=True)


def test_diffuse_cell_is_nice():
    mu = segment(20000)
    result = classify_nice_ugly(mu, whole_cell(mu), StoppingConfig())
    assert result.label == "nice"
    assert result.witness_ratio < StoppingConfig().tau
    assert result.interior_fraction == pytest.approx(1.0)


def test_heavy_cluster_makes_the_cell_ugly():
    mu = segment_with_cluster(1000, cluster_atoms=100, cluster_width=1e-5, cluster_mass=9.0)
    result = classify_nice_ugly(mu, whole_cell(mu), StoppingConfig())
    assert result.label == "ugly"
    assert result.witness_ratio >= 0.9
    assert result.witness.contains(mu.points[1000:]).all()


def test_cell_without_lambda0_interior_is_rejected():
    mu = segment(100)
    with pytest.raises(PreconditionFailed) as e:
        classify_nice_ugly(mu, whole_cell(mu, members=np.arange(0, 100, 2)), StoppingConfig())
    assert e.value.hypothesis == "mu(Q_lambda0) >= mu(Q)/2"


def test_doubled_thin_ball_stays_inside_its_cell(clustered):
    cfg = StoppingConfig()
    lat = build_lattice(clustered, C0=128.0, A0=16.0)
    support = np.flatnonzero(clustered.weights > 0)
    checked = 0
    for cell in lat.cells:
        if not cell.doubling or cell.members.size < 3:
            continue
        try:
            result = classify_nice_ugly(clustered, cell, cfg)
        except (PreconditionFailed, NoThinBall):
            continue
        assert 2.0 * result.B.radius <= 0.44 * cfg.lambda0 * cell.radius * (1 + 1e-9)
        touched = support[result.B.scaled(2.0).contains(clustered.points[support])]
        assert np.isin(touched, cell.members).all()
        checked += 1
    assert checked > 0


def test_bad_cells_of_type_2_cover_an_arc_of_excess_harmonic_measure():
    mu = circle(200)
    angles = np.mod(np.arctan2(mu.points[:, 1], mu.points[:, 0]), 2 * np.pi)
    boosted = np.flatnonzero((angles > 0.0) & (angles < 0.2))
    weights = mu.weights.copy()
    weights[boosted] *= 10.0
    lat = build_lattice(mu.with_weights(weights), C0=128.0, A0=16.0)
    report = classify_bad(lat, mu, Ball((0.0, 0.0), 1.2), StoppingConfig(A=5.0))

    assert report.bad1 == []
    assert report.bad2
    members = np.concatenate([lat.cells[c].members for c in report.bad2])
    assert np.isin(boosted, members).all()
    assert np.intersect1d(boosted, report.G0).size == 0
    assert report.checks[1]["passed"]


def test_growth_of_cells_without_harmonic_measure_is_zero():
    mu = circle(200)
    angles = np.mod(np.arctan2(mu.points[:, 1], mu.points[:, 0]), 2 * np.pi)
    empty = (angles > 0.0) & (angles < 0.2)
    omega = mu.with_weights(np.where(empty, 0.0, mu.weights))
    lat = build_lattice(omega, C0=128.0, A0=16.0)
    cfg = StoppingConfig()
    B0 = Ball((0.0, 0.0), 1.2)
    report = classify_bad(lat, omega, B0, cfg)
    growth = growth_check(lat, report, B0, cfg)

    silent = [row for row in growth.rows
              if row["generation"] == lat.k_max and empty[lat.cells[row["cell"]].members].all()]
    assert silent
    assert all(row["constant"] == 0.0 for row in silent)
    assert growth.worst > 0


def symmetric_line(drop_last=False):
    x = 0.5 + (np.arange(50) + 0.5) / 100
    if drop_last:
        x = x[:-1]
    points = np.concatenate(([[0.0, 0.0]], np.column_stack((x, np.zeros_like(x))),
                             np.column_stack((-(0.5 + (np.arange(50) + 0.5) / 100), np.zeros(50)))))
    return PointMeasure(points, np.full(len(points), 0.01))


@pytest.mark.parametrize("drop_last, cancels", [(False, True), (True, False)])
def test_key_lemma_sees_cancellation_of_a_symmetric_measure(drop_last, cancels):
    cfg = StoppingConfig()
    mu = symmetric_line(drop_last)
    lat = build_lattice(mu, C0=2.0, A0=16.0)
    B = Ball((0.0, 0.0), 0.4)
    B0 = B.scaled(cfg.lam)
    report = classify_bad(lat, mu, B0, cfg)
    key = key_lemma_check(lat, report, B0, B, np.array([0.0, 0.3]), cfg)
    assert not key.vacuous
    assert key.probe_points == 1
    if cancels:
        assert key.worst_truncated < 1e-10
    else:
        assert key.worst_truncated > 1e-6


def test_key_lemma_is_stable_when_walks_double(disk):
    cfg = StoppingConfig()
    mu = circle(400)
    B = Ball((1.0, 0.0), 0.5)
    B0 = B.scaled(cfg.lam)
    x_B = np.array([0.6, 0.0])
    worst = []
    for N in (20000, 40000):
        exits = sample_exits(disk, x_B, N, seed=3)
        joint = joint_lattice(mu, exits, B0, C0=2.0, A0=16.0)
        report = classify_bad(joint.lattice, joint.mu, B0, cfg)
        key = key_lemma_check(joint.lattice, report, B0, B, x_B, cfg)
        assert not key.vacuous
        worst.append(key.worst_truncated)
    assert worst[0] > 0 and worst[1] > 0
    assert 0.5 < worst[1] / worst[0] < 2.0


def test_packing_does_not_drift_when_the_lattice_deepens(clustered):
    cfg = StoppingConfig()
    lat = build_lattice(clustered, C0=128.0, A0=16.0)
    deep = build_lattice(clustered, C0=128.0, A0=16.0, k_range=(lat.k0, lat.k_max + 1))
    assert deep.resolution_generation() == lat.k_max
    shallow = packing_check(build_corona(lat, heaviest_doubling_cell(lat), cfg))
    deeper = packing_check(build_corona(deep, heaviest_doubling_cell(deep), cfg))
    assert shallow > 0
    assert 0.5 < deeper / shallow < 2.0


def test_t1_is_degenerate_when_every_good_atom_is_near_the_pole(circle_lattice, boundary_ball):
    cfg, _, B0, x_B, report = boundary_ball
    t1 = t1_hypotheses(circle_lattice, report, B0, Ball((1.0, 0.0), 200.0), x_B, cfg)
    assert t1.degenerate
    assert t1.G1.size == 0
    assert t1.delta1 == 1.0
