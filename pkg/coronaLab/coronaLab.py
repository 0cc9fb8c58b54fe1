import logging
import math
from collections import namedtuple

import numpy as np
from scipy.stats import kstest

from coronaLab import Corona, HarmonicMeasure
from coronaLab.DMLattice import build_lattice, covering_by_doubling, default_lattice_parameters, \
    doubling_cells, small_boundary_decay, whitney_decompose
from coronaLab.Domain import BallDomain, builtin_domain, corkscrew_point
from coronaLab.PointMeasure import Ball, PointMeasure, builtin_measure, find_thin_boundary_ball, segment
from coronaLab.ReportList import ReportList
from coronaLab.RieszTransform import RieszConfig, kernel_matrix, norm_sweep, r_star_l1_norm
from coronaLab.errors import ConfigError, NoCellSmallEnough, UnknownDomain

Experiment = namedtuple("Experiment", ["method", "description", "measure", "params"])

EXPERIMENTS = {
    "lattice-audit": Experiment(
        "lattice_audit", "Build a dyadic lattice and audit partition, nesting, sandwich, doubling and Whitney",
        "segment", {"whitney_center": None, "whitney_radius": None, "whitney_delta": 0.005, "decay_cells": 8}),
    "wos-validate": Experiment(
        "wos_validate", "Walk-on-spheres exit frequencies on equal arcs against the Poisson kernel",
        None, {"pole": (0.0, 0.0), "arcs": 16}),
    "green-check": Experiment(
        "green_check", "Green function estimates: analytic error, exterior vanishing, symmetry, omega relation",
        None, {"x": (0.3, 0.1), "y": (-0.2, 0.4), "exterior": (1.5, 0.0), "ball_center": (1.0, 0.0),
               "ball_radius": 0.2, "pole": (0.9, 0.0), "test_points": 4, "sphere_samples": 16}),
    "pole-swap": Experiment(
        "pole_swap", "Change of pole: normalized harmonic measure quotients on pieces of a boundary ball",
        None, {"ball_center": (1.0, 0.0), "ball_radius": 0.5, "pieces": 8, "p1": (0.6, 0.0),
               "p2": (0.0, 0.5), "c0": 4.0}),
    "bourgain": Experiment(
        "bourgain", "Lower bound of harmonic measure of a boundary ball from poles near its center",
        "circle", {"xi": (1.0, 0.0), "radius": 0.5, "delta": 0.25, "poles": 4, "growth_bound": 10.0}),
    "bharnack": Experiment(
        "bharnack", "Boundary Harnack: oscillation of u/v for two positive harmonic functions vanishing near xi",
        None, {"xi": (1.0, 0.0), "radius": 0.2, "a1": 4.0, "probes": 6, "u_center": (-1.0, 0.0),
               "u_radius": 0.3, "v_pole": (-0.5, 0.0)}),
    "ainfty": Experiment(
        "ainfty", "Worst harmonic-measure fraction over small boundary-measure fractions (knapsack scan)",
        "circle", {"pole": (0.0, 0.0), "eps_grid": (0.01, 0.05, 0.1, 0.2)}),
    "bad-cubes": Experiment(
        "bad_cubes", "Stopping cubes where harmonic measure and boundary measure disagree, with growth check",
        "circle", {"ball_center": (1.0, 0.0), "ball_radius": 0.5}),
    "key-lemma": Experiment(
        "key_lemma", "Truncated Riesz transform of harmonic measure on the good set, with T1 hypotheses",
        "circle", {"ball_center": (1.0, 0.0), "ball_radius": 0.5}),
    "corona": Experiment(
        "corona", "Nice/ugly corona tree with density and maximal transform checks",
        "segment-with-cluster", {}),
    "packing": Experiment(
        "packing", "Packing ratio of the corona tree and its drift when the lattice deepens",
        "segment-with-cluster", {}),
    "riesz-norm": Experiment(
        "riesz_norm", "L2 operator norms of the truncated Riesz transform on equispaced segment atoms",
        None, {"r_star_max_atoms": 800}),
    "full-pipeline": Experiment(
        "full_pipeline", "Lattice audit, bad cubes, key lemma, corona, packing and Riesz norms in one run",
        "circle", {"ball_center": (1.0, 0.0), "ball_radius": 0.5, "r_star_max_atoms": 800}),
}

Pipeline = namedtuple("Pipeline", ["domain", "mu", "B", "B0", "x_B", "exits", "joint"])


def list_experiments():
    return [(name, EXPERIMENTS[name].description) for name in EXPERIMENTS]


class coronaLab:
    def __init__(self, cfg):
        if cfg.experiment not in EXPERIMENTS:
            raise ConfigError(f"Unknown experiment '{cfg.experiment}'; known: {sorted(EXPERIMENTS)}")
        self.cfg = cfg
        self.spec = EXPERIMENTS[cfg.experiment]
        unknown = sorted(set(cfg.params) - set(self.spec.params))
        if unknown:
            raise ConfigError(f"Unknown [experiment.params] keys for {cfg.experiment}: {unknown}")
        self.params = dict(self.spec.params, **cfg.params)
        self.report = ReportList(cfg.experiment, cfg.seed)
        self.last_lattice = None

    def run(self):
        logging.info(f"Running experiment '{self.cfg.experiment}' with seed {self.cfg.seed}")
        self.report.set("config", self.cfg.to_dict())
        getattr(self, self.spec.method)()
        return self.report

    # Inputs

    def domain(self):
        try:
            return builtin_domain(self.cfg.domain, **self.cfg.domain_params)
        except (UnknownDomain, TypeError) as e:
            raise ConfigError(f"[domain] {e}")

    def measure(self):
        cfg = self.cfg
        if cfg.measure_file:
            if cfg.measure_file.endswith(".json"):
                return PointMeasure.import_from_json_file(cfg.measure_file)
            return PointMeasure.import_from_csv_file(cfg.measure_file)
        name = cfg.measure or self.spec.measure or "segment"
        try:
            return builtin_measure(name, cfg.atoms, **cfg.measure_params)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[measure] parameters do not fit generator '{name}': {e}")

    def lattice_constants(self, sigma):
        settings = self.cfg.lattice
        if settings.A0 is None:
            params = default_lattice_parameters(sigma, settings.C0)
            A0, k0 = params.A0, params.k0
        else:
            A0 = settings.A0
            diam = sigma.diameter()
            k0 = -math.ceil(math.log(diam) / math.log(A0)) if diam > 0 else 0
        if settings.k0 is not None:
            k0 = settings.k0
        return settings.C0, A0, (k0, settings.k_max)

    def lattice(self, sigma, deepen=0):
        C0, A0, (k0, k_max) = self.lattice_constants(sigma)
        if deepen:
            k_max = build_lattice(sigma, C0, A0, (k0, k_max)).k_max + deepen
        self.last_lattice = build_lattice(sigma, C0, A0, (k0, k_max))
        return self.last_lattice

    def riesz_config(self, n):
        return RieszConfig(n=n, c1=self.cfg.riesz.c1, cn=self.cfg.riesz.cn)

    def walks(self):
        return self.cfg.walks

    def point(self, key):
        return np.asarray(self.params[key], dtype=float)

    # Experiments

    def lattice_audit(self, prefix=""):
        mu = self.measure()
        lat = self.lattice(mu)
        rows = lat.audit()
        self.report.add_rows(f"{prefix}lattice_audit", rows)
        doubling = doubling_cells(lat)
        self.report.update({
            "atoms": len(mu),
            "cells": len(lat.cells),
            "k0": lat.k0,
            "k_max": lat.k_max,
            "C0": lat.C0,
            "A0": lat.A0,
            "relaxed": lat.relaxed,
            "all_invariants_pass": all(row["passed"] for row in rows),
            "doubling_cells": len(doubling.cells),
            "doubling_violations": len(doubling.violations),
        }, prefix)

        decay_rows = []
        for k in range(lat.k0, lat.k_max + 1):
            for cell in lat.generation_cells(k)[:int(self.params.get("decay_cells", 8))]:
                ratios, rate = small_boundary_decay(lat, cell)
                decay_rows.append({"generation": k, "cell": cell.id, "rate": rate,
                                   **{f"l{l}": r for l, r in enumerate(ratios)}})
        self.report.add_rows(f"{prefix}small_boundary", decay_rows)

        center = self.params.get("whitney_center")
        if center is None:
            # support point nearest to the barycenter
            center = mu.points[int(np.argmin(np.linalg.norm(mu.points - mu.points.mean(axis=0), axis=1)))]
        center = np.asarray(center, dtype=float)
        radius = self.params.get("whitney_radius") or 0.25 * mu.diameter()
        open_set = BallDomain(mu.ambient_dim, radius, center)
        try:
            whitney = whitney_decompose(lat, open_set, float(self.params.get("whitney_delta", 0.005)))
            self.report.update(whitney.summary(), f"{prefix}whitney_")
            self.report.set(f"{prefix}whitney_doubling_ok", whitney.doubling_fraction >= 0.5)
        except NoCellSmallEnough as e:
            logging.warning(f"Whitney decomposition skipped: {e}")
            self.report.set(f"{prefix}whitney_skipped", str(e))
        return lat

    def wos_validate(self):
        dom = self.domain()
        walks = self.walks()
        pole = self.point("pole")
        arcs = int(self.params["arcs"])
        center = getattr(dom, "center", np.zeros(2))
        targets = HarmonicMeasure.ArcPartition(arcs, center=center)
        exits = HarmonicMeasure.sample_exits(dom, pole, walks.walks, walks.shell_eps, self.cfg.seed,
                                             walks.max_steps)
        estimate = HarmonicMeasure.frequencies(exits, targets)
        edges = targets.edges()

        oracle = None
        if isinstance(dom, BallDomain) and dom.ambient_dim == 2:
            scaled_pole = (pole - dom.center) / dom.radius
            oracle = np.array([HarmonicMeasure.disk_poisson_arc(scaled_pole, edges[j], edges[j + 1])
                               for j in range(arcs)])

        rows = []
        for row, j in zip(estimate.rows(), range(arcs)):
            row.update({"theta0": edges[j], "theta1": edges[j + 1]})
            if oracle is not None:
                row["oracle"] = float(oracle[j])
                row["z"] = float((row["probability"] - oracle[j]) / row["std_error"]) if row["std_error"] > 0 else 0.0
            rows.append(row)
        self.report.add_rows("arcs", rows)
        self.report.update({"walks_kept": estimate.walks, "discard_fraction": estimate.discard_fraction,
                            "shell_eps": walks.shell_eps, "N": walks.walks,
                            "mean_steps": float(exits.steps.mean()) if len(exits) else 0.0})

        if oracle is not None:
            self.report.set("total_variation", 0.5 * float(np.abs(estimate.probabilities - oracle).sum()))
            self.report.set("max_abs_z", max(abs(row["z"]) for row in rows))
            # KS statistic of exit angles against the Poisson kernel CDF on a fine grid
            rel = exits.exit_points - dom.center
            angles = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2.0 * np.pi)
            grid = np.linspace(0.0, 2.0 * np.pi, 4097)
            kernel = (1.0 - scaled_pole @ scaled_pole) / (
                2.0 * np.pi * ((scaled_pole[0] - np.cos(grid)) ** 2 + (scaled_pole[1] - np.sin(grid)) ** 2))
            cdf = np.concatenate(([0.0], np.cumsum(0.5 * (kernel[1:] + kernel[:-1]) * np.diff(grid))))
            cdf /= cdf[-1]
            ks = kstest(angles, lambda t: np.interp(t, grid, cdf))
            self.report.update({"ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue)})

    def green_check(self):
        dom = self.domain()
        walks = self.walks()
        seed = self.cfg.seed
        cfg = self.riesz_config(dom.ambient_dim - 1)
        x, y, outside = self.point("x"), self.point("y"), self.point("exterior")
        N = walks.walks

        from_y = HarmonicMeasure.sample_exits(dom, y, N, walks.shell_eps, seed, walks.max_steps)
        from_x = HarmonicMeasure.sample_exits(dom, x, N, walks.shell_eps, seed, walks.max_steps, walk_offset=N)
        g_xy = HarmonicMeasure.green_from_exits(cfg, x, y, from_y)
        g_yx = HarmonicMeasure.green_from_exits(cfg, y, x, from_x)
        g_out = HarmonicMeasure.green_from_exits(cfg, outside, y, from_y)
        self.report.stochastic("G_xy", g_xy.value, g_xy.std_error, N)
        self.report.stochastic("G_yx", g_yx.value, g_yx.std_error, N)
        self.report.stochastic("G_exterior", g_out.value, g_out.std_error, N)
        combined = math.hypot(g_xy.std_error, g_yx.std_error)
        self.report.update({"symmetry_gap": abs(g_xy.value - g_yx.value), "symmetry_sigma": combined,
                            "symmetry_ok": abs(g_xy.value - g_yx.value) < 3.0 * combined,
                            "exterior_ok": abs(g_out.value) < 3.0 * g_out.std_error})

        if isinstance(dom, BallDomain) and dom.ambient_dim == 2 and dom.radius == 1.0 and not np.any(dom.center):
            exact = HarmonicMeasure.disk_green(x, y)
            self.report.update({"G_exact": exact, "relative_error": abs(g_xy.value - exact) / abs(exact)})

        B = Ball(self.point("ball_center"), float(self.params["ball_radius"]))
        x_B = self.point("pole")
        tests = HarmonicMeasure.ball_interior_samples(dom, Ball(dom.bbox.mean(axis=0), 0.5 * dom.scale),
                                                      16 * int(self.params["test_points"]), seed)
        tests = tests[np.linalg.norm(tests - B.center, axis=1) > 2.0 * B.radius][:int(self.params["test_points"])]
        relation = HarmonicMeasure.green_omega_relation(
            dom, B, x_B, tests, N, seed, walks.shell_eps, int(self.params["sphere_samples"]),
            uniform=dom.name != "slit_disk")
        self.report.stochastic("omega_pole", relation.omega_pole, relation.omega_pole_std_error, N)
        self.report.stochastic("rho", relation.rho, relation.rho_std_error, relation.rho_walks)
        self.report.update({"ratio_spread": relation.spread, "negative_control": relation.negative_control})
        self.report.add_rows("green_omega", [
            {"x": t, "ratio": r, "std_error": s, "N": N, "seed": seed}
            for t, r, s in zip(tests.tolist(), relation.ratios, relation.std_errors)])

    def pole_swap(self):
        dom = self.domain()
        walks = self.walks()
        B = Ball(self.point("ball_center"), float(self.params["ball_radius"]))
        partition = HarmonicMeasure.BallTracePartition(B, int(self.params["pieces"]),
                                                       split_sides=dom.name == "slit_disk")
        result = HarmonicMeasure.change_of_pole(dom, B, partition, self.point("p1"), self.point("p2"),
                                                float(self.params["c0"]), walks.walks, self.cfg.seed,
                                                walks.shell_eps)
        self.report.stochastic("max_quotient", result.max_quotient, result.max_std_error, walks.walks)
        self.report.update({"merged": result.merged, "pieces": len(result.groups)})
        self.report.add_rows("quotients", [
            {"pieces": group, "exits_p1": c[0], "exits_p2": c[1], "quotient": q, "std_error": s,
             "N": walks.walks, "seed": self.cfg.seed}
            for group, c, q, s in zip(result.groups, result.counts, result.quotients, result.std_errors)])

    def bourgain(self):
        dom = self.domain()
        mu = self.measure()
        walks = self.walks()
        result = HarmonicMeasure.bourgain_check(dom, mu, self.point("xi"), float(self.params["radius"]),
                                                float(self.params["delta"]), int(self.params["poles"]),
                                                walks.walks, self.cfg.seed, walks.shell_eps,
                                                growth_bound=float(self.params["growth_bound"]))
        self.report.stochastic("worst_ratio", result.worst_ratio, result.worst_std_error, walks.walks)
        self.report.update({"vacuous": result.vacuous, "growth_constant": result.growth_constant,
                            "growth_ok": result.growth_ok})
        self.report.add_rows("poles", [
            {"pole": p, "ratio": r, "std_error": s, "N": walks.walks, "seed": self.cfg.seed}
            for p, r, s in zip(result.poles.tolist(), result.ratios, result.std_errors)])

    def bharnack(self):
        dom = self.domain()
        walks = self.walks()
        xi = self.point("xi")
        r = float(self.params["radius"])
        probes = HarmonicMeasure.ball_interior_samples(dom, Ball(xi, r), int(self.params["probes"]), self.cfg.seed)
        u = HarmonicMeasure.HarmonicFunctionSpec("omega", ball=Ball(self.point("u_center"),
                                                                    float(self.params["u_radius"])))
        v = HarmonicMeasure.HarmonicFunctionSpec("green", pole=self.point("v_pole"))
        result = HarmonicMeasure.boundary_harnack_check(dom, xi, r, float(self.params["a1"]), u, v, probes,
                                                        walks.walks, self.cfg.seed, walks.shell_eps)
        self.report.stochastic("oscillation", result.oscillation, result.oscillation_std_error, walks.walks)
        self.report.set("vanishing_ok", result.vanishing_ok)
        self.report.add_rows("probes", [
            {"probe": p, "ratio": q, "std_error": s, "N": walks.walks, "seed": self.cfg.seed}
            for p, q, s in zip(probes.tolist(), result.ratios, result.std_errors)])

    def ainfty(self):
        dom = self.domain()
        mu = self.measure()
        walks = self.walks()
        exits = HarmonicMeasure.sample_exits(dom, self.point("pole"), walks.walks, walks.shell_eps,
                                             self.cfg.seed, walks.max_steps)
        omega = exits.to_point_measure(mu)
        lat = self.lattice(mu)
        kept = max(len(exits), 1)
        rows = []
        for k in range(lat.k0, lat.k_max + 1):
            mu_cells = lat.cell_masses(k)
            omega_cells = lat.cell_masses(k, omega.weights)
            for eps in np.atleast_1d(self.params["eps_grid"]):
                result = HarmonicMeasure.ainfty_scan(mu_cells, omega_cells, float(eps))
                # binomial error of the omega mass of the selected set, the set held fixed
                p = min(max(result.eps_prime, 0.0), 1.0)
                rows.append({"generation": k, "eps": float(eps), "eps_prime": result.eps_prime,
                             "std_error": math.sqrt(p * (1.0 - p) / kept),
                             "selected": len(result.selected), "fails": result.fails,
                             "N": walks.walks, "seed": self.cfg.seed})
        self.report.add_rows("ainfty", rows)
        finest = [row for row in rows if row["generation"] == lat.k_max]
        worst = max(finest, key=lambda row: row["eps_prime"])
        self.report.stochastic("worst_eps_prime", worst["eps_prime"], worst["std_error"], walks.walks)
        self.report.set("fails", any(row["fails"] for row in rows))

    def _pipeline(self, mu=None):
        cfg = self.cfg
        dom = self.domain()
        mu = self.measure() if mu is None else mu
        stopping = cfg.stopping
        center, radius = self.point("ball_center"), float(self.params["ball_radius"])
        inner = Ball(center, stopping.delta0 / 2.0 * radius)
        B = find_thin_boundary_ball(mu, inner, C1=stopping.C1, delta0=stopping.delta0)
        B0 = Corona.make_B0(mu, B, stopping)
        x_B = corkscrew_point(dom, B0.center, stopping.kappa * B0.radius, seed=cfg.seed).point
        walks = self.walks()
        exits = HarmonicMeasure.sample_exits(dom, x_B, walks.walks, walks.shell_eps, cfg.seed, walks.max_steps)
        C0, A0, k_range = self.lattice_constants(mu.restrict(B0.scaled(10.0)))
        joint = Corona.joint_lattice(mu, exits, B0, C0, A0, k_range)
        self.last_lattice = joint.lattice
        self.report.update({"B": B.to_dict(), "B0": B0.to_dict(), "x_B": x_B,
                            "omega_B0_check": Corona.b0_conclusions(mu, B, B0, stopping, joint.omega)})
        return Pipeline(dom, mu, B, B0, x_B, exits, joint)

    def bad_cubes(self, pipeline=None, prefix=""):
        p = pipeline or self._pipeline()
        stopping = self.cfg.stopping
        report = Corona.classify_bad(p.joint.lattice, p.joint.mu, p.B0, stopping)
        self.report.update(report.summary(), prefix)
        self.report.set(f"{prefix}N", self.cfg.walks.walks)
        self.report.add_rows(f"{prefix}bad_checks", report.checks)
        self.report.add_rows(f"{prefix}bad_cells", [
            {"cell": c, "type": kind, "generation": p.joint.lattice.cells[c].generation,
             "omega": p.joint.lattice.mass_of(p.joint.lattice.cells[c]),
             "mu": float(p.joint.mu.weights[p.joint.lattice.cells[c].members].sum())}
            for kind, cells in (("bad1", report.bad1), ("bad2", report.bad2)) for c in cells])
        self.report.add_rows(f"{prefix}A_sweep", Corona.bad_cube_sweep(p.joint.lattice, p.joint.mu, p.B0, stopping))
        growth = Corona.growth_check(p.joint.lattice, report, p.B0, stopping)
        self.report.update({"growth_worst": growth.worst, "growth_cells": growth.worst_cell,
                            "growth_balls": growth.worst_ball}, prefix)
        self.report.add_rows(f"{prefix}growth", growth.rows)
        return p, report

    def key_lemma(self, pipeline=None, prefix=""):
        p, report = self.bad_cubes(pipeline, prefix)
        stopping = self.cfg.stopping
        key = Corona.key_lemma_check(p.joint.lattice, report, p.B0, p.B, p.x_B, stopping)
        self.report.update({"key_truncated": key.worst_truncated, "key_maximal": key.worst_maximal,
                            "key_probe_cells": len(key.probe_cells), "key_probe_points": key.probe_points,
                            "key_vacuous": key.vacuous}, prefix)
        self.report.add_rows(f"{prefix}key_lemma", key.rows)
        t1 = Corona.t1_hypotheses(p.joint.lattice, report, p.B0, p.B, p.x_B, stopping)
        self.report.update(t1.summary(), f"{prefix}t1_")

    def _corona_tree(self, lat, prefix=""):
        top = lat.generation_cells(lat.k0)
        family = [c for cell in top for c in covering_by_doubling(lat, cell)[0]]
        if not family:
            raise ConfigError("The lattice has no doubling cell to root the corona tree")
        root = max(family, key=lambda c: (lat.mass_of(c), -c.generation, -c.id))
        tree = Corona.build_corona(lat, root, self.cfg.stopping)
        audit = tree.audit()
        ratio = Corona.packing_check(tree)
        labels = [node.label for node in tree.nodes.values()]
        self.report.update({
            "root": root.id,
            "nodes": len(tree.nodes),
            "levels": tree.levels(),
            "ugly": labels.count("ugly"),
            "nice": labels.count("nice"),
            "density_violations": sum(not node.density_ok for node in tree.nodes.values()),
            "audit_ok": all(row["passed"] for row in audit),
            "packing_ratio": ratio,
            "truncated": tree.truncated,
        }, prefix)
        self.report.add_rows(f"{prefix}corona_nodes", [node.to_dict() for node in tree.nodes.values()])
        self.report.add_rows(f"{prefix}corona_audit", audit)
        return tree, ratio

    def corona(self, prefix=""):
        mu = self.measure()
        lat = self.lattice(mu)
        tree, _ = self._corona_tree(lat, prefix)
        r_star = Corona.r_star_l1_check(tree, mu, self.riesz_config(mu.n))
        self.report.update({"r_star_normalized": r_star.normalized, "r_star_tail": r_star.tail,
                            "r_star_ugly": r_star.ugly_levels, "r_star_nice": r_star.nice_levels,
                            "r_star_dominated": r_star.dominated}, prefix)
        self.report.add_rows(f"{prefix}r_star", r_star.rows)

    def packing(self, prefix=""):
        mu = self.measure()
        _, shallow = self._corona_tree(self.lattice(mu), prefix)
        deeper = self.lattice(mu, deepen=1)
        _, deep = self._corona_tree(deeper, f"{prefix}deep_")
        self.report.set(f"{prefix}packing_drift", deep / shallow if shallow > 0 else math.inf)

    def riesz_norm(self, prefix=""):
        cfg = self.riesz_config(1)
        rows, norms = [], []
        for N in self.cfg.riesz.sizes:
            mu = segment(N)
            eps = self.cfg.riesz.eps_factor / N
            sweep, best = norm_sweep(cfg, mu, np.arange(N), [eps], self.cfg.riesz.method)
            row = dict(sweep[0])
            if N <= 100:
                row["dense_norm"] = float(np.linalg.norm(kernel_matrix(cfg, mu, np.arange(N), eps), 2))
            if N <= int(self.params.get("r_star_max_atoms", 800)):
                row["r_star_l1"] = r_star_l1_norm(cfg, mu)
            rows.append(row)
            norms.append(best)
        self.report.add_rows(f"{prefix}riesz_norms", rows)
        self.report.update({"norm_max": max(norms), "norm_min": min(norms),
                            "norm_spread": max(norms) / min(norms) if min(norms) > 0 else math.inf,
                            "all_converged": all(row["converged"] for row in rows)}, prefix)

    def full_pipeline(self):
        self.lattice_audit("lattice_")
        pipeline = self._pipeline()
        self.key_lemma(pipeline, "bad_")
        self.corona("corona_")
        self.packing("packing_")
        self.riesz_norm("riesz_")
