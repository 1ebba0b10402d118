import numpy as np
import pytest

from osrb import rateregions as rr
from osrb.probkit import Alphabet, ConditionalPmf, JointPmf, mutual_information


def bsc(e):
    return np.array([[1 - e, e], [e, 1 - e]])


def bsc_pair_joint(e1, e2, px=(0.5, 0.5)):
    joint = np.einsum("x,xy,xz->xyz", np.asarray(px), bsc(e1), bsc(e2))
    return JointPmf([Alphabet("X", 2), Alphabet("Y", 2), Alphabet("Z", 2)], joint)


def random_dmc_joint(rng, kx=2, ky=2):
    px = rng.dirichlet(np.ones(kx))
    ch = rng.dirichlet(np.ones(ky), size=kx)
    return JointPmf([Alphabet("X", kx), Alphabet("Y", ky)],
                    px[:, None] * ch)


def interval_oracle(sys, point, aux):
    """Feasibility of one auxiliary rate by interval intersection."""
    lo, hi = -np.inf, np.inf
    for q in sys.inequalities:
        coeffs, bound = q.as_upper()
        c = coeffs.get(aux, 0)
        rest = sum(co * point[v] for v, co in coeffs.items() if v != aux)
        if c == 0:
            if not rest < bound:
                return False
        elif c > 0:
            hi = min(hi, (bound - rest) / c)
        else:
            lo = max(lo, (rest - bound) / (-c))
    return lo < hi


class TestLinIneqAndSystem:
    def test_json_round_trip(self):
        sys = rr.ConstraintSystem(
            ("R", "Rt"),
            (rr.LinIneq.of({"R": 1, "Rt": 1}, "<", 1.25, tag="indep:{X}"),
             rr.LinIneq.of({"Rt": 1}, ">", 0.5, tag="sw:{X}")),
        )
        back = rr.ConstraintSystem.from_json(sys.to_json())
        assert back == sys

    def test_zero_coefficient_rejected(self):
        with pytest.raises(ValueError):
            rr.LinIneq.of({"R": 0}, "<", 1.0)

    def test_undeclared_variable_rejected(self):
        with pytest.raises(ValueError):
            rr.ConstraintSystem(("R",), (rr.LinIneq.of({"Q": 1}, "<", 1.0),))


class TestBuildRegion:
    def test_ptp_bsc01(self):
        p = bsc_pair_joint(0.1, 0.3)
        sys = rr.build_region("ptp", p)
        bounds = {q.tag: q.bound for q in sys.inequalities}
        assert bounds["sw:{X}"] == pytest.approx(0.46899559358928117, abs=1e-6)
        assert bounds["indep:{X}"] == pytest.approx(1.0, abs=1e-9)

    def test_covering_single_source_free(self):
        p = JointPmf([Alphabet("X", 3)], [0.2, 0.5, 0.3])
        sys = rr.build_region("covering", p)
        assert len(sys.inequalities) == 1
        assert sys.inequalities[0].bound == pytest.approx(0.0, abs=1e-12)
        assert sys.inequalities[0].sense == ">"

    def test_berger_tung_lossless_corner(self):
        # U_j = X_j: after elimination the region is the SW region
        rng = np.random.default_rng(0)
        m = rng.random((2, 2))
        m /= m.sum()
        joint = np.einsum("ab,au,bv->abuv", m, np.eye(2), np.eye(2))
        p = JointPmf(
            [Alphabet("X1", 2), Alphabet("X2", 2), Alphabet("U1", 2), Alphabet("U2", 2)], joint
        )
        sys = rr.build_region("berger_tung", p)
        red = rr.eliminate_all(sys, ["Rt1", "Rt2"])
        from osrb.probkit import entropy_conditional

        h1 = entropy_conditional(p, ["X1"], ["X2"])
        h2 = entropy_conditional(p, ["X2"], ["X1"])
        h12 = entropy_conditional(p, ["X1", "X2"])
        rng = np.random.default_rng(1)
        for _ in range(500):
            pt = {"R1": float(rng.uniform(-0.2, 1.5)), "R2": float(rng.uniform(-0.2, 1.5))}
            in_sw = pt["R1"] > h1 and pt["R2"] > h2 and pt["R1"] + pt["R2"] > h12
            assert rr.membership(pt, red) == in_sw

    def test_missing_variable_named(self):
        p = JointPmf([Alphabet("X", 2)], [0.5, 0.5])
        with pytest.raises(rr.RegionTemplateError, match="Y"):
            rr.build_region("ptp", p)

    def test_independent_bt_sources_factorize(self):
        # X1 independent of X2: every cross bound splits into per-source terms
        rng = np.random.default_rng(1)
        p1, p2 = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
        c1, c2 = rng.dirichlet(np.ones(2), size=2), rng.dirichlet(np.ones(2), size=2)
        joint = np.einsum("a,b,au,bv->abuv", p1, p2, c1, c2)
        p = JointPmf(
            [Alphabet("X1", 2), Alphabet("X2", 2), Alphabet("U1", 2), Alphabet("U2", 2)], joint
        )
        sys = rr.build_region("berger_tung", p)
        bounds = {q.tag: q.bound for q in sys.inequalities}
        from osrb.probkit import entropy

        assert bounds["sw:{1,2}"] == pytest.approx(
            entropy(p, ["U1"]) + entropy(p, ["U2"]), abs=1e-9
        )
        assert bounds["sw:{1}"] == pytest.approx(entropy(p, ["U1"]), abs=1e-9)


class TestFme:
    def test_single_pair(self):
        sys = rr.ConstraintSystem(
            ("R", "Rt"),
            (rr.LinIneq.of({"Rt": 1}, ">", 0.3), rr.LinIneq.of({"R": 1, "Rt": 1}, "<", 1.0)),
        )
        red = rr.fme_eliminate(sys, "Rt")
        assert len(red.inequalities) == 1
        q = red.inequalities[0]
        assert q.coeff_map == {"R": 1}
        assert q.bound == pytest.approx(0.7, abs=1e-12)
        assert q.sense == "<"  # strictness preserved

    def test_ptp_eliminates_to_capacity(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            p = random_dmc_joint(rng, kx=int(rng.integers(2, 4)), ky=int(rng.integers(2, 4)))
            sys = rr.build_region("ptp", p)
            red = rr.fme_eliminate(sys, "Rt")
            assert len(red.inequalities) == 1
            cap = mutual_information(p, ["X"], ["Y"])
            assert red.inequalities[0].bound == pytest.approx(cap, abs=1e-9)

    def test_wiretap_secrecy_rate(self):
        p = bsc_pair_joint(0.05, 0.3)
        red = rr.fme_eliminate(rr.build_region("wiretap", p), "Rt")
        assert red.inequalities[0].bound == pytest.approx(0.5948939421147365, abs=1e-9)

    def test_unknown_variable(self):
        sys = rr.ConstraintSystem(("R",), (rr.LinIneq.of({"R": 1}, "<", 1.0),))
        with pytest.raises(ValueError):
            rr.fme_eliminate(sys, "Q")

    def test_duplicate_and_dominated_removed(self):
        sys = rr.ConstraintSystem(
            ("R", "Rt"),
            (
                rr.LinIneq.of({"Rt": 1}, ">", 0.2),
                rr.LinIneq.of({"Rt": 2}, ">", 0.6),  # scaled, tighter: Rt > 0.3
                rr.LinIneq.of({"R": 1, "Rt": 1}, "<", 1.0),
            ),
        )
        red = rr.fme_eliminate(sys, "Rt")
        assert len(red.inequalities) == 1
        assert red.inequalities[0].bound == pytest.approx(0.7, abs=1e-12)

    def test_empty_projection_flagged(self):
        sys = rr.ConstraintSystem(
            ("R", "Rt"),
            (rr.LinIneq.of({"Rt": 1}, ">", 0.8), rr.LinIneq.of({"Rt": 1}, "<", 0.2),),
        )
        red = rr.fme_eliminate(sys, "Rt")
        assert red.infeasible
        assert not rr.membership({"R": 0.0}, red)

    def test_membership_strict(self):
        sys = rr.ConstraintSystem(("R",), (rr.LinIneq.of({"R": 1}, "<", 0.5),))
        assert rr.membership({"R": 0.0}, sys)
        assert not rr.membership({"R": 0.5}, sys)  # boundary excluded
        with pytest.raises(ValueError, match="R"):
            rr.membership({}, sys)

    def test_projection_oracle_agreement_ptp(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            p = random_dmc_joint(rng)
            sys = rr.build_region("ptp", p)
            red = rr.fme_eliminate(sys, "Rt")
            for _ in range(200):
                point = {"R": float(rng.uniform(-0.3, 1.4))}
                assert rr.membership(point, red) == interval_oracle(sys, point, "Rt")


class TestSecrecyForFree:
    def test_ptp_vs_wiretap(self):
        p = bsc_pair_joint(0.1, 0.25)
        plain = rr.build_region("ptp", p)
        secret = rr.build_region("wiretap", p)
        assert [q.tag for q in plain.inequalities] == [q.tag for q in secret.inequalities]
        assert [q.coeffs for q in plain.inequalities] == [q.coeffs for q in secret.inequalities]
        for qp, qs in zip(plain.inequalities, secret.inequalities):
            assert qp.sense == qs.sense
            if qp.tag.startswith("sw"):
                assert qp.bound == qs.bound
            else:
                from osrb.probkit import entropy_conditional

                assert qs.bound == pytest.approx(
                    entropy_conditional(p, ["X"], ["Z"]), abs=1e-12
                )

    def test_marton_vs_marton_secrecy(self):
        rng = np.random.default_rng(5)
        mass = rng.random((2, 2, 2, 2, 2, 2))
        mass /= mass.sum()
        p = JointPmf(
            [Alphabet("U0", 2), Alphabet("U1", 2), Alphabet("U2", 2),
             Alphabet("Y1", 2), Alphabet("Y2", 2), Alphabet("Z", 2)], mass
        )
        plain = rr.build_region("marton", p)
        secret = rr.build_region("marton_secrecy", p)
        assert [q.tag for q in plain.inequalities] == [q.tag for q in secret.inequalities]
        assert [q.coeffs for q in plain.inequalities] == [q.coeffs for q in secret.inequalities]
        for qp, qs in zip(plain.inequalities, secret.inequalities):
            if qp.tag.startswith("sw"):
                assert qp.bound == qs.bound  # reliability family untouched
            else:
                assert qs.bound <= qp.bound + 1e-12  # conditioning cannot raise entropy


class TestNncRate:
    def _joint(self, rng, nu=2, nx=2, nur=2, nxr=2, nyr=2, ny=2, nz=2, nyh=2,
               yh_const=False, ur_const=False):
        if ur_const:
            nur = nxr = 1
        if yh_const:
            nyh = 1
        pux = rng.dirichlet(np.ones(nu * nx)).reshape(nu, nx)
        purxr = rng.dirichlet(np.ones(nur * nxr)).reshape(nur, nxr)
        ch = rng.dirichlet(np.ones(nyr * ny * nz), size=(nx, nxr)).reshape(nx, nxr, nyr, ny, nz)
        comp = rng.dirichlet(np.ones(nyh), size=(nur, nyr)).reshape(nur, nyr, nyh)
        joint = np.einsum("ux,vw,xwryz,vrh->uxvwryzh", pux, purxr, ch, comp)
        return JointPmf(
            [Alphabet("U", nu), Alphabet("X", nx), Alphabet("Ur", nur), Alphabet("Xr", nxr),
             Alphabet("Yr", nyr), Alphabet("Y", ny), Alphabet("Z", nz), Alphabet("Yh", nyh)],
            joint,
        )

    def test_relay_disabled_recovers_wiretap_rate(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            p = self._joint(rng, yh_const=True, ur_const=True)
            rate = rr.nnc_wiretap_rate(p)
            direct = max(
                0.0,
                mutual_information(p, ("U",), ("Y",)) - mutual_information(p, ("U",), ("Z",)),
            )
            assert rate == pytest.approx(direct, abs=1e-9)
            assert rate >= 0.0

    def test_noise_forwarding_terms(self):
        # compression disabled: the five terms reduce to noise forwarding
        rng = np.random.default_rng(7)
        p = self._joint(rng, yh_const=True)

        def cmi(a, b, c):
            from osrb.probkit import entropy

            def h(vs):
                return entropy(p, vs)

            a, b, c = tuple(a), tuple(b), tuple(c)
            return (h(a + c) + h(b + c) - h(a + b + c) - h(c)) if c else (
                h(a) + h(b) - h(a + b)
            )

        expected = max(
            0.0,
            max(
                min(cmi("U", "Y", ("Ur",)), cmi(("U", "Ur"), "Y", ())) - cmi("U", ("Z",), ("Ur",)),
                min(
                    min(cmi("U", "Y", ("Ur",)), cmi(("U", "Ur"), "Y", ()))
                    - mutual_information(p, ("U",), ("Z",)),
                    cmi(("U", "Ur"), "Y", ()) - cmi(("U", "Ur"), "Z", ()),
                ),
            ),
        )
        assert rr.nnc_wiretap_rate(p) == pytest.approx(expected, abs=1e-9)

    def test_deterministic_relay_matches_direct_evaluation(self):
        # Yh = Yr: independent re-evaluation of all five terms
        rng = np.random.default_rng(8)
        pux = rng.dirichlet(np.ones(4)).reshape(2, 2)
        purxr = rng.dirichlet(np.ones(4)).reshape(2, 2)
        ch = rng.dirichlet(np.ones(8), size=(2, 2)).reshape(2, 2, 2, 2, 2)
        comp = np.zeros((2, 2, 2))
        comp[:, 0, 0] = 1.0
        comp[:, 1, 1] = 1.0
        joint = np.einsum("ux,vw,xwryz,vrh->uxvwryzh", pux, purxr, ch, comp)
        p = JointPmf(
            [Alphabet("U", 2), Alphabet("X", 2), Alphabet("Ur", 2), Alphabet("Xr", 2),
             Alphabet("Yr", 2), Alphabet("Y", 2), Alphabet("Z", 2), Alphabet("Yh", 2)],
            joint,
        )
        from osrb.probkit import entropy

        def h(vs):
            return entropy(p, tuple(vs))

        def cmi(a, b, c):
            a, b, c = tuple(a), tuple(b), tuple(c)
            joined = a + b + c
            return h(a + c) + h(b + c) - h(joined) - (h(c) if c else 0.0)

        r_bc_y = cmi(("U",), ("Y", "Yh"), ("Ur",))
        r_bc_z = cmi(("U",), ("Z", "Yh"), ("Ur",))
        r_mac_y = cmi(("U", "Ur"), ("Y",), ()) - cmi(("Yr",), ("Yh",), ("U", "Ur", "Y"))
        r_mac_z = cmi(("U", "Ur"), ("Z",), ()) - cmi(("Yr",), ("Yh",), ("U", "Ur", "Z"))
        r_nnc = min(r_bc_y, r_mac_y)
        expected = max(0.0, max(
            r_nnc - r_bc_z,
            min(r_nnc - mutual_information(p, ("U",), ("Z",)), r_mac_y - r_mac_z),
        ))
        assert rr.nnc_wiretap_rate(p) == pytest.approx(expected, abs=1e-9)

    def test_factorization_violation_rejected(self):
        rng = np.random.default_rng(9)
        mass = rng.random((2,) * 8)
        mass /= mass.sum()
        p = JointPmf(
            [Alphabet("U", 2), Alphabet("X", 2), Alphabet("Ur", 2), Alphabet("Xr", 2),
             Alphabet("Yr", 2), Alphabet("Y", 2), Alphabet("Z", 2), Alphabet("Yh", 2)],
            mass,
        )
        with pytest.raises(ValueError, match="factor"):
            rr.nnc_wiretap_rate(p)


class TestOptimizeAux:
    def test_wiretap_forced_identity(self):
        ch = np.einsum("xy,xz->xyz", bsc(0.05), bsc(0.3))
        channel = ConditionalPmf([Alphabet("X", 2)], [Alphabet("Y", 2), Alphabet("Z", 2)], ch)
        spec = rr.AuxSearchSpec(aux_sizes=(2,), budget=6, objective="max_rate", seed=11)
        res = rr.optimize_aux("wiretap", {"channel": channel, "fix_u_eq_x": True}, spec)
        assert res.feasible
        assert res.value == pytest.approx(0.5948939421147365, abs=1e-3)

    def test_monotone_in_budget(self):
        ch = np.einsum("xy,xz->xyz", bsc(0.1), bsc(0.4))
        channel = ConditionalPmf([Alphabet("X", 2)], [Alphabet("Y", 2), Alphabet("Z", 2)], ch)
        vals = []
        for budget in (1, 3, 6):
            spec = rr.AuxSearchSpec(aux_sizes=(2,), budget=budget, objective="max_rate", seed=3)
            vals.append(rr.optimize_aux("wiretap", {"channel": channel}, spec).value)
        assert vals[0] <= vals[1] + 1e-12 <= vals[2] + 2e-12

    def test_infeasible_reported(self):
        src = JointPmf([Alphabet("X1", 2), Alphabet("X2", 2)], [[0.4, 0.1], [0.1, 0.4]])
        model = {"source": src, "d1": 1 - np.eye(2), "d2": 1 - np.eye(2),
                 "D1": -0.1, "D2": -0.1}
        spec = rr.AuxSearchSpec(aux_sizes=(2, 2), budget=4, objective="min_sum_rate", seed=1)
        res = rr.optimize_aux("berger_tung", model, spec)
        assert not res.feasible

    def test_bt_sum_rate_lossless(self):
        src = JointPmf([Alphabet("X1", 2), Alphabet("X2", 2)], [[0.4, 0.1], [0.1, 0.4]])
        model = {"source": src, "d1": 1 - np.eye(2), "d2": 1 - np.eye(2), "D1": 0.0, "D2": 0.0}
        spec = rr.AuxSearchSpec(aux_sizes=(2, 2), budget=5, objective="min_sum_rate", seed=2)
        res = rr.optimize_aux("berger_tung", model, spec)
        from osrb.probkit import entropy

        assert res.feasible
        assert res.value == pytest.approx(entropy(src, ["X1", "X2"]), abs=1e-6)
