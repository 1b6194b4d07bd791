import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfel.errors import AvailabilityError, ConstraintViolation, DegenerateInput, StructuralError
from hfel.model import (CostBreakdown, DeviceProfile, EdgeServerProfile, GroupAllocation, SystemConfig, World,
                        check_partition, comm_delay_energy, comp_delay, comp_energy, edge_iterations, global_cost,
                        group_cost, local_iterations, tx_rate)

from _helpers import crafted_world, reference_global_cost, reference_group_cost

E = math.e


def device(**kw):
    base = dict(id=0, cycles_per_sample=1.0, data_size=1e9, f_min=1e8, f_max=1e10, alpha=2e-28, tx_power=0.2,
                channel_gain={0: 1e-7}, update_size=25000.0)
    base.update(kw)
    return DeviceProfile(**base)


def server(**kw):
    base = dict(id=0, bandwidth=1e7, cloud_rate=5e6, cloud_tx_power=1.0, cloud_update_size=25000.0,
                available_devices={0, 1, 2})
    base.update(kw)
    return EdgeServerProfile(**base)


def cfg_with_L(big_l, **kw):
    # theta chosen so that mu ln(1/theta) = big_l with mu = 1
    return SystemConfig(mu=1.0, theta=math.exp(-big_l), **kw)


class TestIterationCounts:
    def test_local_unit(self):
        assert local_iterations(SystemConfig(mu=1.0, theta=1 / E)) == pytest.approx(1.0, rel=1e-15)

    def test_local_default(self):
        assert local_iterations(SystemConfig(mu=10.0, theta=0.9)) == pytest.approx(1.0536, abs=5e-5)

    def test_local_vanishes_near_one(self):
        assert local_iterations(SystemConfig(mu=5.0, theta=1 - 1e-12)) < 1e-10

    def test_edge_theta_zero(self):
        # theta = 0 is outside the config's open interval, so evaluate the formula on a plain record
        rec = type("C", (), dict(delta=1.0, epsilon=1 / E, theta=0.0))
        assert edge_iterations(rec) == pytest.approx(1.0, rel=1e-15)

    def test_edge_half(self):
        assert edge_iterations(SystemConfig(delta=1.0, epsilon=1 / E, theta=0.5)) == pytest.approx(2.0, rel=1e-15)

    def test_edge_default(self):
        assert edge_iterations(SystemConfig(delta=2.0, epsilon=0.9, theta=0.9)) == pytest.approx(2.1072, abs=5e-5)

    def test_edge_theta_one_is_degenerate(self):
        rec = type("C", (), dict(delta=1.0, epsilon=0.5, theta=1.0))
        with pytest.raises(DegenerateInput):
            edge_iterations(rec)

    @pytest.mark.parametrize("field,value", [("theta", 1.0), ("theta", 0.0), ("epsilon", 1.5), ("mu", 0.0),
                                             ("lambda_e", -0.1), ("noise_N0", 0.0)])
    def test_config_rejects(self, field, value):
        with pytest.raises(ValueError, match=field.split("_")[0]):
            SystemConfig(**{field: value})


class TestComputation:
    def test_delay_ten_seconds(self):
        assert comp_delay(device(), 1e9, cfg_with_L(10.0)) == pytest.approx(10.0, rel=1e-12)

    def test_delay_tenth(self):
        assert comp_delay(device(), 1e10, cfg_with_L(1.0)) == pytest.approx(0.1, rel=1e-12)

    def test_doubling_f_halves_delay(self):
        d, c = device(), cfg_with_L(3.0)
        assert comp_delay(d, 4e9, c) == pytest.approx(comp_delay(d, 2e9, c) / 2, rel=1e-15)

    def test_energy_value(self):
        assert comp_energy(device(), 1e9, cfg_with_L(1.0)) == pytest.approx(0.1, rel=1e-12)

    def test_energy_minimal_at_f_min(self):
        d, c = device(), cfg_with_L(1.0)
        fs = np.linspace(d.f_min, d.f_max, 50)
        vals = [comp_energy(d, f, c) for f in fs]
        assert int(np.argmin(vals)) == 0

    def test_zero_capacitance(self):
        # profiles reject alpha = 0, so check the formula's linearity in alpha instead
        c = cfg_with_L(1.0)
        e1 = comp_energy(device(alpha=1e-30), 1e9, c)
        e2 = comp_energy(device(alpha=2e-30), 1e9, c)
        assert e2 == pytest.approx(2 * e1, rel=1e-14)
        assert e1 - (e2 - e1) == pytest.approx(0.0, abs=1e-18)

    @pytest.mark.parametrize("f", [0.5e8, 2e10])
    def test_out_of_box(self, f):
        with pytest.raises(ConstraintViolation):
            comp_delay(device(), f, cfg_with_L(1.0))
        with pytest.raises(ConstraintViolation):
            comp_energy(device(), f, cfg_with_L(1.0))


class TestCommunication:
    def test_rate_one_nat(self):
        c = SystemConfig(noise_N0=1e-8)
        d = device(channel_gain={0: (E - 1) * 1e-8 / 0.2})
        assert tx_rate(d, 1.0, server(), c) == pytest.approx(1e7, rel=1e-12)

    def test_rate_linear_in_beta(self):
        c, d = SystemConfig(), device()
        assert tx_rate(d, 0.5, server(), c) == pytest.approx(tx_rate(d, 1.0, server(), c) / 2, rel=1e-15)

    def test_vanishing_gain_gives_vanishing_rate(self):
        assert tx_rate(device(channel_gain={0: 1e-300}), 1.0, server(), SystemConfig()) < 1e-280

    @pytest.mark.parametrize("beta", [0.0, -0.2, 1.5])
    def test_rate_rejects_beta(self, beta):
        with pytest.raises(ConstraintViolation):
            tx_rate(device(), beta, server(), SystemConfig())

    def test_upload_delay_and_energy(self):
        # rate exactly 1e7 nats/s
        c = SystemConfig(noise_N0=1e-8)
        d = device(channel_gain={0: (E - 1) * 1e-8 / 0.2})
        t, e = comm_delay_energy(d, 1.0, server(), c)
        assert t == pytest.approx(2.5e-3, rel=1e-12)
        assert e == pytest.approx(5e-4, rel=1e-12)

    def test_doubling_beta_halves_both(self):
        c, d = SystemConfig(), device()
        t1, e1 = comm_delay_energy(d, 0.25, server(), c)
        t2, e2 = comm_delay_energy(d, 0.5, server(), c)
        assert t2 == pytest.approx(t1 / 2, rel=1e-14)
        assert e2 == pytest.approx(e1 / 2, rel=1e-14)


class TestGroupCost:
    cfg = SystemConfig(lambda_e=0.3, lambda_t=0.7)

    def test_single_device(self):
        d, s = device(), server()
        big_i = edge_iterations(self.cfg)
        t_up, e_up = comm_delay_energy(d, 1.0, s, self.cfg)
        g = group_cost(GroupAllocation(0, (0,), {0: 3e9}, {0: 1.0}), [d], s, self.cfg)
        assert g.energy == pytest.approx(big_i * (e_up + comp_energy(d, 3e9, self.cfg)), rel=1e-14)
        assert g.delay == pytest.approx(big_i * (t_up + comp_delay(d, 3e9, self.cfg)), rel=1e-14)
        assert g.weighted == pytest.approx(0.3 * g.energy + 0.7 * g.delay, rel=1e-12)

    def test_two_identical_devices(self):
        devs = [device(id=0), device(id=1)]
        s = server()
        one = group_cost(GroupAllocation(0, (0,), {0: 2e9}, {0: 0.5}), devs, s, self.cfg)
        two = group_cost(GroupAllocation(0, (0, 1), {0: 2e9, 1: 2e9}, {0: 0.5, 1: 0.5}), devs, s, self.cfg)
        assert two.delay == pytest.approx(one.delay, rel=1e-15)
        assert two.energy == pytest.approx(2 * one.energy, rel=1e-15)

    def test_three_devices_against_reference(self):
        w = crafted_world([[10, 20], [150, 40], [300, 260]], [[100, 100]], density=[35.0, 62.0, 97.0],
                          size_bits=[4.1e7, 5.5e7, 7.9e7])
        freqs = {0: 1.3e9, 1: 4.4e9, 2: 9.1e9}
        betas = {0: 0.2, 1: 0.3, 2: 0.5}
        alloc = GroupAllocation(0, (0, 1, 2), freqs, betas)
        got = group_cost(alloc, w.devices, w.servers[0], self.cfg)
        ref = reference_group_cost((0, 1, 2), freqs, betas, w.devices, w.servers[0], self.cfg)
        for k in ("energy", "delay", "weighted"):
            assert getattr(got, k) == pytest.approx(getattr(ref, k), rel=1e-12)

    def test_betas_above_one_rejected(self):
        with pytest.raises(ConstraintViolation):
            group_cost(GroupAllocation(0, (0, 1), {0: 2e9, 1: 2e9}, {0: 0.6, 1: 0.6}),
                       [device(id=0), device(id=1)], server(), self.cfg)

    def test_unavailable_member(self):
        with pytest.raises(AvailabilityError):
            group_cost(GroupAllocation(0, (0,), {0: 2e9}, {0: 1.0}), [device()], server(available_devices={1}),
                       self.cfg)


class TestGlobalCost:
    cfg = SystemConfig(lambda_e=0.4, lambda_t=0.6)

    def test_single_server(self):
        w = crafted_world([[10, 20], [80, 40]], [[50, 50]])
        alloc = GroupAllocation(0, (0, 1), {0: 2e9, 1: 3e9}, {0: 0.4, 1: 0.6})
        g = group_cost(alloc, w.devices, w.servers[0], self.cfg)
        s = w.servers[0]
        t_cloud = s.cloud_update_size / s.cloud_rate
        tot = global_cost({0: alloc}, w, self.cfg)
        assert tot.energy == pytest.approx(g.energy + s.cloud_tx_power * t_cloud, rel=1e-14)
        assert tot.delay == pytest.approx(g.delay + t_cloud, rel=1e-14)

    def test_cloud_terms_vanish(self):
        w = crafted_world([[10, 20], [80, 40]], [[50, 50]], cloud_tx_power_w=0.0, cloud_rate=1e300)
        alloc = GroupAllocation(0, (0, 1), {0: 2e9, 1: 3e9}, {0: 0.4, 1: 0.6})
        g = group_cost(alloc, w.devices, w.servers[0], self.cfg)
        tot = global_cost({0: alloc}, w, self.cfg)
        assert tot.energy == pytest.approx(g.energy, rel=1e-14)
        assert tot.delay == pytest.approx(g.delay, rel=1e-14)
        assert tot.weighted == pytest.approx(g.weighted, rel=1e-14)

    def test_two_servers_four_devices(self):
        w = crafted_world([[10, 20], [80, 40], [400, 420], [450, 380]], [[50, 50], [420, 400]],
                          density=[40.0, 55.0, 70.0, 90.0], size_bits=[4e7, 5e7, 6e7, 8e7])
        groups = {0: (0, 1), 1: (2, 3)}
        freqs = {0: 2e9, 1: 3e9, 2: 5e9, 3: 8e9}
        betas = {0: 0.3, 1: 0.7, 2: 0.55, 3: 0.45}
        allocs = {i: GroupAllocation(i, m, {n: freqs[n] for n in m}, {n: betas[n] for n in m})
                  for i, m in groups.items()}
        got = global_cost(allocs, w, self.cfg)
        ref = reference_global_cost(groups, freqs, betas, w, self.cfg)
        for k in ("energy", "delay", "weighted"):
            assert getattr(got, k) == pytest.approx(getattr(ref, k), rel=1e-12)

    def test_non_partition(self):
        w = crafted_world([[10, 20], [80, 40]], [[50, 50], [60, 60]])
        a = GroupAllocation(0, (0,), {0: 2e9}, {0: 1.0})
        b = GroupAllocation(1, (0,), {0: 2e9}, {0: 1.0})
        with pytest.raises(StructuralError):
            global_cost({0: a, 1: b}, w, self.cfg)
        with pytest.raises(StructuralError):
            check_partition({0: (0,)}, w)


class TestProfiles:
    def test_server_needs_devices(self):
        with pytest.raises(ValueError):
            server(available_devices=set())

    def test_world_ids_in_order(self):
        with pytest.raises(StructuralError):
            World([device(id=1)], [server()])

    def test_breakdown_addition(self):
        s = CostBreakdown(1.0, 2.0, 3.0) + CostBreakdown(0.5, 0.5, 1.0)
        assert (s.energy, s.delay, s.weighted) == (1.5, 2.5, 4.0)


freq = st.floats(1e9, 1e10)
share = st.floats(0.01, 1.0)


@settings(max_examples=60, deadline=None)
@given(f1=freq, f2=freq)
def test_monotone_in_frequency(f1, f2):
    d, c = device(), SystemConfig()
    if f1 == f2:
        return
    lo, hi = min(f1, f2), max(f1, f2)
    assert comp_energy(d, lo, c) < comp_energy(d, hi, c)
    assert comp_delay(d, lo, c) > comp_delay(d, hi, c)


@settings(max_examples=60, deadline=None)
@given(b1=share, b2=share)
def test_monotone_in_share(b1, b2):
    if b1 == b2:
        return
    lo, hi = min(b1, b2), max(b1, b2)
    t_lo, e_lo = comm_delay_energy(device(), lo, server(), SystemConfig())
    t_hi, e_hi = comm_delay_energy(device(), hi, server(), SystemConfig())
    assert t_lo > t_hi and e_lo > e_hi


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(0.01, 100.0), le=st.floats(0.0, 1.0), fa=freq, fb=freq, ba=share)
def test_weight_scaling(scale, le, fa, fb, ba):
    w = crafted_world([[10, 20], [80, 40]], [[50, 50]])
    base = SystemConfig(lambda_e=le, lambda_t=1.0 - le)
    scaled = base.with_weights(scale * le, scale * (1.0 - le))
    x = GroupAllocation(0, (0, 1), {0: fa, 1: fb}, {0: ba * 0.99, 1: 1 - ba * 0.99})
    y = GroupAllocation(0, (0, 1), {0: fb, 1: fa}, {0: 0.5, 1: 0.5})
    cx, cy = (group_cost(a, w.devices, w.servers[0], base) for a in (x, y))
    sx, sy = (group_cost(a, w.devices, w.servers[0], scaled) for a in (x, y))
    assert sx.weighted == pytest.approx(scale * cx.weighted, rel=1e-12)
    if abs(cx.weighted - cy.weighted) > 1e-9 * max(cx.weighted, cy.weighted):
        assert (cx.weighted < cy.weighted) == (sx.weighted < sy.weighted)


@settings(max_examples=40, deadline=None)
@given(fs=st.lists(freq, min_size=3, max_size=3), raw=st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3))
def test_group_energy_additive_delay_max(fs, raw):
    w = crafted_world([[10, 20], [80, 40], [200, 10]], [[50, 50]], density=[30.0, 60.0, 90.0])
    c = SystemConfig()
    betas = np.array(raw) / sum(raw)
    m = (0, 1, 2)
    whole = group_cost(GroupAllocation(0, m, dict(zip(m, fs)), dict(zip(m, betas))), w.devices, w.servers[0], c)
    parts = [group_cost(GroupAllocation(0, (n,), {n: fs[n]}, {n: betas[n]}), w.devices, w.servers[0], c)
             for n in m]
    assert whole.energy == pytest.approx(sum(p.energy for p in parts), rel=1e-12)
    assert whole.delay == pytest.approx(max(p.delay for p in parts), rel=1e-14)
    assert whole.energy >= 0 and whole.delay >= 0 and math.isfinite(whole.weighted)
