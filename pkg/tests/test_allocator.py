import numpy as np
import pytest

from hfelsim.alloc import (Allocation, EnergyLedger,
                           InfeasibleAllocationError, allocation_energies,
                           allocation_round_time, best_frequency_for_deadline,
                           best_frequency_for_energy,
                           brute_force_allocation_oracle,
                           commitment_multiplier, energy_cap,
                           min_bandwidth_for_deadline, solve_round_allocation,
                           solve_with_caps)
from hfelsim.cost import ChannelState, DeviceProfile, comp_energy

from .oracles import make_hyper, random_allocation_instance


def simple_profile(**overrides):
    base = dict(mu=2e5, alpha=2e-29, power=0.01, f_min=2e9, f_max=3e9,
                energy_budget=1.0)
    base.update(overrides)
    return DeviceProfile(**base)


class TestEnergyLedger:
    def test_charge_and_remaining(self):
        ledger = EnergyLedger(np.array([1.0, 2.0]))
        ledger.charge(np.array([0.25, 0.5]))
        assert np.allclose(ledger.remaining(), [0.75, 1.5])

    def test_overdraft_names_device(self):
        ledger = EnergyLedger(np.array([1.0, 1.0]))
        with pytest.raises(InfeasibleAllocationError) as err:
            ledger.charge(np.array([0.5, 1.5]))
        assert err.value.device == 1

    def test_tolerates_roundoff(self):
        ledger = EnergyLedger(np.array([1.0]))
        ledger.charge(np.array([1.0 + 1e-12]))  # inside BUDGET_RTOL


class TestCommitmentMultiplier:
    def test_frozen_values(self):
        # T=10, R=2, zero-based (t, r): (T - t) * R + R - r mid-round,
        # (T - t) * R + 1 on the closing edge round
        assert commitment_multiplier(0, 0, 10, 2, last_round=False) == 22
        assert commitment_multiplier(0, 1, 10, 2, last_round=True) == 21
        assert commitment_multiplier(9, 1, 10, 2, last_round=True) == 3
        assert commitment_multiplier(9, 0, 10, 2, last_round=False) == 4

    def test_multiplier_decreases_over_rounds(self):
        vals = [commitment_multiplier(t, r, 10, 2, last_round=(r == 1))
                for t in range(10) for r in range(2)]
        assert vals == sorted(vals, reverse=True)
        assert vals[-1] == 3

    def test_cap_from_ledger(self):
        ledger = EnergyLedger(np.array([1.0]))
        caps = energy_cap(ledger, 0, 0, 1, 1, last_round=True)
        assert caps[0] == pytest.approx(0.5)  # (1-0)*1 + 1 = 2 rounds ahead
        ledger.charge(np.array([0.5]))
        caps = energy_cap(ledger, 0, 0, 2, 1, last_round=False)
        assert caps[0] == pytest.approx(0.5 / 3.0)

    def test_cap_zero_when_exhausted(self):
        ledger = EnergyLedger(np.array([1.0]), np.array([1.0]))
        caps = energy_cap(ledger, 0, 0, 5, 2, last_round=False)
        assert caps[0] == 0.0


class TestSingleDeviceHelpers:
    def test_min_bandwidth_frozen(self):
        profile = simple_profile(mu=1e9, f_min=1e9, f_max=1e9)
        hyper = make_hyper(local_iters=1, batch_size=1, model_bits=1e6)
        b = min_bandwidth_for_deadline(profile, hyper, snr=1.0, tau=2.0,
                                       f=1e9)
        assert b == pytest.approx(1e6)

    def test_min_bandwidth_vanishes_for_loose_deadline(self):
        profile = simple_profile()
        hyper = make_hyper()
        b1 = min_bandwidth_for_deadline(profile, hyper, 1.0, 1.0, 3e9)
        b2 = min_bandwidth_for_deadline(profile, hyper, 1.0, 10.0, 3e9)
        assert b2 < b1 / 9

    def test_min_bandwidth_infeasible_deadline(self):
        profile = simple_profile()
        hyper = make_hyper()
        with pytest.raises(InfeasibleAllocationError):
            min_bandwidth_for_deadline(profile, hyper, 1.0, 1e-6, 2e9)

    def test_best_frequency_generous_cap_hits_fmax(self):
        profile = simple_profile()
        hyper = make_hyper()
        out = best_frequency_for_deadline(profile, hyper, snr=10.0, tau=1.0,
                                          cap=1.0)
        assert out is not None
        f, b = out
        assert f == pytest.approx(profile.f_max)
        assert b == pytest.approx(min_bandwidth_for_deadline(
            profile, hyper, 10.0, 1.0, profile.f_max), rel=1e-9)

    def test_best_frequency_tight_deadline_is_none(self):
        profile = simple_profile()
        hyper = make_hyper()
        comp_at_fmax = hyper.local_iters * hyper.batch_size * profile.mu \
            / profile.f_max
        assert best_frequency_for_deadline(profile, hyper, 10.0,
                                           comp_at_fmax * 0.5, 1.0) is None

    def test_best_frequency_tight_cap_is_none(self):
        profile = simple_profile()
        hyper = make_hyper()
        assert best_frequency_for_deadline(profile, hyper, 10.0, 1.0,
                                           cap=1e-9) is None

    def test_best_frequency_binding_cap_fills_energy(self):
        profile = simple_profile(alpha=2e-28)
        hyper = make_hyper()
        tau = 0.5
        cap = 0.9 * (profile.power * tau
                     + comp_energy(profile.alpha, hyper.local_iters,
                                   hyper.batch_size, profile.mu,
                                   profile.f_max))
        out = best_frequency_for_deadline(profile, hyper, 10.0, tau, cap)
        assert out is not None
        f, _ = out
        assert profile.f_min < f < profile.f_max
        comp_t = hyper.local_iters * hyper.batch_size * profile.mu / f
        window_energy = profile.power * (tau - comp_t) + comp_energy(
            profile.alpha, hyper.local_iters, hyper.batch_size, profile.mu, f)
        assert window_energy == pytest.approx(cap, rel=1e-9)

    def test_best_frequency_for_energy_closed_form(self):
        profile = simple_profile(alpha=2e-28)
        hyper = make_hyper()
        f = best_frequency_for_energy(profile, hyper, bandwidth=5e5,
                                      snr=10.0, cap=0.04)
        assert profile.f_min <= f <= profile.f_max
        t_com = hyper.model_bits / (5e5 * np.log2(11.0))
        realized = profile.power * t_com + comp_energy(
            profile.alpha, hyper.local_iters, hyper.batch_size, profile.mu, f)
        assert realized <= 0.04 * (1 + 1e-9)
        assert f < profile.f_max  # the cap binds on this instance

    def test_best_frequency_for_energy_infeasible(self):
        profile = simple_profile(alpha=2e-28)
        hyper = make_hyper()
        with pytest.raises(InfeasibleAllocationError):
            best_frequency_for_energy(profile, hyper, 5e5, 10.0, cap=1e-6)


class TestSolve:
    def test_symmetric_instance_splits_evenly(self):
        profiles = [simple_profile(), simple_profile()]
        hyper = make_hyper()
        channel = ChannelState(np.array([5.0, 5.0]), 1e6)
        alloc = solve_with_caps(profiles, hyper, channel,
                                np.array([0.01, 0.01]))
        assert alloc.bandwidth[0] == pytest.approx(alloc.bandwidth[1])
        assert alloc.bandwidth.sum() == pytest.approx(1e6)
        assert alloc.frequency[0] == pytest.approx(alloc.frequency[1])

    def test_single_device_takes_everything(self):
        profiles = [simple_profile()]
        hyper = make_hyper()
        channel = ChannelState(np.array([5.0]), 1e6)
        alloc = solve_with_caps(profiles, hyper, channel, np.array([0.01]))
        assert alloc.bandwidth[0] == pytest.approx(1e6)
        assert alloc.frequency[0] == pytest.approx(profiles[0].f_max)

    def test_low_snr_device_gets_more_bandwidth(self):
        profiles = [simple_profile(), simple_profile()]
        hyper = make_hyper()
        channel = ChannelState(np.array([1.0, 30.0]), 1e6)
        alloc = solve_with_caps(profiles, hyper, channel,
                                np.array([0.01, 0.01]))
        assert alloc.bandwidth[0] > alloc.bandwidth[1]

    def test_infeasible_cap_raises_with_device(self):
        profiles = [simple_profile(), simple_profile(alpha=2e-27)]
        hyper = make_hyper()
        channel = ChannelState(np.array([5.0, 5.0]), 1e6)
        with pytest.raises(InfeasibleAllocationError) as err:
            solve_with_caps(profiles, hyper, channel, np.array([0.01, 1e-9]))
        assert err.value.device == 1

    def test_solution_feasibility_random(self, rng):
        for _ in range(25):
            profiles, hyper, channel, caps = random_allocation_instance(rng)
            alloc = solve_with_caps(profiles, hyper, channel, caps)
            assert alloc.bandwidth.sum() <= channel.server_bandwidth * (1 + 1e-9)
            for i, p in enumerate(profiles):
                assert p.f_min - 1 <= alloc.frequency[i] <= p.f_max + 1
            energies = allocation_energies(profiles, hyper, alloc, channel.snr)
            assert np.all(energies <= caps * (1 + 1e-6))

    def test_deadline_monotone_in_caps(self, rng):
        for _ in range(10):
            profiles, hyper, channel, caps = random_allocation_instance(rng)
            tight = solve_with_caps(profiles, hyper, channel, caps)
            loose = solve_with_caps(profiles, hyper, channel, caps * 4.0)
            t_tight = allocation_round_time(profiles, hyper, tight, channel.snr)
            t_loose = allocation_round_time(profiles, hyper, loose, channel.snr)
            assert t_loose <= t_tight * (1 + 1e-4)

    def test_ledger_wrapper_matches_manual_caps(self, rng):
        profiles, hyper, channel, _ = random_allocation_instance(rng, 3)
        ledger = EnergyLedger(np.array([p.energy_budget for p in profiles]))
        alloc = solve_round_allocation(profiles, hyper, channel, ledger,
                                       t=0, r=0)
        caps = energy_cap(ledger, 0, 0, hyper.global_rounds,
                          hyper.edge_rounds, last_round=False)
        manual = solve_with_caps(profiles, hyper, channel, caps)
        assert np.allclose(alloc.bandwidth, manual.bandwidth)
        assert np.allclose(alloc.frequency, manual.frequency)


class TestOracle:
    def test_single_device_corner(self):
        profiles = [simple_profile()]
        hyper = make_hyper()
        channel = ChannelState(np.array([5.0]), 1e6)
        alloc = brute_force_allocation_oracle(profiles, hyper, channel,
                                              np.array([0.01]))
        assert alloc.bandwidth[0] == pytest.approx(1e6)
        assert alloc.frequency[0] == pytest.approx(profiles[0].f_max)

    def test_oracle_respects_energy(self, rng):
        for _ in range(5):
            profiles, hyper, channel, caps = random_allocation_instance(rng, 2)
            alloc = brute_force_allocation_oracle(profiles, hyper, channel,
                                                  caps, grid_points=30)
            energies = allocation_energies(profiles, hyper, alloc, channel.snr)
            assert np.all(energies <= caps * (1 + 1e-9))

    def test_oracle_infeasible(self):
        profiles = [simple_profile(alpha=2e-27)]
        hyper = make_hyper()
        channel = ChannelState(np.array([5.0]), 1e6)
        with pytest.raises(InfeasibleAllocationError):
            brute_force_allocation_oracle(profiles, hyper, channel,
                                          np.array([1e-9]))


class TestAllocationValue:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            Allocation(np.array([1.0, 2.0]), np.array([1.0]))
        with pytest.raises(ValueError):
            Allocation(np.array([0.0]), np.array([1e9]))
