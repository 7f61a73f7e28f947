import math

import numpy as np
import pytest

from data.models import ScoreStats
from errors import ArgumentError, UndefinedResultError
from services import prng
from services.metrics import (
    _bin_edges, auto_bins, binary_entropy, decidability, dof, entropy_iid, entropy_report, gmr_fmr,
    gv_exact_strength, gv_strength, security_report, sphere_packing_strength, system_strength,
    tolerated_bits, unlinkability
)


def _stats(mu_m, mu_nm, sigma):
    # two-point samples reproduce the requested mean and population std
    return ScoreStats([mu_m - sigma, mu_m + sigma], [mu_nm - sigma, mu_nm + sigma])


def test_decidability_known_value():
    assert decidability(_stats(0.2, 0.41, 0.03)) == pytest.approx(7.0)


def test_decidability_is_scale_invariant():
    stats = ScoreStats([0.1, 0.25, 0.2], [0.4, 0.45, 0.38])
    scaled = ScoreStats(stats.mated * 3.0, stats.nonmated * 3.0)
    assert decidability(scaled) == pytest.approx(decidability(stats))


def test_decidability_undefined_without_spread():
    with pytest.raises(UndefinedResultError):
        decidability(ScoreStats([0.2, 0.2], [0.4, 0.4]))


def test_dof_and_entropy():
    assert dof(0.5, 0.05) == pytest.approx(100.0)
    assert entropy_iid(100.0, 0.5) == pytest.approx(100.0)
    assert dof(0.4113, 0.0202) == pytest.approx(593.4, abs=0.5)
    assert dof(0.5, 1e6) < 1e-9
    with pytest.raises(ArgumentError):
        dof(0.0, 0.1)


def test_entropy_report_from_scores():
    report = entropy_report([0.45, 0.55, 0.45, 0.55])
    assert report.e_hd == pytest.approx(0.5)
    assert report.v_hd == pytest.approx(0.05)
    assert report.dof == pytest.approx(100.0)
    assert report.to_dict()["H"] == pytest.approx(100.0)


def test_binary_entropy_endpoints():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(1.0)


def test_sphere_packing_known_value():
    assert sphere_packing_strength(10, 5) == pytest.approx(math.log2(1024 / 638))
    assert sphere_packing_strength(10.4, 0) == 10.0
    assert sphere_packing_strength(10, 5, approximate=True) == pytest.approx(10 - math.log2(252))
    with pytest.raises(ArgumentError):
        sphere_packing_strength(10, 11)


def test_gv_strength_anchor():
    for h in (200.0, 593.4, 1000.0):
        assert gv_strength(h, 0.1761 * h) == pytest.approx(0.3285 * h, abs=0.005 * h)
    assert gv_strength(300.0, 150.0) == pytest.approx(0.0)
    with pytest.raises(ArgumentError):
        gv_strength(100.0, 60.0)


def test_gv_exact_counts_the_open_ball():
    assert gv_exact_strength(10, 1) == pytest.approx(10.0)
    assert gv_exact_strength(10, 3) == pytest.approx(10 - math.log2(1 + 10 + 45))


def test_system_strength_min_rule():
    assert system_strength(300, 168) == 168
    assert system_strength(300, 478) == 300


def test_tolerated_bits():
    assert tolerated_bits(0.1761, 1560) == 274
    assert tolerated_bits(0.0, 1560) == 0


def test_security_report_prefers_sphere_packing():
    report = security_report(593.4, 300, t=274, d=274)
    assert report.s_sphere is not None and report.s_gv is not None
    assert report.h_sys == pytest.approx(min(300, report.s_sphere))
    gv_only = security_report(593.4, 300, d=104)
    assert gv_only.s_sphere is None
    assert gv_only.h_sys == pytest.approx(min(300, gv_only.s_gv))
    with pytest.raises(ArgumentError):
        security_report(593.4, 300)


def test_unlinkability_identical_and_disjoint():
    scores = np.linspace(0.3, 0.5, 200)
    same = unlinkability(scores, scores, bins=10)
    assert same.d_sys == pytest.approx(0.0)
    assert not same.d_local.any()

    apart = unlinkability(np.linspace(0.0, 0.1, 50), np.linspace(0.4, 0.5, 50), bins=10)
    assert apart.d_sys == pytest.approx(1.0)
    assert apart.grid.size == 10


def test_unlinkability_omega_raises_linkability():
    mated = np.concatenate([np.full(60, 0.2), np.full(40, 0.3)])
    nonmated = np.concatenate([np.full(40, 0.2), np.full(60, 0.3)])
    low = unlinkability(mated, nonmated, bins=2)
    high = unlinkability(mated, nonmated, bins=2, omega=4.0)
    assert low.d_sys == pytest.approx(0.6 * (2 * 1.5 / 2.5 - 1))
    assert high.d_sys > low.d_sys


def test_auto_bins():
    assert auto_bins(1) == 2
    assert auto_bins(100) == 2
    assert auto_bins(1000) == 3
    assert auto_bins(10000) == 10


def test_lattice_bins_keep_scores_off_the_edges():
    step = 0.05
    mated = np.arange(10) * step
    report = unlinkability(mated, mated, bins=3, resolution=step)
    assert report.grid.size == 3
    assert report.d_sys == pytest.approx(0.0)
    edges = _bin_edges(mated, 3, step)
    np.testing.assert_allclose(edges, (np.array([0, 4, 8, 12]) - 0.5) * step)
    assert np.abs(mated[:, None] - edges[None, :]).min() >= step / 2 - 1e-12
    with pytest.raises(ArgumentError):
        unlinkability(mated, mated, resolution=0.0)


def test_independent_scores_look_unlinkable():
    length, pairs = 1560, 1000
    mated = prng.random_bits(12, pairs * length).reshape(pairs, length).sum(axis=1) / length
    nonmated = prng.random_bits(13, pairs * length).reshape(pairs, length).sum(axis=1) / length
    report = unlinkability(mated, nonmated, resolution=1.0 / length)
    assert report.grid.size == 3
    assert report.d_sys <= 0.05


def test_gmr_fmr():
    mated = [[False, True, True], [True, True, True]]
    nonmated = [[False, False, True], [False, False, False]]
    report = gmr_fmr(mated, nonmated)
    np.testing.assert_allclose(report.gmr, [0.5, 1.0, 1.0])
    np.testing.assert_allclose(report.fmr, [0.0, 0.0, 0.5])
    assert report.gmr_at_zero_fmr == 1.0
    assert report.iterations == 3
    with pytest.raises(ArgumentError):
        gmr_fmr(mated, [[False, False]])
