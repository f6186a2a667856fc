import dataclasses

import numpy as np
import pytest
from scipy import stats

from cransparse import (ConfigurationError, NetworkConfig, NetworkLayout, build_layout,
                        draw_channel, load_network_config, noise_power_for_snr)


def test_full_scenario_dimensions(full_layout, full_channel):
    assert full_layout.n_antennas == 128
    assert full_layout.n_users == 64
    assert full_channel.entries.shape == (128, 64)
    assert full_channel.entries.dtype == complex


def test_degenerate_single_cell():
    layout = build_layout(NetworkConfig(n_cells=1, n_antennas_per_cell=1, n_users_per_cell=1))
    assert layout.n_antennas == layout.n_users == 1
    np.testing.assert_array_equal(layout.antenna_positions[0], [1.0, 1.0])


def test_noise_calibration():
    config = NetworkConfig(tx_power=1, path_loss_exponent=2, cell_side=2, border_snr_db=0)
    assert build_layout(config).noise_power == pytest.approx(1.0, abs=1e-15)
    assert noise_power_for_snr(config, 10) == pytest.approx(0.1)
    corner = dataclasses.replace(config, border_reference="corner")
    assert noise_power_for_snr(corner, 0) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [
    dict(n_cells=15), dict(n_cells=0), dict(n_users_per_cell=0), dict(min_distance=0.0),
    dict(antenna_placement="ring"), dict(border_reference="middle"), dict(tx_power=0),
])
def test_invalid_config(bad):
    with pytest.raises(ConfigurationError):
        NetworkConfig(**bad)


def test_min_distance_default():
    assert NetworkConfig(cell_side=5.0).min_distance == pytest.approx(0.05)


@pytest.mark.parametrize("placement", ["co-located", "uniform-random"])
def test_membership_and_containment(placement):
    config = NetworkConfig(antenna_placement=placement, rng_seed=9)
    layout = build_layout(config)
    antenna_sets = [layout.antennas_of(c) for c in range(config.n_cells)]
    assert all(len(a) == config.n_antennas_per_cell for a in antenna_sets)
    np.testing.assert_array_equal(np.sort(np.concatenate(antenna_sets)), np.arange(128))
    half = config.cell_side / 2
    for c in range(config.n_cells):
        center = layout.cell_center(c)
        assert np.all(np.abs(layout.user_positions[layout.users_of(c)] - center) <= half)
        assert np.all(np.abs(layout.antenna_positions[layout.antennas_of(c)] - center) <= half)
    assert set(layout.cell_membership) == set(range(16))


def test_colocated_antennas_at_center():
    layout = build_layout(NetworkConfig())
    for c in range(16):
        np.testing.assert_array_equal(
            layout.antenna_positions[layout.antennas_of(c)],
            np.tile(layout.cell_center(c), (8, 1)))


def test_reproducible():
    config = NetworkConfig(antenna_placement="uniform-random", rng_seed=42)
    a, b = build_layout(config), build_layout(config)
    assert a.user_positions.tobytes() == b.user_positions.tobytes()
    assert a.antenna_positions.tobytes() == b.antenna_positions.tobytes()
    np.testing.assert_array_equal(draw_channel(a, 5).entries, draw_channel(b, 5).entries)
    assert not np.array_equal(draw_channel(a, 5).entries, draw_channel(a, 6).entries)


def test_distance_clamp(full_layout, full_channel):
    assert np.all(full_layout.distances() >= full_layout.config.min_distance)
    assert np.all(np.isfinite(full_channel.variance_map))
    d = full_layout.distances()
    np.testing.assert_allclose(full_channel.variance_map, d ** -2.0)


def _fixed_distance_layout(distance, n_antennas, n_users, min_distance=0.01):
    config = NetworkConfig(n_cells=1, n_antennas_per_cell=n_antennas,
                           n_users_per_cell=n_users, cell_side=10.0, min_distance=min_distance)
    return NetworkLayout(
        config=config,
        antenna_positions=np.zeros((n_antennas, 2)),
        antenna_cell=np.zeros(n_antennas, dtype=int),
        user_positions=np.tile([distance, 0.0], (n_users, 1)),
        user_cell=np.zeros(n_users, dtype=int),
        noise_power=1.0,
    )


def test_unit_distance_clamp_variance():
    layout = _fixed_distance_layout(0.0, 1, 1, min_distance=1.0)
    assert draw_channel(layout, 0).variance_map[0, 0] == 1.0


def test_variance_at_distance_two():
    # 400 x 250 co-located pairs = 1e5 draws of an entry at distance 2
    layout = _fixed_distance_layout(2.0, 400, 250)
    h = draw_channel(layout, 11).entries
    assert 0.24 <= np.mean(np.abs(h) ** 2) <= 0.26
    assert abs(np.mean(h)) < 0.01


def test_chi_square_variance(full_layout):
    # 2|h|^2/var ~ chi2(2) per entry; the sum over n entries is chi2(2n)
    samples = np.concatenate([
        (2 * np.abs(draw_channel(full_layout, s).entries) ** 2
         / full_layout.variance_map()).ravel() for s in range(2)])
    total, dof = samples.sum(), 2 * samples.size
    lo, hi = stats.chi2.ppf([0.005, 0.995], dof)
    assert lo <= total <= hi
    assert samples.size >= 10_000


def test_load_network_config(tmp_path):
    path = tmp_path / "net.yaml"
    path.write_text("n_cells: 4\nn_antennas_per_cell: 2\nn_users_per_cell: 1\nborder_snr_db: 3\n")
    config = load_network_config(path)
    assert (config.n_cells, config.n_antennas, config.n_users) == (4, 8, 4)
    path.write_text("n_cell: 4\n")
    with pytest.raises(ConfigurationError):
        load_network_config(path)
