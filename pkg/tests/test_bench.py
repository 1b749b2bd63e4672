import pytest

from coown import bench


def test_linear_fit_recovers_exact_line():
    fit = bench.linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert fit.slope == pytest.approx(2) and fit.intercept == pytest.approx(1) and fit.r2 == pytest.approx(1)


def test_linear_fit_of_noise_is_poor():
    assert bench.linear_fit([1, 2, 3, 4, 5], [1, 5, 1, 5, 1]).r2 < 0.2


def test_direction():
    assert bench.direction([1, 2, 3]) == "increasing"
    assert bench.direction([3, 2, 1]) == "decreasing"
    assert bench.direction([1, 3, 2]) == "mixed"
    assert bench.direction([1, 1]) == "mixed"


def test_measure_small_unit(tmp_path):
    s = bench.measure(64 * 1024, t=2, n=3, repeats=2, root=str(tmp_path))
    assert (s.unit_bytes, s.t, s.n, s.piece_size) == (65536, 2, 3, 128)
    assert s.write_s > 0 and s.read_s > 0 and s.grant_s > 0
    assert s.as_dict()["total_s"] == pytest.approx(s.write_s + s.read_s)
    assert list(tmp_path.iterdir()) == []


def test_unaligned_unit_size(tmp_path):
    s = bench.measure(1000, t=2, n=3, root=str(tmp_path))
    assert s.unit_bytes == 1000


def test_sweeps_return_one_sample_per_setting():
    samples, fit = bench.sweep_unit_size((0.0625, 0.125), t=2, n=3)
    assert [s.unit_bytes for s in samples] == [65536, 131072]
    assert fit.r2 == pytest.approx(1.0)
    assert [s.t for s in bench.sweep_threshold((1, 2), n=3, unit_bytes=4096, repeats=1)] == [1, 2]
    assert [s.n for s in bench.sweep_owners((2, 3), t=2, unit_bytes=4096, repeats=1)] == [2, 3]
    assert [s.piece_size for s in bench.sweep_piece_size((64, 128), unit_bytes=4096, repeats=1, t=2, n=3)] == [64, 128]


def test_component_timers():
    assert bench.time_transform(128, unit_bytes=64 * 1024, repeats=2) > 0
    assert bench.time_dispersal_decode(2, 4, unit_bytes=64 * 1024, trials=3) > 0
