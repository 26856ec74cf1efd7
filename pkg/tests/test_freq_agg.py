import numpy as np
import pytest

from fedfreq.freq_agg import (
    FEDAVG,
    PFA,
    AggregationRequest,
    ConvShape,
    ScheduleParams,
    fedavg_aggregate,
    low_freq_mask,
    pfa_aggregate,
    reshape_conv,
    schedule_r,
    unreshape_conv,
)
from helpers import direct_dft2, oracle_mask


# --- conv reshaping -----------------------------------------------------------


def test_reshape_single_kernel_is_identity():
    w = np.arange(4.0).reshape(1, 1, 2, 2)
    assert np.array_equal(reshape_conv(w), w[0, 0])


def test_reshape_dimensions():
    w = np.zeros((2, 3, 3, 3))
    assert reshape_conv(w).shape == (6, 9)


def test_reshape_index_mapping():
    w = np.zeros((2, 2, 2, 2))
    w[1, 0, 1, 0] = 7.0
    m = reshape_conv(w)
    assert m[3, 0] == 7.0  # row 1*2+1, col 0*2+0


def test_reshape_bijective_by_exhaustion():
    n, c, d1, d2 = 2, 2, 2, 2
    hits = set()
    for idx in np.ndindex(n, c, d1, d2):
        w = np.zeros((n, c, d1, d2))
        w[idx] = 1.0
        m = reshape_conv(w)
        cells = np.argwhere(m == 1.0)
        assert len(cells) == 1
        hits.add(tuple(cells[0]))
    assert len(hits) == n * c * d1 * d2


def test_unreshape_inverts_reshape():
    rng = np.random.default_rng(5)
    for _ in range(50):
        shape = ConvShape(*(int(rng.integers(1, 5)) for _ in range(4)))
        w = rng.standard_normal(tuple(shape))
        assert np.array_equal(unreshape_conv(reshape_conv(w), shape), w)


def test_reshape_errors():
    with pytest.raises(ValueError):
        reshape_conv(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        unreshape_conv(np.zeros((4, 4)), ConvShape(2, 2, 2, 3))


# --- low-frequency mask ---------------------------------------------------------


def test_mask_4x4_quarter():
    mask = low_freq_mask(4, 4, 0.25)
    assert mask.standard.sum() == 9
    # centered view shows a 3x3 block of ones around the middle
    assert np.array_equal(
        mask.centered,
        np.array(
            [
                [False, False, False, False],
                [False, True, True, True],
                [False, True, True, True],
                [False, True, True, True],
            ]
        ),
    )


def test_mask_dc_only():
    mask = low_freq_mask(5, 5, 0.05)
    assert mask.standard.sum() == 1
    assert mask.standard[0, 0]


def test_mask_symmetric_under_negation():
    rng = np.random.default_rng(2)
    for _ in range(30):
        rows = int(rng.integers(1, 20))
        cols = int(rng.integers(1, 20))
        r = float(rng.uniform(0.01, 0.49))
        m = low_freq_mask(rows, cols, r).standard
        for i in range(rows):
            for j in range(cols):
                assert m[i, j] == m[(-i) % rows, (-j) % cols]


def test_mask_matches_oracle():
    rng = np.random.default_rng(9)
    for _ in range(25):
        rows = int(rng.integers(1, 24))
        cols = int(rng.integers(1, 24))
        r = float(rng.uniform(0.01, 0.49))
        assert np.array_equal(low_freq_mask(rows, cols, r).standard, oracle_mask(rows, cols, r))


def test_mask_threshold_validation():
    for bad in (0.0, 0.5, -0.1, 0.9):
        with pytest.raises(ValueError):
            low_freq_mask(4, 4, bad)


# --- threshold schedule ---------------------------------------------------------


def test_schedule_endpoints_and_midpoint():
    p = ScheduleParams(0.35, 0.48, 250)
    assert schedule_r(0, p) == 0.35
    assert schedule_r(250, p) == 0.48
    assert abs(schedule_r(125, p) - 0.415) < 1e-12


def test_schedule_monotone():
    p = ScheduleParams(0.35, 0.48, 100)
    values = [schedule_r(t, p) for t in range(101)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_schedule_epoch_validation():
    p = ScheduleParams(0.35, 0.48, 10)
    with pytest.raises(ValueError):
        schedule_r(11, p)
    with pytest.raises(ValueError):
        schedule_r(-1, p)


def test_schedule_params_validation():
    with pytest.raises(ValueError):
        ScheduleParams(0.0, 0.4, 10)
    with pytest.raises(ValueError):
        ScheduleParams(0.4, 0.3, 10)
    with pytest.raises(ValueError):
        ScheduleParams(0.3, 0.5, 10)


# --- plain averaging ------------------------------------------------------------


def _random_maps(rng, k):
    return [
        {
            "conv1.weight": rng.standard_normal((2, 1, 3, 3)),
            "dense1.weight": rng.standard_normal((6, 4)),
            "dense1.bias": rng.standard_normal(4),
        }
        for _ in range(k)
    ]


def test_fedavg_identity_on_identical_clients():
    rng = np.random.default_rng(0)
    base = _random_maps(rng, 1)[0]
    maps = [{k: v.copy() for k, v in base.items()} for _ in range(3)]
    merged = fedavg_aggregate(AggregationRequest(maps, strategy=FEDAVG))
    for k in base:
        assert np.allclose(merged[k], base[k], atol=1e-15)


def test_fedavg_two_client_mean():
    a = {"w": np.array([1.0, 2.0])}
    b = {"w": np.array([3.0, 6.0])}
    merged = fedavg_aggregate(AggregationRequest([a, b], strategy=FEDAVG))
    assert np.array_equal(merged["w"], np.array([2.0, 4.0]))


def test_fedavg_matches_elementwise_oracle():
    rng = np.random.default_rng(1)
    maps = _random_maps(rng, 3)
    merged = fedavg_aggregate(AggregationRequest(maps, strategy=FEDAVG))
    for key in maps[0]:
        expected = np.zeros_like(maps[0][key])
        for m in maps:
            expected = expected + m[key]
        expected /= len(maps)
        assert np.max(np.abs(merged[key] - expected)) < 1e-12


def test_fedavg_structural_mismatch():
    a = {"w": np.zeros(3)}
    b = {"w": np.zeros(4)}
    with pytest.raises(ValueError):
        fedavg_aggregate(AggregationRequest([a, b], strategy=FEDAVG))
    with pytest.raises(ValueError):
        fedavg_aggregate(AggregationRequest([a, {"v": np.zeros(3)}], strategy=FEDAVG))


def test_strategy_dispatch_guard():
    maps = [{"w": np.zeros(2)}]
    with pytest.raises(ValueError):
        fedavg_aggregate(AggregationRequest(maps, strategy=PFA))
    with pytest.raises(ValueError):
        pfa_aggregate(AggregationRequest(maps, strategy=FEDAVG))


# --- frequency-domain aggregation ------------------------------------------------


def test_pfa_identity_on_identical_clients():
    rng = np.random.default_rng(3)
    base = _random_maps(rng, 1)[0]
    maps = [{k: v.copy() for k, v in base.items()} for _ in range(4)]
    outputs = pfa_aggregate(AggregationRequest(maps, r=0.3, strategy=PFA))
    assert len(outputs) == 4
    for out in outputs:
        for k in base:
            assert np.max(np.abs(out[k] - base[k])) < 1e-8


def test_pfa_single_client_identity():
    rng = np.random.default_rng(4)
    maps = _random_maps(rng, 1)
    (out,) = pfa_aggregate(AggregationRequest(maps, r=0.25, strategy=PFA))
    for k in maps[0]:
        assert np.max(np.abs(out[k] - maps[0][k])) < 1e-8


def test_pfa_two_client_conv_against_direct_summation_oracle():
    rng = np.random.default_rng(6)
    r = 0.25
    tensors = [rng.standard_normal((1, 1, 4, 4)) for _ in range(2)]
    maps = [{"conv1.weight": t} for t in tensors]
    outputs = pfa_aggregate(AggregationRequest(maps, r=r, strategy=PFA))

    spectra = [direct_dft2(t[0, 0]) for t in tensors]
    amps = [np.abs(f) for f in spectra]
    mask = oracle_mask(4, 4, r)
    for i, out in enumerate(outputs):
        f_out = direct_dft2(out["conv1.weight"][0, 0])
        expected_amp = np.where(mask, (amps[0] + amps[1]) / 2.0, amps[i])
        assert np.max(np.abs(np.abs(f_out) - expected_amp)) < 1e-8
        # phases preserved wherever the amplitude is not negligible
        keep = np.abs(f_out) > 1e-9
        phase_diff = np.angle(f_out * np.conj(spectra[i]))
        assert np.max(np.abs(phase_diff[keep])) < 1e-7


def test_pfa_preserves_high_frequencies_and_phase_fc():
    rng = np.random.default_rng(8)
    r = 0.3
    mats = [rng.standard_normal((8, 6)) for _ in range(3)]
    maps = [{"dense1.weight": m} for m in mats]
    outputs = pfa_aggregate(AggregationRequest(maps, r=r, strategy=PFA))
    mask = oracle_mask(8, 6, r)
    mean_amp = np.mean([np.abs(direct_dft2(m)) for m in mats], axis=0)
    for i, out in enumerate(outputs):
        f_in = direct_dft2(mats[i])
        f_out = direct_dft2(out["dense1.weight"])
        assert np.max(np.abs(np.abs(f_out)[~mask] - np.abs(f_in)[~mask])) < 1e-8
        assert np.max(np.abs(np.abs(f_out)[mask] - mean_amp[mask])) < 1e-8
        keep = np.abs(f_out) > 1e-9
        assert np.max(np.abs(np.angle(f_out * np.conj(f_in))[keep])) < 1e-7


def test_pfa_averages_biases_elementwise():
    maps = [{"b": np.array([0.0, 2.0])}, {"b": np.array([4.0, 0.0])}]
    outputs = pfa_aggregate(AggregationRequest(maps, r=0.25, strategy=PFA))
    for out in outputs:
        assert np.array_equal(out["b"], np.array([2.0, 1.0]))


def test_pfa_idempotent_on_consensus():
    rng = np.random.default_rng(10)
    base = _random_maps(rng, 1)[0]
    maps = [{k: v.copy() for k, v in base.items()} for _ in range(3)]
    once = pfa_aggregate(AggregationRequest(maps, r=0.4, strategy=PFA))
    twice = pfa_aggregate(AggregationRequest(once, r=0.4, strategy=PFA))
    for a, b in zip(once, twice):
        for k in a:
            assert np.max(np.abs(a[k] - b[k])) < 1e-8


def test_pfa_outputs_are_real_float():
    rng = np.random.default_rng(12)
    maps = _random_maps(rng, 3)
    for out in pfa_aggregate(AggregationRequest(maps, r=0.45, strategy=PFA)):
        for v in out.values():
            assert v.dtype == np.float64


def test_pfa_validation():
    rng = np.random.default_rng(13)
    maps = _random_maps(rng, 2)
    with pytest.raises(ValueError):
        pfa_aggregate(AggregationRequest(maps, r=0.6, strategy=PFA))
    with pytest.raises(ValueError):
        pfa_aggregate(AggregationRequest([], r=0.3, strategy=PFA))
    bad = [maps[0], {k: v[..., :1] for k, v in maps[1].items()}]
    with pytest.raises(ValueError):
        pfa_aggregate(AggregationRequest(bad, r=0.3, strategy=PFA))
