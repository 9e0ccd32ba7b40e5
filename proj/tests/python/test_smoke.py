import math

import numpy as np
import pytest

import reidlab


def test_schedule_values():
    assert reidlab.warmup_lr(100) == 3e-2
    assert reidlab.warmup_lr(300) == 3e-4
    assert reidlab.cyclic_lr(35) == pytest.approx(3e-4 * 0.7)
    assert reidlab.is_snapshot_epoch(34)
    with pytest.raises(IndexError):
        reidlab.warmup_lr(0)


def test_losses_match_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 4))
    d = reidlab.pairwise_distances(x)
    ref = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    np.testing.assert_allclose(d, ref, atol=1e-12)

    ids = [0, 0, 1, 1, 2, 2, 3, 3]
    hard = 0.0
    for a in range(8):
        pos = max(ref[a, j] for j in range(8) if j != a and ids[j] == ids[a])
        neg = min(ref[a, j] for j in range(8) if ids[j] != ids[a])
        hard += max(0.3 + pos - neg, 0.0)
    assert reidlab.triplet_loss(x, ids, "batch-hard", 0.3) == pytest.approx(hard / 8, abs=1e-12)
    assert reidlab.triplet_loss(x, ids, "soft-margin") > 0.0
    with pytest.raises(ValueError):
        reidlab.triplet_loss(x, ids, "nope")


def test_cross_entropy_and_gem():
    assert reidlab.cross_entropy_smoothed(np.zeros((2, 4)), [0, 3], 0.1) == pytest.approx(math.log(4))
    out = reidlab.gem_pool(np.array([[1.0, 2.0, 3.0, 4.0]]), 3.0)
    assert out[0] == pytest.approx(25 ** (1 / 3))


def test_evaluation():
    d = np.array([[0.1, 0.2, 0.3]])
    r = reidlab.evaluate(d, [7], [7, 1, 7], [0], [1, 1, 1], 3)
    assert r["map"] == pytest.approx((1 + 2 / 3) / 2)
    q = np.eye(2)
    assert reidlab.distance_matrix(q, q, "cosine")[0, 1] == pytest.approx(1.0)


def test_synthetic_and_erasing():
    samples, ids, cams = reidlab.gen_synthetic(identities=5, per_id=4, dim=8, seed=2)
    assert samples.shape == (20, 8)
    assert len(set(ids)) == 5
    img = np.full((160, 64, 3), 0.5)
    np.testing.assert_array_equal(reidlab.random_erase(img, 0.0, 1), img)
    erased = reidlab.random_erase(img, 1.0, 1)
    assert (erased != img).any()


def test_architecture_counts():
    c = reidlab.arch_counts("2x")
    assert abs(c["params"] / 6.4e6 - 1) <= 0.2
    assert abs(c["flops"] / 1.68e9 - 1) <= 0.2
    assert c["chain_problems"] == []


def test_tracking_and_training():
    on = reidlab.track_sim(seed=1, sigma=0.0, tau=0.5)
    off = reidlab.track_sim(seed=1, sigma=0.0, tau=0.0)
    assert on["idf1"] == 1.0
    assert off["idf1"] < on["idf1"]
    r = reidlab.train_toy({"epochs": "10", "identities": "10", "per_id": "8", "heldout_identities": "10"})
    assert r["final"]["map"] > r["untrained"]["map"]
    with pytest.raises(ValueError):
        reidlab.train_toy({"no_such_key": "1"})


def test_cli_roundtrip():
    code, out, _ = reidlab.cli(["archcalc", "--variant", "1x"])
    assert code == 0
    assert '"total_params"' in out
    assert reidlab.cli(["bogus"])[0] == 2
