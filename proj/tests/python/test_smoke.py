# Copyright (c) 2026 the distar authors
# SPDX-License-Identifier: Apache-2.0
#
# Python smoke tests for the extension module. Usage:
#   python3 test_smoke.py <dir-with-_distar-module> [workdir]

import math
import os
import sys
import tempfile

sys.path.insert(0, sys.argv[1])

import numpy as np  # noqa: E402

import _distar as distar  # noqa: E402

GMM = """
dim = 2
components = 2

[component]
weight = 0.5
mean = -2 0
cov_row = 1 0
cov_row = 0 1
label = 0

[component]
weight = 0.5
mean = 2 0
cov_row = 1 0
cov_row = 0 1
label = 1
"""


def test_gmm_score_matches_finite_differences():
    x = np.array([[0.6, -0.4], [1.2, 0.3]])
    s = distar.gmm_score(GMM, x)
    h = 1e-5
    for i in range(x.shape[0]):
        for j in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            fd = (
                distar.gmm_log_density(GMM, xp)[i]
                - distar.gmm_log_density(GMM, xm)[i]
            ) / (2 * h)
            assert abs(s[i, j] - fd) < 1e-6 * max(1.0, abs(fd)), (i, j, s[i, j], fd)


def test_diffused_score_shrinks_with_noise():
    x = np.array([[2.0, 0.0]])
    s_clean = distar.gmm_score(GMM, x)
    s_noisy = distar.gmm_score(GMM, x, t=5.0)
    assert np.linalg.norm(s_noisy) < max(np.linalg.norm(s_clean), 0.5)


def test_energy_distance_separates():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(2000, 2))
    b = rng.normal(size=(2000, 2))
    c = rng.normal(size=(2000, 2)) + 1.5
    near = distar.energy_distance(a, b)
    far = distar.energy_distance(a, c)
    assert near < 0.02, near
    assert far > 0.5, far


def test_divergence_zero_iff_matched():
    single = """
dim = 1
components = 1

[component]
weight = 1
mean = 0.5
cov_row = 1
"""
    matched = distar.divergence("0.5", 1.0, single)
    assert matched["exact"] and matched["value"] < 1e-10, matched
    shifted = distar.divergence("1.5", 1.0, single)
    assert shifted["value"] > 0.01, shifted


def test_quick_battery_passes():
    reports = distar.verify_battery(seed=5, quick=True)
    assert len(reports) == 10
    for r in reports:
        assert r["pass"], r


def test_align_runs_and_samples():
    work = tempfile.mkdtemp(prefix="distar_py_")
    gmm_path = os.path.join(work, "ref.gmm")
    with open(gmm_path, "w") as f:
        f.write(GMM)
    config = f"""
run.seed = 3
run.iterations = 10
run.batch_size = 16
process.sigma_min = 0.05
process.sigma_max = 20
model.gen_hidden = 16
model.score_hidden = 16
model.sigma_data = 1.5
train.assistant_warmup = 4
reference.gmm = {gmm_path}
io.energy_every = 5
io.energy_n = 64
"""
    out_dir = os.path.join(work, "out")
    res = distar.run_align(config, out_dir)
    assert res["iterations"] == 10
    assert math.isfinite(res["final_energy_distance"])
    with open(os.path.join(out_dir, "metrics.csv")) as f:
        rows = f.read().strip().splitlines()
    assert len(rows) == 11  # header + 10

    ck = os.path.join(out_dir, "checkpoint_final.json")
    s1 = distar.sample_checkpoint(ck, n=32, seed=7)
    s2 = distar.sample_checkpoint(ck, n=32, seed=7)
    assert s1.shape == (32, 2)
    assert np.array_equal(s1, s2)



def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for t in tests:
        t()
        print(f"ok {t.__name__}")
    print("python smoke: all ok")


if __name__ == "__main__":
    main()
