"""Quick check of the compiled module.

Build first:
    cargo build --release -p rmt-python --features extension-module
    cp target/release/librmt_lab.so python/rmt_lab.so
"""
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import rmt_lab  # noqa: E402


def main():
    assert rmt_lab.SCHEMA_VERSION == 1
    assert abs(rmt_lab.semicircle_cdf(0.0) - 0.5) < 1e-15
    assert abs(rmt_lab.semicircle_quantile(rmt_lab.semicircle_cdf(0.7)) - 0.7) < 1e-10
    assert abs(rmt_lab.single_eigenvalue_mean(0.0) + math.pi / 2) < 1e-12

    ev = rmt_lab.sample_spectrum("goe", 50, seed=1)
    assert len(ev) == 50 and ev == sorted(ev)
    assert ev == rmt_lab.sample_spectrum("goe", 50, seed=1)

    v = rmt_lab.variance_functional({"type": "identity"})
    assert abs(v["total"] - 2.0) < 1e-9, v
    m = rmt_lab.mesoscopic_variance({"type": "gaussian_bump", "center": 0.0, "width": 1.0})
    assert abs(m - 1 / math.pi) < 1e-7, m

    mv = rmt_lab.estimate_mean_var([0.0, 2.0])
    assert (mv["mean"], mv["variance"]) == (1.0, 2.0)
    try:
        rmt_lab.ks_normal([0.0] * 10)
    except ValueError:
        pass
    else:
        raise AssertionError("short sample accepted")

    cfg = 'kind = "mean_expansion"\nn = 60\ntrials = 100\nseed = 3\n'
    a = rmt_lab.run_experiment(cfg, workers=1)
    b = rmt_lab.run_experiment(cfg, workers=2)
    assert a == b and a["schema_version"] == 1
    print("smoke test passed:", a["statistics"][0]["name"], a["statistics"][0]["estimate"])


if __name__ == "__main__":
    main()
