"""Smoke test for the dicke extension module."""

import math
import sys
import tempfile
from pathlib import Path

import dicke as ds


def main() -> int:
    two_pi = 2 * math.pi
    assert abs(ds.mhz(1.0) - two_pi) < 1e-12

    lc = ds.critical_coupling(ds.mhz(0.8), ds.mhz(0.8), 0.0)
    assert abs(lc - ds.mhz(0.4)) < 1e-12

    cfg = ds.PhysicalConfig.reference()
    n = cfg.atoms_from_shift(ds.mhz(-0.5))
    assert 1.0e5 <= n <= 1.4e5, n

    eff = ds.EffectiveParams(1.0, 1.0, 0.0, 0.5, 0.0, 0.0, n_lambda=2)
    points, threshold = ds.bifurcation_scan(eff, [0.3, 0.45, 0.6, 0.9])
    exact = eff.critical_coupling()
    assert threshold is not None and abs(threshold / exact - 1) < 0.01, (threshold, exact)

    lo, hi = ds.tc_normal_modes(0.0, 0.0, 0.3)
    assert abs(lo + 0.3) < 1e-12 and abs(hi - 0.3) < 1e-12

    counts = ds.counts_model([0.0, 10.0], ds.mhz(0.07), 0.1773, 5.0)
    assert counts[0] == 0.0 and abs(counts[1] - 7.8) < 0.01

    photons = ds.steady_photons(eff.with_dicke_coupling(0.5 * exact), 8)
    assert photons < 0.1, photons

    try:
        ds.critical_coupling(1.0, -1.0, 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("sign mismatch must raise")

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "params"
        path, report, failed = ds.run_experiment("params", str(out))
        assert failed is None and (out / "params.csv").exists()
        assert "lambda_c" in report

    print("dicke smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
