"""Smoke test for the `fecg` extension module.

Build and install it first, e.g. `pip install --no-build-isolation ./crates/py`,
then run `python python/smoke_test.py`.
"""

import math

import fecg


def main():
    rec = fecg.generate_record(3, duration_s=20.0)
    fs = rec["fs"]
    n = len(rec["abdominal"])
    assert n == int(20 * fs), n
    for i in range(0, n, 997):
        total = rec["mecg"][i] + rec["fecg"][i] + rec["noise"][i]
        assert abs(rec["abdominal"][i] - total) <= 1e-6
    assert 5.0 <= rec["snr_db"] <= 20.0

    clean = fecg.preprocess(rec["abdominal"], fs)
    assert len(clean) == n and all(math.isfinite(v) for v in clean)

    maternal = fecg.detect_rpeaks(clean, fs)
    assert len(maternal) > 10

    # the reference scored against itself is perfect
    perfect = fecg.score(rec["fecg"], rec["fecg"], rec["fetal_rpeaks"], rec["fetal_rpeaks"], fs)
    assert perfect["prd"] < 1e-9 and perfect["f_score"] == 100.0 and perfect["pcc"] == 100.0

    for method in ("passthrough", "svd", "ekf"):
        est = fecg.separate(method, rec["abdominal"], fs)
        assert len(est) == n
        peaks = fecg.detect_rpeaks(est, fs, fetal=True)
        s = fecg.score(rec["fecg"], est, rec["fetal_rpeaks"], peaks, fs)
        print(f"{method:12s} PRD {s['prd']:8.1f}  PCC {s['pcc']:6.1f}  F {s['f_score']:5.1f}")

    try:
        fecg.separate("wavelet", rec["abdominal"], fs)
    except ValueError as e:
        assert "wavelet" in str(e)
    else:
        raise AssertionError("unknown method accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
