"""Smoke test for the pycamcal extension.

Install the extension, then run from the repository root:

    pip install --no-build-isolation ./crates/python
    python3 python/smoke_test.py

A module copied next to this script (python/pycamcal.so, from
`cargo build -p pycamcal --release --features extension-module`) takes
precedence over the installed one.
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pycamcal  # noqa: E402


def main():
    truth = pycamcal.Image.builtin("checker", 48)
    assert (truth.width, truth.height, truth.channels) == (48, 48, 3)

    cams, recipes = pycamcal.synthesize(truth, cameras=5, seed=7)
    assert len(cams) == 5 and "steps" in recipes

    reference = pycamcal.consensus(cams, "median")
    before = sum(pycamcal.psnr(c, truth) for c in cams) / len(cams)
    calibrated, models = pycamcal.calibrate(cams, reference, "linear")
    after = sum(pycamcal.psnr(c, truth) for c in calibrated) / len(calibrated)
    print(f"mean PSNR {before:.2f} -> {after:.2f} dB")
    assert after > before
    assert len(models) == 5 and json.loads(models[0])["transform"]["kind"] == "linear"
    assert pycamcal.histogram_spread(calibrated) < pycamcal.histogram_spread(cams)
    assert pycamcal.perceptual(truth, truth) == 0.0

    flat = pycamcal.Image(2, 1, 1, [0.25, 0.75])
    assert flat.samples() == [0.25, 0.75] and flat.get(1, 0, 0) == 0.75
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "flat.png")
        flat.save(path, bit_depth=16)
        again = pycamcal.Image.load(path)
        assert max(abs(a - b) for a, b in zip(again.samples(), flat.samples())) < 1e-4

    try:
        pycamcal.consensus(cams, "trimmed-mean")
    except ValueError as e:
        print(f"rejected: {e}")
    else:
        raise AssertionError("unknown method accepted")

    rows = pycamcal.run_experiment(
        """
references = ["median", "random"]
calibrators = ["linear"]

[input]
mode = "synthetic"
scenes = ["builtin:wedge"]
scene_size = 24
cameras = 4
master_seed = 1
"""
    )
    assert len(rows) == 2 and all("delta_psnr" in r for r in rows)
    print(f"grid rows: {[(r['reference'], round(r['delta_psnr'], 2)) for r in rows]}")
    print("ok")


if __name__ == "__main__":
    main()
