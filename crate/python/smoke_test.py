"""Smoke test for the ssnet Python extension.

Builds the extension with cargo unless SSNET_LIB points at a built library,
imports it as `ssnet` and checks sharing and secure inference.
"""

import importlib.util
import os
import pathlib
import random
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_extension():
    lib = os.environ.get("SSNET_LIB")
    if lib is None:
        subprocess.run(["cargo", "build", "-p", "ssnet-py"], cwd=ROOT, check=True)
        lib = ROOT / "target" / "debug" / "libssnet_py.so"
    staged = pathlib.Path(tempfile.mkdtemp()) / "ssnet.so"
    shutil.copy(lib, staged)
    spec = importlib.util.spec_from_file_location("ssnet", staged)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    ssnet = load_extension()
    assert ssnet.modulus() == 2**45 - 55

    secrets = [5, -3, 1234567, 0]
    shares = ssnet.gen(secrets, 2, 3, seed=1)
    assert len(shares) == 3
    for pair in ([0, 1], [1, 2], [0, 2]):
        opened = ssnet.rec([shares[p] for p in pair], pair, 2, 3)
        assert opened == secrets, (pair, opened)

    rng = random.Random(7)
    x = [rng.random() for _ in range(256)]
    oracle = ssnet.plaintext_infer(x)
    for k, n in ((2, 3), (3, 5)):
        out = ssnet.simulate(x, k=k, n=n, seed=3)
        assert out["output"] == oracle, (k, n)
        assert out["online_elements"] > 0
        assert {op["operation"] for op in out["ops"]} >= {"linear", "truncation", "nonlinear"}

    lnt = ssnet.simulate(x, ordering="lnt", seed=4)
    assert lnt["output"] == ssnet.plaintext_infer(x, ordering="lnt")

    try:
        ssnet.simulate(x, k=2, n=2)
    except RuntimeError as e:
        assert "n >= 2k-1" in str(e)
    else:
        raise AssertionError("(2, 2) accepted")

    print("smoke test passed: sharing round-trips, secure output matches the oracle for (2,3), (3,5) and lnt")


if __name__ == "__main__":
    sys.exit(main())
