#!/usr/bin/env python3
"""Smoke test for the spectra_clt extension module.

Expects `cargo build -p spectra-clt-py` (debug or release) to have produced
target/<profile>/libspectra_clt.so. The library is copied into a temporary
directory under the importable name spectra_clt.so, imported, and driven
through its public surface with golden-value assertions.

Run from anywhere:  python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_library() -> Path:
    candidates = [
        REPO / "target" / profile / "libspectra_clt.so"
        for profile in ("release", "debug")
    ]
    existing = [c for c in candidates if c.exists()]
    if not existing:
        sys.exit(
            "libspectra_clt.so not found under target/{release,debug}; "
            "run `cargo build -p spectra-clt-py` first"
        )
    return max(existing, key=lambda c: c.stat().st_mtime)


def import_module(tmp: Path):
    target = tmp / "spectra_clt.so"
    shutil.copy2(locate_library(), target)
    sys.path.insert(0, str(tmp))
    import spectra_clt  # noqa: E402

    return spectra_clt


def approx(a, b, tol=1e-8):
    return abs(a - b) <= tol


def check_mde(m):
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    p = m.solve_mde(0.0, 1.0j)
    assert approx(p.m, golden * 1.0j, 1e-10), p.m
    assert approx(p.u, 1.0 - golden, 1e-10), p.u
    assert approx(p.rho, golden / math.pi, 1e-10), p.rho
    assert p.residual < 1e-12, p.residual
    assert "rho" in repr(p)

    # saturation |m|^2 + |u|^2 |z|^2 -> 1 approaching the axis inside the disk
    q = m.solve_mde(0.2 + 0.1j, 1e-6j)
    assert abs(q.saturation() - 1.0) < 1e-4, q.saturation()

    e0 = m.edges(0.0)
    assert e0.origin_limit
    assert approx(e0.e_plus, 4.0, 1e-12) and approx(e0.lambda_plus, 2.0, 1e-12)
    assert e0.lambda_minus is None
    e_out = m.edges(1.5 + 0.0j)
    assert e_out.lambda_minus is not None and e_out.lambda_minus > 0.0

    want = math.sqrt(1.0 - 0.36) / math.pi
    assert approx(m.rho_at_zero(0.6 + 0.0j), want, 1e-10)
    assert m.rho_at_zero(1.2 + 0.0j) == 0.0

    gamma = m.quantile_locations(0.0j, 8)
    assert len(gamma) == 8
    assert all(x < y for x, y in zip(gamma, gamma[1:]))
    assert 0.0 < gamma[0] and gamma[-1] < 2.0 + 1e-9

    profile = m.density_profile(0.5 + 0.0j, points=101)
    assert len(profile) == 101
    assert all(rho >= 0.0 for _, rho in profile)
    print("ok mde: golden point, saturation, edges, density, quantiles")


def check_predict(m):
    p = m.predict("z^2")
    assert p.name == "z^2"
    assert approx(p.e_f, 1.0 + 0.0j, 1e-10), p.e_f
    assert approx(p.v_f, 2.0, 1e-10), p.v_f
    assert len(p.covariance_parts) == 3
    assert not p.tail_warning

    # angular symmetry kills the kurtosis term for z^2
    p2 = m.predict("z^2", kappa4=-2.0)
    assert approx(p2.e_f, 1.0 + 0.0j, 1e-10)
    assert approx(p2.v_f, 2.0, 1e-10)

    # |z|^2: expectation shifts by -kappa4/6, variance has slope 1/4
    v0 = m.predict("abs2", kappa4=0.0).v_f
    v1 = m.predict("abs2", kappa4=1.0).v_f
    vm2 = m.predict("abs2", kappa4=-2.0).v_f
    assert approx(v1 - v0, 0.25, 1e-10), v1 - v0
    assert approx(vm2 - v0, -0.5, 1e-10), vm2 - v0
    k = m.predict("abs2", kappa4=-2.0).kurtosis
    assert approx(k, 1.0 / 3.0 + 0.0j, 1e-10), k

    assert m.kappa4_of("gaussian") == 0.0
    assert m.kappa4_of("rademacher") == -2.0
    assert approx(m.kappa4_of("uniform"), -1.2, 1e-12)
    print("ok predict: z^2 golden, kappa4 sensitivity of abs2, entry laws")


def check_sampling(m):
    z = 0.3 + 0.2j
    a = m.singular_values(16, 7, z)
    b = m.singular_values(16, 7, z)
    assert a == b, "sampling must be reproducible"
    assert len(a) == 16
    assert all(x <= y for x, y in zip(a, a[1:]))
    assert a[0] > 0.0
    c = m.singular_values(16, 7, z, trial=1)
    assert a != c, "distinct trials must differ"
    for law in ("rademacher", "uniform"):
        vals = m.singular_values(12, 3, z, law=law)
        assert len(vals) == 12
    vals_c = m.singular_values(12, 3, z, symmetry="complex")
    assert len(vals_c) == 12

    ev = m.eigenvalues(64, 5)
    assert len(ev) == 64
    # a real matrix has real trace: imaginary parts cancel in conjugate pairs
    assert abs(sum(e.imag for e in ev)) < 1e-9

    theta = m.cross_overlap(32, 11, 0.3 + 0.2j, 0.3 - 0.2j, window=3)
    assert math.isfinite(theta) and theta > 0.0

    d = m.edelman_density(0.3 + 0.5j, 200)
    assert 0.25 < d < 0.40, d  # near the bulk limit 1/pi ~ 0.3183
    print("ok sampling: reproducible SVD, eigenvalues, overlap, density")


def check_errors(m):
    for fn, args in [
        (m.kappa4_of, ("cauchy",)),
        (m.predict, ("zz^^",)),
        (m.singular_values, (0, 1, 0.0j)),
        (m.quantile_locations, (0.0j, 8, 0)),
    ]:
        try:
            fn(*args)
        except ValueError:
            continue
        raise AssertionError(f"{fn.__name__}{args} should raise ValueError")
    try:
        m.singular_values(8, 1, 0.0j, symmetry="quaternion")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown symmetry should raise ValueError")
    print("ok errors: invalid inputs raise ValueError")


def check_selftest(m):
    results = m.run_selftest()
    assert len(results) >= 10
    failed = [r for r in results if not r[1]]
    assert not failed, f"self-test failures: {failed}"
    print(f"ok selftest: {len(results)} deterministic checks passed")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        m = import_module(Path(tmp))
        assert m.__version__
        assert "solvers" in (m.__doc__ or "")
        check_mde(m)
        check_predict(m)
        check_sampling(m)
        check_errors(m)
        check_selftest(m)
    print("smoke test passed")


if __name__ == "__main__":
    main()
