"""Time the compiled and pure-Python kernel backends on identical inputs.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from rawgnss import kernels
from rawgnss.ephemeris import parse_rinex_nav
from rawgnss.testkit import SyntheticScene
from rawgnss.testkit.scene import constellation


def cases():
    scene = SyntheticScene()
    _, eph = constellation(scene, scene.start)[0]
    params = np.ascontiguousarray(eph.params)
    glo = parse_rinex_nav(
        "     2.10           G: GLONASS NAV DATA                     RINEX VERSION / TYPE\n"
        "                                                            END OF HEADER\n"
        " 3 98  2 15  0 15  0.0  .163525342941D-03  .363797880709D-11  .108000000000D+05\n"
        "     .106275903320D+05 -.348924636841D+00  .931322574615D-09  .000000000000D+00\n"
        "    -.944422070313D+04  .288163375854D+01  .931322574615D-09  .100000000000D+01\n"
        "     .212257280273D+05  .144599342346D+01 -.186264514923D-08  .300000000000D+01\n"
    ).records[0][1]
    state = np.concatenate([glo.position, glo.velocity])
    rng = np.random.default_rng(0)
    a = rng.normal(size=(11, 11))
    p0 = np.ascontiguousarray(a @ a.T + 11 * np.eye(11))
    x0 = rng.normal(size=11)
    h = np.ascontiguousarray(rng.normal(size=11))

    def joseph(impl):
        x, p = x0.copy(), p0.copy()
        impl.joseph_update(x, p, h, 0.3, 4.0)

    return {
        "kepler_solve": lambda impl: impl.kepler_solve(1.2, 0.02),
        "gps_orbit": lambda impl: impl.gps_orbit(params, 1234.5),
        "glonass_propagate 900 s": lambda impl: impl.glonass_propagate(state, glo.acceleration, 900.0, 60.0),
        "joseph_update 11x11": joseph,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000, help="calls per measurement (default 2000)")
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(sorted(backends))}")
    print(f"{'kernel':<26}" + "".join(f"{name + ' us':>14}" for name in sorted(backends)) + f"{'speedup':>10}")
    for label, fn in cases().items():
        times = {}
        for name, impl in sorted(backends.items()):
            best = min(timeit.repeat(lambda: fn(impl), number=args.repeat, repeat=5))
            times[name] = best / args.repeat * 1e6
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<26}" + "".join(f"{times[n]:>14.2f}" for n in sorted(times)) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
