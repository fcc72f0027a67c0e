"""Detection power of the equilibrium residual battery.

The discrimination side of the equilibrium story says a measure that is
not the free field at the stated temperature must violate some residual.
This script quantifies how hard the battery fires as a function of the
corruption size, for the three documented corruptions of a free ensemble:

  * a mean shift on the zero mode (the field stops being centered),
  * a uniform variance inflation (wrong covariance scale),
  * relabeling the ensemble temperature (weights at beta' != beta).

For each corruption size it reports the largest |z| = |residual|/stderr
over the default exponential probe battery. A z of 3 is the nominal gate;
the acceptance suite requires z > 5 for the documented sizes (0.5, 1.5,
2.0), which the table shows is far from marginal. The small-size rows give
the practical detection floor at N = 1e5: around a few percent on the
variance scale, and a few hundredths on the mean.
"""

import argparse
import dataclasses

import numpy as np

from kmslab.kms import default_probe_battery, kms_residual_exponential
from kmslab.lattice import build_lattice
from kmslab.sampler import SamplerConfig, sample_free


def battery_max_z(ens):
    worst = 0.0
    for tag, p1, p2 in default_probe_battery(ens.lattice):
        r = kms_residual_exponential(ens, p1, p2, name=tag)
        for part, se in ((r.estimate.real, r.stderr[0]), (r.estimate.imag, r.stderr[1])):
            if se > 0:
                worst = max(worst, abs(part) / se)
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100000)
    ap.add_argument("--seed", type=int, default=31)
    ap.add_argument("--n", type=int, default=2, help="1d mode cutoff")
    args = ap.parse_args()

    lat = build_lattice(1, args.n)
    base = sample_free(SamplerConfig(1.0, lat, seed=args.seed), args.samples)
    center = lat.index_of((0,) * 1)
    print(f"N = {args.samples}, d = 1, n = {args.n}, seed = {args.seed}")
    print(f"baseline (no corruption): max |z| = {battery_max_z(base):.2f}")
    print()

    print(f"{'mean shift':>10} {'max |z|':>9}")
    for shift in (0.01, 0.02, 0.05, 0.1, 0.2, 0.5):
        coeffs = base.coeffs.copy()
        coeffs[:, center] += shift
        z = battery_max_z(dataclasses.replace(base, coeffs=coeffs))
        print(f"{shift:>10.2f} {z:>9.2f}")
    print()

    print(f"{'var factor':>10} {'max |z|':>9}")
    for factor in (1.01, 1.02, 1.05, 1.1, 1.25, 1.5):
        z = battery_max_z(dataclasses.replace(base, coeffs=base.coeffs * np.sqrt(factor)))
        print(f"{factor:>10.2f} {z:>9.2f}")
    print()

    print(f"{'beta label':>10} {'max |z|':>9}")
    for beta in (1.02, 1.05, 1.1, 1.5, 2.0):
        z = battery_max_z(dataclasses.replace(base, beta=beta))
        print(f"{beta:>10.2f} {z:>9.2f}")


if __name__ == "__main__":
    main()
