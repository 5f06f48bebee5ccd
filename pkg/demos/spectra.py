"""Compare the two spectrum estimates on the bundled systems.

For each system the growth-rate spectrum of the base and the exponential
spectrum of its rescaling are printed side by side with their Hausdorff
distance.

Run with ``python demos/spectra.py``; it takes about half a minute.
"""

from mudich.rescale import build
from mudich.scenario import bundled
from mudich.spectrum import check_band_gap, check_resonance, compare_spectra


def fmt(intervals):
    return ", ".join(f"[{a:+.2f}, {b:+.2f}]" for a, b in intervals)


def main():
    for name in ("diagonal-long", "diagonal3", "switched", "identity"):
        sc = bundled(name)
        rs = build(sc.family, sc.rate("mu"), sc.eta(), sc.horizon)
        cmp = compare_spectra(rs, grid_step=0.05)
        print(f"{name} (dim {sc.dim})")
        print(f"  growth-rate spectrum : {fmt(cmp['mu'].intervals)}")
        print(f"  rescaled ED spectrum : {fmt(cmp['ed'].intervals)}")
        print(f"  Hausdorff distance   : {cmp['hausdorff']:.3f}")
        ivs = cmp["mu"].intervals
        hits = check_resonance(ivs, 3)
        print(f"  resonances up to order 3: {len(hits)}")
        if all(b < 0 or a > 0 for a, b in ivs):
            print(f"  band-gap ok: {check_band_gap(ivs)['ok']}")
        else:
            print("  band-gap: zero lies in the spectrum")


if __name__ == "__main__":
    main()
