"""Walk through the scalar spike system.

The base system has no growth-rate or ordinary dichotomy, yet after
rescaling time to an exponential rate every operator vanishes and an
exponential dichotomy with N = 1 is certified.

Run with ``python demos/spike_rescaling.py``.
"""

from mudich.dichotomy import check_ordinary, fit_mu
from mudich.rescale import build
from mudich.scenario import bundled
from mudich.system import ProjectionFamily


def word(ok):
    return "pass" if ok else "fail"


def main():
    sc = bundled("spike")
    fam, mu, eta = sc.family, sc.rate("mu"), sc.eta()
    print(f"scenario {sc.name}: horizon {sc.horizon}")
    print("first operators:", [float(fam.ops(n)[0, 0]) for n in range(1, 9)])

    for label, p in (("P = 1", [[1.0]]), ("P = 0", [[0.0]])):
        proj = ProjectionFamily.constant(p, 1)
        cert = fit_mu(fam, mu, proj, horizon=sc.horizon)
        ordc = check_ordinary(fam, proj, horizon=sc.horizon)
        print(f"{label}: growth-rate fit {word(cert.verdict)} ({cert.cause}); "
              f"ordinary {word(ordc.verdict)} ({ordc.cause})")

    rs = build(fam, mu, eta, sc.horizon)
    print("rescaled times tau(k):", [rs.tau(k) for k in range(1, 9)], "...")
    print("rescaled operators:", [float(rs.Q(n)[0, 0]) for n in range(1, rs.horizon)])
    cert = fit_mu(rs.family, eta, ProjectionFamily.constant([[1.0]], 1),
                  horizon=rs.horizon, kind="exponential")
    print(f"rescaled exponential fit: {word(cert.verdict)}, N = {cert.constants['N']}")


if __name__ == "__main__":
    main()
