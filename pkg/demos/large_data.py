"""Small versus large initial data in the nonlinear solver.

The monotonicity of E(t) + c int D ds is only expected for small data.  This
script runs the same Gaussian profile at two amplitudes,
``zeta = delta mu^{1/2 + delta_star}`` with ``delta = 0.05`` and ``delta = 50``,
and prints what the monitor reports for each.  A violation in the large-data
run is an observation, not a failure.

    python demos/large_data.py [t_end]
"""
import sys
import time

from hypostrat import spectral as sp
from hypostrat.params import PhysParams, default_constants

P = PhysParams(0.02, 0.02, 1.0, 0.1)
C = default_constants(1.0, 0.1).with_(c=0.0138)
T_END = float(sys.argv[1]) if len(sys.argv) > 1 else 50.0


def run(delta):
    zeta = delta * P.mu ** (0.5 + C.delta_star)
    cfg = sp.FieldConfig(nk=128, neta=256, dk=0.04, deta=0.1, recipe="gaussian", k0=0.3,
                         width_k=0.15, width_eta=1.0, zeta=zeta, theta_ratio=0.5j)
    fld = sp.init_field(cfg, P, C)
    ledger = sp.EnergyLedger(c=C.c)
    ledger.append(sp.ledger_update(fld))
    note = ""
    try:
        while fld.t < T_END - 1e-9:
            fld = sp.step(fld, 0.1)
            ledger.append(sp.ledger_update(fld))
    except (sp.CFLError, sp.SolverBlowup) as exc:
        note = f" (stopped at t={fld.t:.2f}: {exc})"
    mon = sp.bootstrap_monitor(ledger)
    return zeta, mon, sp.edge_fraction(fld), note


for delta in (0.05, 50.0):
    t0 = time.perf_counter()
    zeta, mon, edge, note = run(delta)
    verdict = "monotone" if mon.passed else f"violated first at t={mon.first_violation:.2f}"
    print(f"delta={delta:<5} zeta={zeta:.3g}: {verdict}, max excess {mon.max_excess:.3g}, "
          f"edge fraction {edge:.2g}, {time.perf_counter() - t0:.0f}s{note}")
