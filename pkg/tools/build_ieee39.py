"""Build the bundled Kron-reduced IEEE 39-bus grid file.

Sources: the solved MATPOWER/PYPOWER ``case39`` power flow (bus voltages,
branches, loads, generator dispatch) and the classical New England machine
data (H and x'd on the 100 MVA system base). Loads become constant
admittances at their solved voltages, every generator gets an internal node
behind x'd, and all non-internal nodes are eliminated.

Requires the optional ``pypower`` package:

    pip install pypower
    python tools/build_ieee39.py
"""

import sys
from pathlib import Path

import numpy as np
from pypower.case39 import case39
from pypower.ext2int import ext2int
from pypower.makeYbus import makeYbus

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from distinertia.grid import OMEGA_S_60HZ, SystemConfig, _power, save_grid  # noqa: E402

# machine number -> (bus, H [s], x'd [pu]) on 100 MVA; machine 1 is the
# interconnection to the external grid at bus 39
MACHINES = {
    1: (39, 500.0, 0.006),
    2: (31, 30.3, 0.0697),
    3: (32, 35.8, 0.0531),
    4: (33, 28.6, 0.0436),
    5: (34, 26.0, 0.132),
    6: (35, 34.8, 0.05),
    7: (36, 26.4, 0.049),
    8: (37, 24.3, 0.057),
    9: (38, 34.5, 0.057),
    10: (30, 42.0, 0.031),
}
DROOP_R = 0.05  # 5 % speed droop on each machine's Pmax


def main(out=None):
    ppc = ext2int(case39())
    base = ppc["baseMVA"]
    bus, gen, branch = ppc["bus"], ppc["gen"], ppc["branch"]
    Ybus, _, _ = makeYbus(base, bus, branch)
    Ybus = Ybus.toarray()
    nb = Ybus.shape[0]
    V = bus[:, 7] * np.exp(1j * np.deg2rad(bus[:, 8]))

    # constant-admittance loads at the solved voltages
    S_load = (bus[:, 2] + 1j * bus[:, 3]) / base
    Ybus = Ybus + np.diag(np.conj(S_load) / np.abs(V) ** 2)

    ng = len(MACHINES)
    gen_bus = {int(g[0]): k for k, g in enumerate(gen)}
    E = np.zeros(ng, dtype=complex)
    H = np.zeros(ng)
    droop = np.zeros(ng)
    y_int = np.zeros(ng, dtype=complex)
    bus_of = np.zeros(ng, dtype=int)
    for m, (b, h, xd) in MACHINES.items():
        i = m - 1
        b0 = b - 1  # ext2int keeps consecutive numbering for case39
        g = gen[gen_bus[b0]]
        S = (g[1] + 1j * g[2]) / base
        I = np.conj(S / V[b0])
        E[i] = V[b0] + 1j * xd * I
        H[i] = h
        droop[i] = g[8] / base / DROOP_R
        y_int[i] = 1.0 / (1j * xd)
        bus_of[i] = b0

    # extended network: internal nodes first, then all buses
    Yx = np.zeros((ng + nb, ng + nb), dtype=complex)
    Yx[ng:, ng:] = Ybus
    for i in range(ng):
        b = ng + bus_of[i]
        Yx[i, i] += y_int[i]
        Yx[b, b] += y_int[i]
        Yx[i, b] -= y_int[i]
        Yx[b, i] -= y_int[i]
    A, Bm, C, D = Yx[:ng, :ng], Yx[:ng, ng:], Yx[ng:, :ng], Yx[ng:, ng:]
    Dinv_C = np.linalg.solve(D, C)
    Yred = A - Bm @ Dinv_C
    Yred = 0.5 * (Yred + Yred.T)

    # first-order sensitivity of Yred to each load admittance: y_l u_l u_l^T
    # with u_l = B D^-1 e_l (rows of (D^-1 C)^T since D is symmetric)
    load_bus = np.flatnonzero(np.abs(S_load) > 0)
    load_y = np.conj(S_load[load_bus]) / np.abs(V[load_bus]) ** 2
    load_u = Dinv_C[load_bus, :]

    delta0 = np.angle(E)
    delta0 -= delta0[0]
    Emag = np.abs(E)
    p = _power(delta0, Emag, Yred)
    p_gen = np.array([gen[gen_bus[MACHINES[m][0] - 1]][1] / base for m in range(1, ng + 1)])
    print("max |p_e(delta0) - P_g| =", np.abs(p - p_gen).max())

    cfg = SystemConfig(Yred, H, Emag, p, delta0=delta0, droop=droop,
                       load_y=load_y, load_u=load_u, omega_s=OMEGA_S_60HZ,
                       name="ieee39-kron")
    print(len(load_bus), "loads, total", S_load[load_bus].real.sum(), "pu")
    out = Path(out) if out else (Path(__file__).resolve().parents[1]
                                 / "src" / "distinertia" / "data" / "ieee39.grid")
    save_grid(cfg, out, header=(
        "New England IEEE 39-bus system reduced to the 10 machine internal nodes.\n"
        "Built by tools/build_ieee39.py from the solved case39 power flow with\n"
        "constant-admittance loads and classical machine data (100 MVA base).\n"
        "Machine 1 is the external-grid equivalent at bus 39; machines 2..10\n"
        "sit at buses 31..38 and 30. droop = Pmax / 0.05 on the system base.\n"
        "[loads] holds one row per bus load with its reduced-network sensitivity."))
    print("wrote", out)


if __name__ == "__main__":
    main(*sys.argv[1:])
