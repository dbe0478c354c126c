#!/usr/bin/env python3
"""Smoke test for the spdelab Python extension.

Builds nothing itself: run `cargo build -p spdelab-py --release` first.
The script stages target/release/libspdelab.so next to itself as
spdelab.so (the importable name), imports it, and exercises every
exported call with tiny budgets, checking numbers where exact answers
exist and sanity elsewhere.
"""

import json
import math
import shutil
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def stage_extension():
    staged = HERE / "spdelab.so"
    candidates = [
        ROOT / "target" / "release" / "libspdelab.so",
        ROOT / "target" / "debug" / "libspdelab.so",
    ]
    built = [c for c in candidates if c.exists()]
    if not built:
        sys.exit("build the extension first: cargo build -p spdelab-py --release")
    src = max(built, key=lambda c: c.stat().st_mtime)
    if not staged.exists() or staged.stat().st_mtime < src.stat().st_mtime:
        shutil.copy2(src, staged)
    sys.path.insert(0, str(HERE))


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    stage_extension()
    import spdelab

    print(f"spdelab {spdelab.__version__}")

    # --- model geometry ----------------------------------------------------
    m = spdelab.Model()
    assert m.dim == 8
    approx(m.a_eigs[0], -0.5, 1e-12)        # -beta/(2 q_1) = -1/2
    approx(m.a_eigs[7], -32.0, 1e-12)       # -1/(2 * 8^-2)
    approx(m.r_eigs[0], 1.0, 1e-12)         # q_1^rho = 1
    approx(m.r_eigs[7], 0.125, 1e-12)       # (8^-2)^0.5 = 1/8
    e1 = [1.0] + [0.0] * 7
    approx(m.hr_norm(e1), 1.0, 1e-12)
    approx(m.hr_inner(e1, e1), 1.0, 1e-12)
    c = m.constants(0.0)
    approx(c["zeta_r"], -0.5, 1e-12)        # w_R at G = 0
    assert c["r_norm"] == 1.0
    print("model geometry ok")

    # --- catalog -----------------------------------------------------------
    specs = [row[0] for row in spdelab.catalog()]
    assert any(s.startswith("holder") for s in specs)
    assert any(s.startswith("xlogx") for s in specs)
    print(f"catalog lists {len(specs)} fields")

    # --- path engine: determinism and variational sizes ---------------------
    x0 = [0.3 / (k + 1) for k in range(8)]
    h = [1.0] + [0.0] * 7
    a = spdelab.simulate(m, x0, t_end=0.5, dt=1e-2, seed=42, order=1, h=h)
    b = spdelab.simulate(m, x0, t_end=0.5, dt=1e-2, seed=42, order=1, h=h)
    assert a["x_path"] == b["x_path"], "same seed must reproduce the path"
    assert a["weight1"] == b["weight1"]
    assert len(a["grid"]) == 51 and len(a["x_path"][0]) == 8
    # G = 0 keeps the first variational process on the deterministic
    # semigroup orbit: delta1(t) = e^(t beta A) h, mode 1 factor e^(-t/2)
    d1_end = a["delta1"][-1]
    approx(d1_end[0], math.exp(-0.25), 1e-12)
    assert all(abs(v) < 1e-15 for v in d1_end[1:])
    print("path engine ok")

    # --- pointwise estimator vs the closed Ornstein-Uhlenbeck form ----------
    # P(t) sin(w x_1)(x) = sin(w m_1(t) x_1) exp(-w^2 v_1(t) / 2) in mode 1
    t, w = 0.5, 1.0
    mean = math.exp(-0.5 * t) * x0[0]
    var = (1.0 - math.exp(-t)) * 1.0  # rho_1^2 (1 - e^(-2 beta a_1 t)) / (2 |a_1|)
    exact = math.sin(w * mean) * math.exp(-(w ** 2) * var / 2.0)
    val, se = spdelab.estimate_pt(m, "sin:omega=1", t, x0, dt=1e-2, n_outer=4000, seed=7)
    assert se > 0.0
    approx(val, exact, 4.0 * se + 1e-9)
    print(f"estimate_pt ok: {val:.5f} vs exact {exact:.5f} (se {se:.1e})")

    # --- derivative estimators agree in expectation order -------------------
    dval, dse = spdelab.bel_d1(m, "sin:omega=1", t, x0, h, dt=1e-2, n_outer=8000, seed=8)
    d_exact = w * math.cos(w * mean) * math.exp(-0.5 * t) * math.exp(-(w ** 2) * var / 2.0)
    approx(dval, d_exact, 4.0 * dse + 1e-9)
    d2val, d2se = spdelab.bel_d2(m, "sin:omega=1", t, x0, h, h, dt=1e-2, n_outer=8000, seed=9)
    d2_exact = -(w ** 2) * math.sin(w * mean) * math.exp(-t) * math.exp(-(w ** 2) * var / 2.0)
    approx(d2val, d2_exact, 4.0 * d2se + 1e-9)
    print(f"bel_d1 ok ({dval:.5f} vs {d_exact:.5f}), bel_d2 ok ({d2val:.5f} vs {d2_exact:.5f})")

    # --- sup-inf regularization sits between inf- and sup-envelopes ---------
    f0 = [0.0] * 8
    out = spdelab.ll_regularize(m, "holder:alpha=0.5", f0, epsilon=0.01)
    assert not out["boundary_hit"]
    assert 0.0 <= out["value"] <= 1.0
    assert len(out["h_star"]) == 8 and len(out["k_star"]) == 8
    print(f"ll_regularize ok: f_eps(0) = {out['value']:.5f}")

    # --- resolvent with tail bound ------------------------------------------
    res = spdelab.resolvent(m, "sin:omega=1", 2.5, x0, n_outer=2000, seed=11)
    assert res["std_error"] > 0.0 and res["tail_bound"] is not None
    assert not res["small_lambda_caveat"]
    # |R(lambda) f| <= sup|f| / lambda
    assert abs(res["value"]) <= 1.0 / 2.5
    print(f"resolvent ok: u = {res['value']:.5f} +- {res['std_error']:.1e}")

    # --- full experiment runner ---------------------------------------------
    rec = json.loads(
        spdelab.run_experiment(
            """
[run]
seed = 2024
dt = 2e-2
n_outer = 400

[experiment]
kind = "schvar"
"""
        )
    )
    assert rec["experiment"] == "schvar"
    names = [row["name"] for row in rec["metrics"]]
    assert "contraction" in names and "converged" in names
    failed = [r["name"] for r in rec["metrics"] if r.get("pass") is False]
    assert not failed, f"schvar metrics failed: {failed}"
    print("run_experiment ok: schvar fixed point converged")

    # --- error mapping -------------------------------------------------------
    try:
        spdelab.estimate_pt(m, "nosuchfield", 0.1, x0)
    except ValueError:
        pass
    else:
        sys.exit("expected ValueError for an unknown field spec")
    print("error mapping ok")

    print("smoke test passed")


if __name__ == "__main__":
    main()
