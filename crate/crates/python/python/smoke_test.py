"""Smoke test for the qap_sdr_py extension.

Build with `maturin develop` from crates/python, or build the cdylib with
`cargo build -p qap-sdr-py --release --features extension-module` and put
the shared library on PYTHONPATH as qap_sdr_py.so.
"""

import json

import qap_sdr_py as q


def main():
    inst = q.Instance.generate("diag_gaussian", 4, 0.01, seed=7)
    assert inst.n == 4
    assert sorted(inst.truth) == [0, 1, 2, 3]
    back = q.Instance.from_json(inst.to_json())
    assert back.a == inst.a and back.c == inst.c

    cond = q.check_condition(inst)
    assert cond["holds"], cond

    cert = q.certify(inst)
    assert cert["sdr1"]["passes"], cert
    assert cert["sdr2"] is not None and cert["sdr2"]["passes"], cert

    for sdr in ("I", "II"):
        res = q.solve(inst, sdr=sdr)
        assert res.status == "solved", res
        assert res.exact and res.corr > q.EXACT_THRESHOLD, res
        assert res.rounded == inst.truth

    perm, value = q.brute_force(inst)
    assert perm == inst.truth, (perm, inst.truth)

    cfg = {
        "model": {"kind": "diag_gaussian", "sigma": 0.0, "seed": 0,
                  "lambda_profile": [1.0, 2.0, 3.0, 4.0]},
        "sigma_grid": [0.0, 0.1],
        "trials_per_sigma": 2,
        "n": 4,
        "sdr_variant": "I",
        "cost_variant": "squared_difference",
        "master_seed": 3,
    }
    csv, summary = q.sweep(json.dumps(cfg))
    assert csv.splitlines()[0] == (
        "sigma,trial,seed,corr,exact,condition_holds,lambda2_margin,"
        "iterations,status,wall_time_s"
    )
    assert len(csv.splitlines()) == 5
    assert [s[0] for s in summary] == [0.0, 0.1]

    try:
        q.Instance.generate("nope", 4, 0.1, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("bad model kind accepted")

    print("smoke test ok:", inst, "brute optimum", round(value, 6))


if __name__ == "__main__":
    main()
