"""Smoke test for the rhg extension module.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import pathlib
import tempfile

import rhg

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    scn = rhg.Scenario.load(ROOT / "scenarios" / "disturbance_60pct.json")
    print(scn)
    assert len(scn.ids) == 10

    pg, pot = scn.gradcheck(samples=3)
    assert pg <= 1e-6 and pot is not None and pot <= 1e-10, (pg, pot)

    inputs, kkt = scn.solve_game()
    assert len(inputs) == 10 and kkt <= 1e-8

    short = scn.with_steps(24)
    none = short.simulate("none")
    rhg_trace = short.simulate("rhg")
    assert rhg_trace.failure is None
    assert len(rhg_trace) == 24 and len(rhg_trace.states) == 25
    m = rhg_trace.metrics(short)
    print(f"peak {m['peak_kw']:.3f} kW, no-DSM {none.peak:.3f} kW, shaving {m['shaving_pct']:.1f}%")
    assert m["peak_kw"] <= none.peak

    full = scn.simulate("day-ahead")
    assert full.violations(), "day-ahead should overrun the reduced limit"

    with tempfile.TemporaryDirectory() as d:
        files = rhg_trace.write(short, pathlib.Path(d))
        assert sorted(p.name for p in files) == ["aggregate.csv", "metrics.json", "trace.csv"]

    try:
        rhg.Scenario.from_json('{"steps": 1}')
    except ValueError as e:
        print(f"rejected bad scenario: {e}")
    else:
        raise AssertionError("bad scenario accepted")
    print("ok")


if __name__ == "__main__":
    main()
