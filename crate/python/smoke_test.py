"""Smoke test for the `bouncy` extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
or `cargo build --release -p bouncy-python --features extension-module` and
copy `target/release/libbouncy.so` to `bouncy.so` somewhere on PYTHONPATH.
"""

import json
import math
import statistics

import bouncy


def main():
    target = bouncy.Target.gaussian([0.0, 0.0], [[1.0, 0.9], [0.9, 1.0]])
    assert target.dim == 2
    assert abs(target.potential([0.0, 0.0])) < 1e-12

    state = bouncy.State([1.0, 1.0], [1.0, 1.0], 0.05)
    end, bounces = bouncy.simulate(target, state, 2.0)
    assert bounces > 0
    assert abs(end.energy(target) - state.energy(target)) < 1e-8
    back, _ = bouncy.simulate(target, end.reversed(), 2.0)
    back = back.reversed()
    assert max(abs(a - b) for a, b in zip(back.x, state.x)) < 1e-6
    print(f"simulate: {bounces} bounces, energy conserved, reversible")

    harmonic = bouncy.Flow.harmonic([0.0, 0.0], 1.0)
    end, _ = bouncy.simulate(target, state, 2.0, harmonic)
    assert abs(end.energy(target) - state.energy(target)) < 1e-8

    r = bouncy.reflect([1.0, 0.0], [1.0, 1.0])
    assert abs(r[0]) < 1e-15 and abs(r[1] + 1.0) < 1e-15

    rows = bouncy.sample_hbps(target, 4000, [0.0, 0.0], travel_time=2.0, seed=3)
    xs = [row[0] for row in rows]
    mean, sd = statistics.fmean(xs), statistics.pstdev(xs)
    min_ess, argmin, per_dim = bouncy.min_ess(rows)
    assert abs(mean) < 5 / math.sqrt(min_ess) and abs(sd - 1.0) < 0.1, (mean, sd, min_ess)
    assert abs(bouncy.ess(xs) - per_dim[0]) < 1e-9
    print(f"sample_hbps: mean {mean:.3f}, sd {sd:.3f}, min ESS {min_ess:.0f} (dim {argmin})")

    trunc = bouncy.Target.from_json(json.dumps({"type": "truncated_gaussian", "parameters": {"dim": 2}}))
    rows = bouncy.sample_hbps(trunc, 500, [1.0, 1.0], seed=1)
    assert all(x >= 0.0 for row in rows for x in row)

    config = {
        "sampler": "hbps-split",
        "target": {"type": "mixture", "parameters": {"dim": 1}},
        "iterations": 500,
        "chains": 2,
        "output_dir": "/tmp/bouncy-smoke",
    }
    summary, chains = bouncy.run(json.dumps(config), workers=2)
    summary = json.loads(summary)
    assert len(chains) == 2 and len(chains[0]) == 500
    print(f"run: acceptance rate {summary['acceptance_rate']:.3f}")

    try:
        bouncy.run(json.dumps({**config, "sampler": "gibbs"}))
    except ValueError as e:
        assert "sampler" in str(e)
    else:
        raise AssertionError("unknown sampler accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
