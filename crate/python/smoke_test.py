"""Quick end-to-end check of the tfqkd_py extension module.

Build it first:  pip install --no-build-isolation -e crates/py
"""

import math
import sys

import tfqkd_py as t


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    return bool(cond)


def main():
    ok = True

    cfg = t.ProtocolConfig(variant="sns")
    ok &= check(cfg.variant == "send-not-send", "config variant")
    ok &= check(cfg.intensities["u"] == 0.2, "reference intensities")
    cur = t.ProtocolConfig.reference("curty")
    ok &= check(cur.replace(n_cut=10).n_cut == 10, "replace keeps other fields")
    ok &= check(t.ProtocolConfig.from_json(cfg.to_json()) == cfg, "json round trip")
    try:
        cfg.replace(no_such_field=1)
        ok &= check(False, "unknown field rejected")
    except AttributeError:
        ok &= check(True, "unknown field rejected")
    try:
        t.ProtocolConfig(epsilon=2.0)
        ok &= check(False, "invalid value rejected")
    except ValueError:
        ok &= check(True, "invalid value rejected")

    ch = t.ChannelParams(total_loss_db=40.7)
    g = t.expected_gain(0.2, 0.2, ch)
    ok &= check(4e-4 < g < 8e-4, f"gain at 40.7 dB = {g:.3e}")
    q = t.expected_qber(0.4, ch)
    ok &= check(0.01 < q["total"] < 0.03, f"QBER at 40.7 dB = {q['total']:.4f}")

    rows = t.sweep(cfg, [float(x) for x in range(20, 101, 10)])
    ok &= check(len(rows) == 9, "sweep length")
    rates = [r["skr_bits_per_second"] for r in rows]
    ok &= check(all(a >= b for a, b in zip(rates, rates[1:])), "sweep rate falls with loss")
    ok &= check(any(r["beats_realistic"] for r in rows), "sweep beats the realistic bound somewhere")

    ok &= check(abs(t.skc0_ideal(71.1) - 111.99) < 0.1, "ideal capacity at 71.1 dB")
    ok &= check(math.isclose(t.binary_entropy(0.5), 1.0), "binary entropy")

    measured = t.key_rates(t.ProtocolConfig(variant="original"))
    ok &= check(len(measured) == 8 and measured[0]["skr_bits_per_second"] > 0, "key rates on bundled table")

    s = t.SessionConfig(n_gates=200_000, rng_seed=5)
    a = t.simulate(s)
    b = t.simulate(s)
    ok &= check(a == b, "simulation is deterministic")
    ok &= check(a["summary"]["gates"] == 200_000, "simulated gate count")

    print("all ok" if ok else "some checks failed")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
