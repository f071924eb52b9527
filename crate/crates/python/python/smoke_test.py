"""Exercises the mlpeq_py extension end to end on a short link."""

import math
import os
import sys
import tempfile

import mlpeq_py as mq


def main():
    assert abs(mq.ber_to_q(mq.q_to_ber(7.0)) - 7.0) < 1e-9
    assert mq.quantize_value(1.0, 1.0) == 127
    assert mq.quantize_value(-5.0, 1.0) == -127

    dims = [84, 500, 10, 500, 2]
    fp = mq.bops_mlp(dims)
    int8 = mq.bops_mlp(dims, input_bits=32, activation_bits=8, weight_bits=8, pruned_fraction=0.6)
    print(f"BoPs fp32={fp:.2f} int8@60%={int8:.2f} reduction={mq.reduction_pct(int8, fp):.2f}%")

    # Noiseless, linear, short link: linear DSP alone should be error-free.
    clean = mq.simulate(launch_power_dbm=0.0, n_symbols=2048, noise=False, n_spans=2, gamma=0.0)
    ber, _ = clean.metrics("h", 16)
    assert ber == 0.0, ber

    train = mq.simulate(launch_power_dbm=2.0, n_symbols=4096, seed=1, n_spans=4)
    test = mq.simulate(launch_power_dbm=2.0, n_symbols=4096, seed=2, n_spans=4)
    print("LE  (ber, q) =", test.metrics("h", 10))

    model = mq.Model([84, 32, 2], seed=1)
    history = model.fit(train, test, epochs=5, batch_size=256, lr=3e-3)
    assert len(history) == 5 and all(math.isfinite(m) for m, _ in history)
    print("MLP (ber, q) =", model.evaluate(test))

    pruned = model.prune(0.5)
    assert abs(pruned.sparsity - 0.5) < 0.01
    print("pruned (ber, q) =", pruned.evaluate(test))

    x, _ = test.windows()
    q = pruned.quantize(x[:100])
    y_fp = pruned.forward(x[:8])
    y_q = q.infer(x[:8])
    assert len(y_q) == 8 and len(y_q[0]) == 2
    err = max(abs(a - b) for ra, rb in zip(y_fp, y_q) for a, b in zip(ra, rb))
    print(f"INT8 max deviation from FP32 on 8 rows: {err:.4f}")
    print("INT8 (ber, q) =", q.evaluate(test))

    with tempfile.TemporaryDirectory() as d:
        fp_path = os.path.join(d, "m.mlpz")
        q_path = os.path.join(d, "q.mlpz")
        model.save(fp_path)
        n = q.save(q_path)
        assert os.path.getsize(q_path) == n
        assert mq.Model.load(fp_path).forward(x[:2]) == model.forward(x[:2])
        assert mq.QuantizedModel.load(q_path).infer(x[:2]) == q.infer(x[:2])
        try:
            mq.Model.load(q_path)
        except ValueError:
            pass
        else:
            raise AssertionError("loading an INT8 file as FP32 should fail")

    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
