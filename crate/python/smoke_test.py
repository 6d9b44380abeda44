"""Smoke test for the bart_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/bart_py-*.whl
"""

import math
import os
import sys
import tempfile

import bart_py


def rmse(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)) / len(a))


def main():
    x, y = bart_py.simulate_friedman(300, p=10, seed=1)
    x_test, y_test = bart_py.simulate_friedman(200, p=10, seed=2)
    model = bart_py.fit(x, y, seed=7, num_trees=50, burn_in=250, post_burn_in=500)
    assert model.num_samples == 500
    assert model.column_names[:2] == ["x1", "x2"]

    pred = model.predict(x_test)
    err = rmse(pred, y_test)
    print(f"friedman test rmse {err:.3f}, sigma^2 {model.sigma_sq:.3f}")
    assert err < 2.5, err

    cred = model.intervals(x_test, kind="credible")
    pi = model.intervals(x_test, kind="predictive", seed=3)
    inside = sum(lo <= v <= hi for (lo, hi), v in zip(pi, y_test)) / len(y_test)
    print(f"95% predictive coverage {inside:.3f}")
    assert 0.85 <= inside <= 1.0
    assert all(c[1] - c[0] < p[1] - p[0] for c, p in zip(cred, pi))

    props = dict(model.inclusion_proportions())
    assert abs(sum(props.values()) - 1.0) < 1e-9
    assert sum(props[f"x{j}"] for j in range(1, 6)) > 0.6, props

    assert model.summary().startswith("BART model for regression")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.bart")
        model.save(path)
        again = bart_py.Model.load(path)
        assert again.predict(x_test) == pred
        with open(path, "r+b") as f:
            f.seek(100)
            byte = f.read(1)
            f.seek(100)
            f.write(bytes([byte[0] ^ 0xFF]))
        try:
            bart_py.Model.load(path)
        except ValueError as e:
            assert "corrupt" in str(e)
        else:
            raise AssertionError("corrupt archive loaded")

    labels = [1.0 if v > 14.0 else 0.0 for v in y]
    clf = bart_py.fit(x, labels, classification=True, num_trees=20, burn_in=100, post_burn_in=200)
    probs = clf.predict_proba(x)
    acc = sum((p >= 0.5) == (l == 1.0) for p, l in zip(probs, labels)) / len(labels)
    print(f"classification training accuracy {acc:.3f}")
    assert acc > 0.8

    try:
        model.predict([[0.5] * 3])
    except ValueError:
        pass
    else:
        raise AssertionError("wrong width accepted")

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
