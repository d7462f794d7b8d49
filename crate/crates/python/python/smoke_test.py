"""Smoke test for the pysitgrid extension.

Build and run:
    maturin develop -m crates/python/Cargo.toml
    python crates/python/python/smoke_test.py
"""

import json
import os
import tempfile

import pysitgrid as sg


def main():
    # grid and features on a single impulse at sensor 0 (bottom-right cell)
    impulse = [0.0] * 32
    impulse[0] = 1.0
    grid = sg.map_to_grid(impulse)
    assert grid[7][7] == 1.0 and sum(map(sum, grid)) == 1.0
    assert sg.center_of_mass(impulse) == (8.0, 8.0, False)
    assert sg.center_of_mass([0.0] * 32) == (4.5, 4.5, True)
    assert sg.quadrant_sums(impulse) == [0.0, 0.0, 0.0, 1.0]
    assert sg.edge_sums(impulse) == [0.0, 1.0, 0.0, 1.0]

    ds = sg.Dataset.generate("realistic", config=json.dumps({"n_participants": 6}))
    assert len(ds) == 6 * 125, len(ds)
    clean = ds.preprocess()
    assert clean.labels() == ds.labels()
    t3 = clean.select_recurrent("t3").filter_labels(["left", "right"])
    fm = t3.featurize(mats="both")
    assert fm.shape == (6 * 2 * 5, 84), fm.shape

    result = sg.cross_validate(fm, "rf", k=5, seed=1)
    assert len(result["predictions"]) == len(fm)
    assert 0.0 <= result["accuracy"] <= 1.0
    print(result["report"])

    with tempfile.TemporaryDirectory() as tmp:
        for family in ["rf", "gnb", "lr", "svm", "dnn"]:
            model = sg.Model.fit(fm, family, seed=3, params='{"epochs": 20}' if family in ("svm", "dnn") else None)
            path = os.path.join(tmp, family + ".json")
            model.save(path)
            again = sg.Model.load(path)
            assert again.predict(fm) == model.predict(fm)
            assert again.predict_proba(fm) == model.predict_proba(fm)
            probs = model.predict_proba(fm)
            assert all(abs(sum(p) - 1.0) < 1e-9 for p in probs)

    folds = sg.kfold_split(["left", "right"] * 900, k=10)
    assert sorted(folds.count(f) for f in range(10)) == [180] * 10

    small = sg.FeatureMatrix(["a", "b"], [[0.1, 0.2], [1.0, -0.3], [0.5, 0.5], [-1.0, 0.0]],
                             ["left", "right", "left", "right"])
    assert sg.gradient_check(small, "lr", seed=2) < 1e-4

    try:
        sg.Model.from_json("{")
    except sg.SitgridError:
        pass
    else:
        raise AssertionError("corrupt model accepted")

    print("pysitgrid smoke test passed")


if __name__ == "__main__":
    main()
