"""Smoke test for the tivac Python extension.

Build and install first:  pip install maturin && maturin develop -m crates/python/Cargo.toml
"""

import json
import math
import tempfile
from pathlib import Path

import tivac

scenario = tivac.Scenario.from_json(
    json.dumps(
        {
            "name": "smoke",
            "covariate_kind": "binary",
            "shape": {"beta0": "linear", "beta1": "zero"},
            "n": 60,
            "t_max": 80,
            "time_design": {"Custom": {"min_m": 5, "max_m": 15}},
            "replications": 1,
            "seed": 4,
        }
    )
)[0]
data = scenario.generate(0)
assert data.n_subjects == 60
assert data.covariate_names == ["intercept", "x"]

model = tivac.fit(data, seed=1, folds=5)
assert model.converged
grid = model.default_grid(25)
for x in (0.0, 1.0):
    rho = model.correlation_surface([1.0, x], grid)
    assert all(-1.0 < r < 1.0 for r in rho)
    truth = [scenario.true_rho(t, x) for t in grid]
    print(f"x={x:g}: rmse {tivac.rmse(rho, truth):.4f}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.json"
    model.save(path)
    again = tivac.Model.load(path)
    assert again.correlation_surface([1.0, 1.0], grid) == model.correlation_surface([1.0, 1.0], grid)

    data.write_csv(Path(tmp) / "y.csv", Path(tmp) / "x.csv")
    reloaded = tivac.Dataset.from_csv(Path(tmp) / "y.csv", Path(tmp) / "x.csv")
    assert reloaded.n_observations == data.n_observations

bands = tivac.bootstrap_bands(data, model, outer=50, inner=10, seed=2)
assert len(bands) == 2
print(bands[1], "covers zero:", bands[1].covers_zero())

for eta in (-5.0, -1.0, 0.0, 3.0, 5.0):
    assert abs(tivac.eta_of_rho(tivac.rho_of_eta(eta)) - eta) < 1e-9
assert math.isclose(tivac.rho_of_eta(2 * math.atanh(0.5)), 0.5)

try:
    tivac.eta_of_rho(1.5)
except tivac.TivacError as e:
    print("rejected:", e)
else:
    raise AssertionError("expected TivacError")

print("python smoke test OK")
