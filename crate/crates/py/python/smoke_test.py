"""Smoke test for the kahlerbench extension module."""

import json
import math
import tempfile
from pathlib import Path

import kahlerbench as kb


def main():
    assert "TorusMA" in kb.scenarios()

    cfg = kb.RunConfig.defaults("TorusMA").with_overrides('{"resolution": 16}')
    assert cfg.resolution == 16
    assert kb.RunConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()
    try:
        kb.RunConfig.from_json('{"scenario": "TorusMA", "kappa": 0.5}')
        raise AssertionError("bad kappa accepted")
    except kb.KahlerError as e:
        assert "kappa" in str(e)

    result = kb.run(cfg)
    assert result.passed, result.summary()
    assert json.loads(result.manifest_json())["config"]["resolution"] == 16
    with tempfile.TemporaryDirectory() as d:
        names = {Path(p).name for p in result.emit(d)}
        assert {"manifest.json", "history.csv", "summary.txt"} <= names

    op = kb.EigenOperator("LogMA", 3)
    value, grad = op.eval([1.0, 2.0, 4.0])
    assert abs(value - math.log(8.0)) < 1e-14
    assert abs(grad[1] - 0.5) < 1e-14
    assert op.eval([1.0, -1.0, 1.0]) is None
    assert kb.EigenOperator("NMinus1MA", 3).probe(200, 7)["violations"] == 0

    cut = kb.Cutoff(0.1)
    assert cut.value(0.5) == 0.0
    assert math.isinf(cut.value(1.0))

    n = 16
    w = [0.2 * math.cos(2 * math.pi * i / n) for i in range(n) for _ in range(n)]
    torus = kb.Metric.conformal_torus(1, n, w)
    assert torus.curvature_norms()["torsion"] < 1e-12
    flat = kb.Metric.conformal_torus(1, n, [0.0] * n * n)
    assert flat.curvature_norms()["curvature"] < 1e-12
    assert max(abs(re) for re, _ in flat.flow(1e-3).ricci()) < 1e-12

    disk = kb.Metric.poincare_disk(64, 4.0)
    assert disk.einstein_residual(-1.0) < 1e-4
    print("smoke test passed")


if __name__ == "__main__":
    main()
