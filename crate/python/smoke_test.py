"""Quick check that the extension module imports and solves the stylized market.

Build and install first, e.g.

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/commodity_game-*.whl
"""

import math
import sys

import commodity_game as cg


def main() -> int:
    model = cg.Model.stylized()
    eq = model.solve()
    print(eq)
    assert eq.converged and eq.verified, eq.failed_checks
    assert eq.type_tag == "I"

    t = eq.thresholds()
    for name in ("xl_plus", "xl_star_plus", "xh_star_minus", "xh_minus", "yl", "yh"):
        print(f"  {name:14s} {t[name]:.4f}")
    assert t["xh_plus"] == math.inf and t["xl_minus"] == -math.inf

    stats = eq.long_run_stats(paths=2, horizon=20_000.0, dt=0.05, bridge=True, seed=3)
    print("  E[X] = {mean:.3f}, Var[X] = {var:.3f}, switches/yr = {switches_per_year:.4f}".format(**stats))
    assert 3.3 < stats["mean"] < 3.7

    p = cg.hitting_prob(3.0, 2.0, 4.4, 0.1, 0.25)
    assert abs(p - 0.040) < 1e-3, p
    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
