"""
The null distribution after a pre-test
======================================

The statistic for ``alpha`` is taken from the restricted model when the
pre-test on ``beta`` does not reject, and from the unrestricted one
otherwise.  Its law depends on the nuisance value ``gamma``.
"""
from pathlib import Path

import numpy as np

from pmscrit import ModelParams, cdf, density, make_stream, quantiles, sample_tprime
from pmscrit.plotting import line_chart_svg

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

params = ModelParams(rho=0.7, cutoff=1.96)
u = np.linspace(-5, 6, 600)

# densities for a few nuisance values: bimodal near the cutoff, normal far away
series = [(f"gamma = {g:g}", density(params, g, u)) for g in (-30.0, -2.7, 0.0, 2.0)]
line_chart_svg(u, series, xlabel="t", ylabel="density", path=out / "densities.svg")

# sampler against the closed-form cdf
draw = sample_tprime(params, -2.7, make_stream(1), size=200_000)
grid = np.linspace(-3, 5, 9)
empirical = (draw.t[:, None] <= grid).mean(axis=0)
for t, e, h in zip(grid, empirical, cdf(params, -2.7, grid)):
    print(f"t={t:+.1f}  empirical={e:.4f}  exact={h:.4f}")

# the 95% quantile as a function of gamma; its peak is the worst-case critical value
g = np.linspace(-15, 15, 3001)
c = quantiles(params, g, 0.05)
print(f"largest 95% quantile on the grid: {c.max():.6f} at gamma={g[c.argmax()]:.2f}")
line_chart_svg(g, [("c_gamma(0.05)", c)], xlabel="gamma", ylabel="95% quantile",
               reference=1.6448536269514722, reference_label="normal quantile",
               path=out / "quantile_curve.svg")
